//! Noisy sampling: global depolarization, Pauli and Rz error insertion, measurement bit flips
//! and per-gate Pauli trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, ExtraGate, ExtraKind, Op};
use crate::error::{Error, Result};
use crate::gates::{pauli_x, pauli_y, pauli_z, Unitary2};
use crate::statevec::{sample_from_probabilities, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Unitary2 {
        match self {
            Pauli::X => pauli_x(),
            Pauli::Y => pauli_y(),
            Pauli::Z => pauli_z(),
        }
    }

    fn kind(self) -> ExtraKind {
        match self {
            Pauli::X => ExtraKind::X,
            Pauli::Y => ExtraKind::Y,
            Pauli::Z => ExtraKind::Z,
        }
    }
}

impl std::str::FromStr for Pauli {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Pauli::X),
            "Y" | "y" => Ok(Pauli::Y),
            "Z" | "z" => Ok(Pauli::Z),
            _ => Err(Error::InvalidArgument(format!("unknown Pauli `{s}`"))),
        }
    }
}

/// One noise transformation, addressed by the (cycle, qubit) slot after the single-qubit gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Depolarizing { fidelity: f64 },
    Measurement { e_m0: f64, e_m1: f64 },
    PauliInject { cycle: usize, qubit: usize, axis: Pauli },
    RzInject { cycle: usize, qubit: usize, angle: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")))
            }
        };
        match *self {
            NoiseSpec::Depolarizing { fidelity } => unit(fidelity, "fidelity"),
            NoiseSpec::Measurement { e_m0, e_m1 } => unit(e_m0, "e_m0").and(unit(e_m1, "e_m1")),
            _ => Ok(()),
        }
    }

    /// Applies an injection spec to a circuit; sampling specs leave it unchanged.
    pub fn apply_to_circuit(&self, circuit: &Circuit) -> Result<Circuit> {
        match *self {
            NoiseSpec::PauliInject { cycle, qubit, axis } => inject_pauli(circuit, cycle, qubit, axis),
            NoiseSpec::RzInject { cycle, qubit, angle } => inject_rz(circuit, cycle, qubit, angle),
            _ => Ok(circuit.clone()),
        }
    }
}

fn check_normalized(probs: &[f64]) -> Result<()> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distribution is not normalized (sum = {total})"
        )));
    }
    if !probs.len().is_power_of_two() {
        return Err(Error::InvalidArgument(
            "distribution length is not a power of two".into(),
        ));
    }
    Ok(())
}

/// Draws from F·p + (1 − F)/D: each shot comes from `probs` with probability F, otherwise uniform.
pub fn depolarizing_sample(probs: &[f64], fidelity: f64, count: usize, seed: u64) -> Result<Vec<u64>> {
    check_normalized(probs)?;
    NoiseSpec::Depolarizing { fidelity }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ideal = sample_from_probabilities(probs, count, rng.random());
    let d = probs.len() as u64;
    Ok(ideal
        .into_iter()
        .map(|x| {
            if rng.random::<f64>() < fidelity {
                x
            } else {
                rng.random_range(0..d)
            }
        })
        .collect())
}

/// All (cycle, qubit) slots carrying a single-qubit gate, the half cycle included as cycle `m`.
pub fn error_positions(circuit: &Circuit) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = circuit
        .cycles
        .iter()
        .enumerate()
        .flat_map(|(c, cy)| cy.singles.iter().map(move |s| (c, s.q)))
        .chain(circuit.half_cycle.iter().map(|s| (circuit.m(), s.q)))
        .collect();
    out.sort_unstable();
    out
}

fn insert_after_single(circuit: &Circuit, cycle: usize, qubit: usize, gate: ExtraKind) -> Result<Circuit> {
    if circuit.single_axis(cycle, qubit).is_none() {
        return Err(Error::InvalidPosition { cycle, qubit });
    }
    let mut out = circuit.clone();
    let extra = ExtraGate { q: qubit, gate };
    if cycle == circuit.m() {
        out.half_cycle_extra.push(extra);
    } else {
        out.cycles[cycle].extra.push(extra);
    }
    Ok(out)
}

/// Inserts a Pauli immediately after the single-qubit gate at (cycle, qubit).
pub fn inject_pauli(circuit: &Circuit, cycle: usize, qubit: usize, axis: Pauli) -> Result<Circuit> {
    insert_after_single(circuit, cycle, qubit, axis.kind())
}

/// Inserts Rz(angle) immediately after the single-qubit gate at (cycle, qubit).
pub fn inject_rz(circuit: &Circuit, cycle: usize, qubit: usize, angle: f64) -> Result<Circuit> {
    insert_after_single(circuit, cycle, qubit, ExtraKind::Rz(angle))
}

/// Flips each of the `n` bits independently: 0→1 with `e_m0`, 1→0 with `e_m1`.
pub fn apply_measurement_error(bitstrings: &[u64], n: usize, e_m0: f64, e_m1: f64, seed: u64) -> Result<Vec<u64>> {
    NoiseSpec::Measurement { e_m0, e_m1 }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(bitstrings
        .iter()
        .map(|&x| {
            let mut y = x;
            for k in 0..n {
                let e = if (x >> k) & 1 == 0 { e_m0 } else { e_m1 };
                if e > 0.0 && rng.random::<f64>() < e {
                    y ^= 1 << k;
                }
            }
            y
        })
        .collect())
}

/// Probability that bitstring `q` is read out without error: (1 − e_m0)^{n − |q|} (1 − e_m1)^{|q|}.
pub fn readout_fidelity(q: u64, n: usize, e_m0: f64, e_m1: f64) -> f64 {
    let ones = (q & mask(n)).count_ones() as i32;
    (1.0 - e_m0).powi(n as i32 - ones) * (1.0 - e_m1).powi(ones)
}

/// Typical measurement fidelity (1 − e_m0)^{n/2} (1 − e_m1)^{n/2}.
pub fn measurement_fidelity(n: usize, e_m0: f64, e_m1: f64) -> f64 {
    let h = n as f64 / 2.0;
    (1.0 - e_m0).powf(h) * (1.0 - e_m1).powf(h)
}

fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Pauli error probabilities per gate and per measured bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateNoise {
    pub single: f64,
    pub two: f64,
    pub e_m0: f64,
    pub e_m1: f64,
}

impl GateNoise {
    pub fn noiseless() -> Self {
        Self {
            single: 0.0,
            two: 0.0,
            e_m0: 0.0,
            e_m1: 0.0,
        }
    }

    /// Per-gate and per-qubit error lists for `predict_fidelity`, with readout error (e_m0 + e_m1)/2.
    pub fn error_lists(&self, circuit: &Circuit) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            vec![self.single; circuit.single_qubit_count()],
            vec![self.two; circuit.two_qubit_count()],
            vec![(self.e_m0 + self.e_m1) / 2.0; circuit.n()],
        )
    }
}

/// Samples `trajectories × shots` bitstrings. Each trajectory follows one Pauli error realization:
/// after every single-qubit gate a uniformly random non-identity Pauli occurs with probability
/// `noise.single`, after every two-qubit gate one of the 15 non-identity two-qubit Paulis occurs
/// with probability `noise.two`. Readout errors are then applied per shot.
pub fn sample_pauli_trajectories(
    circuit: &Circuit,
    noise: &GateNoise,
    trajectories: usize,
    shots: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    for (v, name) in [(noise.single, "single"), (noise.two, "two")] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name}-qubit error {v} outside [0, 1]")));
        }
    }
    let n = circuit.n();
    let ops = circuit.ops();
    let paulis = [None, Some(pauli_x()), Some(pauli_y()), Some(pauli_z())];
    let batches: Vec<Result<Vec<u64>>> = (0..trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let mut sv = StateVector::<f64>::new(n)?;
            for op in &ops {
                sv.apply_op(&op.op)?;
                match op.op {
                    Op::One { q, .. } => {
                        if rng.random::<f64>() < noise.single {
                            let k = rng.random_range(1..4);
                            sv.apply_1q(paulis[k].as_ref().unwrap(), q)?;
                        }
                    }
                    Op::Two { a, b, .. } => {
                        if rng.random::<f64>() < noise.two {
                            let k = rng.random_range(1..16);
                            for (q, idx) in [(a, k % 4), (b, k / 4)] {
                                if let Some(p) = &paulis[idx] {
                                    sv.apply_1q(p, q)?;
                                }
                            }
                        }
                    }
                }
            }
            let bits = sample_from_probabilities(&sv.probabilities(), shots, rng.random());
            apply_measurement_error(&bits, n, noise.e_m0, noise.e_m1, rng.random())
        })
        .collect();
    let mut out = Vec::with_capacity(trajectories * shots);
    for b in batches {
        out.extend(b?);
    }
    Ok(out)
}
