//! Random circuit specification, generation and variants.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gates::{
    general_fsim_matrix, pauli_x, pauli_y, pauli_z, rz, single_qubit_matrix, Axis, FsimParams, Unitary2, Unitary4,
};
use crate::layout::{parse_sequence, sequence_string, PatternId, QubitLayout};
use crate::prng::SplitMix64;

pub const CIRCUIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Elided(usize),
    Patch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(with = "seq_serde")]
    pub sequence: Vec<PatternId>,
    pub variant: Variant,
    /// Partition A of the cut used by elided and patch variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<Vec<usize>>,
}

mod seq_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[PatternId], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&sequence_string(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<PatternId>, D::Error> {
        let s = String::deserialize(d)?;
        parse_sequence(&s).map_err(serde::de::Error::custom)
    }
}

impl CircuitSpec {
    pub fn new(n: usize, m: usize, seed: u64, sequence: &str) -> Result<Self> {
        Ok(Self {
            n,
            m,
            seed,
            sequence: parse_sequence(sequence)?,
            variant: Variant::Full,
            cut: None,
        })
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_cut(mut self, partition_a: Vec<usize>) -> Self {
        self.cut = Some(partition_a);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleGate {
    pub q: usize,
    pub axis: Axis,
}

/// Gates inserted after the single-qubit layer, used for error injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtraKind {
    X,
    Y,
    Z,
    Rz(f64),
}

impl ExtraKind {
    pub fn matrix(&self) -> Unitary2 {
        match *self {
            ExtraKind::X => pauli_x(),
            ExtraKind::Y => pauli_y(),
            ExtraKind::Z => pauli_z(),
            ExtraKind::Rz(a) => rz(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraGate {
    pub q: usize,
    pub gate: ExtraKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGate {
    pub a: usize,
    pub b: usize,
    #[serde(flatten)]
    pub params: FsimParams,
}

impl PairGate {
    /// 4x4 matrix with qubit `b` (the larger index) on the high bit.
    pub fn matrix(&self) -> Unitary4 {
        general_fsim_matrix(&self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cycle {
    pub singles: Vec<SingleGate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<ExtraGate>,
    pub pairs: Vec<PairGate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub version: u32,
    pub spec: CircuitSpec,
    pub layout_id: String,
    pub cycles: Vec<Cycle>,
    pub half_cycle: Vec<SingleGate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub half_cycle_extra: Vec<ExtraGate>,
}

/// A gate in time order. `slot` is the cycle index, `m` for the trailing half cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    One { q: usize, u: Unitary2 },
    Two { a: usize, b: usize, u: Unitary4 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedOp {
    pub slot: usize,
    pub op: Op,
}

/// Per-pair fSim parameter overrides, keyed by (min, max) qubit index.
pub type PairParams = HashMap<(usize, usize), FsimParams>;

pub fn generate_circuit(spec: &CircuitSpec, layout: &QubitLayout) -> Result<Circuit> {
    generate_circuit_with_params(spec, layout, &PairParams::new())
}

pub fn generate_circuit_with_params(spec: &CircuitSpec, layout: &QubitLayout, params: &PairParams) -> Result<Circuit> {
    if spec.sequence.is_empty() {
        return Err(Error::InvalidSequence("empty sequence".into()));
    }
    if spec.n > layout.len() {
        return Err(Error::LayoutTooSmall {
            layout: layout.id.clone(),
            requested: spec.n,
            available: layout.len(),
        });
    }
    if spec.n == 0 {
        return Err(Error::InvalidSpec("n must be positive".into()));
    }
    let total = layout.len();
    let mut rng = SplitMix64::new(spec.seed);
    let mut prev: Vec<Option<Axis>> = vec![None; total];
    let draw = |rng: &mut SplitMix64, prev: &mut Vec<Option<Axis>>, n: usize| {
        let mut out = Vec::with_capacity(n);
        for q in 0..total {
            let axis = match prev[q] {
                None => Axis::ALL[rng.below(3) as usize],
                Some(p) => {
                    let others: Vec<Axis> = Axis::ALL.iter().copied().filter(|&a| a != p).collect();
                    others[rng.below(2) as usize]
                }
            };
            prev[q] = Some(axis);
            if q < n {
                out.push(SingleGate { q, axis });
            }
        }
        out
    };
    let mut cycles = Vec::with_capacity(spec.m);
    for c in 0..spec.m {
        let singles = draw(&mut rng, &mut prev, spec.n);
        let pattern = spec.sequence[c % spec.sequence.len()];
        let pairs = layout
            .pattern_pairs(pattern, spec.n)
            .into_iter()
            .map(|(a, b)| PairGate {
                a,
                b,
                params: params.get(&(a, b)).copied().unwrap_or_default(),
            })
            .collect();
        cycles.push(Cycle {
            singles,
            extra: Vec::new(),
            pairs,
        });
    }
    let half_cycle = draw(&mut rng, &mut prev, spec.n);
    let mut circuit = Circuit {
        version: CIRCUIT_SCHEMA_VERSION,
        spec: CircuitSpec {
            variant: Variant::Full,
            ..spec.clone()
        },
        layout_id: layout.id.clone(),
        cycles,
        half_cycle,
        half_cycle_extra: Vec::new(),
    };
    match spec.variant {
        Variant::Full => {}
        Variant::Elided(_) | Variant::Patch => {
            let part = spec.cut.clone().unwrap_or_else(|| layout.default_partition(spec.n));
            let cut = crate::cut::plan_cut(&circuit, layout, Some(&part))?;
            circuit = match spec.variant {
                Variant::Patch => make_patch(&circuit, &cut)?,
                Variant::Elided(k) => elide_gates(&circuit, &cut, k)?,
                Variant::Full => unreachable!(),
            };
            circuit.spec.cut = Some(part);
        }
    }
    Ok(circuit)
}

/// Removes the `k` earliest cross-partition gates (ties by smaller qubit index).
pub fn elide_gates(circuit: &Circuit, cut: &crate::cut::Cut, k: usize) -> Result<Circuit> {
    if k > cut.cross_gates.len() {
        return Err(Error::ElisionTooLarge {
            k,
            available: cut.cross_gates.len(),
        });
    }
    let mut out = circuit.clone();
    for g in &cut.cross_gates[..k] {
        out.cycles[g.cycle].pairs.retain(|p| !(p.a == g.a && p.b == g.b));
    }
    let already = match circuit.spec.variant {
        Variant::Elided(j) => j,
        _ => 0,
    };
    out.spec.variant = if k == cut.cross_gates.len() {
        Variant::Patch
    } else {
        Variant::Elided(already + k)
    };
    out.spec.cut = Some(cut.partition_a.clone());
    Ok(out)
}

/// Removes every cross-partition gate.
pub fn make_patch(circuit: &Circuit, cut: &crate::cut::Cut) -> Result<Circuit> {
    elide_gates(circuit, cut, cut.cross_gates.len())
}

impl Circuit {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn m(&self) -> usize {
        self.cycles.len()
    }

    pub fn two_qubit_count(&self) -> usize {
        self.cycles.iter().map(|c| c.pairs.len()).sum()
    }

    pub fn single_qubit_count(&self) -> usize {
        self.cycles.iter().map(|c| c.singles.len()).sum::<usize>() + self.half_cycle.len()
    }

    /// All gates in time order: per cycle singles, inserted gates, then pairs; then the half cycle.
    pub fn ops(&self) -> Vec<TimedOp> {
        let mut out = Vec::new();
        for (c, cyc) in self.cycles.iter().enumerate() {
            for s in &cyc.singles {
                out.push(TimedOp {
                    slot: c,
                    op: Op::One {
                        q: s.q,
                        u: single_qubit_matrix(s.axis),
                    },
                });
            }
            for e in &cyc.extra {
                out.push(TimedOp {
                    slot: c,
                    op: Op::One {
                        q: e.q,
                        u: e.gate.matrix(),
                    },
                });
            }
            for p in &cyc.pairs {
                out.push(TimedOp {
                    slot: c,
                    op: Op::Two {
                        a: p.a,
                        b: p.b,
                        u: p.matrix(),
                    },
                });
            }
        }
        let m = self.cycles.len();
        for s in &self.half_cycle {
            out.push(TimedOp {
                slot: m,
                op: Op::One {
                    q: s.q,
                    u: single_qubit_matrix(s.axis),
                },
            });
        }
        for e in &self.half_cycle_extra {
            out.push(TimedOp {
                slot: m,
                op: Op::One {
                    q: e.q,
                    u: e.gate.matrix(),
                },
            });
        }
        out
    }

    /// Single-qubit gate choice on `q` at cycle `c` (`c == m` is the half cycle).
    pub fn single_axis(&self, c: usize, q: usize) -> Option<Axis> {
        let list = if c == self.cycles.len() {
            &self.half_cycle
        } else {
            &self.cycles.get(c)?.singles
        };
        list.iter().find(|s| s.q == q).map(|s| s.axis)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("circuit serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Circuit = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spec.n;
        if self.cycles.len() != self.spec.m {
            return Err(Error::Format(format!(
                "circuit has {} cycles but spec.m = {}",
                self.cycles.len(),
                self.spec.m
            )));
        }
        for cyc in &self.cycles {
            let mut busy = vec![false; n];
            for p in &cyc.pairs {
                if p.a >= n || p.b >= n || p.a >= p.b {
                    return Err(Error::Format(format!("bad pair ({}, {})", p.a, p.b)));
                }
                if busy[p.a] || busy[p.b] {
                    return Err(Error::Format("qubit in two pairs in one cycle".into()));
                }
                busy[p.a] = true;
                busy[p.b] = true;
            }
            if cyc.singles.iter().any(|s| s.q >= n) || cyc.extra.iter().any(|s| s.q >= n) {
                return Err(Error::Format("single-qubit gate out of range".into()));
            }
        }
        if self.half_cycle.len() != n {
            return Err(Error::Format("half cycle must cover all qubits".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{SUPREMACY_SEQUENCE, VERIFIABLE_SEQUENCE};
    use proptest::prelude::*;

    fn gen(n: usize, m: usize, seed: u64, seq: &str) -> Circuit {
        let spec = CircuitSpec::new(n, m, seed, seq).unwrap();
        generate_circuit(&spec, &QubitLayout::sycamore53()).unwrap()
    }

    #[test]
    fn deterministic_bytes() {
        let a = gen(12, 14, 7, SUPREMACY_SEQUENCE).to_json();
        let b = gen(12, 14, 7, SUPREMACY_SEQUENCE).to_json();
        assert_eq!(a, b);
        let back = Circuit::from_json(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn seed_stability_across_sizes() {
        let small = gen(12, 14, 99, SUPREMACY_SEQUENCE);
        let large = gen(14, 16, 99, SUPREMACY_SEQUENCE);
        for c in 0..14 {
            for q in 0..12 {
                assert_eq!(small.single_axis(c, q), large.single_axis(c, q));
            }
        }
    }

    #[test]
    fn gate_counts_match_table() {
        let c = gen(53, 20, 1, SUPREMACY_SEQUENCE);
        assert_eq!(c.two_qubit_count(), 430);
        assert_eq!(c.single_qubit_count(), 53 * 21);
        let v = gen(38, 14, 1, VERIFIABLE_SEQUENCE);
        assert_eq!(v.two_qubit_count(), 210);
        assert_eq!(v.single_qubit_count(), 38 * 15);
    }

    #[test]
    fn pattern_coverage_over_eight_cycles() {
        let c = gen(53, 8, 3, SUPREMACY_SEQUENCE);
        let mut used: HashMap<(usize, usize), usize> = HashMap::new();
        for cyc in &c.cycles {
            for p in &cyc.pairs {
                *used.entry((p.a, p.b)).or_default() += 1;
            }
        }
        assert_eq!(used.len(), 86);
        assert!(used.values().all(|&k| k == 2));
    }

    #[test]
    fn rejects_bad_specs() {
        let l = QubitLayout::sycamore53();
        let spec = CircuitSpec::new(60, 4, 0, "ABCD").unwrap();
        assert!(matches!(generate_circuit(&spec, &l), Err(Error::LayoutTooSmall { .. })));
        assert!(CircuitSpec::new(4, 4, 0, "ABQ").is_err());
    }

    #[test]
    fn first_cycle_uses_all_three_gates() {
        let mut counts = [0usize; 3];
        for seed in 0..200 {
            let c = gen(10, 1, seed, SUPREMACY_SEQUENCE);
            for s in &c.cycles[0].singles {
                counts[s.axis.index()] += 1;
            }
        }
        for k in counts {
            assert!((k as f64 - 2000.0 / 3.0).abs() < 100.0, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn no_repeated_single_qubit_gates(seed in any::<u64>(), n in 2usize..20, m in 1usize..12) {
            let c = gen(n, m, seed, SUPREMACY_SEQUENCE);
            for q in 0..n {
                for t in 0..m {
                    prop_assert_ne!(c.single_axis(t, q), c.single_axis(t + 1, q));
                }
            }
            c.validate().unwrap();
        }
    }
}
