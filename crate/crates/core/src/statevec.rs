//! Schrödinger simulation on dense state vectors.

use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::{Float, NumCast};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Debug;

use crate::circuit::{Circuit, Op};
use crate::error::{Error, Result};
use crate::gates::{Unitary2, Unitary4};
use crate::C64;

/// Default largest state vector that may be allocated.
pub const DEFAULT_MAX_QUBITS: usize = 30;

/// Minimum state size for data-parallel kernels.
const PAR_MIN: usize = 1 << 14;

/// Qubit cap, overridable through `RQC_MAX_QUBITS`.
pub fn max_qubits() -> usize {
    std::env::var("RQC_MAX_QUBITS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_MAX_QUBITS)
}

pub fn check_memory(n: usize) -> Result<()> {
    let cap = max_qubits();
    if n > cap || n >= usize::BITS as usize - 5 {
        return Err(Error::MemoryCap { n, cap });
    }
    Ok(())
}

/// Floating-point type of the amplitudes.
pub trait Scalar: Float + Send + Sync + Debug + Default + 'static {
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("finite")
    }
    fn f64(self) -> f64 {
        self.to_f64().expect("finite")
    }
}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    Single,
    #[default]
    Double,
}

fn cast<T: Scalar>(z: C64) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Scalar = f64> {
    n: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Scalar> StateVector<T> {
    /// |0...0> on `n` qubits, refusing sizes above [`max_qubits`].
    pub fn new(n: usize) -> Result<Self> {
        check_memory(n)?;
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1usize << n];
        amps[0] = Complex::new(T::one(), T::zero());
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(Error::InvalidArgument("length must be a power of two".into()));
        }
        Ok(Self {
            n: amps.len().trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn amplitude(&self, index: u64) -> C64 {
        let a = self.amps[index as usize];
        C64::new(a.re.f64(), a.im.f64())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr().f64()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr().f64()).collect()
    }

    fn check(&self, q: usize) -> Result<()> {
        if q >= self.n {
            return Err(Error::QubitOutOfRange { index: q, n: self.n });
        }
        Ok(())
    }

    pub fn apply_1q(&mut self, u: &Unitary2, q: usize) -> Result<()> {
        self.check(q)?;
        let m = [cast::<T>(u[(0, 0)]), cast(u[(0, 1)]), cast(u[(1, 0)]), cast(u[(1, 1)])];
        let s = 1usize << q;
        let kernel = |chunk: &mut [Complex<T>]| {
            for k in 0..s {
                let (a0, a1) = (chunk[k], chunk[k + s]);
                chunk[k] = m[0] * a0 + m[1] * a1;
                chunk[k + s] = m[2] * a0 + m[3] * a1;
            }
        };
        let block = 2 * s;
        if self.amps.len() >= PAR_MIN && self.amps.len() / block >= 8 {
            self.amps.par_chunks_mut(block).for_each(kernel);
        } else {
            self.amps.chunks_mut(block).for_each(kernel);
        }
        Ok(())
    }

    /// Applies `u` (basis index `2*bit(q2) + bit(q1)`) to qubits `q1 < q2`.
    pub fn apply_two_qubit(&mut self, u: &Unitary4, q1: usize, q2: usize) -> Result<()> {
        self.check(q1)?;
        self.check(q2)?;
        if q1 >= q2 {
            return Err(Error::InvalidArgument(format!("need q1 < q2, got {q1}, {q2}")));
        }
        let mut m = [[Complex::new(T::zero(), T::zero()); 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = cast(u[(r, c)]);
            }
        }
        let (s1, s2) = (1usize << q1, 1usize << q2);
        let kernel = |chunk: &mut [Complex<T>]| {
            for j in (0..s2).step_by(2 * s1) {
                for k in 0..s1 {
                    let i0 = j + k;
                    let idx = [i0, i0 + s1, i0 + s2, i0 + s1 + s2];
                    let v = idx.map(|i| chunk[i]);
                    for r in 0..4 {
                        chunk[idx[r]] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
                    }
                }
            }
        };
        let block = 2 * s2;
        if self.amps.len() >= PAR_MIN && self.amps.len() / block >= 8 {
            self.amps.par_chunks_mut(block).for_each(kernel);
        } else {
            self.amps.chunks_mut(block).for_each(kernel);
        }
        Ok(())
    }

    /// Applies a dense gate; matrix index bit `j` refers to `qubits[j]`.
    pub fn apply_dense(&mut self, u: &DMatrix<C64>, qubits: &[usize]) -> Result<()> {
        let k = qubits.len();
        if u.nrows() != 1 << k || u.ncols() != 1 << k {
            return Err(Error::InvalidArgument("matrix size does not match qubit count".into()));
        }
        for &q in qubits {
            self.check(q)?;
        }
        match k {
            1 => return self.apply_1q(&Unitary2::from_fn(|r, c| u[(r, c)]), qubits[0]),
            2 if qubits[0] < qubits[1] => {
                return self.apply_two_qubit(&Unitary4::from_fn(|r, c| u[(r, c)]), qubits[0], qubits[1])
            }
            _ => {}
        }
        let dim = 1usize << k;
        let m: Vec<Complex<T>> = u.transpose().iter().map(|&z| cast(z)).collect();
        let offsets: Vec<usize> = (0..dim)
            .map(|s| (0..k).filter(|j| s >> j & 1 == 1).map(|j| 1usize << qubits[j]).sum())
            .collect();
        let mut sorted = qubits.to_vec();
        sorted.sort_unstable();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); dim];
        for r in 0..(self.amps.len() >> k) {
            let mut base = r;
            for &q in &sorted {
                let low = base & ((1 << q) - 1);
                base = ((base >> q) << (q + 1)) | low;
            }
            for (b, &o) in buf.iter_mut().zip(&offsets) {
                *b = self.amps[base + o];
            }
            for (row, &o) in offsets.iter().enumerate() {
                let mut acc = Complex::new(T::zero(), T::zero());
                for (col, b) in buf.iter().enumerate() {
                    acc = acc + m[row * dim + col] * *b;
                }
                self.amps[base + o] = acc;
            }
        }
        Ok(())
    }

    pub fn apply_op(&mut self, op: &Op) -> Result<()> {
        match op {
            Op::One { q, u } => self.apply_1q(u, *q),
            Op::Two { a, b, u } => {
                if a < b {
                    self.apply_two_qubit(u, *a, *b)
                } else {
                    self.apply_two_qubit(&swap_operands(u), *b, *a)
                }
            }
        }
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n() != self.n {
            return Err(Error::InvalidArgument(format!(
                "circuit has {} qubits, state has {}",
                circuit.n(),
                self.n
            )));
        }
        for t in circuit.ops() {
            self.apply_op(&t.op)?;
        }
        Ok(())
    }

    pub fn apply_fused(&mut self, program: &[FusedGate]) -> Result<()> {
        for g in program {
            self.apply_dense(&g.matrix, &g.qubits)?;
        }
        Ok(())
    }
}

/// Re-expresses a two-qubit matrix with its operands exchanged.
pub fn swap_operands(u: &Unitary4) -> Unitary4 {
    let p = [0usize, 2, 1, 3];
    Unitary4::from_fn(|r, c| u[(p[r], p[c])])
}

/// A gate on up to a few qubits; matrix index bit `j` refers to `qubits[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedGate {
    pub qubits: Vec<usize>,
    pub matrix: DMatrix<C64>,
}

/// Absorbs every single-qubit gate into the next two-qubit gate on its qubit,
/// or the previous one when no later two-qubit gate exists.
pub fn fuse(circuit: &Circuit) -> Vec<FusedGate> {
    let gates = circuit.ops().into_iter().map(|t| match t.op {
        Op::One { q, u } => FusedGate {
            qubits: vec![q],
            matrix: DMatrix::from_fn(2, 2, |r, c| u[(r, c)]),
        },
        Op::Two { a, b, u } => FusedGate {
            qubits: vec![a, b],
            matrix: DMatrix::from_fn(4, 4, |r, c| u[(r, c)]),
        },
    });
    fuse_gates(circuit.n(), gates)
}

/// [`fuse`] on an arbitrary gate list. Gates on three or more qubits are kept as they are.
pub fn fuse_gates(n: usize, gates: impl IntoIterator<Item = FusedGate>) -> Vec<FusedGate> {
    let id2 = DMatrix::<C64>::identity(2, 2);
    let mut pending: Vec<Option<DMatrix<C64>>> = vec![None; n];
    let mut last_two: Vec<Option<usize>> = vec![None; n];
    let mut out: Vec<FusedGate> = Vec::new();
    for g in gates {
        match g.qubits.len() {
            1 => {
                let q = g.qubits[0];
                let p = pending[q].take().unwrap_or_else(|| id2.clone());
                pending[q] = Some(g.matrix * p);
            }
            2 => {
                let (a, b) = (g.qubits[0], g.qubits[1]);
                let (lo, hi, u) = if a < b {
                    (a, b, g.matrix)
                } else {
                    let p = [0usize, 2, 1, 3];
                    (b, a, DMatrix::from_fn(4, 4, |r, c| g.matrix[(p[r], p[c])]))
                };
                let pl = pending[lo].take().unwrap_or_else(|| id2.clone());
                let ph = pending[hi].take().unwrap_or_else(|| id2.clone());
                let matrix = u * ph.kronecker(&pl);
                last_two[lo] = Some(out.len());
                last_two[hi] = Some(out.len());
                out.push(FusedGate {
                    qubits: vec![lo, hi],
                    matrix,
                });
            }
            _ => {
                for &q in &g.qubits {
                    if let Some(p) = pending[q].take() {
                        out.push(FusedGate {
                            qubits: vec![q],
                            matrix: p,
                        });
                    }
                    last_two[q] = None;
                }
                out.push(g);
            }
        }
    }
    for q in 0..n {
        if let Some(p) = pending[q].take() {
            match last_two[q] {
                Some(i) => {
                    let g = &mut out[i];
                    let embed = if g.qubits[0] == q {
                        id2.kronecker(&p)
                    } else {
                        p.kronecker(&id2)
                    };
                    g.matrix = embed * &g.matrix;
                }
                None => out.push(FusedGate {
                    qubits: vec![q],
                    matrix: p,
                }),
            }
        }
    }
    out
}

pub fn simulate(circuit: &Circuit) -> Result<StateVector<f64>> {
    let mut s = StateVector::new(circuit.n())?;
    s.apply_circuit(circuit)?;
    Ok(s)
}

pub fn simulate_f32(circuit: &Circuit) -> Result<StateVector<f32>> {
    let mut s = StateVector::new(circuit.n())?;
    s.apply_circuit(circuit)?;
    Ok(s)
}

/// Output probabilities at the requested precision, as f64.
pub fn probabilities(circuit: &Circuit, precision: Precision) -> Result<Vec<f64>> {
    Ok(match precision {
        Precision::Double => simulate(circuit)?.probabilities(),
        Precision::Single => simulate_f32(circuit)?.probabilities(),
    })
}

/// `<x|U|0>` with bit `k` of `x` giving the value of qubit `k`.
pub fn amplitude(circuit: &Circuit, x: u64) -> Result<C64> {
    if circuit.n() < 64 && x >> circuit.n() != 0 {
        return Err(Error::InvalidArgument(format!(
            "bitstring {x} has more than {} bits",
            circuit.n()
        )));
    }
    Ok(simulate(circuit)?.amplitude(x))
}

/// `count` i.i.d. draws from `probs` by inverse CDF.
pub fn sample_from_probabilities(probs: &[f64], count: usize, seed: u64) -> Vec<u64> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(probs.len() - 1) as u64
        })
        .collect()
}

/// Ideal samples from the output distribution of `circuit`.
pub fn sample(circuit: &Circuit, count: usize, seed: u64) -> Result<Vec<u64>> {
    let probs = simulate(circuit)?.probabilities();
    Ok(sample_from_probabilities(&probs, count, seed))
}
