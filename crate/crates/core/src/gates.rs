//! Gate matrices, operator Schmidt decompositions and fSim identities.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

use crate::error::{Error, Result};

/// 2x2 complex matrix.
pub type Unitary2 = Matrix2<C64>;
/// 4x4 complex matrix, basis |00>,|01>,|10>,|11> with the left qubit as the high bit.
pub type Unitary4 = Matrix4<C64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "X")]
    X,
    #[serde(rename = "Y")]
    Y,
    #[serde(rename = "W")]
    W,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::W];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::W => 2,
        }
    }
}

/// Five-parameter fSim model. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsimParams {
    pub theta: f64,
    pub phi: f64,
    #[serde(rename = "dp", default)]
    pub delta_plus: f64,
    #[serde(rename = "dm", default)]
    pub delta_minus: f64,
    #[serde(rename = "dmoff", default)]
    pub delta_minus_off: f64,
}

impl Default for FsimParams {
    fn default() -> Self {
        Self::sycamore()
    }
}

impl FsimParams {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self {
            theta,
            phi,
            delta_plus: 0.0,
            delta_minus: 0.0,
            delta_minus_off: 0.0,
        }
    }

    /// theta = pi/2, phi = pi/6, no Z phases.
    pub fn sycamore() -> Self {
        Self::new(FRAC_PI_2, FRAC_PI_6)
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.theta,
            self.phi,
            self.delta_plus,
            self.delta_minus,
            self.delta_minus_off,
        ]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            theta: v[0],
            phi: v[1],
            delta_plus: v[2],
            delta_minus: v[3],
            delta_minus_off: v[4],
        }
    }

    pub fn matrix(&self) -> Unitary4 {
        general_fsim_matrix(self)
    }
}

pub fn single_qubit_matrix(axis: Axis) -> Unitary2 {
    let s = FRAC_1_SQRT_2;
    match axis {
        Axis::X => Matrix2::new(c(s, 0.0), c(0.0, -s), c(0.0, -s), c(s, 0.0)),
        Axis::Y => Matrix2::new(c(s, 0.0), c(-s, 0.0), c(s, 0.0), c(s, 0.0)),
        Axis::W => {
            let sqrt_i = C64::from_polar(1.0, FRAC_PI_4);
            let sqrt_mi = C64::from_polar(1.0, -FRAC_PI_4);
            Matrix2::new(c(s, 0.0), -sqrt_i * s, sqrt_mi * s, c(s, 0.0))
        }
    }
}

pub fn pauli_x() -> Unitary2 {
    Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn pauli_y() -> Unitary2 {
    Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub fn pauli_z() -> Unitary2 {
    Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

/// Rz(a) = diag(e^{-ia/2}, e^{ia/2}).
pub fn rz(angle: f64) -> Unitary2 {
    Matrix2::new(
        C64::from_polar(1.0, -angle / 2.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        C64::from_polar(1.0, angle / 2.0),
    )
}

/// Rx(a) = exp(-i a X / 2).
pub fn rx(angle: f64) -> Unitary2 {
    let (s, co) = (angle / 2.0).sin_cos();
    Matrix2::new(c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0))
}

pub fn fsim_matrix(theta: f64, phi: f64) -> Unitary4 {
    general_fsim_matrix(&FsimParams::new(theta, phi))
}

pub fn general_fsim_matrix(p: &FsimParams) -> Unitary4 {
    let (s, co) = p.theta.sin_cos();
    let e = |a: f64| C64::from_polar(1.0, a);
    let mut u = Unitary4::zeros();
    u[(0, 0)] = c(1.0, 0.0);
    u[(1, 1)] = e(p.delta_plus + p.delta_minus) * co;
    u[(1, 2)] = -I * e(p.delta_plus - p.delta_minus_off) * s;
    u[(2, 1)] = -I * e(p.delta_plus + p.delta_minus_off) * s;
    u[(2, 2)] = e(p.delta_plus - p.delta_minus) * co;
    u[(3, 3)] = e(2.0 * p.delta_plus - p.phi);
    u
}

/// diag(1, 1, 1, e^{-i delta}).
pub fn cphase(delta: f64) -> Unitary4 {
    let mut u = Unitary4::identity();
    u[(3, 3)] = C64::from_polar(1.0, -delta);
    u
}

pub fn swap() -> Unitary4 {
    let mut u = Unitary4::zeros();
    u[(0, 0)] = c(1.0, 0.0);
    u[(1, 2)] = c(1.0, 0.0);
    u[(2, 1)] = c(1.0, 0.0);
    u[(3, 3)] = c(1.0, 0.0);
    u
}

/// Kronecker product with `left` on the high bit.
pub fn kron2(left: &Unitary2, right: &Unitary2) -> Unitary4 {
    let mut u = Unitary4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            u[(i, j)] = left[(i >> 1, j >> 1)] * right[(i & 1, j & 1)];
        }
    }
    u
}

/// exp(-i theta (XX+YY)/2) exp(-i phi ZZ/4).
pub fn upsilon(theta: f64, phi: f64) -> Unitary4 {
    let (s, co) = theta.sin_cos();
    let zz = C64::from_polar(1.0, -phi / 4.0);
    let zz_conj = zz.conj();
    let mut u = Unitary4::zeros();
    u[(0, 0)] = zz;
    u[(1, 1)] = zz_conj * co;
    u[(1, 2)] = zz_conj * (-I * s);
    u[(2, 1)] = zz_conj * (-I * s);
    u[(2, 2)] = zz_conj * co;
    u[(3, 3)] = zz;
    u
}

/// |tr(U^dagger V)| / dim, equal to 1 iff U and V agree up to a global phase.
pub fn phase_overlap(u: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
    (u.adjoint() * v).trace().norm() / u.nrows() as f64
}

pub fn phase_overlap4(u: &Unitary4, v: &Unitary4) -> f64 {
    (u.adjoint() * v).trace().norm() / 4.0
}

/// Largest singular value of `a`.
pub fn operator_norm(a: &DMatrix<C64>) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn unitarity_error(u: &DMatrix<C64>) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<C64>::identity(n, n))
        .iter()
        .fold(0.0, |m, z| m.max(z.norm()))
}

/// Operator Schmidt decomposition `U = sum_k lambda_k A_k (x) B_k`.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    /// Descending, normalized so that the squares sum to the operator dimension.
    pub coefficients: Vec<f64>,
    /// Operators on the first subsystem, Hilbert-Schmidt orthonormal.
    pub left_ops: Vec<DMatrix<C64>>,
    /// Operators on the second subsystem, Hilbert-Schmidt orthonormal.
    pub right_ops: Vec<DMatrix<C64>>,
}

impl SchmidtDecomposition {
    pub fn rank(&self, tol: f64) -> usize {
        self.coefficients.iter().filter(|&&l| l > tol).count()
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        let da = self.left_ops[0].nrows();
        let db = self.right_ops[0].nrows();
        let mut out = DMatrix::<C64>::zeros(da * db, da * db);
        for (k, &l) in self.coefficients.iter().enumerate() {
            out += self.left_ops[k].kronecker(&self.right_ops[k]) * C64::from(l);
        }
        out
    }
}

/// Schmidt decomposition of an operator on `left (x) right` with dimensions `da*db`.
/// Row index of `u` is `ia * db + ib`.
pub fn schmidt_decompose_dims(u: &DMatrix<C64>, da: usize, db: usize) -> SchmidtDecomposition {
    assert_eq!(u.nrows(), da * db);
    let mut r = DMatrix::<C64>::zeros(da * da, db * db);
    for ia in 0..da {
        for ib in 0..db {
            for ja in 0..da {
                for jb in 0..db {
                    r[(ia * da + ja, ib * db + jb)] = u[(ia * db + ib, ja * db + jb)];
                }
            }
        }
    }
    let svd = r.svd(true, true);
    let uu = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut coefficients = Vec::new();
    let mut left_ops = Vec::new();
    let mut right_ops = Vec::new();
    for k in order {
        coefficients.push(svd.singular_values[k]);
        left_ops.push(DMatrix::from_fn(da, da, |i, j| uu[(i * da + j, k)]));
        right_ops.push(DMatrix::from_fn(db, db, |i, j| vt[(k, i * db + j)]));
    }
    SchmidtDecomposition {
        coefficients,
        left_ops,
        right_ops,
    }
}

/// Schmidt decomposition of a two-qubit gate; left operators act on the high bit.
pub fn schmidt_decompose(u: &Unitary4) -> SchmidtDecomposition {
    let d = DMatrix::from_fn(4, 4, |i, j| u[(i, j)]);
    schmidt_decompose_dims(&d, 2, 2)
}

/// Closed-form Schmidt coefficients of fSim(theta, phi), descending.
pub fn fsim_schmidt_values(theta: f64, phi: f64) -> [f64; 4] {
    let cross = ((phi / 2.0).cos() * theta.cos()).abs();
    let c2 = theta.cos().powi(2);
    let l1 = (1.0 + 2.0 * cross + c2).sqrt();
    let l4 = (1.0 - 2.0 * cross + c2).max(0.0).sqrt();
    let s = theta.sin().abs();
    let mut v = [l1, s, s, l4];
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Depolarizing polarization per cycle for a swap-angle error `delta_theta`.
pub fn depolarizing_p_per_cycle(delta_theta: f64) -> f64 {
    (8.0 * delta_theta.cos() + 2.0 * (2.0 * delta_theta).cos() + 5.0) / 15.0
}

/// Same quantity from the trace formula with D = 4.
pub fn depolarizing_p_from_trace(theta: f64) -> f64 {
    let v = fsim_matrix(theta, 0.0);
    let ideal = fsim_matrix(FRAC_PI_2, 0.0);
    let t = (v * ideal.adjoint()).trace().norm_sqr();
    (t - 1.0) / 15.0
}

/// Gate sequence realising a controlled phase from two fSim-family gates.
#[derive(Debug, Clone, Copy)]
pub struct CzDecomposition {
    pub theta: f64,
    pub phi: f64,
    pub delta: f64,
    pub alpha: f64,
    pub xi: f64,
    pub eta: f64,
}

impl CzDecomposition {
    /// Product of the full sequence (rightmost factor applied first).
    pub fn compose(&self) -> Unitary4 {
        let id = Unitary2::identity();
        let pre = kron2(&rx(self.xi), &rx(self.eta));
        let mid = kron2(&rx(-2.0 * self.alpha), &id);
        let post = kron2(&rx(self.xi), &rx(-self.eta));
        post * upsilon(-self.theta, self.phi) * mid * upsilon(self.theta, self.phi) * pre
    }

    /// Operator-norm distance to diag(1,1,1,e^{-i delta}) after optimal Z stripping.
    pub fn error(&self) -> f64 {
        let u = self.compose();
        let (stripped, _) = strip_z_rotations(&u, &cphase(self.delta));
        let d = DMatrix::from_fn(4, 4, |i, j| stripped[(i, j)] - cphase(self.delta)[(i, j)]);
        operator_norm(&d)
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// atan(y / x) evaluated without dividing, so x = 0 maps to +-pi/2.
fn atan_ratio(y: f64, x: f64) -> f64 {
    if x == 0.0 {
        return FRAC_PI_2 * sgn(y);
    }
    (y * sgn(x)).atan2(x.abs())
}

/// Decompose diag(1,1,1,e^{-i delta}) into Upsilon(-theta,phi) e^{i alpha X1} Upsilon(theta,phi)
/// dressed with X rotations.
pub fn decompose_cz_from_fsim(theta: f64, phi: f64, delta: f64) -> Result<CzDecomposition> {
    let st = theta.sin();
    let sp = (phi / 2.0).sin();
    let sd = (delta / 4.0).sin();
    let lo = st.abs().min(sp.abs());
    let hi = st.abs().max(sp.abs());
    if !(lo <= sd && sd <= hi) {
        return Err(Error::InfeasibleAngles {
            target: sd,
            phi_term: sp.abs(),
            theta_term: st.abs(),
        });
    }
    let denom = st * st - sp * sp;
    let ratio = if denom == 0.0 { 0.0 } else { (sd * sd - sp * sp) / denom };
    let sin_alpha = ratio.clamp(0.0, 1.0).sqrt();
    let alpha = sin_alpha.asin();
    let tan_alpha = alpha.tan();
    let cp = (phi / 2.0).cos();
    let xi = atan_ratio(tan_alpha * theta.cos(), cp) + FRAC_PI_2 * (1.0 - sgn(cp));
    let eta = atan_ratio(tan_alpha * st, sp) + FRAC_PI_2 * (1.0 - sgn(sp));
    Ok(CzDecomposition {
        theta,
        phi,
        delta,
        alpha,
        xi,
        eta,
    })
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * ((a + std::f64::consts::PI) / t).floor()
}

/// Finds Z rotations `Rz(a) (x) Rz(b)` and a global phase that map `u` closest to `target`
/// (both assumed diagonal up to numerical noise). Returns the corrected matrix and the
/// residual phase that no Z rotation can remove.
pub fn strip_z_rotations(u: &Unitary4, target: &Unitary4) -> (Unitary4, f64) {
    let ph: Vec<f64> = (0..4).map(|k| (u[(k, k)] * target[(k, k)].conj()).arg()).collect();
    // Phases of a global phase times Z rotations satisfy ph00 - ph01 - ph10 + ph11 = 0.
    let resid = wrap(ph[0] - ph[1] - ph[2] + ph[3]);
    let sign = [1.0, -1.0, -1.0, 1.0];
    let adj: Vec<f64> = (0..4).map(|k| ph[k] - sign[k] * resid / 4.0).collect();
    let g = adj[0];
    let lo = wrap(adj[1] - adj[0]);
    let hi = wrap(adj[2] - adj[0]);
    let fit = [g, g + lo, g + hi, g + lo + hi];
    let mut out = *u;
    for k in 0..4 {
        let f = C64::from_polar(1.0, -fit[k]);
        for j in 0..4 {
            out[(k, j)] *= f;
        }
    }
    (out, resid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Pauli,
    Average,
    Depol,
    P,
}

impl std::str::FromStr for ErrorMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pauli" | "e_p" => Ok(Self::Pauli),
            "average" | "e_a" => Ok(Self::Average),
            "depol" | "e_d" => Ok(Self::Depol),
            "p" | "polarization" => Ok(Self::P),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Converts between Pauli, average, depolarization error and the polarization p.
pub fn error_metric_convert(value: f64, from: ErrorMetric, to: ErrorMetric, dim: f64) -> f64 {
    let p = match from {
        ErrorMetric::Pauli => 1.0 - value / (1.0 - 1.0 / (dim * dim)),
        ErrorMetric::Average => 1.0 - value / (1.0 - 1.0 / dim),
        ErrorMetric::Depol => 1.0 - value,
        ErrorMetric::P => value,
    };
    match to {
        ErrorMetric::Pauli => (1.0 - p) * (1.0 - 1.0 / (dim * dim)),
        ErrorMetric::Average => (1.0 - p) * (1.0 - 1.0 / dim),
        ErrorMetric::Depol => 1.0 - p,
        ErrorMetric::P => p,
    }
}

pub fn to_dmatrix4(u: &Unitary4) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |i, j| u[(i, j)])
}

pub fn to_dmatrix2(u: &Unitary2) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |i, j| u[(i, j)])
}
