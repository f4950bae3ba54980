//! Cross-entropy fidelity estimators, decay fits, speckle purity and unitary-model learning.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gates::FsimParams;
use crate::statevec::{probabilities, Precision};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Simulated ideal probabilities of the measured bitstrings of one circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbSample {
    pub circuit_id: String,
    pub n: usize,
    pub ideal_probs: Vec<f64>,
}

impl ProbSample {
    pub fn new(circuit_id: impl Into<String>, n: usize, ideal_probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = ideal_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self {
            circuit_id: circuit_id.into(),
            n,
            ideal_probs,
        })
    }

    /// Looks up the ideal probability of each measured bitstring in a full distribution.
    pub fn from_distribution(circuit_id: impl Into<String>, probs: &[f64], bitstrings: &[u64]) -> Result<Self> {
        let n = probs.len().trailing_zeros() as usize;
        let ideal = bitstrings
            .iter()
            .map(|&x| {
                probs
                    .get(x as usize)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("bitstring {x} outside 2^{n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(circuit_id, n, ideal)
    }

    pub fn dim(&self) -> f64 {
        (self.n as f64).exp2()
    }

    pub fn len(&self) -> usize {
        self.ideal_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ideal_probs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Linear,
    Log,
    Hog,
    Purity,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "log" => Ok(Self::Log),
            "hog" => Ok(Self::Hog),
            "purity" => Ok(Self::Purity),
            _ => Err(Error::InvalidArgument(format!("unknown estimator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub estimator: Estimator,
    #[serde(rename = "F")]
    pub value: f64,
    /// Standard error from the unbiased sample variance.
    #[serde(rename = "sigma_empirical")]
    pub sigma: f64,
    pub sigma_theory: f64,
    #[serde(rename = "N_s")]
    pub n_s: usize,
}

fn mean_and_sem(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let sem = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    (mean, sem, n)
}

fn require_len(sample: &ProbSample, min: usize) -> Result<()> {
    if sample.len() < min {
        return Err(Error::Empty("probability sample needs at least two bitstrings"));
    }
    Ok(())
}

fn theory_sigma(var: f64, n: usize) -> f64 {
    (var.max(0.0) / n as f64).sqrt()
}

/// F = ⟨D p_s⟩ − 1.
pub fn linear_xeb(sample: &ProbSample) -> Result<FidelityEstimate> {
    require_len(sample, 2)?;
    let d = sample.dim();
    let (mean, sem, n) = mean_and_sem(sample.ideal_probs.iter().map(|p| d * p));
    let f = mean - 1.0;
    Ok(FidelityEstimate {
        estimator: Estimator::Linear,
        value: f,
        sigma: sem,
        sigma_theory: theory_sigma(1.0 + 2.0 * f - f * f, n),
        n_s: n,
    })
}

/// F = ⟨log D p_s⟩ + γ.
pub fn log_xeb(sample: &ProbSample) -> Result<FidelityEstimate> {
    require_len(sample, 2)?;
    if sample.ideal_probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::Numerical("zero ideal probability in log-XEB sample".into()));
    }
    let d = sample.dim();
    let (mean, sem, n) = mean_and_sem(sample.ideal_probs.iter().map(|p| (d * p).ln()));
    let f = mean + EULER_GAMMA;
    Ok(FidelityEstimate {
        estimator: Estimator::Log,
        value: f,
        sigma: sem,
        sigma_theory: theory_sigma(PI * PI / 6.0 - f * f, n),
        n_s: n,
    })
}

/// Heavy-output estimator F = ⟨2 n_s − 1⟩ / ln 2 with n_s = [D p_s ≥ ln 2].
pub fn hog_fidelity(sample: &ProbSample) -> Result<FidelityEstimate> {
    require_len(sample, 2)?;
    let d = sample.dim();
    let (mean, sem, n) =
        mean_and_sem(
            sample
                .ideal_probs
                .iter()
                .map(|p| if d * p >= LN_2 { 1.0 / LN_2 } else { -1.0 / LN_2 }),
        );
    Ok(FidelityEstimate {
        estimator: Estimator::Hog,
        value: mean,
        sigma: sem,
        sigma_theory: theory_sigma(1.0 / (LN_2 * LN_2) - mean * mean, n),
        n_s: n,
    })
}

pub fn estimate(sample: &ProbSample, estimator: Estimator) -> Result<FidelityEstimate> {
    match estimator {
        Estimator::Linear => linear_xeb(sample),
        Estimator::Log => log_xeb(sample),
        Estimator::Hog => hog_fidelity(sample),
        Estimator::Purity => Err(Error::InvalidArgument(
            "purity is estimated from probability tables, not samples".into(),
        )),
    }
}

/// Denominator of the small-system estimator ⟨D p_s − 1⟩ / (D Σ p_s² − 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// D Σ_q p_s(q)² − 1 computed from the simulated distribution.
    Simulated,
    /// Haar-average value 2D/(D+1) − 1.
    Haar,
}

/// D Σ p² − 1 of a full distribution, or its Haar average.
pub fn xeb_normalization(probs: &[f64], norm: Normalization) -> f64 {
    let d = probs.len() as f64;
    match norm {
        Normalization::Simulated => d * probs.iter().map(|p| p * p).sum::<f64>() - 1.0,
        Normalization::Haar => 2.0 * d / (d + 1.0) - 1.0,
    }
}

/// Small-system fidelity estimate from measured bitstrings of a circuit with full ideal distribution `probs`.
pub fn small_system_xeb(probs: &[f64], bitstrings: &[u64], norm: Normalization) -> Result<FidelityEstimate> {
    let sample = ProbSample::from_distribution("", probs, bitstrings)?;
    let mut est = linear_xeb(&sample)?;
    let z = xeb_normalization(probs, norm);
    if z <= 0.0 {
        return Err(Error::Numerical("flat ideal distribution cannot normalize XEB".into()));
    }
    est.value /= z;
    est.sigma /= z;
    est.sigma_theory /= z;
    Ok(est)
}

/// Small-system fidelity between an exact "measured" distribution and the simulated one.
pub fn xeb_of_distributions(measured: &[f64], simulated: &[f64], norm: Normalization) -> Result<f64> {
    if measured.len() != simulated.len() || measured.is_empty() {
        return Err(Error::InvalidArgument("distributions differ in length".into()));
    }
    let d = simulated.len() as f64;
    let num = d * measured.iter().zip(simulated).map(|(a, b)| a * b).sum::<f64>() - 1.0;
    Ok(num / xeb_normalization(simulated, norm))
}

/// Small-fidelity maximum-likelihood estimate Σ(D p − 1) / Σ(D p − 1)².
pub fn small_fidelity_ml(sample: &ProbSample) -> Result<f64> {
    require_len(sample, 2)?;
    let d = sample.dim();
    let (num, den) = sample.ideal_probs.iter().fold((0.0, 0.0), |(a, b), p| {
        let x = d * p - 1.0;
        (a + x, b + x * x)
    });
    if den == 0.0 {
        return Err(Error::Numerical("degenerate sample".into()));
    }
    Ok(num / den)
}

/// Maximizes Σ log(1 + F (D p − 1)) over F by Newton iteration on the score.
pub fn max_likelihood_fidelity(sample: &ProbSample) -> Result<f64> {
    require_len(sample, 2)?;
    let d = sample.dim();
    let xs: Vec<f64> = sample.ideal_probs.iter().map(|p| d * p - 1.0).collect();
    let mut f = small_fidelity_ml(sample)?;
    for _ in 0..100 {
        let (mut g, mut h) = (0.0, 0.0);
        for &x in &xs {
            let w = x / (1.0 + f * x);
            g += w;
            h -= w * w;
        }
        let step = g / h;
        f -= step;
        if step.abs() < 1e-15 {
            return Ok(f);
        }
    }
    Err(Error::Numerical("likelihood maximization did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityEstimate {
    pub purity: f64,
    pub sqrt_purity: f64,
    pub variance: f64,
    pub dim: usize,
}

/// Purity = Var(P) D²(D+1)/(D−1), averaging the per-instance variance over all rows.
pub fn speckle_purity(table: &[Vec<f64>]) -> Result<PurityEstimate> {
    let first = table.first().ok_or(Error::Empty("probability table"))?;
    let dim = first.len();
    if dim < 2 || table.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidArgument("rows must share a length of at least 2".into()));
    }
    let var = table
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / dim as f64;
            row.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / dim as f64
        })
        .sum::<f64>()
        / table.len() as f64;
    let d = dim as f64;
    let purity = var * d * d * (d + 1.0) / (d - 1.0);
    Ok(PurityEstimate {
        purity,
        sqrt_purity: purity.max(0.0).sqrt(),
        variance: var,
        dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub p_c: f64,
    pub prefactor: f64,
    /// Standard error of p_c from the log-linear regression (0 with two points).
    pub p_c_sigma: f64,
    /// log(estimate) − fitted log value, per input point.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of log(estimate) = log A + m log p_c.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.iter().any(|&(_, e)| e <= 0.0 || !e.is_finite()) {
        return Err(Error::InvalidArgument("decay fit needs positive estimates".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return Err(Error::InvalidArgument("decay fit needs two distinct depths".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = points.iter().map(|p| p.1.ln() - (intercept + slope * p.0)).collect();
    let slope_sigma = if points.len() > 2 {
        (residuals.iter().map(|r| r * r).sum::<f64>() / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let p_c = slope.exp();
    Ok(DecayFit {
        p_c,
        prefactor: intercept.exp(),
        p_c_sigma: p_c * slope_sigma,
        residuals,
    })
}

/// Inverse-variance weighted mean of independent estimates.
pub fn combine_estimates(estimates: &[FidelityEstimate]) -> Result<FidelityEstimate> {
    let first = estimates.first().ok_or(Error::Empty("estimate list"))?;
    if estimates.iter().any(|e| !(e.sigma > 0.0)) {
        return Err(Error::InvalidArgument("all sigmas must be positive".into()));
    }
    let (mut wsum, mut acc) = (0.0, 0.0);
    for e in estimates {
        let w = e.sigma.powi(-2);
        wsum += w;
        acc += w * e.value;
    }
    let theory = if estimates.iter().all(|e| e.sigma_theory > 0.0) {
        estimates
            .iter()
            .map(|e| e.sigma_theory.powi(-2))
            .sum::<f64>()
            .powf(-0.5)
    } else {
        0.0
    };
    Ok(FidelityEstimate {
        estimator: first.estimator,
        value: acc / wsum,
        sigma: wsum.powf(-0.5),
        sigma_theory: theory,
        n_s: estimates.iter().map(|e| e.n_s).sum(),
    })
}

/// Product of (1 − e) over single-qubit gate, two-qubit gate and measurement errors.
pub fn predict_fidelity(single: &[f64], two: &[f64], meas: &[f64]) -> Result<f64> {
    let all = single.iter().chain(two).chain(meas);
    if let Some(e) = all.clone().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(Error::InvalidArgument(format!("error rate {e} outside [0, 1)")));
    }
    Ok(all.map(|e| (1.0 - e).ln()).sum::<f64>().exp())
}

/// F_U = F / p_m.
pub fn separate_measurement_fidelity(f_total: f64, p_m: f64) -> Result<f64> {
    if !(p_m > 0.0 && p_m <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "measurement fidelity {p_m} outside (0, 1]"
        )));
    }
    Ok(f_total / p_m)
}

/// Measured bitstrings of one two-qubit circuit.
#[derive(Debug, Clone)]
pub struct TwoQubitXebData {
    pub circuit: Circuit,
    pub bitstrings: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitaryFit {
    pub params: FsimParams,
    /// Final value of the maximized objective.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub alpha: f64,
    pub gamma: f64,
    pub rho: f64,
    pub sigma: f64,
    pub initial_step: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 2.0,
            rho: 0.5,
            sigma: 0.5,
            initial_step: 0.05,
            max_iter: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from a simplex of `x0` and `x0 + step·e_i`.
/// Converges when the spread of simplex values falls below the tolerance.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=dim)
        .map(|i| {
            let mut x = x0.to_vec();
            if i > 0 {
                x[i - 1] += opts.initial_step;
            }
            let v = f(&x);
            (x, v)
        })
        .collect();
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[dim].1 - simplex[0].1 < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|s| s.0[k]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let xr = lerp(&centroid, &worst.0, -opts.alpha);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst.0, -opts.gamma);
            let fe = f(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = lerp(&centroid, &xr, opts.rho);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = lerp(&centroid, &worst.0, opts.rho);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for s in simplex.iter_mut().skip(1) {
            s.0 = lerp(&best, &s.0, opts.sigma);
            s.1 = f(&s.0);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

struct Histogram {
    circuit: Circuit,
    freqs: Vec<f64>,
}

/// Scale-free XEB score ⟨D p − 1⟩ / √(D Σ p² − 1) of measured frequencies against a candidate model.
/// Equals F·√(D Σ p² − 1) under depolarization and is maximal when the model matches the data.
fn unitary_objective(data: &[Histogram], params: &FsimParams) -> Result<f64> {
    let mut total = 0.0;
    for h in data {
        let mut c = h.circuit.clone();
        for cy in &mut c.cycles {
            for p in &mut cy.pairs {
                p.params = *params;
            }
        }
        let probs = probabilities(&c, Precision::Double)?;
        let d = probs.len() as f64;
        let num = d * probs.iter().zip(&h.freqs).map(|(p, q)| p * q).sum::<f64>() - 1.0;
        let z = xeb_normalization(&probs, Normalization::Simulated);
        total += num / z.max(1e-300).sqrt();
    }
    Ok(total)
}

/// Learns the five fSim parameters shared by all two-qubit gates by maximizing the summed XEB score.
pub fn fit_unitary(data: &[TwoQubitXebData], initial: FsimParams) -> Result<UnitaryFit> {
    fit_unitary_with(data, initial, &NelderMeadOptions::default())
}

pub fn fit_unitary_with(data: &[TwoQubitXebData], initial: FsimParams, opts: &NelderMeadOptions) -> Result<UnitaryFit> {
    if data.is_empty() {
        return Err(Error::Empty("unitary fit data"));
    }
    if initial.to_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial parameters must be finite".into()));
    }
    let hist = data
        .iter()
        .map(|d| {
            if d.circuit.n() != 2 {
                return Err(Error::InvalidArgument("unitary fit needs two-qubit circuits".into()));
            }
            if d.bitstrings.is_empty() {
                return Err(Error::Empty("bitstrings for a unitary fit circuit"));
            }
            let mut freqs = vec![0.0; 4];
            for &x in &d.bitstrings {
                *freqs
                    .get_mut(x as usize)
                    .ok_or_else(|| Error::InvalidArgument(format!("bitstring {x} outside 2 qubits")))? += 1.0;
            }
            let n = d.bitstrings.len() as f64;
            freqs.iter_mut().for_each(|f| *f /= n);
            Ok(Histogram {
                circuit: d.circuit.clone(),
                freqs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut failure = None;
    let min = nelder_mead(
        |x| {
            let p = FsimParams::from_array([x[0], x[1], x[2], x[3], x[4]]);
            match unitary_objective(&hist, &p) {
                Ok(v) => -v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        },
        &initial.to_array(),
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let x = &min.x;
    Ok(UnitaryFit {
        params: FsimParams::from_array([x[0], x[1], x[2], x[3], x[4]]),
        objective: -min.value,
        iterations: min.iterations,
        converged: min.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{generate_circuit_with_params, CircuitSpec, PairParams};
    use crate::layout::QubitLayout;
    use crate::statevec::sample_from_probabilities;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt_sample(d: usize, n_s: usize, ideal: bool, seed: u64) -> Vec<f64> {
        // Draws x = D p from Exp(1) (uniform sampling) or Gamma(2,1) (ideal sampling).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_s)
            .map(|_| {
                let mut x = -(1.0 - rng.random::<f64>()).ln();
                if ideal {
                    x -= (1.0 - rng.random::<f64>()).ln();
                }
                (x / d as f64).min(1.0)
            })
            .collect()
    }

    fn sample(n: usize, probs: Vec<f64>) -> ProbSample {
        ProbSample::new("c", n, probs).unwrap()
    }

    #[test]
    fn flat_probabilities() {
        let s = sample(4, vec![1.0 / 16.0; 10]);
        assert_eq!(linear_xeb(&s).unwrap().value, 0.0);
        assert_relative_eq!(log_xeb(&s).unwrap().value, EULER_GAMMA, epsilon = 1e-15);
        let all_heavy = sample(4, vec![0.5; 10]);
        assert_relative_eq!(hog_fidelity(&all_heavy).unwrap().value, 1.0 / LN_2, epsilon = 1e-12);
    }

    #[test]
    fn porter_thomas_limits() {
        let n = 20;
        let d = 1usize << n;
        let ns = 400_000;
        for (ideal, target) in [(false, 0.0), (true, 1.0)] {
            let s = sample(n, pt_sample(d, ns, ideal, 11 + ideal as u64));
            for e in [linear_xeb(&s), log_xeb(&s), hog_fidelity(&s)] {
                let e = e.unwrap();
                assert!(
                    (e.value - target).abs() < 4.0 * e.sigma,
                    "{:?}: {} vs {target} ± {}",
                    e.estimator,
                    e.value,
                    e.sigma
                );
                assert_relative_eq!(e.sigma, e.sigma_theory, max_relative = 0.05);
            }
        }
    }

    #[test]
    fn empty_and_zero_inputs() {
        assert!(linear_xeb(&sample(2, vec![0.25])).is_err());
        assert!(log_xeb(&sample(2, vec![0.25, 0.0])).is_err());
        assert!(ProbSample::new("c", 2, vec![1.5]).is_err());
        assert!(combine_estimates(&[]).is_err());
    }

    #[test]
    fn sigma_ordering_crosses_near_0_32() {
        let s = |f: f64| ((1.0 + 2.0 * f - f * f).sqrt(), (PI * PI / 6.0 - f * f).sqrt());
        for f in [0.0, 0.1, 0.3] {
            let (lin, log) = s(f);
            assert!(log > lin);
        }
        for f in [0.33, 0.5, 1.0] {
            let (lin, log) = s(f);
            assert!(log < lin);
        }
    }

    #[test]
    fn speckle_purity_cases() {
        let d = 1024;
        assert_eq!(speckle_purity(&[vec![1.0 / d as f64; d]]).unwrap().purity, 0.0);
        // Exact PT variance gives purity 1.
        let dd = d as f64;
        let var = (dd - 1.0) / (dd * dd * (dd + 1.0));
        let half = var.sqrt();
        let row: Vec<f64> = (0..d)
            .map(|i| 1.0 / dd + if i % 2 == 0 { half } else { -half })
            .collect();
        assert_relative_eq!(speckle_purity(&[row]).unwrap().purity, 1.0, epsilon = 1e-9);
        assert!(speckle_purity(&[]).is_err());
    }

    #[test]
    fn speckle_purity_of_depolarized_state() {
        let layout = QubitLayout::sycamore53();
        let spec = CircuitSpec::new(10, 14, 5, "ABCDCDAB").unwrap();
        let c = crate::circuit::generate_circuit(&spec, &layout).unwrap();
        let p = probabilities(&c, Precision::Double).unwrap();
        let d = p.len() as f64;
        let rho: Vec<f64> = p.iter().map(|x| 0.7 * x + 0.3 / d).collect();
        let est = speckle_purity(&[rho]).unwrap();
        assert!((est.purity - 0.49).abs() < 0.08, "{}", est.purity);
        let ideal = speckle_purity(&[p]).unwrap();
        assert_relative_eq!(est.purity / ideal.purity, 0.49, epsilon = 1e-9);
    }

    #[test]
    fn decay_fit_exact() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|m| (m as f64, 0.9 * 0.99f64.powi(m))).collect();
        let fit = fit_decay(&pts).unwrap();
        assert_relative_eq!(fit.p_c, 0.99, epsilon = 1e-12);
        assert_relative_eq!(fit.prefactor, 0.9, epsilon = 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!(fit_decay(&[(1.0, 0.5)]).is_err());
        assert!(fit_decay(&[(1.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(fit_decay(&[(1.0, 0.5), (2.0, -0.4)]).is_err());
    }

    #[test]
    fn combine_cases() {
        let e = FidelityEstimate {
            estimator: Estimator::Linear,
            value: 0.3,
            sigma: 0.02,
            sigma_theory: 0.02,
            n_s: 100,
        };
        assert_eq!(combine_estimates(&[e]).unwrap().value, 0.3);
        let e2 = FidelityEstimate { value: 0.5, ..e };
        let c = combine_estimates(&[e, e2]).unwrap();
        assert_relative_eq!(c.value, 0.4, epsilon = 1e-15);
        assert_relative_eq!(c.sigma, 0.02 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn ten_circuit_combination() {
        // Sigma formula at F = 0.00224, N_s = 3e6 per circuit, ten circuits.
        let f: f64 = 0.00224;
        let per = ((1.0 + 2.0 * f - f * f) / 3e6).sqrt();
        let ests: Vec<FidelityEstimate> = (0..10)
            .map(|i| FidelityEstimate {
                estimator: Estimator::Linear,
                value: f + if i % 2 == 0 { 1e-4 } else { -1e-4 },
                sigma: per,
                sigma_theory: per,
                n_s: 3_000_000,
            })
            .collect();
        let c = combine_estimates(&ests).unwrap();
        assert_relative_eq!(c.value, f, epsilon = 1e-12);
        assert_relative_eq!(c.sigma, 1.8e-4, max_relative = 0.03);
    }

    #[test]
    fn predict_fidelity_cases() {
        assert_eq!(predict_fidelity(&[], &[], &[]).unwrap(), 1.0);
        assert_relative_eq!(predict_fidelity(&[0.01], &[], &[]).unwrap(), 0.99, epsilon = 1e-14);
        assert!(predict_fidelity(&[1.0], &[], &[]).is_err());
        let f = predict_fidelity(&vec![0.0015; 1113], &vec![0.0062; 430], &vec![0.038; 53]).unwrap();
        assert_relative_eq!(f, 0.0016643573612232167, max_relative = 1e-12);
        let approx = (-(1113.0 * 0.0015 + 430.0 * 0.0062 + 53.0 * 0.038f64)).exp();
        assert_relative_eq!(f, approx, max_relative = 0.06);
        assert!(f > 0.00224 / 1.5 && f < 0.00224 * 1.5);
    }

    #[test]
    fn measurement_separation() {
        assert_eq!(separate_measurement_fidelity(0.3, 1.0).unwrap(), 0.3);
        assert_relative_eq!(separate_measurement_fidelity(0.5, 0.8).unwrap(), 0.625);
        assert!(separate_measurement_fidelity(0.5, 0.0).is_err());
    }

    #[test]
    fn small_fidelity_ml_matches_likelihood_maximum() {
        let layout = QubitLayout::rectangular(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut probs = Vec::new();
        for seed in 0..40 {
            let c = crate::circuit::generate_circuit(&CircuitSpec::new(2, 8, seed, "E").unwrap(), &layout).unwrap();
            let p = probabilities(&c, Precision::Double).unwrap();
            let f = 0.02;
            let noisy: Vec<f64> = p.iter().map(|x| f * x + (1.0 - f) / 4.0).collect();
            for x in sample_from_probabilities(&noisy, 2000, rng.random()) {
                probs.push(p[x as usize]);
            }
        }
        let s = sample(2, probs);
        let approx = small_fidelity_ml(&s).unwrap();
        let exact = max_likelihood_fidelity(&s).unwrap();
        assert!((approx - exact).abs() < 0.03 * exact.abs(), "{approx} vs {exact}");
    }

    #[test]
    fn small_system_normalization() {
        let layout = QubitLayout::rectangular(1, 2);
        let c = crate::circuit::generate_circuit(&CircuitSpec::new(2, 10, 4, "E").unwrap(), &layout).unwrap();
        let p = probabilities(&c, Precision::Double).unwrap();
        assert_relative_eq!(
            xeb_of_distributions(&p, &p, Normalization::Simulated).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let mixed: Vec<f64> = p.iter().map(|x| 0.6 * x + 0.1).collect();
        assert_relative_eq!(
            xeb_of_distributions(&mixed, &p, Normalization::Simulated).unwrap(),
            0.6,
            epsilon = 1e-12
        );
        assert_relative_eq!(xeb_normalization(&p, Normalization::Haar), 0.6, epsilon = 1e-15);
        let bits = sample_from_probabilities(&p, 50_000, 9);
        let e = small_system_xeb(&p, &bits, Normalization::Simulated).unwrap();
        assert!((e.value - 1.0).abs() < 4.0 * e.sigma);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let m = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2),
            &[0.0, 0.0],
            &NelderMeadOptions {
                tolerance: 1e-14,
                ..Default::default()
            },
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 0.5).abs() < 1e-5);
    }

    fn two_qubit_data(truth: FsimParams, depolarize: f64, ns: usize, seed: u64) -> Vec<TwoQubitXebData> {
        let layout = QubitLayout::rectangular(1, 2);
        let mut params = PairParams::new();
        params.insert((0, 1), truth);
        let mut out = Vec::new();
        for depth in 1..=10 {
            for rep in 0..3 {
                let spec = CircuitSpec::new(2, depth, seed * 1000 + depth as u64 * 10 + rep, "E").unwrap();
                let c = generate_circuit_with_params(&spec, &layout, &params).unwrap();
                let p = probabilities(&c, Precision::Double).unwrap();
                let f = depolarize.powi(depth as i32);
                let noisy: Vec<f64> = p.iter().map(|x| f * x + (1.0 - f) / 4.0).collect();
                let bitstrings = sample_from_probabilities(&noisy, ns, seed + out.len() as u64);
                out.push(TwoQubitXebData { circuit: c, bitstrings });
            }
        }
        out
    }

    fn assert_params_close(fit: &FsimParams, truth: &FsimParams, axes: &[usize], tol: f64) {
        let (a, b) = (fit.to_array(), truth.to_array());
        for &k in axes {
            assert!((a[k] - b[k]).abs() < tol, "param {k}: {} vs {}", a[k], b[k]);
        }
    }

    #[test]
    fn fit_unitary_recovers_parameters() {
        let truth = FsimParams {
            theta: PI / 2.0 + 0.03,
            phi: PI / 6.0 + 0.02,
            delta_plus: 0.01,
            delta_minus: 0.01,
            delta_minus_off: 0.01,
        };
        let data = two_qubit_data(truth, 1.0, 20_000, 1);
        let fit = fit_unitary(&data, FsimParams::sycamore()).unwrap();
        // delta_minus only enters through cos(theta) and is unidentifiable near theta = pi/2.
        assert_params_close(&fit.params, &truth, &[0, 1, 2, 4], 0.005);
        let at_truth = fit_unitary(&data, truth).unwrap();
        assert!(at_truth.objective >= fit.objective - 1e-3);
        assert_params_close(&at_truth.params, &truth, &[0, 1, 2, 4], 0.005);
    }

    #[test]
    fn fit_unitary_recovers_delta_minus_away_from_swap() {
        let truth = FsimParams {
            theta: 1.0,
            phi: PI / 6.0,
            delta_plus: 0.0,
            delta_minus: 0.02,
            delta_minus_off: 0.0,
        };
        let data = two_qubit_data(truth, 1.0, 20_000, 3);
        let start = FsimParams {
            delta_minus: 0.0,
            ..truth
        };
        let fit = fit_unitary(&data, start).unwrap();
        assert_params_close(&fit.params, &truth, &[0, 1, 2, 3, 4], 0.005);
    }

    #[test]
    fn fit_unitary_under_depolarizing_noise() {
        let truth = FsimParams::sycamore();
        let data = two_qubit_data(truth, 0.99, 20_000, 2);
        let fit = fit_unitary(&data, truth).unwrap();
        assert_params_close(&fit.params, &truth, &[0, 1, 2, 4], 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decay_slope_scale_invariant(p in 0.5f64..1.0, a in 0.1f64..2.0, k in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = (1..8).map(|m| (m as f64, a * p.powi(m) * (1.0 + 0.01 * (m as f64).sin()))).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(m, e)| (m, k * e)).collect();
            let f1 = fit_decay(&pts).unwrap();
            let f2 = fit_decay(&scaled).unwrap();
            prop_assert!((f1.p_c - f2.p_c).abs() < 1e-10);
        }

        #[test]
        fn predict_fidelity_monotone_and_symmetric(errs in proptest::collection::vec(0.0f64..0.2, 1..20), bump in 0.0f64..0.1) {
            let f = predict_fidelity(&errs, &[], &[]).unwrap();
            let mut rev = errs.clone();
            rev.reverse();
            prop_assert!((f - predict_fidelity(&[], &rev, &[]).unwrap()).abs() < 1e-12);
            let mut worse = errs.clone();
            worse[0] = (worse[0] + bump).min(0.999);
            prop_assert!(predict_fidelity(&worse, &[], &[]).unwrap() <= f + 1e-15);
        }
    }
}
