//! Porter–Thomas theory distributions, Kolmogorov–Smirnov tests, bootstrap and drift fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PtFamily {
    /// Density of x = D p.
    Linear,
    /// Density of x = log(D p).
    Log,
}

/// Output-probability density of a depolarized random circuit at fidelity F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPdf {
    pub family: PtFamily,
    pub fidelity: f64,
}

pub fn pt_pdf_and_cdf(family: PtFamily, fidelity: f64) -> Result<TheoryPdf> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::InvalidArgument(format!("fidelity {fidelity} outside [0, 1]")));
    }
    Ok(TheoryPdf { family, fidelity })
}

impl TheoryPdf {
    pub fn pdf(&self, x: f64) -> f64 {
        let f = self.fidelity;
        match self.family {
            PtFamily::Linear if x < 0.0 => 0.0,
            PtFamily::Linear => (f * x + 1.0 - f) * (-x).exp(),
            PtFamily::Log => {
                let ex = x.exp();
                (1.0 + f * (ex - 1.0)) * (x - ex).exp()
            }
        }
    }

    /// Closed form 1 − (1 + F x) e^{−x}; the log family is its pushforward under x → e^x.
    pub fn cdf(&self, x: f64) -> f64 {
        let lin = |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                -(-x).exp_m1() - self.fidelity * x * (-x).exp()
            }
        };
        match self.family {
            PtFamily::Linear => lin(x),
            PtFamily::Log => lin(x.exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_ks: f64,
    pub p_value: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

/// Asymptotic Kolmogorov survival function Q(t) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²t²}.
pub fn kolmogorov_q(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // Jacobi-transformed series converges fast for small t.
        let mut s = 0.0;
        for k in 1..=50 {
            let j = (2 * k - 1) as f64;
            let term = (-(j * j) * std::f64::consts::PI.powi(2) / (8.0 * t * t)).exp();
            s += term;
            if term < 1e-16 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sided one-sample KS test evaluating both edges of every ECDF step.
pub fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if values.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let c = cdf(x);
        d.max((i + 1) as f64 / n - c).max(c - i as f64 / n)
    });
    Ok(KsResult {
        d_ks: d,
        p_value: kolmogorov_q(n.sqrt() * d),
        n: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub distribution: Vec<f64>,
    pub sigma: f64,
}

/// `b` resamples with replacement; resample i draws from its own stream of `seed`.
pub fn bootstrap<F>(values: &[f64], b: usize, statistic: F, seed: u64) -> Result<Bootstrap>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if b < 100 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 100 resamples, got {b}"
        )));
    }
    if values.is_empty() {
        return Err(Error::Empty("bootstrap sample"));
    }
    let n = values.len();
    let distribution: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let resample: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
            statistic(&resample)
        })
        .collect();
    let mean = distribution.iter().sum::<f64>() / b as f64;
    let var = distribution.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok(Bootstrap {
        distribution,
        sigma: var.sqrt(),
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean with the unbiased variance.
pub fn standard_error(values: &[f64]) -> f64 {
    let m = mean(values);
    let n = values.len() as f64;
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

/// Combines independent uncertainties in quadrature.
pub fn quadrature(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub p0: f64,
    pub p1: f64,
    /// Statistical standard error of p0.
    pub sigma_p0: f64,
    pub sigma_p1: f64,
    pub rho: f64,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_p_value: f64,
    /// Standard deviation of the unweighted residuals.
    pub residual_sigma: f64,
    /// `sigma_p0` with the residual spread added in quadrature.
    pub sigma_p0_total: f64,
}

impl DriftFit {
    /// σ_F(t) = [σ_p0² + 2t σ_p0 σ_p1 ρ + σ_p1² t²]^{1/2} using the total σ_p0.
    pub fn sigma_f(&self, t: f64) -> f64 {
        let (a, b) = (self.sigma_p0_total, self.sigma_p1);
        (a * a + 2.0 * t * a * b * self.rho + b * b * t * t).max(0.0).sqrt()
    }

    pub fn fidelity(&self, t: f64) -> f64 {
        self.p0 + self.p1 * t
    }

    /// max σ_F(t)/F(t) over the given times.
    pub fn max_relative_sigma(&self, times: &[f64]) -> f64 {
        times
            .iter()
            .map(|&t| self.sigma_f(t) / self.fidelity(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Weighted straight-line fit F = p0 + p1 t to (t, F, σ_F) points.
pub fn drift_fit(points: &[(f64, f64, f64)]) -> Result<DriftFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument("drift fit needs at least 3 points".into()));
    }
    if points.iter().any(|p| !(p.2 > 0.0)) {
        return Err(Error::InvalidArgument("drift fit needs positive sigmas".into()));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, f, sig) in points {
        let w = sig.powi(-2);
        s += w;
        sx += w * t;
        sy += w * f;
        sxx += w * t * t;
        sxy += w * t * f;
    }
    let delta = s * sxx - sx * sx;
    if delta <= 1e-12 * s * sxx.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument("degenerate time values".into()));
    }
    let p0 = (sxx * sy - sx * sxy) / delta;
    let p1 = (s * sxy - sx * sy) / delta;
    let sigma_p0 = (sxx / delta).sqrt();
    let sigma_p1 = (s / delta).sqrt();
    let rho = -sx / (s * sxx).sqrt();
    let residuals: Vec<f64> = points.iter().map(|&(t, f, _)| f - p0 - p1 * t).collect();
    let chi2 = points
        .iter()
        .zip(&residuals)
        .map(|(p, r)| (r / p.2).powi(2))
        .sum::<f64>();
    let dof = points.len() - 2;
    let chi2_p_value = ChiSquared::new(dof as f64).map(|d| d.sf(chi2)).unwrap_or(f64::NAN);
    let residual_sigma = (residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64).sqrt();
    Ok(DriftFit {
        p0,
        p1,
        sigma_p0,
        sigma_p1,
        rho,
        chi2,
        dof,
        chi2_p_value,
        residual_sigma,
        sigma_p0_total: quadrature(sigma_p0, residual_sigma),
    })
}

/// Histogram with theory overlay: rows (bin_left, bin_right, empirical_density, theory_density).
pub fn histogram_with_theory(values: &[f64], bins: usize, lo: f64, hi: f64, theory: &TheoryPdf) -> Vec<[f64; 4]> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total = values.len().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (a, b) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
            [a, b, c as f64 / total / width, (theory.cdf(b) - theory.cdf(a)) / width]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Exp1, Normal};

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn pdf_limits() {
        let p0 = pt_pdf_and_cdf(PtFamily::Linear, 0.0).unwrap();
        let p1 = pt_pdf_and_cdf(PtFamily::Linear, 1.0).unwrap();
        for x in [0.0, 0.3, 1.0, 4.0] {
            assert_relative_eq!(p0.pdf(x), (-x).exp(), epsilon = 1e-15);
            assert_relative_eq!(p1.pdf(x), x * (-x).exp(), epsilon = 1e-15);
        }
        assert!(pt_pdf_and_cdf(PtFamily::Log, 1.2).is_err());
    }

    #[test]
    fn pdfs_integrate_to_one() {
        for f in [0.0, 0.5, 1.0] {
            let lin = pt_pdf_and_cdf(PtFamily::Linear, f).unwrap();
            let log = pt_pdf_and_cdf(PtFamily::Log, f).unwrap();
            assert_relative_eq!(simpson(|x| lin.pdf(x), 0.0, 60.0, 20_000), 1.0, epsilon = 1e-9);
            assert_relative_eq!(simpson(|x| log.pdf(x), -40.0, 5.0, 40_000), 1.0, epsilon = 1e-9);
            assert_relative_eq!(lin.cdf(1e3), 1.0, epsilon = 1e-12);
            assert_relative_eq!(log.cdf(10.0), 1.0, epsilon = 1e-12);
            for x in [0.5, 1.0, 3.0] {
                assert_relative_eq!(lin.cdf(x), simpson(|t| lin.pdf(t), 0.0, x, 2000), epsilon = 1e-10);
                assert_relative_eq!(
                    log.cdf(x.ln()),
                    simpson(|t| log.pdf(t), -40.0, x.ln(), 40_000),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn log_family_is_pushforward() {
        for f in [0.0, 0.3, 1.0] {
            let lin = pt_pdf_and_cdf(PtFamily::Linear, f).unwrap();
            let log = pt_pdf_and_cdf(PtFamily::Log, f).unwrap();
            for y in [-3.0, -0.5, 0.0, 1.2] {
                let x = f64::exp(y);
                assert_relative_eq!(log.pdf(y), lin.pdf(x) * x, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn kolmogorov_series_values() {
        // Values of the asymptotic distribution, computed independently.
        assert!((kolmogorov_q(1.36) - 0.049).abs() < 0.002);
        assert_relative_eq!(kolmogorov_q(1.36), 0.04946, epsilon = 5e-5);
        assert_relative_eq!(kolmogorov_q(1.0), 0.26999967167735456, epsilon = 1e-10);
        assert_relative_eq!(kolmogorov_q(0.5), 0.9639452436648751, epsilon = 1e-10);
        assert_eq!(kolmogorov_q(0.0), 1.0);
        // Continuity across the branch point.
        assert!((kolmogorov_q(1.0 - 1e-9) - kolmogorov_q(1.0 + 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn ks_edges() {
        // One point at the median: D = 1/2 from either step edge.
        let r = ks_test(&[0.5], |x| x).unwrap();
        assert_relative_eq!(r.d_ks, 0.5);
        let r = ks_test(&[0.0, 1.0], |x| x).unwrap();
        assert_relative_eq!(r.d_ks, 0.5);
        assert!(ks_test(&[], |x| x).is_err());
    }

    #[test]
    fn ks_calibration() {
        let mut passes = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cdf = |x: f64| -(-x).exp_m1();
        for _ in 0..100 {
            let v: Vec<f64> = (0..10_000).map(|_| Exp1.sample(&mut rng)).collect();
            if ks_test(&v, cdf).unwrap().p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 98, "{passes}");
    }

    #[test]
    fn bootstrap_cases() {
        let c = bootstrap(&[2.0; 50], 100, mean, 1).unwrap();
        assert_eq!(c.sigma, 0.0);
        assert!(bootstrap(&[1.0, 2.0], 99, mean, 1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..20_000).map(|_| Exp1.sample(&mut rng)).collect();
        let b = bootstrap(&v, 500, mean, 3).unwrap();
        assert_relative_eq!(b.sigma, standard_error(&v), max_relative = 0.1);
        assert_eq!(b, bootstrap(&v, 500, mean, 3).unwrap());
    }

    #[test]
    fn drift_exact_line() {
        let pts: Vec<(f64, f64, f64)> = (0..6).map(|t| (t as f64, 1.0 - 0.1 * t as f64, 0.01)).collect();
        let fit = drift_fit(&pts).unwrap();
        assert_relative_eq!(fit.p0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.p1, -0.1, epsilon = 1e-12);
        assert!(fit.chi2 < 1e-20);
        assert!(drift_fit(&pts[..2]).is_err());
        assert!(drift_fit(&[(1.0, 0.1, 0.1), (1.0, 0.2, 0.1), (1.0, 0.3, 0.1)]).is_err());
    }

    #[test]
    fn drift_recovers_stability_parameters() {
        let (p0, p1, sigma) = (5.51e-3, -6.87e-5, 1.29e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, sigma).unwrap();
        let pts: Vec<(f64, f64, f64)> = (0..13)
            .map(|i| {
                let t = 17.4 * i as f64 / 12.0;
                (t, p0 + p1 * t + noise.sample(&mut rng), sigma)
            })
            .collect();
        let fit = drift_fit(&pts).unwrap();
        assert!((fit.p0 - p0).abs() < 3.0 * fit.sigma_p0);
        assert!((fit.p1 - p1).abs() < 3.0 * fit.sigma_p1);
        assert!(fit.rho < 0.0 && fit.rho > -1.0);
        let times: Vec<f64> = pts.iter().map(|p| p.0).collect();
        for w in times.windows(2) {
            assert!(fit.sigma_f(w[1]) / fit.fidelity(w[1]) <= fit.sigma_f(w[0]) / fit.fidelity(w[0]) + 1e-15);
        }
        assert!(fit.max_relative_sigma(&times) > 0.0);
        assert_relative_eq!(quadrature(3.0, 4.0), 5.0);
    }

    proptest! {
        #[test]
        fn cdf_monotone(f in 0.0f64..1.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let lin = pt_pdf_and_cdf(PtFamily::Linear, f).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lin.cdf(lo) <= lin.cdf(hi) + 1e-15);
            let log = pt_pdf_and_cdf(PtFamily::Log, f).unwrap();
            prop_assert!(log.cdf(lo - 5.0) <= log.cdf(hi - 5.0) + 1e-15);
        }

        #[test]
        fn ks_bounds(v in proptest::collection::vec(0.0f64..1.0, 1..50)) {
            let r = ks_test(&v, |x| x).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.d_ks));
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
