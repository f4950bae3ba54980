//! Closed-form runtime and memory estimates for Schrödinger and Schrödinger–Feynman simulation
//! on a hypothetical one-million-core machine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GHZ: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Schrödinger constant in Hz.
    pub c_sa: f64,
    pub c_sfa_verifiable: f64,
    pub c_sfa_supremacy: f64,
    /// Cross gates per cycle per √n.
    pub b: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c_sa: 0.015e6 * GHZ,
            c_sfa_verifiable: 0.0062e6 * GHZ,
            c_sfa_supremacy: 3.3e6 * GHZ,
            b: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitFamily {
    Supremacy,
    Verifiable,
}

impl std::str::FromStr for CircuitFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supremacy" => Ok(Self::Supremacy),
            "verifiable" => Ok(Self::Verifiable),
            _ => Err(Error::InvalidArgument(format!("unknown circuit family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sa,
    Sfa,
}

/// Bytes per complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeEncoding {
    /// The 2-byte lower-bound convention.
    Compact,
    Single,
    Double,
}

impl AmplitudeEncoding {
    pub fn factor(self) -> u128 {
        match self {
            AmplitudeEncoding::Compact => 1,
            AmplitudeEncoding::Single => 4,
            AmplitudeEncoding::Double => 8,
        }
    }
}

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;

/// T_SA = m n 2^n / C_SA seconds.
pub fn t_sa(n: usize, m: usize, params: &CostParams) -> f64 {
    (m * n) as f64 * (n as f64).exp2() / params.c_sa
}

/// T_SFA = 2 · 2^{n/2} · 4^{k B m √n} / C_SFA seconds, with k = 1 (supremacy) or 4/7 (verifiable).
pub fn t_sfa(n: usize, m: usize, family: CircuitFamily, params: &CostParams) -> f64 {
    let (c, k) = match family {
        CircuitFamily::Supremacy => (params.c_sfa_supremacy, 1.0),
        CircuitFamily::Verifiable => (params.c_sfa_verifiable, 4.0 / 7.0),
    };
    let nf = n as f64;
    2.0 * (nf / 2.0).exp2() * 4f64.powf(k * params.b * m as f64 * nf.sqrt()) / c
}

/// Runtime from an explicit path count, at the per-path cost 2 · 2^{n/2} / C_SFA implied by the formula.
pub fn t_sfa_from_paths(n: usize, paths: f64, family: CircuitFamily, params: &CostParams) -> f64 {
    let c = match family {
        CircuitFamily::Supremacy => params.c_sfa_supremacy,
        CircuitFamily::Verifiable => params.c_sfa_verifiable,
    };
    2.0 * (n as f64 / 2.0).exp2() * paths / c
}

/// SA: 2^{n+1} bytes. SFA: cores · 2^{⌈n/2⌉+1} bytes, the larger half of an actual cut.
/// Both are scaled by the encoding factor relative to 2-byte amplitudes.
pub fn memory_bytes(n: usize, algorithm: Algorithm, cores: u64, encoding: AmplitudeEncoding) -> Result<u128> {
    let exp = match algorithm {
        Algorithm::Sa => n + 1,
        Algorithm::Sfa => n.div_ceil(2) + 1,
    };
    if exp > 100 {
        return Err(Error::InvalidArgument(format!(
            "2^{exp} bytes does not fit the estimate range"
        )));
    }
    let base = 1u128 << exp;
    let scale = match algorithm {
        Algorithm::Sa => 1,
        Algorithm::Sfa => cores as u128,
    };
    Ok(base * scale * encoding.factor())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub n: usize,
    pub m: usize,
    pub t_sa_s: f64,
    pub t_sfa_supremacy_s: f64,
    pub t_sfa_verifiable_s: f64,
    pub memory_sa_bytes: f64,
    pub memory_sfa_bytes: f64,
}

/// Cost table over an (n, m) grid for contour plots.
pub fn cost_table(ns: &[usize], ms: &[usize], cores: u64, params: &CostParams) -> Vec<CostRow> {
    let mem = |n, a| {
        memory_bytes(n, a, cores, AmplitudeEncoding::Compact)
            .map(|b| b as f64)
            .unwrap_or(f64::INFINITY)
    };
    ns.iter()
        .flat_map(|&n| {
            ms.iter().map(move |&m| CostRow {
                n,
                m,
                t_sa_s: t_sa(n, m, params),
                t_sfa_supremacy_s: t_sfa(n, m, CircuitFamily::Supremacy, params),
                t_sfa_verifiable_s: t_sfa(n, m, CircuitFamily::Verifiable, params),
                memory_sa_bytes: mem(n, Algorithm::Sa),
                memory_sfa_bytes: mem(n, Algorithm::Sfa),
            })
        })
        .collect()
}

pub fn cost_table_csv(rows: &[CostRow]) -> String {
    let mut s = String::from("n,m,t_sa_s,t_sfa_supremacy_s,t_sfa_verifiable_s,memory_sa_bytes,memory_sfa_bytes\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}\n",
            r.n, r.m, r.t_sa_s, r.t_sfa_supremacy_s, r.t_sfa_verifiable_s, r.memory_sa_bytes, r.memory_sfa_bytes
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{generate_circuit, CircuitSpec};
    use crate::cut::{count_paths, plan_cut};
    use crate::layout::QubitLayout;
    use approx::assert_relative_eq;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        let p = CostParams::default();
        assert_relative_eq!(t_sa(43, 14, &p) / SECONDS_PER_HOUR, 0.1, max_relative = 0.05);
        assert_relative_eq!(
            t_sfa(53, 14, CircuitFamily::Verifiable, &p) / SECONDS_PER_HOUR,
            5.0,
            max_relative = 0.05
        );
        assert_relative_eq!(
            t_sfa(53, 14, CircuitFamily::Supremacy, &p) / SECONDS_PER_YEAR,
            4.0,
            max_relative = 0.05
        );
        assert!(t_sa(30, 14, &p) < t_sa(43, 14, &p) / 1000.0);
    }

    #[test]
    fn sa_ratio() {
        let p = CostParams::default();
        for n in [10, 20, 40] {
            assert_relative_eq!(
                t_sa(n + 1, 14, &p) / t_sa(n, 14, &p),
                2.0 * (n + 1) as f64 / n as f64,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn supremacy_m20_formula_value() {
        // About 1.5e7 years, three orders above the tabulated ~1e4 years for this circuit.
        let y = t_sfa(53, 20, CircuitFamily::Supremacy, &CostParams::default()) / SECONDS_PER_YEAR;
        assert_relative_eq!(y, 1.4997589e7, max_relative = 1e-6);
    }

    #[test]
    fn memory() {
        use AmplitudeEncoding::*;
        assert_eq!(memory_bytes(53, Algorithm::Sa, 1, Compact).unwrap(), 1u128 << 54);
        assert!(memory_bytes(53, Algorithm::Sa, 1, Compact).unwrap() > 3_000_000_000_000_000);
        assert_eq!(memory_bytes(0, Algorithm::Sa, 1, Compact).unwrap(), 2);
        assert_eq!(
            memory_bytes(53, Algorithm::Sfa, 1_000_000, Compact).unwrap(),
            1_000_000u128 << 28
        );
        assert_eq!(memory_bytes(10, Algorithm::Sa, 1, Double).unwrap(), 8 << 11);
        assert!(memory_bytes(200, Algorithm::Sa, 1, Compact).is_err());
    }

    #[test]
    fn path_count_cross_check() {
        let layout = QubitLayout::sycamore53();
        let p = CostParams::default();
        let mut ratios = Vec::new();
        for m in (12..=20).step_by(2) {
            let c = generate_circuit(&CircuitSpec::new(53, m, 1, "ABCDCDAB").unwrap(), &layout).unwrap();
            let cut = plan_cut(&c, &layout, None).unwrap();
            let paths = count_paths(&c, &cut, true).to_f64().unwrap();
            let from_paths = t_sfa_from_paths(53, paths, CircuitFamily::Supremacy, &p);
            ratios.push(t_sfa(53, m, CircuitFamily::Supremacy, &p) / from_paths);
        }
        // The formula exceeds the path-count estimate by 1.5 to 2 orders of magnitude.
        for r in &ratios {
            assert!(*r > 10.0 && *r < 200.0, "{ratios:?}");
        }
    }

    proptest! {
        #[test]
        fn monotone(n in 2usize..60, m in 1usize..40) {
            let p = CostParams::default();
            for f in [CircuitFamily::Supremacy, CircuitFamily::Verifiable] {
                prop_assert!(t_sfa(n + 1, m, f, &p) > t_sfa(n, m, f, &p));
                prop_assert!(t_sfa(n, m + 1, f, &p) > t_sfa(n, m, f, &p));
            }
            prop_assert!(t_sa(n + 1, m, &p) > t_sa(n, m, &p));
            prop_assert!(t_sa(n, m + 1, &p) > t_sa(n, m, &p));
        }
    }
}
