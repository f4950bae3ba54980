//! Python bindings: circuits, simulation, estimators and cost model.

use num_bigint::BigUint;
use pyo3::exceptions::{PyArithmeticError, PyMemoryError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rqc_core::circuit::{generate_circuit, Circuit, CircuitSpec};
use rqc_core::cost::{self, Algorithm, AmplitudeEncoding, CircuitFamily, CostParams};
use rqc_core::cut::{count_paths, plan_cut, Cut};
use rqc_core::gates;
use rqc_core::layout::QubitLayout;
use rqc_core::noise::{self, Pauli};
use rqc_core::sfa::{self, SfaOptions};
use rqc_core::statevec::{self, Precision};
use rqc_core::stats::{self, PtFamily};
use rqc_core::xeb::{self, Estimator, FidelityEstimate, ProbSample};
use rqc_core::C64;

fn to_py(e: rqc_core::Error) -> PyErr {
    if e.is_resource() {
        PyMemoryError::new_err(e.to_string())
    } else if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = rqc_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn precision(s: &str) -> PyResult<Precision> {
    match s {
        "single" => Ok(Precision::Single),
        "double" => Ok(Precision::Double),
        _ => Err(PyValueError::new_err(format!("unknown precision `{s}`"))),
    }
}

/// A generated random circuit.
#[pyclass(name = "Circuit", module = "rqc", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCircuit {
    inner: Circuit,
}

impl PyCircuit {
    fn cut(&self, layout: Option<&str>, partition: Option<Vec<usize>>) -> PyResult<Cut> {
        let layout = QubitLayout::resolve(layout.unwrap_or(&self.inner.layout_id)).map_err(to_py)?;
        plan_cut(&self.inner, &layout, partition.as_deref()).map_err(to_py)
    }
}

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    #[pyo3(signature = (n, m, seed = 0, sequence = "ABCDCDAB", layout = "sycamore53"))]
    fn generate(n: usize, m: usize, seed: u64, sequence: &str, layout: &str) -> PyResult<Self> {
        let spec = CircuitSpec::new(n, m, seed, sequence).map_err(to_py)?;
        let layout = QubitLayout::resolve(layout).map_err(to_py)?;
        Ok(Self {
            inner: generate_circuit(&spec, &layout).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Circuit::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn two_qubit_count(&self) -> usize {
        self.inner.two_qubit_count()
    }

    #[getter]
    fn single_qubit_count(&self) -> usize {
        self.inner.single_qubit_count()
    }

    #[pyo3(signature = (precision = "double"))]
    fn probabilities(&self, py: Python<'_>, precision: &str) -> PyResult<Vec<f64>> {
        let p = self::precision(precision)?;
        py.detach(|| statevec::probabilities(&self.inner, p)).map_err(to_py)
    }

    fn amplitudes(&self, py: Python<'_>, bitstrings: Vec<u64>) -> PyResult<Vec<C64>> {
        let sv = py.detach(|| statevec::simulate(&self.inner)).map_err(to_py)?;
        let dim = sv.amplitudes().len() as u64;
        if let Some(x) = bitstrings.iter().find(|&&x| x >= dim) {
            return Err(PyValueError::new_err(format!("bitstring {x} out of range")));
        }
        Ok(bitstrings.iter().map(|&x| sv.amplitude(x)).collect())
    }

    /// Samples from F·p + (1 − F)/D.
    #[pyo3(signature = (count, seed = 0, fidelity = 1.0))]
    fn sample(&self, py: Python<'_>, count: usize, seed: u64, fidelity: f64) -> PyResult<Vec<u64>> {
        py.detach(|| {
            let probs = statevec::probabilities(&self.inner, Precision::Double)?;
            noise::depolarizing_sample(&probs, fidelity, count, seed)
        })
        .map_err(to_py)
    }

    #[pyo3(signature = (bitstrings, partition = None, fraction = 1.0, layout = None))]
    fn sfa_amplitudes(
        &self,
        py: Python<'_>,
        bitstrings: Vec<u64>,
        partition: Option<Vec<usize>>,
        fraction: f64,
        layout: Option<&str>,
    ) -> PyResult<Vec<C64>> {
        let cut = self.cut(layout, partition)?;
        let opts = SfaOptions {
            fraction,
            ..SfaOptions::default()
        };
        py.detach(|| sfa::sfa_amplitudes(&self.inner, &cut, &bitstrings, &opts))
            .map(|r| r.amplitudes)
            .map_err(to_py)
    }

    #[pyo3(signature = (partition = None, fuse_wedges = true, layout = None))]
    fn count_paths(&self, partition: Option<Vec<usize>>, fuse_wedges: bool, layout: Option<&str>) -> PyResult<BigUint> {
        let cut = self.cut(layout, partition)?;
        Ok(count_paths(&self.inner, &cut, fuse_wedges))
    }

    /// Copy with a Pauli `axis` ("X", "Y" or "Z") after the single-qubit gate at (cycle, qubit).
    fn inject_pauli(&self, cycle: usize, qubit: usize, axis: &str) -> PyResult<Self> {
        let axis: Pauli = parse(axis)?;
        Ok(Self {
            inner: noise::inject_pauli(&self.inner, cycle, qubit, axis).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Circuit(n={}, m={}, layout={:?})",
            self.inner.n(),
            self.inner.m(),
            self.inner.layout_id
        )
    }
}

fn estimate_dict<'py>(py: Python<'py>, e: &FidelityEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("estimator", format!("{:?}", e.estimator).to_lowercase())?;
    d.set_item("F", e.value)?;
    d.set_item("sigma_empirical", e.sigma)?;
    d.set_item("sigma_theory", e.sigma_theory)?;
    d.set_item("N_s", e.n_s)?;
    Ok(d)
}

/// Fidelity estimate from the ideal probabilities of measured bitstrings.
#[pyfunction]
#[pyo3(signature = (ideal_probs, n, estimator = "linear"))]
fn estimate<'py>(py: Python<'py>, ideal_probs: Vec<f64>, n: usize, estimator: &str) -> PyResult<Bound<'py, PyDict>> {
    let est: Estimator = parse(estimator)?;
    let sample = ProbSample::new("python", n, ideal_probs).map_err(to_py)?;
    estimate_dict(py, &xeb::estimate(&sample, est).map_err(to_py)?)
}

/// Speckle purity of a table of probability distributions.
#[pyfunction]
fn speckle_purity(table: Vec<Vec<f64>>) -> PyResult<f64> {
    xeb::speckle_purity(&table).map(|p| p.purity).map_err(to_py)
}

/// Kolmogorov–Smirnov (statistic, p-value) of D·p values against the depolarized Porter–Thomas law.
#[pyfunction]
#[pyo3(signature = (values, fidelity = 1.0))]
fn ks_porter_thomas(values: Vec<f64>, fidelity: f64) -> PyResult<(f64, f64)> {
    let theory = stats::pt_pdf_and_cdf(PtFamily::Linear, fidelity).map_err(to_py)?;
    let r = stats::ks_test(&values, |x| theory.cdf(x)).map_err(to_py)?;
    Ok((r.d_ks, r.p_value))
}

#[pyfunction]
fn predict_fidelity(single: Vec<f64>, two: Vec<f64>, meas: Vec<f64>) -> PyResult<f64> {
    xeb::predict_fidelity(&single, &two, &meas).map_err(to_py)
}

#[pyfunction]
fn fsim_schmidt_values(theta: f64, phi: f64) -> [f64; 4] {
    gates::fsim_schmidt_values(theta, phi)
}

/// Operator-norm error of the controlled-phase sequence built from fSim(theta, phi).
#[pyfunction]
fn cz_decomposition_error(theta: f64, phi: f64, delta: f64) -> PyResult<f64> {
    gates::decompose_cz_from_fsim(theta, phi, delta)
        .map(|d| d.error())
        .map_err(to_py)
}

#[pyfunction]
fn t_sa(n: usize, m: usize) -> f64 {
    cost::t_sa(n, m, &CostParams::default())
}

#[pyfunction]
#[pyo3(signature = (n, m, family = "supremacy"))]
fn t_sfa(n: usize, m: usize, family: &str) -> PyResult<f64> {
    let family: CircuitFamily = parse(family)?;
    Ok(cost::t_sfa(n, m, family, &CostParams::default()))
}

/// Lower-bound memory in bytes with 2-byte amplitudes.
#[pyfunction]
#[pyo3(signature = (n, algorithm = "sa", cores = 1))]
fn memory_bytes(n: usize, algorithm: &str, cores: u64) -> PyResult<u128> {
    let alg = match algorithm {
        "sa" => Algorithm::Sa,
        "sfa" => Algorithm::Sfa,
        _ => return Err(PyValueError::new_err(format!("unknown algorithm `{algorithm}`"))),
    };
    cost::memory_bytes(n, alg, cores, AmplitudeEncoding::Compact).map_err(to_py)
}

#[pymodule]
fn rqc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCircuit>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(speckle_purity, m)?)?;
    m.add_function(wrap_pyfunction!(ks_porter_thomas, m)?)?;
    m.add_function(wrap_pyfunction!(predict_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(fsim_schmidt_values, m)?)?;
    m.add_function(wrap_pyfunction!(cz_decomposition_error, m)?)?;
    m.add_function(wrap_pyfunction!(t_sa, m)?)?;
    m.add_function(wrap_pyfunction!(t_sfa, m)?)?;
    m.add_function(wrap_pyfunction!(memory_bytes, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_names() {
        assert_eq!(precision("single").unwrap(), Precision::Single);
        assert_eq!(precision("double").unwrap(), Precision::Double);
    }

    #[test]
    fn circuit_wrapper() {
        let c = PyCircuit::generate(6, 4, 1, "ABCDCDAB", "sycamore53").unwrap();
        assert_eq!(c.n(), 6);
        let back = PyCircuit::from_json(&c.to_json()).unwrap();
        assert_eq!(back.inner, c.inner);
        assert!(c.count_paths(None, true, None).unwrap() >= BigUint::from(1u32));
    }
}
