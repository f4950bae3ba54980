//! Random quantum circuits on planar grids: generation, Schrödinger and
//! Schrödinger-Feynman simulation, cross-entropy benchmarking and cost models.

pub mod circuit;
pub mod cost;
pub mod cut;
pub mod error;
pub mod formats;
pub mod gates;
pub mod layout;
pub mod noise;
pub mod prng;
pub mod sfa;
pub mod statevec;
pub mod stats;
pub mod xeb;

pub use circuit::{generate_circuit, Circuit, CircuitSpec, Variant};
pub use cut::{count_paths, plan_cut, Cut};
pub use error::{Error, Result};
pub use gates::{FsimParams, Unitary2, Unitary4};
pub use layout::{PatternId, QubitLayout};
pub use sfa::{sfa_amplitudes, sfa_sample, SfaOptions};
pub use statevec::{simulate, StateVector};

pub type C64 = num_complex::Complex64;
