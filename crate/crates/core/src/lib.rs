//! Numerical toolkit for Schrodinger potentials of Kato type: special
//! functions, the conjugated-Laplacian fundamental solution, complex
//! geometrical optics (CGO) solutions, a discrete Dirichlet-to-Neumann map
//! on a box and Fourier-mode reconstruction of a potential from boundary data.

pub mod cgo;
pub mod dtn;
pub mod error;
pub mod fourier;
pub mod fundsol;
pub mod kato;
pub mod quad;
pub mod reconstruct;
pub mod specfun;

pub use error::{Error, Result};
pub use num_complex::Complex64;
