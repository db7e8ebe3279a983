//! Kato-class potentials: descriptors, norms and moduli, mollification and
//! the small-plus-bounded splitting.

mod norm;
mod potential;

pub use norm::*;
pub use potential::*;
