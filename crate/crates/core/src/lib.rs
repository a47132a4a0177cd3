//! Building blocks for matrix-monotonic transceiver optimisation.
//!
//! Complex Hermitian spectral helpers with deterministic conventions, the
//! three right-unitarily-invariant power-constraint families, water-filling
//! variants, and the closed-form optimal structures for each family.

pub mod constraint;
pub mod error;
pub mod linalg;
pub mod majorization;
pub mod random;
pub mod structure;
pub mod tolerance;
pub mod waterfill;

pub use constraint::{PowerConstraint, WeightedTerm};
pub use error::{Error, Result};
pub use linalg::{CMat, C64};
pub use structure::{GainObjective, StructuredSolution};
pub use tolerance::Tolerances;
