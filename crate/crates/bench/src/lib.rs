//! Shared inputs for the criterion benchmarks.

use epitail_core::mvgp::{ExcessVector, FamilyKind, GeneratorFamily};
use epitail_core::simulate::sample_gp;

/// Gumbel generator with clearly distinct components.
pub fn reference_family() -> GeneratorFamily {
    GeneratorFamily::new(FamilyKind::Gumbel, [2.2, 10.4, 3.2], [0.0, 0.84, 0.59]).expect("valid parameters")
}

/// A dataset of the size used in the calibration runs.
pub fn reference_vectors(n: usize) -> Vec<ExcessVector> {
    sample_gp(&reference_family(), n, 17)
}
