//! Three-dimensional generalized Pareto models in the U-representation.
//!
//! A generator `U` with independent components induces the standard-form GP
//! density
//!
//! ```text
//! h(x) = ∫ f_U(x + s) e^s ds / E[exp(max U)],   x with some x_j > 0,
//! ```
//!
//! which is evaluated by one-dimensional quadrature in `s`.

mod density;
mod fit;
mod generator;
mod select;

pub use density::{
    gp_log_density, gp_log_density_general, is_positive_excess, to_standard_margins, ExcessVector, GpDensity,
};
pub use fit::{
    fit_many, fit_mvgp, fit_mvgp_with, log_likelihood, moment_start, FitOptions, MvGpFit, MvGpModel, Submodel,
};
pub use generator::{generator_log_density, log_normalizer, normalizer, FamilyKind, GeneratorFamily};
pub use select::{model_selection, simplify_ladder, standardize, LadderRow, SelectionRow};
