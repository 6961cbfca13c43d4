//! Analytics for corpora annotated by divergent annotators.
//!
//! The toolkit measures how strongly annotator groups polarize on individual
//! items, searches for the annotator split with maximal average polarization,
//! builds group-wise gold standards, augments training data by polarization,
//! trains a deterministic reference classifier, and fuses group classifiers
//! with an inclusive (OR) ensemble.
//!
//! Numeric kernels (agreement, polarization, partition scoring) are generic
//! over the scalar type: `f64` for everyday use, `Ratio<i64>` when exact
//! rational arithmetic is wanted (the agreement and polarization values are
//! rationals by construction).

pub mod agreement;
pub mod augment;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod evalens;
pub mod goldstd;
pub mod partition;
pub mod pipeline;
pub mod polarization;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact rational scalar; agreement and P-index values are rationals, so this
/// instantiation is lossless.
pub type Exact = num_rational::Ratio<i64>;

/// Polarization score over `f64`, the default working type.
pub type PolarizationScoreF64 = polarization::PolarizationScore<f64>;
/// Polarization score over exact rationals.
pub type PolarizationScoreExact = polarization::PolarizationScore<Exact>;
/// Agreement score over `f64`.
pub type AgreementScoreF64 = agreement::AgreementScore<f64>;
/// Agreement score over exact rationals.
pub type AgreementScoreExact = agreement::AgreementScore<Exact>;
