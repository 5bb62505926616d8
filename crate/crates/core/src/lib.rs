//! Welfare effects of market segmentation under third-degree price
//! discrimination.
//!
//! A monopolist faces a finite family of demand curves. A *market* is a
//! distribution over the family and the monopolist charges the price that
//! maximises expected revenue. A *segmentation* splits the aggregate market
//! into atoms, each priced separately. The crate evaluates the weighted
//! surplus `alpha * CS + (1 - alpha) * R` of segmentations, decides whether
//! more information always helps or always hurts, and bounds the rate at
//! which it can do either.

// `!(x > 0.0)` is used deliberately so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod curvature;
pub mod demand;
pub mod error;
pub mod numeric;
pub mod oracles;
pub mod pricing;
pub mod tolerances;
pub mod welfare;

pub use demand::{DemandSpec, DerivStack};
pub use error::{Error, Result};
pub use pricing::{Family, Market};
pub use tolerances::Tolerances;

pub use welfare::{Segmentation, WelfareWeight};

/// Library version, echoed into reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
