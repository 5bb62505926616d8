//! Numeric tolerances. All public entry points take them through [`Tolerances`]
//! so that reports can echo the exact values that were used.

use serde::{Deserialize, Serialize};

/// Root-finder residual on marginal revenue.
pub const TOL_ROOT: f64 = 1e-10;
/// Slack for monotonicity checks on demand.
pub const TOL_MONO: f64 = 1e-9;
/// Slack for concavity checks on revenue.
pub const TOL_CONC: f64 = 1e-9;
/// Relative slack for monotonicity of the binary expression.
pub const TOL_MONO_EXPR: f64 = 1e-8;
/// Relative residual for the two-type spanning fit.
pub const TOL_SPAN: f64 = 1e-6;
/// Simplex sums and coordinates.
pub const TOL_SIMPLEX: f64 = 1e-12;
/// Default validation grid.
pub const GRID_VALIDATE: usize = 512;
/// Default grid for the binary expression and spanning fit.
pub const GRID_EXPR: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub root: f64,
    pub mono: f64,
    pub conc: f64,
    pub mono_expr: f64,
    pub span: f64,
    pub simplex: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: TOL_ROOT,
            mono: TOL_MONO,
            conc: TOL_CONC,
            mono_expr: TOL_MONO_EXPR,
            span: TOL_SPAN,
            simplex: TOL_SIMPLEX,
        }
    }
}
