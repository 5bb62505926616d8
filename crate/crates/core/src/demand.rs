//! Demand curves, their derivatives, revenue, consumer surplus and monopoly
//! prices.
//!
//! Every curve lives on a support `[lo, hi]`. Outside the support demand is
//! extended flat: `D(p) = D(lo)` below and `D(p) = 0` above, with vanishing
//! derivatives in both regions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{integrate, solve_bracketed, Pchip};
use crate::tolerances::Tolerances;

const QUAD_TOL: f64 = 1e-13;

/// Value and first three price derivatives of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DerivStack {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl DerivStack {
    fn is_finite(&self) -> bool {
        self.d0.is_finite() && self.d1.is_finite() && self.d2.is_finite() && self.d3.is_finite()
    }

    /// Stack of `p * D(p)` given the stack of `D`.
    pub fn revenue_of(p: f64, d: DerivStack) -> DerivStack {
        DerivStack { d0: p * d.d0, d1: d.d0 + p * d.d1, d2: 2.0 * d.d1 + p * d.d2, d3: 3.0 * d.d2 + p * d.d3 }
    }
}

/// Demand sampled at price points and joined by a monotone cubic.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    spline: Pchip,
    fd_step: f64,
}

/// Functional form of a demand curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// `D = a - p + c/p`.
    LinearShift {
        a: f64,
        c: f64,
    },
    /// `D = (c + p)^(-theta)`.
    ConstantElasticity {
        c: f64,
        theta: f64,
    },
    /// `D = 1 - p^theta`.
    PowerUnit {
        theta: f64,
    },
    /// `D(p) = integral of c1 (c2 + c3 z)^c4 / z^2 from p to hi`.
    DensityPower {
        c1: f64,
        c2: f64,
        c3: f64,
        c4: f64,
    },
    /// Smoothed unit demand: with `s = (p - value + width)/width`,
    /// `D = 1 - s^3`, falling from 1 to 0 across the support.
    CubicRamp {
        value: f64,
        width: f64,
    },
    /// `D = scale * D0 + shift` for a base curve `D0`.
    AffineOfBase {
        scale: f64,
        shift: f64,
        base: Box<DemandSpec>,
    },
    Tabulated(Tabulated),
}

/// A demand curve together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSpec {
    curve: Curve,
    lo: f64,
    hi: f64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameters(msg.into())
}

impl DemandSpec {
    /// `D = a - p + c/p` on `[1e-3 a, a]`.
    pub fn linear_shift(a: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(c >= 0.0 && c.is_finite()) {
            return Err(invalid(format!("linear shift needs a > 0, c >= 0 (a={a}, c={c})")));
        }
        Ok(Self { curve: Curve::LinearShift { a, c }, lo: 1e-3 * a, hi: a })
    }

    /// `D = (c + p)^(-theta)` on `[0, hi]`; `hi` may be infinite.
    pub fn constant_elasticity(c: f64, theta: f64, hi: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(theta > 0.0 && theta.is_finite()) || !(hi > 0.0) {
            return Err(invalid(format!(
                "constant elasticity needs c > 0, theta > 0, hi > 0 (c={c}, theta={theta}, hi={hi})"
            )));
        }
        Ok(Self { curve: Curve::ConstantElasticity { c, theta }, lo: 0.0, hi })
    }

    /// Largest price at which constant-elasticity revenue is still concave.
    pub fn ces_concave_limit(c: f64, theta: f64) -> f64 {
        if theta > 1.0 {
            2.0 * c / (theta - 1.0)
        } else {
            f64::INFINITY
        }
    }

    /// `D = 1 - p^theta` on `[0, 1]`.
    pub fn power_unit(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid(format!("power unit needs theta > 0 (theta={theta})")));
        }
        Ok(Self { curve: Curve::PowerUnit { theta }, lo: 0.0, hi: 1.0 })
    }

    /// Demand whose density is `c1 (c2 + c3 p)^c4 / p^2` on `[lo, hi]`.
    pub fn density_power(c1: f64, c2: f64, c3: f64, c4: f64, lo: f64, hi: f64) -> Result<Self> {
        if ![c1, c2, c3, c4, lo, hi].iter().all(|v| v.is_finite()) || !(c1 > 0.0) || !(lo > 0.0) || !(hi > lo) {
            return Err(invalid("density power needs finite c, c1 > 0 and 0 < lo < hi"));
        }
        if c2 + c3 * lo <= 0.0 || c2 + c3 * hi <= 0.0 {
            return Err(invalid("density power needs c2 + c3 p > 0 on the support"));
        }
        Ok(Self { curve: Curve::DensityPower { c1, c2, c3, c4 }, lo, hi })
    }

    /// Smoothed unit demand for a good worth `value`, spread over `width`.
    pub fn cubic_ramp(value: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(value - width >= 0.0) || !value.is_finite() {
            return Err(invalid(format!("cubic ramp needs 0 < width <= value (value={value}, width={width})")));
        }
        Ok(Self { curve: Curve::CubicRamp { value, width }, lo: value - width, hi: value })
    }

    /// `D = scale * D0 + shift` on the support of `base`.
    pub fn affine_of_base(scale: f64, shift: f64, base: DemandSpec) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !shift.is_finite() {
            return Err(invalid(format!("affine transform needs scale > 0 (scale={scale})")));
        }
        if matches!(base.curve, Curve::AffineOfBase { .. }) {
            return Err(invalid("affine transforms do not nest"));
        }
        if !base.hi.is_finite() {
            return Err(invalid("affine transforms need a bounded base support"));
        }
        let end = base.curve_stack(base.hi)?.d0;
        if scale * end + shift < 0.0 {
            return Err(invalid("affine transform makes demand negative on the support"));
        }
        let (lo, hi) = (base.lo, base.hi);
        Ok(Self { curve: Curve::AffineOfBase { scale, shift, base: Box::new(base) }, lo, hi })
    }

    /// Monotone spline through `(price, quantity)` pairs.
    pub fn tabulated(prices: Vec<f64>, quantities: Vec<f64>) -> Result<Self> {
        if prices.len() < 2 || prices.len() != quantities.len() {
            return Err(invalid("tabulated demand needs at least two price-quantity pairs"));
        }
        if prices[0] < 0.0 || prices.iter().chain(&quantities).any(|v| !v.is_finite()) {
            return Err(invalid("tabulated prices must be finite and nonnegative"));
        }
        if quantities.iter().any(|q| *q < 0.0) || quantities.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("tabulated quantities must be nonnegative and nonincreasing"));
        }
        let (lo, hi) = (prices[0], prices[prices.len() - 1]);
        let spline =
            Pchip::new(prices, quantities).ok_or_else(|| invalid("tabulated prices must increase strictly"))?;
        let fd_step = 1e-4 * (hi - lo);
        Ok(Self { curve: Curve::Tabulated(Tabulated { spline, fd_step }), lo, hi })
    }

    /// Replace the support. The curve must stay defined on it.
    pub fn with_support(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(invalid(format!("support needs 0 <= lo < hi (lo={lo}, hi={hi})")));
        }
        match &self.curve {
            Curve::PowerUnit { .. } | Curve::Tabulated(_) | Curve::AffineOfBase { .. } | Curve::CubicRamp { .. } => {
                if lo < self.lo || hi > self.hi {
                    return Err(invalid("support may only shrink for this curve"));
                }
            }
            Curve::LinearShift { .. } | Curve::DensityPower { .. } => {
                if lo <= 0.0 || !hi.is_finite() {
                    return Err(invalid("support must be bounded and exclude zero for this curve"));
                }
            }
            Curve::ConstantElasticity { .. } => {}
        }
        if let Curve::DensityPower { c2, c3, .. } = self.curve {
            if c2 + c3 * lo <= 0.0 || c2 + c3 * hi <= 0.0 {
                return Err(invalid("density power needs c2 + c3 p > 0 on the support"));
            }
        }
        self.lo = lo;
        self.hi = hi;
        Ok(self)
    }

    pub fn curve(&self) -> &Curve {
        &self.curve
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        let body = match &self.curve {
            Curve::LinearShift { a, c } => format!("linear_shift(a={a}, c={c})"),
            Curve::ConstantElasticity { c, theta } => format!("constant_elasticity(c={c}, theta={theta})"),
            Curve::PowerUnit { theta } => format!("power_unit(theta={theta})"),
            Curve::DensityPower { c1, c2, c3, c4 } => format!("density_power(c1={c1}, c2={c2}, c3={c3}, c4={c4})"),
            Curve::CubicRamp { value, width } => format!("cubic_ramp(value={value}, width={width})"),
            Curve::AffineOfBase { scale, shift, base } => format!("{scale}*[{}]+{shift}", base.label()),
            Curve::Tabulated(t) => format!("tabulated({} points)", t.spline.domain().1),
        };
        format!("{body} on [{}, {}]", self.lo, self.hi)
    }

    /// Derivative stack of the curve's own formula, ignoring the support.
    fn curve_stack(&self, p: f64) -> Result<DerivStack> {
        let s = match &self.curve {
            Curve::LinearShift { a, c } => DerivStack {
                d0: a - p + c / p,
                d1: -1.0 - c / (p * p),
                d2: 2.0 * c / (p * p * p),
                d3: -6.0 * c / (p * p * p * p),
            },
            Curve::ConstantElasticity { c, theta } => {
                let u = c + p;
                let t = *theta;
                let d0 = u.powf(-t);
                DerivStack {
                    d0,
                    d1: -t * d0 / u,
                    d2: t * (t + 1.0) * d0 / (u * u),
                    d3: -t * (t + 1.0) * (t + 2.0) * d0 / (u * u * u),
                }
            }
            Curve::PowerUnit { theta } => {
                let t = *theta;
                // Terms with a vanishing coefficient are dropped so that integer
                // exponents do not produce 0 * inf at p = 0.
                let term = |coef: f64, e: f64| if coef == 0.0 { 0.0 } else { coef * p.powf(e) };
                DerivStack {
                    d0: 1.0 - p.powf(t),
                    d1: term(-t, t - 1.0),
                    d2: term(-t * (t - 1.0), t - 2.0),
                    d3: term(-t * (t - 1.0) * (t - 2.0), t - 3.0),
                }
            }
            Curve::DensityPower { .. } => {
                let (f, f1, f2) = self.density(p);
                let hi = self.hi;
                let d0 = integrate(|z| self.density(z).0, p, hi, QUAD_TOL);
                DerivStack { d0, d1: -f, d2: -f1, d3: -f2 }
            }
            Curve::CubicRamp { value, width } => {
                let s = (p - (value - width)) / width;
                DerivStack {
                    d0: 1.0 - s * s * s,
                    d1: -3.0 * s * s / width,
                    d2: -6.0 * s / (width * width),
                    d3: -6.0 / (width * width * width),
                }
            }
            Curve::AffineOfBase { scale, shift, base } => {
                let b = base.curve_stack(p)?;
                DerivStack { d0: scale * b.d0 + shift, d1: scale * b.d1, d2: scale * b.d2, d3: scale * b.d3 }
            }
            Curve::Tabulated(t) => {
                let h = t.fd_step;
                // Keep the stencil inside the knot range.
                let x = p.clamp(self.lo + 2.0 * h, self.hi - 2.0 * h);
                let (d0, d1) = t.spline.eval(p);
                let (_, dm) = t.spline.eval(x - h);
                let (_, dp) = t.spline.eval(x + h);
                let (_, dc) = t.spline.eval(x);
                DerivStack { d0, d1, d2: (dp - dm) / (2.0 * h), d3: (dp - 2.0 * dc + dm) / (h * h) }
            }
        };
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFiniteValue(format!("demand derivatives of {} at p={p}", self.label())))
        }
    }

    /// Density `f = -D'` of the density-power curve and its first two derivatives.
    fn density(&self, p: f64) -> (f64, f64, f64) {
        let Curve::DensityPower { c1, c2, c3, c4 } = self.curve else {
            return (f64::NAN, f64::NAN, f64::NAN);
        };
        let u = c2 + c3 * p;
        let g = u.powf(c4);
        let g1 = c4 * c3 * u.powf(c4 - 1.0);
        let g2 = c4 * (c4 - 1.0) * c3 * c3 * u.powf(c4 - 2.0);
        let (q, q1, q2) = (p.powi(-2), -2.0 * p.powi(-3), 6.0 * p.powi(-4));
        (c1 * g * q, c1 * (g1 * q + g * q1), c1 * (g2 * q + 2.0 * g1 * q1 + g * q2))
    }
}

fn check_price(spec: &DemandSpec, p: f64) -> Result<()> {
    if !p.is_finite() || p < 0.0 {
        let (lo, hi) = spec.support();
        return Err(Error::OutOfSupport { price: p, lo, hi });
    }
    Ok(())
}

/// Demand and its first three derivatives at `p`, with the flat extension
/// outside the support.
pub fn demand_derivs(spec: &DemandSpec, p: f64) -> Result<DerivStack> {
    check_price(spec, p)?;
    if p > spec.hi {
        return Ok(DerivStack::default());
    }
    if p < spec.lo {
        let d0 = spec.curve_stack(spec.lo)?.d0;
        return Ok(DerivStack { d0, ..DerivStack::default() });
    }
    spec.curve_stack(p)
}

/// Revenue `p D(p)` and its first three derivatives.
pub fn revenue_derivs(spec: &DemandSpec, p: f64) -> Result<DerivStack> {
    Ok(DerivStack::revenue_of(p, demand_derivs(spec, p)?))
}

/// Consumer surplus: the integral of demand from `p` to the top of the support.
pub fn consumer_surplus(spec: &DemandSpec, p: f64) -> Result<f64> {
    check_price(spec, p)?;
    let (lo, hi) = spec.support();
    if p >= hi {
        return Ok(0.0);
    }
    if p < lo {
        let d_lo = spec.curve_stack(lo)?.d0;
        return Ok(consumer_surplus(spec, lo)? + d_lo * (lo - p));
    }
    let v = surplus_on(spec, p, hi)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue(format!("consumer surplus of {} at p={p}", spec.label())))
    }
}

/// Integral of the curve formula over `[p, hi]` for `lo <= p <= hi`.
fn surplus_on(spec: &DemandSpec, p: f64, hi: f64) -> Result<f64> {
    Ok(match &spec.curve {
        Curve::LinearShift { a, c } => a * (hi - p) - 0.5 * (hi * hi - p * p) + c * (hi / p).ln(),
        Curve::ConstantElasticity { c, theta } => {
            if (theta - 1.0).abs() < 1e-12 {
                ((c + hi) / (c + p)).ln()
            } else {
                let tail = if hi.is_finite() {
                    (c + hi).powf(1.0 - theta)
                } else if *theta > 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                ((c + p).powf(1.0 - theta) - tail) / (theta - 1.0)
            }
        }
        Curve::PowerUnit { theta } => (hi - p) - (hi.powf(theta + 1.0) - p.powf(theta + 1.0)) / (theta + 1.0),
        Curve::DensityPower { .. } => integrate(|z| (z - p) * spec.density(z).0, p, hi, QUAD_TOL),
        Curve::CubicRamp { value, width } => {
            let to_s = |z: f64| (z - (value - width)) / width;
            let e = |t: f64| t - 0.25 * t * t * t * t;
            width * (e(to_s(hi)) - e(to_s(p)))
        }
        Curve::AffineOfBase { scale, shift, base } => scale * surplus_on(base, p, hi)? + shift * (hi - p),
        Curve::Tabulated(t) => integrate(|z| t.spline.eval(z).0, p, hi, QUAD_TOL),
    })
}

/// Price maximising revenue on the support.
pub fn monopoly_price(spec: &DemandSpec, tol: &Tolerances) -> Result<f64> {
    let (lo, hi) = spec.support();
    let rp = |p: f64| -> Result<(f64, f64)> {
        let r = DerivStack::revenue_of(p, spec.curve_stack(p)?);
        Ok((r.d1, r.d2))
    };
    // Some curves have infinite slope at the bottom of the support; start a
    // hair inside it instead.
    let width = if hi.is_finite() { hi - lo } else { 1.0 + lo };
    let mut a = lo;
    let mut fa = rp(a).map(|v| v.0).unwrap_or(f64::NAN);
    let mut nudge = 1e-14;
    while !fa.is_finite() && nudge < 1e-6 {
        a = lo + nudge * width;
        fa = rp(a).map(|v| v.0).unwrap_or(f64::NAN);
        nudge *= 10.0;
    }
    if !fa.is_finite() {
        return Err(Error::NonFiniteValue(format!("marginal revenue of {} near p={lo}", spec.label())));
    }
    if fa <= 0.0 {
        return Err(Error::NoInteriorRoot(format!(
            "marginal revenue of {} is nonpositive at the bottom of the support",
            spec.label()
        )));
    }
    let mut b = hi;
    if !b.is_finite() {
        b = (2.0 * a).max(1.0);
        while rp(b)?.0 >= 0.0 {
            b *= 2.0;
            if b > 1e12 {
                return Err(Error::NoInteriorRoot(format!("revenue of {} keeps rising", spec.label())));
            }
        }
    }
    let fb = rp(b)?.0;
    if fb >= 0.0 {
        return Err(Error::NoInteriorRoot(format!(
            "marginal revenue of {} is nonnegative at the top of the support",
            spec.label()
        )));
    }
    let root = solve_bracketed(|p| rp(p).unwrap_or((f64::NAN, f64::NAN)), a, b, tol.root)
        .ok_or_else(|| Error::RootNotFound(format!("monopoly price of {}", spec.label())))?;
    Ok(root.x)
}

/// Result of one regularity check on a price grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Price where the check is tightest (or fails worst).
    pub worst_price: f64,
    pub worst_value: f64,
}

/// Per-type validation of the regularity conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub label: String,
    pub nonnegative: CheckOutcome,
    pub decreasing: CheckOutcome,
    pub concave_revenue: CheckOutcome,
    pub unique_interior_optimum: bool,
    pub monopoly_price: Option<f64>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks demand positivity and monotonicity, strict revenue concavity and a
/// unique interior monopoly price on `grid_n` midpoints of the support.
///
/// Unbounded supports are checked up to ten times the larger of the monopoly
/// price and one.
pub fn validate_assumption1(spec: &DemandSpec, grid_n: usize, tol: &Tolerances) -> ValidationReport {
    let (lo, hi) = spec.support();
    let pstar = monopoly_price(spec, tol);
    let top = if hi.is_finite() { hi } else { lo + 10.0 * pstar.as_ref().copied().unwrap_or(1.0).max(1.0) };
    let n = grid_n.max(2);
    let grid: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) / n as f64 * (top - lo)).collect();
    let mut failures = Vec::new();

    let mut nonneg = CheckOutcome { passed: true, worst_price: grid[0], worst_value: f64::INFINITY };
    let mut decr = CheckOutcome { passed: true, worst_price: grid[0], worst_value: f64::NEG_INFINITY };
    let mut conc = CheckOutcome { passed: true, worst_price: grid[0], worst_value: f64::NEG_INFINITY };
    let mut sign_changes = 0usize;
    let mut prev_sign = 0i8;
    for &p in &grid {
        let d = match spec.curve_stack(p) {
            Ok(d) => d,
            Err(e) => {
                failures.push(format!("evaluation failed at p={p}: {e}"));
                continue;
            }
        };
        let r = DerivStack::revenue_of(p, d);
        if d.d0 < nonneg.worst_value {
            nonneg.worst_value = d.d0;
            nonneg.worst_price = p;
        }
        if d.d1 > decr.worst_value {
            decr.worst_value = d.d1;
            decr.worst_price = p;
        }
        if r.d2 > conc.worst_value {
            conc.worst_value = r.d2;
            conc.worst_price = p;
        }
        let s = if r.d1 > 0.0 {
            1
        } else if r.d1 < 0.0 {
            -1
        } else {
            0
        };
        if s != 0 {
            if prev_sign != 0 && s != prev_sign {
                sign_changes += 1;
            }
            prev_sign = s;
        }
    }
    nonneg.passed = nonneg.worst_value >= -tol.mono;
    decr.passed = decr.worst_value <= tol.mono;
    conc.passed = conc.worst_value <= tol.conc;
    if !nonneg.passed {
        failures.push(format!("demand is negative ({:e}) at p={}", nonneg.worst_value, nonneg.worst_price));
    }
    if !decr.passed {
        failures.push(format!("demand is increasing (slope {:e}) at p={}", decr.worst_value, decr.worst_price));
    }
    if !conc.passed {
        failures.push(format!(
            "revenue is not concave (second derivative {:e}) at p={}",
            conc.worst_value, conc.worst_price
        ));
    }
    let unique = pstar.is_ok() && sign_changes == 1;
    match &pstar {
        Err(e) => failures.push(format!("no interior monopoly price: {e}")),
        Ok(_) if sign_changes != 1 => {
            failures.push(format!("marginal revenue changes sign {sign_changes} times on the grid"))
        }
        Ok(_) => {}
    }
    ValidationReport {
        label: spec.label(),
        nonnegative: nonneg,
        decreasing: decr,
        concave_revenue: conc,
        unique_interior_optimum: unique,
        monopoly_price: pstar.ok(),
        failures,
    }
}
