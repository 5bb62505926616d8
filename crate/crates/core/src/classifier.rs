//! Classification of a family as information-monotonically-bad (IMB),
//! information-monotonically-good (IMG) or neither, for a given welfare
//! weight.
//!
//! For two types the test is the monotonicity of `W'(mu)` expressed as a
//! function of the price `p(mu)` on the interval between the two monopoly
//! prices. Larger families reduce to their two extreme types when every
//! demand curve is a nonnegative combination of the two extreme ones.

use serde::Serialize;

use crate::curvature::x_vector;
use crate::demand::{demand_derivs, revenue_derivs, DemandSpec, DerivStack};
use crate::error::{Error, InclusionFailure, Result};
use crate::pricing::{Family, Market};
use crate::welfare::{v_derivs, ValueLocal, ValueStack, WelfareWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Every refinement weakly lowers the weighted surplus.
    #[serde(rename = "IMB")]
    Imb,
    /// Every refinement weakly raises the weighted surplus.
    #[serde(rename = "IMG")]
    Img,
    /// Both hold: information has no first-order effect (flat within tolerance).
    Neutral,
    NonMonotone,
}

impl Verdict {
    pub fn imb_holds(self) -> bool {
        matches!(self, Verdict::Imb | Verdict::Neutral)
    }

    pub fn img_holds(self) -> bool {
        matches!(self, Verdict::Img | Verdict::Neutral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCondition {
    None,
    PartialInclusion,
    Spanning,
    BinaryExpression,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    /// Price pairs where the expression rises and where it falls.
    PricePairs {
        rising: (f64, f64),
        falling: (f64, f64),
    },
    /// The type worst fitted by the two extreme demand curves.
    Type {
        index: usize,
        residual: f64,
    },
    Inclusion {
        i: usize,
        j: usize,
        kind: InclusionFailure,
    },
}

/// Sampled expression curve.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub prices: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityVerdict {
    pub verdict: Verdict,
    pub failed_condition: FailedCondition,
    pub witness: Option<Witness>,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

impl MonotonicityVerdict {
    fn fail(w: WelfareWeight, failed: FailedCondition, witness: Witness) -> Self {
        Self {
            verdict: Verdict::NonMonotone,
            failed_condition: failed,
            witness: Some(witness),
            alpha: w.alpha(),
            diagnostics: Diagnostics::default(),
        }
    }
}

fn require_binary(family: &Family) -> Result<()> {
    if family.len() != 2 {
        return Err(Error::NotBinary(family.len()));
    }
    Ok(())
}

/// Indices of the low and high monopoly-price types, distinct even on ties.
fn extremes(family: &Family) -> (usize, usize) {
    let lo = family.lowest_type();
    let mut hi = family.highest_type();
    if hi == lo {
        hi = if lo == 0 { 1.min(family.len() - 1) } else { 0 };
    }
    (lo, hi)
}

struct Pair {
    vl: ValueStack,
    vh: ValueStack,
    rl: DerivStack,
    rh: DerivStack,
}

fn pair_at(family: &Family, l: usize, h: usize, p: f64, w: WelfareWeight) -> Result<Pair> {
    Ok(Pair {
        vl: v_derivs(family.spec(l), p, w)?,
        vh: v_derivs(family.spec(h), p, w)?,
        rl: revenue_derivs(family.spec(l), p)?,
        rh: revenue_derivs(family.spec(h), p)?,
    })
}

fn expression_from(x: &Pair) -> f64 {
    // Numerator and denominator multiplied through by R_p(theta_H), which
    // keeps the expression finite at the upper end of the interval.
    let num = x.vl.vp * x.rh.d1 - x.rl.d1 * x.vh.vp;
    let den = x.rl.d2 * x.rh.d1 - x.rl.d1 * x.rh.d2;
    x.vh.v - x.vl.v + num / den * (x.rl.d1 - x.rh.d1)
}

/// Derivative of the two-type value function in the weight on the high
/// type, written as a function of the price it induces:
///
/// `V_H - V_L + [V_p,L - r V_p,H] / [R_pp,L - r R_pp,H] (R_p,L - R_p,H)`
/// with `r = R_p,L / R_p,H`.
pub fn binary_expression(family: &Family, p: f64, w: WelfareWeight) -> Result<f64> {
    require_binary(family)?;
    let (l, h) = extremes(family);
    let x = pair_at(family, l, h, p, w)?;
    let slack = family.tolerances().root;
    if x.rl.d1 > slack || x.rh.d1 < -slack {
        return Err(Error::SignConditionViolated(format!(
            "R_p(theta_L) = {:e}, R_p(theta_H) = {:e} at p = {p}",
            x.rl.d1, x.rh.d1
        )));
    }
    Ok(expression_from(&x))
}

/// Price derivative of [`binary_expression`] at price `p`, computed in closed
/// form as `2 x(mu(p))` with the market ordered (low, high).
pub fn expression_slope(family: &Family, p: f64, w: WelfareWeight) -> Result<f64> {
    require_binary(family)?;
    let (l, h) = extremes(family);
    let sub = family.subfamily(&[l, h]);
    let (rl, rh) = (sub.revenue(0, p)?.d1, sub.revenue(1, p)?.d1);
    let mu = if rl == rh { 0.0 } else { (rl / (rl - rh)).clamp(0.0, 1.0) };
    let x = x_vector(&sub, &Market::new(vec![1.0 - mu, mu])?, w)?;
    Ok(2.0 * x[0])
}

/// Monotonicity test of [`binary_expression`] on `grid_n` interior prices.
pub fn check_binary(family: &Family, w: WelfareWeight, grid_n: usize) -> Result<MonotonicityVerdict> {
    require_binary(family)?;
    if let Some(v) = family_inclusion_failure(family) {
        return Ok(MonotonicityVerdict::fail(w, FailedCondition::PartialInclusion, v));
    }
    let (l, h) = extremes(family);
    let (pl, ph) = (family.monopoly_prices()[l], family.monopoly_prices()[h]);
    let done = |verdict, witness, diagnostics| MonotonicityVerdict {
        verdict,
        failed_condition: if verdict == Verdict::NonMonotone {
            FailedCondition::BinaryExpression
        } else {
            FailedCondition::None
        },
        witness,
        alpha: w.alpha(),
        diagnostics,
    };
    if ph - pl <= 1e-12 * ph.abs().max(1.0) {
        return Ok(done(Verdict::Neutral, None, Diagnostics::default()));
    }
    let n = grid_n.max(3);
    let prices: Vec<f64> = (1..=n).map(|k| pl + (ph - pl) * k as f64 / (n + 1) as f64).collect();
    let mut values = Vec::with_capacity(n);
    let mut scale = 0.0f64;
    for &p in &prices {
        let x = pair_at(family, l, h, p, w)?;
        let e = expression_from(&x);
        scale = scale.max(e.abs()).max(x.vl.v.abs()).max(x.vh.v.abs());
        values.push(e);
    }
    let tol = family.tolerances().mono_expr * scale;
    let mut rising = (0.0, f64::NEG_INFINITY, 0usize);
    let mut falling = (0.0, f64::INFINITY, 0usize);
    for k in 0..n - 1 {
        let d = values[k + 1] - values[k];
        if d > rising.1 {
            rising = (d, d, k);
        }
        if d < falling.1 {
            falling = (d, d, k);
        }
    }
    let decreasing = rising.1 <= tol;
    let increasing = falling.1 >= -tol;
    let diagnostics = Diagnostics { prices: prices.clone(), values };
    Ok(match (decreasing, increasing) {
        (true, true) => done(Verdict::Neutral, None, diagnostics),
        (true, false) => done(Verdict::Imb, None, diagnostics),
        (false, true) => done(Verdict::Img, None, diagnostics),
        (false, false) => {
            let pair = |k: usize| (prices[k], prices[k + 1]);
            let witness = Witness::PricePairs { rising: pair(rising.2), falling: pair(falling.2) };
            done(Verdict::NonMonotone, Some(witness), diagnostics)
        }
    })
}

fn family_inclusion_failure(family: &Family) -> Option<Witness> {
    crate::pricing::check_partial_inclusion(family).violations.first().map(|v| Witness::Inclusion {
        i: v.i,
        j: v.j,
        kind: v.kind,
    })
}

/// Per-type coefficients of the fit `D ~ f1 D_L + f2 D_H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanningFit {
    pub low_type: usize,
    pub high_type: usize,
    pub coeffs: Vec<(f64, f64)>,
    /// Residual of each type's fit relative to the demand scale.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// The unconstrained least-squares fit had a negative coefficient.
    pub unconstrained_negative: Vec<bool>,
}

/// Fits every demand curve by a nonnegative combination of the two extreme
/// ones on `grid_n` prices spanning the two extreme monopoly prices.
pub fn spanning_fit(family: &Family, grid_n: usize) -> Result<SpanningFit> {
    if family.len() < 2 {
        return Err(Error::NotBinary(family.len()));
    }
    let (l, h) = extremes(family);
    let (pl, ph) = (family.monopoly_prices()[l], family.monopoly_prices()[h]);
    let n = grid_n.max(2);
    let prices: Vec<f64> =
        if ph > pl { (0..n).map(|k| pl + (ph - pl) * k as f64 / (n - 1) as f64).collect() } else { vec![pl] };
    let sample =
        |i: usize| -> Result<Vec<f64>> { prices.iter().map(|&p| Ok(demand_derivs(family.spec(i), p)?.d0)).collect() };
    let a = sample(l)?;
    let b = sample(h)?;
    let mut coeffs = Vec::with_capacity(family.len());
    let mut residuals = Vec::with_capacity(family.len());
    let mut negative = Vec::with_capacity(family.len());
    for i in 0..family.len() {
        let y = sample(i)?;
        let (raw1, raw2) = least_squares2(&a, &b, &y);
        let noise = 1e-8 * raw1.abs().max(raw2.abs());
        let neg = raw1 < -noise || raw2 < -noise;
        let mut best = (raw1.max(0.0), raw2.max(0.0));
        if raw1 < noise || raw2 < noise {
            // Refit on one basis curve when a coefficient is clipped.
            let one = |u: &[f64]| (dot(u, &y) / dot(u, u)).max(0.0);
            for c in [(one(&a), 0.0), (0.0, one(&b))] {
                if misfit(&a, &b, &y, c) < misfit(&a, &b, &y, best) {
                    best = c;
                }
            }
        }
        let scale = a.iter().chain(&b).chain(&y).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        residuals.push(misfit(&a, &b, &y, best) / scale);
        coeffs.push(best);
        negative.push(neg);
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(SpanningFit { low_type: l, high_type: h, coeffs, residuals, max_residual, unconstrained_negative: negative })
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(x, y)| x * y).sum()
}

fn misfit(a: &[f64], b: &[f64], y: &[f64], c: (f64, f64)) -> f64 {
    a.iter().zip(b).zip(y).map(|((a, b), y)| (y - c.0 * a - c.1 * b).abs()).fold(0.0, f64::max)
}

/// Two-column least squares by Gram-Schmidt; collinear columns put all the
/// weight on the first.
fn least_squares2(a: &[f64], b: &[f64], y: &[f64]) -> (f64, f64) {
    let na = dot(a, a).sqrt();
    if na == 0.0 {
        let nb = dot(b, b);
        return (0.0, if nb > 0.0 { dot(b, y) / nb } else { 0.0 });
    }
    let q1: Vec<f64> = a.iter().map(|x| x / na).collect();
    let r12 = dot(&q1, b);
    let bp: Vec<f64> = b.iter().zip(&q1).map(|(b, q)| b - r12 * q).collect();
    let r22 = dot(&bp, &bp).sqrt();
    if r22 <= 1e-12 * dot(b, b).sqrt() {
        return (dot(&q1, y) / na, 0.0);
    }
    let q2: Vec<f64> = bp.iter().map(|x| x / r22).collect();
    let c2 = dot(&q2, y) / r22;
    let c1 = (dot(&q1, y) - r12 * c2) / na;
    (c1, c2)
}

/// Verdict for an arbitrary family: partial inclusion, then spanning, then
/// the two-type test on the extreme pair.
pub fn classify(family: &Family, w: WelfareWeight, grid_n: usize) -> Result<MonotonicityVerdict> {
    if family.len() == 1 {
        return Ok(MonotonicityVerdict {
            verdict: Verdict::Neutral,
            failed_condition: FailedCondition::None,
            witness: None,
            alpha: w.alpha(),
            diagnostics: Diagnostics::default(),
        });
    }
    if let Some(v) = family_inclusion_failure(family) {
        return Ok(MonotonicityVerdict::fail(w, FailedCondition::PartialInclusion, v));
    }
    if family.len() > 2 {
        let fit = spanning_fit(family, grid_n)?;
        if fit.max_residual > family.tolerances().span {
            let index = fit.residuals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
            return Ok(MonotonicityVerdict::fail(
                w,
                FailedCondition::Spanning,
                Witness::Type { index, residual: fit.max_residual },
            ));
        }
    }
    let (l, h) = extremes(family);
    check_binary(&family.subfamily(&[l, h]), w, grid_n)
}

/// The three addends of the second derivative of the two-type value
/// function in the weight on the high type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreeEffects {
    /// `p_mu^2 E[V_pp]`.
    pub within: f64,
    /// `2 p_mu (V_p(theta_H) - V_p(theta_L))`.
    pub cross: f64,
    /// `p_mumu E[V_p]`.
    pub curvature: f64,
    pub total: f64,
}

pub fn three_effects(family: &Family, m: &Market, w: WelfareWeight) -> Result<ThreeEffects> {
    require_binary(family)?;
    let (l, h) = extremes(family);
    let sub = family.subfamily(&[l, h]);
    let mu = m.weights()[h];
    let v = ValueLocal::at(&sub, &Market::new(vec![1.0 - mu, mu])?, w)?;
    let pm = v.local.gradient()[0];
    let pmm = v.local.hessian()[(0, 0)];
    let within = pm * pm * v.e_vpp;
    let cross = 2.0 * pm * (v.values[1].vp - v.values[0].vp);
    let curvature = pmm * v.e_vp;
    Ok(ThreeEffects { within, cross, curvature, total: within + cross + curvature })
}

/// One sufficient condition and whether each of its two directions held on
/// the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub imb: bool,
    pub img: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientReport {
    pub imb_ok: bool,
    pub img_ok: bool,
    pub conditions: Vec<ConditionCheck>,
}

/// Pointwise conditions that sign all three effects at once:
/// concave (convex) surplus per type, `V_p(theta_H) <= (>=) V_p(theta_L)`,
/// and `R_ppp >= (<=) 0` with `R_pp(theta_H) >= (<=) R_pp(theta_L)`.
pub fn sufficient_conditions(family: &Family, w: WelfareWeight, grid_n: usize) -> Result<SufficientReport> {
    require_binary(family)?;
    let (l, h) = extremes(family);
    let (pl, ph) = (family.monopoly_prices()[l], family.monopoly_prices()[h]);
    let n = grid_n.max(1);
    let prices: Vec<f64> =
        if ph > pl { (1..=n).map(|k| pl + (ph - pl) * k as f64 / (n + 1) as f64).collect() } else { Vec::new() };
    let (mut c1, mut c2, mut c3) = ([true; 2], [true; 2], [true; 2]);
    for &p in &prices {
        let x = pair_at(family, l, h, p, w)?;
        let s = 1e-12 * (x.vl.v.abs() + x.vh.v.abs()).max(1e-300);
        let sr = 1e-12 * (x.rl.d2.abs() + x.rh.d2.abs()).max(1e-300);
        c1[0] &= x.vl.vpp <= s && x.vh.vpp <= s;
        c1[1] &= x.vl.vpp >= -s && x.vh.vpp >= -s;
        c2[0] &= x.vh.vp <= x.vl.vp + s;
        c2[1] &= x.vh.vp >= x.vl.vp - s;
        c3[0] &= x.rl.d3 >= -sr && x.rh.d3 >= -sr && x.rh.d2 >= x.rl.d2 - sr;
        c3[1] &= x.rl.d3 <= sr && x.rh.d3 <= sr && x.rh.d2 <= x.rl.d2 + sr;
    }
    let conditions = vec![
        ConditionCheck { name: "surplus_curvature", imb: c1[0], img: c1[1] },
        ConditionCheck { name: "marginal_surplus_order", imb: c2[0], img: c2[1] },
        ConditionCheck { name: "revenue_third_derivative", imb: c3[0], img: c3[1] },
    ];
    Ok(SufficientReport {
        imb_ok: conditions.iter().all(|c| c.imb),
        img_ok: conditions.iter().all(|c| c.img),
        conditions,
    })
}

/// Classifies at each weight and checks that IMG persists toward smaller
/// weights and IMB toward larger ones.
pub fn alpha_monotone_scan(family: &Family, alphas: &[f64], grid_n: usize) -> Result<Vec<MonotonicityVerdict>> {
    if alphas.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::CorollaryViolation("weights must be sorted ascending".into()));
    }
    let verdicts =
        alphas.iter().map(|&a| classify(family, WelfareWeight::new(a)?, grid_n)).collect::<Result<Vec<_>>>()?;
    for (i, vi) in verdicts.iter().enumerate() {
        for vj in &verdicts[i + 1..] {
            if vj.verdict.img_holds() && !vi.verdict.img_holds() {
                return Err(Error::CorollaryViolation(format!(
                    "IMG at alpha={} but {:?} at alpha={}",
                    vj.alpha, vi.verdict, vi.alpha
                )));
            }
            if vi.verdict.imb_holds() && !vj.verdict.imb_holds() {
                return Err(Error::CorollaryViolation(format!(
                    "IMB at alpha={} but {:?} at alpha={}",
                    vi.alpha, vj.verdict, vj.alpha
                )));
            }
        }
    }
    Ok(verdicts)
}

/// `(2 alpha - 1) p + alpha p D0'(p) / R0''(p)` for a base curve `D0`.
pub fn affine_family_expression(base: &DemandSpec, p: f64, w: WelfareWeight) -> Result<f64> {
    let d = demand_derivs(base, p)?;
    let r = DerivStack::revenue_of(p, d);
    if r.d2.abs() < crate::tolerances::TOL_CONC {
        return Err(Error::DegenerateCurvature(r.d2));
    }
    let a = w.alpha();
    Ok((2.0 * a - 1.0) * p + a * p * d.d1 / r.d2)
}

/// Outcome of the shortcut test for families `a(theta) D0 + b(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineReport {
    pub verdict: Verdict,
    /// IMB holds for every weight at or above this value, if any.
    pub imb_from: Option<f64>,
    /// IMG holds for every weight at or below this value, if any.
    pub img_until: Option<f64>,
    pub diagnostics: Diagnostics,
}

fn common_base(family: &Family) -> Result<&DemandSpec> {
    let mut base: Option<&DemandSpec> = None;
    for s in family.specs() {
        match s.curve() {
            crate::demand::Curve::AffineOfBase { base: b, .. } => match base {
                None => base = Some(b),
                Some(prev) if prev == b.as_ref() => {}
                Some(_) => return Err(Error::NotAffineFamily("types use different base curves".into())),
            },
            _ => return Err(Error::NotAffineFamily(format!("{} is not an affine transform", s.label()))),
        }
    }
    base.ok_or_else(|| Error::NotAffineFamily("empty family".into()))
}

/// Shortcut classification of an affine family from the monotonicity of
/// [`affine_family_expression`] between the extreme monopoly prices, plus
/// the weight thresholds implied by its slope `alpha (2 + g') - 1` with
/// `g = p D0' / R0''`.
pub fn classify_affine(family: &Family, w: WelfareWeight, grid_n: usize) -> Result<AffineReport> {
    let base = common_base(family)?;
    let (l, h) = extremes(family);
    let (pl, ph) = (family.monopoly_prices()[l], family.monopoly_prices()[h]);
    let n = grid_n.max(3);
    let prices: Vec<f64> =
        if ph > pl { (0..n).map(|k| pl + (ph - pl) * k as f64 / (n - 1) as f64).collect() } else { vec![pl] };
    let values = prices.iter().map(|&p| affine_family_expression(base, p, w)).collect::<Result<Vec<_>>>()?;
    let scale = values.iter().chain(&prices).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = family.tolerances().mono_expr * scale;
    let up = values.windows(2).all(|d| d[1] - d[0] >= -tol);
    let down = values.windows(2).all(|d| d[1] - d[0] <= tol);
    let verdict = match (up, down) {
        (true, true) => Verdict::Neutral,
        (true, false) => Verdict::Imb,
        (false, true) => Verdict::Img,
        (false, false) => Verdict::NonMonotone,
    };
    let mut hmin = f64::INFINITY;
    let mut inv_max = f64::NEG_INFINITY;
    let mut inv_min_pos = f64::INFINITY;
    for &p in &prices {
        let hval = 2.0 + g_slope(base, p)?;
        hmin = hmin.min(hval);
        if hval > 0.0 {
            inv_max = inv_max.max(1.0 / hval);
            inv_min_pos = inv_min_pos.min(1.0 / hval);
        }
    }
    let imb_from = if hmin > 0.0 && inv_max <= 1.0 { Some(inv_max) } else { None };
    let img_until = if inv_min_pos.is_finite() { Some(inv_min_pos.min(1.0)) } else { Some(1.0) };
    Ok(AffineReport { verdict, imb_from, img_until, diagnostics: Diagnostics { prices, values } })
}

/// Derivative of `g = p D'/R''`.
fn g_slope(base: &DemandSpec, p: f64) -> Result<f64> {
    let d = demand_derivs(base, p)?;
    let r = DerivStack::revenue_of(p, d);
    if r.d2.abs() < crate::tolerances::TOL_CONC {
        return Err(Error::DegenerateCurvature(r.d2));
    }
    Ok(((d.d1 + p * d.d2) * r.d2 - p * d.d1 * r.d3) / (r.d2 * r.d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::welfare::value_function;

    fn ces_pair(t1: f64, t2: f64) -> Family {
        Family::new(vec![
            DemandSpec::constant_elasticity(1.0, t1, 4.0).unwrap(),
            DemandSpec::constant_elasticity(1.0, t2, 4.0).unwrap(),
        ])
        .unwrap()
    }

    fn half() -> WelfareWeight {
        WelfareWeight::new(0.5).unwrap()
    }

    #[test]
    fn expression_is_derivative_of_value_in_high_weight() {
        // Declared (high exponent, low exponent): the high-price type is index 1.
        let f = ces_pair(2.0, 1.6);
        let w = half();
        for mu in [0.2, 0.5, 0.8] {
            let m = Market::new(vec![1.0 - mu, mu]).unwrap();
            let p = crate::pricing::optimal_price(&f, &m).unwrap();
            let e = binary_expression(&f, p, w).unwrap();
            let h = 1e-5;
            let wv = |x: f64| value_function(&f, &Market::new(vec![1.0 - x, x]).unwrap(), w).unwrap();
            let fd = (wv(mu + h) - wv(mu - h)) / (2.0 * h);
            assert!((e - fd).abs() < 1e-8, "mu={mu}: {e} vs {fd}");
        }
    }

    #[test]
    fn expression_rejects_prices_outside_interval() {
        let f = ces_pair(2.0, 1.6);
        assert!(matches!(binary_expression(&f, 0.5, half()), Err(Error::SignConditionViolated(_))));
        assert!(matches!(
            binary_expression(&ces_pair(2.0, 1.6).subfamily(&[0]), 1.2, half()),
            Err(Error::NotBinary(1))
        ));
    }

    #[test]
    fn ces_threshold_examples() {
        let v = check_binary(&ces_pair(2.0, 1.6), half(), 400).unwrap();
        assert_eq!(v.verdict, Verdict::Imb);
        assert_eq!(v.failed_condition, FailedCondition::None);
        assert_eq!(v.diagnostics.values.len(), 400);
        let v = check_binary(&ces_pair(2.15, 1.6), half(), 400).unwrap();
        assert_eq!(v.verdict, Verdict::NonMonotone);
        assert_eq!(v.failed_condition, FailedCondition::BinaryExpression);
        assert!(matches!(v.witness, Some(Witness::PricePairs { .. })));
    }

    #[test]
    fn identical_types_pass_both_ways() {
        let v = check_binary(&ces_pair(1.7, 1.7), half(), 400).unwrap();
        assert_eq!(v.verdict, Verdict::Neutral);
        assert!(v.verdict.imb_holds() && v.verdict.img_holds());
    }

    #[test]
    fn slope_matches_difference_of_expression() {
        let f = ces_pair(2.15, 1.6);
        let w = half();
        let p = 1.3;
        let h = 1e-6;
        let fd = (binary_expression(&f, p + h, w).unwrap() - binary_expression(&f, p - h, w).unwrap()) / (2.0 * h);
        assert!((expression_slope(&f, p, w).unwrap() - fd).abs() < 1e-7);
    }

    #[test]
    fn spanning_of_affine_family_is_exact() {
        let base = DemandSpec::power_unit(1.5).unwrap();
        let f = Family::new(vec![
            DemandSpec::affine_of_base(1.0, 0.0, base.clone()).unwrap(),
            DemandSpec::affine_of_base(2.0, 0.3, base.clone()).unwrap(),
            DemandSpec::affine_of_base(1.5, 0.15, base).unwrap(),
        ])
        .unwrap();
        let fit = spanning_fit(&f, 400).unwrap();
        assert!(fit.max_residual <= 1e-10, "{}", fit.max_residual);
        assert!(fit.unconstrained_negative.iter().all(|n| !n), "{fit:?}");
    }

    #[test]
    fn power_unit_triple_is_not_spanned() {
        let f = Family::new([0.1, 0.5, 0.9].iter().map(|&t| DemandSpec::power_unit(t).unwrap()).collect()).unwrap();
        let fit = spanning_fit(&f, 400).unwrap();
        assert!(fit.max_residual > 1e-6);
        let v = classify(&f, WelfareWeight::new(1.0).unwrap(), 400).unwrap();
        assert_eq!(v.failed_condition, FailedCondition::Spanning);
    }

    #[test]
    fn ces_triple_fails_spanning() {
        let f = Family::new(
            [1.5, 1.7, 2.0].iter().map(|&t| DemandSpec::constant_elasticity(1.0, t, 4.0).unwrap()).collect(),
        )
        .unwrap();
        let v = classify(&f, half(), 400).unwrap();
        assert_eq!(v.verdict, Verdict::NonMonotone);
        assert_eq!(v.failed_condition, FailedCondition::Spanning);
        assert!(matches!(v.witness, Some(Witness::Type { index: 1, .. })));
    }

    #[test]
    fn excluded_pair_fails_inclusion() {
        let f =
            Family::new(vec![DemandSpec::linear_shift(1.0, 0.0).unwrap(), DemandSpec::linear_shift(3.0, 0.0).unwrap()])
                .unwrap();
        let v = classify(&f, half(), 400).unwrap();
        assert_eq!(v.failed_condition, FailedCondition::PartialInclusion);
        assert!(matches!(v.witness, Some(Witness::Inclusion { kind: InclusionFailure::FullExclusion, .. })));
    }

    #[test]
    fn three_effects_sum_to_second_difference() {
        let f = ces_pair(2.0, 1.5);
        let w = half();
        let mu = 0.4;
        let e = three_effects(&f, &Market::new(vec![1.0 - mu, mu]).unwrap(), w).unwrap();
        let h = 1e-3;
        let wv = |x: f64| value_function(&f, &Market::new(vec![1.0 - x, x]).unwrap(), w).unwrap();
        let fd = (wv(mu + h) - 2.0 * wv(mu) + wv(mu - h)) / (h * h);
        assert!((e.total - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "{} vs {fd}", e.total);
        let same = three_effects(&ces_pair(1.7, 1.7), &Market::uniform(2), w).unwrap();
        assert_eq!((same.within, same.cross, same.curvature), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_shift_sufficient_conditions() {
        let ls = |a: f64, c: f64| DemandSpec::linear_shift(a, c).unwrap();
        // Distinct intercepts so the price interval is not empty.
        let img = Family::new(vec![ls(1.0, 0.2), ls(1.2, 0.0)]).unwrap();
        let r = sufficient_conditions(&img, WelfareWeight::new(1.0).unwrap(), 200).unwrap();
        assert!(r.img_ok && !r.imb_ok);
        assert_eq!(check_binary(&img, WelfareWeight::new(1.0).unwrap(), 400).unwrap().verdict, Verdict::Img);
        let imb = Family::new(vec![ls(1.0, 0.0), ls(1.2, 0.2)]).unwrap();
        let r = sufficient_conditions(&imb, half(), 200).unwrap();
        assert!(r.imb_ok);
        assert_eq!(check_binary(&imb, half(), 400).unwrap().verdict, Verdict::Imb);
    }

    #[test]
    fn alpha_scan_on_ces_pair() {
        let f = ces_pair(2.0, 1.5);
        let v = alpha_monotone_scan(&f, &[0.25, 0.5, 0.75, 1.0], 400).unwrap();
        assert!(v[1..].iter().all(|x| x.verdict.imb_holds()));
        assert!(alpha_monotone_scan(&f, &[0.5, 0.25], 400).is_err());
    }

    #[test]
    fn density_expression_is_linear_in_price() {
        // c4 = 1: p (2 alpha - 1 + alpha) + alpha c2/c3.
        let base = DemandSpec::density_power(1.0, 1.0, 1.0, 1.0, 0.2, 4.0).unwrap();
        let w = WelfareWeight::new(0.3).unwrap();
        for p in [0.5, 1.0, 2.5] {
            let e = affine_family_expression(&base, p, w).unwrap();
            assert!((e - (p * (0.6 - 1.0 + 0.3) + 0.3)).abs() < 1e-12, "{e}");
        }
    }
}
