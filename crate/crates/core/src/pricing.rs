//! Families of demand types, markets over them and the optimal uniform price.
//!
//! Reduced coordinates drop the weight of the first declared type: a market
//! `(mu_1, ..., mu_n)` is addressed by `(mu_2, ..., mu_n)` and
//! `mu_1 = 1 - sum`. Gradients and Hessians are taken in these coordinates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::demand::{monopoly_price, revenue_derivs, DemandSpec, DerivStack};
use crate::error::{Error, InclusionFailure, Result};
use crate::numeric::{golden_max, solve_bracketed};
use crate::tolerances::Tolerances;

const FALLBACK_GRID: usize = 2048;

/// How prices are found when partial inclusion fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingRule {
    /// First-order condition only; families without partial inclusion are rejected.
    #[default]
    FirstOrder,
    /// Fall back to a dense price grid when partial inclusion fails.
    GridFallback,
}

/// A finite family of demand types with cached monopoly prices.
#[derive(Debug, Clone)]
pub struct Family {
    specs: Vec<DemandSpec>,
    monopoly: Vec<f64>,
    inclusion: InclusionReport,
    rule: PricingRule,
    tol: Tolerances,
}

impl Family {
    pub fn new(specs: Vec<DemandSpec>) -> Result<Self> {
        Self::with_tolerances(specs, Tolerances::default())
    }

    /// Every type needs an interior monopoly price; partial inclusion is
    /// checked here and enforced when prices are computed.
    pub fn with_tolerances(specs: Vec<DemandSpec>, tol: Tolerances) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::EmptyFamily);
        }
        let monopoly = specs.iter().map(|s| monopoly_price(s, &tol)).collect::<Result<Vec<_>>>()?;
        let inclusion = inclusion_check(&specs, &monopoly);
        Ok(Self { specs, monopoly, inclusion, rule: PricingRule::FirstOrder, tol })
    }

    /// Allow grid pricing for families that violate partial inclusion.
    pub fn with_fallback_grid(mut self) -> Self {
        self.rule = PricingRule::GridFallback;
        self
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[DemandSpec] {
        &self.specs
    }

    pub fn spec(&self, i: usize) -> &DemandSpec {
        &self.specs[i]
    }

    pub fn monopoly_prices(&self) -> &[f64] {
        &self.monopoly
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn rule(&self) -> PricingRule {
        self.rule
    }

    /// Index of the type with the lowest monopoly price (first on ties).
    pub fn lowest_type(&self) -> usize {
        argbest(&self.monopoly, |a, b| a < b)
    }

    /// Index of the type with the highest monopoly price (first on ties).
    pub fn highest_type(&self) -> usize {
        argbest(&self.monopoly, |a, b| a > b)
    }

    /// Sub-family of the given types, in the given order.
    pub fn subfamily(&self, idx: &[usize]) -> Family {
        let specs: Vec<DemandSpec> = idx.iter().map(|&i| self.specs[i].clone()).collect();
        let monopoly: Vec<f64> = idx.iter().map(|&i| self.monopoly[i]).collect();
        let inclusion = inclusion_check(&specs, &monopoly);
        Family { specs, monopoly, inclusion, rule: self.rule, tol: self.tol }
    }

    /// Revenue stack of type `i` at price `p`.
    pub fn revenue(&self, i: usize, p: f64) -> Result<DerivStack> {
        revenue_derivs(&self.specs[i], p)
    }

    /// Expected revenue `sum mu_i R(p, theta_i)`.
    pub fn expected_revenue(&self, m: &Market, p: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (i, &w) in m.weights().iter().enumerate() {
            if w > 0.0 {
                acc += w * self.revenue(i, p)?.d0;
            }
        }
        Ok(acc)
    }
}

fn argbest(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut k = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if better(x, v[k]) {
            k = i;
        }
    }
    k
}

/// Type `i`'s monopoly price misses type `j`'s support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InclusionViolation {
    pub i: usize,
    pub j: usize,
    pub kind: InclusionFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InclusionReport {
    pub holds: bool,
    pub violations: Vec<InclusionViolation>,
}

impl InclusionReport {
    /// The first violation as an error, if any.
    pub fn to_result(&self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::PartialInclusionViolated { i: v.i, j: v.j, kind: v.kind }),
        }
    }
}

fn inclusion_check(specs: &[DemandSpec], monopoly: &[f64]) -> InclusionReport {
    let mut violations = Vec::new();
    for (i, &p) in monopoly.iter().enumerate() {
        for (j, sj) in specs.iter().enumerate() {
            let (lo_j, hi_j) = sj.support();
            let kind = if p > hi_j {
                Some(InclusionFailure::FullExclusion)
            } else if p < lo_j {
                Some(InclusionFailure::FullInclusion)
            } else {
                None
            };
            if let Some(kind) = kind {
                violations.push(InclusionViolation { i, j, kind });
            }
        }
    }
    InclusionReport { holds: violations.is_empty(), violations }
}

/// Every type's monopoly price lies in every other type's support.
pub fn check_partial_inclusion(family: &Family) -> InclusionReport {
    family.inclusion.clone()
}

/// A probability vector over the family, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Market(Vec<f64>);

impl Market {
    /// Tiny negative entries (above `-1e-14`) are clamped to zero; the sum
    /// must be one within `1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMarket("empty weight vector".into()));
        }
        let mut w = weights;
        for x in w.iter_mut() {
            if !x.is_finite() || *x < -1e-14 {
                return Err(Error::InvalidMarket(format!("weight {x} is negative or not finite")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMarket(format!("weights sum to {s}")));
        }
        Ok(Self(w))
    }

    /// Market from reduced coordinates `(mu_2, ..., mu_n)`.
    pub fn from_reduced(reduced: &[f64]) -> Result<Self> {
        let base = 1.0 - reduced.iter().sum::<f64>();
        let mut w = Vec::with_capacity(reduced.len() + 1);
        w.push(base);
        w.extend_from_slice(reduced);
        Self::new(w)
    }

    /// Point mass on type `i` of `n`.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    /// Equal weights.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reduced(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0[1..])
    }

    /// Squared Euclidean norm of the full weight vector.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::InvalidMarket(format!("market has {} weights, family has {n} types", self.0.len())));
        }
        Ok(())
    }
}

/// How a price was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMethod {
    FirstOrder,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceSolution {
    pub price: f64,
    pub method: PriceMethod,
    /// Grid pricing found several revenue-maximising prices and took the lowest.
    pub tie_break: bool,
}

/// Revenue-maximising uniform price for the market.
pub fn optimal_price(family: &Family, m: &Market) -> Result<f64> {
    solve_price(family, m).map(|s| s.price)
}

/// Optimal price with a record of the method used.
pub fn solve_price(family: &Family, m: &Market) -> Result<PriceSolution> {
    m.check_len(family.len())?;
    if family.inclusion.holds {
        first_order_price(family, m)
    } else if family.rule == PricingRule::GridFallback {
        grid_price(family, m)
    } else {
        family.inclusion.to_result()?;
        first_order_price(family, m)
    }
}

fn first_order_price(family: &Family, m: &Market) -> Result<PriceSolution> {
    let w = m.weights();
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let lo = support.iter().map(|&i| family.monopoly[i]).fold(f64::INFINITY, f64::min);
    let hi = support.iter().map(|&i| family.monopoly[i]).fold(f64::NEG_INFINITY, f64::max);
    let done = |price| Ok(PriceSolution { price, method: PriceMethod::FirstOrder, tie_break: false });
    if hi <= lo {
        return done(lo);
    }
    let mr = |p: f64| -> Result<(f64, f64)> {
        let (mut g, mut dg) = (0.0, 0.0);
        for &i in &support {
            let r = family.revenue(i, p)?;
            g += w[i] * r.d1;
            dg += w[i] * r.d2;
        }
        Ok((g, dg))
    };
    if mr(lo)?.0 <= 0.0 {
        return done(lo);
    }
    if mr(hi)?.0 >= 0.0 {
        return done(hi);
    }
    let root = solve_bracketed(|p| mr(p).unwrap_or((f64::NAN, f64::NAN)), lo, hi, family.tol.root)
        .ok_or_else(|| Error::RootNotFound(format!("mixture first-order condition on [{lo}, {hi}]")))?;
    done(root.x)
}

fn grid_price(family: &Family, m: &Market) -> Result<PriceSolution> {
    let lo = family.specs.iter().map(|s| s.support().0).fold(f64::INFINITY, f64::min);
    let pmax = family.monopoly.iter().copied().fold(0.0, f64::max);
    let hi = family
        .specs
        .iter()
        .map(|s| if s.support().1.is_finite() { s.support().1 } else { 4.0 * pmax })
        .fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / FALLBACK_GRID as f64;
    let grid: Vec<f64> = (0..=FALLBACK_GRID).map(|k| lo + k as f64 * step).collect();
    let vals = grid.iter().map(|&p| family.expected_revenue(m, p)).collect::<Result<Vec<_>>>()?;
    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-3 * best.abs().max(1e-300);
    let rev = |p: f64| family.expected_revenue(m, p).unwrap_or(f64::NEG_INFINITY);
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for k in 0..grid.len() {
        let left = if k > 0 { vals[k - 1] } else { f64::NEG_INFINITY };
        let right = if k + 1 < grid.len() { vals[k + 1] } else { f64::NEG_INFINITY };
        if vals[k] >= best - slack && vals[k] >= left && vals[k] >= right {
            let a = grid[k.saturating_sub(1)];
            let b = grid[(k + 1).min(grid.len() - 1)];
            let x = golden_max(rev, a, b, 200);
            let (x, v) = if rev(x) >= vals[k] { (x, rev(x)) } else { (grid[k], vals[k]) };
            cands.push((x, v));
        }
    }
    let top = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let tie_tol = 1e-12 * top.abs().max(1e-300);
    let mut winners: Vec<f64> = cands.iter().filter(|c| c.1 >= top - tie_tol).map(|c| c.0).collect();
    winners.sort_by(f64::total_cmp);
    let price = winners[0];
    let tie_break = winners.iter().any(|&x| x - price > 2.0 * step);
    Ok(PriceSolution { price, method: PriceMethod::Grid, tie_break })
}

/// Price and per-type revenue stacks at a market, with the mixture
/// curvature needed by the first-order-condition calculus.
#[derive(Debug, Clone)]
pub struct Local {
    pub price: f64,
    pub revenue: Vec<DerivStack>,
    pub e_rpp: f64,
    pub e_rppp: f64,
}

impl Local {
    pub fn at(family: &Family, m: &Market) -> Result<Self> {
        family.inclusion.to_result()?;
        let price = optimal_price(family, m)?;
        let revenue = (0..family.len()).map(|i| family.revenue(i, price)).collect::<Result<Vec<_>>>()?;
        let w = m.weights();
        let e_rpp = revenue.iter().zip(w).map(|(r, w)| w * r.d2).sum::<f64>();
        let e_rppp = revenue.iter().zip(w).map(|(r, w)| w * r.d3).sum::<f64>();
        if !(e_rpp.abs() >= family.tol.conc) {
            return Err(Error::DegenerateCurvature(e_rpp));
        }
        Ok(Self { price, revenue, e_rpp, e_rppp })
    }

    /// Reduced price gradient.
    pub fn gradient(&self) -> DVector<f64> {
        let r1 = self.revenue[0].d1;
        DVector::from_iterator(self.revenue.len() - 1, self.revenue[1..].iter().map(|r| -(r.d1 - r1) / self.e_rpp))
    }

    /// `R_pp(theta_i) - R_pp(theta_1)` for the non-base types.
    pub fn delta_rpp(&self) -> DVector<f64> {
        let r1 = self.revenue[0].d2;
        DVector::from_iterator(self.revenue.len() - 1, self.revenue[1..].iter().map(|r| r.d2 - r1))
    }

    /// Reduced price Hessian.
    pub fn hessian(&self) -> DMatrix<f64> {
        let g = self.gradient();
        let dr = self.delta_rpp();
        let h = &g * g.transpose() * self.e_rppp + &dr * g.transpose() + &g * dr.transpose();
        h / (-self.e_rpp)
    }
}

/// Gradient of the optimal price in reduced coordinates.
pub fn price_gradient(family: &Family, m: &Market) -> Result<DVector<f64>> {
    Ok(Local::at(family, m)?.gradient())
}

/// Hessian of the optimal price in reduced coordinates.
pub fn price_hessian(family: &Family, m: &Market) -> Result<DMatrix<f64>> {
    Ok(Local::at(family, m)?.hessian())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ces(theta: f64) -> DemandSpec {
        DemandSpec::constant_elasticity(1.0, theta, 4.0).unwrap()
    }

    #[test]
    fn vertex_price_is_monopoly_price() {
        let f = Family::new(vec![ces(1.5), ces(2.0)]).unwrap();
        assert!((optimal_price(&f, &Market::vertex(2, 0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((optimal_price(&f, &Market::vertex(2, 1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_types_give_monopoly_price_everywhere() {
        let f = Family::new(vec![ces(1.7), ces(1.7)]).unwrap();
        let m = Market::new(vec![0.3, 0.7]).unwrap();
        assert!((optimal_price(&f, &m).unwrap() - 1.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn linear_family_price_is_weighted_intercept() {
        // R_p = a - 2p for every c, so the price is E[a]/2.
        let f =
            Family::new(vec![DemandSpec::linear_shift(1.0, 0.0).unwrap(), DemandSpec::linear_shift(1.4, 0.1).unwrap()])
                .unwrap();
        let m = Market::new(vec![0.25, 0.75]).unwrap();
        assert!((optimal_price(&f, &m).unwrap() - 0.5 * (0.25 + 1.05)).abs() < 1e-14);
        // dp/dmu_2 = (a_2 - a_1)/2, d2p = 0.
        let g = price_gradient(&f, &m).unwrap();
        assert!((g[0] - 0.2).abs() < 1e-13);
        assert!(price_hessian(&f, &m).unwrap()[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn price_derivatives_match_finite_differences() {
        let f = Family::new(vec![ces(1.5), ces(1.8), ces(2.0)]).unwrap();
        let mu = [0.3, 0.25];
        let p = |d: [f64; 2]| optimal_price(&f, &Market::from_reduced(&[mu[0] + d[0], mu[1] + d[1]]).unwrap()).unwrap();
        let m = Market::from_reduced(&mu).unwrap();
        let g = price_gradient(&f, &m).unwrap();
        let h = price_hessian(&f, &m).unwrap();
        let e = 1e-4;
        for i in 0..2 {
            let mut d = [0.0; 2];
            d[i] = e;
            let fd = (p(d) - p([-d[0], -d[1]])) / (2.0 * e);
            assert!((fd - g[i]).abs() < 1e-7, "gradient {i}: {fd} vs {}", g[i]);
            for j in 0..2 {
                let mut a = [0.0; 2];
                a[i] += e;
                a[j] += e;
                let mut b = [0.0; 2];
                b[i] += e;
                b[j] -= e;
                let mut c = [0.0; 2];
                c[i] -= e;
                c[j] += e;
                let mut dd = [0.0; 2];
                dd[i] -= e;
                dd[j] -= e;
                let fd = (p(a) - p(b) - p(c) + p(dd)) / (4.0 * e * e);
                assert!((fd - h[(i, j)]).abs() < 1e-5, "hessian {i}{j}: {fd} vs {}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn partial_inclusion_failures_are_classified() {
        let f =
            Family::new(vec![DemandSpec::linear_shift(1.0, 0.0).unwrap(), DemandSpec::linear_shift(3.0, 0.0).unwrap()])
                .unwrap();
        let r = check_partial_inclusion(&f);
        assert!(!r.holds);
        assert_eq!(r.violations, vec![InclusionViolation { i: 1, j: 0, kind: InclusionFailure::FullExclusion }]);
        let g = Family::new(vec![DemandSpec::cubic_ramp(1.0, 0.1).unwrap(), DemandSpec::cubic_ramp(2.0, 0.1).unwrap()])
            .unwrap();
        let r = check_partial_inclusion(&g);
        assert!(r.violations.contains(&InclusionViolation { i: 0, j: 1, kind: InclusionFailure::FullInclusion }));
        assert!(r.violations.contains(&InclusionViolation { i: 1, j: 0, kind: InclusionFailure::FullExclusion }));
        let ok = Family::new(vec![ces(1.5), ces(2.0)]).unwrap();
        assert!(check_partial_inclusion(&ok).holds);
        assert!(matches!(optimal_price(&g, &Market::uniform(2)), Err(Error::PartialInclusionViolated { .. })));
    }

    #[test]
    fn grid_fallback_prices_excluded_pair() {
        let f =
            Family::new(vec![DemandSpec::linear_shift(1.0, 0.0).unwrap(), DemandSpec::linear_shift(3.0, 0.0).unwrap()])
                .unwrap()
                .with_fallback_grid();
        // Equal weights: revenue 0.5 p(1-p) + 0.5 p(3-p) below 1, 0.5 p(3-p) above.
        // Interior maxima at p = 1 (value 1) and p = 1.5 (value 1.125).
        let s = solve_price(&f, &Market::uniform(2)).unwrap();
        assert_eq!(s.method, PriceMethod::Grid);
        assert!((s.price - 1.5).abs() < 1e-7);
        // Weight 0.8 on the low type: 0.8 p(1-p) + 0.2 p(3-p) peaks at p = 0.7 (0.49);
        // serving only the high type gives 0.2 * 2.25 = 0.45.
        let s = solve_price(&f, &Market::new(vec![0.8, 0.2]).unwrap()).unwrap();
        assert!((s.price - 0.7).abs() < 1e-7);
    }

    #[test]
    fn grid_fallback_takes_lowest_of_tied_prices() {
        // Weight 3/4 on the low type: 1.5p - p^2 peaks at 0.75 and 0.25 p(3-p)
        // peaks at 1.5, both at 9/16.
        let f =
            Family::new(vec![DemandSpec::linear_shift(1.0, 0.0).unwrap(), DemandSpec::linear_shift(3.0, 0.0).unwrap()])
                .unwrap()
                .with_fallback_grid();
        let s = solve_price(&f, &Market::new(vec![0.75, 0.25]).unwrap()).unwrap();
        assert!((s.price - 0.75).abs() < 1e-6, "{}", s.price);
        assert!(s.tie_break);
    }

    #[test]
    fn markets_are_validated() {
        assert!(Market::new(vec![0.5, 0.6]).is_err());
        assert!(Market::new(vec![-1e-3, 1.001]).is_err());
        let m = Market::new(vec![-1e-15, 1.0]).unwrap();
        assert_eq!(m.weights()[0], 0.0);
        let r = Market::from_reduced(&[0.2, 0.3]).unwrap();
        assert!((r.weights()[0] - 0.5).abs() < 1e-15);
        let f = Family::new(vec![ces(1.5), ces(2.0)]).unwrap();
        assert!(optimal_price(&f, &Market::uniform(3)).is_err());
    }

    #[test]
    fn extreme_types() {
        let f = Family::new(vec![ces(1.7), ces(2.0), ces(1.5)]).unwrap();
        assert_eq!(f.lowest_type(), 1);
        assert_eq!(f.highest_type(), 2);
    }
}
