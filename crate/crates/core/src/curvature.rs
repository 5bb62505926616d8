//! Second-order welfare calculus on the simplex of markets: the Hessian of
//! the value function, its two nonzero eigenpairs, and the global bounds on
//! the welfare change per unit of information.
//!
//! All vectors are in reduced coordinates `(mu_2, ..., mu_n)` with the
//! first declared type as base.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::nelder_mead;
use crate::pricing::{check_partial_inclusion, Family, Market};
use crate::welfare::{ValueLocal, WelfareWeight};

fn delta_vp(v: &ValueLocal) -> DVector<f64> {
    let base = v.values[0].vp;
    DVector::from_iterator(v.values.len() - 1, v.values[1..].iter().map(|s| s.vp - base))
}

fn x_from(v: &ValueLocal) -> DVector<f64> {
    let g = v.local.gradient();
    let dr = v.local.delta_rpp();
    &g * (0.5 * v.e_vpp) + delta_vp(v) - (dr + &g * (0.5 * v.local.e_rppp)) * (v.e_vp / v.local.e_rpp)
}

/// `x = E[V_pp] g/2 + dV_p - (E[V_p]/E[R_pp]) (dR_pp + E[R_ppp] g/2)`.
pub fn x_vector(family: &Family, m: &Market, w: WelfareWeight) -> Result<DVector<f64>> {
    Ok(x_from(&ValueLocal::at(family, m, w)?))
}

/// `x g' + g x'`.
pub fn hessian_w(family: &Family, m: &Market, w: WelfareWeight) -> Result<DMatrix<f64>> {
    let v = ValueLocal::at(family, m, w)?;
    let g = v.local.gradient();
    let x = x_from(&v);
    Ok(&x * g.transpose() + &g * x.transpose())
}

/// The same Hessian assembled from its within-type, cross-type and price
/// curvature parts: `E[V_pp] g g' + dV_p g' + g dV_p' + E[V_p] D2p`.
pub fn hessian_three_term(family: &Family, m: &Market, w: WelfareWeight) -> Result<DMatrix<f64>> {
    let v = ValueLocal::at(family, m, w)?;
    let g = v.local.gradient();
    let dv = delta_vp(&v);
    Ok(&g * g.transpose() * v.e_vpp + &dv * g.transpose() + &g * dv.transpose() + v.local.hessian() * v.e_vp)
}

/// Closed-form nonzero spectrum of `x g' + g x'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    /// Unnormalised; `None` when the closed form gives the zero vector.
    pub v_hi: Option<DVector<f64>>,
    pub v_lo: Option<DVector<f64>>,
}

/// `lambda = g.x +- |g||x|`, `v = g|x| +- |g| x`.
pub fn eigenpairs(g: &DVector<f64>, x: &DVector<f64>) -> Eigenpairs {
    let (ng, nx) = (g.norm(), x.norm());
    let gx = g.dot(x);
    let prod = ng * nx;
    if prod == 0.0 {
        return Eigenpairs { lambda_hi: 0.0, lambda_lo: 0.0, v_hi: None, v_lo: None };
    }
    let keep = |v: DVector<f64>| if v.norm() > 1e-12 * prod { Some(v) } else { None };
    Eigenpairs {
        lambda_hi: (gx + prod).max(0.0),
        lambda_lo: (gx - prod).min(0.0),
        v_hi: keep(g * nx + x * ng),
        v_lo: keep(g * nx - x * ng),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub market: Market,
    pub price: f64,
    pub grad_p: Vec<f64>,
    pub x_vec: Vec<f64>,
    /// Row-major.
    pub hessian: Vec<Vec<f64>>,
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    pub v_hi: Option<Vec<f64>>,
    pub v_lo: Option<Vec<f64>>,
}

pub fn curvature_report(family: &Family, m: &Market, w: WelfareWeight) -> Result<CurvatureReport> {
    let v = ValueLocal::at(family, m, w)?;
    let g = v.local.gradient();
    let x = x_from(&v);
    let h = &x * g.transpose() + &g * x.transpose();
    let e = eigenpairs(&g, &x);
    let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    Ok(CurvatureReport {
        market: m.clone(),
        price: v.local.price,
        grad_p: vec(&g),
        x_vec: vec(&x),
        hessian: h.row_iter().map(|r| r.iter().copied().collect()).collect(),
        lambda_hi: e.lambda_hi,
        lambda_lo: e.lambda_lo,
        v_hi: e.v_hi.as_ref().map(vec),
        v_lo: e.v_lo.as_ref().map(vec),
    })
}

/// `(lambda_lo, lambda_hi)` of the reduced value Hessian at `m`.
pub fn extreme_eigenvalues(family: &Family, m: &Market, w: WelfareWeight) -> Result<(f64, f64)> {
    let v = ValueLocal::at(family, m, w)?;
    let e = eigenpairs(&v.local.gradient(), &x_from(&v));
    Ok((e.lambda_lo, e.lambda_hi))
}

/// Search settings for [`global_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsOptions {
    /// Lattice steps per coordinate for up to three types.
    pub resolution: usize,
    /// Quasi-random samples for more than three types.
    pub samples: usize,
    pub polish: bool,
    pub seed: u32,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self { resolution: 200, samples: 4096, polish: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    /// `min lambda_lo / 2` over the simplex.
    pub lower_rate: f64,
    /// `max lambda_hi / 2` over the simplex.
    pub upper_rate: f64,
    pub arg_min: Market,
    pub arg_max: Market,
    /// `(1 - |mu0|^2)/2` times the extreme eigenvalues, when a prior is given.
    pub magnitude_lower: Option<f64>,
    pub magnitude_upper: Option<f64>,
    pub evaluations: usize,
    /// Markets where the local calculus failed (degenerate curvature).
    pub skipped: usize,
}

fn lattice(n: usize, res: usize) -> Vec<Market> {
    let r = res.max(1);
    match n {
        1 => vec![Market::vertex(1, 0)],
        2 => (0..=r).map(|k| Market::from_reduced(&[k as f64 / r as f64]).expect("lattice point")).collect(),
        _ => {
            let mut out = Vec::with_capacity((r + 1) * (r + 2) / 2);
            for i in 0..=r {
                for j in 0..=r - i {
                    out.push(Market::from_reduced(&[i as f64 / r as f64, j as f64 / r as f64]).expect("lattice point"));
                }
            }
            out
        }
    }
}

/// Uniform map from the cube to the simplex through sorted spacings.
fn cube_to_simplex(u: &mut [f64]) -> Vec<f64> {
    u.sort_by(f64::total_cmp);
    let mut w = Vec::with_capacity(u.len() + 1);
    let mut prev = 0.0;
    for &x in u.iter() {
        w.push(x - prev);
        prev = x;
    }
    w.push(1.0 - prev);
    w
}

fn sobol_markets(n: usize, samples: usize, seed: u32) -> Vec<Market> {
    let mut out: Vec<Market> = (0..n).map(|i| Market::vertex(n, i)).collect();
    out.push(Market::uniform(n));
    for k in 0..samples as u32 {
        let mut u: Vec<f64> = (0..(n - 1) as u32).map(|d| sobol_burley::sample(k, d, seed) as f64).collect();
        let w = cube_to_simplex(&mut u);
        let s: f64 = w.iter().sum();
        if let Ok(m) = Market::new(w.iter().map(|x| x / s).collect()) {
            out.push(m);
        }
    }
    out
}

/// Starting points of [`global_bounds`] for `n` types.
pub fn search_markets(n: usize, opts: &BoundsOptions) -> Vec<Market> {
    if n <= 3 {
        lattice(n, opts.resolution)
    } else {
        sobol_markets(n, opts.samples, opts.seed)
    }
}

fn reduced_market(y: &[f64]) -> Option<Market> {
    if y.iter().any(|&v| v < 0.0) || y.iter().sum::<f64>() > 1.0 {
        return None;
    }
    Market::from_reduced(y).ok()
}

/// Extreme eigenvalues over the simplex: a lattice for up to three types,
/// Sobol points otherwise, each optionally polished by Nelder-Mead.
pub fn global_bounds(
    family: &Family,
    w: WelfareWeight,
    prior: Option<&Market>,
    opts: BoundsOptions,
) -> Result<BoundsReport> {
    check_partial_inclusion(family).to_result()?;
    let n = family.len();
    if let Some(p) = prior {
        p.check_len(n)?;
    }
    let markets = search_markets(n, &opts);
    let evals: Vec<Option<(f64, f64)>> = markets.par_iter().map(|m| extreme_eigenvalues(family, m, w).ok()).collect();
    let skipped = evals.iter().filter(|e| e.is_none()).count();
    let mut evaluations = markets.len();
    let mut lo = (f64::INFINITY, 0usize);
    let mut hi = (f64::NEG_INFINITY, 0usize);
    for (k, e) in evals.iter().enumerate() {
        if let Some((l, h)) = *e {
            if l < lo.0 {
                lo = (l, k);
            }
            if h > hi.0 {
                hi = (h, k);
            }
        }
    }
    if !lo.0.is_finite() {
        return Err(Error::DegenerateCurvature(0.0));
    }
    let mut arg_min = markets[lo.1].clone();
    let mut arg_max = markets[hi.1].clone();
    let (mut lmin, mut lmax) = (lo.0, hi.0);
    if opts.polish && n >= 2 {
        let step = if n <= 3 { 1.0 / opts.resolution.max(1) as f64 } else { 0.05 };
        let mut count = 0usize;
        let mut polish = |start: &Market, sign: f64, pick: fn((f64, f64)) -> f64| {
            let y0: Vec<f64> = start.reduced().iter().copied().collect();
            let (y, v) = nelder_mead(
                |y| {
                    count += 1;
                    reduced_market(y)
                        .and_then(|m| extreme_eigenvalues(family, &m, w).ok())
                        .map_or(f64::NAN, |e| sign * pick(e))
                },
                &y0,
                step,
                200,
            );
            (reduced_market(&y), sign * v)
        };
        let (m, v) = polish(&arg_min, 1.0, |e| e.0);
        if let Some(m) = m.filter(|_| v < lmin) {
            lmin = v;
            arg_min = m;
        }
        let (m, v) = polish(&arg_max, -1.0, |e| e.1);
        if let Some(m) = m.filter(|_| v > lmax) {
            lmax = v;
            arg_max = m;
        }
        evaluations += count;
    }
    let factor = prior.map(|p| 0.5 * (1.0 - p.norm_sq()));
    Ok(BoundsReport {
        lower_rate: 0.5 * lmin,
        upper_rate: 0.5 * lmax,
        arg_min,
        arg_max,
        magnitude_lower: factor.map(|f| f * lmin),
        magnitude_upper: factor.map(|f| f * lmax),
        evaluations,
        skipped,
    })
}

/// Marginally best and worst splitting directions at a market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Direction {
    /// Unit vector in reduced coordinates; `None` when the gain is zero and
    /// the closed form degenerates.
    pub v_best: Option<Vec<f64>>,
    pub v_worst: Option<Vec<f64>>,
    pub gain: f64,
    pub loss: f64,
    /// Largest `t` with `mu +- t v_best` inside the simplex.
    pub t_max_best: Option<f64>,
    pub t_max_worst: Option<f64>,
}

fn unit(v: &DVector<f64>) -> Vec<f64> {
    let n = v.norm();
    v.iter().map(|x| x / n).collect()
}

/// Largest symmetric step along a reduced direction that stays feasible.
pub fn max_step(m: &Market, dir: &[f64]) -> f64 {
    let full: Vec<f64> = std::iter::once(-dir.iter().sum::<f64>()).chain(dir.iter().copied()).collect();
    m.weights()
        .iter()
        .zip(&full)
        .filter(|(_, d)| d.abs() > 0.0)
        .map(|(mu, d)| mu / d.abs())
        .fold(f64::INFINITY, f64::min)
}

pub fn best_direction(family: &Family, m: &Market, w: WelfareWeight) -> Result<Direction> {
    let v = ValueLocal::at(family, m, w)?;
    let e = eigenpairs(&v.local.gradient(), &x_from(&v));
    if e.v_hi.is_none() && e.v_lo.is_none() {
        return Err(Error::UndefinedDirection);
    }
    let best = e.v_hi.as_ref().map(unit);
    let worst = e.v_lo.as_ref().map(unit);
    Ok(Direction {
        t_max_best: best.as_ref().map(|d| max_step(m, d)),
        t_max_worst: worst.as_ref().map(|d| max_step(m, d)),
        v_best: best,
        v_worst: worst,
        gain: e.lambda_hi,
        loss: e.lambda_lo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRow {
    pub market: Vec<f64>,
    pub v_best: Option<Vec<f64>>,
    pub v_worst: Option<Vec<f64>>,
    pub lambda_hi: f64,
    pub lambda_lo: f64,
}

/// Boundary margin for [`vector_field`].
pub const FIELD_MARGIN: f64 = 1e-3;

/// Directions and eigenvalues on the interior of a three-type lattice.
pub fn vector_field(family: &Family, w: WelfareWeight, resolution: usize) -> Result<Vec<FieldRow>> {
    if family.len() != 3 {
        return Err(Error::WrongDimension(family.len()));
    }
    check_partial_inclusion(family).to_result()?;
    let markets: Vec<Market> =
        lattice(3, resolution).into_iter().filter(|m| m.weights().iter().all(|&x| x >= FIELD_MARGIN)).collect();
    markets
        .par_iter()
        .map(|m| {
            let v = ValueLocal::at(family, m, w)?;
            let e = eigenpairs(&v.local.gradient(), &x_from(&v));
            Ok(FieldRow {
                market: m.weights().to_vec(),
                v_best: e.v_hi.as_ref().map(unit),
                v_worst: e.v_lo.as_ref().map(unit),
                lambda_hi: e.lambda_hi,
                lambda_lo: e.lambda_lo,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandSpec;
    use crate::welfare::value_function;

    fn power_family(thetas: &[f64]) -> Family {
        Family::new(thetas.iter().map(|&t| DemandSpec::power_unit(t).unwrap()).collect()).unwrap()
    }

    fn fd_hessian(f: &Family, m: &Market, w: WelfareWeight, h: f64) -> DMatrix<f64> {
        let y: Vec<f64> = m.reduced().iter().copied().collect();
        let k = y.len();
        let wv = |d: &[(usize, f64)]| {
            let mut z = y.clone();
            for &(i, s) in d {
                z[i] += s;
            }
            value_function(f, &Market::from_reduced(&z).unwrap(), w).unwrap()
        };
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                (wv(&[(i, h)]) - 2.0 * wv(&[]) + wv(&[(i, -h)])) / (h * h)
            } else {
                (wv(&[(i, h), (j, h)]) - wv(&[(i, h), (j, -h)]) - wv(&[(i, -h), (j, h)]) + wv(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            }
        })
    }

    #[test]
    fn identical_types_have_flat_value() {
        let f = power_family(&[0.5, 0.5, 0.5]);
        let w = WelfareWeight::new(0.7).unwrap();
        let m = Market::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(x_vector(&f, &m, w).unwrap().iter().all(|&v| v == 0.0));
        assert!(hessian_w(&f, &m, w).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(best_direction(&f, &m, w), Err(Error::UndefinedDirection)));
    }

    #[test]
    fn hessian_matches_second_differences() {
        let f = power_family(&[0.9, 0.01, 0.3]);
        let w = WelfareWeight::new(1.0).unwrap();
        let m = Market::new(vec![0.3, 0.3, 0.4]).unwrap();
        let h = hessian_w(&f, &m, w).unwrap();
        let fd = fd_hessian(&f, &m, w, 1e-3);
        let rel = (&h - &fd).norm() / h.norm();
        assert!(rel < 1e-4, "{h} vs {fd}");
    }

    #[test]
    fn three_term_form_agrees() {
        let f = power_family(&[0.2, 0.5, 0.8, 1.4]);
        let w = WelfareWeight::new(0.6).unwrap();
        let m = Market::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = hessian_w(&f, &m, w).unwrap();
        let b = hessian_three_term(&f, &m, w).unwrap();
        assert!((&a - &b).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn binary_hessian_is_twice_gradient_times_x() {
        let f = power_family(&[0.3, 1.2]);
        let w = WelfareWeight::new(0.5).unwrap();
        let m = Market::new(vec![0.6, 0.4]).unwrap();
        let v = ValueLocal::at(&f, &m, w).unwrap();
        let h = hessian_w(&f, &m, w).unwrap();
        assert!((h[(0, 0)] - 2.0 * v.local.gradient()[0] * x_from(&v)[0]).abs() < 1e-14);
        let d = best_direction(&f, &m, w).unwrap();
        let b = d.v_best.unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_spectrum_examples() {
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let e = eigenpairs(&g, &(&g * 3.0));
        assert!((e.lambda_hi - 30.0).abs() < 1e-12 && e.lambda_lo.abs() < 1e-12);
        let x = DVector::from_vec(vec![-2.0, 1.0]);
        let e = eigenpairs(&g, &x);
        assert!((e.lambda_hi - 5.0).abs() < 1e-12 && (e.lambda_lo + 5.0).abs() < 1e-12);
        let h = &x * g.transpose() + &g * x.transpose();
        for (l, v) in [(e.lambda_hi, e.v_hi.unwrap()), (e.lambda_lo, e.v_lo.unwrap())] {
            assert!((&h * &v - &v * l).norm() < 1e-12 * v.norm());
        }
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(lattice(2, 10).len(), 11);
        assert_eq!(lattice(3, 200).len(), 201 * 202 / 2);
    }

    #[test]
    fn field_rows_cover_interior() {
        let f = power_family(&[0.9, 0.01, 0.3]);
        let rows = vector_field(&f, WelfareWeight::new(1.0).unwrap(), 20).unwrap();
        assert_eq!(rows.len(), 19 * 18 / 2);
        assert!(rows.iter().all(|r| r.lambda_lo <= 0.0 && r.lambda_hi >= 0.0));
        assert!(matches!(
            vector_field(&power_family(&[0.2, 0.4]), WelfareWeight::new(1.0).unwrap(), 20),
            Err(Error::WrongDimension(2))
        ));
    }

    #[test]
    fn max_step_stays_feasible() {
        let m = Market::new(vec![0.2, 0.3, 0.5]).unwrap();
        let d = [0.6, -0.8];
        let t = max_step(&m, &d);
        let plus = [0.3 + t * 0.6, 0.5 - t * 0.8];
        let minus = [0.3 - t * 0.6, 0.5 + t * 0.8];
        for y in [plus, minus] {
            assert!(y.iter().all(|&v| v >= -1e-15) && y.iter().sum::<f64>() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn sobol_simplex_points_are_markets() {
        let ms = sobol_markets(5, 64, 7);
        assert_eq!(ms.len(), 5 + 1 + 64);
        assert!(ms.iter().all(|m| m.len() == 5));
    }
}
