//! Brute-force cross-checks that share nothing with the closed forms beyond
//! demand evaluation: finite differences, a Jacobi eigensolver, a scan of
//! the value function for concavity, and a randomised search for welfare
//! raising and lowering refinements.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{classify, MonotonicityVerdict};
use crate::curvature::max_step;
use crate::demand::DemandSpec;
use crate::error::{Error, Result};
use crate::pricing::{check_partial_inclusion, Family, Market};
use crate::welfare::{segmentation_value, split_atom, value_function, Segmentation, WelfareWeight};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Finite-difference step in simplex coordinates.
    pub h: f64,
    pub scan_points: usize,
    pub search_trials: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { h: 1e-4, scan_points: 201, search_trials: 500, seed: 0 }
    }
}

impl OracleConfig {
    fn check(&self) -> Result<()> {
        if !(self.h > 0.0) || self.scan_points < 3 {
            return Err(Error::InvalidParameters(format!(
                "oracle config h={} scan_points={}",
                self.h, self.scan_points
            )));
        }
        Ok(())
    }
}

/// Central second differences of the value function in reduced coordinates.
pub fn fd_value_hessian(family: &Family, m: &Market, w: WelfareWeight, cfg: &OracleConfig) -> Result<DMatrix<f64>> {
    cfg.check()?;
    let h = cfg.h;
    if m.weights().iter().any(|&x| x < 2.0 * h) {
        return Err(Error::BoundaryTooClose { h });
    }
    let y: Vec<f64> = m.weights()[1..].to_vec();
    let k = y.len();
    let at = |moves: &[(usize, f64)]| -> Result<f64> {
        let mut z = y.clone();
        for &(i, s) in moves {
            z[i] += s;
        }
        value_function(family, &Market::from_reduced(&z)?, w)
    };
    let c = at(&[])?;
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        out[(i, i)] = (at(&[(i, h)])? - 2.0 * c + at(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])?
                + at(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Classical Jacobi rotations. Eigenvalues are returned in descending order
/// with eigenvectors as matching columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSymmetric(f64::INFINITY));
    }
    let scale = a.norm();
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)] - a[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let off = |m: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..100 * n * n {
        if off(&m) <= 1e-12 * scale {
            break;
        }
        let (mut p, mut q, mut big) = (0, 1, -1.0);
        for i in 0..n {
            for j in i + 1..n {
                if m[(i, j)].abs() > big {
                    (p, q, big) = (i, j, m[(i, j)].abs());
                }
            }
        }
        let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let t = if theta == 0.0 { 1.0 } else { t };
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for k in 0..n {
            let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
            m[(k, p)] = c * mkp - s * mkq;
            m[(k, q)] = s * mkp + c * mkq;
        }
        for k in 0..n {
            let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
            m[(p, k)] = c * mpk - s * mqk;
            m[(q, k)] = s * mpk + c * mqk;
        }
        for k in 0..n {
            let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
            v[(k, p)] = c * vkp - s * vkq;
            v[(k, q)] = s * vkp + c * vkq;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityScan {
    pub concave: bool,
    pub convex: bool,
    /// Weight on the second type where concavity fails worst, when neither
    /// shape holds.
    pub violation_mu: Option<f64>,
    pub mu: Vec<f64>,
    pub values: Vec<f64>,
}

/// Second differences of `W(mu)` on an even grid of the weight on the
/// second declared type.
pub fn concavification_scan(family: &Family, w: WelfareWeight, cfg: &OracleConfig) -> Result<ConcavityScan> {
    cfg.check()?;
    if family.len() != 2 {
        return Err(Error::NotBinary(family.len()));
    }
    let n = cfg.scan_points;
    let mu: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let values =
        mu.iter().map(|&x| value_function(family, &Market::new(vec![1.0 - x, x])?, w)).collect::<Result<Vec<_>>>()?;
    let (mut concave, mut convex) = (true, true);
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for k in 1..n - 1 {
        let d2 = values[k - 1] - 2.0 * values[k] + values[k + 1];
        let tol = 1e-9 * (values[k - 1].abs() + 2.0 * values[k].abs() + values[k + 1].abs()) + 1e-15;
        concave &= d2 <= tol;
        convex &= d2 >= -tol;
        if d2 > worst.0 {
            worst = (d2, k);
        }
    }
    let violation_mu = if concave || convex { None } else { Some(mu[worst.1]) };
    Ok(ConcavityScan { concave, convex, violation_mu, mu, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessHit {
    pub trial: usize,
    pub delta: f64,
    pub segmentation: Segmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub improving: Option<WitnessHit>,
    pub worsening: Option<WitnessHit>,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub baseline: f64,
}

fn random_direction(rng: &mut ChaCha8Rng, mu: &Market) -> Vec<f64> {
    let n = mu.len();
    let full: Vec<f64> = match rng.gen_range(0..3) {
        // Toward a vertex.
        0 => {
            let i = rng.gen_range(0..n);
            (0..n).map(|k| f64::from(u8::from(k == i)) - mu.weights()[k]).collect()
        }
        // Along an edge.
        1 => {
            let i = rng.gen_range(0..n);
            let j = (i + rng.gen_range(1..n)) % n;
            (0..n).map(|k| f64::from(u8::from(k == i)) - f64::from(u8::from(k == j))).collect()
        }
        _ => {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = raw.iter().sum::<f64>() / n as f64;
            raw.iter().map(|x| x - mean).collect()
        }
    };
    full[1..].to_vec()
}

fn trial(
    family: &Family,
    root: &Segmentation,
    w: WelfareWeight,
    seed: u64,
    index: usize,
) -> Option<(f64, Segmentation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let depth = rng.gen_range(1..=3);
    let mut s = root.clone();
    for _ in 0..depth {
        let k = rng.gen_range(0..s.atoms().len());
        let mu = s.atoms()[k].mu.clone();
        let d = random_direction(&mut rng, &mu);
        if d.iter().all(|&x| x == 0.0) {
            continue;
        }
        let t_max = max_step(&mu, &d);
        if !t_max.is_finite() || t_max <= 0.0 {
            continue;
        }
        let t = t_max * 0.5f64.powi(rng.gen_range(0..8));
        s = split_atom(&s, k, &d, t).ok()?;
    }
    if s.atoms().len() == root.atoms().len() {
        return None;
    }
    segmentation_value(&s, family, w).ok().map(|v| (v, s))
}

/// Random symmetric refinement chains from the uninformative segmentation
/// at `prior`, keeping the largest gain and the largest loss above a
/// relative tolerance. Each trial draws from its own ChaCha stream, so
/// results do not depend on scheduling.
pub fn witness_search(family: &Family, prior: &Market, w: WelfareWeight, cfg: &OracleConfig) -> Result<WitnessReport> {
    cfg.check()?;
    prior.check_len(family.len())?;
    if prior.weights().iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidMarket("witness search needs a full-support prior".into()));
    }
    let family =
        if check_partial_inclusion(family).holds { family.clone() } else { family.clone().with_fallback_grid() };
    let root = Segmentation::no_information(prior.clone());
    let baseline = segmentation_value(&root, &family, w)?;
    let tolerance = 1e-9 * baseline.abs().max(1e-6);
    let results: Vec<Option<(f64, Segmentation)>> =
        (0..cfg.search_trials).into_par_iter().map(|i| trial(&family, &root, w, cfg.seed, i)).collect();
    let mut improving: Option<WitnessHit> = None;
    let mut worsening: Option<WitnessHit> = None;
    for (i, r) in results.into_iter().enumerate() {
        let Some((v, s)) = r else { continue };
        let delta = v - baseline;
        if delta > tolerance && improving.as_ref().is_none_or(|h| delta > h.delta) {
            improving = Some(WitnessHit { trial: i, delta, segmentation: s });
        } else if delta < -tolerance && worsening.as_ref().is_none_or(|h| delta < h.delta) {
            worsening = Some(WitnessHit { trial: i, delta, segmentation: s });
        }
    }
    Ok(WitnessReport { improving, worsening, trials: cfg.search_trials, seed: cfg.seed, tolerance, baseline })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub eps: f64,
    pub inclusion_holds: bool,
    pub verdict: Option<MonotonicityVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRegression {
    pub rows: Vec<StepRow>,
    /// Largest tested width at which partial inclusion fails after holding
    /// at the previous (larger) width.
    pub crossover: Option<f64>,
}

/// Two smoothed unit-demand types with values `v1 < v2` and ramp width
/// `eps`, classified at total surplus for each width.
pub fn step_limit_regression(v1: f64, v2: f64, eps_list: &[f64], grid_n: usize) -> Result<StepRegression> {
    let w = WelfareWeight::new(0.5)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut crossover = None;
    let mut prev: Option<bool> = None;
    for &eps in eps_list {
        let family = Family::new(vec![DemandSpec::cubic_ramp(v1, eps)?, DemandSpec::cubic_ramp(v2, eps)?])?;
        let holds = check_partial_inclusion(&family).holds;
        if prev == Some(true) && !holds && crossover.is_none() {
            crossover = Some(eps);
        }
        prev = Some(holds);
        let verdict = classify(&family, w, grid_n).ok();
        rows.push(StepRow { eps, inclusion_holds: holds, verdict });
    }
    Ok(StepRegression { rows, crossover })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{FailedCondition, Verdict};

    #[test]
    fn jacobi_small_cases() {
        let (l, _) = jacobi_eigen(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(l, vec![1.0, 1.0]);
        let (l, v) = jacobi_eigen(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 3.0])).unwrap();
        assert_eq!(l, vec![3.0, -1.0]);
        assert_eq!(v[(1, 0)].abs(), 1.0);
        assert!(matches!(
            jacobi_eigen(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn jacobi_diagonalises_dense_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, -3.0]);
        let (l, v) = jacobi_eigen(&a).unwrap();
        for (k, &lk) in l.iter().enumerate() {
            let col = v.column(k).into_owned();
            assert!((&a * &col - &col * lk).norm() < 1e-11);
        }
        assert!(l.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn fd_stencil_respects_boundary() {
        let f = Family::new(vec![DemandSpec::power_unit(0.5).unwrap(), DemandSpec::power_unit(1.5).unwrap()]).unwrap();
        let m = Market::new(vec![1.0 - 1e-4, 1e-4]).unwrap();
        let r = fd_value_hessian(&f, &m, WelfareWeight::new(1.0).unwrap(), &OracleConfig::default());
        assert!(matches!(r, Err(Error::BoundaryTooClose { .. })));
    }

    #[test]
    fn step_family_loses_inclusion_when_narrow() {
        let r = step_limit_regression(1.0, 1.1, &[0.8, 0.5, 0.2, 0.05], 200).unwrap();
        assert!(r.rows[0].inclusion_holds);
        let last = r.rows.last().unwrap();
        assert!(!last.inclusion_holds);
        let v = last.verdict.as_ref().unwrap();
        assert_eq!((v.verdict, v.failed_condition), (Verdict::NonMonotone, FailedCondition::PartialInclusion));
        assert!(r.crossover.is_some());
    }

    #[test]
    fn witness_search_replays() {
        let f = Family::new(
            [1.5, 1.7, 2.0].iter().map(|&t| DemandSpec::constant_elasticity(1.0, t, 4.0).unwrap()).collect(),
        )
        .unwrap();
        let cfg = OracleConfig { search_trials: 40, seed: 9, ..OracleConfig::default() };
        let prior = Market::uniform(3);
        let w = WelfareWeight::new(0.5).unwrap();
        let a = witness_search(&f, &prior, w, &cfg).unwrap();
        let b = witness_search(&f, &prior, w, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
