//! Weighted surplus of markets and segmentations, and the split and
//! contraction moves that generate refinements.

use serde::{Deserialize, Serialize};

use crate::demand::{consumer_surplus, demand_derivs, revenue_derivs, DemandSpec};
use crate::error::{Error, Result};
use crate::pricing::{optimal_price, Family, Local, Market};

/// Weight `alpha` in `(0, 1]` on consumer surplus; `1 - alpha` goes to revenue.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct WelfareWeight(f64);

impl WelfareWeight {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidWeight(alpha));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// `alpha * CS + (1 - alpha) * R` for one type at price `p`.
pub fn v_alpha(spec: &DemandSpec, p: f64, w: WelfareWeight) -> Result<f64> {
    let a = w.alpha();
    Ok(a * consumer_surplus(spec, p)? + (1.0 - a) * revenue_derivs(spec, p)?.d0)
}

/// Weighted surplus with its first two price derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValueStack {
    pub v: f64,
    pub vp: f64,
    pub vpp: f64,
}

/// `V`, `V_p = -alpha D + (1 - alpha) R_p` and `V_pp = -alpha D_p + (1 - alpha) R_pp`.
pub fn v_derivs(spec: &DemandSpec, p: f64, w: WelfareWeight) -> Result<ValueStack> {
    let a = w.alpha();
    let d = demand_derivs(spec, p)?;
    let r = revenue_derivs(spec, p)?;
    Ok(ValueStack {
        v: a * consumer_surplus(spec, p)? + (1.0 - a) * r.d0,
        vp: -a * d.d0 + (1.0 - a) * r.d1,
        vpp: -a * d.d1 + (1.0 - a) * r.d2,
    })
}

/// Weighted surplus of a market priced at its optimal uniform price.
pub fn value_function(family: &Family, m: &Market, w: WelfareWeight) -> Result<f64> {
    let p = optimal_price(family, m)?;
    value_at_price(family, m, p, w)
}

pub(crate) fn value_at_price(family: &Family, m: &Market, p: f64, w: WelfareWeight) -> Result<f64> {
    let mut acc = 0.0;
    for (i, &mu) in m.weights().iter().enumerate() {
        if mu > 0.0 {
            acc += mu * v_alpha(family.spec(i), p, w)?;
        }
    }
    Ok(acc)
}

/// Price calculus at a market together with the per-type value stacks.
#[derive(Debug, Clone)]
pub struct ValueLocal {
    pub local: Local,
    pub values: Vec<ValueStack>,
    pub e_vp: f64,
    pub e_vpp: f64,
}

impl ValueLocal {
    pub fn at(family: &Family, m: &Market, w: WelfareWeight) -> Result<Self> {
        let local = Local::at(family, m)?;
        let values = family.specs().iter().map(|s| v_derivs(s, local.price, w)).collect::<Result<Vec<_>>>()?;
        let mu = m.weights();
        let e_vp = values.iter().zip(mu).map(|(v, m)| m * v.vp).sum();
        let e_vpp = values.iter().zip(mu).map(|(v, m)| m * v.vpp).sum();
        Ok(Self { local, values, e_vp, e_vpp })
    }
}

/// One split in a segmentation's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub atom: usize,
    pub direction: Vec<f64>,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub w: f64,
    pub mu: Market,
}

/// A splitting of the prior into weighted atoms whose mean is the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSegmentation")]
pub struct Segmentation {
    prior: Market,
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lineage: Vec<SplitRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegmentation {
    prior: Market,
    atoms: Vec<Atom>,
    #[serde(default)]
    lineage: Vec<SplitRecord>,
}

impl TryFrom<RawSegmentation> for Segmentation {
    type Error = Error;

    fn try_from(r: RawSegmentation) -> Result<Self> {
        let prior = Market::new(r.prior.weights().to_vec())?;
        let atoms = r
            .atoms
            .into_iter()
            .map(|a| Ok(Atom { w: a.w, mu: Market::new(a.mu.weights().to_vec())? }))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Segmentation::new(prior, atoms)?;
        s.lineage = r.lineage;
        Ok(s)
    }
}

const SIMPLEX_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-10;

impl Segmentation {
    /// Weights must be positive and sum to one, and the weighted mean of
    /// the atoms must equal the prior.
    pub fn new(prior: Market, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidSegmentation("no atoms".into()));
        }
        let n = prior.len();
        if atoms.iter().any(|a| a.mu.len() != n) {
            return Err(Error::InvalidSegmentation("atom dimension differs from the prior".into()));
        }
        if atoms.iter().any(|a| !(a.w > 0.0) || !a.w.is_finite()) {
            return Err(Error::InvalidSegmentation("atom weights must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.w).sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSegmentation(format!("atom weights sum to {total}")));
        }
        for i in 0..n {
            let mean: f64 = atoms.iter().map(|a| a.w * a.mu.weights()[i]).sum();
            if (mean - prior.weights()[i]).abs() > MEAN_TOL {
                return Err(Error::InvalidSegmentation(format!(
                    "atoms average {mean} on type {i}, prior has {}",
                    prior.weights()[i]
                )));
            }
        }
        Ok(Self { prior, atoms, lineage: Vec::new() })
    }

    /// The segmentation with a single atom at the prior.
    pub fn no_information(prior: Market) -> Self {
        Self { atoms: vec![Atom { w: 1.0, mu: prior.clone() }], prior, lineage: Vec::new() }
    }

    pub fn prior(&self) -> &Market {
        &self.prior
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn lineage(&self) -> &[SplitRecord] {
        &self.lineage
    }

    fn same_atoms(&self, other: &Segmentation) -> bool {
        self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(&other.atoms).all(|(a, b)| {
                (a.w - b.w).abs() <= SIMPLEX_TOL
                    && a.mu.weights().iter().zip(b.mu.weights()).all(|(x, y)| (x - y).abs() <= SIMPLEX_TOL)
            })
    }
}

/// Total weighted surplus `sum w_k W(mu_k)`.
pub fn segmentation_value(s: &Segmentation, family: &Family, w: WelfareWeight) -> Result<f64> {
    s.prior.check_len(family.len())?;
    s.atoms.iter().map(|a| Ok(a.w * value_function(family, &a.mu, w)?)).sum()
}

/// Replace atom `k` by two half-weight atoms at `mu_k +- t d`, where `d` is
/// given in reduced coordinates. The minus child stays at index `k` and the
/// plus child is inserted right after it.
pub fn split_atom(s: &Segmentation, k: usize, direction: &[f64], t: f64) -> Result<Segmentation> {
    let atom = s.atoms.get(k).ok_or_else(|| Error::InvalidSegmentation(format!("no atom {k}")))?;
    let n = s.prior.len();
    if direction.len() + 1 != n {
        return Err(Error::InvalidSegmentation(format!(
            "direction has {} entries, expected {}",
            direction.len(),
            n - 1
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::SimplexViolation { atom: k, step: t });
    }
    if t == 0.0 {
        return Ok(s.clone());
    }
    let full: Vec<f64> = std::iter::once(-direction.iter().sum::<f64>()).chain(direction.iter().copied()).collect();
    let child = |sign: f64| -> Result<Market> {
        let mut v: Vec<f64> = atom.mu.weights().iter().zip(&full).map(|(m, d)| m + sign * t * d).collect();
        for x in v.iter_mut() {
            if *x < -SIMPLEX_TOL {
                return Err(Error::SimplexViolation { atom: k, step: t });
            }
            *x = x.max(0.0);
        }
        Market::new(v).map_err(|_| Error::SimplexViolation { atom: k, step: t })
    };
    let (minus, plus) = (child(-1.0)?, child(1.0)?);
    let half = 0.5 * atom.w;
    let mut atoms = s.atoms.clone();
    atoms[k] = Atom { w: half, mu: minus };
    atoms.insert(k + 1, Atom { w: half, mu: plus });
    let mut lineage = s.lineage.clone();
    lineage.push(SplitRecord { atom: k, direction: direction.to_vec(), step: t });
    Ok(Segmentation { prior: s.prior.clone(), atoms, lineage })
}

/// Shrink every atom toward the prior: `mu -> eps mu + (1 - eps) mu_0`.
/// Recorded split steps shrink by the same factor.
pub fn epsilon_contract(s: &Segmentation, eps: f64) -> Result<Segmentation> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let p0 = s.prior.weights();
    let atoms = s
        .atoms
        .iter()
        .map(|a| {
            let v = a.mu.weights().iter().zip(p0).map(|(m, q)| eps * m + (1.0 - eps) * q).collect();
            Ok(Atom { w: a.w, mu: Market::new(v)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let lineage = s.lineage.iter().map(|r| SplitRecord { step: r.step * eps, ..r.clone() }).collect();
    Ok(Segmentation { prior: s.prior.clone(), atoms, lineage })
}

/// Expected squared norm `sum w_k |mu_k|^2` of the full weight vectors.
pub fn information_size(s: &Segmentation) -> f64 {
    s.atoms.iter().map(|a| a.w * a.mu.norm_sq()).sum()
}

/// Checks that `fine` is obtained from `coarse` by the splits recorded in
/// its history beyond those of `coarse`.
pub fn verify_refinement(fine: &Segmentation, coarse: &Segmentation) -> Result<()> {
    let n = coarse.lineage.len();
    if fine.lineage.len() < n || fine.lineage[..n] != coarse.lineage[..] || fine.prior != coarse.prior {
        return Err(Error::NotARefinement);
    }
    let mut s = coarse.clone();
    for r in &fine.lineage[n..] {
        s = split_atom(&s, r.atom, &r.direction, r.step).map_err(|_| Error::NotARefinement)?;
    }
    if s.same_atoms(fine) {
        Ok(())
    } else {
        Err(Error::NotARefinement)
    }
}

/// Change in weighted surplus per unit of added information between a
/// segmentation and a recorded refinement of it.
pub fn delta_v_rate(fine: &Segmentation, coarse: &Segmentation, family: &Family, w: WelfareWeight) -> Result<f64> {
    verify_refinement(fine, coarse)?;
    let gap = information_size(fine) - information_size(coarse);
    if gap.abs() <= 1e-14 {
        return Err(Error::ZeroInformationGap);
    }
    Ok((segmentation_value(fine, family, w)? - segmentation_value(coarse, family, w)?) / gap)
}
