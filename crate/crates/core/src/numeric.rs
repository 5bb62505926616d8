//! Scalar numerics shared by the demand and pricing layers: bracketed root
//! finding, adaptive quadrature, golden-section search and a monotone
//! cubic interpolant.

/// Outcome of a bracketed root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Root of a decreasing-through-zero function on `[lo, hi]` with `f(lo) >= 0 >= f(hi)`.
///
/// Newton steps are taken while they stay inside the shrinking bracket,
/// bisection otherwise. Iterates until the bracket collapses to a few ulps so
/// callers get the root to machine precision, not just to `tol`.
/// Returns `None` when the bracket is not sign-consistent or the final
/// residual exceeds `tol`.
pub fn solve_bracketed<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Option<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut a, mut b) = (lo, hi);
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa < 0.0 || fb > 0.0 {
        return None;
    }
    if fa == 0.0 {
        return Some(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Some(Root { x: b, residual: 0.0, iterations: 0 });
    }
    let mut x = 0.5 * (a + b);
    let mut best = Root { x, residual: f64::INFINITY, iterations: 0 };
    for it in 1..=400 {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            return None;
        }
        if fx.abs() < best.residual.abs() || (fx.abs() == best.residual.abs()) {
            best = Root { x, residual: fx, iterations: it };
        }
        if fx == 0.0 {
            break;
        }
        if fx > 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        let newton = if dfx.is_finite() && dfx != 0.0 { x - fx / dfx } else { f64::NAN };
        x = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        // Newton can stall against one side of the bracket; force a bisection
        // every few iterations so the bracket keeps shrinking.
        if it % 8 == 0 {
            x = 0.5 * (a + b);
        }
    }
    if best.residual.abs() <= tol {
        Some(best)
    } else {
        None
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_GAUSS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_KRONROD[7] * fc;
    let mut gauss = GK_GAUSS[3] * fc;
    for (j, (&x, &wk)) in GK_NODES.iter().zip(GK_KRONROD.iter()).take(7).enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kronrod += wk * s;
        if j % 2 == 1 {
            gauss += GK_GAUSS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the total
/// estimate is below `tol * max(1, |I|)` or the subdivision budget runs out.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&f, lo, hi);
    let mut parts = vec![(lo, hi, v, e)];
    for _ in 0..2000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= tol * total.abs().max(1.0) {
            break;
        }
        let worst = parts.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).map(|(i, _)| i).unwrap_or(0);
        let (l, r, _, _) = parts.swap_remove(worst);
        let m = 0.5 * (l + r);
        let (v1, e1) = gk15(&f, l, m);
        let (v2, e2) = gk15(&f, m, r);
        parts.push((l, m, v1, e1));
        parts.push((m, r, v2, e2));
    }
    sign * parts.iter().map(|p| p.2).sum::<f64>()
}

/// Maximiser of a unimodal function on `[a, b]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m[0] = s[0];
            m[1] = s[0];
        } else {
            for k in 1..n - 1 {
                if s[k - 1] * s[k] <= 0.0 {
                    m[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    m[k] = (w1 + w2) / (w1 / s[k - 1] + w2 / s[k]);
                }
            }
            m[0] = end_slope(h[0], h[1], s[0], s[1]);
            m[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        Some(Self { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Value and first derivative at `t` (clamped to the knot range).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (lo, hi) = self.domain();
        let t = t.clamp(lo, hi);
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let u = (t - self.x[k]) / h;
        let (y0, y1, m0, m1) = (self.y[k], self.y[k + 1], self.m[k], self.m[k + 1]);
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        let v = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = 6.0 * u * u - 6.0 * u;
        let d10 = 3.0 * u * u - 4.0 * u + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * u * u - 2.0 * u;
        let d = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
        (v, d)
    }
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Nelder-Mead minimisation from `x0` with initial simplex edge `step`.
/// Non-finite objective values act as walls. Returns the best point found
/// and its value.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    pts.push((x0.to_vec(), eval(x0)));
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] += step;
        let v = eval(&x);
        pts.push((x, v));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };
    for _ in 0..iters {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (pts[n].1 - pts[0].1).abs() <= 1e-15 * pts[0].1.abs().max(1e-300) && pts[0].1.is_finite() {
            break;
        }
        let mut c = vec![0.0; n];
        for (x, _) in &pts[..n] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / n as f64;
            }
        }
        let worst = pts[n].0.clone();
        let xr = lerp(&c, &worst, -1.0);
        let fr = eval(&xr);
        if fr < pts[0].1 {
            let xe = lerp(&c, &worst, -2.0);
            let fe = eval(&xe);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
        } else {
            let xc = if fr < pts[n].1 { lerp(&c, &xr, 0.5) } else { lerp(&c, &worst, 0.5) };
            let fc = eval(&xc);
            if fc < pts[n].1.min(fr) {
                pts[n] = (xc, fc);
            } else {
                let best = pts[0].0.clone();
                for p in pts.iter_mut().skip(1) {
                    p.0 = lerp(&best, &p.0, 0.5);
                    p.1 = eval(&p.0);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    pts.swap_remove(0)
}
