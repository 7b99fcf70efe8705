//! Closed-form and search-based bound evaluators.

use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::activations::ActivationGap;
use crate::error::{arg, Error, Result};
use crate::report::AuditReport;
use crate::targets::TargetFunction;

/// `ln(f64::MAX)`; larger exponents are reported as overflow.
const LN_F64_MAX: f64 = 709.78;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Value of `((t - 1) w + 1)^d - 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreakpointBound {
    pub value: f64,
    /// Set when the exact value exceeds the binary64 range; `value` is then
    /// `+inf`.
    pub overflow: bool,
    /// Exact value as `numerator/denominator`, absent on overflow.
    pub exact: Option<String>,
}

fn big(r: Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Upper bound on break points along any segment, from the activation piece
/// count `t`, average width `omega` and depth `d`.
pub fn breakpoint_upper_bound(t: usize, omega: Ratio<u64>, d: usize) -> Result<BreakpointBound> {
    if t < 1 || d < 1 {
        return Err(arg(format!("need t >= 1 and d >= 1, got t = {t}, d = {d}")));
    }
    if omega <= Ratio::zero() {
        return Err(arg("omega must be > 0"));
    }
    let base = big(omega) * BigRational::from_integer(BigInt::from(t - 1)) + BigRational::one();
    let ln_base = base.to_f64().map_or(f64::INFINITY, f64::ln);
    if ln_base * d as f64 > LN_F64_MAX {
        return Ok(BreakpointBound { value: f64::INFINITY, overflow: true, exact: None });
    }
    let exact = num::pow(base, d) - BigRational::one();
    Ok(BreakpointBound {
        value: exact.to_f64().unwrap_or(f64::INFINITY),
        overflow: false,
        exact: Some(exact.to_string()),
    })
}

/// `((t - 1) H / d + 1)^d <= t^H`.
pub fn lemma1_check(t: usize, d: usize, h: usize) -> Result<AuditReport> {
    if t < 1 || d < 1 {
        return Err(arg(format!("need t >= 1 and d >= 1, got t = {t}, d = {d}")));
    }
    if d > h {
        return Err(arg(format!("depth {d} exceeds hidden unit count {h}")));
    }
    let base = BigRational::new(BigInt::from((t - 1) * h), BigInt::from(d)) + BigRational::one();
    let lhs = num::pow(base, d);
    let rhs = BigRational::from_integer(num::pow(BigInt::from(t), h));
    let holds = lhs <= rhs;
    let mut rep = AuditReport::upper(
        "lemma1",
        lhs.to_f64().unwrap_or(f64::INFINITY),
        rhs.to_f64().unwrap_or(f64::INFINITY),
        0.0,
    )
    .param("t", t)
    .param("d", d)
    .param("H", h);
    if !holds {
        rep.verdict = crate::report::Verdict::Fail;
    }
    Ok(rep)
}

/// Search resolutions and problem constants shared by the lower-bound
/// evaluators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundConfig {
    pub alpha_grid: usize,
    pub refine_iters: usize,
    pub pair_samples: usize,
    pub corner_pairs: bool,
    pub epsilon: f64,
    pub t: usize,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            alpha_grid: 1025,
            refine_iters: 40,
            pair_samples: 256,
            corner_pairs: true,
            epsilon: 1e-4,
            t: 2,
            seed: 0,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid < 2 || self.refine_iters < 1 || self.pair_samples < 1 {
            return Err(arg("alpha_grid must be >= 2 and refine_iters, pair_samples >= 1"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(arg(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.t < 1 {
            return Err(arg("t must be >= 1"));
        }
        Ok(())
    }

    pub fn provenance(&self) -> String {
        format!(
            "alpha_grid={} refine_iters={} pair_samples={} corner_pairs={} seed={}",
            self.alpha_grid, self.refine_iters, self.pair_samples, self.corner_pairs, self.seed
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsiResult {
    pub psi: f64,
    pub minimizing_alpha: f64,
    pub gamma_at_min: f64,
    pub sign_at_min: i8,
}

/// Smaller eigenvalue magnitude and sign of the extreme-eigenvalue product
/// of the Hessian at `p`.
pub fn curvature(g: &TargetFunction, p: &[f64]) -> (f64, i8) {
    let ev = g.hessian(p).eigenvalues();
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let prod = lo * hi;
    let sign = if prod > 0.0 {
        1
    } else if prod < 0.0 {
        -1
    } else {
        0
    };
    (lo.abs().min(hi.abs()), sign)
}

fn check_points(g: &TargetFunction, x: &[f64], y: &[f64]) -> Result<()> {
    for p in [x, y] {
        if p.len() != g.n() {
            return Err(arg(format!("point has dimension {}, target has n = {}", p.len(), g.n())));
        }
        if !g.contains(p) {
            return Err(arg(format!("point {p:?} lies outside the target domain")));
        }
    }
    if x == y {
        return Err(arg("degenerate segment: x == y"));
    }
    Ok(())
}

/// Square root of the infimum over the segment of the clamped curvature
/// product.
pub fn psi(g: &TargetFunction, x: &[f64], y: &[f64], cfg: &BoundConfig) -> Result<PsiResult> {
    cfg.validate()?;
    check_points(g, x, y)?;
    Ok(psi_unchecked(g, x, y, cfg))
}

fn psi_unchecked(g: &TargetFunction, x: &[f64], y: &[f64], cfg: &BoundConfig) -> PsiResult {
    let mut p = vec![0.0; x.len()];
    let mut phi = |a: f64| {
        for ((pi, xi), yi) in p.iter_mut().zip(x).zip(y) {
            *pi = (1.0 - a) * xi + a * yi;
        }
        let (gamma, sign) = curvature(g, &p);
        ((gamma * f64::from(sign)).max(0.0), gamma, sign)
    };
    let m = cfg.alpha_grid;
    let alpha = |i: usize| if i + 1 == m { 1.0 } else { i as f64 / (m - 1) as f64 };
    let mut best = (f64::INFINITY, 0.0, 0.0, 0i8);
    let mut best_i = 0;
    for i in 0..m {
        let a = alpha(i);
        let (v, gamma, sign) = phi(a);
        if v < best.0 {
            best = (v, a, gamma, sign);
            best_i = i;
        }
    }
    if best.0 > 0.0 {
        let (mut lo, mut hi) = (alpha(best_i.saturating_sub(1)), alpha((best_i + 1).min(m - 1)));
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let (mut fc, mut fd) = (phi(c).0, phi(d).0);
        for _ in 0..cfg.refine_iters {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = phi(c).0;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = phi(d).0;
            }
        }
        for a in [c, d, 0.5 * (lo + hi)] {
            let (v, gamma, sign) = phi(a);
            if v < best.0 {
                best = (v, a, gamma, sign);
            }
        }
    }
    PsiResult { psi: best.0.sqrt(), minimizing_alpha: best.1, gamma_at_min: best.2, sign_at_min: best.3 }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `|x - y| Psi(g, x, y) / 4`, the break-point multiplier of one segment.
pub fn pair_value(g: &TargetFunction, x: &[f64], y: &[f64], cfg: &BoundConfig) -> Result<f64> {
    let r = psi(g, x, y, cfg)?;
    Ok(dist(x, y) * r.psi / 4.0)
}

/// `log_t(v)` clamped at 0; `None` when `t < 2`.
pub fn log_t_clamped(v: f64, t: usize) -> Option<f64> {
    (t >= 2).then(|| if v > 1.0 { v.ln() / (t as f64).ln() } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Result {
    /// Multiplier of `1/sqrt(eps)` in the lower bound on linear pieces.
    pub value: f64,
    pub best_pair: (Vec<f64>, Vec<f64>),
    /// `value / sqrt(eps)`.
    pub pieces_lb: f64,
    /// `log_t(value / sqrt(eps))`, clamped at 0; absent for `t < 2`.
    pub hidden_units_lb: Option<f64>,
    pub pairs_evaluated: usize,
}

/// Largest `|x - y| Psi / 4` found over corner pairs, random pairs and a
/// coordinate refinement of the best pair.
pub fn theorem1_lower_bound(g: &TargetFunction, cfg: &BoundConfig) -> Result<Theorem1Result> {
    cfg.validate()?;
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    if cfg.corner_pairs {
        let corners = g.corners();
        for i in 0..corners.len() {
            for j in i + 1..corners.len() {
                pairs.push((corners[i].clone(), corners[j].clone()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        g.domain().iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
    };
    let wanted = pairs.len() + cfg.pair_samples;
    while pairs.len() < wanted {
        let (x, y) = (sample(&mut rng), sample(&mut rng));
        if x != y {
            pairs.push((x, y));
        }
    }
    let objective = |x: &[f64], y: &[f64]| -> f64 {
        if x == y {
            0.0
        } else {
            dist(x, y) * psi_unchecked(g, x, y, cfg).psi / 4.0
        }
    };
    let scored: Vec<f64> = pairs.par_iter().map(|(x, y)| objective(x, y)).collect();
    let mut evaluated = scored.len();
    let (mut bi, mut best) = (0, scored[0]);
    for (i, &v) in scored.iter().enumerate() {
        if v > best {
            best = v;
            bi = i;
        }
    }
    let (mut bx, mut by) = pairs.swap_remove(bi);

    // Coordinate refinement over the 2n endpoint coordinates.
    let n = g.n();
    let mut step: Vec<f64> = g.domain().iter().map(|(lo, hi)| 0.25 * (hi - lo)).collect();
    let min_step = 1e-6;
    while step.iter().any(|&s| s > min_step) {
        let mut improved = false;
        for k in 0..2 * n {
            let axis = k % n;
            let (lo, hi) = g.domain()[axis];
            for dir in [1.0, -1.0] {
                let (mut cx, mut cy) = (bx.clone(), by.clone());
                let c = if k < n { &mut cx[axis] } else { &mut cy[axis] };
                *c = (*c + dir * step[axis]).clamp(lo, hi);
                let v = objective(&cx, &cy);
                evaluated += 1;
                if v > best {
                    best = v;
                    bx = cx;
                    by = cy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }

    let pieces_lb = best / cfg.epsilon.sqrt();
    Ok(Theorem1Result {
        value: best,
        best_pair: (bx, by),
        pieces_lb,
        hidden_units_lb: log_t_clamped(pieces_lb, cfg.t),
        pairs_evaluated: evaluated,
    })
}

/// `log_t(sqrt(mu diam^2 / (16 eps)))`, clamped at 0.
pub fn corollary1_bound(mu: f64, diam: f64, epsilon: f64, t: usize) -> Result<f64> {
    if !(mu > 0.0 && diam > 0.0 && epsilon > 0.0) {
        return Err(arg("mu, diam and epsilon must be positive"));
    }
    if t < 2 {
        return Err(arg(format!("t must be >= 2, got {t}")));
    }
    Ok(log_t_clamped((mu * diam * diam / (16.0 * epsilon)).sqrt(), t).unwrap_or(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Corollary2Result {
    pub c: f64,
    pub q: f64,
    pub value: f64,
}

/// `q d eps^(-1/(2d))` with `q = min(c, 1) / 2` and `c` the supremum found by
/// [`theorem1_lower_bound`].
pub fn corollary2_bound(g: &TargetFunction, d: usize, epsilon: f64, cfg: &BoundConfig) -> Result<Corollary2Result> {
    cfg.validate()?;
    if d < 1 {
        return Err(arg("depth must be >= 1"));
    }
    if !(epsilon > 0.0) {
        return Err(arg("epsilon must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centre: Vec<f64> = g.domain().iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let random = (0..cfg.pair_samples).map(|_| -> Vec<f64> {
        g.domain().iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
    });
    for p in g.corners().into_iter().chain(std::iter::once(centre)).chain(random.collect::<Vec<_>>()) {
        let lmin = g.hessian(&p).eigenvalues()[0];
        if !(lmin > 0.0) {
            return Err(Error::Precondition(format!(
                "Hessian of `{}` is not positive definite at {p:?} (smallest eigenvalue {lmin})",
                g.name()
            )));
        }
    }
    let c = theorem1_lower_bound(g, cfg)?.value;
    let q = 0.5 * c.min(1.0);
    Ok(Corollary2Result { c, q, value: q * d as f64 * epsilon.powf(-1.0 / (2.0 * d as f64)) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem2Result {
    pub multiplier: f64,
    pub max_abs_laplacian: f64,
    pub argmax: Vec<f64>,
    pub pieces_lb: f64,
    pub hidden_units_lb: Option<f64>,
    pub grid_per_axis: usize,
}

/// Total grid points allowed before the per-axis count is reduced.
const CUBE_MAX_POINTS: usize = 1 << 20;

/// `sqrt((max |Lap g| / n - delta3 n^1.5)^+ / 16)` over the unit cube.
pub fn theorem2_bound(g: &TargetFunction, epsilon: f64, t: usize, grid: usize) -> Result<Theorem2Result> {
    if !g.is_unit_cube() {
        return Err(arg(format!("target `{}` must live on the unit cube", g.name())));
    }
    if !(epsilon > 0.0) {
        return Err(arg("epsilon must be positive"));
    }
    if grid < 2 {
        return Err(arg("grid must have at least 2 points per axis"));
    }
    let n = g.n();
    let (best, arg_best, per_axis) = maximize_on_cube(n, grid, |x| g.laplacian(x).abs());
    let nf = n as f64;
    let inner = (best / nf - g.third_bound() * nf.powf(1.5)).max(0.0);
    let multiplier = (inner / 16.0).sqrt();
    let pieces_lb = multiplier / epsilon.sqrt();
    Ok(Theorem2Result {
        multiplier,
        max_abs_laplacian: best,
        argmax: arg_best,
        pieces_lb,
        hidden_units_lb: log_t_clamped(pieces_lb, t),
        grid_per_axis: per_axis,
    })
}

/// Grid search over `[0,1]^n` followed by coordinate refinement of the best
/// grid point. Returns the maximum, its location and the per-axis grid size
/// actually used.
pub(crate) fn maximize_on_cube(
    n: usize,
    grid: usize,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> (f64, Vec<f64>, usize) {
    let mut per_axis = grid.max(2);
    while per_axis > 2 && (per_axis as f64).powi(n as i32) > CUBE_MAX_POINTS as f64 {
        per_axis -= 1;
    }
    let total = per_axis.pow(n as u32);
    let point = |mut k: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let i = k % per_axis;
                k /= per_axis;
                if i + 1 == per_axis { 1.0 } else { i as f64 / (per_axis - 1) as f64 }
            })
            .collect()
    };
    let (mut best, bk) = (0..total)
        .into_par_iter()
        .map(|k| (f(&point(k)), k))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), |a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }
        });
    let mut arg_best = point(bk);
    let mut step = 1.0 / (per_axis - 1) as f64;
    while step > 1e-9 {
        let mut improved = false;
        for axis in 0..n {
            for dir in [1.0, -1.0] {
                let mut c = arg_best.clone();
                c[axis] = (c[axis] + dir * step).clamp(0.0, 1.0);
                let v = f(&c);
                if v > best {
                    best = v;
                    arg_best = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, arg_best, per_axis)
}

/// Output error bound after swapping a `delta`-Lipschitz activation for one
/// within `gap` of it, with all weights in `[-a, a]`.
pub fn theorem3_bound(delta: f64, a: f64, omega: Ratio<u64>, d: usize, gap: ActivationGap) -> Result<f64> {
    if !(delta > 0.0 && a > 0.0) {
        return Err(arg("delta and A must be positive"));
    }
    if !(gap.value >= 0.0) {
        return Err(arg("gap must be >= 0"));
    }
    let w = *omega.numer() as f64 / *omega.denom() as f64;
    let growth = (d as f64 * (delta * a * w).ln_1p()).exp_m1();
    Ok(gap.value / delta * growth)
}
