//! Empirical approximation error: sup-error estimates, uniform 1-D
//! interpolants, the per-segment lower-bound checks and the activation-swap
//! audit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::activations::{gap, Activation, ActivationGap};
use crate::bounds::{maximize_on_cube, psi, theorem3_bound, BoundConfig};
use crate::error::{arg, Error, Result};
use crate::netgraph::{Network, Segment};
use crate::pwl::{Piece, PwlFunction1D};
use crate::report::AuditReport;
use crate::targets::TargetFunction;

/// Samples drawn per linear piece when measuring a 1-D error.
pub const SAMPLES_PER_PIECE: usize = 4096;
/// Relative slack allowed between a claimed and a measured error.
const EPS_RTOL: f64 = 1e-9;
/// Absolute tolerance of the per-segment lower-bound checks.
pub const CHECK_TOL: f64 = 1e-6;
/// Points used to estimate an activation gap.
const GAP_SAMPLES: usize = 100_001;

/// How to place sample points in a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Tensor grid with `per_axis` points per axis, endpoints included.
    Grid { per_axis: usize },
    /// Uniform random points.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Sampler {
    /// A 512-point grid per axis up to two dimensions, 100 000 random points
    /// above.
    pub fn default_for(n: usize) -> Self {
        if n <= 2 {
            Sampler::Grid { per_axis: 512 }
        } else {
            Sampler::MonteCarlo { samples: 100_000, seed: 0 }
        }
    }

    pub fn len(&self, n: usize) -> usize {
        match *self {
            Sampler::Grid { per_axis } => per_axis.pow(n as u32),
            Sampler::MonteCarlo { samples, .. } => samples,
        }
    }

    pub fn is_empty(&self, n: usize) -> bool {
        self.len(n) == 0
    }

    /// Sample points of `domain`, in a fixed order.
    pub fn points(&self, domain: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
        let n = domain.len();
        match *self {
            Sampler::Grid { per_axis } => {
                if per_axis < 2 {
                    return Err(arg("grid needs at least 2 points per axis"));
                }
                let coord = |i: usize, (lo, hi): (f64, f64)| {
                    if i + 1 == per_axis {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
                    }
                };
                Ok((0..per_axis.pow(n as u32))
                    .map(|mut k| {
                        domain
                            .iter()
                            .map(|&ax| {
                                let i = k % per_axis;
                                k /= per_axis;
                                coord(i, ax)
                            })
                            .collect()
                    })
                    .collect())
            }
            Sampler::MonteCarlo { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..samples)
                    .map(|_| domain.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
                    .collect())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Sampler::Grid { per_axis } => format!("grid per_axis={per_axis}"),
            Sampler::MonteCarlo { samples, seed } => format!("monte_carlo samples={samples} seed={seed}"),
        }
    }
}

/// Something compared against a target function.
#[derive(Clone, Copy, Debug)]
pub enum Approximant<'a> {
    Network(&'a Network),
    /// A function of the segment parameter, compared with the target along
    /// the segment.
    Line { f: &'a PwlFunction1D, segment: &'a Segment },
}

/// Largest `|f - g|` over the sample points.
pub fn sup_error(f: Approximant<'_>, g: &TargetFunction, sampler: Sampler) -> Result<f64> {
    match f {
        Approximant::Network(net) => {
            if net.n_inputs() != g.n() {
                return Err(arg(format!(
                    "network has {} inputs, target has n = {}",
                    net.n_inputs(),
                    g.n()
                )));
            }
            let pts = sampler.points(g.domain())?;
            pts.par_iter()
                .map(|x| Ok((net.forward(x)?.output - g.value(x)).abs()))
                .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
        }
        Approximant::Line { f, segment } => {
            if segment.dim() != g.n() {
                return Err(arg(format!(
                    "segment has dimension {}, target has n = {}",
                    segment.dim(),
                    g.n()
                )));
            }
            let pts = sampler.points(&[(0.0, 1.0)])?;
            pts.par_iter()
                .map(|a| Ok((f.eval(a[0])? - g.value(&segment.point_at(a[0]))).abs()))
                .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
        }
    }
}

/// Error of `f` against `g` along `seg`, sampled on every linear piece of `f`
/// with [`SAMPLES_PER_PIECE`] intervals.
pub fn line_sup_error(f: &PwlFunction1D, g: &TargetFunction, seg: &Segment) -> Result<f64> {
    if seg.dim() != g.n() {
        return Err(arg(format!("segment has dimension {}, target has n = {}", seg.dim(), g.n())));
    }
    let mut worst = 0.0f64;
    for (i, piece) in f.pieces().iter().enumerate() {
        let (lo, hi) = f.interval(i);
        for j in 0..=SAMPLES_PER_PIECE {
            let a = lo + (hi - lo) * j as f64 / SAMPLES_PER_PIECE as f64;
            worst = worst.max((piece.at(a) - g.value(&seg.point_at(a))).abs());
        }
    }
    Ok(worst)
}

/// Chord interpolant of `g` along `seg` at `s + 1` uniform knots, shifted by
/// a constant that centres its error band. Returns the interpolant and its
/// measured sup error.
pub fn uniform_interpolant_1d(g: &TargetFunction, seg: &Segment, s: usize) -> Result<(PwlFunction1D, f64)> {
    if s < 1 {
        return Err(arg("need at least one piece"));
    }
    if seg.dim() != g.n() {
        return Err(arg(format!("segment has dimension {}, target has n = {}", seg.dim(), g.n())));
    }
    let h = |a: f64| g.value(&seg.point_at(a));
    let knot = |k: usize| if k == s { 1.0 } else { k as f64 / s as f64 };
    let mut pieces = Vec::with_capacity(s);
    let (mut lo_err, mut hi_err) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..s {
        let (a0, a1) = (knot(k), knot(k + 1));
        let (h0, h1) = (h(a0), h(a1));
        let slope = (h1 - h0) / (a1 - a0);
        let piece = Piece::new(slope, h0 - slope * a0);
        for j in 0..=SAMPLES_PER_PIECE {
            let a = a0 + (a1 - a0) * j as f64 / SAMPLES_PER_PIECE as f64;
            let e = h(a) - piece.at(a);
            lo_err = lo_err.min(e);
            hi_err = hi_err.max(e);
        }
        pieces.push(piece);
    }
    let shift = 0.5 * (lo_err + hi_err);
    let pieces = pieces
        .into_iter()
        .map(|p| Piece::new(p.slope, p.intercept + shift))
        .collect();
    let f = PwlFunction1D::from_parts((1..s).map(knot).collect(), pieces)?;
    Ok((f, 0.5 * (hi_err - lo_err)))
}

fn ensure_achieved(f: &PwlFunction1D, g: &TargetFunction, seg: &Segment, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(arg(format!("eps must be positive, got {eps}")));
    }
    let measured = line_sup_error(f, g, seg)?;
    if measured > eps * (1.0 + EPS_RTOL) {
        return Err(Error::Precondition(format!(
            "approximation error {measured:e} exceeds eps = {eps:e}"
        )));
    }
    Ok(measured)
}

/// Lower bound `|x - y| Psi / (4 sqrt(eps)) - 1` on the break points of any
/// `eps`-approximation of `g` along `seg`, checked against `f`.
pub fn prop2_check(g: &TargetFunction, seg: &Segment, f: &PwlFunction1D, eps: f64) -> Result<AuditReport> {
    let measured_eps = ensure_achieved(f, g, seg, eps)?;
    let cfg = BoundConfig::default();
    let p = psi(g, &seg.x, &seg.y, &cfg)?;
    let rhs = seg.length() * p.psi / (4.0 * eps.sqrt()) - 1.0;
    Ok(AuditReport::lower("prop2", f.count_breakpoints() as f64, rhs, CHECK_TOL)
        .param("eps", eps)
        .param("measured_eps", measured_eps)
        .param("psi", p.psi)
        .param("length", seg.length())
        .provenance(cfg.provenance()))
}

/// Grid resolution used to locate the largest spectral radius.
const SPECTRAL_GRID: usize = 101;
/// Relative slack on the eigenvector alignment test.
const ALIGN_RTOL: f64 = 1e-6;

/// Laplacian lower bound `sqrt((max |Lap g| / n - delta3 n^1.5)^+ / (16 eps)) - 1`
/// on the break points along a segment of length at least 1 that points
/// along a top eigenvector of the Hessian where its spectral radius peaks.
pub fn prop3_check(g: &TargetFunction, seg: &Segment, f: &PwlFunction1D, eps: f64) -> Result<AuditReport> {
    if !g.is_unit_cube() {
        return Err(arg(format!("target `{}` must live on the unit cube", g.name())));
    }
    if seg.dim() != g.n() {
        return Err(arg(format!("segment has dimension {}, target has n = {}", seg.dim(), g.n())));
    }
    if !(g.contains(&seg.x) && g.contains(&seg.y)) {
        return Err(arg("segment leaves the target domain"));
    }
    if seg.length() < 1.0 {
        return Err(Error::Precondition(format!("segment length {} is below 1", seg.length())));
    }
    let n = g.n();
    let (rho, at, _) = maximize_on_cube(n, SPECTRAL_GRID, |x| g.hessian(x).spectral_radius());
    let dir: Vec<f64> = seg.y.iter().zip(&seg.x).map(|(b, a)| b - a).collect();
    let ray = g.hessian(&at).rayleigh(&dir).abs();
    if ray < rho * (1.0 - ALIGN_RTOL) {
        return Err(Error::Precondition(format!(
            "segment direction has Rayleigh quotient {ray} at {at:?}, spectral radius there is {rho}"
        )));
    }
    let measured_eps = ensure_achieved(f, g, seg, eps)?;
    let (max_lap, _, _) = maximize_on_cube(n, SPECTRAL_GRID, |x| g.laplacian(x).abs());
    let nf = n as f64;
    let inner = (max_lap / nf - g.third_bound() * nf.powf(1.5)).max(0.0);
    let rhs = (inner / (16.0 * eps)).sqrt() - 1.0;
    Ok(AuditReport::lower("prop3", f.count_breakpoints() as f64, rhs, CHECK_TOL)
        .param("eps", eps)
        .param("measured_eps", measured_eps)
        .param("max_abs_laplacian", max_lap)
        .param("spectral_radius", rho))
}

/// Outcome of swapping every hidden activation for another.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SwapAudit {
    pub empirical_sup: f64,
    pub bound: f64,
    pub samples: usize,
    pub margin: f64,
    pub gap: f64,
    pub lipschitz: f64,
    pub weight_bound: f64,
    pub pre_activation_range: (f64, f64),
}

impl SwapAudit {
    pub fn report(&self) -> AuditReport {
        AuditReport::upper("theorem3", self.empirical_sup, self.bound, 0.0)
            .param("samples", self.samples)
            .param("gap", self.gap)
            .param("lipschitz", self.lipschitz)
            .param("A", self.weight_bound)
    }
}

/// Rounding error of `q` when it is `base` quantized.
fn quantization_gap(a: &Activation, q: &Activation) -> Option<f64> {
    match (a, q) {
        (Activation::Lipschitz(l), Activation::Quantized { base, bits }) if l.name() == base.name() => {
            Some(2f64.powi(-(*bits as i32) - 1))
        }
        _ => None,
    }
}

/// Compares the network under `sigma1` (Lipschitz) and `sigma2` on sampled
/// inputs of `[0,1]^n` and evaluates the swap bound with the activation gap
/// over the observed pre-activation range.
pub fn swap_audit(
    net: &Network,
    sigma1: &Activation,
    sigma2: &Activation,
    a: f64,
    sampler: Sampler,
) -> Result<SwapAudit> {
    if !(a > 0.0) {
        return Err(arg(format!("A must be positive, got {a}")));
    }
    let lipschitz = sigma1.lipschitz().ok_or_else(|| {
        Error::Precondition(format!("activation `{}` has no known Lipschitz constant", sigma1.name()))
    })?;
    if !(lipschitz > 0.0) {
        return Err(Error::Precondition(format!(
            "activation `{}` has Lipschitz constant {lipschitz}",
            sigma1.name()
        )));
    }
    for e in net.edges() {
        if e.weight.abs() > a {
            return Err(Error::Precondition(format!(
                "edge {} -> {} has weight {} outside [-{a}, {a}]",
                net.node_name(e.from),
                net.node_name(e.to),
                e.weight
            )));
        }
    }
    let profile = net.depth_profile()?;
    let pts = sampler.points(&vec![(0.0, 1.0); net.n_inputs()])?;
    let (sup, lo, hi) = pts
        .par_iter()
        .map(|x| {
            let p = net.forward_with(x, sigma1)?;
            let q = net.forward_with(x, sigma2)?;
            let (lo, hi) = p
                .pre_activations
                .iter()
                .chain(&q.pre_activations)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &z| (l.min(z), h.max(z)));
            Ok::<_, Error>(((p.output - q.output).abs(), lo, hi))
        })
        .try_reduce(
            || (0.0, f64::INFINITY, f64::NEG_INFINITY),
            |a, b| Ok((a.0.max(b.0), a.1.min(b.1), a.2.max(b.2))),
        )?;
    let range = if lo <= hi { (lo, hi) } else { (0.0, 0.0) };
    let mut g = gap(sigma1, sigma2, range, GAP_SAMPLES)?.value;
    if let Some(q) = quantization_gap(sigma1, sigma2) {
        g = g.max(q);
    }
    let bound = theorem3_bound(lipschitz, a, profile.omega, profile.depth, ActivationGap { value: g })?;
    Ok(SwapAudit {
        empirical_sup: sup,
        bound,
        samples: pts.len(),
        margin: bound - sup,
        gap: g,
        lipschitz,
        weight_bound: a,
        pre_activation_range: range,
    })
}
