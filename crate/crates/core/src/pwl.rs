//! Piecewise-linear functions of a scalar parameter on `[0, 1]`.
//!
//! A [`PwlFunction1D`] is stored as sorted break points in the open interval
//! plus one affine piece per sub-interval. Pieces are left-closed and
//! right-open, the last one is closed at `1`. Jumps are allowed: a break point
//! whose one-sided values differ is a discontinuity and still counts as a
//! break point.

use serde::{Deserialize, Serialize};

use crate::activations::PwlActivation;
use crate::error::{arg, Error, Result};

/// Break points closer than this are coalesced into one.
pub const BREAKPOINT_EPS: f64 = 1e-12;
/// Relative tolerance used to decide whether a junction is mergeable.
pub const MERGE_RTOL: f64 = 1e-9;

/// An affine map `slope * a + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub slope: f64,
    pub intercept: f64,
}

impl Piece {
    pub const fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    #[inline]
    pub fn at(&self, a: f64) -> f64 {
        self.slope * a + self.intercept
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwlFunction1D {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
}

/// One maximal run of constant activation state along `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateInterval {
    /// 1-based index of the activation interval.
    pub state: usize,
    pub start: f64,
    pub end: f64,
}

pub type StateTrace = Vec<StateInterval>;

impl PwlFunction1D {
    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            pieces: vec![Piece::new(slope, intercept)],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::affine(0.0, c)
    }

    pub fn identity() -> Self {
        Self::affine(1.0, 0.0)
    }

    /// Builds a function from explicit break points and pieces, then
    /// normalizes it.
    pub fn from_parts(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(arg(format!(
                "{} pieces for {} break points",
                pieces.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(arg("break points must lie in the open interval (0, 1)"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(arg("break points must be strictly increasing"));
        }
        if pieces
            .iter()
            .any(|p| !p.slope.is_finite() || !p.intercept.is_finite())
        {
            return Err(arg("pieces must have finite coefficients"));
        }
        Ok(Self::normalized(breakpoints, pieces))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Number of break points on the open interval.
    pub fn count_breakpoints(&self) -> usize {
        self.breakpoints.len()
    }

    /// Number of linear pieces, `count_breakpoints() + 1`.
    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    #[inline]
    fn piece_index(&self, a: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= a)
    }

    /// The piece that is active at `a` under the left-closed convention.
    /// Does not check the domain.
    #[inline]
    pub fn piece_at(&self, a: f64) -> &Piece {
        &self.pieces[self.piece_index(a)]
    }

    pub fn eval(&self, a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Domain {
                value: a,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(self.piece_at(a).at(a))
    }

    /// Limit of the function as the parameter approaches `a` from the left.
    pub fn left_limit(&self, a: f64) -> Result<f64> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Domain {
                value: a,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let idx = self.breakpoints.partition_point(|&b| b < a);
        Ok(self.pieces[idx].at(a))
    }

    /// Size of the jump at break point `i` (right value minus left value).
    pub fn jump(&self, i: usize) -> f64 {
        let b = self.breakpoints[i];
        self.pieces[i + 1].at(b) - self.pieces[i].at(b)
    }

    /// Sub-interval `[start, end)` covered by piece `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let start = if i == 0 { 0.0 } else { self.breakpoints[i - 1] };
        let end = self.breakpoints.get(i).copied().unwrap_or(1.0);
        (start, end)
    }

    /// Re-applies normalization. Idempotent on values that are already
    /// normalized.
    pub fn normalize(&self) -> Self {
        Self::normalized(self.breakpoints.clone(), self.pieces.clone())
    }

    fn normalized(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Self {
        debug_assert_eq!(pieces.len(), breakpoints.len() + 1);

        // Coalesce near-duplicate break points and drop those touching the
        // domain ends. The sliver piece between two coalesced points goes away.
        let mut bps: Vec<f64> = Vec::with_capacity(breakpoints.len());
        let mut ps: Vec<Piece> = Vec::with_capacity(pieces.len());
        ps.push(pieces[0]);
        for (i, &b) in breakpoints.iter().enumerate() {
            let next = pieces[i + 1];
            let prev = bps.last().copied().unwrap_or(0.0);
            if b - prev < BREAKPOINT_EPS {
                *ps.last_mut().unwrap() = next;
            } else if 1.0 - b < BREAKPOINT_EPS {
                break;
            } else {
                bps.push(b);
                ps.push(next);
            }
        }

        // Merge junctions that are neither a kink nor a jump.
        let mut out_b: Vec<f64> = Vec::with_capacity(bps.len());
        let mut out_p: Vec<Piece> = Vec::with_capacity(ps.len());
        out_p.push(ps[0]);
        for (i, &b) in bps.iter().enumerate() {
            let left = *out_p.last().unwrap();
            let right = ps[i + 1];
            if !is_junction(&left, &right, b) {
                continue;
            }
            out_b.push(b);
            out_p.push(right);
        }
        Self {
            breakpoints: out_b,
            pieces: out_p,
        }
    }

    /// `sum_i coeffs[i] * fs[i](a) + bias`, normalized.
    pub fn affine_combine(coeffs: &[f64], fs: &[&PwlFunction1D], bias: f64) -> Result<Self> {
        if coeffs.len() != fs.len() {
            return Err(arg(format!(
                "{} coefficients for {} functions",
                coeffs.len(),
                fs.len()
            )));
        }
        if fs.is_empty() {
            return Err(arg("affine_combine needs at least one function"));
        }
        let mut knots: Vec<f64> = fs
            .iter()
            .flat_map(|f| f.breakpoints.iter().copied())
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|b, a| *b - *a < BREAKPOINT_EPS);

        let mut pieces = Vec::with_capacity(knots.len() + 1);
        let mut start = 0.0;
        for k in 0..=knots.len() {
            let end = knots.get(k).copied().unwrap_or(1.0);
            let mid = 0.5 * (start + end);
            let mut slope = 0.0;
            let mut intercept = bias;
            for (c, f) in coeffs.iter().zip(fs) {
                let p = f.piece_at(mid);
                slope += c * p.slope;
                intercept += c * p.intercept;
            }
            pieces.push(Piece::new(slope, intercept));
            start = end;
        }
        Ok(Self::normalized(knots, pieces))
    }

    /// `sigma(self(a))`, normalized. New break points appear where the
    /// argument crosses an activation boundary.
    pub fn apply_activation(&self, sigma: &PwlActivation) -> Self {
        let segs = activation_segments(sigma, self);
        let mut breakpoints = Vec::with_capacity(segs.len().saturating_sub(1));
        let mut pieces = Vec::with_capacity(segs.len());
        for (i, seg) in segs.iter().enumerate() {
            if i > 0 {
                breakpoints.push(seg.start);
            }
            let out = sigma.pieces()[seg.state - 1];
            pieces.push(Piece::new(
                out.slope * seg.pre.slope,
                out.slope * seg.pre.intercept + out.intercept,
            ));
        }
        Self::normalized(breakpoints, pieces)
    }

    /// Maximal runs of constant `sigma` state as the parameter sweeps `[0, 1]`.
    pub fn state_trace(&self, sigma: &PwlActivation) -> StateTrace {
        let mut trace: StateTrace = Vec::new();
        for seg in activation_segments(sigma, self) {
            match trace.last_mut() {
                Some(last) if last.state == seg.state => last.end = seg.end,
                _ => trace.push(StateInterval {
                    state: seg.state,
                    start: seg.start,
                    end: seg.end,
                }),
            }
        }
        trace
    }
}

fn is_junction(left: &Piece, right: &Piece, at: f64) -> bool {
    let slope_tol = MERGE_RTOL * 1f64.max(left.slope.abs()).max(right.slope.abs());
    let lv = left.at(at);
    let rv = right.at(at);
    let value_tol = MERGE_RTOL * 1f64.max(lv.abs()).max(rv.abs());
    (left.slope - right.slope).abs() > slope_tol || (lv - rv).abs() > value_tol
}

struct ActSegment {
    start: f64,
    end: f64,
    state: usize,
    pre: Piece,
}

/// Splits `[0, 1]` into sub-intervals on which both `f` is affine and
/// `sigma` stays in one state. Slivers narrower than [`BREAKPOINT_EPS`] are
/// absorbed by their left neighbour.
fn activation_segments(sigma: &PwlActivation, f: &PwlFunction1D) -> Vec<ActSegment> {
    let mut segs: Vec<ActSegment> = Vec::with_capacity(f.num_pieces());
    let mut cuts: Vec<f64> = Vec::new();
    for (k, piece) in f.pieces.iter().enumerate() {
        let (a, b) = f.interval(k);
        cuts.clear();
        cuts.push(a);
        if piece.slope != 0.0 {
            for &beta in sigma.boundaries() {
                let alpha = (beta - piece.intercept) / piece.slope;
                if alpha > a && alpha < b {
                    cuts.push(alpha);
                }
            }
            cuts[1..].sort_by(f64::total_cmp);
        }
        cuts.push(b);
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi - lo < BREAKPOINT_EPS {
                if let Some(last) = segs.last_mut() {
                    last.end = hi;
                }
                continue;
            }
            let state = sigma.state_of(piece.at(0.5 * (lo + hi)));
            let start = segs.last().map_or(0.0, |s| s.end);
            segs.push(ActSegment {
                start,
                end: hi,
                state,
                pre: *piece,
            });
        }
    }
    if segs.is_empty() {
        // Degenerate: every sub-interval was a sliver.
        let p = f.pieces[0];
        segs.push(ActSegment {
            start: 0.0,
            end: 1.0,
            state: sigma.state_of(p.at(0.5)),
            pre: p,
        });
    }
    if let Some(last) = segs.last_mut() {
        last.end = 1.0;
    }
    segs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::PwlActivation;
    use approx::assert_abs_diff_eq;

    fn tent(at: f64) -> PwlFunction1D {
        // Rises with slope 1 until `at`, then falls with slope -1.
        PwlFunction1D::from_parts(
            vec![at],
            vec![Piece::new(1.0, 0.0), Piece::new(-1.0, 2.0 * at)],
        )
        .unwrap()
    }

    /// Counts slope changes and jumps by dense sampling, independent of the
    /// stored representation.
    fn sampled_kinks(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| f(i as f64 * h)).collect();
        let slopes: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut kinks = Vec::new();
        for i in 1..slopes.len() {
            if (slopes[i] - slopes[i - 1]).abs() > 1e-6 {
                let x = i as f64 * h;
                if kinks.last().is_none_or(|&k: &f64| x - k > 2.0 * h) {
                    kinks.push(x);
                }
            }
        }
        kinks
    }

    #[test]
    fn eval_affine() {
        let f = PwlFunction1D::affine(2.0, -1.0);
        assert_eq!(f.eval(0.5).unwrap(), 0.0);
        let id = PwlFunction1D::identity();
        assert_eq!(id.eval(0.0).unwrap(), 0.0);
        assert_eq!(id.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_at_breakpoint_takes_right_piece() {
        let f = PwlFunction1D::from_parts(
            vec![0.3],
            vec![Piece::new(1.0, 0.0), Piece::new(-1.0, 0.6)],
        )
        .unwrap();
        // Oracle: one-sided limits by sampling straddling 0.3.
        let left = f.eval(0.3 - 1e-9).unwrap();
        let right = f.eval(0.3 + 1e-9).unwrap();
        assert_abs_diff_eq!(left, 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(right, 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(f.eval(0.3).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(*f.piece_at(0.3), Piece::new(-1.0, 0.6));
    }

    #[test]
    fn eval_out_of_domain() {
        let f = PwlFunction1D::identity();
        assert!(matches!(f.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(f.eval(1.5), Err(Error::Domain { .. })));
        assert!(f.eval(f64::NAN).is_err());
    }

    #[test]
    fn from_parts_rejects_bad_input() {
        assert!(PwlFunction1D::from_parts(vec![0.5], vec![Piece::new(1.0, 0.0)]).is_err());
        assert!(PwlFunction1D::from_parts(
            vec![0.6, 0.4],
            vec![Piece::new(1.0, 0.0); 3]
        )
        .is_err());
        assert!(PwlFunction1D::from_parts(vec![0.0], vec![Piece::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn from_parts_merges_collinear() {
        let f = PwlFunction1D::from_parts(
            vec![0.25, 0.5],
            vec![Piece::new(1.0, 0.0); 3],
        )
        .unwrap();
        assert_eq!(f.count_breakpoints(), 0);
    }

    #[test]
    fn combine_affine_inputs_stay_affine() {
        let a = PwlFunction1D::affine(3.0, 1.0);
        let b = PwlFunction1D::affine(-2.0, 0.5);
        let c = PwlFunction1D::affine_combine(&[0.7, -1.3], &[&a, &b], 0.2).unwrap();
        assert_eq!(c.count_breakpoints(), 0);
    }

    #[test]
    fn combine_two_tents() {
        let (t1, t2) = (tent(0.3), tent(0.7));
        let c = PwlFunction1D::affine_combine(&[1.0, 1.0], &[&t1, &t2], 0.0).unwrap();
        assert_eq!(c.breakpoints(), &[0.3, 0.7]);
        let kinks = sampled_kinks(|a| t1.eval(a).unwrap() + t2.eval(a).unwrap(), 10_000);
        assert_eq!(kinks.len(), 2);
        assert_abs_diff_eq!(kinks[0], 0.3, epsilon = 1e-3);
        assert_abs_diff_eq!(kinks[1], 0.7, epsilon = 1e-3);
        assert_eq!(c.count_breakpoints(), kinks.len());
    }

    #[test]
    fn combine_cancellation() {
        let t = tent(0.4);
        let c = PwlFunction1D::affine_combine(&[1.0, -1.0], &[&t, &t], 0.0).unwrap();
        assert_eq!(c.count_breakpoints(), 0);
        assert_eq!(c.eval(0.4).unwrap(), 0.0);
    }

    #[test]
    fn combine_length_mismatch() {
        let t = tent(0.4);
        assert!(PwlFunction1D::affine_combine(&[1.0, 2.0], &[&t], 0.0).is_err());
        assert!(PwlFunction1D::affine_combine(&[], &[], 0.0).is_err());
    }

    #[test]
    fn relu_of_line_has_one_kink() {
        let f = PwlFunction1D::affine(2.0, -1.0);
        let g = f.apply_activation(&PwlActivation::relu());
        assert_eq!(g.breakpoints(), &[0.5]);
        assert_eq!(g.pieces(), &[Piece::new(0.0, 0.0), Piece::new(2.0, -1.0)]);
        assert_eq!(g.count_breakpoints(), 1);
    }

    #[test]
    fn relu_of_nonnegative_is_identity() {
        let f = PwlFunction1D::identity();
        let g = f.apply_activation(&PwlActivation::relu());
        assert_eq!(g, f);
    }

    #[test]
    fn step_creates_jump() {
        let f = PwlFunction1D::affine(2.0, -1.0);
        let g = f.apply_activation(&PwlActivation::step());
        assert_eq!(g.breakpoints(), &[0.5]);
        // One-sided limits by sampling on either side of 0.5.
        let left = g.eval(0.5 - 1e-7).unwrap();
        let right = g.eval(0.5 + 1e-7).unwrap();
        assert_abs_diff_eq!(right - left, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.jump(0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.left_limit(0.5).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_has_no_breakpoints() {
        assert_eq!(PwlFunction1D::constant(3.0).count_breakpoints(), 0);
    }

    #[test]
    fn state_trace_relu() {
        let f = PwlFunction1D::affine(2.0, -1.0);
        let trace = f.state_trace(&PwlActivation::relu());
        assert_eq!(
            trace,
            vec![
                StateInterval { state: 1, start: 0.0, end: 0.5 },
                StateInterval { state: 2, start: 0.5, end: 1.0 },
            ]
        );
    }

    #[test]
    fn state_trace_constant_inside_interval() {
        let f = PwlFunction1D::constant(0.3);
        for sigma in [PwlActivation::relu(), PwlActivation::hard_tanh(), PwlActivation::step()] {
            let trace = f.state_trace(&sigma);
            assert_eq!(trace.len(), 1);
            assert_eq!((trace[0].start, trace[0].end), (0.0, 1.0));
        }
    }

    #[test]
    fn state_trace_three_pieces() {
        let sigma = PwlActivation::new(
            "clip-half",
            vec![-0.5, 0.5],
            vec![Piece::new(0.0, -0.5), Piece::new(1.0, 0.0), Piece::new(0.0, 0.5)],
        )
        .unwrap();
        let f = PwlFunction1D::affine(2.0, -1.0);
        let trace = f.state_trace(&sigma);
        let states: Vec<usize> = trace.iter().map(|s| s.state).collect();
        assert_eq!(states, vec![1, 2, 3]);
        assert_abs_diff_eq!(trace[1].start, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(trace[2].start, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn near_duplicate_breakpoints_coalesce() {
        let f = PwlFunction1D::from_parts(
            vec![0.5, 0.5 + 1e-13],
            vec![Piece::new(0.0, 0.0), Piece::new(5.0, 1.0), Piece::new(1.0, -0.5)],
        )
        .unwrap();
        assert_eq!(f.count_breakpoints(), 1);
    }
}
