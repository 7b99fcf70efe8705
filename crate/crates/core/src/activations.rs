//! Activation functions.
//!
//! [`PwlActivation`] describes a `t`-piece piecewise-linear activation, possibly
//! discontinuous, by its interval boundaries and one affine piece per interval.
//! [`LipschitzActivation`] wraps an arbitrary scalar map together with a
//! declared Lipschitz constant. [`Activation`] is what network units carry.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::pwl::Piece;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlActivation {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    boundaries: Vec<f64>,
    pieces: Vec<Piece>,
}

impl PwlActivation {
    pub fn new(name: impl Into<String>, boundaries: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        let act = Self {
            name: name.into(),
            boundaries,
            pieces,
        };
        act.check()?;
        Ok(act)
    }

    fn check(&self) -> Result<()> {
        if self.pieces.len() != self.boundaries.len() + 1 {
            return Err(arg(format!(
                "activation `{}`: {} pieces for {} boundaries",
                self.name,
                self.pieces.len(),
                self.boundaries.len()
            )));
        }
        if self.boundaries.iter().any(|b| !b.is_finite())
            || self.boundaries.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(arg(format!(
                "activation `{}`: boundaries must be finite and strictly increasing",
                self.name
            )));
        }
        if self
            .pieces
            .iter()
            .any(|p| !p.slope.is_finite() || !p.intercept.is_finite())
        {
            return Err(arg(format!("activation `{}`: non-finite piece", self.name)));
        }
        Ok(())
    }

    pub fn relu() -> Self {
        Self::leaky_relu(0.0).named("relu")
    }

    pub fn leaky_relu(a: f64) -> Self {
        Self {
            name: format!("leaky-relu({a})"),
            boundaries: vec![0.0],
            pieces: vec![Piece::new(a, 0.0), Piece::new(1.0, 0.0)],
        }
    }

    pub fn hard_tanh() -> Self {
        Self {
            name: "hard-tanh".into(),
            boundaries: vec![-1.0, 1.0],
            pieces: vec![
                Piece::new(0.0, -1.0),
                Piece::new(1.0, 0.0),
                Piece::new(0.0, 1.0),
            ],
        }
    }

    /// Heaviside threshold: 0 below the origin, 1 from the origin on.
    pub fn step() -> Self {
        Self {
            name: "step".into(),
            boundaries: vec![0.0],
            pieces: vec![Piece::new(0.0, 0.0), Piece::new(0.0, 1.0)],
        }
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            boundaries: Vec::new(),
            pieces: vec![Piece::new(1.0, 0.0)],
        }
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Number of linear pieces.
    pub fn t(&self) -> usize {
        self.pieces.len()
    }

    /// 1-based index of the interval containing `v`; boundaries belong to the
    /// interval on their right.
    #[inline]
    pub fn state_of(&self, v: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= v) + 1
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        self.pieces[self.state_of(v) - 1].at(v)
    }

    pub fn is_continuous(&self) -> bool {
        self.boundaries.iter().enumerate().all(|(i, &b)| {
            let (l, r) = (self.pieces[i].at(b), self.pieces[i + 1].at(b));
            (l - r).abs() <= 1e-12 * 1f64.max(l.abs())
        })
    }

    /// Largest absolute slope when continuous, `None` otherwise.
    pub fn lipschitz(&self) -> Option<f64> {
        self.is_continuous().then(|| {
            self.pieces
                .iter()
                .map(|p| p.slope.abs())
                .fold(0.0, f64::max)
        })
    }
}

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LipschitzActivation {
    name: String,
    map: ScalarMap,
    lipschitz: f64,
}

impl fmt::Debug for LipschitzActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzActivation")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Range and pair count used to spot-check declared Lipschitz constants.
#[derive(Clone, Copy, Debug)]
pub struct LipschitzCheck {
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for LipschitzCheck {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            pairs: 10_000,
            seed: 0,
        }
    }
}

impl LipschitzActivation {
    pub fn new(
        name: impl Into<String>,
        map: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self> {
        Self::with_check(name, map, lipschitz, LipschitzCheck::default())
    }

    /// Builds the activation and spot-checks `lipschitz` against difference
    /// quotients of random pairs drawn from `check`.
    pub fn with_check(
        name: impl Into<String>,
        map: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        check: LipschitzCheck,
    ) -> Result<Self> {
        let name = name.into();
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(arg(format!("activation `{name}`: Lipschitz constant must be > 0")));
        }
        if !(check.lo < check.hi) {
            return Err(arg("Lipschitz check range is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
        for _ in 0..check.pairs {
            let a = rng.gen_range(check.lo..check.hi);
            let b = rng.gen_range(check.lo..check.hi);
            if a == b {
                continue;
            }
            let q = (map(a) - map(b)).abs() / (a - b).abs();
            if q > lipschitz * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Precondition(format!(
                    "activation `{name}`: difference quotient {q} at ({a}, {b}) exceeds declared Lipschitz constant {lipschitz}"
                )));
            }
        }
        Ok(Self {
            name,
            map: Arc::new(map),
            lipschitz,
        })
    }

    pub fn sigmoid() -> Self {
        Self {
            name: "sigmoid".into(),
            map: Arc::new(sigmoid),
            lipschitz: 0.25,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        (self.map)(v)
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Activation attached to a hidden unit.
#[derive(Clone, Debug)]
pub enum Activation {
    Pwl(PwlActivation),
    Lipschitz(LipschitzActivation),
    /// Output of `base` rounded to `bits` fractional bits, ties to even.
    Quantized { base: LipschitzActivation, bits: u32 },
}

impl Activation {
    pub fn name(&self) -> String {
        match self {
            Activation::Pwl(p) => p.name.clone(),
            Activation::Lipschitz(l) => l.name.clone(),
            Activation::Quantized { base, bits } => format!("{}-q({bits})", base.name),
        }
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Activation::Pwl(p) => p.eval(v),
            Activation::Lipschitz(l) => l.eval(v),
            Activation::Quantized { base, bits } => {
                let scale = 2f64.powi(*bits as i32);
                (base.eval(v) * scale).round_ties_even() / scale
            }
        }
    }

    pub fn as_pwl(&self) -> Option<&PwlActivation> {
        match self {
            Activation::Pwl(p) => Some(p),
            _ => None,
        }
    }

    /// Lipschitz constant when one is known.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Activation::Pwl(p) => p.lipschitz(),
            Activation::Lipschitz(l) => Some(l.lipschitz),
            Activation::Quantized { .. } => None,
        }
    }
}

impl From<PwlActivation> for Activation {
    fn from(p: PwlActivation) -> Self {
        Activation::Pwl(p)
    }
}

impl From<LipschitzActivation> for Activation {
    fn from(l: LipschitzActivation) -> Self {
        Activation::Lipschitz(l)
    }
}

fn parse_call<'a>(name: &'a str, head: &str) -> Option<&'a str> {
    name.strip_prefix(head)?
        .strip_prefix('(')?
        .strip_suffix(')')
        .map(str::trim)
}

/// Looks up a built-in activation by name: `relu`, `leaky-relu(a)`,
/// `hard-tanh`, `step`, `identity`, `sigmoid`, `sigmoid-q(k)`.
pub fn builtin(name: &str) -> Result<Activation> {
    let name = name.trim();
    let act = match name {
        "relu" => PwlActivation::relu().into(),
        "hard-tanh" => PwlActivation::hard_tanh().into(),
        "step" => PwlActivation::step().into(),
        "identity" => PwlActivation::identity().into(),
        "sigmoid" => LipschitzActivation::sigmoid().into(),
        _ => {
            if let Some(a) = parse_call(name, "leaky-relu") {
                let a: f64 = a
                    .parse()
                    .map_err(|_| arg(format!("bad leaky-relu slope in `{name}`")))?;
                if !a.is_finite() {
                    return Err(arg(format!("bad leaky-relu slope in `{name}`")));
                }
                PwlActivation::leaky_relu(a).into()
            } else if let Some(k) = parse_call(name, "sigmoid-q") {
                let bits: u32 = k
                    .parse()
                    .map_err(|_| arg(format!("bad bit count in `{name}`")))?;
                if bits == 0 || bits > 52 {
                    return Err(arg(format!("bit count in `{name}` must be in 1..=52")));
                }
                Activation::Quantized {
                    base: LipschitzActivation::sigmoid(),
                    bits,
                }
            } else {
                return Err(arg(format!("unknown activation `{name}`")));
            }
        }
    };
    Ok(act)
}

impl Serialize for Activation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Activation::Pwl(p) => {
                let is_builtin = builtin(&p.name)
                    .ok()
                    .and_then(|b| b.as_pwl().map(|q| q == p))
                    .unwrap_or(false);
                if is_builtin {
                    s.serialize_str(&p.name)
                } else {
                    p.serialize(s)
                }
            }
            other => s.serialize_str(&other.name()),
        }
    }
}

impl<'de> Deserialize<'de> for Activation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Inline(PwlActivation),
        }
        match Repr::deserialize(d)? {
            Repr::Name(n) => builtin(&n).map_err(de::Error::custom),
            Repr::Inline(p) => {
                p.check().map_err(de::Error::custom)?;
                Ok(Activation::Pwl(p))
            }
        }
    }
}

/// Sup-norm distance between two activations, in output units.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct ActivationGap {
    pub value: f64,
}

/// Largest `|a(v) - b(v)|` over `samples` evenly spaced points of `[lo, hi]`.
/// When both activations are piecewise linear, the boundaries inside the
/// range (and the left limits there) are evaluated too, which makes the
/// estimate exact.
pub fn gap(a: &Activation, b: &Activation, range: (f64, f64), samples: usize) -> Result<ActivationGap> {
    let (lo, hi) = range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(arg(format!("empty range [{lo}, {hi}]")));
    }
    if samples < 2 {
        return Err(arg("gap needs at least 2 samples"));
    }
    let diff = |v: f64| (a.eval(v) - b.eval(v)).abs();
    let step = (hi - lo) / (samples - 1) as f64;
    let mut best = (0..samples)
        .map(|i| diff(if i + 1 == samples { hi } else { lo + step * i as f64 }))
        .fold(0.0, f64::max);
    if let (Some(p), Some(q)) = (a.as_pwl(), b.as_pwl()) {
        let left = |act: &PwlActivation, v: f64| {
            let idx = act.boundaries.partition_point(|&x| x < v);
            act.pieces[idx].at(v)
        };
        for &bd in p.boundaries.iter().chain(&q.boundaries) {
            if bd >= lo && bd <= hi {
                best = best.max(diff(bd));
                if bd > lo {
                    best = best.max((left(p, bd) - left(q, bd)).abs());
                }
            }
        }
    }
    Ok(ActivationGap { value: best })
}
