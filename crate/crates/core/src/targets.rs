//! Twice-differentiable target functions on boxes.

use std::fmt;
use std::sync::Arc;

use crate::error::{arg, Result};
use crate::linalg::SymMatrix;

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Names accepted by [`catalog`].
pub const CATALOG: [&str; 4] = ["sq_norm", "poly_a", "poly_g1", "poly_g2"];

/// Central-difference step for gradients of opaque functions.
pub const FD_GRAD_STEP: f64 = 1e-6;
/// Central-difference step for Hessians of opaque functions.
pub const FD_HESS_STEP: f64 = 1e-4;

#[derive(Clone)]
enum Kind {
    SqNorm,
    /// `a x1^2 + b x2^2 + x1^2 x2^2`
    Quartic { a: f64, b: f64 },
    Custom(ValueFn),
}

#[derive(Clone)]
pub struct TargetFunction {
    name: String,
    n: usize,
    domain: Vec<(f64, f64)>,
    kind: Kind,
    third_bound: f64,
    mu: Option<f64>,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("domain", &self.domain)
            .field("third_bound", &self.third_bound)
            .field("mu", &self.mu)
            .finish()
    }
}

/// Catalog lookup. `n` only applies to `sq_norm` (default 2); the other
/// entries are bivariate.
pub fn catalog(name: &str, n: Option<usize>) -> Result<TargetFunction> {
    let quartic = |a, b, mu| TargetFunction {
        name: name.to_string(),
        n: 2,
        domain: vec![(0.0, 1.0); 2],
        kind: Kind::Quartic { a, b },
        third_bound: 4.0,
        mu,
    };
    let g = match name {
        "sq_norm" => {
            let n = n.unwrap_or(2);
            if n == 0 {
                return Err(arg("sq_norm needs n >= 1"));
            }
            return Ok(TargetFunction {
                name: name.to_string(),
                n,
                domain: vec![(0.0, 1.0); n],
                kind: Kind::SqNorm,
                third_bound: 0.0,
                mu: Some(2.0),
            });
        }
        // Smallest Hessian eigenvalue on the unit square is 18, at (1, 1).
        "poly_a" | "poly_g2" => quartic(10.0, 10.0, Some(18.0)),
        "poly_g1" => quartic(20.0, -2.0, None),
        other => {
            return Err(arg(format!(
                "unknown target `{other}` (expected one of {})",
                CATALOG.join(", ")
            )))
        }
    };
    if let Some(k) = n {
        if k != 2 {
            return Err(arg(format!("target `{name}` is defined for n = 2, got {k}")));
        }
    }
    Ok(g)
}

impl TargetFunction {
    /// User-supplied target; derivatives come from central differences and
    /// `third_bound` must be declared by the caller.
    pub fn custom(
        name: impl Into<String>,
        domain: Vec<(f64, f64)>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        third_bound: f64,
        mu: Option<f64>,
    ) -> Result<Self> {
        if domain.is_empty() {
            return Err(arg("domain must have at least one axis"));
        }
        if domain.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(arg("domain axes must be finite with lo < hi"));
        }
        if !(third_bound >= 0.0) {
            return Err(arg("third_bound must be >= 0"));
        }
        if mu.is_some_and(|m| !(m > 0.0)) {
            return Err(arg("mu must be > 0"));
        }
        Ok(Self {
            name: name.into(),
            n: domain.len(),
            domain,
            kind: Kind::Custom(Arc::new(value)),
            third_bound,
            mu,
        })
    }

    /// Same function on a different box.
    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Result<Self> {
        if domain.len() != self.n {
            return Err(arg(format!("domain has {} axes, target has n = {}", domain.len(), self.n)));
        }
        if domain.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(arg("domain axes must be finite with lo < hi"));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn third_bound(&self) -> f64 {
        self.third_bound
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self.kind, Kind::Custom(_))
    }

    pub fn is_unit_cube(&self) -> bool {
        self.domain.iter().all(|&(lo, hi)| lo == 0.0 && hi == 1.0)
    }

    /// Euclidean diameter of the domain box.
    pub fn diameter(&self) -> f64 {
        self.domain.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
    }

    /// The `2^n` corners of the domain.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        (0..1usize << self.n)
            .map(|mask| {
                self.domain
                    .iter()
                    .enumerate()
                    .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                    .collect()
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n && x.iter().zip(&self.domain).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::SqNorm => x.iter().map(|v| v * v).sum(),
            Kind::Quartic { a, b } => {
                let (p, q) = (x[0] * x[0], x[1] * x[1]);
                a * p + b * q + p * q
            }
            Kind::Custom(f) => f(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::SqNorm => x.iter().map(|v| 2.0 * v).collect(),
            Kind::Quartic { a, b } => {
                let (p, q) = (x[0] * x[0], x[1] * x[1]);
                vec![2.0 * a * x[0] + 2.0 * x[0] * q, 2.0 * b * x[1] + 2.0 * p * x[1]]
            }
            Kind::Custom(f) => fd_gradient_unchecked(f.as_ref(), x, FD_GRAD_STEP),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> SymMatrix {
        match &self.kind {
            Kind::SqNorm => SymMatrix::identity(self.n).scale(2.0),
            Kind::Quartic { a, b } => {
                let (p, q) = (x[0] * x[0], x[1] * x[1]);
                let m = 4.0 * x[0] * x[1];
                SymMatrix::from_rows(&[vec![2.0 * a + 2.0 * q, m], vec![m, 2.0 * b + 2.0 * p]])
            }
            Kind::Custom(f) => fd_hessian_unchecked(f.as_ref(), x, FD_HESS_STEP),
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        self.hessian(x).trace()
    }
}

/// Trace of the Hessian of `g` at `x`.
pub fn laplacian(g: &TargetFunction, x: &[f64]) -> f64 {
    g.laplacian(x)
}

/// Central second differences of `f` at `x`, symmetrized. `x` must stay
/// at least `h` inside `domain` on every axis.
pub fn fd_hessian(
    f: &dyn Fn(&[f64]) -> f64,
    domain: &[(f64, f64)],
    x: &[f64],
    h: f64,
) -> Result<SymMatrix> {
    if !(h > 0.0) {
        return Err(arg("step must be > 0"));
    }
    if x.len() != domain.len() {
        return Err(arg(format!("point has dimension {}, domain has {}", x.len(), domain.len())));
    }
    for (i, (&v, &(lo, hi))) in x.iter().zip(domain).enumerate() {
        if v - h < lo || v + h > hi {
            return Err(arg(format!(
                "coordinate {i} = {v} is within {h} of the domain boundary [{lo}, {hi}]"
            )));
        }
    }
    Ok(fd_hessian_unchecked(f, x, h))
}

fn fd_hessian_unchecked(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> SymMatrix {
    let n = x.len();
    let mut m = SymMatrix::zeros(n);
    let mut p = x.to_vec();
    let f0 = f(x);
    let at = |p: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, d) in moves {
            p[i] += d;
        }
        let v = f(p);
        for &(i, d) in moves {
            p[i] -= d;
        }
        v
    };
    for i in 0..n {
        let fp = at(&mut p, &[(i, h)]);
        let fm = at(&mut p, &[(i, -h)]);
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let pp = at(&mut p, &[(i, h), (j, h)]);
            let pm = at(&mut p, &[(i, h), (j, -h)]);
            let mp = at(&mut p, &[(i, -h), (j, h)]);
            let mm = at(&mut p, &[(i, -h), (j, -h)]);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Central first differences.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    fd_gradient_unchecked(f, x, h)
}

fn fd_gradient_unchecked(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let fp = f(&p);
            p[i] = x[i] - h;
            let fm = f(&p);
            p[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
