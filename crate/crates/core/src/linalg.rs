//! Small dense symmetric matrices and their eigenvalues.

use std::ops::{Index, IndexMut};

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self { n, data: rows.concat() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.data.iter_mut().for_each(|v| *v *= c);
        self
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `v^T M v / v^T v`.
    pub fn rayleigh(&self, v: &[f64]) -> f64 {
        let mv = self.mul_vec(v);
        let num: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().map(|a| a * a).sum();
        num / den
    }

    fn off_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self[(i, j)] * self[(i, j)];
                }
            }
        }
        s.sqrt()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.data[0]],
            2 => {
                let (a, b, c) = (self[(0, 0)], 0.5 * (self[(0, 1)] + self[(1, 0)]), self[(1, 1)]);
                let mean = 0.5 * (a + c);
                let r = (0.5 * (a - c)).hypot(b);
                vec![mean - r, mean + r]
            }
            _ => self.eigen_jacobi().0,
        }
    }

    /// Eigenvalues (ascending) with unit eigenvectors as columns, by cyclic
    /// Jacobi rotations.
    pub fn eigen_jacobi(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut a = self.clone();
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = m;
                a[(j, i)] = m;
            }
        }
        let mut v = Self::identity(n);
        for _ in 0..JACOBI_MAX_SWEEPS {
            if a.off_norm() <= JACOBI_TOL {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
        let values = idx.iter().map(|&i| a[(i, i)]).collect();
        let vectors = idx.iter().map(|&i| (0..n).map(|k| v[(k, i)]).collect()).collect();
        (values, vectors)
    }

    /// Unit eigenvector for the eigenvalue of largest magnitude.
    pub fn top_eigenvector(&self) -> Vec<f64> {
        if self.n == 2 {
            let (a, b, c) = (self[(0, 0)], 0.5 * (self[(0, 1)] + self[(1, 0)]), self[(1, 1)]);
            let ev = self.eigenvalues();
            let lam = if ev[0].abs() > ev[1].abs() { ev[0] } else { ev[1] };
            let v = if b.abs() > 1e-300 {
                vec![b, lam - a]
            } else if (a - lam).abs() <= (c - lam).abs() {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            };
            let norm = v[0].hypot(v[1]);
            return v.into_iter().map(|x| x / norm).collect();
        }
        let (vals, vecs) = self.eigen_jacobi();
        let i = (0..vals.len())
            .max_by(|&i, &j| vals[i].abs().total_cmp(&vals[j].abs()))
            .unwrap_or(0);
        vecs[i].clone()
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SymMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}
