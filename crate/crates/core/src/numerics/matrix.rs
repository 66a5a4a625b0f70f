//! Small dense symmetric matrices: Cholesky solves with an
//! eigenvalue-thresholded pseudo-inverse fallback.
//!
//! Everything here targets the tiny orders that arise in this crate
//! (2(J+1) parameters, so typically 4-8).

use crate::error::{Error, Result};
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

/// Relative pivot / eigenvalue cutoff for the near-singular fallback.
const SINGULAR_RTOL: f64 = 1e-12;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix order must be positive");
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Domain("matrix order must be positive".into()));
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Domain(format!(
                    "row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let mut out = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..self.n {
                    out.data[i * self.n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// m += scale * v v^T
    pub fn add_scaled_outer(&mut self, v: &[f64], scale: f64) {
        assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += scale * v[i] * v[j];
            }
        }
    }

    /// Symmetry within |m_ij - m_ji| <= 1e-10 (1 + |m_ij|).
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let a = self.get(i, j);
                let b = self.get(j, i);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs()) {
                    return false;
                }
            }
        }
        true
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Serialize for SquareMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.n))?;
        for i in 0..self.n {
            let row: Vec<f64> = (0..self.n).map(|j| self.get(i, j)).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

/// Result of an SPD solve; `near_singular` reports the pseudo-inverse
/// fallback was taken.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub solution: Vec<f64>,
    pub near_singular: bool,
}

/// Result of an SPD inversion.
#[derive(Debug, Clone)]
pub struct SpdInverse {
    pub matrix: SquareMatrix,
    pub near_singular: bool,
}

fn require_symmetric(m: &SquareMatrix, op: &str) -> Result<()> {
    if !m.is_symmetric() {
        return Err(Error::Domain(format!("{op}: matrix is not symmetric")));
    }
    Ok(())
}

/// Lower Cholesky factor, or None when the smallest pivot falls below
/// SINGULAR_RTOL times the largest diagonal entry.
fn cholesky(m: &SquareMatrix) -> Option<Vec<f64>> {
    let n = m.order();
    let max_diag = (0..n).map(|i| m.get(i, i)).fold(0.0_f64, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let cutoff = SINGULAR_RTOL * max_diag;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s < cutoff {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvector matrix with eigenvectors as columns).
fn jacobi_eigen(m: &SquareMatrix) -> (Vec<f64>, SquareMatrix) {
    let n = m.order();
    let mut a = m.clone();
    let mut v = SquareMatrix::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= 1e-15 * (1.0 + a.max_abs()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let eig = (0..n).map(|i| a.get(i, i)).collect();
    (eig, v)
}

/// Eigenvalue-thresholded pseudo-inverse of a symmetric matrix.
fn pseudo_inverse(m: &SquareMatrix) -> SquareMatrix {
    let n = m.order();
    let (eig, v) = jacobi_eigen(m);
    let max_eig = eig.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
    let cutoff = SINGULAR_RTOL * max_eig;
    let mut out = SquareMatrix::zeros(n);
    for (k, &lambda) in eig.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda.abs() == 0.0 {
            continue;
        }
        let col: Vec<f64> = (0..n).map(|i| v.get(i, k)).collect();
        out.add_scaled_outer(&col, 1.0 / lambda);
    }
    out
}

/// Solve m x = rhs for symmetric positive definite m, falling back to the
/// pseudo-inverse when the Cholesky pivots degenerate.
pub fn solve_spd(m: &SquareMatrix, rhs: &[f64]) -> Result<SpdSolution> {
    require_symmetric(m, "solve_spd")?;
    if rhs.len() != m.order() {
        return Err(Error::Domain(format!(
            "solve_spd: rhs length {} does not match order {}",
            rhs.len(),
            m.order()
        )));
    }
    if let Some(l) = cholesky(m) {
        Ok(SpdSolution { solution: chol_solve(&l, m.order(), rhs), near_singular: false })
    } else {
        let pinv = pseudo_inverse(m);
        Ok(SpdSolution { solution: pinv.matvec(rhs), near_singular: true })
    }
}

/// Invert a symmetric positive definite matrix, with the same fallback
/// as [`solve_spd`].
pub fn invert_spd(m: &SquareMatrix) -> Result<SpdInverse> {
    require_symmetric(m, "invert_spd")?;
    let n = m.order();
    if let Some(l) = cholesky(m) {
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = chol_solve(&l, n, &e);
            e[j] = 0.0;
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        // Enforce exact symmetry against substitution roundoff.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (inv.get(i, j) + inv.get(j, i));
                inv.set(i, j, avg);
                inv.set(j, i, avg);
            }
        }
        Ok(SpdInverse { matrix: inv, near_singular: false })
    } else {
        Ok(SpdInverse { matrix: pseudo_inverse(m), near_singular: true })
    }
}
