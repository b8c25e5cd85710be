use crate::error::{Error, Result};

/// Diagonal jitter tried in order when a factorization fails.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower-triangular factor stored by rows, growable one row at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
    jitter: f64,
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { rows: Vec::new(), jitter: 0.0 }
    }

    /// Factor the symmetric matrix `a(i, j)` of order `n`, escalating the
    /// jitter through [`JITTER_LADDER`].
    pub fn factor(n: usize, a: impl Fn(usize, usize) -> f64) -> Result<Self> {
        for &jitter in &JITTER_LADDER {
            if let Some(rows) = try_factor(n, &a, jitter) {
                if jitter > 0.0 {
                    tracing::warn!(jitter, n, "Cholesky needed diagonal jitter");
                }
                return Ok(Cholesky { rows, jitter });
            }
        }
        Err(Error::NumericalFailure(format!(
            "matrix of order {n} not positive definite with jitter up to {:e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.rows[i][i]
    }

    /// `L[i][j]`, zero above the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.rows[i][j]
        } else {
            0.0
        }
    }

    /// Extend the factor by one row/column: `col` holds the new off-diagonal
    /// entries and `diag` the new diagonal entry of the original matrix.
    /// Returns false (leaving the factor unchanged) if the pivot is not
    /// positive at the current jitter.
    pub fn append(&mut self, col: &[f64], diag: f64) -> bool {
        let l = self.solve_lower(col);
        let pivot = diag + self.jitter - l.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return false;
        }
        let mut row = l;
        row.push(pivot.sqrt());
        self.rows.push(row);
        true
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&x).map(|(l, v)| l * v).sum();
            x.push((b[i] - s) / row[i]);
        }
        x
    }

    /// `L^{-T} b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (xj, l) in x[..i].iter_mut().zip(&self.rows[i][..i]) {
                *xj -= l * xi;
            }
        }
        x
    }

    /// `(L L^T)^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n()).map(|i| self.rows[i][i].ln()).sum::<f64>()
    }
}

fn try_factor(n: usize, a: &impl Fn(usize, usize) -> f64, jitter: f64) -> Option<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(i + 1);
        for j in 0..i {
            let s: f64 = row.iter().zip(&rows[j][..j]).map(|(a, b): (&f64, &f64)| a * b).sum();
            row.push((a(i, j) - s) / rows[j][j]);
        }
        let pivot = a(i, i) + jitter - row.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        row.push(pivot.sqrt());
        rows.push(row);
    }
    Some(rows)
}
