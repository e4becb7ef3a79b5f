//! Dense Cholesky factorization of Gram matrices with a scale-aware rank
//! check, plus rank-one update/downdate and column deletion.
//!
//! A Gram matrix `G` is treated as full rank when every Cholesky pivot
//! (the diagonal of the running Schur complement) exceeds
//! `PIVOT_RTOL * max_i G[i, i]`.

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold used by every rank check.
pub const PIVOT_RTOL: f64 = 1e-10;

/// A pivot that fell under the rank threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub index: usize,
    pub pivot: f64,
    pub threshold: f64,
}

/// Lower-triangular factor `L` with `G = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
    threshold: f64,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    pub fn factor(g: &DMatrix<f64>) -> Result<Self, PivotFailure> {
        let n = g.nrows();
        assert_eq!(n, g.ncols(), "Gram matrix must be square");
        let max_diag = (0..n).map(|i| g[(i, i)]).fold(0.0_f64, f64::max);
        let threshold = PIVOT_RTOL * max_diag;
        Self::factor_with_threshold(g, threshold)
    }

    /// Factorizes with an absolute pivot threshold.
    pub fn factor_with_threshold(g: &DMatrix<f64>, threshold: f64) -> Result<Self, PivotFailure> {
        let n = g.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = g[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > threshold) || !d.is_finite() {
                return Err(PivotFailure {
                    index: j,
                    pivot: d,
                    threshold,
                });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = g[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l, threshold })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `G x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Solves `G X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let l = &self.l;
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }

    /// `G⁻¹`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = self.solve_mat(&DMatrix::identity(n, n));
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// Factor of `G + sign · v vᵀ`. Fails when a downdate loses definiteness.
    pub fn rank_one(&self, v: &DVector<f64>, sign: f64) -> Result<Self, PivotFailure> {
        let mut l = self.l.clone();
        let mut work = v.clone();
        rank_one_in_place(&mut l, work.as_mut_slice(), sign, self.threshold)?;
        Ok(Self {
            l,
            threshold: self.threshold,
        })
    }

    /// Factor of `G` with row and column `k` deleted.
    ///
    /// Deleting column `k` of `L` leaves a lower-trapezoidal block whose
    /// trailing part must absorb the deleted sub-column: `L₃₃' L₃₃'ᵀ =
    /// L₃₃ L₃₃ᵀ + l₃₂ l₃₂ᵀ`, a rank-one update of the trailing factor.
    pub fn delete(&self, k: usize) -> Result<Self, PivotFailure> {
        let n = self.dim();
        assert!(k < n);
        let mut l = self.l.clone().remove_row(k).remove_column(k);
        let mut tail: Vec<f64> = ((k + 1)..n).map(|i| self.l[(i, k)]).collect();
        if !tail.is_empty() {
            let m = n - 1;
            let mut block = l.view_mut((k, k), (m - k, m - k)).into_owned();
            rank_one_in_place(&mut block, &mut tail, 1.0, self.threshold).map_err(|f| {
                PivotFailure {
                    index: f.index + k,
                    ..f
                }
            })?;
            l.view_mut((k, k), (m - k, m - k)).copy_from(&block);
        }
        Ok(Self {
            l,
            threshold: self.threshold,
        })
    }

    /// Reassembles `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// In-place rank-one update (`sign = 1`) or downdate (`sign = -1`) of a
/// lower-triangular factor. `v` is consumed as workspace.
pub fn rank_one_in_place(
    l: &mut DMatrix<f64>,
    v: &mut [f64],
    sign: f64,
    threshold: f64,
) -> Result<(), PivotFailure> {
    let n = l.nrows();
    for j in 0..n {
        let ljj = l[(j, j)];
        let vj = v[j];
        let arg = ljj * ljj + sign * vj * vj;
        if !(arg > threshold) || !arg.is_finite() {
            return Err(PivotFailure {
                index: j,
                pivot: arg,
                threshold,
            });
        }
        let r = arg.sqrt();
        let c = r / ljj;
        let s = vj / ljj;
        l[(j, j)] = r;
        for i in (j + 1)..n {
            l[(i, j)] = (l[(i, j)] + sign * s * v[i]) / c;
            v[i] = c * v[i] - s * l[(i, j)];
        }
    }
    Ok(())
}

/// `Aᵀ B` for column-major dense matrices.
pub fn crossprod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.tr_mul(b)
}

/// Picks rows and columns `idx` out of a square matrix.
pub fn submatrix(g: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])])
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
