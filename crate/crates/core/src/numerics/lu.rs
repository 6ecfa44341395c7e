use crate::error::{check_len, Error, Result};
use crate::numerics::{Matrix, Vector};

/// Relative pivot threshold below which a matrix is reported singular.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// Partial-pivoting LU factors `P·M = L·U`, stored compactly.
///
/// The strictly lower triangle of `lu` holds `L` (unit diagonal implied), the
/// upper triangle holds `U`. Row `i` of `P·M` is row `perm[i]` of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactors {
    perm: Vec<usize>,
    lu: Matrix,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Combined `L`/`U` storage.
    pub fn combined(&self) -> &Matrix {
        &self.lu
    }

    /// Unit lower-triangular factor.
    pub fn lower(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.lu[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn upper(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| if i <= j { self.lu[(i, j)] } else { 0.0 })
    }

    /// Solves `M·z = b`.
    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        let n = self.dim();
        check_len("lu_solve", n, b.len())?;
        let mut z = Vector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * z[k];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * z[k];
            }
            z[i] = s / self.lu[(i, i)];
        }
        Ok(z)
    }

    /// Solves `Mᵀ·z = b` with the same factors (`Mᵀ = Uᵀ·Lᵀ·P`).
    pub fn solve_transpose(&self, b: &Vector) -> Result<Vector> {
        let n = self.dim();
        check_len("lu_solve_transpose", n, b.len())?;
        let mut w = b.clone();
        for i in 0..n {
            let mut s = w[i];
            for k in 0..i {
                s -= self.lu[(k, i)] * w[k];
            }
            w[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)] * w[k];
            }
            w[i] = s;
        }
        let mut z = Vector::zeros(n);
        for i in 0..n {
            z[self.perm[i]] = w[i];
        }
        Ok(z)
    }

    /// Solves `M·Z = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        check_len("lu_solve_matrix", self.dim(), b.nrows())?;
        let mut out = Matrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned())?;
            out.set_column(j, &col);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve_matrix(&Matrix::identity(self.dim(), self.dim()))
    }
}

/// Factorizes a square matrix with partial pivoting.
pub fn lu_factor(m: &Matrix) -> Result<LuFactors> {
    let n = m.nrows();
    check_len("lu_factor (square)", n, m.ncols())?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix {
            pivot: f64::NAN,
            threshold: 0.0,
        });
    }
    let scale = m.amax();
    let threshold = PIVOT_TOLERANCE * scale;
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let (p, pivot_mag) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_mag <= threshold || pivot_mag == 0.0 {
            return Err(Error::SingularMatrix {
                pivot: pivot_mag,
                threshold,
            });
        }
        if p != k {
            lu.swap_rows(p, k);
            perm.swap(p, k);
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            if factor != 0.0 {
                for j in k + 1..n {
                    lu[(i, j)] -= factor * lu[(k, j)];
                }
            }
        }
    }
    Ok(LuFactors { perm, lu })
}

pub fn lu_solve(factors: &LuFactors, b: &Vector) -> Result<Vector> {
    factors.solve(b)
}
