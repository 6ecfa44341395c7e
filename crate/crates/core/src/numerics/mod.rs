//! Dense linear algebra used by the solvers and by the reference oracles.
//!
//! Storage is `nalgebra`'s dynamically sized matrix. LU and the matrix
//! exponential are implemented here; eigen-decompositions delegate to
//! `nalgebra`'s symmetric QR and real Schur routines.

mod eigen;
mod expm;
mod lu;

pub use eigen::{eigenvalues, min_symmetric_eigenvalue, spectral_radius, symmetric_eigen, ABS_FLOOR};
pub use expm::{matrix_exponential, EXPM_NORM_LIMIT};
pub use lu::{lu_factor, lu_solve, LuFactors, PIVOT_TOLERANCE};

pub(crate) use eigen::asymmetry;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// `‖M‖_∞`, the maximum absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
