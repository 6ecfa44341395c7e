use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::numerics::{Matrix, Vector};

/// Absolute floor used when a tolerance is scaled by input magnitude.
pub const ABS_FLOOR: f64 = 1e-14;

const SYMMETRY_TOL: f64 = 1e-12;
const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;
const POWER_MAX_ITER: usize = 100_000;

pub(crate) fn asymmetry(m: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
///
/// Column `k` of the returned matrix is the eigenvector for eigenvalue `k`.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.nrows();
    check_len("symmetric_eigen (square)", n, m.ncols())?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> Result<f64> {
    let (w, _) = symmetric_eigen(m)?;
    Ok(w.first().copied().unwrap_or(0.0))
}

/// Complex spectrum of a general real square matrix via the real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    check_len("eigenvalues (square)", n, m.ncols())?;
    if n == 0 {
        return Ok(Vec::new());
    }
    match m.clone().try_schur(SCHUR_EPS, SCHUR_MAX_ITER) {
        Some(schur) => {
            let mut ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            Ok(ev)
        }
        None => Err(Error::NoConvergence {
            best_estimate: power_iteration(m).0,
        }),
    }
}

/// Largest eigenvalue magnitude of a general real square matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    let n = m.nrows();
    check_len("spectral_radius (square)", n, m.ncols())?;
    if n == 0 {
        return Ok(0.0);
    }
    match m.clone().try_schur(SCHUR_EPS, SCHUR_MAX_ITER) {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        None => {
            let (best, converged) = power_iteration(m);
            if converged {
                Ok(best)
            } else {
                Err(Error::NoConvergence {
                    best_estimate: best,
                })
            }
        }
    }
}

/// Gelfand-formula estimate `‖M^k v‖^{1/k}`, averaged over the second half
/// of the iterates so the start-up transient drops out. Returns the estimate
/// and whether successive estimates settled to 1e-8 relative.
fn power_iteration(m: &Matrix) -> (f64, bool) {
    let n = m.nrows();
    let mut v = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    // prefix[k] = Σ_{j<k} ln ‖M v_j‖
    let mut prefix = vec![0.0];
    let mut prev = f64::INFINITY;
    for k in 1..=POWER_MAX_ITER {
        let w = m * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return (0.0, true);
        }
        prefix.push(prefix[k - 1] + nw.ln());
        v = w / nw;
        let half = k / 2;
        let est = ((prefix[k] - prefix[half]) / (k - half) as f64).exp();
        if k > 50 && (est - prev).abs() <= 1e-10 * est.max(ABS_FLOOR) {
            return (est, true);
        }
        prev = est;
    }
    (prev, false)
}
