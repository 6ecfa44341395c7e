//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham 2005 order selection).

use crate::error::{check_len, Error, Result};
use crate::numerics::lu::lu_factor;
use crate::numerics::Matrix;

/// Largest 1-norm of `t·m` accepted before squaring amplifies roundoff too far.
pub const EXPM_NORM_LIMIT: f64 = 1.0e3;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub(crate) fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Returns `e^{t·m}`.
pub fn matrix_exponential(m: &Matrix, t: f64) -> Result<Matrix> {
    let n = m.nrows();
    check_len("matrix_exponential (square)", n, m.ncols())?;
    let a = m * t;
    let norm = norm1(&a);
    if !norm.is_finite() || norm > EXPM_NORM_LIMIT {
        return Err(Error::OverflowRisk {
            norm,
            limit: EXPM_NORM_LIMIT,
        });
    }
    let id = Matrix::identity(n, n);
    if norm == 0.0 {
        return Ok(id);
    }

    for &(order, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match order {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(&a, coeffs);
            return pade_quotient(&u, &v);
        }
    }

    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = &a * 2f64.powi(-s);
    let (u, v) = pade13(&scaled);
    let mut r = pade_quotient(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = Matrix::identity(n, n) * b[1];
    let mut v = Matrix::identity(n, n) * b[0];
    let mut power = Matrix::identity(n, n);
    let mut k = 2;
    while k < b.len() {
        power = &power * &a2;
        v += &power * b[k];
        if k + 1 < b.len() {
            u += &power * b[k + 1];
        }
        k += 2;
    }
    (a * u, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    (u, v)
}

fn pade_quotient(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let f = lu_factor(&(v - u))?;
    f.solve_matrix(&(v + u))
}
