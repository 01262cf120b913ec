//! Small dense linear-algebra helpers on top of nalgebra, plus a flat
//! row-major Cholesky for the follow-up search inner loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Least-squares coefficients of `y` on full-column-rank `z` via QR.
pub fn least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = z.ncols();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    if z.nrows() < p {
        return Err(Error::RankDeficient);
    }
    let qr = z.clone().qr();
    let qty = qr.q().transpose() * y;
    let r = qr.r();
    let scale = r.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * scale) {
        return Err(Error::RankDeficient);
    }
    r.solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or(Error::RankDeficient)
}

/// `(Z'Z)^{-1}` through Cholesky.
pub fn gram_inverse(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_inverse(z.transpose() * z)
}

pub fn spd_inverse(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(a);
    }
    a.cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite)
}

/// `ln |A|` for symmetric positive definite `A`.
pub fn spd_log_det(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let c = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>())
}

/// In-place Cholesky of a row-major `n × n` SPD matrix; the lower triangle
/// receives `L`. The upper triangle is left untouched.
pub fn cholesky_flat(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L' x = b` in place given the factor from [`cholesky_flat`].
pub fn cholesky_solve_flat(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
