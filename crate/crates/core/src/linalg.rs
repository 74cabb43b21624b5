//! Matrix exponential and logarithm for small dense matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jets::spectral_norm;

const TAYLOR_TERMS: usize = 30;
const SERIES_EPS: f64 = 1e-18;

/// Spectral norm of a square matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    spectral_norm(m.nrows(), m.ncols(), m.transpose().as_slice())
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^A` by scaling and squaring around a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = a / 2f64.powi(squarings);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=TAYLOR_TERMS {
        term = &term * &b / k as f64;
        sum += &term;
        if one_norm(&term) <= SERIES_EPS * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Principal logarithm for `‖g − I‖ < 1` via `log g = 2 Σ Z^{2k+1}/(2k+1)`,
/// `Z = (g − I)(g + I)⁻¹`.
pub fn logm(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let dist = op_norm(&(g - &id));
    if dist.is_nan() || dist >= 1.0 {
        return Err(Error::ChartOverflow {
            norm: dist,
            radius: 1.0,
        });
    }
    let plus_inv = (g + &id).try_inverse().ok_or(Error::ChartOverflow {
        norm: dist,
        radius: 1.0,
    })?;
    let z = (g - &id) * plus_inv;
    let z2 = &z * &z;
    let mut power = z.clone();
    let mut sum = z;
    for k in 1..400 {
        power = &power * &z2;
        let term = &power / (2 * k + 1) as f64;
        sum += &term;
        if one_norm(&term) <= SERIES_EPS * one_norm(&sum).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(sum * 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_matches_library_oracle() {
        let a = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 0.5, 2.0, 0.1, -0.7, 0.4, 0.9, -1.5]);
        assert!((expm(&a) - a.clone().exp()).abs().max() < 1e-12);
    }

    #[test]
    fn exponential_of_rotation_generator() {
        let t: f64 = 0.9;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let r = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!((expm(&a) - r).abs().max() < 1e-15);
    }

    #[test]
    fn logarithm_inverts_exponential_near_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -0.3, 0.2, 0.3, 0.0, -0.1, -0.2, 0.1, 0.0]);
        let back = logm(&expm(&a)).unwrap();
        assert!((back - a).abs().max() < 1e-14);
        assert!(logm(&(DMatrix::identity(2, 2) * 3.0)).is_err());
    }
}
