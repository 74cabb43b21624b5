//! Central finite differences with one Richardson step, for black-box maps.

use super::tensor::{Jet, MultilinearTensor};
use crate::error::Result;

/// Relative step for first derivatives: `h = FIRST_STEP · max(1, ‖x‖)`.
pub const FIRST_STEP: f64 = 1e-5;
/// Relative step for second derivatives; larger because the quotient divides by `h²`.
pub const SECOND_STEP: f64 = 1e-3;

/// Highest order available through finite differences.
pub const FD_ORDER: usize = 2;

fn scale(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0)
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

/// Jet of order `≤ 2` of `f` at `x` by central differences, Richardson-extrapolated once.
pub fn fd_jet<F>(f: F, x: &[f64], dim_out: usize, order: usize) -> Result<Jet>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    assert!(order <= FD_ORDER);
    let n = x.len();
    let f0 = f(x)?;
    let mut tensors = vec![MultilinearTensor::from_data(0, dim_out, n, f0.clone())];
    if order >= 1 {
        let h = FIRST_STEP * scale(x);
        let mut d1 = MultilinearTensor::zeros(1, dim_out, n);
        for i in 0..n {
            let diff = |h: f64| -> Result<Vec<f64>> {
                let p = f(&shifted(x, &[(i, h)]))?;
                let m = f(&shifted(x, &[(i, -h)]))?;
                Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            };
            let coarse = diff(h)?;
            let fine = diff(h / 2.0)?;
            for o in 0..dim_out {
                d1.set(o, &[i], (4.0 * fine[o] - coarse[o]) / 3.0);
            }
        }
        tensors.push(d1);
    }
    if order >= 2 {
        let h = SECOND_STEP * scale(x);
        let mut d2 = MultilinearTensor::zeros(2, dim_out, n);
        for i in 0..n {
            for j in i..n {
                let quotient = |h: f64| -> Result<Vec<f64>> {
                    if i == j {
                        let p = f(&shifted(x, &[(i, h)]))?;
                        let m = f(&shifted(x, &[(i, -h)]))?;
                        Ok((0..dim_out)
                            .map(|o| (p[o] - 2.0 * f0[o] + m[o]) / (h * h))
                            .collect())
                    } else {
                        let pp = f(&shifted(x, &[(i, h), (j, h)]))?;
                        let pm = f(&shifted(x, &[(i, h), (j, -h)]))?;
                        let mp = f(&shifted(x, &[(i, -h), (j, h)]))?;
                        let mm = f(&shifted(x, &[(i, -h), (j, -h)]))?;
                        Ok((0..dim_out)
                            .map(|o| (pp[o] - pm[o] - mp[o] + mm[o]) / (4.0 * h * h))
                            .collect())
                    }
                };
                let coarse = quotient(h)?;
                let fine = quotient(h / 2.0)?;
                for o in 0..dim_out {
                    let v = (4.0 * fine[o] - coarse[o]) / 3.0;
                    d2.set(o, &[i, j], v);
                    d2.set(o, &[j, i], v);
                }
            }
        }
        tensors.push(d2);
    }
    Ok(Jet::from_tensors(tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_polynomial_derivatives() {
        let f = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0] * x[0] * x[1] + 3.0 * x[1]]) };
        let jet = fd_jet(f, &[0.7, -1.2], 1, 2).unwrap();
        let d1 = jet.derivative(1).data();
        assert!((d1[0] - 2.0 * 0.7 * -1.2).abs() < 1e-9);
        assert!((d1[1] - (0.49 + 3.0)).abs() < 1e-9);
        let d2 = jet.derivative(2);
        assert!((d2.get(0, &[0, 0]) - 2.0 * -1.2).abs() < 1e-7);
        assert!((d2.get(0, &[0, 1]) - 1.4).abs() < 1e-7);
        assert!(d2.get(0, &[1, 1]).abs() < 1e-7);
    }
}
