//! Seeded random test objects: Gaussian-bump chart coordinates, matrices of
//! prescribed norm, and small rotation generators.

use nalgebra::DMatrix;
use rand::Rng;

use crate::jets::SmoothMap;
use crate::linalg::op_norm;

/// Ranges for random Gaussian bumps `a·exp(−‖x − c‖²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpSpec {
    /// Each center coordinate is uniform in `[−center, center]`.
    pub center: f64,
    pub sigma: (f64, f64),
    /// Range of the exact `‖φ‖_{1,1}`.
    pub norm_11: (f64, f64),
}

impl Default for BumpSpec {
    fn default() -> Self {
        Self {
            center: 1.0,
            sigma: (0.5, 1.5),
            norm_11: (0.1, 0.8),
        }
    }
}

impl BumpSpec {
    /// Narrow bumps whose tails fall below the decay threshold inside the default box.
    pub fn narrow() -> Self {
        Self {
            sigma: (0.5, 0.8),
            ..Self::default()
        }
    }
}

fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if s > 1e-3 && s <= 1.0 {
            return v.into_iter().map(|a| a / s).collect();
        }
    }
}

/// A bump `ℝⁿ → ℝⁿ` whose `‖φ‖_{1,1} = ‖a‖ e^{−1/2}/σ` lies in `spec.norm_11`.
pub fn random_bump<R: Rng>(rng: &mut R, n: usize, spec: &BumpSpec) -> SmoothMap {
    random_bump_into(rng, n, n, spec)
}

/// A bump `ℝⁿ → ℝᵐ` with the same norm control.
pub fn random_bump_into<R: Rng>(rng: &mut R, n: usize, m: usize, spec: &BumpSpec) -> SmoothMap {
    let center: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-spec.center..=spec.center))
        .collect();
    let sigma = rng.random_range(spec.sigma.0..=spec.sigma.1);
    let target = rng.random_range(spec.norm_11.0..=spec.norm_11.1);
    let size = target * sigma * 0.5f64.exp();
    let amplitude: Vec<f64> = unit_vector(rng, m).into_iter().map(|a| a * size).collect();
    SmoothMap::gaussian_bump(&center, sigma, &amplitude)
}

/// A square matrix with spectral norm exactly `norm`.
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, norm: f64) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = op_norm(&m);
        if s > 1e-3 {
            return m * (norm / s);
        }
    }
}

/// Row-major generator of the rotation about `w` by `‖w‖`.
pub fn so3_generator(w: [f64; 3]) -> Vec<f64> {
    let [a, b, c] = w;
    vec![0.0, -c, b, c, 0.0, -a, -b, a, 0.0]
}

/// A rotation vector with uniformly random direction and length in `[0, max_angle]`.
pub fn random_rotation_vector<R: Rng>(rng: &mut R, max_angle: f64) -> [f64; 3] {
    let u = unit_vector(rng, 3);
    let r = rng.random_range(0.0..=max_angle);
    [u[0] * r, u[1] * r, u[2] * r]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{seminorm, SampleDomain, Weight};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bump_norm_is_controlled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = BumpSpec::default();
        for _ in 0..5 {
            let b = random_bump(&mut rng, 1, &spec);
            let dense = SampleDomain::new(8.0, 40001, 1, vec![7.0]).unwrap();
            let v = seminorm(&b, &Weight::ConstantOne, 1, &dense).unwrap();
            assert!(
                v <= spec.norm_11.1 + 1e-12 && v >= spec.norm_11.0 - 1e-6,
                "{v}"
            );
        }
    }

    #[test]
    fn matrix_norm_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(&mut rng, 4, 0.9);
        assert!((op_norm(&m) - 0.9).abs() < 1e-14);
    }
}
