//! Actions on weighted diffeomorphisms and mapping groups: conjugation by
//! `GL(n)`, the Schwartz-weight estimate behind it, the failure of the same
//! action on bounded functions, multipliers, and the semidirect product of a
//! mapping group with the diffeomorphism group.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff_group::{compose_chart, grid_residual, inverse_map, invert_chart, ChartDiffeo};
use crate::error::{Error, Result};
use crate::jets::SmoothMap;
use crate::linalg::op_norm;
use crate::mapping_group::{self, MappingElement};
use crate::weights::{domination_constant, seminorm_profile, SampleDomain, WeightFamily};

/// Largest admissible domination constant in `multiplier_check`.
pub const DOMINANCE_CAP: f64 = 1e6;
/// Slack on the ratio in the Schwartz bound check.
pub const RATIO_SLACK: f64 = 1e-9;
/// Rejection-sampling attempts per admissible `S`.
const MAX_DRAWS: usize = 10_000;

/// `x ↦ Tx` for an invertible `T`, with cached norms.
#[derive(Debug, Clone)]
pub struct LinearAction {
    t: DMatrix<f64>,
    t_inv: DMatrix<f64>,
    norm: f64,
    inv_norm: f64,
}

impl LinearAction {
    pub fn new(t: DMatrix<f64>) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::DimensionMismatch {
                expected: t.nrows(),
                found: t.ncols(),
            });
        }
        let n = t.nrows();
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Config("linear action needs an invertible matrix".to_string()))?;
        let defect = (&t * &t_inv - DMatrix::identity(n, n)).abs().max();
        if defect.is_nan() || defect >= 1e-12 {
            return Err(Error::Config(format!(
                "matrix is too ill-conditioned to act (‖T·T⁻¹ − I‖ = {defect:e})"
            )));
        }
        Ok(Self {
            norm: op_norm(&t),
            inv_norm: op_norm(&t_inv),
            t,
            t_inv,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is invertible")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.t_inv
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn inverse_norm(&self) -> f64 {
        self.inv_norm
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn compose(&self, other: &LinearAction) -> Result<LinearAction> {
        LinearAction::new(&self.t * &other.t)
    }
}

/// Chart coordinate `x ↦ T·φ(T⁻¹x)` of `T∘(φ + id)∘T⁻¹`.
pub fn gl_conjugate(t: &LinearAction, phi: &ChartDiffeo) -> Result<ChartDiffeo> {
    if t.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            found: t.dim(),
        });
    }
    let inner = SmoothMap::compose(phi.phi(), &SmoothMap::linear(&t.t_inv))?;
    let map = SmoothMap::compose(&SmoothMap::linear(&t.t), &inner)?;
    ChartDiffeo::with_domain(map, phi.domain().clone())
}

/// Norm of the sampled perturbation `A`, in units of `‖T‖ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationNorm {
    /// Uniform in `[0, c]`; the estimate assumes `c ≤ 2`.
    UpTo(f64),
    /// Exactly `c`.
    Exactly(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchwartzParams {
    pub epsilon: f64,
    /// Degree `n` of the weight `‖x‖ⁿ`.
    pub degree: u32,
    pub samples: usize,
    pub perturbation: PerturbationNorm,
    pub seed: u64,
}

impl Default for SchwartzParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            degree: 2,
            samples: 1000,
            perturbation: PerturbationNorm::UpTo(2.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchwartzReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub violations: usize,
    pub pass: bool,
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = op_norm(&m);
        if s > 1e-3 {
            return m * (norm / s);
        }
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let s = v.norm();
        if s > 1e-3 {
            return v * (radius / s);
        }
    }
}

/// Samples `S` with `‖S − T‖ < ε`, `‖S⁻¹‖ < 2‖T⁻¹‖`, `‖S‖ < 2‖T‖`, a
/// perturbation `A` and a point `x`, and records the largest ratio of
/// `‖x‖ⁿ‖SAx‖` to `ε·2^{n+3}‖T‖²‖T⁻¹‖^{n+1}‖Sx‖^{n+1}`.
pub fn schwartz_action_bound_check(
    t: &LinearAction,
    params: &SchwartzParams,
) -> Result<SchwartzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = t.dim();
    let eps = params.epsilon;
    let d = params.degree as i32;
    let constant = eps * 2f64.powi(d + 3) * t.norm.powi(2) * t.inv_norm.powi(d + 1);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..params.samples {
        let mut draws = 0;
        let s = loop {
            draws += 1;
            if draws > MAX_DRAWS {
                return Err(Error::SamplingConstraint(format!(
                    "no S within ε = {eps} of T satisfies the norm constraints"
                )));
            }
            let r = eps * rng.random_range(0.0..1.0);
            let s = &t.t + random_matrix(&mut rng, n, r);
            let Some(s_inv) = s.clone().try_inverse() else {
                continue;
            };
            if op_norm(&s_inv) < 2.0 * t.inv_norm && op_norm(&s) < 2.0 * t.norm {
                break s;
            }
        };
        let scale = t.norm * eps;
        let a_norm = match params.perturbation {
            PerturbationNorm::UpTo(c) => c * scale * rng.random_range(0.0..=1.0),
            PerturbationNorm::Exactly(c) => c * scale,
        };
        let a = random_matrix(&mut rng, n, a_norm);
        let radius = rng.random_range(0.01..10.0);
        let x = random_vector(&mut rng, n, radius);
        let lhs = x.norm().powi(d) * (&s * (&a * &x)).norm();
        let rhs = constant * (&s * &x).norm().powi(d + 1);
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        if ratio.is_nan() || ratio > 1.0 + RATIO_SLACK {
            violations += 1;
        }
        max_ratio = max_ratio.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
    }
    Ok(SchwartzReport {
        samples: params.samples,
        max_ratio,
        violations,
        pass: violations == 0,
    })
}

/// `sup |sin(s·x) − sin x|` over the grid together with `witness`, if any.
pub fn sine_rescaling_gap(scale: f64, witness: Option<f64>, domain: &SampleDomain) -> Result<f64> {
    if domain.dimension != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: domain.dimension,
        });
    }
    Ok(domain
        .points()
        .map(|x| x[0])
        .chain(witness)
        .map(|x| ((scale * x).sin() - x.sin()).abs())
        .fold(0.0, f64::max))
}

/// `‖sin((1 + 1/(2n))·) − sin‖_{1,0}` on the grid with `x = nπ` added.
pub fn bc_counterexample(n: u32, domain: &SampleDomain) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config(
            "counterexample index starts at 1".to_string(),
        ));
    }
    let n = n as f64;
    sine_rescaling_gap(
        1.0 + 1.0 / (2.0 * n),
        Some(n * std::f64::consts::PI),
        domain,
    )
}

/// Heuristic multiplier test: each `|f|·‖D^ℓM‖` (`f ∈ W`, `ℓ ≤ k`) must be
/// dominated on the grid by `C·|g|` for some `g ∈ W` with `C ≤ DOMINANCE_CAP`.
/// A `false` is conclusive only for the sampled box.
pub fn multiplier_check(
    m: &SmoothMap,
    family: &WeightFamily,
    k: usize,
    domain: &SampleDomain,
) -> Result<bool> {
    if k > 2 {
        return Err(Error::UnsupportedOrder {
            requested: k,
            supported: 2,
        });
    }
    let points: Vec<Vec<f64>> = domain.points().collect();
    let norms: Vec<Vec<f64>> = points
        .iter()
        .map(|x| {
            let jet = m.jet(x, k)?;
            Ok((0..=k)
                .map(|l| jet.derivative(l).opnorm_estimate().value)
                .collect())
        })
        .collect::<Result<_>>()?;
    for f in family.members() {
        let fx: Vec<f64> = points.iter().map(|x| f.eval(x).abs()).collect();
        for l in 0..=k {
            let h: Vec<f64> = fx
                .iter()
                .zip(&norms)
                .map(|(a, n)| if *a == 0.0 { 0.0 } else { a * n[l] })
                .collect();
            let dominated = family
                .members()
                .iter()
                .any(|g| domination_constant(&h, g, domain) <= DOMINANCE_CAP);
            if !dominated {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `ω(φ, γ) = γ∘φ⁻¹` on mapping-group elements.
pub fn omega(phi: &ChartDiffeo, gamma: &MappingElement) -> Result<MappingElement> {
    let inverse_full = inverse_map(phi)?.plus_identity()?;
    let xi = SmoothMap::compose(gamma.xi(), &inverse_full)?;
    MappingElement::new(
        gamma.group(),
        xi,
        gamma.family().clone(),
        gamma.order(),
        gamma.domain().clone(),
    )
}

/// An element `(γ, φ)` of `C_W(X, G) ⋊ Diff_W`.
#[derive(Debug, Clone)]
pub struct SemidirectElement {
    pub map_part: MappingElement,
    pub diff_part: ChartDiffeo,
}

impl SemidirectElement {
    pub fn new(map_part: MappingElement, diff_part: ChartDiffeo) -> Result<Self> {
        if map_part.xi().dim_in() != diff_part.dim() {
            return Err(Error::DimensionMismatch {
                expected: diff_part.dim(),
                found: map_part.xi().dim_in(),
            });
        }
        Ok(Self {
            map_part,
            diff_part,
        })
    }
}

/// `(γ₁, φ₁)·(γ₂, φ₂) = (γ₁·(γ₂∘φ₁⁻¹), φ₁∘φ₂)`.
pub fn semidirect_multiply(
    a: &SemidirectElement,
    b: &SemidirectElement,
) -> Result<SemidirectElement> {
    let moved = omega(&a.diff_part, &b.map_part)?;
    SemidirectElement::new(
        mapping_group::multiply(&a.map_part, &moved)?,
        compose_chart(&a.diff_part, &b.diff_part)?,
    )
}

/// `(γ, φ)⁻¹ = (γ⁻¹∘φ, φ⁻¹)`.
pub fn semidirect_invert(a: &SemidirectElement) -> Result<SemidirectElement> {
    let inv_gamma = mapping_group::invert(&a.map_part)?;
    let full = a.diff_part.phi().plus_identity()?;
    let xi = SmoothMap::compose(inv_gamma.xi(), &full)?;
    let map_part = MappingElement::new(
        inv_gamma.group(),
        xi,
        inv_gamma.family().clone(),
        inv_gamma.order(),
        inv_gamma.domain().clone(),
    )?;
    SemidirectElement::new(map_part, invert_chart(&a.diff_part)?)
}

/// Grid sup of the distance between two semidirect elements, taking the
/// larger of the map-part and diff-part residuals.
pub fn semidirect_residual(a: &SemidirectElement, b: &SemidirectElement) -> Result<f64> {
    let domain = a.diff_part.domain();
    let map = grid_residual(a.map_part.xi(), b.map_part.xi(), domain)?.0;
    let diff = grid_residual(a.diff_part.phi(), b.diff_part.phi(), domain)?.0;
    Ok(map.max(diff))
}

/// Grid sup of the gap between conjugating by `T` then `S` and by `S·T` at once.
pub fn conjugation_law_residual(
    s: &LinearAction,
    t: &LinearAction,
    phi: &ChartDiffeo,
) -> Result<f64> {
    let nested = gl_conjugate(s, &gl_conjugate(t, phi)?)?;
    let direct = gl_conjugate(&s.compose(t)?, phi)?;
    Ok(grid_residual(nested.phi(), direct.phi(), phi.domain())?.0)
}

/// Seminorms of `gl_conjugate(T, φ)` up to order `k`, for finiteness checks.
pub fn conjugate_seminorms(
    t: &LinearAction,
    phi: &ChartDiffeo,
    family: &WeightFamily,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let c = gl_conjugate(t, phi)?;
    Ok(seminorm_profile(c.phi(), family.members(), k, phi.domain())?.full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_group::is_decaying_diffeo;
    use crate::mapping_group::MatrixGroup;

    fn bump_2d() -> ChartDiffeo {
        ChartDiffeo::new(SmoothMap::gaussian_bump(&[0.5, -0.2], 1.2, &[0.4, -0.3])).unwrap()
    }

    #[test]
    fn identity_conjugation_is_trivial() {
        let phi = bump_2d();
        let c = gl_conjugate(&LinearAction::identity(2), &phi).unwrap();
        assert_eq!(
            grid_residual(c.phi(), phi.phi(), phi.domain()).unwrap().0,
            0.0
        );
    }

    #[test]
    fn constant_conjugates_to_image() {
        let t = LinearAction::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0])).unwrap();
        let c = ChartDiffeo::new(SmoothMap::constant(2, &[1.0, -1.0])).unwrap();
        assert_eq!(
            gl_conjugate(&t, &c)
                .unwrap()
                .phi()
                .eval(&[0.3, 0.4])
                .unwrap(),
            vec![1.0, -1.0]
        );
    }

    #[test]
    fn conjugation_is_an_action() {
        let s = LinearAction::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 1.1])).unwrap();
        let t = LinearAction::new(DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.3, 1.2])).unwrap();
        assert!(conjugation_law_residual(&s, &t, &bump_2d()).unwrap() < 1e-12);
    }

    #[test]
    fn conjugation_keeps_decay() {
        let t = LinearAction::new(DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.0, 0.8])).unwrap();
        let fam = WeightFamily::norm_powers(&[1, 2]);
        let phi =
            ChartDiffeo::new(SmoothMap::gaussian_bump(&[0.5, -0.2], 0.8, &[0.3, -0.2])).unwrap();
        assert!(is_decaying_diffeo(&phi, &fam).unwrap());
        assert!(is_decaying_diffeo(&gl_conjugate(&t, &phi).unwrap(), &fam).unwrap());
    }

    #[test]
    fn schwartz_bound_holds_and_breaks_as_expected() {
        let t = LinearAction::identity(2);
        let ok = schwartz_action_bound_check(
            &t,
            &SchwartzParams {
                samples: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(ok.pass && ok.max_ratio > 0.0);
        let zero = schwartz_action_bound_check(
            &t,
            &SchwartzParams {
                samples: 20,
                perturbation: PerturbationNorm::Exactly(0.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(zero.max_ratio, 0.0);
        let tenfold = schwartz_action_bound_check(
            &t,
            &SchwartzParams {
                samples: 200,
                perturbation: PerturbationNorm::Exactly(10.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(tenfold.pass && tenfold.max_ratio < 1.0);
        let broken = schwartz_action_bound_check(
            &t,
            &SchwartzParams {
                samples: 200,
                perturbation: PerturbationNorm::Exactly(100.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!broken.pass && broken.max_ratio > 1.0);
    }

    #[test]
    fn counterexample_witnesses() {
        let d = SampleDomain::default_for(1);
        for n in [1, 10] {
            assert!(bc_counterexample(n, &d).unwrap() >= 1.0 - 1e-9);
        }
        assert_eq!(
            sine_rescaling_gap(1.0, Some(std::f64::consts::PI), &d).unwrap(),
            0.0
        );
    }

    #[test]
    fn multiplier_examples() {
        let d = SampleDomain::default_for(2);
        let fam = WeightFamily::norm_powers(&[1, 2, 3]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        assert!(multiplier_check(&SmoothMap::linear(&a), &fam, 2, &d).unwrap());
        assert!(multiplier_check(&SmoothMap::zero(2, 2), &fam, 2, &d).unwrap());
        let growth = SmoothMap::radial(
            &[0.0, 0.0],
            crate::jets::RadialProfile::ExpQuadratic { rate: 1.0 },
            &[1.0, 0.0],
        );
        assert!(!multiplier_check(&growth, &fam, 0, &d).unwrap());
    }

    fn so3(a: f64, b: f64, c: f64) -> Vec<f64> {
        vec![0.0, -c, b, c, 0.0, -a, -b, a, 0.0]
    }

    fn element(amp: &[f64], center: f64, diff_amp: f64) -> SemidirectElement {
        let d = SampleDomain::default_for(1);
        let map = MappingElement::new(
            MatrixGroup::So3,
            SmoothMap::gaussian_bump(&[center], 1.0, amp),
            WeightFamily::trivial(),
            1,
            d.clone(),
        )
        .unwrap();
        let diff =
            ChartDiffeo::new(SmoothMap::gaussian_bump(&[-center], 1.3, &[diff_amp])).unwrap();
        SemidirectElement::new(map, diff).unwrap()
    }

    #[test]
    fn semidirect_group_laws() {
        let a = element(&so3(0.1, -0.05, 0.08), 0.3, 0.4);
        let b = element(&so3(-0.06, 0.1, 0.02), -0.5, -0.3);
        let c = element(&so3(0.02, 0.04, -0.1), 1.0, 0.2);
        let left = semidirect_multiply(&semidirect_multiply(&a, &b).unwrap(), &c).unwrap();
        let right = semidirect_multiply(&a, &semidirect_multiply(&b, &c).unwrap()).unwrap();
        assert!(semidirect_residual(&left, &right).unwrap() < 1e-8);

        let inv = semidirect_invert(&a).unwrap();
        let e = semidirect_multiply(&a, &inv).unwrap();
        assert!(e.map_part.sup_norm() < 1e-8);
        assert!(
            grid_residual(
                e.diff_part.phi(),
                &SmoothMap::zero(1, 1),
                e.diff_part.domain()
            )
            .unwrap()
            .0 < 1e-8
        );
    }

    #[test]
    fn action_is_a_homomorphism() {
        let a = element(&so3(0.1, -0.05, 0.08), 0.3, 0.4);
        let b = element(&so3(-0.06, 0.1, 0.02), -0.5, -0.3);
        let phi = &a.diff_part;
        let lhs = omega(
            phi,
            &mapping_group::multiply(&a.map_part, &b.map_part).unwrap(),
        )
        .unwrap();
        let rhs = mapping_group::multiply(
            &omega(phi, &a.map_part).unwrap(),
            &omega(phi, &b.map_part).unwrap(),
        )
        .unwrap();
        assert!(grid_residual(lhs.xi(), rhs.xi(), phi.domain()).unwrap().0 < 1e-10);
    }
}
