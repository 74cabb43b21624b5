//! Weighted diffeomorphisms in the global chart `φ = map − id`.
//!
//! Composition becomes `γ∘(η + id) + η`. Inverses of elements in the
//! contraction region `‖φ‖_{1,1} < 1` are computed per query point by the
//! fixed-point iteration `ψ ← −φ(ψ + y)`, and their jets by implicit
//! differentiation of `(φ + id)∘(ψ + id) = id`.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::cache::PointCache;
use crate::jets::{
    compose_jets, FdMap, Jet, JetSource, MultilinearForm, MultilinearTensor, SmoothMap,
    MAX_JET_ORDER,
};
use crate::quasi_inverse::quasi_invert_matrix;
use crate::weights::{
    is_decaying, seminorm_profile, DecayReport, SampleDomain, Weight, WeightFamily,
};

/// `φ` lies in the contraction region when `‖φ‖_{1,1} < 1 − U_W_MARGIN`.
pub const U_W_MARGIN: f64 = 0.02;
pub const FP_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 200;
/// Absolute slack allowed in the weighted estimate checks.
pub const ESTIMATE_SLACK: f64 = 1e-9;

/// An element of the weighted monoid, stored by its chart coordinate.
#[derive(Debug, Clone)]
pub struct ChartDiffeo {
    phi: SmoothMap,
    domain: SampleDomain,
    norm_10: f64,
    norm_11: f64,
    decaying: OnceLock<bool>,
}

impl ChartDiffeo {
    /// Caches `‖φ‖_{1,0}` and `‖φ‖_{1,1}` on the default domain for the dimension.
    pub fn new(phi: SmoothMap) -> Result<Self> {
        let domain = SampleDomain::default_for(phi.dim_in());
        Self::with_domain(phi, domain)
    }

    pub fn with_domain(phi: SmoothMap, domain: SampleDomain) -> Result<Self> {
        if phi.dim_in() != phi.dim_out() {
            return Err(Error::DimensionMismatch {
                expected: phi.dim_in(),
                found: phi.dim_out(),
            });
        }
        let profile = seminorm_profile(&phi, &[Weight::ConstantOne], 1, &domain)?;
        Ok(Self {
            norm_10: profile.full[0][0],
            norm_11: profile.full[0][1],
            phi,
            domain,
            decaying: OnceLock::new(),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(SmoothMap::zero(n, n))
    }

    pub fn phi(&self) -> &SmoothMap {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.dim_in()
    }

    pub fn domain(&self) -> &SampleDomain {
        &self.domain
    }

    pub fn norm_10(&self) -> f64 {
        self.norm_10
    }

    pub fn norm_11(&self) -> f64 {
        self.norm_11
    }

    pub fn in_u_w(&self) -> bool {
        self.norm_11 < 1.0 - U_W_MARGIN
    }

    /// Decay of `φ` itself against `{1}` at order 1, computed on first use.
    pub fn decaying(&self) -> Result<bool> {
        if let Some(&d) = self.decaying.get() {
            return Ok(d);
        }
        let d = is_decaying(&self.phi, &WeightFamily::trivial(), 1, &self.domain)?.decaying;
        Ok(*self.decaying.get_or_init(|| d))
    }

    /// The full map `x ↦ x + φ(x)`.
    pub fn full_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = self.phi.eval(x)?;
        Ok(v.iter().zip(x).map(|(a, b)| a + b).collect())
    }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// `g(γ, η) = γ∘(η + id)`.
pub fn shifted_map(gamma: &SmoothMap, eta: &SmoothMap) -> Result<SmoothMap> {
    SmoothMap::compose(gamma, &eta.plus_identity()?)
}

/// Chart coordinate `γ∘(η + id) + η` of `(γ + id)∘(η + id)`, without caching norms.
pub fn compose_map(gamma: &SmoothMap, eta: &SmoothMap) -> Result<SmoothMap> {
    check_same_dim(gamma.dim_in(), eta.dim_in())?;
    shifted_map(gamma, eta)?.add(eta)
}

pub fn compose_chart(gamma: &ChartDiffeo, eta: &ChartDiffeo) -> Result<ChartDiffeo> {
    ChartDiffeo::with_domain(compose_map(&gamma.phi, &eta.phi)?, gamma.domain.clone())
}

/// `γ∘φ∘γ⁻¹` in chart coordinates.
pub fn conjugate_chart(gamma: &ChartDiffeo, phi: &ChartDiffeo) -> Result<ChartDiffeo> {
    let inv = invert_chart(gamma)?;
    let inner = compose_map(&phi.phi, &inv.phi)?;
    ChartDiffeo::with_domain(compose_map(&gamma.phi, &inner)?, gamma.domain.clone())
}

/// Solves `ψ = −φ(ψ + y)` from `ψ₀ = 0`, returning `ψ` and the iteration count.
pub fn inverse_fixed_point(phi: &SmoothMap, y: &[f64]) -> Result<(Vec<f64>, usize)> {
    let mut psi = vec![0.0; y.len()];
    let mut x = y.to_vec();
    for iter in 1..=MAX_ITER {
        let next: Vec<f64> = phi.eval(&x)?.into_iter().map(|v| -v).collect();
        let step = next
            .iter()
            .zip(&psi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        psi = next;
        for (xi, (yi, pi)) in x.iter_mut().zip(y.iter().zip(&psi)) {
            *xi = yi + pi;
        }
        if step < FP_TOL {
            return Ok((psi, iter));
        }
        if !step.is_finite() {
            return Err(Error::NoConvergence {
                iterations: iter,
                last_step: step,
            });
        }
        if iter == MAX_ITER {
            return Err(Error::NoConvergence {
                iterations: iter,
                last_step: step,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `I(φ) = (φ + id)⁻¹ − id`, evaluated lazily per point.
struct ChartInverse {
    phi: SmoothMap,
    values: PointCache<Vec<f64>>,
}

impl ChartInverse {
    fn value(&self, y: &[f64]) -> Result<Vec<f64>> {
        if let Some(v) = self.values.get(y) {
            return Ok(v);
        }
        let (psi, _) = inverse_fixed_point(&self.phi, y)?;
        self.values.insert(y, psi.clone());
        Ok(psi)
    }
}

impl JetSource for ChartInverse {
    fn dim_in(&self) -> usize {
        self.phi.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.phi.dim_in()
    }

    fn max_order(&self) -> usize {
        self.phi.max_order().min(MAX_JET_ORDER)
    }

    fn name(&self) -> &str {
        "chart_inverse"
    }

    fn jet(&self, y: &[f64], order: usize) -> Result<Jet> {
        let n = y.len();
        let psi = self.value(y)?;
        let x: Vec<f64> = y.iter().zip(&psi).map(|(a, b)| a + b).collect();
        let mut tensors = vec![MultilinearTensor::from_data(0, n, n, x.clone())];
        if order == 0 {
            return Ok(to_chart_jet(tensors, y));
        }
        // F = φ + id at the preimage x; G = F⁻¹ near y.
        let mut f = self.phi.jet(&x, order)?;
        for i in 0..n {
            f.derivative_mut(1).data_mut()[i * n + i] += 1.0;
        }
        let df_inv = f.jacobian().try_inverse().ok_or(Error::LocalNormTooLarge {
            norm: f64::INFINITY,
        })?;
        let mut dg = MultilinearTensor::zeros(1, n, n);
        for r in 0..n {
            for c in 0..n {
                dg.set(r, &[c], df_inv[(r, c)]);
            }
        }
        tensors.push(dg);
        for k in 2..=order {
            let mut partial = tensors.clone();
            partial.push(MultilinearTensor::zeros(k, n, n));
            let lower = compose_jets(&f.clone().truncated(k), &Jet::from_tensors(partial));
            let top = lower.derivative(k);
            let slots = top.slot_count();
            let mut dk = MultilinearTensor::zeros(k, n, n);
            for s in 0..slots {
                for r in 0..n {
                    let v: f64 = (0..n)
                        .map(|c| df_inv[(r, c)] * top.data()[c * slots + s])
                        .sum();
                    dk.data_mut()[r * slots + s] = -v;
                }
            }
            tensors.push(dk);
        }
        Ok(to_chart_jet(tensors, y))
    }
}

/// Jet of `G` to jet of `G − id`.
fn to_chart_jet(mut tensors: Vec<MultilinearTensor>, y: &[f64]) -> Jet {
    let n = y.len();
    for (v, yi) in tensors[0].data_mut().iter_mut().zip(y) {
        *v -= yi;
    }
    if tensors.len() > 1 {
        for i in 0..n {
            tensors[1].data_mut()[i * n + i] -= 1.0;
        }
    }
    Jet::from_tensors(tensors)
}

fn require_u_w(phi: &ChartDiffeo) -> Result<()> {
    if !phi.in_u_w() {
        return Err(Error::NotInContractionRegion {
            norm: phi.norm_11,
            limit: 1.0 - U_W_MARGIN,
        });
    }
    Ok(())
}

/// The inverse map without caching norms.
pub fn inverse_map(phi: &ChartDiffeo) -> Result<SmoothMap> {
    require_u_w(phi)?;
    Ok(SmoothMap::from_source(Arc::new(ChartInverse {
        phi: phi.phi.clone(),
        values: PointCache::new(),
    })))
}

pub fn invert_chart(phi: &ChartDiffeo) -> Result<ChartDiffeo> {
    ChartDiffeo::with_domain(inverse_map(phi)?, phi.domain.clone())
}

/// `D I(φ)` at the image point `x + φ(x)`, as `Dφ(x)·QI(−Dφ(x)) − Dφ(x)`.
pub fn d_inverse_at(phi: &ChartDiffeo, x: &[f64]) -> Result<DMatrix<f64>> {
    let a = phi.phi.jet(x, 1)?.jacobian();
    let norm = a.singular_values().max();
    if norm.is_nan() || norm >= 1.0 {
        return Err(Error::LocalNormTooLarge { norm });
    }
    let qi = quasi_invert_matrix(&(-&a))?;
    Ok(&a * qi - a)
}

/// Directional derivative `g(Dγ, η)·η₁ + g(γ₁, η)` of `g(γ, η) = γ∘(η + id)`.
pub fn d_compose(
    gamma: &ChartDiffeo,
    eta: &ChartDiffeo,
    gamma1: &SmoothMap,
    eta1: &SmoothMap,
) -> Result<SmoothMap> {
    let n = gamma.dim();
    check_same_dim(n, eta.dim())?;
    check_same_dim(n, gamma1.dim_out())?;
    check_same_dim(n, eta1.dim_out())?;
    let moved_derivative = shifted_map(&gamma.phi.derivative(), &eta.phi)?;
    let first = SmoothMap::superpose(
        &MultilinearForm::matrix_vector(n, n),
        vec![moved_derivative, eta1.clone()],
    )?;
    first.add(&shifted_map(gamma1, &eta.phi)?)
}

/// `d I(φ; φ₁) = −g(φ₁ + g(D I(φ), φ)·φ₁, I(φ))`.
pub fn d_invert(phi: &ChartDiffeo, phi1: &SmoothMap) -> Result<SmoothMap> {
    let n = phi.dim();
    check_same_dim(n, phi1.dim_out())?;
    let psi = inverse_map(phi)?;
    let owner = phi.clone();
    let moved_inverse_derivative = SmoothMap::from_source(Arc::new(
        FdMap::new(n, n * n, move |x| {
            let m = d_inverse_at(&owner, x)?;
            Ok(m.transpose().as_slice().to_vec())
        })
        .named("d_inverse_at"),
    ));
    let inner = SmoothMap::superpose(
        &MultilinearForm::matrix_vector(n, n),
        vec![moved_inverse_derivative, phi1.clone()],
    )?
    .add(phi1)?;
    Ok(shifted_map(&inner, &psi)?.neg())
}

/// A tangent vector `γ₁` attached to the group element with chart coordinate `γ`.
#[derive(Debug, Clone)]
pub struct TangentElement {
    pub base: ChartDiffeo,
    pub vector: SmoothMap,
}

impl TangentElement {
    pub fn new(base: ChartDiffeo, vector: SmoothMap) -> Result<Self> {
        check_same_dim(base.dim(), vector.dim_in())?;
        check_same_dim(base.dim(), vector.dim_out())?;
        Ok(Self { base, vector })
    }
}

/// `(γ, γ₁)·(η, η₁) = (γ∘(η + id) + η, Dγ∘(η + id)·η₁ + γ₁∘(η + id) + η₁)`.
pub fn tangent_multiply(a: &TangentElement, b: &TangentElement) -> Result<TangentElement> {
    let base = compose_chart(&a.base, &b.base)?;
    let vector = d_compose(&a.base, &b.base, &a.vector, &b.vector)?.add(&b.vector)?;
    TangentElement::new(base, vector)
}

/// Largest `‖a(x) − b(x)‖` over the grid and the point attaining it.
pub fn grid_residual(
    a: &SmoothMap,
    b: &SmoothMap,
    domain: &SampleDomain,
) -> Result<(f64, Vec<f64>)> {
    let (residual, index) = (0..domain.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, usize)> {
            let x = domain.point(i);
            let (u, v) = (a.eval(&x)?, b.eval(&x)?);
            let d = u
                .iter()
                .zip(&v)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            Ok((if d.is_nan() { f64::INFINITY } else { d }, i))
        })
        .try_reduce(
            || (0.0, 0),
            |p, q| {
                Ok(if q.0 > p.0 || (q.0 == p.0 && q.1 < p.1) {
                    q
                } else {
                    p
                })
            },
        )?;
    Ok((residual, domain.point(index)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomRecord {
    pub axiom: String,
    pub residual: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub records: Vec<AxiomRecord>,
    pub tolerance: f64,
    pub pass: bool,
}

impl AxiomReport {
    pub fn residual(&self, axiom: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.axiom == axiom)
            .map(|r| r.residual)
    }
}

fn track(worst: &mut AxiomRecord, (residual, point): (f64, Vec<f64>)) {
    if residual > worst.residual || worst.worst_point.is_empty() {
        worst.residual = residual;
        worst.worst_point = point;
    }
}

/// Grid residuals of the identity, associativity and inverse laws.
///
/// Associativity is tested on the cyclic triples `(s_i, s_{i+1}, s_{i+2})`.
pub fn verify_group_axioms(sample: &[ChartDiffeo], tol: f64) -> Result<AxiomReport> {
    let names = [
        "left_identity",
        "right_identity",
        "associativity",
        "right_inverse",
        "left_inverse",
    ];
    let mut records: Vec<AxiomRecord> = names
        .iter()
        .map(|a| AxiomRecord {
            axiom: a.to_string(),
            residual: 0.0,
            worst_point: Vec::new(),
        })
        .collect();
    let m = sample.len();
    for (i, phi) in sample.iter().enumerate() {
        let n = phi.dim();
        let domain = &phi.domain;
        let zero = SmoothMap::zero(n, n);
        track(
            &mut records[0],
            grid_residual(&compose_map(&zero, &phi.phi)?, &phi.phi, domain)?,
        );
        track(
            &mut records[1],
            grid_residual(&compose_map(&phi.phi, &zero)?, &phi.phi, domain)?,
        );
        let (b, c) = (&sample[(i + 1) % m].phi, &sample[(i + 2) % m].phi);
        let left = compose_map(&compose_map(&phi.phi, b)?, c)?;
        let right = compose_map(&phi.phi, &compose_map(b, c)?)?;
        track(&mut records[2], grid_residual(&left, &right, domain)?);
        let psi = inverse_map(phi)?;
        track(
            &mut records[3],
            grid_residual(&compose_map(&phi.phi, &psi)?, &zero, domain)?,
        );
        track(
            &mut records[4],
            grid_residual(&compose_map(&psi, &phi.phi)?, &zero, domain)?,
        );
    }
    let pass = records.iter().all(|r| r.residual < tol);
    Ok(AxiomReport {
        records,
        tolerance: tol,
        pass,
    })
}

/// Decay reports of `φ` and of `I(φ)` at order 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoDecayReport {
    pub decaying: bool,
    pub map: DecayReport,
    pub inverse: DecayReport,
}

pub fn decay_report(phi: &ChartDiffeo, family: &WeightFamily) -> Result<DiffeoDecayReport> {
    let inverse_phi = inverse_map(phi)?;
    let map = is_decaying(&phi.phi, family, 2, &phi.domain)?;
    let inverse = is_decaying(&inverse_phi, family, 2, &phi.domain)?;
    Ok(DiffeoDecayReport {
        decaying: map.decaying && inverse.decaying,
        map,
        inverse,
    })
}

/// Membership in the decaying subgroup: both `φ` and `I(φ)` decay at order 2.
pub fn is_decaying_diffeo(phi: &ChartDiffeo, family: &WeightFamily) -> Result<bool> {
    Ok(decay_report(phi, family)?.decaying)
}

/// Outcome of checking a pointwise inequality over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub points_checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen; negative when the bound holds everywhere.
    pub max_excess: f64,
}

impl BoundCheck {
    fn new() -> Self {
        Self {
            points_checked: 0,
            violations: 0,
            max_excess: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        self.points_checked += 1;
        let excess = lhs - rhs;
        if excess.is_nan() || excess > ESTIMATE_SLACK {
            self.violations += 1;
        }
        self.max_excess = self.max_excess.max(if excess.is_nan() {
            f64::INFINITY
        } else {
            excess
        });
    }

    fn merge(mut self, other: BoundCheck) -> Self {
        self.points_checked += other.points_checked;
        self.violations += other.violations;
        self.max_excess = self.max_excess.max(other.max_excess);
        self
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn sup_over<F>(domain: &SampleDomain, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    (0..domain.len())
        .into_par_iter()
        .map(|i| f(&domain.point(i)))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// `|f(x)|‖I(φ)(x)‖ ≤ |f(x)|‖φ(x)‖ / (1 − t)` for grid points with
/// `‖x‖ > r + ‖I(φ)‖_{1,0}`, where `t` is the sup of `‖Dφ‖` outside radius `r`
/// (estimated on a refined grid).
pub fn inversion_bound_check(phi: &ChartDiffeo, weight: &Weight, r: f64) -> Result<BoundCheck> {
    let psi = inverse_map(phi)?;
    let fine = phi.domain.refined();
    let tail = sup_over(&fine, |x| {
        if norm(x) < r {
            return Ok(0.0);
        }
        Ok(phi.phi.jet(x, 1)?.derivative(1).opnorm_estimate().value)
    })?;
    if tail.is_nan() || tail >= 1.0 {
        return Err(Error::LocalNormTooLarge { norm: tail });
    }
    let psi_sup = sup_over(&phi.domain, |x| Ok(norm(&psi.eval(x)?)))?;
    let domain = &phi.domain;
    (0..domain.len())
        .into_par_iter()
        .map(|i| -> Result<BoundCheck> {
            let x = domain.point(i);
            let mut check = BoundCheck::new();
            if norm(&x) > r + psi_sup {
                let f = weight.eval(&x).abs();
                let lhs = f * norm(&psi.eval(&x)?);
                let rhs = f * norm(&phi.phi.eval(&x)?) / (1.0 - tail);
                check.record(lhs, rhs);
            }
            Ok(check)
        })
        .try_reduce(BoundCheck::new, |a, b| Ok(a.merge(b)))
}

/// `‖g(γ,η) − g(γ₀,η₀)‖_{f,0} ≤ ‖γ‖_{1,1}‖η−η₀‖_{f,0} + ‖γ−γ₀‖_{1,1}‖η₀‖_{f,0} + ‖γ−γ₀‖_{f,0}`,
/// checked at every grid point against the right-hand side, whose norms are
/// taken on a refined grid.
pub fn composition_lipschitz_check(
    gamma: &SmoothMap,
    eta: &SmoothMap,
    gamma0: &SmoothMap,
    eta0: &SmoothMap,
    weight: &Weight,
    domain: &SampleDomain,
) -> Result<BoundCheck> {
    let fine = domain.refined();
    let dg = gamma.sub(gamma0)?;
    let de = eta.sub(eta0)?;
    let lip = |m: &SmoothMap| {
        sup_over(&fine, |x| {
            Ok(m.jet(x, 1)?.derivative(1).opnorm_estimate().value)
        })
    };
    let weighted =
        |m: &SmoothMap| sup_over(&fine, |x| Ok(weight.eval(x).abs() * norm(&m.eval(x)?)));
    let rhs = lip(gamma)? * weighted(&de)? + lip(&dg)? * weighted(eta0)? + weighted(&dg)?;
    let lhs_map = shifted_map(gamma, eta)?.sub(&shifted_map(gamma0, eta0)?)?;
    (0..domain.len())
        .into_par_iter()
        .map(|i| -> Result<BoundCheck> {
            let x = domain.point(i);
            let mut check = BoundCheck::new();
            check.record(weight.eval(&x).abs() * norm(&lhs_map.eval(&x)?), rhs);
            Ok(check)
        })
        .try_reduce(BoundCheck::new, |a, b| Ok(a.merge(b)))
}
