//! The evolution equation `Γ′ = p(t)∘(Γ + id)`, `Γ(0) = 0`, in chart coordinates.
//!
//! Since the right-hand side is composition with the full map `Γ + id`, the
//! equation is integrated point by point as the flow `y′ = p(t)(y)`,
//! `y(0) = x`, with `Γ(t)(x) = y(t) − x`. Every query point is an independent
//! fixed-step RK4 run.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff_group::ChartDiffeo;
use crate::error::{Error, Result};
use crate::jets::fd::FIRST_STEP;
use crate::jets::{FdMap, SmoothMap};
use crate::weights::{seminorm, SampleDomain, Weight};

pub const ODE_TOL: f64 = 1e-6;
/// Steps per unit of the Lipschitz bound.
pub const STEPS_PER_LIPSCHITZ: f64 = 10.0;
/// The knot-derivative stencil needs five knots.
pub const MIN_STEPS: usize = 4;
/// Time samples used for the Lipschitz bound in `evolve`.
pub const LIPSCHITZ_SAMPLES: usize = 101;

#[derive(Debug, Clone)]
pub enum FieldKind {
    /// `p(t) = v₀` for all `t`.
    Constant(SmoothMap),
    /// `p(t) = a(t)·v₀` with `a(t) = Σ_k coeffs[k] tᵏ`.
    Modulated { coeffs: Vec<f64>, map: SmoothMap },
    /// `p(t)(x) = A(t)x` with `A(t) = Σ_k tᵏ A_k`.
    Linear(Vec<DMatrix<f64>>),
}

/// A time-dependent vector field `τ ↦ rate · p(offset + rate·τ)` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct TimeField {
    kind: FieldKind,
    offset: f64,
    rate: f64,
    dim: usize,
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

impl TimeField {
    pub fn new(kind: FieldKind) -> Result<Self> {
        let dim = match &kind {
            FieldKind::Constant(m) | FieldKind::Modulated { map: m, .. } => {
                if m.dim_in() != m.dim_out() {
                    return Err(Error::DimensionMismatch {
                        expected: m.dim_in(),
                        found: m.dim_out(),
                    });
                }
                m.dim_in()
            }
            FieldKind::Linear(ms) => {
                let first = ms.first().ok_or(Error::Config(
                    "linear field needs at least one matrix".to_string(),
                ))?;
                let n = first.nrows();
                if ms.iter().any(|m| m.nrows() != n || m.ncols() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: first.ncols(),
                    });
                }
                n
            }
        };
        Ok(Self {
            kind,
            offset: 0.0,
            rate: 1.0,
            dim,
        })
    }

    pub fn constant(map: SmoothMap) -> Result<Self> {
        Self::new(FieldKind::Constant(map))
    }

    pub fn modulated(coeffs: Vec<f64>, map: SmoothMap) -> Result<Self> {
        Self::new(FieldKind::Modulated { coeffs, map })
    }

    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        Self::new(FieldKind::Linear(vec![a]))
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The field driving `[a, b]` rescaled to `[0, 1]`: `τ ↦ (b − a)·p(a + (b − a)τ)`.
    ///
    /// `restricted(1, 0)` is the time-reversed, sign-flipped field `−p(1 − τ)`.
    pub fn restricted(&self, a: f64, b: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            offset: self.offset + self.rate * a,
            rate: self.rate * (b - a),
            dim: self.dim,
        }
    }

    fn original_time(&self, t: f64) -> f64 {
        self.offset + self.rate * t
    }

    fn matrix_at(ms: &[DMatrix<f64>], s: f64) -> DMatrix<f64> {
        let n = ms[0].nrows();
        ms.iter()
            .rev()
            .fold(DMatrix::zeros(n, n), |acc, m| acc * s + m)
    }

    /// `p(t)` as a smooth map.
    pub fn at(&self, t: f64) -> SmoothMap {
        let s = self.original_time(t);
        match &self.kind {
            FieldKind::Constant(m) => m.scaled(self.rate),
            FieldKind::Modulated { coeffs, map } => map.scaled(self.rate * poly(coeffs, s)),
            FieldKind::Linear(ms) => SmoothMap::linear(&(Self::matrix_at(ms, s) * self.rate)),
        }
    }

    /// `p(t)(y)`.
    pub fn eval(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let s = self.original_time(t);
        let (scale, v) = match &self.kind {
            FieldKind::Constant(m) => (self.rate, m.eval(y)?),
            FieldKind::Modulated { coeffs, map } => (self.rate * poly(coeffs, s), map.eval(y)?),
            FieldKind::Linear(ms) => {
                let a = Self::matrix_at(ms, s);
                (
                    self.rate,
                    (a * nalgebra::DVector::from_column_slice(y))
                        .as_slice()
                        .to_vec(),
                )
            }
        };
        Ok(v.into_iter().map(|c| scale * c).collect())
    }

    /// `Dp(t)(y)`.
    pub fn jacobian(&self, t: f64, y: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.original_time(t);
        Ok(match &self.kind {
            FieldKind::Constant(m) => m.jet(y, 1)?.jacobian() * self.rate,
            FieldKind::Modulated { coeffs, map } => {
                map.jet(y, 1)?.jacobian() * (self.rate * poly(coeffs, s))
            }
            FieldKind::Linear(ms) => Self::matrix_at(ms, s) * self.rate,
        })
    }
}

/// `p(t)∘(Γ + id)`.
pub fn rhs(t: f64, gamma: &SmoothMap, p: &TimeField) -> Result<SmoothMap> {
    SmoothMap::compose(&p.at(t), &gamma.plus_identity()?)
}

/// `max_t ‖p(t)‖_{1,1}` over `samples` equally spaced times in `[0, 1]`.
pub fn lipschitz_bound(p: &TimeField, samples: usize) -> Result<f64> {
    let times: Vec<f64> = if samples <= 1 {
        vec![0.0]
    } else {
        (0..samples)
            .map(|i| i as f64 / (samples - 1) as f64)
            .collect()
    };
    let domain = SampleDomain::default_for(p.dim);
    match &p.kind {
        FieldKind::Constant(m) => Ok(p.rate.abs() * seminorm(m, &Weight::ConstantOne, 1, &domain)?),
        FieldKind::Modulated { coeffs, map } => {
            let base = seminorm(map, &Weight::ConstantOne, 1, &domain)?;
            let amp = times
                .iter()
                .map(|&t| (p.rate * poly(coeffs, p.original_time(t))).abs())
                .fold(0.0, f64::max);
            Ok(amp * base)
        }
        FieldKind::Linear(ms) => Ok(times
            .iter()
            .map(|&t| {
                crate::linalg::op_norm(&(TimeField::matrix_at(ms, p.original_time(t)) * p.rate))
            })
            .fold(0.0, f64::max)),
    }
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step(p: &TimeField, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = p.eval(t, y)?;
    let k2 = p.eval(t + h / 2.0, &axpy(y, h / 2.0, &k1))?;
    let k3 = p.eval(t + h / 2.0, &axpy(y, h / 2.0, &k2))?;
    let k4 = p.eval(t + h, &axpy(y, h, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Point flow from `x` to time `t`: whole steps of `1/steps`, then one partial step.
pub fn flow_point(p: &TimeField, steps: usize, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let h = 1.0 / steps as f64;
    let whole = ((t / h).floor() as usize).min(steps);
    let mut y = x.to_vec();
    for i in 0..whole {
        y = rk4_step(p, i as f64 * h, &y, h)?;
    }
    let rest = t - whole as f64 * h;
    if rest > 1e-15 {
        y = rk4_step(p, whole as f64 * h, &y, rest)?;
    }
    Ok(y)
}

/// Flow states at every knot `i/steps`, `i = 0..=steps`.
pub fn trajectory(p: &TimeField, steps: usize, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let h = 1.0 / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.to_vec());
    for i in 0..steps {
        let next = rk4_step(p, i as f64 * h, &out[i], h)?;
        out.push(next);
    }
    Ok(out)
}

/// Fourth-order derivative estimate at knot `i` from equally spaced samples.
fn knot_derivative(ys: &[Vec<f64>], i: usize, h: f64) -> Vec<f64> {
    let m = ys.len() - 1;
    let combo = |w: &[(usize, f64)]| -> Vec<f64> {
        (0..ys[0].len())
            .map(|c| w.iter().map(|&(j, a)| a * ys[j][c]).sum::<f64>() / (12.0 * h))
            .collect()
    };
    match i {
        0 => combo(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)]),
        1 => combo(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)]),
        _ if i == m => combo(&[
            (m, 25.0),
            (m - 1, -48.0),
            (m - 2, 36.0),
            (m - 3, -16.0),
            (m - 4, 3.0),
        ]),
        _ if i == m - 1 => combo(&[
            (m, 3.0),
            (m - 1, 10.0),
            (m - 2, -18.0),
            (m - 3, 6.0),
            (m - 4, -1.0),
        ]),
        _ => combo(&[(i - 2, 1.0), (i - 1, -8.0), (i + 1, 8.0), (i + 2, -1.0)]),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// The solution `Γ` on the knots `tᵢ = i/steps`.
#[derive(Debug, Clone)]
pub struct EvolutionCurve {
    field: TimeField,
    steps: usize,
    domain: SampleDomain,
    lipschitz: f64,
    max_defect: f64,
}

impl EvolutionCurve {
    pub fn field(&self) -> &TimeField {
        &self.field
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|i| i as f64 / self.steps as f64)
            .collect()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Largest knot defect `‖Γ′(tᵢ) − p(tᵢ)∘(Γ(tᵢ) + id)‖` over the grid.
    pub fn max_defect(&self) -> f64 {
        self.max_defect
    }

    pub fn domain(&self) -> &SampleDomain {
        &self.domain
    }

    /// `Γ(t)(x)`, with dense output between knots.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let y = flow_point(&self.field, self.steps, x, t)?;
        Ok(y.iter().zip(x).map(|(a, b)| a - b).collect())
    }

    /// `Γ(t)` as a smooth map with finite-difference jets.
    pub fn map_at(&self, t: f64) -> SmoothMap {
        let field = self.field.clone();
        let steps = self.steps;
        let n = self.field.dim;
        SmoothMap::from_source(Arc::new(
            FdMap::new(n, n, move |x| {
                let y = flow_point(&field, steps, x, t)?;
                Ok(y.iter().zip(x).map(|(a, b)| a - b).collect())
            })
            .named("evolution"),
        ))
    }

    pub fn final_map(&self) -> SmoothMap {
        self.map_at(1.0)
    }

    /// `Γ(t)` as a group element, with norms computed on the curve's domain.
    pub fn chart_at(&self, t: f64) -> Result<ChartDiffeo> {
        ChartDiffeo::with_domain(self.map_at(t), self.domain.clone())
    }
}

/// Required step count `max(MIN_STEPS, ⌈10 K⌉)` for Lipschitz bound `K`.
pub fn required_steps(lipschitz: f64) -> usize {
    ((STEPS_PER_LIPSCHITZ * lipschitz).ceil() as usize).max(MIN_STEPS)
}

/// Integrates the evolution equation with `steps` RK4 steps and checks the
/// knot defect on the default grid.
pub fn evolve(p: &TimeField, steps: usize) -> Result<EvolutionCurve> {
    evolve_on(p, steps, SampleDomain::default_for(p.dim))
}

pub fn evolve_on(p: &TimeField, steps: usize, domain: SampleDomain) -> Result<EvolutionCurve> {
    let lipschitz = lipschitz_bound(p, LIPSCHITZ_SAMPLES)?;
    if !lipschitz.is_finite() {
        return Err(Error::LocalNormTooLarge { norm: lipschitz });
    }
    let required = required_steps(lipschitz);
    if steps < required {
        return Err(Error::TooFewSteps { steps, required });
    }
    let h = 1.0 / steps as f64;
    let max_defect = (0..domain.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let x = domain.point(i);
            let ys = trajectory(p, steps, &x)?;
            let mut worst: f64 = 0.0;
            for (k, y) in ys.iter().enumerate() {
                let lhs = knot_derivative(&ys, k, h);
                let rhs = p.eval(k as f64 * h, y)?;
                let d = dist(&lhs, &rhs);
                worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    if max_defect.is_nan() || max_defect > ODE_TOL {
        return Err(Error::DefectTooLarge {
            defect: max_defect,
            tolerance: ODE_TOL,
        });
    }
    Ok(EvolutionCurve {
        field: p.clone(),
        steps,
        domain,
        lipschitz,
        max_defect,
    })
}

/// Step-count ceiling for [`evolve_refined`].
pub const MAX_STEPS: usize = 1 << 14;

/// Evolves from the Lipschitz-derived step count, doubling it until the knot
/// defect passes or `MAX_STEPS` is exceeded.
pub fn evolve_refined(p: &TimeField, domain: SampleDomain) -> Result<EvolutionCurve> {
    let mut steps = required_steps(lipschitz_bound(p, LIPSCHITZ_SAMPLES)?);
    loop {
        match evolve_on(p, steps, domain.clone()) {
            Err(Error::DefectTooLarge { .. }) if steps * 2 <= MAX_STEPS => steps *= 2,
            other => return other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxReport {
    pub max_deviation: f64,
    pub worst_time: f64,
    pub worst_point: Vec<f64>,
    pub points_checked: usize,
    pub knots_checked: usize,
}

/// Integrates `Φ′ = (Dp(t)∘(Γ + id))·(Φ + I)`, `Φ(0) = 0`, alongside the point
/// flow and compares `Φ(tᵢ)` with central differences of `Γ(tᵢ)` in `x`.
pub fn aux_derivative_check(
    p: &TimeField,
    curve: &EvolutionCurve,
    points: &[Vec<f64>],
) -> Result<AuxReport> {
    let steps = curve.steps;
    let h = 1.0 / steps as f64;
    let n = p.dim;
    let results = points
        .par_iter()
        .map(|x| -> Result<(f64, f64, Vec<f64>)> {
            // Coupled RK4 on (y, Φ).
            let id = DMatrix::<f64>::identity(n, n);
            let deriv =
                |t: f64, y: &[f64], phi: &DMatrix<f64>| -> Result<(Vec<f64>, DMatrix<f64>)> {
                    Ok((p.eval(t, y)?, p.jacobian(t, y)? * (phi + &id)))
                };
            let mut y = x.clone();
            let mut phi = DMatrix::<f64>::zeros(n, n);
            let mut phis = vec![phi.clone()];
            for i in 0..steps {
                let t = i as f64 * h;
                let (k1, l1) = deriv(t, &y, &phi)?;
                let (k2, l2) = deriv(
                    t + h / 2.0,
                    &axpy(&y, h / 2.0, &k1),
                    &(&phi + &l1 * (h / 2.0)),
                )?;
                let (k3, l3) = deriv(
                    t + h / 2.0,
                    &axpy(&y, h / 2.0, &k2),
                    &(&phi + &l2 * (h / 2.0)),
                )?;
                let (k4, l4) = deriv(t + h, &axpy(&y, h, &k3), &(&phi + &l3 * h))?;
                for c in 0..n {
                    y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
                phi += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
                phis.push(phi.clone());
            }

            // Central differences of Γ(tᵢ) in x, Richardson-extrapolated.
            let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            let step = FIRST_STEP * scale;
            let mut fd = vec![DMatrix::<f64>::zeros(n, n); steps + 1];
            for j in 0..n {
                let shifted = |d: f64| {
                    let mut z = x.clone();
                    z[j] += d;
                    trajectory(p, steps, &z)
                };
                let (pp, pm) = (shifted(step)?, shifted(-step)?);
                let (hp, hm) = (shifted(step / 2.0)?, shifted(-step / 2.0)?);
                for k in 0..=steps {
                    for r in 0..n {
                        let coarse = (pp[k][r] - pm[k][r]) / (2.0 * step);
                        let fine = (hp[k][r] - hm[k][r]) / step;
                        fd[k][(r, j)] = (4.0 * fine - coarse) / 3.0;
                    }
                }
            }
            for m in fd.iter_mut() {
                *m -= DMatrix::<f64>::identity(n, n);
            }
            let mut worst = (0.0, 0.0);
            for k in 0..=steps {
                let d = (&phis[k] - &fd[k]).abs().max();
                if d > worst.0 || d.is_nan() {
                    worst = (if d.is_nan() { f64::INFINITY } else { d }, k as f64 * h);
                }
            }
            Ok((worst.0, worst.1, x.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = AuxReport {
        max_deviation: 0.0,
        worst_time: 0.0,
        worst_point: points.first().cloned().unwrap_or_default(),
        points_checked: points.len(),
        knots_checked: steps + 1,
    };
    for (d, t, x) in results {
        if d > report.max_deviation {
            report.max_deviation = d;
            report.worst_time = t;
            report.worst_point = x;
        }
    }
    Ok(report)
}

/// Grid sup of `‖Γ(1) − (Γ_{[s,1]} ⋆ Γ_{[0,s]})‖`, chart composition on the right.
/// Each piece gets `steps` knots of its own, so the grids differ.
pub fn flow_property_residual(p: &TimeField, steps: usize, s: f64) -> Result<f64> {
    let whole = evolve(p, steps)?;
    let head = evolve(&p.restricted(0.0, s), steps)?;
    let tail = evolve(&p.restricted(s, 1.0), steps)?;
    let glued = crate::diff_group::compose_map(&tail.final_map(), &head.final_map())?;
    Ok(crate::diff_group::grid_residual(&whole.final_map(), &glued, &whole.domain)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm;

    fn matrix_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.2, -0.5, 0.4, -0.1])
    }

    #[test]
    fn rhs_examples() {
        let p = TimeField::linear(matrix_a()).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.3, -0.2]);
        let r = rhs(0.3, &SmoothMap::linear(&b), &p).unwrap();
        let x = [1.0, -2.0];
        let want =
            matrix_a() * (b + DMatrix::identity(2, 2)) * nalgebra::DVector::from_column_slice(&x);
        let got = r.eval(&x).unwrap();
        assert!((got[0] - want[0]).abs() < 1e-14 && (got[1] - want[1]).abs() < 1e-14);

        let v = TimeField::constant(SmoothMap::constant(2, &[0.5, 1.0])).unwrap();
        let gamma = SmoothMap::gaussian_bump(&[0.0, 0.0], 1.0, &[1.0, 2.0]);
        assert_eq!(
            rhs(0.7, &gamma, &v).unwrap().eval(&[0.1, 0.2]).unwrap(),
            vec![0.5, 1.0]
        );
        let bump = SmoothMap::gaussian_bump(&[0.0, 0.0], 1.0, &[1.0, 2.0]);
        let q = TimeField::constant(bump.clone()).unwrap();
        assert_eq!(
            rhs(0.0, &SmoothMap::zero(2, 2), &q)
                .unwrap()
                .eval(&[0.3, 0.1])
                .unwrap(),
            bump.eval(&[0.3, 0.1]).unwrap()
        );
    }

    #[test]
    fn lipschitz_bound_examples() {
        let v = TimeField::constant(SmoothMap::constant(1, &[2.0])).unwrap();
        assert_eq!(lipschitz_bound(&v, 11).unwrap(), 0.0);
        let p = TimeField::linear(matrix_a()).unwrap();
        let exact = crate::linalg::op_norm(&matrix_a());
        assert!((lipschitz_bound(&p, 11).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn refinement_doubles_until_the_defect_passes() {
        let bump = SmoothMap::gaussian_bump(&[0.0], 0.8, &[0.4]);
        let p = TimeField::modulated(vec![0.0, 2.0], bump).unwrap();
        let start = required_steps(lipschitz_bound(&p, LIPSCHITZ_SAMPLES).unwrap());
        assert!(matches!(
            evolve(&p, start),
            Err(Error::DefectTooLarge { .. })
        ));
        let curve = evolve_refined(&p, SampleDomain::default_for(1)).unwrap();
        assert!(curve.steps() > start && curve.steps().is_multiple_of(start));
        assert!(curve.max_defect() <= ODE_TOL);
    }

    #[test]
    fn constant_field_moves_linearly() {
        let p = TimeField::constant(SmoothMap::constant(1, &[0.75])).unwrap();
        let curve = evolve(&p, 8).unwrap();
        for t in [0.0, 0.25, 0.5, 1.0] {
            assert!((curve.eval(t, &[3.0]).unwrap()[0] - 0.75 * t).abs() < 1e-15);
        }
    }

    #[test]
    fn linearly_modulated_constant_integrates_to_half() {
        let p = TimeField::modulated(vec![0.0, 1.0], SmoothMap::constant(2, &[1.0, -2.0])).unwrap();
        let curve = evolve(&p, 10).unwrap();
        let g = curve.eval(1.0, &[0.4, 0.4]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-10 && (g[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_field_matches_exponential() {
        let p = TimeField::linear(matrix_a()).unwrap();
        let curve = evolve(&p, 200).unwrap();
        let exact = expm(&matrix_a()) - DMatrix::identity(2, 2);
        let x = [1.5, -0.5];
        let want = exact * nalgebra::DVector::from_column_slice(&x);
        let got = curve.eval(1.0, &x).unwrap();
        assert!((got[0] - want[0]).abs() < 1e-8 && (got[1] - want[1]).abs() < 1e-8);
    }

    #[test]
    fn too_few_steps_is_rejected() {
        let p = TimeField::linear(matrix_a() * 10.0).unwrap();
        assert!(matches!(evolve(&p, 5), Err(Error::TooFewSteps { .. })));
    }

    #[test]
    fn auxiliary_equation_tracks_spatial_derivative() {
        let p = TimeField::modulated(
            vec![1.0, -0.5],
            SmoothMap::gaussian_bump(&[0.2], 0.9, &[0.6]),
        )
        .unwrap();
        let curve = evolve(&p, 100).unwrap();
        let pts: Vec<Vec<f64>> = vec![vec![-1.0], vec![0.0], vec![0.5], vec![2.0]];
        let report = aux_derivative_check(&p, &curve, &pts).unwrap();
        assert!(report.max_deviation < 1e-5, "{report:?}");
    }

    #[test]
    fn restricted_field_reverses() {
        let p = TimeField::modulated(vec![0.0, 1.0], SmoothMap::constant(1, &[1.0])).unwrap();
        let r = p.restricted(1.0, 0.0);
        assert_eq!(r.eval(0.0, &[0.0]).unwrap(), vec![-1.0]);
        assert_eq!(r.eval(1.0, &[0.0]).unwrap(), vec![0.0]);
    }
}
