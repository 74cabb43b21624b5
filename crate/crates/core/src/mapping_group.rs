//! Weighted mapping groups `C_W(U, G)` for matrix groups `G`, in the chart
//! `ξ ↦ exp∘ξ` with values in the Lie algebra.
//!
//! Algebra-valued maps are `SmoothMap`s into row-major `n × n` matrices.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{FdMap, SmoothMap};
use crate::linalg::{expm, logm, op_norm};
use crate::quasi_inverse::{to_matrix, to_row_major};
use crate::weights::{bounded_growth, is_decaying, SampleDomain, WeightFamily};

/// Elements keep `‖ξ(x)‖ < CHART_RADIUS` on the grid.
pub const CHART_RADIUS: f64 = 0.5;
pub const MAX_GROUP_DIM: usize = 4;
/// Tolerance for algebra membership of sampled values.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "group", content = "n")]
pub enum MatrixGroup {
    Gl(usize),
    So3,
    /// Upper triangular with unit diagonal.
    Unipotent(usize),
}

impl MatrixGroup {
    pub fn gl(n: usize) -> Result<Self> {
        Self::checked(MatrixGroup::Gl(n))
    }

    pub fn unipotent(n: usize) -> Result<Self> {
        Self::checked(MatrixGroup::Unipotent(n))
    }

    fn checked(g: Self) -> Result<Self> {
        let n = g.n();
        if n == 0 || n > MAX_GROUP_DIM {
            return Err(Error::DimensionMismatch {
                expected: MAX_GROUP_DIM,
                found: n,
            });
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        match *self {
            MatrixGroup::Gl(n) | MatrixGroup::Unipotent(n) => n,
            MatrixGroup::So3 => 3,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            MatrixGroup::Gl(n) => format!("GL({n})"),
            MatrixGroup::So3 => "SO(3)".to_string(),
            MatrixGroup::Unipotent(n) => format!("U({n})"),
        }
    }

    /// Distance of `m` from the Lie algebra (antisymmetric / strictly upper triangular).
    pub fn algebra_defect(&self, m: &DMatrix<f64>) -> f64 {
        let n = self.n();
        match self {
            MatrixGroup::Gl(_) => 0.0,
            MatrixGroup::So3 => (m + m.transpose()).abs().max() / 2.0,
            MatrixGroup::Unipotent(_) => (0..n)
                .flat_map(|r| (0..=r).map(move |c| (r, c)))
                .map(|(r, c)| m[(r, c)].abs())
                .fold(0.0, f64::max),
        }
    }

    /// Distance of `g` from the group.
    pub fn group_defect(&self, g: &DMatrix<f64>) -> f64 {
        let n = self.n();
        let id = DMatrix::<f64>::identity(n, n);
        match self {
            MatrixGroup::Gl(_) => {
                if g.determinant().abs() > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            MatrixGroup::So3 => (g.transpose() * g - &id)
                .abs()
                .max()
                .max((g.determinant() - 1.0).abs()),
            MatrixGroup::Unipotent(_) => self.algebra_defect(&(g - id)),
        }
    }

    pub fn exp(&self, xi: &DMatrix<f64>) -> DMatrix<f64> {
        expm(xi)
    }

    /// Principal logarithm, defined for `‖g − I‖ < 1`.
    pub fn log(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        logm(g)
    }
}

/// An element of `C_W(U, G)` in exponential coordinates.
#[derive(Debug, Clone)]
pub struct MappingElement {
    group: MatrixGroup,
    xi: SmoothMap,
    family: WeightFamily,
    order: usize,
    domain: SampleDomain,
    sup_norm: f64,
}

impl MappingElement {
    /// Validates chart radius and algebra membership of `ξ` on the grid.
    pub fn new(
        group: MatrixGroup,
        xi: SmoothMap,
        family: WeightFamily,
        order: usize,
        domain: SampleDomain,
    ) -> Result<Self> {
        let n = group.n();
        if xi.dim_out() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: xi.dim_out(),
            });
        }
        if xi.dim_in() != domain.dimension {
            return Err(Error::DimensionMismatch {
                expected: domain.dimension,
                found: xi.dim_in(),
            });
        }
        if order > 2 {
            return Err(Error::UnsupportedOrder {
                requested: order,
                supported: 2,
            });
        }
        let (sup_norm, defect) = (0..domain.len())
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let m = to_matrix(n, &xi.eval(&domain.point(i))?);
                Ok((op_norm(&m), group.algebra_defect(&m)))
            })
            .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0.max(b.0), a.1.max(b.1))))?;
        if sup_norm.is_nan() || sup_norm >= CHART_RADIUS {
            return Err(Error::ChartOverflow {
                norm: sup_norm,
                radius: CHART_RADIUS,
            });
        }
        if defect > ALGEBRA_TOL {
            return Err(Error::Config(format!(
                "chart coordinate leaves the Lie algebra of {} by {defect:e}",
                group.name()
            )));
        }
        Ok(Self {
            group,
            xi,
            family,
            order,
            domain,
            sup_norm,
        })
    }

    pub fn identity(
        group: MatrixGroup,
        family: WeightFamily,
        domain: SampleDomain,
    ) -> Result<Self> {
        let n = group.n();
        let xi = SmoothMap::zero(domain.dimension, n * n);
        Self::new(group, xi, family, 0, domain)
    }

    pub fn group(&self) -> MatrixGroup {
        self.group
    }

    pub fn xi(&self) -> &SmoothMap {
        &self.xi
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn domain(&self) -> &SampleDomain {
        &self.domain
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// `ξ(x)` as a matrix.
    pub fn coordinate_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(to_matrix(self.group.n(), &self.xi.eval(x)?))
    }

    /// `γ(x) = exp(ξ(x))`.
    pub fn value_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.group.exp(&self.coordinate_at(x)?))
    }

    fn same_space(&self, other: &MappingElement) -> Result<()> {
        if self.group != other.group || self.xi.dim_in() != other.xi.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.group.n(),
                found: other.group.n(),
            });
        }
        Ok(())
    }
}

/// Pointwise product `x ↦ log(exp ξ_a(x) · exp ξ_b(x))`.
pub fn multiply(a: &MappingElement, b: &MappingElement) -> Result<MappingElement> {
    a.same_space(b)?;
    let (xa, xb, group) = (a.xi.clone(), b.xi.clone(), a.group);
    let n = group.n();
    let xi = SmoothMap::from_source(Arc::new(
        FdMap::new(a.xi.dim_in(), n * n, move |x| {
            let g = group.exp(&to_matrix(n, &xa.eval(x)?)) * group.exp(&to_matrix(n, &xb.eval(x)?));
            Ok(to_row_major(&group.log(&g)?))
        })
        .named("mapping_product"),
    ));
    MappingElement::new(
        group,
        xi,
        a.family.clone(),
        a.order.min(b.order),
        a.domain.clone(),
    )
}

/// `ξ ↦ −ξ`.
pub fn invert(a: &MappingElement) -> Result<MappingElement> {
    Ok(MappingElement {
        xi: a.xi.neg(),
        ..a.clone()
    })
}

/// The mapping-group exponential `v ↦ exp∘v`, which is `v` itself in these coordinates.
pub fn group_exponential(
    group: MatrixGroup,
    v: SmoothMap,
    family: WeightFamily,
    order: usize,
    domain: SampleDomain,
) -> Result<MappingElement> {
    MappingElement::new(group, v, family, order, domain)
}

/// A time-dependent algebra-valued map `t ↦ a(t)·v` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct AlgebraField {
    /// `a(t) = Σ_k coeffs[k] tᵏ`.
    pub coeffs: Vec<f64>,
    pub map: SmoothMap,
}

impl AlgebraField {
    pub fn constant(map: SmoothMap) -> Self {
        Self {
            coeffs: vec![1.0],
            map,
        }
    }

    pub fn modulated(coeffs: Vec<f64>, map: SmoothMap) -> Self {
        Self { coeffs, map }
    }

    pub fn scale_at(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn at(&self, t: f64, x: &[f64], n: usize) -> Result<DMatrix<f64>> {
        Ok(to_matrix(n, &self.map.eval(x)?) * self.scale_at(t))
    }
}

/// RK4 states of `η′ = η·Γ(t)(x)`, `η(0) = I`, at the knots `i/steps`.
pub fn evolution_knots(
    field: &AlgebraField,
    n: usize,
    steps: usize,
    x: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    let h = 1.0 / steps as f64;
    let base = to_matrix(n, &field.map.eval(x)?);
    let gam = |t: f64| &base * field.scale_at(t);
    let mut eta = DMatrix::<f64>::identity(n, n);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(eta.clone());
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = &eta * gam(t);
        let k2 = (&eta + &k1 * (h / 2.0)) * gam(t + h / 2.0);
        let k3 = (&eta + &k2 * (h / 2.0)) * gam(t + h / 2.0);
        let k4 = (&eta + &k3 * h) * gam(t + h);
        eta += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(eta.clone());
    }
    Ok(out)
}

/// The left evolution `x ↦ η(x, 1)`, logged back into chart coordinates.
pub fn evolve_mapping(
    group: MatrixGroup,
    field: &AlgebraField,
    steps: usize,
    family: WeightFamily,
    order: usize,
    domain: SampleDomain,
) -> Result<MappingElement> {
    let n = group.n();
    if field.map.dim_out() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: field.map.dim_out(),
        });
    }
    if steps == 0 {
        return Err(Error::TooFewSteps { steps, required: 1 });
    }
    let f = field.clone();
    let xi = SmoothMap::from_source(Arc::new(
        FdMap::new(field.map.dim_in(), n * n, move |x| {
            let knots = evolution_knots(&f, n, steps, x)?;
            Ok(to_row_major(&group.log(&knots[steps])?))
        })
        .named("mapping_evolution"),
    ));
    MappingElement::new(group, xi, family, order, domain)
}

/// Largest deviation of the finite-difference left logarithmic derivative
/// `η⁻¹·∂ₜη` from `Γ(t)(x)` at interior knots.
pub fn left_log_derivative_residual(
    field: &AlgebraField,
    n: usize,
    steps: usize,
    points: &[Vec<f64>],
) -> Result<f64> {
    let h = 1.0 / steps as f64;
    points
        .par_iter()
        .map(|x| -> Result<f64> {
            let knots = evolution_knots(field, n, steps, x)?;
            let mut worst: f64 = 0.0;
            for i in 2..steps.saturating_sub(1) {
                let deriv = (&knots[i - 2] - &knots[i - 1] * 8.0 + &knots[i + 1] * 8.0
                    - &knots[i + 2])
                    / (12.0 * h);
                let inv = knots[i]
                    .clone()
                    .try_inverse()
                    .ok_or(Error::LocalNormTooLarge {
                        norm: f64::INFINITY,
                    })?;
                let got = inv * deriv;
                worst = worst.max((got - field.at(i as f64 * h, x, n)?).abs().max());
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Membership of `ξ` in `C_W` (finite seminorms up to order `k`, judged by
/// bounded growth) or, with `decaying`, in its decaying subspace.
pub fn is_member(
    xi: &SmoothMap,
    family: &WeightFamily,
    k: usize,
    decaying: bool,
    domain: &SampleDomain,
) -> Result<bool> {
    if decaying {
        Ok(is_decaying(xi, family, k, domain)?.decaying)
    } else {
        bounded_growth(xi, family, k, domain)
    }
}
