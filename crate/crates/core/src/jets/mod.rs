//! Smooth maps `ℝⁿ → ℝᵐ` carried with their derivative tensors (jets).
//!
//! A [`SmoothMap`] is an immutable expression tree. Catalog leaves (affine
//! maps, radial profiles such as Gaussian bumps, sine profiles) have closed
//! form jets up to order 3; interior nodes (sums, scalings, compositions,
//! multilinear superpositions, derivative maps) assemble their jets from the
//! children's. Black-box maps fall back to finite differences up to order 2.
//!
//! Derivative tensors use the flat layout of [`MultilinearTensor`], in which
//! `D^{ℓ+1}γ(x)` and `D^ℓ(Dγ)(x)` share the same coefficient vector: the map
//! `Dγ` is reported with `dim_out = m·n`, entry `i·n + j` holding `∂ⱼγᵢ`.

pub mod cache;
pub mod chain;
pub mod fd;
pub mod form;
pub mod tensor;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use cache::PointCache;
pub use chain::compose_jets;
pub use form::MultilinearForm;
pub use tensor::{spectral_norm, Jet, MultilinearTensor, OpNorm};

/// Highest jet order provided analytically.
pub const MAX_JET_ORDER: usize = 3;

/// A map that can produce its own jets; the extension point for black-box and
/// implicitly defined maps.
pub trait JetSource: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn max_order(&self) -> usize;
    fn jet(&self, x: &[f64], order: usize) -> Result<Jet>;

    fn name(&self) -> &str {
        "custom"
    }
}

/// Radial profile `h(s)` of `s = ‖x − c‖²`.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialProfile {
    /// `P(s) · exp(−s / (2σ²))` with `P(s) = Σ_k poly[k] s^k`.
    Gaussian { sigma: f64, poly: Vec<f64> },
    /// `exp(rate · s)`.
    ExpQuadratic { rate: f64 },
}

impl RadialProfile {
    /// `[h, h', h'', h''']` at `s`.
    fn derivatives(&self, s: f64) -> [f64; 4] {
        match self {
            RadialProfile::Gaussian { sigma, poly } => {
                let beta = -1.0 / (2.0 * sigma * sigma);
                let e = (beta * s).exp();
                // P and its first three derivatives by Horner
                let mut p = [0.0; 4];
                for &c in poly.iter().rev() {
                    p[3] = p[3] * s + 3.0 * p[2];
                    p[2] = p[2] * s + 2.0 * p[1];
                    p[1] = p[1] * s + p[0];
                    p[0] = p[0] * s + c;
                }
                let b2 = beta * beta;
                [
                    p[0] * e,
                    (p[1] + beta * p[0]) * e,
                    (p[2] + 2.0 * beta * p[1] + b2 * p[0]) * e,
                    (p[3] + 3.0 * beta * p[2] + 3.0 * b2 * p[1] + b2 * beta * p[0]) * e,
                ]
            }
            RadialProfile::ExpQuadratic { rate } => {
                let e = (rate * s).exp();
                [e, rate * e, rate * rate * e, rate * rate * rate * e]
            }
        }
    }
}

enum Node {
    Affine {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
    Radial {
        center: Vec<f64>,
        profile: RadialProfile,
        amplitude: Vec<f64>,
    },
    Sine {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: f64,
    },
    Sum(Vec<SmoothMap>),
    Scaled(f64, SmoothMap),
    Composed {
        outer: SmoothMap,
        inner: SmoothMap,
        inner_jets: PointCache<Jet>,
    },
    Superposed {
        form: MultilinearForm,
        args: Vec<SmoothMap>,
    },
    Derivative(SmoothMap),
    Custom(Arc<dyn JetSource>),
}

/// An immutable smooth map `ℝⁿ → ℝᵐ`; cloning shares the expression tree.
#[derive(Clone)]
pub struct SmoothMap {
    node: Arc<Node>,
    dim_in: usize,
    dim_out: usize,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SmoothMap({} : ℝ^{} → ℝ^{})",
            self.kind_name(),
            self.dim_in,
            self.dim_out
        )
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

impl SmoothMap {
    fn new(node: Node, dim_in: usize, dim_out: usize) -> Self {
        Self {
            node: Arc::new(node),
            dim_in,
            dim_out,
        }
    }

    /// `x ↦ A x + b`.
    pub fn affine(matrix: &DMatrix<f64>, offset: &[f64]) -> Result<Self> {
        check_dim(matrix.nrows(), offset.len())?;
        let (m, n) = matrix.shape();
        let row_major: Vec<f64> = (0..m)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| matrix[(r, c)])
            .collect();
        Ok(Self::new(
            Node::Affine {
                matrix: row_major,
                offset: offset.to_vec(),
            },
            n,
            m,
        ))
    }

    pub fn linear(matrix: &DMatrix<f64>) -> Self {
        let zero = vec![0.0; matrix.nrows()];
        Self::affine(matrix, &zero).expect("offset sized from the matrix")
    }

    pub fn constant(dim_in: usize, value: &[f64]) -> Self {
        Self::affine(&DMatrix::zeros(value.len(), dim_in), value).expect("consistent shape")
    }

    pub fn zero(dim_in: usize, dim_out: usize) -> Self {
        Self::constant(dim_in, &vec![0.0; dim_out])
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(&DMatrix::identity(n, n))
    }

    /// `x ↦ amplitude · exp(−‖x − center‖² / (2σ²))`.
    pub fn gaussian_bump(center: &[f64], sigma: f64, amplitude: &[f64]) -> Self {
        Self::poly_gauss(center, sigma, &[1.0], amplitude)
    }

    /// `x ↦ amplitude · P(‖x − c‖²) · exp(−‖x − c‖² / (2σ²))`, `P` given by `coeffs` in ascending powers.
    pub fn poly_gauss(center: &[f64], sigma: f64, coeffs: &[f64], amplitude: &[f64]) -> Self {
        assert!(sigma > 0.0, "Gaussian width must be positive");
        Self::radial(
            center,
            RadialProfile::Gaussian {
                sigma,
                poly: coeffs.to_vec(),
            },
            amplitude,
        )
    }

    pub fn radial(center: &[f64], profile: RadialProfile, amplitude: &[f64]) -> Self {
        Self::new(
            Node::Radial {
                center: center.to_vec(),
                profile,
                amplitude: amplitude.to_vec(),
            },
            center.len(),
            amplitude.len(),
        )
    }

    /// `x ↦ amplitude · sin(⟨frequency, x⟩ + phase)`.
    pub fn sine_profile(amplitude: &[f64], frequency: &[f64], phase: f64) -> Self {
        Self::new(
            Node::Sine {
                amplitude: amplitude.to_vec(),
                frequency: frequency.to_vec(),
                phase,
            },
            frequency.len(),
            amplitude.len(),
        )
    }

    /// Wraps a black-box evaluator; jets up to order 2 come from finite differences.
    pub fn from_fn<F>(dim_in: usize, dim_out: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::from_source(Arc::new(FdMap::new(dim_in, dim_out, move |x| Ok(f(x)))))
    }

    pub fn from_source(source: Arc<dyn JetSource>) -> Self {
        let (n, m) = (source.dim_in(), source.dim_out());
        Self::new(Node::Custom(source), n, m)
    }

    pub fn sum(maps: Vec<SmoothMap>) -> Result<Self> {
        let first = maps.first().ok_or(Error::ArityMismatch {
            expected: 1,
            found: 0,
        })?;
        let (n, m) = (first.dim_in, first.dim_out);
        for map in &maps {
            check_dim(n, map.dim_in)?;
            check_dim(m, map.dim_out)?;
        }
        Ok(Self::new(Node::Sum(maps), n, m))
    }

    pub fn add(&self, other: &SmoothMap) -> Result<Self> {
        Self::sum(vec![self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &SmoothMap) -> Result<Self> {
        Self::sum(vec![self.clone(), other.scaled(-1.0)])
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(Node::Scaled(c, self.clone()), self.dim_in, self.dim_out)
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &SmoothMap, inner: &SmoothMap) -> Result<Self> {
        check_dim(outer.dim_in, inner.dim_out)?;
        Ok(Self::new(
            Node::Composed {
                outer: outer.clone(),
                inner: inner.clone(),
                inner_jets: PointCache::new(),
            },
            inner.dim_in,
            outer.dim_out,
        ))
    }

    /// `x ↦ b(γ₁(x), ..., γ_m(x))`.
    pub fn superpose(form: &MultilinearForm, args: Vec<SmoothMap>) -> Result<Self> {
        if args.len() != form.arity() {
            return Err(Error::ArityMismatch {
                expected: form.arity(),
                found: args.len(),
            });
        }
        let n = args[0].dim_in;
        for (arg, &d) in args.iter().zip(form.dims_in()) {
            check_dim(d, arg.dim_out)?;
            check_dim(n, arg.dim_in)?;
        }
        let m = form.dim_out();
        Ok(Self::new(
            Node::Superposed {
                form: form.clone(),
                args,
            },
            n,
            m,
        ))
    }

    /// The derivative `Dγ` as a matrix-valued map (row-major `m × n` entries).
    pub fn derivative(&self) -> Self {
        Self::new(
            Node::Derivative(self.clone()),
            self.dim_in,
            self.dim_out * self.dim_in,
        )
    }

    /// The full map `γ + id`.
    pub fn plus_identity(&self) -> Result<Self> {
        check_dim(self.dim_in, self.dim_out)?;
        self.add(&Self::identity(self.dim_in))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn kind_name(&self) -> &str {
        match &*self.node {
            Node::Affine { .. } => "affine",
            Node::Radial {
                profile: RadialProfile::Gaussian { .. },
                ..
            } => "poly_gauss",
            Node::Radial { .. } => "exp_quadratic",
            Node::Sine { .. } => "sine_profile",
            Node::Sum(_) => "sum",
            Node::Scaled(..) => "scaled",
            Node::Composed { .. } => "composed",
            Node::Superposed { .. } => "superposed",
            Node::Derivative(_) => "derivative",
            Node::Custom(source) => source.name(),
        }
    }

    /// Highest jet order this map can produce.
    pub fn max_order(&self) -> usize {
        match &*self.node {
            Node::Affine { .. } | Node::Radial { .. } | Node::Sine { .. } => MAX_JET_ORDER,
            Node::Sum(maps) => maps.iter().map(Self::max_order).min().unwrap_or(0),
            Node::Scaled(_, inner) => inner.max_order(),
            Node::Composed { outer, inner, .. } => outer
                .max_order()
                .min(inner.max_order())
                .min(chain::CHAIN_ORDER),
            Node::Superposed { args, .. } => args.iter().map(Self::max_order).min().unwrap_or(0),
            Node::Derivative(inner) => inner.max_order().saturating_sub(1),
            Node::Custom(source) => source.max_order(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, 0)?.into_tensors().swap_remove(0).into_data())
    }

    /// Value and derivative tensors of orders `0..=order` at `x`.
    pub fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        check_dim(self.dim_in, x.len())?;
        let supported = self.max_order();
        if order > supported {
            return Err(Error::UnsupportedOrder {
                requested: order,
                supported,
            });
        }
        let (n, m) = (self.dim_in, self.dim_out);
        match &*self.node {
            Node::Affine { matrix, offset } => {
                let mut jet = Jet::zeros(order, m, n);
                let value: Vec<f64> = (0..m)
                    .map(|r| offset[r] + (0..n).map(|c| matrix[r * n + c] * x[c]).sum::<f64>())
                    .collect();
                jet.derivative_mut(0).data_mut().copy_from_slice(&value);
                if order >= 1 {
                    jet.derivative_mut(1).data_mut().copy_from_slice(matrix);
                }
                Ok(jet)
            }
            Node::Radial {
                center,
                profile,
                amplitude,
            } => Ok(radial_jet(x, center, profile, amplitude, order)),
            Node::Sine {
                amplitude,
                frequency,
                phase,
            } => Ok(sine_jet(x, amplitude, frequency, *phase, order)),
            Node::Sum(maps) => {
                let mut jet = Jet::zeros(order, m, n);
                for map in maps {
                    jet.add_scaled(1.0, &map.jet(x, order)?);
                }
                Ok(jet)
            }
            Node::Scaled(c, inner) => {
                let mut jet = inner.jet(x, order)?;
                jet.scale(*c);
                Ok(jet)
            }
            Node::Composed {
                outer,
                inner,
                inner_jets,
            } => {
                let inner_jet = match inner_jets.get(x) {
                    Some(cached) if cached.order() >= order => cached.truncated(order),
                    _ => {
                        let fresh = inner.jet(x, order)?;
                        inner_jets.insert(x, fresh.clone());
                        fresh
                    }
                };
                let outer_jet = outer.jet(inner_jet.value(), order)?;
                Ok(compose_jets(&outer_jet, &inner_jet))
            }
            Node::Superposed { form, args } => {
                let jets = args
                    .iter()
                    .map(|a| a.jet(x, order))
                    .collect::<Result<Vec<_>>>()?;
                Ok(form.superpose_jets(&jets))
            }
            Node::Derivative(inner) => {
                let full = inner.jet(x, order + 1)?;
                let tensors = full
                    .into_tensors()
                    .into_iter()
                    .skip(1)
                    .enumerate()
                    .map(|(k, t)| t.reshaped(k, m))
                    .collect();
                Ok(Jet::from_tensors(tensors))
            }
            Node::Custom(source) => source.jet(x, order),
        }
    }
}

fn radial_jet(
    x: &[f64],
    center: &[f64],
    profile: &RadialProfile,
    amplitude: &[f64],
    order: usize,
) -> Jet {
    let n = x.len();
    let m = amplitude.len();
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let s: f64 = d.iter().map(|v| v * v).sum();
    let h = profile.derivatives(s);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    let mut tensors = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut t = MultilinearTensor::zeros(k, m, n);
        let slots = t.slot_count();
        let mut idx = vec![0; k];
        for flat in 0..slots {
            t.multi_index(flat, &mut idx);
            let scalar = match k {
                0 => h[0],
                1 => 2.0 * h[1] * d[idx[0]],
                2 => {
                    let (i, j) = (idx[0], idx[1]);
                    4.0 * h[2] * d[i] * d[j] + 2.0 * h[1] * delta(i, j)
                }
                _ => {
                    let (i, j, l) = (idx[0], idx[1], idx[2]);
                    8.0 * h[3] * d[i] * d[j] * d[l]
                        + 4.0
                            * h[2]
                            * (delta(i, j) * d[l] + delta(i, l) * d[j] + delta(j, l) * d[i])
                }
            };
            for (o, a) in amplitude.iter().enumerate() {
                t.data_mut()[o * slots + flat] = a * scalar;
            }
        }
        tensors.push(t);
    }
    Jet::from_tensors(tensors)
}

fn sine_jet(x: &[f64], amplitude: &[f64], frequency: &[f64], phase: f64, order: usize) -> Jet {
    let n = x.len();
    let m = amplitude.len();
    let theta = phase + x.iter().zip(frequency).map(|(a, w)| a * w).sum::<f64>();
    let (s, c) = theta.sin_cos();
    let cycle = [s, c, -s, -c];
    let mut tensors = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut t = MultilinearTensor::zeros(k, m, n);
        let slots = t.slot_count();
        let mut idx = vec![0; k];
        for flat in 0..slots {
            t.multi_index(flat, &mut idx);
            let w: f64 = idx.iter().map(|&i| frequency[i]).product();
            for (o, a) in amplitude.iter().enumerate() {
                t.data_mut()[o * slots + flat] = a * cycle[k % 4] * w;
            }
        }
        tensors.push(t);
    }
    Jet::from_tensors(tensors)
}

type FallibleEvaluator = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// Black-box map with finite-difference jets up to order 2.
pub struct FdMap {
    dim_in: usize,
    dim_out: usize,
    eval: Box<FallibleEvaluator>,
    name: String,
}

impl FdMap {
    pub fn new<F>(dim_in: usize, dim_out: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            dim_in,
            dim_out,
            eval: Box::new(eval),
            name: "fd_wrapped".to_string(),
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

impl JetSource for FdMap {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn max_order(&self) -> usize {
        fd::FD_ORDER
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        fd::fd_jet(|y| (self.eval)(y), x, self.dim_out, order)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_second_derivative_vanishes() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let map = SmoothMap::affine(&a, &[0.5, -1.0]).unwrap();
        let jet = map.jet(&[1.0, 2.0], 2).unwrap();
        assert_eq!(jet.value(), &[5.5, -1.0]);
        assert_eq!(jet.derivative(1).data(), &[1.0, 2.0, -1.0, 0.5]);
        assert_eq!(jet.derivative(2).max_abs(), 0.0);
    }

    #[test]
    fn sine_maclaurin_at_zero() {
        let map = SmoothMap::sine_profile(&[1.0], &[1.0], 0.0);
        let jet = map.jet(&[0.0], 2).unwrap();
        assert_eq!(jet.value(), &[0.0]);
        assert_eq!(jet.derivative(1).data(), &[1.0]);
        assert_eq!(jet.derivative(2).data(), &[-0.0]);
    }

    #[test]
    fn gaussian_matches_closed_form_in_one_dimension() {
        // exp(−x²) has σ² = 1/2
        let map = SmoothMap::gaussian_bump(&[0.0], std::f64::consts::FRAC_1_SQRT_2, &[1.0]);
        let x: f64 = 0.8;
        let e = (-x * x).exp();
        let jet = map.jet(&[x], 3).unwrap();
        assert!((jet.value()[0] - e).abs() < 1e-15);
        assert!((jet.derivative(1).data()[0] + 2.0 * x * e).abs() < 1e-15);
        assert!((jet.derivative(2).data()[0] - (4.0 * x * x - 2.0) * e).abs() < 1e-14);
        assert!((jet.derivative(3).data()[0] - (12.0 * x - 8.0 * x * x * x) * e).abs() < 1e-14);
    }

    #[test]
    fn derivative_map_reshapes_higher_jet() {
        let map = SmoothMap::gaussian_bump(&[0.1, -0.2], 0.9, &[1.0, 2.0]);
        let x = [0.3, 0.4];
        let full = map.jet(&x, 2).unwrap();
        let d = map.derivative().jet(&x, 1).unwrap();
        assert_eq!(d.value(), full.derivative(1).data());
        assert_eq!(d.derivative(1).data(), full.derivative(2).data());
        assert_eq!(d.dim_out(), 4);
    }

    #[test]
    fn unsupported_order_is_reported() {
        let map = SmoothMap::from_fn(1, 1, |x| vec![x[0].sin()]);
        assert!(matches!(
            map.jet(&[0.0], 3),
            Err(Error::UnsupportedOrder {
                requested: 3,
                supported: 2
            })
        ));
    }

    #[test]
    fn composition_rejects_dimension_mismatch() {
        let outer = SmoothMap::identity(2);
        let inner = SmoothMap::identity(3);
        assert!(matches!(
            SmoothMap::compose(&outer, &inner),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn superposition_rejects_arity_mismatch() {
        let f = SmoothMap::identity(1);
        assert!(matches!(
            SmoothMap::superpose(&MultilinearForm::scalar_product(), vec![f]),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn affine_of_affine_derivative_is_matrix_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.5]);
        let comp = SmoothMap::compose(
            &SmoothMap::linear(&a),
            &SmoothMap::affine(&b, &[1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let jet = comp.jet(&[0.2, 0.7], 1).unwrap();
        let ab = &a * &b;
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(jet.derivative(1).get(r, &[c]), ab[(r, c)]);
            }
        }
    }
}
