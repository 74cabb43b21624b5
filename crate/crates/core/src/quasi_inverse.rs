//! Quasi-inversion `QI(x) = −Σ_{i≥1} xⁱ` for scalars, square matrices and
//! matrix-valued maps, the inverse in the monoid `x ⋄ y = x + y − xy`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jets::{spectral_norm, Jet, JetSource, MultilinearForm, MultilinearTensor, SmoothMap};
use crate::weights::SampleDomain;

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const SERIES_TOL: f64 = 1e-12;
pub const MAX_MATRIX_DIM: usize = 8;

#[derive(Debug, Clone)]
pub enum AlgebraVariant {
    Scalar(f64),
    Matrix(DMatrix<f64>),
    /// A map into row-major `n × n` matrices, normed by its grid sup.
    MatrixMap {
        map: SmoothMap,
        n: usize,
        domain: SampleDomain,
    },
}

#[derive(Debug, Clone)]
pub struct AlgebraElement {
    variant: AlgebraVariant,
    norm_bound: f64,
}

fn check_matrix_dim(n: usize) -> Result<()> {
    if n == 0 || n > MAX_MATRIX_DIM {
        return Err(Error::DimensionMismatch {
            expected: MAX_MATRIX_DIM,
            found: n,
        });
    }
    Ok(())
}

fn matrix_norm(m: &DMatrix<f64>) -> f64 {
    let row_major: Vec<f64> = m.transpose().as_slice().to_vec();
    spectral_norm(m.nrows(), m.ncols(), &row_major)
}

/// Row-major coefficient vector to matrix.
pub(crate) fn to_matrix(n: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, data)
}

pub(crate) fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl AlgebraElement {
    pub fn scalar(x: f64) -> Self {
        Self {
            variant: AlgebraVariant::Scalar(x),
            norm_bound: x.abs(),
        }
    }

    pub fn matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        check_matrix_dim(m.nrows())?;
        let norm_bound = matrix_norm(&m);
        Ok(Self {
            variant: AlgebraVariant::Matrix(m),
            norm_bound,
        })
    }

    /// The norm bound is the sup of spectral norms over `domain`.
    pub fn matrix_map(map: SmoothMap, n: usize, domain: SampleDomain) -> Result<Self> {
        check_matrix_dim(n)?;
        if map.dim_out() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: map.dim_out(),
            });
        }
        if map.dim_in() != domain.dimension {
            return Err(Error::DimensionMismatch {
                expected: domain.dimension,
                found: map.dim_in(),
            });
        }
        let norm_bound = (0..domain.len())
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let v = map.eval(&domain.point(i))?;
                Ok(spectral_norm(n, n, &v))
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
        Ok(Self {
            variant: AlgebraVariant::MatrixMap { map, n, domain },
            norm_bound,
        })
    }

    pub fn variant(&self) -> &AlgebraVariant {
        &self.variant
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self.variant {
            AlgebraVariant::Scalar(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.variant {
            AlgebraVariant::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&SmoothMap> {
        match &self.variant {
            AlgebraVariant::MatrixMap { map, .. } => Some(map),
            _ => None,
        }
    }

    /// Value of the map variant at `x` as a matrix.
    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.variant {
            AlgebraVariant::Scalar(s) => Ok(DMatrix::from_element(1, 1, *s)),
            AlgebraVariant::Matrix(m) => Ok(m.clone()),
            AlgebraVariant::MatrixMap { map, n, .. } => Ok(to_matrix(*n, &map.eval(x)?)),
        }
    }
}

/// Smallest `N ≥ 1` with `q^{N+1} / (1 − q) < SERIES_TOL`.
pub fn series_terms(q: f64) -> usize {
    let mut n = 1;
    let mut tail = q * q / (1.0 - q);
    while tail >= SERIES_TOL {
        tail *= q;
        n += 1;
    }
    n
}

/// `−(x + x² + ... + x^N)` by Horner's scheme.
fn neumann_matrix(x: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let mut s = x.clone();
    for _ in 1..terms {
        s = x + x * &s;
    }
    -s
}

fn neumann_scalar(x: f64, terms: usize) -> f64 {
    let mut s = x;
    for _ in 1..terms {
        s = x + x * s;
    }
    -s
}

fn not_invertible(norm: f64) -> Error {
    Error::NotQuasiInvertibleBySeries { norm }
}

/// Quasi-inverse by the Neumann series, truncated by the geometric tail bound.
pub fn quasi_invert(x: &AlgebraElement) -> Result<AlgebraElement> {
    if x.norm_bound.is_nan() || x.norm_bound >= 1.0 {
        return Err(not_invertible(x.norm_bound));
    }
    quasi_invert_with_terms(x, series_terms(x.norm_bound))
}

/// Quasi-inverse truncated after exactly `terms` powers.
pub fn quasi_invert_with_terms(x: &AlgebraElement, terms: usize) -> Result<AlgebraElement> {
    if x.norm_bound.is_nan() || x.norm_bound >= 1.0 {
        return Err(not_invertible(x.norm_bound));
    }
    match &x.variant {
        AlgebraVariant::Scalar(s) => Ok(AlgebraElement::scalar(neumann_scalar(*s, terms))),
        AlgebraVariant::Matrix(m) => AlgebraElement::matrix(neumann_matrix(m, terms)),
        AlgebraVariant::MatrixMap { map, n, domain } => {
            let source = PointwiseQuasiInverse {
                inner: map.clone(),
                n: *n,
                terms,
                product: MultilinearForm::matrix_matrix(*n),
            };
            AlgebraElement::matrix_map(SmoothMap::from_source(Arc::new(source)), *n, domain.clone())
        }
    }
}

/// Matrix quasi-inverse on its own, for callers holding a bare matrix.
pub fn quasi_invert_matrix(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let el = AlgebraElement::matrix(m.clone())?;
    let qi = quasi_invert(&el)?;
    Ok(qi.as_matrix().cloned().expect("matrix variant"))
}

fn residuals(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let left = x + y - x * y;
    let right = y + x - y * x;
    matrix_norm(&left).max(matrix_norm(&right))
}

/// `max(‖x + y − xy‖, ‖y + x − yx‖)`, as a grid sup for the map variant.
pub fn check_quasi_identity(x: &AlgebraElement, y: &AlgebraElement) -> Result<f64> {
    match (&x.variant, &y.variant) {
        (AlgebraVariant::Scalar(a), AlgebraVariant::Scalar(b)) => Ok((a + b - a * b).abs()),
        (AlgebraVariant::Matrix(a), AlgebraVariant::Matrix(b)) => {
            if a.shape() != b.shape() {
                return Err(Error::DimensionMismatch {
                    expected: a.nrows(),
                    found: b.nrows(),
                });
            }
            Ok(residuals(a, b))
        }
        (
            AlgebraVariant::MatrixMap { map: a, n, domain },
            AlgebraVariant::MatrixMap { map: b, n: m, .. },
        ) => {
            if n != m || a.dim_in() != b.dim_in() {
                return Err(Error::DimensionMismatch {
                    expected: *n,
                    found: *m,
                });
            }
            (0..domain.len())
                .into_par_iter()
                .map(|i| -> Result<f64> {
                    let p = domain.point(i);
                    Ok(residuals(
                        &to_matrix(*n, &a.eval(&p)?),
                        &to_matrix(*n, &b.eval(&p)?),
                    ))
                })
                .try_reduce(|| 0.0, |u, v| Ok(u.max(v)))
        }
        _ => Err(Error::Config(
            "quasi-identity needs two elements of the same kind".to_string(),
        )),
    }
}

/// `x ↦ QI(γ(x))`. With `R = I − QI(γ) = Σ_{i≥0} γⁱ` the identity
/// `(I − γ) R = I` determines the derivatives of `R` order by order.
struct PointwiseQuasiInverse {
    inner: SmoothMap,
    n: usize,
    terms: usize,
    product: MultilinearForm,
}

impl JetSource for PointwiseQuasiInverse {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.n * self.n
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }

    fn name(&self) -> &str {
        "pointwise_quasi_inverse"
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let n = self.n;
        let g = self.inner.jet(x, order)?;
        let xm = to_matrix(n, g.value());
        let y = neumann_matrix(&xm, self.terms);
        let r = DMatrix::identity(n, n) - &y;

        let mut p = g.clone();
        p.scale(-1.0);
        for i in 0..n {
            p.derivative_mut(0).data_mut()[i * n + i] += 1.0;
        }
        let dim = self.inner.dim_in();
        let mut r_tensors = vec![MultilinearTensor::from_data(
            0,
            n * n,
            dim,
            to_row_major(&r),
        )];
        for k in 1..=order {
            let mut partial = r_tensors.clone();
            partial.push(MultilinearTensor::zeros(k, n * n, dim));
            let lower = self
                .product
                .superpose_jets(&[p.clone().truncated(k), Jet::from_tensors(partial)]);
            let top = lower.derivative(k);
            let slots = top.slot_count();
            let mut dk = MultilinearTensor::zeros(k, n * n, dim);
            for s in 0..slots {
                let t = to_matrix(
                    n,
                    &(0..n * n)
                        .map(|o| top.data()[o * slots + s])
                        .collect::<Vec<_>>(),
                );
                let v = -(&r * t);
                for (o, val) in to_row_major(&v).into_iter().enumerate() {
                    dk.data_mut()[o * slots + s] = val;
                }
            }
            r_tensors.push(dk);
        }
        let mut out = Jet::from_tensors(r_tensors);
        out.scale(-1.0);
        for i in 0..n {
            out.derivative_mut(0).data_mut()[i * n + i] += 1.0;
        }
        Ok(out)
    }
}
