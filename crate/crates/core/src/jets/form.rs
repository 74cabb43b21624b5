//! Continuous multilinear forms `b : E₁ × ... × E_m → F` on flattened
//! Euclidean spaces, and the Leibniz rule for `b ∘ (γ₁, ..., γ_m)`.

use super::tensor::{Jet, MultilinearTensor};
use crate::error::{Error, Result};

/// Largest arity supported by superposition.
pub const MAX_ARITY: usize = 3;

/// A sparse multilinear form with a known bound on its operator norm.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearForm {
    dims_in: Vec<usize>,
    dim_out: usize,
    terms: Vec<FormTerm>,
    norm_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct FormTerm {
    out: usize,
    idx: Vec<usize>,
    coeff: f64,
}

impl MultilinearForm {
    /// Dense form from coefficients `c[o][i_1]...[i_m]` (output-major, row-major).
    ///
    /// The norm bound is the Frobenius norm of the coefficient array.
    pub fn from_dense(dims_in: Vec<usize>, dim_out: usize, coeffs: &[f64]) -> Result<Self> {
        if dims_in.is_empty() || dims_in.len() > MAX_ARITY {
            return Err(Error::ArityMismatch {
                expected: MAX_ARITY,
                found: dims_in.len(),
            });
        }
        let per_out: usize = dims_in.iter().product();
        if coeffs.len() != per_out * dim_out {
            return Err(Error::DimensionMismatch {
                expected: per_out * dim_out,
                found: coeffs.len(),
            });
        }
        let mut terms = Vec::new();
        for (flat, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let out = flat / per_out;
            let mut rest = flat % per_out;
            let mut idx = vec![0; dims_in.len()];
            for (slot, &d) in dims_in.iter().enumerate().rev() {
                idx[slot] = rest % d;
                rest /= d;
            }
            terms.push(FormTerm { out, idx, coeff: c });
        }
        let norm_bound = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(Self {
            dims_in,
            dim_out,
            terms,
            norm_bound,
        })
    }

    /// Pointwise product of two scalars.
    pub fn scalar_product() -> Self {
        Self {
            dims_in: vec![1, 1],
            dim_out: 1,
            terms: vec![FormTerm {
                out: 0,
                idx: vec![0, 0],
                coeff: 1.0,
            }],
            norm_bound: 1.0,
        }
    }

    /// Scalar times vector in ℝᵐ.
    pub fn scalar_vector(m: usize) -> Self {
        Self {
            dims_in: vec![1, m],
            dim_out: m,
            terms: (0..m)
                .map(|i| FormTerm {
                    out: i,
                    idx: vec![0, i],
                    coeff: 1.0,
                })
                .collect(),
            norm_bound: 1.0,
        }
    }

    /// Row-major `rows × cols` matrix applied to a vector in ℝ^cols.
    ///
    /// `‖Mv‖ ≤ ‖M‖_op ‖v‖ ≤ ‖M‖_F ‖v‖`, so the bound is 1.
    pub fn matrix_vector(rows: usize, cols: usize) -> Self {
        let mut terms = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                terms.push(FormTerm {
                    out: r,
                    idx: vec![r * cols + c, c],
                    coeff: 1.0,
                });
            }
        }
        Self {
            dims_in: vec![rows * cols, cols],
            dim_out: rows,
            terms,
            norm_bound: 1.0,
        }
    }

    /// Product of two row-major `n × n` matrices; `‖AB‖_F ≤ ‖A‖_F ‖B‖_F`.
    pub fn matrix_matrix(n: usize) -> Self {
        let mut terms = Vec::with_capacity(n * n * n);
        for r in 0..n {
            for c in 0..n {
                for k in 0..n {
                    terms.push(FormTerm {
                        out: r * n + c,
                        idx: vec![r * n + k, k * n + c],
                        coeff: 1.0,
                    });
                }
            }
        }
        Self {
            dims_in: vec![n * n, n * n],
            dim_out: n * n,
            terms,
            norm_bound: 1.0,
        }
    }

    pub fn arity(&self) -> usize {
        self.dims_in.len()
    }

    pub fn dims_in(&self) -> &[usize] {
        &self.dims_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Upper bound on `sup ‖b(v₁, ..., v_m)‖` over unit arguments.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn apply(&self, args: &[&[f64]]) -> Vec<f64> {
        assert_eq!(args.len(), self.arity());
        let mut out = vec![0.0; self.dim_out];
        for t in &self.terms {
            let prod: f64 = t.idx.iter().zip(args).map(|(&i, a)| a[i]).product();
            out[t.out] += t.coeff * prod;
        }
        out
    }

    /// Jet of `x ↦ b(γ₁(x), ..., γ_m(x))` from the argument jets.
    ///
    /// Each derivative direction is distributed over the arguments in every
    /// possible way, so
    /// `D(b∘(γ₁,…,γ_m)) = Σᵢ b(γ₁, …, Dγᵢ, …, γ_m)` and its higher analogues.
    pub fn superpose_jets(&self, args: &[Jet]) -> Jet {
        assert_eq!(args.len(), self.arity());
        let order = args.iter().map(Jet::order).min().unwrap_or(0);
        let n = args[0].dim_in();
        let arity = self.arity();
        let mut tensors = Vec::with_capacity(order + 1);
        for ell in 0..=order {
            let mut t = MultilinearTensor::zeros(ell, self.dim_out, n);
            let slots = t.slot_count();
            let mut dir = vec![0; ell];
            let assignments = arity.pow(ell as u32);
            let mut owner = vec![0; ell];
            let mut sub_idx: Vec<Vec<usize>> = vec![Vec::with_capacity(ell); arity];
            let mut offsets = vec![0usize; arity];
            for flat in 0..slots {
                t.multi_index(flat, &mut dir);
                for assignment in 0..assignments {
                    let mut rest = assignment;
                    for s in (0..ell).rev() {
                        owner[s] = rest % arity;
                        rest /= arity;
                    }
                    for (i, sub) in sub_idx.iter_mut().enumerate() {
                        sub.clear();
                        sub.extend((0..ell).filter(|&s| owner[s] == i).map(|s| dir[s]));
                        let inner_flat = sub.iter().fold(0, |acc, &j| acc * n + j);
                        offsets[i] = inner_flat;
                    }
                    for term in &self.terms {
                        let mut prod = term.coeff;
                        for (i, &c) in term.idx.iter().enumerate() {
                            let d = args[i].derivative(sub_idx[i].len());
                            prod *= d.data()[c * d.slot_count() + offsets[i]];
                            if prod == 0.0 {
                                break;
                            }
                        }
                        t.data_mut()[term.out * slots + flat] += prod;
                    }
                }
            }
            tensors.push(t);
        }
        Jet::from_tensors(tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_vector_form_multiplies() {
        let b = MultilinearForm::matrix_vector(2, 2);
        let m = [1.0, 2.0, 3.0, 4.0];
        let v = [1.0, -1.0];
        assert_eq!(b.apply(&[&m, &v]), vec![-1.0, -1.0]);
    }

    #[test]
    fn matrix_matrix_form_multiplies() {
        let b = MultilinearForm::matrix_matrix(2);
        let a = [1.0, 2.0, 3.0, 4.0];
        let c = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(b.apply(&[&a, &c]), vec![2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn dense_form_rejects_bad_lengths() {
        assert!(matches!(
            MultilinearForm::from_dense(vec![2, 2], 1, &[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            MultilinearForm::from_dense(vec![1; 4], 1, &[1.0]),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn dense_scalar_product_agrees_with_named() {
        let dense = MultilinearForm::from_dense(vec![1, 1], 1, &[1.0]).unwrap();
        let named = MultilinearForm::scalar_product();
        assert_eq!(
            dense.apply(&[&[3.0], &[-2.0]]),
            named.apply(&[&[3.0], &[-2.0]])
        );
        assert_eq!(dense.norm_bound(), 1.0);
    }
}
