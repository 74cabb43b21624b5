//! Multilinear tensors in a flat, output-major layout, and jets built from them.
//!
//! A tensor of order `ℓ` with `dim_out = m` and `dim_in = n` stores its
//! coefficients as `data[o * n^ℓ + flat(i_1, ..., i_ℓ)]`, where `flat` is the
//! big-endian mixed-radix index (`i_1` most significant). Reading the leading
//! input slot as part of the output index turns `D^{ℓ+1}γ` into `D^ℓ(Dγ)`
//! without moving any data.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tuples sampled by [`MultilinearTensor::opnorm_estimate`] for orders ≥ 2.
pub const OPNORM_SAMPLES: usize = 256;
const OPNORM_REFINE_STARTS: usize = 4;
const OPNORM_REFINE_ITERS: usize = 40;
const OPNORM_SEED: u64 = 0x6a65_745f_6e6f_726d;

/// An `ℓ`-linear map `(ℝⁿ)^ℓ → ℝᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearTensor {
    order: usize,
    dim_out: usize,
    dim_in: usize,
    data: Vec<f64>,
}

/// Operator-norm estimate. `exact` is false when the value is a sampled lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpNorm {
    pub value: f64,
    pub exact: bool,
}

impl MultilinearTensor {
    pub fn zeros(order: usize, dim_out: usize, dim_in: usize) -> Self {
        let len = dim_out * dim_in.pow(order as u32);
        Self {
            order,
            dim_out,
            dim_in,
            data: vec![0.0; len],
        }
    }

    /// Panics if `data` does not have `dim_out * dim_in^order` entries.
    pub fn from_data(order: usize, dim_out: usize, dim_in: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            dim_out * dim_in.pow(order as u32),
            "tensor data length does not match its shape"
        );
        Self {
            order,
            dim_out,
            dim_in,
            data,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of input multi-indices, `n^ℓ`.
    pub fn slot_count(&self) -> usize {
        self.dim_in.pow(self.order as u32)
    }

    /// Reinterprets the tensor with a different output/order split over the same data.
    pub(crate) fn reshaped(self, order: usize, dim_out: usize) -> Self {
        Self::from_data(order, dim_out, self.dim_in, self.data)
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim_in + i)
    }

    pub fn get(&self, out: usize, idx: &[usize]) -> f64 {
        self.data[out * self.slot_count() + self.flat(idx)]
    }

    pub fn set(&mut self, out: usize, idx: &[usize], value: f64) {
        let k = out * self.slot_count() + self.flat(idx);
        self.data[k] = value;
    }

    /// Decodes a flat input index into its multi-index.
    pub fn multi_index(&self, mut flat: usize, idx: &mut [usize]) {
        for slot in (0..self.order).rev() {
            idx[slot] = flat % self.dim_in;
            flat /= self.dim_in;
        }
    }

    /// Evaluates `T(u_1, ..., u_ℓ)`.
    pub fn apply(&self, args: &[&[f64]]) -> Vec<f64> {
        assert_eq!(args.len(), self.order);
        let slots = self.slot_count();
        let mut idx = vec![0; self.order];
        let mut weights = vec![0.0; slots];
        for (flat, w) in weights.iter_mut().enumerate() {
            self.multi_index(flat, &mut idx);
            *w = idx.iter().zip(args).map(|(&i, u)| u[i]).product();
        }
        (0..self.dim_out)
            .map(|o| {
                let row = &self.data[o * slots..(o + 1) * slots];
                row.iter().zip(&weights).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `x ↦ ∇_{u_slot} ⟨w, T(u_1, ..., u_ℓ)⟩`.
    fn slot_gradient(&self, w: &[f64], args: &[Vec<f64>], slot: usize) -> Vec<f64> {
        let slots = self.slot_count();
        let mut grad = vec![0.0; self.dim_in];
        let mut idx = vec![0; self.order];
        for flat in 0..slots {
            self.multi_index(flat, &mut idx);
            let coeff: f64 = (0..self.dim_out)
                .map(|o| w[o] * self.data[o * slots + flat])
                .sum();
            if coeff == 0.0 {
                continue;
            }
            let others: f64 = idx
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != slot)
                .map(|(s, &i)| args[s][i])
                .product();
            grad[idx[slot]] += coeff * others;
        }
        grad
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += c * b);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest difference between coefficients related by swapping two adjacent slots.
    pub fn symmetry_defect(&self) -> f64 {
        if self.order < 2 {
            return 0.0;
        }
        let slots = self.slot_count();
        let mut idx = vec![0; self.order];
        let mut defect: f64 = 0.0;
        for o in 0..self.dim_out {
            for flat in 0..slots {
                self.multi_index(flat, &mut idx);
                for s in 0..self.order - 1 {
                    let mut swapped = idx.clone();
                    swapped.swap(s, s + 1);
                    let a = self.data[o * slots + flat];
                    let b = self.get(o, &swapped);
                    defect = defect.max((a - b).abs());
                }
            }
        }
        defect
    }

    /// Operator norm with respect to Euclidean norms on inputs and output.
    ///
    /// Orders 0 and 1, one-dimensional inputs, and scalar bilinear forms are
    /// computed exactly. Everything else is a lower bound from random unit
    /// tuples refined by alternating power iteration.
    pub fn opnorm_estimate(&self) -> OpNorm {
        let exact = |value| OpNorm { value, exact: true };
        if self.data.iter().all(|&v| v == 0.0) {
            return exact(0.0);
        }
        if self.order == 0 || self.dim_in == 1 {
            // with n = 1 every unit tuple is a sign pattern
            return exact(self.data.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        if self.order == 1 {
            return exact(spectral_norm(self.dim_out, self.dim_in, &self.data));
        }
        if self.order == 2 && self.dim_out == 1 {
            return exact(spectral_norm(self.dim_in, self.dim_in, &self.data));
        }
        OpNorm {
            value: self.sampled_opnorm(),
            exact: false,
        }
    }

    fn sampled_opnorm(&self) -> f64 {
        let n = self.dim_in;
        let mut rng = ChaCha8Rng::seed_from_u64(
            OPNORM_SEED ^ ((self.order as u64) << 32) ^ ((self.dim_out as u64) << 16) ^ n as u64,
        );
        let mut candidates: Vec<(f64, Vec<Vec<f64>>)> = Vec::with_capacity(OPNORM_SAMPLES + n);
        // axis-aligned diagonal tuples catch the common sparse cases
        for axis in 0..n {
            let e: Vec<f64> = (0..n).map(|i| if i == axis { 1.0 } else { 0.0 }).collect();
            let args = vec![e; self.order];
            candidates.push((self.value_norm(&args), args));
        }
        for _ in 0..OPNORM_SAMPLES {
            let args: Vec<Vec<f64>> = (0..self.order).map(|_| random_unit(&mut rng, n)).collect();
            candidates.push((self.value_norm(&args), args));
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = candidates[0].0;
        for (start_value, mut args) in candidates.into_iter().take(OPNORM_REFINE_STARTS) {
            let mut value = start_value;
            for _ in 0..OPNORM_REFINE_ITERS {
                let out = self.apply_owned(&args);
                let norm = euclid(&out);
                if norm == 0.0 {
                    break;
                }
                let w: Vec<f64> = out.iter().map(|v| v / norm).collect();
                for slot in 0..self.order {
                    let g = self.slot_gradient(&w, &args, slot);
                    let gn = euclid(&g);
                    if gn > 0.0 {
                        args[slot] = g.iter().map(|v| v / gn).collect();
                    }
                }
                let next = self.value_norm(&args);
                let done = next - value <= 1e-15 * next.max(1.0);
                value = value.max(next);
                if done {
                    break;
                }
            }
            best = best.max(value);
        }
        best
    }

    fn apply_owned(&self, args: &[Vec<f64>]) -> Vec<f64> {
        let refs: Vec<&[f64]> = args.iter().map(Vec::as_slice).collect();
        self.apply(&refs)
    }

    fn value_norm(&self, args: &[Vec<f64>]) -> f64 {
        euclid(&self.apply_owned(args))
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = euclid(&v);
        if norm > 1e-3 && norm <= 1.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value of a row-major `rows × cols` matrix.
pub fn spectral_norm(rows: usize, cols: usize, data: &[f64]) -> f64 {
    DMatrix::from_row_slice(rows, cols, data)
        .singular_values()
        .iter()
        .fold(0.0, |m: f64, &s| m.max(s))
}

/// Value and derivative tensors of a map at one point, orders `0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    tensors: Vec<MultilinearTensor>,
}

impl Jet {
    pub fn zeros(order: usize, dim_out: usize, dim_in: usize) -> Self {
        Self {
            tensors: (0..=order)
                .map(|k| MultilinearTensor::zeros(k, dim_out, dim_in))
                .collect(),
        }
    }

    pub fn from_tensors(tensors: Vec<MultilinearTensor>) -> Self {
        assert!(!tensors.is_empty(), "a jet carries at least its value");
        for (k, t) in tensors.iter().enumerate() {
            assert_eq!(t.order(), k, "jet tensors must be ordered by degree");
        }
        Self { tensors }
    }

    pub fn order(&self) -> usize {
        self.tensors.len() - 1
    }

    pub fn dim_out(&self) -> usize {
        self.tensors[0].dim_out()
    }

    pub fn dim_in(&self) -> usize {
        self.tensors[0].dim_in()
    }

    pub fn value(&self) -> &[f64] {
        self.tensors[0].data()
    }

    pub fn derivative(&self, k: usize) -> &MultilinearTensor {
        &self.tensors[k]
    }

    pub fn derivative_mut(&mut self, k: usize) -> &mut MultilinearTensor {
        &mut self.tensors[k]
    }

    pub fn tensors(&self) -> &[MultilinearTensor] {
        &self.tensors
    }

    pub fn into_tensors(self) -> Vec<MultilinearTensor> {
        self.tensors
    }

    pub fn truncated(mut self, order: usize) -> Self {
        self.tensors.truncate(order + 1);
        self
    }

    pub fn add_scaled(&mut self, c: f64, other: &Jet) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(c, b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(c));
    }

    /// First derivative as a row-major `dim_out × dim_in` matrix.
    pub fn jacobian(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim_out(), self.dim_in(), self.tensors[1].data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tensor_has_zero_norm() {
        for order in 0..=3 {
            let t = MultilinearTensor::zeros(order, 2, 3);
            assert_eq!(t.opnorm_estimate().value, 0.0);
        }
    }

    #[test]
    fn identity_has_unit_norm() {
        for n in 1..=3 {
            let mut t = MultilinearTensor::zeros(1, n, n);
            for i in 0..n {
                t.set(i, &[i], 1.0);
            }
            let norm = t.opnorm_estimate();
            assert!((norm.value - 1.0).abs() < 1e-14);
            assert!(norm.exact);
        }
    }

    /// T(u, v) = ⟨u, v⟩ on ℝ², checked against an exhaustive scan of unit-circle pairs.
    #[test]
    fn inner_product_form_norm_matches_circle_scan() {
        let t = MultilinearTensor::from_data(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let steps = 720;
        let mut oracle: f64 = 0.0;
        for a in 0..steps {
            let ta = a as f64 * std::f64::consts::TAU / steps as f64;
            for b in 0..steps {
                let tb = b as f64 * std::f64::consts::TAU / steps as f64;
                let v = ta.cos() * tb.cos() + ta.sin() * tb.sin();
                oracle = oracle.max(v.abs());
            }
        }
        assert!((oracle - 1.0).abs() < 1e-12);
        assert!((t.opnorm_estimate().value - oracle).abs() < 1e-12);
    }

    #[test]
    fn vector_valued_bilinear_estimate_is_tight_on_known_case() {
        // T(u, v) = (u₀v₀, u₁v₁, 0): norm 1, attained on the axes
        let mut t = MultilinearTensor::zeros(2, 3, 2);
        t.set(0, &[0, 0], 1.0);
        t.set(1, &[1, 1], 1.0);
        let est = t.opnorm_estimate();
        assert!(!est.exact);
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_estimate_never_exceeds_triangle_bound() {
        let data: Vec<f64> = (0..3 * 8)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let t = MultilinearTensor::from_data(3, 3, 2, data.clone());
        let frob = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let est = t.opnorm_estimate().value;
        assert!(est <= frob + 1e-12);
        assert!(est > 0.0);
    }

    #[test]
    fn apply_matches_manual_contraction() {
        let t = MultilinearTensor::from_data(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let v = t.apply(&[&[1.0, -1.0], &[0.5, 2.0]]);
        // Σ T_ij u_i v_j
        let expect = 1.0 * 0.5 + 2.0 * 2.0 - 3.0 * 0.5 - 4.0 * 2.0;
        assert!((v[0] - expect).abs() < 1e-15);
    }
}
