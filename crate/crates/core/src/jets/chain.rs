//! Chain rule for jets up to order 3 (Faà di Bruno, written out).

use super::tensor::{Jet, MultilinearTensor};

/// Highest order the chain rule is written out for.
pub const CHAIN_ORDER: usize = 3;

/// Jet of `g ∘ h` at `x`, given the jet of `h` at `x` and the jet of `g` at `h(x)`.
///
/// The result has order `min(outer.order(), inner.order(), CHAIN_ORDER)`.
pub fn compose_jets(outer: &Jet, inner: &Jet) -> Jet {
    assert_eq!(
        outer.dim_in(),
        inner.dim_out(),
        "outer map must take the inner map's output"
    );
    let order = outer.order().min(inner.order()).min(CHAIN_ORDER);
    let m = outer.dim_out();
    let p = inner.dim_out();
    let n = inner.dim_in();

    let mut tensors = Vec::with_capacity(order + 1);
    tensors.push(MultilinearTensor::from_data(
        0,
        m,
        n,
        outer.value().to_vec(),
    ));
    if order == 0 {
        return Jet::from_tensors(tensors);
    }

    let g1 = outer.derivative(1).data();
    let h1 = inner.derivative(1).data();
    let g1_at = |o: usize, a: usize| g1[o * p + a];
    let h1_at = |a: usize, i: usize| h1[a * n + i];

    let mut d1 = MultilinearTensor::zeros(1, m, n);
    for o in 0..m {
        for i in 0..n {
            let v: f64 = (0..p).map(|a| g1_at(o, a) * h1_at(a, i)).sum();
            d1.data_mut()[o * n + i] = v;
        }
    }
    tensors.push(d1);
    if order == 1 {
        return Jet::from_tensors(tensors);
    }

    let g2 = outer.derivative(2).data();
    let h2 = inner.derivative(2).data();
    let g2_at = |o: usize, a: usize, b: usize| g2[(o * p + a) * p + b];
    let h2_at = |a: usize, i: usize, j: usize| h2[(a * n + i) * n + j];

    // G2 pulled back through h1 in its second slot: u[o][a][j] = Σ_b G2[o][a][b] h1[b][j]
    let mut g2_h1 = vec![0.0; m * p * n];
    for o in 0..m {
        for a in 0..p {
            for j in 0..n {
                g2_h1[(o * p + a) * n + j] = (0..p).map(|b| g2_at(o, a, b) * h1_at(b, j)).sum();
            }
        }
    }
    let g2_h1_at = |o: usize, a: usize, j: usize| g2_h1[(o * p + a) * n + j];

    let mut d2 = MultilinearTensor::zeros(2, m, n);
    for o in 0..m {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for a in 0..p {
                    v += g2_h1_at(o, a, j) * h1_at(a, i) + g1_at(o, a) * h2_at(a, i, j);
                }
                d2.data_mut()[(o * n + i) * n + j] = v;
            }
        }
    }
    tensors.push(d2);
    if order == 2 {
        return Jet::from_tensors(tensors);
    }

    let g3 = outer.derivative(3).data();
    let h3 = inner.derivative(3).data();
    let g3_at = |o: usize, a: usize, b: usize, c: usize| g3[((o * p + a) * p + b) * p + c];
    let h3_at = |a: usize, i: usize, j: usize, k: usize| h3[((a * n + i) * n + j) * n + k];

    // G3 pulled back in its last two slots: w[o][a][j][k]
    let mut g3_hh = vec![0.0; m * p * n * n];
    for o in 0..m {
        for a in 0..p {
            for j in 0..n {
                for k in 0..n {
                    let mut v = 0.0;
                    for b in 0..p {
                        let hb = h1_at(b, j);
                        if hb == 0.0 {
                            continue;
                        }
                        for c in 0..p {
                            v += g3_at(o, a, b, c) * hb * h1_at(c, k);
                        }
                    }
                    g3_hh[((o * p + a) * n + j) * n + k] = v;
                }
            }
        }
    }

    let mut d3 = MultilinearTensor::zeros(3, m, n);
    for o in 0..m {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut v = 0.0;
                    for a in 0..p {
                        v += g3_hh[((o * p + a) * n + j) * n + k] * h1_at(a, i);
                        v +=
                            h2_at(a, i, j) * g2_h1_at(o, a, k) + h2_at(a, i, k) * g2_h1_at(o, a, j);
                        v += g1_at(o, a) * h3_at(a, i, j, k);
                        // G2[h1 e_i, h2[e_j, e_k]]
                        for b in 0..p {
                            v += g2_at(o, a, b) * h1_at(a, i) * h2_at(b, j, k);
                        }
                    }
                    d3.data_mut()[((o * n + i) * n + j) * n + k] = v;
                }
            }
        }
    }
    tensors.push(d3);
    Jet::from_tensors(tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_jet(vals: &[f64]) -> Jet {
        Jet::from_tensors(
            vals.iter()
                .enumerate()
                .map(|(k, &v)| MultilinearTensor::from_data(k, 1, 1, vec![v]))
                .collect(),
        )
    }

    /// exp(sin x) at x = 0.3: derivatives from the closed forms.
    #[test]
    fn scalar_chain_matches_closed_form() {
        let x: f64 = 0.3;
        let (s, c) = x.sin_cos();
        let inner = scalar_jet(&[s, c, -s, -c]);
        let e = s.exp();
        let outer = scalar_jet(&[e, e, e, e]);
        let jet = compose_jets(&outer, &inner);
        let d1 = e * c;
        let d2 = e * (c * c - s);
        let d3 = e * (c * c * c - 3.0 * s * c - c);
        assert!((jet.value()[0] - e).abs() < 1e-15);
        assert!((jet.derivative(1).data()[0] - d1).abs() < 1e-14);
        assert!((jet.derivative(2).data()[0] - d2).abs() < 1e-14);
        assert!((jet.derivative(3).data()[0] - d3).abs() < 1e-14);
    }

    #[test]
    fn order_is_limited_by_the_shorter_jet() {
        let inner = scalar_jet(&[0.0, 1.0]);
        let outer = scalar_jet(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(compose_jets(&outer, &inner).order(), 1);
    }
}
