use diffw::actions::{gl_conjugate, omega, LinearAction};
use diffw::diff_group::{
    compose_chart, grid_residual, invert_chart, is_decaying_diffeo, ChartDiffeo, FP_TOL,
};
use diffw::jets::{MultilinearForm, SmoothMap};
use diffw::mapping_group::{multiply, MappingElement, MatrixGroup};
use diffw::quasi_inverse::{
    quasi_invert, quasi_invert_with_terms, series_terms, AlgebraElement, RESIDUAL_TOL, SERIES_TOL,
};
use diffw::regularity::{evolve, flow_property_residual, TimeField};
use diffw::samples::{random_bump, random_matrix, random_rotation_vector, so3_generator, BumpSpec};
use diffw::weights::{is_decaying, seminorm, SampleDomain, Weight, WeightFamily};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn line() -> SampleDomain {
    SampleDomain::default_for(1)
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(n)
    }
}

fn so3_bump(r: &mut ChaCha8Rng, angle: f64) -> SmoothMap {
    let w = random_rotation_vector(r, angle);
    let c = r.random_range(-1.0..=1.0);
    SmoothMap::gaussian_bump(&[c], r.random_range(0.5..=0.8), &so3_generator(w))
}

/// `f(x + h e_i)` minus `f(x − h e_i)` over `2h`, one Richardson step.
fn fd_gradient(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let d = |h: f64| {
        let (mut p, mut m) = (x.to_vec(), x.to_vec());
        p[i] += h;
        m[i] -= h;
        f(&p)
            .iter()
            .zip(f(&m))
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect::<Vec<f64>>()
    };
    let (c, r) = (d(h), d(h / 2.0));
    c.iter().zip(&r).map(|(c, r)| (4.0 * r - c) / 3.0).collect()
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn seminorm_is_monotone_in_the_weight(seed in any::<u64>(), order in 0usize..=2) {
        let b = random_bump(&mut rng(seed), 1, &BumpSpec::default());
        let small = seminorm(&b, &Weight::NormPower(2), order, &line()).unwrap();
        let large = seminorm(&b, &Weight::PolyShifted(2), order, &line()).unwrap();
        prop_assert!(small <= large);
    }

    #[test]
    fn seminorm_is_homogeneous_and_subadditive(seed in any::<u64>(), c in -3.0f64..3.0, order in 0usize..=1) {
        let mut r = rng(seed);
        let (a, b) = (random_bump(&mut r, 2, &BumpSpec::default()), random_bump(&mut r, 2, &BumpSpec::default()));
        let d = SampleDomain::default_for(2);
        let w = Weight::PolyShifted(1);
        let na = seminorm(&a, &w, order, &d).unwrap();
        let nb = seminorm(&b, &w, order, &d).unwrap();
        let scaled = seminorm(&a.scaled(c), &w, order, &d).unwrap();
        let sum = seminorm(&a.add(&b).unwrap(), &w, order, &d).unwrap();
        prop_assert!((scaled - c.abs() * na).abs() <= 1e-12 * (1.0 + na));
        prop_assert!(sum <= na + nb + 1e-12);
    }

    #[test]
    fn refinement_never_lowers_the_sup(seed in any::<u64>()) {
        let b = random_bump(&mut rng(seed), 1, &BumpSpec::default());
        let d = line();
        for order in 0..=2 {
            let coarse = seminorm(&b, &Weight::NormPower(1), order, &d).unwrap();
            let fine = seminorm(&b, &Weight::NormPower(1), order, &d.refined()).unwrap();
            prop_assert!(fine >= coarse);
        }
    }

    #[test]
    fn sum_of_decaying_maps_decays(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_bump(&mut r, 1, &BumpSpec::narrow()), random_bump(&mut r, 1, &BumpSpec::narrow()));
        let fam = WeightFamily::norm_powers(&[1, 2]);
        prop_assert!(is_decaying(&a, &fam, 2, &line()).unwrap().decaying);
        prop_assert!(is_decaying(&a.add(&b).unwrap(), &fam, 2, &line()).unwrap().decaying);
    }

    #[test]
    fn derivative_order_shifts_down(seed in any::<u64>(), order in 0usize..=1) {
        let b = random_bump(&mut rng(seed), 1, &BumpSpec::default());
        let w = Weight::PolyShifted(2);
        let direct = seminorm(&b, &w, order + 1, &line()).unwrap();
        let lowered = seminorm(&b.derivative(), &w, order, &line()).unwrap();
        prop_assert!((direct - lowered).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn chain_rule_matches_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let outer = random_bump(&mut r, 2, &BumpSpec::default());
        let inner = random_bump(&mut r, 2, &BumpSpec::default()).plus_identity().unwrap();
        let comp = SmoothMap::compose(&outer, &inner).unwrap();
        let x = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let jet = comp.jet(&x, 2).unwrap();
        let f = |p: &[f64]| comp.eval(p).unwrap();
        for i in 0..2 {
            let col = fd_gradient(&f, &x, i, 1e-5);
            let got: Vec<f64> = (0..2).map(|o| jet.derivative(1).get(o, &[i])).collect();
            prop_assert!(close(&got, &col, 1e-5), "{got:?} vs {col:?}");
            let g = |p: &[f64]| fd_gradient(&f, p, i, 1e-5);
            for j in 0..2 {
                let second = fd_gradient(&g, &x, j, 1e-3);
                let got: Vec<f64> = (0..2).map(|o| jet.derivative(2).get(o, &[i, j])).collect();
                prop_assert!(close(&got, &second, 1e-5), "{got:?} vs {second:?}");
            }
        }
    }

    #[test]
    fn bilinear_pairing_with_a_decaying_factor_decays(seed in any::<u64>()) {
        let mut r = rng(seed);
        let decaying = random_bump(&mut r, 1, &BumpSpec::narrow());
        let bounded = SmoothMap::sine_profile(&[1.0], &[r.random_range(0.5..2.0)], 0.0);
        let pair = SmoothMap::superpose(&MultilinearForm::scalar_product(), vec![decaying, bounded]).unwrap();
        prop_assert!(is_decaying(&pair, &WeightFamily::norm_powers(&[1, 2]), 1, &line()).unwrap().decaying);
    }

    #[test]
    fn quasi_inversion_is_an_involution(seed in any::<u64>(), n in 1usize..=6, norm in 0.0f64..=0.45) {
        let a = AlgebraElement::matrix(random_matrix(&mut rng(seed), n, norm)).unwrap();
        let back = quasi_invert(&quasi_invert(&a).unwrap()).unwrap();
        let diff = a.as_matrix().unwrap() - back.as_matrix().unwrap();
        prop_assert!(diff.abs().max() <= 2.0 * RESIDUAL_TOL);
    }

    #[test]
    fn quasi_inversion_is_pointwise(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = r.random_range(-1.0..1.0);
        let m = random_matrix(&mut r, 2, 0.7);
        let entries = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
        let gamma = SmoothMap::gaussian_bump(&[c], 0.8, &entries);
        let element = AlgebraElement::matrix_map(gamma.clone(), 2, line()).unwrap();
        let qi = quasi_invert(&element).unwrap();
        for x in line().points().step_by(10) {
            let at = AlgebraElement::matrix(DMatrix::from_row_slice(2, 2, &gamma.eval(&x).unwrap())).unwrap();
            let want = quasi_invert(&at).unwrap();
            let got = qi.at(&x).unwrap();
            prop_assert!((got - want.as_matrix().unwrap()).abs().max() <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn more_series_terms_barely_move_the_result(x in -0.95f64..0.95) {
        let n = series_terms(x.abs());
        let a = AlgebraElement::scalar(x);
        let base = quasi_invert_with_terms(&a, n).unwrap().as_scalar().unwrap();
        let longer = quasi_invert_with_terms(&a, n + 25).unwrap().as_scalar().unwrap();
        prop_assert!((base - longer).abs() < SERIES_TOL);
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn chart_inverse_law(seed in any::<u64>()) {
        let phi = ChartDiffeo::new(random_bump(&mut rng(seed), 1, &BumpSpec::default())).unwrap();
        prop_assume!(phi.norm_11() <= 0.8);
        let inv = invert_chart(&phi).unwrap();
        let zero = SmoothMap::zero(1, 1);
        let d = line();
        prop_assert!(grid_residual(compose_chart(&phi, &inv).unwrap().phi(), &zero, &d).unwrap().0 < 1e-8);
        prop_assert!(grid_residual(compose_chart(&inv, &phi).unwrap().phi(), &zero, &d).unwrap().0 < 1e-8);
    }

    #[test]
    fn double_inverse_returns_the_chart(seed in any::<u64>()) {
        let spec = BumpSpec { norm_11: (0.1, 0.45), ..BumpSpec::default() };
        let phi = ChartDiffeo::new(random_bump(&mut rng(seed), 1, &spec)).unwrap();
        let inv = invert_chart(&phi).unwrap();
        prop_assume!(inv.in_u_w());
        let back = invert_chart(&inv).unwrap();
        prop_assert!(grid_residual(back.phi(), phi.phi(), &line()).unwrap().0 <= 2.0 * FP_TOL);
    }

    #[test]
    fn evolution_splits_at_interior_times(seed in any::<u64>(), s in prop::sample::select(vec![0.25, 0.5])) {
        let mut r = rng(seed);
        let b = random_bump(&mut r, 1, &BumpSpec { norm_11: (0.2, 0.6), ..BumpSpec::default() });
        let p = TimeField::modulated(vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)], b).unwrap();
        prop_assert!(flow_property_residual(&p, 200, s).unwrap() < 1e-7);
    }

    #[test]
    fn small_fields_stay_in_the_contraction_region(seed in any::<u64>()) {
        let b = random_bump(&mut rng(seed), 1, &BumpSpec { norm_11: (0.05, 0.3), ..BumpSpec::default() });
        let curve = evolve(&TimeField::constant(b).unwrap(), 40).unwrap();
        for t in curve.knots().into_iter().step_by(10) {
            prop_assert!(curve.chart_at(t).unwrap().in_u_w());
        }
    }

    #[test]
    fn pointwise_products_associate(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = WeightFamily::norm_powers(&[1]);
        let el = |xi| MappingElement::new(MatrixGroup::So3, xi, fam.clone(), 1, line()).unwrap();
        let (a, b, c) = (el(so3_bump(&mut r, 0.15)), el(so3_bump(&mut r, 0.15)), el(so3_bump(&mut r, 0.15)));
        let left = multiply(&multiply(&a, &b).unwrap(), &c).unwrap();
        let right = multiply(&a, &multiply(&b, &c).unwrap()).unwrap();
        prop_assert!(grid_residual(left.xi(), right.xi(), &line()).unwrap().0 < 1e-10);
    }

    #[test]
    fn precomposition_is_a_homomorphism(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = WeightFamily::norm_powers(&[1]);
        let el = |xi| MappingElement::new(MatrixGroup::So3, xi, fam.clone(), 1, line()).unwrap();
        let (a, b) = (el(so3_bump(&mut r, 0.2)), el(so3_bump(&mut r, 0.2)));
        let phi = ChartDiffeo::new(random_bump(&mut r, 1, &BumpSpec::default())).unwrap();
        let lhs = omega(&phi, &multiply(&a, &b).unwrap()).unwrap();
        let rhs = multiply(&omega(&phi, &a).unwrap(), &omega(&phi, &b).unwrap()).unwrap();
        prop_assert!(grid_residual(lhs.xi(), rhs.xi(), &line()).unwrap().0 < 1e-10);
    }

    #[test]
    fn conjugation_preserves_decay(seed in any::<u64>(), t in 0.5f64..1.25) {
        let fam = WeightFamily::norm_powers(&[1, 2]);
        let phi = ChartDiffeo::new(random_bump(&mut rng(seed), 1, &BumpSpec { center: 0.5, ..BumpSpec::narrow() })).unwrap();
        prop_assume!(is_decaying_diffeo(&phi, &fam).unwrap());
        let conj = gl_conjugate(&LinearAction::new(DMatrix::from_element(1, 1, t)).unwrap(), &phi).unwrap();
        prop_assert!(is_decaying_diffeo(&conj, &fam).unwrap());
    }
}
