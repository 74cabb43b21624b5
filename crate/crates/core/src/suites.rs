//! Batch verification suites. Each suite returns check records sorted by
//! name; a record passes when its residual is at most its tolerance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{
    self, bc_counterexample, conjugation_law_residual, gl_conjugate, multiplier_check,
    schwartz_action_bound_check, semidirect_invert, semidirect_multiply, semidirect_residual,
    sine_rescaling_gap, LinearAction, PerturbationNorm, SchwartzParams, SemidirectElement,
};
use crate::diff_group::{
    compose_chart, compose_map, composition_lipschitz_check, d_compose, d_inverse_at, d_invert,
    grid_residual, inverse_fixed_point, inversion_bound_check, invert_chart, is_decaying_diffeo,
    shifted_map, tangent_multiply, verify_group_axioms, ChartDiffeo, TangentElement, U_W_MARGIN,
};
use crate::error::{Error, Result};
use crate::jets::SmoothMap;
use crate::linalg::{expm, op_norm};
use crate::mapping_group::{
    self, evolution_knots, evolve_mapping, group_exponential, is_member,
    left_log_derivative_residual, AlgebraField, MappingElement, MatrixGroup,
};
use crate::quasi_inverse::{
    check_quasi_identity, quasi_invert, quasi_invert_matrix, AlgebraElement, RESIDUAL_TOL,
};
use crate::regularity::{aux_derivative_check, evolve_on, flow_property_residual, TimeField};
use crate::samples::{random_bump, random_matrix, random_rotation_vector, so3_generator, BumpSpec};
use crate::weights::{bcr_check, is_decaying, seminorm, SampleDomain, Weight, WeightFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Seminorms,
    GroupAxioms,
    Inversion,
    Regularity,
    Mapping,
    Actions,
    Counterexample,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 8] = [
        "seminorms",
        "group-axioms",
        "inversion",
        "regularity",
        "mapping",
        "actions",
        "counterexample",
        "all",
    ];

    fn members() -> [Suite; 7] {
        [
            Suite::Seminorms,
            Suite::GroupAxioms,
            Suite::Inversion,
            Suite::Regularity,
            Suite::Mapping,
            Suite::Actions,
            Suite::Counterexample,
        ]
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Suite::Seminorms,
            Suite::GroupAxioms,
            Suite::Inversion,
            Suite::Regularity,
            Suite::Mapping,
            Suite::Actions,
            Suite::Counterexample,
            Suite::All,
        ];
        Suite::NAMES
            .iter()
            .zip(all)
            .find(|(name, _)| **name == s)
            .map(|(_, suite)| suite)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown suite '{s}' (expected one of: {})",
                    Suite::NAMES.join(", ")
                ))
            })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = [
            Suite::Seminorms,
            Suite::GroupAxioms,
            Suite::Inversion,
            Suite::Regularity,
            Suite::Mapping,
            Suite::Actions,
            Suite::Counterexample,
            Suite::All,
        ]
        .iter()
        .position(|s| s == self)
        .expect("every suite is listed");
        f.write_str(Suite::NAMES[i])
    }
}

/// Overrides for the sample grid; unset fields keep the defaults for the dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainOverride {
    pub box_halfwidth: Option<f64>,
    pub points_per_axis: Option<usize>,
    pub tail_radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub dim: usize,
    pub seed: u64,
    /// Replaces every check's tolerance when set.
    pub tol: Option<f64>,
    pub domain: DomainOverride,
}

impl SuiteConfig {
    pub fn new(suite: Suite) -> Self {
        Self {
            suite,
            dim: 1,
            seed: 0,
            tol: None,
            domain: DomainOverride::default(),
        }
    }

    pub fn sample_domain(&self) -> Result<SampleDomain> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Config(format!(
                "dimension must be 1, 2 or 3 (got {})",
                self.dim
            )));
        }
        let base = SampleDomain::default_for(self.dim);
        let d = &self.domain;
        SampleDomain::new(
            d.box_halfwidth.unwrap_or(base.box_halfwidth),
            d.points_per_axis.unwrap_or(base.points_per_axis),
            self.dim,
            d.tail_radii.clone().unwrap_or(base.tail_radii),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub paper_anchor: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// The measured quantity, when it differs from the residual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Error message when the check could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn new(name: &str, anchor: &str, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            paper_anchor: anchor.to_string(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            value: None,
            note: None,
        }
    }

    fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }

    fn verdict(name: &str, anchor: &str, ok: bool) -> Self {
        Self::new(name, anchor, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    fn failed(name: &str, anchor: &str, err: &Error) -> Self {
        Self {
            note: Some(err.to_string()),
            ..Self::new(name, anchor, f64::MAX, 0.0)
        }
    }
}

/// Outcome of one suite run.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub checks: Vec<CheckRecord>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The report as a pretty-printed JSON array.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.checks).expect("check records serialize")
    }
}

struct Ctx {
    dim: usize,
    seed: u64,
    domain: SampleDomain,
    out: Vec<CheckRecord>,
}

impl Ctx {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn check<F>(&mut self, name: &str, anchor: &str, f: F)
    where
        F: FnOnce(&Ctx) -> Result<CheckRecord>,
    {
        let rec = match f(self) {
            Ok(mut r) => {
                r.name = name.to_string();
                r.paper_anchor = anchor.to_string();
                r
            }
            Err(e) => CheckRecord::failed(name, anchor, &e),
        };
        self.out.push(rec);
    }

    fn chart(&self, map: SmoothMap) -> Result<ChartDiffeo> {
        ChartDiffeo::with_domain(map, self.domain.clone())
    }
}

fn res(residual: f64, tolerance: f64) -> Result<CheckRecord> {
    Ok(CheckRecord::new("", "", residual, tolerance))
}

fn ok(flag: bool) -> Result<CheckRecord> {
    Ok(CheckRecord::verdict("", "", flag))
}

pub fn run(config: &SuiteConfig) -> Result<SuiteReport> {
    let mut ctx = Ctx {
        dim: config.dim,
        seed: config.seed,
        domain: config.sample_domain()?,
        out: Vec::new(),
    };
    let suites: Vec<Suite> = match config.suite {
        Suite::All => Suite::members().to_vec(),
        s => vec![s],
    };
    for s in suites {
        match s {
            Suite::Seminorms => seminorms(&mut ctx),
            Suite::GroupAxioms => group_axioms(&mut ctx),
            Suite::Inversion => inversion(&mut ctx),
            Suite::Regularity => regularity(&mut ctx),
            Suite::Mapping => mapping(&mut ctx),
            Suite::Actions => actions_suite(&mut ctx),
            Suite::Counterexample => counterexample(&mut ctx),
            Suite::All => unreachable!("expanded above"),
        }
    }
    let mut checks = ctx.out;
    if let Some(tol) = config.tol {
        for c in checks.iter_mut().filter(|c| c.note.is_none()) {
            c.tolerance = tol;
            c.pass = c.residual <= tol;
        }
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(SuiteReport { checks })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Relative error with denominators floored at `REL_FLOOR`.
pub const REL_FLOOR: f64 = 1e-3;

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    diff_norm(got, want) / norm(want).max(REL_FLOOR)
}

/// Derivative at `t = 0` by central differences with one Richardson step.
pub fn fd_in_t<F>(f: F, h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let central = |h: f64| -> Result<Vec<f64>> {
        let (p, m) = (f(h)?, f(-h)?);
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    };
    let (coarse, fine) = (central(h)?, central(h / 2.0)?);
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect())
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..=r)).collect()
}

const FD_STEP: f64 = 1e-4;
const FORMULA_TOL: f64 = 1e-4;

fn seminorms(ctx: &mut Ctx) {
    let line = SampleDomain::new(8.0, 160_001, 1, vec![2.0, 4.0, 6.0, 7.0]).expect("valid");
    let gauss = SmoothMap::gaussian_bump(&[0.0], std::f64::consts::FRAC_1_SQRT_2, &[1.0]);
    ctx.check(
        "seminorms.identity_order1",
        "unit first-order seminorm of the identity",
        |c| {
            res(
                (seminorm(
                    &SmoothMap::identity(c.dim),
                    &Weight::ConstantOne,
                    1,
                    &c.domain,
                )? - 1.0)
                    .abs(),
                1e-12,
            )
        },
    );
    ctx.check(
        "seminorms.zero_map",
        "zero map has vanishing seminorms",
        |c| {
            let z = SmoothMap::zero(c.dim, c.dim);
            let worst = (0..=3)
                .map(|l| seminorm(&z, &Weight::NormPower(3), l, &c.domain))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            res(worst, 0.0)
        },
    );
    ctx.check(
        "seminorms.linear_spectral_norm",
        "first-order seminorm of a linear map",
        |c| {
            let a = random_matrix(&mut c.rng(1), c.dim, 1.7);
            let exact = a.singular_values().max();
            res(
                (seminorm(&SmoothMap::linear(&a), &Weight::ConstantOne, 1, &c.domain)? - exact)
                    .abs(),
                1e-12,
            )
        },
    );
    ctx.check("seminorms.gaussian_order0", "sup of exp(-x^2)", |_| {
        res(
            (seminorm(&gauss, &Weight::ConstantOne, 0, &line)? - 1.0).abs(),
            1e-9,
        )
    });
    ctx.check(
        "seminorms.gaussian_order1",
        "sup of |d/dx exp(-x^2)| = sqrt(2/e)",
        |_| {
            let want = (2.0 / std::f64::consts::E).sqrt();
            res(
                (seminorm(&gauss, &Weight::ConstantOne, 1, &line)? - want).abs(),
                1e-6,
            )
        },
    );
    ctx.check(
        "seminorms.gaussian_decays",
        "Gaussian bump lies in the decaying subspace",
        |c| {
            let g = SmoothMap::gaussian_bump(&vec![0.0; c.dim], 0.7, &[1.0]);
            ok(is_decaying(&g, &WeightFamily::norm_powers(&[2, 4]), 2, &c.domain)?.decaying)
        },
    );
    ctx.check(
        "seminorms.sine_does_not_decay",
        "bounded sine profile does not decay",
        |c| {
            let s = SmoothMap::sine_profile(&[1.0], &vec![1.0; c.dim], 0.3);
            ok(!is_decaying(&s, &WeightFamily::trivial(), 0, &c.domain)?.decaying)
        },
    );
    ctx.check(
        "seminorms.bcr_trivial_family",
        "weight conditions for the family {1}",
        |c| {
            let r = bcr_check(&WeightFamily::trivial(), &c.domain);
            ok(r.w1 && r.w2 && !r.w3)
        },
    );
    ctx.check(
        "seminorms.bcr_polynomial_witnesses",
        "tail domination by the next polynomial degree",
        |c| {
            let r = bcr_check(&WeightFamily::shifted_polynomials(3), &c.domain);
            ok(r.w2 && r.w3_witnesses == vec![Some(1), Some(2), Some(3), None])
        },
    );
    ctx.check(
        "seminorms.bcr_single_weight",
        "a single polynomial weight has no tail dominator",
        |c| {
            let r = bcr_check(&WeightFamily::new(vec![Weight::PolyShifted(3)]), &c.domain);
            ok(!r.w3)
        },
    );
}

fn group_axioms(ctx: &mut Ctx) {
    let count = if ctx.dim <= 2 { 20 } else { 6 };
    let sample: Result<Vec<ChartDiffeo>> = {
        let mut rng = ctx.rng(2);
        (0..count)
            .map(|_| ctx.chart(random_bump(&mut rng, ctx.dim, &BumpSpec::default())))
            .collect()
    };
    let sample = match sample {
        Ok(s) => s,
        Err(e) => {
            ctx.out.push(CheckRecord::failed(
                "group_axioms.sample",
                "random bump sample",
                &e,
            ));
            return;
        }
    };
    ctx.check(
        "group_axioms.samples_in_contraction_region",
        "sample lies in the contraction region",
        |_| {
            let worst = sample.iter().map(ChartDiffeo::norm_11).fold(0.0, f64::max);
            res((worst - (1.0 - U_W_MARGIN)).max(0.0), 0.0).map(|r| r.with_value(worst))
        },
    );
    ctx.check(
        "group_axioms.decaying_closure",
        "decaying subgroup is closed under products and inverses",
        |c| {
            let fam = WeightFamily::norm_powers(&[1, 2]);
            let mut rng = c.rng(31);
            let spec = BumpSpec {
                norm_11: (0.1, 0.3),
                ..BumpSpec::narrow()
            };
            let narrow: Vec<ChartDiffeo> = (0..4)
                .map(|_| c.chart(random_bump(&mut rng, c.dim, &spec)))
                .collect::<Result<_>>()?;
            let mut failures = 0;
            for (i, a) in narrow.iter().enumerate() {
                let b = &narrow[(i + 1) % narrow.len()];
                for d in [a.clone(), compose_chart(a, b)?, invert_chart(a)?] {
                    failures += usize::from(!is_decaying_diffeo(&d, &fam)?);
                }
            }
            res(failures as f64, 0.0)
        },
    );
    match verify_group_axioms(&sample, 1e-8) {
        Ok(report) => {
            for r in report.records {
                let name = format!("group_axioms.{}", r.axiom);
                ctx.out.push(CheckRecord::new(
                    &name,
                    "group laws in the global chart",
                    r.residual,
                    1e-8,
                ));
            }
        }
        Err(e) => ctx.out.push(CheckRecord::failed(
            "group_axioms.laws",
            "group laws in the global chart",
            &e,
        )),
    }
}

fn inversion(ctx: &mut Ctx) {
    ctx.check(
        "inversion.qi_matrix_oracle",
        "Neumann quasi-inverse against (A - I)^-1 + I",
        |c| {
            let mut rng = c.rng(3);
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let n = rng.random_range(1..=8);
                let norm = rng.random_range(0.0..=0.9);
                let a = random_matrix(&mut rng, n, norm);
                let qi = quasi_invert_matrix(&a)?;
                let id = DMatrix::identity(n, n);
                let bridge = (&a - &id)
                    .try_inverse()
                    .ok_or(Error::LocalNormTooLarge { norm: 1.0 })?
                    + id;
                worst = worst.max((qi - bridge).abs().max());
            }
            res(worst, 1e-10)
        },
    );
    ctx.check(
        "inversion.qi_scalar_half",
        "quasi-inverse of 1/2 is -1",
        |_| {
            let y = quasi_invert(&AlgebraElement::scalar(0.5))?;
            res(
                (y.as_scalar().unwrap_or(f64::NAN) + 1.0).abs(),
                RESIDUAL_TOL,
            )
        },
    );
    ctx.check(
        "inversion.qi_identity_residual",
        "x + y - xy = 0 for the computed quasi-inverse",
        |c| {
            let mut rng = c.rng(4);
            let a = AlgebraElement::matrix(random_matrix(&mut rng, 4, 0.8))?;
            res(check_quasi_identity(&a, &quasi_invert(&a)?)?, 1e-10)
        },
    );
    ctx.check(
        "inversion.qi_involution",
        "quasi-inversion is an involution",
        |c| {
            let mut rng = c.rng(5);
            let a = AlgebraElement::matrix(random_matrix(&mut rng, 3, 0.45))?;
            let twice = quasi_invert(&quasi_invert(&a)?)?;
            let (x, y) = (
                a.as_matrix().expect("matrix"),
                twice.as_matrix().expect("matrix"),
            );
            res(op_norm(&(x - y)), 2e-10)
        },
    );
    ctx.check(
        "inversion.linear_chart_inverse",
        "inverse of a linear chart coordinate",
        |c| {
            let a = random_matrix(&mut c.rng(6), c.dim, 0.5);
            let phi = c.chart(SmoothMap::linear(&a))?;
            let id = DMatrix::identity(c.dim, c.dim);
            let exact = SmoothMap::linear(&((&id + &a).try_inverse().expect("invertible") - id));
            res(
                grid_residual(invert_chart(&phi)?.phi(), &exact, &c.domain)?.0,
                1e-10,
            )
        },
    );
    ctx.check(
        "inversion.gaussian_newton",
        "inverse of 0.5 exp(-x^2) against Newton's method",
        |_| {
            let domain = SampleDomain::default_for(1);
            let phi = ChartDiffeo::with_domain(
                SmoothMap::gaussian_bump(&[0.0], std::f64::consts::FRAC_1_SQRT_2, &[0.5]),
                domain.clone(),
            )?;
            let psi = invert_chart(&phi)?;
            let mut worst: f64 = 0.0;
            for y in domain.points() {
                let mut x = y[0];
                for _ in 0..60 {
                    let e = (-x * x).exp();
                    x -= (x + 0.5 * e - y[0]) / (1.0 - x * e);
                }
                worst = worst.max((psi.phi().eval(&y)?[0] - (x - y[0])).abs());
            }
            res(worst, 1e-9)
        },
    );

    let spec = BumpSpec {
        norm_11: (0.1, 0.6),
        ..BumpSpec::default()
    };
    let perturbation = BumpSpec {
        norm_11: (0.05, 0.2),
        ..BumpSpec::default()
    };
    let rounds = 10;
    let probes = 10;

    ctx.check(
        "inversion.d_inverse_at_fd",
        "derivative of the inverse at an image point",
        |c| {
            let mut rng = c.rng(7);
            let n = c.dim;
            let mut worst: f64 = 0.0;
            for _ in 0..rounds {
                let phi = c.chart(random_bump(&mut rng, n, &spec))?;
                for _ in 0..probes {
                    let x = random_point(&mut rng, n, 2.5);
                    let y = phi.full_eval(&x)?;
                    let formula = d_inverse_at(&phi, &x)?;
                    for j in 0..n {
                        let col = fd_in_t(
                            |t| {
                                let mut z = y.clone();
                                z[j] += t;
                                Ok(inverse_fixed_point(phi.phi(), &z)?.0)
                            },
                            FD_STEP,
                        )?;
                        let got: Vec<f64> = (0..n).map(|i| formula[(i, j)]).collect();
                        worst = worst.max(rel_err(&got, &col));
                    }
                }
            }
            res(worst, FORMULA_TOL)
        },
    );
    ctx.check(
        "inversion.d_compose_fd",
        "directional derivative of composition",
        |c| {
            let mut rng = c.rng(8);
            let n = c.dim;
            let mut worst: f64 = 0.0;
            for _ in 0..rounds {
                let gamma = c.chart(random_bump(&mut rng, n, &spec))?;
                let eta = c.chart(random_bump(&mut rng, n, &spec))?;
                let (g1, e1) = (
                    random_bump(&mut rng, n, &spec),
                    random_bump(&mut rng, n, &spec),
                );
                let formula = d_compose(&gamma, &eta, &g1, &e1)?;
                for _ in 0..probes {
                    let x = random_point(&mut rng, n, 2.5);
                    let fd = fd_in_t(
                        |t| {
                            let g = gamma.phi().add(&g1.scaled(t))?;
                            let e = eta.phi().add(&e1.scaled(t))?;
                            shifted_map(&g, &e)?.eval(&x)
                        },
                        FD_STEP,
                    )?;
                    worst = worst.max(rel_err(&formula.eval(&x)?, &fd));
                }
            }
            res(worst, FORMULA_TOL)
        },
    );
    ctx.check(
        "inversion.d_invert_fd",
        "directional derivative of inversion",
        |c| {
            let mut rng = c.rng(9);
            let n = c.dim;
            let mut worst: f64 = 0.0;
            for _ in 0..rounds {
                let phi = c.chart(random_bump(&mut rng, n, &spec))?;
                let phi1 = random_bump(&mut rng, n, &perturbation);
                let formula = d_invert(&phi, &phi1)?;
                for _ in 0..probes {
                    let y = random_point(&mut rng, n, 2.5);
                    let fd = fd_in_t(
                        |t| Ok(inverse_fixed_point(&phi.phi().add(&phi1.scaled(t))?, &y)?.0),
                        FD_STEP,
                    )?;
                    worst = worst.max(rel_err(&formula.eval(&y)?, &fd));
                }
            }
            res(worst, FORMULA_TOL)
        },
    );
    ctx.check(
        "inversion.tangent_multiply_fd",
        "multiplication on the tangent group",
        |c| {
            let mut rng = c.rng(10);
            let n = c.dim;
            let mut worst: f64 = 0.0;
            for _ in 0..rounds {
                let a = TangentElement::new(
                    c.chart(random_bump(&mut rng, n, &spec))?,
                    random_bump(&mut rng, n, &spec),
                )?;
                let b = TangentElement::new(
                    c.chart(random_bump(&mut rng, n, &spec))?,
                    random_bump(&mut rng, n, &spec),
                )?;
                let product = tangent_multiply(&a, &b)?;
                for _ in 0..probes {
                    let x = random_point(&mut rng, n, 2.5);
                    let fd = fd_in_t(
                        |t| {
                            let g = a.base.phi().add(&a.vector.scaled(t))?;
                            let e = b.base.phi().add(&b.vector.scaled(t))?;
                            compose_map(&g, &e)?.eval(&x)
                        },
                        FD_STEP,
                    )?;
                    worst = worst.max(rel_err(&product.vector.eval(&x)?, &fd));
                }
            }
            res(worst, FORMULA_TOL)
        },
    );

    let pairs = if ctx.dim == 1 { 100 } else { 20 };
    let weights = [
        Weight::NormPower(1),
        Weight::NormPower(2),
        Weight::NormPower(3),
        Weight::PolyShifted(1),
        Weight::PolyShifted(2),
        Weight::PolyShifted(3),
    ];
    ctx.check(
        "inversion.weighted_inversion_bound",
        "weighted sup bound for the inverse far out",
        |c| {
            let mut rng = c.rng(11);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..pairs {
                let phi = c.chart(random_bump(&mut rng, c.dim, &BumpSpec::narrow()))?;
                let w = &weights[rng.random_range(0..weights.len())];
                let check = inversion_bound_check(&phi, w, 2.0)?;
                violations += check.violations;
                worst = worst.max(check.max_excess);
            }
            res(violations as f64, 0.0).map(|r| r.with_value(worst))
        },
    );
    ctx.check(
        "inversion.composition_lipschitz",
        "Lipschitz estimate for composition in the f,0-norm",
        |c| {
            let mut rng = c.rng(12);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..pairs {
                let maps: Vec<SmoothMap> = (0..4)
                    .map(|_| random_bump(&mut rng, c.dim, &BumpSpec::narrow()))
                    .collect();
                let w = &weights[rng.random_range(0..weights.len())];
                let check = composition_lipschitz_check(
                    &maps[0], &maps[1], &maps[2], &maps[3], w, &c.domain,
                )?;
                violations += check.violations;
                worst = worst.max(check.max_excess);
            }
            res(violations as f64, 0.0).map(|r| r.with_value(worst))
        },
    );
}

fn linear_error(
    p: &TimeField,
    a: &DMatrix<f64>,
    steps: usize,
    domain: &SampleDomain,
) -> Result<f64> {
    let curve = evolve_on(p, steps, domain.clone())?;
    let exact = expm(a) - DMatrix::identity(a.nrows(), a.nrows());
    let mut worst: f64 = 0.0;
    for x in domain.points() {
        let want = &exact * DVector::from_column_slice(&x);
        worst = worst.max(diff_norm(&curve.eval(1.0, &x)?, want.as_slice()));
    }
    Ok(worst)
}

fn regularity(ctx: &mut Ctx) {
    let n = ctx.dim;
    let a = random_matrix(&mut ctx.rng(13), n, 1.0);
    let linear = TimeField::linear(a.clone()).expect("square matrix");
    ctx.check(
        "regularity.linear_exponential",
        "linear field evolves to (e^A - I)x",
        |c| res(linear_error(&linear, &a, 200, &c.domain)?, 1e-8),
    );
    ctx.check(
        "regularity.step_halving_factor",
        "fourth-order convergence of RK4",
        |c| {
            let factor = linear_error(&linear, &a, 100, &c.domain)?
                / linear_error(&linear, &a, 200, &c.domain)?;
            res((factor - 16.0).abs(), 4.0).map(|r| r.with_value(factor))
        },
    );
    ctx.check(
        "regularity.modulated_constant",
        "field t*v integrates to v/2",
        |c| {
            let v: Vec<f64> = (0..n).map(|i| 1.0 - 0.5 * i as f64).collect();
            let p = TimeField::modulated(vec![0.0, 1.0], SmoothMap::constant(n, &v))?;
            let curve = evolve_on(&p, 10, c.domain.clone())?;
            let half: Vec<f64> = v.iter().map(|x| x / 2.0).collect();
            let worst = c
                .domain
                .points()
                .map(|x| Ok(diff_norm(&curve.eval(1.0, &x)?, &half)))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            res(worst, 1e-10)
        },
    );
    let bump_field = {
        let mut rng = ctx.rng(14);
        TimeField::modulated(
            vec![1.0, -0.8, 0.6],
            random_bump(
                &mut rng,
                n,
                &BumpSpec {
                    norm_11: (0.4, 0.6),
                    ..BumpSpec::default()
                },
            ),
        )
        .expect("square field")
    };
    for (s, name) in [
        (0.25, "regularity.flow_property_quarter"),
        (0.5, "regularity.flow_property_half"),
    ] {
        ctx.check(name, "evolution over [0,1] splits at s", |_| {
            res(flow_property_residual(&bump_field, 200, s)?, 1e-7)
        });
    }
    ctx.check(
        "regularity.auxiliary_linear_ode",
        "auxiliary linear equation for the spatial derivative",
        |c| {
            let curve = evolve_on(&bump_field, 200, c.domain.clone())?;
            let mut rng = c.rng(15);
            let pts: Vec<Vec<f64>> = (0..20).map(|_| random_point(&mut rng, n, 2.5)).collect();
            res(
                aux_derivative_check(&bump_field, &curve, &pts)?.max_deviation,
                1e-5,
            )
        },
    );
    ctx.check(
        "regularity.reverse_evolution",
        "inverse of the evolution is the reversed evolution",
        |c| {
            let forward = evolve_on(&bump_field, 200, c.domain.clone())?;
            let backward = evolve_on(&bump_field.restricted(1.0, 0.0), 200, c.domain.clone())?;
            let inverse = invert_chart(&forward.chart_at(1.0)?)?;
            res(
                grid_residual(inverse.phi(), &backward.final_map(), &c.domain)?.0,
                1e-6,
            )
        },
    );
}

fn so3_bump(rng: &mut ChaCha8Rng, n: usize, max_angle: f64) -> SmoothMap {
    let w = random_rotation_vector(rng, max_angle);
    let center: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let sigma = rng.random_range(0.5..=0.8);
    SmoothMap::gaussian_bump(&center, sigma, &so3_generator(w))
}

fn mapping(ctx: &mut Ctx) {
    let n = ctx.dim;
    let g = MatrixGroup::So3;
    let fam = WeightFamily::norm_powers(&[1, 2]);
    let element =
        |c: &Ctx, xi: SmoothMap| MappingElement::new(g, xi, fam.clone(), 1, c.domain.clone());
    ctx.check(
        "mapping.so3_associativity",
        "pointwise products are associative",
        |c| {
            let mut rng = c.rng(16);
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let [a, b, d] = [0, 1, 2].map(|_| so3_bump(&mut rng, n, 0.15));
                let (a, b, d) = (element(c, a)?, element(c, b)?, element(c, d)?);
                let left = mapping_group::multiply(&mapping_group::multiply(&a, &b)?, &d)?;
                let right = mapping_group::multiply(&a, &mapping_group::multiply(&b, &d)?)?;
                worst = worst.max(grid_residual(left.xi(), right.xi(), &c.domain)?.0);
            }
            res(worst, 1e-10)
        },
    );
    ctx.check(
        "mapping.so3_product_oracle",
        "chart product exponentiates to the matrix product",
        |c| {
            let mut rng = c.rng(17);
            let (a, b) = (
                element(c, so3_bump(&mut rng, n, 0.2))?,
                element(c, so3_bump(&mut rng, n, 0.2))?,
            );
            let p = mapping_group::multiply(&a, &b)?;
            let mut worst: f64 = 0.0;
            for x in c.domain.points() {
                worst = worst.max(
                    (p.value_at(&x)? - a.value_at(&x)? * b.value_at(&x)?)
                        .abs()
                        .max(),
                );
            }
            res(worst, 1e-10)
        },
    );
    ctx.check(
        "mapping.so3_inverse",
        "product with the inverse is the identity",
        |c| {
            let mut rng = c.rng(18);
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let a = element(c, so3_bump(&mut rng, n, 0.3))?;
                worst =
                    worst.max(mapping_group::multiply(&a, &mapping_group::invert(&a)?)?.sup_norm());
            }
            res(worst, 1e-12)
        },
    );
    ctx.check(
        "mapping.one_parameter_law",
        "exp((s+t)v) = exp(sv) exp(tv)",
        |c| {
            let v = so3_bump(&mut c.rng(19), n, 0.2);
            let ge = |s: f64| group_exponential(g, v.scaled(s), fam.clone(), 1, c.domain.clone());
            let (s, t) = (0.3, 0.55);
            let lhs = ge(s + t)?;
            let rhs = mapping_group::multiply(&ge(s)?, &ge(t)?)?;
            res(grid_residual(lhs.xi(), rhs.xi(), &c.domain)?.0, 1e-10)
        },
    );
    ctx.check(
        "mapping.evolve_constant",
        "pointwise evolution of a constant field",
        |c| {
            let w = random_rotation_vector(&mut c.rng(20), 0.4);
            let v = so3_generator(w);
            let field = AlgebraField::constant(SmoothMap::constant(n, &v));
            let e = evolve_mapping(g, &field, 100, fam.clone(), 1, c.domain.clone())?;
            let want = expm(&DMatrix::from_row_slice(3, 3, &v));
            let x = vec![0.0; n];
            res((e.value_at(&x)? - want).abs().max(), 1e-8)
        },
    );
    ctx.check(
        "mapping.evolve_commuting_family",
        "commuting time family evolves to exp of the integral",
        |c| {
            let w = random_rotation_vector(&mut c.rng(21), 0.4);
            let v = so3_generator(w);
            let field = AlgebraField::modulated(vec![0.0, 0.0, 3.0], SmoothMap::constant(n, &v));
            let knots = evolution_knots(&field, 3, 200, &vec![0.0; n])?;
            let want = expm(&DMatrix::from_row_slice(3, 3, &v));
            res((&knots[200] - want).abs().max(), 1e-8)
        },
    );
    ctx.check(
        "mapping.left_log_derivative",
        "left logarithmic derivative recovers the field",
        |c| {
            let mut rng = c.rng(22);
            let field = AlgebraField::modulated(vec![1.0, 2.0, -1.5], so3_bump(&mut rng, n, 0.3));
            let pts: Vec<Vec<f64>> = (0..10).map(|_| random_point(&mut rng, n, 2.0)).collect();
            res(left_log_derivative_residual(&field, 3, 100, &pts)?, 1e-5)
        },
    );
    ctx.check(
        "mapping.decay_closure",
        "products of decaying elements decay",
        |c| {
            let mut rng = c.rng(23);
            let (a, b) = (
                element(c, so3_bump(&mut rng, n, 0.2))?,
                element(c, so3_bump(&mut rng, n, 0.2))?,
            );
            let p = mapping_group::multiply(&a, &b)?;
            let members = [a.xi(), b.xi(), p.xi()]
                .iter()
                .map(|xi| is_member(xi, &fam, 1, true, &c.domain))
                .collect::<Result<Vec<bool>>>()?;
            ok(members.iter().all(|&m| m))
        },
    );
}

fn near_identity(rng: &mut ChaCha8Rng, n: usize) -> Result<LinearAction> {
    let norm = rng.random_range(0.05..0.5);
    LinearAction::new(DMatrix::identity(n, n) + random_matrix(rng, n, norm))
}

fn semidirect_sample(rng: &mut ChaCha8Rng, c: &Ctx) -> Result<SemidirectElement> {
    let map = MappingElement::new(
        MatrixGroup::So3,
        so3_bump(rng, c.dim, 0.1),
        WeightFamily::trivial(),
        1,
        c.domain.clone(),
    )?;
    let diff = c.chart(random_bump(
        rng,
        c.dim,
        &BumpSpec {
            norm_11: (0.05, 0.3),
            ..BumpSpec::default()
        },
    ))?;
    SemidirectElement::new(map, diff)
}

fn actions_suite(ctx: &mut Ctx) {
    let n = ctx.dim;
    ctx.check("actions.gl_identity", "conjugation by the identity", |c| {
        let phi = c.chart(random_bump(&mut c.rng(24), n, &BumpSpec::default()))?;
        res(
            grid_residual(
                gl_conjugate(&LinearAction::identity(n), &phi)?.phi(),
                phi.phi(),
                &c.domain,
            )?
            .0,
            0.0,
        )
    });
    ctx.check(
        "actions.gl_action_law",
        "conjugation is a group action",
        |c| {
            let mut rng = c.rng(25);
            let phi = c.chart(random_bump(&mut rng, n, &BumpSpec::default()))?;
            let (s, t) = (near_identity(&mut rng, n)?, near_identity(&mut rng, n)?);
            res(conjugation_law_residual(&s, &t, &phi)?, 1e-12)
        },
    );
    ctx.check(
        "actions.conjugation_keeps_decay",
        "conjugation preserves the decaying subgroup",
        |c| {
            let mut rng = c.rng(26);
            let fam = WeightFamily::norm_powers(&[1, 2]);
            let phi = c.chart(random_bump(
                &mut rng,
                n,
                &BumpSpec {
                    center: 0.5,
                    ..BumpSpec::narrow()
                },
            ))?;
            let mut failures = usize::from(!is_decaying_diffeo(&phi, &fam)?);
            for _ in 0..10 {
                let t = near_identity(&mut rng, n)?;
                failures += usize::from(!is_decaying_diffeo(&gl_conjugate(&t, &phi)?, &fam)?);
            }
            res(failures as f64, 0.0)
        },
    );
    let t = LinearAction::identity(n.max(2));
    ctx.check(
        "actions.schwartz_bound",
        "GL estimate for polynomial weights",
        |c| {
            let r = schwartz_action_bound_check(
                &t,
                &SchwartzParams {
                    seed: c.seed,
                    ..SchwartzParams::default()
                },
            )?;
            res(r.max_ratio, 1.0 + actions::RATIO_SLACK)
                .map(|rec| rec.with_value(r.violations as f64))
        },
    );
    ctx.check(
        "actions.schwartz_violated_premise",
        "estimate fails once the perturbation is too large",
        |c| {
            let params = SchwartzParams {
                perturbation: PerturbationNorm::Exactly(100.0),
                seed: c.seed,
                ..SchwartzParams::default()
            };
            let r = schwartz_action_bound_check(&t, &params)?;
            res(1.0 - r.max_ratio, 0.0).map(|rec| rec.with_value(r.max_ratio))
        },
    );
    ctx.check(
        "actions.multiplier_linear",
        "linear maps are multipliers for polynomial weights",
        |c| {
            let a = random_matrix(&mut c.rng(27), n, 2.0);
            ok(multiplier_check(
                &SmoothMap::linear(&a),
                &WeightFamily::norm_powers(&[1, 2, 3]),
                2,
                &c.domain,
            )?)
        },
    );
    ctx.check("actions.multiplier_zero", "zero is a multiplier", |c| {
        ok(multiplier_check(
            &SmoothMap::zero(n, n),
            &WeightFamily::norm_powers(&[1, 2, 3]),
            2,
            &c.domain,
        )?)
    });
    ctx.check(
        "actions.multiplier_rejects_growth",
        "exp(|x|^2) is not a multiplier",
        |c| {
            let m = SmoothMap::radial(
                &vec![0.0; n],
                crate::jets::RadialProfile::ExpQuadratic { rate: 1.0 },
                &[1.0],
            );
            ok(!multiplier_check(
                &m,
                &WeightFamily::norm_powers(&[1, 2, 3]),
                0,
                &c.domain,
            )?)
        },
    );
    ctx.check(
        "actions.semidirect_associativity",
        "semidirect product is associative",
        |c| {
            let mut rng = c.rng(28);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let [a, b, d] = [0, 1, 2].map(|_| semidirect_sample(&mut rng, c));
                let (a, b, d) = (a?, b?, d?);
                let left = semidirect_multiply(&semidirect_multiply(&a, &b)?, &d)?;
                let right = semidirect_multiply(&a, &semidirect_multiply(&b, &d)?)?;
                worst = worst.max(semidirect_residual(&left, &right)?);
            }
            res(worst, 1e-8)
        },
    );
    ctx.check(
        "actions.semidirect_inverse",
        "product with the semidirect inverse is the identity",
        |c| {
            let mut rng = c.rng(29);
            let mut worst: f64 = 0.0;
            for _ in 0..5 {
                let a = semidirect_sample(&mut rng, c)?;
                let e = semidirect_multiply(&a, &semidirect_invert(&a)?)?;
                let zero = SmoothMap::zero(n, n);
                worst = worst
                    .max(e.map_part.sup_norm())
                    .max(grid_residual(e.diff_part.phi(), &zero, &c.domain)?.0);
            }
            res(worst, 1e-8)
        },
    );
    ctx.check(
        "actions.omega_homomorphism",
        "precomposition with a diffeomorphism is a homomorphism",
        |c| {
            let mut rng = c.rng(30);
            let (a, b) = (
                semidirect_sample(&mut rng, c)?,
                semidirect_sample(&mut rng, c)?,
            );
            let phi = &a.diff_part;
            let lhs = actions::omega(phi, &mapping_group::multiply(&a.map_part, &b.map_part)?)?;
            let rhs = mapping_group::multiply(
                &actions::omega(phi, &a.map_part)?,
                &actions::omega(phi, &b.map_part)?,
            )?;
            res(grid_residual(lhs.xi(), rhs.xi(), &c.domain)?.0, 1e-10)
        },
    );
}

/// Largest `n` reported by the counterexample suite.
pub const COUNTEREXAMPLE_MAX: u32 = 20;

fn counterexample(ctx: &mut Ctx) {
    let line = SampleDomain::default_for(1);
    for k in 1..=COUNTEREXAMPLE_MAX {
        let name = format!("counterexample.n{k:02}");
        ctx.check(&name, "rescaled sine stays at distance 1 from sine", |_| {
            let v = bc_counterexample(k, &line)?;
            res(1.0 - v, 1e-9).map(|r| r.with_value(v))
        });
    }
    ctx.check(
        "counterexample.unperturbed",
        "no rescaling gives no gap",
        |_| {
            res(
                sine_rescaling_gap(1.0, Some(std::f64::consts::PI), &line)?,
                0.0,
            )
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for name in Suite::NAMES {
            assert_eq!(name.parse::<Suite>().unwrap().to_string(), name);
        }
        assert!("".parse::<Suite>().is_err());
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn counterexample_suite_passes_and_is_sorted() {
        let report = run(&SuiteConfig::new(Suite::Counterexample)).unwrap();
        assert!(report.pass());
        assert_eq!(report.checks.len(), 21);
        assert!(report.checks.windows(2).all(|w| w[0].name <= w[1].name));
        assert!(report
            .checks
            .iter()
            .filter_map(|c| c.value)
            .all(|v| v >= 1.0 - 1e-9));
    }

    #[test]
    fn tolerance_override_applies_everywhere() {
        let mut cfg = SuiteConfig::new(Suite::Counterexample);
        cfg.tol = Some(-1.0);
        let report = run(&cfg).unwrap();
        assert!(report.checks.iter().all(|c| c.tolerance == -1.0 && !c.pass));
    }

    #[test]
    fn bad_dimension_is_a_config_error() {
        let mut cfg = SuiteConfig::new(Suite::Seminorms);
        cfg.dim = 4;
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
    }
}
