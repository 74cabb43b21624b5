//! Weights, weight families, and sampled weighted seminorms
//! `‖γ‖_{f,ℓ} = sup_x |f(x)| ‖D^{(ℓ)}γ(x)‖_op`.
//!
//! Suprema over ℝⁿ are estimated on a uniform grid over `[−R, R]ⁿ`. Decay at
//! infinity is judged from tail suprema over `‖x‖ ≥ r` for an increasing list
//! of radii inside the box.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::SmoothMap;

/// Decay threshold, relative to the full-domain seminorm.
pub const DECAY_TOL: f64 = 1e-6;

/// W3 demands the tail ratio fall to at most this fraction of its first value.
pub const W3_RATIO_DROP: f64 = 0.5;

type WeightFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A finite-valued weight function on ℝⁿ.
#[derive(Clone)]
pub enum Weight {
    ConstantOne,
    /// `‖x‖^d`
    NormPower(u32),
    /// `(1 + ‖x‖)^d`
    PolyShifted(u32),
    Custom {
        name: String,
        eval: Arc<WeightFn>,
    },
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Weight {
    pub fn custom<F>(name: &str, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Weight::Custom {
            name: name.to_string(),
            eval: Arc::new(eval),
        }
    }

    /// Pointwise product `x ↦ f(x) g(x)`.
    pub fn product(f: &Weight, g: &Weight) -> Self {
        let (a, b) = (f.clone(), g.clone());
        Weight::custom(&format!("({})*({})", f.name(), g.name()), move |x| {
            a.eval(x) * b.eval(x)
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm = || x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Weight::ConstantOne => 1.0,
            Weight::NormPower(0) | Weight::PolyShifted(0) => 1.0,
            Weight::NormPower(d) => norm().powi(*d as i32),
            Weight::PolyShifted(d) => (1.0 + norm()).powi(*d as i32),
            Weight::Custom { eval, .. } => eval(x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Weight::ConstantOne => "1".to_string(),
            Weight::NormPower(d) => format!("|x|^{d}"),
            Weight::PolyShifted(d) => format!("(1+|x|)^{d}"),
            Weight::Custom { name, .. } => name.clone(),
        }
    }

    pub fn is_constant_one(&self) -> bool {
        matches!(
            self,
            Weight::ConstantOne | Weight::NormPower(0) | Weight::PolyShifted(0)
        )
    }
}

/// Config entry `{kind, degree}` for a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightConfig {
    ConstantOne,
    NormPower { degree: u32 },
    PolyShifted { degree: u32 },
}

impl From<&WeightConfig> for Weight {
    fn from(c: &WeightConfig) -> Self {
        match *c {
            WeightConfig::ConstantOne => Weight::ConstantOne,
            WeightConfig::NormPower { degree } => Weight::NormPower(degree),
            WeightConfig::PolyShifted { degree } => Weight::PolyShifted(degree),
        }
    }
}

/// An ordered, finite family of weights.
#[derive(Debug, Clone)]
pub struct WeightFamily {
    members: Vec<Weight>,
    contains_one: bool,
}

impl WeightFamily {
    pub fn new(members: Vec<Weight>) -> Self {
        let contains_one = members.iter().any(Weight::is_constant_one);
        Self {
            members,
            contains_one,
        }
    }

    /// The family with the constant weight 1 added in front if it is missing.
    pub fn with_one(mut members: Vec<Weight>) -> Self {
        if !members.iter().any(Weight::is_constant_one) {
            members.insert(0, Weight::ConstantOne);
        }
        Self::new(members)
    }

    /// `{1}`
    pub fn trivial() -> Self {
        Self::new(vec![Weight::ConstantOne])
    }

    /// `{‖x‖^d : d ∈ degrees}` together with 1.
    pub fn norm_powers(degrees: &[u32]) -> Self {
        Self::with_one(degrees.iter().map(|&d| Weight::NormPower(d)).collect())
    }

    /// `{(1 + ‖x‖)^d : d = 0..=max_degree}`.
    pub fn shifted_polynomials(max_degree: u32) -> Self {
        Self::new((0..=max_degree).map(Weight::PolyShifted).collect())
    }

    pub fn from_config(entries: &[WeightConfig]) -> Self {
        Self::new(entries.iter().map(Weight::from).collect())
    }

    pub fn members(&self) -> &[Weight] {
        &self.members
    }

    pub fn contains_one(&self) -> bool {
        self.contains_one
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Uniform sample grid on `[−R, R]ⁿ` plus tail radii for decay tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDomain {
    pub box_halfwidth: f64,
    pub points_per_axis: usize,
    pub dimension: usize,
    pub tail_radii: Vec<f64>,
}

impl SampleDomain {
    pub fn new(
        box_halfwidth: f64,
        points_per_axis: usize,
        dimension: usize,
        tail_radii: Vec<f64>,
    ) -> Result<Self> {
        if box_halfwidth.is_nan()
            || box_halfwidth <= 0.0
            || points_per_axis < 2
            || !(1..=3).contains(&dimension)
        {
            return Err(Error::Config(format!(
                "sample domain needs R > 0, ≥ 2 points per axis and 1 ≤ n ≤ 3 (got R = {box_halfwidth}, {points_per_axis} points, n = {dimension})"
            )));
        }
        let increasing = tail_radii.windows(2).all(|w| w[0] < w[1]);
        let inside = tail_radii.iter().all(|&r| r > 0.0 && r <= box_halfwidth);
        if !increasing || !inside {
            return Err(Error::Config(
                "tail radii must be positive, increasing and at most R".to_string(),
            ));
        }
        Ok(Self {
            box_halfwidth,
            points_per_axis,
            dimension,
            tail_radii,
        })
    }

    /// R = 8 with 201 / 61 / 25 points per axis for n = 1 / 2 / 3.
    pub fn default_for(dimension: usize) -> Self {
        let points = match dimension {
            1 => 201,
            2 => 61,
            _ => 25,
        };
        Self::new(8.0, points, dimension, vec![2.0, 4.0, 6.0, 7.0])
            .expect("default domain is valid")
    }

    pub fn with_points_per_axis(&self, points_per_axis: usize) -> Result<Self> {
        Self::new(
            self.box_halfwidth,
            points_per_axis,
            self.dimension,
            self.tail_radii.clone(),
        )
    }

    /// Halves the spacing; the refined grid contains every old grid point.
    pub fn refined(&self) -> Self {
        self.with_points_per_axis(2 * self.points_per_axis - 1)
            .expect("refinement keeps the domain valid")
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.box_halfwidth / (self.points_per_axis - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut x = vec![0.0; self.dimension];
        for slot in (0..self.dimension).rev() {
            let k = index % self.points_per_axis;
            index /= self.points_per_axis;
            x[slot] = -self.box_halfwidth + k as f64 * h;
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Full-domain and tail suprema for every `(weight, order)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormProfile {
    /// `full[w][ℓ]`
    pub full: Vec<Vec<f64>>,
    /// `tail[w][ℓ][r]`
    pub tail: Vec<Vec<Vec<f64>>>,
    /// True if some operator norm was a sampled lower bound.
    pub estimated: bool,
}

/// One seminorm with its tail profile, as serialized in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormRecord {
    pub weight: String,
    pub order: usize,
    pub value: f64,
    pub radii: Vec<f64>,
    pub tail: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Acc {
    full: Vec<f64>,
    tail: Vec<f64>,
    estimated: bool,
}

impl Acc {
    fn empty(slots: usize, radii: usize) -> Self {
        Self {
            full: vec![0.0; slots],
            tail: vec![0.0; slots * radii],
            estimated: false,
        }
    }

    fn merge(mut self, other: Acc) -> Self {
        for (a, b) in self.full.iter_mut().zip(other.full) {
            *a = a.max(b);
        }
        for (a, b) in self.tail.iter_mut().zip(other.tail) {
            *a = a.max(b);
        }
        self.estimated |= other.estimated;
        self
    }
}

/// `max` that lets NaN through, so non-finite data is never hidden.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Sweeps the grid once, evaluating jets up to `max_order` at each point.
pub fn seminorm_profile(
    map: &SmoothMap,
    weights: &[Weight],
    max_order: usize,
    domain: &SampleDomain,
) -> Result<SeminormProfile> {
    if map.dim_in() != domain.dimension {
        return Err(Error::DimensionMismatch {
            expected: domain.dimension,
            found: map.dim_in(),
        });
    }
    let supported = map.max_order();
    if max_order > supported {
        return Err(Error::UnsupportedOrder {
            requested: max_order,
            supported,
        });
    }
    let orders = max_order + 1;
    let slots = weights.len() * orders;
    let radii = &domain.tail_radii;
    let acc = (0..domain.len())
        .into_par_iter()
        .map(|i| -> Result<Acc> {
            let x = domain.point(i);
            let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let jet = map.jet(&x, max_order)?;
            let mut acc = Acc::empty(slots, radii.len());
            let norms: Vec<f64> = (0..orders)
                .map(|l| {
                    let est = jet.derivative(l).opnorm_estimate();
                    acc.estimated |= !est.exact;
                    est.value
                })
                .collect();
            for (w, weight) in weights.iter().enumerate() {
                let fx = weight.eval(&x).abs();
                for (l, norm) in norms.iter().enumerate() {
                    let v = if fx == 0.0 && norm.is_finite() {
                        0.0
                    } else {
                        fx * norm
                    };
                    let slot = w * orders + l;
                    acc.full[slot] = nan_max(acc.full[slot], v);
                    for (r, &rad) in radii.iter().enumerate() {
                        if radius >= rad {
                            let t = slot * radii.len() + r;
                            acc.tail[t] = nan_max(acc.tail[t], v);
                        }
                    }
                }
            }
            Ok(acc)
        })
        .try_reduce(|| Acc::empty(slots, radii.len()), |a, b| Ok(a.merge(b)))?;

    let full = (0..weights.len())
        .map(|w| acc.full[w * orders..(w + 1) * orders].to_vec())
        .collect();
    let tail = (0..weights.len())
        .map(|w| {
            (0..orders)
                .map(|l| {
                    let slot = w * orders + l;
                    acc.tail[slot * radii.len()..(slot + 1) * radii.len()].to_vec()
                })
                .collect()
        })
        .collect();
    Ok(SeminormProfile {
        full,
        tail,
        estimated: acc.estimated,
    })
}

/// Grid estimate of `‖γ‖_{f,ℓ}`.
pub fn seminorm(
    map: &SmoothMap,
    weight: &Weight,
    order: usize,
    domain: &SampleDomain,
) -> Result<f64> {
    let profile = seminorm_profile(map, std::slice::from_ref(weight), order, domain)?;
    Ok(profile.full[0][order])
}

/// Seminorms for all members of a family and all orders `0..=max_order`.
pub fn seminorm_records(
    map: &SmoothMap,
    family: &WeightFamily,
    max_order: usize,
    domain: &SampleDomain,
) -> Result<Vec<SeminormRecord>> {
    let profile = seminorm_profile(map, family.members(), max_order, domain)?;
    let mut records = Vec::new();
    for (w, weight) in family.members().iter().enumerate() {
        for order in 0..=max_order {
            records.push(SeminormRecord {
                weight: weight.name(),
                order,
                value: profile.full[w][order],
                radii: domain.tail_radii.clone(),
                tail: profile.tail[w][order].clone(),
            });
        }
    }
    Ok(records)
}

/// Outcome of a decay test with the tail-sup table it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub decaying: bool,
    pub records: Vec<SeminormRecord>,
    /// Operator norms of order ≥ 2 were sampled lower bounds.
    pub estimated: bool,
}

/// Whether every weighted seminorm of order `≤ k` is finite and its tail
/// supremum at the outermost radius falls below `DECAY_TOL` times the
/// full-domain value.
pub fn is_decaying(
    map: &SmoothMap,
    family: &WeightFamily,
    k: usize,
    domain: &SampleDomain,
) -> Result<DecayReport> {
    let profile = seminorm_profile(map, family.members(), k, domain)?;
    let records = seminorm_records_from(&profile, family, k, domain);
    let decaying = records.iter().all(|r| {
        let last = r.tail.last().copied().unwrap_or(r.value);
        r.value.is_finite() && last <= DECAY_TOL * r.value
    });
    Ok(DecayReport {
        decaying,
        records,
        estimated: profile.estimated,
    })
}

fn seminorm_records_from(
    profile: &SeminormProfile,
    family: &WeightFamily,
    k: usize,
    domain: &SampleDomain,
) -> Vec<SeminormRecord> {
    family
        .members()
        .iter()
        .enumerate()
        .flat_map(|(w, weight)| {
            (0..=k).map(move |order| SeminormRecord {
                weight: weight.name(),
                order,
                value: profile.full[w][order],
                radii: domain.tail_radii.clone(),
                tail: profile.tail[w][order].clone(),
            })
        })
        .collect()
}

/// Verdicts on the three weight conditions of rapidly-decreasing-function
/// theory, restricted to finite-valued weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcrReport {
    /// Infinity sets coincide (always, since weights are finite here).
    pub w1: bool,
    /// Directed upwards with the constant 1 as smallest member.
    pub w2: bool,
    /// Every member has a tail-dominating partner.
    pub w3: bool,
    /// Index of the first W3 witness found for each member.
    pub w3_witnesses: Vec<Option<usize>>,
    /// W3 is judged on a finite list of radii, not as a true limit.
    pub heuristic: bool,
}

pub fn bcr_check(family: &WeightFamily, domain: &SampleDomain) -> BcrReport {
    let members = family.members();
    let points: Vec<Vec<f64>> = domain.points().collect();
    let values: Vec<Vec<f64>> = members
        .iter()
        .map(|w| points.iter().map(|x| w.eval(x)).collect())
        .collect();

    let w1 = values.iter().flatten().all(|v| v.is_finite());

    let dominates = |h: &[f64], f: &[f64], g: &[f64]| {
        h.iter()
            .zip(f.iter().zip(g))
            .all(|(&hv, (&fv, &gv))| hv >= fv.max(gv))
    };
    let directed = (0..members.len()).all(|a| {
        (0..members.len()).all(|b| values.iter().any(|h| dominates(h, &values[a], &values[b])))
    });
    let smallest_is_one = members.iter().enumerate().any(|(i, w)| {
        w.is_constant_one()
            && values
                .iter()
                .all(|f| f.iter().zip(&values[i]).all(|(a, b)| a >= b))
    });
    let w2 = directed && smallest_is_one;

    let norms: Vec<f64> = points
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let tail_ratio = |f1: &[f64], f2: &[f64]| -> Vec<f64> {
        domain
            .tail_radii
            .iter()
            .map(|&r| {
                norms
                    .iter()
                    .zip(f1.iter().zip(f2))
                    .filter(|(n, _)| **n >= r)
                    .map(|(_, (&a, &b))| if b > 0.0 { a / b } else { f64::INFINITY })
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let w3_witnesses: Vec<Option<usize>> = values
        .iter()
        .map(|f1| {
            values.iter().position(|f2| {
                let ratios = tail_ratio(f1, f2);
                let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
                match (ratios.first(), ratios.last()) {
                    (Some(&first), Some(&last)) => {
                        decreasing && first.is_finite() && last <= W3_RATIO_DROP * first
                    }
                    _ => false,
                }
            })
        })
        .collect();
    let w3 = !w3_witnesses.is_empty() && w3_witnesses.iter().all(Option::is_some);
    BcrReport {
        w1,
        w2,
        w3,
        w3_witnesses,
        heuristic: true,
    }
}

/// Inner-ball sups may trail the full sup by at most this factor.
pub const GROWTH_RATIO: f64 = 1.5;

/// Heuristic finiteness test for the seminorms up to order `k`: the sup over
/// the whole box may exceed the sup over the ball of radius `R/2` by at most
/// `GROWTH_RATIO`, which rejects polynomial growth such as `x ↦ x`.
pub fn bounded_growth(
    map: &SmoothMap,
    family: &WeightFamily,
    k: usize,
    domain: &SampleDomain,
) -> Result<bool> {
    let half = domain.box_halfwidth / 2.0;
    let mut weights: Vec<Weight> = family.members().to_vec();
    weights.extend(family.members().iter().map(|w| {
        let w = w.clone();
        Weight::custom("inner", move |x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= half {
                w.eval(x)
            } else {
                0.0
            }
        })
    }));
    let profile = seminorm_profile(map, &weights, k, domain)?;
    let m = family.len();
    Ok((0..m).all(|w| {
        (0..=k).all(|l| {
            let (full, inner) = (profile.full[w][l], profile.full[m + w][l]);
            full.is_finite() && full <= GROWTH_RATIO * inner
        })
    }))
}

/// Smallest `C` with `values[i] ≤ C · |g(x_i)|` on the grid, or `∞` if none exists.
pub fn domination_constant(values: &[f64], g: &Weight, domain: &SampleDomain) -> f64 {
    values
        .iter()
        .zip(domain.points())
        .map(|(&v, x)| {
            let gx = g.eval(&x).abs();
            if v == 0.0 {
                0.0
            } else if gx == 0.0 {
                f64::INFINITY
            } else {
                v / gx
            }
        })
        .fold(0.0, nan_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn line() -> SampleDomain {
        SampleDomain::default_for(1)
    }

    #[test]
    fn zero_map_has_zero_seminorms() {
        let zero = SmoothMap::zero(2, 2);
        let d = SampleDomain::default_for(2);
        for l in 0..=3 {
            assert_eq!(seminorm(&zero, &Weight::NormPower(3), l, &d).unwrap(), 0.0);
        }
    }

    #[test]
    fn identity_has_unit_first_order_seminorm() {
        let id = SmoothMap::identity(1);
        assert_eq!(
            seminorm(&id, &Weight::ConstantOne, 1, &line()).unwrap(),
            1.0
        );
    }

    #[test]
    fn order_beyond_jets_is_rejected() {
        let map = SmoothMap::from_fn(1, 1, |x| vec![x[0]]);
        assert!(matches!(
            seminorm(&map, &Weight::ConstantOne, 3, &line()),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn constant_and_sine_do_not_decay() {
        let c = SmoothMap::constant(1, &[0.3]);
        assert!(
            !is_decaying(&c, &WeightFamily::trivial(), 1, &line())
                .unwrap()
                .decaying
        );
        let s = SmoothMap::sine_profile(&[1.0], &[1.0], 0.0);
        assert!(
            !is_decaying(&s, &WeightFamily::trivial(), 0, &line())
                .unwrap()
                .decaying
        );
    }

    #[test]
    fn gaussian_decays_against_polynomial_weights() {
        let g = SmoothMap::gaussian_bump(&[0.0], std::f64::consts::FRAC_1_SQRT_2, &[1.0]);
        let family = WeightFamily::norm_powers(&[2, 4]);
        let report = is_decaying(&g, &family, 2, &line()).unwrap();
        assert!(report.decaying);
        assert_eq!(report.records.len(), 9);
        for r in &report.records {
            assert!(r.tail.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn bcr_verdicts_on_forced_cases() {
        let d = line();
        let trivial = bcr_check(&WeightFamily::trivial(), &d);
        assert!(trivial.w1 && trivial.w2);
        assert!(!trivial.w3);

        let poly = bcr_check(&WeightFamily::shifted_polynomials(3), &d);
        assert!(poly.w2);
        assert_eq!(&poly.w3_witnesses[..3], &[Some(1), Some(2), Some(3)]);
        assert_eq!(poly.w3_witnesses[3], None);

        let top = bcr_check(&WeightFamily::new(vec![Weight::PolyShifted(3)]), &d);
        assert!(!top.w3);
    }

    #[test]
    fn growth_heuristic_separates_bounded_from_linear() {
        let d = line();
        let fam = WeightFamily::trivial();
        let s = SmoothMap::sine_profile(&[1.0], &[1.0], 0.0);
        assert!(bounded_growth(&s, &fam, 1, &d).unwrap());
        assert!(!bounded_growth(&SmoothMap::identity(1), &fam, 0, &d).unwrap());
        assert!(bounded_growth(&SmoothMap::zero(1, 1), &fam, 2, &d).unwrap());
    }

    #[test]
    fn domain_validation() {
        assert!(SampleDomain::new(8.0, 11, 4, vec![]).is_err());
        assert!(SampleDomain::new(8.0, 11, 1, vec![3.0, 2.0]).is_err());
        assert!(SampleDomain::new(8.0, 11, 1, vec![9.0]).is_err());
        let d = SampleDomain::new(1.0, 3, 2, vec![0.5]).unwrap();
        let pts: Vec<_> = d.points().collect();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![-1.0, -1.0]);
        assert_eq!(pts[5], vec![0.0, 1.0]);
    }

    #[test]
    fn linear_map_seminorm_is_spectral_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let map = SmoothMap::linear(&a);
        let expect = crate::jets::spectral_norm(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let got = seminorm(&map, &Weight::ConstantOne, 1, &SampleDomain::default_for(2)).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn weight_config_round_trip() {
        let cfg: Vec<WeightConfig> =
            serde_json::from_str(r#"[{"kind":"constant_one"},{"kind":"norm_power","degree":2}]"#)
                .unwrap();
        let fam = WeightFamily::from_config(&cfg);
        assert!(fam.contains_one());
        assert_eq!(fam.members()[1].eval(&[3.0, 4.0]), 25.0);
    }
}
