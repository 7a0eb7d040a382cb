//! Invariant laws of the overshoot, down-overshoot and entrance chains.
//!
//! Densities are taken with respect to the Haar measure of the state group:
//! Lebesgue measure for continuous laws, `span` times counting measure on a
//! lattice. An atom's mass is therefore `span * density`.

mod ladder;

use std::io::Write;

use num::{BigInt, BigRational, One, Signed};
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::{rational_to_f64, to_units, IncrementSpec, LatticePmf};
use crate::quadrature::integrate;
use crate::rng::{open01, RngStream};
use crate::stats::{Geometry, Masses};

pub use ladder::{
    far_level_down_limit, ladder_bootstrap_se, ladder_counts, ladder_normalization_check,
    pi_plus_via_ladder, wiener_hopf_residual, LadderCounts, LadderLaws, NormalizationReport,
    TRUNCATION_LIMIT,
};

/// Default histogram bin width for continuous laws.
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;
/// Absolute tolerance, relative to `max(1, |y|)`, of numeric CDF inversion.
pub const QUANTILE_TOL: f64 = 1e-10;
/// Cap on the number of default bins; heavy tails spill into the
/// overflow bucket beyond it.
pub const MAX_DEFAULT_BINS: f64 = 100_000.0;
const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    PiPlus,
    PiMinus,
    PiH { h: f64 },
}

#[derive(Debug, Clone)]
enum Repr {
    Atoms(Atoms),
    Density { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
struct Atoms {
    span: f64,
    units: Vec<i64>,
    exact: Vec<BigRational>,
    probs: Vec<f64>,
    cum: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl Atoms {
    fn new(span: f64, pairs: Vec<(i64, BigRational)>) -> Self {
        let pairs: Vec<(i64, BigRational)> =
            pairs.into_iter().filter(|(_, p)| p.is_positive()).collect();
        let units: Vec<i64> = pairs.iter().map(|(u, _)| *u).collect();
        let exact: Vec<BigRational> = pairs.into_iter().map(|(_, p)| p).collect();
        let probs: Vec<f64> = exact.iter().map(rational_to_f64).collect();
        let mut acc = 0.0;
        let cum = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let alias = WeightedAliasIndex::new(probs.clone()).expect("positive atom weights");
        Self {
            span,
            units,
            exact,
            probs,
            cum,
            alias,
        }
    }

    fn index_of(&self, y: f64) -> Option<usize> {
        let u = to_units(y, self.span)?;
        self.units.binary_search(&u).ok()
    }
}

/// One of the invariant probability laws pi_plus, pi_minus or pi_h.
#[derive(Debug, Clone)]
pub struct InvariantMeasure {
    kind: MeasureKind,
    spec: IncrementSpec,
    normalizer: f64,
    repr: Repr,
}

impl InvariantMeasure {
    /// pi_plus(dy) = c1 P(X > y) on the nonnegative states, c1 = 2 / E|X|.
    pub fn pi_plus(spec: &IncrementSpec) -> Self {
        let c1 = 2.0 / spec.mean_abs();
        let repr = match spec.as_lattice() {
            Some(p) => {
                let c = lattice_c1_units(p);
                Repr::Atoms(Atoms::new(
                    p.span(),
                    (0..p.max_unit())
                        .map(|k| (k, &c * p.exact_tail_above_unit(k)))
                        .collect(),
                ))
            }
            None => Repr::Density {
                lo: 0.0,
                hi: spec.sup_support().max(0.0),
            },
        };
        Self {
            kind: MeasureKind::PiPlus,
            spec: spec.clone(),
            normalizer: c1,
            repr,
        }
    }

    /// pi_minus(dy) = c1 P(X <= y) on the negative states.
    pub fn pi_minus(spec: &IncrementSpec) -> Self {
        let c1 = 2.0 / spec.mean_abs();
        let repr = match spec.as_lattice() {
            Some(p) => {
                let c = lattice_c1_units(p);
                Repr::Atoms(Atoms::new(
                    p.span(),
                    (p.min_unit()..0)
                        .map(|k| (k, &c * p.exact_tail_at_most_unit(k)))
                        .collect(),
                ))
            }
            None => Repr::Density {
                lo: spec.inf_support().min(0.0),
                hi: 0.0,
            },
        };
        Self {
            kind: MeasureKind::PiMinus,
            spec: spec.clone(),
            normalizer: c1,
            repr,
        }
    }

    /// pi_h(dy) = c_h (1 - P(y - h <= X <= y)) on `[0, h]`.
    pub fn pi_h(spec: &IncrementSpec, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "interval length must be positive, got {h}"
            )));
        }
        let kind = MeasureKind::PiH { h };
        if let Some(p) = spec.as_lattice() {
            let hu = to_units(h, p.span()).ok_or(Error::OffLattice(h))?;
            let weights: Vec<(i64, BigRational)> = (0..=hu)
                .map(|k| {
                    let inside =
                        p.exact_tail_at_most_unit(k) - p.exact_tail_at_most_unit(k - hu - 1);
                    (k, BigRational::one() - inside)
                })
                .collect();
            let z: BigRational = weights.iter().map(|(_, w)| w.clone()).sum();
            if !z.is_positive() {
                return Err(Error::DegenerateInterval(h));
            }
            // Density is mass / span.
            let normalizer = 1.0 / (rational_to_f64(&z) * p.span());
            let atoms = Atoms::new(
                p.span(),
                weights.into_iter().map(|(k, w)| (k, w / &z)).collect(),
            );
            return Ok(Self {
                kind,
                spec: spec.clone(),
                normalizer,
                repr: Repr::Atoms(atoms),
            });
        }
        let unnorm = |y: f64| 1.0 - (spec.tail_lower(y) - spec.tail_lower(y - h));
        let quad = integrate(unnorm, 0.0, h, QUAD_TOL)?;
        let closed = (spec.upper_tail_integral(0.0) - spec.upper_tail_integral(h))
            + (spec.lower_tail_integral(0.0) - spec.lower_tail_integral(-h));
        if !(quad > 0.0) {
            return Err(Error::DegenerateInterval(h));
        }
        if (quad - closed).abs() > 1e-9 * closed.abs() {
            return Err(Error::Quadrature {
                estimate: quad,
                error: (quad - closed).abs(),
            });
        }
        Ok(Self {
            kind,
            spec: spec.clone(),
            normalizer: 1.0 / quad,
            repr: Repr::Density { lo: 0.0, hi: h },
        })
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    /// c1 for pi_plus and pi_minus, c_h for pi_h.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn spec(&self) -> &IncrementSpec {
        &self.spec
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self.repr, Repr::Atoms(_))
    }

    /// Closed hull of the support (may be infinite for continuous laws).
    pub fn support(&self) -> (f64, f64) {
        match &self.repr {
            Repr::Atoms(a) => (
                a.units[0] as f64 * a.span,
                *a.units.last().unwrap() as f64 * a.span,
            ),
            Repr::Density { lo, hi } => (*lo, *hi),
        }
    }

    /// Atoms `(y, mass)` of a lattice measure.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.repr {
            Repr::Atoms(a) => Some(
                a.units
                    .iter()
                    .zip(&a.probs)
                    .map(|(&u, &p)| (u as f64 * a.span, p))
                    .collect(),
            ),
            Repr::Density { .. } => None,
        }
    }

    /// Atoms `(unit, mass)` as exact rationals.
    pub fn exact_atoms(&self) -> Option<Vec<(i64, BigRational)>> {
        match &self.repr {
            Repr::Atoms(a) => Some(
                a.units
                    .iter()
                    .copied()
                    .zip(a.exact.iter().cloned())
                    .collect(),
            ),
            Repr::Density { .. } => None,
        }
    }

    /// Density at y with respect to the Haar measure.
    pub fn density(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Atoms(a) => a.index_of(y).map_or(0.0, |i| a.probs[i] / a.span),
            Repr::Density { .. } => {
                let s = &self.spec;
                match self.kind {
                    MeasureKind::PiPlus if y >= 0.0 => self.normalizer * s.tail_upper(y),
                    MeasureKind::PiMinus if y < 0.0 => self.normalizer * s.tail_lower(y),
                    MeasureKind::PiH { h } if (0.0..=h).contains(&y) => {
                        self.normalizer * (1.0 - (s.tail_lower(y) - s.tail_lower(y - h)))
                    }
                    _ => 0.0,
                }
            }
        }
    }

    /// Mass of the single point y (zero for continuous laws).
    pub fn mass(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Atoms(a) => a.index_of(y).map_or(0.0, |i| a.probs[i]),
            Repr::Density { .. } => 0.0,
        }
    }

    /// P(Y <= y).
    pub fn cdf(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Atoms(a) => {
                let k = (y / a.span + 1e-9).floor() as i64;
                let i = a.units.partition_point(|&u| u <= k);
                if i == 0 {
                    0.0
                } else {
                    a.cum[i - 1].min(1.0)
                }
            }
            Repr::Density { .. } => self.continuous_cdf(y).clamp(0.0, 1.0),
        }
    }

    /// P(Y > y), computed directly in the upper tail where that is more accurate.
    pub fn survival(&self, y: f64) -> f64 {
        match (&self.repr, self.kind) {
            (Repr::Density { .. }, MeasureKind::PiPlus) if y >= 0.0 => {
                (self.normalizer * self.spec.upper_tail_integral(y)).clamp(0.0, 1.0)
            }
            _ => 1.0 - self.cdf(y),
        }
    }

    fn continuous_cdf(&self, y: f64) -> f64 {
        let s = &self.spec;
        let c = self.normalizer;
        match self.kind {
            MeasureKind::PiPlus if y < 0.0 => 0.0,
            MeasureKind::PiPlus => 1.0 - c * s.upper_tail_integral(y),
            MeasureKind::PiMinus if y >= 0.0 => 1.0,
            MeasureKind::PiMinus => c * s.lower_tail_integral(y),
            MeasureKind::PiH { h } => {
                let y = y.clamp(0.0, h);
                c * ((s.upper_tail_integral(0.0) - s.upper_tail_integral(y))
                    + (s.lower_tail_integral(y - h) - s.lower_tail_integral(-h)))
            }
        }
    }

    /// Smallest y with P(Y <= y) >= u.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidArgument(format!(
                "quantile level {u} outside [0, 1]"
            )));
        }
        match &self.repr {
            Repr::Atoms(a) => {
                let i = a.cum.partition_point(|&c| c < u).min(a.units.len() - 1);
                Ok(a.units[i] as f64 * a.span)
            }
            Repr::Density { lo, hi } => Ok(self.invert(u, *lo, *hi)),
        }
    }

    fn invert(&self, u: f64, lo: f64, hi: f64) -> f64 {
        let (mut a, mut b) = (lo, hi);
        if !a.is_finite() {
            a = -1.0;
            while self.cdf(a) > u {
                a *= 2.0;
            }
        }
        if !b.is_finite() {
            b = 1.0;
            while self.cdf(b) < u {
                b *= 2.0;
            }
        }
        for _ in 0..400 {
            let m = 0.5 * (a + b);
            if b - a <= QUANTILE_TOL * m.abs().max(1.0) {
                break;
            }
            if self.cdf(m) < u {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// One draw: alias table on a lattice, inverse CDF otherwise.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.repr {
            Repr::Atoms(a) => a.units[a.alias.sample(rng)] as f64 * a.span,
            Repr::Density { lo, hi } => self.invert(open01(rng), *lo, *hi),
        }
    }

    /// `n` i.i.d. draws from one stream.
    pub fn sample(&self, stream: &RngStream, n: usize) -> Vec<f64> {
        let mut rng = stream.rng();
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Histogram geometry used to compare against this law: atoms on a
    /// lattice, otherwise bins of [`DEFAULT_BIN_WIDTH`] over the central
    /// 99.9% range of the law (at most [`MAX_DEFAULT_BINS`] bins).
    pub fn default_geometry(&self) -> Result<Geometry> {
        self.geometry_with_width(DEFAULT_BIN_WIDTH)
    }

    pub fn geometry_with_width(&self, width: f64) -> Result<Geometry> {
        match &self.repr {
            Repr::Atoms(a) => Ok(Geometry::lattice(a.span)),
            Repr::Density { .. } => match self.kind {
                MeasureKind::PiPlus => Geometry::binned(
                    width,
                    0.0,
                    self.quantile(0.999)?.min(width * MAX_DEFAULT_BINS),
                ),
                MeasureKind::PiMinus => {
                    let lo = self.quantile(0.001)?.max(-width * MAX_DEFAULT_BINS);
                    let bins = (-lo / width).ceil();
                    Geometry::binned(width, -bins * width, 0.0)
                }
                MeasureKind::PiH { h } => Geometry::binned(width, 0.0, h),
            },
        }
    }

    /// Masses of the buckets of `geometry`.
    pub fn masses(&self, geometry: &Geometry) -> Result<Masses> {
        let mut p = std::collections::BTreeMap::new();
        match (&self.repr, geometry) {
            (Repr::Atoms(a), Geometry::Lattice { span })
                if (span - a.span).abs() <= 1e-12 * a.span =>
            {
                for (&u, &q) in a.units.iter().zip(&a.probs) {
                    p.insert(u, q);
                }
            }
            (Repr::Atoms(a), Geometry::Binned { .. }) => {
                for (&u, &q) in a.units.iter().zip(&a.probs) {
                    *p.entry(geometry.index(u as f64 * a.span)?).or_insert(0.0) += q;
                }
            }
            (Repr::Density { .. }, Geometry::Binned { bins, .. }) => {
                let mut prev = 0.0;
                for i in -1..=(*bins as i64) {
                    let (_, b) = geometry.cell(i);
                    let c = if b.is_finite() { self.cdf(b) } else { 1.0 };
                    if c > prev {
                        p.insert(i, c - prev);
                    }
                    prev = prev.max(c);
                }
            }
            _ => return Err(Error::ModeMismatch),
        }
        Ok(Masses::new(*geometry, p))
    }

    /// Total mass: an exact sum on a lattice, quadrature of the density otherwise.
    pub fn total_mass(&self) -> Result<f64> {
        match &self.repr {
            Repr::Atoms(a) => Ok(rational_to_f64(&a.exact.iter().sum::<BigRational>())),
            Repr::Density { lo, hi } => {
                let f = |y: f64| self.density(y);
                // Split at zero so a density kink there does not slow the quadrature.
                let left = if *lo < 0.0 {
                    integrate(f, *lo, 0.0_f64.min(*hi), QUAD_TOL)?
                } else {
                    0.0
                };
                let right = if *hi > 0.0 {
                    integrate(f, 0.0_f64.max(*lo), *hi, QUAD_TOL)?
                } else {
                    0.0
                };
                Ok(left + right)
            }
        }
    }

    /// Writes `y,density`: one row per atom on a lattice, one per grid point
    /// otherwise (the grid is ignored for lattice laws).
    pub fn write_csv<W: Write>(&self, out: &mut W, grid: &[f64]) -> Result<()> {
        writeln!(out, "y,density")?;
        match self.atoms() {
            Some(atoms) => {
                for (y, _) in atoms {
                    writeln!(out, "{y},{}", self.density(y))?;
                }
            }
            None => {
                for &y in grid {
                    writeln!(out, "{y},{}", self.density(y))?;
                }
            }
        }
        Ok(())
    }
}

/// `c1 * span` in lattice units: 2 / E|X / span|.
fn lattice_c1_units(p: &LatticePmf) -> BigRational {
    BigRational::from_integer(BigInt::from(2)) / p.exact_mean_abs_units()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::increments::GaussComponent;

    fn four() -> IncrementSpec {
        IncrementSpec::lattice_uniform(1.0, &[-2.0, -1.0, 1.0, 2.0]).unwrap()
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn unit_steps_pi_plus_is_point_mass() {
        let m =
            InvariantMeasure::pi_plus(&IncrementSpec::lattice_uniform(1.0, &[-1.0, 1.0]).unwrap());
        assert_eq!(m.exact_atoms().unwrap(), vec![(0, r(1, 1))]);
        assert_eq!(m.normalizer(), 2.0);
    }

    #[test]
    fn four_point_measures() {
        let p = InvariantMeasure::pi_plus(&four());
        assert_eq!(p.exact_atoms().unwrap(), vec![(0, r(2, 3)), (1, r(1, 3))]);
        assert!((p.normalizer() - 4.0 / 3.0).abs() < 1e-15);
        let m = InvariantMeasure::pi_minus(&four());
        assert_eq!(m.exact_atoms().unwrap(), vec![(-2, r(1, 3)), (-1, r(2, 3))]);
        let h = InvariantMeasure::pi_h(&four(), 1.0).unwrap();
        assert_eq!(h.exact_atoms().unwrap(), vec![(0, r(1, 2)), (1, r(1, 2))]);
    }

    #[test]
    fn lattice_pi_h_smallest_interval() {
        let spec = IncrementSpec::lattice(
            LatticePmf::new(1.0, &[-3.0, 1.0, 3.0], &["1/3", "1/2", "1/6"]).unwrap(),
        );
        let h = InvariantMeasure::pi_h(&spec, 1.0).unwrap();
        let p = spec.as_lattice().unwrap();
        let w0 = 1.0 - p.prob_unit(-1) - p.prob_unit(0);
        let w1 = 1.0 - p.prob_unit(0) - p.prob_unit(1);
        assert!((h.mass(0.0) - w0 / (w0 + w1)).abs() < 1e-15);
        assert!((h.mass(1.0) - w1 / (w0 + w1)).abs() < 1e-15);
        assert!(matches!(
            InvariantMeasure::pi_h(&spec, 1.5),
            Err(Error::OffLattice(_))
        ));
    }

    #[test]
    fn non_unit_span_density_and_mass() {
        let spec = IncrementSpec::lattice_uniform(0.5, &[-1.0, -0.5, 0.5, 1.0]).unwrap();
        let p = InvariantMeasure::pi_plus(&spec);
        assert!((p.mass(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.mass(0.5) - 1.0 / 3.0).abs() < 1e-15);
        // density = c1 P(X > y), c1 = 2 / 0.75.
        assert!((p.density(0.0) - 2.0 / 0.75 * 0.5).abs() < 1e-12);
        assert_eq!(p.cdf(0.49), 2.0 / 3.0);
        assert_eq!(p.quantile(0.9).unwrap(), 0.5);
    }

    #[test]
    fn laplace_pi_plus_is_exponential() {
        let m = InvariantMeasure::pi_plus(&IncrementSpec::laplace(1.0).unwrap());
        for y in [0.0f64, 0.3, 1.0, 4.0] {
            assert!((m.density(y) - (-y).exp()).abs() < 1e-14);
            assert!((m.survival(y) - (-y).exp()).abs() < 1e-14);
        }
        assert!((m.quantile(0.5).unwrap() - 2f64.ln()).abs() < 1e-9);
        assert!((m.total_mass().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn laplace_pi_h_closed_form() {
        let m = InvariantMeasure::pi_h(&IncrementSpec::laplace(1.0).unwrap(), 1.0).unwrap();
        let e1 = (-1f64).exp();
        for y in [0.0f64, 0.25, 0.5, 1.0] {
            let want = ((-y).exp() + (y - 1.0).exp()) / (2.0 * (1.0 - e1));
            assert!((m.density(y) - want).abs() < 1e-12, "{y}");
        }
        assert!((m.cdf(1.0) - 1.0).abs() < 1e-12);
        assert!((m.total_mass().unwrap() - 1.0).abs() < 1e-9);
        let xs = m.sample(&RngStream::new(3, 0), 2000);
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn continuous_masses_sum_to_one() {
        let specs = [
            IncrementSpec::laplace(2.0).unwrap(),
            IncrementSpec::gauss_mix(vec![
                GaussComponent {
                    weight: 0.5,
                    mean: -1.0,
                    sd: 0.5,
                },
                GaussComponent {
                    weight: 0.5,
                    mean: 1.0,
                    sd: 1.0,
                },
            ])
            .unwrap(),
            IncrementSpec::symmetric_pareto(1.5).unwrap(),
        ];
        for s in &specs {
            for m in [
                InvariantMeasure::pi_plus(s),
                InvariantMeasure::pi_minus(s),
                InvariantMeasure::pi_h(s, 1.5).unwrap(),
            ] {
                assert!(
                    (m.total_mass().unwrap() - 1.0).abs() < 1e-9,
                    "{:?} {:?}",
                    s.family_name(),
                    m.kind()
                );
                let g = m.default_geometry().unwrap();
                assert!((m.masses(&g).unwrap().total() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let s = IncrementSpec::gauss_mix(vec![
            GaussComponent {
                weight: 0.3,
                mean: -2.0,
                sd: 1.0,
            },
            GaussComponent {
                weight: 0.7,
                mean: 6.0 / 7.0,
                sd: 0.7,
            },
        ])
        .unwrap();
        let m = InvariantMeasure::pi_minus(&s);
        for y in [-3.0, -1.0, -0.2] {
            let q = integrate(|t| m.density(t), f64::NEG_INFINITY, y, 1e-12).unwrap();
            assert!((q - m.cdf(y)).abs() < 1e-9, "{y}");
        }
        let h = InvariantMeasure::pi_h(&s, 2.0).unwrap();
        let q = integrate(|t| h.density(t), 0.0, 0.7, 1e-12).unwrap();
        assert!((q - h.cdf(0.7)).abs() < 1e-9);
    }

    #[test]
    fn laplace_sample_mean() {
        let m = InvariantMeasure::pi_plus(&IncrementSpec::laplace(1.0).unwrap());
        let xs = m.sample(&RngStream::new(11, 0), 200_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn bad_interval_rejected() {
        assert!(InvariantMeasure::pi_h(&four(), 0.0).is_err());
        assert!(InvariantMeasure::pi_h(&IncrementSpec::laplace(1.0).unwrap(), f64::NAN).is_err());
    }

    #[test]
    fn csv_rows_per_atom() {
        let mut buf = Vec::new();
        InvariantMeasure::pi_plus(&four())
            .write_csv(&mut buf, &[])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("y,density\n0,"));
    }
}
