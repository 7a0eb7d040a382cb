//! Zero-mean increment laws.
//!
//! Four families are supported: finite lattice laws, Laplace, finite Gaussian
//! mixtures and a symmetric Pareto-tailed law in the domain of attraction of
//! a symmetric stable law with index `alpha` in (1, 2). Every family has
//! closed-form tails and tail integrals, which the invariant measures and
//! the exact kernels are built from.

use std::fmt;

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open01, RngStream};

const PROB_TOL: f64 = 1e-12;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A finite law on `span * Z`.
#[derive(Clone)]
pub struct LatticePmf {
    span: f64,
    /// Support in units of `span`, strictly increasing.
    units: Vec<i64>,
    probs: Vec<f64>,
    exact: Vec<BigRational>,
    text: Vec<String>,
    alias: WeightedAliasIndex<f64>,
}

impl fmt::Debug for LatticePmf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticePmf")
            .field("span", &self.span)
            .field("units", &self.units)
            .field("probs", &self.probs)
            .finish()
    }
}

impl PartialEq for LatticePmf {
    fn eq(&self, other: &Self) -> bool {
        self.span == other.span && self.units == other.units && self.exact == other.exact
    }
}

impl LatticePmf {
    /// Builds a lattice law from support points and probability strings.
    ///
    /// Probabilities are parsed exactly: decimal (`"0.25"`, `"1e-3"`) and
    /// fraction (`"1/3"`) notations are accepted. Zero-probability atoms are
    /// dropped.
    pub fn new<S: AsRef<str>>(span: f64, support: &[f64], probs: &[S]) -> Result<Self> {
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "span_d must be positive, got {span}"
            )));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidSpec(
                "support and probs differ in length".into(),
            ));
        }
        let mut atoms: Vec<(i64, BigRational, String)> = Vec::with_capacity(support.len());
        for (&x, p) in support.iter().zip(probs) {
            let units = to_units(x, span).ok_or_else(|| {
                Error::InvalidSpec(format!("{x} is not a multiple of span {span}"))
            })?;
            let q = parse_exact(p.as_ref())?;
            if q.is_negative() {
                return Err(Error::InvalidSpec(format!(
                    "negative probability {}",
                    p.as_ref()
                )));
            }
            if q.is_zero() {
                continue;
            }
            atoms.push((units, q, p.as_ref().trim().to_string()));
        }
        atoms.sort_by_key(|a| a.0);
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidSpec("duplicate support point".into()));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidSpec("empty support".into()));
        }

        let probs_f: Vec<f64> = atoms
            .iter()
            .map(|a| a.1.to_f64().unwrap_or(f64::NAN))
            .collect();
        let total: f64 = probs_f.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidSpec(format!("probabilities sum to {total}")));
        }
        let mean: f64 = atoms
            .iter()
            .zip(&probs_f)
            .map(|(a, p)| a.0 as f64 * span * p)
            .sum();
        if mean.abs() > PROB_TOL {
            return Err(Error::InvalidSpec(format!("mean is {mean}, not zero")));
        }
        let g = atoms.iter().fold(0i64, |g, a| gcd(g, a.0.abs()));
        if g != 1 {
            return Err(Error::InvalidSpec(format!(
                "declared span {span} is not the span of the law (support gcd {g})"
            )));
        }

        // Exact probabilities are renormalized so exact routines see a
        // probability law even when decimal inputs sum to 1 only within 1e-12.
        let exact_total: BigRational = atoms.iter().map(|a| a.1.clone()).sum();
        let exact: Vec<BigRational> = atoms.iter().map(|a| &a.1 / &exact_total).collect();
        let alias = WeightedAliasIndex::new(probs_f.clone())
            .map_err(|e| Error::InvalidSpec(format!("alias table: {e}")))?;
        Ok(Self {
            span,
            units: atoms.iter().map(|a| a.0).collect(),
            probs: probs_f,
            exact,
            text: atoms.into_iter().map(|a| a.2).collect(),
            alias,
        })
    }

    /// Uniform law on the given support points.
    pub fn uniform(span: f64, support: &[f64]) -> Result<Self> {
        let n = support.len();
        let p = format!("1/{n}");
        Self::new(span, support, &vec![p; n])
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn units(&self) -> &[i64] {
        &self.units
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn exact_probs(&self) -> &[BigRational] {
        &self.exact
    }

    pub fn points(&self) -> Vec<f64> {
        self.units.iter().map(|&u| u as f64 * self.span).collect()
    }

    pub fn max_unit(&self) -> i64 {
        *self.units.last().expect("nonempty support")
    }

    pub fn min_unit(&self) -> i64 {
        self.units[0]
    }

    /// P(X = u * span).
    pub fn prob_unit(&self, u: i64) -> f64 {
        match self.units.binary_search(&u) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn exact_prob_unit(&self, u: i64) -> BigRational {
        match self.units.binary_search(&u) {
            Ok(i) => self.exact[i].clone(),
            Err(_) => BigRational::zero(),
        }
    }

    /// P(X > u * span).
    pub fn tail_above_unit(&self, u: i64) -> f64 {
        let i = self.units.partition_point(|&v| v <= u);
        self.probs[i..].iter().sum()
    }

    /// P(X <= u * span).
    pub fn tail_at_most_unit(&self, u: i64) -> f64 {
        let i = self.units.partition_point(|&v| v <= u);
        self.probs[..i].iter().sum()
    }

    pub fn exact_tail_above_unit(&self, u: i64) -> BigRational {
        let i = self.units.partition_point(|&v| v <= u);
        self.exact[i..].iter().cloned().sum()
    }

    pub fn exact_tail_at_most_unit(&self, u: i64) -> BigRational {
        let i = self.units.partition_point(|&v| v <= u);
        self.exact[..i].iter().cloned().sum()
    }

    /// E|X| / span as an exact rational.
    pub fn exact_mean_abs_units(&self) -> BigRational {
        self.units
            .iter()
            .zip(&self.exact)
            .map(|(&u, p)| p * BigRational::from_integer(BigInt::from(u.abs())))
            .sum()
    }

    #[inline]
    pub(crate) fn draw_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.units[self.alias.sample(rng)]
    }
}

/// One component of a Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    LatticePmf(LatticePmf),
    Laplace { scale: f64 },
    GaussMix(Vec<GaussComponent>),
    SymmetricPareto { alpha: f64 },
}

/// A validated zero-mean increment law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct IncrementSpec {
    family: Family,
    gauss_cum: Vec<f64>,
}

impl IncrementSpec {
    pub fn lattice(pmf: LatticePmf) -> Self {
        Self {
            family: Family::LatticePmf(pmf),
            gauss_cum: Vec::new(),
        }
    }

    /// Uniform law on `support` (a convenience used throughout the tests).
    pub fn lattice_uniform(span: f64, support: &[f64]) -> Result<Self> {
        Ok(Self::lattice(LatticePmf::uniform(span, support)?))
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "Laplace scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            family: Family::Laplace { scale },
            gauss_cum: Vec::new(),
        })
    }

    pub fn gauss_mix(components: Vec<GaussComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidSpec(
                "GaussMix needs at least one component".into(),
            ));
        }
        for c in &components {
            if !(c.weight >= 0.0 && c.sd > 0.0 && c.mean.is_finite() && c.sd.is_finite()) {
                return Err(Error::InvalidSpec(format!("bad GaussMix component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidSpec(format!(
                "GaussMix weights sum to {total}"
            )));
        }
        let mean: f64 = components.iter().map(|c| c.weight * c.mean).sum();
        if mean.abs() > PROB_TOL {
            return Err(Error::InvalidSpec(format!(
                "GaussMix mean is {mean}, not zero"
            )));
        }
        let mut acc = 0.0;
        let gauss_cum = components
            .iter()
            .map(|c| {
                acc += c.weight;
                acc
            })
            .collect();
        Ok(Self {
            family: Family::GaussMix(components),
            gauss_cum,
        })
    }

    pub fn symmetric_pareto(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::InvalidSpec(format!(
                "stability index must lie in (1,2), got {alpha}"
            )));
        }
        Ok(Self {
            family: Family::SymmetricPareto { alpha },
            gauss_cum: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::LatticePmf(_) => "LatticePmf",
            Family::Laplace { .. } => "Laplace",
            Family::GaussMix(_) => "GaussMix",
            Family::SymmetricPareto { .. } => "SymmetricPareto",
        }
    }

    pub fn as_lattice(&self) -> Option<&LatticePmf> {
        match &self.family {
            Family::LatticePmf(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_lattice(&self) -> bool {
        self.as_lattice().is_some()
    }

    /// The span d; zero for the continuous families.
    pub fn span(&self) -> f64 {
        self.as_lattice().map_or(0.0, |p| p.span)
    }

    /// sup of the support (M+).
    pub fn sup_support(&self) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p.max_unit() as f64 * p.span,
            _ => f64::INFINITY,
        }
    }

    /// inf of the support (M-).
    pub fn inf_support(&self) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p.min_unit() as f64 * p.span,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn has_finite_variance(&self) -> bool {
        !matches!(self.family, Family::SymmetricPareto { .. })
    }

    /// Stability index for the heavy-tailed family.
    pub fn stable_index(&self) -> Option<f64> {
        match self.family {
            Family::SymmetricPareto { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Positivity parameter of the limiting stable law (symmetric, so 1/2).
    pub fn positivity(&self) -> Option<f64> {
        self.stable_index().map(|_| 0.5)
    }

    pub fn variance(&self) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p
                .units
                .iter()
                .zip(&p.probs)
                .map(|(&u, q)| q * (u as f64 * p.span).powi(2))
                .sum(),
            Family::Laplace { scale } => 2.0 * scale * scale,
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean))
                .sum(),
            Family::SymmetricPareto { .. } => f64::INFINITY,
        }
    }

    /// E|X|.
    pub fn mean_abs(&self) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p
                .units
                .iter()
                .zip(&p.probs)
                .map(|(&u, q)| q * (u as f64 * p.span).abs())
                .sum(),
            Family::Laplace { scale } => *scale,
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| {
                    let z = c.mean / c.sd;
                    c.weight
                        * (c.sd * 2.0 * FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
                            + c.mean * (1.0 - 2.0 * normal_sf(z)))
                })
                .sum(),
            Family::SymmetricPareto { alpha } => 1.0 / (alpha - 1.0),
        }
    }

    /// P(X > x).
    pub fn tail_upper(&self, x: f64) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p.tail_above_unit(floor_units(x, p.span)),
            Family::Laplace { scale } => {
                if x >= 0.0 {
                    0.5 * (-x / scale).exp()
                } else {
                    1.0 - 0.5 * (x / scale).exp()
                }
            }
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| c.weight * normal_sf((x - c.mean) / c.sd))
                .sum(),
            Family::SymmetricPareto { alpha } => {
                if x >= 0.0 {
                    0.5 * (1.0 + x).powf(-alpha)
                } else {
                    1.0 - 0.5 * (1.0 - x).powf(-alpha)
                }
            }
        }
    }

    /// P(X <= x).
    pub fn tail_lower(&self, x: f64) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p.tail_at_most_unit(floor_units(x, p.span)),
            Family::Laplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| c.weight * normal_sf((c.mean - x) / c.sd))
                .sum(),
            Family::SymmetricPareto { alpha } => {
                if x < 0.0 {
                    0.5 * (1.0 - x).powf(-alpha)
                } else {
                    1.0 - 0.5 * (1.0 + x).powf(-alpha)
                }
            }
        }
    }

    /// Integral of P(X > s) over s in [t, inf), continuous families only.
    pub(crate) fn upper_tail_integral(&self, t: f64) -> f64 {
        match &self.family {
            Family::LatticePmf(_) => unreachable!("lattice tails are summed, not integrated"),
            Family::Laplace { scale } => {
                if t >= 0.0 {
                    0.5 * scale * (-t / scale).exp()
                } else {
                    -t + 0.5 * scale * (t / scale).exp()
                }
            }
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| c.weight * c.sd * psi((t - c.mean) / c.sd))
                .sum(),
            Family::SymmetricPareto { alpha } => {
                let k = 0.5 / (alpha - 1.0);
                if t >= 0.0 {
                    k * (1.0 + t).powf(1.0 - alpha)
                } else {
                    -t + k * (1.0 - t).powf(1.0 - alpha)
                }
            }
        }
    }

    /// Integral of P(X <= s) over s in (-inf, t], continuous families only.
    pub(crate) fn lower_tail_integral(&self, t: f64) -> f64 {
        match &self.family {
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| c.weight * c.sd * psi((c.mean - t) / c.sd))
                .sum(),
            // The remaining continuous families are symmetric.
            _ => self.upper_tail_integral(-t),
        }
    }

    /// Density of X at x, continuous families only.
    #[cfg(test)]
    pub(crate) fn density(&self, x: f64) -> f64 {
        match &self.family {
            Family::LatticePmf(_) => unreachable!("lattice laws have no density"),
            Family::Laplace { scale } => 0.5 / scale * (-x.abs() / scale).exp(),
            Family::GaussMix(cs) => cs
                .iter()
                .map(|c| {
                    let z = (x - c.mean) / c.sd;
                    c.weight * FRAC_1_SQRT_2PI / c.sd * (-0.5 * z * z).exp()
                })
                .sum(),
            Family::SymmetricPareto { alpha } => 0.5 * alpha * (1.0 + x.abs()).powf(-alpha - 1.0),
        }
    }

    /// One increment.
    #[inline]
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::LatticePmf(p) => p.draw_unit(rng) as f64 * p.span,
            Family::Laplace { scale } => draw_laplace(*scale, rng),
            Family::GaussMix(cs) => draw_gauss_mix(cs, &self.gauss_cum, rng),
            Family::SymmetricPareto { alpha } => draw_pareto(-1.0 / alpha, rng),
        }
    }

    pub(crate) fn gauss_cum(&self) -> &[f64] {
        &self.gauss_cum
    }

    /// `n` i.i.d. increments from the given stream.
    pub fn sample(&self, stream: &RngStream, n: usize) -> Vec<f64> {
        let mut rng = stream.rng();
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Converts a real starting point to lattice units, rejecting points off
    /// the state lattice.
    pub fn lattice_units(&self, x: f64) -> Result<i64> {
        let p = self.as_lattice().ok_or(Error::NotLattice)?;
        to_units(x, p.span).ok_or(Error::OffLattice(x))
    }
}

#[inline]
pub(crate) fn draw_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let bits = rng.next_u64();
    let u = ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    let e = -scale * u.ln();
    if bits & 1 == 0 {
        e
    } else {
        -e
    }
}

/// Symmetric Pareto by inverse CDF: sign * (U^(-1/alpha) - 1).
#[inline]
pub(crate) fn draw_pareto<R: Rng + ?Sized>(neg_inv_alpha: f64, rng: &mut R) -> f64 {
    let bits = rng.next_u64();
    let u = ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    let m = u.powf(neg_inv_alpha) - 1.0;
    if bits & 1 == 0 {
        m
    } else {
        -m
    }
}

#[inline]
pub(crate) fn draw_gauss_mix<R: Rng + ?Sized>(
    cs: &[GaussComponent],
    cum: &[f64],
    rng: &mut R,
) -> f64 {
    let c = if cs.len() == 1 {
        &cs[0]
    } else {
        let u = open01(rng) * cum[cum.len() - 1];
        let i = cum.partition_point(|&w| w < u).min(cs.len() - 1);
        &cs[i]
    };
    let z: f64 = StandardNormal.sample(rng);
    c.mean + c.sd * z
}

/// Standard normal survival function.
pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

/// psi(z) = phi(z) - z * sf(z), the antiderivative of -sf.
fn psi(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() - z * normal_sf(z)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// x / span rounded to an integer when x sits on the lattice.
pub(crate) fn to_units(x: f64, span: f64) -> Option<i64> {
    let t = x / span;
    let r = t.round();
    if !r.is_finite() || (t - r).abs() > 1e-9 * r.abs().max(1.0) {
        return None;
    }
    Some(r as i64)
}

/// Largest lattice unit u with u * span <= x, snapping x onto nearby atoms.
pub(crate) fn floor_units(x: f64, span: f64) -> i64 {
    if x == f64::INFINITY {
        return i64::MAX / 2;
    }
    if x == f64::NEG_INFINITY {
        return i64::MIN / 2;
    }
    let t = x / span;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        t.floor() as i64
    }
}

/// Parses `"0.25"`, `"-1.5e-3"`, `"3"` or `"1/3"` into an exact rational.
pub fn parse_exact(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::InvalidSpec(format!("cannot parse probability {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let all: BigInt = format!("{int_part}{frac_part}0")
        .parse::<BigInt>()
        .map_err(|_| bad())?
        / 10;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut q = BigRational::from_integer(all);
    if scale >= 0 {
        q *= BigRational::from_integer(num::pow(ten, scale as usize));
    } else {
        q /= BigRational::from_integer(num::pow(ten, (-scale) as usize));
    }
    if neg {
        q = -q;
    }
    Ok(q)
}

/// Exact rational to f64.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ProbRepr {
    Text(String),
    Number(f64),
}

impl ProbRepr {
    fn text(&self) -> String {
        match self {
            ProbRepr::Text(s) => s.clone(),
            // Shortest round-trip decimal, then parsed exactly.
            ProbRepr::Number(x) => format!("{x}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
enum RawSpec {
    LatticePmf {
        span_d: f64,
        support: Vec<f64>,
        probs: Vec<ProbRepr>,
    },
    Laplace {
        scale: f64,
    },
    GaussMix {
        components: Vec<GaussComponent>,
    },
    SymmetricPareto {
        alpha: f64,
    },
}

impl TryFrom<RawSpec> for IncrementSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        match raw {
            RawSpec::LatticePmf {
                span_d,
                support,
                probs,
            } => {
                let texts: Vec<String> = probs.iter().map(ProbRepr::text).collect();
                Ok(IncrementSpec::lattice(LatticePmf::new(
                    span_d, &support, &texts,
                )?))
            }
            RawSpec::Laplace { scale } => IncrementSpec::laplace(scale),
            RawSpec::GaussMix { components } => IncrementSpec::gauss_mix(components),
            RawSpec::SymmetricPareto { alpha } => IncrementSpec::symmetric_pareto(alpha),
        }
    }
}

impl From<IncrementSpec> for RawSpec {
    fn from(spec: IncrementSpec) -> Self {
        match spec.family {
            Family::LatticePmf(p) => RawSpec::LatticePmf {
                span_d: p.span,
                support: p.points(),
                probs: p.text.into_iter().map(ProbRepr::Text).collect(),
            },
            Family::Laplace { scale } => RawSpec::Laplace { scale },
            Family::GaussMix(components) => RawSpec::GaussMix { components },
            Family::SymmetricPareto { alpha } => RawSpec::SymmetricPareto { alpha },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn pm1() -> IncrementSpec {
        IncrementSpec::lattice_uniform(1.0, &[-1.0, 1.0]).unwrap()
    }

    fn pm2() -> IncrementSpec {
        IncrementSpec::lattice_uniform(1.0, &[-2.0, -1.0, 1.0, 2.0]).unwrap()
    }

    fn all_specs() -> Vec<IncrementSpec> {
        vec![
            pm1(),
            pm2(),
            IncrementSpec::laplace(1.0).unwrap(),
            IncrementSpec::laplace(2.5).unwrap(),
            IncrementSpec::gauss_mix(vec![
                GaussComponent {
                    weight: 0.25,
                    mean: -1.5,
                    sd: 0.5,
                },
                GaussComponent {
                    weight: 0.75,
                    mean: 0.5,
                    sd: 1.0,
                },
            ])
            .unwrap(),
            IncrementSpec::symmetric_pareto(1.5).unwrap(),
        ]
    }

    #[test]
    fn mean_abs_examples() {
        assert_eq!(pm1().mean_abs(), 1.0);
        assert!((pm2().mean_abs() - 1.5).abs() < 1e-15);
        assert_eq!(IncrementSpec::laplace(1.0).unwrap().mean_abs(), 1.0);
    }

    #[test]
    fn mean_abs_matches_quadrature() {
        for spec in all_specs().into_iter().filter(|s| !s.is_lattice()) {
            let q = integrate(
                |x| x.abs() * spec.density(x),
                f64::NEG_INFINITY,
                f64::INFINITY,
                1e-11,
            )
            .unwrap();
            let rel = (q - spec.mean_abs()).abs() / spec.mean_abs();
            assert!(
                rel < 1e-10,
                "{}: quadrature {q} vs {}",
                spec.family_name(),
                spec.mean_abs()
            );
        }
    }

    #[test]
    fn tail_examples() {
        assert_eq!(IncrementSpec::laplace(1.0).unwrap().tail_upper(0.0), 0.5);
        assert_eq!(pm2().tail_upper(1.0), 0.25);
        let p = IncrementSpec::symmetric_pareto(1.5)
            .unwrap()
            .tail_upper(1.0);
        assert!((p - 0.5 * 2f64.powf(-1.5)).abs() < 1e-15);
        assert!((p - 0.17678).abs() < 1e-5);
    }

    #[test]
    fn tails_complement_and_monotone() {
        let probes: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        for spec in all_specs() {
            let mut last = 1.0;
            for &x in &probes {
                let up = spec.tail_upper(x);
                assert!((up + spec.tail_lower(x) - 1.0).abs() < 1e-14, "{x}");
                assert!(up <= last + 1e-15);
                last = up;
            }
            assert!(spec.tail_upper(1e9) < 1e-6);
        }
    }

    #[test]
    fn tail_integrals_match_quadrature() {
        for spec in all_specs().into_iter().filter(|s| !s.is_lattice()) {
            for &t in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
                let q = integrate(|s| spec.tail_upper(s), t, f64::INFINITY, 1e-12).unwrap();
                let c = spec.upper_tail_integral(t);
                assert!(
                    (q - c).abs() < 1e-9 * c.max(1.0),
                    "{} upper at {t}: {q} vs {c}",
                    spec.family_name()
                );
                let q = integrate(|s| spec.tail_lower(s), f64::NEG_INFINITY, t, 1e-12).unwrap();
                let c = spec.lower_tail_integral(t);
                assert!(
                    (q - c).abs() < 1e-9 * c.max(1.0),
                    "{} lower at {t}: {q} vs {c}",
                    spec.family_name()
                );
            }
        }
    }

    #[test]
    fn half_mean_abs_is_tail_integral_at_zero() {
        for spec in all_specs().into_iter().filter(|s| !s.is_lattice()) {
            let lhs = spec.upper_tail_integral(0.0) + spec.lower_tail_integral(0.0);
            assert!((lhs - spec.mean_abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_empty_and_deterministic() {
        let s = pm2();
        assert!(s.sample(&RngStream::new(1, 0), 0).is_empty());
        assert_eq!(
            s.sample(&RngStream::new(1, 2), 100),
            s.sample(&RngStream::new(1, 2), 100)
        );
    }

    #[test]
    fn lattice_samples_are_atoms() {
        for x in pm2().sample(&RngStream::new(3, 0), 10_000) {
            assert!([-2.0, -1.0, 1.0, 2.0].contains(&x));
        }
    }

    #[test]
    fn lattice_pm1_sample_mean() {
        let n = 1_000_000;
        let xs = pm1().sample(&RngStream::new(11, 0), n);
        let m = xs.iter().sum::<f64>() / n as f64;
        assert!(m.abs() < 4e-3, "{m}");
    }

    #[test]
    fn pareto_sample_tail() {
        let n = 1_000_000;
        let xs = IncrementSpec::symmetric_pareto(1.5)
            .unwrap()
            .sample(&RngStream::new(5, 0), n);
        let f = xs.iter().filter(|&&x| x > 1.0).count() as f64 / n as f64;
        assert!((f - 0.17678).abs() < 0.0016, "{f}");
    }

    #[test]
    fn empirical_tails_converge() {
        let n = 200_000;
        for (k, spec) in all_specs().into_iter().enumerate() {
            let xs = spec.sample(&RngStream::new(17, k as u64), n);
            for i in 0..10 {
                let x = -2.25 + 0.5 * i as f64;
                let p = spec.tail_upper(x);
                let emp = xs.iter().filter(|&&v| v > x).count() as f64 / n as f64;
                let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12;
                assert!(
                    (emp - p).abs() <= band,
                    "{} at {x}: {emp} vs {p}",
                    spec.family_name()
                );
            }
        }
    }

    #[test]
    fn sample_means_near_zero() {
        let n = 400_000;
        for (k, spec) in all_specs()
            .into_iter()
            .enumerate()
            .filter(|(_, s)| s.has_finite_variance())
        {
            let xs = spec.sample(&RngStream::new(23, k as u64), n);
            let m = xs.iter().sum::<f64>() / n as f64;
            assert!(
                m.abs() < 4.0 * (spec.variance() / n as f64).sqrt(),
                "{}",
                spec.family_name()
            );
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(LatticePmf::new(1.0, &[-1.0, 2.0], &["0.5", "0.5"]).is_err());
        assert!(LatticePmf::new(1.0, &[-1.0, 1.0], &["0.5", "0.6"]).is_err());
        assert!(LatticePmf::new(1.0, &[-1.0, 1.5], &["0.6", "0.4"]).is_err());
        assert!(LatticePmf::new(1.0, &[-2.0, 2.0], &["0.5", "0.5"]).is_err());
        assert!(LatticePmf::new(1.0, &[-1.0, 1.0], &["-0.5", "1.5"]).is_err());
        assert!(IncrementSpec::laplace(0.0).is_err());
        assert!(IncrementSpec::symmetric_pareto(2.0).is_err());
        assert!(IncrementSpec::symmetric_pareto(1.0).is_err());
        assert!(IncrementSpec::gauss_mix(vec![GaussComponent {
            weight: 1.0,
            mean: 0.3,
            sd: 1.0
        }])
        .is_err());
    }

    #[test]
    fn exact_parsing() {
        assert_eq!(
            parse_exact("0.25").unwrap(),
            BigRational::new(1.into(), 4.into())
        );
        assert_eq!(
            parse_exact("1/3").unwrap(),
            BigRational::new(1.into(), 3.into())
        );
        assert_eq!(
            parse_exact("-1.5e-1").unwrap(),
            BigRational::new((-3).into(), 20.into())
        );
        assert_eq!(
            parse_exact("2").unwrap(),
            BigRational::from_integer(2.into())
        );
        assert!(parse_exact("abc").is_err());
        assert!(parse_exact("1/0").is_err());
    }

    #[test]
    fn asymmetric_three_atom_law_is_valid() {
        let p = LatticePmf::new(1.0, &[-3.0, 1.0, 3.0], &["1/3", "1/2", "1/6"]).unwrap();
        let spec = IncrementSpec::lattice(p);
        assert!((spec.mean_abs() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        for spec in all_specs() {
            let text = spec.to_json();
            let back = IncrementSpec::from_json(&text).unwrap();
            assert_eq!(spec, back, "{text}");
        }
        let s = IncrementSpec::from_json(
            r#"{"family":"LatticePmf","span_d":0.5,"support":[-1,-0.5,0.5,1],"probs":["0.25","0.25",0.25,"1/4"]}"#,
        )
        .unwrap();
        assert_eq!(s.span(), 0.5);
        assert_eq!(s.as_lattice().unwrap().units(), &[-2, -1, 1, 2]);
        assert!(IncrementSpec::from_json(r#"{"family":"Cauchy"}"#).is_err());
    }

    #[test]
    fn off_lattice_start_rejected() {
        assert_eq!(pm2().lattice_units(3.0).unwrap(), 3);
        assert!(matches!(
            pm2().lattice_units(0.5),
            Err(Error::OffLattice(_))
        ));
    }
}
