//! Ladder-height representations: pi_plus as a convolution of ladder laws,
//! the Wiener-Hopf identity, and the overshoot law above a remote level.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::{rational_to_f64, to_units, IncrementSpec, LatticePmf};
use crate::rng::StreamRng;
use crate::stats::{bootstrap::sample_sd, resample_counts, Geometry, Masses};
use crate::walk::LadderSample;

/// Largest mass allowed outside a truncation window.
pub const TRUNCATION_LIMIT: f64 = 1e-3;

/// Counts of distinct `(H+, H-, H~-)` triples, in lattice units.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderCounts {
    span: f64,
    triples: Vec<((i64, i64, i64), u64)>,
}

impl LadderCounts {
    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn n(&self) -> u64 {
        self.triples.iter().map(|(_, c)| c).sum()
    }

    pub fn triples(&self) -> &[((i64, i64, i64), u64)] {
        &self.triples
    }

    /// Multinomial resample of the triples, keeping the total.
    pub fn resample(&self, rng: &mut StreamRng) -> LadderCounts {
        let counts: Vec<u64> = self.triples.iter().map(|(_, c)| *c).collect();
        let triples = self
            .triples
            .iter()
            .zip(resample_counts(&counts, rng))
            .map(|((t, _), c)| (*t, c))
            .collect();
        LadderCounts {
            span: self.span,
            triples,
        }
    }
}

/// Tabulates ladder samples of a lattice walk.
pub fn ladder_counts(samples: &[LadderSample], span: f64) -> Result<LadderCounts> {
    if samples.is_empty() {
        return Err(Error::Empty("ladder samples"));
    }
    let unit = |v: f64| to_units(v, span).ok_or(Error::OffLattice(v));
    let mut map: BTreeMap<(i64, i64, i64), u64> = BTreeMap::new();
    for s in samples {
        *map.entry((unit(s.h_plus)?, unit(s.h_minus)?, unit(s.h_tilde_minus)?))
            .or_insert(0) += 1;
    }
    Ok(LadderCounts {
        span,
        triples: map.into_iter().collect(),
    })
}

/// Marginal laws of the three first ladder heights on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLaws {
    pub h_plus: Masses,
    pub h_minus: Masses,
    pub h_tilde_minus: Masses,
}

impl LadderLaws {
    /// Laws given directly as masses on the same lattice geometry.
    pub fn new(h_plus: Masses, h_minus: Masses, h_tilde_minus: Masses) -> Result<Self> {
        if h_plus.geometry != h_minus.geometry || h_plus.geometry != h_tilde_minus.geometry {
            return Err(Error::ModeMismatch);
        }
        if !matches!(h_plus.geometry, Geometry::Lattice { .. }) {
            return Err(Error::NotLattice);
        }
        for m in [&h_plus, &h_minus, &h_tilde_minus] {
            if !(m.total() > 0.0) {
                return Err(Error::Empty("ladder law"));
            }
        }
        if h_plus.p.iter().any(|(&k, &p)| k <= 0 && p > 0.0)
            || h_minus.p.iter().any(|(&k, &p)| k >= 0 && p > 0.0)
            || h_tilde_minus.p.iter().any(|(&k, &p)| k > 0 && p > 0.0)
        {
            return Err(Error::InvalidArgument(
                "ladder heights have the wrong sign".into(),
            ));
        }
        Ok(Self {
            h_plus,
            h_minus,
            h_tilde_minus,
        })
    }

    /// Empirical marginals of tabulated samples.
    pub fn from_counts(counts: &LadderCounts) -> Result<Self> {
        let n = counts.n();
        if n == 0 {
            return Err(Error::Empty("ladder samples"));
        }
        let nf = n as f64;
        let (mut a, mut b, mut c) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        for &((hp, hm, ht), k) in &counts.triples {
            if k > 0 {
                *a.entry(hp).or_insert(0.0) += k as f64 / nf;
                *b.entry(hm).or_insert(0.0) += k as f64 / nf;
                *c.entry(ht).or_insert(0.0) += k as f64 / nf;
            }
        }
        let g = Geometry::lattice(counts.span);
        Self::new(Masses::new(g, a), Masses::new(g, b), Masses::new(g, c))
    }

    pub fn from_samples(samples: &[LadderSample], span: f64) -> Result<Self> {
        Self::from_counts(&ladder_counts(samples, span)?)
    }

    fn span(&self) -> f64 {
        match self.h_plus.geometry {
            Geometry::Lattice { span } => span,
            Geometry::Binned { .. } => unreachable!("checked in new"),
        }
    }

    /// `k -> P(H- <= k)` for `k` in `[min H-, -1]`.
    fn h_minus_cdf(&self) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        let Some((&lo, _)) = self.h_minus.p.iter().next() else {
            return out;
        };
        let mut acc = 0.0;
        for k in lo..0 {
            acc += self.h_minus.get(k);
            out.insert(k, acc);
        }
        out
    }
}

fn mean_abs_units(p: &LatticePmf) -> f64 {
    rational_to_f64(&p.exact_mean_abs_units())
}

fn check_span(p: &LatticePmf, laws: &LadderLaws) -> Result<()> {
    if (p.span() - laws.span()).abs() > 1e-12 * p.span() {
        return Err(Error::ModeMismatch);
    }
    Ok(())
}

/// Smallest prefix window holding 99.99% of `m`'s mass on `k >= 0`, doubled.
fn default_window(m: &BTreeMap<i64, f64>) -> i64 {
    let total: f64 = m.values().sum();
    let mut acc = 0.0;
    for (&k, &v) in m {
        acc += v;
        if acc >= 0.9999 * total {
            return 2 * (k + 1);
        }
    }
    m.keys().next_back().map_or(1, |&k| 2 * (k + 1))
}

/// pi_plus rebuilt from ladder laws:
/// `c1 P(H~- != 0) [P(H- <= y) span-counting on y < 0] * law(H+)`, restricted
/// to `y >= 0`.
///
/// `window` is the number of lattice points `0..window` kept; by default the
/// smallest window holding 99.99% of the mass, doubled. Fails with
/// `TruncationTooSmall` when more than [`TRUNCATION_LIMIT`] of the mass falls
/// outside the window.
pub fn pi_plus_via_ladder(
    laws: &LadderLaws,
    spec: &IncrementSpec,
    window: Option<i64>,
) -> Result<Masses> {
    let p = spec.as_lattice().ok_or(Error::NotLattice)?;
    check_span(p, laws)?;
    // c1 * span in units.
    let c1d = 2.0 / mean_abs_units(p);
    let nonzero = 1.0 - laws.h_tilde_minus.get(0);
    let g = laws.h_minus_cdf();
    let g_at = |k: i64| {
        if k >= 0 {
            0.0
        } else {
            g.range(..=k).next_back().map_or(0.0, |(_, &v)| v)
        }
    };
    let mut full: BTreeMap<i64, f64> = BTreeMap::new();
    let max_h = laws.h_plus.p.keys().next_back().copied().unwrap_or(0);
    for y in 0..max_h {
        let s: f64 = laws
            .h_plus
            .p
            .range(y + 1..)
            .map(|(&h, &ph)| ph * g_at(y - h))
            .sum();
        if s > 0.0 {
            full.insert(y, c1d * nonzero * s);
        }
    }
    let w = window.unwrap_or_else(|| default_window(&full));
    let total: f64 = full.values().sum();
    let outside: f64 = full.range(w..).map(|(_, v)| v).sum();
    if total > 0.0 && outside > TRUNCATION_LIMIT * total {
        return Err(Error::TruncationTooSmall {
            outside: outside / total,
        });
    }
    let kept = full.range(..w).map(|(&k, &v)| (k, v)).collect();
    Ok(Masses::new(laws.h_plus.geometry, kept))
}

/// TV distance between law(X) and `law(H+) + law(H~-) - law(H+) * law(H~-)`
/// over lattice points `|k| <= window` (all points by default).
pub fn wiener_hopf_residual(
    laws: &LadderLaws,
    spec: &IncrementSpec,
    window: Option<i64>,
) -> Result<f64> {
    let p = spec.as_lattice().ok_or(Error::NotLattice)?;
    check_span(p, laws)?;
    let mut rhs: BTreeMap<i64, f64> = BTreeMap::new();
    for (&k, &v) in laws.h_plus.p.iter().chain(laws.h_tilde_minus.p.iter()) {
        *rhs.entry(k).or_insert(0.0) += v;
    }
    for (&a, &pa) in &laws.h_plus.p {
        for (&b, &pb) in &laws.h_tilde_minus.p {
            *rhs.entry(a + b).or_insert(0.0) -= pa * pb;
        }
    }
    for (&u, &q) in p.units().iter().zip(p.probs()) {
        *rhs.entry(u).or_insert(0.0) -= q;
    }
    let w = window.unwrap_or(i64::MAX);
    let (mut inside, mut outside) = (0.0, 0.0);
    for (&k, &v) in &rhs {
        if k.abs() <= w {
            inside += v.abs();
        } else {
            outside += v.abs();
        }
    }
    if outside > TRUNCATION_LIMIT {
        return Err(Error::TruncationTooSmall { outside });
    }
    Ok(0.5 * inside)
}

/// Limit law of the first down-crossing overshoot from a remote start:
/// `P(H- <= y) span-counting / (-E H-)` on `y < 0`.
pub fn far_level_down_limit(laws: &LadderLaws) -> Result<Masses> {
    let mean_units: f64 = laws
        .h_minus
        .p
        .iter()
        .map(|(&k, &v)| k as f64 * v)
        .sum::<f64>()
        / laws.h_minus.total();
    if !(mean_units < 0.0) {
        return Err(Error::Empty("descending ladder law"));
    }
    let total = laws.h_minus.total();
    let p = laws
        .h_minus_cdf()
        .into_iter()
        .map(|(k, v)| (k, v / total / -mean_units))
        .collect();
    Ok(Masses::new(laws.h_minus.geometry, p))
}

/// Both sides of `P(R- + H+ >= 0) = -1 / (c1 E H~-)`, where R- has the remote
/// down-crossing overshoot law and is independent of H+.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    /// Bootstrap standard error of `diff`.
    pub se: f64,
    pub n: u64,
}

fn normalization_sides(laws: &LadderLaws, p: &LatticePmf) -> Result<(f64, f64)> {
    let r = far_level_down_limit(laws)?;
    let hp_total = laws.h_plus.total();
    let lhs: f64 =
        r.p.iter()
            .map(|(&k, &v)| v * laws.h_plus.p.range(-k..).map(|(_, q)| q).sum::<f64>() / hp_total)
            .sum();
    let e_tilde: f64 = laws
        .h_tilde_minus
        .p
        .iter()
        .map(|(&k, &v)| k as f64 * v)
        .sum::<f64>()
        / laws.h_tilde_minus.total();
    // -1 / (c1 E H~-) with c1 = 2 / (span m) and E H~- = span e_tilde.
    let rhs = -mean_abs_units(p) / (2.0 * e_tilde);
    Ok((lhs, rhs))
}

/// Evaluates both sides of the normalization identity on tabulated ladder
/// samples, with a multinomial bootstrap of the difference.
pub fn ladder_normalization_check(
    counts: &LadderCounts,
    spec: &IncrementSpec,
    resamples: usize,
    rng: &mut StreamRng,
) -> Result<NormalizationReport> {
    let p = spec.as_lattice().ok_or(Error::NotLattice)?;
    let laws = LadderLaws::from_counts(counts)?;
    check_span(p, &laws)?;
    let (lhs, rhs) = normalization_sides(&laws, p)?;
    let mut diffs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let l = LadderLaws::from_counts(&counts.resample(rng))?;
        let (a, b) = normalization_sides(&l, p)?;
        diffs.push(a - b);
    }
    Ok(NormalizationReport {
        lhs,
        rhs,
        diff: lhs - rhs,
        se: sample_sd(&diffs),
        n: counts.n(),
    })
}

/// Bootstrap standard error of any functional of the ladder laws.
pub fn ladder_bootstrap_se<F>(
    counts: &LadderCounts,
    resamples: usize,
    rng: &mut StreamRng,
    f: F,
) -> Result<f64>
where
    F: Fn(&LadderLaws) -> Result<f64>,
{
    let mut vals = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        vals.push(f(&LadderLaws::from_counts(&counts.resample(rng))?)?);
    }
    Ok(sample_sd(&vals))
}
