//! Trajectory engine.
//!
//! A [`Walker`] advances a random walk until it leaves a one- or two-sided
//! region. Far from the boundary it jumps over whole blocks of steps at once:
//!
//! * bounded lattice laws skip `k` steps when `k` maximal jumps cannot reach
//!   the boundary, which is exact;
//! * laws with a finite moment generating function skip `k` steps when Doob's
//!   maximal inequality for the exponential martingale bounds the chance of
//!   reaching the boundary inside the block by `SKIP_EPSILON`.
//!
//! The sum over a skipped block is drawn from its exact law (multinomial
//! counts on a lattice, a gamma variance mixture for Laplace, a normal
//! mixture for GaussMix). Crossings always happen on single steps, so the
//! pre-crossing position is exact. Heavy-tailed laws never skip.

use std::fmt::Debug;
use std::ops::{Add, Sub};

use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::increments::{
    draw_gauss_mix, draw_laplace, draw_pareto, Family, IncrementSpec, LatticePmf,
};
use crate::rng::StreamRng;

/// Per-block bound on the probability that a skipped block would have
/// touched the boundary.
pub const SKIP_EPSILON: f64 = 1e-15;

/// Longest block ever skipped.
const MAX_BLOCK_LOG2: u32 = 40;

/// Plain steps taken between skip tests near a boundary.
const BURST: u64 = 16;

/// Default guard on work units (single steps plus skipped blocks).
pub const DEFAULT_GUARD: u64 = 1_000_000_000;

/// Position on the state group: integer units of the span, or a real.
pub trait Position:
    Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Debug + Send + Sync
{
    const ZERO: Self;
    fn as_f64(self) -> f64;
}

impl Position for i64 {
    const ZERO: Self = 0;
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Position for f64 {
    const ZERO: Self = 0.0;
    fn as_f64(self) -> f64 {
        self
    }
}

/// A one-sided boundary. The walk stops on the first step satisfying it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level<P> {
    /// Stop when `S >= a`.
    AtLeast(P),
    /// Stop when `S > a`.
    Above(P),
    /// Stop when `S < b`.
    Below(P),
    /// Stop when `S <= b`.
    AtMost(P),
}

impl<P: Position> Level<P> {
    #[inline]
    pub fn hit(self, s: P) -> bool {
        match self {
            Level::AtLeast(a) => s >= a,
            Level::Above(a) => s > a,
            Level::Below(b) => s < b,
            Level::AtMost(b) => s <= b,
        }
    }

    fn is_upper(self) -> bool {
        matches!(self, Level::AtLeast(_) | Level::Above(_))
    }
}

/// Step law as seen by the engine.
pub trait StepLaw: Send + Sync {
    type Pos: Position;

    fn step(&self, rng: &mut StreamRng) -> Self::Pos;

    /// Sum of `k` increments.
    fn block(&self, k: u64, rng: &mut StreamRng) -> Self::Pos;

    /// Largest block that provably (or up to `SKIP_EPSILON`) keeps the walk
    /// inside the region. Returns at most 1 when no skip is possible.
    fn max_block(
        &self,
        s: Self::Pos,
        upper: Option<Level<Self::Pos>>,
        lower: Option<Level<Self::Pos>>,
    ) -> u64;

    /// Real value of a position.
    fn real(&self, p: Self::Pos) -> f64;
}

/// Chernoff–Doob thresholds for blocks of length 2^j.
///
/// `u[j]` is a level such that the running maximum of 2^j steps reaches it
/// with probability at most `SKIP_EPSILON`.
#[derive(Debug, Clone)]
pub struct SkipTable {
    u: Vec<f64>,
}

impl SkipTable {
    /// Builds the table from a cumulant generating function `cgf` defined on
    /// `(0, theta_max)`.
    pub fn new<F: Fn(f64) -> f64>(cgf: F, theta_max: f64) -> Self {
        let l = (1.0 / SKIP_EPSILON).ln();
        let u = (0..=MAX_BLOCK_LOG2)
            .map(|j| {
                let k = (1u64 << j) as f64;
                let bound = |log_t: f64| {
                    let t = log_t.exp();
                    (k * cgf(t) + l) / t
                };
                golden_min(bound, (theta_max * 1e-12).ln(), theta_max.ln())
            })
            .collect();
        Self { u }
    }

    /// Largest 2^j whose threshold does not exceed `room`, or 0.
    #[inline]
    pub fn max_block(&self, room: f64) -> u64 {
        let j = self.u.partition_point(|&u| u <= room);
        if j == 0 {
            0
        } else {
            1 << (j - 1)
        }
    }

    pub fn threshold(&self, log2_k: u32) -> f64 {
        self.u[log2_k as usize]
    }
}

/// Minimum of a unimodal function on `[a, b]`; any evaluated point is a
/// valid Chernoff level, so inexact minimization stays rigorous.
fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

#[inline]
fn room_split<P: Position>(s: P, lvl: Level<P>, strict_gap: P) -> P {
    // Largest excursion (toward the level) that does not trigger it.
    match lvl {
        Level::AtLeast(a) => a - s - strict_gap,
        Level::Above(a) => a - s,
        Level::Below(b) => s - b,
        Level::AtMost(b) => s - b - strict_gap,
    }
}

/// Largest block whose k-fold convolution is tabulated.
const CONV_MAX_K: usize = 128;
/// Cap on the total number of tabulated convolution atoms.
const CONV_BUDGET: usize = 1 << 20;

/// Lattice law in integer units of the span.
#[derive(Debug, Clone)]
pub struct LatticeLaw {
    pmf: LatticePmf,
    /// P(X = u_i | X not in u_0..u_{i-1}) for sequential binomial draws.
    cond: Vec<f64>,
    /// `conv[k]` samples the sum of k steps as `offset + index`.
    conv: Vec<(i64, WeightedAliasIndex<f64>)>,
    up: SkipTable,
    down: SkipTable,
}

/// Alias tables for the k-fold convolutions, k = 0..=k_max.
fn convolution_tables(units: &[i64], probs: &[f64]) -> Vec<(i64, WeightedAliasIndex<f64>)> {
    let lo = units[0];
    let width = (units[units.len() - 1] - lo) as usize;
    let mut out = Vec::new();
    // Law of the k-sum as a dense vector starting at k * lo.
    let mut cur = vec![1.0f64];
    let mut used = 0usize;
    for k in 0..=CONV_MAX_K {
        if k > 0 {
            let mut next = vec![0.0; cur.len() + width];
            for (i, &c) in cur.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for (&u, &p) in units.iter().zip(probs) {
                    next[i + (u - lo) as usize] += c * p;
                }
            }
            cur = next;
        }
        used += cur.len();
        if used > CONV_BUDGET {
            break;
        }
        let table = WeightedAliasIndex::new(cur.clone()).expect("valid convolution weights");
        out.push((k as i64 * lo, table));
    }
    out
}

impl LatticeLaw {
    pub fn new(pmf: &LatticePmf) -> Self {
        let units = pmf.units().to_vec();
        let probs = pmf.probs().to_vec();
        let mut rest = 1.0;
        let cond = probs
            .iter()
            .map(|&p| {
                let c = if rest > 0.0 {
                    (p / rest).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                rest -= p;
                c
            })
            .collect();
        let cgf = |t: f64, sign: f64| -> f64 {
            units
                .iter()
                .zip(&probs)
                .map(|(&u, &p)| p * (sign * t * u as f64).exp_m1())
                .sum::<f64>()
                .ln_1p()
        };
        let m = units.iter().map(|u| u.abs()).max().unwrap_or(1) as f64;
        let theta_max = 50.0 / m;
        Self {
            pmf: pmf.clone(),
            cond,
            conv: convolution_tables(&units, &probs),
            up: SkipTable::new(|t| cgf(t, 1.0), theta_max),
            down: SkipTable::new(|t| cgf(t, -1.0), theta_max),
        }
    }

    pub fn pmf(&self) -> &LatticePmf {
        &self.pmf
    }
}

impl StepLaw for LatticeLaw {
    type Pos = i64;

    #[inline]
    fn step(&self, rng: &mut StreamRng) -> i64 {
        self.pmf.draw_unit(rng)
    }

    fn block(&self, k: u64, rng: &mut StreamRng) -> i64 {
        if let Some((offset, table)) = self.conv.get(k as usize) {
            return offset + table.sample(rng) as i64;
        }
        let units = self.pmf.units();
        let mut left = k;
        let mut sum = 0i64;
        for (i, &c) in self.cond.iter().enumerate() {
            if left == 0 {
                break;
            }
            let n = if i + 1 == units.len() || c >= 1.0 {
                left
            } else {
                Binomial::new(left, c).expect("valid binomial").sample(rng)
            };
            sum += n as i64 * units[i];
            left -= n;
        }
        sum
    }

    fn max_block(&self, s: i64, upper: Option<Level<i64>>, lower: Option<Level<i64>>) -> u64 {
        let cap = 1u64 << MAX_BLOCK_LOG2;
        let side = |lvl: Option<Level<i64>>, max_jump: i64, table: &SkipTable| -> u64 {
            match lvl {
                None => cap,
                Some(l) => {
                    let room = room_split(s, l, 1);
                    if room < 0 {
                        return 0;
                    }
                    let exact = if max_jump <= 0 {
                        cap
                    } else {
                        (room / max_jump) as u64
                    };
                    exact.max(table.max_block(room as f64)).min(cap)
                }
            }
        };
        let up = side(upper, self.pmf.max_unit(), &self.up);
        let down = side(lower, -self.pmf.min_unit(), &self.down);
        up.min(down)
    }

    fn real(&self, p: i64) -> f64 {
        p as f64 * self.pmf.span()
    }
}

/// Continuous law on the real line.
#[derive(Debug, Clone)]
pub struct ContinuousLaw {
    spec: IncrementSpec,
    tables: Option<(SkipTable, SkipTable)>,
    neg_inv_alpha: f64,
}

impl ContinuousLaw {
    pub fn new(spec: &IncrementSpec) -> Result<Self> {
        let tables = match spec.family() {
            Family::LatticePmf(_) => {
                return Err(Error::InvalidArgument(
                    "lattice law given to ContinuousLaw".into(),
                ))
            }
            Family::Laplace { scale } => {
                let b = *scale;
                let cgf = move |t: f64| -(-(b * t) * (b * t)).ln_1p();
                Some((
                    SkipTable::new(cgf, (1.0 - 1e-9) / b),
                    SkipTable::new(cgf, (1.0 - 1e-9) / b),
                ))
            }
            Family::GaussMix(cs) => {
                let cs = cs.clone();
                let cgf = |t: f64, sign: f64| -> f64 {
                    // log-sum-exp over components
                    let terms: Vec<f64> = cs
                        .iter()
                        .filter(|c| c.weight > 0.0)
                        .map(|c| c.weight.ln() + sign * t * c.mean + 0.5 * t * t * c.sd * c.sd)
                        .collect();
                    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
                };
                let smax = cs.iter().map(|c| c.sd + c.mean.abs()).fold(0.0, f64::max);
                let theta_max = 100.0 / smax;
                Some((
                    SkipTable::new(|t| cgf(t, 1.0), theta_max),
                    SkipTable::new(|t| cgf(t, -1.0), theta_max),
                ))
            }
            Family::SymmetricPareto { .. } => None,
        };
        let neg_inv_alpha = spec.stable_index().map_or(0.0, |a| -1.0 / a);
        Ok(Self {
            spec: spec.clone(),
            tables,
            neg_inv_alpha,
        })
    }

    pub fn spec(&self) -> &IncrementSpec {
        &self.spec
    }
}

impl StepLaw for ContinuousLaw {
    type Pos = f64;

    #[inline]
    fn step(&self, rng: &mut StreamRng) -> f64 {
        match self.spec.family() {
            Family::Laplace { scale } => draw_laplace(*scale, rng),
            Family::SymmetricPareto { .. } => draw_pareto(self.neg_inv_alpha, rng),
            Family::GaussMix(cs) => draw_gauss_mix(cs, self.spec.gauss_cum(), rng),
            Family::LatticePmf(_) => unreachable!(),
        }
    }

    fn block(&self, k: u64, rng: &mut StreamRng) -> f64 {
        match self.spec.family() {
            Family::Laplace { scale } => {
                // Laplace(b) = b * sqrt(2W) * Z with W ~ Exp(1), so a k-sum is
                // b * sqrt(2 G_k) * Z with G_k ~ Gamma(k, 1).
                let g = Gamma::new(k as f64, 1.0).expect("valid gamma").sample(rng);
                let z: f64 = StandardNormal.sample(rng);
                scale * (2.0 * g).sqrt() * z
            }
            Family::GaussMix(cs) => {
                let mut left = k;
                let mut rest = 1.0;
                let (mut mean, mut var) = (0.0, 0.0);
                for (i, c) in cs.iter().enumerate() {
                    if left == 0 {
                        break;
                    }
                    let n = if i + 1 == cs.len() {
                        left
                    } else {
                        let p = if rest > 0.0 {
                            (c.weight / rest).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        Binomial::new(left, p).expect("valid binomial").sample(rng)
                    };
                    rest -= c.weight;
                    left -= n;
                    mean += n as f64 * c.mean;
                    var += n as f64 * c.sd * c.sd;
                }
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            _ => (0..k).map(|_| self.step(rng)).sum(),
        }
    }

    fn max_block(&self, s: f64, upper: Option<Level<f64>>, lower: Option<Level<f64>>) -> u64 {
        let Some((up, down)) = &self.tables else {
            return 1;
        };
        let cap = 1u64 << MAX_BLOCK_LOG2;
        let side = |lvl: Option<Level<f64>>, t: &SkipTable| match lvl {
            None => cap,
            Some(l) => t.max_block(room_split(s, l, 0.0)),
        };
        side(upper, up).min(side(lower, down))
    }

    fn real(&self, p: f64) -> f64 {
        p
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exit<P> {
    /// A boundary was hit; `prev` is the position one step earlier.
    Hit { level: Level<P>, prev: P },
    /// The time budget of the run was exhausted.
    Deadline,
}

/// A running trajectory.
pub struct Walker<'a, L: StepLaw> {
    law: &'a L,
    pos: L::Pos,
    time: u64,
    work: u64,
    guard: u64,
    rng: StreamRng,
}

impl<'a, L: StepLaw> Walker<'a, L> {
    pub fn new(law: &'a L, start: L::Pos, rng: StreamRng, guard: u64) -> Self {
        Self {
            law,
            pos: start,
            time: 0,
            work: 0,
            guard,
            rng,
        }
    }

    pub fn pos(&self) -> L::Pos {
        self.pos
    }

    pub fn set_pos(&mut self, p: L::Pos) {
        self.pos = p;
    }

    /// Steps taken so far (saturating).
    pub fn time(&self) -> u64 {
        self.time
    }

    /// Work units spent so far.
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn law(&self) -> &L {
        self.law
    }

    pub fn rng(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    #[inline]
    fn charge(&mut self) -> Result<()> {
        self.work += 1;
        if self.work > self.guard {
            return Err(Error::GuardExceeded {
                work: self.work - 1,
                guard: self.guard,
            });
        }
        Ok(())
    }

    /// One plain step; returns the previous position.
    #[inline]
    pub fn step(&mut self) -> Result<L::Pos> {
        self.charge()?;
        let prev = self.pos;
        self.pos = prev + self.law.step(&mut self.rng);
        self.time = self.time.saturating_add(1);
        Ok(prev)
    }

    /// Runs until one of the levels is hit or `deadline` total steps elapse.
    ///
    /// Levels are checked after each step, never at the starting position.
    pub fn run(
        &mut self,
        upper: Option<Level<L::Pos>>,
        lower: Option<Level<L::Pos>>,
        deadline: Option<u64>,
    ) -> Result<Exit<L::Pos>> {
        debug_assert!(upper.map_or(true, |l| l.is_upper()));
        debug_assert!(lower.map_or(true, |l| !l.is_upper()));
        loop {
            let left = match deadline {
                Some(d) if self.time >= d => return Ok(Exit::Deadline),
                Some(d) => d - self.time,
                None => u64::MAX,
            };
            let k = self.law.max_block(self.pos, upper, lower).min(left);
            if k >= 2 {
                self.charge()?;
                // A block ending beyond a level is redrawn; this event has
                // probability at most SKIP_EPSILON.
                let next = loop {
                    let n = self.pos + self.law.block(k, &mut self.rng);
                    let out = upper.is_some_and(|l| l.hit(n)) || lower.is_some_and(|l| l.hit(n));
                    if !out {
                        break n;
                    }
                };
                self.pos = next;
                self.time = self.time.saturating_add(k);
                continue;
            }
            // Near a boundary: a short burst of plain steps before the skip
            // test is repeated.
            for _ in 0..left.min(BURST) {
                let prev = self.step()?;
                if let Some(level) = upper.filter(|l| l.hit(self.pos)) {
                    return Ok(Exit::Hit { level, prev });
                }
                if let Some(level) = lower.filter(|l| l.hit(self.pos)) {
                    return Ok(Exit::Hit { level, prev });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn pm2() -> LatticeLaw {
        let spec = IncrementSpec::lattice_uniform(1.0, &[-2.0, -1.0, 1.0, 2.0]).unwrap();
        LatticeLaw::new(spec.as_lattice().unwrap())
    }

    #[test]
    fn thresholds_grow_like_sqrt_k() {
        let law = pm2();
        let t = &law.up;
        // sigma^2 = 2.5, L = ln(1e15) ~ 34.5: u_k ~ sqrt(2 k sigma^2 L) for large k.
        let k = (1u64 << 30) as f64;
        let approx = (2.0 * k * 2.5 * (1e15f64).ln()).sqrt();
        let u = t.threshold(30);
        assert!(u > approx * 0.99 && u < approx * 1.05, "{u} vs {approx}");
        for j in 1..MAX_BLOCK_LOG2 {
            assert!(t.threshold(j) >= t.threshold(j - 1));
        }
    }

    #[test]
    fn doob_bound_is_conservative_in_practice() {
        // Maximum of 64-step blocks should never reach u_64.
        let law = pm2();
        let u = law.up.threshold(6);
        let mut rng = RngStream::new(2, 0).rng();
        for _ in 0..20_000 {
            let mut s = 0i64;
            let mut m = 0i64;
            for _ in 0..64 {
                s += law.step(&mut rng);
                m = m.max(s);
            }
            assert!((m as f64) < u);
        }
    }

    #[test]
    fn lattice_block_moments() {
        let law = pm2();
        let mut rng = RngStream::new(3, 0).rng();
        let k = 1000u64;
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| law.block(k, &mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = (2.5 * k as f64).sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt());
        assert!((var / (2.5 * k as f64) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn laplace_block_moments() {
        let spec = IncrementSpec::laplace(1.5).unwrap();
        let law = ContinuousLaw::new(&spec).unwrap();
        let mut rng = RngStream::new(4, 0).rng();
        let k = 64u64;
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| law.block(k, &mut rng)).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        let v = 2.0 * 1.5 * 1.5 * k as f64;
        assert!((var / v - 1.0).abs() < 0.03, "{var} vs {v}");
        // Kurtosis of a sum of k Laplace laws: 3 + 3/k.
        let kurt = m4 / (var * var);
        assert!((kurt - (3.0 + 3.0 / k as f64)).abs() < 0.15, "{kurt}");
    }

    #[test]
    fn pareto_never_skips() {
        let spec = IncrementSpec::symmetric_pareto(1.5).unwrap();
        let law = ContinuousLaw::new(&spec).unwrap();
        assert_eq!(law.max_block(1e12, None, Some(Level::Below(0.0))), 1);
    }

    #[test]
    fn lattice_exact_skip_from_far() {
        let law = pm2();
        // Room of 1000 units towards the lower level: at least 500 exact steps.
        assert!(law.max_block(1000, None, Some(Level::Below(0))) >= 500);
        assert_eq!(law.max_block(1, None, Some(Level::Below(0))), 0);
    }

    #[test]
    fn guard_triggers() {
        let law = pm2();
        let mut w = Walker::new(&law, 0, RngStream::new(1, 1).rng(), 10);
        let r = w.run(
            Some(Level::AtLeast(1_000_000)),
            Some(Level::Below(-1_000_000)),
            None,
        );
        assert!(matches!(r, Err(Error::GuardExceeded { guard: 10, .. })));
    }

    #[test]
    fn deadline_is_respected_exactly() {
        let law = pm2();
        let mut w = Walker::new(&law, 0, RngStream::new(1, 2).rng(), DEFAULT_GUARD);
        let r = w.run(None, None, Some(12_345)).unwrap();
        assert_eq!(r, Exit::Deadline);
        assert_eq!(w.time(), 12_345);
    }
}
