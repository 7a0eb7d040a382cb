//! Transition kernels of the overshoot chain on a lattice.
//!
//! The chain factors as `O_n = (P Q)^n` applied to the start: `P` maps a
//! nonnegative point to `-U_1 - d` (first passage, estimated by simulation),
//! and `Q(x, {y}) = P(X = x + y + d) / P(X >= x + d)` is the conditional jump
//! that lands at `y` (exact).

use std::collections::BTreeMap;
use std::io::Write;

use num::{BigRational, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::{rational_to_f64, IncrementSpec};
use crate::measures::InvariantMeasure;
use crate::rng::{RngStream, StreamRng};
use crate::stats::{resample_counts, EmpiricalDistribution, Geometry, Masses, DEFAULT_RESAMPLES};
use crate::walk::Simulator;

/// Fewest counts a flux estimate needs.
pub const MIN_FLUX_COUNTS: u64 = 100;

const PURPOSE_P_ROW: u16 = 0x0b01;
const PURPOSE_FLUX: u16 = 0x0b02;
const PURPOSE_COMPOSE: u16 = 0x0b03;
const PURPOSE_FLUX_BOOT: u16 = 0x0b04;

/// A row-stochastic matrix over lattice states `0..=k` (in units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeKernel {
    pub span: f64,
    /// States in lattice units.
    pub states: Vec<i64>,
    /// Row `i` holds `(target unit, probability)` pairs.
    pub rows: Vec<BTreeMap<i64, f64>>,
    /// Probability mass leaving the truncated state space, per row.
    pub deficit: Vec<f64>,
    #[serde(skip)]
    exact: Option<Vec<BTreeMap<i64, BigRational>>>,
}

impl LatticeKernel {
    pub fn get(&self, x: i64, y: i64) -> f64 {
        self.row(x).and_then(|r| r.get(&y).copied()).unwrap_or(0.0)
    }

    pub fn row(&self, x: i64) -> Option<&BTreeMap<i64, f64>> {
        self.states.binary_search(&x).ok().map(|i| &self.rows[i])
    }

    /// Exact entry, for kernels built in rational arithmetic.
    pub fn exact(&self, x: i64, y: i64) -> Option<BigRational> {
        let rows = self.exact.as_ref()?;
        let i = self.states.binary_search(&x).ok()?;
        Some(rows[i].get(&y).cloned().unwrap_or_else(BigRational::zero))
    }

    /// `mu K` for a law `mu` on the states (keys in units).
    pub fn apply(&self, mu: &BTreeMap<i64, f64>) -> Result<BTreeMap<i64, f64>> {
        let mut out = BTreeMap::new();
        for (&x, &px) in mu {
            if px == 0.0 {
                continue;
            }
            let row = self
                .row(x)
                .ok_or_else(|| Error::InvalidArgument(format!("state {x} outside the kernel")))?;
            for (&y, &q) in row {
                *out.entry(y).or_insert(0.0) += px * q;
            }
        }
        Ok(out)
    }

    /// Writes `x,y,prob` with `x` and `y` in natural units.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "x,y,prob")?;
        for (&x, row) in self.states.iter().zip(&self.rows) {
            for (&y, &p) in row {
                writeln!(
                    out,
                    "{},{},{}",
                    x as f64 * self.span,
                    y as f64 * self.span,
                    p
                )?;
            }
        }
        Ok(())
    }
}

/// Default truncation: the 1 - 1e-8 quantile of pi_plus, in units.
fn default_truncation(spec: &IncrementSpec) -> Result<i64> {
    let p = spec.as_lattice().ok_or(Error::NotLattice)?;
    let q = InvariantMeasure::pi_plus(spec).quantile(1.0 - 1e-8)?;
    Ok((q / p.span()).round() as i64)
}

/// The exact kernel Q on states `0..=k` (units). Rows with `P(X >= x + d) = 0`
/// are point masses at zero.
pub fn q_kernel_lattice(spec: &IncrementSpec, k: Option<i64>) -> Result<LatticeKernel> {
    let p = spec.as_lattice().ok_or(Error::NotLattice)?;
    let k = match k {
        Some(k) if k < 0 => {
            return Err(Error::InvalidArgument(
                "truncation must be nonnegative".into(),
            ))
        }
        Some(k) => k,
        None => default_truncation(spec)?,
    };
    let states: Vec<i64> = (0..=k).collect();
    let mut exact = Vec::with_capacity(states.len());
    for &x in &states {
        let tail = p.exact_tail_above_unit(x);
        let mut row = BTreeMap::new();
        if tail.is_zero() {
            row.insert(0, BigRational::from_integer(1.into()));
        } else {
            for (&u, q) in p.units().iter().zip(p.exact_probs()) {
                let y = u - x - 1;
                if y >= 0 && y <= k {
                    row.insert(y, q / &tail);
                }
            }
        }
        exact.push(row);
    }
    let rows: Vec<BTreeMap<i64, f64>> = exact
        .iter()
        .map(|r| r.iter().map(|(&y, q)| (y, rational_to_f64(q))).collect())
        .collect();
    let deficit = exact
        .iter()
        .map(|r| {
            let s: BigRational = r.values().cloned().sum();
            rational_to_f64(&(BigRational::from_integer(1.into()) - s))
        })
        .collect();
    Ok(LatticeKernel {
        span: p.span(),
        states,
        rows,
        deficit,
        exact: Some(exact),
    })
}

/// Outcome of the exact detailed-balance check for Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub max_residual: f64,
    /// The residual is zero in rational arithmetic.
    pub exact_zero: bool,
    pub states: usize,
}

/// `max |pi(x) Q(x, y) - pi(y) Q(y, x)|` over states `0..=k`, computed in
/// rational arithmetic.
pub fn detailed_balance_q(spec: &IncrementSpec, k: Option<i64>) -> Result<BalanceReport> {
    let kernel = q_kernel_lattice(spec, k)?;
    let pi: BTreeMap<i64, BigRational> = InvariantMeasure::pi_plus(spec)
        .exact_atoms()
        .ok_or(Error::NotLattice)?
        .into_iter()
        .collect();
    let zero = BigRational::zero();
    let mut worst = BigRational::zero();
    for &x in &kernel.states {
        for &y in &kernel.states {
            let a = pi.get(&x).unwrap_or(&zero) * kernel.exact(x, y).expect("exact kernel");
            let b = pi.get(&y).unwrap_or(&zero) * kernel.exact(y, x).expect("exact kernel");
            let r = (a - b).abs();
            if r > worst {
                worst = r;
            }
        }
    }
    Ok(BalanceReport {
        max_residual: rational_to_f64(&worst),
        exact_zero: worst.is_zero(),
        states: kernel.states.len(),
    })
}

fn require_nonneg(x: f64) -> Result<()> {
    if x < 0.0 || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "P is defined on nonnegative states, got {x}"
        )));
    }
    Ok(())
}

/// `-U_1 - d` from `m` independent walks started at `x`, one stream per replica.
pub fn p_kernel_samples(
    sim: &Simulator,
    x: f64,
    m: usize,
    seed: u64,
    purpose: u16,
) -> Result<Vec<f64>> {
    require_nonneg(x)?;
    if m == 0 {
        return Err(Error::InvalidArgument(
            "replica count must be at least 1".into(),
        ));
    }
    let d = sim.spec().span();
    (0..m)
        .into_par_iter()
        .map(|r| {
            let ev = sim.overshoot_chain(x, 1, &RngStream::derive(seed, purpose, r as u64))?;
            Ok(-ev[0].undershoot - d)
        })
        .collect()
}

/// Empirical law of `-U_1 - d` from `m` walks started at `x`.
pub fn p_kernel_mc(
    sim: &Simulator,
    x: f64,
    m: usize,
    geometry: Geometry,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_samples(
        geometry,
        &p_kernel_samples(sim, x, m, seed, PURPOSE_P_ROW)?,
    )
}

/// Empirical P on lattice states `0..=k`, with `m` walks per state.
pub fn p_kernel_matrix(
    sim: &Simulator,
    states: &[i64],
    m: usize,
    seed: u64,
) -> Result<LatticeKernel> {
    let span = sim.spec().as_lattice().ok_or(Error::NotLattice)?.span();
    let mut states = states.to_vec();
    states.sort_unstable();
    states.dedup();
    let g = Geometry::lattice(span);
    let mut rows = Vec::with_capacity(states.len());
    for (i, &x) in states.iter().enumerate() {
        let emp = p_kernel_mc(sim, x as f64 * span, m, g, seed.wrapping_add(i as u64))?;
        rows.push(emp.masses()?.p);
    }
    let deficit = vec![0.0; states.len()];
    Ok(LatticeKernel {
        span,
        states,
        rows,
        deficit,
        exact: None,
    })
}

/// Flux comparison for one bucket pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub x: i64,
    pub y: i64,
    /// Estimate of `pi(x) P(x, y)`.
    pub flux_xy: f64,
    pub flux_yx: f64,
    pub ci_xy: (f64, f64),
    pub ci_yx: (f64, f64),
    pub count_xy: u64,
    pub count_yx: u64,
    /// Two-sided p-value of `flux_xy = flux_yx` from the bootstrap s.e. of the difference.
    pub p_value: f64,
    pub overlap: bool,
}

/// Checks `pi(x) P(x, y) = pi(y) P(y, x)` for bucket pairs by starting `m`
/// walks from pi_plus and tabulating (bucket of S_0, bucket of -U_1 - d).
/// Confidence intervals are 95% multinomial-bootstrap percentiles.
pub fn detailed_balance_p_mc(
    sim: &Simulator,
    pairs: &[(i64, i64)],
    geometry: Geometry,
    m: usize,
    seed: u64,
) -> Result<Vec<FluxReport>> {
    if pairs.is_empty() {
        return Err(Error::Empty("bucket pairs"));
    }
    let pi = InvariantMeasure::pi_plus(sim.spec());
    let d = sim.spec().span();
    let joint: Vec<(i64, i64)> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::derive(seed, PURPOSE_FLUX, r as u64).rng();
            let s0 = pi.draw(&mut rng);
            let ev = sim.overshoot_chain_with(s0, 1, &mut rng)?;
            Ok((geometry.index(s0)?, geometry.index(-ev[0].undershoot - d)?))
        })
        .collect::<Result<_>>()?;
    let mut table: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for c in joint {
        *table.entry(c).or_insert(0) += 1;
    }
    let mut rng = RngStream::derive(seed, PURPOSE_FLUX_BOOT, 0).rng();
    pairs
        .iter()
        .map(|&(x, y)| flux_pair(&table, x, y, m as u64, &mut rng))
        .collect()
}

fn flux_pair(
    table: &BTreeMap<(i64, i64), u64>,
    x: i64,
    y: i64,
    n: u64,
    rng: &mut StreamRng,
) -> Result<FluxReport> {
    let cxy = table.get(&(x, y)).copied().unwrap_or(0);
    let cyx = table.get(&(y, x)).copied().unwrap_or(0);
    let low = cxy.min(cyx);
    if low < MIN_FLUX_COUNTS {
        return Err(Error::InsufficientSamples {
            got: low,
            need: MIN_FLUX_COUNTS,
        });
    }
    let nf = n as f64;
    // Cells: (x,y), (y,x), everything else. A diagonal pair has one cell.
    let cells = if x == y {
        vec![cxy, n - cxy]
    } else {
        vec![cxy, cyx, n - cxy - cyx]
    };
    let mut bxy = Vec::with_capacity(DEFAULT_RESAMPLES);
    let mut byx = Vec::with_capacity(DEFAULT_RESAMPLES);
    for _ in 0..DEFAULT_RESAMPLES {
        let r = resample_counts(&cells, rng);
        bxy.push(r[0] as f64 / nf);
        byx.push(if x == y { r[0] } else { r[1] } as f64 / nf);
    }
    let diffs: Vec<f64> = bxy.iter().zip(&byx).map(|(a, b)| a - b).collect();
    let sd = crate::stats::bootstrap::sample_sd(&diffs);
    let (fxy, fyx) = (cxy as f64 / nf, cyx as f64 / nf);
    let p_value = if sd > 0.0 {
        2.0 * crate::increments::normal_sf((fxy - fyx).abs() / sd)
    } else {
        1.0
    };
    let ci_xy = percentile_ci(&mut bxy);
    let ci_yx = percentile_ci(&mut byx);
    let overlap = ci_xy.0 <= ci_yx.1 && ci_yx.0 <= ci_xy.1;
    Ok(FluxReport {
        x,
        y,
        flux_xy: fxy,
        flux_yx: fyx,
        ci_xy,
        ci_yx,
        count_xy: cxy,
        count_yx: cyx,
        p_value,
        overlap,
    })
}

fn percentile_ci(v: &mut [f64]) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    (at(0.025), at(0.975))
}

/// Outcome of the composition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeReport {
    pub x: f64,
    pub n: usize,
    pub tv: f64,
    pub simulated: Masses,
    pub composed: Masses,
}

/// TV between the simulated law of O_n from `x` (`m` walks) and `delta_x (P
/// Q)^n`, where Q is exact and P is estimated once with `m_prime` walks per
/// state.
pub fn compose_check(
    sim: &Simulator,
    x: f64,
    n: usize,
    m: usize,
    m_prime: usize,
    seed: u64,
) -> Result<ComposeReport> {
    let p = sim.spec().as_lattice().ok_or(Error::NotLattice)?;
    require_nonneg(x)?;
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!(
            "composition depth must be in 1..=3, got {n}"
        )));
    }
    let xu = sim.spec().lattice_units(x)?;
    let q = q_kernel_lattice(sim.spec(), Some(p.max_unit()))?;
    let mut states: Vec<i64> = q.states.clone();
    states.push(xu);
    let pk = p_kernel_matrix(sim, &states, m_prime, seed ^ 0x5eed_0000_0000_0001)?;
    let mut mu: BTreeMap<i64, f64> = [(xu, 1.0)].into_iter().collect();
    for _ in 0..n {
        mu = q.apply(&pk.apply(&mu)?)?;
    }
    let g = Geometry::lattice(p.span());
    let finals: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|r| {
            Ok(
                sim.overshoot_chain(x, n, &RngStream::derive(seed, PURPOSE_COMPOSE, r as u64))?
                    [n - 1]
                    .overshoot,
            )
        })
        .collect::<Result<_>>()?;
    let simulated = EmpiricalDistribution::from_samples(g, &finals)?.masses()?;
    let composed = Masses::new(g, mu);
    let tv = crate::stats::tv_distance(&simulated, &composed)?;
    Ok(ComposeReport {
        x,
        n,
        tv,
        simulated,
        composed,
    })
}
