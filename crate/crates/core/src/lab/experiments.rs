//! Experiment bodies. Every replica draws from its own stream
//! `(seed, purpose, replica)`, so results do not depend on thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::report::{Comparison, Report};
use super::Ctx;
use crate::error::{Error, Result};
use crate::kernels::{compose_check, detailed_balance_p_mc, detailed_balance_q, q_kernel_lattice};
use crate::measures::{
    far_level_down_limit, ladder_bootstrap_se, ladder_counts, ladder_normalization_check,
    pi_plus_via_ladder, wiener_hopf_residual, InvariantMeasure, LadderLaws,
};
use crate::rng::{RngStream, StreamRng};
use crate::stats::{
    bootstrap::{mean, sample_sd},
    drift_fit, geometric_rate_fit, ks_distance, ks_two_sample, multinomial, noise_floor_bound,
    resample_counts, stable_drift_limit, tv_distance, EmpiricalDistribution, Geometry, Masses,
    RatePoint, KS_MIN_SAMPLES,
};
use crate::walk::{write_events_csv, CycleSample, LadderSample};

use Comparison::{Ge, Le, Lt};

const P_STATIONARITY: u16 = 0x1001;
const P_CYCLE_DOWN: u16 = 0x1002;
const P_CYCLE_UP: u16 = 0x1003;
const P_UNDERSHOOT: u16 = 0x1004;
const P_REVERSAL: u16 = 0x1005;
const P_P_BALANCE: u16 = 0x1006;
const P_COMPOSE: u16 = 0x1007;
const P_LADDER: u16 = 0x1008;
const P_FAR_DOWN: u16 = 0x1009;
const P_FAR_UP: u16 = 0x100a;
const P_ENTRANCE: u16 = 0x100b;
const P_CURVE: u16 = 0x100c;
const P_DRIFT: u16 = 0x100d;
const P_CROSSINGS: u16 = 0x100e;
const P_BOOT: u16 = 0x10ff;

/// Replicas whose full event list goes to `events.csv`.
const EVENT_DUMP: usize = 100;
/// Rows of `cycles.csv`.
const CYCLE_DUMP: usize = 1000;
/// Ladder samples per parallel chunk.
const LADDER_CHUNK: usize = 10_000;
/// Cell width and extent of the joint histogram in the reversal test.
const JOINT_BIN_WIDTH: f64 = 0.25;
const JOINT_RANGE: f64 = 4.0;

fn stream(ctx: &Ctx, purpose: u16, index: usize) -> StreamRng {
    RngStream::derive(ctx.cfg.seed, purpose, index as u64).rng()
}

/// Bootstrap stream keyed by a label, so adding a statistic does not shift
/// the others.
fn boot_rng(ctx: &Ctx, label: &str) -> StreamRng {
    let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x1000_0000_01b3)
    });
    RngStream::derive(ctx.cfg.seed, P_BOOT, h >> 16).rng()
}

/// Seed for a sub-run (repeat or probe).
fn sub_seed(ctx: &Ctx, purpose: u16, index: usize) -> u64 {
    stream(ctx, purpose, index).next_u64()
}

fn par<T, F>(m: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..m).into_par_iter().map(f).collect()
}

fn require_lattice(ctx: &Ctx) -> Result<()> {
    if ctx.cfg.spec.is_lattice() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "experiment '{}' needs a lattice spec",
            ctx.cfg.experiment
        )))
    }
}

fn start_or_draw(ctx: &Ctx, pi: &InvariantMeasure, rng: &mut StreamRng) -> f64 {
    ctx.cfg.start.unwrap_or_else(|| pi.draw(rng))
}

/// TV to a fixed law, with a multinomial-bootstrap standard error.
fn tv_with_se(
    emp: &EmpiricalDistribution,
    target: &Masses,
    resamples: usize,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    let m = emp.masses()?;
    let tv = tv_distance(&m, target)?;
    let keys: Vec<i64> = emp.counts().keys().copied().collect();
    let counts: Vec<u64> = emp.counts().values().copied().collect();
    let mut vals = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut e = EmpiricalDistribution::new(emp.geometry());
        for (&k, c) in keys.iter().zip(resample_counts(&counts, rng)) {
            e.add_count(k, c);
        }
        vals.push(tv_distance(&e.masses()?, target)?);
    }
    Ok((tv, sample_sd(&vals)))
}

/// Mean and s.d. of the TV between `n` draws from `target` and `target`
/// itself: the level an exact match sits at.
fn null_tv(target: &Masses, n: u64, resamples: usize, rng: &mut StreamRng) -> Result<(f64, f64)> {
    let keys: Vec<i64> = target.p.keys().copied().collect();
    let probs: Vec<f64> = target.p.values().copied().collect();
    let mut vals = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut e = EmpiricalDistribution::new(target.geometry);
        for (&k, c) in keys.iter().zip(multinomial(n, &probs, rng)) {
            e.add_count(k, c);
        }
        vals.push(tv_distance(&e.masses()?, target)?);
    }
    Ok((mean(&vals), sample_sd(&vals)))
}

fn histogram_csv(emp: &Masses, target: &Masses) -> String {
    let mut keys: Vec<i64> = emp.p.keys().chain(target.p.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let mut s = String::from("lo,hi,empirical,expected\n");
    for k in keys {
        let (a, b) = emp.geometry.cell(k);
        let _ = writeln!(s, "{a},{b},{},{}", emp.get(k), target.get(k));
    }
    s
}

/// Compares samples with an invariant law: exact-atom TV on a lattice, KS
/// otherwise (plus a binned TV for information).
fn compare_law(
    ctx: &Ctx,
    rep: &mut Report,
    name: &str,
    samples: &[f64],
    pi: &InvariantMeasure,
    tv_key: &str,
) -> Result<()> {
    let n = samples.len() as u64;
    let g = pi.geometry_with_width(ctx.cfg.bin_width)?;
    let emp = EmpiricalDistribution::from_samples(g, samples)?;
    let target = pi.masses(&g)?;
    let (tv, se) = tv_with_se(&emp, &target, ctx.cfg.resamples, &mut boot_rng(ctx, name))?;
    rep.stat(format!("{name}.tv"), tv, Some(se), n);
    if pi.is_lattice() {
        rep.check(format!("{name}.tv"), tv, Le, ctx.cfg.threshold(tv_key));
    } else {
        let ks = ks_distance(samples, |y| pi.cdf(y))?;
        rep.stat(format!("{name}.ks"), ks, None, n);
        rep.check(format!("{name}.ks"), ks, Le, ctx.cfg.threshold("ks_max"));
    }
    rep.artifact(
        &format!("{name}_histogram.csv"),
        histogram_csv(&emp.masses()?, &target),
    );
    Ok(())
}

pub(crate) fn stationarity(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let pi = InvariantMeasure::pi_plus(&cfg.spec);
    let runs = par(cfg.replicas, |r| {
        let mut rng = stream(ctx, P_STATIONARITY, r);
        let s0 = start_or_draw(ctx, &pi, &mut rng);
        let ev = ctx
            .sim
            .overshoot_chain_with(s0, cfg.chain_length, &mut rng)?;
        let values: Vec<f64> = ev[cfg.burn_in..].iter().map(|e| e.overshoot).collect();
        Ok((values, (r < EVENT_DUMP).then_some(ev)))
    })?;
    let mut rep = Report::default();
    let pooled: Vec<f64> = runs.iter().flat_map(|(v, _)| v.iter().copied()).collect();
    compare_law(ctx, &mut rep, "pooled", &pooled, &pi, "tv_max")?;
    if let Some(atoms) = pi.atoms() {
        let (y0, p0) = atoms[0];
        let hit = pooled.iter().filter(|&&y| y == y0).count() as f64 / pooled.len() as f64;
        rep.stat("pooled.atom0", hit, None, pooled.len() as u64);
        rep.check(
            "pooled.atom0_error",
            (hit - p0).abs(),
            Le,
            cfg.threshold("atom_band"),
        );
    }
    let last: Vec<f64> = runs
        .iter()
        .map(|(v, _)| *v.last().expect("nonempty chain"))
        .collect();
    let g = pi.geometry_with_width(cfg.bin_width)?;
    let emp = EmpiricalDistribution::from_samples(g, &last)?;
    let (tv, se) = tv_with_se(
        &emp,
        &pi.masses(&g)?,
        cfg.resamples,
        &mut boot_rng(ctx, "last"),
    )?;
    rep.stat("last.tv", tv, Some(se), last.len() as u64);
    let events: Vec<_> = runs
        .iter()
        .enumerate()
        .filter_map(|(r, (_, e))| e.as_ref().map(|e| (r, e)))
        .flat_map(|(r, ev)| ev.iter().map(move |e| (r as u64, *e)))
        .collect();
    let mut buf = Vec::new();
    write_events_csv(&mut buf, &events)?;
    rep.artifact("events.csv", String::from_utf8(buf).expect("csv is utf-8"));
    Ok(rep)
}

pub(crate) fn cycle(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let plus = InvariantMeasure::pi_plus(&cfg.spec);
    let minus = InvariantMeasure::pi_minus(&cfg.spec);
    let down = par(cfg.replicas, |r| {
        let mut rng = stream(ctx, P_CYCLE_DOWN, r);
        let s0 = plus.draw(&mut rng);
        Ok(ctx.sim.down_chain_with(s0, 1, &mut rng)?[0].overshoot)
    })?;
    let up = par(cfg.replicas, |r| {
        let mut rng = stream(ctx, P_CYCLE_UP, r);
        let s0 = minus.draw(&mut rng);
        Ok(ctx.sim.overshoot_chain_with(s0, 1, &mut rng)?[0].overshoot)
    })?;
    let mut rep = Report::default();
    compare_law(ctx, &mut rep, "down_from_pi_plus", &down, &minus, "tv_max")?;
    compare_law(ctx, &mut rep, "up_from_pi_minus", &up, &plus, "tv_max")?;
    Ok(rep)
}

pub(crate) fn undershoot(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let pi = InvariantMeasure::pi_plus(&cfg.spec);
    let d = cfg.spec.span();
    let runs = par(cfg.replicas, |r| {
        let mut rng = stream(ctx, P_UNDERSHOOT, r);
        let s0 = start_or_draw(ctx, &pi, &mut rng);
        let ev = ctx
            .sim
            .overshoot_chain_with(s0, cfg.chain_length, &mut rng)?;
        Ok(ev[cfg.burn_in..]
            .iter()
            .map(|e| -e.undershoot - d)
            .collect::<Vec<f64>>())
    })?;
    let pooled: Vec<f64> = runs.into_iter().flatten().collect();
    let mut rep = Report::default();
    compare_law(
        ctx,
        &mut rep,
        "reflected_undershoot",
        &pooled,
        &pi,
        "tv_max",
    )?;
    Ok(rep)
}

type Cell = (i64, i64);

fn joint_tv(a: &[Cell], b: &[Cell]) -> f64 {
    let mut diff: BTreeMap<Cell, f64> = BTreeMap::new();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    for c in a {
        *diff.entry(*c).or_insert(0.0) += 1.0 / na;
    }
    for c in b {
        *diff.entry(*c).or_insert(0.0) -= 1.0 / nb;
    }
    0.5 * diff.values().map(|v| v.abs()).sum::<f64>()
}

pub(crate) fn reversal(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let pi = InvariantMeasure::pi_plus(&cfg.spec);
    let d = cfg.spec.span();
    let cycles: Vec<CycleSample> = par(cfg.replicas, |r| {
        let mut rng = stream(ctx, P_REVERSAL, r);
        let s0 = start_or_draw(ctx, &pi, &mut rng);
        ctx.sim.cycle_with(s0, cfg.cap, &mut rng)
    })?;
    let half = cfg.replicas / 2;
    if half < KS_MIN_SAMPLES {
        return Err(Error::Config("reversal needs at least 200 replicas".into()));
    }
    // Forward functionals from the first half, reversed ones from the second.
    let (a, b) = (&cycles[..half], &cycles[half..2 * half]);
    let col =
        |c: &[CycleSample], f: &dyn Fn(&CycleSample) -> f64| c.iter().map(f).collect::<Vec<f64>>();
    let pairs: [(&str, Vec<f64>, Vec<f64>); 4] = [
        (
            "start_vs_reversed_undershoot",
            col(a, &|c| c.s0),
            col(b, &|c| -c.undershoot - d),
        ),
        (
            "undershoot_vs_reversed_start",
            col(a, &|c| c.undershoot),
            col(b, &|c| -c.s0 - d),
        ),
        (
            "phase_durations",
            col(a, &|c| c.tau_down as f64),
            col(b, &|c| (c.t - c.tau_down) as f64),
        ),
        (
            "capped_max",
            col(a, &|c| c.max_capped),
            col(b, &|c| c.neg_min_capped),
        ),
    ];
    let mut rep = Report::default();
    let alpha = cfg.threshold("alpha");
    let mut min_p: f64 = 1.0;
    for (name, x, y) in &pairs {
        let t = ks_two_sample(x, y)?;
        rep.stat(format!("{name}.ks"), t.statistic, None, half as u64);
        rep.check(format!("{name}.p_value"), t.p_value, Ge, alpha);
        min_p = min_p.min(t.p_value);
    }
    rep.stat("bonferroni.min_p_value", min_p, None, 4);
    if min_p < alpha / 4.0 {
        rep.warn(format!(
            "smallest marginal p-value {min_p:.3e} is below the Bonferroni level {:.3e}",
            alpha / 4.0
        ));
    }
    rep.stat(
        "t.mean_first_half",
        mean(&col(a, &|c| c.t as f64)),
        None,
        half as u64,
    );
    rep.stat(
        "t.mean_second_half",
        mean(&col(b, &|c| c.t as f64)),
        None,
        half as u64,
    );

    // Joint law of (S_0, S_{T-1}) against its reversed image.
    let (gx, gy) = if cfg.spec.is_lattice() {
        (Geometry::lattice(d), Geometry::lattice(d))
    } else {
        (
            Geometry::binned(JOINT_BIN_WIDTH, 0.0, JOINT_RANGE)?,
            Geometry::binned(JOINT_BIN_WIDTH, -JOINT_RANGE, 0.0)?,
        )
    };
    let cell = |x: f64, y: f64| -> Result<Cell> { Ok((gx.index(x)?, gy.index(y)?)) };
    let fwd: Vec<Cell> = a
        .iter()
        .map(|c| cell(c.s0, c.undershoot))
        .collect::<Result<_>>()?;
    let rev: Vec<Cell> = b
        .iter()
        .map(|c| cell(-c.undershoot - d, -c.s0 - d))
        .collect::<Result<_>>()?;
    let observed = joint_tv(&fwd, &rev);
    // Permutation null: same sample sizes, no difference in law.
    let mut pooled: Vec<Cell> = fwd.iter().chain(&rev).copied().collect();
    let mut rng = boot_rng(ctx, "joint");
    let mut null = Vec::with_capacity(cfg.resamples);
    for _ in 0..cfg.resamples {
        for i in (1..pooled.len()).rev() {
            pooled.swap(i, rng.random_range(0..=i));
        }
        null.push(joint_tv(&pooled[..half], &pooled[half..]));
    }
    let (null_mean, null_sd) = (mean(&null), sample_sd(&null));
    rep.stat("joint.tv", observed, Some(null_sd), half as u64);
    rep.stat("joint.null_mean", null_mean, None, cfg.resamples as u64);
    let excess = if null_sd > 0.0 {
        (observed - null_mean) / null_sd
    } else {
        0.0
    };
    rep.check(
        "joint.excess_sigmas",
        excess,
        Le,
        cfg.threshold("joint_sigmas"),
    );

    let mut s = String::from("s0,undershoot,overshoot,t,tau_down,max_capped,neg_min_capped\n");
    for c in cycles.iter().take(CYCLE_DUMP) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.s0, c.undershoot, c.overshoot, c.t, c.tau_down, c.max_capped, c.neg_min_capped
        );
    }
    rep.artifact("cycles.csv", s);
    Ok(rep)
}

pub(crate) fn q_balance(ctx: &Ctx) -> Result<Report> {
    require_lattice(ctx)?;
    let r = detailed_balance_q(&ctx.cfg.spec, None)?;
    let mut rep = Report::default();
    rep.stat(
        "exact_zero",
        if r.exact_zero { 1.0 } else { 0.0 },
        None,
        r.states as u64,
    );
    rep.check(
        "residual",
        r.max_residual,
        Le,
        ctx.cfg.threshold("residual_max"),
    );
    let mut buf = Vec::new();
    q_kernel_lattice(&ctx.cfg.spec, None)?.write_csv(&mut buf)?;
    rep.artifact(
        "q_kernel.csv",
        String::from_utf8(buf).expect("csv is utf-8"),
    );
    Ok(rep)
}

pub(crate) fn p_balance(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let g = if cfg.spec.is_lattice() {
        Geometry::lattice(cfg.spec.span())
    } else {
        Geometry::binned(cfg.pair_width, 0.0, 2.0 * cfg.pair_width)?
    };
    let pairs = [(0, 1)];
    let mut rep = Report::default();
    let mut overlaps = 0usize;
    let mut min_p: f64 = 1.0;
    let mut s = String::from(
        "repeat,x,y,flux_xy,flux_yx,ci_xy_lo,ci_xy_hi,ci_yx_lo,ci_yx_hi,p_value,overlap\n",
    );
    for i in 0..cfg.repeats {
        for f in detailed_balance_p_mc(
            &ctx.sim,
            &pairs,
            g,
            cfg.replicas,
            sub_seed(ctx, P_P_BALANCE, i),
        )? {
            overlaps += f.overlap as usize;
            min_p = min_p.min(f.p_value);
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{},{},{},{}",
                f.x,
                f.y,
                f.flux_xy,
                f.flux_yx,
                f.ci_xy.0,
                f.ci_xy.1,
                f.ci_yx.0,
                f.ci_yx.1,
                f.p_value,
                f.overlap
            );
        }
    }
    let total = cfg.repeats * pairs.len();
    rep.stat("min_p_value", min_p, None, total as u64);
    rep.check(
        "overlap_fraction",
        overlaps as f64 / total as f64,
        Ge,
        cfg.threshold("min_overlap_fraction"),
    );
    rep.artifact("flux.csv", s);
    Ok(rep)
}

pub(crate) fn compose(ctx: &Ctx) -> Result<Report> {
    require_lattice(ctx)?;
    let cfg = &ctx.cfg;
    if cfg.chain_length > 3 {
        return Err(Error::Config(
            "compose supports chain_length up to 3".into(),
        ));
    }
    let x = cfg.start.unwrap_or(0.0);
    let mut rep = Report::default();
    let mut s = String::from("n,y,simulated,composed\n");
    for n in 1..=cfg.chain_length {
        let r = compose_check(
            &ctx.sim,
            x,
            n,
            cfg.replicas,
            cfg.replicas,
            sub_seed(ctx, P_COMPOSE, n),
        )?;
        rep.check(
            format!("tv_n{n}"),
            r.tv,
            Le,
            cfg.threshold(&format!("tv_max_n{n}")),
        );
        let mut keys: Vec<i64> = r
            .simulated
            .p
            .keys()
            .chain(r.composed.p.keys())
            .copied()
            .collect();
        keys.sort_unstable();
        keys.dedup();
        for k in keys {
            let _ = writeln!(
                s,
                "{n},{},{},{}",
                k as f64 * cfg.spec.span(),
                r.simulated.get(k),
                r.composed.get(k)
            );
        }
    }
    rep.artifact("compose.csv", s);
    Ok(rep)
}

fn ladders(ctx: &Ctx) -> Result<Vec<LadderSample>> {
    let total = ctx.cfg.ladder_samples;
    let chunks = total.div_ceil(LADDER_CHUNK);
    let parts = par(chunks, |c| {
        let mut rng = stream(ctx, P_LADDER, c);
        let len = LADDER_CHUNK.min(total - c * LADDER_CHUNK);
        (0..len)
            .map(|_| ctx.sim.ladder_with(&mut rng))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

fn masses_csv(header: &str, a: &Masses, b: &Masses, span: f64) -> String {
    let mut keys: Vec<i64> = a.p.keys().chain(b.p.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let mut s = format!("{header}\n");
    for k in keys {
        let _ = writeln!(s, "{},{},{}", k as f64 * span, a.get(k), b.get(k));
    }
    s
}

pub(crate) fn lemma1(ctx: &Ctx) -> Result<Report> {
    require_lattice(ctx)?;
    let cfg = &ctx.cfg;
    let span = cfg.spec.span();
    let counts = ladder_counts(&ladders(ctx)?, span)?;
    let laws = LadderLaws::from_counts(&counts)?;
    let via = pi_plus_via_ladder(&laws, &cfg.spec, None)?;
    let exact = InvariantMeasure::pi_plus(&cfg.spec).masses(&Geometry::lattice(span))?;
    let tv = tv_distance(&via, &exact)?;
    let mut rep = Report::default();
    rep.stat("via_ladder.mass", via.total(), None, counts.n());
    rep.check("via_ladder.tv", tv, Le, cfg.threshold("tv_max"));
    let r2 = ladder_normalization_check(
        &counts,
        &cfg.spec,
        cfg.resamples,
        &mut boot_rng(ctx, "normalization"),
    )?;
    rep.stat("normalization.lhs", r2.lhs, None, r2.n);
    rep.stat("normalization.rhs", r2.rhs, None, r2.n);
    rep.stat("normalization.diff", r2.diff, Some(r2.se), r2.n);
    let sigmas = if r2.se > 0.0 {
        r2.diff.abs() / r2.se
    } else if r2.diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    rep.check(
        "normalization.sigmas",
        sigmas,
        Le,
        cfg.threshold("normalization_sigmas"),
    );
    rep.artifact(
        "pi_plus_via_ladder.csv",
        masses_csv("y,via_ladder,exact", &via, &exact, span),
    );
    Ok(rep)
}

pub(crate) fn wiener_hopf(ctx: &Ctx) -> Result<Report> {
    require_lattice(ctx)?;
    let cfg = &ctx.cfg;
    let counts = ladder_counts(&ladders(ctx)?, cfg.spec.span())?;
    let laws = LadderLaws::from_counts(&counts)?;
    let residual = wiener_hopf_residual(&laws, &cfg.spec, None)?;
    let se = ladder_bootstrap_se(&counts, cfg.resamples, &mut boot_rng(ctx, "wh"), |l| {
        wiener_hopf_residual(l, &cfg.spec, None)
    })?;
    let mut rep = Report::default();
    rep.stat("residual", residual, Some(se), counts.n());
    rep.check("residual", residual, Le, cfg.threshold("residual_max"));
    Ok(rep)
}

pub(crate) fn far_level(ctx: &Ctx) -> Result<Report> {
    require_lattice(ctx)?;
    let cfg = &ctx.cfg;
    let span = cfg.spec.span();
    let x = cfg.start.unwrap_or(1000.0).abs();
    cfg.spec.lattice_units(x)?;
    let laws = LadderLaws::from_counts(&ladder_counts(&ladders(ctx)?, span)?)?;
    let g = Geometry::lattice(span);
    let mut rep = Report::default();

    let down_limit = far_level_down_limit(&laws)?;
    let down = par(cfg.replicas, |r| {
        Ok(ctx
            .sim
            .down_chain_with(x, 1, &mut stream(ctx, P_FAR_DOWN, r))?[0]
            .overshoot)
    })?;
    let down_emp = EmpiricalDistribution::from_samples(g, &down)?.masses()?;
    rep.check(
        "down.tv",
        tv_distance(&down_emp, &down_limit)?,
        Le,
        cfg.threshold("tv_max"),
    );

    // Up-crossing limit: P(H+ > y) / E H+ on y >= 0.
    let hp = &laws.h_plus;
    let mean_hp: f64 = hp.p.iter().map(|(&k, &v)| k as f64 * v).sum::<f64>() / hp.total();
    let top = hp.p.keys().next_back().copied().unwrap_or(0);
    let up_limit = Masses::new(
        g,
        (0..top)
            .map(|k| {
                (
                    k,
                    hp.p.range(k + 1..).map(|(_, v)| v).sum::<f64>() / hp.total() / mean_hp,
                )
            })
            .collect(),
    );
    let up = par(cfg.replicas, |r| {
        Ok(ctx
            .sim
            .overshoot_chain_with(-x, 1, &mut stream(ctx, P_FAR_UP, r))?[0]
            .overshoot)
    })?;
    let up_emp = EmpiricalDistribution::from_samples(g, &up)?.masses()?;
    rep.check(
        "up.tv",
        tv_distance(&up_emp, &up_limit)?,
        Le,
        cfg.threshold("tv_up_max"),
    );

    rep.artifact(
        "far_down.csv",
        masses_csv("y,simulated,limit", &down_emp, &down_limit, span),
    );
    rep.artifact(
        "far_up.csv",
        masses_csv("y,simulated,limit", &up_emp, &up_limit, span),
    );
    Ok(rep)
}

pub(crate) fn entrance(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let pi = InvariantMeasure::pi_h(&cfg.spec, cfg.h)?;
    let x = cfg.start.unwrap_or(0.0);
    let runs = par(cfg.replicas, |r| {
        let ev = ctx.sim.entrance_chain_with(
            cfg.h,
            x,
            cfg.chain_length,
            &mut stream(ctx, P_ENTRANCE, r),
        )?;
        Ok(ev[cfg.burn_in..]
            .iter()
            .map(|e| e.position)
            .collect::<Vec<f64>>())
    })?;
    let pooled: Vec<f64> = runs.into_iter().flatten().collect();
    let n = pooled.len() as u64;
    let mut rep = Report::default();
    let g = pi.geometry_with_width(cfg.bin_width)?;
    let emp = EmpiricalDistribution::from_samples(g, &pooled)?.masses()?;
    let target = pi.masses(&g)?;
    rep.stat("tv", tv_distance(&emp, &target)?, None, n);
    if pi.is_lattice() {
        let worst = target
            .p
            .keys()
            .chain(emp.p.keys())
            .map(|&k| (emp.get(k) - target.get(k)).abs())
            .fold(0.0, f64::max);
        rep.check("max_atom_error", worst, Le, cfg.threshold("atom_band"));
    } else {
        rep.check(
            "ks",
            ks_distance(&pooled, |y| pi.cdf(y))?,
            Le,
            cfg.threshold("ks_max"),
        );
    }
    rep.artifact("entrance_histogram.csv", histogram_csv(&emp, &target));
    Ok(rep)
}

/// One point of a TV curve with its null level.
struct CurvePoint {
    n: usize,
    tv: f64,
    se: f64,
    null_mean: f64,
}

impl CurvePoint {
    /// TV above the level an exact match would show.
    fn excess(&self) -> RatePoint {
        RatePoint {
            n: self.n as f64,
            tv: (self.tv - self.null_mean).max(0.0),
            se: self.se,
        }
    }
}

/// TV(law(O_n), pi_plus) for n = 0..=N from `x`; n = 0 is exact.
fn tv_curve(ctx: &Ctx, x: f64, probe: usize) -> Result<Vec<CurvePoint>> {
    let cfg = &ctx.cfg;
    let pi = InvariantMeasure::pi_plus(&cfg.spec);
    let g = pi.geometry_with_width(cfg.bin_width)?;
    let target = pi.masses(&g)?;
    let start = Masses::new(g, [(g.index(x)?, 1.0)].into_iter().collect());
    let mut out = vec![CurvePoint {
        n: 0,
        tv: tv_distance(&start, &target)?,
        se: 0.0,
        null_mean: 0.0,
    }];
    let seed = sub_seed(ctx, P_CURVE, probe);
    let runs = par(cfg.replicas, |r| {
        let ev = ctx.sim.overshoot_chain(
            x,
            cfg.chain_length,
            &RngStream::derive(seed, P_CURVE, r as u64),
        )?;
        Ok(ev.iter().map(|e| e.overshoot).collect::<Vec<f64>>())
    })?;
    let (null_mean, _) = null_tv(
        &target,
        cfg.replicas as u64,
        cfg.resamples,
        &mut boot_rng(ctx, &format!("null{probe}")),
    )?;
    for n in 1..=cfg.chain_length {
        let col: Vec<f64> = runs.iter().map(|v| v[n - 1]).collect();
        let emp = EmpiricalDistribution::from_samples(g, &col)?;
        let (tv, se) = tv_with_se(
            &emp,
            &target,
            cfg.resamples,
            &mut boot_rng(ctx, &format!("curve{probe}.{n}")),
        )?;
        out.push(CurvePoint {
            n,
            tv,
            se,
            null_mean,
        });
    }
    Ok(out)
}

fn curve_csv(points: &[(f64, Vec<CurvePoint>)]) -> String {
    let mut s = String::from("x,n,tv,se,null_mean,excess\n");
    for (x, curve) in points {
        for p in curve {
            let _ = writeln!(
                s,
                "{x},{},{},{},{},{}",
                p.n,
                p.tv,
                p.se,
                p.null_mean,
                p.excess().tv
            );
        }
    }
    s
}

pub(crate) fn tv_decay(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let x = cfg.start.unwrap_or(10.0);
    let curve = tv_curve(ctx, x, 0)?;
    let k = cfg.threshold("band_sigmas");
    let mut inversions = 0;
    for w in curve.windows(2) {
        let band = k * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
        if w[1].tv - w[0].tv > band {
            inversions += 1;
        }
    }
    let mut rep = Report::default();
    for p in &curve {
        rep.stat(
            format!("tv.n{}", p.n),
            p.tv,
            Some(p.se),
            cfg.replicas as u64,
        );
    }
    rep.check(
        "inversions_beyond_band",
        inversions as f64,
        Le,
        cfg.threshold("max_inversions"),
    );
    rep.artifact("tv_curve.csv", curve_csv(&[(x, curve)]));
    Ok(rep)
}

/// Rate fit of a TV curve: a confidence interval for r, or the bound
/// implied by the noise floor.
enum RateOutcome {
    Fit {
        r_hat: f64,
        r2: f64,
        ci: (f64, f64),
        points: usize,
    },
    Floor {
        r_bound: f64,
    },
    NotDecaying {
        r_hat: f64,
    },
}

fn fit_curve(curve: &[CurvePoint], floor: f64) -> Result<RateOutcome> {
    let pts: Vec<RatePoint> = curve
        .iter()
        .filter(|p| p.n >= 1)
        .map(CurvePoint::excess)
        .collect();
    match geometric_rate_fit(&pts, floor) {
        Ok(f) => Ok(RateOutcome::Fit {
            r_hat: f.r_hat,
            r2: f.r_squared,
            ci: f.r_ci,
            points: f.points_used,
        }),
        Err(Error::NoiseFloor { .. }) => {
            let all: Vec<RatePoint> = curve.iter().map(CurvePoint::excess).collect();
            Ok(RateOutcome::Floor {
                r_bound: noise_floor_bound(&all, floor),
            })
        }
        Err(Error::NotDecaying { slope }) => Ok(RateOutcome::NotDecaying { r_hat: slope.exp() }),
        Err(e) => Err(e),
    }
}

pub(crate) fn rate(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let x = cfg.start.unwrap_or(10.0);
    let curve = tv_curve(ctx, x, 0)?;
    let mut rep = Report::default();
    let r_max = cfg.threshold("r_max");
    match fit_curve(&curve, cfg.threshold("floor_sigmas"))? {
        RateOutcome::Fit {
            r_hat,
            r2,
            ci,
            points,
        } => {
            rep.stat("r_ci_lo", ci.0, None, points as u64);
            rep.stat("r_ci_hi", ci.1, None, points as u64);
            rep.check("r_hat", r_hat, Lt, r_max);
            rep.check("r_squared", r2, Ge, cfg.threshold("r2_min"));
        }
        RateOutcome::Floor { r_bound } => {
            rep.warn(format!(
                "fewer than 3 points clear the noise floor: convergence is faster than the sample resolves, r <= {r_bound:.4}"
            ));
            rep.check("r_bound", r_bound, Lt, r_max);
        }
        RateOutcome::NotDecaying { r_hat } => {
            rep.check("r_hat", r_hat, Lt, r_max);
        }
    }
    rep.artifact("tv_curve.csv", curve_csv(&[(x, curve)]));
    Ok(rep)
}

pub(crate) fn uniform_rate(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    if cfg.probes.is_empty() {
        return Err(Error::Config("uniform-rate needs probes".into()));
    }
    let mut rep = Report::default();
    let mut curves = Vec::new();
    let mut rows = String::from("x,kind,r,lo,hi\n");
    let (mut max_lo, mut min_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, &x) in cfg.probes.iter().enumerate() {
        let curve = tv_curve(ctx, x, i)?;
        let (kind, r, lo, hi) = match fit_curve(&curve, cfg.threshold("floor_sigmas"))? {
            RateOutcome::Fit { r_hat, ci, .. } => ("fit", r_hat, ci.0, ci.1),
            RateOutcome::Floor { r_bound } => ("floor", r_bound, 0.0, r_bound),
            RateOutcome::NotDecaying { r_hat } => {
                rep.warn(format!("TV curve from x={x} does not decay"));
                ("not_decaying", r_hat, r_hat, r_hat)
            }
        };
        rep.stat(format!("r.x{x}"), r, None, cfg.replicas as u64);
        let _ = writeln!(rows, "{x},{kind},{r},{lo},{hi}");
        max_lo = max_lo.max(lo);
        min_hi = min_hi.min(hi);
        curves.push((x, curve));
    }
    // The intervals share a point iff the largest lower end is below the smallest upper end.
    rep.check(
        "interval_gap",
        max_lo - min_hi,
        Le,
        cfg.threshold("max_gap"),
    );
    rep.artifact("uniform_rate.csv", rows);
    rep.artifact("tv_curves.csv", curve_csv(&curves));
    Ok(rep)
}

pub(crate) fn drift(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    let fit = drift_fit(
        &ctx.sim,
        cfg.gamma,
        &cfg.probes,
        cfg.replicas,
        sub_seed(ctx, P_DRIFT, 0),
        cfg.guard_policy,
    )?;
    let mut rep = Report::default();
    rep.stat("rho_hat", fit.rho_hat, None, cfg.replicas as u64);
    rep.stat("l_hat", fit.l_hat, None, cfg.replicas as u64);
    let mut censored = 0;
    let mut s = String::from("x,mean,se,ratio,ratio_se,replicas,censored\n");
    for p in &fit.probes {
        censored += p.censored;
        if let Some(r) = p.ratio {
            rep.stat(format!("ratio.x{}", p.x), r, p.ratio_se, p.replicas as u64);
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.x,
            p.mean,
            p.se,
            opt(p.ratio),
            opt(p.ratio_se),
            p.replicas,
            p.censored
        );
    }
    for w in &fit.warnings {
        rep.warn(w.clone());
    }
    let total = (cfg.replicas * fit.probes.len()) as f64;
    rep.check(
        "censored_fraction",
        censored as f64 / total,
        Le,
        cfg.threshold("max_censored_fraction"),
    );
    match (cfg.spec.stable_index(), cfg.spec.positivity()) {
        (Some(alpha), Some(p)) => {
            let target = stable_drift_limit(alpha, p, cfg.gamma);
            rep.stat("ratio_limit", target, None, 0);
            for probe in &fit.probes[fit.probes.len() / 2..] {
                if let Some(r) = probe.ratio {
                    rep.check(
                        format!("ratio_error.x{}", probe.x),
                        (r - target).abs(),
                        Le,
                        cfg.threshold("ratio_tol"),
                    );
                }
            }
        }
        _ => {
            let ratios: Vec<f64> = fit.probes.iter().filter_map(|p| p.ratio).collect();
            let inversions = ratios.windows(2).filter(|w| w[1] >= w[0]).count();
            rep.check(
                "ratio_inversions",
                inversions as f64,
                Le,
                cfg.threshold("max_inversions"),
            );
        }
    }
    rep.artifact("drift.csv", s);
    Ok(rep)
}

pub(crate) fn crossings_growth(ctx: &Ctx) -> Result<Report> {
    let cfg = &ctx.cfg;
    if cfg.probes.len() < 2 || cfg.probes.iter().any(|&n| n < 1.0) {
        return Err(Error::Config(
            "crossings-growth needs at least two step counts >= 1".into(),
        ));
    }
    let x = cfg.start.unwrap_or(0.0);
    let mut rep = Report::default();
    let mut s = String::from("steps,mean,se\n");
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (i, &steps) in cfg.probes.iter().enumerate() {
        let seed = sub_seed(ctx, P_CROSSINGS, i);
        let counts = par(cfg.replicas, |r| {
            Ok(ctx.sim.count_upcrossings(
                x,
                steps as u64,
                &RngStream::derive(seed, P_CROSSINGS, r as u64),
            )? as f64)
        })?;
        let (m, se) = (
            mean(&counts),
            sample_sd(&counts) / (counts.len() as f64).sqrt(),
        );
        rep.stat(
            format!("mean_crossings.n{steps}"),
            m,
            Some(se),
            cfg.replicas as u64,
        );
        let _ = writeln!(s, "{steps},{m},{se}");
        if m > 0.0 {
            lx.push(steps.ln());
            ly.push(m.ln());
        }
    }
    if lx.len() < 2 {
        return Err(Error::InsufficientSamples {
            got: lx.len() as u64,
            need: 2,
        });
    }
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let slope = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / sxx;
    let target = cfg.spec.stable_index().map_or(0.5, |a| 1.0 - 1.0 / a);
    rep.stat("exponent", slope, None, lx.len() as u64);
    rep.stat("exponent_target", target, None, 0);
    rep.check(
        "exponent_error",
        (slope - target).abs(),
        Le,
        cfg.threshold("exponent_tol"),
    );
    rep.artifact("crossings.csv", s);
    Ok(rep)
}
