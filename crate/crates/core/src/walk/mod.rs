//! Crossing, entrance and ladder extraction from random-walk trajectories.
//!
//! Up-crossings of zero are the steps with `S[k-1] < 0 <= S[k]`; down-crossings
//! are the steps with `S[k-1] >= 0 > S[k]`. The asymmetry at zero is
//! deliberate: it is what makes the overshoot chain live on `[0, M+)` and the
//! down-overshoot chain on `(M-, 0)`.
//!
//! Lattice walks run in integer units of the span. A [`Simulator`] prepares
//! the step law (including its skip tables) once and is then shared across
//! replicas.

pub mod engine;

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::IncrementSpec;
use crate::rng::{RngStream, StreamRng};
pub use engine::DEFAULT_GUARD;
use engine::{ContinuousLaw, Exit, LatticeLaw, Level, Position, StepLaw, Walker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// The n-th crossing of level zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub n: u64,
    /// Steps since the start (saturates at `u64::MAX`).
    pub time: u64,
    /// Position right after the crossing.
    pub overshoot: f64,
    /// Position one step before the crossing.
    pub undershoot: f64,
    pub direction: Direction,
}

/// First ladder heights of a walk started at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderSample {
    /// First strictly positive value.
    pub h_plus: f64,
    /// First strictly negative value.
    pub h_minus: f64,
    /// First nonpositive value after time zero.
    pub h_tilde_minus: f64,
}

/// The n-th entrance into `[0, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntranceEvent {
    pub n: u64,
    pub time: u64,
    pub position: f64,
}

/// Functionals of one up-crossing cycle `S[0], ..., S[T-1]` started at
/// `S[0] >= 0`, used by the time-reversal checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    pub s0: f64,
    /// `S[T-1]`, the undershoot of the first up-crossing.
    pub undershoot: f64,
    /// `S[T]`, the overshoot of the first up-crossing.
    pub overshoot: f64,
    /// First up-crossing time T.
    pub t: u64,
    /// First time the walk is negative.
    pub tau_down: u64,
    /// `min(max S[0..T], cap)`.
    pub max_capped: f64,
    /// `min(-min S[0..T] - d, cap)`.
    pub neg_min_capped: f64,
}

enum AnyLaw {
    Lattice(LatticeLaw),
    Continuous(ContinuousLaw),
}

/// A prepared increment law plus a work guard.
pub struct Simulator {
    spec: IncrementSpec,
    law: AnyLaw,
    guard: u64,
}

impl Simulator {
    pub fn new(spec: &IncrementSpec) -> Result<Self> {
        let law = match spec.as_lattice() {
            Some(p) => AnyLaw::Lattice(LatticeLaw::new(p)),
            None => AnyLaw::Continuous(ContinuousLaw::new(spec)?),
        };
        Ok(Self {
            spec: spec.clone(),
            law,
            guard: DEFAULT_GUARD,
        })
    }

    /// Sets the per-call guard on work units (single steps plus skipped blocks).
    pub fn with_guard(mut self, guard: u64) -> Self {
        self.guard = guard;
        self
    }

    pub fn guard(&self) -> u64 {
        self.guard
    }

    pub fn spec(&self) -> &IncrementSpec {
        &self.spec
    }

    /// Up-crossing events 1..=n of the walk started at `x`.
    pub fn overshoot_chain(
        &self,
        x: f64,
        n: usize,
        stream: &RngStream,
    ) -> Result<Vec<CrossingEvent>> {
        self.overshoot_chain_with(x, n, &mut stream.rng())
    }

    pub fn overshoot_chain_with(
        &self,
        x: f64,
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<CrossingEvent>> {
        require_count(n)?;
        match &self.law {
            AnyLaw::Lattice(l) => {
                crossings(l, self.lattice_start(x)?, n, Direction::Up, self.guard, rng)
            }
            AnyLaw::Continuous(l) => {
                crossings(l, finite_start(x)?, n, Direction::Up, self.guard, rng)
            }
        }
    }

    /// Down-crossing events 1..=n of the walk started at `x`.
    pub fn down_chain(&self, x: f64, n: usize, stream: &RngStream) -> Result<Vec<CrossingEvent>> {
        self.down_chain_with(x, n, &mut stream.rng())
    }

    pub fn down_chain_with(
        &self,
        x: f64,
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<CrossingEvent>> {
        require_count(n)?;
        match &self.law {
            AnyLaw::Lattice(l) => crossings(
                l,
                self.lattice_start(x)?,
                n,
                Direction::Down,
                self.guard,
                rng,
            ),
            AnyLaw::Continuous(l) => {
                crossings(l, finite_start(x)?, n, Direction::Down, self.guard, rng)
            }
        }
    }

    /// Entrance events 1..=n into `[0, h]` of the walk started at `x`.
    pub fn entrance_chain(
        &self,
        h: f64,
        x: f64,
        n: usize,
        stream: &RngStream,
    ) -> Result<Vec<EntranceEvent>> {
        self.entrance_chain_with(h, x, n, &mut stream.rng())
    }

    pub fn entrance_chain_with(
        &self,
        h: f64,
        x: f64,
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<EntranceEvent>> {
        require_count(n)?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "interval length h must be positive and finite, got {h}"
            )));
        }
        match &self.law {
            AnyLaw::Lattice(l) => {
                let hu = self.spec.lattice_units(h).map_err(|_| {
                    Error::InvalidArgument(format!("h = {h} is not a multiple of the span"))
                })?;
                entrances(l, hu, self.lattice_start(x)?, n, self.guard, rng)
            }
            AnyLaw::Continuous(l) => entrances(l, h, finite_start(x)?, n, self.guard, rng),
        }
    }

    /// One ladder sample from a fresh walk at zero.
    pub fn ladder_with(&self, rng: &mut StreamRng) -> Result<LadderSample> {
        match &self.law {
            AnyLaw::Lattice(l) => ladder(l, self.guard, rng),
            AnyLaw::Continuous(l) => ladder(l, self.guard, rng),
        }
    }

    /// `m` independent ladder samples drawn sequentially from one stream.
    pub fn sample_ladders(&self, m: usize, stream: &RngStream) -> Result<Vec<LadderSample>> {
        require_count(m)?;
        let mut rng = stream.rng();
        (0..m).map(|_| self.ladder_with(&mut rng)).collect()
    }

    /// Number of up-crossings among the first `steps` steps from `x`.
    pub fn count_upcrossings(&self, x: f64, steps: u64, stream: &RngStream) -> Result<u64> {
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "step count must be at least 1".into(),
            ));
        }
        let mut rng = stream.rng();
        match &self.law {
            AnyLaw::Lattice(l) => {
                upcrossings(l, self.lattice_start(x)?, steps, self.guard, &mut rng)
            }
            AnyLaw::Continuous(l) => upcrossings(l, finite_start(x)?, steps, self.guard, &mut rng),
        }
    }

    /// Runs one up-crossing cycle from `x >= 0`, tracking the capped path
    /// extremes used by the time-reversal tests.
    pub fn cycle_with(&self, x: f64, cap: f64, rng: &mut StreamRng) -> Result<CycleSample> {
        if x < 0.0 {
            return Err(Error::InvalidArgument(
                "cycle must start at a nonnegative point".into(),
            ));
        }
        if !(cap > 0.0) {
            return Err(Error::InvalidArgument("cap must be positive".into()));
        }
        match &self.law {
            AnyLaw::Lattice(l) => {
                let span = self.spec.span();
                let cap_u = (cap / span).ceil() as i64;
                cycle(l, self.lattice_start(x)?, cap_u, 1, self.guard, rng)
            }
            AnyLaw::Continuous(l) => cycle(l, x, cap, 0.0, self.guard, rng),
        }
    }

    fn lattice_start(&self, x: f64) -> Result<i64> {
        finite_start(x)?;
        self.spec.lattice_units(x)
    }
}

fn require_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument(
            "event count must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

fn finite_start(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidArgument(format!("start {x} is not finite")))
    }
}

fn crossings<L: StepLaw>(
    law: &L,
    start: L::Pos,
    n: usize,
    want: Direction,
    guard: u64,
    rng: &mut StreamRng,
) -> Result<Vec<CrossingEvent>> {
    let zero = L::Pos::ZERO;
    let mut w = Walker::new(law, start, rng.clone(), guard);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (level, dir) = if w.pos() >= zero {
            (Level::Below(zero), Direction::Down)
        } else {
            (Level::AtLeast(zero), Direction::Up)
        };
        let exit = match dir {
            Direction::Down => w.run(None, Some(level), None)?,
            Direction::Up => w.run(Some(level), None, None)?,
        };
        let Exit::Hit { prev, .. } = exit else {
            unreachable!("no deadline set")
        };
        if dir == want {
            out.push(CrossingEvent {
                n: out.len() as u64 + 1,
                time: w.time(),
                overshoot: law.real(w.pos()),
                undershoot: law.real(prev),
                direction: dir,
            });
        }
    }
    *rng = w.rng().clone();
    Ok(out)
}

fn entrances<L: StepLaw>(
    law: &L,
    h: L::Pos,
    start: L::Pos,
    n: usize,
    guard: u64,
    rng: &mut StreamRng,
) -> Result<Vec<EntranceEvent>> {
    let zero = L::Pos::ZERO;
    let mut w = Walker::new(law, start, rng.clone(), guard);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = w.pos();
        if s >= zero && s <= h {
            w.run(Some(Level::Above(h)), Some(Level::Below(zero)), None)?;
            continue;
        }
        let (upper, lower) = if s < zero {
            (Some(Level::AtLeast(zero)), None)
        } else {
            (None, Some(Level::AtMost(h)))
        };
        w.run(upper, lower, None)?;
        let s = w.pos();
        if s >= zero && s <= h {
            out.push(EntranceEvent {
                n: out.len() as u64 + 1,
                time: w.time(),
                position: law.real(s),
            });
        }
    }
    *rng = w.rng().clone();
    Ok(out)
}

fn ladder<L: StepLaw>(law: &L, guard: u64, rng: &mut StreamRng) -> Result<LadderSample> {
    let zero = L::Pos::ZERO;
    let mut w = Walker::new(law, zero, rng.clone(), guard);
    let (mut plus, mut minus, mut tilde) = (None, None, None);
    while plus.is_none() || minus.is_none() || tilde.is_none() {
        let upper = plus.is_none().then_some(Level::Above(zero));
        let lower = if tilde.is_none() {
            Some(Level::AtMost(zero))
        } else if minus.is_none() {
            Some(Level::Below(zero))
        } else {
            None
        };
        w.run(upper, lower, None)?;
        let s = w.pos();
        if plus.is_none() && s > zero {
            plus = Some(s);
        }
        if tilde.is_none() && s <= zero {
            tilde = Some(s);
        }
        if minus.is_none() && s < zero {
            minus = Some(s);
        }
    }
    *rng = w.rng().clone();
    Ok(LadderSample {
        h_plus: law.real(plus.unwrap()),
        h_minus: law.real(minus.unwrap()),
        h_tilde_minus: law.real(tilde.unwrap()),
    })
}

fn upcrossings<L: StepLaw>(
    law: &L,
    start: L::Pos,
    steps: u64,
    guard: u64,
    rng: &mut StreamRng,
) -> Result<u64> {
    let zero = L::Pos::ZERO;
    let mut w = Walker::new(law, start, rng.clone(), guard);
    let mut count = 0;
    loop {
        let exit = if w.pos() >= zero {
            w.run(None, Some(Level::Below(zero)), Some(steps))?
        } else {
            let e = w.run(Some(Level::AtLeast(zero)), None, Some(steps))?;
            if matches!(e, Exit::Hit { .. }) {
                count += 1;
            }
            e
        };
        if exit == Exit::Deadline {
            return Ok(count);
        }
    }
}

fn cycle<L: StepLaw>(
    law: &L,
    start: L::Pos,
    cap: L::Pos,
    span_step: L::Pos,
    guard: u64,
    rng: &mut StreamRng,
) -> Result<CycleSample>
where
    L::Pos: Position,
{
    let zero = L::Pos::ZERO;
    let mut w = Walker::new(law, start, rng.clone(), guard);
    // Nonnegative phase: track the maximum step by step until it reaches the cap.
    let mut max = start;
    while w.pos() >= zero && max < cap {
        w.step()?;
        if w.pos() > max {
            max = w.pos();
        }
    }
    if w.pos() >= zero {
        w.run(None, Some(Level::Below(zero)), None)?;
    }
    let tau_down = w.time();
    // Negative phase: track the minimum until -min - d reaches the cap.
    let mut min = w.pos();
    let mut prev = min;
    let floor = zero - cap - span_step;
    while w.pos() < zero && min > floor {
        prev = w.step()?;
        if w.pos() < min {
            min = w.pos();
        }
    }
    if w.pos() < zero {
        match w.run(Some(Level::AtLeast(zero)), None, None)? {
            Exit::Hit { prev: p, .. } => prev = p,
            Exit::Deadline => unreachable!("no deadline set"),
        }
    }
    let cap_r = law.real(cap);
    let sample = CycleSample {
        s0: law.real(start),
        undershoot: law.real(prev),
        overshoot: law.real(w.pos()),
        t: w.time(),
        tau_down,
        max_capped: law.real(max).min(cap_r),
        neg_min_capped: law.real(zero - min - span_step).min(cap_r),
    };
    *rng = w.rng().clone();
    Ok(sample)
}

/// Writes crossing events as CSV with header `replica,n,T_n,O_n,U_n,direction`.
pub fn write_events_csv<W: Write>(out: &mut W, events: &[(u64, CrossingEvent)]) -> Result<()> {
    let mut buf = String::from("replica,n,T_n,O_n,U_n,direction\n");
    for (replica, e) in events {
        let dir = match e.direction {
            Direction::Up => "up",
            Direction::Down => "down",
        };
        let _ = writeln!(
            buf,
            "{replica},{},{},{},{},{dir}",
            e.n, e.time, e.overshoot, e.undershoot
        );
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// Convenience wrapper building a [`Simulator`] for one call.
pub fn simulate_overshoot_chain(
    spec: &IncrementSpec,
    x: f64,
    n: usize,
    stream: &RngStream,
) -> Result<Vec<CrossingEvent>> {
    Simulator::new(spec)?.overshoot_chain(x, n, stream)
}

pub fn simulate_down_chain(
    spec: &IncrementSpec,
    x: f64,
    n: usize,
    stream: &RngStream,
) -> Result<Vec<CrossingEvent>> {
    Simulator::new(spec)?.down_chain(x, n, stream)
}

pub fn simulate_entrance_chain(
    spec: &IncrementSpec,
    h: f64,
    x: f64,
    n: usize,
    stream: &RngStream,
) -> Result<Vec<EntranceEvent>> {
    Simulator::new(spec)?.entrance_chain(h, x, n, stream)
}

pub fn sample_ladders(
    spec: &IncrementSpec,
    m: usize,
    stream: &RngStream,
) -> Result<Vec<LadderSample>> {
    Simulator::new(spec)?.sample_ladders(m, stream)
}

pub fn count_upcrossings(
    spec: &IncrementSpec,
    x: f64,
    steps: u64,
    stream: &RngStream,
) -> Result<u64> {
    Simulator::new(spec)?.count_upcrossings(x, steps, stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm1() -> IncrementSpec {
        IncrementSpec::lattice_uniform(1.0, &[-1.0, 1.0]).unwrap()
    }

    fn pm2() -> IncrementSpec {
        IncrementSpec::lattice_uniform(1.0, &[-2.0, -1.0, 1.0, 2.0]).unwrap()
    }

    #[test]
    fn unit_steps_overshoot_zero() {
        let ev = simulate_overshoot_chain(&pm1(), 5.0, 3, &RngStream::new(1, 0)).unwrap();
        assert_eq!(ev.len(), 3);
        assert!(ev
            .iter()
            .all(|e| e.overshoot == 0.0 && e.undershoot == -1.0));
    }

    #[test]
    fn unit_steps_first_down_overshoot() {
        let ev = simulate_down_chain(&pm1(), 5.0, 1, &RngStream::new(1, 0)).unwrap();
        assert_eq!(ev[0].overshoot, -1.0);
        assert_eq!(ev[0].undershoot, 0.0);
    }

    #[test]
    fn crossing_invariants_hold() {
        let spec = pm2();
        let sim = Simulator::new(&spec).unwrap();
        for r in 0..50 {
            let ev = sim
                .overshoot_chain(0.0, 200, &RngStream::new(9, r))
                .unwrap();
            let mut last = 0;
            for e in &ev {
                assert!(e.undershoot < 0.0 && e.overshoot >= 0.0 && e.overshoot < 2.0);
                assert!([1.0, 2.0].contains(&(e.overshoot - e.undershoot)));
                assert!(e.time > last);
                last = e.time;
            }
            let dn = sim.down_chain(0.0, 200, &RngStream::new(9, r)).unwrap();
            for e in &dn {
                assert!(e.undershoot >= 0.0 && e.overshoot < 0.0 && e.overshoot > -3.0);
            }
        }
    }

    #[test]
    fn continuous_crossings_replay() {
        let spec = IncrementSpec::laplace(1.0).unwrap();
        let ev = simulate_overshoot_chain(&spec, 3.0, 500, &RngStream::new(2, 0)).unwrap();
        assert!(ev.iter().all(|e| e.undershoot < 0.0 && e.overshoot >= 0.0));
    }

    #[test]
    fn determinism() {
        let spec = IncrementSpec::laplace(1.0).unwrap();
        let a = simulate_overshoot_chain(&spec, 0.0, 50, &RngStream::new(4, 4)).unwrap();
        let b = simulate_overshoot_chain(&spec, 0.0, 50, &RngStream::new(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_starts() {
        let sim = Simulator::new(&pm2()).unwrap();
        assert!(matches!(
            sim.overshoot_chain(0.5, 1, &RngStream::new(0, 0)),
            Err(Error::OffLattice(_))
        ));
        assert!(sim.overshoot_chain(0.0, 0, &RngStream::new(0, 0)).is_err());
        assert!(sim
            .entrance_chain(f64::INFINITY, 0.0, 1, &RngStream::new(0, 0))
            .is_err());
        assert!(sim
            .entrance_chain(0.5, 0.0, 1, &RngStream::new(0, 0))
            .is_err());
    }

    #[test]
    fn entrances_land_inside() {
        let sim = Simulator::new(&IncrementSpec::laplace(1.0).unwrap()).unwrap();
        let ev = sim
            .entrance_chain(1.0, 5.0, 1000, &RngStream::new(3, 0))
            .unwrap();
        assert!(ev.iter().all(|e| (0.0..=1.0).contains(&e.position)));
        assert!(ev.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn unit_step_ladders() {
        let ls = sample_ladders(&pm1(), 4000, &RngStream::new(5, 0)).unwrap();
        assert!(ls.iter().all(|l| l.h_plus == 1.0 && l.h_minus == -1.0));
        let zeros = ls.iter().filter(|l| l.h_tilde_minus == 0.0).count() as f64 / 4000.0;
        assert!((zeros - 0.5).abs() < 4.0 * (0.25f64 / 4000.0).sqrt());
        assert!(ls
            .iter()
            .all(|l| l.h_tilde_minus == 0.0 || l.h_tilde_minus == -1.0));
    }

    #[test]
    fn ladder_signs() {
        for spec in [pm2(), IncrementSpec::laplace(1.0).unwrap()] {
            let ls = sample_ladders(&spec, 2000, &RngStream::new(6, 0)).unwrap();
            assert!(ls
                .iter()
                .all(|l| l.h_plus > 0.0 && l.h_minus < 0.0 && l.h_tilde_minus <= 0.0));
        }
    }

    #[test]
    fn upcrossing_counts() {
        assert_eq!(
            count_upcrossings(&pm1(), 0.0, 1, &RngStream::new(0, 0)).unwrap(),
            0
        );
        assert!(count_upcrossings(&pm1(), -1.0, 1, &RngStream::new(0, 0)).unwrap() <= 1);
        assert!(count_upcrossings(&pm1(), 0.0, 0, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn upcrossings_match_plain_count() {
        // Compare the skipping engine with a naive count on the same law.
        let spec = pm2();
        let n = 20_000u64;
        let reps = 400;
        let fast: f64 = (0..reps)
            .map(|r| count_upcrossings(&spec, 0.0, n, &RngStream::new(8, r)).unwrap() as f64)
            .sum::<f64>()
            / reps as f64;
        let pmf = spec.as_lattice().unwrap();
        let mut slow = 0.0;
        for r in 0..reps {
            let mut rng = RngStream::new(80, r).rng();
            let (mut s, mut c) = (0i64, 0u64);
            for _ in 0..n {
                let p = s;
                s += pmf.draw_unit(&mut rng);
                if p < 0 && s >= 0 {
                    c += 1;
                }
            }
            slow += c as f64;
        }
        slow /= reps as f64;
        // Both estimate the same mean; E L_N ~ 0.4 sqrt(N) ~ 57 with sd ~ 43.
        assert!(
            (fast - slow).abs() < 4.0 * 43.0 * (2.0 / reps as f64).sqrt(),
            "{fast} vs {slow}"
        );
    }

    #[test]
    fn cycle_sample_consistency() {
        let sim = Simulator::new(&pm2()).unwrap();
        let mut rng = RngStream::new(7, 0).rng();
        for _ in 0..2000 {
            let c = sim.cycle_with(1.0, 10.0, &mut rng).unwrap();
            assert!(c.tau_down >= 1 && c.tau_down < c.t);
            assert!(c.undershoot < 0.0 && c.overshoot >= 0.0);
            assert!(c.max_capped >= c.s0 && c.max_capped <= 10.0);
            assert!(c.neg_min_capped >= 0.0 && c.neg_min_capped <= 10.0);
            assert!(c.neg_min_capped >= -c.undershoot - 1.0);
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let e = CrossingEvent {
            n: 1,
            time: 4,
            overshoot: 0.0,
            undershoot: -1.0,
            direction: Direction::Up,
        };
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &[(3, e)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "replica,n,T_n,O_n,U_n,direction\n3,1,4,0,-1,up\n");
    }
}
