//! Geometric rate fits and drift-function estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::bootstrap::{bootstrap_mean_se, mean, DEFAULT_RESAMPLES};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::walk::Simulator;

/// Fewest points a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 3;

/// One point of a distance-versus-time curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: f64,
    pub tv: f64,
    /// Standard error of `tv`; zero for exactly known points.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub r_hat: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    /// 95% interval for r from the least-squares slope.
    pub r_ci: (f64, f64),
    pub n_range: (f64, f64),
    pub points_used: usize,
}

/// Least squares of `log tv` on `n` over the points above the noise floor
/// (`tv > floor_mult * se`). `r_hat = exp(slope)`.
///
/// Fails with `NoiseFloor` when fewer than [`MIN_FIT_POINTS`] points clear the
/// floor; the error carries the rate bound implied by the first point that
/// sinks below it.
pub fn geometric_rate_fit(curve: &[RatePoint], floor_mult: f64) -> Result<RateFit> {
    let mut pts: Vec<RatePoint> = curve.to_vec();
    pts.sort_by(|a, b| a.n.total_cmp(&b.n));
    let above = |p: &RatePoint| p.tv > 0.0 && p.tv > floor_mult * p.se;
    let usable: Vec<RatePoint> = pts.iter().copied().filter(above).collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::NoiseFloor {
            usable: usable.len(),
            r_bound: noise_floor_bound(&pts, floor_mult),
        });
    }
    let k = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|p| p.n).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.tv.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "rate fit needs distinct n values".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - icept - slope * x).powi(2))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    if slope >= 0.0 {
        return Err(Error::NotDecaying { slope });
    }
    let df = k - 2.0;
    let slope_se = if df > 0.0 {
        (sse / df / sxx).sqrt()
    } else {
        0.0
    };
    let t = if df > 0.0 {
        StudentsT::new(0.0, 1.0, df)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(1.96)
    } else {
        0.0
    };
    let r_ci = (
        (slope - t * slope_se).exp(),
        (slope + t * slope_se).exp().min(1.0),
    );
    Ok(RateFit {
        r_hat: slope.exp(),
        log_intercept: icept,
        r_squared: r2,
        r_ci,
        n_range: (xs[0], xs[xs.len() - 1]),
        points_used: usable.len(),
    })
}

/// Rate bound implied by the last point above the floor and the first one
/// below it: r <= (floor / tv_anchor)^(1 / gap).
pub fn noise_floor_bound(pts: &[RatePoint], floor_mult: f64) -> f64 {
    let Some(anchor) = pts
        .iter()
        .position(|p| p.tv > 0.0 && p.tv > floor_mult * p.se)
    else {
        return 1.0;
    };
    let mut last = anchor;
    for (i, p) in pts.iter().enumerate().skip(anchor + 1) {
        if p.tv > floor_mult * p.se {
            last = i;
            continue;
        }
        let floor = (floor_mult * p.se).max(p.tv);
        let gap = p.n - pts[last].n;
        if gap <= 0.0 || floor <= 0.0 {
            break;
        }
        return (floor / pts[last].tv).powf(1.0 / gap).min(1.0);
    }
    1.0
}

/// What to do with a replica that exhausts the work guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardPolicy {
    /// Propagate `GuardExceeded`.
    #[default]
    Error,
    /// Drop the replica and count it.
    Censor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProbe {
    pub x: f64,
    /// Estimate of E_x O_1^gamma.
    pub mean: f64,
    pub se: f64,
    /// `mean / x^gamma`; absent for x = 0.
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub replicas: usize,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub gamma: f64,
    pub rho_hat: f64,
    pub l_hat: f64,
    pub probes: Vec<DriftProbe>,
    pub warnings: Vec<String>,
}

/// Checks that `gamma` is admissible for the drift function x^gamma.
pub fn check_gamma(sim: &Simulator, gamma: f64) -> Result<()> {
    match sim.spec().stable_index() {
        None if gamma == 0.0 || gamma == 1.0 => Ok(()),
        None => Err(Error::InvalidArgument(format!(
            "finite-variance drift uses gamma in {{0, 1}}, got {gamma}"
        ))),
        Some(alpha) if gamma > 0.0 && gamma < alpha - 1.0 => Ok(()),
        Some(alpha) => Err(Error::InvalidArgument(format!(
            "heavy-tailed drift needs 0 < gamma < alpha - 1 = {}, got {gamma}",
            alpha - 1.0
        ))),
    }
}

/// Monte Carlo estimates of E_x O_1^gamma over a probe grid.
///
/// `rho_hat` is the largest ratio `E_x O_1^gamma / x^gamma` over the top half
/// of the probes; `l_hat` is the largest excess `(E_x O_1^gamma - rho_hat
/// x^gamma)+` over all probes plus two standard errors.
pub fn drift_fit(
    sim: &Simulator,
    gamma: f64,
    xs: &[f64],
    m: usize,
    seed: u64,
    policy: GuardPolicy,
) -> Result<DriftFit> {
    check_gamma(sim, gamma)?;
    if xs.is_empty() || m == 0 {
        return Err(Error::Empty("drift probes"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || xs[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "probe grid must be nonnegative and increasing".into(),
        ));
    }
    let mut probes = Vec::with_capacity(xs.len());
    let mut warnings = Vec::new();
    for (pi, &x) in xs.iter().enumerate() {
        let outcomes: Vec<Result<f64>> = (0..m)
            .into_par_iter()
            .map(|r| {
                let stream = RngStream::derive(seed, 0x0d41, (pi * m + r) as u64);
                let ev = sim.overshoot_chain(x, 1, &stream)?;
                Ok(ev[0].overshoot.powf(gamma))
            })
            .collect();
        let mut vals = Vec::with_capacity(m);
        let mut censored = 0;
        for o in outcomes {
            match o {
                Ok(v) => vals.push(v),
                Err(Error::GuardExceeded { .. }) if policy == GuardPolicy::Censor => censored += 1,
                Err(e) => return Err(e),
            }
        }
        if vals.is_empty() {
            return Err(Error::Empty("all drift replicas censored"));
        }
        let est = mean(&vals);
        let mut brng = RngStream::derive(seed, 0x0d42, pi as u64).rng();
        let se = bootstrap_mean_se(&vals, DEFAULT_RESAMPLES, &mut brng);
        if se > 0.1 * est.abs() && est != 0.0 {
            warnings.push(format!(
                "HeavyTailVariance at x={x}: bootstrap s.e. {se:.4} exceeds 10% of {est:.4}"
            ));
        }
        if censored > 0 {
            warnings.push(format!(
                "{censored} of {m} replicas censored by the guard at x={x}"
            ));
        }
        let scale = x.powf(gamma);
        let (ratio, ratio_se) = if x > 0.0 {
            (Some(est / scale), Some(se / scale))
        } else {
            (None, None)
        };
        probes.push(DriftProbe {
            x,
            mean: est,
            se,
            ratio,
            ratio_se,
            replicas: vals.len(),
            censored,
        });
    }
    let top = &probes[probes.len() / 2..];
    let rho_hat = top.iter().filter_map(|p| p.ratio).fold(0.0, f64::max);
    let l_hat = probes
        .iter()
        .map(|p| {
            let excess = (p.mean - rho_hat * p.x.powf(gamma)).max(0.0);
            if excess > 0.0 {
                excess + 2.0 * p.se
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(DriftFit {
        gamma,
        rho_hat,
        l_hat,
        probes,
        warnings,
    })
}

/// Stable-limit value of `E_x O_1^gamma / x^gamma` as x grows, for a law in
/// the domain of attraction of an alpha-stable law with positivity p.
pub fn stable_drift_limit(alpha: f64, p: f64, gamma: f64) -> f64 {
    use std::f64::consts::PI;
    let q = 1.0 - p;
    let f = |r: f64| (PI * alpha * r).sin() / (PI * (alpha * r - gamma)).sin();
    f(q) * f(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::increments::IncrementSpec;

    fn pts(v: &[(f64, f64)]) -> Vec<RatePoint> {
        v.iter()
            .map(|&(n, tv)| RatePoint { n, tv, se: 0.0 })
            .collect()
    }

    #[test]
    fn exact_geometric_recovered() {
        let f = geometric_rate_fit(&pts(&[(1.0, 0.5), (2.0, 0.25), (3.0, 0.125)]), 3.0).unwrap();
        assert!((f.r_hat - 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_rate_within_1e_9() {
        let c: f64 = 0.8;
        let r: f64 = 0.37;
        let curve: Vec<(f64, f64)> = (0..8).map(|n| (n as f64, c * r.powi(n))).collect();
        let f = geometric_rate_fit(&pts(&curve), 3.0).unwrap();
        assert!((f.r_hat - r).abs() < 1e-9);
        assert!((f.log_intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn white_noise_hits_floor() {
        let curve: Vec<RatePoint> = (1..10)
            .map(|n| RatePoint {
                n: n as f64,
                tv: 0.002 + 0.001 * (n % 3) as f64,
                se: 0.002,
            })
            .collect();
        assert!(matches!(
            geometric_rate_fit(&curve, 3.0),
            Err(Error::NoiseFloor { usable: 0, .. })
        ));
    }

    #[test]
    fn floor_bound_from_exact_anchor() {
        let curve = vec![
            RatePoint {
                n: 0.0,
                tv: 1.0,
                se: 0.0,
            },
            RatePoint {
                n: 1.0,
                tv: 0.01,
                se: 0.001,
            },
            RatePoint {
                n: 2.0,
                tv: 0.001,
                se: 0.001,
            },
        ];
        match geometric_rate_fit(&curve, 3.0) {
            Err(Error::NoiseFloor { usable: 2, r_bound }) => assert!((r_bound - 0.3).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn increasing_curve_rejected() {
        let r = geometric_rate_fit(&pts(&[(1.0, 0.1), (2.0, 0.2), (3.0, 0.4)]), 3.0);
        assert!(matches!(r, Err(Error::NotDecaying { .. })));
    }

    #[test]
    fn drift_unit_steps_is_exactly_zero() {
        let sim =
            Simulator::new(&IncrementSpec::lattice_uniform(1.0, &[-1.0, 1.0]).unwrap()).unwrap();
        let f = drift_fit(
            &sim,
            1.0,
            &[1.0, 10.0, 100.0, 1000.0],
            50,
            3,
            GuardPolicy::Error,
        )
        .unwrap();
        assert_eq!(f.rho_hat, 0.0);
        assert_eq!(f.l_hat, 0.0);
    }

    #[test]
    fn gamma_admissibility() {
        let sim = Simulator::new(&IncrementSpec::symmetric_pareto(1.5).unwrap()).unwrap();
        assert!(check_gamma(&sim, 0.25).is_ok());
        assert!(check_gamma(&sim, 0.5).is_err());
        let sim = Simulator::new(&IncrementSpec::laplace(1.0).unwrap()).unwrap();
        assert!(check_gamma(&sim, 0.5).is_err());
    }

    #[test]
    fn stable_limit_value() {
        assert!((stable_drift_limit(1.5, 0.5, 0.25) - 0.5).abs() < 1e-12);
        // gamma = alpha - 1 gives no contraction.
        assert!((stable_drift_limit(1.5, 0.5, 0.5) - 1.0).abs() < 1e-12);
    }
}
