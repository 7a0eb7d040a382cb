//! The named experiments and their defaults.

use super::config::Defaults;
use super::experiments as ex;
use super::report::Report;
use super::Ctx;
use crate::error::Result;
use crate::increments::IncrementSpec;
use crate::stats::GuardPolicy;

pub struct CatalogEntry {
    pub name: &'static str,
    pub claim: &'static str,
    pub(crate) defaults: fn() -> Defaults,
    pub(crate) run: fn(&Ctx) -> Result<Report>,
}

fn four_point() -> Option<IncrementSpec> {
    Some(IncrementSpec::lattice_uniform(1.0, &[-2.0, -1.0, 1.0, 2.0]).expect("valid law"))
}

fn laplace() -> Option<IncrementSpec> {
    Some(IncrementSpec::laplace(1.0).expect("valid law"))
}

fn pareto() -> Option<IncrementSpec> {
    Some(IncrementSpec::symmetric_pareto(1.5).expect("valid law"))
}

const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "stationarity",
        claim: "pi_plus is invariant for the overshoot chain",
        defaults: || {
            Defaults {
                spec: four_point(),
                chain_length: 50,
                ..Default::default()
            }
            .thresholds(&[("tv_max", 0.005), ("ks_max", 0.01), ("atom_band", 0.005)])
        },
        run: ex::stationarity,
    },
    CatalogEntry {
        name: "cycle",
        claim: "pi_plus and pi_minus map to each other at consecutive down- and up-crossings",
        defaults: || {
            Defaults {
                spec: four_point(),
                ..Default::default()
            }
            .thresholds(&[("tv_max", 0.005), ("ks_max", 0.01)])
        },
        run: ex::cycle,
    },
    CatalogEntry {
        name: "undershoot",
        claim: "-U - d is stationary under pi_plus",
        defaults: || {
            Defaults {
                spec: four_point(),
                chain_length: 10,
                ..Default::default()
            }
            .thresholds(&[("tv_max", 0.005), ("ks_max", 0.01)])
        },
        run: ex::undershoot,
    },
    CatalogEntry {
        name: "reversal",
        claim: "an up-crossing cycle started from pi_plus is reversible",
        defaults: || {
            Defaults {
                spec: laplace(),
                ..Default::default()
            }
            .thresholds(&[("alpha", 1e-3), ("joint_sigmas", 3.0)])
        },
        run: ex::reversal,
    },
    CatalogEntry {
        name: "q-balance",
        claim: "the jump kernel Q is in detailed balance with pi_plus (exact)",
        defaults: || {
            Defaults {
                spec: four_point(),
                ..Default::default()
            }
            .thresholds(&[("residual_max", 1e-12)])
        },
        run: ex::q_balance,
    },
    CatalogEntry {
        name: "p-balance",
        claim: "the first-passage kernel P is in detailed balance with pi_plus (simulated)",
        defaults: || {
            Defaults {
                spec: four_point(),
                repeats: 20,
                ..Default::default()
            }
            .thresholds(&[("min_overlap_fraction", 0.9)])
        },
        run: ex::p_balance,
    },
    CatalogEntry {
        name: "compose",
        claim: "the law of O_n is delta_x (PQ)^n",
        defaults: || {
            Defaults {
                spec: four_point(),
                replicas: 1_000_000,
                chain_length: 3,
                ..Default::default()
            }
            .thresholds(&[
                ("tv_max_n1", 0.01),
                ("tv_max_n2", 0.02),
                ("tv_max_n3", 0.02),
            ])
        },
        run: ex::compose,
    },
    CatalogEntry {
        name: "lemma1",
        claim: "pi_plus is a convolution of ladder-height laws, with its normalization identity",
        defaults: || {
            Defaults {
                spec: four_point(),
                ..Default::default()
            }
            .thresholds(&[("tv_max", 0.01), ("normalization_sigmas", 3.0)])
        },
        run: ex::lemma1,
    },
    CatalogEntry {
        name: "wiener-hopf",
        claim: "the increment law factors through the ladder-height laws",
        defaults: || {
            Defaults {
                spec: four_point(),
                ..Default::default()
            }
            .thresholds(&[("residual_max", 0.01)])
        },
        run: ex::wiener_hopf,
    },
    CatalogEntry {
        name: "far-level",
        claim: "overshoots from a remote start follow the ladder renewal limits",
        defaults: || {
            Defaults {
                spec: four_point(),
                start: Some(1000.0),
                ..Default::default()
            }
            .thresholds(&[("tv_max", 0.02), ("tv_up_max", 0.02)])
        },
        run: ex::far_level,
    },
    CatalogEntry {
        name: "entrance",
        claim: "pi_h is the stationary law of entrances into [0, h]",
        defaults: || {
            Defaults {
                spec: four_point(),
                chain_length: 50,
                start: Some(0.0),
                ..Default::default()
            }
            .thresholds(&[("atom_band", 0.005), ("ks_max", 0.01)])
        },
        run: ex::entrance,
    },
    CatalogEntry {
        name: "tv-decay",
        claim: "TV(law(O_n), pi_plus) decreases in n",
        defaults: || {
            Defaults {
                spec: four_point(),
                chain_length: 10,
                start: Some(10.0),
                ..Default::default()
            }
            .thresholds(&[("band_sigmas", 3.0), ("max_inversions", 0.0)])
        },
        run: ex::tv_decay,
    },
    CatalogEntry {
        name: "rate",
        claim: "TV(law(O_n), pi_plus) decays geometrically",
        defaults: || {
            Defaults {
                spec: four_point(),
                chain_length: 10,
                start: Some(10.0),
                ..Default::default()
            }
            .thresholds(&[("floor_sigmas", 3.0), ("r_max", 1.0), ("r2_min", 0.9)])
        },
        run: ex::rate,
    },
    CatalogEntry {
        name: "uniform-rate",
        claim: "the geometric rate does not depend on the start (finite variance)",
        defaults: || {
            Defaults {
                spec: four_point(),
                chain_length: 10,
                probes: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
                ..Default::default()
            }
            .thresholds(&[("floor_sigmas", 3.0), ("max_gap", 0.0)])
        },
        run: ex::uniform_rate,
    },
    CatalogEntry {
        name: "drift",
        claim: "E_x O_1^gamma <= rho x^gamma + L with the stable-limit rho",
        defaults: || {
            Defaults {
                spec: pareto(),
                replicas: 1000,
                probes: vec![10.0, 100.0, 1000.0, 2000.0],
                gamma: 0.25,
                guard: 100_000_000,
                guard_policy: GuardPolicy::Censor,
                ..Default::default()
            }
            .thresholds(&[
                ("ratio_tol", 0.1),
                ("max_censored_fraction", 0.05),
                ("max_inversions", 0.0),
            ])
        },
        run: ex::drift,
    },
    CatalogEntry {
        name: "crossings-growth",
        claim: "the number of up-crossings in n steps grows like n^(1 - 1/alpha)",
        defaults: || {
            Defaults {
                spec: four_point(),
                replicas: 500,
                probes: vec![1e3, 1e4, 1e5, 1e6],
                start: Some(0.0),
                ..Default::default()
            }
            .thresholds(&[("exponent_tol", 0.05)])
        },
        run: ex::crossings_growth,
    },
];

pub fn catalog() -> &'static [CatalogEntry] {
    ENTRIES
}

pub(crate) fn find(name: &str) -> Option<&'static CatalogEntry> {
    ENTRIES.iter().find(|e| e.name == name)
}
