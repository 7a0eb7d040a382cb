//! Experiment configuration: JSON input, per-experiment defaults and the
//! configuration hash.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::increments::IncrementSpec;
use crate::stats::GuardPolicy;

/// Configuration as written by the user. Absent fields take the named
/// experiment's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub spec: Option<serde_json::Value>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub replicas: Option<usize>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub chain_length: Option<usize>,
    #[serde(default)]
    pub probes: Option<Vec<f64>>,
    /// Fixed start; without it chains start from their invariant law.
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub ladder_samples: Option<usize>,
    #[serde(default)]
    pub repeats: Option<usize>,
    #[serde(default)]
    pub bin_width: Option<f64>,
    #[serde(default)]
    pub pair_width: Option<f64>,
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default)]
    pub resamples: Option<usize>,
    #[serde(default)]
    pub guard: Option<u64>,
    #[serde(default)]
    pub guard_policy: Option<GuardPolicy>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            ..Default::default()
        }
    }

    pub fn with_spec(mut self, spec: &IncrementSpec) -> Self {
        self.spec = Some(serde_json::from_str(&spec.to_json()).expect("spec serializes"));
        self
    }

    /// Applies the experiment's defaults and validates the result.
    pub fn resolve(&self) -> Result<Resolved> {
        let entry = super::catalog::find(&self.experiment)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{}'", self.experiment)))?;
        let d = (entry.defaults)();
        let spec_value = self.spec.clone().or(d
            .spec
            .map(|s| serde_json::from_str(&s.to_json()).expect("spec")));
        let spec_value =
            spec_value.ok_or_else(|| Error::Config("experiment needs a spec".into()))?;
        let spec = IncrementSpec::from_json(&spec_value.to_string())
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut thresholds = d.thresholds.clone();
        for (k, v) in &self.thresholds {
            if !thresholds.contains_key(k) {
                return Err(Error::Config(format!(
                    "unknown threshold '{k}' for {}",
                    self.experiment
                )));
            }
            thresholds.insert(k.clone(), *v);
        }
        let r = Resolved {
            experiment: entry.name.to_string(),
            spec,
            seed: self.seed.unwrap_or(1),
            replicas: self.replicas.unwrap_or(d.replicas),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            chain_length: self.chain_length.unwrap_or(d.chain_length),
            probes: self.probes.clone().unwrap_or(d.probes),
            start: self.start.or(d.start),
            h: self.h.unwrap_or(d.h),
            gamma: self.gamma.unwrap_or(d.gamma),
            ladder_samples: self.ladder_samples.unwrap_or(d.ladder_samples),
            repeats: self.repeats.unwrap_or(d.repeats),
            bin_width: self.bin_width.unwrap_or(d.bin_width),
            pair_width: self.pair_width.unwrap_or(d.pair_width),
            cap: self.cap.unwrap_or(d.cap),
            resamples: self.resamples.unwrap_or(d.resamples),
            guard: self.guard.unwrap_or(d.guard),
            guard_policy: self.guard_policy.unwrap_or(d.guard_policy),
            thresholds,
        };
        r.validate()?;
        Ok(r)
    }
}

/// A configuration with every field filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub experiment: String,
    pub spec: IncrementSpec,
    pub seed: u64,
    pub replicas: usize,
    pub burn_in: usize,
    pub chain_length: usize,
    pub probes: Vec<f64>,
    pub start: Option<f64>,
    pub h: f64,
    pub gamma: f64,
    pub ladder_samples: usize,
    pub repeats: usize,
    pub bin_width: f64,
    pub pair_width: f64,
    pub cap: f64,
    pub resamples: usize,
    pub guard: u64,
    pub guard_policy: GuardPolicy,
    pub thresholds: BTreeMap<String, f64>,
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.replicas == 0 {
            return bad("replicas must be positive");
        }
        if self.chain_length == 0 {
            return bad("chain_length must be positive");
        }
        if self.burn_in >= self.chain_length {
            return bad("burn_in must be smaller than chain_length");
        }
        if !(self.bin_width > 0.0)
            || !(self.pair_width > 0.0)
            || !(self.cap > 0.0)
            || !(self.h > 0.0)
        {
            return bad("bin_width, pair_width, cap and h must be positive");
        }
        if self.resamples < 2 {
            return bad("resamples must be at least 2");
        }
        if self.guard == 0 {
            return bad("guard must be positive");
        }
        if self.probes.iter().any(|x| !x.is_finite()) {
            return bad("probes must be finite");
        }
        if self.start.is_some_and(|x| !x.is_finite()) {
            return bad("start must be finite");
        }
        Ok(())
    }

    pub fn threshold(&self, name: &str) -> f64 {
        *self
            .thresholds
            .get(name)
            .unwrap_or_else(|| panic!("threshold '{name}' missing from defaults"))
    }

    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Default parameters of one experiment.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub spec: Option<IncrementSpec>,
    pub replicas: usize,
    pub burn_in: usize,
    pub chain_length: usize,
    pub probes: Vec<f64>,
    pub start: Option<f64>,
    pub h: f64,
    pub gamma: f64,
    pub ladder_samples: usize,
    pub repeats: usize,
    pub bin_width: f64,
    pub pair_width: f64,
    pub cap: f64,
    pub resamples: usize,
    pub guard: u64,
    pub guard_policy: GuardPolicy,
    pub thresholds: BTreeMap<String, f64>,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            spec: None,
            replicas: 100_000,
            burn_in: 0,
            chain_length: 1,
            probes: Vec::new(),
            start: None,
            h: 1.0,
            gamma: 1.0,
            ladder_samples: 1_000_000,
            repeats: 1,
            bin_width: crate::measures::DEFAULT_BIN_WIDTH,
            pair_width: 0.5,
            cap: 20.0,
            resamples: crate::stats::DEFAULT_RESAMPLES,
            guard: crate::walk::DEFAULT_GUARD,
            guard_policy: GuardPolicy::Error,
            thresholds: BTreeMap::new(),
        }
    }
}

impl Defaults {
    pub fn thresholds(mut self, t: &[(&str, f64)]) -> Self {
        self.thresholds = t.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_is_config_error() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "nope"}"#).unwrap();
        assert!(matches!(c.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(
            ExperimentConfig::from_json(r#"{"experiment": "stationarity", "bogus": 1}"#).is_err()
        );
    }

    #[test]
    fn unknown_threshold_rejected() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "q-balance", "thresholds": {"nope": 1}}"#,
        )
        .unwrap();
        assert!(matches!(c.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = ExperimentConfig::from_json(r#"{"experiment": "q-balance", "output_dir": "a"}"#)
            .unwrap();
        let b = ExperimentConfig::from_json(r#"{"experiment": "q-balance", "output_dir": "b"}"#)
            .unwrap();
        let c = ExperimentConfig::from_json(r#"{"experiment": "q-balance", "seed": 2}"#).unwrap();
        let (ha, hb, hc) = (
            a.resolve().unwrap().hash(),
            b.resolve().unwrap().hash(),
            c.resolve().unwrap().hash(),
        );
        assert_eq!(ha, hb);
        assert_ne!(ha, hc);
        assert_eq!(ha.len(), 64);
    }

    #[test]
    fn threshold_override() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "q-balance", "thresholds": {"residual_max": 0.5}}"#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(c.threshold("residual_max"), 0.5);
    }
}
