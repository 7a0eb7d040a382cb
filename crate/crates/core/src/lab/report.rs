//! The `results.json` schema.

use serde::{Deserialize, Serialize};

use super::config::Resolved;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Le => "<=",
            Comparison::Lt => "<",
            Comparison::Ge => ">=",
        }
    }

    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::Le => value <= threshold,
            Comparison::Lt => value < threshold,
            Comparison::Ge => value >= threshold,
        }
    }
}

/// One pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

/// One reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub statistic: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: u64,
    pub seed: u64,
    pub config_hash: String,
}

/// What an experiment produces before provenance is attached.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub criteria: Vec<Criterion>,
    /// `(name, value, stderr, n)`.
    pub statistics: Vec<(String, f64, Option<f64>, u64)>,
    pub warnings: Vec<String>,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
}

impl Report {
    pub fn stat(&mut self, name: impl Into<String>, value: f64, stderr: Option<f64>, n: u64) {
        self.statistics.push((name.into(), value, stderr, n));
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: f64,
        comparison: Comparison,
        threshold: f64,
    ) -> bool {
        // NaN never passes.
        let passed = comparison.holds(value, threshold);
        self.criteria.push(Criterion {
            name: name.into(),
            value,
            comparison,
            threshold,
            passed,
        });
        passed
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn artifact(&mut self, name: &str, body: String) {
        self.artifacts.push((name.to_string(), body));
    }

    pub fn passed(&self) -> bool {
        !self.criteria.is_empty() && self.criteria.iter().all(|c| c.passed)
    }
}

/// Top-level keys are the same for every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub passed: bool,
    pub criteria: Vec<Criterion>,
    pub statistics: Vec<Statistic>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

impl Results {
    pub(crate) fn new(cfg: &Resolved, hash: &str, report: Report) -> Self {
        let passed = report.passed();
        let statistics = report
            .statistics
            .into_iter()
            .map(|(statistic, value, stderr, n)| Statistic {
                statistic,
                value,
                stderr,
                n,
                seed: cfg.seed,
                config_hash: hash.to_string(),
            })
            .collect();
        Self {
            experiment: cfg.experiment.clone(),
            seed: cfg.seed,
            config_hash: hash.to_string(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            passed,
            criteria: report.criteria,
            statistics,
            warnings: report.warnings,
            artifacts: report.artifacts.into_iter().map(|(n, _)| n).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn statistic(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.statistic == name)
    }
}
