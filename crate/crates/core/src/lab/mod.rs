//! Config-driven experiments. Each experiment checks one claim about the
//! overshoot chains and writes `results.json` plus CSV dumps.

mod catalog;
mod config;
mod experiments;
mod report;

use std::fs;
use std::path::Path;

pub use catalog::{catalog, CatalogEntry};
pub use config::{Defaults, ExperimentConfig, Resolved};
pub use report::{Comparison, Criterion, Report, Results, Statistic};

use crate::error::{Error, Result};
use crate::walk::Simulator;

/// Exit status for a run that completed with every criterion met.
pub const EXIT_PASS: i32 = 0;
/// A criterion failed, or the run failed for a reason other than the two below.
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

/// Maps a run error to the CLI exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidSpec(_)
        | Error::InvalidArgument(_)
        | Error::OffLattice(_)
        | Error::NotLattice
        | Error::DegenerateInterval(_) => EXIT_CONFIG,
        Error::GuardExceeded { .. } => EXIT_GUARD,
        _ => EXIT_FAIL,
    }
}

/// State shared by an experiment run.
pub(crate) struct Ctx {
    pub cfg: Resolved,
    pub sim: Simulator,
}

/// Runs an experiment and, if `out` is given, writes `results.json` and the
/// CSV artifacts there.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<Results> {
    let cfg = config.resolve()?;
    let hash = cfg.hash();
    let sim = Simulator::new(&cfg.spec)?.with_guard(cfg.guard);
    let entry = catalog::find(&cfg.experiment).expect("resolved names are in the catalog");
    let ctx = Ctx { cfg, sim };
    let report = (entry.run)(&ctx)?;
    let results = Results::new(&ctx.cfg, &hash, report.clone());
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.json"), results.to_json())?;
        for (name, body) in &report.artifacts {
            fs::write(dir.join(name), body)?;
        }
    }
    Ok(results)
}

/// Runs from a JSON config file, returning the results and the exit status.
/// `seed` and `out` override the file.
pub fn run_file(
    path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> (Option<Results>, i32, Option<Error>) {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            return (
                None,
                EXIT_CONFIG,
                Some(Error::Config(format!("{}: {e}", path.display()))),
            )
        }
    };
    let mut cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return (None, EXIT_CONFIG, Some(e)),
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.as_ref().map(Into::into));
    match run(&cfg, dir.as_deref()) {
        Ok(r) => {
            let code = if r.passed { EXIT_PASS } else { EXIT_FAIL };
            (Some(r), code, None)
        }
        Err(e) => (None, exit_code(&e), Some(e)),
    }
}
