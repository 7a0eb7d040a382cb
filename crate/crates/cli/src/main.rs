//! `overshoot-lab`: runs the named experiments from JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use overshoot_core::lab::{catalog, run_file};

#[derive(Parser)]
#[command(
    name = "overshoot-lab",
    version,
    about = "Seeded experiments on overshoot chains of random walks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; exits 0 iff every criterion passes.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for results.json and CSV dumps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the experiment catalog.
    List,
}

/// Caps the rayon pool at OVERSHOOT_LAB_THREADS when set.
fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("OVERSHOOT_LAB_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            anyhow::anyhow!("OVERSHOOT_LAB_THREADS must be a positive integer, got '{v}'")
        })?;
        anyhow::ensure!(n > 0, "OVERSHOOT_LAB_THREADS must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for e in catalog() {
                println!("{:<18} {}", e.name, e.claim);
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out } => {
            if let Err(e) = init_threads() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            let (results, code, err) = run_file(&config, seed, out.as_deref());
            if let Some(r) = results {
                for c in &r.criteria {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!(
                        "{tag} {} = {:.6e} {} {}",
                        c.name,
                        c.value,
                        c.comparison.symbol(),
                        c.threshold
                    );
                }
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "{}: {}",
                    r.experiment,
                    if r.passed { "passed" } else { "failed" }
                );
            }
            if let Some(e) = err {
                eprintln!("error: {e}");
            }
            ExitCode::from(code as u8)
        }
    }
}
