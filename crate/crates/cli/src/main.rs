use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chaosdual_cli::checks::quick_suite;
use chaosdual_cli::config::DEFAULT_SEED;
use chaosdual_cli::run::render_report;
use chaosdual_cli::{run_bench, run_oracle, run_price, CliError, Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chaosdual",
    version,
    about = "Dual upper bounds for Bermudan options"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the dual objective and report the upper bound.
    Price {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Reference prices through the one-dimensional geometric reduction.
    Oracle {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Price at several thread counts and report the scaling.
    Bench {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
        /// Comma-separated thread counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        threads: Vec<usize>,
    },
    /// Run the property suite on small problems.
    Check {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct Flags {
    #[command(flatten)]
    common: CommonFlags,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CommonFlags {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            p: self.p,
            n: self.n,
            m: self.m,
            seed: self.seed,
            threads: None,
            epsilon: self.epsilon,
            out: self.out.clone(),
        }
    }
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            threads: self.threads,
            ..self.common.overrides()
        }
    }
}

fn load(path: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&overrides);
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Price { config, flags } => {
            let cfg = load(&config, flags.overrides())?;
            let run = run_price(&cfg)?;
            print!("{}", render_report(&run.result, cfg.output.format)?);
        }
        Command::Oracle { config, flags } => {
            let cfg = load(&config, flags.overrides())?;
            let r = run_oracle(&cfg)?;
            println!(
                "reduced: s_hat = {:.6}, sigma_hat = {:.6}, delta_hat = {:.6}",
                r.reduced.s_hat, r.reduced.sigma_hat, r.reduced.delta_hat
            );
            println!("bermudan tree ({} steps): {:.6}", r.tree_steps, r.bermudan);
            println!("american tree ({} steps): {:.6}", r.tree_steps, r.american);
            println!("european closed form: {:.6}", r.european);
        }
        Command::Bench {
            config,
            flags,
            threads,
        } => {
            let cfg = load(&config, flags.overrides())?;
            let rows = run_bench(&cfg, &threads)?;
            println!(
                "{:>8} {:>12} {:>11} {:>12}",
                "threads", "seconds", "efficiency", "price"
            );
            for r in rows {
                println!(
                    "{:>8} {:>12.3} {:>11.3} {:>12.6}",
                    r.threads, r.seconds, r.efficiency, r.price
                );
            }
        }
        Command::Check { seed } => {
            let outcomes = quick_suite(seed)?;
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            for o in &outcomes {
                println!("{o}");
            }
            if failed > 0 {
                return Err(CliError::Numerical(format!("{failed} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
