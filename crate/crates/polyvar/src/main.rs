use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polyvar::commands;
use polyvar::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "polyvar", version, about = "Polynomial variations of Gaussian sequences: simulation, estimation and rate studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths and write them with their variation reports.
    Simulate(Common),
    /// Estimate the drift parameters from a path CSV.
    Estimate(Common),
    /// Exact cumulants of the quadratic variation along the n grid.
    Cumulants(Common),
    /// Total-variation bounds along the n grid.
    Bounds(Common),
    /// Monte Carlo distances to normality and fitted rates.
    RateStudy(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::load(&c.config)?.with_seed(c.seed).with_out(c.out.clone()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c)?;
            for (i, r) in commands::simulate(&cfg)?.iter().enumerate() {
                println!("path {i}: n = {} Q = {:.6} U = {:.6} F = {:.6}", r.n, r.q_stat, r.u_stat, r.f_stat);
            }
        }
        Command::Estimate(c) => {
            let cfg = load(&c)?;
            let e = commands::estimate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&e)?);
        }
        Command::Cumulants(c) => {
            let cfg = load(&c)?;
            println!("{:>8} {:>14} {:>14} {:>14} {:>12} {:>12}", "n", "kappa2", "kappa3", "kappa4", "kappa3_F", "kappa4_F");
            for r in commands::cumulants(&cfg)? {
                println!("{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>12.4e} {:>12.4e}", r.n, r.kappa2, r.kappa3, r.kappa4, r.kappa3_f, r.kappa4_f);
            }
        }
        Command::Bounds(c) => {
            let cfg = load(&c)?;
            let model = cfg.model.kind.clone();
            println!("{:>10} {:>8} {:>14} {:>20}", "model", "n", "tv_bound", "rate_class");
            for r in commands::bounds(&cfg)? {
                let class = serde_json::to_value(r.rate_class)?;
                println!("{:>10} {:>8} {:>14.6e} {:>20}", model, r.n, r.tv_bound, class.as_str().unwrap_or_default());
            }
        }
        Command::RateStudy(c) => {
            let cfg = load(&c)?;
            let res = commands::rate_study(&cfg)?;
            println!("{:>8} {:>8} {:>12} {:>10} {:>12} {:>12}", "n", "M", "dW_hat", "dW_se", "dK_hat", "tv_bound");
            for r in &res.rows {
                let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
                println!("{:>8} {:>8} {:>12} {:>10} {:>12} {:>12}", r.n, r.m, f(r.dw_hat), f(r.dw_se), f(r.dk_hat), f(r.tv_bound));
            }
            if let Some(f) = res.fit_dk {
                println!("dK slope {:.4} [{:.4}, {:.4}], R^2 {:.4}", f.slope, f.ci95.0, f.ci95.1, f.r2);
            }
            if let Some(f) = res.fit_dw {
                println!("dW slope {:.4} [{:.4}, {:.4}], R^2 {:.4}", f.slope, f.ci95.0, f.ci95.1, f.r2);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
