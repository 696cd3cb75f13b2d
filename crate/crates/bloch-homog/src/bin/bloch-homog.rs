//! Command-line front end; see `bloch-homog --help`.
//!
//! Exit status: 0 all asserted checks pass, 1 some check failed, 2 usage or
//! config error, 3 numerical or I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use bloch_homog::experiments::{run, ExperimentConfig, Study};
use bloch_homog::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bloch-homog", version, about = "Fiber-operator homogenization studies for periodic elasticity")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `out` from the config, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Fourier cutoff override.
    #[arg(long, global = true)]
    k: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Homogenized tensor, certificates, fiber factorization.
    Cell,
    /// Band tables and Rayleigh-quotient checks along the ray.
    Bloch,
    /// Fiber resolvent rates along the dyadic ray.
    FiberRates,
    /// Epsilon rates via the fiber supremum, and the smoothing bounds.
    EpsRates,
    /// Rank-one, Korn and abstract resolvent inequalities.
    Korn,
    /// Two-scale corrector agreement and Gelfand transform identities.
    TwoScale,
    /// Every study above.
    All,
}

impl From<Cmd> for Study {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Cell => Study::Cell,
            Cmd::Bloch => Study::Bloch,
            Cmd::FiberRates => Study::FiberRates,
            Cmd::EpsRates => Study::EpsRates,
            Cmd::Korn => Study::Korn,
            Cmd::TwoScale => Study::TwoScale,
            Cmd::All => Study::All,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.opts.config.as_ref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.opts.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.opts.jobs {
        cfg.jobs = j;
    }
    if let Some(k) = cli.opts.k {
        cfg.k = k;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let out = cli.opts.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let study = Study::from(cli.cmd);
    match run(study, &cfg, &out) {
        Ok(m) => {
            for c in &m.checks {
                let tag = match (c.pass, c.asserted) {
                    (true, _) => "ok  ",
                    (false, true) => "FAIL",
                    (false, false) => "info",
                };
                println!("{tag} {:<40} {:>12.4e}  (threshold {:.4e})", c.name, c.value, c.threshold);
            }
            println!("{} in {:.1}s, manifest {}", study.name(), m.wall_time_s, out.join(format!("manifest-{}.json", study.name())).display());
            if m.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Error::Config(m)) => {
            eprintln!("error: config: {m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
