use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ir_uwb::cli::{self, ExperimentConfig, ValidateOptions};
use ir_uwb::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ir-uwb",
    version,
    about = "Multi-pulse TH-PAM impulse radio: spectra, error probability and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic vs empirical transmit PSD for every pulse plan.
    Psd(Common),
    /// Channel-averaged theoretical bit error probability over the Eb/N0 sweep.
    Bep(Common),
    /// Monte Carlo bit error rate over the Eb/N0 sweep.
    Sim(Common),
    /// Oracle checks; exits non-zero when any check fails.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cmd: Command) -> Result<bool> {
    let (Command::Psd(c) | Command::Bep(c) | Command::Sim(c) | Command::Validate(c)) = &cmd;
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Usage(format!("cannot start thread pool: {e}")))?;
    let out = c.out.clone();
    pool.install(|| match cmd {
        Command::Psd(_) => {
            for o in cli::cmd_psd(&cfg, &out)? {
                println!("{}: mismatch {:.4} -> {}", o.plan, o.mismatch, o.path.display());
            }
            Ok(true)
        }
        Command::Bep(_) => {
            let res = cli::cmd_bep(&cfg, &out)?;
            let reference = res[0].mean_mai_variance;
            for o in &res {
                println!(
                    "{}: mean MAI variance {:.4e} (x{:.3} of {}) -> {}",
                    o.plan,
                    o.mean_mai_variance,
                    o.mean_mai_variance / reference,
                    res[0].plan,
                    o.path.display()
                );
            }
            Ok(true)
        }
        Command::Sim(_) => {
            for o in cli::cmd_sim(&cfg, &out)? {
                println!("{} -> {}", o.plan, o.path.display());
            }
            Ok(true)
        }
        Command::Validate(_) => {
            let report = cli::cmd_validate(&cfg, ValidateOptions::default())?;
            let text = report.render();
            print!("{text}");
            let path = out.join("validate.txt");
            std::fs::create_dir_all(&out)
                .and_then(|_| std::fs::write(&path, &text))
                .map_err(|source| Error::Io { path, source })?;
            Ok(report.all_passed())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Cli::parse();
    match run(args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
