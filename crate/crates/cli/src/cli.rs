use std::path::PathBuf;

use amcert_core::targets::{verify_contour_regularity, verify_super_exponential, ContourReport, TailReport};
use amcert_core::{stream, Target, TargetDensity, Verdict};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{parse_config, CertifySection, Expectation, RunConfig};
use crate::run::{self, certify_target, write_certify, write_stdout_json};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "amcert",
    version,
    about = "Adaptive Metropolis sampling with drift certificates and convergence bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunOverrides {
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed; chain `i` uses `derive_seed(seed, i)`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Output directory (default: config, then $AMCERT_OUTPUT_DIR, then ./amcert-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BuiltIn {
    Gaussian,
    PowerExponential,
    CauchyLike,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured chains and write traces, diagnostics and a summary.
    Sample(RunOverrides),
    /// Fit a drift certificate and the resulting convergence bound.
    Certify(RunOverrides),
    /// Check the tail and contour conditions for a built-in target.
    VerifyTarget {
        #[arg(value_enum)]
        target: BuiltIn,
        #[arg(long, default_value_t = 1.5)]
        rho: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Exponent for `power-exponential`.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 32)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute diagnostics from a finished run directory.
    Diagnose {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Regenerate every chain of a run directory and check the trace hashes.
    Replay {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load(o: &RunOverrides) -> anyhow::Result<RunConfig> {
    let mut cfg = parse_config(&o.config)?;
    if let Some(s) = o.seed {
        cfg.run.root_seed = s;
    }
    if let Some(c) = o.chains {
        cfg.run.n_chains = c;
    }
    if let Some(n) = o.steps {
        cfg.run.n_steps = n;
    }
    if let Some(out) = &o.out {
        cfg.run.output_dir = Some(out.clone());
    }
    if let Some(w) = o.workers {
        cfg.run.workers = Some(w);
    }
    // Overrides go through the same validation as the file.
    Ok(crate::config::parse_config_str(&cfg.to_toml())?)
}

#[derive(Serialize)]
struct TargetReport {
    target: &'static str,
    dim: usize,
    tails: TailReport,
    contour: ContourReport,
    passed: bool,
}

fn verify_target(which: BuiltIn, rho: f64, dim: usize, p: f64, directions: usize, seed: u64) -> anyhow::Result<bool> {
    let t = match which {
        BuiltIn::Gaussian => Target::standard_gaussian(dim),
        BuiltIn::PowerExponential => Target::power_exponential(dim, p)?,
        BuiltIn::CauchyLike => Target::cauchy_like(dim)?,
    };
    let radii: Vec<f64> = (0..=24).map(|k| 10f64.powf(0.5 * k as f64)).collect();
    let mut rng = stream(seed);
    let tails = verify_super_exponential(&t, rho, &radii, directions, &mut rng)?;
    let contour = verify_contour_regularity(&t, &radii, directions, &mut rng)?;
    let passed = tails.verdict == Verdict::Pass && contour.verdict == Verdict::Pass;
    write_stdout_json(&TargetReport {
        target: t.name(),
        dim: t.dim(),
        tails,
        contour,
        passed,
    })?;
    Ok(passed)
}

fn certify(o: &RunOverrides) -> anyhow::Result<bool> {
    let cfg = load(o)?;
    let section = cfg.certify.clone().unwrap_or_else(|| CertifySection {
        expect: Expectation::Drift,
        margin: amcert_core::certify::DEFAULT_MARGIN,
        v: cfg.sigma0().scale(cfg.sampler.theta).to_rows(),
        audit_scales: vec![1.0, 2.0, 4.0, 8.0],
        probe_max: 1e3,
    });
    let target = run::build_target(&cfg)?;
    let rec = certify_target(&target, &section, cfg.sampler.kappa);
    let dir = run::output_dir(&cfg);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_certify(&dir, &rec)?;
    write_stdout_json(&rec)?;
    Ok(rec.passed)
}

/// Runs one invocation and returns the process exit code.
pub fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Sample(o) => {
            let cfg = load(&o)?;
            let rec = run::run_experiment(&cfg)?;
            for c in rec.chains.iter().filter(|c| c.error.is_some()) {
                eprintln!("chain {} failed: {}", c.index, c.error.as_deref().unwrap_or(""));
            }
            eprintln!(
                "{} chain(s), {:.2}s, summary at {}",
                rec.chains.len(),
                rec.wall_seconds,
                rec.output_dir.join(run::SUMMARY_FILE).display()
            );
            Ok(rec.all_passed)
        }
        Command::Certify(o) => certify(&o),
        Command::VerifyTarget {
            target,
            rho,
            dim,
            p,
            directions,
            seed,
        } => verify_target(target, rho, dim, p, directions, seed),
        Command::Diagnose { dir } => {
            let d = run::diagnose_dir(&dir)?;
            write_stdout_json(&d)?;
            Ok(d.iter().all(|x| x.passed))
        }
        Command::Replay { dir } => {
            let rows = run::replay(&dir)?;
            write_stdout_json(&rows)?;
            Ok(true)
        }
    }
}

/// Parses `args` and runs; usage errors map to exit code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAIL
        }
    }
}
