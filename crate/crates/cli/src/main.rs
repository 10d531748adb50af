mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sfde_core::forward::{simulate_ensemble, EigenSystem, EnsembleMoments};
use sfde_core::inverse::{compute_factors, instability_report, suggest_k_cut, BetaVariant, ReconstructionReport};
use sfde_core::{selftest, Error, Result};

use config::{Overrides, RunConfig};

/// Simulation and inverse source recovery for the time-fractional
/// diffusion equation driven by fractional Brownian motion.
#[derive(Parser)]
#[command(name = "sfde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ensemble of the spectral coefficients u_k(T).
    Simulate(RunArgs),
    /// Recover f and |g| from ensemble moments.
    Reconstruct {
        #[command(flatten)]
        run: RunArgs,
        /// Moments CSV; defaults to <out-dir>/ensemble_moments.csv.
        #[arg(long)]
        moments: Option<PathBuf>,
        /// Covariance CSV; defaults to <out-dir>/covariance.csv when present.
        #[arg(long)]
        covariance: Option<PathBuf>,
    },
    /// Decay of the inversion factors and noise amplification per mode.
    Instability(RunArgs),
    /// Built-in numerical checks.
    Selftest {
        /// Run every acceptance check rather than the quick suite.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kcut: Option<usize>,
    #[arg(long, value_enum)]
    beta_variant: Option<BetaArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BetaArg {
    Printed,
    Substituted,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let ov = Overrides {
            seed: self.seed,
            threads: self.threads,
            out_dir: self.out_dir.clone(),
            gamma: self.gamma,
            k_cut: self.kcut,
            beta_variant: self.beta_variant.map(|b| match b {
                BetaArg::Printed => BetaVariant::Printed,
                BetaArg::Substituted => BetaVariant::Substituted,
            }),
        };
        RunConfig::load(&self.config, &ov)
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn echo(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "simulation": cfg.simulation,
        "domain": cfg.domain,
        "source": cfg.source,
        "inverse": cfg.inverse,
    })
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let es = EigenSystem::build(cfg.domain, cfg.simulation.modes)?;
    let ens = pool(cfg.threads)?.install(|| simulate_ensemble(&cfg.simulation, &cfg.source, &es))?;
    let dir = cfg.out_dir();
    let header = cfg.header();
    ens.moments
        .write_csv(create(&dir, "ensemble_moments.csv")?, es.lambdas(), &header)?;
    ens.moments
        .write_covariance_csv(create(&dir, "covariance.csv")?, &header)?;
    let summary = json!({
        "seed": cfg.simulation.seed,
        "config_hash": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": echo(cfg),
        "n_paths": ens.moments.n_paths,
        "lambdas": es.lambdas(),
        "deterministic": ens.deterministic,
    });
    serde_json::to_writer_pretty(create(&dir, "run_summary.json")?, &summary)?;
    println!(
        "wrote {} modes x {} paths to {}",
        es.count(),
        ens.moments.n_paths,
        dir.display()
    );
    Ok(())
}

fn reconstruct(cfg: &RunConfig, moments: Option<PathBuf>, covariance: Option<PathBuf>) -> Result<()> {
    let dir = cfg.out_dir();
    let mpath = moments.unwrap_or_else(|| dir.join("ensemble_moments.csv"));
    let cpath = covariance.or_else(|| Some(dir.join("covariance.csv")).filter(|p| p.exists()));
    let mtext = fs::read_to_string(&mpath)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", mpath.display())))?;
    let ctext = cpath.map(fs::read_to_string).transpose()?;
    let (m, lambdas) = EnsembleMoments::read_csv(&mtext, ctext.as_deref(), cfg.simulation.paths)?;
    if m.modes() != cfg.simulation.modes {
        return Err(Error::Config(format!(
            "moments file has {} modes, configuration has {}",
            m.modes(),
            cfg.simulation.modes
        )));
    }
    let es = EigenSystem::build(cfg.domain, m.modes())?;
    if lambdas.iter().zip(es.lambdas()).any(|(a, b)| (a / b - 1.0).abs() > 1e-12) {
        return Err(Error::Config("eigenvalues in the moments file do not match the domain".into()));
    }
    let src = &cfg.source;
    let factors = pool(cfg.threads)?.install(|| compute_factors(&cfg.simulation, &es, &src.h, src.c_h))?;
    let k_cut = cfg.inverse.k_cut.unwrap_or_else(|| suggest_k_cut(&m, 2.0).max(1));
    let report = ReconstructionReport::new(&m, &factors, k_cut, Some((&src.f, &src.g)))?;
    let header = cfg.header();
    report.write_csv(create(&dir, "reconstruction.csv")?, &header)?;
    let out = json!({
        "seed": cfg.simulation.seed,
        "config_hash": cfg.hash(),
        "report": report,
    });
    serde_json::to_writer_pretty(create(&dir, "reconstruction.json")?, &out)?;
    println!("reconstructed {k_cut} of {} modes into {}", m.modes(), dir.display());
    Ok(())
}

fn instability(cfg: &RunConfig) -> Result<()> {
    let es = EigenSystem::build(cfg.domain, cfg.simulation.modes)?;
    let inv = &cfg.inverse;
    let prof = pool(cfg.threads)?.install(|| {
        instability_report(
            &cfg.simulation,
            &es,
            &cfg.source.h,
            inv.gamma,
            inv.beta_variant,
            inv.epsilon,
        )
    })?;
    let dir = cfg.out_dir();
    prof.write_csv(create(&dir, "instability.csv")?, &cfg.header())?;
    println!(
        "beta = {:.4}; slopes of log(A_k lambda_k) {:.4} and log(B_kk lambda_k^beta) {:.4}",
        prof.beta, prof.slope_a, prof.slope_b
    );
    Ok(())
}

fn run_selftest(all: bool, threads: Option<usize>) -> Result<bool> {
    let checks = pool(threads)?.install(|| {
        if all {
            (1..=8).flat_map(selftest::criterion).collect()
        } else {
            selftest::quick_suite()
        }
    });
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => a.load().and_then(|c| simulate(&c)),
        Command::Reconstruct {
            run,
            moments,
            covariance,
        } => run.load().and_then(|c| reconstruct(&c, moments, covariance)),
        Command::Instability(a) => a.load().and_then(|c| instability(&c)),
        Command::Selftest { all, threads } => match run_selftest(all, threads) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                e if e.is_numerical() => 3,
                Error::Io(_) | Error::Json(_) => 1,
                _ => 2,
            })
        }
    }
}
