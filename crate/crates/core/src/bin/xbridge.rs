//! Command-line front end: simulate skeletons, restore them at new times,
//! verify a configured model against its oracles, and estimate transition
//! densities.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use exact_bridges::harness::config::ExperimentConfig;
use exact_bridges::harness::oracle::{estimate_transition_density, transition_density_profile};
use exact_bridges::harness::record::{read_skeletons, write_skeletons};
use exact_bridges::harness::{run_experiment, verify_model_config};
use exact_bridges::restore::{restore, restore_original_scale};
use exact_bridges::stream::replication_stream;

/// Exact simulation of conditioned (jump) diffusion sample path skeletons.
#[derive(Parser)]
#[command(name = "xbridge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed (also honoured: XBRIDGE_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured worker thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm and write skeleton + diagnostics files.
    Simulate(Common),
    /// Extend skeletons from a record file at further time points.
    Restore {
        #[command(flatten)]
        common: Common,
        /// Skeleton record file written by `simulate`.
        #[arg(long)]
        skeletons: PathBuf,
        /// Comma-separated query times in [0, T].
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Also write values mapped back to the original scale.
        #[arg(long)]
        original_scale: bool,
    },
    /// Run the verification checks for the configured model.
    Verify(Common),
    /// Monte-Carlo transition density estimate for diffusion models.
    Density {
        #[command(flatten)]
        common: Common,
        /// Number of bridge paths.
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        /// Also integrate the density over a y-grid as a sanity check.
        #[arg(long)]
        normalisation: bool,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, exact_bridges::Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Ok(env_seed) = std::env::var("XBRIDGE_SEED") {
        cfg.run.seed = env_seed.parse().map_err(|_| {
            exact_bridges::Error::Config(format!("XBRIDGE_SEED is not a u64: {env_seed:?}"))
        })?;
    }
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.run.threads = threads;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run() -> Result<ExitCode, exact_bridges::Error> {
    match Cli::parse().command {
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            let summary = run_experiment(&cfg)?;
            println!(
                "wrote {} ({} skeletons, acceptance rate {:.4})",
                summary.skeleton_file.display(),
                cfg.run.replications,
                summary.acceptance_rate
            );
            println!("diagnostics: {}", summary.diagnostics_file.display());
            if let Some(p) = summary.plot_file {
                println!("plot data: {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Restore {
            common,
            skeletons,
            mut times,
            original_scale,
        } => {
            let cfg = load_config(&common)?;
            let model = cfg.build_model()?;
            let range = model.phi_range_fn();
            let (meta, loaded) = read_skeletons(&skeletons, &range)?;
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut extended = Vec::with_capacity(loaded.len());
            let mut values = Vec::with_capacity(loaded.len());
            for (i, skeleton) in loaded.iter().enumerate() {
                let mut rng = replication_stream(cfg.run.seed ^ 0x72657374, i as u64);
                let (vals, ext) = restore(skeleton, &times, &mut rng)?;
                values.push(vals);
                extended.push(ext);
            }
            std::fs::create_dir_all(&cfg.output.dir)?;
            let out_path = cfg.output.dir.join("skeletons_restored.tsv");
            write_skeletons(&out_path, &meta, &extended)?;
            println!("restored {} skeletons at {:?}", extended.len(), times);
            println!("wrote {}", out_path.display());
            if original_scale {
                let back = restore_original_scale(&model, &values[0])?;
                println!("first skeleton on the original scale: {back:?}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(common) => {
            let cfg = load_config(&common)?;
            let outcome = verify_model_config(&cfg)?;
            for check in &outcome.checks {
                println!(
                    "{} {} — {}",
                    if check.passed { "pass" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            let failures = outcome.failures();
            if failures == 0 {
                println!("all {} checks passed", outcome.checks.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{failures} checks failed");
                Ok(ExitCode::from(failures.min(255) as u8))
            }
        }
        Command::Density {
            common,
            paths,
            normalisation,
        } => {
            let cfg = load_config(&common)?;
            let model = cfg.build_model()?;
            let (x, y) = cfg.endpoints(&model)?;
            let mut rng = replication_stream(cfg.run.seed, 0);
            let dt = cfg.verification.grid_step;
            let (est, se) =
                estimate_transition_density(&model, x, y, cfg.run.t, paths, dt, &mut rng)?;
            println!("p_T({x}, {y}) = {est:.6} +- {se:.6} (T = {}, dt = {dt})", cfg.run.t);
            if normalisation {
                let ys: Vec<f64> = (0..=200).map(|i| -5.0 + 0.05 * i as f64).collect();
                let profile =
                    transition_density_profile(&model, x, &ys, cfg.run.t, paths / 4, dt, &mut rng)?;
                let mut integral = 0.0;
                for w in profile.windows(2) {
                    integral += 0.025 * (w[0].0 + w[1].0);
                }
                println!("density integral over [-5, 5]: {integral:.4}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
