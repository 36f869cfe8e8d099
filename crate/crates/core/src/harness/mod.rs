//! Experiment driver, verification checks and file output.

pub mod config;
pub mod oracle;
pub mod record;
pub mod stats;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use crate::cauea::simulate_cauea;
use crate::cuea::{acceptance_probability_estimate, simulate_cuea};
use crate::error::{Error, Result};
use crate::jumps::{simulate_caujea, simulate_cujea};
use crate::model::{validate_model, UnitVolatilityModel};
use crate::restore::restore;
use crate::skeleton::{DiagnosticCounters, Skeleton};
use crate::stream::replication_stream;
use config::ExperimentConfig;
use record::RecordMeta;

/// Result of one `run_experiment` call.
#[derive(Debug)]
pub struct ExperimentSummary {
    pub skeleton_file: PathBuf,
    pub diagnostics_file: PathBuf,
    pub plot_file: Option<PathBuf>,
    pub counters: DiagnosticCounters,
    pub acceptance_rate: f64,
}

fn simulate_one(
    m: &UnitVolatilityModel,
    algorithm: &str,
    x: f64,
    y: f64,
    t_end: f64,
    master: u64,
    index: u64,
) -> Result<(Skeleton, DiagnosticCounters)> {
    let mut rng = replication_stream(master, index);
    Ok(match algorithm {
        "cuea" => {
            let (s, c) = simulate_cuea(m, x, y, t_end, &mut rng)?;
            (Skeleton::Cuea(s), c)
        }
        "cauea" => {
            let (s, c) = simulate_cauea(m, x, y, t_end, &mut rng)?;
            (Skeleton::Cauea(s), c)
        }
        "cujea" => {
            let (s, c) = simulate_cujea(m, x, y, t_end, &mut rng)?;
            (Skeleton::Caujea(s), c)
        }
        "caujea" => {
            let (s, c) = simulate_caujea(m, x, y, t_end, &mut rng)?;
            (Skeleton::Caujea(s), c)
        }
        other => return Err(Error::Config(format!("unknown algorithm {other:?}"))),
    })
}

/// Run the configured algorithm for the replication count, write the
/// skeleton record file plus a diagnostics summary, and optionally plot
/// data of restored paths. Replications parallelise over the configured
/// thread count with per-index streams, so output bytes do not depend on
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let started = Instant::now();
    let m = cfg.build_model()?;
    let (x, y) = cfg.endpoints(&m)?;
    let t_end = cfg.run.t;
    let seed = cfg.run.seed;

    let grid: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
    let mut validation_rng = replication_stream(seed, u64::MAX);
    let validation = validate_model(&m, &grid, 2_000, &mut validation_rng)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let n = cfg.run.replications;
    let results: Result<Vec<(Skeleton, DiagnosticCounters)>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| simulate_one(&m, &cfg.run.algorithm, x, y, t_end, seed, i as u64))
            .collect()
    });
    let results = results?;

    let mut counters = DiagnosticCounters::default();
    let mut skeletons = Vec::with_capacity(n);
    for (skeleton, c) in results {
        counters.merge(&c);
        skeletons.push(skeleton);
    }
    let acceptance_rate = counters.acceptances as f64 / counters.proposals.max(1) as f64;

    std::fs::create_dir_all(&cfg.output.dir)?;
    let skeleton_file = cfg.output.dir.join("skeletons.tsv");
    let meta = RecordMeta {
        model: cfg.model_label(),
        algorithm: cfg.run.algorithm.clone(),
        seed,
        x,
        y,
        t_end,
    };
    record::write_skeletons(&skeleton_file, &meta, &skeletons)?;

    let plot_file = if cfg.output.plot_data {
        let path = cfg.output.dir.join("paths.tsv");
        let points = cfg.output.plot_points.max(2);
        let times: Vec<f64> = (0..points)
            .map(|i| t_end * i as f64 / (points - 1) as f64)
            .collect();
        let mut out = String::from("# columns = skeleton_id\ttime\tvalue\n");
        for (i, skeleton) in skeletons.iter().enumerate() {
            let mut rng = replication_stream(seed ^ 0x706c6f74, i as u64);
            let interior: Vec<f64> = times
                .iter()
                .copied()
                .filter(|&t| t > 0.0 && t < t_end)
                .collect();
            let (vals, _) = restore(skeleton, &interior, &mut rng)?;
            let (sx, sy, _) = skeleton.endpoints();
            let _ = writeln!(out, "{i}\t0\t{sx}");
            for (t, v) in interior.iter().zip(&vals) {
                let _ = writeln!(out, "{i}\t{t}\t{v}");
            }
            let _ = writeln!(out, "{i}\t{t_end}\t{sy}");
        }
        std::fs::write(&path, out)?;
        Some(path)
    } else {
        None
    };

    let diagnostics_file = cfg.output.dir.join("diagnostics.txt");
    let mut d = String::new();
    let _ = writeln!(d, "model = {}", cfg.model_label());
    let _ = writeln!(d, "algorithm = {}", cfg.run.algorithm);
    let _ = writeln!(d, "replications = {n}");
    let _ = writeln!(d, "seed = {seed}");
    let _ = writeln!(d, "threads = {}", cfg.run.threads);
    let _ = writeln!(d, "proposals = {}", counters.proposals);
    let _ = writeln!(d, "acceptance_rate = {acceptance_rate}");
    let _ = writeln!(d, "pre_rejections = {}", counters.pre_rejections);
    let _ = writeln!(d, "thinning_rejections = {}", counters.thinning_rejections);
    let _ = writeln!(d, "phi_evaluations = {}", counters.phi_evaluations);
    let _ = writeln!(d, "mean_kappa = {}", counters.mean_kappa());
    let hist: Vec<String> = counters
        .kappa_histogram
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| format!("{k}:{c}"))
        .collect();
    let _ = writeln!(d, "kappa_histogram = {}", hist.join(" "));
    let _ = writeln!(d, "validation:\n{validation}");
    let _ = writeln!(
        d,
        "wall_clock_ms = {} (varies between runs)",
        started.elapsed().as_millis()
    );
    std::fs::write(&diagnostics_file, d)?;

    Ok(ExperimentSummary {
        skeleton_file,
        diagnostics_file,
        plot_file,
        counters,
        acceptance_rate,
    })
}

/// One named verification check.
#[derive(Debug)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct VerifyOutcome {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyOutcome {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.checks.push(VerifyCheck {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Restored marginal sample at `q` under the given algorithm, one skeleton
/// per draw.
pub fn restored_marginals(
    m: &UnitVolatilityModel,
    algorithm: &str,
    x: f64,
    y: f64,
    t_end: f64,
    queries: &[f64],
    n: usize,
    master: u64,
    threads: usize,
) -> Result<Vec<Vec<f64>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Result<Vec<Vec<f64>>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let (skeleton, _) = simulate_one(m, algorithm, x, y, t_end, master, i as u64)?;
                let mut rng = replication_stream(master ^ 0x72657374, i as u64);
                let (vals, _) = restore(&skeleton, queries, &mut rng)?;
                Ok(vals)
            })
            .collect()
    });
    rows
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Two-of-n seeds rule: the check fails when at least two seeds reject at
/// `level`.
fn seeds_rule(p_values: &[f64], level: f64) -> (bool, String) {
    let rejections = p_values.iter().filter(|&&p| p <= level).count();
    (
        rejections < 2,
        format!(
            "p-values {:?}, {} of {} below {level}",
            p_values
                .iter()
                .map(|p| format!("{p:.4}"))
                .collect::<Vec<_>>(),
            rejections,
            p_values.len()
        ),
    )
}

/// Analytic bridge marginal variance for the mean-reverting model:
/// `sinh(theta t) sinh(theta (T - t)) / (theta sinh(theta T))`.
pub fn ou_bridge_variance(theta: f64, t: f64, t_end: f64) -> f64 {
    (theta * t).sinh() * (theta * (t_end - t)).sinh() / (theta * (theta * t_end).sinh())
}

/// Run the verification suite appropriate to the configured model. The exit
/// status of the CLI `verify` subcommand is the number of failed checks.
pub fn verify_model_config(cfg: &ExperimentConfig) -> Result<VerifyOutcome> {
    let m = cfg.build_model()?;
    let (x, y) = cfg.endpoints(&m)?;
    let t_end = cfg.run.t;
    let v = &cfg.verification;
    let n = v.ks_samples;
    let level = v.level;
    let seeds: Vec<u64> = (0..v.seeds).map(|s| cfg.run.seed.wrapping_add(s as u64)).collect();
    let queries: Vec<f64> = v
        .query_times
        .iter()
        .copied()
        .filter(|&q| q > 0.0 && q < t_end)
        .collect();
    if queries.is_empty() {
        return Err(Error::Config("verification.query_times has no interior times".into()));
    }
    let mut out = VerifyOutcome::default();

    let has_jumps = m.jumps.is_some();
    match (cfg.model.kind.as_str(), has_jumps) {
        ("zero", false) => {
            for algorithm in ["cuea", "cauea"] {
                let mut ps = Vec::new();
                for &seed in &seeds {
                    let rows = restored_marginals(
                        &m, algorithm, x, y, t_end, &queries, n, seed, cfg.run.threads,
                    )?;
                    for (j, &q) in queries.iter().enumerate() {
                        let sd = (q * (t_end - q) / t_end).sqrt();
                        let mean = x + (q / t_end) * (y - x);
                        let dist = Normal::new(mean, sd)
                            .map_err(|e| Error::NumericFailure(e.to_string()))?;
                        let (_, p) = stats::ks_one_sample(&column(&rows, j), |v| dist.cdf(v))?;
                        ps.push(p);
                    }
                }
                let (passed, detail) = seeds_rule(&ps, level);
                out.push(format!("{algorithm}: bridge marginals"), passed, detail);
            }
            let mut rng = replication_stream(cfg.run.seed, 1);
            let (rate, _) = acceptance_probability_estimate(&m, x, y, t_end, 1_000, &mut rng)?;
            out.push(
                "cuea: driftless acceptance rate is one",
                rate == 1.0,
                format!("rate = {rate}"),
            );
        }
        ("ou", false) => {
            let theta = cfg.model.theta.unwrap_or(1.0);
            for algorithm in ["cuea", "cauea"] {
                let mut ps = Vec::new();
                for &seed in &seeds {
                    let rows = restored_marginals(
                        &m, algorithm, x, y, t_end, &queries, n, seed, cfg.run.threads,
                    )?;
                    for (j, &q) in queries.iter().enumerate() {
                        if x != 0.0 || y != 0.0 {
                            return Err(Error::Config(
                                "the analytic check uses x = y = 0".into(),
                            ));
                        }
                        let sd = ou_bridge_variance(theta, q, t_end).sqrt();
                        let dist = Normal::new(0.0, sd)
                            .map_err(|e| Error::NumericFailure(e.to_string()))?;
                        let (_, p) = stats::ks_one_sample(&column(&rows, j), |v| dist.cdf(v))?;
                        ps.push(p);
                    }
                }
                let (passed, detail) = seeds_rule(&ps, level);
                out.push(format!("{algorithm}: analytic bridge marginals"), passed, detail);
            }
        }
        ("sine", false) => {
            let mut ps = Vec::new();
            for &seed in &seeds {
                let a = restored_marginals(&m, "cuea", x, y, t_end, &queries, n, seed, cfg.run.threads)?;
                let b = restored_marginals(
                    &m,
                    "cauea",
                    x,
                    y,
                    t_end,
                    &queries,
                    n,
                    seed ^ 0x5eed,
                    cfg.run.threads,
                )?;
                for j in 0..queries.len() {
                    let (_, p) = stats::ks_two_sample(&column(&a, j), &column(&b, j))?;
                    ps.push(p);
                }
            }
            let (passed, detail) = seeds_rule(&ps, level);
            out.push("cuea vs cauea marginals", passed, detail);

            let mut rng = replication_stream(cfg.run.seed, 2);
            let (emp, se_emp) =
                acceptance_probability_estimate(&m, x, y, t_end, 100_000, &mut rng)?;
            let (grid, se_grid) =
                oracle::grid_acceptance_rate(&m, x, y, t_end, v.grid_step, 100_000, &mut rng)?;
            let tol = 3.0 * (se_emp * se_emp + se_grid * se_grid).sqrt();
            out.push(
                "acceptance rate identity",
                (emp - grid).abs() < tol,
                format!("empirical {emp:.5} vs grid {grid:.5} (tol {tol:.5})"),
            );
        }
        (_, true) => {
            let q = queries[queries.len() / 2];
            let mut ps = Vec::new();
            for &seed in &seeds {
                let a = restored_marginals(&m, "caujea", x, y, t_end, &[q], n, seed, cfg.run.threads)?;
                let b = restored_marginals(
                    &m,
                    "cujea",
                    x,
                    y,
                    t_end,
                    &[q],
                    n,
                    seed ^ 0x5eed,
                    cfg.run.threads,
                )?;
                let (_, p) = stats::ks_two_sample(&column(&a, 0), &column(&b, 0))?;
                ps.push(p);
            }
            let (passed, detail) = seeds_rule(&ps, level);
            out.push("caujea vs cujea marginals", passed, detail);
        }
        (kind, _) => {
            return Err(Error::Config(format!(
                "no verification suite is wired for model kind {kind:?}"
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::config::ExperimentConfig;
    use super::*;

    #[test]
    fn driftless_experiment_accepts_everything() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::parse(
            r#"
schema = 1
[model]
kind = "zero"
[run]
algorithm = "cuea"
x = 0.0
y = 0.0
t = 1.0
replications = 100
seed = 3
"#,
        )
        .unwrap();
        cfg.output.dir = dir.path().to_path_buf();
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.acceptance_rate, 1.0);
        assert!(summary.counters.balanced());
        let m = cfg.build_model().unwrap();
        let range = m.phi_range_fn();
        let (_, skeletons) = record::read_skeletons(&summary.skeleton_file, &range).unwrap();
        assert_eq!(skeletons.len(), 100);
        let diag = std::fs::read_to_string(&summary.diagnostics_file).unwrap();
        assert!(diag.contains("acceptance_rate = 1"), "{diag}");
    }

    #[test]
    fn plot_data_is_written_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::parse(
            r#"
schema = 1
[model]
kind = "ou"
theta = 1.0
[run]
algorithm = "cauea"
x = 0.0
y = 0.0
t = 1.0
replications = 5
seed = 3
[output]
plot_data = true
plot_points = 21
"#,
        )
        .unwrap();
        cfg.output.dir = dir.path().to_path_buf();
        let summary = run_experiment(&cfg).unwrap();
        let plot = std::fs::read_to_string(summary.plot_file.unwrap()).unwrap();
        // Five paths times 21 grid points plus the header.
        assert_eq!(plot.lines().count(), 1 + 5 * 21);
    }

    #[test]
    fn ou_bridge_variance_midpoint_value() {
        assert!((ou_bridge_variance(1.0, 0.5, 1.0) - 0.2311).abs() < 5e-5);
    }
}
