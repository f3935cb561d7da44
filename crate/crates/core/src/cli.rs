//! Command-line front end.
//!
//! Each subcommand writes one CSV of sample-level data and a `summary.json`
//! into the output directory, plus a `manifest.json` echoing the
//! configuration with a SHA-256 digest of every data file. Data files depend
//! only on the configuration, never on the worker count or the clock.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{
    census_checkpoints, coalescence_experiment, coalescence_tail_fit, exp_tail_fit, forest_census,
    lyapunov_drift_test, martingale_drift_test, open_box_starts, point_density_curve,
    spaced_starts,
};
use crate::domination::{coupled_domination_run, minimal_l0};
use crate::error::Error;
use crate::exploration::{run_until_regenerations, RegenerationRecord};
use crate::field::{Field, FieldParams, Vertex};
use crate::replicas::{run_replicas_with, WORKERS_ENV};
use crate::scaling::{
    b1_diagnostic, e1_diagnostic, e1_sample, estimate_constants, B1Grid, ScalingConstants,
    WebSettings,
};
use crate::stats::MeanSe;
use crate::successor::iterate_path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "dsf", version, about = "Directed spanning forest experiments")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "dsf-out")]
    pub out: PathBuf,
    /// Worker threads; does not affect results.
    #[arg(long, global = true, env = WORKERS_ENV)]
    #[serde(skip)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FieldArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl FieldArgs {
    fn params(&self) -> Result<FieldParams, Error> {
        FieldParams::new(self.d, self.p, self.seed)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConstantArgs {
    /// Mean regeneration duration; estimated when omitted.
    #[arg(long)]
    pub gamma0: Option<f64>,
    /// Regeneration displacement standard deviation; estimated when omitted.
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Replicas used to estimate the constants.
    #[arg(long, default_value_t = 100)]
    pub const_replicas: u64,
    #[arg(long, default_value_t = 1000)]
    pub const_regenerations: u64,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Follow one path.
    Path {
        #[command(flatten)]
        field: FieldArgs,
        /// Comma-separated start coordinates; the origin by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Vec<i64>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Regeneration records of the joint process.
    Regen {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 1000)]
        replicas: u64,
        #[arg(long, default_value_t = 5)]
        j_max: u64,
        /// Walkers spaced along the first axis.
        #[arg(long, default_value_t = 2)]
        walkers: usize,
        #[arg(long, default_value_t = 5)]
        spacing: i64,
        #[arg(long, default_value_t = 1_000_000)]
        step_cap: u64,
    },
    /// Coalescence levels of two walkers.
    Coalesce {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 1)]
        sep: i64,
        #[arg(long, default_value_t = 10_000)]
        replicas: u64,
        #[arg(long, default_value_t = 100_000)]
        cap: i64,
        #[arg(long, default_value_t = 100)]
        fit_min: u64,
        #[arg(long, default_value_t = 10_000)]
        fit_max: u64,
    },
    /// Number of distinct components of a family of paths.
    Census {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 40)]
        width: i64,
        /// Start from every open vertex of the box instead of `count` spaced starts.
        #[arg(long)]
        open_box: bool,
        #[arg(long, default_value_t = 100_000)]
        horizon: i64,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
    },
    /// Mean regeneration increments of the first walker.
    Martingale {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 10)]
        sep: i64,
        #[arg(long, default_value_t = 5)]
        j_max: u64,
        #[arg(long, default_value_t = 10_000)]
        replicas: u64,
    },
    /// Lyapunov increment over one regeneration (d = 3).
    Lyapunov {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [80, 0], allow_hyphen_values = true)]
        x: Vec<i64>,
        #[arg(long, default_value_t = 10_000)]
        replicas: u64,
    },
    /// History height against its comparison chain.
    Domination {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long)]
        l0: Option<u64>,
        #[arg(long, default_value_t = 5)]
        spacing: i64,
    },
    /// Estimate the diffusive scaling constants.
    Scaling {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long, default_value_t = 1000)]
        regenerations: u64,
    },
    /// Probability of two or more distinct descendants from a short interval.
    WebB1 {
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        constants: ConstantArgs,
        #[arg(long, default_value_t = 100.0)]
        n: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.4, 0.8])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        grid_a: usize,
        #[arg(long, default_value_t = 20)]
        grid_t0: usize,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
    },
    /// Mean number of distinct points hit in a window.
    WebE1 {
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        constants: ConstantArgs,
        #[arg(long, default_value_t = 100.0)]
        n: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 10)]
        windows: usize,
        #[arg(long, default_value_t = 200)]
        replicas: u64,
    },
    /// Density of distinct paths from a full line of starts.
    Density {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 5000)]
        half_width: i64,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 300, 1000, 3000, 10000])]
        levels: Vec<i64>,
        #[arg(long, default_value_t = 10)]
        replicas: u64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Path { .. } => "path",
            Command::Regen { .. } => "regen",
            Command::Coalesce { .. } => "coalesce",
            Command::Census { .. } => "census",
            Command::Martingale { .. } => "martingale",
            Command::Lyapunov { .. } => "lyapunov",
            Command::Domination { .. } => "domination",
            Command::Scaling { .. } => "scaling",
            Command::WebB1 { .. } => "web-b1",
            Command::WebE1 { .. } => "web-e1",
            Command::Density { .. } => "density",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<OutputDigest>,
}

/// Result of a run: exit code plus a message for stderr.
#[derive(Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub message: Option<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Sim(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn csv(&mut self, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
        self.files.push(name.to_string());
        Ok(csv::Writer::from_path(self.dir.join(name))?)
    }

    fn summary(&mut self, value: &serde_json::Value) -> Result<(), CliError> {
        let name = "summary.json";
        self.files.push(name.to_string());
        let mut f = fs::File::create(self.dir.join(name))?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn write_manifest(config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let outputs = out
        .files
        .iter()
        .map(|f| {
            Ok(OutputDigest {
                file: f.clone(),
                sha256: sha256_file(&out.dir.join(f))?,
            })
        })
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    let mut f = fs::File::create(out.dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn mean_se_json(m: &MeanSe) -> serde_json::Value {
    json!({ "mean": m.mean, "se": m.se, "n": m.n })
}

fn constants_for(
    params: FieldParams,
    args: &ConstantArgs,
    workers: usize,
) -> Result<ScalingConstants, Error> {
    match (args.gamma0, args.sigma0) {
        (Some(g), Some(s)) => Ok(ScalingConstants::fixed(g, s, params.p)),
        (None, None) => with_workers(workers, || {
            estimate_constants(
                params.with_seed(params.seed ^ 0x5ca1e),
                args.const_replicas,
                args.const_regenerations,
            )
        }),
        _ => Err(Error::invalid("give both --gamma0 and --sigma0 or neither")),
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Executes the configured subcommand.
pub fn run(config: &RunConfig) -> RunOutcome {
    let workers = config
        .workers
        .filter(|&w| w > 0)
        .unwrap_or_else(crate::replicas::default_workers);
    let mut out = Outputs {
        dir: config.out.clone(),
        files: Vec::new(),
    };
    let result = fs::create_dir_all(&out.dir)
        .map_err(CliError::from)
        .and_then(|_| with_workers(workers, || execute(&config.command, &mut out, workers)));
    let outcome = match result {
        Ok(None) => RunOutcome {
            code: EXIT_OK,
            message: None,
        },
        Ok(Some(violation)) => RunOutcome {
            code: EXIT_INVARIANT,
            message: Some(violation),
        },
        Err(CliError::Sim(e @ Error::BudgetExhausted { .. })) => RunOutcome {
            code: EXIT_BUDGET,
            message: Some(e.to_string()),
        },
        Err(CliError::Sim(e @ (Error::InvalidArgument(_) | Error::DimensionMismatch { .. }))) => {
            RunOutcome {
                code: EXIT_USAGE,
                message: Some(e.to_string()),
            }
        }
        Err(e) => RunOutcome {
            code: EXIT_INVARIANT,
            message: Some(e.to_string()),
        },
    };
    if out.dir.is_dir() {
        if let Err(e) = write_manifest(config, &out) {
            return RunOutcome {
                code: EXIT_INVARIANT,
                message: Some(format!("writing manifest: {e}")),
            };
        }
    }
    outcome
}

/// Runs one subcommand; `Ok(Some(msg))` reports an invariant violation.
fn execute(
    command: &Command,
    out: &mut Outputs,
    workers: usize,
) -> Result<Option<String>, CliError> {
    match command {
        Command::Path {
            field,
            start,
            steps,
        } => {
            let params = field.params()?;
            let start = if start.is_empty() {
                Vertex::origin(params.d)
            } else {
                Vertex::new(start)
            };
            let path = iterate_path(&Field::new(params), &start, *steps)?;
            let mut w = out.csv("path.csv")?;
            let mut header = vec!["step".to_string()];
            header.extend((1..=params.d).map(|i| format!("x{i}")));
            header.push("radius".into());
            w.write_record(&header)?;
            for (k, v) in path.steps.iter().enumerate() {
                let mut row = vec![k.to_string()];
                row.extend(v.iter().map(|c| c.to_string()));
                row.push(if k == 0 {
                    String::new()
                } else {
                    path.step_radii[k - 1].to_string()
                });
                w.write_record(&row)?;
            }
            w.flush()?;
            out.summary(&json!({
                "start": path.start,
                "end": path.last(),
                "steps": steps,
                "total_radius": path.step_radii.iter().sum::<u64>(),
            }))?;
            Ok(None)
        }
        Command::Regen {
            field,
            replicas: n,
            j_max,
            walkers,
            spacing,
            step_cap,
        } => {
            let params = field.params()?;
            if *walkers == 0 || *spacing < 1 {
                return Err(Error::invalid("need walkers >= 1 and spacing >= 1").into());
            }
            let starts = spaced_starts(params.d, *walkers, *spacing * *walkers as i64);
            let runs = run_replicas_with(*n, workers, |r| {
                run_until_regenerations(
                    &Field::new(params.for_replica(r)),
                    &starts,
                    *j_max,
                    *step_cap,
                )
            });
            let mut w = out.csv("regen.csv")?;
            w.write_record(["replica", "j", "tau_steps", "T_time", "width"])?;
            let mut exhausted = None;
            let mut first_tau = Vec::new();
            let write = |w: &mut csv::Writer<fs::File>, r: usize, recs: &[RegenerationRecord]| {
                recs.iter().try_for_each(|rec| {
                    w.write_record([
                        r.to_string(),
                        rec.index.to_string(),
                        rec.tau_steps.to_string(),
                        rec.t_time.to_string(),
                        rec.width.to_string(),
                    ])
                })
            };
            for (r, run) in runs.into_iter().enumerate() {
                match run {
                    Ok(recs) => {
                        first_tau.push(recs[0].tau_steps);
                        write(&mut w, r, &recs)?;
                    }
                    Err(Error::BudgetExhausted { step_cap, partial }) => {
                        write(&mut w, r, &partial)?;
                        exhausted.get_or_insert(Error::BudgetExhausted {
                            step_cap,
                            partial: vec![],
                        });
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            w.flush()?;
            let fit = exp_tail_fit(&first_tau).ok();
            let taus: Vec<f64> = first_tau.iter().map(|&t| t as f64).collect();
            out.summary(&json!({
                "replicas": n,
                "completed": first_tau.len(),
                "first_tau": mean_se_json(&MeanSe::of(&taus)),
                "first_tau_exp_fit": fit.map(|f| json!({"slope": f.slope, "r_squared": f.r_squared})),
            }))?;
            match exhausted {
                Some(e) => Err(e.into()),
                None => Ok(None),
            }
        }
        Command::Coalesce {
            field,
            sep,
            replicas: n,
            cap,
            fit_min,
            fit_max,
        } => {
            let params = field.params()?;
            let samples = coalescence_experiment(params, *sep, *n, *cap)?;
            let mut w = out.csv("coalesce.csv")?;
            w.write_record(["replica", "t_nu", "nu", "censored"])?;
            for (r, s) in samples.iter().enumerate() {
                w.write_record([
                    r.to_string(),
                    s.t_nu.to_string(),
                    s.nu.to_string(),
                    s.censored.to_string(),
                ])?;
            }
            w.flush()?;
            let censored = samples.iter().filter(|s| s.censored).count();
            let fit = coalescence_tail_fit(&samples, *fit_min, *fit_max);
            out.summary(&json!({
                "replicas": n,
                "censored": censored,
                "censored_fraction": censored as f64 / samples.len().max(1) as f64,
                "survival_fit": match fit {
                    Ok(f) => json!({"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared,
                                    "t_min": fit_min, "t_max": fit_max}),
                    Err(e) => json!({"error": e.to_string()}),
                },
            }))?;
            Ok(None)
        }
        Command::Census {
            field,
            count,
            width,
            open_box,
            horizon,
            replicas: n,
        } => {
            let params = field.params()?;
            let checkpoints = census_checkpoints(*horizon);
            let runs = run_replicas_with(*n, workers, |r| {
                let env = Field::new(params.for_replica(r));
                let starts = if *open_box {
                    open_box_starts(&env, *width)
                } else {
                    spaced_starts(params.d, *count, *width)
                };
                forest_census(&env, &starts, *horizon, &checkpoints)
            });
            let mut w = out.csv("census.csv")?;
            w.write_record(["replica", "level", "components"])?;
            let mut finals = Vec::new();
            for (r, run) in runs.into_iter().enumerate() {
                let c = run?;
                for cp in &c.checkpoints {
                    w.write_record([
                        r.to_string(),
                        cp.level.to_string(),
                        cp.components.to_string(),
                    ])?;
                }
                if c.checkpoints
                    .windows(2)
                    .any(|p| p[1].components > p[0].components)
                {
                    w.flush()?;
                    return Ok(Some(format!("component count increased in replica {r}")));
                }
                finals.push(c.final_components());
            }
            w.flush()?;
            let single = finals.iter().filter(|&&c| c == 1).count();
            out.summary(&json!({
                "d": params.d,
                "replicas": n,
                "horizon": horizon,
                "single_component": single,
                "several_components": finals.len() - single,
                "final_components": finals,
            }))?;
            Ok(None)
        }
        Command::Martingale {
            field,
            sep,
            j_max,
            replicas: n,
        } => {
            let rows = martingale_drift_test(field.params()?, *sep, *j_max, *n)?;
            let mut w = out.csv("martingale.csv")?;
            w.write_record(["j", "mean", "se", "n"])?;
            for r in &rows {
                w.write_record([
                    r.j.to_string(),
                    r.increment.mean.to_string(),
                    r.increment.se.to_string(),
                    r.increment.n.to_string(),
                ])?;
            }
            w.flush()?;
            out.summary(&json!({
                "separation": sep,
                "replicas": n,
                "all_within_3se": rows.iter().all(|r| r.within(3.0)),
                "rows": rows,
            }))?;
            Ok(None)
        }
        Command::Lyapunov {
            field,
            x,
            replicas: n,
        } => {
            if x.len() != 2 {
                return Err(Error::invalid("--x takes two coordinates").into());
            }
            let e = lyapunov_drift_test(field.params()?, [x[0], x[1]], *n)?;
            let mut w = out.csv("lyapunov.csv")?;
            w.write_record(["estimator", "mean", "se", "lower99", "upper99"])?;
            for (name, m, ci) in [
                ("raw", &e.raw, e.raw_interval),
                ("adjusted", &e.adjusted, e.adjusted_interval),
            ] {
                w.write_record([
                    name.to_string(),
                    m.mean.to_string(),
                    m.se.to_string(),
                    ci.0.to_string(),
                    ci.1.to_string(),
                ])?;
            }
            w.flush()?;
            out.summary(&serde_json::to_value(&e)?)?;
            Ok(None)
        }
        Command::Domination {
            field,
            steps,
            replicas: n,
            l0,
            spacing,
        } => {
            let params = field.params()?;
            let l0 = match l0 {
                Some(l) => *l,
                None => minimal_l0(params.p)?,
            };
            let starts = [
                Vertex::origin(params.d),
                spaced_starts(params.d, 2, 2 * spacing)[1].clone(),
            ];
            let traces = run_replicas_with(*n, workers, |r| {
                coupled_domination_run(&Field::new(params.for_replica(r)), &starts, l0, *steps)
            });
            let mut w = out.csv("domination.csv")?;
            w.write_record([
                "replica",
                "tau",
                "tau_m",
                "max_height",
                "max_m",
                "violations",
            ])?;
            let mut violations = 0;
            for (r, t) in traces.into_iter().enumerate() {
                let t = t?;
                violations += t.violations();
                let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
                w.write_record([
                    r.to_string(),
                    opt(t.tau()),
                    opt(t.tau_m()),
                    t.heights.iter().max().unwrap().to_string(),
                    t.m_values.iter().max().unwrap().to_string(),
                    t.violations().to_string(),
                ])?;
            }
            w.flush()?;
            out.summary(&json!({
                "l0": l0,
                "steps": steps,
                "replicas": n,
                "violations": violations,
            }))?;
            Ok((violations > 0).then(|| format!("{violations} steps with height above the chain")))
        }
        Command::Scaling {
            field,
            replicas: n,
            regenerations,
        } => {
            let c = estimate_constants(field.params()?, *n, *regenerations)?;
            let mut w = out.csv("scaling.csv")?;
            w.write_record(["quantity", "value", "se"])?;
            w.write_record([
                "gamma0".into(),
                c.gamma0.to_string(),
                c.gamma0_se.to_string(),
            ])?;
            w.write_record([
                "sigma0".into(),
                c.sigma0.to_string(),
                c.sigma0_se.to_string(),
            ])?;
            w.write_record([
                "drift".into(),
                c.drift.mean.to_string(),
                c.drift.se.to_string(),
            ])?;
            w.flush()?;
            out.summary(&serde_json::to_value(c)?)?;
            Ok(None)
        }
        Command::WebB1 {
            field,
            constants,
            n,
            t,
            eps,
            grid_a,
            grid_t0,
            replicas: reps,
        } => {
            let params = field.params()?;
            let constants = constants_for(params, constants, workers)?;
            let settings = WebSettings {
                n: *n,
                t: *t,
                constants,
            };
            let grid = B1Grid {
                cells_a: *grid_a,
                cells_t0: *grid_t0,
            };
            let report = b1_diagnostic(params, &settings, eps, &grid, *reps)?;
            let mut w = out.csv("web-b1.csv")?;
            w.write_record(["epsilon", "pooled", "se", "grid_sup"])?;
            for row in &report.rows {
                w.write_record([
                    row.epsilon.to_string(),
                    row.pooled.mean.to_string(),
                    row.pooled.se.to_string(),
                    row.grid_sup.to_string(),
                ])?;
            }
            w.flush()?;
            out.summary(&json!({
                "constants": constants,
                "n": n,
                "t": t,
                "grid": grid,
                "replicas": reps,
                "time_snapping": "query times round to the nearest lattice level",
                "rows": report.rows,
            }))?;
            Ok(None)
        }
        Command::WebE1 {
            field,
            constants,
            n,
            t,
            a,
            b,
            windows,
            replicas: reps,
        } => {
            let params = field.params()?;
            let constants = constants_for(params, constants, workers)?;
            let settings = WebSettings {
                n: *n,
                t: *t,
                constants,
            };
            let per = run_replicas_with(*reps, workers, |r| {
                e1_sample(
                    &Field::new(params.for_replica(r)),
                    &settings,
                    *a,
                    *b,
                    *windows,
                )
            });
            let mut w = out.csv("web-e1.csv")?;
            w.write_record(["replica", "window", "eta_hat"])?;
            for (r, counts) in per.into_iter().enumerate() {
                for (k, c) in counts?.iter().enumerate() {
                    w.write_record([r.to_string(), k.to_string(), c.to_string()])?;
                }
            }
            w.flush()?;
            let report = e1_diagnostic(params, &settings, *a, *b, *windows, *reps)?;
            out.summary(&json!({
                "constants": constants,
                "time_snapping": "query times round to the nearest lattice level",
                "report": report,
            }))?;
            Ok(None)
        }
        Command::Density {
            field,
            half_width,
            levels,
            replicas: n,
        } => {
            let params = field.params()?;
            let curves = run_replicas_with(*n, workers, |r| {
                point_density_curve(&Field::new(params.for_replica(r)), *half_width, levels)
            });
            let mut w = out.csv("density.csv")?;
            w.write_record(["replica", "level", "density"])?;
            let mut per_level = vec![Vec::new(); levels.len()];
            for (r, c) in curves.into_iter().enumerate() {
                for (i, v) in c?.into_iter().enumerate() {
                    w.write_record([r.to_string(), levels[i].to_string(), v.to_string()])?;
                    per_level[i].push(v);
                }
            }
            w.flush()?;
            let rows: Vec<_> = levels
                .iter()
                .zip(&per_level)
                .map(|(l, v)| {
                    let m = MeanSe::of(v);
                    json!({"level": l, "density": mean_se_json(&m), "density_sqrt_t": m.mean * (*l as f64).sqrt()})
                })
                .collect();
            out.summary(&json!({"half_width": half_width, "replicas": n, "rows": rows}))?;
            Ok(None)
        }
    }
}
