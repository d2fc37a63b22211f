use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use fprc_core::config::{ExperimentConfig, SeedStream};
use fprc_core::control::{
    disturbance_report, run_suite, summarize_run, tracking_report, ControllerMode, RunLog, Scenario,
};
use fprc_core::dataset::{simulate_experiment, Dataset};
use fprc_core::experiment::{compare_models, sweep_fprc, train_model, ModelArtifact, ModelKind};
use fprc_core::signals::Unit;
use fprc_core::training::{benchmark_execution, weight_contributions, SweepAxis};
use fprc_core::Error;

#[derive(Parser, Debug)]
#[command(name = "fprc", version, about = "Hysteresis feedforward models for a simulated pneumatic soft actuator")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Swap the training and test datasets.
    #[arg(long, global = true)]
    reverse: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the two hysteresis experiments and write train.csv / test.csv.
    Generate,
    /// Train a model with k-fold cross-validation.
    Train {
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Score a trained model on the training and test datasets.
    Evaluate {
        #[arg(long)]
        model: Option<ModelKind>,
        /// Timed inference passes.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Run the tracking-control scenario suite.
    Simulate {
        #[arg(long)]
        model: Option<ModelKind>,
        /// Only run the named scenarios (repeatable).
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
    },
    /// Sweep one FPRC hyperparameter.
    Sweep {
        /// epsilon, clusters or taps
        #[arg(long)]
        axis: String,
    },
    /// Train and time every model on the same data.
    Bench {
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Print the resolved configuration as TOML.
    Config,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    /// Some simulations aborted; the rest were written.
    Aborted(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(CliError::Aborted(n)) => {
            eprintln!("error: {n} simulation(s) aborted");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    cfg.reverse |= cli.reverse;
    cfg.validate()?;

    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
        Command::Generate => generate(&cfg),
        Command::Train { model } => train(&cfg, model.unwrap_or(cfg.model)),
        Command::Evaluate { model, repetitions } => {
            evaluate(&cfg, model.unwrap_or(cfg.model), repetitions.unwrap_or(cfg.bench.repetitions))
        }
        Command::Simulate { model, scenarios } => simulate(&cfg, model.unwrap_or(cfg.model), &scenarios),
        Command::Sweep { axis } => {
            let axis = SweepAxis::by_name(&axis).map_err(|e| CliError::Usage(e.to_string()))?;
            sweep(&cfg, &axis)
        }
        Command::Bench { repetitions } => bench(&cfg, repetitions.unwrap_or(cfg.bench.repetitions)),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> CliResult<&Path> {
    std::fs::create_dir_all(&cfg.paths.out)?;
    Ok(&cfg.paths.out)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(())
}

/// Pretty JSON with a `units` object next to the payload fields.
fn write_json<T: Serialize>(path: &Path, units: &[(&str, &str)], body: &T) -> CliResult {
    let mut value = serde_json::to_value(body)?;
    let units: serde_json::Map<String, Value> = units.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    match &mut value {
        Value::Object(map) => {
            map.insert("units".into(), Value::Object(units));
        }
        other => {
            value = json!({ "data": other.take(), "units": units });
        }
    }
    write_text(path, &(serde_json::to_string_pretty(&value)? + "\n"))
}

fn load_datasets(cfg: &ExperimentConfig) -> CliResult<(Dataset, Dataset)> {
    let (train, test) = cfg.dataset_paths();
    Ok((Dataset::load_csv(&train)?, Dataset::load_csv(&test)?))
}

fn load_artifact(cfg: &ExperimentConfig, kind: ModelKind) -> CliResult<ModelArtifact> {
    let path = cfg.model_path(kind);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let artifact = ModelArtifact::from_json(&text)?;
    if artifact.kind() != kind {
        return Err(Error::InvalidData(format!("{} holds a {} model, expected {}", path.display(), artifact.kind().name(), kind.name())).into());
    }
    Ok(artifact)
}

fn generate(cfg: &ExperimentConfig) -> CliResult {
    out_dir(cfg)?;
    let train_path = cfg.paths.train.clone().unwrap_or_else(|| cfg.paths.out.join("train.csv"));
    let test_path = cfg.paths.test.clone().unwrap_or_else(|| cfg.paths.out.join("test.csv"));
    let jobs = [
        (&cfg.signals.train, SeedStream::TrainData, train_path),
        (&cfg.signals.test, SeedStream::TestData, test_path),
    ];
    for (spec, stream, path) in jobs {
        let p = spec.generate(cfg.dt, Unit::KPa)?;
        let ds = simulate_experiment(&p, &cfg.actuator, &cfg.models.reservoir, cfg.models.fprc.k_in, cfg.noise, cfg.seed_for(stream))?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        ds.save_csv(&path)?;
        println!("wrote {} ({} rows)", path.display(), ds.len());
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig, kind: ModelKind) -> CliResult {
    let (train, _) = cfg.dataset_paths();
    let ds = Dataset::load_csv(&train)?;
    let outcome = train_model(kind, &ds, &cfg.models, cfg.seed_for(SeedStream::Model))?;
    let out = out_dir(cfg)?;
    let model_path = cfg.model_path(kind);
    write_text(&model_path, &(outcome.artifact.to_json()? + "\n"))?;
    let name = kind.name();
    write_text(&out.join(format!("cv_{name}.csv")), &outcome.cv.to_csv()?)?;
    write_json(
        &out.join(format!("cv_{name}.json")),
        &[("e_train", "kPa"), ("e_val", "kPa"), ("e_norm", "kPa"), ("train_rmse", "kPa")],
        &json!({ "model": kind, "cv": outcome.cv, "train_rmse": outcome.train_rmse }),
    )?;
    if let ModelArtifact::Fprc(a) = &outcome.artifact {
        let report = weight_contributions(&a.rules, a.params.n_y, a.params.n_u)?;
        write_json(&out.join(format!("weights_{name}.json")), &[("shares", "fraction of |w|")], &report)?;
    }
    let best = outcome.cv.best();
    println!(
        "{}: {} weights, fold {} selected (train {:.4} kPa, val {:.4} kPa), full-set train RMSE {:.4} kPa -> {}",
        kind.label(),
        outcome.artifact.weight_count(),
        outcome.cv.best_fold,
        best.e_train,
        best.e_val,
        outcome.train_rmse,
        model_path.display()
    );
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, kind: ModelKind, repetitions: usize) -> CliResult {
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be >= 1".into()));
    }
    let artifact = load_artifact(cfg, kind)?;
    let (train, test) = load_datasets(cfg)?;
    let e_train = artifact.evaluate(&train)?;
    let e_test = artifact.evaluate(&test)?;
    let timing = benchmark_execution(test.len(), repetitions, || artifact.run_inference(&test).map(|_| ()))?;
    let out = out_dir(cfg)?;
    let name = kind.name();
    write_json(
        &out.join(format!("metrics_{name}.json")),
        &[("train_rmse", "kPa"), ("test_rmse", "kPa")],
        &json!({
            "model": kind,
            "reverse": cfg.reverse,
            "train_rows": train.len(),
            "test_rows": test.len(),
            "train_rmse": e_train,
            "test_rmse": e_test,
            "weights": artifact.weight_count(),
        }),
    )?;
    write_json(
        &out.join(format!("timing_{name}.json")),
        &[("samples_ms", "ms"), ("mean_ms", "ms"), ("sd_ms", "ms"), ("per_step_us", "us")],
        &json!({
            "model": kind,
            "repetitions": repetitions,
            "steps": timing.steps,
            "samples_ms": timing.samples_ms,
            "mean_ms": timing.mean_ms,
            "sd_ms": timing.sd_ms,
            "per_step_us": timing.per_step_us(),
        }),
    )?;
    println!(
        "{}: train RMSE {:.4} kPa, test RMSE {:.4} kPa, test time {} ms ({:.3} us/step)",
        kind.label(),
        e_train,
        e_test,
        timing.display(),
        timing.per_step_us()
    );
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, kind: ModelKind, filter: &[String]) -> CliResult {
    let artifact = load_artifact(cfg, kind)?;
    let scenarios: Vec<Scenario> = if filter.is_empty() {
        cfg.simulation.scenarios.clone()
    } else {
        for name in filter {
            if !cfg.simulation.scenarios.iter().any(|s| &s.name == name) {
                return Err(CliError::Usage(format!("unknown scenario '{name}'")));
            }
        }
        cfg.simulation.scenarios.iter().filter(|s| filter.contains(&s.name)).cloned().collect()
    };
    let settings = cfg.simulation_settings();
    let settle = settings.settle;
    let runs = run_suite(&scenarios, &ControllerMode::ALL, &artifact, &settings);
    let out = out_dir(cfg)?;
    let logs_dir = out.join("logs");
    std::fs::create_dir_all(&logs_dir)?;

    let mut ok: Vec<(String, ControllerMode, &RunLog)> = Vec::new();
    let mut aborted = Vec::new();
    for r in &runs {
        match &r.result {
            Ok(log) => {
                let mut buf = Vec::new();
                log.write_csv(&mut buf)?;
                let path = logs_dir.join(format!("{}_{}.csv", r.scenario, r.mode.slug()));
                std::fs::write(&path, buf)?;
                ok.push((r.scenario.clone(), r.mode, log));
            }
            Err(e) => {
                eprintln!("scenario {} / {}: aborted: {e}", r.scenario, r.mode.label(kind));
                aborted.push(json!({ "scenario": r.scenario, "controller": r.mode.label(kind), "error": e }));
            }
        }
    }

    let names: Vec<String> = scenarios.iter().map(|s| s.name.clone()).collect();
    let report = tracking_report(&ok, &names, kind, settle);
    write_text(&out.join("tracking_report.csv"), &report.to_csv()?)?;
    write_json(&out.join("tracking_report.json"), &[("rmse", "deg")], &json!({ "report": report, "aborted": aborted }))?;

    let mut summaries = Vec::new();
    let mut disturbances = Vec::new();
    for (scenario, mode, log) in &ok {
        let label = mode.label(kind);
        summaries.push(summarize_run(scenario, &label, log, settle)?);
        if let Some(d) = scenarios.iter().find(|s| &s.name == scenario).and_then(|s| s.disturbance.as_ref()) {
            let mut rep = serde_json::to_value(disturbance_report(&label, log, d, settle)?)?;
            rep["scenario"] = json!(scenario);
            disturbances.push(rep);
        }
    }
    write_json(
        &out.join("run_summary.json"),
        &[("rmse", "deg"), ("loop_area", "deg^2"), ("rms_p_ff", "kPa"), ("rms_p_fb", "kPa")],
        &json!({ "runs": summaries }),
    )?;
    if !disturbances.is_empty() {
        write_json(
            &out.join("disturbance_report.json"),
            &[("clean_rmse", "deg"), ("disturbed_rmse", "deg"), ("p_o_mean_sd", "kPa")],
            &json!({ "runs": disturbances }),
        )?;
    }

    print!("{}", report.to_csv()?);
    if aborted.is_empty() {
        Ok(())
    } else {
        Err(CliError::Aborted(aborted.len()))
    }
}

fn sweep(cfg: &ExperimentConfig, axis: &SweepAxis) -> CliResult {
    let (train, test) = load_datasets(cfg)?;
    let result = sweep_fprc(axis, &train, &test, &cfg.models, cfg.seed_for(SeedStream::Model))?;
    let out = out_dir(cfg)?;
    let name = axis.name();
    write_text(&out.join(format!("sweep_{name}.csv")), &result.to_csv()?)?;
    write_json(
        &out.join(format!("sweep_{name}.json")),
        &[("e_train", "kPa"), ("e_val", "kPa"), ("e_test", "kPa")],
        &result,
    )?;
    write_text(&out.join(format!("sweep_{name}_timings.csv")), &result.timings_csv()?)?;
    print!("{}", result.to_csv()?);
    if result.failed() > 0 {
        eprintln!("{} of {} sweep cells failed", result.failed(), result.cells.len());
    }
    Ok(())
}

fn bench(cfg: &ExperimentConfig, repetitions: usize) -> CliResult {
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be >= 1".into()));
    }
    let (train, test) = load_datasets(cfg)?;
    let cmp = compare_models(
        &ModelKind::ALL,
        &train,
        &test,
        &cfg.models,
        cfg.seed_for(SeedStream::Model),
        repetitions,
        cfg.bench.train_repetitions,
    )?;
    let out = out_dir(cfg)?;
    write_text(&out.join("comparison.csv"), &cmp.to_csv()?)?;
    write_json(
        &out.join("comparison.json"),
        &[("e_train", "kPa"), ("e_val", "kPa"), ("e_test", "kPa")],
        &json!({ "reverse": cfg.reverse, "scores": cmp.scores }),
    )?;
    write_text(&out.join("comparison_timings.csv"), &cmp.timings_csv()?)?;
    print!("{}", cmp.to_csv()?);
    print!("{}", cmp.timings_csv()?);
    Ok(())
}
