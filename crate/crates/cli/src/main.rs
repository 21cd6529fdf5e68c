mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aeps::benchmark::{self, BenchmarkConfig, EvalConfig};
use aeps::metrics::{self, NormRefs, METRICS};
use aeps::planner::Mode;
use aeps::predictor::dataset::{generate_dataset, DatasetConfig};
use aeps::predictor::train::{train, write_loss_csv, TrainConfig};
use aeps::predictor::{Backend, LabeledDataset, PredictorModel};
use aeps::world::mission::{run_mission, Event, MissionError, SimulationTrace};
use aeps::world::{Complexity, ScenarioConfig};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::*;

#[derive(Parser)]
#[command(name = "aeps", version, about = "Power-aware agile UAV mission simulator and benchmark")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan seeded missions and write a labeled demand dataset.
    Generate(GenerateArgs),
    /// Train a power predictor on a dataset.
    Train(TrainArgs),
    /// Fly one mission and write its trace.
    Simulate(SimulateArgs),
    /// Fly every seed and scenario in both modes and compare them.
    Benchmark(BenchmarkArgs),
    /// Compare the ensemble and single-network predictors on noisy labels.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: aeps-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Falls back to the config file, then AEPS_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Rows to plan [default: 1100].
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset CSV from `generate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Learning rate.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training fraction.
    #[arg(long)]
    split: Option<f64>,
    /// Hidden layer widths, e.g. 32,32.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Ensemble members [default: 10].
    #[arg(long)]
    members: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Scenario JSON; otherwise one is generated from --complexity and the seed.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    complexity: Option<ComplexityArg>,
    /// Trained model JSON, required in enhanced mode.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ultracapacitor capacity override, J (0 disables it).
    #[arg(long)]
    uc_capacity: Option<f64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario seeds [default: 1..=10].
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Trained model JSON; trained from the seed when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ultracapacitor capacity override, J (0 disables it).
    #[arg(long)]
    uc_capacity: Option<f64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Training rows.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    /// Label noise standard deviation, W.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<PredictorModel<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    PredictorModel::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let file: GenerateFile = load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    let out = resolve_out(a.common.out, file.out);
    let count = a.count.or(file.count).unwrap_or(1100);
    if count == 0 {
        return Err(usage("--count must be >= 1"));
    }
    let mut mission = file.mission.unwrap_or_default();
    if let Some(p) = a.preset.or(file.preset) {
        p.apply(&mut mission);
    }
    let cfg = DatasetConfig {
        sampler: a.sampler.or(file.sampler).map(Into::into).unwrap_or_default(),
        baseline: mission.baseline,
        demand: mission.demand,
        planner: mission.planner,
        generator: file.generator.unwrap_or_default(),
    };
    let data = generate_dataset(count, seed, &cfg).map_err(runtime)?;
    make_dir(&out)?;
    let path = out.join("dataset.csv");
    data.write_csv(create(&path)?).map_err(runtime)?;
    let labels: Vec<f64> = data.rows.iter().map(|r| r.label).collect();
    let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("wrote {} rows to {}", data.len(), path.display());
    println!("label W: mean {:.3}  min {lo:.3}  max {hi:.3}", data.label_mean());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let file: TrainFile = load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    let out = resolve_out(a.common.out, file.out);
    let data_path = a
        .data
        .or(file.data)
        .ok_or_else(|| usage("a dataset is required: pass --data or set \"data\""))?;
    let text = fs::File::open(&data_path).map_err(|e| usage(format!("{}: {e}", data_path.display())))?;
    let data = LabeledDataset::<f64>::read_csv(text).map_err(|e| usage(format!("{}: {e}", data_path.display())))?;
    let d = TrainConfig::default();
    let backend = match a.backend.or(file.backend) {
        Some(BackendArg::Ensemble) => Backend::BayesianEnsemble {
            members: a.members.or(file.members).unwrap_or(10),
        },
        Some(BackendArg::Mlp) | None => Backend::Deterministic,
    };
    let cfg = TrainConfig {
        learning_rate: a.alpha.or(file.alpha).unwrap_or(d.learning_rate),
        batch_size: a.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        epochs: a.epochs.or(file.epochs).unwrap_or(d.epochs),
        split: a.split.or(file.split).unwrap_or(d.split),
        seed,
        hidden: a.hidden.or(file.hidden).unwrap_or(d.hidden),
        backend,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let outcome = train(&data, &cfg).map_err(runtime)?;
    make_dir(&out)?;
    let model_path = out.join("model.json");
    write_file(&model_path, &outcome.model.to_json().map_err(runtime)?)?;
    write_loss_csv(&outcome.curve, create(&out.join("loss.csv"))?).map_err(runtime)?;
    let mean = outcome.validation.label_mean();
    println!(
        "{} ({} member{}): validation MAE {:.4} W ({:.2}% of mean label {:.3} W)",
        backend.label(),
        backend.member_count(),
        if backend.member_count() == 1 { "" } else { "s" },
        outcome.val_mae,
        100.0 * outcome.val_mae / mean,
        mean
    );
    println!("wrote {}", model_path.display());
    Ok(())
}

fn event_counts(trace: &SimulationTrace) -> serde_json::Value {
    let count = |f: fn(&Event) -> bool| trace.records.iter().flat_map(|r| &r.events).filter(|e| f(e)).count();
    json!({
        "spawn": count(|e| matches!(e, Event::Spawn { .. })),
        "avoidance": count(|e| matches!(e, Event::AvoidanceStart { .. })),
        "replan": count(|e| matches!(e, Event::Replan { .. })),
        "brownout_steps": count(|e| matches!(e, Event::Brownout)),
        "collision": count(|e| matches!(e, Event::Collision { .. })),
    })
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let file: SimulateFile = load(a.common.config.as_deref())?;
    let out = resolve_out(a.common.out, file.out);
    let mode: Mode = a.mode.or(file.mode).unwrap_or(ModeArg::Normal).into();
    let (scenario, label) = match a.scenario.or(file.scenario) {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let sc = ScenarioConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            (sc, path.display().to_string())
        }
        None => {
            let seed = resolve_seed(a.common.seed, file.seed)?;
            let c: Complexity = a
                .complexity
                .or(file.complexity)
                .ok_or_else(|| usage("pass --scenario FILE or --complexity low|high"))?
                .into();
            let sc = ScenarioConfig::generate(c, seed, &file.generator.unwrap_or_default()).map_err(runtime)?;
            (sc, c.label().to_string())
        }
    };
    let mut mission = file.mission.unwrap_or_default();
    if let Some(p) = a.preset.or(file.preset) {
        p.apply(&mut mission);
    }
    mission.mode = mode;
    if let Some(j) = a.uc_capacity.or(file.uc_capacity) {
        mission.plant.ultracap.energy_capacity = j;
    }
    mission.validate().map_err(|e| usage(e.to_string()))?;
    let model = match (a.model.or(file.model), mode) {
        (Some(p), _) => Some(load_model(&p)?),
        (None, Mode::AgilityEnhanced) => {
            return Err(usage(
                "enhanced mode predicts mission power before take-off and needs a trained model: pass --model (see `aeps train`)",
            ))
        }
        (None, Mode::Normal) => None,
    };
    let trace = run_mission(&scenario, &mission, model.as_ref()).map_err(|e| match e {
        MissionError::Config(_) | MissionError::MissingModel => usage(e.to_string()),
        e => runtime(e),
    })?;
    make_dir(&out)?;
    trace.write_csv(create(&out.join("trace.csv"))?).map_err(runtime)?;
    trace.write_plant_csv(create(&out.join("plant.csv"))?).map_err(runtime)?;
    trace.reference.write_csv(create(&out.join("reference.csv"))?).map_err(runtime)?;
    let report = metrics::agility(&trace, &NormRefs::default()).map_err(runtime)?;
    let summary = json!({
        "schema": SCHEMA,
        "scenario": label,
        "seed": trace.seed,
        "mode": mode.label(),
        "demand_preset": mission.demand.preset_name(),
        "outcome": trace.outcome.label(),
        "flight_duration": trace.flight_duration(),
        "precharge_duration": trace.precharge_duration(),
        "duration_with_precharge": trace.duration_with_precharge(),
        "mean_demand": trace.mean_demand(),
        "agility": report,
        "precharge": trace.precharge,
        "events": event_counts(&trace),
    });
    let text = serde_json::to_string_pretty(&summary).map_err(runtime)? + "\n";
    write_file(&out.join("summary.json"), &text)?;
    println!(
        "{} {}: {} after {:.2} s  S {:.3} m  C {:.4}  P {:.2} W",
        label,
        mode.label(),
        trace.outcome.label(),
        trace.flight_duration(),
        report.safety,
        report.complexity,
        report.power_term
    );
    Ok(())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:+.2}%"))
}

fn benchmark_cmd(a: BenchmarkArgs) -> Result<(), CliError> {
    let file: BenchmarkFile = load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    let out = resolve_out(a.common.out, file.out);
    let mut cfg = file.benchmark.unwrap_or_default();
    if let Some(s) = a.seeds.or(file.seeds) {
        cfg.seeds = s;
    }
    cfg.dataset_seed = seed;
    cfg.train.seed = seed;
    cfg.test_seed = seed.wrapping_add(1);
    if let Some(p) = a.preset.or(file.preset) {
        p.apply(&mut cfg.mission);
    }
    if let Some(j) = a.uc_capacity.or(file.uc_capacity) {
        cfg.mission.plant.ultracap.energy_capacity = j;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let model = a.model.or(file.model).map(|p| load_model(&p)).transpose()?;
    let output = benchmark::run_benchmark(&cfg, model).map_err(runtime)?;
    make_dir(&out)?;
    output.write(&out).map_err(runtime)?;
    if output.report.prediction.trained_here {
        write_file(&out.join("model.json"), &output.model.to_json().map_err(runtime)?)?;
    }
    print_benchmark(&cfg, &output.report);
    println!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn print_benchmark(cfg: &BenchmarkConfig, r: &benchmark::BenchmarkReport) {
    let c = &r.comparison;
    println!(
        "{} missions: success normal {}/{}, enhanced {}/{}",
        2 * c.normal.runs,
        c.normal.successes,
        c.normal.runs,
        c.enhanced.successes,
        c.enhanced.runs
    );
    for name in METRICS {
        let m = c.headline.get(name).expect("listed metric");
        println!(
            "  {name:<24} per-run {:>9}  per-scenario {:>9}  (+{} / -{} / ={}, p={:.4})",
            fmt_pct(m.mean_change_pct),
            fmt_pct(m.scenario_change_pct),
            m.sign_test.positive,
            m.sign_test.negative,
            m.sign_test.ties,
            m.sign_test.p_value
        );
    }
    let p = &r.prediction;
    if let Some(b) = p.test.backends.first() {
        println!("  predictor {} test MAE {:.4} W, peak-window {:.4} W", b.name, b.mae, b.peak_window_error);
    }
    log::info!("seeds {:?}, demand preset {}", cfg.seeds, r.demand_preset);
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let file: EvaluateFile = load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    let out = resolve_out(a.common.out, file.out);
    let mut cfg: EvalConfig = file.evaluate.unwrap_or_default();
    cfg.seed = seed;
    if let Some(n) = a.count.or(file.count) {
        cfg.dataset_count = n;
    }
    if let Some(n) = a.test_count.or(file.test_count) {
        cfg.test_count = n;
    }
    if let Some(s) = a.noise.or(file.noise) {
        cfg.noise_std = s;
    }
    if let Some(m) = a.members.or(file.members) {
        cfg.members = m;
    }
    if let Some(p) = a.preset.or(file.preset) {
        p.apply(&mut cfg.mission);
    }
    if cfg.members == 0 || cfg.dataset_count == 0 || cfg.test_count == 0 {
        return Err(usage("count, test-count and members must be >= 1"));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
        return Err(usage("--noise must be finite and >= 0"));
    }
    let output = benchmark::evaluate_backends(&cfg).map_err(runtime)?;
    output.write(&out).map_err(runtime)?;
    for b in &output.report.backends {
        println!(
            "{:<9} MAE {:.4} W  max {:.4} W  peak-window {:.4} W",
            b.name, b.mae, b.max_error, b.peak_window_error
        );
    }
    for q in &output.report.ratios {
        let f = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{:.2}%", 100.0 * v));
        println!(
            "{}/{}: MAE {}  max {}  peak-window {}",
            q.numerator,
            q.denominator,
            f(q.mae),
            f(q.max_error),
            f(q.peak_window_error)
        );
    }
    println!("wrote {}", out.join("mae_report.json").display());
    Ok(())
}
