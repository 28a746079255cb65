use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sketchknn::data::{gen_planted_linear, gen_smooth_bayes, SyntheticKind};
use sketchknn::experiment::{
    diagnose, fit_method, load_data, parse_list, parse_seed_list, run_delta_sweep, run_experiment, run_widths,
    write_json, ExperimentConfig, Method, Split,
};
use sketchknn::metrics::{timed, MetricsReport, RunRecord, CSV_HEADER};
use sketchknn::model::{SavedModel, SketchedModel};

#[derive(Parser)]
#[command(name = "sketchknn", version, about = "Sketched least-squares multi-label kNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model on the training split and save it.
    Train {
        #[command(flatten)]
        flags: Flags,
        /// Where to write the model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a saved model on the test split.
    Eval {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the method x sketch size x seed grid.
    Sweep {
        #[command(flatten)]
        flags: Flags,
    },
    /// Compare sketched and exact optimal objectives.
    DeltaCheck {
        #[command(flatten)]
        flags: Flags,
    },
    /// Width estimates and recommended sketch sizes.
    Widths {
        #[command(flatten)]
        flags: Flags,
    },
    /// Covering curve, doubling-dimension proxy and bound values.
    Diagnose {
        #[command(flatten)]
        flags: Flags,
    },
    /// Write a synthetic dataset.
    Gen {
        #[command(flatten)]
        flags: Flags,
        /// Dataset output path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Every flag overrides the matching key of the `--config` file.
#[derive(Args)]
struct Flags {
    /// JSON config file; keys mirror the flags with `_` for `-`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// `planted` or `smooth`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Comma-separated subset of exact, gauss, rademacher, wh.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated sketch sizes.
    #[arg(long = "m-grid")]
    m_grid: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    nonempty: bool,
    /// Data and split seed [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Sketch seeds: `1,2,3` or `0..10`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long = "test-fraction")]
    test_fraction: Option<f64>,
    #[arg(long = "out-json")]
    out_json: Option<PathBuf>,
    #[arg(long = "out-csv")]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Lipschitz constant of the label probabilities (an assumption).
    #[arg(long = "L")]
    lipschitz: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Slope of the smooth generator's label probabilities.
    #[arg(long)]
    scale: Option<f64>,
    /// Monte-Carlo samples for width estimates.
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated descending cover radii.
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long = "parallel-cells")]
    parallel_cells: bool,
}

impl Flags {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.data {
            cfg.data = Some(v.clone());
            cfg.synthetic = None;
        }
        if let Some(v) = &self.synthetic {
            cfg.synthetic = Some(v.parse()?);
            cfg.data = None;
        }
        if let Some(v) = &self.method {
            cfg.method = parse_list::<Method>(v)?;
        }
        if let Some(v) = self.m {
            cfg.m = Some(v);
        }
        if let Some(v) = &self.m_grid {
            cfg.m_grid = parse_list(v)?;
            cfg.m = None;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { cfg.$field = v; })*};
        }
        set!(k, theta, seed, test_fraction, c1, delta, n, p, q, noise, scale, samples);
        cfg.nonempty |= self.nonempty;
        cfg.parallel_cells |= self.parallel_cells;
        if let Some(v) = &self.seeds {
            cfg.seeds = parse_seed_list(v)?;
        }
        if let Some(v) = &self.out_json {
            cfg.out_json = Some(v.clone());
        }
        if let Some(v) = &self.out_csv {
            cfg.out_csv = Some(v.clone());
        }
        if let Some(v) = self.lipschitz {
            cfg.lipschitz = Some(v);
        }
        if let Some(v) = &self.epsilons {
            cfg.epsilons = parse_list(v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn single_method(cfg: &ExperimentConfig) -> anyhow::Result<(Method, usize)> {
    let [method] = cfg.method[..] else {
        bail!("choose exactly one method with --method");
    };
    let m = match (method, cfg.m) {
        (Method::Exact, _) => 0,
        (_, Some(m)) => m,
        (_, None) => bail!("sketched training needs --m"),
    };
    Ok((method, m))
}

#[derive(Serialize)]
struct TrainSummary {
    method: String,
    m: Option<usize>,
    seed: u64,
    n_train: usize,
    fit_s: f64,
    sketch_s: f64,
    model: PathBuf,
    warnings: Vec<String>,
}

fn train(cfg: &ExperimentConfig, model_path: PathBuf) -> anyhow::Result<ExitCode> {
    let (method, m) = single_method(cfg)?;
    let loaded = load_data(cfg)?;
    let split = Split::new(&loaded.dataset, cfg.test_fraction, cfg.seed)?;
    let sketch_seed = cfg.seed_list()[0];
    let (model, build) = fit_method(&split, method, m, sketch_seed, cfg.predict_options())?;
    model.to_saved().save(&model_path)?;
    let summary = TrainSummary {
        method: method.name().into(),
        m: method.sketch_kind().map(|_| m),
        seed: sketch_seed,
        n_train: split.x_train.rows(),
        fit_s: build + model.fit_seconds(),
        sketch_s: build,
        model: model_path,
        warnings: model.warnings().to_vec(),
    };
    if let Some(path) = &cfg.out_json {
        write_json(path, &summary)?;
    }
    print_json(&summary)?;
    Ok(ExitCode::SUCCESS)
}

fn eval(cfg: &ExperimentConfig, model_path: PathBuf) -> anyhow::Result<ExitCode> {
    let saved = SavedModel::load(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let loaded = load_data(cfg)?;
    let split = Split::new(&loaded.dataset, cfg.test_fraction, cfg.seed)?;
    let sketch = saved.sketch;
    let mut model = SketchedModel::from_saved(saved, &split.x_train, &split.y_train)?;
    model.set_options(cfg.predict_options())?;
    let (pred, predict_seconds) = timed(|| model.predict(&split.x_test));
    let metrics = MetricsReport::evaluate(&split.y_test, &pred?, model.fit_seconds(), predict_seconds)?;
    let record = RunRecord {
        dataset: loaded.dataset.name().to_string(),
        method: sketch.map(|s| s.kind.method_name()).unwrap_or("exact").to_string(),
        m: sketch.map(|s| s.m),
        k: cfg.k,
        seed: sketch.map(|s| s.seed).unwrap_or(cfg.seed),
        metrics,
        sketch_seconds: 0.0,
        warnings: Vec::new(),
    };
    if let Some(path) = &cfg.out_csv {
        append_csv(path, std::slice::from_ref(&record))?;
    }
    if let Some(path) = &cfg.out_json {
        write_json(path, &record)?;
    }
    print_json(&record)?;
    Ok(ExitCode::SUCCESS)
}

fn append_csv(path: &std::path::Path, records: &[RunRecord]) -> anyhow::Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{CSV_HEADER}")?;
    }
    for r in records {
        writeln!(file, "{}", r.csv_line())?;
    }
    Ok(())
}

fn partial(failed: usize) -> ExitCode {
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn sweep(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let outcome = run_experiment(cfg)?;
    println!("{CSV_HEADER}");
    for r in &outcome.records {
        println!("{}", r.csv_line());
        for w in &r.warnings {
            eprintln!("warning: {} m={:?} seed={}: {w}", r.method, r.m, r.seed);
        }
    }
    for f in &outcome.failures {
        eprintln!("failed: {} m={:?} seed={}: {}", f.method, f.m, f.seed, f.error);
    }
    Ok(partial(outcome.failures.len()))
}

#[derive(Serialize)]
struct GenSummary<'a> {
    kind: SyntheticKind,
    path: &'a std::path::Path,
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<sketchknn::DenseMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_functions: Option<Vec<sketchknn::data::LabelFunction>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bayes_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
}

fn gen(cfg: &ExperimentConfig, out: PathBuf) -> anyhow::Result<ExitCode> {
    let Some(spec) = cfg.synthetic_spec() else {
        bail!("gen needs --synthetic planted|smooth");
    };
    let mut summary = GenSummary {
        kind: spec.kind,
        path: &out,
        n: spec.n,
        p: spec.p,
        q: spec.q,
        seed: spec.seed,
        weights: None,
        label_functions: None,
        bayes_errors: None,
        lipschitz: None,
    };
    match spec.kind {
        SyntheticKind::PlantedLinear => {
            let planted = gen_planted_linear(&spec)?;
            planted.dataset.save(&out)?;
            summary.weights = Some(planted.weights);
        }
        SyntheticKind::SmoothBayes => {
            let smooth = gen_smooth_bayes(&spec)?;
            smooth.dataset.save(&out)?;
            summary.label_functions = Some(smooth.label_functions);
            summary.bayes_errors = Some(smooth.bayes_errors);
            summary.lipschitz = Some(smooth.lipschitz);
        }
    }
    if let Some(path) = &cfg.out_json {
        write_json(path, &summary)?;
    }
    eprintln!("wrote {} examples to {}", spec.n, out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { flags, model } => train(&flags.resolve()?, model),
        Command::Eval { flags, model } => eval(&flags.resolve()?, model),
        Command::Sweep { flags } => sweep(&flags.resolve()?),
        Command::DeltaCheck { flags } => {
            let cfg = flags.resolve()?;
            let report = run_delta_sweep(&cfg)?;
            print_json(&report)?;
            if report.zero_residual {
                eprintln!("note: the exact fit has zero residual; delta_emp is undefined");
            }
            Ok(partial(report.failures.len()))
        }
        Command::Widths { flags } => {
            print_json(&run_widths(&flags.resolve()?)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose { flags } => {
            let report = diagnose(&flags.resolve()?)?;
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { flags, out } => gen(&flags.resolve()?, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
