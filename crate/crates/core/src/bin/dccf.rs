//! Command-line front end: synth, train, eval, explain, ablate, gradcheck.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dccf::data::{self, Dataset, Split, SynthSpec};
use dccf::harness::ablation::{render_table, run_ablation, table_variants, variant_by_name, AblationVariant};
use dccf::harness::gradcheck::{pipeline_gradcheck, GradCheckSettings};
use dccf::harness::{self, Checkpoint, MetricsRecord};
use dccf::tensionfield::TensionMode;
use dccf::{Error, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "dccf", version, about = "Cross-modal conflict detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Attribution report for one sample.
    Explain(ExplainArgs),
    /// Train and evaluate component-removal variants.
    Ablate(AblateArgs),
    /// Finite-difference check of all gradients on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    conflict_strength: Option<f64>,
    #[arg(long)]
    fake_fraction: Option<f64>,
    #[arg(long)]
    d_text: Option<usize>,
    #[arg(long)]
    d_image: Option<usize>,
}

/// Training config file plus the most common overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Training settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Ablation switch to turn on, by variant name (repeatable).
    #[arg(long = "ablate")]
    ablate: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also write the metric records (JSON lines) here.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// If given, must describe the checkpoint's architecture.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sample id; defaults to the first sample.
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    data: PathBuf,
    /// Variants to run besides `full`; defaults to all nine.
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Also write one JSON line per variant here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// elementwise or scalar.
    #[arg(long)]
    tension_mode: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn read_config(path: Option<&Path>) -> Result<TrainConfig> {
    path.map_or_else(|| Ok(TrainConfig::default()), TrainConfig::load)
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = read_config(self.config.as_deref())?;
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.max_epochs {
            c.max_epochs = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        for name in &self.ablate {
            c.ablation = c.ablation.union(variant_by_name(name)?.flags);
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "val" => Ok(Some(Split::Val)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        other => Err(Error::config(format!("unknown split `{other}`"))),
    }
}

/// Takes the embedding dims from the data header and assigns splits if the
/// file has none.
fn prepare(config: &mut TrainConfig, ds: Dataset) -> Result<Dataset> {
    let h = &ds.header;
    config.d_text = h.d_text;
    config.d_image = h.d_image;
    config.objects = h.objects;
    config.polarity = h.polarity;
    config.validate()?;
    if ds.splits.is_some() {
        Ok(ds)
    } else {
        data::split(&ds, config.split_fractions(), config.seed)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records serialize")
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_checkpoint(config: Option<&Path>, path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if let Some(p) = config {
        ck.model.check_matches(&TrainConfig::load(p)?)?;
    }
    Ok(ck)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => SynthSpec::from_toml_str(
            &fs::read_to_string(p).map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?,
        )?,
        None => SynthSpec::default(),
    };
    if let Some(v) = a.n_samples {
        spec.n_samples = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.conflict_strength {
        spec.conflict_strength = v;
    }
    if let Some(v) = a.fake_fraction {
        spec.fake_fraction = v;
    }
    if let Some(v) = a.d_text {
        spec.d_text = v;
    }
    if let Some(v) = a.d_image {
        spec.d_image = v;
    }
    let ds = data::generate_synthetic(&spec)?;
    data::save_dataset(&ds, &a.out)?;
    let fakes = ds.samples.iter().filter(|s| s.label == dccf::Label::Fake).count();
    println!("wrote {} samples ({fakes} fake) to {}", ds.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = a.cfg.resolve()?;
    let ds = prepare(&mut config, data::load_dataset(&a.data)?)?;
    let outcome = harness::train(&config, &ds)?;
    for r in &outcome.history {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val_acc {:.4}{}",
            r.epoch,
            r.train_loss,
            r.val_accuracy,
            if r.improved { "  *" } else { "" }
        );
    }
    Checkpoint::new(config.clone(), outcome.model.clone(), outcome.optimizer.clone()).save(&a.checkpoint)?;
    let mut lines = Vec::new();
    for split in [Split::Val, Split::Test] {
        if ds.indices(split).is_empty() {
            continue;
        }
        let metrics = harness::evaluate(&outcome.model, &ds, split)?;
        lines.push(to_json(&MetricsRecord { config_hash: config.hash(), split: Some(split), metrics }));
    }
    for l in &lines {
        println!("{l}");
    }
    if let Some(p) = &a.metrics_out {
        write_lines(p, &lines)?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(a.config.as_deref(), &a.checkpoint)?;
    let ds = data::load_dataset(&a.data)?;
    harness::train::check_dataset_dims(&ck.config, &ds)?;
    let metrics = match parse_split(&a.split)? {
        Some(split) => {
            if ds.splits.is_none() {
                return Err(Error::data("dataset has no split assignment; use --split all"));
            }
            (Some(split), harness::evaluate(&ck.model, &ds, split)?)
        }
        None => {
            let all: Vec<usize> = (0..ds.len()).collect();
            (None, harness::train::evaluate_indices(&ck.model, &ds, &all)?)
        }
    };
    let record = MetricsRecord { config_hash: ck.config.hash(), split: metrics.0, metrics: metrics.1 };
    println!("{}", to_json(&record));
    Ok(())
}

fn explain(a: ExplainArgs) -> Result<()> {
    let ck = load_checkpoint(a.config.as_deref(), &a.checkpoint)?;
    let ds = data::load_dataset(&a.data)?;
    let sample = match &a.id {
        Some(id) => ds.find(id).ok_or_else(|| Error::data(format!("no sample with id `{id}`")))?,
        None => ds.samples.first().ok_or_else(|| Error::data("dataset is empty"))?,
    };
    let text = harness::explain(&ck.model, sample)?.to_json();
    match &a.out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let mut config = a.cfg.resolve()?;
    let ds = prepare(&mut config, data::load_dataset(&a.data)?)?;
    let mut variants = vec![AblationVariant::full()];
    if a.variants.is_empty() {
        variants.extend(table_variants());
    } else {
        for name in &a.variants {
            variants.push(variant_by_name(name)?);
        }
    }
    let reports = run_ablation(&config, &ds, &variants)?;
    print!("{}", render_table(&reports));
    if let Some(p) = &a.out {
        write_lines(p, &reports.iter().map(to_json).collect::<Vec<_>>())?;
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut s = GradCheckSettings::default();
    if let Some(p) = &a.config {
        let c = TrainConfig::load(p)?;
        s.tension_mode = c.tension_mode;
        s.shared_transform = c.shared_transform;
        s.ablation = c.ablation;
        s.seed = c.seed;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.iterations {
        s.iterations = v;
    }
    if let Some(m) = &a.tension_mode {
        s.tension_mode = match m.as_str() {
            "elementwise" => TensionMode::Elementwise,
            "scalar" => TensionMode::Scalar,
            other => return Err(Error::config(format!("unknown tension mode `{other}`"))),
        };
    }
    let report = pipeline_gradcheck(&s)?;
    println!("checked {} parameters, max relative error {:.3e}", report.checked, report.max_rel_error);
    if let Some(w) = &report.worst {
        println!("worst: {w:?}");
    }
    if report.passes(a.tolerance) {
        println!("PASS (tolerance {:e})", a.tolerance);
        Ok(())
    } else {
        Err(Error::numerical(format!("max relative error {:.3e} exceeds {:e}", report.max_rel_error, a.tolerance)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
