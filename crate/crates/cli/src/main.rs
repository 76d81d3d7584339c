use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use satgan_core::classifier::{Augment, BackboneKind, DatasetVariant, ExperimentResult, RESULT_CSV_HEADER};
use satgan_core::data::{scan_dataset, split, synth::synthesize_corpus, ClassSet, DatasetIndex, EUROSAT_CLASSES};
use satgan_core::harness::{
    load_results, render_report, run_ablation, AblationOutcome, AblationPaths, AblationPlan, CellSpec,
    ClassifierCellRunner, Fixtures,
};
use satgan_core::models::Checkpoint;
use satgan_core::trainer::{generate_images, resume_gan, sample_grid, train_gan, GanTrainConfig};
use satgan_core::GanKind;

#[derive(Parser)]
#[command(name = "satgan", version, about = "GAN augmentation and transfer-learning ablation for land-cover imagery")]
struct Cli {
    /// Intra-op threads for tensor kernels. Results are only reproducible
    /// bit-for-bit with a fixed thread count.
    #[arg(long, global = true, default_value_t = 1)]
    threads: i32,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural land-cover-like corpus for smoke runs.
    SynthCorpus(SynthArgs),
    /// Split a dataset and write its manifest.
    Split(SplitArgs),
    /// Train one GAN on one class.
    TrainGan(TrainGanArgs),
    /// Export generated images from a checkpoint.
    Generate(GenerateArgs),
    /// Tile samples from one or more checkpoints into a PNG grid.
    SampleGrid(GridArgs),
    /// Train one classifier on one dataset variant.
    TrainClassifier(TrainClassifierArgs),
    /// Run an ablation plan, resuming from stored results.
    Ablate(AblateArgs),
    /// Render stored results next to the reference tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Comma-separated class names; defaults to the ten land-cover classes.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    data_root: PathBuf,
    /// Comma-separated class set; defaults to the ten land-cover classes.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, default_value_t = 0.75)]
    split_ratio: f64,
    /// Defaults to --seed.
    #[arg(long)]
    split_seed: Option<u64>,
}

impl DataArgs {
    fn class_names(&self) -> Vec<String> {
        if self.classes.is_empty() {
            EUROSAT_CLASSES.iter().map(|s| s.to_string()).collect()
        } else {
            self.classes.clone()
        }
    }

    fn load(&self, seed: u64) -> Result<DatasetIndex> {
        let class_set = ClassSet::new(&self.class_names())?;
        let index = scan_dataset(&self.data_root, &class_set)
            .with_context(|| format!("scanning {}", self.data_root.display()))?;
        Ok(split(&index, self.split_ratio, self.split_seed.unwrap_or(seed))?)
    }
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Manifest path (`path,label,split,source` per line).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GanArg {
    Dcgan,
    #[value(name = "wgan-gp")]
    WganGp,
}

impl From<GanArg> for GanKind {
    fn from(g: GanArg) -> Self {
        match g {
            GanArg::Dcgan => GanKind::Dcgan,
            GanArg::WganGp => GanKind::WganGp,
        }
    }
}

#[derive(Args)]
struct TrainGanArgs {
    #[arg(long)]
    gan: GanArg,
    #[arg(long = "class")]
    class_name: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    checkpoint_every: usize,
    #[arg(long, default_value_t = 5)]
    n_critic: usize,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Images go to `<out>/<Class>/`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifierOverrides {
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    initial_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    image_size: Option<i64>,
    /// Directory holding `<backbone>.safetensors` exports.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    /// Use seeded random backbone weights (pipeline checks only).
    #[arg(long)]
    untrained_backbone: bool,
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    backbone: BackboneKind,
    #[arg(long, default_value = "none")]
    augment: Augment,
    #[arg(long, default_value = "baseline")]
    variant: DatasetVariant,
    #[command(flatten)]
    data: DataArgs,
    /// Holds `<gan-kind>/<Class>/*.png`; required for merged variants.
    #[arg(long)]
    generated_root: Option<PathBuf>,
    /// Keep only this many images per class (first by path).
    #[arg(long)]
    per_class: Option<usize>,
    /// Merge at most this many generated images per class.
    #[arg(long)]
    generated_per_class: Option<usize>,
    #[command(flatten)]
    overrides: ClassifierOverrides,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Force the plan's desk-scale subset and epoch caps.
    #[arg(long)]
    desk_scale: bool,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory (or a results.jsonl file).
    #[arg(long)]
    results: PathBuf,
    /// Reference tables; defaults to the bundled ones.
    #[arg(long, conflicts_with = "no_fixtures")]
    fixtures: Option<PathBuf>,
    /// Show measured values only.
    #[arg(long)]
    no_fixtures: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    tch::set_num_threads(cli.threads.max(1));
    tch::set_num_interop_threads(1);
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::SynthCorpus(a) => synth(a),
        Command::Split(a) => split_cmd(a),
        Command::TrainGan(a) => train_gan_cmd(a),
        Command::Generate(a) => generate(a),
        Command::SampleGrid(a) => grid(a),
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::Report(a) => report(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<()> {
    let classes: Vec<String> = if a.classes.is_empty() {
        EUROSAT_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        a.classes
    };
    let paths = synthesize_corpus(&a.out, &classes, a.per_class, a.seed)?;
    println!("wrote {} images under {}", paths.len(), a.out.display());
    Ok(())
}

fn split_cmd(a: SplitArgs) -> Result<()> {
    let index = a.data.load(a.seed)?;
    index.write_manifest(&a.out)?;
    for (class, n) in index.class_counts() {
        println!("{class}: {n}");
    }
    Ok(())
}

fn train_gan_cmd(a: TrainGanArgs) -> Result<()> {
    let index = a.data.load(a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    index.write_manifest(&a.out.join("manifest.csv"))?;
    let (ck, history) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            resume_gan(&ck, &index, Some(a.epochs), Some(&a.out))?
        }
        None => {
            let mut config = GanTrainConfig::new(a.gan.into(), a.class_name.clone());
            config.epochs = a.epochs;
            config.batch_size = a.batch_size;
            config.seed = a.seed;
            config.checkpoint_every = a.checkpoint_every;
            config.n_critic = a.n_critic;
            for w in config.warnings() {
                log::warn!("{w}");
            }
            train_gan(&index, &config, Some(&a.out))?
        }
    };
    if let Some(last) = history.records.last() {
        println!(
            "{} {}: epoch {} g_loss {:.4} d_loss {:.4}",
            ck.meta.gan_kind, ck.meta.class_name, last.epoch, last.g_loss, last.d_loss
        );
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let paths = generate_images(&ck, a.count, a.seed, &a.out)?;
    println!("wrote {} images under {}", paths.len(), a.out.join(&ck.meta.class_name).display());
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let cks = a
        .checkpoints
        .iter()
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let img = sample_grid(&cks, a.rows, a.cols, a.seed)?;
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    img.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn apply_overrides(plan: &mut AblationPlan, o: &ClassifierOverrides) {
    let t = &mut plan.training;
    t.max_epochs = o.max_epochs.or(t.max_epochs);
    t.patience = o.patience.or(t.patience);
    t.initial_lr = o.initial_lr.or(t.initial_lr);
    t.batch_size = o.batch_size.or(t.batch_size);
    t.image_size = o.image_size.or(t.image_size);
    if o.weights_dir.is_some() {
        t.weights_dir = o.weights_dir.clone();
    }
    t.untrained_backbone |= o.untrained_backbone;
}

fn train_classifier_cmd(a: TrainClassifierArgs) -> Result<()> {
    let mut plan = AblationPlan {
        seed: a.seed,
        split_seed: a.data.split_seed,
        split_ratio: a.data.split_ratio,
        classes: a.data.classes.clone(),
        data_root: Some(a.data.data_root.clone()),
        generated_root: a.generated_root.clone(),
        cells: vec![CellSpec {
            backbone: a.backbone,
            augment: a.augment,
            variant: a.variant,
            seed: Some(a.seed),
        }],
        ..Default::default()
    };
    if let Some(n) = a.per_class {
        plan.desk_scale = true;
        plan.desk.images_per_class = n;
        plan.desk.classes = plan.class_names();
        plan.desk.generated_per_class = a.generated_per_class;
        plan.desk.max_epochs = satgan_core::classifier::ClassifierTrainConfig::default().max_epochs;
    } else if a.generated_per_class.is_some() {
        bail!("--generated-per-class requires --per-class");
    }
    apply_overrides(&mut plan, &a.overrides);
    let paths = AblationPaths::resolve(&plan, None, &a.out)?;
    let outcome = run_ablation(&plan, &paths, &ClassifierCellRunner)?;
    let cell = outcome.cells.first().context("the cell is claimed by another process")?;
    let result = match &cell.outcome {
        Ok(r) => r,
        Err(e) => bail!("{e}"),
    };
    write_result(&a.out, result)?;
    println!("{RESULT_CSV_HEADER}\n{}", result.csv_row());
    Ok(())
}

fn write_result(out: &Path, r: &ExperimentResult) -> Result<()> {
    fs::write(out.join("result.csv"), format!("{RESULT_CSV_HEADER}\n{}\n", r.csv_row()))?;
    fs::write(out.join("result.json"), serde_json::to_string_pretty(r)? + "\n")?;
    let mut curves = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy,learning_rate\n");
    for (i, (m, lr)) in r.curves.iter().zip(&r.learning_rates).enumerate() {
        curves.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:e}\n",
            i + 1,
            m.train_loss,
            m.train_accuracy,
            m.val_loss,
            m.val_accuracy,
            lr
        ));
    }
    fs::write(out.join("curves.csv"), curves)?;
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let mut plan = AblationPlan::load(&a.plan)?;
    plan.desk_scale |= a.desk_scale;
    if let Some(p) = a.parallelism {
        plan.parallelism = p;
    }
    plan.validate()?;
    let paths = AblationPaths::resolve(&plan, a.data_root.as_deref(), &a.out)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("plan.toml"), plan.to_toml()?)?;
    let outcome = run_ablation(&plan, &paths, &ClassifierCellRunner)?;
    write_ablation_csv(&a.out, &outcome)?;
    println!(
        "{} cells: {} executed, {} reused, {} failed",
        outcome.cells.len(),
        outcome.executed(),
        outcome.cells.len() - outcome.executed(),
        outcome.failures().len()
    );
    for (cell, error) in outcome.failures() {
        println!("  {cell}: {error}");
    }
    if !outcome.failures().is_empty() {
        bail!("{} cell(s) failed; rerun to retry them", outcome.failures().len());
    }
    Ok(())
}

fn write_ablation_csv(out: &Path, outcome: &AblationOutcome) -> Result<()> {
    let mut csv = format!("{RESULT_CSV_HEADER}\n");
    for r in outcome.results() {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    fs::write(out.join("results.csv"), csv)?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let results = load_results(&a.results)?;
    let fixtures = match (&a.fixtures, a.no_fixtures) {
        (_, true) => Fixtures::default(),
        (Some(path), false) => Fixtures::load(path)?,
        (None, false) => Fixtures::bundled(),
    };
    let table = render_report(&results, &fixtures);
    let text = match a.format {
        Format::Csv => table.to_csv(),
        Format::Table => table.to_table(),
    };
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
