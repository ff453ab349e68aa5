use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use treesym::attack::{AttackKind, Classifier, Norm, Target};
use treesym::data::{apply_normalizer, load_libsvm, Dataset};
use treesym::defense::DefendedClassifier;
use treesym::gbdt::{self, Ensemble};
use treesym::harness::{
    self, eval_adversarial, eval_default_accuracy, AttackPlan, ClassifierMode, ClassifierReport,
    ExperimentConfig, ExperimentReport, Preset, ReportFormat, Scaling,
};
use treesym::{Error, Result};

#[derive(Parser)]
#[command(name = "treesym", version, about = "Tree ensembles, attacks on them, and symmetry defenses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a default or defended classifier and save it as JSON.
    Train(TrainArgs),
    /// Attack a saved classifier on a test file.
    Attack(AttackArgs),
    /// Train default and defended classifiers, attack both, report.
    DefendEval(ExperimentArgs),
    /// Agreement between each test sample and its inversion.
    Invariance(ExperimentArgs),
    /// Split-condition counts with and without augmentation.
    Fragmentation(ExperimentArgs),
    /// Convert a JSON report to CSV or JSON.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Bundled dataset: breast_cancer, diabetes or fmnist4.
    #[arg(long)]
    preset: Option<Preset>,
    /// Directory holding the bundled dataset files.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Training file (LIBSVM format).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Test file (LIBSVM format).
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    n_features: Option<usize>,
    /// `raw:class,...` or `identity:N`.
    #[arg(long, allow_hyphen_values = true)]
    label_map: Option<String>,
    /// `HxW`, required for flip symmetries.
    #[arg(long)]
    image_shape: Option<String>,
    /// One min/max for all features instead of per feature.
    #[arg(long)]
    global_scaling: bool,
    /// Pool train and test and re-split them with this seed.
    #[arg(long)]
    resplit_seed: Option<u64>,
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args, Clone)]
struct AttackListArgs {
    /// Comma-separated attack names.
    #[arg(long, value_delimiter = ',')]
    attack: Vec<AttackKind>,
    #[arg(long, default_value = "l2")]
    norm: Norm,
    #[arg(long)]
    max_queries: Option<u64>,
    #[arg(long, default_value_t = 100)]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long, default_value = "default")]
    mode: ClassifierMode,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    /// Model written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Raw test file (LIBSVM format); normalized with the model's ranges.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    n_features: usize,
    #[arg(long, allow_hyphen_values = true)]
    label_map: String,
    #[arg(long)]
    image_shape: Option<String>,
    #[command(flatten)]
    attacks: AttackListArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file; replaces every setting given by flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long, default_value = "zk-single")]
    mode: ClassifierMode,
    /// Also attack the augmented model without inversion.
    #[arg(long)]
    no_inversion: bool,
    #[command(flatten)]
    attacks: AttackListArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report to read.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

impl DataArgs {
    fn dataset(&self) -> Result<harness::DatasetConfig> {
        let mut d = match self.preset {
            Some(p) => p.dataset(&self.data_dir),
            None => {
                let missing = |f: &str| Error::Config(format!("--{f} is required without --preset"));
                harness::DatasetConfig::new(
                    self.data.clone().ok_or_else(|| missing("data"))?,
                    self.test.clone().ok_or_else(|| missing("test"))?,
                    self.n_features.ok_or_else(|| missing("n-features"))?,
                    self.label_map.as_deref().ok_or_else(|| missing("label-map"))?,
                )
            }
        };
        if let Some(p) = &self.data {
            d.train = p.clone();
        }
        if let Some(p) = &self.test {
            d.test = p.clone();
        }
        if let Some(n) = self.n_features {
            d.n_features = n;
        }
        if let Some(m) = &self.label_map {
            d.label_map = m.clone();
        }
        if let Some(s) = &self.image_shape {
            d.image_shape = Some(s.clone());
        }
        if self.global_scaling {
            d.scaling = Scaling::Global;
        }
        d.resplit_seed = self.resplit_seed;
        Ok(d)
    }
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            return ExperimentConfig::load(path);
        }
        let mut cfg = match self.data.preset {
            Some(p) => p.experiment(&self.data.data_dir),
            None => ExperimentConfig::default(),
        };
        cfg.dataset = self.data.dataset()?;
        apply_training(&mut cfg.train, &self.training);
        cfg.mode = self.mode;
        cfg.no_inversion = self.no_inversion;
        cfg = cfg.with_attacks(&self.attacks.attack);
        cfg.attack.norm = self.attacks.norm;
        if let Some(q) = self.attacks.max_queries {
            cfg.attack.max_queries = q;
        }
        cfg.n_eval_samples = self.attacks.n_samples;
        cfg.seed = self.attacks.seed;
        cfg.threads = self.attacks.threads;
        cfg.out = self.output.out.clone();
        cfg.format = self.output.format;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_training(train: &mut gbdt::TrainConfig, args: &TrainingArgs) {
    if let Some(r) = args.rounds {
        train.n_rounds = r;
    }
    if let Some(d) = args.depth {
        train.max_depth = d;
    }
    if let Some(lr) = args.learning_rate {
        train.learning_rate = lr;
    }
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit(report: &ExperimentReport, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    write_output(&harness::report_to_string(report, format)?, out)
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let dataset = args.data.dataset()?;
    let mut cfg = args.data.preset.map_or_else(gbdt::TrainConfig::default, Preset::train_config);
    apply_training(&mut cfg, &args.training);
    cfg.validate()?;
    let data = harness::load_dataset::<f64>(&dataset)?;
    let (bytes, acc, splits) = match args.mode {
        ClassifierMode::Default => {
            let m = harness::train_default(&data, &cfg)?;
            let acc = eval_default_accuracy(&m, &data.test, data.test.n_rows())?;
            (gbdt::serialize(&m), acc, m.count_split_conditions())
        }
        mode => {
            let d = harness::train_defended(&data, &cfg, mode)?;
            let acc = eval_default_accuracy(&d, &data.test, data.test.n_rows())?;
            (d.to_json(), acc, d.model().count_split_conditions())
        }
    };
    std::fs::write(&args.out, bytes)?;
    println!(
        "{}",
        json!({
            "model": args.out,
            "mode": args.mode.name(),
            "test_accuracy": acc,
            "split_count": splits,
        })
    );
    Ok(())
}

enum Loaded {
    Plain(Ensemble<f64>),
    Defended(DefendedClassifier<f64>),
}

impl Loaded {
    fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let v: serde_json::Value = serde_json::from_slice(&bytes)?;
        if v.get("policy").is_some() {
            Ok(Loaded::Defended(DefendedClassifier::from_json(&bytes)?))
        } else {
            Ok(Loaded::Plain(gbdt::deserialize(&bytes)?))
        }
    }

    fn model(&self) -> &Ensemble<f64> {
        match self {
            Loaded::Plain(m) => m,
            Loaded::Defended(d) => d.model(),
        }
    }

    fn classifier(&self) -> &dyn Classifier<f64> {
        match self {
            Loaded::Plain(m) => m,
            Loaded::Defended(d) => d,
        }
    }

    fn name(&self) -> &str {
        match self {
            Loaded::Plain(_) => "default",
            Loaded::Defended(d) => d.policy().name(),
        }
    }
}

fn attack_cmd(args: &AttackArgs) -> Result<()> {
    let loaded = Loaded::read(&args.model)?;
    let map = args.label_map.parse()?;
    let shape = args.image_shape.as_deref().map(str::parse).transpose()?;
    let raw: Dataset<f64> = load_libsvm(&args.test, args.n_features, &map)?.with_image_shape(shape)?;
    let test = apply_normalizer(loaded.model().normalizer(), &raw)?;
    let clf = loaded.classifier();
    let a = &args.attacks;
    let acc = eval_default_accuracy(clf, &test, a.n_samples)?;
    let mut report = ClassifierReport::new(loaded.name(), acc, loaded.model().count_split_conditions());
    for &kind in &a.attack {
        let mut cfg = treesym::attack::AttackConfig::default()
            .with_norm(a.norm)
            .with_seed(a.seed);
        if let Some(q) = a.max_queries {
            cfg.max_queries = q;
        }
        let target = Target {
            classifier: clf,
            model: Some(loaded.model()),
        };
        let mut plan = AttackPlan::direct(kind, target, &cfg);
        plan.threads = a.threads;
        report.attacks.push(eval_adversarial(&plan, &test, a.n_samples)?.0);
    }
    let out = ExperimentReport {
        dataset: args
            .test
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned()),
        mode: loaded.name().to_string(),
        seed: a.seed,
        n_eval_samples: a.n_samples,
        classifiers: vec![report],
        wall_time: Default::default(),
    };
    emit(&out, args.output.format, args.output.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train_cmd(&args),
        Command::Attack(args) => attack_cmd(&args),
        Command::DefendEval(args) => {
            let cfg = args.config()?;
            let report = harness::run_experiment::<f64>(&cfg)?;
            emit(&report, cfg.format, cfg.out.as_deref())
        }
        Command::Invariance(args) | Command::Fragmentation(args) => {
            let mut cfg = args.config()?;
            cfg.attacks.clear();
            let report = harness::run_fragmentation_experiment::<f64>(&cfg)?;
            emit(&report, cfg.format, cfg.out.as_deref())
        }
        Command::Report(args) => {
            let report = harness::read_report_json(&args.input)?;
            emit(&report, args.output.format, args.output.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim()}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
