use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, AttackKind};
use crate::data::{ImageShape, LabelMap};
use crate::error::{Error, Result};
use crate::gbdt::TrainConfig;

/// Which classifier an experiment builds and evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClassifierMode {
    #[default]
    #[serde(rename = "default")]
    Default,
    #[serde(rename = "zk-single")]
    ZkSingle,
    #[serde(rename = "zk-two")]
    ZkTwo,
    #[serde(rename = "pk-group")]
    PkGroup,
}

impl ClassifierMode {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierMode::Default => "default",
            ClassifierMode::ZkSingle => "zk-single",
            ClassifierMode::ZkTwo => "zk-two",
            ClassifierMode::PkGroup => "pk-group",
        }
    }
}

impl fmt::Display for ClassifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(ClassifierMode::Default),
            "zk-single" | "zk" => Ok(ClassifierMode::ZkSingle),
            "zk-two" => Ok(ClassifierMode::ZkTwo),
            "pk-group" | "pk" => Ok(ClassifierMode::PkGroup),
            _ => Err(Error::Config(format!("unknown classifier mode {s:?}"))),
        }
    }
}

/// What zero-knowledge attacks are run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZkTarget {
    /// The bare model; the attacker does not know about the inversion.
    /// Results are then re-checked through the defended pipeline.
    #[default]
    Model,
    /// The pipeline itself, inversion included.
    Pipeline,
}

/// Per-feature min/max scaling, or one shared range for image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    PerFeature,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Name used in reports; defaults to the train file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub train: PathBuf,
    pub test: PathBuf,
    pub n_features: usize,
    /// `raw:class,...` or `identity:N`.
    pub label_map: String,
    /// `HxW`.
    #[serde(default)]
    pub image_shape: Option<String>,
    #[serde(default)]
    pub scaling: Scaling,
    /// Pools train and test and re-splits them with this seed.
    #[serde(default)]
    pub resplit_seed: Option<u64>,
}

impl DatasetConfig {
    pub fn new(train: impl Into<PathBuf>, test: impl Into<PathBuf>, n_features: usize, label_map: &str) -> Self {
        Self {
            name: None,
            train: train.into(),
            test: test.into(),
            n_features,
            label_map: label_map.to_string(),
            image_shape: None,
            scaling: Scaling::PerFeature,
            resplit_seed: None,
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.train
                .file_stem()
                .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned())
        })
    }

    pub fn parsed_label_map(&self) -> Result<LabelMap> {
        self.label_map.parse()
    }

    pub fn parsed_image_shape(&self) -> Result<Option<ImageShape>> {
        self.image_shape.as_deref().map(str::parse).transpose()
    }
}

/// Bundled datasets with their tree counts and depths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    BreastCancer,
    Diabetes,
    Fmnist4,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::BreastCancer, Preset::Diabetes, Preset::Fmnist4];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BreastCancer => "breast_cancer",
            Preset::Diabetes => "diabetes",
            Preset::Fmnist4 => "fmnist4",
        }
    }

    /// `<dir>/<name>.train` and `<dir>/<name>.test`.
    pub fn dataset(self, dir: &Path) -> DatasetConfig {
        let file = |ext: &str| dir.join(format!("{}.{ext}", self.name()));
        let mut d = match self {
            Preset::BreastCancer => DatasetConfig::new(file("train"), file("test"), 10, "2:0,4:1"),
            Preset::Diabetes => DatasetConfig::new(file("train"), file("test"), 8, "-1:0,1:1"),
            Preset::Fmnist4 => {
                let mut d = DatasetConfig::new(file("train"), file("test"), 784, "identity:4");
                d.image_shape = Some("28x28".into());
                d.scaling = Scaling::Global;
                d
            }
        };
        d.name = Some(self.name().into());
        d
    }

    /// Rounds and depth per dataset. The image set runs 20 rounds instead
    /// of 200 to fit a single core.
    pub fn train_config(self) -> TrainConfig {
        match self {
            Preset::BreastCancer => TrainConfig::new(4, 6),
            Preset::Diabetes => TrainConfig::new(20, 5),
            Preset::Fmnist4 => TrainConfig::new(20, 8),
        }
    }

    pub fn experiment(self, dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.dataset(dir),
            train: self.train_config(),
            ..ExperimentConfig::default()
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "breast_cancer" => Ok(Preset::BreastCancer),
            "diabetes" => Ok(Preset::Diabetes),
            "fmnist4" | "fmnist" => Ok(Preset::Fmnist4),
            _ => Err(Error::Config(format!("unknown dataset preset {s:?}"))),
        }
    }
}

/// One attack to run, optionally with its own settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Falls back to [`ExperimentConfig::attack`].
    #[serde(default)]
    pub config: Option<AttackConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub mode: ClassifierMode,
    pub zk_target: ZkTarget,
    /// Adds a block attacking the augmented model with no inversion.
    pub no_inversion: bool,
    pub attacks: Vec<AttackSpec>,
    /// Shared attack settings.
    pub attack: AttackConfig,
    /// Size of the evaluated test prefix.
    pub n_eval_samples: usize,
    pub seed: u64,
    /// Worker threads for per-sample attacks; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::new("train", "test", 0, "-1:0,1:1"),
            train: TrainConfig::default(),
            mode: ClassifierMode::Default,
            zk_target: ZkTarget::Model,
            no_inversion: false,
            attacks: Vec::new(),
            attack: AttackConfig::default(),
            n_eval_samples: 100,
            seed: 0,
            threads: None,
            out: None,
            format: ReportFormat::Json,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn with_attacks(mut self, kinds: &[AttackKind]) -> Self {
        self.attacks = kinds.iter().map(|&kind| AttackSpec { kind, config: None }).collect();
        self
    }

    /// Settings for one attack, seeded from the experiment seed.
    pub fn attack_config(&self, spec: &AttackSpec) -> AttackConfig {
        let base = spec.config.as_ref().unwrap_or(&self.attack);
        base.clone().with_seed(base.seed ^ self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_eval_samples == 0 {
            return Err(Error::Config("n_eval_samples must be at least 1".into()));
        }
        if self.dataset.n_features == 0 {
            return Err(Error::Config("n_features must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.dataset.parsed_label_map()?;
        let shape = self.dataset.parsed_image_shape()?;
        if self.mode == ClassifierMode::PkGroup && shape.is_none() {
            return Err(Error::MissingImageShape("pk-group mode"));
        }
        self.train.validate()?;
        self.attack.validate()?;
        for a in &self.attacks {
            if let Some(c) = &a.config {
                c.validate()?;
            }
        }
        Ok(())
    }
}
