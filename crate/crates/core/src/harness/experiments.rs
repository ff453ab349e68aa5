use std::collections::BTreeMap;
use std::time::Instant;

use super::config::{ClassifierMode, DatasetConfig, ExperimentConfig, Scaling, ZkTarget};
use super::metrics::{eval_adversarial, eval_default_accuracy, AttackBlock, AttackPlan};
use super::report::{ClassifierReport, ExperimentReport};
use crate::attack::{AttackConfig, AttackKind, Classifier, Target};
use crate::data::{
    apply_normalizer, fit_global_normalizer, fit_normalizer, load_libsvm,
    reshuffle_split, Dataset, NormalizationSpec, SymmetryElement,
};
use crate::defense::{
    classify_perfect_knowledge, invariance_report, train_perfect_knowledge, train_zero_knowledge,
    DefendedClassifier, ZkVariant,
};
use crate::error::{Error, Result};
use crate::gbdt::{train, Ensemble, TrainConfig};
use crate::scalar::Scalar;

/// Normalized train/test split ready for training.
#[derive(Debug, Clone)]
pub struct Prepared<S> {
    pub name: String,
    pub train: Dataset<S>,
    pub test: Dataset<S>,
    pub normalizer: NormalizationSpec<S>,
}

/// Loads both files, optionally re-splits, and scales features to `[0, 1]`
/// with statistics from the training part.
pub fn load_dataset<S: Scalar>(cfg: &DatasetConfig) -> Result<Prepared<S>> {
    let map = cfg.parsed_label_map()?;
    let shape = cfg.parsed_image_shape()?;
    let mut train_raw = load_libsvm(&cfg.train, cfg.n_features, &map)?.with_image_shape(shape)?;
    let mut test_raw = load_libsvm(&cfg.test, cfg.n_features, &map)?.with_image_shape(shape)?;
    if let Some(seed) = cfg.resplit_seed {
        (train_raw, test_raw) = reshuffle_split(&train_raw, &test_raw, seed)?;
    }
    let normalizer = match cfg.scaling {
        Scaling::PerFeature => fit_normalizer(&train_raw)?,
        Scaling::Global => fit_global_normalizer(&train_raw)?,
    };
    Ok(Prepared {
        name: cfg.display_name(),
        train: apply_normalizer(&normalizer, &train_raw)?,
        test: apply_normalizer(&normalizer, &test_raw)?,
        normalizer,
    })
}

/// Model on the original rows only.
pub fn train_default<S: Scalar>(data: &Prepared<S>, cfg: &TrainConfig) -> Result<Ensemble<S>> {
    train(&data.train, cfg)?.with_normalizer(data.normalizer.clone())
}

/// The defended classifier for a non-default mode.
pub fn train_defended<S: Scalar>(
    data: &Prepared<S>,
    cfg: &TrainConfig,
    mode: ClassifierMode,
) -> Result<DefendedClassifier<S>> {
    let d = match mode {
        ClassifierMode::ZkSingle => train_zero_knowledge(&data.train, cfg, ZkVariant::Single)?,
        ClassifierMode::ZkTwo => train_zero_knowledge(&data.train, cfg, ZkVariant::TwoModels)?,
        ClassifierMode::PkGroup => train_perfect_knowledge(&data.train, cfg)?,
        ClassifierMode::Default => {
            return Err(Error::Config("default mode has no defended classifier".into()))
        }
    };
    let model = d.model().clone().with_normalizer(data.normalizer.clone())?;
    let policy = d.policy().clone();
    DefendedClassifier::new(model, policy, d.image_shape())
}

struct Clock(BTreeMap<String, f64>);

impl Clock {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        *self.0.entry(stage.to_string()).or_default() += t0.elapsed().as_secs_f64();
        Ok(out)
    }
}

/// Runs every configured attack through `plan_for`.
fn run_attacks<'a, S: Scalar>(
    cfg: &ExperimentConfig,
    test: &Dataset<S>,
    starts: &[SymmetryElement],
    plan_for: impl Fn(AttackKind, &'a AttackConfig, SymmetryElement) -> AttackPlan<'a, S>,
    configs: &'a [AttackConfig],
) -> Result<Vec<AttackBlock>> {
    let mut blocks = Vec::new();
    for (spec, acfg) in cfg.attacks.iter().zip(configs) {
        for &s in starts {
            let mut plan = plan_for(spec.kind, acfg, s);
            plan.threads = cfg.threads;
            blocks.push(eval_adversarial(&plan, test, cfg.n_eval_samples)?.0);
        }
    }
    Ok(blocks)
}

fn attack_configs(cfg: &ExperimentConfig) -> Vec<AttackConfig> {
    cfg.attacks.iter().map(|a| cfg.attack_config(a)).collect()
}

/// Accuracy, invariance and attacks for an undefended model.
fn default_report<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &Prepared<S>,
    model: &Ensemble<S>,
    configs: &[AttackConfig],
    clock: &mut Clock,
) -> Result<ClassifierReport> {
    let acc = eval_default_accuracy(model, &data.test, cfg.n_eval_samples)?;
    let mut r = ClassifierReport::new("default", acc, model.count_split_conditions())
        .with_invariance(invariance_report(model, &data.test)?);
    r.attacks = clock.time("attack_default", || {
        run_attacks(
            cfg,
            &data.test,
            &[SymmetryElement::Id],
            |kind, acfg, _| AttackPlan::direct(kind, Target::white_box(model), acfg),
            configs,
        )
    })?;
    Ok(r)
}

fn finish<S>(cfg: &ExperimentConfig, data: &Prepared<S>, classifiers: Vec<ClassifierReport>, clock: Clock) -> ExperimentReport {
    ExperimentReport {
        dataset: data.name.clone(),
        mode: cfg.mode.name().to_string(),
        seed: cfg.seed,
        n_eval_samples: cfg.n_eval_samples,
        classifiers,
        wall_time: clock.0,
    }
}

/// Dispatches on `cfg.mode`.
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.mode {
        ClassifierMode::Default => run_default_experiment::<S>(cfg),
        ClassifierMode::ZkSingle | ClassifierMode::ZkTwo => run_zero_knowledge_experiment::<S>(cfg),
        ClassifierMode::PkGroup => run_perfect_knowledge_experiment::<S>(cfg),
    }
}

/// Trains and evaluates only the undefended model.
pub fn run_default_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut clock = Clock(BTreeMap::new());
    let data: Prepared<S> = clock.time("load", || load_dataset(&cfg.dataset))?;
    let model = clock.time("train_default", || train_default(&data, &cfg.train))?;
    let configs = attack_configs(cfg);
    let r = default_report(cfg, &data, &model, &configs, &mut clock)?;
    Ok(finish(cfg, &data, vec![r], clock))
}

/// Default model against the inversion defense (single model unless the
/// mode asks for two). Attacks hit the bare model or the pipeline per
/// `cfg.zk_target`; every returned point is judged by the pipeline.
pub fn run_zero_knowledge_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mode = match cfg.mode {
        ClassifierMode::ZkTwo => ClassifierMode::ZkTwo,
        _ => ClassifierMode::ZkSingle,
    };
    let mut clock = Clock(BTreeMap::new());
    let data: Prepared<S> = clock.time("load", || load_dataset(&cfg.dataset))?;
    let model = clock.time("train_default", || train_default(&data, &cfg.train))?;
    let defended = clock.time("train_defended", || train_defended(&data, &cfg.train, mode))?;
    let configs = attack_configs(cfg);

    let mut reports = vec![default_report(cfg, &data, &model, &configs, &mut clock)?];
    reports.push(zero_knowledge_report(cfg, &data, &defended, &configs, &mut clock)?);
    if cfg.no_inversion && mode == ClassifierMode::ZkSingle {
        reports.push(no_inversion_report(cfg, &data, defended.model(), &configs, &mut clock)?);
    }
    Ok(finish(cfg, &data, reports, clock))
}

fn zero_knowledge_report<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &Prepared<S>,
    d: &DefendedClassifier<S>,
    configs: &[AttackConfig],
    clock: &mut Clock,
) -> Result<ClassifierReport> {
    let acc = eval_default_accuracy(d, &data.test, cfg.n_eval_samples)?;
    let split_count = d.model().count_split_conditions()
        + match d.policy() {
            crate::defense::Policy::ZeroKnowledgeTwoModels { inverted_model } => {
                inverted_model.count_split_conditions()
            }
            _ => 0,
        };
    let mut r = ClassifierReport::new(d.policy().name(), acc, split_count)
        .with_invariance(invariance_report(d.model(), &data.test)?);
    let target = match cfg.zk_target {
        ZkTarget::Model => Target::white_box(d.model()),
        ZkTarget::Pipeline => Target {
            classifier: d,
            model: Some(d.model()),
        },
    };
    r.attacks = clock.time("attack_defended", || {
        run_attacks(
            cfg,
            &data.test,
            &[SymmetryElement::Id],
            |kind, acfg, _| AttackPlan {
                evaluator: d,
                ..AttackPlan::direct(kind, target, acfg)
            },
            configs,
        )
    })?;
    Ok(r)
}

fn no_inversion_report<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &Prepared<S>,
    augmented: &Ensemble<S>,
    configs: &[AttackConfig],
    clock: &mut Clock,
) -> Result<ClassifierReport> {
    let acc = eval_default_accuracy(augmented, &data.test, cfg.n_eval_samples)?;
    let mut r = ClassifierReport::new("zk-single/no-inversion", acc, augmented.count_split_conditions())
        .with_invariance(invariance_report(augmented, &data.test)?);
    r.attacks = clock.time("attack_no_inversion", || {
        run_attacks(
            cfg,
            &data.test,
            &[SymmetryElement::Id],
            |kind, acfg, _| AttackPlan::direct(kind, Target::white_box(augmented), acfg),
            configs,
        )
    })?;
    Ok(r)
}

/// The augmented single model attacked and judged without inversion.
pub fn run_no_inversion_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut clock = Clock(BTreeMap::new());
    let data: Prepared<S> = clock.time("load", || load_dataset(&cfg.dataset))?;
    let d = clock.time("train_defended", || {
        train_defended(&data, &cfg.train, ClassifierMode::ZkSingle)
    })?;
    let configs = attack_configs(cfg);
    let r = no_inversion_report(cfg, &data, d.model(), &configs, &mut clock)?;
    Ok(finish(cfg, &data, vec![r], clock))
}

/// Default model versus the group vote. The defense is attacked from each
/// of the four symmetric variants of every sample; white-box attacks
/// search the augmented model, black-box attacks query the vote.
pub fn run_perfect_knowledge_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut clock = Clock(BTreeMap::new());
    let data: Prepared<S> = clock.time("load", || load_dataset(&cfg.dataset))?;
    let shape = data
        .test
        .image_shape()
        .ok_or(Error::MissingImageShape("perfect-knowledge experiment"))?;
    let model = clock.time("train_default", || train_default(&data, &cfg.train))?;
    let pk = clock.time("train_defended", || {
        train_defended(&data, &cfg.train, ClassifierMode::PkGroup)
    })?;
    let configs = attack_configs(cfg);
    let mut reports = vec![default_report(cfg, &data, &model, &configs, &mut clock)?];

    let n = cfg.n_eval_samples.min(data.test.n_rows());
    let mut variant_correct = [0usize; 4];
    let mut agreed_correct = 0;
    for i in 0..n {
        let v = classify_perfect_knowledge(&pk, data.test.row(i))?;
        let y = data.test.label(i);
        for (c, &l) in variant_correct.iter_mut().zip(&v.labels) {
            *c += usize::from(l == y);
        }
        agreed_correct += usize::from(v.agreed && v.decided == y);
    }
    let acc = eval_default_accuracy(&pk, &data.test, n)?;
    let mut r = ClassifierReport::new(pk.policy().name(), acc, pk.model().count_split_conditions())
        .with_invariance(invariance_report(pk.model(), &data.test)?);
    r.variant_accuracy = Some(variant_correct.map(|c| c as f64 / n as f64));
    r.agreed_accuracy = Some(agreed_correct as f64 / n as f64);
    let target = Target {
        classifier: &pk as &dyn Classifier<S>,
        model: Some(pk.model()),
    };
    r.attacks = clock.time("attack_defended", || {
        run_attacks(
            cfg,
            &data.test,
            &SymmetryElement::VOTE_ORDER,
            |kind, acfg, start| AttackPlan {
                evaluator: &pk,
                start,
                image_shape: Some(shape),
                ..AttackPlan::direct(kind, target, acfg)
            },
            &configs,
        )
    })?;
    reports.push(r);
    Ok(finish(cfg, &data, reports, clock))
}

/// Split-condition counts of a default and an augmented model.
pub fn run_fragmentation_report<S: Scalar>(default: &Ensemble<S>, defended: &Ensemble<S>) -> (usize, usize) {
    (default.count_split_conditions(), defended.count_split_conditions())
}

/// Trains the default and the augmented model (group-vote augmentation
/// in `pk-group` mode, original plus inverted otherwise) and reports
/// accuracy, invariance and split counts without attacks.
pub fn run_fragmentation_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut clock = Clock(BTreeMap::new());
    let data: Prepared<S> = clock.time("load", || load_dataset(&cfg.dataset))?;
    let model = clock.time("train_default", || train_default(&data, &cfg.train))?;
    let mode = match cfg.mode {
        ClassifierMode::PkGroup => ClassifierMode::PkGroup,
        _ => ClassifierMode::ZkSingle,
    };
    let d = clock.time("train_defended", || train_defended(&data, &cfg.train, mode))?;
    let (a, b) = run_fragmentation_report(&model, d.model());
    let reports = vec![
        ClassifierReport::new("default", eval_default_accuracy(&model, &data.test, cfg.n_eval_samples)?, a)
            .with_invariance(invariance_report(&model, &data.test)?),
        ClassifierReport::new(d.policy().name(), eval_default_accuracy(&d, &data.test, cfg.n_eval_samples)?, b)
            .with_invariance(invariance_report(d.model(), &data.test)?),
    ];
    Ok(finish(cfg, &data, reports, clock))
}

