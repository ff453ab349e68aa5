use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, AttackConfig, AttackKind, Classifier, Norm, Target};
use crate::data::{apply_symmetry, Dataset, ImageShape, SymmetryElement};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fraction of the first `n` test rows (or all of them, if fewer) that
/// `classify` labels correctly.
pub fn eval_default_accuracy<S: Scalar>(
    classify: &dyn Classifier<S>,
    test: &Dataset<S>,
    n: usize,
) -> Result<f64> {
    let n = n.min(test.n_rows());
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if test.n_features() != classify.n_features() {
        return Err(Error::DimensionMismatch {
            expected: classify.n_features(),
            got: test.n_features(),
        });
    }
    let correct = (0..n)
        .into_par_iter()
        .filter(|&i| classify.classify(test.row(i)) == test.label(i))
        .count();
    Ok(correct as f64 / n as f64)
}

/// What happened to one test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub index: usize,
    /// The evaluated classifier labels the clean sample correctly; only
    /// these samples are attacked.
    pub original_correct: bool,
    /// The attack reported success.
    pub claimed_success: bool,
    /// The evaluator misclassifies the returned point.
    pub fooled: bool,
    pub l2: f64,
    pub linf: f64,
    pub queries: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleOutcome {
    /// A sample the evaluator already gets wrong; not attacked.
    pub fn skipped(index: usize) -> Self {
        Self {
            index,
            original_correct: false,
            claimed_success: false,
            fooled: false,
            l2: 0.0,
            linf: 0.0,
            queries: 0,
            error: None,
        }
    }

    fn errored(index: usize, e: &Error) -> Self {
        Self {
            original_correct: true,
            error: Some(e.to_string()),
            ..Self::skipped(index)
        }
    }
}

/// Aggregated result of one attack against one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackBlock {
    pub attack: AttackKind,
    pub norm: Norm,
    /// Symmetry applied to each sample before attacking it.
    pub start: SymmetryElement,
    /// Evaluated prefix length.
    pub n_samples: usize,
    /// Correctly classified originals, i.e. samples attacked.
    pub n_attacked: usize,
    /// Returned points the evaluator misclassifies.
    pub n_success: usize,
    /// Claimed successes the evaluator still classifies correctly.
    pub n_invalid: usize,
    pub n_errors: usize,
    /// `None` when nothing was attacked.
    pub adversarial_accuracy: Option<f64>,
    /// Means over genuinely misclassified points; `None` without any.
    pub mean_l2: Option<f64>,
    pub mean_linf: Option<f64>,
    pub mean_queries: Option<f64>,
    pub wall_time_s: f64,
}

impl AttackBlock {
    /// Folds outcomes in sample order so means do not depend on
    /// scheduling.
    pub fn from_outcomes(
        attack: AttackKind,
        norm: Norm,
        start: SymmetryElement,
        outcomes: &[SampleOutcome],
    ) -> Self {
        let mut attacked: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.original_correct).collect();
        attacked.sort_by_key(|o| o.index);
        let fooled: Vec<&SampleOutcome> = attacked.iter().copied().filter(|o| o.fooled).collect();
        let n_attacked = attacked.len();
        let n_success = fooled.len();
        Self {
            attack,
            norm,
            start,
            n_samples: outcomes.len(),
            n_attacked,
            n_success,
            n_invalid: attacked.iter().filter(|o| o.claimed_success && !o.fooled).count(),
            n_errors: attacked.iter().filter(|o| o.error.is_some()).count(),
            adversarial_accuracy: (n_attacked > 0)
                .then(|| (n_attacked - n_success) as f64 / n_attacked as f64),
            mean_l2: mean(fooled.iter().map(|o| o.l2)),
            mean_linf: mean(fooled.iter().map(|o| o.linf)),
            mean_queries: mean(attacked.iter().map(|o| o.queries as f64)),
            wall_time_s: 0.0,
        }
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = values.len();
    (n > 0).then(|| values.sum::<f64>() / n as f64)
}

/// One attack run: who is attacked, who judges the result, and where each
/// attack starts.
#[derive(Clone, Copy)]
pub struct AttackPlan<'a, S: Scalar> {
    pub kind: AttackKind,
    /// What the attack queries (and, for white-box attacks, searches).
    pub target: Target<'a, S>,
    /// Decides correctness of originals and of returned points.
    pub evaluator: &'a dyn Classifier<S>,
    pub config: &'a AttackConfig,
    pub start: SymmetryElement,
    pub image_shape: Option<ImageShape>,
    pub threads: Option<usize>,
}

impl<'a, S: Scalar> AttackPlan<'a, S> {
    /// Attacks and evaluates the same classifier from the original samples.
    pub fn direct(kind: AttackKind, target: Target<'a, S>, config: &'a AttackConfig) -> Self {
        Self {
            kind,
            target,
            evaluator: target.classifier,
            config,
            start: SymmetryElement::Id,
            image_shape: None,
            threads: None,
        }
    }
}

/// Attacks every correctly classified sample among the first `n` and
/// re-checks each returned point through `plan.evaluator`. Per-sample
/// attack errors are recorded, not propagated.
pub fn eval_adversarial<S: Scalar>(
    plan: &AttackPlan<'_, S>,
    test: &Dataset<S>,
    n: usize,
) -> Result<(AttackBlock, Vec<SampleOutcome>)> {
    let n = n.min(test.n_rows());
    if test.n_features() != plan.evaluator.n_features() {
        return Err(Error::DimensionMismatch {
            expected: plan.evaluator.n_features(),
            got: test.n_features(),
        });
    }
    if plan.start.flips() && plan.image_shape.is_none() {
        return Err(Error::MissingImageShape("flipped attack start"));
    }
    plan.config.validate()?;
    let t0 = Instant::now();
    let run = || -> Vec<SampleOutcome> {
        (0..n)
            .into_par_iter()
            .map(|i| attack_one(plan, test.row(i), test.label(i), i))
            .collect()
    };
    let outcomes = match plan.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut block = AttackBlock::from_outcomes(plan.kind, plan.config.norm, plan.start, &outcomes);
    block.wall_time_s = t0.elapsed().as_secs_f64();
    Ok((block, outcomes))
}

fn attack_one<S: Scalar>(plan: &AttackPlan<'_, S>, x: &[S], y: usize, index: usize) -> SampleOutcome {
    if plan.evaluator.classify(x) != y {
        return SampleOutcome::skipped(index);
    }
    let x0 = match apply_symmetry(x, plan.start, plan.image_shape) {
        Ok(v) => v,
        Err(e) => return SampleOutcome::errored(index, &e),
    };
    let cfg = plan.config.clone().with_seed(sample_seed(plan.config.seed, index));
    let r = match run_attack(plan.kind, plan.target, &x0, y, &cfg) {
        Ok(r) => r,
        Err(e) => return SampleOutcome::errored(index, &e),
    };
    let fooled = r
        .adversarial
        .as_ref()
        .is_some_and(|adv| plan.evaluator.classify(adv) != y);
    SampleOutcome {
        index,
        original_correct: true,
        claimed_success: r.success,
        fooled,
        l2: r.l2,
        linf: r.linf,
        queries: r.queries,
        error: None,
    }
}

/// Independent per-sample stream derived from the run seed.
fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
