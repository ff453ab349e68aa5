//! Minimal-perturbation attacks against tree ensembles and arbitrary
//! label functions.
//!
//! Black-box attacks (`cube`, `opt`, `signopt`, `hsja`) only see a
//! [`Classifier`]; `lt` and the exact searches also read the ensemble.

mod boxes;
mod cube;
mod exact;
mod hsja;
mod lt;
mod opt;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::Ensemble;
use crate::scalar::Scalar;

pub use boxes::{AxisBox, LeafBoxes, LeafInfo, LeafTuple};
pub use cube::cube_attack;
pub use exact::{exact_oracle, exact_search, grid_cell_count, GRID_CELL_LIMIT};
pub use hsja::{boundary_bisect, hsja_attack};
pub use lt::lt_attack;
pub use opt::{opt_attack, sign_gradient_estimate, signopt_attack};

/// Anything that maps a feature vector to a class index. Implementations
/// must be pure so attacks can run concurrently.
pub trait Classifier<S: Scalar>: Sync {
    fn n_features(&self) -> usize;

    fn classify(&self, x: &[S]) -> usize;

    /// Margin of class `y` over the best other class when scores are
    /// available; `None` for hard-label classifiers.
    fn class_margin(&self, _x: &[S], _y: usize) -> Option<S> {
        None
    }

    /// True when [`Classifier::class_margin`] returns scores.
    fn has_margin(&self) -> bool {
        false
    }
}

impl<S: Scalar> Classifier<S> for Ensemble<S> {
    fn n_features(&self) -> usize {
        Ensemble::n_features(self)
    }

    fn classify(&self, x: &[S]) -> usize {
        self.label_of(x)
    }

    fn class_margin(&self, x: &[S], y: usize) -> Option<S> {
        Some(Ensemble::class_margin(self, x, y))
    }

    fn has_margin(&self) -> bool {
        true
    }
}

/// Adapts a closure into a hard-label [`Classifier`].
pub struct LabelFn<F> {
    n_features: usize,
    f: F,
}

impl<F> LabelFn<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<S: Scalar, F: Fn(&[S]) -> usize + Sync> Classifier<S> for LabelFn<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn classify(&self, x: &[S]) -> usize {
        (self.f)(x)
    }
}

/// Query counter wrapped around a classifier; refuses queries past the budget.
pub struct Budgeted<'a, S: Scalar> {
    clf: &'a dyn Classifier<S>,
    used: u64,
    max: u64,
}

impl<'a, S: Scalar> Budgeted<'a, S> {
    pub fn new(clf: &'a dyn Classifier<S>, max: u64) -> Self {
        Self { clf, used: 0, max }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.max
    }

    pub fn label(&mut self, x: &[S]) -> Option<usize> {
        if self.exhausted() {
            return None;
        }
        self.used += 1;
        Some(self.clf.classify(x))
    }

    /// `Some(true)` when `x` is not classified as `y`.
    pub fn is_adversarial(&mut self, x: &[S], y: usize) -> Option<bool> {
        self.label(x).map(|l| l != y)
    }

    /// White-box margin if the classifier has one. Costs one query.
    pub fn margin(&mut self, x: &[S], y: usize) -> Option<Option<S>> {
        if self.exhausted() {
            return None;
        }
        self.used += 1;
        Some(self.clf.class_margin(x, y))
    }

    pub fn has_margin(&self) -> bool {
        self.clf.has_margin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    pub fn distance<S: Scalar>(self, a: &[S], b: &[S]) -> f64 {
        match self {
            Norm::L2 => l2(a, b),
            Norm::Linf => linf(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "linf" | "l_inf" | "inf" => Ok(Norm::Linf),
            _ => Err(Error::Config(format!("unknown norm {s:?}"))),
        }
    }
}

pub fn l2<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn linf<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs().as_f64())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Cube,
    Lt,
    Opt,
    SignOpt,
    Hsja,
    Exact,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Cube,
        AttackKind::Lt,
        AttackKind::Opt,
        AttackKind::SignOpt,
        AttackKind::Hsja,
        AttackKind::Exact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Cube => "cube",
            AttackKind::Lt => "lt",
            AttackKind::Opt => "opt",
            AttackKind::SignOpt => "signopt",
            AttackKind::Hsja => "hsja",
            AttackKind::Exact => "exact",
        }
    }

    /// Whether the attack reads the ensemble structure.
    pub fn needs_model(self) -> bool {
        matches!(self, AttackKind::Lt | AttackKind::Exact)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cube" => Ok(AttackKind::Cube),
            "lt" | "ltattack" => Ok(AttackKind::Lt),
            "opt" => Ok(AttackKind::Opt),
            "signopt" => Ok(AttackKind::SignOpt),
            "hsja" => Ok(AttackKind::Hsja),
            "exact" | "milp" | "oracle" => Ok(AttackKind::Exact),
            _ => Err(Error::Config(format!("unknown attack {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubeConfig {
    /// Random-search iterations per tested epsilon.
    pub n_iters: u64,
    /// Per-coordinate change probability; `None` means `max(1/d, 0.1)`.
    pub subset_prob: Option<f64>,
    /// First epsilon tried before bisecting.
    pub initial_eps: f64,
    /// Width of the final epsilon bracket.
    pub eps_tolerance: f64,
}

impl Default for CubeConfig {
    fn default() -> Self {
        Self {
            n_iters: 1000,
            subset_prob: None,
            initial_eps: 1.0,
            eps_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Random directions per gradient estimate.
    pub n_directions: usize,
    /// Directions tried when picking the start direction.
    pub n_init_directions: usize,
    /// Finite-difference step.
    pub beta: f64,
    /// Bisection tolerance on the boundary distance.
    pub tolerance: f64,
    pub initial_step: f64,
    pub max_iters: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            n_directions: 20,
            n_init_directions: 20,
            beta: 0.005,
            tolerance: 1e-4,
            initial_step: 0.2,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsjaConfig {
    /// Monte-Carlo samples at the first iteration; grows with sqrt(iteration).
    pub initial_gradient_samples: usize,
    pub max_gradient_samples: usize,
    /// Boundary bisection tolerance, relative to the search segment.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for HsjaConfig {
    fn default() -> Self {
        Self {
            initial_gradient_samples: 100,
            max_gradient_samples: 1000,
            tolerance: 1e-4,
            max_iters: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LtConfig {
    /// Extra local searches started from other adversarial probes.
    pub n_restarts: usize,
    /// Stop a local search after this many non-improving rounds.
    pub max_no_improve: usize,
    /// Upper bound on local-search moves per start.
    pub max_steps: usize,
}

impl Default for LtConfig {
    fn default() -> Self {
        Self {
            n_restarts: 4,
            max_no_improve: 1,
            max_steps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub norm: Norm,
    pub max_queries: u64,
    pub seed: u64,
    pub cube: CubeConfig,
    pub opt: OptConfig,
    pub hsja: HsjaConfig,
    pub lt: LtConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            norm: Norm::L2,
            max_queries: 20_000,
            seed: 0,
            cube: CubeConfig::default(),
            opt: OptConfig::default(),
            hsja: HsjaConfig::default(),
            lt: LtConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let tol = |name: &str, v: f64| {
            if v > 0.0 && v <= 0.1 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 0.1], got {v}")))
            }
        };
        if self.max_queries == 0 || self.cube.n_iters == 0 {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if self.opt.n_directions == 0 || self.hsja.initial_gradient_samples == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        tol("cube.eps_tolerance", self.cube.eps_tolerance)?;
        tol("opt.tolerance", self.opt.tolerance)?;
        tol("opt.beta", self.opt.beta)?;
        tol("hsja.tolerance", self.hsja.tolerance)?;
        if let Some(p) = self.cube.subset_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config("cube.subset_prob must lie in (0, 1]".into()));
            }
        }
        if !(self.cube.initial_eps > 0.0 && self.cube.initial_eps <= 1.0) {
            return Err(Error::Config("cube.initial_eps must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult<S> {
    pub adversarial: Option<Vec<S>>,
    pub success: bool,
    pub l2: f64,
    pub linf: f64,
    pub queries: u64,
    pub original_label: usize,
    pub adversarial_label: Option<usize>,
}

impl<S: Scalar> AttackResult<S> {
    pub fn found(x0: &[S], adversarial: Vec<S>, y0: usize, label: usize, queries: u64) -> Self {
        Self {
            l2: l2(x0, &adversarial),
            linf: linf(x0, &adversarial),
            adversarial: Some(adversarial),
            success: label != y0,
            queries,
            original_label: y0,
            adversarial_label: Some(label),
        }
    }

    pub fn failed(y0: usize, queries: u64) -> Self {
        Self {
            adversarial: None,
            success: false,
            l2: 0.0,
            linf: 0.0,
            queries,
            original_label: y0,
            adversarial_label: None,
        }
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L2 => self.l2,
            Norm::Linf => self.linf,
        }
    }
}

/// What an attack may see: the label function and, for white-box
/// attacks, the ensemble behind it.
#[derive(Clone, Copy)]
pub struct Target<'a, S: Scalar> {
    pub classifier: &'a dyn Classifier<S>,
    pub model: Option<&'a Ensemble<S>>,
}

impl<'a, S: Scalar> Target<'a, S> {
    pub fn black_box(classifier: &'a dyn Classifier<S>) -> Self {
        Self {
            classifier,
            model: None,
        }
    }

    pub fn white_box(model: &'a Ensemble<S>) -> Self {
        Self {
            classifier: model,
            model: Some(model),
        }
    }
}

/// Runs one attack by name. White-box attacks require `target.model` and
/// search the model directly.
pub fn run_attack<S: Scalar>(
    kind: AttackKind,
    target: Target<'_, S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult<S>> {
    cfg.validate()?;
    if x0.len() != target.classifier.n_features() {
        return Err(Error::DimensionMismatch {
            expected: target.classifier.n_features(),
            got: x0.len(),
        });
    }
    let model = || {
        target
            .model
            .ok_or_else(|| Error::Config(format!("attack {kind} needs the ensemble")))
    };
    Ok(match kind {
        AttackKind::Cube => cube_attack(target.classifier, x0, y0, cfg),
        AttackKind::Opt => opt_attack(target.classifier, x0, y0, cfg),
        AttackKind::SignOpt => signopt_attack(target.classifier, x0, y0, cfg),
        AttackKind::Hsja => hsja_attack(target.classifier, x0, y0, cfg),
        AttackKind::Lt => lt_attack(model()?, x0, y0, cfg),
        AttackKind::Exact => {
            let m = model()?;
            match exact_oracle(m, x0, y0, cfg.norm) {
                Err(Error::GridTooLarge { .. }) => exact_search(m, x0, y0, cfg.norm, None)?,
                other => other?,
            }
        }
    })
}

/// Clamps every coordinate to `[0, 1]`.
pub(crate) fn clamp_unit<S: Scalar>(x: &mut [S]) {
    for v in x {
        *v = v.max(S::zero()).min(S::one());
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::data::NormalizationSpec;
    use crate::gbdt::{Objective, Tree};

    /// One split at 0.5: left leaf label 0, right leaf label 1.
    pub fn stump() -> Ensemble<f64> {
        Ensemble::new(
            vec![Tree::stump(0, 0.5, -1.0, 1.0, 0)],
            2,
            1,
            Objective::BinaryLogistic,
            0.0,
            NormalizationSpec::identity(1),
        )
        .unwrap()
    }

    pub fn constant(n_features: usize) -> LabelFn<impl Fn(&[f64]) -> usize + Sync> {
        LabelFn::new(n_features, |_: &[f64]| 0usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_is_enforced() {
        let c = fixtures::constant(2);
        let mut b = Budgeted::new(&c, 3);
        for _ in 0..3 {
            assert_eq!(b.label(&[0.0, 0.0]), Some(0));
        }
        assert_eq!(b.label(&[0.0, 0.0]), None);
        assert_eq!(b.used(), 3);
    }

    #[test]
    fn names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert_eq!("LT-Attack".parse::<AttackKind>().unwrap(), AttackKind::Lt);
        assert_eq!("linf".parse::<Norm>().unwrap(), Norm::Linf);
        assert!("l3".parse::<Norm>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::default().validate().is_ok());
        let mut c = AttackConfig::default();
        c.hsja.tolerance = 0.5;
        assert!(c.validate().is_err());
        let mut c = AttackConfig::default();
        c.max_queries = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn white_box_attacks_need_a_model() {
        let c = fixtures::constant(1);
        let r = run_attack(AttackKind::Lt, Target::black_box(&c), &[0.2], 0, &AttackConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
