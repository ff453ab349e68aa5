//! Symmetry defenses around a trained ensemble.
//!
//! Zero-knowledge: the sample is inverted (`a -> 1 - a`) before the model
//! sees it. Perfect-knowledge: all four symmetric variants are classified
//! and a vote decides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::attack::Classifier;
use crate::data::{
    apply_symmetry_into, augment, invert, Dataset, ImageShape, SymmetryElement,
};
use crate::error::{Error, Result};
use crate::gbdt::{self, train, Ensemble, TrainConfig};
use crate::scalar::Scalar;

/// Zero-knowledge training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZkVariant {
    /// One model on original plus inverted rows.
    #[default]
    Single,
    /// Separate models on original and on inverted rows.
    TwoModels,
}

impl FromStr for ZkVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ZkVariant::Single),
            "two_models" | "two-models" | "two" => Ok(ZkVariant::TwoModels),
            _ => Err(Error::Config(format!("unknown zero-knowledge variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy<S> {
    ZeroKnowledgeInvert,
    ZeroKnowledgeTwoModels { inverted_model: Ensemble<S> },
    PerfectKnowledgeGroup,
}

impl<S> Policy<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::ZeroKnowledgeInvert => "zk-single",
            Policy::ZeroKnowledgeTwoModels { .. } => "zk-two",
            Policy::PerfectKnowledgeGroup => "pk-group",
        }
    }

    pub fn is_zero_knowledge(&self) -> bool {
        !matches!(self, Policy::PerfectKnowledgeGroup)
    }
}

/// A model plus the inference-time transformation wrapped around it.
#[derive(Debug, Clone, PartialEq)]
pub struct DefendedClassifier<S> {
    model: Ensemble<S>,
    policy: Policy<S>,
    image_shape: Option<ImageShape>,
}

impl<S: Scalar> DefendedClassifier<S> {
    pub fn new(model: Ensemble<S>, policy: Policy<S>, image_shape: Option<ImageShape>) -> Result<Self> {
        if let Policy::ZeroKnowledgeTwoModels { inverted_model } = &policy {
            if inverted_model.n_features() != model.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: model.n_features(),
                    got: inverted_model.n_features(),
                });
            }
            if inverted_model.n_classes() != model.n_classes() {
                return Err(Error::Config("paired models disagree on n_classes".into()));
            }
        }
        if let Some(shape) = image_shape {
            if shape.len() != model.n_features() {
                return Err(Error::ShapeMismatch {
                    height: shape.height,
                    width: shape.width,
                    n_features: model.n_features(),
                });
            }
        } else if matches!(policy, Policy::PerfectKnowledgeGroup) {
            return Err(Error::MissingImageShape("group-vote defense"));
        }
        Ok(Self {
            model,
            policy,
            image_shape,
        })
    }

    /// The model trained on augmented data (or on original rows only for
    /// the two-model variant).
    pub fn model(&self) -> &Ensemble<S> {
        &self.model
    }

    pub fn policy(&self) -> &Policy<S> {
        &self.policy
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image_shape
    }

    /// The ensemble that actually labels inputs after the transformation.
    pub fn inference_model(&self) -> &Ensemble<S> {
        match &self.policy {
            Policy::ZeroKnowledgeTwoModels { inverted_model } => inverted_model,
            _ => &self.model,
        }
    }

    /// Defended label; the vote's decision for the group policy.
    pub fn predict_label(&self, x: &[S]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.label_of(x))
    }

    fn check_dim(&self, x: &[S]) -> Result<()> {
        if x.len() != self.model.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.model.n_features(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn label_of(&self, x: &[S]) -> usize {
        match &self.policy {
            Policy::PerfectKnowledgeGroup => self.vote(x).decided,
            _ => self.inference_model().label_of(&invert(x)),
        }
    }

    fn vote(&self, x: &[S]) -> GroupVote {
        let mut buf = Vec::with_capacity(x.len());
        let labels = SymmetryElement::VOTE_ORDER.map(|s| {
            buf.clear();
            apply_symmetry_into(x, s, self.image_shape, &mut buf)
                .expect("shape checked at construction");
            self.model.label_of(&buf)
        });
        GroupVote::from_labels(labels)
    }
}

impl<S: Scalar> Classifier<S> for DefendedClassifier<S> {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn classify(&self, x: &[S]) -> usize {
        self.label_of(x)
    }
}

/// Labels of the four symmetric variants, in
/// [`SymmetryElement::VOTE_ORDER`], and the decision taken from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupVote {
    pub labels: [usize; 4],
    pub decided: usize,
    /// Some label occurs at least twice.
    pub agreed: bool,
}

impl GroupVote {
    /// Most frequent label; ties (including four distinct labels) go to
    /// the earliest variant in vote order.
    pub fn from_labels(labels: [usize; 4]) -> Self {
        let count = |l: usize| labels.iter().filter(|&&m| m == l).count();
        let mut decided = labels[0];
        let mut best = count(decided);
        for &l in &labels[1..] {
            let c = count(l);
            if c > best {
                decided = l;
                best = c;
            }
        }
        Self {
            labels,
            decided,
            agreed: best >= 2,
        }
    }
}

/// Trains the zero-knowledge defense. `train` must be normalized to
/// `[0, 1]`.
pub fn train_zero_knowledge<S: Scalar>(
    train_set: &Dataset<S>,
    cfg: &TrainConfig,
    variant: ZkVariant,
) -> Result<DefendedClassifier<S>> {
    match variant {
        ZkVariant::Single => {
            let aug = augment(train_set, &[SymmetryElement::Id, SymmetryElement::Invert])?;
            let model = train(&aug, cfg)?;
            DefendedClassifier::new(model, Policy::ZeroKnowledgeInvert, train_set.image_shape())
        }
        ZkVariant::TwoModels => {
            let model = train(train_set, cfg)?;
            let inverted = invert_dataset(train_set)?;
            let inverted_model = train(&inverted, cfg)?.with_normalizer(model.normalizer().clone())?;
            DefendedClassifier::new(
                model,
                Policy::ZeroKnowledgeTwoModels { inverted_model },
                train_set.image_shape(),
            )
        }
    }
}

fn invert_dataset<S: Scalar>(data: &Dataset<S>) -> Result<Dataset<S>> {
    let features = data.features().iter().map(|&v| S::one() - v).collect();
    Dataset::new(
        features,
        data.labels().to_vec(),
        data.n_features(),
        data.n_classes(),
        data.image_shape(),
    )
}

/// Zero-knowledge label: the inference model applied to `invert(x)`.
pub fn classify_zero_knowledge<S: Scalar>(d: &DefendedClassifier<S>, x: &[S]) -> Result<usize> {
    if !d.policy.is_zero_knowledge() {
        return Err(Error::Config("classifier is not a zero-knowledge defense".into()));
    }
    d.predict_label(x)
}

/// Trains one model on all four symmetric variants of every row.
pub fn train_perfect_knowledge<S: Scalar>(
    train_set: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<DefendedClassifier<S>> {
    let Some(shape) = train_set.image_shape() else {
        return Err(Error::MissingImageShape("group-vote defense"));
    };
    let aug = augment(train_set, &SymmetryElement::VOTE_ORDER)?;
    let model = train(&aug, cfg)?;
    DefendedClassifier::new(model, Policy::PerfectKnowledgeGroup, Some(shape))
}

pub fn classify_perfect_knowledge<S: Scalar>(d: &DefendedClassifier<S>, x: &[S]) -> Result<GroupVote> {
    if d.policy.is_zero_knowledge() {
        return Err(Error::Config("classifier is not a group-vote defense".into()));
    }
    d.check_dim(x)?;
    Ok(d.vote(x))
}

/// Counts test rows whose label is (agree) or is not (disagree) preserved
/// by inversion.
pub fn invariance_report<S: Scalar>(model: &Ensemble<S>, test: &Dataset<S>) -> Result<(usize, usize)> {
    if test.n_features() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: test.n_features(),
        });
    }
    let disagree = test
        .rows()
        .filter(|x| model.label_of(x) != model.label_of(&invert(x)))
        .count();
    Ok((test.n_rows() - disagree, disagree))
}

#[derive(Serialize)]
struct DefendedOut<'a> {
    policy: &'a str,
    image_shape: Option<ImageShape>,
    model: &'a RawValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    inverted_model: Option<&'a RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DefendedIn {
    policy: String,
    image_shape: Option<ImageShape>,
    model: Box<RawValue>,
    inverted_model: Option<Box<RawValue>>,
}

fn raw(bytes: Vec<u8>) -> Box<RawValue> {
    let s = String::from_utf8(bytes).expect("model JSON is UTF-8");
    RawValue::from_string(s).expect("model JSON is valid")
}

impl<S: Scalar> DefendedClassifier<S> {
    /// JSON with the policy tag next to the embedded model(s).
    pub fn to_json(&self) -> Vec<u8> {
        let model = raw(gbdt::serialize(&self.model));
        let inverted = match &self.policy {
            Policy::ZeroKnowledgeTwoModels { inverted_model } => Some(raw(gbdt::serialize(inverted_model))),
            _ => None,
        };
        let out = DefendedOut {
            policy: self.policy.name(),
            image_shape: self.image_shape,
            model: &model,
            inverted_model: inverted.as_deref(),
        };
        serde_json::to_vec_pretty(&out).expect("serializable")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let d: DefendedIn = serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
        let model = gbdt::deserialize(d.model.get().as_bytes())?;
        let policy = match (d.policy.as_str(), d.inverted_model) {
            ("zk-single", None) => Policy::ZeroKnowledgeInvert,
            ("pk-group", None) => Policy::PerfectKnowledgeGroup,
            ("zk-two", Some(inv)) => Policy::ZeroKnowledgeTwoModels {
                inverted_model: gbdt::deserialize(inv.get().as_bytes())?,
            },
            (p, _) => return Err(Error::Schema(format!("bad policy {p:?} or model set"))),
        };
        Self::new(model, policy, d.image_shape)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }
}

impl<S> fmt::Display for Policy<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NormalizationSpec;
    use crate::gbdt::{Objective, Tree};

    fn stump(t: f64) -> Ensemble<f64> {
        Ensemble::new(
            vec![Tree::stump(0, t, -1.0, 1.0, 0)],
            2,
            1,
            Objective::BinaryLogistic,
            0.0,
            NormalizationSpec::identity(1),
        )
        .unwrap()
    }

    /// Class 0 on k/16 for k <= 5, class 1 for k >= 7; dyadic values keep
    /// the split midpoints exact (0.375 and, inverted, 0.625).
    fn toy() -> Dataset<f64> {
        let ks: Vec<u32> = (1..=5).chain(7..=15).collect();
        let rows: Vec<Vec<f64>> = ks.iter().map(|&k| vec![f64::from(k) / 16.0]).collect();
        let labels = ks.iter().map(|&k| usize::from(k >= 7)).collect();
        Dataset::from_rows(&rows, labels, 2, None).unwrap()
    }

    #[test]
    fn vote_rules() {
        assert_eq!(GroupVote::from_labels([0, 0, 1, 2]).decided, 0);
        let v = GroupVote::from_labels([3, 1, 1, 2]);
        assert_eq!((v.decided, v.agreed), (1, true));
        let v = GroupVote::from_labels([0, 1, 0, 1]);
        assert_eq!((v.decided, v.agreed), (0, true));
        let v = GroupVote::from_labels([1, 0, 0, 1]);
        assert_eq!(v.decided, 1);
        let v = GroupVote::from_labels([0, 1, 2, 3]);
        assert_eq!((v.decided, v.agreed), (0, false));
    }

    #[test]
    fn zero_knowledge_inverts_first() {
        let d = DefendedClassifier::new(stump(0.5), Policy::ZeroKnowledgeInvert, None).unwrap();
        // invert(0.2) = 0.8 routes right
        assert_eq!(classify_zero_knowledge(&d, &[0.2]).unwrap(), 1);
        assert_eq!(classify_zero_knowledge(&d, &[0.5]).unwrap(), d.model().predict_label(&[0.5]).unwrap());
        assert!(classify_perfect_knowledge(&d, &[0.2]).is_err());
        assert!(classify_zero_knowledge(&d, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn single_variant_trains_on_doubled_set() {
        let d = train_zero_knowledge(&toy(), &TrainConfig::new(3, 2), ZkVariant::Single).unwrap();
        assert_eq!(d.policy(), &Policy::ZeroKnowledgeInvert);
        for v in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let l = d.model().predict_label(&[1.0 - v]).unwrap();
            assert_eq!(d.predict_label(&[v]).unwrap(), l);
        }
    }

    #[test]
    fn two_models_mirror_thresholds_but_not_ties() {
        let d = train_zero_knowledge(&toy(), &TrainConfig::new(1, 1), ZkVariant::TwoModels).unwrap();
        let Policy::ZeroKnowledgeTwoModels { inverted_model } = d.policy() else {
            panic!("wrong policy");
        };
        let t = d.model().thresholds_per_feature()[&0][0];
        let ti = inverted_model.thresholds_per_feature()[&0][0];
        assert_eq!((t, ti), (0.375, 0.625));
        let x = [t];
        assert_ne!(d.model().predict_label(&x).unwrap(), d.predict_label(&x).unwrap());
    }

    #[test]
    fn group_policy_needs_shape() {
        assert!(matches!(
            DefendedClassifier::new(stump(0.5), Policy::PerfectKnowledgeGroup, None),
            Err(Error::MissingImageShape(_))
        ));
        assert!(train_perfect_knowledge(&toy(), &TrainConfig::new(1, 1)).is_err());
    }

    #[test]
    fn invariance_of_constant_model() {
        let e = Ensemble::new(
            vec![Tree::leaf(0.3, 0)],
            2,
            1,
            Objective::BinaryLogistic,
            0.0,
            NormalizationSpec::identity(1),
        )
        .unwrap();
        assert_eq!(invariance_report(&e, &toy()).unwrap(), (14, 0));
        // only the fixed point 0.5 keeps its side
        assert_eq!(invariance_report(&stump(0.5), &toy()).unwrap(), (1, 13));
    }

    #[test]
    fn json_round_trip() {
        let d = train_zero_knowledge(&toy(), &TrainConfig::new(2, 1), ZkVariant::TwoModels).unwrap();
        let back = DefendedClassifier::<f64>::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        let bad = br#"{"policy":"zk-two","image_shape":null,"model":{}}"#;
        assert!(DefendedClassifier::<f64>::from_json(bad).is_err());
    }
}
