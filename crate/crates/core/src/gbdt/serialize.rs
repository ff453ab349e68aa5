//! JSON model file. Floats are written with 17 significant digits so
//! every `f64` threshold and score reads back bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Ensemble, Node, Objective, Tree};
use crate::data::NormalizationSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// Float written as a raw JSON number with full precision.
#[derive(Serialize)]
#[serde(transparent)]
struct Exact(Box<RawValue>);

impl Exact {
    fn new<S: Scalar>(v: S) -> Self {
        let text = format!("{:.16e}", v.as_f64());
        Exact(RawValue::from_string(text).expect("formatted float is valid JSON"))
    }
}

#[derive(Serialize)]
struct ModelOut {
    format_version: u32,
    objective: Objective,
    n_classes: usize,
    n_features: usize,
    base_score: Exact,
    normalizer: NormalizerOut,
    trees: Vec<TreeOut>,
}

#[derive(Serialize)]
struct NormalizerOut {
    mins: Vec<Exact>,
    maxs: Vec<Exact>,
    constant_fill: Exact,
}

#[derive(Serialize)]
struct TreeOut {
    class_index: usize,
    nodes: Vec<NodeOut>,
}

#[derive(Serialize)]
struct NodeOut {
    id: usize,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<Exact>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelIn {
    format_version: u32,
    objective: Objective,
    n_classes: usize,
    n_features: usize,
    base_score: f64,
    normalizer: NormalizerIn,
    trees: Vec<TreeIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizerIn {
    mins: Vec<f64>,
    maxs: Vec<f64>,
    #[serde(default)]
    constant_fill: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeIn {
    class_index: usize,
    nodes: Vec<NodeIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeIn {
    id: usize,
    kind: String,
    feature: Option<usize>,
    threshold: Option<f64>,
    left: Option<usize>,
    right: Option<usize>,
    score: Option<f64>,
}

pub fn serialize<S: Scalar>(ens: &Ensemble<S>) -> Vec<u8> {
    let norm = ens.normalizer();
    let model = ModelOut {
        format_version: FORMAT_VERSION,
        objective: ens.objective(),
        n_classes: ens.n_classes(),
        n_features: ens.n_features(),
        base_score: Exact::new(ens.base_score()),
        normalizer: NormalizerOut {
            mins: norm.mins().iter().map(|&v| Exact::new(v)).collect(),
            maxs: norm.maxs().iter().map(|&v| Exact::new(v)).collect(),
            constant_fill: Exact::new(norm.constant_fill()),
        },
        trees: ens
            .trees()
            .iter()
            .map(|t| TreeOut {
                class_index: t.class_index(),
                nodes: t
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(id, node)| match *node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => NodeOut {
                            id,
                            kind: "split",
                            feature: Some(feature),
                            threshold: Some(Exact::new(threshold)),
                            left: Some(left),
                            right: Some(right),
                            score: None,
                        },
                        Node::Leaf { score } => NodeOut {
                            id,
                            kind: "leaf",
                            feature: None,
                            threshold: None,
                            left: None,
                            right: None,
                            score: Some(Exact::new(score)),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_vec_pretty(&model).expect("model serializes")
}

pub fn deserialize<S: Scalar>(bytes: &[u8]) -> Result<Ensemble<S>> {
    let model: ModelIn =
        serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
    if model.format_version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported format_version {}",
            model.format_version
        )));
    }
    let cast = |v: f64| -> Result<S> {
        S::from_f64(v).ok_or_else(|| Error::Schema(format!("value {v} not representable")))
    };
    let cast_all = |vs: &[f64]| vs.iter().map(|&v| cast(v)).collect::<Result<Vec<S>>>();
    let normalizer = NormalizationSpec::new(
        cast_all(&model.normalizer.mins)?,
        cast_all(&model.normalizer.maxs)?,
    )
    .map_err(|e| Error::Schema(format!("normalizer: {e}")))?
    .with_constant_fill(cast(model.normalizer.constant_fill)?);

    let mut trees = Vec::with_capacity(model.trees.len());
    for (t, tree) in model.trees.into_iter().enumerate() {
        let n = tree.nodes.len();
        let mut slots: Vec<Option<Node<S>>> = vec![None; n];
        for node in tree.nodes {
            let at = |what: &str| Error::Schema(format!("tree {t} node {}: {what}", node.id));
            if node.id >= n {
                return Err(at("id out of range"));
            }
            let built = match node.kind.as_str() {
                "split" => {
                    if node.score.is_some() {
                        return Err(at("split node with a score"));
                    }
                    Node::Split {
                        feature: node.feature.ok_or_else(|| at("missing feature"))?,
                        threshold: cast(node.threshold.ok_or_else(|| at("missing threshold"))?)?,
                        left: node.left.ok_or_else(|| at("missing left"))?,
                        right: node.right.ok_or_else(|| at("missing right"))?,
                    }
                }
                "leaf" => {
                    if node.feature.is_some() || node.left.is_some() || node.right.is_some() {
                        return Err(at("leaf node with split fields"));
                    }
                    Node::Leaf {
                        score: cast(node.score.ok_or_else(|| at("missing score"))?)?,
                    }
                }
                other => return Err(at(&format!("unknown kind {other:?}"))),
            };
            if slots[node.id].replace(built).is_some() {
                return Err(at("duplicate id"));
            }
        }
        let nodes = slots
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Schema(format!("tree {t}: node ids are not contiguous")))?;
        trees.push(Tree::new(nodes, tree.class_index)?);
    }
    Ensemble::new(
        trees,
        model.n_classes,
        model.n_features,
        model.objective,
        cast(model.base_score)?,
        normalizer,
    )
}

pub fn save_model<S: Scalar>(ens: &Ensemble<S>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize(ens))?;
    Ok(())
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<Ensemble<S>> {
    deserialize(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Ensemble<f64> {
        let t = Tree::new(
            vec![
                Node::Split { feature: 1, threshold: 0.1 + 0.2, left: 1, right: 2 },
                Node::Leaf { score: -1.0 / 3.0 },
                Node::Split { feature: 0, threshold: 0.7, left: 3, right: 4 },
                Node::Leaf { score: 2.0f64.sqrt() },
                Node::Leaf { score: 1e-300 },
            ],
            0,
        )
        .unwrap();
        Ensemble::new(
            vec![t, Tree::leaf(0.125, 0)],
            2,
            2,
            Objective::BinaryLogistic,
            0.0,
            NormalizationSpec::new(vec![1.0, -3.5], vec![7.25, 1.0 / 7.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let e = sample();
        let back: Ensemble<f64> = deserialize(&serialize(&e)).unwrap();
        assert_eq!(back, e);
        assert_eq!(serialize(&back), serialize(&e));
    }

    #[test]
    fn missing_objective_is_a_schema_error() {
        let mut v: serde_json::Value = serde_json::from_slice(&serialize(&sample())).unwrap();
        v.as_object_mut().unwrap().remove("objective");
        let err = deserialize::<f64>(v.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("objective")), "{err}");
    }

    #[test]
    fn rejects_broken_trees() {
        let text = String::from_utf8(serialize(&sample())).unwrap();
        let broken = text.replacen("\"left\": 3", "\"left\": 9", 1);
        assert!(matches!(deserialize::<f64>(broken.as_bytes()), Err(Error::Schema(_))));
        let broken = text.replacen("\"kind\": \"leaf\"", "\"kind\": \"stem\"", 1);
        assert!(matches!(deserialize::<f64>(broken.as_bytes()), Err(Error::Schema(_))));
    }
}
