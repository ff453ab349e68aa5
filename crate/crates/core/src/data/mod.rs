//! Datasets, LIBSVM ingestion, min-max normalization and the
//! invert/flip symmetry group used for augmentation and defense.

mod augment;
mod libsvm;
mod normalize;
mod symmetry;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use augment::augment;
pub use libsvm::{load_libsvm, parse_libsvm};
pub use normalize::{apply_normalizer, fit_global_normalizer, fit_normalizer, NormalizationSpec};
pub use symmetry::{apply_symmetry, apply_symmetry_into, compose, hflip, invert, SymmetryElement};

/// Row-major image geometry of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, n_features: usize) -> Result<()> {
        if self.len() != n_features {
            return Err(Error::ShapeMismatch {
                height: self.height,
                width: self.width,
                n_features,
            });
        }
        Ok(())
    }
}

impl fmt::Display for ImageShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for ImageShape {
    type Err = Error;

    /// Parses `HxW`, e.g. `28x28`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("image shape must look like HxW, got {s:?}"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let height = h.trim().parse().map_err(|_| bad())?;
        let width = w.trim().parse().map_err(|_| bad())?;
        if height == 0 || width == 0 {
            return Err(bad());
        }
        Ok(Self { height, width })
    }
}

/// Mapping from raw on-disk labels to class indices `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelMap {
    /// Raw labels already are class indices.
    Identity { n_classes: usize },
    Explicit(BTreeMap<i64, usize>),
}

impl LabelMap {
    /// `{-1 -> 0, +1 -> 1}`.
    pub fn signed_binary() -> Self {
        LabelMap::Explicit([(-1, 0), (1, 1)].into_iter().collect())
    }

    pub fn n_classes(&self) -> usize {
        match self {
            LabelMap::Identity { n_classes } => *n_classes,
            LabelMap::Explicit(m) => m.values().max().map_or(0, |&v| v + 1).max(2),
        }
    }

    pub fn map(&self, raw: i64) -> Option<usize> {
        match self {
            LabelMap::Identity { n_classes } => {
                usize::try_from(raw).ok().filter(|&v| v < *n_classes)
            }
            LabelMap::Explicit(m) => m.get(&raw).copied(),
        }
    }
}

impl FromStr for LabelMap {
    type Err = Error;

    /// Parses `raw:class,raw:class,...`, or `identity:N`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("label map {s:?}: {why}"));
        if let Some(n) = s.strip_prefix("identity:") {
            let n_classes = n.trim().parse().map_err(|_| bad("bad class count"))?;
            if n_classes < 2 {
                return Err(bad("need at least two classes"));
            }
            return Ok(LabelMap::Identity { n_classes });
        }
        let mut m = BTreeMap::new();
        for pair in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (raw, class) = pair.split_once(':').ok_or_else(|| bad("expected raw:class"))?;
            let raw: i64 = raw.trim().trim_start_matches('+').parse().map_err(|_| bad("raw label"))?;
            let class: usize = class.trim().parse().map_err(|_| bad("class index"))?;
            m.insert(raw, class);
        }
        if m.is_empty() {
            return Err(bad("empty"));
        }
        Ok(LabelMap::Explicit(m))
    }
}

/// Dense feature matrix with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    features: Vec<S>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    image_shape: Option<ImageShape>,
}

impl<S: Scalar> Dataset<S> {
    /// `features` is row-major with `n_features` columns.
    pub fn new(
        features: Vec<S>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
        image_shape: Option<ImageShape>,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Config("n_features must be positive".into()));
        }
        if n_classes < 2 {
            return Err(Error::Config("n_classes must be at least 2".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                got: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        if let Some(shape) = &image_shape {
            shape.check(n_features)?;
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
            image_shape,
        })
    }

    pub fn from_rows(
        rows: &[Vec<S>],
        labels: Vec<usize>,
        n_classes: usize,
        image_shape: Option<ImageShape>,
    ) -> Result<Self> {
        let n_features = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        if let Some(r) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: r.len(),
            });
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, labels, n_features, n_classes, image_shape)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image_shape
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn features(&self) -> &[S] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[S]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn with_image_shape(mut self, shape: Option<ImageShape>) -> Result<Self> {
        if let Some(s) = &shape {
            s.check(self.n_features)?;
        }
        self.image_shape = shape;
        Ok(self)
    }

    /// First `n` rows in file order.
    pub fn prefix(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.n_rows())).collect::<Vec<_>>())
    }

    /// Rows at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            n_features: self.n_features,
            n_classes: self.n_classes,
            image_shape: self.image_shape,
        }
    }

    /// Number of rows per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub(crate) fn from_parts_unchecked(
        features: Vec<S>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
        image_shape: Option<ImageShape>,
    ) -> Self {
        debug_assert_eq!(features.len(), labels.len() * n_features);
        Self {
            features,
            labels,
            n_features,
            n_classes,
            image_shape,
        }
    }
}

/// Pools `train` and `test`, shuffles with `seed`, and splits back into
/// parts of the original sizes. Used to vary the split across seeds.
pub fn reshuffle_split<S: Scalar>(
    train: &Dataset<S>,
    test: &Dataset<S>,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if train.n_features != test.n_features {
        return Err(Error::DimensionMismatch {
            expected: train.n_features,
            got: test.n_features,
        });
    }
    let mut features = train.features.clone();
    features.extend_from_slice(&test.features);
    let mut labels = train.labels.clone();
    labels.extend_from_slice(&test.labels);
    let pooled = Dataset::from_parts_unchecked(
        features,
        labels,
        train.n_features,
        train.n_classes.max(test.n_classes),
        train.image_shape,
    );
    let mut order: Vec<usize> = (0..pooled.n_rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = order.split_at(train.n_rows());
    Ok((pooled.select(a), pooled.select(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shapes() {
        let err = Dataset::<f64>::new(vec![0.0; 5], vec![0, 1], 2, 2, None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = Dataset::<f64>::new(vec![0.0; 4], vec![0, 1], 2, 2, Some(ImageShape::new(3, 1)))
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        let err = Dataset::<f64>::new(vec![0.0; 4], vec![0, 2], 2, 2, None).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, .. }));
    }

    #[test]
    fn parses_image_shape_and_label_map() {
        assert_eq!("28x28".parse::<ImageShape>().unwrap(), ImageShape::new(28, 28));
        assert!("28".parse::<ImageShape>().is_err());
        let m: LabelMap = "2:0,4:1".parse().unwrap();
        assert_eq!(m.map(2), Some(0));
        assert_eq!(m.map(4), Some(1));
        assert_eq!(m.map(3), None);
        assert_eq!(m.n_classes(), 2);
        let m: LabelMap = "-1:0,+1:1".parse().unwrap();
        assert_eq!(m, LabelMap::signed_binary());
        let m: LabelMap = "identity:4".parse().unwrap();
        assert_eq!(m.map(3), Some(3));
        assert_eq!(m.map(4), None);
    }

    #[test]
    fn reshuffle_keeps_sizes_and_rows() {
        let train = Dataset::<f64>::from_rows(
            &[vec![0.0], vec![0.1], vec![0.2]],
            vec![0, 0, 1],
            2,
            None,
        )
        .unwrap();
        let test = Dataset::<f64>::from_rows(&[vec![0.3], vec![0.4]], vec![1, 1], 2, None).unwrap();
        let (a, b) = reshuffle_split(&train, &test, 7).unwrap();
        assert_eq!(a.n_rows(), 3);
        assert_eq!(b.n_rows(), 2);
        let mut all: Vec<f64> = a.features().iter().chain(b.features()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
    }
}
