use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature min/max used to map raw values onto `[0, 1]`.
///
/// Values outside the fitted range clamp to the unit interval. Features
/// with `min == max` map to `constant_fill` (0.0 unless overridden).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec<S> {
    per_feature_min: Vec<S>,
    per_feature_max: Vec<S>,
    constant_fill: S,
}

impl<S: Scalar> NormalizationSpec<S> {
    pub fn new(per_feature_min: Vec<S>, per_feature_max: Vec<S>) -> Result<Self> {
        if per_feature_min.len() != per_feature_max.len() {
            return Err(Error::DimensionMismatch {
                expected: per_feature_min.len(),
                got: per_feature_max.len(),
            });
        }
        if per_feature_min.is_empty() {
            return Err(Error::Config("normalizer needs at least one feature".into()));
        }
        if let Some(i) = per_feature_min
            .iter()
            .zip(&per_feature_max)
            .position(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::Config(format!("normalizer feature {i}: min must be <= max")));
        }
        Ok(Self {
            per_feature_min,
            per_feature_max,
            constant_fill: S::zero(),
        })
    }

    /// Pass-through spec for data already in `[0, 1]`.
    pub fn identity(n_features: usize) -> Self {
        Self {
            per_feature_min: vec![S::zero(); n_features],
            per_feature_max: vec![S::one(); n_features],
            constant_fill: S::zero(),
        }
    }

    pub fn with_constant_fill(mut self, fill: S) -> Self {
        self.constant_fill = fill.max(S::zero()).min(S::one());
        self
    }

    pub fn n_features(&self) -> usize {
        self.per_feature_min.len()
    }

    pub fn mins(&self) -> &[S] {
        &self.per_feature_min
    }

    pub fn maxs(&self) -> &[S] {
        &self.per_feature_max
    }

    pub fn constant_fill(&self) -> S {
        self.constant_fill
    }

    /// Normalizes a single raw feature vector.
    pub fn apply_row(&self, row: &[S]) -> Result<Vec<S>> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        let mut out = Vec::with_capacity(row.len());
        self.apply_into(row, &mut out);
        Ok(out)
    }

    fn apply_into(&self, row: &[S], out: &mut Vec<S>) {
        for ((&v, &lo), &hi) in row.iter().zip(&self.per_feature_min).zip(&self.per_feature_max) {
            let range = hi - lo;
            let z = if range > S::zero() {
                ((v - lo) / range).max(S::zero()).min(S::one())
            } else {
                self.constant_fill
            };
            out.push(z);
        }
    }
}

/// Per-feature min/max over the training rows.
pub fn fit_normalizer<S: Scalar>(train: &Dataset<S>) -> Result<NormalizationSpec<S>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = train.n_features();
    let mut mins = train.row(0).to_vec();
    let mut maxs = mins.clone();
    for row in train.rows().skip(1) {
        for j in 0..d {
            mins[j] = mins[j].min(row[j]);
            maxs[j] = maxs[j].max(row[j]);
        }
    }
    NormalizationSpec::new(mins, maxs)
}

/// One shared min/max over every feature, for image data where pixel
/// scaling must not depend on position (keeps the flip symmetry exact).
pub fn fit_global_normalizer<S: Scalar>(train: &Dataset<S>) -> Result<NormalizationSpec<S>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (lo, hi) = train
        .features()
        .iter()
        .fold((S::infinity(), S::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let d = train.n_features();
    NormalizationSpec::new(vec![lo; d], vec![hi; d])
}

pub fn apply_normalizer<S: Scalar>(
    spec: &NormalizationSpec<S>,
    data: &Dataset<S>,
) -> Result<Dataset<S>> {
    if spec.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_features(),
            got: data.n_features(),
        });
    }
    let mut features = Vec::with_capacity(data.features().len());
    for row in data.rows() {
        spec.apply_into(row, &mut features);
    }
    Ok(Dataset::from_parts_unchecked(
        features,
        data.labels().to_vec(),
        data.n_features(),
        data.n_classes(),
        data.image_shape(),
    ))
}
