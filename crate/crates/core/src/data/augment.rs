use super::{apply_symmetry_into, Dataset, SymmetryElement};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Expands every row into its symmetric variants.
///
/// Output order is symmetry-major within each source row: all variants of
/// row 0 (in the order given), then row 1, and so on. Each variant keeps the
/// label of its source row. `Id` must be present.
pub fn augment<S: Scalar>(data: &Dataset<S>, symmetries: &[SymmetryElement]) -> Result<Dataset<S>> {
    if !symmetries.contains(&SymmetryElement::Id) {
        return Err(Error::Config(
            "augmentation must keep the original samples (Id)".into(),
        ));
    }
    for (i, s) in symmetries.iter().enumerate() {
        if symmetries[..i].contains(s) {
            return Err(Error::Config(format!("symmetry {s} listed twice")));
        }
    }
    if symmetries.iter().any(|s| s.flips()) && data.image_shape().is_none() {
        return Err(Error::MissingImageShape("flip augmentation"));
    }
    let k = symmetries.len();
    let mut features = Vec::with_capacity(data.features().len() * k);
    let mut labels = Vec::with_capacity(data.n_rows() * k);
    for (row, &label) in data.rows().zip(data.labels()) {
        for &s in symmetries {
            apply_symmetry_into(row, s, data.image_shape(), &mut features)?;
            labels.push(label);
        }
    }
    Ok(Dataset::from_parts_unchecked(
        features,
        labels,
        data.n_features(),
        data.n_classes(),
        data.image_shape(),
    ))
}

#[cfg(test)]
mod tests {
    use super::SymmetryElement::*;
    use super::*;
    use crate::data::ImageShape;

    fn three_rows() -> Dataset<f64> {
        Dataset::from_rows(
            &[vec![0.0, 0.25], vec![0.5, 0.75], vec![1.0, 0.5]],
            vec![0, 1, 1],
            2,
            Some(ImageShape::new(1, 2)),
        )
        .unwrap()
    }

    #[test]
    fn identity_only_is_a_copy() {
        let d = three_rows();
        assert_eq!(augment(&d, &[Id]).unwrap(), d);
    }

    #[test]
    fn four_symmetries_quadruple_rows() {
        let d = three_rows();
        let a = augment(&d, &[Id, Invert, Flip, InvertFlip]).unwrap();
        assert_eq!(a.n_rows(), 12);
        assert_eq!(a.row(1), &[1.0, 0.75]);
        assert_eq!(a.row(2), &[0.25, 0.0]);
        assert_eq!(a.row(3), &[0.75, 1.0]);
        assert_eq!(&a.labels()[4..8], &[1, 1, 1, 1]);
        let counts = a.class_counts();
        assert_eq!(counts, vec![4, 8]);
    }

    #[test]
    fn rejects_bad_sets() {
        let d = three_rows();
        assert!(augment(&d, &[Invert]).is_err());
        assert!(augment(&d, &[Id, Id]).is_err());
        let no_shape = d.clone().with_image_shape(None).unwrap();
        assert!(matches!(
            augment(&no_shape, &[Id, Flip]),
            Err(Error::MissingImageShape(_))
        ));
    }
}
