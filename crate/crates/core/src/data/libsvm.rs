use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Dataset, LabelMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reads a LIBSVM text file (`<label> <idx>:<val> ...`, 1-based indices)
/// into a dense dataset. Values are not normalized.
pub fn load_libsvm<S: Scalar>(
    path: impl AsRef<Path>,
    n_features: usize,
    label_map: &LabelMap,
) -> Result<Dataset<S>> {
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), n_features, label_map)
}

pub fn parse_libsvm<S: Scalar, R: BufRead>(
    reader: R,
    n_features: usize,
    label_map: &LabelMap,
) -> Result<Dataset<S>> {
    if n_features == 0 {
        return Err(Error::Config("n_features must be positive".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        if line.contains('#') {
            return Err(parse_err("comments are not supported".into()));
        }
        let mut tokens = line.split_whitespace();
        let raw = tokens.next().expect("non-empty line has a token");
        let raw_value: f64 = raw
            .parse()
            .map_err(|_| parse_err(format!("bad label {raw:?}")))?;
        if raw_value.fract() != 0.0 || !raw_value.is_finite() {
            return Err(parse_err(format!("label {raw:?} is not an integer")));
        }
        let start = features.len();
        features.resize(start + n_features, S::zero());
        let mut last_index = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(format!("expected idx:val, got {tok:?}")))?;
            let index: usize = idx
                .parse()
                .map_err(|_| parse_err(format!("bad feature index {idx:?}")))?;
            if index == 0 {
                return Err(parse_err("feature indices are 1-based".into()));
            }
            if index <= last_index {
                return Err(parse_err(format!(
                    "feature index {index} not strictly increasing"
                )));
            }
            if index > n_features {
                return Err(Error::FeatureIndex {
                    line: line_no,
                    index,
                    n_features,
                });
            }
            let v: f64 = val
                .parse()
                .map_err(|_| parse_err(format!("bad feature value {val:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite feature value {val:?}")));
            }
            features[start + index - 1] = S::lit(v);
            last_index = index;
        }
        // Mapped after the features so malformed tokens report first.
        let label = label_map
            .map(raw_value as i64)
            .ok_or_else(|| Error::UnknownLabel {
                line: line_no,
                label: raw.to_string(),
            })?;
        labels.push(label);
    }
    Dataset::new(features, labels, n_features, label_map.n_classes(), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, n: usize) -> Result<Dataset<f64>> {
        parse_libsvm(text.as_bytes(), n, &LabelMap::Identity { n_classes: 2 })
    }

    #[test]
    fn fills_missing_with_zero() {
        let d = parse("1 1:0.5 3:0.25\n", 4).unwrap();
        assert_eq!(d.row(0), &[0.5, 0.0, 0.25, 0.0]);
        assert_eq!(d.labels(), &[1]);
    }

    #[test]
    fn malformed_token_reports_line() {
        let err = parse("5 2:abc\n", 4).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse("1 1:0.5\n0 2:abc\n", 4).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn index_bounds_and_order() {
        assert!(matches!(
            parse("1 5:1\n", 4).unwrap_err(),
            Error::FeatureIndex { index: 5, .. }
        ));
        assert!(matches!(parse("1 2:1 2:1\n", 4).unwrap_err(), Error::Parse { .. }));
        assert!(matches!(parse("1 0:1\n", 4).unwrap_err(), Error::Parse { .. }));
        assert!(matches!(parse("1 1:1 # note\n", 4).unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn label_mapping() {
        let map: LabelMap = "2:0,4:1".parse().unwrap();
        let d: Dataset<f64> = parse_libsvm("2 1:1\n4 1:2\n".as_bytes(), 1, &map).unwrap();
        assert_eq!(d.labels(), &[0, 1]);
        let err = parse_libsvm::<f64, _>("3 1:1\n".as_bytes(), 1, &map).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { line: 1, .. }));
        let d: Dataset<f64> =
            parse_libsvm("+1 1:1\n-1 1:2\n".as_bytes(), 1, &LabelMap::signed_binary()).unwrap();
        assert_eq!(d.labels(), &[1, 0]);
    }
}
