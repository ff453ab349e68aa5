use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ImageShape;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Element of the Klein four-group generated by feature inversion
/// (`a -> 1 - a`) and horizontal image flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryElement {
    Id,
    Invert,
    Flip,
    InvertFlip,
}

impl SymmetryElement {
    /// Fixed order used by the group vote: Id, Flip, Invert, InvertFlip.
    pub const VOTE_ORDER: [SymmetryElement; 4] = [
        SymmetryElement::Id,
        SymmetryElement::Flip,
        SymmetryElement::Invert,
        SymmetryElement::InvertFlip,
    ];

    pub fn inverts(self) -> bool {
        matches!(self, SymmetryElement::Invert | SymmetryElement::InvertFlip)
    }

    pub fn flips(self) -> bool {
        matches!(self, SymmetryElement::Flip | SymmetryElement::InvertFlip)
    }

    fn from_bits(invert: bool, flip: bool) -> Self {
        match (invert, flip) {
            (false, false) => SymmetryElement::Id,
            (true, false) => SymmetryElement::Invert,
            (false, true) => SymmetryElement::Flip,
            (true, true) => SymmetryElement::InvertFlip,
        }
    }

    /// Every element is an involution.
    pub fn inverse(self) -> Self {
        self
    }

    pub fn name(self) -> &'static str {
        match self {
            SymmetryElement::Id => "id",
            SymmetryElement::Invert => "invert",
            SymmetryElement::Flip => "flip",
            SymmetryElement::InvertFlip => "invert_flip",
        }
    }
}

impl fmt::Display for SymmetryElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SymmetryElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "id" | "orig" => Ok(SymmetryElement::Id),
            "invert" | "inv" => Ok(SymmetryElement::Invert),
            "flip" => Ok(SymmetryElement::Flip),
            "invert_flip" | "flinv" | "invertflip" => Ok(SymmetryElement::InvertFlip),
            _ => Err(Error::Config(format!("unknown symmetry {s:?}"))),
        }
    }
}

/// Group product; `compose(a, b)` applies `b` first, then `a`.
/// The group is abelian so the order does not matter.
pub fn compose(a: SymmetryElement, b: SymmetryElement) -> SymmetryElement {
    SymmetryElement::from_bits(a.inverts() ^ b.inverts(), a.flips() ^ b.flips())
}

/// `1 - a` for every feature.
pub fn invert<S: Scalar>(sample: &[S]) -> Vec<S> {
    debug_assert!(
        sample.iter().all(|&v| v >= S::zero() && v <= S::one()),
        "inversion expects features in [0, 1]"
    );
    sample.iter().map(|&v| S::one() - v).collect()
}

/// Mirrors each image row: pixel `(r, c)` moves to `(r, width - 1 - c)`.
pub fn hflip<S: Scalar>(sample: &[S], shape: ImageShape) -> Result<Vec<S>> {
    shape.check(sample.len())?;
    let mut out = sample.to_vec();
    for row in out.chunks_exact_mut(shape.width) {
        row.reverse();
    }
    Ok(out)
}

pub fn apply_symmetry<S: Scalar>(
    sample: &[S],
    s: SymmetryElement,
    shape: Option<ImageShape>,
) -> Result<Vec<S>> {
    let mut out = Vec::with_capacity(sample.len());
    apply_symmetry_into(sample, s, shape, &mut out)?;
    Ok(out)
}

/// Appends the transformed sample to `out`.
pub fn apply_symmetry_into<S: Scalar>(
    sample: &[S],
    s: SymmetryElement,
    shape: Option<ImageShape>,
    out: &mut Vec<S>,
) -> Result<()> {
    let start = out.len();
    if s.flips() {
        let shape = shape.ok_or(Error::MissingImageShape("flip symmetry"))?;
        shape.check(sample.len())?;
        for row in sample.chunks_exact(shape.width) {
            out.extend(row.iter().rev());
        }
    } else {
        out.extend_from_slice(sample);
    }
    if s.inverts() {
        for v in &mut out[start..] {
            *v = S::one() - *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::SymmetryElement::*;
    use super::*;

    #[test]
    fn invert_examples() {
        assert_eq!(invert(&[0.25f64, 1.0, 0.0]), vec![0.75, 0.0, 1.0]);
        let x = [0.3f64, 1.0, 0.0];
        let y = invert(&x);
        assert!((y[0] - 0.7).abs() < 1e-15);
        assert_eq!(invert(&[0.5f64; 4]), vec![0.5; 4]);
    }

    #[test]
    fn hflip_examples() {
        let s = ImageShape::new(1, 3);
        assert_eq!(hflip(&[1.0f64, 2.0, 3.0], s).unwrap(), vec![3.0, 2.0, 1.0]);
        let s = ImageShape::new(2, 2);
        assert_eq!(hflip(&[1.0f64, 2.0, 3.0, 4.0], s).unwrap(), vec![2.0, 1.0, 4.0, 3.0]);
        assert!(hflip(&[1.0f64, 2.0, 3.0], ImageShape::new(2, 2)).is_err());
    }

    #[test]
    fn apply_cases() {
        let x = [0.1f64, 0.2, 0.3, 0.4];
        let shape = Some(ImageShape::new(2, 2));
        assert_eq!(apply_symmetry(&x, Id, None).unwrap(), x.to_vec());
        let a = apply_symmetry(&x, InvertFlip, shape).unwrap();
        let b = invert(&hflip(&x, shape.unwrap()).unwrap());
        let c = hflip(&invert(&x), shape.unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let y = apply_symmetry(&[0.3f64], Invert, None).unwrap();
        assert!((y[0] - 0.7).abs() < 1e-15);
        assert!(matches!(
            apply_symmetry(&x, Flip, None),
            Err(Error::MissingImageShape(_))
        ));
    }

    #[test]
    fn composition_table() {
        assert_eq!(compose(Invert, Invert), Id);
        assert_eq!(compose(Invert, Flip), InvertFlip);
        assert_eq!(compose(InvertFlip, Flip), Invert);
        for a in SymmetryElement::VOTE_ORDER {
            assert_eq!(compose(a, Id), a);
            assert_eq!(compose(a, a.inverse()), Id);
        }
    }

    #[test]
    fn parses_names() {
        for s in SymmetryElement::VOTE_ORDER {
            assert_eq!(s.name().parse::<SymmetryElement>().unwrap(), s);
        }
    }
}
