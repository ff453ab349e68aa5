use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the models, transforms and attacks are generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Offset used to place a point strictly below an exclusive upper bound.
    const BOUNDARY_EPS: f64;

    /// Converts an `f64` constant. Panics only for values the type cannot hold.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    /// Largest value of this type that routes left of threshold `t`
    /// (`v < t`), i.e. `t - BOUNDARY_EPS`, falling back to the next
    /// representable value below `t` when the offset underflows.
    fn below(t: Self) -> Self {
        let b = t - Self::lit(Self::BOUNDARY_EPS);
        if b < t {
            b
        } else {
            t.next_down()
        }
    }

    /// Adjacent representable value toward negative infinity (finite, positive inputs).
    fn next_down(self) -> Self;
}

impl Scalar for f64 {
    const BOUNDARY_EPS: f64 = 1e-9;

    fn next_down(self) -> Self {
        if self == 0.0 {
            -f64::from_bits(1)
        } else if self > 0.0 {
            f64::from_bits(self.to_bits() - 1)
        } else {
            f64::from_bits(self.to_bits() + 1)
        }
    }
}

impl Scalar for f32 {
    // 1e-9 is below the f32 spacing near 1.0
    const BOUNDARY_EPS: f64 = 1e-6;

    fn next_down(self) -> Self {
        if self == 0.0 {
            -f32::from_bits(1)
        } else if self > 0.0 {
            f32::from_bits(self.to_bits() - 1)
        } else {
            f32::from_bits(self.to_bits() + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_is_strictly_smaller() {
        for t in [0.5f64, 1.0, 1e-3, 0.999_999_999_9] {
            assert!(f64::below(t) < t);
        }
        for t in [0.5f32, 1.0, 1e-3, 0.999_999] {
            assert!(f32::below(t) < t);
        }
        assert_eq!(f64::below(0.5), 0.5 - 1e-9);
    }

    #[test]
    fn next_down_is_adjacent() {
        let t = 0.75f32;
        let d = t.next_down();
        assert!(d < t);
        assert_eq!(d.to_bits() + 1, t.to_bits());
    }
}
