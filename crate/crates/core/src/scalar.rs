//! Floating point abstraction shared by every numerical module.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Real scalar used throughout the crate: `f32` or `f64`.
pub trait Scalar: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts an integer into the working scalar.
#[inline]
pub fn int<T: Scalar>(n: i64) -> T {
    T::from_i64(n).expect("integer representable in scalar type")
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Surface area of the unit sphere in R^N, 2 pi^{N/2} / Gamma(N/2).
pub fn sphere_area<T: Scalar>(dim: u32) -> T {
    // Gamma(N/2) through the half-integer recursion.
    let half = |k: u32| -> f64 {
        if k % 2 == 0 {
            (1..k / 2).map(|j| j as f64).product::<f64>()
        } else {
            let mut g = std::f64::consts::PI.sqrt();
            let mut x = 0.5;
            while x < k as f64 / 2.0 - 0.25 {
                g *= x;
                x += 1.0;
            }
            g
        }
    };
    let n = dim as f64;
    lit(2.0 * std::f64::consts::PI.powf(n / 2.0) / half(dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas_match_known_values() {
        let pi = std::f64::consts::PI;
        assert!((sphere_area::<f64>(2) - 2.0 * pi).abs() < 1e-14);
        assert!((sphere_area::<f64>(3) - 4.0 * pi).abs() < 1e-13);
        assert!((sphere_area::<f64>(4) - 2.0 * pi * pi).abs() < 1e-13);
        assert!((sphere_area::<f64>(5) - 8.0 * pi * pi / 3.0).abs() < 1e-12);
        assert!((sphere_area::<f64>(6) - pi.powi(3)).abs() < 1e-12);
    }
}
