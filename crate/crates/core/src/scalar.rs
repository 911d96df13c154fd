//! Scalar abstractions.
//!
//! Floating-point work (eigenvalues, the barrier solver) is generic over
//! [`Real`], implemented for `f32` and `f64`. Exact work on commutative
//! instances (simplex, Farkas certificates, rational elimination) is generic
//! over [`Field`], implemented for `BigRational` and, for cross-checks, `f64`.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::RealField;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Real floating-point scalar usable by the dense Hermitian kernel.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Display {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used by the exact linear-programming path.
pub trait Field:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Signed
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Exact (for rationals) conversion of a finite `f64`.
    fn from_f64_exact(x: f64) -> Self;
    fn to_f64_lossy(&self) -> f64;

    /// Magnitude below which pivots and reduced costs count as zero.
    fn pivot_tol() -> Self {
        Self::zero()
    }
}

impl Field for BigRational {
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or_else(|| {
            // fall back on the integer parts for very large magnitudes
            let n = self.numer().to_f64().unwrap_or(f64::NAN);
            let d = self.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }
}

impl Field for f64 {
    fn from_f64_exact(x: f64) -> Self {
        x
    }

    fn pivot_tol() -> Self {
        1e-9
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

/// `p/q` as a `BigRational`.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Render a rational as `p/q` (or `p` when integral).
pub fn rational_to_string(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse `p/q` or `p`.
pub fn rational_from_str(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                return None;
            }
            Some(BigRational::new(p, q))
        }
        None => Some(BigRational::from_integer(s.parse().ok()?)),
    }
}

/// Serde adapters for `BigRational` values (as `"p/q"` strings).
pub mod serde_rational {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rational_to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        rational_from_str(&s).ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}")))
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for r in v {
                seq.serialize_element(&rational_to_string(r))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
            let v = Vec::<String>::deserialize(d)?;
            v.iter()
                .map(|s| {
                    rational_from_str(s)
                        .ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}")))
                })
                .collect()
        }
    }

    pub mod vec_vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[Vec<BigRational>], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for row in v {
                let row: Vec<String> = row.iter().map(rational_to_string).collect();
                seq.serialize_element(&row)?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Vec<Vec<BigRational>>, D::Error> {
            let v = Vec::<Vec<String>>::deserialize(d)?;
            v.iter()
                .map(|row| {
                    row.iter()
                        .map(|s| {
                            rational_from_str(s).ok_or_else(|| {
                                serde::de::Error::custom(format!("bad rational {s:?}"))
                            })
                        })
                        .collect()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_float_conversion() {
        assert_eq!(BigRational::from_f64_exact(0.5), ratio(1, 2));
        assert_eq!(BigRational::from_f64_exact(-3.0), ratio(-3, 1));
        assert_eq!(BigRational::from_f64_exact(0.125), ratio(1, 8));
    }

    #[test]
    fn rational_strings() {
        assert_eq!(rational_to_string(&ratio(3, 2)), "3/2");
        assert_eq!(rational_to_string(&ratio(-4, 2)), "-2");
        assert_eq!(rational_from_str("-1/2"), Some(ratio(-1, 2)));
        assert_eq!(rational_from_str("7"), Some(ratio(7, 1)));
        assert_eq!(rational_from_str("1/0"), None);
    }
}
