//! Exact rational scalars and vectors.
//!
//! Every quantity in the decision and scheduling paths is a [`Rat`]; nothing
//! is ever rounded. Rationals travel through files as `"p/q"` strings or bare
//! integers.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Arbitrary precision rational, always kept in lowest terms.
pub type Rat = BigRational;

/// Shorthand constructor, `rat(3, 10)` is `3/10`.
pub fn rat(numer: i64, denom: i64) -> Rat {
    Rat::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rat {
    Rat::from_integer(BigInt::from(value))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRatError(pub String);

/// Parses `"p/q"`, `"-p/q"` or an integer literal.
pub fn parse_rat(text: &str) -> Result<Rat, ParseRatError> {
    let err = || ParseRatError(text.to_string());
    let text = text.trim();
    match text.split_once('/') {
        Some((p, q)) => {
            let p = BigInt::from_str(p.trim()).map_err(|_| err())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| err())?;
            if q.is_zero() {
                return Err(err());
            }
            Ok(Rat::new(p, q))
        }
        None => BigInt::from_str(text).map(Rat::from_integer).map_err(|_| err()),
    }
}

/// Canonical text form: `"p/q"`, or `"p"` when the denominator is one.
pub fn format_rat(value: &Rat) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Largest dyadic-scaled rational `r` with `r <= sqrt(value)`, using
/// `bits` fractional bits. Zero for non-positive input.
pub fn sqrt_lower_bound(value: &Rat, bits: u32) -> Rat {
    if !value.is_positive() {
        return Rat::zero();
    }
    // sqrt(p/q) = sqrt(p*q)/q
    let scale = BigInt::one() << bits;
    let radicand = value.numer() * value.denom() * &scale * &scale;
    Rat::new(radicand.sqrt(), value.denom() * scale)
}

/// Smallest multiple of `1/(denom·2^bits)` whose square is at least `value`.
pub fn sqrt_upper_bound(value: &Rat, bits: u32) -> Rat {
    let low = sqrt_lower_bound(value, bits);
    if &(&low * &low) >= value {
        return low;
    }
    let step = Rat::new(BigInt::one(), value.denom() * (BigInt::one() << bits));
    low + step
}

/// Serde adapter for a single rational as `"p/q"` or an integer.
pub mod serde_rat {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rat, s: S) -> Result<S::Ok, S::Error> {
        if value.denom().is_one() {
            if let Ok(small) = i64::try_from(value.numer().clone()) {
                return s.serialize_i64(small);
            }
        }
        s.serialize_str(&format_rat(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let raw = RawRat::deserialize(d)?;
        raw.into_rat().map_err(serde::de::Error::custom)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum RawRat {
        Int(i64),
        Text(String),
    }

    impl RawRat {
        pub(crate) fn into_rat(self) -> Result<Rat, ParseRatError> {
            match self {
                RawRat::Int(v) => Ok(int(v)),
                RawRat::Text(t) => parse_rat(&t),
            }
        }
    }
}

/// Serde adapter for `Vec<Rat>`.
pub mod serde_rat_vec {
    use super::serde_rat::RawRat;
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[Rat], s: S) -> Result<S::Ok, S::Error> {
        struct One<'a>(&'a Rat);
        impl Serialize for One<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                serde_rat::serialize(self.0, s)
            }
        }
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&One(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rat>, D::Error> {
        let raw = Vec::<RawRat>::deserialize(d)?;
        raw.into_iter()
            .map(|r| r.into_rat().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// A point or direction in `Q^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RVec(pub Vec<Rat>);

impl RVec {
    pub fn zeros(n: usize) -> Self {
        RVec(vec![Rat::zero(); n])
    }

    pub fn from_ints(values: &[i64]) -> Self {
        RVec(values.iter().map(|&v| int(v)).collect())
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = Rat::one();
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rat> {
        self.0.iter()
    }

    pub fn dot(&self, other: &RVec) -> Rat {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .fold(Rat::zero(), |acc, (a, b)| acc + a * b)
    }

    pub fn scale(&self, factor: &Rat) -> RVec {
        RVec(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, factor: &Rat, other: &RVec) {
        debug_assert_eq!(self.len(), other.len());
        if factor.is_zero() {
            return;
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn norm1(&self) -> Rat {
        self.0.iter().fold(Rat::zero(), |acc, a| acc + a.abs())
    }

    pub fn norm_inf(&self) -> Rat {
        self.0.iter().map(|a| a.abs()).max().unwrap_or_else(Rat::zero)
    }

    /// Squared Euclidean norm, exact.
    pub fn norm2_sq(&self) -> Rat {
        self.dot(self)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    /// Squared Euclidean distance, exact.
    pub fn dist2_sq(&self, other: &RVec) -> Rat {
        (self - other).norm2_sq()
    }
}

impl fmt::Display for RVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", format_rat(v))?;
        }
        write!(f, ")")
    }
}

impl From<Vec<Rat>> for RVec {
    fn from(v: Vec<Rat>) -> Self {
        RVec(v)
    }
}

impl FromIterator<Rat> for RVec {
    fn from_iter<I: IntoIterator<Item = Rat>>(iter: I) -> Self {
        RVec(iter.into_iter().collect())
    }
}

impl Index<usize> for RVec {
    type Output = Rat;
    fn index(&self, i: usize) -> &Rat {
        &self.0[i]
    }
}

impl IndexMut<usize> for RVec {
    fn index_mut(&mut self, i: usize) -> &mut Rat {
        &mut self.0[i]
    }
}

impl Add for &RVec {
    type Output = RVec;
    fn add(self, rhs: &RVec) -> RVec {
        debug_assert_eq!(self.len(), rhs.len());
        RVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &RVec {
    type Output = RVec;
    fn sub(self, rhs: &RVec) -> RVec {
        debug_assert_eq!(self.len(), rhs.len());
        RVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Serialize for RVec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde_rat_vec::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for RVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        serde_rat_vec::deserialize(d).map(RVec)
    }
}
