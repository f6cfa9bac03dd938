//! Probability vectors and the divergences used throughout the crate.
//!
//! All logarithms are natural; values are in nats. Conversion to bits
//! happens only at presentation boundaries (see [`nats_to_bits`]).

use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-sum tolerance for distributions read from external sources.
pub const INGEST_SUM_TOL: f64 = 1e-9;
/// Row-sum tolerance for distributions built inside the crate.
pub const INTERNAL_SUM_TOL: f64 = 1e-12;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

/// A probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates with the internal tolerance of `1e-12`.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(masses, INTERNAL_SUM_TOL)
    }

    pub fn with_tolerance(masses: Vec<f64>, sum_tol: f64) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        let mut sum = 0.0;
        for (i, &m) in masses.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "non-finite mass at {i}"
                )));
            }
            if m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "negative mass {m} at {i}"
                )));
            }
            sum += m;
        }
        if (sum - 1.0).abs() > sum_tol {
            return Err(Error::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(masses))
    }

    /// Scales a non-negative vector with a positive sum onto the simplex.
    pub fn normalized(mut masses: Vec<f64>) -> Result<Self> {
        let sum: f64 = masses.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "cannot normalize: need non-negative masses with positive sum".into(),
            ));
        }
        masses.iter_mut().for_each(|m| *m /= sum);
        Ok(Self(masses))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty alphabet");
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass on `index`.
    pub fn degenerate(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    /// Wraps masses produced by a trusted internal computation.
    pub(crate) fn from_vec_unchecked(masses: Vec<f64>) -> Self {
        debug_assert!(!masses.is_empty());
        Self(masses)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Smallest strictly positive mass.
    pub fn min_positive(&self) -> f64 {
        min_positive(&self.0)
    }
}

impl Deref for Distribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(de)?;
        Distribution::with_tolerance(v, INGEST_SUM_TOL).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn min_positive(masses: &[f64]) -> f64 {
    masses
        .iter()
        .copied()
        .filter(|&m| m > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// A divergence in nats, or the explicit value `Infinite` for support
/// violations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceValue {
    Finite(f64),
    Infinite,
}

impl DivergenceValue {
    /// `f64::INFINITY` for [`DivergenceValue::Infinite`].
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Infinite => None,
        }
    }

    pub(crate) fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Self::Finite(v)
        } else {
            Self::Infinite
        }
    }
}

impl PartialOrd for DivergenceValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl fmt::Display for DivergenceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Infinite => f.write_str("INFINITE"),
        }
    }
}

impl Serialize for DivergenceValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => s.serialize_f64(*v),
            Self::Infinite => s.serialize_str("INFINITE"),
        }
    }
}

impl<'de> Deserialize<'de> for DivergenceValue {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(de)? {
            Repr::Num(v) => Ok(Self::Finite(v)),
            Repr::Str(s) if s == "INFINITE" => Ok(Self::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "unexpected divergence value {s:?}"
            ))),
        }
    }
}

fn check_dims(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(())
}

/// Shannon entropy `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| m * m.ln())
        .sum::<f64>()
}

/// `D(P‖Q)`; infinite iff `P(y) > 0` somewhere `Q(y) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<DivergenceValue> {
    check_dims(p, q)?;
    Ok(DivergenceValue::from_f64(kl_raw(p, q)))
}

/// Unchecked KL divergence returning `f64::INFINITY` on support violation.
/// Clamped at zero to absorb rounding.
pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi / qi).ln();
        }
    }
    acc.max(0.0)
}

/// `χ²(P‖Q) = Σ P²/Q − 1` with `0²/0 = 0`.
pub fn chi2_divergence(p: &[f64], q: &[f64]) -> Result<DivergenceValue> {
    check_dims(p, q)?;
    Ok(DivergenceValue::from_f64(chi2_raw(p, q)))
}

pub(crate) fn chi2_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi / qi);
        }
    }
    (acc - 1.0).max(0.0)
}

/// Jensen–Shannon divergence `½D(P‖M) + ½D(Q‖M)` with `M = (P+Q)/2`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dims(p, q)?;
    Ok(js_raw(p, q))
}

pub(crate) fn js_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += pi * (pi / m).ln();
        }
        if qi > 0.0 {
            acc += qi * (qi / m).ln();
        }
    }
    (0.5 * acc).clamp(0.0, std::f64::consts::LN_2)
}
