//! Extended reals with inf-addition.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A value in ℝ ∪ {−∞, +∞}.
#[derive(Debug, Clone, Copy)]
pub enum ExtReal {
    Finite(f64),
    PlusInf,
    MinusInf,
}

pub use ExtReal::{MinusInf, PlusInf};

/// Sum under the inf-addition convention: `+∞` absorbs everything, including `−∞`.
pub fn ext_add(a: ExtReal, b: ExtReal) -> ExtReal {
    match (a, b) {
        (PlusInf, _) | (_, PlusInf) => PlusInf,
        (MinusInf, _) | (_, MinusInf) => MinusInf,
        (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::from_f64(x + y),
    }
}

/// Inf-addition on raw floats where `+inf`/`-inf` stand for the infinite tags.
#[inline]
pub fn add_f64(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY {
        f64::INFINITY
    } else {
        a + b
    }
}

impl ExtReal {
    /// Panics on non-finite input; use [`ExtReal::from_f64`] for raw floats.
    pub fn finite(x: f64) -> Self {
        assert!(x.is_finite(), "ExtReal::finite called with {x}");
        ExtReal::Finite(x)
    }

    /// Maps `±inf` to the infinite tags and NaN to `PlusInf`.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            PlusInf
        } else if x == f64::INFINITY {
            PlusInf
        } else if x == f64::NEG_INFINITY {
            MinusInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            PlusInf => f64::INFINITY,
            MinusInf => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_plus_inf(self) -> bool {
        matches!(self, PlusInf)
    }

    pub fn is_minus_inf(self) -> bool {
        matches!(self, MinusInf)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn neg(self) -> Self {
        match self {
            ExtReal::Finite(x) => ExtReal::Finite(-x),
            PlusInf => MinusInf,
            MinusInf => PlusInf,
        }
    }

    /// Adds a finite real.
    pub fn add_real(self, r: f64) -> Self {
        ext_add(self, ExtReal::from_f64(r))
    }
}

impl PartialEq for ExtReal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (MinusInf, MinusInf) | (PlusInf, PlusInf) => Ordering::Equal,
            (MinusInf, _) | (_, PlusInf) => Ordering::Less,
            (PlusInf, _) | (_, MinusInf) => Ordering::Greater,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{}", x + 0.0),
            PlusInf => write!(f, "inf"),
            MinusInf => write!(f, "-inf"),
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            PlusInf => s.serialize_str("inf"),
            MinusInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExtReal::from_f64(x)),
            Raw::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(PlusInf),
                "-inf" => Ok(MinusInf),
                other => Err(serde::de::Error::custom(format!("not an extended real: {other}"))),
            },
        }
    }
}
