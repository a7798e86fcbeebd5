//! Reference-frame ratios quantized to eighths.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Fraction of the input set that is reference frames, one of 1/8 … 7/8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefRatio(u8);

impl RefRatio {
    pub const ALL: [RefRatio; 7] = [
        RefRatio(1),
        RefRatio(2),
        RefRatio(3),
        RefRatio(4),
        RefRatio(5),
        RefRatio(6),
        RefRatio(7),
    ];
    /// The balanced 1:1 composition.
    pub const HALF: RefRatio = RefRatio(4);
    pub const MIN: RefRatio = RefRatio(1);
    pub const MAX: RefRatio = RefRatio(7);

    pub fn from_eighths(k: u8) -> Option<Self> {
        (1..=7).contains(&k).then_some(RefRatio(k))
    }

    /// Accepts only values within 1e-9 of a multiple of 1/8 in `[1/8, 7/8]`.
    pub fn from_f64(r: f64) -> Option<Self> {
        let k = (r * 8.0).round();
        if (r * 8.0 - k).abs() > 1e-9 || !(1.0..=7.0).contains(&k) {
            return None;
        }
        Some(RefRatio(k as u8))
    }

    pub fn eighths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 8.0
    }
}

impl std::fmt::Display for RefRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for RefRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for RefRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = f64::deserialize(d)?;
        RefRatio::from_f64(r).ok_or_else(|| serde::de::Error::custom(format!("{r} is not one of 1/8..7/8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsing() {
        assert_eq!(RefRatio::from_f64(0.125), Some(RefRatio::MIN));
        assert_eq!(RefRatio::from_f64(0.875), Some(RefRatio::MAX));
        assert_eq!(RefRatio::from_f64(0.325), None);
        assert_eq!(RefRatio::from_f64(0.0), None);
        assert_eq!(RefRatio::from_f64(1.0), None);
        assert_eq!(RefRatio::HALF.value(), 0.5);
    }

    #[test]
    fn json_form_is_a_float() {
        assert_eq!(serde_json::to_string(&RefRatio::from_eighths(3).unwrap()).unwrap(), "0.375");
        let back: RefRatio = serde_json::from_str("0.625").unwrap();
        assert_eq!(back.eighths(), 5);
        assert!(serde_json::from_str::<RefRatio>("0.3").is_err());
    }
}
