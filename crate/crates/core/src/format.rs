//! Float formatting shared by every JSON document the crate writes.
//!
//! Values are written with at most 9 significant digits, which is enough for
//! single-precision values to round-trip exactly. Double-precision values are
//! rounded to 9 significant digits first, so a second write of a parsed
//! document is byte-identical to the first.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn round_sig9_slice(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| round_sig9(v)).collect()
}

pub mod sig9_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        round_sig9(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

pub mod sig9_array3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64; 3], s: S) -> Result<S::Ok, S::Error> {
        [round_sig9(v[0]), round_sig9(v[1]), round_sig9(v[2])].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 3], D::Error> {
        <[f64; 3]>::deserialize(d)
    }
}

pub mod sig9_vec_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        round_sig9_slice(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

pub mod sig9_frames {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rounded: Vec<Vec<f64>> = v.iter().map(|f| round_sig9_slice(f)).collect();
        rounded.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<f64>>::deserialize(d)
    }
}

/// Single-precision vectors use the shortest exact representation (at most 9 digits).
pub mod sig9_vec_f32 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f32], s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f32>, D::Error> {
        Vec::<f32>::deserialize(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(round_sig9(-98765.43210987), -98765.4321);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(round_sig9(round_sig9(std::f64::consts::PI)), round_sig9(std::f64::consts::PI));
    }

    #[test]
    fn nine_digits_round_trip_f32() {
        for v in [0.1f32, 1.0 / 3.0, 123456.79, -7.2e-12, f32::MAX] {
            let back = round_sig9(v as f64) as f32;
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
