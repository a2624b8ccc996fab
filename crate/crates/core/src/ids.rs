//! Anonymous student identifiers and fixed-point decimals.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Anonymous student identifier: a random (version 4) UUID.
///
/// Only the lowercase hyphenated text form is accepted. No other personal
/// data is ever attached to it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StudentId(Uuid);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StudentIdError {
    #[error("not a lowercase hyphenated UUID")]
    Format,
    #[error("UUID version is not 4")]
    Version,
    #[error("UUID variant is not RFC 4122")]
    Variant,
}

impl StudentId {
    /// Draws a fresh identifier from `rng`.
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        StudentId(uuid::Builder::from_random_bytes(bytes).into_uuid())
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Result<Self, StudentIdError> {
        let uuid = Uuid::from_bytes(bytes);
        if uuid.get_version_num() != 4 {
            return Err(StudentIdError::Version);
        }
        if uuid.get_variant() != uuid::Variant::RFC4122 {
            return Err(StudentIdError::Variant);
        }
        Ok(StudentId(uuid))
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        self.0.as_bytes()
    }
}

/// Generates a new anonymous student identifier.
pub fn new_student_id<R: RngCore + ?Sized>(rng: &mut R) -> StudentId {
    StudentId::generate(rng)
}

impl FromStr for StudentId {
    type Err = StudentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let well_formed = s.len() == 36
            && s.bytes().enumerate().all(|(i, b)| match i {
                8 | 13 | 18 | 23 => b == b'-',
                _ => b.is_ascii_digit() || (b'a'..=b'f').contains(&b),
            });
        if !well_formed {
            return Err(StudentIdError::Format);
        }
        let uuid = Uuid::parse_str(s).map_err(|_| StudentIdError::Format)?;
        StudentId::from_bytes(*uuid.as_bytes())
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.hyphenated())
    }
}

impl fmt::Debug for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StudentId({})", self)
    }
}

impl Serialize for StudentId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StudentId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-negative fixed-point decimal with four fractional digits.
///
/// Used for credit points, grades and recognition factors. The raw value is
/// counted in units of 0.0001.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Decimal(u64);

impl Decimal {
    pub const SCALE: u64 = 10_000;
    pub const FRACTION_DIGITS: usize = 4;
    pub const ZERO: Decimal = Decimal(0);
    pub const ONE: Decimal = Decimal(Self::SCALE);

    pub const fn from_units(units: u64) -> Self {
        Decimal(units)
    }

    pub const fn from_int(n: u64) -> Self {
        Decimal(n * Self::SCALE)
    }

    pub const fn units(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Decimal) -> Option<Decimal> {
        self.0.checked_add(other.0).map(Decimal)
    }

    /// `self * factor`, rounded half-to-even to one decimal place.
    pub fn mul_round_tenths(self, factor: Decimal) -> Decimal {
        // product is in units of 1e-8; one tenth is 1e7 of those
        let product = self.0 as u128 * factor.0 as u128;
        let tenth = 10_000_000u128;
        let mut q = product / tenth;
        let r = product % tenth;
        if r > tenth / 2 || (r == tenth / 2 && q % 2 == 1) {
            q += 1;
        }
        Decimal((q * 1_000) as u64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecimalError {
    #[error("malformed decimal")]
    Malformed,
    #[error("more than {} fractional digits", Decimal::FRACTION_DIGITS)]
    TooPrecise,
    #[error("decimal out of range")]
    Overflow,
}

impl FromStr for Decimal {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (s, None),
        };
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if !digits(int_part) || frac_part.is_some_and(|f| !digits(f)) {
            return Err(DecimalError::Malformed);
        }
        let frac = frac_part.unwrap_or("");
        if frac.len() > Self::FRACTION_DIGITS {
            return Err(DecimalError::TooPrecise);
        }
        let whole: u64 = int_part.parse().map_err(|_| DecimalError::Overflow)?;
        let mut frac_units = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            frac_units += u64::from(b - b'0') * 10u64.pow((Self::FRACTION_DIGITS - 1 - i) as u32);
        }
        whole
            .checked_mul(Self::SCALE)
            .and_then(|w| w.checked_add(frac_units))
            .map(Decimal)
            .ok_or(DecimalError::Overflow)
    }
}

/// Shortest form with at least one fractional digit: `6.0`, `0.75`, `1.3333`.
impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / Self::SCALE;
        let frac = format!("{:04}", self.0 % Self::SCALE);
        let trimmed = frac.trim_end_matches('0');
        let trimmed = if trimmed.is_empty() { "0" } else { trimmed };
        write!(f, "{whole}.{trimmed}")
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Decimal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashSet;

    #[test]
    fn minimal_v4_value_parses() {
        let id: StudentId = "00000000-0000-4000-8000-000000000000".parse().unwrap();
        assert_eq!(id.to_string(), "00000000-0000-4000-8000-000000000000");
    }

    #[test]
    fn rejects_wrong_version_variant_and_case() {
        assert_eq!(
            "00000000-0000-1000-8000-000000000000".parse::<StudentId>(),
            Err(StudentIdError::Version)
        );
        assert_eq!(
            "00000000-0000-4000-c000-000000000000".parse::<StudentId>(),
            Err(StudentIdError::Variant)
        );
        assert_eq!(
            "00000000-0000-4000-8000-00000000000A".parse::<StudentId>(),
            Err(StudentIdError::Format)
        );
        assert_eq!(
            "000000000000400080000000000000000000".parse::<StudentId>(),
            Err(StudentIdError::Format)
        );
    }

    #[test]
    fn generated_ids_are_v4_and_distinct() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(42);
        let mut seen = HashSet::new();
        for _ in 0..100_000 {
            let id = new_student_id(&mut rng);
            let text = id.to_string();
            assert_eq!(text.len(), 36);
            assert_eq!(&text[14..15], "4");
            assert!(matches!(&text[19..20], "8" | "9" | "a" | "b"));
            assert!(seen.insert(id));
        }
        assert_eq!(seen.len(), 100_000);
    }

    #[test]
    fn decimal_parse_and_display() {
        assert_eq!("6".parse::<Decimal>().unwrap(), Decimal::from_int(6));
        assert_eq!("6.0".parse::<Decimal>().unwrap().to_string(), "6.0");
        assert_eq!("0.75".parse::<Decimal>().unwrap().to_string(), "0.75");
        assert_eq!("1.3333".parse::<Decimal>().unwrap().units(), 13_333);
        assert_eq!("1.33333".parse::<Decimal>(), Err(DecimalError::TooPrecise));
        for bad in ["", ".", "1.", ".5", "-1", "1e3", "1.2.3"] {
            assert_eq!(bad.parse::<Decimal>(), Err(DecimalError::Malformed), "{bad}");
        }
        assert_eq!("99999999999999999999".parse::<Decimal>(), Err(DecimalError::Overflow));
    }

    #[test]
    fn half_even_rounding_to_tenths() {
        let d = |s: &str| s.parse::<Decimal>().unwrap();
        assert_eq!(d("6.0").mul_round_tenths(d("0.5")), d("3.0"));
        assert_eq!(d("6.0").mul_round_tenths(d("1.0")), d("6.0"));
        // 0.25 -> 0.2, 0.35 -> 0.4, 0.45 -> 0.4
        assert_eq!(d("0.5").mul_round_tenths(d("0.5")), d("0.2"));
        assert_eq!(d("0.7").mul_round_tenths(d("0.5")), d("0.4"));
        assert_eq!(d("0.9").mul_round_tenths(d("0.5")), d("0.4"));
        assert_eq!(d("0.9001").mul_round_tenths(d("0.5")), d("0.5"));
        assert_eq!(d("5.0").mul_round_tenths(d("0.75")), d("3.8"));
    }
}
