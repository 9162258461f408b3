//! Physical quantities written with explicit units, e.g. "21 uA" or "6 pF".
//!
//! A quantity keeps the number and unit exactly as written so that a config
//! serializes back to the same text. Bare numbers are dimensionless.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    Current,
    Capacitance,
    Energy,
    Time,
    Length,
    Frequency,
    Density,
    Stiffness,
    SurfaceCharge,
    Angle,
}

impl Dimension {
    /// The unit every value of this dimension is converted to.
    pub fn canonical(self) -> &'static str {
        match self {
            Dimension::Dimensionless => "",
            Dimension::Current => "uA",
            Dimension::Capacitance => "pF",
            Dimension::Energy => "ueV",
            Dimension::Time => "ns",
            Dimension::Length => "um",
            Dimension::Frequency => "GHz",
            Dimension::Density => "g/cm3",
            Dimension::Stiffness => "GPa",
            Dimension::SurfaceCharge => "C/m2",
            Dimension::Angle => "rad",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Dimensionless => "dimensionless",
            Dimension::Current => "current",
            Dimension::Capacitance => "capacitance",
            Dimension::Energy => "energy",
            Dimension::Time => "time",
            Dimension::Length => "length",
            Dimension::Frequency => "frequency",
            Dimension::Density => "density",
            Dimension::Stiffness => "stiffness",
            Dimension::SurfaceCharge => "surface charge",
            Dimension::Angle => "angle",
        };
        f.write_str(name)
    }
}

/// (symbol, dimension, factor to the canonical unit)
const UNITS: &[(&str, Dimension, f64)] = &[
    ("A", Dimension::Current, 1e6),
    ("mA", Dimension::Current, 1e3),
    ("uA", Dimension::Current, 1.0),
    ("nA", Dimension::Current, 1e-3),
    ("F", Dimension::Capacitance, 1e12),
    ("nF", Dimension::Capacitance, 1e3),
    ("pF", Dimension::Capacitance, 1.0),
    ("fF", Dimension::Capacitance, 1e-3),
    ("eV", Dimension::Energy, 1e6),
    ("meV", Dimension::Energy, 1e3),
    ("ueV", Dimension::Energy, 1.0),
    ("neV", Dimension::Energy, 1e-3),
    ("s", Dimension::Time, 1e9),
    ("us", Dimension::Time, 1e3),
    ("ns", Dimension::Time, 1.0),
    ("ps", Dimension::Time, 1e-3),
    ("fs", Dimension::Time, 1e-6),
    ("m", Dimension::Length, 1e6),
    ("mm", Dimension::Length, 1e3),
    ("um", Dimension::Length, 1.0),
    ("nm", Dimension::Length, 1e-3),
    ("Hz", Dimension::Frequency, 1e-9),
    ("kHz", Dimension::Frequency, 1e-6),
    ("MHz", Dimension::Frequency, 1e-3),
    ("GHz", Dimension::Frequency, 1.0),
    ("g/cm3", Dimension::Density, 1.0),
    ("kg/m3", Dimension::Density, 1e-3),
    ("Pa", Dimension::Stiffness, 1e-9),
    ("MPa", Dimension::Stiffness, 1e-3),
    ("GPa", Dimension::Stiffness, 1.0),
    ("C/m2", Dimension::SurfaceCharge, 1.0),
    ("rad", Dimension::Angle, 1.0),
    ("pi", Dimension::Angle, PI),
    ("deg", Dimension::Angle, PI / 180.0),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantityError {
    #[error("cannot read a number from {0:?}")]
    Number(String),
    #[error("unknown unit {unit:?} in {text:?}")]
    Unit { unit: String, text: String },
    #[error("{text:?} is a {found}, expected a {expected} (e.g. \"1 {example}\")")]
    Dimension { text: String, found: Dimension, expected: Dimension, example: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    unit: usize,
}

impl Quantity {
    pub fn dimensionless(value: f64) -> Self {
        Quantity { value, unit: usize::MAX }
    }

    pub fn new(value: f64, unit: &str) -> Result<Self, QuantityError> {
        let unit = lookup(unit).ok_or_else(|| QuantityError::Unit { unit: unit.into(), text: format!("{value} {unit}") })?;
        Ok(Quantity { value, unit })
    }

    pub fn dimension(&self) -> Dimension {
        UNITS.get(self.unit).map_or(Dimension::Dimensionless, |u| u.1)
    }

    pub fn unit(&self) -> &'static str {
        UNITS.get(self.unit).map_or("", |u| u.0)
    }

    /// The value in the canonical unit of `expected`, or an error naming the
    /// quantity when the dimension is wrong.
    pub fn to(&self, expected: Dimension) -> Result<f64, QuantityError> {
        if self.dimension() != expected {
            return Err(QuantityError::Dimension {
                text: self.to_string(),
                found: self.dimension(),
                expected,
                example: expected.canonical(),
            });
        }
        Ok(self.value * UNITS.get(self.unit).map_or(1.0, |u| u.2))
    }
}

fn lookup(symbol: &str) -> Option<usize> {
    let symbol = symbol.replace(['µ', 'μ'], "u");
    UNITS.iter().position(|u| u.0 == symbol)
}

impl FromStr for Quantity {
    type Err = QuantityError;
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let t = text.trim();
        // the number ends where the first character that cannot continue it
        // appears; exponents like 1e-3 stay with the number
        let split = t.find(|c: char| c.is_whitespace() || (c.is_alphabetic() && c != 'e' && c != 'E') || c == 'µ' || c == 'μ');
        let (mut num, mut unit) = match split {
            Some(i) => (t[..i].trim(), t[i..].trim()),
            None => (t, ""),
        };
        // "5eV": the e belongs to the unit
        if num.ends_with(['e', 'E']) && !unit.is_empty() {
            let i = t.len() - unit.len() - 1;
            (num, unit) = (&t[..i], &t[i..]);
        }
        let value: f64 = num.parse().map_err(|_| QuantityError::Number(text.into()))?;
        if unit.is_empty() {
            return Ok(Quantity::dimensionless(value));
        }
        let unit = lookup(unit).ok_or_else(|| QuantityError::Unit { unit: unit.into(), text: text.into() })?;
        Ok(Quantity { value, unit })
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match UNITS.get(self.unit) {
            Some(u) => write!(f, "{} {}", self.value, u.0),
            None => write!(f, "{}", self.value),
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.dimension() == Dimension::Dimensionless {
            s.serialize_f64(self.value)
        } else {
            s.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Quantity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"21 uA\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
                Ok(Quantity::dimensionless(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
                Ok(Quantity::dimensionless(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
                Ok(Quantity::dimensionless(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Quantity, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_converts() {
        let q: Quantity = "21 uA".parse().unwrap();
        assert_eq!(q.to(Dimension::Current).unwrap(), 21.0);
        assert_eq!("6pF".parse::<Quantity>().unwrap().to(Dimension::Capacitance).unwrap(), 6.0);
        assert_eq!("0.23 µm".parse::<Quantity>().unwrap().unit(), "um");
        assert!(("4 fs".parse::<Quantity>().unwrap().to(Dimension::Time).unwrap() - 4e-6).abs() < 1e-20);
        assert!(("1.5e-3 ns".parse::<Quantity>().unwrap().to(Dimension::Time).unwrap() - 1.5e-3).abs() < 1e-18);
        assert_eq!("0.5 pi".parse::<Quantity>().unwrap().to(Dimension::Angle).unwrap(), 0.5 * PI);
        assert_eq!("2eV".parse::<Quantity>().unwrap().to(Dimension::Energy).unwrap(), 2e6);
        assert_eq!("0.4".parse::<Quantity>().unwrap().to(Dimension::Dimensionless).unwrap(), 0.4);
    }

    #[test]
    fn rejects_wrong_units() {
        assert!(matches!("21 parsec".parse::<Quantity>(), Err(QuantityError::Unit { .. })));
        assert!(matches!("uA".parse::<Quantity>(), Err(QuantityError::Number(_))));
        let e = "21 uA".parse::<Quantity>().unwrap().to(Dimension::Capacitance).unwrap_err();
        assert!(e.to_string().contains("capacitance"), "{e}");
    }

    #[test]
    fn display_round_trips() {
        for text in ["21 uA", "53.33 neV", "0.1 ns", "3.26 g/cm3", "0.30000000000000004", "1e-300 fs"] {
            let q: Quantity = text.parse().unwrap();
            assert_eq!(q.to_string().parse::<Quantity>().unwrap(), q);
        }
    }
}
