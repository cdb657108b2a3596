//! Temperature units.
//!
//! Absolute temperatures and temperature differences convert differently:
//! an absolute reading uses the affine map `C = (F - 32) / 1.8`, while a
//! difference (warming, residual) only scales by 1.8. A rate expressed
//! "per degree" scales the other way, so `r` per °F is `1.8·r` per °C.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const DEGREE_RATIO: f64 = 1.8;
const FAHRENHEIT_OFFSET: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TempUnit {
    #[serde(alias = "F", alias = "f")]
    Fahrenheit,
    #[serde(alias = "C", alias = "c")]
    Celsius,
}

impl TempUnit {
    pub fn symbol(self) -> &'static str {
        match self {
            TempUnit::Fahrenheit => "F",
            TempUnit::Celsius => "C",
        }
    }
}

impl fmt::Display for TempUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TempUnit::Fahrenheit => "fahrenheit",
            TempUnit::Celsius => "celsius",
        })
    }
}

impl FromStr for TempUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "fahrenheit" | "degf" => Ok(TempUnit::Fahrenheit),
            "c" | "celsius" | "degc" => Ok(TempUnit::Celsius),
            other => Err(format!("unknown temperature unit '{other}'")),
        }
    }
}

/// What a number measured in degrees represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// A thermometer reading.
    Absolute,
    /// A temperature change or spread.
    Difference,
    /// Something per degree (a regression slope, a percent per degree).
    PerDegree,
}

/// Converts a single value between temperature units.
pub fn convert_unit(value: f64, kind: Quantity, from: TempUnit, to: TempUnit) -> f64 {
    use TempUnit::*;
    match (kind, from, to) {
        (_, a, b) if a == b => value,
        (Quantity::Absolute, Fahrenheit, Celsius) => (value - FAHRENHEIT_OFFSET) / DEGREE_RATIO,
        (Quantity::Absolute, Celsius, Fahrenheit) => value * DEGREE_RATIO + FAHRENHEIT_OFFSET,
        (Quantity::Difference, Fahrenheit, Celsius) => value / DEGREE_RATIO,
        (Quantity::Difference, Celsius, Fahrenheit) => value * DEGREE_RATIO,
        (Quantity::PerDegree, Fahrenheit, Celsius) => value * DEGREE_RATIO,
        (Quantity::PerDegree, Celsius, Fahrenheit) => value / DEGREE_RATIO,
        _ => unreachable!("same-unit case handled above"),
    }
}

pub fn convert_series(values: &[f64], kind: Quantity, from: TempUnit, to: TempUnit) -> Vec<f64> {
    values.iter().map(|&v| convert_unit(v, kind, from, to)).collect()
}

/// An absolute temperature reading with its unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub value: f64,
    pub unit: TempUnit,
}

impl Temperature {
    pub fn new(value: f64, unit: TempUnit) -> Self {
        Temperature { value, unit }
    }

    pub fn to_unit(self, unit: TempUnit) -> Self {
        Temperature {
            value: convert_unit(self.value, Quantity::Absolute, self.unit, unit),
            unit,
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°{}", self.value, self.unit.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn freezing_point() {
        let c = convert_unit(32.0, Quantity::Absolute, TempUnit::Fahrenheit, TempUnit::Celsius);
        assert_eq!(c, 0.0);
        let f = convert_unit(100.0, Quantity::Absolute, TempUnit::Celsius, TempUnit::Fahrenheit);
        assert_eq!(f, 212.0);
    }

    #[test]
    fn warming_difference() {
        // 1.21 °F of warming is about 0.67 °C.
        let c = convert_unit(1.21, Quantity::Difference, TempUnit::Fahrenheit, TempUnit::Celsius);
        assert!((c - 0.672).abs() < 0.01, "{c}");
    }

    #[test]
    fn per_degree_rate_scales_by_ratio() {
        let r = 0.3;
        let per_c = convert_unit(r, Quantity::PerDegree, TempUnit::Fahrenheit, TempUnit::Celsius);
        assert!((per_c - 1.8 * r).abs() < 1e-15);
    }

    #[test]
    fn parses_unit_names() {
        assert_eq!("F".parse::<TempUnit>().unwrap(), TempUnit::Fahrenheit);
        assert_eq!("celsius".parse::<TempUnit>().unwrap(), TempUnit::Celsius);
        assert!("kelvin".parse::<TempUnit>().is_err());
        let u: TempUnit = serde_json::from_str("\"C\"").unwrap();
        assert_eq!(u, TempUnit::Celsius);
    }

    proptest! {
        #[test]
        fn round_trip(x in -200.0f64..200.0) {
            for kind in [Quantity::Absolute, Quantity::Difference, Quantity::PerDegree] {
                let c = convert_unit(x, kind, TempUnit::Fahrenheit, TempUnit::Celsius);
                let back = convert_unit(c, kind, TempUnit::Celsius, TempUnit::Fahrenheit);
                prop_assert!((back - x).abs() <= 1e-9);
            }
        }
    }
}
