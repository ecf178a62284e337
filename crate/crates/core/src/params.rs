//! Test-condition vocabulary: data patterns, aggressor on-time, temperature.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse `{input}` as {what}")]
pub struct ParseParamError {
    pub what: &'static str,
    pub input: String,
}

fn parse_err(what: &'static str, input: &str) -> ParseParamError {
    ParseParamError { what, input: input.to_string() }
}

/// Victim/aggressor data pattern.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataPattern {
    Rowstripe0,
    Rowstripe1,
    Checkered0,
    Checkered1,
}

impl DataPattern {
    pub const ALL: [DataPattern; 4] =
        [DataPattern::Rowstripe0, DataPattern::Rowstripe1, DataPattern::Checkered0, DataPattern::Checkered1];

    /// Byte written to the victim row; aggressors hold the complement.
    pub fn victim_byte(self) -> u8 {
        match self {
            DataPattern::Rowstripe0 => 0x00,
            DataPattern::Rowstripe1 => 0xFF,
            DataPattern::Checkered0 => 0x55,
            DataPattern::Checkered1 => 0xAA,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DataPattern::Rowstripe0 => "rowstripe0",
            DataPattern::Rowstripe1 => "rowstripe1",
            DataPattern::Checkered0 => "checkered0",
            DataPattern::Checkered1 => "checkered1",
        }
    }
}

impl fmt::Display for DataPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataPattern {
    type Err = ParseParamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataPattern::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| parse_err("data pattern", s))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Temperature {
    C50,
    C65,
    C80,
}

impl Temperature {
    pub const ALL: [Temperature; 3] = [Temperature::C50, Temperature::C65, Temperature::C80];

    pub fn celsius(self) -> u32 {
        match self {
            Temperature::C50 => 50,
            Temperature::C65 => 65,
            Temperature::C80 => 80,
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}c", self.celsius())
    }
}

impl FromStr for Temperature {
    type Err = ParseParamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_start_matches(['c', 'C']).trim_end_matches(['c', 'C']);
        let celsius: u32 = digits.parse().map_err(|_| parse_err("temperature", s))?;
        Temperature::ALL
            .into_iter()
            .find(|t| t.celsius() == celsius)
            .ok_or_else(|| parse_err("temperature", s))
    }
}

/// Coarse on-time class used to key model modifiers.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggOnClass {
    Tras,
    Trefi,
    #[serde(rename = "9trefi")]
    NineTrefi,
}

/// How long each aggressor row stays open per activation.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AggOn {
    /// Minimum tRAS (plain RowHammer).
    Tras,
    /// tREFI, the longest a row may stay open between refreshes.
    Trefi,
    NineTrefi,
    Custom { ps: u64 },
}

/// Minimum tRAS in picoseconds.
pub const MIN_TRAS_PS: u64 = 32_000;
const TREFI_PS: u64 = 7_800_000;

impl AggOn {
    pub const CLASSES: [AggOn; 3] = [AggOn::Tras, AggOn::Trefi, AggOn::NineTrefi];

    /// Custom values are bucketed: below tREFI is the tRAS class, below
    /// 9 x tREFI the tREFI class, anything longer the 9 x tREFI class.
    pub fn class(self) -> AggOnClass {
        match self {
            AggOn::Tras => AggOnClass::Tras,
            AggOn::Trefi => AggOnClass::Trefi,
            AggOn::NineTrefi => AggOnClass::NineTrefi,
            AggOn::Custom { ps } if ps < TREFI_PS => AggOnClass::Tras,
            AggOn::Custom { ps } if ps < 9 * TREFI_PS => AggOnClass::Trefi,
            AggOn::Custom { .. } => AggOnClass::NineTrefi,
        }
    }

    pub fn from_ns(ns: f64) -> Option<AggOn> {
        (ns.is_finite() && ns > 0.0).then(|| AggOn::Custom { ps: (ns * 1e3).round() as u64 })
    }

    pub fn is_valid(self) -> bool {
        match self {
            AggOn::Custom { ps } => ps >= MIN_TRAS_PS,
            _ => true,
        }
    }
}

impl fmt::Display for AggOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggOn::Tras => f.write_str("tras"),
            AggOn::Trefi => f.write_str("trefi"),
            AggOn::NineTrefi => f.write_str("9trefi"),
            AggOn::Custom { ps } => {
                let ns = *ps as f64 / 1e3;
                write!(f, "{ns}")
            }
        }
    }
}

impl FromStr for AggOn {
    type Err = ParseParamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tras" => Ok(AggOn::Tras),
            "trefi" => Ok(AggOn::Trefi),
            "9trefi" => Ok(AggOn::NineTrefi),
            other => other
                .trim_end_matches("ns")
                .parse::<f64>()
                .ok()
                .and_then(AggOn::from_ns)
                .ok_or_else(|| parse_err("aggressor on-time", s)),
        }
    }
}

macro_rules! serde_via_str {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Raw {
                    Str(String),
                    Num(f64),
                }
                let text = match Raw::deserialize(d)? {
                    Raw::Str(s) => s,
                    Raw::Num(n) => n.to_string(),
                };
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(AggOn);
serde_via_str!(Temperature);

/// The full test condition a measurement is taken under.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub pattern: DataPattern,
    pub t_aggon: AggOn,
    pub temperature: Temperature,
}

impl Condition {
    pub fn new(pattern: DataPattern, t_aggon: AggOn, temperature: Temperature) -> Self {
        Condition { pattern, t_aggon, temperature }
    }
}

impl Default for Condition {
    /// Checkered0 at minimum tRAS and 50 C, the victim-selection condition.
    fn default() -> Self {
        Condition::new(DataPattern::Checkered0, AggOn::Tras, Temperature::C50)
    }
}
