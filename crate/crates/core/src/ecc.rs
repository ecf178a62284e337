//! Closed-form error probabilities for SEC, SECDED, and single-symbol
//! correcting (Chipkill-like) codes under independent bit errors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EccError {
    #[error("bit error rate {0} is outside [0, 1]")]
    InvalidBer(f64),
    #[error("row has zero bits")]
    EmptyRow,
    #[error("{bitflips} bitflips exceed {row_bits} row bits")]
    TooManyFlips { bitflips: u64, row_bits: u64 },
    #[error("codeword of {codeword_bits} bits is not {symbols} symbols of {symbol_bits} bits")]
    Geometry { codeword_bits: u32, symbols: u32, symbol_bits: u32 },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EccKind {
    Sec,
    Secded,
    Ssc,
}

impl fmt::Display for EccKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EccKind::Sec => "sec",
            EccKind::Secded => "secded",
            EccKind::Ssc => "ssc",
        })
    }
}

impl FromStr for EccKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sec" => Ok(EccKind::Sec),
            "secded" => Ok(EccKind::Secded),
            "ssc" | "chipkill" => Ok(EccKind::Ssc),
            _ => Err(format!("unknown code `{s}` (expected sec, secded, or ssc)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccGeometry {
    pub kind: EccKind,
    pub codeword_bits: u32,
    pub symbol_bits: u32,
    pub symbols: u32,
}

impl EccGeometry {
    pub fn new(kind: EccKind, symbols: u32, symbol_bits: u32) -> Self {
        EccGeometry { kind, codeword_bits: symbols * symbol_bits, symbol_bits, symbols }
    }

    /// The standard geometry for each code: 72-bit SEC/SECDED words and
    /// 144-bit SSC words of eighteen 8-bit symbols.
    pub fn standard(kind: EccKind) -> Self {
        match kind {
            EccKind::Sec | EccKind::Secded => EccGeometry::new(kind, 72, 1),
            EccKind::Ssc => EccGeometry::new(kind, 18, 8),
        }
    }

    pub fn validate(&self) -> Result<(), EccError> {
        if self.symbols == 0 || self.symbol_bits == 0 || self.codeword_bits != self.symbols * self.symbol_bits {
            return Err(EccError::Geometry {
                codeword_bits: self.codeword_bits,
                symbols: self.symbols,
                symbol_bits: self.symbol_bits,
            });
        }
        Ok(())
    }
}

/// Independent per-bit flip probability.
#[derive(Copy, Clone, Debug, PartialEq, PartialOrd)]
pub struct Ber<F>(F);

impl<F: Real> Ber<F> {
    pub fn new(p: F) -> Result<Self, EccError> {
        if p >= F::zero() && p <= F::one() {
            Ok(Ber(p))
        } else {
            Err(EccError::InvalidBer(p.to_f64().unwrap_or(f64::NAN)))
        }
    }

    pub fn get(self) -> F {
        self.0
    }
}

/// Bit error rate of a row with `bitflips` flipped bits out of `row_bits`.
pub fn row_bitflip_rate<F: Real>(bitflips: u64, row_bits: u64) -> Result<Ber<F>, EccError> {
    if row_bits == 0 {
        return Err(EccError::EmptyRow);
    }
    if bitflips > row_bits {
        return Err(EccError::TooManyFlips { bitflips, row_bits });
    }
    let p = F::from_u64(bitflips).expect("representable") / F::from_u64(row_bits).expect("representable");
    Ber::new(p)
}

/// Probability that a `symbol_bits`-bit symbol has at least one flipped bit.
pub fn symbol_error_prob<F: Real>(p: Ber<F>, symbol_bits: u32) -> F {
    // 1 - (1-p)^b, via expm1/ln1p to keep precision for tiny p
    -((F::of_count(symbol_bits as usize) * (-p.get()).ln_1p()).exp_m1())
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EccProbabilities<F> {
    pub uncorrectable: F,
    pub undetectable: F,
    /// Only defined for codes that detect more than they correct.
    pub detectable_uncorrectable: Option<F>,
}

fn binomial_coefficient<F: Real>(n: u32, k: u32) -> F {
    let k = k.min(n - k);
    (0..k).fold(F::one(), |acc, i| acc * F::of_count((n - i) as usize) / F::of_count((i + 1) as usize))
}

/// `P(X = k)` for `X ~ Binomial(n, q)`.
pub fn binomial_pmf<F: Real>(n: u32, k: u32, q: F) -> F {
    if k > n {
        return F::zero();
    }
    let rest = F::of_count((n - k) as usize) * (-q).ln_1p();
    binomial_coefficient::<F>(n, k) * q.powi(k as i32) * rest.exp()
}

/// `P(X >= k)`, summed over the upper terms so small tails keep their
/// relative precision.
pub fn binomial_tail<F: Real>(n: u32, k: u32, q: F) -> F {
    if k == 0 {
        return F::one();
    }
    let tail = (k..=n).rev().fold(F::zero(), |acc, j| acc + binomial_pmf(n, j, q));
    tail.min(F::one())
}

/// Uncorrectable and undetectable error probabilities for one codeword.
///
/// SEC and SSC correct one unit (bit or symbol) and are assumed to
/// silently miscorrect beyond that, so their uncorrectable and undetectable
/// probabilities coincide. SECDED detects double-bit errors.
pub fn error_probabilities<F: Real>(geom: &EccGeometry, ber: Ber<F>) -> Result<EccProbabilities<F>, EccError> {
    geom.validate()?;
    let (units, q) = match geom.kind {
        EccKind::Sec | EccKind::Secded => (geom.codeword_bits, ber.get()),
        EccKind::Ssc => (geom.symbols, symbol_error_prob(ber, geom.symbol_bits)),
    };
    let at_least_two = binomial_tail(units, 2, q);
    Ok(match geom.kind {
        EccKind::Sec | EccKind::Ssc => EccProbabilities {
            uncorrectable: at_least_two,
            undetectable: at_least_two,
            detectable_uncorrectable: None,
        },
        EccKind::Secded => EccProbabilities {
            uncorrectable: at_least_two,
            undetectable: binomial_tail(units, 3, q),
            detectable_uncorrectable: Some(binomial_pmf(units, 2, q)),
        },
    })
}

/// Report line for one code at one BER.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EccReport {
    pub code: EccKind,
    pub ber: f64,
    pub uncorrectable: f64,
    pub undetectable: f64,
    pub detectable_uncorrectable: Option<f64>,
}

pub fn report(kind: EccKind, ber: f64) -> Result<EccReport, EccError> {
    let probs = error_probabilities(&EccGeometry::standard(kind), Ber::new(ber)?)?;
    Ok(EccReport {
        code: kind,
        ber,
        uncorrectable: probs.uncorrectable,
        undetectable: probs.undetectable,
        detectable_uncorrectable: probs.detectable_uncorrectable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symbol_probability_cases() {
        assert_eq!(symbol_error_prob(Ber::new(0.0f64).unwrap(), 8), 0.0);
        let p = Ber::new(1e-3f64).unwrap();
        assert_relative_eq!(symbol_error_prob(p, 1), 1e-3, max_relative = 1e-12);
        let q = symbol_error_prob(Ber::new(7.6e-5f64).unwrap(), 8);
        assert_relative_eq!(q, 1.0 - (1.0 - 7.6e-5f64).powi(8), max_relative = 1e-12);
        assert_relative_eq!(q, 6.078e-4, max_relative = 1e-3);
    }

    #[test]
    fn row_rates() {
        assert_relative_eq!(row_bitflip_rate::<f64>(5, 65_536).unwrap().get(), 7.629e-5, max_relative = 1e-3);
        assert_eq!(row_bitflip_rate::<f64>(0, 65_536).unwrap().get(), 0.0);
        assert_eq!(row_bitflip_rate::<f64>(65_536, 65_536).unwrap().get(), 1.0);
        assert_eq!(row_bitflip_rate::<f64>(1, 0), Err(EccError::EmptyRow));
        assert!(row_bitflip_rate::<f64>(2, 1).is_err());
    }

    #[test]
    fn ber_bounds() {
        assert!(Ber::new(-0.1f64).is_err());
        assert!(Ber::new(1.1f32).is_err());
        assert!(Ber::new(f64::NAN).is_err());
    }

    #[test]
    fn binomial_sums_to_one() {
        let total: f64 = (0..=72).map(|k| binomial_pmf(72, k, 0.03)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert_relative_eq!(binomial_tail(72, 2, 0.03), 1.0 - binomial_pmf(72, 0, 0.03) - binomial_pmf(72, 1, 0.03), max_relative = 1e-10);
    }

    #[test]
    fn code_relations() {
        let ber = Ber::new(1e-4f64).unwrap();
        let sec = error_probabilities(&EccGeometry::standard(EccKind::Sec), ber).unwrap();
        let secded = error_probabilities(&EccGeometry::standard(EccKind::Secded), ber).unwrap();
        let ssc = error_probabilities(&EccGeometry::standard(EccKind::Ssc), ber).unwrap();
        assert_eq!(sec.uncorrectable, sec.undetectable);
        assert_eq!(ssc.uncorrectable, ssc.undetectable);
        assert!(secded.undetectable <= secded.uncorrectable);
        assert_relative_eq!(
            secded.uncorrectable,
            secded.undetectable + secded.detectable_uncorrectable.unwrap(),
            max_relative = 1e-12
        );
        assert_eq!(sec.detectable_uncorrectable, None);
    }

    #[test]
    fn small_p_asymptotics() {
        let p = 1e-7f64;
        let sec = error_probabilities(&EccGeometry::standard(EccKind::Sec), Ber::new(p).unwrap()).unwrap();
        assert_relative_eq!(sec.uncorrectable, 2556.0 * p * p, max_relative = 0.01);
    }

    #[test]
    fn geometry_validation() {
        let bad = EccGeometry { kind: EccKind::Ssc, codeword_bits: 100, symbol_bits: 8, symbols: 18 };
        assert!(error_probabilities(&bad, Ber::new(0.1f64).unwrap()).is_err());
    }

    #[test]
    fn single_precision_works() {
        let r = error_probabilities(&EccGeometry::standard(EccKind::Secded), Ber::new(7.6e-5f32).unwrap()).unwrap();
        assert!(r.undetectable > 0.0 && r.undetectable < 1e-7);
    }
}
