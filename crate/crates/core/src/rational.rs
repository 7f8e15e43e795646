//! Exact rational helpers shared by the game model, the document format and
//! the formula parser.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Maximum number of fractional digits accepted in a decimal literal.
pub const MAX_DECIMAL_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RationalParseError {
    #[error("empty number literal")]
    Empty,
    #[error("malformed number literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("decimal literal `{0}` has more than {MAX_DECIMAL_DIGITS} fractional digits")]
    TooManyDigits(String),
}

/// Parses `"p/q"`, an integer, or a decimal literal into an exact rational.
///
/// Decimal literals are expanded exactly (`0.1` is `1/10`), and are limited
/// to [`MAX_DECIMAL_DIGITS`] fractional digits.
pub fn parse_rational(text: &str) -> Result<BigRational, RationalParseError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(RationalParseError::Empty);
    }
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_int(num.trim()).ok_or_else(|| RationalParseError::Malformed(text.into()))?;
        let den = parse_int(den.trim()).ok_or_else(|| RationalParseError::Malformed(text.into()))?;
        if den.is_zero() {
            return Err(RationalParseError::ZeroDenominator(text.into()));
        }
        return Ok(BigRational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(RationalParseError::Malformed(text.into()));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(RationalParseError::Malformed(text.into()));
    }
    if frac_part.len() > MAX_DECIMAL_DIGITS {
        return Err(RationalParseError::TooManyDigits(text.into()));
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| RationalParseError::Malformed(text.into()))? };
    let den = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let value = BigRational::new(num, den);
    Ok(if negative { -value } else { value })
}

fn parse_int(text: &str) -> Option<BigInt> {
    let body = text.strip_prefix('-').unwrap_or(text);
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

/// Canonical text form: `"p/q"`, or just `"p"` for integers.
pub fn format_rational(value: &BigRational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or_else(|| {
        // Very large numerators/denominators; fall back to a scaled division.
        let n = value.numer().to_f64().unwrap_or(f64::NAN);
        let d = value.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact rational value of a finite float.
pub fn from_f64(value: f64) -> BigRational {
    BigRational::from_float(value).unwrap_or_else(BigRational::zero)
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn is_probability(value: &BigRational) -> bool {
    !value.is_negative() && *value <= BigRational::one()
}
