//! Exact rational derivative orders.
//!
//! Orders enter the toolkit as decimal strings and are kept as exact
//! rationals throughout. The common base order is a gcd over rationals,
//! which is ill-defined in floating point; every quantity that feeds the
//! lifting (base order, multiplicities, initial-condition placement) is
//! therefore computed exactly.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed};

use crate::error::{Error, Result};

/// A derivative order as an exact rational in lowest terms, constrained to
/// the admissible open interval (0, 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RationalOrder(Ratio<i64>);

impl RationalOrder {
    /// Builds an order from a numerator/denominator pair, reducing to lowest
    /// terms and enforcing 0 < value < 2.
    pub fn new(numerator: i64, denominator: i64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::MalformedOrder {
                text: format!("{numerator}/{denominator}"),
                reason: "zero denominator".into(),
            });
        }
        let ratio = Ratio::new(numerator, denominator);
        if !ratio.is_positive() || ratio >= Ratio::new(2, 1) {
            return Err(Error::OrderOutOfRange(format!("{ratio}")));
        }
        Ok(Self(ratio))
    }

    pub fn numerator(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denominator(&self) -> i64 {
        *self.0.denom()
    }

    pub fn as_ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn value(&self) -> f64 {
        self.numerator() as f64 / self.denominator() as f64
    }

    /// True when the order is at least 1, i.e. the state carries a classical
    /// first-derivative initial value.
    pub fn has_first_derivative_ic(&self) -> bool {
        self.0 >= Ratio::one()
    }

    /// Renders the exact decimal expansion when the denominator divides a
    /// power of ten, falling back to `num/den` otherwise.
    pub fn decimal_string(&self) -> String {
        let den = self.denominator();
        let mut scale: i64 = 1;
        for _ in 0..=12 {
            if scale % den == 0 {
                let scaled = self.numerator() * (scale / den);
                if scale == 1 {
                    return format!("{scaled}");
                }
                let digits = (scale as f64).log10().round() as usize;
                let int_part = scaled / scale;
                let frac_part = scaled % scale;
                let frac = format!("{frac_part:0width$}", width = digits);
                let frac = frac.trim_end_matches('0');
                if frac.is_empty() {
                    return format!("{int_part}");
                }
                return format!("{int_part}.{frac}");
            }
            scale = match scale.checked_mul(10) {
                Some(s) => s,
                None => break,
            };
        }
        format!("{}/{}", self.numerator(), self.denominator())
    }
}

impl fmt::Display for RationalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.decimal_string())
    }
}

/// Parses a decimal order string such as `"0.93"` or `"1"` into an exact
/// rational. At most six fractional digits are accepted.
pub fn parse_order(text: &str) -> Result<RationalOrder> {
    let trimmed = text.trim();
    let malformed = |reason: &str| Error::MalformedOrder {
        text: text.to_string(),
        reason: reason.into(),
    };
    if trimmed.is_empty() {
        return Err(malformed("empty string"));
    }
    let (int_part, frac_part) = match trimmed.split_once('.') {
        Some((i, f)) => (i, f),
        None => (trimmed, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed("no digits"));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) && !int_part.is_empty() {
        return Err(malformed("non-digit characters in integer part"));
    }
    if !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(malformed("non-digit characters in fractional part"));
    }
    if frac_part.len() > 6 {
        return Err(malformed("more than 6 fractional digits"));
    }
    let int_val: i64 = if int_part.is_empty() {
        0
    } else {
        int_part
            .parse()
            .map_err(|_| malformed("integer part overflow"))?
    };
    let den = 10_i64.pow(frac_part.len() as u32);
    let frac_val: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part
            .parse()
            .map_err(|_| malformed("fractional part overflow"))?
    };
    let num = int_val
        .checked_mul(den)
        .and_then(|v| v.checked_add(frac_val))
        .ok_or_else(|| malformed("value overflow"))?;
    RationalOrder::new(num, den)
}

impl FromStr for RationalOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_order(s)
    }
}

/// The greatest common divisor of a set of rational orders together with the
/// integer multiplicities `p_i = alpha_i / alpha_c`.
pub fn commensurate_base(orders: &[RationalOrder]) -> Result<(RationalOrder, Vec<usize>)> {
    if orders.is_empty() {
        return Err(Error::DimensionMismatch("empty order list".into()));
    }
    let mut common_den: i64 = 1;
    for o in orders {
        common_den = common_den
            .checked_mul(o.denominator() / common_den.gcd(&o.denominator()))
            .ok_or_else(|| Error::Numeric("denominator lcm overflow".into()))?;
    }
    let mut scaled = Vec::with_capacity(orders.len());
    for o in orders {
        let m = o
            .numerator()
            .checked_mul(common_den / o.denominator())
            .ok_or_else(|| Error::Numeric("numerator scaling overflow".into()))?;
        scaled.push(m);
    }
    let g = scaled.iter().fold(0_i64, |acc, &m| acc.gcd(&m));
    debug_assert!(g > 0);
    let alpha_c = RationalOrder::new(g, common_den)?;
    let p: Vec<usize> = scaled.iter().map(|&m| (m / g) as usize).collect();
    for (o, &pi) in orders.iter().zip(&p) {
        debug_assert_eq!(
            alpha_c.as_ratio() * Ratio::new(pi as i64, 1),
            o.as_ratio(),
            "multiplicity must reconstruct the order exactly"
        );
    }
    Ok((alpha_c, p))
}
