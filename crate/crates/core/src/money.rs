//! Numeric representations for bids, payments and coefficients.
//!
//! Everything that is a money amount is generic over [`Money`]. Two
//! implementations are provided: `f64` for simulation throughput and
//! [`BigRational`] for exact results. Mechanism coefficients (WCO `c`,
//! HETERO `alpha`, the scaling LP) are always computed as `BigRational`
//! and converted at the boundary with [`Money::from_rational`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Relative tolerance used when comparing floating point money amounts.
pub const FLOAT_TIE_TOLERANCE: f64 = 1e-9;

pub trait Money:
    Clone + Debug + PartialOrd + Signed + FromPrimitive + Send + Sync + 'static
{
    fn from_rational(r: &BigRational) -> Self;

    fn as_f64(&self) -> f64;

    /// Exact value, when the representation carries one.
    fn to_rational(&self) -> Option<BigRational>;

    /// Equality used for tie detection. Exact for rationals, relative
    /// tolerance [`FLOAT_TIE_TOLERANCE`] for floats.
    fn ties(&self, other: &Self) -> bool;

    /// Finite and nonnegative.
    fn is_valid_bid(&self) -> bool;

    fn from_count(k: usize) -> Self {
        Self::from_usize(k).expect("count representable")
    }
}

impl Money for f64 {
    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r)
    }

    fn as_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> Option<BigRational> {
        None
    }

    fn ties(&self, other: &Self) -> bool {
        let scale = 1f64.max(self.abs()).max(other.abs());
        (self - other).abs() <= FLOAT_TIE_TOLERANCE * scale
    }

    fn is_valid_bid(&self) -> bool {
        self.is_finite() && *self >= 0.0
    }
}

impl Money for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn as_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn to_rational(&self) -> Option<BigRational> {
        Some(self.clone())
    }

    fn ties(&self, other: &Self) -> bool {
        self == other
    }

    fn is_valid_bid(&self) -> bool {
        !self.is_negative()
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(x) = r.to_f64() {
        if x.is_finite() {
            return x;
        }
    }
    // Very large numerator and denominator: scale both down first.
    let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
    let num = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let den = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    num / den
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(k: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(k))
}

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn binomial_q(n: u64, k: u64) -> BigRational {
    BigRational::from_integer(binomial(n, k))
}

/// Parses a plain decimal literal (`-12.5`, `3`, `1e-3`) into an exact rational.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer: BigInt = all_digits.parse().ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Exact rational with the shortest decimal expansion that round-trips to `x`.
pub fn f64_to_decimal_rational(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    parse_decimal(&format!("{x}"))
}

/// The rational with the smallest denominator in the closed interval `[lo, hi]`.
///
/// Stern-Brocot descent on the continued fraction expansions of the endpoints.
pub fn simplest_between(lo: &BigRational, hi: &BigRational) -> BigRational {
    assert!(lo <= hi, "empty interval");
    if lo.is_negative() && hi.is_positive() || lo.is_zero() || hi.is_zero() {
        return BigRational::zero();
    }
    if hi.is_negative() {
        return -simplest_between(&-hi, &-lo);
    }
    let fl = lo.floor();
    if fl == *lo {
        return fl;
    }
    if fl + BigRational::one() <= *hi {
        return lo.ceil();
    }
    // Same integer part, recurse on the reciprocals of the fractional parts.
    let whole = lo.floor();
    let lo_frac = lo - &whole;
    let hi_frac = hi - &whole;
    let inner = simplest_between(&hi_frac.recip(), &lo_frac.recip());
    whole + inner.recip()
}

/// `(numerator, denominator)` in lowest terms with a positive denominator.
pub fn rational_parts(r: &BigRational) -> (BigInt, BigInt) {
    let g = r.numer().gcd(r.denom());
    let (mut n, mut d) = (r.numer() / &g, r.denom() / &g);
    if d.is_negative() {
        n = -n;
        d = -d;
    }
    (n, d)
}
