//! Arithmetic backends.
//!
//! Every numerical routine in the crate is generic over [`Scalar`], which is
//! implemented for `f64` and for arbitrary-precision rationals ([`Rational`]).
//! Rational mode makes field operations exact, so identities such as the
//! reconstruction of the claim or the orthogonality of martingale increments
//! can be checked with equality instead of a tolerance.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
pub use num_traits::{One, Zero};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

/// Which arithmetic backend a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "rational" => Ok(Mode::Exact),
            "float" | "f64" => Ok(Mode::Float),
            other => Err(Error::Parse(format!("unknown arithmetic mode `{other}`"))),
        }
    }
}

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    const MODE: Mode;

    fn from_i64(v: i64) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    /// Converts a finite float. Rationals take the exact binary value.
    fn from_f64(v: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    fn abs(&self) -> Self;

    /// Square root of a non-negative value. Exact for perfect-square rationals;
    /// otherwise a rational approximation with relative error below 1e-40.
    fn sqrt(&self) -> Self;

    /// Parses either a decimal literal (`0.25`, `-3`, `1e-3`) or a ratio `p/q`.
    fn parse(s: &str) -> Result<Self>;

    /// Canonical text form: `p/q` (or `p`) for rationals, 17 significant
    /// digits for floats.
    fn format(&self) -> String;

    fn is_finite(&self) -> bool;

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn powi(&self, exp: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: f64 = p.trim().parse().map_err(|_| Error::Parse(s.to_string()))?;
            let q: f64 = q.trim().parse().map_err(|_| Error::Parse(s.to_string()))?;
            if q == 0.0 {
                return Err(Error::Parse(format!("zero denominator in `{s}`")));
            }
            return Ok(p / q);
        }
        let v: f64 = s.parse().map_err(|_| Error::Parse(s.to_string()))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite number `{s}`")));
        }
        Ok(v)
    }

    fn format(&self) -> String {
        format!("{:.16e}", self)
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Exact;

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(v: f64) -> Option<Self> {
        Rational::from_float(v)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs(&self) -> Self {
        num_traits::Signed::abs(self)
    }

    fn sqrt(&self) -> Self {
        rational_sqrt(self)
    }

    fn parse(s: &str) -> Result<Self> {
        parse_rational(s)
    }

    fn format(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn is_finite(&self) -> bool {
        true
    }
}

fn parse_rational(raw: &str) -> Result<Rational> {
    let s = raw.trim();
    let bad = || Error::Parse(format!("invalid number `{raw}`"));
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_rational(p)?;
        let q = parse_rational(q)?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{raw}`")));
        }
        return Ok(p / q);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: BigInt = all_digits.parse().map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

fn rational_sqrt(x: &Rational) -> Rational {
    assert!(
        !num_traits::Signed::is_negative(x),
        "square root of a negative rational"
    );
    if x.is_zero() {
        return Rational::zero();
    }
    let (n, d) = (x.numer(), x.denom());
    let (rn, rd) = (num_integer::Roots::sqrt(n), num_integer::Roots::sqrt(d));
    if &(&rn * &rn) == n && &(&rd * &rd) == d {
        return Rational::new(rn, rd);
    }
    // floor(sqrt(n * d) * 10^k) / (d * 10^k): absolute error below
    // 1/(d * 10^k), relative error below 10^-k because n * d >= 1.
    let digits = 48;
    let scale = num_traits::pow(BigInt::from(10), digits);
    let root = num_integer::Roots::sqrt(&(n * d * &scale * &scale));
    Rational::new(root, d * scale)
}

/// Converts between backends through the canonical text form.
pub fn convert<A: Scalar, B: Scalar>(a: &A) -> B {
    match (A::MODE, B::MODE) {
        (Mode::Float, Mode::Exact) => B::from_f64(a.to_f64()).expect("finite float"),
        _ => B::parse(&a.format()).expect("canonical form parses"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Rational {
        Rational::parse(s).unwrap()
    }

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(q("0.25"), Rational::from_ratio(1, 4));
        assert_eq!(q("-1.5e2"), Rational::from_i64(-150));
        assert_eq!(q("1e-3"), Rational::from_ratio(1, 1000));
        assert_eq!(q(" 88/25 "), Rational::from_ratio(88, 25));
        assert_eq!(q("3"), Rational::from_i64(3));
    }

    #[test]
    fn rejects_garbage() {
        assert!(Rational::parse("abc").is_err());
        assert!(Rational::parse("1/0").is_err());
        assert!(Rational::parse("").is_err());
        assert!(f64::parse("nan").is_err());
    }

    #[test]
    fn formats_rationals_as_ratios() {
        assert_eq!(Rational::from_ratio(88, 25).format(), "88/25");
        assert_eq!(Rational::from_ratio(-62, 2).format(), "-31");
        assert_eq!(f64::parse("7/2").unwrap(), 3.5);
    }

    #[test]
    fn exact_square_roots() {
        assert_eq!(q("9").sqrt(), q("3"));
        assert_eq!(q("9/16").sqrt(), q("3/4"));
        let two = q("2").sqrt();
        let err = (two.clone() * two - q("2")).abs();
        assert!(err < q("1e-40"));
        let tiny = q("2e-30").sqrt();
        let rel = ((tiny.clone() * tiny - q("2e-30")) / q("2e-30")).abs();
        assert!(rel < q("1e-40"));
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-7, 123456.789] {
            assert_eq!(f64::parse(&v.format()).unwrap(), v);
        }
    }
}
