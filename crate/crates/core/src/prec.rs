//! Fixed-precision decimal arithmetic used for coefficient verification and
//! the polynomial solver.
//!
//! Splitting-method coefficients are published as decimal strings with up to
//! 40 significant digits. Verifying order conditions to 1e-30 and polishing
//! solutions to 40 printed digits needs guard digits beyond that, so all
//! certification and solver arithmetic runs on [`BigFloat`] values carrying an
//! explicit decimal precision (50 digits by default, see [`DEFAULT_DIGITS`]).
//!
//! The backing store is a radix-10 arbitrary-precision float, which makes the
//! "parse a table entry, print it back" round trip exact by construction.

use dashu_float::ops::Abs;
use dashu_float::round::mode::HalfAway;
use dashu_float::{DBig, FBig};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

/// Default working precision (decimal digits) for certification and solving.
pub const DEFAULT_DIGITS: usize = 50;

type FBin = FBig<HalfAway, 2>;

/// Arbitrary-precision decimal float with explicit significant-digit count.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BigFloat(DBig);

#[derive(Debug, thiserror::Error)]
#[error("invalid decimal literal {literal:?}")]
pub struct ParseBigFloatError {
    pub literal: String,
}

impl BigFloat {
    /// Parse a decimal literal (plain or scientific notation) and round it to
    /// `digits` significant digits.
    pub fn parse(s: &str, digits: usize) -> Result<Self, ParseBigFloatError> {
        let v = DBig::from_str(s.trim()).map_err(|_| ParseBigFloatError {
            literal: s.to_string(),
        })?;
        Ok(BigFloat(v.with_precision(digits.max(1)).value()))
    }

    /// Lift an `f64` exactly (every finite double is a finite decimal), then
    /// round to `digits` digits.
    pub fn from_f64(v: f64, digits: usize) -> Self {
        assert!(v.is_finite(), "cannot lift non-finite f64 into BigFloat");
        let exact = FBin::try_from(v).expect("finite f64");
        BigFloat(
            exact
                .with_base_and_precision::<10>(digits.max(20))
                .value()
                .with_precision(digits.max(1))
                .value(),
        )
    }

    pub fn from_int(v: i64, digits: usize) -> Self {
        BigFloat(DBig::from(v).with_precision(digits.max(1)).value())
    }

    /// Exact small rational `num/den` at the requested precision.
    pub fn ratio(num: i64, den: i64, digits: usize) -> Self {
        assert!(den != 0);
        let n = DBig::from(num).with_precision(digits.max(1)).value();
        let d = DBig::from(den).with_precision(digits.max(1)).value();
        BigFloat(n / d)
    }

    pub fn zero(digits: usize) -> Self {
        BigFloat(DBig::ZERO.clone().with_precision(digits.max(1)).value())
    }

    pub fn one(digits: usize) -> Self {
        BigFloat(DBig::ONE.clone().with_precision(digits.max(1)).value())
    }

    /// Significant-digit budget carried by this value.
    pub fn digits(&self) -> usize {
        self.0.precision()
    }

    /// Re-round to a different precision.
    pub fn with_digits(&self, digits: usize) -> Self {
        BigFloat(self.0.clone().with_precision(digits.max(1)).value())
    }

    pub fn is_zero(&self) -> bool {
        self.0 == DBig::ZERO
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }

    pub fn abs(&self) -> Self {
        BigFloat(self.0.clone().abs())
    }

    pub fn sqrt(&self) -> Self {
        BigFloat(self.0.sqrt())
    }

    pub fn powi(&self, e: i64) -> Self {
        BigFloat(self.0.powi(e.into()))
    }

    pub fn max(&self, other: &Self) -> Self {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// Decompose into (sign, significand digit string, power-of-ten exponent of
    /// the last digit), normalized so the digit string has no leading zeros.
    fn parts(&self) -> (bool, String, isize) {
        let negative = self.0 < DBig::ZERO;
        let magnitude = self.0.clone().abs();
        let repr = magnitude.repr();
        (negative, format!("{}", repr.significand()), repr.exponent())
    }

    /// Fixed-notation rendering with exactly `sig` significant digits
    /// (trailing zeros preserved), matching how coefficient tables print.
    /// Falls back to scientific notation outside `1e-9 <= |x| < 1e9`.
    pub fn to_decimal_string(&self, sig: usize) -> String {
        let sig = sig.max(1);
        if self.is_zero() {
            return if sig == 1 {
                "0".to_string()
            } else {
                format!("0.{}", "0".repeat(sig - 1))
            };
        }
        let rounded = self.with_digits(sig);
        let (neg, mut d, mut exp) = rounded.parts();
        while d.len() > sig && d.ends_with('0') {
            d.pop();
            exp += 1;
        }
        let pad = sig.saturating_sub(d.len());
        d.push_str(&"0".repeat(pad));
        exp -= pad as isize;
        let lead = exp + d.len() as isize - 1; // power of ten of the first digit
        if !(-9..9).contains(&lead) {
            return self.to_sci(sig);
        }
        let s = if lead >= 0 {
            let point = (lead + 1) as usize;
            if point >= d.len() {
                let int_pad = "0".repeat(point - d.len());
                format!("{d}{int_pad}")
            } else {
                format!("{}.{}", &d[..point], &d[point..])
            }
        } else {
            format!("0.{}{}", "0".repeat((-lead - 1) as usize), d)
        };
        if neg {
            format!("-{s}")
        } else {
            s
        }
    }

    /// Scientific notation with `sig` significant digits, e.g. `1.23e-31`.
    pub fn to_sci(&self, sig: usize) -> String {
        let sig = sig.max(1);
        if self.is_zero() {
            return if sig == 1 {
                "0e0".to_string()
            } else {
                format!("0.{}e0", "0".repeat(sig - 1))
            };
        }
        let rounded = self.with_digits(sig);
        let (neg, mut d, mut exp) = rounded.parts();
        let pad = sig.saturating_sub(d.len());
        d.push_str(&"0".repeat(pad));
        exp -= pad as isize;
        let lead = exp + d.len() as isize - 1;
        let mantissa = if d.len() == 1 {
            d
        } else {
            format!("{}.{}", &d[..1], &d[1..])
        };
        let sign = if neg { "-" } else { "" };
        format!("{sign}{mantissa}e{lead}")
    }
}

impl fmt::Debug for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BigFloat({})", self.to_sci(20))
    }
}

impl fmt::Display for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! bigfloat_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for BigFloat {
            type Output = BigFloat;
            fn $method(self, rhs: BigFloat) -> BigFloat {
                BigFloat(self.0.$method(rhs.0))
            }
        }
        impl $trait<&BigFloat> for BigFloat {
            type Output = BigFloat;
            fn $method(self, rhs: &BigFloat) -> BigFloat {
                BigFloat(self.0.$method(&rhs.0))
            }
        }
        impl $trait<BigFloat> for &BigFloat {
            type Output = BigFloat;
            fn $method(self, rhs: BigFloat) -> BigFloat {
                BigFloat((&self.0).$method(rhs.0))
            }
        }
        impl $trait<&BigFloat> for &BigFloat {
            type Output = BigFloat;
            fn $method(self, rhs: &BigFloat) -> BigFloat {
                BigFloat((&self.0).$method(&rhs.0))
            }
        }
    };
}

bigfloat_binop!(Add, add);
bigfloat_binop!(Sub, sub);
bigfloat_binop!(Mul, mul);
bigfloat_binop!(Div, div);

impl Neg for BigFloat {
    type Output = BigFloat;
    fn neg(self) -> BigFloat {
        BigFloat(-self.0)
    }
}

impl Neg for &BigFloat {
    type Output = BigFloat;
    fn neg(self) -> BigFloat {
        BigFloat(-self.0.clone())
    }
}

/// Count the significant digits of a decimal literal (ignoring sign, the
/// decimal point and leading zeros).
pub fn significant_digits(literal: &str) -> usize {
    let mut seen_nonzero = false;
    let mut count = 0;
    for ch in literal.trim().chars() {
        match ch {
            '0' if !seen_nonzero => {}
            '0'..='9' => {
                seen_nonzero = true;
                count += 1;
            }
            'e' | 'E' => break,
            _ => {}
        }
    }
    count
}

/// Complex number over [`BigFloat`], used by the homotopy path tracker.
#[derive(Clone, PartialEq)]
pub struct BigComplex {
    pub re: BigFloat,
    pub im: BigFloat,
}

impl BigComplex {
    pub fn new(re: BigFloat, im: BigFloat) -> Self {
        BigComplex { re, im }
    }

    pub fn from_real(re: BigFloat) -> Self {
        let im = re.zero_like();
        BigComplex { re, im }
    }

    pub fn zero(digits: usize) -> Self {
        BigComplex::from_real(BigFloat::zero(digits))
    }

    pub fn conj(&self) -> Self {
        BigComplex {
            re: self.re.clone(),
            im: -&self.im,
        }
    }

    pub fn norm_sqr(&self) -> BigFloat {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn mag(&self) -> BigFloat {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: &BigFloat) -> Self {
        BigComplex {
            re: &self.re * s,
            im: &self.im * s,
        }
    }
}

impl fmt::Debug for BigComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}i)", self.re.to_sci(20), self.im.to_sci(20))
    }
}

impl Add for &BigComplex {
    type Output = BigComplex;
    fn add(self, rhs: &BigComplex) -> BigComplex {
        BigComplex {
            re: &self.re + &rhs.re,
            im: &self.im + &rhs.im,
        }
    }
}

impl Sub for &BigComplex {
    type Output = BigComplex;
    fn sub(self, rhs: &BigComplex) -> BigComplex {
        BigComplex {
            re: &self.re - &rhs.re,
            im: &self.im - &rhs.im,
        }
    }
}

impl Mul for &BigComplex {
    type Output = BigComplex;
    fn mul(self, rhs: &BigComplex) -> BigComplex {
        BigComplex {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }
}

impl Div for &BigComplex {
    type Output = BigComplex;
    fn div(self, rhs: &BigComplex) -> BigComplex {
        let den = rhs.norm_sqr();
        let num = self * &rhs.conj();
        BigComplex {
            re: num.re / &den,
            im: num.im / &den,
        }
    }
}

impl Neg for &BigComplex {
    type Output = BigComplex;
    fn neg(self) -> BigComplex {
        BigComplex {
            re: -&self.re,
            im: -&self.im,
        }
    }
}

/// Minimal field-like interface so order-condition evaluation, Newton steps
/// and LU solves can run over f64, BigFloat, complex and dual numbers alike.
pub trait Scalar: Clone {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Division by a small positive integer (multi-index run weights).
    fn div_u32(&self, d: u32) -> Self;
    /// Lift an f64 constant into the same context (precision) as `self`.
    fn lift_f64(&self, v: f64) -> Self;
    /// Lift an exact small rational into the same context as `self`.
    fn lift_ratio(&self, num: i64, den: i64) -> Self;
    /// Approximate magnitude, for pivot selection and step control only.
    fn mag_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn one_like(&self) -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div_u32(&self, d: u32) -> Self {
        self / d as f64
    }
    fn lift_f64(&self, v: f64) -> Self {
        v
    }
    fn lift_ratio(&self, num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn mag_f64(&self) -> f64 {
        self.abs()
    }
}

impl Scalar for BigFloat {
    fn zero_like(&self) -> Self {
        BigFloat::zero(self.digits())
    }
    fn one_like(&self) -> Self {
        BigFloat::one(self.digits())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div_u32(&self, d: u32) -> Self {
        self / BigFloat::from_int(d as i64, self.digits())
    }
    fn lift_f64(&self, v: f64) -> Self {
        BigFloat::from_f64(v, self.digits())
    }
    fn lift_ratio(&self, num: i64, den: i64) -> Self {
        BigFloat::ratio(num, den, self.digits())
    }
    fn mag_f64(&self) -> f64 {
        self.to_f64().abs()
    }
}

impl Scalar for BigComplex {
    fn zero_like(&self) -> Self {
        BigComplex::from_real(self.re.zero_like())
    }
    fn one_like(&self) -> Self {
        BigComplex::from_real(self.re.one_like())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div_u32(&self, d: u32) -> Self {
        let den = BigFloat::from_int(d as i64, self.re.digits());
        BigComplex {
            re: &self.re / &den,
            im: &self.im / &den,
        }
    }
    fn lift_f64(&self, v: f64) -> Self {
        BigComplex::from_real(self.re.lift_f64(v))
    }
    fn lift_ratio(&self, num: i64, den: i64) -> Self {
        BigComplex::from_real(self.re.lift_ratio(num, den))
    }
    fn mag_f64(&self) -> f64 {
        let re = self.re.mag_f64();
        let im = self.im.mag_f64();
        (re * re + im * im).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reprint_roundtrip_exact() {
        let s = "0.04706710064597250612947887637243678556564";
        let x = BigFloat::parse(s, 55).unwrap();
        assert_eq!(x.to_decimal_string(significant_digits(s)), s);
        let neg = "-0.8585754489567828565881283246356000103664";
        let y = BigFloat::parse(neg, 55).unwrap();
        assert_eq!(y.to_decimal_string(significant_digits(neg)), neg);
    }

    #[test]
    fn trailing_zeros_preserved() {
        let x = BigFloat::parse("0.2500", 50).unwrap();
        assert_eq!(x.to_decimal_string(4), "0.2500");
        let one = BigFloat::one(50);
        assert_eq!(one.to_decimal_string(5), "1.0000");
    }

    #[test]
    fn sci_rendering() {
        let x = BigFloat::parse("1.2345e-31", 50).unwrap();
        assert_eq!(x.to_sci(3), "1.23e-31");
        assert_eq!(BigFloat::zero(50).to_sci(3), "0.00e0");
        let y = BigFloat::parse("-9.99e5", 50).unwrap();
        assert_eq!(y.to_sci(2), "-1.0e6");
    }

    #[test]
    fn precision_propagates_through_arithmetic() {
        let third = BigFloat::ratio(1, 3, 60);
        let back = &third * &BigFloat::from_int(3, 60) - BigFloat::one(60);
        assert!(back.abs() < BigFloat::parse("1e-58", 10).unwrap());
    }

    #[test]
    fn sqrt_matches_square() {
        let two = BigFloat::from_int(2, 60);
        let r = two.sqrt();
        let err = (&r * &r - &two).abs();
        assert!(err < BigFloat::parse("1e-58", 10).unwrap());
    }

    #[test]
    fn complex_division() {
        let d = 50;
        let a = BigComplex::new(BigFloat::from_int(3, d), BigFloat::from_int(4, d));
        let q = &a / &a;
        assert!((&q.re - BigFloat::one(d)).abs().to_f64() < 1e-45);
        assert!(q.im.abs().to_f64() < 1e-45);
    }

    #[test]
    fn significant_digit_counting() {
        assert_eq!(significant_digits("0.04706710064597250612947887637243678556564"), 40);
        assert_eq!(significant_digits("-0.009976522883811240843267468164812380613143"), 40);
        assert_eq!(significant_digits("1.00"), 3);
    }
}
