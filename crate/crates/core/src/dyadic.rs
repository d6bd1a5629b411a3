// SPDX-License-Identifier: Apache-2.0

//! Exact dyadic rationals `m * 2^e`.
//!
//! Every value that flows through the data path (raw payloads, scale
//! factors, truncation error bounds) is dyadic, so this type is the exact
//! arithmetic domain for error bounds and decoded values. Values are kept
//! normalized: the mantissa is odd, or zero with exponent zero.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DyadicParseError {
    #[error("malformed number `{0}`")]
    Malformed(String),
    #[error("`{0}` is not a dyadic rational (denominator is not a power of two)")]
    NotDyadic(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Self {
            mantissa: BigInt::zero(),
            exp: 0,
        }
    }

    /// `m * 2^exp`, normalized.
    pub fn new(mantissa: impl Into<BigInt>, exp: i64) -> Self {
        let mut mantissa = mantissa.into();
        if mantissa.is_zero() {
            return Self::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        mantissa >>= tz;
        Self {
            mantissa,
            exp: exp + tz as i64,
        }
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Self::new(n, 0)
    }

    /// `2^exp`.
    pub fn pow2(exp: i64) -> Self {
        Self {
            mantissa: BigInt::one(),
            exp,
        }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    pub fn abs(&self) -> Self {
        Self {
            mantissa: self.mantissa.abs(),
            exp: self.exp,
        }
    }

    /// Multiplies by `2^k` (k may be negative).
    pub fn mul_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        Self {
            mantissa: self.mantissa.clone(),
            exp: self.exp + k,
        }
    }

    /// Integer mantissa of this value expressed at exponent `exp`, if exact.
    pub fn to_scaled_integer(&self, exp: i64) -> Option<BigInt> {
        if self.is_zero() {
            return Some(BigInt::zero());
        }
        if self.exp < exp {
            return None;
        }
        Some(&self.mantissa << (self.exp - exp) as usize)
    }

    /// `floor(self * 2^shift)`.
    pub fn floor_scaled(&self, shift: i64) -> BigInt {
        let e = self.exp + shift;
        if e >= 0 {
            &self.mantissa << e as usize
        } else {
            // arithmetic right shift floors for negative values
            &self.mantissa >> (-e) as usize
        }
    }

    pub fn to_rational(&self) -> BigRational {
        if self.exp >= 0 {
            BigRational::from_integer(&self.mantissa << self.exp as usize)
        } else {
            BigRational::new(self.mantissa.clone(), BigInt::one() << (-self.exp) as usize)
        }
    }

    pub fn from_rational(r: &BigRational) -> Option<Self> {
        let denom = r.denom();
        if denom.is_zero() || denom.is_negative() {
            return None;
        }
        let tz = denom.trailing_zeros().unwrap_or(0);
        if denom >> tz as usize != BigInt::one() {
            return None;
        }
        Some(Self::new(r.numer().clone(), -(tz as i64)))
    }

    /// Exact conversion from a finite `f64`.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Self::zero());
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        Some(Self::new(BigInt::from(m) * sign, e))
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mantissa.bits() as i64;
        // keep 64 significant bits before the float conversion
        let drop = (bits - 64).max(0);
        let m = (&self.mantissa >> drop as usize).to_f64().unwrap_or(f64::NAN);
        let mut e = self.exp + drop;
        let mut x = m;
        // scale in chunks so intermediate powers stay normal
        while e != 0 && x != 0.0 && x.is_finite() {
            let step = e.clamp(-1000, 1000);
            x *= 2f64.powi(step as i32);
            e -= step;
        }
        x
    }

    /// Exponents of the set bits of a non-negative value, highest first.
    ///
    /// `2^-16 + 2^-17` yields `[-16, -17]`.
    pub fn power_terms(&self) -> Vec<i64> {
        assert!(!self.is_negative(), "power terms of a negative dyadic");
        let mut out = Vec::new();
        let bits = self.mantissa.bits();
        for i in (0..bits).rev() {
            if self.mantissa.bit(i) {
                out.push(self.exp + i as i64);
            }
        }
        out
    }

    /// Renders as a sum of powers of two, e.g. `2^-16+2^-17`; zero renders
    /// as the empty string.
    pub fn terms_string(&self) -> String {
        let mut s = String::new();
        if self.is_negative() {
            s.push('-');
            let inner = self.abs().terms_string();
            s.push('(');
            s.push_str(&inner);
            s.push(')');
            return s;
        }
        for (i, e) in self.power_terms().into_iter().enumerate() {
            if i > 0 {
                s.push('+');
            }
            s.push_str(&format!("2^{e}"));
        }
        s
    }

    /// Inverse of [`Dyadic::terms_string`] for non-negative values. A single
    /// term may also be passed on its own.
    pub fn parse_terms(s: &str) -> Result<Self, DyadicParseError> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::zero());
        }
        let mut acc = Self::zero();
        for term in s.split('+') {
            let exp = term
                .trim()
                .strip_prefix("2^")
                .and_then(|e| e.parse::<i64>().ok())
                .ok_or_else(|| DyadicParseError::Malformed(s.to_string()))?;
            acc += Self::pow2(exp);
        }
        Ok(acc)
    }

    /// Decimal rendering rounded half-to-even to `places` digits after the
    /// point.
    pub fn to_decimal(&self, places: usize) -> String {
        let scale = BigInt::from(10u32).pow(places as u32);
        let r = self.to_rational() * BigRational::from_integer(scale);
        let floor = r.floor();
        let frac = &r - &floor;
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let mut q = floor.to_integer();
        match frac.cmp(&half) {
            Ordering::Greater => q += 1,
            Ordering::Equal if q.is_odd() => q += 1,
            _ => {}
        }
        format_fixed(&q, places)
    }

    /// Exact decimal expansion (always finite for a dyadic).
    pub fn to_exact_decimal(&self) -> String {
        let places = if self.exp < 0 { (-self.exp) as usize } else { 0 };
        let q = if self.exp < 0 {
            &self.mantissa * BigInt::from(5u32).pow(places as u32)
        } else {
            &self.mantissa << self.exp as usize
        };
        let mut s = format_fixed(&q, places);
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    }
}

fn format_fixed(q: &BigInt, places: usize) -> String {
    let neg = q.is_negative();
    let digits = q.abs().to_string();
    let body = if places == 0 {
        digits
    } else {
        let padded = format!("{digits:0>width$}", width = places + 1);
        let (int, frac) = padded.split_at(padded.len() - places);
        format!("{int}.{frac}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::zero()
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exp.min(other.exp);
        let a = &self.mantissa << (self.exp - e) as usize;
        let b = &other.mantissa << (other.exp - e) as usize;
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(rhs.exp);
        let a = &self.mantissa << (self.exp - e) as usize;
        let b = &rhs.mantissa << (rhs.exp - e) as usize;
        Dyadic::new(a + b, e)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        &self + &rhs
    }
}

impl AddAssign for Dyadic {
    fn add_assign(&mut self, rhs: Dyadic) {
        *self = &*self + &rhs;
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic {
            mantissa: -self.mantissa,
            exp: self.exp,
        }
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        self + &(-rhs.clone())
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        &self - &rhs
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic::new(&self.mantissa * &rhs.mantissa, self.exp + rhs.exp)
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Dyadic) -> Dyadic {
        &self * &rhs
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_exact_decimal())
    }
}

impl FromStr for Dyadic {
    type Err = DyadicParseError;

    /// Parses a decimal literal (`-1.25`, `3`, `.5`, `6e-1`); rejects values
    /// that are not dyadic.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || DyadicParseError::Malformed(s.to_string());
        let t = s.trim();
        let (body, exp10) = match t.find(['e', 'E']) {
            Some(i) => {
                let e: i64 = t[i + 1..].parse().map_err(|_| malformed())?;
                (&t[..i], e)
            }
            None => (t, 0),
        };
        let (neg, body) = match body.as_bytes().first() {
            Some(b'-') => (true, &body[1..]),
            Some(b'+') => (false, &body[1..]),
            _ => (false, body),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(malformed());
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let digits = format!("{int}{frac}");
        let mut numer: BigInt = digits.parse().map_err(|_| malformed())?;
        if neg {
            numer = -numer;
        }
        let exp10 = exp10 - frac.len() as i64;
        let ten = BigInt::from(10u32);
        let r = if exp10 >= 0 {
            BigRational::from_integer(numer * ten.pow(exp10 as u32))
        } else {
            BigRational::new(numer, ten.pow((-exp10) as u32))
        };
        Dyadic::from_rational(&r).ok_or_else(|| DyadicParseError::NotDyadic(s.to_string()))
    }
}

impl From<i64> for Dyadic {
    fn from(v: i64) -> Self {
        Dyadic::from_integer(v)
    }
}

impl Zero for Dyadic {
    fn zero() -> Self {
        Dyadic::zero()
    }
    fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }
}
