// SPDX-License-Identifier: Apache-2.0

//! Scalar abstractions.
//!
//! [`Real`] is the set of real-number types that can be encoded into (and
//! decoded from) a fixed-point word. [`RawInt`] is the integer type the
//! simulation engine carries raw payloads in; narrow host integers are used
//! when a static width analysis proves they cannot overflow, `BigInt`
//! otherwise.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};

use crate::dyadic::Dyadic;

pub trait Real: Sized {
    /// `floor(self * 2^shift)`, or `None` when the value is not finite.
    fn floor_scaled(&self, shift: i64) -> Option<BigInt>;

    fn from_dyadic(d: &Dyadic) -> Self;
}

impl Real for f64 {
    fn floor_scaled(&self, shift: i64) -> Option<BigInt> {
        Dyadic::from_f64(*self).map(|d| d.floor_scaled(shift))
    }

    fn from_dyadic(d: &Dyadic) -> Self {
        d.to_f64()
    }
}

impl Real for f32 {
    fn floor_scaled(&self, shift: i64) -> Option<BigInt> {
        Dyadic::from_f64(f64::from(*self)).map(|d| d.floor_scaled(shift))
    }

    fn from_dyadic(d: &Dyadic) -> Self {
        d.to_f64() as f32
    }
}

impl Real for Dyadic {
    fn floor_scaled(&self, shift: i64) -> Option<BigInt> {
        Some(Dyadic::floor_scaled(self, shift))
    }

    fn from_dyadic(d: &Dyadic) -> Self {
        d.clone()
    }
}

impl Real for BigRational {
    fn floor_scaled(&self, shift: i64) -> Option<BigInt> {
        let (mut n, mut d) = (self.numer().clone(), self.denom().clone());
        if shift >= 0 {
            n <<= shift as usize;
        } else {
            d <<= (-shift) as usize;
        }
        Some(n.div_floor(&d))
    }

    fn from_dyadic(d: &Dyadic) -> Self {
        d.to_rational()
    }
}

/// Signed integer carrier for raw fixed-point payloads.
pub trait RawInt:
    Clone + Ord + Debug + Zero + One + Signed + CheckedAdd + CheckedSub + CheckedMul + Send + Sync
{
    /// Width in bits of the host type, `None` when unbounded.
    const HOST_BITS: Option<u32>;

    fn from_bigint(v: &BigInt) -> Option<Self>;

    fn to_bigint(&self) -> BigInt;

    /// `self * 2^bits`, `None` on host overflow.
    fn checked_shl_value(&self, bits: u32) -> Option<Self>;

    /// `floor(self / 2^bits)`.
    fn shr_floor(&self, bits: u32) -> Self;

    /// Bit length of `|self|`.
    fn magnitude_bits(&self) -> u32;
}

macro_rules! raw_int_impl {
    ($($t:ty),+) => {
        $(
            impl RawInt for $t {
                const HOST_BITS: Option<u32> = Some(<$t>::BITS);

                fn from_bigint(v: &BigInt) -> Option<Self> {
                    ToPrimitive::to_i128(v).and_then(|x| <$t>::try_from(x).ok())
                }

                fn to_bigint(&self) -> BigInt {
                    BigInt::from(*self)
                }

                fn checked_shl_value(&self, bits: u32) -> Option<Self> {
                    if *self == 0 {
                        return Some(0);
                    }
                    if bits >= <$t>::BITS {
                        return None;
                    }
                    let shifted = *self << bits;
                    (shifted >> bits == *self).then_some(shifted)
                }

                fn shr_floor(&self, bits: u32) -> Self {
                    if bits >= <$t>::BITS {
                        if *self < 0 { -1 } else { 0 }
                    } else {
                        *self >> bits
                    }
                }

                fn magnitude_bits(&self) -> u32 {
                    <$t>::BITS - self.unsigned_abs().leading_zeros()
                }
            }
        )+
    };
}

raw_int_impl!(i64, i128);

impl RawInt for BigInt {
    const HOST_BITS: Option<u32> = None;

    fn from_bigint(v: &BigInt) -> Option<Self> {
        Some(v.clone())
    }

    fn to_bigint(&self) -> BigInt {
        self.clone()
    }

    fn checked_shl_value(&self, bits: u32) -> Option<Self> {
        Some(self << bits as usize)
    }

    fn shr_floor(&self, bits: u32) -> Self {
        self >> bits as usize
    }

    fn magnitude_bits(&self) -> u32 {
        self.bits() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_scaled_agrees_across_reals() {
        let cases = ["5.9375", "-5.9375", "0.3", "-0.3", "1e-3", "-1234.5678"];
        for c in cases {
            let x: f64 = c.parse().unwrap();
            let r = BigRational::from_float(x).unwrap();
            for shift in [0, 4, 15, -2] {
                assert_eq!(x.floor_scaled(shift), r.floor_scaled(shift), "{c} {shift}");
                let d = Dyadic::from_f64(x).unwrap();
                assert_eq!(Real::floor_scaled(&d, shift), r.floor_scaled(shift));
            }
        }
        assert_eq!(f64::INFINITY.floor_scaled(3), None);
    }

    #[test]
    fn shifts_detect_host_overflow() {
        assert_eq!(5i64.checked_shl_value(61), None);
        assert_eq!(3i64.checked_shl_value(61), Some(3 << 61));
        assert_eq!(1i64.checked_shl_value(62), Some(1 << 62));
        assert_eq!((-1i64).checked_shl_value(63), Some(i64::MIN));
        assert_eq!((-7i64).shr_floor(1), -4);
        assert_eq!((-7i64).shr_floor(80), -1);
        assert_eq!(BigInt::from(-7).shr_floor(1), BigInt::from(-4));
        assert_eq!(i64::MIN.magnitude_bits(), 64);
        assert_eq!(255i128.magnitude_bits(), 8);
    }
}
