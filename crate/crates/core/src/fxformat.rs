// SPDX-License-Identifier: Apache-2.0

//! Fixed-point formats in `(S/I/F)` notation and the single-operation
//! result-format rules.
//!
//! A format partitions a machine word into `S` sign (or pad) bits, `I`
//! integer bits and `F` fraction bits. A raw payload `r` under format `f`
//! and scale exponent `s` represents `r * 2^(s - F)`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::dyadic::Dyadic;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("format has zero total width")]
    ZeroWidth,
    #[error("signed format needs at least one sign bit")]
    SignedWithoutSignBit,
    #[error("malformed notation `{0}`")]
    Malformed(String),
    #[error("operands have mixed signedness: {0} and {1}")]
    MixedSignedness(Format, Format),
    #[error("cannot truncate {bits} bits from a format with {frac} fraction bits")]
    TruncateIntoInteger { bits: u32, frac: u32 },
    #[error("value {value} does not fit {format} (raw {raw})")]
    OutOfRange { value: String, raw: BigInt, format: Format },
    #[error("value is not a finite real number")]
    NotFinite,
}

/// Returned by [`fit_to_word`] when the minimal format needs more bits than
/// the word provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("format does not fit the word: {deficit} bit(s) short")]
pub struct DoesNotFit {
    pub deficit: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Format {
    sign_bits: u32,
    int_bits: u32,
    frac_bits: u32,
    signed: bool,
}

impl Format {
    pub fn new(sign_bits: u32, int_bits: u32, frac_bits: u32, signed: bool) -> Result<Self, FormatError> {
        if sign_bits + int_bits + frac_bits == 0 {
            return Err(FormatError::ZeroWidth);
        }
        if signed && sign_bits == 0 {
            return Err(FormatError::SignedWithoutSignBit);
        }
        Ok(Self {
            sign_bits,
            int_bits,
            frac_bits,
            signed,
        })
    }

    pub fn signed(sign_bits: u32, int_bits: u32, frac_bits: u32) -> Result<Self, FormatError> {
        Self::new(sign_bits, int_bits, frac_bits, true)
    }

    pub fn unsigned(pad_bits: u32, int_bits: u32, frac_bits: u32) -> Result<Self, FormatError> {
        Self::new(pad_bits, int_bits, frac_bits, false)
    }

    /// The minimal format with the given data layout (one sign bit when
    /// signed, none otherwise).
    pub fn minimal(int_bits: u32, frac_bits: u32, signed: bool) -> Result<Self, FormatError> {
        Self::new(u32::from(signed), int_bits, frac_bits, signed)
    }

    pub fn sign_bits(&self) -> u32 {
        self.sign_bits
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn width(&self) -> u32 {
        self.sign_bits + self.int_bits + self.frac_bits
    }

    /// `D = I + F`.
    pub fn data_bits(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    /// 0-indexed position of the highest data bit, when there is one.
    pub fn highest_data_bit(&self) -> Option<u32> {
        self.data_bits().checked_sub(1)
    }

    /// Sign bits a format of this signedness cannot do without.
    pub fn min_sign_bits(&self) -> u32 {
        u32::from(self.signed)
    }

    /// Same data layout, sign/pad bits dropped to the minimum.
    pub fn to_minimal(&self) -> Self {
        Self {
            sign_bits: self.min_sign_bits(),
            ..*self
        }
    }

    /// Same layout and signedness, comparing only `I`, `F` and signedness.
    pub fn same_data_layout(&self, other: &Self) -> bool {
        self.int_bits == other.int_bits && self.frac_bits == other.frac_bits && self.signed == other.signed
    }

    pub fn raw_max(&self) -> BigInt {
        (BigInt::one() << self.data_bits() as usize) - 1
    }

    pub fn raw_min(&self) -> BigInt {
        if self.signed {
            -(BigInt::one() << self.data_bits() as usize)
        } else {
            BigInt::zero()
        }
    }

    /// Lowest raw value of the symmetric range `[-(2^D - 1), 2^D - 1]` that
    /// worst-case growth analysis assumes for signed operands.
    pub fn raw_min_symmetric(&self) -> BigInt {
        if self.signed {
            -self.raw_max()
        } else {
            BigInt::zero()
        }
    }

    pub fn contains_raw(&self, raw: &BigInt) -> bool {
        *raw >= self.raw_min() && *raw <= self.raw_max()
    }

    /// Promotes an unsigned layout to signed by adding the sign bit.
    pub fn promote_to_signed(&self) -> Self {
        if self.signed {
            *self
        } else {
            Self {
                sign_bits: self.sign_bits.max(1),
                signed: true,
                ..*self
            }
        }
    }

    /// Re-expresses this layout for a value whose scale exponent grows by
    /// `delta`: the binary point moves left, so `F` grows and `I` shrinks
    /// (clamped at zero, which only over-approximates the range).
    pub fn rescaled_up(&self, delta: u32) -> Self {
        Self {
            int_bits: self.int_bits.saturating_sub(delta),
            frac_bits: self.frac_bits + delta,
            ..*self
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}/{}/{})", self.sign_bits, self.int_bits, self.frac_bits)?;
        if !self.signed && self.sign_bits > 0 {
            f.write_str("u")?;
        }
        Ok(())
    }
}

/// How a format was spelled on input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spelling {
    /// `S/I/F`
    ThreeField,
    /// `I/F`, unsigned
    TwoField,
}

/// A parsed format together with its original spelling, so reports can echo
/// what the user wrote.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Notation {
    pub format: Format,
    pub spelling: Spelling,
}

impl fmt::Display for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spelling {
            Spelling::TwoField if self.format.sign_bits == 0 => {
                write!(f, "({}/{})", self.format.int_bits, self.format.frac_bits)
            }
            _ => self.format.fmt(f),
        }
    }
}

impl FromStr for Notation {
    type Err = FormatError;

    /// Accepts `S/I/F`, `(S/I/F)`, a trailing `u` for unsigned formats with
    /// pad bits, and the unsigned two-field form `I/F`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || FormatError::Malformed(s.to_string());
        let mut t = s.trim();
        let force_unsigned = match t.strip_suffix('u') {
            Some(rest) => {
                t = rest;
                true
            }
            None => false,
        };
        if let Some(inner) = t.strip_prefix('(') {
            t = inner.strip_suffix(')').ok_or_else(malformed)?;
        }
        let fields = t
            .split('/')
            .map(|p| p.trim().parse::<u32>().map_err(|_| malformed()))
            .collect::<Result<Vec<_>, _>>()?;
        match fields[..] {
            [s_bits, i, f] => {
                let signed = s_bits >= 1 && !force_unsigned;
                Ok(Notation {
                    format: Format::new(s_bits, i, f, signed)?,
                    spelling: Spelling::ThreeField,
                })
            }
            [i, f] => Ok(Notation {
                format: Format::unsigned(0, i, f)?,
                spelling: Spelling::TwoField,
            }),
            _ => Err(malformed()),
        }
    }
}

impl FromStr for Format {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Notation>().map(|n| n.format)
    }
}

/// A raw payload interpreted under a format and a power-of-two scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedValue {
    raw: BigInt,
    format: Format,
    scale_exp: i64,
}

impl FixedValue {
    pub fn new(raw: impl Into<BigInt>, format: Format, scale_exp: i64) -> Result<Self, FormatError> {
        let raw = raw.into();
        if !format.contains_raw(&raw) {
            return Err(FormatError::OutOfRange {
                value: Dyadic::new(raw.clone(), scale_exp - format.frac_bits as i64).to_string(),
                raw,
                format,
            });
        }
        Ok(Self { raw, format, scale_exp })
    }

    /// Encodes `x` by truncation: `raw = floor(x * 2^F)`, scale 0.
    pub fn encode<T: Real>(x: &T, format: Format) -> Result<Self, FormatError> {
        let raw = x.floor_scaled(format.frac_bits as i64).ok_or(FormatError::NotFinite)?;
        Self::new(raw, format, 0)
    }

    pub fn raw(&self) -> &BigInt {
        &self.raw
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn scale_exp(&self) -> i64 {
        self.scale_exp
    }

    /// Exact represented value `raw * 2^(scale - F)`.
    pub fn value(&self) -> Dyadic {
        Dyadic::new(self.raw.clone(), self.scale_exp - self.format.frac_bits as i64)
    }

    pub fn decode<T: Real>(&self) -> T {
        T::from_dyadic(&self.value())
    }

    /// The `W`-bit two's-complement pattern, most significant bit first.
    pub fn bit_pattern(&self) -> String {
        let w = self.format.width() as usize;
        let modulus = BigInt::one() << w;
        let mut v = self.raw.clone();
        if v.is_negative() {
            v += &modulus;
        }
        (0..w).rev().map(|i| if v.bit(i as u64) { '1' } else { '0' }).collect()
    }

    /// Drops `j` fraction LSBs by arithmetic (flooring) right shift.
    pub fn truncate_lsbs(&self, j: u32) -> Result<Self, FormatError> {
        let (format, _) = truncate_lsbs(self.format, j)?;
        Ok(Self {
            raw: &self.raw >> j as usize,
            format: Format {
                sign_bits: format.sign_bits + j,
                ..format
            },
            scale_exp: self.scale_exp,
        })
    }
}

/// Minimal worst-case format of `a + b`.
pub fn add_min_format(a: Format, b: Format) -> Result<Format, FormatError> {
    if a.signed != b.signed {
        return Err(FormatError::MixedSignedness(a, b));
    }
    Format::minimal(a.int_bits.max(b.int_bits) + 1, a.frac_bits.max(b.frac_bits), a.signed)
}

/// [`add_min_format`] after promoting an unsigned operand when the other is
/// signed.
pub fn add_min_format_promoting(a: Format, b: Format) -> Format {
    let (a, b) = if a.signed != b.signed {
        (a.promote_to_signed(), b.promote_to_signed())
    } else {
        (a, b)
    };
    add_min_format(a, b).expect("operands normalized to one signedness")
}

/// Minimal worst-case format of `a - b`; always signed.
pub fn sub_min_format(a: Format, b: Format) -> Format {
    add_min_format(a.promote_to_signed(), b.promote_to_signed()).expect("both signed")
}

/// Minimal format of `a * b`: integer and fraction lengths add.
pub fn mul_min_format(a: Format, b: Format) -> Format {
    Format::minimal(a.int_bits + b.int_bits, a.frac_bits + b.frac_bits, a.signed || b.signed)
        .expect("product of valid formats has a positive width")
}

/// Pads a minimal format out to a `word`-bit word.
pub fn fit_to_word(minimal: Format, word: u32) -> Result<Format, DoesNotFit> {
    let needed = minimal.data_bits() + minimal.min_sign_bits();
    if needed > word {
        return Err(DoesNotFit { deficit: needed - word });
    }
    Ok(Format {
        sign_bits: word - minimal.data_bits(),
        ..minimal
    })
}

/// Drops `j` fraction bits. The returned bound `2^-F * (2^j - 1)` is the
/// largest value the dropped bits can hold.
pub fn truncate_lsbs(f: Format, j: u32) -> Result<(Format, Dyadic), FormatError> {
    if j > f.frac_bits {
        return Err(FormatError::TruncateIntoInteger {
            bits: j,
            frac: f.frac_bits,
        });
    }
    let error = Dyadic::new((BigInt::one() << j as usize) - 1, -(f.frac_bits as i64));
    Ok((
        Format {
            frac_bits: f.frac_bits - j,
            ..f
        },
        error,
    ))
}
