// SPDX-License-Identifier: Apache-2.0

//! Bit growth along a chain of consecutive additions.
//!
//! A chain adds one maximal operand `M = 2^(N+1) - 1` per step to a running
//! sum, where `N` is the position of the operand's highest data bit. Step
//! `s = 1` is the first addition (two operands summed); step 0 is a lone
//! operand. The worst-case sum after `s` steps is `(s + 1) * M`, and its bit
//! length is the ground truth for where the width grows.
//!
//! [`overflow_step`] is the closed-form prediction of the step at which the
//! `n`-th extra bit appears, `floor(2^(N+n) / (2^(N+1) - 1))`. It matches the
//! accumulation for every `N >= 1`; for `N = 0` it returns `2^n` while the
//! accumulation grows at `2^n - 1`.
//!
//! Everything here is exact; intermediate powers are `BigUint`.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GrowthError {
    #[error("overflow index must be at least 1")]
    ZeroOverflowIndex,
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("operand must have at least one data bit")]
    ZeroOperandBits,
}

/// Position `N` of the highest data bit of a chain operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperandWidth(u32);

impl OperandWidth {
    pub fn new(highest_bit: u32) -> Self {
        Self(highest_bit)
    }

    /// From a data bit count `B = N + 1`.
    pub fn from_bits(bits: u32) -> Result<Self, GrowthError> {
        bits.checked_sub(1).map(Self).ok_or(GrowthError::ZeroOperandBits)
    }

    pub fn n(self) -> u32 {
        self.0
    }

    /// `B = N + 1`.
    pub fn bits(self) -> u32 {
        self.0 + 1
    }

    /// `M = 2^(N+1) - 1`.
    pub fn max_operand(self) -> BigUint {
        pow2(self.bits() as u64) - 1u32
    }
}

/// Where the width of a chain's running sum grows, over a number of steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthProfile {
    pub width: OperandWidth,
    pub steps: u64,
    /// Step indices at which the bit length increases, strictly increasing.
    pub overflow_positions: Vec<u64>,
    /// Bit length reached at each overflow position.
    pub bit_lengths: Vec<u64>,
}

impl GrowthProfile {
    /// `(position, k, bit length)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.overflow_positions
            .iter()
            .zip(&self.bit_lengths)
            .enumerate()
            .map(|(i, (&p, &b))| (p, i as u64 + 1, b))
    }
}

fn pow2(e: u64) -> BigUint {
    BigUint::one() << e
}

/// `2^(N+k) - 1`, the all-ones value after the `k`-th overflow.
pub fn worst_case_result(width: OperandWidth, k: u32) -> Result<BigUint, GrowthError> {
    if k < 1 {
        return Err(GrowthError::ZeroOverflowIndex);
    }
    Ok(pow2(width.n() as u64 + k as u64) - 1u32)
}

/// Predicted gap between overflow `k` and `k + 1`:
/// `floor(2^(N+k) / (2^(N+1) - 1))`.
pub fn steps_between_overflows(width: OperandWidth, k: u32) -> Result<BigUint, GrowthError> {
    if k < 1 {
        return Err(GrowthError::ZeroOverflowIndex);
    }
    Ok(pow2(width.n() as u64 + k as u64) / width.max_operand())
}

/// Predicted step of the `n`-th overflow: `floor(2^(N+n) / (2^(N+1) - 1))`.
pub fn overflow_step(width: OperandWidth, n: u32) -> Result<BigUint, GrowthError> {
    if n < 1 {
        return Err(GrowthError::ZeroOverflowIndex);
    }
    Ok(pow2(width.n() as u64 + n as u64) / width.max_operand())
}

/// Bit length of `(s + 1) * M`, the worst-case sum after `s` additions.
pub fn oracle_bit_length(width: OperandWidth, s: u64) -> u64 {
    ((BigUint::from(s) + 1u32) * width.max_operand()).bits()
}

/// Extra bits accumulated by step `s`: `oracle_bit_length - (N + 1)`.
pub fn growth_at_step(width: OperandWidth, s: u64) -> u64 {
    oracle_bit_length(width, s) - width.bits() as u64
}

/// First step at which the accumulated sum has grown by `n` bits, i.e. the
/// least `s` with `(s + 1) * M >= 2^(N+n)`.
pub fn first_step_with_growth(width: OperandWidth, n: u32) -> Result<BigUint, GrowthError> {
    if n < 1 {
        return Err(GrowthError::ZeroOverflowIndex);
    }
    let target = pow2(width.n() as u64 + n as u64);
    Ok(target.div_ceil(&width.max_operand()) - 1u32)
}

/// All overflow positions in `[1, steps]`.
pub fn profile(width: OperandWidth, steps: u64) -> Result<GrowthProfile, GrowthError> {
    if steps < 1 {
        return Err(GrowthError::ZeroSteps);
    }
    let mut overflow_positions = Vec::new();
    let mut bit_lengths = Vec::new();
    for n in 1u32.. {
        let s = first_step_with_growth(width, n)?;
        match s.to_u64() {
            Some(s) if s <= steps => {
                overflow_positions.push(s);
                bit_lengths.push(width.bits() as u64 + n as u64);
            }
            _ => break,
        }
    }
    Ok(GrowthProfile {
        width,
        steps,
        overflow_positions,
        bit_lengths,
    })
}
