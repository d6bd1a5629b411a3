// SPDX-License-Identifier: Apache-2.0

//! Overflow prediction for chains of consecutive additions, chain-aware
//! fixed-point format allocation, and bit-accurate simulation of the
//! resulting data paths.

pub mod allocator;
pub mod bitgrowth;
pub mod cli;
pub mod dfg;
pub mod dyadic;
pub mod fxformat;
pub mod scalar;
pub mod simulator;

pub use allocator::{
    assign_formats, assign_formats_with, predict_chains, AllocationReport, ErrorModel, NodeAllocation,
};
pub use bitgrowth::{GrowthProfile, OperandWidth};
pub use dfg::{parse, DataFlowGraph};
pub use dyadic::Dyadic;
pub use fxformat::{FixedValue, Format};

/// Simulation engine on 64-bit host integers.
pub type Engine64 = simulator::Engine<i64>;
/// Simulation engine on 128-bit host integers.
pub type Engine128 = simulator::Engine<i128>;
/// Simulation engine on unbounded integers.
pub type EngineBig = simulator::Engine<num_bigint::BigInt>;
