// SPDX-License-Identifier: Apache-2.0

//! Bit-accurate execution of allocated graphs, the exact reference executor,
//! error-bound verification and the accumulation harness.
//!
//! Stored values follow the allocation exactly: operands are aligned at the
//! finer of their LSBs, summed or multiplied exactly, then floored onto the
//! node's LSB `2^(scale - F)`. The reference evaluates the same graph in
//! exact arithmetic from the same quantized inputs.

mod engine;
mod inputs;

use std::fmt;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use engine::{AnyEngine, Engine, FormatViolation, Scratch};
pub use inputs::{
    parse_decimal, parse_inputs, parse_inputs_csv, parse_inputs_json, InputError, InputValue, InputVector, OutOfRange,
};

use crate::allocator::AllocationReport;
use crate::bitgrowth::{GrowthError, GrowthProfile, OperandWidth};
use crate::dfg::{DataFlowGraph, NodeKind};
use crate::dyadic::Dyadic;
use crate::fxformat::Format;
use crate::scalar::RawInt;
use engine::Plan;

/// Name of the pseudo-random generator behind [`verify_bounds`].
pub const RNG_NAME: &str = "ChaCha8";

/// Cap on the input combinations [`verify_exhaustive`] will enumerate.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("allocation does not cover the graph's nodes")]
    AllocationMismatch,
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("overflow at node \"{}\": raw {} does not fit {}{}", .0.violation.node, .0.violation.raw, .0.violation.format, .0.inputs_note())]
    Overflow(Box<OverflowReport>),
    #[error("exhaustive run needs {combinations} input combinations, limit is {limit}")]
    TooManyCombinations { combinations: BigInt, limit: u64 },
    #[error("trial count must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverflowReport {
    pub violation: FormatViolation,
    pub inputs: Vec<(String, BigInt)>,
}

impl OverflowReport {
    fn inputs_note(&self) -> String {
        if self.inputs.is_empty() {
            return String::new();
        }
        let list: Vec<String> = self.inputs.iter().map(|(id, r)| format!("{id}=raw:{r}")).collect();
        format!(" (inputs {})", list.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeResult {
    pub id: String,
    pub format: Format,
    pub scale_exp: i64,
    pub raw: BigInt,
    /// `raw * 2^(scale - F)`.
    pub stored: Dyadic,
    pub reference: Dyadic,
    /// `|raw * 2^-F - reference / 2^scale|`, in stored units.
    pub deviation: Dyadic,
    pub bound: Dyadic,
}

impl NodeResult {
    pub fn within_bound(&self) -> bool {
        self.deviation <= self.bound
    }
}

/// One trial, nodes in topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationResult {
    pub nodes: Vec<NodeResult>,
}

impl SimulationResult {
    pub fn get(&self, id: &str) -> Option<&NodeResult> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn within_bounds(&self) -> bool {
        self.nodes.iter().all(NodeResult::within_bound)
    }
}

/// A bound violation found during verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// 0-based trial index (combination index for exhaustive runs).
    pub trial: u64,
    pub node: String,
    /// Raw payloads of the inputs, file order.
    pub inputs: Vec<(String, BigInt)>,
    pub deviation: Dyadic,
    pub bound: Dyadic,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inputs: Vec<String> = self.inputs.iter().map(|(id, r)| format!("{id}=raw:{r}")).collect();
        write!(
            f,
            "trial {}: node \"{}\" deviates by {} ({}) above its bound {} ({}); inputs {}",
            self.trial,
            self.node,
            self.deviation.terms_string(),
            self.deviation.to_decimal(9),
            self.bound.terms_string(),
            self.bound.to_decimal(9),
            inputs.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeVerdict {
    pub id: String,
    pub bound: Dyadic,
    pub max_deviation: Dyadic,
    /// Trials in which this node exceeded its bound.
    pub violations: u64,
}

impl NodeVerdict {
    /// `max_deviation / bound`; `None` for a zero bound.
    pub fn tightness(&self) -> Option<f64> {
        if self.bound.is_zero() {
            None
        } else {
            Some(self.max_deviation.to_f64() / self.bound.to_f64())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub trials: u64,
    /// Host integer the engine ran on.
    pub host: &'static str,
    /// Topological order.
    pub nodes: Vec<NodeVerdict>,
    /// Trials with at least one node above its bound.
    pub failing_trials: u64,
    pub first_violation: Option<Counterexample>,
}

impl Verdict {
    pub fn is_sound(&self) -> bool {
        self.failing_trials == 0
    }
}

struct Prepared {
    plan: Plan,
    engine: AnyEngine,
}

fn prepare(g: &DataFlowGraph, alloc: &AllocationReport) -> Result<Prepared, SimError> {
    let plan = Plan::compile(g, alloc).ok_or(SimError::AllocationMismatch)?;
    let engine = AnyEngine::select(&plan);
    Ok(Prepared { plan, engine })
}

fn input_ids(g: &DataFlowGraph) -> Vec<String> {
    g.inputs().map(|ix| g.node(ix).id.clone()).collect()
}

fn overflow(g: &DataFlowGraph, raws: Vec<BigInt>, violation: FormatViolation) -> SimError {
    SimError::Overflow(Box::new(OverflowReport {
        violation,
        inputs: input_ids(g).into_iter().zip(raws).collect(),
    }))
}

/// Runs one trial and reports every node.
pub fn run_fixed(
    g: &DataFlowGraph,
    alloc: &AllocationReport,
    inputs: &InputVector,
) -> Result<SimulationResult, SimError> {
    let raws = inputs.bind(g)?;
    let p = prepare(g, alloc)?;
    let (stored, reference) = match &p.engine {
        AnyEngine::I64(e) => run_collect(e, &raws),
        AnyEngine::I128(e) => run_collect(e, &raws),
        AnyEngine::Big(e) => run_collect(e, &raws),
    }
    .map_err(|v| overflow(g, raws.clone(), v))?;
    let nodes = p
        .plan
        .order
        .iter()
        .map(|&v| {
            let n = &p.plan.nodes[v];
            let stored_value = Dyadic::new(stored[v].clone(), n.lsb);
            let reference_value = Dyadic::new(reference[v].clone(), n.ref_lsb);
            let deviation = (&stored_value - &reference_value).abs().mul_pow2(-n.scale);
            NodeResult {
                id: n.id.clone(),
                format: n.format,
                scale_exp: n.scale,
                raw: stored[v].clone(),
                stored: stored_value,
                reference: reference_value,
                deviation,
                bound: n.bound.clone(),
            }
        })
        .collect();
    Ok(SimulationResult { nodes })
}

type Collected = (Vec<BigInt>, Vec<BigInt>);

fn run_collect<R: RawInt>(e: &Engine<R>, raws: &[BigInt]) -> Result<Collected, FormatViolation> {
    let host: Vec<R> = raws
        .iter()
        .map(|r| R::from_bigint(r).expect("input fits the plan"))
        .collect();
    let mut s = e.scratch();
    e.run(&host, &mut s)?;
    Ok((
        s.stored.iter().map(RawInt::to_bigint).collect(),
        s.reference.iter().map(RawInt::to_bigint).collect(),
    ))
}

/// Exact evaluation of every node from the quantized inputs, topological
/// order. Independent of the allocation.
pub fn run_reference(g: &DataFlowGraph, inputs: &InputVector) -> Result<Vec<(String, Dyadic)>, SimError> {
    let raws = inputs.bind(g)?;
    let mut values = vec![Dyadic::zero(); g.len()];
    for (ix, raw) in g.inputs().zip(raws) {
        let f = g.node(ix).declared.expect("validated").format;
        values[ix.0] = Dyadic::new(raw, -(f.frac_bits() as i64));
    }
    for &ix in g.topological_order() {
        let node = g.node(ix);
        let op = |k: usize| &values[node.operands[k].0];
        values[ix.0] = match node.kind {
            NodeKind::Input => continue,
            NodeKind::Const => node.const_value.clone().expect("validated"),
            NodeKind::Add => op(0) + op(1),
            NodeKind::Sub => op(0) - op(1),
            NodeKind::Mul => op(0) * op(1),
            NodeKind::Output => op(0).clone(),
        };
    }
    Ok(g.topological_order()
        .iter()
        .map(|ix| (g.node(*ix).id.clone(), values[ix.0].clone()))
        .collect())
}

/// Accumulates per-node maxima and violations over trials on one engine.
struct Tally<'p, R> {
    plan: &'p Plan,
    engine: &'p Engine<R>,
    scratch: Scratch<R>,
    max: Vec<R>,
    violations: Vec<u64>,
    failing_trials: u64,
    first: Option<Counterexample>,
    trials: u64,
}

impl<'p, R: RawInt> Tally<'p, R> {
    fn new(plan: &'p Plan, engine: &'p Engine<R>) -> Self {
        let n = plan.nodes.len();
        Self {
            plan,
            engine,
            scratch: engine.scratch(),
            max: vec![R::zero(); n],
            violations: vec![0; n],
            failing_trials: 0,
            first: None,
            trials: 0,
        }
    }

    fn trial(&mut self, g: &DataFlowGraph, index: u64, inputs: &[R]) -> Result<(), SimError> {
        let to_big = || inputs.iter().map(RawInt::to_bigint).collect::<Vec<_>>();
        self.engine
            .run(inputs, &mut self.scratch)
            .map_err(|v| overflow(g, to_big(), v))?;
        self.trials += 1;
        let mut failed = false;
        for &v in &self.plan.order {
            let d = &self.scratch.deviation[v];
            if *d > self.max[v] {
                self.max[v] = d.clone();
            }
            if d > self.engine.bound(v) {
                self.violations[v] += 1;
                if !failed && self.first.is_none() {
                    let n = &self.plan.nodes[v];
                    self.first = Some(Counterexample {
                        trial: index,
                        node: n.id.clone(),
                        inputs: input_ids(g).into_iter().zip(to_big()).collect(),
                        deviation: self.plan.deviation_in_stored_units(v, d.to_bigint()),
                        bound: n.bound.clone(),
                    });
                }
                failed = true;
            }
        }
        self.failing_trials += failed as u64;
        Ok(())
    }

    fn finish(self, host: &'static str) -> Verdict {
        let nodes = self
            .plan
            .order
            .iter()
            .map(|&v| NodeVerdict {
                id: self.plan.nodes[v].id.clone(),
                bound: self.plan.nodes[v].bound.clone(),
                max_deviation: self.plan.deviation_in_stored_units(v, self.max[v].to_bigint()),
                violations: self.violations[v],
            })
            .collect();
        Verdict {
            trials: self.trials,
            host,
            nodes,
            failing_trials: self.failing_trials,
            first_violation: self.first,
        }
    }
}

/// Analysed raw range of each input, file order.
fn input_ranges(g: &DataFlowGraph) -> Vec<(BigInt, BigInt)> {
    g.inputs()
        .map(|ix| {
            let f = g.node(ix).declared.expect("validated").format;
            (f.raw_min_symmetric(), f.raw_max())
        })
        .collect()
}

/// Uniform integer in `[lo, hi]` by rejection on the span's bit length.
fn uniform(rng: &mut ChaCha8Rng, lo: &BigInt, hi: &BigInt) -> BigInt {
    let span = hi - lo + 1u32;
    let bits = span.bits();
    if bits <= 64 {
        let span = span.to_u64().expect("checked width");
        return lo + BigInt::from(rng.random_range(0..span));
    }
    let words = bits.div_ceil(64) as usize;
    let top = bits - 64 * (words as u64 - 1);
    loop {
        let mut v = BigInt::zero();
        for w in 0..words {
            let mut x: u64 = rng.random();
            if w == 0 && top < 64 {
                x >>= 64 - top;
            }
            v = (v << 64usize) + x;
        }
        if v < span {
            return lo + v;
        }
    }
}

/// Seeded random trials over the analysed input ranges; identical seeds give
/// identical verdicts.
pub fn verify_bounds(g: &DataFlowGraph, alloc: &AllocationReport, trials: u64, seed: u64) -> Result<Verdict, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let p = prepare(g, alloc)?;
    let ranges = input_ranges(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..trials).map(move |_| ranges.iter().map(|(lo, hi)| uniform(&mut rng, lo, hi)).collect());
    let host = p.engine.host_name();
    match &p.engine {
        AnyEngine::I64(e) => run_trials(g, &p.plan, e, draws, host),
        AnyEngine::I128(e) => run_trials(g, &p.plan, e, draws, host),
        AnyEngine::Big(e) => run_trials(g, &p.plan, e, draws, host),
    }
}

fn run_trials<R: RawInt>(
    g: &DataFlowGraph,
    plan: &Plan,
    engine: &Engine<R>,
    draws: impl Iterator<Item = Vec<BigInt>>,
    host: &'static str,
) -> Result<Verdict, SimError> {
    let mut t = Tally::new(plan, engine);
    for (i, raws) in draws.enumerate() {
        let inputs: Vec<R> = raws
            .iter()
            .map(|r| R::from_bigint(r).expect("input fits the plan"))
            .collect();
        t.trial(g, i as u64, &inputs)?;
    }
    Ok(t.finish(host))
}

/// Every combination of input values in the analysed ranges.
pub fn verify_exhaustive(g: &DataFlowGraph, alloc: &AllocationReport, limit: u64) -> Result<Verdict, SimError> {
    let p = prepare(g, alloc)?;
    let ranges = input_ranges(g);
    let combinations: BigInt = ranges.iter().map(|(lo, hi)| hi - lo + 1u32).product();
    if combinations > BigInt::from(limit) {
        return Err(SimError::TooManyCombinations { combinations, limit });
    }
    let host = p.engine.host_name();
    match &p.engine {
        AnyEngine::I64(e) => run_all(g, &p.plan, e, &ranges, host),
        AnyEngine::I128(e) => run_all(g, &p.plan, e, &ranges, host),
        AnyEngine::Big(e) => run_all(g, &p.plan, e, &ranges, host),
    }
}

fn run_all<R: RawInt>(
    g: &DataFlowGraph,
    plan: &Plan,
    engine: &Engine<R>,
    ranges: &[(BigInt, BigInt)],
    host: &'static str,
) -> Result<Verdict, SimError> {
    let mut t = Tally::new(plan, engine);
    let domains: Vec<Vec<R>> = ranges
        .iter()
        .map(|(lo, hi)| {
            num_iter_range(lo, hi)
                .map(|v| R::from_bigint(&v).expect("input fits the plan"))
                .collect()
        })
        .collect();
    let mut digits = vec![0usize; domains.len()];
    let mut current: Vec<R> = domains.iter().map(|d| d[0].clone()).collect();
    let mut index = 0u64;
    'outer: loop {
        t.trial(g, index, &current)?;
        index += 1;
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < domains[k].len() {
                current[k] = domains[k][digits[k]].clone();
                continue 'outer;
            }
            digits[k] = 0;
            current[k] = domains[k][0].clone();
        }
        break;
    }
    Ok(t.finish(host))
}

fn num_iter_range(lo: &BigInt, hi: &BigInt) -> impl Iterator<Item = BigInt> {
    let (mut x, hi) = (lo.clone(), hi.clone());
    std::iter::from_fn(move || {
        (x <= hi).then(|| {
            let v = x.clone();
            x += 1u32;
            v
        })
    })
}

/// Literal accumulation of the maximal operand `2^(N+1) - 1`, recording each
/// step at which the running sum's bit length grows.
pub fn accumulate_harness(width: OperandWidth, steps: u64) -> Result<GrowthProfile, GrowthError> {
    if steps < 1 {
        return Err(GrowthError::ZeroSteps);
    }
    let m = width.max_operand();
    let mut acc = m.clone();
    let mut bits = acc.bits();
    let mut overflow_positions = Vec::new();
    let mut bit_lengths = Vec::new();
    for s in 1..=steps {
        acc += &m;
        if acc.bits() > bits {
            bits = acc.bits();
            overflow_positions.push(s);
            bit_lengths.push(bits);
        }
    }
    Ok(GrowthProfile {
        width,
        steps,
        overflow_positions,
        bit_lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{assign_formats, assign_formats_with, ErrorModel};
    use crate::bitgrowth::profile;
    use crate::dfg::parse;

    const FIR5: &str = include_str!("../../tests/data/fir5.dfg");

    fn raw(v: i64) -> InputValue {
        InputValue::Raw(v.into())
    }

    #[test]
    fn harness_reproduces_accumulation_table() {
        let p = accumulate_harness(OperandWidth::new(7), 10_000).unwrap();
        assert_eq!(
            p.overflow_positions,
            [1, 2, 4, 8, 16, 32, 64, 128, 257, 514, 1028, 2056, 4112, 8224]
        );
        assert_eq!(p.bit_lengths, (9..=22).collect::<Vec<u64>>());
        assert_eq!(
            accumulate_harness(OperandWidth::new(7), 1).unwrap().overflow_positions,
            [1]
        );
        assert_eq!(
            accumulate_harness(OperandWidth::new(3), 100)
                .unwrap()
                .overflow_positions,
            [1, 2, 4, 8, 17, 34, 68]
        );
        assert_eq!(accumulate_harness(OperandWidth::new(3), 0), Err(GrowthError::ZeroSteps));
        for n in 0..=12 {
            let w = OperandWidth::new(n);
            assert_eq!(accumulate_harness(w, 5000).unwrap(), profile(w, 5000).unwrap());
        }
    }

    #[test]
    fn add_of_two_adc_samples() {
        let g = parse("word 16\ninput a 1/7/0\ninput b 1/7/0\nnode s = add a b\noutput y s").unwrap();
        let alloc = assign_formats(&g).unwrap();
        let r = run_fixed(&g, &alloc, &InputVector::new().with("a", raw(125)).with("b", raw(5))).unwrap();
        let s = r.get("s").unwrap();
        assert_eq!(s.raw, BigInt::from(130));
        assert_eq!(s.format.data_bits(), 8);
        assert_eq!(s.raw.bits(), 8);
        // 8 magnitude bits plus the sign: 9 data bits
        assert_eq!(s.format.int_bits() + s.format.min_sign_bits(), 9);
    }

    #[test]
    fn zeros_stay_zero() {
        let g = parse(FIR5).unwrap();
        let alloc = assign_formats(&g).unwrap();
        let r = run_fixed(&g, &alloc, &InputVector::zeros(&g)).unwrap();
        assert!(r.nodes.iter().all(|n| n.raw.is_zero() && n.deviation.is_zero()));
        let reference = run_reference(&g, &InputVector::zeros(&g)).unwrap();
        assert!(reference.iter().all(|(_, v)| v.is_zero()));
    }

    #[test]
    fn engine_reference_matches_independent_reference() {
        let g = parse(FIR5).unwrap();
        let alloc = assign_formats(&g).unwrap();
        let v = (0..5).fold(InputVector::new(), |v, i| {
            v.with(&format!("x{i}"), raw(37 * i - 90))
                .with(&format!("w{i}"), raw(255 - 61 * i))
        });
        let fixed = run_fixed(&g, &alloc, &v).unwrap();
        let reference = run_reference(&g, &v).unwrap();
        for (n, (id, value)) in fixed.nodes.iter().zip(&reference) {
            assert_eq!(&n.id, id);
            assert_eq!(&n.reference, value);
        }
        let n6 = fixed.get("n6").unwrap();
        let n1 = fixed.get("n1").unwrap().reference.clone();
        let n2 = fixed.get("n2").unwrap().reference.clone();
        assert_eq!(n6.reference, n1 + n2);
    }

    #[test]
    fn maximal_inputs_stay_in_format() {
        let g = parse(FIR5).unwrap();
        let alloc = assign_formats_with(&g, ErrorModel::Conservative).unwrap();
        let v = (0..5).fold(InputVector::new(), |v, i| {
            v.with(&format!("x{i}"), raw(127)).with(&format!("w{i}"), raw(255))
        });
        let r = run_fixed(&g, &alloc, &v).unwrap();
        assert!(r.within_bounds());
        let n9 = r.get("n9").unwrap();
        let table_bound = Dyadic::pow2(-16) + Dyadic::pow2(-17) + Dyadic::pow2(-18);
        assert!(n9.deviation <= table_bound);
    }

    #[test]
    fn pass_through_reference_is_quantized_input() {
        let g = parse("word 16\ninput a 1/3/4\noutput y a").unwrap();
        let alloc = assign_formats(&g).unwrap();
        let v = InputVector::new().with("a", InputValue::parse("5.95").unwrap());
        let r = run_reference(&g, &v).unwrap();
        assert_eq!(r[1].1, "5.9375".parse().unwrap());
        let f = run_fixed(&g, &alloc, &v).unwrap();
        assert_eq!(f.get("y").unwrap().raw, BigInt::from(95));
    }

    #[test]
    fn understated_bound_yields_counterexample() {
        let g = parse("word 8\ninput a 1/1/6\ninput b 1/1/6\nnode m = mul a b\noutput y m").unwrap();
        let mut alloc = assign_formats(&g).unwrap();
        assert!(verify_exhaustive(&g, &alloc, DEFAULT_EXHAUSTIVE_LIMIT)
            .unwrap()
            .is_sound());
        for n in &mut alloc.nodes {
            if n.id == "m" {
                n.error_bound = Dyadic::pow2(-20);
            }
        }
        let v = verify_bounds(&g, &alloc, 200, 7).unwrap();
        assert!(!v.is_sound());
        let c = v.first_violation.unwrap();
        assert_eq!(c.node, "m");
        assert!(c.deviation > c.bound);
        assert!(c.to_string().contains("node \"m\""));
    }

    #[test]
    fn verification_is_deterministic() {
        let g = parse(FIR5).unwrap();
        let alloc = assign_formats_with(&g, ErrorModel::Conservative).unwrap();
        let a = verify_bounds(&g, &alloc, 300, 42).unwrap();
        let b = verify_bounds(&g, &alloc, 300, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.host, "i64");
        assert!(a.is_sound());
        assert_eq!(verify_bounds(&g, &alloc, 0, 1), Err(SimError::NoTrials));
    }

    #[test]
    fn exhaustive_limit() {
        let g = parse(FIR5).unwrap();
        let alloc = assign_formats(&g).unwrap();
        assert!(matches!(
            verify_exhaustive(&g, &alloc, 1000),
            Err(SimError::TooManyCombinations { .. })
        ));
    }

    #[test]
    fn uniform_draws_cover_wide_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lo = -(BigInt::from(1) << 100usize);
        let hi = BigInt::from(1) << 100usize;
        let draws: Vec<BigInt> = (0..64).map(|_| uniform(&mut rng, &lo, &hi)).collect();
        assert!(draws.iter().all(|d| *d >= lo && *d <= hi));
        assert!(draws.iter().any(|d| d.sign() == num_bigint::Sign::Minus));
        assert!(draws.iter().any(|d| d.bits() > 90));
    }
}
