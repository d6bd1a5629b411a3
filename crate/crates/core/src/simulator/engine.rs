// SPDX-License-Identifier: Apache-2.0

//! Compiled execution plan and the integer engine that runs it.
//!
//! Every node carries two integers per trial: the stored raw value at its
//! allocated LSB `2^(scale - F)`, and the exact reference value at the
//! finest LSB any of its inputs can produce. Deviation is measured on a
//! common per-node grid `2^kappa` fine enough to hold the stored value, the
//! reference and the error bound exactly.

use num_bigint::BigInt;
use num_traits::Zero;

use crate::allocator::AllocationReport;
use crate::dfg::{DataFlowGraph, NodeKind};
use crate::dyadic::Dyadic;
use crate::fxformat::Format;
use crate::scalar::RawInt;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Const {
        raw: BigInt,
        reference: BigInt,
    },
    Mul {
        a: usize,
        b: usize,
        shr: u32,
    },
    Add {
        a: usize,
        b: usize,
        sub: bool,
        shl_a: u32,
        shl_b: u32,
        shr: u32,
        ref_shl_a: u32,
        ref_shl_b: u32,
    },
    Copy {
        a: usize,
    },
}

/// Host-independent description of one node's data path.
#[derive(Debug, Clone)]
pub(crate) struct PlanNode {
    pub id: String,
    pub format: Format,
    pub scale: i64,
    pub bound: Dyadic,
    /// Absolute LSB exponent of the stored raw value.
    pub lsb: i64,
    /// Absolute LSB exponent of the reference integer.
    pub ref_lsb: i64,
    /// Grid on which deviation and bound are compared.
    pub kappa: i64,
    op: Op,
}

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub nodes: Vec<PlanNode>,
    /// Graph node indices in execution order.
    pub order: Vec<usize>,
    /// Graph node indices of the inputs, in file order.
    pub inputs: Vec<usize>,
    /// Largest magnitude, in bits, of any intermediate integer.
    pub max_bits: u64,
}

fn nonneg(x: i64) -> u32 {
    u32::try_from(x).expect("shift fits in u32")
}

impl Plan {
    pub fn compile(g: &DataFlowGraph, alloc: &AllocationReport) -> Option<Self> {
        let allocs = alloc.by_node(g)?;
        let mut nodes: Vec<Option<PlanNode>> = vec![None; g.len()];
        let mut raw_bits = vec![0u64; g.len()];
        let mut ref_bits = vec![0u64; g.len()];
        let mut max_bits = 0u64;

        for &ix in g.topological_order() {
            let node = g.node(ix);
            let a = allocs[ix.0];
            let lsb = a.lsb_exp();
            let get = |k: usize| nodes[node.operands[k].0].as_ref().expect("operands precede users");
            let (op, ref_lsb, inner_bits, rbits) = match node.kind {
                NodeKind::Input => (Op::Input, lsb, 0, a.format.data_bits() as u64 + 1),
                NodeKind::Const => {
                    let v = node.const_value.as_ref().expect("validated");
                    let raw = v.to_scaled_integer(lsb).expect("representable constant");
                    let bits = raw.bits() + 1;
                    (
                        Op::Const {
                            reference: raw.clone(),
                            raw,
                        },
                        lsb,
                        0,
                        bits,
                    )
                }
                NodeKind::Mul => {
                    let (pa, pb) = (get(0), get(1));
                    let product_lsb = pa.lsb + pb.lsb;
                    let (ia, ib) = (node.operands[0].0, node.operands[1].0);
                    (
                        Op::Mul {
                            a: ia,
                            b: ib,
                            shr: nonneg(lsb - product_lsb),
                        },
                        pa.ref_lsb + pb.ref_lsb,
                        raw_bits[ia] + raw_bits[ib],
                        ref_bits[ia] + ref_bits[ib],
                    )
                }
                NodeKind::Add | NodeKind::Sub => {
                    let (pa, pb) = (get(0), get(1));
                    let (ia, ib) = (node.operands[0].0, node.operands[1].0);
                    let base = pa.lsb.min(pb.lsb);
                    let ref_base = pa.ref_lsb.min(pb.ref_lsb);
                    let (shl_a, shl_b) = (nonneg(pa.lsb - base), nonneg(pb.lsb - base));
                    let (ref_shl_a, ref_shl_b) = (nonneg(pa.ref_lsb - ref_base), nonneg(pb.ref_lsb - ref_base));
                    (
                        Op::Add {
                            a: ia,
                            b: ib,
                            sub: node.kind == NodeKind::Sub,
                            shl_a,
                            shl_b,
                            shr: nonneg(lsb - base),
                            ref_shl_a,
                            ref_shl_b,
                        },
                        ref_base,
                        (raw_bits[ia] + shl_a as u64).max(raw_bits[ib] + shl_b as u64) + 1,
                        (ref_bits[ia] + ref_shl_a as u64).max(ref_bits[ib] + ref_shl_b as u64) + 1,
                    )
                }
                NodeKind::Output => {
                    let p = get(0);
                    let i = node.operands[0].0;
                    (Op::Copy { a: i }, p.ref_lsb, raw_bits[i], ref_bits[i])
                }
            };
            let bound_abs = a.error_bound.mul_pow2(a.scale_exp);
            let mut kappa = lsb.min(ref_lsb);
            if !bound_abs.is_zero() {
                kappa = kappa.min(bound_abs.exponent());
            }
            raw_bits[ix.0] = a.format.data_bits() as u64 + 1;
            ref_bits[ix.0] = rbits;
            let dev_bits = (raw_bits[ix.0] + (lsb - kappa) as u64).max(rbits + (ref_lsb - kappa) as u64) + 1;
            let bound_bits = bound_abs.mantissa().bits() + (bound_abs.exponent() - kappa).max(0) as u64;
            max_bits = max_bits.max(inner_bits).max(rbits).max(dev_bits).max(bound_bits);
            nodes[ix.0] = Some(PlanNode {
                id: node.id.clone(),
                format: a.format,
                scale: a.scale_exp,
                bound: a.error_bound.clone(),
                lsb,
                ref_lsb,
                kappa,
                op,
            });
        }
        Some(Self {
            nodes: nodes.into_iter().map(|n| n.expect("every node ordered")).collect(),
            order: g.topological_order().iter().map(|ix| ix.0).collect(),
            inputs: g.inputs().map(|ix| ix.0).collect(),
            max_bits,
        })
    }

    /// Whether every intermediate fits the host integer `R`.
    pub fn fits<R: RawInt>(&self) -> bool {
        R::HOST_BITS.is_none_or(|b| self.max_bits + 2 <= b as u64)
    }

    /// Deviation on the node's grid, as a dyadic in stored units.
    pub fn deviation_in_stored_units(&self, node: usize, d: BigInt) -> Dyadic {
        let n = &self.nodes[node];
        Dyadic::new(d, n.kappa - n.scale)
    }
}

/// A stored raw value that does not fit its allocated format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatViolation {
    pub node: String,
    pub raw: BigInt,
    pub format: Format,
}

#[derive(Debug, Clone)]
struct EngineNode<R> {
    raw_min: R,
    raw_max: R,
    bound: R,
    dev_shift_raw: u32,
    dev_shift_ref: u32,
    op: EngineOp<R>,
}

#[derive(Debug, Clone)]
enum EngineOp<R> {
    Input,
    Const {
        raw: R,
        reference: R,
    },
    Mul {
        a: usize,
        b: usize,
        shr: u32,
    },
    Add {
        a: usize,
        b: usize,
        sub: bool,
        shl_a: u32,
        shl_b: u32,
        shr: u32,
        ref_shl_a: u32,
        ref_shl_b: u32,
    },
    Copy {
        a: usize,
    },
}

/// Per-trial working storage, indexed by graph node.
#[derive(Debug, Clone)]
pub struct Scratch<R> {
    pub stored: Vec<R>,
    pub reference: Vec<R>,
    /// `|stored - reference|` on each node's comparison grid.
    pub deviation: Vec<R>,
}

/// Executes a plan with host integer `R`. Built only when the plan's widest
/// intermediate fits `R`, so arithmetic inside a trial never overflows.
#[derive(Debug, Clone)]
pub struct Engine<R> {
    nodes: Vec<EngineNode<R>>,
    order: Vec<usize>,
    inputs: Vec<usize>,
    ids: Vec<String>,
    formats: Vec<Format>,
}

fn conv<R: RawInt>(v: &BigInt) -> R {
    R::from_bigint(v).expect("plan width checked against host")
}

fn shl<R: RawInt>(v: &R, bits: u32) -> R {
    v.checked_shl_value(bits).expect("plan width checked against host")
}

impl<R: RawInt> Engine<R> {
    pub(crate) fn new(plan: &Plan) -> Option<Self> {
        if !plan.fits::<R>() {
            return None;
        }
        let nodes = plan
            .nodes
            .iter()
            .map(|n| {
                let bound_abs = n.bound.mul_pow2(n.scale);
                let bound = if bound_abs.is_zero() {
                    BigInt::zero()
                } else {
                    bound_abs
                        .to_scaled_integer(n.kappa)
                        .expect("kappa at or below bound LSB")
                };
                let op = match &n.op {
                    Op::Input => EngineOp::Input,
                    Op::Const { raw, reference } => EngineOp::Const {
                        raw: conv(raw),
                        reference: conv(reference),
                    },
                    &Op::Mul { a, b, shr } => EngineOp::Mul { a, b, shr },
                    &Op::Add {
                        a,
                        b,
                        sub,
                        shl_a,
                        shl_b,
                        shr,
                        ref_shl_a,
                        ref_shl_b,
                    } => EngineOp::Add {
                        a,
                        b,
                        sub,
                        shl_a,
                        shl_b,
                        shr,
                        ref_shl_a,
                        ref_shl_b,
                    },
                    &Op::Copy { a } => EngineOp::Copy { a },
                };
                EngineNode {
                    raw_min: conv(&n.format.raw_min()),
                    raw_max: conv(&n.format.raw_max()),
                    bound: conv(&bound),
                    dev_shift_raw: nonneg(n.lsb - n.kappa),
                    dev_shift_ref: nonneg(n.ref_lsb - n.kappa),
                    op,
                }
            })
            .collect();
        Some(Self {
            nodes,
            order: plan.order.clone(),
            inputs: plan.inputs.clone(),
            ids: plan.nodes.iter().map(|n| n.id.clone()).collect(),
            formats: plan.nodes.iter().map(|n| n.format).collect(),
        })
    }

    pub fn scratch(&self) -> Scratch<R> {
        let n = self.nodes.len();
        Scratch {
            stored: vec![R::zero(); n],
            reference: vec![R::zero(); n],
            deviation: vec![R::zero(); n],
        }
    }

    /// Error bound of a node on its comparison grid.
    pub fn bound(&self, node: usize) -> &R {
        &self.nodes[node].bound
    }

    /// Runs one trial. `inputs` holds raw values for the graph's inputs in
    /// file order, already checked against their formats.
    pub fn run(&self, inputs: &[R], s: &mut Scratch<R>) -> Result<(), FormatViolation> {
        for (slot, &node) in self.inputs.iter().enumerate() {
            s.stored[node] = inputs[slot].clone();
            s.reference[node] = inputs[slot].clone();
        }
        for &v in &self.order {
            let n = &self.nodes[v];
            let (raw, reference) = match &n.op {
                EngineOp::Input => (s.stored[v].clone(), s.reference[v].clone()),
                EngineOp::Const { raw, reference } => (raw.clone(), reference.clone()),
                &EngineOp::Mul { a, b, shr } => (
                    (s.stored[a].clone() * s.stored[b].clone()).shr_floor(shr),
                    s.reference[a].clone() * s.reference[b].clone(),
                ),
                &EngineOp::Add {
                    a,
                    b,
                    sub,
                    shl_a,
                    shl_b,
                    shr,
                    ref_shl_a,
                    ref_shl_b,
                } => {
                    let (xa, xb) = (shl(&s.stored[a], shl_a), shl(&s.stored[b], shl_b));
                    let (ya, yb) = (shl(&s.reference[a], ref_shl_a), shl(&s.reference[b], ref_shl_b));
                    if sub {
                        ((xa - xb).shr_floor(shr), ya - yb)
                    } else {
                        ((xa + xb).shr_floor(shr), ya + yb)
                    }
                }
                &EngineOp::Copy { a } => (s.stored[a].clone(), s.reference[a].clone()),
            };
            if raw < n.raw_min || raw > n.raw_max {
                return Err(FormatViolation {
                    node: self.ids[v].clone(),
                    raw: raw.to_bigint(),
                    format: self.formats[v],
                });
            }
            let d = shl(&raw, n.dev_shift_raw) - shl(&reference, n.dev_shift_ref);
            s.deviation[v] = d.abs();
            s.stored[v] = raw;
            s.reference[v] = reference;
        }
        Ok(())
    }
}

/// Engine over the narrowest host integer that holds the plan.
#[derive(Debug, Clone)]
pub enum AnyEngine {
    I64(Engine<i64>),
    I128(Engine<i128>),
    Big(Engine<BigInt>),
}

impl AnyEngine {
    pub(crate) fn select(plan: &Plan) -> Self {
        if let Some(e) = Engine::<i64>::new(plan) {
            Self::I64(e)
        } else if let Some(e) = Engine::<i128>::new(plan) {
            Self::I128(e)
        } else {
            Self::Big(Engine::new(plan).expect("unbounded host"))
        }
    }

    pub fn host_name(&self) -> &'static str {
        match self {
            Self::I64(_) => "i64",
            Self::I128(_) => "i128",
            Self::Big(_) => "bigint",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::assign_formats;
    use crate::dfg::parse;

    #[test]
    fn fir_plan_fits_i64() {
        let g = parse(include_str!("../../tests/data/fir5.dfg")).unwrap();
        let plan = Plan::compile(&g, &assign_formats(&g).unwrap()).unwrap();
        assert!(plan.fits::<i64>());
        assert!(matches!(AnyEngine::select(&plan), AnyEngine::I64(_)));
    }

    #[test]
    fn wide_plans_fall_back() {
        let g = parse("word 200\ninput a 1/90/0\ninput b 1/90/0\nnode m = mul a b\noutput y m").unwrap();
        let plan = Plan::compile(&g, &assign_formats(&g).unwrap()).unwrap();
        assert!(!plan.fits::<i128>());
        assert_eq!(AnyEngine::select(&plan).host_name(), "bigint");
    }

    #[test]
    fn engines_agree() {
        let g = parse("word 8\ninput a 1/3/4\ninput b 1/3/4\nnode m = mul a b\nnode s = sub m a\noutput y s").unwrap();
        let plan = Plan::compile(&g, &assign_formats(&g).unwrap()).unwrap();
        let e64 = Engine::<i64>::new(&plan).unwrap();
        let eb = Engine::<BigInt>::new(&plan).unwrap();
        let (mut s64, mut sb) = (e64.scratch(), eb.scratch());
        for a in -127i64..=127 {
            for b in [-127i64, -50, -1, 0, 1, 77, 127] {
                let r64 = e64.run(&[a, b], &mut s64);
                let rb = eb.run(&[BigInt::from(a), BigInt::from(b)], &mut sb);
                assert_eq!(r64.is_ok(), rb.is_ok());
                if r64.is_ok() {
                    let big: Vec<BigInt> = s64.stored.iter().map(|v| BigInt::from(*v)).collect();
                    assert_eq!(big, sb.stored);
                    let dev: Vec<BigInt> = s64.deviation.iter().map(|v| BigInt::from(*v)).collect();
                    assert_eq!(dev, sb.deviation);
                }
            }
        }
    }
}
