// SPDX-License-Identifier: Apache-2.0

//! Chain-aware fixed-point format assignment.
//!
//! Nodes are visited in topological order. Inputs, constants and products
//! get their minimal formats fitted to the machine word (dropping fraction
//! LSBs when a product is too wide). Members of an addition chain only widen
//! at the steps where the accumulated worst case actually gains a bit; when
//! the word has no room left the running sum is shifted right by one instead
//! and its scale exponent incremented. Adds outside a chain reserve a carry
//! bit at every step.

mod report;

use std::collections::HashMap;

pub use report::{chain_line, parse_json_report, render_report, ReportMode, ReportParseError};

use crate::bitgrowth::{growth_at_step, OperandWidth};
use crate::dfg::{allocate_chains, AdditionChain, DataFlowGraph, NodeIx, NodeKind};
use crate::dyadic::Dyadic;
use crate::fxformat::{add_min_format_promoting, fit_to_word, mul_min_format, sub_min_format, truncate_lsbs, Format};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AllocationError {
    #[error("node \"{node}\" is infeasible: needs {needed} integer/sign bits but the word has {word}")]
    Infeasible { node: String, needed: u32, word: u32 },
}

/// How truncation error bounds are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorModel {
    /// Operand bounds add; a rescaling chain step halves the incoming bound
    /// and adds half an LSB, `e_in / 2 + 2^-(F+1)`; other steps carry the
    /// incoming bound plus any fraction bits dropped to fit the word.
    /// Alignment of a chain addend to an already rescaled sum is not charged.
    #[default]
    ChainRule,
    /// Sound worst case for the simulator's flooring data path: every bit
    /// dropped anywhere (alignment, rescale, fitting) is charged, and product
    /// error terms are scaled by operand magnitudes.
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeAllocation {
    pub id: String,
    /// Fitted to the word exactly.
    pub format: Format,
    pub scale_exp: i64,
    pub overflow: bool,
    /// Worst-case `|stored - ideal / 2^scale_exp|` in the node's own units.
    pub error_bound: Dyadic,
}

impl NodeAllocation {
    /// Exponent of the stored LSB in absolute terms, `scale - F`.
    pub fn lsb_exp(&self) -> i64 {
        self.scale_exp - self.format.frac_bits() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSummary {
    pub members: Vec<String>,
    /// `N` of the operands the prediction ran on, `None` when the chain fell
    /// back to per-step worst case from its first step.
    pub base_n: Option<u32>,
    /// 1-based chain steps at which the width grew.
    pub overflow_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationReport {
    pub graph: String,
    pub word: u32,
    /// One entry per node, in topological order.
    pub nodes: Vec<NodeAllocation>,
    pub chains: Vec<ChainSummary>,
}

impl AllocationReport {
    pub fn get(&self, id: &str) -> Option<&NodeAllocation> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Allocations indexed by the graph's node indices.
    pub fn by_node<'a>(&'a self, g: &DataFlowGraph) -> Option<Vec<&'a NodeAllocation>> {
        let map: HashMap<&str, &NodeAllocation> = self.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        if map.len() != g.len() {
            return None;
        }
        g.nodes().iter().map(|n| map.get(n.id.as_str()).copied()).collect()
    }
}

pub fn assign_formats(g: &DataFlowGraph) -> Result<AllocationReport, AllocationError> {
    assign_formats_with(g, ErrorModel::default())
}

pub fn assign_formats_with(g: &DataFlowGraph, model: ErrorModel) -> Result<AllocationReport, AllocationError> {
    Allocator::new(g, model).run()
}

/// Chains of the graph with the steps at which their declared operands make
/// the running sum grow, independent of the word length.
pub fn predict_chains(g: &DataFlowGraph) -> Vec<ChainSummary> {
    allocate_chains(g)
        .iter()
        .map(|c| {
            let width = c.base_width();
            let overflow_steps = match width {
                Some(w) => (1..=c.len())
                    .filter(|&i| growth_at_step(w, i as u64) > growth_at_step(w, i as u64 - 1))
                    .collect(),
                None => (1..=c.len()).collect(),
            };
            ChainSummary {
                members: c.members.iter().map(|m| g.node(*m).id.clone()).collect(),
                base_n: width.map(OperandWidth::n),
                overflow_steps,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Placed {
    format: Format,
    scale: i64,
}

impl Placed {
    fn lsb(&self) -> i64 {
        self.scale - self.format.frac_bits() as i64
    }
}

/// Prediction state of one chain.
#[derive(Debug)]
struct ChainState {
    /// Layout and scale every external operand must share; `None` once the
    /// chain has fallen back to per-step worst case.
    base: Option<(Format, i64, OperandWidth)>,
    reported_n: Option<u32>,
    overflow_steps: Vec<usize>,
}

struct Allocator<'g> {
    g: &'g DataFlowGraph,
    model: ErrorModel,
    chains: Vec<AdditionChain>,
    membership: HashMap<NodeIx, (usize, usize)>,
    placed: Vec<Option<Placed>>,
    errors: Vec<Dyadic>,
}

impl<'g> Allocator<'g> {
    fn new(g: &'g DataFlowGraph, model: ErrorModel) -> Self {
        let chains = allocate_chains(g);
        let membership = chains
            .iter()
            .enumerate()
            .flat_map(|(c, ch)| ch.members.iter().enumerate().map(move |(i, &m)| (m, (c, i + 1))))
            .collect();
        Self {
            g,
            model,
            chains,
            membership,
            placed: vec![None; g.len()],
            errors: vec![Dyadic::zero(); g.len()],
        }
    }

    fn word(&self) -> u32 {
        self.g.word()
    }

    fn placed(&self, ix: NodeIx) -> Placed {
        self.placed[ix.0].expect("operands are placed before their users")
    }

    fn infeasible(&self, ix: NodeIx, needed: u32) -> AllocationError {
        AllocationError::Infeasible {
            node: self.g.node(ix).id.clone(),
            needed,
            word: self.word(),
        }
    }

    /// Fits a minimal format to the word, dropping fraction LSBs if needed.
    /// Returns the fitted format and the number of dropped bits.
    fn fit_or_truncate(&self, ix: NodeIx, minimal: Format) -> Result<(Format, u32), AllocationError> {
        match fit_to_word(minimal, self.word()) {
            Ok(f) => Ok((f, 0)),
            Err(e) if e.deficit <= minimal.frac_bits() => {
                let (narrow, _) = truncate_lsbs(minimal, e.deficit).expect("deficit within F");
                let f = fit_to_word(narrow, self.word()).expect("deficit removed");
                Ok((f, e.deficit))
            }
            Err(_) => Err(self.infeasible(ix, minimal.int_bits() + minimal.min_sign_bits())),
        }
    }

    fn run(mut self) -> Result<AllocationReport, AllocationError> {
        let mut states: Vec<ChainState> = self
            .chains
            .iter()
            .map(|_| ChainState {
                base: None,
                reported_n: None,
                overflow_steps: Vec::new(),
            })
            .collect();
        let mut nodes = Vec::with_capacity(self.g.len());

        for &ix in self.g.topological_order() {
            let node = self.g.node(ix);
            let (placed, overflow, error) = match node.kind {
                NodeKind::Input | NodeKind::Const => {
                    let minimal = node.declared.expect("validated").format.to_minimal();
                    let f = fit_to_word(minimal, self.word())
                        .map_err(|_| self.infeasible(ix, minimal.data_bits() + minimal.min_sign_bits()))?;
                    (Placed { format: f, scale: 0 }, false, Dyadic::zero())
                }
                NodeKind::Mul => self.place_mul(ix)?,
                NodeKind::Add | NodeKind::Sub => match self.membership.get(&ix).copied() {
                    Some((c, step)) => {
                        let r = self.place_chain_step(ix, c, step, &mut states[c])?;
                        if r.1 {
                            states[c].overflow_steps.push(step);
                        }
                        r
                    }
                    None => self.place_worst_case(ix)?,
                },
                NodeKind::Output => {
                    let src = node.operands[0];
                    (self.placed(src), false, self.errors[src.0].clone())
                }
            };
            self.placed[ix.0] = Some(placed);
            self.errors[ix.0] = error.clone();
            nodes.push(NodeAllocation {
                id: node.id.clone(),
                format: placed.format,
                scale_exp: placed.scale,
                overflow,
                error_bound: error,
            });
        }

        let chains = self
            .chains
            .iter()
            .zip(states)
            .map(|(ch, st)| ChainSummary {
                members: ch.members.iter().map(|m| self.g.node(*m).id.clone()).collect(),
                base_n: st.reported_n,
                overflow_steps: st.overflow_steps,
            })
            .collect();
        Ok(AllocationReport {
            graph: self.g.name().to_string(),
            word: self.word(),
            nodes,
            chains,
        })
    }

    fn place_mul(&self, ix: NodeIx) -> Result<(Placed, bool, Dyadic), AllocationError> {
        let ops = &self.g.node(ix).operands;
        let (a, b) = (self.placed(ops[0]), self.placed(ops[1]));
        let minimal = mul_min_format(a.format.to_minimal(), b.format.to_minimal());
        let (format, dropped) = self.fit_or_truncate(ix, minimal)?;
        let placed = Placed {
            format,
            scale: a.scale + b.scale,
        };
        let (ea, eb) = (&self.errors[ops[0].0], &self.errors[ops[1].0]);
        let error = match self.model {
            ErrorModel::ChainRule => {
                let (_, fresh) = truncate_lsbs(minimal, dropped).expect("dropped within F");
                ea + &(eb + &fresh)
            }
            ErrorModel::Conservative => {
                // |ab - a'b'| <= (|a'| + Ea) Eb + |b'| Ea, all absolute
                let abs = |p: Placed, e: &Dyadic| e.mul_pow2(p.scale);
                let mag = |p: Placed| Dyadic::pow2(p.scale + p.format.int_bits() as i64);
                let (ea, eb) = (abs(a, ea), abs(b, eb));
                let propagated = &(&(&mag(a) + &ea) * &eb) + &(&mag(b) * &ea);
                let fresh = dropped_bits_error(a.lsb() + b.lsb(), placed.lsb());
                (propagated + fresh).mul_pow2(-placed.scale)
            }
        };
        Ok((placed, false, error))
    }

    /// Per-step worst case: a carry bit at every add, operands aligned at the
    /// larger scale.
    fn place_worst_case(&self, ix: NodeIx) -> Result<(Placed, bool, Dyadic), AllocationError> {
        let node = self.g.node(ix);
        let (a, b) = (self.placed(node.operands[0]), self.placed(node.operands[1]));
        let scale = a.scale.max(b.scale);
        let fa = a.format.to_minimal().rescaled_up((scale - a.scale) as u32);
        let fb = b.format.to_minimal().rescaled_up((scale - b.scale) as u32);
        let minimal = if node.kind == NodeKind::Sub {
            sub_min_format(fa, fb)
        } else {
            add_min_format_promoting(fa, fb)
        };
        let (format, dropped) = self.fit_or_truncate(ix, minimal)?;
        let placed = Placed { format, scale };
        let error = self.add_error(node.operands[0], node.operands[1], placed, |ein| {
            let (_, fresh) = truncate_lsbs(minimal, dropped).expect("dropped within F");
            ein + fresh
        });
        Ok((placed, true, error))
    }

    fn place_chain_step(
        &self,
        ix: NodeIx,
        c: usize,
        step: usize,
        state: &mut ChainState,
    ) -> Result<(Placed, bool, Dyadic), AllocationError> {
        let chain = &self.chains[c];
        let externals = &chain.external_operands[step - 1];
        if step == 1 {
            let (p, q) = (self.placed(externals[0]), self.placed(externals[1]));
            let shared = chain.base.is_some()
                && p.format.same_data_layout(&q.format)
                && p.scale == q.scale
                && p.format.data_bits() > 0;
            if shared {
                let width = OperandWidth::new(p.format.data_bits() - 1);
                state.base = Some((p.format.to_minimal(), p.scale, width));
                state.reported_n = Some(width.n());
            }
        } else if let Some((base, scale, _)) = state.base {
            let e = self.placed(externals[0]);
            if !(e.format.same_data_layout(&base) && e.scale == scale) {
                state.base = None;
            }
        }

        let Some((base, base_scale, width)) = state.base else {
            return self.place_worst_case(ix);
        };
        let prev = if step == 1 {
            Placed {
                format: base,
                scale: base_scale,
            }
        } else {
            self.placed(chain.members[step - 2])
        };
        let grew = growth_at_step(width, step as u64) > growth_at_step(width, step as u64 - 1);
        let node = self.g.node(ix);
        let mut int_bits = prev.format.int_bits();
        let mut scale = prev.scale;
        let mut rescaled = false;
        if grew {
            if base.min_sign_bits() + int_bits + 1 + base.frac_bits() <= self.word() {
                int_bits += 1;
            } else {
                scale += 1;
                rescaled = true;
            }
        }
        let signed = base.is_signed() || node.kind == NodeKind::Sub;
        let minimal = Format::minimal(int_bits, base.frac_bits(), signed).expect("non-empty layout");
        let format = fit_to_word(minimal, self.word()).map_err(|_| self.infeasible(ix, int_bits + 1))?;
        let placed = Placed { format, scale };
        let error = self.add_error(node.operands[0], node.operands[1], placed, |ein| {
            if rescaled {
                &ein.mul_pow2(-1) + &Dyadic::pow2(-(base.frac_bits() as i64) - 1)
            } else {
                ein
            }
        });
        Ok((placed, grew, error))
    }

    /// Error of an add/sub placed at `out`. `chain_rule` maps the summed
    /// operand bounds to the output bound under [`ErrorModel::ChainRule`].
    fn add_error(&self, a: NodeIx, b: NodeIx, out: Placed, chain_rule: impl FnOnce(Dyadic) -> Dyadic) -> Dyadic {
        let (ea, eb) = (&self.errors[a.0], &self.errors[b.0]);
        match self.model {
            ErrorModel::ChainRule => chain_rule(ea + eb),
            ErrorModel::Conservative => {
                let (pa, pb) = (self.placed(a), self.placed(b));
                let abs = &ea.mul_pow2(pa.scale) + &eb.mul_pow2(pb.scale);
                let fresh = dropped_bits_error(pa.lsb().min(pb.lsb()), out.lsb());
                (abs + fresh).mul_pow2(-out.scale)
            }
        }
    }
}

/// Largest value lost by flooring an integer at LSB exponent `from` to LSB
/// exponent `to`: `2^to - 2^from`.
fn dropped_bits_error(from: i64, to: i64) -> Dyadic {
    if to <= from {
        Dyadic::zero()
    } else {
        Dyadic::pow2(to) - Dyadic::pow2(from)
    }
}
