// SPDX-License-Identifier: Apache-2.0

//! Chain allocation: partitions the add/sub nodes of a graph into maximal
//! chains of consecutive additions.

use super::{DataFlowGraph, NodeIx, NodeKind};
use crate::bitgrowth::OperandWidth;
use crate::fxformat::Format;

/// An ordered run of add/sub nodes, each consuming its predecessor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdditionChain {
    pub members: Vec<NodeIx>,
    /// Common minimal format of every external operand; `None` when the first
    /// step's operands already disagree (the chain is then a singleton).
    pub base: Option<Format>,
    /// Non-chain operands per step: two for the first step, one afterwards.
    pub external_operands: Vec<Vec<NodeIx>>,
}

impl AdditionChain {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `N = I + F - 1` of the base format.
    pub fn base_width(&self) -> Option<OperandWidth> {
        self.base.and_then(|f| f.highest_data_bit()).map(OperandWidth::new)
    }

    /// 1-based step index of a member.
    pub fn step_of(&self, ix: NodeIx) -> Option<usize> {
        self.members.iter().position(|&m| m == ix).map(|p| p + 1)
    }
}

/// Finds all maximal chains.
///
/// An add/sub node extends the chain ending at one of its operands when that
/// operand is read by nothing else and the other operand has the chain's
/// base format. If both operands qualify, the one listed first wins. Sub
/// nodes only join signed chains.
pub fn allocate_chains(g: &DataFlowGraph) -> Vec<AdditionChain> {
    let naive = g.naive_formats();
    let mut chains: Vec<AdditionChain> = Vec::new();
    let mut chain_of: Vec<Option<usize>> = vec![None; g.len()];

    for &v in g.topological_order() {
        let node = g.node(v);
        if !node.kind.is_additive() {
            continue;
        }
        let (p, q) = (node.operands[0], node.operands[1]);
        let extendable = |acc: NodeIx, ext: NodeIx| -> Option<usize> {
            let c = chain_of[acc.0]?;
            let chain = &chains[c];
            let base = chain.base?;
            let ok = chain.members.last() == Some(&acc)
                && g.fanout(acc) == 1
                && acc != ext
                && naive[ext.0].same_data_layout(&base)
                && (node.kind != NodeKind::Sub || base.is_signed());
            ok.then_some(c)
        };
        let target = extendable(p, q)
            .map(|c| (c, q))
            .or_else(|| extendable(q, p).map(|c| (c, p)));
        match target {
            Some((c, ext)) => {
                chains[c].members.push(v);
                chains[c].external_operands.push(vec![ext]);
                chain_of[v.0] = Some(c);
            }
            None => {
                let (fp, fq) = (naive[p.0], naive[q.0]);
                let uniform =
                    fp.same_data_layout(&fq) && fp.data_bits() > 0 && (node.kind != NodeKind::Sub || fp.is_signed());
                chains.push(AdditionChain {
                    members: vec![v],
                    base: uniform.then(|| fp.to_minimal()),
                    external_operands: vec![vec![p, q]],
                });
                chain_of[v.0] = Some(chains.len() - 1);
            }
        }
    }
    chains
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::parse;

    fn ids(g: &DataFlowGraph, v: &[NodeIx]) -> Vec<String> {
        v.iter().map(|ix| g.node(*ix).id.clone()).collect()
    }

    #[test]
    fn no_adds_no_chains() {
        let g = parse("word 16\ninput a 1/7/0\ninput b 1/7/0\nnode m = mul a b\noutput y m").unwrap();
        assert!(allocate_chains(&g).is_empty());
    }

    #[test]
    fn adds_feeding_one_mul_stay_separate() {
        let g = parse(
            "word 16\ninput a 1/3/0\ninput b 1/3/0\nnode s = add a b\nnode t = add a b\nnode m = mul s t\noutput y m",
        )
        .unwrap();
        let chains = allocate_chains(&g);
        assert_eq!(chains.len(), 2);
        assert!(chains.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn fanout_breaks_chain() {
        let g = parse(
            "word 16\ninput a 1/3/0\ninput b 1/3/0\nnode s = add a b\nnode t = add s a\nnode u = add s b\noutput y t\noutput z u",
        )
        .unwrap();
        let chains = allocate_chains(&g);
        let members: Vec<_> = chains.iter().map(|c| ids(&g, &c.members)).collect();
        assert_eq!(members, vec![vec!["s"], vec!["t"], vec!["u"]]);
    }

    #[test]
    fn chain_tail_can_be_an_external_operand() {
        // u is the tail of its own chain, but its width matches t's base, so
        // v extends t's chain and u becomes an external operand
        let g = parse(
            "word 32\ninput e 1/4/0\ninput f 1/4/0\ninput a 1/3/0\ninput b 1/3/0\n\
             node t = add e f\nnode u = add a b\nnode v = add t u\noutput y v",
        )
        .unwrap();
        let chains = allocate_chains(&g);
        let members: Vec<_> = chains.iter().map(|c| ids(&g, &c.members)).collect();
        assert_eq!(members, vec![vec!["t", "v"], vec!["u"]]);
        assert_eq!(ids(&g, &chains[0].external_operands[1]), ["u"]);
    }

    #[test]
    fn heterogeneous_operand_breaks_chain() {
        let g = parse(
            "word 32\ninput a 1/3/0\ninput b 1/3/0\ninput c 1/5/0\nnode s = add a b\nnode t = add s c\noutput y t",
        )
        .unwrap();
        let chains = allocate_chains(&g);
        assert_eq!(chains.len(), 2);
        assert_eq!(chains[1].base, None);
    }

    #[test]
    fn unsigned_sub_does_not_chain() {
        let g = parse(
            "word 32\ninput a 0/4/0\ninput b 0/4/0\ninput c 0/4/0\nnode s = add a b\nnode t = sub s c\noutput y t",
        )
        .unwrap();
        let chains = allocate_chains(&g);
        assert_eq!(chains.len(), 2);
        assert_eq!(chains[1].base, None);
    }

    #[test]
    fn signed_sub_chains() {
        let g = parse(
            "word 32\ninput a 1/4/0\ninput b 1/4/0\ninput c 1/4/0\nnode s = add a b\nnode t = sub c s\noutput y t",
        )
        .unwrap();
        let chains = allocate_chains(&g);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].base_width(), Some(OperandWidth::new(3)));
        assert_eq!(chains[0].step_of(g.lookup("t").unwrap()), Some(2));
    }
}
