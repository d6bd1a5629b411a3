// SPDX-License-Identifier: Apache-2.0

//! Dataflow graphs of fixed-point operations.
//!
//! Graphs are built once (from text via [`parse`] or programmatically via
//! [`GraphBuilder`]), validated, and immutable afterwards.

mod chains;
mod parse;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

pub use chains::{allocate_chains, AdditionChain};
pub use parse::{parse, parse_named};

use crate::dyadic::Dyadic;
use crate::fxformat::{
    add_min_format_promoting, mul_min_format, sub_min_format, FixedValue, Format, FormatError, Notation,
};

/// Index of a node within its graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Output,
}

impl NodeKind {
    pub fn arity(self) -> usize {
        match self {
            NodeKind::Input | NodeKind::Const => 0,
            NodeKind::Output => 1,
            NodeKind::Add | NodeKind::Sub | NodeKind::Mul => 2,
        }
    }

    /// Add or sub; both grow like an addition.
    pub fn is_additive(self) -> bool {
        matches!(self, NodeKind::Add | NodeKind::Sub)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Input => "input",
            NodeKind::Const => "const",
            NodeKind::Add => "add",
            NodeKind::Sub => "sub",
            NodeKind::Mul => "mul",
            NodeKind::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub operands: Vec<NodeIx>,
    /// Mandatory for inputs and consts.
    pub declared: Option<Notation>,
    pub const_value: Option<Dyadic>,
    /// Source line, 0 for programmatically built nodes.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("missing word directive")]
    MissingWord,
    #[error("duplicate word directive")]
    DuplicateWord,
    #[error("word length must be a positive integer, got `{0}`")]
    BadWord(String),
    #[error("duplicate node id \"{0}\"")]
    DuplicateId(String),
    #[error("unknown node reference \"{0}\"")]
    UnknownNode(String),
    #[error("cyclic definition through \"{0}\"")]
    Cycle(String),
    #[error("graph has no output")]
    NoOutput,
    #[error("bad format: {0}")]
    BadFormat(#[from] FormatError),
    #[error("const \"{id}\" value {value} is not representable in {format}")]
    ConstNotRepresentable { id: String, value: String, format: Format },
    #[error("{0} takes {1} operand(s)")]
    Arity(String, usize),
}

/// A graph diagnostic; `line` is 0 when there is no source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct GraphError {
    pub line: usize,
    pub kind: GraphErrorKind,
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.kind)
        } else {
            self.kind.fmt(f)
        }
    }
}

impl GraphError {
    fn at(line: usize, kind: GraphErrorKind) -> Self {
        Self { line, kind }
    }
}

#[derive(Debug, Clone)]
pub struct DataFlowGraph {
    name: String,
    word: u32,
    nodes: Vec<Node>,
    index: HashMap<String, NodeIx>,
    order: Vec<NodeIx>,
    fanout: Vec<usize>,
    warnings: Vec<String>,
}

impl DataFlowGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn word(&self) -> u32 {
        self.word
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, ix: NodeIx) -> &Node {
        &self.nodes[ix.0]
    }

    pub fn lookup(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of operand slots that read this node.
    pub fn fanout(&self, ix: NodeIx) -> usize {
        self.fanout[ix.0]
    }

    /// Non-fatal findings, e.g. computed values nobody reads.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Nodes ordered so that operands precede their users; file order is kept
    /// among independent nodes.
    pub fn topological_order(&self) -> &[NodeIx] {
        &self.order
    }

    pub fn inputs(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Input)
            .map(|(i, _)| NodeIx(i))
    }

    /// Per-node minimal formats under per-operation worst-case rules, with no
    /// word constraint. Used to compare chain operands.
    pub fn naive_formats(&self) -> Vec<Format> {
        let mut out: Vec<Option<Format>> = vec![None; self.nodes.len()];
        for &ix in &self.order {
            let node = &self.nodes[ix.0];
            let operand = |k: usize| out[node.operands[k].0].expect("operands precede users");
            let f = match node.kind {
                NodeKind::Input | NodeKind::Const => node.declared.expect("validated").format.to_minimal(),
                NodeKind::Mul => mul_min_format(operand(0), operand(1)),
                NodeKind::Add => add_min_format_promoting(operand(0), operand(1)),
                NodeKind::Sub => sub_min_format(operand(0), operand(1)),
                NodeKind::Output => operand(0),
            };
            out[ix.0] = Some(f);
        }
        out.into_iter().map(|f| f.expect("every node ordered")).collect()
    }

    /// Renders back to the line-oriented text format.
    pub fn render(&self) -> String {
        let mut s = format!("word {}\n", self.word);
        for n in &self.nodes {
            let op = |k: usize| self.nodes[n.operands[k].0].id.as_str();
            let line = match n.kind {
                NodeKind::Input => format!("input {} {}", n.id, render_decl(n)),
                NodeKind::Const => format!(
                    "const {} {} {}",
                    n.id,
                    n.const_value.as_ref().expect("validated"),
                    render_decl(n)
                ),
                NodeKind::Add | NodeKind::Sub | NodeKind::Mul => {
                    format!("node {} = {} {} {}", n.id, n.kind.keyword(), op(0), op(1))
                }
                NodeKind::Output => format!("output {} {}", n.id, op(0)),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

fn render_decl(n: &Node) -> String {
    let notation = n.declared.expect("validated");
    notation.to_string().trim_start_matches('(').replacen(')', "", 1)
}

/// Builds and validates a graph. Operand references are resolved by id at
/// [`GraphBuilder::build`], so forward references are allowed.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    name: String,
    word: Option<(u32, usize)>,
    pending: Vec<PendingNode>,
}

#[derive(Debug)]
struct PendingNode {
    id: String,
    kind: NodeKind,
    operands: Vec<String>,
    declared: Option<Notation>,
    const_value: Option<Dyadic>,
    line: usize,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn word(mut self, word: u32) -> Self {
        self.word = Some((word, 0));
        self
    }

    pub fn input(mut self, id: &str, format: Format) -> Self {
        self.push(id, NodeKind::Input, &[], Some(three_field(format)), None, 0);
        self
    }

    pub fn constant(mut self, id: &str, value: Dyadic, format: Format) -> Self {
        self.push(id, NodeKind::Const, &[], Some(three_field(format)), Some(value), 0);
        self
    }

    pub fn op(mut self, id: &str, kind: NodeKind, a: &str, b: &str) -> Self {
        self.push(id, kind, &[a, b], None, None, 0);
        self
    }

    pub fn output(mut self, id: &str, of: &str) -> Self {
        self.push(id, NodeKind::Output, &[of], None, None, 0);
        self
    }

    fn set_word(&mut self, word: u32, line: usize) -> Result<(), GraphError> {
        if self.word.is_some() {
            return Err(GraphError::at(line, GraphErrorKind::DuplicateWord));
        }
        self.word = Some((word, line));
        Ok(())
    }

    fn push(
        &mut self,
        id: &str,
        kind: NodeKind,
        operands: &[&str],
        declared: Option<Notation>,
        const_value: Option<Dyadic>,
        line: usize,
    ) {
        self.pending.push(PendingNode {
            id: id.to_string(),
            kind,
            operands: operands.iter().map(|s| s.to_string()).collect(),
            declared,
            const_value,
            line,
        });
    }

    pub fn build(self) -> Result<DataFlowGraph, GraphError> {
        let (word, _) = self.word.ok_or(GraphError::at(0, GraphErrorKind::MissingWord))?;
        if word == 0 {
            return Err(GraphError::at(0, GraphErrorKind::BadWord("0".into())));
        }
        let mut index = HashMap::new();
        for (i, p) in self.pending.iter().enumerate() {
            if index.insert(p.id.clone(), NodeIx(i)).is_some() {
                return Err(GraphError::at(p.line, GraphErrorKind::DuplicateId(p.id.clone())));
            }
        }
        let mut nodes = Vec::with_capacity(self.pending.len());
        for p in self.pending {
            if p.operands.len() != p.kind.arity() {
                return Err(GraphError::at(
                    p.line,
                    GraphErrorKind::Arity(p.kind.keyword().into(), p.kind.arity()),
                ));
            }
            let operands = p
                .operands
                .iter()
                .map(|o| {
                    index
                        .get(o)
                        .copied()
                        .ok_or_else(|| GraphError::at(p.line, GraphErrorKind::UnknownNode(o.clone())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if matches!(p.kind, NodeKind::Input | NodeKind::Const) && p.declared.is_none() {
                return Err(GraphError::at(
                    p.line,
                    GraphErrorKind::Syntax(format!("{} \"{}\" needs a format", p.kind.keyword(), p.id)),
                ));
            }
            if p.kind == NodeKind::Const {
                let format = p.declared.expect("checked").format;
                let value = p.const_value.clone().ok_or_else(|| {
                    GraphError::at(
                        p.line,
                        GraphErrorKind::Syntax(format!("const \"{}\" needs a value", p.id)),
                    )
                })?;
                let exact = value
                    .to_scaled_integer(-(format.frac_bits() as i64))
                    .is_some_and(|raw| FixedValue::new(raw, format, 0).is_ok());
                if !exact {
                    return Err(GraphError::at(
                        p.line,
                        GraphErrorKind::ConstNotRepresentable {
                            id: p.id.clone(),
                            value: value.to_string(),
                            format,
                        },
                    ));
                }
            }
            nodes.push(Node {
                id: p.id,
                kind: p.kind,
                operands,
                declared: p.declared,
                const_value: p.const_value,
                line: p.line,
            });
        }
        let order = topological_order(&nodes).map_err(|ix| {
            let n = &nodes[ix.0];
            GraphError::at(n.line, GraphErrorKind::Cycle(n.id.clone()))
        })?;
        if !nodes.iter().any(|n| n.kind == NodeKind::Output) {
            return Err(GraphError::at(0, GraphErrorKind::NoOutput));
        }
        let mut fanout = vec![0; nodes.len()];
        for n in &nodes {
            for o in &n.operands {
                fanout[o.0] += 1;
            }
        }
        let warnings = nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| n.kind != NodeKind::Output && fanout[*i] == 0)
            .map(|(_, n)| format!("node \"{}\" is never used", n.id))
            .collect();
        Ok(DataFlowGraph {
            name: self.name,
            word,
            nodes,
            index,
            order,
            fanout,
            warnings,
        })
    }
}

fn three_field(format: Format) -> Notation {
    Notation {
        format,
        spelling: crate::fxformat::Spelling::ThreeField,
    }
}

/// Kahn's algorithm, smallest file index first among ready nodes. On a cycle
/// returns a node that lies on (or behind) it.
pub fn topological_order(nodes: &[Node]) -> Result<Vec<NodeIx>, NodeIx> {
    let mut pending: Vec<usize> = nodes.iter().map(|n| n.operands.len()).collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for o in &n.operands {
            users[o.0].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = pending
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| Reverse(i))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse(i)) = ready.pop() {
        order.push(NodeIx(i));
        for &u in &users[i] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }
    if order.len() < nodes.len() {
        let stuck = pending.iter().position(|&c| c > 0).expect("some node unresolved");
        return Err(NodeIx(stuck));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Format {
        s.parse().unwrap()
    }

    #[test]
    fn builder_builds_diamond() {
        let g = GraphBuilder::new("diamond")
            .word(16)
            .input("a", f("1/3/4"))
            .input("b", f("1/3/4"))
            .op("m1", NodeKind::Mul, "a", "b")
            .op("m2", NodeKind::Mul, "b", "a")
            .op("s", NodeKind::Add, "m1", "m2")
            .output("y", "s")
            .build()
            .unwrap();
        let order: Vec<_> = g.topological_order().iter().map(|ix| g.node(*ix).id.as_str()).collect();
        assert_eq!(order, ["a", "b", "m1", "m2", "s", "y"]);
        assert_eq!(g.fanout(g.lookup("a").unwrap()), 2);
        assert!(g.warnings().is_empty());
    }

    #[test]
    fn forward_references_are_ordered() {
        let g = GraphBuilder::new("fwd")
            .word(8)
            .output("y", "s")
            .op("s", NodeKind::Add, "a", "a")
            .input("a", f("1/3/0"))
            .build()
            .unwrap();
        let order: Vec<_> = g.topological_order().iter().map(|ix| g.node(*ix).id.as_str()).collect();
        assert_eq!(order, ["a", "s", "y"]);
    }

    #[test]
    fn rejects_cycles() {
        let err = GraphBuilder::new("cyc")
            .word(8)
            .input("a", f("1/3/0"))
            .op("p", NodeKind::Add, "a", "q")
            .op("q", NodeKind::Add, "a", "p")
            .output("y", "q")
            .build()
            .unwrap_err();
        assert!(matches!(err.kind, GraphErrorKind::Cycle(_)));
    }

    #[test]
    fn rejects_missing_output_and_unrepresentable_const() {
        let err = GraphBuilder::new("x")
            .word(8)
            .input("a", f("1/3/0"))
            .build()
            .unwrap_err();
        assert_eq!(err.kind, GraphErrorKind::NoOutput);
        let err = GraphBuilder::new("x")
            .word(8)
            .constant("c", "0.25".parse().unwrap(), f("1/3/1"))
            .output("y", "c")
            .build()
            .unwrap_err();
        assert!(matches!(err.kind, GraphErrorKind::ConstNotRepresentable { .. }));
        let err = GraphBuilder::new("x")
            .word(8)
            .constant("c", "8".parse().unwrap(), f("1/3/1"))
            .output("y", "c")
            .build()
            .unwrap_err();
        assert!(matches!(err.kind, GraphErrorKind::ConstNotRepresentable { .. }));
    }

    #[test]
    fn warns_on_unused_nodes() {
        let g = GraphBuilder::new("x")
            .word(8)
            .input("a", f("1/3/0"))
            .input("b", f("1/3/0"))
            .output("y", "a")
            .build()
            .unwrap();
        assert_eq!(g.warnings(), ["node \"b\" is never used"]);
    }

    #[test]
    fn naive_formats_cascade() {
        let g = GraphBuilder::new("x")
            .word(32)
            .input("a", f("9/0/7"))
            .input("w", f("8/0/8"))
            .op("m", NodeKind::Mul, "a", "w")
            .op("s", NodeKind::Add, "m", "m")
            .op("d", NodeKind::Sub, "s", "a")
            .output("y", "d")
            .build()
            .unwrap();
        let nf = g.naive_formats();
        assert_eq!(nf[2], f("1/0/15"));
        assert_eq!(nf[3], f("1/1/15"));
        assert_eq!(nf[4], f("1/2/15"));
        assert_eq!(nf[5], f("1/2/15"));
    }
}
