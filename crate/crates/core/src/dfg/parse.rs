// SPDX-License-Identifier: Apache-2.0

//! Line-oriented graph description parser.
//!
//! ```text
//! word 16
//! input x0 9/0/7
//! const c 0.5 1/0/3
//! node n1 = mul x0 c
//! output y n1
//! ```
//!
//! `#` starts a comment. The `word` directive must be the first
//! non-comment line.

use super::{DataFlowGraph, GraphBuilder, GraphError, GraphErrorKind, NodeKind};
use crate::dyadic::Dyadic;
use crate::fxformat::Notation;

pub fn parse(text: &str) -> Result<DataFlowGraph, GraphError> {
    parse_named("graph", text)
}

pub fn parse_named(name: &str, text: &str) -> Result<DataFlowGraph, GraphError> {
    let mut b = GraphBuilder::new(name);
    let mut seen_statement = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let syntax = |msg: String| GraphError {
            line,
            kind: GraphErrorKind::Syntax(msg),
        };
        let at = |kind: GraphErrorKind| GraphError { line, kind };
        if !seen_statement && toks[0] != "word" {
            return Err(at(GraphErrorKind::MissingWord));
        }
        seen_statement = true;
        match toks[..] {
            ["word", w] => {
                let w: u32 = w
                    .parse()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| at(GraphErrorKind::BadWord(w.to_string())))?;
                b.set_word(w, line)?;
            }
            ["word", ..] => return Err(syntax("expected `word <W>`".into())),
            ["input", id, fmt] => {
                let n: Notation = fmt.parse().map_err(|e| at(GraphErrorKind::BadFormat(e)))?;
                b.push(id, NodeKind::Input, &[], Some(n), None, line);
            }
            ["input", ..] => return Err(syntax("expected `input <id> <S>/<I>/<F>`".into())),
            ["const", id, value, fmt] => {
                let n: Notation = fmt.parse().map_err(|e| at(GraphErrorKind::BadFormat(e)))?;
                let v: Dyadic = value.parse().map_err(|_| {
                    at(GraphErrorKind::ConstNotRepresentable {
                        id: id.to_string(),
                        value: value.to_string(),
                        format: n.format,
                    })
                })?;
                b.push(id, NodeKind::Const, &[], Some(n), Some(v), line);
            }
            ["const", ..] => return Err(syntax("expected `const <id> <value> <S>/<I>/<F>`".into())),
            ["node", id, "=", op, a, c] => {
                let kind = match op {
                    "add" => NodeKind::Add,
                    "sub" => NodeKind::Sub,
                    "mul" => NodeKind::Mul,
                    other => return Err(syntax(format!("unknown operation `{other}`"))),
                };
                b.push(id, kind, &[a, c], None, None, line);
            }
            ["node", ..] => return Err(syntax("expected `node <id> = <add|sub|mul> <id> <id>`".into())),
            ["output", id, of] => b.push(id, NodeKind::Output, &[of], None, None, line),
            ["output", ..] => return Err(syntax("expected `output <id> <node-id>`".into())),
            [other, ..] => return Err(syntax(format!("unknown directive `{other}`"))),
            [] => unreachable!("empty lines skipped"),
        }
    }
    if b.word.is_none() {
        return Err(GraphError {
            line: 0,
            kind: GraphErrorKind::MissingWord,
        });
    }
    b.build()
}
