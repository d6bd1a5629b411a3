// SPDX-License-Identifier: Apache-2.0

//! Text, CSV and JSON renderings of an [`AllocationReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AllocationReport, ChainSummary, NodeAllocation};
use crate::dyadic::Dyadic;
use crate::fxformat::Format;

const DECIMAL_PLACES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportMode {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for ReportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format `{other}` (expected text, csv or json)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportParseError {
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("node \"{id}\": {msg}")]
    Field { id: String, msg: String },
}

#[derive(Serialize, Deserialize)]
struct ReportDto {
    graph: String,
    word: u32,
    nodes: Vec<NodeDto>,
    chains: Vec<ChainDto>,
}

#[derive(Serialize, Deserialize)]
struct NodeDto {
    id: String,
    notation: String,
    scale_exp: i64,
    overflow: bool,
    error_terms: Vec<String>,
    error_decimal: String,
}

#[derive(Serialize, Deserialize)]
struct ChainDto {
    members: Vec<String>,
    #[serde(rename = "base_N")]
    base_n: Option<u32>,
    overflow_steps: Vec<usize>,
}

fn error_terms(e: &Dyadic) -> Vec<String> {
    e.power_terms().into_iter().map(|t| format!("2^{t}")).collect()
}

/// `chain 1: n6 n7 n8 n9 (N=14), overflows at steps 1, 2, 4`
pub fn chain_line(number: usize, c: &ChainSummary) -> String {
    let base = match c.base_n {
        Some(n) => format!("N={n}"),
        None => "mixed operands, worst case".to_string(),
    };
    let steps = if c.overflow_steps.is_empty() {
        "no overflows".to_string()
    } else {
        let list: Vec<String> = c.overflow_steps.iter().map(|s| s.to_string()).collect();
        format!("overflows at steps {}", list.join(", "))
    };
    format!("chain {number}: {} ({base}), {steps}", c.members.join(" "))
}

pub fn render_report(r: &AllocationReport, mode: ReportMode) -> String {
    match mode {
        ReportMode::Text => render_text(r),
        ReportMode::Csv => render_csv(r),
        ReportMode::Json => render_json(r),
    }
}

fn render_text(r: &AllocationReport) -> String {
    let id_w = r.nodes.iter().map(|n| n.id.len()).max().unwrap_or(0);
    let notations: Vec<String> = r.nodes.iter().map(|n| n.format.to_string()).collect();
    let fmt_w = notations.iter().map(String::len).max().unwrap_or(0);
    let mut s = format!("graph {}, word {}\n", r.graph, r.word);
    for (n, notation) in r.nodes.iter().zip(&notations) {
        let mut line = format!("{:id_w$}  {:fmt_w$}", n.id, notation);
        if !n.error_bound.is_zero() {
            let _ = write!(
                line,
                "  error: {} = {}",
                n.error_bound.terms_string(),
                n.error_bound.to_decimal(DECIMAL_PLACES)
            );
        }
        let notes: Vec<String> = [
            (n.scale_exp != 0).then(|| format!("scale {}", n.scale_exp)),
            n.overflow.then(|| "overflow".to_string()),
        ]
        .into_iter()
        .flatten()
        .collect();
        if !notes.is_empty() {
            let _ = write!(line, "  [{}]", notes.join(", "));
        }
        s.push_str(line.trim_end());
        s.push('\n');
    }
    if !r.chains.is_empty() {
        s.push('\n');
        for (i, c) in r.chains.iter().enumerate() {
            s.push_str(&chain_line(i + 1, c));
            s.push('\n');
        }
    }
    s
}

fn render_csv(r: &AllocationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "notation",
        "scale_exp",
        "overflow",
        "error_terms",
        "error_decimal",
    ])
    .expect("in-memory write");
    for n in &r.nodes {
        w.write_record([
            n.id.clone(),
            n.format.to_string(),
            n.scale_exp.to_string(),
            n.overflow.to_string(),
            n.error_bound.terms_string(),
            n.error_bound.to_decimal(DECIMAL_PLACES),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn render_json(r: &AllocationReport) -> String {
    let dto = ReportDto {
        graph: r.graph.clone(),
        word: r.word,
        nodes: r
            .nodes
            .iter()
            .map(|n| NodeDto {
                id: n.id.clone(),
                notation: n.format.to_string(),
                scale_exp: n.scale_exp,
                overflow: n.overflow,
                error_terms: error_terms(&n.error_bound),
                error_decimal: n.error_bound.to_decimal(DECIMAL_PLACES),
            })
            .collect(),
        chains: r
            .chains
            .iter()
            .map(|c| ChainDto {
                members: c.members.clone(),
                base_n: c.base_n,
                overflow_steps: c.overflow_steps.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&dto).expect("plain data serializes");
    s.push('\n');
    s
}

/// Inverse of the JSON rendering. The decimal field is display-only and
/// ignored.
pub fn parse_json_report(text: &str) -> Result<AllocationReport, ReportParseError> {
    let dto: ReportDto = serde_json::from_str(text)?;
    let nodes = dto
        .nodes
        .into_iter()
        .map(|n| {
            let field = |msg: String| ReportParseError::Field { id: n.id.clone(), msg };
            let format: Format = n.notation.parse().map_err(|e| field(format!("{e}")))?;
            let mut error_bound = Dyadic::zero();
            for t in &n.error_terms {
                error_bound += Dyadic::parse_terms(t).map_err(|e| field(format!("{e}")))?;
            }
            Ok(NodeAllocation {
                id: n.id,
                format,
                scale_exp: n.scale_exp,
                overflow: n.overflow,
                error_bound,
            })
        })
        .collect::<Result<_, ReportParseError>>()?;
    let chains = dto
        .chains
        .into_iter()
        .map(|c| ChainSummary {
            members: c.members,
            base_n: c.base_n,
            overflow_steps: c.overflow_steps,
        })
        .collect();
    Ok(AllocationReport {
        graph: dto.graph,
        word: dto.word,
        nodes,
        chains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::assign_formats;
    use crate::dfg::parse_named;

    fn fir() -> AllocationReport {
        let g = parse_named("fir5", super::super::tests::FIR5).unwrap();
        assign_formats(&g).unwrap()
    }

    #[test]
    fn text_rows() {
        let text = render_report(&fir(), ReportMode::Text);
        let row = |id: &str| {
            text.lines()
                .find(|l| l.starts_with(&format!("{id} ")))
                .unwrap()
                .to_string()
        };
        assert!(row("n6").starts_with("n6  (1/0/15)  error: 2^-16 = 0.000015259"));
        assert!(row("n9").starts_with("n9  (1/0/15)  error: 2^-16+2^-17+2^-18 = 0.000026703"));
        assert_eq!(row("n1"), "n1  (1/0/15)");
        assert!(text.contains("chain 1: n6 n7 n8 n9 (N=14), overflows at steps 1, 2, 4"));
    }

    #[test]
    fn csv_rows() {
        let csv = render_report(&fir(), ReportMode::Csv);
        assert!(csv.starts_with("id,notation,scale_exp,overflow,error_terms,error_decimal\n"));
        assert!(csv.contains("n7,(1/0/15),2,true,2^-16+2^-17,0.000022888\n"));
        assert!(csv.contains("n1,(1/0/15),0,false,,0.000000000\n"));
    }

    #[test]
    fn json_round_trip() {
        let r = fir();
        let json = render_report(&r, ReportMode::Json);
        assert_eq!(parse_json_report(&json).unwrap(), r);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["chains"][0]["base_N"], 14);
        let n9 = v["nodes"].as_array().unwrap().iter().find(|n| n["id"] == "n9").unwrap();
        assert_eq!(n9["error_terms"], serde_json::json!(["2^-16", "2^-17", "2^-18"]));
    }

    #[test]
    fn modes_parse() {
        assert_eq!("json".parse::<ReportMode>(), Ok(ReportMode::Json));
        assert!("xml".parse::<ReportMode>().is_err());
    }
}
