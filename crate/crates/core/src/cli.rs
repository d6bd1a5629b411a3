// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Exit status: 0 success, 1 analysis or verification failure, 2 usage or
//! parse error. Artifacts go to `out`, diagnostics to `err`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::json;

use crate::allocator::{
    assign_formats_with, chain_line, predict_chains, render_report, ChainSummary, ErrorModel, ReportMode,
};
use crate::bitgrowth::{growth_at_step, oracle_bit_length, overflow_step, OperandWidth};
use crate::dfg::{parse_named, DataFlowGraph};
use crate::dyadic::Dyadic;
use crate::simulator::{
    accumulate_harness, parse_inputs, run_fixed, verify_bounds, verify_exhaustive, SimError, SimulationResult, Verdict,
    DEFAULT_EXHAUSTIVE_LIMIT, RNG_NAME,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "chainfx",
    version,
    about = "Overflow prediction and fixed-point allocation for chains of additions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict the step of an overflow, or the growth after a number of steps
    Predict(PredictArgs),
    /// Accumulate maximal operands and list every step where the width grows
    Accumulate(AccumulateArgs),
    /// Assign fixed-point formats and error bounds to every node of a graph
    Analyze(AnalyzeArgs),
    /// List the chains of consecutive additions in a graph
    Chains(ChainsArgs),
    /// Run an allocated graph bit-accurately
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

impl From<OutputFormat> for ReportMode {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Text => ReportMode::Text,
            OutputFormat::Csv => ReportMode::Csv,
            OutputFormat::Json => ReportMode::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    ChainRule,
    Conservative,
}

impl From<ModelArg> for ErrorModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::ChainRule => ErrorModel::ChainRule,
            ModelArg::Conservative => ErrorModel::Conservative,
        }
    }
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("query").required(true).args(["overflow_index", "steps"]))]
struct PredictArgs {
    /// Operand data bits B; the highest bit is N = B - 1
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    operand_bits: u32,
    /// Report the step at which this overflow occurs
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    overflow_index: Option<u32>,
    /// Report the growth after this many additions
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct AccumulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    operand_bits: u32,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    path: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    #[arg(long, value_enum, default_value = "chain-rule")]
    error_model: ModelArg,
}

#[derive(Args, Debug)]
struct ChainsArgs {
    path: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["inputs", "random", "exhaustive"]))]
struct SimulateArgs {
    path: PathBuf,
    /// CSV or JSON input vectors, one trial per row
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Number of seeded random trials
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    random: Option<u64>,
    /// Enumerate every input combination
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 0, requires = "random")]
    seed: u64,
    /// Exit with status 1 when any node exceeds its error bound
    #[arg(long)]
    check_bounds: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    #[arg(long, value_enum, default_value = "chain-rule")]
    error_model: ModelArg,
}

/// Runs the command line `args` (program name first).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Predict(a) => predict(a, out),
        Command::Accumulate(a) => accumulate(a, out),
        Command::Analyze(a) => analyze(a, out, err),
        Command::Chains(a) => chains(a, out, err),
        Command::Simulate(a) => simulate(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

struct Failure(i32, String);

type CmdResult = Result<i32, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn io(e: std::io::Error) -> Failure {
    Failure(EXIT_FAILURE, format!("writing output: {e}"))
}

fn width_of(bits: u32) -> OperandWidth {
    OperandWidth::from_bits(bits).expect("clap enforces B >= 1")
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> CmdResult {
    let w = width_of(a.operand_bits);
    let (b, n) = (w.bits(), w.n());
    if let Some(k) = a.overflow_index {
        let step = overflow_step(w, k).expect("clap enforces n >= 1");
        let step_json = step.to_u64().map_or_else(|| json!(step.to_string()), |s| json!(s));
        let doc = match a.format {
            OutputFormat::Text => format!("B={b}, N={n}\n{step}\n"),
            OutputFormat::Csv => format!("B,N,overflow_index,step\n{b},{n},{k},{step}\n"),
            OutputFormat::Json => json_line(&json!({"B": b, "N": n, "overflow_index": k, "step": step_json})),
        };
        out.write_all(doc.as_bytes()).map_err(io)?;
    } else {
        let s = a.steps.expect("clap enforces one query");
        let growth = growth_at_step(w, s);
        let len = oracle_bit_length(w, s);
        let doc = match a.format {
            OutputFormat::Text => format!("B={b}, N={n}\ngrowth {growth}, bit-length {len}\n"),
            OutputFormat::Csv => format!("B,N,steps,growth,bit_length\n{b},{n},{s},{growth},{len}\n"),
            OutputFormat::Json => json_line(&json!({"B": b, "N": n, "steps": s, "growth": growth, "bit_length": len})),
        };
        out.write_all(doc.as_bytes()).map_err(io)?;
    }
    Ok(EXIT_OK)
}

fn json_line(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn accumulate(a: AccumulateArgs, out: &mut dyn Write) -> CmdResult {
    let w = width_of(a.operand_bits);
    let p = accumulate_harness(w, a.steps).expect("clap enforces steps >= 1");
    let rows: Vec<(u64, u64, u64)> = p.rows().collect();
    let doc = match a.format {
        OutputFormat::Text => {
            let mut s = format!("B={}, N={}, steps {}\n", w.bits(), w.n(), a.steps);
            let pw = rows
                .iter()
                .map(|r| r.0.to_string().len())
                .max()
                .unwrap_or(0)
                .max("position".len());
            s += &format!("{:>pw$}  {:>2}  bit-length\n", "position", "k");
            for (pos, k, len) in &rows {
                s += &format!("{pos:>pw$}  {k:>2}  {len:>10}\n");
            }
            s
        }
        OutputFormat::Csv => {
            let mut s = String::from("position,k,bit_length\n");
            for (pos, k, len) in &rows {
                s += &format!("{pos},{k},{len}\n");
            }
            s
        }
        OutputFormat::Json => json_line(&json!({
            "B": w.bits(),
            "N": w.n(),
            "steps": a.steps,
            "rows": rows.iter().map(|(p, k, l)| json!({"position": p, "k": k, "bit_length": l})).collect::<Vec<_>>(),
        })),
    };
    out.write_all(doc.as_bytes()).map_err(io)?;
    Ok(EXIT_OK)
}

fn load_graph(path: &Path, err: &mut dyn Write) -> Result<DataFlowGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("graph");
    let g = parse_named(name, &text).map_err(|e| match e.line {
        0 => usage(format!("{}: {}", path.display(), e.kind)),
        n => usage(format!("{}:{n}: {}", path.display(), e.kind)),
    })?;
    for w in g.warnings() {
        let _ = writeln!(err, "warning: {}: {w}", path.display());
    }
    Ok(g)
}

fn allocate(g: &DataFlowGraph, model: ModelArg) -> Result<crate::allocator::AllocationReport, Failure> {
    assign_formats_with(g, model.into()).map_err(|e| Failure(EXIT_FAILURE, e.to_string()))
}

fn analyze(a: AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let g = load_graph(&a.path, err)?;
    let r = allocate(&g, a.error_model)?;
    out.write_all(render_report(&r, a.format.into()).as_bytes())
        .map_err(io)?;
    Ok(EXIT_OK)
}

fn chains(a: ChainsArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let g = load_graph(&a.path, err)?;
    let chains = predict_chains(&g);
    let doc = match a.format {
        OutputFormat::Text if chains.is_empty() => "no chains\n".to_string(),
        OutputFormat::Text => chains
            .iter()
            .enumerate()
            .map(|(i, c)| chain_line(i + 1, c) + "\n")
            .collect(),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["chain", "members", "base_N", "overflow_steps"])
                .map_err(csv_err)?;
            for (i, c) in chains.iter().enumerate() {
                w.write_record([
                    (i + 1).to_string(),
                    c.members.join(" "),
                    c.base_n.map(|n| n.to_string()).unwrap_or_default(),
                    join(&c.overflow_steps, " "),
                ])
                .map_err(csv_err)?;
            }
            csv_string(w)?
        }
        OutputFormat::Json => json_line(&serde_json::Value::Array(chains.iter().map(chain_json).collect())),
    };
    out.write_all(doc.as_bytes()).map_err(io)?;
    Ok(EXIT_OK)
}

fn chain_json(c: &ChainSummary) -> serde_json::Value {
    json!({"members": c.members, "base_N": c.base_n, "overflow_steps": c.overflow_steps})
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

fn csv_err(e: csv::Error) -> Failure {
    Failure(EXIT_FAILURE, format!("writing csv: {e}"))
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, Failure> {
    let bytes = w
        .into_inner()
        .map_err(|e| Failure(EXIT_FAILURE, format!("writing csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Input(_) | SimError::TooManyCombinations { .. } | SimError::NoTrials => usage(e.to_string()),
        SimError::Overflow(_) | SimError::AllocationMismatch => Failure(EXIT_FAILURE, e.to_string()),
    }
}

fn simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let g = load_graph(&a.path, err)?;
    let alloc = allocate(&g, a.error_model)?;
    if let Some(path) = &a.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let rows = parse_inputs(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut results = Vec::with_capacity(rows.len());
        for v in &rows {
            results.push((v.row, run_fixed(&g, &alloc, v).map_err(sim_failure)?));
        }
        out.write_all(render_runs(&results, a.format)?.as_bytes()).map_err(io)?;
        let mut violated = false;
        for (row, r) in &results {
            for n in r.nodes.iter().filter(|n| !n.within_bound()) {
                violated = true;
                let _ = writeln!(
                    err,
                    "row {row}: node \"{}\" deviates by {} above its bound {}",
                    n.id,
                    n.deviation.terms_string(),
                    n.bound.terms_string()
                );
            }
        }
        return Ok(if a.check_bounds && violated {
            EXIT_FAILURE
        } else {
            EXIT_OK
        });
    }
    let (verdict, header) = if let Some(trials) = a.random {
        let v = verify_bounds(&g, &alloc, trials, a.seed).map_err(sim_failure)?;
        let h = format!("{trials} random trials, seed {}, generator {RNG_NAME}", a.seed);
        (v, h)
    } else {
        let v = verify_exhaustive(&g, &alloc, DEFAULT_EXHAUSTIVE_LIMIT).map_err(sim_failure)?;
        let h = format!("{} exhaustive trials", v.trials);
        (v, h)
    };
    out.write_all(render_verdict(&verdict, &header, a.format)?.as_bytes())
        .map_err(io)?;
    if let Some(c) = &verdict.first_violation {
        let _ = writeln!(
            err,
            "bound violated in {} of {} trials",
            verdict.failing_trials, verdict.trials
        );
        let _ = writeln!(err, "counterexample: {c}");
    }
    Ok(if a.check_bounds && !verdict.is_sound() {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

fn terms_or_zero(d: &Dyadic) -> String {
    if d.is_zero() {
        "0".into()
    } else {
        d.terms_string()
    }
}

fn render_runs(results: &[(usize, SimulationResult)], format: OutputFormat) -> Result<String, Failure> {
    Ok(match format {
        OutputFormat::Text => {
            let mut s = String::new();
            for (row, r) in results {
                s += &format!("row {row}\n");
                let id_w = r.nodes.iter().map(|n| n.id.len()).max().unwrap_or(0);
                for n in &r.nodes {
                    s += &format!(
                        "{:id_w$}  {}  raw {}  value {}  reference {}  deviation {}\n",
                        n.id,
                        n.format,
                        n.raw,
                        n.stored,
                        n.reference,
                        terms_or_zero(&n.deviation)
                    );
                }
            }
            s
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "row",
                "id",
                "notation",
                "scale_exp",
                "raw",
                "value",
                "reference",
                "deviation",
                "bound",
            ])
            .map_err(csv_err)?;
            for (row, r) in results {
                for n in &r.nodes {
                    w.write_record([
                        row.to_string(),
                        n.id.clone(),
                        n.format.to_string(),
                        n.scale_exp.to_string(),
                        n.raw.to_string(),
                        n.stored.to_string(),
                        n.reference.to_string(),
                        n.deviation.to_string(),
                        n.bound.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            csv_string(w)?
        }
        OutputFormat::Json => json_line(&serde_json::Value::Array(
            results
                .iter()
                .map(|(row, r)| {
                    json!({
                        "row": row,
                        "nodes": r.nodes.iter().map(|n| json!({
                            "id": n.id,
                            "notation": n.format.to_string(),
                            "scale_exp": n.scale_exp,
                            "raw": n.raw.to_string(),
                            "value": n.stored.to_string(),
                            "reference": n.reference.to_string(),
                            "deviation": n.deviation.to_string(),
                            "bound": n.bound.to_string(),
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        )),
    })
}

fn ratio(v: Option<f64>) -> String {
    v.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into())
}

fn render_verdict(v: &Verdict, header: &str, format: OutputFormat) -> Result<String, Failure> {
    Ok(match format {
        OutputFormat::Text => {
            let mut s = format!("{header}, engine {}\n", v.host);
            let id_w = v.nodes.iter().map(|n| n.id.len()).max().unwrap_or(0).max(4);
            let cells: Vec<(String, String)> = v
                .nodes
                .iter()
                .map(|n| (terms_or_zero(&n.bound), terms_or_zero(&n.max_deviation)))
                .collect();
            let bw = cells.iter().map(|c| c.0.len()).max().unwrap_or(0).max(5);
            let dw = cells.iter().map(|c| c.1.len()).max().unwrap_or(0).max(13);
            s += &format!(
                "{:id_w$}  {:bw$}  {:dw$}  {:>9}  violations\n",
                "node", "bound", "max deviation", "ratio"
            );
            for (n, (b, d)) in v.nodes.iter().zip(&cells) {
                s += &format!(
                    "{:id_w$}  {b:bw$}  {d:dw$}  {:>9}  {}\n",
                    n.id,
                    ratio(n.tightness()),
                    n.violations
                );
            }
            s += &format!("failing trials: {}\n", v.failing_trials);
            s
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["id", "bound", "max_deviation", "ratio", "violations"])
                .map_err(csv_err)?;
            for n in &v.nodes {
                w.write_record([
                    n.id.clone(),
                    n.bound.terms_string(),
                    n.max_deviation.terms_string(),
                    ratio(n.tightness()),
                    n.violations.to_string(),
                ])
                .map_err(csv_err)?;
            }
            csv_string(w)?
        }
        OutputFormat::Json => json_line(&json!({
            "run": header,
            "engine": v.host,
            "trials": v.trials,
            "failing_trials": v.failing_trials,
            "nodes": v.nodes.iter().map(|n| json!({
                "id": n.id,
                "bound_terms": n.bound.power_terms().iter().map(|t| format!("2^{t}")).collect::<Vec<_>>(),
                "max_deviation_terms": n.max_deviation.power_terms().iter().map(|t| format!("2^{t}")).collect::<Vec<_>>(),
                "ratio": n.tightness(),
                "violations": n.violations,
            })).collect::<Vec<_>>(),
            "counterexample": v.first_violation.as_ref().map(|c| c.to_string()),
        })),
    })
}
