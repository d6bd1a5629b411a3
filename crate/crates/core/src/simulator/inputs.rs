// SPDX-License-Identifier: Apache-2.0

//! Input vectors and their CSV/JSON encodings.
//!
//! A value is either a decimal, quantized by flooring onto the input's
//! format, or `raw:<integer>`, taken as the raw payload directly.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::dfg::DataFlowGraph;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputValue {
    Raw(BigInt),
    Real(BigRational),
}

impl InputValue {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some(r) = s.strip_prefix("raw:") {
            return r.trim().parse().ok().map(Self::Raw);
        }
        parse_decimal(s).map(Self::Real)
    }
}

/// Parses `[-+]digits[.digits][e[-+]digits]` exactly.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(p) => (&s[..p], s[p + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("0{int}{frac}").parse().ok()?;
    let exp10 = exp.checked_sub(i32::try_from(frac.len()).ok()?)?;
    let ten = BigInt::from(10u32);
    let mut r = if exp10 >= 0 {
        BigRational::from_integer(all * ten.pow(exp10 as u32))
    } else {
        BigRational::new(all, ten.pow(exp10.unsigned_abs()))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InputError {
    #[error("input file: {0}")]
    Malformed(String),
    #[error("row {row}: unknown input \"{id}\"")]
    UnknownInput { row: usize, id: String },
    #[error("row {row}: input \"{id}\" is not bound")]
    Unbound { row: usize, id: String },
    #[error("row {row}: input \"{id}\" is bound twice")]
    Duplicate { row: usize, id: String },
    #[error("row {row}: input \"{id}\": cannot parse value `{value}`")]
    BadValue { row: usize, id: String, value: String },
    #[error(transparent)]
    OutOfRange(Box<OutOfRange>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("row {row}: input \"{id}\": raw {raw} is outside the analysed range [{lo}, {hi}]")]
pub struct OutOfRange {
    pub row: usize,
    pub id: String,
    pub raw: BigInt,
    pub lo: BigInt,
    pub hi: BigInt,
}

/// Values for the inputs of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InputVector {
    /// 1-based row in the source file, 0 when built in code.
    pub row: usize,
    pub values: Vec<(String, InputValue)>,
}

impl InputVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: &str, value: InputValue) -> Self {
        self.values.push((id.to_string(), value));
        self
    }

    /// All graph inputs at zero.
    pub fn zeros(g: &DataFlowGraph) -> Self {
        g.inputs().fold(Self::new(), |v, ix| {
            v.with(&g.node(ix).id, InputValue::Raw(BigInt::zero()))
        })
    }

    /// Raw payloads for the graph's inputs in file order. Signed inputs must
    /// lie in the symmetric range `[-(2^D - 1), 2^D - 1]` the allocator
    /// analyses.
    pub fn bind(&self, g: &DataFlowGraph) -> Result<Vec<BigInt>, InputError> {
        let row = self.row;
        let slots: HashMap<&str, usize> = g
            .inputs()
            .enumerate()
            .map(|(i, ix)| (g.node(ix).id.as_str(), i))
            .collect();
        let mut out: Vec<Option<BigInt>> = vec![None; slots.len()];
        for (id, value) in &self.values {
            let slot = *slots
                .get(id.as_str())
                .ok_or_else(|| InputError::UnknownInput { row, id: id.clone() })?;
            if out[slot].is_some() {
                return Err(InputError::Duplicate { row, id: id.clone() });
            }
            let ix = g.lookup(id).expect("slot ids come from the graph");
            let format = g.node(ix).declared.expect("validated").format;
            let raw = match value {
                InputValue::Raw(r) => r.clone(),
                InputValue::Real(x) => x.floor_scaled(format.frac_bits() as i64).expect("finite rational"),
            };
            let (lo, hi) = (format.raw_min_symmetric(), format.raw_max());
            if raw < lo || raw > hi {
                return Err(InputError::OutOfRange(Box::new(OutOfRange {
                    row,
                    id: id.clone(),
                    raw,
                    lo,
                    hi,
                })));
            }
            out[slot] = Some(raw);
        }
        g.inputs()
            .zip(out)
            .map(|(ix, v)| {
                v.ok_or_else(|| InputError::Unbound {
                    row,
                    id: g.node(ix).id.clone(),
                })
            })
            .collect()
    }
}

pub fn parse_inputs_csv(text: &str) -> Result<Vec<InputVector>, InputError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| InputError::Malformed(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| InputError::Malformed(e.to_string()))?;
        let row = i + 1;
        let mut v = InputVector {
            row,
            values: Vec::new(),
        };
        for (id, field) in header.iter().zip(rec.iter()) {
            let value = InputValue::parse(field).ok_or_else(|| InputError::BadValue {
                row,
                id: id.clone(),
                value: field.to_string(),
            })?;
            v.values.push((id.clone(), value));
        }
        out.push(v);
    }
    Ok(out)
}

/// A JSON array of objects mapping input ids to numbers or strings.
pub fn parse_inputs_json(text: &str) -> Result<Vec<InputVector>, InputError> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_str(text).map_err(|e| InputError::Malformed(e.to_string()))?;
    rows.into_iter()
        .enumerate()
        .map(|(i, obj)| {
            let row = i + 1;
            let values = obj
                .into_iter()
                .map(|(id, v)| {
                    let text = match &v {
                        serde_json::Value::String(s) => s.clone(),
                        serde_json::Value::Number(n) => n.to_string(),
                        other => other.to_string(),
                    };
                    let value = InputValue::parse(&text).ok_or_else(|| InputError::BadValue {
                        row,
                        id: id.clone(),
                        value: text.clone(),
                    })?;
                    Ok((id, value))
                })
                .collect::<Result<_, InputError>>()?;
            Ok(InputVector { row, values })
        })
        .collect()
}

/// Parses CSV unless the text starts with `[`.
pub fn parse_inputs(text: &str) -> Result<Vec<InputVector>, InputError> {
    if text.trim_start().starts_with('[') {
        parse_inputs_json(text)
    } else {
        parse_inputs_csv(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::parse;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn decimals() {
        assert_eq!(parse_decimal("5.9375"), Some(rat(95, 16)));
        assert_eq!(parse_decimal("-0.1"), Some(rat(-1, 10)));
        assert_eq!(parse_decimal(".5"), Some(rat(1, 2)));
        assert_eq!(parse_decimal("3."), Some(rat(3, 1)));
        assert_eq!(parse_decimal("1.5e2"), Some(rat(150, 1)));
        assert_eq!(parse_decimal("25e-2"), Some(rat(1, 4)));
        for bad in ["", "-", ".", "1.2.3", "abc", "1e", "0x10"] {
            assert_eq!(parse_decimal(bad), None, "{bad}");
        }
    }

    #[test]
    fn csv_and_json_agree() {
        let csv = parse_inputs_csv("a, b\n125, raw:5\n-1.5,0\n").unwrap();
        let json = parse_inputs_json(r#"[{"a": 125, "b": "raw:5"}, {"a": "-1.5", "b": 0}]"#).unwrap();
        assert_eq!(csv, json);
        assert_eq!(parse_inputs("[]").unwrap(), vec![]);
    }

    #[test]
    fn binding() {
        let g = parse("word 16\ninput a 1/7/0\ninput b 1/3/4\nnode s = add a b\noutput y s").unwrap();
        let rows = parse_inputs_csv("b,a\n-1.03,125\n").unwrap();
        // -1.03 floors to -17/16
        assert_eq!(rows[0].bind(&g).unwrap(), vec![BigInt::from(125), BigInt::from(-17)]);

        let err = parse_inputs_csv("a\n1\n").unwrap()[0].bind(&g).unwrap_err();
        assert_eq!(err, InputError::Unbound { row: 1, id: "b".into() });
        let err = parse_inputs_csv("a,b,c\n1,1,1\n").unwrap()[0].bind(&g).unwrap_err();
        assert!(matches!(err, InputError::UnknownInput { .. }));
        let err = parse_inputs_csv("a,b\nraw:-128,0\n").unwrap()[0].bind(&g).unwrap_err();
        assert!(
            matches!(err, InputError::OutOfRange(_)),
            "asymmetric minimum is rejected"
        );
        assert!(parse_inputs_csv("a,b\nx,0\n").is_err());
    }
}
