//! Run records and the command implementations behind the `loopbound` binary.
//!
//! Commands return a [`RunRecord`]; the binary renders it as JSON or CSV and
//! maps errors to exit codes with [`exit_code`].

mod commands;
mod reference;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Error;

pub use commands::{
    cmd_bound, cmd_integral, cmd_simulate, cmd_table, parse_coefficients, BoundKind, BoundOptions, IntegralKind,
    IntegralOptions, SimulateOptions, TableId, TableOptions,
};
pub use reference::{reference_cells, ReferenceCell, REFERENCE_JSON};

pub const SCHEMA_JSON: &str = include_str!("../../data/run_record.schema.json");
pub const DEFAULT_SEED: u64 = 0x5EED;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 10;
pub const EXIT_DIVERGENCE: i32 = 11;
pub const EXIT_UNRELIABLE: i32 = 12;
pub const EXIT_INFEASIBLE: i32 = 13;
pub const EXIT_PARAMETER: i32 = 14;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::WrongOperation(_) | Error::Precondition(_) => EXIT_DOMAIN,
        Error::Divergence(_) => EXIT_DIVERGENCE,
        Error::Unreliable(_) => EXIT_UNRELIABLE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Parameter(_) | Error::LengthMismatch { .. } => EXIT_PARAMETER,
        Error::EvaluationFailure { .. } => EXIT_FAILURE,
    }
}

/// JSON has no infinities; non-finite numbers become `"inf"`, `"-inf"`, `"nan"`.
pub fn number(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub coords: Map<String, Value>,
    pub value: Value,
    /// `null` when no error estimate exists.
    pub error: Option<f64>,
}

impl Cell {
    pub fn new(coords: Map<String, Value>, value: f64, error: f64) -> Self {
        Self { coords, value: number(value), error: error.is_finite().then_some(error) }
    }

    pub fn value_f64(&self) -> Option<f64> {
        match &self.value {
            Value::Number(n) => n.as_f64(),
            Value::String(s) if s == "inf" => Some(f64::INFINITY),
            Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
            _ => None,
        }
    }
}

/// Build a coordinate map from `(key, value)` pairs.
pub fn coords<const N: usize>(pairs: [(&str, Value); N]) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaCell {
    pub coords: Map<String, Value>,
    pub computed: f64,
    pub reference: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceDeltas {
    pub max_abs_deviation: f64,
    pub cells: Vec<DeltaCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub params: Map<String, Value>,
    pub seed: u64,
    pub tool: &'static str,
    pub version: &'static str,
    pub cells: Vec<Cell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_deltas: Option<ReferenceDeltas>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Only filled on request, so that identical inputs give identical output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunRecord {
    pub fn new(command: impl Into<String>, params: Map<String, Value>, seed: u64) -> Self {
        Self {
            command: command.into(),
            params,
            seed,
            tool: "loopbound",
            version: env!("CARGO_PKG_VERSION"),
            cells: Vec::new(),
            reference_deltas: None,
            warnings: Vec::new(),
            wall_time_s: None,
        }
    }

    pub fn push(&mut self, coords: Map<String, Value>, value: f64, error: f64) {
        self.cells.push(Cell::new(coords, value, error));
    }

    /// First cell whose coordinates contain all of `query`.
    pub fn cell(&self, query: &Map<String, Value>) -> Option<&Cell> {
        self.cells.iter().find(|c| query.iter().all(|(k, v)| c.coords.get(k) == Some(v)))
    }

    /// Diff against reference cells matched by coordinates.
    pub fn compare(&mut self, reference: &[ReferenceCell]) {
        let mut cells = Vec::new();
        for r in reference {
            if let Some(computed) = self.cell(&r.coords).and_then(Cell::value_f64) {
                cells.push(DeltaCell {
                    coords: r.coords.clone(),
                    computed,
                    reference: r.value,
                    delta: computed - r.value,
                });
            }
        }
        let max_abs_deviation = cells.iter().map(|c| c.delta.abs()).fold(0.0, f64::max);
        self.reference_deltas = Some(ReferenceDeltas { max_abs_deviation, cells });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run records serialise")
    }

    /// Long-form CSV: one row per cell, coordinate columns in first-seen
    /// order, then `value,error`. Numbers are written exactly as in the JSON.
    pub fn to_csv(&self) -> String {
        let mut keys: Vec<&str> = Vec::new();
        for c in &self.cells {
            for k in c.coords.keys() {
                if !keys.contains(&k.as_str()) {
                    keys.push(k);
                }
            }
        }
        let mut out = String::new();
        let header: Vec<&str> = keys.iter().copied().chain(["value", "error"]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for c in &self.cells {
            let mut row: Vec<String> = keys
                .iter()
                .map(|k| c.coords.get(*k).map(csv_field).unwrap_or_default())
                .collect();
            row.push(csv_field(&c.value));
            row.push(c.error.map(|e| Value::from(e).to_string()).unwrap_or_default());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_field(v: &Value) -> String {
    let s = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}
