//! Report assembly and CSV / JSON rendering.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::config::fmt_float;

/// Extra per-record column. Numbers keep full precision in both formats.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Field {
    fn csv(&self) -> String {
        match self {
            Field::Num(x) => fmt_float(*x),
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub phase: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub err: f64,
    pub class: String,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Tstar")]
    pub t_star: f64,
    /// Command-specific columns, written after the fixed ones in key order.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Field>,
}

impl Record {
    pub fn with(mut self, key: &str, value: Field) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRow {
    pub phase: f64,
    pub residual: f64,
    pub derivative: f64,
    pub value_error: f64,
    pub derivative_error: f64,
    pub margin: f64,
    pub method: String,
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub meta: BTreeMap<String, Value>,
    pub records: Vec<Record>,
    pub certificates: Vec<CertificateRow>,
}

pub const CSV_HEADER: [&str; 6] = ["phase", "M", "err", "class", "T", "Tstar"];

impl Report {
    pub fn to_csv(&self) -> String {
        let extra: Vec<&String> = self.records.first().map(|r| r.extra.keys().collect()).unwrap_or_default();
        let mut out = CSV_HEADER.join(",");
        for k in &extra {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for r in &self.records {
            let mut cols = vec![fmt_float(r.phase), fmt_float(r.m), fmt_float(r.err), r.class.clone(), fmt_float(r.t), fmt_float(r.t_star)];
            cols.extend(extra.iter().map(|k| r.extra.get(*k).map_or_else(String::new, Field::csv)));
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are serializable");
        s.push('\n');
        s
    }
}
