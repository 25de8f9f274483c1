use std::fs;
use std::io::Write;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

use crate::args::{Format, OutputArgs};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: C,
    pub result: R,
}

/// `key,value` rows, one per leaf. Object keys join with `.`, array
/// entries use their index. Numbers keep their JSON spelling.
pub fn flatten(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(&key(k), v, out)),
            Value::Array(a) => a
                .iter()
                .enumerate()
                .for_each(|(i, v)| walk(&key(&i.to_string()), v, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Null => out.push((prefix.to_string(), String::new())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

pub fn render<T: Serialize>(report: &T, format: Format) -> anyhow::Result<Vec<u8>> {
    let value = serde_json::to_value(report)?;
    Ok(match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(&value)?;
            s.push(b'\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in flatten(&value) {
                w.write_record([k, v])?;
            }
            w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?
        }
    })
}

pub fn emit<T: Serialize>(report: &T, out: &OutputArgs) -> anyhow::Result<()> {
    let bytes = render(report, out.format)?;
    match &out.output {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout()
            .write_all(&bytes)
            .context("writing stdout"),
    }
}
