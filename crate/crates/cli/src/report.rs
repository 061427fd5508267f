//! Canonical report encoding: sorted keys, floats with 17 significant
//! digits, two-space indentation and a trailing newline.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{Number, Value};

use crate::CliError;

pub const SCHEMA_VERSION: u64 = 1;

/// Float in scientific notation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // keep the sign of negative zero out of reports
        return "0.0000000000000000e0".into();
    }
    format!("{v:.16e}")
}

fn write_number(out: &mut String, n: &Number) {
    if let Some(i) = n.as_i64() {
        write!(out, "{i}").unwrap();
    } else if let Some(u) = n.as_u64() {
        write!(out, "{u}").unwrap();
    } else {
        out.push_str(&format_float(n.as_f64().expect("JSON number")));
    }
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.push_str(&"  ".repeat(d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            // serde_json's default map is ordered by key
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push_str(": ");
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// Encode any serializable value canonically.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Numerical(format!("cannot encode report: {e}")))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// `x,t,u` rows with the same float format as the reports.
pub fn grid_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("x,t,u\n");
    for (x, t, u) in rows {
        writeln!(out, "{},{},{}", format_float(*x), format_float(*t), format_float(*u)).unwrap();
    }
    out
}
