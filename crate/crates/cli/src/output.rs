//! Number formatting and writers. Every number leaves the program rounded to
//! 12 significant digits.

use std::fs;
use std::path::Path;

use relrobust::{Error, Result};
use serde::Serialize;
use serde_json::Value;

pub const SIG_DIGITS: usize = 12;

pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIG_DIGITS - 1, v).parse().unwrap_or(v)
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    let r = round_sig(v);
    if r == 0.0 {
        "0".into()
    } else if r.abs() < 1e-5 || r.abs() >= 1e15 {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64().filter(|_| n.is_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes to `out` when given, otherwise to stdout.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn csv<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut s = header.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Plain-text weight table.
pub fn weight_table(labels: &[String], x: &[f64]) -> String {
    let width = labels.iter().map(String::len).max().unwrap_or(5).max(5);
    let mut s = format!("{:<width$}  weight\n", "asset");
    for (l, v) in labels.iter().zip(x) {
        s.push_str(&format!("{l:<width$}  {}\n", fmt_num(*v)));
    }
    s
}
