//! Number formatting and flat `key = value` reports.

use std::fmt::Write as _;

/// Formats `x` with 17 significant digits (round-trips every `f64`).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Ordered list of `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, Value)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    Text(String),
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) -> &mut Self {
        self.entries.push((key.into(), Value::Num(v)));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl ToString) -> &mut Self {
        self.entries.push((key.into(), Value::Text(v.to_string())));
        self
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| match v {
                Value::Num(x) => fmt17(*x),
                Value::Text(s) => s.clone(),
            })
    }

    /// Full-precision rendering, one `key = value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let v = match v {
                Value::Num(x) => fmt17(*x),
                Value::Text(s) => s.clone(),
            };
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Human-oriented rendering with numbers rounded to 6 significant digits.
    pub fn render_display(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let v = match v {
                Value::Num(x)
                    if x.is_finite() && *x != 0.0 && (x.abs() >= 1e6 || x.abs() < 1e-4) =>
                {
                    format!("{x:.5e}")
                }
                Value::Num(x) if x.is_finite() => {
                    let s = format!("{x:.6}");
                    s.trim_end_matches('0').trim_end_matches('.').to_string()
                }
                Value::Num(x) => fmt17(*x),
                Value::Text(s) => s.clone(),
            };
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
