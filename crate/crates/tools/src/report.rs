//! Flat `key = value` reports.

use std::fmt::{self, Display};

use vcsp_core::ExtValue;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        let v = value.to_string().replace('\n', " ");
        self.entries.push((key.into(), v));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, prefix: &str, other: Report) {
        for (k, v) in other.entries {
            self.entries.push((format!("{prefix}.{k}"), v));
        }
    }

    /// Parses rendered report text back into entries.
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
            .collect();
        Report { entries }
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// An exact value, rendered as an integer, `p/q` or `inf`.
pub fn exact(v: &ExtValue) -> String {
    v.to_string()
}

/// A floating-point value tagged with the tolerance it was computed to.
pub fn approx(v: f64, eps: f64) -> String {
    if v.is_infinite() {
        return "inf".into();
    }
    format!("{v:.9} (approx, eps {eps:e})")
}

/// A residual in scientific notation.
pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}
