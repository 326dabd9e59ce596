//! Compact list syntax shared by flags and experiment specs.
//!
//! Integer lists: comma-separated items, each `a`, `a-b` or `a-b/step`, and
//! `p` for the dimension where one is known. Real lists: comma-separated
//! values or `start:step:stop`. Template grids: `band:<list>` or
//! `taper:<list>`.

use serde::{Deserialize, Serialize};
use shrinkcov::{TaperTemplate, TemplateSet};

use crate::error::{CliError, Result};

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

/// Parses an integer list; `p` is substituted by `dim`.
pub fn parse_usize_list(s: &str, dim: Option<usize>) -> Result<Vec<usize>> {
    let num = |t: &str| -> Result<usize> {
        let t = t.trim();
        if t == "p" {
            return dim.ok_or_else(|| usage(format!("'p' used in '{s}' but the dimension is unknown")));
        }
        t.parse().map_err(|_| usage(format!("'{t}' in '{s}' is not a nonnegative integer")))
    };
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (range, step) = match item.split_once('/') {
            Some((r, st)) => (r, num(st)?),
            None => (item, 1),
        };
        if step == 0 {
            return Err(usage(format!("zero step in '{item}'")));
        }
        match range.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(usage(format!("empty range '{item}'")));
                }
                out.extend((a..=b).step_by(step));
            }
            None => out.push(num(range)?),
        }
    }
    if out.is_empty() {
        return Err(usage(format!("empty list '{s}'")));
    }
    Ok(out)
}

/// Parses a real list, `start:step:stop` included. Grid values are
/// `start + i·step`, rounded to 12 decimals so that `0:0.01:1` prints
/// cleanly.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| usage(format!("'{t}' in '{s}' is not a finite number")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let out = match parts.as_slice() {
        [start, step, stop] => {
            let (a, h, b) = (num(start)?, num(step)?, num(stop)?);
            if !(h > 0.0) || b < a {
                return Err(usage(format!("'{s}' needs step > 0 and start <= stop")));
            }
            let m = ((b - a) / h + 1e-9).floor() as usize;
            (0..=m).map(|i| ((a + i as f64 * h) * 1e12).round() / 1e12).collect()
        }
        [_] => s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(num)
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(usage(format!("'{s}' is neither a list nor start:step:stop"))),
    };
    if out.is_empty() {
        return Err(usage(format!("empty list '{s}'")));
    }
    Ok(out)
}

/// A list given either as a TOML array or in the compact string syntax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntList {
    Values(Vec<usize>),
    Spec(String),
}

impl IntList {
    pub fn resolve(&self, dim: Option<usize>) -> Result<Vec<usize>> {
        match self {
            IntList::Values(v) if v.is_empty() => Err(usage("empty integer list".into())),
            IntList::Values(v) => Ok(v.clone()),
            IntList::Spec(s) => parse_usize_list(s, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RealList {
    Values(Vec<f64>),
    Spec(String),
}

impl RealList {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            RealList::Values(v) if v.is_empty() => Err(usage("empty list".into())),
            RealList::Values(v) => Ok(v.clone()),
            RealList::Spec(s) => parse_f64_list(s),
        }
    }
}

pub const TEMPLATE_KINDS: [&str; 2] = ["band", "taper"];

/// Builds the template set described by `band:<list>` or `taper:<list>`.
pub fn parse_template_grid(s: &str, p: usize) -> Result<TemplateSet> {
    let (kind, list) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("template grid '{s}' must look like band:1-30,p or taper:2-250/2")))?;
    let ks = parse_usize_list(list, Some(p))?;
    let set = match kind.trim() {
        "band" => TemplateSet::banding(p, &ks),
        "taper" => TemplateSet::linear_taper(p, &ks),
        other => {
            return Err(usage(format!(
                "unknown template kind '{other}'; valid: {}",
                TEMPLATE_KINDS.join(", ")
            )))
        }
    };
    set.map_err(|e| usage(format!("template grid '{s}': {e}")))
}

/// Bandwidth encoded in a template label such as `band(6)`.
pub fn bandwidth(t: &TaperTemplate) -> Option<usize> {
    let l = t.label();
    l.split_once('(')?.1.strip_suffix(')')?.parse().ok()
}
