//! Run configuration: `key = value` files, flag overrides and value syntax.
//!
//! A config file is either plain `key = value` lines (`#` starts a comment)
//! or an earlier output of this tool, in which case the provenance header
//! (CSV first line or the JSON `provenance` field) supplies the values.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nhfloquet::output::{Provenance, HEADER_TAG};
use nhfloquet::C64;

use crate::CliError;

/// Merged raw values; flags override file entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

/// Parses config file text into key/value pairs.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with(HEADER_TAG) {
        let first = trimmed.lines().next().unwrap_or_default();
        return provenance_pairs(first);
    }
    if trimmed.starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        let line = v
            .get("provenance")
            .and_then(|p| p.as_str())
            .ok_or_else(|| CliError::Config("JSON config lacks a provenance string".into()))?;
        return provenance_pairs(line);
    }
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn provenance_pairs(line: &str) -> Result<Vec<(String, String)>, CliError> {
    let p = Provenance::parse_header(line).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(p.entries().iter().map(|(k, v)| (normalize_key(k), v.clone())).collect())
}

/// Merges file values with flag values (flags win) for `command`.
pub fn parse_config(
    command: &str,
    file_text: Option<&str>,
    flags: &[(&str, String)],
) -> Result<RunConfig, CliError> {
    let mut values = BTreeMap::new();
    if let Some(text) = file_text {
        for (k, v) in parse_config_text(text)? {
            if k == "command" {
                if v != command {
                    return Err(CliError::Config(format!("config was written by `{v}`, not `{command}`")));
                }
                continue;
            }
            if values.insert(k.clone(), v).is_some() {
                return Err(CliError::Config(format!("key {k:?} given twice in config")));
            }
        }
    }
    for (k, v) in flags {
        values.insert(normalize_key(k), v.clone());
    }
    Ok(RunConfig { command: command.to_string(), values })
}

/// Real scalar: a number, or a multiple/fraction of `pi` such as `2pi`, `-pi/2`, `3*pi/4`.
pub fn parse_real(s: &str) -> Result<f64, CliError> {
    let err = || CliError::Config(format!("cannot parse {s:?} as a number"));
    let t = s.trim().to_ascii_lowercase();
    if let Ok(x) = t.parse::<f64>() {
        return if x.is_finite() { Ok(x) } else { Err(err()) };
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim().parse::<f64>().map_err(|_| err())?)),
        None => (t.as_str(), None),
    };
    let value = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.trim().trim_end_matches('*').trim();
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| err())?,
        };
        c * PI
    } else {
        num.parse::<f64>().map_err(|_| err())?
    };
    let value = match den {
        Some(d) if d != 0.0 => value / d,
        Some(_) => return Err(err()),
        None => value,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(err())
    }
}

/// Complex scalar: `1.5`, `2i`, `-i`, `1-0.5i`.
pub fn parse_complex(s: &str) -> Result<C64, CliError> {
    let err = || CliError::Config(format!("cannot parse {s:?} as a complex number"));
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    let Some(body) = t.strip_suffix('i') else {
        return parse_real(&t).map(C64::from);
    };
    // split into real and imaginary parts at the last sign that is not an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&j| (bytes[j] == b'+' || bytes[j] == b'-') && bytes[j - 1] != b'e');
    let (re, im) = match split {
        Some(j) => (parse_real(&body[..j])?, &body[j..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => parse_real(x.trim_end_matches('*')).map_err(|_| err())?,
    };
    Ok(C64::new(re, im))
}

pub fn format_complex(z: C64) -> String {
    match (z.re == 0.0, z.im == 0.0) {
        (_, true) => format!("{:?}", z.re),
        (true, false) => format!("{:?}i", z.im),
        _ => format!("{:?}{}{:?}i", z.re, if z.im < 0.0 { "-" } else { "+" }, z.im.abs()),
    }
}

/// Inclusive uniform grid `a:b:n`; a single value gives a one-point grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub n: usize,
}

impl Range {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [x] => {
                let v = parse_real(x)?;
                Ok(Range { start: v, end: v, n: 1 })
            }
            [a, b, n] => {
                let n: usize =
                    n.trim().parse().map_err(|_| CliError::Config(format!("range {s:?}: bad point count {n:?}")))?;
                if n == 0 {
                    return Err(CliError::Config(format!("range {s:?} has no points")));
                }
                Ok(Range { start: parse_real(a)?, end: parse_real(b)?, n })
            }
            _ => Err(CliError::Config(format!("range {s:?} must be a:b:n"))),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.start];
        }
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.end } else { self.start + (self.end - self.start) * i as f64 / last })
            .collect()
    }

    pub fn canonical(&self) -> String {
        format!("{:?}:{:?}:{}", self.start, self.end, self.n)
    }
}

/// Consumes typed values from a [`RunConfig`], materializing defaults into
/// the provenance in the order they are requested.
pub struct Resolver {
    values: BTreeMap<String, String>,
    pub provenance: Provenance,
}

impl Resolver {
    pub fn new(cfg: RunConfig) -> Self {
        let mut provenance = Provenance::new();
        provenance.push("command", &cfg.command);
        Self { values: cfg.values, provenance }
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.values.keys().any(|k| k.starts_with(prefix))
    }

    /// Removes a raw value without recording it.
    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    /// Keys starting with `prefix`, removed and returned in key order.
    pub fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, String)> {
        let keys: Vec<String> = self.values.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        keys.into_iter().map(|k| (k.clone(), self.values.remove(&k).unwrap_or_default())).collect()
    }

    pub fn record(&mut self, key: &str, canonical: impl ToString) {
        self.provenance.push(key, canonical);
    }

    pub fn opt<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, CliError>,
        show: impl Fn(&T) -> String,
    ) -> Result<Option<T>, CliError> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(raw) => {
                let v = parse(&raw).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("--{}: {m}", key.replace('_', "-"))),
                    other => other,
                })?;
                self.provenance.push(key, show(&v));
                Ok(Some(v))
            }
        }
    }

    pub fn real_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.opt(key, parse_real, |x| format!("{x:?}"))?;
        Ok(v.unwrap_or_else(|| {
            self.provenance.push(key, format!("{default:?}"));
            default
        }))
    }

    pub fn real_required(&mut self, key: &str, why: &str) -> Result<f64, CliError> {
        self.opt(key, parse_real, |x| format!("{x:?}"))?.ok_or_else(|| missing(key, why))
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| CliError::Config(format!("expected a non-negative integer, got {s:?}")));
        let v = self.opt(key, parse, |x| x.to_string())?;
        Ok(v.unwrap_or_else(|| {
            self.provenance.push(key, default);
            default
        }))
    }

    pub fn range_or(&mut self, key: &str, default: &str) -> Result<Range, CliError> {
        match self.opt(key, Range::parse, Range::canonical)? {
            Some(r) => Ok(r),
            None => {
                let r = Range::parse(default)?;
                self.provenance.push(key, r.canonical());
                Ok(r)
            }
        }
    }

    pub fn parsed_or<T: std::str::FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let parse = |s: &str| s.trim().parse::<T>().map_err(|e| CliError::Config(e.to_string()));
        let v = self.opt(key, parse, |x| x.to_string())?;
        Ok(v.unwrap_or_else(|| {
            self.provenance.push(key, default.to_string());
            default
        }))
    }

    /// Fails on keys nobody consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Config(format!("unknown or inapplicable key {k:?}"))),
        }
    }
}

pub fn missing(key: &str, why: &str) -> CliError {
    CliError::Config(format!("missing required --{} ({why})", key.replace('_', "-")))
}
