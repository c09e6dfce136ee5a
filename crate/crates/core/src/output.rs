//! Tabular emission as CSV or JSON.
//!
//! Floats use Rust's shortest round-trip formatting, so a value parses back to
//! the identical `f64`. Missing values are empty CSV fields and JSON `null`.
//! The first CSV line is a provenance header:
//! `# nhfloquet <version> key=value key=value ...`.

use std::fmt::Write as _;

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Result};
use crate::lattice::DispersionPoint;
use crate::linalg::C64;
use crate::scan::{ButterflyData, DispersionComparison, PhaseDiagram};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const HEADER_TAG: &str = "# nhfloquet";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => format!("{x:?}"),
            Cell::Num(_) | Cell::Missing => String::new(),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Json::Null, Json::Number),
            Cell::Int(n) => json!(n),
            Cell::Text(s) => json!(s),
            Cell::Missing => Json::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<u32> for Cell {
    fn from(n: u32) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Ordered run parameters echoed into every output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    entries: Vec<(String, String)>,
}

impl Provenance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `# nhfloquet <version> k=v ...`, without a trailing newline.
    pub fn header_line(&self) -> String {
        let mut s = format!("{HEADER_TAG} {VERSION}");
        for (k, v) in &self.entries {
            let _ = write!(s, " {k}={v}");
        }
        s
    }

    /// Inverse of [`header_line`](Self::header_line). Values may not contain whitespace.
    pub fn parse_header(line: &str) -> Result<Self> {
        let rest = line
            .trim()
            .strip_prefix(HEADER_TAG)
            .ok_or_else(|| Error::Parse(format!("not a provenance header: {line:?}")))?;
        let mut words = rest.split_whitespace();
        words.next().ok_or_else(|| Error::Parse("provenance header lacks a version".into()))?;
        let mut p = Provenance::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| Error::Parse(format!("bad provenance entry {w:?}")))?;
            p.push(k, v);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut s = prov.header_line();
        s.push('\n');
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        s
    }

    fn json_rows(&self) -> Json {
        Json::Array(
            self.rows
                .iter()
                .map(|row| {
                    let m: Map<String, Json> =
                        self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    Json::Object(m)
                })
                .collect(),
        )
    }

    /// `{"provenance": "...", "columns": [...], "rows": [{...}, ...]}`.
    pub fn to_json(&self, prov: &Provenance) -> String {
        let v = json!({
            "provenance": prov.header_line(),
            "columns": self.columns,
            "rows": self.json_rows(),
        });
        let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Parse(format!("unknown format {s:?}, expected csv or json"))),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl Table {
    pub fn render(&self, format: Format, prov: &Provenance) -> String {
        match format {
            Format::Csv => self.to_csv(prov),
            Format::Json => self.to_json(prov),
        }
    }
}

pub fn complex_cells(z: C64) -> [Cell; 2] {
    [Cell::Num(z.re), Cell::Num(z.im)]
}

pub fn phase_diagram_table(pd: &PhaseDiagram) -> Table {
    let mut t = Table::new(vec!["gamma_sq", "mu", "class", "beta", "im_beta"]);
    for c in &pd.cells {
        let im_beta = match c.result.class {
            crate::scan::CellClass::Unstable => c.result.im_beta.map(f64::abs),
            _ => None,
        };
        t.push(vec![c.gamma_sq.into(), c.mu.into(), c.result.class.as_str().into(), c.result.beta.into(), im_beta.into()]);
    }
    t
}

pub fn butterfly_table(data: &ButterflyData) -> Table {
    let mut t = Table::new(vec!["p", "q", "alpha", "gamma_sq", "class", "beta"]);
    for r in &data.records {
        t.push(vec![r.p.into(), r.q.into(), r.alpha.into(), r.gamma_sq.into(), r.class.as_str().into(), r.beta.into()]);
    }
    t
}

pub fn bands_table(points: &[DispersionPoint]) -> Table {
    let mut t = Table::new(vec!["k", "band_index", "re_e", "im_e", "real_flag"]);
    for p in points {
        let [re, im] = complex_cells(p.energy);
        t.push(vec![p.k.into(), p.band_index.into(), re, im, p.real.into()]);
    }
    t
}

/// Floquet-side points of a dispersion comparison.
pub fn dispersion_points_table(cmp: &DispersionComparison) -> Table {
    let mut t = Table::new(vec!["beta", "gamma_sq", "nearest_re_e", "nearest_im_e", "deviation"]);
    for p in &cmp.floquet_points {
        let [re, im] = complex_cells(p.nearest_band);
        t.push(vec![p.beta.into(), p.gamma_sq.into(), re, im, p.deviation.into()]);
    }
    t
}

/// Band curves of a dispersion comparison, `k` given as `kL`.
pub fn dispersion_bands_table(cmp: &DispersionComparison) -> Table {
    let mut t = Table::new(vec!["kl", "band_index", "re_e", "im_e", "real_flag"]);
    for p in &cmp.band_curves {
        let [re, im] = complex_cells(p.energy);
        t.push(vec![p.k.into(), p.band_index.into(), re, im, p.real.into()]);
    }
    t
}

/// One-row summary of a dispersion comparison.
pub fn dispersion_summary_table(cmp: &DispersionComparison) -> Table {
    let mut t = Table::new(vec!["mu", "lattice_constant", "truncation", "n_points", "n_band_samples", "max_discrepancy"]);
    t.push(vec![
        cmp.mu.into(),
        cmp.lattice_constant.into(),
        cmp.truncation.into(),
        cmp.floquet_points.len().into(),
        cmp.band_curves.len().into(),
        cmp.max_discrepancy.into(),
    ]);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let mut p = Provenance::new();
        p.push("command", "phase-diagram").push("preset", "H1").push("gamma", "0.0:4.0:201");
        let line = p.header_line();
        assert!(line.starts_with("# nhfloquet "));
        assert_eq!(Provenance::parse_header(&line).unwrap(), p);
        assert!(Provenance::parse_header("gamma_sq,mu").is_err());
    }

    #[test]
    fn floats_round_trip_and_missing_is_empty() {
        let mut t = Table::new(vec!["x", "y", "c"]);
        t.push(vec![0.1.into(), None.into(), "marginal".into()]);
        t.push(vec![1.0.into(), Some(-2.5e-17).into(), "unstable".into()]);
        let csv = t.to_csv(&Provenance::new());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "x,y,c");
        assert_eq!(lines[2], "0.1,,marginal");
        assert_eq!(lines[3], "1.0,-2.5e-17,unstable");
        let json: Json = serde_json::from_str(&t.to_json(&Provenance::new())).unwrap();
        assert_eq!(json["rows"][0]["y"], Json::Null);
        assert_eq!(json["rows"][1]["c"], "unstable");
    }
}
