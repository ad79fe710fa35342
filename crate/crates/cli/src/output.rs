//! Deterministic CSV and JSON artifact emission.
//!
//! Doubles print with 17 significant digits so files round-trip exactly;
//! non-finite values must pass through an explicit sentinel string.

use serde_json::{json, Map, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Format a double with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        // callers are expected to map non-finite values to sentinels first
        return if x.is_nan() { "nan_sentinel".into() } else { "inf_sentinel".into() };
    }
    format!("{x:.16e}")
}

/// A value cell: finite number, integer, or named sentinel.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn text(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Rate cell with the `inf_rate` sentinel for basis-vector profiles.
pub fn rate_cell(rate: f64) -> Cell {
    if rate.is_finite() {
        Cell::Num(rate)
    } else {
        Cell::text("inf_rate")
    }
}

/// RFC-4180-style CSV writer (plain values, no quoting needed for our
/// numeric/identifier cells).
pub struct CsvFile {
    path: PathBuf,
    buf: String,
    columns: usize,
}

impl CsvFile {
    pub fn create(path: PathBuf, header: &[&str]) -> CsvFile {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push_str("\r\n");
        CsvFile { path, buf, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "row width mismatch in {:?}", self.path);
        let rendered: Vec<String> = cells.iter().map(|c| c.render()).collect();
        self.buf.push_str(&rendered.join(","));
        self.buf.push_str("\r\n");
    }

    pub fn write(self) -> std::io::Result<PathBuf> {
        let mut f = fs::File::create(&self.path)?;
        f.write_all(self.buf.as_bytes())?;
        Ok(self.path)
    }
}

/// Long-format result rows: (experiment, replica, time, key, value),
/// unique per file by construction of the emitting experiments.
pub struct ResultTable {
    csv: CsvFile,
    experiment: String,
}

impl ResultTable {
    pub fn create(dir: &Path, experiment: &str) -> ResultTable {
        ResultTable {
            csv: CsvFile::create(
                dir.join("results.csv"),
                &["experiment", "replica", "time", "key", "value"],
            ),
            experiment: experiment.to_string(),
        }
    }

    pub fn push(&mut self, replica: usize, time: f64, key: &str, value: Cell) {
        self.csv.row(&[
            Cell::text(&self.experiment),
            Cell::Int(replica as i64),
            Cell::Num(time),
            Cell::text(key),
            value,
        ]);
    }

    pub fn write(self) -> std::io::Result<PathBuf> {
        self.csv.write()
    }
}

/// One acceptance-style summary entry.
pub struct AcceptanceEntry {
    pub key: &'static str,
    pub value: f64,
    pub threshold: f64,
    /// `true` when smaller is better (<= threshold), `false` for >=.
    pub upper_bound: bool,
}

impl AcceptanceEntry {
    pub fn pass(&self) -> bool {
        if self.upper_bound {
            self.value <= self.threshold
        } else {
            self.value >= self.threshold
        }
    }
}

pub fn summary_json(
    experiment: &str,
    stats: &[(&str, f64)],
    acceptance: &[AcceptanceEntry],
) -> Value {
    let mut stat_map = Map::new();
    for (k, v) in stats {
        stat_map.insert(
            k.to_string(),
            if v.is_finite() { json!(v) } else { json!(format!("{v}")) },
        );
    }
    let mut acc_map = Map::new();
    for e in acceptance {
        acc_map.insert(
            e.key.to_string(),
            json!({
                "value": e.value,
                "threshold": e.threshold,
                "direction": if e.upper_bound { "<=" } else { ">=" },
                "pass": e.pass(),
            }),
        );
    }
    json!({
        "experiment": experiment,
        "statistics": Value::Object(stat_map),
        "acceptance": Value::Object(acc_map),
    })
}

pub fn write_json(path: &Path, value: &Value) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(value).expect("serializable").as_bytes())?;
    f.write_all(b"\n")
}

pub fn write_manifest(dir: &Path, cfg: &crate::config::ExperimentConfig) -> std::io::Result<()> {
    let manifest = json!({
        "experiment": cfg.experiment,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}
