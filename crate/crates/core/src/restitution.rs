//! Restitution tables: DI → APD and DI → CV with clamped linear interpolation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TissueId;

#[derive(Debug, Clone, PartialEq)]
pub struct RestitutionTable {
    pub tissue: TissueId,
    /// ms
    pub di_min: f64,
    /// (DI ms, APD ms), DI strictly increasing.
    pub apd_points: Vec<(f64, f64)>,
    /// (DI ms, CV cm/s), DI strictly increasing.
    pub cv_points: Vec<(f64, f64)>,
    /// CV_t / CV_l.
    pub ratio: f64,
}

fn check_points(name: &str, points: &[(f64, f64)], di_min: f64) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Table(format!("{name} table is empty")));
    }
    for (i, &(di, v)) in points.iter().enumerate() {
        if !di.is_finite() || !v.is_finite() {
            return Err(Error::Table(format!("{name} row {i} is not finite")));
        }
        if v < 0.0 {
            return Err(Error::Table(format!("{name} row {i} has negative value {v}")));
        }
        if i > 0 && di <= points[i - 1].0 {
            return Err(Error::Table(format!(
                "{name} DI column is not strictly increasing at row {i} ({} then {di})",
                points[i - 1].0
            )));
        }
    }
    if points[0].0 < di_min {
        return Err(Error::Table(format!(
            "{name} table starts at DI {} below DI_min {di_min}",
            points[0].0
        )));
    }
    Ok(())
}

/// Piecewise-linear interpolation, clamped to the end values outside the knots.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if !(x > first.0) {
        // also catches NaN
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    if x == x0 {
        return y0;
    }
    let w = (x - x0) / (x1 - x0);
    y0 + w * (y1 - y0)
}

impl RestitutionTable {
    pub fn new(
        tissue: TissueId,
        di_min: f64,
        apd_points: Vec<(f64, f64)>,
        cv_points: Vec<(f64, f64)>,
        ratio: f64,
    ) -> Result<Self> {
        let t = RestitutionTable {
            tissue,
            di_min,
            apd_points,
            cv_points,
            ratio,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.di_min.is_finite() || self.di_min < 0.0 {
            return Err(Error::Table(format!("DI_min must be finite and >= 0, got {}", self.di_min)));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Table(format!("anisotropy ratio must be in (0, 1], got {}", self.ratio)));
        }
        check_points("APD", &self.apd_points, self.di_min)?;
        check_points("CV", &self.cv_points, self.di_min)
    }

    /// A table with one APD and one CV for every DI.
    pub fn flat(tissue: TissueId, di_min: f64, apd: f64, cv: f64, ratio: f64) -> Result<Self> {
        Self::new(tissue, di_min, vec![(di_min, apd)], vec![(di_min, cv)], ratio)
    }

    /// APD in ms.
    pub fn apd_of(&self, di: f64) -> f64 {
        interpolate(&self.apd_points, di)
    }

    /// Longitudinal CV in cm/s.
    pub fn cv_of(&self, di: f64) -> f64 {
        interpolate(&self.cv_points, di)
    }

    pub fn apd_plateau(&self) -> f64 {
        self.apd_points[self.apd_points.len() - 1].1
    }

    pub fn cv_plateau(&self) -> f64 {
        self.cv_points[self.cv_points.len() - 1].1
    }
}

/// Sidecar JSON describing a table stored as two CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSidecar {
    pub tissue: TissueId,
    pub di_min_ms: f64,
    pub ratio: f64,
    /// Relative to the sidecar's directory.
    pub apd_csv: PathBuf,
    pub cv_csv: PathBuf,
}

const APD_HEADER: [&str; 2] = ["di_ms", "apd_ms"];
const CV_HEADER: [&str; 2] = ["di_ms", "cv_cm_per_s"];

fn read_csv(path: &Path, header: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let got = rdr
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .clone();
    if got.len() != 2 || got.get(0) != Some(header[0]) || got.get(1) != Some(header[1]) {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected header `{},{}`, found `{}`", header[0], header[1], got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::parse(path.display().to_string(), format!("row {i} is short")))?
                .parse::<f64>()
                .map_err(|e| Error::parse(path.display().to_string(), format!("row {i}: {e}")))
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

fn write_csv(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header).map_err(io)?;
    for &(a, b) in points {
        w.write_record([a.to_string(), b.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a table from its sidecar JSON.
pub fn load_table(path: impl AsRef<Path>) -> Result<RestitutionTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let side: TableSidecar =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let apd = read_csv(&dir.join(&side.apd_csv), APD_HEADER)?;
    let cv = read_csv(&dir.join(&side.cv_csv), CV_HEADER)?;
    RestitutionTable::new(side.tissue, side.di_min_ms, apd, cv, side.ratio)
}

/// Writes `<stem>.json` plus `<stem>_apd.csv` and `<stem>_cv.csv` next to it.
pub fn save_table(table: &RestitutionTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    table.validate()?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Table(format!("cannot derive a file stem from {}", path.display())))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let apd_name = PathBuf::from(format!("{stem}_apd.csv"));
    let cv_name = PathBuf::from(format!("{stem}_cv.csv"));
    write_csv(&dir.join(&apd_name), APD_HEADER, &table.apd_points)?;
    write_csv(&dir.join(&cv_name), CV_HEADER, &table.cv_points)?;
    let side = TableSidecar {
        tissue: table.tissue,
        di_min_ms: table.di_min,
        ratio: table.ratio,
        apd_csv: apd_name,
        cv_csv: cv_name,
    };
    let text = serde_json::to_string_pretty(&side).expect("sidecar serialization cannot fail");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
