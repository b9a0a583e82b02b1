//! Writers for snapshots (legacy VTK, CSV) and the event log (JSON lines).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::engine::{Event, NodeState, Snapshot};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scenario::OutputFormat;

/// Sentinel written to VTK for "never activated", since readers choke on inf.
pub const VTK_UNSET: f64 = -1.0;

pub fn snapshot_file_name(t: f64, ext: &str) -> String {
    format!("snapshot_{t:010.3}.{ext}")
}

fn vtk_value(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        VTK_UNSET
    }
}

pub fn write_vtk(mesh: &Mesh, snap: &Snapshot, mut w: impl Write) -> std::io::Result<()> {
    let n = mesh.node_count();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "activation snapshot t={}", snap.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    let m = mesh.triangle_count();
    writeln!(w, "CELLS {m} {}", 4 * m)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {m}")?;
    for _ in 0..m {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS phi double 1\nLOOKUP_TABLE default")?;
    for &x in &snap.phi {
        writeln!(w, "{}", vtk_value(x))?;
    }
    writeln!(w, "SCALARS v int 1\nLOOKUP_TABLE default")?;
    for &x in &snap.v {
        writeln!(w, "{x}")?;
    }
    writeln!(w, "SCALARS di double 1\nLOOKUP_TABLE default")?;
    for &x in &snap.di {
        writeln!(w, "{}", vtk_value(x))?;
    }
    writeln!(w, "SCALARS state int 1\nLOOKUP_TABLE default")?;
    for &s in &snap.state {
        writeln!(w, "{}", s.code())?;
    }
    w.flush()
}

const CSV_HEADER: [&str; 6] = ["node", "t_ms", "phi", "v", "di", "state"];

/// One row per node. Floats use the shortest round-tripping form, so
/// reading back reproduces the snapshot bit for bit.
pub fn write_snapshot_csv(snap: &Snapshot, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::parse("snapshot csv", e);
    out.write_record(CSV_HEADER).map_err(err)?;
    let t = snap.t.to_string();
    for i in 0..snap.phi.len() {
        out.write_record([
            i.to_string(),
            t.clone(),
            snap.phi[i].to_string(),
            snap.v[i].to_string(),
            snap.di[i].to_string(),
            snap.state[i].code().to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::parse("snapshot csv", e))
}

pub fn read_snapshot_csv(r: impl std::io::Read) -> Result<Snapshot> {
    let mut rd = csv::Reader::from_reader(r);
    let err = |m: String| Error::parse("snapshot csv", m);
    let header = rd.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut snap = Snapshot { t: f64::NAN, v: vec![], phi: vec![], di: vec![], state: vec![] };
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let f = |k: usize| field(k).parse::<f64>().map_err(|e| err(format!("row {row}: {e}")));
        if field(0).parse::<usize>().ok() != Some(row) {
            return Err(err(format!("row {row}: node ids must be 0..n in order")));
        }
        let t = f(1)?;
        if row == 0 {
            snap.t = t;
        }
        snap.phi.push(f(2)?);
        snap.v.push(field(3).parse().map_err(|e| err(format!("row {row}: {e}")))?);
        snap.di.push(f(4)?);
        let code: u8 = field(5).parse().map_err(|e| err(format!("row {row}: {e}")))?;
        snap.state.push(NodeState::from_code(code).ok_or_else(|| err(format!("row {row}: bad state {code}")))?);
    }
    Ok(snap)
}

pub fn write_events_jsonl(events: &[Event], mut w: impl Write) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).map_err(|e| Error::parse("event", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io("event log", e))?;
    }
    Ok(())
}

pub fn read_events_jsonl(r: impl std::io::Read) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::io("event log", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(format!("event line {}", i + 1), e))?);
    }
    Ok(out)
}

/// Streams snapshots into a directory in the chosen format.
pub struct SnapshotWriter {
    dir: PathBuf,
    format: OutputFormat,
    written: Vec<PathBuf>,
}

impl SnapshotWriter {
    pub fn new(dir: impl Into<PathBuf>, format: OutputFormat) -> Result<Self> {
        let dir = dir.into();
        if format != OutputFormat::None {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(SnapshotWriter { dir, format, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, mesh: &Mesh, snap: &Snapshot) -> Result<()> {
        let ext = match self.format {
            OutputFormat::None => return Ok(()),
            OutputFormat::Vtk => "vtk",
            OutputFormat::Csv => "csv",
        };
        let path = self.dir.join(snapshot_file_name(snap.t, ext));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let w = BufWriter::new(file);
        match self.format {
            OutputFormat::Vtk => write_vtk(mesh, snap, w).map_err(|e| Error::io(&path, e))?,
            OutputFormat::Csv => write_snapshot_csv(snap, w)?,
            OutputFormat::None => unreachable!(),
        }
        self.written.push(path);
        Ok(())
    }
}
