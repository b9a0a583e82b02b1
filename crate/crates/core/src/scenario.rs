//! Scenario files: geometry, tissues, stimuli, block lines and timing.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjacency::{build_adjacency, Adjacency};
use crate::engine::{BlockLine, EngineConfig, StimulusEvent};
use crate::error::{Error, Result};
use crate::generate::{generate_annulus, generate_structured_square, Rect, ScarLayout, Stretch};
use crate::mesh::{load_mesh, Mesh, TissueId};
use crate::restitution::{load_table, RestitutionTable};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MeshSource {
    File(PathBuf),
    Square {
        side: f64,
        h: f64,
        #[serde(default)]
        layout: Option<ScarLayout>,
        #[serde(default)]
        stretch: Option<Stretch>,
    },
    Annulus { r_inner: f64, r_outer: f64, h: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueDef {
    pub id: TissueId,
    /// Table sidecar JSON, relative to the scenario file.
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub scar: bool,
    /// Overrides the table's DI_min.
    #[serde(default)]
    pub di_min_ms: Option<f64>,
    /// Overrides the table's anisotropy ratio.
    #[serde(default)]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusDef {
    pub t_ms: f64,
    #[serde(default)]
    pub r#box: Option<Rect>,
    #[serde(default)]
    pub nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockLineDef {
    pub t_open_ms: f64,
    /// Every edge touching the segment is blocked.
    #[serde(default)]
    pub segment: Option<Segment>,
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Vtk,
    Csv,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDef {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// The file as written, before any resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub mesh: MeshSource,
    /// Uniform fiber direction overriding the mesh fibers.
    #[serde(default)]
    pub fiber: Option<Vec<f64>>,
    pub tissues: Vec<TissueDef>,
    pub stimuli: Vec<StimulusDef>,
    #[serde(default)]
    pub block_lines: Vec<BlockLineDef>,
    #[serde(default = "default_dt")]
    pub dt_ms: f64,
    pub t_end_ms: f64,
    #[serde(default = "default_cadence")]
    pub snapshot_every_ms: f64,
    #[serde(default)]
    pub output: Option<OutputDef>,
}

fn default_dt() -> f64 {
    1.0
}

fn default_cadence() -> f64 {
    5.0
}

/// A fully resolved scenario, ready to drive the engine.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mesh: Mesh,
    pub adjacency: Adjacency,
    pub tables: Vec<RestitutionTable>,
    pub scar_tissues: Vec<TissueId>,
    pub stimuli: Vec<StimulusEvent>,
    pub block_lines: Vec<BlockLine>,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    pub output_dir: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Scenario {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            dt: self.dt,
            t_end: self.t_end,
            snapshot_every: self.snapshot_every,
            tables: self.tables.clone(),
            scar_tissues: self.scar_tissues.clone(),
            stimuli: self.stimuli.clone(),
            block_lines: self.block_lines.clone(),
        }
    }
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario_str(&text, base)
}

/// Parses scenario JSON, resolving relative paths against `base`.
pub fn parse_scenario_str(text: &str, base: &Path) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::scenario(key, e.into_inner().to_string())
    })?;
    resolve(file, base)
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::scenario(key, format!("must be positive, got {v}")))
    }
}

pub fn resolve(file: ScenarioFile, base: &Path) -> Result<Scenario> {
    if file.version != SCHEMA_VERSION {
        return Err(Error::scenario(
            "version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.version),
        ));
    }
    positive("dt_ms", file.dt_ms)?;
    positive("t_end_ms", file.t_end_ms)?;
    positive("snapshot_every_ms", file.snapshot_every_ms)?;
    if file.dt_ms > file.t_end_ms {
        return Err(Error::scenario("dt_ms", "must not exceed t_end_ms"));
    }

    let wrap = |key: &str| {
        let key = key.to_string();
        move |e: Error| Error::scenario(key.clone(), e.to_string())
    };
    let mut mesh = match &file.mesh {
        MeshSource::File(p) => load_mesh(base.join(p)).map_err(wrap("mesh.file"))?,
        MeshSource::Square { side, h, layout, stretch } => {
            generate_structured_square(*side, *h, layout.as_ref(), *stretch).map_err(wrap("mesh.square"))?
        }
        MeshSource::Annulus { r_inner, r_outer, h } => {
            generate_annulus(*r_inner, *r_outer, *h).map_err(wrap("mesh.annulus"))?
        }
    };
    if let Some(f) = &file.fiber {
        if f.len() != mesh.dim() {
            return Err(Error::scenario("fiber", format!("expected {} components", mesh.dim())));
        }
        let fv = [f[0], f[1], if f.len() == 3 { f[2] } else { 0.0 }];
        mesh.set_fibers(vec![fv; mesh.triangle_count()]).map_err(wrap("fiber"))?;
    }

    let mut tables = Vec::new();
    let mut scar_tissues = Vec::new();
    let mut declared = BTreeSet::new();
    for (i, t) in file.tissues.iter().enumerate() {
        let key = format!("tissues[{i}]");
        if !declared.insert(t.id) {
            return Err(Error::scenario(format!("{key}.id"), format!("tissue {} declared twice", t.id)));
        }
        match (t.scar, &t.table) {
            (true, None) => scar_tissues.push(t.id),
            (false, Some(p)) => {
                let mut table = load_table(base.join(p)).map_err(wrap(&format!("{key}.table")))?;
                table.tissue = t.id;
                if let Some(d) = t.di_min_ms {
                    table.di_min = d;
                }
                if let Some(r) = t.ratio {
                    table.ratio = r;
                }
                table.validate().map_err(wrap(&key))?;
                tables.push(table);
            }
            (true, Some(_)) => return Err(Error::scenario(key, "a scar tissue takes no table")),
            (false, None) => return Err(Error::scenario(key, "needs a table or `scar: true`")),
        }
    }
    for id in mesh.tissue_ids() {
        if !declared.contains(&id) {
            return Err(Error::scenario("tissues", format!("mesh uses tissue {id}, which is not declared")));
        }
    }
    let is_scar = |x: usize| scar_tissues.contains(&mesh.tissue_of(x));

    let mut stimuli = Vec::new();
    for (i, s) in file.stimuli.iter().enumerate() {
        let key = format!("stimuli[{i}]");
        if !(s.t_ms >= 0.0 && s.t_ms <= file.t_end_ms) {
            return Err(Error::scenario(format!("{key}.t_ms"), format!("{} is outside [0, t_end_ms]", s.t_ms)));
        }
        let nodes: Vec<usize> = match (&s.r#box, &s.nodes) {
            (Some(b), None) => (0..mesh.node_count())
                .filter(|&x| b.contains(mesh.node(x), 1e-9) && !is_scar(x))
                .collect(),
            (None, Some(list)) => {
                if let Some(&bad) = list.iter().find(|&&x| x >= mesh.node_count()) {
                    return Err(Error::scenario(format!("{key}.nodes"), format!("node {bad} out of range")));
                }
                list.iter().copied().filter(|&x| !is_scar(x)).collect()
            }
            _ => return Err(Error::scenario(key, "give exactly one of `box` or `nodes`")),
        };
        if nodes.is_empty() {
            let which = if s.r#box.is_some() { "box" } else { "nodes" };
            return Err(Error::scenario(format!("{key}.{which}"), "stimulus region contains no excitable node"));
        }
        stimuli.push(StimulusEvent { nodes, t: s.t_ms });
    }

    let adjacency = build_adjacency(&mesh);
    let mut block_lines = Vec::new();
    for (i, b) in file.block_lines.iter().enumerate() {
        let key = format!("block_lines[{i}]");
        if !(b.t_open_ms >= 0.0 && b.t_open_ms.is_finite()) {
            return Err(Error::scenario(format!("{key}.t_open_ms"), "must be a non-negative time"));
        }
        let edges = match (&b.segment, &b.edges) {
            (Some(seg), None) => edges_touching(&mesh, &adjacency, seg),
            (None, Some(list)) => {
                for (k, &[p, q]) in list.iter().enumerate() {
                    if p >= mesh.node_count() || q >= mesh.node_count() || adjacency.edge_id(p, q).is_none() {
                        return Err(Error::scenario(format!("{key}.edges[{k}]"), format!("({p}, {q}) is not a mesh edge")));
                    }
                }
                list.clone()
            }
            _ => return Err(Error::scenario(key, "give exactly one of `segment` or `edges`")),
        };
        if edges.is_empty() {
            return Err(Error::scenario(format!("{key}.segment"), "segment crosses no mesh edge"));
        }
        block_lines.push(BlockLine { edges, t_open: b.t_open_ms });
    }

    let (output_dir, format) = match file.output {
        Some(o) => (o.dir.map(|d| base.join(d)), o.format),
        None => (None, OutputFormat::default()),
    };
    Ok(Scenario {
        mesh,
        adjacency,
        tables,
        scar_tissues,
        stimuli,
        block_lines,
        dt: file.dt_ms,
        t_end: file.t_end_ms,
        snapshot_every: file.snapshot_every_ms,
        output_dir,
        format,
    })
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Closed segment intersection test; touching counts.
pub fn segments_intersect(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let scale = [p, q, a, b].iter().flat_map(|v| v.iter()).fold(1.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-12 * scale * scale;
    let d1 = orient(a, b, p);
    let d2 = orient(a, b, q);
    let d3 = orient(p, q, a);
    let d4 = orient(p, q, b);
    let straddles = |x: f64, y: f64| (x <= eps && y >= -eps) || (x >= -eps && y <= eps);
    if !(straddles(d1, d2) && straddles(d3, d4)) {
        return false;
    }
    // collinear case: require overlapping extents
    if d1.abs() <= eps && d2.abs() <= eps {
        let overlap = |k: usize| {
            p[k].min(q[k]) <= a[k].max(b[k]) + 1e-12 * scale && a[k].min(b[k]) <= p[k].max(q[k]) + 1e-12 * scale
        };
        return overlap(0) && overlap(1);
    }
    true
}

/// Mesh edges that touch the segment, ascending.
pub fn edges_touching(mesh: &Mesh, adj: &Adjacency, seg: &Segment) -> Vec<[usize; 2]> {
    adj.edges()
        .iter()
        .copied()
        .filter(|&[p, q]| {
            let (a, b) = (mesh.node(p), mesh.node(q));
            segments_intersect([a[0], a[1]], [b[0], b[1]], seg.from, seg.to)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restitution::save_table;

    fn with_table() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let t = RestitutionTable::flat(0, 50.0, 200.0, 60.0, 0.5).unwrap();
        save_table(&t, dir.path().join("flat.json")).unwrap();
        dir
    }

    const MINIMAL: &str = r#"{
        "version": 1,
        "mesh": {"square": {"side": 1.0, "h": 0.1}},
        "tissues": [{"id": 0, "table": "flat.json"}],
        "stimuli": [{"t_ms": 0, "box": {"min": [0, 0], "max": [0.1, 1]}}],
        "t_end_ms": 50
    }"#;

    #[test]
    fn minimal_parses() {
        let dir = with_table();
        let s = parse_scenario_str(MINIMAL, dir.path()).unwrap();
        assert_eq!(s.stimuli.len(), 1);
        assert_eq!(s.stimuli[0].nodes.len(), 22);
        assert_eq!(s.dt, 1.0);
        assert_eq!(s.snapshot_every, 5.0);
    }

    #[test]
    fn box_outside_mesh_is_empty_region() {
        let dir = with_table();
        let text = MINIMAL.replace("\"max\": [0.1, 1]", "\"max\": [6, 6]").replace("\"min\": [0, 0]", "\"min\": [5, 5]");
        match parse_scenario_str(&text, dir.path()) {
            Err(Error::Scenario { key, .. }) => assert_eq!(key, "stimuli[0].box"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_path() {
        let dir = with_table();
        let text = MINIMAL.replace("\"t_ms\": 0", "\"t_ms\": 0, \"time\": 3");
        match parse_scenario_str(&text, dir.path()) {
            Err(Error::Scenario { key, message }) => {
                assert_eq!(key, "stimuli[0].time");
                assert!(message.contains("time"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = with_table();
        let text = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(parse_scenario_str(&text, dir.path()), Err(Error::Scenario { key, .. }) if key == "version"));
    }

    #[test]
    fn undeclared_tissue_rejected() {
        let dir = with_table();
        let text = MINIMAL.replace(
            "\"h\": 0.1}",
            "\"h\": 0.1, \"layout\": {\"scars\": [{\"min\": [0.4, 0.4], \"max\": [0.6, 0.6]}]}}",
        );
        assert!(matches!(parse_scenario_str(&text, dir.path()), Err(Error::Scenario { key, .. }) if key == "tissues"));
    }

    #[test]
    fn missing_table_file_names_key() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(parse_scenario_str(MINIMAL, dir.path()), Err(Error::Scenario { key, .. }) if key == "tissues[0].table"));
    }

    #[test]
    fn segment_selects_crossing_edges() {
        let dir = with_table();
        let text = MINIMAL.replace(
            "\"t_end_ms\": 50",
            "\"t_end_ms\": 50, \"block_lines\": [{\"t_open_ms\": 10, \"segment\": {\"from\": [0.55, 0], \"to\": [0.55, 1]}}]",
        );
        let s = parse_scenario_str(&text, dir.path()).unwrap();
        let edges = &s.block_lines[0].edges;
        // 11 horizontal edges and 10 diagonals cross x = 0.55
        assert_eq!(edges.len(), 21);
        for &[p, q] in edges {
            let (a, b) = (s.mesh.node(p)[0], s.mesh.node(q)[0]);
            assert!(a.min(b) <= 0.55 && a.max(b) >= 0.55);
        }
    }

    #[test]
    fn intersection_cases() {
        assert!(segments_intersect([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
        assert!(segments_intersect([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]));
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]));
    }
}
