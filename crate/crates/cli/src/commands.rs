use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde::Deserialize;
use serde_json::{json, Value};

use reentry_core::export::write_events_jsonl;
use reentry_core::ionic::{build_table, generate_apd_restitution, generate_cv_restitution};
use reentry_core::{
    acuteness_audit, compare_fields, dijkstra_solve, fmm_solve, generate_annulus,
    generate_structured_square, load_mesh, load_table, parse_scenario, save_table, CableConfig, Engine, Mesh,
    MetricField, MsParameters, OutputFormat, Protocol, RestitutionTable, SnapshotWriter,
};

use crate::{Cli, Command};

pub fn dispatch(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Audit { mesh, tables, worst } => audit(mesh, tables, *worst),
        Command::Solve { mesh, cv_l, ratio, fiber_source, sources, dijkstra } => {
            solve(cli, mesh, *cv_l, *ratio, fiber_source, sources, *dijkstra)
        }
        Command::Run { scenarios, jobs } => run(cli, scenarios, *jobs),
        Command::Restitution { params } => restitution(cli, params),
        Command::Compare { a, b, field, finite_only } => compare(a, b, field, *finite_only),
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// A mesh file path or a builtin `square:SIDE:H` / `annulus:R_IN:R_OUT:H`.
fn resolve_mesh(arg: &str) -> Result<Mesh> {
    let nums = |rest: &str, n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = rest.split(':').map(str::parse).collect::<Result<_, _>>().with_context(|| format!("bad mesh argument `{arg}`"))?;
        if v.len() != n {
            bail!("mesh argument `{arg}` needs {n} numbers");
        }
        Ok(v)
    };
    if let Some(rest) = arg.strip_prefix("square:") {
        let v = nums(rest, 2)?;
        return Ok(generate_structured_square(v[0], v[1], None, None)?);
    }
    if let Some(rest) = arg.strip_prefix("annulus:") {
        let v = nums(rest, 3)?;
        return Ok(generate_annulus(v[0], v[1], v[2])?);
    }
    load_mesh(arg).with_context(|| format!("loading mesh {arg}"))
}

fn load_tables_dir(dir: &Path) -> Result<BTreeMap<u32, RestitutionTable>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    for p in entries {
        let t = load_table(&p).with_context(|| format!("loading table {}", p.display()))?;
        if out.insert(t.tissue, t).is_some() {
            bail!("two tables in {} claim the same tissue", dir.display());
        }
    }
    Ok(out)
}

fn audit(mesh: &str, tables: &Path, worst: usize) -> Result<Value> {
    let mesh = resolve_mesh(mesh)?;
    let tables = load_tables_dir(tables)?;
    // A triangle takes the metric of its lowest-id vertex tissue that has a
    // table; triangles touching no tabled tissue are skipped.
    let metric = MetricField::from_fn(&mesh, |t| {
        let tri = mesh.triangle(t);
        let mut ids: Vec<u32> = tri.iter().map(|&x| mesh.tissue_of(x)).collect();
        ids.sort_unstable();
        ids.iter().find_map(|id| tables.get(id)).map(|tb| {
            let cl = tb.cv_plateau() / 1000.0;
            (cl, tb.ratio * cl)
        })
    })?;
    let report = acuteness_audit(&mesh, &metric);
    let worst: Vec<Value> = report.worst(worst).into_iter().map(|(t, m)| json!({ "triangle": t, "min_inner": m })).collect();
    info!("{} of {} triangles fail acuteness ({:.2}%)", report.failures, mesh.triangle_count(), 100.0 * report.failure_fraction);
    Ok(json!({
        "ok": true,
        "triangles": mesh.triangle_count(),
        "failures": report.failures,
        "failure_fraction": report.failure_fraction,
        "worst": worst,
    }))
}

fn parse_sources(s: &str) -> Result<Vec<(usize, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let mut it = p.trim().splitn(2, ':');
            let node = it.next().unwrap_or("").parse::<usize>().with_context(|| format!("bad source `{p}`"))?;
            let t = match it.next() {
                Some(t) => t.parse::<f64>().with_context(|| format!("bad source time `{p}`"))?,
                None => 0.0,
            };
            Ok((node, t))
        })
        .collect()
}

fn parse_fiber(s: &str) -> Result<Option<[f64; 3]>> {
    if s == "mesh" {
        return Ok(None);
    }
    let v: Vec<f64> = s.split(',').map(|c| c.trim().parse()).collect::<Result<_, _>>().with_context(|| format!("bad fiber `{s}`"))?;
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(2..=3).contains(&v.len()) || n == 0.0 {
        bail!("fiber must have 2 or 3 components and be non-zero");
    }
    Ok(Some([v[0] / n, v[1] / n, v.get(2).copied().unwrap_or(0.0) / n]))
}

fn solve(cli: &Cli, mesh: &str, cv_l: f64, ratio: f64, fiber: &str, sources: &str, dijkstra: bool) -> Result<Value> {
    let mut mesh = resolve_mesh(mesh)?;
    if let Some(f) = parse_fiber(fiber)? {
        let n = mesh.triangle_count();
        mesh.set_fibers(vec![f; n])?;
    }
    let cl = cv_l / 1000.0;
    let metric = MetricField::uniform(&mesh, cl, ratio * cl)?;
    let sources = parse_sources(sources)?;
    let start = Instant::now();
    let field = if dijkstra { dijkstra_solve(&mesh, &metric, &sources)? } else { fmm_solve(&mesh, &metric, &sources)? };
    let seconds = start.elapsed().as_secs_f64();

    let dir = out_dir(cli);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("activation.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["node", "phi"])?;
    for (i, p) in field.phi.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    info!("max activation {:.3} ms in {:.3} s", field.max_finite(), seconds);
    Ok(json!({
        "ok": true,
        "method": if dijkstra { "dijkstra" } else { "fmm" },
        "nodes": mesh.node_count(),
        "max_phi_ms": field.max_finite(),
        "iterations": field.iterations,
        "seconds": seconds,
        "output": path,
    }))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn run(cli: &Cli, scenarios: &[PathBuf], jobs: usize) -> Result<Value> {
    let multi = scenarios.len() > 1;
    let task = |path: &PathBuf| -> Result<Value> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
        let sc = parse_scenario(path).with_context(|| format!("parsing {}", path.display()))?;
        let dir = match (&cli.output_dir, &sc.output_dir) {
            (Some(d), _) if multi => d.join(&stem),
            (Some(d), _) => d.clone(),
            (None, Some(d)) => d.clone(),
            (None, None) => PathBuf::from("out").join(&stem),
        };
        run_one(&sc, &dir).with_context(|| format!("running {}", path.display()))
    };
    let results: Vec<Result<Value>> = if jobs > 1 && multi {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(|| {
            use rayon::prelude::*;
            scenarios.par_iter().map(task).collect()
        })
    } else {
        scenarios.iter().map(task).collect()
    };
    let mut out = Vec::new();
    for r in results {
        out.push(r?);
    }
    Ok(json!({ "ok": true, "runs": out }))
}

fn run_one(sc: &reentry_core::Scenario, dir: &Path) -> Result<Value> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut writer = SnapshotWriter::new(dir, sc.format)?;
    let log_path = dir.join("events.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut engine = Engine::new(&sc.mesh, &sc.adjacency, sc.engine_config())?;
    let start = Instant::now();
    let (mut snapshots, mut activations, mut events) = (0usize, 0usize, 0usize);
    engine.run_with(|eng, snap| -> Result<()> {
        snapshots += 1;
        writer.write(&sc.mesh, &snap)?;
        let ev = eng.drain_events();
        events += ev.len();
        activations += ev.iter().filter(|e| matches!(e, reentry_core::Event::Activation { .. })).count();
        write_events_jsonl(&ev, &mut log)?;
        Ok(())
    })?;
    use std::io::Write;
    log.flush()?;
    info!("{}: {snapshots} snapshots, {activations} activations", dir.display());
    Ok(json!({
        "output": dir,
        "format": match sc.format { OutputFormat::Vtk => "vtk", OutputFormat::Csv => "csv", OutputFormat::None => "none" },
        "nodes": sc.mesh.node_count(),
        "snapshots": snapshots,
        "events": events,
        "activations": activations,
        "t_end_ms": engine.clock(),
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RestitutionParams {
    /// Base name of the written table files.
    name: String,
    tissue: u32,
    ratio: f64,
    /// `healthy` or `border_zone`; fields in `ionic` override it.
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    ionic: Option<MsParameters>,
    #[serde(default)]
    protocol: Protocol,
    #[serde(default)]
    cable: CableConfig,
    /// Single-cell time step, ms.
    #[serde(default = "default_cell_dt")]
    cell_dt: f64,
}

fn default_cell_dt() -> f64 {
    0.02
}

fn restitution(cli: &Cli, params: &Path) -> Result<Value> {
    let text = fs::read_to_string(params).with_context(|| format!("reading {}", params.display()))?;
    let p: RestitutionParams = serde_json::from_str(&text).with_context(|| format!("parsing {}", params.display()))?;
    let ionic = match (&p.ionic, p.preset.as_deref()) {
        (Some(i), _) => *i,
        (None, Some("healthy")) => MsParameters::healthy(),
        (None, Some("border_zone")) => MsParameters::border_zone(),
        (None, Some(other)) => bail!("unknown preset `{other}`"),
        (None, None) => return Err(anyhow!("give `preset` or `ionic`")),
    };
    let start = Instant::now();
    let apd = generate_apd_restitution(&ionic, &p.protocol, p.cell_dt)?;
    let cv = generate_cv_restitution(&ionic, &p.cable, &p.protocol)?;
    let table = build_table(p.tissue, &apd, &cv, p.ratio)?;
    let dir = out_dir(cli);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.json", p.name));
    save_table(&table, &path)?;
    info!("DI_min {:.1} ms, CV {:.2} cm/s, written to {}", apd.di_min, cv.cv_conditioning, path.display());
    Ok(json!({
        "ok": true,
        "sidecar": path,
        "di_min_ms": apd.di_min,
        "apd_conditioning_ms": apd.apd_conditioning,
        "cv_conditioning_cm_per_s": cv.cv_conditioning,
        "blocked_cycle_lengths": cv.blocked,
        "apd_points": table.apd_points.len(),
        "cv_points": table.cv_points.len(),
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

fn read_column(path: &Path, field: &str) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let col = rd
        .headers()?
        .iter()
        .position(|h| h == field)
        .ok_or_else(|| anyhow!("{} has no `{field}` column", path.display()))?;
    rd.records()
        .map(|r| {
            let r = r?;
            let s = r.get(col).unwrap_or("");
            s.parse::<f64>().with_context(|| format!("bad value `{s}` in {}", path.display()))
        })
        .collect()
}

fn compare(a: &Path, b: &Path, field: &str, finite_only: bool) -> Result<Value> {
    let va = read_column(a, field)?;
    let vb = read_column(b, field)?;
    let mask: Option<Vec<bool>> = finite_only.then(|| va.iter().zip(&vb).map(|(x, y)| x.is_finite() && y.is_finite()).collect());
    let report = compare_fields(&va, &vb, mask.as_deref())?;
    Ok(json!({
        "ok": true,
        "field": field,
        "linf": report.linf,
        "l2": report.l2,
        "compared": report.compared,
        "excluded": report.excluded,
    }))
}
