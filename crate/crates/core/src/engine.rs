//! Time-stepped fast marching with re-excitability.
//!
//! Each node cycles through excitable (Far/Considered), active (Accepted with
//! `v = 1`) and refractory (Accepted with `v = 0`) phases. The APD is fixed at
//! activation from the DI seen just before, and the speed used to reach a node
//! comes from that node's own DI when its neighbor activates.
//!
//! A neighbor `y` is a usable source for a target `x` only while `y` is active
//! and `y` activated no earlier than the moment `x` last became excitable. This
//! realizes the refractory wall: fronts from an earlier beat cannot re-enter a
//! node through tissue they already crossed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adjacency::Adjacency;
use crate::error::{Error, Result};
use crate::fmm::IMPROVE_TOL;
use crate::geom::Mat3;
use crate::heap::WavefrontHeap;
use crate::local::{node_update, pair_update};
use crate::mesh::{Mesh, TissueId};
use crate::metric::inverse_metric;
use crate::restitution::RestitutionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Far,
    Considered,
    Accepted,
    /// Scar: never excitable.
    Inert,
}

impl NodeState {
    pub fn code(self) -> u8 {
        match self {
            NodeState::Far => 0,
            NodeState::Considered => 1,
            NodeState::Accepted => 2,
            NodeState::Inert => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => NodeState::Far,
            1 => NodeState::Considered,
            2 => NodeState::Accepted,
            3 => NodeState::Inert,
            _ => return None,
        })
    }
}

/// Per-node dynamic state, one struct of arrays for the whole mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDynamicState {
    pub state: Vec<NodeState>,
    /// Last activation time, `+∞` while excitable.
    pub phi: Vec<f64>,
    pub v: Vec<u8>,
    pub apd: Vec<f64>,
    pub di: Vec<f64>,
    /// Time the node last became excitable, `-∞` for virgin tissue.
    pub excitable_since: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub nodes: Vec<usize>,
    /// ms
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLine {
    pub edges: Vec<[usize; 2]>,
    /// ms
    pub t_open: f64,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// ms
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    pub tables: Vec<RestitutionTable>,
    pub scar_tissues: Vec<TissueId>,
    pub stimuli: Vec<StimulusEvent>,
    pub block_lines: Vec<BlockLine>,
}

impl EngineConfig {
    pub fn new(dt: f64, t_end: f64, tables: Vec<RestitutionTable>) -> Self {
        EngineConfig {
            dt,
            t_end,
            snapshot_every: 5.0,
            tables,
            scar_tissues: Vec::new(),
            stimuli: Vec::new(),
            block_lines: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    /// `di` is the DI right before activation, `None` for virgin tissue.
    Activation { node: usize, t: f64, di: Option<f64>, apd: f64 },
    Repolarization { node: usize, t: f64 },
    /// The node is excitable again.
    Recovery { node: usize, t: f64 },
}

impl Event {
    pub fn node(&self) -> usize {
        match *self {
            Event::Activation { node, .. } | Event::Repolarization { node, .. } | Event::Recovery { node, .. } => node,
        }
    }

    pub fn time(&self) -> f64 {
        match *self {
            Event::Activation { t, .. } | Event::Repolarization { t, .. } | Event::Recovery { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub v: Vec<u8>,
    pub phi: Vec<f64>,
    pub di: Vec<f64>,
    pub state: Vec<NodeState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapshotSeries {
    pub snapshots: Vec<Snapshot>,
}

pub struct Engine<'a> {
    mesh: &'a Mesh,
    adj: &'a Adjacency,
    dt: f64,
    t_end: f64,
    snapshot_every: f64,
    tables: Vec<RestitutionTable>,
    /// Table index per node, `usize::MAX` on scar.
    node_table: Vec<usize>,
    tri_scar: Vec<bool>,
    /// Number of closed block lines covering each triangle.
    tri_blocked: Vec<u32>,
    stimuli: Vec<StimulusEvent>,
    next_stimulus: usize,
    blocks: Vec<BlockLine>,
    block_triangles: Vec<Vec<usize>>,
    block_open: Vec<bool>,
    s: NodeDynamicState,
    heap: WavefrontHeap,
    t0: f64,
    steps: u64,
    events: Vec<Event>,
}

/// Source value of `y` as seen from target `x`.
#[inline]
fn source_value(s: &NodeDynamicState, x: usize, y: usize) -> f64 {
    if s.state[y] == NodeState::Accepted && s.v[y] == 1 && s.phi[y] >= s.excitable_since[x] {
        s.phi[y]
    } else {
        f64::INFINITY
    }
}

struct Conduction<'e> {
    mesh: &'e Mesh,
    tables: &'e [RestitutionTable],
    node_table: &'e [usize],
    tri_scar: &'e [bool],
    tri_blocked: &'e [u32],
}

impl Conduction<'_> {
    #[inline]
    fn conductive(&self, t: usize) -> bool {
        !self.tri_scar[t] && self.tri_blocked[t] == 0
    }

    /// `(cv_l, cv_t)` in cm/ms for updates of `x`.
    #[inline]
    fn velocities(&self, s: &NodeDynamicState, x: usize) -> (f64, f64) {
        let table = &self.tables[self.node_table[x]];
        let cl = table.cv_of(s.di[x]) / 1000.0;
        (cl, table.ratio * cl)
    }

    #[inline]
    fn inverse(&self, t: usize, vel: (f64, f64)) -> Option<Mat3> {
        self.conductive(t).then(|| inverse_metric(vel.0, vel.1, self.mesh.fiber(t)))
    }

    fn excitable(&self, s: &NodeDynamicState, x: usize) -> bool {
        matches!(s.state[x], NodeState::Far | NodeState::Considered)
    }

    /// Candidate for `x` once `a` became a source, floored at `floor`.
    fn pair_candidate(&self, adj: &Adjacency, s: &NodeDynamicState, x: usize, a: usize, floor: f64) -> f64 {
        let vel = self.velocities(s, x);
        pair_update(x, a, self.mesh, adj, |y| source_value(s, x, y), |t| self.inverse(t, vel)).max(floor)
    }

    fn ring_candidate(&self, adj: &Adjacency, s: &NodeDynamicState, x: usize, floor: f64) -> f64 {
        let vel = self.velocities(s, x);
        node_update(x, self.mesh, adj, |y| source_value(s, x, y), |t| self.inverse(t, vel)).max(floor)
    }
}

impl<'a> Engine<'a> {
    pub fn new(mesh: &'a Mesh, adj: &'a Adjacency, config: EngineConfig) -> Result<Self> {
        let n = mesh.node_count();
        if adj.node_count() != n {
            return Err(Error::LengthMismatch {
                left: adj.node_count(),
                right: n,
            });
        }
        if !(config.dt > 0.0 && config.dt <= config.t_end && config.t_end.is_finite()) {
            return Err(Error::Domain(format!(
                "need 0 < dt <= T, got dt = {} and T = {}",
                config.dt, config.t_end
            )));
        }
        if !(config.snapshot_every > 0.0) {
            return Err(Error::Domain("snapshot cadence must be positive".into()));
        }
        let mut by_tissue = BTreeMap::new();
        for (i, t) in config.tables.iter().enumerate() {
            t.validate()?;
            if by_tissue.insert(t.tissue, i).is_some() {
                return Err(Error::Table(format!("two tables for tissue {}", t.tissue)));
            }
        }
        let mut node_table = vec![usize::MAX; n];
        let mut scar = vec![false; n];
        for x in 0..n {
            let tt = mesh.tissue_of(x);
            if config.scar_tissues.contains(&tt) {
                scar[x] = true;
            } else {
                node_table[x] = *by_tissue.get(&tt).ok_or(Error::MissingTable(tt))?;
            }
        }
        let tri_scar: Vec<bool> = mesh.triangles().iter().map(|tri| tri.iter().any(|&v| scar[v])).collect();

        let mut stimuli = Vec::with_capacity(config.stimuli.len());
        for (i, st) in config.stimuli.iter().enumerate() {
            if !(st.t >= 0.0 && st.t.is_finite()) {
                return Err(Error::Domain(format!("stimulus {i} has invalid time {}", st.t)));
            }
            if let Some(&bad) = st.nodes.iter().find(|&&x| x >= n) {
                return Err(Error::Domain(format!("stimulus {i} references node {bad} out of range")));
            }
            let mut nodes: Vec<usize> = st.nodes.iter().copied().filter(|&x| !scar[x]).collect();
            nodes.sort_unstable();
            nodes.dedup();
            if nodes.is_empty() {
                return Err(Error::Domain(format!("stimulus {i} has no non-scar nodes")));
            }
            stimuli.push(StimulusEvent { nodes, t: st.t });
        }
        // stable: equal times keep their configured order
        stimuli.sort_by(|a, b| a.t.total_cmp(&b.t));

        let mut tri_blocked = vec![0u32; mesh.triangle_count()];
        let mut block_triangles = Vec::with_capacity(config.block_lines.len());
        for (i, b) in config.block_lines.iter().enumerate() {
            let mut tris = Vec::new();
            for &[p, q] in &b.edges {
                if p >= n || q >= n || adj.edge_id(p, q).is_none() {
                    return Err(Error::Domain(format!("block line {i}: ({p}, {q}) is not a mesh edge")));
                }
                tris.extend_from_slice(adj.shared_triangles(p, q));
            }
            tris.sort_unstable();
            tris.dedup();
            for &t in &tris {
                tri_blocked[t] += 1;
            }
            block_triangles.push(tris);
        }

        let s = NodeDynamicState {
            state: scar.iter().map(|&sc| if sc { NodeState::Inert } else { NodeState::Far }).collect(),
            phi: vec![f64::INFINITY; n],
            v: vec![0; n],
            apd: vec![0.0; n],
            di: vec![f64::INFINITY; n],
            excitable_since: vec![f64::NEG_INFINITY; n],
        };
        let t0 = stimuli.first().map_or(0.0, |s| s.t);
        Ok(Engine {
            mesh,
            adj,
            dt: config.dt,
            t_end: config.t_end,
            snapshot_every: config.snapshot_every,
            tables: config.tables,
            node_table,
            tri_scar,
            tri_blocked,
            stimuli,
            next_stimulus: 0,
            block_open: vec![false; config.block_lines.len()],
            blocks: config.block_lines,
            block_triangles,
            s,
            heap: WavefrontHeap::new(n),
            t0,
            steps: 0,
            events: Vec::new(),
        })
    }

    pub fn clock(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn state(&self) -> &NodeDynamicState {
        &self.s
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Hands over the events recorded so far.
    pub fn drain_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    pub fn table_of(&self, x: usize) -> Option<&RestitutionTable> {
        self.tables.get(self.node_table[x])
    }

    fn conduction(&self) -> Conduction<'_> {
        Conduction {
            mesh: self.mesh,
            tables: &self.tables,
            node_table: &self.node_table,
            tri_scar: &self.tri_scar,
            tri_blocked: &self.tri_blocked,
        }
    }

    /// Inverse metric per triangle for updates of `target`; `None` for
    /// triangles that do not conduct towards it.
    pub fn directional_metric(&self, target: usize, triangles: &[usize]) -> Vec<Option<Mat3>> {
        let c = self.conduction();
        let active = self.s.state[target] == NodeState::Accepted && self.s.v[target] == 1;
        if self.s.state[target] == NodeState::Inert || active {
            return vec![None; triangles.len()];
        }
        let vel = c.velocities(&self.s, target);
        triangles.iter().map(|&t| c.inverse(t, vel)).collect()
    }

    fn activate(&mut self, a: usize, t: f64) {
        self.heap.remove(a);
        let table = &self.tables[self.node_table[a]];
        let di = self.s.di[a];
        let apd = table.apd_of(di);
        self.s.state[a] = NodeState::Accepted;
        self.s.phi[a] = t;
        self.s.v[a] = 1;
        self.s.apd[a] = apd;
        self.s.di[a] = 0.0;
        self.events.push(Event::Activation {
            node: a,
            t,
            di: di.is_finite().then_some(di),
            apd,
        });

        let c = Conduction {
            mesh: self.mesh,
            tables: &self.tables,
            node_table: &self.node_table,
            tri_scar: &self.tri_scar,
            tri_blocked: &self.tri_blocked,
        };
        for &x in self.adj.neighbors(a) {
            if !c.excitable(&self.s, x) {
                continue;
            }
            let cand = c.pair_candidate(self.adj, &self.s, x, a, t);
            let old = self.heap.key(x).unwrap_or(f64::INFINITY);
            if cand < old - IMPROVE_TOL {
                self.heap.set(x, cand);
                self.s.state[x] = NodeState::Considered;
            }
        }
    }

    /// Delivers stimuli due in `[t, t + dt)` at their nominal times and
    /// returns how many nodes they activated.
    pub fn apply_stimuli(&mut self) -> usize {
        let t = self.clock();
        let end = t + self.dt;
        let mut count = 0;
        while self.next_stimulus < self.stimuli.len() && self.stimuli[self.next_stimulus].t < end {
            let st = self.next_stimulus;
            self.next_stimulus += 1;
            let ti = self.stimuli[st].t;
            for k in 0..self.stimuli[st].nodes.len() {
                let x = self.stimuli[st].nodes[k];
                if matches!(self.s.state[x], NodeState::Far | NodeState::Considered) {
                    self.activate(x, ti);
                    count += 1;
                }
            }
        }
        count
    }

    /// Makes a block line conductive and reseeds excitable nodes next to it
    /// from active neighbors.
    pub fn open_block_line(&mut self, index: usize) {
        if self.block_open[index] {
            return;
        }
        self.block_open[index] = true;
        let t = self.clock();
        let mut touched = Vec::new();
        for &tri in &self.block_triangles[index] {
            self.tri_blocked[tri] -= 1;
            if self.tri_blocked[tri] == 0 {
                touched.extend_from_slice(&self.mesh.triangle(tri));
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let c = Conduction {
            mesh: self.mesh,
            tables: &self.tables,
            node_table: &self.node_table,
            tri_scar: &self.tri_scar,
            tri_blocked: &self.tri_blocked,
        };
        for x in touched {
            if !c.excitable(&self.s, x) {
                continue;
            }
            let cand = c.ring_candidate(self.adj, &self.s, x, t);
            let old = self.heap.key(x).unwrap_or(f64::INFINITY);
            if cand < old - IMPROVE_TOL {
                self.heap.set(x, cand);
                self.s.state[x] = NodeState::Considered;
            }
        }
    }

    /// Advances the clock by one time step.
    pub fn step(&mut self) {
        let t = self.clock();
        for b in 0..self.blocks.len() {
            if !self.block_open[b] && self.blocks[b].t_open <= t {
                self.open_block_line(b);
            }
        }
        self.apply_stimuli();

        let end = t + self.dt;
        while let Some((key, a)) = self.heap.peek() {
            if key >= end {
                break;
            }
            self.activate(a, key);
        }

        self.steps += 1;
        let now = self.clock();
        for x in 0..self.s.state.len() {
            match self.s.state[x] {
                NodeState::Accepted => {
                    let repol = self.s.phi[x] + self.s.apd[x];
                    if now >= repol {
                        if self.s.v[x] == 1 {
                            self.s.v[x] = 0;
                            self.events.push(Event::Repolarization { node: x, t: repol });
                        }
                        self.s.di[x] = now - repol;
                        let di_min = self.tables[self.node_table[x]].di_min;
                        if self.s.di[x] >= di_min {
                            self.s.state[x] = NodeState::Far;
                            self.s.phi[x] = f64::INFINITY;
                            self.s.excitable_since[x] = now;
                            self.heap.remove(x);
                            self.events.push(Event::Recovery { node: x, t: now });
                        }
                    }
                }
                NodeState::Far | NodeState::Considered => self.s.di[x] += self.dt,
                NodeState::Inert => {}
            }
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.clock(),
            v: self.s.v.clone(),
            phi: self.s.phi.clone(),
            di: self.s.di.clone(),
            state: self.s.state.clone(),
        }
    }

    fn on_cadence(&self, t: f64) -> bool {
        let k = (t / self.snapshot_every).round();
        (t - k * self.snapshot_every).abs() <= 1e-9 * self.snapshot_every.max(1.0)
    }

    /// Runs to `T`, handing every snapshot to `sink` as it is produced.
    ///
    /// Snapshots are taken after each step that ends on a multiple of the
    /// cadence, and after the final step.
    pub fn run_with<E>(&mut self, mut sink: impl FnMut(&mut Self, Snapshot) -> std::result::Result<(), E>) -> std::result::Result<(), E> {
        while self.clock() < self.t_end - 1e-9 * self.dt {
            self.step();
            let now = self.clock();
            let last = now >= self.t_end - 1e-9 * self.dt;
            if last || self.on_cadence(now) {
                let snap = self.snapshot();
                sink(self, snap)?;
            }
        }
        Ok(())
    }

    pub fn run(&mut self) -> SnapshotSeries {
        let mut series = SnapshotSeries::default();
        let _ = self.run_with(|_, s| {
            series.snapshots.push(s);
            Ok::<(), ()>(())
        });
        series
    }
}

/// Alias matching the operation name used by the CLI.
pub fn init_engine<'a>(mesh: &'a Mesh, adj: &'a Adjacency, config: EngineConfig) -> Result<Engine<'a>> {
    Engine::new(mesh, adj, config)
}
