//! Mitchell-Schaeffer cell and 1D cable, and the pacing protocol that turns
//! them into restitution tables.
//!
//! The membrane variable `u` is dimensionless; it maps to millivolts as
//! `V = -80 + 100 u`, so the -62 mV activation threshold sits at `u = 0.18`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TissueId;
use crate::restitution::RestitutionTable;
use crate::tridiag::TridiagonalLu;

pub const REST_MV: f64 = -80.0;
pub const SPAN_MV: f64 = 100.0;
pub const THRESHOLD_MV: f64 = -62.0;
/// Peak a response must reach to count as an action potential.
pub const ELICIT_MV: f64 = 0.0;

pub fn to_mv(u: f64) -> f64 {
    REST_MV + SPAN_MV * u
}

pub fn from_mv(v: f64) -> f64 {
    (v - REST_MV) / SPAN_MV
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsParameters {
    /// ms
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub v_gate: f64,
    /// Stimulus current in 1/ms of `u`.
    pub stim_amplitude: f64,
    /// ms
    pub stim_duration: f64,
}

impl MsParameters {
    /// Ventricular healthy tissue: about 50 cm/s at 0.46 mS/cm, minimum DI
    /// near 56 ms.
    pub fn healthy() -> Self {
        MsParameters {
            tau_in: 0.078,
            tau_out: 1.6,
            tau_open: 265.0,
            tau_close: 92.0,
            v_gate: 0.13,
            stim_amplitude: 0.5,
            stim_duration: 1.0,
        }
    }

    /// Border zone: longer APD, slower upstroke, faster recovery.
    pub fn border_zone() -> Self {
        MsParameters {
            tau_in: 0.09,
            tau_out: 1.8,
            tau_open: 100.0,
            tau_close: 200.0,
            v_gate: 0.13,
            stim_amplitude: 0.5,
            stim_duration: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let taus = [
            ("tau_in", self.tau_in),
            ("tau_out", self.tau_out),
            ("tau_open", self.tau_open),
            ("tau_close", self.tau_close),
            ("stim_duration", self.stim_duration),
        ];
        for (name, v) in taus {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.v_gate > 0.0 && self.v_gate < 1.0) {
            return Err(Error::Domain(format!("v_gate must be in (0, 1), got {}", self.v_gate)));
        }
        if !(self.stim_amplitude >= 0.0 && self.stim_amplitude.is_finite()) {
            return Err(Error::Domain(format!(
                "stim_amplitude must be non-negative, got {}",
                self.stim_amplitude
            )));
        }
        Ok(())
    }

    /// One explicit Euler step of the cell equations.
    #[inline]
    fn advance(&self, u: f64, h: f64, stim: f64, dt: f64) -> (f64, f64) {
        let j_in = h * u * u * (1.0 - u) / self.tau_in;
        let j_out = -u / self.tau_out;
        let dh = if u < self.v_gate {
            (1.0 - h) / self.tau_open
        } else {
            -h / self.tau_close
        };
        (u + dt * (j_in + j_out + stim), h + dt * dh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    /// ms
    pub bcl: f64,
    pub cl0: f64,
    pub decrement: f64,
    pub n_conditioning: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            bcl: 1500.0,
            cl0: 200.0,
            decrement: 10.0,
            n_conditioning: 5,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.bcl > self.cl0 && self.cl0 > 0.0) {
            return Err(Error::Domain(format!(
                "protocol needs BCL > CL0 > 0, got BCL {} and CL0 {}",
                self.bcl, self.cl0
            )));
        }
        if !(self.decrement > 0.0) || self.n_conditioning == 0 {
            return Err(Error::Domain("protocol needs a positive decrement and at least one conditioning stimulus".into()));
        }
        Ok(())
    }

    /// Test cycle lengths, longest first.
    pub fn cycle_lengths(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let cl = self.bcl - k as f64 * self.decrement;
            if cl < self.cl0 - 1e-9 {
                break;
            }
            out.push(cl);
            k += 1;
        }
        out
    }

    fn last_conditioning(&self) -> f64 {
        (self.n_conditioning - 1) as f64 * self.bcl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CableConfig {
    /// cm
    pub length: f64,
    pub dx: f64,
    /// ms
    pub dt: f64,
    /// mS/cm
    pub sigma: f64,
    /// µF/cm²
    pub cm: f64,
    /// 1/cm
    pub beta: f64,
    /// cm from the left end
    pub stim_extent: f64,
}

impl Default for CableConfig {
    fn default() -> Self {
        CableConfig {
            length: 4.0,
            dx: 0.005,
            dt: 0.02,
            sigma: 0.46,
            cm: 1.0,
            beta: 800.0,
            stim_extent: 0.1,
        }
    }
}

impl CableConfig {
    pub fn with_sigma(self, sigma: f64) -> Self {
        CableConfig { sigma, ..self }
    }

    /// cm²/ms
    pub fn diffusivity(&self) -> f64 {
        self.sigma / (self.beta * self.cm)
    }

    pub fn cells(&self) -> usize {
        (self.length / self.dx).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.length, self.dx, self.dt, self.sigma, self.cm, self.beta, self.stim_extent];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("cable constants must be positive and finite".into()));
        }
        let ratio = self.length / self.dx;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 10.0 {
            return Err(Error::Domain(format!(
                "cable length / dx must be an integer >= 10, got {ratio}"
            )));
        }
        if self.stim_extent >= self.length / 4.0 {
            return Err(Error::Domain("stimulus must stay within the first quarter of the cable".into()));
        }
        Ok(())
    }
}

/// A sampled membrane trace of a single cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    /// Dimensionless `u` at `t = k dt`.
    pub u: Vec<f64>,
}

impl Trace {
    pub fn mv(&self) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().map(|&u| to_mv(u))
    }

    /// `(up, down)` crossings of the activation threshold, linearly
    /// interpolated. An interval still open at the end is dropped.
    pub fn apd_intervals(&self) -> Vec<(f64, f64)> {
        let thr = from_mv(THRESHOLD_MV);
        let mut out = Vec::new();
        let mut up = None;
        for k in 1..self.u.len() {
            let (a, b) = (self.u[k - 1], self.u[k]);
            if a < thr && b >= thr {
                up = Some(self.dt * (k as f64 - 1.0 + (thr - a) / (b - a)));
            } else if a >= thr && b < thr {
                if let Some(t_up) = up.take() {
                    out.push((t_up, self.dt * (k as f64 - 1.0 + (a - thr) / (a - b))));
                }
            }
        }
        out
    }
}

fn stim_on(t: f64, times: &[f64], duration: f64) -> bool {
    times.iter().any(|&s| t >= s - 1e-9 && t < s + duration - 1e-9)
}

fn check_state(u: f64, t: f64) -> Result<()> {
    if !u.is_finite() || !(-1.0..=2.0).contains(&u) {
        return Err(Error::Generation(format!(
            "membrane state diverged (u = {u}) at t = {t} ms; reduce the time step or check the parameters"
        )));
    }
    Ok(())
}

/// Integrates a single cell from rest with the given stimulus onsets.
pub fn ms_cell_run(params: &MsParameters, stim_times: &[f64], dt: f64, horizon: f64) -> Result<Trace> {
    params.validate()?;
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::Domain("dt and horizon must be positive".into()));
    }
    let steps = (horizon / dt).round() as usize;
    let (mut u, mut h) = (0.0, 1.0);
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(u);
    for k in 0..steps {
        let t = k as f64 * dt;
        let stim = if stim_on(t, stim_times, params.stim_duration) {
            params.stim_amplitude
        } else {
            0.0
        };
        (u, h) = params.advance(u, h, stim, dt);
        check_state(u, t)?;
        trace.push(u);
    }
    Ok(Trace { dt, u: trace })
}

/// Outcome of one test cycle length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleResult {
    pub cl: f64,
    pub di: f64,
    pub elicited: bool,
    pub apd: f64,
}

/// APD restitution from the single-cell protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ApdRestitution {
    /// Ascending DI.
    pub points: Vec<(f64, f64)>,
    pub di_min: f64,
    /// APD of the last conditioning beat.
    pub apd_conditioning: f64,
    pub cycles: Vec<CycleResult>,
}

pub fn generate_apd_restitution(params: &MsParameters, protocol: &Protocol, dt: f64) -> Result<ApdRestitution> {
    params.validate()?;
    protocol.validate()?;
    let cls = protocol.cycle_lengths();
    let t_last = protocol.last_conditioning();
    let conditioning: Vec<f64> = (0..protocol.n_conditioning).map(|k| k as f64 * protocol.bcl).collect();

    let to_step = |t: f64| (t / dt).round() as usize;
    let (mut u, mut h) = (0.0, 1.0);
    let end = to_step(t_last + protocol.bcl);
    let mut snaps: Vec<(f64, f64)> = Vec::with_capacity(cls.len());
    let snap_steps: Vec<usize> = cls.iter().rev().map(|&cl| to_step(t_last + cl)).collect();
    let mut next_snap = 0;
    let mut tail = Vec::with_capacity(end - to_step(t_last) + 1);
    for k in 0..end {
        while next_snap < snap_steps.len() && snap_steps[next_snap] == k {
            snaps.push((u, h));
            next_snap += 1;
        }
        if k >= to_step(t_last) {
            tail.push(u);
        }
        let t = k as f64 * dt;
        let stim = if stim_on(t, &conditioning, params.stim_duration) {
            params.stim_amplitude
        } else {
            0.0
        };
        (u, h) = params.advance(u, h, stim, dt);
        check_state(u, t)?;
    }
    while next_snap < snap_steps.len() {
        snaps.push((u, h));
        next_snap += 1;
    }
    snaps.reverse();

    let apd_conditioning = Trace { dt, u: tail }
        .apd_intervals()
        .first()
        .map(|&(a, b)| b - a)
        .ok_or_else(|| Error::Generation("the last conditioning stimulus did not elicit an action potential".into()))?;

    let window = protocol.bcl.max(1000.0);
    let cycles: Vec<CycleResult> = cls
        .par_iter()
        .zip(snaps.par_iter())
        .map(|(&cl, &(u0, h0))| {
            let steps = to_step(window);
            let (mut u, mut h) = (u0, h0);
            let mut trace = Vec::with_capacity(steps + 1);
            trace.push(u);
            for k in 0..steps {
                let t = k as f64 * dt;
                let stim = if t < params.stim_duration - 1e-9 { params.stim_amplitude } else { 0.0 };
                (u, h) = params.advance(u, h, stim, dt);
                check_state(u, t)?;
                trace.push(u);
            }
            let peak = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tr = Trace { dt, u: trace };
            let first = tr.apd_intervals().first().copied();
            let elicited = to_mv(peak) >= ELICIT_MV && first.is_some();
            Ok(CycleResult {
                cl,
                di: cl - apd_conditioning,
                elicited,
                apd: first.map_or(0.0, |(a, b)| b - a),
            })
        })
        .collect::<Result<_>>()?;

    let mut points: Vec<(f64, f64)> = cycles.iter().filter(|c| c.elicited).map(|c| (c.di, c.apd)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let di_min = points
        .first()
        .map(|p| p.0)
        .ok_or_else(|| Error::Generation("no cycle length elicited an action potential".into()))?;
    Ok(ApdRestitution {
        points,
        di_min,
        apd_conditioning,
        cycles,
    })
}

/// Explicit ionics followed by an implicit diffusion solve, no-flux ends.
#[derive(Debug, Clone)]
pub struct Cable {
    config: CableConfig,
    params: MsParameters,
    lu: TridiagonalLu,
    n_stim: usize,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
}

impl Cable {
    pub fn new(params: &MsParameters, config: &CableConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let n = config.cells() + 1;
        let r = config.diffusivity() * config.dt / (config.dx * config.dx);
        let lower: Vec<f64> = (0..n).map(|i| if i == n - 1 { -2.0 * r } else { -r }).collect();
        let upper: Vec<f64> = (0..n).map(|i| if i == 0 { -2.0 * r } else { -r }).collect();
        let diag = vec![1.0 + 2.0 * r; n];
        let n_stim = (0..n).filter(|&i| i as f64 * config.dx <= config.stim_extent + 1e-9).count();
        Ok(Cable {
            config: *config,
            params: *params,
            lu: TridiagonalLu::new(&lower, &diag, &upper),
            n_stim,
            u: vec![0.0; n],
            h: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn index_at(&self, x: f64) -> usize {
        (x / self.config.dx).round() as usize
    }

    pub fn step(&mut self, stimulate: bool) {
        let dt = self.config.dt;
        let amp = if stimulate { self.params.stim_amplitude } else { 0.0 };
        for i in 0..self.u.len() {
            let stim = if i < self.n_stim { amp } else { 0.0 };
            let (u, h) = self.params.advance(self.u[i], self.h[i], stim, dt);
            self.u[i] = u;
            self.h[i] = h;
        }
        self.lu.solve(&mut self.u);
    }

    fn check(&self, t: f64) -> Result<()> {
        for &u in &self.u {
            check_state(u, t)?;
        }
        Ok(())
    }
}

/// Threshold crossings at a fixed cable node.
#[derive(Debug, Clone, Default)]
struct Probe {
    index: usize,
    prev: f64,
    ups: Vec<f64>,
    downs: Vec<f64>,
}

impl Probe {
    fn new(index: usize, u0: f64) -> Self {
        Probe {
            index,
            prev: u0,
            ..Default::default()
        }
    }

    fn observe(&mut self, u: f64, t_prev: f64, dt: f64) {
        let thr = from_mv(THRESHOLD_MV);
        let a = self.prev;
        if a < thr && u >= thr {
            self.ups.push(t_prev + dt * (thr - a) / (u - a));
        } else if a >= thr && u < thr {
            self.downs.push(t_prev + dt * (a - thr) / (a - u));
        }
        self.prev = u;
    }
}

/// CV restitution from the cable protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRestitution {
    /// (DI ms, CV cm/s), ascending DI. DI is measured at the cable midpoint.
    pub points: Vec<(f64, f64)>,
    /// CV of the last conditioning beat, cm/s.
    pub cv_conditioning: f64,
    /// Cycle lengths that blocked.
    pub blocked: Vec<f64>,
}

const PROBE_A: f64 = 0.25;
const PROBE_MID: f64 = 0.5;
const PROBE_B: f64 = 0.75;

fn cv_between(cable: &Cable, ta: f64, tb: f64) -> f64 {
    let dist = (cable.index_at(PROBE_B * cable.config.length) - cable.index_at(PROBE_A * cable.config.length)) as f64
        * cable.config.dx;
    dist / (tb - ta) * 1000.0
}

pub fn generate_cv_restitution(params: &MsParameters, cable_cfg: &CableConfig, protocol: &Protocol) -> Result<CvRestitution> {
    protocol.validate()?;
    let mut cable = Cable::new(params, cable_cfg)?;
    let dt = cable_cfg.dt;
    let to_step = |t: f64| (t / dt).round() as usize;
    let len = cable_cfg.length;
    let idx = [cable.index_at(PROBE_A * len), cable.index_at(PROBE_MID * len), cable.index_at(PROBE_B * len)];

    let cls = protocol.cycle_lengths();
    let t_last = protocol.last_conditioning();
    let conditioning: Vec<f64> = (0..protocol.n_conditioning).map(|k| k as f64 * protocol.bcl).collect();
    let snap_steps: Vec<usize> = cls.iter().rev().map(|&cl| to_step(t_last + cl)).collect();
    let end = to_step(t_last + protocol.bcl);

    let mut probes: Vec<Probe> = idx.iter().map(|&i| Probe::new(i, 0.0)).collect();
    let mut snaps: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(cls.len());
    let mut next_snap = 0;
    let start_tail = to_step(t_last);
    for k in 0..end {
        while next_snap < snap_steps.len() && snap_steps[next_snap] == k {
            snaps.push((cable.u.clone(), cable.h.clone()));
            next_snap += 1;
        }
        let t = k as f64 * dt;
        if k == start_tail {
            for p in probes.iter_mut() {
                p.ups.clear();
                p.downs.clear();
            }
        }
        cable.step(stim_on(t, &conditioning, params.stim_duration));
        for p in probes.iter_mut() {
            p.observe(cable.u[p.index], t, dt);
        }
        if k % 500 == 0 {
            cable.check(t)?;
        }
    }
    while next_snap < snap_steps.len() {
        snaps.push((cable.u.clone(), cable.h.clone()));
        next_snap += 1;
    }
    snaps.reverse();

    let (ta, tb) = match (probes[0].ups.first(), probes[2].ups.first()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Generation("the last conditioning beat did not propagate along the cable".into())),
    };
    let cv_conditioning = cv_between(&cable, ta, tb);
    let mid_up = probes[1].ups.first().copied();
    let mid_repol = probes[1]
        .downs
        .iter()
        .copied()
        .find(|&d| mid_up.is_some_and(|u| d > u))
        .ok_or_else(|| Error::Generation("the last conditioning beat did not repolarize at the midpoint".into()))?;

    let window = 300.0;
    let outcomes: Vec<(f64, Option<(f64, f64)>)> = cls
        .par_iter()
        .zip(snaps.into_par_iter())
        .map(|(&cl, (u0, h0))| {
            let mut c = cable.clone();
            c.u = u0;
            c.h = h0;
            let t0 = t_last + cl;
            let mut pr: Vec<Probe> = idx.iter().map(|&i| Probe::new(i, c.u[i])).collect();
            for k in 0..to_step(window) {
                let t = k as f64 * dt;
                c.step(t < params.stim_duration - 1e-9);
                for p in pr.iter_mut() {
                    p.observe(c.u[p.index], t0 + t, dt);
                }
                if !pr[2].ups.is_empty() {
                    break;
                }
                if k % 500 == 0 {
                    c.check(t0 + t)?;
                }
            }
            let res = match (pr[0].ups.first(), pr[1].ups.first(), pr[2].ups.first()) {
                (Some(&a), Some(&m), Some(&b)) => Some((m - mid_repol, cv_between(&c, a, b))),
                _ => None,
            };
            Ok((cl, res))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut blocked = Vec::new();
    for (cl, res) in outcomes {
        match res {
            Some(p) => points.push(p),
            None => blocked.push(cl),
        }
    }
    if points.is_empty() {
        return Err(Error::Generation("conduction blocked at every cycle length".into()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CvRestitution {
        points,
        cv_conditioning,
        blocked,
    })
}

/// CV in cm/s of a single beat launched from rest.
pub fn resting_cv(params: &MsParameters, cable_cfg: &CableConfig) -> Result<f64> {
    let mut cable = Cable::new(params, cable_cfg)?;
    let dt = cable_cfg.dt;
    let len = cable_cfg.length;
    let mut probes = [
        Probe::new(cable.index_at(PROBE_A * len), 0.0),
        Probe::new(cable.index_at(PROBE_B * len), 0.0),
    ];
    let steps = (500.0 / dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * dt;
        cable.step(t < params.stim_duration - 1e-9);
        for p in probes.iter_mut() {
            p.observe(cable.u[p.index], t, dt);
        }
        if !probes[1].ups.is_empty() {
            return Ok(cv_between(&cable, probes[0].ups[0], probes[1].ups[0]));
        }
        if k % 500 == 0 {
            cable.check(t)?;
        }
    }
    Err(Error::Generation("a beat from rest did not reach the far probe".into()))
}

/// Both curves merged into a table. CV knots below the APD-derived DI_min are
/// dropped, since the engine never queries them.
pub fn build_table(
    tissue: TissueId,
    apd: &ApdRestitution,
    cv: &CvRestitution,
    ratio: f64,
) -> Result<RestitutionTable> {
    let cv_points: Vec<(f64, f64)> = cv.points.iter().copied().filter(|p| p.0 >= apd.di_min).collect();
    if cv_points.is_empty() {
        return Err(Error::Generation("no CV knot at or above DI_min".into()));
    }
    RestitutionTable::new(tissue, apd.di_min, apd.points.clone(), cv_points, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_is_steady() {
        let tr = ms_cell_run(&MsParameters::healthy(), &[], 0.02, 50.0).unwrap();
        assert!(tr.u[500..].iter().all(|&u| u.abs() < 1e-9));
    }

    #[test]
    fn single_stimulus_single_action_potential() {
        let tr = ms_cell_run(&MsParameters::healthy(), &[5.0], 0.02, 800.0).unwrap();
        let iv = tr.apd_intervals();
        assert_eq!(iv.len(), 1);
        assert!(tr.mv().all(|v| (-90.0..=30.0).contains(&v)));
    }

    #[test]
    fn premature_stimulus_is_refractory() {
        let tr = ms_cell_run(&MsParameters::healthy(), &[5.0, 60.0], 0.02, 800.0).unwrap();
        assert_eq!(tr.apd_intervals().len(), 1);
    }

    #[test]
    fn diverging_parameters_fail_loudly() {
        let p = MsParameters {
            tau_in: 1e-4,
            ..MsParameters::healthy()
        };
        assert!(matches!(ms_cell_run(&p, &[1.0], 0.02, 50.0), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let p = MsParameters {
            v_gate: 1.5,
            ..MsParameters::healthy()
        };
        assert!(p.validate().is_err());
        assert!(Protocol { bcl: 100.0, ..Protocol::default() }.validate().is_err());
        assert!(CableConfig { dx: 0.3, ..CableConfig::default() }.validate().is_err());
    }

    #[test]
    fn cycle_lengths_cover_range() {
        let cls = Protocol::default().cycle_lengths();
        assert_eq!(cls.len(), 131);
        assert_eq!(cls[0], 1500.0);
        assert_eq!(*cls.last().unwrap(), 200.0);
    }

    #[test]
    fn apd_curve_is_monotone() {
        let r = generate_apd_restitution(&MsParameters::healthy(), &Protocol::default(), 0.02).unwrap();
        for w in r.points.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-9, "{:?}", w);
        }
    }
}
