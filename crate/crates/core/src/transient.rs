//! Classical-model multi-machine simulation: constant EMF behind transient
//! reactance, constant mechanical power, constant-impedance loads, fixed-step
//! RK4 on the swing equations.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{EventKind, EventSchedule, GridCase};
use crate::power_flow::{
    self, apparent_power_matrix, electrical_power, flows_at, BusMatrix, NetworkModel, PowerFlowError, ReducedNetwork,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step {0} s is outside (0, 0.005]")]
    BadStep(f64),
    #[error("horizon {horizon} s ends before the last event at {last} s")]
    ShortHorizon { horizon: f64, last: f64 },
    #[error("initial power flow did not converge (max mismatch {0:.3e} pu)")]
    NotConverged(f64),
    #[error("time {t} s is outside the simulated horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("event references branch {0}, which is already open")]
    BranchOpen(u32),
    #[error("state became non-finite at t = {0} s")]
    Diverged(f64),
    #[error(transparent)]
    Network(#[from] PowerFlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultEnd {
    From,
    To,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Nominal frequency, Hz.
    pub f_nominal: f64,
    pub fault_end: FaultEnd,
    /// Shunt admittance representing a bolted fault, pu.
    pub fault_shunt: Complex64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 8.0,
            dt: 1e-3,
            f_nominal: 60.0,
            fault_end: FaultEnd::From,
            fault_shunt: Complex64::new(1e6, 0.0),
        }
    }
}

impl SimConfig {
    pub fn omega_s(&self) -> f64 {
        2.0 * PI * self.f_nominal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub delta: Vec<f64>,
    /// Speed deviation from synchronous, rad/s.
    pub omega: Vec<f64>,
    pub e_mag: Vec<f64>,
    pub p_m: Vec<f64>,
}

/// Network topology in force from `start_step` on.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start_step: usize,
    pub open: BTreeSet<u32>,
    pub fault: Option<u32>,
    pub y_red: DMatrix<Complex64>,
    pub v_map: DMatrix<Complex64>,
    /// Generator indices of each electrically connected island.
    pub islands: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Trajectories {
    pub labels: Vec<String>,
    pub dt: f64,
    pub times: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub e_mag: Vec<f64>,
    pub p_m: Vec<f64>,
    /// Max pairwise angle spread per island, per step.
    pub spread: Vec<Vec<f64>>,
    /// (step, event index) for every applied event.
    pub markers: Vec<(usize, usize)>,
    pub segments: Vec<Segment>,
    pub case: GridCase,
    pub model: NetworkModel,
}

impl Trajectories {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn state(&self, step: usize) -> MachineState {
        MachineState {
            delta: self.delta[step].clone(),
            omega: self.omega[step].clone(),
            e_mag: self.e_mag.clone(),
            p_m: self.p_m.clone(),
        }
    }

    pub fn segment_at(&self, step: usize) -> &Segment {
        let i = self.segments.partition_point(|s| s.start_step <= step);
        &self.segments[i.saturating_sub(1)]
    }

    /// Grid step nearest to `t` (the earlier step on an exact tie).
    pub fn step_at(&self, t: f64) -> Result<usize, SimError> {
        let horizon = self.horizon();
        if !(t >= -0.5 * self.dt && t <= horizon + 0.5 * self.dt) {
            return Err(SimError::OutOfHorizon { t, horizon });
        }
        let s = (t / self.dt - 0.5).ceil().max(0.0) as usize;
        Ok(s.min(self.steps() - 1))
    }

    fn emfs(&self, step: usize) -> Vec<Complex64> {
        self.e_mag
            .iter()
            .zip(&self.delta[step])
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn bus_voltages(&self, step: usize) -> Vec<Complex64> {
        let seg = self.segment_at(step);
        let e = DVector::from_vec(self.emfs(step));
        (&seg.v_map * e).iter().copied().collect()
    }

    /// Bus voltage angles at a step, radians.
    pub fn bus_angles(&self, step: usize) -> Vec<f64> {
        self.bus_voltages(step).iter().map(|v| v.arg()).collect()
    }
}

fn gen_islands(case: &GridCase, model: &NetworkModel, open: &BTreeSet<u32>) -> Vec<Vec<usize>> {
    case.components(open)
        .into_iter()
        .map(|comp| {
            (0..model.gen_pos.len())
                .filter(|&k| comp.binary_search(&model.gen_pos[k]).is_ok())
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

fn spreads(delta: &[f64], islands: &[Vec<usize>]) -> Vec<f64> {
    islands
        .iter()
        .map(|isl| {
            let (lo, hi) = isl.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                (lo.min(delta[k]), hi.max(delta[k]))
            });
            hi - lo
        })
        .collect()
}

/// Integrates the swing equations over `[0, horizon]` with fixed step `dt`.
/// Events take effect at the first grid time not earlier than the event
/// time (within 1e-9 s) and before that step is integrated.
pub fn simulate(case: &GridCase, events: &EventSchedule, cfg: &SimConfig) -> Result<Trajectories, SimError> {
    if !(cfg.dt > 0.0 && cfg.dt <= 0.005 + 1e-15) {
        return Err(SimError::BadStep(cfg.dt));
    }
    if let Some(last) = events.last_time() {
        if cfg.horizon < last {
            return Err(SimError::ShortHorizon {
                horizon: cfg.horizon,
                last,
            });
        }
    }
    let sol = power_flow::solve_power_flow(case)?;
    if !sol.converged {
        return Err(SimError::NotConverged(sol.max_mismatch));
    }
    let model = NetworkModel::new(case, &sol)?;
    let m = model.gen_pos.len();
    let ws = cfg.omega_s();
    let base = case.base_mva;
    let h: Vec<f64> = case.generators.iter().map(|g| g.h_system(base)).collect();
    let d: Vec<f64> = case.generators.iter().map(|g| g.d_system(base)).collect();

    let mut open = BTreeSet::new();
    let mut fault: Option<u32> = None;
    let build = |open: &BTreeSet<u32>, fault: Option<u32>, start: usize| -> Result<Segment, SimError> {
        let shunt = match fault {
            Some(id) => {
                let br = case.branch(id).expect("validated schedule");
                let bus = match cfg.fault_end {
                    FaultEnd::From => br.from_bus,
                    FaultEnd::To => br.to_bus,
                };
                Some((case.bus_index(bus).expect("validated"), cfg.fault_shunt))
            }
            None => None,
        };
        let red = model.reduce(case, open, shunt)?;
        Ok(Segment {
            start_step: start,
            open: open.clone(),
            fault,
            y_red: red.y_red,
            v_map: red.v_map,
            islands: gen_islands(case, &model, open),
        })
    };

    let mut seg = build(&open, fault, 0)?;
    let e_mag: Vec<f64> = model.e0.iter().map(|z| z.norm()).collect();
    let delta0: Vec<f64> = model.e0.iter().map(|z| z.arg()).collect();
    // mechanical power equals the initial electrical output of the
    // reduced network, so the pre-disturbance state is an exact equilibrium
    let p_m = electrical_power(&seg.y_red, &model.e0);

    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut delta = Vec::with_capacity(steps + 1);
    let mut omega = Vec::with_capacity(steps + 1);
    let mut spread = Vec::with_capacity(steps + 1);
    let mut markers = Vec::new();
    let mut segments = Vec::new();

    let mut x_d = delta0;
    let mut x_w = vec![0.0; m];
    let mut next = 0;
    let evs = events.events();

    let accel = |y: &DMatrix<Complex64>, dl: &[f64], w: &[f64]| -> Vec<f64> {
        let e: Vec<Complex64> = e_mag
            .iter()
            .zip(dl)
            .map(|(&mg, &a)| Complex64::from_polar(mg, a))
            .collect();
        let pe = electrical_power(y, &e);
        (0..m)
            .map(|k| ws / (2.0 * h[k]) * (p_m[k] - pe[k] - d[k] * w[k] / ws))
            .collect()
    };

    for s in 0..=steps {
        let t = s as f64 * cfg.dt;
        let mut changed = false;
        while next < evs.len() && evs[next].time <= t + 1e-9 {
            let ev = &evs[next];
            if open.contains(&ev.branch) {
                return Err(SimError::BranchOpen(ev.branch));
            }
            match ev.kind {
                EventKind::FaultOnLine => fault = Some(ev.branch),
                EventKind::ClearAndOpenLine => {
                    if fault == Some(ev.branch) {
                        fault = None;
                    }
                    open.insert(ev.branch);
                }
                EventKind::OpenLine => {
                    open.insert(ev.branch);
                }
            }
            markers.push((s, next));
            next += 1;
            changed = true;
        }
        if changed {
            let new_seg = build(&open, fault, s)?;
            segments.push(std::mem::replace(&mut seg, new_seg));
        }
        times.push(t);
        spread.push(spreads(&x_d, &seg.islands));
        delta.push(x_d.clone());
        omega.push(x_w.clone());
        if s == steps {
            break;
        }

        let y = &seg.y_red;
        let hdt = 0.5 * cfg.dt;
        let k1d = x_w.clone();
        let k1w = accel(y, &x_d, &x_w);
        let d2: Vec<f64> = (0..m).map(|k| x_d[k] + hdt * k1d[k]).collect();
        let w2: Vec<f64> = (0..m).map(|k| x_w[k] + hdt * k1w[k]).collect();
        let k2w = accel(y, &d2, &w2);
        let d3: Vec<f64> = (0..m).map(|k| x_d[k] + hdt * w2[k]).collect();
        let w3: Vec<f64> = (0..m).map(|k| x_w[k] + hdt * k2w[k]).collect();
        let k3w = accel(y, &d3, &w3);
        let d4: Vec<f64> = (0..m).map(|k| x_d[k] + cfg.dt * w3[k]).collect();
        let w4: Vec<f64> = (0..m).map(|k| x_w[k] + cfg.dt * k3w[k]).collect();
        let k4w = accel(y, &d4, &w4);
        for k in 0..m {
            x_d[k] += cfg.dt / 6.0 * (k1d[k] + 2.0 * w2[k] + 2.0 * w3[k] + w4[k]);
            x_w[k] += cfg.dt / 6.0 * (k1w[k] + 2.0 * k2w[k] + 2.0 * k3w[k] + k4w[k]);
        }
        if x_d.iter().chain(&x_w).any(|v| !v.is_finite()) {
            return Err(SimError::Diverged(t + cfg.dt));
        }
    }
    segments.push(seg);

    Ok(Trajectories {
        labels: model.labels.clone(),
        dt: cfg.dt,
        times,
        delta,
        omega,
        e_mag,
        p_m,
        spread,
        markers,
        segments,
        case: case.clone(),
        model,
    })
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Grid time actually used.
    pub time: f64,
    pub step: usize,
    pub state: MachineState,
    pub reduced: ReducedNetwork,
    /// Bus-level apparent power (pu) from the network solution at this instant.
    pub smatrix: BusMatrix,
    /// Branches open at this instant.
    pub open: BTreeSet<u32>,
    pub bus_voltages: Vec<Complex64>,
}

impl Snapshot {
    /// The case with this instant's open branches taken out of service.
    pub fn topology(&self, case: &GridCase) -> GridCase {
        case.with_branches_open(&self.open)
    }
}

/// State, reduced network and bus flows at the grid point nearest `t`.
pub fn snapshot_at(traj: &Trajectories, t: f64) -> Result<Snapshot, SimError> {
    let step = traj.step_at(t)?;
    let seg = traj.segment_at(step);
    let state = traj.state(step);
    let e = traj.emfs(step);
    let v = traj.bus_voltages(step);
    let flows = flows_at(&traj.case, &v, &seg.open);
    Ok(Snapshot {
        time: traj.times[step],
        step,
        reduced: traj.model.reduced_network(seg.y_red.clone(), &e),
        smatrix: apparent_power_matrix(&traj.case, &flows),
        open: seg.open.clone(),
        state,
        bus_voltages: v,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncLossReport {
    pub unstable: bool,
    pub t_loss: Option<f64>,
    pub step: Option<usize>,
}

pub const DEFAULT_SYNC_THRESHOLD: f64 = PI;

/// First grid time at which the angle spread inside any connected island
/// exceeds `threshold`.
pub fn detect_loss_of_sync(traj: &Trajectories, threshold: f64) -> SyncLossReport {
    for (s, sp) in traj.spread.iter().enumerate() {
        if sp.iter().any(|&x| x > threshold) {
            return SyncLossReport {
                unstable: true,
                t_loss: Some(traj.times[s]),
                step: Some(s),
            };
        }
    }
    SyncLossReport {
        unstable: false,
        t_loss: None,
        step: None,
    }
}

/// Pearson correlation of bus voltage angle series over the steps in
/// `[t_end − window, t_end]`. Constant series correlate 0 with others and
/// 1 with themselves.
pub fn angle_correlation(traj: &Trajectories, t_end: f64, window: f64) -> Result<DMatrix<f64>, SimError> {
    let last = traj.step_at(t_end)?;
    let first = traj.step_at((t_end - window).max(0.0))?;
    let n = traj.case.bus_count();
    let series: Vec<Vec<f64>> = (first..=last).map(|s| traj.bus_angles(s)).collect();
    let len = series.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| series.iter().map(|r| r[i]).sum::<f64>() / len).collect();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            for r in &series {
                let a = r[i] - mean[i];
                let b = r[j] - mean[j];
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            let c = if i == j {
                1.0
            } else if sxx > 0.0 && syy > 0.0 {
                (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[(i, j)] = c;
            out[(j, i)] = c;
        }
    }
    Ok(out)
}
