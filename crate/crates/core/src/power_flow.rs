//! AC power flow, branch flows, the bus apparent-power matrix and reduction
//! of the network to generator internal nodes.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{BusKind, GridCase};
use crate::linalg::{self, LinalgError};

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITER: usize = 50;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("branch {0} has zero impedance")]
    ZeroImpedance(u32),
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("power flow did not converge in {iterations} iterations (max mismatch {mismatch:.3e} pu)")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("singular network matrix during reduction (isolated subnetwork without generators?)")]
    SingularReduction,
    #[error("bus matrix is {found}x{found}, case has {expected} buses")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
    pub bus_ids: Vec<u32>,
}

fn series_admittance(r: f64, x: f64) -> Complex64 {
    Complex64::new(r, x).inv()
}

/// Assembles Ybus over in-service branches not listed in `open`.
pub fn assemble_ybus(case: &GridCase, open: &BTreeSet<u32>) -> Result<AdmittanceMatrix, PowerFlowError> {
    let n = case.bus_count();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for br in case.branches.iter().filter(|b| b.in_service && !open.contains(&b.id)) {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(PowerFlowError::ZeroImpedance(br.id));
        }
        let f = case.bus_index(br.from_bus).expect("validated branch endpoint");
        let t = case.bus_index(br.to_bus).expect("validated branch endpoint");
        let ys = series_admittance(br.r, br.x);
        let half = Complex64::new(0.0, br.b_ch / 2.0);
        y[(f, f)] += ys + half;
        y[(t, t)] += ys + half;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    for (i, b) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(b.g_sh, b.b_sh);
    }
    Ok(AdmittanceMatrix {
        y,
        bus_ids: case.bus_ids(),
    })
}

pub fn build_ybus(case: &GridCase) -> Result<AdmittanceMatrix, PowerFlowError> {
    assemble_ybus(case, &BTreeSet::new())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }
}

/// Scheduled net injections (generation minus load), pu.
fn scheduled(case: &GridCase) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = case.buses.iter().map(|b| -b.p_load).collect();
    let q: Vec<f64> = case.buses.iter().map(|b| -b.q_load).collect();
    for g in &case.generators {
        let i = case.bus_index(g.bus).expect("validated generator bus");
        p[i] += g.p_set;
    }
    (p, q)
}

fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let vv = DVector::from_column_slice(v);
    let i = y * &vv;
    v.iter().zip(i.iter()).map(|(vk, ik)| vk * ik.conj()).collect()
}

/// Newton-Raphson in polar form from a flat start. Non-convergence is
/// reported through `converged = false` with the best iterate found.
pub fn solve_power_flow(case: &GridCase) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = case.bus_count();
    let ybus = build_ybus(case)?.y;
    let (p_spec, q_spec) = scheduled(case);

    let mut vm = vec![1.0; n];
    let va = vec![0.0; n];
    for (i, b) in case.buses.iter().enumerate() {
        if b.kind != BusKind::Pq {
            vm[i] = case.generator_at(b.id).map(|g| g.v_set).unwrap_or(b.v_mag);
        }
    }
    let pv: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind == BusKind::Pv).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind == BusKind::Pq).collect();
    let ang_idx: Vec<usize> = pv.iter().chain(&pq).copied().collect();
    let na = ang_idx.len();
    let dim = na + pq.len();

    let mut v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let mismatch = |v: &[Complex64]| -> (DVector<f64>, f64) {
        let s = injections(&ybus, v);
        let mut f = DVector::zeros(dim);
        for (r, &i) in ang_idx.iter().enumerate() {
            f[r] = p_spec[i] - s[i].re;
        }
        for (r, &i) in pq.iter().enumerate() {
            f[na + r] = q_spec[i] - s[i].im;
        }
        let worst = f.amax();
        (f, worst)
    };

    let (mut f, mut worst) = mismatch(&v);
    let mut best = (worst, v.clone(), 0);
    let mut iter = 0;
    while worst >= PF_TOLERANCE && iter < PF_MAX_ITER {
        let jac = jacobian(&ybus, &v, &ang_idx, &pq);
        let dx = linalg::solve_real(&jac, &f).map_err(|_| PowerFlowError::SingularJacobian(iter))?;
        for (r, &i) in ang_idx.iter().enumerate() {
            let (m, a) = v[i].to_polar();
            v[i] = Complex64::from_polar(m, a + dx[r]);
        }
        for (r, &i) in pq.iter().enumerate() {
            let (m, a) = v[i].to_polar();
            v[i] = Complex64::from_polar(m + dx[na + r], a);
        }
        iter += 1;
        (f, worst) = mismatch(&v);
        if !worst.is_finite() {
            break;
        }
        if worst < best.0 {
            best = (worst, v.clone(), iter);
        }
    }
    let converged = worst < PF_TOLERANCE;
    let (max_mismatch, v_best, iterations) = if converged { (worst, v, iter) } else { best };
    if !converged {
        log::warn!("power flow stopped after {iter} iterations, max mismatch {max_mismatch:.3e} pu");
    }
    Ok(PowerFlowSolution {
        v_mag: v_best.iter().map(|z| z.norm()).collect(),
        v_ang: v_best.iter().map(|z| z.arg()).collect(),
        converged,
        iterations,
        max_mismatch,
    })
}

/// Jacobian of the injected power with respect to (θ of PV+PQ, |V| of PQ),
/// laid out to match the mismatch vector (which is spec − calc, so the
/// Newton step is J·dx = f).
fn jacobian(y: &DMatrix<Complex64>, v: &[Complex64], ang_idx: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let n = v.len();
    let vv = DVector::from_column_slice(v);
    let ibus = y * &vv;
    // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
    // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
    let mut ds_da = DMatrix::<Complex64>::zeros(n, n);
    let mut ds_dm = DMatrix::<Complex64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let ydv = y[(r, c)] * v[c];
            let mut a = -ydv;
            if r == c {
                a += ibus[r];
            }
            ds_da[(r, c)] = J * v[r] * a.conj();
            let unit = v[c] / v[c].norm();
            let mut m = v[r] * (y[(r, c)] * unit).conj();
            if r == c {
                m += ibus[r].conj() * unit;
            }
            ds_dm[(r, c)] = m;
        }
    }
    let na = ang_idx.len();
    let dim = na + pq.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for (ri, &r) in ang_idx.iter().enumerate() {
        for (ci, &c) in ang_idx.iter().enumerate() {
            jac[(ri, ci)] = ds_da[(r, c)].re;
        }
        for (ci, &c) in pq.iter().enumerate() {
            jac[(ri, na + ci)] = ds_dm[(r, c)].re;
        }
    }
    for (ri, &r) in pq.iter().enumerate() {
        for (ci, &c) in ang_idx.iter().enumerate() {
            jac[(na + ri, ci)] = ds_da[(r, c)].im;
        }
        for (ci, &c) in pq.iter().enumerate() {
            jac[(na + ri, na + ci)] = ds_dm[(r, c)].im;
        }
    }
    jac
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlow {
    pub branch: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub s_from: f64,
    pub s_to: f64,
}

impl BranchFlow {
    pub fn s_max(&self) -> f64 {
        self.s_from.max(self.s_to)
    }
}

/// Per-end flows for arbitrary bus voltages; branches that are out of
/// service or listed in `open` carry zero.
pub fn flows_at(case: &GridCase, v: &[Complex64], open: &BTreeSet<u32>) -> Vec<BranchFlow> {
    case.branches
        .iter()
        .map(|br| {
            let mut flow = BranchFlow {
                branch: br.id,
                from_bus: br.from_bus,
                to_bus: br.to_bus,
                p_from: 0.0,
                q_from: 0.0,
                p_to: 0.0,
                q_to: 0.0,
                s_from: 0.0,
                s_to: 0.0,
            };
            if !br.in_service || open.contains(&br.id) {
                return flow;
            }
            let vf = v[case.bus_index(br.from_bus).expect("validated")];
            let vt = v[case.bus_index(br.to_bus).expect("validated")];
            let ys = series_admittance(br.r, br.x);
            let half = Complex64::new(0.0, br.b_ch / 2.0);
            let i_f = (vf - vt) * ys + vf * half;
            let i_t = (vt - vf) * ys + vt * half;
            let sf = vf * i_f.conj();
            let st = vt * i_t.conj();
            flow.p_from = sf.re;
            flow.q_from = sf.im;
            flow.p_to = st.re;
            flow.q_to = st.im;
            flow.s_from = (sf.re * sf.re + sf.im * sf.im).sqrt();
            flow.s_to = (st.re * st.re + st.im * st.im).sqrt();
            flow
        })
        .collect()
}

pub fn branch_flows(case: &GridCase, sol: &PowerFlowSolution) -> Vec<BranchFlow> {
    flows_at(case, &sol.voltages(), &BTreeSet::new())
}

/// Square matrix indexed by bus position, with the bus ids alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct BusMatrix {
    pub bus_ids: Vec<u32>,
    pub values: DMatrix<f64>,
}

impl BusMatrix {
    pub fn get(&self, a: u32, b: u32) -> Option<f64> {
        let i = self.bus_ids.iter().position(|&x| x == a)?;
        let j = self.bus_ids.iter().position(|&x| x == b)?;
        Some(self.values[(i, j)])
    }

    pub fn scaled(&self, c: f64) -> BusMatrix {
        BusMatrix {
            bus_ids: self.bus_ids.clone(),
            values: &self.values * c,
        }
    }
}

/// Entry (i,j) is max(s_from, s_to) summed over the branches joining i, j.
pub fn apparent_power_matrix(case: &GridCase, flows: &[BranchFlow]) -> BusMatrix {
    let n = case.bus_count();
    let mut values = DMatrix::zeros(n, n);
    for f in flows {
        let (Some(i), Some(j)) = (case.bus_index(f.from_bus), case.bus_index(f.to_bus)) else {
            continue;
        };
        let s = f.s_max();
        values[(i, j)] += s;
        values[(j, i)] += s;
    }
    BusMatrix {
        bus_ids: case.bus_ids(),
        values,
    }
}

/// Network reduced to generator internal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub labels: Vec<String>,
    pub y: DMatrix<Complex64>,
    pub e_mag: Vec<f64>,
    pub delta: Vec<f64>,
}

impl ReducedNetwork {
    pub fn emfs(&self) -> Vec<Complex64> {
        self.e_mag
            .iter()
            .zip(&self.delta)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Electrical output of every machine at the stored EMFs.
    pub fn electrical_power(&self) -> Vec<f64> {
        electrical_power(&self.y, &self.emfs())
    }
}

pub fn electrical_power(y: &DMatrix<Complex64>, e: &[Complex64]) -> Vec<f64> {
    let ev = DVector::from_column_slice(e);
    let i = y * &ev;
    e.iter().zip(i.iter()).map(|(ek, ik)| (ek * ik.conj()).re).collect()
}

/// EMF behind the transient reactance from terminal conditions.
pub fn internal_emf(v_t: Complex64, s_gen: Complex64, xd_p: f64) -> Complex64 {
    let i = (s_gen / v_t).conj();
    v_t + J * xd_p * i
}

/// Gaussian elimination of every node not in `keep`:
/// Y_red = Y_kk − Y_ke·Y_ee⁻¹·Y_ek. The result follows the order of `keep`.
pub fn kron_eliminate(y: &DMatrix<Complex64>, keep: &[usize]) -> Result<DMatrix<Complex64>, PowerFlowError> {
    let n = y.nrows();
    let elim: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let ykk = y.select_rows(keep).select_columns(keep);
    if elim.is_empty() {
        return Ok(ykk);
    }
    let yke = y.select_rows(keep).select_columns(&elim);
    let yek = y.select_rows(&elim).select_columns(keep);
    let yee = y.select_rows(&elim).select_columns(&elim);
    let x = linalg::solve_complex(&yee, &yek).map_err(|_| PowerFlowError::SingularReduction)?;
    Ok(ykk - yke * x)
}

/// Everything the dynamic model holds fixed after initialization: load
/// admittances, machine reactances and the pre-disturbance EMFs.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub labels: Vec<String>,
    /// Bus position of each generator terminal.
    pub gen_pos: Vec<usize>,
    /// Transient reactance on system base.
    pub xd_p: Vec<f64>,
    /// Constant-impedance load admittance per bus.
    pub y_load: Vec<Complex64>,
    pub e0: Vec<Complex64>,
    /// Bus voltages of the initializing power flow.
    pub v0: Vec<Complex64>,
}

/// Reduced matrix plus the map from internal EMFs to bus voltages
/// (V_bus = M·E) for one network topology.
#[derive(Debug, Clone)]
pub struct TopologyReduction {
    pub y_red: DMatrix<Complex64>,
    pub v_map: DMatrix<Complex64>,
}

impl NetworkModel {
    pub fn new(case: &GridCase, sol: &PowerFlowSolution) -> Result<Self, PowerFlowError> {
        let v = sol.voltages();
        let ybus = build_ybus(case)?.y;
        let s_inj = injections(&ybus, &v);
        let y_load = case
            .buses
            .iter()
            .zip(&v)
            .map(|(b, vk)| Complex64::new(b.p_load, -b.q_load) / vk.norm_sqr())
            .collect();
        let mut gen_pos = Vec::with_capacity(case.generators.len());
        let mut xd = Vec::with_capacity(case.generators.len());
        let mut e0 = Vec::with_capacity(case.generators.len());
        for g in &case.generators {
            let i = case.bus_index(g.bus).expect("validated generator bus");
            let b = &case.buses[i];
            let s_gen = s_inj[i] + Complex64::new(b.p_load, b.q_load);
            let x = g.xd_p_system(case.base_mva);
            gen_pos.push(i);
            xd.push(x);
            e0.push(internal_emf(v[i], s_gen, x));
        }
        Ok(NetworkModel {
            labels: case.generators.iter().map(|g| g.label.clone()).collect(),
            gen_pos,
            xd_p: xd,
            y_load,
            e0,
            v0: v,
        })
    }

    /// Reduces the augmented network (buses plus internal nodes) for the
    /// topology with `open` branches removed and an optional shunt fault.
    pub fn reduce(
        &self,
        case: &GridCase,
        open: &BTreeSet<u32>,
        fault: Option<(usize, Complex64)>,
    ) -> Result<TopologyReduction, PowerFlowError> {
        let n = case.bus_count();
        let m = self.gen_pos.len();
        let mut yll = assemble_ybus(case, open)?.y;
        for i in 0..n {
            yll[(i, i)] += self.y_load[i];
        }
        let mut ylg = DMatrix::<Complex64>::zeros(n, m);
        let mut ygg = DMatrix::<Complex64>::zeros(m, m);
        for k in 0..m {
            let yk = (J * self.xd_p[k]).inv();
            let i = self.gen_pos[k];
            yll[(i, i)] += yk;
            ylg[(i, k)] = -yk;
            ygg[(k, k)] = yk;
        }
        if let Some((pos, y)) = fault {
            yll[(pos, pos)] += y;
        }
        let x = linalg::solve_complex(&yll, &ylg).map_err(|_| PowerFlowError::SingularReduction)?;
        let y_red = ygg - ylg.transpose() * &x;
        Ok(TopologyReduction { y_red, v_map: -x })
    }

    pub fn reduced_network(&self, y_red: DMatrix<Complex64>, e: &[Complex64]) -> ReducedNetwork {
        ReducedNetwork {
            labels: self.labels.clone(),
            y: y_red,
            e_mag: e.iter().map(|z| z.norm()).collect(),
            delta: e.iter().map(|z| z.arg()).collect(),
        }
    }
}

/// Reduction to generator internal nodes at the power-flow operating point.
pub fn kron_reduce(case: &GridCase, sol: &PowerFlowSolution) -> Result<ReducedNetwork, PowerFlowError> {
    let model = NetworkModel::new(case, sol)?;
    let red = model.reduce(case, &BTreeSet::new(), None)?;
    Ok(model.reduced_network(red.y_red, &model.e0))
}
