//! Network description: buses, branches, generators and event schedules.
//!
//! Cases are read from a directory holding three CSV tables:
//!
//! | file         | header                                                    |
//! |--------------|-----------------------------------------------------------|
//! | `bus.csv`    | `id,kind,v_mag,v_ang_deg,p_load_mw,q_load_mvar,g_sh,b_sh` |
//! | `branch.csv` | `id,from,to,r_pu,x_pu,b_ch_pu,status`                     |
//! | `gen.csv`    | `label,bus,p_mw,v_set,h_s,d_pu,xdp_pu,mva`                |
//!
//! An optional `case.csv` with the single column `base_mva` overrides the
//! default 100 MVA system base. Angles are degrees on disk and radians in
//! memory; powers are MW/Mvar on disk and per-unit in memory.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: u64,
        column: usize,
        message: String,
    },
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("invalid event schedule: {0}")]
    Events(String),
}

impl CaseError {
    fn validation(msg: impl Into<String>) -> Self {
        CaseError::Validation(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    #[serde(rename = "slack")]
    Slack,
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "PQ")]
    Pq,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "PV",
            BusKind::Pq => "PQ",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Voltage magnitude, pu (setpoint for slack/PV buses).
    pub v_mag: f64,
    /// Voltage angle, radians.
    pub v_ang: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub g_sh: f64,
    pub b_sh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, pu.
    pub b_ch: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn joins(&self, a: u32, b: u32) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub label: String,
    pub bus: u32,
    /// Active power setpoint, pu on system base.
    pub p_set: f64,
    pub v_set: f64,
    /// Inertia constant in seconds on the machine base.
    pub h: f64,
    /// Damping on the machine base, pu.
    pub d: f64,
    /// Transient reactance on the machine base, pu.
    pub xd_p: f64,
    pub mva_base: f64,
}

impl Generator {
    pub fn h_system(&self, base_mva: f64) -> f64 {
        self.h * self.mva_base / base_mva
    }

    pub fn d_system(&self, base_mva: f64) -> f64 {
        self.d * self.mva_base / base_mva
    }

    pub fn xd_p_system(&self, base_mva: f64) -> f64 {
        self.xd_p * base_mva / self.mva_base
    }
}

/// A validated network case. Construct through [`GridCase::new`] or
/// [`load_case`]; both enforce every record invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    bus_pos: HashMap<u32, usize>,
}

impl GridCase {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, CaseError> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(CaseError::validation(format!(
                "base_mva must be positive, got {base_mva}"
            )));
        }
        let mut bus_pos = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if b.id == 0 {
                return Err(CaseError::validation("bus id 0: ids must be positive"));
            }
            if bus_pos.insert(b.id, i).is_some() {
                return Err(CaseError::validation(format!("duplicate bus id {}", b.id)));
            }
            let finite = [b.v_mag, b.v_ang, b.p_load, b.q_load, b.g_sh, b.b_sh]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(CaseError::validation(format!("bus {}: non-finite field", b.id)));
            }
            if b.kind != BusKind::Pq && b.v_mag <= 0.0 {
                return Err(CaseError::validation(format!(
                    "bus {}: voltage setpoint must be positive",
                    b.id
                )));
            }
        }
        let slacks = buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks == 0 {
            return Err(CaseError::validation("no slack bus"));
        }
        if slacks > 1 {
            return Err(CaseError::validation("multiple slack buses"));
        }

        let mut branch_ids = BTreeSet::new();
        for br in &branches {
            if br.id == 0 {
                return Err(CaseError::validation("branch id 0: ids must be positive"));
            }
            if !branch_ids.insert(br.id) {
                return Err(CaseError::validation(format!("duplicate branch id {}", br.id)));
            }
            if br.from_bus == br.to_bus {
                return Err(CaseError::validation(format!(
                    "branch {}: from_bus equals to_bus",
                    br.id
                )));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_pos.contains_key(&end) {
                    return Err(CaseError::validation(format!("branch {}: unknown bus {end}", br.id)));
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::validation(format!("branch {}: zero impedance", br.id)));
            }
            if ![br.r, br.x, br.b_ch].iter().all(|v| v.is_finite()) {
                return Err(CaseError::validation(format!("branch {}: non-finite field", br.id)));
            }
        }

        let mut labels = BTreeSet::new();
        let mut gen_buses = BTreeSet::new();
        for g in &generators {
            if !labels.insert(g.label.as_str()) {
                return Err(CaseError::validation(format!("duplicate generator label {}", g.label)));
            }
            let Some(&pos) = bus_pos.get(&g.bus) else {
                return Err(CaseError::validation(format!(
                    "generator {}: unknown bus {}",
                    g.label, g.bus
                )));
            };
            if !gen_buses.insert(g.bus) {
                return Err(CaseError::validation(format!(
                    "generator {}: bus {} already has a generator",
                    g.label, g.bus
                )));
            }
            if buses[pos].kind == BusKind::Pq {
                return Err(CaseError::validation(format!(
                    "generator {}: bus {} is a PQ bus",
                    g.label, g.bus
                )));
            }
            if !(g.h > 0.0) {
                return Err(CaseError::validation(format!(
                    "generator {}: h must be positive",
                    g.label
                )));
            }
            if !(g.xd_p > 0.0) {
                return Err(CaseError::validation(format!(
                    "generator {}: xd_p must be positive",
                    g.label
                )));
            }
            if !(g.mva_base > 0.0) {
                return Err(CaseError::validation(format!(
                    "generator {}: mva must be positive",
                    g.label
                )));
            }
            if !(g.v_set > 0.0) || !g.p_set.is_finite() || !g.d.is_finite() {
                return Err(CaseError::validation(format!(
                    "generator {}: invalid setpoint",
                    g.label
                )));
            }
        }

        let case = GridCase {
            base_mva,
            buses,
            branches,
            generators,
            bus_pos,
        };
        if !case.is_connected(&BTreeSet::new()) {
            return Err(CaseError::validation("network is not connected"));
        }
        Ok(case)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in [`GridCase::buses`].
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_pos.get(&id).copied()
    }

    pub fn bus_ids(&self) -> Vec<u32> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn branch(&self, id: u32) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn generator_at(&self, bus: u32) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    /// Branch ids of every in-service branch joining buses `a` and `b`.
    pub fn branches_between(&self, a: u32, b: u32) -> Vec<u32> {
        self.branches
            .iter()
            .filter(|br| br.in_service && br.joins(a, b))
            .map(|br| br.id)
            .collect()
    }

    /// Returns a copy with the given branches taken out of service.
    pub fn with_branches_open(&self, open: &BTreeSet<u32>) -> GridCase {
        let mut out = self.clone();
        for br in &mut out.branches {
            if open.contains(&br.id) {
                br.in_service = false;
            }
        }
        out
    }

    /// Connected components of the bus graph over in-service branches not in
    /// `open`. Each component lists bus positions in ascending order;
    /// components are ordered by their smallest position.
    pub fn components(&self, open: &BTreeSet<u32>) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service && !open.contains(&b.id)) {
            let f = self.bus_pos[&br.from_bus];
            let t = self.bus_pos[&br.to_bus];
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self, open: &BTreeSet<u32>) -> bool {
        self.components(open).len() <= 1
    }
}

/// Bijection between generator labels and their terminal buses, kept in
/// generator file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorBusMap {
    entries: Vec<(String, u32)>,
}

impl GeneratorBusMap {
    pub fn bus_of(&self, label: &str) -> Option<u32> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, b)| *b)
    }

    pub fn label_at(&self, bus: u32) -> Option<&str> {
        self.entries.iter().find(|(_, b)| *b == bus).map(|(l, _)| l.as_str())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.entries.iter().map(|(l, b)| (l.as_str(), *b))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn generator_bus_map(case: &GridCase) -> GeneratorBusMap {
    GeneratorBusMap {
        entries: case.generators.iter().map(|g| (g.label.clone(), g.bus)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    FaultOnLine,
    ClearAndOpenLine,
    OpenLine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub branch: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSchedule {
    events: Vec<Event>,
}

impl EventSchedule {
    /// Validates ordering, branch references and fault clearing.
    pub fn new(events: Vec<Event>, case: &GridCase) -> Result<Self, CaseError> {
        let mut last = f64::NEG_INFINITY;
        let mut faulted: BTreeMap<u32, f64> = BTreeMap::new();
        let mut opened = BTreeSet::new();
        for ev in &events {
            if !ev.time.is_finite() || ev.time < 0.0 {
                return Err(CaseError::Events(format!("invalid event time {}", ev.time)));
            }
            if ev.time < last {
                return Err(CaseError::Events(format!(
                    "event times must be non-decreasing ({} after {last})",
                    ev.time
                )));
            }
            last = ev.time;
            let Some(br) = case.branch(ev.branch) else {
                return Err(CaseError::Events(format!("unknown branch {}", ev.branch)));
            };
            if !br.in_service || opened.contains(&ev.branch) {
                return Err(CaseError::Events(format!("branch {} is already open", ev.branch)));
            }
            match ev.kind {
                EventKind::FaultOnLine => {
                    if faulted.insert(ev.branch, ev.time).is_some() {
                        return Err(CaseError::Events(format!("branch {} faulted twice", ev.branch)));
                    }
                }
                EventKind::ClearAndOpenLine => {
                    if faulted.remove(&ev.branch).is_none() {
                        return Err(CaseError::Events(format!(
                            "clearing of branch {} without a fault",
                            ev.branch
                        )));
                    }
                    opened.insert(ev.branch);
                }
                EventKind::OpenLine => {
                    if faulted.contains_key(&ev.branch) {
                        return Err(CaseError::Events(format!("branch {} opened while faulted", ev.branch)));
                    }
                    opened.insert(ev.branch);
                }
            }
        }
        if let Some((branch, t)) = faulted.into_iter().next() {
            return Err(CaseError::Events(format!(
                "fault on branch {branch} at {t} s is never cleared"
            )));
        }
        Ok(EventSchedule { events })
    }

    pub fn empty() -> Self {
        EventSchedule::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    /// Adds `open_line` events for `branches` at time `t`, keeping the
    /// schedule ordered. Events already scheduled at `t` stay first.
    pub fn with_openings(&self, t: f64, branches: &[u32], case: &GridCase) -> Result<Self, CaseError> {
        let mut events = self.events.clone();
        let at = events.partition_point(|e| e.time <= t);
        let extra = branches.iter().map(|&b| Event {
            time: t,
            kind: EventKind::OpenLine,
            branch: b,
        });
        events.splice(at..at, extra);
        EventSchedule::new(events, case)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct BusRecord {
    id: u32,
    kind: BusKind,
    v_mag: f64,
    v_ang_deg: f64,
    p_load_mw: f64,
    q_load_mvar: f64,
    g_sh: f64,
    b_sh: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct BranchRecord {
    id: u32,
    from: u32,
    to: u32,
    r_pu: f64,
    x_pu: f64,
    b_ch_pu: f64,
    status: u8,
}

#[derive(Debug, Deserialize, Serialize)]
struct GenRecord {
    label: String,
    bus: u32,
    p_mw: f64,
    v_set: f64,
    h_s: f64,
    d_pu: f64,
    xdp_pu: f64,
    mva: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct BaseRecord {
    base_mva: f64,
}

#[derive(Debug, Deserialize)]
struct EventRecord {
    t_s: f64,
    kind: String,
    branch_id: u32,
}

fn read_table<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CaseError> {
    let text = fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e| csv_error(&file, e))?);
    }
    Ok(out)
}

fn csv_error(file: &str, err: csv::Error) -> CaseError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    let (column, message) = match err.kind() {
        csv::ErrorKind::Deserialize { err: de, .. } => {
            (de.field().map(|f| f as usize + 1).unwrap_or(0), de.to_string())
        }
        _ => (0, err.to_string()),
    };
    CaseError::Parse {
        file: file.to_string(),
        line,
        column,
        message,
    }
}

/// Reads and validates the case stored in directory `dir`.
pub fn load_case(dir: impl AsRef<Path>) -> Result<GridCase, CaseError> {
    let dir = dir.as_ref();
    let base_path = dir.join("case.csv");
    let base_mva = if base_path.exists() {
        let rows: Vec<BaseRecord> = read_table(&base_path)?;
        match rows.as_slice() {
            [row] => row.base_mva,
            _ => return Err(CaseError::validation("case.csv must hold exactly one row")),
        }
    } else {
        DEFAULT_BASE_MVA
    };

    let buses = read_table::<BusRecord>(&dir.join("bus.csv"))?
        .into_iter()
        .map(|r| Bus {
            id: r.id,
            kind: r.kind,
            v_mag: r.v_mag,
            v_ang: r.v_ang_deg.to_radians(),
            p_load: r.p_load_mw / base_mva,
            q_load: r.q_load_mvar / base_mva,
            g_sh: r.g_sh,
            b_sh: r.b_sh,
        })
        .collect();
    let mut branches = Vec::new();
    for r in read_table::<BranchRecord>(&dir.join("branch.csv"))? {
        if r.status > 1 {
            return Err(CaseError::validation(format!("branch {}: status must be 0 or 1", r.id)));
        }
        branches.push(Branch {
            id: r.id,
            from_bus: r.from,
            to_bus: r.to,
            r: r.r_pu,
            x: r.x_pu,
            b_ch: r.b_ch_pu,
            in_service: r.status == 1,
        });
    }
    let gen_path = dir.join("gen.csv");
    let generators = if gen_path.exists() {
        read_table::<GenRecord>(&gen_path)?
            .into_iter()
            .map(|r| Generator {
                label: r.label,
                bus: r.bus,
                p_set: r.p_mw / base_mva,
                v_set: r.v_set,
                h: r.h_s,
                d: r.d_pu,
                xd_p: r.xdp_pu,
                mva_base: r.mva,
            })
            .collect()
    } else {
        Vec::new()
    };
    GridCase::new(base_mva, buses, branches, generators)
}

fn write_err(path: &Path, e: impl Into<io::Error>) -> CaseError {
    CaseError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_table<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Writes `case` to `dir` in the same layout [`load_case`] reads.
pub fn save_case(case: &GridCase, dir: impl AsRef<Path>) -> Result<(), CaseError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    let base = case.base_mva;
    if base != DEFAULT_BASE_MVA {
        write_table(&dir.join("case.csv"), [BaseRecord { base_mva: base }])?;
    }
    write_table(
        &dir.join("bus.csv"),
        case.buses.iter().map(|b| BusRecord {
            id: b.id,
            kind: b.kind,
            v_mag: b.v_mag,
            v_ang_deg: b.v_ang.to_degrees(),
            p_load_mw: b.p_load * base,
            q_load_mvar: b.q_load * base,
            g_sh: b.g_sh,
            b_sh: b.b_sh,
        }),
    )?;
    write_table(
        &dir.join("branch.csv"),
        case.branches.iter().map(|b| BranchRecord {
            id: b.id,
            from: b.from_bus,
            to: b.to_bus,
            r_pu: b.r,
            x_pu: b.x,
            b_ch_pu: b.b_ch,
            status: u8::from(b.in_service),
        }),
    )?;
    write_table(
        &dir.join("gen.csv"),
        case.generators.iter().map(|g| GenRecord {
            label: g.label.clone(),
            bus: g.bus,
            p_mw: g.p_set * base,
            v_set: g.v_set,
            h_s: g.h,
            d_pu: g.d,
            xdp_pu: g.xd_p,
            mva: g.mva_base,
        }),
    )
}

/// Reads an event file. A `fault` row starts a fault on the branch; an
/// `open` row clears a pending fault on the same branch (and opens it) or,
/// with no fault pending, simply opens the branch.
pub fn load_events(path: impl AsRef<Path>, case: &GridCase) -> Result<EventSchedule, CaseError> {
    let path = path.as_ref();
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let rows: Vec<EventRecord> = read_table(path)?;
    let mut pending = BTreeSet::new();
    let mut events = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        let kind = match r.kind.as_str() {
            "fault" => {
                pending.insert(r.branch_id);
                EventKind::FaultOnLine
            }
            "open" => {
                if pending.remove(&r.branch_id) {
                    EventKind::ClearAndOpenLine
                } else {
                    EventKind::OpenLine
                }
            }
            other => {
                return Err(CaseError::Parse {
                    file,
                    line: i as u64 + 2,
                    column: 2,
                    message: format!("unknown event kind {other:?} (expected fault or open)"),
                })
            }
        };
        events.push(Event {
            time: r.t_s,
            kind,
            branch: r.branch_id,
        });
    }
    EventSchedule::new(events, case)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn bus(id: u32, kind: BusKind) -> Bus {
        Bus {
            id,
            kind,
            v_mag: 1.0,
            v_ang: 0.0,
            p_load: 0.0,
            q_load: 0.0,
            g_sh: 0.0,
            b_sh: 0.0,
        }
    }

    pub(crate) fn line(id: u32, from: u32, to: u32, x: f64) -> Branch {
        Branch {
            id,
            from_bus: from,
            to_bus: to,
            r: 0.0,
            x,
            b_ch: 0.0,
            in_service: true,
        }
    }

    pub(crate) fn machine(label: &str, bus: u32, p: f64) -> Generator {
        Generator {
            label: label.to_string(),
            bus,
            p_set: p,
            v_set: 1.0,
            h: 5.0,
            d: 0.0,
            xd_p: 0.2,
            mva_base: 100.0,
        }
    }

    #[test]
    fn single_slack_without_branches_is_valid() {
        let case = GridCase::new(100.0, vec![bus(1, BusKind::Slack)], vec![], vec![]).unwrap();
        assert_eq!(case.bus_count(), 1);
        assert!(case.is_connected(&BTreeSet::new()));
    }

    #[test]
    fn two_slack_buses_rejected() {
        let err = GridCase::new(
            100.0,
            vec![bus(1, BusKind::Slack), bus(2, BusKind::Slack)],
            vec![line(1, 1, 2, 0.1)],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("multiple slack buses"), "{err}");
    }

    #[test]
    fn branch_invariants_name_the_record() {
        let buses = vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)];
        let err = GridCase::new(100.0, buses.clone(), vec![line(7, 1, 1, 0.1)], vec![]).unwrap_err();
        assert!(err.to_string().contains("branch 7"), "{err}");
        let err = GridCase::new(100.0, buses.clone(), vec![line(3, 1, 9, 0.1)], vec![]).unwrap_err();
        assert!(err.to_string().contains("unknown bus 9"), "{err}");
        let mut zero = line(4, 1, 2, 0.0);
        zero.r = 0.0;
        let err = GridCase::new(100.0, buses, vec![zero], vec![]).unwrap_err();
        assert!(err.to_string().contains("zero impedance"), "{err}");
    }

    #[test]
    fn generator_invariants() {
        let buses = vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv)];
        let lines = vec![line(1, 1, 2, 0.1)];
        let mut g = machine("G1", 2, 0.5);
        g.h = 0.0;
        let err = GridCase::new(100.0, buses.clone(), lines.clone(), vec![g]).unwrap_err();
        assert!(err.to_string().contains("G1"), "{err}");
        let err = GridCase::new(100.0, buses, lines, vec![machine("G1", 2, 0.5), machine("G2", 2, 0.5)]).unwrap_err();
        assert!(err.to_string().contains("already has a generator"), "{err}");
    }

    #[test]
    fn disconnected_case_rejected() {
        let err = GridCase::new(100.0, vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)], vec![], vec![]).unwrap_err();
        assert!(err.to_string().contains("not connected"));
    }

    #[test]
    fn single_generator_map() {
        let case = GridCase::new(100.0, vec![bus(1, BusKind::Slack)], vec![], vec![machine("G1", 1, 0.0)]).unwrap();
        let map = generator_bus_map(&case);
        assert_eq!(map.len(), 1);
        assert_eq!(map.bus_of("G1"), Some(1));
        assert_eq!(map.label_at(1), Some("G1"));
    }

    #[test]
    fn event_schedule_rules() {
        let case = GridCase::new(
            100.0,
            vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
            vec![line(1, 1, 2, 0.1), line(2, 1, 2, 0.1)],
            vec![],
        )
        .unwrap();
        let ev = |time, kind, branch| Event { time, kind, branch };
        assert!(EventSchedule::new(
            vec![
                ev(1.0, EventKind::FaultOnLine, 1),
                ev(1.1, EventKind::ClearAndOpenLine, 1)
            ],
            &case
        )
        .is_ok());
        let unordered = EventSchedule::new(
            vec![ev(2.0, EventKind::OpenLine, 1), ev(1.0, EventKind::OpenLine, 2)],
            &case,
        );
        assert!(unordered.unwrap_err().to_string().contains("non-decreasing"));
        let unknown = EventSchedule::new(vec![ev(1.0, EventKind::OpenLine, 9)], &case);
        assert!(unknown.unwrap_err().to_string().contains("unknown branch 9"));
        let unmatched = EventSchedule::new(vec![ev(1.0, EventKind::FaultOnLine, 1)], &case);
        assert!(unmatched.unwrap_err().to_string().contains("never cleared"));
    }
}
