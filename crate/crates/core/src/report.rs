//! Text artifacts: CSV matrices, group lists, partition JSON, DOT graphs,
//! trajectories. Renderers return strings so callers can write everything
//! at once; parsers take file contents.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::coherency::{CoherencyError, CoherencyGroups, KsMatrix};
use crate::grid::GridCase;
use crate::partition::{IslandingResult, WeightedGraph};
use crate::power_flow::{BranchFlow, BusMatrix};
use crate::transient::{SyncLossReport, Trajectories};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error(transparent)]
    Coherency(#[from] CoherencyError),
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> ReportError {
    ReportError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// kVA per pu on the given base.
pub fn kva_per_pu(base_mva: f64) -> f64 {
    base_mva * 1000.0
}

pub fn render_flows_csv(case: &GridCase, flows: &[BranchFlow]) -> String {
    let b = case.base_mva;
    let mut out = String::from("branch_id,from,to,p_from_mw,q_from_mvar,s_from_mva,p_to_mw,q_to_mvar,s_to_mva\n");
    for f in flows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            f.branch,
            f.from_bus,
            f.to_bus,
            f.p_from * b,
            f.q_from * b,
            f.s_from * b,
            f.p_to * b,
            f.q_to * b,
            f.s_to * b
        );
    }
    out
}

fn render_square(corner: &str, names: &[String], m: &DMatrix<f64>, scale: f64, digits: usize) -> String {
    let mut out = String::from(corner);
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, n) in names.iter().enumerate() {
        out.push_str(n);
        for j in 0..names.len() {
            let _ = write!(out, ",{:.*}", digits, m[(i, j)] * scale);
        }
        out.push('\n');
    }
    out
}

fn parse_square(file: &str, text: &str, corner: &str) -> Result<(Vec<String>, DMatrix<f64>), ReportError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(file, 1, "empty file"))?;
    let mut cols = header.split(',').map(str::trim);
    if cols.next() != Some(corner) {
        return Err(parse_err(file, 1, format!("header must start with {corner:?}")));
    }
    let names: Vec<String> = cols.map(String::from).collect();
    let n = names.len();
    let mut m = DMatrix::zeros(n, n);
    let mut row = 0;
    for (ln, line) in lines {
        let mut cells = line.split(',').map(str::trim);
        let name = cells.next().unwrap_or_default();
        if row >= n {
            return Err(parse_err(file, ln + 1, "more rows than header columns"));
        }
        if name != names[row] {
            return Err(parse_err(
                file,
                ln + 1,
                format!("row label {name:?}, expected {:?}", names[row]),
            ));
        }
        let vals: Vec<&str> = cells.collect();
        if vals.len() != n {
            return Err(parse_err(file, ln + 1, format!("{} values, expected {n}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            m[(row, j)] = v
                .parse::<f64>()
                .map_err(|e| parse_err(file, ln + 1, format!("column {}: {e}", j + 2)))?;
        }
        row += 1;
    }
    if row != n {
        return Err(parse_err(file, row + 2, format!("{row} rows, expected {n}")));
    }
    Ok((names, m))
}

/// Bus apparent-power matrix in kVA.
pub fn render_smatrix_csv(m: &BusMatrix, base_mva: f64) -> String {
    let names: Vec<String> = m.bus_ids.iter().map(|b| b.to_string()).collect();
    render_square("bus", &names, &m.values, kva_per_pu(base_mva), 3)
}

/// Reads a kVA bus matrix, reorders it to the case's bus order and converts
/// to pu.
pub fn parse_smatrix_csv(file: &str, text: &str, case: &GridCase) -> Result<BusMatrix, ReportError> {
    let (names, m) = parse_square(file, text, "bus")?;
    let n = case.bus_count();
    if names.len() != n {
        return Err(parse_err(file, 1, format!("{} buses, case has {n}", names.len())));
    }
    let mut pos = Vec::with_capacity(n);
    for name in &names {
        let id: u32 = name
            .parse()
            .map_err(|_| parse_err(file, 1, format!("bad bus id {name:?}")))?;
        pos.push(
            case.bus_index(id)
                .ok_or_else(|| parse_err(file, 1, format!("unknown bus {id}")))?,
        );
    }
    let scale = 1.0 / kva_per_pu(case.base_mva);
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(parse_err(file, i + 2, format!("entry {v} is not a nonnegative number")));
            }
            if v != m[(j, i)] {
                return Err(parse_err(
                    file,
                    i + 2,
                    format!("entry ({},{}) is not symmetric", names[i], names[j]),
                ));
            }
            values[(pos[i], pos[j])] = v * scale;
        }
    }
    Ok(BusMatrix {
        bus_ids: case.bus_ids(),
        values,
    })
}

pub fn render_gen_matrix_csv(labels: &[String], m: &DMatrix<f64>) -> String {
    render_square("gen", labels, m, 1.0, 9)
}

/// Reads a Ks matrix and symmetrizes it as (A + Aᵀ)/2.
pub fn parse_ks_csv(file: &str, text: &str) -> Result<KsMatrix, ReportError> {
    let (names, a) = parse_square(file, text, "gen")?;
    let sym = (&a + a.transpose()) * 0.5;
    Ok(KsMatrix::new(names, sym)?)
}

pub fn render_groups(groups: &CoherencyGroups) -> String {
    groups.groups.iter().map(|g| g.join(",") + "\n").collect()
}

pub fn parse_groups(file: &str, text: &str) -> Result<CoherencyGroups, ReportError> {
    let mut groups = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        for l in &g {
            if l.is_empty() || !seen.insert(l.clone()) {
                return Err(parse_err(file, ln + 1, format!("empty or repeated label {l:?}")));
            }
        }
        groups.push(g);
    }
    if groups.is_empty() {
        return Err(parse_err(file, 1, "no groups"));
    }
    Ok(CoherencyGroups { groups })
}

#[derive(Serialize)]
struct CutJson {
    branch: u32,
    from: u32,
    to: u32,
    s_kva: f64,
}

#[derive(Serialize)]
struct BalanceJson {
    island: usize,
    p_imbalance_mw: f64,
    q_imbalance_mvar: f64,
}

#[derive(Serialize)]
struct ConstraintJson {
    ml_pairs: Vec<(u32, u32)>,
    cl_pairs: Vec<(u32, u32)>,
    keep_edges: Vec<u32>,
    anchors: Vec<u32>,
    ml_satisfied: bool,
    cl_satisfied: bool,
    keep_satisfied: bool,
}

#[derive(Serialize)]
struct PartitionJson {
    islands: Vec<Vec<u32>>,
    cutset: Vec<CutJson>,
    total_kva: f64,
    balance: Vec<BalanceJson>,
    constraints: ConstraintJson,
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    let r = (x * s).round() / s;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn render_partition_json(res: &IslandingResult, base_mva: f64) -> String {
    let kva = kva_per_pu(base_mva);
    let part = &res.partition;
    let cons = &res.constraints;
    let doc = PartitionJson {
        islands: part.islands(),
        cutset: res
            .cutset
            .edges
            .iter()
            .map(|e| CutJson {
                branch: e.branch,
                from: e.from,
                to: e.to,
                s_kva: round_to(e.weight * kva, 6),
            })
            .collect(),
        total_kva: round_to(res.cutset.total * kva, 6),
        balance: res
            .cutset
            .balance
            .iter()
            .enumerate()
            .map(|(i, b)| BalanceJson {
                island: i,
                p_imbalance_mw: round_to(b.p_imbalance * base_mva, 6),
                q_imbalance_mvar: round_to(b.q_imbalance * base_mva, 6),
            })
            .collect(),
        constraints: ConstraintJson {
            ml_pairs: cons.ml_pairs.iter().copied().collect(),
            cl_pairs: cons.cl_pairs.iter().copied().collect(),
            keep_edges: cons.keep_edges.iter().copied().collect(),
            anchors: cons.anchors.clone(),
            ml_satisfied: cons
                .ml_pairs
                .iter()
                .all(|&(a, b)| part.island_of(a) == part.island_of(b)),
            cl_satisfied: cons
                .cl_pairs
                .iter()
                .all(|&(a, b)| part.island_of(a) != part.island_of(b)),
            keep_satisfied: res.cutset.edges.iter().all(|e| !cons.keep_edges.contains(&e.branch)),
        },
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes") + "\n"
}

const COLORS: [&str; 8] = [
    "lightblue",
    "lightsalmon",
    "palegreen",
    "khaki",
    "plum",
    "lightgray",
    "lightpink",
    "aquamarine",
];

pub fn render_islands_dot(res: &IslandingResult, g: &WeightedGraph, base_mva: f64) -> String {
    let kva = kva_per_pu(base_mva);
    let mut out = String::from("graph islands {\n  node [style=filled];\n");
    for (i, &b) in g.bus_ids.iter().enumerate() {
        let c = res.partition.labels[i];
        let _ = writeln!(out, "  {b} [fillcolor={}, group={c}];", COLORS[c % COLORS.len()]);
    }
    for e in &g.edges {
        let cut = res.partition.labels[e.a] != res.partition.labels[e.b];
        let _ = writeln!(
            out,
            "  {} -- {} [label=\"{:.0}\"{}];",
            g.bus_ids[e.a],
            g.bus_ids[e.b],
            e.weight * kva,
            if cut { ", style=dashed, color=red" } else { "" }
        );
    }
    out.push_str("}\n");
    out
}

pub fn render_traj_csv(traj: &Trajectories) -> String {
    let mut out = String::from("t_s");
    for l in &traj.labels {
        let _ = write!(out, ",delta_{l}_deg");
    }
    for l in &traj.labels {
        let _ = write!(out, ",omega_{l}");
    }
    out.push('\n');
    for s in 0..traj.steps() {
        let _ = write!(out, "{:.6}", traj.times[s]);
        for d in &traj.delta[s] {
            let _ = write!(out, ",{:.6}", d.to_degrees());
        }
        for w in &traj.omega[s] {
            let _ = write!(out, ",{:.8}", w);
        }
        out.push('\n');
    }
    out
}

pub fn render_correlation_csv(bus_ids: &[u32], m: &DMatrix<f64>) -> String {
    let names: Vec<String> = bus_ids.iter().map(|b| b.to_string()).collect();
    render_square("bus", &names, m, 1.0, 6)
}

pub fn render_sync_summary(report: &SyncLossReport, threshold: f64) -> String {
    let mut out = format!("threshold_deg,{:.3}\n", threshold.to_degrees());
    let _ = writeln!(out, "unstable,{}", report.unstable);
    match report.t_loss {
        Some(t) => {
            let _ = writeln!(out, "t_loss_s,{t:.6}");
        }
        None => out.push_str("t_loss_s,\n"),
    }
    out
}
