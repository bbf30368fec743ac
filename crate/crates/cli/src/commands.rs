use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use island_core::coherency::{default_k_max, normalized_laplacian_floored, PsyncMatrix};
use island_core::partition::DEGREE_FLOOR;
use island_core::report::{
    parse_groups, parse_ks_csv, parse_smatrix_csv, render_correlation_csv, render_flows_csv, render_gen_matrix_csv,
    render_groups, render_islands_dot, render_partition_json, render_smatrix_csv, render_sync_summary, render_traj_csv,
};
use island_core::transient::angle_correlation;
use island_core::{
    apparent_power_matrix, branch_flows, build_graph, choose_k, detect_loss_of_sync, generator_bus_map, island,
    kron_reduce, ks_matrix, load_case, load_events, psync_matrix, simulate, snapshot_at, solve_power_flow,
    spectral_coherency, BusMatrix, CoherencyGroups, EventSchedule, GridCase, IslandingResult, KsMatrix, ReducedNetwork,
    SimConfig, Snapshot, SyncLossReport, Trajectories,
};

use crate::{Artifacts, CliError, Command, Options};

/// What a command produced: files to write and a short report for stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: String,
}

/// Runs a command entirely in memory. Nothing touches the output directory.
pub fn run(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Pf(o) => cmd_pf(o),
        Command::Coherency(o) => cmd_coherency(o),
        Command::Island(o) => cmd_island(o),
        Command::Simulate(o) => cmd_simulate(o),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn case_of(o: &Options) -> Result<GridCase, CliError> {
    let dir = o
        .case
        .as_ref()
        .ok_or_else(|| CliError::Input("--case is required".into()))?;
    Ok(load_case(dir)?)
}

fn schedule_of(o: &Options, case: &GridCase) -> Result<EventSchedule, CliError> {
    match &o.events {
        Some(p) => Ok(load_events(p, case)?),
        None => Ok(EventSchedule::empty()),
    }
}

fn sim_config(o: &Options) -> Result<SimConfig, CliError> {
    if !(o.lead > 0.0) {
        return Err(CliError::Input(format!("--lead must be positive, got {}", o.lead)));
    }
    if !(o.window > 0.0) {
        return Err(CliError::Input(format!("--window must be positive, got {}", o.window)));
    }
    Ok(SimConfig {
        horizon: o.horizon,
        dt: o.dt,
        ..SimConfig::default()
    })
}

fn threshold(o: &Options) -> Result<f64, CliError> {
    if !(o.threshold >= 0.0) {
        return Err(CliError::Input(format!(
            "--threshold must be non-negative, got {}",
            o.threshold
        )));
    }
    Ok(o.threshold.to_radians())
}

fn cmd_pf(o: &Options) -> Result<Outcome, CliError> {
    let case = case_of(o)?;
    let sol = solve_power_flow(&case)?;
    if !sol.converged {
        return Err(CliError::Numeric(format!(
            "power flow did not converge in {} iterations (max mismatch {:.3e} pu)",
            sol.iterations, sol.max_mismatch
        )));
    }
    let flows = branch_flows(&case, &sol);
    let s = apparent_power_matrix(&case, &flows);
    let mut art = Artifacts::default();
    art.add("flows.csv", render_flows_csv(&case, &flows));
    art.add("smatrix.csv", render_smatrix_csv(&s, case.base_mva));
    Ok(Outcome {
        artifacts: art,
        summary: format!(
            "power flow converged in {} iterations, max mismatch {:.3e} pu\n",
            sol.iterations, sol.max_mismatch
        ),
    })
}

/// The operating point a command works on: the solved base case, or a
/// simulated instant.
enum Operating {
    Static(GridCase),
    Dynamic {
        case: GridCase,
        traj: Box<Trajectories>,
        snap: Box<Snapshot>,
        report: SyncLossReport,
    },
}

impl Operating {
    fn resolve(o: &Options) -> Result<Self, CliError> {
        let case = case_of(o)?;
        if o.at_time.is_none() && o.events.is_none() {
            return Ok(Operating::Static(case));
        }
        let events = schedule_of(o, &case)?;
        let traj = simulate(&case, &events, &sim_config(o)?)?;
        let report = detect_loss_of_sync(&traj, threshold(o)?);
        let t = split_time(o, &report)?;
        let snap = snapshot_at(&traj, t)?;
        Ok(Operating::Dynamic {
            case,
            traj: Box::new(traj),
            snap: Box::new(snap),
            report,
        })
    }

    fn case(&self) -> &GridCase {
        match self {
            Operating::Static(c) => c,
            Operating::Dynamic { case, .. } => case,
        }
    }

    /// The case with branches open at this instant taken out of service.
    fn topology(&self) -> GridCase {
        match self {
            Operating::Static(c) => c.clone(),
            Operating::Dynamic { case, snap, .. } => snap.topology(case),
        }
    }

    fn reduced(&self) -> Result<ReducedNetwork, CliError> {
        match self {
            Operating::Static(c) => {
                let sol = converged(c)?;
                Ok(kron_reduce(c, &sol)?)
            }
            Operating::Dynamic { snap, .. } => Ok(snap.reduced.clone()),
        }
    }

    fn smatrix(&self) -> Result<BusMatrix, CliError> {
        match self {
            Operating::Static(c) => {
                let sol = converged(c)?;
                Ok(apparent_power_matrix(c, &branch_flows(c, &sol)))
            }
            Operating::Dynamic { snap, .. } => Ok(snap.smatrix.clone()),
        }
    }

    fn describe(&self) -> String {
        match self {
            Operating::Static(_) => "static base case".into(),
            Operating::Dynamic { snap, report, .. } => match report.t_loss {
                Some(t) => format!("t = {:.3} s (loss of synchronism at {t:.3} s)", snap.time),
                None => format!("t = {:.3} s (no loss of synchronism)", snap.time),
            },
        }
    }
}

fn converged(case: &GridCase) -> Result<island_core::PowerFlowSolution, CliError> {
    let sol = solve_power_flow(case)?;
    if !sol.converged {
        return Err(CliError::Numeric(format!(
            "power flow did not converge (max mismatch {:.3e} pu)",
            sol.max_mismatch
        )));
    }
    Ok(sol)
}

fn split_time(o: &Options, report: &SyncLossReport) -> Result<f64, CliError> {
    if let Some(t) = o.at_time {
        return Ok(t);
    }
    let t_loss = report
        .t_loss
        .ok_or_else(|| CliError::Input("the run keeps synchronism; give --at-time to pick an instant".into()))?;
    let t = t_loss - o.lead;
    if t < 0.0 {
        return Err(CliError::Input(format!(
            "loss of synchronism at {t_loss} s is earlier than --lead {} s",
            o.lead
        )));
    }
    Ok(t)
}

struct Grouping {
    psync: Option<PsyncMatrix>,
    ks: KsMatrix,
    groups: CoherencyGroups,
    k: usize,
}

fn group(ks: KsMatrix, k: Option<usize>, psync: Option<PsyncMatrix>) -> Result<Grouping, CliError> {
    let m = ks.labels.len();
    let k = match k {
        Some(k) => k,
        None => {
            let l = normalized_laplacian_floored(&ks.weights(), DEGREE_FLOOR)?;
            choose_k(&l, default_k_max(m))?
        }
    };
    let groups = spectral_coherency(&ks, k)?;
    Ok(Grouping { psync, ks, groups, k })
}

fn grouping_from_network(red: &ReducedNetwork, k: Option<usize>) -> Result<Grouping, CliError> {
    let p = psync_matrix(red);
    let ks = ks_matrix(&p)?;
    group(ks, k, Some(p))
}

fn grouping_artifacts(g: &Grouping, art: &mut Artifacts) {
    if let Some(p) = &g.psync {
        art.add("psync.csv", render_gen_matrix_csv(&p.labels, &p.values));
    }
    art.add("ks.csv", render_gen_matrix_csv(&g.ks.labels, &g.ks.values));
    art.add("groups.txt", render_groups(&g.groups));
}

fn describe_groups(g: &Grouping) -> String {
    let list: Vec<String> = g.groups.groups.iter().map(|x| format!("{{{}}}", x.join(","))).collect();
    format!("k = {}: {}\n", g.k, list.join(" "))
}

fn cmd_coherency(o: &Options) -> Result<Outcome, CliError> {
    let mut art = Artifacts::default();
    let mut summary = String::new();
    let g = match &o.ks_file {
        Some(p) => group(parse_ks_csv(&file_name(p), &read(p)?)?, o.k, None)?,
        None => {
            let op = Operating::resolve(o)?;
            let _ = writeln!(summary, "operating point: {}", op.describe());
            let g = grouping_from_network(&op.reduced()?, o.k)?;
            if let Some(p) = &g.psync {
                if p.flipped {
                    summary.push_str("psync sign convention flipped\n");
                }
                if p.clamped > 0 {
                    let _ = writeln!(summary, "{} negative psync pairs clamped to zero", p.clamped / 2);
                }
            }
            g
        }
    };
    grouping_artifacts(&g, &mut art);
    summary.push_str(&describe_groups(&g));
    Ok(Outcome {
        artifacts: art,
        summary,
    })
}

fn keep_branches(o: &Options, case: &GridCase) -> Result<Vec<u32>, CliError> {
    let mut out = Vec::new();
    if let Some(pairs) = &o.keep {
        for &(a, b) in &pairs.0 {
            let ids: Vec<u32> = case
                .branches_between(a, b)
                .into_iter()
                .filter(|&id| case.branch(id).is_some_and(|br| br.in_service))
                .collect();
            if ids.is_empty() {
                return Err(CliError::Input(format!(
                    "--keep {a}-{b}: no in-service branch joins these buses"
                )));
            }
            out.extend(ids);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

struct Split {
    result: IslandingResult,
    grouping: Option<Grouping>,
    artifacts: Artifacts,
    summary: String,
}

/// Partitions at the resolved operating point and renders the island
/// artifacts.
fn split(o: &Options, op: Option<&Operating>) -> Result<Split, CliError> {
    let mut summary = String::new();
    let owned;
    let lazy = || Operating::resolve(o);
    // the operating point is only needed when something is computed from it
    let needs_op = o.smatrix_file.is_none() || (o.groups_file.is_none() && o.ks_file.is_none());
    let op: Option<&Operating> = match op {
        Some(op) => Some(op),
        None if needs_op => {
            owned = lazy()?;
            Some(&owned)
        }
        None => None,
    };
    if let Some(op) = op {
        let _ = writeln!(summary, "operating point: {}", op.describe());
    }
    let base_case = match op {
        Some(op) => op.case().clone(),
        None => case_of(o)?,
    };
    let topo = match op {
        Some(op) => op.topology(),
        None => base_case.clone(),
    };

    let grouping = match (&o.groups_file, &o.ks_file, op) {
        (Some(_), _, _) => None,
        (None, Some(p), _) => Some(group(parse_ks_csv(&file_name(p), &read(p)?)?, o.k, None)?),
        (None, None, Some(op)) => Some(grouping_from_network(&op.reduced()?, o.k)?),
        (None, None, None) => unreachable!("operating point resolved above"),
    };
    let groups = match (&o.groups_file, &grouping) {
        (Some(p), _) => parse_groups(&file_name(p), &read(p)?)?,
        (None, Some(g)) => g.groups.clone(),
        (None, None) => unreachable!("grouping computed above"),
    };
    let smatrix = match (&o.smatrix_file, op) {
        (Some(p), _) => parse_smatrix_csv(&file_name(p), &read(p)?, &topo)?,
        (None, Some(op)) => op.smatrix()?,
        (None, None) => unreachable!("operating point resolved above"),
    };

    let keep = keep_branches(o, &topo)?;
    let gmap = generator_bus_map(&topo);
    let result = island(&smatrix, &topo, &groups, &gmap, &keep)?;
    let graph = build_graph(&smatrix, &topo)?;

    let mut art = Artifacts::default();
    if let Some(g) = &grouping {
        grouping_artifacts(g, &mut art);
        summary.push_str(&describe_groups(g));
    }
    art.add("partition.json", render_partition_json(&result, topo.base_mva));
    art.add("islands.dot", render_islands_dot(&result, &graph, topo.base_mva));
    if let Some(Operating::Dynamic { traj, snap, .. }) = op {
        let c = angle_correlation(traj, snap.time, o.window)?;
        art.add("correlation.csv", render_correlation_csv(&topo.bus_ids(), &c));
    }
    let kva = island_core::report::kva_per_pu(topo.base_mva);
    let _ = writeln!(
        summary,
        "{} islands, {} cut branches, disruption {:.3} kVA",
        result.partition.k,
        result.cutset.edges.len(),
        result.cutset.total * kva
    );
    for (i, isl) in result.partition.islands().iter().enumerate() {
        let ids: Vec<String> = isl.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(summary, "  island {i}: {}", ids.join(" "));
    }
    Ok(Split {
        result,
        grouping,
        artifacts: art,
        summary,
    })
}

fn cmd_island(o: &Options) -> Result<Outcome, CliError> {
    let s = split(o, None)?;
    Ok(Outcome {
        artifacts: s.artifacts,
        summary: s.summary,
    })
}

fn sync_lines(report: &SyncLossReport, thr: f64) -> String {
    render_sync_summary(report, thr)
}

fn cmd_simulate(o: &Options) -> Result<Outcome, CliError> {
    let case = case_of(o)?;
    let events = schedule_of(o, &case)?;
    let cfg = sim_config(o)?;
    let thr = threshold(o)?;
    let traj = simulate(&case, &events, &cfg)?;
    let report = detect_loss_of_sync(&traj, thr);
    let mut art = Artifacts::default();
    let mut summary = match report.t_loss {
        Some(t) => format!("loss of synchronism at {t:.3} s\n"),
        None => format!("synchronism kept over {:.3} s\n", traj.horizon()),
    };
    if !o.apply_islanding || !report.unstable {
        if o.apply_islanding {
            summary.push_str("no split applied\n");
        }
        art.add("traj.csv", render_traj_csv(&traj));
        art.add("sync.csv", sync_lines(&report, thr));
        return Ok(Outcome {
            artifacts: art,
            summary,
        });
    }

    let t = split_time(o, &report)?;
    let snap = snapshot_at(&traj, t)?;
    let op = Operating::Dynamic {
        case: case.clone(),
        traj: Box::new(traj.clone()),
        snap: Box::new(snap.clone()),
        report: report.clone(),
    };
    let s = split(o, Some(&op))?;
    let cut = s.result.cutset.branches();
    // later events on branches the split already opened no longer apply
    let kept: Vec<_> = events
        .events()
        .iter()
        .filter(|e| {
            let moot = e.time > snap.time && cut.contains(&e.branch);
            if moot {
                log::warn!(
                    "dropping {:?} on branch {} at {} s: opened by the split",
                    e.kind,
                    e.branch,
                    e.time
                );
            }
            !moot
        })
        .cloned()
        .collect();
    let schedule = EventSchedule::new(kept, &case)?.with_openings(snap.time, &cut, &case)?;
    let after = simulate(&case, &schedule, &cfg)?;
    let after_report = detect_loss_of_sync(&after, thr);

    let mut sync = sync_lines(&after_report, thr);
    let _ = writeln!(sync, "split_time_s,{:.6}", snap.time);
    match report.t_loss {
        Some(t) => {
            let _ = writeln!(sync, "unsplit_t_loss_s,{t:.6}");
        }
        None => sync.push_str("unsplit_t_loss_s,\n"),
    }
    let max_spread = after.spread[snap.step..]
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(0.0, f64::max);
    let _ = writeln!(sync, "max_island_spread_after_split_deg,{:.6}", max_spread.to_degrees());

    art.add("traj_unsplit.csv", render_traj_csv(&traj));
    art.add("traj.csv", render_traj_csv(&after));
    art.add("sync.csv", sync);
    for (name, body) in s.artifacts.files {
        art.add(&name, body);
    }
    summary.push_str(&s.summary);
    let _ = writeln!(
        summary,
        "split at {:.3} s opening branches {:?}; {}; max island spread afterwards {:.1} deg",
        snap.time,
        cut,
        if after_report.unstable {
            "synchronism still lost"
        } else {
            "islands stay in step"
        },
        max_spread.to_degrees()
    );
    let _ = s.grouping;
    Ok(Outcome {
        artifacts: art,
        summary,
    })
}
