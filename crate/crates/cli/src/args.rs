use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "islanding",
    version,
    about = "Controlled islanding: power flow, generator coherency, constrained partitioning, transient runs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the power flow; writes flows.csv and smatrix.csv.
    Pf(Options),
    /// Group generators; writes psync.csv, ks.csv and groups.txt.
    Coherency(Options),
    /// Split the network; writes partition.json, islands.dot and, after a
    /// simulated run, correlation.csv.
    Island(Options),
    /// Run the event schedule; writes traj.csv and sync.csv.
    Simulate(Options),
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Case directory holding bus.csv, branch.csv and gen.csv.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Event schedule (t_s,kind,branch_id).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Number of coherent groups; chosen by eigengap when absent.
    #[arg(long)]
    pub k: Option<usize>,
    /// Operating instant in seconds. With --events and no --at-time the
    /// instant is the loss-of-synchronism time minus --lead.
    #[arg(long = "at-time")]
    pub at_time: Option<f64>,
    /// Seconds before loss of synchronism at which to split.
    #[arg(long, default_value_t = 0.1)]
    pub lead: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 8.0)]
    pub horizon: f64,
    /// Bus pairs whose branches may not be cut, e.g. 16-17,4-5.
    #[arg(long)]
    pub keep: Option<KeepPairs>,
    /// Ks matrix to group instead of computing it from the network.
    #[arg(long = "ks-file")]
    pub ks_file: Option<PathBuf>,
    /// Bus apparent-power matrix in kVA to partition instead of solving.
    #[arg(long = "smatrix-file")]
    pub smatrix_file: Option<PathBuf>,
    /// Coherent groups, one comma-separated line per group.
    #[arg(long = "groups-file")]
    pub groups_file: Option<PathBuf>,
    /// Split the network before loss of synchronism and continue the run.
    #[arg(long = "apply-islanding")]
    pub apply_islanding: bool,
    /// Loss-of-synchronism angle spread, degrees.
    #[arg(long, default_value_t = 180.0)]
    pub threshold: f64,
    /// Trailing window for the bus-angle correlation report, seconds.
    #[arg(long, default_value_t = 0.5)]
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepPairs(pub Vec<(u32, u32)>);

impl FromStr for KeepPairs {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (a, b) = p
                    .trim()
                    .split_once('-')
                    .ok_or_else(|| format!("expected A-B, got {p:?}"))?;
                let a = a.trim().parse().map_err(|_| format!("bad bus id in {p:?}"))?;
                let b = b.trim().parse().map_err(|_| format!("bad bus id in {p:?}"))?;
                Ok((a, b))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(KeepPairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_pairs() {
        assert_eq!(
            "16-17, 4-5".parse::<KeepPairs>().unwrap(),
            KeepPairs(vec![(16, 17), (4, 5)])
        );
        assert!("16".parse::<KeepPairs>().is_err());
        assert!("a-b".parse::<KeepPairs>().is_err());
    }
}
