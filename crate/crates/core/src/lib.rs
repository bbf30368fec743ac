//! Controlled islanding of power networks.
//!
//! The pipeline runs a power flow, reduces the network to generator
//! internal nodes, groups coherent generators from their synchronizing
//! power coefficients, and splits the bus graph along the cheapest
//! apparent-power cut that keeps every coherent group together. A
//! classical-model swing simulator supplies mid-transient snapshots and
//! checks the split afterwards.

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherency;
pub mod grid;
pub mod linalg;
pub mod partition;
pub mod power_flow;
pub mod report;
pub mod transient;

pub use coherency::{
    choose_k, ks_matrix, normalized_laplacian, psync_matrix, spectral_coherency, CoherencyError, CoherencyGroups,
    KsMatrix, NormalizedLaplacian, PsyncMatrix,
};
pub use grid::{
    generator_bus_map, load_case, load_events, save_case, Branch, Bus, BusKind, CaseError, Event, EventKind,
    EventSchedule, Generator, GeneratorBusMap, GridCase,
};
pub use partition::{
    build_constraints, build_graph, constrained_embedding, cutset, enforce_connectivity, island, island_graph,
    kmedoids, projection_basis, ConstraintSet, Cutset, Embedding, IslandingResult, Partition, PartitionError,
    ProjectionBasis, WeightedGraph,
};
pub use power_flow::{
    apparent_power_matrix, branch_flows, build_ybus, kron_reduce, solve_power_flow, AdmittanceMatrix, BranchFlow,
    BusMatrix, PowerFlowError, PowerFlowSolution, ReducedNetwork,
};
pub use transient::{
    detect_loss_of_sync, simulate, snapshot_at, MachineState, SimConfig, SimError, Snapshot, SyncLossReport,
    Trajectories,
};
