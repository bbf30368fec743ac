//! Constrained spectral islanding: bus graph weighted by apparent power,
//! must-link constraints as a subspace projection, generalized eigen
//! embedding, k-medoids, connectivity repair and cutset extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::coherency::{self, CoherencyGroups, NormalizedLaplacian};
use crate::grid::{GeneratorBusMap, GridCase};
use crate::linalg::{self, LinalgError};
use crate::power_flow::BusMatrix;

/// Degree given to buses with no incident flow before normalization.
pub const DEGREE_FLOOR: f64 = 1e-9;

const EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("matrix has {found} buses, graph expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("bus {0} is not in the network")]
    UnknownBus(u32),
    #[error("branch {0} does not exist or is out of service")]
    UnknownBranch(u32),
    #[error("generator {0} is not in the case")]
    UnknownGenerator(String),
    #[error("invalid edge weight {weight} on branch {branch}")]
    BadWeight { branch: u32, weight: f64 },
    #[error("infeasible constraints: must-link closure joins cannot-link pair ({0}, {1})")]
    Infeasible(u32, u32),
    #[error("seeds must be {k} distinct node indices below {n}")]
    BadSeeds { k: usize, n: usize },
    #[error("k = {k} exceeds the {p} available dimensions")]
    TooManyClusters { k: usize, p: usize },
    #[error("buses {0:?} cannot be joined to any island")]
    Unreachable(Vec<u32>),
    #[error("island {0} ended up empty")]
    EmptyIsland(usize),
    #[error("keep edge {0} would be cut")]
    KeepEdgeCut(u32),
    #[error("cannot-link pair ({0}, {1}) ended in the same island")]
    CannotLink(u32, u32),
    #[error("must-link pair ({0}, {1}) was split")]
    MustLink(u32, u32),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphEdge {
    pub branch: u32,
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected multigraph over bus positions; one edge per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub bus_ids: Vec<u32>,
    pub edges: Vec<GraphEdge>,
    adj: Vec<Vec<usize>>,
}

impl WeightedGraph {
    pub fn new(bus_ids: Vec<u32>, edges: Vec<GraphEdge>) -> Result<Self, PartitionError> {
        let n = bus_ids.len();
        let mut adj = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(PartitionError::UnknownBranch(e.branch));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(PartitionError::BadWeight {
                    branch: e.branch,
                    weight: e.weight,
                });
            }
            adj[e.a].push(k);
            adj[e.b].push(k);
        }
        Ok(WeightedGraph { bus_ids, edges, adj })
    }

    pub fn node_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn index_of(&self, bus: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus)
    }

    /// Neighbours of `i` with the weight of each connecting edge.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adj[i].iter().map(move |&k| {
            let e = &self.edges[k];
            (if e.a == i { e.b } else { e.a }, e.weight)
        })
    }

    /// Total weight between two nodes over all parallel edges.
    pub fn weight_between(&self, i: usize, j: usize) -> f64 {
        self.neighbors(i).filter(|&(v, _)| v == j).map(|(_, w)| w).sum()
    }

    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut w = DMatrix::zeros(n, n);
        for e in &self.edges {
            w[(e.a, e.b)] += e.weight;
            w[(e.b, e.a)] += e.weight;
        }
        w
    }

    pub fn scaled(&self, c: f64) -> WeightedGraph {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight *= c;
        }
        g
    }

    /// True when `nodes` (non-empty) induce a connected subgraph.
    pub fn is_connected_subset(&self, nodes: &[bool]) -> bool {
        let Some(start) = nodes.iter().position(|&x| x) else {
            return false;
        };
        let total = nodes.iter().filter(|&&x| x).count();
        self.reach(nodes, start).len() == total
    }

    fn reach(&self, nodes: &[bool], start: usize) -> Vec<usize> {
        let mut seen = vec![false; nodes.len()];
        seen[start] = true;
        let mut out = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for (v, _) in self.neighbors(u) {
                if nodes[v] && !seen[v] {
                    seen[v] = true;
                    out.push(v);
                    queue.push_back(v);
                }
            }
        }
        out
    }

    /// Components of the subgraph induced by `nodes`, each sorted, ordered
    /// by smallest member.
    fn components(&self, nodes: &[bool]) -> Vec<Vec<usize>> {
        let mut done = vec![false; nodes.len()];
        let mut out = Vec::new();
        for s in 0..nodes.len() {
            if nodes[s] && !done[s] {
                let mut comp = self.reach(nodes, s);
                comp.sort_unstable();
                for &v in &comp {
                    done[v] = true;
                }
                out.push(comp);
            }
        }
        out
    }
}

/// One edge per in-service branch. Parallel branches share the matrix entry
/// equally so the pair total matches the matrix.
pub fn build_graph(smatrix: &BusMatrix, case: &GridCase) -> Result<WeightedGraph, PartitionError> {
    let n = case.bus_count();
    if smatrix.values.shape() != (n, n) || smatrix.bus_ids.len() != n {
        return Err(PartitionError::Dimension {
            expected: n,
            found: smatrix.values.nrows(),
        });
    }
    let ids = case.bus_ids();
    if smatrix.bus_ids != ids {
        return Err(PartitionError::Dimension {
            expected: n,
            found: smatrix.bus_ids.len(),
        });
    }
    let mut parallel: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let live: Vec<_> = case.branches.iter().filter(|b| b.in_service).collect();
    for br in &live {
        let a = case.bus_index(br.from_bus).expect("validated");
        let b = case.bus_index(br.to_bus).expect("validated");
        *parallel.entry((a.min(b), a.max(b))).or_default() += 1;
    }
    let edges = live
        .iter()
        .map(|br| {
            let a = case.bus_index(br.from_bus).expect("validated");
            let b = case.bus_index(br.to_bus).expect("validated");
            let count = parallel[&(a.min(b), a.max(b))] as f64;
            let s = 0.5 * (smatrix.values[(a, b)] + smatrix.values[(b, a)]);
            GraphEdge {
                branch: br.id,
                a,
                b,
                weight: s / count,
            }
        })
        .collect();
    WeightedGraph::new(ids, edges)
}

fn pair(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub ml_pairs: BTreeSet<(u32, u32)>,
    pub cl_pairs: BTreeSet<(u32, u32)>,
    pub keep_edges: BTreeSet<u32>,
    /// One representative bus per group; island c is seeded at `anchors[c]`.
    pub anchors: Vec<u32>,
}

impl ConstraintSet {
    pub fn new(ml: impl IntoIterator<Item = (u32, u32)>, anchors: Vec<u32>, keep_edges: BTreeSet<u32>) -> Self {
        let ml_pairs = ml
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| pair(a, b))
            .collect();
        let mut cl_pairs = BTreeSet::new();
        for (i, &a) in anchors.iter().enumerate() {
            for &b in &anchors[i + 1..] {
                cl_pairs.insert(pair(a, b));
            }
        }
        ConstraintSet {
            ml_pairs,
            cl_pairs,
            keep_edges,
            anchors,
        }
    }

    /// Must-link classes over `bus_ids`: class id per node (the smallest
    /// node index of the class).
    pub fn ml_classes(&self, bus_ids: &[u32]) -> Result<Vec<usize>, PartitionError> {
        let pos = |b: u32| {
            bus_ids
                .iter()
                .position(|&x| x == b)
                .ok_or(PartitionError::UnknownBus(b))
        };
        let mut uf = UnionFind::new(bus_ids.len());
        for &(a, b) in &self.ml_pairs {
            uf.union(pos(a)?, pos(b)?);
        }
        for &a in &self.anchors {
            pos(a)?;
        }
        Ok((0..bus_ids.len()).map(|i| uf.find(i)).collect())
    }

    pub fn check_feasible(&self, bus_ids: &[u32]) -> Result<(), PartitionError> {
        let class = self.ml_classes(bus_ids)?;
        for &(a, b) in &self.cl_pairs {
            let ia = bus_ids
                .iter()
                .position(|&x| x == a)
                .ok_or(PartitionError::UnknownBus(a))?;
            let ib = bus_ids
                .iter()
                .position(|&x| x == b)
                .ok_or(PartitionError::UnknownBus(b))?;
            if class[ia] == class[ib] {
                return Err(PartitionError::Infeasible(a, b));
            }
        }
        Ok(())
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    // the smaller index becomes the root, so roots are class minima
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Must-link pairs within each group and across every keep edge;
/// cannot-link between group representatives. The representative is the
/// member whose label sorts first.
pub fn build_constraints(
    groups: &CoherencyGroups,
    gmap: &GeneratorBusMap,
    keep: &[u32],
    case: &GridCase,
) -> Result<ConstraintSet, PartitionError> {
    let mut ml = Vec::new();
    let mut anchors = Vec::with_capacity(groups.len());
    for g in &groups.groups {
        let mut buses = Vec::with_capacity(g.len());
        for label in g {
            buses.push(
                gmap.bus_of(label)
                    .ok_or_else(|| PartitionError::UnknownGenerator(label.clone()))?,
            );
        }
        for i in 0..buses.len() {
            for j in i + 1..buses.len() {
                ml.push((buses[i], buses[j]));
            }
        }
        let rep = g.iter().min().expect("groups are non-empty");
        anchors.push(gmap.bus_of(rep).expect("checked above"));
    }
    let mut keep_edges = BTreeSet::new();
    for &id in keep {
        let br = case
            .branch(id)
            .filter(|b| b.in_service)
            .ok_or(PartitionError::UnknownBranch(id))?;
        ml.push((br.from_bus, br.to_bus));
        keep_edges.insert(id);
    }
    let cons = ConstraintSet::new(ml, anchors, keep_edges);
    cons.check_feasible(&case.bus_ids())?;
    Ok(cons)
}

/// Orthonormal basis of {x : x_i = x_j for every must-link pair}.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    pub q: DMatrix<f64>,
    /// Must-link class of every node (smallest node index in the class).
    pub class: Vec<usize>,
}

impl ProjectionBasis {
    pub fn dim(&self) -> usize {
        self.q.ncols()
    }
}

pub fn projection_basis(cons: &ConstraintSet, bus_ids: &[u32]) -> Result<ProjectionBasis, PartitionError> {
    let class = cons.ml_classes(bus_ids)?;
    let n = bus_ids.len();
    let roots: BTreeSet<usize> = class.iter().copied().collect();
    let col: BTreeMap<usize, usize> = roots.iter().enumerate().map(|(c, &r)| (r, c)).collect();
    let mut size = vec![0usize; roots.len()];
    for &r in &class {
        size[col[&r]] += 1;
    }
    let mut q = DMatrix::zeros(n, roots.len());
    for (i, &r) in class.iter().enumerate() {
        let c = col[&r];
        q[(i, c)] = 1.0 / (size[c] as f64).sqrt();
    }
    Ok(ProjectionBasis { q, class })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// n×k, one row per node.
    pub j: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// The reduced-space eigenvectors (p×k) behind `j`.
    pub u: DMatrix<f64>,
}

/// Embeds nodes with the k smallest generalized eigenvectors of
/// (Q̃ᵀ L Q̃) u = λ (Q̃ᵀ Q̃) u, Q̃ = D^(1/2)·Q, and returns J = Q·U.
///
/// This is the normalized-cut relaxation restricted to the must-link
/// subspace: with Q = I it is (D − W) u = λ D u. Working in the unscaled
/// coordinates keeps must-linked rows of J identical.
pub fn constrained_embedding(
    l: &NormalizedLaplacian,
    q: &ProjectionBasis,
    k: usize,
) -> Result<Embedding, PartitionError> {
    let p = q.dim();
    if k > p || k == 0 {
        return Err(PartitionError::TooManyClusters { k, p });
    }
    let n = q.q.nrows();
    let sqrt_d = DMatrix::from_fn(n, n, |i, j| if i == j { l.degree[i].sqrt() } else { 0.0 });
    let qt = &sqrt_d * &q.q;
    let a = qt.transpose() * &l.values * &qt;
    let b = qt.transpose() * &qt;
    let eig = linalg::generalized_sym_eigen(&a, &b)?;
    let u = eig.vectors.columns(0, k).into_owned();
    Ok(Embedding {
        j: &q.q * &u,
        eigenvalues: eig.values.iter().take(k).copied().collect(),
        u,
    })
}

fn distance_table(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = points.nrows();
    (0..n)
        .map(|i| (0..n).map(|j| (points.row(i) - points.row(j)).norm()).collect())
        .collect()
}

fn pam(points: &DMatrix<f64>, seeds: &[usize], pinned: &[Option<usize>]) -> Result<Vec<usize>, PartitionError> {
    let n = points.nrows();
    let k = seeds.len();
    let distinct: BTreeSet<_> = seeds.iter().collect();
    if k == 0 || distinct.len() != k || seeds.iter().any(|&s| s >= n) {
        return Err(PartitionError::BadSeeds { k, n });
    }
    let d = distance_table(points);
    let assign = |med: &[usize]| -> (Vec<usize>, f64) {
        let mut labels = vec![0; n];
        let mut cost = 0.0;
        for i in 0..n {
            let c = match pinned[i] {
                Some(c) => c,
                None => {
                    let mut best = 0;
                    for c in 1..k {
                        if d[i][med[c]] < d[i][med[best]] {
                            best = c;
                        }
                    }
                    best
                }
            };
            labels[i] = c;
            cost += d[i][med[c]];
        }
        (labels, cost)
    };
    let mut med = seeds.to_vec();
    let (mut labels, mut cost) = assign(&med);
    // each accepted swap strictly lowers the cost, so this terminates
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for h in 0..n {
                if med.contains(&h) {
                    continue;
                }
                let mut trial = med.clone();
                trial[slot] = h;
                let (_, c) = assign(&trial);
                let bar = best.map_or(cost, |b| b.0);
                if c < bar - EPS * (1.0 + bar.abs()) {
                    best = Some((c, slot, h));
                }
            }
        }
        let Some((c, slot, h)) = best else { break };
        med[slot] = h;
        cost = c;
        labels = assign(&med).0;
    }
    Ok(labels)
}

/// PAM k-medoids started at `seeds` (k = seeds.len()). Distance ties go to
/// the earlier seed slot; swap ties to the lower slot, then lower node.
pub fn kmedoids(points: &DMatrix<f64>, seeds: &[usize]) -> Result<Vec<usize>, PartitionError> {
    pam(points, seeds, &vec![None; points.nrows()])
}

/// PAM where every seed, and every node given in `pins`, keeps a fixed
/// cluster regardless of where the medoids move.
pub fn kmedoids_pinned(
    points: &DMatrix<f64>,
    seeds: &[usize],
    pins: &[(usize, usize)],
) -> Result<Vec<usize>, PartitionError> {
    let n = points.nrows();
    let mut pinned = vec![None; n];
    for (c, &s) in seeds.iter().enumerate() {
        if s < n {
            pinned[s] = Some(c);
        }
    }
    for &(i, c) in pins {
        if i >= n || c >= seeds.len() {
            return Err(PartitionError::BadSeeds { k: seeds.len(), n });
        }
        pinned[i] = Some(c);
    }
    pam(points, seeds, &pinned)
}

/// k disjoint, non-empty bus sets, stored as an island label per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub bus_ids: Vec<u32>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Partition {
    pub fn new(bus_ids: Vec<u32>, labels: Vec<usize>, k: usize) -> Result<Self, PartitionError> {
        if labels.len() != bus_ids.len() {
            return Err(PartitionError::Dimension {
                expected: bus_ids.len(),
                found: labels.len(),
            });
        }
        for c in 0..k {
            if !labels.contains(&c) {
                return Err(PartitionError::EmptyIsland(c));
            }
        }
        if labels.iter().any(|&c| c >= k) {
            return Err(PartitionError::EmptyIsland(k));
        }
        Ok(Partition { bus_ids, labels, k })
    }

    /// Builds a partition from explicit bus sets (each bus exactly once).
    pub fn from_islands(bus_ids: &[u32], islands: &[Vec<u32>]) -> Result<Self, PartitionError> {
        let mut labels = vec![usize::MAX; bus_ids.len()];
        for (c, isl) in islands.iter().enumerate() {
            for &b in isl {
                let i = bus_ids
                    .iter()
                    .position(|&x| x == b)
                    .ok_or(PartitionError::UnknownBus(b))?;
                labels[i] = c;
            }
        }
        if let Some(i) = labels.iter().position(|&c| c == usize::MAX) {
            return Err(PartitionError::Unreachable(vec![bus_ids[i]]));
        }
        Partition::new(bus_ids.to_vec(), labels, islands.len())
    }

    /// Bus ids of each island, ascending.
    pub fn islands(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.k];
        for (&b, &c) in self.bus_ids.iter().zip(&self.labels) {
            out[c].push(b);
        }
        for isl in &mut out {
            isl.sort_unstable();
        }
        out
    }

    pub fn island_of(&self, bus: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.labels[i])
    }

    fn members(&self, c: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l == c).collect()
    }

    pub fn is_connected(&self, g: &WeightedGraph) -> bool {
        (0..self.k).all(|c| g.is_connected_subset(&self.members(c)))
    }
}

struct Anchoring {
    class: Vec<usize>,
    class_size: Vec<usize>,
    /// Node index of each island's anchor, if it has one.
    anchor: Vec<Option<usize>>,
    is_anchor_class: Vec<bool>,
}

impl Anchoring {
    fn new(part: &Partition, g: &WeightedGraph, cons: &ConstraintSet) -> Result<Self, PartitionError> {
        let class = cons.ml_classes(&g.bus_ids)?;
        let n = g.node_count();
        let mut class_size = vec![0; n];
        for &c in &class {
            class_size[c] += 1;
        }
        let mut anchor = vec![None; part.k];
        let mut is_anchor_class = vec![false; n];
        for &a in &cons.anchors {
            let i = g.index_of(a).ok_or(PartitionError::UnknownBus(a))?;
            is_anchor_class[class[i]] = true;
            let c = part.labels[i];
            if anchor[c].is_none() {
                anchor[c] = Some(i);
            }
        }
        Ok(Anchoring {
            class,
            class_size,
            anchor,
            is_anchor_class,
        })
    }

    fn pinned(&self, i: usize) -> bool {
        self.class_size[self.class[i]] > 1 || self.is_anchor_class[self.class[i]]
    }
}

/// Reassigns stray fragments until every island is connected.
///
/// A fragment that holds only unconstrained buses, or whole must-link
/// classes without an anchor, moves to the adjacent island it shares the
/// most weight with (lowest island on ties). A fragment holding part of a
/// constrained class stays and is joined back to its anchor component along
/// the shortest path of unconstrained buses, which switch island. When no
/// such path exists the constraints win: the fragment stays, disconnected,
/// and a warning is logged.
pub fn enforce_connectivity(
    part: &Partition,
    g: &WeightedGraph,
    cons: &ConstraintSet,
) -> Result<Partition, PartitionError> {
    let n = g.node_count();
    let mut labels = part.labels.clone();
    let anch = Anchoring::new(part, g, cons)?;
    // buses already used by a join path never move again, which bounds
    // the number of joins and rules out tug-of-war between islands
    let mut locked = vec![false; n];
    let guard = 4 * n * part.k.max(1) + 16;
    for _ in 0..guard {
        let main = main_components(g, &labels, part.k, &anch);
        let mut fragments = Vec::new();
        for c in 0..part.k {
            let stray: Vec<bool> = (0..n).map(|i| labels[i] == c && !main[i]).collect();
            for comp in g.components(&stray) {
                fragments.push((c, comp));
            }
        }
        if fragments.is_empty() {
            return Partition::new(part.bus_ids.clone(), labels, part.k);
        }
        let mut moved = false;
        for (c, frag) in &fragments {
            let c = *c;
            if movable(frag, &anch, &locked) {
                // only main components are targets, so every move grows one
                let mut shared: BTreeMap<usize, f64> = BTreeMap::new();
                for &i in frag {
                    for (v, w) in g.neighbors(i) {
                        if labels[v] != c && main[v] {
                            *shared.entry(labels[v]).or_default() += w;
                        }
                    }
                }
                let mut target: Option<(usize, f64)> = None;
                for (&isl, &w) in &shared {
                    if target.is_none_or(|(_, bw)| w > bw + EPS) {
                        target = Some((isl, w));
                    }
                }
                if let Some((dst, _)) = target {
                    for &i in frag {
                        labels[i] = dst;
                    }
                    moved = true;
                    break;
                }
            } else {
                let home: Vec<usize> = (0..n).filter(|&i| labels[i] == c && main[i]).collect();
                let path = join_path(g, &labels, c, frag, &home, &anch, &locked, false)
                    .or_else(|| join_path(g, &labels, c, frag, &home, &anch, &locked, true));
                if let Some(path) = path {
                    for i in path {
                        labels[i] = c;
                        locked[i] = true;
                    }
                    moved = true;
                    break;
                }
                if let Some((set, dst)) = class_move(g, &labels, c, frag, &anch, &locked) {
                    for i in set {
                        labels[i] = dst;
                        locked[i] = true;
                    }
                    moved = true;
                    break;
                }
            }
        }
        if moved {
            continue;
        }
        for (c, frag) in &fragments {
            let buses: Vec<u32> = frag.iter().map(|&i| g.bus_ids[i]).collect();
            if movable(frag, &anch, &locked) && frag.iter().all(|&i| g.neighbors(i).all(|(v, _)| labels[v] == *c)) {
                return Err(PartitionError::Unreachable(buses));
            }
            log::warn!("island {c}: buses {buses:?} cannot be reconnected without breaking a constraint");
        }
        return Partition::new(part.bus_ids.clone(), labels, part.k);
    }
    Err(PartitionError::Unreachable(Vec::new()))
}

/// Fallback when a fragment cannot be joined back: move it together with
/// every must-link class it touches into a neighbouring island, provided
/// none of those classes holds an anchor and the grown island stays
/// connected. Picks the island sharing the most weight.
fn class_move(
    g: &WeightedGraph,
    labels: &[usize],
    c: usize,
    frag: &[usize],
    anch: &Anchoring,
    locked: &[bool],
) -> Option<(Vec<usize>, usize)> {
    let n = g.node_count();
    let classes: BTreeSet<usize> = frag.iter().map(|&i| anch.class[i]).collect();
    if classes.iter().any(|&cl| anch.is_anchor_class[cl]) {
        return None;
    }
    let set: Vec<usize> = (0..n)
        .filter(|&i| frag.contains(&i) || classes.contains(&anch.class[i]))
        .collect();
    if set.iter().any(|&i| locked[i]) {
        return None;
    }
    let mut shared: BTreeMap<usize, f64> = BTreeMap::new();
    for &i in &set {
        for (v, w) in g.neighbors(i) {
            if labels[v] != c {
                *shared.entry(labels[v]).or_default() += w;
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (&dst, &w) in &shared {
        let grown: Vec<bool> = (0..n).map(|i| labels[i] == dst || set.contains(&i)).collect();
        if g.is_connected_subset(&grown) && best.is_none_or(|(_, bw)| w > bw + EPS) {
            best = Some((dst, w));
        }
    }
    best.map(|(dst, _)| (set, dst))
}

/// A fragment may change island when it holds no anchor class and every
/// must-link class it touches lies entirely inside it.
fn movable(frag: &[usize], anch: &Anchoring, locked: &[bool]) -> bool {
    frag.iter().all(|&i| {
        let cl = anch.class[i];
        !locked[i]
            && !anch.is_anchor_class[cl]
            && (0..anch.class.len())
                .filter(|&j| anch.class[j] == cl)
                .all(|j| frag.contains(&j))
    })
}

/// Marks nodes in their island's main component: the one holding the
/// anchor, else the largest (first on ties).
fn main_components(g: &WeightedGraph, labels: &[usize], k: usize, anch: &Anchoring) -> Vec<bool> {
    let mut main = vec![false; labels.len()];
    for c in 0..k {
        let members: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let comps = g.components(&members);
        let pick = match anch.anchor[c] {
            Some(a) => comps.iter().find(|comp| comp.contains(&a)),
            None => comps
                .iter()
                .reduce(|best, comp| if comp.len() > best.len() { comp } else { best }),
        };
        for &i in pick.into_iter().flatten() {
            main[i] = true;
        }
    }
    main
}

/// Shortest path (in hops) from `frag` to `home` whose interior nodes are
/// unconstrained or already in island `c`; returns interior nodes that must
/// switch to `c`. With `through_classes` the path may also cross unanchored
/// must-link classes, which then switch as a whole.
#[allow(clippy::too_many_arguments)]
fn join_path(
    g: &WeightedGraph,
    labels: &[usize],
    c: usize,
    frag: &[usize],
    home: &[usize],
    anch: &Anchoring,
    locked: &[bool],
    through_classes: bool,
) -> Option<Vec<usize>> {
    let n = g.node_count();
    let members = |x: usize| (0..n).filter(move |&j| anch.class[j] == anch.class[x]);
    let passable = |v: usize| {
        if labels[v] == c {
            return true;
        }
        if through_classes {
            !anch.is_anchor_class[anch.class[v]] && members(v).all(|j| !locked[j])
        } else {
            !(anch.pinned(v) || locked[v])
        }
    };
    let is_home: Vec<bool> = (0..n).map(|i| home.contains(&i)).collect();
    let mut prev = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for &s in frag {
        seen[s] = true;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        let mut nbrs: Vec<usize> = g.neighbors(u).map(|(v, _)| v).collect();
        nbrs.sort_unstable();
        for v in nbrs {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            prev[v] = u;
            if is_home[v] {
                let mut out = BTreeSet::new();
                let mut x = u;
                while !frag.contains(&x) {
                    if labels[x] != c {
                        out.extend(members(x).filter(|&j| labels[j] != c));
                    }
                    x = prev[x];
                }
                return Some(out.into_iter().collect());
            }
            if passable(v) {
                queue.push_back(v);
            }
        }
    }
    None
}

fn cut_weight(g: &WeightedGraph, labels: &[usize]) -> f64 {
    g.edges
        .iter()
        .filter(|e| labels[e.a] != labels[e.b])
        .map(|e| e.weight)
        .sum()
}

/// Local improvement of a connected, anchored partition by passes of
/// Fiduccia-Mattheyses style moves over must-link classes. A move takes a
/// class together with whatever of its source island would be cut off from
/// that island's anchor, so islands stay connected throughout. Classes that
/// hold an anchor never move. Each pass keeps its best prefix; passes repeat
/// while the cut drops. Without anchors the partition is returned as is.
pub fn refine(part: &Partition, g: &WeightedGraph, cons: &ConstraintSet) -> Result<Partition, PartitionError> {
    let n = g.node_count();
    let anch = Anchoring::new(part, g, cons)?;
    if anch.anchor.iter().any(|a| a.is_none()) {
        return Ok(part.clone());
    }
    let anchor: Vec<usize> = anch.anchor.iter().map(|a| a.expect("checked")).collect();
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        classes.entry(anch.class[i]).or_default().push(i);
    }

    let mut labels = part.labels.clone();
    let mut cur = cut_weight(g, &labels);
    loop {
        let mut locked: BTreeSet<usize> = classes.keys().copied().filter(|&r| anch.is_anchor_class[r]).collect();
        let mut trial = labels.clone();
        let mut c = cur;
        let mut best = (cur, labels.clone());
        loop {
            let mut cand: Option<(f64, Vec<usize>, usize)> = None;
            for (&r, members) in &classes {
                if locked.contains(&r) {
                    continue;
                }
                let Some((src, mv)) = compound_move(g, &trial, members, &anchor, &anch, &classes) else {
                    continue;
                };
                let in_mv: Vec<bool> = (0..n).map(|i| mv.contains(&i)).collect();
                for dst in 0..part.k {
                    if dst == src {
                        continue;
                    }
                    let joined: Vec<bool> = (0..n).map(|i| trial[i] == dst || in_mv[i]).collect();
                    if !g.is_connected_subset(&joined) {
                        continue;
                    }
                    let mut gain = 0.0;
                    for &i in &mv {
                        for (j, w) in g.neighbors(i) {
                            if in_mv[j] {
                                continue;
                            }
                            if trial[j] == src {
                                gain -= w;
                            } else if trial[j] == dst {
                                gain += w;
                            }
                        }
                    }
                    if cand.as_ref().is_none_or(|(bg, _, _)| gain > bg + EPS) {
                        cand = Some((gain, mv.clone(), dst));
                    }
                }
            }
            let Some((gain, mv, dst)) = cand else { break };
            for &i in &mv {
                trial[i] = dst;
                locked.insert(anch.class[i]);
            }
            c -= gain;
            if c < best.0 - EPS * (1.0 + best.0.abs()) {
                best = (c, trial.clone());
            }
        }
        if best.0 < cur - EPS * (1.0 + cur.abs()) {
            cur = cut_weight(g, &best.1);
            labels = best.1;
        } else {
            return Partition::new(part.bus_ids.clone(), labels, part.k);
        }
    }
}

fn compound_move(
    g: &WeightedGraph,
    trial: &[usize],
    members: &[usize],
    anchor: &[usize],
    anch: &Anchoring,
    classes: &BTreeMap<usize, Vec<usize>>,
) -> Option<(usize, Vec<usize>)> {
    let n = g.node_count();
    let src = trial[members[0]];
    let mut mv = vec![false; n];
    for &i in members {
        mv[i] = true;
    }
    let rest: Vec<bool> = (0..n).map(|i| trial[i] == src && !mv[i]).collect();
    if !rest[anchor[src]] {
        return None;
    }
    let kept = g.reach(&rest, anchor[src]);
    let mut keep = vec![false; n];
    for i in kept {
        keep[i] = true;
    }
    for i in 0..n {
        if rest[i] && !keep[i] {
            mv[i] = true;
        }
    }
    // pull in the rest of every class touched
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if mv[i] {
                for &j in &classes[&anch.class[i]] {
                    if !mv[j] {
                        mv[j] = true;
                        changed = true;
                    }
                }
            }
        }
    }
    if mv[anchor[src]] {
        return None;
    }
    let remain: Vec<bool> = (0..n).map(|i| trial[i] == src && !mv[i]).collect();
    if !g.is_connected_subset(&remain) {
        return None;
    }
    Some((src, (0..n).filter(|&i| mv[i]).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutEdge {
    pub branch: u32,
    pub from: u32,
    pub to: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IslandBalance {
    /// Scheduled generation minus load, pu.
    pub p_imbalance: f64,
    /// Net reactive load, negated (machine reactive output is not scheduled).
    pub q_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cutset {
    pub edges: Vec<CutEdge>,
    pub total: f64,
    pub balance: Vec<IslandBalance>,
}

impl Cutset {
    pub fn branches(&self) -> Vec<u32> {
        self.edges.iter().map(|e| e.branch).collect()
    }

    /// Fills the per-island balance from the case schedule.
    pub fn with_balance(mut self, part: &Partition, case: &GridCase) -> Self {
        let mut bal = vec![
            IslandBalance {
                p_imbalance: 0.0,
                q_imbalance: 0.0,
            };
            part.k
        ];
        for b in &case.buses {
            if let Some(c) = part.island_of(b.id) {
                bal[c].p_imbalance -= b.p_load;
                bal[c].q_imbalance -= b.q_load;
            }
        }
        for gen in &case.generators {
            if let Some(c) = part.island_of(gen.bus) {
                bal[c].p_imbalance += gen.p_set;
            }
        }
        self.balance = bal;
        self
    }
}

/// Crossing edges in graph order and their total weight.
pub fn cutset(part: &Partition, g: &WeightedGraph, keep: &BTreeSet<u32>) -> Result<Cutset, PartitionError> {
    let mut edges = Vec::new();
    for e in &g.edges {
        if part.labels[e.a] != part.labels[e.b] {
            if keep.contains(&e.branch) {
                return Err(PartitionError::KeepEdgeCut(e.branch));
            }
            edges.push(CutEdge {
                branch: e.branch,
                from: g.bus_ids[e.a],
                to: g.bus_ids[e.b],
                weight: e.weight,
            });
        }
    }
    let total = edges.iter().map(|e| e.weight).sum();
    Ok(Cutset {
        edges,
        total,
        balance: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandingResult {
    pub partition: Partition,
    pub cutset: Cutset,
    pub constraints: ConstraintSet,
    pub embedding: Embedding,
}

/// The pipeline on a prepared graph: Laplacian, projection, embedding,
/// pinned k-medoids at the anchors, connectivity repair, refinement, cut.
/// k is the number of anchors; without anchors, `k` seeds are chosen by
/// farthest-first traversal of the embedding.
pub fn island_graph(g: &WeightedGraph, cons: &ConstraintSet, k: usize) -> Result<IslandingResult, PartitionError> {
    let n = g.node_count();
    cons.check_feasible(&g.bus_ids)?;
    let k = if cons.anchors.is_empty() { k } else { cons.anchors.len() };
    let l = coherency::normalized_laplacian_floored(&g.weight_matrix(), DEGREE_FLOOR)
        .map_err(|e| PartitionError::Weights(e.to_string()))?;
    let q = projection_basis(cons, &g.bus_ids)?;
    let embedding = constrained_embedding(&l, &q, k.max(1))?;

    let labels = if k <= 1 {
        vec![0; n]
    } else if cons.anchors.is_empty() {
        let seeds = coherency::farthest_first(&embedding.j, k);
        kmedoids(&embedding.j, &seeds)?
    } else {
        let seeds: Vec<usize> = cons
            .anchors
            .iter()
            .map(|&a| g.index_of(a).ok_or(PartitionError::UnknownBus(a)))
            .collect::<Result<_, _>>()?;
        let mut pins = Vec::new();
        for (c, &s) in seeds.iter().enumerate() {
            for i in 0..n {
                if q.class[i] == q.class[s] {
                    pins.push((i, c));
                }
            }
        }
        kmedoids_pinned(&embedding.j, &seeds, &pins)?
    };
    let k = k.max(1);
    let part = Partition::new(g.bus_ids.clone(), labels, k)?;
    let part = enforce_connectivity(&part, g, cons)?;
    let part = refine(&part, g, cons)?;
    let cut = cutset(&part, g, &cons.keep_edges)?;

    for &(a, b) in &cons.ml_pairs {
        if part.island_of(a) != part.island_of(b) {
            return Err(PartitionError::MustLink(a, b));
        }
    }
    for &(a, b) in &cons.cl_pairs {
        if part.island_of(a) == part.island_of(b) {
            return Err(PartitionError::CannotLink(a, b));
        }
    }
    Ok(IslandingResult {
        partition: part,
        cutset: cut,
        constraints: cons.clone(),
        embedding,
    })
}

/// Full islanding from a bus apparent-power matrix and coherent groups.
pub fn island(
    smatrix: &BusMatrix,
    case: &GridCase,
    groups: &CoherencyGroups,
    gmap: &GeneratorBusMap,
    keep: &[u32],
) -> Result<IslandingResult, PartitionError> {
    let g = build_graph(smatrix, case)?;
    let cons = build_constraints(groups, gmap, keep, case)?;
    let mut res = island_graph(&g, &cons, groups.len())?;
    res.cutset = res.cutset.with_balance(&res.partition, case);
    Ok(res)
}
