//! Generator coupling from synchronizing power coefficients and spectral
//! grouping of coherent machines.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::partition;
use crate::power_flow::ReducedNetwork;

#[derive(Debug, Error)]
pub enum CoherencyError {
    #[error("coupling matrix has no nonzero off-diagonal entry")]
    AllZero,
    #[error("node {0} is isolated (zero degree)")]
    IsolatedNode(usize),
    #[error("weight matrix is invalid: {0}")]
    InvalidWeights(String),
    #[error("k = {k} is outside 2..={max}")]
    BadK { k: usize, max: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Cluster(#[from] partition::PartitionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsyncMatrix {
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
    /// True when the global sign was flipped by convention detection.
    pub flipped: bool,
    /// Off-diagonal entries clamped from negative to zero.
    pub clamped: usize,
}

/// Share of negative −B off-diagonals above which the global sign flips.
pub const FLIP_SHARE: f64 = 0.9;

/// Synchronizing power coefficients |E_i||E_j|(−B_ij)cos(δ_i − δ_j).
///
/// Which sign the coupling term carries depends on the admittance
/// convention, so it is detected on the angle-free factor −B_ij: when at
/// least [`FLIP_SHARE`] of the nonzero off-diagonal −B_ij are negative the
/// whole matrix is negated. Negative entries left after that are clamped to
/// zero.
pub fn psync_matrix(red: &ReducedNetwork) -> PsyncMatrix {
    let m = red.labels.len();
    let mut neg = 0usize;
    let mut nonzero = 0usize;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let nb = -red.y[(i, j)].im;
                if nb != 0.0 {
                    nonzero += 1;
                    if nb < 0.0 {
                        neg += 1;
                    }
                }
            }
        }
    }
    let flipped = nonzero > 0 && neg as f64 >= FLIP_SHARE * nonzero as f64;
    let sign = if flipped { -1.0 } else { 1.0 };
    let mut values = DMatrix::zeros(m, m);
    let mut clamped = 0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            // both triangles from the symmetric part so the result is exactly symmetric
            let b = 0.5 * (red.y[(i, j)].im + red.y[(j, i)].im);
            let v = sign * red.e_mag[i] * red.e_mag[j] * (-b) * (red.delta[i] - red.delta[j]).cos();
            if v < 0.0 {
                clamped += 1;
            } else {
                values[(i, j)] = v;
            }
        }
    }
    if clamped > 0 {
        log::warn!("psync: clamped {} negative coefficients to zero", clamped / 2);
    }
    PsyncMatrix {
        labels: red.labels.clone(),
        values,
        flipped,
        clamped: clamped / 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsMatrix {
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl KsMatrix {
    /// Checks the matrix invariants (square, entries in [0,1], unit
    /// diagonal, symmetric).
    pub fn new(labels: Vec<String>, values: DMatrix<f64>) -> Result<Self, CoherencyError> {
        let m = labels.len();
        if values.shape() != (m, m) {
            return Err(CoherencyError::InvalidWeights(format!(
                "{}x{} matrix for {m} labels",
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..m {
            if (values[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(CoherencyError::InvalidWeights(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..m {
                let v = values[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(CoherencyError::InvalidWeights(format!(
                        "entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
                if (v - values[(j, i)]).abs() > 1e-12 {
                    return Err(CoherencyError::InvalidWeights(format!(
                        "entry ({i},{j}) is not symmetric"
                    )));
                }
            }
        }
        Ok(KsMatrix { labels, values })
    }

    /// Off-diagonal weights (diagonal zeroed) for graph use.
    pub fn weights(&self) -> DMatrix<f64> {
        let mut w = self.values.clone();
        w.fill_diagonal(0.0);
        w
    }
}

pub fn ks_matrix(p: &PsyncMatrix) -> Result<KsMatrix, CoherencyError> {
    let m = p.labels.len();
    let mut max = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                max = max.max(p.values[(i, j)].abs());
            }
        }
    }
    if max == 0.0 {
        return Err(CoherencyError::AllZero);
    }
    let values = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { p.values[(i, j)].abs() / max });
    Ok(KsMatrix {
        labels: p.labels.clone(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLaplacian {
    pub values: DMatrix<f64>,
    /// Degrees used for normalization (after any floor).
    pub degree: Vec<f64>,
}

fn check_weights(w: &DMatrix<f64>) -> Result<(), CoherencyError> {
    let (r, c) = w.shape();
    if r != c {
        return Err(CoherencyError::InvalidWeights(format!("{r}x{c} matrix is not square")));
    }
    for i in 0..r {
        if w[(i, i)] != 0.0 {
            return Err(CoherencyError::InvalidWeights(format!("nonzero diagonal at {i}")));
        }
        for j in 0..r {
            let v = w[(i, j)];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CoherencyError::InvalidWeights(format!("entry ({i},{j}) = {v}")));
            }
            if (v - w[(j, i)]).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(CoherencyError::InvalidWeights(format!(
                    "entry ({i},{j}) is not symmetric"
                )));
            }
        }
    }
    Ok(())
}

fn laplacian_with_degrees(w: &DMatrix<f64>, degree: Vec<f64>) -> NormalizedLaplacian {
    let n = w.nrows();
    let s: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let values = DMatrix::from_fn(n, n, |i, j| {
        let dw = if i == j { degree[i] - w[(i, j)] } else { -w[(i, j)] };
        s[i] * dw * s[j]
    });
    NormalizedLaplacian { values, degree }
}

/// D^(−1/2)·(D − W)·D^(−1/2). Isolated nodes are an error.
pub fn normalized_laplacian(w: &DMatrix<f64>) -> Result<NormalizedLaplacian, CoherencyError> {
    check_weights(w)?;
    let degree: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = degree.iter().position(|&d| d <= 0.0) {
        return Err(CoherencyError::IsolatedNode(i));
    }
    Ok(laplacian_with_degrees(w, degree))
}

/// As [`normalized_laplacian`] but zero degrees are raised to `floor`.
pub fn normalized_laplacian_floored(w: &DMatrix<f64>, floor: f64) -> Result<NormalizedLaplacian, CoherencyError> {
    check_weights(w)?;
    let degree = w
        .row_iter()
        .map(|r| r.sum())
        .map(|d| if d <= 0.0 { floor } else { d })
        .collect();
    Ok(laplacian_with_degrees(w, degree))
}

/// Eigengap choice of k over 2..=k_max. A missing λ_{k+1} (k = n) counts
/// as a zero gap; ties go to the smaller k.
pub fn choose_k(l: &NormalizedLaplacian, k_max: usize) -> Result<usize, CoherencyError> {
    let n = l.values.nrows();
    if k_max < 2 || k_max > n {
        return Err(CoherencyError::BadK { k: k_max, max: n });
    }
    let eig = linalg::sym_eigen(&l.values)?;
    let lam = &eig.values;
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..=k_max {
        let gap = if k < n { lam[k] - lam[k - 1] } else { 0.0 };
        if gap > best.1 + 1e-12 {
            best = (k, gap);
        }
    }
    Ok(best.0)
}

/// Default upper bound for the eigengap search.
pub fn default_k_max(m: usize) -> usize {
    (m / 2).max(2).min(m)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoherencyGroups {
    /// Members in generator order; groups ordered by their first member.
    pub groups: Vec<Vec<String>>,
}

impl CoherencyGroups {
    /// Builds groups from per-generator cluster labels, canonically ordered.
    pub fn from_labels(names: &[String], cluster: &[usize]) -> Self {
        let mut seen: Vec<usize> = Vec::new();
        let mut groups: Vec<Vec<String>> = Vec::new();
        for (name, &c) in names.iter().zip(cluster) {
            match seen.iter().position(|&x| x == c) {
                Some(g) => groups[g].push(name.clone()),
                None => {
                    seen.push(c);
                    groups.push(vec![name.clone()]);
                }
            }
        }
        CoherencyGroups { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_of(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|l| l == label))
    }
}

fn row_distance(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (x.row(a) - x.row(b)).norm()
}

/// Farthest-first traversal starting at row 0; ties take the lowest row.
pub fn farthest_first(x: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = x.nrows();
    let mut seeds = vec![0];
    while seeds.len() < k.min(n) {
        let mut best = None;
        for i in 0..n {
            if seeds.contains(&i) {
                continue;
            }
            let d = seeds
                .iter()
                .map(|&s| row_distance(x, i, s))
                .fold(f64::INFINITY, f64::min);
            match best {
                Some((_, bd)) if d <= bd => {}
                _ => best = Some((i, d)),
            }
        }
        seeds.push(best.expect("fewer seeds than rows").0);
    }
    seeds
}

/// Spectral grouping of generators from their Ks matrix.
pub fn spectral_coherency(ks: &KsMatrix, k: usize) -> Result<CoherencyGroups, CoherencyError> {
    let m = ks.labels.len();
    if k < 2 || k > m {
        return Err(CoherencyError::BadK { k, max: m });
    }
    let l = normalized_laplacian_floored(&ks.weights(), partition::DEGREE_FLOOR)?;
    let eig = linalg::sym_eigen(&l.values)?;
    let mut x = eig.vectors.columns(0, k).into_owned();
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let seeds = farthest_first(&x, k);
    let labels = partition::kmedoids(&x, &seeds)?;
    Ok(CoherencyGroups::from_labels(&ks.labels, &labels))
}
