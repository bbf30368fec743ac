//! Thin wrappers over nalgebra's dense factorizations with the ordering and
//! sign conventions the rest of the crate relies on.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigen residual {0:.3e} exceeds tolerance")]
    Residual(f64),
}

/// Residual bound for symmetric eigenpairs, relative to max(1, ‖A‖∞).
pub const EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: DVector<f64>,
    /// Column j pairs with `values[j]`.
    pub vectors: DMatrix<f64>,
}

fn fix_sign(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            // strict comparison keeps the lowest index among equal magnitudes
            if col[i].abs() > col[best].abs() + 1e-12 {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Symmetric eigendecomposition, eigenvalues ascending, each eigenvector
/// signed so its largest-magnitude component is positive.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen, LinalgError> {
    let (r, c) = a.shape();
    if r != c {
        return Err(LinalgError::NotSquare(r, c));
    }
    if r == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = DVector::from_iterator(r, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(r, r, |row, col| eig.eigenvectors[(row, order[col])]);
    fix_sign(&mut vectors);

    let scale = inf_norm(&sym).max(1.0);
    let resid = (&sym * &vectors - &vectors * DMatrix::from_diagonal(&values)).amax();
    if !resid.is_finite() || resid > EIGEN_TOL * scale {
        return Err(LinalgError::Residual(resid));
    }
    Ok(SymEigen { values, vectors })
}

/// Solves A·u = λ·B·u for symmetric A and symmetric positive definite B.
/// Eigenvectors are B-orthonormal and sign-fixed like [`sym_eigen`].
pub fn generalized_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SymEigen, LinalgError> {
    let (r, c) = a.shape();
    if r != c || b.shape() != (r, c) {
        return Err(LinalgError::NotSquare(r, c));
    }
    let b_sym = (b + b.transpose()) * 0.5;
    let chol = Cholesky::new(b_sym).ok_or(LinalgError::NotPositiveDefinite)?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l.solve_lower_triangular(a).ok_or(LinalgError::Singular)?;
    let c_mat = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or(LinalgError::Singular)?;
    let inner = sym_eigen(&c_mat)?;
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&inner.vectors)
        .ok_or(LinalgError::Singular)?;
    fix_sign(&mut vectors);
    Ok(SymEigen {
        values: inner.values,
        vectors,
    })
}

/// Solves A·X = B for complex dense A by partial-pivot LU.
pub fn solve_complex(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, LinalgError> {
    let (r, c) = a.shape();
    if r != c {
        return Err(LinalgError::NotSquare(r, c));
    }
    if r == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let x = a.clone().lu().solve(b).ok_or(LinalgError::Singular)?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::Singular);
    }
    Ok(x)
}

/// Solves A·x = b for real dense A by partial-pivot LU.
pub fn solve_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let (r, c) = a.shape();
    if r != c {
        return Err(LinalgError::NotSquare(r, c));
    }
    let x = a.clone().lu().solve(b).ok_or(LinalgError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular);
    }
    Ok(x)
}
