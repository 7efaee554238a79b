//! Dense spectral helpers for desk-scale symmetric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Eigenvalues below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Matrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub lambda_max: f64,
    /// Smallest eigenvalue above the rank threshold; 0 for the zero matrix.
    pub lambda_min_plus: f64,
    pub rank: usize,
}

impl Spectrum {
    pub fn chi(&self) -> f64 {
        if self.lambda_min_plus > 0.0 {
            self.lambda_max / self.lambda_min_plus
        } else {
            f64::INFINITY
        }
    }
}

pub fn spectrum_of_psd(m: &Matrix) -> Spectrum {
    let (vals, _) = sym_eigen(m);
    spectrum_from_values(vals.as_slice())
}

fn spectrum_from_values(vals: &[f64]) -> Spectrum {
    let lambda_max = vals.iter().copied().fold(0.0_f64, f64::max);
    let cut = RANK_TOL * lambda_max;
    let positive: Vec<f64> = vals.iter().copied().filter(|&v| v > cut).collect();
    let lambda_min_plus = positive.iter().copied().fold(f64::INFINITY, f64::min);
    Spectrum {
        lambda_max,
        lambda_min_plus: if positive.is_empty() { 0.0 } else { lambda_min_plus },
        rank: positive.len(),
    }
}

/// Spectrum of `AᵀA` (equivalently the nonzero part of `AAᵀ`), using the smaller Gram matrix.
pub fn gram_spectrum(a: &Matrix) -> Spectrum {
    if a.nrows() <= a.ncols() {
        spectrum_of_psd(&(a * a.transpose()))
    } else {
        spectrum_of_psd(&(a.transpose() * a))
    }
}

/// Orthogonal projector onto the null space of a symmetric PSD matrix.
pub fn kernel_projector(m: &Matrix) -> Matrix {
    let (vals, vecs) = sym_eigen(m);
    let lmax = vals.iter().copied().fold(0.0_f64, f64::max);
    let cut = RANK_TOL * lmax;
    let n = vals.len();
    let mut p = Matrix::zeros(n, n);
    for j in 0..n {
        if vals[j] <= cut {
            let v = vecs.column(j);
            p += &v * v.transpose();
        }
    }
    p
}

/// Orthonormal basis (as columns) of the null space of a symmetric PSD matrix.
pub fn kernel_basis(m: &Matrix) -> Matrix {
    let (vals, vecs) = sym_eigen(m);
    let lmax = vals.iter().copied().fold(0.0_f64, f64::max);
    let cut = RANK_TOL * lmax;
    let cols: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] <= cut).collect();
    let mut basis = Matrix::zeros(m.nrows(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        basis.set_column(c, &vecs.column(j));
    }
    basis
}

/// Projector onto `Ker(Aᵀ)`, a subspace of the row space `ℝ^{rows(A)}`.
pub fn left_kernel_projector(a: &Matrix) -> Matrix {
    kernel_projector(&(a * a.transpose()))
}

/// Symmetric PSD square root.
pub fn sqrt_psd(w: &Matrix) -> Result<Matrix> {
    if !is_symmetric(w, RANK_TOL) {
        return Err(Error::NotPsd("matrix is not symmetric".into()));
    }
    let (vals, vecs) = sym_eigen(w);
    let lmax = vals.iter().copied().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cut = RANK_TOL * lmax.max(f64::MIN_POSITIVE);
    let mut roots = Vector::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        if v < -cut {
            return Err(Error::NotPsd(format!("negative eigenvalue {v:e}")));
        }
        roots[i] = if v > cut { v.sqrt() } else { 0.0 };
    }
    let scaled = &vecs * Matrix::from_diagonal(&roots);
    Ok(symmetrize(&(scaled * vecs.transpose())))
}

/// Minimum-norm solution of `M x = b` through the pseudo-inverse.
pub fn pinv_solve(m: &Matrix, b: &Vector) -> Result<Vector> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    svd.solve(b, RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Contract(format!("pseudo-inverse solve failed: {e}")))
}
