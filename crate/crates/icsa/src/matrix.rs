//! Dense symmetric linear algebra used by every other module.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Relative tolerance under which an eigenvalue makes a scatter singular.
pub const RANK_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric real matrix with validated entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a matrix, enforcing symmetry within relative tolerance and
    /// finiteness. The stored matrix is symmetrized exactly.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.is_empty() {
            return Err(Error::InvalidMatrix);
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix);
        }
        let scale = entries.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidMatrix);
                }
            }
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        Ok(Self { entries: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            entries: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Scale in place by a positive constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: &self.entries * c,
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending, columns
/// of `vectors` sign-fixed so the largest-magnitude entry is nonnegative.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(s: &SymMatrix) -> Result<EigenPair> {
    let p = s.dim();
    let decomp = s.as_matrix().clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        decomp.eigenvalues[b]
            .partial_cmp(&decomp.eigenvalues[a])
            .expect("finite eigenvalues")
    });

    let mut values = Vec::with_capacity(p);
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        values.push(decomp.eigenvalues[src]);
        let mut col = decomp.eigenvectors.column(src).clone_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(EigenPair { values, vectors })
}

fn fix_sign(col: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        *col *= -1.0;
    }
}

/// Symmetric matrix power for exponents in {-1, -1/2, 1/2}.
///
/// Fails with `SingularScatter` when the smallest eigenvalue falls below
/// `RANK_TOL` times the largest.
pub fn sym_pow(s: &SymMatrix, exponent: f64) -> Result<SymMatrix> {
    let eig = sym_eigen(s)?;
    let largest = eig.values[0];
    let smallest = *eig.values.last().unwrap();
    if smallest <= RANK_TOL * largest.max(0.0) || largest <= 0.0 {
        return Err(Error::SingularScatter {
            eigenvalue: smallest,
        });
    }
    let powered: Vec<f64> = eig.values.iter().map(|&v| v.powf(exponent)).collect();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&powered));
    let m = &eig.vectors * d * eig.vectors.transpose();
    // Reconstruction is symmetric up to roundoff; symmetrize exactly.
    SymMatrix::new((&m + m.transpose()) * 0.5)
}

/// Haar-distributed random orthogonal matrix: QR of a standard Gaussian
/// matrix with the diagonal of R made positive.
pub fn random_orthogonal(p: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if p < 1 {
        return Err(Error::InvalidDimension(p));
    }
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    Ok(q)
}

/// Columnwise mean of an n x p matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtracts a row vector from every row.
pub fn center_rows(x: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        for (v, c) in row.iter_mut().zip(center.iter()) {
            *v -= c;
        }
    }
    out
}
