//! Dense complex linear algebra used throughout the crate.
//!
//! Every operator, projection and subspace basis is a [`Matrix`], a dense
//! column-major `DMatrix<Complex<f64>>`. Subspaces are carried as matrices
//! with orthonormal columns. All rank and residual decisions go through a
//! [`ToleranceConfig`] so that exact-arithmetic statements can be checked
//! numerically with a declared threshold.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type Matrix = DMatrix<C64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("invalid tolerance configuration: {0}")]
    InvalidTolerance(String),
}

/// Thresholds for every numerical decision.
///
/// `eps_rank` decides ranks, memberships and relation checks; `eps_rel` bounds
/// residuals that should vanish up to roundoff (Hermitian symmetry,
/// idempotence of computed projections).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub eps_rank: f64,
    pub eps_rel: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            eps_rank: 1e-8,
            eps_rel: 1e-9,
        }
    }
}

impl ToleranceConfig {
    pub fn new(eps_rank: f64, eps_rel: f64) -> Result<Self, NumericsError> {
        let tol = Self { eps_rank, eps_rel };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.eps_rank > 0.0 && self.eps_rel > 0.0) {
            return Err(NumericsError::InvalidTolerance(
                "eps_rank and eps_rel must be strictly positive".into(),
            ));
        }
        if self.eps_rel > self.eps_rank {
            return Err(NumericsError::InvalidTolerance(format!(
                "eps_rel ({:e}) exceeds eps_rank ({:e})",
                self.eps_rel, self.eps_rank
            )));
        }
        Ok(())
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn real(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    Matrix::zeros(rows, cols)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> Matrix {
    let mut m = zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = real(*v);
    }
    m
}

/// Real matrix from row-major rows.
pub fn from_real_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let cols = rows.first().map_or(0, |row| row.len());
    Matrix::from_fn(r, cols, |i, j| real(rows[i][j]))
}

/// Standard basis vector `e_index` in `C^dim` as a column.
pub fn basis_vector(dim: usize, index: usize) -> Matrix {
    let mut v = zeros(dim, 1);
    v[(index, 0)] = real(1.0);
    v
}

/// Spectral norm, from the largest eigenvalue of the smaller Gram matrix.
pub fn op_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    hermitian_part(&gram)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(*l))
        .sqrt()
}

/// Largest entry modulus.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_part(a: &Matrix) -> Matrix {
    (a + a.adjoint()) * real(0.5)
}

fn ensure_square(a: &Matrix) -> Result<(), NumericsError> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &Matrix) -> Result<Vec<f64>, NumericsError> {
    ensure_square(a)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = hermitian_part(a)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn min_eigenvalue(a: &Matrix) -> Result<f64, NumericsError> {
    Ok(hermitian_eigenvalues(a)?.first().copied().unwrap_or(0.0))
}

/// Square root of a Hermitian positive semidefinite matrix.
///
/// Eigenvalues in `[-eps_rank, eps_rel]` are treated as exact zeros, so the
/// result has no spurious range coming from roundoff in a singular input.
pub fn psd_sqrt(a: &Matrix, tol: &ToleranceConfig) -> Result<Matrix, NumericsError> {
    ensure_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    let asymmetry = op_norm(&(a - a.adjoint()));
    if asymmetry > tol.eps_rel * (1.0 + op_norm(a)) {
        return Err(NumericsError::NotHermitian { asymmetry });
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut roots = Vec::with_capacity(n);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -tol.eps_rank {
            return Err(NumericsError::NotPsd { eigenvalue: lambda });
        }
        roots.push(if lambda <= tol.eps_rel {
            0.0
        } else {
            lambda.sqrt()
        });
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    Ok(hermitian_part(&(scaled * v.adjoint())))
}

/// Eigenvectors `u_i` of `A A*` paired with `‖A* u_i‖`, sorted by the
/// latter in descending order. Measuring `‖A* u_i‖` directly keeps small
/// singular values accurate to roundoff in `A` rather than in `A A*`.
fn left_singular_pairs(a: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = hermitian_part(&(a * a.adjoint())).symmetric_eigen();
    let u = eig.eigenvectors;
    let images = u.adjoint() * a;
    let mut order: Vec<(usize, f64)> = images.row_iter().map(|r| r.norm()).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let sigma = order.iter().map(|(_, s)| *s).collect();
    let cols: Vec<usize> = order.iter().map(|(j, _)| *j).collect();
    (sigma, select_columns(&u, &cols))
}

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let (mut sigma, _) = left_singular_pairs(a);
    sigma.truncate(a.nrows().min(a.ncols()));
    sigma
}

pub fn rank_tol(a: &Matrix, tol: &ToleranceConfig) -> usize {
    singular_values(a)
        .into_iter()
        .filter(|s| *s > tol.eps_rank)
        .count()
}

/// Orthonormal basis (as columns) of the column span of `a`.
pub fn range_basis(a: &Matrix, tol: &ToleranceConfig) -> Matrix {
    let rows = a.nrows();
    if a.is_empty() {
        return zeros(rows, 0);
    }
    let (sigma, u) = left_singular_pairs(a);
    let keep: Vec<usize> = sigma
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > tol.eps_rank)
        .map(|(j, _)| j)
        .collect();
    select_columns(&u, &keep)
}

/// Orthonormal basis of the kernel of `a`.
pub fn kernel_basis(a: &Matrix, tol: &ToleranceConfig) -> Matrix {
    let cols = a.ncols();
    let range = range_basis(&a.adjoint(), tol);
    orthogonal_complement(&range, cols, tol)
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns `basis` inside `C^dim`.
pub fn orthogonal_complement(basis: &Matrix, dim: usize, tol: &ToleranceConfig) -> Matrix {
    if basis.ncols() == 0 {
        return identity(dim);
    }
    let residual = identity(dim) - basis * basis.adjoint();
    range_basis(&residual, tol)
}

pub fn projection_onto(a: &Matrix, tol: &ToleranceConfig) -> Matrix {
    let b = range_basis(a, tol);
    &b * b.adjoint()
}

pub fn subspaces_orthogonal(a: &Matrix, b: &Matrix, tol: &ToleranceConfig) -> bool {
    subspace_overlap(a, b) <= tol.eps_rank
}

/// `max |A* B|` for two column bases.
pub fn subspace_overlap(a: &Matrix, b: &Matrix) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    max_abs(&(a.adjoint() * b))
}

/// Largest distance from a column of `vectors` to the span of the
/// orthonormal columns `basis`.
pub fn span_deficit(basis: &Matrix, vectors: &Matrix) -> f64 {
    let residual = if basis.ncols() == 0 {
        vectors.clone()
    } else {
        vectors - basis * (basis.adjoint() * vectors)
    };
    residual
        .column_iter()
        .fold(0.0_f64, |acc, col| acc.max(col.norm()))
}

/// Append to the orthonormal columns `basis` an orthonormal basis for the
/// part of span(`vectors`) not already covered. Projects out the existing
/// span twice before the rank decision.
pub fn extend_basis(basis: &Matrix, vectors: &Matrix, tol: &ToleranceConfig) -> Matrix {
    let rows = vectors.nrows();
    if vectors.ncols() == 0 {
        return basis.clone();
    }
    let mut residual = vectors.clone();
    if basis.ncols() > 0 {
        for _ in 0..2 {
            residual -= basis * (basis.adjoint() * &residual);
        }
    }
    let fresh = range_basis(&residual, tol);
    if fresh.ncols() == 0 {
        return basis.clone();
    }
    let fresh = if basis.ncols() > 0 {
        let cleaned = &fresh - basis * (basis.adjoint() * &fresh);
        range_basis(&cleaned, tol)
    } else {
        fresh
    };
    hstack(&[basis, &fresh], rows)
}

/// Place the rows of `a` at positions `idx` of a `dim`-row zero matrix.
pub fn embed_rows(a: &Matrix, idx: &[usize], dim: usize) -> Matrix {
    let mut out = zeros(dim, a.ncols());
    for (i, &target) in idx.iter().enumerate() {
        out.row_mut(target).copy_from(&a.row(i));
    }
    out
}

pub fn select_columns(a: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

pub fn select_rows(a: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Principal submatrix on the given index set.
pub fn compress(a: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

pub fn hstack(blocks: &[&Matrix], rows: usize) -> Matrix {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Block-diagonal direct sum.
pub fn direct_sum(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Residual of `P = P* = P²`.
pub fn projection_defect(p: &Matrix) -> f64 {
    let herm = max_abs(&(p - p.adjoint()));
    let idem = max_abs(&(p * p - p));
    herm.max(idem)
}

/// JSON encoding `{"rows": m, "cols": n, "entries": [[[re, im], ...], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl From<&Matrix> for MatrixRepr {
    fn from(m: &Matrix) -> Self {
        let entries = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| [m[(i, j)].re, m[(i, j)].im])
                    .collect()
            })
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = String;

    fn try_from(repr: MatrixRepr) -> Result<Self, Self::Error> {
        if repr.entries.len() != repr.rows {
            return Err(format!(
                "matrix declares {} rows but has {}",
                repr.rows,
                repr.entries.len()
            ));
        }
        if let Some((i, row)) = repr
            .entries
            .iter()
            .enumerate()
            .find(|(_, row)| row.len() != repr.cols)
        {
            return Err(format!(
                "row {i} has {} entries, expected {}",
                row.len(),
                repr.cols
            ));
        }
        Ok(Matrix::from_fn(repr.rows, repr.cols, |i, j| {
            let [re, im] = repr.entries[i][j];
            c(re, im)
        }))
    }
}

/// Serde adapter for a single [`Matrix`]; use with `#[serde(with = ...)]`.
pub mod matrix_json {
    use super::{Matrix, MatrixRepr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        Matrix::try_from(repr).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Matrix>`.
pub mod matrix_vec_json {
    use super::{Matrix, MatrixRepr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
        let reprs: Vec<MatrixRepr> = ms.iter().map(MatrixRepr::from).collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Matrix>, D::Error> {
        Vec::<MatrixRepr>::deserialize(d)?
            .into_iter()
            .map(|r| Matrix::try_from(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Standalone wrapper so a bare matrix can be read or written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JsonMatrix(#[serde(with = "matrix_json")] pub Matrix);
