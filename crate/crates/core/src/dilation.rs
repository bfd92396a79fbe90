//! Minimal partially isometric dilation of a row contraction relative to a
//! stabilizing family, truncated at a finite Fock depth.
//!
//! The dilation space is `H ⊕ ⊕_{|w| ≤ d} 𝒟_{s(w)}` with `H` first. On `H`,
//! `S_e` acts as the column `T_e ⊕ D_e`, the defect part landing in the
//! level-0 slot of vertex `r(e)`. On the Fock part `S_e` is the left creation
//! operator `w ↦ e·w`, which vanishes on the top level `d`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::families::{validate_family, FamilyError, ProjectionFamily, RowContraction};
use crate::graph::{paths_up_to, DirectedGraph, GraphError, Path};
use crate::numerics::{
    compress, extend_basis, hermitian_part, hstack, identity, op_norm, psd_sqrt, range_basis,
    rank_tol, select_columns, span_deficit, Matrix, NumericsError, ToleranceConfig,
};
use crate::tuples::{
    check_dagger, tail_sums, DaggerReport, Level, Mode, OperatorTuple, TupleError,
};

pub const DEFAULT_DEPTH: usize = 4;

/// Depth of the tail recursion used for the purity verdict.
pub const PURITY_DEPTH: usize = 1024;

/// Largest dilation space `dilate` will assemble.
pub const MAX_DILATION_DIM: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DilationError {
    #[error("depth must be at least 1")]
    InvalidDepth,
    #[error("I_P - T*T is not positive (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("defect ranges of operators {first} and {second} overlap ({overlap:e})")]
    DefectOverlap {
        first: usize,
        second: usize,
        overlap: f64,
    },
    #[error("dilation check '{check}' failed with residual {residual:e}")]
    VerificationFailed { check: String, residual: f64 },
    #[error("spanning sets have ranks {left} and {right}")]
    SpanMismatch { left: usize, right: usize },
    #[error("dilation space of dimension {dim} exceeds the cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("invalid block dimensions: {0}")]
    InvalidBlockDims(String),
    #[error("invalid defect rotation: {0}")]
    InvalidRotation(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Tuple(#[from] TupleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(NumericsError),
}

impl From<NumericsError> for DilationError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NotPsd { eigenvalue } => DilationError::NotPsd { eigenvalue },
            other => DilationError::Numerics(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectData {
    /// `(I_P - T*T)^{1/2}` on `H^(n)`.
    pub d: Matrix,
    /// `D E_e`, an `n·dim × dim` block per operator.
    pub d_e: Vec<Matrix>,
    /// Orthonormal basis of `𝒟_k` in `H^(n)`, per vertex.
    pub defect_blocks: Vec<Matrix>,
    /// `(s(e), r(e))` per operator.
    pub assignments: Vec<(usize, usize)>,
    /// Largest `‖T_e*T_f + D_e*D_f - δ_ef P_s(e)‖`.
    pub proof_identity: f64,
    /// Largest overlap between defect ranges of operators with distinct ranges.
    pub range_overlap: f64,
}

fn i_p(t: &RowContraction, p: &ProjectionFamily, assignments: &[(usize, usize)]) -> Matrix {
    let (n, dim) = (t.len(), t.dim());
    let mut out = Matrix::zeros(n * dim, n * dim);
    for (i, &(s, _)) in assignments.iter().enumerate() {
        out.view_mut((i * dim, i * dim), (dim, dim))
            .copy_from(&p.projections[s]);
    }
    out
}

/// The row operator `[T_1 ... T_n]` as a `dim × n·dim` matrix.
fn row_operator(t: &RowContraction) -> Matrix {
    let refs: Vec<&Matrix> = t.ops().iter().collect();
    hstack(&refs, t.dim())
}

pub fn defect(
    t: &RowContraction,
    p: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Result<DefectData, DilationError> {
    let assignments = validate_family(t, p, tol)?.assignments;
    let (n, dim) = (t.len(), t.dim());
    let row = row_operator(t);
    let gap = hermitian_part(&(i_p(t, p, &assignments) - row.adjoint() * &row));
    let d = psd_sqrt(&gap, tol)?;
    let d_e: Vec<Matrix> = (0..n)
        .map(|e| d.columns(e * dim, dim).into_owned())
        .collect();

    let ops = t.ops();
    let norm_t = op_norm(&row);
    let mut proof_identity = 0.0_f64;
    for e in 0..n {
        for f in 0..n {
            let mut m = ops[e].adjoint() * &ops[f] + d_e[e].adjoint() * &d_e[f];
            if e == f {
                m -= &p.projections[assignments[e].0];
            }
            proof_identity = proof_identity.max(op_norm(&m));
        }
    }
    if proof_identity > tol.eps_rank * (1.0 + norm_t * norm_t) {
        return Err(DilationError::VerificationFailed {
            check: "proof_identity".into(),
            residual: proof_identity,
        });
    }

    let ranges: Vec<Matrix> = d_e.iter().map(|b| range_basis(b, tol)).collect();
    let mut range_overlap = 0.0_f64;
    for a in 0..n {
        for b in a + 1..n {
            if assignments[a].1 == assignments[b].1
                || ranges[a].ncols() == 0
                || ranges[b].ncols() == 0
            {
                continue;
            }
            let overlap = op_norm(&(ranges[a].adjoint() * &ranges[b]));
            if overlap > tol.eps_rank {
                return Err(DilationError::DefectOverlap {
                    first: a,
                    second: b,
                    overlap,
                });
            }
            range_overlap = range_overlap.max(overlap);
        }
    }

    let defect_blocks = (0..p.len())
        .map(|k| {
            let members: Vec<&Matrix> = (0..n)
                .filter(|&e| assignments[e].1 == k)
                .map(|e| &ranges[e])
                .collect();
            range_basis(&hstack(&members, n * dim), tol)
        })
        .collect();

    Ok(DefectData {
        d,
        d_e,
        defect_blocks,
        assignments,
        proof_identity,
        range_overlap,
    })
}

/// Fock slot `w` carrying a copy of the block at its start vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub path: Path,
    pub offset: usize,
    pub dim: usize,
}

/// Coordinates of the truncated Fock space, placed after `offset` ambient
/// coordinates and ordered by the global path order.
#[derive(Debug, Clone, PartialEq)]
pub struct FockLayout {
    pub depth: usize,
    pub offset: usize,
    pub slots: Vec<Slot>,
    lookup: HashMap<Path, usize>,
}

impl FockLayout {
    pub fn new(
        graph: &DirectedGraph,
        block_dims: &[usize],
        depth: usize,
        offset: usize,
    ) -> Result<Self, DilationError> {
        if block_dims.len() != graph.vertex_count() {
            return Err(DilationError::InvalidBlockDims(format!(
                "{} dims for {} vertices",
                block_dims.len(),
                graph.vertex_count()
            )));
        }
        let mut slots = Vec::new();
        let mut lookup = HashMap::new();
        let mut next = offset;
        for path in paths_up_to(graph, depth)? {
            let dim = block_dims[path.start];
            lookup.insert(path.clone(), slots.len());
            slots.push(Slot {
                path,
                offset: next,
                dim,
            });
            next += dim;
        }
        Ok(Self {
            depth,
            offset,
            slots,
            lookup,
        })
    }

    /// Total dimension including the ambient block.
    pub fn total_dim(&self) -> usize {
        self.slots.last().map_or(self.offset, |s| s.offset + s.dim)
    }

    pub fn slot(&self, path: &Path) -> Option<&Slot> {
        self.lookup.get(path).map(|&i| &self.slots[i])
    }

    pub fn levels(&self) -> Vec<Level> {
        let mut levels = vec![Level::Ambient; self.offset];
        for slot in &self.slots {
            levels.extend(std::iter::repeat_n(Level::Fock(slot.path.len()), slot.dim));
        }
        levels
    }

    /// Write the creation operator `L_e` into `target`.
    fn place_shift(&self, graph: &DirectedGraph, edge: usize, target: &mut Matrix) {
        for slot in &self.slots {
            if slot.path.len() >= self.depth || slot.dim == 0 {
                continue;
            }
            let Some(image) = slot.path.prepend(graph, edge) else {
                continue;
            };
            let dest = self.slot(&image).expect("prepended path within depth");
            for j in 0..slot.dim {
                target[(dest.offset + j, slot.offset + j)] = crate::numerics::real(1.0);
            }
        }
    }

    pub fn basis_index(&self) -> Vec<BasisEntry> {
        let mut out = Vec::new();
        for slot in &self.slots {
            for j in 0..slot.dim {
                out.push(BasisEntry {
                    path: slot.path.edges.clone(),
                    vertex: slot.path.start,
                    j,
                    coord: slot.offset + j,
                });
            }
        }
        out
    }
}

/// Truncated shift on `⊕_{|w| ≤ d} ℂ^{block_dims(s(w))}`.
pub fn canonical_shift(
    graph: &DirectedGraph,
    block_dims: &[usize],
    depth: usize,
) -> Result<OperatorTuple, DilationError> {
    if depth == 0 {
        return Err(DilationError::InvalidDepth);
    }
    if block_dims.iter().all(|&k| k == 0) {
        return Err(DilationError::InvalidBlockDims(
            "all block dimensions are zero".into(),
        ));
    }
    let layout = FockLayout::new(graph, block_dims, depth, 0)?;
    let n = layout.total_dim();
    let ops = (0..graph.edge_count())
        .map(|e| {
            let mut l = Matrix::zeros(n, n);
            layout.place_shift(graph, e, &mut l);
            l
        })
        .collect();
    Ok(OperatorTuple::new(
        ops,
        Mode::Truncated {
            depth,
            levels: layout.levels(),
        },
    )?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub path: Vec<usize>,
    /// Start vertex of the path; disambiguates paths of length zero.
    pub vertex: usize,
    pub j: usize,
    pub coord: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationReport {
    pub proof_identity: f64,
    pub range_overlap: f64,
    /// `‖P_H S_e|_H - T_e‖`.
    pub compression: f64,
    /// `‖(I - P_H) S_e* P_H‖`.
    pub coinvariance: f64,
    /// `‖P_H S_e*S_e|_H - P_s(e)‖`.
    pub initial_projection: f64,
    /// Distance of the levels below the top from the span of `w(S)H`.
    pub minimality: f64,
    pub dagger: DaggerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationResult {
    #[serde(flatten)]
    pub tuple: OperatorTuple,
    pub embedding: (usize, usize),
    pub depth: usize,
    pub graph: DirectedGraph,
    pub family: ProjectionFamily,
    pub basis_index: Vec<BasisEntry>,
    pub report: DilationReport,
}

impl DilationResult {
    /// `N × dim H` inclusion of `H`.
    pub fn embedding_matrix(&self) -> Matrix {
        let (lo, hi) = self.embedding;
        let mut e = Matrix::zeros(self.tuple.space_dim(), hi - lo);
        for i in 0..hi - lo {
            e[(lo + i, i)] = crate::numerics::real(1.0);
        }
        e
    }
}

pub fn dilate(
    t: &RowContraction,
    p: &ProjectionFamily,
    depth: usize,
    tol: &ToleranceConfig,
) -> Result<DilationResult, DilationError> {
    dilate_rotated(t, p, depth, tol, None)
}

/// As [`dilate`], with the basis of each `𝒟_k` replaced by `B_k U_k`.
pub fn dilate_rotated(
    t: &RowContraction,
    p: &ProjectionFamily,
    depth: usize,
    tol: &ToleranceConfig,
    rotations: Option<&[Matrix]>,
) -> Result<DilationResult, DilationError> {
    if depth == 0 {
        return Err(DilationError::InvalidDepth);
    }
    let mut data = defect(t, p, tol)?;
    if let Some(rotations) = rotations {
        if rotations.len() != data.defect_blocks.len() {
            return Err(DilationError::InvalidRotation(format!(
                "{} rotations for {} blocks",
                rotations.len(),
                data.defect_blocks.len()
            )));
        }
        for (k, (block, u)) in data.defect_blocks.iter_mut().zip(rotations).enumerate() {
            let m = block.ncols();
            if u.shape() != (m, m) || op_norm(&(u.adjoint() * u - identity(m))) > tol.eps_rank {
                return Err(DilationError::InvalidRotation(format!(
                    "rotation {k} is not a {m}x{m} unitary"
                )));
            }
            *block = &*block * u;
        }
    }

    let graph = DirectedGraph::new(p.len(), data.assignments.clone())?;
    let block_dims: Vec<usize> = data.defect_blocks.iter().map(|b| b.ncols()).collect();
    let h = t.dim();
    let layout = FockLayout::new(&graph, &block_dims, depth, h)?;
    let n = layout.total_dim();
    if n > MAX_DILATION_DIM {
        return Err(DilationError::TooLarge {
            dim: n,
            cap: MAX_DILATION_DIM,
        });
    }

    let ops: Vec<Matrix> = (0..t.len())
        .map(|e| {
            let mut s = Matrix::zeros(n, n);
            s.view_mut((0, 0), (h, h)).copy_from(&t.ops()[e]);
            let r = data.assignments[e].1;
            let ground = layout.slot(&Path::vertex(r)).expect("vertex slot");
            if ground.dim > 0 {
                let column = data.defect_blocks[r].adjoint() * &data.d_e[e];
                s.view_mut((ground.offset, 0), (ground.dim, h))
                    .copy_from(&column);
            }
            layout.place_shift(&graph, e, &mut s);
            s
        })
        .collect();
    let tuple = OperatorTuple::new(
        ops,
        Mode::Truncated {
            depth,
            levels: layout.levels(),
        },
    )?;

    let report = verify(t, p, &tuple, &data, h, tol)?;
    Ok(DilationResult {
        tuple,
        embedding: (0, h),
        depth,
        graph,
        family: p.clone(),
        basis_index: layout.basis_index(),
        report,
    })
}

fn verify(
    t: &RowContraction,
    p: &ProjectionFamily,
    s: &OperatorTuple,
    data: &DefectData,
    h: usize,
    tol: &ToleranceConfig,
) -> Result<DilationReport, DilationError> {
    let n = s.space_dim();
    let h_idx: Vec<usize> = (0..h).collect();
    let mut compression = 0.0_f64;
    let mut coinvariance = 0.0_f64;
    let mut initial_projection = 0.0_f64;
    for (e, op) in s.ops().iter().enumerate() {
        compression = compression.max(op_norm(&(compress(op, &h_idx) - &t.ops()[e])));
        let adjoint_on_h = op.adjoint().columns(0, h).into_owned();
        if n > h {
            coinvariance = coinvariance.max(op_norm(&adjoint_on_h.rows(h, n - h).into_owned()));
        }
        let initial = compress(&(op.adjoint() * op), &h_idx);
        let target = &p.projections[data.assignments[e].0];
        initial_projection = initial_projection.max(op_norm(&(initial - target)));
    }

    let embedding = identity(n).columns(0, h).into_owned();
    let retained = s.retained_indices();
    let lower = identity(n);
    let lower = select_columns(&lower, &retained);
    let span = word_span(s.ops(), &embedding, s_depth(s), tol);
    let minimality = span_deficit(&span, &lower);

    let dagger = check_dagger(s, tol)?;
    let report = DilationReport {
        proof_identity: data.proof_identity,
        range_overlap: data.range_overlap,
        compression,
        coinvariance,
        initial_projection,
        minimality,
        dagger,
    };

    let checks = [
        ("compression", report.compression),
        ("coinvariance", report.coinvariance),
        ("initial_projection", report.initial_projection),
        ("minimality", report.minimality),
    ];
    for (check, residual) in checks {
        if residual > tol.eps_rank {
            return Err(DilationError::VerificationFailed {
                check: check.into(),
                residual,
            });
        }
    }
    if let Some((relation, residual)) = report.dagger.residuals.first_failure(tol.eps_rank) {
        return Err(DilationError::VerificationFailed {
            check: format!("relation {relation}"),
            residual,
        });
    }
    Ok(report)
}

fn s_depth(s: &OperatorTuple) -> usize {
    match s.mode() {
        Mode::Truncated { depth, .. } => *depth,
        Mode::Exact => 0,
    }
}

/// Orthonormal basis of the span of `w(S) seed` over words `|w| ≤ depth`.
fn word_span(ops: &[Matrix], seed: &Matrix, depth: usize, tol: &ToleranceConfig) -> Matrix {
    let dim = seed.nrows();
    let mut basis = range_basis(seed, tol);
    let mut frontier = basis.clone();
    for _ in 0..depth {
        if frontier.ncols() == 0 {
            break;
        }
        let images: Vec<Matrix> = ops.iter().map(|op| op * &frontier).collect();
        let refs: Vec<&Matrix> = images.iter().collect();
        let grown = extend_basis(&basis, &hstack(&refs, dim), tol);
        let added: Vec<usize> = (basis.ncols()..grown.ncols()).collect();
        frontier = select_columns(&grown, &added);
        basis = grown;
    }
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub rank: usize,
    /// `‖Q'*Q' - I‖` for the image of the orthonormalized spanning set.
    pub isometry_defect: f64,
    /// `‖U w(S)h - w(S')h‖` over the spanning set.
    pub map_residual: f64,
    /// `‖U S_e - S'_e U‖` on the levels below the top.
    pub intertwining: f64,
    /// `‖U|_H - I_H‖`.
    pub identity_on_h: f64,
}

/// Spanning vectors `w(S)h` for composable `w` with `|w| ≤ depth + 1`, in
/// path order. The extra letter reaches the top level.
fn spanning_set(res: &DilationResult) -> Matrix {
    let ops = res.tuple.ops();
    let seed = res.embedding_matrix();
    let paths = paths_up_to(&res.graph, res.depth + 1).unwrap_or_default();
    let mut memo: HashMap<Vec<usize>, Matrix> = HashMap::new();
    let mut blocks = vec![seed.clone()];
    for path in paths.iter().filter(|p| !p.is_empty()) {
        let tail = &path.edges[1..];
        let base = if tail.is_empty() { &seed } else { &memo[tail] };
        let block = &ops[path.edges[0]] * base;
        blocks.push(block.clone());
        memo.insert(path.edges.clone(), block);
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    hstack(&refs, res.tuple.space_dim())
}

/// Column-pivoted Gram-Schmidt on `x`, replaying the same pivots and
/// coefficients on `y`.
fn paired_gram_schmidt(x: &Matrix, y: &Matrix, tol: &ToleranceConfig) -> (Matrix, Matrix) {
    let scale = x
        .column_iter()
        .fold(0.0_f64, |acc, c| acc.max(c.norm()))
        .max(1.0);
    let mut rx = x.clone();
    let mut ry = y.clone();
    let mut qx = Vec::new();
    let mut qy = Vec::new();
    let mut used = vec![false; x.ncols()];
    loop {
        let pivot = (0..x.ncols())
            .filter(|&j| !used[j])
            .map(|j| (j, rx.column(j).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, norm)) = pivot else { break };
        if norm <= tol.eps_rank * scale {
            break;
        }
        used[j] = true;
        let q = rx.column(j).into_owned() / crate::numerics::real(norm);
        let q2 = ry.column(j).into_owned() / crate::numerics::real(norm);
        for k in (0..x.ncols()).filter(|&k| !used[k]) {
            let coef = (q.adjoint() * rx.column(k))[(0, 0)];
            let update_x = &q * coef;
            let update_y = &q2 * coef;
            let mut col = rx.column_mut(k);
            col -= update_x;
            let mut col = ry.column_mut(k);
            col -= update_y;
        }
        qx.push(q);
        qy.push(q2);
    }
    if qx.is_empty() {
        return (Matrix::zeros(x.nrows(), 0), Matrix::zeros(y.nrows(), 0));
    }
    (Matrix::from_columns(&qx), Matrix::from_columns(&qy))
}

/// Build `U: w(S)h ↦ w(S')h` and measure how far it is from a unitary
/// intertwiner fixing `H`.
pub fn verify_uniqueness(
    a: &DilationResult,
    b: &DilationResult,
    tol: &ToleranceConfig,
) -> Result<UniquenessReport, DilationError> {
    if a.tuple.len() != b.tuple.len()
        || a.embedding.1 - a.embedding.0 != b.embedding.1 - b.embedding.0
    {
        return Err(DilationError::Tuple(TupleError::DimensionMismatch(
            "dilations of different row contractions".into(),
        )));
    }
    let x = spanning_set(a);
    let y = spanning_set(b);
    if x.ncols() != y.ncols() {
        return Err(DilationError::SpanMismatch {
            left: rank_tol(&x, tol),
            right: rank_tol(&y, tol),
        });
    }
    let (left, right) = (rank_tol(&x, tol), rank_tol(&y, tol));
    if left != right {
        return Err(DilationError::SpanMismatch { left, right });
    }
    let (q, q2) = paired_gram_schmidt(&x, &y, tol);
    let rank = q.ncols();
    let u = &q2 * q.adjoint();
    let isometry_defect = op_norm(&(q2.adjoint() * &q2 - identity(rank)));

    let scale = x
        .column_iter()
        .fold(0.0_f64, |acc, c| acc.max(c.norm()))
        .max(1.0);
    let map_residual = op_norm(&(&u * &x - &y)) / scale;

    let retained = a.tuple.retained_indices();
    let below_top = select_columns(&identity(a.tuple.space_dim()), &retained);
    let intertwining = a
        .tuple
        .ops()
        .iter()
        .zip(b.tuple.ops())
        .map(|(sa, sb)| op_norm(&((&u * sa - sb * &u) * &below_top)))
        .fold(0.0_f64, f64::max);

    let identity_on_h = op_norm(&(&u * a.embedding_matrix() - b.embedding_matrix()));
    Ok(UniquenessReport {
        rank,
        isometry_defect,
        map_residual,
        intertwining,
        identity_on_h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pure: bool,
    /// `‖Σ T_i T_i*‖`; purity follows when this is below one.
    pub r_bound: f64,
    /// Tail traces at depths `1..=8`.
    pub tails: Vec<f64>,
    pub fully_coisometric: bool,
    /// `‖I - Σ T_i T_i*‖`.
    pub coisometry_residual: f64,
    pub predicted_alpha: Vec<usize>,
}

pub fn predict_properties(
    t: &RowContraction,
    p: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Prediction {
    let range_sum = t.range_sum();
    let r_bound = op_norm(&range_sum);
    let idx: Vec<usize> = (0..t.dim()).collect();
    let mut depths: Vec<usize> = (1..=8).collect();
    depths.push(PURITY_DEPTH);
    let mut tails = tail_sums(t.ops(), &depths, &idx);
    let deep = tails.pop().unwrap_or(0.0);
    let gap = identity(t.dim()) - range_sum;
    let coisometry_residual = op_norm(&gap);
    let predicted_alpha = p
        .projections
        .iter()
        .map(|q| rank_tol(&(q * &gap), tol))
        .collect();
    Prediction {
        pure: r_bound < 1.0 - tol.eps_rank || deep <= tol.eps_rank,
        r_bound,
        tails,
        fully_coisometric: coisometry_residual <= tol.eps_rank,
        coisometry_residual,
        predicted_alpha,
    }
}
