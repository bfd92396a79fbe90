//! Tuples of partial isometries: relation checks, graph extraction and the
//! Wold decomposition into pure and fully coisometric parts.
//!
//! A tuple is either exact (the whole space is meaningful) or truncated at a
//! Fock depth `d`, in which case every relation is checked on the compression
//! to the ambient block plus Fock levels `0..d`. The top level is excluded
//! because the truncated shift annihilates it.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::DirectedGraph;
use crate::numerics::{
    compress, embed_rows, extend_basis, hstack, identity, matrix_json, matrix_vec_json,
    min_eigenvalue, op_norm, orthogonal_complement, range_basis, rank_tol, Matrix, NumericsError,
    ToleranceConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TupleError {
    #[error("tuple has no operators")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator {0} is zero")]
    ZeroOperator(usize),
    #[error("invalid truncation data: {0}")]
    InvalidLevels(String),
    #[error("tuple does not satisfy the partial isometry relations (relation {relation}, residual {residual:e})")]
    RelationsFailed { relation: u8, residual: f64 },
    #[error("range of operator {0} is not supported by a unique initial projection")]
    AmbiguousSupport(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Fock level of a basis vector. The ambient space of a dilation sits at a
/// reserved level that is always retained; in JSON it is written as `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Ambient,
    Fock(usize),
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Level::Ambient => s.serialize_i64(-1),
            Level::Fock(l) => s.serialize_u64(*l as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match i64::deserialize(d)? {
            -1 => Ok(Level::Ambient),
            l if l >= 0 => Ok(Level::Fock(l as usize)),
            other => Err(serde::de::Error::custom(format!("invalid level {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "truncated")]
    Truncated { depth: usize, levels: Vec<Level> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TupleRepr")]
pub struct OperatorTuple {
    #[serde(rename = "dim")]
    space_dim: usize,
    mode: Mode,
    #[serde(with = "matrix_vec_json")]
    ops: Vec<Matrix>,
}

#[derive(Deserialize)]
struct TupleRepr {
    dim: usize,
    #[serde(default = "exact_mode")]
    mode: Mode,
    #[serde(with = "matrix_vec_json")]
    ops: Vec<Matrix>,
}

fn exact_mode() -> Mode {
    Mode::Exact
}

impl TryFrom<TupleRepr> for OperatorTuple {
    type Error = TupleError;

    fn try_from(repr: TupleRepr) -> Result<Self, Self::Error> {
        let tuple = Self::new(repr.ops, repr.mode)?;
        if tuple.space_dim != repr.dim {
            return Err(TupleError::DimensionMismatch(format!(
                "declared dim {} but operators are {}x{}",
                repr.dim, tuple.space_dim, tuple.space_dim
            )));
        }
        Ok(tuple)
    }
}

impl OperatorTuple {
    pub fn new(ops: Vec<Matrix>, mode: Mode) -> Result<Self, TupleError> {
        let first = ops.first().ok_or(TupleError::Empty)?;
        let dim = first.nrows();
        for (i, op) in ops.iter().enumerate() {
            if op.nrows() != dim || op.ncols() != dim {
                return Err(TupleError::DimensionMismatch(format!(
                    "operator {i} is {}x{}, expected {dim}x{dim}",
                    op.nrows(),
                    op.ncols()
                )));
            }
            if op.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                return Err(TupleError::ZeroOperator(i));
            }
        }
        if let Mode::Truncated { depth, levels } = &mode {
            if *depth == 0 {
                return Err(TupleError::InvalidLevels("depth must be at least 1".into()));
            }
            if levels.len() != dim {
                return Err(TupleError::InvalidLevels(format!(
                    "{} levels for a space of dimension {dim}",
                    levels.len()
                )));
            }
            if let Some(l) = levels.iter().find_map(|l| match l {
                Level::Fock(l) if l > depth => Some(*l),
                _ => None,
            }) {
                return Err(TupleError::InvalidLevels(format!(
                    "level {l} exceeds depth {depth}"
                )));
            }
        }
        Ok(Self {
            space_dim: dim,
            mode,
            ops,
        })
    }

    pub fn exact(ops: Vec<Matrix>) -> Result<Self, TupleError> {
        Self::new(ops, Mode::Exact)
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn ops(&self) -> &[Matrix] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    /// Basis indices on which relations are checked.
    pub fn retained_indices(&self) -> Vec<usize> {
        match &self.mode {
            Mode::Exact => (0..self.space_dim).collect(),
            Mode::Truncated { depth, levels } => levels
                .iter()
                .enumerate()
                .filter(|(_, l)| match l {
                    Level::Ambient => true,
                    Level::Fock(l) => l < depth,
                })
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// `Σ S_e S_e*` on the full space.
    pub fn range_sum(&self) -> Matrix {
        let n = self.space_dim;
        self.ops
            .iter()
            .fold(Matrix::zeros(n, n), |acc, s| acc + s * s.adjoint())
    }

    /// Direct sum of two tuples with the same number of operators.
    pub fn direct_sum(&self, other: &OperatorTuple) -> Result<OperatorTuple, TupleError> {
        if self.len() != other.len() {
            return Err(TupleError::DimensionMismatch(format!(
                "{} operators vs {}",
                self.len(),
                other.len()
            )));
        }
        let ops = self
            .ops
            .iter()
            .zip(&other.ops)
            .map(|(a, b)| crate::numerics::direct_sum(a, b))
            .collect();
        let mode = match (&self.mode, &other.mode) {
            (Mode::Exact, Mode::Exact) => Mode::Exact,
            (a, b) => {
                let (depth_a, levels_a) = truncation_view(a, self.space_dim);
                let (depth_b, levels_b) = truncation_view(b, other.space_dim);
                let depth = match (depth_a, depth_b) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(TupleError::InvalidLevels(format!(
                            "depths {x} and {y} differ"
                        )))
                    }
                    (Some(x), _) | (_, Some(x)) => x,
                    (None, None) => unreachable!("both exact handled above"),
                };
                let mut levels = levels_a;
                levels.extend(levels_b);
                Mode::Truncated { depth, levels }
            }
        };
        OperatorTuple::new(ops, mode)
    }
}

fn truncation_view(mode: &Mode, dim: usize) -> (Option<usize>, Vec<Level>) {
    match mode {
        Mode::Exact => (None, vec![Level::Ambient; dim]),
        Mode::Truncated { depth, levels } => (Some(*depth), levels.clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationResiduals {
    /// `(S_i* S_i)² = S_i* S_i`.
    pub idempotence: f64,
    /// Amount by which `I - Σ S_i S_i*` fails to be positive.
    pub row_contraction: f64,
    /// Initial projections equal or orthogonal.
    pub initial_compatibility: f64,
    /// Each final projection below some initial projection.
    pub range_support: f64,
    /// Distinct initial projections sum to the identity.
    pub partition_of_unity: f64,
}

impl RelationResiduals {
    fn as_array(&self) -> [f64; 5] {
        [
            self.idempotence,
            self.row_contraction,
            self.initial_compatibility,
            self.range_support,
            self.partition_of_unity,
        ]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }

    /// First relation (1-based) whose residual exceeds `eps`.
    pub fn first_failure(&self, eps: f64) -> Option<(u8, f64)> {
        self.as_array()
            .into_iter()
            .enumerate()
            .find(|(_, r)| *r > eps)
            .map(|(i, r)| (i as u8 + 1, r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaggerReport {
    pub residuals: RelationResiduals,
    pub verdict: bool,
    /// Dimension of the space the relations were checked on.
    pub checked_dim: usize,
    /// Distinct initial projections (compressed), indexed by vertex.
    #[serde(with = "matrix_vec_json")]
    pub initial_projections: Vec<Matrix>,
    /// Vertex whose projection is `S_i* S_i`.
    pub source: Vec<usize>,
    /// Vertex whose projection dominates `S_i S_i*`, when one does.
    pub range: Vec<Option<usize>>,
}

impl DaggerReport {
    pub fn require(&self, eps: f64) -> Result<(), TupleError> {
        match self.residuals.first_failure(eps) {
            Some((relation, residual)) => Err(TupleError::RelationsFailed { relation, residual }),
            None => Ok(()),
        }
    }
}

/// Check the five partial isometry relations on the retained block.
pub fn check_dagger(s: &OperatorTuple, tol: &ToleranceConfig) -> Result<DaggerReport, TupleError> {
    let eps = tol.eps_rank;
    let idx = s.retained_indices();
    let m = idx.len();
    let initial: Vec<Matrix> = s
        .ops()
        .iter()
        .map(|op| compress(&(op.adjoint() * op), &idx))
        .collect();
    let finals: Vec<Matrix> = s
        .ops()
        .iter()
        .map(|op| compress(&(op * op.adjoint()), &idx))
        .collect();

    let idempotence = initial
        .iter()
        .map(|q| op_norm(&(q * q - q)))
        .fold(0.0, f64::max);

    let final_sum = finals.iter().fold(Matrix::zeros(m, m), |acc, f| acc + f);
    let row_contraction = (-min_eigenvalue(&(identity(m) - &final_sum))?).max(0.0);

    let mut initial_compatibility = 0.0_f64;
    for i in 0..initial.len() {
        for j in i + 1..initial.len() {
            let equal = op_norm(&(&initial[i] - &initial[j]));
            let orthogonal = op_norm(&(&initial[i] * &initial[j]));
            initial_compatibility = initial_compatibility.max(equal.min(orthogonal));
        }
    }

    let mut projections: Vec<Matrix> = Vec::new();
    let mut source = Vec::with_capacity(initial.len());
    for q in &initial {
        let found = projections.iter().position(|p| op_norm(&(p - q)) <= eps);
        match found {
            Some(v) => source.push(v),
            None => {
                source.push(projections.len());
                projections.push(q.clone());
            }
        }
    }

    let mut range_support = 0.0_f64;
    let mut range = Vec::with_capacity(finals.len());
    for f in &finals {
        let (best, residual) = projections
            .iter()
            .enumerate()
            .map(|(v, q)| (v, op_norm(&(f - q * f))))
            .fold((None, f64::INFINITY), |(bv, br), (v, r)| {
                if r < br {
                    (Some(v), r)
                } else {
                    (bv, br)
                }
            });
        range_support = range_support.max(residual);
        range.push(best.filter(|_| residual <= eps));
    }

    let projection_sum = projections
        .iter()
        .fold(Matrix::zeros(m, m), |acc, q| acc + q);
    let partition_of_unity = op_norm(&(projection_sum - identity(m)));

    let residuals = RelationResiduals {
        idempotence,
        row_contraction,
        initial_compatibility,
        range_support,
        partition_of_unity,
    };
    Ok(DaggerReport {
        verdict: residuals.max() <= eps,
        residuals,
        checked_dim: m,
        initial_projections: projections,
        source,
        range,
    })
}

fn graph_from_report(report: &DaggerReport) -> Result<DirectedGraph, TupleError> {
    let mut edges = Vec::with_capacity(report.source.len());
    for (i, (&s, r)) in report.source.iter().zip(&report.range).enumerate() {
        let r = r.ok_or(TupleError::AmbiguousSupport(i))?;
        edges.push((s, r));
    }
    DirectedGraph::new(report.initial_projections.len(), edges)
        .map_err(|e| TupleError::InvalidLevels(e.to_string()))
}

/// Directed graph of a tuple satisfying the relations; edge `i` is operator `i`.
pub fn extract_graph(
    s: &OperatorTuple,
    tol: &ToleranceConfig,
) -> Result<DirectedGraph, TupleError> {
    let report = check_dagger(s, tol)?;
    report.require(tol.eps_rank)?;
    graph_from_report(&report)
}

/// `I - Σ S_e S_e*` on the retained block.
fn wandering_operator(s: &OperatorTuple, idx: &[usize]) -> Matrix {
    identity(idx.len()) - compress(&s.range_sum(), idx)
}

/// Orthonormal basis of the wandering subspace, in full coordinates.
pub fn wandering_subspace(s: &OperatorTuple, tol: &ToleranceConfig) -> Result<Matrix, TupleError> {
    check_dagger(s, tol)?.require(tol.eps_rank)?;
    let idx = s.retained_indices();
    let basis = range_basis(&wandering_operator(s, &idx), tol);
    Ok(embed_rows(&basis, &idx, s.space_dim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoldDecomposition {
    pub graph: DirectedGraph,
    #[serde(with = "matrix_vec_json")]
    pub initial_projections: Vec<Matrix>,
    #[serde(with = "matrix_json")]
    pub wandering_basis: Matrix,
    #[serde(with = "matrix_json")]
    pub pure_basis: Matrix,
    #[serde(with = "matrix_json")]
    pub coisometric_basis: Matrix,
    pub alpha: Vec<usize>,
}

impl WoldDecomposition {
    pub fn pure_dim(&self) -> usize {
        self.pure_basis.ncols()
    }

    pub fn coisometric_dim(&self) -> usize {
        self.coisometric_basis.ncols()
    }

    /// Largest `‖(I - P) X P‖` over `X ∈ {S_e, S_e*}` and `P` either part.
    pub fn reducing_residual(&self, s: &OperatorTuple) -> f64 {
        let n = s.space_dim();
        let parts = [&self.pure_basis, &self.coisometric_basis];
        let mut worst = 0.0_f64;
        for basis in parts {
            if basis.ncols() == 0 {
                continue;
            }
            let p = basis * basis.adjoint();
            let complement = identity(n) - &p;
            for op in s.ops() {
                worst = worst.max(op_norm(&(&complement * op * basis)));
                worst = worst.max(op_norm(&(&complement * op.adjoint() * basis)));
            }
        }
        worst
    }
}

/// Smallest subspace containing `seed` and invariant under every operator.
pub fn saturate(ops: &[Matrix], seed: &Matrix, tol: &ToleranceConfig) -> Matrix {
    let dim = seed.nrows();
    let mut basis = range_basis(seed, tol);
    let mut frontier = basis.clone();
    while frontier.ncols() > 0 && basis.ncols() < dim {
        let images: Vec<Matrix> = ops.iter().map(|op| op * &frontier).collect();
        let refs: Vec<&Matrix> = images.iter().collect();
        let stacked = hstack(&refs, dim);
        let grown = extend_basis(&basis, &stacked, tol);
        let added: Vec<usize> = (basis.ncols()..grown.ncols()).collect();
        frontier = crate::numerics::select_columns(&grown, &added);
        basis = grown;
    }
    basis
}

pub fn wold_decompose(
    s: &OperatorTuple,
    tol: &ToleranceConfig,
) -> Result<WoldDecomposition, TupleError> {
    let report = check_dagger(s, tol)?;
    report.require(tol.eps_rank)?;
    let graph = graph_from_report(&report)?;
    let idx = s.retained_indices();
    let wandering = range_basis(&wandering_operator(s, &idx), tol);
    let wandering_projection = &wandering * wandering.adjoint();
    let alpha = report
        .initial_projections
        .iter()
        .map(|q| rank_tol(&(q * &wandering_projection), tol))
        .collect();
    let wandering_basis = embed_rows(&wandering, &idx, s.space_dim());
    let pure_basis = saturate(s.ops(), &wandering_basis, tol);
    let coisometric_basis = orthogonal_complement(&pure_basis, s.space_dim(), tol);
    Ok(WoldDecomposition {
        graph,
        initial_projections: report.initial_projections,
        wandering_basis,
        pure_basis,
        coisometric_basis,
        alpha,
    })
}

/// `‖I - Σ S_e S_e*‖ ≤ eps_rank` on the retained block. Assumes the
/// relations hold.
pub fn is_fully_coisometric(s: &OperatorTuple, tol: &ToleranceConfig) -> bool {
    let idx = s.retained_indices();
    op_norm(&wandering_operator(s, &idx)) <= tol.eps_rank
}

/// `trace Σ_{|w| = d} w(A) w(A)*` for each requested depth, traced over the
/// index set `idx`. Non-composable words contribute nothing for tuples
/// carrying a graph structure, so the sum runs over all words.
pub fn tail_sums(ops: &[Matrix], depths: &[usize], idx: &[usize]) -> Vec<f64> {
    let Some(first) = ops.first() else {
        return vec![0.0; depths.len()];
    };
    let n = first.nrows();
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let mut traces = Vec::with_capacity(max_depth + 1);
    let mut level = identity(n);
    let trace = |m: &Matrix| idx.iter().map(|&i| m[(i, i)].re).sum::<f64>();
    traces.push(trace(&level));
    for _ in 0..max_depth {
        level = ops.iter().fold(Matrix::zeros(n, n), |acc, op| {
            acc + op * &level * op.adjoint()
        });
        traces.push(trace(&level));
    }
    depths.iter().map(|&d| traces[d]).collect()
}

/// Tail sums of the tuple over its retained block. Assumes the relations
/// hold; the sequence is then nonincreasing in depth.
pub fn purity_margin(s: &OperatorTuple, depths: &[usize]) -> Vec<f64> {
    tail_sums(s.ops(), depths, &s.retained_indices())
}

/// Purity verdict from tail sums: the tail at the deepest requested level
/// has vanished.
pub fn tails_vanish(tails: &[f64], tol: &ToleranceConfig) -> bool {
    tails.last().is_some_and(|t| *t <= tol.eps_rank)
}
