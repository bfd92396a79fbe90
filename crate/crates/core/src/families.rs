//! Stabilizing projection families of a row contraction and the poset they
//! form under refinement.
//!
//! A family `{P_k}` stabilizes `T` when every `P_k T_i` and every `T_i P_k`
//! is either `T_i` or `0`, and the `P_k` partition the identity. Each `T_i`
//! then has a source block `s(i)` with `T_i P_s = T_i` and a range block
//! `r(i)` with `P_r T_i = T_i`; these give the family graph.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{deform, DirectedGraph, GraphError};
use crate::numerics::{
    hermitian_part, hstack, identity, matrix_vec_json, max_abs, op_norm, projection_defect,
    range_basis, subspaces_orthogonal, Matrix, ToleranceConfig,
};
use crate::partitions::{blocks_of, normalize, restricted_growth_strings};

/// Default bound on the number of finest blocks for poset enumeration.
pub const DEFAULT_BLOCK_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("row contraction has no operators")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator {0} is zero")]
    ZeroOperator(usize),
    #[error("not a row contraction: Σ T_i T_i* exceeds the identity by {excess:e}")]
    NotRowContraction { excess: f64 },
    #[error("projections do not partition the identity: {0}")]
    NotAPartition(String),
    #[error("projection {block} does not stabilize operator {op}")]
    NotStabilizing { op: usize, block: usize },
    #[error("projection {0} is annihilated by every operator")]
    AnnihilatedBlock(usize),
    #[error("ranges and co-ranges do not span the space (deficit {deficit})")]
    NormalizationFailed { deficit: usize },
    #[error("families do not commute (commutator norm {norm:e})")]
    NonCommutingFamilies { norm: f64 },
    #[error("finest family has {blocks} blocks, cap is {cap}")]
    TooManyBlocks { blocks: usize, cap: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RowContractionRepr")]
pub struct RowContraction {
    #[serde(rename = "dim")]
    dim: usize,
    #[serde(with = "matrix_vec_json")]
    ops: Vec<Matrix>,
}

#[derive(Deserialize)]
struct RowContractionRepr {
    dim: usize,
    #[serde(with = "matrix_vec_json")]
    ops: Vec<Matrix>,
}

impl TryFrom<RowContractionRepr> for RowContraction {
    type Error = FamilyError;

    fn try_from(repr: RowContractionRepr) -> Result<Self, Self::Error> {
        let t = Self::new(repr.ops)?;
        if t.dim != repr.dim {
            return Err(FamilyError::DimensionMismatch(format!(
                "declared dim {} but operators have dimension {}",
                repr.dim, t.dim
            )));
        }
        Ok(t)
    }
}

impl RowContraction {
    /// Shape checks only; see [`RowContraction::check_contractive`].
    pub fn new(ops: Vec<Matrix>) -> Result<Self, FamilyError> {
        let dim = ops.first().ok_or(FamilyError::Empty)?.nrows();
        for (i, op) in ops.iter().enumerate() {
            if op.shape() != (dim, dim) {
                return Err(FamilyError::DimensionMismatch(format!(
                    "operator {i} is {}x{}, expected {dim}x{dim}",
                    op.nrows(),
                    op.ncols()
                )));
            }
            if op.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                return Err(FamilyError::ZeroOperator(i));
            }
        }
        Ok(Self { dim, ops })
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    /// `Σ T_i T_i*`.
    pub fn range_sum(&self) -> Matrix {
        self.ops
            .iter()
            .fold(Matrix::zeros(self.dim, self.dim), |acc, t| {
                acc + t * t.adjoint()
            })
    }

    pub fn check_contractive(&self, tol: &ToleranceConfig) -> Result<(), FamilyError> {
        let gap = identity(self.dim) - self.range_sum();
        let min = crate::numerics::min_eigenvalue(&gap).unwrap_or(0.0);
        if min < -tol.eps_rank {
            return Err(FamilyError::NotRowContraction { excess: -min });
        }
        Ok(())
    }

    /// Ranges of every `T_i` followed by ranges of every `T_i*`.
    fn range_subspaces(&self, tol: &ToleranceConfig) -> Vec<Matrix> {
        let ranges = self.ops.iter().map(|t| range_basis(t, tol));
        let coranges = self.ops.iter().map(|t| range_basis(&t.adjoint(), tol));
        ranges.chain(coranges).collect()
    }

    /// Dimension of the space missed by all ranges and co-ranges.
    pub fn normalization_deficit(&self, tol: &ToleranceConfig) -> usize {
        let subspaces = self.range_subspaces(tol);
        let refs: Vec<&Matrix> = subspaces.iter().collect();
        let span = range_basis(&hstack(&refs, self.dim), tol);
        self.dim - span.ncols()
    }

    pub fn is_normalized(&self, tol: &ToleranceConfig) -> bool {
        self.normalization_deficit(tol) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFamily {
    #[serde(with = "matrix_vec_json")]
    pub projections: Vec<Matrix>,
}

impl ProjectionFamily {
    pub fn new(projections: Vec<Matrix>) -> Self {
        Self { projections }
    }

    pub fn trivial(dim: usize) -> Self {
        Self::new(vec![identity(dim)])
    }

    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    /// Blockwise sums: block `b` of `partition` becomes member `b`.
    pub fn coarsen(&self, partition: &[Vec<usize>]) -> ProjectionFamily {
        let dim = self.projections.first().map_or(0, |p| p.nrows());
        let projections = partition
            .iter()
            .map(|block| {
                block.iter().fold(Matrix::zeros(dim, dim), |acc, &k| {
                    acc + &self.projections[k]
                })
            })
            .collect();
        ProjectionFamily::new(projections)
    }

    /// Sort members by the least basis index in their range.
    pub fn canonicalize(mut self, tol: &ToleranceConfig) -> Self {
        let mut keyed: Vec<(CanonicalKey, Matrix)> = self
            .projections
            .drain(..)
            .map(|p| (canonical_key(&p, tol), p))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        self.projections = keyed.into_iter().map(|(_, p)| p).collect();
        self
    }
}

type CanonicalKey = (usize, Vec<i64>);

fn canonical_key(p: &Matrix, tol: &ToleranceConfig) -> CanonicalKey {
    let n = p.nrows();
    let lead = (0..n).find(|&j| p[(j, j)].re > tol.eps_rank).unwrap_or(n);
    // tie-break on the quantized diagonal
    let quantize = |x: f64| (x * 1e6).round() as i64;
    let diagonal = (0..n).map(|j| -quantize(p[(j, j)].re)).collect();
    (lead, diagonal)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub valid: bool,
    /// `(s(i), r(i))` per operator.
    pub assignments: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Action {
    Keeps,
    Kills,
}

fn classify(product: &Matrix, t: &Matrix, t_norm: f64, tol: &ToleranceConfig) -> Option<Action> {
    if op_norm(&(product - t)) <= tol.eps_rank * (1.0 + t_norm) {
        Some(Action::Keeps)
    } else if op_norm(product) <= tol.eps_rank {
        Some(Action::Kills)
    } else {
        None
    }
}

fn check_partition(
    dim: usize,
    p: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Result<(), FamilyError> {
    if p.is_empty() {
        return Err(FamilyError::NotAPartition("family is empty".into()));
    }
    for (k, proj) in p.projections.iter().enumerate() {
        if proj.shape() != (dim, dim) {
            return Err(FamilyError::DimensionMismatch(format!(
                "projection {k} is {}x{}, expected {dim}x{dim}",
                proj.nrows(),
                proj.ncols()
            )));
        }
        let defect = projection_defect(proj);
        if defect > tol.eps_rel {
            return Err(FamilyError::NotAPartition(format!(
                "member {k} is not a projection (defect {defect:e})"
            )));
        }
    }
    for a in 0..p.len() {
        for b in a + 1..p.len() {
            let overlap = op_norm(&(&p.projections[a] * &p.projections[b]));
            if overlap > tol.eps_rank {
                return Err(FamilyError::NotAPartition(format!(
                    "members {a} and {b} are not orthogonal ({overlap:e})"
                )));
            }
        }
    }
    let sum = p
        .projections
        .iter()
        .fold(Matrix::zeros(dim, dim), |acc, q| acc + q);
    let gap = op_norm(&(sum - identity(dim)));
    if gap > tol.eps_rank {
        return Err(FamilyError::NotAPartition(format!(
            "members sum to the identity only within {gap:e}"
        )));
    }
    Ok(())
}

pub fn validate_family(
    t: &RowContraction,
    p: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Result<FamilyReport, FamilyError> {
    check_partition(t.dim(), p, tol)?;
    let mut assignments = Vec::with_capacity(t.len());
    let mut has_source = vec![false; p.len()];
    for (i, op) in t.ops().iter().enumerate() {
        let norm = op_norm(op);
        let mut source = None;
        let mut range = None;
        for (k, proj) in p.projections.iter().enumerate() {
            let left = classify(&(proj * op), op, norm, tol)
                .ok_or(FamilyError::NotStabilizing { op: i, block: k })?;
            let right = classify(&(op * proj), op, norm, tol)
                .ok_or(FamilyError::NotStabilizing { op: i, block: k })?;
            if left == Action::Keeps {
                if range.is_some() {
                    return Err(FamilyError::NotStabilizing { op: i, block: k });
                }
                range = Some(k);
            }
            if right == Action::Keeps {
                if source.is_some() {
                    return Err(FamilyError::NotStabilizing { op: i, block: k });
                }
                source = Some(k);
            }
        }
        let (Some(s), Some(r)) = (source, range) else {
            return Err(FamilyError::NotStabilizing { op: i, block: 0 });
        };
        has_source[s] = true;
        assignments.push((s, r));
    }
    if let Some(k) = has_source.iter().position(|h| !h) {
        return Err(FamilyError::AnnihilatedBlock(k));
    }
    Ok(FamilyReport {
        valid: true,
        assignments,
    })
}

/// Finest stabilizing family: connected components of the ranges and
/// co-ranges of all `T_i` under "not orthogonal".
pub fn finest_family(
    t: &RowContraction,
    tol: &ToleranceConfig,
) -> Result<ProjectionFamily, FamilyError> {
    let subspaces: Vec<Matrix> = t
        .range_subspaces(tol)
        .into_iter()
        .filter(|b| b.ncols() > 0)
        .collect();
    let mut parent: Vec<usize> = (0..subspaces.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for a in 0..subspaces.len() {
        for b in a + 1..subspaces.len() {
            if !subspaces_orthogonal(&subspaces[a], &subspaces[b], tol) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for a in 0..subspaces.len() {
        let root = find(&mut parent, a);
        let c = *slot.entry(root).or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[c].push(a);
    }
    let mut covered = 0;
    let projections = components
        .iter()
        .map(|members| {
            let refs: Vec<&Matrix> = members.iter().map(|&m| &subspaces[m]).collect();
            let basis = range_basis(&hstack(&refs, t.dim()), tol);
            covered += basis.ncols();
            hermitian_part(&(&basis * basis.adjoint()))
        })
        .collect();
    if covered < t.dim() {
        return Err(FamilyError::NormalizationFailed {
            deficit: t.dim() - covered,
        });
    }
    Ok(ProjectionFamily::new(projections).canonicalize(tol))
}

/// Graph with one vertex per member and edge `i` from `s(i)` to `r(i)`.
pub fn family_graph(
    t: &RowContraction,
    p: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Result<DirectedGraph, FamilyError> {
    let report = validate_family(t, p, tol)?;
    Ok(DirectedGraph::new(p.len(), report.assignments)?)
}

/// Largest `‖P_a P_b - P_b P_a‖` over members of the two families.
pub fn commute_check(p1: &ProjectionFamily, p2: &ProjectionFamily) -> f64 {
    let mut worst = 0.0_f64;
    for a in &p1.projections {
        for b in &p2.projections {
            worst = worst.max(op_norm(&(a * b - b * a)));
        }
    }
    worst
}

/// Family of all non-zero products `P_a P_b`.
pub fn join(
    p1: &ProjectionFamily,
    p2: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Result<ProjectionFamily, FamilyError> {
    let norm = commute_check(p1, p2);
    if norm > tol.eps_rank {
        return Err(FamilyError::NonCommutingFamilies { norm });
    }
    let mut products = Vec::new();
    for a in &p1.projections {
        for b in &p2.projections {
            let product = a * b;
            if max_abs(&product) > tol.eps_rank {
                products.push(hermitian_part(&product));
            }
        }
    }
    Ok(ProjectionFamily::new(products).canonicalize(tol))
}

/// For `P1 ≤ P2`, the partition of `P2`'s members by the `P1` member that
/// contains them; `None` when `P1` is not a coarsening of `P2`.
pub fn refinement_map(
    p1: &ProjectionFamily,
    p2: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Option<Vec<Vec<usize>>> {
    let mut assigned = vec![false; p2.len()];
    let mut partition = Vec::with_capacity(p1.len());
    for p in &p1.projections {
        let group: Vec<usize> = p2
            .projections
            .iter()
            .enumerate()
            .filter(|(_, q)| op_norm(&(p * *q - *q)) <= tol.eps_rank)
            .map(|(b, _)| b)
            .collect();
        let sum = group
            .iter()
            .fold(Matrix::zeros(p.nrows(), p.ncols()), |acc, &b| {
                acc + &p2.projections[b]
            });
        if op_norm(&(p - sum)) > tol.eps_rank {
            return None;
        }
        for &b in &group {
            if assigned[b] {
                return None;
            }
            assigned[b] = true;
        }
        partition.push(group);
    }
    assigned.iter().all(|a| *a).then_some(partition)
}

/// `P1 ≤ P2`: every member of `P1` is a sum of members of `P2`.
pub fn leq(p1: &ProjectionFamily, p2: &ProjectionFamily, tol: &ToleranceConfig) -> bool {
    refinement_map(p1, p2, tol).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosetNode {
    pub index: usize,
    /// Blocks of finest-family members merged into each member.
    pub blocks: Vec<Vec<usize>>,
    pub graph: DirectedGraph,
    pub family: ProjectionFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poset {
    pub finest: ProjectionFamily,
    pub nodes: Vec<PosetNode>,
    /// Covering pairs `(lower, upper)`: `upper` splits one block of `lower`.
    pub hasse: Vec<(usize, usize)>,
    pub minimum: usize,
    pub maximum: usize,
}

impl Poset {
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph Poset {\n");
        for node in &self.nodes {
            let label = node
                .blocks
                .iter()
                .map(|b| {
                    let inner: Vec<String> = b.iter().map(|k| k.to_string()).collect();
                    format!("{{{}}}", inner.join(","))
                })
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(out, "  n{} [label=\"{}\"];", node.index, label);
        }
        for (lo, hi) in &self.hasse {
            let _ = writeln!(out, "  n{lo} -> n{hi};");
        }
        out.push_str("}\n");
        out
    }
}

pub fn enumerate_poset(t: &RowContraction, tol: &ToleranceConfig) -> Result<Poset, FamilyError> {
    enumerate_poset_capped(t, tol, DEFAULT_BLOCK_CAP)
}

/// Every coarsening of the finest family, with the covering relation.
pub fn enumerate_poset_capped(
    t: &RowContraction,
    tol: &ToleranceConfig,
    cap: usize,
) -> Result<Poset, FamilyError> {
    let deficit = t.normalization_deficit(tol);
    if deficit > 0 {
        return Err(FamilyError::NormalizationFailed { deficit });
    }
    let finest = finest_family(t, tol)?;
    let finest_report = validate_family(t, &finest, tol)?;
    let k = finest.len();
    if k > cap {
        return Err(FamilyError::TooManyBlocks { blocks: k, cap });
    }
    let strings = restricted_growth_strings(k);
    let lookup: HashMap<Vec<usize>, usize> = strings
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();

    let mut nodes = Vec::with_capacity(strings.len());
    for (index, rgs) in strings.iter().enumerate() {
        let blocks = blocks_of(rgs);
        let family = finest.coarsen(&blocks);
        let edges = finest_report
            .assignments
            .iter()
            .map(|&(s, r)| (rgs[s], rgs[r]))
            .collect();
        nodes.push(PosetNode {
            index,
            graph: DirectedGraph::new(blocks.len(), edges)?,
            blocks,
            family,
        });
    }

    let mut hasse = Vec::new();
    for (upper, rgs) in strings.iter().enumerate() {
        let count = nodes[upper].blocks.len();
        for a in 0..count {
            for b in a + 1..count {
                let merged: Vec<usize> = rgs.iter().map(|&x| if x == b { a } else { x }).collect();
                let lower = lookup[&normalize(&merged)];
                hasse.push((lower, upper));
            }
        }
    }
    hasse.sort_unstable();

    Ok(Poset {
        minimum: 0,
        maximum: strings.len() - 1,
        finest,
        nodes,
        hasse,
    })
}

/// Quotient of `family_graph(P2)` realizing `family_graph(P1)` for `P1 ≤ P2`.
pub fn deformation_between(
    t: &RowContraction,
    p1: &ProjectionFamily,
    p2: &ProjectionFamily,
    tol: &ToleranceConfig,
) -> Result<Option<DirectedGraph>, FamilyError> {
    let Some(partition) = refinement_map(p1, p2, tol) else {
        return Ok(None);
    };
    let g2 = family_graph(t, p2, tol)?;
    Ok(Some(deform(&g2, &partition)?))
}
