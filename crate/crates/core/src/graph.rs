//! Directed multigraphs and their path semigroupoids.
//!
//! Edges are identified by position. Loops and parallel edges are ordinary
//! edges. A path `w = e_1 e_2 ... e_m` is read right to left: `e_m` is
//! traversed first, so composability requires `src(e_j) == dst(e_{j+1})`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on the number of paths [`paths_up_to`] will materialize.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {edge} references vertex {vertex} but the graph has {vertex_count} vertices")]
    VertexOutOfRange {
        edge: usize,
        vertex: usize,
        vertex_count: usize,
    },
    #[error("path enumeration would exceed the cap of {cap} paths")]
    DepthOverflow { cap: usize },
    #[error("invalid vertex partition: {0}")]
    InvalidPartition(String),
    #[error("vertex {0} has no outgoing edge")]
    Sink(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr")]
pub struct DirectedGraph {
    #[serde(rename = "vertices")]
    vertex_count: usize,
    /// `(src, dst)` per edge id.
    edges: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct GraphRepr {
    vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphRepr> for DirectedGraph {
    type Error = GraphError;

    fn try_from(repr: GraphRepr) -> Result<Self, Self::Error> {
        Self::new(repr.vertices, repr.edges)
    }
}

impl DirectedGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let graph = Self {
            vertex_count,
            edges,
        };
        graph.check_endpoints()?;
        Ok(graph)
    }

    /// Like [`DirectedGraph::new`] but also rejects sinks.
    pub fn without_sinks(
        vertex_count: usize,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        let graph = Self::new(vertex_count, edges)?;
        if let Some(v) = graph.sinks().first() {
            return Err(GraphError::Sink(*v));
        }
        Ok(graph)
    }

    fn check_endpoints(&self) -> Result<(), GraphError> {
        for (edge, &(s, d)) in self.edges.iter().enumerate() {
            for vertex in [s, d] {
                if vertex >= self.vertex_count {
                    return Err(GraphError::VertexOutOfRange {
                        edge,
                        vertex,
                        vertex_count: self.vertex_count,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn src(&self, edge: usize) -> usize {
        self.edges[edge].0
    }

    pub fn dst(&self, edge: usize) -> usize {
        self.edges[edge].1
    }

    /// Vertices that are not the source of any edge.
    pub fn sinks(&self) -> Vec<usize> {
        let mut has_out = vec![false; self.vertex_count];
        for &(s, _) in &self.edges {
            has_out[s] = true;
        }
        (0..self.vertex_count).filter(|v| !has_out[*v]).collect()
    }

    /// Outgoing edge ids per vertex, in id order.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertex_count];
        for (e, &(s, _)) in self.edges.iter().enumerate() {
            out[s].push(e);
        }
        out
    }
}

/// An element of the path semigroupoid: a vertex (no edges) or a composable
/// word of edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    /// Edge ids, leftmost is traversed last.
    pub edges: Vec<usize>,
    /// Initial vertex (source of the rightmost edge).
    pub start: usize,
    /// Final vertex (destination of the leftmost edge).
    pub end: usize,
}

impl Path {
    pub fn vertex(v: usize) -> Self {
        Self {
            edges: Vec::new(),
            start: v,
            end: v,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `e · self` when composable.
    pub fn prepend(&self, graph: &DirectedGraph, edge: usize) -> Option<Path> {
        if graph.src(edge) != self.end {
            return None;
        }
        let mut edges = Vec::with_capacity(self.edges.len() + 1);
        edges.push(edge);
        edges.extend_from_slice(&self.edges);
        Some(Path {
            edges,
            start: self.start,
            end: graph.dst(edge),
        })
    }
}

pub fn paths_up_to(graph: &DirectedGraph, depth: usize) -> Result<Vec<Path>, GraphError> {
    paths_up_to_capped(graph, depth, DEFAULT_PATH_CAP)
}

/// All paths of length at most `depth`, ordered by length and then
/// lexicographically by edge ids (vertices by index at length zero).
pub fn paths_up_to_capped(
    graph: &DirectedGraph,
    depth: usize,
    cap: usize,
) -> Result<Vec<Path>, GraphError> {
    let mut all: Vec<Path> = (0..graph.vertex_count()).map(Path::vertex).collect();
    if all.len() > cap {
        return Err(GraphError::DepthOverflow { cap });
    }
    let mut level = all.clone();
    for _ in 0..depth {
        let mut next = Vec::new();
        // first letter outermost keeps the level lexicographic
        for e in 0..graph.edge_count() {
            for w in &level {
                if let Some(ew) = w.prepend(graph, e) {
                    next.push(ew);
                    if all.len() + next.len() > cap {
                        return Err(GraphError::DepthOverflow { cap });
                    }
                }
            }
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    Ok(all)
}

/// Strongly connected components, each sorted, ordered by least vertex.
pub fn sccs(graph: &DirectedGraph) -> Vec<Vec<usize>> {
    let n = graph.vertex_count();
    let out = graph.out_edges();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut comps = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (vertex, position in its out-edge list)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < out[v].len() {
                let w = graph.dst(out[v][*pos]);
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps.sort_by_key(|c| c[0]);
    comps
}

/// A vertex carrying two distinct cycles, if any.
///
/// A strongly connected component is a single simple cycle exactly when it
/// has as many internal edges as vertices. Any component with more internal
/// edges has a vertex of internal out-degree at least two, and the two
/// shortest returns through different first edges are distinct cycles there.
pub fn has_double_cycle(graph: &DirectedGraph) -> Option<usize> {
    let comps = sccs(graph);
    let mut comp_of = vec![0usize; graph.vertex_count()];
    for (ci, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    let mut internal = vec![0usize; comps.len()];
    let mut internal_out = vec![0usize; graph.vertex_count()];
    for &(s, d) in graph.edges() {
        if comp_of[s] == comp_of[d] {
            internal[comp_of[s]] += 1;
            internal_out[s] += 1;
        }
    }
    comps
        .iter()
        .enumerate()
        .filter(|(ci, comp)| internal[*ci] > comp.len())
        .find_map(|(_, comp)| comp.iter().copied().find(|v| internal_out[*v] >= 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeClass {
    TypeI,
    NotTypeI,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeVerdict {
    pub verdict: TypeClass,
    pub witness: Option<usize>,
    pub reason: String,
}

/// Type I classification of the graph algebra of a finite graph.
///
/// For finite graphs the exit-and-return condition on infinite paths is
/// vacuous, so the verdict is decided by double cycles alone.
pub fn is_type_one(graph: &DirectedGraph) -> TypeVerdict {
    match has_double_cycle(graph) {
        Some(v) => TypeVerdict {
            verdict: TypeClass::NotTypeI,
            witness: Some(v),
            reason: format!("vertex {v} lies on two distinct cycles"),
        },
        None => TypeVerdict {
            verdict: TypeClass::TypeI,
            witness: None,
            reason: "no vertex lies on two distinct cycles".into(),
        },
    }
}

/// Quotient by a vertex partition; block `b` becomes vertex `b`, edge ids
/// are preserved.
pub fn deform(
    graph: &DirectedGraph,
    partition: &[Vec<usize>],
) -> Result<DirectedGraph, GraphError> {
    let n = graph.vertex_count();
    let mut block_of = vec![usize::MAX; n];
    for (b, block) in partition.iter().enumerate() {
        if block.is_empty() {
            return Err(GraphError::InvalidPartition(format!("block {b} is empty")));
        }
        for &v in block {
            if v >= n {
                return Err(GraphError::InvalidPartition(format!(
                    "vertex {v} out of range"
                )));
            }
            if block_of[v] != usize::MAX {
                return Err(GraphError::InvalidPartition(format!(
                    "vertex {v} appears twice"
                )));
            }
            block_of[v] = b;
        }
    }
    if let Some(v) = block_of.iter().position(|b| *b == usize::MAX) {
        return Err(GraphError::InvalidPartition(format!(
            "vertex {v} is not covered"
        )));
    }
    let edges = graph
        .edges()
        .iter()
        .map(|&(s, d)| (block_of[s], block_of[d]))
        .collect();
    DirectedGraph::new(partition.len(), edges)
}

pub fn to_dot(graph: &DirectedGraph) -> String {
    let mut out = String::from("digraph G {\n");
    for v in 0..graph.vertex_count() {
        let _ = writeln!(out, "  v{v};");
    }
    for (e, &(s, d)) in graph.edges().iter().enumerate() {
        let _ = writeln!(out, "  v{s} -> v{d} [label=\"e{e}\"];");
    }
    out.push_str("}\n");
    out
}
