//! Random generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use pidil_core::families::{finest_family, validate_family, ProjectionFamily, RowContraction};
use pidil_core::graph::DirectedGraph;
use pidil_core::numerics::{c, identity, op_norm, real, Matrix, ToleranceConfig, C64};
use pidil_core::partitions::blocks_of;
use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-distributed unitary via QR with the phases of `R` removed.
pub fn random_unitary(rng: &mut StdRng, n: usize) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let qr = gaussian(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / real(d.norm())
            } else {
                real(1.0)
            }
        } else {
            real(0.0)
        }
    });
    q * phases
}

fn coordinate_projection(dim: usize, range: std::ops::Range<usize>) -> Matrix {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j && range.contains(&i) {
            real(1.0)
        } else {
            real(0.0)
        }
    })
}

/// A row contraction with a planted stabilizing family.
#[derive(Debug, Clone)]
pub struct Case {
    pub t: RowContraction,
    pub planted: ProjectionFamily,
    /// `(s(i), r(i))` in the planted family.
    pub planted_edges: Vec<(usize, usize)>,
    pub scale: f64,
}

/// Block-structured row contraction: operator `i` maps block `s(i)` into
/// block `r(i)`, every block is a source, and `‖Σ T_i T_i*‖ = scale`.
pub fn planted_case(rng: &mut StdRng, max_dim: usize, max_ops: usize, max_blocks: usize) -> Case {
    let n = rng.random_range(1..=max_ops);
    let blocks = rng.random_range(1..=max_blocks.min(n));
    let dim = rng.random_range(blocks..=max_dim.max(blocks));
    // block sizes: each at least one, the rest scattered
    let mut sizes = vec![1usize; blocks];
    for _ in blocks..dim {
        let k = rng.random_range(0..blocks);
        sizes[k] += 1;
    }
    let mut offsets = vec![0usize; blocks + 1];
    for k in 0..blocks {
        offsets[k + 1] = offsets[k] + sizes[k];
    }
    let mut sources: Vec<usize> = (0..n)
        .map(|i| {
            if i < blocks {
                i
            } else {
                rng.random_range(0..blocks)
            }
        })
        .collect();
    // shuffle so operator order does not reveal block order
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        sources.swap(i, j);
    }
    let edges: Vec<(usize, usize)> = sources
        .iter()
        .map(|&s| (s, rng.random_range(0..blocks)))
        .collect();

    let mut ops: Vec<Matrix> = edges
        .iter()
        .map(|&(s, r)| {
            let mut t = Matrix::zeros(dim, dim);
            let block = gaussian(rng, sizes[r], sizes[s]);
            t.view_mut((offsets[r], offsets[s]), (sizes[r], sizes[s]))
                .copy_from(&block);
            t
        })
        .collect();
    let scale = if rng.random_bool(0.2) {
        1.0
    } else {
        rng.random_range(0.3..0.95)
    };
    let sum = ops
        .iter()
        .fold(Matrix::zeros(dim, dim), |acc, t| acc + t * t.adjoint());
    let factor = real((scale / op_norm(&sum)).sqrt());
    for t in &mut ops {
        *t *= factor;
    }
    let mut projections: Vec<Matrix> = (0..blocks)
        .map(|k| coordinate_projection(dim, offsets[k]..offsets[k + 1]))
        .collect();
    if rng.random_bool(0.7) {
        let u = random_unitary(rng, dim);
        for t in &mut ops {
            *t = &u * &*t * u.adjoint();
        }
        for p in &mut projections {
            *p = &u * &*p * u.adjoint();
        }
    }
    Case {
        t: RowContraction::new(ops).expect("nonzero gaussian blocks"),
        planted: ProjectionFamily::new(projections),
        planted_edges: edges,
        scale,
    }
}

/// A random valid family for `case`: the finest family when it exists and
/// validates, else the planted one, then a random coarsening of it.
pub fn sweep_family(rng: &mut StdRng, case: &Case, tol: &ToleranceConfig) -> ProjectionFamily {
    let base = match finest_family(&case.t, tol) {
        Ok(f) if validate_family(&case.t, &f, tol).is_ok() => f,
        _ => case.planted.clone(),
    };
    if rng.random_bool(0.5) {
        return base;
    }
    let labels: Vec<usize> = (0..base.len())
        .map(|_| rng.random_range(0..base.len()))
        .collect();
    let rgs = pidil_core::partitions::normalize(&labels);
    base.coarsen(&blocks_of(&rgs))
}

pub fn random_graph(rng: &mut StdRng, max_vertices: usize, max_edges: usize) -> DirectedGraph {
    let v = rng.random_range(1..=max_vertices);
    let e = rng.random_range(0..=max_edges);
    let edges = (0..e)
        .map(|_| (rng.random_range(0..v), rng.random_range(0..v)))
        .collect();
    DirectedGraph::new(v, edges).unwrap()
}

/// Every vertex has at least one out-edge.
pub fn random_graph_without_sinks(
    rng: &mut StdRng,
    max_vertices: usize,
    extra_edges: usize,
) -> DirectedGraph {
    let v = rng.random_range(1..=max_vertices);
    let mut edges: Vec<(usize, usize)> = (0..v).map(|s| (s, rng.random_range(0..v))).collect();
    for _ in 0..rng.random_range(0..=extra_edges) {
        edges.push((rng.random_range(0..v), rng.random_range(0..v)));
    }
    DirectedGraph::new(v, edges).unwrap()
}

/// Edge sets of all simple cycles, found by exhaustive search from every
/// starting edge. A cycle is identified by its sorted edge ids.
pub fn simple_cycles(graph: &DirectedGraph) -> Vec<Vec<usize>> {
    fn extend(
        graph: &DirectedGraph,
        origin: usize,
        at: usize,
        visited: &mut Vec<usize>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        for (e, &(s, d)) in graph.edges().iter().enumerate() {
            if s != at {
                continue;
            }
            path.push(e);
            if d == origin {
                let mut cycle = path.clone();
                cycle.sort_unstable();
                if !out.contains(&cycle) {
                    out.push(cycle);
                }
            } else if !visited.contains(&d) {
                visited.push(d);
                extend(graph, origin, d, visited, path, out);
                visited.pop();
            }
            path.pop();
        }
    }
    let mut out = Vec::new();
    for v in 0..graph.vertex_count() {
        extend(graph, v, v, &mut vec![v], &mut Vec::new(), &mut out);
    }
    out
}

/// Vertices lying on two distinct simple cycles.
pub fn vertices_on_two_cycles(graph: &DirectedGraph) -> Vec<usize> {
    let cycles = simple_cycles(graph);
    (0..graph.vertex_count())
        .filter(|&v| {
            cycles
                .iter()
                .filter(|cycle| cycle.iter().any(|&e| graph.src(e) == v))
                .count()
                >= 2
        })
        .collect()
}

/// Bell numbers from Stirling numbers of the second kind.
pub fn bell_oracle(k: usize) -> u64 {
    let mut stirling = vec![vec![0u64; k + 1]; k + 1];
    stirling[0][0] = 1;
    for n in 1..=k {
        for j in 1..=n {
            stirling[n][j] = j as u64 * stirling[n - 1][j] + stirling[n - 1][j - 1];
        }
    }
    stirling[k].iter().sum()
}

/// Exact fully coisometric tuple: block `v` is mapped unitarily onto block
/// `f(v)` for a permutation `f` preserving block sizes.
pub fn permutation_tuple(rng: &mut StdRng, max_vertices: usize, max_block: usize) -> Vec<Matrix> {
    let v = rng.random_range(1..=max_vertices);
    let sizes: Vec<usize> = (0..v).map(|_| rng.random_range(1..=max_block)).collect();
    let dim: usize = sizes.iter().sum();
    let mut offsets = vec![0usize; v + 1];
    for k in 0..v {
        offsets[k + 1] = offsets[k] + sizes[k];
    }
    let mut f: Vec<usize> = (0..v).collect();
    for size in 1..=max_block {
        let mut class: Vec<usize> = (0..v).filter(|&k| sizes[k] == size).collect();
        let original = class.clone();
        for i in (1..class.len()).rev() {
            let j = rng.random_range(0..=i);
            class.swap(i, j);
        }
        for (a, b) in original.iter().zip(&class) {
            f[*a] = *b;
        }
    }
    let mut ops: Vec<Matrix> = (0..v)
        .map(|k| {
            let mut s = Matrix::zeros(dim, dim);
            let u = random_unitary(rng, sizes[k]);
            s.view_mut((offsets[f[k]], offsets[k]), (sizes[k], sizes[k]))
                .copy_from(&u);
            s
        })
        .collect();
    if rng.random_bool(0.5) {
        let w = random_unitary(rng, dim);
        for s in &mut ops {
            *s = &w * &*s * w.adjoint();
        }
    }
    ops
}

pub fn is_identity(m: &Matrix, eps: f64) -> bool {
    op_norm(&(m - identity(m.nrows()))) <= eps
}

pub fn zero() -> C64 {
    real(0.0)
}
