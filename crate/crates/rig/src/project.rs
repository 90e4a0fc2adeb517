//! Projection of the bipartite graph onto the intersection graph.
//!
//! Two vertices are adjacent iff they share at least one element. Degrees
//! are computed by deduplicating, per vertex, the union of `element ->
//! vertices` rows over the vertex's elements — the per-element cliques are
//! never materialised as edges, so a single popular element cannot force
//! quadratic work into degree extraction. [`project_edges`] does materialise
//! edges and is therefore budgeted.

use std::io::{self, Write};

use thiserror::Error;

use crate::genbip::BipartiteGraph;

/// Default cap on materialised projected edges.
pub const DEFAULT_EDGE_BUDGET: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error(
        "projected edge bound {bound} exceeds budget {budget}: element {element} alone \
         joins {element_degree} vertices (clique of {clique_edges} edges)"
    )]
    EdgeBudgetExceeded {
        bound: u64,
        budget: u64,
        element: u32,
        element_degree: u64,
        clique_edges: u64,
    },
}

/// Degree of one vertex in the intersection graph, optionally split by a
/// neighbour-weight threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegreeRecord {
    pub vertex: u32,
    pub degree: u32,
    /// Neighbours with vertex weight `<= threshold` / `> threshold`. The two
    /// always sum to `degree`.
    pub split: Option<(u32, u32)>,
}

/// Reusable visited-marks for neighbour deduplication.
struct Stamps {
    marks: Vec<u32>,
    current: u32,
}

impl Stamps {
    fn new(n: usize) -> Self {
        Stamps {
            marks: vec![0; n],
            current: 0,
        }
    }

    fn next_round(&mut self) {
        self.current += 1;
    }

    /// True the first time a vertex is seen in the current round.
    fn first_visit(&mut self, v: u32) -> bool {
        let slot = &mut self.marks[v as usize];
        if *slot == self.current {
            false
        } else {
            *slot = self.current;
            true
        }
    }
}

/// Per-vertex intersection-graph degrees.
///
/// A neighbour sharing several elements with the vertex is counted once.
pub fn project_degrees(bip: &BipartiteGraph) -> Vec<DegreeRecord> {
    let n = bip.vertex_elements().rows();
    let mut stamps = Stamps::new(n);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        stamps.next_round();
        let mut degree = 0u32;
        for &j in bip.vertex_elements().row(i) {
            for &v in bip.element_vertices().row(j as usize) {
                if v as usize != i && stamps.first_visit(v) {
                    degree += 1;
                }
            }
        }
        records.push(DegreeRecord {
            vertex: i as u32,
            degree,
            split: None,
        });
    }
    records
}

/// Degrees split at a vertex-weight threshold: `below` counts distinct
/// neighbours with weight `<= threshold`, `above` the rest.
pub fn split_degree_by_weight_threshold(
    bip: &BipartiteGraph,
    threshold: f64,
) -> Vec<DegreeRecord> {
    let n = bip.vertex_elements().rows();
    let weights = bip.weights().vertex_weights();
    let mut stamps = Stamps::new(n);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        stamps.next_round();
        let (mut below, mut above) = (0u32, 0u32);
        for &j in bip.vertex_elements().row(i) {
            for &v in bip.element_vertices().row(j as usize) {
                if v as usize != i && stamps.first_visit(v) {
                    if weights[v as usize] <= threshold {
                        below += 1;
                    } else {
                        above += 1;
                    }
                }
            }
        }
        records.push(DegreeRecord {
            vertex: i as u32,
            degree: below + above,
            split: Some((below, above)),
        });
    }
    records
}

/// The truncation threshold `n^(1/4)` used for the degree split.
pub fn default_split_threshold(n: u64) -> f64 {
    (n as f64).powf(0.25)
}

/// Deduplicated undirected edge list (each pair once, `i < j`, sorted).
pub fn project_edges(bip: &BipartiteGraph) -> Result<Vec<(u32, u32)>, ProjectError> {
    project_edges_with_budget(bip, DEFAULT_EDGE_BUDGET)
}

pub fn project_edges_with_budget(
    bip: &BipartiteGraph,
    budget: u64,
) -> Result<Vec<(u32, u32)>, ProjectError> {
    // Refuse up front via the clique upper bound sum_j C(d_j, 2), naming the
    // largest element; the true count never exceeds the bound.
    let mut bound = 0u64;
    let mut worst = (0u32, 0u64);
    for j in 0..bip.element_vertices().rows() {
        let d = bip.element_vertices().row(j).len() as u64;
        let clique = d * d.saturating_sub(1) / 2;
        if clique > worst.1 {
            worst = (j as u32, d);
        }
        bound = bound.saturating_add(clique);
    }
    if bound > budget {
        let d = worst.1;
        return Err(ProjectError::EdgeBudgetExceeded {
            bound,
            budget,
            element: worst.0,
            element_degree: d,
            clique_edges: d * d.saturating_sub(1) / 2,
        });
    }
    let n = bip.vertex_elements().rows();
    let mut stamps = Stamps::new(n);
    let mut edges = Vec::new();
    for i in 0..n {
        stamps.next_round();
        let start = edges.len();
        for &j in bip.vertex_elements().row(i) {
            for &v in bip.element_vertices().row(j as usize) {
                if v as usize > i && stamps.first_visit(v) {
                    edges.push((i as u32, v));
                }
            }
        }
        edges[start..].sort_unstable();
    }
    Ok(edges)
}

/// CSV export: header `vertex,degree` or `vertex,degree,below,above`.
pub fn degrees_to_csv<W: Write>(records: &[DegreeRecord], out: &mut W) -> io::Result<()> {
    let split = records.iter().any(|r| r.split.is_some());
    if split {
        writeln!(out, "vertex,degree,below,above")?;
        for r in records {
            let (b, a) = r.split.unwrap_or((r.degree, 0));
            writeln!(out, "{},{},{},{}", r.vertex, r.degree, b, a)?;
        }
    } else {
        writeln!(out, "vertex,degree")?;
        for r in records {
            writeln!(out, "{},{}", r.vertex, r.degree)?;
        }
    }
    Ok(())
}
