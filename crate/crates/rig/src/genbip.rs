//! Exact generation of the random bipartite graph.
//!
//! Two generators produce identically distributed graphs:
//!
//! * [`generate_naive`] flips one coin per `(vertex, element)` pair in
//!   row-major order. It is the permanent testing oracle, guarded by a pair
//!   budget (default 10^8).
//! * [`generate_thinned`] draws, per entity on the cheaper side, candidate
//!   partners by geometric skips at a capped rate `p_hat = min(1, c * w *
//!   w_max_opposite * n^(-(1+alpha)/2))` and accepts each candidate `j` with
//!   probability `p_ij / p_hat`. Thinning is exact, not approximate: the
//!   accepted set has the same law as the naive generator's. Expected work is
//!   `O(entities + sum of capped rates * opposite count)`.
//!
//! Both are deterministic functions of `(params, weights, seed)`; the
//! thinned generator keys one RNG substream per entity, so its output is
//! also independent of how work is scheduled across threads.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ModelParams, WeightAssignment};
use crate::rng::StreamKey;

/// Default cap on `n * m` for the naive generator.
pub const DEFAULT_NAIVE_PAIR_BUDGET: u128 = 100_000_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error(
        "naive generation would evaluate {pairs} pairs (budget {budget}); \
         use generate_thinned"
    )]
    NaiveBudgetExceeded { pairs: u128, budget: u128 },
    #[error("weight assignment does not match params: {0}")]
    WeightMismatch(String),
    #[error("side of size {count} exceeds u32 index range")]
    IndexOverflow { count: u64 },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Which algorithm produced a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorTag {
    Naive,
    Thinned,
}

impl std::fmt::Display for GeneratorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeneratorTag::Naive => "naive",
            GeneratorTag::Thinned => "thinned",
        })
    }
}

/// Compressed sparse rows; every row is sorted ascending with no duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let total = rows.iter().map(Vec::len).sum();
        let mut targets = Vec::with_capacity(total);
        for row in rows {
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn entry_count(&self) -> usize {
        self.targets.len()
    }

    /// Transposes into `target_rows` rows by counting sort; row order of the
    /// source keeps each transposed row sorted.
    fn transpose(&self, target_rows: usize) -> Adjacency {
        let mut counts = vec![0usize; target_rows + 1];
        for &t in &self.targets {
            counts[t as usize + 1] += 1;
        }
        for i in 0..target_rows {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut targets = vec![0u32; self.targets.len()];
        for i in 0..self.rows() {
            for &t in self.row(i) {
                targets[fill[t as usize]] = i as u32;
                fill[t as usize] += 1;
            }
        }
        Adjacency { offsets, targets }
    }
}

/// The realised bipartite graph with both adjacency orientations.
#[derive(Clone, Debug)]
pub struct BipartiteGraph {
    params: ModelParams,
    weights: WeightAssignment,
    vertex_elements: Adjacency,
    element_vertices: Adjacency,
    generator: GeneratorTag,
    seed: u64,
}

impl BipartiteGraph {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn weights(&self) -> &WeightAssignment {
        &self.weights
    }
    /// Elements adjacent to each vertex (sorted, deduplicated).
    pub fn vertex_elements(&self) -> &Adjacency {
        &self.vertex_elements
    }
    /// Vertices adjacent to each element (sorted, deduplicated).
    pub fn element_vertices(&self) -> &Adjacency {
        &self.element_vertices
    }
    pub fn generator(&self) -> GeneratorTag {
        self.generator
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn edge_count(&self) -> usize {
        self.vertex_elements.entry_count()
    }

    /// Edge list export: one `i j` pair per line (0-based), preceded by a
    /// header recording the full provenance.
    pub fn export_edge_list<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "# rig-bipartite n={} m={} alpha={} beta={} c={} seed={} gen={}",
            self.params.n(),
            self.element_vertices.rows(),
            self.params.alpha(),
            self.params.beta(),
            self.params.c(),
            self.seed,
            self.generator
        )?;
        for i in 0..self.vertex_elements.rows() {
            for &j in self.vertex_elements.row(i) {
                writeln!(out, "{i} {j}")?;
            }
        }
        Ok(())
    }

    /// Structural invariants: orientations are transposes, rows sorted
    /// strictly ascending, indices in range.
    pub fn check_consistency(&self) -> bool {
        let sorted = |adj: &Adjacency, bound: u32| {
            (0..adj.rows()).all(|i| {
                let row = adj.row(i);
                row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&t| t < bound)
            })
        };
        let m = self.element_vertices.rows();
        let n = self.vertex_elements.rows();
        if m > 0 && !sorted(&self.vertex_elements, m as u32) {
            return false;
        }
        if !sorted(&self.element_vertices, n as u32) {
            return false;
        }
        self.vertex_elements.transpose(m) == self.element_vertices
    }
}

fn checked_sides(
    params: &ModelParams,
    weights: &WeightAssignment,
) -> Result<(usize, usize), GenError> {
    let n = params.n();
    let m = params.element_count()?;
    if n > u32::MAX as u64 {
        return Err(GenError::IndexOverflow { count: n });
    }
    if m > u32::MAX as u64 {
        return Err(GenError::IndexOverflow { count: m });
    }
    if weights.vertex_weights().len() as u64 != n {
        return Err(GenError::WeightMismatch(format!(
            "{} vertex weights for n = {n}",
            weights.vertex_weights().len()
        )));
    }
    if weights.element_weights().len() as u64 != m {
        return Err(GenError::WeightMismatch(format!(
            "{} element weights for m = {m}",
            weights.element_weights().len()
        )));
    }
    Ok((n as usize, m as usize))
}

/// Flips one coin per pair, `i` outer ascending and `j` inner ascending.
/// That iteration order is part of the contract: it pins the map from seed
/// to edge set.
pub fn generate_naive(
    params: &ModelParams,
    weights: &WeightAssignment,
    seed: u64,
) -> Result<BipartiteGraph, GenError> {
    generate_naive_with_budget(params, weights, seed, DEFAULT_NAIVE_PAIR_BUDGET)
}

pub fn generate_naive_with_budget(
    params: &ModelParams,
    weights: &WeightAssignment,
    seed: u64,
    budget: u128,
) -> Result<BipartiteGraph, GenError> {
    let (n, m) = checked_sides(params, weights)?;
    let pairs = n as u128 * m as u128;
    if pairs > budget {
        return Err(GenError::NaiveBudgetExceeded { pairs, budget });
    }
    let kappa = params.c() * params.pair_norm();
    let mut rng = StreamKey::derive(seed, "bipartite.naive", &[]).rng();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let a = weights.vertex_weights()[i];
        let mut row = Vec::new();
        for (j, &b) in weights.element_weights().iter().enumerate() {
            let p = (kappa * a * b).min(1.0);
            if rng.random::<f64>() < p {
                row.push(j as u32);
            }
        }
        rows.push(row);
    }
    let vertex_elements = Adjacency::from_rows(rows);
    let element_vertices = vertex_elements.transpose(m);
    Ok(BipartiteGraph {
        params: *params,
        weights: weights.clone(),
        vertex_elements,
        element_vertices,
        generator: GeneratorTag::Naive,
        seed,
    })
}

/// Which side the thinned generator iterates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Orientation {
    VertexMajor,
    ElementMajor,
}

struct ThinningPlan {
    orientation: Orientation,
    /// Fraction of iterated entities whose cap clamps to 1 (the cap then
    /// prunes nothing and work degenerates to the naive row cost).
    saturated_fraction: f64,
}

fn plan_thinning(params: &ModelParams, weights: &WeightAssignment) -> ThinningPlan {
    let kappa = params.c() * params.pair_norm();
    let b_max = weights.max_element_weight();
    let a_max = weights.max_vertex_weight();
    let m = weights.element_weights().len() as f64;
    let n = weights.vertex_weights().len() as f64;
    // Expected candidate counts: m * sum_i cap_i versus n * sum_j cap_j.
    let vertex_caps: f64 = weights
        .vertex_weights()
        .iter()
        .map(|&a| (kappa * a * b_max).min(1.0))
        .sum();
    let element_caps: f64 = weights
        .element_weights()
        .iter()
        .map(|&b| (kappa * a_max * b).min(1.0))
        .sum();
    let orientation = if m * vertex_caps <= n * element_caps {
        Orientation::VertexMajor
    } else {
        Orientation::ElementMajor
    };
    let saturated = match orientation {
        Orientation::VertexMajor => {
            weights
                .vertex_weights()
                .iter()
                .filter(|&&a| kappa * a * b_max >= 1.0)
                .count() as f64
                / n.max(1.0)
        }
        Orientation::ElementMajor => {
            weights
                .element_weights()
                .iter()
                .filter(|&&b| kappa * a_max * b >= 1.0)
                .count() as f64
                / m.max(1.0)
        }
    };
    ThinningPlan {
        orientation,
        saturated_fraction: saturated,
    }
}

/// One thinned row: candidates by geometric skips at rate `cap`, each
/// accepted with probability `p / cap`. `cap >= 1` degenerates to visiting
/// every slot with acceptance probability `p` itself, which keeps clamped
/// pairs (`p = 1`) exact.
fn thin_row(
    rng: &mut ChaCha8Rng,
    own_weight: f64,
    opposite: &[f64],
    kappa: f64,
    cap: f64,
) -> Vec<u32> {
    let mut row = Vec::new();
    let count = opposite.len() as u64;
    let capped = cap >= 1.0;
    let log_q = (-cap).ln_1p(); // ln(1 - cap), < 0
    let mut pos: u64 = 0;
    while pos < count {
        if !capped {
            let u: f64 = rng.sample(rand::distr::Open01);
            let skip = (u.ln() / log_q).floor();
            if !(skip < (count - pos) as f64) {
                break;
            }
            pos += skip as u64;
        }
        let j = pos as usize;
        let p = (kappa * own_weight * opposite[j]).min(1.0);
        let ratio = if capped { p } else { p / cap };
        if ratio >= 1.0 || rng.random::<f64>() < ratio {
            row.push(j as u32);
        }
        pos += 1;
    }
    row
}

/// Exact thinned generation; distributionally identical to
/// [`generate_naive`].
///
/// Iterates whichever side has the smaller expected candidate count. Each
/// iterated entity owns the RNG substream keyed by `(seed, "bipartite.thin",
/// orientation, entity)`, so generation parallelises deterministically.
pub fn generate_thinned(
    params: &ModelParams,
    weights: &WeightAssignment,
    seed: u64,
) -> Result<BipartiteGraph, GenError> {
    let (n, m) = checked_sides(params, weights)?;
    let kappa = params.c() * params.pair_norm();
    let plan = plan_thinning(params, weights);
    if plan.saturated_fraction > 0.5 {
        log::warn!(
            "thinning cap saturated for {:.0}% of rows (heavy opposite-side weights); \
             generation stays exact but costs O(n*m)",
            plan.saturated_fraction * 100.0
        );
    }
    let orient_index = match plan.orientation {
        Orientation::VertexMajor => 0u64,
        Orientation::ElementMajor => 1u64,
    };
    let key = StreamKey::derive(seed, "bipartite.thin", &[orient_index]);
    let (vertex_elements, element_vertices) = match plan.orientation {
        Orientation::VertexMajor => {
            let b_max = weights.max_element_weight();
            let rows: Vec<Vec<u32>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let a = weights.vertex_weights()[i];
                    let cap = (kappa * a * b_max).min(1.0);
                    thin_row(
                        &mut key.substream(i as u64),
                        a,
                        weights.element_weights(),
                        kappa,
                        cap,
                    )
                })
                .collect();
            let ve = Adjacency::from_rows(rows);
            let ev = ve.transpose(m);
            (ve, ev)
        }
        Orientation::ElementMajor => {
            let a_max = weights.max_vertex_weight();
            let rows: Vec<Vec<u32>> = (0..m)
                .into_par_iter()
                .map(|j| {
                    let b = weights.element_weights()[j];
                    let cap = (kappa * a_max * b).min(1.0);
                    thin_row(
                        &mut key.substream(j as u64),
                        b,
                        weights.vertex_weights(),
                        kappa,
                        cap,
                    )
                })
                .collect();
            let ev = Adjacency::from_rows(rows);
            let ve = ev.transpose(n);
            (ve, ev)
        }
    };
    Ok(BipartiteGraph {
        params: *params,
        weights: weights.clone(),
        vertex_elements,
        element_vertices,
        generator: GeneratorTag::Thinned,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightSpec;

    fn fixed_instance(
        n: u64,
        alpha: f64,
        beta: f64,
        c: f64,
        va: Vec<f64>,
        ea: Vec<f64>,
    ) -> (ModelParams, WeightAssignment) {
        let params = ModelParams::new(n, alpha, beta, c).unwrap();
        let pm = WeightSpec::point_mass(1.0).unwrap();
        let weights = WeightAssignment::from_parts(&params, va, ea, pm, pm, 0).unwrap();
        (params, weights)
    }

    #[test]
    fn clamped_probabilities_give_complete_graph() {
        // c huge: every p_ij clamps to 1 so both generators must return the
        // complete bipartite graph.
        let (params, weights) =
            fixed_instance(3, 1.0, 1.0, 1e9, vec![1.0; 3], vec![1.0, 2.0, 0.5]);
        for g in [
            generate_naive(&params, &weights, 5).unwrap(),
            generate_thinned(&params, &weights, 5).unwrap(),
        ] {
            assert_eq!(g.edge_count(), 9);
            for i in 0..3 {
                assert_eq!(g.vertex_elements().row(i), &[0, 1, 2]);
            }
            assert!(g.check_consistency());
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let (params, weights) = fixed_instance(
            5,
            1.0,
            1.0,
            1.5,
            vec![0.5, 1.0, 2.0, 1.0, 0.3],
            vec![1.0, 0.2, 3.0, 1.0, 1.0],
        );
        let a = generate_naive(&params, &weights, 42).unwrap();
        let b = generate_naive(&params, &weights, 42).unwrap();
        assert_eq!(a.vertex_elements(), b.vertex_elements());
        let c = generate_thinned(&params, &weights, 42).unwrap();
        let d = generate_thinned(&params, &weights, 42).unwrap();
        assert_eq!(c.vertex_elements(), d.vertex_elements());
        assert!(c.check_consistency());
    }

    #[test]
    fn naive_budget_is_enforced() {
        let (params, weights) = fixed_instance(4, 1.0, 1.0, 1.0, vec![1.0; 4], vec![1.0; 4]);
        let err = generate_naive_with_budget(&params, &weights, 0, 15).unwrap_err();
        assert!(matches!(err, GenError::NaiveBudgetExceeded { pairs: 16, budget: 15 }));
    }

    #[test]
    fn naive_per_edge_frequency_within_4_sigma() {
        // n=2, m=1 with p = 0.3 for both vertices.
        let params = ModelParams::new(2, 1.0, 1.0, 0.6).unwrap();
        // p = c * a * b * n^-1 = 0.6/2 = 0.3
        let pm = WeightSpec::point_mass(1.0).unwrap();
        let weights =
            WeightAssignment::from_parts(&params, vec![1.0, 1.0], vec![1.0], pm, pm, 0).unwrap();
        let reps = 100_000u32;
        let mut hits = [0u32; 2];
        for seed in 0..reps {
            let g = generate_naive(&params, &weights, seed as u64).unwrap();
            for i in 0..2 {
                if !g.vertex_elements().row(i).is_empty() {
                    hits[i] += 1;
                }
            }
        }
        let sigma = (0.3 * 0.7 / reps as f64).sqrt();
        for h in hits {
            let freq = h as f64 / reps as f64;
            assert!((freq - 0.3).abs() < 4.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn thinned_matches_probabilities_on_heterogeneous_instance() {
        // 3x3 with spread-out weights; checks each of the 9 edge
        // frequencies against its p_ij.
        let (params, weights) = fixed_instance(
            3,
            1.0,
            1.0,
            1.2,
            vec![0.4, 1.0, 2.5],
            vec![0.6, 1.0, 1.8],
        );
        let kappa = params.c() * params.pair_norm();
        let reps = 40_000u32;
        let mut hits = [[0u32; 3]; 3];
        for seed in 0..reps {
            let g = generate_thinned(&params, &weights, seed as u64).unwrap();
            for i in 0..3 {
                for &j in g.vertex_elements().row(i) {
                    hits[i][j as usize] += 1;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let p = (kappa * weights.vertex_weights()[i] * weights.element_weights()[j])
                    .min(1.0);
                let freq = hits[i][j] as f64 / reps as f64;
                let sigma = (p * (1.0 - p) / reps as f64).sqrt();
                assert!(
                    (freq - p).abs() < 4.0 * sigma,
                    "edge ({i},{j}): freq {freq}, p {p}"
                );
            }
        }
    }

    #[test]
    fn pairwise_edge_indicators_uncorrelated() {
        // Sample correlation of all 36 indicator pairs on a 3x3 instance
        // stays within 4 sigma of zero.
        let (params, weights) = fixed_instance(
            3,
            1.0,
            1.0,
            1.0,
            vec![0.8, 1.0, 1.4],
            vec![1.0, 0.5, 2.0],
        );
        let reps = 100_000usize;
        let mut sums = [0f64; 9];
        let mut cross = [[0f64; 9]; 9];
        for seed in 0..reps {
            let g = generate_thinned(&params, &weights, seed as u64).unwrap();
            let mut x = [0f64; 9];
            for i in 0..3 {
                for &j in g.vertex_elements().row(i) {
                    x[i * 3 + j as usize] = 1.0;
                }
            }
            for a in 0..9 {
                sums[a] += x[a];
                for b in (a + 1)..9 {
                    cross[a][b] += x[a] * x[b];
                }
            }
        }
        let nf = reps as f64;
        for a in 0..9 {
            for b in (a + 1)..9 {
                let ma = sums[a] / nf;
                let mb = sums[b] / nf;
                let cov = cross[a][b] / nf - ma * mb;
                let corr = cov / (ma * (1.0 - ma) * mb * (1.0 - mb)).sqrt();
                // corr estimate has SE ~ 1/sqrt(reps) under independence
                assert!(
                    corr.abs() < 4.0 / nf.sqrt(),
                    "pair ({a},{b}): corr {corr}"
                );
            }
        }
    }

    #[test]
    fn orientation_picks_cheaper_side() {
        // m >> n with hot vertex weights: iterating elements is cheaper when
        // the vertex-side cap saturates.
        let params = ModelParams::new(4, 2.0, 1.0, 1.0).unwrap();
        let pm = WeightSpec::point_mass(1.0).unwrap();
        let weights = WeightAssignment::from_parts(
            &params,
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0; 16],
            pm,
            pm,
            0,
        )
        .unwrap();
        let plan = plan_thinning(&params, &weights);
        // Symmetric weights: m * sum_i cap_i = 16 * 4c vs n * sum_j cap_j =
        // 4 * 16c -- tie goes vertex-major.
        assert_eq!(plan.orientation, Orientation::VertexMajor);

        let weights = WeightAssignment::from_parts(
            &params,
            vec![100.0, 1.0, 1.0, 1.0],
            vec![1.0; 16],
            pm,
            pm,
            0,
        )
        .unwrap();
        let plan = plan_thinning(&params, &weights);
        assert_eq!(plan.orientation, Orientation::ElementMajor);
    }

    #[test]
    fn export_edge_list_format() {
        let (params, weights) = fixed_instance(2, 1.0, 1.0, 1e9, vec![1.0, 1.0], vec![1.0, 1.0]);
        let g = generate_naive(&params, &weights, 3).unwrap();
        let mut buf = Vec::new();
        g.export_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# rig-bipartite n=2 m=2 alpha=1 beta=1 c=1000000000 seed=3 gen=naive\n\
             0 0\n0 1\n1 0\n1 1\n"
        );
    }

    #[test]
    fn empty_element_side() {
        // beta * n^alpha < 1 gives m = 0: a graph with no elements.
        let params = ModelParams::new(4, 0.5, 0.4, 1.0).unwrap();
        let pm = WeightSpec::point_mass(1.0).unwrap();
        let weights =
            WeightAssignment::from_parts(&params, vec![1.0; 4], vec![], pm, pm, 0).unwrap();
        let g = generate_thinned(&params, &weights, 0).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.check_consistency());
    }
}
