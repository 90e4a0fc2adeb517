//! Weighted random intersection graphs.
//!
//! A vertex set `V` of size `n` and an element set `W` of size
//! `m = floor(beta * n^alpha)` are joined by a random bipartite graph in
//! which vertex `i` and element `j` are adjacent independently with
//! probability `min(c * A_i * B_j * n^(-(1+alpha)/2), 1)`, where the `A_i`
//! and `B_j` are positive iid weights. Projecting the bipartite graph onto
//! `V` (two vertices are adjacent iff they share an element) yields the
//! intersection graph whose degree distribution this crate generates,
//! computes in the large-`n` limit, and verifies statistically.
//!
//! The crate is organised around that pipeline:
//!
//! * [`model`] — parameters, weight distributions and their moments,
//!   edge probabilities, limit-hypothesis checks;
//! * [`genbip`] — exact bipartite generation (naive oracle and a thinned
//!   sampler with geometric skips);
//! * [`project`] — projection to intersection-graph degrees;
//! * [`limits`] — the limiting degree laws (point mass at zero, compound
//!   Poisson, mixed Poisson), their PGFs, pmfs and samplers;
//! * [`stats`] — empirical pmfs, total variation distance, chi-square
//!   goodness of fit;
//! * [`config`] / [`experiment`] — the config-driven experiment runner
//!   behind the `rig` CLI.
//!
//! All generation is deterministic given a seed: random streams are derived
//! by [`rng::StreamKey`] so results do not depend on thread count.

pub mod config;
pub mod experiment;
pub mod genbip;
pub mod limits;
pub mod model;
pub mod project;
pub mod quad;
pub mod rng;
pub mod stats;

pub use config::ExperimentConfig;
pub use genbip::BipartiteGraph;
pub use limits::LimitLaw;
pub use model::{ModelParams, WeightAssignment, WeightSpec};
