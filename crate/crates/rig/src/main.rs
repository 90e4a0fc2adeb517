//! `rig` — weighted random intersection graphs at the command line.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rig::config::{parse_config, ExperimentConfig, GeneratorChoice, PolicyChoice};
use rig::experiment::{adjudicate, run_experiment};
use rig::genbip::{generate_naive, generate_thinned, GeneratorTag, DEFAULT_NAIVE_PAIR_BUDGET};
use rig::limits::{limiting_law, limiting_law_mixed, SummandPolicy, DEFAULT_MC_SAMPLES};
use rig::model::{ModelParams, WeightAssignment, WeightKind};
use rig::project::{
    default_split_threshold, degrees_to_csv, project_degrees, split_degree_by_weight_threshold,
};
use rig::rng::StreamKey;
use rig::stats::{EmpiricalPmf, GofReport};

#[derive(Parser)]
#[command(
    name = "rig",
    about = "Generate weighted random intersection graphs and verify their degree laws",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat key = value format).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (never changes output bytes).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate bipartite graphs and export their edge lists.
    Generate(Common),
    /// Generate, project, and export per-vertex intersection degrees.
    Degrees {
        #[command(flatten)]
        common: Common,
        /// Also split each degree at a neighbour-weight threshold
        /// (default n^(1/4)).
        #[arg(long)]
        split: bool,
        /// Custom split threshold (implies --split).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Export the theoretical limiting degree pmf as CSV.
    LimitPmf(Common),
    /// Goodness-of-fit of an existing degree CSV against the limit law.
    Gof {
        #[command(flatten)]
        common: Common,
        /// Degree CSV produced by `rig degrees`.
        #[arg(long)]
        degrees: PathBuf,
    },
    /// Full verification run: CSV pmf table + JSON summary per point.
    Experiment(Common),
    /// Compare as-stated vs size-biased limit variants (report only).
    Adjudicate(Common),
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn with_pool<T>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, Box<dyn std::error::Error>> + Send,
) -> Result<T, Box<dyn std::error::Error>>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()?
            .install(f),
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Experiment(common) => {
            let cfg = load_config(&common)?;
            let outcome = with_pool(common.threads, || Ok(run_experiment(&cfg)?))?;
            for p in &outcome.points {
                let law = &p.summary.laws[0];
                println!(
                    "n={} alpha={} m={} samples={} mean={:.4} tv={:.5} -> {}",
                    p.n,
                    p.alpha,
                    p.m,
                    p.summary.n_samples,
                    p.summary.empirical_mean,
                    law.tv,
                    p.json_path.display()
                );
            }
            Ok(())
        }
        Command::Adjudicate(common) => {
            let cfg = load_config(&common)?;
            let outcome = with_pool(common.threads, || Ok(adjudicate(&cfg)?))?;
            for (s, path) in &outcome.points {
                println!(
                    "n={} alpha={} mean={:.4} tv_as_stated={:.5} tv_size_biased={:.5} -> {}",
                    s.n,
                    s.alpha,
                    s.empirical_mean,
                    s.tv_as_stated,
                    s.tv_size_biased,
                    path.display()
                );
            }
            Ok(())
        }
        Command::Generate(common) => {
            let cfg = load_config(&common)?;
            with_pool(common.threads, || generate_files(&cfg, Export::EdgeList, false, None))
        }
        Command::Degrees {
            common,
            split,
            threshold,
        } => {
            let cfg = load_config(&common)?;
            let split = split || threshold.is_some();
            with_pool(common.threads, || {
                generate_files(&cfg, Export::Degrees, split, threshold)
            })
        }
        Command::LimitPmf(common) => {
            let cfg = load_config(&common)?;
            limit_pmf_files(&cfg)
        }
        Command::Gof { common, degrees } => {
            let cfg = load_config(&common)?;
            gof_report(&cfg, &degrees)
        }
    }
}

enum Export {
    EdgeList,
    Degrees,
}

/// Shared pipeline of `generate` and `degrees`: one graph per replicate per
/// sweep point, written under the output directory.
fn generate_files(
    cfg: &ExperimentConfig,
    export: Export,
    split: bool,
    threshold: Option<f64>,
) -> Result<(), Box<dyn std::error::Error>> {
    fs::create_dir_all(&cfg.output_dir)?;
    let f_norm = cfg.f_spec.normalize_to_unit_mean().spec;
    let h_norm = cfg.h_spec.normalize_to_unit_mean().spec;
    for (point_idx, (n, alpha)) in cfg.points().into_iter().enumerate() {
        let params = ModelParams::new(n, alpha, cfg.beta, cfg.c)?;
        let m = params.element_count()?;
        let pairs = n as u128 * m as u128;
        let tag = match cfg.generator {
            GeneratorChoice::Naive if pairs <= DEFAULT_NAIVE_PAIR_BUDGET => GeneratorTag::Naive,
            GeneratorChoice::Auto if pairs <= DEFAULT_NAIVE_PAIR_BUDGET => GeneratorTag::Naive,
            GeneratorChoice::Naive => {
                eprintln!(
                    "note: naive generation infeasible for n*m = {pairs}; using thinned"
                );
                GeneratorTag::Thinned
            }
            _ => GeneratorTag::Thinned,
        };
        for r in 0..cfg.replicates {
            let rep_seed = StreamKey::derive(cfg.seed, "experiment.replicate", &[
                point_idx as u64,
                r,
            ])
            .sub_seed();
            let weights = WeightAssignment::draw(&params, &f_norm, &h_norm, rep_seed)?;
            let graph = match tag {
                GeneratorTag::Naive => generate_naive(&params, &weights, rep_seed)?,
                GeneratorTag::Thinned => generate_thinned(&params, &weights, rep_seed)?,
            };
            match export {
                Export::EdgeList => {
                    let path = cfg
                        .output_dir
                        .join(format!("bipartite_n{n}_alpha{alpha}_rep{r}.txt"));
                    let mut buf = Vec::new();
                    graph.export_edge_list(&mut buf)?;
                    fs::write(&path, buf)?;
                    println!("{}", path.display());
                }
                Export::Degrees => {
                    let records = if split {
                        let t = threshold.unwrap_or_else(|| default_split_threshold(n));
                        split_degree_by_weight_threshold(&graph, t)
                    } else {
                        project_degrees(&graph)
                    };
                    let path = cfg
                        .output_dir
                        .join(format!("degrees_n{n}_alpha{alpha}_rep{r}.csv"));
                    let mut buf = Vec::new();
                    degrees_to_csv(&records, &mut buf)?;
                    fs::write(&path, buf)?;
                    println!("{}", path.display());
                }
            }
        }
    }
    Ok(())
}

fn policies(cfg: &ExperimentConfig) -> Vec<SummandPolicy> {
    match cfg.policy {
        PolicyChoice::AsStated => vec![SummandPolicy::AsStated],
        PolicyChoice::SizeBiased => vec![SummandPolicy::SizeBiased],
        PolicyChoice::Both => vec![SummandPolicy::AsStated, SummandPolicy::SizeBiased],
    }
}

fn build_point_law(
    cfg: &ExperimentConfig,
    n: u64,
    alpha: f64,
    policy: SummandPolicy,
) -> Result<rig::limits::DerivedLimit, Box<dyn std::error::Error>> {
    let params = ModelParams::new(n, alpha, cfg.beta, cfg.c)?;
    let f_norm = cfg.f_spec.normalize_to_unit_mean().spec;
    let h_norm = cfg.h_spec.normalize_to_unit_mean().spec;
    let derived = match f_norm.kind() {
        WeightKind::PointMass { value } => limiting_law(&params, value, &h_norm, policy)?,
        _ => limiting_law_mixed(&params, &f_norm, &h_norm, policy)?,
    };
    Ok(derived)
}

fn limit_pmf_files(cfg: &ExperimentConfig) -> Result<(), Box<dyn std::error::Error>> {
    fs::create_dir_all(&cfg.output_dir)?;
    for (point_idx, (n, alpha)) in cfg.points().into_iter().enumerate() {
        for (policy_idx, policy) in policies(cfg).into_iter().enumerate() {
            let derived = build_point_law(cfg, n, alpha, policy)?;
            let pmf = if derived.law.has_exact_pmf() {
                derived.law.pmf(cfg.k_max)?
            } else {
                let mut rng = StreamKey::derive(cfg.seed, "experiment.limit-pmf", &[
                    point_idx as u64,
                    policy_idx as u64,
                ])
                .rng();
                derived
                    .law
                    .pmf_monte_carlo(cfg.k_max, DEFAULT_MC_SAMPLES, &mut rng)
            };
            let mut out = String::from("k,prob\n");
            for (k, p) in pmf.probs.iter().enumerate() {
                out.push_str(&format!("{k},{p}\n"));
            }
            let path = cfg
                .output_dir
                .join(format!("limit_pmf_n{n}_alpha{alpha}_{policy}.csv"));
            fs::write(&path, out)?;
            println!("{} # {}", path.display(), derived.law.describe());
        }
    }
    Ok(())
}

fn gof_report(
    cfg: &ExperimentConfig,
    degrees_path: &PathBuf,
) -> Result<(), Box<dyn std::error::Error>> {
    let text = fs::read_to_string(degrees_path)
        .map_err(|e| format!("cannot read {}: {e}", degrees_path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty degree file")?;
    if !header.starts_with("vertex,degree") {
        return Err(format!("unexpected degree CSV header {header:?}").into());
    }
    let degrees: Vec<u64> = lines
        .map(|l| {
            l.split(',')
                .nth(1)
                .ok_or_else(|| format!("malformed row {l:?}"))?
                .parse::<u64>()
                .map_err(|e| format!("malformed degree in {l:?}: {e}"))
        })
        .collect::<Result<_, _>>()?;
    let emp = EmpiricalPmf::from_degrees(degrees);
    let (n, alpha) = *cfg
        .points()
        .first()
        .ok_or("config has no sweep points")?;
    if cfg.points().len() > 1 {
        eprintln!("note: sweep config; gof uses the first point n={n} alpha={alpha}");
    }
    let mut reports = serde_json::Map::new();
    for (policy_idx, policy) in policies(cfg).into_iter().enumerate() {
        let derived = build_point_law(cfg, n, alpha, policy)?;
        let pmf = if derived.law.has_exact_pmf() {
            derived.law.pmf(cfg.k_max)?
        } else {
            let mut rng = StreamKey::derive(cfg.seed, "experiment.limit-pmf", &[
                0,
                policy_idx as u64,
            ])
            .rng();
            derived
                .law
                .pmf_monte_carlo(cfg.k_max, DEFAULT_MC_SAMPLES, &mut rng)
        };
        let report = GofReport::new(&emp, &pmf, rig::experiment::CHI_SQUARE_MIN_EXPECTED)?;
        reports.insert(policy.to_string(), serde_json::to_value(&report)?);
    }
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(())
}
