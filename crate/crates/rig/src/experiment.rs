//! Config-driven experiment runner: generate, project, compare to the limit
//! laws, and emit plot-ready CSV plus a JSON summary per sweep point.
//!
//! Reports are byte-identical across reruns with the same effective config
//! and across worker-thread counts: every random stream is named, replicate
//! results are collected in replicate order, and report assembly is
//! single-threaded.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, GeneratorChoice, Harvest, PolicyChoice};
use crate::genbip::{
    generate_naive, generate_thinned, GenError, GeneratorTag, DEFAULT_NAIVE_PAIR_BUDGET,
};
use crate::limits::{
    limiting_law, limiting_law_mixed, DerivedLimit, LimitError, LimitPmf, SummandPolicy,
    DEFAULT_MC_SAMPLES,
};
use crate::model::{ConditionReport, ModelError, ModelParams, WeightAssignment, WeightKind,
    WeightSpec};
use crate::project::project_degrees;
use crate::rng::StreamKey;
use crate::stats::{self, ChiSquare, EmpiricalPmf};

/// Confidence level of the reported mean interval.
pub const MEAN_CI_LEVEL: f64 = 0.99;

/// Minimum expected bin count before chi-square pooling.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error("adjudication vacuous: {reason}")]
    VacuousAdjudication { reason: String },
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanCi {
    pub level: f64,
    pub half_width: f64,
}

/// Per-law comparison block of the JSON summary.
#[derive(Clone, Debug, Serialize)]
pub struct LawSummary {
    pub policy: String,
    pub description: String,
    /// Mean of the law; absent when a weight mean diverges.
    pub law_mean: Option<f64>,
    /// False when a moment hypothesis fails: the law is the formal limit
    /// expression only.
    pub hypotheses_met: bool,
    pub tv: f64,
    /// Absent when pooling leaves fewer than two bins.
    pub chi_square: Option<ChiSquare>,
    pub pmf_tail: f64,
    /// Set when the theoretical pmf came from Monte Carlo.
    pub mc_samples: Option<u64>,
    pub suggested_k_max: Option<usize>,
}

/// The JSON summary emitted per sweep point.
#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub config_echo: String,
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub m: u64,
    pub seed: u64,
    pub generator_requested: String,
    pub generator_used: String,
    pub f_normalized: String,
    pub h_normalized: String,
    pub conditions: ConditionReport,
    pub replicates: u64,
    pub vertices_per_replicate: String,
    pub n_samples: u64,
    pub empirical_mean: f64,
    pub mean_ci: MeanCi,
    pub isolated_fraction: f64,
    /// `c^2 * E(A) * beta * E(B^2)`; absent when a required moment diverges.
    pub expected_degree_limit: Option<f64>,
    pub laws: Vec<LawSummary>,
    pub warnings: Vec<String>,
}

/// Adjudication report: the empirical pmf against the as-stated law and its
/// size-biased variant, plus the three mean values. Numbers only, no verdict.
#[derive(Clone, Debug, Serialize)]
pub struct AdjudicationSummary {
    pub config_echo: String,
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub m: u64,
    pub seed: u64,
    pub n_samples: u64,
    pub empirical_mean: f64,
    pub mean_ci: MeanCi,
    pub tv_as_stated: f64,
    pub tv_size_biased: f64,
    pub law_mean_as_stated: Option<f64>,
    pub law_mean_size_biased: Option<f64>,
    /// The expected-degree limit `c^2 * E(A) * beta * E(B^2)`.
    pub expected_degree_limit: Option<f64>,
    pub law_as_stated: String,
    pub law_size_biased: String,
    pub conditions: ConditionReport,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub n: u64,
    pub alpha: f64,
    pub m: u64,
    pub summary: PointSummary,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub points: Vec<PointOutcome>,
}

#[derive(Clone, Debug)]
pub struct AdjudicationOutcome {
    pub points: Vec<(AdjudicationSummary, PathBuf)>,
}

/// Simulation results for one `(n, alpha)` point, before law comparison.
struct PointData {
    params: ModelParams,
    m: u64,
    f_norm: WeightSpec,
    h_norm: WeightSpec,
    conditions: ConditionReport,
    emp: EmpiricalPmf,
    degrees: Vec<f64>,
    isolated_fraction: f64,
    generator_used: GeneratorTag,
    warnings: Vec<String>,
}

struct LawEval {
    policy: SummandPolicy,
    derived: DerivedLimit,
    pmf: LimitPmf,
    tv: f64,
    chi: Option<ChiSquare>,
    chi_warning: Option<String>,
}

fn normalize_with_warning(
    spec: &WeightSpec,
    name: &str,
    warnings: &mut Vec<String>,
) -> WeightSpec {
    let out = spec.normalize_to_unit_mean();
    if out.infinite_mean {
        warnings.push(format!(
            "{name} = {spec} has an infinite mean and was not normalised; \
             theorem hypotheses are violated"
        ));
    }
    out.spec
}

fn simulate_point(
    cfg: &ExperimentConfig,
    point_idx: u64,
    n: u64,
    alpha: f64,
) -> Result<PointData, ExperimentError> {
    let params = ModelParams::new(n, alpha, cfg.beta, cfg.c)?;
    let m = params.element_count()?;
    let mut warnings = Vec::new();
    let f_norm = normalize_with_warning(&cfg.f_spec, "f", &mut warnings);
    let h_norm = normalize_with_warning(&cfg.h_spec, "h", &mut warnings);
    let conditions = crate::model::check_theorem_conditions(&params, &f_norm, &h_norm);
    if !conditions.limit_satisfied() {
        warnings.push("theorem hypotheses violated; limit laws are formal only".into());
    }

    let pairs = n as u128 * m as u128;
    let generator_used = match cfg.generator {
        GeneratorChoice::Naive if pairs > DEFAULT_NAIVE_PAIR_BUDGET => {
            warnings.push(format!(
                "naive generation infeasible (n*m = {pairs} exceeds budget \
                 {DEFAULT_NAIVE_PAIR_BUDGET}); redirected to thinned"
            ));
            GeneratorTag::Thinned
        }
        GeneratorChoice::Naive => GeneratorTag::Naive,
        GeneratorChoice::Thinned => GeneratorTag::Thinned,
        GeneratorChoice::Auto => {
            if pairs <= DEFAULT_NAIVE_PAIR_BUDGET {
                GeneratorTag::Naive
            } else {
                GeneratorTag::Thinned
            }
        }
    };

    let per_replicate: Vec<Vec<u32>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<u32>, ExperimentError> {
            let rep_seed =
                StreamKey::derive(cfg.seed, "experiment.replicate", &[point_idx, r]).sub_seed();
            let weights = WeightAssignment::draw(&params, &f_norm, &h_norm, rep_seed)?;
            let graph = match generator_used {
                GeneratorTag::Naive => generate_naive(&params, &weights, rep_seed)?,
                GeneratorTag::Thinned => generate_thinned(&params, &weights, rep_seed)?,
            };
            let records = project_degrees(&graph);
            let take = match cfg.harvest {
                Harvest::All => records.len(),
                Harvest::First(k) => records.len().min(k as usize),
            };
            Ok(records[..take].iter().map(|rec| rec.degree).collect())
        })
        .collect::<Result<_, _>>()?;

    let mut emp = EmpiricalPmf::default();
    let mut degrees = Vec::new();
    let mut harvested: Vec<u32> = Vec::new();
    for rep in &per_replicate {
        emp.merge(&EmpiricalPmf::from_degrees(rep.iter().copied()));
        degrees.extend(rep.iter().map(|&d| d as f64));
        harvested.extend_from_slice(rep);
    }
    let isolated_fraction = stats::isolated_fraction(&harvested)?;

    Ok(PointData {
        params,
        m,
        f_norm,
        h_norm,
        conditions,
        emp,
        degrees,
        isolated_fraction,
        generator_used,
        warnings,
    })
}

/// Conditioning used for the comparison laws: fixed when `F` is a point
/// mass, mixed over `F` otherwise (a whole-graph harvest samples vertices
/// with random weights).
fn build_law(
    data: &PointData,
    policy: SummandPolicy,
) -> Result<DerivedLimit, ExperimentError> {
    let derived = match data.f_norm.kind() {
        WeightKind::PointMass { value } => {
            limiting_law(&data.params, value, &data.h_norm, policy)?
        }
        _ => limiting_law_mixed(&data.params, &data.f_norm, &data.h_norm, policy)?,
    };
    Ok(derived)
}

fn evaluate_law(
    cfg: &ExperimentConfig,
    data: &PointData,
    point_idx: u64,
    policy_idx: u64,
    policy: SummandPolicy,
) -> Result<LawEval, ExperimentError> {
    let derived = build_law(data, policy)?;
    let pmf = if derived.law.has_exact_pmf() {
        derived.law.pmf(cfg.k_max)?
    } else {
        let mut rng = StreamKey::derive(
            cfg.seed,
            "experiment.limit-pmf",
            &[point_idx, policy_idx],
        )
        .rng();
        derived
            .law
            .pmf_monte_carlo(cfg.k_max, DEFAULT_MC_SAMPLES, &mut rng)
    };
    let tv = stats::tv_distance(&data.emp, &pmf.probs, pmf.tail);
    let (chi, chi_warning) =
        match stats::chi_square_gof(&data.emp, &pmf.probs, pmf.tail, CHI_SQUARE_MIN_EXPECTED) {
            Ok(chi) => (Some(chi), None),
            Err(e) => (None, Some(format!("chi-square skipped: {e}"))),
        };
    Ok(LawEval {
        policy,
        derived,
        pmf,
        tv,
        chi,
        chi_warning,
    })
}

fn law_summary(eval: &LawEval) -> LawSummary {
    let mean = eval.derived.law.mean();
    LawSummary {
        policy: eval.policy.to_string(),
        description: eval.derived.law.describe(),
        law_mean: mean.is_finite().then_some(mean),
        hypotheses_met: eval.derived.hypotheses_met(),
        tv: eval.tv,
        chi_square: eval.chi,
        pmf_tail: eval.pmf.tail,
        mc_samples: eval.pmf.mc_samples,
        suggested_k_max: eval.pmf.suggested_k_max,
    }
}

fn expected_degree_limit_entry(data: &PointData, warnings: &mut Vec<String>) -> Option<f64> {
    let a_mean = data.f_norm.mean();
    if !a_mean.is_finite() {
        warnings.push("expected-degree limit skipped: E(A) diverges".into());
        return None;
    }
    match crate::limits::expected_degree_limit(data.params.c(), a_mean, data.params.beta(), &data.h_norm)
    {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("expected-degree limit skipped: {e}"));
            None
        }
    }
}

fn pmf_csv(cfg: &ExperimentConfig, data: &PointData, laws: &[LawEval]) -> String {
    let mut header = String::from("k,empirical,theoretical");
    if laws.len() > 1 {
        header.push_str(",theoretical_sb");
    }
    let mut out = header + "\n";
    for k in 0..=cfg.k_max {
        out.push_str(&format!("{k},{}", data.emp.prob(k as u64)));
        for law in laws {
            out.push_str(&format!(",{}", law.pmf.probs[k]));
        }
        out.push('\n');
    }
    out
}

fn point_file_stem(n: u64, alpha: f64) -> String {
    format!("point_n{n}_alpha{alpha}")
}

/// Runs the full experiment described by `cfg`, writing one CSV and one JSON
/// summary per sweep point into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    fs::create_dir_all(&cfg.output_dir)?;
    let config_echo = cfg.serialize();
    let policies: &[SummandPolicy] = match cfg.policy {
        PolicyChoice::AsStated => &[SummandPolicy::AsStated],
        PolicyChoice::SizeBiased => &[SummandPolicy::SizeBiased],
        PolicyChoice::Both => &[SummandPolicy::AsStated, SummandPolicy::SizeBiased],
    };
    let mut points = Vec::new();
    for (point_idx, (n, alpha)) in cfg.points().into_iter().enumerate() {
        let data = simulate_point(cfg, point_idx as u64, n, alpha)?;
        let mut laws = Vec::new();
        for (policy_idx, &policy) in policies.iter().enumerate() {
            laws.push(evaluate_law(cfg, &data, point_idx as u64, policy_idx as u64, policy)?);
        }
        let mut warnings = data.warnings.clone();
        warnings.extend(laws.iter().filter_map(|l| l.chi_warning.clone()));
        let expected_degree_limit = expected_degree_limit_entry(&data, &mut warnings);
        let (empirical_mean, half_width) = stats::mean_ci(&data.degrees, MEAN_CI_LEVEL);
        let summary = PointSummary {
            config_echo: config_echo.clone(),
            n,
            alpha,
            beta: cfg.beta,
            c: cfg.c,
            m: data.m,
            seed: cfg.seed,
            generator_requested: cfg.generator.to_string(),
            generator_used: data.generator_used.to_string(),
            f_normalized: data.f_norm.to_string(),
            h_normalized: data.h_norm.to_string(),
            conditions: data.conditions.clone(),
            replicates: cfg.replicates,
            vertices_per_replicate: cfg.harvest.to_string(),
            n_samples: data.emp.total(),
            empirical_mean,
            mean_ci: MeanCi {
                level: MEAN_CI_LEVEL,
                half_width,
            },
            isolated_fraction: data.isolated_fraction,
            expected_degree_limit,
            laws: laws.iter().map(law_summary).collect(),
            warnings,
        };
        let stem = point_file_stem(n, alpha);
        let csv_path = cfg.output_dir.join(format!("{stem}.csv"));
        let json_path = cfg.output_dir.join(format!("{stem}.json"));
        fs::write(&csv_path, pmf_csv(cfg, &data, &laws))?;
        let mut json = serde_json::to_string_pretty(&summary).expect("serializable summary");
        json.push('\n');
        fs::write(&json_path, json)?;
        points.push(PointOutcome {
            n,
            alpha,
            m: data.m,
            summary,
            csv_path,
            json_path,
        });
    }
    Ok(ExperimentOutcome { points })
}

/// Compares the empirical degree law against the as-stated and size-biased
/// limit variants; reports the numbers without a verdict.
///
/// Requires an element-weight law with `E(B^2) != E(B)` after
/// normalisation — for a point mass the two variants coincide and the
/// comparison is vacuous.
pub fn adjudicate(cfg: &ExperimentConfig) -> Result<AdjudicationOutcome, ExperimentError> {
    let h_norm = cfg.h_spec.normalize_to_unit_mean().spec;
    let m1 = h_norm.moment(1.0);
    let m2 = h_norm.moment(2.0);
    if m2.is_finite() && (m2 - m1).abs() <= 1e-12 * m1.max(1.0) {
        return Err(ExperimentError::VacuousAdjudication {
            reason: format!(
                "E(B^2) = E(B) = {m1} for h = {h_norm}; the as-stated and size-biased \
                 variants coincide"
            ),
        });
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let config_echo = cfg.serialize();
    let mut points = Vec::new();
    for (point_idx, (n, alpha)) in cfg.points().into_iter().enumerate() {
        let data = simulate_point(cfg, point_idx as u64, n, alpha)?;
        let as_stated =
            evaluate_law(cfg, &data, point_idx as u64, 0, SummandPolicy::AsStated)?;
        let size_biased =
            evaluate_law(cfg, &data, point_idx as u64, 1, SummandPolicy::SizeBiased)?;
        let mut warnings = data.warnings.clone();
        let expected_degree_limit = expected_degree_limit_entry(&data, &mut warnings);
        let (empirical_mean, half_width) = stats::mean_ci(&data.degrees, MEAN_CI_LEVEL);
        let mean_of = |eval: &LawEval| {
            let m = eval.derived.law.mean();
            m.is_finite().then_some(m)
        };
        let summary = AdjudicationSummary {
            config_echo: config_echo.clone(),
            n,
            alpha,
            beta: cfg.beta,
            c: cfg.c,
            m: data.m,
            seed: cfg.seed,
            n_samples: data.emp.total(),
            empirical_mean,
            mean_ci: MeanCi {
                level: MEAN_CI_LEVEL,
                half_width,
            },
            tv_as_stated: as_stated.tv,
            tv_size_biased: size_biased.tv,
            law_mean_as_stated: mean_of(&as_stated),
            law_mean_size_biased: mean_of(&size_biased),
            expected_degree_limit,
            law_as_stated: as_stated.derived.law.describe(),
            law_size_biased: size_biased.derived.law.describe(),
            conditions: data.conditions.clone(),
            warnings,
        };
        let stem = point_file_stem(n, alpha);
        let json_path = cfg.output_dir.join(format!("{stem}.adjudication.json"));
        let csv_path = cfg.output_dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, pmf_csv(cfg, &data, &[as_stated, size_biased]))?;
        let mut json = serde_json::to_string_pretty(&summary).expect("serializable summary");
        json.push('\n');
        fs::write(&json_path, json)?;
        points.push((summary, json_path));
    }
    Ok(AdjudicationOutcome { points })
}
