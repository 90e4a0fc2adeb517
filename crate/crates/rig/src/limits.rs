//! Limiting degree laws and their evaluators.
//!
//! Three limits arise depending on `alpha`:
//!
//! * `alpha < 1`: the degree collapses to a point mass at 0;
//! * `alpha = 1`: a compound Poisson law — a `Poisson(c*a*beta)` number of
//!   summands, each `Poisson(c*B)` with `B` drawn from the element-weight
//!   law;
//! * `alpha > 1`: a mixed Poisson law `Poisson(c^2*a*beta*B)` with random
//!   `B`.
//!
//! `a` is the conditioning vertex weight: either a fixed value (the default,
//! matching the conditional statements) or mixed over the vertex-weight law
//! `F` (what a whole-graph degree harvest actually samples).
//!
//! The expected-degree limit `c^2*a*beta*E(B^2)` carries a second moment of
//! the weights, whereas the stated laws above have means `c^2*a*beta*E(B)`.
//! The two disagree whenever `E(B^2) != E(B)`; replacing the weight law by
//! its size-biased transform (mass reweighted by `x / E(B)`) restores
//! agreement. That replacement is offered as an opt-in adjudication variant
//! via [`SummandPolicy::SizeBiased`] and is never presented as the stated
//! law.

use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::model::{
    check_theorem_conditions, AlphaRegime, ConditionReport, ModelError, ModelParams, WeightKind,
    WeightSampler, WeightSpec, QUADRATURE_ABS_TOL,
};
use crate::quad;
use crate::rng::StreamKey;

/// Poisson-count truncation in the exact compound pmf: the expansion over
/// the primary count stops once its remaining tail mass is below this.
pub const COMPOUND_N_TAIL: f64 = 1e-13;

/// Sample count for Monte Carlo pmfs when the caller does not choose one.
pub const DEFAULT_MC_SAMPLES: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("{spec} has an infinite mean; size-biasing requires a finite mean")]
    InfiniteMean { spec: String },
    #[error("{spec} has an infinite second moment, the expected-degree limit diverges")]
    InfiniteSecondMoment { spec: String },
    #[error("size-biased transform of {spec} leaves the supported distribution menu")]
    UnsupportedSizeBias { spec: String },
    #[error("pgf argument t = {t} outside [0, 1]")]
    PgfArgument { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Whether the weight law enters the limit as stated or size-biased.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummandPolicy {
    AsStated,
    SizeBiased,
}

impl std::fmt::Display for SummandPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SummandPolicy::AsStated => "as-stated",
            SummandPolicy::SizeBiased => "size-biased",
        })
    }
}

/// How the vertex weight `a` is treated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Conditioning {
    /// Condition on `A_i = a` (the default reading of the limit statements).
    Fixed(f64),
    /// Mix over the vertex-weight law, matching degrees harvested across a
    /// whole graph.
    MixedOverF(WeightSpec),
}

impl Conditioning {
    fn mean(&self) -> f64 {
        match self {
            Conditioning::Fixed(a) => *a,
            Conditioning::MixedOverF(f) => f.mean(),
        }
    }

    /// Point masses when the conditioning is (effectively) discrete.
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Conditioning::Fixed(a) => Some(vec![(*a, 1.0)]),
            Conditioning::MixedOverF(f) => discrete_atoms(f),
        }
    }
}

impl std::fmt::Display for Conditioning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Conditioning::Fixed(a) => write!(f, "fixed({a})"),
            Conditioning::MixedOverF(spec) => write!(f, "mixed-over-f({spec})"),
        }
    }
}

fn discrete_atoms(spec: &WeightSpec) -> Option<Vec<(f64, f64)>> {
    match spec.kind() {
        WeightKind::PointMass { value } => Some(vec![(value, 1.0)]),
        WeightKind::TwoPoint { x1, p1, x2 } => Some(vec![(x1, p1), (x2, 1.0 - p1)]),
        _ => None,
    }
}

/// One of the three limiting degree laws.
#[derive(Clone, Debug, PartialEq)]
pub enum LimitLaw {
    PointMassZero,
    CompoundPoisson {
        c: f64,
        beta: f64,
        conditioning: Conditioning,
        /// Element-weight law after the policy has been applied.
        summand_law: WeightSpec,
        policy: SummandPolicy,
    },
    MixedPoisson {
        c: f64,
        beta: f64,
        conditioning: Conditioning,
        mixing_law: WeightSpec,
        policy: SummandPolicy,
    },
}

/// A limit law together with the hypothesis report that qualifies it.
#[derive(Clone, Debug)]
pub struct DerivedLimit {
    pub law: LimitLaw,
    pub conditions: ConditionReport,
}

impl DerivedLimit {
    /// False when a moment hypothesis fails: the law is then only the formal
    /// limit expression, not a proven one.
    pub fn hypotheses_met(&self) -> bool {
        self.conditions.limit_satisfied()
    }
}

/// The limit law for fixed conditioning weight `a`.
///
/// `h` should already be normalised when its mean is finite. Hypothesis
/// violations do not fail the construction; they are recorded in the
/// attached condition report (the law is then "formal").
pub fn limiting_law(
    params: &ModelParams,
    a: f64,
    h: &WeightSpec,
    policy: SummandPolicy,
) -> Result<DerivedLimit, LimitError> {
    let f_surrogate = WeightSpec::point_mass(a).map_err(ModelError::from)?;
    build_limit(params, Conditioning::Fixed(a), &f_surrogate, h, policy)
}

/// The limit law mixed over the vertex-weight law `f`.
pub fn limiting_law_mixed(
    params: &ModelParams,
    f: &WeightSpec,
    h: &WeightSpec,
    policy: SummandPolicy,
) -> Result<DerivedLimit, LimitError> {
    build_limit(params, Conditioning::MixedOverF(*f), f, h, policy)
}

fn build_limit(
    params: &ModelParams,
    conditioning: Conditioning,
    f: &WeightSpec,
    h: &WeightSpec,
    policy: SummandPolicy,
) -> Result<DerivedLimit, LimitError> {
    let conditions = check_theorem_conditions(params, f, h);
    let weight_law = match policy {
        SummandPolicy::AsStated => *h,
        SummandPolicy::SizeBiased => size_biased(h)?,
    };
    let law = match conditions.regime {
        AlphaRegime::Subcritical => LimitLaw::PointMassZero,
        AlphaRegime::Critical => LimitLaw::CompoundPoisson {
            c: params.c(),
            beta: params.beta(),
            conditioning,
            summand_law: weight_law,
            policy,
        },
        AlphaRegime::Supercritical => LimitLaw::MixedPoisson {
            c: params.c(),
            beta: params.beta(),
            conditioning,
            mixing_law: weight_law,
            policy,
        },
    };
    Ok(DerivedLimit { law, conditions })
}

/// The limit of the conditional expected degree, `c^2 * a * beta * E(B^2)`.
pub fn expected_degree_limit(
    c: f64,
    a: f64,
    beta: f64,
    h: &WeightSpec,
) -> Result<f64, LimitError> {
    let m2 = h.moment(2.0);
    if !m2.is_finite() {
        return Err(LimitError::InfiniteSecondMoment {
            spec: h.to_string(),
        });
    }
    Ok(c * c * a * beta * m2)
}

/// The size-biased transform: mass/density reweighted by `x / E(X)`.
///
/// Closed within the distribution menu for point mass (identity), two-point,
/// exponential (-> Gamma(2)), gamma (shape+1) and Pareto (tail-1); the
/// size-biased uniform has a triangular density outside the menu and is
/// rejected.
pub fn size_biased(spec: &WeightSpec) -> Result<WeightSpec, LimitError> {
    let mean = spec.mean();
    if !mean.is_finite() {
        return Err(LimitError::InfiniteMean {
            spec: spec.to_string(),
        });
    }
    let out = match spec.kind() {
        WeightKind::PointMass { .. } => return Ok(*spec),
        WeightKind::TwoPoint { x1, p1, x2 } => {
            WeightSpec::two_point(x1, p1 * x1 / mean, x2).map_err(ModelError::from)?
        }
        WeightKind::Exponential { rate } => {
            WeightSpec::gamma(2.0, rate).map_err(ModelError::from)?
        }
        WeightKind::Gamma { shape, rate } => {
            WeightSpec::gamma(shape + 1.0, rate).map_err(ModelError::from)?
        }
        WeightKind::Pareto { scale, tail_index } => {
            WeightSpec::pareto(scale, tail_index - 1.0).map_err(ModelError::from)?
        }
        WeightKind::Uniform { .. } => {
            return Err(LimitError::UnsupportedSizeBias {
                spec: spec.to_string(),
            })
        }
    };
    Ok(out)
}

// ---------------------------------------------------------------------------
// Probability generating functions
// ---------------------------------------------------------------------------

fn check_t(t: f64) -> Result<(), LimitError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(LimitError::PgfArgument { t })
    }
}

/// PGF of the compound Poisson limit at fixed `a`:
/// `exp(c*a*beta*(tau(t) - 1))` with `tau(t) = E exp(c*(t-1)*B)`, `B ~ h`.
pub fn pgf_compound(t: f64, c: f64, a: f64, beta: f64, h: &WeightSpec) -> Result<f64, LimitError> {
    check_t(t)?;
    let tau = h.mgf(c * (t - 1.0))?;
    Ok((c * a * beta * (tau - 1.0)).exp())
}

/// PGF of the mixed Poisson limit: `E_B exp(rate_scale * B * (t - 1))`.
pub fn pgf_mixed_poisson(
    t: f64,
    rate_scale: f64,
    mixing_law: &WeightSpec,
) -> Result<f64, LimitError> {
    check_t(t)?;
    Ok(mixing_law.mgf(rate_scale * (t - 1.0))?)
}

/// `E g(X)` by the per-family scheme used for non-closed-form expectations:
/// exact for atoms, transformed adaptive quadrature otherwise. `g` must be
/// bounded on the support.
fn expectation_over(
    spec: &WeightSpec,
    g: &dyn Fn(f64) -> f64,
) -> Result<f64, LimitError> {
    if let Some(atoms) = discrete_atoms(spec) {
        return Ok(atoms.iter().map(|(x, p)| p * g(*x)).sum());
    }
    let v = match spec.kind() {
        WeightKind::Gamma { shape, rate } => gamma_expectation(shape, rate, g)?,
        WeightKind::Exponential { rate } => gamma_expectation(1.0, rate, g)?,
        WeightKind::Uniform { lo, hi } => {
            quad::integrate(|x| g(x), lo, hi, QUADRATURE_ABS_TOL)? / (hi - lo)
        }
        WeightKind::Pareto { scale, tail_index } => {
            let f = |u: f64| {
                if u <= 0.0 {
                    0.0
                } else {
                    g(scale / u) * tail_index * u.powf(tail_index - 1.0)
                }
            };
            quad::integrate(f, 0.0, 1.0, QUADRATURE_ABS_TOL)?
        }
        _ => unreachable!("atoms handled above"),
    };
    Ok(v)
}

/// Gamma expectation via `x = t^(1/shape)`, `t = u/(1-u)`: the substitution
/// absorbs the `x^(shape-1)` density factor exactly.
fn gamma_expectation(
    shape: f64,
    rate: f64,
    g: &dyn Fn(f64) -> f64,
) -> Result<f64, LimitError> {
    let log_norm = shape * rate.ln() - ln_gamma(shape) - shape.ln();
    let f = |u: f64| {
        if u <= 0.0 {
            return if shape == 1.0 {
                // t = u/(1-u) -> 0, x -> 0: integrand -> g(0+) * rate / 1
                g(0.0) * (log_norm).exp()
            } else {
                0.0
            };
        }
        if u >= 1.0 {
            return 0.0;
        }
        let t = u / (1.0 - u);
        let x = t.powf(1.0 / shape);
        let jac = 1.0 / ((1.0 - u) * (1.0 - u));
        g(x) * (log_norm - rate * x).exp() * jac
    };
    Ok(quad::integrate(f, 0.0, 1.0, QUADRATURE_ABS_TOL)?)
}

impl LimitLaw {
    /// Human-readable one-line description, embedded in reports.
    pub fn describe(&self) -> String {
        match self {
            LimitLaw::PointMassZero => "point-mass-at-0".into(),
            LimitLaw::CompoundPoisson {
                c,
                beta,
                conditioning,
                summand_law,
                policy,
            } => format!(
                "compound-poisson(c={c}, beta={beta}, conditioning={conditioning}, \
                 summand=poisson({c}*B), B~{summand_law}, policy={policy})"
            ),
            LimitLaw::MixedPoisson {
                c,
                beta,
                conditioning,
                mixing_law,
                policy,
            } => format!(
                "mixed-poisson(rate={c}^2*a*{beta}*B, conditioning={conditioning}, \
                 B~{mixing_law}, policy={policy})"
            ),
        }
    }

    /// Mean of the law (`+inf` when a weight mean diverges).
    pub fn mean(&self) -> f64 {
        match self {
            LimitLaw::PointMassZero => 0.0,
            LimitLaw::CompoundPoisson {
                c,
                beta,
                conditioning,
                summand_law,
                ..
            } => c * conditioning.mean() * beta * c * summand_law.mean(),
            LimitLaw::MixedPoisson {
                c,
                beta,
                conditioning,
                mixing_law,
                ..
            } => c * c * conditioning.mean() * beta * mixing_law.mean(),
        }
    }

    /// PGF `E t^D` on `t in [0, 1]`.
    pub fn pgf(&self, t: f64) -> Result<f64, LimitError> {
        check_t(t)?;
        match self {
            LimitLaw::PointMassZero => Ok(1.0),
            LimitLaw::CompoundPoisson {
                c,
                beta,
                conditioning,
                summand_law,
                ..
            } => {
                let tau = summand_law.mgf(*c * (t - 1.0))?;
                match conditioning {
                    Conditioning::Fixed(a) => Ok((c * a * beta * (tau - 1.0)).exp()),
                    // E_A exp(c*A*beta*(tau-1)) is F's mgf at a non-positive
                    // argument.
                    Conditioning::MixedOverF(f) => Ok(f.mgf(c * beta * (tau - 1.0))?),
                }
            }
            LimitLaw::MixedPoisson {
                c,
                beta,
                conditioning,
                mixing_law,
                ..
            } => {
                let theta = c * c * beta * (t - 1.0); // <= 0
                match conditioning {
                    Conditioning::Fixed(a) => Ok(mixing_law.mgf(theta * a)?),
                    Conditioning::MixedOverF(f) => {
                        if let Some(atoms) = discrete_atoms(f) {
                            let mut acc = 0.0;
                            for (a, p) in atoms {
                                acc += p * mixing_law.mgf(theta * a)?;
                            }
                            Ok(acc)
                        } else if let Some(atoms) = discrete_atoms(mixing_law) {
                            let mut acc = 0.0;
                            for (b, q) in atoms {
                                acc += q * f.mgf(theta * b)?;
                            }
                            Ok(acc)
                        } else {
                            // Both laws continuous: integrate F's mgf over H.
                            expectation_over(mixing_law, &|b| {
                                f.mgf(theta * b).unwrap_or(f64::NAN)
                            })
                        }
                    }
                }
            }
        }
    }

    /// Whether an exact pmf path exists for this law.
    pub fn has_exact_pmf(&self) -> bool {
        match self {
            LimitLaw::PointMassZero => true,
            LimitLaw::CompoundPoisson {
                conditioning,
                summand_law,
                ..
            } => conditioning.atoms().is_some() && discrete_atoms(summand_law).is_some(),
            LimitLaw::MixedPoisson {
                conditioning,
                mixing_law,
                ..
            } => {
                conditioning.atoms().is_some()
                    && (discrete_atoms(mixing_law).is_some()
                        || matches!(
                            mixing_law.kind(),
                            WeightKind::Exponential { .. } | WeightKind::Gamma { .. }
                        ))
            }
        }
    }

    /// pmf over `0..=k_max` plus tail mass.
    ///
    /// Exact when [`Self::has_exact_pmf`]: finite-support weight laws go
    /// through the Poisson-mixture/convolution path, gamma-family mixing
    /// through the negative binomial. Otherwise Monte Carlo with
    /// [`DEFAULT_MC_SAMPLES`] samples from a fixed internal stream and
    /// reported standard errors.
    pub fn pmf(&self, k_max: usize) -> Result<LimitPmf, LimitError> {
        if self.has_exact_pmf() {
            self.pmf_exact(k_max)
        } else {
            let mut rng = StreamKey::derive(0, "limits.pmf.default-mc", &[]).rng();
            Ok(self.pmf_monte_carlo(k_max, DEFAULT_MC_SAMPLES, &mut rng))
        }
    }

    fn pmf_exact(&self, k_max: usize) -> Result<LimitPmf, LimitError> {
        let mut probs = vec![0.0; k_max + 1];
        let mut tail = 0.0;
        match self {
            LimitLaw::PointMassZero => {
                probs[0] = 1.0;
            }
            LimitLaw::CompoundPoisson {
                c,
                beta,
                conditioning,
                summand_law,
                ..
            } => {
                let a_atoms = conditioning.atoms().expect("checked by has_exact_pmf");
                let b_atoms = discrete_atoms(summand_law).expect("checked by has_exact_pmf");
                for (a, pa) in a_atoms {
                    let (part, part_tail) =
                        compound_pmf_exact(c * a * beta, *c, &b_atoms, k_max);
                    for (dst, src) in probs.iter_mut().zip(&part) {
                        *dst += pa * src;
                    }
                    tail += pa * part_tail;
                }
            }
            LimitLaw::MixedPoisson {
                c,
                beta,
                conditioning,
                mixing_law,
                ..
            } => {
                let a_atoms = conditioning.atoms().expect("checked by has_exact_pmf");
                for (a, pa) in a_atoms {
                    let rate_scale = c * c * a * beta;
                    let (part, part_tail) = match discrete_atoms(mixing_law) {
                        Some(b_atoms) => {
                            let mut part = vec![0.0; k_max + 1];
                            let mut pt = 0.0;
                            for (b, qb) in b_atoms {
                                let lambda = rate_scale * b;
                                let mut cum = 0.0;
                                for (k, slot) in part.iter_mut().enumerate() {
                                    let p = poisson_pmf(k as u64, lambda);
                                    *slot += qb * p;
                                    cum += p;
                                }
                                pt += qb * (1.0 - cum).max(0.0);
                            }
                            (part, pt)
                        }
                        None => match mixing_law.kind() {
                            WeightKind::Exponential { rate } => {
                                negative_binomial_pmf(1.0, rate, rate_scale, k_max)
                            }
                            WeightKind::Gamma { shape, rate } => {
                                negative_binomial_pmf(shape, rate, rate_scale, k_max)
                            }
                            _ => unreachable!("checked by has_exact_pmf"),
                        },
                    };
                    for (dst, src) in probs.iter_mut().zip(&part) {
                        *dst += pa * src;
                    }
                    tail += pa * part_tail;
                }
            }
        }
        let captured: f64 = probs.iter().sum();
        Ok(LimitPmf {
            suggested_k_max: suggest_k_max(&probs, captured, k_max),
            probs,
            tail,
            std_err: None,
            mc_samples: None,
        })
    }

    /// Monte Carlo pmf from `samples` draws of [`Self::sample`].
    pub fn pmf_monte_carlo(
        &self,
        k_max: usize,
        samples: u64,
        rng: &mut impl Rng,
    ) -> LimitPmf {
        let draws = self.sample(samples as usize, rng);
        let mut counts = vec![0u64; k_max + 1];
        let mut tail_count = 0u64;
        for d in draws {
            if (d as usize) <= k_max {
                counts[d as usize] += 1;
            } else {
                tail_count += 1;
            }
        }
        let nf = samples as f64;
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        let std_err = probs
            .iter()
            .map(|&p| (p * (1.0 - p) / nf).sqrt())
            .collect();
        let captured: f64 = probs.iter().sum();
        LimitPmf {
            suggested_k_max: suggest_k_max(&probs, captured, k_max),
            probs,
            tail: tail_count as f64 / nf,
            std_err: Some(std_err),
            mc_samples: Some(samples),
        }
    }

    /// `count` independent draws of the limit law.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Vec<u64> {
        match self {
            LimitLaw::PointMassZero => vec![0; count],
            LimitLaw::CompoundPoisson {
                c,
                beta,
                conditioning,
                summand_law,
                ..
            } => {
                let summand = WeightSampler::new(summand_law);
                let cond = CondSampler::new(conditioning);
                (0..count)
                    .map(|_| {
                        let a = cond.draw(rng);
                        let n = poisson_draw(rng, c * a * beta);
                        let mut d = 0u64;
                        for _ in 0..n {
                            let b = summand.sample(rng);
                            d += poisson_draw(rng, c * b);
                        }
                        d
                    })
                    .collect()
            }
            LimitLaw::MixedPoisson {
                c,
                beta,
                conditioning,
                mixing_law,
                ..
            } => {
                let mixing = WeightSampler::new(mixing_law);
                let cond = CondSampler::new(conditioning);
                (0..count)
                    .map(|_| {
                        let a = cond.draw(rng);
                        let b = mixing.sample(rng);
                        poisson_draw(rng, c * c * a * beta * b)
                    })
                    .collect()
            }
        }
    }
}

enum CondSampler {
    Fixed(f64),
    Mixed(WeightSampler),
}

impl CondSampler {
    fn new(conditioning: &Conditioning) -> Self {
        match conditioning {
            Conditioning::Fixed(a) => CondSampler::Fixed(*a),
            Conditioning::MixedOverF(f) => CondSampler::Mixed(WeightSampler::new(f)),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            CondSampler::Fixed(a) => *a,
            CondSampler::Mixed(s) => s.sample(rng),
        }
    }
}

/// pmf over `0..=k_max` with tail mass, and standard errors when it came
/// from Monte Carlo.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitPmf {
    pub probs: Vec<f64>,
    pub tail: f64,
    pub std_err: Option<Vec<f64>>,
    pub mc_samples: Option<u64>,
    /// Set when `0..=k_max` captures less than `1 - 1e-6` of the mass; the
    /// suggestion restores that coverage.
    pub suggested_k_max: Option<usize>,
}

impl LimitPmf {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail
    }
}

fn suggest_k_max(probs: &[f64], captured: f64, k_max: usize) -> Option<usize> {
    if captured >= 1.0 - 1e-6 {
        return None;
    }
    // Grow geometrically from the current k_max; precise coverage is
    // re-checked on the caller's next attempt.
    Some((k_max.max(4)) * 2)
}

/// Stable Poisson pmf via logs.
pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    (k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)).exp()
}

fn poisson_draw(rng: &mut impl Rng, lambda: f64) -> u64 {
    debug_assert!(lambda > 0.0);
    let d = rand_distr::Poisson::new(lambda).expect("positive finite rate");
    d.sample(rng) as u64
}

use rand_distr::Distribution;

/// Exact compound pmf: expand over the primary Poisson count (truncated
/// where its tail drops below [`COMPOUND_N_TAIL`]) and convolve the summand
/// pmf, itself a finite Poisson mixture over the weight atoms.
fn compound_pmf_exact(
    lambda: f64,
    rate_scale: f64,
    atoms: &[(f64, f64)],
    k_max: usize,
) -> (Vec<f64>, f64) {
    // Internal support wide enough that dropped convolution mass is far
    // below the 1e-9 normalisation contract.
    let mean_b: f64 = atoms.iter().map(|(b, q)| q * b).sum();
    let m2_b: f64 = atoms.iter().map(|(b, q)| q * b * b).sum();
    let mean = lambda * rate_scale * mean_b;
    let var = lambda * (rate_scale * mean_b + rate_scale * rate_scale * m2_b);
    let k_work = (k_max + 1).max((mean + 12.0 * var.sqrt()).ceil() as usize + 25);

    let summand: Vec<f64> = (0..=k_work)
        .map(|x| {
            atoms
                .iter()
                .map(|(b, q)| q * poisson_pmf(x as u64, rate_scale * b))
                .sum()
        })
        .collect();

    let mut out = vec![0.0; k_work + 1];
    let mut conv = vec![0.0; k_work + 1];
    conv[0] = 1.0; // zero summands
    let mut n_weight = (-lambda).exp(); // P(N = 0)
    let mut n_cum = n_weight;
    out[0] += n_weight;
    let mut s = 0u64;
    while 1.0 - n_cum >= COMPOUND_N_TAIL {
        s += 1;
        // conv <- conv * summand (truncated at k_work)
        let mut next = vec![0.0; k_work + 1];
        for (i, &ci) in conv.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            for (j, &gj) in summand.iter().take(k_work + 1 - i).enumerate() {
                next[i + j] += ci * gj;
            }
        }
        conv = next;
        n_weight *= lambda / s as f64;
        n_cum += n_weight;
        for (o, &cv) in out.iter_mut().zip(&conv) {
            *o += n_weight * cv;
        }
    }
    let probs = out[..=k_max].to_vec();
    let beyond: f64 = out[k_max + 1..].iter().sum();
    let residual = (1.0 - out.iter().sum::<f64>() - (1.0 - n_cum)).max(0.0);
    // Tail = computed mass beyond k_max + truncated primary tail + any
    // convolution spill past k_work.
    let tail = beyond + (1.0 - n_cum) + residual;
    (probs, tail)
}

/// Gamma(shape, rate)-mixed Poisson(rate_scale * B) is negative binomial.
fn negative_binomial_pmf(
    shape: f64,
    rate: f64,
    rate_scale: f64,
    k_max: usize,
) -> (Vec<f64>, f64) {
    let log_q = (rate / (rate + rate_scale)).ln();
    let log_p = (rate_scale / (rate + rate_scale)).ln();
    let mut probs = Vec::with_capacity(k_max + 1);
    let mut cum = 0.0;
    for k in 0..=k_max {
        let kf = k as f64;
        let v = (ln_gamma(kf + shape) - ln_gamma(shape) - ln_gamma(kf + 1.0)
            + shape * log_q
            + kf * log_p)
            .exp();
        probs.push(v);
        cum += v;
    }
    (probs, (1.0 - cum).max(0.0))
}
