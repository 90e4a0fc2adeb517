//! Experiment configuration: a strict, flat `key = value` text format.
//!
//! `#` starts a comment, blank lines are ignored, every key is known and
//! appears at most once, and parse -> serialize -> parse is the identity
//! (floats print in shortest round-trip form).
//!
//! ```text
//! n = 20000            # or a sweep: 1000,10000,100000
//! alpha = 1
//! beta = 1
//! c = 1
//! f = pointmass(1)
//! h = exponential(1)
//! replicates = 10
//! vertices_per_replicate = all
//! seed = 42
//! generator = auto     # naive | thinned | auto
//! policy = as-stated   # as-stated | size-biased | both
//! k_max = 30
//! output_dir = out
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::model::WeightSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line_no}: unknown key {key:?} in {line:?}")]
    UnknownKey {
        line_no: usize,
        line: String,
        key: String,
    },
    #[error("line {line_no}: duplicate key {key:?} in {line:?}")]
    DuplicateKey {
        line_no: usize,
        line: String,
        key: String,
    },
    #[error("line {line_no}: {message} in {line:?}")]
    InvalidValue {
        line_no: usize,
        line: String,
        message: String,
    },
    #[error("missing required key {key:?}")]
    MissingKey { key: &'static str },
}

/// How many degrees to harvest per generated graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Harvest {
    /// Every vertex of every replicate.
    All,
    /// The first `k` vertices of each replicate (k = 1 gives strictly iid
    /// samples across replicates).
    First(u64),
}

impl fmt::Display for Harvest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Harvest::All => f.write_str("all"),
            Harvest::First(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorChoice {
    Naive,
    Thinned,
    /// Naive when `n * m` fits the pair budget, thinned otherwise.
    Auto,
}

impl fmt::Display for GeneratorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorChoice::Naive => "naive",
            GeneratorChoice::Thinned => "thinned",
            GeneratorChoice::Auto => "auto",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    AsStated,
    SizeBiased,
    Both,
}

impl fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyChoice::AsStated => "as-stated",
            PolicyChoice::SizeBiased => "size-biased",
            PolicyChoice::Both => "both",
        })
    }
}

/// A parsed experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Sweep over `n` (singleton for a single point); strictly increasing.
    pub n_values: Vec<u64>,
    /// Sweep over `alpha`; strictly increasing.
    pub alpha_values: Vec<f64>,
    pub beta: f64,
    pub c: f64,
    pub f_spec: WeightSpec,
    pub h_spec: WeightSpec,
    pub replicates: u64,
    pub harvest: Harvest,
    pub seed: u64,
    pub generator: GeneratorChoice,
    pub policy: PolicyChoice,
    pub k_max: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// All `(n, alpha)` sweep points in deterministic order.
    pub fn points(&self) -> Vec<(u64, f64)> {
        let mut out = Vec::with_capacity(self.n_values.len() * self.alpha_values.len());
        for &n in &self.n_values {
            for &alpha in &self.alpha_values {
                out.push((n, alpha));
            }
        }
        out
    }

    /// Canonical text form; `parse_config(serialize(cfg)) == cfg`.
    pub fn serialize(&self) -> String {
        let join_u = |v: &[u64]| {
            v.iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "n = {}\nalpha = {}\nbeta = {}\nc = {}\nf = {}\nh = {}\nreplicates = {}\n\
             vertices_per_replicate = {}\nseed = {}\ngenerator = {}\npolicy = {}\n\
             k_max = {}\noutput_dir = {}\n",
            join_u(&self.n_values),
            join_f(&self.alpha_values),
            self.beta,
            self.c,
            self.f_spec,
            self.h_spec,
            self.replicates,
            self.harvest,
            self.seed,
            self.generator,
            self.policy,
            self.k_max,
            self.output_dir.display(),
        )
    }
}

/// Parses the flat key-value format, rejecting unknown or repeated keys and
/// out-of-range values with the offending line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut n_values: Option<Vec<u64>> = None;
    let mut alpha_values: Option<Vec<f64>> = None;
    let mut beta: Option<f64> = None;
    let mut c: Option<f64> = None;
    let mut f_spec: Option<WeightSpec> = None;
    let mut h_spec: Option<WeightSpec> = None;
    let mut replicates: Option<u64> = None;
    let mut harvest: Option<Harvest> = None;
    let mut seed: Option<u64> = None;
    let mut generator: Option<GeneratorChoice> = None;
    let mut policy: Option<PolicyChoice> = None;
    let mut k_max: Option<usize> = None;
    let mut output_dir: Option<PathBuf> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.to_string();
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let invalid = |message: String| ConfigError::InvalidValue {
            line_no,
            line: line.clone(),
            message,
        };
        let (key, value) = stripped
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| invalid("expected `key = value`".into()))?;
        if value.is_empty() {
            return Err(invalid(format!("empty value for {key:?}")));
        }

        macro_rules! set {
            ($slot:ident, $value:expr) => {{
                if $slot.is_some() {
                    return Err(ConfigError::DuplicateKey {
                        line_no,
                        line: line.clone(),
                        key: key.to_string(),
                    });
                }
                $slot = Some($value);
            }};
        }

        match key {
            "n" => {
                let list = parse_list::<u64>(value).map_err(&invalid)?;
                if list.iter().any(|&n| n < 1) {
                    return Err(invalid("n values must be >= 1".into()));
                }
                ensure_increasing(&list, |a, b| a < b).map_err(&invalid)?;
                set!(n_values, list)
            }
            "alpha" => {
                let list = parse_list::<f64>(value).map_err(&invalid)?;
                if list.iter().any(|a| !a.is_finite() || *a <= 0.0) {
                    return Err(invalid("alpha values must be positive finite".into()));
                }
                ensure_increasing(&list, |a, b| a < b).map_err(&invalid)?;
                set!(alpha_values, list)
            }
            "beta" => set!(beta, parse_positive(value).map_err(&invalid)?),
            "c" => set!(c, parse_positive(value).map_err(&invalid)?),
            "f" => set!(
                f_spec,
                value.parse::<WeightSpec>().map_err(|e| invalid(e.to_string()))?
            ),
            "h" => set!(
                h_spec,
                value.parse::<WeightSpec>().map_err(|e| invalid(e.to_string()))?
            ),
            "replicates" => {
                let r: u64 = value.parse().map_err(|e| invalid(format!("{e}")))?;
                if r < 1 {
                    return Err(invalid("replicates must be >= 1".into()));
                }
                set!(replicates, r)
            }
            "vertices_per_replicate" => {
                let h = if value == "all" {
                    Harvest::All
                } else {
                    let k: u64 = value.parse().map_err(|e| invalid(format!("{e}")))?;
                    if k < 1 {
                        return Err(invalid("vertices_per_replicate must be >= 1 or `all`".into()));
                    }
                    Harvest::First(k)
                };
                set!(harvest, h)
            }
            "seed" => set!(seed, value.parse().map_err(|e| invalid(format!("{e}")))?),
            "generator" => {
                let g = match value {
                    "naive" => GeneratorChoice::Naive,
                    "thinned" => GeneratorChoice::Thinned,
                    "auto" => GeneratorChoice::Auto,
                    other => return Err(invalid(format!("unknown generator {other:?}"))),
                };
                set!(generator, g)
            }
            "policy" => {
                let p = match value {
                    "as-stated" => PolicyChoice::AsStated,
                    "size-biased" => PolicyChoice::SizeBiased,
                    "both" => PolicyChoice::Both,
                    other => return Err(invalid(format!("unknown policy {other:?}"))),
                };
                set!(policy, p)
            }
            "k_max" => set!(k_max, value.parse().map_err(|e| invalid(format!("{e}")))?),
            "output_dir" => set!(output_dir, PathBuf::from(value)),
            other => {
                return Err(ConfigError::UnknownKey {
                    line_no,
                    line,
                    key: other.to_string(),
                })
            }
        }
    }

    Ok(ExperimentConfig {
        n_values: n_values.ok_or(ConfigError::MissingKey { key: "n" })?,
        alpha_values: alpha_values.ok_or(ConfigError::MissingKey { key: "alpha" })?,
        beta: beta.ok_or(ConfigError::MissingKey { key: "beta" })?,
        c: c.ok_or(ConfigError::MissingKey { key: "c" })?,
        f_spec: f_spec.ok_or(ConfigError::MissingKey { key: "f" })?,
        h_spec: h_spec.ok_or(ConfigError::MissingKey { key: "h" })?,
        replicates: replicates.unwrap_or(1),
        harvest: harvest.unwrap_or(Harvest::All),
        seed: seed.unwrap_or(0),
        generator: generator.unwrap_or(GeneratorChoice::Auto),
        policy: policy.unwrap_or(PolicyChoice::AsStated),
        k_max: k_max.unwrap_or(30),
        output_dir: output_dir.unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let items: Result<Vec<T>, _> = value.split(',').map(|s| s.trim().parse::<T>()).collect();
    let items = items.map_err(|e| format!("bad list entry: {e}"))?;
    if items.is_empty() {
        return Err("list must be nonempty".into());
    }
    Ok(items)
}

fn ensure_increasing<T: PartialOrd + Copy>(
    list: &[T],
    lt: impl Fn(T, T) -> bool,
) -> Result<(), String> {
    if list.windows(2).all(|w| lt(w[0], w[1])) {
        Ok(())
    } else {
        Err("sweep list must be strictly increasing".into())
    }
}

fn parse_positive(value: &str) -> Result<f64, String> {
    let v: f64 = value.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a positive finite real, got {v}"))
    }
}
