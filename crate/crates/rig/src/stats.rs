//! Empirical degree statistics and goodness-of-fit machinery.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::limits::LimitPmf;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("chi-square needs at least 2 bins after pooling, got {remaining}")]
    TooFewBins { remaining: usize },
}

/// Exact degree counts: `counts[k]` occurrences of degree `k`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmpiricalPmf {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl EmpiricalPmf {
    pub fn from_degrees<I>(degrees: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<u64>,
    {
        let mut pmf = EmpiricalPmf::default();
        for d in degrees {
            *pmf.counts.entry(d.into()).or_insert(0) += 1;
            pmf.total += 1;
        }
        pmf
    }

    /// Pointwise sum of counts (sample concatenation).
    pub fn merge(&mut self, other: &EmpiricalPmf) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    pub fn prob(&self, k: u64) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(k) as f64 / self.total as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    pub fn max_degree(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.iter().map(|(k, c)| k as f64 * c as f64).sum::<f64>() / self.total as f64
    }

    /// Mass strictly above `k`.
    pub fn mass_above(&self, k: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts
            .range(k + 1..)
            .map(|(_, &c)| c as f64)
            .sum::<f64>()
            / self.total as f64
    }
}

/// Total variation distance between an empirical pmf and a reference pmf
/// with tail mass.
///
/// The reference tail is treated as concentrated outside the compared
/// support, which upper-bounds the true distance — conservative for
/// acceptance checks.
pub fn tv_distance(p: &EmpiricalPmf, q: &[f64], q_tail: f64) -> f64 {
    let in_range: f64 = q
        .iter()
        .enumerate()
        .map(|(k, &qk)| (p.prob(k as u64) - qk).abs())
        .sum();
    let p_out = p.mass_above(q.len().saturating_sub(1) as u64);
    0.5 * (in_range + p_out + q_tail)
}

/// Plain total variation between two same-length pmf arrays.
pub fn tv_distance_arrays(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Chi-square goodness-of-fit result.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Raw bins merged into the final pooled tail bin (0 when no pooling
    /// was needed).
    pub pooled_bins: usize,
}

/// Chi-square test of `emp` against the reference pmf.
///
/// Bins are `0..q.len()` plus one tail bin carrying `q_tail`; bins with
/// expected count below `min_expected` are pooled from the tail inward.
pub fn chi_square_gof(
    emp: &EmpiricalPmf,
    q: &[f64],
    q_tail: f64,
    min_expected: f64,
) -> Result<ChiSquare, StatsError> {
    if emp.total == 0 {
        return Err(StatsError::EmptySample);
    }
    let total = emp.total as f64;
    let mut observed: Vec<f64> = (0..q.len()).map(|k| emp.count(k as u64) as f64).collect();
    let mut expected: Vec<f64> = q.iter().map(|&p| p * total).collect();
    observed.push(emp.mass_above(q.len().saturating_sub(1) as u64) * total);
    expected.push(q_tail * total);

    let raw_bins = expected.len();
    while expected.len() > 1 && *expected.last().unwrap() < min_expected {
        let e = expected.pop().unwrap();
        let o = observed.pop().unwrap();
        *expected.last_mut().unwrap() += e;
        *observed.last_mut().unwrap() += o;
    }
    let pooled_bins = match raw_bins - expected.len() {
        0 => 0,
        merged => merged + 1,
    };
    if expected.len() < 2 {
        return Err(StatsError::TooFewBins {
            remaining: expected.len(),
        });
    }
    let statistic: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| {
            if e == 0.0 {
                if o == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (o - e) * (o - e) / e
            }
        })
        .sum();
    let dof = expected.len() - 1;
    let p_value = if statistic.is_finite() {
        1.0 - ChiSquared::new(dof as f64)
            .expect("dof >= 1")
            .cdf(statistic)
    } else {
        0.0
    };
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
        pooled_bins,
    })
}

/// Normal-approximation confidence interval `(mean, half_width)` at the
/// given two-sided level, using the sample standard deviation.
pub fn mean_ci(samples: &[f64], level: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&level), "level in [0, 1)");
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    (mean, z * (var / n as f64).sqrt())
}

/// Share of degree-zero vertices.
pub fn isolated_fraction(degrees: &[u32]) -> Result<f64, StatsError> {
    if degrees.is_empty() {
        return Err(StatsError::EmptySample);
    }
    Ok(degrees.iter().filter(|&&d| d == 0).count() as f64 / degrees.len() as f64)
}

/// The serialized goodness-of-fit report.
#[derive(Clone, Debug, Serialize)]
pub struct GofReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub tv: f64,
    pub n_samples: u64,
    pub pooled_bins: usize,
}

impl GofReport {
    pub fn new(emp: &EmpiricalPmf, pmf: &LimitPmf, min_expected: f64) -> Result<Self, StatsError> {
        let chi = chi_square_gof(emp, &pmf.probs, pmf.tail, min_expected)?;
        Ok(GofReport {
            statistic: chi.statistic,
            dof: chi.dof,
            p_value: chi.p_value,
            tv: tv_distance(emp, &pmf.probs, pmf.tail),
            n_samples: emp.total(),
            pooled_bins: chi.pooled_bins,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empirical_counting() {
        let pmf = EmpiricalPmf::from_degrees([0u32, 0, 1]);
        assert_eq!(pmf.count(0), 2);
        assert_eq!(pmf.count(1), 1);
        assert_eq!(pmf.total(), 3);
        assert_eq!(EmpiricalPmf::from_degrees(Vec::<u32>::new()).total(), 0);
    }

    #[test]
    fn empirical_merge_is_pointwise_sum() {
        let mut a = EmpiricalPmf::from_degrees([0u32, 2, 2]);
        let b = EmpiricalPmf::from_degrees([2u32, 3]);
        a.merge(&b);
        assert_eq!(a, EmpiricalPmf::from_degrees([0u32, 2, 2, 2, 3]));
    }

    #[test]
    fn tv_examples() {
        let p = EmpiricalPmf::from_degrees([0u32, 1]);
        assert_eq!(tv_distance(&p, &[0.5, 0.5], 0.0), 0.0);

        // Disjoint supports: emp all at 2, reference all at 0.
        let p = EmpiricalPmf::from_degrees([2u32, 2]);
        assert_eq!(tv_distance(&p, &[1.0, 0.0], 0.0), 1.0);

        let p = EmpiricalPmf::from_degrees([0u32, 0, 0, 1]);
        let d = tv_distance(&p, &[0.5, 0.5], 0.0);
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tv_counts_reference_tail_as_disjoint() {
        // Reference has 0.1 tail mass beyond the array; emp has none.
        let p = EmpiricalPmf::from_degrees([0u32; 10]);
        let d = tv_distance(&p, &[0.9], 0.1);
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn chi_square_frozen_example() {
        // counts (55, 45) vs (0.5, 0.5): statistic 1.0, dof 1.
        let emp = EmpiricalPmf::from_degrees(
            std::iter::repeat(0u32).take(55).chain(std::iter::repeat(1).take(45)),
        );
        let out = chi_square_gof(&emp, &[0.5, 0.5], 0.0, 0.0).unwrap();
        assert!((out.statistic - 1.0).abs() < 1e-12);
        assert_eq!(out.dof, 1);
        assert!((out.p_value - 0.3173).abs() < 1e-3);
        assert_eq!(out.pooled_bins, 0);
    }

    #[test]
    fn chi_square_zero_for_exact_proportions() {
        let emp = EmpiricalPmf::from_degrees(
            std::iter::repeat(0u32).take(50).chain(std::iter::repeat(1).take(50)),
        );
        let out = chi_square_gof(&emp, &[0.5, 0.5], 0.0, 0.0).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!((out.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_pools_tail_inward() {
        // Expected (100, 3, 2) with min 5 pools the last two bins.
        let emp = EmpiricalPmf::from_degrees(
            std::iter::repeat(0u32)
                .take(100)
                .chain(std::iter::repeat(1).take(3))
                .chain(std::iter::repeat(2).take(2)),
        );
        let q = [100.0 / 105.0, 3.0 / 105.0, 2.0 / 105.0];
        let out = chi_square_gof(&emp, &q, 0.0, 5.0).unwrap();
        assert_eq!(out.dof, 1); // two bins remain
        assert_eq!(out.pooled_bins, 3); // tail bin + bins 1 and 2
        assert_eq!(out.statistic, 0.0);
    }

    #[test]
    fn chi_square_too_few_bins() {
        let emp = EmpiricalPmf::from_degrees([0u32; 4]);
        let err = chi_square_gof(&emp, &[1.0], 0.0, 10.0).unwrap_err();
        assert!(matches!(err, StatsError::TooFewBins { remaining: 1 }));
    }

    #[test]
    fn chi_square_permutation_invariant_without_pooling() {
        let emp = EmpiricalPmf::from_degrees(
            std::iter::repeat(0u32)
                .take(30)
                .chain(std::iter::repeat(1).take(50))
                .chain(std::iter::repeat(2).take(20)),
        );
        let base = chi_square_gof(&emp, &[0.25, 0.5, 0.25], 0.0, 0.0).unwrap();
        // Permute bins (2,0,1) in both observed and expected.
        let permuted = EmpiricalPmf::from_degrees(
            std::iter::repeat(0u32)
                .take(20)
                .chain(std::iter::repeat(1).take(30))
                .chain(std::iter::repeat(2).take(50)),
        );
        let out = chi_square_gof(&permuted, &[0.25, 0.25, 0.5], 0.0, 0.0).unwrap();
        assert!((out.statistic - base.statistic).abs() < 1e-12);
        assert_eq!(out.dof, base.dof);
    }

    #[test]
    fn mean_ci_examples() {
        let (m, hw) = mean_ci(&[3.0, 3.0, 3.0], 0.95);
        assert_eq!((m, hw), (3.0, 0.0));

        let (m, hw) = mean_ci(&[0.0, 2.0], 0.95);
        assert_eq!(m, 1.0);
        assert!((hw - 1.959963984540054).abs() < 1e-9);

        let (_, hw99) = mean_ci(&[0.0, 2.0], 0.99);
        assert!(hw99 > hw);
    }

    #[test]
    fn isolated_fraction_examples() {
        assert_eq!(isolated_fraction(&[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(isolated_fraction(&[0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(isolated_fraction(&[3, 2, 4]).unwrap(), 0.0);
        assert!(isolated_fraction(&[]).is_err());
    }

    #[test]
    fn two_independent_sample_pmfs_are_close() {
        use crate::limits::{Conditioning, LimitLaw, SummandPolicy};
        use crate::model::WeightSpec;
        use crate::rng::StreamKey;
        let law = LimitLaw::CompoundPoisson {
            c: 1.0,
            beta: 1.0,
            conditioning: Conditioning::Fixed(1.0),
            summand_law: WeightSpec::point_mass(1.0).unwrap(),
            policy: SummandPolicy::AsStated,
        };
        let key = StreamKey::derive(19, "test.stats.convergence", &[]);
        let a = law.pmf_monte_carlo(40, 1_000_000, &mut key.substream(0));
        let b = law.pmf_monte_carlo(40, 1_000_000, &mut key.substream(1));
        let tv = tv_distance_arrays(&a.probs, &b.probs) + 0.5 * (a.tail + b.tail);
        assert!(tv < 0.01, "tv {tv}");
    }

    proptest! {
        #[test]
        fn tv_is_a_metric_on_random_pmfs(
            raw_a in prop::collection::vec(0.0f64..1.0, 6),
            raw_b in prop::collection::vec(0.0f64..1.0, 6),
            raw_c in prop::collection::vec(0.0f64..1.0, 6),
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-9;
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let a = norm(&raw_a);
            let b = norm(&raw_b);
            let c = norm(&raw_c);
            let dab = tv_distance_arrays(&a, &b);
            let dba = tv_distance_arrays(&b, &a);
            prop_assert!((dab - dba).abs() < 1e-15);
            let dac = tv_distance_arrays(&a, &c);
            let dcb = tv_distance_arrays(&c, &b);
            prop_assert!(dab <= dac + dcb + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&dab));
            prop_assert!(tv_distance_arrays(&a, &a) == 0.0);
        }
    }
}
