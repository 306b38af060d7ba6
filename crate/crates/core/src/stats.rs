//! Bootstrap confidence intervals and paired significance tests over
//! per-query average precisions.
//!
//! Resamples are drawn in fixed-size batches; batch `b` uses a ChaCha8
//! generator seeded from the master seed on stream `b`. Results therefore do
//! not depend on how many threads process the batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no per-query values to resample")]
    EmptyAps,
    #[error("paired samples differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("invalid bootstrap parameters: {0}")]
    InvalidParams(String),
}

const BATCH: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapParams {
    pub resamples: usize,
    /// Lower and upper percentile of the interval.
    pub ci_levels: (f64, f64),
    pub seed: u64,
    /// Family-wise significance level before Bonferroni correction.
    pub alpha: f64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self {
            resamples: 50_000,
            ci_levels: (0.025, 0.975),
            seed: 0,
            alpha: 0.05,
        }
    }
}

impl BootstrapParams {
    pub fn with_resamples(mut self, resamples: usize) -> Self {
        self.resamples = resamples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let (lo, hi) = self.ci_levels;
        if self.resamples == 0 {
            return Err(StatsError::InvalidParams(
                "resamples must be positive".into(),
            ));
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(StatsError::InvalidParams(format!(
                "percentiles must satisfy 0 <= {lo} < {hi} <= 1"
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidParams(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    /// Mean of the observed values.
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Value at percentile `p` of sorted data, nearest-rank definition.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs `resamples` draws of `stat` with per-batch generators.
fn batched<F>(resamples: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let batches = resamples.div_ceil(BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = BATCH.min(resamples - b * BATCH);
            (0..len).map(|_| stat(&mut rng)).collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn resample_mean(values: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = values.len();
    let mut s = 0.0;
    for _ in 0..n {
        s += values[rng.random_range(0..n)];
    }
    s / n as f64
}

/// Bootstrap means of `values` resampled with replacement.
pub fn bootstrap_means(values: &[f64], params: &BootstrapParams) -> Result<Vec<f64>, StatsError> {
    params.validate()?;
    if values.is_empty() {
        return Err(StatsError::EmptyAps);
    }
    Ok(batched(params.resamples, params.seed, |rng| {
        resample_mean(values, rng)
    }))
}

fn interval(estimate: f64, mut stats: Vec<f64>, params: &BootstrapParams) -> ConfidenceInterval {
    stats.sort_by(f64::total_cmp);
    ConfidenceInterval {
        estimate,
        lo: nearest_rank(&stats, params.ci_levels.0),
        hi: nearest_rank(&stats, params.ci_levels.1),
        resamples: stats.len(),
    }
}

/// Percentile interval of the mean over per-query values.
pub fn bootstrap_ci(
    values: &[f64],
    params: &BootstrapParams,
) -> Result<ConfidenceInterval, StatsError> {
    let stats = bootstrap_means(values, params)?;
    Ok(interval(mean(values), stats, params))
}

/// Percentile interval when whole groups (e.g. trajectories) are resampled.
///
/// `groups[i]` labels `values[i]`; each draw picks groups with replacement
/// and averages every value of the chosen groups.
pub fn bootstrap_ci_grouped<G: Ord + Clone>(
    values: &[f64],
    groups: &[G],
    params: &BootstrapParams,
) -> Result<ConfidenceInterval, StatsError> {
    params.validate()?;
    if values.is_empty() {
        return Err(StatsError::EmptyAps);
    }
    if values.len() != groups.len() {
        return Err(StatsError::LengthMismatch {
            a: values.len(),
            b: groups.len(),
        });
    }
    let mut by_group: std::collections::BTreeMap<G, (f64, usize)> = Default::default();
    for (v, g) in values.iter().zip(groups) {
        let e = by_group.entry(g.clone()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let sums: Vec<(f64, usize)> = by_group.into_values().collect();
    let m = sums.len();
    let stats = batched(params.resamples, params.seed, |rng| {
        let (mut s, mut n) = (0.0, 0usize);
        for _ in 0..m {
            let (gs, gn) = sums[rng.random_range(0..m)];
            s += gs;
            n += gn;
        }
        s / n as f64
    });
    Ok(interval(mean(values), stats, params))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    /// Observed mean of `a - b`.
    pub delta: f64,
    pub p_value: f64,
    pub resamples: usize,
}

/// Two-sided paired bootstrap test of equal means.
///
/// Differences are centered so the null holds in the resampling
/// distribution; `p = (1 + #{|delta_b| >= |delta_obs|}) / (B + 1)`.
pub fn paired_pvalue(
    a: &[f64],
    b: &[f64],
    params: &BootstrapParams,
) -> Result<PairedTest, StatsError> {
    params.validate()?;
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.is_empty() {
        return Err(StatsError::EmptyAps);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let delta = mean(&d);
    let centered: Vec<f64> = d.iter().map(|x| x - delta).collect();
    let stats = batched(params.resamples, params.seed, |rng| {
        resample_mean(&centered, rng)
    });
    let extreme = stats.iter().filter(|s| s.abs() >= delta.abs()).count();
    Ok(PairedTest {
        delta,
        p_value: (1 + extreme) as f64 / (params.resamples + 1) as f64,
        resamples: params.resamples,
    })
}

pub fn bonferroni_threshold(alpha: f64, comparisons: usize) -> f64 {
    alpha / comparisons.max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub a: String,
    pub b: String,
    pub delta: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub models: Vec<String>,
    pub threshold: f64,
    /// Upper triangle in row-major order: (0,1), (0,2), ..., (1,2), ...
    pub pairs: Vec<PairwiseResult>,
}

impl PairwiseMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<&PairwiseResult> {
        let (a, b) = (&self.models[i], &self.models[j]);
        self.pairs
            .iter()
            .find(|p| (&p.a == a && &p.b == b) || (&p.a == b && &p.b == a))
    }
}

/// All pairwise tests among models, significance judged at `alpha / pairs`.
pub fn pairwise_matrix(
    models: &[(String, Vec<f64>)],
    params: &BootstrapParams,
) -> Result<PairwiseMatrix, StatsError> {
    let m = models.len();
    let n_pairs = m * m.saturating_sub(1) / 2;
    let threshold = bonferroni_threshold(params.alpha, n_pairs);
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..m {
        for j in i + 1..m {
            let t = paired_pvalue(&models[i].1, &models[j].1, params)?;
            pairs.push(PairwiseResult {
                a: models[i].0.clone(),
                b: models[j].0.clone(),
                delta: t.delta,
                significant: t.p_value < threshold,
                p_value: t.p_value,
            });
        }
    }
    Ok(PairwiseMatrix {
        models: models.iter().map(|m| m.0.clone()).collect(),
        threshold,
        pairs,
    })
}
