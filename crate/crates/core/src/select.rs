//! Model selection over the number of components and external agreement measures.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit, FitConfig, FitReport, InitStrategy, MixtureModel};
use crate::error::{Error, Result};

/// Concentration entries at or below this magnitude count as zero.
pub const DEFAULT_CUTOFF: f64 = 1e-5;

/// A hard clustering of `n` items with labels in `0..G`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    /// Relabels arbitrary values as `0, 1, ...` in order of first appearance.
    pub fn from_values<T: Eq + Hash + Clone>(values: &[T]) -> Self {
        let mut codes = HashMap::new();
        let labels = values
            .iter()
            .map(|v| {
                let next = codes.len();
                *codes.entry(v.clone()).or_insert(next)
            })
            .collect();
        Self(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }
}

impl From<Vec<usize>> for Partition {
    fn from(labels: Vec<usize>) -> Self {
        Self(labels)
    }
}

fn free_parameters(model: &MixtureModel) -> usize {
    let g = model.num_components();
    let p = model.dim();
    (g - 1) + 2 * g * p + 2 * g
}

/// Proportions, locations, skewness, `ω`, `γ` and the concentration entries
/// on or above the diagonal whose magnitude exceeds `cutoff`.
pub fn count_effective_params(model: &MixtureModel, cutoff: f64) -> usize {
    let nonzero: usize = model
        .components()
        .iter()
        .map(|c| {
            let m = c.concentration();
            let p = m.nrows();
            (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).filter(|&(i, j)| m[(i, j)].abs() > cutoff).count()
        })
        .sum();
    free_parameters(model) + nonzero
}

/// As [`count_effective_params`] but counting all `p²` concentration entries.
pub fn count_effective_params_full(model: &MixtureModel, cutoff: f64) -> usize {
    let nonzero: usize = model
        .components()
        .iter()
        .map(|c| c.concentration().iter().filter(|v| v.abs() > cutoff).count())
        .sum();
    free_parameters(model) + nonzero
}

/// `-2·loglik + k·ln n`; smaller is better.
pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

#[derive(Debug, Clone)]
pub struct ModelScore {
    pub g: usize,
    pub bic: f64,
    pub effective_params: usize,
    pub effective_params_full: usize,
    /// Unpenalised observed log-likelihood.
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub report: FitReport,
}

impl ModelScore {
    pub fn new(report: FitReport, n: usize, cutoff: f64) -> Self {
        let k = count_effective_params(&report.model, cutoff);
        Self {
            g: report.model.num_components(),
            bic: bic(report.data_loglik(), k, n),
            effective_params: k,
            effective_params_full: count_effective_params_full(&report.model, cutoff),
            loglik: report.data_loglik(),
            penalized_loglik: report.penalized_loglik(),
            report,
        }
    }

    pub fn row(&self) -> ScoreRow {
        ScoreRow {
            g: self.g,
            bic: self.bic,
            effective_params: self.effective_params,
            effective_params_full: self.effective_params_full,
            loglik: self.loglik,
            penalized_loglik: self.penalized_loglik,
            converged: self.report.converged,
            iterations: self.report.iterations,
            seed: self.report.seed,
        }
    }
}

/// Serializable summary of a [`ModelScore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub g: usize,
    pub bic: f64,
    pub effective_params: usize,
    pub effective_params_full: usize,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub g: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Best restart per successful `G`, in the order of the requested range.
    pub table: Vec<ModelScore>,
    /// Index into `table` of the minimum-BIC model.
    pub best: usize,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    pub fn best(&self) -> &ModelScore {
        &self.table[self.best]
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of restart `start` for `g` components.
pub fn start_seed(seed: u64, g: usize, start: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((g as u64) << 32) | start as u64))
}

/// Fits every `G` in `g_range` from `starts_per_g` seeded starts in parallel
/// and keeps the restart with the highest penalised log-likelihood per `G`.
///
/// With a k-means start a single component has only one possible
/// initialisation, so `G = 1` is fitted once.
pub fn sweep(
    data: &DMatrix<f64>,
    g_range: &[usize],
    config: &FitConfig,
    starts_per_g: usize,
    cutoff: f64,
) -> Result<SweepResult> {
    if g_range.is_empty() {
        return Err(Error::InvalidConfig("the range of component counts is empty".into()));
    }
    if starts_per_g == 0 {
        return Err(Error::InvalidConfig("at least one start per component count is needed".into()));
    }
    let jobs: Vec<(usize, usize)> = g_range
        .iter()
        .flat_map(|&g| {
            let starts = if g == 1 && matches!(config.init, InitStrategy::KMeans) { 1 } else { starts_per_g };
            (0..starts).map(move |k| (g, k))
        })
        .collect();
    let outcomes: Vec<Result<FitReport>> = jobs
        .par_iter()
        .map(|&(g, k)| {
            let cfg = config.clone().with_seed(start_seed(config.seed, g, k));
            fit(data, g, &cfg)
        })
        .collect();

    let n = data.nrows();
    let mut table = Vec::new();
    let mut failures = Vec::new();
    for &g in g_range {
        let mut best: Option<FitReport> = None;
        let mut last_err = None;
        for (&(jg, _), outcome) in jobs.iter().zip(&outcomes) {
            if jg != g {
                continue;
            }
            match outcome {
                Ok(r) => {
                    if best.as_ref().is_none_or(|b| r.penalized_loglik() > b.penalized_loglik()) {
                        best = Some(r.clone());
                    }
                }
                Err(e) => last_err = Some(e.to_string()),
            }
        }
        match best {
            Some(r) => table.push(ModelScore::new(r, n, cutoff)),
            None => {
                let message = last_err.unwrap_or_default();
                log::warn!("no successful fit for G = {g}: {message}");
                failures.push(SweepFailure { g, message });
            }
        }
    }
    if table.is_empty() {
        let detail = failures
            .iter()
            .map(|f| format!("G = {}: {}", f.g, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::NoSuccessfulFit(detail));
    }
    let best = (0..table.len())
        .min_by(|&i, &j| table[i].bic.total_cmp(&table[j].bic))
        .expect("table is not empty");
    Ok(SweepResult {
        table,
        best,
        failures,
    })
}

/// Contingency table with rows indexed by `a`'s labels and columns by `b`'s.
pub fn cross_tabulate(a: &Partition, b: &Partition) -> Result<Vec<Vec<usize>>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut table = vec![vec![0; b.num_classes()]; a.num_classes()];
    for (&i, &j) in a.labels().iter().zip(b.labels()) {
        table[i][j] += 1;
    }
    Ok(table)
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Hubert–Arabie adjusted Rand index.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    ari_from_table(&cross_tabulate(a, b)?)
}

/// Adjusted Rand index of a contingency table.
pub fn ari_from_table(table: &[Vec<usize>]) -> Result<f64> {
    let cols = table.first().map_or(0, |r| r.len());
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidConfig("contingency table rows differ in length".into()));
    }
    let n: usize = table.iter().flatten().sum();
    let index: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let row_sum: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let col_sum: f64 = (0..cols).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = row_sum * col_sum / total;
    let max = 0.5 * (row_sum + col_sum);
    if max == expected {
        // both partitions trivial in the same way
        return Ok(if row_sum == col_sum { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghd::GhdComponent;
    use nalgebra::DVector;

    fn diag_model(g: usize, p: usize, off: f64) -> MixtureModel {
        let comps = (0..g)
            .map(|_| {
                let mut c = DMatrix::identity(p, p);
                if p > 1 {
                    c[(0, 1)] = off;
                    c[(1, 0)] = off;
                }
                GhdComponent::with_concentration(DVector::zeros(p), DVector::zeros(p), c, 1.0, 0.5).unwrap()
            })
            .collect();
        MixtureModel::new(comps, vec![1.0 / g as f64; g], vec![1.0; g]).unwrap()
    }

    #[test]
    fn effective_parameter_counts() {
        assert_eq!(count_effective_params(&diag_model(1, 2, 0.0), 1e-5), 8);
        // dense: upper triangle p(p+1)/2 = 6 per component
        let dense = diag_model(2, 3, 0.3);
        let free = 1 + 2 * 2 * 3 + 4;
        assert_eq!(count_effective_params(&dense, 1e-5), free + 2 * 4);
        assert_eq!(count_effective_params_full(&dense, 1e-5), free + 2 * 5);
        assert_eq!(count_effective_params(&diag_model(1, 2, 1e-6), 1e-5), 8);
        assert_eq!(count_effective_params(&diag_model(1, 2, 1e-6), 1e-7), 9);
    }

    #[test]
    fn bic_examples() {
        assert_eq!(bic(0.0, 1, 1), 0.0);
        let e_n = bic(0.0, 1, 3) / 3f64.ln();
        assert!((e_n - 1.0).abs() < 1e-15);
        let n = 50;
        assert!((bic(-10.0, 8, n) - bic(-10.0, 4, n) - 4.0 * (n as f64).ln()).abs() < 1e-12);
        assert!(bic(-10.0, 3, n) < bic(-10.0, 4, n));
    }

    #[test]
    fn ari_reference_table() {
        let ari = ari_from_table(&[vec![352, 5], vec![27, 185]]).unwrap();
        assert!((ari - 0.785_847).abs() < 1e-6, "{ari}");
        assert_eq!(format!("{ari:.2}"), "0.79");
    }

    #[test]
    fn ari_properties() {
        let a = Partition::new(vec![0, 0, 1, 1, 2, 2, 2]);
        let b = Partition::new(vec![2, 2, 0, 0, 1, 1, 1]);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
        let c = Partition::new(vec![0, 1, 0, 1, 0, 1, 0]);
        let ac = adjusted_rand_index(&a, &c).unwrap();
        assert!((ac - adjusted_rand_index(&c, &a).unwrap()).abs() < 1e-15);
        assert!(ac < 1.0);
        let short = Partition::new(vec![0, 1]);
        assert!(adjusted_rand_index(&a, &short).is_err());
    }

    #[test]
    fn cross_tab_examples() {
        let a = Partition::new(vec![0, 0, 0, 1, 1, 1, 1, 0, 1, 0]);
        let t = cross_tabulate(&a, &a).unwrap();
        assert_eq!(t, vec![vec![5, 0], vec![0, 5]]);
        let b = Partition::new(vec![1, 0, 0, 1, 1, 2, 1, 0, 1, 0]);
        let t = cross_tabulate(&a, &b).unwrap();
        assert_eq!(t.iter().flatten().sum::<usize>(), 10);
        assert_eq!(t[0].iter().sum::<usize>(), 5);
    }

    #[test]
    fn partition_from_values_uses_first_appearance() {
        let p = Partition::from_values(&["M", "B", "B", "M", "X"]);
        assert_eq!(p.labels(), &[0, 1, 1, 0, 2]);
        assert_eq!(p.num_classes(), 3);
    }
}
