use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FitConfig, MixtureModel};
use crate::error::{Error, Result};
use crate::ghd::{cholesky, GhdComponent};

/// Starting point of a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Seeded k-means++ followed by Lloyd iterations.
    KMeans,
    /// Seeded balanced random partition.
    Random,
    /// A fixed hard partition with labels in `0..G`.
    Partition(Vec<usize>),
    /// A complete starting model.
    Model(MixtureModel),
}

const LLOYD_ITERATIONS: usize = 100;

pub fn initial_model(data: &DMatrix<f64>, g: usize, config: &FitConfig, seed: u64) -> Result<MixtureModel> {
    let labels = match &config.init {
        InitStrategy::Model(model) => {
            if model.num_components() != g || model.dim() != data.ncols() {
                return Err(Error::InvalidConfig(format!(
                    "starting model has {} components of dimension {}, expected {g} of dimension {}",
                    model.num_components(),
                    model.dim(),
                    data.ncols()
                )));
            }
            return Ok(model.clone());
        }
        InitStrategy::Partition(labels) => labels.clone(),
        InitStrategy::KMeans => kmeans(data, g, seed),
        InitStrategy::Random => random_partition(data.nrows(), g, seed),
    };
    model_from_partition(data, &labels, g, config)
}

fn random_partition(n: usize, g: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % g).collect();
    labels.shuffle(&mut rng);
    labels
}

fn sq_dist(data: &DMatrix<f64>, i: usize, center: &DVector<f64>) -> f64 {
    data.row(i).iter().zip(center.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Hard partition from k-means++ seeding and Lloyd iterations; deterministic in `seed`.
pub fn kmeans(data: &DMatrix<f64>, g: usize, seed: u64) -> Vec<usize> {
    let n = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |i: usize| data.row(i).transpose();
    let mut centers = vec![row(rng.random_range(0..n))];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centers[0])).collect();
    while centers.len() < g {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(data, i, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0; n];
    for iter in 0..LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = sq_dist(data, i, c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed && iter > 0 {
            break;
        }
        let mut counts = vec![0usize; g];
        let mut sums = vec![DVector::zeros(data.ncols()); g];
        for (i, &k) in labels.iter().enumerate() {
            counts[k] += 1;
            sums[k] += data.row(i).transpose();
        }
        for k in 0..g {
            if counts[k] > 0 {
                centers[k] = &sums[k] / counts[k] as f64;
            } else {
                // reseed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&i, &j| {
                        sq_dist(data, i, &centers[labels[i]]).total_cmp(&sq_dist(data, j, &centers[labels[j]]))
                    })
                    .unwrap();
                centers[k] = row(far);
            }
        }
    }
    labels
}

/// Starting model from a hard partition: cluster means, regularised
/// within-cluster covariances, zero skewness and the configured `ω`, `γ`.
pub fn model_from_partition(
    data: &DMatrix<f64>,
    labels: &[usize],
    g: usize,
    config: &FitConfig,
) -> Result<MixtureModel> {
    let (n, p) = data.shape();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&k| k >= g) {
        return Err(Error::InvalidConfig(format!("partition label {bad} is not below G = {g}")));
    }
    let overall_var: Vec<f64> = (0..p).map(|j| column_variance(data, j)).collect();
    let p2 = (p * p) as f64;
    let lambda0 = (config.hyper.s + p2) / (config.hyper.r + p as f64);
    let mut components = Vec::with_capacity(g);
    let mut proportions = Vec::with_capacity(g);
    for k in 0..g {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        if members.is_empty() {
            return Err(Error::DegenerateComponent {
                component: k,
                weight: 0.0,
            });
        }
        let m = members.len() as f64;
        let mut mean = DVector::zeros(p);
        for &i in &members {
            mean += data.row(i).transpose();
        }
        mean /= m;
        let mut cov = DMatrix::zeros(p, p);
        for &i in &members {
            let d = data.row(i).transpose() - &mean;
            cov += &d * d.transpose();
        }
        cov /= m;
        let ridge = 1e-6 * cov.trace() / p as f64;
        for j in 0..p {
            cov[(j, j)] += ridge;
        }
        if cholesky(&cov, "initial covariance").is_err() {
            cov = DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    cov[(i, i)].max(1e-3 * overall_var[i]).max(1e-12)
                } else {
                    0.0
                }
            });
        }
        components.push(GhdComponent::with_scale(
            mean,
            DVector::zeros(p),
            cov,
            config.init_omega,
            config.init_gamma,
        )?);
        proportions.push(m / n as f64);
    }
    MixtureModel::new(components, proportions, vec![lambda0; g])
}

fn column_variance(data: &DMatrix<f64>, j: usize) -> f64 {
    let col = data.column(j);
    let mean = col.mean();
    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
}
