//! Synthetic mixtures for simulation studies.
//!
//! Locations sit on the coordinate axes: component `g` has
//! `μ_g[g mod p] = separation·(1 + ⌊g/p⌋)/√2` and zeros elsewhere, so two
//! consecutive components are `separation` apart.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghd::{cholesky, ghd_sample, GhdComponent};
use crate::select::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `Σ_g = σ_g² I`.
    Spherical,
    /// Alternating equicorrelated and independent blocks of size `p/4`.
    BlockPattern1,
    /// Tridiagonal blocks under a per-component permutation of the coordinates.
    BlockPattern2,
    /// Gaussian components (`W ≡ 1`, `α = 0`) with the first block pattern.
    GaussianBlocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub p: usize,
    pub g: usize,
    pub n_g: usize,
    pub seed: u64,
    pub separation: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, p: usize, g: usize, n_g: usize, seed: u64) -> Self {
        Self {
            kind,
            p,
            g,
            n_g,
            seed,
            separation: 5.0,
        }
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.separation = separation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.g < 1 || self.n_g < 1 {
            return Err(Error::InvalidConfig(format!(
                "scenario needs p >= 2, G >= 1, n_g >= 1; got p = {}, G = {}, n_g = {}",
                self.p, self.g, self.n_g
            )));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig(format!("separation must be positive, got {}", self.separation)));
        }
        Ok(())
    }
}

/// Generating parameters of one component. `omega` and `gamma` are absent
/// for Gaussian components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueComponent {
    pub mu: DVector<f64>,
    pub alpha: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub concentration: DMatrix<f64>,
    pub omega: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: ScenarioSpec,
    pub proportions: Vec<f64>,
    pub components: Vec<TrueComponent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Rows grouped by component, `n_g` each.
    pub data: DMatrix<f64>,
    pub labels: Partition,
    pub truth: GroundTruth,
}

fn location(spec: &ScenarioSpec, g: usize) -> DVector<f64> {
    let mut mu = DVector::zeros(spec.p);
    mu[g % spec.p] = spec.separation * (1 + g / spec.p) as f64 / std::f64::consts::SQRT_2;
    mu
}

fn block_ranges(p: usize) -> Vec<(usize, usize)> {
    let size = (p / 4).max(1);
    (0..p).step_by(size).map(|start| (start, (start + size).min(p))).collect()
}

/// Covariance and exact inverse of the first block pattern; block `k` is
/// equicorrelated when `k + g` is even.
fn pattern_one(p: usize, g: usize, var: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut sigma = DMatrix::zeros(p, p);
    let mut conc = DMatrix::zeros(p, p);
    for (k, (lo, hi)) in block_ranges(p).into_iter().enumerate() {
        let b = hi - lo;
        if (k + g) % 2 == 0 && b > 1 {
            let r = (0.8 / (b - 1) as f64).min(0.5);
            // ((1-r)I + rJ)⁻¹ = [I - r/(1+(b-1)r) J] / (1-r)
            let shrink = r / (1.0 + (b - 1) as f64 * r);
            for i in lo..hi {
                for j in lo..hi {
                    let (s, c) = if i == j { (1.0, 1.0 - shrink) } else { (r, -shrink) };
                    sigma[(i, j)] = var * s;
                    conc[(i, j)] = c / ((1.0 - r) * var);
                }
            }
        } else {
            for i in lo..hi {
                sigma[(i, i)] = var;
                conc[(i, i)] = 1.0 / var;
            }
        }
    }
    (sigma, conc)
}

/// Tridiagonal blocks (off-diagonal `0.4σ²`) in permuted coordinates; the
/// inverse is taken block by block so entries across blocks are exactly zero.
fn pattern_two(p: usize, var: f64, rng: &mut ChaCha8Rng) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    let mut sigma = DMatrix::zeros(p, p);
    let mut conc = DMatrix::zeros(p, p);
    for (lo, hi) in block_ranges(p) {
        let b = hi - lo;
        let block = DMatrix::from_fn(b, b, |i, j| match i.abs_diff(j) {
            0 => var,
            1 => 0.4 * var,
            _ => 0.0,
        });
        let inv = block
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("tridiagonal block".into()))?;
        for i in 0..b {
            for j in 0..b {
                sigma[(perm[lo + i], perm[lo + j])] = block[(i, j)];
                conc[(perm[lo + i], perm[lo + j])] = inv[(i, j)];
            }
        }
    }
    crate::ghd::symmetrize(&mut conc);
    Ok((sigma, conc))
}

fn unit_vector(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Draws a scenario; identical specs give identical output.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let (p, g_count, n_g) = (spec.p, spec.g, spec.n_g);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaussian = spec.kind == ScenarioKind::GaussianBlocks;
    let mut components = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let var = rng.random_range(0.5..1.5);
        let omega = rng.random_range(1.0..3.0);
        let gamma = rng.random_range(-1.0..1.0);
        let direction = unit_vector(p, &mut rng);
        let (sigma, concentration) = match spec.kind {
            ScenarioKind::Spherical => (DMatrix::identity(p, p) * var, DMatrix::identity(p, p) / var),
            ScenarioKind::BlockPattern1 | ScenarioKind::GaussianBlocks => pattern_one(p, g, var),
            ScenarioKind::BlockPattern2 => pattern_two(p, var, &mut rng)?,
        };
        components.push(TrueComponent {
            mu: location(spec, g),
            alpha: if gaussian { DVector::zeros(p) } else { direction * 0.15 * spec.separation },
            sigma,
            concentration,
            omega: (!gaussian).then_some(omega),
            gamma: (!gaussian).then_some(gamma),
        });
    }

    let mut data = DMatrix::zeros(n_g * g_count, p);
    for (g, tc) in components.iter().enumerate() {
        let block_seed = rng.random::<u64>();
        let rows = match (tc.omega, tc.gamma) {
            (Some(omega), Some(gamma)) => {
                let comp = GhdComponent::with_concentration(
                    tc.mu.clone(),
                    tc.alpha.clone(),
                    tc.concentration.clone(),
                    omega,
                    gamma,
                )?;
                ghd_sample(&comp, n_g, block_seed)?
            }
            _ => gaussian_sample(&tc.mu, &tc.sigma, n_g, block_seed)?,
        };
        data.rows_mut(g * n_g, n_g).copy_from(&rows);
    }
    let labels = Partition::new((0..g_count).flat_map(|g| std::iter::repeat_n(g, n_g)).collect());
    Ok(Scenario {
        data,
        labels,
        truth: GroundTruth {
            spec: *spec,
            proportions: vec![1.0 / g_count as f64; g_count],
            components,
        },
    })
}

fn gaussian_sample(mu: &DVector<f64>, sigma: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lower = cholesky(sigma, "scenario covariance")?.l();
    let p = mu.len();
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        out.set_row(i, &(mu + &lower * z).transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gig::{gig_moments, GigParams};

    fn group(s: &Scenario, g: usize) -> DMatrix<f64> {
        let n_g = s.truth.spec.n_g;
        s.data.rows(g * n_g, n_g).into_owned()
    }

    fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
        let mut s = DMatrix::zeros(x.ncols(), x.ncols());
        for i in 0..x.nrows() {
            let d = x.row(i).transpose() - &mean;
            s += &d * d.transpose();
        }
        s / (n - 1.0)
    }

    #[test]
    fn spherical_groups_are_nearly_spherical() {
        let s = generate(&ScenarioSpec::new(ScenarioKind::Spherical, 4, 2, 500, 1).with_separation(1.0)).unwrap();
        for g in 0..2 {
            let cov = sample_cov(&group(&s, g));
            let diag = (0..4).map(|i| cov[(i, i)]).fold(0.0, f64::max);
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert!(cov[(i, j)].abs() / diag < 0.2, "{cov}");
                    }
                }
            }
        }
    }

    #[test]
    fn labels_and_determinism() {
        let spec = ScenarioSpec::new(ScenarioKind::BlockPattern2, 8, 3, 50, 9);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        for g in 0..3 {
            assert_eq!(a.labels.labels().iter().filter(|&&l| l == g).count(), 50);
        }
        let other = generate(&ScenarioSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.data, other.data);
    }

    #[test]
    fn group_means_match_mixture_moments() {
        for kind in [ScenarioKind::Spherical, ScenarioKind::BlockPattern1, ScenarioKind::BlockPattern2, ScenarioKind::GaussianBlocks] {
            let s = generate(&ScenarioSpec::new(kind, 8, 2, 2000, 3)).unwrap();
            for (g, tc) in s.truth.components.iter().enumerate() {
                let x = group(&s, g);
                let ew = match (tc.omega, tc.gamma) {
                    (Some(o), Some(gm)) => gig_moments(&GigParams::new(o, o, gm).unwrap()).unwrap().mean,
                    _ => 1.0,
                };
                let cov = sample_cov(&x);
                for j in 0..8 {
                    let se = (cov[(j, j)] / 2000.0).sqrt();
                    let expected = tc.mu[j] + ew * tc.alpha[j];
                    assert!((x.column(j).mean() - expected).abs() < 4.0 * se, "{kind:?} g{g} j{j}");
                }
            }
        }
    }

    #[test]
    fn block_truths_are_exactly_sparse_inverses() {
        for kind in [ScenarioKind::BlockPattern1, ScenarioKind::BlockPattern2] {
            let s = generate(&ScenarioSpec::new(kind, 12, 3, 5, 4)).unwrap();
            for tc in &s.truth.components {
                let prod = &tc.sigma * &tc.concentration;
                assert!((prod - DMatrix::<f64>::identity(12, 12)).abs().max() < 1e-12);
                let zeros = tc.concentration.iter().filter(|v| **v == 0.0).count();
                assert!(zeros > 12 * 12 / 2, "{kind:?}: {zeros}");
                for (i, j) in (0..12).flat_map(|i| (0..12).map(move |j| (i, j))) {
                    if tc.sigma[(i, j)] != 0.0 {
                        assert!(tc.concentration[(i, j)] != 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn block_patterns_alternate_between_components() {
        let s = generate(&ScenarioSpec::new(ScenarioKind::BlockPattern1, 12, 2, 5, 5)).unwrap();
        let c0 = &s.truth.components[0].concentration;
        let c1 = &s.truth.components[1].concentration;
        // first block of size 3 is dense only in component 0
        assert!(c0[(0, 1)] != 0.0 && c1[(0, 1)] == 0.0);
        assert!(c0[(3, 4)] == 0.0 && c1[(3, 4)] != 0.0);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate(&ScenarioSpec::new(ScenarioKind::Spherical, 1, 2, 5, 0)).is_err());
        assert!(generate(&ScenarioSpec::new(ScenarioKind::Spherical, 3, 0, 5, 0)).is_err());
        assert!(generate(&ScenarioSpec::new(ScenarioKind::Spherical, 3, 2, 5, 0).with_separation(0.0)).is_err());
    }
}
