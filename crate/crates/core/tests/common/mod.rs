#![allow(dead_code)]

use ghdgls::em::{fit, kmeans, FitConfig, FitReport, InitStrategy, MixtureModel};
use ghdgls::simgen::{generate, ScenarioKind, ScenarioSpec};
use nalgebra::{DMatrix, DVector};

/// Largest entrywise gap between two fitted models, relative to `1 + |value|`.
pub fn model_gap(a: &MixtureModel, b: &MixtureModel) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + x.abs().max(y.abs()));
    let mut gap: f64 = 0.0;
    for (ca, cb) in a.components().iter().zip(b.components()) {
        for (x, y) in ca.mu().iter().zip(cb.mu().iter()) {
            gap = gap.max(rel(*x, *y));
        }
        for (x, y) in ca.alpha().iter().zip(cb.alpha().iter()) {
            gap = gap.max(rel(*x, *y));
        }
        for (x, y) in ca.sigma().iter().zip(cb.sigma().iter()) {
            gap = gap.max(rel(*x, *y));
        }
        gap = gap.max(rel(ca.omega(), cb.omega())).max(rel(ca.gamma(), cb.gamma()));
    }
    for (x, y) in a.proportions().iter().zip(b.proportions()) {
        gap = gap.max(rel(*x, *y));
    }
    gap
}

/// A seeded scenario drawn from a rotating set of generators.
pub fn mixed_case(seed: u64) -> (DMatrix<f64>, usize) {
    let kinds = [
        ScenarioKind::Spherical,
        ScenarioKind::BlockPattern1,
        ScenarioKind::BlockPattern2,
        ScenarioKind::GaussianBlocks,
    ];
    let spec = ScenarioSpec::new(kinds[seed as usize % 4], 3 + seed as usize % 4, 2 + seed as usize % 2, 40, seed);
    let sc = generate(&spec).expect("valid scenario");
    (sc.data, spec.g)
}

fn fit_from(data: &DMatrix<f64>, g: usize, labels: Vec<usize>, max_iter: usize) -> Result<FitReport, String> {
    let config = FitConfig {
        max_iter,
        retries: 0,
        ..FitConfig::default()
    }
    .with_init(InitStrategy::Partition(labels));
    fit(data, g, &config).map_err(|e| e.to_string())
}

/// Fits `data` and `data + t` from the same partition and returns the
/// largest discrepancy after undoing the shift, or a description of a
/// structural mismatch.
pub fn shift_discrepancy(data: &DMatrix<f64>, g: usize, seed: u64, max_iter: usize) -> Result<f64, String> {
    let p = data.ncols();
    let t = DVector::from_fn(p, |j, _| 3.0 - 1.7 * j as f64);
    let mut moved = data.clone();
    for mut row in moved.row_iter_mut() {
        row += t.transpose();
    }
    let labels = kmeans(data, g, seed);
    let base = fit_from(data, g, labels.clone(), max_iter)?;
    let other = fit_from(&moved, g, labels, max_iter)?;
    if base.assignments != other.assignments {
        return Err("assignments differ after a location shift".into());
    }
    if base.iterations != other.iterations {
        return Err(format!("iteration counts differ: {} vs {}", base.iterations, other.iterations));
    }
    Ok(model_gap(&base.model.shifted(&t), &other.model))
}

/// Fits from a partition and from the same partition with its labels
/// permuted, and returns the largest discrepancy after undoing the
/// permutation.
pub fn permutation_discrepancy(data: &DMatrix<f64>, g: usize, seed: u64, max_iter: usize) -> Result<f64, String> {
    let labels = kmeans(data, g, seed);
    // label k becomes relabel[k]
    let relabel: Vec<usize> = (0..g).map(|k| (k + 1 + seed as usize) % g).collect();
    let permuted: Vec<usize> = labels.iter().map(|&k| relabel[k]).collect();
    let base = fit_from(data, g, labels, max_iter)?;
    let other = fit_from(data, g, permuted, max_iter)?;
    let mapped: Vec<usize> = base.assignments.iter().map(|&k| relabel[k]).collect();
    if mapped != other.assignments {
        return Err("assignments are not the relabelled ones".into());
    }
    let restored = other.model.permuted(&relabel).map_err(|e| e.to_string())?;
    Ok(model_gap(&base.model, &restored))
}
