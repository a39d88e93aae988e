//! L1-penalised precision matrix estimation by block coordinate descent.
//!
//! Maximises `log det C - tr(SC) - ρ Σ_ij |C_ij|`, the sum running over every
//! entry including the diagonal. At the optimum the covariance `W = C⁻¹`
//! satisfies `W_ii = S_ii + ρ`; each sweep cycles through the columns and
//! solves a lasso problem for the off-diagonal part of that column.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghd::{cholesky, log_det_from_cholesky, spd_inverse, symmetrize};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoProblem {
    pub s_matrix: DMatrix<f64>,
    pub rho: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlassoSolution {
    pub concentration: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
}

impl GlassoProblem {
    pub fn new(s_matrix: DMatrix<f64>, rho: f64) -> Self {
        Self {
            s_matrix,
            rho,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn dim(&self) -> usize {
        self.s_matrix.nrows()
    }

    fn validate(&self) -> Result<()> {
        let s = &self.s_matrix;
        let p = s.nrows();
        if p == 0 || s.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: s.ncols(),
            });
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Domain(format!("penalty must be nonnegative, got {}", self.rho)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        let scale = s.abs().max().max(1.0);
        for i in 0..p {
            if !(s[(i, i)] > 0.0) {
                return Err(Error::Domain(format!("scatter diagonal entry {i} is not positive")));
            }
            for j in 0..i {
                if !s[(i, j)].is_finite() || (s[(i, j)] - s[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Domain(format!("scatter matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

/// `Σ_ij |C_ij|` over all entries.
pub fn l1_norm(c: &DMatrix<f64>) -> f64 {
    c.iter().map(|v| v.abs()).sum()
}

/// `log det C - tr(SC) - ρ‖C‖₁`; errors when `C` is not positive definite.
pub fn glasso_objective(c: &DMatrix<f64>, problem: &GlassoProblem) -> Result<f64> {
    let chol = cholesky(c, "glasso iterate")?;
    let log_det = log_det_from_cholesky(&chol);
    let trace = c.component_mul(&problem.s_matrix).sum();
    Ok(log_det - trace - problem.rho * l1_norm(c))
}

/// Largest violation of the subgradient optimality conditions
/// `W - S - ρ·∂|C| ∋ 0`, choosing the best subgradient at zero entries.
pub fn kkt_residual(c: &DMatrix<f64>, w: &DMatrix<f64>, s: &DMatrix<f64>, rho: f64) -> f64 {
    let p = c.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let g = w[(i, j)] - s[(i, j)];
            let r = if c[(i, j)] > 0.0 {
                (g - rho).abs()
            } else if c[(i, j)] < 0.0 {
                (g + rho).abs()
            } else {
                (g.abs() - rho).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    worst
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn glasso_solve(problem: &GlassoProblem) -> Result<GlassoSolution> {
    glasso_solve_warm(problem, None)
}

/// Solves the problem, optionally warm-started from a previous concentration matrix.
pub fn glasso_solve_warm(problem: &GlassoProblem, warm: Option<&DMatrix<f64>>) -> Result<GlassoSolution> {
    problem.validate()?;
    let s = &problem.s_matrix;
    let p = problem.dim();
    let rho = problem.rho;

    if rho == 0.0 {
        let (concentration, _) = spd_inverse(s, "scatter matrix").map_err(|_| Error::SingularScatter)?;
        return finish(concentration, problem, 0);
    }

    let (mut w, mut beta) = initial_state(s, rho, warm);
    // lasso tolerance on the coordinate updates, relative to the problem scale
    let scale = (0..p).map(|i| s[(i, i)]).fold(0.0, f64::max);
    let inner_tol = 1e-4 * problem.tol * scale.max(1e-12).min(1.0).max(1e-3);
    let mut best: Option<GlassoSolution> = None;

    for sweep in 1..=problem.max_sweeps {
        let mut change = 0.0;
        for j in 0..p {
            change += update_column(&mut w, &mut beta, s, rho, j, inner_tol);
        }
        let mean_change = change / (p * p) as f64;
        if mean_change < problem.tol || sweep == problem.max_sweeps {
            let concentration = assemble_concentration(&w, &beta);
            match finish(concentration, problem, sweep) {
                Ok(sol) => {
                    if sol.kkt_residual <= problem.tol {
                        return Ok(sol);
                    }
                    if best.as_ref().is_none_or(|b| sol.kkt_residual < b.kkt_residual) {
                        best = Some(sol);
                    }
                }
                Err(Error::NotPositiveDefinite(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }

    let best = match best {
        Some(b) => b,
        None => finish(assemble_concentration(&w, &beta), problem, problem.max_sweeps)?,
    };
    Err(Error::GlassoNotConverged {
        sweeps: problem.max_sweeps,
        residual: best.kkt_residual,
        best: Box::new(best),
    })
}

/// Covariance iterate and per-column lasso coefficients to start from.
fn initial_state(s: &DMatrix<f64>, rho: f64, warm: Option<&DMatrix<f64>>) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = s.nrows();
    let mut cold = s.clone();
    for i in 0..p {
        cold[(i, i)] += rho;
    }
    let zero = DMatrix::zeros(p, p);
    let Some(c) = warm else {
        return (cold, zero);
    };
    if c.nrows() != p || c.ncols() != p {
        return (cold, zero);
    }
    let Ok((mut w, _)) = spd_inverse(c, "warm start") else {
        return (cold, zero);
    };
    for i in 0..p {
        w[(i, i)] = s[(i, i)] + rho;
    }
    if cholesky(&w, "warm covariance").is_err() {
        return (cold, zero);
    }
    let mut beta = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in 0..p {
            if k != j {
                beta[(k, j)] = -c[(k, j)] / c[(j, j)];
            }
        }
    }
    (w, beta)
}

/// Solves the lasso for column `j` and writes the new off-diagonal covariance.
/// Returns the summed absolute change of that column of `W` (both halves).
fn update_column(
    w: &mut DMatrix<f64>,
    beta: &mut DMatrix<f64>,
    s: &DMatrix<f64>,
    rho: f64,
    j: usize,
    inner_tol: f64,
) -> f64 {
    let p = w.nrows();
    let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let m = idx.len();
    if m == 0 {
        return 0.0;
    }
    let mut b: Vec<f64> = idx.iter().map(|&k| beta[(k, j)]).collect();
    // residual r = s12 - W11 b
    let mut r: Vec<f64> = idx
        .iter()
        .map(|&ka| s[(ka, j)] - idx.iter().zip(&b).map(|(&kb, &bv)| w[(ka, kb)] * bv).sum::<f64>())
        .collect();

    for _ in 0..10_000 {
        let mut max_step: f64 = 0.0;
        for a in 0..m {
            let ka = idx[a];
            let v_aa = w[(ka, ka)];
            let z = r[a] + v_aa * b[a];
            let new = soft_threshold(z, rho) / v_aa;
            let delta = new - b[a];
            if delta != 0.0 {
                for (c, &kc) in idx.iter().enumerate() {
                    r[c] -= w[(kc, ka)] * delta;
                }
                b[a] = new;
                max_step = max_step.max((delta * v_aa).abs());
            }
        }
        if max_step < inner_tol {
            break;
        }
    }

    let mut change = 0.0;
    for (a, &ka) in idx.iter().enumerate() {
        beta[(ka, j)] = b[a];
        // W11 b = s12 - r
        let value = s[(ka, j)] - r[a];
        change += 2.0 * (w[(ka, j)] - value).abs();
        w[(ka, j)] = value;
        w[(j, ka)] = value;
    }
    change
}

fn assemble_concentration(w: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = w.nrows();
    let mut c = DMatrix::zeros(p, p);
    for j in 0..p {
        let fitted: f64 = (0..p).filter(|&k| k != j).map(|k| w[(k, j)] * beta[(k, j)]).sum();
        let diag = 1.0 / (w[(j, j)] - fitted);
        c[(j, j)] = diag;
        for k in 0..p {
            if k != j {
                c[(k, j)] = -beta[(k, j)] * diag;
            }
        }
    }
    symmetrize(&mut c);
    c
}

fn finish(concentration: DMatrix<f64>, problem: &GlassoProblem, sweeps: usize) -> Result<GlassoSolution> {
    let (covariance, _) = spd_inverse(&concentration, "glasso concentration")?;
    let objective = glasso_objective(&concentration, problem)?;
    let kkt = kkt_residual(&concentration, &covariance, &problem.s_matrix, problem.rho);
    Ok(GlassoSolution {
        concentration,
        covariance,
        objective,
        kkt_residual: kkt,
        sweeps,
    })
}
