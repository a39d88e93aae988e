use nalgebra::{DMatrix, DVector};

use super::{geometric_factor, EStepCache, MixtureModel, PenaltyHyper, PenaltyScale, PenaltyTarget};
use crate::error::{Error, Result};
use crate::ghd::symmetrize;
use crate::glasso::{glasso_objective, glasso_solve_warm, l1_norm, GlassoProblem, GlassoSolution};
use crate::special::{bessel_ratio, dlog_bessel_k_dorder, log_bessel_k};

const MAX_HALVINGS: usize = 10;

/// Posterior mean of each penalty rate, `(s + p²) / (κ_g ‖C_g‖₁ + r)`.
pub fn update_lambda(model: &MixtureModel, hyper: &PenaltyHyper, target: PenaltyTarget) -> Result<Vec<f64>> {
    let p2 = (model.dim() * model.dim()) as f64;
    model
        .components()
        .iter()
        .map(|comp| Ok((hyper.s + p2) / (target.factor(comp)? * l1_norm(comp.concentration()) + hyper.r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentUpdate {
    pub proportions: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub alpha: Vec<DVector<f64>>,
}

fn weighted_sum(data: &DMatrix<f64>, weights: impl Iterator<Item = f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(data.ncols());
    for (i, w) in weights.enumerate() {
        acc.axpy(w, &data.row(i).transpose(), 1.0);
    }
    acc
}

/// Closed-form proportions, locations and skewness.
pub fn m_step_moments(data: &DMatrix<f64>, cache: &EStepCache) -> Result<MomentUpdate> {
    let n = data.nrows();
    let mut out = MomentUpdate {
        proportions: Vec::new(),
        mu: Vec::new(),
        alpha: Vec::new(),
    };
    for g in 0..cache.num_components() {
        let z = cache.z.column(g);
        let b = cache.b.column(g);
        let (abar, bbar, n_g) = (cache.abar[g], cache.bbar[g], cache.n_g[g]);
        let denom: f64 = (0..n).map(|i| z[i] * (abar * b[i] - 1.0)).sum();
        if !(denom.abs() >= 1e-10 * n_g) {
            return Err(Error::DegenerateWeights { component: g });
        }
        let mu = weighted_sum(data, (0..n).map(|i| z[i] * (abar * b[i] - 1.0))) / denom;
        let alpha = weighted_sum(data, (0..n).map(|i| z[i] * (bbar - b[i]))) / denom;
        out.proportions.push(n_g / n as f64);
        out.mu.push(mu);
        out.alpha.push(alpha);
    }
    Ok(out)
}

/// Proportions and locations with every skewness held at zero.
pub fn m_step_moments_symmetric(data: &DMatrix<f64>, cache: &EStepCache) -> Result<MomentUpdate> {
    let (n, p) = data.shape();
    let mut out = MomentUpdate {
        proportions: Vec::new(),
        mu: Vec::new(),
        alpha: Vec::new(),
    };
    for g in 0..cache.num_components() {
        let z = cache.z.column(g);
        let b = cache.b.column(g);
        let denom = z.dot(&b);
        if !(denom > 0.0) {
            return Err(Error::DegenerateWeights { component: g });
        }
        out.proportions.push(cache.n_g[g] / n as f64);
        out.mu.push(weighted_sum(data, (0..n).map(|i| z[i] * b[i])) / denom);
        out.alpha.push(DVector::zeros(p));
    }
    Ok(out)
}

/// `γ c̄ - log K_γ(ω)`: the part of the per-observation expected
/// complete-data log-likelihood that depends on `γ`.
pub fn q_gamma(gamma: f64, omega: f64, cbar: f64) -> Result<f64> {
    Ok(gamma * cbar - log_bessel_k(gamma, omega)?)
}

/// `-log K_γ(ω) - ω(ā + b̄)/2`: the part that depends on `ω`.
pub fn q_omega(gamma: f64, omega: f64, abar: f64, bbar: f64) -> Result<f64> {
    Ok(-log_bessel_k(gamma, omega)? - 0.5 * omega * (abar + bbar))
}

/// `∂q/∂ω = [R_γ(ω) + R_{-γ}(ω) - (ā + b̄)] / 2`.
pub fn q_omega_derivative(gamma: f64, omega: f64, abar: f64, bbar: f64) -> Result<f64> {
    Ok(0.5 * (bessel_ratio(gamma, omega)? + bessel_ratio(-gamma, omega)? - (abar + bbar)))
}

/// `∂²q/∂ω²`; depends on `(γ, ω)` only.
pub fn q_omega_second_derivative(gamma: f64, omega: f64) -> Result<f64> {
    let rp = bessel_ratio(gamma, omega)?;
    let rm = bessel_ratio(-gamma, omega)?;
    Ok(0.5
        * (rp * rp - (1.0 + 2.0 * gamma) / omega * rp - 1.0 + rm * rm
            - (1.0 - 2.0 * gamma) / omega * rm
            - 1.0))
}

/// Fixed-point update `γ ← c̄ γ / ∂_γ log K_γ(ω)`, safeguarded.
///
/// A zero index is first moved to `sign(c̄)·1e-3`. The proposal is clamped to
/// within one unit of the old value and halved towards it until `q_gamma` does
/// not decrease; after ten halvings the old value is kept.
pub fn update_gamma(cache: &EStepCache, model: &MixtureModel) -> Result<Vec<f64>> {
    model
        .components()
        .iter()
        .enumerate()
        .map(|(g, comp)| gamma_step(comp.gamma(), comp.omega(), cache.cbar[g]))
        .collect()
}

fn gamma_step(old: f64, omega: f64, cbar: f64) -> Result<f64> {
    let start = if old == 0.0 {
        if cbar == 0.0 {
            return Ok(0.0);
        }
        1e-3 * cbar.signum()
    } else {
        old
    };
    let slope = dlog_bessel_k_dorder(start, omega)?;
    let proposal = cbar * start / slope;
    if !proposal.is_finite() {
        return Ok(old);
    }
    let target = proposal.clamp(old - 1.0, old + 1.0);
    let q_old = q_gamma(old, omega, cbar)?;
    let mut step = target - old;
    for _ in 0..=MAX_HALVINGS {
        let candidate = old + step;
        if q_gamma(candidate, omega, cbar)? >= q_old {
            return Ok(candidate);
        }
        step *= 0.5;
    }
    Ok(old)
}

/// One Newton step on `q_omega` per component, evaluated at the new `γ`.
///
/// When the curvature is not negative the step falls back to moving half of
/// `ω` in the direction of the gradient. The step is halved until `ω` stays
/// positive and `q_omega` does not decrease; after ten halvings the old value
/// is kept.
pub fn update_omega(cache: &EStepCache, model: &MixtureModel, gamma_new: &[f64]) -> Result<Vec<f64>> {
    update_omega_bounded(cache, model, gamma_new, 0.0)
}

/// [`update_omega`] with the step clamped so that `ω` stays at or above
/// `floor`.
pub fn update_omega_bounded(
    cache: &EStepCache,
    model: &MixtureModel,
    gamma_new: &[f64],
    floor: f64,
) -> Result<Vec<f64>> {
    if gamma_new.len() != model.num_components() {
        return Err(Error::DimensionMismatch {
            expected: model.num_components(),
            got: gamma_new.len(),
        });
    }
    model
        .components()
        .iter()
        .enumerate()
        .map(|(g, comp)| omega_step(gamma_new[g], comp.omega(), cache.abar[g], cache.bbar[g], floor))
        .collect()
}

fn omega_step(gamma: f64, old: f64, abar: f64, bbar: f64, floor: f64) -> Result<f64> {
    let d1 = q_omega_derivative(gamma, old, abar, bbar)?;
    let d2 = q_omega_second_derivative(gamma, old)?;
    let mut step = if d2 < 0.0 && d2.is_finite() {
        -d1 / d2
    } else {
        0.5 * old * d1.signum()
    };
    if floor > 0.0 {
        step = step.max(floor - old);
    }
    if !step.is_finite() || step == 0.0 {
        return Ok(old);
    }
    let q_old = q_omega(gamma, old, abar, bbar)?;
    for _ in 0..=MAX_HALVINGS {
        let candidate = old + step;
        if candidate > 0.0 && candidate.is_finite() && q_omega(gamma, candidate, abar, bbar)? >= q_old {
            return Ok(candidate);
        }
        step *= 0.5;
    }
    Ok(old)
}

/// Per-observation expected complete-data terms in `(γ, ω)` under
/// [`PenaltyTarget::GeometricScale`] with `C` held fixed:
/// `γ c̄ - log K_γ(ω) - ω(ā + b̄)/2 - weight · exp(-E[log W])`, where
/// `weight = λ̂ ‖C‖₁ / n_g`.
pub fn q_geometric(gamma: f64, omega: f64, abar: f64, bbar: f64, cbar: f64, weight: f64) -> Result<f64> {
    Ok(gamma * cbar + q_omega(gamma, omega, abar, bbar)? - weight * geometric_factor(gamma, omega)?)
}

/// One safeguarded Newton step on a smooth function of one variable, with
/// derivatives by central differences. The step is limited to `[-down, up]`
/// and halved until the value does not decrease; after ten halvings `x` is
/// kept.
fn ascend_1d<F: Fn(f64) -> Result<f64>>(f: F, x: f64, h: f64, down: f64, up: f64) -> Result<f64> {
    let f0 = f(x)?;
    let (fp, fm) = (f(x + h)?, f(x - h)?);
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
    let mut step = if d2 < 0.0 { -d1 / d2 } else { d1.signum() * up.min(down) };
    if !step.is_finite() || step == 0.0 {
        return Ok(x);
    }
    step = step.clamp(-down, up);
    for _ in 0..=MAX_HALVINGS {
        let candidate = x + step;
        if f(candidate).is_ok_and(|v| v >= f0) {
            return Ok(candidate);
        }
        step *= 0.5;
    }
    Ok(x)
}

/// Updates `γ` and then `ω` for every component under
/// [`PenaltyTarget::GeometricScale`], each by one safeguarded Newton step on
/// [`q_geometric`]. `lambda` holds the current penalty rates.
pub fn update_index_geometric(
    cache: &EStepCache,
    model: &MixtureModel,
    lambda: &[f64],
    omega_floor: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gammas = Vec::with_capacity(model.num_components());
    let mut omegas = Vec::with_capacity(model.num_components());
    for (g, comp) in model.components().iter().enumerate() {
        let (abar, bbar, cbar) = (cache.abar[g], cache.bbar[g], cache.cbar[g]);
        let weight = lambda[g] * l1_norm(comp.concentration()) / cache.n_g[g];
        let omega = comp.omega();
        let gamma = ascend_1d(
            |t| q_geometric(t, omega, abar, bbar, cbar, weight),
            comp.gamma(),
            1e-4,
            1.0,
            1.0,
        )?;
        let omega = ascend_1d(
            |w| q_geometric(gamma, w, abar, bbar, cbar, weight),
            omega,
            1e-4 * omega,
            (0.5 * omega).min(omega - omega_floor).max(0.0),
            omega,
        )?;
        gammas.push(gamma);
        omegas.push(omega);
    }
    Ok((gammas, omegas))
}

/// Weighted scatter matrices
/// `S_g = Σ_i z_ig [b_ig d dᵀ - d αᵀ - α dᵀ + a_ig α αᵀ] / n_g` with `d = x_i - μ_g`.
pub fn m_step_scatter(
    data: &DMatrix<f64>,
    cache: &EStepCache,
    mu: &[DVector<f64>],
    alpha: &[DVector<f64>],
) -> Vec<DMatrix<f64>> {
    let (n, p) = data.shape();
    (0..cache.num_components())
        .map(|g| {
            let z = cache.z.column(g);
            let mut centered = data.clone();
            for mut row in centered.row_iter_mut() {
                row -= mu[g].transpose();
            }
            let mut scaled = centered.clone();
            for i in 0..n {
                let w = z[i] * cache.b[(i, g)];
                scaled.row_mut(i).scale_mut(w);
            }
            let mut s = centered.transpose() * scaled;
            let zsum_d = centered.transpose() * z;
            let za: f64 = (0..n).map(|i| z[i] * cache.a[(i, g)]).sum();
            let al = &alpha[g];
            s -= &zsum_d * al.transpose();
            s -= al * zsum_d.transpose();
            s += al * al.transpose() * za;
            s /= cache.n_g[g];
            debug_assert_eq!(s.nrows(), p);
            symmetrize(&mut s);
            s
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationOptions {
    pub scale: PenaltyScale,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        Self {
            scale: PenaltyScale::CompleteData,
            tol: crate::glasso::DEFAULT_TOL,
            max_sweeps: crate::glasso::DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Graphical-lasso update of one concentration matrix, warm-started at `warm`.
///
/// The result never has a lower graphical-lasso objective than `warm`; an
/// unconverged solve is accepted on that basis.
pub fn update_concentration(
    s_g: &DMatrix<f64>,
    lambda_g: f64,
    n_g: f64,
    warm: &DMatrix<f64>,
    options: &ConcentrationOptions,
) -> Result<GlassoSolution> {
    if !(n_g > 0.0) || !(lambda_g > 0.0) {
        return Err(Error::Domain(format!(
            "penalty update needs positive weight and rate, got n_g = {n_g}, lambda = {lambda_g}"
        )));
    }
    let problem = GlassoProblem::new(s_g.clone(), options.scale.rho(lambda_g, n_g))
        .with_tol(options.tol)
        .with_max_sweeps(options.max_sweeps);
    let solved = match glasso_solve_warm(&problem, Some(warm)) {
        Ok(sol) => sol,
        Err(Error::GlassoNotConverged { best, residual, .. }) => {
            log::debug!("graphical lasso stopped with KKT residual {residual:.3e}");
            *best
        }
        Err(e) => return Err(e),
    };
    if let Ok(previous) = glasso_objective(warm, &problem) {
        if previous > solved.objective {
            let (covariance, _) = crate::ghd::spd_inverse(warm, "previous concentration")?;
            let kkt = crate::glasso::kkt_residual(warm, &covariance, s_g, problem.rho);
            return Ok(GlassoSolution {
                concentration: warm.clone(),
                covariance,
                objective: previous,
                kkt_residual: kkt,
                sweeps: solved.sweeps,
            });
        }
    }
    Ok(solved)
}
