//! Penalised EM for mixtures of generalized hyperbolic distributions.
//!
//! Each concentration matrix `C_g` carries a Laplace prior whose rate `λ_g`
//! has a `Gamma(s, r)` hyperprior. Treating `λ_g` as latent alongside the
//! memberships and the mixing scales gives an ECM algorithm: the E-step
//! computes posterior memberships, the three GIG moments of the latent scale
//! and `E[λ_g | C_g]`; the M-step updates proportions, locations and
//! skewness in closed form, the index `γ` and concentration `ω` by safeguarded
//! one-dimensional steps, and `C_g` with the graphical lasso.
//!
//! The objective monitored is the penalised observed log-likelihood
//! `Σ_i log Σ_g π_g f(x_i | θ_g) + Σ_g log f(κ_g C_g)`, where `κ_g` is 1 or
//! `exp(-E[log W_g])` depending on the [`PenaltyTarget`].

mod aitken;
mod estep;
mod init;
mod mstep;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ghd::GhdComponent;
use crate::glasso::{self, l1_norm};
use crate::special::dlog_bessel_k_dorder;

pub use aitken::{aitken_stop, aitken_stop_with, AitkenForm, StopDecision};
pub use estep::{e_step, EStepCache};
pub use init::{initial_model, kmeans, InitStrategy};
pub use mstep::{
    m_step_moments, m_step_moments_symmetric, m_step_scatter, q_gamma, q_omega, q_omega_derivative,
    q_omega_second_derivative, q_geometric, update_concentration, update_gamma, update_index_geometric,
    update_lambda, update_omega, update_omega_bounded, ConcentrationOptions, MomentUpdate,
};

/// A component whose expected size drops below `p` times this is degenerate.
pub const MIN_WEIGHT_PER_DIM: f64 = 1e-3;

/// Shape `s` and rate `r` of the gamma hyperprior on each `λ_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyHyper {
    pub s: f64,
    pub r: f64,
}

impl PenaltyHyper {
    pub fn new(s: f64, r: f64) -> Result<Self> {
        let h = Self { s, r };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite() && self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "hyperprior shape and rate must be positive, got ({}, {})",
                self.s, self.r
            )));
        }
        Ok(())
    }
}

impl Default for PenaltyHyper {
    fn default() -> Self {
        Self { s: 1.0, r: 1.0 }
    }
}

/// `G` components with mixing proportions and penalty rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    components: Vec<GhdComponent>,
    proportions: Vec<f64>,
    lambda: Vec<f64>,
}

impl MixtureModel {
    /// Validates and stores the model; proportions summing to one within
    /// `1e-10` are renormalised exactly.
    pub fn new(components: Vec<GhdComponent>, proportions: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        let g = components.len();
        if g == 0 {
            return Err(Error::InvalidModel("a mixture needs at least one component".into()));
        }
        if proportions.len() != g || lambda.len() != g {
            return Err(Error::DimensionMismatch {
                expected: g,
                got: if proportions.len() != g { proportions.len() } else { lambda.len() },
            });
        }
        let p = components[0].dim();
        if let Some(bad) = components.iter().find(|c| c.dim() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.dim(),
            });
        }
        if proportions.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidModel("mixing proportions must be positive".into()));
        }
        let total: f64 = proportions.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidModel(format!("mixing proportions sum to {total}")));
        }
        if lambda.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidModel("penalty rates must be positive".into()));
        }
        let proportions = proportions.iter().map(|v| v / total).collect();
        Ok(Self {
            components,
            proportions,
            lambda,
        })
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }
    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }
    pub fn components(&self) -> &[GhdComponent] {
        &self.components
    }
    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Component `order[k]` of `self` becomes component `k` of the result.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let g = self.num_components();
        let mut seen = vec![false; g];
        if order.len() != g || order.iter().any(|&k| k >= g || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::InvalidModel("not a permutation of the components".into()));
        }
        Ok(Self {
            components: order.iter().map(|&k| self.components[k].clone()).collect(),
            proportions: order.iter().map(|&k| self.proportions[k]).collect(),
            lambda: order.iter().map(|&k| self.lambda[k]).collect(),
        })
    }

    /// Every location moved by `shift`.
    pub fn shifted(&self, shift: &DVector<f64>) -> Self {
        Self {
            components: self.components.iter().map(|c| c.shifted(shift)).collect(),
            ..self.clone()
        }
    }
}

/// How the gamma-Lasso rate turns into the graphical-lasso penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyScale {
    /// `ρ_g = 2λ_g / n_g`: the exact maximiser of the expected complete-data
    /// log-likelihood, whose `C_g` terms are `(n_g/2)(log|C| - tr(C S_g)) - λ_g ‖C‖₁`.
    CompleteData,
    /// `ρ_g = λ_g / n_g`, as printed alongside the concentration update.
    Halved,
}

impl PenaltyScale {
    pub fn rho(self, lambda: f64, n_g: f64) -> f64 {
        match self {
            PenaltyScale::CompleteData => 2.0 * lambda / n_g,
            PenaltyScale::Halved => lambda / n_g,
        }
    }
}

/// Which matrix the gamma-Lasso prior is placed on.
///
/// With `W ~ GIG(ω, ω, γ)` the mixing scale is tied to `(ω, γ)`: as `ω → 0`,
/// or `|γ| → ∞` along suitable paths, `W` shrinks and `Σ` grows without
/// changing the law of `X`, so a prior on the raw `C = Σ⁻¹` can be driven
/// towards its supremum at `C = 0` at no cost in fit. `GeometricScale` places
/// the prior on `C / exp(E[log W])`, the concentration of the scale matrix
/// rescaled so the mixing variable has unit geometric mean, which is
/// invariant along those paths. (The arithmetic mean is not a usable
/// normaliser: it is infinite in the heavy-tailed limits.)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyTarget {
    Raw,
    GeometricScale,
}

/// `exp(-E[log W])` for `W ~ GIG(ω, ω, γ)`.
pub fn geometric_factor(gamma: f64, omega: f64) -> Result<f64> {
    Ok((-dlog_bessel_k_dorder(gamma, omega)?).exp())
}

impl PenaltyTarget {
    /// `κ` such that the penalised matrix is `κ C`.
    pub fn factor(self, comp: &GhdComponent) -> Result<f64> {
        match self {
            PenaltyTarget::Raw => Ok(1.0),
            PenaltyTarget::GeometricScale => geometric_factor(comp.gamma(), comp.omega()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub hyper: PenaltyHyper,
    /// Aitken threshold.
    pub eps: f64,
    /// Maximum number of E-steps.
    pub max_iter: usize,
    pub glasso_tol: f64,
    pub glasso_max_sweeps: usize,
    pub init: InitStrategy,
    pub seed: u64,
    /// Fresh initialisations tried after a degenerate failure.
    pub retries: usize,
    pub penalty_scale: PenaltyScale,
    pub penalty_target: PenaltyTarget,
    pub stopping: AitkenForm,
    /// Fix every `α_g` at zero.
    pub symmetric: bool,
    pub init_omega: f64,
    pub init_gamma: f64,
    /// Lower bound kept by the `ω` update; 0 leaves `ω` unbounded.
    pub omega_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            hyper: PenaltyHyper::default(),
            eps: 1e-5,
            max_iter: 1000,
            glasso_tol: glasso::DEFAULT_TOL,
            glasso_max_sweeps: glasso::DEFAULT_MAX_SWEEPS,
            init: InitStrategy::KMeans,
            seed: 0,
            retries: 5,
            penalty_scale: PenaltyScale::CompleteData,
            penalty_target: PenaltyTarget::Raw,
            stopping: AitkenForm::Standard,
            symmetric: false,
            init_omega: 1.0,
            init_gamma: -0.5,
            omega_floor: 0.0,
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter < 2 {
            return Err(Error::InvalidConfig("max_iter must be at least 2".into()));
        }
        if !(self.glasso_tol > 0.0) || self.glasso_max_sweeps == 0 {
            return Err(Error::InvalidConfig("glasso tolerance and sweep limit must be positive".into()));
        }
        if !(self.init_omega > 0.0 && self.init_omega.is_finite()) || !self.init_gamma.is_finite() {
            return Err(Error::InvalidConfig("initial omega must be positive and gamma finite".into()));
        }
        if !(self.omega_floor >= 0.0 && self.omega_floor <= self.init_omega) {
            return Err(Error::InvalidConfig(format!(
                "omega floor must lie in [0, initial omega], got {}",
                self.omega_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: MixtureModel,
    /// Penalised observed log-likelihood at each E-step; the last entry
    /// belongs to `model`.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub assignments: Vec<usize>,
    pub cache: EStepCache,
    /// Seed of the initialisation that produced this fit.
    pub seed: u64,
    /// Degenerate attempts discarded before this one.
    pub restarts: usize,
}

impl FitReport {
    pub fn penalized_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }

    /// Unpenalised observed log-likelihood of `model`.
    pub fn data_loglik(&self) -> f64 {
        self.cache.data_loglik
    }
}

/// `log f(C)` for the marginal prior of a concentration matrix.
pub fn log_prior_concentration(c: &DMatrix<f64>, hyper: &PenaltyHyper) -> f64 {
    let p = c.nrows() as f64;
    let s = hyper.s;
    let r = hyper.r;
    s * r.ln() - ln_gamma(s) - p * std::f64::consts::LN_2 + ln_gamma(s + p * p)
        - (s + p * p) * (r + l1_norm(c)).ln()
}

/// `Σ_g log f(κ_g C_g)`.
pub fn log_prior(model: &MixtureModel, hyper: &PenaltyHyper, target: PenaltyTarget) -> Result<f64> {
    model
        .components()
        .iter()
        .map(|c| Ok(log_prior_concentration(&(c.concentration() * target.factor(c)?), hyper)))
        .sum()
}

/// Unpenalised observed log-likelihood `Σ_i log Σ_g π_g f(x_i | θ_g)`.
pub fn data_loglik(data: &DMatrix<f64>, model: &MixtureModel) -> Result<f64> {
    let logw = estep::weighted_log_densities(data, model)?;
    Ok((0..logw.nrows())
        .map(|i| crate::special::log_sum_exp(&logw.row(i).iter().copied().collect::<Vec<_>>()))
        .sum())
}

pub fn penalized_loglik(
    data: &DMatrix<f64>,
    model: &MixtureModel,
    hyper: &PenaltyHyper,
    target: PenaltyTarget,
) -> Result<f64> {
    hyper.validate()?;
    Ok(data_loglik(data, model)? + log_prior(model, hyper, target)?)
}

pub(crate) fn check_data(data: &DMatrix<f64>, p: usize) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("data matrix has no rows".into()));
    }
    if data.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: data.ncols(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("data contain non-finite values".into()));
    }
    Ok(())
}

/// Seed used by the `attempt`-th initialisation.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Fits a `g`-component model. Degenerate failures trigger fresh
/// initialisations (seeded strategies only) up to `config.retries` times.
pub fn fit(data: &DMatrix<f64>, g: usize, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let (n, p) = data.shape();
    if p == 0 {
        return Err(Error::EmptyInput("data matrix has no columns".into()));
    }
    check_data(data, p)?;
    if g == 0 || n <= g {
        return Err(Error::InvalidConfig(format!("need 1 <= G < n, got G = {g}, n = {n}")));
    }
    let attempts = match config.init {
        InitStrategy::KMeans | InitStrategy::Random => config.retries + 1,
        _ => 1,
    };
    let mut last = None;
    for attempt in 0..attempts {
        let seed = attempt_seed(config.seed, attempt);
        match fit_once(data, g, config, seed) {
            Ok(mut report) => {
                report.restarts = attempt;
                return Ok(report);
            }
            Err(e) if e.is_degenerate() => {
                log::debug!("G = {g}, seed {seed}: {e}; restarting");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn fit_once(data: &DMatrix<f64>, g: usize, config: &FitConfig, seed: u64) -> Result<FitReport> {
    let p = data.ncols();
    let min_weight = MIN_WEIGHT_PER_DIM * p as f64;
    let mut model = initial_model(data, g, config, seed)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let cache = loop {
        let cache = estep::e_step_with_floor(data, &model, min_weight)?;
        let value = cache.data_loglik + log_prior(&model, &config.hyper, config.penalty_target)?;
        if let Some(&prev) = trace.last() {
            if value < prev - 1e-6 * (1.0 + f64::abs(prev)) {
                log::warn!("penalised log-likelihood decreased from {prev} to {value}");
            }
        }
        trace.push(value);
        if trace.len() >= 3 {
            let k = trace.len();
            let last3 = [trace[k - 3], trace[k - 2], trace[k - 1]];
            if aitken_stop_with(last3, config.eps, config.stopping) == StopDecision::Stop {
                converged = true;
                break cache;
            }
        }
        if trace.len() >= config.max_iter {
            break cache;
        }
        model = m_step(data, &model, &cache, config)?;
    };
    let assignments = cache.assignments();
    Ok(FitReport {
        model,
        iterations: trace.len(),
        loglik_trace: trace,
        converged,
        assignments,
        cache,
        seed,
        restarts: 0,
    })
}

/// One full conditional-maximisation pass.
pub fn m_step(
    data: &DMatrix<f64>,
    model: &MixtureModel,
    cache: &EStepCache,
    config: &FitConfig,
) -> Result<MixtureModel> {
    let lambda = update_lambda(model, &config.hyper, config.penalty_target)?;
    let moments = if config.symmetric {
        m_step_moments_symmetric(data, cache)?
    } else {
        m_step_moments(data, cache)?
    };
    let (gamma, omega) = match config.penalty_target {
        PenaltyTarget::Raw => {
            let gamma = update_gamma(cache, model)?;
            let omega = update_omega_bounded(cache, model, &gamma, config.omega_floor)?;
            (gamma, omega)
        }
        PenaltyTarget::GeometricScale => update_index_geometric(cache, model, &lambda, config.omega_floor)?,
    };
    let scatter = m_step_scatter(data, cache, &moments.mu, &moments.alpha);
    let options = ConcentrationOptions {
        scale: config.penalty_scale,
        tol: config.glasso_tol,
        max_sweeps: config.glasso_max_sweeps,
    };
    let mut components = Vec::with_capacity(model.num_components());
    for (g, comp) in model.components().iter().enumerate() {
        let kappa = match config.penalty_target {
            PenaltyTarget::Raw => 1.0,
            PenaltyTarget::GeometricScale => geometric_factor(gamma[g], omega[g])?,
        };
        let sol = update_concentration(
            &scatter[g],
            lambda[g] * kappa,
            cache.n_g[g],
            comp.concentration(),
            &options,
        )?;
        components.push(GhdComponent::with_concentration(
            moments.mu[g].clone(),
            moments.alpha[g].clone(),
            sol.concentration,
            omega[g],
            gamma[g],
        )?);
    }
    MixtureModel::new(components, moments.proportions, lambda)
}
