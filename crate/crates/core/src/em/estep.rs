use nalgebra::DMatrix;

use super::{check_data, MixtureModel, MIN_WEIGHT_PER_DIM};
use crate::error::{Error, Result};
use crate::gig::{gig_moments, GigParams};
use crate::special::log_sum_exp;

/// Posterior quantities for every observation and component.
///
/// `a`, `b` and `c` are `E[W]`, `E[1/W]` and `E[log W]` under the posterior of
/// the latent scale given `x_i` and membership in component `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepCache {
    pub z: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n_g: Vec<f64>,
    pub abar: Vec<f64>,
    pub bbar: Vec<f64>,
    pub cbar: Vec<f64>,
    /// Unpenalised observed log-likelihood of the model the cache was built from.
    pub data_loglik: f64,
}

impl EStepCache {
    pub fn num_components(&self) -> usize {
        self.z.ncols()
    }

    /// Maximum a posteriori component of each observation; ties go to the lower index.
    pub fn assignments(&self) -> Vec<usize> {
        self.z
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for g in 1..row.len() {
                    if row[g] > row[best] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }
}

/// `log π_g + log f(x_i | θ_g)` as an `n × G` matrix.
pub(crate) fn weighted_log_densities(data: &DMatrix<f64>, model: &MixtureModel) -> Result<DMatrix<f64>> {
    check_data(data, model.dim())?;
    let n = data.nrows();
    let mut out = DMatrix::zeros(n, model.num_components());
    for (g, comp) in model.components().iter().enumerate() {
        let (delta, cross) = comp.row_terms(data);
        let aq = comp.alpha_quadratic();
        let ln_pi = model.proportions()[g].ln();
        for i in 0..n {
            out[(i, g)] = ln_pi + comp.log_density_from_terms(delta[i], cross[i], aq)?;
        }
    }
    Ok(out)
}

pub fn e_step(data: &DMatrix<f64>, model: &MixtureModel) -> Result<EStepCache> {
    e_step_with_floor(data, model, MIN_WEIGHT_PER_DIM * model.dim() as f64)
}

/// E-step that rejects any component whose expected size falls below `min_weight`.
pub(crate) fn e_step_with_floor(data: &DMatrix<f64>, model: &MixtureModel, min_weight: f64) -> Result<EStepCache> {
    check_data(data, model.dim())?;
    let (n, p) = data.shape();
    let g_count = model.num_components();
    let mut logw = DMatrix::zeros(n, g_count);
    let mut a = DMatrix::zeros(n, g_count);
    let mut b = DMatrix::zeros(n, g_count);
    let mut c = DMatrix::zeros(n, g_count);

    for (g, comp) in model.components().iter().enumerate() {
        let (delta, cross) = comp.row_terms(data);
        let aq = comp.alpha_quadratic();
        let ln_pi = model.proportions()[g].ln();
        let e = comp.omega() + aq;
        let nu = comp.gamma() - 0.5 * p as f64;
        for i in 0..n {
            logw[(i, g)] = ln_pi + comp.log_density_from_terms(delta[i], cross[i], aq)?;
            let m = gig_moments(&GigParams::new(e, comp.omega() + delta[i], nu)?)?;
            a[(i, g)] = m.mean;
            b[(i, g)] = m.mean_inv;
            c[(i, g)] = m.mean_log;
        }
    }

    let mut z = DMatrix::zeros(n, g_count);
    let mut data_loglik = 0.0;
    let mut row = vec![0.0; g_count];
    for i in 0..n {
        for (g, v) in row.iter_mut().enumerate() {
            *v = logw[(i, g)];
        }
        let total = log_sum_exp(&row);
        if !total.is_finite() {
            return Err(Error::ZeroResponsibility { index: i });
        }
        data_loglik += total;
        for g in 0..g_count {
            z[(i, g)] = (row[g] - total).exp();
        }
    }

    let mut n_g = vec![0.0; g_count];
    let mut abar = vec![0.0; g_count];
    let mut bbar = vec![0.0; g_count];
    let mut cbar = vec![0.0; g_count];
    for g in 0..g_count {
        let zg = z.column(g);
        let weight = zg.sum();
        if !(weight >= min_weight) {
            return Err(Error::DegenerateComponent { component: g, weight });
        }
        n_g[g] = weight;
        abar[g] = zg.dot(&a.column(g)) / weight;
        bbar[g] = zg.dot(&b.column(g)) / weight;
        cbar[g] = zg.dot(&c.column(g)) / weight;
    }

    Ok(EStepCache {
        z,
        a,
        b,
        c,
        n_g,
        abar,
        bbar,
        cbar,
        data_loglik,
    })
}
