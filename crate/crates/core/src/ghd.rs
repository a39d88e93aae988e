//! Multivariate generalized hyperbolic distribution as a normal variance-mean
//! mixture: `X = μ + Wα + √W U` with `U ~ N(0, Σ)` and `W ~ GIG(ω, ω, γ)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gig::{self, GigParams};
use crate::special::log_bessel_k;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One mixture component. The scale matrix and its inverse are always
/// constructed together; use [`GhdComponent::with_concentration`] to replace them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhdComponent {
    mu: DVector<f64>,
    alpha: DVector<f64>,
    sigma: DMatrix<f64>,
    concentration: DMatrix<f64>,
    omega: f64,
    gamma: f64,
    log_det_concentration: f64,
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factor of a symmetric matrix, or a descriptive error.
pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

pub(crate) fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of an SPD matrix, symmetrised, with its log-determinant.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let chol = cholesky(m, what)?;
    let log_det = log_det_from_cholesky(&chol);
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, log_det))
}

impl GhdComponent {
    /// Builds a component from its concentration matrix `C = Σ⁻¹`.
    pub fn with_concentration(
        mu: DVector<f64>,
        alpha: DVector<f64>,
        concentration: DMatrix<f64>,
        omega: f64,
        gamma: f64,
    ) -> Result<Self> {
        let p = mu.len();
        check_shapes(p, &alpha, &concentration)?;
        check_index(omega, gamma)?;
        let mut concentration = concentration;
        symmetrize(&mut concentration);
        let (sigma, log_det_c) = spd_inverse(&concentration, "concentration matrix")?;
        Ok(Self {
            mu,
            alpha,
            sigma,
            concentration,
            omega,
            gamma,
            log_det_concentration: log_det_c,
        })
    }

    /// Builds a component from its scale matrix `Σ`.
    pub fn with_scale(
        mu: DVector<f64>,
        alpha: DVector<f64>,
        sigma: DMatrix<f64>,
        omega: f64,
        gamma: f64,
    ) -> Result<Self> {
        let p = mu.len();
        check_shapes(p, &alpha, &sigma)?;
        check_index(omega, gamma)?;
        let mut sigma = sigma;
        symmetrize(&mut sigma);
        let (concentration, log_det_sigma) = spd_inverse(&sigma, "scale matrix")?;
        Ok(Self {
            mu,
            alpha,
            sigma,
            concentration,
            omega,
            gamma,
            log_det_concentration: -log_det_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn concentration(&self) -> &DMatrix<f64> {
        &self.concentration
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn log_det_concentration(&self) -> f64 {
        self.log_det_concentration
    }

    /// `αᵀCα`.
    pub fn alpha_quadratic(&self) -> f64 {
        self.alpha.dot(&(&self.concentration * &self.alpha))
    }

    /// Same component with every location shifted by `shift`.
    pub fn shifted(&self, shift: &DVector<f64>) -> Self {
        let mut out = self.clone();
        out.mu += shift;
        out
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-row quadratic forms for a data matrix: `(δ_i, (x_i-μ)ᵀCα)`.
    pub(crate) fn row_terms(&self, data: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = data.nrows();
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mu.transpose();
        }
        let projected = &centered * &self.concentration;
        let c_alpha = &self.concentration * &self.alpha;
        let mut delta = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        for i in 0..n {
            let d = centered.row(i);
            let pr = projected.row(i);
            delta.push(d.dot(&pr).max(0.0));
            cross.push(d.transpose().dot(&c_alpha));
        }
        (delta, cross)
    }

    /// Log-density from precomputed quadratic forms.
    pub(crate) fn log_density_from_terms(&self, delta: f64, cross: f64, alpha_quad: f64) -> Result<f64> {
        let p = self.dim() as f64;
        let nu = self.gamma - 0.5 * p;
        let a = self.omega + alpha_quad;
        let b = self.omega + delta;
        Ok(cross + 0.5 * nu * (b / a).ln() + log_bessel_k(nu, (a * b).sqrt())?
            - 0.5 * p * LN_2PI
            + 0.5 * self.log_det_concentration
            - log_bessel_k(self.gamma, self.omega)?)
    }
}

fn check_shapes(p: usize, alpha: &DVector<f64>, m: &DMatrix<f64>) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidModel("dimension must be at least 1".into()));
    }
    if alpha.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: alpha.len(),
        });
    }
    if m.nrows() != p || m.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

fn check_index(omega: f64, gamma: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidModel(format!("omega must be positive, got {omega}")));
    }
    if !gamma.is_finite() {
        return Err(Error::InvalidModel(format!("gamma must be finite, got {gamma}")));
    }
    Ok(())
}

/// `(x - μ)ᵀ C (x - μ)`.
pub fn mahalanobis(x: &DVector<f64>, comp: &GhdComponent) -> Result<f64> {
    comp.check_point(x)?;
    let d = x - comp.mu();
    Ok(d.dot(&(comp.concentration() * &d)).max(0.0))
}

/// Log of the generalized hyperbolic density at `x`.
pub fn ghd_log_density(x: &DVector<f64>, comp: &GhdComponent) -> Result<f64> {
    comp.check_point(x)?;
    let d = x - comp.mu();
    let cd = comp.concentration() * &d;
    let delta = d.dot(&cd).max(0.0);
    let cross = cd.dot(comp.alpha());
    comp.log_density_from_terms(delta, cross, comp.alpha_quadratic())
}

/// Posterior law of the latent scale `W` given `x`:
/// `GIG(ω + αᵀCα, ω + δ(x, μ), γ - p/2)`.
pub fn conditional_w_params(x: &DVector<f64>, comp: &GhdComponent) -> Result<GigParams> {
    let delta = mahalanobis(x, comp)?;
    GigParams::new(
        comp.omega() + comp.alpha_quadratic(),
        comp.omega() + delta,
        comp.gamma() - 0.5 * comp.dim() as f64,
    )
}

/// `n` rows drawn as `μ + wα + √w·u`; deterministic in `seed`.
pub fn ghd_sample(comp: &GhdComponent, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = comp.dim();
    let chol = cholesky(comp.sigma(), "scale matrix")?;
    let lower = chol.l();
    let mixing = GigParams::new(comp.omega(), comp.omega(), comp.gamma())?;
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        let w = gig::sample_with(&mixing, &mut rng);
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let u = &lower * z;
        let row = comp.mu() + comp.alpha() * w + u * w.sqrt();
        out.set_row(i, &row.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ghdgls_testkit::{integrate_positive, integrate_real_line, invert_dense};

    fn comp_1d(mu: f64, alpha: f64, sigma2: f64, omega: f64, gamma: f64) -> GhdComponent {
        GhdComponent::with_scale(
            DVector::from_element(1, mu),
            DVector::from_element(1, alpha),
            DMatrix::from_element(1, 1, sigma2),
            omega,
            gamma,
        )
        .unwrap()
    }

    fn spd3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.5, 0.2, -0.4, 0.2, 1.1])
    }

    #[test]
    fn mahalanobis_basic_cases() {
        let c = GhdComponent::with_scale(
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            1.0,
            0.5,
        )
        .unwrap();
        assert_eq!(mahalanobis(c.mu(), &c).unwrap(), 0.0);
        let x = DVector::from_vec(vec![4.0, 3.0]);
        assert!((mahalanobis(&x, &c).unwrap() - 25.0).abs() < 1e-12);
        assert!(mahalanobis(&DVector::zeros(3), &c).is_err());
    }

    #[test]
    fn mahalanobis_matches_dense_inverse() {
        let sigma = spd3();
        let mu = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        let c = GhdComponent::with_scale(mu.clone(), DVector::zeros(3), sigma.clone(), 1.0, 0.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| sigma[(i, j)]).collect()).collect();
        let inv = invert_dense(&rows);
        let x = DVector::from_vec(vec![1.3, -0.7, 0.4]);
        let d: Vec<f64> = (0..3).map(|i| x[i] - mu[i]).collect();
        let oracle: f64 = (0..3).map(|i| (0..3).map(|j| d[i] * inv[i][j] * d[j]).sum::<f64>()).sum();
        assert!((mahalanobis(&x, &c).unwrap() - oracle).abs() < 1e-10);
        let prod = c.sigma() * c.concentration();
        assert!((prod - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn symmetric_when_no_skewness() {
        let c = comp_1d(0.7, 0.0, 1.3, 1.5, -0.6);
        for &t in &[0.1, 1.0, 3.5] {
            let a = ghd_log_density(&DVector::from_element(1, 0.7 + t), &c).unwrap();
            let b = ghd_log_density(&DVector::from_element(1, 0.7 - t), &c).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn univariate_density_integrates_to_one() {
        for &(alpha, omega, gamma) in &[(0.0, 1.0, 0.5), (0.8, 2.0, -1.5), (-1.2, 0.6, 2.0)] {
            let c = comp_1d(0.3, alpha, 0.8, omega, gamma);
            let total = integrate_real_line(
                |x| ghd_log_density(&DVector::from_element(1, x), &c).unwrap().exp(),
                0.3,
                1e-13,
                1e-11,
            );
            assert!((total - 1.0).abs() < 1e-6, "{alpha} {omega} {gamma}: {total}");
        }
    }

    #[test]
    fn bivariate_density_matches_mixture_integral() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.4, 0.9]);
        let c = GhdComponent::with_scale(
            DVector::from_vec(vec![0.5, -1.0]),
            DVector::from_vec(vec![0.7, -0.3]),
            sigma.clone(),
            1.7,
            -0.8,
        )
        .unwrap();
        let det = sigma[(0, 0)] * sigma[(1, 1)] - sigma[(0, 1)].powi(2);
        let inv = [
            [sigma[(1, 1)] / det, -sigma[(0, 1)] / det],
            [-sigma[(0, 1)] / det, sigma[(0, 0)] / det],
        ];
        let mixing = GigParams::new(1.7, 1.7, -0.8).unwrap();
        for x in [[0.0, 0.0], [2.0, -1.5], [-1.0, 1.0]] {
            let normal = |w: f64| {
                let m = [0.5 + w * 0.7, -1.0 - w * 0.3];
                let d = [x[0] - m[0], x[1] - m[1]];
                let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
                (-(q / w) / 2.0).exp() / (2.0 * std::f64::consts::PI * w * det.sqrt())
            };
            let oracle = integrate_positive(|w| normal(w) * mixing.log_density(w).unwrap().exp(), 1.0, 1e-15, 1e-12);
            let v = ghd_log_density(&DVector::from_vec(x.to_vec()), &c).unwrap().exp();
            assert!((v - oracle).abs() < 1e-6 * oracle.max(1e-3), "{v} vs {oracle}");
        }
    }

    #[test]
    fn conditional_params_basic() {
        let c = GhdComponent::with_scale(DVector::zeros(2), DVector::zeros(2), DMatrix::identity(2, 2), 1.3, 0.4).unwrap();
        let g = conditional_w_params(&DVector::zeros(2), &c).unwrap();
        assert_eq!((g.e, g.h), (1.3, 1.3));
        assert!((g.gamma - (0.4 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn conditional_params_match_bayes_rule() {
        let c = comp_1d(0.2, 0.9, 1.4, 1.1, 0.3);
        let x = 1.7;
        let post = conditional_w_params(&DVector::from_element(1, x), &c).unwrap();
        let mixing = GigParams::new(1.1, 1.1, 0.3).unwrap();
        let joint = |w: f64| {
            let m = 0.2 + w * 0.9;
            let v = 1.4 * w;
            (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt() * mixing.log_density(w).unwrap().exp()
        };
        let marginal = integrate_positive(joint, 1.0, 1e-15, 1e-12);
        for &w in &[0.3, 1.0, 2.4] {
            let bayes = joint(w) / marginal;
            let direct = post.log_density(w).unwrap().exp();
            assert!((bayes - direct).abs() < 1e-8 * direct.max(1.0));
        }
        // marginal equals the GHD density too
        let f = ghd_log_density(&DVector::from_element(1, x), &c).unwrap().exp();
        assert!((f - marginal).abs() < 1e-9);
    }

    #[test]
    fn sampler_mean_matches_mixture_moment() {
        let c = GhdComponent::with_scale(
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::from_vec(vec![0.5, 0.25]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
            2.0,
            0.5,
        )
        .unwrap();
        let n = 100_000;
        let draws = ghd_sample(&c, n, 11).unwrap();
        let ew = GigParams::new(2.0, 2.0, 0.5).unwrap().moments().unwrap().mean;
        for j in 0..2 {
            let col = draws.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let expected = c.mu()[j] + ew * c.alpha()[j];
            assert!((mean - expected).abs() < 4.0 * (var / n as f64).sqrt());
        }
        assert_eq!(draws, ghd_sample(&c, n, 11).unwrap());
    }

    #[test]
    fn log_density_survives_extreme_inputs() {
        let p = 200;
        let c = GhdComponent::with_scale(DVector::zeros(p), DVector::from_element(p, 0.1), DMatrix::identity(p, p), 0.5, 1.0).unwrap();
        let far = DVector::from_element(p, 1e6_f64.sqrt() / (p as f64).sqrt() * 1.0);
        let v = ghd_log_density(&far, &c).unwrap();
        assert!(v.is_finite());
        let near = ghd_log_density(&DVector::zeros(p), &c).unwrap();
        assert!(near.is_finite());
    }

    #[test]
    fn rejects_non_spd_scale() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GhdComponent::with_scale(DVector::zeros(2), DVector::zeros(2), bad, 1.0, 0.0).is_err());
    }
}
