//! Generalized inverse Gaussian distribution.
//!
//! `GIG(e, h, γ)` has density
//!
//! ```text
//! f(y) = (e/h)^{γ/2} y^{γ-1} / (2 K_γ(√(eh))) · exp{-(e y + h / y) / 2},   y > 0
//! ```
//!
//! It is the mixing law of the generalized hyperbolic distribution and the
//! posterior of the latent scale given an observation, so its first moments
//! `E[Y]`, `E[1/Y]` and `E[log Y]` drive the E-step.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_ratio, dlog_bessel_k_dorder, log_bessel_k};

/// Rate form `(e, h, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigParams {
    pub e: f64,
    pub h: f64,
    pub gamma: f64,
}

/// Concentration/scale form `(ω, η, γ)` with density
/// `(w/η)^{γ-1} / (2η K_γ(ω)) · exp{-ω/2 (w/η + η/w)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigShapeScale {
    pub omega: f64,
    pub eta: f64,
    pub gamma: f64,
}

/// `E[Y]`, `E[1/Y]` and `E[log Y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GigMoments {
    pub mean: f64,
    pub mean_inv: f64,
    pub mean_log: f64,
}

impl GigParams {
    pub fn new(e: f64, h: f64, gamma: f64) -> Result<Self> {
        let params = Self { e, h, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.e.is_finite() && self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Domain(format!(
                "GIG rates must be positive and finite, got e={}, h={}",
                self.e, self.h
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Domain(format!("GIG index must be finite, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `√(eh)`, the argument of every Bessel function involved.
    pub fn omega(&self) -> f64 {
        (self.e * self.h).sqrt()
    }

    pub fn to_shape_scale(&self) -> GigShapeScale {
        GigShapeScale {
            omega: self.omega(),
            eta: (self.h / self.e).sqrt(),
            gamma: self.gamma,
        }
    }

    pub fn log_density(&self, y: f64) -> Result<f64> {
        gig_log_density(self, y)
    }

    pub fn moments(&self) -> Result<GigMoments> {
        gig_moments(self)
    }
}

impl GigShapeScale {
    pub fn new(omega: f64, eta: f64, gamma: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite() && eta > 0.0 && eta.is_finite() && gamma.is_finite()) {
            return Err(Error::Domain(format!(
                "invalid GIG parameters omega={omega}, eta={eta}, gamma={gamma}"
            )));
        }
        Ok(Self { omega, eta, gamma })
    }

    pub fn to_rates(&self) -> GigParams {
        GigParams {
            e: self.omega / self.eta,
            h: self.omega * self.eta,
            gamma: self.gamma,
        }
    }

    pub fn log_density(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) {
            return Err(Error::Domain(format!("GIG support is (0, inf), got {w}")));
        }
        let u = w / self.eta;
        Ok((self.gamma - 1.0) * u.ln()
            - (2.0 * self.eta).ln()
            - log_bessel_k(self.gamma, self.omega)?
            - 0.5 * self.omega * (u + 1.0 / u))
    }
}

pub fn gig_log_density(params: &GigParams, y: f64) -> Result<f64> {
    params.validate()?;
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("GIG support is (0, inf), got {y}")));
    }
    let GigParams { e, h, gamma } = *params;
    Ok(0.5 * gamma * (e / h).ln() + (gamma - 1.0) * y.ln()
        - std::f64::consts::LN_2
        - log_bessel_k(gamma, params.omega())?
        - 0.5 * (e * y + h / y))
}

/// Closed-form moments via Bessel ratios.
///
/// `E[1/Y]` is evaluated as `√(e/h)·R_{-γ}(ω)`, which equals
/// `√(e/h)·R_γ(ω) - 2γ/h` by the three-term recurrence but never subtracts.
pub fn gig_moments(params: &GigParams) -> Result<GigMoments> {
    params.validate()?;
    let omega = params.omega();
    let scale = (params.h / params.e).sqrt();
    let mean = scale * bessel_ratio(params.gamma, omega)?;
    let mean_inv = bessel_ratio(-params.gamma, omega)? / scale;
    let mean_log = scale.ln() + dlog_bessel_k_dorder(params.gamma, omega)?;
    Ok(GigMoments {
        mean,
        mean_inv,
        mean_log,
    })
}

/// `n` draws from `GIG(e, h, γ)`; deterministic in `seed`.
pub fn gig_sample(params: &GigParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sample_with(params, &mut rng)).collect())
}

/// One draw using a caller-supplied generator.
pub fn sample_with<R: Rng + ?Sized>(params: &GigParams, rng: &mut R) -> f64 {
    let omega = params.omega();
    let scale = (params.h / params.e).sqrt();
    let lambda = params.gamma;
    // GIG(λ, ω, ω) and GIG(-λ, ω, ω) are reciprocals of each other
    let y = if lambda >= 0.0 {
        sample_standard(lambda, omega, rng)
    } else {
        1.0 / sample_standard(-lambda, omega, rng)
    };
    scale * y
}

/// Draw from the density proportional to `x^{λ-1} exp{-ω/2 (x + 1/x)}` with `λ ≥ 0`.
///
/// Ratio-of-uniforms with or without mode shift, or a three-piece hat for the
/// non-log-concave corner `λ < 1, ω ≤ 0.2` (Hörmann & Leydold, 2014).
fn sample_standard<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    if lambda > 2.0 || omega > 3.0 {
        rou_shifted(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_plain(lambda, omega, rng)
    } else {
        three_piece_hat(lambda, omega, rng)
    }
}

fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn rou_plain<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        if v <= 0.0 {
            continue;
        }
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn rou_shifted<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // extremes of (x - xm)·sqrt(f(x)) are roots of a cubic
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + xm;
    let phi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (phi / 3.0).cos() - a / 3.0;
    let y2 = fak * (phi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();

    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        if v <= 0.0 {
            continue;
        }
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn three_piece_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let area0 = k0 * x0;

    let (k1, area1, k2, area2) = if x0 >= 2.0 / omega {
        let k2 = x0.powf(lambda - 1.0);
        (0.0, 0.0, k2, k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega)
    } else {
        let k1 = (-omega).exp();
        let area1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        let k2 = (2.0 / omega).powf(lambda - 1.0);
        (k1, area1, k2, k2 * 2.0 * (-1.0f64).exp() / omega)
    };
    let total = area0 + area1 + area2;

    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx) = if v <= area0 {
            (x0 * v / area0, k0)
        } else if v <= area0 + area1 {
            v -= area0;
            if lambda == 0.0 {
                let x = omega * (v * omega.exp()).exp();
                (x, k1 / x)
            } else {
                let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                (x, k1 * x.powf(lambda - 1.0))
            }
        } else {
            v -= area0 + area1;
            let start = x0.max(2.0 / omega);
            let x = -2.0 / omega * ((-omega / 2.0 * start).exp() - v / k2 * omega / 2.0).ln();
            (x, k2 * (-omega / 2.0 * x).exp())
        };
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}
