use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_npp_delta, check_unit, ConditionalPosterior, PowerPriorFamily};
use crate::error::{Error, Result};
use crate::models::{NormalLinearData, NormalLinearPrior};
use crate::numkit::ln_gamma;

/// Normal linear model with initial prior `π₀(β, σ²) ∝ σ^{−2a} [N(μ₀, σ²R⁻¹)]^b`.
///
/// Likelihoods use the kernel `σ^{−n} exp(−(S + (β−β̂)'X'X(β−β̂))/(2σ²))`, i.e.
/// the product of normal densities without its `(2π)^{−n/2}` factor.
/// Parameter draws are laid out as `(β₁, …, β_k, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalLinearNpp {
    pub historical: NormalLinearData,
    pub current: NormalLinearData,
    pub prior: NormalLinearPrior,
}

/// Quantities shared by the marginal and conditional posteriors at one `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalLinearIntermediates {
    pub delta: f64,
    /// Mean of the powered prior, `A₀⁻¹(bRμ₀ + δX₀'X₀β̂₀)` with `A₀ = bR + δX₀'X₀`.
    pub beta_star: DVector<f64>,
    /// `(μ₀−β̂₀)'X₀'X₀A₀⁻¹R(μ₀−β̂₀)`; zero when `b = 0`.
    pub h0: f64,
    /// `½ log|A₀| − ln Γ(ν₀) + ν₀ ln(δW₀/2)` with `W₀ = S₀ + bH₀`; `C(δ) ∝ 1/M₀(δ)`.
    pub log_m0: f64,
    /// `(β*−β̂)'X'XA⁻¹A₀(β*−β̂)` with `A = A₀ + X'X`.
    pub h: f64,
    /// `(n/2) ln(δW₀ + W) + ν₀ ln(1 + W/(δW₀))` with `W = S + H`.
    pub log_m: f64,
    /// Degrees of freedom `2ν*` of the marginal t law of β.
    pub nu: f64,
    /// Location `A⁻¹(A₀β* + X'Xβ̂)`.
    pub mu_cond: DVector<f64>,
    /// Shape matrix `(W + δW₀)/ν · A⁻¹`.
    pub sigma_cond: DMatrix<f64>,
    /// `(δn₀ + (b−1)k)/2 + a − 1`.
    pub nu0: f64,
    /// `ν₀ + n/2`.
    pub nu_star: f64,
    pub w0: f64,
    pub w: f64,
    pub log_det_a0: f64,
    pub log_det_a: f64,
    /// Posterior precision factor `A`.
    pub precision: DMatrix<f64>,
    /// Powered-prior precision factor `A₀`.
    pub prior_precision: DMatrix<f64>,
}

impl NormalLinearIntermediates {
    /// Total residual `δW₀ + W` entering the conditional law of σ².
    pub fn total_residual(&self) -> f64 {
        self.delta * self.w0 + self.w
    }
}

/// Completing the square for two quadratic forms:
/// `(x−y)'A(x−y) + (x−z)'B(x−z) = r + (x−c)'(A+B)(x−c)` with
/// `c = (A+B)⁻¹(Ay + Bz)` and `r = (y−z)'B(A+B)⁻¹A(y−z)`.
///
/// Returns `(c, r)`; `A` may be singular as long as `A + B` is positive definite.
pub fn complete_the_square(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    b: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let chol = (a + b).cholesky().ok_or_else(|| Error::domain("A + B is not positive definite"))?;
    let center = chol.solve(&(a * y + b * z));
    let d = y - z;
    let residual = (b * chol.solve(&(a * &d))).dot(&d);
    Ok((center, residual.max(0.0)))
}

/// `ln ∫₀^∞ ∫ t^{−a} exp(−(b + (x−x₀)'A(x−x₀))/(2t)) dx dt`
/// `= (k/2) ln 2π + ln Γ(a−k/2−1) − ½ ln|A| − (a−k/2−1) ln(b/2)`, for `a > k/2 + 1`.
pub fn log_normal_scale_integral(a: f64, b: f64, log_det_a: f64, k: usize) -> f64 {
    let shape = a - k as f64 / 2.0 - 1.0;
    0.5 * k as f64 * (2.0 * PI).ln() + ln_gamma(shape) - 0.5 * log_det_a - shape * (b / 2.0).ln()
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

impl NormalLinearNpp {
    pub fn new(historical: NormalLinearData, current: NormalLinearData, prior: NormalLinearPrior) -> Result<Self> {
        let k = current.k();
        if historical.k() != k {
            return Err(Error::domain(format!("historical design has {} columns, current has {k}", historical.k())));
        }
        prior.validate(k)?;
        Ok(Self { historical, current, prior })
    }

    pub fn k(&self) -> usize {
        self.current.k()
    }

    fn b(&self) -> f64 {
        self.prior.b as f64
    }

    /// `max(0, ((1−b)k + 2 − 2a)/n₀)`.
    pub fn delta_min(&self) -> f64 {
        self.prior.delta_min(self.k(), self.historical.n)
    }

    /// Evaluate all intermediate quantities at `δ`.
    ///
    /// At `δ = 0` with `b = 0` the powered prior is flat in β; `β*` is taken as
    /// its continuous extension `β̂₀` and `H = 0`, so the conditional law reduces
    /// to the current-data-only posterior.
    pub fn intermediates(&self, delta: f64) -> Result<NormalLinearIntermediates> {
        check_unit(delta)?;
        let (h0d, cur) = (&self.historical, &self.current);
        let k = self.k();
        let b = self.b();
        let mut a0 = &h0d.xtx * delta;
        let mut g = &h0d.xtx * &h0d.beta_hat * delta;
        if self.prior.b == 1 {
            a0 += &self.prior.r;
            g += &self.prior.r * &self.prior.mu0;
        }
        let chol_a0 = a0.clone().cholesky();
        let (beta_star, h0, log_det_a0) = match &chol_a0 {
            Some(c) => {
                let beta_star = c.solve(&g);
                // Combining bR at μ₀ with δX₀'X₀ at β̂₀ leaves the residual δ·b·H₀.
                let h0 = if self.prior.b == 1 && delta > 0.0 {
                    let (_, r) = complete_the_square(&self.prior.r, &self.prior.mu0, &(&h0d.xtx * delta), &h0d.beta_hat)?;
                    r / delta
                } else if self.prior.b == 1 {
                    let d = &self.prior.mu0 - &h0d.beta_hat;
                    (&h0d.xtx * c.solve(&(&self.prior.r * &d))).dot(&d).max(0.0)
                } else {
                    0.0
                };
                (beta_star, h0, log_det(c))
            }
            None if delta == 0.0 && self.prior.b == 0 => (h0d.beta_hat.clone(), 0.0, f64::NEG_INFINITY),
            None => return Err(Error::domain(format!("powered prior precision is singular at delta = {delta}"))),
        };
        let w0 = h0d.s + b * h0;
        let a = &a0 + &cur.xtx;
        let chol_a = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain(format!("posterior precision is singular at delta = {delta}")))?;
        let mu_cond = chol_a.solve(&(&g + &cur.xtx * &cur.beta_hat));
        let h = if chol_a0.is_some() { complete_the_square(&a0, &beta_star, &cur.xtx, &cur.beta_hat)?.1 } else { 0.0 };
        let w = cur.s + h;
        let nu0 = (delta * h0d.n as f64 + (b - 1.0) * k as f64) / 2.0 + self.prior.a - 1.0;
        let nu_star = nu0 + cur.n as f64 / 2.0;
        let dw0 = delta * w0;
        let log_m0 = 0.5 * log_det_a0 - ln_gamma(nu0) + nu0 * (dw0 / 2.0).ln();
        let log_m = cur.n as f64 / 2.0 * (dw0 + w).ln() + nu0 * (w / dw0).ln_1p();
        let nu = 2.0 * nu_star;
        let a_inv = chol_a.inverse();
        let sigma_cond = a_inv * ((w + dw0) / nu);
        Ok(NormalLinearIntermediates {
            delta,
            beta_star,
            h0,
            log_m0,
            h,
            log_m,
            nu,
            mu_cond,
            sigma_cond,
            nu0,
            nu_star,
            w0,
            w,
            log_det_a0,
            log_det_a: log_det(&chol_a),
            precision: a,
            prior_precision: a0,
        })
    }

    /// Log of the normalizing factor `(2π)^{−k/2}|R|^{1/2}` of the normal prior on β when `b = 1`.
    fn log_prior_constant(&self) -> f64 {
        if self.prior.b == 1 {
            let chol = self.prior.r.clone().cholesky().expect("validated positive definite");
            0.5 * log_det(&chol) - 0.5 * self.k() as f64 * (2.0 * PI).ln()
        } else {
            0.0
        }
    }

    fn require_positive(&self, what: &str, v: f64, delta: f64) -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("{what} = {v} is not positive at delta = {delta}")))
        }
    }
}

impl PowerPriorFamily for NormalLinearNpp {
    fn family(&self) -> &'static str {
        "normal"
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.k()).map(|i| format!("beta{i}")).collect();
        names.push("sigma2".into());
        names
    }

    fn historical_size(&self) -> u64 {
        self.historical.n
    }

    fn propriety_bound(&self) -> Option<f64> {
        // π₀(σ²) is improper for every (a, b), so C(0) is infinite.
        Some(self.delta_min())
    }

    fn log_numerator(&self, delta: f64) -> Result<f64> {
        let im = self.intermediates(delta)?;
        self.require_positive("posterior shape", im.nu_star, delta)?;
        let total = im.total_residual();
        self.require_positive("posterior residual", total, delta)?;
        let t_exponent = im.nu_star + self.k() as f64 / 2.0 + 1.0;
        Ok(self.log_prior_constant() + log_normal_scale_integral(t_exponent, total, im.log_det_a, self.k()))
    }

    fn log_scale_factor(&self, delta: f64) -> Result<f64> {
        check_npp_delta(self, delta)?;
        let im = self.intermediates(delta)?;
        self.require_positive("historical residual", delta * im.w0, delta)?;
        let t_exponent = im.nu0 + self.k() as f64 / 2.0 + 1.0;
        Ok(self.log_prior_constant() + log_normal_scale_integral(t_exponent, delta * im.w0, im.log_det_a0, self.k()))
    }

    /// `½ log|A₀| + ln Γ(ν*) − ½ log|A| − ln Γ(ν₀) − log M(δ)`.
    fn log_npp_ratio(&self, delta: f64) -> Result<f64> {
        check_npp_delta(self, delta)?;
        let im = self.intermediates(delta)?;
        self.require_positive("historical residual", delta * im.w0, delta)?;
        Ok(0.5 * im.log_det_a0 + ln_gamma(im.nu_star) - 0.5 * im.log_det_a - ln_gamma(im.nu0) - im.log_m)
    }

    fn conditional(&self, delta: f64) -> Result<ConditionalPosterior> {
        let im = self.intermediates(delta)?;
        self.require_positive("posterior shape", im.nu_star, delta)?;
        let total = im.total_residual();
        self.require_positive("posterior residual", total, delta)?;
        Ok(ConditionalPosterior::NormalInverseGamma {
            mean: im.mu_cond,
            precision: im.precision,
            shape: im.nu_star,
            scale: total / 2.0,
        })
    }

    fn powered_prior(&self, delta: f64) -> Result<ConditionalPosterior> {
        check_npp_delta(self, delta)?;
        let im = self.intermediates(delta)?;
        let scale = delta * im.w0 / 2.0;
        self.require_positive("historical residual", scale, delta)?;
        Ok(ConditionalPosterior::NormalInverseGamma {
            mean: im.beta_star,
            precision: im.prior_precision,
            shape: im.nu0,
            scale,
        })
    }

    fn historical_log_likelihood(&self, theta: &[f64]) -> f64 {
        let h = &self.historical;
        let k = self.k();
        let sigma2 = theta[k];
        let d = DVector::from_column_slice(&theta[..k]) - &h.beta_hat;
        let q = (&h.xtx * &d).dot(&d);
        -0.5 * h.n as f64 * sigma2.ln() - (h.s + q) / (2.0 * sigma2)
    }
}
