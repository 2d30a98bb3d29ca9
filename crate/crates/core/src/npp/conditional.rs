use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{draw_beta, draw_dirichlet, draw_gamma, draw_standard_normal};

/// Exact law of the model parameters given a fixed power parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalPosterior {
    /// Success probability `p ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
    /// Cell probabilities `θ ~ Dirichlet(alpha)`.
    Dirichlet { alpha: Vec<f64> },
    /// `σ² ~ InvGamma(shape, scale)` and `β | σ² ~ N(mean, σ² precision⁻¹)`.
    NormalInverseGamma { mean: DVector<f64>, precision: DMatrix<f64>, shape: f64, scale: f64 },
}

impl ConditionalPosterior {
    /// Number of coordinates in one draw (`β` followed by `σ²` for the normal model).
    pub fn dim(&self) -> usize {
        match self {
            ConditionalPosterior::Beta { .. } => 1,
            ConditionalPosterior::Dirichlet { alpha } => alpha.len(),
            ConditionalPosterior::NormalInverseGamma { mean, .. } => mean.len() + 1,
        }
    }

    /// Posterior mean of each coordinate, where it exists.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            ConditionalPosterior::Beta { a, b } => vec![a / (a + b)],
            ConditionalPosterior::Dirichlet { alpha } => {
                let total: f64 = alpha.iter().sum();
                alpha.iter().map(|a| a / total).collect()
            }
            ConditionalPosterior::NormalInverseGamma { mean, shape, scale, .. } => {
                let mut m: Vec<f64> = mean.iter().copied().collect();
                m.push(if *shape > 1.0 { scale / (shape - 1.0) } else { f64::INFINITY });
                m
            }
        }
    }

    /// Marginal law of `β`: multivariate t with `(location, shape matrix, degrees of freedom)`.
    pub fn coefficient_marginal(&self) -> Option<(DVector<f64>, DMatrix<f64>, f64)> {
        match self {
            ConditionalPosterior::NormalInverseGamma { mean, precision, shape, scale } => {
                let inv = precision.clone().try_inverse()?;
                Some((mean.clone(), inv * (scale / shape), 2.0 * shape))
            }
            _ => None,
        }
    }

    /// Prepare for repeated sampling (factorizes the precision once).
    pub fn sampler(&self) -> Result<ConditionalSampler<'_>> {
        let chol = match self {
            ConditionalPosterior::Beta { a, b } if valid(*a) && valid(*b) => None,
            ConditionalPosterior::Dirichlet { alpha } if alpha.iter().all(|&a| valid(a)) => None,
            ConditionalPosterior::NormalInverseGamma { precision, shape, scale, .. }
                if valid(*shape) && valid(*scale) =>
            {
                Some(
                    precision
                        .clone()
                        .cholesky()
                        .ok_or_else(|| Error::domain("conditional precision matrix is not positive definite"))?
                        .l(),
                )
            }
            other => return Err(Error::domain(format!("improper conditional posterior {other:?}"))),
        };
        Ok(ConditionalSampler { law: self, chol })
    }
}

fn valid(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Borrowed, pre-factorized sampler for a [`ConditionalPosterior`].
pub struct ConditionalSampler<'a> {
    law: &'a ConditionalPosterior,
    chol: Option<DMatrix<f64>>,
}

impl ConditionalSampler<'_> {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.law {
            ConditionalPosterior::Beta { a, b } => out[0] = draw_beta(rng, *a, *b),
            ConditionalPosterior::Dirichlet { alpha } => draw_dirichlet(rng, alpha, out),
            ConditionalPosterior::NormalInverseGamma { mean, shape, scale, .. } => {
                let k = mean.len();
                let sigma2 = scale / draw_gamma(rng, *shape, 1.0);
                let l = self.chol.as_ref().expect("factorized in sampler()");
                let z = DVector::from_fn(k, |_, _| draw_standard_normal(rng));
                // Lᵀx = z gives x ~ N(0, (LLᵀ)⁻¹).
                let x = l.transpose().solve_upper_triangular(&z).expect("nonsingular Cholesky factor");
                let sd = sigma2.sqrt();
                for i in 0..k {
                    out[i] = mean[i] + sd * x[i];
                }
                out[k] = sigma2;
            }
        }
    }
}
