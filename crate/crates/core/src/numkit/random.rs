use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution as _, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// The generator type behind every [`RngStream`].
pub type StreamRng = ChaCha8Rng;

/// Counter-based random stream identified by `(master_seed, stream_index)`.
///
/// Identical pairs reproduce identical sequences; distinct stream indices select
/// disjoint ChaCha keystreams for the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Deterministically derived child stream, e.g. one per replicate or draw block.
    pub fn substream(&self, index: u64) -> Self {
        Self { master_seed: self.master_seed, stream_index: splitmix64(splitmix64(self.stream_index) ^ index) }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Distributions supported by [`sample_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    /// Shape-scale parameterization.
    Gamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    Dirichlet { alpha: Vec<f64> },
    /// Density proportional to `x^{-shape-1} exp(-scale/x)`.
    InverseGamma { shape: f64, scale: f64 },
    MultivariateT { nu: f64, location: DVector<f64>, shape: DMatrix<f64> },
}

impl Distribution {
    pub fn dim(&self) -> usize {
        match self {
            Distribution::Dirichlet { alpha } => alpha.len(),
            Distribution::MultivariateT { location, .. } => location.len(),
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let ok = match self {
            Distribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Distribution::Normal { mean, sd } => mean.is_finite() && pos(*sd),
            Distribution::Gamma { shape, scale } | Distribution::InverseGamma { shape, scale } => {
                pos(*shape) && pos(*scale)
            }
            Distribution::Beta { a, b } => pos(*a) && pos(*b),
            Distribution::Dirichlet { alpha } => alpha.len() >= 2 && alpha.iter().all(|&a| pos(a)),
            Distribution::MultivariateT { nu, location, shape } => {
                pos(*nu)
                    && shape.nrows() == location.len()
                    && shape.ncols() == location.len()
                    && shape.clone().cholesky().is_some()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid distribution parameters: {self:?}")))
        }
    }
}

/// Row-major block of draws, `dim` values per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn extend(&mut self, other: Samples) {
        debug_assert_eq!(other.dim, self.dim);
        self.data.extend(other.data);
    }
}

/// Draw `count` variates from `dist` using the given stream.
pub fn sample_distribution(dist: &Distribution, stream: &RngStream, count: usize) -> Result<Samples> {
    dist.validate()?;
    let mut rng = stream.rng();
    let mut out = Samples::with_capacity(dist.dim(), count);
    match dist {
        Distribution::Uniform { lo, hi } => {
            for _ in 0..count {
                out.data.push(lo + (hi - lo) * rng.random::<f64>());
            }
        }
        Distribution::Normal { mean, sd } => {
            for _ in 0..count {
                out.data.push(mean + sd * draw_standard_normal(&mut rng));
            }
        }
        Distribution::Gamma { shape, scale } => {
            for _ in 0..count {
                out.data.push(draw_gamma(&mut rng, *shape, *scale));
            }
        }
        Distribution::Beta { a, b } => {
            for _ in 0..count {
                out.data.push(draw_beta(&mut rng, *a, *b));
            }
        }
        Distribution::InverseGamma { shape, scale } => {
            for _ in 0..count {
                out.data.push(draw_inverse_gamma(&mut rng, *shape, *scale));
            }
        }
        Distribution::Dirichlet { alpha } => {
            let mut row = vec![0.0; alpha.len()];
            for _ in 0..count {
                draw_dirichlet(&mut rng, alpha, &mut row);
                out.push(&row);
            }
        }
        Distribution::MultivariateT { nu, location, shape } => {
            let chol = shape.clone().cholesky().expect("validated positive definite").l();
            let k = location.len();
            let mut z = DVector::zeros(k);
            for _ in 0..count {
                for v in z.iter_mut() {
                    *v = draw_standard_normal(&mut rng);
                }
                let w = draw_gamma(&mut rng, 0.5 * nu, 2.0);
                let scale = (nu / w).sqrt();
                let x = location + (&chol * &z) * scale;
                out.data.extend(x.iter());
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn draw_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, scale) draw; parameters must already be valid.
#[inline]
pub(crate) fn draw_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, scale).expect("valid gamma parameters").sample(rng)
}

#[inline]
pub(crate) fn draw_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    scale / draw_gamma(rng, shape, 1.0)
}

#[inline]
pub(crate) fn draw_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("valid beta parameters").sample(rng)
}

pub(crate) fn draw_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64], out: &mut [f64]) {
    let mut total = 0.0;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = draw_gamma(rng, a, 1.0);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}
