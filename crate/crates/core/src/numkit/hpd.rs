use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 100;

/// Sample mean and standard deviation (n - 1 divisor).
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn check(sorted: &[f64], mass: f64) -> Result<usize> {
    if sorted.len() < MIN_SAMPLES {
        return Err(Error::domain(format!("interval needs at least {MIN_SAMPLES} samples, got {}", sorted.len())));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::domain(format!("interval mass must lie in (0, 1), got {mass}")));
    }
    Ok(((mass * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()))
}

/// Highest posterior density interval: the narrowest window of `⌈mass·N⌉`
/// consecutive order statistics. `sorted` must be ascending.
pub fn hpd_interval(sorted: &[f64], mass: f64) -> Result<(f64, f64)> {
    let m = check(sorted, mass)?;
    let (mut lo, mut width) = (0, f64::INFINITY);
    for i in 0..=sorted.len() - m {
        let w = sorted[i + m - 1] - sorted[i];
        if w < width {
            width = w;
            lo = i;
        }
    }
    Ok((sorted[lo], sorted[lo + m - 1]))
}

/// Equal-tailed interval with the same window size as [`hpd_interval`].
pub fn equal_tailed_interval(sorted: &[f64], mass: f64) -> Result<(f64, f64)> {
    let m = check(sorted, mass)?;
    let lo = (sorted.len() - m) / 2;
    Ok((sorted[lo], sorted[lo + m - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{sample_distribution, Distribution, RngStream};
    use proptest::prelude::*;

    #[test]
    fn standard_normal_hpd() {
        let s = sample_distribution(&Distribution::Normal { mean: 0.0, sd: 1.0 }, &RngStream::new(4, 0), 200_000)
            .unwrap();
        let (lo, hi) = hpd_interval(&sorted_copy(&s.data), 0.95).unwrap();
        assert!((lo + 1.96).abs() < 0.05 && (hi - 1.96).abs() < 0.05, "({lo}, {hi})");
    }

    #[test]
    fn uniform_grid_width() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let (lo, hi) = hpd_interval(&v, 0.5).unwrap();
        assert!((hi - lo - 0.49).abs() < 1e-12);
    }

    #[test]
    fn skewed_gamma_is_narrower_than_equal_tailed() {
        let s = sample_distribution(&Distribution::Gamma { shape: 2.0, scale: 1.0 }, &RngStream::new(4, 1), 100_000)
            .unwrap();
        let sorted = sorted_copy(&s.data);
        let (lo, hi) = hpd_interval(&sorted, 0.95).unwrap();
        let (elo, ehi) = equal_tailed_interval(&sorted, 0.95).unwrap();
        assert!(lo > 0.0);
        assert!(hi - lo < ehi - elo);
        assert!(lo < elo, "HPD shifts towards the mode");
    }

    #[test]
    fn too_few_samples() {
        assert!(hpd_interval(&[1.0; 50], 0.9).is_err());
        assert!(hpd_interval(&[1.0; 200], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn hpd_never_wider_than_equal_tailed(v in proptest::collection::vec(-1e3f64..1e3, 100..400), mass in 0.05f64..0.99) {
            let sorted = sorted_copy(&v);
            let (lo, hi) = hpd_interval(&sorted, mass).unwrap();
            let (elo, ehi) = equal_tailed_interval(&sorted, mass).unwrap();
            prop_assert!(hi - lo <= ehi - elo);
            prop_assert!(lo <= hi);
        }
    }
}
