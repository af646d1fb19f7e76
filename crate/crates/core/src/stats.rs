//! Small sample statistics used by the experiment harness.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile (type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and
/// `N(mean, variance)`.
pub fn ks_normal(xs: &[f64], mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Input(format!("reference variance must be positive, got {variance}")));
    }
    if xs.is_empty() {
        return Err(Error::Input("KS distance of an empty sample".into()));
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::Input(e.to_string()))?;
    let s = sorted(xs);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// Equal-width histogram over `[lo, hi]` as `(left edge, count)`.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        if x >= lo && x <= hi && width > 0.0 {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&s, 0.1) - 1.3).abs() < 1e-12);
        // two points: the 2.5% and 97.5% quantiles interpolate between them
        let two = [0.0, 1.0];
        assert!((quantile_sorted(&two, 0.025) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn ks_of_constant_sample_is_one_half() {
        let d = ks_normal(&[0.0; 50], 0.0, 1.0).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        assert!(ks_normal(&[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn ks_null_distribution() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        let m = 1000;
        let crit = 1.36 / (m as f64).sqrt();
        let trials = 100;
        let below = (0..trials)
            .filter(|_| {
                let xs: Vec<f64> = (0..m).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
                ks_normal(&xs, 0.0, 0.09).unwrap() < crit
            })
            .count();
        assert!(below >= 90, "{below}");
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(sample_variance(&[4.0]), 0.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.1, 0.5, 0.99, 1.0, 2.0], 0.0, 1.0, 2);
        assert_eq!(h, vec![(0.0, 2), (0.5, 3)]);
    }
}
