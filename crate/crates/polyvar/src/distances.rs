//! Empirical distances between a sample and a centred normal law.

use rand::Rng;

use polyvar_core::special::{norm_cdf, norm_ppf};

/// Sorted copy without NaNs.
pub fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = samples.iter().copied().filter(|v| !v.is_nan()).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// `σ Φ^{-1}((i - 1/2)/M)` for `i = 1..=M`.
pub fn normal_quantiles(m: usize, sigma: f64) -> Vec<f64> {
    (0..m).map(|i| sigma * norm_ppf((i as f64 + 0.5) / m as f64)).collect()
}

/// Quantile-coupling estimate of `W₁(law(samples), N(0, σ²))`.
pub fn wasserstein1_to_normal(samples: &[f64], sigma2: f64) -> f64 {
    let s = sorted(samples);
    let z = normal_quantiles(s.len(), sigma2.sqrt());
    w1_sorted(&s, &z)
}

fn w1_sorted(s: &[f64], z: &[f64]) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    s.iter().zip(z).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64
}

/// One-sample Kolmogorov-Smirnov statistic against `N(0, σ²)`.
pub fn kolmogorov_to_normal(samples: &[f64], sigma2: f64) -> f64 {
    let s = sorted(samples);
    let sigma = sigma2.sqrt();
    let cdf: Vec<f64> = s.iter().map(|&x| norm_cdf(x / sigma)).collect();
    ks_sorted(&cdf, None)
}

/// KS statistic from sorted CDF values, optionally with multiplicities.
fn ks_sorted(cdf: &[f64], counts: Option<&[u32]>) -> f64 {
    let m = match counts {
        Some(c) => c.iter().map(|&v| v as usize).sum(),
        None => cdf.len(),
    };
    let mf = m as f64;
    let mut below = 0usize;
    let mut d = 0f64;
    for (i, &f) in cdf.iter().enumerate() {
        let c = counts.map_or(1, |c| c[i] as usize);
        if c == 0 {
            continue;
        }
        d = d.max(f - below as f64 / mf);
        below += c;
        d = d.max(below as f64 / mf - f);
    }
    d
}

/// Distances with bootstrap standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    pub w1: f64,
    pub w1_se: f64,
    pub ks: f64,
    pub ks_se: f64,
}

/// Both distances and their nonparametric bootstrap standard errors.
///
/// A resample of a sorted sample is the same sorted sample with
/// multiplicities, so each resample costs `O(M)` after one sort.
pub fn distances_with_bootstrap<R: Rng + ?Sized>(samples: &[f64], sigma2: f64, resamples: usize, rng: &mut R) -> DistanceEstimate {
    let s = sorted(samples);
    let m = s.len();
    let sigma = sigma2.sqrt();
    let z = normal_quantiles(m, sigma);
    let cdf: Vec<f64> = s.iter().map(|&x| norm_cdf(x / sigma)).collect();
    let w1 = w1_sorted(&s, &z);
    let ks = ks_sorted(&cdf, None);
    let mut counts = vec![0u32; m];
    let (mut bw, mut bk) = (Vec::with_capacity(resamples), Vec::with_capacity(resamples));
    for _ in 0..resamples {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..m {
            counts[rng.random_range(0..m)] += 1;
        }
        let mut rank = 0usize;
        let mut acc = 0f64;
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                acc += (s[i] - z[rank]).abs();
                rank += 1;
            }
        }
        bw.push(acc / m as f64);
        bk.push(ks_sorted(&cdf, Some(&counts)));
    }
    DistanceEstimate { w1, w1_se: std_dev(&bw), ks, ks_se: std_dev(&bk) }
}

pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
