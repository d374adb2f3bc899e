//! Log-log slope fitting.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{HarnessError, Result};

/// Weighted least-squares line through `(ln n, ln d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci95: (f64, f64),
    pub r2: f64,
    pub points: usize,
}

/// One grid point: `n`, the distance and its standard error (0 for none).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub n: f64,
    pub distance: f64,
    pub se: f64,
}

/// Fit `ln d = a + b ln n`, weighting each point by `(d / se)²`, the inverse
/// delta-method variance of `ln d`. Points with zero or missing standard
/// errors get unit relative weight.
pub fn rate_fit(points: &[RatePoint]) -> Result<RateFit> {
    let kept: Vec<&RatePoint> = points.iter().filter(|p| p.distance > 0.0 && p.distance.is_finite() && p.n > 0.0).collect();
    if kept.len() < points.len() {
        log::warn!("rate_fit: dropped {} nonpositive distances", points.len() - kept.len());
    }
    if kept.len() < 4 {
        return Err(HarnessError::Config(format!("rate fit needs at least 4 points, got {}", kept.len())));
    }
    let (lo, hi) = kept.iter().fold((f64::INFINITY, 0f64), |(a, b), p| (a.min(p.n), b.max(p.n)));
    if (hi / lo).log10() < 1.5 - 1e-9 {
        return Err(HarnessError::Config("rate fit needs the grid to span at least 1.5 decades".into()));
    }
    let x: Vec<f64> = kept.iter().map(|p| p.n.ln()).collect();
    let y: Vec<f64> = kept.iter().map(|p| p.distance.ln()).collect();
    let rel: Vec<f64> = kept.iter().map(|p| if p.se > 0.0 { p.se / p.distance } else { 0.0 }).collect();
    let floor = rel.iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = rel.iter().map(|&r| if r > 0.0 { 1.0 / (r * r) } else if floor.is_finite() { 1.0 / (floor * floor) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(a, b)| a * (b - xm).powi(2)).sum();
    let sxy: f64 = w.iter().zip(&x).zip(&y).map(|((a, b), c)| a * (b - xm) * (c - ym)).sum();
    let syy: f64 = w.iter().zip(&y).map(|(a, c)| a * (c - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = w.iter().zip(&x).zip(&y).map(|((a, b), c)| a * (c - intercept - slope * b).powi(2)).sum();
    let df = (kept.len() - 2) as f64;
    let se = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).map(|d| d.inverse_cdf(0.975)).unwrap_or(1.96);
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit { slope, intercept, ci95: (slope - t * se, slope + t * se), r2, points: kept.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(b: f64) -> Vec<RatePoint> {
        (8..=13).map(|k| {
            let n = (1u64 << k) as f64;
            RatePoint { n, distance: 3.0 * n.powf(b), se: 0.0 }
        }).collect()
    }

    #[test]
    fn exact_power_laws() {
        let f = rate_fit(&pts(-0.5)).unwrap();
        assert_relative_eq!(f.slope, -0.5, epsilon = 1e-12);
        assert_relative_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 3f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(rate_fit(&pts(-0.3)).unwrap().slope, -0.3, epsilon = 1e-12);
    }

    #[test]
    fn rejects_short_grids() {
        assert!(rate_fit(&pts(-0.5)[..3]).is_err());
        let narrow: Vec<RatePoint> = (0..5).map(|k| RatePoint { n: 100.0 + k as f64, distance: 1.0, se: 0.0 }).collect();
        assert!(rate_fit(&narrow).is_err());
        let mut p = pts(-0.5);
        p.push(RatePoint { n: 20000.0, distance: 0.0, se: 0.0 });
        assert_eq!(rate_fit(&p).unwrap().points, 6);
    }
}
