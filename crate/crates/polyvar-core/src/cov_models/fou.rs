//! Closed-form covariances of stationary fractional OU processes driven by a
//! common fractional Brownian motion.

use crate::error::{Error, Result};
use crate::special::{exp_weighted_lower, gamma, upper_gamma_scaled};
use crate::Real;

fn check_drift_hurst<T: Real>(m: T, mp: T, h: T) -> Result<()> {
    if !(m > T::zero()) || !(mp > T::zero()) {
        return Err(Error::InvalidParameter("drifts must be positive".into()));
    }
    if !(h > T::zero() && h < T::one()) {
        return Err(Error::InvalidParameter("H must lie in (0,1)".into()));
    }
    Ok(())
}

/// `E[Z^m_0 Z^{m'}_t]` where `Z^m` is the stationary fOU process with drift
/// `m` driven by the same fBm as `Z^{m'}`.
///
/// For `t >= 0`, with `s = 2H`,
/// `E = (m^{1-s} s e^{mt}Γ(s, mt) + m'^{1-s}(Γ(s+1)e^{-m't} - s D(s, m't))) / (2(m+m'))`
/// where `D(s, x) = e^{-x} ∫_0^x e^w w^{s-1} dw`; negative `t` swaps the drifts.
/// When both `mt` and `m't` are large the terms are combined through their
/// joint asymptotic series to avoid cancellation of the leading `t^{s-1}`.
pub fn fou_cross_cov<T: Real>(m: T, mp: T, h: T, t: T) -> Result<T> {
    check_drift_hurst(m, mp, h)?;
    Ok(cross_unchecked(m, mp, h, t))
}

pub(crate) fn cross_unchecked<T: Real>(m: T, mp: T, h: T, t: T) -> T {
    if t < T::zero() {
        return cross_unchecked(mp, m, h, -t);
    }
    let two = T::lit(2.0);
    if h == T::lit(0.5) {
        return (-mp * t).exp() / (m + mp);
    }
    let s = two * h;
    let x1 = m * t;
    let x2 = mp * t;
    let threshold = -T::epsilon().ln() + T::lit(4.0);
    if x1 > threshold && x2 > threshold {
        return joint_asymptotic(m, mp, s, t, x1, x2);
    }
    let p = s * upper_gamma_scaled(s, x1);
    let q = gamma(s + T::one()) * (-x2).exp() - s * exp_weighted_lower(s, x2);
    (m.powf(T::one() - s) * p + mp.powf(T::one() - s) * q) / (two * (m + mp))
}

/// `Σ_{k≥2} (s)_k t^s [m x1^{-k} + (-1)^k m' x2^{-k}] / (2(m+m'))` with the
/// falling factorial `(s)_k`, truncated at the smallest term.
fn joint_asymptotic<T: Real>(m: T, mp: T, s: T, t: T, x1: T, x2: T) -> T {
    let mut falling = s * (s - T::one());
    let mut p1 = T::one() / (x1 * x1);
    let mut p2 = T::one() / (x2 * x2);
    let mut sum = T::zero();
    let mut last = T::infinity();
    for k in 2..400usize {
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        let term = falling * (m * p1 + sign * mp * p2);
        let size = (falling * (p1.max(p2))).abs();
        if size > last {
            break;
        }
        sum += term;
        if size <= T::epsilon() * sum.abs() * T::lit(0.01) {
            break;
        }
        last = size;
        falling *= s - T::of(k);
        if falling == T::zero() {
            break;
        }
        p1 /= x1;
        p2 /= x2;
    }
    t.powf(s) * sum / (T::lit(2.0) * (m + mp))
}

/// Stationary fOU autocovariance `r(t) = E[Z_0 Z_t]` for drift `theta`.
pub fn fou_cov<T: Real>(theta: T, h: T, t: T) -> Result<T> {
    fou_cross_cov(theta, theta, h, t)
}

/// `Var(Z^θ_0) = HΓ(2H)θ^{-2H}`.
pub fn fou_variance<T: Real>(theta: T, h: T) -> T {
    h * gamma(T::lit(2.0) * h) * theta.powf(-T::lit(2.0) * h)
}

/// Closed-form variance of the stationary part of the OUFOU process.
pub fn oufou_eta_x<T: Real>(theta: T, rho: T, h: T) -> T {
    let two = T::lit(2.0);
    let e = two - two * h;
    h * gamma(two * h) * (rho.powf(e) - theta.powf(e)) / (rho * rho - theta * theta)
}

/// Closed-form variance of the stationary part of the companion process.
pub fn oufou_eta_sigma<T: Real>(theta: T, rho: T, h: T) -> T {
    let two = T::lit(2.0);
    let e = -two * h;
    h * gamma(two * h) * (theta.powf(e) - rho.powf(e)) / (rho * rho - theta * theta)
}

/// The 2x2 lag covariance `C(t)_{ab} = E[Z^{a}_0 Z^{b}_t]` of the pair
/// `(Z^θ, Z^ρ)`.
pub fn fou_pair_cov<T: Real>(theta: T, rho: T, h: T, t: T) -> [[T; 2]; 2] {
    [
        [cross_unchecked(theta, theta, h, t), cross_unchecked(theta, rho, h, t)],
        [cross_unchecked(rho, theta, h, t), cross_unchecked(rho, rho, h, t)],
    ]
}

/// Covariances of `Z^{θ,ρ} = (ρZ^ρ - θZ^θ)/(ρ-θ)` and `Σ^{θ,ρ} = (Z^θ - Z^ρ)/(ρ-θ)`
/// at lag `t`: returns `(E[Z_0 Z_t], E[Σ_0 Σ_t], E[Z_0 Σ_t])`.
pub fn oufou_cov_at<T: Real>(theta: T, rho: T, h: T, t: T) -> (T, T, T) {
    let c = fou_pair_cov(theta, rho, h, t);
    let (tt, tr, rt, rr) = (c[0][0], c[0][1], c[1][0], c[1][1]);
    let d = rho - theta;
    let d2 = d * d;
    let kz = (rho * rho * rr - rho * theta * (rt + tr) + theta * theta * tt) / d2;
    let ks = (tt - tr - rt + rr) / d2;
    // E[(ρZ^ρ_0 - θZ^θ_0)(Z^θ_t - Z^ρ_t)]
    let cross = (rho * rt - rho * rr - theta * tt + theta * tr) / d2;
    (kz, ks, cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn variance_examples() {
        assert_relative_eq!(fou_cov(1.0, 0.75, 0.0).unwrap(), 0.664_670_194_1, max_relative = 1e-9);
        assert_relative_eq!(fou_cov(2.0, 0.5, 1.0).unwrap(), (-2f64).exp() / 4.0, max_relative = 1e-14);
        let exact = 0.75 * gamma(1.5f64) / 3.0 * (1.0 + 2f64.powf(-0.5));
        assert_relative_eq!(fou_cross_cov(1.0, 2.0, 0.75, 0.0).unwrap(), exact, max_relative = 1e-13);
        assert_relative_eq!(exact, 0.378_220_998_5, max_relative = 1e-9);
    }

    #[test]
    fn near_half_is_continuous() {
        // the H(2H-1) t^{2H-2} tail is not uniform in t, so stay at moderate lags
        for &t in &[0.0, 0.5, 3.0, 8.0] {
            let a = fou_cross_cov(1.3f64, 0.7, 0.5, t).unwrap();
            let b = fou_cross_cov(1.3f64, 0.7, 0.5 + 1e-9, t).unwrap();
            assert!((a - b).abs() < 1e-8, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn asymptotic_switch_is_seamless() {
        let thr = -f64::EPSILON.ln() + 4.0;
        for &(m, mp, h) in &[(1.0, 1.0, 0.75), (1.0, 2.0, 0.3), (0.7, 1.1, 0.9)] {
            let t = thr / f64::min(m, mp);
            let a = cross_unchecked(m, mp, h, t * (1.0 - 1e-9));
            let b = cross_unchecked(m, mp, h, t * (1.0 + 1e-9));
            assert_relative_eq!(a, b, max_relative = 1e-7);
        }
    }

    #[test]
    fn large_lag_asymptote() {
        let t = 1e4f64;
        let r = fou_cov(1.0, 0.75, t).unwrap();
        assert_relative_eq!(r / t.powf(-0.5), 0.375, max_relative = 1e-3);
        let r = fou_cross_cov(1.0, 2.0, 0.75, t).unwrap();
        assert_relative_eq!(r / t.powf(-0.5), 0.1875, max_relative = 1e-3);
    }

    #[test]
    fn oufou_closed_forms_and_orthogonality() {
        let (kz, ks, cross) = oufou_cov_at(1.0f64, 2.0, 0.7, 0.0);
        assert_relative_eq!(kz, oufou_eta_x(1.0, 2.0, 0.7), max_relative = 1e-12);
        assert_relative_eq!(ks, oufou_eta_sigma(1.0, 2.0, 0.7), max_relative = 1e-12);
        assert!(cross.abs() < 1e-14);
        let expected = 0.7 * gamma(1.4f64) * (2f64.powf(0.6) - 1.0) / 3.0;
        assert_relative_eq!(kz, expected, max_relative = 1e-12);
    }
}
