//! Spectral-quadrature evaluation of fOU covariances, used to validate the
//! closed forms.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_kronrod, tanh_sinh, wynn_epsilon};
use crate::special::gamma;
use crate::Real;

use super::fou::cross_unchecked;

const TOL: f64 = 1e-12;

/// `E[Z^m_0 Z^{m'}_t]` from the cross-spectral density
/// `c_H |λ|^{1-2H} / ((m - iλ)(m' + iλ))`, `c_H = Γ(2H+1) sin(πH) / (2π)`.
///
/// The half line is split at `max(m, m')` and at the first half-period
/// `π/t`; later half-periods are summed and the alternating tail is
/// accelerated with Wynn's epsilon algorithm. Within `1e-4` of `H = 1/2` the
/// closed form is returned.
pub fn fou_cross_cov_spectral<T: Real>(m: T, mp: T, h: T, t: T) -> Result<T> {
    if !(m > T::zero()) || !(mp > T::zero()) || !(h > T::zero() && h < T::one()) {
        return Err(Error::InvalidParameter("need m, m' > 0 and H in (0,1)".into()));
    }
    if (h - T::lit(0.5)).abs() < T::lit(1e-4) {
        return Ok(cross_unchecked(m, mp, h, t));
    }
    let two = T::lit(2.0);
    let c_h = gamma(two * h + T::one()) * (T::PI() * h).sin() / (two * T::PI());
    let e = T::one() - two * h;
    let density = |l: T| {
        let num = (m * mp + l * l) * (l * t).cos() - (mp - m) * l * (l * t).sin();
        l.powf(e) * num / ((m * m + l * l) * (mp * mp + l * l))
    };
    let tol = T::lit(TOL);
    let a = m.max(mp);
    let integral = if t == T::zero() {
        let head = tanh_sinh(density, T::zero(), a, tol)?.value;
        // λ = a/s maps [a, ∞) onto (0, 1]
        let tail = tanh_sinh(|s: T| density(a / s) * a / (s * s), T::zero(), T::one(), tol)?.value;
        head + tail
    } else {
        let period = T::PI() / t.abs();
        let first = if period <= a {
            tanh_sinh(density, T::zero(), period, tol)?.value
        } else {
            tanh_sinh(density, T::zero(), a, tol)?.value + gauss_kronrod(density, a, period, T::zero(), tol, 500)?.value
        };
        let mut partial = Vec::new();
        let mut sum = first;
        let mut k = 1usize;
        let min_pieces = 40usize;
        loop {
            let lo = period * T::of(k);
            let hi = lo + period;
            sum += gauss_kronrod(density, lo, hi, T::lit(1e-300), tol, 200)?.value;
            partial.push(sum);
            k += 1;
            if lo > T::lit(20.0) * a && partial.len() >= min_pieces {
                break;
            }
            if k > 200_000 {
                return Err(Error::Quadrature { achieved: f64::NAN, requested: TOL });
            }
        }
        let window = &partial[partial.len() - min_pieces..];
        let est = wynn_epsilon(window);
        let check = wynn_epsilon(&window[..min_pieces - 2]);
        let scale = est.abs().max(first.abs());
        if (est - check).abs() > T::lit(1e-9) * scale {
            return Err(Error::Quadrature { achieved: ((est - check).abs() / scale).as_f64(), requested: 1e-9 });
        }
        est
    };
    Ok(two * c_h * integral)
}

/// Stationary fOU autocovariance from the spectral representation.
pub fn fou_cov_spectral<T: Real>(theta: T, h: T, t: T) -> Result<T> {
    fou_cross_cov_spectral(theta, theta, h, t)
}
