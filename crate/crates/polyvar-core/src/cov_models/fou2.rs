//! Covariance of the stationary fOU process of the second kind.
//!
//! `r(t) = (2H-1) H^{2H+1} A(t)` with
//! `A(t) = e^{-αt} [β(a, b)/(αH) + ∫_0^{t/H} e^{2αHw} B_{e^{-w}}(a, b) dw]`,
//! `a = 1 + (α-1)H`, `b = 2H - 1`, obtained from the double integral over the
//! time-changed square by doing the inner integral in closed form.

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::quadrature::{fixed_legendre, gauss_jacobi, gauss_kronrod, gauss_legendre, tanh_sinh};
use crate::special::{beta, ln_inc_beta_at_ln};
use crate::Real;

const SEG_TOL: f64 = 1e-13;

fn check<T: Real>(alpha: T, h: T) -> Result<()> {
    if !(h > T::lit(0.5) && h < T::one()) {
        return Err(Error::UnsupportedRegime(format!("FOU2 requires H in (1/2, 1), got {h}")));
    }
    if !(alpha > T::zero()) {
        return Err(Error::InvalidParameter("FOU2 needs alpha > 0".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Fou2Params<T> {
    alpha: T,
    h: T,
    a: T,
    b: T,
    scale: T,
}

impl<T: Real> Fou2Params<T> {
    fn new(alpha: T, h: T) -> Self {
        let a = T::one() + (alpha - T::one()) * h;
        let b = T::lit(2.0) * h - T::one();
        let scale = b * h.powf(T::lit(2.0) * h + T::one());
        Self { alpha, h, a, b, scale }
    }

    fn a0(&self) -> T {
        beta(self.a, self.b) / (self.alpha * self.h)
    }

    /// `e^{-αs} ∫_{w0}^{w1} e^{2αHw} B_{e^{-w}}(a,b) dw`.
    fn segment(&self, s: T, w0: T, w1: T) -> Result<T> {
        let two_ah = T::lit(2.0) * self.alpha * self.h;
        let f = |w: T| (-self.alpha * s + two_ah * w + ln_inc_beta_at_ln(self.a, self.b, -w)).exp();
        let tol = T::lit(SEG_TOL);
        if w0 == T::zero() {
            // B_{e^{-w}} has a w^{2H-1} cusp at w = 0
            Ok(tanh_sinh(f, w0, w1, tol)?.value)
        } else {
            Ok(gauss_kronrod(f, w0, w1, T::zero(), tol, 200)?.value)
        }
    }

    /// `A(t)` for real `t >= 0` by stepping over unit lags.
    fn a_at(&self, t: T) -> Result<T> {
        let mut acc = self.a0();
        let whole = t.floor().to_usize().unwrap_or(0);
        for k in 1..=whole {
            let kk = T::of(k);
            acc = acc * (-self.alpha).exp() + self.segment(kk, (kk - T::one()) / self.h, kk / self.h)?;
        }
        let frac = t - T::of(whole);
        if frac > T::zero() {
            let start = T::of(whole);
            acc = acc * (-self.alpha * frac).exp() + self.segment(t, start / self.h, t / self.h)?;
        }
        Ok(acc)
    }
}

/// `E[S^α_0 S^α_t]` for the stationary fOU process of the second kind.
pub fn fou2_cov<T: Real>(alpha: T, h: T, t: T) -> Result<T> {
    check(alpha, h)?;
    let p = Fou2Params::new(alpha, h);
    Ok(p.scale * p.a_at(t.abs())?)
}

/// Closed-form variance `(2H-1)H^{2H} β(1-H+αH, 2H-1) / α`.
pub fn fou2_variance<T: Real>(alpha: T, h: T) -> T {
    let two = T::lit(2.0);
    (two * h - T::one()) * h.powf(two * h) * beta(T::one() - h + alpha * h, two * h - T::one()) / alpha
}

/// Incrementally extended table of `r(0), r(1), ...`.
#[derive(Debug)]
pub(crate) struct Fou2Table<T> {
    params: Fou2Params<T>,
    acc: Vec<T>,
}

impl<T: Real> Fou2Table<T> {
    pub(crate) fn new(alpha: T, h: T) -> Self {
        let params = Fou2Params::new(alpha, h);
        Self { acc: vec![params.a0()], params }
    }

    pub(crate) fn get(&mut self, k: usize) -> Result<T> {
        let p = self.params;
        while self.acc.len() <= k {
            let j = self.acc.len();
            let jj = T::of(j);
            let prev = *self.acc.last().expect("table starts nonempty");
            let seg = p.segment(jj, (jj - T::one()) / p.h, jj / p.h)?;
            self.acc.push(prev * (-p.alpha).exp() + seg);
        }
        Ok(p.scale * self.acc[k])
    }
}

/// Lag function backed by a shared incremental table, for use as a kernel
/// source.
pub(crate) fn fou2_lag_fn<T: Real>(alpha: T, h: T) -> impl Fn(usize) -> T + Send + Sync + 'static {
    let table = Arc::new(Mutex::new(Fou2Table::new(alpha, h)));
    move |k| {
        let mut guard = table.lock().unwrap_or_else(|e| e.into_inner());
        guard.get(k).unwrap_or_else(|e| {
            log::warn!("fou2 covariance at lag {k} failed: {e}");
            T::nan()
        })
    }
}

/// Nodes and weights for `∫_0^1 s^p (1-s)^q g(s) ds`.
fn jacobi01<T: Real>(n: usize, p: T, q: T) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_jacobi(n, q, p);
    let scale = T::lit(2.0).powf(p + q + T::one());
    let nodes = x.iter().map(|&xi| (xi + T::one()) / T::lit(2.0)).collect();
    let weights = w.iter().map(|&wi| wi / scale).collect();
    (nodes, weights)
}

/// Independent evaluation of `fou2_cov` by Gauss-Jacobi quadrature on the
/// double integral: the diagonal singularity is factored by the ratio
/// substitution and every remaining algebraic endpoint weight is absorbed
/// into a Jacobi rule.
pub fn fou2_cov_quadrature<T: Real>(alpha: T, h: T, t: T) -> Result<T> {
    check(alpha, h)?;
    let t = t.abs();
    let one = T::one();
    let two = T::lit(2.0);
    let n = 48;
    let c = (alpha - one) * h;
    let b = two * h - one;
    let rate = two * alpha * h;

    // J(1) = 2 ∫_0^1 x^{2c+2H-1} dx ∫_0^1 s^c (1-s)^{2H-2} ds
    let (_, wx) = jacobi01(n, two * c + two * h - one, T::zero());
    let (_, ws) = jacobi01(n, c, two * h - two);
    let j1 = two * wx.iter().copied().sum::<T>() * ws.iter().copied().sum::<T>();
    let beta_ab: T = ws.iter().copied().sum();

    let upper = t / h;
    let ln2 = two.ln();
    let mut s = T::zero();
    let mut tail_scaled = T::zero();

    // u in [0, min(upper, ln 2)]: F(e^{-u}) = β - (1-e^{-u})^{2H-1} G(e^{-u}),
    // G(z) = ∫_0^1 τ^{2H-2} (1 - (1-z)τ)^c dτ
    let u1 = upper.min(ln2);
    if u1 > T::zero() {
        let (tau, wt) = jacobi01(n, two * h - two, T::zero());
        let g = |z: T| tau.iter().zip(&wt).map(|(&ta, &w)| w * (one - (one - z) * ta).powf(c)).sum::<T>();
        let leg = gauss_legendre(n);
        let smooth = fixed_legendre(&leg, T::zero(), u1, |u| (rate * u).exp()) * beta_ab;
        // ∫_0^{u1} u^{2H-1} [((1-e^{-u})/u)^{2H-1} e^{rate u} G(e^{-u})] du
        let (v, wv) = jacobi01(n, b, T::zero());
        let singular = u1.powf(two * h)
            * v.iter()
                .zip(&wv)
                .map(|(&vi, &w)| {
                    let u = u1 * vi;
                    let ratio = -(-u).exp_m1() / u;
                    w * ratio.powf(b) * (rate * u).exp() * g((-u).exp())
                })
                .sum::<T>();
        s += smooth - singular;
    }

    // u > ln 2: F(z) = z^{c+1} ∫_0^1 σ^c (1 - zσ)^{2H-2} dσ
    if upper > ln2 {
        let (sig, wsig) = jacobi01(n, c, T::zero());
        let f = |z: T| z.powf(c + one) * sig.iter().zip(&wsig).map(|(&si, &w)| w * (one - z * si).powf(two * h - two)).sum::<T>();
        let leg = gauss_legendre(24);
        let panels = ((upper - ln2).ceil().to_usize().unwrap_or(1)).max(1);
        let width = (upper - ln2) / T::of(panels);
        for i in 0..panels {
            let lo = ln2 + width * T::of(i);
            let hi = lo + width;
            tail_scaled += fixed_legendre(&leg, lo, hi, |u| (rate * u - alpha * t).exp() * f((-u).exp()));
        }
    }

    let scale = b * h.powf(two * h + one);
    Ok(scale * ((-alpha * t).exp() * (j1 + s) + tail_scaled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn variance_matches_beta_form() {
        assert_relative_eq!(fou2_cov(1.0, 0.75, 0.0).unwrap(), 0.649_519_052_8, max_relative = 1e-9);
        for &(a, h) in &[(2.0, 0.75), (0.5, 0.6), (3.0, 0.9)] {
            assert_relative_eq!(fou2_cov(a, h, 0.0).unwrap(), fou2_variance(a, h), max_relative = 1e-12);
        }
    }

    #[test]
    fn quadrature_route_agrees() {
        for &(a, h) in &[(1.0, 0.75), (0.5, 0.6), (2.0, 0.9)] {
            for &t in &[0.0, 0.5, 1.0, 2.0, 5.0] {
                let x = fou2_cov(a, h, t).unwrap();
                let y = fou2_cov_quadrature(a, h, t).unwrap();
                assert_relative_eq!(x, y, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn table_matches_direct() {
        let mut table = Fou2Table::new(1.3, 0.7);
        for k in [0usize, 1, 4, 9] {
            assert_relative_eq!(table.get(k).unwrap(), fou2_cov(1.3, 0.7, k as f64).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_short_memory() {
        assert!(matches!(fou2_cov(1.0, 0.5, 0.0), Err(Error::UnsupportedRegime(_))));
    }
}
