//! Autocovariance kernels for the supported process families, summability
//! diagnostics and finite-difference transforms.

mod fou;
mod fou2;
mod kernel;
mod spectral;

use serde::{Deserialize, Serialize};

pub use fou::{fou_cov, fou_cross_cov, fou_pair_cov, fou_variance, oufou_cov_at, oufou_eta_sigma, oufou_eta_x};
pub use fou2::{fou2_cov, fou2_cov_quadrature, fou2_variance};
pub use kernel::{CovKernel, KernelMeta, ProcessModel, Tail};
pub use spectral::{fou_cov_spectral, fou_cross_cov_spectral};

use crate::error::{Error, Result};
use crate::special::ln_binomial;
use crate::Real;

/// Fractional Gaussian noise autocovariance
/// `(σ²/2)(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H})`.
pub fn fgn_cov<T: Real>(h: T, sigma2: T, k: i64) -> T {
    let two = T::lit(2.0);
    let e = two * h;
    let k = k.unsigned_abs();
    if k == 0 {
        return sigma2;
    }
    let kf = T::of(k as usize);
    if k < 16 {
        return sigma2 / two * ((kf + T::one()).powf(e) - two * kf.powf(e) + (kf - T::one()).powf(e));
    }
    // σ² k^{2H} Σ_{j≥1} C(2H, 2j) k^{-2j}, free of the cancellation above
    let x2 = T::one() / (kf * kf);
    let mut coef = e * (e - T::one()) / two;
    let mut pow = x2;
    let mut sum = T::zero();
    for j in 1..40usize {
        let term = coef * pow;
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
        let jj = T::of(2 * j);
        coef = coef * (e - jj) * (e - jj - T::one()) / ((jj + T::one()) * (jj + two));
        pow *= x2;
    }
    sigma2 * kf.powf(e) * sum
}

fn hurst_ok<T: Real>(h: T) -> Result<()> {
    if h > T::zero() && h < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("H must lie in (0,1), got {h}")))
    }
}

/// Kernel of fractional Gaussian noise.
pub fn fgn_kernel<T: Real>(h: T, sigma2: T) -> Result<CovKernel<T>> {
    hurst_ok(h)?;
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    let two = T::lit(2.0);
    let tail = if h == T::lit(0.5) {
        Tail::Finite { last: 0 }
    } else {
        Tail::Power { constant: sigma2 * h * (two * h - T::one()), exponent: two - two * h }
    };
    let meta = KernelMeta::new("fgn", &[("H", h.as_f64()), ("sigma2", sigma2.as_f64())]);
    CovKernel::from_fn(meta, Some(tail), move |k| fgn_cov(h, sigma2, k as i64))
}

/// Kernel of the stationary fOU process with drift `theta`.
pub fn fou_kernel<T: Real>(theta: T, h: T) -> Result<CovKernel<T>> {
    fou_cov(theta, h, T::zero())?;
    let two = T::lit(2.0);
    let tail = if h == T::lit(0.5) {
        Tail::Exponential { rate: theta }
    } else {
        Tail::Power { constant: h * (two * h - T::one()) / (theta * theta), exponent: two - two * h }
    };
    let meta = KernelMeta::new("fou", &[("theta", theta.as_f64()), ("H", h.as_f64())]);
    CovKernel::from_fn(meta, Some(tail), move |k| fou::cross_unchecked(theta, theta, h, T::of(k)))
}

/// Kernel of the stationary fOU process of the second kind.
pub fn fou2_kernel<T: Real>(alpha: T, h: T) -> Result<CovKernel<T>> {
    ProcessModel::Fou2 { alpha, hurst: h }.validate()?;
    let rate = alpha.min((T::one() - h) / h);
    let meta = KernelMeta::new("fou2", &[("alpha", alpha.as_f64()), ("H", h.as_f64())]);
    CovKernel::from_fn(meta, Some(Tail::Exponential { rate }), fou2::fou2_lag_fn(alpha, h))
}

/// Lag cross-covariance `E[Z^{θ,ρ}_0 Σ^{θ,ρ}_t]` (signed lag).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCov<T> {
    pub theta: T,
    pub rho: T,
    pub hurst: T,
}

impl<T: Real> CrossCov<T> {
    pub fn eval(&self, lag: i64) -> T {
        if lag == 0 {
            return T::zero();
        }
        oufou_cov_at(self.theta, self.rho, self.hurst, T::of_i64(lag)).2
    }
}

/// Kernels of the stationary parts of the OUFOU process and its companion.
#[derive(Debug, Clone)]
pub struct OufouKernels<T: Real> {
    pub k_z: CovKernel<T>,
    pub k_sigma: CovKernel<T>,
    pub cross: CrossCov<T>,
    pub eta_x: T,
    pub eta_sigma: T,
}

/// Build [`OufouKernels`] from `fou_cross_cov` combinations.
pub fn oufou_kernels<T: Real>(theta: T, rho: T, h: T) -> Result<OufouKernels<T>> {
    ProcessModel::Oufou { theta, rho, hurst: h }.validate()?;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let (tail_z, tail_s) = if h == T::lit(0.5) {
        let r = Tail::Exponential { rate: theta.min(rho) };
        (r, r)
    } else {
        let b = two * h;
        let tz = Tail::Power {
            constant: -b * (b - T::one()) * (b - two) * (b - three) / (two * rho * rho * theta * theta),
            exponent: T::lit(4.0) - b,
        };
        let ts = Tail::Power { constant: h * (b - T::one()) / (theta * rho * theta * rho), exponent: two - b };
        (tz, ts)
    };
    let params = [("theta", theta.as_f64()), ("rho", rho.as_f64()), ("H", h.as_f64())];
    let k_z = CovKernel::from_fn(KernelMeta::new("oufou_z", &params), Some(tail_z), move |k| {
        oufou_cov_at(theta, rho, h, T::of(k)).0
    })?;
    let k_sigma = CovKernel::from_fn(KernelMeta::new("oufou_sigma", &params), Some(tail_s), move |k| {
        oufou_cov_at(theta, rho, h, T::of(k)).1
    })?;
    Ok(OufouKernels {
        eta_x: k_z.r0(),
        eta_sigma: k_sigma.r0(),
        k_z,
        k_sigma,
        cross: CrossCov { theta, rho, hurst: h },
    })
}

/// Kernel of the observed stationary sequence of a model (for OUFOU, the
/// `Z^{θ,ρ}` part).
pub fn model_kernel<T: Real>(model: &ProcessModel<T>) -> Result<CovKernel<T>> {
    model.validate()?;
    match *model {
        ProcessModel::Fgn { hurst, sigma2 } => fgn_kernel(hurst, sigma2),
        ProcessModel::Fou { theta, hurst } => fou_kernel(theta, hurst),
        ProcessModel::Oufou { theta, rho, hurst } => Ok(oufou_kernels(theta, rho, hurst)?.k_z),
        ProcessModel::Fou2 { alpha, hurst } => fou2_kernel(alpha, hurst),
        ProcessModel::Tabulated => Err(Error::Argument("tabulated models carry their own kernel".into())),
    }
}

/// Kernel of the `p`-th forward difference of the sequence:
/// `r^{(1)}(k) = 2r(k) - r(k+1) - r(k-1)`, applied `p` times.
pub fn finite_diff_kernel<T: Real>(kernel: &CovKernel<T>, p: usize) -> Result<CovKernel<T>> {
    if p == 0 {
        return Ok(kernel.clone());
    }
    // r^{(p)}(k) = Σ_j (-1)^j C(2p, p+j) r(k+j)
    let weights: Vec<(i64, T)> = (-(p as i64)..=(p as i64))
        .map(|j| {
            let c = ln_binomial::<T>(2 * p, (p as i64 + j) as usize).exp().round();
            (j, if j % 2 == 0 { c } else { -c })
        })
        .collect();
    let base = kernel.clone();
    let f = move |k: usize| weights.iter().map(|&(j, w)| w * base.eval(k as i64 + j)).sum::<T>();
    let last = kernel.max_tabulated_lag().saturating_sub(p);
    let values: Vec<T> = (0..=last).map(&f).collect();
    let tail = kernel.tail().map(|t| match t {
        Tail::Power { mut constant, mut exponent } => {
            for _ in 0..p {
                constant = -constant * exponent * (exponent + T::one());
                exponent += T::lit(2.0);
            }
            Tail::Power { constant, exponent }
        }
        Tail::Finite { last } => Tail::Finite { last: last + p },
        other => other,
    });
    let mut meta = kernel.meta().clone();
    meta.diff_order += p;
    let out = if kernel.has_source() || matches!(kernel.tail(), Some(Tail::Power { .. })) {
        CovKernel::with_source(values, tail, meta, f)?
    } else {
        // a finite table: differences vanish beyond last + p
        let full = kernel.max_tabulated_lag() + p;
        let values: Vec<T> = (0..=full).map(&f).collect();
        CovKernel::tabulated(values, tail, meta)?
    };
    Ok(out)
}

/// Breuer-Major diagnostics for a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport<T> {
    /// `2 Σ_{|j| ≤ nmax} r(j)²`.
    pub u_f2_partial: T,
    pub bm_satisfied: bool,
    pub nmax: usize,
    pub tail: Option<Tail<T>>,
    /// Largest `ε` with `Σ_{|j|<n} r(j)² ≤ n^{1-ε}` for large `n`.
    pub consistency_eps: Option<T>,
    r_nmax: T,
}

impl<T: Real> SummabilityReport<T> {
    /// Upper estimate of `Σ_{|j|>n} r(j)^{2k}` from the declared tail.
    /// Infinite when the series diverges.
    pub fn tail_bound(&self, n: usize, k: usize) -> T {
        let two = T::lit(2.0);
        let pw = T::of(2 * k);
        match self.tail {
            Some(Tail::Power { constant, exponent }) => {
                let e = pw * exponent;
                if e <= T::one() {
                    return T::infinity();
                }
                // 2 Σ_{j>n} |c|^{2k} j^{-2kα} ≤ 2 |c|^{2k} n^{1-2kα} / (2kα - 1)
                two * constant.abs().powf(pw) * T::of(n.max(1)).powf(T::one() - e) / (e - T::one())
            }
            Some(Tail::Exponential { rate }) => {
                // geometric majorant anchored at the last checked lag
                let anchor = self.r_nmax.abs().max(T::min_positive_value());
                let shift = T::of(n) - T::of(self.nmax);
                let r_n = anchor * (-rate * shift).exp();
                let q = (-pw * rate).exp();
                two * r_n.powf(pw) * q / (T::one() - q)
            }
            Some(Tail::Finite { last }) => {
                if n >= last {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            None => T::nan(),
        }
    }
}

/// Partial sums and convergence verdict for `Σ r(j)²`.
pub fn summability_report<T: Real>(kernel: &CovKernel<T>, nmax: usize) -> Result<SummabilityReport<T>> {
    if nmax < 16 {
        return Err(Error::Argument("nmax must be at least 16".into()));
    }
    let r0 = kernel.r0();
    let tail_sq: T = (1..=nmax).map(|j| kernel.eval(j as i64).powi(2)).sum();
    let u = T::lit(2.0) * (r0 * r0 + T::lit(2.0) * tail_sq);
    let half: T = (1..=nmax / 2).map(|j| kernel.eval(j as i64).powi(2)).sum();
    let (bm, eps) = match kernel.tail() {
        Some(Tail::Power { exponent, .. }) => (exponent > T::lit(0.5), Some((T::lit(2.0) * exponent).min(T::one()))),
        Some(_) => (true, Some(T::one())),
        None => ((tail_sq - half) <= T::lit(1e-3) * (r0 * r0 + tail_sq), None),
    };
    Ok(SummabilityReport {
        u_f2_partial: u,
        bm_satisfied: bm,
        nmax,
        tail: kernel.tail(),
        consistency_eps: eps,
        r_nmax: kernel.eval(nmax as i64),
    })
}
