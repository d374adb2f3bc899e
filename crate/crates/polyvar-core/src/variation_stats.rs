//! Polynomial variation statistics and their exact moments.

use serde::{Deserialize, Serialize};

use crate::cov_models::{CovKernel, Tail};
use crate::error::{Error, Result};
use crate::exact_sampler::SamplePath;
use crate::hermite_basis::HermitePoly;
use crate::special::factorial;
use crate::Real;

/// Statistics of one path together with exact moments from the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport<T> {
    pub n: usize,
    #[serde(rename = "Q")]
    pub q_stat: T,
    pub lambda: T,
    /// `U = √n (Q - λ)`.
    #[serde(rename = "U")]
    pub u_stat: T,
    /// `E[U²]`.
    pub var_u_exact: T,
    /// `lim E[U²]`; `None` when the series diverges.
    pub u_limit: Option<T>,
    /// Exact cumulants of `U` for `f(x) = x²`.
    pub kappa2: T,
    pub kappa3: T,
    pub kappa4: T,
    /// `F = U / √E[U²]`.
    #[serde(rename = "F")]
    pub f_stat: T,
}

/// `(1/n) Σ f(x_i)`.
pub fn q_variation<T: Real>(values: &[T], poly: &HermitePoly<T>) -> T {
    if values.is_empty() {
        return T::nan();
    }
    values.iter().map(|&x| poly.eval(x)).sum::<T>() / T::of(values.len())
}

/// `(1/n') Σ_{i=i0}^{i0+n'-1} f(x_i)`.
pub fn trimmed_variation<T: Real>(values: &[T], poly: &HermitePoly<T>, i0: usize, n_prime: usize) -> Result<T> {
    let end = i0.checked_add(n_prime).filter(|&e| e <= values.len() && n_prime > 0);
    match end {
        Some(end) => Ok(q_variation(&values[i0..end], poly)),
        None => Err(Error::Bounds { start: i0, end: i0.saturating_add(n_prime), len: values.len() }),
    }
}

/// `p`-th order forward differences (length `n - p`).
pub fn finite_diff<T: Real>(values: &[T], p: usize) -> Vec<T> {
    let mut v = values.to_vec();
    for _ in 0..p {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    v
}

/// Differenced path with updated metadata.
pub fn finite_diff_path<T: Real>(path: &SamplePath<T>, p: usize) -> Result<SamplePath<T>> {
    if path.len() <= p {
        return Err(Error::Bounds { start: 0, end: p + 1, len: path.len() });
    }
    let mut out = path.clone();
    out.values = finite_diff(&path.values, p);
    out.companion = path.companion.as_ref().map(|c| finite_diff(c, p));
    out.diff_order += p;
    Ok(out)
}

fn chaos_weights<T: Real>(poly: &HermitePoly<T>) -> Vec<(usize, T)> {
    poly.coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, d)| **d != T::zero())
        .map(|(k, &d)| (k, d * d * factorial::<T>(2 * k)))
        .collect()
}

/// `E[U²] = Σ_{k≥1} d[k]² (2k)! (1 + 2 Σ_{j=1}^{n-1} (1 - j/n) ρ(j)^{2k})`,
/// `ρ = r / r(0)`.
pub fn exact_var_u<T: Real>(poly: &HermitePoly<T>, kernel: &CovKernel<T>, n: usize) -> T {
    let r0 = kernel.r0();
    let nf = T::of(n.max(1));
    let rho: Vec<T> = (1..n).map(|j| kernel.eval(j as i64) / r0).collect();
    chaos_weights(poly)
        .into_iter()
        .map(|(k, w)| {
            let s: T = rho.iter().enumerate().map(|(j, &p)| (T::one() - T::of(j + 1) / nf) * p.powi(2 * k as i32)).sum();
            w * (T::one() + T::lit(2.0) * s)
        })
        .sum()
}

/// `Σ_{j∈Z} ρ(j)^{2k}` with the tail beyond the summed range estimated from
/// the kernel's declared tail. `None` when the series diverges.
pub fn lag_power_sum<T: Real>(kernel: &CovKernel<T>, k: usize, tol: T) -> Option<T> {
    let r0 = kernel.r0();
    let pw = (2 * k) as i32;
    let two = T::lit(2.0);
    let partial = |lo: usize, hi: usize| -> T { (lo..hi).map(|j| (kernel.eval(j as i64) / r0).powi(pw)).sum() };
    match kernel.tail() {
        Some(Tail::Power { constant, exponent }) => {
            let e = T::of(2 * k) * exponent;
            if e <= T::one() {
                return None;
            }
            let c = (constant / r0).abs().powi(pw);
            // tail beyond N by the midpoint integral 2c (N + 1/2)^{1-e}/(e-1),
            // with c measured at N; the gap to the declared constant gauges
            // the error
            let tail = |c: T, nn: usize| two * c * (T::of(nn) + T::lit(0.5)).powf(T::one() - e) / (e - T::one());
            let measured = |nn: usize| (kernel.eval(nn as i64) / r0).powi(pw) * T::of(nn).powf(e);
            let mut n_cut = 1024usize;
            let mut sum = partial(1, n_cut + 1);
            while (tail(measured(n_cut), n_cut) - tail(c, n_cut)).abs() > tol && n_cut < (1 << 22) {
                sum += partial(n_cut + 1, 2 * n_cut + 1);
                n_cut *= 2;
            }
            Some(T::one() + two * sum + tail(measured(n_cut), n_cut))
        }
        Some(Tail::Finite { last }) => Some(T::one() + two * partial(1, last + 1)),
        Some(Tail::Exponential { .. }) | None => {
            let limit = match kernel.tail() {
                None => kernel.max_tabulated_lag() + 1,
                _ => 1 << 24,
            };
            let mut sum = T::zero();
            let mut small = 0;
            let mut j = 1usize;
            while j < limit {
                let v = (kernel.eval(j as i64) / r0).powi(pw);
                sum += v;
                small = if v.abs() < tol * T::lit(1e-3) { small + 1 } else { 0 };
                if small >= 32 {
                    break;
                }
                j += 1;
            }
            Some(T::one() + two * sum)
        }
    }
}

/// `u_f = lim E[U²] = Σ_{k≥1} d[k]² (2k)! Σ_{j∈Z} ρ(j)^{2k}`; `None` when
/// the Breuer-Major series diverges.
pub fn u_limit<T: Real>(poly: &HermitePoly<T>, kernel: &CovKernel<T>, tol: T) -> Option<T> {
    let mut total = T::zero();
    for (k, w) in chaos_weights(poly) {
        total += w * lag_power_sum(kernel, k, tol / w.max(T::one()))?;
    }
    Some(total)
}

/// Exact cumulants of `U_{f,n}` for `f(x) = x²`, with normalized versions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cumulants<T> {
    pub kappa2: T,
    pub kappa3: T,
    pub kappa4: T,
}

impl<T: Real> Cumulants<T> {
    /// `κ₃(F) = κ₃ / κ₂^{3/2}`.
    pub fn kappa3_f(&self) -> T {
        self.kappa3 / self.kappa2.powf(T::lit(1.5))
    }

    /// `κ₄(F) = κ₄ / κ₂²`.
    pub fn kappa4_f(&self) -> T {
        self.kappa4 / (self.kappa2 * self.kappa2)
    }
}

/// How `tr(R³)` and `tr(R⁴)` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    /// Dense for `n <= 512`, recurrence above.
    #[default]
    Auto,
    Dense,
    /// Diagonal walk of the displacement recurrence of `R²`.
    Recurrence,
}

/// Largest `n` handled densely by [`TraceMethod::Auto`].
pub const DENSE_TRACE_MAX: usize = 512;

/// `(tr R², tr R³, tr R⁴)` for the Toeplitz matrix of `r(0..n)`.
pub fn toeplitz_traces<T: Real>(r: &[T], method: TraceMethod) -> (T, T, T) {
    let n = r.len();
    let two = T::lit(2.0);
    let tr2 = T::of(n) * r[0] * r[0] + two * (1..n).map(|j| T::of(n - j) * r[j] * r[j]).sum::<T>();
    let dense = match method {
        TraceMethod::Auto => n <= DENSE_TRACE_MAX,
        TraceMethod::Dense => true,
        TraceMethod::Recurrence => false,
    };
    let t = |m: i64| r[m.unsigned_abs() as usize];
    let (tr3, tr4) = if dense {
        let mut s = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let v: T = (0..n).map(|k| t(i as i64 - k as i64) * t(k as i64 - j as i64)).sum();
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
        let mut tr3 = T::zero();
        let mut tr4 = T::zero();
        for i in 0..n {
            for j in 0..n {
                let v = s[i * n + j];
                tr3 += t(i as i64 - j as i64) * v;
                tr4 += v * v;
            }
        }
        (tr3, tr4)
    } else {
        // S = R² is symmetric; walk the diagonals j - i = d >= 0 with
        // S_{i+1,j+1} = S_ij + t(i+1) t(-1-j) - t(i-n+1) t(n-1-j)
        let ni = n as i64;
        let mut tr3 = T::zero();
        let mut tr4 = T::zero();
        for d in 0..n {
            let mut s: T = (0..n).map(|k| t(-(k as i64)) * t(k as i64 - d as i64)).sum();
            let mut diag3 = s;
            let mut diag4 = s * s;
            for i in 0..(n - d - 1) {
                let (ii, jj) = (i as i64, (i + d) as i64);
                s = s + t(ii + 1) * t(-1 - jj) - t(ii - ni + 1) * t(ni - 1 - jj);
                diag3 += s;
                diag4 += s * s;
            }
            let w = if d == 0 { T::one() } else { two };
            tr3 += w * r[d] * diag3;
            tr4 += w * diag4;
        }
        (tr3, tr4)
    };
    (tr2, tr3, tr4)
}

/// Exact `κ₂, κ₃, κ₄` of `U_{x²,n}`: `κ_m = 2^{m-1}(m-1)! tr(R^m) / n^{m/2}`.
pub fn quad_cumulants_with<T: Real>(kernel: &CovKernel<T>, n: usize, method: TraceMethod) -> Cumulants<T> {
    let r = kernel.values(n.max(1));
    let (t2, t3, t4) = toeplitz_traces(&r, method);
    let nf = T::of(n.max(1));
    Cumulants {
        kappa2: T::lit(2.0) * t2 / nf,
        kappa3: T::lit(8.0) * t3 / nf.powf(T::lit(1.5)),
        kappa4: T::lit(48.0) * t4 / (nf * nf),
    }
}

/// [`quad_cumulants_with`] using [`TraceMethod::Auto`].
pub fn quad_cumulants<T: Real>(kernel: &CovKernel<T>, n: usize) -> Cumulants<T> {
    quad_cumulants_with(kernel, n, TraceMethod::Auto)
}

/// Full report for a path, centred at the supplied `lambda` (the true value
/// in rate studies, a plug-in value in estimation).
pub fn variation_report<T: Real>(values: &[T], poly: &HermitePoly<T>, kernel: &CovKernel<T>, lambda: T) -> VariationReport<T> {
    let n = values.len();
    let q = q_variation(values, poly);
    let u = T::of(n).sqrt() * (q - lambda);
    let var_u = exact_var_u(poly, kernel, n);
    let c = quad_cumulants(kernel, n);
    VariationReport {
        n,
        q_stat: q,
        lambda,
        u_stat: u,
        var_u_exact: var_u,
        u_limit: u_limit(poly, kernel, T::lit(1e-10)),
        kappa2: c.kappa2,
        kappa3: c.kappa3,
        kappa4: c.kappa4,
        f_stat: u / var_u.sqrt(),
    }
}
