//! Berry-Esséen bound constants, total-variation upper bounds, third-cumulant
//! rates and rate-class predictions.

use serde::{Deserialize, Serialize};

use crate::cov_models::{fou_cross_cov, fou_variance, fou2_variance, oufou_eta_x, CovKernel, ProcessModel, Tail};
use crate::error::{Error, Result};
use crate::hermite_basis::{HermitePoly, DEFAULT_DEGREE_CAP};
use crate::special::{ln_binomial, ln_factorial};
use crate::variation_stats::{exact_var_u, lag_power_sum, quad_cumulants, u_limit};
use crate::Real;

/// How `U` is normalized before comparing with a standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `√E[U²]`.
    #[default]
    ExactVariance,
    /// Divide by `√u_f`.
    AsymptoticVariance,
    /// Raw `U`.
    None,
}

/// Predicted decay class of the distance to normality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateClass {
    /// `n^{-1/2}`.
    #[serde(rename = "sqrt_n")]
    SqrtN,
    /// `log²(n) n^{-1/2}`.
    #[serde(rename = "log2_sqrt_n")]
    Log2SqrtN,
    /// `n^{6H-9/2}`.
    #[serde(rename = "pow_6H_minus_4p5")]
    Pow6HMinus4p5,
    /// `log^{-3/2}(n)`.
    #[serde(rename = "log_neg_3_2")]
    LogNeg3_2,
    /// `n^{-1/4}`.
    #[serde(rename = "quarter")]
    Quarter,
    /// `n^{4H-3}`.
    #[serde(rename = "pow_4H_minus_3")]
    Pow4HMinus3,
    /// `n^{(4H-3)/2}`, the general-degree counterpart of `Pow4HMinus3`.
    #[serde(rename = "half_pow_4H_minus_3")]
    HalfPow4HMinus3,
    /// `log^{-1/4}(n)`: the variance itself grows like `log n`.
    #[serde(rename = "log_variance_regime")]
    LogVarianceRegime,
    /// Non-Gaussian limit.
    #[serde(rename = "nonnormal")]
    Nonnormal,
}

impl RateClass {
    /// Power of `n` in the rate, for the classes that are pure powers.
    pub fn exponent(&self, h: f64) -> Option<f64> {
        match self {
            RateClass::SqrtN => Some(-0.5),
            RateClass::Pow6HMinus4p5 => Some(6.0 * h - 4.5),
            RateClass::Quarter => Some(-0.25),
            RateClass::Pow4HMinus3 => Some(4.0 * h - 3.0),
            RateClass::HalfPow4HMinus3 => Some((4.0 * h - 3.0) / 2.0),
            _ => None,
        }
    }
}

/// Explicit constants of the total-variation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixConstants<T> {
    #[serde(rename = "C1q")]
    pub c1q: T,
    #[serde(rename = "C2q")]
    pub c2q: T,
    #[serde(rename = "Cq")]
    pub cq: T,
}

/// `Σ_{j=1}^{2k-1} j² (j!)² C(2k,j)⁴ (4k-2j)!`.
pub fn c1_inner_sum<T: Real>(k: usize) -> T {
    (1..2 * k)
        .map(|j| {
            let jf = T::of(j);
            (T::lit(2.0) * ln_factorial::<T>(j) + T::lit(4.0) * ln_binomial::<T>(2 * k, j) + ln_factorial::<T>(4 * k - 2 * j)).exp() * jf * jf
        })
        .sum()
}

/// `C1q`, `C2q` and `Cq = 2 max(C1q, C2q)` for `poly`.
pub fn appendix_constants<T: Real>(poly: &HermitePoly<T>) -> Result<AppendixConstants<T>> {
    let q = poly.degree();
    if q > DEFAULT_DEGREE_CAP {
        return Err(Error::DegreeCap { degree: q, cap: DEFAULT_DEGREE_CAP });
    }
    let half = q / 2;
    let two = T::lit(2.0);
    let r0 = poly.r0();
    let c1q = (1..=half)
        .map(|k| {
            let d = poly.coeff(k);
            d * d / T::of(2 * k) * c1_inner_sum::<T>(k).sqrt()
        })
        .sum();
    let mut c2q = T::zero();
    for k in 1..=half {
        for l in k + 1..=half {
            let dk4 = poly.coeff(k).powi(4);
            let dl4 = poly.coeff(l).powi(4);
            let a = (two * ln_factorial::<T>(2 * k) + two * ln_binomial::<T>(2 * l - 1, 2 * k - 1) + ln_factorial::<T>(2 * l - 2 * k)).exp() * dk4
                / (two * r0 * r0);
            let inner: T = (1..2 * k)
                .map(|j| {
                    (two * ln_factorial::<T>(l - 1)
                        + two * ln_binomial::<T>(2 * k - 1, j - 1)
                        + two * ln_binomial::<T>(2 * l - 1, j - 1)
                        + ln_factorial::<T>(2 * k + 2 * l - 2 * j))
                    .exp()
                })
                .sum();
            let kf = T::of(k);
            let b = two * kf * kf * (dk4 + dl4) * inner;
            c2q += (T::one() + kf / T::of(l)) * a.max(b).sqrt();
        }
    }
    Ok(AppendixConstants { c1q, c2q, cq: two * c1q.max(c2q) })
}

/// `Cq √(√κ₄(F) + κ₄(F))` with `κ₄(F)` of the quadratic statistic; the
/// asymptotic-variance form adds `2|1 - E[U²]/u_f|`.
pub fn tv_upper_bound<T: Real>(poly: &HermitePoly<T>, kernel: &CovKernel<T>, n: usize, normalization: Normalization) -> Result<T> {
    let cq = appendix_constants(poly)?.cq;
    let k4 = quad_cumulants(kernel, n).kappa4_f().max(T::zero());
    let base = cq * (k4.sqrt() + k4).sqrt();
    match normalization {
        Normalization::ExactVariance => Ok(base),
        Normalization::AsymptoticVariance => Ok(base + T::lit(2.0) * variance_discrepancy(poly, kernel, n)?),
        Normalization::None => Err(Error::Argument("the total-variation bound needs a variance normalization".into())),
    }
}

/// `|u_f - E[U²]| / u_f`; a divergence error when the Breuer-Major series
/// diverges.
pub fn variance_discrepancy<T: Real>(poly: &HermitePoly<T>, kernel: &CovKernel<T>, n: usize) -> Result<T> {
    let u = u_limit(poly, kernel, T::lit(1e-12)).ok_or_else(|| Error::Divergence("Breuer-Major series diverges".into()))?;
    Ok((u - exact_var_u(poly, kernel, n)).abs() / u)
}

/// Effective Hurst index `1 - α/2` read from a power tail; exponential and
/// finite tails count as `0` (short memory).
pub fn effective_hurst<T: Real>(kernel: &CovKernel<T>) -> T {
    match kernel.tail() {
        Some(Tail::Power { exponent, .. }) => T::one() - exponent / T::lit(2.0),
        _ => T::zero(),
    }
}

const H_EQ_TOL: f64 = 1e-9;

fn classify_exact_q2(h: f64) -> RateClass {
    if h < 2.0 / 3.0 - H_EQ_TOL {
        RateClass::SqrtN
    } else if h <= 2.0 / 3.0 + H_EQ_TOL {
        RateClass::Log2SqrtN
    } else if h < 0.75 - H_EQ_TOL {
        RateClass::Pow6HMinus4p5
    } else if h <= 0.75 + H_EQ_TOL {
        RateClass::LogNeg3_2
    } else {
        RateClass::Nonnormal
    }
}

/// `κ₃(F)` with its commensurate lag-sum expression and rate class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa3Rate<T> {
    pub kappa3_f: T,
    pub commensurate_expr: T,
    pub regime: RateClass,
}

fn abs_power_sums<T: Real>(kernel: &CovKernel<T>, n: usize) -> (T, T) {
    let r0 = kernel.r0();
    let mut s32 = T::one();
    let mut s2 = T::one();
    for k in 1..n {
        let p = (kernel.eval(k as i64) / r0).abs();
        s32 += T::lit(2.0) * p.powf(T::lit(1.5));
        s2 += T::lit(2.0) * p * p;
    }
    (s32, s2)
}

/// `(Σ_{|k|<n} |r|^{3/2})² / ((Σ_{|k|<n} r²)^{3/2} √n)` and exact `κ₃(F)`.
pub fn kappa3_rate<T: Real>(kernel: &CovKernel<T>, n: usize) -> Result<Kappa3Rate<T>> {
    if n < 2 {
        return Err(Error::Argument("n must be at least 2".into()));
    }
    let (s32, s2) = abs_power_sums(kernel, n);
    Ok(Kappa3Rate {
        kappa3_f: quad_cumulants(kernel, n).kappa3_f(),
        commensurate_expr: s32 * s32 / (s2.powf(T::lit(1.5)) * T::of(n).sqrt()),
        regime: classify_exact_q2(effective_hurst(kernel).as_f64()),
    })
}

/// Estimate of `L = lim (Σ|r|^{3/2})² / (Σr²)^{3/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LConstant<T> {
    /// Limit estimate (partial sums plus power-tail remainder); `None` when
    /// `Σ|r|^{3/2}` diverges.
    pub value: Option<T>,
    /// Ratio of the raw partial sums over `|k| < nmax`.
    pub partial: T,
    /// `|L(nmax) - L(nmax/2)|` of the tail-corrected estimates.
    pub certificate: T,
}

/// [`LConstant`] from lags `|k| < nmax`.
pub fn l_constant<T: Real>(kernel: &CovKernel<T>, nmax: usize) -> LConstant<T> {
    let (s32, s2) = abs_power_sums(kernel, nmax);
    let partial = s32 * s32 / s2.powf(T::lit(1.5));
    let corrected = |n: usize| -> Option<T> {
        let (a, b) = abs_power_sums(kernel, n);
        match kernel.tail() {
            Some(Tail::Power { constant, exponent }) => {
                let e32 = T::lit(1.5) * exponent;
                let e2 = T::lit(2.0) * exponent;
                if e32 <= T::one() {
                    return None;
                }
                let c = (constant / kernel.r0()).abs();
                // Σ_{|k|≥n} c^p k^{-pα} ≈ 2 c^p (n - 1/2)^{1-pα} / (pα - 1)
                let tail = |p: T, e: T| T::lit(2.0) * c.powf(p) * (T::of(n) - T::lit(0.5)).powf(T::one() - e) / (e - T::one());
                let a = a + tail(T::lit(1.5), e32);
                let b = b + tail(T::lit(2.0), e2);
                Some(a * a / b.powf(T::lit(1.5)))
            }
            _ => Some(a * a / b.powf(T::lit(1.5))),
        }
    };
    let value = corrected(nmax);
    let certificate = match (value, corrected((nmax / 2).max(1))) {
        (Some(x), Some(y)) => (x - y).abs(),
        _ => T::infinity(),
    };
    LConstant { value, partial, certificate }
}

/// Moments of the correction term: variance of `Y_k` for the path models.
fn correction_variances<T: Real>(model: &ProcessModel<T>) -> Option<(T, Box<dyn Fn(usize) -> T>)> {
    match *model {
        ProcessModel::Fou { theta, hurst } => {
            let v = fou_variance(theta, hurst);
            Some((v, Box::new(move |k| (-T::lit(2.0) * theta * T::of(k)).exp() * v)))
        }
        ProcessModel::Fou2 { alpha, hurst } => {
            let v = fou2_variance(alpha, hurst);
            Some((v, Box::new(move |k| (-T::lit(2.0) * alpha * T::of(k)).exp() * v)))
        }
        ProcessModel::Oufou { theta, rho, hurst } => {
            let vt = fou_variance(theta, hurst);
            let vr = fou_variance(rho, hurst);
            let c = fou_cross_cov(theta, rho, hurst, T::zero()).unwrap_or(T::zero());
            let d2 = (rho - theta) * (rho - theta);
            let eta = oufou_eta_x(theta, rho, hurst);
            Some((
                eta,
                Box::new(move |k| {
                    let kf = T::of(k);
                    let a = rho * (-rho * kf).exp();
                    let b = theta * (-theta * kf).exp();
                    ((a * a * vr - T::lit(2.0) * a * b * c + b * b * vt) / d2).max(T::zero())
                }),
            ))
        }
        _ => None,
    }
}

fn odd_double_factorial<T: Real>(j: usize) -> T {
    (1..=j).fold(T::one(), |acc, i| acc * T::of(2 * i - 1))
}

/// Certified bound `c e^{-i0·drift} / n` on `E|Q(Z+Y) - Q(Z)|` for the trimmed
/// statistic over `[i0, i0+n)`, using Cauchy-Schwarz on each binomial term of
/// `f(z+y) - f(z)` and the exact Gaussian moments of `Y_k` and `Z`. Zero for
/// stationary models.
pub fn nonstat_discrepancy<T: Real>(model: &ProcessModel<T>, poly: &HermitePoly<T>, n: usize, i0: usize) -> Result<T> {
    model.validate()?;
    let Some((var_z, var_y)) = correction_variances(model) else {
        return Ok(T::zero());
    };
    let mono = poly.to_monomial();
    let q = poly.degree();
    // S_j = Σ_{k≥i0} Var(Y_k)^{j/2}, summed until negligible
    let mut s = vec![T::zero(); q + 1];
    let mut k = i0;
    loop {
        let v = var_y(k);
        for (j, sj) in s.iter_mut().enumerate().skip(1) {
            *sj += v.powf(T::of(j) / T::lit(2.0));
        }
        if v.sqrt() <= T::epsilon() * s[1].max(T::min_positive_value()) || k > i0 + 1_000_000 {
            break;
        }
        k += 1;
    }
    let mut total = T::zero();
    for (m, &a) in mono.iter().enumerate() {
        if a == T::zero() || m == 0 {
            continue;
        }
        for j in 1..=m {
            let binom = ln_binomial::<T>(m, j).exp();
            let moments = (odd_double_factorial::<T>(j) * odd_double_factorial::<T>(m - j)).sqrt();
            total += a.abs() * binom * moments * var_z.powf(T::of(m - j) / T::lit(2.0)) * s[j];
        }
    }
    Ok(total / T::of(n.max(1)))
}

/// Predicted class for the distance of the normalized statistic built from
/// `model` after `diff_order` forward differences.
pub fn rate_class_for<T: Real>(model: &ProcessModel<T>, q: usize, normalization: Normalization, diff_order: usize) -> RateClass {
    let h = match model {
        ProcessModel::Fgn { hurst, .. } | ProcessModel::Fou { hurst, .. } | ProcessModel::Oufou { hurst, .. } => {
            if (hurst.as_f64() - 0.5).abs() < H_EQ_TOL {
                0.0
            } else {
                hurst.as_f64()
            }
        }
        _ => 0.0,
    } - diff_order as f64;
    if q == 2 {
        match normalization {
            Normalization::ExactVariance => classify_exact_q2(h),
            _ => {
                if h < 0.625 - H_EQ_TOL {
                    RateClass::SqrtN
                } else if h < 0.75 - H_EQ_TOL {
                    RateClass::Pow4HMinus3
                } else if h <= 0.75 + H_EQ_TOL {
                    RateClass::LogVarianceRegime
                } else {
                    RateClass::Nonnormal
                }
            }
        }
    } else if h < 0.625 - H_EQ_TOL {
        RateClass::Quarter
    } else if h < 0.75 - H_EQ_TOL {
        RateClass::HalfPow4HMinus3
    } else if h <= 0.75 + H_EQ_TOL {
        RateClass::LogVarianceRegime
    } else {
        RateClass::Nonnormal
    }
}

/// All bound quantities for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T> {
    pub n: usize,
    #[serde(rename = "C1q")]
    pub c1q: T,
    #[serde(rename = "C2q")]
    pub c2q: T,
    #[serde(rename = "Cq")]
    pub cq: T,
    /// The quadratic-case constant `2√2 r(0)` quoted alongside the general
    /// formula (only for `q = 2`).
    pub cq_text_quadratic: Option<T>,
    pub tv_bound: T,
    pub variance_discrepancy: Option<T>,
    pub kappa3_expr: T,
    #[serde(rename = "L")]
    pub l: Option<T>,
    pub rate_class: RateClass,
    pub c3_bound: Option<T>,
    pub c4_bound: Option<T>,
}

/// `sup_n √n |u - E[U²]| / (2u)` over dyadic `n` up to `nmax`; `None` when
/// the power tail makes it unbounded.
pub fn c4_constant<T: Real>(poly: &HermitePoly<T>, kernel: &CovKernel<T>, nmax: usize) -> Option<T> {
    if let Some(Tail::Power { exponent, .. }) = kernel.tail() {
        // |u - E[U²]| ~ n^{max(-1, 1-2α)}
        if exponent <= T::lit(0.75) {
            return None;
        }
    }
    let u = u_limit(poly, kernel, T::lit(1e-12))?;
    let mut best = T::zero();
    let mut n = 2usize;
    while n <= nmax {
        let v = T::of(n).sqrt() * (u - exact_var_u(poly, kernel, n)).abs() / (T::lit(2.0) * u);
        best = best.max(v);
        n *= 2;
    }
    Some(best)
}

/// Assemble a [`BoundReport`].
pub fn bound_report<T: Real>(
    poly: &HermitePoly<T>,
    kernel: &CovKernel<T>,
    model: &ProcessModel<T>,
    n: usize,
    normalization: Normalization,
    diff_order: usize,
) -> Result<BoundReport<T>> {
    let consts = appendix_constants(poly)?;
    let disc = variance_discrepancy(poly, kernel, n).ok();
    let tv = match normalization {
        Normalization::AsymptoticVariance => tv_upper_bound(poly, kernel, n, normalization)?,
        _ => tv_upper_bound(poly, kernel, n, Normalization::ExactVariance)?,
    };
    let k3 = kappa3_rate(kernel, n.max(2))?;
    let u2 = lag_power_sum(kernel, 1, T::lit(1e-12)).map(|s| T::lit(2.0) * kernel.r0() * kernel.r0() * s);
    let quad = HermitePoly::power(2, kernel.r0())?;
    let c3 = if diff_order == 0 {
        match u2 {
            Some(u) => Some(T::of(n) * nonstat_discrepancy(model, &quad, n, 0)? / u.sqrt()),
            None => None,
        }
    } else {
        None
    };
    Ok(BoundReport {
        n,
        c1q: consts.c1q,
        c2q: consts.c2q,
        cq: consts.cq,
        cq_text_quadratic: (poly.degree() == 2).then(|| T::lit(2.0) * T::SQRT_2() * poly.r0()),
        tv_bound: tv,
        variance_discrepancy: disc,
        kappa3_expr: k3.commensurate_expr,
        l: l_constant(kernel, n.max(16)).value,
        rate_class: rate_class_for(model, poly.degree(), normalization, diff_order),
        c3_bound: c3,
        c4_bound: c4_constant(&quad, kernel, 1 << 16),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cov_models::{fgn_kernel, KernelMeta};
    use approx::assert_relative_eq;

    #[test]
    fn constants_examples() {
        let c = appendix_constants(&HermitePoly::power(2, 1.0).unwrap()).unwrap();
        assert_relative_eq!(c.c1q, 2.0 * 2f64.sqrt(), max_relative = 1e-12);
        assert_eq!(c.c2q, 0.0);
        assert_relative_eq!(c.cq, 4.0 * 2f64.sqrt(), max_relative = 1e-12);
        let c = appendix_constants(&HermitePoly::power(2, 2.0).unwrap()).unwrap();
        assert_relative_eq!(c.c1q, 8.0 * 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(c1_inner_sum::<f64>(1), 32.0, max_relative = 1e-12);
    }

    #[test]
    fn white_noise_bound() {
        let white = CovKernel::tabulated(vec![1.0], None, KernelMeta::new("white", &[])).unwrap();
        let p = HermitePoly::power(2, 1.0).unwrap();
        let b = tv_upper_bound(&p, &white, 100, Normalization::ExactVariance).unwrap();
        let expected = 4.0 * 2f64.sqrt() * (0.12f64.sqrt() + 0.12).sqrt();
        assert_relative_eq!(b, expected, max_relative = 1e-12);
        let k = kappa3_rate(&white, 100).unwrap();
        assert_relative_eq!(k.commensurate_expr, 0.1, max_relative = 1e-12);
        assert_eq!(l_constant(&white, 64).value, Some(1.0));
    }

    #[test]
    fn regimes() {
        let fou = |h: f64| ProcessModel::Fou { theta: 1.0, hurst: h };
        assert_eq!(rate_class_for(&fou(0.55), 2, Normalization::AsymptoticVariance, 0), RateClass::SqrtN);
        assert_eq!(rate_class_for(&fou(0.7), 2, Normalization::AsymptoticVariance, 0), RateClass::Pow4HMinus3);
        assert_eq!(rate_class_for(&fou(0.9), 2, Normalization::AsymptoticVariance, 1), RateClass::SqrtN);
        assert_eq!(kappa3_rate(&fgn_kernel(0.7, 1.0).unwrap(), 64).unwrap().regime, RateClass::Pow6HMinus4p5);
        assert_eq!(kappa3_rate(&fgn_kernel(0.55, 1.0).unwrap(), 64).unwrap().regime, RateClass::SqrtN);
        assert!(l_constant(&fgn_kernel(0.7, 1.0).unwrap(), 1000).value.is_none());
    }

    #[test]
    fn stationary_models_have_no_discrepancy() {
        let p = HermitePoly::power(2, 1.0).unwrap();
        assert_eq!(nonstat_discrepancy(&ProcessModel::Fgn { hurst: 0.6, sigma2: 1.0 }, &p, 100, 0).unwrap(), 0.0);
        let m = ProcessModel::Fou { theta: 1.0, hurst: 0.6 };
        let b0 = nonstat_discrepancy(&m, &p, 100, 0).unwrap();
        let b10 = nonstat_discrepancy(&m, &p, 100, 10).unwrap();
        // the linear term shrinks by exactly e^{-10}, higher powers faster
        assert!(b10 / b0 <= (-10f64).exp() * (1.0 + 1e-12));
        assert!(b10 / b0 >= (-20f64).exp());
    }
}
