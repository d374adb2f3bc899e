//! Probabilists' Hermite polynomials and even polynomials stored in the
//! Hermite basis scaled by a reference variance.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Highest Hermite degree accepted by default.
pub const DEFAULT_DEGREE_CAP: usize = 16;

/// Coefficient ring for exact basis conversions (floats or rationals).
pub trait Coefficient: Num + Clone + FromPrimitive + PartialOrd {}
impl<T: Num + Clone + FromPrimitive + PartialOrd> Coefficient for T {}

/// Which family a polynomial variation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyKind {
    /// `H_q(x)`, the unscaled Hermite polynomial.
    Hermite,
    /// `x^q`.
    Power,
    /// Any even polynomial given by its Hermite coefficients.
    General,
}

/// `H_k(x)` by the three-term recurrence, rejecting degrees above `cap`.
pub fn hermite_eval_capped<T: Real>(k: usize, x: T, cap: usize) -> Result<T> {
    if k > cap {
        return Err(Error::DegreeCap { degree: k, cap });
    }
    let mut h0 = T::one();
    if k == 0 {
        return Ok(h0);
    }
    let mut h1 = x;
    for j in 1..k {
        let h2 = x * h1 - T::of(j) * h0;
        h0 = h1;
        h1 = h2;
    }
    Ok(h1)
}

/// `H_k(x)` with the default degree cap.
pub fn hermite_eval<T: Real>(k: usize, x: T) -> Result<T> {
    hermite_eval_capped(k, x, DEFAULT_DEGREE_CAP)
}

fn check_even_degree(q: usize, cap: usize) -> Result<()> {
    if q < 2 || q % 2 == 1 {
        return Err(Error::InvalidDegree(q));
    }
    if q > cap {
        return Err(Error::DegreeCap { degree: q, cap });
    }
    Ok(())
}

fn factorial_u128(n: usize) -> u128 {
    (2..=n as u128).product()
}

/// Coefficients `c` with `x^q = Σ_k c[k] H_{2k}(x)`, exact in any coefficient ring.
pub fn monomial_to_hermite<T: Coefficient>(q: usize) -> Result<Vec<T>> {
    check_even_degree(q, DEFAULT_DEGREE_CAP)?;
    Ok(monomial_to_hermite_unchecked(q))
}

fn monomial_to_hermite_unchecked<T: Coefficient>(q: usize) -> Vec<T> {
    let half = q / 2;
    (0..=half)
        .map(|k| {
            let num = factorial_u128(q);
            let den = (1u128 << (half - k)) * factorial_u128(half - k) * factorial_u128(2 * k);
            T::from_u128(num / den).expect("integer coefficient representable")
        })
        .collect()
}

/// Monomial coefficients (index = power) of `H_q(x)`.
pub fn hermite_monomials<T: Coefficient>(q: usize) -> Result<Vec<T>> {
    if q > DEFAULT_DEGREE_CAP {
        return Err(Error::DegreeCap { degree: q, cap: DEFAULT_DEGREE_CAP });
    }
    let mut out = vec![T::zero(); q + 1];
    for k in 0..=q / 2 {
        let mag = factorial_u128(q) / (factorial_u128(k) * factorial_u128(q - 2 * k) * (1u128 << k));
        let v = T::from_u128(mag).expect("integer coefficient representable");
        out[q - 2 * k] = if k % 2 == 0 { v } else { T::zero() - v };
    }
    Ok(out)
}

/// Even polynomial `f(x) = Σ_k d[k] H_{2k}(x / √r0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitePoly<T> {
    coeffs: Vec<T>,
    r0: T,
}

impl<T: Coefficient> HermitePoly<T> {
    /// Build from Hermite coefficients `d[0..=q/2]` (trailing zeros trimmed).
    pub fn new(mut coeffs: Vec<T>, r0: T) -> Result<Self> {
        while coeffs.len() > 1 && coeffs.last() == Some(&T::zero()) {
            coeffs.pop();
        }
        check_even_degree(2 * (coeffs.len().max(1) - 1), DEFAULT_DEGREE_CAP)?;
        if !(r0 > T::zero()) {
            return Err(Error::InvalidParameter("reference variance must be positive".into()));
        }
        Ok(Self { coeffs, r0 })
    }

    /// Degree `q`.
    pub fn degree(&self) -> usize {
        2 * (self.coeffs.len() - 1)
    }

    /// Hermite coefficients `d[k] = d_{f,2k}`.
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// `d[k]`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    /// Reference variance used in the scaling.
    pub fn r0(&self) -> T {
        self.r0.clone()
    }

    /// `x^q` expanded around reference variance `r0`.
    pub fn power(q: usize, r0: T) -> Result<Self> {
        check_even_degree(q, DEFAULT_DEGREE_CAP)?;
        let mut mono = vec![T::zero(); q + 1];
        mono[q] = T::one();
        poly_to_hermite(&mono, r0)
    }

    /// The unscaled Hermite polynomial `H_q(x)` expanded around `r0`.
    pub fn hermite(q: usize, r0: T) -> Result<Self> {
        check_even_degree(q, DEFAULT_DEGREE_CAP)?;
        poly_to_hermite(&hermite_monomials::<T>(q)?, r0)
    }
}

impl<T: Real> HermitePoly<T> {
    /// `f(x)`.
    pub fn eval(&self, x: T) -> T {
        let y = x / self.r0.sqrt();
        let q = self.degree();
        let mut acc = self.coeffs[0];
        let mut h0 = T::one();
        let mut h1 = y;
        for j in 1..q {
            let h2 = y * h1 - T::of(j) * h0;
            h0 = h1;
            h1 = h2;
            if (j + 1) % 2 == 0 {
                acc += self.coeffs[j.div_ceil(2)] * h1;
            }
        }
        acc
    }

    /// Monomial coefficients (index = power) of `f`.
    pub fn to_monomial(&self) -> Vec<T> {
        let q = self.degree();
        let mut out = vec![T::zero(); q + 1];
        let s = T::one() / self.r0.sqrt();
        for (k, &d) in self.coeffs.iter().enumerate() {
            let h = hermite_monomials::<f64>(2 * k).expect("degree within cap");
            for (j, &c) in h.iter().enumerate() {
                out[j] += d * T::lit(c) * s.powi(j as i32);
            }
        }
        out
    }

    /// Convert coefficients to another float type.
    pub fn cast<U: Real>(&self) -> HermitePoly<U> {
        HermitePoly {
            coeffs: self.coeffs.iter().map(|c| U::lit(c.as_f64())).collect(),
            r0: U::lit(self.r0.as_f64()),
        }
    }
}

/// Convert an even polynomial given by monomial coefficients (index = power)
/// to the Hermite basis scaled by `r0`.
pub fn poly_to_hermite<T: Coefficient>(monomial: &[T], r0: T) -> Result<HermitePoly<T>> {
    if !(r0 > T::zero()) {
        return Err(Error::InvalidParameter("reference variance must be positive".into()));
    }
    let mut top = monomial.len();
    while top > 0 && monomial[top - 1] == T::zero() {
        top -= 1;
    }
    if top == 0 {
        return Err(Error::InvalidDegree(0));
    }
    let q = top - 1;
    if let Some(odd) = (1..=q).step_by(2).find(|&i| monomial[i] != T::zero()) {
        return Err(Error::UnsupportedPolynomial(format!("odd power x^{odd} present")));
    }
    check_even_degree(q, DEFAULT_DEGREE_CAP)?;
    let half = q / 2;
    let mut d = vec![T::zero(); half + 1];
    let mut r0_pow = T::one();
    for j in 0..=half {
        let a = monomial[2 * j].clone();
        if a != T::zero() {
            // x^{2j} = r0^j (x/√r0)^{2j} = r0^j Σ_k c_{2j,2k} H_{2k}(x/√r0)
            let c: Vec<T> = if j == 0 { vec![T::one()] } else { monomial_to_hermite_unchecked(2 * j) };
            for (k, ck) in c.into_iter().enumerate() {
                d[k] = d[k].clone() + a.clone() * r0_pow.clone() * ck;
            }
        }
        r0_pow = r0_pow * r0.clone();
    }
    Ok(HermitePoly { coeffs: d, r0 })
}

/// `(2k-1)!!` with `(-1)!! = 1`.
fn double_factorial_odd(k: usize) -> u128 {
    (1..=k as u128).map(|i| 2 * i - 1).product()
}

/// `E[f(σ N)]` for the family `kind`.
///
/// `Hermite` and `Power` use the closed forms for `H_q` and `x^q`; `General`
/// requires `poly` and sums `d[k] E[H_{2k}(σN/√r0)]`, which is `d[0]` when
/// `σ² = r0`.
pub fn lambda_target<T: Real>(kind: PolyKind, q: usize, sigma2: T, poly: Option<&HermitePoly<T>>) -> Result<T> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    match kind {
        PolyKind::Hermite => {
            check_even_degree(q, DEFAULT_DEGREE_CAP)?;
            let m = T::of(double_factorial_odd(q / 2) as usize);
            Ok(m * (sigma2 - T::one()).powi((q / 2) as i32))
        }
        PolyKind::Power => {
            check_even_degree(q, DEFAULT_DEGREE_CAP)?;
            let m = T::of(double_factorial_odd(q / 2) as usize);
            Ok(m * sigma2.powi((q / 2) as i32))
        }
        PolyKind::General => {
            let poly = poly.ok_or_else(|| Error::Argument("general kind requires a polynomial".into()))?;
            let ratio = sigma2 / poly.r0() - T::one();
            Ok(poly
                .coeffs()
                .iter()
                .enumerate()
                .map(|(k, &d)| d * T::of(double_factorial_odd(k) as usize) * ratio.powi(k as i32))
                .sum())
        }
    }
}
