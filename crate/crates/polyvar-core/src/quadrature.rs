//! Quadrature rules: Gauss-Jacobi (Golub-Welsch), adaptive Gauss-Kronrod,
//! tanh-sinh, and Wynn's epsilon algorithm for oscillatory tails.

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen_first_row;
use crate::special::ln_gamma;
use crate::Real;

/// Value and estimated absolute error of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_err: T,
}

/// Nodes and weights of the `n`-point Gauss-Jacobi rule on `[-1, 1]` for the
/// weight `(1-x)^a (1+x)^b`, `a, b > -1`. Nodes are ascending.
pub fn gauss_jacobi<T: Real>(n: usize, a: T, b: T) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "rule needs at least one node");
    assert!(a > -T::one() && b > -T::one(), "Jacobi exponents must exceed -1");
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let ab = a + b;
    let mut diag = vec![T::zero(); n];
    let mut off = vec![T::zero(); n];
    diag[0] = (b - a) / (ab + two);
    for k in 1..n {
        let fk = T::of(k);
        let s = two * fk + ab;
        diag[k] = (b * b - a * a) / (s * (s + two));
    }
    for k in 1..n {
        let fk = T::of(k);
        let s = two * fk + ab;
        let beta = if k == 1 {
            four * (one + a) * (one + b) / ((two + ab) * (two + ab) * (T::lit(3.0) + ab))
        } else {
            four * fk * (fk + a) * (fk + b) * (fk + ab) / (s * s * (s + one) * (s - one))
        };
        off[k - 1] = beta.sqrt();
    }
    let mu0 = ((ab + one) * two.ln() + ln_gamma(a + one) + ln_gamma(b + one) - ln_gamma(ab + two)).exp();
    let (nodes, first) = tridiagonal_eigen_first_row(diag, off);
    let mut pairs: Vec<(T, T)> = nodes.into_iter().zip(first.into_iter().map(|v| mu0 * v * v)).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite nodes"));
    pairs.into_iter().unzip()
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    gauss_jacobi(n, T::zero(), T::zero())
}

/// Fixed Gauss-Legendre rule mapped onto `[lo, hi]`.
pub fn fixed_legendre<T: Real, F: FnMut(T) -> T>(rule: &(Vec<T>, Vec<T>), lo: T, hi: T, mut f: F) -> T {
    let half = (hi - lo) / T::lit(2.0);
    let mid = (hi + lo) / T::lit(2.0);
    rule.0.iter().zip(&rule.1).map(|(&x, &w)| w * f(mid + half * x)).sum::<T>() * half
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn qk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> QuadResult<T> {
    let center = (a + b) / T::lit(2.0);
    let half = (b - a) / T::lit(2.0);
    let fc = f(center);
    let mut resk = fc * T::lit(WGK[7]);
    let mut resg = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(center - dx) + f(center + dx);
        resk += T::lit(WGK[j]) * s;
        if j % 2 == 1 {
            resg += T::lit(WG[j / 2]) * s;
        }
    }
    QuadResult { value: resk * half, abs_err: ((resk - resg) * half).abs() }
}

/// Adaptive Gauss-Kronrod (7/15) on `[a, b]` with global bisection of the
/// worst interval until `abs_err <= max(abs_tol, rel_tol |value|)`.
pub fn gauss_kronrod<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T, max_intervals: usize) -> Result<QuadResult<T>> {
    let mut parts = vec![(a, b, qk15(&mut f, a, b))];
    loop {
        let value: T = parts.iter().map(|p| p.2.value).sum();
        let err: T = parts.iter().map(|p| p.2.abs_err).sum();
        if err <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(QuadResult { value, abs_err: err });
        }
        if parts.len() >= max_intervals {
            return Err(Error::Quadrature { achieved: err.as_f64(), requested: abs_tol.max(rel_tol * value.abs()).as_f64() });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.abs_err.partial_cmp(&y.1 .2.abs_err).expect("finite error"))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = (lo + hi) / T::lit(2.0);
        let left = qk15(&mut f, lo, mid);
        let right = qk15(&mut f, mid, hi);
        parts.push((lo, mid, left));
        parts.push((mid, hi, right));
    }
}

/// Tanh-sinh (double exponential) quadrature on a finite interval. Robust to
/// integrable algebraic singularities at either endpoint; the integrand is
/// never evaluated exactly at `a` or `b`.
pub fn tanh_sinh<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, rel_tol: T) -> Result<QuadResult<T>> {
    let half = (b - a) / T::lit(2.0);
    let pi2 = T::FRAC_PI_2();
    let tiny = T::min_positive_value();
    let eval = |t: T, f: &mut F| -> T {
        // distance from the nearer endpoint computed without cancellation
        let u = pi2 * t.abs().sinh();
        let e2u = (T::lit(2.0) * u).exp();
        let delta = half * T::lit(2.0) / (e2u + T::one());
        if !(delta > tiny) || !e2u.is_finite() {
            return T::zero();
        }
        let cosh_u = u.cosh();
        let w = half * pi2 * t.cosh() / (cosh_u * cosh_u);
        if w == T::zero() || !w.is_finite() {
            return T::zero();
        }
        let x = if t < T::zero() { a + delta } else { b - delta };
        if x <= a || x >= b {
            return T::zero();
        }
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            T::zero()
        }
    };
    let tmax = T::lit(6.5);
    let mut h = T::one();
    let mut sum = eval(T::zero(), &mut f);
    let mut k = 1usize;
    while T::of(k) * h <= tmax {
        let t = T::of(k) * h;
        sum += eval(t, &mut f) + eval(-t, &mut f);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut last_diff = T::infinity();
    for _level in 1..=12 {
        h /= T::lit(2.0);
        let mut k = 1usize;
        while T::of(k) * h <= tmax {
            let t = T::of(k) * h;
            sum += eval(t, &mut f) + eval(-t, &mut f);
            k += 2;
        }
        let next = sum * h;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= rel_tol * estimate.abs() || diff == T::zero() {
            return Ok(QuadResult { value: estimate, abs_err: diff });
        }
        last_diff = diff;
    }
    if last_diff <= T::lit(1e3) * rel_tol * estimate.abs() {
        // the last refinement gains roughly the square of the previous error
        return Ok(QuadResult { value: estimate, abs_err: last_diff });
    }
    Err(Error::Quadrature { achieved: (last_diff / estimate.abs()).as_f64(), requested: rel_tol.as_f64() })
}

/// Wynn epsilon extrapolation of the limit of a sequence of partial sums.
pub fn wynn_epsilon<T: Real>(partial: &[T]) -> T {
    let n = partial.len();
    if n < 3 {
        return *partial.last().expect("at least one partial sum");
    }
    let mut prev = vec![T::zero(); n + 1];
    let mut cur: Vec<T> = partial.to_vec();
    let mut best = *partial.last().unwrap();
    let mut k = 0usize;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let d = cur[j + 1] - cur[j];
            if d == T::zero() {
                return if k.is_multiple_of(2) { cur[j + 1] } else { best };
            }
            next.push(prev[j + 1] + T::one() / d);
        }
        prev = cur;
        cur = next;
        k += 1;
        if k.is_multiple_of(2) {
            let v = *cur.last().unwrap();
            if v.is_finite() {
                best = v;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre::<f64>(10);
        for p in 0..20 {
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            let got = fixed_legendre(&rule, -1.0, 1.0, |x| x.powi(p));
            assert!((got - exact).abs() < 1e-14, "degree {p}: {got} vs {exact}");
        }
    }

    #[test]
    fn jacobi_weights_sum_to_moment() {
        let (x, w) = gauss_jacobi::<f64>(12, -0.4, 0.3);
        let mu0: f64 = w.iter().sum();
        let exact = (0.9f64 * 2f64.ln() + ln_gamma(0.6) + ln_gamma(1.3) - ln_gamma(1.9)).exp();
        assert_relative_eq!(mu0, exact, max_relative = 1e-13);
        // ∫ x (1-x)^a (1+x)^b dx = mu0 (b - a)/(a + b + 2)
        let m1: f64 = x.iter().zip(&w).map(|(x, w)| x * w).sum();
        assert_relative_eq!(m1, exact * 0.7 / 1.9, max_relative = 1e-12);
    }

    #[test]
    fn kronrod_and_tanh_sinh() {
        let r = gauss_kronrod(|x: f64| x.sin(), 0.0, 3.0, 1e-14, 1e-13, 100).unwrap();
        assert_relative_eq!(r.value, 1.0 - 3f64.cos(), max_relative = 1e-13);
        // ∫_0^1 x^{-1/2} dx = 2
        let r = tanh_sinh(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-11);
        // ∫_0^1 ln(x) dx = -1
        let r = tanh_sinh(|x: f64| x.ln(), 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(r.value, -1.0, max_relative = 1e-11);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        let mut s = 0.0;
        let partial: Vec<f64> = (0..15)
            .map(|k| {
                s += if k % 2 == 0 { 1.0 } else { -1.0 } / (k as f64 + 1.0);
                s
            })
            .collect();
        assert!((wynn_epsilon(&partial) - 2f64.ln()).abs() < 1e-10);
    }
}
