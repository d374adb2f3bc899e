//! Moment maps of the fractional OU models, their inverses and delta-method
//! variances.

use serde::{Deserialize, Serialize};

use crate::cov_models::{fou2_variance, fou_kernel, fou_variance, oufou_eta_sigma, oufou_eta_x, oufou_kernels, CovKernel};
use crate::error::{Error, Result};
use crate::hermite_basis::{lambda_target, HermitePoly, PolyKind};
use crate::special::{digamma, gamma, norm_ppf};
use crate::variation_stats::{lag_power_sum, trimmed_variation, u_limit};
use crate::Real;

/// Which monotone piece of a non-injective map to invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Left,
    Right,
}

/// What to do with an observation outside the range of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RangePolicy {
    /// Return a range error.
    #[default]
    Strict,
    /// Return the nearest bracket end, flagged in the diagnostics.
    Clamp,
}

/// Convergence information of an inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InversionDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub branch: Option<Branch>,
    pub clamped: bool,
    pub notes: Vec<String>,
}

/// Estimate with optional delta-method uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult<T> {
    /// One value (scalar models) or `(θ, ρ)`.
    pub estimate: Vec<T>,
    /// Derivative (scalar) or Jacobian (row-major 2x2) of the forward map at
    /// the estimate.
    pub map_derivative: Vec<T>,
    /// Asymptotic covariance of the estimate divided by `n`.
    pub asymptotic_variance: Option<Vec<Vec<T>>>,
    pub std_error: Option<Vec<T>>,
    pub ci95: Option<Vec<(T, T)>>,
    pub diagnostics: InversionDiagnostics,
}

impl<T: Real> EstimateResult<T> {
    fn new(estimate: Vec<T>, map_derivative: Vec<T>, diagnostics: InversionDiagnostics) -> Self {
        Self { estimate, map_derivative, asymptotic_variance: None, std_error: None, ci95: None, diagnostics }
    }

    /// Attach a covariance matrix (already divided by `n`) and the derived
    /// standard errors and 95% intervals.
    pub fn with_variance(mut self, cov: Vec<Vec<T>>) -> Self {
        let z = norm_ppf(T::lit(0.975));
        let se: Vec<T> = (0..self.estimate.len()).map(|i| cov[i][i].max(T::zero()).sqrt()).collect();
        self.ci95 = Some(self.estimate.iter().zip(&se).map(|(&e, &s)| (e - z * s, e + z * s)).collect());
        self.std_error = Some(se);
        self.asymptotic_variance = Some(cov);
        self
    }
}

/// Variance `σ²` of the Gaussian marginal that makes `E[f(σN)] = x`, for the
/// closed-form families. `None` outside the range.
pub fn sigma2_from_lambda<T: Real>(kind: PolyKind, q: usize, x: T) -> Option<T> {
    let m = lambda_target(PolyKind::Power, q, T::one(), None).ok()?;
    let y = x / m;
    let p = T::lit(2.0) / T::of(q);
    match kind {
        PolyKind::Power => (y > T::zero()).then(|| y.powf(p)),
        PolyKind::Hermite => {
            if (q / 2) % 2 == 1 {
                let s = T::one() + y.signum() * y.abs().powf(p);
                (s > T::zero()).then_some(s)
            } else {
                // even half-degree: invert on the branch σ² > 1
                (y > T::zero()).then(|| T::one() + y.powf(p))
            }
        }
        PolyKind::General => None,
    }
}

/// `dλ/dσ²` for the closed-form families.
fn dlambda_dsigma2<T: Real>(kind: PolyKind, q: usize, s2: T) -> T {
    let m = lambda_target(PolyKind::Power, q, T::one(), None).unwrap_or(T::one());
    let half = T::of(q / 2);
    match kind {
        PolyKind::Hermite => m * half * (s2 - T::one()).powi(q as i32 / 2 - 1),
        _ => m * half * s2.powi(q as i32 / 2 - 1),
    }
}

fn check_kind(kind: PolyKind, q: usize) -> Result<()> {
    if kind == PolyKind::General {
        return Err(Error::UnsupportedPolynomial("moment maps are defined for the hermite and power families".into()));
    }
    crate::hermite_basis::HermitePoly::<f64>::power(q, 1.0).map(|_| ())
}

/// `μ(θ) = λ_f(Z^θ)` with `Var(Z^θ_0) = HΓ(2H)θ^{-2H}`.
pub fn mu_fou<T: Real>(kind: PolyKind, q: usize, h: T, theta: T) -> Result<T> {
    check_kind(kind, q)?;
    lambda_target(kind, q, fou_variance(theta, h), None)
}

/// `μ'(θ)`.
pub fn mu_fou_derivative<T: Real>(kind: PolyKind, q: usize, h: T, theta: T) -> T {
    let s2 = fou_variance(theta, h);
    dlambda_dsigma2(kind, q, s2) * (-T::lit(2.0) * h * s2 / theta)
}

/// Safeguarded Newton on `u = ln x` for a strictly monotone `f` with
/// `f(lo) - target` and `f(hi) - target` of opposite signs.
fn solve_log<T: Real, F: Fn(T) -> (T, T)>(f: F, target: T, lo: T, hi: T, start: T) -> Result<(T, usize, T)> {
    let g = |u: T| {
        let x = u.exp();
        let (v, d) = f(x);
        (v - target, d * x)
    };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (ga, gb) = (g(a).0, g(b).0);
    if ga == T::zero() {
        return Ok((lo, 0, T::zero()));
    }
    if gb == T::zero() {
        return Ok((hi, 0, T::zero()));
    }
    if ga.signum() == gb.signum() {
        return Err(Error::Range { observed: target.as_f64(), lo: f(hi).0.min(f(lo).0).as_f64(), hi: f(hi).0.max(f(lo).0).as_f64() });
    }
    let increasing = gb > ga;
    let mut u = if start > lo && start < hi { start.ln() } else { (a + b) / T::lit(2.0) };
    let tol = T::lit(1e-11) * (T::one() + target.abs());
    for it in 1..=200 {
        let (gu, du) = g(u);
        if gu.abs() <= tol * T::lit(0.01) {
            return Ok((u.exp(), it, gu.abs()));
        }
        if (gu > T::zero()) == increasing {
            b = u;
        } else {
            a = u;
        }
        let newton = u - gu / du;
        u = if du != T::zero() && newton > a && newton < b && newton.is_finite() { newton } else { (a + b) / T::lit(2.0) };
        if (b - a).abs() < T::epsilon() * T::lit(4.0) * (T::one() + u.abs()) {
            let r = g(u).0.abs();
            return Ok((u.exp(), it, r));
        }
    }
    let r = g(u).0.abs();
    if r <= tol {
        Ok((u.exp(), 200, r))
    } else {
        Err(Error::Inversion { iterations: 200, residual: r.as_f64() })
    }
}

const THETA_LO: f64 = 1e-8;
const THETA_HI: f64 = 1e8;

fn finish_scalar<T: Real>(
    res: Result<(T, usize, T)>,
    observed: T,
    policy: RangePolicy,
    lo: T,
    hi: T,
    eval: impl Fn(T) -> T,
    deriv: impl Fn(T) -> T,
) -> Result<EstimateResult<T>> {
    match res {
        Ok((x, iterations, residual)) => Ok(EstimateResult::new(
            vec![x],
            vec![deriv(x)],
            InversionDiagnostics { iterations, residual: residual.as_f64(), ..Default::default() },
        )),
        Err(Error::Range { .. }) if policy == RangePolicy::Clamp => {
            // decreasing maps: too-large observations sit at the small end
            let x = if observed > eval(lo) { lo } else { hi };
            Ok(EstimateResult::new(
                vec![x],
                vec![deriv(x)],
                InversionDiagnostics {
                    iterations: 0,
                    residual: (eval(x) - observed).abs().as_f64(),
                    clamped: true,
                    notes: vec![format!("observation {observed} outside the map's range; clamped")],
                    ..Default::default()
                },
            ))
        }
        Err(e) => Err(e),
    }
}

/// `θ̂ = μ^{-1}(observed)` for the fOU moment map.
///
/// The closed-form inverse serves as the start of a bracketed Newton polish.
/// For Hermite polynomials of even half-degree the map is inverted on the
/// branch `HΓ(2H)θ^{-2H} > 1`, where it is monotone.
pub fn invert_mu_fou<T: Real>(kind: PolyKind, q: usize, h: T, observed: T, policy: RangePolicy) -> Result<EstimateResult<T>> {
    check_kind(kind, q)?;
    let k = h * gamma(T::lit(2.0) * h);
    let inv_2h = T::one() / (T::lit(2.0) * h);
    let mut hi = T::lit(THETA_HI);
    if kind == PolyKind::Hermite && (q / 2).is_multiple_of(2) {
        // largest θ with σ² >= 1
        hi = k.powf(inv_2h);
    }
    let lo = T::lit(THETA_LO);
    let start = sigma2_from_lambda(kind, q, observed).map(|s2| (k / s2).powf(inv_2h)).unwrap_or(T::one());
    let f = |t: T| (mu_fou(kind, q, h, t).unwrap_or(T::nan()), mu_fou_derivative(kind, q, h, t));
    let res = solve_log(f, observed, lo, hi, start);
    finish_scalar(res, observed, policy, lo, hi, |t| mu_fou(kind, q, h, t).unwrap_or(T::nan()), |t| mu_fou_derivative(kind, q, h, t))
}

/// The inverse with the constant raised to `-1/(2H)`, as printed in the
/// source formula for the quadratic Hermite case; kept for reproduction
/// only. [`invert_mu_fou`] is the algebraic inverse.
pub fn invert_mu_fou_printed<T: Real>(h: T, observed: T) -> T {
    let inv_2h = T::one() / (T::lit(2.0) * h);
    (h * gamma(T::lit(2.0) * h)).powf(-inv_2h) * (T::one() + observed.abs()).powf(-inv_2h)
}

/// `ν(α) = λ_f(S^α)` for the fOU process of the second kind.
pub fn nu_fou2<T: Real>(kind: PolyKind, q: usize, h: T, alpha: T) -> Result<T> {
    check_kind(kind, q)?;
    crate::cov_models::ProcessModel::Fou2 { alpha, hurst: h }.validate()?;
    lambda_target(kind, q, fou2_variance(alpha, h), None)
}

/// `ν'(α)`.
pub fn nu_fou2_derivative<T: Real>(kind: PolyKind, q: usize, h: T, alpha: T) -> T {
    let s2 = fou2_variance(alpha, h);
    // d ln σ² / dα = -1/α + H (ψ(1-H+αH) - ψ(H+αH))
    let dlog = -T::one() / alpha + h * (digamma(T::one() - h + alpha * h) - digamma(h + alpha * h));
    dlambda_dsigma2(kind, q, s2) * s2 * dlog
}

/// `α̂ = ν^{-1}(observed)`.
pub fn invert_nu_fou2<T: Real>(kind: PolyKind, q: usize, h: T, observed: T, policy: RangePolicy) -> Result<EstimateResult<T>> {
    check_kind(kind, q)?;
    crate::cov_models::ProcessModel::Fou2 { alpha: T::one(), hurst: h }.validate()?;
    let lo = T::lit(1e-6);
    let mut hi = T::lit(1e6);
    if kind == PolyKind::Hermite && (q / 2).is_multiple_of(2) {
        // restrict to σ² >= 1
        let f = |a: T| fou2_variance(a, h) - T::one();
        if f(hi) < T::zero() {
            let (x, _, _) = solve_log(|a| (f(a), T::zero()), T::zero(), lo, hi, T::one())?;
            hi = x;
        }
    }
    let eval = |a: T| nu_fou2(kind, q, h, a).unwrap_or(T::nan());
    let f = |a: T| (eval(a), nu_fou2_derivative(kind, q, h, a));
    let res = solve_log(f, observed, lo, hi, T::one());
    finish_scalar(res, observed, policy, lo, hi, eval, |a| nu_fou2_derivative(kind, q, h, a))
}

/// Evaluation convention for the moment map of the differenced fOU sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdMode {
    /// Closed form `(e^θ / (2 + e^{-2θ})) (HΓ(2H)θ^{-2H} - 1)`.
    Paper,
    /// `E[(Z_1 - Z_0)² - 1] = 2r(0) - 2r(1) - 1`.
    Numeric,
}

/// Moment map of the once-differenced stationary fOU sequence under `H₂`.
pub fn mu_fd_fou<T: Real>(h: T, theta: T, mode: FdMode) -> Result<T> {
    if !(theta > T::zero()) {
        return Err(Error::InvalidParameter("theta must be positive".into()));
    }
    match mode {
        FdMode::Paper => {
            let factor = theta.exp() / (T::lit(2.0) + (-T::lit(2.0) * theta).exp());
            Ok(factor * (fou_variance(theta, h) - T::one()))
        }
        FdMode::Numeric => {
            let r0 = crate::cov_models::fou_cov(theta, h, T::zero())?;
            let r1 = crate::cov_models::fou_cov(theta, h, T::one())?;
            Ok(T::lit(2.0) * (r0 - r1) - T::one())
        }
    }
}

fn mu_fd_derivative<T: Real>(h: T, theta: T, mode: FdMode) -> T {
    let step = theta * T::lit(1e-6);
    let f = |t: T| mu_fd_fou(h, t, mode).unwrap_or(T::nan());
    (f(theta + step) - f(theta - step)) / (T::lit(2.0) * step)
}

/// Location of the minimum of the finite-difference map on the search
/// bracket, by golden-section search in `ln θ`. Returns `None` when the
/// minimum sits at the bracket end (no interior minimum).
pub fn fd_theta_min<T: Real>(h: T, mode: FdMode) -> Option<T> {
    let f = |u: T| mu_fd_fou(h, u.exp(), mode).unwrap_or(T::infinity());
    let (lo, hi) = (T::lit(1e-4).ln(), T::lit(60.0).ln());
    // coarse scan then golden section around the best grid point
    let grid = 400usize;
    let step = (hi - lo) / T::of(grid);
    let (mut best, mut best_v) = (0usize, T::infinity());
    for i in 0..=grid {
        let v = f(lo + step * T::of(i));
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    if best == 0 || best == grid {
        return None;
    }
    let (mut a, mut b) = (lo + step * T::of(best - 1), lo + step * T::of(best + 1));
    let g = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Some(((a + b) / T::lit(2.0)).exp())
}

/// Invert the finite-difference map on the requested branch.
///
/// The branch is mandatory. When the map has no interior minimum on
/// `(1e-4, 60)` the left branch is the whole search interval and the right
/// branch is empty, which is reported as a range error.
pub fn invert_mu_fd_fou<T: Real>(h: T, observed: T, mode: FdMode, branch: Option<Branch>) -> Result<EstimateResult<T>> {
    let branch = branch.ok_or_else(|| Error::Argument("a branch (left or right) must be selected".into()))?;
    let (lo, hi) = (T::lit(1e-4), T::lit(60.0));
    let tmin = fd_theta_min(h, mode);
    let (a, b) = match (branch, tmin) {
        (Branch::Left, Some(t)) => (lo, t),
        (Branch::Right, Some(t)) => (t, hi),
        (Branch::Left, None) => (lo, hi),
        (Branch::Right, None) => {
            let fl = mu_fd_fou(h, lo, mode)?;
            let fh = mu_fd_fou(h, hi, mode)?;
            return Err(Error::Range { observed: observed.as_f64(), lo: fl.min(fh).as_f64(), hi: fl.max(fh).as_f64() });
        }
    };
    let f = |t: T| (mu_fd_fou(h, t, mode).unwrap_or(T::nan()), mu_fd_derivative(h, t, mode));
    let (x, iterations, residual) = solve_log(f, observed, a, b, (a * b).sqrt())?;
    let mut diag = InversionDiagnostics { iterations, residual: residual.as_f64(), branch: Some(branch), ..Default::default() };
    if tmin.is_none() {
        diag.notes.push("map is monotone on the search interval; the left branch covers it".into());
    }
    Ok(EstimateResult::new(vec![x], vec![mu_fd_derivative(h, x, mode)], diag))
}

/// `(η_X, η_Σ)` and their Jacobian with respect to `(θ, ρ)`.
pub fn delta_oufou<T: Real>(h: T, theta: T, rho: T) -> ([T; 2], [[T; 2]; 2]) {
    let two = T::lit(2.0);
    let k = h * gamma(two * h);
    let a = two - two * h;
    let b = -two * h;
    let den = rho * rho - theta * theta;
    let den2 = den * den;
    let nx = rho.powf(a) - theta.powf(a);
    let ns = theta.powf(b) - rho.powf(b);
    let jac = [
        [
            k * (-a * theta.powf(a - T::one()) * den + two * theta * nx) / den2,
            k * (a * rho.powf(a - T::one()) * den - two * rho * nx) / den2,
        ],
        [
            k * (b * theta.powf(b - T::one()) * den + two * theta * ns) / den2,
            k * (-b * rho.powf(b - T::one()) * den - two * rho * ns) / den2,
        ],
    ];
    ([oufou_eta_x(theta, rho, h), oufou_eta_sigma(theta, rho, h)], jac)
}

fn inv2<T: Real>(m: [[T; 2]; 2]) -> Result<[[T; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(T::zero(), |s, v| s.max(v.abs()));
    if det.abs() <= T::lit(1e-14) * scale * scale || !det.is_finite() {
        return Err(Error::SingularJacobian);
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// `(θ̂, ρ̂)` with `θ̂ < ρ̂` solving `δ(θ, ρ) = observed` for the power or
/// Hermite family of degree `q`.
///
/// Damped Newton in `(ln θ, ln ρ)` with the analytic Jacobian, started from
/// the `H = 1/2` closed forms; falls back to a one-dimensional search over
/// the ratio `ρ/θ`, with `θ` eliminated through the scaling of `η_X`.
pub fn invert_delta_oufou<T: Real>(kind: PolyKind, q: usize, h: T, observed: (T, T)) -> Result<EstimateResult<T>> {
    check_kind(kind, q)?;
    let ex = sigma2_from_lambda(kind, q, observed.0);
    let es = sigma2_from_lambda(kind, q, observed.1);
    let (Some(ex), Some(es)) = (ex, es) else {
        return Err(Error::Range { observed: observed.0.min(observed.1).as_f64(), lo: 0.0, hi: f64::INFINITY });
    };
    // the image of δ lies above the curve traced by the diagonal θ = ρ
    let floor = oufou_diagonal_sigma(h, ex);
    if es <= floor {
        return Err(Error::Range { observed: es.as_f64(), lo: floor.as_f64(), hi: f64::INFINITY });
    }
    // (η_X, η_Σ) is invariant under swapping θ and ρ; return θ̂ < ρ̂
    let target = [ex, es];
    let mut notes = Vec::new();
    let newton = oufou_newton(h, target);
    let (theta, rho, iterations) = match newton {
        Some(v) => v,
        None => {
            notes.push("Newton did not converge; used the ratio search".to_string());
            let (t, r) = oufou_ratio_search(h, target)?;
            (t, r, 0)
        }
    };
    let (theta, rho) = if theta < rho { (theta, rho) } else { (rho, theta) };
    let (val, jac) = delta_oufou(h, theta, rho);
    let residual = ((val[0] - ex).abs() + (val[1] - es).abs()).as_f64();
    if (rho - theta).abs() < T::lit(1e-6) * rho {
        notes.push("estimate is close to the diagonal theta = rho; the map is ill-conditioned there".into());
        log::warn!("OUFOU inversion near theta = rho");
    }
    // chain rule through λ = λ(η)
    let dx = dlambda_dsigma2(kind, q, ex);
    let ds = dlambda_dsigma2(kind, q, es);
    let j = vec![jac[0][0] * dx, jac[0][1] * dx, jac[1][0] * ds, jac[1][1] * ds];
    Ok(EstimateResult::new(vec![theta, rho], j, InversionDiagnostics { iterations, residual, notes, ..Default::default() }))
}

/// `η_Σ(θ, θ)` at the `θ` where `η_X(θ, θ) = eta_x`: the lower edge of the
/// image of the OUFOU moment map.
pub fn oufou_diagonal_sigma<T: Real>(h: T, eta_x: T) -> T {
    let two = T::lit(2.0);
    let k = h * gamma(two * h);
    let a = two - two * h;
    // η_X(θ, θ) = K a θ^{-2H} / 2, η_Σ(θ, θ) = K H θ^{-2H-2}
    let theta = (two * eta_x / (k * a)).powf(-T::one() / (two * h));
    k * h * theta.powf(-two * h - two)
}

fn oufou_newton<T: Real>(h: T, target: [T; 2]) -> Option<(T, T, usize)> {
    let two = T::lit(2.0);
    // H = 1/2: η_X = 1/(2s), η_Σ = 1/(2ps), s = θ+ρ, p = θρ
    let s = T::one() / (two * target[0]);
    let p = target[0] / target[1];
    let disc = s * s - T::lit(4.0) * p;
    let (t0, r0) = if disc > T::zero() { ((s - disc.sqrt()) / two, (s + disc.sqrt()) / two) } else { (s * T::lit(0.4), s * T::lit(0.6)) };
    let (mut u, mut v) = (t0.max(T::lit(1e-6)).ln(), r0.max(T::lit(2e-6)).ln());
    let resid = |u: T, v: T| {
        let (val, _) = delta_oufou(h, u.exp(), v.exp());
        [val[0].ln() - target[0].ln(), val[1].ln() - target[1].ln()]
    };
    let mut r = resid(u, v);
    for it in 1..=100 {
        let norm = r[0].abs() + r[1].abs();
        if !norm.is_finite() {
            return None;
        }
        if norm < T::lit(1e-14) {
            return Some((u.exp(), v.exp(), it));
        }
        let (t, rh) = (u.exp(), v.exp());
        let (val, jac) = delta_oufou(h, t, rh);
        // Jacobian of log-values in log-parameters
        let jl = [[jac[0][0] * t / val[0], jac[0][1] * rh / val[0]], [jac[1][0] * t / val[1], jac[1][1] * rh / val[1]]];
        let inv = inv2(jl).ok()?;
        let du = inv[0][0] * r[0] + inv[0][1] * r[1];
        let dv = inv[1][0] * r[0] + inv[1][1] * r[1];
        let mut step = T::one();
        loop {
            let (nu, nv) = (u - step * du, v - step * dv);
            let nr = resid(nu, nv);
            let nn = nr[0].abs() + nr[1].abs();
            if nn.is_finite() && nn < norm && (nu - nv).abs() > T::lit(1e-10) {
                u = nu;
                v = nv;
                r = nr;
                break;
            }
            step /= two;
            if step < T::lit(1e-6) {
                return None;
            }
        }
    }
    None
}

/// Eliminate `θ` through the scaling `η_X ∝ θ^{-2H}`, `η_Σ ∝ θ^{-2H-2}` and
/// search the ratio `t = ρ/θ > 1` for a sign change.
fn oufou_ratio_search<T: Real>(h: T, target: [T; 2]) -> Result<(T, T)> {
    let two = T::lit(2.0);
    let k = h * gamma(two * h);
    let a = two - two * h;
    let b = -two * h;
    // at θ = 1: η_X(1,t) = k(t^a - 1)/(t²-1), η_Σ(1,t) = k(1 - t^b)/(t²-1)
    let theta_of = |t: T| {
        let ex1 = k * (t.powf(a) - T::one()) / (t * t - T::one());
        (ex1 / target[0]).powf(T::one() / (two * h))
    };
    let phi = |t: T| {
        let th = theta_of(t);
        let es1 = k * (T::one() - t.powf(b)) / (t * t - T::one());
        (es1 * th.powf(-two * h - two)).ln() - target[1].ln()
    };
    let grid: Vec<T> = (1..=400).map(|i| T::one() + T::lit(10.0).powf(T::lit(-6.0) + T::lit(12.0) * T::of(i) / T::lit(400.0))).collect();
    for w in grid.windows(2) {
        let (fa, fb) = (phi(w[0]), phi(w[1]));
        if fa.is_finite() && fb.is_finite() && fa.signum() != fb.signum() {
            let (mut lo, mut hi, mut flo) = (w[0], w[1], fa);
            for _ in 0..200 {
                let mid = (lo + hi) / two;
                let fm = phi(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            let t = (lo + hi) / two;
            let th = theta_of(t);
            return Ok((th, th * t));
        }
    }
    Err(Error::Inversion { iterations: 400, residual: f64::NAN })
}

/// `g'(θ*)² u / n` for a scalar map, or `J Γ Jᵀ / n` with `J` the Jacobian of
/// the inverse map (the inverse of the forward Jacobian).
pub fn delta_method_variance<T: Real>(forward_derivative: &[T], u: &[Vec<T>], n: usize) -> Result<Vec<Vec<T>>> {
    let nf = T::of(n.max(1));
    match forward_derivative.len() {
        1 => {
            let d = forward_derivative[0];
            if d == T::zero() || !d.is_finite() {
                return Err(Error::SingularJacobian);
            }
            Ok(vec![vec![u[0][0] / (d * d) / nf]])
        }
        4 => {
            let jf = [[forward_derivative[0], forward_derivative[1]], [forward_derivative[2], forward_derivative[3]]];
            let j = inv2(jf)?;
            let mut out = vec![vec![T::zero(); 2]; 2];
            for (a, row) in out.iter_mut().enumerate() {
                for (b, cell) in row.iter_mut().enumerate() {
                    let mut s = T::zero();
                    for c in 0..2 {
                        for d in 0..2 {
                            s += j[a][c] * u[c][d] * j[b][d];
                        }
                    }
                    *cell = s / nf;
                }
            }
            Ok(out)
        }
        _ => Err(Error::Argument("derivative must be a scalar or a 2x2 Jacobian".into())),
    }
}

fn family_poly<T: Real>(kind: PolyKind, q: usize, r0: T) -> Result<HermitePoly<T>> {
    match kind {
        PolyKind::Power => HermitePoly::power(q, r0),
        PolyKind::Hermite => HermitePoly::hermite(q, r0),
        PolyKind::General => Err(Error::UnsupportedPolynomial("general polynomials have no closed-form moment map".into())),
    }
}

/// `u_f(Z^θ)` of the stationary fOU sequence; `None` when it diverges.
pub fn fou_u<T: Real>(kind: PolyKind, q: usize, h: T, theta: T) -> Result<Option<T>> {
    let kernel = fou_kernel(theta, h)?;
    let poly = family_poly(kind, q, kernel.r0())?;
    Ok(u_limit(&poly, &kernel, T::lit(1e-10)))
}

/// `Γ` of the OUFOU pair: `Γ_ab = Σ_k d^a_k d^b_k (2k)! Σ_j ρ_ab(j)^{2k}`.
pub fn oufou_gamma<T: Real>(kind: PolyKind, q: usize, theta: T, rho: T, h: T) -> Result<Option<[[T; 2]; 2]>> {
    let ks = oufou_kernels(theta, rho, h)?;
    let px = family_poly(kind, q, ks.eta_x)?;
    let ps = family_poly(kind, q, ks.eta_sigma)?;
    let diag = |poly: &HermitePoly<T>, kernel: &CovKernel<T>| -> Option<T> {
        let mut total = T::zero();
        for (k, &d) in poly.coeffs().iter().enumerate().skip(1) {
            if d == T::zero() {
                continue;
            }
            let w = d * d * crate::special::factorial::<T>(2 * k);
            total += w * lag_power_sum(kernel, k, T::lit(1e-12))?;
        }
        Some(total)
    };
    let (Some(g11), Some(g22)) = (diag(&px, &ks.k_z), diag(&ps, &ks.k_sigma)) else {
        return Ok(None);
    };
    let norm = (ks.eta_x * ks.eta_sigma).sqrt();
    let lags = 1i64 << 14;
    let mut g12 = T::zero();
    for (k, (&dx, &ds)) in px.coeffs().iter().zip(ps.coeffs()).enumerate().skip(1) {
        if dx == T::zero() || ds == T::zero() {
            continue;
        }
        let pw = (2 * k) as i32;
        let s: T = (-lags..=lags).map(|j| (ks.cross.eval(j) / norm).powi(pw)).sum();
        g12 += dx * ds * crate::special::factorial::<T>(2 * k) * s;
    }
    Ok(Some([[g11, g12], [g12, g22]]))
}

/// Two-stage trimming point `⌈κ / drift⌉`.
pub fn choose_i0<T: Real>(preliminary_drift: T, kappa: T) -> Result<usize> {
    if !(preliminary_drift > T::zero()) {
        return Err(Error::Argument("preliminary drift must be positive".into()));
    }
    (kappa / preliminary_drift).ceil().to_usize().ok_or_else(|| Error::Argument("trimming point overflows".into()))
}

/// Drift estimate from an fOU path with delta-method interval (plug-in `u`
/// at the estimate). `i0` trims the first observations.
pub fn estimate_fou<T: Real>(values: &[T], kind: PolyKind, q: usize, h: T, i0: usize, policy: RangePolicy) -> Result<EstimateResult<T>> {
    let n = values.len().saturating_sub(i0);
    let poly = family_poly(kind, q, T::one())?;
    let qn = trimmed_variation(values, &poly, i0, n)?;
    let est = invert_mu_fou(kind, q, h, qn, policy)?;
    let theta = est.estimate[0];
    match fou_u(kind, q, h, theta)? {
        Some(u) => {
            let cov = delta_method_variance(&est.map_derivative, &[vec![u]], n)?;
            Ok(est.with_variance(cov))
        }
        None => Ok(est),
    }
}

/// Drift estimate for the second-kind model.
pub fn estimate_fou2<T: Real>(values: &[T], kind: PolyKind, q: usize, h: T, i0: usize, policy: RangePolicy) -> Result<EstimateResult<T>> {
    let n = values.len().saturating_sub(i0);
    let poly = family_poly(kind, q, T::one())?;
    let qn = trimmed_variation(values, &poly, i0, n)?;
    let est = invert_nu_fou2(kind, q, h, qn, policy)?;
    let alpha = est.estimate[0];
    let kernel = crate::cov_models::fou2_kernel(alpha, h)?;
    let p = family_poly(kind, q, kernel.r0())?;
    match u_limit(&p, &kernel, T::lit(1e-10)) {
        Some(u) => {
            let cov = delta_method_variance(&est.map_derivative, &[vec![u]], n)?;
            Ok(est.with_variance(cov))
        }
        None => Ok(est),
    }
}

/// `(θ̂, ρ̂)` from the OUFOU path and its companion.
pub fn estimate_oufou<T: Real>(x: &[T], sigma: &[T], kind: PolyKind, q: usize, h: T, i0: usize) -> Result<EstimateResult<T>> {
    let n = x.len().saturating_sub(i0);
    let poly = family_poly(kind, q, T::one())?;
    let qx = trimmed_variation(x, &poly, i0, n)?;
    let qs = trimmed_variation(sigma, &poly, i0, n)?;
    let est = invert_delta_oufou(kind, q, h, (qx, qs))?;
    match oufou_gamma(kind, q, est.estimate[0], est.estimate[1], h)? {
        Some(g) => {
            let cov = delta_method_variance(&est.map_derivative, &[g[0].to_vec(), g[1].to_vec()], n)?;
            Ok(est.with_variance(cov))
        }
        None => Ok(est),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mu_examples() {
        assert_relative_eq!(mu_fou(PolyKind::Hermite, 2, 0.5, 2.0).unwrap(), 1.0 / 4.0 - 1.0, max_relative = 1e-12);
        assert_relative_eq!(mu_fou(PolyKind::Power, 2, 0.75, 1.0).unwrap(), 0.75 * gamma(1.5), max_relative = 1e-14);
        let s = fou_variance(0.7, 0.6);
        assert_relative_eq!(mu_fou(PolyKind::Power, 4, 0.6, 0.7).unwrap(), 3.0 * s * s, max_relative = 1e-12);
    }

    #[test]
    fn inversions_round_trip() {
        let e = invert_mu_fou(PolyKind::Hermite, 2, 0.5, 0.0, RangePolicy::Strict).unwrap();
        assert_relative_eq!(e.estimate[0], 0.5, max_relative = 1e-12);
        for &h in &[0.1, 0.5, 0.9] {
            for &th in &[0.1, 1.0, 10.0] {
                for kind in [PolyKind::Hermite, PolyKind::Power] {
                    let m = mu_fou(kind, 2, h, th).unwrap();
                    let e = invert_mu_fou(kind, 2, h, m, RangePolicy::Strict).unwrap();
                    assert_relative_eq!(e.estimate[0], th, max_relative = 1e-10);
                }
            }
        }
        let e = invert_nu_fou2(PolyKind::Power, 2, 0.75, fou2_variance(1.0, 0.75), RangePolicy::Strict).unwrap();
        assert_relative_eq!(e.estimate[0], 1.0, max_relative = 1e-10);
        let e = invert_nu_fou2(PolyKind::Hermite, 2, 0.75, fou2_variance(1.0, 0.75) - 1.0, RangePolicy::Strict).unwrap();
        assert_relative_eq!(e.estimate[0], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn derivatives_match_differences() {
        let f = |a: f64| nu_fou2(PolyKind::Power, 2, 0.7, a).unwrap();
        let fd = (f(1.3 + 1e-6) - f(1.3 - 1e-6)) / 2e-6;
        assert_relative_eq!(nu_fou2_derivative(PolyKind::Power, 2, 0.7, 1.3), fd, max_relative = 1e-6);
        let g = |t: f64| mu_fou(PolyKind::Hermite, 2, 0.7, t).unwrap();
        let gd = (g(0.8 + 1e-6) - g(0.8 - 1e-6)) / 2e-6;
        assert_relative_eq!(mu_fou_derivative(PolyKind::Hermite, 2, 0.7, 0.8), gd, max_relative = 1e-6);
        let (_, j) = delta_oufou(0.6, 1.0, 2.0);
        let e = 1e-6;
        let (p, _) = delta_oufou(0.6, 1.0 + e, 2.0);
        let (m, _) = delta_oufou(0.6, 1.0 - e, 2.0);
        assert_relative_eq!(j[0][0], (p[0] - m[0]) / (2.0 * e), max_relative = 1e-6);
        assert_relative_eq!(j[1][0], (p[1] - m[1]) / (2.0 * e), max_relative = 1e-6);
    }

    #[test]
    fn oufou_inversion() {
        let e = invert_delta_oufou(PolyKind::Power, 2, 0.5, (1.0 / 6.0, 1.0 / 12.0)).unwrap();
        assert_relative_eq!(e.estimate[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(e.estimate[1], 2.0, max_relative = 1e-8);
        let (v, _) = delta_oufou(0.6, 1.0, 2.0);
        let e = invert_delta_oufou(PolyKind::Power, 2, 0.6, (v[0], v[1])).unwrap();
        assert_relative_eq!(e.estimate[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(e.estimate[1], 2.0, max_relative = 1e-8);
        let floor = oufou_diagonal_sigma(0.6, v[0]);
        let (d, _) = delta_oufou(0.6, 1.5, 1.5 * (1.0 + 1e-7));
        assert_relative_eq!(oufou_diagonal_sigma(0.6, d[0]), d[1], max_relative = 1e-5);
        let below = invert_delta_oufou(PolyKind::Power, 2, 0.6, (v[0], 0.999 * floor));
        assert!(matches!(below, Err(Error::Range { .. })));
        let fallback = oufou_ratio_search(0.6, v).unwrap();
        assert_relative_eq!(fallback.0, 1.0, max_relative = 1e-8);
        assert_relative_eq!(fallback.1, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn fd_map_is_monotone_and_branches() {
        assert!(matches!(invert_mu_fd_fou(0.75, 0.0, FdMode::Paper, None), Err(Error::Argument(_))));
        let v = mu_fd_fou(0.75, 1.0, FdMode::Paper).unwrap();
        let expected = 1f64.exp() / (2.0 + (-2f64).exp()) * (0.75 * gamma(1.5f64) - 1.0);
        assert_relative_eq!(v, expected, max_relative = 1e-14);
        for mode in [FdMode::Paper, FdMode::Numeric] {
            assert!(fd_theta_min(0.75, mode).is_none());
            let e = invert_mu_fd_fou(0.75, mu_fd_fou(0.75, 1.7, mode).unwrap(), mode, Some(Branch::Left)).unwrap();
            assert_relative_eq!(e.estimate[0], 1.7, max_relative = 1e-8);
            assert!(matches!(invert_mu_fd_fou(0.75, v, mode, Some(Branch::Right)), Err(Error::Range { .. })));
        }
    }

    #[test]
    fn trimming_point() {
        assert_eq!(choose_i0(1.0, 10.0).unwrap(), 10);
        assert_eq!(choose_i0(0.5, 10.0).unwrap(), 20);
        assert!(choose_i0(0.0, 10.0).is_err());
    }
}
