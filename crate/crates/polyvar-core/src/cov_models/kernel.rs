use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Asymptotic behaviour of `r(k)` beyond the tabulated range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail<T> {
    /// `r(k) ≈ constant · k^{-exponent}`.
    Power { constant: T, exponent: T },
    /// `|r(k)| ≤ C e^{-rate k}`.
    Exponential { rate: T },
    /// `r(k) = 0` for `k > last`.
    Finite { last: usize },
}

/// Descriptive metadata carried by a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelMeta {
    pub model: String,
    pub params: Vec<(String, f64)>,
    pub diff_order: usize,
}

impl KernelMeta {
    pub fn new(model: &str, params: &[(&str, f64)]) -> Self {
        Self {
            model: model.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            diff_order: 0,
        }
    }
}

type Source<T> = Arc<dyn Fn(usize) -> T + Send + Sync>;

/// Stationary autocovariance on integer lags, memoized up to
/// `max_tabulated_lag`.
///
/// Lags beyond the table are computed from the source function when one is
/// present; imported tables without a source fall back on the power tail (if
/// declared) and zero otherwise.
#[derive(Clone)]
pub struct CovKernel<T: Real> {
    table: Vec<T>,
    source: Option<Source<T>>,
    tail: Option<Tail<T>>,
    meta: KernelMeta,
}

impl<T: Real> fmt::Debug for CovKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovKernel")
            .field("r0", &self.table[0])
            .field("max_tabulated_lag", &self.max_tabulated_lag())
            .field("tail", &self.tail)
            .field("meta", &self.meta)
            .finish()
    }
}

impl<T: Real> CovKernel<T> {
    /// Kernel backed by a lag function `f(|k|)`.
    pub fn from_fn<F>(meta: KernelMeta, tail: Option<Tail<T>>, f: F) -> Result<Self>
    where
        F: Fn(usize) -> T + Send + Sync + 'static,
    {
        let r0 = f(0);
        if !(r0 > T::zero()) || !r0.is_finite() {
            return Err(Error::InvalidParameter(format!("kernel variance must be positive, got {r0}")));
        }
        Ok(Self { table: vec![r0], source: Some(Arc::new(f)), tail, meta })
    }

    /// Kernel given by its values `r(0), r(1), ...`.
    pub fn tabulated(values: Vec<T>, tail: Option<Tail<T>>, meta: KernelMeta) -> Result<Self> {
        match values.first() {
            Some(&r0) if r0 > T::zero() && r0.is_finite() => {}
            _ => return Err(Error::InvalidParameter("kernel table must start with a positive r(0)".into())),
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("kernel table has non-finite entries".into()));
        }
        let tail = tail.or(Some(Tail::Finite { last: values.len() - 1 }));
        Ok(Self { table: values, source: None, tail, meta })
    }

    /// Kernel from a table with a source function for lags beyond it.
    pub fn with_source<F>(values: Vec<T>, tail: Option<Tail<T>>, meta: KernelMeta, f: F) -> Result<Self>
    where
        F: Fn(usize) -> T + Send + Sync + 'static,
    {
        let mut k = Self::tabulated(values, tail, meta)?;
        k.source = Some(Arc::new(f));
        k.tail = tail;
        Ok(k)
    }

    /// `r(lag)`, symmetric in the sign of `lag`.
    pub fn eval(&self, lag: i64) -> T {
        let k = lag.unsigned_abs() as usize;
        if let Some(v) = self.table.get(k) {
            return *v;
        }
        if let Some(src) = &self.source {
            return src(k);
        }
        match self.tail {
            Some(Tail::Power { constant, exponent }) => constant * T::of(k).powf(-exponent),
            _ => T::zero(),
        }
    }

    /// `r(0)`.
    pub fn r0(&self) -> T {
        self.table[0]
    }

    pub fn tail(&self) -> Option<Tail<T>> {
        self.tail
    }

    /// Decay exponent `α` of a power tail.
    pub fn tail_exponent(&self) -> Option<T> {
        match self.tail {
            Some(Tail::Power { exponent, .. }) => Some(exponent),
            _ => None,
        }
    }

    pub fn max_tabulated_lag(&self) -> usize {
        self.table.len() - 1
    }

    pub fn meta(&self) -> &KernelMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut KernelMeta {
        &mut self.meta
    }

    /// Has a source for lags beyond the table.
    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// Extend the memo table through `max_lag` (no-op without a source).
    pub fn tabulate(&mut self, max_lag: usize) {
        if let Some(src) = &self.source {
            let start = self.table.len();
            self.table.extend((start..=max_lag).map(|k| src(k)));
        }
    }

    /// Builder form of [`CovKernel::tabulate`].
    pub fn tabulated_to(mut self, max_lag: usize) -> Self {
        self.tabulate(max_lag);
        self
    }

    /// `r(0), ..., r(n-1)`.
    pub fn values(&self, n: usize) -> Vec<T> {
        (0..n).map(|k| self.eval(k as i64)).collect()
    }

    /// Dense Toeplitz matrix `[r(i-j)]`, row-major.
    pub fn toeplitz(&self, n: usize) -> Vec<T> {
        let r = self.values(n);
        let mut m = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = r[i.abs_diff(j)];
            }
        }
        m
    }

    /// Same kernel values in another float type (table only plus source).
    pub fn cast<U: Real>(&self) -> CovKernel<U> {
        let src = self.source.clone();
        let table = self.table.iter().map(|v| U::lit(v.as_f64())).collect();
        let tail = self.tail.map(|t| match t {
            Tail::Power { constant, exponent } => Tail::Power { constant: U::lit(constant.as_f64()), exponent: U::lit(exponent.as_f64()) },
            Tail::Exponential { rate } => Tail::Exponential { rate: U::lit(rate.as_f64()) },
            Tail::Finite { last } => Tail::Finite { last },
        });
        CovKernel {
            table,
            source: src.map(|s| Arc::new(move |k: usize| U::lit(s(k).as_f64())) as Source<U>),
            tail,
            meta: self.meta.clone(),
        }
    }
}

/// Parametric process families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProcessModel<T> {
    /// Fractional Gaussian noise with Hurst index `hurst` and variance `sigma2`.
    Fgn { hurst: T, sigma2: T },
    /// Fractional Ornstein-Uhlenbeck process with drift `theta`.
    Fou { theta: T, hurst: T },
    /// OU process driven by an fOU process (drifts `theta`, `rho`).
    Oufou { theta: T, rho: T, hurst: T },
    /// fOU process of the second kind.
    Fou2 { alpha: T, hurst: T },
    /// A user-supplied kernel table.
    Tabulated,
}

impl<T: Real> ProcessModel<T> {
    /// Check parameter constraints.
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        let hurst_ok = |h: T| h > zero && h < one;
        match *self {
            ProcessModel::Fgn { hurst, sigma2 } => {
                if !hurst_ok(hurst) || !(sigma2 > zero) {
                    return Err(Error::InvalidParameter("FGN needs H in (0,1) and sigma2 > 0".into()));
                }
            }
            ProcessModel::Fou { theta, hurst } => {
                if !hurst_ok(hurst) || !(theta > zero) {
                    return Err(Error::InvalidParameter("FOU needs H in (0,1) and theta > 0".into()));
                }
            }
            ProcessModel::Oufou { theta, rho, hurst } => {
                if !hurst_ok(hurst) || !(theta > zero) || !(rho > zero) {
                    return Err(Error::InvalidParameter("OUFOU needs H in (0,1), theta > 0, rho > 0".into()));
                }
                if theta == rho {
                    return Err(Error::DegenerateParameters("OUFOU requires theta != rho".into()));
                }
            }
            ProcessModel::Fou2 { alpha, hurst } => {
                if !(alpha > zero) {
                    return Err(Error::InvalidParameter("FOU2 needs alpha > 0".into()));
                }
                if !(hurst > T::lit(0.5) && hurst < one) {
                    return Err(Error::UnsupportedRegime("FOU2 requires H in (1/2, 1)".into()));
                }
            }
            ProcessModel::Tabulated => {}
        }
        Ok(())
    }

    /// Hurst index when the family has one.
    pub fn hurst(&self) -> Option<T> {
        match *self {
            ProcessModel::Fgn { hurst, .. }
            | ProcessModel::Fou { hurst, .. }
            | ProcessModel::Oufou { hurst, .. }
            | ProcessModel::Fou2 { hurst, .. } => Some(hurst),
            ProcessModel::Tabulated => None,
        }
    }

    /// Polynomial decay index `γ` of the non-stationary correction moments:
    /// 1 for the OU-type families, infinite for stationary ones.
    pub fn nonstat_decay(&self) -> T {
        match self {
            ProcessModel::Fou { .. } | ProcessModel::Oufou { .. } | ProcessModel::Fou2 { .. } => T::one(),
            _ => T::infinity(),
        }
    }

    /// Exponential rate at which the correction term `Y_k` dies out.
    pub fn drift(&self) -> Option<T> {
        match *self {
            ProcessModel::Fou { theta, .. } => Some(theta),
            ProcessModel::Oufou { theta, rho, .. } => Some(theta.min(rho)),
            ProcessModel::Fou2 { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Short name used in metadata and reports.
    pub fn name(&self) -> &'static str {
        match self {
            ProcessModel::Fgn { .. } => "fgn",
            ProcessModel::Fou { .. } => "fou",
            ProcessModel::Oufou { .. } => "oufou",
            ProcessModel::Fou2 { .. } => "fou2",
            ProcessModel::Tabulated => "tabulated",
        }
    }
}
