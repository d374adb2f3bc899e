//! Monte Carlo rate studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use polyvar_core::cov_models::{finite_diff_kernel, oufou_eta_sigma, oufou_eta_x, CovKernel, ProcessModel};
use polyvar_core::estimators::{
    delta_method_variance, fou_u, invert_delta_oufou, invert_mu_fd_fou, invert_mu_fou, invert_nu_fou2, mu_fou_derivative,
    oufou_gamma, EstimateResult, FdMode,
};
use polyvar_core::exact_sampler::{decay_correct, substream, FouPairSampler, StationarySampler};
use polyvar_core::hermite_basis::{lambda_target, HermitePoly, PolyKind};
use polyvar_core::rate_bounds::{effective_hurst, rate_class_for, tv_upper_bound, Normalization, RateClass};
use polyvar_core::variation_stats::{exact_var_u, finite_diff, q_variation, quad_cumulants, u_limit};

use crate::config::{Distance, ExperimentConfig, StatMode};
use crate::distances::distances_with_bootstrap;
use crate::error::{HarnessError, Result};
use crate::fit::{rate_fit, RateFit, RatePoint};

/// Bootstrap resamples per distance standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Largest tolerated share of replications whose estimator failed
/// numerically. Observations outside the range of a moment map are excluded
/// and counted separately.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// One grid point of a rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Distances are `None` when not requested in `statistic.distances`.
    #[serde(rename = "dW_hat")]
    pub dw_hat: Option<f64>,
    #[serde(rename = "dW_se")]
    pub dw_se: Option<f64>,
    #[serde(rename = "dK_hat")]
    pub dk_hat: Option<f64>,
    #[serde(rename = "dK_se")]
    pub dk_se: Option<f64>,
    /// `None` when the bound is not available (divergent variance series).
    pub tv_bound: Option<f64>,
    pub predicted_class: RateClass,
    /// Variance of the reference normal law.
    pub reference_variance: f64,
    /// Exact third and fourth cumulants of the normalized quadratic variation.
    #[serde(rename = "kappa3_F")]
    pub kappa3_f: f64,
    #[serde(rename = "kappa4_F")]
    pub kappa4_f: f64,
    pub estimator_bias: Option<Vec<f64>>,
    pub estimator_rmse: Option<Vec<f64>>,
    /// Share of replications whose 95% interval covers the truth, per component.
    pub estimator_coverage: Option<Vec<f64>>,
    /// `n` times the empirical covariance of the estimates.
    pub estimator_scaled_cov: Option<Vec<Vec<f64>>>,
    /// Delta-method prediction of `estimator_scaled_cov` at the true parameters.
    pub estimator_predicted_cov: Option<Vec<Vec<f64>>>,
    pub failures: usize,
    /// Replications whose statistic fell outside the range of the moment map.
    pub out_of_range: usize,
}

/// Fitted slopes and per-`n` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    #[serde(rename = "fit_dW")]
    pub fit_dw: Option<RateFit>,
    #[serde(rename = "fit_dK")]
    pub fit_dk: Option<RateFit>,
    pub fit_tv: Option<RateFit>,
    pub predicted_class: RateClass,
    /// Predicted power of `n`, when the class is a pure power.
    pub predicted_exponent: Option<f64>,
}

enum Source {
    Single(StationarySampler<f64>),
    Pair(FouPairSampler<f64>),
}

/// Everything a worker needs for one `n`; shared read-only.
struct Plan<'a> {
    cfg: &'a ExperimentConfig,
    model: ProcessModel<f64>,
    kind: PolyKind,
    q: usize,
    f: HermitePoly<f64>,
    n: usize,
    lambda: f64,
    scale: f64,
    source: Source,
    truth: Vec<f64>,
}

/// Estimates with their standard errors, if available.
type Estimate = (Vec<f64>, Option<Vec<f64>>);

struct RepOut {
    stat: f64,
    estimate: Option<std::result::Result<Estimate, polyvar_core::Error>>,
}

fn truth_of(model: &ProcessModel<f64>) -> Vec<f64> {
    match *model {
        ProcessModel::Fou { theta, .. } => vec![theta],
        ProcessModel::Oufou { theta, rho, .. } => vec![theta.min(rho), theta.max(rho)],
        ProcessModel::Fou2 { alpha, .. } => vec![alpha],
        _ => Vec::new(),
    }
}

impl Plan<'_> {
    fn observed(&self, values: Vec<f64>) -> Vec<f64> {
        match self.cfg.statistic.mode {
            StatMode::FiniteDiff => finite_diff(&values, self.cfg.statistic.diff_order()),
            StatMode::Trimmed => values[self.cfg.statistic.trim()..].to_vec(),
            _ => values,
        }
    }

    fn started_at_zero(&self, z: Vec<f64>) -> Vec<f64> {
        match (self.cfg.statistic.mode, self.model) {
            (StatMode::Nonstationary | StatMode::Trimmed, ProcessModel::Fou { theta, .. }) => decay_correct(&z, theta),
            (StatMode::Nonstationary | StatMode::Trimmed, ProcessModel::Fou2 { alpha, .. }) => decay_correct(&z, alpha),
            _ => z,
        }
    }

    /// Two replications from one generator.
    fn replicate_pair(&self, pair: u64, stream: u64) -> [RepOut; 2] {
        let mut rng = substream(self.cfg.seed, pair, stream);
        match &self.source {
            Source::Single(s) => {
                let [a, b] = s.draw_pair(&mut rng);
                [self.finish(self.observed(self.started_at_zero(a)), None), self.finish(self.observed(self.started_at_zero(b)), None)]
            }
            Source::Pair(s) => {
                let [(ta, ra), (tb, rb)] = s.draw_pairs(&mut rng);
                let stationary = self.cfg.statistic.mode == StatMode::Stationary;
                let out = [(ta, ra), (tb, rb)].map(|(t, r)| {
                    let d = s.assemble(&t, &r);
                    let (x, sg) = if stationary { (d.z, d.sigma) } else { (d.x, d.sigma_path) };
                    (self.observed(x), self.observed(sg))
                });
                let [(x0, s0), (x1, s1)] = out;
                [self.finish(x0, Some(s0)), self.finish(x1, Some(s1))]
            }
        }
    }

    fn finish(&self, x: Vec<f64>, sigma: Option<Vec<f64>>) -> RepOut {
        let q = q_variation(&x, &self.f);
        let stat = (self.n as f64).sqrt() * (q - self.lambda) / self.scale;
        let estimate = self.cfg.estimation.enabled.then(|| self.estimate(&x, sigma.as_deref(), q));
        RepOut { stat, estimate }
    }

    fn estimate(&self, x: &[f64], sigma: Option<&[f64]>, q: f64) -> std::result::Result<Estimate, polyvar_core::Error> {
        let est = self.cfg.estimation.clone();
        let n = x.len();
        let with_se = |e: EstimateResult<f64>| (e.estimate.clone(), e.std_error.clone());
        match self.model {
            ProcessModel::Fou { hurst, .. } if self.cfg.statistic.mode == StatMode::FiniteDiff => {
                let e = invert_mu_fd_fou(hurst, q, est.fd_mode.unwrap_or(FdMode::Numeric), est.branch)?;
                Ok(with_se(e))
            }
            ProcessModel::Fou { hurst, .. } => {
                let e = invert_mu_fou(self.kind, self.q, hurst, q, est.range_policy)?;
                let e = match fou_u(self.kind, self.q, hurst, e.estimate[0])? {
                    Some(u) => {
                        let cov = delta_method_variance(&e.map_derivative, &[vec![u]], n)?;
                        e.with_variance(cov)
                    }
                    None => e,
                };
                Ok(with_se(e))
            }
            ProcessModel::Fou2 { hurst, .. } => {
                let e = invert_nu_fou2(self.kind, self.q, hurst, q, est.range_policy)?;
                Ok(with_se(e))
            }
            ProcessModel::Oufou { hurst, .. } => {
                let sigma = sigma.ok_or_else(|| polyvar_core::Error::Argument("OUFOU estimation needs the companion path".into()))?;
                let qs = q_variation(sigma, &self.f);
                let e = invert_delta_oufou(self.kind, self.q, hurst, (q, qs))?;
                let e = match oufou_gamma(self.kind, self.q, e.estimate[0], e.estimate[1], hurst)? {
                    Some(g) => {
                        let cov = delta_method_variance(&e.map_derivative, &[g[0].to_vec(), g[1].to_vec()], n)?;
                        e.with_variance(cov)
                    }
                    None => e,
                };
                Ok(with_se(e))
            }
            _ => Err(polyvar_core::Error::Argument(format!("no estimator for model {}", self.model.name()))),
        }
    }

    /// `n` times the delta-method covariance at the true parameters.
    fn predicted_cov(&self) -> Option<Vec<Vec<f64>>> {
        let run = || -> polyvar_core::Result<Option<Vec<Vec<f64>>>> {
            match self.model {
                ProcessModel::Fou { theta, hurst } if self.cfg.statistic.mode != StatMode::FiniteDiff => {
                    let d = mu_fou_derivative(self.kind, self.q, hurst, theta);
                    match fou_u(self.kind, self.q, hurst, theta)? {
                        Some(u) => Ok(Some(delta_method_variance(&[d], &[vec![u]], 1)?)),
                        None => Ok(None),
                    }
                }
                ProcessModel::Oufou { theta, rho, hurst } => {
                    let lx = lambda_target(self.kind, self.q, oufou_eta_x(theta, rho, hurst), None)?;
                    let ls = lambda_target(self.kind, self.q, oufou_eta_sigma(theta, rho, hurst), None)?;
                    let e = invert_delta_oufou(self.kind, self.q, hurst, (lx, ls))?;
                    match oufou_gamma(self.kind, self.q, theta, rho, hurst)? {
                        Some(g) => Ok(Some(delta_method_variance(&e.map_derivative, &[g[0].to_vec(), g[1].to_vec()], 1)?)),
                        None => Ok(None),
                    }
                }
                _ => Ok(None),
            }
        };
        run().unwrap_or_else(|e| {
            log::warn!("predicted estimator covariance unavailable: {e}");
            None
        })
    }
}

/// Stationary kernel of the statistic's input sequence.
pub fn statistic_kernel(cfg: &ExperimentConfig) -> Result<CovKernel<f64>> {
    let base = cfg.model.kernel(&cfg.base_dir)?;
    let p = cfg.statistic.diff_order();
    Ok(if p > 0 { finite_diff_kernel(&base, p)? } else { base })
}

/// `(λ, variance of the reference normal, scale)` of the statistic at `n`.
fn centring(cfg: &ExperimentConfig, f_eff: &HermitePoly<f64>, kernel: &CovKernel<f64>, n: usize) -> Result<(f64, f64, f64)> {
    let lambda = f_eff.coeff(0);
    let exact = exact_var_u(f_eff, kernel, n);
    let limit = || u_limit(f_eff, kernel, 1e-10).ok_or_else(|| polyvar_core::Error::Divergence("asymptotic variance is infinite".into()));
    Ok(match cfg.normalization() {
        Normalization::ExactVariance => (lambda, 1.0, exact.sqrt()),
        Normalization::AsymptoticVariance => (lambda, 1.0, limit()?.sqrt()),
        Normalization::None => (lambda, limit().unwrap_or(exact), 1.0),
    })
}

/// Run the configured grid. Deterministic for a fixed config and seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if grid.replications < 100 {
        return Err(HarnessError::Config("distance estimation needs at least 100 replications".into()));
    }
    if grid.n.len() > 128 {
        return Err(HarnessError::Config("at most 128 grid points".into()));
    }
    let model = cfg.model.process_model()?;
    let kernel = statistic_kernel(cfg)?;
    let base_kernel = cfg.model.kernel(&cfg.base_dir)?;
    let f = cfg.poly.base()?;
    let f_eff = cfg.poly.at_variance(kernel.r0())?;
    let q = f.degree();
    let norm = cfg.normalization();
    let diff = cfg.statistic.diff_order();
    let class = match model {
        ProcessModel::Tabulated => rate_class_for(
            &ProcessModel::Fgn { hurst: effective_hurst(&kernel).clamp(1e-6, 1.0 - 1e-6), sigma2: 1.0 },
            q,
            norm,
            0,
        ),
        _ => rate_class_for(&model, q, norm, diff),
    };
    let h_eff = model.hurst().map(|h| h - diff as f64).unwrap_or_else(|| effective_hurst(&kernel));
    let want_w = cfg.statistic.distances.contains(&Distance::Wasserstein1);
    let want_k = cfg.statistic.distances.contains(&Distance::Kolmogorov);
    let pair_source = matches!(model, ProcessModel::Oufou { .. }) && (cfg.estimation.enabled || cfg.statistic.mode != StatMode::Stationary);
    let mut rows = Vec::with_capacity(grid.n.len());
    for (g, &n) in grid.n.iter().enumerate() {
        let (lambda, ref_var, scale) = centring(cfg, &f_eff, &kernel, n)?;
        let len = match cfg.statistic.mode {
            StatMode::Trimmed => n + cfg.statistic.trim(),
            StatMode::FiniteDiff => n + diff,
            _ => n,
        };
        let source = match model {
            ProcessModel::Oufou { theta, rho, hurst } if pair_source => Source::Pair(FouPairSampler::new(theta, rho, hurst, len)?),
            _ => Source::Single(StationarySampler::new(&base_kernel, len)?),
        };
        let plan = Plan { cfg, model, kind: cfg.poly.kind, q, f: f.clone(), n, lambda, scale, source, truth: truth_of(&model) };
        let m = grid.replications;
        let pairs = m.div_ceil(2) as u64;
        let reps: Vec<RepOut> = (0..pairs).into_par_iter().flat_map_iter(|j| plan.replicate_pair(j, g as u64)).collect();
        let reps = &reps[..m];
        let stats: Vec<f64> = reps.iter().map(|r| r.stat).collect();
        let mut brng = substream(cfg.seed, 0, 128 + g as u64);
        let d = distances_with_bootstrap(&stats, ref_var, BOOTSTRAP_RESAMPLES, &mut brng);
        let tv = match tv_upper_bound(&f_eff, &kernel, n, norm) {
            Ok(v) => Some(v),
            Err(e) => {
                log::info!("n = {n}: no total-variation bound ({e})");
                None
            }
        };
        let cum = quad_cumulants(&kernel, n);
        let mut row = ExperimentRow {
            n,
            m,
            dw_hat: want_w.then_some(d.w1),
            dw_se: want_w.then_some(d.w1_se),
            dk_hat: want_k.then_some(d.ks),
            dk_se: want_k.then_some(d.ks_se),
            tv_bound: tv,
            predicted_class: class,
            reference_variance: ref_var,
            kappa3_f: cum.kappa3_f(),
            kappa4_f: cum.kappa4_f(),
            estimator_bias: None,
            estimator_rmse: None,
            estimator_coverage: None,
            estimator_scaled_cov: None,
            estimator_predicted_cov: None,
            failures: 0,
            out_of_range: 0,
        };
        if cfg.estimation.enabled {
            estimator_summary(&plan, reps, &mut row)?;
        }
        log::info!("n = {n}: dW = {:?}, dK = {:?}", row.dw_hat, row.dk_hat);
        rows.push(row);
    }
    let fit_on = |get: &dyn Fn(&ExperimentRow) -> Option<(f64, f64)>| -> Option<RateFit> {
        let pts: Vec<RatePoint> = rows.iter().filter_map(|r| get(r).map(|(d, se)| RatePoint { n: r.n as f64, distance: d, se })).collect();
        match rate_fit(&pts) {
            Ok(f) => Some(f),
            Err(e) => {
                log::warn!("no slope fit: {e}");
                None
            }
        }
    };
    let fit_dw = if want_w { fit_on(&|r| r.dw_hat.zip(r.dw_se)) } else { None };
    let fit_dk = if want_k { fit_on(&|r| r.dk_hat.zip(r.dk_se)) } else { None };
    let fit_tv = fit_on(&|r| r.tv_bound.map(|b| (b, 0.0)));
    Ok(ExperimentResult { rows, fit_dw, fit_dk, fit_tv, predicted_class: class, predicted_exponent: class.exponent(h_eff) })
}

fn estimator_summary(plan: &Plan<'_>, reps: &[RepOut], row: &mut ExperimentRow) -> Result<()> {
    let mut ok = Vec::new();
    let mut failures = 0usize;
    let mut out_of_range = 0usize;
    for r in reps {
        match &r.estimate {
            Some(Ok(v)) => ok.push(v),
            Some(Err(polyvar_core::Error::Range { .. })) => out_of_range += 1,
            Some(Err(e)) => {
                failures += 1;
                log::debug!("replication failed: {e}");
            }
            None => {}
        }
    }
    row.failures = failures;
    row.out_of_range = out_of_range;
    if out_of_range > 0 {
        log::warn!("n = {}: {out_of_range} observations outside the range of the moment map", plan.n);
    }
    if failures as f64 > MAX_FAILURE_RATE * reps.len() as f64 {
        return Err(HarnessError::TooManyFailures { n: plan.n, failed: failures, total: reps.len() });
    }
    if failures > 0 {
        log::warn!("n = {}: {failures} replications excluded", plan.n);
    }
    let dim = plan.truth.len();
    if ok.is_empty() || dim == 0 {
        return Ok(());
    }
    let k = ok.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|i| ok.iter().map(|(e, _)| e[i]).sum::<f64>() / k).collect();
    row.estimator_bias = Some((0..dim).map(|i| mean[i] - plan.truth[i]).collect());
    row.estimator_rmse = Some((0..dim).map(|i| (ok.iter().map(|(e, _)| (e[i] - plan.truth[i]).powi(2)).sum::<f64>() / k).sqrt()).collect());
    let with_se: Vec<_> = ok.iter().filter_map(|(e, s)| s.as_ref().map(|s| (e, s))).collect();
    if !with_se.is_empty() {
        let z = polyvar_core::special::norm_ppf(0.975);
        row.estimator_coverage = Some(
            (0..dim)
                .map(|i| with_se.iter().filter(|(e, s)| (e[i] - plan.truth[i]).abs() <= z * s[i]).count() as f64 / with_se.len() as f64)
                .collect(),
        );
    }
    let nf = plan.n as f64;
    let cov = (0..dim)
        .map(|a| (0..dim).map(|b| nf * ok.iter().map(|(e, _)| (e[a] - mean[a]) * (e[b] - mean[b])).sum::<f64>() / (k - 1.0).max(1.0)).collect())
        .collect();
    row.estimator_scaled_cov = Some(cov);
    row.estimator_predicted_cov = plan.predicted_cov();
    Ok(())
}
