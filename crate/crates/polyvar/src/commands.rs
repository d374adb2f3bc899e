//! The CLI subcommands and their output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use polyvar_core::cov_models::ProcessModel;
use polyvar_core::estimators::{estimate_fou, estimate_fou2, estimate_oufou, invert_mu_fd_fou, EstimateResult, FdMode};
use polyvar_core::exact_sampler::{decay_correct, substream, FouPairSampler, StationarySampler};
use polyvar_core::io::{read_path_csv, write_kernel_csv, write_path_csv};
use polyvar_core::rate_bounds::{bound_report, BoundReport};
use polyvar_core::variation_stats::{finite_diff, q_variation, quad_cumulants, variation_report, VariationReport};

use crate::config::{ExperimentConfig, StatMode};
use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, statistic_kernel, ExperimentResult};

fn out_file(cfg: &ExperimentConfig, suffix: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.join(format!("{}{suffix}", cfg.output.prefix)))
}

fn write_json<S: Serialize>(cfg: &ExperimentConfig, suffix: &str, value: &S) -> Result<PathBuf> {
    let path = out_file(cfg, suffix)?;
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

/// Raw path (and OUFOU companion) number `index` of length `len`, started at
/// zero unless the statistic mode is stationary.
pub fn draw_path(cfg: &ExperimentConfig, len: usize, index: u64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let model = cfg.model.process_model()?;
    let stationary = matches!(cfg.statistic.mode, StatMode::Stationary | StatMode::FiniteDiff);
    let mut rng = substream(cfg.seed, index, 0);
    if let ProcessModel::Oufou { theta, rho, hurst } = model {
        let s = FouPairSampler::new(theta, rho, hurst, len)?;
        let (t, r) = s.draw_pair(&mut rng);
        let d = s.assemble(&t, &r);
        return Ok(if stationary { (d.z, Some(d.sigma)) } else { (d.x, Some(d.sigma_path)) });
    }
    let z = StationarySampler::new(&cfg.model.kernel(&cfg.base_dir)?, len)?.draw(&mut rng);
    Ok(match (stationary, model) {
        (false, ProcessModel::Fou { theta, .. }) => (decay_correct(&z, theta), None),
        (false, ProcessModel::Fou2 { alpha, .. }) => (decay_correct(&z, alpha), None),
        _ => (z, None),
    })
}

fn observed(cfg: &ExperimentConfig, values: &[f64]) -> Vec<f64> {
    match cfg.statistic.mode {
        StatMode::FiniteDiff => finite_diff(values, cfg.statistic.diff_order()),
        StatMode::Trimmed => values[cfg.statistic.trim().min(values.len())..].to_vec(),
        _ => values.to_vec(),
    }
}

/// `simulate`: paths, the kernel table and one variation report per path.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<VariationReport<f64>>> {
    cfg.validate()?;
    let spec = cfg.simulate.as_ref().ok_or_else(|| HarnessError::Config("a [simulate] section is required".into()))?;
    let len = match cfg.statistic.mode {
        StatMode::Trimmed => spec.n + cfg.statistic.trim(),
        StatMode::FiniteDiff => spec.n + cfg.statistic.diff_order(),
        _ => spec.n,
    };
    let kernel = statistic_kernel(cfg)?;
    let f_eff = cfg.poly.at_variance(kernel.r0())?;
    write_kernel_csv(&cfg.model.kernel(&cfg.base_dir)?, len.saturating_sub(1), File::create(out_file(cfg, "_kernel.csv")?)?)?;
    let mut reports = Vec::with_capacity(spec.paths);
    for i in 0..spec.paths {
        let (x, sigma) = draw_path(cfg, len, i as u64)?;
        write_path_csv(&x, sigma.as_deref(), File::create(out_file(cfg, &format!("_path_{i}.csv"))?)?)?;
        let obs = observed(cfg, &x);
        reports.push(variation_report(&obs, &f_eff, &kernel, f_eff.coeff(0)));
    }
    write_json(cfg, "_variation.json", &reports)?;
    Ok(reports)
}

/// `estimate`: drift estimate from a path CSV with the Hurst index known.
pub fn estimate(cfg: &ExperimentConfig) -> Result<EstimateResult<f64>> {
    let file = cfg.estimation.path.as_ref().ok_or_else(|| HarnessError::Config("estimation.path is required".into()))?;
    let (x, sigma) = read_path_csv(File::open(cfg.base_dir.join(file))?)?;
    let h = cfg.model.hurst.ok_or_else(|| HarnessError::Config("model.hurst is required".into()))?;
    let kind = cfg.poly.kind;
    let q = cfg.poly.degree()?;
    let i0 = cfg.statistic.trim();
    let policy = cfg.estimation.range_policy;
    let result = match cfg.model.kind.to_ascii_lowercase().as_str() {
        "fou" if cfg.statistic.mode == StatMode::FiniteDiff => {
            let d = finite_diff(&x, cfg.statistic.diff_order());
            let qn = q_variation(&d, &cfg.poly.base()?);
            invert_mu_fd_fou(h, qn, cfg.estimation.fd_mode.unwrap_or(FdMode::Numeric), cfg.estimation.branch)?
        }
        "fou" => estimate_fou(&x, kind, q, h, i0, policy)?,
        "fou2" => estimate_fou2(&x, kind, q, h, i0, policy)?,
        "oufou" => {
            let s = sigma.ok_or_else(|| HarnessError::Config("OUFOU estimation needs a sigma_value column".into()))?;
            estimate_oufou(&x, &s, kind, q, h, i0)?
        }
        other => return Err(HarnessError::Config(format!("no estimator for model '{other}'"))),
    };
    write_json(cfg, "_estimate.json", &result)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct CumulantRow {
    pub n: usize,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    #[serde(rename = "kappa3_F")]
    pub kappa3_f: f64,
    #[serde(rename = "kappa4_F")]
    pub kappa4_f: f64,
}

/// `cumulants`: exact cumulants of the quadratic variation along the grid.
pub fn cumulants(cfg: &ExperimentConfig) -> Result<Vec<CumulantRow>> {
    cfg.validate()?;
    let kernel = statistic_kernel(cfg)?;
    let rows: Vec<CumulantRow> = cfg
        .grid()?
        .n
        .iter()
        .map(|&n| {
            let c = quad_cumulants(&kernel, n);
            CumulantRow { n, kappa2: c.kappa2, kappa3: c.kappa3, kappa4: c.kappa4, kappa3_f: c.kappa3_f(), kappa4_f: c.kappa4_f() }
        })
        .collect();
    let mut w = csv::Writer::from_path(out_file(cfg, "_cumulants.csv")?)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// `bounds`: bound report per grid point.
pub fn bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundReport<f64>>> {
    cfg.validate()?;
    let kernel = statistic_kernel(cfg)?;
    let f_eff = cfg.poly.at_variance(kernel.r0())?;
    let model = cfg.model.process_model()?;
    let reports = cfg
        .grid()?
        .n
        .iter()
        .map(|&n| bound_report(&f_eff, &kernel, &model, n, cfg.normalization(), cfg.statistic.diff_order()))
        .collect::<polyvar_core::Result<Vec<_>>>()?;
    write_json(cfg, "_bounds.json", &reports)?;
    Ok(reports)
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    result: &'a ExperimentResult,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "dW_hat")]
    dw_hat: Option<f64>,
    #[serde(rename = "dW_se")]
    dw_se: Option<f64>,
    #[serde(rename = "dK_hat")]
    dk_hat: Option<f64>,
    tv_bound: Option<f64>,
    #[serde(rename = "dK_se")]
    dk_se: Option<f64>,
    predicted_class: &'a str,
    #[serde(rename = "kappa4_F")]
    kappa4_f: f64,
    estimator_bias: String,
    estimator_rmse: String,
    failures: usize,
    out_of_range: usize,
}

fn joined(v: &Option<Vec<f64>>) -> String {
    v.as_ref().map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")).unwrap_or_default()
}

/// `rate-study`: run the grid and write the CSV, the JSON summary and the
/// `(ln n, ln d)` plot files.
pub fn rate_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = run_experiment(cfg)?;
    let class = serde_json::to_value(result.predicted_class)?;
    let class = class.as_str().unwrap_or_default().to_string();
    let mut w = csv::Writer::from_path(out_file(cfg, ".csv")?)?;
    for r in &result.rows {
        w.serialize(CsvRow {
            n: r.n,
            m: r.m,
            dw_hat: r.dw_hat,
            dw_se: r.dw_se,
            dk_hat: r.dk_hat,
            tv_bound: r.tv_bound,
            dk_se: r.dk_se,
            predicted_class: &class,
            kappa4_f: r.kappa4_f,
            estimator_bias: joined(&r.estimator_bias),
            estimator_rmse: joined(&r.estimator_rmse),
            failures: r.failures,
            out_of_range: r.out_of_range,
        })?;
    }
    w.flush()?;
    write_json(cfg, "_summary.json", &Summary { config: cfg, result: &result })?;
    type Column = dyn Fn(&crate::experiment::ExperimentRow) -> Option<f64>;
    let plots: [(&str, &Column); 3] =
        [("_dW.dat", &|r| r.dw_hat), ("_dK.dat", &|r| r.dk_hat), ("_tv.dat", &|r| r.tv_bound)];
    for (suffix, get) in plots {
        if result.rows.iter().all(|r| get(r).is_none()) {
            continue;
        }
        let mut f = BufWriter::new(File::create(out_file(cfg, suffix)?)?);
        for r in &result.rows {
            if let Some(d) = get(r).filter(|d| *d > 0.0) {
                writeln!(f, "{} {}", (r.n as f64).ln(), d.ln())?;
            }
        }
        f.flush()?;
    }
    Ok(result)
}
