use polyvar_core::cov_models::*;
use polyvar_core::exact_sampler::*;

/// Entrywise comparison of the sample covariance matrix of `draws` (each of
/// length `n`, mean zero) against `cov(i, j)`, in units of the Gaussian
/// standard error `√((r_ii r_jj + r_ij²)/M)`.
fn worst_z(draws: &[Vec<f64>], cov: impl Fn(usize, usize) -> f64) -> f64 {
    let n = draws[0].len();
    let m = draws.len() as f64;
    let mut worst = 0f64;
    for i in 0..n {
        for j in i..n {
            let s: f64 = draws.iter().map(|d| d[i] * d[j]).sum::<f64>() / m;
            let c = cov(i, j);
            let se = ((cov(i, i) * cov(j, j) + c * c) / m).sqrt();
            worst = worst.max((s - c).abs() / se);
        }
    }
    worst
}

fn stationary_draws(kernel: &CovKernel<f64>, n: usize, reps: usize, seed: u64) -> Vec<Vec<f64>> {
    let s = StationarySampler::new(kernel, n).unwrap();
    (0..reps as u64 / 2).flat_map(|r| s.draw_pair(&mut substream(seed, r, 0))).collect()
}

#[test]
fn stationary_samplers_reproduce_the_toeplitz_law() {
    let kernels = [
        fgn_kernel(0.7, 1.0).unwrap(),
        fgn_kernel(0.3, 2.0).unwrap(),
        fou_kernel(1.0, 0.65).unwrap(),
        fou2_kernel(1.0, 0.75).unwrap(),
    ];
    for (idx, k) in kernels.iter().enumerate() {
        let draws = stationary_draws(k, 64, 10_000, 11 + idx as u64);
        let z = worst_z(&draws, |i, j| k.eval(i as i64 - j as i64));
        assert!(z < 5.0, "{:?}: worst deviation {z:.2} SE", k.meta().model);
    }
}

#[test]
fn pair_sampler_reproduces_the_joint_law() {
    let (theta, rho, h, n) = (1.0, 2.0, 0.6, 32usize);
    let s = FouPairSampler::new(theta, rho, h, n).unwrap();
    let draws: Vec<Vec<f64>> = (0..5000u64)
        .flat_map(|r| s.draw_pairs(&mut substream(5, r, 0)))
        .map(|(a, b)| a.into_iter().chain(b).collect())
        .collect();
    let cov = |i: usize, j: usize| {
        let (mi, ti) = if i < n { (theta, i) } else { (rho, i - n) };
        let (mj, tj) = if j < n { (theta, j) } else { (rho, j - n) };
        fou_cross_cov(mi, mj, h, ti as f64 - tj as f64).unwrap()
    };
    let z = worst_z(&draws, cov);
    assert!(z < 5.0, "worst deviation {z:.2} SE");
}

#[test]
fn replications_are_uncorrelated() {
    let k = fgn_kernel(0.8, 1.0).unwrap();
    let s = StationarySampler::new(&k, 16).unwrap();
    let m = 10_000u64;
    let first: Vec<f64> = (0..m).map(|r| s.draw(&mut substream(3, r, 0))[0]).collect();
    let corr: f64 = first.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (m - 1) as f64;
    assert!(corr.abs() < 4.0 / (m as f64).sqrt(), "corr {corr}");
    let other: Vec<f64> = (0..m).map(|r| s.draw(&mut substream(3, r, 1))[0]).collect();
    let cross: f64 = first.iter().zip(&other).map(|(a, b)| a * b).sum::<f64>() / m as f64;
    assert!(cross.abs() < 4.0 / (m as f64).sqrt(), "cross-stream corr {cross}");
}

#[test]
fn white_noise_lag_one() {
    let white = CovKernel::tabulated(vec![1.0], None, KernelMeta::new("white", &[])).unwrap();
    for n in [256usize, 4096] {
        let x = sample_stationary(&white, n, 9).unwrap().values;
        let lag1: f64 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n as f64;
        assert!(lag1.abs() < 4.0 / (n as f64).sqrt());
    }
}

fn var_and_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let mean = sq.iter().sum::<f64>() / m;
    let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[test]
fn started_paths_approach_the_stationary_variance() {
    let reps = 4000u64;
    let tail: Vec<f64> = (0..reps).map(|r| sample_fou_nonstationary(1.0, 0.65, 40, 1000 + r).unwrap().values[39]).collect();
    let (v, se) = var_and_se(&tail);
    assert!((v - fou_cov(1.0, 0.65, 0.0).unwrap()).abs() < 4.0 * se);

    let tail: Vec<f64> = (0..reps).map(|r| sample_fou2(1.0, 0.75, 40, 1000 + r).unwrap().values[39]).collect();
    let (v, se) = var_and_se(&tail);
    assert!((v - fou2_cov(1.0, 0.75, 0.0).unwrap()).abs() < 4.0 * se);

    // fast drift: the correction e^{-θk} Z_0 is invisible after one step
    let p = sample_fou_nonstationary(40.0f64, 0.6, 10, 4).unwrap().values;
    let z = StationarySampler::new(&fou_kernel(40.0f64, 0.6).unwrap(), 10).unwrap().draw(&mut substream(4, 0, 0));
    for k in 1..10 {
        assert!((p[k] - z[k]).abs() <= (-40.0f64).exp() * z[0].abs() * 1.0001);
    }
}

#[test]
fn oufou_stationary_parts() {
    let reps = 4000u64;
    let ks = oufou_kernels(1.0, 2.0, 0.6).unwrap();
    let mut zz = Vec::new();
    let mut cross = Vec::new();
    for r in 0..reps {
        let p = sample_oufou_stationary(1.0, 2.0, 0.6, 16, r).unwrap();
        let s = p.companion.unwrap();
        zz.push(p.values[5]);
        cross.push(p.values[5] * s[5]);
    }
    let (v, se) = var_and_se(&zz);
    assert!((v - ks.eta_x).abs() < 4.0 * se);
    let m = reps as f64;
    let mean = cross.iter().sum::<f64>() / m;
    let sd = (cross.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(mean.abs() < 4.0 * sd / m.sqrt(), "cross {mean}");
}

#[test]
fn non_finite_kernels_are_rejected() {
    let k = CovKernel::from_fn(KernelMeta::new("broken", &[]), None, |k: usize| if k > 3 { f64::NAN } else { 1.0 / (1 + k) as f64 }).unwrap();
    assert!(matches!(StationarySampler::new(&k, 16), Err(polyvar_core::Error::NonFinite(_))));
}
