use approx::assert_relative_eq;
use polyvar::config::ExperimentConfig;
use polyvar::distances::*;
use polyvar::fit::{rate_fit, RatePoint};
use polyvar::run_experiment;
use polyvar_core::special::{norm_cdf, norm_ppf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normals(rng: &mut ChaCha8Rng, m: usize, sigma: f64) -> Vec<f64> {
    (0..m).map(|_| sigma * norm_ppf(rng.random_range(1e-300..1.0))).collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    permutations(k - 1)
        .into_iter()
        .flat_map(|p| (0..k).map(move |pos| {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            q
        }))
        .collect()
}

#[test]
fn w1_is_the_optimal_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let perms = permutations(5);
    assert_eq!(perms.len(), 120);
    for _ in 0..50 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z = normal_quantiles(5, 1.5);
        let best = perms
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| (x[i] - z[j]).abs()).sum::<f64>() / 5.0)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(wasserstein1_to_normal(&x, 2.25), best, max_relative = 1e-13);
    }
}

#[test]
fn w1_of_shifts_and_quantiles() {
    for m in [10usize, 1000] {
        let q = normal_quantiles(m, 1.0);
        assert!(wasserstein1_to_normal(&q, 1.0) < 1e-15);
        for d in [-0.7, 0.05, 2.0] {
            let s: Vec<f64> = q.iter().map(|x| x + d).collect();
            assert_relative_eq!(wasserstein1_to_normal(&s, 1.0), d.abs(), max_relative = 1e-12);
        }
    }
}

#[test]
fn ks_against_a_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = normals(&mut rng, 40, 1.3);
    let s = sorted(&x);
    let d = kolmogorov_to_normal(&x, 1.69);
    // the supremum is approached at the jumps; probe either side of each
    let mut grid = 0f64;
    for (i, &v) in s.iter().enumerate() {
        for (t, below) in [(v - 1e-12, i), (v, i + 1)] {
            grid = grid.max((below as f64 / 40.0 - norm_cdf(t / 1.3)).abs());
        }
    }
    assert_relative_eq!(d, grid, max_relative = 1e-9);
}

#[test]
fn ks_limits() {
    let m = 2000;
    let q = normal_quantiles(m, 1.0);
    assert!(kolmogorov_to_normal(&q, 1.0) <= 0.5 / m as f64 + 1e-12);
    let far: Vec<f64> = q.iter().map(|x| x - 50.0).collect();
    assert_relative_eq!(kolmogorov_to_normal(&far, 1.0), 1.0, epsilon = 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = 100_000;
    let x = normals(&mut rng, m, 2.0);
    assert!(kolmogorov_to_normal(&x, 4.0) <= 1.36 / (m as f64).sqrt());
}

#[test]
fn bootstrap_errors_track_the_sampling_spread() {
    // spread of W1 over independent samples vs the bootstrap estimate from one
    let m = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws: Vec<f64> = (0..200).map(|_| wasserstein1_to_normal(&normals(&mut rng, m, 1.0).iter().map(|v| v * 1.2).collect::<Vec<_>>(), 1.0)).collect();
    let spread = std_dev(&draws);
    let x: Vec<f64> = normals(&mut rng, m, 1.2);
    let est = distances_with_bootstrap(&x, 1.0, 200, &mut rng);
    assert!(est.w1_se > 0.5 * spread && est.w1_se < 2.0 * spread, "{} vs {spread}", est.w1_se);
    assert!(est.ks_se > 0.0);
}

fn power_law(b: f64) -> Vec<RatePoint> {
    (7..=14).map(|k| {
        let n = (1u64 << k) as f64;
        RatePoint { n, distance: 0.8 * n.powf(b), se: 0.0 }
    }).collect()
}

#[test]
fn exact_slopes() {
    for b in [-0.5, -0.3] {
        let f = rate_fit(&power_law(b)).unwrap();
        assert_relative_eq!(f.slope, b, epsilon = 1e-12);
        assert_relative_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert!(f.ci95.0 <= b + 1e-9 && f.ci95.1 >= b - 1e-9);
    }
}

#[test]
fn interval_coverage_under_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut covered = 0;
    for _ in 0..100 {
        let pts: Vec<RatePoint> = power_law(-0.5)
            .into_iter()
            .map(|p| {
                let noise: f64 = 0.1 * norm_ppf(rng.random_range(1e-12..1.0 - 1e-12));
                let d = p.distance * noise.exp();
                RatePoint { distance: d, se: 0.1 * d, ..p }
            })
            .collect();
        let f = rate_fit(&pts).unwrap();
        if f.ci95.0 <= -0.5 && -0.5 <= f.ci95.1 {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered}/100");
}

const SMALL: &str = r#"
seed = 11

[model]
kind = "fou"
theta = 1.0
hurst = 0.55

[poly]
kind = "hermite"
q = 2

[grid]
n = [32, 64, 128, 256, 512, 1024]
replications = 400
"#;

#[test]
fn experiments_are_deterministic_and_sane() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    for r in &a.rows {
        let dk = r.dk_hat.unwrap();
        assert!((0.0..=1.0).contains(&dk));
        assert!(r.dw_hat.unwrap() > 0.0 && r.dw_se.unwrap() > 0.0);
        assert_eq!(r.reference_variance, 1.0);
        assert!(r.tv_bound.unwrap() > 0.0);
    }
    let tv: Vec<f64> = a.rows.iter().map(|r| r.tv_bound.unwrap()).collect();
    assert!(tv.windows(2).all(|w| w[1] < w[0]));
    let f = a.fit_dw.unwrap();
    assert!(f.ci95.0 < f.slope && f.slope < f.ci95.1);
    assert_eq!(a.predicted_exponent, Some(-0.5));

    let other = run_experiment(&cfg.clone().with_seed(Some(12))).unwrap();
    assert_ne!(a.rows[0].dw_hat, other.rows[0].dw_hat);
}

#[test]
fn experiment_rejects_small_m() {
    let cfg = ExperimentConfig::from_toml(&SMALL.replace("replications = 400", "replications = 99")).unwrap();
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 2);
}
