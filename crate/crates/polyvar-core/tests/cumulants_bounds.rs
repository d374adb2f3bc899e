use approx::assert_relative_eq;
use polyvar_core::cov_models::*;
use polyvar_core::hermite_basis::HermitePoly;
use polyvar_core::rate_bounds::*;
use polyvar_core::variation_stats::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tabulated(values: Vec<f64>) -> CovKernel<f64> {
    let last = values.len() - 1;
    CovKernel::tabulated(values, Some(Tail::Finite { last }), KernelMeta::new("random", &[])).unwrap()
}

/// `r(k) = a δ_k + Σ w_j cos(ω_j k)`: positive semi-definite by construction.
fn random_psd(rng: &mut ChaCha8Rng, lags: usize) -> Vec<f64> {
    let comps: Vec<(f64, f64)> = (0..4).map(|_| (rng.random_range(0.1..1.0), rng.random_range(0.0..std::f64::consts::PI))).collect();
    let nugget = rng.random_range(0.0..0.5);
    (0..lags)
        .map(|k| comps.iter().map(|(w, om)| w * (om * k as f64).cos()).sum::<f64>() + if k == 0 { nugget } else { 0.0 })
        .collect()
}

/// Cumulants of `√n (Q - E Q)` for `Q = (1/n) Σ X_i²` from explicit index
/// tuple sums: `κ_m = 2^{m-1} (m-1)! tr(R^m) / n^{m/2}`.
fn brute_force(r: &[f64], n: usize) -> (f64, f64, f64) {
    let c = |i: usize, j: usize| r[i.abs_diff(j)];
    let (mut t2, mut t3, mut t4) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            t2 += c(i, j) * c(j, i);
            for k in 0..n {
                t3 += c(i, j) * c(j, k) * c(k, i);
                for l in 0..n {
                    t4 += c(i, j) * c(j, k) * c(k, l) * c(l, i);
                }
            }
        }
    }
    let nf = n as f64;
    (2.0 * t2 / nf, 8.0 * t3 / nf.powf(1.5), 48.0 * t4 / (nf * nf))
}

#[test]
fn trace_formula_matches_index_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10 {
        let r = random_psd(&mut rng, 16);
        let k = tabulated(r.clone());
        for n in [2usize, 4, 8, 16] {
            let (b2, b3, b4) = brute_force(&r, n);
            for method in [TraceMethod::Dense, TraceMethod::Recurrence] {
                let c = quad_cumulants_with(&k, n, method);
                assert_relative_eq!(c.kappa2, b2, max_relative = 1e-10);
                assert_relative_eq!(c.kappa3, b3, max_relative = 1e-10);
                assert_relative_eq!(c.kappa4, b4, max_relative = 1e-10);
            }
        }
    }
}

#[test]
fn small_cases() {
    let white = tabulated(vec![1.0]);
    let c = quad_cumulants(&white, 1);
    assert_eq!((c.kappa2, c.kappa3, c.kappa4), (2.0, 8.0, 48.0));
    let c = quad_cumulants(&white, 2);
    assert_relative_eq!(c.kappa3, 5.656854249, max_relative = 1e-9);
    assert_relative_eq!(c.kappa4, 24.0, max_relative = 1e-14);
}

#[test]
fn kappa4_decay_and_joint_vanishing() {
    let k = fgn_kernel(0.55, 1.0).unwrap();
    let (a, b): (f64, f64) = (quad_cumulants(&k, 256).kappa4_f(), quad_cumulants(&k, 4096).kappa4_f());
    let slope = (b / a).ln() / 16f64.ln();
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    for h in [0.55, 0.65, 0.7] {
        let k = fgn_kernel(h, 1.0).unwrap();
        let c: Vec<_> = [64usize, 512, 4096].iter().map(|&n| quad_cumulants(&k, n)).collect();
        for w in c.windows(2) {
            assert!(w[1].kappa3_f() < w[0].kappa3_f() && w[1].kappa4_f() < w[0].kappa4_f(), "H = {h}");
        }
    }
}

#[test]
fn exact_variance_increases_to_the_limit() {
    let k = fgn_kernel(0.6, 1.0).unwrap();
    let p = HermitePoly::power(2, 1.0).unwrap();
    let u = u_limit(&p, &k, 1e-10).unwrap();
    let mut prev = 0.0;
    for e in 1..14 {
        let v = exact_var_u(&p, &k, 1 << e);
        assert!(v > prev && v <= u * (1.0 + 1e-12));
        prev = v;
    }
    // independent route: direct sum plus the leading-order tail integral
    let n = 1_000_000usize;
    let h = 0.6f64;
    let direct: f64 = (1..=n).map(|j| fgn_cov(h, 1.0, j as i64).powi(2)).sum();
    let c = (h * (2.0 * h - 1.0)).powi(2);
    let e = 4.0 - 4.0 * h;
    let tail = c * (n as f64 + 0.5).powf(1.0 - e) / (e - 1.0);
    assert_relative_eq!(u, 2.0 * (1.0 + 2.0 * direct + 2.0 * tail), max_relative = 1e-6);
}

#[test]
fn bound_values() {
    let white = tabulated(vec![1.0]);
    let p = HermitePoly::power(2, 1.0).unwrap();
    let b = tv_upper_bound(&p, &white, 100, Normalization::ExactVariance).unwrap();
    assert_relative_eq!(b, 3.8632, max_relative = 1e-4);
    let c = appendix_constants(&HermitePoly::hermite(4, 1.0).unwrap()).unwrap();
    assert!(c.c1q > 0.0);
    assert_relative_eq!(c1_inner_sum::<f64>(1), 32.0, max_relative = 1e-14);

    let k = fgn_kernel(0.6, 1.0).unwrap();
    let seq: Vec<f64> = [64usize, 1024, 16384].iter().map(|&n| tv_upper_bound(&p, &k, n, Normalization::ExactVariance).unwrap()).collect();
    assert!(seq[2] < seq[1] && seq[1] < seq[0]);

    let k = fgn_kernel(0.55, 1.0).unwrap();
    let scaled = |n: usize| tv_upper_bound(&p, &k, n, Normalization::ExactVariance).unwrap() * (n as f64).powf(0.25);
    assert!(scaled(1 << 14) <= scaled(1 << 8));
}

#[test]
fn discrepancy_two_routes() {
    let k = fou_kernel(1.0f64, 0.55).unwrap();
    let p = HermitePoly::power(2, k.r0()).unwrap();
    let u = u_limit(&p, &k, 1e-12).unwrap();
    for n in [16usize, 256, 4096] {
        let d = variance_discrepancy(&p, &k, n).unwrap();
        assert_relative_eq!(d, (u - exact_var_u(&p, &k, n)).abs() / u, max_relative = 1e-12, epsilon = 1e-15);
    }
    assert!(variance_discrepancy(&p, &fgn_kernel(0.8, 1.0).unwrap(), 64).is_err());
}

#[test]
fn l_constant_behaviour() {
    let k = fgn_kernel(0.55, 1.0).unwrap();
    let a: f64 = l_constant(&k, 10_000).value.unwrap();
    let b = l_constant(&k, 100_000).value.unwrap();
    assert!((a - b).abs() <= 1e-4 * b, "{a} vs {b}");
    let partials: Vec<f64> = [100usize, 1000, 10_000].iter().map(|&n| l_constant(&k, n).partial).collect();
    assert!(partials.windows(2).all(|w| w[1] >= w[0]));
    assert!(l_constant(&fgn_kernel(0.7, 1.0).unwrap(), 1000).value.is_none());
    assert_eq!(l_constant(&tabulated(vec![1.0]), 64).value, Some(1.0));
}

#[test]
fn classes() {
    let fou = |h: f64| ProcessModel::Fou { theta: 1.0, hurst: h };
    assert_eq!(rate_class_for(&fou(0.55), 2, Normalization::AsymptoticVariance, 0), RateClass::SqrtN);
    assert_eq!(rate_class_for(&fou(0.7), 2, Normalization::AsymptoticVariance, 0), RateClass::Pow4HMinus3);
    assert_eq!(rate_class_for(&fou(0.9), 2, Normalization::AsymptoticVariance, 1), RateClass::SqrtN);
    let k3 = kappa3_rate(&fgn_kernel(0.7, 1.0).unwrap(), 256).unwrap();
    assert_eq!(k3.regime, RateClass::Pow6HMinus4p5);
    assert_relative_eq!(k3.regime.exponent(0.7).unwrap(), -0.3, max_relative = 1e-12);
    assert_eq!(kappa3_rate(&fgn_kernel(0.55, 1.0).unwrap(), 256).unwrap().regime, RateClass::SqrtN);
    assert_relative_eq!(kappa3_rate(&tabulated(vec![1.0]), 400).unwrap().commensurate_expr, 0.05, max_relative = 1e-12);
}

#[test]
fn trimming_shrinks_the_start_up_bias() {
    let m = ProcessModel::Fou { theta: 1.0, hurst: 0.6 };
    let p = HermitePoly::power(2, 1.0).unwrap();
    assert_eq!(nonstat_discrepancy(&ProcessModel::Fgn { hurst: 0.6, sigma2: 1.0 }, &p, 100, 0).unwrap(), 0.0);
    let b0 = nonstat_discrepancy(&m, &p, 100, 0).unwrap();
    let b10 = nonstat_discrepancy(&m, &p, 100, 10).unwrap();
    assert!(b10 <= b0 * (-10f64).exp() * (1.0 + 1e-12));
}

proptest! {
    #[test]
    fn constants_are_homogeneous(d in prop::collection::vec(0.1f64..3.0, 2..=4), s in 0.2f64..5.0) {
        let p = HermitePoly::new(d.clone(), 1.0).unwrap();
        let ps = HermitePoly::new(d.iter().map(|x| x * s).collect(), 1.0).unwrap();
        let (a, b) = (appendix_constants(&p).unwrap(), appendix_constants(&ps).unwrap());
        prop_assert!((b.c1q - s * s * a.c1q).abs() <= 1e-10 * b.c1q);
        prop_assert!((b.cq - s * s * a.cq).abs() <= 1e-10 * b.cq);
    }

    #[test]
    fn recurrence_equals_dense(h in 0.05f64..0.95, n in 2usize..200) {
        let r = fgn_kernel(h, 1.0).unwrap().values(n);
        let a = toeplitz_traces(&r, TraceMethod::Dense);
        let b = toeplitz_traces(&r, TraceMethod::Recurrence);
        prop_assert!((a.1 - b.1).abs() <= 1e-11 * a.1.abs().max(1e-300) + 1e-12 * a.0);
        prop_assert!((a.2 - b.2).abs() <= 1e-11 * a.2.abs());
    }
}
