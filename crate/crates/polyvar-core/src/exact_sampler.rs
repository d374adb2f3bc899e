//! Exact-in-law samplers at unit time step: circulant embedding for
//! stationary sequences (Cholesky fallback), block-circulant embedding for
//! the OUFOU pair, and the exponentially decaying corrections of the
//! non-stationary models.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cov_models::{fou2_kernel, fou_kernel, fou_pair_cov, CovKernel, ProcessModel};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, hermitian2_factor};
use crate::Real;

/// Largest circulant size tried before falling back.
pub const MAX_EMBEDDING: usize = 1 << 16;
/// Eigenvalues above `-CLIP_REL * r(0)` are clipped to zero silently (counted).
pub const CLIP_REL: f64 = 1e-9;
/// Largest `n` for the dense Cholesky fallback.
pub const MAX_CHOLESKY: usize = 8192;
/// Largest `n` for the dense bivariate fallback.
pub const MAX_BLOCK_CHOLESKY: usize = 4096;

/// A sampled sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath<T> {
    pub values: Vec<T>,
    pub model: ProcessModel<T>,
    pub seed: u64,
    pub stationary: bool,
    /// Companion `Σ` path of the OUFOU model.
    pub companion: Option<Vec<T>>,
    /// Forward-differencing order applied to `values`.
    #[serde(default)]
    pub diff_order: usize,
}

impl<T: Real> SamplePath<T> {
    pub fn new(values: Vec<T>, model: ProcessModel<T>, seed: u64, stationary: bool) -> Self {
        Self { values, model, seed, stationary, companion: None, diff_order: 0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Generator for replication `replication`, stream `stream` of a run seeded
/// with `seed`.
pub fn substream(seed: u64, replication: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 8) | (stream & 0xff));
    rng
}

fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

enum Method<T: Real> {
    Circulant { sqrt_eig: Vec<T>, fft: Arc<dyn Fft<T>> },
    Cholesky { l: Vec<T> },
}

/// Reusable sampler of `n` consecutive values of a stationary sequence.
pub struct StationarySampler<T: Real> {
    n: usize,
    method: Method<T>,
    clipped: usize,
}

impl<T: Real> fmt::Debug for StationarySampler<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let method = match &self.method {
            Method::Circulant { sqrt_eig, .. } => format!("circulant({})", sqrt_eig.len()),
            Method::Cholesky { .. } => "cholesky".to_string(),
        };
        f.debug_struct("StationarySampler").field("n", &self.n).field("method", &method).field("clipped", &self.clipped).finish()
    }
}

fn circulant_eigenvalues<T: Real>(r: &[T], m: usize, planner: &mut FftPlanner<T>) -> Vec<T> {
    let half = m / 2;
    let mut c: Vec<Complex<T>> = (0..m)
        .map(|j| {
            let lag = if j <= half { j } else { m - j };
            Complex::new(r[lag], T::zero())
        })
        .collect();
    planner.plan_fft_forward(m).process(&mut c);
    c.into_iter().map(|z| z.re).collect()
}

impl<T: Real> StationarySampler<T> {
    /// Plan a sampler for `kernel` and length `n >= 2`.
    pub fn new(kernel: &CovKernel<T>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Argument("path length must be at least 2".into()));
        }
        let r0 = kernel.r0();
        let floor = T::lit(CLIP_REL) * r0;
        let mut planner = FftPlanner::new();
        let mut m = (2 * n).next_power_of_two();
        let cap = MAX_EMBEDDING.max(m);
        let finite = |r: Vec<T>| match r.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite(format!("covariance at lag {k}"))),
            None => Ok(r),
        };
        let mut r = finite(kernel.values(m / 2 + 1))?;
        loop {
            let eig = circulant_eigenvalues(&r, m, &mut planner);
            let min = eig.iter().copied().fold(T::infinity(), |a, b| a.min(b));
            if min >= -floor || (2 * m > cap && n > MAX_CHOLESKY) {
                let mut clipped = 0;
                let scale = T::one() / T::of(m).sqrt();
                let sqrt_eig = eig
                    .into_iter()
                    .map(|l| {
                        if l < T::zero() {
                            if l < -floor {
                                clipped += 1;
                            }
                            T::zero()
                        } else {
                            (l).sqrt() * scale
                        }
                    })
                    .collect();
                if clipped > 0 {
                    log::warn!("circulant embedding of size {m}: clipped {clipped} negative eigenvalues (min {min})");
                }
                let fft = planner.plan_fft_forward(m);
                return Ok(Self { n, method: Method::Circulant { sqrt_eig, fft }, clipped });
            }
            if 2 * m <= cap {
                m *= 2;
                r = finite(kernel.values(m / 2 + 1))?;
                continue;
            }
            if n <= MAX_CHOLESKY {
                log::info!("circulant embedding not admissible up to size {m}; using dense Cholesky");
                let mut l = kernel.toeplitz(n);
                cholesky_in_place(&mut l, n)?;
                return Ok(Self { n, method: Method::Cholesky { l }, clipped: 0 });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of eigenvalues clipped below `-CLIP_REL r(0)`.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    /// Whether the circulant route is in use.
    pub fn is_circulant(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    /// Two independent paths from one draw.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> [Vec<T>; 2] {
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<T>> = sqrt_eig.iter().map(|&s| Complex::new(s * normal::<T, _>(rng), s * normal::<T, _>(rng))).collect();
                fft.process(&mut buf);
                let re = buf[..self.n].iter().map(|z| z.re).collect();
                let im = buf[..self.n].iter().map(|z| z.im).collect();
                [re, im]
            }
            Method::Cholesky { .. } => [self.draw(rng), self.draw(rng)],
        }
    }

    /// One path.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        match &self.method {
            Method::Circulant { .. } => {
                let [a, _] = self.draw_pair(rng);
                a
            }
            Method::Cholesky { l } => {
                let n = self.n;
                let xi: Vec<T> = (0..n).map(|_| normal(rng)).collect();
                (0..n).map(|i| (0..=i).map(|k| l[i * n + k] * xi[k]).sum()).collect()
            }
        }
    }
}

/// `n` values of the stationary sequence with autocovariance `kernel`.
pub fn sample_stationary<T: Real>(kernel: &CovKernel<T>, n: usize, seed: u64) -> Result<SamplePath<T>> {
    let sampler = StationarySampler::new(kernel, n)?;
    let values = sampler.draw(&mut substream(seed, 0, 0));
    Ok(SamplePath::new(values, ProcessModel::Tabulated, seed, true))
}

/// `X_k = Z_k - e^{-θk} Z_0`, exact zero at `k = 0`.
pub fn decay_correct<T: Real>(z: &[T], rate: T) -> Vec<T> {
    let z0 = z[0];
    z.iter().enumerate().map(|(k, &v)| v - (-rate * T::of(k)).exp() * z0).collect()
}

/// fOU path started at zero: `X_k = Z_k - e^{-θk} Z_0` with `Z` stationary.
pub fn sample_fou_nonstationary<T: Real>(theta: T, h: T, n: usize, seed: u64) -> Result<SamplePath<T>> {
    let model = ProcessModel::Fou { theta, hurst: h };
    model.validate()?;
    let z = StationarySampler::new(&fou_kernel(theta, h)?, n)?.draw(&mut substream(seed, 0, 0));
    Ok(SamplePath::new(decay_correct(&z, theta), model, seed, false))
}

/// fOU path of the second kind started at zero.
pub fn sample_fou2<T: Real>(alpha: T, h: T, n: usize, seed: u64) -> Result<SamplePath<T>> {
    let model = ProcessModel::Fou2 { alpha, hurst: h };
    model.validate()?;
    let s = StationarySampler::new(&fou2_kernel(alpha, h)?, n)?.draw(&mut substream(seed, 0, 0));
    Ok(SamplePath::new(decay_correct(&s, alpha), model, seed, false))
}

enum PairMethod<T: Real> {
    Circulant { factors: Vec<[Complex<T>; 4]>, fft: Arc<dyn Fft<T>> },
    Cholesky { l: Vec<T> },
}

/// Sampler of the stationary pair `(Z^θ_k, Z^ρ_k)` driven by one fBm.
pub struct FouPairSampler<T: Real> {
    n: usize,
    theta: T,
    rho: T,
    hurst: T,
    method: PairMethod<T>,
    clipped: usize,
}

impl<T: Real> fmt::Debug for FouPairSampler<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let method = match &self.method {
            PairMethod::Circulant { factors, .. } => format!("block-circulant({})", factors.len()),
            PairMethod::Cholesky { .. } => "block-cholesky".to_string(),
        };
        f.debug_struct("FouPairSampler").field("n", &self.n).field("method", &method).field("clipped", &self.clipped).finish()
    }
}

/// Stationary parts and corrected paths of one OUFOU draw.
#[derive(Debug, Clone, PartialEq)]
pub struct OufouDraw<T> {
    /// `Z^{θ,ρ}_k = (ρZ^ρ_k - θZ^θ_k)/(ρ-θ)`.
    pub z: Vec<T>,
    /// `Σ^{θ,ρ}_k = (Z^θ_k - Z^ρ_k)/(ρ-θ)`.
    pub sigma: Vec<T>,
    /// OUFOU path `X`, zero at `k = 0`.
    pub x: Vec<T>,
    /// Companion path `Σ`, zero at `k = 0`.
    pub sigma_path: Vec<T>,
}

impl<T: Real> FouPairSampler<T> {
    pub fn new(theta: T, rho: T, h: T, n: usize) -> Result<Self> {
        ProcessModel::Oufou { theta, rho, hurst: h }.validate()?;
        if n < 2 {
            return Err(Error::Argument("path length must be at least 2".into()));
        }
        let lag = |j: usize| fou_pair_cov(theta, rho, h, T::of(j));
        let r0 = lag(0);
        let floor = T::lit(CLIP_REL) * r0[0][0].max(r0[1][1]);
        let mut planner = FftPlanner::new();
        let mut m = (2 * n).next_power_of_two();
        let cap = MAX_EMBEDDING.max(m);
        loop {
            let half = m / 2;
            let c: Vec<[[T; 2]; 2]> = (0..=half).map(lag).collect();
            // four scalar sequences C_ab(j) extended with C(M-j) = C(j)^T
            let mut spec = [vec![Complex::new(T::zero(), T::zero()); m], vec![Complex::new(T::zero(), T::zero()); m], vec![Complex::new(T::zero(), T::zero()); m], vec![Complex::new(T::zero(), T::zero()); m]];
            for j in 0..m {
                let block = if j < half {
                    c[j]
                } else if j == half {
                    let b = c[half];
                    let off = (b[0][1] + b[1][0]) / T::lit(2.0);
                    [[b[0][0], off], [off, b[1][1]]]
                } else {
                    let b = c[m - j];
                    [[b[0][0], b[1][0]], [b[0][1], b[1][1]]]
                };
                spec[0][j].re = block[0][0];
                spec[1][j].re = block[0][1];
                spec[2][j].re = block[1][0];
                spec[3][j].re = block[1][1];
            }
            let fwd = planner.plan_fft_forward(m);
            for s in spec.iter_mut() {
                fwd.process(s);
            }
            let mut min = T::infinity();
            let mut factors = Vec::with_capacity(m);
            let mut clipped = 0;
            for k in 0..m {
                let a = spec[0][k].re;
                let d = spec[3][k].re;
                let b = (spec[1][k].re, spec[1][k].im);
                let disc = (((a - d) / T::lit(2.0)).powi(2) + b.0 * b.0 + b.1 * b.1).sqrt();
                min = min.min((a + d) / T::lit(2.0) - disc);
                let (l, cl) = hermitian2_factor(a, b, d, floor);
                clipped += cl;
                let scale = T::one() / T::of(m).sqrt();
                factors.push(l.map(|(re, im)| Complex::new(re * scale, im * scale)));
            }
            if min >= -floor || (2 * m > cap && n > MAX_BLOCK_CHOLESKY) {
                if clipped > 0 {
                    log::warn!("block-circulant embedding of size {m}: clipped {clipped} eigenvalues (min {min})");
                }
                let fft = planner.plan_fft_inverse(m);
                return Ok(Self { n, theta, rho, hurst: h, method: PairMethod::Circulant { factors, fft }, clipped });
            }
            if 2 * m <= cap {
                m *= 2;
                continue;
            }
            log::info!("block-circulant embedding not admissible up to size {m}; using dense block Cholesky");
            let dim = 2 * n;
            let mut a = vec![T::zero(); dim * dim];
            let blocks: Vec<[[T; 2]; 2]> = (0..n).map(lag).collect();
            for i in 0..n {
                for j in 0..n {
                    // E[Z^a_i Z^b_j] = C(j-i)_{ab}, C(-t)_{ab} = C(t)_{ba}
                    let (blk, tr) = if j >= i { (blocks[j - i], false) } else { (blocks[i - j], true) };
                    for x in 0..2 {
                        for y in 0..2 {
                            let v = if tr { blk[y][x] } else { blk[x][y] };
                            a[(2 * i + x) * dim + 2 * j + y] = v;
                        }
                    }
                }
            }
            cholesky_in_place(&mut a, dim)?;
            return Ok(Self { n, theta, rho, hurst: h, method: PairMethod::Cholesky { l: a }, clipped: 0 });
        }
    }

    pub fn clipped(&self) -> usize {
        self.clipped
    }

    /// Two independent draws of the pair, each as `(Z^θ, Z^ρ)`.
    pub fn draw_pairs<R: Rng + ?Sized>(&self, rng: &mut R) -> [(Vec<T>, Vec<T>); 2] {
        match &self.method {
            PairMethod::Circulant { factors, fft } => {
                let m = factors.len();
                let mut u = Vec::with_capacity(m);
                let mut v = Vec::with_capacity(m);
                for l in factors {
                    let x0 = Complex::new(normal::<T, _>(rng), normal::<T, _>(rng));
                    let x1 = Complex::new(normal::<T, _>(rng), normal::<T, _>(rng));
                    u.push(l[0] * x0 + l[1] * x1);
                    v.push(l[2] * x0 + l[3] * x1);
                }
                fft.process(&mut u);
                fft.process(&mut v);
                let n = self.n;
                [
                    (u[..n].iter().map(|z| z.re).collect(), v[..n].iter().map(|z| z.re).collect()),
                    (u[..n].iter().map(|z| z.im).collect(), v[..n].iter().map(|z| z.im).collect()),
                ]
            }
            PairMethod::Cholesky { .. } => [self.draw_pair(rng), self.draw_pair(rng)],
        }
    }

    /// One draw of `(Z^θ, Z^ρ)`.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Vec<T>) {
        match &self.method {
            PairMethod::Circulant { .. } => {
                let [a, _] = self.draw_pairs(rng);
                a
            }
            PairMethod::Cholesky { l } => {
                let dim = 2 * self.n;
                let xi: Vec<T> = (0..dim).map(|_| normal(rng)).collect();
                let y: Vec<T> = (0..dim).map(|i| (0..=i).map(|k| l[i * dim + k] * xi[k]).sum()).collect();
                (y.iter().step_by(2).copied().collect(), y.iter().skip(1).step_by(2).copied().collect())
            }
        }
    }

    /// Form the OUFOU quantities from a pair draw.
    pub fn assemble(&self, zt: &[T], zr: &[T]) -> OufouDraw<T> {
        let (theta, rho) = (self.theta, self.rho);
        let d = rho - theta;
        let z = zt.iter().zip(zr).map(|(&a, &b)| (rho * b - theta * a) / d).collect();
        let sigma = zt.iter().zip(zr).map(|(&a, &b)| (a - b) / d).collect();
        let ct = decay_correct(zt, theta);
        let cr = decay_correct(zr, rho);
        let x = ct.iter().zip(&cr).map(|(&a, &b)| (rho * b - theta * a) / d).collect();
        let sigma_path = ct.iter().zip(&cr).map(|(&a, &b)| (a - b) / d).collect();
        OufouDraw { z, sigma, x, sigma_path }
    }

    pub fn model(&self) -> ProcessModel<T> {
        ProcessModel::Oufou { theta: self.theta, rho: self.rho, hurst: self.hurst }
    }
}

/// OUFOU path `X` with companion `Σ`, both started at zero.
pub fn sample_oufou<T: Real>(theta: T, rho: T, h: T, n: usize, seed: u64) -> Result<SamplePath<T>> {
    let s = FouPairSampler::new(theta, rho, h, n)?;
    let (zt, zr) = s.draw_pair(&mut substream(seed, 0, 0));
    let d = s.assemble(&zt, &zr);
    let mut path = SamplePath::new(d.x, s.model(), seed, false);
    path.companion = Some(d.sigma_path);
    Ok(path)
}

/// Stationary parts `(Z^{θ,ρ}, Σ^{θ,ρ})` of the OUFOU model, as a path with
/// companion.
pub fn sample_oufou_stationary<T: Real>(theta: T, rho: T, h: T, n: usize, seed: u64) -> Result<SamplePath<T>> {
    let s = FouPairSampler::new(theta, rho, h, n)?;
    let (zt, zr) = s.draw_pair(&mut substream(seed, 0, 0));
    let d = s.assemble(&zt, &zr);
    let mut path = SamplePath::new(d.z, s.model(), seed, true);
    path.companion = Some(d.sigma);
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cov_models::{fgn_kernel, KernelMeta};

    #[test]
    fn deterministic_and_zero_started() {
        let k = fgn_kernel(0.7, 1.0).unwrap();
        let a = sample_stationary(&k, 100, 7).unwrap();
        let b = sample_stationary(&k, 100, 7).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, sample_stationary(&k, 100, 8).unwrap().values);
        assert_eq!(sample_fou_nonstationary(1.0, 0.6, 50, 3).unwrap().values[0], 0.0);
        let p = sample_oufou(1.0, 2.0, 0.6, 50, 3).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.companion.unwrap()[0], 0.0);
        assert_eq!(sample_fou2(1.0, 0.75, 50, 3).unwrap().values[0], 0.0);
    }

    #[test]
    fn cholesky_fallback_reports_minor() {
        // r = (1, 0.9, 0) is not positive definite for n = 3 as a Toeplitz matrix
        let bad = CovKernel::tabulated(vec![1.0, 0.9, 0.0], None, KernelMeta::new("bad", &[])).unwrap();
        let err = StationarySampler::new(&bad, 3).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { minor: 3 }), "{err:?}");
    }
}
