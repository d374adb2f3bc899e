//! Small dense linear-algebra kernels.

use crate::error::{Error, Result};
use crate::Real;

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off[i]` couples rows `i` and `i+1`; the last entry is
/// ignored), together with the first component of each normalized eigenvector.
/// Implicit QL with Wilkinson shifts.
pub fn tridiagonal_eigen_first_row<T: Real>(mut d: Vec<T>, mut e: Vec<T>) -> (Vec<T>, Vec<T>) {
    let n = d.len();
    e.resize(n, T::zero());
    e[n - 1] = T::zero();
    let mut z = vec![T::zero(); n];
    z[0] = T::one();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (T::lit(2.0) * e[l]);
            let mut r = g.hypot(T::one());
            let sign_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + T::lit(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    (d, z)
}

/// In-place lower Cholesky factor of a dense row-major `n x n` symmetric
/// matrix. Fails with the index (1-based) of the first non-positive leading
/// minor.
pub fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > T::zero()) {
            return Err(Error::NotPositiveDefinite { minor: j + 1 });
        }
        let djj = diag.sqrt();
        a[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / djj;
        }
        for k in j + 1..n {
            a[j * n + k] = T::zero();
        }
    }
    Ok(())
}

/// Smallest eigenvalue of a dense symmetric matrix via cyclic Jacobi sweeps
/// (used for diagnostics on moderate sizes only).
pub fn min_eigenvalue_symmetric<T: Real>(mut a: Vec<T>, n: usize) -> T {
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= T::epsilon() * T::lit(1e-2) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(T::infinity(), |m, v| m.min(v))
}

/// Hermitian square-root-like factor of a 2x2 Hermitian positive semidefinite
/// matrix `[[a, b], [conj(b), d]]` (a, d real): returns `L` (row-major complex
/// entries as (re, im)) with `L L^* = M` after clipping negative eigenvalues to
/// zero. The second return value counts clipped eigenvalues.
pub fn hermitian2_factor<T: Real>(a: T, b: (T, T), d: T, clip_floor: T) -> ([(T, T); 4], usize) {
    let two = T::lit(2.0);
    let babs2 = b.0 * b.0 + b.1 * b.1;
    let tr = a + d;
    let diff = (a - d) / two;
    let disc = (diff * diff + babs2).sqrt();
    let l1 = tr / two + disc;
    let l2 = tr / two - disc;
    let mut clipped = 0;
    let mut clip = |l: T| {
        if l < T::zero() {
            if l < -clip_floor {
                clipped += 1;
            }
            T::zero()
        } else {
            l
        }
    };
    let s1 = clip(l1).sqrt();
    let s2 = clip(l2).sqrt();
    if babs2.sqrt() <= T::epsilon() * (a.abs() + d.abs()) {
        // already diagonal
        let (sa, sd) = (clip_real(a), clip_real(d));
        return ([(sa, T::zero()), (T::zero(), T::zero()), (T::zero(), T::zero()), (sd, T::zero())], clipped);
    }
    // eigenvector for l1: (b, l1 - a) normalized; for l2: (b, l2 - a)
    let v1 = normalize2(b, (l1 - a, T::zero()));
    let v2 = normalize2(b, (l2 - a, T::zero()));
    // L = [v1 s1, v2 s2] as columns
    let l = [
        (v1.0 .0 * s1, v1.0 .1 * s1),
        (v2.0 .0 * s2, v2.0 .1 * s2),
        (v1.1 .0 * s1, v1.1 .1 * s1),
        (v2.1 .0 * s2, v2.1 .1 * s2),
    ];
    (l, clipped)
}

fn clip_real<T: Real>(x: T) -> T {
    if x > T::zero() {
        x.sqrt()
    } else {
        T::zero()
    }
}

fn normalize2<T: Real>(x: (T, T), y: (T, T)) -> ((T, T), (T, T)) {
    let n = (x.0 * x.0 + x.1 * x.1 + y.0 * y.0 + y.1 * y.1).sqrt();
    ((x.0 / n, x.1 / n), (y.0 / n, y.1 / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reports_offending_minor() {
        let mut a = vec![1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0];
        assert_eq!(cholesky_in_place(&mut a, 3), Err(Error::NotPositiveDefinite { minor: 3 }));
    }

    #[test]
    fn hermitian_factor_reconstructs() {
        let (a, b, d) = (2.0f64, (0.3f64, -0.7f64), 1.5f64);
        let (l, clipped) = hermitian2_factor(a, b, d, 1e-12);
        assert_eq!(clipped, 0);
        // (L L^*)_{01} = L00 conj(L10) + L01 conj(L11)
        let m00 = l[0].0 * l[0].0 + l[0].1 * l[0].1 + l[1].0 * l[1].0 + l[1].1 * l[1].1;
        let m01_re = l[0].0 * l[2].0 + l[0].1 * l[2].1 + l[1].0 * l[3].0 + l[1].1 * l[3].1;
        let m01_im = l[0].1 * l[2].0 - l[0].0 * l[2].1 + l[1].1 * l[3].0 - l[1].0 * l[3].1;
        let m11 = l[2].0 * l[2].0 + l[2].1 * l[2].1 + l[3].0 * l[3].0 + l[3].1 * l[3].1;
        assert!((m00 - a).abs() < 1e-13 && (m11 - d).abs() < 1e-13);
        assert!((m01_re - b.0).abs() < 1e-13 && (m01_im - b.1).abs() < 1e-13);
    }

    #[test]
    fn min_eigenvalue_of_known_matrix() {
        let a = vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let exact = 2.0 - 2f64.sqrt();
        assert!((min_eigenvalue_symmetric(a, 3) - exact).abs() < 1e-12);
    }
}
