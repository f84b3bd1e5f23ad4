//! Genz's separation-of-variables integrator for higher dimensions: variable
//! reordering by expected truncation, randomized Richtmyer lattice points with
//! a tent periodization and antithetic pairs, and a doubling sample schedule
//! driven by the randomization error estimate.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{norm_cdf, norm_inv, norm_pdf, CdfAccuracy};
use crate::error::{Error, Result};

const SHIFTS: usize = 8;
const INITIAL_POINTS: usize = 512;
const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

pub fn cdf(a: &[f64], cov: &DMatrix<f64>, acc: &CdfAccuracy) -> Result<f64> {
    let p = a.len();
    if p > PRIMES.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "dimension {p} exceeds the supported maximum {}",
            PRIMES.len() + 1
        )));
    }
    let (limits, chol) = reorder_and_factor(a, cov);
    // First coordinate is integrated in closed form.
    let first = norm_cdf(limits[0] / chol[(0, 0)]);
    if p == 1 || first == 0.0 {
        return Ok(first);
    }
    let dims = p - 1;
    let generator: Vec<f64> = PRIMES[..dims].iter().map(|&q| (q as f64).sqrt().fract()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(acc.seed);
    let shifts: Vec<Vec<f64>> = (0..SHIFTS)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut n = INITIAL_POINTS;
    let mut evaluations = 0usize;
    let mut z = vec![0.0; p];
    let mut w = vec![0.0; dims];
    loop {
        let mut means = [0.0; SHIFTS];
        for (s, shift) in shifts.iter().enumerate() {
            let mut sum = 0.0;
            for k in 1..=n {
                for j in 0..dims {
                    let x = (k as f64 * generator[j] + shift[j]).fract();
                    w[j] = (2.0 * x - 1.0).abs();
                }
                sum += integrand(&limits, &chol, first, &w, &mut z);
                for wj in w.iter_mut() {
                    *wj = 1.0 - *wj;
                }
                sum += integrand(&limits, &chol, first, &w, &mut z);
            }
            means[s] = sum / (2 * n) as f64;
        }
        evaluations += 2 * n * SHIFTS;
        let mean = means.iter().sum::<f64>() / SHIFTS as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (SHIFTS - 1) as f64;
        let error = 3.0 * (var / SHIFTS as f64).sqrt();
        if error <= acc.tolerance {
            return Ok(mean.clamp(0.0, 1.0));
        }
        if evaluations + 4 * n * SHIFTS > acc.max_evaluations {
            return Err(Error::CdfTolerance {
                requested: acc.tolerance,
                achieved: error,
                evaluations,
            });
        }
        n *= 2;
    }
}

fn integrand(limits: &[f64], chol: &DMatrix<f64>, first: f64, w: &[f64], z: &mut [f64]) -> f64 {
    let p = limits.len();
    let mut prob = first;
    let mut e = first;
    for i in 1..p {
        z[i - 1] = norm_inv((w[i - 1] * e).clamp(1e-300, 1.0 - 1e-16));
        let mut t = limits[i];
        for k in 0..i {
            t -= chol[(i, k)] * z[k];
        }
        e = norm_cdf(t / chol[(i, i)]);
        prob *= e;
        if prob == 0.0 {
            return 0.0;
        }
    }
    prob
}

/// Cholesky factorization with Genz-Bretz priority ordering: at each step the
/// coordinate with the smallest conditional probability goes next.
fn reorder_and_factor(a: &[f64], cov: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = a.len();
    let mut sigma = cov.clone();
    let mut limits = a.to_vec();
    let mut chol = DMatrix::<f64>::zeros(p, p);
    let mut y = vec![0.0; p];
    let floor = 1e-14 * (0..p).map(|i| cov[(i, i)]).fold(0.0, f64::max);
    for i in 0..p {
        let mut best = i;
        let mut best_prob = f64::INFINITY;
        for j in i..p {
            let mut var = sigma[(j, j)];
            let mut shift = 0.0;
            for k in 0..i {
                var -= chol[(j, k)] * chol[(j, k)];
                shift += chol[(j, k)] * y[k];
            }
            let prob = norm_cdf((limits[j] - shift) / var.max(floor).sqrt());
            if prob < best_prob {
                best_prob = prob;
                best = j;
            }
        }
        if best != i {
            sigma.swap_rows(i, best);
            sigma.swap_columns(i, best);
            chol.swap_rows(i, best);
            limits.swap(i, best);
        }
        let mut diag = sigma[(i, i)];
        for k in 0..i {
            diag -= chol[(i, k)] * chol[(i, k)];
        }
        let lii = diag.max(floor).sqrt();
        chol[(i, i)] = lii;
        for j in (i + 1)..p {
            let mut v = sigma[(j, i)];
            for k in 0..i {
                v -= chol[(j, k)] * chol[(i, k)];
            }
            chol[(j, i)] = v / lii;
        }
        let mut shift = 0.0;
        for k in 0..i {
            shift += chol[(i, k)] * y[k];
        }
        let t = (limits[i] - shift) / lii;
        let cdf_t = norm_cdf(t);
        y[i] = if cdf_t > 1e-300 { -norm_pdf(t) / cdf_t } else { t };
    }
    (limits, chol)
}
