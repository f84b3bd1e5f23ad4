//! Space-filling point sets on the unit cube.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::rng_for;

/// Exchange iterations of the maximin improvement pass.
pub const MAXIMIN_ITERATIONS: usize = 500;

fn min_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// Random Latin hypercube before the exchange pass.
pub fn random_lhs(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for c in 0..d {
        let mut bins: Vec<usize> = (0..n).collect();
        bins.shuffle(rng);
        for (row, bin) in pts.iter_mut().zip(bins) {
            row[c] = (bin as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Latin hypercube in `[0,1]^d` improved by maximin coordinate exchanges.
/// Returns the design and the minimum pairwise distance before and after.
pub fn lhs_design_with_stats(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, f64, f64) {
    let mut rng = rng_for(seed, &[0x1a5]);
    let mut pts = random_lhs(n, d, &mut rng);
    let initial = min_distance(&pts);
    let mut current = initial;
    if n >= 2 {
        for _ in 0..MAXIMIN_ITERATIONS {
            let c = rng.random_range(0..d);
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let (a, b) = (pts[i][c], pts[j][c]);
            pts[i][c] = b;
            pts[j][c] = a;
            let candidate = min_distance(&pts);
            if candidate >= current {
                current = candidate;
            } else {
                pts[i][c] = a;
                pts[j][c] = b;
            }
        }
    }
    (pts, initial, current)
}

pub fn lhs_design(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    lhs_design_with_stats(n, d, seed).0
}

const PRIMES: [u64; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];

/// Halton points with a random digit permutation per coordinate
/// (zero digits stay zero), skipping the origin.
pub fn scrambled_halton(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(d <= PRIMES.len(), "scrambled Halton supports at most {} dimensions", PRIMES.len());
    let mut rng = rng_for(seed, &[0x4a1]);
    let perms: Vec<Vec<u64>> = PRIMES[..d]
        .iter()
        .map(|&b| {
            let mut p: Vec<u64> = (1..b).collect();
            p.shuffle(&mut rng);
            std::iter::once(0).chain(p).collect()
        })
        .collect();
    (1..=m as u64)
        .map(|i| {
            PRIMES[..d]
                .iter()
                .zip(&perms)
                .map(|(&b, perm)| {
                    let mut k = i;
                    let mut f = 1.0 / b as f64;
                    let mut x = 0.0;
                    while k > 0 {
                        x += perm[(k % b) as usize] as f64 * f;
                        k /= b;
                        f /= b as f64;
                    }
                    x
                })
                .collect()
        })
        .collect()
}
