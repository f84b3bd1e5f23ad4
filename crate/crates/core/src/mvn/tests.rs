use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn spd(rows: &[&[f64]]) -> SpdMatrix {
    let p = rows.len();
    SpdMatrix::new(DMatrix::from_fn(p, p, |i, j| rows[i][j])).unwrap()
}

fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let w = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut m = &w * w.transpose() / p as f64;
    for i in 0..p {
        m[(i, i)] += 0.3;
    }
    m
}

fn random_limits(rng: &mut ChaCha8Rng, cov: &DMatrix<f64>) -> Vec<f64> {
    (0..cov.nrows())
        .map(|i| rng.random_range(-1.5..1.5) * cov[(i, i)].sqrt())
        .collect()
}

fn acc() -> CdfAccuracy {
    CdfAccuracy::with_tolerance(1e-9)
}

fn phi(a: &[f64], cov: &DMatrix<f64>) -> f64 {
    cdf_uncounted(a, cov, &acc()).unwrap()
}

#[test]
fn pdf_examples() {
    let one = spd(&[&[1.0]]);
    assert!((pdf(&[0.0], &one).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
    let eye = spd(&[&[1.0, 0.0], &[0.0, 1.0]]);
    assert!((pdf(&[0.0, 0.0], &eye).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);

    // Joint density as marginal times conditional.
    let rho = 0.5;
    let c = spd(&[&[1.0, rho], &[rho, 1.0]]);
    let (x1, x2) = (1.0, -1.0);
    let joint = pdf(&[x1, x2], &c).unwrap();
    let product = norm_pdf(x1) * norm_pdf_var(x2 - rho * x1, 1.0 - rho * rho);
    assert!((joint - product).abs() < 1e-14 * product);
}

#[test]
fn pdf_rejects_wrong_length() {
    let eye = spd(&[&[1.0, 0.0], &[0.0, 1.0]]);
    assert!(matches!(pdf(&[0.0], &eye), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn cdf_examples() {
    let mut counter = CdfCallCounter::new();
    let a = CdfAccuracy::default();
    let one = spd(&[&[1.0]]);
    assert!((cdf(&[0.0], &one, &a, &mut counter).unwrap() - 0.5).abs() < 1e-15);
    let c = spd(&[&[1.0, 0.5], &[0.5, 1.0]]);
    let v = cdf(&[0.0, 0.0], &c, &a, &mut counter).unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-14);
    let eye3 = SpdMatrix::new(DMatrix::identity(3, 3)).unwrap();
    let v = cdf(&[0.0; 3], &eye3, &a, &mut counter).unwrap();
    assert!((v - 0.125).abs() < 1e-12);
    let empty = SpdMatrix::new(DMatrix::zeros(0, 0)).unwrap();
    assert_eq!(cdf(&[], &empty, &a, &mut counter).unwrap(), 1.0);
    assert_eq!(counter.get(1), 1);
    assert_eq!(counter.get(2), 1);
    assert_eq!(counter.get(3), 1);
    assert_eq!(counter.get(0), 1);
}

#[test]
fn identity_factorization_up_to_five() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = CdfAccuracy::default();
    for p in 1..=5 {
        for _ in 0..5 {
            let lim: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = cdf_uncounted(&lim, &DMatrix::identity(p, p), &a).unwrap();
            let prod: f64 = lim.iter().map(|x| norm_cdf(*x)).product();
            assert!((v - prod).abs() <= 10.0 * a.tolerance, "p={p} {v} {prod}");
        }
    }
}

#[test]
fn equicorrelated_orthants() {
    // P(all U_i <= 0) with correlation 1/2 equals 1/(p+1).
    for p in 3..=7 {
        let a = CdfAccuracy::with_tolerance(if p <= 4 { 1e-7 } else { 1e-6 });
        let cov = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.5 });
        let v = cdf_uncounted(&vec![0.0; p], &cov, &a).unwrap();
        assert!((v - 1.0 / (p as f64 + 1.0)).abs() < 10.0 * a.tolerance, "p={p} {v}");
    }
}

#[test]
fn nested_and_lattice_rules_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = CdfAccuracy::with_tolerance(1e-7);
    for p in 3..=4 {
        for _ in 0..5 {
            let cov = random_spd(&mut rng, p);
            let lim = random_limits(&mut rng, &cov);
            let nested = cdf_uncounted(&lim, &cov, &a).unwrap();
            let lattice = qmc::cdf(&lim, &cov, &a).unwrap();
            assert!((nested - lattice).abs() < 1e-6, "p={p} {nested} {lattice}");
        }
    }
}

#[test]
fn monotone_in_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = CdfAccuracy::default();
    for p in 2..=5 {
        for _ in 0..4 {
            let cov = random_spd(&mut rng, p);
            let lo = random_limits(&mut rng, &cov);
            let hi: Vec<f64> = lo.iter().map(|x| x + rng.random_range(0.0..0.5)).collect();
            let v_lo = cdf_uncounted(&lo, &cov, &a).unwrap();
            let v_hi = cdf_uncounted(&hi, &cov, &a).unwrap();
            assert!(v_lo <= v_hi + 10.0 * a.tolerance);
        }
    }
}

#[test]
fn deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in [3, 4, 6] {
        let cov = random_spd(&mut rng, p);
        let lim = random_limits(&mut rng, &cov);
        let a = CdfAccuracy::default();
        let x = cdf_uncounted(&lim, &cov, &a).unwrap();
        let y = cdf_uncounted(&lim, &cov, &a).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn infinite_limits_marginalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cov = random_spd(&mut rng, 6);
    let mut lim = random_limits(&mut rng, &cov);
    lim[1] = f64::INFINITY;
    lim[4] = f64::INFINITY;
    let keep = [0usize, 2, 3, 5];
    let sub = DMatrix::from_fn(4, 4, |r, c| cov[(keep[r], keep[c])]);
    let sub_lim: Vec<f64> = keep.iter().map(|&j| lim[j]).collect();
    assert_eq!(phi(&lim, &cov), phi(&sub_lim, &sub));
    lim[0] = f64::NEG_INFINITY;
    assert_eq!(phi(&lim, &cov), 0.0);
}

#[test]
fn tolerance_failure_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cov = random_spd(&mut rng, 8);
    let lim = random_limits(&mut rng, &cov);
    let a = CdfAccuracy {
        tolerance: 1e-14,
        max_evaluations: 5_000,
        seed: 0,
    };
    assert!(matches!(
        cdf_uncounted(&lim, &cov, &a),
        Err(Error::CdfTolerance { .. })
    ));
    let bad = CdfAccuracy {
        tolerance: 0.0,
        ..CdfAccuracy::default()
    };
    let s = SpdMatrix::new(cov).unwrap();
    assert!(cdf(&lim, &s, &bad, &mut CdfCallCounter::new()).is_err());
}

#[test]
fn spd_construction() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
    assert!(matches!(SpdMatrix::new(asym), Err(Error::NotSymmetric { .. })));
    let neg = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(SpdMatrix::new(neg), Err(Error::NotPositiveDefinite { .. })));
    // Rank one: rescued by the single jitter pass.
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let s = SpdMatrix::new(singular).unwrap();
    assert!(s.was_jittered());
    assert!((s.get(0, 0) - 1.0 - 1e-10).abs() < 1e-16);
    assert!(!spd(&[&[2.0]]).was_jittered());
}

#[test]
fn conditional_reduce_examples() {
    let eye = spd(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let (a, c) = conditional_reduce(&[0.3, 0.7], &eye, 0).unwrap();
    assert_eq!(a, vec![0.7]);
    assert_eq!(c.get(0, 0), 1.0);
    let c2 = spd(&[&[1.0, 0.5], &[0.5, 1.0]]);
    let (a, c) = conditional_reduce(&[0.0, 0.0], &c2, 1).unwrap();
    assert_eq!(a, vec![0.0]);
    assert!((c.get(0, 0) - 0.75).abs() < 1e-15);
    assert!(conditional_reduce(&[0.0, 0.0], &c2, 2).is_err());
    let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-20]);
    assert!(matches!(
        reduce_raw(&[0.0, 0.0], &tiny, 1),
        Err(Error::BelowJitterFloor { index: 1, .. })
    ));
}

#[test]
fn conditional_reduce_matches_sampled_moments() {
    // Draw (U_{-i}, U_i) jointly, regress U_{-i} on U_i and compare the
    // implied conditional law at U_i = a_i with the reduced pair. The
    // reduced limit encodes the conditional mean: a_{|i} = a_{-i} - E[U_{-i}|U_i=a_i].
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cov = random_spd(&mut rng, 3);
    let s = SpdMatrix::new(cov.clone()).unwrap();
    let a = [0.4, -0.2, 0.9];
    let i = 1;
    let (ar, cr) = conditional_reduce(&a, &s, i).unwrap();
    let n = 1_000_000;
    let l = s.factor().clone();
    let others = [0usize, 2];
    let (mut sxx, mut sxy, mut syy) = (0.0, [0.0; 2], [[0.0; 2]; 2]);
    let mut resid = Vec::with_capacity(n);
    for _ in 0..n {
        let z = nalgebra::DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &l * z;
        resid.push(u.clone());
        sxx += u[i] * u[i];
        for (r, &j) in others.iter().enumerate() {
            sxy[r] += u[i] * u[j];
        }
    }
    let beta = [sxy[0] / sxx, sxy[1] / sxx];
    for u in &resid {
        let e = [u[0] - beta[0] * u[i], u[2] - beta[1] * u[i]];
        for r in 0..2 {
            for c in 0..2 {
                syy[r][c] += e[r] * e[c];
            }
        }
    }
    for (r, &j) in others.iter().enumerate() {
        let cond_mean = beta[r] * a[i];
        assert!((a[j] - cond_mean - ar[r]).abs() < 0.01, "mean {r}");
        for c in 0..2 {
            let v = syy[r][c] / n as f64;
            assert!((v - cr.get(r, c)).abs() < 0.01 * cov[(0, 0)].max(cov[(2, 2)]), "cov {r}{c}");
        }
    }
}

#[test]
fn dpoint_examples() {
    let mut counter = CdfCallCounter::new();
    let a = CdfAccuracy::default();
    let one = spd(&[&[1.0]]);
    let v = cdf_dpoint(&[0.0], &one, 0, &a, &mut counter).unwrap();
    assert!((v - 0.398_942_280_4).abs() < 1e-10);
    let eye = spd(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let v = cdf_dpoint(&[0.0, 0.0], &eye, 0, &a, &mut counter).unwrap();
    assert!((v - 0.199_471_140_2).abs() < 1e-10);
    assert_eq!(counter.get(0), 1);
    assert_eq!(counter.get(1), 1);
    assert_eq!(counter.total(), 2);
}

#[test]
fn dcov_examples() {
    let mut counter = CdfCallCounter::new();
    let a = CdfAccuracy::default();
    let eye = spd(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let g = cdf_dcov(&[0.0, 0.0], &eye, &a, &mut counter).unwrap();
    assert!((g[(0, 1)] - 1.0 / (2.0 * PI)).abs() < 1e-12);
    assert!((g[(1, 0)] - 1.0 / (2.0 * PI)).abs() < 1e-12);
    assert!(g[(0, 0)].abs() < 1e-15 && g[(1, 1)].abs() < 1e-15);

    let x = 0.7;
    let var = 1.8;
    let g = cdf_dcov(&[x], &spd(&[&[var]]), &a, &mut counter).unwrap();
    let expected = -0.5 * (x / var) * norm_pdf_var(x, var);
    assert!((g[(0, 0)] - expected).abs() < 1e-14);
}

#[test]
fn counter_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cov = SpdMatrix::new(random_spd(&mut rng, 4)).unwrap();
    let lim = random_limits(&mut rng, cov.matrix());
    let a = CdfAccuracy::default();
    let mut counter = CdfCallCounter::new();
    cdf(&lim, &cov, &a, &mut counter).unwrap();
    assert_eq!(counter.total(), 1);
    assert_eq!(counter.get(4), 1);
    counter.reset();
    assert_eq!(counter.total(), 0);
    cdf_dpoint(&lim, &cov, 2, &a, &mut counter).unwrap();
    assert_eq!(counter.total(), 1);
    assert_eq!(counter.get(3), 1);
    counter.reset();
    cdf_dcov(&lim, &cov, &a, &mut counter).unwrap();
    assert_eq!(counter.get(3), 4);
    assert_eq!(counter.get(2), 6);
}

fn rel_err(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-3)
}

#[test]
fn dpoint_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let a = acc();
    let h = 1e-5;
    for case in 0..50 {
        let p = 2 + case % 3;
        let cov = random_spd(&mut rng, p);
        let lim = random_limits(&mut rng, &cov);
        let s = SpdMatrix::new(cov.clone()).unwrap();
        for i in 0..p {
            let d = cdf_dpoint(&lim, &s, i, &a, &mut CdfCallCounter::new()).unwrap();
            let mut up = lim.clone();
            let mut dn = lim.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (phi(&up, &cov) - phi(&dn, &cov)) / (2.0 * h);
            assert!(rel_err(d, fd) < 1e-4, "case {case} i {i}: {d} vs {fd}");
        }
    }
}

#[test]
fn dcov_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let a = acc();
    let h = 1e-5;
    for case in 0..50 {
        let p = 2 + case % 3;
        let cov = random_spd(&mut rng, p);
        let lim = random_limits(&mut rng, &cov);
        let s = SpdMatrix::new(cov.clone()).unwrap();
        let g = cdf_dcov(&lim, &s, &a, &mut CdfCallCounter::new()).unwrap();
        for i in 0..p {
            for j in i..p {
                let mut up = cov.clone();
                let mut dn = cov.clone();
                up[(i, j)] += h;
                dn[(i, j)] -= h;
                if i != j {
                    up[(j, i)] += h;
                    dn[(j, i)] -= h;
                }
                let fd = (phi(&lim, &up) - phi(&lim, &dn)) / (2.0 * h);
                assert!(rel_err(g[(i, j)], fd) < 1e-3, "case {case} ({i},{j}): {} vs {fd}", g[(i, j)]);
                assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
    }
}

#[test]
fn trace_form_of_covariance_differential() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cov = random_spd(&mut rng, 3);
    let lim = random_limits(&mut rng, &cov);
    let s = SpdMatrix::new(cov.clone()).unwrap();
    let hess = cdf_hessian(&lim, &s, &acc(), &mut CdfCallCounter::new()).unwrap();
    let dir = random_spd(&mut rng, 3);
    let t = 1e-5;
    let fd = (phi(&lim, &(&cov + &dir * t)) - phi(&lim, &(&cov - &dir * t))) / (2.0 * t);
    let analytic = 0.5 * (&dir * &hess).trace();
    assert!(rel_err(analytic, fd) < 1e-5, "{analytic} vs {fd}");
}
