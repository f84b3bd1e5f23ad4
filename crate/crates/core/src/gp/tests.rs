use super::*;
use rand::Rng;

const FAMILIES: [KernelFamily; 3] = [
    KernelFamily::Matern32,
    KernelFamily::Matern52,
    KernelFamily::Gaussian,
];

fn random_model(rng: &mut ChaCha8Rng, family: KernelFamily, n: usize, d: usize) -> PosteriorGP {
    // Gaussian Gram matrices become numerically singular at long ranges.
    let span = if family == KernelFamily::Gaussian { 0.1..0.3 } else { 0.3..1.0 };
    let ranges = (0..d).map(|_| rng.random_range(span.clone())).collect();
    let kernel = Kernel::new(family, rng.random_range(0.5..2.0), ranges).unwrap();
    let design: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    // Responses drawn from the prior keep the interpolant realistic.
    let mean = rng.random_range(-0.5..0.5);
    let responses = sample_path(&kernel, mean, &design, rng.random()).unwrap();
    PosteriorGP::new(kernel, mean, design, responses).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

// Dense oracle: explicit inverse of the Gram matrix via LU.
fn dense_posterior(model: &PosteriorGP, x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = model.kernel();
    let n = model.n();
    let g = DMatrix::from_fn(n, n, |i, j| k.cov(&model.design()[i], &model.design()[j]));
    let inv = g.lu().try_inverse().unwrap();
    let cx = DVector::from_iterator(n, model.design().iter().map(|d| k.cov(x, d)));
    let cy = DVector::from_iterator(n, model.design().iter().map(|d| k.cov(y, d)));
    let resid = DVector::from_iterator(n, model.responses().iter().map(|r| r - model.prior_mean()));
    let mean = model.prior_mean() + (cx.transpose() * &inv * resid)[0];
    let cov = k.cov(x, y) - (cx.transpose() * &inv * cy)[0];
    (mean, cov)
}

#[test]
fn interpolates_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for f in FAMILIES {
        let m = random_model(&mut rng, f, 15, 3);
        let var = m.kernel().variance;
        for (x, y) in m.design().iter().zip(m.responses()) {
            assert!((m.mean(x) - y).abs() <= 1e-8 * (1.0 + y.abs()));
            assert!(m.variance(x) <= 1e-8 * var);
            let s = m.posterior_cov(std::slice::from_ref(x)).unwrap();
            assert!(s[(0, 0)].abs() <= 1e-8 * var);
        }
    }
}

#[test]
fn variance_bounded_by_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for f in FAMILIES {
        let m = random_model(&mut rng, f, 12, 2);
        for _ in 0..100 {
            let x = random_point(&mut rng, 2);
            let v = m.variance(&x);
            assert!((0.0..=m.kernel().variance + 1e-8).contains(&v));
        }
    }
}

#[test]
fn far_from_data_reverts_to_prior() {
    let k = Kernel::isotropic(KernelFamily::Matern52, 1.0, 0.2, 2).unwrap();
    let m = PosteriorGP::new(k, 0.3, vec![vec![0.0, 0.0]], vec![2.0]).unwrap();
    assert!((m.mean(&[2.5, 0.0]) - 0.3).abs() < 1e-6);
}

#[test]
fn matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in FAMILIES {
        for _ in 0..5 {
            let m = random_model(&mut rng, f, 10, 3);
            let x = random_point(&mut rng, 3);
            let y = random_point(&mut rng, 3);
            let (mean, cov) = dense_posterior(&m, &x, &y);
            assert!((m.mean(&x) - mean).abs() < 1e-8);
            assert!((m.cov(&x, &y) - cov).abs() < 1e-8);
            let s = m.posterior_cov(&[x.clone(), y.clone()]).unwrap();
            assert!((s[(0, 1)] - cov).abs() < 1e-8);
        }
    }
}

#[test]
fn prior_model() {
    let k = Kernel::isotropic(KernelFamily::Gaussian, 2.0, 0.1, 2).unwrap();
    let m = PosteriorGP::prior(k, 0.0).unwrap();
    assert_eq!(m.mean_grad(&[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
    assert_eq!(m.cov_grad(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
    let s = m.posterior_cov(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    assert!((s[(0, 0)] - 2.0).abs() < 1e-12 && (s[(1, 1)] - 2.0).abs() < 1e-12);
    assert!(s[(0, 1)].abs() < 1e-12);

    let k = Kernel::isotropic(KernelFamily::Matern32, 1.0, 0.5, 3).unwrap();
    let m = PosteriorGP::prior(k, 0.0).unwrap();
    let g = m.cov_grad(&[0.2, 0.5, 0.5], &[0.6, 0.5, 0.5]).unwrap();
    assert!(g[0] != 0.0 && g[1] == 0.0 && g[2] == 0.0);
}

#[test]
fn symmetric_design_gives_zero_axial_gradient() {
    let k = Kernel::isotropic(KernelFamily::Matern52, 1.0, 0.4, 2).unwrap();
    let m = PosteriorGP::new(k, 0.0, vec![vec![0.2, 0.5], vec![0.8, 0.5]], vec![1.3, 1.3]).unwrap();
    let g = m.mean_grad(&[0.5, 0.5]).unwrap();
    assert!(g[0].abs() < 1e-14);
}

fn fd_check(value: impl Fn(&[f64]) -> f64, grad: &[f64], x: &[f64]) {
    let h = 1e-6;
    for i in 0..x.len() {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fd = (value(&up) - value(&dn)) / (2.0 * h);
        let err = (grad[i] - fd).abs() / fd.abs().max(1e-2);
        assert!(err < 1e-5, "coordinate {i} of {x:?}: {} vs {fd}", grad[i]);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..50 {
        let f = FAMILIES[case % 3];
        let d = 1 + case % 4;
        let m = random_model(&mut rng, f, 3 + 2 * d, d);
        let x = random_point(&mut rng, d);
        let y = random_point(&mut rng, d);
        fd_check(|p| m.mean(p), &m.mean_grad(&x).unwrap(), &x);
        fd_check(|p| m.cov(p, &y), &m.cov_grad(&x, &y).unwrap(), &x);
        // Variance gradient is twice the first-argument gradient at (x, x).
        let g: Vec<f64> = m.cov_grad(&x, &x).unwrap().iter().map(|v| 2.0 * v).collect();
        fd_check(|p| m.cov(p, p), &g, &x);
    }
}

#[test]
fn batch_moments_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_model(&mut rng, KernelFamily::Matern52, 10, 2);
    let pts: Vec<Vec<f64>> = (0..3).map(|_| random_point(&mut rng, 2)).collect();
    let bm = m.batch_moments(&pts).unwrap();
    for j in 0..3 {
        assert!((bm.mean[j] - m.mean(&pts[j])).abs() < 1e-14);
        assert_eq!(bm.mean_grad[j], m.mean_grad(&pts[j]).unwrap());
        for l in 0..3 {
            let g = m.cov_grad(&pts[j], &pts[l]).unwrap();
            for (a, b) in g.iter().zip(&bm.cov_grad[j][l]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn matern32_refuses_gradient_at_design_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = random_model(&mut rng, KernelFamily::Matern32, 5, 2);
    let x = m.design()[3].clone();
    assert_eq!(m.mean_grad(&x), Err(Error::NonSmoothPoint { index: 3 }));
    assert!(m.cov_grad(&x, &[0.5, 0.5]).is_err());
    let m = random_model(&mut rng, KernelFamily::Gaussian, 5, 2);
    assert!(m.mean_grad(&m.design()[0].clone()).is_ok());
}

#[test]
fn construction_errors() {
    let k = Kernel::isotropic(KernelFamily::Gaussian, 1.0, 0.5, 2).unwrap();
    let dup = PosteriorGP::new(k.clone(), 0.0, vec![vec![0.1, 0.1], vec![0.1, 0.1]], vec![0.0, 1.0]);
    assert!(matches!(dup, Err(Error::DuplicatePoint { index: 1, .. })));
    let bad = PosteriorGP::new(k.clone(), 0.0, vec![vec![0.1]], vec![0.0]);
    assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    let bad = PosteriorGP::new(k, 0.0, vec![vec![0.1, 0.2]], vec![]);
    assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    assert!(DomainBox::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
}

#[test]
fn believer_keeps_mean_and_shrinks_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for f in FAMILIES {
        let m = random_model(&mut rng, f, 10, 2);
        let x = random_point(&mut rng, 2);
        let aug = m.believer_augment(&x).unwrap();
        assert_eq!(aug.n(), 11);
        assert!(aug.variance(&x) <= 1e-8 * m.kernel().variance);
        for i in 0..10 {
            for j in 0..10 {
                let p = [i as f64 / 9.0, j as f64 / 9.0];
                assert!((aug.mean(&p) - m.mean(&p)).abs() <= 1e-7);
                assert!(aug.variance(&p) <= m.variance(&p) + 1e-12);
            }
        }
        assert_eq!(m.n(), 10);
        let dup = m.believer_augment(&m.design()[2].clone());
        assert!(matches!(dup, Err(Error::DuplicatePoint { index: 2, .. })));
    }
}

#[test]
fn sample_path_examples() {
    let k = Kernel::isotropic(KernelFamily::Matern32, 2.0, 0.5, 1).unwrap();
    let v = sample_path(&k, 1.0, &[vec![0.3]], 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let z: f64 = rng.sample(StandardNormal);
    assert!((v[0] - (1.0 + 2f64.sqrt() * z)).abs() < 1e-14);
    assert_eq!(v, sample_path(&k, 1.0, &[vec![0.3]], 42).unwrap());

    let near = sample_path(&k, 0.0, &[vec![0.3], vec![0.3 + 1e-12]], 3).unwrap();
    assert!((near[0] - near[1]).abs() <= 1e-4 * 2f64.sqrt());
}

#[test]
fn sample_path_variance() {
    let k = Kernel::isotropic(KernelFamily::Gaussian, 1.5, 0.3, 2).unwrap();
    let pts = vec![vec![0.1, 0.2], vec![0.5, 0.5], vec![0.9, 0.3]];
    let n = 10_000;
    let draws: Vec<f64> = (0..n).map(|s| sample_path(&k, 0.0, &pts, s).unwrap()[1]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((var - 1.5).abs() < 0.05 * 1.5, "{var}");
}

#[test]
fn domain_box_helpers() {
    let b = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
    assert!((b.diagonal() - 8f64.sqrt()).abs() < 1e-15);
    assert_eq!(b.from_unit(&[0.5, 0.25]), vec![0.0, 0.5]);
    let mut x = vec![3.0, -1.0];
    b.project(&mut x);
    assert_eq!(x, vec![1.0, 0.0]);
    assert!(b.contains(&x));
}
