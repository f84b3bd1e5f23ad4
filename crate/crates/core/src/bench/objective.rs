//! Test functions drawn as Gaussian-process sample paths.

use crate::batchopt::qn::{bounded_quasi_newton, QnConfig};
use crate::bench::design::scrambled_halton;
use crate::error::Result;
use crate::gp::{sample_path, DomainBox, Kernel, PosteriorGP};
use crate::rng::derive_seed;

/// Interpolator of one sample path drawn at `m` space-filling points of the
/// unit cube.
#[derive(Debug, Clone)]
pub struct Objective {
    interpolator: PosteriorGP,
    grid_best: (Vec<f64>, f64),
    optimum: (Vec<f64>, f64),
}

/// Grid points refined by local ascent when locating the optimum.
const POLISHED_POINTS: usize = 20;

pub fn make_objective(kernel: &Kernel, m: usize, seed: u64) -> Result<Objective> {
    let d = kernel.dim();
    let grid = scrambled_halton(m, d, derive_seed(seed, &[1]));
    let values = sample_path(kernel, 0.0, &grid, derive_seed(seed, &[2]))?;
    let interpolator = PosteriorGP::new(kernel.clone(), 0.0, grid, values)?;

    let mut order: Vec<usize> = (0..m).collect();
    let ys = interpolator.responses();
    order.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]));
    let top = order[0];
    let grid_best = (interpolator.design()[top].clone(), ys[top]);

    let domain = DomainBox::unit(d);
    let cfg = QnConfig {
        gradient_tolerance: 1e-9,
        value_tolerance: 1e-14,
        ..QnConfig::default()
    };
    let mut optimum = grid_best.clone();
    for &i in order.iter().take(POLISHED_POINTS) {
        let f = |x: &[f64]| Ok((interpolator.mean(x), interpolator.mean_grad_raw(x)));
        if let Ok((x, v, _)) = bounded_quasi_newton(f, &interpolator.design()[i], &domain.lower, &domain.upper, &cfg) {
            if v > optimum.1 {
                optimum = (x, v);
            }
        }
    }
    Ok(Objective {
        interpolator,
        grid_best,
        optimum,
    })
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.interpolator.mean(x)
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        self.interpolator.design()
    }

    pub fn grid_values(&self) -> &[f64] {
        self.interpolator.responses()
    }

    /// Best grid point and its drawn value.
    pub fn grid_best(&self) -> (&[f64], f64) {
        (&self.grid_best.0, self.grid_best.1)
    }

    /// Best value found by refining the top grid points; at least the grid maximum.
    pub fn optimum(&self) -> (&[f64], f64) {
        (&self.optimum.0, self.optimum.1)
    }
}
