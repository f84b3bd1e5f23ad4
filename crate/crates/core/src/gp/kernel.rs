use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary correlation families, applied coordinatewise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Matern32,
    Matern52,
    Gaussian,
}

impl KernelFamily {
    /// One-dimensional correlation at scaled lag `h`.
    fn corr(self, h: f64) -> f64 {
        let t = h.abs();
        match self {
            KernelFamily::Matern32 => {
                let s = 3f64.sqrt() * t;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * t;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelFamily::Gaussian => (-0.5 * h * h).exp(),
        }
    }

    /// `k'(h) / k(h)`.
    fn log_slope(self, h: f64) -> f64 {
        let t = h.abs();
        match self {
            KernelFamily::Matern32 => -3.0 * h / (1.0 + 3f64.sqrt() * t),
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * t;
                -(5.0 / 3.0) * h * (1.0 + s) / (1.0 + s + s * s / 3.0)
            }
            KernelFamily::Gaussian => -h,
        }
    }

    /// Whether the correlation is twice differentiable at zero lag.
    pub fn smooth_at_origin(self) -> bool {
        !matches!(self, KernelFamily::Matern32)
    }
}

/// Separable covariance `C(x, x') = σ² Π_i k((x_i - x'_i) / θ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub variance: f64,
    pub ranges: Vec<f64>,
}

impl Kernel {
    pub fn new(family: KernelFamily, variance: f64, ranges: Vec<f64>) -> Result<Self> {
        let k = Self {
            family,
            variance,
            ranges,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn isotropic(family: KernelFamily, variance: f64, range: f64, dim: usize) -> Result<Self> {
        Self::new(family, variance, vec![range; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if self.ranges.is_empty() {
            return Err(Error::InvalidInput("kernel needs at least one range".into()));
        }
        if let Some(r) = self.ranges.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput(format!("kernel ranges must be positive, got {r}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn cov(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut c = self.variance;
        for ((a, b), r) in x.iter().zip(y).zip(&self.ranges) {
            c *= self.family.corr((a - b) / r);
        }
        c
    }

    /// `∇_x C(x, y)`, written into `out`. Zero when `x == y`.
    pub fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> f64 {
        let c = self.cov(x, y);
        for (i, o) in out.iter_mut().enumerate() {
            let r = self.ranges[i];
            *o = c * self.family.log_slope((x[i] - y[i]) / r) / r;
        }
        c
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.grad_x_into(x, y, &mut g);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [KernelFamily; 3] = [
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::Gaussian,
    ];

    #[test]
    fn variance_at_zero_lag_and_symmetry() {
        for f in FAMILIES {
            let k = Kernel::new(f, 2.5, vec![0.3, 1.2]).unwrap();
            assert_eq!(k.cov(&[0.4, 0.1], &[0.4, 0.1]), 2.5);
            assert_eq!(k.cov(&[0.4, 0.1], &[0.9, -0.3]), k.cov(&[0.9, -0.3], &[0.4, 0.1]));
            assert_eq!(k.grad_x(&[0.4, 0.1], &[0.4, 0.1]), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn closed_forms() {
        let t: f64 = 0.7;
        let m32 = Kernel::new(KernelFamily::Matern32, 1.0, vec![1.0]).unwrap();
        let s = 3f64.sqrt() * t;
        assert!((m32.cov(&[t], &[0.0]) - (1.0 + s) * (-s).exp()).abs() < 1e-15);
        let g = Kernel::new(KernelFamily::Gaussian, 1.0, vec![2.0]).unwrap();
        assert!((g.cov(&[t], &[0.0]) - (-t * t / 8.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = [0.31, -0.4, 0.77];
        let y = [0.05, 0.2, 0.6];
        for f in FAMILIES {
            let k = Kernel::new(f, 1.7, vec![0.5, 0.9, 1.4]).unwrap();
            let g = k.grad_x(&x, &y);
            for i in 0..3 {
                let h = 1e-6;
                let mut up = x;
                let mut dn = x;
                up[i] += h;
                dn[i] -= h;
                let fd = (k.cov(&up, &y) - k.cov(&dn, &y)) / (2.0 * h);
                assert!((g[i] - fd).abs() < 1e-8 * (1.0 + fd.abs()), "{f:?} {i}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Kernel::new(KernelFamily::Gaussian, 0.0, vec![1.0]).is_err());
        assert!(Kernel::new(KernelFamily::Gaussian, 1.0, vec![]).is_err());
        assert!(Kernel::new(KernelFamily::Gaussian, 1.0, vec![-1.0]).is_err());
    }
}
