//! Bivariate normal orthant probabilities.
//!
//! Genz's double-precision algorithm: Gauss-Legendre quadrature of the
//! correlation integral (after an arcsine substitution) for |r| < 0.925 and
//! the Drezner-Wesolowsky expansion with a corrective quadrature otherwise.

use std::f64::consts::PI;

use super::norm_cdf;

const TWO_PI: f64 = 2.0 * PI;

// Half tables of symmetric Gauss-Legendre rules on [-1, 1]: (weight, node).
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_4, 0.932_469_514_203_152_1),
    (0.360_761_573_048_138_6, 0.661_209_386_466_264_5),
    (0.467_913_934_572_691_0, 0.238_619_186_083_196_9),
];

const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_8, 0.981_560_634_246_719_2),
    (0.106_939_325_995_318_4, 0.904_117_256_370_474_9),
    (0.160_078_328_543_346_2, 0.769_902_674_194_304_7),
    (0.203_167_426_723_065_9, 0.587_317_954_286_617_5),
    (0.233_492_536_538_354_8, 0.367_831_498_998_180_2),
    (0.249_147_045_813_402_8, 0.125_233_408_511_468_9),
];

const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_1, 0.993_128_599_185_094_9),
    (0.040_601_429_800_386_9, 0.963_971_927_277_913_8),
    (0.062_672_048_334_109_1, 0.912_234_428_251_325_9),
    (0.083_276_741_576_704_8, 0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, 0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, 0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, 0.510_867_001_950_827_1),
    (0.142_096_109_318_382_0, 0.373_706_088_715_419_5),
    (0.149_172_986_472_603_7, 0.227_785_851_141_645_1),
    (0.152_753_387_130_725_8, 0.076_526_521_133_497_3),
];

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h.is_nan() || k.is_nan() || r.is_nan() {
        return f64::NAN;
    }
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return norm_cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    let r = r.clamp(-1.0, 1.0);
    if r == 0.0 {
        return norm_cdf(-h) * norm_cdf(-k);
    }
    if r == 1.0 {
        return norm_cdf(-h.max(k));
    }
    if r == -1.0 {
        return (norm_cdf(-h) - norm_cdf(k)).max(0.0);
    }

    let table: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };

    let value = if r.abs() < 0.925 {
        let hk = h * k;
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        let mut acc = 0.0;
        for &(w, x) in table {
            for sign in [-1.0, 1.0] {
                let sn = (0.5 * asr * (sign * x + 1.0)).sin();
                acc += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        acc * asr / (2.0 * TWO_PI) + norm_cdf(-h) * norm_cdf(-k)
    } else {
        let k = if r < 0.0 { -k } else { k };
        let hk = h * k;
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let mut acc = 0.0;
        let asr = -0.5 * (b_s / a_s + hk);
        if asr > -100.0 {
            acc = a
                * asr.exp()
                * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if -hk < 100.0 {
            let b = b_s.sqrt();
            acc -= (-0.5 * hk).exp()
                * TWO_PI.sqrt()
                * norm_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a *= 0.5;
        for &(w, x) in table {
            for sign in [-1.0, 1.0] {
                let xs = (a * (sign * x + 1.0)).powi(2);
                let asr = -0.5 * (b_s / xs + hk);
                if asr > -100.0 {
                    let rs = (1.0 - xs).sqrt();
                    acc += a
                        * w
                        * asr.exp()
                        * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        acc = -acc / TWO_PI;
        if r > 0.0 {
            acc + norm_cdf(-h.max(k))
        } else {
            -acc + (norm_cdf(-h) - norm_cdf(-k)).max(0.0)
        }
    };
    value.clamp(0.0, 1.0)
}

/// `P(X <= a, Y <= b)` for standard normals with correlation `r`.
pub fn bvn_cdf(a: f64, b: f64, r: f64) -> f64 {
    bvn_upper(-a, -b, r)
}
