//! Normal-distribution special functions.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-z / SQRT_2)
}

/// log Φ(z), accurate far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > -30.0 {
        return norm_cdf(z).ln();
    }
    // Mills-ratio asymptotic series.
    let x2 = z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=6 {
        term *= -((2 * k - 1) as f64) / x2;
        sum += term;
    }
    -0.5 * x2 - LN_SQRT_2PI - (-z).ln() + sum.ln()
}

/// Inverse standard normal CDF, Wichura's algorithm AS241 (PPND16),
/// about sixteen significant digits on (0, 1).
pub fn inv_norm_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = horner(
            &[
                2.509_080_928_730_122_7e3,
                3.343_057_558_358_813e4,
                6.726_577_092_700_87e4,
                4.592_195_393_154_987e4,
                1.373_169_376_550_946e4,
                1.971_590_950_306_551_3e3,
                1.331_416_678_917_843_8e2,
                3.387_132_872_796_366_5,
            ],
            r,
        );
        let den = horner(
            &[
                5.226_495_278_852_545e3,
                2.872_908_573_572_194_3e4,
                3.930_789_580_009_271e4,
                2.121_379_430_158_659_7e4,
                5.394_196_021_424_751e3,
                6.871_870_074_920_579e2,
                4.231_333_070_160_091e1,
                1.0,
            ],
            r,
        );
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = horner(
            &[
                7.745_450_142_783_414e-4,
                2.272_384_498_926_918_4e-2,
                2.417_807_251_774_506e-1,
                1.270_458_252_452_368_4,
                3.647_848_324_763_204_5,
                5.769_497_221_460_691,
                4.630_337_846_156_545,
                1.423_437_110_749_683_5,
            ],
            r,
        );
        let den = horner(
            &[
                1.050_750_071_644_416_9e-9,
                5.475_938_084_995_345e-4,
                1.519_866_656_361_645_7e-2,
                1.481_039_764_274_800_8e-1,
                6.897_673_349_851e-1,
                1.676_384_830_183_803_8,
                2.053_191_626_637_759,
                1.0,
            ],
            r,
        );
        num / den
    } else {
        r -= 5.0;
        let num = horner(
            &[
                2.010_334_399_292_288_1e-7,
                2.711_555_568_743_487_6e-5,
                1.242_660_947_388_078_4e-3,
                2.653_218_952_657_612_4e-2,
                2.965_605_718_285_048_7e-1,
                1.784_826_539_917_291_3,
                5.463_784_911_164_114,
                6.657_904_643_501_103,
            ],
            r,
        );
        let den = horner(
            &[
                2.044_263_103_389_939_7e-15,
                1.421_511_758_316_446e-7,
                1.846_318_317_510_054_8e-5,
                7.868_691_311_456_133e-4,
                1.487_536_129_085_061_5e-2,
                1.369_298_809_227_358e-1,
                5.998_322_065_558_879e-1,
                1.0,
            ],
            r,
        );
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Polynomial with coefficients from the highest degree down.
fn horner(c: &[f64], r: f64) -> f64 {
    c.iter().fold(0.0, |acc, &k| acc * r + k)
}

/// Two-sided normal-approximation p-value for a Wald statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    (2.0 * norm_cdf(-z.abs())).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trips() {
        for &p in &[1e-20, 1e-8, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.97575, 0.999, 1.0 - 1e-12] {
            let z = inv_norm_cdf(p);
            let back = norm_cdf(z);
            let rel = ((back - p) / p).abs();
            assert!(rel < 1e-9, "p = {p}: z = {z}, back = {back}");
        }
    }

    #[test]
    fn extreme_tail_quantiles() {
        // 50-digit references
        assert!((inv_norm_cdf(1e-100) + 21.273_453_560_965_324).abs() < 1e-12);
        assert!((inv_norm_cdf(1e-300) + 37.047_096_299_361_2).abs() < 1e-12);
        assert!((inv_norm_cdf(1e-20) + 9.262_340_089_798_408).abs() < 1e-13);
    }

    #[test]
    fn known_quantiles() {
        assert!((inv_norm_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert_eq!(inv_norm_cdf(0.5), 0.0);
        assert!((inv_norm_cdf(0.05) + 1.644_853_626_951_472_2).abs() < 1e-14);
    }

    #[test]
    fn log_cdf_matches_direct_and_tail_is_continuous() {
        for &z in &[-5.0, -1.0, 0.0, 2.0] {
            assert!((log_norm_cdf(z) - norm_cdf(z).ln()).abs() < 1e-12);
        }
        let below = log_norm_cdf(-30.000_001);
        let above = log_norm_cdf(-29.999_999);
        assert!((below - above).abs() < 1e-4);
        // log Φ(-40) reference value
        assert!((log_norm_cdf(-40.0) - (-804.608_442_013_754)).abs() < 1e-8);
    }

    #[test]
    fn pdf_at_zero() {
        assert!((norm_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }
}
