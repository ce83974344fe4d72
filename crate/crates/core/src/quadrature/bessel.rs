//! Exponentially scaled modified Bessel function `I_0` and the lattice Green
//! function moments `∫ ε(k)^{-s} d^dk/(2π)^d` built from it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

// Cephes Chebyshev expansions of exp(-x) I_0(x) on [0, 8] and of
// exp(-x) sqrt(x) I_0(x) on (8, ∞).
const BESSI0_COEFFS_A: [f64; 30] = [
    -4.415_341_646_479_339_5E-18,
    3.330_794_518_822_238_4E-17,
    -2.431_279_846_547_955E-16,
    1.715_391_285_555_133E-15,
    -1.168_533_287_799_345_1E-14,
    7.676_185_498_604_936E-14,
    -4.856_446_783_111_929E-13,
    2.955_052_663_129_64E-12,
    -1.726_826_291_441_556E-11,
    9.675_809_035_373_237E-11,
    -5.189_795_601_635_263E-10,
    2.659_823_724_682_386_6E-9,
    -1.300_025_009_986_248E-8,
    6.046_995_022_541_919E-8,
    -2.670_793_853_940_612E-7,
    1.117_387_539_120_103_7E-6,
    -4.416_738_358_458_750_5E-6,
    1.644_844_807_072_889_6E-5,
    -5.754_195_010_082_104E-5,
    1.885_028_850_958_416_5E-4,
    -5.763_755_745_385_824E-4,
    1.639_475_616_941_335_7E-3,
    -4.324_309_995_050_576E-3,
    1.054_646_039_459_499_8E-2,
    -2.373_741_480_589_947E-2,
    4.930_528_423_967_071E-2,
    -9.490_109_704_804_764E-2,
    1.716_209_015_222_087_7E-1,
    -3.046_826_723_431_984E-1,
    6.767_952_744_094_761E-1,
];

const BESSI0_COEFFS_B: [f64; 25] = [
    -7.233_180_487_874_754E-18,
    -4.830_504_485_944_182E-18,
    4.465_621_420_296_76E-17,
    3.461_222_867_697_461E-17,
    -2.827_623_980_516_583_6E-16,
    -3.425_485_619_677_219E-16,
    1.772_560_133_056_526_3E-15,
    3.811_680_669_352_622_4E-15,
    -9.554_846_698_828_307E-15,
    -4.150_569_347_287_222E-14,
    1.540_086_217_521_41E-14,
    3.852_778_382_742_142_6E-13,
    7.180_124_451_383_666E-13,
    -1.794_178_531_506_806_2E-12,
    -1.321_581_184_044_771_3E-11,
    -3.149_916_527_963_241_6E-11,
    1.188_914_710_784_643_9E-11,
    4.940_602_388_224_97E-10,
    3.396_232_025_708_386_5E-9,
    2.266_668_990_498_178E-8,
    2.048_918_589_469_063_8E-7,
    2.891_370_520_834_756_7E-6,
    6.889_758_346_916_825E-5,
    3.369_116_478_255_694_3E-3,
    8.044_904_110_141_088E-1,
];

fn chbevl(x: f64, coeffs: &[f64]) -> f64 {
    let mut b0 = coeffs[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for c in &coeffs[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x.mul_add(b1, *c) - b2;
    }
    0.5 * (b0 - b2)
}

/// `exp(-|x|) I_0(x)`.
pub fn i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 8.0 {
        chbevl(ax.mul_add(0.5, -2.0), &BESSI0_COEFFS_A)
    } else {
        chbevl(32.0_f64.mul_add(ax.recip(), -2.0), &BESSI0_COEFFS_B) / ax.sqrt()
    }
}

/// Exponent `s` of a singular weight `ε(k)^{-s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SingularPower {
    /// `ε^{-1/2}`, integrable for `d ≥ 2`.
    Half,
    /// `ε^{-1}`, integrable for `d ≥ 3`.
    One,
}

impl SingularPower {
    pub fn exponent(self) -> f64 {
        match self {
            SingularPower::Half => 0.5,
            SingularPower::One => 1.0,
        }
    }

    pub fn is_integrable(self, d: usize) -> bool {
        (d as f64) > 2.0 * self.exponent()
    }
}

/// `M_s(d) = ∫ ε(k)^{-s} d^dk/(2π)^d`, or `None` when the integral diverges.
///
/// Uses `ε^{-s} = Γ(s)^{-1} ∫_0^∞ t^{s-1} e^{-tε} dt` and factorises the
/// momentum integral into `(e^{-2t} I_0(2t))^d`. The remaining integral is
/// taken on `t = e^x` by the trapezoid rule, which converges geometrically for
/// this analytic, doubly exponentially decaying integrand.
pub fn green_moment(power: SingularPower, d: usize) -> Option<f64> {
    if !power.is_integrable(d) {
        return None;
    }
    static MEMO: OnceLock<Mutex<HashMap<(SingularPower, usize), f64>>> = OnceLock::new();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = memo.lock().expect("moment memo poisoned").get(&(power, d)) {
        return Some(*v);
    }
    let v = green_moment_uncached(power, d);
    memo.lock().expect("moment memo poisoned").insert((power, d), v);
    Some(v)
}

fn green_moment_uncached(power: SingularPower, d: usize) -> f64 {
    let s = power.exponent();
    let gamma_s = match power {
        SingularPower::Half => PI.sqrt(),
        SingularPower::One => 1.0,
    };
    let decay = d as f64 / 2.0 - s;
    let lo = -40.0 / s;
    let hi = 45.0 / decay;
    let h = 1.0 / 32.0;
    let steps = ((hi - lo) / h).ceil() as usize;
    let mut sum = 0.0;
    for i in 0..=steps {
        let x = lo + i as f64 * h;
        let t = x.exp();
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        sum += w * (s * x).exp() * i0e(2.0 * t).powi(d as i32);
    }
    sum * h / gamma_s
}

/// Watson-type integral `W_d = ∫ d^dk/(2π)^d / ε(k)`; `None` for `d ≤ 2`.
pub fn watson(d: usize) -> Option<f64> {
    green_moment(SingularPower::One, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0e_reference_values() {
        // exp(-x) I_0(x) from tabulated I_0.
        let cases = [
            (0.0, 1.0),
            (1.0, 1.266_065_877_752_008_4 * (-1.0f64).exp()),
            (3.74, 9.041_496_849_012_773 * (-3.74f64).exp()),
            (10.0, 2_815.716_628_466_254 * (-10.0f64).exp()),
        ];
        for (x, want) in cases {
            assert!((i0e(x) - want).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn i0e_matches_power_series() {
        for &x in &[0.3, 2.0, 7.5, 12.0] {
            let mut term = 1.0f64;
            let mut sum = 1.0f64;
            for k in 1..200 {
                term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
                sum += term;
            }
            let want = sum * (-x).exp();
            assert!((i0e(x) - want).abs() < 1e-13 * want.max(1.0), "x={x}");
        }
    }

    #[test]
    fn divergent_moments() {
        assert!(watson(1).is_none());
        assert!(watson(2).is_none());
        assert!(green_moment(SingularPower::Half, 1).is_none());
        assert!(green_moment(SingularPower::Half, 2).is_some());
    }

    #[test]
    fn large_dimension_moment_approaches_inverse_mean() {
        // E[1/ε] = (2d)^{-1} (1 + O(1/d)).
        let m = green_moment(SingularPower::One, 200).unwrap();
        assert!((m * 400.0 - 1.0).abs() < 1e-2);
    }
}
