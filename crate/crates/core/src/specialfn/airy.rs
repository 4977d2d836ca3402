use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Ai(0) = 1 / (3^(2/3) Gamma(2/3))
const AI0: f64 = 0.355_028_053_887_817_24;
/// -Ai'(0) = 1 / (3^(1/3) Gamma(1/3))
const MINUS_AIP0: f64 = 0.258_819_403_792_806_8;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Maclaurin series is used on `[-SERIES_NEG, SERIES_AI_POS]` for Ai and up
/// to `ASYMPTOTIC_POS` for Bi (all Bi terms are positive there).
const SERIES_NEG: f64 = 3.0;
const SERIES_AI_POS: f64 = 1.5;
/// Asymptotic expansions beyond these magnitudes; `zeta` >= 27 and >= 21.
const ASYMPTOTIC_POS: f64 = 12.0;
const ASYMPTOTIC_NEG: f64 = 10.0;
/// Largest step of the Taylor continuation of `y'' = x y`.
const TAYLOR_STEP: f64 = 0.5;

/// Airy functions and their derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiryPair {
    pub ai: f64,
    pub ai_prime: f64,
    pub bi: f64,
    pub bi_prime: f64,
    /// When set, `ai`/`ai_prime` carry a factor `exp(zeta)` and
    /// `bi`/`bi_prime` a factor `exp(-zeta)` (only for `x > 0`).
    pub scaled: bool,
}

impl AiryPair {
    /// `ai * bi' - ai' * bi`; equals `1/pi` for unscaled and scaled values alike.
    pub fn wronskian(&self) -> f64 {
        self.ai * self.bi_prime - self.ai_prime * self.bi
    }
}

/// `zeta = (2/3) x^(3/2)` for `x > 0`, zero otherwise.
pub fn airy_zeta(x: f64) -> f64 {
    if x > 0.0 {
        2.0 / 3.0 * x * x.sqrt()
    } else {
        0.0
    }
}

/// Evaluates `Ai, Ai', Bi, Bi'` at `x`.
///
/// Unscaled evaluation fails with [`Error::Overflow`] once `Bi(x)` leaves the
/// double range (x above roughly 104).
pub fn airy(x: f64, scaled: bool) -> Result<AiryPair> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("airy: non-finite argument {x}")));
    }
    let zeta = airy_zeta(x);
    let (ai, aip, bi, bip) = if x > ASYMPTOTIC_POS {
        // already scaled
        let (ai, aip, bi, bip) = asymptotic_positive(x);
        if scaled {
            return Ok(AiryPair { ai, ai_prime: aip, bi, bi_prime: bip, scaled });
        }
        if zeta > 709.0 {
            return Err(Error::Overflow(format!("Bi({x}) exceeds the double range")));
        }
        let grow = zeta.exp();
        return Ok(AiryPair {
            ai: ai / grow,
            ai_prime: aip / grow,
            bi: bi * grow,
            bi_prime: bip * grow,
            scaled,
        });
    } else if x < -ASYMPTOTIC_NEG {
        asymptotic_negative(-x)
    } else if x < -SERIES_NEG {
        let (ai, aip) = continue_solution(0.0, AI0, -MINUS_AIP0, x);
        let (bi, bip) = continue_solution(0.0, SQRT3 * AI0, SQRT3 * MINUS_AIP0, x);
        (ai, aip, bi, bip)
    } else if x <= SERIES_AI_POS {
        maclaurin(x)
    } else {
        let (_, _, bi, bip) = maclaurin(x);
        let (ai, aip) = ai_continued(x);
        (ai, aip, bi, bip)
    };
    if scaled && zeta > 0.0 {
        let grow = zeta.exp();
        Ok(AiryPair {
            ai: ai * grow,
            ai_prime: aip * grow,
            bi: bi / grow,
            bi_prime: bip / grow,
            scaled,
        })
    } else {
        Ok(AiryPair { ai, ai_prime: aip, bi, bi_prime: bip, scaled })
    }
}

/// Unscaled `Ai, Ai'` continued backwards from the expansion at `ASYMPTOTIC_POS`;
/// Ai is the dominant solution in that direction.
fn ai_continued(x: f64) -> (f64, f64) {
    static START: OnceLock<(f64, f64)> = OnceLock::new();
    let &(ai, aip) = START.get_or_init(|| {
        let (ai_s, aip_s, _, _) = asymptotic_positive(ASYMPTOTIC_POS);
        let decay = (-airy_zeta(ASYMPTOTIC_POS)).exp();
        (ai_s * decay, aip_s * decay)
    });
    continue_solution(ASYMPTOTIC_POS, ai, aip, x)
}

/// Power series `Ai = c1 f - c2 g`, `Bi = sqrt(3) (c1 f + c2 g)`.
fn maclaurin(x: f64) -> (f64, f64, f64, f64) {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut fp, mut gp) = (0.0, 1.0);
    let (mut tf, mut tg) = (1.0, x);
    let (mut tfp, mut tgp) = (x * x / 2.0, 1.0);
    fp += tfp;
    for k in 1..200 {
        let kf = k as f64;
        tf *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        tg *= x3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        tgp *= x3 / ((3.0 * kf) * (3.0 * kf - 2.0));
        if k > 1 {
            tfp *= x3 / ((3.0 * kf - 3.0) * (3.0 * kf - 1.0));
            fp += tfp;
        }
        f += tf;
        g += tg;
        gp += tgp;
        let small = 1e-17 * (f.abs() + g.abs() + fp.abs() + gp.abs());
        if tf.abs() + tg.abs() + tfp.abs() + tgp.abs() < small {
            break;
        }
    }
    let ai = AI0 * f - MINUS_AIP0 * g;
    let aip = AI0 * fp - MINUS_AIP0 * gp;
    let bi = SQRT3 * (AI0 * f + MINUS_AIP0 * g);
    let bip = SQRT3 * (AI0 * fp + MINUS_AIP0 * gp);
    (ai, aip, bi, bip)
}

/// Coefficients `u_k` and `v_k` of the large-argument expansions.
fn asymptotic_coefficients() -> &'static ([f64; ASYMPTOTIC_TERMS], [f64; ASYMPTOTIC_TERMS]) {
    static COEFFS: OnceLock<([f64; ASYMPTOTIC_TERMS], [f64; ASYMPTOTIC_TERMS])> = OnceLock::new();
    COEFFS.get_or_init(compute_coefficients)
}

fn compute_coefficients() -> ([f64; ASYMPTOTIC_TERMS], [f64; ASYMPTOTIC_TERMS]) {
    let count = ASYMPTOTIC_TERMS;
    let mut u = [1.0; ASYMPTOTIC_TERMS];
    let mut v = [1.0; ASYMPTOTIC_TERMS];
    for k in 1..count {
        let kf = k as f64;
        u[k] = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        v[k] = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u[k];
    }
    (u, v)
}

const ASYMPTOTIC_TERMS: usize = 40;

/// Scaled `(Ai e^z, Ai' e^z, Bi e^-z, Bi' e^-z)` for large positive `x`.
fn asymptotic_positive(x: f64) -> (f64, f64, f64, f64) {
    let zeta = airy_zeta(x);
    let (u, v) = asymptotic_coefficients();
    let (mut sa, mut sap, mut sb, mut sbp) = (0.0, 0.0, 0.0, 0.0);
    let mut zpow = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..ASYMPTOTIC_TERMS {
        let tu = u[k] * zpow;
        let tv = v[k] * zpow;
        // stop at the smallest term of the divergent series
        let size = tu.abs() + tv.abs();
        if size > last {
            break;
        }
        last = size;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sa += sign * tu;
        sap += sign * tv;
        sb += tu;
        sbp += tv;
        if size < 1e-17 {
            break;
        }
        zpow /= zeta;
    }
    let q = x.powf(0.25);
    let rpi = 1.0 / PI.sqrt();
    (
        0.5 * rpi / q * sa,
        -0.5 * rpi * q * sap,
        rpi / q * sb,
        rpi * q * sbp,
    )
}

/// Oscillatory expansions for `Ai(-z), Ai'(-z), Bi(-z), Bi'(-z)`.
fn asymptotic_negative(z: f64) -> (f64, f64, f64, f64) {
    let zeta = airy_zeta(z);
    let (u, v) = asymptotic_coefficients();
    // even / odd alternating partial sums
    let (mut ue, mut uo, mut ve, mut vo) = (0.0, 0.0, 0.0, 0.0);
    let mut zpow = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..ASYMPTOTIC_TERMS {
        let tu = u[k] * zpow;
        let tv = v[k] * zpow;
        let size = tu.abs() + tv.abs();
        if size > last {
            break;
        }
        last = size;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            ue += sign * tu;
            ve += sign * tv;
        } else {
            uo += sign * tu;
            vo += sign * tv;
        }
        if size < 1e-17 {
            break;
        }
        zpow /= zeta;
    }
    let phase = zeta - PI / 4.0;
    let (s, c) = phase.sin_cos();
    let q = z.powf(0.25);
    let rpi = 1.0 / PI.sqrt();
    let ai = rpi / q * (c * ue + s * uo);
    let aip = rpi * q * (s * ve - c * vo);
    let bi = rpi / q * (-s * ue + c * uo);
    let bip = rpi * q * (c * ve + s * vo);
    (ai, aip, bi, bip)
}

/// Integrates `y'' = x y` from `x0` to `x1` with local Taylor expansions.
fn continue_solution(x0: f64, y0: f64, dy0: f64, x1: f64) -> (f64, f64) {
    let steps = ((x1 - x0).abs() / TAYLOR_STEP).ceil().max(1.0) as usize;
    let h = (x1 - x0) / steps as f64;
    let (mut y, mut dy) = (y0, dy0);
    let mut x = x0;
    for i in 0..steps {
        let (ny, ndy) = taylor_step(x, y, dy, h);
        y = ny;
        dy = ndy;
        x = x0 + (i + 1) as f64 * h;
    }
    (y, dy)
}

fn taylor_step(x0: f64, y: f64, dy: f64, h: f64) -> (f64, f64) {
    // b_n = a_n h^n with a_{n+2} = (x0 a_n + a_{n-1}) / ((n+2)(n+1))
    let h2 = h * h;
    let h3 = h2 * h;
    let mut b = [y, dy * h, 0.5 * x0 * y * h2];
    let mut value = b[0] + b[1] + b[2];
    let mut deriv = b[1] + 2.0 * b[2];
    let scale = y.abs() + (dy * h).abs();
    for n in 1..200 {
        let next = (x0 * b[1] * h2 + b[0] * h3) / (((n + 2) * (n + 1)) as f64);
        b = [b[1], b[2], next];
        value += next;
        deriv += (n + 2) as f64 * next;
        if n > 4 && b.iter().map(|t| t.abs()).sum::<f64>() < 1e-18 * scale {
            break;
        }
    }
    (value, deriv / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // reference values from 30-digit arithmetic
    const TABLE: [(f64, f64, f64, f64, f64); 10] = [
        (-10.0, 0.040_241_238_486_443_19, 0.996_265_044_132_790_1, -0.314_679_829_643_838_6, 0.119_414_113_399_909_24),
        (-7.3, 0.335_770_370_515_147_3, -0.180_095_804_483_293_66, 0.070_874_113_769_896_47, 0.909_984_270_436_323_7),
        (-4.5, 0.292_152_781_055_959_47, -0.523_362_532_315_747_7, 0.253_872_657_696_932_64, 0.634_744_767_773_663_7),
        (-1.0, 0.535_560_883_292_352_1, -0.010_160_567_116_645_21, 0.103_997_389_496_944_6, 0.592_375_626_422_792_4),
        (1.0, 0.135_292_416_312_881_4, -0.159_147_441_296_793_2, 1.207_423_594_952_871_3, 0.932_435_933_392_775_6),
        (2.5, 0.015_725_923_380_470_49, -0.026_250_881_035_903_23, 6.481_660_738_460_578_6, 9.421_423_317_334_302),
        (4.5, 3.302_503_235_143_09e-4, -7.178_665_675_575_089e-4, 227.588_081_835_599_7, 469.135_077_327_966_4),
        (6.0, 9.947_694_360_252_89e-6, -2.476_520_039_703_495_5e-5, 6536.446_104_809_863, 15725.602_621_930_477),
        (9.0, 2.471_168_430_872_49e-9, -7.480_641_389_658_946e-9, 21_472_868.891_435_35, 63_807_489.780_908_21),
        (20.0, 1.691_672_868_670_540_3e-27, -7.586_391_625_748_355e-27, 2.103_765_049_651_103_8e25, 9.381_839_336_133_964e25),
    ];

    #[test]
    fn matches_reference_table() {
        for &(x, ai, aip, bi, bip) in TABLE.iter() {
            let p = airy(x, false).unwrap();
            assert!(rel(p.ai, ai) < 1e-12, "Ai({x}) = {} vs {ai}", p.ai);
            assert!(rel(p.ai_prime, aip) < 1e-12, "Ai'({x}) = {} vs {aip}", p.ai_prime);
            assert!(rel(p.bi, bi) < 1e-12, "Bi({x}) = {} vs {bi}", p.bi);
            assert!(rel(p.bi_prime, bip) < 1e-12, "Bi'({x}) = {} vs {bip}", p.bi_prime);
        }
    }

    #[test]
    fn values_at_origin() {
        let p = airy(0.0, false).unwrap();
        assert!(rel(p.ai, 0.355_028_053_887_817) < 1e-14);
        assert!(rel(p.bi, 0.614_926_627_446_001) < 1e-14);
    }

    #[test]
    fn ai_at_ten() {
        let p = airy(10.0, false).unwrap();
        assert!(rel(p.ai, 1.104_753_255_3e-10) < 1e-10);
    }

    #[test]
    fn wronskian_at_one() {
        let p = airy(1.0, false).unwrap();
        assert!((p.wronskian() - FRAC_1_PI).abs() < 1e-14);
    }

    #[test]
    fn branches_agree_at_crossovers() {
        // Ai: series vs backward continuation
        let (s_ai, s_aip, _, _) = maclaurin(SERIES_AI_POS);
        let (c_ai, c_aip) = ai_continued(SERIES_AI_POS);
        assert!(rel(s_ai, c_ai) < 1e-12 && rel(s_aip, c_aip) < 1e-12);
        // Ai: backward continuation from a farther expansion point
        let far = ASYMPTOTIC_POS + 2.0;
        let (f_ai, f_aip, _, _) = asymptotic_positive(far);
        let d = (-airy_zeta(far)).exp();
        let (c_ai, c_aip) = continue_solution(far, f_ai * d, f_aip * d, ASYMPTOTIC_POS);
        let (a_ai, a_aip, a_bi, a_bip) = asymptotic_positive(ASYMPTOTIC_POS);
        let g = airy_zeta(ASYMPTOTIC_POS).exp();
        assert!(rel(c_ai * g, a_ai) < 1e-12 && rel(c_aip * g, a_aip) < 1e-12);
        // Bi: series vs expansion
        for &x in &[ASYMPTOTIC_POS, ASYMPTOTIC_POS + 0.75] {
            let (_, _, s_bi, s_bip) = maclaurin(x);
            let (_, _, a_bi2, a_bip2) = asymptotic_positive(x);
            let g = airy_zeta(x).exp();
            assert!(rel(s_bi / g, a_bi2) < 1e-12 && rel(s_bip / g, a_bip2) < 1e-12);
        }
        let _ = (a_bi, a_bip);
        // negative side: series vs continuation, continuation vs expansion
        let (s_ai, s_aip, s_bi, s_bip) = maclaurin(-SERIES_NEG);
        let (c_ai, c_aip) = continue_solution(0.0, AI0, -MINUS_AIP0, -SERIES_NEG);
        let (c_bi, c_bip) = continue_solution(0.0, SQRT3 * AI0, SQRT3 * MINUS_AIP0, -SERIES_NEG);
        for (a, b) in [(s_ai, c_ai), (s_aip, c_aip), (s_bi, c_bi), (s_bip, c_bip)] {
            assert!((a - b).abs() < 1e-12);
        }
        let (a_ai, a_aip, a_bi, a_bip) = asymptotic_negative(ASYMPTOTIC_NEG);
        let (c_ai, c_aip) = continue_solution(0.0, AI0, -MINUS_AIP0, -ASYMPTOTIC_NEG);
        let (c_bi, c_bip) = continue_solution(0.0, SQRT3 * AI0, SQRT3 * MINUS_AIP0, -ASYMPTOTIC_NEG);
        for (a, b) in [(a_ai, c_ai), (a_aip, c_aip), (a_bi, c_bi), (a_bip, c_bip)] {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn overflow_and_domain_errors() {
        assert!(matches!(airy(110.0, false), Err(Error::Overflow(_))));
        assert!(airy(110.0, true).unwrap().bi.is_finite());
        assert!(matches!(airy(f64::NAN, true), Err(Error::Domain(_))));
        assert!(matches!(airy(f64::INFINITY, false), Err(Error::Domain(_))));
    }

    #[test]
    fn large_negative_argument() {
        // 30-digit reference at x = -50
        let p = airy(-50.0, false).unwrap();
        assert!((p.ai + 0.161_881_423_612_320_92).abs() < 1e-13);
        assert!((p.bi + 0.137_150_152_128_820_07).abs() < 1e-13);
        assert!((p.ai_prime - 0.968_989_837_276_749_1).abs() < 1e-12);
        assert!((p.wronskian() - FRAC_1_PI).abs() < 1e-12);
    }
}
