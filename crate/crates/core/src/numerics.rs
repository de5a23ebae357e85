//! Complex-valued quadrature and ODE kernels.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// 7/15 Gauss-Kronrod on the straight segment a -> b. Returns (kronrod, |kronrod - gauss|).
pub fn gk15(f: &impl Fn(C64) -> C64, a: C64, b: C64) -> (C64, f64) {
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let fc = f(mid);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = half * XGK[j];
        let s = f(mid - x) + f(mid + x);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * half, ((k - g) * half).norm())
}

/// Adaptive bisection of gk15 on one segment to absolute tolerance `tol`.
pub fn integrate_segment(f: &impl Fn(C64) -> C64, a: C64, b: C64, tol: f64) -> Result<C64> {
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = C64::new(0.0, 0.0);
    let mut budget = 20_000;
    while let Some((a, b, t, depth)) = stack.pop() {
        budget -= 1;
        if budget == 0 {
            return Err(Error::NotConverged(format!("quadrature subdivision budget exhausted near {a}")));
        }
        let (v, err) = gk15(f, a, b);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NotConverged("non-finite integrand on segment".into()));
        }
        if err <= t || err <= 64.0 * f64::EPSILON * v.norm() || depth >= 40 {
            if err > t && err > 1e3 * t {
                return Err(Error::NotConverged(format!("quadrature error {err:e} above target {t:e}")));
            }
            total += v;
        } else {
            let m = (a + b) * 0.5;
            stack.push((a, m, t * 0.5, depth + 1));
            stack.push((m, b, t * 0.5, depth + 1));
        }
    }
    Ok(total)
}

// DOP853 tableau (Hairer, Norsett, Wanner).
const C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [5.260_015_195_876_773E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.972_505_698_453_79E-2, 5.917_517_095_361_37E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.958_758_547_680_685E-2, 0.0, 8.876_275_643_042_054E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.413_651_341_592_667E-1,
        0.0,
        -8.845_494_793_282_861E-1,
        9.248_340_032_617_92E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_5E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_6E-1,
        1.254_676_875_668_224_2E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.710_937_5E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_5E-1,
        6.021_653_898_045_596E-2,
        -1.757_812_5E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_8E-1,
        1.072_620_304_463_732_8E-1,
        -1.531_943_774_862_440_2E-2,
        8.273_789_163_814_023E-3,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -8.682_193_468_417_26E-1,
        2.759_209_969_944_671E1,
        2.015_406_755_047_789_4E1,
        -4.348_988_418_106_996E1,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_4E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -5.902_908_268_368_43E-1,
        2.123_005_144_818_119_3E1,
        1.527_923_363_288_242_3E1,
        -3.328_821_096_898_486E1,
        -2.033_120_170_850_862_7E-2,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873E-1,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -1.852_006_565_999_696E1,
        2.273_948_709_935_050_5E1,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
        0.0,
    ],
    [
        2.273_310_147_516_538,
        0.0,
        0.0,
        -1.053_449_546_673_725E1,
        -2.000_872_058_224_862_5,
        -1.795_893_186_311_88E1,
        2.794_888_452_941_996E1,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        1.236_056_717_579_430_3E1,
        6.433_927_460_157_636E-1,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];

const ER: [f64; 12] = [
    1.312_004_499_419_488E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -4.957_589_496_572_502E-1,
    1.664_377_182_454_986_4,
    -3.503_288_487_499_736_6E-1,
    3.341_791_187_130_175E-1,
    8.192_320_648_511_571E-2,
    -2.235_530_786_388_629_4E-2,
];

const BHH: [f64; 3] = [2.440_944_881_889_764E-1, 7.338_466_882_816_118E-1, 2.205_882_352_941_176_6E-2];

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-12, atol: 1e-12, max_steps: 100_000 }
    }
}

/// Outcome of an integration that may stop early.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeEnd {
    pub s: f64,
    pub z: C64,
    pub steps: usize,
}

/// DOP853 for dz/ds = f(s, z) on [0, s_end] with z complex. `f` may fail (leaving the domain);
/// `stop` is checked after every accepted step and ends the run early when it returns true.
pub fn dop853(
    f: &impl Fn(f64, C64) -> Result<C64>,
    z0: C64,
    s_end: f64,
    opts: OdeOptions,
    stop: &mut impl FnMut(f64, C64) -> bool,
) -> Result<OdeEnd> {
    let mut s = 0.0;
    let mut z = z0;
    if s_end == 0.0 {
        return Ok(OdeEnd { s, z, steps: 0 });
    }
    let mut h = (s_end * 1e-2).min(s_end);
    let mut k = [C64::new(0.0, 0.0); 12];
    let mut steps = 0;
    while s < s_end {
        if steps >= opts.max_steps {
            return Err(Error::NotConverged(format!("step budget exhausted at s = {s}")));
        }
        steps += 1;
        if s + h > s_end {
            h = s_end - s;
        }
        let mut stage_ok = true;
        for i in 0..12 {
            let mut zi = z;
            for j in 0..i {
                zi += k[j] * (h * A[i][j]);
            }
            match f(s + C[i] * h, zi) {
                Ok(v) => k[i] = v,
                Err(_) => {
                    stage_ok = false;
                    break;
                }
            }
        }
        if !stage_ok {
            h *= 0.25;
            if h < 1e-14 * s_end {
                // genuine exit from the domain: report from the last good state
                f(s, z)?;
                return Err(Error::NotConverged(format!("trajectory left the domain at s = {s}")));
            }
            continue;
        }
        let mut inc = C64::new(0.0, 0.0);
        let mut e5 = C64::new(0.0, 0.0);
        for i in 0..12 {
            inc += k[i] * B[i];
            e5 += k[i] * ER[i];
        }
        let e3 = inc - k[0] * BHH[0] - k[8] * BHH[1] - k[11] * BHH[2];
        let znew = z + inc * h;
        let sk = opts.atol + opts.rtol * z.norm().max(znew.norm());
        let err5 = (e5.norm() / sk).powi(2);
        let err3 = (e3.norm() / sk).powi(2);
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err5 / deno.sqrt();
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        let fac = (err.powf(0.125) / 0.9).clamp(1.0 / 6.0, 3.0);
        let hnew = h / fac;
        if err <= 1.0 {
            s += h;
            z = znew;
            if stop(s, z) {
                return Ok(OdeEnd { s, z, steps });
            }
            h = hnew.min(s_end);
        } else {
            h = hnew;
        }
    }
    Ok(OdeEnd { s, z, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let f = |z: C64| z * z * z;
        let (v, _) = gk15(&f, C64::new(0.0, 0.0), C64::new(1.0, 1.0));
        let exact = C64::new(1.0, 1.0).powu(4) / 4.0;
        assert!((v - exact).norm() < 1e-15);
    }

    #[test]
    fn dop853_exponential() {
        let f = |_s: f64, z: C64| Ok(z * C64::new(0.0, 1.0));
        let end = dop853(&f, C64::new(1.0, 0.0), 10.0, OdeOptions::default(), &mut |_, _| false).unwrap();
        let exact = C64::new(0.0, 10.0).exp();
        assert!((end.z - exact).norm() < 1e-10, "{}", (end.z - exact).norm());
    }
}
