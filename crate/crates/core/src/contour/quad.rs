//! Adaptive Gauss-Kronrod quadrature for complex-valued integrands.
//!
//! 15-point Kronrod rule with the embedded 7-point Gauss rule, refined by
//! recursive bisection of the interval with the largest error estimate.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Kronrod abscissae (nonnegative half), 15-point rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_27,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the embedded 7-point rule (odd Kronrod indices).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_67,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod pass over `[a, b]` in parameter space.
///
/// Returns `(integral, error_estimate)`. The error follows the QUADPACK
/// rescaling of `|K15 - G7|` against the integrand variation.
pub fn qk15<F>(f: &F, a: f64, b: f64) -> (Complex64, f64)
where
    F: Fn(f64) -> Complex64,
{
    let (v, e, _) = qk15_l1(f, a, b);
    (v, e)
}

/// [`qk15`] also returning the integral of `|f|` (the L1 mass estimate).
pub fn qk15_l1<F>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64)
where
    F: Fn(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut res_gauss = f_center * WG[3];
    let mut res_kronrod = f_center * WGK[7];
    let mut res_abs = res_kronrod.norm();

    let mut fv1 = [Complex64::ZERO; 7];
    let mut fv2 = [Complex64::ZERO; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        let sum = f1 + f2;
        res_kronrod += sum * WGK[j];
        res_abs += WGK[j] * (f1.norm() + f2.norm());
        if j % 2 == 1 {
            res_gauss += sum * WG[j / 2];
        }
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).norm();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).norm() + (fv2[j] - mean).norm());
    }

    let result = res_kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_kronrod - res_gauss) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err, res_abs)
}

struct Interval {
    piece: usize,
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
    l1: f64,
}

/// Adaptively integrate a family of parametrized pieces to a joint absolute
/// tolerance. `eval(piece, t)` must return the full integrand including the
/// parametrization derivative.
pub fn integrate_pieces<F>(
    eval: &F,
    pieces: &[(f64, f64)],
    tol: f64,
    max_subdiv: usize,
    label: &str,
) -> Result<(Complex64, f64, f64)>
where
    F: Fn(usize, f64) -> Complex64,
{
    let mut intervals: Vec<Interval> = Vec::with_capacity(pieces.len() + max_subdiv);
    for (idx, &(a, b)) in pieces.iter().enumerate() {
        let (value, err, l1) = qk15_l1(&|t| eval(idx, t), a, b);
        intervals.push(Interval { piece: idx, a, b, value, err, l1 });
    }

    let mut splits = 0;
    loop {
        let total_err: f64 = intervals.iter().map(|i| i.err).sum();
        if total_err <= tol {
            let total: Complex64 = intervals.iter().map(|i| i.value).sum();
            let total_l1: f64 = intervals.iter().map(|i| i.l1).sum();
            return Ok((total, total_err, total_l1));
        }
        if splits >= max_subdiv {
            return Err(Error::QuadratureFail { label: label.to_string(), est_err: total_err, tol });
        }
        // bisect the worst interval
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Interval { piece, a, b, .. } = intervals[worst];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // interval is at floating-point resolution; give up on refining it
            return Err(Error::QuadratureFail {
                label: label.to_string(),
                est_err: total_err,
                tol,
            });
        }
        let (v1, e1, l1a) = qk15_l1(&|t| eval(piece, t), a, mid);
        let (v2, e2, l1b) = qk15_l1(&|t| eval(piece, t), mid, b);
        intervals[worst] = Interval { piece, a, b: mid, value: v1, err: e1, l1: l1a };
        intervals.push(Interval { piece, a: mid, b, value: v2, err: e2, l1: l1b });
        splits += 1;
    }
}
