//! The regression corpus: named densities used by the test and acceptance
//! suites and mirrored by the shipped example configurations.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::cnum::{c, cr};
use crate::density::{Density, Mode, PolyFactor, PrincipalPart};

fn build(
    mode: Mode,
    gamma: i32,
    factors: Vec<(Complex64, i32)>,
    exp_poly: Vec<(i32, Complex64)>,
    principal: Vec<(Complex64, Vec<Complex64>)>,
) -> Density {
    Density::new(
        mode,
        gamma,
        factors.into_iter().map(|(a, alpha)| PolyFactor { a, alpha }).collect(),
        exp_poly.into_iter().collect::<BTreeMap<_, _>>(),
        principal.into_iter().map(|(b, d)| PrincipalPart { b, d }).collect(),
    )
    .expect("corpus density is valid")
}

/// `(z - i)^2 e^{-1.6 z^2}`: the two-path benchmark density.
pub fn ex1() -> Density {
    build(Mode::Line, 0, vec![(c(0.0, 1.0), 2)], vec![(2, cr(-1.6))], vec![])
}

/// `e^{-beta z^2}`.
pub fn gaussian(beta: f64) -> Density {
    build(Mode::Line, 0, vec![], vec![(2, cr(-beta))], vec![])
}

/// `(z - a) e^{-z^2/2}`: the segregation density (real or off-axis `a`).
pub fn linear_zero_gaussian(a: Complex64) -> Density {
    build(Mode::Line, 0, vec![(a, 1)], vec![(2, cr(-0.5))], vec![])
}

/// `(z - z1)(z - z2) e^{-beta z^2}`.
pub fn two_zero_gaussian(z1: Complex64, z2: Complex64, beta: f64) -> Density {
    build(Mode::Line, 0, vec![(z1, 1), (z2, 1)], vec![(2, cr(-beta))], vec![])
}

/// `exp(-z^2/2 - n/(z - zs))`: a zero sitting on an essential singularity.
pub fn essential_gaussian(n: f64, zs: Complex64) -> Density {
    build(Mode::Line, 0, vec![], vec![(2, cr(-0.5))], vec![(zs, vec![cr(-n)])])
}

/// `(z-a)^3 (z-b)^{-2} e^{-z^4 - 1/z^2}` with `a, b, 0` distinct.
pub fn example2(a: Complex64, b: Complex64) -> Density {
    build(
        Mode::Line,
        0,
        vec![(a, 3), (b, -2)],
        vec![(4, cr(-1.0))],
        vec![(Complex64::ZERO, vec![cr(0.0), cr(-1.0)])],
    )
}

/// Rational density with the given pole locations and exponents.
pub fn rational(factors: &[(Complex64, i32)]) -> Density {
    build(Mode::Line, 0, factors.to_vec(), vec![], vec![])
}

/// `e^{-iz}` on the cylinder (single winding functional).
pub fn example1_periodic() -> Density {
    build(Mode::Cylinder, -1, vec![], vec![], vec![])
}

/// `e^{sigma i z} exp(e^{2iz})` on the cylinder.
pub fn example3_periodic(sigma: i32) -> Density {
    build(Mode::Cylinder, sigma, vec![], vec![(2, cr(1.0))], vec![])
}

/// `(1 + 2 cos(z - i))^2 e^{0.3 cos z}`, the two-ergodic-component density,
/// in factored cylinder form (an overall constant is dropped).
pub fn periodic_two_component() -> Density {
    let r = (-1.0f64).exp();
    let (s, co) = (2.0 * std::f64::consts::FRAC_PI_3).sin_cos();
    let w1 = c(r * co, r * s);
    let w2 = c(r * co, -r * s);
    build(Mode::Cylinder, -2, vec![(w1, 2), (w2, 2)], vec![(1, cr(0.15)), (-1, cr(0.15))], vec![])
}

/// `exp(i m z + beta cos z)` on the cylinder.
pub fn exp_cos(m: i32, beta: Complex64) -> Density {
    build(Mode::Cylinder, m, vec![], vec![(1, 0.5 * beta), (-1, 0.5 * beta)], vec![])
}

/// Zeroes of `periodic_two_component` on the cylinder: `±2π/3 + i`.
pub fn periodic_two_component_zeroes() -> (Complex64, Complex64) {
    (
        c(2.0 * std::f64::consts::FRAC_PI_3, 1.0),
        c(2.0 * std::f64::consts::TAU / 3.0, 1.0),
    )
}
