//! Small complex-number helpers shared across modules.
//!
//! JSON interchange always writes a complex number as a two-element array
//! `[re, im]`; the serde adapters here implement that convention.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta % two_pi;
    if t < 0.0 {
        t += two_pi;
    }
    // rem_euclid of values like -1e-18 can land exactly on 2π.
    if t >= two_pi {
        t -= two_pi;
    }
    t
}

pub fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Distance from point `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    // projection parameter of p onto the segment, clamped
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Format `a + bi` compactly for labels and reports.
pub fn fmt_complex(z: Complex64, digits: usize) -> String {
    if z.im == 0.0 {
        format!("{:.*}", digits, z.re)
    } else if z.re == 0.0 {
        format!("{:.*}i", digits, z.im)
    } else if z.im < 0.0 {
        format!("{:.*}{:.*}i", digits, z.re, digits, z.im)
    } else {
        format!("{:.*}+{:.*}i", digits, z.re, digits, z.im)
    }
}

/// Serde adapter: one complex number as `[re, im]`.
pub mod complex_pair {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let v = <[f64; 2]>::deserialize(d)?;
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(D::Error::custom("complex components must be finite"));
        }
        Ok(Complex64::new(v[0], v[1]))
    }
}

/// Serde adapter: a list of complex numbers as `[[re, im], ...]`.
pub mod complex_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|p| Complex64::new(p[0], p[1])).collect())
    }
}
