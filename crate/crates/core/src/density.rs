//! Factored rational-type complex densities.
//!
//! A density is stored in the factored form
//!
//! ```text
//! line:      rho(z) = prod_l (z - a_l)^{alpha_l} * exp( Q(z) + R_s(z) )
//! cylinder:  rho(z) = w^gamma * prod_l (w - a_l)^{alpha_l} * exp( Q(w) + R_s(w) ),   w = e^{iz}
//! ```
//!
//! with `Q` a (Laurent, on the cylinder) polynomial and `R_s` a sum of
//! principal parts `sum_r d_{m,r} / (. - b_m)^r`. This form is canonical: no
//! simplification across factors is attempted. An overall constant factor is
//! irrelevant for everything computed here (drift, census, normalized
//! functionals) and is fixed to one.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cnum::{c, fmt_complex, wrap_angle, I};
use crate::contour::Endpoint;
use crate::error::{Error, Result};

/// Threshold on `|Re(Q + R_s)|` beyond which evaluation switches to
/// log-magnitude/phase accumulation instead of the direct product.
const LOG_SPACE_THRESHOLD: f64 = 300.0;
/// `exp` overflows above this.
const LOG_OVERFLOW: f64 = 709.0;
/// `exp` underflows to zero below this; the density is reported as 0 there.
const LOG_UNDERFLOW: f64 = -745.0;

/// Numeric guard radius around poles and essential singularities.
pub fn eps_sing(scale: f64) -> f64 {
    1e-12 * (1.0 + scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Nonperiodic: `z` ranges over the complex plane.
    Line,
    /// Periodic: the strip `[0, 2π] × R` with `w = e^{iz}`.
    Cylinder,
}

#[derive(Debug, Clone)]
pub struct PolyFactor {
    pub a: Complex64,
    pub alpha: i32,
}

/// Principal part `sum_{r=1}^{beta} d[r-1] / (. - b)^r` in the exponent.
#[derive(Debug, Clone)]
pub struct PrincipalPart {
    pub b: Complex64,
    pub d: Vec<Complex64>,
}

impl PrincipalPart {
    pub fn beta(&self) -> u32 {
        self.d.len() as u32
    }

    /// Leading coefficient `d_{m,beta_m}`.
    pub fn lead(&self) -> Complex64 {
        *self.d.last().expect("validated nonempty")
    }
}

#[derive(Debug, Clone)]
pub struct Density {
    mode: Mode,
    gamma_power: i32,
    poly_factors: Vec<PolyFactor>,
    exp_poly: BTreeMap<i32, Complex64>,
    exp_principal: Vec<PrincipalPart>,
}

/// Census of the singularity and generalized-zero structure of a density.
///
/// Locations are in `z` coordinates (on the cylinder, `x ∈ [0, 2π)`).
#[derive(Debug, Clone)]
pub struct SingularityCensus {
    pub finite_zeroes: Vec<(Complex64, u32)>,
    pub poles: Vec<(Complex64, u32)>,
    pub essential_singularities: Vec<Complex64>,
    /// One endpoint per path-inequivalent approach to a generalized zero.
    pub generalized_zero_approaches: Vec<Endpoint>,
    /// Independent closed paths: poles + essential singularities, plus the
    /// winding path on the cylinder.
    pub n_closed: usize,
    /// `N_Γ`: dimension of the space of independent path functionals.
    pub n_gamma: usize,
}

impl Density {
    pub fn new(
        mode: Mode,
        gamma_power: i32,
        poly_factors: Vec<PolyFactor>,
        exp_poly: BTreeMap<i32, Complex64>,
        exp_principal: Vec<PrincipalPart>,
    ) -> Result<Self> {
        // Zero coefficients in Q carry no information; drop them so that the
        // leading-coefficient conventions below hold by construction.
        let exp_poly: BTreeMap<i32, Complex64> =
            exp_poly.into_iter().filter(|(_, v)| *v != Complex64::ZERO).collect();

        let d = Density { mode, gamma_power, poly_factors, exp_poly, exp_principal };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidDensity(msg));

        if self.mode == Mode::Line {
            if self.gamma_power != 0 {
                return fail("gamma prefactor is only meaningful in cylinder mode".into());
            }
            if let Some(k) = self.exp_poly.keys().find(|k| **k < 0) {
                return fail(format!("negative exponent power {k} is not allowed in line mode"));
            }
        }
        for f in &self.poly_factors {
            if f.alpha == 0 {
                return fail(format!("factor at {} has exponent 0", fmt_complex(f.a, 4)));
            }
            if self.mode == Mode::Cylinder && f.a == Complex64::ZERO {
                return fail("poly factor location 0 must be absorbed into the gamma prefactor".into());
            }
        }
        for p in &self.exp_principal {
            if p.d.is_empty() {
                return fail(format!("principal part at {} has no coefficients", fmt_complex(p.b, 4)));
            }
            if *p.d.last().unwrap() == Complex64::ZERO {
                return fail(format!(
                    "principal part at {} has zero leading coefficient",
                    fmt_complex(p.b, 4)
                ));
            }
            if self.mode == Mode::Cylinder && p.b == Complex64::ZERO {
                return fail("essential singularity at omega = 0 is the cylinder end, not a finite point".into());
            }
        }
        let near = |u: Complex64, v: Complex64| (u - v).norm() <= 1e-12 * (1.0 + u.norm());
        for (i, fi) in self.poly_factors.iter().enumerate() {
            for fj in self.poly_factors.iter().skip(i + 1) {
                if near(fi.a, fj.a) {
                    return fail(format!("repeated factor location {}", fmt_complex(fi.a, 4)));
                }
            }
        }
        for (i, pi) in self.exp_principal.iter().enumerate() {
            for pj in self.exp_principal.iter().skip(i + 1) {
                if near(pi.b, pj.b) {
                    return fail(format!("repeated singularity location {}", fmt_complex(pi.b, 4)));
                }
            }
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn gamma_power(&self) -> i32 {
        self.gamma_power
    }

    pub fn poly_factors(&self) -> &[PolyFactor] {
        &self.poly_factors
    }

    pub fn exp_poly(&self) -> &BTreeMap<i32, Complex64> {
        &self.exp_poly
    }

    pub fn exp_principal(&self) -> &[PrincipalPart] {
        &self.exp_principal
    }

    /// Degree `N_q` of `Q` in line mode (0 if `Q` is constant or absent).
    pub fn n_q(&self) -> u32 {
        self.exp_poly.keys().next_back().map_or(0, |k| (*k).max(0) as u32)
    }

    /// `N_q^+` on the cylinder: largest power in `Q` (0 if none positive).
    pub fn n_q_plus(&self) -> i32 {
        self.exp_poly.keys().next_back().copied().unwrap_or(0).max(0)
    }

    /// `N_q^-` on the cylinder: smallest power in `Q` (0 if none negative).
    pub fn n_q_minus(&self) -> i32 {
        self.exp_poly.keys().next().copied().unwrap_or(0).min(0)
    }

    /// Map `z` to the coordinate the factored form lives in.
    pub fn w_of_z(&self, z: Complex64) -> Complex64 {
        match self.mode {
            Mode::Line => z,
            Mode::Cylinder => (I * z).exp(),
        }
    }

    /// Map an `omega` location back to a cylinder point with `x ∈ [0, 2π)`.
    pub fn z_of_w(&self, w: Complex64) -> Complex64 {
        match self.mode {
            Mode::Line => w,
            Mode::Cylinder => c(wrap_angle(w.arg()), -w.norm().ln()),
        }
    }

    /// Singular points (poles and essential singularities) in `z` coordinates.
    pub fn singular_points(&self) -> Vec<Complex64> {
        let mut acc = Vec::new();
        let primed = self.primed_mask();
        for (l, f) in self.poly_factors.iter().enumerate() {
            if f.alpha < 0 && primed[l] {
                acc.push(self.z_of_w(f.a));
            }
        }
        for p in &self.exp_principal {
            acc.push(self.z_of_w(p.b));
        }
        acc
    }

    fn check_guard(&self, z: Complex64, w: Complex64, include_zero_factors: bool) -> Result<()> {
        let guard = eps_sing(w.norm());
        for f in &self.poly_factors {
            let singular = f.alpha < 0 || include_zero_factors;
            if singular && (w - f.a).norm() <= guard {
                return Err(Error::SingularityTooClose { z, singularity: self.z_of_w(f.a) });
            }
        }
        for p in &self.exp_principal {
            if (w - p.b).norm() <= guard {
                return Err(Error::SingularityTooClose { z, singularity: self.z_of_w(p.b) });
            }
        }
        Ok(())
    }

    /// Exponent `Q(w) + R_s(w)`.
    fn exponent_at(&self, w: Complex64) -> Complex64 {
        let mut s = Complex64::ZERO;
        for (&k, &ck) in &self.exp_poly {
            s += ck * w.powi(k);
        }
        for p in &self.exp_principal {
            let inv = (w - p.b).inv();
            let mut pw = inv;
            for &dr in &p.d {
                s += dr * pw;
                pw *= inv;
            }
        }
        s
    }

    /// Evaluate `rho(z)`.
    ///
    /// Magnitudes are tracked in log space; if `log|rho|` exceeds the
    /// representable range the call fails with [`Error::Overflow`] carrying
    /// `log|rho|`. Underflow returns 0.
    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        let w = self.w_of_z(z);
        self.check_guard(z, w, false)?;

        let s = self.exponent_at(w);
        let mut log_mag = s.re;
        let mut phase = s.im;
        for f in &self.poly_factors {
            let r = w - f.a;
            if r == Complex64::ZERO {
                return Ok(Complex64::ZERO); // exact zero (alpha > 0 guaranteed by the guard)
            }
            log_mag += f64::from(f.alpha) * r.norm().ln();
            phase += f64::from(f.alpha) * r.arg();
        }
        if self.mode == Mode::Cylinder && self.gamma_power != 0 {
            log_mag += f64::from(self.gamma_power) * w.norm().ln();
            phase += f64::from(self.gamma_power) * w.arg();
        }

        if log_mag > LOG_OVERFLOW {
            return Err(Error::Overflow { log_abs: log_mag });
        }
        if log_mag < LOG_UNDERFLOW {
            return Ok(Complex64::ZERO);
        }
        if s.re.abs() <= LOG_SPACE_THRESHOLD && log_mag.abs() <= LOG_SPACE_THRESHOLD {
            // Direct product, slightly more accurate in phase.
            let mut out = s.exp();
            for f in &self.poly_factors {
                out *= (w - f.a).powi(f.alpha);
            }
            if self.mode == Mode::Cylinder && self.gamma_power != 0 {
                out *= w.powi(self.gamma_power);
            }
            // a compensated product can still overflow an intermediate factor
            if out.re.is_finite() && out.im.is_finite() {
                return Ok(out);
            }
        }
        Ok(Complex64::from_polar(log_mag.exp(), phase))
    }

    /// Drift `v(z) = rho'(z)/rho(z)`.
    pub fn drift(&self, z: Complex64) -> Result<Complex64> {
        let w = self.w_of_z(z);
        self.check_guard(z, w, true)?;
        Ok(self.drift_eval().eval_w(w))
    }

    /// Precompiled drift evaluator for hot loops.
    pub fn drift_eval(&self) -> DriftEval {
        DriftEval::new(self)
    }

    /// Indices of factors whose location coincides with no `b_m` (the primed
    /// sums of the counting formulas).
    fn primed_mask(&self) -> Vec<bool> {
        self.poly_factors
            .iter()
            .map(|f| {
                !self
                    .exp_principal
                    .iter()
                    .any(|p| (f.a - p.b).norm() <= 1e-12 * (1.0 + p.b.norm()))
            })
            .collect()
    }

    /// Enumerate zeroes, poles, essential singularities and the
    /// path-inequivalent approaches to generalized zeroes; count `N_Γ`.
    pub fn census(&self) -> Result<SingularityCensus> {
        self.validate()?;
        match self.mode {
            Mode::Line => Ok(self.census_line()),
            Mode::Cylinder => Ok(self.census_cylinder()),
        }
    }

    fn census_line(&self) -> SingularityCensus {
        let primed = self.primed_mask();
        let mut finite_zeroes: Vec<(Complex64, u32)> = Vec::new();
        let mut poles: Vec<(Complex64, u32)> = Vec::new();
        for (l, f) in self.poly_factors.iter().enumerate() {
            if !primed[l] {
                continue;
            }
            if f.alpha > 0 {
                finite_zeroes.push((f.a, f.alpha as u32));
            } else {
                poles.push((f.a, (-f.alpha) as u32));
            }
        }
        sort_points(&mut finite_zeroes);
        sort_points(&mut poles);
        let essential_singularities: Vec<Complex64> =
            self.exp_principal.iter().map(|p| p.b).collect();

        let mut approaches: Vec<Endpoint> = Vec::new();
        for (zl, _) in &finite_zeroes {
            approaches.push(Endpoint::FiniteZero { z: *zl });
        }
        for p in &self.exp_principal {
            for sector in 0..p.beta() {
                approaches.push(Endpoint::EssentialApproach {
                    b: p.b,
                    sector,
                    angle: essential_approach_angle(p, sector),
                });
            }
        }
        let n_q = self.n_q();
        if n_q >= 1 {
            let lead = self.exp_poly[&(n_q as i32)];
            let mut angles: Vec<f64> = (0..n_q)
                .map(|j| {
                    wrap_angle(
                        (std::f64::consts::PI * (2.0 * f64::from(j) + 1.0) - lead.arg())
                            / f64::from(n_q),
                    )
                })
                .collect();
            // descending, so that for a Gaussian the connecting path runs from
            // the ray at pi to the ray at 0 (standard real-line orientation)
            angles.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for angle in angles {
                approaches.push(Endpoint::InfinityRay { angle });
            }
        }

        let n_p_primed = primed.iter().filter(|p| **p).count();
        let sum_beta_plus_1: usize =
            self.exp_principal.iter().map(|p| p.beta() as usize + 1).sum();
        let n_g = n_p_primed + n_q as usize + sum_beta_plus_1;
        let has_zeroes = !approaches.is_empty();
        let n_gamma = if has_zeroes { n_g - 1 } else { n_g };
        let n_closed = poles.len() + essential_singularities.len();

        SingularityCensus {
            finite_zeroes,
            poles,
            essential_singularities,
            generalized_zero_approaches: approaches,
            n_closed,
            n_gamma,
        }
    }

    fn census_cylinder(&self) -> SingularityCensus {
        let primed = self.primed_mask();
        let mut finite_zeroes: Vec<(Complex64, u32)> = Vec::new();
        let mut poles: Vec<(Complex64, u32)> = Vec::new();
        for (l, f) in self.poly_factors.iter().enumerate() {
            if !primed[l] {
                continue;
            }
            if f.alpha > 0 {
                finite_zeroes.push((self.z_of_w(f.a), f.alpha as u32));
            } else {
                poles.push((self.z_of_w(f.a), (-f.alpha) as u32));
            }
        }
        sort_points(&mut finite_zeroes);
        sort_points(&mut poles);
        let essential_singularities: Vec<Complex64> =
            self.exp_principal.iter().map(|p| self.z_of_w(p.b)).collect();

        let mut approaches: Vec<Endpoint> = Vec::new();
        for (zl, _) in &finite_zeroes {
            approaches.push(Endpoint::FiniteZero { z: *zl });
        }
        for p in &self.exp_principal {
            for sector in 0..p.beta() {
                // steepest-descent direction in the omega plane, transported
                // to z by dz = dw/(i w)
                let omega_angle = essential_approach_angle(p, sector);
                let angle = wrap_angle(omega_angle - p.b.arg() - std::f64::consts::FRAC_PI_2);
                approaches.push(Endpoint::EssentialApproach { b: self.z_of_w(p.b), sector, angle });
            }
        }
        // zeroes at z = -i*inf (omega -> inf) from the top power of Q
        let n_plus = self.n_q_plus();
        if n_plus > 0 {
            let lead = self.exp_poly[&n_plus];
            let mut lanes: Vec<f64> = (0..n_plus)
                .map(|j| {
                    wrap_angle(
                        (std::f64::consts::PI * (2.0 * f64::from(j) + 1.0) - lead.arg())
                            / f64::from(n_plus),
                    )
                })
                .collect();
            lanes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (sector, x_lane) in lanes.into_iter().enumerate() {
                approaches.push(Endpoint::ImaginaryInfinity {
                    sign: -1,
                    sector: sector as u32,
                    x_lane,
                });
            }
        }
        // zeroes at z = +i*inf (omega -> 0) from the bottom power of Q
        let n_minus = self.n_q_minus();
        if n_minus < 0 {
            let lead = self.exp_poly[&n_minus];
            let count = (-n_minus) as u32;
            let mut lanes: Vec<f64> = (0..count)
                .map(|j| {
                    wrap_angle(
                        (std::f64::consts::PI * (2.0 * f64::from(j) + 1.0) - lead.arg())
                            / f64::from(n_minus),
                    )
                })
                .collect();
            lanes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (sector, x_lane) in lanes.into_iter().enumerate() {
                approaches.push(Endpoint::ImaginaryInfinity {
                    sign: 1,
                    sector: sector as u32,
                    x_lane,
                });
            }
        }

        let n_p_primed = primed.iter().filter(|p| **p).count();
        let sum_beta_plus_1: usize =
            self.exp_principal.iter().map(|p| p.beta() as usize + 1).sum();
        let n_z = approaches.len();
        let n_gamma = n_plus.max(0) as usize
            + (-n_minus).max(0) as usize
            + n_p_primed
            + sum_beta_plus_1
            + 1
            - usize::from(n_z > 0);
        let n_closed = poles.len() + essential_singularities.len() + 1;

        SingularityCensus {
            finite_zeroes,
            poles,
            essential_singularities,
            generalized_zero_approaches: approaches,
            n_closed,
            n_gamma,
        }
    }

    /// The density transformed by `z -> -z` (cylinder mode), i.e. `omega -> 1/omega`,
    /// rewritten back into canonical factored form.
    pub fn reflected(&self) -> Result<Density> {
        if self.mode != Mode::Cylinder {
            return Err(Error::Unsupported("reflection is a cylinder-mode operation".into()));
        }
        // (1/w - a)^alpha = (-a)^alpha w^{-alpha} (w - 1/a)^alpha
        let mut gamma = -self.gamma_power;
        let mut factors = Vec::new();
        for f in &self.poly_factors {
            gamma -= f.alpha;
            factors.push(PolyFactor { a: f.a.inv(), alpha: f.alpha });
        }
        // Q(1/w): flip the powers
        let mut exp_poly: BTreeMap<i32, Complex64> = BTreeMap::new();
        for (&k, &ck) in &self.exp_poly {
            *exp_poly.entry(-k).or_insert(Complex64::ZERO) += ck;
        }
        // d/(1/w - b)^r = d (-b)^{-r} w^r / (w - 1/b)^r; expand w^r around 1/b
        let mut principal: Vec<PrincipalPart> = Vec::new();
        for p in &self.exp_principal {
            let bi = p.b.inv();
            let beta = p.d.len();
            let mut dd = vec![Complex64::ZERO; beta];
            for (r_idx, &dr) in p.d.iter().enumerate() {
                let r = r_idx + 1;
                let pref = dr * (-p.b).powi(-(r as i32));
                // w^r = ((w - 1/b) + 1/b)^r = sum_t C(r,t) (1/b)^{r-t} (w-1/b)^t
                let mut binom = 1.0f64;
                for t in 0..=r {
                    if t > 0 {
                        binom = binom * ((r - t + 1) as f64) / (t as f64);
                    }
                    let coef = pref * binom * bi.powi((r - t) as i32);
                    if t < r {
                        dd[r - t - 1] += coef; // contributes to 1/(w-1/b)^{r-t}
                    } else {
                        *exp_poly.entry(0).or_insert(Complex64::ZERO) += coef;
                    }
                }
            }
            while dd.last().is_some_and(|coef| coef.norm() < 1e-300) {
                dd.pop();
            }
            principal.push(PrincipalPart { b: bi, d: dd });
        }
        Density::new(Mode::Cylinder, gamma, factors, exp_poly, principal)
    }
}

fn sort_points(v: &mut [(Complex64, u32)]) {
    v.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap());
}

/// Steepest-descent approach angles to an essential singularity: the `beta`
/// directions `arg(w - b)` along which `Re(d_beta / (w-b)^beta) -> -inf`.
///
/// For `beta > 2` or complex leading coefficients there is no unique
/// convention for enumerating the inequivalent decay directions; the
/// steepest-descent sector centers used here are the canonical choice
/// throughout the crate (paths, censuses and endpoint sectors all agree on
/// it).
fn essential_approach_angle(p: &PrincipalPart, sector: u32) -> f64 {
    let beta = f64::from(p.beta());
    wrap_angle((p.lead().arg() + std::f64::consts::PI * (2.0 * f64::from(sector) + 1.0)) / beta)
}

/// Drift evaluator with flattened coefficient tables.
#[derive(Debug, Clone)]
pub struct DriftEval {
    mode: Mode,
    gamma: f64,
    factors: Vec<(Complex64, f64)>,
    /// `(k, k*c_k)` for every `k != 0` in `Q`.
    qprime: Vec<(i32, Complex64)>,
    /// `(b_m, [r*d_{m,r}])`.
    principal: Vec<(Complex64, Vec<Complex64>)>,
}

impl DriftEval {
    fn new(d: &Density) -> Self {
        DriftEval {
            mode: d.mode,
            gamma: f64::from(d.gamma_power),
            factors: d.poly_factors.iter().map(|f| (f.a, f64::from(f.alpha))).collect(),
            qprime: d
                .exp_poly
                .iter()
                .filter(|(k, _)| **k != 0)
                .map(|(&k, &ck)| (k, f64::from(k) * ck))
                .collect(),
            principal: d
                .exp_principal
                .iter()
                .map(|p| {
                    let rd = p
                        .d
                        .iter()
                        .enumerate()
                        .map(|(i, &dr)| dr * (i as f64 + 1.0))
                        .collect();
                    (p.b, rd)
                })
                .collect(),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self.mode {
            Mode::Line => self.eval_w(z),
            Mode::Cylinder => self.eval_w((I * z).exp()),
        }
    }

    fn eval_w(&self, w: Complex64) -> Complex64 {
        match self.mode {
            Mode::Line => {
                let mut v = Complex64::ZERO;
                for &(a, alpha) in &self.factors {
                    v += alpha / (w - a);
                }
                for &(k, kck) in &self.qprime {
                    v += kck * w.powi(k - 1);
                }
                for (b, rd) in &self.principal {
                    let inv = (w - b).inv();
                    let mut pw = inv * inv;
                    for &rdr in rd {
                        v -= rdr * pw;
                        pw *= inv;
                    }
                }
                v
            }
            Mode::Cylinder => {
                let mut v = Complex64::new(self.gamma, 0.0);
                for &(a, alpha) in &self.factors {
                    v += alpha * w / (w - a);
                }
                for &(k, kck) in &self.qprime {
                    v += kck * w.powi(k);
                }
                for (b, rd) in &self.principal {
                    let inv = (w - b).inv();
                    let mut pw = w * inv * inv;
                    for &rdr in rd {
                        v -= rdr * pw;
                        pw *= inv;
                    }
                }
                v * I
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

/// Serde-facing density specification; see the file-format documentation.
///
/// Complex numbers are `[re, im]` pairs, `exp_poly` maps stringified integer
/// powers to coefficients.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub mode: Mode,
    #[serde(default)]
    pub gamma: i32,
    #[serde(default)]
    pub poly_factors: Vec<PolyFactorSpec>,
    #[serde(default)]
    pub exp_poly: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub exp_principal: Vec<PrincipalPartSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolyFactorSpec {
    pub a: [f64; 2],
    pub alpha: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PrincipalPartSpec {
    pub b: [f64; 2],
    pub d: Vec<[f64; 2]>,
}

impl DensitySpec {
    pub fn build(&self) -> Result<Density> {
        let mut exp_poly = BTreeMap::new();
        for (k, v) in &self.exp_poly {
            let key: i32 = k
                .parse()
                .map_err(|_| Error::InvalidDensity(format!("exp_poly key '{k}' is not an integer")))?;
            exp_poly.insert(key, c(v[0], v[1]));
        }
        Density::new(
            self.mode,
            self.gamma,
            self.poly_factors
                .iter()
                .map(|f| PolyFactor { a: c(f.a[0], f.a[1]), alpha: f.alpha })
                .collect(),
            exp_poly,
            self.exp_principal
                .iter()
                .map(|p| PrincipalPart {
                    b: c(p.b[0], p.b[1]),
                    d: p.d.iter().map(|x| c(x[0], x[1])).collect(),
                })
                .collect(),
        )
    }
}

impl From<&Density> for DensitySpec {
    fn from(d: &Density) -> Self {
        DensitySpec {
            mode: d.mode,
            gamma: d.gamma_power,
            poly_factors: d
                .poly_factors
                .iter()
                .map(|f| PolyFactorSpec { a: [f.a.re, f.a.im], alpha: f.alpha })
                .collect(),
            exp_poly: d
                .exp_poly
                .iter()
                .map(|(k, v)| (k.to_string(), [v.re, v.im]))
                .collect(),
            exp_principal: d
                .exp_principal
                .iter()
                .map(|p| PrincipalPartSpec {
                    b: [p.b.re, p.b.im],
                    d: p.d.iter().map(|x| [x.re, x.im]).collect(),
                })
                .collect(),
        }
    }
}
