//! Oriented paths, spanning-set construction and path-functional quadrature.
//!
//! An open path joins two generalized zeroes of the density; a closed path
//! winds around singularities (or the cylinder). Each path `γ` carries the
//! linear functional `(T_γ, f) = ∫_γ ρ(z) f(z) dz`, evaluated here by
//! adaptive Gauss-Kronrod quadrature with tails truncated where `|ρ f|`
//! drops below a configured floor.

mod quad;

use std::cell::RefCell;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnum::{c, fmt_complex, point_segment_distance, wrap_angle, I};
use crate::density::{Density, Mode, SingularityCensus};
use crate::error::{Error, Result};

pub use quad::qk15;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Endpoint of an open path: a finite zero or one path-inequivalent approach
/// to a generalized zero at the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    FiniteZero {
        #[serde(with = "crate::cnum::complex_pair")]
        z: Complex64,
    },
    /// Zero at infinity (line mode), along the sector bisector `angle`.
    InfinityRay { angle: f64 },
    /// Zero at `sign * i * inf` (cylinder mode), descending the lane at
    /// `x = x_lane` where the exponent drives `rho` to zero.
    ImaginaryInfinity { sign: i8, sector: u32, x_lane: f64 },
    /// Zero approached at the essential singularity `b`, in decay sector
    /// `sector`; `angle` is the canonical approach direction `arg(z - b)`.
    EssentialApproach {
        #[serde(with = "crate::cnum::complex_pair")]
        b: Complex64,
        sector: u32,
        angle: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathKind {
    Open { start: Endpoint, end: Endpoint },
    Closed { enclosed: Vec<String>, winding: i32 },
}

/// Piecewise-linear oriented path with optional infinite/singular tails.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub label: String,
    pub kind: PathKind,
    pub waypoints: Vec<Complex64>,
}

impl PathSpec {
    pub fn open(label: impl Into<String>, start: Endpoint, end: Endpoint, waypoints: Vec<Complex64>) -> Self {
        PathSpec { label: label.into(), kind: PathKind::Open { start, end }, waypoints }
    }

    pub fn closed(label: impl Into<String>, waypoints: Vec<Complex64>, enclosed: Vec<String>, winding: i32) -> Self {
        PathSpec { label: label.into(), kind: PathKind::Closed { enclosed, winding }, waypoints }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.kind, PathKind::Closed { .. })
    }
}

/// Test function: `z^m` or `e^{ikz}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Monomial(u32),
    Exponential(i32),
}

impl Observable {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match *self {
            Observable::Monomial(m) => z.powu(m),
            Observable::Exponential(k) => (I * f64::from(k) * z).exp(),
        }
    }

    /// `f'(z)`.
    pub fn eval_derivative(&self, z: Complex64) -> Complex64 {
        match *self {
            Observable::Monomial(0) => Complex64::ZERO,
            Observable::Monomial(m) => f64::from(m) * z.powu(m - 1),
            Observable::Exponential(k) => {
                let ik = I * f64::from(k);
                ik * (ik * z).exp()
            }
        }
    }

    /// Only the Fourier basis is admitted on the cylinder.
    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        if mode == Mode::Cylinder && matches!(self, Observable::Monomial(m) if *m > 0) {
            return Err(Error::Unsupported(format!(
                "observable {} is not periodic; cylinder mode admits exponentials only",
                self.label()
            )));
        }
        Ok(())
    }

    /// Constant observable `f = 1` in the domain of the given mode.
    pub fn unit(mode: Mode) -> Observable {
        match mode {
            Mode::Line => Observable::Monomial(0),
            Mode::Cylinder => Observable::Exponential(0),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Observable::Monomial(0) => "1".into(),
            Observable::Monomial(1) => "x".into(),
            Observable::Monomial(m) => format!("x^{m}"),
            Observable::Exponential(0) => "1".into(),
            Observable::Exponential(1) => "e^{ix}".into(),
            Observable::Exponential(-1) => "e^{-ix}".into(),
            Observable::Exponential(k) if k > 0 => format!("e^{{{k}ix}}"),
            Observable::Exponential(k) => format!("e^{{-{}ix}}", -k),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Absolute error target per path integral.
    pub tol: f64,
    /// Tails are truncated where `|rho f|` stays below this.
    pub tail_eps: f64,
    /// Maximum tail arclength beyond the last waypoint.
    pub max_extent: f64,
    /// Minimum clearance between a path and any pole or essential singularity.
    pub eps_path: f64,
    /// Bisection budget of the adaptive engine.
    pub max_subdiv: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { tol: 1e-10, tail_eps: 1e-16, max_extent: 50.0, eps_path: 1e-3, max_subdiv: 4000 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadResult {
    #[serde(with = "crate::cnum::complex_pair")]
    pub value: Complex64,
    pub abs_err: f64,
    /// estimated integral of `|rho f|` along the path
    pub integrand_l1: f64,
}

// ---------------------------------------------------------------------------
// Path compilation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Piece {
    /// `z(t) = z0 + t dz`, `t ∈ [0,1]`.
    Segment { z0: Complex64, dz: Complex64 },
    /// Outgoing tail `z = origin + dir s`, `s ∈ [0, t_len]`, exponentially
    /// mapped; `reversed` when traversed from infinity inward.
    TailOut { origin: Complex64, dir: Complex64, t_len: f64, reversed: bool },
    /// Shrinking approach `z = b + dir s`, `s` from `s0` down to `s1`,
    /// log-mapped; `reversed` when the approach is the start of the path.
    TailIn { b: Complex64, dir: Complex64, s0: f64, s1: f64, reversed: bool },
}

impl Piece {
    /// Point and parametrization derivative at `t ∈ [0,1]`.
    fn eval(&self, t: f64) -> (Complex64, Complex64) {
        match *self {
            Piece::Segment { z0, dz } => (z0 + dz * t, dz),
            Piece::TailOut { origin, dir, t_len, reversed } => {
                let lambda = (1.0 + t_len).ln();
                let e = (lambda * t).exp();
                let s = e - 1.0;
                let d = dir * (lambda * e);
                (origin + dir * s, if reversed { -d } else { d })
            }
            Piece::TailIn { b, dir, s0, s1, reversed } => {
                let lambda = (s1 / s0).ln(); // negative
                let s = s0 * (lambda * t).exp();
                let d = dir * (s * lambda);
                (b + dir * s, if reversed { -d } else { d })
            }
        }
    }
}

fn integrand_magnitude(d: &Density, f: &dyn Fn(Complex64) -> Complex64, z: Complex64) -> f64 {
    match d.evaluate(z) {
        Ok(rho) => {
            let m = (rho * f(z)).norm();
            if m.is_nan() {
                f64::INFINITY
            } else {
                m
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Find the tail extent along `origin + dir s` where the integrand has
/// decayed below `tail_eps` and is decreasing.
fn find_tail_extent(
    d: &Density,
    f: &dyn Fn(Complex64) -> Complex64,
    origin: Complex64,
    dir: Complex64,
    cfg: &QuadratureConfig,
    label: &str,
) -> Result<f64> {
    let mut t = 1.0f64;
    while t <= cfg.max_extent {
        let m3 = integrand_magnitude(d, f, origin + dir * t);
        let m2 = integrand_magnitude(d, f, origin + dir * (0.93 * t));
        let m1 = integrand_magnitude(d, f, origin + dir * (0.85 * t));
        if m3 < cfg.tail_eps && m2 < cfg.tail_eps && m3 <= m2.max(f64::MIN_POSITIVE) && m2 <= m1.max(f64::MIN_POSITIVE) {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::NoDecay { label: label.to_string(), tail_eps: cfg.tail_eps, extent: cfg.max_extent })
}

/// Find the truncation distance for an approach into an essential singularity.
fn find_approach_cutoff(
    d: &Density,
    f: &dyn Fn(Complex64) -> Complex64,
    b: Complex64,
    dir: Complex64,
    s_start: f64,
    cfg: &QuadratureConfig,
    label: &str,
) -> Result<f64> {
    let mut s = 0.5 * s_start;
    for _ in 0..200 {
        if integrand_magnitude(d, f, b + dir * s) < cfg.tail_eps {
            return Ok(s);
        }
        s *= 0.5;
        if s < 1e-280 {
            break;
        }
    }
    Err(Error::NoDecay { label: label.to_string(), tail_eps: cfg.tail_eps, extent: s_start })
}

struct CompiledPath {
    pieces: Vec<Piece>,
}

fn invalid(label: &str, reason: impl Into<String>) -> Error {
    Error::InvalidPath { label: label.to_string(), reason: reason.into() }
}

/// Check that the finite-zero / essential endpoints refer to actual features
/// of the density and that boundary endpoints match the mode.
fn validate_endpoint(d: &Density, ep: &Endpoint, label: &str) -> Result<()> {
    let tol = |z: Complex64| 1e-6 * (1.0 + z.norm());
    let matches_point = |z: Complex64, p: Complex64| {
        if d.mode() == Mode::Cylinder {
            let dx = (z.re - p.re - TWO_PI * ((z.re - p.re) / TWO_PI).round()).abs();
            dx.hypot(z.im - p.im) <= tol(z)
        } else {
            (z - p).norm() <= tol(z)
        }
    };
    match ep {
        Endpoint::FiniteZero { z } => {
            let is_zero = d
                .poly_factors()
                .iter()
                .any(|f| f.alpha > 0 && matches_point(*z, d.z_of_w(f.a)));
            if !is_zero {
                return Err(invalid(label, format!("{} is not a finite zero of the density", fmt_complex(*z, 4))));
            }
        }
        Endpoint::InfinityRay { .. } => {
            if d.mode() != Mode::Line {
                return Err(invalid(label, "infinity-ray endpoints exist in line mode only"));
            }
        }
        Endpoint::ImaginaryInfinity { sign, .. } => {
            if d.mode() != Mode::Cylinder {
                return Err(invalid(label, "imaginary-infinity endpoints exist in cylinder mode only"));
            }
            if sign.abs() != 1 {
                return Err(invalid(label, "imaginary-infinity sign must be +1 or -1"));
            }
        }
        Endpoint::EssentialApproach { b, sector, .. } => {
            let part = d
                .exp_principal()
                .iter()
                .find(|p| matches_point(*b, d.z_of_w(p.b)));
            match part {
                None => {
                    return Err(invalid(label, format!("{} is not an essential singularity", fmt_complex(*b, 4))));
                }
                Some(p) if *sector >= p.beta() => {
                    return Err(invalid(label, format!("sector {sector} out of range (beta = {})", p.beta())));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Direction unit vector of a boundary endpoint's canonical approach.
fn endpoint_direction(ep: &Endpoint) -> Option<Complex64> {
    match ep {
        Endpoint::FiniteZero { .. } => None,
        Endpoint::InfinityRay { angle } => Some(Complex64::from_polar(1.0, *angle)),
        Endpoint::ImaginaryInfinity { sign, .. } => Some(c(0.0, f64::from(*sign))),
        Endpoint::EssentialApproach { angle, .. } => Some(Complex64::from_polar(1.0, *angle)),
    }
}

fn compile_path(
    d: &Density,
    path: &PathSpec,
    f: &dyn Fn(Complex64) -> Complex64,
    cfg: &QuadratureConfig,
) -> Result<CompiledPath> {
    let label = &path.label;
    let singular = d.singular_points();

    // assemble the finite node list
    let mut nodes: Vec<Complex64> = Vec::new();
    let (start_ep, end_ep) = match &path.kind {
        PathKind::Open { start, end } => {
            validate_endpoint(d, start, label)?;
            validate_endpoint(d, end, label)?;
            (Some(start.clone()), Some(end.clone()))
        }
        PathKind::Closed { .. } => (None, None),
    };
    if let Some(Endpoint::FiniteZero { z }) = &start_ep {
        nodes.push(*z);
    }
    nodes.extend(path.waypoints.iter().copied());
    if let Some(Endpoint::FiniteZero { z }) = &end_ep {
        if nodes.last() != Some(z) {
            nodes.push(*z);
        }
    }
    if nodes.first().zip(nodes.get(1)).is_some_and(|(a, b)| a == b) {
        nodes.remove(0);
    }
    if nodes.is_empty() {
        return Err(invalid(label, "path has no finite anchor point"));
    }

    let mut pieces: Vec<Piece> = Vec::new();

    // start tail (traversed inward)
    if let Some(ep) = &start_ep {
        match ep {
            Endpoint::FiniteZero { .. } => {}
            Endpoint::InfinityRay { .. } | Endpoint::ImaginaryInfinity { .. } => {
                let dir = endpoint_direction(ep).unwrap();
                let t_len = find_tail_extent(d, f, nodes[0], dir, cfg, label)?;
                check_ray_clearance(d, nodes[0], dir, t_len, &singular, cfg, label)?;
                pieces.push(Piece::TailOut { origin: nodes[0], dir, t_len, reversed: true });
            }
            Endpoint::EssentialApproach { b, .. } => {
                let dir = endpoint_direction(ep).unwrap();
                let s0 = (nodes[0] - b).norm();
                if s0 <= cfg.eps_path {
                    return Err(invalid(label, "first waypoint sits on the essential singularity"));
                }
                let s1 = find_approach_cutoff(d, f, *b, dir, s0, cfg, label)?;
                pieces.push(Piece::TailIn { b: *b, dir, s0, s1, reversed: true });
            }
        }
    }

    // interior segments
    let closing = match &path.kind {
        PathKind::Closed { winding, .. } if *winding != 0 => {
            if d.mode() != Mode::Cylinder {
                return Err(invalid(label, "winding paths exist in cylinder mode only"));
            }
            let span = nodes[nodes.len() - 1] - nodes[0];
            let want = TWO_PI * f64::from(*winding);
            if (span.re - want).abs() > 1e-6 || span.im.abs() > 1e-6 {
                return Err(invalid(
                    label,
                    format!("winding-{winding} path must advance x by {want:.6}, got {:.6}", span.re),
                ));
            }
            None
        }
        PathKind::Closed { .. } => {
            if nodes.len() < 3 {
                return Err(invalid(label, "closed path needs at least 3 waypoints"));
            }
            (nodes[nodes.len() - 1] != nodes[0]).then(|| (nodes[nodes.len() - 1], nodes[0]))
        }
        PathKind::Open { .. } => None,
    };
    for w in nodes.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        check_segment_clearance(d, w[0], w[1], &singular, cfg, label)?;
        pieces.push(Piece::Segment { z0: w[0], dz: w[1] - w[0] });
    }
    if let Some((a, b)) = closing {
        check_segment_clearance(d, a, b, &singular, cfg, label)?;
        pieces.push(Piece::Segment { z0: a, dz: b - a });
    }

    // end tail (traversed outward)
    if let Some(ep) = &end_ep {
        let last = nodes[nodes.len() - 1];
        match ep {
            Endpoint::FiniteZero { .. } => {}
            Endpoint::InfinityRay { .. } | Endpoint::ImaginaryInfinity { .. } => {
                let dir = endpoint_direction(ep).unwrap();
                let t_len = find_tail_extent(d, f, last, dir, cfg, label)?;
                check_ray_clearance(d, last, dir, t_len, &singular, cfg, label)?;
                pieces.push(Piece::TailOut { origin: last, dir, t_len, reversed: false });
            }
            Endpoint::EssentialApproach { b, .. } => {
                let dir = endpoint_direction(ep).unwrap();
                let s0 = (last - b).norm();
                if s0 <= cfg.eps_path {
                    return Err(invalid(label, "last waypoint sits on the essential singularity"));
                }
                let s1 = find_approach_cutoff(d, f, *b, dir, s0, cfg, label)?;
                pieces.push(Piece::TailIn { b: *b, dir, s0, s1, reversed: false });
            }
        }
    }

    if pieces.is_empty() {
        return Err(invalid(label, "path is degenerate"));
    }
    Ok(CompiledPath { pieces })
}

/// Periodic images to test against in cylinder mode.
fn obstacle_images(d: &Density, s: Complex64) -> Vec<Complex64> {
    match d.mode() {
        Mode::Line => vec![s],
        Mode::Cylinder => (-2..=2).map(|k| s + c(TWO_PI * f64::from(k), 0.0)).collect(),
    }
}

fn check_segment_clearance(
    d: &Density,
    a: Complex64,
    b: Complex64,
    singular: &[Complex64],
    cfg: &QuadratureConfig,
    label: &str,
) -> Result<()> {
    for s in singular {
        for img in obstacle_images(d, *s) {
            let dist = point_segment_distance(img, a, b);
            if dist < cfg.eps_path {
                return Err(invalid(
                    label,
                    format!(
                        "segment [{} -> {}] passes within {dist:.2e} of the singularity at {}",
                        fmt_complex(a, 3),
                        fmt_complex(b, 3),
                        fmt_complex(*s, 3)
                    ),
                ));
            }
        }
    }
    Ok(())
}

fn check_ray_clearance(
    d: &Density,
    origin: Complex64,
    dir: Complex64,
    t_len: f64,
    singular: &[Complex64],
    cfg: &QuadratureConfig,
    label: &str,
) -> Result<()> {
    for s in singular {
        for img in obstacle_images(d, *s) {
            // only the traversed part of the ray matters
            let dist = point_segment_distance(img, origin, origin + dir * t_len);
            if dist < cfg.eps_path {
                return Err(invalid(
                    label,
                    format!("tail from {} passes the singularity at {}", fmt_complex(origin, 3), fmt_complex(*s, 3)),
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

/// `(T_γ, f)` for an arbitrary holomorphic integrand factor `f`.
pub fn integrate_with(
    d: &Density,
    path: &PathSpec,
    f: &(dyn Fn(Complex64) -> Complex64 + Sync),
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    let compiled = compile_path(d, path, &f, cfg)?;
    let winding_mul = match &path.kind {
        PathKind::Closed { winding, .. } if *winding != 0 => f64::from(winding.abs()),
        _ => 1.0,
    };

    let first_err: RefCell<Option<Error>> = RefCell::new(None);
    let eval = |piece: usize, t: f64| -> Complex64 {
        let (z, dzdt) = compiled.pieces[piece].eval(t);
        match d.evaluate(z) {
            Ok(rho) => {
                let v = rho * f(z) * dzdt;
                if v.re.is_nan() || v.im.is_nan() {
                    Complex64::ZERO
                } else {
                    v
                }
            }
            Err(e) => {
                let mut slot = first_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                Complex64::ZERO
            }
        }
    };
    let spans: Vec<(f64, f64)> = compiled.pieces.iter().map(|_| (0.0, 1.0)).collect();
    let (value, abs_err, l1) =
        quad::integrate_pieces(&eval, &spans, cfg.tol, cfg.max_subdiv, &path.label)?;
    if let Some(e) = first_err.into_inner() {
        return Err(e);
    }
    Ok(QuadResult {
        value: value * winding_mul,
        abs_err: abs_err * winding_mul,
        integrand_l1: l1 * winding_mul,
    })
}

/// `(T_γ, f) = ∫_γ ρ f dz` for an admitted observable.
pub fn integrate(d: &Density, path: &PathSpec, f: Observable, cfg: &QuadratureConfig) -> Result<QuadResult> {
    f.check_mode(d.mode())?;
    integrate_with(d, path, &move |z| f.eval(z), cfg)
}

// ---------------------------------------------------------------------------
// Functional tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TableCell {
    #[serde(with = "option_complex_pair")]
    pub value: Option<Complex64>,
    pub abs_err: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

mod option_complex_pair {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &Option<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(z) => s.serialize_some(&[z.re, z.im]),
            None => s.serialize_none(),
        }
    }
}

/// Matrix of `(T_{γ_i}, f_j)`, optionally row-normalized to `(T, 1) = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalTable {
    pub labels: Vec<String>,
    pub observables: Vec<String>,
    pub normalized: bool,
    /// `(T_γ, 1)` per row when normalization was requested.
    pub norms: Vec<Option<TableCell>>,
    pub cells: Vec<Vec<TableCell>>,
}

impl FunctionalTable {
    pub fn value(&self, row: usize, col: usize) -> Option<Complex64> {
        self.cells[row][col].value
    }

    /// Rows as plain complex values; `None` where any cell failed.
    pub fn row_values(&self, row: usize) -> Option<Vec<Complex64>> {
        self.cells[row].iter().map(|c| c.value).collect()
    }

    /// CSV with one line per (path, observable) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,observable,re,im,abs_err,error\n");
        for (i, label) in self.labels.iter().enumerate() {
            for (j, obs) in self.observables.iter().enumerate() {
                let cell = &self.cells[i][j];
                match cell.value {
                    Some(v) => out.push_str(&format!(
                        "{},{},{:.12e},{:.12e},{:.3e},\n",
                        label, obs, v.re, v.im, cell.abs_err
                    )),
                    None => out.push_str(&format!(
                        "{},{},,,,{}\n",
                        label,
                        obs,
                        cell.error.as_deref().unwrap_or("failed")
                    )),
                }
            }
        }
        out
    }
}

fn cell_of(res: Result<QuadResult>) -> TableCell {
    match res {
        Ok(q) => TableCell { value: Some(q.value), abs_err: q.abs_err, error: None },
        Err(e) => TableCell { value: None, abs_err: f64::NAN, error: Some(e.to_string()) },
    }
}

/// Evaluate `(T_{γ_i}, f_j)` for every path and observable.
///
/// With `normalize` set, each row is divided by its `(T_γ, 1)`; rows whose
/// normalization integral fails are marked failed. Cells are evaluated in
/// parallel.
pub fn functional_table(
    d: &Density,
    paths: &[PathSpec],
    obs: &[Observable],
    cfg: &QuadratureConfig,
    normalize: bool,
) -> FunctionalTable {
    let cells: Vec<Vec<TableCell>> = paths
        .par_iter()
        .map(|p| obs.par_iter().map(|f| cell_of(integrate(d, p, *f, cfg))).collect())
        .collect();
    let mut table = FunctionalTable {
        labels: paths.iter().map(|p| p.label.clone()).collect(),
        observables: obs.iter().map(|f| f.label()).collect(),
        normalized: normalize,
        norms: vec![None; paths.len()],
        cells,
    };
    if normalize {
        let unit = Observable::unit(d.mode());
        let norms: Vec<TableCell> = paths
            .par_iter()
            .map(|p| cell_of(integrate(d, p, unit, cfg)))
            .collect();
        for (i, norm) in norms.into_iter().enumerate() {
            match norm.value {
                Some(n) if n.norm() > 0.0 => {
                    for cell in &mut table.cells[i] {
                        if let Some(v) = cell.value.as_mut() {
                            *v /= n;
                        }
                        cell.abs_err /= n.norm();
                    }
                }
                _ => {
                    for cell in &mut table.cells[i] {
                        cell.value = None;
                        cell.error = Some("normalization failed".into());
                    }
                }
            }
            table.norms[i] = Some(norm);
        }
    }
    table
}

// ---------------------------------------------------------------------------
// Spanning set
// ---------------------------------------------------------------------------

/// Point obstacle with its own keep-out radius. Poles need only metric
/// clearance; essential singularities exclude the disk where `exp(R_s)`
/// reaches catastrophic magnitudes in the growth sectors.
#[derive(Debug, Clone, Copy)]
struct Obstacle {
    z: Complex64,
    clearance: f64,
}

/// Sample `max log|rho|` along the horizontal cylinder circle at height `y`.
fn cylinder_amplitude(d: &Density, y: f64) -> f64 {
    (0..16)
        .map(|k| {
            let z = c(TWO_PI * f64::from(k) / 16.0, y);
            match d.evaluate(z) {
                Ok(v) if v != Complex64::ZERO => v.norm().ln(),
                Ok(_) => f64::NEG_INFINITY,
                Err(_) => f64::INFINITY,
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Build a spanning set of exactly `census.n_gamma` paths: a star of open
/// paths from one root approach to every other generalized-zero approach,
/// plus one closed loop per independent generator (and the winding loop on
/// the cylinder). Returns an empty list when `n_gamma = 0`.
pub fn spanning_paths(d: &Density, census: &SingularityCensus) -> Result<Vec<PathSpec>> {
    let mut paths: Vec<PathSpec> = Vec::new();
    let singular = d.singular_points();
    let base_clear = 4.0 * QuadratureConfig::default().eps_path;

    let scale = singular
        .iter()
        .chain(census.finite_zeroes.iter().map(|(z, _)| z))
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    let launch_radius = 1.5 + 2.0 * scale;
    let y_launch = singular
        .iter()
        .chain(census.finite_zeroes.iter().map(|(z, _)| z))
        .map(|z| z.im.abs())
        .fold(0.0f64, f64::max)
        + 1.5;

    let nearest_other = |z: Complex64| {
        singular
            .iter()
            .chain(census.finite_zeroes.iter().map(|(p, _)| p))
            .filter(|s| (*s - z).norm() > 1e-9)
            .map(|s| (s - z).norm())
            .fold(f64::INFINITY, f64::min)
    };

    // essential-approach anchors sit on the decay ray just outside the
    // growth disk where |R_s| would exceed a couple of e-folds
    let mut ess_anchor_r: Vec<f64> = Vec::new();
    let mut obstacles: Vec<Obstacle> = Vec::new();
    for p in d.exp_principal() {
        let zb = d.z_of_w(p.b);
        let growth = (p.lead().norm() / 2.0).powf(1.0 / f64::from(p.beta()));
        let r0 = (1.2 * growth).clamp(10.0 * base_clear, (0.45 * nearest_other(zb)).max(10.0 * base_clear));
        ess_anchor_r.push(r0);
        obstacles.push(Obstacle { z: zb, clearance: (1.05 * growth).min(0.96 * r0).max(base_clear) });
    }
    for (z, _) in &census.poles {
        obstacles.push(Obstacle { z: *z, clearance: base_clear.max(0.02) });
    }

    let ess_index = |b: Complex64| {
        d.exp_principal()
            .iter()
            .position(|p| (d.z_of_w(p.b) - b).norm() <= 1e-9 * (1.0 + b.norm()))
            .expect("census endpoint refers to a principal part")
    };
    let anchor_of = |ep: &Endpoint| -> Complex64 {
        match ep {
            Endpoint::FiniteZero { z } => *z,
            Endpoint::InfinityRay { angle } => Complex64::from_polar(launch_radius, *angle),
            Endpoint::ImaginaryInfinity { sign, x_lane, .. } => c(*x_lane, f64::from(*sign) * y_launch),
            Endpoint::EssentialApproach { b, angle, .. } => {
                b + Complex64::from_polar(ess_anchor_r[ess_index(*b)], *angle)
            }
        }
    };

    // quiet transit levels for legs that must cross the whole domain
    let quiet_y = || -> f64 {
        let mut best = (f64::INFINITY, 0.0f64);
        for cand in [0.0, -y_launch, y_launch, 0.5 * y_launch, -0.5 * y_launch, 1.0, -1.0] {
            let a = cylinder_amplitude(d, cand);
            if a < best.0 {
                best = (a, cand);
            }
        }
        best.1
    };

    // Interior entry station of a far-boundary approach: the point where the
    // leg joins the decay ray before heading out, so transit legs never cross
    // the growth sectors of exp(Q).
    let ray_entry_radius = || -> f64 {
        let n_q = d.n_q().max(1);
        let lead = d.exp_poly().get(&(n_q as i32)).map_or(1.0, |v| v.norm());
        (1.5 / lead).powf(1.0 / f64::from(n_q)).clamp(0.6, 0.9 * launch_radius)
    };
    let station_of = |ep: &Endpoint| -> Option<Complex64> {
        let s = match ep {
            Endpoint::InfinityRay { angle } => Complex64::from_polar(ray_entry_radius(), *angle),
            Endpoint::ImaginaryInfinity { x_lane, .. } => c(*x_lane, quiet_y()),
            _ => return None,
        };
        let clear = obstacles.iter().all(|o| (o.z - s).norm() >= 1.3 * o.clearance);
        clear.then_some(s)
    };

    let approaches = &census.generalized_zero_approaches;
    if !approaches.is_empty() {
        let root = &approaches[0];
        let root_anchor = anchor_of(root);
        for (i, target) in approaches.iter().enumerate().skip(1) {
            let target_anchor = anchor_of(target);
            let mut stations = vec![root_anchor];
            stations.extend(station_of(root));
            stations.extend(station_of(target));
            stations.push(target_anchor);
            stations.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
            let mut waypoints: Vec<Complex64> = vec![stations[0]];
            for leg in stations.windows(2) {
                let part = route(leg[0], leg[1], &obstacles, 10).ok_or_else(|| {
                    invalid(&format!("g{i:02}"), "could not route around singularities")
                })?;
                waypoints.extend(part.into_iter().skip(1));
            }
            paths.push(PathSpec::open(
                format!("g{:02}_{}", paths.len(), endpoint_tag(target)),
                root.clone(),
                target.clone(),
                waypoints,
            ));
        }
    }

    // one loop per pole and essential singularity
    let loop_targets: Vec<(Complex64, String)> = census
        .poles
        .iter()
        .map(|(z, _)| (*z, format!("pole({})", fmt_complex(*z, 3))))
        .chain(
            census
                .essential_singularities
                .iter()
                .map(|z| (*z, format!("essential({})", fmt_complex(*z, 3)))),
        )
        .collect();
    for (center, id) in &loop_targets {
        let nearest = singular
            .iter()
            .filter(|s| (*s - center).norm() > 1e-9)
            .map(|s| (s - center).norm())
            .fold(f64::INFINITY, f64::min);
        let r = (0.35 * nearest).clamp(4.0 * base_clear, 0.5);
        let waypoints: Vec<Complex64> = (0..16)
            .map(|k| center + Complex64::from_polar(r, TWO_PI * f64::from(k) / 16.0))
            .collect();
        paths.push(PathSpec::closed(
            format!("g{:02}_loop_{}", paths.len(), id),
            waypoints,
            vec![id.clone()],
            0,
        ));
    }

    // the winding loop on the cylinder, at the quietest height clear of
    // all singularities
    if d.mode() == Mode::Cylinder {
        let mut best = (f64::INFINITY, 1.0f64);
        for cand in [0.0, 1.0, -1.0, y_launch, -y_launch, 0.5 * y_launch, -0.5 * y_launch] {
            if obstacles.iter().any(|o| (o.z.im - cand).abs() < 1.3 * o.clearance) {
                continue;
            }
            let a = cylinder_amplitude(d, cand);
            if a < best.0 {
                best = (a, cand);
            }
        }
        let y_w = best.1;
        paths.push(PathSpec::closed(
            format!("g{:02}_winding", paths.len()),
            vec![c(0.0, y_w), c(TWO_PI, y_w)],
            vec!["cylinder".into()],
            1,
        ));
    }

    debug_assert_eq!(paths.len(), census.n_gamma, "spanning set size must equal n_gamma");
    Ok(paths)
}

fn endpoint_tag(ep: &Endpoint) -> String {
    match ep {
        Endpoint::FiniteZero { z } => format!("to_zero({})", fmt_complex(*z, 3)),
        Endpoint::InfinityRay { angle } => format!("to_inf({angle:.3})"),
        Endpoint::ImaginaryInfinity { sign, x_lane, .. } => {
            format!("to_{}iinf(x={x_lane:.3})", if *sign > 0 { "p" } else { "m" })
        }
        Endpoint::EssentialApproach { b, sector, .. } => {
            format!("to_ess({},s{sector})", fmt_complex(*b, 3))
        }
    }
}

/// Piecewise-linear route from `from` to `to` respecting each obstacle's
/// keep-out radius; deflects midpoints sideways where needed.
fn route(from: Complex64, to: Complex64, obstacles: &[Obstacle], depth: usize) -> Option<Vec<Complex64>> {
    let clear = obstacles
        .iter()
        .all(|o| point_segment_distance(o.z, from, to) >= o.clearance);
    if clear {
        return Some(vec![from, to]);
    }
    if depth == 0 {
        return None;
    }
    let dir = to - from;
    if dir.norm() < 1e-12 {
        return None;
    }
    let max_clear = obstacles.iter().map(|o| o.clearance).fold(0.0f64, f64::max);
    let normal = I * dir / dir.norm();
    let mid = 0.5 * (from + to);
    let step = (1.2 * max_clear).max(0.45);
    for k in 1..=8 {
        for sgn in [1.0f64, -1.0] {
            let m = mid + normal * (sgn * f64::from(k) * step);
            let point_ok = obstacles.iter().all(|o| (o.z - m).norm() >= 1.2 * o.clearance);
            if !point_ok {
                continue;
            }
            if let (Some(mut left), Some(right)) =
                (route(from, m, obstacles, depth - 1), route(m, to, obstacles, depth - 1))
            {
                left.extend(right.into_iter().skip(1));
                return Some(left);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Path JSON interchange
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathJson {
    label: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<Endpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end: Option<Endpoint>,
    waypoints: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "is_zero")]
    winding: i32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    enclosed: Vec<String>,
}

fn is_zero(w: &i32) -> bool {
    *w == 0
}

impl Serialize for PathSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, start, end, winding, enclosed) = match &self.kind {
            PathKind::Open { start, end } => {
                ("open".to_string(), Some(start.clone()), Some(end.clone()), 0, Vec::new())
            }
            PathKind::Closed { enclosed, winding } => {
                ("closed".to_string(), None, None, *winding, enclosed.clone())
            }
        };
        PathJson {
            label: self.label.clone(),
            kind,
            start,
            end,
            waypoints: self.waypoints.iter().map(|z| [z.re, z.im]).collect(),
            winding,
            enclosed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PathSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = PathJson::deserialize(d)?;
        let waypoints = j.waypoints.iter().map(|p| c(p[0], p[1])).collect();
        let kind = match j.kind.as_str() {
            "open" => {
                let start = j.start.ok_or_else(|| D::Error::custom("open path needs 'start'"))?;
                let end = j.end.ok_or_else(|| D::Error::custom("open path needs 'end'"))?;
                PathKind::Open { start, end }
            }
            "closed" => PathKind::Closed { enclosed: j.enclosed, winding: j.winding },
            other => return Err(D::Error::custom(format!("unknown path kind '{other}'"))),
        };
        Ok(PathSpec { label: j.label, kind, waypoints })
    }
}

/// Convenience: a straight horizontal real-line path for line-mode densities,
/// running from `-inf` to `+inf` through `y = offset`.
pub fn real_line_path(offset: f64, half_width: f64) -> PathSpec {
    PathSpec::open(
        "real_line",
        Endpoint::InfinityRay { angle: std::f64::consts::PI },
        Endpoint::InfinityRay { angle: 0.0 },
        vec![c(-half_width, offset), c(half_width, offset)],
    )
}

/// Normalize an angle difference to `[-π, π]`.
pub fn angle_delta(a: f64, b: f64) -> f64 {
    let mut d = wrap_angle(a - b);
    if d > std::f64::consts::PI {
        d -= TWO_PI;
    }
    d
}
