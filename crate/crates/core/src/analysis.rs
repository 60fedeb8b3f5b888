//! Decomposition of Langevin results onto path functionals, stationary-flux
//! diagnostics and the `⟨v⟩` check on the cylinder.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::cnum::{c, fmt_complex, I};
use crate::density::{Density, Mode};
use crate::error::{Error, Result};
use crate::langevin::{ExpectationRecord, Histogram};
use crate::sde::MomentVector;

/// Error floor that keeps synthetic exact records from producing infinite
/// weights.
const SIGMA_FLOOR: f64 = 1e-12;

/// Result of the weighted complex least-squares decomposition
/// `CL ≈ Σ_i a_i (T̂_i, f)`.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    #[serde(with = "crate::cnum::complex_list")]
    pub coefficients: Vec<Complex64>,
    /// component-wise parametric-bootstrap errors
    #[serde(with = "crate::cnum::complex_list")]
    pub errors: Vec<Complex64>,
    /// bootstrap covariance `⟨δa_i conj(δa_j)⟩`
    pub covariance: Vec<Vec<[f64; 2]>>,
    pub chi2: f64,
    pub dof: usize,
    /// `|Σ a_i - 1|` when the normalization constraint was imposed
    pub constraint_residual: f64,
}

struct FitProblem<'a> {
    data: Vec<Complex64>,
    sigma: Vec<(f64, f64)>,
    basis: &'a [Vec<Complex64>],
    normalize: bool,
}

impl FitProblem<'_> {
    /// Weighted least squares with Re/Im of every record treated as two real
    /// data points. With `normalize`, the last coefficient is eliminated
    /// through `Σ a_i = 1`.
    fn solve(&self, data: &[Complex64]) -> Result<(Vec<Complex64>, DMatrix<f64>, f64)> {
        let k = self.basis.len();
        let kf = if self.normalize { k - 1 } else { k };
        let nj = data.len();
        if kf == 0 {
            // a single normalized functional has no free parameters
            let mut chi2 = 0.0;
            for j in 0..nj {
                let (s_re, s_im) = self.sigma[j];
                let r = data[j] - self.basis[0][j];
                chi2 += (r.re / s_re).powi(2) + (r.im / s_im).powi(2);
            }
            return Ok((vec![c(1.0, 0.0)], DMatrix::zeros(0, 0), chi2));
        }
        let mut m = DMatrix::<f64>::zeros(2 * kf, 2 * kf);
        let mut rhs = nalgebra::DVector::<f64>::zeros(2 * kf);

        // row g: prediction coefficients of one real data point over
        // [Re a_0, Im a_0, ...]; r: data minus offset
        let mut push_row = |g: &[f64], r: f64, w: f64| {
            for p in 0..2 * kf {
                rhs[p] += w * g[p] * r;
                for q in 0..2 * kf {
                    m[(p, q)] += w * g[p] * g[q];
                }
            }
        };

        let mut chi2_rows: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(2 * nj);
        for j in 0..nj {
            let offset = if self.normalize { self.basis[k - 1][j] } else { Complex64::ZERO };
            let bt: Vec<Complex64> = (0..kf)
                .map(|i| self.basis[i][j] - if self.normalize { self.basis[k - 1][j] } else { Complex64::ZERO })
                .collect();
            let (s_re, s_im) = self.sigma[j];
            let w_re = 1.0 / (s_re * s_re);
            let w_im = 1.0 / (s_im * s_im);

            let mut g_re = vec![0.0; 2 * kf];
            let mut g_im = vec![0.0; 2 * kf];
            for i in 0..kf {
                g_re[2 * i] = bt[i].re;
                g_re[2 * i + 1] = -bt[i].im;
                g_im[2 * i] = bt[i].im;
                g_im[2 * i + 1] = bt[i].re;
            }
            let r_re = data[j].re - offset.re;
            let r_im = data[j].im - offset.im;
            push_row(&g_re, r_re, w_re);
            push_row(&g_im, r_im, w_im);
            chi2_rows.push((g_re, r_re, w_re));
            chi2_rows.push((g_im, r_im, w_im));
        }

        // rank guard on the normal matrix
        let svd = m.clone().svd(true, true);
        let s_max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
        let s_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
        if s_max <= 0.0 || s_max.is_nan() || s_min / s_max < 1e-12 {
            return Err(Error::RankDeficientBasis { ratio: if s_max > 0.0 { s_min / s_max } else { 0.0 } });
        }
        let u = svd.solve(&rhs, 0.0).map_err(|_| Error::RankDeficientBasis { ratio: 0.0 })?;

        let mut coeffs: Vec<Complex64> = (0..kf).map(|i| c(u[2 * i], u[2 * i + 1])).collect();
        if self.normalize {
            let partial: Complex64 = coeffs.iter().sum();
            coeffs.push(c(1.0, 0.0) - partial);
        }
        let chi2 = chi2_rows
            .iter()
            .map(|(g, r, w)| {
                let pred: f64 = g.iter().zip(u.iter()).map(|(gi, ui)| gi * ui).sum();
                w * (pred - r) * (pred - r)
            })
            .sum();
        let cov = m
            .try_inverse()
            .ok_or(Error::RankDeficientBasis { ratio: s_min / s_max })?;
        Ok((coeffs, cov, chi2))
    }
}

/// Fit Langevin expectation values to a basis of functional-table rows.
///
/// `basis[i][j]` is `(T̂_i, f_j)` evaluated for the same observable order as
/// `records`. Coefficient uncertainties come from a parametric bootstrap of
/// the records within their quoted errors.
pub fn fit(
    records: &[&ExpectationRecord],
    basis: &[Vec<Complex64>],
    normalize: bool,
    bootstrap: usize,
    bootstrap_seed: u64,
) -> Result<FitResult> {
    let k = basis.len();
    if k == 0 {
        return Err(Error::Unsupported("fit needs at least one basis functional".into()));
    }
    let nj = records.len();
    if basis.iter().any(|row| row.len() != nj) {
        return Err(Error::Unsupported("basis rows and records have mismatched lengths".into()));
    }
    let free = if normalize { k - 1 } else { k };
    if nj < free + 1 {
        return Err(Error::Unsupported(format!(
            "fit needs at least one more observable than free coefficients ({nj} vs {free})"
        )));
    }

    let problem = FitProblem {
        data: records.iter().map(|r| r.mean).collect(),
        sigma: records
            .iter()
            .map(|r| (r.err.re.max(SIGMA_FLOOR), r.err.im.max(SIGMA_FLOOR)))
            .collect(),
        basis,
        normalize,
    };
    let (coeffs, _cov_real, chi2) = problem.solve(&problem.data)?;

    // parametric bootstrap
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap_seed);
    let mut samples: Vec<Vec<Complex64>> = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let data: Vec<Complex64> = problem
            .data
            .iter()
            .zip(&problem.sigma)
            .map(|(d, (s_re, s_im))| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let eta: f64 = StandardNormal.sample(&mut rng);
                d + c(s_re * xi, s_im * eta)
            })
            .collect();
        samples.push(problem.solve(&data)?.0);
    }
    let nb = samples.len().max(1) as f64;
    let mut errors = vec![Complex64::ZERO; k];
    let mut covariance = vec![vec![[0.0, 0.0]; k]; k];
    if !samples.is_empty() {
        let mean: Vec<Complex64> = (0..k)
            .map(|i| samples.iter().map(|s| s[i]).sum::<Complex64>() / nb)
            .collect();
        for i in 0..k {
            let var_re =
                samples.iter().map(|s| (s[i].re - mean[i].re).powi(2)).sum::<f64>() / nb;
            let var_im =
                samples.iter().map(|s| (s[i].im - mean[i].im).powi(2)).sum::<f64>() / nb;
            errors[i] = c(var_re.sqrt(), var_im.sqrt());
            for j in 0..k {
                let cv: Complex64 = samples
                    .iter()
                    .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]).conj())
                    .sum::<Complex64>()
                    / nb;
                covariance[i][j] = [cv.re, cv.im];
            }
        }
    }

    let constraint_residual = if normalize {
        (coeffs.iter().sum::<Complex64>() - c(1.0, 0.0)).norm()
    } else {
        0.0
    };
    let dof = 2 * nj - 2 * free;
    Ok(FitResult { coefficients: coeffs, errors, covariance, chi2, dof, constraint_residual })
}

/// One-real-parameter fit of the overcomplete representation
/// `T ≈ (b/2)(T̂_+ + T̂_-) + (1 - b) T̂_ρ` with `b ∈ R`.
#[derive(Debug, Clone, Serialize)]
pub struct OvercompleteFit {
    pub b: f64,
    pub err: f64,
    pub chi2: f64,
    pub dof: usize,
}

pub fn fit_overcomplete_real(
    records: &[&ExpectationRecord],
    t_plus: &[Complex64],
    t_minus: &[Complex64],
    t_rho: &[Complex64],
    bootstrap: usize,
    bootstrap_seed: u64,
) -> Result<OvercompleteFit> {
    let nj = records.len();
    if t_plus.len() != nj || t_minus.len() != nj || t_rho.len() != nj {
        return Err(Error::Unsupported("basis rows and records have mismatched lengths".into()));
    }
    let solve = |data: &[Complex64]| -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for j in 0..nj {
            let g = 0.5 * (t_plus[j] + t_minus[j]) - t_rho[j];
            let off = t_rho[j];
            let (s_re, s_im) = (
                records[j].err.re.max(SIGMA_FLOOR),
                records[j].err.im.max(SIGMA_FLOOR),
            );
            for (gc, rc, sc) in
                [(g.re, data[j].re - off.re, s_re), (g.im, data[j].im - off.im, s_im)]
            {
                let w = 1.0 / (sc * sc);
                num += w * gc * rc;
                den += w * gc * gc;
                rows.push((gc, rc, w));
            }
        }
        let b = num / den;
        let chi2 = rows.iter().map(|(g, r, w)| w * (g * b - r) * (g * b - r)).sum();
        (b, chi2)
    };

    let data: Vec<Complex64> = records.iter().map(|r| r.mean).collect();
    let (b, chi2) = solve(&data);
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap_seed);
    let mut bs: Vec<f64> = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let jittered: Vec<Complex64> = data
            .iter()
            .zip(records)
            .map(|(d, r)| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let eta: f64 = StandardNormal.sample(&mut rng);
                d + c(r.err.re.max(SIGMA_FLOOR) * xi, r.err.im.max(SIGMA_FLOOR) * eta)
            })
            .collect();
        bs.push(solve(&jittered).0);
    }
    let err = if bs.is_empty() {
        0.0
    } else {
        let mean = bs.iter().sum::<f64>() / bs.len() as f64;
        (bs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / bs.len() as f64).sqrt()
    };
    Ok(OvercompleteFit { b, err, chi2, dof: 2 * nj - 1 })
}

// ---------------------------------------------------------------------------
// Flux diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum FluxCurve {
    /// Closed polyline (counterclockwise for outward flux).
    Closed(Vec<Complex64>),
    /// Horizontal loop around the cylinder at constant `y`.
    CylinderLine { y: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxResult {
    pub net_flux: f64,
    pub err: f64,
    pub n_points: usize,
}

struct FluxAccumulator<'a> {
    hist: &'a Histogram,
    wrap_x: bool,
    flux: f64,
    coeff: HashMap<(usize, usize), f64>,
    n_points: usize,
}

impl<'a> FluxAccumulator<'a> {
    fn new(hist: &'a Histogram, wrap_x: bool) -> Self {
        FluxAccumulator { hist, wrap_x, flux: 0.0, coeff: HashMap::new(), n_points: 0 }
    }

    fn cell_value(&self, ix: isize, iy: isize) -> Option<(usize, usize)> {
        let h = self.hist;
        let ix = if self.wrap_x {
            ix.rem_euclid(h.nx as isize)
        } else {
            ix.clamp(0, h.nx as isize - 1)
        };
        let iy = iy.clamp(0, h.ny as isize - 1);
        Some((ix as usize, iy as usize))
    }

    /// Bilinear interpolation weights over the four surrounding cell centers.
    fn weights(&self, x: f64, y: f64) -> Vec<((usize, usize), f64)> {
        let h = self.hist;
        let fx = (x - h.x0) / h.dx() - 0.5;
        let fy = (y - h.y0) / h.dy() - 0.5;
        let ix = fx.floor() as isize;
        let iy = fy.floor() as isize;
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let mut out = Vec::with_capacity(4);
        for (dxs, wx) in [(0isize, 1.0 - tx), (1, tx)] {
            for (dys, wy) in [(0isize, 1.0 - ty), (1, ty)] {
                if let Some(cell) = self.cell_value(ix + dxs, iy + dys) {
                    out.push((cell, wx * wy));
                }
            }
        }
        out
    }

    /// Add the contribution of the current `j = (v_x P - ∂_x P, v_y P)`
    /// crossing a directed length element `(dx, dy)` at `(x, y)`:
    /// `dΦ = j_x dy - j_y dx`.
    fn add_point(&mut self, x: f64, y: f64, v: Complex64, dx: f64, dy: f64) {
        self.n_points += 1;
        let h = self.hist;
        let p_factor = v.re * dy - v.im * dx;
        for (cell, w) in self.weights(x, y) {
            let p = h.density(cell.0, cell.1);
            self.flux += w * p * p_factor;
            *self.coeff.entry(cell).or_insert(0.0) += w * p_factor;
            // -∂_x P * dy via the central-difference stencil of this cell
            let (ix, iy) = (cell.0 as isize, cell.1 as isize);
            let right = self.cell_value(ix + 1, iy).unwrap();
            let left = self.cell_value(ix - 1, iy).unwrap();
            let stencil = w * dy / (2.0 * h.dx());
            let p_right = h.density(right.0, right.1);
            let p_left = h.density(left.0, left.1);
            self.flux -= stencil * (p_right - p_left);
            *self.coeff.entry(right).or_insert(0.0) -= stencil;
            *self.coeff.entry(left).or_insert(0.0) += stencil;
        }
    }

    fn result(self) -> FluxResult {
        let var: f64 = self
            .coeff
            .iter()
            .map(|(&(ix, iy), &l)| l * l * self.hist.density_var(ix, iy))
            .sum();
        FluxResult { net_flux: self.flux, err: var.sqrt(), n_points: self.n_points }
    }
}

/// Net flux of the stationary density current through a closed curve.
///
/// In a stationary state this vanishes for any curve avoiding the drift
/// singularities; the quoted error is the propagated histogram shot noise.
pub fn flux(hist: &Histogram, d: &Density, curve: &FluxCurve) -> Result<FluxResult> {
    let wrap_x = d.mode() == Mode::Cylinder;
    let min_dist = 2.0 * hist.dx().hypot(hist.dy());
    let singular = d.singular_points();
    // drift is singular at the zeroes of rho as well
    let zero_points: Vec<Complex64> = d.census()?.finite_zeroes.iter().map(|(z, _)| *z).collect();
    let check_point = |z: Complex64| -> Result<()> {
        for s in singular.iter().chain(zero_points.iter()) {
            let dist = if wrap_x {
                let ddx = z.re - s.re;
                let ddx = ddx - std::f64::consts::TAU * (ddx / std::f64::consts::TAU).round();
                ddx.hypot(z.im - s.im)
            } else {
                (z - s).norm()
            };
            if dist < min_dist {
                return Err(Error::CurveTooClose { singularity: *s, dist, min_dist });
            }
        }
        Ok(())
    };

    let drift = d.drift_eval();
    let mut acc = FluxAccumulator::new(hist, wrap_x);
    match curve {
        FluxCurve::Closed(points) => {
            if points.len() < 3 {
                return Err(Error::Unsupported("closed flux curve needs at least 3 vertices".into()));
            }
            let h = hist.dx().min(hist.dy());
            let mut loop_pts = points.clone();
            loop_pts.push(points[0]);
            for seg in loop_pts.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let n = ((b - a).norm() / h).ceil().max(1.0) as usize;
                let step = (b - a) / n as f64;
                for k in 0..n {
                    let z = a + step * (k as f64 + 0.5);
                    check_point(z)?;
                    acc.add_point(z.re, z.im, drift.eval(z), step.re, step.im);
                }
            }
        }
        FluxCurve::CylinderLine { y } => {
            if !wrap_x {
                return Err(Error::Unsupported("cylinder flux lines need a periodic density".into()));
            }
            for ix in 0..hist.nx {
                let (x, _) = hist.cell_center(ix, 0);
                let z = c(x, *y);
                check_point(z)?;
                acc.add_point(x, *y, drift.eval(z), hist.dx(), 0.0);
            }
        }
    }
    Ok(acc.result())
}

// ---------------------------------------------------------------------------
// The <v> check (cylinder)
// ---------------------------------------------------------------------------

/// Fourier representation `v = i (γ + Σ_k k c_k ω^k)`, available when the
/// density has no poly factors or principal parts.
fn v_fourier(d: &Density) -> Result<Vec<(i32, Complex64)>> {
    if d.mode() != Mode::Cylinder {
        return Err(Error::Unsupported("the ⟨v⟩ check applies to cylinder densities".into()));
    }
    if !d.poly_factors().is_empty() || !d.exp_principal().is_empty() {
        return Err(Error::Unsupported(
            "the ⟨v⟩ check is implemented for exponential-of-Fourier densities only".into(),
        ));
    }
    let mut terms = vec![(0i32, I * f64::from(d.gamma_power()))];
    for (&k, &ck) in d.exp_poly() {
        if k != 0 {
            terms.push((k, I * ck * f64::from(k)));
        }
    }
    Ok(terms)
}

/// Langevin estimate of `⟨v⟩` with propagated errors. Expects the run to have
/// measured `e^{ikz}` for every `k` carried by the drift.
pub fn v_expectation_from_records(
    d: &Density,
    records: &[ExpectationRecord],
) -> Result<(Complex64, Complex64)> {
    use crate::contour::Observable;
    use crate::langevin::Measurable;

    let mut mean = Complex64::ZERO;
    let mut var = c(0.0, 0.0);
    for (k, coef) in v_fourier(d)? {
        let (value, err) = if k == 0 {
            (c(1.0, 0.0), Complex64::ZERO) // CL records are normalized
        } else {
            let rec = records
                .iter()
                .find(|r| r.observable == Measurable::Obs(Observable::Exponential(k)))
                .ok_or_else(|| {
                    Error::Unsupported(format!("⟨v⟩ check needs a record for e^{{{k}iz}}"))
                })?;
            (rec.mean, rec.err)
        };
        mean += coef * value;
        var.re += (coef.re * err.re).powi(2) + (coef.im * err.im).powi(2);
        var.im += (coef.im * err.re).powi(2) + (coef.re * err.im).powi(2);
    }
    Ok((mean, c(var.re.sqrt(), var.im.sqrt())))
}

/// `(T, v)` from exact moments of a functional (normalization not applied).
pub fn v_expectation_from_moments(d: &Density, mv: &MomentVector) -> Result<Complex64> {
    let mut acc = Complex64::ZERO;
    for (k, coef) in v_fourier(d)? {
        acc += coef * mv.get(crate::sde::Slot::E(i64::from(k)));
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

/// `0.5244(2)`-style value with the error in units of the last digit.
pub fn fmt_value_err(x: f64, err: f64, digits: usize) -> String {
    if err <= 0.0 {
        return format!("{:.*}", digits, x);
    }
    let scale = 10f64.powi(digits as i32);
    let err_units = (err * scale).round().max(1.0) as i64;
    format!("{:.*}({})", digits, x, err_units)
}

/// Paper-style complex rendering: `0.3763 + i 0.7521`, pure parts collapsed.
pub fn fmt_complex_paper(z: Complex64, digits: usize) -> String {
    let tiny = 0.5 * 10f64.powi(-(digits as i32));
    if z.im.abs() < tiny {
        format!("{:.*}", digits, z.re)
    } else if z.re.abs() < tiny {
        format!("i {:.*}", digits, z.im)
    } else if z.im < 0.0 {
        format!("{:.*} - i {:.*}", digits, z.re, digits, -z.im)
    } else {
        format!("{:.*} + i {:.*}", digits, z.re, digits, z.im)
    }
}

/// Fixed-width text table: one row per observable, one column per functional.
pub fn render_table(row_labels: &[String], columns: &[(String, Vec<String>)]) -> String {
    let mut widths: Vec<usize> = Vec::new();
    let label_w = row_labels.iter().map(|s| s.len()).max().unwrap_or(4).max(4);
    for (header, cells) in columns {
        let w = cells.iter().map(|s| s.len()).chain([header.len()]).max().unwrap_or(8);
        widths.push(w + 2);
    }
    let mut out = String::new();
    out.push_str(&format!("{:<label_w$}", "f"));
    for ((header, _), w) in columns.iter().zip(&widths) {
        out.push_str(&format!("{:>w$}", header));
    }
    out.push('\n');
    out.push_str(&"-".repeat(label_w + widths.iter().sum::<usize>()));
    out.push('\n');
    for (i, label) in row_labels.iter().enumerate() {
        out.push_str(&format!("{label:<label_w$}"));
        for ((_, cells), w) in columns.iter().zip(&widths) {
            out.push_str(&format!("{:>w$}", cells[i]));
        }
        out.push('\n');
    }
    out
}

/// Human-readable summary of a fit.
pub fn fmt_fit(fit: &FitResult) -> String {
    let coeffs: Vec<String> = fit
        .coefficients
        .iter()
        .zip(&fit.errors)
        .map(|(a, e)| format!("{} ± {}", fmt_complex(*a, 4), fmt_complex(*e, 4)))
        .collect();
    format!(
        "a = [{}], chi2/dof = {:.3}/{} = {:.3}, |Σa-1| = {:.2e}",
        coeffs.join(", "),
        fit.chi2,
        fit.dof,
        fit.chi2 / fit.dof.max(1) as f64,
        fit.constraint_residual
    )
}
