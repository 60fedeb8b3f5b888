//! Complex Langevin simulation.
//!
//! An ensemble of walkers follows the Euler-Maruyama discretization of
//! `dz = v(z) dt + dW`, with real Gaussian noise of variance `2 dt` applied
//! to the real part only, matching the `∂²/∂x²` diffusion of the associated
//! Fokker-Planck equation. Each walker owns a counter-based RNG stream
//! derived from `(seed, walker id)`, so runs are bit-reproducible and the
//! walkers are embarrassingly parallel.

mod histogram;
mod stats;

pub use histogram::Histogram;
pub use stats::{BinnedStats, Binning};

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnum::c;
use crate::contour::Observable;
use crate::density::{Density, DriftEval, Mode};
use crate::error::{Error, Result};

const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 400, ny: 400 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CLConfig {
    pub n_walkers: usize,
    /// base time step
    pub dt: f64,
    /// burn-in process time
    pub t_burn: f64,
    /// measurement process time (after burn-in)
    pub t_measure: f64,
    pub seed: u64,
    pub adaptive: bool,
    /// adaptive rule: `dt_eff = min(dt, dt_cap_factor / |v|^2)`
    pub dt_cap_factor: f64,
    #[serde(with = "crate::cnum::complex_list")]
    pub start_points: Vec<Complex64>,
    /// process time between measurements
    pub meas_interval: f64,
    /// a walker beyond `|Im z| > y_cap` is a runaway
    pub y_cap: f64,
    pub grid: GridSpec,
}

impl Default for CLConfig {
    fn default() -> Self {
        CLConfig {
            n_walkers: 64,
            dt: 1e-4,
            t_burn: 50.0,
            t_measure: 5000.0,
            seed: 20260808,
            adaptive: true,
            dt_cap_factor: 0.1,
            start_points: vec![Complex64::ZERO],
            meas_interval: 0.05,
            y_cap: 50.0,
            grid: GridSpec::default(),
        }
    }
}

impl CLConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Unsupported(format!("invalid CL config: {m}")));
        if self.n_walkers == 0 {
            return bad("n_walkers must be positive");
        }
        for (name, v) in [("dt", self.dt), ("t_burn", self.t_burn), ("t_measure", self.t_measure)] {
            if v.is_nan() || v <= 0.0 {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.t_burn >= self.t_measure {
            return bad("t_burn must be smaller than the measurement budget t_measure");
        }
        if self.meas_interval.is_nan() || self.meas_interval < self.dt {
            return bad("meas_interval must be positive and at least dt");
        }
        if self.dt_cap_factor.is_nan() || self.dt_cap_factor <= 0.0 {
            return bad("dt_cap_factor must be positive");
        }
        Ok(())
    }
}

/// A sampled quantity: a plain observable or the pointwise Schwinger-Dyson
/// residual `A f = f' + v f` of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurable {
    Obs(Observable),
    SdResidual(Observable),
}

impl Measurable {
    pub fn label(&self) -> String {
        match self {
            Measurable::Obs(f) => f.label(),
            Measurable::SdResidual(f) => format!("A[{}]", f.label()),
        }
    }

    fn eval(&self, z: Complex64, v: Complex64) -> Complex64 {
        match self {
            Measurable::Obs(f) => f.eval(z),
            Measurable::SdResidual(f) => f.eval_derivative(z) + v * f.eval(z),
        }
    }
}

/// Complex estimate of `⟨f⟩` with component-wise standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpectationRecord {
    pub observable: Measurable,
    pub label: String,
    #[serde(with = "crate::cnum::complex_pair")]
    pub mean: Complex64,
    #[serde(with = "crate::cnum::complex_pair")]
    pub err: Complex64,
    pub n_samples: u64,
    /// integrated autocorrelation time in process-time units
    pub tau_int: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub records: Vec<ExpectationRecord>,
    #[serde(skip)]
    pub histogram: Histogram,
    pub n_walkers: usize,
}

impl RunResult {
    pub fn record_for(&self, obs: Observable) -> Option<&ExpectationRecord> {
        self.records.iter().find(|r| r.observable == Measurable::Obs(obs))
    }
}

/// One Euler-Maruyama update: `z + v dt_eff + sqrt(2 dt_eff) * noise`, the
/// noise entering the real direction only.
pub fn step(z: Complex64, v: Complex64, dt_eff: f64, noise: f64) -> Complex64 {
    z + v * dt_eff + c((2.0 * dt_eff).sqrt() * noise, 0.0)
}

struct WalkerCtx {
    id: usize,
    z: Complex64,
    rng: ChaCha8Rng,
}

fn advance<F: FnMut(Complex64)>(
    drift: &DriftEval,
    sing: &[Complex64],
    mode: Mode,
    cfg: &CLConfig,
    ctx: &mut WalkerCtx,
    t_from: f64,
    t_to: f64,
    mut on_sample: F,
) -> Result<()> {
    let mut t = t_from;
    // global sampling schedule at multiples of meas_interval
    let mut k = (t_from / cfg.meas_interval).floor() as u64 + 1;
    // A walker skirting a repelling zero takes a short burst of tiny adaptive
    // steps and escapes; a walker captured by an attracting pole contracts
    // geometrically until the drift overflows, or stalls indefinitely. Only
    // the latter two are singular hits.
    let mut stalled = 0u64;
    loop {
        let t_sample = k as f64 * cfg.meas_interval;
        if t >= t_to - 1e-12 {
            return Ok(());
        }
        let v = drift.eval(ctx.z);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::SingularHit { walker: ctx.id, t, z: ctx.z });
        }
        let mut dt_eff = if cfg.adaptive {
            (cfg.dt_cap_factor / v.norm_sqr()).min(cfg.dt)
        } else {
            cfg.dt
        };
        if dt_eff < cfg.dt * 1e-13 {
            stalled += 1;
            if stalled > 1_000_000 {
                return Err(Error::SingularHit { walker: ctx.id, t, z: ctx.z });
            }
        } else {
            stalled = 0;
        }
        let mut hit_sample = false;
        if t + dt_eff >= t_sample && t_sample <= t_to {
            dt_eff = t_sample - t;
            hit_sample = true;
        }
        let noise: f64 = StandardNormal.sample(&mut ctx.rng);
        let mut z = step(ctx.z, v, dt_eff, noise);
        if mode == Mode::Cylinder {
            z.re = z.re.rem_euclid(TWO_PI);
        }
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::SingularHit { walker: ctx.id, t, z: ctx.z });
        }
        if z.im.abs() > cfg.y_cap {
            return Err(Error::Runaway { walker: ctx.id, t, z });
        }
        // reject moves landing inside the numeric guard of a drift
        // singularity (exact hits would make v blow up); the noise draw is
        // consumed, so the sequence stays reproducible
        let rejected = sing.iter().any(|s| {
            let dx = if mode == Mode::Cylinder {
                let dx = z.re - s.re;
                dx - TWO_PI * (dx / TWO_PI).round()
            } else {
                z.re - s.re
            };
            dx.hypot(z.im - s.im) <= 1e-12 * (1.0 + s.norm())
        });
        if !rejected {
            ctx.z = z;
        }
        if hit_sample {
            t = t_sample;
            k += 1;
            on_sample(ctx.z);
        } else {
            t += dt_eff;
        }
    }
}

struct Bounds {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Bounds {
    fn empty() -> Self {
        Bounds { x_min: f64::INFINITY, x_max: f64::NEG_INFINITY, y_min: f64::INFINITY, y_max: f64::NEG_INFINITY }
    }

    fn include(&mut self, z: Complex64) {
        self.x_min = self.x_min.min(z.re);
        self.x_max = self.x_max.max(z.re);
        self.y_min = self.y_min.min(z.im);
        self.y_max = self.y_max.max(z.im);
    }

    fn merge(&mut self, o: &Bounds) {
        self.x_min = self.x_min.min(o.x_min);
        self.x_max = self.x_max.max(o.x_max);
        self.y_min = self.y_min.min(o.y_min);
        self.y_max = self.y_max.max(o.y_max);
    }
}

struct WalkerMeasure {
    stats: Vec<BinnedStats>,
    n_samples: u64,
}

/// Run the complex Langevin process and estimate `⟨f⟩` for each observable.
///
/// Statistics per walker come from log-binning; the quoted error is the
/// larger of the combined binned error and the walker-to-walker scatter.
/// The histogram covers the burn-in bounding box, expanded.
pub fn run(d: &Density, obs: &[Observable], cfg: &CLConfig) -> Result<RunResult> {
    let measurables: Vec<Measurable> = obs.iter().map(|f| Measurable::Obs(*f)).collect();
    run_extended(d, &measurables, cfg)
}

/// [`run`] with Schwinger-Dyson residual measurements admitted.
pub fn run_extended(d: &Density, measurables: &[Measurable], cfg: &CLConfig) -> Result<RunResult> {
    cfg.validate()?;
    for m in measurables {
        let (Measurable::Obs(f) | Measurable::SdResidual(f)) = m;
        f.check_mode(d.mode())?;
    }
    let drift = d.drift_eval();
    let mode = d.mode();
    // the drift is singular at every factor location (zero or pole) and at
    // every essential singularity
    let sing: Vec<Complex64> = d
        .poly_factors()
        .iter()
        .map(|f| d.z_of_w(f.a))
        .chain(d.exp_principal().iter().map(|p| d.z_of_w(p.b)))
        .collect();
    let starts = if cfg.start_points.is_empty() {
        vec![Complex64::ZERO]
    } else {
        cfg.start_points.clone()
    };

    // burn-in; walkers report their state and visited bounding box
    let burn: Vec<Result<(WalkerCtx, Bounds)>> = (0..cfg.n_walkers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(w as u64 + 1);
            let mut z0 = starts[w % starts.len()];
            if mode == Mode::Cylinder {
                z0.re = z0.re.rem_euclid(TWO_PI);
            }
            let mut ctx = WalkerCtx { id: w, z: z0, rng };
            let mut bounds = Bounds::empty();
            bounds.include(ctx.z);
            advance(&drift, &sing, mode, cfg, &mut ctx, 0.0, cfg.t_burn, |z| bounds.include(z))?;
            bounds.include(ctx.z);
            Ok((ctx, bounds))
        })
        .collect();

    let mut ctxs = Vec::with_capacity(cfg.n_walkers);
    let mut bounds = Bounds::empty();
    for r in burn {
        let (ctx, b) = r?;
        bounds.merge(&b);
        ctxs.push(ctx);
    }

    // histogram over an expanded box of the burn-in excursion
    let (x0, x1) = match mode {
        Mode::Cylinder => (0.0, TWO_PI),
        Mode::Line => expand_range(bounds.x_min, bounds.x_max),
    };
    let (y0, y1) = expand_range(bounds.y_min, bounds.y_max);
    let mut hist = Histogram::new(cfg.grid.nx, cfg.grid.ny, x0, x1, y0, y1);

    // measurement phase, chunked so only a few partial grids are alive
    let t_end = cfg.t_burn + cfg.t_measure;
    let chunk_size = 8;
    let chunks: Vec<(Vec<Result<WalkerMeasure>>, Vec<u64>, u64, u64)> = ctxs
        .par_chunks_mut(chunk_size)
        .map(|chunk| {
            let mut grid = vec![0u64; cfg.grid.nx * cfg.grid.ny];
            let mut n_total = 0u64;
            let mut out = 0u64;
            let dx = (x1 - x0) / cfg.grid.nx as f64;
            let dy = (y1 - y0) / cfg.grid.ny as f64;
            let results: Vec<Result<WalkerMeasure>> = chunk
                .iter_mut()
                .map(|ctx| {
                    let mut bins: Vec<Binning> = vec![Binning::default(); measurables.len()];
                    let mut n_samples = 0u64;
                    advance(&drift, &sing, mode, cfg, ctx, cfg.t_burn, t_end, |z| {
                        n_samples += 1;
                        let v = drift.eval(z);
                        for (m, bin) in measurables.iter().zip(bins.iter_mut()) {
                            bin.push(m.eval(z, v));
                        }
                        n_total += 1;
                        let ix = ((z.re - x0) / dx).floor();
                        let iy = ((z.im - y0) / dy).floor();
                        if ix < 0.0 || iy < 0.0 || ix >= cfg.grid.nx as f64 || iy >= cfg.grid.ny as f64 {
                            out += 1;
                        } else {
                            grid[iy as usize * cfg.grid.nx + ix as usize] += 1;
                        }
                    })?;
                    Ok(WalkerMeasure {
                        stats: bins.iter().map(Binning::finalize).collect(),
                        n_samples,
                    })
                })
                .collect();
            (results, grid, n_total, out)
        })
        .collect();

    let mut walker_stats: Vec<WalkerMeasure> = Vec::with_capacity(cfg.n_walkers);
    for (results, grid, n_total, out) in chunks {
        for r in results {
            walker_stats.push(r?);
        }
        hist.merge_counts(&grid, n_total, out);
    }

    // combine walkers; they are independent, so the scatter of walker means
    // is an alternative error estimate and we keep the larger one
    let w = walker_stats.len() as f64;
    let mut records = Vec::with_capacity(measurables.len());
    for (j, m) in measurables.iter().enumerate() {
        let mean: Complex64 =
            walker_stats.iter().map(|s| s.stats[j].mean).sum::<Complex64>() / w;
        let binned_var: Complex64 = walker_stats
            .iter()
            .map(|s| {
                let e = s.stats[j].err;
                c(e.re * e.re, e.im * e.im)
            })
            .sum::<Complex64>()
            / (w * w);
        let scatter_var: Complex64 = if walker_stats.len() > 1 {
            walker_stats
                .iter()
                .map(|s| {
                    let dm = s.stats[j].mean - mean;
                    c(dm.re * dm.re, dm.im * dm.im)
                })
                .sum::<Complex64>()
                / (w * (w - 1.0))
        } else {
            Complex64::ZERO
        };
        let err = c(
            binned_var.re.max(scatter_var.re).sqrt(),
            binned_var.im.max(scatter_var.im).sqrt(),
        );
        let tau_samples =
            walker_stats.iter().map(|s| s.stats[j].tau_samples).sum::<f64>() / w;
        records.push(ExpectationRecord {
            observable: *m,
            label: m.label(),
            mean,
            err,
            n_samples: walker_stats.iter().map(|s| s.n_samples).sum(),
            tau_int: tau_samples * cfg.meas_interval,
        });
    }

    // shot-noise inflation for histogram-based diagnostics
    let tau_mean = if records.is_empty() {
        0.5
    } else {
        records.iter().map(|r| r.tau_int / cfg.meas_interval).sum::<f64>() / records.len() as f64
    };
    hist.acf_inflation = (2.0 * tau_mean).clamp(1.0, 100.0);

    Ok(RunResult { records, histogram: hist, n_walkers: cfg.n_walkers })
}

fn expand_range(lo: f64, hi: f64) -> (f64, f64) {
    let mid = 0.5 * (lo + hi);
    let half = (0.65 * (hi - lo)).max(0.25);
    (mid - half, mid + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnum::cr;
    use crate::corpus;

    fn quick_cfg() -> CLConfig {
        CLConfig {
            n_walkers: 16,
            dt: 1e-3,
            t_burn: 10.0,
            t_measure: 100.0,
            seed: 42,
            meas_interval: 0.05,
            grid: GridSpec { nx: 80, ny: 80 },
            ..CLConfig::default()
        }
    }

    #[test]
    fn step_is_plain_euler_maruyama() {
        // drift-only step with v = -z
        let z = step(cr(1.0), cr(-1.0), 0.01, 0.0);
        assert!((z - cr(0.99)).norm() < 1e-15);
        // noise enters the real direction only
        let z = step(c(0.0, 1.0), c(0.0, -1.0), 0.01, 1.0);
        let expect = c(0.02f64.sqrt(), 0.99);
        assert!((z - expect).norm() < 1e-15);
    }

    #[test]
    fn real_gaussian_process_reproduces_second_moment() {
        let d = corpus::gaussian(0.5); // e^{-z^2/2}, <x^2> = 1
        let out = run(&d, &[Observable::Monomial(2)], &quick_cfg()).unwrap();
        let rec = &out.records[0];
        assert!(rec.mean.im == 0.0, "imaginary part must stay exactly zero");
        assert!(
            (rec.mean.re - 1.0).abs() < 3.0 * rec.err.re.max(1e-3),
            "got {} +- {}",
            rec.mean.re,
            rec.err.re
        );
        assert!(out.histogram.coverage() > 0.99);
    }

    #[test]
    fn real_start_stays_real() {
        let d = corpus::gaussian(0.5);
        let out = run(&d, &[Observable::Monomial(1)], &quick_cfg()).unwrap();
        // the whole y extent of the visited box collapses onto the axis
        assert!(out.histogram.y0 < 0.0 && out.histogram.y1 > 0.0);
        let rec = &out.records[0];
        assert_eq!(rec.mean.im.to_bits(), 0.0f64.to_bits());
        assert_eq!(rec.err.im.to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let d = corpus::ex1();
        let mut cfg = quick_cfg();
        cfg.t_measure = 20.0;
        let obs = [Observable::Monomial(1), Observable::Exponential(1)];
        let a = run(&d, &obs, &cfg).unwrap();
        let b = run(&d, &obs, &cfg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.mean.re.to_bits(), rb.mean.re.to_bits());
            assert_eq!(ra.mean.im.to_bits(), rb.mean.im.to_bits());
            assert_eq!(ra.err.re.to_bits(), rb.err.re.to_bits());
            assert_eq!(ra.n_samples, rb.n_samples);
        }
        assert_eq!(a.histogram.counts, b.histogram.counts);
        // a different seed must actually change the numbers
        cfg.seed += 1;
        let c = run(&d, &obs, &cfg).unwrap();
        assert_ne!(a.records[0].mean.re.to_bits(), c.records[0].mean.re.to_bits());
    }

    #[test]
    fn runaway_is_reported() {
        // v = 5i drives every walker straight up
        let d = crate::density::Density::new(
            Mode::Line,
            0,
            vec![],
            [(1, c(0.0, 5.0))].into_iter().collect(),
            vec![],
        )
        .unwrap();
        let got = run(&d, &[Observable::Monomial(1)], &quick_cfg());
        assert!(matches!(got, Err(Error::Runaway { .. })), "got {got:?}");
    }

    #[test]
    fn attracting_pole_hits_the_singular_guard() {
        // rho = (z-1)^{-1}: the drift -1/(z-1) pulls walkers into the pole
        let d = corpus::rational(&[(cr(1.0), -1)]);
        let mut cfg = quick_cfg();
        cfg.start_points = vec![cr(1.3)];
        cfg.t_measure = 50.0;
        let got = run(&d, &[Observable::Monomial(1)], &cfg);
        assert!(
            matches!(got, Err(Error::SingularHit { .. })),
            "expected a singular hit, got {got:?}"
        );
    }

    #[test]
    fn cylinder_histogram_wraps_x() {
        let d = corpus::exp_cos(0, cr(1.0));
        let mut cfg = quick_cfg();
        cfg.t_measure = 30.0;
        let out = run(&d, &[Observable::Exponential(1)], &cfg).unwrap();
        assert_eq!(out.histogram.x0, 0.0);
        assert!((out.histogram.x1 - TWO_PI).abs() < 1e-12);
        assert!(out.histogram.coverage() > 0.99);
        // <cos x> under exp(cos x) is I_1(1)/I_0(1) ~ 0.44639
        let rec = &out.records[0];
        assert!((rec.mean.re - 0.44639).abs() < 4.0 * rec.err.re.max(5e-3), "{}", rec.mean);
    }

    #[test]
    fn sd_residual_observable_vanishes() {
        let d = corpus::gaussian(0.5);
        let out = run_extended(
            &d,
            &[Measurable::SdResidual(Observable::Monomial(1))],
            &quick_cfg(),
        )
        .unwrap();
        let rec = &out.records[0];
        // <A x> = <1 - x^2> = 0
        assert!(rec.mean.re.abs() < 4.0 * rec.err.re.max(1e-3), "{} +- {}", rec.mean, rec.err);
    }

    #[test]
    fn histogram_binary_roundtrip() {
        let d = corpus::gaussian(0.5);
        let mut cfg = quick_cfg();
        cfg.t_measure = 20.0;
        let out = run(&d, &[Observable::Monomial(1)], &cfg).unwrap();
        let mut buf = Vec::new();
        out.histogram.write_binary(&mut buf).unwrap();
        let back = Histogram::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.counts, out.histogram.counts);
        assert_eq!(back.n_total, out.histogram.n_total);
        assert_eq!(back.x0.to_bits(), out.histogram.x0.to_bits());
    }
}
