//! `pathforms`: config-driven experiments on one-dimensional complex
//! densities — singularity census, Schwinger-Dyson dimension checks, path
//! quadrature, complex Langevin runs and their decomposition.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::{curve_of, ExperimentConfig};
use output::{complex_json, OutputWriter};
use pathforms::analysis::{self, FluxCurve};
use pathforms::contour::{functional_table, real_line_path, Endpoint, Observable, PathKind, PathSpec};
use pathforms::langevin::{self, Measurable};
use pathforms::sde;
use pathforms::{Density, Error as CoreError, Mode};

#[derive(Parser)]
#[command(name = "pathforms", version, about)]
struct Cli {
    /// Experiment configuration (JSON)
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override the output directory
    #[arg(short, long, global = true)]
    output_dir: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the zero/pole/singularity census and the path count
    Analyze,
    /// Build the truncated moment system and verify N_SDE = N_Gamma
    Sde,
    /// Evaluate the functional table (T_gamma, f) by quadrature
    Integrate {
        /// Normalize each row to (T, 1) = 1
        #[arg(long)]
        normalize: bool,
    },
    /// Run the complex Langevin process
    Simulate,
    /// Decompose simulated expectations onto the path functionals
    Fit,
    /// Stationary-current flux through closed curves
    Flux,
    /// Full benchmark-table reproduction: quadrature columns, CL column, fit
    Table1,
    /// Export run artifacts as plot-friendly CSV grids and path overlays
    Plotdata,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("PATHFORMS_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::from(0),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

/// Exit codes: 1 for numerical failures, 2 for config/schema/IO problems.
fn classify(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::QuadratureFail { .. }
                | CoreError::NoDecay { .. }
                | CoreError::NotStabilized { .. }
                | CoreError::Runaway { .. }
                | CoreError::SingularHit { .. }
                | CoreError::RankDeficientBasis { .. }
                | CoreError::CurveTooClose { .. }
                | CoreError::SingularityTooClose { .. }
                | CoreError::Overflow { .. } => 1,
                CoreError::InvalidDensity(_)
                | CoreError::InvalidPath { .. }
                | CoreError::Unsupported(_) => 2,
            };
        }
    }
    2
}

fn run(cli: &Cli) -> Result<()> {
    let config_path =
        cli.config.clone().ok_or_else(|| anyhow!("--config <file> is required"))?;
    let cfg = ExperimentConfig::load(&config_path)?;
    let out = OutputWriter::new(cfg.output_dir(cli.output_dir.as_deref()), &cfg)?;
    match &cli.command {
        Command::Analyze => cmd_analyze(&cfg, &out),
        Command::Sde => cmd_sde(&cfg, &out),
        Command::Integrate { normalize } => cmd_integrate(&cfg, &out, *normalize),
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Fit => cmd_fit(&cfg, &out),
        Command::Flux => cmd_flux(&cfg, &out),
        Command::Table1 => cmd_table1(&cfg, &out),
        Command::Plotdata => cmd_plotdata(&cfg, &out),
    }
}

fn cmd_plotdata(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let hist = out.read_histogram("histogram.bin")?;
    out.write_csv("grid.csv", "plotdata", &output::histogram_csv(&hist))?;
    let d = cfg.density()?;
    let paths = cfg.resolve_paths(&d)?;
    let mut overlay = String::from("label,idx,x,y\n");
    for p in &paths {
        for (i, w) in p.waypoints.iter().enumerate() {
            overlay.push_str(&format!("{},{i},{:.8},{:.8}\n", p.label, w.re, w.im));
        }
    }
    out.write_csv("paths.csv", "plotdata", &overlay)?;
    println!("grid.csv ({}x{} cells), paths.csv ({} paths)", hist.nx, hist.ny, paths.len());
    Ok(())
}

fn endpoint_json(ep: &Endpoint) -> serde_json::Value {
    serde_json::to_value(ep).expect("endpoint serializes")
}

fn cmd_analyze(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let d = cfg.density()?;
    let census = d.census()?;
    let report = json!({
        "mode": d.mode(),
        "finite_zeroes": census.finite_zeroes.iter()
            .map(|(z, ord)| json!({"z": complex_json(*z), "order": ord})).collect::<Vec<_>>(),
        "poles": census.poles.iter()
            .map(|(z, ord)| json!({"z": complex_json(*z), "order": ord})).collect::<Vec<_>>(),
        "essential_singularities": census.essential_singularities.iter()
            .map(|z| complex_json(*z)).collect::<Vec<_>>(),
        "generalized_zero_approaches": census.generalized_zero_approaches.iter()
            .map(endpoint_json).collect::<Vec<_>>(),
        "n_closed": census.n_closed,
        "n_gamma": census.n_gamma,
    });
    out.write_json("census.json", "analyze", &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_sde(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let d = cfg.density()?;
    let n0 = cfg.sde.n_max.unwrap_or_else(|| sde::default_n_max(&d));
    let ladder = cfg
        .sde
        .n_max_list
        .clone()
        .unwrap_or_else(|| vec![n0 / 2, 3 * n0 / 4, n0].into_iter().filter(|n| *n >= 2).collect());
    let report = sde::dimension_check(&d, &ladder, cfg.sde.tol_rank)?;

    // basis at the largest window, doubling while unstabilized
    let mut n_max = *ladder.last().unwrap();
    let (n_sde, basis, residuals) = loop {
        let sys = sde::build_system(&d, n_max)?;
        match sde::corank(&sys, cfg.sde.tol_rank) {
            Ok((n_sde, basis)) => {
                let residuals: Vec<f64> = basis
                    .iter()
                    .map(|mv| {
                        sys.residuals(mv)
                            .iter()
                            .enumerate()
                            .map(|(i, r)| r.norm() / sys.row_scale(i).max(1e-300))
                            .fold(0.0f64, f64::max)
                    })
                    .collect();
                break (n_sde, basis, residuals);
            }
            Err(CoreError::NotStabilized { .. }) if n_max < 2048 => {
                n_max = (2 * n_max).min(2048);
            }
            Err(e) => return Err(e.into()),
        }
    };

    let report_json = json!({
        "n_gamma": report.n_gamma,
        "n_sde": n_sde,
        "stabilized": report.stabilized,
        "pass": report.pass && n_sde == report.n_gamma,
        "entries": report.entries,
        "n_max": n_max,
        "basis": basis,
        "residuals": residuals,
    });
    out.write_json("sde.json", "sde", &report_json)?;
    println!(
        "N_Gamma = {}, N_SDE = {n_sde}, stabilized = {}, pass = {}",
        report.n_gamma,
        report.stabilized,
        report.pass && n_sde == report.n_gamma,
    );
    if !report.stabilized {
        return Err(CoreError::NotStabilized {
            coranks: report.entries.iter().map(|e| e.n_sde).collect(),
        }
        .into());
    }
    Ok(())
}

fn cmd_integrate(cfg: &ExperimentConfig, out: &OutputWriter, normalize: bool) -> Result<()> {
    let d = cfg.density()?;
    let paths = cfg.resolve_paths(&d)?;
    let obs = cfg.observables(&d);
    let table = functional_table(&d, &paths, &obs, &cfg.quadrature, normalize);
    out.write_json("table.json", "integrate", &serde_json::to_value(&table)?)?;
    out.write_csv("table.csv", "integrate", &table.to_csv())?;
    let failed: Vec<String> = table
        .cells
        .iter()
        .flatten()
        .filter_map(|c| c.error.clone())
        .collect();
    println!("{} paths x {} observables -> table.csv", paths.len(), obs.len());
    if let Some(first) = failed.first() {
        return Err(CoreError::QuadratureFail {
            label: format!("{} cells failed; first: {first}", failed.len()),
            est_err: f64::NAN,
            tol: cfg.quadrature.tol,
        }
        .into());
    }
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let d = cfg.density()?;
    let obs = cfg.observables(&d);
    let result = langevin::run(&d, &obs, &cfg.cl)?;
    write_records(cfg, out, &result)?;
    println!(
        "{} walkers, {} samples per observable -> records.json, histogram.bin",
        result.n_walkers, result.records[0].n_samples
    );
    Ok(())
}

fn write_records(cfg: &ExperimentConfig, out: &OutputWriter, result: &langevin::RunResult) -> Result<()> {
    let d = cfg.density()?;
    // higher Fourier modes on the line have no decay guarantee; mark them
    let decay_unverified: Vec<String> = result
        .records
        .iter()
        .filter(|r| {
            d.mode() == Mode::Line
                && matches!(r.observable, Measurable::Obs(Observable::Exponential(k)) if k.abs() >= 2)
        })
        .map(|r| r.label.clone())
        .collect();
    out.write_json(
        "records.json",
        "simulate",
        &json!({"records": result.records, "decay_unverified": decay_unverified}),
    )?;
    let mut csv = String::from("observable,mean_re,mean_im,err_re,err_im,n_samples,tau_int\n");
    for r in &result.records {
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.3e},{:.3e},{},{:.4}\n",
            r.label, r.mean.re, r.mean.im, r.err.re, r.err.im, r.n_samples, r.tau_int
        ));
    }
    out.write_csv("records.csv", "simulate", &csv)?;
    out.write_histogram("histogram.bin", &result.histogram)?;
    Ok(())
}

fn load_records(out: &OutputWriter) -> Result<Vec<langevin::ExpectationRecord>> {
    let path = out.path("records.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("no simulation records at {}; run `simulate` first", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let records = value
        .get("data")
        .and_then(|d| d.get("records"))
        .ok_or_else(|| anyhow!("records.json has no data.records"))?;
    Ok(serde_json::from_value(records.clone())?)
}

fn cmd_fit(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let d = cfg.density()?;
    let records = load_records(out)?;
    let paths = cfg.resolve_paths(&d)?;
    let obs = cfg.observables(&d);
    let fit = fit_records(cfg, &d, &records, &paths, &obs)?;
    out.write_json("fit.json", "fit", &serde_json::to_value(&fit.result)?)?;
    println!("{}", analysis::fmt_fit(&fit.result));
    if let Some(over) = &fit.overcomplete {
        out.write_json("fit_overcomplete.json", "fit", &serde_json::to_value(over)?)?;
        println!(
            "overcomplete: b = {} (chi2/dof = {:.3})",
            analysis::fmt_value_err(over.b, over.err, 4),
            over.chi2 / over.dof.max(1) as f64
        );
    }
    Ok(())
}

struct FitOutput {
    result: analysis::FitResult,
    overcomplete: Option<analysis::OvercompleteFit>,
}

fn fit_records(
    cfg: &ExperimentConfig,
    d: &Density,
    records: &[langevin::ExpectationRecord],
    paths: &[PathSpec],
    obs: &[Observable],
) -> Result<FitOutput> {
    let table = functional_table(d, paths, obs, &cfg.quadrature, cfg.fit.normalize);
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for i in 0..paths.len() {
        basis.push(
            table
                .row_values(i)
                .ok_or_else(|| anyhow!("quadrature failed on basis path '{}'", paths[i].label))?,
        );
    }
    let matched: Vec<&langevin::ExpectationRecord> = obs
        .iter()
        .map(|o| {
            records
                .iter()
                .find(|r| r.observable == Measurable::Obs(*o))
                .ok_or_else(|| anyhow!("no record for observable {}", o.label()))
        })
        .collect::<Result<_>>()?;
    let result = analysis::fit(
        &matched,
        &basis,
        cfg.fit.normalize,
        cfg.fit.bootstrap,
        cfg.fit.bootstrap_seed,
    )?;

    let overcomplete = if cfg.fit.overcomplete_rho && paths.len() == 2 && d.mode() == Mode::Line {
        let rho_path = real_line_path(0.0, 2.0);
        let rho_table = functional_table(d, &[rho_path], obs, &cfg.quadrature, true);
        let t_rho = rho_table
            .row_values(0)
            .ok_or_else(|| anyhow!("quadrature failed on the real-line functional"))?;
        Some(analysis::fit_overcomplete_real(
            &matched,
            &basis[0],
            &basis[1],
            &t_rho,
            cfg.fit.bootstrap,
            cfg.fit.bootstrap_seed,
        )?)
    } else {
        None
    };
    Ok(FitOutput { result, overcomplete })
}

fn cmd_flux(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let d = cfg.density()?;
    let hist = out.read_histogram("histogram.bin")?;
    let mut curves: Vec<(String, FluxCurve)> = cfg
        .flux
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("curve{i:02}"), curve_of(c)))
        .collect();
    curves.extend(random_curves(&d, &hist, cfg.flux.random, cfg.flux.random_seed));

    let mut results = Vec::new();
    for (label, curve) in &curves {
        let r = analysis::flux(&hist, &d, curve)?;
        println!(
            "{label}: flux = {:+.3e} +- {:.3e} ({})",
            r.net_flux,
            r.err,
            if r.net_flux.abs() <= 3.0 * r.err { "ok" } else { "VIOLATION" }
        );
        results.push(json!({erase_label(label): {"net_flux": r.net_flux, "err": r.err, "n_points": r.n_points}}));
    }
    out.write_json("flux.json", "flux", &serde_json::Value::Array(results))?;
    Ok(())
}

fn erase_label(l: &str) -> String {
    l.to_string()
}

/// Random admissible test curves inside the populated histogram region.
fn random_curves(
    d: &Density,
    hist: &pathforms::Histogram,
    count: usize,
    seed: u64,
) -> Vec<(String, FluxCurve)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves = Vec::new();
    let singular = d.singular_points();
    let margin = 3.0 * (hist.dx() + hist.dy());
    let mut attempts = 0;
    while curves.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        match d.mode() {
            Mode::Cylinder => {
                if hist.y1 - hist.y0 <= 2.0 * margin {
                    break;
                }
                let y: f64 = rng.random_range(hist.y0 + margin..hist.y1 - margin);
                let ok = singular
                    .iter()
                    .chain(d.census().ok().iter().flat_map(|c| {
                        // drift singularities include the zeroes
                        c.finite_zeroes.iter().map(|(z, _)| z)
                    }))
                    .all(|s| (s.im - y).abs() > margin);
                if ok {
                    curves.push((format!("rand{:02}", curves.len()), FluxCurve::CylinderLine { y }));
                }
            }
            Mode::Line => {
                if hist.x1 - hist.x0 <= 4.0 * margin || hist.y1 - hist.y0 <= 4.0 * margin {
                    break; // grid too coarse for interior rectangles
                }
                let x0 = rng.random_range(hist.x0 + margin..hist.x1 - 2.0 * margin);
                let y0 = rng.random_range(hist.y0 + margin..hist.y1 - 2.0 * margin);
                let x1 = rng.random_range(x0 + margin..hist.x1 - margin);
                let y1 = rng.random_range(y0 + margin..hist.y1 - margin);
                let corners = [
                    Complex64::new(x0, y0),
                    Complex64::new(x1, y0),
                    Complex64::new(x1, y1),
                    Complex64::new(x0, y1),
                ];
                let zeroes: Vec<Complex64> = d
                    .census()
                    .map(|c| c.finite_zeroes.iter().map(|(z, _)| *z).collect())
                    .unwrap_or_default();
                let ok = singular.iter().chain(zeroes.iter()).all(|s| {
                    corners.iter().zip(corners.iter().cycle().skip(1)).all(|(a, b)| {
                        pathforms::cnum::point_segment_distance(*s, *a, *b) > margin
                    })
                });
                if ok {
                    curves.push((
                        format!("rand{:02}", curves.len()),
                        FluxCurve::Closed(corners.to_vec()),
                    ));
                }
            }
        }
    }
    curves
}

fn cmd_table1(cfg: &ExperimentConfig, out: &OutputWriter) -> Result<()> {
    let d = cfg.density()?;
    if d.mode() != Mode::Line {
        return Err(anyhow!("table1 reproduces the line-mode benchmark table"));
    }
    let paths = cfg.resolve_paths(&d)?;
    if paths.len() != 2 {
        return Err(anyhow!(
            "table1 needs a two-path density (got {} spanning paths)",
            paths.len()
        ));
    }
    // order as (plus, minus) by the outgoing ray direction
    let angle_of = |p: &PathSpec| match &p.kind {
        PathKind::Open { end: Endpoint::InfinityRay { angle }, .. } => angle.cos(),
        _ => 0.0,
    };
    let (plus, minus) = if angle_of(&paths[0]) > angle_of(&paths[1]) {
        (paths[0].clone(), paths[1].clone())
    } else {
        (paths[1].clone(), paths[0].clone())
    };
    let obs = cfg.observables(&d);
    let labels: Vec<String> = obs.iter().map(|o| o.label()).collect();

    // quadrature columns
    let rho_path = real_line_path(0.0, 2.0);
    let all_paths = vec![plus.clone(), minus.clone(), rho_path];
    let table = functional_table(&d, &all_paths, &obs, &cfg.quadrature, true);
    let t_plus = table.row_values(0).ok_or_else(|| anyhow!("T+ quadrature failed"))?;
    let t_minus = table.row_values(1).ok_or_else(|| anyhow!("T- quadrature failed"))?;
    let t_rho = table.row_values(2).ok_or_else(|| anyhow!("T_rho quadrature failed"))?;

    // CL column
    let result = langevin::run(&d, &obs, &cfg.cl)?;
    write_records(cfg, out, &result)?;
    let records: Vec<&langevin::ExpectationRecord> = result.records.iter().collect();

    // fits
    let fit = analysis::fit(
        &records,
        &[t_plus.clone(), t_minus.clone()],
        true,
        cfg.fit.bootstrap,
        cfg.fit.bootstrap_seed,
    )?;
    let over = analysis::fit_overcomplete_real(
        &records,
        &t_plus,
        &t_minus,
        &t_rho,
        cfg.fit.bootstrap,
        cfg.fit.bootstrap_seed,
    )?;
    let a = &fit.coefficients;
    let combo: Vec<Complex64> = (0..obs.len())
        .map(|j| a[0] * t_plus[j] + a[1] * t_minus[j])
        .collect();

    // paper-style text table
    let fmt = |v: Complex64| analysis::fmt_complex_paper(v, 4);
    let cl_cells: Vec<String> = result
        .records
        .iter()
        .map(|r| {
            let digits = 4;
            if r.mean.re.abs() < 5e-5 {
                format!("i {}", analysis::fmt_value_err(r.mean.im, r.err.im, digits))
            } else if r.mean.im.abs() < 5e-5 {
                analysis::fmt_value_err(r.mean.re, r.err.re, digits)
            } else {
                format!(
                    "{} + i {}",
                    analysis::fmt_value_err(r.mean.re, r.err.re, digits),
                    analysis::fmt_value_err(r.mean.im, r.err.im, digits)
                )
            }
        })
        .collect();
    let text = analysis::render_table(
        &labels,
        &[
            ("CL".into(), cl_cells),
            ("a+T+ + a-T-".into(), combo.iter().map(|v| fmt(*v)).collect()),
            ("T+".into(), t_plus.iter().map(|v| fmt(*v)).collect()),
            ("T-".into(), t_minus.iter().map(|v| fmt(*v)).collect()),
            ("T_rho".into(), t_rho.iter().map(|v| fmt(*v)).collect()),
        ],
    );
    println!("{text}");
    println!(
        "a+ = {} + i {},  a- = {} + i {},  |sum - 1| = {:.1e}",
        analysis::fmt_value_err(a[0].re, fit.errors[0].re, 4),
        analysis::fmt_value_err(a[0].im, fit.errors[0].im, 4),
        analysis::fmt_value_err(a[1].re, fit.errors[1].re, 4),
        analysis::fmt_value_err(a[1].im, fit.errors[1].im, 4),
        fit.constraint_residual
    );
    println!("b = {} (overcomplete real weights)", analysis::fmt_value_err(over.b, over.err, 4));

    let report = json!({
        "observables": labels,
        "t_plus": t_plus.iter().map(|v| complex_json(*v)).collect::<Vec<_>>(),
        "t_minus": t_minus.iter().map(|v| complex_json(*v)).collect::<Vec<_>>(),
        "t_rho": t_rho.iter().map(|v| complex_json(*v)).collect::<Vec<_>>(),
        "cl": result.records,
        "fit": fit,
        "overcomplete": over,
        "table_text": text,
    });
    out.write_json("table1.json", "table1", &report)?;
    Ok(())
}
