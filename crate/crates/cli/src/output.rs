//! Output artifacts with embedded version and resolved configuration.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use num_complex::Complex64;
use serde_json::json;

use crate::config::ExperimentConfig;
use pathforms::Histogram;

pub struct OutputWriter {
    dir: PathBuf,
    resolved: serde_json::Value,
}

pub fn complex_json(z: Complex64) -> serde_json::Value {
    json!([z.re, z.im])
}

impl OutputWriter {
    pub fn new(dir: PathBuf, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(OutputWriter { dir, resolved: serde_json::to_value(cfg.resolved())? })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json(&self, name: &str, command: &str, data: &serde_json::Value) -> Result<()> {
        let doc = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": self.resolved,
            "data": data,
        });
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn write_csv(&self, name: &str, command: &str, body: &str) -> Result<()> {
        let header = format!(
            "# pathforms {} {}\n# config {}\n",
            env!("CARGO_PKG_VERSION"),
            command,
            serde_json::to_string(&self.resolved)?
        );
        let path = self.path(name);
        fs::write(&path, format!("{header}{body}"))
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn write_histogram(&self, name: &str, hist: &Histogram) -> Result<()> {
        use std::io::Write;
        let path = self.path(name);
        let file = fs::File::create(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        // same layout as Histogram::write_binary, with provenance keys added
        // to the JSON header (readers ignore unknown keys)
        let mut header = serde_json::to_value(hist)?;
        header["version"] = json!(env!("CARGO_PKG_VERSION"));
        header["config"] = self.resolved.clone();
        w.write_all(serde_json::to_string(&header)?.as_bytes())?;
        w.write_all(b"\n")?;
        for &count in &hist.counts {
            w.write_all(&(count as f64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_histogram(&self, name: &str) -> Result<Histogram> {
        let path = self.path(name);
        let file = fs::File::open(&path).with_context(|| {
            format!("no histogram at {}; run `simulate` first", path.display())
        })?;
        Ok(Histogram::read_binary(std::io::BufReader::new(file))?)
    }
}

/// Gridded plot data for external tooling: cell centers and density values.
pub fn histogram_csv(hist: &Histogram) -> String {
    let mut out = String::from("x,y,density\n");
    for iy in 0..hist.ny {
        for ix in 0..hist.nx {
            let (x, y) = hist.cell_center(ix, iy);
            out.push_str(&format!("{x:.6},{y:.6},{:.8e}\n", hist.density(ix, iy)));
        }
    }
    out
}
