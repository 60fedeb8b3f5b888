//! Weighted 2-D visit histogram of the walker ensemble.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    /// raw visit counts, row-major with `x` fastest
    #[serde(skip)]
    pub counts: Vec<u64>,
    pub n_total: u64,
    pub out_of_range: u64,
    /// variance inflation factor from sample autocorrelation
    pub acf_inflation: f64,
}

impl Histogram {
    pub fn new(nx: usize, ny: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Histogram {
            nx,
            ny,
            x0,
            x1,
            y0,
            y1,
            counts: vec![0; nx * ny],
            n_total: 0,
            out_of_range: 0,
            acf_inflation: 1.0,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn accumulate(&mut self, x: f64, y: f64) {
        self.n_total += 1;
        let ix = ((x - self.x0) / self.dx()).floor();
        let iy = ((y - self.y0) / self.dy()).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            self.out_of_range += 1;
            return;
        }
        self.counts[iy as usize * self.nx + ix as usize] += 1;
    }

    pub fn merge_counts(&mut self, other_counts: &[u64], n: u64, out: u64) {
        for (a, b) in self.counts.iter_mut().zip(other_counts) {
            *a += b;
        }
        self.n_total += n;
        self.out_of_range += out;
    }

    /// Estimated density `P` at a cell, normalized to unit mass over the grid.
    pub fn density(&self, ix: usize, iy: usize) -> f64 {
        self.counts[iy * self.nx + ix] as f64 / (self.n_total as f64 * self.cell_area())
    }

    /// Variance of the density estimate (shot noise times the
    /// autocorrelation inflation).
    pub fn density_var(&self, ix: usize, iy: usize) -> f64 {
        let na = self.n_total as f64 * self.cell_area();
        self.counts[iy * self.nx + ix] as f64 * self.acf_inflation / (na * na)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x0 + (ix as f64 + 0.5) * self.dx(),
            self.y0 + (iy as f64 + 0.5) * self.dy(),
        )
    }

    /// Fraction of samples that landed on the grid.
    pub fn coverage(&self) -> f64 {
        if self.n_total == 0 {
            return 0.0;
        }
        1.0 - self.out_of_range as f64 / self.n_total as f64
    }

    /// Write as a JSON header line followed by the counts as little-endian
    /// 64-bit floats.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header = serde_json::to_string(self).map_err(io::Error::other)?;
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        for &c in &self.counts {
            w.write_all(&(c as f64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| io::Error::other("missing histogram header"))?;
        let mut hist: Histogram = serde_json::from_slice(&bytes[..nl]).map_err(io::Error::other)?;
        let data = &bytes[nl + 1..];
        if data.len() != hist.nx * hist.ny * 8 {
            return Err(io::Error::other("histogram payload size mismatch"));
        }
        hist.counts = data
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()) as u64)
            .collect();
        Ok(hist)
    }
}
