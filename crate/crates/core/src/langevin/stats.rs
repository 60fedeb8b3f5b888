//! Streaming log-binning statistics for correlated complex time series.
//!
//! Level `i` holds bins of `2^i` consecutive samples. The standard error of
//! the bin means grows with the bin size until bins decorrelate; the plateau
//! value is the honest error and its ratio to the naive error gives the
//! integrated autocorrelation time.

use num_complex::Complex64;

const MAX_LEVELS: usize = 40;
/// Levels with fewer bins than this are too noisy to trust.
const MIN_BINS: u64 = 16;

#[derive(Debug, Clone, Default)]
struct Level {
    buf: Option<Complex64>,
    n: u64,
    sum: Complex64,
    /// component-wise sums of squares of bin means
    sumsq_re: f64,
    sumsq_im: f64,
}

impl Level {
    fn record(&mut self, x: Complex64) -> Option<Complex64> {
        self.n += 1;
        self.sum += x;
        self.sumsq_re += x.re * x.re;
        self.sumsq_im += x.im * x.im;
        match self.buf.take() {
            None => {
                self.buf = Some(x);
                None
            }
            Some(prev) => Some(0.5 * (prev + x)),
        }
    }

    /// Standard error of the mean from this level's bin means.
    fn err(&self) -> Option<(f64, f64)> {
        if self.n < MIN_BINS {
            return None;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var_re = ((self.sumsq_re / n - mean.re * mean.re) * n / (n - 1.0)).max(0.0);
        let var_im = ((self.sumsq_im / n - mean.im * mean.im) * n / (n - 1.0)).max(0.0);
        Some(((var_re / n).sqrt(), (var_im / n).sqrt()))
    }
}

#[derive(Debug, Clone)]
pub struct Binning {
    levels: Vec<Level>,
}

impl Default for Binning {
    fn default() -> Self {
        Binning { levels: vec![Level::default()] }
    }
}

/// Result of one walker's binning analysis.
#[derive(Debug, Clone, Copy)]
pub struct BinnedStats {
    pub mean: Complex64,
    /// plateau standard error, per component
    pub err: Complex64,
    /// integrated autocorrelation time in sample units (0.5 = uncorrelated)
    pub tau_samples: f64,
    pub n: u64,
}

impl Binning {
    pub fn push(&mut self, x: Complex64) {
        let mut carry = Some(x);
        let mut level = 0;
        while let Some(v) = carry {
            if level == self.levels.len() {
                if level >= MAX_LEVELS {
                    break;
                }
                self.levels.push(Level::default());
            }
            carry = self.levels[level].record(v);
            level += 1;
        }
    }

    pub fn finalize(&self) -> BinnedStats {
        let base = &self.levels[0];
        let n = base.n;
        let mean = if n > 0 { base.sum / n as f64 } else { Complex64::ZERO };
        let naive = base.err().unwrap_or((0.0, 0.0));
        let mut err = naive;
        for level in &self.levels {
            if let Some(e) = level.err() {
                err.0 = err.0.max(e.0);
                err.1 = err.1.max(e.1);
            }
        }
        // err_plateau^2 = 2 tau_int * err_naive^2 (tau in sample units)
        let ratio = |p: f64, nv: f64| if nv > 0.0 { (p / nv).powi(2) * 0.5 } else { 0.5 };
        let tau_samples = ratio(err.0, naive.0).max(ratio(err.1, naive.1));
        BinnedStats { mean, err: Complex64::new(err.0, err.1), tau_samples, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncorrelated_samples_have_tau_half() {
        // deterministic pseudo-noise
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut bin = Binning::default();
        for _ in 0..65536 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            bin.push(Complex64::new(u, -2.0 * u));
        }
        let s = bin.finalize();
        assert!(s.mean.norm() < 0.01);
        assert!(s.tau_samples < 1.0, "tau = {}", s.tau_samples);
        // err close to sigma/sqrt(N) with sigma^2 = 1/12
        let expect = (1.0f64 / 12.0 / 65536.0).sqrt();
        assert!((s.err.re - expect).abs() < 0.5 * expect, "err = {} expect {}", s.err.re, expect);
    }

    #[test]
    fn correlated_samples_inflate_error() {
        // AR(1) with phi = 0.9: tau_int ≈ (1+phi)/(2(1-phi)) = 9.5
        let mut state = 1234567u64;
        let mut x = 0.0f64;
        let mut bin = Binning::default();
        for _ in 0..262144 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            x = 0.9 * x + u;
            bin.push(Complex64::new(x, 0.0));
        }
        let s = bin.finalize();
        assert!(s.tau_samples > 4.0, "tau = {}", s.tau_samples);
    }
}
