//! Streaming statistics for trajectory ensembles.
//!
//! Accumulators hold plain sums so that partial results from fixed-size
//! trajectory chunks can be merged in a fixed order, giving bit-identical
//! ensemble averages for any worker count.

use serde::{Deserialize, Serialize};

/// Mean and standard error of one scalar estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAccumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean, sqrt(s^2 / n) with the unbiased variance.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

/// Mean and standard error of a ratio estimator x̄/ȳ from paired samples,
/// with the delta-method error that accounts for the x-y correlation:
/// var(x̄/ȳ) ~ (s_xx - 2 r s_xy + r^2 s_yy) / (n ȳ^2).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioAccumulator {
    pub n: u64,
    pub sum_x: f64,
    pub sum_y: f64,
    pub sum_xx: f64,
    pub sum_yy: f64,
    pub sum_xy: f64,
}

impl RatioAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sum_x += x;
        self.sum_y += y;
        self.sum_xx += x * x;
        self.sum_yy += y * y;
        self.sum_xy += x * y;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum_x += other.sum_x;
        self.sum_y += other.sum_y;
        self.sum_xx += other.sum_xx;
        self.sum_yy += other.sum_yy;
        self.sum_xy += other.sum_xy;
    }

    pub fn mean_x(&self) -> f64 {
        self.sum_x / self.n as f64
    }

    pub fn mean_y(&self) -> f64 {
        self.sum_y / self.n as f64
    }

    pub fn ratio(&self) -> f64 {
        self.sum_x / self.sum_y
    }

    pub fn ratio_stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let mx = self.sum_x / n;
        let my = self.sum_y / n;
        let r = mx / my;
        let sxx = (self.sum_xx - n * mx * mx) / (n - 1.0);
        let syy = (self.sum_yy - n * my * my) / (n - 1.0);
        let sxy = (self.sum_xy - n * mx * my) / (n - 1.0);
        let var = (sxx - 2.0 * r * sxy + r * r * syy) / (n * my * my);
        var.max(0.0).sqrt()
    }
}
