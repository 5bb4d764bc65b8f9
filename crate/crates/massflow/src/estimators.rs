//! Streaming Monte Carlo statistics: mergeable moment accumulators, empirical
//! proportions, log-log exponent fits and the quadratic-variation quadrature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{normal_quantile, t_critical};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("accumulator layouts differ: {0}")]
    LayoutMismatch(String),
    #[error("exponent fit needs at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}

/// Count, mean and central moment sums up to fourth order. Single values
/// stream in with Welford updates; partial accumulators combine with the
/// parallel (Chan/Pebay) merge, so accumulation order never changes results
/// beyond floating error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;

        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;

        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean, `sqrt(M2 / (n (n-1)))`.
    pub fn se_mean(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n as f64 * (self.n - 1) as f64)).sqrt()
        }
    }

    /// Normal-approximation CI for the mean at confidence `conf`.
    pub fn mean_ci(&self, conf: f64) -> (f64, f64) {
        let z = normal_quantile(0.5 + conf / 2.0);
        let half = z * self.se_mean();
        (self.mean - half, self.mean + half)
    }

    /// Fourth central moment estimate.
    pub fn fourth_central(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m4 / self.n as f64
        }
    }

    /// Standard error of the sample variance via the fourth-moment formula
    /// `Var(s^2) = (mu4 - sigma^4 (n-3)/(n-1)) / n`.
    pub fn se_variance(&self) -> f64 {
        if self.n < 4 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let s2 = self.variance();
        let mu4 = self.fourth_central();
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }

    /// Normal-approximation CI for the variance.
    pub fn variance_ci(&self, conf: f64) -> (f64, f64) {
        let z = normal_quantile(0.5 + conf / 2.0);
        let half = z * self.se_variance();
        (self.variance() - half, self.variance() + half)
    }
}

/// Bernoulli counter for empirical probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CountAccumulator {
    pub n: u64,
    pub hits: u64,
}

impl CountAccumulator {
    pub fn push(&mut self, hit: bool) {
        self.n += 1;
        self.hits += hit as u64;
    }

    pub fn merge(&mut self, other: &CountAccumulator) {
        self.n += other.n;
        self.hits += other.hits;
    }

    pub fn proportion(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.hits as f64 / self.n as f64
        }
    }
}

/// Joint accumulator for two observables of the same replicate; merges like
/// [`MomentAccumulator`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BivariateAccumulator {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    m2x: f64,
    m2y: f64,
    cxy: f64,
}

impl BivariateAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        // dx uses the old mean, the second factor the updated one.
        self.m2x += dx * (x - self.mean_x);
        self.m2y += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &BivariateAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.m2x += other.m2x + dx * dx * na * nb / n;
        self.m2y += other.m2y + dy * dy * na * nb / n;
        self.cxy += other.cxy + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn correlation(&self) -> f64 {
        if self.n < 2 || self.m2x == 0.0 || self.m2y == 0.0 {
            0.0
        } else {
            self.cxy / (self.m2x * self.m2y).sqrt()
        }
    }

    /// Fisher-z confidence interval for the correlation.
    pub fn correlation_ci(&self, conf: f64) -> (f64, f64) {
        if self.n < 4 {
            return (-1.0, 1.0);
        }
        let r = self.correlation().clamp(-0.999_999, 0.999_999);
        let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
        let half = normal_quantile(0.5 + conf / 2.0) / ((self.n - 3) as f64).sqrt();
        ((z - half).tanh(), (z + half).tanh())
    }
}

/// Accumulators for one observable along a fixed time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveAccumulator {
    times: Vec<f64>,
    cells: Vec<MomentAccumulator>,
}

impl CurveAccumulator {
    pub fn new(times: Vec<f64>) -> Self {
        let cells = vec![MomentAccumulator::new(); times.len()];
        Self { times, cells }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn push(&mut self, time_index: usize, value: f64) {
        self.cells[time_index].push(value);
    }

    pub fn cell(&self, time_index: usize) -> &MomentAccumulator {
        &self.cells[time_index]
    }

    pub fn merge(&mut self, other: &CurveAccumulator) -> Result<(), EstimatorError> {
        if self.times != other.times {
            return Err(EstimatorError::LayoutMismatch(
                "time grids differ".into(),
            ));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
        Ok(())
    }

    /// Mean curve with normal-approximation CIs at confidence `conf`.
    pub fn estimate(&self, observable: &str, conf: f64) -> CurveEstimate {
        let mut est = CurveEstimate {
            observable: observable.to_string(),
            points: Vec::with_capacity(self.times.len()),
        };
        for (t, c) in self.times.iter().zip(&self.cells) {
            let (lo, hi) = c.mean_ci(conf);
            est.points.push(CurvePoint {
                t: *t,
                n: c.count(),
                mean: c.mean(),
                se: c.se_mean(),
                ci_lo: lo,
                ci_hi: hi,
            });
        }
        est
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub n: u64,
    pub mean: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// A mean curve with confidence intervals, ready for CSV export or fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub observable: String,
    pub points: Vec<CurvePoint>,
}

impl CurveEstimate {
    pub fn fit_points(&self) -> Vec<FitPoint> {
        self.points
            .iter()
            .map(|p| FitPoint {
                t: p.t,
                y: p.mean,
                se: p.se,
                n: p.n,
            })
            .collect()
    }
}

/// One usable point for a log-log fit.
#[derive(Debug, Clone, Copy)]
pub struct FitPoint {
    pub t: f64,
    pub y: f64,
    pub se: f64,
    pub n: u64,
}

/// Result of a weighted least-squares fit of `ln y` on `ln t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub t_range: (f64, f64),
    pub points_used: usize,
    pub excluded_nonpositive: usize,
}

/// Minimum replicate count for a time point to enter an exponent fit.
pub const FIT_MIN_REPLICATES: u64 = 100;

/// Weighted least squares of `ln y` on `ln t` over `t` in `[t_min, t_max]`,
/// weights `(y/se)^2` (delta-method variance of `ln y`). Points with
/// non-positive `y` are excluded; if any usable point reports zero standard
/// error the fit falls back to ordinary least squares with a residual-based
/// standard error.
pub fn fit_exponent(
    points: &[FitPoint],
    t_min: f64,
    t_max: f64,
) -> Result<ExponentFit, EstimatorError> {
    let mut excluded = 0usize;
    let usable: Vec<&FitPoint> = points
        .iter()
        .filter(|p| p.t >= t_min && p.t <= t_max && p.n >= FIT_MIN_REPLICATES)
        .filter(|p| {
            if p.y > 0.0 {
                true
            } else {
                excluded += 1;
                false
            }
        })
        .collect();
    if usable.len() < 5 {
        return Err(EstimatorError::InsufficientPoints {
            needed: 5,
            got: usable.len(),
        });
    }

    let weighted = usable.iter().all(|p| p.se > 0.0);
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for p in &usable {
        let w = if weighted {
            let rel = p.se / p.y;
            1.0 / (rel * rel)
        } else {
            1.0
        };
        let x = p.t.ln();
        let y = p.y.ln();
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let delta = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let y_bar = sy / sw;
    for p in &usable {
        let w = if weighted {
            let rel = p.se / p.y;
            1.0 / (rel * rel)
        } else {
            1.0
        };
        let x = p.t.ln();
        let y = p.y.ln();
        let r = y - (intercept + slope * x);
        ss_res += w * r * r;
        ss_tot += w * (y - y_bar) * (y - y_bar);
    }
    let stderr = if weighted {
        (sw / delta).sqrt()
    } else {
        // Residual variance estimate with n-2 degrees of freedom.
        let dof = (usable.len() - 2) as f64;
        (ss_res / dof * sw / delta).sqrt()
    };
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let t_used = usable
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
            (acc.0.min(p.t), acc.1.max(p.t))
        });
    Ok(ExponentFit {
        slope,
        intercept,
        stderr,
        r_squared,
        t_range: t_used,
        points_used: usable.len(),
        excluded_nonpositive: excluded,
    })
}

/// Result of [`qv_integral`].
#[derive(Debug, Clone)]
pub struct QvIntegral {
    pub value: f64,
    pub warning: Option<String>,
}

/// Integrate a positive curve sampled at `times` from 0 to `t` by the
/// trapezoid rule, handling the panel `[0, t_0]` by local power-law
/// extrapolation (`f ~ A s^{-p}`, integrable for `p < 1`). Falls back to the
/// endpoint rule with a warning when the grid has no sub-panels near zero or
/// the fitted exponent is non-integrable.
pub fn qv_integral(times: &[f64], values: &[f64], t: f64) -> QvIntegral {
    assert_eq!(times.len(), values.len());
    assert!(times.len() >= 2, "need at least two grid points");
    assert!(times.windows(2).all(|w| w[0] < w[1] && w[0] > 0.0));
    assert!(t > 0.0 && t <= times[times.len() - 1] * (1.0 + 1e-12));

    let mut warning = None;

    // First panel [0, times[0]] by power-law extrapolation from the first two
    // points.
    let (t0, f0) = (times[0], values[0]);
    let (t1, f1) = (times[1], values[1]);
    let mut first_panel = f0 * t0;
    if f0 > 0.0 && f1 > 0.0 {
        let p = (f0 / f1).ln() / (t1 / t0).ln();
        if p < 1.0 {
            first_panel = f0 * t0 / (1.0 - p);
        } else {
            warning = Some(format!(
                "extrapolated exponent {p:.3} >= 1 near zero; endpoint rule used"
            ));
        }
    } else {
        warning = Some("non-positive curve values near zero; endpoint rule used".into());
    }
    if times[0] > 0.5 * t {
        warning = Some(format!(
            "grid has no sub-panels near zero (first point {t0} vs t {t})"
        ));
        first_panel = f0 * t0.min(t);
    }

    if t <= times[0] {
        return QvIntegral {
            value: first_panel * (t / times[0]),
            warning,
        };
    }

    let mut acc = first_panel;
    let mut i = 0;
    while i + 1 < times.len() && times[i + 1] <= t * (1.0 + 1e-12) {
        acc += 0.5 * (values[i] + values[i + 1]) * (times[i + 1].min(t) - times[i]);
        i += 1;
    }
    if times[i] < t && i + 1 < times.len() {
        // Partial last panel to t with interpolated integrand.
        let frac = (t - times[i]) / (times[i + 1] - times[i]);
        let ft = values[i] + frac * (values[i + 1] - values[i]);
        acc += 0.5 * (values[i] + ft) * (t - times[i]);
    }
    QvIntegral { value: acc, warning }
}

/// Student-t confidence interval over a small set of batch statistics.
pub fn t_ci(values: &[f64], conf: f64) -> (f64, f64, f64) {
    assert!(values.len() >= 2);
    let mut acc = MomentAccumulator::new();
    for &v in values {
        acc.push(v);
    }
    let half = t_critical(conf, values.len() as u64 - 1) * acc.se_mean();
    (acc.mean(), acc.mean() - half, acc.mean() + half)
}

/// Number of replicate batches used for batch-based confidence intervals.
pub const DEFAULT_BATCHES: usize = 30;
