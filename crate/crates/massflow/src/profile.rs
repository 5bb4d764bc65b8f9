//! Non-decreasing initial profiles on a mass interval `[0, b]`.
//!
//! A [`StepProfile`] is the exactly-simulable initial condition: finitely many
//! pieces of positive mass, each with a position value. A
//! [`TabulatedProfile`] is a general non-decreasing function (sampled or from
//! an analytic family) that is reduced to a [`StepProfile`] by dyadic
//! conditional averaging before simulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile needs at least one piece")]
    Empty,
    #[error("breakpoints must start at 0, be strictly increasing and finite")]
    BadBreakpoints,
    #[error("values must be non-decreasing and finite")]
    NonMonotoneValues,
    #[error("breakpoint/value lengths inconsistent: {0} intervals vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    Domain(String),
    #[error("invalid profile spec: {0}")]
    Spec(String),
}

/// Which one-sided increment of `g` to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// Anything that can be evaluated as a non-decreasing function of the mass
/// coordinate.
pub trait MassFunction {
    fn total_mass(&self) -> f64;
    /// Right-continuous evaluation at `u` in `[0, total_mass]`.
    fn evaluate(&self, u: f64) -> f64;

    /// `g(u+r) - g(u)` (right) or `g(u) - g(u-r)` (left).
    fn increment(&self, u: f64, r: f64, side: Side) -> Result<f64, ProfileError> {
        let b = self.total_mass();
        match side {
            Side::Right => {
                if !(r > 0.0 && r < b - u) {
                    return Err(ProfileError::Domain(format!(
                        "right increment needs 0 < r < b - u (r={r}, u={u}, b={b})"
                    )));
                }
                Ok(self.evaluate(u + r) - self.evaluate(u))
            }
            Side::Left => {
                if !(r > 0.0 && r < u) {
                    return Err(ProfileError::Domain(format!(
                        "left increment needs 0 < r < u (r={r}, u={u})"
                    )));
                }
                Ok(self.evaluate(u) - self.evaluate(u - r))
            }
        }
    }
}

/// Values closer than this merge during canonicalization, so floating-point
/// ties collapse deterministically.
pub const VALUE_MERGE_TOL: f64 = 1e-12;

/// A non-decreasing step function on `[0, b]`: pieces
/// `[a_{k-1}, a_k)` with positions `x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ProfileError> {
        if values.is_empty() {
            return Err(ProfileError::Empty);
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(ProfileError::LengthMismatch(
                breakpoints.len().saturating_sub(1),
                values.len(),
            ));
        }
        if breakpoints[0] != 0.0
            || !breakpoints.iter().all(|a| a.is_finite())
            || !breakpoints.windows(2).all(|w| w[0] < w[1])
        {
            return Err(ProfileError::BadBreakpoints);
        }
        if !values.iter().all(|v| v.is_finite()) || !values.windows(2).all(|w| w[0] <= w[1]) {
            return Err(ProfileError::NonMonotoneValues);
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Uniform dyadic profile: the level-`n` conditional average of
    /// `g(u) = u` on `[0, b]`; piece values are cell midpoints.
    pub fn uniform_dyadic(level: u32, b: f64) -> Self {
        TabulatedProfile::uniform(b).dyadic_step_approximation(level)
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn piece_mass(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }

    /// Index of the piece whose half-open interval contains `u`; `u = b` maps
    /// to the last piece.
    pub fn piece_index(&self, u: f64) -> usize {
        let d = self.values.len();
        if u >= self.breakpoints[d] {
            return d - 1;
        }
        self.breakpoints.partition_point(|&a| a <= u).max(1) - 1
    }

    /// True when values are strictly increasing.
    pub fn is_canonical(&self) -> bool {
        self.values.windows(2).all(|w| w[0] < w[1])
    }

    /// Merge adjacent pieces whose values agree within [`VALUE_MERGE_TOL`],
    /// producing strictly increasing values. The merged value is the
    /// mass-weighted mean, which leaves exactly equal values untouched and
    /// preserves the integral.
    pub fn canonicalize(&self) -> StepProfile {
        let mut cuts: Vec<f64> = Vec::with_capacity(self.breakpoints.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.values.len());
        cuts.push(0.0);
        for k in 0..self.values.len() {
            let hi = self.breakpoints[k + 1];
            let v = self.values[k];
            let w = self.piece_mass(k);
            match vals.last_mut() {
                Some(last) if (v - *last).abs() <= VALUE_MERGE_TOL => {
                    if v != *last {
                        let w_prev = hi - w - cuts[cuts.len() - 2];
                        *last = (*last * w_prev + v * w) / (w_prev + w);
                    }
                    *cuts.last_mut().unwrap() = hi;
                }
                _ => {
                    vals.push(v);
                    cuts.push(hi);
                }
            }
        }
        StepProfile {
            breakpoints: cuts,
            values: vals,
        }
    }

    /// Level sets of positive length, one interval per distinct value.
    pub fn partition(&self) -> Partition {
        let c = if self.is_canonical() {
            self.clone()
        } else {
            self.canonicalize()
        };
        Partition {
            cuts: c.breakpoints,
            values: c.values,
        }
    }

    pub fn integral(&self) -> f64 {
        (0..self.values.len())
            .map(|k| self.values[k] * self.piece_mass(k))
            .sum()
    }

    /// `(int_0^b |g|^p du)^{1/p}`, exact piecewise.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        let s: f64 = (0..self.values.len())
            .map(|k| self.values[k].abs().powf(p) * self.piece_mass(k))
            .sum();
        s.powf(1.0 / p)
    }

    /// L2 projection of `h` onto the sigma-algebra generated by this profile:
    /// the block average of `h` on each level set.
    pub fn project(&self, h: &PiecewiseConstant) -> PiecewiseConstant {
        let part = self.partition();
        let values = part
            .intervals()
            .map(|(lo, hi)| h.integral_over(lo, hi) / (hi - lo))
            .collect();
        PiecewiseConstant {
            breakpoints: part.cuts,
            values,
        }
    }

    /// View this profile as a general piecewise-constant function.
    pub fn as_piecewise(&self) -> PiecewiseConstant {
        PiecewiseConstant {
            breakpoints: self.breakpoints.clone(),
            values: self.values.clone(),
        }
    }
}

impl MassFunction for StepProfile {
    fn total_mass(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    fn evaluate(&self, u: f64) -> f64 {
        self.values[self.piece_index(u)]
    }
}

/// Partition of `[0, b]` into ordered half-open level sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cuts: Vec<f64>,
    values: Vec<f64>,
}

impl Partition {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn total_mass(&self) -> f64 {
        *self.cuts.last().unwrap()
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.cuts.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// True iff the interior of every interval of `finer` lies inside some
/// interval of `coarser`.
pub fn partition_leq(finer: &Partition, coarser: &Partition) -> bool {
    assert!(
        (finer.total_mass() - coarser.total_mass()).abs()
            <= 1e-9 * finer.total_mass().max(coarser.total_mass()),
        "partitions of different total mass are not comparable"
    );
    let mut j = 0;
    for (lo, hi) in finer.intervals() {
        // Coarser intervals are ordered; advance until one could contain (lo, hi).
        while j < coarser.values.len() && coarser.cuts[j + 1] < hi {
            j += 1;
        }
        if j == coarser.values.len() || coarser.cuts[j] > lo {
            return false;
        }
    }
    true
}

/// An arbitrary piecewise-constant function on `[0, b]` (test functions `h`,
/// projections). Unlike [`StepProfile`], values need not be monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ProfileError> {
        if values.is_empty() {
            return Err(ProfileError::Empty);
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(ProfileError::LengthMismatch(
                breakpoints.len().saturating_sub(1),
                values.len(),
            ));
        }
        if !breakpoints.iter().all(|a| a.is_finite())
            || !breakpoints.windows(2).all(|w| w[0] < w[1])
        {
            return Err(ProfileError::BadBreakpoints);
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(ProfileError::NonMonotoneValues);
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Indicator of `[c, d)` viewed inside the domain `[0, b]`.
    pub fn indicator(c: f64, d: f64, b: f64) -> Self {
        assert!(0.0 <= c && c < d && d <= b);
        let mut breakpoints = vec![0.0];
        let mut values = vec![];
        if c > 0.0 {
            breakpoints.push(c);
            values.push(0.0);
        }
        breakpoints.push(d);
        values.push(1.0);
        if d < b {
            breakpoints.push(b);
            values.push(0.0);
        }
        Self {
            breakpoints,
            values,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn evaluate(&self, u: f64) -> f64 {
        let d = self.values.len();
        if u >= self.breakpoints[d] {
            return self.values[d - 1];
        }
        let i = self.breakpoints.partition_point(|&a| a <= u).max(1) - 1;
        self.values[i]
    }

    /// Exact integral over `[c, d]` (clipped to the domain).
    pub fn integral_over(&self, c: f64, d: f64) -> f64 {
        let c = c.max(self.breakpoints[0]);
        let d = d.min(*self.breakpoints.last().unwrap());
        if d <= c {
            return 0.0;
        }
        let mut s = 0.0;
        let start = self.breakpoints.partition_point(|&a| a <= c).max(1) - 1;
        for k in start..self.values.len() {
            let lo = self.breakpoints[k].max(c);
            let hi = self.breakpoints[k + 1].min(d);
            if hi <= lo {
                break;
            }
            s += self.values[k] * (hi - lo);
        }
        s
    }

    pub fn integral(&self) -> f64 {
        self.integral_over(0.0, self.total_mass())
    }

    /// L2 inner product with another piecewise-constant function on the same
    /// domain, exact via a merge over both cut sets.
    pub fn inner(&self, other: &PiecewiseConstant) -> f64 {
        let mut s = 0.0;
        let mut i = 0;
        let mut j = 0;
        let mut lo = 0.0_f64;
        let end = self.total_mass().min(other.total_mass());
        while lo < end {
            let hi_i = self.breakpoints[i + 1];
            let hi_j = other.breakpoints[j + 1];
            let hi = hi_i.min(hi_j).min(end);
            s += self.values[i] * other.values[j] * (hi - lo);
            if hi_i <= hi {
                i += 1;
            }
            if hi_j <= hi {
                j += 1;
            }
            lo = hi;
            if i >= self.values.len() || j >= other.values.len() {
                break;
            }
        }
        s
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// Interpolation convention for sampled profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Piecewise constant, right-continuous (the default convention).
    StepRight,
    /// Piecewise constant, left-continuous; [`TabulatedProfile::cadlag_modification`]
    /// converts this to `StepRight`.
    StepLeft,
    /// Piecewise linear (continuous).
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
enum ProfileForm {
    Samples {
        us: Vec<f64>,
        values: Vec<f64>,
        interp: Interpolation,
    },
    /// `g(u) = u` on `[0, b]`.
    Uniform,
    /// `g(u) = scale * sgn(u - center) * |u - center|^alpha`.
    Power { alpha: f64, center: f64, scale: f64 },
}

/// A general non-decreasing profile: sampled values or an analytic family
/// evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    total_mass: f64,
    form: ProfileForm,
}

impl TabulatedProfile {
    pub fn uniform(b: f64) -> Self {
        assert!(b > 0.0 && b.is_finite());
        Self {
            total_mass: b,
            form: ProfileForm::Uniform,
        }
    }

    pub fn power(alpha: f64, center: f64, scale: f64, b: f64) -> Result<Self, ProfileError> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(scale > 0.0) || !(b > 0.0) {
            return Err(ProfileError::Spec(format!(
                "power profile needs alpha > 0, scale > 0, b > 0 (alpha={alpha}, scale={scale}, b={b})"
            )));
        }
        if !(0.0..=b).contains(&center) {
            return Err(ProfileError::Spec(format!(
                "power center {center} outside [0, {b}]"
            )));
        }
        Ok(Self {
            total_mass: b,
            form: ProfileForm::Power {
                alpha,
                center,
                scale,
            },
        })
    }

    pub fn from_samples(
        us: Vec<f64>,
        values: Vec<f64>,
        interp: Interpolation,
    ) -> Result<Self, ProfileError> {
        if us.len() < 2 || us.len() != values.len() {
            return Err(ProfileError::Spec(
                "sampled profile needs >= 2 aligned sample points".into(),
            ));
        }
        if us[0] != 0.0 || !us.windows(2).all(|w| w[0] < w[1]) || !us.iter().all(|u| u.is_finite())
        {
            return Err(ProfileError::BadBreakpoints);
        }
        if !values.windows(2).all(|w| w[0] <= w[1]) || !values.iter().all(|v| v.is_finite()) {
            return Err(ProfileError::NonMonotoneValues);
        }
        let total_mass = *us.last().unwrap();
        Ok(Self {
            total_mass,
            form: ProfileForm::Samples { us, values, interp },
        })
    }

    /// Exact integral of the profile over `[c, d]`.
    pub fn integral_over(&self, c: f64, d: f64) -> f64 {
        let c = c.max(0.0);
        let d = d.min(self.total_mass);
        if d <= c {
            return 0.0;
        }
        match &self.form {
            ProfileForm::Uniform => 0.5 * (d * d - c * c),
            ProfileForm::Power {
                alpha,
                center,
                scale,
            } => {
                // Antiderivative of sgn(s)|s|^a is |s|^(a+1)/(a+1).
                let f = |u: f64| (u - center).abs().powf(alpha + 1.0) / (alpha + 1.0);
                scale * (f(d) - f(c))
            }
            ProfileForm::Samples { us, values, interp } => match interp {
                Interpolation::StepRight | Interpolation::StepLeft => {
                    // Left-continuous tabulations integrate identically
                    // (they differ on a null set).
                    let mut s = 0.0;
                    for i in 0..us.len() {
                        let lo = us[i].max(c);
                        let hi = if i + 1 < us.len() {
                            us[i + 1].min(d)
                        } else {
                            d
                        };
                        if hi > lo {
                            s += values[i] * (hi - lo);
                        }
                    }
                    s
                }
                Interpolation::Linear => {
                    let mut s = 0.0;
                    for i in 0..us.len() - 1 {
                        let lo = us[i].max(c);
                        let hi = us[i + 1].min(d);
                        if hi > lo {
                            let g = |u: f64| {
                                let t = (u - us[i]) / (us[i + 1] - us[i]);
                                values[i] + t * (values[i + 1] - values[i])
                            };
                            s += 0.5 * (g(lo) + g(hi)) * (hi - lo);
                        }
                    }
                    s
                }
            },
        }
    }

    /// Level-`n` conditional average over the dyadic grid: `2^n` equal cells,
    /// each carrying the mean of `g` over the cell. Preserves the integral and
    /// is non-expansive in L2.
    pub fn dyadic_step_approximation(&self, level: u32) -> StepProfile {
        let cells = 1usize << level;
        let b = self.total_mass;
        let inv = 1.0 / cells as f64;
        let mut breakpoints = Vec::with_capacity(cells + 1);
        let mut values = Vec::with_capacity(cells);
        for k in 0..=cells {
            breakpoints.push(b * (k as f64 * inv));
        }
        for k in 0..cells {
            let lo = breakpoints[k];
            let hi = breakpoints[k + 1];
            let mut v = self.integral_over(lo, hi) / (hi - lo);
            // Averages of a non-decreasing function are non-decreasing; guard
            // against rounding inversions so the StepProfile invariant holds.
            if let Some(&prev) = values.last() {
                if v < prev {
                    v = prev;
                }
            }
            values.push(v);
        }
        StepProfile {
            breakpoints,
            values,
        }
    }

    /// Right-continuous modification: the limit of shrinking forward window
    /// averages at every point. Only left-continuous step tabulations change.
    pub fn cadlag_modification(&self) -> TabulatedProfile {
        match &self.form {
            ProfileForm::Samples {
                us,
                values,
                interp: Interpolation::StepLeft,
            } => {
                // The right limit at each jump point is the next sample value.
                let d = values.len();
                let shifted: Vec<f64> = (0..d).map(|i| values[(i + 1).min(d - 1)]).collect();
                TabulatedProfile {
                    total_mass: self.total_mass,
                    form: ProfileForm::Samples {
                        us: us.clone(),
                        values: shifted,
                        interp: Interpolation::StepRight,
                    },
                }
            }
            _ => self.clone(),
        }
    }

    /// `(int_0^b |g|^p du)^{1/p}`; exact for step conventions and analytic
    /// families, closed-form per segment for linear interpolation.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        let b = self.total_mass;
        let s = match &self.form {
            ProfileForm::Uniform => b.powf(p + 1.0) / (p + 1.0),
            ProfileForm::Power {
                alpha,
                center,
                scale,
            } => {
                let q = alpha * p;
                scale.abs().powf(p) * (center.powf(q + 1.0) + (b - center).powf(q + 1.0))
                    / (q + 1.0)
            }
            ProfileForm::Samples { us, values, interp } => match interp {
                Interpolation::StepRight | Interpolation::StepLeft => {
                    let mut s = 0.0;
                    for i in 0..us.len() {
                        let hi = if i + 1 < us.len() { us[i + 1] } else { b };
                        s += values[i].abs().powf(p) * (hi - us[i]);
                    }
                    s
                }
                Interpolation::Linear => {
                    let mut s = 0.0;
                    for i in 0..us.len() - 1 {
                        s += abs_pow_integral(values[i], values[i + 1], us[i + 1] - us[i], p);
                    }
                    s
                }
            },
        };
        s.powf(1.0 / p)
    }
}

impl MassFunction for TabulatedProfile {
    fn total_mass(&self) -> f64 {
        self.total_mass
    }

    fn evaluate(&self, u: f64) -> f64 {
        match &self.form {
            ProfileForm::Uniform => u,
            ProfileForm::Power {
                alpha,
                center,
                scale,
            } => {
                let s = u - center;
                scale * s.signum() * s.abs().powf(*alpha)
            }
            ProfileForm::Samples { us, values, interp } => {
                let d = values.len();
                match interp {
                    Interpolation::StepRight => {
                        if u >= us[d - 1] {
                            values[d - 1]
                        } else {
                            values[us.partition_point(|&a| a <= u).max(1) - 1]
                        }
                    }
                    Interpolation::StepLeft => {
                        // g(u) = values[i] on (us[i-1], us[i]]
                        if u <= us[0] {
                            values[0]
                        } else {
                            values[us.partition_point(|&a| a < u).min(d - 1)]
                        }
                    }
                    Interpolation::Linear => {
                        if u <= us[0] {
                            values[0]
                        } else if u >= us[d - 1] {
                            values[d - 1]
                        } else {
                            let i = us.partition_point(|&a| a <= u) - 1;
                            let t = (u - us[i]) / (us[i + 1] - us[i]);
                            values[i] + t * (values[i + 1] - values[i])
                        }
                    }
                }
            }
        }
    }
}

/// Exact `int |v(u)|^p du` over a segment of width `w` where `v` runs linearly
/// from `v0` to `v1`.
fn abs_pow_integral(v0: f64, v1: f64, w: f64, p: f64) -> f64 {
    if v0 == v1 {
        return v0.abs().powf(p) * w;
    }
    let f = |v: f64| v.signum() * v.abs().powf(p + 1.0) / (p + 1.0);
    (f(v1) - f(v0)) * w / (v1 - v0)
}

/// JSON-facing profile description:
/// `{"total_mass": b, "kind": "step"|"tabulated"|"uniform"|"power",
///   "breakpoints": [...], "values": [...], "alpha": ..., "u0": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfileSpec {
    pub total_mass: f64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolation: Option<Interpolation>,
}

/// A parsed profile of either representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Step(StepProfile),
    Tabulated(TabulatedProfile),
}

impl Profile {
    /// The step profile actually handed to the simulator: step profiles pass
    /// through (canonicalized), everything else is dyadically averaged at
    /// `level`.
    pub fn simulation_profile(&self, level: u32) -> StepProfile {
        match self {
            Profile::Step(s) => s.canonicalize(),
            Profile::Tabulated(t) => t.dyadic_step_approximation(level).canonicalize(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Profile::Step(s) => s.total_mass(),
            Profile::Tabulated(t) => t.total_mass(),
        }
    }

    pub fn evaluate(&self, u: f64) -> f64 {
        match self {
            Profile::Step(s) => s.evaluate(u),
            Profile::Tabulated(t) => t.evaluate(u),
        }
    }
}

impl ProfileSpec {
    pub fn uniform(b: f64) -> Self {
        Self {
            total_mass: b,
            kind: "uniform".into(),
            breakpoints: None,
            values: None,
            alpha: None,
            u0: None,
            scale: None,
            interpolation: None,
        }
    }

    pub fn power(alpha: f64, u0: f64, b: f64) -> Self {
        Self {
            total_mass: b,
            kind: "power".into(),
            breakpoints: None,
            values: None,
            alpha: Some(alpha),
            u0: Some(u0),
            scale: None,
            interpolation: None,
        }
    }

    pub fn step(profile: &StepProfile) -> Self {
        Self {
            total_mass: profile.total_mass(),
            kind: "step".into(),
            breakpoints: Some(profile.breakpoints().to_vec()),
            values: Some(profile.values().to_vec()),
            alpha: None,
            u0: None,
            scale: None,
            interpolation: None,
        }
    }

    pub fn parse(&self) -> Result<Profile, ProfileError> {
        let b = self.total_mass;
        if !(b > 0.0 && b.is_finite()) {
            return Err(ProfileError::Spec(format!("total_mass must be > 0, got {b}")));
        }
        match self.kind.as_str() {
            "uniform" => Ok(Profile::Tabulated(TabulatedProfile::uniform(b))),
            "power" => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| ProfileError::Spec("power profile needs alpha".into()))?;
                let u0 = self.u0.unwrap_or(0.5 * b);
                let scale = self.scale.unwrap_or(1.0);
                Ok(Profile::Tabulated(TabulatedProfile::power(
                    alpha, u0, scale, b,
                )?))
            }
            "step" => {
                let bp = self
                    .breakpoints
                    .clone()
                    .ok_or_else(|| ProfileError::Spec("step profile needs breakpoints".into()))?;
                let vals = self
                    .values
                    .clone()
                    .ok_or_else(|| ProfileError::Spec("step profile needs values".into()))?;
                let p = StepProfile::new(bp, vals)?;
                if (p.total_mass() - b).abs() > 1e-9 * b {
                    return Err(ProfileError::Spec(format!(
                        "total_mass {b} disagrees with last breakpoint {}",
                        p.total_mass()
                    )));
                }
                Ok(Profile::Step(p))
            }
            "tabulated" => {
                let us = self
                    .breakpoints
                    .clone()
                    .ok_or_else(|| ProfileError::Spec("tabulated profile needs breakpoints".into()))?;
                let vals = self
                    .values
                    .clone()
                    .ok_or_else(|| ProfileError::Spec("tabulated profile needs values".into()))?;
                let interp = self.interpolation.unwrap_or(Interpolation::StepRight);
                let t = TabulatedProfile::from_samples(us, vals, interp)?;
                if (t.total_mass() - b).abs() > 1e-9 * b {
                    return Err(ProfileError::Spec(format!(
                        "total_mass {b} disagrees with last sample point {}",
                        t.total_mass()
                    )));
                }
                Ok(Profile::Tabulated(t))
            }
            other => Err(ProfileError::Spec(format!("unknown profile kind '{other}'"))),
        }
    }
}
