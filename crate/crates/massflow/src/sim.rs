//! The finite coalescing system: independent Gaussian motion per cluster with
//! variance rate `1/mass`, order-preserving coalescence by a
//! pool-adjacent-violators sweep, and an optional Brownian-bridge correction
//! for crossings missed between grid points.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ProfileError, StepProfile};
use crate::rng::{GaussianStream, StreamKey};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid stepper config: {0}")]
    InvalidConfig(String),
    #[error("profile must be canonical (strictly increasing values)")]
    NotCanonical,
    #[error("mass coordinate {0} outside the open domain ({1}, {2})")]
    MassCoordinate(f64, f64, f64),
    #[error("time {0} not on the saved grid")]
    TimeNotSaved(f64),
}

/// Stepping parameters. `save_times` is the explicit output grid; between
/// save points the stepper subdivides as needed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepperConfig {
    /// Base (maximal) time step.
    pub dt: f64,
    /// Merge surviving adjacent pairs with the Brownian-bridge crossing
    /// probability `exp(-2 g0 g1 / (sigma^2 dt))`.
    pub bridge_correction: bool,
    /// Cap the step so no adjacent pair diffuses further than a fraction of
    /// its gap in one step.
    pub adaptive: bool,
    /// Factor `c` in the adaptive cap `c * gap^2 / (4 sigma^2)`; `c = 2`
    /// moves the binding pair about `0.7 gap` per step.
    pub adaptive_factor: f64,
    /// Deliberate position drift per unit time. Zero in real runs; nonzero
    /// only as a negative-control fixture for the martingale checks.
    pub drift: f64,
    /// Strictly increasing save times (all > 0).
    pub save_times: Vec<f64>,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            bridge_correction: true,
            adaptive: true,
            adaptive_factor: 2.0,
            drift: 0.0,
            save_times: Vec::new(),
        }
    }

    pub fn with_save_times(mut self, times: Vec<f64>) -> Self {
        self.save_times = times;
        self
    }

    pub fn fixed_step(mut self) -> Self {
        self.adaptive = false;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.adaptive && !(self.adaptive_factor > 0.0) {
            return Err(SimError::InvalidConfig(
                "adaptive_factor must be > 0".into(),
            ));
        }
        if !self.save_times.windows(2).all(|w| w[0] < w[1])
            || self.save_times.first().is_some_and(|&t| t <= 0.0)
        {
            return Err(SimError::InvalidConfig(
                "save_times must be strictly increasing and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Initial data shared by every snapshot of a run: the mass lattice
/// `a_0 < ... < a_d` and the starting position of each piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl InitialCondition {
    pub fn mass_lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn mass_hi(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_hi() - self.mass_lo()
    }

    /// Initial piece owning mass coordinate `u`.
    pub fn piece_index(&self, u: f64) -> Result<usize, SimError> {
        if !(u > self.mass_lo() && u < self.mass_hi()) {
            return Err(SimError::MassCoordinate(u, self.mass_lo(), self.mass_hi()));
        }
        Ok(self.breakpoints.partition_point(|&a| a <= u) - 1)
    }

    pub fn piece_mass(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }
}

/// The live particle system at one time: ordered clusters, each carrying the
/// contiguous block `[lo, hi]` of initial pieces it has absorbed.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub time: f64,
    positions: Vec<f64>,
    masses: Vec<f64>,
    inv_sqrt_mass: Vec<f64>,
    index_lo: Vec<u32>,
    index_hi: Vec<u32>,
    initial: Arc<InitialCondition>,
}

/// One merge during coalescence resolution: the surviving block at the step's
/// end time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub time: f64,
    pub index_lo: u32,
    pub index_hi: u32,
}

impl ClusterState {
    /// One cluster per piece of a canonical profile.
    pub fn init(profile: &StepProfile) -> Result<Self, SimError> {
        if !profile.is_canonical() {
            return Err(SimError::NotCanonical);
        }
        let d = profile.pieces();
        let initial = Arc::new(InitialCondition {
            breakpoints: profile.breakpoints().to_vec(),
            values: profile.values().to_vec(),
        });
        let masses: Vec<f64> = (0..d).map(|k| profile.piece_mass(k)).collect();
        let inv_sqrt_mass = masses.iter().map(|m| 1.0 / m.sqrt()).collect();
        Ok(Self {
            time: 0.0,
            positions: profile.values().to_vec(),
            masses,
            inv_sqrt_mass,
            index_lo: (0..d as u32).collect(),
            index_hi: (0..d as u32).collect(),
            initial,
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn blocks(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.index_lo.iter().copied().zip(self.index_hi.iter().copied())
    }

    pub fn initial(&self) -> &Arc<InitialCondition> {
        &self.initial
    }

    pub fn total_mass(&self) -> f64 {
        self.initial.total_mass()
    }

    fn cluster_of_piece(&self, k: usize) -> usize {
        self.index_lo.partition_point(|&lo| lo as usize <= k) - 1
    }

    /// Mass of the cluster containing the particle that owns coordinate `u`.
    pub fn mass_at(&self, u: f64) -> Result<f64, SimError> {
        let k = self.initial.piece_index(u)?;
        Ok(self.masses[self.cluster_of_piece(k)])
    }

    /// Mass of the cluster that absorbed initial piece `k`.
    pub fn mass_of_piece(&self, k: usize) -> f64 {
        self.masses[self.cluster_of_piece(k)]
    }

    /// Position of the cluster that absorbed initial piece `k`.
    pub fn position_of_piece(&self, k: usize) -> f64 {
        self.positions[self.cluster_of_piece(k)]
    }

    /// Position of the cluster containing the particle that owns `u`.
    pub fn position_at(&self, u: f64) -> Result<f64, SimError> {
        let k = self.initial.piece_index(u)?;
        Ok(self.positions[self.cluster_of_piece(k)])
    }

    /// Mass-weighted mean position `sum m_k x_k / b`.
    pub fn center_of_mass(&self) -> f64 {
        let s: f64 = self
            .positions
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| x * m)
            .sum();
        s / self.total_mass()
    }

    /// `sum over initial pieces j of |pi_j| |x_{cluster(j)} - x_j^0|^p`,
    /// i.e. the p-th power of the Lp distance from the initial profile.
    pub fn lp_displacement_pow(&self, p: f64) -> f64 {
        let mut s = 0.0;
        for c in 0..self.positions.len() {
            let x = self.positions[c];
            for j in self.index_lo[c] as usize..=self.index_hi[c] as usize {
                let d = (x - self.initial.values[j]).abs();
                s += self.initial.piece_mass(j) * d.powf(p);
            }
        }
        s
    }

    /// `int du / m(u, t)^beta` as an exact block sum: each cluster contributes
    /// `mass^(1-beta)`.
    pub fn inverse_mass_integral(&self, beta: f64) -> f64 {
        self.masses.iter().map(|m| m.powf(1.0 - beta)).sum()
    }

    /// Structural invariant check used by fuzz tests and debug runs.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.positions.len();
        if n == 0 {
            return Err("empty state".into());
        }
        if !self.positions.windows(2).all(|w| w[0] < w[1]) {
            return Err("positions not strictly increasing".into());
        }
        let d = self.initial.values.len();
        if self.index_lo[0] != 0 || self.index_hi[n - 1] as usize != d - 1 {
            return Err("blocks do not cover the piece range".into());
        }
        for c in 0..n {
            if self.index_lo[c] > self.index_hi[c] {
                return Err("inverted block".into());
            }
            if c > 0 && self.index_lo[c] != self.index_hi[c - 1] + 1 {
                return Err("blocks not contiguous".into());
            }
            let block_mass: f64 = (self.index_lo[c] as usize..=self.index_hi[c] as usize)
                .map(|j| self.initial.piece_mass(j))
                .sum();
            if (block_mass - self.masses[c]).abs() > 1e-9 * self.total_mass() {
                return Err(format!(
                    "cluster {c} mass {} disagrees with block mass {block_mass}",
                    self.masses[c]
                ));
            }
        }
        let total: f64 = self.masses.iter().sum();
        if (total - self.total_mass()).abs() > 1e-9 * self.total_mass() {
            return Err(format!("mass not conserved: {total}"));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            positions: self.positions.clone(),
            masses: self.masses.clone(),
            index_lo: self.index_lo.clone(),
            index_hi: self.index_hi.clone(),
        }
    }
}

/// Saved cluster data at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<f64>,
    pub masses: Vec<f64>,
    pub index_lo: Vec<u32>,
    pub index_hi: Vec<u32>,
}

impl Snapshot {
    pub fn cluster_count(&self) -> usize {
        self.positions.len()
    }
}

/// Positions/masses on a save grid for one replicate, with the merge log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: InitialCondition,
    pub save_times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub merge_events: Vec<MergeEvent>,
}

impl Trajectory {
    pub fn at_time(&self, t: f64) -> Result<&Snapshot, SimError> {
        let idx = self
            .save_times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * s.max(t).max(1e-300))
            .ok_or(SimError::TimeNotSaved(t))?;
        Ok(&self.snapshots[idx])
    }

    /// Mass at coordinate `u` in the snapshot saved at `t`.
    pub fn mass_at(&self, u: f64, t: f64) -> Result<f64, SimError> {
        let snap = self.at_time(t)?;
        let k = self.initial.piece_index(u)? as u32;
        let c = snap.index_lo.partition_point(|&lo| lo <= k) - 1;
        Ok(snap.masses[c])
    }
}

/// Parameters of the space-time-mass rescaling
/// `X_rho(u, t) = rho^(-alpha) X(u rho - q, t rho^gamma)` with
/// `gamma = 2 alpha + 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RescaleParams {
    pub rho: f64,
    pub q: f64,
    pub alpha: f64,
}

impl RescaleParams {
    pub fn gamma(&self) -> f64 {
        2.0 * self.alpha + 1.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(SimError::InvalidConfig(format!("rho must be in (0,1], got {}", self.rho)));
        }
        if !(self.alpha > 0.5) {
            return Err(SimError::InvalidConfig(format!(
                "alpha must exceed 1/2, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Pure algebraic re-indexing of a saved trajectory: positions scale by
/// `rho^(-alpha)`, masses by `rho^(-1)`, mass coordinates map as
/// `u = (w + q) / rho`, and time `t` relabels the source time `t rho^gamma`.
/// No re-simulation happens.
pub fn rescale_view(trajectory: &Trajectory, params: &RescaleParams) -> Trajectory {
    let rho = params.rho;
    let gamma = params.gamma();
    let pos_scale = rho.powf(-params.alpha);
    let mass_scale = 1.0 / rho;
    let map_u = |w: f64| (w + params.q) / rho;

    let initial = InitialCondition {
        breakpoints: trajectory.initial.breakpoints.iter().map(|&a| map_u(a)).collect(),
        values: trajectory.initial.values.iter().map(|&v| v * pos_scale).collect(),
    };
    let time_scale = rho.powf(-gamma);
    let snapshots = trajectory
        .snapshots
        .iter()
        .map(|s| Snapshot {
            time: s.time * time_scale,
            positions: s.positions.iter().map(|&x| x * pos_scale).collect(),
            masses: s.masses.iter().map(|&m| m * mass_scale).collect(),
            index_lo: s.index_lo.clone(),
            index_hi: s.index_hi.clone(),
        })
        .collect();
    Trajectory {
        initial,
        save_times: trajectory.save_times.iter().map(|&t| t * time_scale).collect(),
        snapshots,
        merge_events: trajectory
            .merge_events
            .iter()
            .map(|e| MergeEvent {
                time: e.time * time_scale,
                ..*e
            })
            .collect(),
    }
}

/// Pool-adjacent-violators sweep over parallel cluster arrays: repeatedly
/// merge adjacent pairs whose positions are out of order or exactly tied into
/// one cluster at the mass-weighted mean, until positions strictly increase.
/// Index blocks merge alongside. Returns the number of merges.
pub fn resolve_coalescence(
    positions: &mut Vec<f64>,
    masses: &mut Vec<f64>,
    index_lo: &mut Vec<u32>,
    index_hi: &mut Vec<u32>,
) -> usize {
    let n = positions.len();
    let mut k = 0usize;
    for i in 0..n {
        positions[k] = positions[i];
        masses[k] = masses[i];
        index_lo[k] = index_lo[i];
        index_hi[k] = index_hi[i];
        k += 1;
        while k >= 2 && positions[k - 1] <= positions[k - 2] {
            let (ma, mb) = (masses[k - 2], masses[k - 1]);
            positions[k - 2] = (ma * positions[k - 2] + mb * positions[k - 1]) / (ma + mb);
            masses[k - 2] = ma + mb;
            index_hi[k - 2] = index_hi[k - 1];
            k -= 1;
        }
    }
    positions.truncate(k);
    masses.truncate(k);
    index_lo.truncate(k);
    index_hi.truncate(k);
    n - k
}

/// Stepping scalars copied out of a [`StepperConfig`].
#[derive(Debug, Clone, Copy)]
struct StepParams {
    dt: f64,
    bridge_correction: bool,
    adaptive: bool,
    adaptive_factor: f64,
    drift: f64,
}

impl From<&StepperConfig> for StepParams {
    fn from(c: &StepperConfig) -> Self {
        Self {
            dt: c.dt,
            bridge_correction: c.bridge_correction,
            adaptive: c.adaptive,
            adaptive_factor: c.adaptive_factor,
            drift: c.drift,
        }
    }
}

/// Drives one replicate forward in time.
pub struct Simulator {
    state: ClusterState,
    params: StepParams,
    stream: GaussianStream,
    pre_positions: Vec<f64>,
    pre_first: Vec<u32>,
    pre_last: Vec<u32>,
    merge_log: Vec<MergeEvent>,
    log_merges: bool,
    steps_taken: u64,
}

/// Steps shorter than this fraction of the base dt are never taken; it keeps
/// a near-degenerate gap from freezing the clock.
const MIN_STEP_FRACTION: f64 = 1e-12;

/// Skip the bridge draw when the crossing probability is below exp(-40).
const BRIDGE_EXPONENT_CUTOFF: f64 = 40.0;

impl Simulator {
    pub fn new(
        profile: &StepProfile,
        config: &StepperConfig,
        key: StreamKey,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let state = ClusterState::init(profile)?;
        let d = state.cluster_count();
        Ok(Self {
            state,
            params: StepParams::from(config),
            stream: GaussianStream::new(key),
            pre_positions: Vec::with_capacity(d),
            pre_first: vec![0; d],
            pre_last: vec![0; d],
            merge_log: Vec::new(),
            log_merges: false,
            steps_taken: 0,
        })
    }

    pub fn log_merges(mut self, on: bool) -> Self {
        self.log_merges = on;
        self
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    /// Number of inner steps taken so far.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Largest step allowed by the adaptive rule: no adjacent pair's gap
    /// diffuses by more than `sqrt(c)/2` of itself in one step.
    fn adaptive_cap(&self) -> f64 {
        let pos = &self.state.positions;
        let mass = &self.state.masses;
        let mut cap = f64::INFINITY;
        for i in 1..pos.len() {
            let gap = pos[i] - pos[i - 1];
            let sigma2 = 1.0 / mass[i] + 1.0 / mass[i - 1];
            cap = cap.min(gap * gap / sigma2);
        }
        0.25 * self.params.adaptive_factor * cap
    }

    /// One Gaussian step of length `dt` followed by coalescence resolution.
    pub fn step(&mut self, dt: f64) {
        debug_assert!(dt > 0.0);
        self.steps_taken += 1;
        let state = &mut self.state;
        let n = state.positions.len();

        self.pre_positions.clear();
        self.pre_positions.extend_from_slice(&state.positions);

        let sqrt_dt = dt.sqrt();
        for i in 0..n {
            let z: f64 = self.stream.next_gaussian();
            state.positions[i] += z * sqrt_dt * state.inv_sqrt_mass[i];
        }
        if self.params.drift != 0.0 {
            for x in state.positions.iter_mut() {
                *x += self.params.drift * dt;
            }
        }

        let t_end = state.time + dt;

        // Pool-adjacent-violators sweep: compact in place, merging any pair
        // whose order broke (or tied). The weighted-mean position preserves
        // sum m_k x_k exactly per merge.
        let pos = &mut state.positions;
        let mass = &mut state.masses;
        let ism = &mut state.inv_sqrt_mass;
        let lo = &mut state.index_lo;
        let hi = &mut state.index_hi;
        let pre_first = &mut self.pre_first;
        let pre_last = &mut self.pre_last;
        let mut k = 0usize;
        for i in 0..n {
            pos[k] = pos[i];
            mass[k] = mass[i];
            ism[k] = ism[i];
            lo[k] = lo[i];
            hi[k] = hi[i];
            pre_first[k] = i as u32;
            pre_last[k] = i as u32;
            k += 1;
            while k >= 2 && pos[k - 1] <= pos[k - 2] {
                let (ma, mb) = (mass[k - 2], mass[k - 1]);
                pos[k - 2] = (ma * pos[k - 2] + mb * pos[k - 1]) / (ma + mb);
                mass[k - 2] = ma + mb;
                ism[k - 2] = 1.0 / (ma + mb).sqrt();
                hi[k - 2] = hi[k - 1];
                pre_last[k - 2] = pre_last[k - 1];
                k -= 1;
                if self.log_merges {
                    self.merge_log.push(MergeEvent {
                        time: t_end,
                        index_lo: lo[k - 1],
                        index_hi: hi[k - 1],
                    });
                }
            }
        }

        // Brownian-bridge correction: a pair that stayed ordered may still
        // have crossed inside the step. For an isolated pair the gap is
        // Brownian with rate sigma^2 = 1/m_i + 1/m_j, and the bridge from
        // gap g0 to g1 hits zero with probability exp(-2 g0 g1 / (sigma^2 dt)).
        // For composites formed this step, g0 is taken between the boundary
        // members at the step start (approximate under multi-way
        // interactions).
        if self.params.bridge_correction && k >= 2 {
            let pre_pos = &self.pre_positions;
            let mut w = 0usize;
            for i in 1..k {
                let gap1 = pos[i] - pos[w];
                let gap0 = pre_pos[pre_first[i] as usize] - pre_pos[pre_last[w] as usize];
                let sigma2 = 1.0 / mass[w] + 1.0 / mass[i];
                let exponent = 2.0 * gap0 * gap1 / (sigma2 * dt);
                let crossed = exponent < BRIDGE_EXPONENT_CUTOFF
                    && self.stream.next_uniform() < (-exponent).exp();
                if crossed {
                    let (ma, mb) = (mass[w], mass[i]);
                    pos[w] = (ma * pos[w] + mb * pos[i]) / (ma + mb);
                    mass[w] = ma + mb;
                    ism[w] = 1.0 / (ma + mb).sqrt();
                    hi[w] = hi[i];
                    pre_last[w] = pre_last[i];
                    if self.log_merges {
                        self.merge_log.push(MergeEvent {
                            time: t_end,
                            index_lo: lo[w],
                            index_hi: hi[w],
                        });
                    }
                } else {
                    w += 1;
                    pos[w] = pos[i];
                    mass[w] = mass[i];
                    ism[w] = ism[i];
                    lo[w] = lo[i];
                    hi[w] = hi[i];
                    pre_first[w] = pre_first[i];
                    pre_last[w] = pre_last[i];
                }
            }
            k = w + 1;
        }

        pos.truncate(k);
        mass.truncate(k);
        ism.truncate(k);
        lo.truncate(k);
        hi.truncate(k);
        state.time = t_end;

        debug_assert!(state.positions.windows(2).all(|w| w[0] < w[1]));
    }

    /// Advance to `t_target`, subdividing by the base dt and the adaptive cap.
    pub fn advance_to(&mut self, t_target: f64) {
        debug_assert!(t_target >= self.state.time);
        let floor = self.params.dt * MIN_STEP_FRACTION;
        while self.state.time < t_target {
            let rem = t_target - self.state.time;
            if rem <= t_target * 1e-15 {
                break;
            }
            let mut dt = self.params.dt;
            if self.params.adaptive && self.state.cluster_count() > 1 {
                dt = dt.min(self.adaptive_cap()).max(floor);
            }
            self.step(dt.min(rem));
        }
        self.state.time = t_target;
    }

    /// Run a save grid and collect snapshots.
    pub fn run(mut self, save_times: &[f64]) -> Trajectory {
        let mut snapshots = Vec::with_capacity(save_times.len());
        for &t in save_times {
            self.advance_to(t);
            snapshots.push(self.state.snapshot());
        }
        Trajectory {
            initial: (*self.state.initial).clone(),
            save_times: save_times.to_vec(),
            snapshots,
            merge_events: self.merge_log,
        }
    }
}

/// Simulate one replicate over the config's save grid: a pure function of
/// `(profile, config, key)`.
pub fn simulate(
    profile: &StepProfile,
    config: &StepperConfig,
    key: StreamKey,
) -> Result<Trajectory, SimError> {
    Ok(Simulator::new(profile, config, key)?
        .log_merges(true)
        .run(&config.save_times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::TabulatedProfile;

    fn two_cluster_profile(gap: f64) -> StepProfile {
        StepProfile::new(vec![0.0, 0.5, 1.0], vec![0.0, gap]).unwrap()
    }

    #[test]
    fn init_state_lays_out_pieces() {
        let p = TabulatedProfile::uniform(1.0).dyadic_step_approximation(1);
        let s = ClusterState::init(&p).unwrap();
        assert_eq!(s.cluster_count(), 2);
        assert_eq!(s.positions(), &[0.25, 0.75]);
        assert_eq!(s.masses(), &[0.5, 0.5]);
        assert_eq!(s.blocks().collect::<Vec<_>>(), vec![(0, 0), (1, 1)]);
        s.validate().unwrap();

        let single = StepProfile::new(vec![0.0, 2.0], vec![1.0]).unwrap();
        let s = ClusterState::init(&single).unwrap();
        assert_eq!(s.cluster_count(), 1);
        assert_eq!(s.masses(), &[2.0]);

        let d10 = TabulatedProfile::uniform(1.0).dyadic_step_approximation(10);
        let s = ClusterState::init(&d10).unwrap();
        assert_eq!(s.cluster_count(), 1024);
        assert!((s.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let non_canonical = StepProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(ClusterState::init(&non_canonical).is_err());
    }

    fn resolve(positions: &[f64], masses: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pos = positions.to_vec();
        let mut mass = masses.to_vec();
        let mut lo: Vec<u32> = (0..positions.len() as u32).collect();
        let mut hi = lo.clone();
        resolve_coalescence(&mut pos, &mut mass, &mut lo, &mut hi);
        (pos, mass)
    }

    #[test]
    fn pava_merges_inverted_pair_at_weighted_mean() {
        let (pos, mass) = resolve(&[0.2, 0.1], &[0.5, 0.5]);
        assert_eq!(pos.len(), 1);
        assert!((pos[0] - 0.15).abs() < 1e-12);
        assert!((mass[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pava_keeps_sorted_input() {
        let (pos, mass) = resolve(&[1.0, 2.0, 5.0], &[1.0, 2.0, 1.0]);
        assert_eq!(pos, vec![1.0, 2.0, 5.0]);
        assert_eq!(mass, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn pava_cascades_and_merges_ties() {
        // (3, 1, 2) with masses (1, 1, 2): first merge gives position 2,
        // which ties the next cluster at 2, so everything pools at 2.
        let (pos, mass) = resolve(&[3.0, 1.0, 2.0], &[1.0, 1.0, 2.0]);
        assert_eq!(pos.len(), 1);
        assert!((pos[0] - 2.0).abs() < 1e-12);
        assert!((mass[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn pava_preserves_weighted_sum_exactly() {
        let positions = [5.0, 1.0, 4.0, 2.0, 3.5, 3.0];
        let masses = [0.3, 0.7, 1.1, 0.2, 0.9, 0.5];
        let before: f64 = positions.iter().zip(&masses).map(|(x, m)| x * m).sum();
        let (pos, mass) = resolve(&positions, &masses);
        let after: f64 = pos.iter().zip(&mass).map(|(x, m)| x * m).sum();
        assert!((before - after).abs() <= 1e-13 * before.abs());
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_cluster_increment_variance_matches_rate() {
        // A lone cluster of mass M takes N(0, dt/M) increments; the sample
        // variance over 1e6 steps lands within 0.5% (about 3.5 sigma of the
        // chi-square fluctuation).
        let p = StepProfile::new(vec![0.0, 2.0], vec![0.0]).unwrap();
        let dt = 1e-3;
        let mut sim = Simulator::new(
            &p,
            &StepperConfig::new(dt).fixed_step(),
            StreamKey::new(7, 0, 0),
        )
        .unwrap();
        let n = 1_000_000;
        let mut prev = sim.state().positions()[0];
        let mut sum_sq = 0.0;
        for _ in 0..n {
            sim.step(dt);
            let x = sim.state().positions()[0];
            sum_sq += (x - prev) * (x - prev);
            prev = x;
        }
        let var = sum_sq / n as f64;
        let expect = dt / 2.0;
        assert!(
            (var - expect).abs() < 0.005 * expect,
            "var {var} vs {expect}"
        );
    }

    #[test]
    fn two_cluster_merge_probability_near_oracle() {
        // Smoke-scale version of the reflection-principle check:
        // P{merged by t} = 2 Phi(-gap / (sigma sqrt(t))).
        let profile = two_cluster_profile(0.1);
        let t = 0.01;
        let n = 4000;
        let mut merged = 0;
        for rep in 0..n {
            let cfg = StepperConfig::new(1e-5)
                .fixed_step()
                .with_save_times(vec![t]);
            let mut sim = Simulator::new(&profile, &cfg, StreamKey::new(99, rep, 0)).unwrap();
            sim.advance_to(t);
            if sim.state().cluster_count() == 1 {
                merged += 1;
            }
        }
        let p_hat = merged as f64 / n as f64;
        // sigma^2 = 1/0.5 + 1/0.5 = 4, so P = 2 Phi(-0.5) = 0.61708.
        let se = (0.617 * 0.383 / n as f64).sqrt();
        assert!(
            (p_hat - 0.61708).abs() < 4.0 * se,
            "p_hat {p_hat} (se {se})"
        );
    }

    #[test]
    fn mass_at_tracks_merges() {
        let profile = two_cluster_profile(0.1);
        let cfg = StepperConfig::new(1e-4).fixed_step();
        let mut sim = Simulator::new(&profile, &cfg, StreamKey::new(3, 5, 0)).unwrap();
        assert_eq!(sim.state().mass_at(0.25).unwrap(), 0.5);
        assert_eq!(sim.state().mass_at(0.75).unwrap(), 0.5);
        // march until the two clusters meet
        while sim.state().cluster_count() > 1 {
            sim.step(1e-4);
        }
        assert_eq!(sim.state().mass_at(0.25).unwrap(), 1.0);
        assert_eq!(sim.state().mass_at(0.75).unwrap(), 1.0);
        assert!(sim.state().mass_at(0.0).is_err());
        assert!(sim.state().mass_at(1.0).is_err());
    }

    #[test]
    fn cluster_count_equals_inverse_mass_block_sum() {
        let p = TabulatedProfile::uniform(1.0).dyadic_step_approximation(6);
        let cfg = StepperConfig::new(1e-2);
        let mut sim = Simulator::new(&p, &cfg, StreamKey::new(11, 0, 0)).unwrap();
        for step in 0..200 {
            sim.step(2e-7 * (step + 1) as f64);
            let count = sim.state().cluster_count() as f64;
            let integral = sim.state().inverse_mass_integral(1.0);
            assert!((count - integral).abs() < 1e-9);
        }
        assert!(sim.state().cluster_count() < 64);
    }

    #[test]
    fn simulate_is_deterministic() {
        let p = TabulatedProfile::uniform(1.0).dyadic_step_approximation(4);
        let cfg = StepperConfig::new(1e-4).with_save_times(vec![1e-3, 5e-3, 1e-2]);
        let a = simulate(&p, &cfg, StreamKey::new(21, 4, 0)).unwrap();
        let b = simulate(&p, &cfg, StreamKey::new(21, 4, 0)).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.merge_events, b.merge_events);
        let c = simulate(&p, &cfg, StreamKey::new(21, 5, 0)).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn cluster_counts_never_increase_along_a_run() {
        let p = TabulatedProfile::uniform(1.0).dyadic_step_approximation(5);
        let cfg = StepperConfig::new(1e-3).with_save_times(vec![1e-4, 1e-3, 1e-2, 0.1]);
        let traj = simulate(&p, &cfg, StreamKey::new(2, 0, 0)).unwrap();
        for w in traj.snapshots.windows(2) {
            assert!(w[1].cluster_count() <= w[0].cluster_count());
        }
    }

    #[test]
    fn rescale_identity_and_composition() {
        let p = TabulatedProfile::uniform(1.0).dyadic_step_approximation(3);
        let cfg = StepperConfig::new(1e-4).with_save_times(vec![1e-3, 1e-2]);
        let traj = simulate(&p, &cfg, StreamKey::new(8, 0, 0)).unwrap();

        let id = rescale_view(&traj, &RescaleParams { rho: 1.0, q: 0.0, alpha: 1.0 });
        assert_eq!(id.snapshots, traj.snapshots);
        assert_eq!(id.save_times, traj.save_times);

        let r1 = rescale_view(&traj, &RescaleParams { rho: 0.5, q: 0.0, alpha: 1.0 });
        let r12 = rescale_view(&r1, &RescaleParams { rho: 0.5, q: 0.0, alpha: 1.0 });
        let direct = rescale_view(&traj, &RescaleParams { rho: 0.25, q: 0.0, alpha: 1.0 });
        for (a, b) in r12.snapshots.iter().zip(&direct.snapshots) {
            for (x, y) in a.positions.iter().zip(&b.positions) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
            for (x, y) in a.masses.iter().zip(&b.masses) {
                assert!((x - y).abs() <= 1e-12 * x.abs());
            }
        }
    }

    #[test]
    fn rescale_mass_identity_is_exact() {
        // m_rho(u, t) = m(u rho - q, t rho^gamma) / rho on every snapshot.
        let p = TabulatedProfile::uniform(1.0).dyadic_step_approximation(4);
        let params = RescaleParams { rho: 0.5, q: -0.5, alpha: 1.0 };
        let t_src = vec![1e-3, 4e-3];
        let cfg = StepperConfig::new(1e-4).with_save_times(t_src.clone());
        let traj = simulate(&p, &cfg, StreamKey::new(77, 0, 0)).unwrap();
        let view = rescale_view(&traj, &params);

        let gamma = params.gamma();
        for (j, &ts) in t_src.iter().enumerate() {
            let tv = view.save_times[j];
            assert!((tv * params.rho.powf(gamma) - ts).abs() < 1e-15);
            for &u in &[-0.3, 0.1, 0.6] {
                let w = u * params.rho - params.q;
                let lhs = view.mass_at(u, tv).unwrap();
                let rhs = traj.mass_at(w, ts).unwrap() / params.rho;
                assert_eq!(lhs.to_bits(), rhs.to_bits());
            }
        }
    }

    #[test]
    fn trajectory_rejects_unsaved_times() {
        let p = two_cluster_profile(0.3);
        let cfg = StepperConfig::new(1e-3).with_save_times(vec![1e-2]);
        let traj = simulate(&p, &cfg, StreamKey::new(1, 0, 0)).unwrap();
        assert!(traj.at_time(1e-2).is_ok());
        assert!(traj.at_time(2e-2).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(StepperConfig::new(0.0).validate().is_err());
        assert!(StepperConfig::new(1e-3).validate().is_ok());
        let bad = StepperConfig::new(1e-3).with_save_times(vec![0.2, 0.1]);
        assert!(bad.validate().is_err());
        let zero_t = StepperConfig::new(1e-3).with_save_times(vec![0.0, 0.1]);
        assert!(zero_t.validate().is_err());
    }
}
