//! Parallel replicate driver: runs keyed replicates over a save grid,
//! extracting observables into per-batch accumulators. Batch boundaries and
//! merge order are fixed by replicate id, so results are bit-identical for
//! any thread count.

use rayon::prelude::*;

use crate::estimators::{
    CountAccumulator, CurveAccumulator, CurveEstimate, DEFAULT_BATCHES,
};
use crate::profile::{PiecewiseConstant, StepProfile};
use crate::rng::StreamKey;
use crate::sim::{ClusterState, SimError, Simulator, StepperConfig};

/// A scalar read off the state at each save time.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `m(u0, t)`
    MassAt(f64),
    /// `1 / m(u0, t)`
    InverseMassAt(f64),
    /// `X(u0, t) - g(u0)`
    Displacement(f64),
    /// `|X(u0, t) - g(u0)|`
    AbsDisplacement(f64),
    /// Number of clusters.
    ClusterCount,
    /// Mass-weighted mean position.
    CenterOfMass,
    /// `int du / m(u, t)^beta` (exact block sum).
    InverseMassIntegral(f64),
    /// Running sup over the save grid so far of `||X(s) - g||_{L_p}^p`.
    SupLpDisplacementPow(f64),
    /// `(X(t) - g, h)` for the plan's test function `h`.
    InnerWithTestFn(usize),
    /// `||pr_{X(t)} h||_{L2}^2` for the plan's test function `h`.
    ProjNormSqTestFn(usize),
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::MassAt(u) => format!("mass[u0={u}]"),
            Observable::InverseMassAt(u) => format!("inverse_mass[u0={u}]"),
            Observable::Displacement(u) => format!("displacement[u0={u}]"),
            Observable::AbsDisplacement(u) => format!("abs_displacement[u0={u}]"),
            Observable::ClusterCount => "cluster_count".into(),
            Observable::CenterOfMass => "center_of_mass".into(),
            Observable::InverseMassIntegral(b) => format!("inverse_mass_integral[beta={b}]"),
            Observable::SupLpDisplacementPow(p) => format!("sup_lp_displacement_pow[p={p}]"),
            Observable::InnerWithTestFn(i) => format!("inner_test_fn[{i}]"),
            Observable::ProjNormSqTestFn(i) => format!("proj_norm_sq_test_fn[{i}]"),
        }
    }

    /// True when the value depends only on the merge structure, never on
    /// cluster positions. Mass-only plans stop stepping replicates that have
    /// fully coalesced (their mass structure is frozen from then on).
    fn mass_only(&self) -> bool {
        matches!(
            self,
            Observable::MassAt(_)
                | Observable::InverseMassAt(_)
                | Observable::ClusterCount
                | Observable::InverseMassIntegral(_)
        )
    }
}

/// Streaming exceedance counter: counts replicates with
/// `observable < threshold` at one save time.
#[derive(Debug, Clone, Copy)]
pub struct CountSpec {
    pub observable: usize,
    pub time_index: usize,
    pub below: f64,
}

/// Everything needed to reproduce a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub profile: StepProfile,
    pub config: StepperConfig,
    pub observables: Vec<Observable>,
    /// Test functions referenced by the projection observables.
    pub test_functions: Vec<PiecewiseConstant>,
    pub counters: Vec<CountSpec>,
    pub replicates: u64,
    pub seed: u64,
    /// Substream selector, for statistically independent companion runs
    /// under the same seed.
    pub substream: u64,
    pub batches: usize,
    /// Keep every raw value (replicate-major) for joint statistics.
    pub collect_raw: bool,
}

impl RunPlan {
    pub fn new(profile: StepProfile, config: StepperConfig, seed: u64, replicates: u64) -> Self {
        Self {
            profile,
            config,
            observables: Vec::new(),
            test_functions: Vec::new(),
            counters: Vec::new(),
            replicates,
            seed,
            substream: 0,
            batches: DEFAULT_BATCHES,
            collect_raw: false,
        }
    }

    pub fn observe(mut self, obs: Observable) -> Self {
        self.observables.push(obs);
        self
    }
}

/// Raw values in replicate-major layout.
#[derive(Debug, Clone)]
pub struct RawValues {
    pub replicates: u64,
    pub n_times: usize,
    pub n_obs: usize,
    data: Vec<f64>,
}

impl RawValues {
    #[inline]
    pub fn value(&self, replicate: u64, time_index: usize, obs_index: usize) -> f64 {
        self.data[(replicate as usize * self.n_times + time_index) * self.n_obs + obs_index]
    }

    /// All replicate values of one (observable, time) cell.
    pub fn column(&self, time_index: usize, obs_index: usize) -> Vec<f64> {
        (0..self.replicates)
            .map(|r| self.value(r, time_index, obs_index))
            .collect()
    }
}

/// Per-batch accumulators plus merged counters and optional raw values.
#[derive(Debug)]
pub struct RunOutput {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    batch_curves: Vec<Vec<CurveAccumulator>>,
    counters: Vec<CountAccumulator>,
    pub raw: Option<RawValues>,
}

impl RunOutput {
    pub fn batches(&self) -> usize {
        self.batch_curves.len()
    }

    /// Accumulator over all replicates for one observable.
    pub fn pooled(&self, obs_index: usize) -> CurveAccumulator {
        let mut acc = self.batch_curves[0][obs_index].clone();
        for batch in &self.batch_curves[1..] {
            acc.merge(&batch[obs_index]).expect("layouts are identical");
        }
        acc
    }

    pub fn curve(&self, obs_index: usize, conf: f64) -> CurveEstimate {
        self.pooled(obs_index).estimate(&self.names[obs_index], conf)
    }

    /// One accumulator per batch for a given (observable, time) cell.
    pub fn batch_cells(
        &self,
        obs_index: usize,
        time_index: usize,
    ) -> Vec<&crate::estimators::MomentAccumulator> {
        self.batch_curves
            .iter()
            .map(|b| b[obs_index].cell(time_index))
            .collect()
    }

    pub fn counter(&self, index: usize) -> CountAccumulator {
        self.counters[index]
    }
}

/// Ascending geometric grid `t_end * lambda^j`, `j = n-1, ..., 0`.
pub fn geometric_grid(t_end: f64, lambda: f64, n: usize) -> Vec<f64> {
    assert!(t_end > 0.0 && lambda > 0.0 && lambda < 1.0 && n >= 1);
    let mut ts: Vec<f64> = (0..n).map(|j| t_end * lambda.powi(j as i32)).collect();
    ts.reverse();
    ts
}

/// Ascending uniform grid `t_end * j / n`, `j = 1, ..., n`.
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    assert!(t_end > 0.0 && n >= 1);
    (1..=n).map(|j| t_end * j as f64 / n as f64).collect()
}

struct Prepared {
    /// Piece index and initial value per positional observable.
    kind: PreparedKind,
}

enum PreparedKind {
    MassAtPiece(usize),
    InverseMassAtPiece(usize),
    Displacement { piece: usize, start: f64 },
    AbsDisplacement { piece: usize, start: f64 },
    ClusterCount,
    CenterOfMass { start: f64 },
    InverseMassIntegral(f64),
    SupLp { p: f64, slot: usize },
    Inner { tf: usize, g_dot_h: f64 },
    ProjNormSq { tf: usize },
}

struct PreparedPlan {
    observables: Vec<Prepared>,
    /// Prefix integrals of each test function over the initial breakpoints.
    prefix: Vec<Vec<f64>>,
    sup_slots: usize,
    mass_only: bool,
}

fn prepare(plan: &RunPlan) -> Result<PreparedPlan, SimError> {
    let profile = &plan.profile;
    let b = profile.breakpoints()[profile.pieces()];
    let piece_of = |u: f64| -> Result<usize, SimError> {
        if !(u > 0.0 && u < b) {
            return Err(SimError::MassCoordinate(u, 0.0, b));
        }
        Ok(profile.piece_index(u))
    };
    let prefix: Vec<Vec<f64>> = plan
        .test_functions
        .iter()
        .map(|h| {
            let mut acc = vec![0.0];
            for w in profile.breakpoints().windows(2) {
                acc.push(acc.last().unwrap() + h.integral_over(w[0], w[1]));
            }
            acc
        })
        .collect();

    let mut sup_slots = 0;
    let mut observables = Vec::with_capacity(plan.observables.len());
    for obs in &plan.observables {
        let kind = match obs {
            Observable::MassAt(u) => PreparedKind::MassAtPiece(piece_of(*u)?),
            Observable::InverseMassAt(u) => PreparedKind::InverseMassAtPiece(piece_of(*u)?),
            Observable::Displacement(u) => {
                let piece = piece_of(*u)?;
                PreparedKind::Displacement {
                    piece,
                    start: profile.values()[piece],
                }
            }
            Observable::AbsDisplacement(u) => {
                let piece = piece_of(*u)?;
                PreparedKind::AbsDisplacement {
                    piece,
                    start: profile.values()[piece],
                }
            }
            Observable::ClusterCount => PreparedKind::ClusterCount,
            Observable::CenterOfMass => {
                let start = (0..profile.pieces())
                    .map(|k| profile.values()[k] * profile.piece_mass(k))
                    .sum::<f64>()
                    / b;
                PreparedKind::CenterOfMass { start }
            }
            Observable::InverseMassIntegral(beta) => PreparedKind::InverseMassIntegral(*beta),
            Observable::SupLpDisplacementPow(p) => {
                let slot = sup_slots;
                sup_slots += 1;
                PreparedKind::SupLp { p: *p, slot }
            }
            Observable::InnerWithTestFn(i) => {
                let h = &prefix[*i];
                let g_dot_h: f64 = (0..profile.pieces())
                    .map(|k| profile.values()[k] * (h[k + 1] - h[k]))
                    .sum();
                PreparedKind::Inner { tf: *i, g_dot_h }
            }
            Observable::ProjNormSqTestFn(i) => PreparedKind::ProjNormSq { tf: *i },
        };
        observables.push(Prepared { kind });
    }
    let mass_only = plan.observables.iter().all(|o| o.mass_only());
    Ok(PreparedPlan {
        observables,
        prefix,
        sup_slots,
        mass_only,
    })
}

fn extract(
    prep: &Prepared,
    state: &ClusterState,
    prefix: &[Vec<f64>],
    sup_state: &mut [f64],
) -> f64 {
    match &prep.kind {
        PreparedKind::MassAtPiece(k) => state.mass_of_piece(*k),
        PreparedKind::InverseMassAtPiece(k) => 1.0 / state.mass_of_piece(*k),
        PreparedKind::Displacement { piece, start } => state.position_of_piece(*piece) - start,
        PreparedKind::AbsDisplacement { piece, start } => {
            (state.position_of_piece(*piece) - start).abs()
        }
        PreparedKind::ClusterCount => state.cluster_count() as f64,
        PreparedKind::CenterOfMass { start } => state.center_of_mass() - start,
        PreparedKind::InverseMassIntegral(beta) => state.inverse_mass_integral(*beta),
        PreparedKind::SupLp { p, slot } => {
            let cur = state.lp_displacement_pow(*p);
            if cur > sup_state[*slot] {
                sup_state[*slot] = cur;
            }
            sup_state[*slot]
        }
        PreparedKind::Inner { tf, g_dot_h } => {
            let h = &prefix[*tf];
            let mut dot = 0.0;
            for (c, (lo, hi)) in state.blocks().enumerate() {
                dot += state.positions()[c] * (h[hi as usize + 1] - h[lo as usize]);
            }
            dot - g_dot_h
        }
        PreparedKind::ProjNormSq { tf } => {
            let h = &prefix[*tf];
            let mut s = 0.0;
            for (c, (lo, hi)) in state.blocks().enumerate() {
                let integral = h[hi as usize + 1] - h[lo as usize];
                s += integral * integral / state.masses()[c];
            }
            s
        }
    }
}

/// Fixed sub-division of each batch into parallel tasks; boundaries depend
/// only on the plan, never on the thread count.
const TASKS_PER_BATCH: u64 = 4;

struct TaskResult {
    task: u64,
    curves: Vec<CurveAccumulator>,
    counters: Vec<CountAccumulator>,
    raw: Vec<f64>,
}

/// Run the plan. Replicate `r` draws from stream `(seed, r, 0)` and lands in
/// batch `r * batches / replicates`.
pub fn run(plan: &RunPlan) -> Result<RunOutput, SimError> {
    plan.config.validate()?;
    if plan.replicates == 0 {
        return Err(SimError::InvalidConfig("replicates must be > 0".into()));
    }
    if plan.config.save_times.is_empty() {
        return Err(SimError::InvalidConfig("no save times".into()));
    }
    if plan.batches == 0 || plan.batches as u64 > plan.replicates {
        return Err(SimError::InvalidConfig(format!(
            "batches must be in 1..=replicates, got {}",
            plan.batches
        )));
    }
    let prepared = prepare(plan)?;
    let times = plan.config.save_times.clone();
    let n_obs = plan.observables.len();
    let n_tasks = (plan.batches as u64 * TASKS_PER_BATCH).min(plan.replicates);

    let task_range = |task: u64| -> (u64, u64) {
        let lo = task * plan.replicates / n_tasks;
        let hi = (task + 1) * plan.replicates / n_tasks;
        (lo, hi)
    };

    let mut results: Vec<TaskResult> = (0..n_tasks)
        .into_par_iter()
        .map(|task| -> Result<TaskResult, SimError> {
            let (lo, hi) = task_range(task);
            let mut curves: Vec<CurveAccumulator> =
                (0..n_obs).map(|_| CurveAccumulator::new(times.clone())).collect();
            let mut counters = vec![CountAccumulator::default(); plan.counters.len()];
            let mut raw = if plan.collect_raw {
                Vec::with_capacity(((hi - lo) as usize) * times.len() * n_obs)
            } else {
                Vec::new()
            };
            let mut values = vec![0.0_f64; n_obs];
            let mut sup_state = vec![0.0_f64; prepared.sup_slots];

            for rep in lo..hi {
                let mut sim = Simulator::new(
                    &plan.profile,
                    &plan.config,
                    StreamKey::new(plan.seed, rep, plan.substream),
                )?;
                sup_state.fill(0.0);
                for (ti, &t) in times.iter().enumerate() {
                    // A fully coalesced state has frozen mass structure;
                    // mass-only plans skip the remaining diffusion.
                    if !(prepared.mass_only && sim.state().cluster_count() == 1) {
                        sim.advance_to(t);
                    }
                    for (oi, prep) in prepared.observables.iter().enumerate() {
                        let v = extract(prep, sim.state(), &prepared.prefix, &mut sup_state);
                        values[oi] = v;
                        curves[oi].push(ti, v);
                    }
                    for (ci, spec) in plan.counters.iter().enumerate() {
                        if spec.time_index == ti {
                            counters[ci].push(values[spec.observable] < spec.below);
                        }
                    }
                    if plan.collect_raw {
                        raw.extend_from_slice(&values);
                    }
                }
            }
            Ok(TaskResult {
                task,
                curves,
                counters,
                raw,
            })
        })
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|r| r.task);

    // Merge per-task accumulators into their batches in task order.
    let mut batch_curves: Vec<Vec<CurveAccumulator>> = (0..plan.batches)
        .map(|_| (0..n_obs).map(|_| CurveAccumulator::new(times.clone())).collect())
        .collect();
    let mut counters = vec![CountAccumulator::default(); plan.counters.len()];
    let mut raw_data = Vec::new();
    for result in &results {
        let (lo, _) = task_range(result.task);
        let batch = (lo * plan.batches as u64 / plan.replicates) as usize;
        for (oi, c) in result.curves.iter().enumerate() {
            batch_curves[batch][oi].merge(c).expect("layouts are identical");
        }
        for (ci, c) in result.counters.iter().enumerate() {
            counters[ci].merge(c);
        }
        if plan.collect_raw {
            raw_data.extend_from_slice(&result.raw);
        }
    }

    let raw = plan.collect_raw.then_some(RawValues {
        replicates: plan.replicates,
        n_times: times.len(),
        n_obs,
        data: raw_data,
    });
    Ok(RunOutput {
        times,
        names: plan.observables.iter().map(|o| o.name()).collect(),
        batch_curves,
        counters,
        raw,
    })
}
