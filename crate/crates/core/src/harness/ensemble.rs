//! Ensemble orchestration: N trajectories of one method on one benchmark.
//!
//! Every estimator is reported on a uniform output grid as a (mean,
//! standard error) pair.  The population estimators are ratio estimators,
//!
//! ```text
//!     P_{0/1}(t) = (1 -+ N(t)/D) / 2,    N(t) = < w(t) S_z(t) >,
//!                                        D    = < w(0) |S_z(0)| >,
//!
//!     P_a(t)     = (1 + C(t)/C(0)) / 2,  C(t) = < w(t) f(S_0).A_0
//!                                                      g(S_t).B_t >,
//! ```
//!
//! so their errors come from the correlated delta method, and P_0 + P_1 = 1
//! holds identically at every time.  The naive hemisphere sum is reported
//! alongside as the `pop_sum_naive` diagnostic; its drift away from 1
//! measures the jump-weight spread, not an error.
//!
//! Determinism: trajectory i draws from the counter-derived stream
//! (seed, i); trajectories are processed in fixed chunks whose partial
//! accumulators merge in chunk order.  The output is therefore
//! bit-identical for any worker count, and the first failing trajectory
//! (in index order within the earliest failing chunk) decides the error.
//! The `REDMASH_WORKERS` environment variable overrides the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{
    discretize_debye, redfield_rates, sample_boltzmann, sample_wigner_ground, BathError,
    PreparedChannel, RateSet,
};
use crate::hybrid::{emission_rate_histogram, HybridPropagator, HybridState, JumpRecord};
use crate::mash_core::{CorrelationSample, MashPropagator, MashState, ObservableClass};
use crate::redfield_me::{propagate_static, MasterEqError};
use crate::rng::trajectory_rng;
use crate::stats::{MeanAccumulator, RatioAccumulator};
use crate::two_level::{
    adiabatize, expand_diabatic_operator, sample_sphere, BlochState, DiabaticModel,
    DiabaticOperator, SphereRegion, SpinVector,
};
use crate::units::FEMTOSECOND;
use crate::unravel::{pdp_step, QuantumTrajectory};

use super::config::{CavityConfig, ConfigError, RunConfig, SpinBosonConfig};
use super::models::SpinBosonModel;

/// Trajectories per work unit; partial accumulators merge in chunk order.
pub const CHUNK: usize = 256;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "REDMASH_WORKERS";

#[derive(Debug, Clone, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error(transparent)]
    MasterEq(#[from] MasterEqError),
    #[error("trajectory {trajectory}: {message}")]
    Trajectory { trajectory: u64, message: String },
    #[error("setup: {0}")]
    Setup(String),
    #[error("worker configuration: {0}")]
    Workers(String),
}

fn traj_err(trajectory: u64, err: impl std::fmt::Display) -> HarnessError {
    HarnessError::Trajectory { trajectory, message: err.to_string() }
}

/// The four propagation methods the harness can run on a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Pure surface hopping; every bath is explicit classical modes.
    Mash,
    /// Deterministic secular master equation at a frozen geometry.
    Redfield,
    /// Stochastic jump unravelling of the same master equation.
    Unravel,
    /// Surface hopping over the explicit modes plus golden-rule jumps for
    /// the quantum channels.
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mash, Method::Redfield, Method::Unravel, Method::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mash => "mash",
            Method::Redfield => "redfield",
            Method::Unravel => "unravel",
            Method::Hybrid => "hybrid",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mash" => Ok(Method::Mash),
            "redfield" => Ok(Method::Redfield),
            "unravel" => Ok(Method::Unravel),
            "hybrid" => Ok(Method::Hybrid),
            other => Err(ConfigError::Invalid(format!(
                "unknown method {other:?} (expected mash, redfield, unravel, or hybrid)"
            ))),
        }
    }
}

/// One named estimator series on the output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl EstimatorSeries {
    fn new(name: &str, mean: Vec<f64>, stderr: Vec<f64>) -> Self {
        Self { name: name.to_string(), mean, stderr }
    }
}

/// Result of one ensemble run.
///
/// `times` are in the model's reporting units: multiples of 1/delta for
/// the spin-boson benchmark, femtoseconds for the cavity.  Deterministic
/// (redfield) runs report `n_traj = 1` and zero standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub method: Method,
    pub seed: u64,
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub estimators: Vec<EstimatorSeries>,
    /// Wall-clock seconds; excluded from serialized artifacts by the CSV
    /// writer because it is not reproducible.
    pub wall_seconds: f64,
}

/// Uniform grid of `points` times covering [0, t_final].
pub fn time_grid(t_final: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|k| t_final * k as f64 / (n - 1) as f64).collect()
}

/// Number of equal substeps, each at most `dt_max` long, for one interval.
fn substeps(interval: f64, dt_max: f64) -> usize {
    (interval / dt_max).ceil().max(1.0) as usize
}

/// Runs one ensemble.  The dispatch across (benchmark, method) decides how
/// each bath is treated:
///
/// ```text
///     spin_boson  mash      both baths as explicit modes (n_modes each)
///                 hybrid    slow bath explicit, fast bath as jumps
///                 redfield  both baths as golden-rule rates at the bare
///                 unravel   geometry (no explicit modes)
///
///     cavity      mash      isolated molecule (photons off)
///                 hybrid    nuclear motion plus photon jumps
///                 redfield  photon rates at the frozen initial-wavepacket
///                 unravel   center (no nuclear motion)
/// ```
pub fn run_ensemble(config: &RunConfig, method: Method) -> Result<EnsembleResult, HarnessError> {
    config.validate()?;
    let start = Instant::now();
    let mut result = match config {
        RunConfig::SpinBoson(c) => match method {
            Method::Mash => sb_mash(c),
            Method::Hybrid => sb_hybrid(c),
            Method::Redfield => sb_redfield(c),
            Method::Unravel => sb_unravel(c),
        },
        RunConfig::Cavity(c) => match method {
            Method::Mash => cavity_mash(c),
            Method::Hybrid => cavity_hybrid(c),
            Method::Redfield => cavity_redfield(c),
            Method::Unravel => cavity_unravel(c),
        },
    }?;
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Splits `n_traj` into fixed chunks, runs `build` on each (in parallel
/// when workers are available), and returns the partials in chunk order.
/// Errors are deterministic: the earliest chunk's error wins regardless of
/// completion order.
pub(crate) fn run_chunks<P, F>(n_traj: usize, build: F) -> Result<Vec<P>, HarnessError>
where
    P: Send,
    F: Fn(u64, u64) -> Result<P, HarnessError> + Sync,
{
    let mut ranges = Vec::new();
    let mut lo = 0_u64;
    while lo < n_traj as u64 {
        let hi = (lo + CHUNK as u64).min(n_traj as u64);
        ranges.push((lo, hi));
        lo = hi;
    }
    let work = || ranges.par_iter().map(|&(lo, hi)| build(lo, hi)).collect::<Vec<_>>();
    let partials = match build_pool()? {
        Some(pool) => pool.install(work),
        None => work(),
    };
    partials.into_iter().collect()
}

/// Dedicated pool honoring `REDMASH_WORKERS`; `None` means the global one.
fn build_pool() -> Result<Option<rayon::ThreadPool>, HarnessError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(None);
    };
    let workers = parse_workers(&raw)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| HarnessError::Workers(e.to_string()))
}

/// Parses the override value; it must be a positive integer.
fn parse_workers(raw: &str) -> Result<usize, HarnessError> {
    let workers: usize = raw
        .trim()
        .parse()
        .map_err(|_| HarnessError::Workers(format!("{WORKERS_ENV}={raw:?} is not a number")))?;
    if workers == 0 {
        return Err(HarnessError::Workers(format!("{WORKERS_ENV} must be at least 1")));
    }
    Ok(workers)
}

/// Ratio series for the axis estimator N(t)/D, the naive estimator, and
/// (for the spin-boson benchmark) the correlation ratio C(t)/C(0).
struct RatioPartial {
    pa: Vec<RatioAccumulator>,
    axis: Vec<RatioAccumulator>,
    naive: Vec<RatioAccumulator>,
    logs: Vec<Vec<JumpRecord>>,
}

impl RatioPartial {
    fn new(n_out: usize, with_pa: bool) -> Self {
        Self {
            pa: if with_pa { vec![RatioAccumulator::default(); n_out] } else { Vec::new() },
            axis: vec![RatioAccumulator::default(); n_out],
            naive: vec![RatioAccumulator::default(); n_out],
            logs: Vec::new(),
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.pa.iter_mut().zip(&other.pa) {
            a.merge(b);
        }
        for (a, b) in self.axis.iter_mut().zip(&other.axis) {
            a.merge(b);
        }
        for (a, b) in self.naive.iter_mut().zip(&other.naive) {
            a.merge(b);
        }
    }
}

/// Collapses chunk partials in order into one.
fn merge_partials(mut partials: Vec<RatioPartial>) -> RatioPartial {
    let mut merged = partials.remove(0);
    for partial in &partials {
        merged.merge(partial);
    }
    for partial in partials {
        merged.logs.extend(partial.logs);
    }
    merged
}

/// Adiabatic population columns from the merged axis ratio r = N/D:
/// P1 = (1 + r)/2 and P0 = (1 - r)/2 share one error bar.
fn population_series(axis: &[RatioAccumulator]) -> (EstimatorSeries, EstimatorSeries) {
    let n = axis.len();
    let (mut up, mut down) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut err = Vec::with_capacity(n);
    for acc in axis {
        let r = acc.ratio();
        up.push(0.5 * (1.0 + r));
        down.push(0.5 * (1.0 - r));
        err.push(0.5 * acc.ratio_stderr());
    }
    (
        EstimatorSeries::new("pop_upper", up, err.clone()),
        EstimatorSeries::new("pop_lower", down, err),
    )
}

fn naive_series(naive: &[RatioAccumulator]) -> EstimatorSeries {
    EstimatorSeries::new(
        "pop_sum_naive",
        naive.iter().map(RatioAccumulator::ratio).collect(),
        naive.iter().map(RatioAccumulator::ratio_stderr).collect(),
    )
}

fn diabatic_series(pa: &[RatioAccumulator]) -> EstimatorSeries {
    EstimatorSeries::new(
        "pop_a",
        pa.iter().map(|acc| 0.5 * (1.0 + acc.ratio())).collect(),
        pa.iter().map(|acc| 0.5 * acc.ratio_stderr()).collect(),
    )
}

/// The t = 0 correlation reading of one trajectory, shared by the t > 0
/// ratio samples and by the frozen population denominator.
struct TrajectoryStart {
    spin: SpinVector,
    a_start: crate::two_level::PauliExpansion,
    value: f64,
    abs_z: f64,
}

fn correlation_start(
    frame: &crate::two_level::AdiabaticFrame,
    spin: SpinVector,
) -> Result<TrajectoryStart, crate::two_level::SpinError> {
    let a_start = expand_diabatic_operator(frame, &DiabaticOperator::projector_a());
    let b_0 = expand_diabatic_operator(frame, &DiabaticOperator::sigma_z());
    let value = CorrelationSample {
        a_start,
        spin_start: spin,
        b_t: b_0,
        spin_t: spin,
        jump_factor: 1.0,
    }
    .value()?;
    Ok(TrajectoryStart { spin, a_start, value, abs_z: spin.z.abs() })
}

/// Pure surface hopping on the spin-boson benchmark: both baths become
/// explicit modes (`classical.n_modes` each) sampled from the classical
/// Boltzmann distribution, the electronic state starts as the diabatic
/// |a> through full-sphere spin sampling with the correlation dressing.
fn sb_mash(cfg: &SpinBosonConfig) -> Result<EnsembleResult, HarnessError> {
    let beta = cfg.beta / cfg.delta;
    let disc_slow = discretize_debye(&cfg.classical_debye(), cfg.classical.n_modes);
    let disc_fast = discretize_debye(&cfg.quantum_debye(), cfg.classical.n_modes);
    let model =
        SpinBosonModel::new(cfg.eps * cfg.delta, cfg.delta, &[&disc_slow, &disc_fast]);
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let dt_max = cfg.resolved_dt(Method::Mash);
    let n_out = tgrid.len();
    let seed = cfg.seed;

    let partials = run_chunks(cfg.n_traj, |lo, hi| {
        let mut part = RatioPartial::new(n_out, true);
        let mut prop = MashPropagator::new(&model);
        for idx in lo..hi {
            let mut rng = trajectory_rng(seed, idx);
            let (mut q, mut p) = sample_boltzmann(&disc_slow, beta, &mut rng);
            let (q_fast, p_fast) = sample_boltzmann(&disc_fast, beta, &mut rng);
            q.extend_from_slice(&q_fast);
            p.extend_from_slice(&p_fast);
            let spin0 = sample_sphere(&mut rng, SphereRegion::Full);
            let mut state =
                MashState::prepare(&model, q, p, spin0).map_err(|e| traj_err(idx, e))?;
            prop.prime(&state).map_err(|e| traj_err(idx, e))?;
            let start =
                correlation_start(prop.frame(), spin0).map_err(|e| traj_err(idx, e))?;
            part.pa[0].push(start.value, start.value);
            part.axis[0].push(spin0.z, start.abs_z);
            part.naive[0].push(start.abs_z, start.abs_z);
            for k in 1..n_out {
                let interval = tgrid[k] - tgrid[k - 1];
                let n_sub = substeps(interval, dt_max);
                let h = interval / n_sub as f64;
                for _ in 0..n_sub {
                    prop.step(&mut state, h).map_err(|e| traj_err(idx, e))?;
                }
                let b_t = expand_diabatic_operator(prop.frame(), &DiabaticOperator::sigma_z());
                let sample = CorrelationSample {
                    a_start: start.a_start,
                    spin_start: start.spin,
                    b_t,
                    spin_t: state.spin,
                    jump_factor: 1.0,
                };
                part.pa[k].push(sample.value().map_err(|e| traj_err(idx, e))?, start.value);
                part.axis[k].push(state.spin.z, start.abs_z);
                part.naive[k].push(state.spin.z.abs(), start.abs_z);
            }
        }
        Ok(part)
    })?;

    let merged = merge_partials(partials);
    let (up, down) = population_series(&merged.axis);
    Ok(EnsembleResult {
        method: Method::Mash,
        seed,
        n_traj: cfg.n_traj,
        times: tgrid.iter().map(|t| t * cfg.delta).collect(),
        estimators: vec![diabatic_series(&merged.pa), up, down, naive_series(&merged.naive)],
        wall_seconds: 0.0,
    })
}

/// Hybrid propagation on the spin-boson benchmark: the slow bath stays
/// explicit, the fast bath acts through golden-rule jumps at the moving
/// geometry.  The running weight starts at 1 because the correlation
/// dressing already carries the class prefactors; jumps multiply it by
/// 2 |S_z| as they fire.
fn sb_hybrid(cfg: &SpinBosonConfig) -> Result<EnsembleResult, HarnessError> {
    let beta = cfg.beta / cfg.delta;
    let disc_slow = discretize_debye(&cfg.classical_debye(), cfg.classical.n_modes);
    let model = SpinBosonModel::new(cfg.eps * cfg.delta, cfg.delta, &[&disc_slow]);
    let channels = vec![PreparedChannel::prepare(&cfg.quantum_channel(), cfg.shift_omega_max())?];
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let dt_max = cfg.resolved_dt(Method::Hybrid);
    let n_out = tgrid.len();
    let seed = cfg.seed;

    let partials = run_chunks(cfg.n_traj, |lo, hi| {
        let mut part = RatioPartial::new(n_out, true);
        let mut prop = HybridPropagator::new(&model, &channels);
        for idx in lo..hi {
            let mut rng = trajectory_rng(seed, idx);
            let (q, p) = sample_boltzmann(&disc_slow, beta, &mut rng);
            // The fast bath has no explicit modes here; its draws are the
            // jump decisions inside the stepper.
            let spin0 = sample_sphere(&mut rng, SphereRegion::Full);
            let mut state = HybridState::prepare(&model, q, p, spin0, ObservableClass::Population)
                .map_err(|e| traj_err(idx, e))?;
            state.weight.prefactor = 1.0;
            prop.prime(&state).map_err(|e| traj_err(idx, e))?;
            let start =
                correlation_start(prop.frame(), spin0).map_err(|e| traj_err(idx, e))?;
            part.pa[0].push(start.value, start.value);
            part.axis[0].push(spin0.z, start.abs_z);
            part.naive[0].push(start.abs_z, start.abs_z);
            for k in 1..n_out {
                let interval = tgrid[k] - tgrid[k - 1];
                let n_sub = substeps(interval, dt_max);
                let h = interval / n_sub as f64;
                for _ in 0..n_sub {
                    prop.step(&mut state, h, &mut rng).map_err(|e| traj_err(idx, e))?;
                }
                let w = state.weight.prefactor;
                let b_t = expand_diabatic_operator(prop.frame(), &DiabaticOperator::sigma_z());
                let sample = CorrelationSample {
                    a_start: start.a_start,
                    spin_start: start.spin,
                    b_t,
                    spin_t: state.mash.spin,
                    jump_factor: w,
                };
                part.pa[k].push(sample.value().map_err(|e| traj_err(idx, e))?, start.value);
                part.axis[k].push(w * state.mash.spin.z, start.abs_z);
                part.naive[k].push(w * state.mash.spin.z.abs(), start.abs_z);
            }
        }
        Ok(part)
    })?;

    let merged = merge_partials(partials);
    let (up, down) = population_series(&merged.axis);
    Ok(EnsembleResult {
        method: Method::Hybrid,
        seed,
        n_traj: cfg.n_traj,
        times: tgrid.iter().map(|t| t * cfg.delta).collect(),
        estimators: vec![diabatic_series(&merged.pa), up, down, naive_series(&merged.naive)],
        wall_seconds: 0.0,
    })
}

/// Static rates and frame of the bare spin-boson system with both baths
/// implicit, plus the Bloch vector of the diabatic |a> state there.
fn sb_static(
    cfg: &SpinBosonConfig,
) -> Result<(crate::two_level::AdiabaticFrame, RateSet, BlochState), HarnessError> {
    let model = cfg.bare_model();
    let frame = adiabatize(&model.point(&[]), None)
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let rates =
        redfield_rates(&frame, &[cfg.classical_channel(), cfg.quantum_channel()])?;
    let ez = expand_diabatic_operator(&frame, &DiabaticOperator::sigma_z());
    Ok((frame, rates, BlochState::new(ez.ax, ez.ay, ez.az)))
}

/// Deterministic master equation for the spin-boson benchmark: both baths
/// become golden-rule rates at the bare geometry (there are no explicit
/// modes to move), started from the diabatic |a> Bloch vector.
fn sb_redfield(cfg: &SpinBosonConfig) -> Result<EnsembleResult, HarnessError> {
    let (frame, rates, rho0) = sb_static(cfg)?;
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let states = propagate_static(&rates, rho0, &tgrid)?;
    let ea = expand_diabatic_operator(&frame, &DiabaticOperator::projector_a());
    let n = states.len();
    let zeros = vec![0.0; n];
    let pop_a: Vec<f64> = states
        .iter()
        .map(|s| ea.against_spin(&SpinVector::new(s.x, s.y, s.z)))
        .collect();
    let up: Vec<f64> = states.iter().map(|s| 0.5 * (1.0 + s.z)).collect();
    let down: Vec<f64> = states.iter().map(|s| 0.5 * (1.0 - s.z)).collect();
    Ok(EnsembleResult {
        method: Method::Redfield,
        seed: cfg.seed,
        n_traj: 1,
        times: tgrid.iter().map(|t| t * cfg.delta).collect(),
        estimators: vec![
            EstimatorSeries::new("pop_a", pop_a, zeros.clone()),
            EstimatorSeries::new("pop_upper", up, zeros.clone()),
            EstimatorSeries::new("pop_lower", down, zeros),
        ],
        wall_seconds: 0.0,
    })
}

/// Jump unravelling of the static spin-boson master equation.  Every
/// trajectory starts at the same pure-state Bloch vector; randomness
/// enters only through the jumps.
fn sb_unravel(cfg: &SpinBosonConfig) -> Result<EnsembleResult, HarnessError> {
    let (frame, rates, rho0) = sb_static(cfg)?;
    let spin0 = SpinVector::new(rho0.x, rho0.y, rho0.z);
    let ea = expand_diabatic_operator(&frame, &DiabaticOperator::projector_a());
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let dt_max = cfg.resolved_dt(Method::Unravel);
    let n_out = tgrid.len();
    let seed = cfg.seed;

    struct Partial {
        pa: Vec<MeanAccumulator>,
        z: Vec<MeanAccumulator>,
    }

    let partials = run_chunks(cfg.n_traj, |lo, hi| {
        let mut part = Partial {
            pa: vec![MeanAccumulator::default(); n_out],
            z: vec![MeanAccumulator::default(); n_out],
        };
        for idx in lo..hi {
            let mut rng = trajectory_rng(seed, idx);
            let mut traj = QuantumTrajectory::new(spin0, 0.0);
            part.pa[0].push(ea.against_spin(&traj.spin));
            part.z[0].push(traj.spin.z);
            for k in 1..n_out {
                let interval = tgrid[k] - tgrid[k - 1];
                let n_sub = substeps(interval, dt_max);
                let h = interval / n_sub as f64;
                for _ in 0..n_sub {
                    pdp_step(&mut traj, 0.0, &rates, h, &mut rng)
                        .map_err(|e| traj_err(idx, e))?;
                }
                part.pa[k].push(ea.against_spin(&traj.spin));
                part.z[k].push(traj.spin.z);
            }
        }
        Ok(part)
    })?;

    let mut pa = vec![MeanAccumulator::default(); n_out];
    let mut z = vec![MeanAccumulator::default(); n_out];
    for part in &partials {
        for k in 0..n_out {
            pa[k].merge(&part.pa[k]);
            z[k].merge(&part.z[k]);
        }
    }
    Ok(EnsembleResult {
        method: Method::Unravel,
        seed,
        n_traj: cfg.n_traj,
        times: tgrid.iter().map(|t| t * cfg.delta).collect(),
        estimators: vec![
            EstimatorSeries::new(
                "pop_a",
                pa.iter().map(MeanAccumulator::mean).collect(),
                pa.iter().map(MeanAccumulator::stderr).collect(),
            ),
            EstimatorSeries::new(
                "pop_upper",
                z.iter().map(|a| 0.5 * (1.0 + a.mean())).collect(),
                z.iter().map(|a| 0.5 * a.stderr()).collect(),
            ),
            EstimatorSeries::new(
                "pop_lower",
                z.iter().map(|a| 0.5 * (1.0 - a.mean())).collect(),
                z.iter().map(|a| 0.5 * a.stderr()).collect(),
            ),
        ],
        wall_seconds: 0.0,
    })
}

/// Isolated surface hopping on the cavity molecule: the nuclear coordinate
/// starts from the ground-state Wigner distribution at the displaced well,
/// the electronic state on the upper adiabat (upper-hemisphere spins).
fn cavity_mash(cfg: &CavityConfig) -> Result<EnsembleResult, HarnessError> {
    let model = cfg.build_model();
    let x0 = model.wigner_center();
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let dt_max = cfg.resolved_dt();
    let n_out = tgrid.len();
    let seed = cfg.seed;

    let partials = run_chunks(cfg.n_traj, |lo, hi| {
        let mut part = RatioPartial::new(n_out, false);
        let mut prop = MashPropagator::new(&model);
        for idx in lo..hi {
            let mut rng = trajectory_rng(seed, idx);
            let (q, p) = sample_wigner_ground(model.omega0, x0, &mut rng);
            let spin0 = sample_sphere(&mut rng, SphereRegion::Upper);
            let mut state = MashState::prepare(&model, vec![q], vec![p], spin0)
                .map_err(|e| traj_err(idx, e))?;
            prop.prime(&state).map_err(|e| traj_err(idx, e))?;
            let z0 = spin0.z.abs();
            part.axis[0].push(spin0.z, z0);
            part.naive[0].push(z0, z0);
            for k in 1..n_out {
                let interval = tgrid[k] - tgrid[k - 1];
                let n_sub = substeps(interval, dt_max);
                let h = interval / n_sub as f64;
                for _ in 0..n_sub {
                    prop.step(&mut state, h).map_err(|e| traj_err(idx, e))?;
                }
                part.axis[k].push(state.spin.z, z0);
                part.naive[k].push(state.spin.z.abs(), z0);
            }
        }
        Ok(part)
    })?;

    let merged = merge_partials(partials);
    let (up, down) = population_series(&merged.axis);
    Ok(EnsembleResult {
        method: Method::Mash,
        seed,
        n_traj: cfg.n_traj,
        times: tgrid.iter().map(|t| t / FEMTOSECOND).collect(),
        estimators: vec![up, down, naive_series(&merged.naive)],
        wall_seconds: 0.0,
    })
}

/// Hybrid propagation on the cavity molecule: surface hopping for the
/// vibration, golden-rule jumps into the cavity-dressed vacuum for the
/// photons.  The emission-rate column is the binned weighted count of
/// sigma- jumps per unit time; its bin k covers [t_k, t_{k+1}) and the
/// final row is zero padding.
fn cavity_hybrid(cfg: &CavityConfig) -> Result<EnsembleResult, HarnessError> {
    let model = cfg.build_model();
    let x0 = model.wigner_center();
    // Photon channels carry no shift table, so the ceiling is unused.
    let channels = vec![PreparedChannel::prepare(&cfg.photon_channel(), 1.0)?];
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let dt_max = cfg.resolved_dt();
    let n_out = tgrid.len();
    let seed = cfg.seed;

    let partials = run_chunks(cfg.n_traj, |lo, hi| {
        let mut part = RatioPartial::new(n_out, false);
        let mut prop = HybridPropagator::new(&model, &channels);
        for idx in lo..hi {
            let mut rng = trajectory_rng(seed, idx);
            let (q, p) = sample_wigner_ground(model.omega0, x0, &mut rng);
            let spin0 = sample_sphere(&mut rng, SphereRegion::Upper);
            let mut state = HybridState::prepare(
                &model,
                vec![q],
                vec![p],
                spin0,
                ObservableClass::Population,
            )
            .map_err(|e| traj_err(idx, e))?;
            prop.prime(&state).map_err(|e| traj_err(idx, e))?;
            let w0 = state.weight.prefactor;
            let d0 = w0 * spin0.z.abs();
            part.axis[0].push(w0 * spin0.z, d0);
            part.naive[0].push(d0, d0);
            for k in 1..n_out {
                let interval = tgrid[k] - tgrid[k - 1];
                let n_sub = substeps(interval, dt_max);
                let h = interval / n_sub as f64;
                for _ in 0..n_sub {
                    prop.step(&mut state, h, &mut rng).map_err(|e| traj_err(idx, e))?;
                }
                let w = state.weight.prefactor;
                part.axis[k].push(w * state.mash.spin.z, d0);
                part.naive[k].push(w * state.mash.spin.z.abs(), d0);
            }
            part.logs.push(std::mem::take(&mut state.jumps));
        }
        Ok(part)
    })?;

    let merged = merge_partials(partials);
    let denominator = merged.axis[0].mean_y();
    let histogram = emission_rate_histogram(
        merged.logs.iter().map(Vec::as_slice),
        (0.0, cfg.raw_t_final()),
        n_out - 1,
        denominator,
    )
    .map_err(|e| HarnessError::Setup(e.to_string()))?;
    // Rates are per atomic time unit; report them per femtosecond to match
    // the time column.
    let mut rate: Vec<f64> = histogram.rate.iter().map(|r| r * FEMTOSECOND).collect();
    let mut rate_err: Vec<f64> = histogram.stderr.iter().map(|r| r * FEMTOSECOND).collect();
    rate.push(0.0);
    rate_err.push(0.0);

    let (up, down) = population_series(&merged.axis);
    Ok(EnsembleResult {
        method: Method::Hybrid,
        seed,
        n_traj: cfg.n_traj,
        times: tgrid.iter().map(|t| t / FEMTOSECOND).collect(),
        estimators: vec![
            up,
            down,
            naive_series(&merged.naive),
            EstimatorSeries::new("emission_rate", rate, rate_err),
        ],
        wall_seconds: 0.0,
    })
}

/// Frozen-geometry rates for the cavity benchmark: the nuclear coordinate
/// is pinned at the initial wavepacket center, the prescribed path of the
/// implicit treatments.
fn cavity_static(cfg: &CavityConfig) -> Result<RateSet, HarnessError> {
    let model = cfg.build_model();
    let frame = adiabatize(&model.point(&[model.wigner_center()]), None)
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    Ok(redfield_rates(&frame, &[cfg.photon_channel()])?)
}

/// Deterministic master equation for the cavity benchmark at the frozen
/// initial geometry, started from the upper adiabat.  The emission rate
/// here is the instantaneous gamma- P_upper(t).
fn cavity_redfield(cfg: &CavityConfig) -> Result<EnsembleResult, HarnessError> {
    let rates = cavity_static(cfg)?;
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let states = propagate_static(&rates, BlochState::new(0.0, 0.0, 1.0), &tgrid)?;
    let n = states.len();
    let zeros = vec![0.0; n];
    let up: Vec<f64> = states.iter().map(|s| 0.5 * (1.0 + s.z)).collect();
    let down: Vec<f64> = states.iter().map(|s| 0.5 * (1.0 - s.z)).collect();
    let emission: Vec<f64> =
        up.iter().map(|p| rates.gamma_minus * p * FEMTOSECOND).collect();
    Ok(EnsembleResult {
        method: Method::Redfield,
        seed: cfg.seed,
        n_traj: 1,
        times: tgrid.iter().map(|t| t / FEMTOSECOND).collect(),
        estimators: vec![
            EstimatorSeries::new("pop_upper", up, zeros.clone()),
            EstimatorSeries::new("pop_lower", down, zeros.clone()),
            EstimatorSeries::new("emission_rate", emission, zeros),
        ],
        wall_seconds: 0.0,
    })
}

/// Jump unravelling of the frozen-geometry cavity master equation.
fn cavity_unravel(cfg: &CavityConfig) -> Result<EnsembleResult, HarnessError> {
    let rates = cavity_static(cfg)?;
    let spin0 = SpinVector::north_pole();
    let tgrid = time_grid(cfg.raw_t_final(), cfg.grid_points);
    let dt_max = cfg.resolved_dt();
    let n_out = tgrid.len();
    let seed = cfg.seed;

    let partials = run_chunks(cfg.n_traj, |lo, hi| {
        let mut z = vec![MeanAccumulator::default(); n_out];
        for idx in lo..hi {
            let mut rng = trajectory_rng(seed, idx);
            let mut traj = QuantumTrajectory::new(spin0, 0.0);
            z[0].push(traj.spin.z);
            for k in 1..n_out {
                let interval = tgrid[k] - tgrid[k - 1];
                let n_sub = substeps(interval, dt_max);
                let h = interval / n_sub as f64;
                for _ in 0..n_sub {
                    pdp_step(&mut traj, 0.0, &rates, h, &mut rng)
                        .map_err(|e| traj_err(idx, e))?;
                }
                z[k].push(traj.spin.z);
            }
        }
        Ok(z)
    })?;

    let mut z = vec![MeanAccumulator::default(); n_out];
    for part in &partials {
        for k in 0..n_out {
            z[k].merge(&part[k]);
        }
    }
    let up: Vec<f64> = z.iter().map(|a| 0.5 * (1.0 + a.mean())).collect();
    let up_err: Vec<f64> = z.iter().map(|a| 0.5 * a.stderr()).collect();
    Ok(EnsembleResult {
        method: Method::Unravel,
        seed,
        n_traj: cfg.n_traj,
        times: tgrid.iter().map(|t| t / FEMTOSECOND).collect(),
        estimators: vec![
            EstimatorSeries::new("pop_upper", up.clone(), up_err.clone()),
            EstimatorSeries::new(
                "pop_lower",
                up.iter().map(|p| 1.0 - p).collect(),
                up_err.clone(),
            ),
            EstimatorSeries::new(
                "emission_rate",
                up.iter().map(|p| rates.gamma_minus * p * FEMTOSECOND).collect(),
                up_err.iter().map(|e| rates.gamma_minus * e * FEMTOSECOND).collect(),
            ),
        ],
        wall_seconds: 0.0,
    })
}
