//! Dissipative surface hopping: spin-mapping trajectories coupled to
//! golden-rule baths.
//!
//! Between stochastic events a trajectory follows the closed spin-mapping
//! dynamics dressed by the bath: the gap carries its level shift
//! (omega_ls), the nuclear force the gradient of that shift, and the spin
//! drift a non-unitary transverse term,
//!
//! ```text
//!     dSx/dt = -omega_ls Sy + 2 tau Sz + (d/2) Sx sgn Sz
//!     dSy/dt = +omega_ls Sx            + (d/2) Sy sgn Sz
//!     dSz/dt = -2 tau Sx,                        d = g- - g+
//! ```
//!
//! which grows the transverse components in the upper hemisphere and
//! shrinks them in the lower one (for g- > g+).  On ensemble average that
//! growth exactly balances the coherence removed by the stochastic jumps,
//! sampled per unit time as
//!
//! ```text
//!     sigma-  with rate g-  from the upper hemisphere
//!     sigma+  with rate g+  from the lower hemisphere
//!     sigma_z with rate gz  from either
//! ```
//!
//! A sigma+ or sigma- jump resamples the spin uniformly from the upper or
//! lower hemisphere, multiplies the trajectory weight by 2 |S_z| read just
//! before the jump, and flips the active surface without touching the
//! momenta; a sigma_z jump only rotates (Sx, Sy) -> (-Sx, -Sy).  Equator
//! crossings of the deterministic drift are still resolved by hop impulses
//! against the shifted gap, so the two state-change mechanisms stay
//! distinct: hops conserve the trajectory energy exactly, jumps trade
//! exactly +-omega_ls with the bath (bookkept in the state).
//!
//! Weighted averages over these trajectories reproduce the secular master
//! equation along the nuclear path.  [`driven_spin_ensemble`] runs exactly
//! that reduction for a prescribed rate schedule, which lets the whole jump
//! and reweighting machinery be checked against the density-matrix
//! propagator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bath::{PreparedChannel, RateSet};
use crate::engine::Stepper;
use crate::linalg::Mat3;
use crate::mash_core::{
    spin_generator, Active, MashError, MashState, ObservableClass, StepReport, WeightRecord,
};
use crate::redfield_me::{DrivenSchedule, MasterEqError};
use crate::rng::trajectory_rng;
use crate::stats::MeanAccumulator;
use crate::two_level::{
    sample_sphere, AdiabaticFrame, BlochState, DiabaticModel, SphereRegion, SpinVector,
};
use crate::unravel::{JumpChannel, JUMP_PROBABILITY_CAP};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HybridError {
    #[error("total jump probability {probability} in one step exceeds {JUMP_PROBABILITY_CAP}")]
    StepTooLarge { probability: f64 },
    #[error(transparent)]
    Dynamics(#[from] MashError),
    #[error(transparent)]
    Schedule(#[from] MasterEqError),
}

/// One logged stochastic jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub channel: JumpChannel,
    /// Population reading a |S_z| taken just before the jump; sigma-
    /// records enter the emission histogram with this weight.
    pub emission_weight: f64,
}

/// One dissipative trajectory: the phase point and spin of the underlying
/// surface-hopping state (the spin norm is free here), the running
/// statistical weight, and the log of every jump taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub mash: MashState,
    pub weight: WeightRecord,
    pub time: f64,
    pub jumps: Vec<JumpRecord>,
    /// Net system energy traded through jumps: +omega_ls per sigma+ jump,
    /// -omega_ls per sigma-.  E(t) - energy_exchanged tracks the conserved
    /// energy of the closed dynamics.
    pub energy_exchanged: f64,
}

impl HybridState {
    /// Builds a trajectory at (q, p, spin) carrying the weight of the given
    /// initial observable class, with the clock at zero.
    pub fn prepare(
        model: &dyn DiabaticModel,
        q: Vec<f64>,
        p: Vec<f64>,
        spin: SpinVector,
        class: ObservableClass,
    ) -> Result<Self, MashError> {
        Ok(Self {
            mash: MashState::prepare(model, q, p, spin)?,
            weight: WeightRecord::new(class),
            time: 0.0,
            jumps: Vec::new(),
            energy_exchanged: 0.0,
        })
    }
}

/// Deterministic spin update over dt at fixed frame data, S(t + dt) =
/// exp(G dt) S(t) with the drift generator above.  Valid while sgn S_z is
/// constant over the interval; the stepper splits at equator crossings
/// before calling into this evolution.
pub fn hybrid_spin_propagate(
    spin: &SpinVector,
    tau: f64,
    rates: &RateSet,
    dt: f64,
) -> SpinVector {
    let rate = 0.5 * (rates.gamma_minus - rates.gamma_plus) * spin.sign_z();
    spin_generator(rates.omega_ls, tau, rate)
        .scale(dt)
        .expm()
        .apply(spin)
}

/// Per-unit-time probabilities (P_plus, P_minus, P_z) of the three jump
/// channels.  The hemisphere gates make sigma- fire only from the upper
/// hemisphere and sigma+ only from the lower one; dephasing fires from
/// either.  The equator itself is never consulted: crossings are resolved
/// by hops before any jump can be sampled there.
pub fn jump_probabilities(spin: &SpinVector, rates: &RateSet) -> (f64, f64, f64) {
    if spin.z > 0.0 {
        (0.0, rates.gamma_minus, rates.gamma_z)
    } else {
        (rates.gamma_plus, 0.0, rates.gamma_z)
    }
}

/// Applies one fired jump channel to the trajectory.
///
/// sigma+-: log the jump, absorb 2 |S_z| into the weight, resample the spin
/// uniformly from the upper/lower hemisphere, and set the active surface to
/// match.  sigma_z: rotate (Sx, Sy) -> (-Sx, -Sy) with no reweighting.
/// No channel rescales the momenta.
pub fn apply_jump<R: Rng + ?Sized>(state: &mut HybridState, channel: JumpChannel, rng: &mut R) {
    let emission_weight = state.weight.population_weight(&state.mash.spin);
    state.jumps.push(JumpRecord { time: state.time, channel, emission_weight });
    match channel {
        JumpChannel::Plus => {
            state.weight.absorb_jump(state.mash.spin.z.abs());
            state.mash.spin = sample_sphere(rng, SphereRegion::Upper);
            state.mash.active = Active::Upper;
        }
        JumpChannel::Minus => {
            state.weight.absorb_jump(state.mash.spin.z.abs());
            state.mash.spin = sample_sphere(rng, SphereRegion::Lower);
            state.mash.active = Active::Lower;
        }
        JumpChannel::Z => {
            let s = &state.mash.spin;
            state.mash.spin = SpinVector::new(-s.x, -s.y, s.z);
        }
    }
}

/// One dissipative step: sample at most one jump at the step start, then
/// run the shared deterministic splitting (half-spin, velocity Verlet on
/// the dressed surfaces, half-spin) with rates read at the current
/// geometry.
///
/// This form re-evaluates the model once extra per call to seed its cache;
/// long runs should hold a [`HybridPropagator`] instead.
pub fn hybrid_step<R: Rng + ?Sized>(
    state: &mut HybridState,
    model: &dyn DiabaticModel,
    channels: &[PreparedChannel],
    dt: f64,
    rng: &mut R,
) -> Result<StepReport, HybridError> {
    let mut propagator = HybridPropagator::new(model, channels);
    propagator.prime(state)?;
    propagator.step(state, dt, rng)
}

/// Reusable dissipative stepper holding the frame-and-rate cache between
/// steps, so each step costs exactly one model evaluation.
pub struct HybridPropagator<'m> {
    stepper: Stepper<'m>,
}

impl<'m> HybridPropagator<'m> {
    pub fn new(model: &'m dyn DiabaticModel, channels: &'m [PreparedChannel]) -> Self {
        Self { stepper: Stepper::new(model, Some(channels)) }
    }

    /// Fills the frame-and-rate cache at the state's current geometry.
    /// Call once before the first step and again whenever q changed outside
    /// `step`.
    pub fn prime(&mut self, state: &HybridState) -> Result<(), MashError> {
        self.stepper.prime(&state.mash.q, Some(state.mash.theta))
    }

    /// Adiabatic frame of the cached geometry; valid after `prime` or
    /// `step`.
    pub fn frame(&self) -> &AdiabaticFrame {
        self.stepper.frame()
    }

    /// Golden-rule rates of the cached geometry; valid after `prime` or
    /// `step`.
    pub fn rates(&self) -> &RateSet {
        self.stepper.rates()
    }

    /// Energy on the dressed surfaces at the cached geometry,
    /// p^2/2 + vbar + s omega_ls/2.  Constant between jumps up to the
    /// integrator drift; each jump moves it by exactly the bookkept
    /// +-omega_ls.
    pub fn cached_energy(&self, state: &HybridState) -> f64 {
        state.mash.kinetic_energy()
            + self.stepper.frame().vbar
            + 0.5 * state.mash.active.sign() * self.stepper.rates().omega_ls
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut HybridState,
        dt: f64,
        rng: &mut R,
    ) -> Result<StepReport, HybridError> {
        let rates = *self.stepper.rates();
        let (p_plus, p_minus, p_z) = jump_probabilities(&state.mash.spin, &rates);
        let probability = (p_plus + p_minus + p_z) * dt;
        if probability > JUMP_PROBABILITY_CAP {
            return Err(HybridError::StepTooLarge { probability });
        }
        // Draw only when a jump is possible, so that zero-coupling runs
        // consume no randomness and replay the closed dynamics exactly.
        if probability > 0.0 {
            let u: f64 = rng.gen();
            let channel = if u < p_plus * dt {
                Some(JumpChannel::Plus)
            } else if u < (p_plus + p_minus) * dt {
                Some(JumpChannel::Minus)
            } else if u < probability {
                Some(JumpChannel::Z)
            } else {
                None
            };
            if let Some(channel) = channel {
                apply_jump(state, channel, rng);
                state.energy_exchanged += match channel {
                    JumpChannel::Plus => rates.omega_ls,
                    JumpChannel::Minus => -rates.omega_ls,
                    JumpChannel::Z => 0.0,
                };
            }
        }
        let report = self.stepper.step(&mut state.mash, dt)?;
        state.time += dt;
        Ok(report)
    }
}

/// Component-wise mean and standard error of the weighted spins a S_i,
/// the trajectory estimator of the Bloch vector.
pub fn weighted_bloch(samples: &[(f64, SpinVector)]) -> (BlochState, [f64; 3]) {
    let mut acc = [MeanAccumulator::default(); 3];
    for (a, s) in samples {
        acc[0].push(a * s.x);
        acc[1].push(a * s.y);
        acc[2].push(a * s.z);
    }
    (
        BlochState::new(acc[0].mean(), acc[1].mean(), acc[2].mean()),
        [acc[0].stderr(), acc[1].stderr(), acc[2].stderr()],
    )
}

/// Binned photon-emission rate with its standard error, plus the
/// integrated emission probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionHistogram {
    /// Bin edges, `rate.len() + 1` of them.
    pub edges: Vec<f64>,
    /// Emission probability per unit time in each bin.
    pub rate: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Total emission probability over the span.
    pub integrated: f64,
    pub integrated_stderr: f64,
}

/// Histograms the sigma- jumps of an ensemble into an emission rate.
///
/// Each jump contributes its logged weight a |S_z| to its time bin; bin
/// sums are averaged over trajectories and divided by the bin width and
/// the reference denominator (the ensemble mean of the initial population
/// weight), making the result directly comparable to the quantum rate
/// g- P_upper.
pub fn emission_rate_histogram<'a, I>(
    logs: I,
    span: (f64, f64),
    n_bins: usize,
    denominator: f64,
) -> Result<EmissionHistogram, MashError>
where
    I: IntoIterator<Item = &'a [JumpRecord]>,
{
    assert!(n_bins > 0, "histogram needs at least one bin");
    assert!(span.1 > span.0, "histogram span must have positive width");
    if denominator == 0.0 {
        return Err(MashError::ZeroDenominator);
    }
    let width = (span.1 - span.0) / n_bins as f64;
    let mut acc = vec![MeanAccumulator::default(); n_bins];
    let mut total_acc = MeanAccumulator::default();
    let mut scratch = vec![0.0; n_bins];
    for log in logs {
        scratch.fill(0.0);
        let mut total = 0.0;
        for jump in log {
            if jump.channel != JumpChannel::Minus {
                continue;
            }
            if jump.time < span.0 || jump.time >= span.1 {
                continue;
            }
            let bin = (((jump.time - span.0) / width) as usize).min(n_bins - 1);
            scratch[bin] += jump.emission_weight;
            total += jump.emission_weight;
        }
        for (a, x) in acc.iter_mut().zip(&scratch) {
            a.push(x / (width * denominator));
        }
        total_acc.push(total / denominator);
    }
    let edges = (0..=n_bins).map(|k| span.0 + k as f64 * width).collect();
    Ok(EmissionHistogram {
        edges,
        rate: acc.iter().map(MeanAccumulator::mean).collect(),
        stderr: acc.iter().map(MeanAccumulator::stderr).collect(),
        integrated: total_acc.mean(),
        integrated_stderr: total_acc.stderr(),
    })
}

/// Bloch-vector estimate of a weighted spin ensemble on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivenEnsemble {
    pub times: Vec<f64>,
    pub mean: Vec<BlochState>,
    pub stderr: Vec<[f64; 3]>,
}

/// Precomputed update for one substep: exact drift propagators for both
/// hemispheres over the full and the half step (midpoint frame data), and
/// the start-of-step jump probabilities.
struct SubStep {
    /// Index 0: upper-hemisphere generator, 1: lower.
    full: [Mat3; 2],
    half: [Mat3; 2],
    p_plus: f64,
    p_minus: f64,
    p_z: f64,
}

fn plan_substeps(
    schedule: &DrivenSchedule,
    tgrid: &[f64],
    dt_max: f64,
) -> Result<(Vec<SubStep>, Vec<usize>), HybridError> {
    let mut subs = Vec::new();
    let mut boundary = vec![0_usize; tgrid.len()];
    for k in 1..tgrid.len() {
        let (t0, t1) = (tgrid[k - 1], tgrid[k]);
        if t1 <= t0 {
            return Err(MasterEqError::GridNotIncreasing.into());
        }
        let n = ((t1 - t0) / dt_max).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        for j in 0..n {
            let start = t0 + j as f64 * h;
            let (_, r0) = schedule.at(start)?;
            let (tau, rm) = schedule.at(start + 0.5 * h)?;
            let probability = (r0.gamma_plus.max(r0.gamma_minus) + r0.gamma_z) * h;
            if probability > JUMP_PROBABILITY_CAP {
                return Err(HybridError::StepTooLarge { probability });
            }
            let d = 0.5 * (rm.gamma_minus - rm.gamma_plus);
            let up = spin_generator(rm.omega_ls, tau, d);
            let down = spin_generator(rm.omega_ls, tau, -d);
            subs.push(SubStep {
                full: [up.scale(h).expm(), down.scale(h).expm()],
                half: [up.scale(0.5 * h).expm(), down.scale(0.5 * h).expm()],
                p_plus: r0.gamma_plus * h,
                p_minus: r0.gamma_minus * h,
                p_z: r0.gamma_z * h,
            });
        }
        boundary[k] = subs.len();
    }
    Ok((subs, boundary))
}

/// Advances one spin through one substep: jump sampling at the start, then
/// the exact drift of its hemisphere, with one bisection level when the
/// drift crosses the equator (there are no nuclei here, so a crossing only
/// switches the transverse-rate sign).
fn advance_spin<R: Rng + ?Sized>(
    sub: &SubStep,
    spin: &mut SpinVector,
    a: &mut f64,
    rng: &mut R,
) {
    let (p_plus, p_minus) =
        if spin.z > 0.0 { (0.0, sub.p_minus) } else { (sub.p_plus, 0.0) };
    let total = p_plus + p_minus + sub.p_z;
    if total > 0.0 {
        let u: f64 = rng.gen();
        if u < p_plus {
            *a *= 2.0 * spin.z.abs();
            *spin = sample_sphere(rng, SphereRegion::Upper);
        } else if u < p_plus + p_minus {
            *a *= 2.0 * spin.z.abs();
            *spin = sample_sphere(rng, SphereRegion::Lower);
        } else if u < total {
            *spin = SpinVector::new(-spin.x, -spin.y, spin.z);
        }
    }
    let up = spin.z > 0.0;
    let idx = usize::from(!up);
    let evolved = sub.full[idx].apply(spin);
    if (evolved.z > 0.0) == up {
        *spin = evolved;
        return;
    }
    let mid = sub.half[idx].apply(spin);
    let idx2 = usize::from(!(mid.z > 0.0));
    *spin = sub.half[idx2].apply(&mid);
}

/// Transports a weighted spin ensemble along a prescribed rate schedule
/// and reports the Bloch estimate on the output grid.
///
/// Trajectories start uniformly on the upper hemisphere with weight 2, the
/// ensemble that represents a pure upper-state density matrix, so the
/// estimates are directly comparable to the density-matrix propagator
/// started from (0, 0, 1).  Substeps never exceed `dt_max` and divide each
/// grid interval evenly; the drift uses midpoint frame data, jumps use
/// start-of-step rates.
pub fn driven_spin_ensemble(
    schedule: &DrivenSchedule,
    tgrid: &[f64],
    dt_max: f64,
    n_traj: u64,
    seed: u64,
) -> Result<DrivenEnsemble, HybridError> {
    let (subs, boundary) = plan_substeps(schedule, tgrid, dt_max)?;
    let mut acc = vec![[MeanAccumulator::default(); 3]; tgrid.len()];
    for traj in 0..n_traj {
        let mut rng = trajectory_rng(seed, traj);
        let mut spin = sample_sphere(&mut rng, SphereRegion::Upper);
        let mut a = 2.0;
        record(&mut acc[0], a, &spin);
        let mut pos = 0;
        for k in 1..tgrid.len() {
            while pos < boundary[k] {
                advance_spin(&subs[pos], &mut spin, &mut a, &mut rng);
                pos += 1;
            }
            record(&mut acc[k], a, &spin);
        }
    }
    Ok(DrivenEnsemble {
        times: tgrid.to_vec(),
        mean: acc
            .iter()
            .map(|a| BlochState::new(a[0].mean(), a[1].mean(), a[2].mean()))
            .collect(),
        stderr: acc
            .iter()
            .map(|a| [a[0].stderr(), a[1].stderr(), a[2].stderr()])
            .collect(),
    })
}

fn record(acc: &mut [MeanAccumulator; 3], a: f64, spin: &SpinVector) {
    acc[0].push(a * spin.x);
    acc[1].push(a * spin.y);
    acc[2].push(a * spin.z);
}
