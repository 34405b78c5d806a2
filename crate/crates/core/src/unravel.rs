//! Piecewise-deterministic unravelling of the secular master equation.
//!
//! Each trajectory carries a normalized spin vector S (the Bloch vector of
//! a pure state) that follows the nonlinear no-jump drift
//!
//! ```text
//!     dSx/dt = -w Sy + 2 tau Sz + (d/2) Sx Sz
//!     dSy/dt = +w Sx            + (d/2) Sy Sz
//!     dSz/dt = -2 tau Sx - (d/2) (1 - Sz^2),        d = g- - g+
//! ```
//!
//! interrupted by stochastic jumps.  Per unit time a trajectory takes
//!
//! ```text
//!     sigma+  with rate g+ (1 - Sz)/2   -> north pole
//!     sigma-  with rate g- (1 + Sz)/2   -> south pole
//!     sigma_z with rate gz              -> (Sx, Sy) -> (-Sx, -Sy)
//! ```
//!
//! The jump rates are the quantum populations of the source level, so the
//! drift plus jumps average exactly to the secular Bloch equation: the
//! drift states the evolution conditioned on observing no jump, which for
//! g- > g+ pulls the spin toward the south pole while jumps reinject it at
//! the poles.  Both parts preserve |S| = 1, and the ensemble mean of S is
//! an unbiased estimator of the density-matrix Bloch vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bath::RateSet;
use crate::ode::rk4_step;
use crate::stats::MeanAccumulator;
use crate::two_level::{BlochState, SpinVector};

/// Largest allowed total jump probability in one step.
pub const JUMP_PROBABILITY_CAP: f64 = 0.1;

/// Spin-norm tolerance maintained after every step.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdpError {
    #[error("total jump probability {probability} in one step exceeds {JUMP_PROBABILITY_CAP}")]
    StepTooLarge { probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpChannel {
    Plus,
    Minus,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: JumpChannel,
}

/// One stochastic realization: the current spin, its clock, and the log of
/// every jump taken so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumTrajectory {
    pub spin: SpinVector,
    pub time: f64,
    pub jumps: Vec<JumpEvent>,
}

impl QuantumTrajectory {
    pub fn new(spin: SpinVector, time: f64) -> Self {
        Self { spin, time, jumps: Vec::new() }
    }
}

/// No-jump drift for one interval dt, renormalized to unit length.
///
/// The drift is integrated with the classical fourth-order scheme; the
/// renormalization only removes the O(dt^5) truncation leakage, since the
/// exact flow preserves the sphere.
pub fn pdp_drift(spin: SpinVector, tau: f64, rates: &RateSet, dt: f64) -> SpinVector {
    let w = rates.omega_ls;
    let d = rates.gamma_minus - rates.gamma_plus;
    let f = |_t: f64, s: [f64; 3]| {
        [
            -w * s[1] + 2.0 * tau * s[2] + 0.5 * d * s[0] * s[2],
            w * s[0] + 0.5 * d * s[1] * s[2],
            -2.0 * tau * s[0] - 0.5 * d * (1.0 - s[2] * s[2]),
        ]
    };
    let out = rk4_step(&f, 0.0, [spin.x, spin.y, spin.z], dt);
    SpinVector::new(out[0], out[1], out[2]).normalized()
}

/// Advance one trajectory by dt: sample at most one jump with first-order
/// probabilities, otherwise apply the no-jump drift.
pub fn pdp_step<R: Rng + ?Sized>(
    traj: &mut QuantumTrajectory,
    tau: f64,
    rates: &RateSet,
    dt: f64,
    rng: &mut R,
) -> Result<(), PdpError> {
    let p_plus = rates.gamma_plus * 0.5 * (1.0 - traj.spin.z) * dt;
    let p_minus = rates.gamma_minus * 0.5 * (1.0 + traj.spin.z) * dt;
    let p_z = rates.gamma_z * dt;
    let total = p_plus + p_minus + p_z;
    if total > JUMP_PROBABILITY_CAP {
        return Err(PdpError::StepTooLarge { probability: total });
    }
    // Draw only when a jump is possible so that rate-free evolution
    // consumes no randomness.
    if total > 0.0 {
        let u: f64 = rng.gen();
        if u < p_plus {
            traj.spin = SpinVector::north_pole();
            traj.jumps.push(JumpEvent { time: traj.time, channel: JumpChannel::Plus });
            traj.time += dt;
            return Ok(());
        } else if u < p_plus + p_minus {
            traj.spin = SpinVector::south_pole();
            traj.jumps.push(JumpEvent { time: traj.time, channel: JumpChannel::Minus });
            traj.time += dt;
            return Ok(());
        } else if u < total {
            traj.spin = SpinVector::new(-traj.spin.x, -traj.spin.y, traj.spin.z);
            traj.jumps.push(JumpEvent { time: traj.time, channel: JumpChannel::Z });
            traj.time += dt;
            return Ok(());
        }
    }
    traj.spin = pdp_drift(traj.spin, tau, rates, dt);
    traj.time += dt;
    Ok(())
}

/// Component-wise ensemble mean and standard error of the spins.
pub fn ensemble_density(spins: &[SpinVector]) -> (BlochState, [f64; 3]) {
    let mut acc = [MeanAccumulator::default(); 3];
    for s in spins {
        acc[0].push(s.x);
        acc[1].push(s.y);
        acc[2].push(s.z);
    }
    (
        BlochState::new(acc[0].mean(), acc[1].mean(), acc[2].mean()),
        [acc[0].stderr(), acc[1].stderr(), acc[2].stderr()],
    )
}
