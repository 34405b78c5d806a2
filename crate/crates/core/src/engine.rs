//! Shared deterministic stepper behind the surface-hopping propagators.
//!
//! Closed spin-mapping dynamics and the dissipative hybrid method differ
//! only in what dresses the adiabatic frame: the hybrid adds golden-rule
//! rates, a shifted gap omega_ls, its gradient in the nuclear force, and a
//! transverse growth rate in the spin generator.  Both run the identical
//! code path below; a stepper without bath channels feeds zeros for every
//! dressing term, so switching the bath off reproduces the closed
//! propagator bit for bit.
//!
//! One step is the symmetric splitting
//!
//! ```text
//!     half-step spin rotation at q
//!     velocity-Verlet kick-drift-kick on V = vbar +- omega_ls/2
//!     half-step spin rotation at q'
//! ```
//!
//! with exactly one model evaluation per step (at the new geometry; the old
//! one is cached from the previous step).  Equator crossings inside either
//! spin block are bisected and resolved by the hop impulse, then the block
//! continues with the post-hop momenta; more than
//! [`MAX_CROSSINGS_PER_STEP`] crossings reject the step.
//!
//! [`MAX_CROSSINGS_PER_STEP`]: crate::mash_core::MAX_CROSSINGS_PER_STEP

use crate::bath::{redfield_rates, PreparedChannel, RateChannel, RateSet};
use crate::mash_core::{
    find_hop_time, hop_impulse, spin_generator, HopOutcome, MashError, MashState, StepReport,
    MAX_CROSSINGS_PER_STEP,
};
use crate::two_level::{
    adiabatize_into, expand_diabatic_operator, AdiabaticFrame, DiabaticModel, PotentialPoint,
};

/// Frame-and-rate cache plus the step routine, reused across a trajectory.
pub(crate) struct Stepper<'a> {
    model: &'a dyn DiabaticModel,
    channels: Option<&'a [PreparedChannel]>,
    point: PotentialPoint,
    frame: AdiabaticFrame,
    rates: RateSet,
    grad_shift: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        model: &'a dyn DiabaticModel,
        channels: Option<&'a [PreparedChannel]>,
    ) -> Self {
        let dof = model.dof();
        Self {
            model,
            channels,
            point: PotentialPoint::zeros(dof),
            frame: AdiabaticFrame::zeros(dof),
            rates: RateSet::default(),
            grad_shift: vec![0.0; dof],
        }
    }

    /// Evaluates the cache at `q`; must be called before the first `step`
    /// and after any external change to the geometry.
    pub(crate) fn prime(&mut self, q: &[f64], theta_hint: Option<f64>) -> Result<(), MashError> {
        self.refresh(q, theta_hint)
    }

    pub(crate) fn frame(&self) -> &AdiabaticFrame {
        &self.frame
    }

    pub(crate) fn rates(&self) -> &RateSet {
        &self.rates
    }

    fn refresh(&mut self, q: &[f64], theta_hint: Option<f64>) -> Result<(), MashError> {
        self.model.evaluate(q, &mut self.point);
        adiabatize_into(&self.point, theta_hint, &mut self.frame)?;
        match self.channels {
            None => {
                self.rates = RateSet::default();
                self.rates.omega_ls = self.frame.gap;
                self.grad_shift.fill(0.0);
            }
            Some(channels) => {
                self.rates = redfield_rates(&self.frame, channels)?;
                self.grad_shift.fill(0.0);
                let w = self.frame.gap;
                for channel in channels {
                    let e = expand_diabatic_operator(&self.frame, channel.operator());
                    let perp = e.ax * e.ax + e.ay * e.ay;
                    // d(xi_- - xi_+)/dq through the coupling rotation and
                    // through the gap entering Im Gamma(+-omega).
                    let window = channel.gamma_imag(w)? - channel.gamma_imag(-w)?;
                    let slope =
                        channel.gamma_imag_derivative(w)? + channel.gamma_imag_derivative(-w)?;
                    for j in 0..self.grad_shift.len() {
                        self.grad_shift[j] += 4.0 * e.ax * e.az * self.frame.nac[j] * window
                            + perp * self.frame.grad_gap[j] * slope;
                    }
                }
            }
        }
        Ok(())
    }

    /// Force on the active surface, -d(vbar + s omega_ls / 2)/dq_j.
    fn force(&self, s: f64, j: usize) -> f64 {
        -(self.frame.grad_vbar[j] + 0.5 * s * (self.frame.grad_gap[j] + self.grad_shift[j]))
    }

    /// Transverse-plane rate of the no-jump drift; identically zero without
    /// bath channels so closed dynamics stays norm-preserving.
    fn transverse_rate(&self, s: f64) -> f64 {
        match self.channels {
            None => 0.0,
            Some(_) => 0.5 * (self.rates.gamma_minus - self.rates.gamma_plus) * s,
        }
    }

    /// Fixed-geometry spin evolution over `h`, resolving equator crossings
    /// recursively.
    fn spin_block(
        &self,
        state: &mut MashState,
        h: f64,
        crossings: &mut u32,
        report: &mut StepReport,
    ) -> Result<(), MashError> {
        if h <= 0.0 {
            return Ok(());
        }
        let s = state.active.sign();
        let tau: f64 = state.p.iter().zip(&self.frame.nac).map(|(p, d)| p * d).sum();
        let rate = self.transverse_rate(s);
        let generator = spin_generator(self.rates.omega_ls, tau, rate);
        let evolved = generator.scale(h).expm().apply(&state.spin);
        if (evolved.z > 0.0) == (state.spin.z > 0.0) {
            state.spin = evolved;
            if rate == 0.0 {
                // Rotations preserve the norm; strip the round-off of the
                // exponential so closed runs hold |S| = 1 to 1e-10 forever.
                state.spin = state.spin.normalized();
            }
            return Ok(());
        }
        *crossings += 1;
        if *crossings > MAX_CROSSINGS_PER_STEP {
            return Err(MashError::StepTooLarge { crossings: *crossings });
        }
        let t_cross = find_hop_time(&generator, &state.spin, h)?;
        state.spin = generator.scale(t_cross).expm().apply(&state.spin);
        if rate == 0.0 {
            state.spin = state.spin.normalized();
        }
        match hop_impulse(state, &self.frame.nac, self.rates.omega_ls)? {
            HopOutcome::Hopped => report.hops += 1,
            HopOutcome::Frustrated => report.frustrated += 1,
        }
        self.spin_block(state, h - t_cross, crossings, report)
    }

    pub(crate) fn step(&mut self, state: &mut MashState, dt: f64) -> Result<StepReport, MashError> {
        let mut report = StepReport::default();
        let mut crossings = 0_u32;
        let half = 0.5 * dt;
        self.spin_block(state, half, &mut crossings, &mut report)?;
        let s = state.active.sign();
        for j in 0..state.p.len() {
            state.p[j] += half * self.force(s, j);
        }
        for j in 0..state.q.len() {
            state.q[j] += dt * state.p[j];
        }
        self.refresh(&state.q, Some(state.theta))?;
        state.theta = self.frame.theta;
        let s = state.active.sign();
        for j in 0..state.p.len() {
            state.p[j] += half * self.force(s, j);
        }
        self.spin_block(state, half, &mut crossings, &mut report)?;
        Ok(report)
    }
}
