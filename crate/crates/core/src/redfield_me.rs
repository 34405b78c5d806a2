//! Secular Bloch-vector master equation for a two-level system.
//!
//! In the adiabatic basis the secular generator decouples the population
//! sector from the coherence sector.  With the dressed gap w = omega_ls,
//! the nonadiabatic drive tau and the jump rates (g+, g-, gz) the Bloch
//! components obey
//!
//! ```text
//!     dx/dt = -w y + 2 tau z - G2 x
//!     dy/dt = +w x           - G2 y
//!     dz/dt = -2 tau x - (g- - g+) - (g- + g+) z
//! ```
//!
//! where G2 = (g+ + g-)/2 + 2 gz.  For tau = 0 the solution is exponential
//! relaxation of z toward -(g- - g+)/(g- + g+) together with a damped
//! precession of (x, y) at frequency w.  A time-dependent schedule
//! (w(t), tau(t), rates(t)) describes a two-level system carried along a
//! prescribed nuclear path; between its nodes every quantity is linear.
//!
//! Integration uses the classical fourth-order scheme with a fixed substep
//! set by the stiffest frequency in the problem.  Every substep is computed
//! once at full length and once as two halves; the Richardson difference of
//! the two results is the local error estimate.

use serde::{Deserialize, Serialize};

use crate::bath::RateSet;
use crate::ode::rk4_step_doubled;
use crate::two_level::BlochState;

/// Allowed local truncation error per unit time.
pub const LOCAL_ERROR_RATE_TOL: f64 = 1e-8;

/// Substep = STEP_SAFETY / (stiffest rate or frequency).
const STEP_SAFETY: f64 = 1e-3;

/// The Richardson difference cannot resolve truncation error below rounding
/// noise, so differences under this absolute floor are never flagged.
const ERROR_NOISE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MasterEqError {
    #[error("local error rate {error_rate:e} at t = {t} exceeds {LOCAL_ERROR_RATE_TOL:e}")]
    StepTooLarge { t: f64, error_rate: f64 },
    #[error("t = {t} lies outside the schedule support [{start}, {end}]")]
    ScheduleGap { t: f64, start: f64, end: f64 },
    #[error("time grid is not strictly increasing")]
    GridNotIncreasing,
    #[error("schedule arrays have mismatched lengths")]
    MismatchedLengths,
    #[error("schedule rate entry {index} has a negative jump rate")]
    NegativeRate { index: usize },
}

/// Time derivative of the Bloch vector under the secular generator.
pub fn bloch_derivative(rates: &RateSet, tau: f64, rho: [f64; 3]) -> [f64; 3] {
    let w = rates.omega_ls;
    let g2 = rates.gamma_2();
    let gdiff = rates.gamma_minus - rates.gamma_plus;
    let gsum = rates.gamma_minus + rates.gamma_plus;
    [
        -w * rho[1] + 2.0 * tau * rho[2] - g2 * rho[0],
        w * rho[0] - g2 * rho[1],
        -2.0 * tau * rho[0] - gdiff - gsum * rho[2],
    ]
}

/// Piecewise-linear driving record: at each node time a drive tau and a
/// full rate set (including the dressed gap omega_ls).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivenSchedule {
    times: Vec<f64>,
    taus: Vec<f64>,
    rates: Vec<RateSet>,
}

impl DrivenSchedule {
    /// Node times must be strictly increasing and jump rates nonnegative.
    pub fn new(times: Vec<f64>, taus: Vec<f64>, rates: Vec<RateSet>) -> Result<Self, MasterEqError> {
        if times.len() != taus.len() || times.len() != rates.len() || times.len() < 2 {
            return Err(MasterEqError::MismatchedLengths);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MasterEqError::GridNotIncreasing);
        }
        for (index, r) in rates.iter().enumerate() {
            if r.gamma_plus < 0.0 || r.gamma_minus < 0.0 || r.gamma_z < 0.0 {
                return Err(MasterEqError::NegativeRate { index });
            }
        }
        Ok(Self { times, taus, rates })
    }

    /// A schedule that holds one rate set and drive fixed over [t0, t1].
    pub fn constant(t0: f64, t1: f64, tau: f64, rates: RateSet) -> Result<Self, MasterEqError> {
        Self::new(vec![t0, t1], vec![tau, tau], vec![rates, rates])
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("schedule has nodes")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Linear interpolation of (tau, rates) at time t.
    pub fn at(&self, t: f64) -> Result<(f64, RateSet), MasterEqError> {
        if t < self.start() || t > self.end() {
            return Err(MasterEqError::ScheduleGap { t, start: self.start(), end: self.end() });
        }
        // Index of the segment [times[k], times[k+1]] containing t.
        let k = match self.times.partition_point(|&node| node <= t) {
            0 => 0,
            idx if idx >= self.times.len() => self.times.len() - 2,
            idx => idx - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let tau = lerp(self.taus[k], self.taus[k + 1], w);
        let rates = lerp_rates(&self.rates[k], &self.rates[k + 1], w);
        Ok((tau, rates))
    }

    /// Stiffest frequency or rate over all nodes, for the substep rule.
    fn stiffness(&self) -> f64 {
        self.taus
            .iter()
            .zip(&self.rates)
            .map(|(tau, r)| stiffness(r, *tau))
            .fold(0.0, f64::max)
    }
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

fn lerp_rates(a: &RateSet, b: &RateSet, w: f64) -> RateSet {
    RateSet {
        gamma_plus: lerp(a.gamma_plus, b.gamma_plus, w),
        gamma_minus: lerp(a.gamma_minus, b.gamma_minus, w),
        gamma_z: lerp(a.gamma_z, b.gamma_z, w),
        xi_plus: lerp(a.xi_plus, b.xi_plus, w),
        xi_minus: lerp(a.xi_minus, b.xi_minus, w),
        xi_z: lerp(a.xi_z, b.xi_z, w),
        omega_ls: lerp(a.omega_ls, b.omega_ls, w),
    }
}

fn stiffness(rates: &RateSet, tau: f64) -> f64 {
    let gamma_total = rates.gamma_plus + rates.gamma_minus + rates.gamma_z;
    rates.omega_ls.abs().max(gamma_total).max(2.0 * tau.abs())
}

fn min_spacing(tgrid: &[f64]) -> Result<f64, MasterEqError> {
    if tgrid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MasterEqError::GridNotIncreasing);
    }
    Ok(tgrid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min))
}

/// Substep from the spec rule: min(grid spacing, STEP_SAFETY / stiffness).
fn default_substep(spacing: f64, stiff: f64) -> f64 {
    if stiff > 0.0 {
        spacing.min(STEP_SAFETY / stiff)
    } else {
        spacing
    }
}

/// March y across [from, to] in substeps no longer than `substep`.
fn march<F>(f: &F, mut y: [f64; 3], from: f64, to: f64, substep: f64) -> Result<[f64; 3], MasterEqError>
where
    F: Fn(f64, [f64; 3]) -> [f64; 3],
{
    let span = to - from;
    if span <= 0.0 {
        return Ok(y);
    }
    let n = (span / substep).ceil().max(1.0) as usize;
    let h = span / n as f64;
    for i in 0..n {
        let t = from + i as f64 * h;
        let (fine, err) = rk4_step_doubled(f, t, y, h);
        if err > LOCAL_ERROR_RATE_TOL * h + ERROR_NOISE_FLOOR {
            return Err(MasterEqError::StepTooLarge { t, error_rate: err / h });
        }
        y = fine;
    }
    Ok(y)
}

/// Propagate rho0 (given at tgrid[0]) under a fixed rate set; tau = 0.
pub fn propagate_static(
    rates: &RateSet,
    rho0: BlochState,
    tgrid: &[f64],
) -> Result<Vec<BlochState>, MasterEqError> {
    propagate_static_with_step(rates, rho0, tgrid, None)
}

/// As [`propagate_static`] with an explicit substep, for convergence studies.
pub fn propagate_static_with_step(
    rates: &RateSet,
    rho0: BlochState,
    tgrid: &[f64],
    substep: Option<f64>,
) -> Result<Vec<BlochState>, MasterEqError> {
    if tgrid.is_empty() {
        return Ok(Vec::new());
    }
    let spacing = min_spacing(tgrid)?;
    let h = substep.unwrap_or_else(|| default_substep(spacing, stiffness(rates, 0.0)));
    let f = |_t: f64, y: [f64; 3]| bloch_derivative(rates, 0.0, y);
    let mut out = Vec::with_capacity(tgrid.len());
    let mut y = [rho0.x, rho0.y, rho0.z];
    out.push(rho0);
    for k in 1..tgrid.len() {
        y = march(&f, y, tgrid[k - 1], tgrid[k], h)?;
        out.push(BlochState::new(y[0], y[1], y[2]));
    }
    Ok(out)
}

/// Propagate rho0 (given at tgrid[0]) along a driven schedule.
///
/// The schedule must cover the whole grid.  Substeps never straddle a
/// schedule node, so the interpolant seen by each substep is smooth and the
/// integrator keeps its full order across kinks.
pub fn propagate_driven(
    schedule: &DrivenSchedule,
    rho0: BlochState,
    tgrid: &[f64],
) -> Result<Vec<BlochState>, MasterEqError> {
    propagate_driven_with_step(schedule, rho0, tgrid, None)
}

/// As [`propagate_driven`] with an explicit substep, for convergence studies.
pub fn propagate_driven_with_step(
    schedule: &DrivenSchedule,
    rho0: BlochState,
    tgrid: &[f64],
    substep: Option<f64>,
) -> Result<Vec<BlochState>, MasterEqError> {
    if tgrid.is_empty() {
        return Ok(Vec::new());
    }
    let spacing = min_spacing(tgrid)?;
    let (first, last) = (tgrid[0], tgrid[tgrid.len() - 1]);
    if first < schedule.start() || last > schedule.end() {
        let t = if first < schedule.start() { first } else { last };
        return Err(MasterEqError::ScheduleGap { t, start: schedule.start(), end: schedule.end() });
    }
    let h = substep.unwrap_or_else(|| default_substep(spacing, schedule.stiffness()));
    let f = |t: f64, y: [f64; 3]| {
        let (tau, rates) = schedule.at(t).expect("cover checked up front");
        bloch_derivative(&rates, tau, y)
    };
    let mut out = Vec::with_capacity(tgrid.len());
    let mut y = [rho0.x, rho0.y, rho0.z];
    out.push(rho0);
    for k in 1..tgrid.len() {
        let (lo, hi) = (tgrid[k - 1], tgrid[k]);
        // Split the interval at interior schedule nodes.
        let mut left = lo;
        for &node in schedule.times() {
            if node > left && node < hi {
                y = march(&f, y, left, node, h)?;
                left = node;
            }
        }
        y = march(&f, y, left, hi, h)?;
        out.push(BlochState::new(y[0], y[1], y[2]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn plain_rates(gamma_plus: f64, gamma_minus: f64, gamma_z: f64, omega_ls: f64) -> RateSet {
        RateSet { gamma_plus, gamma_minus, gamma_z, omega_ls, ..RateSet::default() }
    }

    fn norm3(a: &BlochState, b: &BlochState) -> f64 {
        (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.z - b.z).abs())
    }

    #[test]
    fn static_relaxation_and_decoherence_match_the_closed_form() {
        let rates = plain_rates(0.11, 0.26, 0.055, 1.3);
        let gsum = 0.37;
        let g2 = rates.gamma_2();
        let z_eq = -(0.26 - 0.11) / gsum;
        let rho0 = BlochState::new(0.4, -0.2, 0.7);
        let t_end = 10.0 / gsum;
        let tgrid: Vec<f64> = (0..=100).map(|k| t_end * k as f64 / 100.0).collect();
        let sol = propagate_static(&rates, rho0, &tgrid).unwrap();
        for (t, rho) in tgrid.iter().zip(&sol) {
            let decay = (-g2 * t).exp();
            let (cos, sin) = ((1.3 * t).cos(), (1.3 * t).sin());
            let expect = BlochState::new(
                decay * (rho0.x * cos - rho0.y * sin),
                decay * (rho0.x * sin + rho0.y * cos),
                z_eq + (rho0.z - z_eq) * (-gsum * t).exp(),
            );
            assert!(norm3(rho, &expect) < 1e-8, "t = {t}: {rho:?} vs {expect:?}");
        }
        // Ten relaxation times reach the fixed point itself.
        let last = sol.last().unwrap();
        assert!((last.z - z_eq).abs() < 1e-4);
    }

    #[test]
    fn zero_rate_precession_is_exact_to_tolerance() {
        let rates = plain_rates(0.0, 0.0, 0.0, 2.0);
        let rho0 = BlochState::new(1.0, 0.0, 0.3);
        let tgrid: Vec<f64> = (0..=60).map(|k| 0.05 * k as f64).collect();
        let sol = propagate_static(&rates, rho0, &tgrid).unwrap();
        for (t, rho) in tgrid.iter().zip(&sol) {
            let (cos, sin) = ((2.0 * t).cos(), (2.0 * t).sin());
            let expect = BlochState::new(cos, sin, 0.3);
            assert!(norm3(rho, &expect) < 1e-10);
            let norm = (rho.x * rho.x + rho.y * rho.y + rho.z * rho.z).sqrt();
            assert!((norm - 1.09f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_schedule_reproduces_the_static_propagator() {
        let rates = plain_rates(0.08, 0.21, 0.03, 0.9);
        let schedule = DrivenSchedule::new(
            vec![-0.3, 0.37, 1.11, 2.9],
            vec![0.0; 4],
            vec![rates; 4],
        )
        .unwrap();
        let rho0 = BlochState::new(0.2, 0.5, -0.6);
        let tgrid: Vec<f64> = (0..=40).map(|k| 2.5 * k as f64 / 40.0).collect();
        let direct = propagate_static(&rates, rho0, &tgrid).unwrap();
        let driven = propagate_driven(&schedule, rho0, &tgrid).unwrap();
        for (a, b) in direct.iter().zip(&driven) {
            assert!(norm3(a, b) < 1e-10);
        }
    }

    #[test]
    fn constant_tau_rotates_populations_into_coherences() {
        let tau = 0.45;
        let rates = plain_rates(0.0, 0.0, 0.0, 0.0);
        let schedule = DrivenSchedule::constant(0.0, 6.0, tau, rates).unwrap();
        let rho0 = BlochState::new(0.35, 0.0, 0.8);
        let tgrid: Vec<f64> = (0..=80).map(|k| 5.5 * k as f64 / 80.0).collect();
        let sol = propagate_driven(&schedule, rho0, &tgrid).unwrap();
        for (t, rho) in tgrid.iter().zip(&sol) {
            let (cos, sin) = ((2.0 * tau * t).cos(), (2.0 * tau * t).sin());
            let expect = BlochState::new(
                rho0.x * cos + rho0.z * sin,
                0.0,
                rho0.z * cos - rho0.x * sin,
            );
            assert!(norm3(rho, &expect) < 1e-8);
        }
    }

    #[test]
    fn random_schedules_stay_inside_the_bloch_ball() {
        let mut rng = crate::rng::trajectory_rng(77, 0);
        for _ in 0..100 {
            let n_nodes = 6;
            let times: Vec<f64> = (0..n_nodes).map(|k| k as f64 * 0.8).collect();
            let taus: Vec<f64> = (0..n_nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rates: Vec<RateSet> = (0..n_nodes)
                .map(|_| {
                    let mut r = plain_rates(
                        rng.gen_range(0.0..0.6),
                        rng.gen_range(0.0..0.6),
                        rng.gen_range(0.0..0.6),
                        rng.gen_range(-2.0..2.0),
                    );
                    r.omega_ls = rng.gen_range(-2.0..2.0);
                    r
                })
                .collect();
            let schedule = DrivenSchedule::new(times, taus, rates).unwrap();
            let dir: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-9);
            let radius = rng.gen_range(0.0..1.0f64);
            let rho0 = BlochState::new(
                dir[0] / len * radius,
                dir[1] / len * radius,
                dir[2] / len * radius,
            );
            let tgrid: Vec<f64> = (0..=60).map(|k| 4.0 * k as f64 / 60.0).collect();
            let sol = propagate_driven(&schedule, rho0, &tgrid).unwrap();
            for rho in &sol {
                let norm = (rho.x * rho.x + rho.y * rho.y + rho.z * rho.z).sqrt();
                assert!(norm <= 1.0 + 1e-9, "norm {norm} escaped the ball");
            }
        }
    }

    #[test]
    fn halving_the_substep_contracts_the_error_as_fourth_order() {
        // Smooth-ish driving sampled on a dense node grid.
        let n_nodes = 51;
        let times: Vec<f64> = (0..n_nodes).map(|k| 3.0 * k as f64 / (n_nodes - 1) as f64).collect();
        let taus: Vec<f64> = times.iter().map(|t| 0.6 * (1.7 * t).sin()).collect();
        let rates: Vec<RateSet> = times
            .iter()
            .map(|t| plain_rates(0.05, 0.12 + 0.04 * (0.9 * t).cos(), 0.02, 1.4 + 0.5 * (1.1 * t).sin()))
            .collect();
        let schedule = DrivenSchedule::new(times, taus, rates).unwrap();
        let rho0 = BlochState::new(0.0, 0.0, 1.0);
        let tgrid = vec![0.0, 1.5, 3.0];
        let reference =
            propagate_driven_with_step(&schedule, rho0, &tgrid, Some(5e-4)).unwrap();
        let coarse = propagate_driven_with_step(&schedule, rho0, &tgrid, Some(0.04)).unwrap();
        let fine = propagate_driven_with_step(&schedule, rho0, &tgrid, Some(0.02)).unwrap();
        let err_coarse: f64 = coarse.iter().zip(&reference).map(|(a, b)| norm3(a, b)).fold(0.0, f64::max);
        let err_fine: f64 = fine.iter().zip(&reference).map(|(a, b)| norm3(a, b)).fold(0.0, f64::max);
        assert!(err_fine < 1e-8, "halved substep should land within 1e-8, got {err_fine:e}");
        assert!(
            err_coarse / err_fine > 10.0,
            "expected roughly sixteenfold contraction, got {err_coarse:e} / {err_fine:e}"
        );
    }

    #[test]
    fn oversized_substeps_are_reported_not_absorbed() {
        let rates = plain_rates(0.0, 0.0, 0.0, 6.0);
        let rho0 = BlochState::new(1.0, 0.0, 0.0);
        let tgrid = vec![0.0, 4.0];
        let err = propagate_static_with_step(&rates, rho0, &tgrid, Some(2.0)).unwrap_err();
        assert!(matches!(err, MasterEqError::StepTooLarge { .. }));
    }

    #[test]
    fn grid_escaping_the_schedule_is_a_gap_error() {
        let rates = plain_rates(0.1, 0.2, 0.0, 1.0);
        let schedule = DrivenSchedule::constant(0.0, 1.0, 0.0, rates).unwrap();
        let err = propagate_driven(&schedule, BlochState::new(0.0, 0.0, 1.0), &[0.0, 1.5]).unwrap_err();
        assert!(matches!(err, MasterEqError::ScheduleGap { .. }));
    }

    #[test]
    fn malformed_schedules_are_rejected() {
        let r = plain_rates(0.1, 0.1, 0.1, 1.0);
        assert!(matches!(
            DrivenSchedule::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![r, r]),
            Err(MasterEqError::GridNotIncreasing)
        ));
        assert!(matches!(
            DrivenSchedule::new(vec![0.0, 1.0], vec![0.0], vec![r, r]),
            Err(MasterEqError::MismatchedLengths)
        ));
        let bad = plain_rates(-0.1, 0.1, 0.0, 1.0);
        assert!(matches!(
            DrivenSchedule::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![r, bad]),
            Err(MasterEqError::NegativeRate { index: 1 })
        ));
    }
}
