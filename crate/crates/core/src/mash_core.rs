//! Two-state spin-mapping surface hopping.
//!
//! A trajectory is a classical phase point (q, p) carrying a spin vector S
//! on the unit sphere.  The hemisphere of S_z selects the active adiabat;
//! the nuclei move on V(q) = vbar(q) +- gap(q)/2 while the spin precesses
//! in the adiabatic frame,
//!
//! ```text
//!     dS/dt = k x S,     k = (0, 2 tau, omega),   tau = p . nac(q),
//! ```
//!
//! so that S_z is carried through the equator by the nonadiabatic drive.
//! When S_z changes sign the trajectory attempts a hop: the momentum
//! component along the coupling vector absorbs the gap if it can (the hop
//! succeeds and the active surface flips) and is reversed if it cannot
//! (the spin is reflected back into its hemisphere).
//!
//! Observables are estimated with class-dependent weights.  Writing
//! operators in the adiabatic Pauli basis {I, x, y, z}, a trajectory drawn
//! uniformly from the sphere contributes
//!
//! ```text
//!     C_AB(t) = 2 < f_A(S(0)) g_B(S(t)) >,
//!     f = (2, 3 S_x, 3 S_y, 2 sgn S_z),   g = (|S_z|, S_x, S_y, S_z),
//! ```
//!
//! where f carries the initial-time reading with its class prefactor
//! (2 for population-like components, 3 for coherences) and g carries the
//! time-t reading with the population weight |S_z(t)| placed at time t.
//! For any linear spin map S(t) = M S(0), unitary or not, this reproduces
//! the quantum tr[A sigma_nu(t)] block exactly; the spherical averages
//! <S_i S_j> = delta_ij / 3 and <|S_z|> = 1/2 supply the normalization.

use serde::{Deserialize, Serialize};

use crate::bath::BathError;
use crate::engine::Stepper;
use crate::linalg::Mat3;
use crate::stats::MeanAccumulator;
use crate::two_level::{
    adiabatize, AdiabaticFrame, DiabaticModel, FrameError, PauliExpansion, SpinError, SpinVector,
};

/// Spin-norm drift allowed per closed-dynamics step.
pub const NORM_TOL: f64 = 1e-10;

/// Bisections used to locate an equator crossing; the hop time is exact to
/// dt / 2^10.
pub const HOP_BISECTIONS: u32 = 10;

/// Crossings tolerated within one step before the step is rejected.
pub const MAX_CROSSINGS_PER_STEP: u32 = 8;

/// Hop bookkeeping returned by every propagation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub hops: u32,
    pub frustrated: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MashError {
    #[error("spin does not cross the equator inside the step")]
    NoCrossing,
    #[error("coupling vector vanishes at the crossing; no rescaling direction")]
    ZeroNac,
    #[error("step rejected: {crossings} equator crossings, raise the resolution")]
    StepTooLarge { crossings: u32 },
    #[error("zero-valued reference correlation; population ratio undefined")]
    ZeroDenominator,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Bath(#[from] BathError),
}

/// Active adiabatic surface, always the hemisphere of S_z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Active {
    Upper,
    Lower,
}

impl Active {
    pub fn sign(self) -> f64 {
        match self {
            Active::Upper => 1.0,
            Active::Lower => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Active::Upper => Active::Lower,
            Active::Lower => Active::Upper,
        }
    }

    /// Hemisphere of a spin; the equator leaves it undefined.
    pub fn from_spin(spin: &SpinVector) -> Result<Self, SpinError> {
        if spin.z > 0.0 {
            Ok(Active::Upper)
        } else if spin.z < 0.0 {
            Ok(Active::Lower)
        } else {
            Err(SpinError::EquatorUndefined)
        }
    }
}

/// One surface-hopping trajectory: mass-weighted phase point, spin, active
/// surface, and the threaded mixing angle that keeps the adiabatic frame on
/// a continuous branch between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MashState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub spin: SpinVector,
    pub active: Active,
    pub theta: f64,
}

impl MashState {
    /// Builds a state at (q, p, spin), fixing the frame branch and the
    /// active surface from the spin hemisphere.
    pub fn prepare(
        model: &dyn DiabaticModel,
        q: Vec<f64>,
        p: Vec<f64>,
        spin: SpinVector,
    ) -> Result<Self, MashError> {
        let frame = adiabatize(&model.point(&q), None)?;
        let active = Active::from_spin(&spin)?;
        Ok(Self { q, p, spin, active, theta: frame.theta })
    }

    /// Kinetic energy of the mass-weighted momenta.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.p.iter().map(|p| p * p).sum::<f64>()
    }
}

/// Momentum and spin-phase reversal: (q, p, S) -> (q, -p, (S_x, -S_y, S_z)).
/// Propagating, reversing, propagating, and reversing again is the identity
/// up to the bisection tolerance of any hops along the way.
pub fn time_reverse(state: &mut MashState) {
    for p in &mut state.p {
        *p = -*p;
    }
    state.spin = SpinVector::new(state.spin.x, -state.spin.y, state.spin.z);
}

/// Conserved energy of closed dynamics: p^2/2 + vbar(q) +- gap(q)/2.
pub fn total_energy(state: &MashState, model: &dyn DiabaticModel) -> Result<f64, MashError> {
    let frame = adiabatize(&model.point(&state.q), Some(state.theta))?;
    Ok(state.kinetic_energy() + frame.vbar + 0.5 * state.active.sign() * frame.gap)
}

/// Observable class of the initial operator in a correlation function:
/// population-like components {I, z} carry prefactor 2, coherences {x, y}
/// carry 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableClass {
    Population,
    Coherence,
}

impl ObservableClass {
    pub fn prefactor(self) -> f64 {
        match self {
            ObservableClass::Population => 2.0,
            ObservableClass::Coherence => 3.0,
        }
    }
}

/// Running statistical weight of one trajectory: the class prefactor times
/// every jump factor picked up along the way.  The time-t estimator then
/// reads W_P(t) = a |S_z(t)| for population components and W_C(t) = a for
/// coherences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub prefactor: f64,
    pub class: ObservableClass,
}

impl WeightRecord {
    pub fn new(class: ObservableClass) -> Self {
        Self { prefactor: class.prefactor(), class }
    }

    /// A resampling jump multiplies the weight by 2 |S_z| at the moment
    /// just before the jump.
    pub fn absorb_jump(&mut self, abs_z_before: f64) {
        self.prefactor *= 2.0 * abs_z_before;
    }

    /// W_P(t): weight in front of a population reading at time t.
    pub fn population_weight(&self, spin_t: &SpinVector) -> f64 {
        self.prefactor * spin_t.z.abs()
    }

    /// W_C(t): weight in front of a coherence reading at time t.
    pub fn coherence_weight(&self) -> f64 {
        self.prefactor
    }
}

/// Initial-time dressing f = (2, 3 S_x, 3 S_y, 2 sgn S_z) in the
/// {I, x, y, z} order.  Undefined on the equator, where sgn S_z has no
/// value.
pub fn initial_dressing(s: &SpinVector) -> Result<[f64; 4], SpinError> {
    if s.z == 0.0 {
        return Err(SpinError::EquatorUndefined);
    }
    Ok([2.0, 3.0 * s.x, 3.0 * s.y, 2.0 * s.sign_z()])
}

/// Time-t reading g = (|S_z|, S_x, S_y, S_z) in the {I, x, y, z} order.
/// The population weight |S_z(t)| sits here, at the measurement time.
pub fn estimator_kernel(s: &SpinVector) -> [f64; 4] {
    [s.z.abs(), s.x, s.y, s.z]
}

/// Operator components in the {I, x, y, z} order used by the estimators.
pub fn pauli_vector(e: &PauliExpansion) -> [f64; 4] {
    [e.ai, e.ax, e.ay, e.az]
}

/// One trajectory's contribution to a correlation function C_AB(t): the
/// operator A expanded at the initial geometry together with the initial
/// spin, the operator B expanded at the time-t geometry together with the
/// evolved spin, and the product of jump factors accumulated in between
/// (1 when no bath jumps occurred).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSample {
    pub a_start: PauliExpansion,
    pub spin_start: SpinVector,
    pub b_t: PauliExpansion,
    pub spin_t: SpinVector,
    pub jump_factor: f64,
}

impl CorrelationSample {
    /// The per-trajectory estimate whose sphere average is C_AB(t) / 2.
    pub fn value(&self) -> Result<f64, SpinError> {
        let f = initial_dressing(&self.spin_start)?;
        let g = estimator_kernel(&self.spin_t);
        let a = pauli_vector(&self.a_start);
        let b = pauli_vector(&self.b_t);
        let read_a: f64 = (0..4).map(|m| a[m] * f[m]).sum();
        let read_b: f64 = (0..4).map(|n| b[n] * g[n]).sum();
        Ok(self.jump_factor * read_a * read_b)
    }
}

/// Ensemble estimate of C_AB(t) with its standard error.
pub fn correlation(samples: &[CorrelationSample]) -> Result<(f64, f64), MashError> {
    let mut acc = MeanAccumulator::default();
    for sample in samples {
        acc.push(sample.value()?);
    }
    Ok((2.0 * acc.mean(), 2.0 * acc.stderr()))
}

/// Reference denominator for population ratios: the ensemble mean of the
/// t = 0 population weight a |S_z(0)| over the prepared trajectories.
pub fn population_denominator(initial: &[(f64, SpinVector)]) -> f64 {
    let mut acc = MeanAccumulator::default();
    for (a, spin) in initial {
        acc.push(a * spin.z.abs());
    }
    acc.mean()
}

/// Adiabatic populations from the sum-preserving estimator,
///
/// ```text
///     P_{0/1}(t) = (1 -+ N(t) / D) / 2,      N(t) = < a(t) S_z(t) >,
/// ```
///
/// with D the t = 0 denominator of the same ensemble.  P0 + P1 = 1 holds
/// identically, because the two share N/D.
pub fn adiabatic_populations(
    weighted_spins: &[(f64, SpinVector)],
    denominator: f64,
) -> Result<(f64, f64), MashError> {
    if denominator == 0.0 {
        return Err(MashError::ZeroDenominator);
    }
    let mut acc = MeanAccumulator::default();
    for (a, spin) in weighted_spins {
        acc.push(a * spin.z);
    }
    let ratio = acc.mean() / denominator;
    Ok((0.5 * (1.0 - ratio), 0.5 * (1.0 + ratio)))
}

/// The naive hemisphere-count populations,
///
/// ```text
///     P_1(t) = < a(t) |S_z(t)| h(S_z(t)) > / D,
///     P_0(t) = < a(t) |S_z(t)| h(-S_z(t)) > / D.
/// ```
///
/// Their sum < a(t) |S_z(t)| > / D drifts away from 1 as the weights
/// evolve; the deviation is a useful diagnostic of the estimator, not an
/// error.
pub fn naive_adiabatic_populations(
    weighted_spins: &[(f64, SpinVector)],
    denominator: f64,
) -> Result<(f64, f64), MashError> {
    if denominator == 0.0 {
        return Err(MashError::ZeroDenominator);
    }
    let (mut up, mut down) = (MeanAccumulator::default(), MeanAccumulator::default());
    for (a, spin) in weighted_spins {
        let w = a * spin.z.abs();
        if spin.z > 0.0 {
            up.push(w);
            down.push(0.0);
        } else {
            up.push(0.0);
            down.push(w);
        }
    }
    Ok((down.mean() / denominator, up.mean() / denominator))
}

/// Diabatic population from the ratio of correlation functions,
/// P_a(t) = (1 + C(t) / C(0)) / 2.
pub fn diabatic_population(c_t: f64, c_0: f64) -> Result<f64, MashError> {
    if c_0 == 0.0 {
        return Err(MashError::ZeroDenominator);
    }
    Ok(0.5 * (1.0 + c_t / c_0))
}

/// Linear generator of the spin motion,
///
/// ```text
///     dS/dt = [[r, -omega, 2 tau], [omega, r, 0], [-2 tau, 0, 0]] S,
/// ```
///
/// a rotation by omega about z and 2 tau about y, plus a uniform rate r on
/// the transverse plane.  Closed dynamics has r = 0; the dissipative
/// no-jump drift of the hybrid method feeds r = (g- - g+)/2 Â· sgn S_z, which
/// grows the plane in the upper hemisphere and shrinks it in the lower.
pub fn spin_generator(omega: f64, tau: f64, transverse_rate: f64) -> Mat3 {
    Mat3([
        [transverse_rate, -omega, 2.0 * tau],
        [omega, transverse_rate, 0.0],
        [-2.0 * tau, 0.0, 0.0],
    ])
}

/// Locates the equator crossing of t -> exp(generator t) S inside (0, dt]
/// by bisection, HOP_BISECTIONS halvings deep.  Returns the right end of
/// the final bracket, so the spin evaluated there has already crossed;
/// the result is within dt / 2^10 of the true crossing.
pub fn find_hop_time(
    generator: &Mat3,
    spin: &SpinVector,
    dt: f64,
) -> Result<f64, MashError> {
    let start_side = spin.z > 0.0;
    let z_end = generator.scale(dt).expm().apply(spin).z;
    if (z_end > 0.0) == start_side {
        return Err(MashError::NoCrossing);
    }
    let (mut lo, mut hi) = (0.0_f64, dt);
    for _ in 0..HOP_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let z_mid = generator.scale(mid).expm().apply(spin).z;
        if (z_mid > 0.0) == start_side {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopOutcome {
    Hopped,
    Frustrated,
}

/// Applies the hop impulse at an equator crossing.  The spin has just
/// crossed out of the active hemisphere; the momentum component along the
/// coupling direction must absorb the gap (hopping up) or receives it
/// (hopping down),
///
/// ```text
///     p_par'^2 / 2 = p_par^2 / 2 + dV,    dV = +gap down, -gap up.
/// ```
///
/// On success p_par is rescaled, keeping its sign, and the active surface
/// flips to match the crossed spin.  A frustrated hop (negative balance)
/// reverses p_par and reflects S_z back into the active hemisphere.
pub fn hop_impulse(
    state: &mut MashState,
    nac: &[f64],
    gap: f64,
) -> Result<HopOutcome, MashError> {
    let norm_sq: f64 = nac.iter().map(|d| d * d).sum();
    if norm_sq == 0.0 {
        return Err(MashError::ZeroNac);
    }
    let norm = norm_sq.sqrt();
    let p_par: f64 = state
        .p
        .iter()
        .zip(nac)
        .map(|(p, d)| p * d / norm)
        .sum();
    let delta_v = match state.active {
        Active::Upper => gap,
        Active::Lower => -gap,
    };
    let balance = p_par * p_par + 2.0 * delta_v;
    if balance >= 0.0 {
        let p_new = p_par.signum() * balance.sqrt();
        for (p, d) in state.p.iter_mut().zip(nac) {
            *p += (p_new - p_par) * d / norm;
        }
        state.active = state.active.flip();
        Ok(HopOutcome::Hopped)
    } else {
        for (p, d) in state.p.iter_mut().zip(nac) {
            *p -= 2.0 * p_par * d / norm;
        }
        state.spin = SpinVector::new(state.spin.x, state.spin.y, -state.spin.z);
        Ok(HopOutcome::Frustrated)
    }
}

/// One surface-hopping step: half-step spin rotation at the current
/// geometry, velocity-Verlet on the active adiabat, half-step spin rotation
/// at the new geometry.  Equator crossings inside either spin block are
/// located by bisection and resolved with [`hop_impulse`].
///
/// This form re-evaluates the model once extra per call to seed its cache;
/// long runs should hold a [`MashPropagator`] instead.
pub fn mash_step(
    state: &mut MashState,
    model: &dyn DiabaticModel,
    dt: f64,
) -> Result<StepReport, MashError> {
    let mut propagator = MashPropagator::new(model);
    propagator.prime(state)?;
    propagator.step(state, dt)
}

/// Reusable stepper holding the adiabatic-frame cache between steps, so
/// each step costs exactly one model evaluation.
pub struct MashPropagator<'m> {
    stepper: Stepper<'m>,
}

impl<'m> MashPropagator<'m> {
    pub fn new(model: &'m dyn DiabaticModel) -> Self {
        Self { stepper: Stepper::new(model, None) }
    }

    /// Fills the frame cache at the state's current geometry.  Call once
    /// before the first step and again whenever q changed outside `step`.
    pub fn prime(&mut self, state: &MashState) -> Result<(), MashError> {
        self.stepper.prime(&state.q, Some(state.theta))
    }

    /// Adiabatic frame of the cached geometry; valid after `prime` or
    /// `step`.  Estimators expand operators in this frame.
    pub fn frame(&self) -> &AdiabaticFrame {
        self.stepper.frame()
    }

    /// Energy of the cached geometry; valid after `prime` or `step`.
    pub fn cached_energy(&self, state: &MashState) -> f64 {
        state.kinetic_energy()
            + self.stepper.frame().vbar
            + 0.5 * state.active.sign() * self.stepper.frame().gap
    }

    pub fn step(&mut self, state: &mut MashState, dt: f64) -> Result<StepReport, MashError> {
        self.stepper.step(state, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_level::{sample_sphere, PotentialPoint, SphereRegion};
    use rand::Rng;

    /// Harmonic mean surface with a linear bias sweep through an avoided
    /// crossing at q = -bias0/slope: V = q^2/2 +- gap/2.
    struct CrossingModel {
        bias0: f64,
        slope: f64,
        coupling: f64,
    }

    impl DiabaticModel for CrossingModel {
        fn dof(&self) -> usize {
            1
        }

        fn evaluate(&self, q: &[f64], out: &mut PotentialPoint) {
            out.v0 = 0.5 * q[0] * q[0];
            out.v_bias = self.bias0 + self.slope * q[0];
            out.v_coup = self.coupling;
            out.grad_v0[0] = q[0];
            out.grad_v_bias[0] = self.slope;
            out.grad_v_coup[0] = 0.0;
        }
    }

    fn crossing_model() -> CrossingModel {
        CrossingModel { bias0: 0.0, slope: 1.5, coupling: 0.25 }
    }

    #[test]
    fn weight_table_matches_the_class_prefactors() {
        let pop = WeightRecord::new(ObservableClass::Population);
        let coh = WeightRecord::new(ObservableClass::Coherence);
        let s = SpinVector::new(0.6, 0.0, -0.8);
        assert_eq!(pop.population_weight(&s), 2.0 * 0.8);
        assert_eq!(pop.coherence_weight(), 2.0);
        assert_eq!(coh.population_weight(&s), 3.0 * 0.8);
        assert_eq!(coh.coherence_weight(), 3.0);

        let mut w = WeightRecord::new(ObservableClass::Population);
        w.absorb_jump(0.4);
        assert!((w.prefactor - 1.6).abs() < 1e-15);
    }

    #[test]
    fn dressing_and_kernel_read_the_documented_components() {
        let s = SpinVector::new(0.3, -0.4, -0.2);
        let f = initial_dressing(&s).unwrap();
        for (got, want) in f.iter().zip([2.0, 0.9, -1.2, -2.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let g = estimator_kernel(&s);
        assert_eq!(g, [0.2, 0.3, -0.4, -0.2]);
        let err = initial_dressing(&SpinVector::new(1.0, 0.0, 0.0)).unwrap_err();
        assert_eq!(err, SpinError::EquatorUndefined);
    }

    /// Midpoint sphere grid; the weights are exact under it to O(n^-2).
    fn sphere_grid(n_z: usize, n_phi: usize) -> Vec<SpinVector> {
        let mut grid = Vec::with_capacity(n_z * n_phi);
        for i in 0..n_z {
            let z = -1.0 + (i as f64 + 0.5) * 2.0 / n_z as f64;
            let r = (1.0 - z * z).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / n_phi as f64;
                grid.push(SpinVector::new(r * phi.cos(), r * phi.sin(), z));
            }
        }
        grid
    }

    #[test]
    fn identity_correlation_is_the_trace_for_any_rotation() {
        // C_II = 2 <2 |S_z(t)|> = 2 for every rotation of the sphere.
        let rot = spin_generator(0.9, 0.35, 0.0).scale(1.7).expm();
        let identity = PauliExpansion::new(1.0, 0.0, 0.0, 0.0);
        let samples: Vec<CorrelationSample> = sphere_grid(400, 400)
            .into_iter()
            .map(|s| CorrelationSample {
                a_start: identity,
                spin_start: s,
                b_t: identity,
                spin_t: rot.apply(&s),
                jump_factor: 1.0,
            })
            .collect();
        let (c, _) = correlation(&samples).unwrap();
        assert!((c - 2.0).abs() < 1e-4, "C_II = {c}");
    }

    #[test]
    fn pauli_correlations_match_the_exponential_map_even_non_unitary() {
        // For S(t) = M S(0), the xyz block must give C_mu_nu = 2 M_nu_mu.
        // The generator mixes rotation with asymmetric damping, so M is far
        // from orthogonal; this exercises all four weight classes.
        let generator = Mat3([
            [-0.35, -1.1, 0.6],
            [1.1, 0.15, -0.2],
            [-0.6, 0.3, -0.05],
        ]);
        let m = generator.scale(0.8).expm();
        let grid = sphere_grid(1000, 1000);
        let mut c = [[MeanAccumulator::default(); 3]; 3];
        for s in &grid {
            let f = initial_dressing(s).unwrap();
            let g = estimator_kernel(&m.apply(s));
            for mu in 0..3 {
                for nu in 0..3 {
                    c[mu][nu].push(f[mu + 1] * g[nu + 1]);
                }
            }
        }
        for mu in 0..3 {
            for nu in 0..3 {
                let got = 2.0 * c[mu][nu].mean();
                let want = 2.0 * m.0[nu][mu];
                assert!(
                    (got - want).abs() < 1e-3,
                    "C[{mu}][{nu}] = {got}, exponential map gives {want}"
                );
            }
        }
    }

    #[test]
    fn population_split_is_exactly_sum_preserving() {
        let mut rng = crate::rng::trajectory_rng(40, 0);
        let initial: Vec<(f64, SpinVector)> = (0..500)
            .map(|_| (2.0, sample_sphere(&mut rng, SphereRegion::Upper)))
            .collect();
        let denom = population_denominator(&initial);
        assert!((denom - 1.0).abs() < 0.1, "upper-hemisphere mean of 2|S_z| is near 1");
        // At t = 0 the improved estimator gives exactly (0, 1).
        let (p0, p1) = adiabatic_populations(&initial, denom).unwrap();
        assert!((p0 + p1 - 1.0).abs() < 1e-15);
        assert!(p0.abs() < 1e-15, "upper preparation has no ground population");
        // Scrambled weights and spins still sum to 1 identically.
        let scrambled: Vec<(f64, SpinVector)> = (0..500)
            .map(|_| {
                let a = 2.0 * rng.gen_range(0.1..1.5);
                (a, sample_sphere(&mut rng, SphereRegion::Full))
            })
            .collect();
        let (p0, p1) = adiabatic_populations(&scrambled, denom).unwrap();
        assert!((p0 + p1 - 1.0).abs() < 1e-15);
        let err = adiabatic_populations(&scrambled, 0.0).unwrap_err();
        assert_eq!(err, MashError::ZeroDenominator);
    }

    #[test]
    fn naive_populations_start_consistent_then_may_drift() {
        let mut rng = crate::rng::trajectory_rng(41, 0);
        let initial: Vec<(f64, SpinVector)> = (0..4000)
            .map(|_| (2.0, sample_sphere(&mut rng, SphereRegion::Upper)))
            .collect();
        let denom = population_denominator(&initial);
        let (n0, n1) = naive_adiabatic_populations(&initial, denom).unwrap();
        // At t = 0 the naive split agrees with the improved one exactly.
        assert!(n0 == 0.0);
        assert!((n1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diabatic_population_is_a_guarded_ratio() {
        assert!((diabatic_population(0.7, 1.4).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(diabatic_population(1.0, 0.0).unwrap_err(), MashError::ZeroDenominator);
    }

    #[test]
    fn hop_time_for_a_mid_step_crossing() {
        // Pure tau rotation: S_z(t) = sin(alpha - 2 tau t) crosses at
        // t* = alpha / (2 tau); arrange t* = dt/2, then t* = 0.3 dt.
        let tau = 0.7;
        let dt = 0.05;
        for target in [0.5_f64, 0.3] {
            let alpha = 2.0 * tau * target * dt;
            let spin = SpinVector::new(alpha.cos(), 0.0, alpha.sin());
            let gen = spin_generator(0.0, tau, 0.0);
            let t = find_hop_time(&gen, &spin, dt).unwrap();
            assert!(
                (t - target * dt).abs() <= dt / 1024.0,
                "crossing at {t}, want {}", target * dt
            );
        }
    }

    #[test]
    fn no_crossing_is_an_error() {
        let gen = spin_generator(2.0, 0.0, 0.0);
        let spin = SpinVector::new(0.6, 0.0, 0.8);
        assert_eq!(
            find_hop_time(&gen, &spin, 0.1).unwrap_err(),
            MashError::NoCrossing
        );
    }

    #[test]
    fn hop_examples_rescale_or_reverse() {
        let model = crossing_model();
        // Down-hop across gap 2: p 3 -> sqrt(13).
        let mut state = MashState::prepare(
            &model,
            vec![0.0],
            vec![3.0],
            SpinVector::new(1.0, 0.0, -1e-9).normalized(),
        )
        .unwrap();
        state.active = Active::Upper; // crossing out of the upper surface
        let out = hop_impulse(&mut state, &[1.0], 2.0).unwrap();
        assert_eq!(out, HopOutcome::Hopped);
        assert!((state.p[0] - 13.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(state.active, Active::Lower);

        // Frustrated up-hop across gap 5: p 3 -> -3 and S_z pushed back.
        let mut state = MashState::prepare(
            &model,
            vec![0.0],
            vec![3.0],
            SpinVector::new(1.0, 0.0, 1e-9).normalized(),
        )
        .unwrap();
        state.active = Active::Lower;
        let z_before = state.spin.z;
        let out = hop_impulse(&mut state, &[1.0], 5.0).unwrap();
        assert_eq!(out, HopOutcome::Frustrated);
        assert!((state.p[0] + 3.0).abs() < 1e-12);
        assert_eq!(state.active, Active::Lower);
        assert_eq!(state.spin.z, -z_before);

        // No coupling direction at all.
        let err = hop_impulse(&mut state, &[0.0], 1.0).unwrap_err();
        assert_eq!(err, MashError::ZeroNac);
    }

    #[test]
    fn fixed_geometry_spin_precession_is_exact() {
        // Clamp the nuclei by zeroing p and the forces: pure precession at
        // omega_s(q) about z, exact to round-off.
        struct Flat;
        impl DiabaticModel for Flat {
            fn dof(&self) -> usize {
                1
            }
            fn evaluate(&self, _q: &[f64], out: &mut PotentialPoint) {
                out.v0 = 0.0;
                out.v_bias = 0.3;
                out.v_coup = 0.4;
                out.grad_v0[0] = 0.0;
                out.grad_v_bias[0] = 0.0;
                out.grad_v_coup[0] = 0.0;
            }
        }
        let model = Flat;
        let spin = SpinVector::new(0.6, 0.0, 0.8);
        let mut state =
            MashState::prepare(&model, vec![0.0], vec![0.0], spin).unwrap();
        let omega = 2.0 * (0.3_f64 * 0.3 + 0.4 * 0.4).sqrt();
        let dt = 0.01;
        let steps = 1000;
        let mut propagator = MashPropagator::new(&model);
        propagator.prime(&state).unwrap();
        for _ in 0..steps {
            propagator.step(&mut state, dt).unwrap();
        }
        // nac = 0 here, so tau = 0 and S_z never moves; (S_x, S_y) rotate.
        let angle = omega * dt * steps as f64;
        assert!((state.spin.x - 0.6 * angle.cos()).abs() < 1e-12);
        assert!((state.spin.y - 0.6 * angle.sin()).abs() < 1e-12);
        assert!((state.spin.z - 0.8).abs() < 1e-13);
        assert!((state.q[0]).abs() < 1e-15);
    }

    #[test]
    fn closed_dynamics_conserves_energy_through_hops() {
        let model = crossing_model();
        let mut rng = crate::rng::trajectory_rng(42, 3);
        let spin = sample_sphere(&mut rng, SphereRegion::Upper);
        let mut state =
            MashState::prepare(&model, vec![-1.2], vec![1.9], spin).unwrap();
        let e0 = total_energy(&state, &model).unwrap();
        let dt = 2e-3;
        let mut propagator = MashPropagator::new(&model);
        propagator.prime(&state).unwrap();
        let mut hops = 0;
        let mut frustrated = 0;
        let mut worst = 0.0_f64;
        for _ in 0..10_000 {
            let report = propagator.step(&mut state, dt).unwrap();
            hops += report.hops;
            frustrated += report.frustrated;
            assert!((state.spin.norm() - 1.0).abs() < NORM_TOL);
            assert_eq!(state.active.sign(), state.spin.sign_z());
            let e = propagator.cached_energy(&state);
            worst = worst.max((e - e0).abs());
        }
        assert!(hops + frustrated > 0, "trajectory must reach the coupling region");
        assert!(
            worst < 1e-4 * e0.abs(),
            "energy drift {worst} over 10^4 steps, budget {}",
            1e-4 * e0.abs()
        );
    }

    #[test]
    fn hops_conserve_energy_to_machine_precision() {
        // Isolate a single hop: start just above the crossing seam moving
        // in, and compare energy across the step that hops.
        let model = crossing_model();
        let spin = SpinVector::new(0.995, 0.0, 0.0998).normalized();
        let mut state =
            MashState::prepare(&model, vec![0.4], vec![-2.0], spin).unwrap();
        let dt = 1e-3;
        let mut propagator = MashPropagator::new(&model);
        propagator.prime(&state).unwrap();
        let mut before = propagator.cached_energy(&state);
        for _ in 0..4000 {
            let report = propagator.step(&mut state, dt).unwrap();
            let after = propagator.cached_energy(&state);
            if report.hops > 0 {
                // The splitting error vanishes at the hop itself; the
                // step's drift stays at the usual O(dt^3) scale.
                assert!(
                    (after - before).abs() < 1e-8,
                    "energy jumped by {} across a hop",
                    after - before
                );
                return;
            }
            before = after;
        }
        panic!("no hop encountered");
    }

    #[test]
    fn forward_back_reversibility() {
        let model = crossing_model();
        let mut rng = crate::rng::trajectory_rng(43, 1);
        let spin = sample_sphere(&mut rng, SphereRegion::Upper);
        let mut state =
            MashState::prepare(&model, vec![-1.0], vec![1.6], spin).unwrap();
        let snapshot = state.clone();
        // The hop time is only bisected to dt/1024, and the forward and
        // reversed passes bracket it from opposite sides; dt sets how well
        // the two impulse points coincide, so it is kept small here.
        let dt = 2.5e-4;
        let steps = 12_000;
        let mut propagator = MashPropagator::new(&model);
        propagator.prime(&state).unwrap();
        let mut hops = 0;
        for _ in 0..steps {
            hops += propagator.step(&mut state, dt).unwrap().hops;
        }
        time_reverse(&mut state);
        propagator.prime(&state).unwrap();
        for _ in 0..steps {
            propagator.step(&mut state, dt).unwrap();
        }
        time_reverse(&mut state);
        assert!(hops > 0, "path must include hops for the test to bite");
        assert!((state.q[0] - snapshot.q[0]).abs() < 1e-6);
        assert!((state.p[0] - snapshot.p[0]).abs() < 1e-6);
        assert!((state.spin.x - snapshot.spin.x).abs() < 1e-6);
        assert!((state.spin.y - snapshot.spin.y).abs() < 1e-6);
        assert!((state.spin.z - snapshot.spin.z).abs() < 1e-6);
    }
}
