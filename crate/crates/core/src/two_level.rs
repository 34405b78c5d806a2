//! Two-level diabatic potentials, the adiabatic frame, and spin-vector
//! geometry on the Bloch sphere.
//!
//! A diabatic model supplies
//!
//! ```text
//!     V(q) = v0(q) I + v_bias(q) sigma_z + v_coup(q) sigma_x
//! ```
//!
//! in the diabatic basis {|a>, |b>}. Diagonalising the traceless part gives
//! the mixing angle theta = atan2(v_coup, v_bias) / 2 and the eigenbasis
//!
//! ```text
//!     |Phi_1> = ( cos(theta), sin(theta))    upper adiabat, V = vbar + gap/2
//!     |Phi_0> = ( sin(theta), -cos(theta))   lower adiabat, V = vbar - gap/2
//! ```
//!
//! chosen so that the nonadiabatic coupling is exactly the gradient of the
//! mixing angle: d_j = <Phi_1|d/dq_j|Phi_0> = d(theta)/dq_j. The trajectory
//! spin S lives on the unit sphere with S_z the population difference between
//! the adiabats and (S_x, S_y) the coherence.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

/// Gaps below this floor are treated as degenerate: the mixing angle and
/// nonadiabatic coupling are no longer numerically meaningful there.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// Tolerance on |c0|^2 + |c1|^2 when building a spin from amplitudes.
pub const AMPLITUDE_NORM_TOL: f64 = 1e-10;

/// Trajectory spin vector on (or near) the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpinVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Rescales onto the unit sphere. Call after every deterministic substep
    /// so round-off cannot accumulate into a radial drift.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    /// Sign of S_z as +1.0 or -1.0. Exact zeros take the sign bit of
    /// the float, so +0.0 counts as the upper hemisphere; propagation code
    /// treats an exact equator crossing as a hop before this is consulted.
    pub fn sign_z(&self) -> f64 {
        if self.z.is_sign_negative() {
            -1.0
        } else {
            1.0
        }
    }

    pub fn north_pole() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn south_pole() -> Self {
        Self::new(0.0, 0.0, -1.0)
    }
}

/// Ensemble-averaged Bloch vector of a 2x2 density matrix,
/// rho = (I + r_x sigma_x + r_y sigma_y + r_z sigma_z) / 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Population of the upper level, (1 + r_z) / 2.
    pub fn upper_population(&self) -> f64 {
        0.5 * (1.0 + self.z)
    }

    /// Purity Tr[rho^2] = (1 + |r|^2) / 2.
    pub fn purity(&self) -> f64 {
        0.5 * (1.0 + self.x * self.x + self.y * self.y + self.z * self.z)
    }
}

/// Expansion of a Hermitian 2x2 operator in the identity and Pauli matrices
/// of the *adiabatic* basis: A = aI I + ax sigma_x + ay sigma_y + az sigma_z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliExpansion {
    pub ai: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl PauliExpansion {
    pub fn new(ai: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self { ai, ax, ay, az }
    }

    /// Expectation value against a spin vector, aI + a.S.
    pub fn against_spin(&self, s: &SpinVector) -> f64 {
        self.ai + self.ax * s.x + self.ay * s.y + self.az * s.z
    }

    /// The 2x2 matrix in the basis ordering (upper, lower), as
    /// [[re, im]; 2] rows. Used by tests to round-trip the expansion.
    pub fn matrix(&self) -> [[(f64, f64); 2]; 2] {
        [
            [(self.ai + self.az, 0.0), (self.ax, -self.ay)],
            [(self.ax, self.ay), (self.ai - self.az, 0.0)],
        ]
    }

    pub fn from_matrix(m: &[[(f64, f64); 2]; 2]) -> Self {
        Self {
            ai: 0.5 * (m[0][0].0 + m[1][1].0),
            az: 0.5 * (m[0][0].0 - m[1][1].0),
            ax: 0.5 * (m[0][1].0 + m[1][0].0),
            ay: 0.5 * (m[1][0].1 - m[0][1].1),
        }
    }
}

/// Hermitian operator written in the *diabatic* Pauli basis,
/// O = ai I + az sigma_z + ax sigma_x + ay sigma_y with real coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiabaticOperator {
    pub ai: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl DiabaticOperator {
    pub fn new(ai: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self { ai, ax, ay, az }
    }

    /// sigma_z in the diabatic basis, |a><a| - |b><b|.
    pub fn sigma_z() -> Self {
        Self::new(0.0, 0.0, 0.0, 1.0)
    }

    /// Projector onto the first diabat, |a><a|.
    pub fn projector_a() -> Self {
        Self::new(0.5, 0.0, 0.0, 0.5)
    }

    /// Projector onto the second diabat, |b><b|.
    pub fn projector_b() -> Self {
        Self::new(0.5, 0.0, 0.0, -0.5)
    }

    /// Off-diagonal coupling mu (|a><b| + |b><a|), e.g. a transition dipole.
    pub fn off_diagonal(mu: f64) -> Self {
        Self::new(0.0, mu, 0.0, 0.0)
    }

    pub fn from_real_matrix(m: &[[f64; 2]; 2]) -> Self {
        Self {
            ai: 0.5 * (m[0][0] + m[1][1]),
            az: 0.5 * (m[0][0] - m[1][1]),
            ax: 0.5 * (m[0][1] + m[1][0]),
            ay: 0.0,
        }
    }
}

/// Diabatic potential data at one nuclear configuration. All coordinates are
/// mass-weighted, so gradients share one length unit across modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialPoint {
    pub v0: f64,
    pub v_bias: f64,
    pub v_coup: f64,
    pub grad_v0: Vec<f64>,
    pub grad_v_bias: Vec<f64>,
    pub grad_v_coup: Vec<f64>,
}

impl PotentialPoint {
    pub fn zeros(dof: usize) -> Self {
        Self {
            v0: 0.0,
            v_bias: 0.0,
            v_coup: 0.0,
            grad_v0: vec![0.0; dof],
            grad_v_bias: vec![0.0; dof],
            grad_v_coup: vec![0.0; dof],
        }
    }

    pub fn dof(&self) -> usize {
        self.grad_v0.len()
    }
}

/// A two-level diabatic model: V(q) = v0 I + v_bias sigma_z + v_coup sigma_x.
pub trait DiabaticModel: Sync {
    fn dof(&self) -> usize;

    /// Evaluates potentials and gradients at `q` into `out`, which must have
    /// been sized with [`PotentialPoint::zeros`] for this model's `dof`.
    fn evaluate(&self, q: &[f64], out: &mut PotentialPoint);

    fn point(&self, q: &[f64]) -> PotentialPoint {
        let mut out = PotentialPoint::zeros(self.dof());
        self.evaluate(q, &mut out);
        out
    }
}

/// Adiabatic-frame data derived from a [`PotentialPoint`]:
/// eigenvalue split, mixing angle, and nonadiabatic coupling vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticFrame {
    /// Mean of the two adiabatic surfaces, vbar = v0.
    pub vbar: f64,
    /// Energy gap V_1 - V_0 = 2 sqrt(v_bias^2 + v_coup^2), always >= floor.
    pub gap: f64,
    /// Mixing angle; continuous along a trajectory when the previous angle
    /// is threaded through `adiabatize`.
    pub theta: f64,
    /// Nonadiabatic coupling d_j = <Phi_1|d/dq_j|Phi_0> = d(theta)/dq_j.
    pub nac: Vec<f64>,
    pub grad_vbar: Vec<f64>,
    pub grad_gap: Vec<f64>,
}

impl AdiabaticFrame {
    pub fn zeros(dof: usize) -> Self {
        Self {
            vbar: 0.0,
            gap: 0.0,
            theta: 0.0,
            nac: vec![0.0; dof],
            grad_vbar: vec![0.0; dof],
            grad_gap: vec![0.0; dof],
        }
    }

    /// Potential on the active adiabat: vbar + sign * gap / 2.
    pub fn surface(&self, sign: f64) -> f64 {
        self.vbar + 0.5 * sign * self.gap
    }

    /// cos(2 theta), the sigma_z weight a constant diabatic sigma_z acquires
    /// in the adiabatic frame.
    pub fn cos_2theta(&self) -> f64 {
        (2.0 * self.theta).cos()
    }

    pub fn sin_2theta(&self) -> f64 {
        (2.0 * self.theta).sin()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error("adiabatic gap {gap:e} is below the degeneracy floor {floor:e}")]
    DegenerateGap { gap: f64, floor: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpinError {
    #[error("spin lies exactly on the equator; the active surface is undefined")]
    EquatorUndefined,
    #[error("amplitudes are not normalised: |c0|^2 + |c1|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },
}

/// Builds the adiabatic frame at one configuration.
///
/// `prev_theta` threads the mixing angle from the previous step of a
/// trajectory: the raw angle is shifted by a multiple of pi so the eigenbasis
/// overlaps positively with the previous one, keeping theta (and with it the
/// sign conventions of nac and the off-diagonal operator components)
/// continuous as v_bias changes sign. Pass `None` at the first step, which
/// selects the branch theta in (-pi/2, pi/2].
pub fn adiabatize(
    point: &PotentialPoint,
    prev_theta: Option<f64>,
) -> Result<AdiabaticFrame, FrameError> {
    let mut frame = AdiabaticFrame::zeros(point.dof());
    adiabatize_into(point, prev_theta, &mut frame)?;
    Ok(frame)
}

/// Allocation-free form of [`adiabatize`] for propagation loops.
pub fn adiabatize_into(
    point: &PotentialPoint,
    prev_theta: Option<f64>,
    frame: &mut AdiabaticFrame,
) -> Result<(), FrameError> {
    let b = point.v_bias;
    let c = point.v_coup;
    let r2 = b * b + c * c;
    let gap = 2.0 * r2.sqrt();
    if gap < DEGENERACY_FLOOR {
        return Err(FrameError::DegenerateGap {
            gap,
            floor: DEGENERACY_FLOOR,
        });
    }

    let mut theta = 0.5 * c.atan2(b);
    if theta <= -0.5 * std::f64::consts::PI {
        // atan2 maps b < 0, c = -0 to -pi; fold onto the (-pi/2, pi/2] branch.
        theta += std::f64::consts::PI;
    }
    if let Some(prev) = prev_theta {
        let k = ((prev - theta) / std::f64::consts::PI).round();
        theta += k * std::f64::consts::PI;
    }

    frame.vbar = point.v0;
    frame.gap = gap;
    frame.theta = theta;

    let dof = point.dof();
    debug_assert_eq!(frame.nac.len(), dof);
    let inv_2r2 = 0.5 / r2;
    let inv_r = 2.0 / gap;
    for j in 0..dof {
        let db = point.grad_v_bias[j];
        let dc = point.grad_v_coup[j];
        frame.nac[j] = (b * dc - c * db) * inv_2r2;
        frame.grad_vbar[j] = point.grad_v0[j];
        frame.grad_gap[j] = 2.0 * (b * db + c * dc) * inv_r;
    }
    Ok(())
}

/// Rotates a constant operator from the diabatic Pauli basis into the
/// adiabatic one at mixing angle theta.
///
/// The eigenbasis {|Phi_1>, |Phi_0>} is a reflection (determinant -1) of the
/// diabatic basis, so the sigma_y component flips sign while (sigma_z,
/// sigma_x) rotate by 2 theta. Every physical operator fed through here
/// (couplings, dipoles, projectors) is real symmetric, with ay = 0.
pub fn expand_diabatic_operator(frame: &AdiabaticFrame, op: &DiabaticOperator) -> PauliExpansion {
    let c2 = frame.cos_2theta();
    let s2 = frame.sin_2theta();
    PauliExpansion {
        ai: op.ai,
        az: op.az * c2 + op.ax * s2,
        ax: op.az * s2 - op.ax * c2,
        ay: -op.ay,
    }
}

/// Gradient of the adiabatic components of a *constant* diabatic operator,
/// induced purely by the q-dependence of the mixing angle:
/// d(az)/dq_j = -2 ax nac_j and d(ax)/dq_j = 2 az nac_j.
pub fn expansion_gradients(
    frame: &AdiabaticFrame,
    expansion: &PauliExpansion,
    grad_az: &mut [f64],
    grad_ax: &mut [f64],
) {
    for j in 0..frame.nac.len() {
        grad_az[j] = -2.0 * expansion.ax * frame.nac[j];
        grad_ax[j] = 2.0 * expansion.az * frame.nac[j];
    }
}

/// Region of the Bloch sphere to sample uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SphereRegion {
    Full,
    Upper,
    Lower,
}

/// Draws a spin uniformly on the chosen region of the unit sphere.
///
/// Draw order is fixed (S_z first, then the azimuth) so a seeded generator
/// reproduces the same spin regardless of caller. Exact equator draws are
/// rejected and redrawn; they would leave the active surface undefined.
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, region: SphereRegion) -> SpinVector {
    let (lo, hi) = match region {
        SphereRegion::Full => (-1.0, 1.0),
        SphereRegion::Upper => (0.0, 1.0),
        SphereRegion::Lower => (-1.0, 0.0),
    };
    let z_dist = Uniform::new(lo, hi);
    let phi_dist = Uniform::new(0.0, 2.0 * std::f64::consts::PI);
    loop {
        let z: f64 = z_dist.sample(rng);
        if z == 0.0 {
            continue;
        }
        let phi: f64 = phi_dist.sample(rng);
        let r = (1.0 - z * z).max(0.0).sqrt();
        return SpinVector::new(r * phi.cos(), r * phi.sin(), z);
    }
}

/// Maps wavefunction amplitudes (c1 on the upper adiabat, c0 on the lower)
/// to the spin vector S = <sigma> = (2 Re[c1* c0], 2 Im[c1* c0],
/// |c1|^2 - |c0|^2), the convention under which the free evolution
/// dS_x/dt = -omega S_y, dS_y/dt = +omega S_x matches H = +(omega/2) sigma_z.
pub fn spin_from_amplitudes(
    c1: (f64, f64),
    c0: (f64, f64),
) -> Result<SpinVector, SpinError> {
    let n1 = c1.0 * c1.0 + c1.1 * c1.1;
    let n0 = c0.0 * c0.0 + c0.1 * c0.1;
    let norm_sq = n1 + n0;
    if (norm_sq - 1.0).abs() > AMPLITUDE_NORM_TOL {
        return Err(SpinError::NotNormalized { norm_sq });
    }
    // c1* c0 = (re1 - i im1)(re0 + i im0)
    let re = c1.0 * c0.0 + c1.1 * c0.1;
    let im = c1.0 * c0.1 - c1.1 * c0.0;
    Ok(SpinVector::new(2.0 * re, 2.0 * im, n1 - n0))
}
