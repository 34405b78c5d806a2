//! The two benchmark systems, as diabatic models.
//!
//! Both are two-level systems over harmonic nuclear landscapes, written in
//! mass-weighted coordinates (kinetic energy p^2/2 throughout):
//!
//! ```text
//!     spin-boson:   V(q) = sum_j (w_j q_j)^2 / 2
//!                          + (eps + sum_j c_j q_j) sigma_z + delta sigma_x,
//!
//!     cavity:       V(x) = w0^2 x^2 / 2
//!                          + (eps + zeta x / sqrt(m)) sigma_z + delta sigma_x,
//! ```
//!
//! where the spin-boson mode list concatenates every discretized bath that
//! is treated explicitly (one bath for the hybrid method, both for pure
//! surface hopping), and the cavity model is the one-dimensional two-state
//! molecule whose bias is swept linearly by a single vibration.  The
//! photon bath of the cavity problem never appears in the potential; it
//! enters only through the jump rates.

use serde::{Deserialize, Serialize};

use crate::bath::DiscretizedBath;
use crate::two_level::{DiabaticModel, PotentialPoint};

/// Two-level system with constant bias `eps` and coupling `delta`, shifted
/// along sigma_z by a set of explicit harmonic modes.  An empty mode list
/// is the bare static system (zero degrees of freedom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinBosonModel {
    pub eps: f64,
    pub delta: f64,
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl SpinBosonModel {
    /// Concatenates the given discretized baths into one explicit mode
    /// list, in the order given.
    pub fn new(eps: f64, delta: f64, baths: &[&DiscretizedBath]) -> Self {
        let mut omegas = Vec::new();
        let mut couplings = Vec::new();
        for bath in baths {
            omegas.extend_from_slice(&bath.omegas);
            couplings.extend_from_slice(&bath.couplings);
        }
        Self { eps, delta, omegas, couplings }
    }

    /// The bare two-level gap 2 sqrt(eps^2 + delta^2), the system frequency
    /// seen by implicit baths at zero mode displacement.
    pub fn bare_gap(&self) -> f64 {
        2.0 * (self.eps * self.eps + self.delta * self.delta).sqrt()
    }
}

impl DiabaticModel for SpinBosonModel {
    fn dof(&self) -> usize {
        self.omegas.len()
    }

    fn evaluate(&self, q: &[f64], out: &mut PotentialPoint) {
        let mut harmonic = 0.0;
        let mut shift = 0.0;
        for j in 0..self.omegas.len() {
            let w2 = self.omegas[j] * self.omegas[j];
            harmonic += 0.5 * w2 * q[j] * q[j];
            shift += self.couplings[j] * q[j];
            out.grad_v0[j] = w2 * q[j];
            out.grad_v_bias[j] = self.couplings[j];
            out.grad_v_coup[j] = 0.0;
        }
        out.v0 = harmonic;
        out.v_bias = self.eps + shift;
        out.v_coup = self.delta;
    }
}

/// One-dimensional two-state molecule in a harmonic well whose bias is
/// swept linearly by the coordinate.  All fields are in atomic units with
/// the coordinate mass-weighted: `slope` is the physical bias slope
/// divided by sqrt(mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityModel {
    pub omega0: f64,
    pub eps: f64,
    pub delta: f64,
    pub slope: f64,
}

impl CavityModel {
    /// Converts the physical parameters (bias slope zeta per unit length,
    /// particle mass m) to the mass-weighted form.
    pub fn from_physical(omega0: f64, eps: f64, delta: f64, zeta: f64, mass: f64) -> Self {
        Self { omega0, eps, delta, slope: zeta / mass.sqrt() }
    }

    /// Minimum of the lower diabat, slope / omega0^2 in mass-weighted
    /// coordinates (the physical zeta / (m omega0^2)).  The initial nuclear
    /// wavepacket is the ground state of the well centred here.
    pub fn wigner_center(&self) -> f64 {
        self.slope / (self.omega0 * self.omega0)
    }

    /// Bare electronic gap 2 sqrt(bias^2 + delta^2) at mass-weighted
    /// position x.
    pub fn gap_at(&self, x: f64) -> f64 {
        let bias = self.eps + self.slope * x;
        2.0 * (bias * bias + self.delta * self.delta).sqrt()
    }
}

impl DiabaticModel for CavityModel {
    fn dof(&self) -> usize {
        1
    }

    fn evaluate(&self, q: &[f64], out: &mut PotentialPoint) {
        let x = q[0];
        out.v0 = 0.5 * self.omega0 * self.omega0 * x * x;
        out.v_bias = self.eps + self.slope * x;
        out.v_coup = self.delta;
        out.grad_v0[0] = self.omega0 * self.omega0 * x;
        out.grad_v_bias[0] = self.slope;
        out.grad_v_coup[0] = 0.0;
    }
}
