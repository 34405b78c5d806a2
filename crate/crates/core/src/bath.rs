//! Harmonic-bath spectral functions, golden-rule rates, and bath sampling.
//!
//! Each bath enters through the half-Fourier transform of its correlation
//! function, Gamma(w) = integral_0^inf e^{iwt} C(t) dt. The real part sets
//! the rates and the imaginary part the Lamb shifts:
//!
//! ```text
//!     gamma_-  = (ax^2 + ay^2) 2 Re Gamma(+w_S)     downward jumps
//!     gamma_+  = (ax^2 + ay^2) 2 Re Gamma(-w_S)     upward jumps
//!     gamma_z  =  az^2         2 Re Gamma(0)        dephasing jumps
//!     xi_-/+   = (ax^2 + ay^2)   Im Gamma(+-w_S)    level shifts
//!     w_LS     = w_S + xi_- - xi_+
//! ```
//!
//! where (ax, ay, az) are the adiabatic Pauli components of the coupling
//! operator at the current nuclear geometry, and w_S the adiabatic gap.
//! Coupling operators are taken traceless; an identity component would only
//! shift both levels together. Detailed balance
//! Re Gamma(-w) = e^{-beta w} Re Gamma(w) holds exactly for the thermal
//! baths, so gamma_+/gamma_- = e^{-beta w_S} to machine precision.
//!
//! Im Gamma is not available in closed form for the Debye bath; it is built
//! from Re Gamma through the Kramers-Kronig principal value
//!
//! ```text
//!     Im Gamma(w) = (1/pi) PV integral Re Gamma(w') / (w - w') dw'
//! ```
//!
//! evaluated by pole subtraction plus analytic log and tail terms, with
//! grid-doubling Simpson panels until 1e-6 relative convergence.

use crate::two_level::{expand_diabatic_operator, AdiabaticFrame, DiabaticOperator};
use crate::units::SPEED_OF_LIGHT;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Relative accuracy target of the principal-value quadrature.
pub const QUADRATURE_RTOL: f64 = 1e-6;

/// Series patch window: below this |beta w| the Bose factor is expanded.
const BOSE_SERIES_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BathError {
    #[error("principal-value quadrature did not reach {QUADRATURE_RTOL:e} at w = {omega}")]
    QuadratureNotConverged { omega: f64 },
    #[error("frequency {omega} outside the tabulated Lamb-shift range +-{limit}")]
    TabulatedRangeExceeded { omega: f64, limit: f64 },
}

/// Debye (overdamped Brownian) bath at inverse temperature beta:
/// J(w) = lambda w omega_c / (2 (w^2 + omega_c^2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebyeBath {
    /// Coupling-strength parameter; the spectral density peaks at lambda/4.
    pub lambda: f64,
    /// Cutoff frequency; the peak of J sits at w = omega_c.
    pub omega_c: f64,
    /// Inverse temperature.
    pub beta: f64,
}

impl DebyeBath {
    /// J(w) = lambda w omega_c / (2 (w^2 + omega_c^2)); odd in w.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        0.5 * self.lambda * omega * self.omega_c / (omega * omega + self.omega_c * self.omega_c)
    }

    /// Re Gamma(w) = J(w) / (1 - e^{-beta w}), patched with the series
    /// (1/beta)(1 + x/2 + x^2/12), x = beta w, inside the window around
    /// w = 0 where the ratio becomes 0/0. Re Gamma(0) = lambda/(2 beta omega_c).
    pub fn gamma_real(&self, omega: f64) -> f64 {
        let x = self.beta * omega;
        let lorentz =
            0.5 * self.lambda * self.omega_c / (omega * omega + self.omega_c * self.omega_c);
        if x.abs() < BOSE_SERIES_WINDOW {
            lorentz / self.beta * (1.0 + 0.5 * x + x * x / 12.0)
        } else {
            lorentz * omega / (-(-x).exp_m1())
        }
    }

    /// Im Gamma(w) by Kramers-Kronig principal value. The integrand pole at
    /// w' = w is subtracted analytically, the window [-W, W] with
    /// W = 50 max(omega_c, |w|, 1/beta) is handled by Simpson panels doubled
    /// to convergence, and the slowly decaying positive tail is integrated
    /// in closed form from the w' >> omega_c expansion of Re Gamma.
    pub fn gamma_imag(&self, omega: f64) -> Result<f64, BathError> {
        let w = 50.0 * self.omega_c.max(omega.abs()).max(1.0 / self.beta);
        let g_at_pole = self.gamma_real(omega);
        // (Re Gamma(w') - Re Gamma(w)) / (w - w'), smooth across w' = w.
        let smooth = |wp: f64| {
            let d = omega - wp;
            if d.abs() < 1e-10 * w {
                // Removable point: the limit is -d(Re Gamma)/dw.
                let h = 1e-6 * self.omega_c.max(omega.abs()).max(1.0 / self.beta);
                -(self.gamma_real(omega + h) - self.gamma_real(omega - h)) / (2.0 * h)
            } else {
                (self.gamma_real(wp) - g_at_pole) / d
            }
        };

        let mut panels: usize = 256;
        let mut previous = simpson(&smooth, -w, w, panels);
        loop {
            panels *= 2;
            let current = simpson(&smooth, -w, w, panels);
            let scale = current.abs().max(1e-12 * self.lambda.abs());
            if (current - previous).abs() <= QUADRATURE_RTOL * scale {
                let pole_log = g_at_pole * ((w + omega) / (w - omega)).ln();
                return Ok((current + pole_log + self.tail_correction(omega, w))
                    / std::f64::consts::PI);
            }
            if panels >= (1 << 22) {
                return Err(BathError::QuadratureNotConverged { omega });
            }
            previous = current;
        }
    }

    /// Closed-form integral of Re Gamma(w') / (w - w') over (W, inf), using
    /// Re Gamma(w') ~ (lambda omega_c / 2)(1/w' - omega_c^2/w'^3) there. The
    /// negative tail is exponentially suppressed by detailed balance.
    fn tail_correction(&self, omega: f64, w: f64) -> f64 {
        let a = 0.5 * self.lambda * self.omega_c;
        let first = if omega.abs() < 0.01 * w {
            // Series of (1/omega) ln(1 - omega/W): avoids cancellation.
            -(1.0 / w + omega / (2.0 * w * w) + omega * omega / (3.0 * w * w * w))
        } else {
            (-omega / w).ln_1p() / omega
        };
        let third = if omega.abs() < 0.01 * w {
            -(1.0 / (3.0 * w * w * w) + omega / (4.0 * w * w * w * w))
        } else {
            ((-omega / w).ln_1p() / omega + 1.0 / w + omega / (2.0 * w * w))
                / (omega * omega)
        };
        a * (first - self.omega_c * self.omega_c * third)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    debug_assert!(panels % 2 == 0);
    let h = (hi - lo) / panels as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..panels {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Free-space photon bath at zero temperature, optionally dressed by a
/// single lossy cavity mode that Purcell-enhances emission near resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonBath {
    pub c_light: f64,
    pub cavity: Option<CavityEnhancement>,
}

/// Lorentzian emission enhancement of a leaky cavity,
/// F(w) = 1 + 2C_1 kappa^2 / (kappa^2 + (w_cav - w)^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityEnhancement {
    /// Twice the single-atom cooperativity, the on-resonance enhancement.
    pub two_c1: f64,
    /// Cavity linewidth.
    pub kappa: f64,
    /// Cavity resonance frequency.
    pub omega_cav: f64,
}

impl CavityEnhancement {
    pub fn factor(&self, omega: f64) -> f64 {
        let det = self.omega_cav - omega;
        1.0 + self.two_c1 * self.kappa * self.kappa
            / (self.kappa * self.kappa + det * det)
    }
}

impl PhotonBath {
    /// Vacuum field with no cavity, c in atomic units.
    pub fn free_space() -> Self {
        Self {
            c_light: SPEED_OF_LIGHT,
            cavity: None,
        }
    }

    /// Re Gamma(w): the vacuum density of states times any cavity factor.
    /// Zero for w <= 0, so a photon bath never excites or dephases.
    pub fn gamma_real(&self, omega: f64) -> f64 {
        let vac = vacuum_gamma_real(omega, self.c_light);
        match &self.cavity {
            Some(cav) => vac * cav.factor(omega),
            None => vac,
        }
    }
}

/// Free-field Re Gamma(w) = 2 w^3 / (3 c^3) for w > 0, else 0.
pub fn vacuum_gamma_real(omega: f64, c_light: f64) -> f64 {
    if omega > 0.0 {
        2.0 * omega * omega * omega / (3.0 * c_light * c_light * c_light)
    } else {
        0.0
    }
}

/// On-resonance cooperativity from a Jaynes-Cummings coupling strength g:
/// 2C_1 = g^2 / (kappa mu^2 Re Gamma_vac(w_cav)).
pub fn two_c1_from_coupling(
    g: f64,
    kappa: f64,
    omega_cav: f64,
    mu: f64,
    c_light: f64,
) -> f64 {
    g * g / (kappa * mu * mu * vacuum_gamma_real(omega_cav, c_light))
}

/// Emission rate of a transition with squared coupling `coupling_sq`
/// (= ax^2 + ay^2 of the dipole operator) at gap `omega`.
pub fn cavity_gamma_minus(bath: &PhotonBath, coupling_sq: f64, omega: f64) -> f64 {
    2.0 * coupling_sq * bath.gamma_real(omega)
}

/// Golden-rule rates and Lamb shifts at one nuclear geometry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSet {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub gamma_z: f64,
    pub xi_plus: f64,
    pub xi_minus: f64,
    pub xi_z: f64,
    /// Lamb-shifted gap, w_S + xi_- - xi_+.
    pub omega_ls: f64,
}

impl RateSet {
    /// Decay rate of the coherence, (gamma_+ + gamma_-)/2 + 2 gamma_z.
    pub fn gamma_2(&self) -> f64 {
        0.5 * (self.gamma_plus + self.gamma_minus) + 2.0 * self.gamma_z
    }

    pub fn total_jump_rate(&self) -> f64 {
        self.gamma_plus + self.gamma_minus + self.gamma_z
    }
}

/// One system-bath coupling channel: which spectrum, through which operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathChannel {
    pub operator: DiabaticOperator,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Spectrum {
    Debye(DebyeBath),
    Photon(PhotonBath),
}

impl Spectrum {
    pub fn gamma_real(&self, omega: f64) -> f64 {
        match self {
            Spectrum::Debye(b) => b.gamma_real(omega),
            Spectrum::Photon(b) => b.gamma_real(omega),
        }
    }

    /// Im Gamma; the zero-temperature photon bath carries no level shift
    /// in this model, only the Debye bath is Kramers-Kronig transformed.
    pub fn gamma_imag(&self, omega: f64) -> Result<f64, BathError> {
        match self {
            Spectrum::Debye(b) => b.gamma_imag(omega),
            Spectrum::Photon(_) => Ok(0.0),
        }
    }
}

/// A channel whose spectral functions can be evaluated at a frequency.
pub trait RateChannel {
    fn operator(&self) -> &DiabaticOperator;
    fn gamma_real(&self, omega: f64) -> f64;
    fn gamma_imag(&self, omega: f64) -> Result<f64, BathError>;
}

impl RateChannel for BathChannel {
    fn operator(&self) -> &DiabaticOperator {
        &self.operator
    }

    fn gamma_real(&self, omega: f64) -> f64 {
        self.spectrum.gamma_real(omega)
    }

    fn gamma_imag(&self, omega: f64) -> Result<f64, BathError> {
        self.spectrum.gamma_imag(omega)
    }
}

/// Assembles the secular rates at `frame` by summing every channel's
/// contribution weighted with its adiabatic coupling components.
pub fn redfield_rates<C: RateChannel>(
    frame: &AdiabaticFrame,
    channels: &[C],
) -> Result<RateSet, BathError> {
    let omega_s = frame.gap;
    let mut rates = RateSet::default();
    for channel in channels {
        let e = expand_diabatic_operator(frame, channel.operator());
        let perp = e.ax * e.ax + e.ay * e.ay;
        let zz = e.az * e.az;
        rates.gamma_minus += 2.0 * perp * channel.gamma_real(omega_s);
        rates.gamma_plus += 2.0 * perp * channel.gamma_real(-omega_s);
        rates.gamma_z += 2.0 * zz * channel.gamma_real(0.0);
        rates.xi_minus += perp * channel.gamma_imag(omega_s)?;
        rates.xi_plus += perp * channel.gamma_imag(-omega_s)?;
        rates.xi_z += zz * channel.gamma_imag(0.0)?;
    }
    rates.omega_ls = omega_s + rates.xi_minus - rates.xi_plus;
    Ok(rates)
}

/// Natural cubic spline of Im Gamma on a symmetric uniform frequency grid.
///
/// The principal-value quadrature is too slow for propagation loops, so a
/// channel tabulates it once over every frequency the ensemble can reach and
/// interpolates values and derivatives afterwards. The table is immutable
/// and shared read-only across trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTable {
    /// Largest |omega| served by lookups.
    limit: f64,
    /// Half-width of the tabulated grid; wider than `limit` so the natural
    /// end condition's O(h^2) boundary layer lies outside the served range.
    grid_max: f64,
    spacing: f64,
    values: Vec<f64>,
    /// Spline second derivatives from the natural tridiagonal system.
    second: Vec<f64>,
}

impl ShiftTable {
    /// Tabulates Im Gamma of `bath` for lookups on [-omega_max, omega_max]
    /// with `nodes` points (at least 8).
    pub fn build(bath: &DebyeBath, omega_max: f64, nodes: usize) -> Result<Self, BathError> {
        assert!(nodes >= 8, "spline table needs at least 8 nodes");
        assert!(omega_max > 0.0);
        let grid_max = 1.08 * omega_max;
        let spacing = 2.0 * grid_max / (nodes - 1) as f64;
        let mut values = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let omega = -grid_max + i as f64 * spacing;
            values.push(bath.gamma_imag(omega)?);
        }
        let second = natural_spline_second_derivatives(&values, spacing);
        Ok(Self {
            limit: omega_max,
            grid_max,
            spacing,
            values,
            second,
        })
    }

    fn locate(&self, omega: f64) -> Result<(usize, f64), BathError> {
        if omega.abs() > self.limit || !omega.is_finite() {
            return Err(BathError::TabulatedRangeExceeded {
                omega,
                limit: self.limit,
            });
        }
        let pos = (omega + self.grid_max) / self.spacing;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        Ok((i, pos - i as f64))
    }

    pub fn value(&self, omega: f64) -> Result<f64, BathError> {
        let (i, t) = self.locate(omega)?;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let h2 = self.spacing * self.spacing / 6.0;
        let u = 1.0 - t;
        Ok(u * y0 + t * y1 + h2 * ((u * u * u - u) * m0 + (t * t * t - t) * m1))
    }

    pub fn derivative(&self, omega: f64) -> Result<f64, BathError> {
        let (i, t) = self.locate(omega)?;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let u = 1.0 - t;
        Ok((y1 - y0) / self.spacing
            + self.spacing / 6.0 * ((1.0 - 3.0 * u * u) * m0 + (3.0 * t * t - 1.0) * m1))
    }
}

/// Solves the natural-spline tridiagonal system for uniform spacing h:
/// m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]) / h^2.
fn natural_spline_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut diag = vec![4.0; n - 2];
    let mut rhs: Vec<f64> = (1..n - 1)
        .map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h))
        .collect();
    for i in 1..n - 2 {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..n - 2).rev() {
        let upper = if i + 1 < n - 2 { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper) / diag[i];
    }
    m
}

/// A bath channel with its Lamb-shift table prebuilt, ready for the
/// propagation hot loop. Photon channels carry no table: their shift is
/// identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedChannel {
    pub operator: DiabaticOperator,
    pub spectrum: Spectrum,
    table: Option<ShiftTable>,
}

impl PreparedChannel {
    /// Number of spline nodes used by [`PreparedChannel::prepare`].
    pub const TABLE_NODES: usize = 1025;

    /// Prepares `channel` for gaps up to `omega_max` in magnitude.
    pub fn prepare(channel: &BathChannel, omega_max: f64) -> Result<Self, BathError> {
        let table = match &channel.spectrum {
            Spectrum::Debye(bath) => Some(ShiftTable::build(bath, omega_max, Self::TABLE_NODES)?),
            Spectrum::Photon(_) => None,
        };
        Ok(Self {
            operator: channel.operator,
            spectrum: channel.spectrum.clone(),
            table,
        })
    }

    /// d(Im Gamma)/d omega, needed for the Lamb-shift force.
    pub fn gamma_imag_derivative(&self, omega: f64) -> Result<f64, BathError> {
        match &self.table {
            Some(t) => t.derivative(omega),
            None => Ok(0.0),
        }
    }
}

impl RateChannel for PreparedChannel {
    fn operator(&self) -> &DiabaticOperator {
        &self.operator
    }

    fn gamma_real(&self, omega: f64) -> f64 {
        self.spectrum.gamma_real(omega)
    }

    fn gamma_imag(&self, omega: f64) -> Result<f64, BathError> {
        match &self.table {
            Some(t) => t.value(omega),
            None => Ok(0.0),
        }
    }
}

/// Debye bath discretized into N modes on the tangent grid
/// w_j = omega_c tan((j - 1/2) pi / (2N)), c_j = w_j sqrt(lambda / (2N)),
/// which reproduces J exactly in the N -> inf limit and satisfies the
/// sum rule 2 sum_j c_j^2 / w_j^2 = lambda at every N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl DiscretizedBath {
    /// 2 sum_j c_j^2 / w_j^2, equal to lambda by construction.
    pub fn reorganization(&self) -> f64 {
        2.0 * self
            .omegas
            .iter()
            .zip(&self.couplings)
            .map(|(w, c)| c * c / (w * w))
            .sum::<f64>()
    }
}

pub fn discretize_debye(bath: &DebyeBath, n_modes: usize) -> DiscretizedBath {
    let n = n_modes as f64;
    let scale = (bath.lambda / (2.0 * n)).sqrt();
    let mut omegas = Vec::with_capacity(n_modes);
    let mut couplings = Vec::with_capacity(n_modes);
    for j in 1..=n_modes {
        let u = (j as f64 - 0.5) * std::f64::consts::FRAC_PI_2 / n;
        let w = bath.omega_c * u.tan();
        omegas.push(w);
        couplings.push(w * scale);
    }
    DiscretizedBath { omegas, couplings }
}

/// Draws mass-weighted (q, p) from the classical Boltzmann distribution of
/// the uncoupled discretized bath: q_j ~ N(0, 1/(beta w_j^2)),
/// p_j ~ N(0, 1/beta). Per mode the position is drawn before the momentum.
pub fn sample_boltzmann<R: Rng + ?Sized>(
    disc: &DiscretizedBath,
    beta: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let p_sigma = (1.0 / beta).sqrt();
    let p_dist = Normal::new(0.0, p_sigma).unwrap();
    let mut q = Vec::with_capacity(disc.omegas.len());
    let mut p = Vec::with_capacity(disc.omegas.len());
    for &w in &disc.omegas {
        let q_dist = Normal::new(0.0, 1.0 / (beta.sqrt() * w)).unwrap();
        q.push(q_dist.sample(rng));
        p.push(p_dist.sample(rng));
    }
    (q, p)
}

/// Draws mass-weighted (q, p) from the Wigner function of the vibrational
/// ground state of a harmonic mode of frequency `omega` centred at `center`:
/// q ~ N(center, 1/(2 omega)), p ~ N(0, omega/2). Position drawn first.
pub fn sample_wigner_ground<R: Rng + ?Sized>(
    omega: f64,
    center: f64,
    rng: &mut R,
) -> (f64, f64) {
    let q_dist = Normal::new(center, (0.5 / omega).sqrt()).unwrap();
    let p_dist = Normal::new(0.0, (0.5 * omega).sqrt()).unwrap();
    (q_dist.sample(rng), p_dist.sample(rng))
}
