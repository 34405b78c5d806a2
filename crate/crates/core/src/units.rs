//! Unit conversions through Hartree atomic units (ħ = 1).
//!
//! Every conversion goes value → atomic units → target, so the constant
//! table below is the single source of truth. Constants are CODATA 2018,
//! quoted to at least 10 significant figures.

use serde::{Deserialize, Serialize};

/// One electronvolt in Hartree: 0.03674932218.
pub const EV: f64 = 0.036749322175655;
/// One wavenumber (cm⁻¹) in Hartree: 4.556335253e-6.
pub const INV_CM: f64 = 4.556335252912e-6;
/// One ångström in Bohr radii: 1.889726125.
pub const ANGSTROM: f64 = 1.889726124626;
/// One unified atomic mass unit in electron masses: 1822.888486.
pub const AMU: f64 = 1822.888486209;
/// One Debye in e·a₀: 0.3934302700.
pub const DEBYE: f64 = 0.3934302700;
/// One femtosecond in atomic time units: 41.34137333.
pub const FEMTOSECOND: f64 = 41.341373335335;
/// Speed of light in atomic units (1/α): 137.0359991.
pub const SPEED_OF_LIGHT: f64 = 137.035999084;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Hartree,
    ElectronVolt,
    WaveNumber,
    Bohr,
    Angstrom,
    ElectronMass,
    Amu,
    AtomicTime,
    Femtosecond,
    AtomicDipole,
    Debye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Energy,
    Length,
    Mass,
    Time,
    Dipole,
}

impl Unit {
    fn dimension(self) -> Dimension {
        match self {
            Unit::Hartree | Unit::ElectronVolt | Unit::WaveNumber => Dimension::Energy,
            Unit::Bohr | Unit::Angstrom => Dimension::Length,
            Unit::ElectronMass | Unit::Amu => Dimension::Mass,
            Unit::AtomicTime | Unit::Femtosecond => Dimension::Time,
            Unit::AtomicDipole | Unit::Debye => Dimension::Dipole,
        }
    }

    /// Size of this unit expressed in the atomic unit of its dimension.
    fn in_atomic_units(self) -> f64 {
        match self {
            Unit::Hartree | Unit::Bohr | Unit::ElectronMass | Unit::AtomicTime | Unit::AtomicDipole => 1.0,
            Unit::ElectronVolt => EV,
            Unit::WaveNumber => INV_CM,
            Unit::Angstrom => ANGSTROM,
            Unit::Amu => AMU,
            Unit::Femtosecond => FEMTOSECOND,
            Unit::Debye => DEBYE,
        }
    }
}

impl std::str::FromStr for Unit {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hartree" | "ha" | "au_energy" => Ok(Unit::Hartree),
            "ev" => Ok(Unit::ElectronVolt),
            "cm-1" | "cm^-1" | "wavenumber" => Ok(Unit::WaveNumber),
            "bohr" | "a0" => Ok(Unit::Bohr),
            "angstrom" | "å" => Ok(Unit::Angstrom),
            "me" | "electron_mass" => Ok(Unit::ElectronMass),
            "amu" => Ok(Unit::Amu),
            "au_time" => Ok(Unit::AtomicTime),
            "fs" | "femtosecond" => Ok(Unit::Femtosecond),
            "au_dipole" | "ea0" => Ok(Unit::AtomicDipole),
            "debye" | "d" => Ok(Unit::Debye),
            other => Err(UnitError::UnknownUnit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnitError {
    #[error("unknown unit name {0:?}")]
    UnknownUnit(String),
    #[error("cannot convert {from:?} to {to:?}: different dimensions")]
    IncompatibleDimensions { from: Unit, to: Unit },
}

/// Converts `value` between two units of the same dimension.
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64, UnitError> {
    if from.dimension() != to.dimension() {
        return Err(UnitError::IncompatibleDimensions { from, to });
    }
    Ok(value * from.in_atomic_units() / to.in_atomic_units())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ev_to_hartree_matches_constant_table() {
        let ha = convert(1.0, Unit::ElectronVolt, Unit::Hartree).unwrap();
        assert!((ha - 0.03674932218).abs() < 1e-11);
    }

    #[test]
    fn wavenumber_conversion() {
        let ha = convert(300.0, Unit::WaveNumber, Unit::Hartree).unwrap();
        assert!((ha - 300.0 * 4.556335253e-6).abs() < 1e-12);
    }

    #[test]
    fn round_trips_are_identity() {
        for (a, b) in [
            (Unit::ElectronVolt, Unit::Hartree),
            (Unit::WaveNumber, Unit::ElectronVolt),
            (Unit::Angstrom, Unit::Bohr),
            (Unit::Amu, Unit::ElectronMass),
            (Unit::Femtosecond, Unit::AtomicTime),
            (Unit::Debye, Unit::AtomicDipole),
        ] {
            let v = 1.234567890123;
            let back = convert(convert(v, a, b).unwrap(), b, a).unwrap();
            assert!((back - v).abs() < 1e-12, "{a:?}<->{b:?} round trip drifted");
        }
    }

    #[test]
    fn cross_dimension_conversion_is_rejected() {
        let err = convert(1.0, Unit::ElectronVolt, Unit::Bohr).unwrap_err();
        assert!(matches!(err, UnitError::IncompatibleDimensions { .. }));
    }

    #[test]
    fn unit_names_parse() {
        assert_eq!("eV".parse::<Unit>().unwrap(), Unit::ElectronVolt);
        assert_eq!("cm-1".parse::<Unit>().unwrap(), Unit::WaveNumber);
        assert!(matches!(
            "furlong".parse::<Unit>().unwrap_err(),
            UnitError::UnknownUnit(_)
        ));
    }
}
