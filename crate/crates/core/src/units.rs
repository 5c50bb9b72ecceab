//! Physical constants, ion species, RF drive parameters and the
//! frequency/curvature conversions shared by every other module.
//!
//! Everything here is strict SI. Micrometres and megahertz only appear at the
//! configuration boundary (see [`crate::config`]).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementary charge (C), CODATA 2018, exact.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Unified atomic mass unit (kg), CODATA 2018.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Electron rest mass (kg), CODATA 2018.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// Micrometre in metres.
pub const MICRON: f64 = 1e-6;

/// Neutral atomic masses in u, together with the charge state of the ion.
const SPECIES_TABLE: &[(&str, f64, u32)] = &[
    ("9Be+", 9.012_183_065, 1),
    ("25Mg+", 24.985_836_976, 1),
    ("40Ca+", 39.962_590_863, 1),
    ("88Sr+", 87.905_612_253, 1),
    ("171Yb+", 170.936_332_3, 1),
];

/// A trapped ion species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
}

impl IonSpecies {
    pub fn new(name: impl Into<String>, mass: f64, charge: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::validation("species.mass", "must be positive"));
        }
        if !(charge.is_finite() && charge > 0.0) {
            return Err(Error::validation("species.charge", "must be positive"));
        }
        Ok(Self {
            name: name.into(),
            mass,
            charge,
        })
    }

    /// Charge-to-mass ratio q/m in C/kg.
    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }
}

/// Names of every registered species.
pub fn registered_species() -> impl Iterator<Item = &'static str> {
    SPECIES_TABLE.iter().map(|(name, _, _)| *name)
}

/// Looks up a registered species by name (e.g. `"9Be+"`).
///
/// Ion mass is the neutral atomic mass minus the removed electrons.
pub fn species_constants(name: &str) -> Result<IonSpecies> {
    let (name, mass_u, z) = SPECIES_TABLE
        .iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| Error::UnknownSpecies(name.to_string()))?;
    let mass = mass_u * ATOMIC_MASS_UNIT - f64::from(*z) * ELECTRON_MASS;
    IonSpecies::new(*name, mass, f64::from(*z) * ELEMENTARY_CHARGE)
}

/// RF drive: zero-peak amplitude and angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfDrive {
    /// V, zero-peak
    pub amplitude: f64,
    /// rad/s
    pub angular_frequency: f64,
}

impl RfDrive {
    pub fn new(amplitude: f64, angular_frequency: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::validation("drive.amplitude", "must be >= 0"));
        }
        if !(angular_frequency.is_finite() && angular_frequency > 0.0) {
            return Err(Error::validation("drive.angular_frequency", "must be > 0"));
        }
        Ok(Self {
            amplitude,
            angular_frequency,
        })
    }

    /// Prefactor `q U^2 / (4 m Omega^2)` of the pseudopotential, in V m^2 / V^2.
    pub fn pseudopotential_prefactor(&self, species: &IonSpecies) -> f64 {
        species.charge * self.amplitude * self.amplitude
            / (4.0 * species.mass * self.angular_frequency * self.angular_frequency)
    }
}

/// A point above the electrode plane, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EvalPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }

    pub fn offset(self, dx: f64, dy: f64, dz: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

/// Converts a frequency in Hz to angular frequency.
pub fn angular(frequency_hz: f64) -> f64 {
    2.0 * PI * frequency_hz
}

/// Potential curvature (V/m^2) that yields the given secular frequency.
pub fn curvature_for_frequency(species: &IonSpecies, secular_frequency: f64) -> f64 {
    species.mass * secular_frequency * secular_frequency / species.charge
}

/// Secular frequency obtained from a curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularFrequency {
    /// rad/s, always non-negative
    pub omega: f64,
    /// Set when the curvature is negative; `omega` is then the magnitude.
    pub anti_confined: bool,
}

pub fn frequency_for_curvature(species: &IonSpecies, curvature: f64) -> SecularFrequency {
    SecularFrequency {
        omega: (species.charge_to_mass() * curvature.abs()).sqrt(),
        anti_confined: curvature < 0.0,
    }
}
