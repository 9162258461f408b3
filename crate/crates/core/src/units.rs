//! Physical constants and the internal unit system.
//!
//! Everything inside the crate runs with ħ = 1: energies are stored as
//! angular frequencies in rad/ns and times in ns. Conversions to eV, GHz,
//! kelvin or joules only happen at API boundaries through [`Energy`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

// CODATA 2018.
pub const HBAR: f64 = 1.054_571_817e-34; // J s
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19; // C
pub const BOLTZMANN: f64 = 1.380_649e-23; // J / K
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12; // F / m
pub const PLANCK: f64 = 2.0 * PI * HBAR;

/// One joule expressed in rad/ns.
pub const RAD_PER_NS_PER_JOULE: f64 = 1e-9 / HBAR;

/// One microelectronvolt expressed in rad/ns (≈ 1.519267).
pub const RAD_PER_NS_PER_MICRO_EV: f64 = 1e-6 * ELEMENTARY_CHARGE * RAD_PER_NS_PER_JOULE;

/// An energy, stored internally as an angular frequency in rad/ns.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(f64);

impl Energy {
    pub const ZERO: Energy = Energy(0.0);

    pub const fn from_rad_per_ns(v: f64) -> Self {
        Energy(v)
    }

    pub fn from_joules(v: f64) -> Self {
        Energy(v * RAD_PER_NS_PER_JOULE)
    }

    pub fn from_micro_ev(v: f64) -> Self {
        Energy(v * RAD_PER_NS_PER_MICRO_EV)
    }

    pub fn from_milli_ev(v: f64) -> Self {
        Self::from_micro_ev(v * 1e3)
    }

    pub fn from_nano_ev(v: f64) -> Self {
        Self::from_micro_ev(v * 1e-3)
    }

    /// Energy hf of a quantum at ordinary frequency `f` in GHz.
    pub fn from_ghz(f: f64) -> Self {
        Energy(2.0 * PI * f)
    }

    /// Energy k_B T.
    pub fn from_kelvin(t: f64) -> Self {
        Self::from_joules(BOLTZMANN * t)
    }

    pub const fn rad_per_ns(self) -> f64 {
        self.0
    }

    pub fn joules(self) -> f64 {
        self.0 / RAD_PER_NS_PER_JOULE
    }

    pub fn micro_ev(self) -> f64 {
        self.0 / RAD_PER_NS_PER_MICRO_EV
    }

    pub fn milli_ev(self) -> f64 {
        self.micro_ev() * 1e-3
    }

    pub fn nano_ev(self) -> f64 {
        self.micro_ev() * 1e3
    }

    pub fn ghz(self) -> f64 {
        self.0 / (2.0 * PI)
    }

    pub fn kelvin(self) -> f64 {
        self.joules() / BOLTZMANN
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ueV", self.micro_ev())
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Neg for Energy {
    type Output = Energy;
    fn neg(self) -> Energy {
        Energy(-self.0)
    }
}

impl Mul<f64> for Energy {
    type Output = Energy;
    fn mul(self, rhs: f64) -> Energy {
        Energy(self.0 * rhs)
    }
}

impl Mul<Energy> for f64 {
    type Output = Energy;
    fn mul(self, rhs: Energy) -> Energy {
        Energy(self * rhs.0)
    }
}

impl Div<f64> for Energy {
    type Output = Energy;
    fn div(self, rhs: f64) -> Energy {
        Energy(self.0 / rhs)
    }
}

impl Div for Energy {
    type Output = f64;
    fn div(self, rhs: Energy) -> f64 {
        self.0 / rhs.0
    }
}

/// Convert an angular frequency in rad/ns to an ordinary frequency in GHz.
pub fn rad_per_ns_to_ghz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Convert an ordinary frequency in GHz to an angular frequency in rad/ns.
pub fn ghz_to_rad_per_ns(f: f64) -> f64 {
    2.0 * PI * f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn micro_ev_conversion() {
        assert_relative_eq!(RAD_PER_NS_PER_MICRO_EV, 1.519_267, max_relative = 1e-6);
    }

    #[test]
    fn round_trips() {
        let e = Energy::from_milli_ev(43.05);
        assert_relative_eq!(e.milli_ev(), 43.05, max_relative = 1e-14);
        assert_relative_eq!(Energy::from_ghz(15.0).ghz(), 15.0, max_relative = 1e-14);
        // 15 GHz quantum is about 720 mK
        assert!((Energy::from_ghz(15.0).kelvin() - 0.720).abs() < 0.005);
    }
}
