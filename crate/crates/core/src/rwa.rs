//! Rotating-wave closed forms: vacuum Rabi frequency, amplitudes during a
//! resonance window, pulse areas and the RF Rabi frequency.
//!
//! Amplitudes are in the instantaneous interaction representation, the same
//! one used by [`crate::dynamics`], so moduli and phases compare directly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::Energy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwaParams {
    pub g: Energy,
    pub x01: f64,
    /// ω_d = ω₀ − ΔE/ħ in rad/ns.
    pub detuning: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiFrequency {
    /// Ω(0) = 2g x₀₁/ħ, rad/ns.
    pub resonant: f64,
    /// Ω(ω_d) = √(Ω(0)² + ω_d²), rad/ns.
    pub detuned: f64,
    /// 2π/Ω(ω_d), ns.
    pub period: f64,
}

pub fn rabi_frequency(p: &RwaParams) -> RabiFrequency {
    let resonant = 2.0 * p.g.rad_per_ns() * p.x01;
    let detuned = resonant.hypot(p.detuning);
    RabiFrequency { resonant, detuned, period: 2.0 * PI / detuned }
}

/// (c₀₀, c₀₁, c₁₀, c₁₁) at time `t` after the system reaches the detuning of `p`.
pub fn rwa_amplitudes(p: &RwaParams, alpha: Complex64, beta: Complex64, t: f64) -> [Complex64; 4] {
    let r = rabi_frequency(p);
    let (om, wd) = (r.detuned, p.detuning);
    let (sn, cs) = (0.5 * om * t).sin_cos();
    let half = Complex64::from_polar(1.0, 0.5 * wd * t);
    let c01 = beta * (r.resonant / om) * sn * half;
    let c10 = beta * Complex64::new(cs, wd / om * sn) * half.conj();
    [alpha, c01, c10, Complex64::new(0.0, 0.0)]
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown pulse operation `{0}`")]
pub struct UnknownOperation(pub String);

/// Named resonance-window operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseOperation {
    EntanglePlus,
    Swap,
    EntangleMinus,
    RetrieveOrTransferGeneral,
    TransferPureExcitation,
}

impl PulseOperation {
    pub const ALL: [PulseOperation; 5] = [
        PulseOperation::EntanglePlus,
        PulseOperation::Swap,
        PulseOperation::EntangleMinus,
        PulseOperation::RetrieveOrTransferGeneral,
        PulseOperation::TransferPureExcitation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PulseOperation::EntanglePlus => "entangle_plus",
            PulseOperation::Swap => "swap",
            PulseOperation::EntangleMinus => "entangle_minus",
            PulseOperation::RetrieveOrTransferGeneral => "retrieve_or_transfer_general",
            PulseOperation::TransferPureExcitation => "transfer_pure_excitation",
        }
    }
}

impl fmt::Display for PulseOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PulseOperation {
    type Err = UnknownOperation;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| UnknownOperation(s.to_string()))
    }
}

/// Pulse area Ω·Δt for an operation.
pub fn pulse_plan(op: PulseOperation) -> f64 {
    match op {
        PulseOperation::EntanglePlus => PI / 2.0,
        PulseOperation::Swap => PI,
        PulseOperation::EntangleMinus => 1.5 * PI,
        PulseOperation::RetrieveOrTransferGeneral => 3.0 * PI,
        PulseOperation::TransferPureExcitation => PI,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// RF bias amplitude (dimensionless, in units of I₀).
    pub s_rf: f64,
    /// Drive angular frequency, rad/ns.
    pub omega_rf: f64,
}

/// Ω_rf = √((s_rf x₀₁ E_J/ħ)² + (ω_rf − ΔE/ħ)²).
pub fn rf_rabi_frequency(drive: &DriveParams, x01: f64, josephson_energy: Energy, level_spacing: f64) -> f64 {
    (drive.s_rf * x01 * josephson_energy.rad_per_ns()).hypot(drive.omega_rf - level_spacing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_detuning() {
        let p = RwaParams { g: Energy::from_rad_per_ns(1.0), x01: 0.03, detuning: 0.0 };
        let r0 = rabi_frequency(&p);
        assert_eq!(r0.detuned, r0.resonant);
        let q = RwaParams { detuning: r0.resonant * 3f64.sqrt(), ..p };
        assert!((rabi_frequency(&q).detuned / r0.resonant - 2.0).abs() < 1e-15);
    }

    #[test]
    fn operation_names_round_trip() {
        for op in PulseOperation::ALL {
            assert_eq!(op.name().parse::<PulseOperation>().unwrap(), op);
        }
        assert!("rotate".parse::<PulseOperation>().is_err());
        assert_eq!(pulse_plan(PulseOperation::Swap), PI);
        assert_eq!(pulse_plan(PulseOperation::RetrieveOrTransferGeneral), 3.0 * PI);
        assert_eq!(pulse_plan(PulseOperation::TransferPureExcitation), PI);
    }
}
