//! Piezoelectric disk resonator: dilatational mode, capacitances, the
//! junction coupling constant and thermal occupation.
//!
//! Derived quantities are evaluated in a device unit system (µm, ns, µeV and
//! the elementary charge) so that every intermediate stays near unity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Energy, BOLTZMANN, ELEMENTARY_CHARGE, HBAR, VACUUM_PERMITTIVITY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResonatorError {
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("resonator {0} must be positive")]
    NonPositiveGeometry(&'static str),
}

/// Which gate electrode a junction is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    /// The junction sees the whole top electrode.
    Full,
    /// The junction sees one half of a split electrode; coupling is g/2.
    Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Mass density in g/cm³.
    pub density_g_cm3: f64,
    /// ε₃₃ / ε₀.
    pub relative_permittivity: f64,
    /// c₃₃ in GPa.
    pub stiffness_gpa: f64,
    /// e₃₃ in C/m².
    pub piezo_modulus: f64,
    /// Disk radius in µm.
    pub radius_um: f64,
    /// Disk thickness in nm.
    pub thickness_nm: f64,
}

impl ResonatorParams {
    /// The AlN disk with R = 0.230 µm and its thickness set for ω₀/2π = 15 GHz
    /// exactly (b ≈ 377.2 nm).
    pub fn aln_15ghz() -> Self {
        ResonatorParams {
            density_g_cm3: 3.26,
            relative_permittivity: 10.7,
            stiffness_gpa: 395.0,
            piezo_modulus: 1.46,
            radius_um: 0.230,
            thickness_nm: 377.0,
        }
        .with_frequency_ghz(15.0)
    }

    /// Choose the thickness so that ω₀/2π equals `f_ghz`.
    pub fn with_frequency_ghz(mut self, f_ghz: f64) -> Self {
        // b = πv/ω₀ = v/2f; v in m/s, f in GHz gives b in nm
        self.thickness_nm = self.sound_speed() / (2.0 * f_ghz);
        self
    }

    pub fn with_radius(mut self, radius_um: f64) -> Self {
        self.radius_um = radius_um;
        self
    }

    pub fn validate(&self) -> Result<(), ResonatorError> {
        for (name, v) in [
            ("density", self.density_g_cm3),
            ("permittivity", self.relative_permittivity),
            ("stiffness", self.stiffness_gpa),
            ("radius", self.radius_um),
            ("thickness", self.thickness_nm),
        ] {
            if !(v > 0.0) {
                return Err(ResonatorError::NonPositiveGeometry(name));
            }
        }
        Ok(())
    }

    /// Piezoelectric efficiency γ = e₃₃² / ε₃₃c₃₃.
    pub fn piezo_efficiency(&self) -> f64 {
        self.piezo_modulus.powi(2)
            / (self.relative_permittivity * VACUUM_PERMITTIVITY * self.stiffness_gpa * 1e9)
    }

    /// c̃₃₃ = (1 + γ) c₃₃ in GPa.
    pub fn enhanced_stiffness_gpa(&self) -> f64 {
        (1.0 + self.piezo_efficiency()) * self.stiffness_gpa
    }

    /// Sound speed √(c̃₃₃/ρ) in m/s.
    pub fn sound_speed(&self) -> f64 {
        (self.enhanced_stiffness_gpa() * 1e9 / (self.density_g_cm3 * 1e3)).sqrt()
    }

    /// ω₀ = πv/b in rad/ns.
    pub fn dilatational_frequency(&self) -> f64 {
        let v = self.sound_speed() * 1e-3; // µm/ns
        std::f64::consts::PI * v / self.thickness_um()
    }

    pub fn thickness_um(&self) -> f64 {
        self.thickness_nm * 1e-3
    }

    /// (C_res, C̃_res) in fF.
    pub fn capacitances_ff(&self) -> (f64, f64) {
        let area = std::f64::consts::PI * (self.radius_um * 1e-6).powi(2);
        let c = self.relative_permittivity * VACUUM_PERMITTIVITY * area / (self.thickness_nm * 1e-9);
        let g = self.piezo_efficiency();
        let c_ff = c * 1e15;
        (c_ff, c_ff / (1.0 - g - g * g))
    }

    /// Cylinder mass ρπR²b in kg.
    pub fn mass_kg(&self) -> f64 {
        self.density_g_cm3
            * 1e3
            * std::f64::consts::PI
            * (self.radius_um * 1e-6).powi(2)
            * self.thickness_nm
            * 1e-9
    }

    /// Coupling g = ħ^{3/2} e₃₃ C̃_res √ω₀ / (e ε₃₃ √(ρπR²b)), halved for a split gate.
    pub fn coupling_strength(&self, gate: Gate) -> Energy {
        // device units: length µm, time ns, energy µeV, charge e
        let q = ELEMENTARY_CHARGE;
        let hbar = HBAR / (1e-6 * q * 1e-9);
        let mass_unit = q * 1e-12; // µeV ns² / µm² in kg
        let rho = self.density_g_cm3 * 1e-15 / mass_unit;
        let e33 = self.piezo_modulus * 1e-12 / q;
        let eps = self.relative_permittivity * VACUUM_PERMITTIVITY * 1e-12 / q;
        let (_, c_tilde_ff) = self.capacitances_ff();
        let c_tilde = c_tilde_ff * 1e-15 * 1e-6 / q;
        let w0 = self.dilatational_frequency();
        let b = self.thickness_um();
        let r = self.radius_um;
        let g = hbar.powf(1.5) * e33 * c_tilde * w0.sqrt()
            / (eps * (rho * std::f64::consts::PI * r * r * b).sqrt());
        let g = Energy::from_micro_ev(g);
        match gate {
            Gate::Full => g,
            Gate::Split => g / 2.0,
        }
    }

    pub fn derived(&self) -> ResonatorDerived {
        let (c, ct) = self.capacitances_ff();
        ResonatorDerived {
            omega0: self.dilatational_frequency(),
            c_res_ff: c,
            c_res_tilde_ff: ct,
            g_full_gate: self.coupling_strength(Gate::Full),
            mass_kg: self.mass_kg(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonatorDerived {
    /// rad/ns
    pub omega0: f64,
    pub c_res_ff: f64,
    pub c_res_tilde_ff: f64,
    pub g_full_gate: Energy,
    pub mass_kg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalOccupation {
    /// Probability of the one-phonon state.
    pub p1: f64,
    /// Bose occupation n_B(ħω₀).
    pub bose: f64,
}

/// Thermal one-phonon probability and Bose occupation of a mode at `omega0` (rad/ns).
pub fn thermal_excited_probability(omega0: f64, kelvin: f64) -> Result<ThermalOccupation, ResonatorError> {
    if !(kelvin > 0.0) {
        return Err(ResonatorError::NonPositiveTemperature(kelvin));
    }
    let x = Energy::from_rad_per_ns(omega0).joules() / (BOLTZMANN * kelvin);
    Ok(ThermalOccupation {
        // 2 sinh(x/2) e^{-3x/2}, written so it cannot overflow
        p1: (-x).exp() * -(-x).exp_m1(),
        bose: 1.0 / x.exp_m1(),
    })
}

/// Normalized cosine mode `f_n(z) = sqrt((2 − δ_{n0})/b) cos(nπz/b)` on [0, b].
pub fn mode_function(n: usize, z: f64, b: f64) -> f64 {
    let norm = if n == 0 { 1.0 / b } else { 2.0 / b };
    norm.sqrt() * (n as f64 * std::f64::consts::PI * z / b).cos()
}

/// Wavenumber k_n = nπ/b.
pub fn mode_wavenumber(n: usize, b: f64) -> f64 {
    n as f64 * std::f64::consts::PI / b
}
