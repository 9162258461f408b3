//! Scenario files: TOML with unit strings on every physical quantity.
//! Unknown keys are rejected.

use std::path::Path;

use nemqubit::composite::{CompositeSystem, CouplingGraph, ProductBasis};
use nemqubit::dynamics::{BiasSchedule, IntegratorConfig, Segment};
use nemqubit::junction::JunctionParams;
use nemqubit::protocols::{Prepared, ProtocolKind, ProtocolSpec, Ramp, RampKind, Window};
use nemqubit::resonator::{Gate, ResonatorParams};
use nemqubit::rwa::{pulse_plan, PulseOperation};
use nemqubit::units::Energy;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantity::{Dimension, Quantity, QuantityError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {source}")]
    Quantity { field: String, source: QuantityError },
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

fn q(field: &str, v: &Quantity, dim: Dimension) -> Result<f64> {
    v.to(dim).map_err(|source| ConfigError::Quantity { field: field.into(), source })
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, rename = "junction", skip_serializing_if = "Vec::is_empty")]
    pub junctions: Vec<JunctionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator: Option<ResonatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionConfig {
    pub critical_current: Quantity,
    pub capacitance: Quantity,
    /// Tabulated energies; derived from I₀ and C when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub josephson_energy: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charging_energy: Option<Quantity>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Aln,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    pub material: Material,
    pub radius: Quantity,
    /// Give one of thickness and frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<Quantity>,
    pub gate: Gate,
    /// Overrides the coupling strength computed from the geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub piezo_modulus: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_permittivity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonadiabatic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Explicit bias values; or use `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    /// Basis label such as "1_0" (junction levels, then phonons).
    pub state: String,
    /// [re, im]
    pub amplitude: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentConfig {
    Hold { s: f64, duration: Quantity },
    Trapezoid { from: f64, to: f64, duration: Quantity },
    Gaussian { from: f64, to: f64, crossover: Quantity },
    Arctangent { from: f64, to: f64, duration: Quantity, center: Quantity, crossover: Quantity },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSchedule {
    pub segments: Vec<SegmentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub levels: usize,
    pub phonons: usize,
    pub initial: Vec<Amplitude>,
    #[serde(rename = "junction")]
    pub junctions: Vec<JunctionSchedule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// 1-based junction number.
    pub junction: usize,
    /// A named operation, or an explicit `area`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<Quantity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    /// [re, im] of the |0⟩ and |1⟩ amplitudes.
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub off_bias: Vec<f64>,
    pub ramp: RampKind,
    pub crossover: Quantity,
    pub lead_in: Quantity,
    pub tail: Quantity,
    pub windows: Vec<WindowConfig>,
    pub levels: usize,
    pub phonons: usize,
    /// Fidelity below this is flagged as a failed run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_fidelity: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    OffBias,
    Radius,
    Crossover,
    Dt,
}

impl SweepParameter {
    fn dimension(self) -> Dimension {
        match self {
            SweepParameter::OffBias => Dimension::Dimensionless,
            SweepParameter::Radius => Dimension::Length,
            SweepParameter::Crossover | SweepParameter::Dt => Dimension::Time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<Quantity>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// File names inside the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn junction_params(&self) -> Result<Vec<JunctionParams>> {
        if self.junctions.is_empty() {
            return invalid("at least one [[junction]] is required");
        }
        self.junctions
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let f = |name: &str| format!("junction {} {name}", i + 1);
                let i0 = q(&f("critical_current"), &j.critical_current, Dimension::Current)?;
                let c = q(&f("capacitance"), &j.capacitance, Dimension::Capacitance)?;
                if !(i0 > 0.0 && c > 0.0) {
                    return invalid(format!("junction {}: critical current and capacitance must be positive", i + 1));
                }
                match (&j.josephson_energy, &j.charging_energy) {
                    (Some(ej), Some(ec)) => Ok(JunctionParams::with_energies(
                        i0,
                        c,
                        Energy::from_micro_ev(q(&f("josephson_energy"), ej, Dimension::Energy)?),
                        Energy::from_micro_ev(q(&f("charging_energy"), ec, Dimension::Energy)?),
                    )),
                    (None, None) => Ok(JunctionParams::from_device(i0, c)),
                    _ => invalid(format!("junction {}: give both tabulated energies or neither", i + 1)),
                }
            })
            .collect()
    }

    fn resonator_section(&self) -> Result<&ResonatorConfig> {
        self.resonator.as_ref().ok_or_else(|| ConfigError::Invalid("a [resonator] section is required".into()))
    }

    pub fn resonator_params(&self) -> Result<ResonatorParams> {
        let r = self.resonator_section()?;
        let Material::Aln = r.material;
        let mut p = ResonatorParams::aln_15ghz();
        if let Some(v) = &r.piezo_modulus {
            p.piezo_modulus = q("resonator piezo_modulus", v, Dimension::SurfaceCharge)?;
        }
        if let Some(v) = &r.stiffness {
            p.stiffness_gpa = q("resonator stiffness", v, Dimension::Stiffness)?;
        }
        if let Some(v) = &r.density {
            p.density_g_cm3 = q("resonator density", v, Dimension::Density)?;
        }
        if let Some(v) = r.relative_permittivity {
            p.relative_permittivity = v;
        }
        p.radius_um = q("resonator radius", &r.radius, Dimension::Length)?;
        p = match (&r.thickness, &r.frequency) {
            (Some(b), None) => {
                p.thickness_nm = q("resonator thickness", b, Dimension::Length)? * 1e3;
                p
            }
            (None, Some(f)) => p.with_frequency_ghz(q("resonator frequency", f, Dimension::Frequency)?),
            _ => return invalid("resonator: give exactly one of thickness and frequency"),
        };
        p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(p)
    }

    pub fn gate(&self) -> Result<Gate> {
        Ok(self.resonator_section()?.gate)
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        let mut cfg = IntegratorConfig::default();
        if let Some(s) = &self.integrator {
            if let Some(dt) = &s.dt {
                cfg.dt = q("integrator dt", dt, Dimension::Time)?;
            }
            if let Some(n) = s.max_samples {
                cfg.max_samples = n;
            }
            if let Some(b) = s.nonadiabatic {
                cfg.nonadiabatic = b;
            }
            if let Some(t) = s.norm_tolerance {
                cfg.norm_tolerance = t;
            }
        }
        Ok(cfg)
    }

    pub fn bias_grid(&self) -> Result<(Vec<f64>, usize)> {
        let Some(s) = &self.spectrum else { return invalid("a [spectrum] section is required") };
        let grid = match (&s.bias, &s.grid) {
            (Some(b), None) => b.clone(),
            (None, Some(g)) if g.points >= 2 => {
                (0..g.points).map(|i| g.from + (g.to - g.from) * i as f64 / (g.points - 1) as f64).collect()
            }
            (None, Some(g)) => return invalid(format!("spectrum grid needs at least 2 points, got {}", g.points)),
            _ => return invalid("spectrum: give exactly one of bias and grid"),
        };
        if grid.is_empty() {
            return invalid("spectrum: the bias grid is empty");
        }
        if let Some(s) = grid.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return invalid(format!("spectrum: bias s = {s} is outside [0, 1)"));
        }
        if s.levels < 1 {
            return invalid("spectrum: levels must be at least 1");
        }
        Ok((grid, s.levels))
    }

    /// System, schedule and initial state of a raw `[schedule]` run.
    pub fn schedule_run(&self) -> Result<(CompositeSystem, BiasSchedule, Vec<Complex64>)> {
        let Some(s) = &self.schedule else { return invalid("a [schedule] section is required") };
        let junctions = self.junction_params()?;
        let nj = junctions.len();
        if s.junctions.len() != nj {
            return invalid(format!("schedule has {} junction profiles for {nj} junctions", s.junctions.len()));
        }
        if s.levels < 2 || s.phonons < 2 {
            return invalid("schedule: need at least two levels and two phonon states");
        }
        let res = self.resonator_params()?;
        let r = self.resonator_section()?;
        let g = match &r.coupling {
            Some(v) => Energy::from_micro_ev(q("resonator coupling", v, Dimension::Energy)?),
            None => res.coupling_strength(r.gate),
        };
        let basis = ProductBasis::new(vec![s.levels; nj], vec![s.phonons]);
        let system = CompositeSystem::new(
            junctions,
            vec![res.dilatational_frequency()],
            CouplingGraph { g: vec![vec![g; nj]] },
            basis.clone(),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut profiles = Vec::with_capacity(nj);
        for (j, js) in s.junctions.iter().enumerate() {
            let f = |name: &str| format!("junction {} segment {name}", j + 1);
            let segs = js
                .segments
                .iter()
                .map(|seg| {
                    Ok(match seg {
                        SegmentConfig::Hold { s, duration } => {
                            Segment::Hold { s: *s, duration: q(&f("duration"), duration, Dimension::Time)? }
                        }
                        SegmentConfig::Trapezoid { from, to, duration } => Segment::Trapezoid {
                            from: *from,
                            to: *to,
                            duration: q(&f("duration"), duration, Dimension::Time)?,
                        },
                        SegmentConfig::Gaussian { from, to, crossover } => Segment::Gaussian {
                            from: *from,
                            to: *to,
                            crossover: q(&f("crossover"), crossover, Dimension::Time)?,
                        },
                        SegmentConfig::Arctangent { from, to, duration, center, crossover } => Segment::Arctangent {
                            from: *from,
                            to: *to,
                            duration: q(&f("duration"), duration, Dimension::Time)?,
                            center: q(&f("center"), center, Dimension::Time)?,
                            crossover: q(&f("crossover"), crossover, Dimension::Time)?,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            profiles.push(segs);
        }

        let mut c0 = vec![Complex64::new(0.0, 0.0); basis.dim()];
        for a in &s.initial {
            let k = (0..basis.dim())
                .find(|&k| basis.label(k) == a.state)
                .ok_or_else(|| ConfigError::Invalid(format!("schedule: no basis state labelled {:?}", a.state)))?;
            c0[k] += Complex64::new(a.amplitude[0], a.amplitude[1]);
        }
        Ok((system, BiasSchedule::new(profiles), c0))
    }

    pub fn protocol_section(&self) -> Result<&ProtocolSection> {
        self.protocol.as_ref().ok_or_else(|| ConfigError::Invalid("a [protocol] section is required".into()))
    }

    pub fn protocol_spec(&self) -> Result<(ProtocolKind, ProtocolSpec)> {
        let p = self.protocol_section()?;
        let junctions = self.junction_params()?;
        let nj = junctions.len();
        let windows = p
            .windows
            .iter()
            .map(|w| {
                if w.junction == 0 || w.junction > nj {
                    return invalid(format!("window on junction {} of {nj} (junctions count from 1)", w.junction));
                }
                let area = match (&w.operation, &w.area) {
                    (Some(op), None) => pulse_plan(
                        op.parse::<PulseOperation>().map_err(|e| ConfigError::Invalid(format!("window: {e}")))?,
                    ),
                    (None, Some(a)) => q("window area", a, Dimension::Angle)?,
                    _ => return invalid("window: give exactly one of operation and area"),
                };
                Ok(Window { junction: w.junction - 1, area })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ProtocolSpec {
            junctions,
            resonator: self.resonator_params()?,
            gate: self.gate()?,
            alpha: Complex64::new(p.alpha[0], p.alpha[1]),
            beta: Complex64::new(p.beta[0], p.beta[1]),
            prepared: if p.kind == ProtocolKind::Retrieve { Prepared::Resonator } else { Prepared::Junction },
            off_bias: p.off_bias.clone(),
            ramp: Ramp { kind: p.ramp, crossover: q("protocol crossover", &p.crossover, Dimension::Time)? },
            lead_in: q("protocol lead_in", &p.lead_in, Dimension::Time)?,
            tail: q("protocol tail", &p.tail, Dimension::Time)?,
            windows,
            levels: p.levels,
            phonons: p.phonons,
        };
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((p.kind, spec))
    }

    /// One (spec, integrator) pair per sweep value.
    pub fn sweep_points(&self, base: &IntegratorConfig) -> Result<(ProtocolKind, Vec<(f64, ProtocolSpec, IntegratorConfig)>)> {
        let Some(sw) = &self.sweep else { return invalid("a [sweep] section is required") };
        if sw.values.is_empty() {
            return invalid("sweep: no values");
        }
        let (kind, spec) = self.protocol_spec()?;
        let mut out = Vec::with_capacity(sw.values.len());
        for v in &sw.values {
            let x = q("sweep value", v, sw.parameter.dimension())?;
            let mut s = spec.clone();
            let mut cfg = base.clone();
            match sw.parameter {
                SweepParameter::OffBias => s = s.with_off_bias(x),
                SweepParameter::Radius => s = s.with_radius(x),
                SweepParameter::Crossover => s.ramp.crossover = x,
                SweepParameter::Dt => cfg.dt = x,
            }
            s.validate().map_err(|e| ConfigError::Invalid(format!("sweep value {v}: {e}")))?;
            out.push((x, s, cfg));
        }
        Ok((kind, out))
    }
}
