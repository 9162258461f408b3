//! Storage, retrieval, transfer and entanglement runs, scored against the
//! ideal resonant swap sequence.
//!
//! A protocol is a lead-in hold, a sequence of resonance windows and a tail
//! hold. In a window one junction is ramped from its off-resonant bias to s*,
//! held there for Δt = (Ω·Δt)/Ω(0) and ramped back; every other junction
//! stays at its off bias. Windows never overlap.

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composite::{
    resonant_bias, CompositeError, CompositeSystem, CouplingGraph, DirectSpectrum, ProductBasis, SpectrumProvider,
};
use crate::dynamics::{BiasSchedule, DynamicsError, Integrator, IntegratorConfig, Segment, Trajectory, MAX_BIAS};
use crate::junction::JunctionParams;
use crate::resonator::{Gate, ResonatorParams};
use crate::rwa::{pulse_plan, PulseOperation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("protocol spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampKind {
    Trapezoid,
    Gaussian,
    Arctangent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub kind: RampKind,
    /// Crossover time, ns.
    pub crossover: f64,
}

/// Where the qubit state α|0⟩ + β|1⟩ sits at t = 0. Everything else starts
/// in its ground state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prepared {
    /// On the first junction.
    Junction,
    Resonator,
}

/// One resonance window: junction index and pulse area Ω·Δt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub junction: usize,
    pub area: f64,
}

impl Window {
    pub fn new(junction: usize, op: PulseOperation) -> Self {
        Window { junction, area: pulse_plan(op) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub junctions: Vec<JunctionParams>,
    pub resonator: ResonatorParams,
    pub gate: Gate,
    pub alpha: Complex64,
    pub beta: Complex64,
    pub prepared: Prepared,
    /// Off-resonant hold bias per junction.
    pub off_bias: Vec<f64>,
    pub ramp: Ramp,
    /// Hold before the first window, ns.
    pub lead_in: f64,
    /// Hold after the last window, ns.
    pub tail: f64,
    pub windows: Vec<Window>,
    /// Junction levels kept per junction.
    pub levels: usize,
    /// Phonon states kept.
    pub phonons: usize,
}

/// Off-resonant bias for |0⟩/|1⟩ states.
pub const POLE_OFF_BIAS: f64 = 0.40;
/// Off-resonant bias for states on the Bloch-sphere equator.
pub const EQUATOR_OFF_BIAS: f64 = 0.180;
/// Radius that restores g = 0.620 µeV per junction on a split gate.
pub const SPLIT_GATE_RADIUS_UM: f64 = 0.459;

impl ProtocolSpec {
    /// |1⟩ stored from the reference junction into the 15 GHz disk, 1 ns trapezoids.
    pub fn storage_reference() -> Self {
        ProtocolSpec {
            junctions: vec![JunctionParams::reference_device()],
            resonator: ResonatorParams::aln_15ghz(),
            gate: Gate::Full,
            alpha: Complex64::new(0.0, 0.0),
            beta: Complex64::new(1.0, 0.0),
            prepared: Prepared::Junction,
            off_bias: vec![POLE_OFF_BIAS],
            ramp: Ramp { kind: RampKind::Trapezoid, crossover: 1.0 },
            lead_in: 5.0,
            tail: 1.0,
            windows: vec![Window::new(0, PulseOperation::Swap)],
            levels: 4,
            phonons: 4,
        }
    }

    /// A resonator holding |1⟩ read back into the junction with a 3π window.
    pub fn retrieve_reference() -> Self {
        ProtocolSpec {
            prepared: Prepared::Resonator,
            windows: vec![Window::new(0, PulseOperation::RetrieveOrTransferGeneral)],
            ..Self::storage_reference()
        }
    }

    /// |1⟩ moved from junction 1 to junction 2 through a split-gate disk.
    pub fn transfer_reference() -> Self {
        let j = JunctionParams::reference_device();
        ProtocolSpec {
            junctions: vec![j.clone(), j],
            resonator: ResonatorParams::aln_15ghz().with_radius(SPLIT_GATE_RADIUS_UM),
            gate: Gate::Split,
            off_bias: vec![POLE_OFF_BIAS; 2],
            windows: vec![
                Window::new(0, PulseOperation::Swap),
                Window::new(1, PulseOperation::TransferPureExcitation),
            ],
            ..Self::storage_reference()
        }
    }

    /// π/2 on junction 1, then π on junction 2: (|100⟩ − |010⟩)/√2.
    ///
    /// Both junctions idle at the equator bias. The relative phase of the two
    /// Bell components picks up ∫(E₁₀ − ħω₀)dt over the detuned holds, about
    /// 100 rad at 0.40, so the idle bias matters as much as the windows.
    pub fn entangle_reference() -> Self {
        ProtocolSpec {
            off_bias: vec![EQUATOR_OFF_BIAS; 2],
            windows: vec![
                Window::new(0, PulseOperation::EntanglePlus),
                Window::new(1, PulseOperation::Swap),
            ],
            ..Self::transfer_reference()
        }
    }

    pub fn with_state(mut self, alpha: Complex64, beta: Complex64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_ramp(mut self, kind: RampKind) -> Self {
        self.ramp.kind = kind;
        self
    }

    pub fn with_off_bias(mut self, s: f64) -> Self {
        self.off_bias.iter_mut().for_each(|v| *v = s);
        self
    }

    pub fn with_radius(mut self, radius_um: f64) -> Self {
        self.resonator = self.resonator.with_radius(radius_um);
        self
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let nj = self.junctions.len();
        let bad = |m: String| Err(ProtocolError::Spec(m));
        if nj == 0 {
            return bad("no junctions".into());
        }
        if self.off_bias.len() != nj {
            return bad(format!("{} off biases for {nj} junctions", self.off_bias.len()));
        }
        if let Some(s) = self.off_bias.iter().find(|s| !(0.0..=MAX_BIAS).contains(*s)) {
            return bad(format!("off bias {s} outside [0, {MAX_BIAS}]"));
        }
        let norm = self.alpha.norm_sqr() + self.beta.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return bad(format!("|alpha|^2 + |beta|^2 = {norm}, expected 1"));
        }
        for (name, v) in [("lead-in", self.lead_in), ("tail", self.tail)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} duration must be non-negative, got {v}"));
            }
        }
        if !(self.ramp.crossover > 0.0 && self.ramp.crossover.is_finite()) {
            return bad(format!("ramp crossover must be positive, got {}", self.ramp.crossover));
        }
        if self.levels < 2 || self.phonons < 2 {
            return bad("need at least two junction levels and two phonon states".into());
        }
        for w in &self.windows {
            if w.junction >= nj {
                return bad(format!("window on junction {} of {nj}", w.junction + 1));
            }
            if !(w.area >= 0.0 && w.area.is_finite()) {
                return bad(format!("pulse area must be non-negative, got {}", w.area));
            }
        }
        if self.gate == Gate::Full && nj > 1 {
            return bad("several junctions need a split gate".into());
        }
        self.resonator.validate().map_err(|e| ProtocolError::Spec(e.to_string()))
    }

    pub fn system(&self) -> Result<CompositeSystem, ProtocolError> {
        let nj = self.junctions.len();
        let g = self.resonator.coupling_strength(self.gate);
        Ok(CompositeSystem::new(
            self.junctions.clone(),
            vec![self.resonator.dilatational_frequency()],
            CouplingGraph { g: vec![vec![g; nj]] },
            ProductBasis::new(vec![self.levels; nj], vec![self.phonons]),
        )?)
    }
}

/// A window after resolving s*, Ω(0) and timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub junction: usize,
    pub area: f64,
    pub s_star: f64,
    /// Ω(0) = 2g x₀₁ at s*, rad/ns. Carries the sign of x₀₁.
    pub omega: f64,
    /// Time the bias first reaches s* (trapezoid) or the nominal window start.
    pub start: f64,
    /// Δt, ns.
    pub duration: f64,
}

/// Everything needed to integrate a spec.
#[derive(Clone, Debug)]
pub struct Plan {
    pub system: CompositeSystem,
    pub schedule: BiasSchedule,
    pub windows: Vec<WindowPlan>,
    pub initial: Vec<Complex64>,
    /// Ideal resonant-swap result in the interaction representation.
    pub target: Vec<Complex64>,
}

pub fn plan(spec: &ProtocolSpec) -> Result<Plan, ProtocolError> {
    spec.validate()?;
    let system = spec.system()?;
    let nj = spec.junctions.len();
    let omega0 = system.resonator_frequencies[0];

    // s* and Ω(0) once per junction
    let mut resonance = Vec::with_capacity(nj);
    for (j, p) in spec.junctions.iter().enumerate() {
        let provider = DirectSpectrum::new(p.clone(), spec.levels.max(2));
        let s_star = resonant_bias(&provider, p, omega0)?.exact;
        let x01 = provider.levels(s_star)?.dipole[(0, 1)];
        let omega = 2.0 * system.coupling.g[0][j].rad_per_ns() * x01;
        if omega == 0.0 {
            return Err(ProtocolError::Spec(format!("junction {} is uncoupled", j + 1)));
        }
        resonance.push((s_star, omega));
    }

    let mut segs: Vec<Vec<Segment>> = spec.off_bias.iter().map(|&s| vec![Segment::Hold { s, duration: spec.lead_in }]).collect();
    let mut t = spec.lead_in;
    let mut windows = Vec::new();
    let tau = spec.ramp.crossover;
    for w in &spec.windows {
        let (s_star, omega) = resonance[w.junction];
        let dt = w.area / omega.abs();
        if w.area == 0.0 {
            windows.push(WindowPlan { junction: w.junction, area: 0.0, s_star, omega, start: t, duration: 0.0 });
            continue;
        }
        let off = spec.off_bias[w.junction];
        let (ramp_in, total) = match spec.ramp.kind {
            RampKind::Trapezoid => (tau, 2.0 * tau + dt),
            RampKind::Gaussian => (2.0 * tau, 4.0 * tau + dt),
            RampKind::Arctangent => (tau, 2.0 * tau + dt),
        };
        let shaped: Vec<Segment> = match spec.ramp.kind {
            RampKind::Trapezoid => vec![
                Segment::Trapezoid { from: off, to: s_star, duration: tau },
                Segment::Hold { s: s_star, duration: dt },
                Segment::Trapezoid { from: s_star, to: off, duration: tau },
            ],
            RampKind::Gaussian => vec![
                Segment::Gaussian { from: off, to: s_star, crossover: tau },
                Segment::Hold { s: s_star, duration: dt },
                Segment::Gaussian { from: s_star, to: off, crossover: tau },
            ],
            // same centres as the trapezoid edges; the tails fill the window
            RampKind::Arctangent => {
                let half = tau + 0.5 * dt;
                vec![
                    Segment::Arctangent { from: off, to: s_star, duration: half, center: 0.5 * tau, crossover: tau },
                    Segment::Arctangent { from: s_star, to: off, duration: half, center: 0.5 * (dt + tau), crossover: tau },
                ]
            }
        };
        for (j, list) in segs.iter_mut().enumerate() {
            if j == w.junction {
                list.extend(shaped.iter().cloned());
            } else {
                list.push(Segment::Hold { s: spec.off_bias[j], duration: total });
            }
        }
        windows.push(WindowPlan { junction: w.junction, area: w.area, s_star, omega, start: t + ramp_in, duration: dt });
        t += total;
    }
    for (list, &s) in segs.iter_mut().zip(&spec.off_bias) {
        list.push(Segment::Hold { s, duration: spec.tail });
    }
    let schedule = BiasSchedule::new(segs);

    let basis = &system.basis;
    let ground = vec![0; nj];
    let mut initial = vec![Complex64::new(0.0, 0.0); basis.dim()];
    initial[basis.index(&ground, &[0])] = spec.alpha;
    let excited = match spec.prepared {
        Prepared::Junction => basis.index(&unit(nj, 0), &[0]),
        Prepared::Resonator => basis.index(&ground, &[1]),
    };
    initial[excited] += spec.beta;

    let target = ideal_state(spec, &windows, basis);
    Ok(Plan { system, schedule, windows, initial, target })
}

fn unit(n: usize, j: usize) -> Vec<usize> {
    let mut v = vec![0; n];
    v[j] = 1;
    v
}

/// Resonant RWA swaps applied in sequence: within the one-excitation sector a
/// window on junction J rotates (c_J, c_res) by half its pulse area, and the
/// ground amplitude is untouched.
fn ideal_state(spec: &ProtocolSpec, windows: &[WindowPlan], basis: &ProductBasis) -> Vec<Complex64> {
    let nj = spec.junctions.len();
    let mut ej = vec![Complex64::new(0.0, 0.0); nj];
    let mut er = Complex64::new(0.0, 0.0);
    match spec.prepared {
        Prepared::Junction => ej[0] = spec.beta,
        Prepared::Resonator => er = spec.beta,
    }
    for w in windows {
        let (s, c) = (0.5 * w.area).sin_cos();
        let s = s * w.omega.signum();
        let (a, b) = (ej[w.junction], er);
        ej[w.junction] = a * c - b * s;
        er = b * c + a * s;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); basis.dim()];
    out[basis.index(&vec![0; nj], &[0])] = spec.alpha;
    out[basis.index(&vec![0; nj], &[1])] = er;
    for (j, a) in ej.iter().enumerate() {
        out[basis.index(&unit(nj, j), &[0])] = *a;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub protocol: String,
    pub spec: ProtocolSpec,
    pub windows: Vec<WindowPlan>,
    pub labels: Vec<String>,
    pub final_amplitudes: Vec<Complex64>,
    pub target: Vec<Complex64>,
    /// |⟨target|ψ⟩|².
    pub fidelity: f64,
    pub occupations: Vec<f64>,
    /// Final probability outside m ≤ 1, n ≤ 1.
    pub leakage: f64,
    /// Largest probability in any m ≥ 2 or n ≥ 2 state during the run.
    pub max_leakage: f64,
    pub norm_drift: f64,
    pub duration: f64,
    pub dt: f64,
    pub steps: u64,
    pub wall_time_s: f64,
}

impl FidelityReport {
    /// Occupation of a state by label, e.g. "0_1" or "0_1_0".
    pub fn occupation(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|k| self.occupations[k])
    }
}

/// A report with the trajectory it was computed from.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub report: FidelityReport,
    pub trajectory: Trajectory,
}

/// Integrate a spec and score the result against `target`, or against the
/// ideal swap sequence when `target` is `None`.
pub fn run(
    name: &str,
    spec: &ProtocolSpec,
    target: Option<&[Complex64]>,
    cfg: &IntegratorConfig,
) -> Result<ProtocolRun, ProtocolError> {
    let clock = Instant::now();
    let plan = plan(spec)?;
    let target = target.map(<[Complex64]>::to_vec).unwrap_or(plan.target);
    if target.len() != plan.initial.len() {
        return Err(ProtocolError::Spec(format!("target has {} amplitudes, basis has {}", target.len(), plan.initial.len())));
    }
    let integrator = Integrator::new(&plan.system, &plan.schedule)?;
    let tr = integrator.run(&plan.initial, cfg)?;
    let basis = &plan.system.basis;
    let c = tr.final_amplitudes().to_vec();
    let overlap: Complex64 = target.iter().zip(&c).map(|(t, a)| t.conj() * a).sum();
    let occupations: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let leakage = (0..basis.dim())
        .filter(|&k| {
            let (m, n) = basis.quantum_numbers(k);
            m.iter().chain(&n).any(|&q| q >= 2)
        })
        .map(|k| occupations[k])
        .sum();
    let report = FidelityReport {
        protocol: name.to_string(),
        spec: spec.clone(),
        windows: plan.windows,
        labels: tr.labels.clone(),
        final_amplitudes: c,
        target,
        fidelity: overlap.norm_sqr(),
        occupations,
        leakage,
        max_leakage: tr.max_leakage,
        norm_drift: tr.max_norm_drift,
        duration: plan.schedule.total_duration(),
        dt: cfg.dt,
        steps: tr.steps,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok(ProtocolRun { report, trajectory: tr })
}

fn require(cond: bool, msg: &str) -> Result<(), ProtocolError> {
    if cond {
        Ok(())
    } else {
        Err(ProtocolError::Spec(msg.into()))
    }
}

/// Junction state swapped into the resonator; target |0⟩ ⊗ (α|0⟩ + β|1⟩).
pub fn storage(spec: &ProtocolSpec, cfg: &IntegratorConfig) -> Result<ProtocolRun, ProtocolError> {
    require(spec.junctions.len() == 1, "storage needs exactly one junction")?;
    require(spec.prepared == Prepared::Junction, "storage starts from the junction")?;
    run("storage", spec, None, cfg)
}

/// Resonator state swapped back into the junction.
pub fn retrieve(spec: &ProtocolSpec, cfg: &IntegratorConfig) -> Result<ProtocolRun, ProtocolError> {
    require(spec.junctions.len() == 1, "retrieval needs exactly one junction")?;
    require(spec.prepared == Prepared::Resonator, "retrieval starts from the resonator")?;
    run("retrieve", spec, None, cfg)
}

/// Junction 1 to resonator to junction 2.
pub fn transfer(spec: &ProtocolSpec, cfg: &IntegratorConfig) -> Result<ProtocolRun, ProtocolError> {
    require(spec.junctions.len() == 2, "transfer needs two junctions")?;
    require(spec.gate == Gate::Split, "transfer needs a split gate")?;
    require(spec.prepared == Prepared::Junction, "transfer starts from junction 1")?;
    run("transfer", spec, None, cfg)
}

/// Bell state of the two junctions, resonator back in |0⟩.
pub fn entangle(spec: &ProtocolSpec, cfg: &IntegratorConfig) -> Result<ProtocolRun, ProtocolError> {
    require(spec.junctions.len() == 2, "entanglement needs two junctions")?;
    require(spec.gate == Gate::Split, "entanglement needs a split gate")?;
    require(
        spec.prepared == Prepared::Junction && spec.alpha.norm() == 0.0,
        "entanglement starts from |1> on junction 1",
    )?;
    run("entangle", spec, None, cfg)
}

/// (|100⟩ ∓ |010⟩)/√2 on a two-junction basis.
pub fn bell_state(basis: &ProductBasis, minus: bool) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); basis.dim()];
    v[basis.index(&[1, 0], &[0])] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    v[basis.index(&[0, 1], &[0])] = Complex64::new(if minus { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 }, 0.0);
    v
}

/// Largest deviation, inside resonance window `w`, of the two resonant
/// occupations (window junction excited, resonator excited) from the RWA
/// rotation of the amplitudes present when the window opens.
pub fn rwa_envelope_deviation(run: &ProtocolRun, w: usize) -> f64 {
    let tr = &run.trajectory;
    let win = &run.report.windows[w];
    let nj = run.report.spec.junctions.len();
    let basis = ProductBasis::new(vec![run.report.spec.levels; nj], vec![run.report.spec.phonons]);
    let kj = basis.index(&unit(nj, win.junction), &[0]);
    let kr = basis.index(&vec![0; nj], &[1]);
    let (t0, t1) = (win.start, win.start + win.duration);
    let Some(i0) = tr.times.iter().position(|&t| t >= t0) else { return 0.0 };
    let (a, b) = (tr.sample(i0)[kj], tr.sample(i0)[kr]);
    let mut worst: f64 = 0.0;
    for i in i0..tr.len() {
        let t = tr.times[i];
        if t > t1 {
            break;
        }
        let (sn, cs) = (0.5 * win.omega * (t - tr.times[i0])).sin_cos();
        let pj = (a * cs - b * sn).norm_sqr();
        let pr = (b * cs + a * sn).norm_sqr();
        worst = worst.max((tr.occupation(i, kj) - pj).abs());
        worst = worst.max((tr.occupation(i, kr) - pr).abs());
    }
    worst
}

/// Which protocol function a batch job calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Storage,
    Retrieve,
    Transfer,
    Entangle,
}

impl ProtocolKind {
    pub fn run(self, spec: &ProtocolSpec, cfg: &IntegratorConfig) -> Result<ProtocolRun, ProtocolError> {
        match self {
            ProtocolKind::Storage => storage(spec, cfg),
            ProtocolKind::Retrieve => retrieve(spec, cfg),
            ProtocolKind::Transfer => transfer(spec, cfg),
            ProtocolKind::Entangle => entangle(spec, cfg),
        }
    }
}

/// Run independent specs, in parallel unless sequential mode is selected.
/// Each run is itself sequential; results keep input order.
pub fn run_batch(
    kind: ProtocolKind,
    specs: &[ProtocolSpec],
    cfg: &IntegratorConfig,
) -> Vec<Result<ProtocolRun, ProtocolError>> {
    crate::par::map(specs, |spec| kind.run(spec, cfg))
}
