//! Time integration of the interaction-representation amplitudes c_k(t)
//! under a bias schedule.
//!
//! With b_k the amplitudes on the instantaneous product basis and
//! θ_k(t) = ∫E_k dt', c_k = e^{iθ_k} b_k obeys
//!
//! ```text
//! ċ = e^{iθ} K(s) e^{−iθ} c,   K = −Σ g_IJ X_J ⊗ (a_I − a_I†) − Σ ṡ_J ∂_J
//! ```
//!
//! K is real, so the right-hand side costs one real structured operator
//! application sandwiched between two phase multiplications. Time stepping is
//! classical RK4 with the phases integrated by Simpson's rule on the same grid.

mod schedule;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use schedule::{BiasSchedule, CompiledSchedule, CompiledSegment, Segment, MAX_BIAS};

use crate::composite::{
    assemble, CompositeError, CompositeSystem, DirectSpectrum, Levels, SpectrumProvider, SpectrumTable,
    DYNAMICS_BASIS,
};

/// Default RK4 step, ns.
pub const DEFAULT_DT: f64 = 1e-6;

/// Default tolerance on |‖c‖² − 1|.
pub const NORM_TOLERANCE: f64 = 7e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error("initial state: {0}")]
    InitialState(String),
    #[error(
        "norm drift {drift:.3e} exceeds tolerance {tolerance:.1e} at t = {time:.4} ns with dt = {dt:.3e} ns; \
         try dt <= {suggested_dt:.3e} ns"
    )]
    NormDrift { drift: f64, tolerance: f64, time: f64, dt: f64, suggested_dt: f64 },
    #[error("invalid integrator setting: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Nominal step in ns; each interval between schedule breakpoints is split
    /// into equal steps no longer than about this.
    pub dt: f64,
    pub norm_tolerance: f64,
    /// Upper bound on stored samples, including both endpoints.
    pub max_samples: usize,
    /// Constant added to every E_k (rad/ns). Physically irrelevant.
    pub energy_offset: f64,
    /// Include the ṡ ⟨∂/∂s⟩ terms.
    pub nonadiabatic: bool,
    /// Advance constant-bias intervals by powers of the one-step RK4 map
    /// instead of step by step. Same discrete solution up to rounding;
    /// norm and occupations are then checked every 256 steps.
    pub hold_step_map: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: DEFAULT_DT,
            norm_tolerance: NORM_TOLERANCE,
            max_samples: 100_000,
            energy_offset: 0.0,
            nonadiabatic: true,
            hold_step_map: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_samples < 2 {
            return Err(DynamicsError::Config("max_samples must be at least 2".into()));
        }
        if !(self.norm_tolerance > 0.0) {
            return Err(DynamicsError::Config("norm tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Sampled solution of one integration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// Per sample, one bias per junction.
    pub bias: Vec<Vec<f64>>,
    /// ‖c‖ per sample.
    pub norms: Vec<f64>,
    /// Sample-major amplitudes, `dim` per sample.
    pub amplitudes: Vec<Complex64>,
    /// ∫E_k dt over the whole run, per basis state.
    pub phase_integrals: Vec<f64>,
    /// Largest |c_k|² seen at any step.
    pub max_occupation: Vec<f64>,
    /// Largest total occupation of states with any m ≥ 2 or n ≥ 2, at any step.
    pub max_leakage: f64,
    /// Largest |‖c‖² − 1| at any step.
    pub max_norm_drift: f64,
    pub steps: u64,
    pub dt: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[Complex64] {
        let d = self.dim();
        &self.amplitudes[i * d..(i + 1) * d]
    }

    pub fn final_amplitudes(&self) -> &[Complex64] {
        self.sample(self.len() - 1)
    }

    pub fn occupation(&self, i: usize, k: usize) -> f64 {
        self.sample(i)[k].norm_sqr()
    }

    pub fn final_occupations(&self) -> Vec<f64> {
        self.final_amplitudes().iter().map(|c| c.norm_sqr()).collect()
    }

    /// Write the sampled trajectory as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let nj = self.bias.first().map_or(0, Vec::len);
        let mut header = vec!["t_ns".to_string()];
        header.extend((1..=nj).map(|j| format!("s_J{j}")));
        header.push("norm".into());
        for l in &self.labels {
            header.push(format!("re_c_{l}"));
            header.push(format!("im_c_{l}"));
            header.push(format!("p_{l}"));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            push_num(&mut line, self.times[i]);
            for s in &self.bias[i] {
                line.push(',');
                push_num(&mut line, *s);
            }
            line.push(',');
            push_num(&mut line, self.norms[i]);
            for c in self.sample(i) {
                for v in [c.re, c.im, c.norm_sqr()] {
                    line.push(',');
                    push_num(&mut line, v);
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn push_num(s: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(s, "{v:.12e}");
}

/// A system and schedule with tabulated spectra, ready to integrate any
/// number of initial states or step sizes.
#[derive(Clone, Debug)]
pub struct Integrator {
    system: CompositeSystem,
    schedule: CompiledSchedule,
    tables: Vec<SpectrumTable>,
}

impl Integrator {
    pub fn new(system: &CompositeSystem, schedule: &BiasSchedule) -> Result<Self, DynamicsError> {
        system.validate()?;
        let compiled = schedule.compile()?;
        check_junction_count(system, &compiled)?;
        let mut tables = Vec::new();
        for (j, params) in system.junctions.iter().enumerate() {
            let (lo, hi) = compiled.bias_range(j);
            tables.push(SpectrumTable::build(params, DYNAMICS_BASIS, system.basis.junction_levels[j], lo, hi)?);
        }
        Ok(Integrator { system: system.clone(), schedule: compiled, tables })
    }

    /// Reuse spectra tabulated elsewhere. Each table must cover its junction's
    /// bias range and carry exactly the basis level count.
    pub fn with_tables(
        system: &CompositeSystem,
        schedule: &BiasSchedule,
        tables: Vec<SpectrumTable>,
    ) -> Result<Self, DynamicsError> {
        system.validate()?;
        let compiled = schedule.compile()?;
        check_junction_count(system, &compiled)?;
        if tables.len() != system.junctions.len() {
            return Err(DynamicsError::Schedule(format!(
                "{} spectrum tables for {} junctions",
                tables.len(),
                system.junctions.len()
            )));
        }
        for (j, t) in tables.iter().enumerate() {
            let (lo, hi) = compiled.bias_range(j);
            let (tlo, thi) = t.range();
            if lo < tlo || hi > thi {
                return Err(CompositeError::OutsideTable { s: if lo < tlo { lo } else { hi }, lo: tlo, hi: thi }.into());
            }
            if t.level_count() != system.basis.junction_levels[j] {
                return Err(DynamicsError::Schedule(format!(
                    "junction {} table has {} levels, basis needs {}",
                    j + 1,
                    t.level_count(),
                    system.basis.junction_levels[j]
                )));
            }
        }
        Ok(Integrator { system: system.clone(), schedule: compiled, tables })
    }

    pub fn system(&self) -> &CompositeSystem {
        &self.system
    }

    pub fn schedule(&self) -> &CompiledSchedule {
        &self.schedule
    }

    pub fn tables(&self) -> &[SpectrumTable] {
        &self.tables
    }

    pub fn run(&self, c0: &[Complex64], cfg: &IntegratorConfig) -> Result<Trajectory, DynamicsError> {
        cfg.validate()?;
        let dim = self.system.basis.dim();
        if c0.len() != dim {
            return Err(DynamicsError::InitialState(format!("{} amplitudes for dimension {dim}", c0.len())));
        }
        let n2: f64 = c0.iter().map(|c| c.norm_sqr()).sum();
        if !((n2 - 1.0).abs() < 1e-10) {
            return Err(DynamicsError::InitialState(format!("norm² = {n2}, expected 1")));
        }
        Stepper::new(self, cfg).run(c0)
    }
}

fn check_junction_count(system: &CompositeSystem, s: &CompiledSchedule) -> Result<(), DynamicsError> {
    if s.junctions.len() != system.junctions.len() {
        return Err(DynamicsError::Schedule(format!(
            "schedule covers {} junctions, system has {}",
            s.junctions.len(),
            system.junctions.len()
        )));
    }
    Ok(())
}

/// Tabulate spectra and integrate once.
pub fn integrate(
    system: &CompositeSystem,
    schedule: &BiasSchedule,
    c0: &[Complex64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    Integrator::new(system, schedule)?.run(c0, cfg)
}

/// Basis vector |k⟩.
pub fn basis_state(dim: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    v[k] = Complex64::new(1.0, 0.0);
    v
}

/// Junction and stage data at one instant.
#[derive(Clone)]
struct Stage {
    s: Vec<f64>,
    sdot: Vec<f64>,
    /// Packed table rows: energies, dipole, dds.
    rows: Vec<Vec<f64>>,
    /// Interleaved (re, im) phase factors e^{iθ_k}.
    phase: Vec<f64>,
}

struct PhaseScratch {
    powers: Vec<Vec<Complex64>>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

struct Stepper<'a> {
    it: &'a Integrator,
    cfg: &'a IntegratorConfig,
    dim: usize,
    levels: Vec<usize>,
    phonons: Vec<usize>,
    /// f64 strides (2× the complex strides).
    jstride: Vec<usize>,
    rstride: Vec<usize>,
    omegas: Vec<f64>,
    /// (resonator, junction, −g) for nonzero couplings.
    couplings: Vec<(usize, usize, f64)>,
    sqrt_n: Vec<f64>,
    leak_mask: Vec<bool>,
    quanta: Vec<(Vec<usize>, Vec<usize>)>,
}

impl<'a> Stepper<'a> {
    fn new(it: &'a Integrator, cfg: &'a IntegratorConfig) -> Self {
        let sys = &it.system;
        let b = &sys.basis;
        let nj = b.junction_levels.len();
        let nr = b.phonon_cutoffs.len();
        let mut couplings = Vec::new();
        for (r, row) in sys.coupling.g.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                if g.rad_per_ns() != 0.0 {
                    couplings.push((r, j, -g.rad_per_ns()));
                }
            }
        }
        let nmax = b.phonon_cutoffs.iter().copied().max().unwrap_or(1);
        let leak_mask = (0..b.dim())
            .map(|k| {
                let (m, n) = b.quantum_numbers(k);
                m.iter().chain(&n).any(|&q| q >= 2)
            })
            .collect();
        Stepper {
            it,
            cfg,
            dim: b.dim(),
            levels: b.junction_levels.clone(),
            phonons: b.phonon_cutoffs.clone(),
            jstride: (0..nj).map(|j| 2 * b.junction_stride(j)).collect(),
            rstride: (0..nr).map(|r| 2 * b.resonator_stride(r)).collect(),
            omegas: sys.resonator_frequencies.clone(),
            couplings,
            sqrt_n: (0..=nmax).map(|n| (n as f64).sqrt()).collect(),
            leak_mask,
            quanta: (0..b.dim()).map(|k| b.quantum_numbers(k)).collect(),
        }
    }

    fn new_stage(&self) -> Stage {
        Stage {
            s: vec![f64::NAN; self.levels.len()],
            sdot: vec![0.0; self.levels.len()],
            rows: self.it.tables.iter().map(|t| vec![0.0; t.row_len()]).collect(),
            phase: vec![0.0; 2 * self.dim],
        }
    }

    /// Fill bias, rate and spectra at `t` using segment `segs[j]` for each junction.
    fn eval_stage(&self, t: f64, segs: &[usize], st: &mut Stage) -> Result<(), DynamicsError> {
        for (j, &si) in segs.iter().enumerate() {
            let seg = &self.it.schedule.junctions[j][si];
            let (s, sd) = seg.eval((t - seg.start).clamp(0.0, seg.duration));
            if s.to_bits() != st.s[j].to_bits() {
                self.it.tables[j].interpolate_into(s, &mut st.rows[j])?;
                st.s[j] = s;
            }
            st.sdot[j] = sd;
        }
        Ok(())
    }

    /// e^{iθ_k} from per-junction level phasors and resonator phases ω_I t.
    fn build_phase(&self, z: &[Vec<Complex64>], t: f64, out: &mut [f64], ps: &mut PhaseScratch) {
        for (r, &w) in self.omegas.iter().enumerate() {
            let (sn, cs) = (w * t).sin_cos();
            let e = Complex64::new(cs, sn);
            let f = &mut ps.powers[r];
            let mut acc = Complex64::new(1.0, 0.0);
            for v in f.iter_mut() {
                *v = acc;
                acc *= e;
            }
        }
        ps.a.clear();
        ps.a.push(Complex64::new(1.0, 0.0));
        for factor in z.iter().chain(ps.powers.iter()) {
            ps.b.clear();
            for x in &ps.a {
                for f in factor {
                    ps.b.push(x * f);
                }
            }
            std::mem::swap(&mut ps.a, &mut ps.b);
        }
        for (o, p) in out.chunks_exact_mut(2).zip(&ps.a) {
            o[0] = p.re;
            o[1] = p.im;
        }
    }

    /// out = e^{iθ} K e^{−iθ} c.
    fn rhs(&self, c: &[f64], st: &Stage, u: &mut [f64], au: &mut [Vec<f64>], out: &mut [f64]) {
        let p = &st.phase;
        for ((uk, ck), pk) in u.chunks_exact_mut(2).zip(c.chunks_exact(2)).zip(p.chunks_exact(2)) {
            uk[0] = pk[0] * ck[0] + pk[1] * ck[1];
            uk[1] = pk[0] * ck[1] - pk[1] * ck[0];
        }
        for (r, a) in au.iter_mut().enumerate() {
            apply_ladder(u, a, self.phonons[r], self.rstride[r], &self.sqrt_n);
        }
        out.fill(0.0);
        for &(r, j, neg_g) in &self.couplings {
            let m = self.levels[j];
            let x = &st.rows[j][m..m + m * m];
            apply_factor(x, m, self.jstride[j], neg_g, &au[r], out);
        }
        if self.cfg.nonadiabatic {
            for j in 0..self.levels.len() {
                let sd = st.sdot[j];
                if sd != 0.0 {
                    let m = self.levels[j];
                    let d = &st.rows[j][m + m * m..];
                    apply_factor(d, m, self.jstride[j], -sd, u, out);
                }
            }
        }
        for (ok, pk) in out.chunks_exact_mut(2).zip(p.chunks_exact(2)) {
            let (wr, wi) = (ok[0], ok[1]);
            ok[0] = pk[0] * wr - pk[1] * wi;
            ok[1] = pk[0] * wi + pk[1] * wr;
        }
    }

    fn run(&self, c0: &[Complex64]) -> Result<Trajectory, DynamicsError> {
        let sched = &self.it.schedule;
        let nj = self.levels.len();
        let dim = self.dim;
        let cfg = self.cfg;
        let bps = sched.breakpoints();
        let intervals: Vec<(f64, f64, u64)> = bps
            .windows(2)
            .map(|w| (w[0], w[1], (((w[1] - w[0]) / cfg.dt).round() as u64).max(1)))
            .collect();
        let total_steps: u64 = intervals.iter().map(|i| i.2).sum();
        let every = total_steps.div_ceil(cfg.max_samples as u64 - 1).max(1);

        let mut run = RunState {
            c: c0.iter().flat_map(|z| [z.re, z.im]).collect(),
            comp: vec![0.0; 2 * dim],
            z: self.levels.iter().map(|&m| vec![Complex64::new(1.0, 0.0); m]).collect(),
            theta: self.levels.iter().map(|&m| vec![Neumaier::default(); m]).collect(),
            traj: Trajectory {
                labels: (0..dim).map(|k| self.it.system.basis.label(k)).collect(),
                times: Vec::new(),
                bias: Vec::new(),
                norms: Vec::new(),
                amplitudes: Vec::new(),
                phase_integrals: vec![0.0; dim],
                max_occupation: c0.iter().map(|z| z.norm_sqr()).collect(),
                max_leakage: 0.0,
                max_norm_drift: 0.0,
                steps: total_steps,
                dt: cfg.dt,
            },
            step_no: 0,
            total_steps,
            every,
            scratch: PhaseScratch {
                powers: self.phonons.iter().map(|&n| vec![Complex64::new(0.0, 0.0); n]).collect(),
                a: Vec::with_capacity(dim),
                b: Vec::with_capacity(dim),
            },
        };

        let mut st0 = self.new_stage();
        let first: Vec<usize> = (0..nj).map(|j| sched.segment_at(j, 0.5 * (intervals[0].0 + intervals[0].1))).collect();
        self.eval_stage(0.0, &first, &mut st0)?;
        run.record(0.0, &st0.s);

        for &(a, b, n) in &intervals {
            let segs: Vec<usize> = (0..nj).map(|j| sched.segment_at(j, 0.5 * (a + b))).collect();
            // re-evaluate at the breakpoint so ṡ is the one-sided value of the new segment
            self.eval_stage(a, &segs, &mut st0)?;
            let constant: Vec<bool> = segs.iter().enumerate().map(|(j, &s)| sched.junctions[j][s].is_constant()).collect();
            if cfg.hold_step_map && constant.iter().all(|&c| c) {
                self.hold_interval(&mut run, &st0, a, b, n)?;
            } else {
                self.stepped_interval(&mut run, &mut st0, &segs, &constant, a, b, n)?;
            }
        }

        let total = sched.total;
        let mut traj = run.traj;
        for k in 0..dim {
            let (m, n) = &self.quanta[k];
            let ej: f64 = m.iter().enumerate().map(|(j, &mj)| run.theta[j][mj].value()).sum();
            let er: f64 = n.iter().zip(&self.omegas).map(|(&ni, w)| ni as f64 * w * total).sum();
            traj.phase_integrals[k] = ej + er + cfg.energy_offset * total;
        }
        Ok(traj)
    }

    /// Phase energy of level `l` of junction `j` relative to its ground level.
    fn relative_energy(&self, row: &[f64], j: usize, l: usize) -> f64 {
        let off = if j == 0 { self.cfg.energy_offset } else { 0.0 };
        row[l] - row[0] + off
    }

    #[allow(clippy::too_many_arguments)]
    fn stepped_interval(
        &self,
        run: &mut RunState,
        st0: &mut Stage,
        segs: &[usize],
        constant: &[bool],
        a: f64,
        b: f64,
        n: u64,
    ) -> Result<(), DynamicsError> {
        let nj = self.levels.len();
        let len = 2 * self.dim;
        let (mut tmp, mut acc, mut k, mut u) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let mut au: Vec<Vec<f64>> = self.phonons.iter().map(|_| vec![0.0; len]).collect();
        let mut stm = st0.clone();
        let mut st1 = st0.clone();
        let mut zm = run.z.clone();
        let mut z1 = run.z.clone();
        let mut dmid = run.z.clone();
        let mut dend = run.z.clone();
        let h = (b - a) / n as f64;
        self.build_phase(&run.z, a, &mut st0.phase, &mut run.scratch);
        for i in 0..n {
            let t0 = a + i as f64 * h;
            let t1 = if i + 1 == n { b } else { a + (i + 1) as f64 * h };
            let tm = 0.5 * (t0 + t1);
            let hs = t1 - t0;
            self.eval_stage(tm, segs, &mut stm)?;
            self.eval_stage(t1, segs, &mut st1)?;

            for j in 0..nj {
                let m = self.levels[j];
                let (e0, em, e1) = (&st0.rows[j], &stm.rows[j], &st1.rows[j]);
                for l in 0..m {
                    run.theta[j][l].add(hs / 6.0 * (e0[l] + 4.0 * em[l] + e1[l]));
                }
                // Simpson on [t0, t1] and on [t0, tm] through the same three nodes
                if !(constant[j] && i > 0) {
                    for l in 0..m {
                        let r0 = self.relative_energy(e0, j, l);
                        let rm = self.relative_energy(em, j, l);
                        let r1 = self.relative_energy(e1, j, l);
                        dmid[j][l] = cis(hs / 24.0 * (5.0 * r0 + 8.0 * rm - r1));
                        dend[j][l] = cis(hs / 6.0 * (r0 + 4.0 * rm + r1));
                    }
                }
                for l in 0..m {
                    zm[j][l] = run.z[j][l] * dmid[j][l];
                    z1[j][l] = run.z[j][l] * dend[j][l];
                }
            }
            self.build_phase(&zm, tm, &mut stm.phase, &mut run.scratch);
            self.build_phase(&z1, t1, &mut st1.phase, &mut run.scratch);

            let c = &mut run.c;
            self.rhs(c, st0, &mut u, &mut au, &mut k);
            acc.copy_from_slice(&k);
            axpy_into(c, 0.5 * hs, &k, &mut tmp);
            self.rhs(&tmp, &stm, &mut u, &mut au, &mut k);
            axpy(2.0, &k, &mut acc);
            axpy_into(c, 0.5 * hs, &k, &mut tmp);
            self.rhs(&tmp, &stm, &mut u, &mut au, &mut k);
            axpy(2.0, &k, &mut acc);
            axpy_into(c, hs, &k, &mut tmp);
            self.rhs(&tmp, &st1, &mut u, &mut au, &mut k);
            axpy(1.0, &k, &mut acc);
            // compensated c += h/6·acc
            let f = hs / 6.0;
            for ((ci, ei), ai) in c.iter_mut().zip(run.comp.iter_mut()).zip(&acc) {
                let y = f * ai - *ei;
                let t = *ci + y;
                *ei = (t - *ci) - y;
                *ci = t;
            }

            for j in 0..nj {
                for l in 0..self.levels[j] {
                    let v = z1[j][l];
                    // one Newton step back onto the unit circle
                    run.z[j][l] = v * (1.5 - 0.5 * v.norm_sqr());
                }
            }
            std::mem::swap(st0, &mut st1);
            run.step_no += 1;
            self.monitor(run, t1, &st0.s, hs)?;
        }
        Ok(())
    }

    /// Constant bias on [a, b]: the RK4 step map is the same matrix up to a
    /// diagonal phase conjugation at every step, so n steps reduce to powers
    /// of one matrix G acting on d = e^{−iθ} c.
    fn hold_interval(&self, run: &mut RunState, st0: &Stage, a: f64, b: f64, n: u64) -> Result<(), DynamicsError> {
        let dim = self.dim;
        let h = (b - a) / n as f64;
        let erel: Vec<Vec<f64>> = (0..self.levels.len())
            .map(|j| (0..self.levels[j]).map(|l| self.relative_energy(&st0.rows[j], j, l)).collect())
            .collect();
        let energy: Vec<f64> = self
            .quanta
            .iter()
            .map(|(m, nq)| {
                let ej: f64 = m.iter().enumerate().map(|(j, &mj)| erel[j][mj]).sum();
                let er: f64 = nq.iter().zip(&self.omegas).map(|(&q, w)| q as f64 * w).sum();
                ej + er
            })
            .collect();

        // one RK4 step of the local problem starting at phase zero
        let mut s0 = st0.clone();
        let mut sm = st0.clone();
        let mut s1 = st0.clone();
        for (k, e) in energy.iter().enumerate() {
            let (pm, p1) = (cis(0.5 * h * e), cis(h * e));
            s0.phase[2 * k..2 * k + 2].copy_from_slice(&[1.0, 0.0]);
            sm.phase[2 * k..2 * k + 2].copy_from_slice(&[pm.re, pm.im]);
            s1.phase[2 * k..2 * k + 2].copy_from_slice(&[p1.re, p1.im]);
        }
        let len = 2 * dim;
        let (mut x, mut tmp, mut acc, mut k, mut u) =
            (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let mut au: Vec<Vec<f64>> = self.phonons.iter().map(|_| vec![0.0; len]).collect();
        let mut g = DMatrix::<Complex64>::zeros(dim, dim);
        for col in 0..dim {
            x.fill(0.0);
            x[2 * col] = 1.0;
            self.rhs(&x, &s0, &mut u, &mut au, &mut k);
            acc.copy_from_slice(&k);
            axpy_into(&x, 0.5 * h, &k, &mut tmp);
            self.rhs(&tmp, &sm, &mut u, &mut au, &mut k);
            axpy(2.0, &k, &mut acc);
            axpy_into(&x, 0.5 * h, &k, &mut tmp);
            self.rhs(&tmp, &sm, &mut u, &mut au, &mut k);
            axpy(2.0, &k, &mut acc);
            axpy_into(&x, h, &k, &mut tmp);
            self.rhs(&tmp, &s1, &mut u, &mut au, &mut k);
            axpy(1.0, &k, &mut acc);
            // G − I = (D − I) + D·(M₀ − I), kept apart from the identity so
            // rounding scales with the step generator and not with 1
            for row in 0..dim {
                let b = Complex64::new(h / 6.0 * acc[2 * row], h / 6.0 * acc[2 * row + 1]);
                let mut v = cis(-h * energy[row]) * b;
                if row == col {
                    v += cis_m1(-h * energy[row]);
                }
                g[(row, col)] = v;
            }
        }
        // (I + Δ)² = I + 2Δ + Δ²
        let mut powers = vec![g];
        while (1u64 << powers.len()) <= n {
            let last = powers.last().unwrap();
            let next = last * last + last * Complex64::new(2.0, 0.0);
            powers.push(next);
        }

        let mut phase = vec![0.0; len];
        self.build_phase(&run.z, a, &mut phase, &mut run.scratch);
        let mut d = DVector::<Complex64>::from_iterator(
            dim,
            (0..dim).map(|k| {
                let p = Complex64::new(phase[2 * k], phase[2 * k + 1]);
                p.conj() * Complex64::new(run.c[2 * k], run.c[2 * k + 1])
            }),
        );
        let mut dcomp = vec![Complex64::new(0.0, 0.0); dim];
        let start = run.step_no;
        let end = start + n;
        let mut zt = run.z.clone();
        while run.step_no < end {
            let now = run.step_no;
            let target = ((now / MONITOR_STRIDE + 1) * MONITOR_STRIDE).min((now / run.every + 1) * run.every).min(end);
            let mut adv = target - now;
            let mut bit = 0;
            while adv > 0 {
                if adv & 1 == 1 {
                    let inc = &powers[bit] * &d;
                    for ((di, ei), ai) in d.iter_mut().zip(dcomp.iter_mut()).zip(inc.iter()) {
                        let y = ai - *ei;
                        let t = *di + y;
                        *ei = (t - *di) - y;
                        *di = t;
                    }
                }
                adv >>= 1;
                bit += 1;
            }
            run.step_no = target;
            let t = if target == end { b } else { a + (target - start) as f64 * h };
            for (j, zj) in zt.iter_mut().enumerate() {
                for (l, v) in zj.iter_mut().enumerate() {
                    *v = run.z[j][l] * cis(erel[j][l] * (t - a));
                }
            }
            self.build_phase(&zt, t, &mut phase, &mut run.scratch);
            for k in 0..dim {
                let c = Complex64::new(phase[2 * k], phase[2 * k + 1]) * d[k];
                run.c[2 * k] = c.re;
                run.c[2 * k + 1] = c.im;
            }
            self.monitor(run, t, &st0.s, h)?;
        }
        run.z = zt;
        for (j, th) in run.theta.iter_mut().enumerate() {
            for (l, v) in th.iter_mut().enumerate() {
                v.add(st0.rows[j][l] * (b - a));
            }
        }
        run.comp.fill(0.0);
        Ok(())
    }

    /// Norm, occupation and leakage bookkeeping after `run.step_no` steps; records a sample when due.
    fn monitor(&self, run: &mut RunState, t: f64, s: &[f64], h: f64) -> Result<(), DynamicsError> {
        let traj = &mut run.traj;
        let mut n2 = 0.0;
        let mut leak = 0.0;
        for (kk, p) in run.c.chunks_exact(2).enumerate() {
            let o = p[0] * p[0] + p[1] * p[1];
            n2 += o;
            if o > traj.max_occupation[kk] {
                traj.max_occupation[kk] = o;
            }
            if self.leak_mask[kk] {
                leak += o;
            }
        }
        traj.max_leakage = traj.max_leakage.max(leak);
        let drift = (n2 - 1.0).abs();
        if !(drift <= traj.max_norm_drift) {
            traj.max_norm_drift = if drift.is_finite() { drift } else { f64::INFINITY };
            if !(drift <= self.cfg.norm_tolerance) {
                // RK4 error scales as dt⁴; aim a factor 4 under the tolerance
                let ratio = if drift.is_finite() { self.cfg.norm_tolerance / (4.0 * drift) } else { 1e-4 };
                return Err(DynamicsError::NormDrift {
                    drift,
                    tolerance: self.cfg.norm_tolerance,
                    time: t,
                    dt: h,
                    suggested_dt: h * ratio.powf(0.25).min(0.5),
                });
            }
        }
        if run.step_no % run.every == 0 || run.step_no == run.total_steps {
            run.record(t, s);
        }
        Ok(())
    }
}

/// Steps between norm and occupation checks inside constant-bias intervals.
const MONITOR_STRIDE: u64 = 256;

struct RunState {
    /// Interleaved (re, im) amplitudes.
    c: Vec<f64>,
    /// Kahan compensation for `c`.
    comp: Vec<f64>,
    /// Per junction, e^{i∫(ε_m − ε₀)dt}.
    z: Vec<Vec<Complex64>>,
    /// Per junction, ∫ε_m dt.
    theta: Vec<Vec<Neumaier>>,
    traj: Trajectory,
    step_no: u64,
    total_steps: u64,
    every: u64,
    scratch: PhaseScratch,
}

impl RunState {
    fn record(&mut self, t: f64, s: &[f64]) {
        let n2: f64 = self.c.iter().map(|v| v * v).sum();
        let traj = &mut self.traj;
        traj.times.push(t);
        traj.bias.push(s.to_vec());
        traj.norms.push(n2.sqrt());
        traj.amplitudes.extend(self.c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])));
    }
}

/// dst = x + a·y
fn axpy_into(x: &[f64], a: f64, y: &[f64], dst: &mut [f64]) {
    for ((d, xi), yi) in dst.iter_mut().zip(x).zip(y) {
        *d = xi + a * yi;
    }
}

/// y += a·x
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// dst += coef·(1 ⊗ mat ⊗ 1) src for a factor of size `m` whose index has
/// f64 stride `stride`; `mat` is row-major.
fn apply_factor(mat: &[f64], m: usize, stride: usize, coef: f64, src: &[f64], dst: &mut [f64]) {
    let block = m * stride;
    for (d, s) in dst.chunks_exact_mut(block).zip(src.chunks_exact(block)) {
        for (a, da) in d.chunks_exact_mut(stride).enumerate() {
            for (b, sb) in s.chunks_exact(stride).enumerate() {
                let x = coef * mat[a * m + b];
                for (di, si) in da.iter_mut().zip(sb) {
                    *di += x * si;
                }
            }
        }
    }
}

/// dst = (1 ⊗ (a − a†) ⊗ 1) src for a phonon factor of size `n`.
fn apply_ladder(src: &[f64], dst: &mut [f64], n: usize, stride: usize, sqrt_n: &[f64]) {
    let block = n * stride;
    if stride == 2 {
        // fastest-varying factor: complex elements are adjacent
        for (d, s) in dst.chunks_exact_mut(block).zip(src.chunks_exact(block)) {
            for q in 0..n {
                let (mut re, mut im) = (0.0, 0.0);
                if q + 1 < n {
                    re += sqrt_n[q + 1] * s[2 * q + 2];
                    im += sqrt_n[q + 1] * s[2 * q + 3];
                }
                if q > 0 {
                    re -= sqrt_n[q] * s[2 * q - 2];
                    im -= sqrt_n[q] * s[2 * q - 1];
                }
                d[2 * q] = re;
                d[2 * q + 1] = im;
            }
        }
        return;
    }
    for (d, s) in dst.chunks_exact_mut(block).zip(src.chunks_exact(block)) {
        for q in 0..n {
            let dq = &mut d[q * stride..(q + 1) * stride];
            dq.fill(0.0);
            if q + 1 < n {
                let f = sqrt_n[q + 1];
                for (di, si) in dq.iter_mut().zip(&s[(q + 1) * stride..(q + 2) * stride]) {
                    *di += f * si;
                }
            }
            if q > 0 {
                let f = sqrt_n[q];
                for (di, si) in dq.iter_mut().zip(&s[(q - 1) * stride..q * stride]) {
                    *di -= f * si;
                }
            }
        }
    }
}

/// e^{ix}, by series for the small increments of one step.
fn cis(x: f64) -> Complex64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        let c = 1.0 - x2 / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0)));
        let s = x * (1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0))));
        Complex64::new(c, s)
    } else {
        let (s, c) = x.sin_cos();
        Complex64::new(c, s)
    }
}

/// e^{ix} − 1 without cancellation.
fn cis_m1(x: f64) -> Complex64 {
    let h = (0.5 * x).sin();
    Complex64::new(-2.0 * h * h, x.sin())
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact propagation at constant bias: c(t) in the interaction representation
/// from the eigendecomposition of the full H(s).
pub fn propagate_constant(
    system: &CompositeSystem,
    s: &[f64],
    c0: &[Complex64],
    t: f64,
) -> Result<Vec<Complex64>, DynamicsError> {
    Ok(ConstantPropagator::new(system, s)?.propagate(c0, t))
}

/// Eigendecomposition of H(s) for repeated exact propagation.
#[derive(Clone, Debug)]
pub struct ConstantPropagator {
    energies: Vec<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<Complex64>,
    hamiltonian: DMatrix<Complex64>,
}

impl ConstantPropagator {
    pub fn new(system: &CompositeSystem, s: &[f64]) -> Result<Self, DynamicsError> {
        system.validate()?;
        if s.len() != system.junctions.len() {
            return Err(DynamicsError::Schedule(format!(
                "{} bias values for {} junctions",
                s.len(),
                system.junctions.len()
            )));
        }
        let levels: Vec<Levels> = system
            .junctions
            .iter()
            .zip(s)
            .zip(&system.basis.junction_levels)
            .map(|((p, &sj), &m)| {
                if !(0.0..=MAX_BIAS).contains(&sj) {
                    return Err(DynamicsError::Schedule(format!("bias {sj} outside [0, {MAX_BIAS}]")));
                }
                Ok(DirectSpectrum::new(p.clone(), m).levels(sj)?)
            })
            .collect::<Result<_, DynamicsError>>()?;
        let h = assemble(system, &levels)?;
        let full = h.full();
        let eig = full.clone().symmetric_eigen();
        Ok(ConstantPropagator {
            energies: h.diagonal,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            hamiltonian: full,
        })
    }

    pub fn hamiltonian(&self) -> &DMatrix<Complex64> {
        &self.hamiltonian
    }

    /// b(t) = V e^{−iΛt} V† b(0), then c_k = e^{iE_k t} b_k.
    pub fn propagate(&self, c0: &[Complex64], t: f64) -> Vec<Complex64> {
        let v = &self.eigenvectors;
        let b0 = DVector::from_column_slice(c0);
        let mut y = v.adjoint() * b0;
        for (yi, &l) in y.iter_mut().zip(self.eigenvalues.iter()) {
            *yi *= Complex64::from_polar(1.0, -l * t);
        }
        let b = v * y;
        b.iter().zip(&self.energies).map(|(bk, &e)| bk * Complex64::from_polar(1.0, e * t)).collect()
    }

    /// ⟨ψ|H|ψ⟩ for Schrödinger-picture amplitudes b.
    pub fn energy(&self, b: &[Complex64]) -> f64 {
        let v = DVector::from_column_slice(b);
        (v.adjoint() * &self.hamiltonian * &v)[(0, 0)].re
    }

    /// Schrödinger-picture amplitudes b_k = e^{−iE_k t} c_k.
    pub fn schrodinger(&self, c: &[Complex64], t: f64) -> Vec<Complex64> {
        c.iter().zip(&self.energies).map(|(ck, &e)| ck * Complex64::from_polar(1.0, -e * t)).collect()
    }
}

/// One row of a step-size study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub dt: f64,
    pub final_occupations: Vec<f64>,
    pub max_norm_drift: f64,
    /// ‖c(dt) − c(dt/2)‖ against the next finer step, if any.
    pub difference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub points: Vec<SweepPoint>,
    /// log₂ of successive difference ratios.
    pub observed_orders: Vec<f64>,
    /// Differences did not shrink monotonically with dt.
    pub non_monotone: bool,
}

impl ConvergenceReport {
    /// Order from the coarsest pair, where truncation error dominates roundoff.
    pub fn leading_order(&self) -> Option<f64> {
        self.observed_orders.first().copied()
    }
}

/// Steps of the default study, ns.
pub const SWEEP_STEPS: [f64; 4] = [8e-6, 4e-6, 2e-6, 1e-6];

/// Integrate at each step (coarse to fine, each half the previous) and
/// estimate the observed order from ‖c(h) − c(h/2)‖ ratios.
pub fn convergence_sweep(
    integrator: &Integrator,
    c0: &[Complex64],
    base: &IntegratorConfig,
    steps: &[f64],
) -> Result<ConvergenceReport, DynamicsError> {
    let runs = crate::par::try_map(steps, |&dt| {
        let cfg = IntegratorConfig { dt, max_samples: 2, ..base.clone() };
        integrator.run(c0, &cfg)
    })?;
    let finals: Vec<Vec<Complex64>> = runs.iter().map(|r| r.final_amplitudes().to_vec()).collect();
    let diff = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let mut points = Vec::new();
    for (i, (dt, run)) in steps.iter().zip(&runs).enumerate() {
        points.push(SweepPoint {
            dt: *dt,
            final_occupations: run.final_occupations(),
            max_norm_drift: run.max_norm_drift,
            difference: finals.get(i + 1).map(|f| diff(&finals[i], f)),
        });
    }
    let diffs: Vec<f64> = points.iter().filter_map(|p| p.difference).collect();
    let observed_orders: Vec<f64> = diffs
        .windows(2)
        .zip(steps.windows(2))
        .map(|(d, h)| (d[0] / d[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let non_monotone = diffs.windows(2).any(|d| !(d[1] < d[0]));
    if non_monotone {
        log::warn!("convergence sweep: differences not monotone in dt: {diffs:?}");
    }
    Ok(ConvergenceReport { points, observed_orders, non_monotone })
}
