//! Coupled junction–resonator system: product basis, Hamiltonian assembly in
//! the instantaneous eigenbasis, two-level reductions, resonance search and
//! tabulated spectra for time integration.
//!
//! Basis ordering: junction indices first (junction 1 slowest), then
//! resonators, with the last resonator's phonon number varying fastest.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::junction::{
    diagonalize_levels, BasisPolicy, JunctionError, JunctionParams, JunctionSpectrum,
};
use crate::par;
use crate::resonator::{Gate, ResonatorParams};
use crate::units::Energy;

/// Oscillator basis used for spectra during time integration.
pub const DYNAMICS_BASIS: BasisPolicy = BasisPolicy::Capped(64);

/// Grid spacing of [`SpectrumTable`].
pub const TABLE_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositeError {
    #[error(transparent)]
    Junction(#[from] JunctionError),
    #[error("dimension mismatch: {0}")]
    Structure(String),
    #[error("junction cannot be tuned into resonance with omega0 = {omega0} rad/ns on s in [0, 0.99]")]
    NotTunable { omega0: f64 },
    #[error("bias {s} outside tabulated range [{lo}, {hi}]")]
    OutsideTable { s: f64, lo: f64, hi: f64 },
}

/// Product of junction level spaces and resonator phonon spaces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductBasis {
    pub junction_levels: Vec<usize>,
    pub phonon_cutoffs: Vec<usize>,
}

impl ProductBasis {
    pub fn new(junction_levels: Vec<usize>, phonon_cutoffs: Vec<usize>) -> Self {
        ProductBasis { junction_levels, phonon_cutoffs }
    }

    /// `junctions` junctions with 4 levels each and one resonator with 4 phonon states.
    pub fn standard(junctions: usize) -> Self {
        Self::new(vec![4; junctions], vec![4])
    }

    fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.junction_levels.iter().chain(&self.phonon_cutoffs).copied()
    }

    pub fn dim(&self) -> usize {
        self.sizes().product()
    }

    /// Index stride of factor `f` (junctions first, then resonators).
    pub fn stride(&self, factor: usize) -> usize {
        self.sizes().skip(factor + 1).product()
    }

    pub fn junction_stride(&self, j: usize) -> usize {
        self.stride(j)
    }

    pub fn resonator_stride(&self, r: usize) -> usize {
        self.stride(self.junction_levels.len() + r)
    }

    pub fn index(&self, levels: &[usize], phonons: &[usize]) -> usize {
        assert_eq!(levels.len(), self.junction_levels.len());
        assert_eq!(phonons.len(), self.phonon_cutoffs.len());
        let mut idx = 0;
        for (q, size) in levels.iter().chain(phonons).zip(self.sizes()) {
            assert!(*q < size, "quantum number {q} out of range {size}");
            idx = idx * size + q;
        }
        idx
    }

    pub fn quantum_numbers(&self, mut idx: usize) -> (Vec<usize>, Vec<usize>) {
        let sizes: Vec<usize> = self.sizes().collect();
        let mut q = vec![0; sizes.len()];
        for f in (0..sizes.len()).rev() {
            q[f] = idx % sizes[f];
            idx /= sizes[f];
        }
        let phonons = q.split_off(self.junction_levels.len());
        (q, phonons)
    }

    /// Label such as `1_0` (m_n) or `1_0_0` (m1_m2_n).
    pub fn label(&self, idx: usize) -> String {
        let (m, n) = self.quantum_numbers(idx);
        m.iter().chain(&n).map(|v| v.to_string()).collect::<Vec<_>>().join("_")
    }
}

/// Coupling strengths g_IJ between resonator I and junction J.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingGraph {
    /// Row I, column J.
    pub g: Vec<Vec<Energy>>,
}

impl CouplingGraph {
    pub fn resonators(&self) -> usize {
        self.g.len()
    }

    pub fn junctions(&self) -> usize {
        self.g.first().map_or(0, |r| r.len())
    }

    /// Each junction couples to one resonator (computational) or two (bus).
    /// Junctions with no coupling at all are accepted only when every entry is
    /// zero, which describes the uncoupled reference system.
    pub fn validate(&self) -> Result<(), CompositeError> {
        let nj = self.junctions();
        if self.g.iter().any(|r| r.len() != nj) {
            return Err(CompositeError::Structure("ragged coupling matrix".into()));
        }
        let all_zero = self.g.iter().flatten().all(|g| g.rad_per_ns() == 0.0);
        if all_zero {
            return Ok(());
        }
        for j in 0..nj {
            let count = self.g.iter().filter(|r| r[j].rad_per_ns() != 0.0).count();
            if !(1..=2).contains(&count) {
                return Err(CompositeError::Structure(format!(
                    "junction {} couples to {count} resonators; expected 1 (computational) or 2 (bus)",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CouplingGraph {
            g: self.g.iter().map(|r| r.iter().map(|&g| g * factor).collect()).collect(),
        }
    }
}

/// Junctions, resonator frequencies, couplings and truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeSystem {
    pub junctions: Vec<JunctionParams>,
    /// ω_I in rad/ns.
    pub resonator_frequencies: Vec<f64>,
    pub coupling: CouplingGraph,
    pub basis: ProductBasis,
}

impl CompositeSystem {
    pub fn new(
        junctions: Vec<JunctionParams>,
        resonator_frequencies: Vec<f64>,
        coupling: CouplingGraph,
        basis: ProductBasis,
    ) -> Result<Self, CompositeError> {
        let sys = CompositeSystem { junctions, resonator_frequencies, coupling, basis };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), CompositeError> {
        let (nj, nr) = (self.junctions.len(), self.resonator_frequencies.len());
        if self.basis.junction_levels.len() != nj || self.basis.phonon_cutoffs.len() != nr {
            return Err(CompositeError::Structure(format!(
                "basis has {} junction and {} resonator factors, system has {nj} and {nr}",
                self.basis.junction_levels.len(),
                self.basis.phonon_cutoffs.len()
            )));
        }
        if self.coupling.resonators() != nr || self.coupling.junctions() != nj {
            return Err(CompositeError::Structure("coupling matrix shape does not match system".into()));
        }
        if self.basis.sizes().any(|s| s == 0) {
            return Err(CompositeError::Structure("empty factor space".into()));
        }
        self.coupling.validate()
    }

    /// One junction on a resonator.
    pub fn single(junction: JunctionParams, resonator: &ResonatorParams, gate: Gate) -> Self {
        let g = resonator.coupling_strength(gate);
        CompositeSystem {
            junctions: vec![junction],
            resonator_frequencies: vec![resonator.dilatational_frequency()],
            coupling: CouplingGraph { g: vec![vec![g]] },
            basis: ProductBasis::standard(1),
        }
    }

    /// Two junctions on the two halves of a split-gate resonator.
    pub fn split_gate_pair(j1: JunctionParams, j2: JunctionParams, resonator: &ResonatorParams) -> Self {
        let g = resonator.coupling_strength(Gate::Split);
        CompositeSystem {
            junctions: vec![j1, j2],
            resonator_frequencies: vec![resonator.dilatational_frequency()],
            coupling: CouplingGraph { g: vec![vec![g, g]] },
            basis: ProductBasis::standard(2),
        }
    }

    pub fn with_basis(mut self, basis: ProductBasis) -> Self {
        self.basis = basis;
        self
    }

    pub fn with_coupling(mut self, coupling: CouplingGraph) -> Self {
        self.coupling = coupling;
        self
    }
}

/// Low-level data of one junction at one bias, as consumed by assembly and
/// time integration.
#[derive(Clone, Debug, PartialEq)]
pub struct Levels {
    pub energies: Vec<f64>,
    pub dipole: DMatrix<f64>,
    pub dds: DMatrix<f64>,
}

impl Levels {
    pub fn from_spectrum(sp: &JunctionSpectrum, levels: usize) -> Self {
        Levels {
            energies: sp.energies[..levels].to_vec(),
            dipole: sp.dipole.view((0, 0), (levels, levels)).into_owned(),
            dds: sp.dds.view((0, 0), (levels, levels)).into_owned(),
        }
    }

    pub fn count(&self) -> usize {
        self.energies.len()
    }

    pub fn level_spacing(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }
}

/// Source of junction levels as a function of bias.
pub trait SpectrumProvider: Sync {
    fn levels(&self, s: f64) -> Result<Levels, CompositeError>;

    fn level_spacing(&self, s: f64) -> Result<f64, CompositeError> {
        Ok(self.levels(s)?.level_spacing())
    }
}

/// Diagonalizes on every request.
#[derive(Clone, Debug)]
pub struct DirectSpectrum {
    pub params: JunctionParams,
    pub policy: BasisPolicy,
    pub levels: usize,
}

impl DirectSpectrum {
    pub fn new(params: JunctionParams, levels: usize) -> Self {
        DirectSpectrum { params, policy: DYNAMICS_BASIS, levels }
    }
}

impl SpectrumProvider for DirectSpectrum {
    fn levels(&self, s: f64) -> Result<Levels, CompositeError> {
        let sp = diagonalize_levels(&self.params, s, self.policy, self.levels)?;
        Ok(Levels::from_spectrum(&sp, self.levels))
    }
}

/// Levels on a uniform bias grid, interpolated with 4-point cubic Lagrange.
#[derive(Clone, Debug)]
pub struct SpectrumTable {
    s0: f64,
    step: f64,
    levels: usize,
    /// Per grid point: energies, dipole (row-major), dds (row-major).
    rows: Vec<Vec<f64>>,
}

impl SpectrumTable {
    /// Tabulate levels covering `[lo, hi]` with spacing [`TABLE_STEP`].
    pub fn build(
        params: &JunctionParams,
        policy: BasisPolicy,
        levels: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Self, CompositeError> {
        Self::build_with_step(params, policy, levels, lo, hi, TABLE_STEP)
    }

    pub fn build_with_step(
        params: &JunctionParams,
        policy: BasisPolicy,
        levels: usize,
        lo: f64,
        hi: f64,
        step: f64,
    ) -> Result<Self, CompositeError> {
        // two extra points each side keep the cubic stencil centred at the ends
        let first = ((lo / step).floor() as i64 - 2).max(0);
        let last = (hi / step).ceil() as i64 + 2;
        let last = last.min(((0.99 / step).floor()) as i64);
        if last < first + 3 {
            return Err(CompositeError::OutsideTable { s: hi, lo, hi });
        }
        let points: Vec<f64> = (first..=last).map(|i| i as f64 * step).collect();
        let rows = par::try_map(&points, |&s| -> Result<Vec<f64>, CompositeError> {
            let sp = diagonalize_levels(params, s, policy, levels)?;
            let lv = Levels::from_spectrum(&sp, levels);
            let mut row = lv.energies.clone();
            row.extend(lv.dipole.transpose().iter());
            row.extend(lv.dds.transpose().iter());
            Ok(row)
        })?;
        Ok(SpectrumTable { s0: first as f64 * step, step, levels, rows })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.s0, self.s0 + self.step * (self.rows.len() - 1) as f64)
    }

    pub fn level_count(&self) -> usize {
        self.levels
    }

    /// Width of one interpolated row: M energies, then M² dipole, then M² dds.
    pub fn row_len(&self) -> usize {
        self.levels * (1 + 2 * self.levels)
    }

    /// Interpolate the packed row at `s` into `out`.
    pub fn interpolate_into(&self, s: f64, out: &mut [f64]) -> Result<(), CompositeError> {
        let (lo, hi) = self.range();
        if !(s >= lo && s <= hi) {
            return Err(CompositeError::OutsideTable { s, lo, hi });
        }
        let n = self.rows.len();
        let x = (s - self.s0) / self.step;
        let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let u = x - base as f64;
        // Lagrange weights for nodes 0..3 at u
        let w = [
            -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
            u * (u - 2.0) * (u - 3.0) / 2.0,
            -u * (u - 1.0) * (u - 3.0) / 2.0,
            u * (u - 1.0) * (u - 2.0) / 6.0,
        ];
        let (r0, r1, r2, r3) = (&self.rows[base], &self.rows[base + 1], &self.rows[base + 2], &self.rows[base + 3]);
        for (i, o) in out.iter_mut().enumerate() {
            *o = w[0] * r0[i] + w[1] * r1[i] + w[2] * r2[i] + w[3] * r3[i];
        }
        Ok(())
    }
}

impl SpectrumProvider for SpectrumTable {
    fn levels(&self, s: f64) -> Result<Levels, CompositeError> {
        let m = self.levels;
        let mut row = vec![0.0; self.row_len()];
        self.interpolate_into(s, &mut row)?;
        Ok(Levels {
            energies: row[..m].to_vec(),
            dipole: DMatrix::from_row_slice(m, m, &row[m..m + m * m]),
            dds: DMatrix::from_row_slice(m, m, &row[m + m * m..]),
        })
    }
}

/// H(s) of the coupled system in the instantaneous product basis.
#[derive(Clone, Debug)]
pub struct InstantaneousHamiltonian {
    /// E_k = Σ_J ε_{m_J} + Σ_I n_I ħω_I, rad/ns.
    pub diagonal: Vec<f64>,
    /// δH, Hermitian, rad/ns.
    pub interaction: DMatrix<Complex64>,
    /// ⟨k|∂/∂s_J|k'⟩ lifted to the product space, one real antisymmetric matrix per junction.
    pub dds: Vec<DMatrix<f64>>,
}

impl InstantaneousHamiltonian {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// H₀ + δH as a dense matrix.
    pub fn full(&self) -> DMatrix<Complex64> {
        let mut h = self.interaction.clone();
        for (k, e) in self.diagonal.iter().enumerate() {
            h[(k, k)] += Complex64::new(*e, 0.0);
        }
        h
    }

    /// The anti-Hermitian nonadiabatic generator Σ_J ṡ_J ⟨∂/∂s_J⟩.
    pub fn nonadiabatic_generator(&self, sdot: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (d, v) in self.dds.iter().zip(sdot) {
            out += d * *v;
        }
        out
    }
}

/// Assemble δH, the diagonal energies and the ∂/∂s matrices.
///
/// `⟨…m n…|δH|…m' n'…⟩ = −i g_IJ x_{mm'} (√n' δ_{n,n'−1} − √n δ_{n,n'+1})`
/// summed over coupled pairs.
pub fn assemble(system: &CompositeSystem, levels: &[Levels]) -> Result<InstantaneousHamiltonian, CompositeError> {
    system.validate()?;
    let basis = &system.basis;
    if levels.len() != system.junctions.len() {
        return Err(CompositeError::Structure(format!(
            "{} spectra for {} junctions",
            levels.len(),
            system.junctions.len()
        )));
    }
    for (j, lv) in levels.iter().enumerate() {
        if lv.count() < basis.junction_levels[j] {
            return Err(CompositeError::Structure(format!(
                "junction {} spectrum has {} levels, basis needs {}",
                j + 1,
                lv.count(),
                basis.junction_levels[j]
            )));
        }
    }
    let dim = basis.dim();
    let states: Vec<(Vec<usize>, Vec<usize>)> = (0..dim).map(|k| basis.quantum_numbers(k)).collect();

    let diagonal = states
        .iter()
        .map(|(m, n)| {
            let ej: f64 = m.iter().zip(levels).map(|(&mj, lv)| lv.energies[mj]).sum();
            let er: f64 = n.iter().zip(&system.resonator_frequencies).map(|(&ni, w)| ni as f64 * w).sum();
            ej + er
        })
        .collect();

    let mut interaction = DMatrix::<Complex64>::zeros(dim, dim);
    let mut dds = vec![DMatrix::<f64>::zeros(dim, dim); levels.len()];
    for (k, (m, n)) in states.iter().enumerate() {
        for (kp, (mp, np)) in states.iter().enumerate() {
            for (j, lv) in levels.iter().enumerate() {
                let others_equal = (0..m.len()).all(|o| o == j || m[o] == mp[o]);
                if !others_equal {
                    continue;
                }
                let x = lv.dipole[(m[j], mp[j])];
                if n == np {
                    dds[j][(k, kp)] = lv.dds[(m[j], mp[j])];
                }
                for (i, row) in system.coupling.g.iter().enumerate() {
                    let g = row[j].rad_per_ns();
                    if g == 0.0 {
                        continue;
                    }
                    let rest_equal = (0..n.len()).all(|o| o == i || n[o] == np[o]);
                    if !rest_equal {
                        continue;
                    }
                    // ⟨n|(a − a†)|n'⟩
                    let a_minus = if n[i] + 1 == np[i] {
                        (np[i] as f64).sqrt()
                    } else if np[i] + 1 == n[i] {
                        -(n[i] as f64).sqrt()
                    } else {
                        0.0
                    };
                    if a_minus != 0.0 {
                        interaction[(k, kp)] += Complex64::new(0.0, -g * x * a_minus);
                    }
                }
            }
        }
    }
    Ok(InstantaneousHamiltonian { diagonal, interaction, dds })
}

/// Reduced Hamiltonians with only the qubit levels m = 0, 1.
#[derive(Clone, Debug)]
pub struct TwoLevelForms {
    /// Junction energies ε₀, ε₁ plus the full −ig(a − a†)x coupling.
    pub matrix_form: DMatrix<Complex64>,
    /// −(ΔE/2)σ_z + ħω₀a†a − ig(a − a†)(x₀₀σ₀ + x₀₁σ_x), with x₁₁ replaced by x₀₀.
    pub pauli_form: DMatrix<Complex64>,
    /// −(ΔE/2)σ_z + ħω₀a†a − igx₀₁(aσ₋ − a†σ₊).
    pub jaynes_cummings: DMatrix<Complex64>,
    /// |x₀₀ − x₁₁|, the error of the Pauli form.
    pub pauli_error: f64,
    /// ΔE within 10% of ħω₀.
    pub jc_valid: bool,
}

/// Two-level reductions in the basis |m n⟩ (m ∈ {0,1}, n < `phonons`), phonon index fastest.
pub fn two_level_forms(levels: &Levels, omega0: f64, g: Energy, phonons: usize) -> TwoLevelForms {
    let g = g.rad_per_ns();
    let dim = 2 * phonons;
    let x = &levels.dipole;
    let de = levels.level_spacing();
    let idx = |m: usize, n: usize| m * phonons + n;
    // ⟨n|(a − a†)|n'⟩
    let a_minus = |n: usize, np: usize| -> f64 {
        if n + 1 == np {
            (np as f64).sqrt()
        } else if np + 1 == n {
            -(n as f64).sqrt()
        } else {
            0.0
        }
    };
    let i = Complex64::i();

    let mut matrix_form = DMatrix::zeros(dim, dim);
    let mut pauli_form = DMatrix::zeros(dim, dim);
    let mut jc = DMatrix::zeros(dim, dim);
    for m in 0..2 {
        for n in 0..phonons {
            let k = idx(m, n);
            let z = if m == 0 { 1.0 } else { -1.0 };
            matrix_form[(k, k)] += Complex64::from(levels.energies[m] + n as f64 * omega0);
            pauli_form[(k, k)] += Complex64::from(-de / 2.0 * z + n as f64 * omega0);
            jc[(k, k)] += Complex64::from(-de / 2.0 * z + n as f64 * omega0);
            for mp in 0..2 {
                for np in 0..phonons {
                    let kp = idx(mp, np);
                    let am = a_minus(n, np);
                    if am == 0.0 {
                        continue;
                    }
                    matrix_form[(k, kp)] += -i * g * x[(m, mp)] * am;
                    let xp = if m == mp { x[(0, 0)] } else { x[(0, 1)] };
                    pauli_form[(k, kp)] += -i * g * xp * am;
                    // aσ₋ raises the junction while removing a phonon; a†σ₊ is its adjoint
                    if m == 1 && mp == 0 && np == n + 1 {
                        jc[(k, kp)] += -i * g * x[(0, 1)] * (np as f64).sqrt();
                    }
                    if m == 0 && mp == 1 && n == np + 1 {
                        jc[(k, kp)] += i * g * x[(0, 1)] * (n as f64).sqrt();
                    }
                }
            }
        }
    }
    TwoLevelForms {
        matrix_form,
        pauli_form,
        jaynes_cummings: jc,
        pauli_error: (x[(0, 0)] - x[(1, 1)]).abs(),
        jc_valid: ((de - omega0) / omega0).abs() < 0.1,
    }
}

/// Bias at which ΔE(s) = ħω₀.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonantBias {
    /// From bisection on diagonalized spectra.
    pub exact: f64,
    /// √(1 − (ω₀/ω_p0)⁴).
    pub harmonic: f64,
}

/// Harmonic estimate of the resonant bias, or `None` when ω₀ > ω_p0.
pub fn harmonic_resonant_bias(params: &JunctionParams, omega0: f64) -> Option<f64> {
    let r = omega0 / params.zero_bias_plasma_frequency();
    let v = 1.0 - r.powi(4);
    (v >= 0.0).then(|| v.sqrt())
}

pub fn resonant_bias(
    provider: &dyn SpectrumProvider,
    params: &JunctionParams,
    omega0: f64,
) -> Result<ResonantBias, CompositeError> {
    let f = |s: f64| -> Result<f64, CompositeError> { Ok(provider.level_spacing(s)? - omega0) };
    let (mut lo, mut hi) = (0.0, 0.99);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo < 0.0 || fhi > 0.0 {
        return Err(CompositeError::NotTunable { omega0 });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < 1e-6 * omega0 && hi - lo < 1e-12 {
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let harmonic = harmonic_resonant_bias(params, omega0).ok_or(CompositeError::NotTunable { omega0 })?;
    Ok(ResonantBias { exact: mid, harmonic })
}
