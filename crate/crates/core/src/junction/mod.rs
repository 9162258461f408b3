//! Current-biased Josephson junction: washboard potential, derived scalars and
//! the bias-dependent eigensystem in a harmonic-oscillator basis.
//!
//! The phase δ is restricted to a single well of `U(δ) = −E_J (cos δ + s δ)`.
//! Eigenstates are expanded in oscillator functions centred on
//! `δ_min = arcsin s` with width `ℓ_s`; the anharmonic remainder of the
//! potential is integrated with a Gauss–Hermite rule of `2N + 8` nodes.
//!
//! All energies are in rad/ns (ħ = 1) and measured from `U(δ_min)`.

pub mod hermite;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Energy, ELEMENTARY_CHARGE, HBAR};
use hermite::{scaled_hermite_functions, GaussHermite};

/// Smallest oscillator basis accepted by [`diagonalize`].
pub const MIN_BASIS: usize = 8;

/// Number of low levels kept in a [`JunctionSpectrum`] unless asked otherwise.
pub const DEFAULT_LEVELS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JunctionError {
    #[error("bias s = {0} is outside [0, 1)")]
    BiasOutOfRange(f64),
    #[error("oscillator basis of {basis} states holds only {found} levels below the barrier at s = {s}; at least 4 are required")]
    Convergence { s: f64, basis: usize, found: usize },
    #[error("explicit basis size {0} is below the minimum of {MIN_BASIS}")]
    BasisTooSmall(usize),
    #[error("finite-difference stencil s = {s} ± {h} leaves [0, 1)")]
    StencilOutOfRange { s: f64, h: f64 },
    #[error("requested {requested} levels but the basis only has {available}")]
    TooManyLevels { requested: usize, available: usize },
}

/// Device constants of a single junction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionParams {
    /// Critical current I₀ in µA.
    pub critical_current_ua: f64,
    /// Junction capacitance C in pF.
    pub capacitance_pf: f64,
    /// E_J = ħ I₀ / 2e.
    pub josephson_energy: Energy,
    /// E_c = (2e)² / 2C.
    pub charging_energy: Energy,
}

impl JunctionParams {
    /// Energies derived from I₀ and C with the exact physical constants.
    pub fn from_device(critical_current_ua: f64, capacitance_pf: f64) -> Self {
        let ej = HBAR * critical_current_ua * 1e-6 / (2.0 * ELEMENTARY_CHARGE);
        let ec = (2.0 * ELEMENTARY_CHARGE).powi(2) / (2.0 * capacitance_pf * 1e-12);
        Self::with_energies(
            critical_current_ua,
            capacitance_pf,
            Energy::from_joules(ej),
            Energy::from_joules(ec),
        )
    }

    /// Device values together with explicitly tabulated energies.
    pub fn with_energies(
        critical_current_ua: f64,
        capacitance_pf: f64,
        josephson_energy: Energy,
        charging_energy: Energy,
    ) -> Self {
        let p = JunctionParams {
            critical_current_ua,
            capacitance_pf,
            josephson_energy,
            charging_energy,
        };
        if p.charging_energy / p.josephson_energy > 1e-3 {
            log::warn!(
                "E_c/E_J = {:.3e} is not small; the phase-qubit picture may not apply",
                p.charging_energy / p.josephson_energy
            );
        }
        p
    }

    /// The large-area junction used throughout the storage and transfer
    /// simulations: I₀ = 21 µA, C = 6 pF with E_J = 43.05 meV and
    /// E_c = 53.33 neV as tabulated for that device.
    pub fn reference_device() -> Self {
        Self::with_energies(
            21.0,
            6.0,
            Energy::from_milli_ev(43.05),
            Energy::from_nano_ev(53.33),
        )
    }

    pub fn ej(&self) -> f64 {
        self.josephson_energy.rad_per_ns()
    }

    pub fn ec(&self) -> f64 {
        self.charging_energy.rad_per_ns()
    }

    pub fn check_bias(s: f64) -> Result<(), JunctionError> {
        if (0.0..1.0).contains(&s) {
            Ok(())
        } else {
            Err(JunctionError::BiasOutOfRange(s))
        }
    }

    /// Washboard potential `U(δ) = −E_J (cos δ + s δ)`.
    pub fn potential(&self, s: f64, delta: f64) -> Result<Energy, JunctionError> {
        Self::check_bias(s)?;
        Ok(-self.josephson_energy * (delta.cos() + s * delta))
    }

    pub fn delta_min(&self, s: f64) -> Result<f64, JunctionError> {
        Self::check_bias(s)?;
        Ok(s.asin())
    }

    pub fn delta_max(&self, s: f64) -> Result<f64, JunctionError> {
        Self::check_bias(s)?;
        Ok(std::f64::consts::PI - s.asin())
    }

    /// Well depth `ΔU = 2E_J [sqrt(1−s²) − s arccos s]`.
    pub fn barrier_height(&self, s: f64) -> Result<Energy, JunctionError> {
        Self::check_bias(s)?;
        Ok(2.0 * self.josephson_energy * ((1.0 - s * s).sqrt() - s * s.acos()))
    }

    /// ω_p0 = sqrt(2 E_c E_J) / ħ in rad/ns.
    pub fn zero_bias_plasma_frequency(&self) -> f64 {
        (2.0 * self.ec() * self.ej()).sqrt()
    }

    /// ω_p = ω_p0 (1 − s²)^{1/4} in rad/ns.
    pub fn plasma_frequency(&self, s: f64) -> Result<f64, JunctionError> {
        Self::check_bias(s)?;
        Ok(self.zero_bias_plasma_frequency() * (1.0 - s * s).powf(0.25))
    }

    /// Oscillator width `ℓ_s = (2E_c/E_J)^{1/4} (1 − s²)^{−1/8}`.
    pub fn length_scale(&self, s: f64) -> Result<f64, JunctionError> {
        Self::check_bias(s)?;
        Ok((2.0 * self.ec() / self.ej()).powf(0.25) * (1.0 - s * s).powf(-0.125))
    }

    /// Anharmonic remainder `U(δ_min + y) − U(δ_min) − ½ U''(δ_min) y²`.
    fn anharmonic_remainder(&self, s: f64, y: f64) -> f64 {
        let c = (1.0 - s * s).sqrt();
        // cos y − 1 + y²/2 and y − sin y without cancellation for small y
        let (a, b) = if y.abs() < 0.1 {
            let y2 = y * y;
            let a = y2 * y2 / 24.0 * (1.0 - y2 / 30.0 * (1.0 - y2 / 56.0 * (1.0 - y2 / 90.0)));
            let b = y2 * y / 6.0 * (1.0 - y2 / 20.0 * (1.0 - y2 / 42.0 * (1.0 - y2 / 72.0)));
            (a, b)
        } else {
            (y.cos() - 1.0 + 0.5 * y * y, y - y.sin())
        };
        -self.ej() * (c * a + s * b)
    }
}

/// How many oscillator functions to diagonalize in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisPolicy {
    /// Every oscillator state whose `⟨φ_k|H_J|φ_k⟩` lies below `U(δ_max)`,
    /// with a floor of [`MIN_BASIS`].
    BelowBarrier,
    /// A fixed number of oscillator states (at least [`MIN_BASIS`]).
    Count(usize),
    /// The [`BelowBarrier`](Self::BelowBarrier) rule, limited to at most this
    /// many states. A fixed count alone is unsafe near s = 1, where oscillator
    /// functions reach past the barrier into the lower continuum.
    Capped(usize),
}

/// The bias-dependent eigensystem of one junction.
///
/// Eigenvector signs are fixed so that the ground state has a positive
/// overlap with the lowest oscillator function and every first off-diagonal
/// dipole element `x_{m,m+1}` is positive.
#[derive(Clone, Debug)]
pub struct JunctionSpectrum {
    pub s: f64,
    /// All eigenvalues of the truncated problem, ascending, relative to U(δ_min).
    pub energies: Vec<f64>,
    /// `x_{mm'} = ⟨m|δ|m'⟩` over the retained levels.
    pub dipole: DMatrix<f64>,
    /// `⟨m|∂/∂s|m'⟩` over the retained levels, from `−E_J x_{mm'}/(ε_{m'} − ε_m)`.
    pub dds: DMatrix<f64>,
    pub plasma_frequency: f64,
    pub length_scale: f64,
    pub delta_min: f64,
    pub barrier_height: f64,
    pub charging_energy: f64,
    pub basis_size: usize,
    /// Σ_n (ε_n − ε_m)|x_{mn}|² over the full truncated spectrum, per retained level.
    pub oscillator_sums: Vec<f64>,
    /// Oscillator-basis coefficients of the retained levels (basis_size × levels).
    pub eigenvectors: DMatrix<f64>,
}

impl JunctionSpectrum {
    pub fn levels(&self) -> usize {
        self.dipole.nrows()
    }

    /// Qubit level spacing ΔE = ε₁ − ε₀.
    pub fn level_spacing(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    /// ε_m / ħω_p for the retained levels.
    pub fn scaled_energies(&self) -> Vec<f64> {
        self.energies[..self.levels()]
            .iter()
            .map(|e| e / self.plasma_frequency)
            .collect()
    }

    /// Number of eigenvalues below the barrier top.
    pub fn bound_levels(&self) -> usize {
        self.energies.iter().filter(|&&e| e < self.barrier_height).count()
    }

    /// Values of eigenfunction `m` (normalized in δ) at the given phases.
    pub fn eigenfunction_values(&self, m: usize, deltas: &[f64]) -> Vec<f64> {
        let n = self.basis_size;
        let norm = self.length_scale.powf(-0.5);
        deltas
            .iter()
            .map(|&d| {
                let xi = (d - self.delta_min) / self.length_scale;
                let (mant, logs) = scaled_hermite_functions(xi, n);
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.eigenvectors[(k, m)] * mant[k] * logs[k].exp();
                }
                acc * norm
            })
            .collect()
    }
}

/// Oscillator-basis size selected by `policy` at bias `s`.
pub fn basis_size(params: &JunctionParams, s: f64, policy: BasisPolicy) -> Result<usize, JunctionError> {
    JunctionParams::check_bias(s)?;
    match policy {
        BasisPolicy::Count(n) if n < MIN_BASIS => Err(JunctionError::BasisTooSmall(n)),
        BasisPolicy::Count(n) => Ok(n),
        BasisPolicy::Capped(n) if n < MIN_BASIS => Err(JunctionError::BasisTooSmall(n)),
        BasisPolicy::Capped(n) => {
            let wp = params.plasma_frequency(s)?;
            let du = params.barrier_height(s)?.rad_per_ns();
            // ⟨φ_k|H_J|φ_k⟩ never exceeds (k + ½)ħω_p: the even part of the
            // remainder is negative and the odd part averages out. A well this
            // deep therefore holds more than n rule states.
            if du / wp > n as f64 + 1.0 {
                Ok(n)
            } else {
                Ok(basis_size(params, s, BasisPolicy::BelowBarrier)?.min(n))
            }
        }
        BasisPolicy::BelowBarrier => {
            let wp = params.plasma_frequency(s)?;
            let du = params.barrier_height(s)?.rad_per_ns();
            // the quartic term lowers ⟨H_J⟩ below the harmonic ladder, so probe wider
            let trial = ((1.3 * du / wp).ceil() as usize + MIN_BASIS).max(MIN_BASIS);
            let diag = diagonal_expectations(params, s, trial)?;
            let count = diag.iter().take_while(|&&e| e < du).count();
            Ok(count.max(MIN_BASIS))
        }
    }
}

fn diagonal_expectations(params: &JunctionParams, s: f64, n: usize) -> Result<Vec<f64>, JunctionError> {
    let wp = params.plasma_frequency(s)?;
    let ell = params.length_scale(s)?;
    let gh = GaussHermite::new(2 * n + 8);
    let q = gh.weighted_functions(n);
    let v: Vec<f64> = gh.nodes().iter().map(|&x| params.anharmonic_remainder(s, ell * x)).collect();
    Ok((0..n)
        .map(|k| {
            let mut acc = wp * (k as f64 + 0.5);
            for (i, vi) in v.iter().enumerate() {
                acc += q[(i, k)] * q[(i, k)] * vi;
            }
            acc
        })
        .collect())
}

/// `H_J − U(δ_min)` in the first `n` oscillator functions at bias `s` (rad/ns).
pub fn oscillator_hamiltonian(params: &JunctionParams, s: f64, n: usize) -> Result<DMatrix<f64>, JunctionError> {
    let wp = params.plasma_frequency(s)?;
    let ell = params.length_scale(s)?;
    let gh = GaussHermite::new(2 * n + 8);
    let q = gh.weighted_functions(n);
    let mut qv = q.clone();
    for (i, &x) in gh.nodes().iter().enumerate() {
        let v = params.anharmonic_remainder(s, ell * x);
        qv.row_mut(i).scale_mut(v);
    }
    let mut h = q.tr_mul(&qv);
    for k in 0..n {
        h[(k, k)] += wp * (k as f64 + 0.5);
    }
    // symmetrize away rounding
    let ht = h.transpose();
    h += ht;
    h *= 0.5;
    Ok(h)
}

/// Position operator δ in the first `n` oscillator functions.
pub fn oscillator_position(delta_min: f64, ell: f64, n: usize) -> DMatrix<f64> {
    let mut x = DMatrix::from_diagonal_element(n, n, delta_min);
    for k in 0..n.saturating_sub(1) {
        let v = ell * ((k + 1) as f64 / 2.0).sqrt();
        x[(k, k + 1)] = v;
        x[(k + 1, k)] = v;
    }
    x
}

/// Diagonalize the junction at bias `s`, keeping [`DEFAULT_LEVELS`] levels.
pub fn diagonalize(params: &JunctionParams, s: f64, policy: BasisPolicy) -> Result<JunctionSpectrum, JunctionError> {
    let n = basis_size(params, s, policy)?;
    diagonalize_levels(params, s, policy, DEFAULT_LEVELS.min(n))
}

/// Diagonalize the junction at bias `s`, keeping the lowest `levels` levels.
pub fn diagonalize_levels(
    params: &JunctionParams,
    s: f64,
    policy: BasisPolicy,
    levels: usize,
) -> Result<JunctionSpectrum, JunctionError> {
    let n = basis_size(params, s, policy)?;
    if levels > n {
        return Err(JunctionError::TooManyLevels { requested: levels, available: n });
    }
    let wp = params.plasma_frequency(s)?;
    let ell = params.length_scale(s)?;
    let dmin = s.asin();
    let du = params.barrier_height(s)?.rad_per_ns();

    let h = oscillator_hamiltonian(params, s, n)?;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }

    let found = energies.iter().filter(|&&e| e < du).count();
    if found < 4 {
        return Err(JunctionError::Convergence { s, basis: n, found });
    }

    let xop = oscillator_position(dmin, ell, n);
    // sign convention: ground state overlaps φ_0 positively, x_{m,m+1} > 0
    if vecs[(0, 0)] < 0.0 {
        vecs.column_mut(0).neg_mut();
    }
    for m in 1..n {
        let prev = vecs.column(m - 1);
        let cur = vecs.column(m);
        let x = (xop.tr_mul(&prev)).dot(&cur);
        let flip = if m < levels || x.abs() > 1e-12 {
            x < 0.0
        } else {
            // beyond the retained set fall back to the largest component
            let imax = cur.iamax();
            cur[imax] < 0.0
        };
        if flip {
            vecs.column_mut(m).neg_mut();
        }
    }

    let low = vecs.columns(0, levels).into_owned();
    let x_low_all = low.tr_mul(&(&xop * &vecs)); // levels × n
    let dipole = x_low_all.columns(0, levels).into_owned();
    let oscillator_sums: Vec<f64> = (0..levels)
        .map(|m| {
            (0..n)
                .map(|k| (energies[k] - energies[m]) * x_low_all[(m, k)].powi(2))
                .sum()
        })
        .collect();

    let ej = params.ej();
    let mut dds = DMatrix::zeros(levels, levels);
    for m in 0..levels {
        for mp in 0..levels {
            if m != mp {
                dds[(m, mp)] = -ej * dipole[(m, mp)] / (energies[mp] - energies[m]);
            }
        }
    }

    Ok(JunctionSpectrum {
        s,
        energies,
        dipole,
        dds,
        plasma_frequency: wp,
        length_scale: ell,
        delta_min: dmin,
        barrier_height: du,
        charging_energy: params.ec(),
        basis_size: n,
        oscillator_sums,
        eigenvectors: low,
    })
}

/// Route used by [`dds_matrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DdsMethod {
    /// Closed form for oscillator eigenfunctions (two bands, zero diagonal).
    AnalyticHarmonic,
    /// Central differences of sign-fixed eigenfunctions, adaptive step.
    FiniteDifference,
    /// `−E_J x_{mm'} / (ε_{m'} − ε_m)` from a single diagonalization.
    Spectral,
}

/// Default starting step for [`DdsMethod::FiniteDifference`].
pub const FD_INITIAL_STEP: f64 = 1e-5;
/// Successive halvings stop once the largest element change drops below this.
pub const FD_TOLERANCE: f64 = 1e-6;

/// `d ℓ_s / ds = s ℓ_s / 4(1 − s²)`.
pub fn length_scale_derivative(params: &JunctionParams, s: f64) -> Result<f64, JunctionError> {
    let ell = params.length_scale(s)?;
    Ok(s * ell / (4.0 * (1.0 - s * s)))
}

/// Matrix of `⟨m|∂/∂s|m'⟩` over the lowest `levels` junction states.
pub fn dds_matrix(
    params: &JunctionParams,
    s: f64,
    method: DdsMethod,
    policy: BasisPolicy,
    levels: usize,
) -> Result<DMatrix<f64>, JunctionError> {
    match method {
        DdsMethod::AnalyticHarmonic => {
            let ell = params.length_scale(s)?;
            let band1 = 1.0 / (ell * (1.0 - s * s).sqrt());
            let band2 = length_scale_derivative(params, s)? / ell;
            let mut d = DMatrix::zeros(levels, levels);
            for mp in 0..levels {
                let mpf = mp as f64;
                if mp + 1 < levels {
                    d[(mp + 1, mp)] = band1 * ((mpf + 1.0) / 2.0).sqrt();
                }
                if mp >= 1 {
                    d[(mp - 1, mp)] = -band1 * (mpf / 2.0).sqrt();
                }
                if mp + 2 < levels {
                    d[(mp + 2, mp)] = band2 * ((mpf + 1.0) * (mpf + 2.0)).sqrt() / 2.0;
                }
                if mp >= 2 {
                    d[(mp - 2, mp)] = -band2 * (mpf * (mpf - 1.0)).sqrt() / 2.0;
                }
            }
            Ok(d)
        }
        DdsMethod::Spectral => {
            let sp = diagonalize_levels(params, s, policy, levels)?;
            Ok(sp.dds)
        }
        DdsMethod::FiniteDifference => finite_difference_dds(params, s, policy, levels),
    }
}

fn overlap_grid(center: f64, ell: f64) -> (Vec<f64>, f64) {
    const POINTS: usize = 4001;
    let half = 14.0 * ell;
    let step = 2.0 * half / (POINTS - 1) as f64;
    ((0..POINTS).map(|i| center - half + step * i as f64).collect(), step)
}

fn eigenfunction_table(sp: &JunctionSpectrum, grid: &[f64], levels: usize) -> Vec<Vec<f64>> {
    (0..levels).map(|m| sp.eigenfunction_values(m, grid)).collect()
}

fn overlaps(a: &[Vec<f64>], b: &[Vec<f64>], step: f64) -> DMatrix<f64> {
    let levels = a.len();
    // trapezoid; the integrands vanish at the grid ends
    DMatrix::from_fn(levels, levels, |m, mp| {
        a[m].iter().zip(&b[mp]).map(|(x, y)| x * y).sum::<f64>() * step
    })
}

fn finite_difference_dds(
    params: &JunctionParams,
    s: f64,
    policy: BasisPolicy,
    levels: usize,
) -> Result<DMatrix<f64>, JunctionError> {
    let center = diagonalize_levels(params, s, policy, levels)?;
    let (grid, step) = overlap_grid(center.delta_min, center.length_scale);
    let base = eigenfunction_table(&center, &grid, levels);

    let estimate = |h: f64| -> Result<DMatrix<f64>, JunctionError> {
        if s - h < 0.0 || s + h >= 1.0 {
            return Err(JunctionError::StencilOutOfRange { s, h });
        }
        let plus = diagonalize_levels(params, s + h, policy, levels)?;
        let minus = diagonalize_levels(params, s - h, policy, levels)?;
        let op = overlaps(&base, &eigenfunction_table(&plus, &grid, levels), step);
        let om = overlaps(&base, &eigenfunction_table(&minus, &grid, levels), step);
        Ok((op - om) / (2.0 * h))
    };

    let mut h = FD_INITIAL_STEP;
    let mut current = estimate(h)?;
    while h > 1e-9 {
        let refined = estimate(h / 2.0)?;
        let change = (&refined - &current).amax();
        current = refined;
        h /= 2.0;
        if change < FD_TOLERANCE {
            break;
        }
    }
    Ok(current)
}
