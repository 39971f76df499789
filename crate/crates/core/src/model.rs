//! Physical model: system configuration, Gaussian drive pulses, coherent
//! Hamiltonian, dissipator, jump operators, effective non-Hermitian
//! Hamiltonian, and the collective decay spectrum.
//!
//! Units: gamma_1d sets the rate scale (1 in all presets), time is measured
//! in its inverse, positions in units of the e-f resonance wavelength, and
//! hbar = c = 1. Everything lives in the frame rotating at the e-f
//! transition with a resonant drive, so no bare frequencies appear.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{
    basis_dim, transition_operator, DensityMatrix, Level, OperatorMatrix, StateVector,
};

const TAU: f64 = 2.0 * PI;

/// Truncation half-width of the Gaussian pulse envelope, in units of 1/delta.
/// exp(-12.5) ~ 3.7e-6 of peak amplitude; the clipped area is negligible.
pub const PULSE_TRUNCATION: f64 = 5.0;

/// Guard on the minimum pulse period, in units of 1/gamma_1d: a bundle must
/// have fully decayed well before the next pulse arrives.
const BUNDLE_DURATION_GUARD: f64 = 0.5;

/// Static description of the emitter chain and its decay channels.
///
/// `gamma_1d` is the single-emitter e->f rate into the waveguide (both
/// directions combined), `gamma` the free-space e->g rate, and `gamma_f` the
/// effective f->g cascade rate. `pumped` lists the 1-based emitters that
/// receive drive pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_emitters: usize,
    /// Emitter positions along the waveguide, in wavelength units.
    pub positions: Vec<f64>,
    pub gamma_1d: f64,
    pub gamma: f64,
    pub gamma_f: f64,
    pub pumped: Vec<usize>,
}

impl SystemConfig {
    pub fn new(
        n_emitters: usize,
        positions: Vec<f64>,
        gamma_1d: f64,
        gamma: f64,
        gamma_f: f64,
        pumped: Vec<usize>,
    ) -> Result<SystemConfig> {
        let cfg = SystemConfig {
            n_emitters,
            positions,
            gamma_1d,
            gamma,
            gamma_f,
            pumped,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Evenly spaced chain with all emitters pumped and the demo rate set
    /// (gamma = 0.05, gamma_f = 2, in units of gamma_1d = 1).
    pub fn chain(n_emitters: usize, spacing: f64) -> Result<SystemConfig> {
        let positions = (0..n_emitters).map(|j| j as f64 * spacing).collect();
        SystemConfig::new(
            n_emitters,
            positions,
            1.0,
            0.05,
            2.0,
            (1..=n_emitters).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        basis_dim(self.n_emitters)?;
        if self.n_emitters == 0 {
            return Err(Error::InvalidConfig("n_emitters must be positive".into()));
        }
        if self.positions.len() != self.n_emitters {
            return Err(Error::InvalidConfig(format!(
                "expected {} positions, got {}",
                self.n_emitters,
                self.positions.len()
            )));
        }
        if !self.positions.iter().all(|z| z.is_finite()) {
            return Err(Error::InvalidConfig("positions must be finite".into()));
        }
        for (name, rate) in [
            ("gamma_1d", self.gamma_1d),
            ("gamma", self.gamma),
            ("gamma_f", self.gamma_f),
        ] {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "rate {name} = {rate} must be finite and >= 0"
                )));
            }
        }
        let mut seen = vec![false; self.n_emitters + 1];
        for &j in &self.pumped {
            if j == 0 || j > self.n_emitters {
                return Err(Error::EmitterOutOfRange {
                    index: j,
                    count: self.n_emitters,
                });
            }
            if seen[j] {
                return Err(Error::InvalidConfig(format!(
                    "emitter {j} listed twice in pumped set"
                )));
            }
            seen[j] = true;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        3usize.pow(self.n_emitters as u32)
    }

    /// k_a |z_j - z_l| for 1-based emitter indices, reduced to (-pi, pi] so
    /// that integer-wavelength separations give exactly vanishing sines.
    pub fn phase_distance(&self, j: usize, l: usize) -> f64 {
        reduced_phase((self.positions[j - 1] - self.positions[l - 1]).abs())
    }

    /// k_a z_j for a 1-based emitter index, reduced the same way.
    pub fn phase_position(&self, j: usize) -> f64 {
        reduced_phase(self.positions[j - 1])
    }
}

/// 2 pi z reduced by the integer part of z: exact for whole wavelengths and
/// equivalent modulo the period everywhere else.
fn reduced_phase(z: f64) -> f64 {
    TAU * (z - z.round())
}

/// A Gaussian drive pulse aimed at one emitter.
///
/// The envelope is `A exp(-delta^2 (t - t_peak)^2 / 2) e^{i phase}` with `A`
/// fixed by the mean photon number: the squared envelope integrates to
/// `nbar`, giving `A = sqrt(nbar * delta) / pi^(1/4)`. Support is truncated
/// to `|t - t_peak| <= 5/delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    /// 1-based target emitter.
    pub target: usize,
    /// Mean photon number of the drive pulse.
    pub nbar: f64,
    /// Spectral width, in units of gamma_1d.
    pub delta: f64,
    /// Arrival time of the envelope maximum.
    pub t_peak: f64,
    /// Constant drive phase (a global phase; populations do not depend on it).
    pub phase: f64,
}

impl PulseSpec {
    pub fn new(target: usize, nbar: f64, delta: f64, t_peak: f64) -> PulseSpec {
        PulseSpec {
            target,
            nbar,
            delta,
            t_peak,
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nbar > 0.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(
                "pulse nbar and delta must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Peak envelope amplitude `sqrt(nbar * delta) / pi^(1/4)`.
    pub fn peak_amplitude(&self) -> f64 {
        (self.nbar * self.delta).sqrt() / PI.powf(0.25)
    }

    /// Truncated support interval.
    pub fn window(&self) -> (f64, f64) {
        let half = PULSE_TRUNCATION / self.delta;
        (self.t_peak - half, self.t_peak + half)
    }

    /// Complex envelope at time `t`; zero outside the truncation window.
    pub fn amplitude(&self, t: f64) -> C64 {
        let tau = t - self.t_peak;
        if tau.abs() > PULSE_TRUNCATION / self.delta {
            return C64::ZERO;
        }
        let envelope = self.peak_amplitude() * (-0.5 * (self.delta * tau).powi(2)).exp();
        C64::from_polar(envelope, self.phase)
    }
}

/// Envelope of a pulse at time `t` (free-function form of
/// [`PulseSpec::amplitude`]).
pub fn pulse_amplitude(pulse: &PulseSpec, t: f64) -> C64 {
    pulse.amplitude(t)
}

/// A repeated set of synchronized pulses, one per pumped emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    pub base: Vec<PulseSpec>,
    /// Repetition period, in units of 1/gamma_1d. Ignored for a single shot.
    pub period: f64,
    pub repetitions: usize,
}

impl PulseTrain {
    pub fn new(base: Vec<PulseSpec>, period: f64, repetitions: usize) -> PulseTrain {
        PulseTrain {
            base,
            period,
            repetitions,
        }
    }

    /// Single synchronized shot of identical pulses on every pumped emitter.
    pub fn single_shot(cfg: &SystemConfig, nbar: f64, delta: f64, t_peak: f64) -> PulseTrain {
        PulseTrain::repeated(cfg, nbar, delta, t_peak, 0.0, 1)
    }

    pub fn repeated(
        cfg: &SystemConfig,
        nbar: f64,
        delta: f64,
        first_peak: f64,
        period: f64,
        repetitions: usize,
    ) -> PulseTrain {
        let base = cfg
            .pumped
            .iter()
            .map(|&j| PulseSpec::new(j, nbar, delta, first_peak))
            .collect();
        PulseTrain::new(base, period, repetitions)
    }

    /// Train with no pulses at all (free decay).
    pub fn none() -> PulseTrain {
        PulseTrain::new(Vec::new(), 0.0, 1)
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        for pulse in &self.base {
            pulse.validate()?;
            if pulse.target == 0 || pulse.target > cfg.n_emitters {
                return Err(Error::EmitterOutOfRange {
                    index: pulse.target,
                    count: cfg.n_emitters,
                });
            }
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.repetitions > 1 {
            let widest = self
                .base
                .iter()
                .map(|p| PULSE_TRUNCATION / p.delta)
                .fold(0.0f64, f64::max);
            let floor = 10.0 * (widest + BUNDLE_DURATION_GUARD);
            if self.period <= floor {
                return Err(Error::InvalidConfig(format!(
                    "pulse period {} too short; bundles need > {floor:.2} between pulses",
                    self.period
                )));
            }
        }
        Ok(())
    }

    /// Total drive envelope seen by emitter `j` (1-based) at time `t`.
    pub fn amplitude_for(&self, j: usize, t: f64) -> C64 {
        let mut total = C64::ZERO;
        for pulse in self.base.iter().filter(|p| p.target == j) {
            for rep in 0..self.repetitions {
                let mut shifted = pulse.clone();
                shifted.t_peak += rep as f64 * self.period;
                total += shifted.amplitude(t);
            }
        }
        total
    }

    /// Merged, sorted time intervals in which any pulse is active.
    pub fn drive_windows(&self) -> Vec<(f64, f64)> {
        let mut windows: Vec<(f64, f64)> = Vec::new();
        for pulse in &self.base {
            for rep in 0..self.repetitions {
                let shift = rep as f64 * self.period;
                let (lo, hi) = pulse.window();
                windows.push((lo + shift, hi + shift));
            }
        }
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for w in windows {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
                _ => merged.push(w),
            }
        }
        merged
    }

    /// Peak arrival times, one per repetition (using the earliest base peak).
    pub fn peak_times(&self) -> Vec<f64> {
        let first = self
            .base
            .iter()
            .map(|p| p.t_peak)
            .fold(f64::INFINITY, f64::min);
        if !first.is_finite() {
            return Vec::new();
        }
        (0..self.repetitions)
            .map(|r| first + r as f64 * self.period)
            .collect()
    }

    pub fn narrowest_delta(&self) -> Option<f64> {
        self.base
            .iter()
            .map(|p| p.delta)
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Coherent part of the driven Hamiltonian at time `t`:
/// the resonant pump on each driven emitter plus the waveguide-mediated
/// exchange interaction with the sin(k z_jl) kernel. Hermitian for all `t`.
pub fn coherent_hamiltonian(
    cfg: &SystemConfig,
    train: &PulseTrain,
    t: f64,
) -> Result<OperatorMatrix> {
    let dim = cfg.dim();
    let mut total = OperatorMatrix::zero(dim);

    let drive_scale = (cfg.gamma / 2.0).sqrt();
    for &j in &cfg.pumped {
        let alpha = train.amplitude_for(j, t);
        if alpha == C64::ZERO {
            continue;
        }
        let raise = transition_operator(j, Level::E, Level::G, cfg.n_emitters)?;
        let lower = transition_operator(j, Level::G, Level::E, cfg.n_emitters)?;
        total = total.add_scaled(drive_scale * alpha, &raise);
        total = total.add_scaled(drive_scale * alpha.conj(), &lower);
    }

    total = total.add_scaled(C64::ONE, &exchange_hamiltonian(cfg)?);
    Ok(total)
}

/// Waveguide-mediated coherent exchange term alone (vanishes identically at
/// integer-wavelength spacing).
pub fn exchange_hamiltonian(cfg: &SystemConfig) -> Result<OperatorMatrix> {
    let dim = cfg.dim();
    let mut total = OperatorMatrix::zero(dim);
    for j in 1..=cfg.n_emitters {
        for l in 1..=cfg.n_emitters {
            if j == l {
                continue;
            }
            let kernel = (cfg.gamma_1d / 2.0) * cfg.phase_distance(j, l).sin();
            if kernel == 0.0 {
                continue;
            }
            let ef = transition_operator(j, Level::E, Level::F, cfg.n_emitters)?;
            let fe = transition_operator(l, Level::F, Level::E, cfg.n_emitters)?;
            total = total.add_scaled(C64::new(kernel, 0.0), &ef.matmul(&fe));
        }
    }
    Ok(total)
}

/// Collapse operators for the four decay channels.
///
/// The waveguide channels are collective: emission amplitudes from all
/// emitters add with propagation phases `e^{-+ i k z_j}`. Free-space decay is
/// independent per emitter (distant emitters radiate into distinguishable
/// free-space modes), so those channels carry one operator per emitter with
/// the full rates gamma and gamma_f; this is exactly the Lindblad form of the
/// master-equation dissipator.
#[derive(Debug, Clone)]
pub struct JumpOperators {
    /// sqrt(gamma_1d/2) sum_j e^{-i k z_j} sigma_fe^j
    pub right: OperatorMatrix,
    /// sqrt(gamma_1d/2) sum_j e^{+i k z_j} sigma_fe^j
    pub left: OperatorMatrix,
    /// Per pumped-or-not emitter: sqrt(gamma) sigma_ge^j
    pub free_e: Vec<OperatorMatrix>,
    /// Per emitter: sqrt(gamma_f) sigma_gf^j
    pub free_f: Vec<OperatorMatrix>,
}

impl JumpOperators {
    /// All collapse operators in threshold order: the free-space e->g set,
    /// waveguide right, waveguide left, then the f->g cascade set.
    pub fn all(&self) -> Vec<&OperatorMatrix> {
        let mut ops: Vec<&OperatorMatrix> = self.free_e.iter().collect();
        ops.push(&self.right);
        ops.push(&self.left);
        ops.extend(self.free_f.iter());
        ops
    }
}

pub fn jump_operators(cfg: &SystemConfig) -> Result<JumpOperators> {
    let wg_scale = (cfg.gamma_1d / 2.0).sqrt();
    let mut right_parts = Vec::new();
    let mut left_parts = Vec::new();
    for j in 1..=cfg.n_emitters {
        let fe = transition_operator(j, Level::F, Level::E, cfg.n_emitters)?;
        let phase = cfg.phase_position(j);
        right_parts.push((C64::from_polar(wg_scale, -phase), fe.clone()));
        left_parts.push((C64::from_polar(wg_scale, phase), fe));
    }
    let dim = cfg.dim();
    let sum = |parts: Vec<(C64, OperatorMatrix)>| {
        parts
            .into_iter()
            .fold(OperatorMatrix::zero(dim), |acc, (w, op)| {
                acc.add_scaled(w, &op)
            })
    };

    let free_e = (1..=cfg.n_emitters)
        .map(|j| {
            Ok(transition_operator(j, Level::G, Level::E, cfg.n_emitters)?
                .scaled(C64::new(cfg.gamma.sqrt(), 0.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    let free_f = (1..=cfg.n_emitters)
        .map(|j| {
            Ok(transition_operator(j, Level::G, Level::F, cfg.n_emitters)?
                .scaled(C64::new(cfg.gamma_f.sqrt(), 0.0)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(JumpOperators {
        right: sum(right_parts),
        left: sum(left_parts),
        free_e,
        free_f,
    })
}

/// Lindblad dissipator acting on `rho`, assembled directly from the
/// transition-operator algebra: the collective waveguide kernel
/// cos(k z_jl) on e-f pairs plus independent per-emitter e->g and f->g
/// terms at rates gamma and gamma_f. Trace-free by construction.
pub fn dissipator(cfg: &SystemConfig, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            found: rho.dim(),
        });
    }
    let n = cfg.n_emitters;
    let mut out = DensityMatrix::zeros(n)?;
    let mut scratch_a = DensityMatrix::zeros(n)?;
    let mut scratch_b = DensityMatrix::zeros(n)?;

    // -(w/2) * (A B rho + rho A B - 2 B rho A), accumulated into `out`.
    let mut lindblad_pair = |a: &OperatorMatrix, b: &OperatorMatrix, w: f64| {
        let ab = a.matmul(b);
        ab.mul_dense(rho, &mut scratch_a);
        out.add_scaled(C64::new(-w / 2.0, 0.0), &scratch_a);
        ab.mul_dense_right(rho, &mut scratch_a);
        out.add_scaled(C64::new(-w / 2.0, 0.0), &scratch_a);
        b.mul_dense(rho, &mut scratch_a);
        a.mul_dense_right(&scratch_a, &mut scratch_b);
        out.add_scaled(C64::new(w, 0.0), &scratch_b);
    };

    for j in 1..=n {
        for l in 1..=n {
            let kernel = cfg.gamma_1d * cfg.phase_distance(j, l).cos();
            if kernel != 0.0 {
                let ef_j = transition_operator(j, Level::E, Level::F, n)?;
                let fe_l = transition_operator(l, Level::F, Level::E, n)?;
                lindblad_pair(&ef_j, &fe_l, kernel);
            }
        }
        let eg = transition_operator(j, Level::E, Level::G, n)?;
        let ge = transition_operator(j, Level::G, Level::E, n)?;
        lindblad_pair(&eg, &ge, cfg.gamma);
        let fg = transition_operator(j, Level::F, Level::G, n)?;
        let gf = transition_operator(j, Level::G, Level::F, n)?;
        lindblad_pair(&fg, &gf, cfg.gamma_f);
    }
    Ok(out)
}

/// Non-Hermitian effective Hamiltonian
/// `H_coh(t) - (i/2) sum_beta J_beta^+ J_beta^-`. Its anti-Hermitian part is
/// negative semidefinite.
pub fn effective_hamiltonian(
    cfg: &SystemConfig,
    train: &PulseTrain,
    t: f64,
) -> Result<OperatorMatrix> {
    let mut total = coherent_hamiltonian(cfg, train, t)?;
    let jumps = jump_operators(cfg)?;
    for op in jumps.all() {
        let k = op.dagger().matmul(op);
        total = total.add_scaled(C64::new(0.0, -0.5), &k);
    }
    Ok(total)
}

/// One eigenmode of the collective e-f decay problem.
///
/// `amplitudes` live on the 2^n_active basis of the active emitters'
/// {f, e} subspace, little-endian with bit = 1 meaning |e>. The decay rate is
/// for the amplitude; populations decay at twice this rate.
#[derive(Debug, Clone)]
pub struct CollectiveMode {
    /// Energy shift relative to the rotating frame, in units of gamma_1d.
    pub energy_shift: f64,
    /// Amplitude decay rate, >= 0 up to solver noise.
    pub amp_decay: f64,
    /// Number of emitters in |e> (conserved by the e-f exchange).
    pub excitation_number: usize,
    pub amplitudes: Vec<C64>,
}

impl CollectiveMode {
    /// Embed into the full 3^n space: active emitters take their f/e
    /// amplitudes, all other emitters sit in |g>.
    pub fn embed(&self, n_emitters: usize, active: &[usize]) -> Result<StateVector> {
        let mut psi = StateVector::zeros(n_emitters)?;
        for (mask, amp) in self.amplitudes.iter().enumerate() {
            if *amp == C64::ZERO {
                continue;
            }
            let mut levels = vec![Level::G; n_emitters];
            for (bit, &j) in active.iter().enumerate() {
                levels[j - 1] = if mask >> bit & 1 == 1 {
                    Level::E
                } else {
                    Level::F
                };
            }
            psi.amplitudes_mut()[crate::hilbert::basis_index(&levels)] = *amp;
        }
        Ok(psi)
    }
}

/// Diagonalize the collective e-f coupling for the first `n_active` emitters.
///
/// The matrix is `-i (gamma_1d / 2) sum_jl e^{i k z_jl} |..e_j..><..e_l..|`
/// on the 2^n_active space (the bare collective energy is removed by the
/// rotating frame). Modes come back sorted by excitation number, then by
/// descending amplitude decay. Degenerate eigenvalues (within 1e-8) are
/// re-orthonormalized.
pub fn collective_spectrum(cfg: &SystemConfig, n_active: usize) -> Result<Vec<CollectiveMode>> {
    if n_active == 0 || n_active > cfg.n_emitters {
        return Err(Error::InvalidConfig(format!(
            "n_active = {n_active} out of range 1..={}",
            cfg.n_emitters
        )));
    }
    let mut modes = Vec::new();
    for m in 0..=n_active {
        modes.extend(sector_modes(cfg, n_active, m)?);
    }
    Ok(modes)
}

fn sector_modes(cfg: &SystemConfig, n_active: usize, m: usize) -> Result<Vec<CollectiveMode>> {
    // Sector basis: bitmasks over the active emitters with m bits set.
    let masks: Vec<usize> = (0..1usize << n_active)
        .filter(|mask| mask.count_ones() as usize == m)
        .collect();
    let dim = masks.len();
    let index_of = |mask: usize| masks.binary_search(&mask).unwrap();

    if m == 0 {
        return Ok(vec![CollectiveMode {
            energy_shift: 0.0,
            amp_decay: 0.0,
            excitation_number: 0,
            amplitudes: embed_sector(&[C64::ONE], &masks, n_active),
        }]);
    }

    let mut matrix = faer::Mat::<C64>::zeros(dim, dim);
    for (col, &mask) in masks.iter().enumerate() {
        for l in 1..=n_active {
            if mask >> (l - 1) & 1 == 0 {
                continue;
            }
            let lowered = mask & !(1 << (l - 1));
            for j in 1..=n_active {
                if lowered >> (j - 1) & 1 == 1 {
                    continue;
                }
                let raised = lowered | 1 << (j - 1);
                let w = C64::new(0.0, -cfg.gamma_1d / 2.0)
                    * C64::from_polar(1.0, cfg.phase_distance(j, l));
                let row = index_of(raised);
                matrix[(row, col)] += w;
            }
        }
    }

    let evd = faer::linalg::solvers::Eigen::new(matrix.as_ref()).map_err(|_| Error::Eigen)?;
    let mut eigenpairs: Vec<(C64, Vec<C64>)> = (0..dim)
        .map(|k| {
            let value = evd.S()[k];
            let mut vector: Vec<C64> = (0..dim).map(|i| evd.U()[(i, k)]).collect();
            let norm = vector.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            for a in &mut vector {
                *a /= norm;
            }
            (value, vector)
        })
        .collect();

    // Group degenerate eigenvalues and orthonormalize within each group,
    // ordering group members lexicographically by basis support.
    eigenpairs.sort_by(|a, b| a.0.im.total_cmp(&b.0.im).then(a.0.re.total_cmp(&b.0.re)));
    let mut groups: Vec<Vec<(C64, Vec<C64>)>> = Vec::new();
    for pair in eigenpairs {
        match groups.last_mut() {
            Some(group) if (group[0].0 - pair.0).norm() < 1e-8 => group.push(pair),
            _ => groups.push(vec![pair]),
        }
    }

    let mut modes = Vec::new();
    for mut group in groups {
        group.sort_by(|a, b| support_key(&a.1).cmp(&support_key(&b.1)));
        let mut ortho: Vec<Vec<C64>> = Vec::new();
        for (value, mut vector) in group {
            for prev in &ortho {
                let overlap: C64 = prev.iter().zip(&vector).map(|(p, v)| p.conj() * v).sum();
                for (v, p) in vector.iter_mut().zip(prev) {
                    *v -= overlap * p;
                }
            }
            let norm = vector.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-10 {
                continue;
            }
            for a in &mut vector {
                *a /= norm;
            }
            canonical_phase(&mut vector);
            ortho.push(vector.clone());
            modes.push(CollectiveMode {
                energy_shift: value.re,
                amp_decay: -value.im,
                excitation_number: m,
                amplitudes: embed_sector(&vector, &masks, n_active),
            });
        }
    }
    modes.sort_by(|a, b| b.amp_decay.total_cmp(&a.amp_decay));
    Ok(modes)
}

/// Expand a sector-basis vector onto the full 2^n_active f/e space.
fn embed_sector(vector: &[C64], masks: &[usize], n_active: usize) -> Vec<C64> {
    let mut amplitudes = vec![C64::ZERO; 1 << n_active];
    for (i, &mask) in masks.iter().enumerate() {
        amplitudes[mask] = vector[i];
    }
    amplitudes
}

fn support_key(vector: &[C64]) -> Vec<usize> {
    vector
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > 1e-10)
        .map(|(i, _)| i)
        .collect()
}

/// Fix the global phase: largest-magnitude amplitude becomes real positive.
fn canonical_phase(vector: &mut [C64]) {
    let mut pivot = 0;
    let mut best = 0.0;
    for (i, a) in vector.iter().enumerate() {
        let mag = a.norm();
        if mag > best + 1e-12 {
            best = mag;
            pivot = i;
        }
    }
    let phase = vector[pivot] / vector[pivot].norm();
    for a in vector.iter_mut() {
        *a /= phase;
    }
}

/// Uniform superposition of the active emitters with exactly `m` in |e>
/// and the rest in |f>, everything else in |g>.
pub fn symmetric_state(n_emitters: usize, active: &[usize], m: usize) -> Result<StateVector> {
    let n_active = active.len();
    let masks: Vec<usize> = (0..1usize << n_active)
        .filter(|mask| mask.count_ones() as usize == m)
        .collect();
    let weight = C64::new(1.0 / (masks.len() as f64).sqrt(), 0.0);
    let mut psi = StateVector::zeros(n_emitters)?;
    for mask in masks {
        let mut levels = vec![Level::G; n_emitters];
        for (bit, &j) in active.iter().enumerate() {
            levels[j - 1] = if mask >> bit & 1 == 1 {
                Level::E
            } else {
                Level::F
            };
        }
        psi.amplitudes_mut()[crate::hilbert::basis_index(&levels)] = weight;
    }
    Ok(psi)
}

/// Sparse projector |psi><psi| (drops amplitudes below 1e-14).
pub fn projector(psi: &StateVector) -> OperatorMatrix {
    let mut triplets = Vec::new();
    for (r, a) in psi.amplitudes().iter().enumerate() {
        if a.norm() < 1e-14 {
            continue;
        }
        for (c, b) in psi.amplitudes().iter().enumerate() {
            if b.norm() < 1e-14 {
                continue;
            }
            triplets.push((r, c, a * b.conj()));
        }
    }
    OperatorMatrix::from_triplets(psi.dim(), triplets)
}

/// Total waveguide emission operator J_R^+ J_R^- + J_L^+ J_L^-.
pub fn waveguide_intensity_operator(cfg: &SystemConfig) -> Result<OperatorMatrix> {
    let jumps = jump_operators(cfg)?;
    let kr = jumps.right.dagger().matmul(&jumps.right);
    let kl = jumps.left.dagger().matmul(&jumps.left);
    Ok(kr.add_scaled(C64::ONE, &kl))
}

/// Population operator sum_j sigma_ee^j.
pub fn excited_population_operator(cfg: &SystemConfig) -> Result<OperatorMatrix> {
    let mut total = OperatorMatrix::zero(cfg.dim());
    for j in 1..=cfg.n_emitters {
        let ee = transition_operator(j, Level::E, Level::E, cfg.n_emitters)?;
        total = total.add_scaled(C64::ONE, &ee);
    }
    Ok(total)
}

/// Identifies which decay channel a collapse operator belongs to. Free-space
/// channels carry the 1-based emitter that decayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpChannel {
    Right,
    Left,
    FreeE(usize),
    FreeF(usize),
}

/// Pre-assembled operator set shared by the master-equation integrator and
/// the trajectory engine, so hot loops never rebuild sparse matrices.
#[derive(Debug, Clone)]
pub struct ModelOperators {
    pub cfg: SystemConfig,
    pub train: PulseTrain,
    /// sqrt(gamma/2), the pump coupling strength.
    pub drive_scale: f64,
    /// (emitter, sigma_eg^j, sigma_ge^j) for each pumped emitter.
    pub drive: Vec<(usize, OperatorMatrix, OperatorMatrix)>,
    /// Static coherent exchange term (no drive).
    pub exchange: OperatorMatrix,
    /// Collapse operators in threshold order: free-space e->g per emitter,
    /// waveguide right, waveguide left, f->g per emitter.
    pub jumps: Vec<(JumpChannel, OperatorMatrix)>,
    /// Conjugate transpose of each entry of `jumps`, same order.
    pub jump_daggers: Vec<OperatorMatrix>,
    /// J^+ J^- for each entry of `jumps`, same order.
    pub rate_ops: Vec<OperatorMatrix>,
    /// J_R^+ J_R^- + J_L^+ J_L^- (waveguide intensity observable).
    pub waveguide_intensity: OperatorMatrix,
    /// Static part of the effective Hamiltonian:
    /// exchange - (i/2) sum_beta J_beta^+ J_beta^-.
    pub h_static: OperatorMatrix,
    /// Diagonal weights gamma * (#e digits) per basis state: the total
    /// free-space e->g rate of each basis state.
    pub weight_free_e: Vec<f64>,
    /// Diagonal weights gamma_f * (#f digits) per basis state.
    pub weight_free_f: Vec<f64>,
    /// Merged drive windows.
    pub drive_windows: Vec<(f64, f64)>,
}

impl ModelOperators {
    pub fn new(cfg: &SystemConfig, train: &PulseTrain) -> Result<ModelOperators> {
        cfg.validate()?;
        train.validate(cfg)?;
        let dim = cfg.dim();
        let n = cfg.n_emitters;

        let drive = cfg
            .pumped
            .iter()
            .map(|&j| {
                Ok((
                    j,
                    transition_operator(j, Level::E, Level::G, n)?,
                    transition_operator(j, Level::G, Level::E, n)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let raw = jump_operators(cfg)?;
        let mut jumps: Vec<(JumpChannel, OperatorMatrix)> = Vec::new();
        for (j, op) in raw.free_e.into_iter().enumerate() {
            jumps.push((JumpChannel::FreeE(j + 1), op));
        }
        jumps.push((JumpChannel::Right, raw.right));
        jumps.push((JumpChannel::Left, raw.left));
        for (j, op) in raw.free_f.into_iter().enumerate() {
            jumps.push((JumpChannel::FreeF(j + 1), op));
        }

        let jump_daggers: Vec<OperatorMatrix> = jumps.iter().map(|(_, op)| op.dagger()).collect();
        let rate_ops: Vec<OperatorMatrix> = jumps
            .iter()
            .zip(&jump_daggers)
            .map(|((_, op), dag)| dag.matmul(op))
            .collect();

        let exchange = exchange_hamiltonian(cfg)?;
        let mut h_static = exchange.clone();
        for k in &rate_ops {
            h_static = h_static.add_scaled(C64::new(0.0, -0.5), k);
        }

        let waveguide_intensity = jumps
            .iter()
            .zip(&rate_ops)
            .filter(|((ch, _), _)| matches!(ch, JumpChannel::Right | JumpChannel::Left))
            .fold(OperatorMatrix::zero(dim), |acc, (_, k)| {
                acc.add_scaled(C64::ONE, k)
            });

        let mut weight_free_e = vec![0.0; dim];
        let mut weight_free_f = vec![0.0; dim];
        for s in 0..dim {
            let levels = crate::hilbert::decode_basis_index(s, n);
            let n_e = levels.iter().filter(|&&l| l == Level::E).count();
            let n_f = levels.iter().filter(|&&l| l == Level::F).count();
            weight_free_e[s] = cfg.gamma * n_e as f64;
            weight_free_f[s] = cfg.gamma_f * n_f as f64;
        }

        Ok(ModelOperators {
            cfg: cfg.clone(),
            train: train.clone(),
            drive_scale: (cfg.gamma / 2.0).sqrt(),
            drive,
            exchange,
            jumps,
            jump_daggers,
            rate_ops,
            waveguide_intensity,
            h_static,
            weight_free_e,
            weight_free_f,
            drive_windows: train.drive_windows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    /// True if any pulse is active at time `t`.
    pub fn driven_at(&self, t: f64) -> bool {
        self.drive_windows
            .iter()
            .any(|&(lo, hi)| t >= lo && t <= hi)
    }

    pub fn right_op(&self) -> &OperatorMatrix {
        &self.jumps[self.cfg.n_emitters].1
    }

    pub fn left_op(&self) -> &OperatorMatrix {
        &self.jumps[self.cfg.n_emitters + 1].1
    }

    /// Collapse operator for one channel.
    pub fn jump_op(&self, channel: JumpChannel) -> &OperatorMatrix {
        let n = self.cfg.n_emitters;
        let idx = match channel {
            JumpChannel::FreeE(j) => j - 1,
            JumpChannel::Right => n,
            JumpChannel::Left => n + 1,
            JumpChannel::FreeF(j) => n + 1 + j,
        };
        debug_assert_eq!(self.jumps[idx].0, channel);
        &self.jumps[idx].1
    }
}

/// Result of a pi-pulse calibration.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Mean photon number that maximizes the prepared population.
    pub nbar: f64,
    /// Best achieved population of the all-excited target state.
    pub fidelity: f64,
    /// Set when the pulse bandwidth is not comfortably above the collective
    /// decay rates and the calibration premise is shaky.
    pub warning: Option<String>,
}

/// Find the drive photon number that maximizes the post-pulse population of
/// the all-excited state over the pumped emitters, by golden-section search
/// with a master-equation evaluation of each candidate.
pub fn calibrate_pi_pulse(cfg: &SystemConfig, delta: f64) -> Result<Calibration> {
    cfg.validate()?;
    if cfg.pumped.is_empty() {
        return Err(Error::Calibration("no pumped emitters".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Calibration("delta must be positive".into()));
    }
    if cfg.gamma <= 0.0 {
        return Err(Error::Calibration(
            "pump coupling scales with sqrt(gamma); gamma must be positive".into(),
        ));
    }
    let warning = (delta < 50.0 * cfg.n_emitters as f64 * cfg.gamma_1d).then(|| {
        format!(
            "pulse bandwidth {delta} is below 50 * n * gamma_1d = {}; \
             emitters decay appreciably during the pulse",
            50.0 * cfg.n_emitters as f64 * cfg.gamma_1d
        )
    });

    // Pulse area is pi at nbar = pi^(3/2) delta / (4 gamma) for this
    // envelope normalization; bracket generously around it.
    let nbar_pi = PI.powf(1.5) * delta / (4.0 * cfg.gamma);
    let (mut lo, mut hi) = (nbar_pi / 6.0, 3.0 * nbar_pi);

    // Search on the post-pulse population: the during-pulse maximum is flat
    // at ~1 for any area past pi and cannot locate the pi point.
    let objective =
        |nbar: f64| -> Result<f64> { crate::master::pulse_end_population(cfg, nbar, delta) };

    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    for _ in 0..60 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1)?;
        }
        if (hi - lo) < 1e-6 * nbar_pi {
            break;
        }
    }
    let nbar = if f1 > f2 { x1 } else { x2 };

    // A maximum pinned to the bracket edge means the search never bracketed
    // an interior peak.
    if nbar < nbar_pi / 5.0 || nbar > 2.8 * nbar_pi {
        return Err(Error::Calibration(format!(
            "no interior maximum found (best nbar = {nbar:.1} at bracket edge)"
        )));
    }
    // Report the preparation fidelity actually reached during the pulse (the
    // curve peaks just after the rotation completes, before window-tail decay).
    let fidelity = crate::master::pulse_preparation_fidelity(cfg, nbar, delta)?;
    Ok(Calibration {
        nbar,
        fidelity,
        warning,
    })
}
