//! Deterministic integration of the driven master equation
//! `drho/dt = -i [H_coh(t), rho] + L[rho]` with fixed-step RK4 and two-zone
//! stepping (fine steps inside pulse windows, coarser steps elsewhere).

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Level, OperatorMatrix, StateVector};
use crate::model::{ModelOperators, PulseTrain, SystemConfig};

/// Step-size and sampling policy for one integration run.
///
/// The caps are deliberately conservative: `dt_pulse` must resolve the
/// narrowest pulse (<= 1/(10 delta)) and `dt_free` the fastest collective
/// decay (<= 1e-3 * min(1, 1/(n gamma_1d))).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationPlan {
    pub t_start: f64,
    pub t_end: f64,
    /// Step inside pulse windows.
    pub dt_pulse: f64,
    /// Step outside pulse windows.
    pub dt_free: f64,
    /// Record every k-th step (the first and last samples are always kept).
    pub sample_every: usize,
}

impl IntegrationPlan {
    /// Plan with the free step at its cap and the pulse step at half its
    /// cap (the drive envelope dominates the RK4 error budget).
    pub fn auto(
        cfg: &SystemConfig,
        train: &PulseTrain,
        t_start: f64,
        t_end: f64,
    ) -> IntegrationPlan {
        IntegrationPlan {
            t_start,
            t_end,
            dt_pulse: 0.5 * max_dt_pulse(train),
            dt_free: max_dt_free(cfg),
            sample_every: 1,
        }
    }

    pub fn with_sampling(mut self, sample_every: usize) -> IntegrationPlan {
        self.sample_every = sample_every;
        self
    }

    pub fn validate(&self, cfg: &SystemConfig, train: &PulseTrain) -> Result<()> {
        // A zero-duration span is a valid no-op run.
        if !(self.t_end >= self.t_start) {
            return Err(Error::InvalidPlan(format!(
                "t_end {} must not precede t_start {}",
                self.t_end, self.t_start
            )));
        }
        if !(self.dt_pulse > 0.0) || !(self.dt_free > 0.0) {
            return Err(Error::InvalidPlan("step sizes must be positive".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidPlan("sample_every must be >= 1".into()));
        }
        let pulse_cap = max_dt_pulse(train);
        if self.dt_pulse > pulse_cap * (1.0 + 1e-12) {
            return Err(Error::InvalidPlan(format!(
                "dt_pulse {} exceeds 1/(10 delta) = {pulse_cap}",
                self.dt_pulse
            )));
        }
        let free_cap = max_dt_free(cfg);
        if self.dt_free > free_cap * (1.0 + 1e-12) {
            return Err(Error::InvalidPlan(format!(
                "dt_free {} exceeds 1e-3 * min(1, 1/(n gamma_1d)) = {free_cap}",
                self.dt_free
            )));
        }
        Ok(())
    }
}

pub fn max_dt_pulse(train: &PulseTrain) -> f64 {
    match train.narrowest_delta() {
        Some(delta) => 1.0 / (10.0 * delta),
        None => f64::INFINITY,
    }
}

pub fn max_dt_free(cfg: &SystemConfig) -> f64 {
    1e-3 * (1.0_f64).min(1.0 / (cfg.n_emitters as f64 * cfg.gamma_1d).max(f64::MIN_POSITIVE))
}

/// One uniform-step stretch of the integration span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
    pub pulsed: bool,
}

/// Split `[t_start, t_end]` into pulse-window and free stretches, each with
/// an even step count landing exactly on the boundaries.
pub fn time_grid(plan: &IntegrationPlan, train: &PulseTrain) -> Vec<Segment> {
    let mut cuts = vec![plan.t_start];
    for &(lo, hi) in &train.drive_windows() {
        for t in [lo, hi] {
            if t > plan.t_start && t < plan.t_end {
                cuts.push(t);
            }
        }
    }
    cuts.push(plan.t_end);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();

    let windows = train.drive_windows();
    let mut segments = Vec::new();
    for pair in cuts.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let mid = 0.5 * (t0 + t1);
        let pulsed = windows.iter().any(|&(lo, hi)| mid >= lo && mid <= hi);
        let cap = if pulsed { plan.dt_pulse } else { plan.dt_free };
        let steps = ((t1 - t0) / cap).ceil().max(1.0) as usize;
        segments.push(Segment {
            t0,
            dt: (t1 - t0) / steps as f64,
            steps,
            pulsed,
        });
    }
    segments
}

/// Named Hermitian observables to record along an evolution.
#[derive(Debug, Clone, Default)]
pub struct ObservableSet {
    entries: Vec<(String, OperatorMatrix)>,
}

impl ObservableSet {
    pub fn new() -> ObservableSet {
        ObservableSet::default()
    }

    pub fn push(&mut self, label: impl Into<String>, op: OperatorMatrix) -> Result<()> {
        let herm = op.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "observable is not Hermitian (|A - A^+| = {herm:.3e})"
            )));
        }
        self.entries.push((label.into(), op));
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, OperatorMatrix)> {
        self.entries.iter()
    }
}

/// Sampled expectation values plus the final state.
#[derive(Debug, Clone)]
pub struct EvolveResult {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// values[sample][observable]
    pub values: Vec<Vec<f64>>,
    pub final_rho: DensityMatrix,
}

impl EvolveResult {
    /// Column of one observable by label.
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let idx = self.labels.iter().position(|l| l == label)?;
        Some(self.values.iter().map(|row| row[idx]).collect())
    }
}

/// Scratch buffers for the RK4 stepper.
struct RkScratch {
    k1: DensityMatrix,
    k2: DensityMatrix,
    k3: DensityMatrix,
    k4: DensityMatrix,
    stage: DensityMatrix,
    prod_a: DensityMatrix,
    prod_b: DensityMatrix,
}

impl RkScratch {
    fn new(n_emitters: usize) -> Result<RkScratch> {
        Ok(RkScratch {
            k1: DensityMatrix::zeros(n_emitters)?,
            k2: DensityMatrix::zeros(n_emitters)?,
            k3: DensityMatrix::zeros(n_emitters)?,
            k4: DensityMatrix::zeros(n_emitters)?,
            stage: DensityMatrix::zeros(n_emitters)?,
            prod_a: DensityMatrix::zeros(n_emitters)?,
            prod_b: DensityMatrix::zeros(n_emitters)?,
        })
    }
}

/// Right-hand side of the master equation at time `t`, written into `out`.
fn master_rhs(
    ops: &ModelOperators,
    t: f64,
    rho: &DensityMatrix,
    out: &mut DensityMatrix,
    prod_a: &mut DensityMatrix,
    prod_b: &mut DensityMatrix,
) {
    out.elements_mut().fill(C64::ZERO);
    let minus_i = C64::new(0.0, -1.0);
    let plus_i = C64::new(0.0, 1.0);

    // -i [H_exchange, rho]
    if ops.exchange.nnz() > 0 {
        ops.exchange.mul_dense(rho, prod_a);
        out.add_scaled(minus_i, prod_a);
        ops.exchange.mul_dense_right(rho, prod_a);
        out.add_scaled(plus_i, prod_a);
    }

    // -i [H_drive(t), rho]
    if ops.driven_at(t) {
        for (j, raise, lower) in &ops.drive {
            let alpha = ops.train.amplitude_for(*j, t);
            if alpha == C64::ZERO {
                continue;
            }
            let c = ops.drive_scale * alpha;
            for (op, w) in [(raise, c), (lower, c.conj())] {
                op.mul_dense(rho, prod_a);
                out.add_scaled(minus_i * w, prod_a);
                op.mul_dense_right(rho, prod_a);
                out.add_scaled(plus_i * w, prod_a);
            }
        }
    }

    // sum_beta J rho J^+ - 1/2 {J^+ J, rho}
    let half = C64::new(0.5, 0.0);
    for (((_, jump), dagger), rate) in ops.jumps.iter().zip(&ops.jump_daggers).zip(&ops.rate_ops) {
        jump.mul_dense(rho, prod_a);
        dagger.mul_dense_right(prod_a, prod_b);
        out.add_scaled(C64::ONE, prod_b);
        rate.mul_dense(rho, prod_a);
        out.add_scaled(-half, prod_a);
        rate.mul_dense_right(rho, prod_a);
        out.add_scaled(-half, prod_a);
    }
}

/// Classical fixed-step RK4 update of the master equation, with the drive
/// evaluated at the substage times. The trace is renormalized when drift
/// exceeds 1e-12; drift beyond 1e-6 in a single step reports a step-size
/// error.
pub fn rk4_step(
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    cfg: &SystemConfig,
    train: &PulseTrain,
) -> Result<DensityMatrix> {
    let ops = ModelOperators::new(cfg, train)?;
    let mut scratch = RkScratch::new(cfg.n_emitters)?;
    let mut out = rho.clone();
    rk4_step_with(&ops, &mut out, t, dt, &mut scratch)?;
    Ok(out)
}

fn rk4_step_with(
    ops: &ModelOperators,
    rho: &mut DensityMatrix,
    t: f64,
    dt: f64,
    s: &mut RkScratch,
) -> Result<()> {
    let half_dt = C64::new(0.5 * dt, 0.0);
    let full_dt = C64::new(dt, 0.0);

    master_rhs(ops, t, rho, &mut s.k1, &mut s.prod_a, &mut s.prod_b);

    s.stage.elements_mut().copy_from_slice(rho.elements());
    s.stage.add_scaled(half_dt, &s.k1);
    master_rhs(
        ops,
        t + 0.5 * dt,
        &s.stage,
        &mut s.k2,
        &mut s.prod_a,
        &mut s.prod_b,
    );

    s.stage.elements_mut().copy_from_slice(rho.elements());
    s.stage.add_scaled(half_dt, &s.k2);
    master_rhs(
        ops,
        t + 0.5 * dt,
        &s.stage,
        &mut s.k3,
        &mut s.prod_a,
        &mut s.prod_b,
    );

    s.stage.elements_mut().copy_from_slice(rho.elements());
    s.stage.add_scaled(full_dt, &s.k3);
    master_rhs(
        ops,
        t + dt,
        &s.stage,
        &mut s.k4,
        &mut s.prod_a,
        &mut s.prod_b,
    );

    let w = dt / 6.0;
    rho.add_scaled(C64::new(w, 0.0), &s.k1);
    rho.add_scaled(C64::new(2.0 * w, 0.0), &s.k2);
    rho.add_scaled(C64::new(2.0 * w, 0.0), &s.k3);
    rho.add_scaled(C64::new(w, 0.0), &s.k4);

    let trace = rho.trace().re;
    let drift = (trace - 1.0).abs();
    // NaN-robust: a non-finite trace must also land here
    if !(drift <= 1e-6) {
        return Err(Error::StepSize(format!(
            "trace drifted by {drift:.3e} in one step at t = {t}; reduce dt"
        )));
    }
    if drift > 1e-12 {
        rho.scale(C64::new(1.0 / trace, 0.0));
    }
    Ok(())
}

/// Integrate the master equation over `plan`, recording the expectation
/// values of `obs` at decimated steps.
pub fn evolve(
    rho0: &DensityMatrix,
    plan: &IntegrationPlan,
    obs: &ObservableSet,
    cfg: &SystemConfig,
    train: &PulseTrain,
) -> Result<EvolveResult> {
    plan.validate(cfg, train)?;
    let ops = ModelOperators::new(cfg, train)?;
    if rho0.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: rho0.dim(),
        });
    }

    let mut rho = rho0.clone();
    let mut scratch = RkScratch::new(cfg.n_emitters)?;
    let segments = time_grid(plan, train);

    let measure = |rho: &DensityMatrix| -> Result<Vec<f64>> {
        obs.iter()
            .map(|(_, op)| Ok(op.expectation_density(rho)?.re))
            .collect()
    };

    let mut times = vec![plan.t_start];
    let mut values = vec![measure(&rho)?];
    let mut step_counter = 0usize;

    let total_steps: usize = segments.iter().map(|s| s.steps).sum();
    for seg in &segments {
        for i in 0..seg.steps {
            let t = seg.t0 + i as f64 * seg.dt;
            rk4_step_with(&ops, &mut rho, t, seg.dt, &mut scratch)?;
            step_counter += 1;
            if step_counter % plan.sample_every == 0 || step_counter == total_steps {
                times.push(seg.t0 + (i + 1) as f64 * seg.dt);
                values.push(measure(&rho)?);
            }
        }
    }

    Ok(EvolveResult {
        times,
        labels: obs.labels(),
        values,
        final_rho: rho,
    })
}

/// Total waveguide output intensity <J_R^+ J_R^-> + <J_L^+ J_L^->.
pub fn waveguide_intensity(rho: &DensityMatrix, cfg: &SystemConfig) -> Result<f64> {
    let op = crate::model::waveguide_intensity_operator(cfg)?;
    Ok(op.expectation_density(rho)?.re)
}

/// Population of the all-excited target state at every step across one
/// isolated calibration pulse.
pub(crate) fn pulse_population_curve(
    cfg: &SystemConfig,
    nbar: f64,
    delta: f64,
) -> Result<Vec<f64>> {
    let t_peak = crate::model::PULSE_TRUNCATION / delta;
    let train = PulseTrain::single_shot(cfg, nbar, delta, t_peak);
    let plan = IntegrationPlan {
        t_start: 0.0,
        t_end: 2.0 * t_peak,
        dt_pulse: 1.0 / (20.0 * delta),
        dt_free: max_dt_free(cfg),
        sample_every: 1,
    };
    let mut levels = vec![Level::G; cfg.n_emitters];
    for &j in &cfg.pumped {
        levels[j - 1] = Level::E;
    }
    let target = StateVector::basis_state(&levels)?;
    let mut obs = ObservableSet::new();
    obs.push("target", crate::model::projector(&target))?;

    let rho0 = DensityMatrix::from_pure(&StateVector::ground(cfg.n_emitters)?);
    let result = evolve(&rho0, &plan, &obs, cfg, &train)?;
    Ok(result.values.iter().map(|row| row[0]).collect())
}

/// Best population of the all-excited target state over a single calibration
/// pulse, used as the objective of the pi-pulse search.
pub(crate) fn pulse_preparation_fidelity(cfg: &SystemConfig, nbar: f64, delta: f64) -> Result<f64> {
    Ok(pulse_population_curve(cfg, nbar, delta)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Target-state population right at the end of the pulse window.
pub(crate) fn pulse_end_population(cfg: &SystemConfig, nbar: f64, delta: f64) -> Result<f64> {
    Ok(*pulse_population_curve(cfg, nbar, delta)?
        .last()
        .expect("curve has at least the initial sample"))
}
