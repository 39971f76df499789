//! Quantum Monte Carlo wavefunction engine: jump-probability evaluation,
//! channel selection, collapse or non-Hermitian drift, ensemble averaging,
//! and click-event recording.
//!
//! Each trajectory is a strictly sequential walk over the same time grid the
//! master-equation integrator uses. Trajectories draw from independent
//! counter-based random streams keyed by (master_seed, trajectory_id), so an
//! ensemble is bit-reproducible for any worker count and execution order.

pub mod rng;

use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{level_at, DensityMatrix, Level, StateVector};
use crate::master::{time_grid, IntegrationPlan};
use crate::model::{JumpChannel, ModelOperators, PulseTrain, SystemConfig};
use rng::CounterRng;

/// Detection channel of an emitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    WaveguideRight,
    WaveguideLeft,
    /// Free-space photon from an e -> g decay.
    FreeSpaceE,
    /// Free-space photon from the f -> g cascade.
    FreeSpaceF,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::WaveguideRight,
        Channel::WaveguideLeft,
        Channel::FreeSpaceE,
        Channel::FreeSpaceF,
    ];

    pub fn is_waveguide(self) -> bool {
        matches!(self, Channel::WaveguideRight | Channel::WaveguideLeft)
    }

    /// Stable tag used in the click-log wire format.
    pub fn tag(self) -> &'static str {
        match self {
            Channel::WaveguideRight => "wg_right",
            Channel::WaveguideLeft => "wg_left",
            Channel::FreeSpaceE => "free_e",
            Channel::FreeSpaceF => "free_f",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

impl From<JumpChannel> for Channel {
    fn from(ch: JumpChannel) -> Channel {
        match ch {
            JumpChannel::Right => Channel::WaveguideRight,
            JumpChannel::Left => Channel::WaveguideLeft,
            JumpChannel::FreeE(_) => Channel::FreeSpaceE,
            JumpChannel::FreeF(_) => Channel::FreeSpaceF,
        }
    }
}

/// A single detected photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub time: f64,
    pub channel: Channel,
}

/// Output of one stochastic trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_id: u64,
    pub master_seed: u64,
    /// Time-ordered click events.
    pub events: Vec<ClickEvent>,
    /// (time, state) pairs at the requested snapshot times.
    pub snapshots: Vec<(f64, StateVector)>,
}

impl TrajectoryRecord {
    pub fn waveguide_clicks(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.channel.is_waveguide())
            .count()
    }

    pub fn clicks_in(&self, channel: Channel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }
}

/// A full Monte Carlo ensemble plus the fingerprint of the inputs that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub records: Vec<TrajectoryRecord>,
    pub fingerprint: u64,
}

impl EnsembleRecord {
    pub fn n_trajectories(&self) -> usize {
        self.records.len()
    }
}

/// Normalization rule for the no-jump branch.
///
/// `Exact` renormalizes to unit norm after the first-order drift step;
/// `Divisor` divides by sqrt(1 - P_total) as literally printed in the
/// stepping rule. The two agree to O(dt^2); `Exact` avoids secular norm
/// drift and is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoJumpNorm {
    #[default]
    Exact,
    Divisor,
}

/// Per-run trajectory options.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryOptions {
    /// Record the state at (the first step boundary at or after) each time.
    pub snapshot_times: Vec<f64>,
    /// Replace the coherent drive by an instantaneous g<->e flip on the
    /// pumped emitters at every pulse peak. For oracle tests with unit pump
    /// fidelity.
    pub ideal_prep: bool,
    pub norm: NoJumpNorm,
}

/// One Monte Carlo step: evaluate the four channel probabilities, draw a
/// uniform variate, and either collapse onto one channel (recording a click)
/// or apply the first-order non-Hermitian drift.
///
/// Channel thresholds are walked in the fixed order free-space e->g,
/// waveguide right, waveguide left, f->g cascade, no-jump; within the two
/// free-space blocks emitters are ordered by index.
pub fn mc_step(
    psi: &mut StateVector,
    t: f64,
    dt: f64,
    rng: &mut CounterRng,
    ops: &ModelOperators,
    norm: NoJumpNorm,
) -> Result<Option<ClickEvent>> {
    if psi.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: psi.dim(),
        });
    }
    let mut scratch = vec![C64::ZERO; psi.dim()];
    mc_step_scratch(psi, t, dt, rng, ops, norm, &mut scratch)
}

/// Channel probabilities at the current state: (free_e, right, left, free_f),
/// each equal to dt * <psi| J^+ J^- |psi> summed over the channel's
/// collapse operators.
pub fn channel_probabilities(psi: &StateVector, dt: f64, ops: &ModelOperators) -> [f64; 4] {
    let amps = psi.amplitudes();
    let mut p_free_e = 0.0;
    let mut p_free_f = 0.0;
    for (s, a) in amps.iter().enumerate() {
        let w = a.norm_sqr();
        p_free_e += ops.weight_free_e[s] * w;
        p_free_f += ops.weight_free_f[s] * w;
    }
    let p_right = ops.right_op().apply_norm_sqr(amps);
    let p_left = ops.left_op().apply_norm_sqr(amps);
    [dt * p_free_e, dt * p_right, dt * p_left, dt * p_free_f]
}

fn mc_step_scratch(
    psi: &mut StateVector,
    t: f64,
    dt: f64,
    rng: &mut CounterRng,
    ops: &ModelOperators,
    norm: NoJumpNorm,
    scratch: &mut [C64],
) -> Result<Option<ClickEvent>> {
    step_impl(psi, t, dt, rng, ops, norm, scratch, true)
}

#[allow(clippy::too_many_arguments)]
fn step_impl(
    psi: &mut StateVector,
    t: f64,
    dt: f64,
    rng: &mut CounterRng,
    ops: &ModelOperators,
    norm: NoJumpNorm,
    scratch: &mut [C64],
    with_drive: bool,
) -> Result<Option<ClickEvent>> {
    let [p_free_e, p_right, p_left, p_free_f] = channel_probabilities(psi, dt, ops);
    let p_total = p_free_e + p_right + p_left + p_free_f;
    if p_total >= 0.1 {
        return Err(Error::StepSize(format!(
            "total jump probability {p_total:.3} >= 0.1 in one step at t = {t}; reduce dt"
        )));
    }

    let r = rng.next_f64();

    // Threshold walk in the fixed channel order.
    if r < p_free_e {
        let j = select_emitter(psi, ops, dt, r, Level::E, ops.cfg.gamma, p_free_e)?;
        collapse(psi, scratch, ops, JumpChannel::FreeE(j))?;
        return Ok(Some(ClickEvent {
            time: t + dt,
            channel: Channel::FreeSpaceE,
        }));
    }
    if r < p_free_e + p_right {
        collapse(psi, scratch, ops, JumpChannel::Right)?;
        return Ok(Some(ClickEvent {
            time: t + dt,
            channel: Channel::WaveguideRight,
        }));
    }
    if r < p_free_e + p_right + p_left {
        collapse(psi, scratch, ops, JumpChannel::Left)?;
        return Ok(Some(ClickEvent {
            time: t + dt,
            channel: Channel::WaveguideLeft,
        }));
    }
    if r < p_total {
        let r_local = r - (p_free_e + p_right + p_left);
        let j = select_emitter(psi, ops, dt, r_local, Level::F, ops.cfg.gamma_f, p_free_f)?;
        collapse(psi, scratch, ops, JumpChannel::FreeF(j))?;
        return Ok(Some(ClickEvent {
            time: t + dt,
            channel: Channel::FreeSpaceF,
        }));
    }

    // No jump: first-order non-Hermitian drift.
    let amps = psi.amplitudes();
    scratch.copy_from_slice(amps);
    let minus_i_dt = C64::new(0.0, -dt);
    ops.h_static
        .apply_scaled_accumulate(amps, scratch, minus_i_dt);
    if with_drive && ops.driven_at(t) {
        for (j, raise, lower) in &ops.drive {
            let alpha = ops.train.amplitude_for(*j, t);
            if alpha == C64::ZERO {
                continue;
            }
            let c = ops.drive_scale * alpha;
            raise.apply_scaled_accumulate(amps, scratch, minus_i_dt * c);
            lower.apply_scaled_accumulate(amps, scratch, minus_i_dt * c.conj());
        }
    }
    let scale = match norm {
        NoJumpNorm::Exact => {
            let n2: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
            if n2 < 1e-12 {
                return Err(Error::Numerical(format!(
                    "state norm underflow during no-jump drift at t = {t}"
                )));
            }
            1.0 / n2.sqrt()
        }
        NoJumpNorm::Divisor => 1.0 / (1.0 - p_total).sqrt(),
    };
    for (dst, src) in psi.amplitudes_mut().iter_mut().zip(scratch.iter()) {
        *dst = src * scale;
    }
    Ok(None)
}

/// Pick the decaying emitter within a free-space block by sub-thresholds in
/// emitter order. `r_local` is the variate offset into the block.
fn select_emitter(
    psi: &StateVector,
    ops: &ModelOperators,
    dt: f64,
    r_local: f64,
    from: Level,
    rate: f64,
    block_total: f64,
) -> Result<usize> {
    debug_assert!(block_total > 0.0);
    let amps = psi.amplitudes();
    let mut acc = 0.0;
    let mut last_positive = None;
    for j in 1..=ops.cfg.n_emitters {
        let mut pop = 0.0;
        for (s, a) in amps.iter().enumerate() {
            if level_at(s, j) == from {
                pop += a.norm_sqr();
            }
        }
        let p_j = dt * rate * pop;
        if p_j > 0.0 {
            last_positive = Some(j);
        }
        acc += p_j;
        if r_local < acc && p_j > 0.0 {
            return Ok(j);
        }
    }
    // Float summation order can leave r_local marginally past the last
    // sub-threshold even though the block itself was selected.
    last_positive.ok_or_else(|| {
        Error::Numerical("free-space jump selected but no emitter carries population".into())
    })
}

fn collapse(
    psi: &mut StateVector,
    scratch: &mut [C64],
    ops: &ModelOperators,
    channel: JumpChannel,
) -> Result<()> {
    let op = ops.jump_op(channel);
    op.apply_slice(psi.amplitudes(), scratch);
    let n2: f64 = scratch.iter().map(|a| a.norm_sqr()).sum();
    if n2 < 1e-30 {
        return Err(Error::Numerical(
            "collapse onto a channel with vanishing amplitude".into(),
        ));
    }
    let inv = 1.0 / n2.sqrt();
    for (dst, src) in psi.amplitudes_mut().iter_mut().zip(scratch.iter()) {
        *dst = src * inv;
    }
    Ok(())
}

/// Run one trajectory from the ground state over `plan`.
///
/// Deterministic: the result is a pure function of
/// (cfg, train, master_seed, trajectory_id, plan, opts).
pub fn run_trajectory(
    cfg: &SystemConfig,
    train: &PulseTrain,
    master_seed: u64,
    trajectory_id: u64,
    plan: &IntegrationPlan,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    let ops = ModelOperators::new(cfg, train)?;
    run_trajectory_with(&ops, master_seed, trajectory_id, plan, opts)
}

fn run_trajectory_with(
    ops: &ModelOperators,
    master_seed: u64,
    trajectory_id: u64,
    plan: &IntegrationPlan,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    plan.validate(&ops.cfg, &ops.train)?;
    let mut rng = CounterRng::for_stream(master_seed, trajectory_id);
    let mut psi = StateVector::ground(ops.cfg.n_emitters)?;
    let mut scratch = vec![C64::ZERO; ops.dim()];

    let mut snapshot_times = opts.snapshot_times.clone();
    snapshot_times.sort_by(|a, b| a.total_cmp(b));
    let mut next_snapshot = 0usize;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());

    let mut prep_times = if opts.ideal_prep {
        ops.train.peak_times()
    } else {
        Vec::new()
    };
    prep_times.sort_by(|a, b| a.total_cmp(b));
    let mut next_prep = 0usize;

    let mut events = Vec::new();
    let segments = time_grid(plan, &ops.train);

    let mut handle_boundary =
        |t: f64, psi: &mut StateVector, snapshots: &mut Vec<(f64, StateVector)>| {
            while next_prep < prep_times.len() && prep_times[next_prep] <= t {
                apply_ideal_prep(psi, &ops.cfg);
                next_prep += 1;
            }
            while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t {
                snapshots.push((t, psi.clone()));
                next_snapshot += 1;
            }
        };

    handle_boundary(plan.t_start, &mut psi, &mut snapshots);
    for seg in &segments {
        for i in 0..seg.steps {
            let t = seg.t0 + i as f64 * seg.dt;
            let event = step_impl(
                &mut psi,
                t,
                seg.dt,
                &mut rng,
                ops,
                opts.norm,
                &mut scratch,
                !opts.ideal_prep,
            )?;
            if let Some(click) = event {
                events.push(click);
            }
            handle_boundary(seg.t0 + (i + 1) as f64 * seg.dt, &mut psi, &mut snapshots);
        }
    }

    Ok(TrajectoryRecord {
        trajectory_id,
        master_seed,
        events,
        snapshots,
    })
}

/// Instantaneous unitary g <-> e flip on every pumped emitter (f untouched).
fn apply_ideal_prep(psi: &mut StateVector, cfg: &SystemConfig) {
    let amps = psi.amplitudes_mut();
    for &j in &cfg.pumped {
        let stride = 3usize.pow((j - 1) as u32);
        for s in 0..amps.len() {
            if level_at(s, j) == Level::G {
                amps.swap(s, s + 2 * stride);
            }
        }
    }
}

/// Run `n_trajectories` independent trajectories and collect them in
/// trajectory-id order. The result is invariant to worker count.
pub fn run_ensemble(
    cfg: &SystemConfig,
    train: &PulseTrain,
    master_seed: u64,
    n_trajectories: usize,
    plan: &IntegrationPlan,
    opts: &TrajectoryOptions,
    workers: Option<usize>,
) -> Result<EnsembleRecord> {
    if n_trajectories == 0 {
        return Err(Error::InvalidConfig("n_trajectories must be >= 1".into()));
    }
    let ops = ModelOperators::new(cfg, train)?;
    plan.validate(cfg, train)?;

    let run_all = || -> Result<Vec<TrajectoryRecord>> {
        (0..n_trajectories as u64)
            .into_par_iter()
            .map(|id| run_trajectory_with(&ops, master_seed, id, plan, opts))
            .collect()
    };

    let records = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
            pool.install(run_all)?
        }
        None => run_all()?,
    };

    Ok(EnsembleRecord {
        records,
        fingerprint: ensemble_fingerprint(cfg, train, plan, opts, master_seed, n_trajectories),
    })
}

/// FNV-1a hash over the canonical debug rendering of every input that
/// shapes an ensemble.
pub fn ensemble_fingerprint(
    cfg: &SystemConfig,
    train: &PulseTrain,
    plan: &IntegrationPlan,
    opts: &TrajectoryOptions,
    master_seed: u64,
    n_trajectories: usize,
) -> u64 {
    let text = format!(
        "{cfg:?}|{train:?}|{plan:?}|snapshots={:?} ideal_prep={} norm={:?}|seed={master_seed}|traj={n_trajectories}",
        opts.snapshot_times, opts.ideal_prep, opts.norm
    );
    fnv1a(text.as_bytes())
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Ensemble-averaged density matrix (1/M) sum_m |phi_m(t)><phi_m(t)| at each
/// requested time. Every trajectory must hold a snapshot within 1e-9 of each
/// time.
pub fn reconstruct_density(
    ensemble: &EnsembleRecord,
    times: &[f64],
) -> Result<Vec<(f64, DensityMatrix)>> {
    if ensemble.records.is_empty() {
        return Err(Error::NoData("empty ensemble".into()));
    }
    let n_emitters = ensemble.records[0]
        .snapshots
        .first()
        .map(|(_, s)| s.n_emitters())
        .ok_or_else(|| Error::NoData("ensemble has no snapshots".into()))?;
    let weight = C64::new(1.0 / ensemble.records.len() as f64, 0.0);

    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let mut rho = DensityMatrix::zeros(n_emitters)?;
        for record in &ensemble.records {
            let snap = record
                .snapshots
                .iter()
                .find(|(ts, _)| (ts - t).abs() < 1e-9)
                .ok_or(Error::MissingSnapshot(t))?;
            accumulate_projector(&mut rho, &snap.1, weight);
        }
        out.push((t, rho));
    }
    Ok(out)
}

fn accumulate_projector(rho: &mut DensityMatrix, psi: &StateVector, weight: C64) {
    let dim = psi.dim();
    let amps = psi.amplitudes();
    let elements = rho.elements_mut();
    for r in 0..dim {
        if amps[r] == C64::ZERO {
            continue;
        }
        let wa = weight * amps[r];
        for c in 0..dim {
            elements[r * dim + c] += wa * amps[c].conj();
        }
    }
}

/// Write the click-event log: one row per event, columnar text with the
/// config fingerprint in the header. Times carry 18 significant digits.
pub fn write_click_log<W: Write>(ensemble: &EnsembleRecord, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "# bundle-sim click log v1")?;
    writeln!(
        out,
        "# fingerprint={:#018x} trajectories={}",
        ensemble.fingerprint,
        ensemble.records.len()
    )?;
    writeln!(out, "# columns: trajectory_id time channel")?;
    for record in &ensemble.records {
        for event in &record.events {
            writeln!(
                out,
                "{} {:.17e} {}",
                record.trajectory_id,
                event.time,
                event.channel.tag()
            )?;
        }
    }
    Ok(())
}

/// Read a click log back into an ensemble (events only, no snapshots).
/// Trajectories that emitted nothing are preserved through the header count.
pub fn read_click_log<R: BufRead>(input: R) -> Result<EnsembleRecord> {
    let mut fingerprint = 0u64;
    let mut n_trajectories: Option<usize> = None;
    let mut rows: Vec<(u64, ClickEvent)> = Vec::new();

    for (line_no, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLog {
            line: line_no + 1,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("fingerprint=") {
                    let v = v.trim_start_matches("0x");
                    fingerprint = u64::from_str_radix(v, 16).map_err(|_| Error::MalformedLog {
                        line: line_no + 1,
                        reason: format!("bad fingerprint {token}"),
                    })?;
                }
                if let Some(v) = token.strip_prefix("trajectories=") {
                    n_trajectories = Some(v.parse().map_err(|_| Error::MalformedLog {
                        line: line_no + 1,
                        reason: format!("bad trajectory count {token}"),
                    })?);
                }
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let (id, time, tag) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => {
                return Err(Error::MalformedLog {
                    line: line_no + 1,
                    reason: "expected: trajectory_id time channel".into(),
                })
            }
        };
        let id: u64 = id.parse().map_err(|_| Error::MalformedLog {
            line: line_no + 1,
            reason: format!("bad trajectory id {id}"),
        })?;
        let time: f64 = time.parse().map_err(|_| Error::MalformedLog {
            line: line_no + 1,
            reason: format!("bad time {time}"),
        })?;
        let channel = Channel::from_tag(tag).ok_or_else(|| Error::MalformedLog {
            line: line_no + 1,
            reason: format!("unknown channel {tag}"),
        })?;
        rows.push((id, ClickEvent { time, channel }));
    }

    let count = match n_trajectories {
        Some(c) => c,
        None => rows
            .iter()
            .map(|&(id, _)| id as usize + 1)
            .max()
            .unwrap_or(0),
    };
    let mut records: Vec<TrajectoryRecord> = (0..count as u64)
        .map(|trajectory_id| TrajectoryRecord {
            trajectory_id,
            master_seed: 0,
            events: Vec::new(),
            snapshots: Vec::new(),
        })
        .collect();
    for (id, event) in rows {
        let slot = records
            .get_mut(id as usize)
            .ok_or_else(|| Error::MalformedLog {
                line: 0,
                reason: format!("trajectory id {id} exceeds declared count {count}"),
            })?;
        slot.events.push(event);
    }
    Ok(EnsembleRecord {
        records,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::symmetric_state;
    use Level::{E, F};

    fn single_emitter() -> SystemConfig {
        SystemConfig::new(1, vec![0.0], 1.0, 0.05, 2.0, vec![1]).unwrap()
    }

    fn free_plan(cfg: &SystemConfig, t_end: f64) -> IntegrationPlan {
        IntegrationPlan::auto(cfg, &PulseTrain::none(), 0.0, t_end)
    }

    #[test]
    fn ground_state_is_dark() {
        let cfg = SystemConfig::chain(2, 1.0).unwrap();
        let ops = ModelOperators::new(&cfg, &PulseTrain::none()).unwrap();
        let mut psi = StateVector::ground(2).unwrap();
        let before = psi.clone();
        let mut rng = CounterRng::for_stream(1, 0);
        for k in 0..50 {
            let event = mc_step(
                &mut psi,
                k as f64 * 1e-3,
                1e-3,
                &mut rng,
                &ops,
                NoJumpNorm::Exact,
            )
            .unwrap();
            assert!(event.is_none());
        }
        assert_eq!(psi, before);
    }

    #[test]
    fn single_emitter_channel_probabilities() {
        // from |e>: waveguide right and left carry gamma_1d/2 each, the
        // free-space e->g channel carries the full gamma
        let cfg = single_emitter();
        let ops = ModelOperators::new(&cfg, &PulseTrain::none()).unwrap();
        let psi = StateVector::basis_state(&[E]).unwrap();
        let dt = 1e-3;
        let [p_e, p_r, p_l, p_f] = channel_probabilities(&psi, dt, &ops);
        assert!((p_e - dt * 0.05).abs() < 1e-15);
        assert!((p_r - dt * 0.5).abs() < 1e-15);
        assert!((p_l - dt * 0.5).abs() < 1e-15);
        assert_eq!(p_f, 0.0);

        let psi_f = StateVector::basis_state(&[F]).unwrap();
        let [q_e, q_r, q_l, q_f] = channel_probabilities(&psi_f, dt, &ops);
        assert_eq!((q_e, q_r, q_l), (0.0, 0.0, 0.0));
        assert!((q_f - dt * 2.0).abs() < 1e-15);
    }

    #[test]
    fn waveguide_jump_from_ee_collapses_to_bright_state() {
        let cfg = SystemConfig::chain(2, 1.0).unwrap();
        let ops = ModelOperators::new(&cfg, &PulseTrain::none()).unwrap();
        let dt = 0.01;
        // thresholds from |ee>: free_e [0, 1e-3), right [1e-3, 0.011)
        let seed = (0..10_000u64)
            .find(|&s| {
                let r = CounterRng::for_stream(s, 0).next_f64();
                r > 0.0015 && r < 0.0105
            })
            .expect("some seed lands in the right-waveguide block");
        let mut rng = CounterRng::for_stream(seed, 0);
        let mut psi = StateVector::basis_state(&[E, E]).unwrap();
        let event = mc_step(&mut psi, 0.0, dt, &mut rng, &ops, NoJumpNorm::Exact)
            .unwrap()
            .expect("a jump must fire");
        assert_eq!(event.channel, Channel::WaveguideRight);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let plus = symmetric_state(2, &[1, 2], 1).unwrap();
        assert!((psi.dot(&plus).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let cfg = single_emitter();
        let ops = ModelOperators::new(&cfg, &PulseTrain::none()).unwrap();
        let mut psi = StateVector::basis_state(&[E]).unwrap();
        let mut rng = CounterRng::for_stream(1, 0);
        let err = mc_step(&mut psi, 0.0, 0.2, &mut rng, &ops, NoJumpNorm::Exact);
        assert!(matches!(err, Err(Error::StepSize(_))));
    }

    #[test]
    fn all_channels_reachable() {
        // mixed e/f superposition exposes all four channels
        let cfg = SystemConfig::chain(2, 1.0).unwrap();
        let ops = ModelOperators::new(&cfg, &PulseTrain::none()).unwrap();
        let mut template = StateVector::zeros(2).unwrap();
        template.amplitudes_mut()[crate::hilbert::basis_index(&[E, E])] = C64::new(0.6, 0.0);
        template.amplitudes_mut()[crate::hilbert::basis_index(&[F, E])] = C64::new(0.0, 0.6);
        template.amplitudes_mut()[crate::hilbert::basis_index(&[F, F])] =
            C64::new(0.37947331922020555, 0.0);
        template.normalize().unwrap();

        let mut seen = std::collections::HashSet::new();
        let mut jumps = 0usize;
        let mut no_jumps = 0usize;
        for seed in 0..4000u64 {
            let mut rng = CounterRng::for_stream(seed, 3);
            let mut psi = template.clone();
            match mc_step(&mut psi, 0.0, 0.02, &mut rng, &ops, NoJumpNorm::Exact).unwrap() {
                Some(ev) => {
                    jumps += 1;
                    seen.insert(ev.channel);
                    assert!((psi.norm() - 1.0).abs() < 1e-12);
                }
                None => no_jumps += 1,
            }
        }
        assert_eq!(seen.len(), 4, "saw channels {seen:?}");
        assert_eq!(jumps + no_jumps, 4000);
        assert!(no_jumps > jumps);
    }

    #[test]
    fn divisor_norm_agrees_to_first_order() {
        let cfg = single_emitter();
        let ops = ModelOperators::new(&cfg, &PulseTrain::none()).unwrap();
        let dt = 1e-4;
        // pick a seed whose first draw is a no-jump for P_total ~ 1e-4
        let seed = (0..100u64)
            .find(|&s| CounterRng::for_stream(s, 0).next_f64() > 0.01)
            .unwrap();
        let mut psi_a = StateVector::basis_state(&[E]).unwrap();
        let mut psi_b = psi_a.clone();
        let mut rng_a = CounterRng::for_stream(seed, 0);
        let mut rng_b = CounterRng::for_stream(seed, 0);
        mc_step(&mut psi_a, 0.0, dt, &mut rng_a, &ops, NoJumpNorm::Exact).unwrap();
        mc_step(&mut psi_b, 0.0, dt, &mut rng_b, &ops, NoJumpNorm::Divisor).unwrap();
        let diff: f64 = psi_a
            .amplitudes()
            .iter()
            .zip(psi_b.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(diff < 1e-8, "norm conventions diverged by {diff}");
        // divisor mode does not exactly normalize
        assert!((psi_b.norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn zero_duration_span_yields_no_events() {
        let cfg = single_emitter();
        let train = PulseTrain::none();
        let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 0.0);
        let rec = run_trajectory(&cfg, &train, 7, 0, &plan, &TrajectoryOptions::default()).unwrap();
        assert!(rec.events.is_empty());
    }

    #[test]
    fn ideal_prep_click_bookkeeping_is_exact() {
        // with perfect preparation every pumped emitter contributes exactly
        // one e-decay (waveguide or free space), and every waveguide photon
        // is followed by one cascade photon
        let cfg = SystemConfig::chain(3, 1.0).unwrap();
        let train = PulseTrain::single_shot(&cfg, 5569.0, 200.0, 0.1);
        let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 15.0);
        let opts = TrajectoryOptions {
            ideal_prep: true,
            ..Default::default()
        };
        let ens = run_ensemble(&cfg, &train, 99, 150, &plan, &opts, None).unwrap();
        for rec in &ens.records {
            let wg = rec.waveguide_clicks();
            let free_e = rec.clicks_in(Channel::FreeSpaceE);
            let free_f = rec.clicks_in(Channel::FreeSpaceF);
            assert_eq!(
                wg + free_e,
                3,
                "trajectory {}: wg = {wg}, free_e = {free_e}",
                rec.trajectory_id
            );
            assert_eq!(free_f, wg, "trajectory {}", rec.trajectory_id);
            // events are strictly time ordered
            for pair in rec.events.windows(2) {
                assert!(pair[0].time <= pair[1].time);
            }
        }
    }

    #[test]
    fn singleton_ensemble_matches_run_trajectory() {
        let cfg = single_emitter();
        let train = PulseTrain::single_shot(&cfg, 5569.0, 200.0, 0.1);
        let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 2.0);
        let opts = TrajectoryOptions::default();
        let single = run_trajectory(&cfg, &train, 5, 0, &plan, &opts).unwrap();
        let ens = run_ensemble(&cfg, &train, 5, 1, &plan, &opts, None).unwrap();
        assert_eq!(ens.records.len(), 1);
        assert_eq!(ens.records[0], single);
    }

    #[test]
    fn ensembles_are_bit_identical_across_worker_counts() {
        let cfg = SystemConfig::chain(2, 1.0).unwrap();
        let train = PulseTrain::single_shot(&cfg, 5569.0, 200.0, 0.1);
        let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 2.0);
        let opts = TrajectoryOptions::default();
        let a = run_ensemble(&cfg, &train, 11, 60, &plan, &opts, Some(1)).unwrap();
        let b = run_ensemble(&cfg, &train, 11, 60, &plan, &opts, Some(2)).unwrap();
        let c = run_ensemble(&cfg, &train, 11, 60, &plan, &opts, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn reconstruct_single_trajectory_is_pure_projector() {
        let cfg = single_emitter();
        let train = PulseTrain::none();
        let plan = free_plan(&cfg, 1.0);
        let opts = TrajectoryOptions {
            snapshot_times: vec![0.5],
            ideal_prep: false,
            norm: NoJumpNorm::Exact,
        };
        let ens = run_ensemble(&cfg, &train, 3, 1, &plan, &opts, None).unwrap();
        let rho = reconstruct_density(&ens, &[0.5]).unwrap();
        assert_eq!(rho.len(), 1);
        rho[0].1.validate().unwrap();
        let want = DensityMatrix::from_pure(&ens.records[0].snapshots[0].1);
        let diff: f64 = rho[0]
            .1
            .elements()
            .iter()
            .zip(want.elements())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15);
    }

    #[test]
    fn reconstructed_survival_tracks_exponential() {
        // ideal preparation at t = 0.1, then free decay at gamma_1d + gamma
        let cfg = single_emitter();
        let train = PulseTrain::single_shot(&cfg, 5569.0, 200.0, 0.1);
        let t_probe = 1.1;
        let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 1.3);
        let opts = TrajectoryOptions {
            snapshot_times: vec![t_probe],
            ideal_prep: true,
            norm: NoJumpNorm::Exact,
        };
        let m = 2000usize;
        let ens = run_ensemble(&cfg, &train, 17, m, &plan, &opts, None).unwrap();
        let rho = &reconstruct_density(&ens, &[t_probe]).unwrap()[0].1;
        rho.validate().unwrap();
        let p_e = rho.get(2, 2).re;
        let want = (-1.05f64).exp();
        let se = (want * (1.0 - want) / m as f64).sqrt();
        assert!(
            (p_e - want).abs() < 3.0 * se + 2e-3,
            "P_e = {p_e}, want {want} +- {se}"
        );
    }

    #[test]
    fn missing_snapshots_error() {
        let cfg = single_emitter();
        let train = PulseTrain::none();
        let plan = free_plan(&cfg, 0.5);
        let ens = run_ensemble(
            &cfg,
            &train,
            1,
            2,
            &plan,
            &TrajectoryOptions::default(),
            None,
        )
        .unwrap();
        assert!(matches!(
            reconstruct_density(&ens, &[0.3]),
            Err(Error::NoData(_)) | Err(Error::MissingSnapshot(_))
        ));
    }

    #[test]
    fn click_log_round_trips() {
        let cfg = SystemConfig::chain(2, 1.0).unwrap();
        let train = PulseTrain::single_shot(&cfg, 5569.0, 200.0, 0.1);
        let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 3.0);
        let ens = run_ensemble(
            &cfg,
            &train,
            23,
            40,
            &plan,
            &TrajectoryOptions::default(),
            None,
        )
        .unwrap();
        let mut buffer = Vec::new();
        write_click_log(&ens, &mut buffer).unwrap();
        let back = read_click_log(std::io::BufReader::new(buffer.as_slice())).unwrap();
        assert_eq!(back.fingerprint, ens.fingerprint);
        assert_eq!(back.records.len(), ens.records.len());
        for (a, b) in ens.records.iter().zip(&back.records) {
            assert_eq!(a.events, b.events, "trajectory {}", a.trajectory_id);
        }
    }

    #[test]
    fn click_log_rejects_garbage() {
        let bad = "0 1.0 wg_right\nnot a row\n";
        assert!(matches!(
            read_click_log(std::io::BufReader::new(bad.as_bytes())),
            Err(Error::MalformedLog { line: 2, .. })
        ));
        let bad_channel = "0 1.0 sideways\n";
        assert!(read_click_log(std::io::BufReader::new(bad_channel.as_bytes())).is_err());
    }

    #[test]
    fn fingerprint_tracks_inputs() {
        let cfg = single_emitter();
        let train = PulseTrain::none();
        let plan = free_plan(&cfg, 1.0);
        let opts = TrajectoryOptions::default();
        let a = ensemble_fingerprint(&cfg, &train, &plan, &opts, 1, 10);
        let b = ensemble_fingerprint(&cfg, &train, &plan, &opts, 2, 10);
        let c = ensemble_fingerprint(&cfg, &train, &plan, &opts, 1, 11);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, ensemble_fingerprint(&cfg, &train, &plan, &opts, 1, 10));
    }
}
