//! The five workflows behind the subcommands: spectrum, master,
//! trajectories, stats, and the reproduce presets.

use std::path::Path;

use bundle_core::hilbert::{basis_index, DensityMatrix, Level, StateVector};
use bundle_core::master::{evolve, EvolveResult, ObservableSet};
use bundle_core::model::{
    calibrate_pi_pulse, collective_spectrum, projector, symmetric_state,
    waveguide_intensity_operator, PulseTrain, SystemConfig,
};
use bundle_core::num_complex::Complex64 as C64;
use bundle_core::stats::{
    click_raster, count_per_window, g_n2, intensity_series, interval_histogram,
    photon_number_distribution, RasterClass, WindowScheme,
};
use bundle_core::trajectories::{
    read_click_log, reconstruct_density, run_ensemble, write_click_log, EnsembleRecord,
    TrajectoryOptions,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, ExitCode};
use crate::output::{fmt, OutputContext};
use crate::plot::{Plot, PALETTE};

pub struct RunContext {
    pub cfg: RunConfig,
    pub workers: Option<usize>,
    pub deterministic: bool,
}

impl RunContext {
    fn fingerprint(&self) -> u64 {
        let canonical = self.cfg.canonical();
        bundle_core_fingerprint(canonical.as_bytes())
    }

    fn output(&self, dir: &Path) -> Result<OutputContext, CliError> {
        OutputContext::new(dir, self.fingerprint(), self.deterministic, self.cfg.plots)
            .map_err(CliError::io)
    }

    /// Drive photon number: calibrated when requested, else the configured
    /// value.
    fn effective_nbar(&self, system: &SystemConfig) -> Result<(f64, Option<f64>), CliError> {
        if self.cfg.calibrate {
            let cal = calibrate_pi_pulse(system, self.cfg.delta).map_err(CliError::core)?;
            if let Some(w) = &cal.warning {
                eprintln!("warning: {w}");
            }
            Ok((cal.nbar, Some(cal.fidelity)))
        } else {
            Ok((self.cfg.nbar, None))
        }
    }
}

fn bundle_core_fingerprint(bytes: &[u8]) -> u64 {
    // FNV-1a, same parameters the core click logs use
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// `spectrum`: table of collective modes (m, shift, decay, amplitudes).
pub fn cmd_spectrum(ctx: &RunContext, out_dir: &Path) -> Result<(), CliError> {
    let system = ctx.cfg.system().map_err(CliError::core)?;
    let modes = collective_spectrum(&system, system.n_emitters).map_err(CliError::core)?;
    let out = ctx.output(out_dir)?;
    let rows = modes.iter().map(|mode| {
        let amps = mode
            .amplitudes
            .iter()
            .map(|a| {
                format!(
                    "{}{}{}i",
                    fmt(a.re),
                    if a.im < 0.0 { "" } else { "+" },
                    fmt(a.im)
                )
            })
            .collect::<Vec<_>>()
            .join(";");
        vec![
            mode.excitation_number.to_string(),
            fmt(mode.energy_shift),
            fmt(mode.amp_decay),
            amps,
        ]
    });
    let path = out.write_table(
        "spectrum.csv",
        &["m", "energy_shift", "amp_decay", "amplitudes"],
        rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Observable set used by `master` and the reproduce presets: the cascade
/// projectors for the pumped emitters plus total excitation and waveguide
/// intensity.
fn cascade_observables(system: &SystemConfig) -> Result<(ObservableSet, Vec<String>), CliError> {
    let n = system.n_emitters;
    let active = system.pumped.clone();
    let k = active.len();
    let mut obs = ObservableSet::new();
    let mut labels = Vec::new();
    let mut push = |obs: &mut ObservableSet, label: String, op| -> Result<(), CliError> {
        obs.push(label.clone(), op).map_err(CliError::core)?;
        labels.push(label);
        Ok(())
    };
    push(
        &mut obs,
        "all_e".into(),
        projector(&symmetric_state(n, &active, k).map_err(CliError::core)?),
    )?;
    for m in (1..k).rev() {
        push(
            &mut obs,
            format!("sym_{m}"),
            projector(&symmetric_state(n, &active, m).map_err(CliError::core)?),
        )?;
    }
    if k == 2 {
        let w = 1.0 / 2.0f64.sqrt();
        let mut amps = vec![C64::ZERO; system.dim()];
        let mut levels = vec![Level::G; n];
        levels[active[0] - 1] = Level::E;
        levels[active[1] - 1] = Level::F;
        amps[basis_index(&levels)] = C64::new(w, 0.0);
        levels[active[0] - 1] = Level::F;
        levels[active[1] - 1] = Level::E;
        amps[basis_index(&levels)] = C64::new(-w, 0.0);
        let minus = StateVector::from_amplitudes(n, amps).map_err(CliError::core)?;
        push(&mut obs, "minus".into(), projector(&minus))?;
    }
    push(
        &mut obs,
        "all_f".into(),
        projector(&symmetric_state(n, &active, 0).map_err(CliError::core)?),
    )?;
    push(
        &mut obs,
        "ground".into(),
        projector(&StateVector::ground(n).map_err(CliError::core)?),
    )?;
    push(
        &mut obs,
        "excited_total".into(),
        bundle_core::model::excited_population_operator(system).map_err(CliError::core)?,
    )?;
    push(
        &mut obs,
        "intensity".into(),
        waveguide_intensity_operator(system).map_err(CliError::core)?,
    )?;
    Ok((obs, labels))
}

fn run_master(ctx: &RunContext, nbar: f64) -> Result<(EvolveResult, SystemConfig), CliError> {
    let system = ctx.cfg.system().map_err(CliError::core)?;
    let train = ctx.cfg.train_with(nbar);
    let plan = ctx.cfg.plan(&system, &train);
    let (obs, _) = cascade_observables(&system)?;
    let rho0 =
        DensityMatrix::from_pure(&StateVector::ground(system.n_emitters).map_err(CliError::core)?);
    let result = evolve(&rho0, &plan, &obs, &system, &train).map_err(CliError::core)?;
    Ok((result, system))
}

/// `master`: deterministic observable time series.
pub fn cmd_master(ctx: &RunContext, out_dir: &Path) -> Result<(), CliError> {
    let system = ctx.cfg.system().map_err(CliError::core)?;
    let (nbar, fidelity) = ctx.effective_nbar(&system)?;
    let (result, _) = run_master(ctx, nbar)?;
    let out = ctx.output(out_dir)?;

    let mut columns = vec!["t".to_string()];
    columns.extend(result.labels.clone());
    let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let rows = result.times.iter().zip(&result.values).map(|(t, row)| {
        let mut cells = vec![fmt(*t)];
        cells.extend(row.iter().map(|v| fmt(*v)));
        cells
    });
    let path = out.write_table("master_timeseries.csv", &column_refs, rows)?;

    let mut plot = Plot::new("population dynamics", "t [1/gamma_1d]", "population");
    for (i, label) in result.labels.iter().enumerate() {
        if label == "intensity" || label == "excited_total" {
            continue;
        }
        let pts = result
            .times
            .iter()
            .zip(&result.values)
            .map(|(t, row)| (*t, row[i]))
            .collect();
        plot.line(label, PALETTE[i % PALETTE.len()], pts);
    }
    out.write_plot("populations.svg", &plot)?;

    if let Some(fid) = fidelity {
        println!("calibrated nbar = {nbar:.1}, pump fidelity = {fid:.4}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run_trajectories(
    ctx: &RunContext,
    nbar: f64,
) -> Result<(EnsembleRecord, SystemConfig, PulseTrain), CliError> {
    let system = ctx.cfg.system().map_err(CliError::core)?;
    let train = ctx.cfg.train_with(nbar);
    let plan = ctx.cfg.plan(&system, &train);
    let opts = TrajectoryOptions {
        snapshot_times: ctx.cfg.snapshot_times.clone(),
        ..Default::default()
    };
    let ens = run_ensemble(
        &system,
        &train,
        ctx.cfg.master_seed,
        ctx.cfg.n_trajectories,
        &plan,
        &opts,
        ctx.workers,
    )
    .map_err(CliError::core)?;
    Ok((ens, system, train))
}

/// `trajectories`: Monte Carlo click log plus optional reconstructed
/// populations at the snapshot times.
pub fn cmd_trajectories(ctx: &RunContext, out_dir: &Path) -> Result<(), CliError> {
    let system = ctx.cfg.system().map_err(CliError::core)?;
    let (nbar, fidelity) = ctx.effective_nbar(&system)?;
    let (ens, system, _train) = run_trajectories(ctx, nbar)?;
    let out = ctx.output(out_dir)?;

    let mut log = Vec::new();
    write_click_log(&ens, &mut log).map_err(CliError::io)?;
    let log_path = out.write_raw("clicks.log", &log)?;

    if !ctx.cfg.snapshot_times.is_empty() {
        let series = reconstruct_density(&ens, &ctx.cfg.snapshot_times).map_err(CliError::core)?;
        let dim = system.dim();
        let mut columns = vec!["t".to_string()];
        columns.extend((0..dim).map(|s| format!("p_{s}")));
        let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
        let rows = series.iter().map(|(t, rho)| {
            let mut cells = vec![fmt(*t)];
            cells.extend((0..dim).map(|s| fmt(rho.get(s, s).re)));
            cells
        });
        out.write_table("reconstructed_populations.csv", &column_refs, rows)?;
    }

    let clicks: usize = ens.records.iter().map(|r| r.events.len()).sum();
    let mut meta = json!({
        "fingerprint": format!("{:#018x}", ens.fingerprint),
        "n_trajectories": ens.records.len(),
        "total_clicks": clicks,
        "nbar": nbar,
    });
    if let Some(fid) = fidelity {
        meta["pump_fidelity"] = json!(fid);
    }
    out.write_json("run_meta.json", &meta)?;
    println!("wrote {}", log_path.display());
    Ok(())
}

/// `stats`: statistics tables from an existing click log.
pub fn cmd_stats(ctx: &RunContext, log_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(log_path).map_err(CliError::io)?;
    let ens = read_click_log(std::io::BufReader::new(file)).map_err(CliError::core)?;
    if ens.records.is_empty() || ens.records.iter().all(|r| r.events.is_empty()) {
        return Err(CliError::new(
            ExitCode::NoData,
            format!("click log {} holds no events", log_path.display()),
        ));
    }
    let out = ctx.output(out_dir)?;
    let n_bundle = ctx.cfg.pumped.len().max(1);

    let train = ctx.cfg.train_with(ctx.cfg.nbar);
    let ws = WindowScheme::tiling(&train.peak_times(), ctx.cfg.period, ctx.cfg.t_end)
        .map_err(CliError::core)?;
    let wc = count_per_window(&ens, &ws).map_err(CliError::core)?;
    let dist = photon_number_distribution(&wc).map_err(CliError::core)?;

    out.write_table(
        "distribution.csv",
        &["window", "m", "probability", "std_error"],
        dist.per_window.iter().enumerate().flat_map(|(w, table)| {
            table
                .iter()
                .map(move |&(m, p, se)| vec![w.to_string(), m.to_string(), fmt(p), fmt(se)])
                .collect::<Vec<_>>()
        }),
    )?;
    out.write_table(
        "distribution_pooled.csv",
        &["m", "probability", "std_error"],
        dist.pooled
            .iter()
            .map(|&(m, p, se)| vec![m.to_string(), fmt(p), fmt(se)]),
    )?;

    let max_lag = (ws.n_windows() - 1).min(4);
    let lags: Vec<usize> = (0..=max_lag).collect();
    let g2 = g_n2(&wc, n_bundle, &lags).map_err(CliError::core)?;
    out.write_table(
        "g2.csv",
        &["lag", "estimate", "std_error"],
        g2.lags
            .iter()
            .zip(g2.estimates.iter().zip(&g2.std_errors))
            .map(|(lag, (g, se))| vec![lag.to_string(), fmt(*g), fmt(*se)]),
    )?;

    let mut interval_counts = json!(null);
    if n_bundle >= 2 {
        match interval_histogram(&ens, &ws, n_bundle, 0.05) {
            Ok(hist) => {
                out.write_table(
                    "intervals.csv",
                    &["gap_lo", "gap_hi", "count"],
                    hist.bins.iter().enumerate().map(|(k, &c)| {
                        vec![
                            fmt(k as f64 * hist.bin_width),
                            fmt((k + 1) as f64 * hist.bin_width),
                            c.to_string(),
                        ]
                    }),
                )?;
                interval_counts = json!(hist.qualifying_windows);
            }
            Err(bundle_core::Error::NoData(_)) => {}
            Err(e) => return Err(CliError::core(e)),
        }
    }

    let intensity = intensity_series(&ens, 0.05, 0.0, ctx.cfg.t_end).map_err(CliError::core)?;
    out.write_table(
        "intensity.csv",
        &["t", "rate"],
        intensity
            .bin_centers()
            .iter()
            .zip(&intensity.rates)
            .map(|(t, r)| vec![fmt(*t), fmt(*r)]),
    )?;

    let raster = click_raster(&wc, n_bundle).map_err(CliError::core)?;
    out.write_table(
        "raster.csv",
        &["trajectory", "window", "count", "class"],
        raster.cells.iter().map(|c| {
            vec![
                c.trajectory.to_string(),
                c.window.to_string(),
                c.count.to_string(),
                c.class.tag().to_string(),
            ]
        }),
    )?;

    let summary = json!({
        "fingerprint": format!("{:#018x}", ens.fingerprint),
        "n_trajectories": ens.records.len(),
        "n_windows": ws.n_windows(),
        "bundle_size": n_bundle,
        "leakage_fraction": wc.leakage_fraction(),
        "distribution": dist.pooled.iter().map(|&(m, p, se)| json!({"m": m, "p": p, "se": se})).collect::<Vec<_>>(),
        "g2": g2.lags.iter().zip(g2.estimates.iter().zip(&g2.std_errors)).map(|(lag, (g, se))| json!({"lag": lag, "estimate": g, "se": se})).collect::<Vec<_>>(),
        "qualifying_bundles": interval_counts,
    });
    let path = out.write_json("stats_summary.json", &summary)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// `trajectories` then `stats` in one pass, for the reproduce presets.
struct PresetRun {
    ens: EnsembleRecord,
    /// Master-equation companion run; skipped for the long nine-pulse
    /// presets, which only consume click statistics.
    master: Option<EvolveResult>,
    ws: WindowScheme,
    nbar: f64,
    fidelity: Option<f64>,
}

fn run_preset(
    ctx: &RunContext,
    n: usize,
    repetitions: usize,
    with_master: bool,
) -> Result<PresetRun, CliError> {
    let mut cfg = ctx.cfg.clone();
    cfg.n_emitters = n;
    cfg.pumped = (1..=n).collect();
    cfg.repetitions = repetitions;
    cfg.t_end = cfg.first_peak + cfg.period * repetitions as f64;
    cfg.snapshot_times = Vec::new();
    cfg.validate()
        .map_err(|e| CliError::new(ExitCode::Validation, e.message))?;
    let sub = RunContext {
        cfg,
        workers: ctx.workers,
        deterministic: ctx.deterministic,
    };
    let system = sub.cfg.system().map_err(CliError::core)?;
    let (nbar, fidelity) = sub.effective_nbar(&system)?;
    let (ens, _, train) = run_trajectories(&sub, nbar)?;
    let master = if with_master {
        Some(run_master(&sub, nbar)?.0)
    } else {
        None
    };
    let ws = WindowScheme::tiling(&train.peak_times(), sub.cfg.period, sub.cfg.t_end)
        .map_err(CliError::core)?;
    Ok(PresetRun {
        ens,
        master,
        ws,
        nbar,
        fidelity,
    })
}

/// `reproduce fig2|fig3|fig4`: run the 1-, 2-, and 3-emitter presets and
/// emit the corresponding data tables, plots, and a summary of headline
/// numbers.
pub fn cmd_reproduce(ctx: &RunContext, figure: &str, out_dir: &Path) -> Result<(), CliError> {
    match figure {
        "fig2" => reproduce_fig2(ctx, out_dir),
        "fig3" => reproduce_fig3(ctx, out_dir),
        "fig4" => reproduce_fig4(ctx, out_dir),
        other => Err(CliError::new(
            ExitCode::Usage,
            format!("unknown figure {other:?}; expected fig2, fig3, or fig4"),
        )),
    }
}

fn reproduce_fig2(ctx: &RunContext, out_dir: &Path) -> Result<(), CliError> {
    let out = ctx.output(out_dir)?.subdir("fig2").map_err(CliError::io)?;
    let mut summary = Vec::new();
    for n in 1..=3usize {
        let run = run_preset(ctx, n, 1, true)?;
        let wc = count_per_window(&run.ens, &run.ws).map_err(CliError::core)?;
        let dist = photon_number_distribution(&wc).map_err(CliError::core)?;

        // population dynamics panel
        let mut plot = Plot::new(
            &format!("population dynamics, {n} pumped"),
            "t [1/gamma_1d]",
            "population",
        );
        let master = run
            .master
            .as_ref()
            .expect("fig2 presets keep the master run");
        for (i, label) in master.labels.iter().enumerate() {
            if label == "intensity" || label == "excited_total" {
                continue;
            }
            let pts = master
                .times
                .iter()
                .zip(&master.values)
                .map(|(t, row)| (*t, row[i]))
                .collect();
            plot.line(label, PALETTE[i % PALETTE.len()], pts);
        }
        out.write_plot(&format!("populations_n{n}.svg"), &plot)?;

        // photon-number panel
        let mut bars = Plot::new(
            &format!("waveguide photons per pulse, {n} pumped"),
            "photon number m",
            "probability",
        );
        bars.x_range(-0.5, n as f64 + 0.5);
        bars.y_range(0.0, 1.05);
        for &(m, p, _) in &dist.pooled {
            bars.bar(m as f64, p, PALETTE[0]);
        }
        out.write_plot(&format!("distribution_n{n}.svg"), &bars)?;

        out.write_table(
            &format!("distribution_n{n}.csv"),
            &["m", "probability", "std_error"],
            dist.pooled
                .iter()
                .map(|&(m, p, se)| vec![m.to_string(), fmt(p), fmt(se)]),
        )?;
        write_timeseries(&out, &format!("populations_n{n}.csv"), master)?;

        summary.push(json!({
            "n_pumped": n,
            "nbar": run.nbar,
            "pump_fidelity": run.fidelity,
            "bundle_probability": dist.probability(n),
            "loss_probabilities": (0..n).rev().map(|m| json!({"m": m, "p": dist.probability(m)})).collect::<Vec<_>>(),
            "leakage_fraction": wc.leakage_fraction(),
        }));
    }
    let path = out.write_json("summary.json", &json!({ "cases": summary }))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn reproduce_fig3(ctx: &RunContext, out_dir: &Path) -> Result<(), CliError> {
    let out = ctx.output(out_dir)?.subdir("fig3").map_err(CliError::io)?;
    let mut decay = Plot::new("excited population decay", "t [1/gamma_1d]", "P_E / P_E(0)");
    let mut intensity_plot = Plot::new(
        "waveguide output intensity",
        "t [1/gamma_1d]",
        "rate [gamma_1d]",
    );
    let mut summary = Vec::new();
    let mut reference_gaps: Option<Vec<(f64, f64)>> = None;

    for n in 1..=3usize {
        let run = run_preset(ctx, n, 1, true)?;
        let master = run
            .master
            .as_ref()
            .expect("fig3 presets keep the master run");
        let idx = master
            .labels
            .iter()
            .position(|l| l == "excited_total")
            .expect("excited_total observable");
        let peak = master
            .values
            .iter()
            .map(|row| row[idx])
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let pts: Vec<(f64, f64)> = master
            .times
            .iter()
            .zip(&master.values)
            .map(|(t, row)| (*t, row[idx] / peak))
            .collect();
        decay.line(&format!("n = {n}"), PALETTE[n - 1], pts);

        let i_idx = master
            .labels
            .iter()
            .position(|l| l == "intensity")
            .expect("intensity observable");
        let ipts: Vec<(f64, f64)> = master
            .times
            .iter()
            .zip(&master.values)
            .map(|(t, row)| (*t, row[i_idx]))
            .collect();
        intensity_plot.line(&format!("n = {n}"), PALETTE[n - 1], ipts.clone());

        // single-photon reference: normalized intensity profile of the n=1 run
        if n == 1 {
            let total: f64 = ipts
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum();
            reference_gaps = Some(
                ipts.iter()
                    .map(|&(t, r)| (t - ctx.cfg.first_peak, r / total.max(1e-12)))
                    .filter(|&(t, _)| t >= 0.0)
                    .collect(),
            );
        }

        if n >= 2 {
            match interval_histogram(&run.ens, &run.ws, n, 0.05) {
                Ok(hist) => {
                    let mut plot = Plot::new(
                        &format!("intra-bundle intervals, {n}-photon bundles"),
                        "gap [1/gamma_1d]",
                        "density",
                    );
                    let total: f64 = hist.gaps.len() as f64 * hist.bin_width;
                    for (k, &c) in hist.bins.iter().enumerate() {
                        plot.bar(
                            (k as f64 + 0.5) * hist.bin_width,
                            c as f64 / total.max(1e-12),
                            PALETTE[n - 1],
                        );
                    }
                    if let Some(reference) = &reference_gaps {
                        plot.line("single photon", PALETTE[1], reference.clone());
                    }
                    out.write_plot(&format!("intervals_n{n}.svg"), &plot)?;
                    out.write_table(
                        &format!("intervals_n{n}.csv"),
                        &["gap_lo", "gap_hi", "count"],
                        hist.bins.iter().enumerate().map(|(k, &c)| {
                            vec![
                                fmt(k as f64 * hist.bin_width),
                                fmt((k + 1) as f64 * hist.bin_width),
                                c.to_string(),
                            ]
                        }),
                    )?;
                    summary.push(json!({
                        "n_pumped": n,
                        "bundle_events": hist.qualifying_windows,
                        "median_gap": hist.median_gap(),
                    }));
                }
                Err(bundle_core::Error::NoData(_)) => summary.push(json!({
                    "n_pumped": n,
                    "bundle_events": 0,
                })),
                Err(e) => return Err(CliError::core(e)),
            }
        }
    }
    out.write_plot("decay_comparison.svg", &decay)?;
    out.write_plot("intensity.svg", &intensity_plot)?;
    let path = out.write_json("summary.json", &json!({ "interval_statistics": summary }))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn reproduce_fig4(ctx: &RunContext, out_dir: &Path) -> Result<(), CliError> {
    let out = ctx.output(out_dir)?.subdir("fig4").map_err(CliError::io)?;
    let mut summary = Vec::new();
    for n in 1..=3usize {
        let run = run_preset(ctx, n, 9, false)?;
        let wc = count_per_window(&run.ens, &run.ws).map_err(CliError::core)?;
        let max_lag = (run.ws.n_windows() - 1).min(4);
        let lags: Vec<usize> = (0..=max_lag).collect();
        let g2 = g_n2(&wc, n, &lags).map_err(CliError::core)?;

        let mut gplot = Plot::new(
            &format!("bundle correlation g_{n}^2, {n} pumped"),
            "window lag",
            "g^2",
        );
        gplot.y_range(0.0, 1.3);
        for (lag, g) in g2.lags.iter().zip(&g2.estimates) {
            gplot.bar(*lag as f64, *g, PALETTE[n - 1]);
        }
        out.write_plot(&format!("g2_n{n}.svg"), &gplot)?;
        out.write_table(
            &format!("g2_n{n}.csv"),
            &["lag", "estimate", "std_error"],
            g2.lags
                .iter()
                .zip(g2.estimates.iter().zip(&g2.std_errors))
                .map(|(lag, (g, se))| vec![lag.to_string(), fmt(*g), fmt(*se)]),
        )?;

        // raster of the first 20 trajectories
        let raster = click_raster(&wc, n).map_err(CliError::core)?;
        let shown = 20.min(wc.n_trajectories());
        let mut rplot = Plot::new(
            &format!("clicks over {shown} trajectories, {n} pumped"),
            "window",
            "trajectory",
        );
        rplot.x_range(-0.5, run.ws.n_windows() as f64 - 0.5);
        rplot.y_range(-0.5, shown as f64 - 0.5);
        for cell in raster.cells.iter().filter(|c| c.trajectory < shown) {
            let color = match cell.class {
                RasterClass::FullBundle => "#222222",
                RasterClass::OneLoss => "#d62728",
                RasterClass::TwoLoss => "#2ca02c",
                RasterClass::Other => "#bbbbbb",
            };
            rplot.dot(cell.window as f64, cell.trajectory as f64, color);
        }
        out.write_plot(&format!("raster_n{n}.svg"), &rplot)?;
        out.write_table(
            &format!("raster_n{n}.csv"),
            &["trajectory", "window", "count", "class"],
            raster.cells.iter().map(|c| {
                vec![
                    c.trajectory.to_string(),
                    c.window.to_string(),
                    c.count.to_string(),
                    c.class.tag().to_string(),
                ]
            }),
        )?;

        let full = raster
            .cells
            .iter()
            .filter(|c| c.class == RasterClass::FullBundle)
            .count() as f64
            / raster.cells.len() as f64;
        summary.push(json!({
            "n_pumped": n,
            "windows": run.ws.n_windows(),
            "g2_zero": g2.estimates[0],
            "g2_tail": g2.lags[1..].iter().zip(&g2.estimates[1..]).map(|(l, g)| json!({"lag": l, "estimate": g})).collect::<Vec<_>>(),
            "full_bundle_fraction": full,
            "pump_fidelity": run.fidelity,
        }));
    }
    let path = out.write_json("summary.json", &json!({ "cases": summary }))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_timeseries(
    out: &OutputContext,
    name: &str,
    result: &EvolveResult,
) -> Result<(), CliError> {
    let mut columns = vec!["t".to_string()];
    columns.extend(result.labels.clone());
    let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    out.write_table(
        name,
        &column_refs,
        result.times.iter().zip(&result.values).map(|(t, row)| {
            let mut cells = vec![fmt(*t)];
            cells.extend(row.iter().map(|v| fmt(*v)));
            cells
        }),
    )?;
    Ok(())
}
