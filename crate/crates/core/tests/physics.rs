//! Physics-level checks that need real trajectory ensembles: emission
//! branching against closed-form rates and intra-bundle photon bunching
//! against the single-emitter waiting-time oracle.

use bundle_core::master::IntegrationPlan;
use bundle_core::model::{calibrate_pi_pulse, PulseTrain, SystemConfig};
use bundle_core::stats::{
    count_per_window, interval_histogram, photon_number_distribution, WindowScheme,
};
use bundle_core::trajectories::{run_ensemble, TrajectoryOptions};

fn calibrated_train(cfg: &SystemConfig, first_peak: f64) -> PulseTrain {
    let cal = calibrate_pi_pulse(cfg, 200.0).unwrap();
    PulseTrain::single_shot(cfg, cal.nbar, 200.0, first_peak)
}

#[test]
fn single_emitter_waveguide_probability_matches_branching() {
    // one pumped emitter emits into the waveguide with probability
    // gamma_1d / (gamma_1d + gamma) once excited
    let cfg = SystemConfig::new(1, vec![0.0], 1.0, 0.05, 2.0, vec![1]).unwrap();
    let train = calibrated_train(&cfg, 0.5);
    let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 6.5);
    let m = 4000;
    let ens = run_ensemble(
        &cfg,
        &train,
        41,
        m,
        &plan,
        &TrajectoryOptions::default(),
        None,
    )
    .unwrap();
    let ws = WindowScheme::tiling(&train.peak_times(), 0.0, 6.5).unwrap();
    let wc = count_per_window(&ens, &ws).unwrap();
    let dist = photon_number_distribution(&wc).unwrap();
    let want = 1.0 / 1.05; // the pump is nearly perfect, so branching dominates
    let se = (want * (1.0 - want) / m as f64).sqrt();
    let got = dist.probability(1);
    assert!(
        (got - want).abs() < 3.0 * se + 0.003,
        "P(1 waveguide photon) = {got:.4}, branching predicts {want:.4}"
    );
}

#[test]
fn bundle_photons_bunch_relative_to_single_photon_reference() {
    // gaps inside a two-photon bundle are stochastically smaller than the
    // single-emitter e -> f waiting time (median ln 2 / (gamma_1d + gamma))
    let cfg = SystemConfig::chain(2, 1.0).unwrap();
    let train = calibrated_train(&cfg, 0.5);
    let plan = IntegrationPlan::auto(&cfg, &train, 0.0, 6.5);
    let ens = run_ensemble(
        &cfg,
        &train,
        42,
        500,
        &plan,
        &TrajectoryOptions::default(),
        None,
    )
    .unwrap();
    let ws = WindowScheme::tiling(&train.peak_times(), 0.0, 6.5).unwrap();
    let hist = interval_histogram(&ens, &ws, 2, 0.05).unwrap();
    assert!(hist.qualifying_windows > 300);
    assert_eq!(hist.gaps.len(), hist.qualifying_windows);

    let median = hist.median_gap().unwrap();
    let single_photon_median = std::f64::consts::LN_2 / 1.05;
    assert!(
        median < single_photon_median,
        "bundle gap median {median:.3} is not below the single-photon reference {single_photon_median:.3}"
    );
}
