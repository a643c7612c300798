// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::TAU;

use dicke_core::spectral::incoherent_photon_number;
use dicke_core::synth::{
    clicks_from_field, derive_seed, synthesize_stationary, synthesize_sweep, FieldBlock,
    StationaryConfig, SweepSchedule, SynthOptions,
};
use dicke_core::PhysicalParams;
use num_complex::Complex64;

fn quiet_field(duration: f64, dt: f64) -> FieldBlock {
    FieldBlock {
        dt,
        samples: vec![Complex64::new(0.0, 0.0); (duration / dt).round() as usize],
        violation: 0.0,
    }
}

fn within_poisson(n: usize, expected: f64) -> bool {
    (n as f64 - expected).abs() < 4.0 * expected.sqrt()
}

#[test]
fn empty_cavity_gives_background_only() {
    let p = PhysicalParams::reference();
    let f = quiet_field(20.0, 1e-4);
    let tr = clicks_from_field(&f, Complex64::new(0.0, 0.0), &p, 5).unwrap();
    assert!(
        within_poisson(tr.len(), p.r_b * 20.0),
        "{} clicks",
        tr.len()
    );
}

#[test]
fn coherent_field_gives_poisson_clicks() {
    let p = PhysicalParams::reference();
    let (duration, dt) = (0.05, 1e-7);
    let tr =
        clicks_from_field(&quiet_field(duration, dt), Complex64::new(0.6, 0.8), &p, 11).unwrap();
    let rate = 2.0 * TAU * 1.25e6 * 0.05 + p.r_b;
    assert!((p.click_rate_per_photon() - 7.853_981_6e5).abs() < 1.0);
    assert!(
        within_poisson(tr.len(), rate * duration),
        "{} clicks",
        tr.len()
    );

    // Counts in 100 µs windows: variance equals mean.
    let w = 100_000u64;
    let mut counts = vec![0.0f64; (duration * 1e9) as usize / w as usize];
    for t in &tr.timestamps {
        counts[(*t / w) as usize] += 1.0;
    }
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    assert!((var / mean - 1.0).abs() < 0.2, "Fano factor {}", var / mean);
}

#[test]
fn click_rates_beyond_the_step_limit_are_rejected() {
    let p = PhysicalParams::reference();
    let f = quiet_field(1e-3, 1e-6);
    assert!(clicks_from_field(&f, Complex64::new(1.0, 0.0), &p, 0).is_err());
}

fn stationary(seed: u64, duration: f64) -> StationaryConfig {
    StationaryConfig {
        x: 0.9,
        gamma: TAU * 300.0,
        zeta: 30.0,
        phi: 0.4,
        duration,
        seed,
        ..StationaryConfig::default()
    }
}

#[test]
fn seeds_determine_the_stream() {
    let p = PhysicalParams::reference();
    let o = SynthOptions::default();
    let a = synthesize_stationary(&stationary(1, 0.05), &p, &o).unwrap();
    let b = synthesize_stationary(&stationary(1, 0.05), &p, &o).unwrap();
    let c = synthesize_stationary(&stationary(2, 0.05), &p, &o).unwrap();
    assert_eq!(a.trace.timestamps, b.trace.timestamps);
    assert_ne!(a.trace.timestamps, c.trace.timestamps);
    assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
}

#[test]
fn stationary_rate_matches_the_model() {
    let p = PhysicalParams::reference();
    let o = SynthOptions::default();
    let cfg = stationary(4, 2.0);
    let m = cfg.model(&p, &o).unwrap();
    let n = m.alpha.norm_sqr() + incoherent_photon_number(&m).unwrap();
    let expected = p.click_rate_per_photon() * n + p.r_b;
    let s = synthesize_stationary(&cfg, &p, &o).unwrap();
    let rate = s.trace.len() as f64 / cfg.duration;
    assert!((rate / expected - 1.0).abs() < 0.05, "{rate} vs {expected}");
}

#[test]
fn sweep_rate_grows_toward_threshold() {
    let p = PhysicalParams::reference();
    let s = SweepSchedule {
        zeta: 60.0,
        seed: 8,
        ..SweepSchedule::default()
    };
    let syn = synthesize_sweep(&s, &p, &SynthOptions::default()).unwrap();
    let edges = [0.6, 0.7, 0.8, 0.9, 0.97];
    let rates: Vec<f64> = edges
        .windows(2)
        .map(|w| {
            let (a, b) = (s.time_of(w[0]).unwrap(), s.time_of(w[1]).unwrap());
            syn.trace.window(a, b).len() as f64 / (b - a)
        })
        .collect();
    for w in rates.windows(2) {
        assert!(w[1] > w[0], "{rates:?}");
    }
    assert!(syn.report.clicks == syn.trace.len());
}
