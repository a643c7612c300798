// SPDX-License-Identifier: Apache-2.0

use dicke_core::analysis::{
    average_runs, g2_estimator, g2_from_counts, split_subtraces, time_to_coupling, CouplingAxis,
    SubtraceOptions,
};
use dicke_core::trace::{ClickTrace, RampInfo};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn poisson_trace(rate: f64, duration: f64, seed: u64) -> ClickTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(rate).unwrap();
    let mut t = 0.0;
    let mut ts: Vec<u64> = Vec::new();
    loop {
        t += exp.sample(&mut rng);
        if t >= duration {
            break;
        }
        let ns = (t * 1e9) as u64;
        if ts.last().is_none_or(|&l| ns > l) {
            ts.push(ns);
        }
    }
    ClickTrace::new(ts, (duration * 1e9) as u64).unwrap()
}

#[test]
fn poisson_clicks_are_uncorrelated() {
    let (bin, max_lag) = (2e-6, 100e-6);
    let est: Vec<_> = (0..100)
        .map(|s| g2_estimator(&poisson_trace(2e4, 0.5, s), 0.0, 0.5, bin, max_lag).unwrap())
        .collect();
    let avg = average_runs(&est).unwrap();
    assert_eq!(avg.g2.len(), 51);
    let mut outside = 0;
    for (g, e) in avg.g2.iter().zip(&avg.err) {
        assert!(*e > 0.0);
        if (g - 1.0).abs() > 3.0 * e {
            outside += 1;
        }
    }
    assert!(outside <= 1, "{outside} lags outside 3 sigma");
    let mean_err = avg.err.iter().sum::<f64>() / avg.err.len() as f64;
    let mean_dev = avg.g2.iter().map(|g| g - 1.0).sum::<f64>() / avg.g2.len() as f64;
    assert!(mean_dev.abs() < 3.0 * mean_err);
}

#[test]
fn periodic_clicks_peak_at_the_period() {
    // One click every 100 µs with a little jitter.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ts: Vec<u64> = (1..10_000u64)
        .map(|i| i * 100_000 + rng.random_range(0..500))
        .collect();
    let tr = ClickTrace::new(ts, 1_000_000_000).unwrap();
    let g = g2_estimator(&tr, 0.0, 1.0, 2e-6, 250e-6).unwrap();
    for k in [50, 100] {
        assert!(g.g2[k] > 20.0, "lag {k}: {}", g.g2[k]);
    }
    for k in [0, 25, 75, 125] {
        assert!(g.g2[k] < 1e-12, "lag {k}: {}", g.g2[k]);
    }
}

#[test]
fn estimator_needs_two_clicks() {
    assert!(g2_from_counts(&[0, 0, 0, 0], 1e-6, 2e-6).is_err());
    assert!(g2_from_counts(&[0, 1, 0, 0], 1e-6, 2e-6).is_err());
    assert!(g2_from_counts(&[0, 1, 0, 1], 1e-6, 2e-6).is_ok());
}

#[test]
fn averaging_one_estimate_is_the_identity() {
    let e = g2_estimator(&poisson_trace(5e4, 0.2, 9), 0.0, 0.2, 2e-6, 40e-6).unwrap();
    let a = average_runs(std::slice::from_ref(&e)).unwrap();
    for k in 0..e.g2.len() {
        assert!((a.g2[k] - e.g2[k]).abs() <= 1e-14 * e.g2[k].abs().max(1.0));
        assert!((a.err[k] - e.err[k]).abs() <= 1e-14 * e.err[k]);
    }
    let b = average_runs(&[e.clone(), e.clone()]).unwrap();
    for k in 0..e.g2.len() {
        assert!((b.g2[k] - e.g2[k]).abs() <= 1e-14 * e.g2[k].abs().max(1.0));
        assert!((b.err[k] * 2f64.sqrt() / e.err[k] - 1.0).abs() < 1e-12);
    }
    assert!(average_runs(&[]).is_none());
}

#[test]
fn subtraces_partition_the_normal_phase() {
    let ramp = RampInfo::default();
    let opts = SubtraceOptions::default();
    for (t_cr, loss) in [(0.8, 0.0), (0.9, 0.1), (0.35, 0.0)] {
        let axis = CouplingAxis::new(ramp, t_cr, loss);
        let s = split_subtraces(&axis, &opts);
        assert!(!s.is_empty());
        assert_eq!(s[0].t_start, 0.0);
        assert_eq!(s.last().unwrap().t_end, t_cr);
        for w in s.windows(2) {
            assert_eq!(w[0].t_end, w[1].t_start);
            assert!(w[0].x_mean < w[1].x_mean);
        }
        // Lengths shrink toward the crossing, bounded above except the
        // merged first piece.
        let len: Vec<f64> = s.iter().map(|p| p.t_end - p.t_start).collect();
        for w in len[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for l in &len[1..] {
            assert!(*l <= opts.max_length + 1e-12 && *l >= opts.min_length - 1e-12);
        }
        for p in &s {
            assert!(p.x_mean > axis.x(p.t_start) && p.x_mean < axis.x(p.t_end));
        }
    }
}

#[test]
fn axis_is_normalized_at_the_crossing() {
    let axis = CouplingAxis::new(RampInfo::default(), 0.7, 0.05);
    assert!((axis.x(0.7) - 1.0).abs() < 1e-15);
    for t in [0.0, 0.2, 0.5, 0.69] {
        assert!((axis.time_of(axis.x(t)) - t).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn lossless_coupling_is_affine_in_time(
        t_cr in 0.1f64..1.0,
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
        a in 0.0f64..1.0,
    ) {
        let r = RampInfo::default();
        prop_assert!((time_to_coupling(t_cr, t_cr, &r, 0.0) - 1.0).abs() < 1e-15);
        let lhs = time_to_coupling(a * t1 + (1.0 - a) * t2, t_cr, &r, 0.0);
        let rhs = a * time_to_coupling(t1, t_cr, &r, 0.0) + (1.0 - a) * time_to_coupling(t2, t_cr, &r, 0.0);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn atom_loss_raises_early_coupling(t_cr in 0.1f64..1.0, f in 0.0f64..0.99, loss in 0.01f64..0.3) {
        let r = RampInfo::default();
        let t = f * t_cr;
        prop_assert!(time_to_coupling(t, t_cr, &r, loss) > time_to_coupling(t, t_cr, &r, 0.0) - 1e-15);
    }
}
