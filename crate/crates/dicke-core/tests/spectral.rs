// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::{PI, TAU};

use dicke_core::fitpipe::{model_g2_at, ModelOptions};
use dicke_core::meanfield::steady_state_x;
use dicke_core::spectral::{
    correlation_curve, determinant, fluctuation_curves_fft, g2_from_fluctuations,
    incoherent_photon_number, matrix_elements, matrix_m, DeterminantMode, EffectiveModel,
};
use dicke_core::PhysicalParams;
use num_complex::Complex64;
use proptest::prelude::*;

fn model(x: f64, gamma_hz: f64) -> EffectiveModel {
    EffectiveModel::new(&PhysicalParams::reference(), x, TAU * gamma_hz).unwrap()
}

/// Frequency of the largest |Σ (f(τ) − baseline) e^{-iωτ}| on a fine grid.
fn dominant_frequency(f: &[f64], baseline: f64, dt: f64, lo: f64, hi: f64) -> f64 {
    let n = 4000;
    let mut best = (0.0, lo);
    for i in 0..=n {
        let w = lo + (hi - lo) * i as f64 / n as f64;
        let s: Complex64 = f
            .iter()
            .enumerate()
            .map(|(k, v)| (v - baseline) * Complex64::from_polar(1.0, -w * k as f64 * dt))
            .sum();
        if s.norm() > best.0 {
            best = (s.norm(), w);
        }
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_elements_invert_response_matrix(
        x in 0.05f64..0.99,
        gamma_hz in 1.0f64..2000.0,
        log_nu in 1.0f64..9.0,
        negative in any::<bool>(),
    ) {
        let m = model(x, gamma_hz).with_mode(DeterminantMode::Exact);
        let nu = if negative { -1.0 } else { 1.0 } * 10f64.powf(log_nu);
        let e = matrix_elements(nu, &m).unwrap();
        let inv = matrix_m(nu, &m).try_inverse().unwrap();
        for (j, v) in [e.m11, e.m12, e.m13, e.m14].iter().enumerate() {
            let r = inv[(0, j)];
            prop_assert!((v - r).norm() <= 1e-10 * r.norm(), "m1{} {} vs {}", j + 1, v, r);
        }
    }

    #[test]
    fn determinant_is_hermitian_in_frequency(
        x in 0.0f64..0.99,
        gamma_hz in 0.0f64..2000.0,
        nu in -1e8f64..1e8,
    ) {
        let m = model(x, gamma_hz).with_mode(DeterminantMode::Exact);
        let a = determinant(nu, &m);
        let b = determinant(-nu, &m).conj();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
    }
}

#[test]
fn coherent_light_has_flat_correlations() {
    // No coupling, no fluctuations: only the coherent amplitude remains.
    let m = model(0.0, 250.0)
        .with_alpha(Complex64::new(0.3, -0.1))
        .with_background(0.0);
    let tau: Vec<f64> = (0..50).map(|k| k as f64 * 2e-5).collect();
    let c = correlation_curve(&tau, &m).unwrap();
    for g in &c.g2 {
        assert!((g - 1.0).abs() < 1e-6, "g2 = {g}");
    }
}

#[test]
fn thermal_light_bunches_and_decorrelates() {
    for x in [0.5, 0.8, 0.95] {
        let m = model(x, 250.0).with_background(0.0);
        let fc = fluctuation_curves_fft(&m, 1e-6, 40_000).unwrap();
        let g = g2_from_fluctuations(&fc, &m, Complex64::new(0.0, 0.0), 0.0).unwrap();
        assert!(g[0] >= 2.0, "x={x}: g2(0) = {}", g[0]);
        assert!(
            (g[g.len() - 1] - 1.0).abs() < 1e-3,
            "x={x}: tail {}",
            g[g.len() - 1]
        );
    }
}

#[test]
fn long_lag_limit_with_field_and_background() {
    let p = PhysicalParams::reference();
    for (x, zeta) in [(0.6, 60.0), (0.9, 30.0)] {
        let a = steady_state_x(&p, x, zeta).unwrap().alpha;
        let m = model(x, 300.0).with_alpha(a);
        let fc = fluctuation_curves_fft(&m, 1e-6, 40_000).unwrap();
        let g = g2_from_fluctuations(&fc, &m, a, m.n_b).unwrap();
        assert!((g[g.len() - 1] - 1.0).abs() < 1e-3);
        assert!(g.iter().all(|v| *v > 0.0));
    }
}

#[test]
fn soft_mode_sets_the_oscillation() {
    let p = PhysicalParams::reference();
    for x in [0.5, 0.8, 0.95] {
        let ws = p.omega0 * (1.0f64 - x).sqrt();
        let m = model(x, 100.0).with_mode(DeterminantMode::Exact);
        let fine = 2e-8;
        let stride = (0.1 / ws / fine) as usize;
        let dt = stride as f64 * fine;
        let n = (40.0 * TAU / ws / fine) as usize;
        let fc = fluctuation_curves_fft(&m, fine, n).unwrap();
        let re: Vec<f64> = fc.g1.iter().step_by(stride).map(|z| z.re).collect();
        let w1 = dominant_frequency(&re, 0.0, dt, 0.3 * ws, 3.0 * ws);
        assert!((w1 / ws - 1.0).abs() < 0.02, "x={x}: G1 at {w1} vs {ws}");
        // With a coherent admixture the g² cross term oscillates at ω_s.
        let a = Complex64::new((2.0 * fc.n_inc).sqrt(), 0.0);
        let g: Vec<f64> = g2_from_fluctuations(&fc, &m.with_alpha(a), a, 0.0)
            .unwrap()
            .into_iter()
            .step_by(stride)
            .collect();
        let w2 = dominant_frequency(&g, 1.0, dt, 0.3 * ws, 3.0 * ws);
        assert!((w2 / ws - 1.0).abs() < 0.02, "x={x}: g2 at {w2} vs {ws}");
    }
}

#[test]
fn open_system_photon_number_diverges_linearly() {
    let mut p = PhysicalParams::reference();
    p.temperature = 0.0;
    p.r_b = 0.0;
    let xs: Vec<f64> = (0..8).map(|i| 0.9 + 0.09 * i as f64 / 7.0).collect();
    let n: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let m = EffectiveModel::new(&p, x, 0.0)
                .unwrap()
                .with_mode(DeterminantMode::Exact);
            incoherent_photon_number(&m).unwrap()
        })
        .collect();
    let fit = dicke_core::fitpipe::fit_power_law(&xs, &n, 0.9, 0.99).unwrap();
    assert!(
        (fit.exponent - 1.0).abs() < 0.05,
        "exponent {}",
        fit.exponent
    );
}

#[test]
fn phase_average_is_trivial_without_field() {
    let p = PhysicalParams::reference();
    let o = ModelOptions::default();
    let one = ModelOptions {
        n_phi: 1,
        ..o.clone()
    };
    for x in [0.6, 0.9] {
        let a = model_g2_at(&p, x, 2.0 * PI * 300.0, 0.0, 200, &o).unwrap();
        let b = model_g2_at(&p, x, 2.0 * PI * 300.0, 0.0, 200, &one).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * v.abs(), "{u} vs {v}");
        }
    }
}

#[test]
fn threshold_is_outside_the_normal_phase_model() {
    let p = PhysicalParams::reference();
    assert!(EffectiveModel::new(&p, 1.0, 0.0).is_err());
    assert!(EffectiveModel::new(&p, 1.2, 0.0).is_err());
}
