// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::TAU;

use dicke_core::analysis::NbarPoint;
use dicke_core::fitpipe::{
    density_fluctuations_from_nbar, fit_empirical_gamma, fit_gamma_zeta, fit_power_law,
    mean_coherent_photons, model_g2_at, BinData, FitOptions,
};
use dicke_core::synth::empirical_gamma;
use dicke_core::PhysicalParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LAGS: usize = 201;
const XS: [f64; 5] = [0.6, 0.7, 0.8, 0.88, 0.94];

fn gamma_hz(x: f64) -> f64 {
    150.0 + 300.0 * x * x
}

fn synthetic(zeta: f64, rel_err: f64, noise_seed: Option<u64>) -> Vec<BinData> {
    let p = PhysicalParams::reference();
    let o = FitOptions::default();
    let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
    XS.iter()
        .map(|&x| {
            let m = model_g2_at(&p, x, TAU * gamma_hz(x), zeta, LAGS, &o.model).unwrap();
            let err: Vec<f64> = m.iter().map(|v| rel_err * v).collect();
            let g2 = match rng.as_mut() {
                Some(r) => m
                    .iter()
                    .zip(&err)
                    .map(|(v, e)| {
                        v + e * {
                            let z: f64 = StandardNormal.sample(r);
                            z
                        }
                    })
                    .collect(),
                None => m,
            };
            BinData {
                x,
                g2,
                err,
                segments: vec![],
            }
        })
        .collect()
}

#[test]
fn noiseless_data_are_recovered() {
    let p = PhysicalParams::reference();
    let f = fit_gamma_zeta(&synthetic(60.0, 0.01, None), &p, &FitOptions::default()).unwrap();
    assert!((f.zeta / 60.0 - 1.0).abs() < 0.02, "zeta {}", f.zeta);
    for b in &f.bins {
        let g = b.gamma / TAU;
        assert!(
            (g / gamma_hz(b.x) - 1.0).abs() < 0.01,
            "x={} gamma {g}",
            b.x
        );
        assert!(b.chi2_red < 1e-3);
    }
}

#[test]
fn absent_field_is_consistent_with_zero() {
    let p = PhysicalParams::reference();
    let f = fit_gamma_zeta(&synthetic(0.0, 0.02, Some(17)), &p, &FitOptions::default()).unwrap();
    assert!(f.zeta >= 0.0);
    assert!(
        f.zeta <= 2.0 * f.zeta_err + 1e-9,
        "zeta {} +- {}",
        f.zeta,
        f.zeta_err
    );
    for b in &f.bins {
        let g = b.gamma / TAU;
        assert!(
            (g - gamma_hz(b.x)).abs() < 3.0 * b.gamma_err / TAU,
            "x={} gamma {g}",
            b.x
        );
    }
}

#[test]
fn rescaled_errors_rescale_uncertainties_only() {
    let p = PhysicalParams::reference();
    let o = FitOptions::default();
    let d = synthetic(40.0, 0.02, Some(5));
    let mut d2 = d.clone();
    for b in &mut d2 {
        b.err.iter_mut().for_each(|e| *e *= 2.0);
    }
    let a = fit_gamma_zeta(&d, &p, &o).unwrap();
    let b = fit_gamma_zeta(&d2, &p, &o).unwrap();
    assert!((a.zeta - b.zeta).abs() < 1e-3 * a.zeta_err);
    assert!((b.zeta_err / a.zeta_err / 2.0 - 1.0).abs() < 0.05);
    for (u, v) in a.bins.iter().zip(&b.bins) {
        assert!((u.gamma - v.gamma).abs() < 1e-3 * u.gamma_err);
        assert!((v.gamma_err / u.gamma_err / 2.0 - 1.0).abs() < 0.05);
        assert!((u.chi2_red / v.chi2_red / 4.0 - 1.0).abs() < 1e-3);
    }
}

fn grid() -> Vec<f64> {
    (0..21).map(|i| 0.56 + 0.02 * i as f64).collect()
}

#[test]
fn empirical_curve_is_recovered() {
    let truth = [120.0, 0.6, 1.5, 30.0, 1.2, 0.5];
    let x = grid();
    let g: Vec<f64> = x.iter().map(|&v| empirical_gamma(&truth, v)).collect();
    let e: Vec<f64> = g.iter().map(|v| 0.01 * v).collect();
    let f = fit_empirical_gamma(&x, &g, &e).unwrap();
    assert!(f.converged);
    for (xi, gi) in x.iter().zip(&g) {
        assert!(
            (f.eval(*xi) / gi - 1.0).abs() < 0.02,
            "x={xi}: {} vs {gi}",
            f.eval(*xi)
        );
    }
}

#[test]
fn empirical_fit_of_zeros_is_zero() {
    let x = grid();
    let z = vec![0.0; x.len()];
    let f = fit_empirical_gamma(&x, &z, &vec![1.0; x.len()]).unwrap();
    assert_eq!(f.c[0], 0.0);
    assert_eq!(f.c[3], 0.0);
    assert!(fit_empirical_gamma(&x[..6], &z[..6], &z[..6]).is_err());
}

#[test]
fn empirical_fit_stays_non_negative_near_threshold() {
    // Noisy data with a dip: the fitted curve must not go negative.
    let x = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g: Vec<f64> = x
        .iter()
        .map(|&v| {
            300.0 * (1.0 - v).powf(0.2)
                + 30.0 * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
        })
        .collect();
    let f = fit_empirical_gamma(&x, &g, &vec![30.0; x.len()]).unwrap();
    for i in 0..1000 {
        let v = f.eval(i as f64 / 1000.0);
        assert!(v >= 0.0 && v.is_finite(), "{v}");
    }
}

#[test]
fn coherent_photons_carry_no_density_fluctuations() {
    let p = PhysicalParams::reference();
    let pts: Vec<NbarPoint> = [0.6, 0.8, 0.95]
        .iter()
        .map(|&x| NbarPoint {
            x,
            rate: 0.0,
            nbar: mean_coherent_photons(&p, x, 50.0, 32).unwrap(),
            nbar_err: 1e-6,
            clamped: false,
        })
        .collect();
    for f in density_fluctuations_from_nbar(&pts, 50.0, 0.0, &p, 32).unwrap() {
        assert!(f.variance.abs() < 1e-9, "{}", f.variance);
    }
    // Without a field all photons are fluctuations.
    for f in density_fluctuations_from_nbar(&pts, 0.0, 0.0, &p, 32).unwrap() {
        let nbar = pts.iter().find(|q| q.x == f.x).unwrap().nbar;
        let v = 4.0 * p.omega / (p.omega0 * f.x) * nbar;
        assert!((f.variance - v).abs() <= 1e-12 * v);
        assert_eq!(f.coherent, 0.0);
    }
}

proptest! {
    #[test]
    fn power_law_exponent_ignores_scale(
        nu in 0.2f64..2.0,
        scale in 1e-6f64..1e6,
        wobble in prop::collection::vec(-0.05f64..0.05, 12),
    ) {
        let x: Vec<f64> = (0..12).map(|i| 0.8 + 0.015 * i as f64).collect();
        let v: Vec<f64> = x.iter().zip(&wobble).map(|(x, w)| (1.0 - x).powf(-nu) * w.exp()).collect();
        let sv: Vec<f64> = v.iter().map(|v| v * scale).collect();
        let a = fit_power_law(&x, &v, 0.8, 0.99).unwrap();
        let b = fit_power_law(&x, &sv, 0.8, 0.99).unwrap();
        prop_assert!((a.exponent - b.exponent).abs() < 1e-9);
        prop_assert!((a.exponent - nu).abs() < 0.2);
    }
}

#[test]
fn power_law_skips_non_positive_points() {
    let x: Vec<f64> = (0..8).map(|i| 0.9 + 0.01 * i as f64).collect();
    let mut v: Vec<f64> = x.iter().map(|x| (1.0 - x).powf(-1.0)).collect();
    v[2] = 0.0;
    let f = fit_power_law(&x, &v, 0.9, 0.99).unwrap();
    assert_eq!(f.excluded, 1);
    assert_eq!(f.points, 7);
    assert!((f.exponent - 1.0).abs() < 1e-12);
    assert!(fit_power_law(&x[..3], &v[..3], 0.9, 0.99).is_err());
}
