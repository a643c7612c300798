// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use approx::assert_relative_eq;
use dicke_core::meanfield::{
    hp_renormalize, phi_grid, steady_state_branch, steady_state_closed_form, steady_state_residual,
    steady_state_x, Branch,
};
use dicke_core::PhysicalParams;
use proptest::prelude::*;

#[test]
fn symmetric_root_matches_bifurcation_branch() {
    let p = PhysicalParams::reference();
    for x in [1.1, 1.5, 2.0, 4.0] {
        let s = steady_state_x(&p, x, 0.0).unwrap();
        let want = steady_state_closed_form(&p, p.lambda_at(x));
        assert_relative_eq!(s.beta, want, max_relative = 1e-9);
        assert_eq!(s.branch, Branch::Plus);
        let minus = steady_state_branch(&p, p.lambda_at(x), 0.0, Branch::Minus).unwrap();
        assert_relative_eq!(minus.beta, -want, max_relative = 1e-9);
    }
}

#[test]
fn normal_phase_without_field_is_empty() {
    let p = PhysicalParams::reference();
    for x in [0.0, 0.5, 0.99] {
        let s = steady_state_x(&p, x, 0.0).unwrap();
        assert_eq!(s.beta, 0.0);
        assert_eq!(s.photon_number(), 0.0);
        assert_relative_eq!(s.w, -p.n_atoms / 2.0);
    }
}

#[test]
fn field_response_below_threshold_is_linear() {
    // β ≈ xζ/(1−x) for β ≪ N.
    let p = PhysicalParams::reference();
    for x in [0.3, 0.6, 0.9] {
        let s = steady_state_x(&p, x, 1.0).unwrap();
        assert_relative_eq!(s.beta, x / (1.0 - x), max_relative = 1e-6);
    }
}

#[test]
fn renormalization_bounds() {
    let p = PhysicalParams::reference();
    let (mut w, mut l, mut mu) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..=2000 {
        let x = i as f64 / 2000.0;
        let lam = p.lambda_at(x);
        let s = steady_state_x(&p, x, 60.0).unwrap();
        let r = hp_renormalize(&p, &s, lam).unwrap();
        w = w.max((r.omega0 / p.omega0 - 1.0).abs());
        if lam > 0.0 {
            l = l.max((r.lambda / lam - 1.0).abs());
        }
        mu = mu.max(r.mu.abs() / p.omega0);
    }
    // The frequency shift peaks at x = 1 just above 0.3%; see README.
    assert!(w < 3.3e-3 && w > 3.2e-3, "omega0 shift {w}");
    assert!(l <= 7e-3, "lambda shift {l}");
    assert!(mu < 2e-3, "mu {mu}");
}

#[test]
fn phase_grid_is_uniform() {
    let g = phi_grid(32);
    assert_eq!(g.len(), 32);
    assert_eq!(g[0], 0.0);
    assert_relative_eq!(g[8], PI / 2.0, max_relative = 1e-15);
    let s: f64 = g.iter().map(|p| p.cos()).sum();
    assert!(s.abs() < 1e-13);
}

proptest! {
    #[test]
    fn spin_length_conserved(x in 0.0f64..4.0, zeta in -300.0f64..300.0) {
        let p = PhysicalParams::reference();
        let s = steady_state_x(&p, x, zeta).unwrap();
        let n = p.n_atoms;
        let dev = (s.beta * s.beta + s.w * s.w - n * n / 4.0).abs();
        prop_assert!(dev <= 1e-9 * n * n, "deviation {}", dev);
        prop_assert!(steady_state_residual(&p, &s, zeta).abs() <= 1e-6 * (1.0 + s.beta.abs()));
        prop_assert!(s.w <= 0.0);
    }

    #[test]
    fn field_sign_mirrors_state(x in 0.0f64..3.0, zeta in 0.1f64..300.0) {
        let p = PhysicalParams::reference();
        let a = steady_state_x(&p, x, zeta).unwrap();
        let b = steady_state_x(&p, x, -zeta).unwrap();
        prop_assert!((a.beta + b.beta).abs() <= 1e-9 * a.beta.abs().max(1.0));
        prop_assert!((a.alpha + b.alpha).norm() <= 1e-9 * a.alpha.norm().max(1e-12));
    }
}
