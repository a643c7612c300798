// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::TAU;

use approx::assert_relative_eq;
use dicke_core::params::{
    kappa_eff, lambda_cr_closed, lambda_cr_open, soft_mode_frequency, thermal_occupation, HBAR, K_B,
};
use dicke_core::{CouplingConvention, Error, PhysicalParams};
use proptest::prelude::*;

#[test]
fn thermal_occupation_matches_bose_einstein() {
    let nu = TAU * 8.3e3;
    let t = 100e-9;
    let r = HBAR * nu / (K_B * t);
    let want = 1.0 / r.exp_m1();
    assert_relative_eq!(
        thermal_occupation(nu, t).unwrap(),
        want,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        thermal_occupation(nu, t).unwrap(),
        0.018976,
        max_relative = 1e-4
    );
    assert_eq!(thermal_occupation(nu, 0.0).unwrap(), 0.0);
}

#[test]
fn thresholds_and_effective_decay() {
    let p = PhysicalParams::reference();
    let closed = (p.omega * p.omega0).sqrt() / 2.0;
    assert_relative_eq!(lambda_cr_closed(&p), closed, max_relative = 1e-15);
    let open = closed * ((p.kappa * p.kappa + p.omega * p.omega) / (p.omega * p.omega)).sqrt();
    assert_relative_eq!(lambda_cr_open(&p), open, max_relative = 1e-14);

    let lc = lambda_cr_open(&p);
    let ke = kappa_eff(&p, lc) / TAU;
    assert!((ke - 259.4).abs() < 0.1, "kappa_eff = {ke}");
    let mut q = p.clone();
    q.coupling_convention = CouplingConvention::TwoLambda;
    let ke2 = kappa_eff(&q, lc) / TAU;
    assert!((ke2 - 1037.5).abs() < 0.2, "kappa_eff = {ke2}");
}

#[test]
fn soft_mode_domain() {
    let p = PhysicalParams::reference();
    assert_relative_eq!(
        soft_mode_frequency(&p, 0.75).unwrap(),
        p.omega0 * 0.5,
        max_relative = 1e-15
    );
    assert!(soft_mode_frequency(&p, 1.2).is_err());
}

#[test]
fn config_file_takes_hz() {
    let p = PhysicalParams::from_toml_str("omega_hz = 1e6\nT_nK = 50\nN = 1000").unwrap();
    assert_relative_eq!(p.omega, TAU * 1e6, max_relative = 1e-15);
    assert_relative_eq!(p.temperature, 50e-9, max_relative = 1e-15);
    assert_eq!(p.n_atoms, 1000.0);
    assert_eq!(p.kappa, PhysicalParams::reference().kappa);
}

#[test]
fn config_errors() {
    for bad in [
        "nonsense = 1",
        "eta = 0",
        "eta = \"x\"",
        "coupling_convention = \"both\"",
        "N = ",
    ] {
        assert!(
            matches!(PhysicalParams::from_toml_str(bad), Err(Error::Config(_))),
            "accepted `{bad}`"
        );
    }
}

#[test]
fn click_scale() {
    let p = PhysicalParams::reference();
    assert_relative_eq!(
        p.click_rate_per_photon(),
        7.853_981_6e5,
        max_relative = 1e-7
    );
    assert_relative_eq!(
        p.background_photons(),
        341.0 / 7.853_981_6e5,
        max_relative = 1e-7
    );
}

proptest! {
    #[test]
    fn config_text_round_trips(
        eta in 0.01f64..1.0,
        n in 1.0f64..1e7,
        t in 0.0f64..1000.0,
        two in any::<bool>(),
    ) {
        let mut p = PhysicalParams::reference();
        p.eta = eta;
        p.n_atoms = n;
        p.temperature = t * 1e-9;
        p.coupling_convention = if two { CouplingConvention::TwoLambda } else { CouplingConvention::Lambda };
        let q = PhysicalParams::from_toml_str(&p.to_toml_string()).unwrap();
        prop_assert_eq!(q.eta, p.eta);
        prop_assert_eq!(q.n_atoms, p.n_atoms);
        prop_assert!((q.temperature - p.temperature).abs() <= 1e-15 * p.temperature.max(1e-300));
        prop_assert!((q.omega - p.omega).abs() <= 1e-15 * p.omega);
        prop_assert_eq!(q.coupling_convention, p.coupling_convention);
    }
}
