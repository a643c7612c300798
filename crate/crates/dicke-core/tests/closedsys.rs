// SPDX-License-Identifier: Apache-2.0

use approx::assert_relative_eq;
use dicke_core::closedsys::{fock_oracle, ground_state_covariance, ground_state_fluctuations};
use dicke_core::fitpipe::fit_power_law;
use dicke_core::PhysicalParams;
use nalgebra::Matrix4;

fn small() -> PhysicalParams {
    // Comparable mode frequencies keep the Fock truncation small.
    let mut p = PhysicalParams::reference();
    p.omega = 3.0 * p.omega0;
    p
}

#[test]
fn quadrature_exponent_is_one_half() {
    let p = PhysicalParams::reference();
    let xs: Vec<f64> = (0..40).map(|i| 0.9 + 0.099 * i as f64 / 39.0).collect();
    let v: Vec<f64> = xs
        .iter()
        .map(|&x| {
            ground_state_fluctuations(&p, x)
                .unwrap()
                .quadrature_variance
        })
        .collect();
    let fit = fit_power_law(&xs, &v, 0.9, 0.999).unwrap();
    assert!(
        (fit.exponent - 0.5).abs() < 0.02,
        "exponent {}",
        fit.exponent
    );
}

#[test]
fn symplectic_result_matches_fock_diagonalization() {
    let p = small();
    let g = ground_state_fluctuations(&p, 0.5).unwrap();
    let f = fock_oracle(&p, 0.5, 14, 14).unwrap();
    assert_relative_eq!(
        f.fluctuations.quadrature_variance,
        g.quadrature_variance,
        max_relative = 1e-4
    );
    assert_relative_eq!(
        f.fluctuations.photon_variance,
        g.photon_variance,
        max_relative = 1e-4
    );
    assert!(f.odd_population < 1e-12);
}

#[test]
fn covariance_is_a_physical_state() {
    // Robertson–Schrödinger: V + iΩ/2 ⪰ 0, checked through the symplectic
    // eigenvalues of the 2-mode covariance (all equal to ½ for a pure state).
    let p = PhysicalParams::reference();
    for x in [0.1, 0.5, 0.9, 0.99] {
        let v = ground_state_covariance(&p, x).unwrap();
        assert_relative_eq!(v, v.transpose(), max_relative = 1e-12);
        let omega = Matrix4::new(
            0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
        );
        let m = omega * v;
        let m2 = m * m;
        // Eigenvalues of (ΩV)² are −ν_k²; a pure state has ν_k = ½.
        let tr = m2.trace();
        assert_relative_eq!(tr, -4.0 * 0.25, max_relative = 1e-8);
        let det = v.determinant();
        assert_relative_eq!(det, 1.0 / 16.0, max_relative = 1e-8);
    }
}

#[test]
fn vacuum_without_coupling() {
    let p = PhysicalParams::reference();
    let g = ground_state_fluctuations(&p, 0.0).unwrap();
    assert!(g.photon_variance.abs() < 1e-15);
    assert_relative_eq!(g.quadrature_variance, 1.0, max_relative = 1e-14);
}
