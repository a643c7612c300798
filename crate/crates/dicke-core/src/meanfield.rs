// SPDX-License-Identifier: Apache-2.0

//! Semiclassical steady state of the pumped, damped Dicke model with a
//! symmetry-breaking offset ζ, and Holstein–Primakoff renormalized parameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::bracketed_root;
use crate::params::{lambda_cr_open, PhysicalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub alpha: Complex64,
    /// ⟨J₋⟩, real.
    pub beta: f64,
    /// ⟨J_z⟩.
    pub w: f64,
    pub branch: Branch,
    pub x: f64,
}

impl SteadyState {
    pub fn photon_number(&self) -> f64 {
        self.alpha.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedParams {
    pub omega0: f64,
    pub lambda: f64,
    pub mu: f64,
}

const ROOT_TOL: f64 = 1e-15;
const MAX_ITER: usize = 200;

/// Steady state at coupling λ. For ζ ≠ 0 the branch connected to λ = 0 is
/// returned; for ζ = 0 above threshold the `Plus` branch.
pub fn steady_state(p: &PhysicalParams, lambda: f64, zeta: f64) -> Result<SteadyState> {
    let branch = if zeta < 0.0 {
        Branch::Minus
    } else {
        Branch::Plus
    };
    steady_state_branch(p, lambda, zeta, branch)
}

/// Steady state with an explicit branch for the symmetric (ζ = 0) case.
/// With ζ ≠ 0 the requested branch is ignored and the connected one is used.
pub fn steady_state_branch(
    p: &PhysicalParams,
    lambda: f64,
    zeta: f64,
    branch: Branch,
) -> Result<SteadyState> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = p.n_atoms;
    if !(zeta.abs() < n / 2.0) {
        return Err(Error::Domain(format!("|zeta| must be < N/2, got {zeta}")));
    }
    let lc = lambda_cr_open(p);
    let x = (lambda / lc).powi(2);
    let z = 2.0 * zeta.abs() / n;

    let (u, br) = if zeta != 0.0 {
        // x (u + z) sqrt(1 - u²) - u is concave on [0, 1], positive at 0 and
        // negative at 1: exactly one root.
        let u = if x == 0.0 {
            0.0
        } else {
            let g = |u: f64| x * (u + z) * (1.0 - u * u).sqrt() - u;
            bracketed_root(g, 0.0, 1.0, ROOT_TOL, MAX_ITER).map_err(|r| Error::NonConvergence {
                what: "steady state",
                residual: r * n / 2.0,
            })?
        };
        if zeta > 0.0 {
            (u, Branch::Plus)
        } else {
            (-u, Branch::Minus)
        }
    } else if x <= 1.0 || branch == Branch::Normal {
        (0.0, Branch::Normal)
    } else {
        // Divide out the trivial root u = 0.
        let h = |u: f64| x * (1.0 - u * u).sqrt() - 1.0;
        let u =
            bracketed_root(h, 0.0, 1.0, ROOT_TOL, MAX_ITER).map_err(|r| Error::NonConvergence {
                what: "steady state",
                residual: r * n / 2.0,
            })?;
        match branch {
            Branch::Minus => (-u, Branch::Minus),
            _ => (u, Branch::Plus),
        }
    };

    let beta = u * n / 2.0;
    let w = -(n / 2.0) * (1.0 - u * u).max(0.0).sqrt();
    let alpha = Complex64::new(2.0 * lambda * (beta + zeta) / n.sqrt(), 0.0)
        / Complex64::new(-p.omega, p.kappa);
    Ok(SteadyState {
        alpha,
        beta,
        w,
        branch: br,
        x,
    })
}

/// Steady state at relative coupling x = (λ/λ_cr)².
pub fn steady_state_x(p: &PhysicalParams, x: f64, zeta: f64) -> Result<SteadyState> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    steady_state(p, p.lambda_at(x), zeta)
}

/// Residual of the β equation in units of atoms.
pub fn steady_state_residual(p: &PhysicalParams, s: &SteadyState, zeta: f64) -> f64 {
    let n = p.n_atoms;
    s.beta - s.x * (s.beta + zeta) * (1.0 - 4.0 * s.beta * s.beta / (n * n)).max(0.0).sqrt()
}

/// Non-negative ζ = 0 branch, β = (N/2)√(1 − λ_cr⁴/λ⁴) above threshold.
pub fn steady_state_closed_form(p: &PhysicalParams, lambda: f64) -> f64 {
    let lc = lambda_cr_open(p);
    if lambda <= lc {
        return 0.0;
    }
    let r = (lc / lambda).powi(4);
    p.n_atoms / 2.0 * (1.0 - r).sqrt()
}

pub fn hp_renormalize(
    p: &PhysicalParams,
    s: &SteadyState,
    lambda: f64,
) -> Result<RenormalizedParams> {
    let n = p.n_atoms;
    if s.beta.abs() >= n {
        return Err(Error::Domain(format!("|beta| must be < N, got {}", s.beta)));
    }
    let b2 = (s.beta / n).powi(2);
    let root = (1.0 - b2).sqrt();
    let shift = lambda * s.alpha.re * s.beta / (n.powf(1.5) * root);
    Ok(RenormalizedParams {
        omega0: p.omega0 - 2.0 * shift,
        lambda: lambda * (1.0 - 2.0 * b2) / root,
        mu: -shift,
    })
}

pub fn ensemble_zeta(zeta: f64, phi: f64) -> f64 {
    zeta * phi.cos()
}

/// Uniform grid of `n` phases on [0, 2π).
pub fn phi_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| std::f64::consts::TAU * k as f64 / n as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_phase_fixed_point() {
        let p = PhysicalParams::reference();
        let s = steady_state_x(&p, 0.7, 0.0).unwrap();
        assert_eq!(s.beta, 0.0);
        assert_eq!(s.alpha, Complex64::new(0.0, 0.0));
        assert_eq!(s.w, -p.n_atoms / 2.0);
        assert_eq!(s.branch, Branch::Normal);
    }

    #[test]
    fn negative_zeta_mirrors_positive() {
        let p = PhysicalParams::reference();
        let a = steady_state_x(&p, 0.9, 60.0).unwrap();
        let b = steady_state_x(&p, 0.9, -60.0).unwrap();
        assert!((a.beta + b.beta).abs() < 1e-9 * p.n_atoms);
        assert_eq!(b.branch, Branch::Minus);
        assert!((a.alpha + b.alpha).norm() < 1e-12);
    }

    #[test]
    fn minus_branch_above_threshold() {
        let p = PhysicalParams::reference();
        let lam = p.lambda_at(2.0);
        let s = steady_state_branch(&p, lam, 0.0, Branch::Minus).unwrap();
        assert!(s.beta < 0.0);
        assert!((s.beta + steady_state_closed_form(&p, lam)).abs() < 1e-6);
    }

    #[test]
    fn hp_rejects_large_beta() {
        let p = PhysicalParams::reference();
        let mut s = steady_state_x(&p, 0.5, 0.0).unwrap();
        s.beta = p.n_atoms;
        assert!(hp_renormalize(&p, &s, 1.0).is_err());
    }
}
