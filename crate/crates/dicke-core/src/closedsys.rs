// SPDX-License-Identifier: Apache-2.0

//! Ground state of the closed two-mode Hamiltonian
//! H = ω a†a + ω₀ b†b + λ(a+a†)(b+b†) in the normal phase, exactly via
//! normal-mode (symplectic) diagonalization and by brute force in a
//! truncated Fock basis.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{lambda_cr_closed, PhysicalParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateFluctuations {
    /// ⟨a†a⟩.
    pub photon_variance: f64,
    /// ⟨(b+b†)²⟩.
    pub quadrature_variance: f64,
    /// ⟨(i(b†−b))²⟩, conjugate to the above.
    pub momentum_variance: f64,
    pub x: f64,
}

/// Quadrature covariance ½⟨{r, rᵀ}⟩ of the ground state, r = (x_a, x_b, p_a, p_b)
/// with x = (c+c†)/√2, p = i(c†−c)/√2.
pub fn ground_state_covariance(p: &PhysicalParams, x: f64) -> Result<Matrix4<f64>> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "closed-system ground state needs 0 <= x < 1, got {x}"
        )));
    }
    let lam = lambda_cr_closed(p) * x.sqrt();
    let (w, w0) = (p.omega, p.omega0);
    // H = ½ pᵀ P p + ½ xᵀ X x with P = diag(ω, ω₀), X = [[ω, 2λ], [2λ, ω₀]].
    let sp = Matrix2::new(w.sqrt(), 0.0, 0.0, w0.sqrt());
    let sp_inv = Matrix2::new(1.0 / w.sqrt(), 0.0, 0.0, 1.0 / w0.sqrt());
    let xmat = Matrix2::new(w, 2.0 * lam, 2.0 * lam, w0);
    let omega_sq = sp * xmat * sp;
    let eig = SymmetricEigen::new(omega_sq);
    if eig.eigenvalues.iter().any(|&e| e <= 0.0) {
        return Err(Error::Domain("Hamiltonian not positive definite".into()));
    }
    let o = eig.eigenvectors;
    let freq = eig.eigenvalues.map(f64::sqrt);
    let om = o * Matrix2::from_diagonal(&freq) * o.transpose();
    let om_inv = o * Matrix2::from_diagonal(&freq.map(|f| 1.0 / f)) * o.transpose();
    let vx = 0.5 * sp * om_inv * sp;
    let vp = 0.5 * sp_inv * om * sp_inv;
    let mut v = Matrix4::zeros();
    v.fixed_view_mut::<2, 2>(0, 0).copy_from(&vx);
    v.fixed_view_mut::<2, 2>(2, 2).copy_from(&vp);
    Ok(v)
}

pub fn ground_state_fluctuations(p: &PhysicalParams, x: f64) -> Result<GroundStateFluctuations> {
    let v = ground_state_covariance(p, x)?;
    Ok(GroundStateFluctuations {
        photon_variance: 0.5 * (v[(0, 0)] + v[(2, 2)] - 1.0),
        quadrature_variance: 2.0 * v[(1, 1)],
        momentum_variance: 2.0 * v[(3, 3)],
        x,
    })
}

/// Result of the truncated-basis diagonalization.
#[derive(Debug, Clone)]
pub struct FockGroundState {
    pub fluctuations: GroundStateFluctuations,
    /// Ground energy in units of ω₀.
    pub energy: f64,
    /// Total population on states with odd n_a + n_b.
    pub odd_population: f64,
    pub n_a_max: usize,
    pub n_b_max: usize,
}

struct Basis {
    na: usize,
    nb: usize,
}

impl Basis {
    fn dim(&self) -> usize {
        (self.na + 1) * (self.nb + 1)
    }
    fn idx(&self, a: usize, b: usize) -> usize {
        a * (self.nb + 1) + b
    }
}

fn moments(
    p: &PhysicalParams,
    x: f64,
    basis: &Basis,
    c: &DVector<f64>,
) -> (GroundStateFluctuations, f64) {
    let norm2 = c.norm_squared();
    let mut n_a = 0.0;
    let mut n_b = 0.0;
    let mut b2 = 0.0;
    let mut odd = 0.0;
    for a in 0..=basis.na {
        for b in 0..=basis.nb {
            let v = c[basis.idx(a, b)];
            let w = v * v / norm2;
            n_a += a as f64 * w;
            n_b += b as f64 * w;
            if (a + b) % 2 == 1 {
                odd += w;
            }
            if b + 2 <= basis.nb {
                b2 += v * c[basis.idx(a, b + 2)] * (((b + 1) * (b + 2)) as f64).sqrt() / norm2;
            }
        }
    }
    let _ = p;
    (
        GroundStateFluctuations {
            photon_variance: n_a,
            quadrature_variance: 2.0 * b2 + 2.0 * n_b + 1.0,
            momentum_variance: -2.0 * b2 + 2.0 * n_b + 1.0,
            x,
        },
        odd,
    )
}

fn coupling_in_units(p: &PhysicalParams, x: f64) -> (f64, f64) {
    let lam = lambda_cr_closed(p) * x.sqrt();
    (p.omega / p.omega0, lam / p.omega0)
}

fn dense_hamiltonian(p: &PhysicalParams, x: f64, basis: &Basis) -> DMatrix<f64> {
    let (w, l) = coupling_in_units(p, x);
    let n = basis.dim();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for a in 0..=basis.na {
        for b in 0..=basis.nb {
            let i = basis.idx(a, b);
            h[(i, i)] = w * a as f64 + b as f64;
            // λ (a + a†)(b + b†): couple (a, b) to (a+1, b±1)
            if a < basis.na {
                let sa = ((a + 1) as f64).sqrt();
                if b < basis.nb {
                    let j = basis.idx(a + 1, b + 1);
                    let v = l * sa * ((b + 1) as f64).sqrt();
                    h[(i, j)] += v;
                    h[(j, i)] += v;
                }
                if b > 0 {
                    let j = basis.idx(a + 1, b - 1);
                    let v = l * sa * (b as f64).sqrt();
                    h[(i, j)] += v;
                    h[(j, i)] += v;
                }
            }
        }
    }
    h
}

/// Ground state by dense diagonalization on n_a ≤ `n_a_max`, n_b ≤ `n_b_max`,
/// followed by a check against a basis with both cut-offs doubled.
pub fn fock_oracle(
    p: &PhysicalParams,
    x: f64,
    n_a_max: usize,
    n_b_max: usize,
) -> Result<FockGroundState> {
    if n_a_max < 2 || n_b_max < 2 {
        return Err(Error::Domain("truncation sizes must be >= 2".into()));
    }
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "Fock oracle needs 0 <= x < 1, got {x}"
        )));
    }
    let basis = Basis {
        na: n_a_max,
        nb: n_b_max,
    };
    let h = dense_hamiltonian(p, x, &basis);
    let eig = SymmetricEigen::new(h);
    let (k, &e0) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty basis");
    let c: DVector<f64> = eig.eigenvectors.column(k).into_owned();
    let (fl, odd) = moments(p, x, &basis, &c);

    let big = Basis {
        na: 2 * n_a_max,
        nb: 2 * n_b_max,
    };
    let mut start = DVector::<f64>::zeros(big.dim());
    for a in 0..=basis.na {
        for b in 0..=basis.nb {
            start[big.idx(a, b)] = c[basis.idx(a, b)];
        }
    }
    let c2 = inverse_iteration(p, x, &big, e0 - 1e-2, start)?;
    let (fl2, _) = moments(p, x, &big, &c2);
    let shift = |u: f64, v: f64| (u - v).abs() / v.abs().max(1e-300);
    let worst = shift(fl.quadrature_variance, fl2.quadrature_variance)
        .max(shift(fl.momentum_variance, fl2.momentum_variance))
        .max(if fl2.photon_variance > 1e-12 {
            shift(fl.photon_variance, fl2.photon_variance)
        } else {
            0.0
        });
    if worst > 1e-3 {
        return Err(Error::NonConvergence {
            what: "Fock truncation",
            residual: worst,
        });
    }
    Ok(FockGroundState {
        fluctuations: fl,
        energy: e0,
        odd_population: odd,
        n_a_max,
        n_b_max,
    })
}

/// Shifted inverse iteration on the block-tridiagonal Hamiltonian (blocks
/// indexed by photon number). `shift` must lie below the ground energy so
/// that H − shift is positive definite and block elimination is stable.
fn inverse_iteration(
    p: &PhysicalParams,
    x: f64,
    basis: &Basis,
    shift: f64,
    start: DVector<f64>,
) -> Result<DVector<f64>> {
    let (w, l) = coupling_in_units(p, x);
    let m = basis.nb + 1;
    let nblk = basis.na + 1;
    // Off-diagonal block between photon numbers a and a+1: λ√(a+1)(b+b†).
    let bb = {
        let mut t = DMatrix::<f64>::zeros(m, m);
        for b in 0..basis.nb {
            let v = ((b + 1) as f64).sqrt();
            t[(b, b + 1)] = v;
            t[(b + 1, b)] = v;
        }
        t
    };
    let diag = |a: usize| {
        DMatrix::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                w * a as f64 + i as f64 - shift
            } else {
                0.0
            }
        })
    };
    // Block LU: S_0 = D_0, S_a = D_a − C_{a−1}ᵀ S_{a−1}⁻¹ C_{a−1}.
    let mut s_inv: Vec<DMatrix<f64>> = Vec::with_capacity(nblk);
    let mut coup: Vec<DMatrix<f64>> = Vec::with_capacity(nblk);
    for a in 0..nblk {
        let mut s = diag(a);
        if a > 0 {
            let c = &coup[a - 1];
            s -= c.transpose() * &s_inv[a - 1] * c;
        }
        let inv = s
            .try_inverse()
            .ok_or_else(|| Error::Singularity("block elimination failed".into()))?;
        s_inv.push(inv);
        coup.push(&bb * (l * ((a + 1) as f64).sqrt()));
    }
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nblk);
        for a in 0..nblk {
            let mut r: DVector<f64> = rhs.rows(a * m, m).into_owned();
            if a > 0 {
                r -= coup[a - 1].transpose() * (&s_inv[a - 1] * &y[a - 1]);
            }
            y.push(r);
        }
        let mut xs: Vec<DVector<f64>> = vec![DVector::zeros(m); nblk];
        for a in (0..nblk).rev() {
            let mut r = y[a].clone();
            if a + 1 < nblk {
                r -= &coup[a] * &xs[a + 1];
            }
            xs[a] = &s_inv[a] * r;
        }
        let mut out = DVector::zeros(nblk * m);
        for a in 0..nblk {
            out.rows_mut(a * m, m).copy_from(&xs[a]);
        }
        out
    };
    let mut v = start.normalize();
    for _ in 0..200 {
        let next = solve(&v).normalize();
        let next = if next.dot(&v) < 0.0 { -next } else { next };
        let diff = (&next - &v).norm();
        v = next;
        if diff < 1e-13 {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence {
        what: "inverse iteration",
        residual: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_at_zero_coupling() {
        let p = PhysicalParams::reference();
        let g = ground_state_fluctuations(&p, 0.0).unwrap();
        assert!(g.photon_variance.abs() < 1e-12);
        assert!((g.quadrature_variance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_ordered_phase() {
        let p = PhysicalParams::reference();
        assert!(ground_state_fluctuations(&p, 1.0).is_err());
        assert!(ground_state_fluctuations(&p, -0.1).is_err());
    }
}
