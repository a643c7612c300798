// SPDX-License-Identifier: Apache-2.0

//! Linearized quantum-Langevin fluctuations in frequency space: response
//! matrix, overlap integrals, first- and second-order field correlations.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{lambda_cr_open, thermal_occupation, PhysicalParams};
use crate::quad::{integrate, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeterminantMode {
    Exact,
    #[default]
    SoftModeApprox,
}

/// Phase factor used for the coherent and thermal parts of ⟨ââ⟩.
///
/// `Consistent` uses α² for the coherent part and (ω+iκ)²/(κ²+ω²) for the
/// thermal pairing, which is what α = 2λ(β+ζ)/((iκ−ω)√N) implies.
/// `Printed` uses ξ = (ω−iκ)²/(κ²+ω²) for both, i.e. ξ|α|² = (α*)².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum XiConvention {
    #[default]
    Consistent,
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub omega: f64,
    pub omega0: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n_th: f64,
    pub alpha: Complex64,
    pub n_b: f64,
    pub mode: DeterminantMode,
    pub xi_convention: XiConvention,
}

impl EffectiveModel {
    /// Model at relative coupling x with atomic damping γ, no coherent field,
    /// background from the detector parameters and n_th evaluated at ω_s.
    pub fn new(p: &PhysicalParams, x: f64, gamma: f64) -> Result<Self> {
        if !(x >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::Domain(format!(
                "need x >= 0 and gamma >= 0, got x={x}, gamma={gamma}"
            )));
        }
        let n_th = if p.temperature == 0.0 {
            0.0
        } else {
            if x >= 1.0 {
                return Err(Error::Domain(format!(
                    "thermal occupation at omega_s undefined for x={x}"
                )));
            }
            thermal_occupation(p.omega0 * (1.0 - x).sqrt(), p.temperature)?
        };
        Ok(Self {
            omega: p.omega,
            omega0: p.omega0,
            lambda: lambda_cr_open(p) * x.sqrt(),
            kappa: p.kappa,
            gamma,
            n_th,
            alpha: ZERO,
            n_b: p.background_photons(),
            mode: DeterminantMode::default(),
            xi_convention: XiConvention::default(),
        })
    }

    pub fn with_alpha(mut self, alpha: Complex64) -> Self {
        self.alpha = alpha;
        self
    }
    pub fn with_background(mut self, n_b: f64) -> Self {
        self.n_b = n_b;
        self
    }
    pub fn with_mode(mut self, mode: DeterminantMode) -> Self {
        self.mode = mode;
        self
    }
    pub fn with_n_th(mut self, n_th: f64) -> Self {
        self.n_th = n_th;
        self
    }
    pub fn with_xi(mut self, xi: XiConvention) -> Self {
        self.xi_convention = xi;
        self
    }

    fn kw2(&self) -> f64 {
        self.kappa * self.kappa + self.omega * self.omega
    }

    /// Relative coupling (λ/λ_cr)² with the open-system threshold.
    pub fn x(&self) -> f64 {
        4.0 * self.lambda * self.lambda * self.omega / (self.kw2() * self.omega0)
    }

    /// ω_s² = ω₀²(1 − x); negative beyond threshold.
    pub fn soft_mode_sq(&self) -> f64 {
        self.omega0 * self.omega0
            - 4.0 * self.lambda * self.lambda * self.omega * self.omega0 / self.kw2()
    }

    pub fn soft_mode(&self) -> f64 {
        self.soft_mode_sq().max(0.0).sqrt()
    }

    pub fn is_stable(&self) -> bool {
        let lhs = 4.0 * self.lambda * self.lambda * self.omega * self.omega0;
        let rhs = (self.gamma * self.gamma + self.omega0 * self.omega0) * self.kw2();
        match self.mode {
            DeterminantMode::Exact => lhs < rhs * (1.0 - 1e-12),
            DeterminantMode::SoftModeApprox => {
                self.gamma > 0.0 && self.soft_mode_sq() > 1e-12 * self.omega0 * self.omega0
            }
        }
    }

    /// Pairing phase for the thermal term of ⟨ââ⟩.
    pub fn xi(&self) -> Complex64 {
        let num = match self.xi_convention {
            XiConvention::Consistent => Complex64::new(self.omega, self.kappa),
            XiConvention::Printed => Complex64::new(self.omega, -self.kappa),
        };
        num * num / self.kw2()
    }

    /// Coherent contribution to ⟨â(t)â(t′)⟩.
    pub fn coherent_pair(&self, alpha: Complex64) -> Complex64 {
        match self.xi_convention {
            XiConvention::Consistent => alpha * alpha,
            XiConvention::Printed => self.xi() * alpha.norm_sqr(),
        }
    }

    fn check(&self) -> Result<()> {
        if !self.is_stable() {
            return Err(Error::Singularity(format!(
                "model unstable or singular at x={:.6}, gamma={:e} ({:?})",
                self.x(),
                self.gamma,
                self.mode
            )));
        }
        Ok(())
    }
}

/// Response matrix M(ν), rows (δã(ν), δã†(−ν), δb̃(ν), δb̃†(−ν)).
pub fn matrix_m(nu: f64, m: &EffectiveModel) -> Matrix4<Complex64> {
    let il = I * m.lambda;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    Matrix4::new(
        c(m.kappa, m.omega - nu),
        ZERO,
        il,
        il,
        ZERO,
        c(m.kappa, -m.omega - nu),
        -il,
        -il,
        il,
        il,
        c(m.gamma, m.omega0 - nu),
        ZERO,
        -il,
        -il,
        ZERO,
        c(m.gamma, -m.omega0 - nu),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixElements {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m13: Complex64,
    pub m14: Complex64,
    pub d: Complex64,
}

pub fn determinant(nu: f64, m: &EffectiveModel) -> Complex64 {
    let gn = Complex64::new(m.gamma, -nu);
    match m.mode {
        DeterminantMode::Exact => {
            let kn = Complex64::new(m.kappa, -nu);
            (gn * gn + m.omega0 * m.omega0) * (kn * kn + m.omega * m.omega)
                - 4.0 * m.lambda * m.lambda * m.omega * m.omega0
        }
        DeterminantMode::SoftModeApprox => (gn * gn + m.soft_mode_sq()) * m.kw2(),
    }
}

fn numerators(nu: f64, m: &EffectiveModel) -> [Complex64; 4] {
    let l2w = 2.0 * m.lambda * m.lambda * m.omega0;
    let kwn = Complex64::new(m.omega + nu, m.kappa);
    let gn = Complex64::new(m.gamma, -nu);
    let il = I * m.lambda;
    [
        I * l2w - I * kwn * (gn * gn + m.omega0 * m.omega0),
        I * l2w,
        il * kwn * Complex64::new(nu + m.omega0, m.gamma),
        il * kwn * Complex64::new(nu - m.omega0, m.gamma),
    ]
}

pub fn matrix_elements(nu: f64, m: &EffectiveModel) -> Result<MatrixElements> {
    let d = determinant(nu, m);
    let scale = (m.omega0 * m.omega0 + nu * nu) * (m.kappa * m.kappa + m.omega * m.omega + nu * nu);
    if d.norm() <= 1e-13 * scale || !d.is_finite() {
        return Err(Error::Singularity(format!(
            "determinant vanishes at nu={nu}"
        )));
    }
    let [n1, n2, n3, n4] = numerators(nu, m);
    let inv = d.inv();
    Ok(MatrixElements {
        m11: n1 * inv,
        m12: n2 * inv,
        m13: n3 * inv,
        m14: n4 * inv,
        d,
    })
}

fn elements_unchecked(nu: f64, m: &EffectiveModel) -> [Complex64; 4] {
    let inv = determinant(nu, m).inv();
    numerators(nu, m).map(|n| n * inv)
}

/// Positive-frequency resonance (Re ν_p, |Im ν_p|) of the response.
pub fn resonance(m: &EffectiveModel) -> (f64, f64) {
    match m.mode {
        DeterminantMode::SoftModeApprox => (m.soft_mode(), m.gamma),
        DeterminantMode::Exact => {
            let floor = 1e-12 * m.omega0;
            let mut z = Complex64::new(m.soft_mode(), -m.gamma.max(1e-3 * m.omega0));
            for _ in 0..100 {
                let gz = Complex64::new(m.gamma, 0.0) - I * z;
                let kz = Complex64::new(m.kappa, 0.0) - I * z;
                let p1 = gz * gz + m.omega0 * m.omega0;
                let p2 = kz * kz + m.omega * m.omega;
                let f = p1 * p2 - 4.0 * m.lambda * m.lambda * m.omega * m.omega0;
                let df = -2.0 * I * gz * p2 - 2.0 * I * kz * p1;
                let step = f / df;
                z -= step;
                if step.norm() <= 1e-15 * z.norm() {
                    break;
                }
            }
            (z.re.abs(), z.im.abs().max(floor))
        }
    }
}

/// Integration half-window for the overlap integrals.
pub fn frequency_window(m: &EffectiveModel) -> f64 {
    let (nu_p, hw) = resonance(m);
    (20.0 * m.omega0).max(nu_p + 40.0 * m.gamma.max(hw))
}

fn breakpoints(m: &EffectiveModel) -> Vec<f64> {
    let w = frequency_window(m);
    let (nu_p, hw) = resonance(m);
    let mut pos = vec![0.0, w];
    if nu_p > 0.0 && nu_p < w {
        pos.push(nu_p);
        let mut off = hw;
        while off < 0.5 * nu_p.max(hw) && nu_p + off < w {
            pos.push(nu_p + off);
            if nu_p - off > 0.0 {
                pos.push(nu_p - off);
            }
            off *= 4.0;
        }
    }
    let mut all: Vec<f64> = pos.iter().map(|v| -v).chain(pos.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// Overlap integrals A, B, C, D on a τ grid.
#[derive(Debug, Clone)]
pub struct Overlaps {
    pub tau: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub d: Vec<Complex64>,
    pub rel_error: f64,
}

fn phases(nu: f64, tau: &[f64], uniform: Option<(f64, f64)>, out: &mut [Complex64]) {
    match uniform {
        Some((t0, dt)) => {
            let mut z = Complex64::from_polar(1.0, nu * t0);
            let step = Complex64::from_polar(1.0, nu * dt);
            for (j, o) in out.iter_mut().enumerate() {
                if j % 64 == 0 {
                    z = Complex64::from_polar(1.0, nu * (t0 + j as f64 * dt));
                }
                *o = z;
                z *= step;
            }
        }
        None => {
            for (o, t) in out.iter_mut().zip(tau) {
                *o = Complex64::from_polar(1.0, nu * t);
            }
        }
    }
}

fn uniform_grid(tau: &[f64]) -> Option<(f64, f64)> {
    if tau.len() < 3 {
        return None;
    }
    let dt = (tau[tau.len() - 1] - tau[0]) / (tau.len() - 1) as f64;
    let ok = tau.iter().enumerate().all(|(j, t)| {
        (t - (tau[0] + j as f64 * dt)).abs()
            <= 1e-12 * (dt.abs() * j as f64 + tau[0].abs()).max(1e-300)
    });
    ok.then_some((tau[0], dt))
}

pub fn overlap_integrals(tau: &[f64], m: &EffectiveModel) -> Result<Overlaps> {
    overlap_integrals_with(tau, m, &QuadOptions::default())
}

pub fn overlap_integrals_with(
    tau: &[f64],
    m: &EffectiveModel,
    opts: &QuadOptions,
) -> Result<Overlaps> {
    let nt = tau.len();
    if m.lambda == 0.0 {
        return Ok(Overlaps {
            tau: tau.to_vec(),
            a: vec![0.0; nt],
            b: vec![ZERO; nt],
            c: vec![ZERO; nt],
            d: vec![ZERO; nt],
            rel_error: 0.0,
        });
    }
    m.check()?;
    let uni = uniform_grid(tau);
    let integrand = |nu: f64, out: &mut [Complex64]| {
        let [_, p12, _, p14] = elements_unchecked(nu, m);
        let [q11, _, q13, _] = elements_unchecked(-nu, m);
        let fa = p12.norm_sqr();
        let fb = if nu < 0.0 { p14.norm_sqr() } else { 0.0 };
        let fc = p12 * q11;
        let fd = p14 * q13;
        let (ph, rest) = out.split_at_mut(nt);
        phases(nu, tau, uni, ph);
        let (ob, rest) = rest.split_at_mut(nt);
        let (oc, od) = rest.split_at_mut(nt);
        for j in 0..nt {
            let e = ph[j];
            ob[j] = e * fb;
            oc[j] = e * fc;
            od[j] = e * fd;
            ph[j] = e * fa;
        }
    };
    let r = integrate(integrand, &breakpoints(m), 4 * nt, opts)?;
    let v = r.values;
    Ok(Overlaps {
        tau: tau.to_vec(),
        a: v[..nt].iter().map(|z| z.re).collect(),
        b: v[nt..2 * nt].to_vec(),
        c: v[2 * nt..3 * nt].to_vec(),
        d: v[3 * nt..].to_vec(),
        rel_error: r.rel_error,
    })
}

/// Imaginary part of A, which the model predicts to vanish.
pub fn overlap_a_imag(tau: &[f64], m: &EffectiveModel) -> Result<Vec<Complex64>> {
    m.check()?;
    let uni = uniform_grid(tau);
    let nt = tau.len();
    let f = |nu: f64, out: &mut [Complex64]| {
        let fa = elements_unchecked(nu, m)[1].norm_sqr();
        phases(nu, tau, uni, out);
        for o in out.iter_mut().take(nt) {
            *o *= fa;
        }
    };
    Ok(integrate(f, &breakpoints(m), nt, &QuadOptions::default())?.values)
}

/// Alternative form of B: ∫₀^∞ |m₁₃(ν)|² e^{−iντ} dν.
pub fn overlap_b_alternative(tau: &[f64], m: &EffectiveModel) -> Result<Vec<Complex64>> {
    m.check()?;
    let uni = uniform_grid(tau);
    let nt = tau.len();
    let f = |nu: f64, out: &mut [Complex64]| {
        let fb = if nu > 0.0 {
            elements_unchecked(nu, m)[2].norm_sqr()
        } else {
            0.0
        };
        phases(-nu, tau, uni, out);
        for o in out.iter_mut().take(nt) {
            *o *= fb;
        }
    };
    Ok(integrate(f, &breakpoints(m), nt, &QuadOptions::default())?.values)
}

/// Fluctuation parts G¹_δ(τ) = ⟨δâ†δâ⟩(τ) and ⟨δâδâ⟩(τ), plus G¹_δ(0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctuationCurves {
    pub tau: Vec<f64>,
    pub g1: Vec<Complex64>,
    pub aa: Vec<Complex64>,
    pub n_inc: f64,
}

pub fn fluctuations_from_overlaps(
    ov: &Overlaps,
    m: &EffectiveModel,
    n_inc: f64,
) -> FluctuationCurves {
    let n = m.n_th;
    let xi = m.xi();
    let kp = m.kappa / PI;
    let gp = m.gamma / PI;
    let g1 = (0..ov.tau.len())
        .map(|j| kp * ov.a[j] + gp * ((1.0 + n) * ov.b[j] + n * ov.b[j].conj()))
        .collect();
    let aa = (0..ov.tau.len())
        .map(|j| kp * ov.c[j] + gp * ((1.0 + n) * ov.d[j] + n * xi * ov.b[j].conj()))
        .collect();
    FluctuationCurves {
        tau: ov.tau.clone(),
        g1,
        aa,
        n_inc,
    }
}

/// Fluctuation curves by adaptive quadrature.
pub fn fluctuation_curves(tau: &[f64], m: &EffectiveModel) -> Result<FluctuationCurves> {
    let n_inc = incoherent_photon_number(m)?;
    let ov = overlap_integrals(tau, m)?;
    Ok(fluctuations_from_overlaps(&ov, m, n_inc))
}

pub fn incoherent_photon_number(m: &EffectiveModel) -> Result<f64> {
    if m.lambda == 0.0 {
        return Ok(0.0);
    }
    let ov = overlap_integrals(&[0.0], m)?;
    let v = m.kappa / PI * ov.a[0] + m.gamma / PI * (1.0 + 2.0 * m.n_th) * ov.b[0].re;
    Ok(v.max(0.0))
}

/// ⟨(δb̂+δb̂†)²⟩ = 4ω/(ω₀x)·⟨δâ†δâ⟩.
pub fn density_fluctuation_variance(m: &EffectiveModel, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain("density variance needs x > 0".into()));
    }
    Ok(4.0 * m.omega / (m.omega0 * x) * incoherent_photon_number(m)?)
}

pub fn g1(tau: &[f64], m: &EffectiveModel) -> Result<Vec<Complex64>> {
    let fc = fluctuation_curves(tau, m)?;
    let c = m.alpha.norm_sqr();
    Ok(fc.g1.iter().map(|g| g + c).collect())
}

/// Unnormalized G²(τ) with coherent amplitude α, background excluded.
pub fn g2_unnormalized(fc: &FluctuationCurves, m: &EffectiveModel, alpha: Complex64) -> Vec<f64> {
    let c = alpha.norm_sqr();
    let pair = m.coherent_pair(alpha);
    let g10 = fc.n_inc + c;
    fc.g1
        .iter()
        .zip(&fc.aa)
        .map(|(g, a)| g10 * g10 + (g + c).norm_sqr() + (a + pair).norm_sqr() - 2.0 * c * c)
        .collect()
}

/// Normalized g²(τ) including the background photon number n_B.
pub fn g2_from_fluctuations(
    fc: &FluctuationCurves,
    m: &EffectiveModel,
    alpha: Complex64,
    n_b: f64,
) -> Result<Vec<f64>> {
    let g10 = fc.n_inc + alpha.norm_sqr();
    let den = g10 + n_b;
    if !(den > 0.0) {
        return Err(Error::Domain("g2 undefined: G1(0) + n_B = 0".into()));
    }
    Ok(g2_unnormalized(fc, m, alpha)
        .into_iter()
        .map(|g2| (g2 + 2.0 * g10 * n_b + n_b * n_b) / (den * den))
        .collect())
}

pub fn g2(tau: &[f64], m: &EffectiveModel) -> Result<Vec<f64>> {
    let fc = fluctuation_curves(tau, m)?;
    g2_from_fluctuations(&fc, m, m.alpha, m.n_b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub tau: Vec<f64>,
    pub g1: Vec<Complex64>,
    pub g2: Vec<f64>,
    pub photon_number: f64,
    pub coherent_fraction: f64,
    pub x: f64,
}

pub fn correlation_curve(tau: &[f64], m: &EffectiveModel) -> Result<CorrelationCurve> {
    let fc = fluctuation_curves(tau, m)?;
    let c = m.alpha.norm_sqr();
    let g2 = g2_from_fluctuations(&fc, m, m.alpha, m.n_b)?;
    Ok(CorrelationCurve {
        tau: tau.to_vec(),
        g1: fc.g1.iter().map(|g| g + c).collect(),
        g2,
        photon_number: fc.n_inc + c,
        coherent_fraction: c,
        x: m.x(),
    })
}

/// Normally ordered spectrum S(ν) and pseudo-spectrum Q(ν) sampled on an
/// FFT frequency grid, such that G¹_δ(τ) = (1/2π)∫S e^{iντ} dν and
/// ⟨δâδâ⟩(τ) = (1/2π)∫Q e^{iντ} dν. Zero outside the quadrature window.
#[derive(Debug, Clone)]
pub struct GridSpectra {
    pub dt: f64,
    pub s: Vec<f64>,
    pub q: Vec<Complex64>,
}

impl GridSpectra {
    pub fn len(&self) -> usize {
        self.s.len()
    }
    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
    pub fn dnu(&self) -> f64 {
        2.0 * PI / (self.len() as f64 * self.dt)
    }
}

/// Angular frequency of FFT bin k for n points at spacing dt.
pub fn fft_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let ki = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * PI * ki / (n as f64 * dt)
}

pub fn grid_spectra(m: &EffectiveModel, n: usize, dt: f64) -> Result<GridSpectra> {
    let mut s = vec![0.0; n];
    let mut q = vec![ZERO; n];
    if m.lambda == 0.0 {
        return Ok(GridSpectra { dt, s, q });
    }
    m.check()?;
    let w = frequency_window(m);
    let nth = m.n_th;
    let xi = m.xi();
    let (k2, g2) = (2.0 * m.kappa, 2.0 * m.gamma);
    for k in 0..n {
        let nu = fft_frequency(k, n, dt);
        if nu.abs() > w {
            continue;
        }
        let p = elements_unchecked(nu, m);
        let mm = elements_unchecked(-nu, m);
        let (neg, pos) = if nu < 0.0 {
            (1.0, 0.0)
        } else if nu > 0.0 {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        };
        let b_neg = p[3].norm_sqr();
        let b_mirror = mm[3].norm_sqr();
        s[k] = k2 * p[1].norm_sqr() + g2 * (1.0 + nth) * b_neg * neg + g2 * nth * b_mirror * pos;
        q[k] = k2 * p[1] * mm[0] + g2 * (1.0 + nth) * p[3] * mm[2] + g2 * nth * xi * b_mirror * pos;
    }
    Ok(GridSpectra { dt, s, q })
}

/// Transform grid spectra to circular correlation samples at τ_j = j·dt.
/// Entries with j > n/2 correspond to negative lags.
pub fn curves_from_grid(gs: &GridSpectra) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = gs.len();
    let scale = 1.0 / (n as f64 * gs.dt);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> =
        gs.s.iter()
            .map(|&v| Complex64::new(v * scale, 0.0))
            .collect();
    let mut b: Vec<Complex64> = gs.q.iter().map(|&v| v * scale).collect();
    fft.process(&mut a);
    fft.process(&mut b);
    (a, b)
}

/// Fluctuation curves on τ_j = j·dt, j < n_tau, via the FFT grid. The grid
/// length is chosen so that correlations have decayed over the period.
pub fn fluctuation_curves_fft(
    m: &EffectiveModel,
    dt: f64,
    n_tau: usize,
) -> Result<FluctuationCurves> {
    let n = grid_length(m, dt, n_tau as f64 * dt)?;
    let gs = grid_spectra(m, n, dt)?;
    let (g1, aa) = curves_from_grid(&gs);
    let n_inc = g1[0].re.max(0.0);
    Ok(FluctuationCurves {
        tau: (0..n_tau).map(|j| j as f64 * dt).collect(),
        g1: g1[..n_tau].to_vec(),
        aa: aa[..n_tau].to_vec(),
        n_inc,
    })
}

pub const MAX_GRID: usize = 1 << 23;

/// Power-of-two grid length covering 2·τ_max and 40 resonance decay times.
pub fn grid_length(m: &EffectiveModel, dt: f64, tau_max: f64) -> Result<usize> {
    let (_, hw) = resonance(m);
    let span = (2.0 * tau_max).max(40.0 / hw.max(1e-300));
    let n = ((span / dt).ceil() as usize).max(64).next_power_of_two();
    if n > MAX_GRID {
        return Err(Error::Domain(format!(
            "resonance too narrow for the FFT grid ({n} points needed)"
        )));
    }
    if PI / dt < frequency_window(m) {
        return Err(Error::Domain(
            "grid spacing too coarse for the quadrature window".into(),
        ));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(x: f64, gamma: f64) -> EffectiveModel {
        EffectiveModel::new(&PhysicalParams::reference(), x, gamma).unwrap()
    }

    #[test]
    fn m_is_block_diagonal_without_coupling() {
        let mut m = model(0.5, 100.0);
        m.lambda = 0.0;
        let mm = matrix_m(1234.0, &m);
        for (r, c) in [
            (0, 2),
            (0, 3),
            (1, 2),
            (1, 3),
            (2, 0),
            (2, 1),
            (3, 0),
            (3, 1),
        ] {
            assert_eq!(mm[(r, c)], ZERO);
        }
    }

    #[test]
    fn entry_33_at_rest() {
        let m = model(0.5, 0.0).with_mode(DeterminantMode::Exact);
        assert_eq!(matrix_m(0.0, &m)[(2, 2)], Complex64::new(0.0, m.omega0));
    }

    #[test]
    fn approx_mode_singular_without_damping() {
        let m = model(0.5, 0.0);
        assert!(matches!(
            overlap_integrals(&[0.0], &m),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn exact_mode_singular_at_threshold() {
        let mut p = PhysicalParams::reference();
        p.temperature = 0.0;
        let m = EffectiveModel::new(&p, 1.0, 0.0)
            .unwrap()
            .with_mode(DeterminantMode::Exact);
        assert!(matches!(
            incoherent_photon_number(&m),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            matrix_elements(0.0, &m),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn exact_resonance_near_soft_mode() {
        let m = model(0.8, 0.0).with_mode(DeterminantMode::Exact);
        let (nu, hw) = resonance(&m);
        assert!((nu / m.soft_mode() - 1.0).abs() < 1e-3);
        assert!(hw > 0.0 && hw < 100.0);
    }
}
