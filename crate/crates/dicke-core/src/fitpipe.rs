// SPDX-License-Identifier: Apache-2.0

//! Parameter recovery from averaged g² curves and critical-exponent fits.
//!
//! The model for one coupling bin is the 2 µs bin-averaged g² with detector
//! background, averaged over a uniform grid of phases φ in ζ → ζcos φ the way
//! the run-averaging weights pool runs. γ is free per bin and ζ is shared by
//! the bins below `zeta_x_max`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{G2Estimate, NbarPoint, Segment};
use crate::error::{Error, Result};
use crate::meanfield::{phi_grid, steady_state_x};
use crate::optim::{bracketed_root, nelder_mead, NelderMeadOptions};
use crate::params::PhysicalParams;
use crate::spectral::{
    curves_from_grid, grid_spectra, resonance, DeterminantMode, EffectiveModel, FluctuationCurves,
    XiConvention, MAX_GRID,
};
use crate::synth::empirical_gamma;

type C64 = Complex64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Sampling step of the model curves before bin averaging (s).
    pub fine_dt: f64,
    /// Width of the g² time bins (s).
    pub bin: f64,
    pub n_phi: usize,
    pub mode: DeterminantMode,
    pub xi_convention: XiConvention,
    /// FFT period in resonance decay times.
    pub decay_times: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            fine_dt: 0.5e-6,
            bin: 2e-6,
            n_phi: 32,
            mode: DeterminantMode::SoftModeApprox,
            xi_convention: XiConvention::Consistent,
            decay_times: 16.0,
        }
    }
}

/// Fluctuation curves of one (x, γ) on the fine grid, enough for `n_lags`
/// bins, plus the triangle-weighted window integrals of the τ-dependent parts
/// for each subtrace duration in `windows`.
#[derive(Debug, Clone)]
pub struct BinCurves {
    pub model: EffectiveModel,
    pub curves: FluctuationCurves,
    pub window: Vec<[f64; 4]>,
}

pub fn bin_curves(
    p: &PhysicalParams,
    x: f64,
    gamma: f64,
    n_lags: usize,
    windows: &[f64],
    opts: &ModelOptions,
) -> Result<BinCurves> {
    let m = EffectiveModel::new(p, x, gamma)?
        .with_mode(opts.mode)
        .with_xi(opts.xi_convention);
    let r = (opts.bin / opts.fine_dt).round() as usize;
    let n_tau = (n_lags + 1) * r + 1;
    let (_, hw) = resonance(&m);
    let span = (2.0 * n_tau as f64 * opts.fine_dt).max(opts.decay_times / hw.max(1e-300));
    let n = ((span / opts.fine_dt).ceil() as usize)
        .max(64)
        .next_power_of_two();
    if n > MAX_GRID {
        return Err(Error::Domain(format!(
            "gamma={gamma:e} too small for the model grid at x={x}"
        )));
    }
    let gs = grid_spectra(&m, n, opts.fine_dt)?;
    let (g1, aa) = curves_from_grid(&gs);
    let window = windows
        .iter()
        .map(|&t| window_integrals(&g1[..n / 2], &aa[..n / 2], opts.fine_dt, t))
        .collect();
    Ok(BinCurves {
        model: m,
        curves: FluctuationCurves {
            tau: (0..n_tau).map(|j| j as f64 * opts.fine_dt).collect(),
            n_inc: g1[0].re.max(0.0),
            g1: g1[..n_tau].to_vec(),
            aa: aa[..n_tau].to_vec(),
        },
        window,
    })
}

/// (2/T)∫₀ᵀ (1 − u/T) f(u) du for the four parts of `BinnedCurves`; the
/// curves are taken as zero beyond the grid.
fn window_integrals(g1: &[C64], aa: &[C64], dt: f64, t: f64) -> [f64; 4] {
    let mut acc = [0.0; 4];
    if !(t > 0.0) {
        return acc;
    }
    let n = ((t / dt).floor() as usize + 1).min(g1.len());
    for j in 0..n {
        let u = j as f64 * dt;
        let mut w = (1.0 - u / t).max(0.0);
        if j == 0 {
            w *= 0.5;
        }
        let (g, a) = (g1[j], aa[j]);
        acc[0] += w * (g.norm_sqr() + a.norm_sqr());
        acc[1] += w * g.re;
        acc[2] += w * a.re;
        acc[3] += w * a.im;
    }
    acc.map(|v| 2.0 * v * dt / t)
}

/// Distinct |cos φ| values of the uniform φ grid with their multiplicities.
/// The steady state is odd in ζ, so ±ζ give the same |α|² and α².
pub fn phase_classes(n_phi: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for phi in phi_grid(n_phi.max(1)) {
        let c = phi.cos().abs();
        match out.iter_mut().find(|v| (v.0 - c).abs() < 1e-12) {
            Some(v) => v.1 += 1.0,
            None => out.push((c, 1.0)),
        }
    }
    out
}

/// Coherent amplitudes over the φ classes, as (α, multiplicity).
pub fn phase_alphas(
    p: &PhysicalParams,
    x: f64,
    zeta: f64,
    n_phi: usize,
) -> Result<Vec<(C64, f64)>> {
    phase_classes(n_phi)
        .into_iter()
        .map(|(c, m)| Ok((steady_state_x(p, x, zeta * c)?.alpha, m)))
        .collect()
}

/// Triangle-weighted average of a symmetric fine-grid curve over lag bin k.
fn bin_average(fine: &[f64], r: usize, k: usize) -> f64 {
    let mut acc = 0.0;
    for u in -(r as i64)..=(r as i64) {
        let w = 1.0 - u.unsigned_abs() as f64 / r as f64;
        let idx = ((k * r) as i64 + u).unsigned_abs() as usize;
        acc += w * fine[idx];
    }
    acc / r as f64
}

/// Bin-averaged pieces of g² that carry the τ dependence: |g|² + |a|², Re g,
/// Re a, Im a. Everything else is a polynomial in α.
#[derive(Debug, Clone)]
pub struct BinnedCurves {
    pub model: EffectiveModel,
    pub n_inc: f64,
    pub parts: [Vec<f64>; 4],
    pub window: Vec<[f64; 4]>,
}

impl BinnedCurves {
    pub fn new(bc: &BinCurves, n_lags: usize, opts: &ModelOptions) -> Self {
        let r = (opts.bin / opts.fine_dt).round() as usize;
        let fc = &bc.curves;
        let fine: [Vec<f64>; 4] = [
            fc.g1
                .iter()
                .zip(&fc.aa)
                .map(|(g, a)| g.norm_sqr() + a.norm_sqr())
                .collect(),
            fc.g1.iter().map(|g| g.re).collect(),
            fc.aa.iter().map(|a| a.re).collect(),
            fc.aa.iter().map(|a| a.im).collect(),
        ];
        Self {
            model: bc.model,
            n_inc: fc.n_inc,
            parts: fine.map(|f| (0..n_lags).map(|k| bin_average(&f, r, k)).collect()),
            window: bc.window.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.parts[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts[0].is_empty()
    }
}

/// One subtrace interval of a bin layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSegment {
    /// Weights averaging a node-interpolated curve over the interval.
    pub weights: Vec<f64>,
    /// Time bins of one subtrace.
    pub bins: f64,
    /// Number of runs contributing this interval.
    pub count: f64,
    /// Index into `BinLayout::windows`; None when the estimate is not
    /// normalized per finite subtrace.
    pub window: Option<usize>,
}

/// Where in x and over which subtrace durations a bin's data was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    pub nodes: Vec<f64>,
    pub segments: Vec<LayoutSegment>,
    /// Distinct subtrace durations (s).
    pub windows: Vec<f64>,
}

/// ∫ max(0, 1 − |t|) dt from −∞ to t.
fn hat_cdf(t: f64) -> f64 {
    if t <= -1.0 {
        0.0
    } else if t <= 0.0 {
        0.5 * (t + 1.0) * (t + 1.0)
    } else if t <= 1.0 {
        1.0 - 0.5 * (1.0 - t) * (1.0 - t)
    } else {
        1.0
    }
}

impl BinLayout {
    /// A single x, estimated from an effectively infinite record.
    pub fn point(x: f64) -> Self {
        Self {
            nodes: vec![x],
            segments: vec![LayoutSegment {
                weights: vec![1.0],
                bins: 1.0,
                count: 1.0,
                window: None,
            }],
            windows: Vec::new(),
        }
    }

    /// Node spacing keeps the soft-mode phase drift between neighbouring
    /// nodes below `phase_tol` radians at lag `tau_max`.
    pub fn new(
        x: f64,
        segments: &[Segment],
        p: &PhysicalParams,
        bin: f64,
        tau_max: f64,
        phase_tol: f64,
    ) -> Self {
        if segments.is_empty() {
            return Self::point(x);
        }
        let lo = segments
            .iter()
            .map(|s| s.x0.min(s.x1))
            .fold(f64::INFINITY, f64::min);
        let hi = segments
            .iter()
            .map(|s| s.x0.max(s.x1))
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let h_max = phase_tol * 2.0 * (1.0 - hi).max(1e-6).sqrt() / (p.omega0 * tau_max.max(1e-12));
        let n = if span > 0.0 {
            ((span / h_max).ceil() as usize + 1).clamp(2, 64)
        } else {
            1
        };
        let h = if n > 1 { span / (n - 1) as f64 } else { 1.0 };
        let nodes: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let mut windows: Vec<usize> = segments.iter().map(|s| s.bins).collect();
        windows.sort_unstable();
        windows.dedup();
        let segs = segments
            .iter()
            .map(|s| {
                let (a, b) = (s.x0.min(s.x1), s.x0.max(s.x1));
                let weights: Vec<f64> = if n == 1 {
                    vec![1.0]
                } else {
                    nodes
                        .iter()
                        .map(|&xn| {
                            if b - a > 1e-12 * h {
                                h * (hat_cdf((b - xn) / h) - hat_cdf((a - xn) / h)) / (b - a)
                            } else {
                                (1.0 - ((a - xn) / h).abs()).max(0.0)
                            }
                        })
                        .collect()
                };
                LayoutSegment {
                    weights,
                    bins: s.bins as f64,
                    count: s.count as f64,
                    window: windows.binary_search(&s.bins).ok(),
                }
            })
            .collect();
        Self {
            nodes,
            segments: segs,
            windows: windows.iter().map(|&m| m as f64 * bin).collect(),
        }
    }
}

/// Expected run-averaged g² of a bin.
///
/// Each subtrace is normalized by its own mean count, and the run average
/// pools pair counts over Σ(M−k)μ̂². Its expectation is therefore the
/// exposure-weighted model divided by the weighted mean of E[μ̂²]/μ², which
/// holds the shot-noise term 1/N̄ and the intensity fluctuations integrated
/// over the subtrace. `alphas[n]` holds the φ classes at node n.
pub fn model_g2(
    layout: &BinLayout,
    curves: &[BinnedCurves],
    alphas: &[Vec<(C64, f64)>],
    p: &PhysicalParams,
    bin: f64,
) -> Vec<f64> {
    let kc = p.click_rate_per_photon();
    let n_b = p.background_photons();
    let nn = layout.nodes.len();
    let n_lags = curves[0].len();
    let n_cls = alphas[0].len();
    let mut coef = vec![[0.0; 4]; nn];
    let (mut total_cst, mut wsum) = (0.0, 0.0);
    let mut g10 = vec![0.0; nn];
    let mut cst = vec![0.0; nn];
    let mut mix = vec![[0.0; 4]; nn];
    for q in 0..n_cls {
        let mult = alphas[0][q].1;
        for n in 0..nn {
            let a = alphas[n][q].0;
            let c = a.norm_sqr();
            let pr = curves[n].model.coherent_pair(a);
            g10[n] = curves[n].n_inc + c;
            cst[n] = g10[n] * g10[n] - c * c + pr.norm_sqr();
            mix[n] = [1.0, 2.0 * c, 2.0 * pr.re, 2.0 * pr.im];
        }
        for seg in &layout.segments {
            let w = &seg.weights;
            let g: f64 = w.iter().zip(&g10).map(|(w, v)| w * v).sum();
            let den = g + n_b;
            let cj =
                w.iter().zip(&cst).map(|(w, v)| w * v).sum::<f64>() + 2.0 * g * n_b + n_b * n_b;
            // Same weights as the run average: μ⁴ over the coherent-light variance.
            let mu = kc * den * bin;
            let wt = mult * seg.bins * seg.count * mu * mu / (1.0 + 2.0 * mu);
            let norm = match seg.window {
                Some(i) => {
                    let fl: f64 = (0..nn)
                        .map(|n| {
                            let wi = &curves[n].window[i];
                            w[n] * (0..4).map(|q| mix[n][q] * wi[q]).sum::<f64>()
                        })
                        .sum();
                    1.0 / (mu * seg.bins) + (cj + fl) / (den * den)
                }
                None => 1.0,
            };
            let s = wt / (den * den);
            total_cst += s * cj;
            wsum += wt * norm;
            for n in 0..nn {
                let sn = s * w[n];
                if sn == 0.0 {
                    continue;
                }
                for q in 0..4 {
                    coef[n][q] += sn * mix[n][q];
                }
            }
        }
    }
    let mut out = vec![total_cst; n_lags];
    for n in 0..nn {
        for (part, &cf) in curves[n].parts.iter().zip(&coef[n]) {
            if cf == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(part) {
                *o += cf * v;
            }
        }
    }
    out.iter().map(|v| v / wsum).collect()
}

/// Model g² of a single coupling x straight from (γ, ζ).
pub fn model_g2_at(
    p: &PhysicalParams,
    x: f64,
    gamma: f64,
    zeta: f64,
    n_lags: usize,
    opts: &ModelOptions,
) -> Result<Vec<f64>> {
    let bc = BinnedCurves::new(&bin_curves(p, x, gamma, n_lags, &[], opts)?, n_lags, opts);
    let alphas = phase_alphas(p, x, zeta, opts.n_phi)?;
    Ok(model_g2(
        &BinLayout::point(x),
        &[bc],
        &[alphas],
        p,
        opts.bin,
    ))
}

/// One coupling bin of averaged data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinData {
    pub x: f64,
    pub g2: Vec<f64>,
    pub err: Vec<f64>,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl BinData {
    pub fn from_estimate(e: &G2Estimate, max_lag: f64, bin: f64) -> Self {
        let n = ((max_lag / bin).round() as usize + 1).min(e.g2.len());
        Self {
            x: e.x,
            g2: e.g2[..n].to_vec(),
            err: e.err[..n].to_vec(),
            segments: e.segments.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.g2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g2.is_empty()
    }

    pub fn chi2(&self, model: &[f64]) -> f64 {
        self.g2
            .iter()
            .zip(&self.err)
            .zip(model)
            .filter(|((_, e), _)| **e > 0.0)
            .map(|((g, e), m)| ((g - m) / e).powi(2))
            .sum()
    }

    pub fn dof(&self) -> usize {
        self.err.iter().filter(|e| **e > 0.0).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub model: ModelOptions,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Size of the log-spaced γ table per bin.
    pub gamma_table: usize,
    pub gamma_starts: usize,
    pub zeta_max: f64,
    /// Bins at or above this x are fit for γ but excluded from ζ.
    pub zeta_x_max: f64,
    pub refine_rounds: usize,
    /// Largest soft-mode phase drift (rad) between x nodes of a bin at the
    /// longest lag.
    pub x_phase_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            model: ModelOptions::default(),
            gamma_min: 2.0 * PI * 20.0,
            gamma_max: 2.0 * PI * 5000.0,
            gamma_table: 40,
            gamma_starts: 5,
            zeta_max: 400.0,
            zeta_x_max: 0.97,
            refine_rounds: 2,
            x_phase_tol: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinFit {
    pub x: f64,
    pub gamma: f64,
    pub gamma_err: f64,
    pub chi2_red: f64,
    pub points: usize,
    /// Used in the ζ estimate.
    pub zeta_bin: bool,
    /// χ² has no positive curvature in γ at the optimum.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub zeta: f64,
    pub zeta_err: f64,
    pub bins: Vec<BinFit>,
    pub chi2: f64,
}

/// Per-node binned curves of one bin tabulated over log γ.
struct BinTable {
    data: BinData,
    layout: BinLayout,
    log_g: Vec<f64>,
    /// table[i][n]: γ node i, x node n.
    table: Vec<Vec<BinnedCurves>>,
}

impl BinTable {
    /// Catmull–Rom interpolation in log γ.
    fn interpolate(&self, gamma: f64) -> Vec<BinnedCurves> {
        let h = self.log_g[1] - self.log_g[0];
        let n = self.log_g.len();
        let u = ((gamma.ln() - self.log_g[0]) / h).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        let w = [
            -0.5 * t3 + t2 - 0.5 * t,
            1.5 * t3 - 2.5 * t2 + 1.0,
            -1.5 * t3 + 2.0 * t2 + 0.5 * t,
            0.5 * t3 - 0.5 * t2,
        ];
        let rows: Vec<&Vec<BinnedCurves>> = (0..4)
            .map(|j| &self.table[(i as i64 + j - 1).clamp(0, n as i64 - 1) as usize])
            .collect();
        (0..self.layout.nodes.len())
            .map(|node| {
                let src: Vec<&BinnedCurves> = rows.iter().map(|r| &r[node]).collect();
                let len = src[0].len();
                let parts = std::array::from_fn(|q| {
                    let mut out = vec![0.0; len];
                    for (s, w) in src.iter().zip(&w) {
                        for (o, v) in out.iter_mut().zip(&s.parts[q]) {
                            *o += w * v;
                        }
                    }
                    out
                });
                let window = (0..src[0].window.len())
                    .map(|i| {
                        std::array::from_fn(|q| {
                            src.iter().zip(&w).map(|(s, w)| s.window[i][q] * w).sum()
                        })
                    })
                    .collect();
                let mut model = src[1].model;
                model.gamma = gamma;
                BinnedCurves {
                    model,
                    n_inc: src
                        .iter()
                        .zip(&w)
                        .map(|(s, w)| s.n_inc * w)
                        .sum::<f64>()
                        .max(0.0),
                    parts,
                    window,
                }
            })
            .collect()
    }
}

struct Fitter<'a> {
    p: &'a PhysicalParams,
    opts: &'a FitOptions,
    bins: Vec<BinTable>,
}

impl Fitter<'_> {
    fn alphas(&self, b: usize, zeta: f64) -> Result<Vec<Vec<(C64, f64)>>> {
        self.bins[b]
            .layout
            .nodes
            .iter()
            .map(|&x| phase_alphas(self.p, x, zeta, self.opts.model.n_phi))
            .collect()
    }

    fn chi2_curves(&self, b: usize, curves: &[BinnedCurves], alphas: &[Vec<(C64, f64)>]) -> f64 {
        let t = &self.bins[b];
        t.data.chi2(&model_g2(
            &t.layout,
            curves,
            alphas,
            self.p,
            self.opts.model.bin,
        ))
    }

    fn exact(&self, b: usize, gamma: f64) -> Result<Vec<BinnedCurves>> {
        let t = &self.bins[b];
        let n = t.data.len();
        t.layout
            .nodes
            .iter()
            .map(|&x| {
                bin_curves(self.p, x, gamma, n, &t.layout.windows, &self.opts.model)
                    .map(|bc| BinnedCurves::new(&bc, n, &self.opts.model))
            })
            .collect()
    }

    fn chi2_exact(&self, b: usize, gamma: f64, zeta: f64) -> Result<f64> {
        Ok(self.chi2_curves(b, &self.exact(b, gamma)?, &self.alphas(b, zeta)?))
    }

    fn in_range(&self, lg: f64) -> bool {
        lg >= self.opts.gamma_min.ln() && lg <= self.opts.gamma_max.ln()
    }

    fn simplex_gamma<F: Fn(f64) -> f64>(
        &self,
        f: F,
        x0: f64,
        step: f64,
        evals: usize,
    ) -> (f64, f64) {
        let m = nelder_mead(
            |v| {
                if self.in_range(v[0]) {
                    f(v[0])
                } else {
                    f64::INFINITY
                }
            },
            &[x0],
            &[step],
            &NelderMeadOptions {
                max_evals: evals,
                ftol: 1e-10,
                xtol: 1e-7,
            },
        );
        (m.x[0], m.f)
    }

    /// Best γ for bin b at fixed ζ on the interpolant. The table nodes are
    /// scanned first; with `multistart` simplex runs also start from
    /// log-spaced points across the γ range.
    fn best_gamma_table(&self, b: usize, zeta: f64, multistart: bool) -> Result<(f64, f64)> {
        let t = &self.bins[b];
        let alphas = self.alphas(b, zeta)?;
        let best_node = t
            .table
            .iter()
            .map(|row| self.chi2_curves(b, row, &alphas))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |v| v.0);
        let (lo, hi) = (t.log_g[0], t.log_g[t.log_g.len() - 1]);
        let mut starts = vec![t.log_g[best_node]];
        if multistart {
            let ns = self.opts.gamma_starts.max(1);
            starts.extend((0..ns).map(|s| lo + (hi - lo) * (s as f64 + 0.5) / ns as f64));
        }
        let f = |lg: f64| self.chi2_curves(b, &t.interpolate(lg.exp()), &alphas);
        let step = 0.3 * (t.log_g[1] - t.log_g[0]);
        let mut best = (t.log_g[best_node], f64::INFINITY);
        for x0 in starts {
            let m = self.simplex_gamma(f, x0, step, 120);
            if m.1 < best.1 {
                best = m;
            }
        }
        Ok((best.0.exp(), best.1))
    }

    /// Profile χ²(ζ) over the ζ bins on the table.
    fn profile(&self, zeta: f64) -> Result<f64> {
        let idx: Vec<usize> = (0..self.bins.len())
            .filter(|&b| self.bins[b].data.x < self.opts.zeta_x_max)
            .collect();
        let parts = idx
            .par_iter()
            .map(|&b| self.best_gamma_table(b, zeta, false).map(|v| v.1))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.iter().sum())
    }

    /// Exact 1-D refinement of γ for bin b near `g0`.
    fn refine_gamma(&self, b: usize, g0: f64, zeta: f64) -> Result<f64> {
        let alphas = self.alphas(b, zeta)?;
        let eval = |lg: f64| -> f64 {
            self.exact(b, lg.exp())
                .map(|c| self.chi2_curves(b, &c, &alphas))
                .unwrap_or(f64::INFINITY)
        };
        Ok(self.simplex_gamma(eval, g0.ln(), 0.01, 40).0.exp())
    }
}

/// Joint fit of γ per bin and a global ζ to averaged g² data.
pub fn fit_gamma_zeta(
    data: &[BinData],
    p: &PhysicalParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::Data("no g2 bins to fit".into()));
    }
    for d in data {
        if d.dof() < 3 {
            return Err(Error::Data(format!(
                "bin at x={} has fewer than 3 points",
                d.x
            )));
        }
    }
    let ng = opts.gamma_table.max(4);
    let (lo, hi) = (opts.gamma_min.ln(), opts.gamma_max.ln());
    let log_g: Vec<f64> = (0..ng)
        .map(|i| lo + (hi - lo) * i as f64 / (ng - 1) as f64)
        .collect();
    let layouts: Vec<BinLayout> = data
        .iter()
        .map(|d| {
            let tau_max = (d.len().saturating_sub(1)) as f64 * opts.model.bin;
            BinLayout::new(
                d.x,
                &d.segments,
                p,
                opts.model.bin,
                tau_max,
                opts.x_phase_tol,
            )
        })
        .collect();
    let jobs: Vec<(usize, usize, usize)> = (0..data.len())
        .flat_map(|b| {
            let nn = layouts[b].nodes.len();
            (0..ng).flat_map(move |i| (0..nn).map(move |n| (b, i, n)))
        })
        .collect();
    let curves = jobs
        .par_iter()
        .map(|&(b, i, n)| {
            let len = data[b].len();
            bin_curves(
                p,
                layouts[b].nodes[n],
                log_g[i].exp(),
                len,
                &layouts[b].windows,
                &opts.model,
            )
            .map(|bc| BinnedCurves::new(&bc, len, &opts.model))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = curves.into_iter();
    let bins: Vec<BinTable> = data
        .iter()
        .zip(layouts)
        .map(|(d, layout)| {
            let nn = layout.nodes.len();
            BinTable {
                data: d.clone(),
                table: (0..ng).map(|_| it.by_ref().take(nn).collect()).collect(),
                layout,
                log_g: log_g.clone(),
            }
        })
        .collect();
    let fitter = Fitter { p, opts, bins };
    let zeta_bins: Vec<usize> = (0..data.len())
        .filter(|&b| data[b].x < opts.zeta_x_max)
        .collect();

    // ζ on the tabulated profile: coarse scan, then golden section.
    let mut zeta = 0.0;
    let mut zeta_tab = 0.0;
    if !zeta_bins.is_empty() {
        let grid: Vec<f64> = (0..=16)
            .map(|i| opts.zeta_max * (i as f64 / 16.0).powi(2))
            .collect();
        let prof: Vec<f64> = grid
            .iter()
            .map(|&z| fitter.profile(z))
            .collect::<Result<_>>()?;
        let i_min = (0..grid.len())
            .min_by(|&a, &b| prof[a].total_cmp(&prof[b]))
            .unwrap_or(0);
        let a = grid[i_min.saturating_sub(1)];
        let b = grid[(i_min + 1).min(grid.len() - 1)];
        zeta = golden(|z| fitter.profile(z).unwrap_or(f64::INFINITY), a, b, 1e-3);
        zeta_tab = zeta;
    }

    // Multi-start γ per bin, then alternate exact γ refinement with exact ζ
    // refinement at fixed γ.
    let mut gammas: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|b| fitter.best_gamma_table(b, zeta, true).map(|v| v.0))
        .collect::<Result<_>>()?;
    let mut exact: Vec<Vec<BinnedCurves>> = Vec::new();
    for _ in 0..opts.refine_rounds.max(1) {
        gammas = (0..data.len())
            .into_par_iter()
            .map(|b| fitter.refine_gamma(b, gammas[b], zeta))
            .collect::<Result<_>>()?;
        exact = (0..data.len())
            .into_par_iter()
            .map(|b| fitter.exact(b, gammas[b]))
            .collect::<Result<_>>()?;
        if !zeta_bins.is_empty() {
            let total = |z: f64| -> f64 {
                zeta_bins
                    .iter()
                    .map(|&b| {
                        fitter
                            .alphas(b, z)
                            .map(|a| fitter.chi2_curves(b, &exact[b], &a))
                            .unwrap_or(f64::INFINITY)
                    })
                    .sum()
            };
            let span = (0.1 * zeta).max(2.0);
            zeta = golden(
                total,
                (zeta - span).max(0.0),
                (zeta + span).min(opts.zeta_max),
                1e-6,
            );
        }
    }

    // ζ error: Δχ² = 1 on the profile over γ (table interpolant), measured
    // from that profile's own minimum.
    let mut zeta_err = f64::NAN;
    if !zeta_bins.is_empty() {
        let prof = |z: f64| fitter.profile(z).unwrap_or(f64::INFINITY);
        let span = (0.1 * zeta_tab).max(2.0);
        let z0 = golden(
            prof,
            (zeta_tab - span).max(0.0),
            (zeta_tab + span).min(opts.zeta_max),
            1e-7,
        );
        let f0 = prof(z0);
        let target = |z: f64| prof(z) - f0 - 1.0;
        let tol = 1e-4 * zeta.max(1.0);
        let upper = if target(opts.zeta_max) > 0.0 {
            bracketed_root(target, z0, opts.zeta_max, tol, 100).ok()
        } else {
            None
        };
        let lower = if z0 > 0.0 && target(0.0) > 0.0 {
            bracketed_root(target, 0.0, z0, tol, 100).ok()
        } else {
            None
        };
        zeta_err = match (lower, upper) {
            (Some(l), Some(u)) => 0.5 * (u - l),
            (None, Some(u)) => u - z0,
            _ => {
                return Err(Error::NonConvergence {
                    what: "zeta confidence interval (profile flat up to zeta_max)",
                    residual: f0,
                })
            }
        };
    }

    let bins = (0..data.len())
        .into_par_iter()
        .map(|b| -> Result<BinFit> {
            let g = gammas[b];
            let c0 = fitter.chi2_curves(b, &exact[b], &fitter.alphas(b, zeta)?);
            let h = 0.02;
            let cp = fitter.chi2_exact(b, g * (1.0 + h), zeta)?;
            let cm = fitter.chi2_exact(b, g * (1.0 - h), zeta)?;
            let d2 = (cp - 2.0 * c0 + cm) / (g * h).powi(2);
            let dof = data[b].dof();
            Ok(BinFit {
                x: data[b].x,
                gamma: g,
                gamma_err: if d2 > 0.0 {
                    (2.0 / d2).sqrt()
                } else {
                    f64::NAN
                },
                chi2_red: c0 / dof.saturating_sub(1).max(1) as f64,
                points: dof,
                zeta_bin: data[b].x < opts.zeta_x_max,
                degenerate: d2.is_nan() || d2 <= 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let chi2 = bins
        .iter()
        .map(|b| b.chi2_red * b.points.saturating_sub(1).max(1) as f64)
        .sum();
    Ok(FitResult {
        zeta,
        zeta_err,
        bins,
        chi2,
    })
}

/// Golden-section minimum of a unimodal function on [a, b].
fn golden<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    if fa < f(m) {
        a
    } else {
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalGammaFit {
    pub c: [f64; 6],
    pub rms_residual: f64,
    pub converged: bool,
}

impl EmpiricalGammaFit {
    pub fn eval(&self, x: f64) -> f64 {
        empirical_gamma(&self.c, x)
    }
}

/// Least-squares fit of c₁(1−x)^c₂e^{c₃x} + c₄(1−x)^c₅e^{c₆x} to (x, γ, σ).
///
/// The shape parameters (c₂, c₃, c₅, c₆) are searched by a multi-start
/// simplex with c₂, c₅ ≥ 0; for each shape the amplitudes c₁, c₄ ≥ 0 follow
/// from a linear non-negative least-squares solve. The fitted curve is
/// therefore non-negative on [0, 1].
pub fn fit_empirical_gamma(x: &[f64], gamma: &[f64], err: &[f64]) -> Result<EmpiricalGammaFit> {
    if x.len() < 7 || x.len() != gamma.len() || x.len() != err.len() {
        return Err(Error::Data(
            "empirical gamma fit needs at least 7 matching points".into(),
        ));
    }
    if x.iter().any(|&v| !(v < 1.0)) {
        return Err(Error::Data("empirical gamma fit needs x < 1".into()));
    }
    let w: Vec<f64> = err
        .iter()
        .map(|&e| {
            if e > 0.0 && e.is_finite() {
                1.0 / e
            } else {
                0.0
            }
        })
        .collect();
    let w = if w.iter().any(|&v| v > 0.0) {
        w
    } else {
        vec![1.0; x.len()]
    };
    let solve = |t: &[f64]| -> ([f64; 6], f64) {
        let (c2, c3, c5, c6) = (t[0] * t[0], t[1], t[2] * t[2], t[3]);
        let mut c = [0.0, c2, c3, 0.0, c5, c6];
        if [c3, c6].iter().any(|v| v.abs() > 60.0) || c2 > 60.0 || c5 > 60.0 {
            return (c, f64::INFINITY);
        }
        let (mut suu, mut suv, mut svv, mut sug, mut svg) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&xi, &gi), &wi) in x.iter().zip(gamma).zip(&w) {
            let d = 1.0 - xi;
            let u = d.powf(c2) * (c3 * xi).exp() * wi;
            let v = d.powf(c5) * (c6 * xi).exp() * wi;
            let g = gi * wi;
            suu += u * u;
            suv += u * v;
            svv += v * v;
            sug += u * g;
            svg += v * g;
        }
        let cost = |a: f64, b: f64| {
            x.iter()
                .zip(gamma)
                .zip(&w)
                .map(|((&xi, &gi), &wi)| {
                    let d = 1.0 - xi;
                    let m = a * d.powf(c2) * (c3 * xi).exp() + b * d.powf(c5) * (c6 * xi).exp();
                    ((m - gi) * wi).powi(2)
                })
                .sum::<f64>()
        };
        let mut cands = vec![
            ((sug / suu).max(0.0), 0.0),
            (0.0, (svg / svv).max(0.0)),
            (0.0, 0.0),
        ];
        let det = suu * svv - suv * suv;
        if det > 1e-12 * suu * svv {
            let a = (sug * svv - svg * suv) / det;
            let b = (svg * suu - sug * suv) / det;
            if a >= 0.0 && b >= 0.0 {
                cands.push((a, b));
            }
        }
        let (mut best, mut bc) = ((0.0, 0.0), f64::INFINITY);
        for (a, b) in cands {
            let v = cost(
                if a.is_finite() { a } else { 0.0 },
                if b.is_finite() { b } else { 0.0 },
            );
            if v < bc {
                best = (a, b);
                bc = v;
            }
        }
        c[0] = best.0;
        c[3] = best.1;
        (c, bc)
    };
    let opts = NelderMeadOptions {
        max_evals: 3000,
        ftol: 1e-12,
        xtol: 1e-9,
    };
    let mut best: Option<(crate::optim::Minimum, f64)> = None;
    for &c2 in &[0.25, 1.0] {
        for &c3 in &[0.0, 5.0] {
            for &(c5, c6) in &[(0.5, -2.0), (2.0, 3.0), (0.1, 10.0)] {
                let t0 = [f64::sqrt(c2), c3, f64::sqrt(c5), c6];
                let m = nelder_mead(|t| solve(t).1, &t0, &[0.2, 1.0, 0.3, 1.0], &opts);
                if best.as_ref().is_none_or(|(b, _)| m.f < b.f) {
                    let f = m.f;
                    best = Some((m, f));
                }
            }
        }
    }
    let (m, cost) = best.expect("at least one start");
    if !cost.is_finite() {
        return Err(Error::NonConvergence {
            what: "empirical gamma fit",
            residual: cost,
        });
    }
    let c = solve(&m.x).0;
    let rms = (x
        .iter()
        .zip(gamma)
        .map(|(&xi, &gi)| (empirical_gamma(&c, xi) - gi).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    Ok(EmpiricalGammaFit {
        c,
        rms_residual: rms,
        converged: m.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPoint {
    pub x: f64,
    pub variance: f64,
    pub err: f64,
    pub coherent: f64,
}

/// φ-averaged |α|² for the ensemble ζ → ζcos φ.
pub fn mean_coherent_photons(p: &PhysicalParams, x: f64, zeta: f64, n_phi: usize) -> Result<f64> {
    let a = phase_alphas(p, x, zeta, n_phi)?;
    let m: f64 = a.iter().map(|v| v.1).sum();
    Ok(a.iter().map(|(v, w)| w * v.norm_sqr()).sum::<f64>() / m)
}

/// ⟨(b+b†)²⟩ = 4ω/(ω₀x)·max(n̄ − |α|², 0), with errors from n̄ and ζ ± Δζ.
pub fn density_fluctuations_from_nbar(
    points: &[NbarPoint],
    zeta: f64,
    zeta_err: f64,
    p: &PhysicalParams,
    n_phi: usize,
) -> Result<Vec<FluctuationPoint>> {
    points
        .iter()
        .filter(|pt| pt.x > 0.0)
        .map(|pt| {
            let c = mean_coherent_photons(p, pt.x, zeta, n_phi)?;
            let dz = if zeta_err.is_finite() { zeta_err } else { 0.0 };
            let cp = mean_coherent_photons(p, pt.x, zeta + dz, n_phi)?;
            let cm = mean_coherent_photons(p, pt.x, (zeta - dz).max(0.0), n_phi)?;
            let f = 4.0 * p.omega / (p.omega0 * pt.x);
            let dc = 0.5 * (cp - cm).abs();
            Ok(FluctuationPoint {
                x: pt.x,
                variance: f * (pt.nbar - c).max(0.0),
                err: f * (pt.nbar_err.powi(2) + dc * dc).sqrt(),
                coherent: c,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub err: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub excluded: usize,
}

/// OLS of log v against log(1−x) on [x_min, x_max]; exponent = −slope.
pub fn fit_power_law(x: &[f64], v: &[f64], x_min: f64, x_max: f64) -> Result<PowerLawFit> {
    let mut excluded = 0;
    let mut pts = Vec::new();
    for (&xi, &vi) in x.iter().zip(v) {
        if xi < x_min || xi > x_max || xi >= 1.0 {
            continue;
        }
        if vi > 0.0 && vi.is_finite() {
            pts.push(((1.0 - xi).ln(), vi.ln()));
        } else {
            excluded += 1;
        }
    }
    let n = pts.len();
    if n < 4 {
        return Err(Error::Data(format!(
            "power-law fit needs 4 positive points in range, found {n}"
        )));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Data("power-law fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - icept - slope * p.0).powi(2))
        .sum();
    let s2 = rss / (nf - 2.0);
    // Exact fits still report a positive error at rounding level.
    let err = (s2 / sxx).sqrt().max(f64::EPSILON * slope.abs().max(1.0));
    Ok(PowerLawFit {
        exponent: -slope,
        err,
        x_min,
        x_max,
        points: n,
        excluded,
    })
}
