// SPDX-License-Identifier: Apache-2.0

//! Synthetic photon click streams.
//!
//! The fluctuation field δa is a classical complex Gaussian process whose
//! normally ordered covariance and pseudo-covariance follow the linearized
//! model. It is produced by filtering one shared white-noise sequence with a
//! per-block frequency-domain filter and blending neighbouring blocks with
//! triangular weights. Clicks are drawn from the intensity 2κη|α + δa|² by
//! exact thinning of the piecewise-constant rate, plus Poisson background.
//!
//! Where the model covariance is not classically realizable the pseudo
//! spectrum is shrunk to the nearest admissible one, and the missing
//! two-photon correlation is supplied by an independent Poisson pair process
//! whose rate is taken out of the background.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::steady_state_x;
use crate::params::PhysicalParams;
use crate::spectral::{
    curves_from_grid, grid_spectra, resonance, DeterminantMode, EffectiveModel, GridSpectra,
    XiConvention,
};
use crate::trace::{ClickTrace, RampInfo, TraceTruth};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest admissible expected clicks per field sample.
pub const MAX_RATE_DT: f64 = 0.1;

const STREAM_CLICKS: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_BACKGROUND: u64 = 3;
const STREAM_TAIL: u64 = 4;
const STREAM_NOISE_BASE: u64 = 1 << 40;

/// Treatment of per-frequency covariances that are not positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Realizability {
    /// Error out when the violation exceeds 1e-12 of the trace.
    Strict,
    /// Shrink the pseudo-spectrum onto the admissible set and restore the
    /// lost intensity correlation with a pair process.
    #[default]
    Project,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    /// Field sample spacing (s).
    pub dt: f64,
    pub realizability: Realizability,
    pub mode: DeterminantMode,
    pub xi_convention: XiConvention,
    /// Filter padding in units of the resonance decay time.
    pub pad_decay_times: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            dt: 1e-6,
            realizability: Realizability::Project,
            mode: DeterminantMode::SoftModeApprox,
            xi_convention: XiConvention::Consistent,
            pad_decay_times: 8.0,
        }
    }
}

/// Atomic damping as a function of relative coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaProfile {
    Constant {
        gamma: f64,
    },
    /// c₁(1−x)^c₂ e^{c₃x} + c₄(1−x)^c₅ e^{c₆x}
    Empirical {
        c: [f64; 6],
    },
    /// Piecewise-linear table, clamped at the ends.
    Table {
        x: Vec<f64>,
        gamma: Vec<f64>,
    },
}

impl Default for GammaProfile {
    /// Cusp peaking at x = 0.95 with about 2π·400 Hz.
    fn default() -> Self {
        GammaProfile::Empirical {
            c: [2.0 * PI * 7.31, 0.25, 5.0, 0.0, 0.0, 0.0],
        }
    }
}

pub fn empirical_gamma(c: &[f64; 6], x: f64) -> f64 {
    let d = (1.0 - x).max(0.0);
    c[0] * d.powf(c[1]) * (c[2] * x).exp() + c[3] * d.powf(c[4]) * (c[5] * x).exp()
}

impl GammaProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GammaProfile::Constant { gamma } => *gamma,
            GammaProfile::Empirical { c } => empirical_gamma(c, x),
            GammaProfile::Table { x: xs, gamma } => {
                if xs.is_empty() {
                    return 0.0;
                }
                let i = xs.partition_point(|&v| v < x);
                if i == 0 {
                    gamma[0]
                } else if i >= xs.len() {
                    gamma[xs.len() - 1]
                } else {
                    let f = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                    gamma[i - 1] + f * (gamma[i] - gamma[i - 1])
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let GammaProfile::Table { x, gamma } = self {
            if x.len() != gamma.len() || x.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "gamma table needs equal-length arrays with increasing x".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Photon number beyond the fluctuating region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailModel {
    /// Mean-field |α|² only.
    MeanField,
    /// Mean-field |α|² plus a linear rise that reaches `n_peak` photons
    /// `rise_s` after the crossing, capped at `cap` × `n_peak`.
    Ramp { n_peak: f64, rise_s: f64, cap: f64 },
}

impl Default for TailModel {
    fn default() -> Self {
        TailModel::Ramp {
            n_peak: 18e6 / (2.0 * PI * 1.25e6 * 2.0 * 0.05),
            rise_s: 1e-3,
            cap: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSchedule {
    pub x_start: f64,
    pub x_end: f64,
    /// Sweep duration (s).
    pub duration: f64,
    /// Quasi-static block length (s).
    pub block_length: f64,
    pub zeta: f64,
    pub phi: f64,
    pub gamma_profile: GammaProfile,
    pub seed: u64,
    pub tail: TailModel,
    /// Fractional linear atom loss over the sweep (0 disables).
    pub atom_loss: f64,
    /// Fluctuation synthesis stops at this x; the tail model takes over.
    pub x_field_max: f64,
}

impl Default for SweepSchedule {
    fn default() -> Self {
        Self {
            x_start: 0.55,
            x_end: 1.05,
            duration: 0.8,
            block_length: 4e-3,
            zeta: 0.0,
            phi: 0.0,
            gamma_profile: GammaProfile::default(),
            seed: 0,
            tail: TailModel::default(),
            atom_loss: 0.0,
            x_field_max: 0.999,
        }
    }
}

impl SweepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_end > self.x_start && self.x_start >= 0.0) {
            return Err(Error::Config("need 0 <= x_start < x_end".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Config("sweep duration must be positive".into()));
        }
        if !(self.block_length >= 1e-3) {
            return Err(Error::Config("block_length must be at least 1 ms".into()));
        }
        if !(0.0..1.0).contains(&self.atom_loss) {
            return Err(Error::Config("atom_loss must lie in [0, 1)".into()));
        }
        if !(self.x_field_max > 0.0 && self.x_field_max < 1.0) {
            return Err(Error::Config("x_field_max must lie in (0, 1)".into()));
        }
        self.gamma_profile.validate()
    }

    pub fn ramp(&self) -> RampInfo {
        RampInfo {
            x_start: self.x_start,
            x_end: self.x_end,
            duration_s: self.duration,
        }
    }

    /// Relative coupling at time t including atom loss.
    pub fn x_at(&self, t: f64) -> f64 {
        self.ramp().x_at(t) * (1.0 - self.atom_loss * t / self.duration)
    }

    /// First time at which x_at reaches `x`, if within the sweep.
    pub fn time_of(&self, x: f64) -> Option<f64> {
        if self.x_at(0.0) >= x {
            return Some(0.0);
        }
        if self.x_at(self.duration) < x {
            return None;
        }
        crate::optim::bracketed_root(|t| self.x_at(t) - x, 0.0, self.duration, 1e-15, 200).ok()
    }
}

/// SplitMix64 step: decorrelated per-run seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Diagnostics accumulated during synthesis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    /// Largest projected-away pseudo-spectrum mass relative to the trace.
    pub max_violation: f64,
    /// Mean pair-process rate over the fluctuating region (1/s).
    pub mean_pair_rate: f64,
    /// Fraction of the required pair rate that could not be delivered.
    pub pair_shortfall: f64,
    /// Negative excess correlation discarded, relative to the positive part.
    pub clipped_negative: f64,
    pub clicks: usize,
    pub field_end_s: f64,
}

/// Frequency-domain filter and model curves for one quasi-static block.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub model: EffectiveModel,
    pub n_fft: usize,
    /// c_q = a_q ε̂_q + b_q conj(ε̂_{−q}); already scaled by 1/√n.
    a: Vec<f64>,
    b: Vec<C64>,
    /// Model pseudo-covariance ⟨δa δa⟩(j·dt).
    pub pseudo_model: Vec<C64>,
    /// Pseudo-covariance actually realized by the filter.
    pub pseudo_field: Vec<C64>,
    /// Σ_q s_q, the realized ⟨|δa|²⟩.
    pub variance: f64,
    pub violation: f64,
}

impl BlockModel {
    pub fn new(m: EffectiveModel, dt: f64, half: usize, opts: &SynthOptions) -> Result<Self> {
        let (_, hw) = resonance(&m);
        let pad_t = opts.pad_decay_times / hw.max(1e-300);
        let need = 2 * half + 2 * (pad_t / dt).ceil() as usize;
        let n_fft = need.max(64).next_power_of_two();
        if n_fft > crate::spectral::MAX_GRID {
            return Err(Error::Domain(format!(
                "resonance too narrow for block synthesis ({n_fft} points needed)"
            )));
        }
        let gs = grid_spectra(&m, n_fft, dt)?;
        Self::from_grid(m, gs, pad_t, opts)
    }

    fn from_grid(
        m: EffectiveModel,
        gs: GridSpectra,
        pad_t: f64,
        opts: &SynthOptions,
    ) -> Result<Self> {
        let n = gs.len();
        let w = gs.dnu() / (2.0 * PI);
        let norm = 1.0 / (n as f64).sqrt();
        let s: Vec<f64> = gs.s.iter().map(|v| v.max(0.0) * w).collect();
        let trace: f64 = s.iter().sum();
        let mut a = vec![0.0; n];
        let mut b = vec![ZERO; n];
        let mut q_real = vec![ZERO; n];
        let mut violation = 0.0;
        for p in 0..=n / 2 {
            let mp = (n - p) % n;
            let r0 = 0.5 * (gs.q[p] + gs.q[mp]) * w;
            let lim = if p == mp { s[p] } else { (s[p] * s[mp]).sqrt() };
            let rn = r0.norm();
            let r = if rn > lim {
                violation += rn - lim;
                if rn > 0.0 {
                    r0 * (lim / rn)
                } else {
                    ZERO
                }
            } else {
                r0
            };
            q_real[p] = r / w;
            q_real[mp] = r / w;
            if p == mp {
                let sp = s[p];
                let disc = (sp * sp - r.norm_sqr()).max(0.0).sqrt();
                let ap = (0.5 * (sp + disc)).sqrt();
                a[p] = ap * norm;
                b[p] = if ap > 0.0 {
                    r / (2.0 * ap) * norm
                } else {
                    ZERO
                };
            } else {
                let (lead, other) = if s[p] >= s[mp] { (p, mp) } else { (mp, p) };
                let sl = s[lead];
                if sl > 0.0 {
                    a[lead] = sl.sqrt() * norm;
                    a[other] = (s[other] - r.norm_sqr() / sl).max(0.0).sqrt() * norm;
                    b[other] = r / sl.sqrt() * norm;
                }
            }
        }
        let rel = if trace > 0.0 { violation / trace } else { 0.0 };
        if opts.realizability == Realizability::Strict && rel > 1e-12 {
            return Err(Error::Unrealizable { violation: rel });
        }
        let n_lag = ((pad_t / gs.dt).ceil() as usize).min(n / 2);
        let (_, pm) = curves_from_grid(&gs);
        let realized = GridSpectra {
            dt: gs.dt,
            s: gs.s.clone(),
            q: q_real,
        };
        let (_, pc) = curves_from_grid(&realized);
        Ok(Self {
            model: m,
            n_fft: n,
            a,
            b,
            pseudo_model: pm[..n_lag].to_vec(),
            pseudo_field: pc[..n_lag].to_vec(),
            variance: trace,
            violation: rel,
        })
    }

    /// Excess intensity correlation (2κη)²(|P_m + α²|² − |P_c + α²|²) on the
    /// lag grid, for the coherent amplitude `alpha`.
    pub fn pair_excess(&self, alpha: C64, click_per_photon: f64) -> Vec<f64> {
        let c = self.model.coherent_pair(alpha);
        let k2 = click_per_photon * click_per_photon;
        self.pseudo_model
            .iter()
            .zip(&self.pseudo_field)
            .map(|(pm, pc)| k2 * ((pm + c).norm_sqr() - (pc + c).norm_sqr()))
            .collect()
    }
}

/// Window k covers samples [(k−1)h, (k+1)h) and is filtered from the shared
/// white noise on [(k−1)h − pad, (k−1)h − pad + n_fft).
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

struct NoiseSource {
    seed: u64,
    h: usize,
    chunks: BTreeMap<i64, Vec<C64>>,
    plans: HashMap<usize, FftPair>,
    planner: FftPlanner<f64>,
}

impl NoiseSource {
    fn new(seed: u64, h: usize) -> Self {
        Self {
            seed,
            h,
            chunks: BTreeMap::new(),
            plans: HashMap::new(),
            planner: FftPlanner::new(),
        }
    }

    fn chunk(&mut self, c: i64) -> &Vec<C64> {
        let (seed, h) = (self.seed, self.h);
        self.chunks.entry(c).or_insert_with(|| {
            let mut rng = rng_for(seed, STREAM_NOISE_BASE.wrapping_add(c as u64));
            (0..h)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect()
        })
    }

    fn fill(&mut self, start: i64, out: &mut [C64]) {
        let h = self.h as i64;
        let mut j = 0usize;
        while j < out.len() {
            let g = start + j as i64;
            let c = g.div_euclid(h);
            let off = g.rem_euclid(h) as usize;
            let take = (self.h - off).min(out.len() - j);
            let src = self.chunk(c);
            out[j..j + take].copy_from_slice(&src[off..off + take]);
            j += take;
        }
    }

    fn forget_before(&mut self, sample: i64) {
        let c = sample.div_euclid(self.h as i64);
        self.chunks = self.chunks.split_off(&c);
    }

    fn plan(&mut self, n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        let planner = &mut self.planner;
        self.plans
            .entry(n)
            .or_insert_with(|| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .clone()
    }

    /// Filtered output of window k, 2h samples.
    fn window(&mut self, k: i64, bm: &BlockModel) -> Vec<C64> {
        let n = bm.n_fft;
        let h = self.h as i64;
        let pad = (n - 2 * self.h) / 2;
        let start = (k - 1) * h - pad as i64;
        let mut buf = vec![ZERO; n];
        self.fill(start, &mut buf);
        let (fwd, inv) = self.plan(n);
        fwd.process(&mut buf);
        let mut c = vec![ZERO; n];
        for p in 0..n {
            let mp = (n - p) % n;
            c[p] = bm.a[p] * buf[p] + bm.b[p] * buf[mp].conj();
        }
        inv.process(&mut c);
        c[pad..pad + 2 * self.h].to_vec()
    }
}

/// Exact thinning of a piecewise-constant intensity, carried across calls.
struct Thinner {
    rng: ChaCha8Rng,
    need: f64,
}

impl Thinner {
    fn new(rng: ChaCha8Rng) -> Self {
        let mut t = Self { rng, need: 0.0 };
        t.need = Exp1.sample(&mut t.rng);
        t
    }

    /// Intensity `rate` (1/s) held on [t0, t0 + dt).
    fn step(&mut self, t0: f64, dt: f64, rate: f64, out: &mut Vec<f64>) {
        if !(rate > 0.0) {
            return;
        }
        let mass = rate * dt;
        let mut used = 0.0;
        while used + self.need <= mass {
            used += self.need;
            out.push(t0 + used / rate);
            self.need = Exp1.sample(&mut self.rng);
        }
        self.need -= mass - used;
    }
}

/// Homogeneous Poisson clicks on [t0, t1).
fn poisson_clicks(rng: &mut ChaCha8Rng, rate: f64, t0: f64, t1: f64, out: &mut Vec<f64>) {
    if !(rate > 0.0) || !(t1 > t0) {
        return;
    }
    let mean = rate * (t1 - t0);
    let n = Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0);
    for _ in 0..n {
        out.push(rng.random_range(t0..t1));
    }
}

/// Pairs with first click uniform on [t0, t1) and lag drawn from `excess`
/// (a density on the grid j·dt, piecewise constant).
struct PairSampler {
    cdf: Vec<f64>,
    rate: f64,
}

impl PairSampler {
    fn new(excess: &[f64], dt: f64) -> (Self, f64, f64) {
        let mut cdf = Vec::with_capacity(excess.len());
        let (mut pos, mut neg) = (0.0, 0.0);
        for &d in excess {
            if d > 0.0 {
                pos += d * dt;
            } else {
                neg -= d * dt;
            }
            cdf.push(pos);
        }
        (Self { cdf, rate: pos }, pos, neg)
    }

    fn sample(
        &self,
        rng: &mut ChaCha8Rng,
        rate: f64,
        t0: f64,
        t1: f64,
        dt: f64,
        out: &mut Vec<f64>,
    ) {
        if !(rate > 0.0) || !(t1 > t0) || !(self.rate > 0.0) {
            return;
        }
        let n = Poisson::new(rate * (t1 - t0))
            .map(|d| d.sample(rng) as u64)
            .unwrap_or(0);
        for _ in 0..n {
            let t = rng.random_range(t0..t1);
            let u = rng.random::<f64>() * self.rate;
            let j = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
            let lag = (j as f64 + rng.random::<f64>()) * dt;
            out.push(t);
            out.push(t + lag);
        }
    }
}

fn to_trace(mut times: Vec<f64>, duration: f64) -> Result<ClickTrace> {
    times.sort_by(f64::total_cmp);
    let duration_ns = (duration * 1e9).round() as u64;
    let mut ts: Vec<u64> = Vec::with_capacity(times.len());
    for t in times {
        if t < 0.0 {
            continue;
        }
        let mut v = (t * 1e9).floor() as u64;
        if let Some(&last) = ts.last() {
            if v <= last {
                v = last + 1;
            }
        }
        if v >= duration_ns {
            break;
        }
        ts.push(v);
    }
    ClickTrace::new(ts, duration_ns)
}

fn check_rate(rate: f64, dt: f64) -> Result<()> {
    if rate * dt >= MAX_RATE_DT {
        return Err(Error::Domain(format!(
            "click probability per sample {:.3} >= {MAX_RATE_DT}; use a smaller dt",
            rate * dt
        )));
    }
    Ok(())
}

/// Complex field samples at spacing dt.
#[derive(Debug, Clone)]
pub struct FieldBlock {
    pub dt: f64,
    pub samples: Vec<C64>,
    pub violation: f64,
}

fn block_half(block_length: f64, dt: f64) -> usize {
    ((0.5 * block_length / dt).round() as usize).max(1)
}

/// Stationary Gaussian fluctuation field of the model, `duration` long.
pub fn field_block(
    m: &EffectiveModel,
    duration: f64,
    dt: f64,
    seed: u64,
    opts: &SynthOptions,
) -> Result<FieldBlock> {
    let n_samples = (duration / dt).round() as usize;
    if m.lambda == 0.0 {
        return Ok(FieldBlock {
            dt,
            samples: vec![ZERO; n_samples],
            violation: 0.0,
        });
    }
    let h = block_half(16e-3, dt);
    let bm = BlockModel::new(*m, dt, h, opts)?;
    let mut src = NoiseSource::new(seed, h);
    let mut out = Vec::with_capacity(n_samples);
    let mut prev = src.window(0, &bm);
    let mut k = 0i64;
    while out.len() < n_samples {
        let next = src.window(k + 1, &bm);
        for j in 0..h {
            let f = j as f64 / h as f64;
            out.push((1.0 - f) * prev[h + j] + f * next[j]);
        }
        prev = next;
        k += 1;
        src.forget_before(k * h as i64 - bm.n_fft as i64);
    }
    out.truncate(n_samples);
    Ok(FieldBlock {
        dt,
        samples: out,
        violation: bm.violation,
    })
}

/// Clicks from the intensity 2κη|α + δa|² plus background r_b.
pub fn clicks_from_field(
    field: &FieldBlock,
    alpha: C64,
    p: &PhysicalParams,
    seed: u64,
) -> Result<ClickTrace> {
    let k = p.click_rate_per_photon();
    let dt = field.dt;
    let max_i = field
        .samples
        .iter()
        .map(|z| (alpha + z).norm_sqr())
        .fold(0.0, f64::max);
    check_rate(k * max_i + p.r_b, dt)?;
    let mut th = Thinner::new(rng_for(seed, STREAM_CLICKS));
    let mut times = Vec::new();
    for (j, z) in field.samples.iter().enumerate() {
        th.step(j as f64 * dt, dt, k * (alpha + z).norm_sqr(), &mut times);
    }
    let duration = field.samples.len() as f64 * dt;
    poisson_clicks(
        &mut rng_for(seed, STREAM_BACKGROUND),
        p.r_b,
        0.0,
        duration,
        &mut times,
    );
    to_trace(times, duration)
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub trace: ClickTrace,
    pub report: SynthReport,
}

/// Per-window state for the field driver.
struct WindowSpec<'a> {
    block: &'a BlockModel,
    alpha: C64,
}

/// Shared driver: field windows k = 0..=n_seg, output segments
/// [k·h, (k+1)·h) for k < n_seg, truncated at `t_field`.
#[allow(clippy::too_many_arguments)]
fn run_field<'a, F>(
    windows: F,
    n_seg: usize,
    h: usize,
    dt: f64,
    t_field: f64,
    p: &PhysicalParams,
    seed: u64,
    times: &mut Vec<f64>,
    report: &mut SynthReport,
) -> Result<()>
where
    F: Fn(usize) -> WindowSpec<'a>,
{
    let k_click = p.click_rate_per_photon();
    let mut src = NoiseSource::new(seed, h);
    let mut th = Thinner::new(rng_for(seed, STREAM_CLICKS));
    let mut rng_pairs = rng_for(seed, STREAM_PAIRS);
    let mut rng_bg = rng_for(seed, STREAM_BACKGROUND);
    let n_field = (t_field / dt).round() as usize;

    // Amplitude is interpolated linearly between samples, on sub-steps
    // short enough that each carries fewer than MAX_RATE_DT/2 expected clicks.
    let interval = |th: &mut Thinner, t: f64, u0: C64, u1: C64, out: &mut Vec<f64>| {
        let peak = k_click * u0.norm_sqr().max(u1.norm_sqr()) + p.r_b;
        let n_sub = ((peak * dt / (0.5 * MAX_RATE_DT)).ceil() as usize).max(1);
        let sdt = dt / n_sub as f64;
        for i in 0..n_sub {
            let f = (i as f64 + 0.5) / n_sub as f64;
            th.step(
                t + i as f64 * sdt,
                sdt,
                k_click * (u0 + (u1 - u0) * f).norm_sqr(),
                out,
            );
        }
    };
    let mut last: Option<C64> = None;
    let mut cur = windows(0);
    let mut prev = src.window(0, cur.block);
    let (mut pair_time, mut pair_sum, mut want_sum, mut pos_sum, mut neg_sum) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..n_seg {
        let nxt = windows(k + 1);
        let next = src.window(k as i64 + 1, nxt.block);
        report.max_violation = report.max_violation.max(cur.block.violation);
        let j0 = k * h;
        for j in 0..h {
            let g = j0 + j;
            if g >= n_field {
                break;
            }
            let f = j as f64 / h as f64;
            let z = (1.0 - f) * prev[h + j] + f * next[j];
            let u = (1.0 - f) * cur.alpha + f * nxt.alpha + z;
            if let Some(up) = last {
                interval(&mut th, (g - 1) as f64 * dt, up, u, times);
            }
            last = Some(u);
        }

        // Pair process and background on the part of this segment nearest to
        // each window centre.
        for (win, lo, hi) in [
            (&cur, j0 as f64, (j0 + h / 2) as f64),
            (&nxt, (j0 + h / 2) as f64, (j0 + h) as f64),
        ] {
            let t0 = lo * dt;
            let t1 = (hi * dt).min(t_field);
            if !(t1 > t0) {
                continue;
            }
            let excess = win.block.pair_excess(win.alpha, k_click);
            let (sampler, pos, neg) = PairSampler::new(&excess, dt);
            let rate = pos.min(0.5 * p.r_b);
            sampler.sample(&mut rng_pairs, rate, t0, t1, dt, times);
            poisson_clicks(&mut rng_bg, p.r_b - 2.0 * rate, t0, t1, times);
            let span = t1 - t0;
            pair_time += span;
            pair_sum += rate * span;
            want_sum += pos * span;
            pos_sum += pos * span;
            neg_sum += neg * span;
        }
        prev = next;
        cur = nxt;
        // Chunks are deterministic, so forgetting early only costs regeneration.
        src.forget_before(((k + 1) * h) as i64 - 2 * cur.block.n_fft as i64);
    }
    if let Some(u) = last {
        let g = n_field.saturating_sub(1);
        interval(&mut th, g as f64 * dt, u, u, times);
    }
    if pair_time > 0.0 {
        report.mean_pair_rate = pair_sum / pair_time;
    }
    if want_sum > 0.0 {
        report.pair_shortfall = 1.0 - pair_sum / want_sum;
    }
    if pos_sum > 0.0 {
        report.clipped_negative = neg_sum / pos_sum;
    }
    report.field_end_s = t_field;
    Ok(())
}

/// Stationary click stream at fixed coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub x: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub phi: f64,
    pub duration: f64,
    pub block_length: f64,
    pub seed: u64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            x: 0.8,
            gamma: 2.0 * PI * 300.0,
            zeta: 0.0,
            phi: 0.0,
            duration: 1.0,
            block_length: 16e-3,
            seed: 0,
        }
    }
}

impl StationaryConfig {
    pub fn model(&self, p: &PhysicalParams, opts: &SynthOptions) -> Result<EffectiveModel> {
        let alpha = steady_state_x(p, self.x, self.zeta * self.phi.cos())?.alpha;
        Ok(EffectiveModel::new(p, self.x, self.gamma)?
            .with_mode(opts.mode)
            .with_xi(opts.xi_convention)
            .with_alpha(alpha))
    }
}

pub fn synthesize_stationary(
    cfg: &StationaryConfig,
    p: &PhysicalParams,
    opts: &SynthOptions,
) -> Result<Synthesis> {
    p.validate()?;
    if !(cfg.duration > 0.0) || !(cfg.block_length >= 1e-3) {
        return Err(Error::Config(
            "need duration > 0 and block_length >= 1 ms".into(),
        ));
    }
    let m = cfg.model(p, opts)?;
    let dt = opts.dt;
    let h = block_half(cfg.block_length, dt);
    let bm = BlockModel::new(m, dt, h, opts)?;
    let n_seg = (cfg.duration / dt / h as f64).ceil() as usize;
    let mut times = Vec::new();
    let mut report = SynthReport::default();
    run_field(
        |_| WindowSpec {
            block: &bm,
            alpha: m.alpha,
        },
        n_seg,
        h,
        dt,
        cfg.duration,
        p,
        cfg.seed,
        &mut times,
        &mut report,
    )?;
    let mut trace = to_trace(times, cfg.duration)?;
    report.clicks = trace.len();
    trace.truth = Some(TraceTruth {
        zeta: cfg.zeta,
        phi: cfg.phi,
        seed: cfg.seed,
        t_cross: f64::NAN,
    });
    Ok(Synthesis { trace, report })
}

/// α-independent part of a sweep: the block filters along the schedule.
/// Building it once lets many runs with different ζ, φ and seed share it.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub schedule: SweepSchedule,
    pub params: PhysicalParams,
    pub opts: SynthOptions,
    pub half: usize,
    pub t_field: f64,
    pub n_seg: usize,
    pub blocks: Vec<BlockModel>,
}

impl SweepPlan {
    pub fn new(s: &SweepSchedule, p: &PhysicalParams, opts: &SynthOptions) -> Result<Self> {
        s.validate()?;
        p.validate()?;
        let dt = opts.dt;
        let h = block_half(s.block_length, dt);
        let t_field = s
            .time_of(s.x_field_max)
            .unwrap_or(s.duration)
            .min(s.duration);
        let n_seg = (t_field / dt / h as f64).ceil() as usize;
        let blocks = (0..=n_seg)
            .into_par_iter()
            .map(|k| {
                let x = s.x_at((k * h) as f64 * dt).min(s.x_field_max);
                let m = EffectiveModel::new(p, x, s.gamma_profile.eval(x))?
                    .with_mode(opts.mode)
                    .with_xi(opts.xi_convention);
                BlockModel::new(m, dt, h, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schedule: s.clone(),
            params: p.clone(),
            opts: opts.clone(),
            half: h,
            t_field,
            n_seg,
            blocks,
        })
    }

    /// One sweep with the given symmetry-breaking field, phase and seed.
    pub fn run(&self, zeta: f64, phi: f64, seed: u64) -> Result<Synthesis> {
        let s = &self.schedule;
        let p = &self.params;
        let dt = self.opts.dt;
        let z_eff = zeta * phi.cos();
        let alphas = self
            .blocks
            .iter()
            .map(|b| Ok(steady_state_x(p, b.model.x(), z_eff)?.alpha))
            .collect::<Result<Vec<_>>>()?;
        let mut times = Vec::new();
        let mut report = SynthReport::default();
        run_field(
            |k| WindowSpec {
                block: &self.blocks[k],
                alpha: alphas[k],
            },
            self.n_seg,
            self.half,
            dt,
            self.t_field,
            p,
            seed,
            &mut times,
            &mut report,
        )?;
        let t_cross = s.time_of(1.0).unwrap_or(f64::INFINITY);
        self.tail(z_eff, seed, t_cross, &mut times)?;
        let mut trace = to_trace(times, s.duration)?;
        report.clicks = trace.len();
        trace.ramp = Some(s.ramp());
        trace.truth = Some(TraceTruth {
            zeta,
            phi,
            seed,
            t_cross,
        });
        Ok(Synthesis { trace, report })
    }

    fn tail(&self, z_eff: f64, seed: u64, t_cross: f64, times: &mut Vec<f64>) -> Result<()> {
        let s = &self.schedule;
        let p = &self.params;
        let (t0, t1) = (self.t_field, s.duration);
        if !(t1 > t0) {
            return Ok(());
        }
        // |α|² on a coarse grid, interpolated linearly.
        let n_nodes = 256usize;
        let nodes: Vec<f64> = (0..=n_nodes)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / n_nodes as f64;
                steady_state_x(p, s.x_at(t), z_eff).map(|st| st.photon_number())
            })
            .collect::<Result<_>>()?;
        let k_click = p.click_rate_per_photon();
        let dt = self.opts.dt;
        let mut th = Thinner::new(rng_for(seed, STREAM_TAIL));
        let n_steps = ((t1 - t0) / dt).ceil() as usize;
        for i in 0..n_steps {
            let ta = t0 + i as f64 * dt;
            let step = dt.min(t1 - ta);
            let tm = ta + 0.5 * step;
            let u = (tm - t0) / (t1 - t0) * n_nodes as f64;
            let iu = (u.floor() as usize).min(n_nodes - 1);
            let f = u - iu as f64;
            let mut n = nodes[iu] * (1.0 - f) + nodes[iu + 1] * f;
            if let TailModel::Ramp {
                n_peak,
                rise_s,
                cap,
            } = s.tail
            {
                if tm > t_cross {
                    n += (n_peak * (tm - t_cross) / rise_s).min(cap * n_peak);
                }
            }
            th.step(ta, step, k_click * n + p.r_b, times);
        }
        Ok(())
    }
}

/// Full sweep for a single schedule.
pub fn synthesize_sweep(
    s: &SweepSchedule,
    p: &PhysicalParams,
    opts: &SynthOptions,
) -> Result<Synthesis> {
    SweepPlan::new(s, p, opts)?.run(s.zeta, s.phi, s.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn thinner_mean() {
        let mut th = Thinner::new(rng_for(1, 0));
        let mut out = Vec::new();
        for i in 0..100_000 {
            th.step(i as f64 * 1e-6, 1e-6, 5e4, &mut out);
        }
        let n = out.len() as f64;
        assert!((n - 5000.0).abs() < 4.0 * 5000f64.sqrt(), "{n}");
        assert!(out.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn empirical_gamma_vanishes_at_one() {
        let c = [1.0, 0.5, 1.0, 2.0, 1.5, -1.0];
        assert_eq!(empirical_gamma(&c, 1.0), 0.0);
        assert!(empirical_gamma(&c, 0.5) > 0.0);
    }

    #[test]
    fn schedule_time_of_inverts_x() {
        let s = SweepSchedule {
            atom_loss: 0.02,
            ..Default::default()
        };
        let t = s.time_of(1.0).unwrap();
        assert!((s.x_at(t) - 1.0).abs() < 1e-12);
    }
}
