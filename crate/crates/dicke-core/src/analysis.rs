// SPDX-License-Identifier: Apache-2.0

//! Click-trace analysis: binning, transition detection, the time to coupling
//! map, photon numbers, subtrace g² estimation and averaging over runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::trace::{ClickTrace, RampInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub bin_width: f64,
    pub start: f64,
    pub counts: Vec<u32>,
}

impl BinnedCounts {
    /// Full bins of width `bin_width` covering [t0, t1) of the trace.
    pub fn from_trace(trace: &ClickTrace, bin_width: f64, t0: f64, t1: f64) -> Result<Self> {
        if !(bin_width > 0.0) {
            return Err(Error::Domain("bin width must be positive".into()));
        }
        let t1 = t1.min(trace.duration());
        let n = ((t1 - t0) / bin_width).floor().max(0.0) as usize;
        let mut counts = vec![0u32; n];
        let a = (t0 * 1e9).round() as u64;
        let lo = trace.timestamps.partition_point(|&t| t < a);
        let w_ns = bin_width * 1e9;
        for &t in &trace.timestamps[lo..] {
            let i = ((t - a) as f64 / w_ns).floor() as usize;
            if i >= n {
                break;
            }
            counts[i] += 1;
        }
        Ok(Self {
            bin_width,
            start: t0,
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.start + i as f64 * self.bin_width
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionOptions {
    pub bin_width: f64,
    /// Rate threshold (1/s).
    pub threshold: f64,
    /// t_cr lies this far before the first super-threshold bin.
    pub offset: f64,
}

impl Default for TransitionOptions {
    fn default() -> Self {
        Self {
            bin_width: 100e-6,
            threshold: 18e6,
            offset: 1e-3,
        }
    }
}

/// Critical time: start of the first bin whose rate exceeds the threshold,
/// minus the offset.
pub fn detect_transition(trace: &ClickTrace, opts: &TransitionOptions) -> Result<f64> {
    let b = BinnedCounts::from_trace(trace, opts.bin_width, 0.0, trace.duration())?;
    let limit = opts.threshold * opts.bin_width;
    b.counts
        .iter()
        .position(|&c| c as f64 > limit)
        .map(|i| b.bin_start(i) - opts.offset)
        .ok_or_else(|| Error::Data("no transition found".into()))
}

/// Map from recording time to relative coupling, normalized so x(t_cr) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingAxis {
    pub ramp: RampInfo,
    pub t_cr: f64,
    /// Fractional linear atom loss over the sweep; 0 disables the correction.
    pub atom_loss: f64,
}

impl CouplingAxis {
    pub fn new(ramp: RampInfo, t_cr: f64, atom_loss: f64) -> Self {
        Self {
            ramp,
            t_cr,
            atom_loss,
        }
    }

    pub fn x(&self, t: f64) -> f64 {
        time_to_coupling(t, self.t_cr, &self.ramp, self.atom_loss)
    }

    /// Slope of the linear part, x_lin(t) = x0 + r·t.
    pub fn constants(&self) -> (f64, f64) {
        let r = (self.ramp.x_end - self.ramp.x_start) / self.ramp.duration_s;
        let d = self.ramp.x_start + r * self.t_cr;
        (self.ramp.x_start / d, r / d)
    }

    /// Time at which x reaches `x`, searched on [0, t_cr].
    pub fn time_of(&self, x: f64) -> f64 {
        if self.x(0.0) >= x {
            return 0.0;
        }
        crate::optim::bracketed_root(|t| self.x(t) - x, 0.0, self.t_cr, 1e-15, 200)
            .unwrap_or(self.t_cr)
    }
}

pub fn time_to_coupling(t: f64, t_cr: f64, ramp: &RampInfo, atom_loss: f64) -> f64 {
    let r = (ramp.x_end - ramp.x_start) / ramp.duration_s;
    let lin = (ramp.x_start + r * t) / (ramp.x_start + r * t_cr);
    if atom_loss == 0.0 {
        lin
    } else {
        let n = |s: f64| 1.0 - atom_loss * s / ramp.duration_s;
        lin * n(t) / n(t_cr)
    }
}

/// n̄ = (r − r_b)/(2κη), clamped at zero; the flag reports clamping.
pub fn photon_number_from_rate(rate: f64, p: &PhysicalParams) -> (f64, bool) {
    let n = (rate - p.r_b) / p.click_rate_per_photon();
    if n < 0.0 {
        (0.0, true)
    } else {
        (n, false)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubtraceOptions {
    pub min_length: f64,
    pub max_length: f64,
    pub ratio: f64,
}

impl Default for SubtraceOptions {
    fn default() -> Self {
        Self {
            min_length: 4e-3,
            max_length: 50e-3,
            ratio: 1.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subtrace {
    pub t_start: f64,
    pub t_end: f64,
    pub x_mean: f64,
}

/// Partition [0, t_cr) into subtraces whose length grows geometrically away
/// from t_cr, from `min_length` up to `max_length`. A remainder shorter than
/// the next length is merged into its neighbour.
pub fn split_subtraces(axis: &CouplingAxis, opts: &SubtraceOptions) -> Vec<Subtrace> {
    let t_cr = axis.t_cr;
    if !(t_cr > 0.0) {
        return Vec::new();
    }
    let mut edges = vec![t_cr];
    let mut len = opts.min_length;
    let mut end = t_cr;
    loop {
        let start = end - len;
        let next = (len * opts.ratio).min(opts.max_length);
        // A remainder shorter than the next length joins the earliest piece.
        if start < next {
            break;
        }
        edges.push(start);
        end = start;
        len = next;
    }
    edges.push(0.0);
    edges.reverse();
    edges
        .windows(2)
        .map(|w| {
            // x is affine in t without loss and quadratic with it; Simpson
            // is exact for both.
            let xm = (axis.x(w[0]) + 4.0 * axis.x(0.5 * (w[0] + w[1])) + axis.x(w[1])) / 6.0;
            Subtrace {
                t_start: w[0],
                t_end: w[1],
                x_mean: xm,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    /// Lags k·bin (s).
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    pub err: Vec<f64>,
    /// Inverse of the coherent-light variance of each value; used as the
    /// averaging weight.
    pub weight: Vec<f64>,
    pub x: f64,
    pub runs: usize,
    /// Mean counts per bin.
    pub mean_count: f64,
    pub bins: usize,
    /// Coupling ranges of the subtraces behind the estimate.
    #[serde(default)]
    pub segments: Vec<Segment>,
}

/// A subtrace seen as an interval of x, with its length in time bins and the
/// number of runs that produced the same interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub bins: usize,
    pub count: usize,
}

/// Sorted union of segment lists with identical intervals merged.
pub fn merge_segments<'a>(lists: impl IntoIterator<Item = &'a [Segment]>) -> Vec<Segment> {
    let mut all: Vec<Segment> = lists.into_iter().flatten().copied().collect();
    all.sort_by(|a, b| {
        a.x0.total_cmp(&b.x0)
            .then(a.x1.total_cmp(&b.x1))
            .then(a.bins.cmp(&b.bins))
    });
    let mut out: Vec<Segment> = Vec::with_capacity(all.len());
    for s in all {
        match out.last_mut() {
            Some(l)
                if l.bins == s.bins
                    && (l.x0 - s.x0).abs() < 1e-12
                    && (l.x1 - s.x1).abs() < 1e-12 =>
            {
                l.count += s.count
            }
            _ => out.push(s),
        }
    }
    out
}

/// Coherent-light variance of a single bin product n_i·n_{i+k}.
fn null_product_variance(mu: f64, k: usize) -> f64 {
    if k == 0 {
        2.0 * mu * mu + 4.0 * mu * mu * mu
    } else {
        mu * mu + 2.0 * mu * mu * mu
    }
}

/// g²(k·bin) for k ≤ max_lag/bin from counts in full bins of [t0, t1).
pub fn g2_estimator(
    trace: &ClickTrace,
    t0: f64,
    t1: f64,
    bin: f64,
    max_lag: f64,
) -> Result<G2Estimate> {
    let b = BinnedCounts::from_trace(trace, bin, t0, t1)?;
    g2_from_counts(&b.counts, bin, max_lag)
}

pub fn g2_from_counts(counts: &[u32], bin: f64, max_lag: f64) -> Result<G2Estimate> {
    let m = counts.len();
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total < 2 {
        return Err(Error::Data("g2 needs at least 2 clicks".into()));
    }
    let kmax = ((max_lag / bin).round() as usize).min(m.saturating_sub(1));
    let occ: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, c as f64))
        .collect();
    let mut s = vec![0.0; kmax + 1];
    let mut q = vec![0.0; kmax + 1];
    for (a, &(i, ni)) in occ.iter().enumerate() {
        let p0 = ni * (ni - 1.0);
        s[0] += p0;
        q[0] += p0 * p0;
        for &(j, nj) in &occ[a + 1..] {
            let k = j - i;
            if k > kmax {
                break;
            }
            let pr = ni * nj;
            s[k] += pr;
            q[k] += pr * pr;
        }
    }
    let mu = total as f64 / m as f64;
    let mu2 = mu * mu;
    let mut g2 = Vec::with_capacity(kmax + 1);
    let mut err = Vec::with_capacity(kmax + 1);
    let mut weight = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let mk = (m - k) as f64;
        let mean = s[k] / mk;
        let var = (q[k] / mk - mean * mean).max(0.0);
        let null = null_product_variance(mu, k);
        g2.push(mean / mu2);
        err.push((var.max(null) / (mk * mu2 * mu2)).sqrt());
        weight.push(mk * mu2 * mu2 / null);
    }
    Ok(G2Estimate {
        tau: (0..=kmax).map(|k| k as f64 * bin).collect(),
        g2,
        err,
        weight,
        x: f64::NAN,
        runs: 1,
        mean_count: mu,
        bins: m,
        segments: Vec::new(),
    })
}

/// Weighted combination of estimates on a common lag grid.
///
/// Weights are the coherent-light inverse variances. They depend only on the
/// mean count, so the average is the exposure-pooled estimator and does not
/// favour subtraces that happen to fluctuate little.
pub fn average_runs(estimates: &[G2Estimate]) -> Option<G2Estimate> {
    let first = estimates.first()?;
    let n = estimates.iter().map(|e| e.g2.len()).min()?;
    let mut g2 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for k in 0..n {
        let (mut sw, mut swg, mut sw2v) = (0.0, 0.0, 0.0);
        for e in estimates {
            let w = e.weight[k];
            sw += w;
            swg += w * e.g2[k];
            sw2v += w * w * e.err[k] * e.err[k];
        }
        if sw > 0.0 {
            g2[k] = swg / sw;
            err[k] = sw2v.sqrt() / sw;
        }
        weight[k] = sw;
    }
    let w0: f64 = estimates.iter().map(|e| e.bins as f64).sum();
    let x = if estimates.iter().all(|e| e.x.is_finite()) {
        estimates.iter().map(|e| e.x * e.bins as f64).sum::<f64>() / w0
    } else {
        f64::NAN
    };
    Some(G2Estimate {
        tau: first.tau[..n].to_vec(),
        g2,
        err,
        weight,
        x,
        runs: estimates.iter().map(|e| e.runs).sum(),
        mean_count: estimates
            .iter()
            .map(|e| e.mean_count * e.bins as f64)
            .sum::<f64>()
            / w0,
        bins: w0 as usize,
        segments: merge_segments(estimates.iter().map(|e| e.segments.as_slice())),
    })
}

/// Uniform coupling bins [lo + i·w, lo + (i+1)·w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingBins {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl Default for CouplingBins {
    fn default() -> Self {
        Self {
            lo: 0.55,
            hi: 0.99,
            width: 0.02,
        }
    }
}

impl CouplingBins {
    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.width - 1e-9).ceil().max(0.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        let i = ((x - self.lo) / self.width).floor() as usize;
        (i < self.len()).then_some(i)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width
    }
}

/// Mean photon number against coupling, accumulated over runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NbarAccumulator {
    pub bins: CouplingBins,
    pub counts: Vec<f64>,
    pub exposure: Vec<f64>,
    /// Per-run rate sums for the scatter estimate.
    pub rate_sum: Vec<f64>,
    pub rate_sq: Vec<f64>,
    pub runs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbarPoint {
    pub x: f64,
    pub rate: f64,
    pub nbar: f64,
    pub nbar_err: f64,
    pub clamped: bool,
}

impl NbarAccumulator {
    pub fn new(bins: CouplingBins) -> Self {
        let n = bins.len();
        Self {
            bins,
            counts: vec![0.0; n],
            exposure: vec![0.0; n],
            rate_sum: vec![0.0; n],
            rate_sq: vec![0.0; n],
            runs: vec![0; n],
        }
    }

    /// Add one run using `slice` long time slices before t_cr.
    pub fn add_run(&mut self, trace: &ClickTrace, axis: &CouplingAxis, slice: f64) -> Result<()> {
        let b = BinnedCounts::from_trace(trace, slice, 0.0, axis.t_cr)?;
        let n = self.bins.len();
        let mut c = vec![0.0; n];
        let mut e = vec![0.0; n];
        for (i, &cnt) in b.counts.iter().enumerate() {
            let tm = b.bin_start(i) + 0.5 * slice;
            if let Some(k) = self.bins.index(axis.x(tm)) {
                c[k] += cnt as f64;
                e[k] += slice;
            }
        }
        for k in 0..n {
            if e[k] > 0.0 {
                self.counts[k] += c[k];
                self.exposure[k] += e[k];
                let r = c[k] / e[k];
                self.rate_sum[k] += r;
                self.rate_sq[k] += r * r;
                self.runs[k] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &NbarAccumulator) {
        for k in 0..self.counts.len().min(other.counts.len()) {
            self.counts[k] += other.counts[k];
            self.exposure[k] += other.exposure[k];
            self.rate_sum[k] += other.rate_sum[k];
            self.rate_sq[k] += other.rate_sq[k];
            self.runs[k] += other.runs[k];
        }
    }

    pub fn points(&self, p: &PhysicalParams) -> Vec<NbarPoint> {
        let kc = p.click_rate_per_photon();
        (0..self.counts.len())
            .filter(|&k| self.exposure[k] > 0.0)
            .map(|k| {
                let rate = self.counts[k] / self.exposure[k];
                let poisson = self.counts[k].max(1.0).sqrt() / self.exposure[k];
                let nr = self.runs[k] as f64;
                let rate_err = if self.runs[k] >= 2 {
                    let mean = self.rate_sum[k] / nr;
                    let var = (self.rate_sq[k] / nr - mean * mean).max(0.0) * nr / (nr - 1.0);
                    (var / nr).sqrt().max(poisson)
                } else {
                    poisson
                };
                let (nbar, clamped) = photon_number_from_rate(rate, p);
                NbarPoint {
                    x: self.bins.center(k),
                    rate,
                    nbar,
                    nbar_err: rate_err / kc,
                    clamped,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub transition: TransitionOptions,
    pub subtraces: SubtraceOptions,
    pub coupling_bins: CouplingBins,
    pub g2_bin: f64,
    pub max_lag: f64,
    pub atom_loss: f64,
    /// x-bin width of the photon-number curve.
    pub nbar_bin: f64,
    pub nbar_slice: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            transition: TransitionOptions::default(),
            subtraces: SubtraceOptions::default(),
            coupling_bins: CouplingBins::default(),
            g2_bin: 2e-6,
            max_lag: 1e-3,
            atom_loss: 0.0,
            nbar_bin: 0.005,
            nbar_slice: 100e-6,
        }
    }
}

impl AnalysisOptions {
    pub fn nbar_bins(&self) -> CouplingBins {
        CouplingBins {
            lo: self.coupling_bins.lo,
            hi: self.coupling_bins.hi,
            width: self.nbar_bin,
        }
    }
}

/// Analysis products of one sweep.
#[derive(Debug, Clone)]
pub struct RunAnalysis {
    pub axis: CouplingAxis,
    pub subtraces: Vec<Subtrace>,
    /// Per coupling bin, the subtrace estimates that fall into it.
    pub by_bin: Vec<Vec<G2Estimate>>,
    pub nbar: NbarAccumulator,
}

pub fn analyze_run(
    trace: &ClickTrace,
    ramp: &RampInfo,
    opts: &AnalysisOptions,
) -> Result<RunAnalysis> {
    let t_cr = detect_transition(trace, &opts.transition)?;
    if !(t_cr > 0.0) {
        return Err(Error::Data(format!(
            "transition at t_cr={t_cr} leaves no data"
        )));
    }
    let axis = CouplingAxis::new(*ramp, t_cr, opts.atom_loss);
    let subtraces = split_subtraces(&axis, &opts.subtraces);
    let mut by_bin = vec![Vec::new(); opts.coupling_bins.len()];
    for st in &subtraces {
        let Some(k) = opts.coupling_bins.index(st.x_mean) else {
            continue;
        };
        match g2_estimator(trace, st.t_start, st.t_end, opts.g2_bin, opts.max_lag) {
            Ok(mut e) => {
                e.x = st.x_mean;
                e.segments = vec![Segment {
                    x0: axis.x(st.t_start),
                    x1: axis.x(st.t_end),
                    bins: e.bins,
                    count: 1,
                }];
                by_bin[k].push(e);
            }
            Err(Error::Data(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut nbar = NbarAccumulator::new(opts.nbar_bins());
    nbar.add_run(trace, &axis, opts.nbar_slice)?;
    Ok(RunAnalysis {
        axis,
        subtraces,
        by_bin,
        nbar,
    })
}

/// Run-averaged g² per coupling bin (None where no data fell in a bin).
pub fn combine_runs(runs: &[RunAnalysis], bins: &CouplingBins) -> Vec<Option<G2Estimate>> {
    (0..bins.len())
        .map(|k| {
            let all: Vec<G2Estimate> = runs
                .iter()
                .flat_map(|r| r.by_bin[k].iter().cloned())
                .collect();
            let runs_here = runs.iter().filter(|r| !r.by_bin[k].is_empty()).count();
            average_runs(&all).map(|mut e| {
                e.runs = runs_here;
                e
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photon_number_examples() {
        let p = PhysicalParams::reference();
        assert_eq!(photon_number_from_rate(p.r_b, &p), (0.0, false));
        let (n, c) = photon_number_from_rate(1e5, &p);
        assert!((n - 0.12689).abs() < 1e-4 && !c);
        assert!(photon_number_from_rate(10.0, &p).1);
    }

    #[test]
    fn transition_rule_arithmetic() {
        // 2000 clicks in the bin starting at 0.7 s
        let ts: Vec<u64> = (0..2000).map(|i| 700_000_000 + i * 40).collect();
        let t = ClickTrace::new(ts, 800_000_000).unwrap();
        let t_cr = detect_transition(&t, &TransitionOptions::default()).unwrap();
        assert!((t_cr - 0.699).abs() < 1e-12);
    }

    #[test]
    fn coupling_axis_endpoints() {
        let ramp = RampInfo::default();
        let t_cr = ramp.nominal_crossing();
        assert!((time_to_coupling(t_cr, t_cr, &ramp, 0.0) - 1.0).abs() < 1e-15);
        assert!((time_to_coupling(0.0, t_cr, &ramp, 0.0) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn bins_index() {
        let b = CouplingBins::default();
        assert_eq!(b.len(), 22);
        assert_eq!(b.index(0.55), Some(0));
        assert_eq!(b.index(0.989), Some(21));
        assert_eq!(b.index(0.99), None);
    }
}
