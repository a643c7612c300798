// SPDX-License-Identifier: Apache-2.0

//! Synthesis, analysis, fit and exponent extraction over many sweeps.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    analyze_run, average_runs, AnalysisOptions, G2Estimate, NbarAccumulator, NbarPoint, RunAnalysis,
};
use crate::error::{Error, Result};
use crate::fitpipe::{
    density_fluctuations_from_nbar, fit_empirical_gamma, fit_gamma_zeta, fit_power_law, BinData,
    EmpiricalGammaFit, FitOptions, FitResult, FluctuationPoint, PowerLawFit,
};
use crate::params::PhysicalParams;
use crate::synth::{derive_seed, rng_for, SweepPlan, SweepSchedule, SynthOptions};

const STREAM_PHASE: u64 = 5;

const PHYSICAL_KEYS: [&str; 8] = [
    "N",
    "omega_hz",
    "omega0_hz",
    "kappa_hz",
    "eta",
    "r_b",
    "T_nK",
    "coupling_convention",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub params: PhysicalParams,
    pub synth: SynthOptions,
    pub sweep: SweepSchedule,
    pub analysis: AnalysisOptions,
    pub fit: FitOptions,
    pub runs: usize,
    pub seed: u64,
    /// Exponent fit range in x.
    pub exponent_range: [f64; 2],
    /// Draw a uniform φ per run; otherwise every run uses `sweep.phi`.
    pub random_phase: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            params: PhysicalParams::reference(),
            synth: SynthOptions::default(),
            sweep: SweepSchedule {
                zeta: 60.0,
                ..SweepSchedule::default()
            },
            analysis: AnalysisOptions::default(),
            fit: FitOptions::default(),
            runs: 372,
            seed: 1,
            exponent_range: [0.9, 0.99],
            random_phase: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.sweep.validate()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        let [a, b] = self.exponent_range;
        if !(a < b && b < 1.0) {
            return Err(Error::Config(format!("bad exponent range {a}:{b}")));
        }
        Ok(())
    }

    /// Parses a config file: physical keys (`N`, `omega_hz`, ...) at top
    /// level next to `runs`, `seed`, `exponent_range`, `random_phase`, and
    /// optional `[synth]`, `[sweep]`, `[analysis]`, `[fit]` tables. Unknown
    /// keys are rejected.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let table: toml::Table = src
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut phys = toml::Table::new();
        let mut rest = toml::Table::new();
        for (k, v) in table {
            if k == "params" {
                return Err(Error::Config("unknown key `params`".into()));
            }
            if PHYSICAL_KEYS.contains(&k.as_str()) {
                phys.insert(k, v);
            } else {
                rest.insert(k, v);
            }
        }
        let mut cfg: PipelineConfig = rest
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        cfg.params = PhysicalParams::from_toml_str(&phys.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inverse of `from_toml_str`.
    pub fn to_toml_string(&self) -> Result<String> {
        let mut t = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        t.remove("params");
        Ok(format!("{}{}", self.params.to_toml_string(), t))
    }

    /// Seed and phase of run `i`.
    pub fn run_setup(&self, i: usize) -> (u64, f64) {
        let seed = derive_seed(self.seed, i as u64);
        let phi = if self.random_phase {
            rng_for(seed, STREAM_PHASE).random::<f64>() * TAU
        } else {
            self.sweep.phi
        };
        (seed, phi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub phi: f64,
    pub clicks: usize,
    /// Detected transition time; None if the run was rejected.
    pub t_cr: Option<f64>,
    pub pair_shortfall: f64,
    pub max_violation: f64,
}

/// Everything one sweep contributes to the averages.
pub struct RunOutput {
    pub record: RunRecord,
    pub analysis: Option<RunAnalysis>,
}

/// Synthesizes and analyzes run `i`. Runs without a detectable transition are
/// recorded and skipped.
pub fn simulate_run(plan: &SweepPlan, cfg: &PipelineConfig, i: usize) -> Result<RunOutput> {
    let (seed, phi) = cfg.run_setup(i);
    let syn = plan.run(cfg.sweep.zeta, phi, seed)?;
    let ramp = syn
        .trace
        .ramp
        .ok_or_else(|| Error::Data("trace lacks ramp".into()))?;
    let analysis = match analyze_run(&syn.trace, &ramp, &cfg.analysis) {
        Ok(a) => Some(a),
        Err(Error::Data(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(RunOutput {
        record: RunRecord {
            index: i,
            seed,
            phi,
            clicks: syn.report.clicks,
            t_cr: analysis.as_ref().map(|a| a.axis.t_cr),
            pair_shortfall: syn.report.pair_shortfall,
            max_violation: syn.report.max_violation,
        },
        analysis,
    })
}

/// Run-averaged products, merged in run order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Averages {
    pub runs: Vec<RunRecord>,
    pub g2: Vec<Option<G2Estimate>>,
    pub nbar: Vec<NbarPoint>,
}

pub fn simulate_runs(cfg: &PipelineConfig) -> Result<Averages> {
    cfg.validate()?;
    let plan = SweepPlan::new(&cfg.sweep, &cfg.params, &cfg.synth)?;
    let bins = cfg.analysis.coupling_bins;
    // Per-run estimates are reduced per bin as soon as a run is done so that
    // traces and subtrace curves do not accumulate.
    let outs = (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            simulate_run(&plan, cfg, i).map(|o| {
                let per_bin: Option<Vec<Option<G2Estimate>>> = o
                    .analysis
                    .as_ref()
                    .map(|a| a.by_bin.iter().map(|v| average_runs(v)).collect());
                (o.record, per_bin, o.analysis.map(|a| a.nbar))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut nbar = NbarAccumulator::new(cfg.analysis.nbar_bins());
    let mut per_bin: Vec<Vec<G2Estimate>> = vec![Vec::new(); bins.len()];
    let mut runs = Vec::with_capacity(outs.len());
    for (rec, est, nb) in outs {
        if let Some(est) = est {
            for (k, e) in est.into_iter().enumerate() {
                if let Some(e) = e {
                    per_bin[k].push(e);
                }
            }
        }
        if let Some(nb) = nb {
            nbar.merge(&nb);
        }
        runs.push(rec);
    }
    if runs.iter().all(|r| r.t_cr.is_none()) {
        return Err(Error::Data("no run showed a transition".into()));
    }
    Ok(Averages {
        runs,
        g2: per_bin.iter().map(|v| average_runs(v)).collect(),
        nbar: nbar.points(&cfg.params),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub fit: FitResult,
    pub gamma_fit: Option<EmpiricalGammaFit>,
    pub fluctuations: Vec<FluctuationPoint>,
    pub exponent: Option<PowerLawFit>,
    pub exponent_error: Option<String>,
}

/// g² bins as fit input.
pub fn fit_inputs(g2: &[Option<G2Estimate>], cfg: &PipelineConfig) -> Vec<BinData> {
    g2.iter()
        .flatten()
        .filter(|e| e.x.is_finite())
        .map(|e| BinData::from_estimate(e, cfg.analysis.max_lag, cfg.analysis.g2_bin))
        .collect()
}

/// Fit options with the model bin tied to the estimator bin.
pub fn fit_options(cfg: &PipelineConfig) -> FitOptions {
    FitOptions {
        model: crate::fitpipe::ModelOptions {
            bin: cfg.analysis.g2_bin,
            ..cfg.fit.model.clone()
        },
        ..cfg.fit.clone()
    }
}

/// γ per bin and global ζ, then the empirical γ(x) over the bins that entered
/// the ζ estimate and have a well-defined γ.
pub fn fit_bins(
    data: &[BinData],
    cfg: &PipelineConfig,
) -> Result<(FitResult, Option<EmpiricalGammaFit>)> {
    let fit = fit_gamma_zeta(data, &cfg.params, &fit_options(cfg))?;
    let pts: Vec<&_> = fit
        .bins
        .iter()
        .filter(|b| b.zeta_bin && !b.degenerate)
        .collect();
    let gamma_fit = fit_empirical_gamma(
        &pts.iter().map(|b| b.x).collect::<Vec<_>>(),
        &pts.iter().map(|b| b.gamma).collect::<Vec<_>>(),
        &pts.iter().map(|b| b.gamma_err).collect::<Vec<_>>(),
    )
    .ok();
    Ok((fit, gamma_fit))
}

/// Density fluctuations from n̄ and the exponent over `range`.
pub fn exponent_from_nbar(
    nbar: &[NbarPoint],
    zeta: f64,
    zeta_err: f64,
    range: [f64; 2],
    cfg: &PipelineConfig,
) -> Result<(
    Vec<FluctuationPoint>,
    std::result::Result<PowerLawFit, String>,
)> {
    let fl =
        density_fluctuations_from_nbar(nbar, zeta, zeta_err, &cfg.params, cfg.fit.model.n_phi)?;
    let exp = fit_power_law(
        &fl.iter().map(|f| f.x).collect::<Vec<_>>(),
        &fl.iter().map(|f| f.variance).collect::<Vec<_>>(),
        range[0],
        range[1],
    )
    .map_err(|e| e.to_string());
    Ok((fl, exp))
}

/// Fit, empirical γ(x), density fluctuations and exponent from averages.
pub fn fit_averages(avg: &Averages, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let data = fit_inputs(&avg.g2, cfg);
    let (fit, gamma_fit) = fit_bins(&data, cfg)?;
    let (fluctuations, exp) =
        exponent_from_nbar(&avg.nbar, fit.zeta, fit.zeta_err, cfg.exponent_range, cfg)?;
    let (exponent, exponent_error) = match exp {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e)),
    };
    Ok(PipelineReport {
        fit,
        gamma_fit,
        fluctuations,
        exponent,
        exponent_error,
    })
}
