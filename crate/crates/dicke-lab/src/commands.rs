// SPDX-License-Identifier: Apache-2.0

//! Subcommand bodies.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use dicke_core::analysis::{
    analyze_run, average_runs, G2Estimate, NbarAccumulator, NbarPoint, Segment,
};
use dicke_core::closedsys::ground_state_fluctuations;
use dicke_core::fitpipe::{BinData, EmpiricalGammaFit, FitResult, FluctuationPoint, PowerLawFit};
use dicke_core::meanfield::steady_state_x;
use dicke_core::params::soft_mode_frequency;
use dicke_core::pipeline::{
    exponent_from_nbar, fit_bins, fit_inputs, simulate_runs, Averages, PipelineConfig, RunRecord,
};
use dicke_core::spectral::{correlation_curve, EffectiveModel};
use dicke_core::synth::SweepPlan;
use dicke_core::trace::ClickTrace;

use crate::error::{LabError, LabResult};
use crate::output::{Csv, OutputDir};
use crate::{thread_count, Command, Common};

pub fn execute(cmd: Command, argv: &[String]) -> LabResult<()> {
    let parallel = match &cmd {
        Command::Plot { .. } => None,
        Command::Meanfield { common, .. }
        | Command::Spectrum { common, .. }
        | Command::Closed { common, .. }
        | Command::Synth { common, .. }
        | Command::Analyze { common, .. }
        | Command::Fit { common, .. }
        | Command::Exponent { common, .. }
        | Command::Pipeline { common, .. } => common.parallel,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(parallel)?)
        .build()
        .map_err(|e| LabError::usage(e.to_string()))?;
    pool.install(|| dispatch(cmd, argv))
}

fn dispatch(cmd: Command, argv: &[String]) -> LabResult<()> {
    match cmd {
        Command::Meanfield {
            sweep,
            zeta,
            common,
        } => meanfield(&sweep, zeta, &common, argv),
        Command::Spectrum {
            x,
            gamma_hz,
            zeta,
            nb,
            tau_max,
            points,
            common,
        } => spectrum(x, gamma_hz, zeta, nb, tau_max, points, &common, argv),
        Command::Closed { sweep, common } => closed(&sweep, &common, argv),
        Command::Synth {
            seed,
            runs,
            format,
            common,
        } => synth(seed, runs, &format, &common, argv),
        Command::Analyze { trace, common } => analyze(&trace, &common, argv),
        Command::Fit { g2dir, common } => fit(&g2dir, &common, argv),
        Command::Exponent {
            input,
            zeta,
            zeta_err,
            range,
            common,
        } => exponent(&input, zeta, zeta_err, range.as_deref(), &common, argv),
        Command::Pipeline { seed, runs, common } => pipeline(seed, runs, &common, argv),
        Command::Plot { input, style, out } => {
            let csv = Csv::read(&input)?;
            let title = input
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            crate::output::write_atomic(&out, crate::plot::render(&csv, &title, style)?.as_bytes())
        }
    }
}

pub fn load_config(path: Option<&Path>) -> LabResult<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let src = fs::read_to_string(p)
                .map_err(|e| LabError::data(format!("{}: {e}", p.display())))?;
            PipelineConfig::from_toml_str(&src)
                .map_err(|e| LabError::from(e).context(&p.display().to_string()))
        }
    }
}

/// `x0:x1:n` with n ≥ 1.
pub fn parse_sweep(s: &str) -> LabResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || LabError::usage(format!("sweep must look like x0:x1:n, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect())
}

/// `a:b` with a < b.
pub fn parse_range(s: &str) -> LabResult<[f64; 2]> {
    let bad = || LabError::usage(format!("range must look like a:b with a < b, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a < b) {
        return Err(bad());
    }
    Ok([a, b])
}

/// Where a single-file command writes: `--out` naming a file (with an
/// extension) or a directory, or stdout without `--out`.
fn single_target(common: &Common, default_name: &str) -> Option<(PathBuf, String)> {
    let out = common.out.as_ref()?;
    if out.extension().is_some() {
        let dir = out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let name = out.file_name().map(|n| n.to_string_lossy().into_owned())?;
        Some((dir.to_path_buf(), name))
    } else {
        Some((out.clone(), default_name.to_string()))
    }
}

fn emit_single(
    csv: &Csv,
    command: &str,
    default_name: &str,
    cfg: &PipelineConfig,
    common: &Common,
    argv: &[String],
) -> LabResult<()> {
    match single_target(common, default_name) {
        None => {
            print!("{}", csv.render());
            Ok(())
        }
        Some((dir, name)) => {
            let mut out = OutputDir::new(&dir, command, argv)?
                .with_config(cfg.to_toml_string()?)
                .with_plot(common.plot);
            out.write_csv(&name, csv)?;
            out.finish()?;
            Ok(())
        }
    }
}

fn meanfield(sweep: &str, zeta: f64, common: &Common, argv: &[String]) -> LabResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let p = &cfg.params;
    let mut csv = Csv::new(&[
        "x",
        "beta_over_N",
        "w_over_N",
        "re_alpha",
        "im_alpha",
        "photon_number",
    ])
    .meta("zeta", zeta);
    for x in parse_sweep(sweep)? {
        let s = steady_state_x(p, x, zeta)?;
        csv.push(vec![
            x,
            s.beta / p.n_atoms,
            s.w / p.n_atoms,
            s.alpha.re,
            s.alpha.im,
            s.photon_number(),
        ]);
    }
    emit_single(&csv, "meanfield", "meanfield.csv", &cfg, common, argv)
}

#[allow(clippy::too_many_arguments)]
fn spectrum(
    x: f64,
    gamma_hz: f64,
    zeta: f64,
    nb: Option<f64>,
    tau_max: f64,
    points: usize,
    common: &Common,
    argv: &[String],
) -> LabResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let p = &cfg.params;
    if points < 2 || !(tau_max > 0.0) {
        return Err(LabError::usage("need --points >= 2 and --tau-max > 0"));
    }
    if nb.is_some_and(|v| !(v >= 0.0)) {
        return Err(LabError::usage("--nb must be non-negative"));
    }
    let alpha = steady_state_x(p, x, zeta)?.alpha;
    let m = EffectiveModel::new(p, x, TAU * gamma_hz)?
        .with_mode(cfg.fit.model.mode)
        .with_xi(cfg.fit.model.xi_convention)
        .with_alpha(alpha)
        .with_background(nb.unwrap_or_else(|| p.background_photons()));
    let tau: Vec<f64> = (0..points)
        .map(|i| tau_max * i as f64 / (points - 1) as f64)
        .collect();
    let c = correlation_curve(&tau, &m)?;
    let omega_s = soft_mode_frequency(p, x)?;
    let mut csv = Csv::new(&["tau_s", "re_g1", "im_g1", "g2"])
        .meta("x", crate::output::fmt(x))
        .meta("photon_number", crate::output::fmt(c.photon_number))
        .meta("coherent_fraction", crate::output::fmt(c.coherent_fraction))
        .meta("omega_s", crate::output::fmt(omega_s));
    for i in 0..points {
        csv.push(vec![c.tau[i], c.g1[i].re, c.g1[i].im, c.g2[i]]);
    }
    emit_single(&csv, "spectrum", "spectrum.csv", &cfg, common, argv)
}

fn closed(sweep: &str, common: &Common, argv: &[String]) -> LabResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let mut csv = Csv::new(&["x", "photon_variance", "quadrature_variance"]);
    for x in parse_sweep(sweep)? {
        let g = ground_state_fluctuations(&cfg.params, x)?;
        csv.push(vec![x, g.photon_variance, g.quadrature_variance]);
    }
    emit_single(&csv, "closed", "closed.csv", &cfg, common, argv)
}

fn require_out(common: &Common) -> LabResult<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| LabError::usage("--out DIR is required"))
}

fn runs_csv(records: &[RunRecord]) -> Csv {
    let mut csv = Csv::new(&[
        "index",
        "seed",
        "phi",
        "clicks",
        "t_cr",
        "pair_shortfall",
        "max_violation",
    ]);
    for r in records {
        csv.push_cells(vec![
            r.index.into(),
            r.seed.into(),
            r.phi.into(),
            r.clicks.into(),
            r.t_cr.unwrap_or(f64::NAN).into(),
            r.pair_shortfall.into(),
            r.max_violation.into(),
        ]);
    }
    csv
}

fn synth(
    seed: Option<u64>,
    runs: usize,
    format: &str,
    common: &Common,
    argv: &[String],
) -> LabResult<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if runs == 0 {
        return Err(LabError::usage("--runs must be >= 1"));
    }
    cfg.runs = runs;
    let ext = match format {
        "bin" => "clk",
        "csv" => "csv",
        _ => {
            return Err(LabError::usage(format!(
                "--format must be bin or csv, got `{format}`"
            )))
        }
    };
    cfg.validate()?;
    let dir = require_out(common)?;
    let plan = SweepPlan::new(&cfg.sweep, &cfg.params, &cfg.synth)?;
    let mut out = OutputDir::new(dir, "synth", argv)?
        .with_seed(cfg.seed)
        .with_config(cfg.to_toml_string()?)
        .with_plot(common.plot);
    let mut records = Vec::with_capacity(runs);
    // Chunks bound the number of traces held in memory at once.
    let chunk = rayon::current_num_threads().max(1);
    for start in (0..runs).step_by(chunk) {
        let done = (start..(start + chunk).min(runs))
            .into_par_iter()
            .map(|i| -> LabResult<_> {
                let (s, phi) = cfg.run_setup(i);
                let syn = plan.run(cfg.sweep.zeta, phi, s)?;
                let mut bytes = Vec::new();
                if ext == "clk" {
                    syn.trace.write_binary(&mut bytes)?;
                } else {
                    syn.trace.write_csv(&mut bytes)?;
                }
                Ok((i, s, phi, syn.report, bytes))
            })
            .collect::<LabResult<Vec<_>>>()?;
        for (i, s, phi, rep, bytes) in done {
            out.write(&format!("trace_{i:04}.{ext}"), &bytes)?;
            records.push(RunRecord {
                index: i,
                seed: s,
                phi,
                clicks: rep.clicks,
                t_cr: None,
                pair_shortfall: rep.pair_shortfall,
                max_violation: rep.max_violation,
            });
        }
    }
    out.write_csv("runs.csv", &runs_csv(&records))?;
    out.finish()?;
    Ok(())
}

/// File name of the g² curve of a coupling bin.
pub fn g2_file_name(center: f64) -> String {
    format!("g2_x{center:.3}.csv")
}

fn g2_csv(e: &G2Estimate) -> Csv {
    let mut csv = Csv::new(&["tau_s", "g2", "g2_err"])
        .meta("x", crate::output::fmt(e.x))
        .meta("runs", e.runs)
        .meta("bins", e.bins)
        .meta("mean_count", crate::output::fmt(e.mean_count));
    for s in &e.segments {
        csv.meta.push((
            "segment".into(),
            format!(
                "{},{},{},{}",
                crate::output::fmt(s.x0),
                crate::output::fmt(s.x1),
                s.bins,
                s.count
            ),
        ));
    }
    for k in 0..e.tau.len() {
        csv.push(vec![e.tau[k], e.g2[k], e.err[k]]);
    }
    csv
}

fn nbar_csv(points: &[NbarPoint]) -> Csv {
    let mut csv = Csv::new(&["x", "rate", "nbar", "nbar_err"]);
    for p in points {
        csv.push(vec![p.x, p.rate, p.nbar, p.nbar_err]);
    }
    csv
}

fn write_g2_files(
    out: &mut OutputDir,
    g2: &[Option<G2Estimate>],
    cfg: &PipelineConfig,
) -> LabResult<()> {
    let bins = cfg.analysis.coupling_bins;
    for (k, e) in g2.iter().enumerate() {
        if let Some(e) = e {
            out.write_csv(&g2_file_name(bins.center(k)), &g2_csv(e))?;
        }
    }
    Ok(())
}

fn analyze(traces: &[PathBuf], common: &Common, argv: &[String]) -> LabResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let dir = require_out(common)?;
    let results = traces
        .par_iter()
        .map(|path| -> LabResult<_> {
            let t = ClickTrace::read_path(path)
                .map_err(|e| LabError::from(e).context(&path.display().to_string()))?;
            let ramp = t.ramp.unwrap_or_else(|| cfg.sweep.ramp());
            let a = analyze_run(&t, &ramp, &cfg.analysis)
                .map_err(|e| LabError::from(e).context(&path.display().to_string()))?;
            Ok(a)
        })
        .collect::<LabResult<Vec<_>>>()?;
    let bins = cfg.analysis.coupling_bins;
    let mut nbar = NbarAccumulator::new(cfg.analysis.nbar_bins());
    let mut per_bin: Vec<Vec<G2Estimate>> = vec![Vec::new(); bins.len()];
    let mut transition = String::from("# x(t) = (a + b*t) with t in seconds from trace start\n");
    for (path, a) in traces.iter().zip(&results) {
        for (k, v) in a.by_bin.iter().enumerate() {
            if let Some(e) = average_runs(v) {
                per_bin[k].push(e);
            }
        }
        nbar.merge(&a.nbar);
        let (x0, slope) = a.axis.constants();
        transition.push_str(&format!(
            "trace={} t_cr={} a={} b={} atom_loss={}\n",
            path.display(),
            crate::output::fmt(a.axis.t_cr),
            crate::output::fmt(x0),
            crate::output::fmt(slope),
            crate::output::fmt(a.axis.atom_loss)
        ));
    }
    let g2: Vec<Option<G2Estimate>> = per_bin.iter().map(|v| average_runs(v)).collect();
    let mut out = OutputDir::new(dir, "analyze", argv)?
        .with_config(cfg.to_toml_string()?)
        .with_plot(common.plot);
    out.write_csv("nbar_vs_x.csv", &nbar_csv(&nbar.points(&cfg.params)))?;
    write_g2_files(&mut out, &g2, &cfg)?;
    out.write("transition.txt", transition.as_bytes())?;
    out.finish()?;
    Ok(())
}

/// Reads the g² curve files of a directory back into fit input.
pub fn read_g2_dir(dir: &Path, cfg: &PipelineConfig) -> LabResult<Vec<BinData>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| LabError::data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("g2_x") && n.ends_with(".csv"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(LabError::data(format!(
            "no g2_x*.csv files in {}",
            dir.display()
        )));
    }
    let mut data = Vec::with_capacity(names.len());
    for path in names {
        let ctx = path.display().to_string();
        let csv = Csv::read(&path)?;
        let x: f64 = csv
            .meta_values("x")
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| LabError::data(format!("{ctx}: missing `# x=` header")))?;
        let mut segments = Vec::new();
        for s in csv.meta_values("segment") {
            let f: Vec<&str> = s.split(',').collect();
            let bad = || LabError::data(format!("{ctx}: bad segment `{s}`"));
            if f.len() != 4 {
                return Err(bad());
            }
            segments.push(Segment {
                x0: f[0].parse().map_err(|_| bad())?,
                x1: f[1].parse().map_err(|_| bad())?,
                bins: f[2].parse().map_err(|_| bad())?,
                count: f[3].parse().map_err(|_| bad())?,
            });
        }
        let tau = csv.column("tau_s").map_err(|e| e.context(&ctx))?;
        let g2 = csv.column("g2").map_err(|e| e.context(&ctx))?;
        let err = csv.column("g2_err").map_err(|e| e.context(&ctx))?;
        let n = tau
            .iter()
            .take_while(|&&t| t <= cfg.analysis.max_lag * (1.0 + 1e-9))
            .count();
        data.push(BinData {
            x,
            g2: g2[..n].to_vec(),
            err: err[..n].to_vec(),
            segments,
        });
    }
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
struct FitBinJson {
    x: f64,
    gamma: f64,
    gamma_err: f64,
    gamma_hz: f64,
    gamma_hz_err: f64,
    chi2_red: f64,
    points: usize,
    zeta_bin: bool,
    degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
struct FitJson {
    zeta: f64,
    zeta_err: f64,
    chi2: f64,
    bins: Vec<FitBinJson>,
    gamma_fit: Option<EmpiricalGammaFit>,
}

fn write_fit(
    out: &mut OutputDir,
    name: &str,
    fit: &FitResult,
    gamma_fit: &Option<EmpiricalGammaFit>,
) -> LabResult<()> {
    let json = FitJson {
        zeta: fit.zeta,
        zeta_err: fit.zeta_err,
        chi2: fit.chi2,
        bins: fit
            .bins
            .iter()
            .map(|b| FitBinJson {
                x: b.x,
                gamma: b.gamma,
                gamma_err: b.gamma_err,
                gamma_hz: b.gamma / TAU,
                gamma_hz_err: b.gamma_err / TAU,
                chi2_red: b.chi2_red,
                points: b.points,
                zeta_bin: b.zeta_bin,
                degenerate: b.degenerate,
            })
            .collect(),
        gamma_fit: gamma_fit.clone(),
    };
    out.write_json(name, &json)?;
    let mut csv = Csv::new(&["x", "gamma_hz", "gamma_hz_err", "gamma_fit_hz", "chi2_red"]);
    for b in &fit.bins {
        csv.push(vec![
            b.x,
            b.gamma / TAU,
            b.gamma_err / TAU,
            gamma_fit.as_ref().map_or(f64::NAN, |g| g.eval(b.x) / TAU),
            b.chi2_red,
        ]);
    }
    out.write_csv("gamma_vs_x.csv", &csv)
}

fn fit(g2dir: &Path, common: &Common, argv: &[String]) -> LabResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let (dir, name) = single_target(common, "fit.json")
        .ok_or_else(|| LabError::usage("--out fit.json (or a directory) is required"))?;
    let data = read_g2_dir(g2dir, &cfg)?;
    let (fit, gamma_fit) = fit_bins(&data, &cfg)?;
    let mut out = OutputDir::new(&dir, "fit", argv)?
        .with_config(cfg.to_toml_string()?)
        .with_plot(common.plot);
    write_fit(&mut out, &name, &fit, &gamma_fit)?;
    out.finish()?;
    Ok(())
}

fn fluctuations_csv(points: &[FluctuationPoint]) -> Csv {
    let mut csv = Csv::new(&["x", "variance", "variance_err", "coherent"]);
    for f in points {
        csv.push(vec![f.x, f.variance, f.err, f.coherent]);
    }
    csv
}

fn exponent_report(exp: &Result<PowerLawFit, String>, zeta: f64, zeta_err: f64) -> String {
    match exp {
        Ok(e) => format!(
            "exponent={} err={} x_min={} x_max={} points={} excluded={} zeta={} zeta_err={}\n",
            crate::output::fmt(e.exponent),
            crate::output::fmt(e.err),
            crate::output::fmt(e.x_min),
            crate::output::fmt(e.x_max),
            e.points,
            e.excluded,
            crate::output::fmt(zeta),
            crate::output::fmt(zeta_err)
        ),
        Err(m) => format!("exponent=unavailable reason={m}\n"),
    }
}

fn exponent(
    input: &Path,
    zeta: f64,
    zeta_err: f64,
    range: Option<&str>,
    common: &Common,
    argv: &[String],
) -> LabResult<()> {
    let cfg = load_config(common.config.as_deref())?;
    let range = match range {
        Some(r) => parse_range(r)?,
        None => cfg.exponent_range,
    };
    if !(zeta >= 0.0 && zeta_err >= 0.0) {
        return Err(LabError::usage(
            "--zeta and --zeta-err must be non-negative",
        ));
    }
    let csv = Csv::read(input)?;
    let ctx = input.display().to_string();
    let x = csv.column("x").map_err(|e| e.context(&ctx))?;
    let nbar = csv.column("nbar").map_err(|e| e.context(&ctx))?;
    let nbar_err = csv.column("nbar_err").map_err(|e| e.context(&ctx))?;
    let rate = csv
        .column("rate")
        .unwrap_or_else(|_| vec![f64::NAN; x.len()]);
    let points: Vec<NbarPoint> = (0..x.len())
        .map(|i| NbarPoint {
            x: x[i],
            rate: rate[i],
            nbar: nbar[i],
            nbar_err: nbar_err[i],
            clamped: false,
        })
        .collect();
    let (fl, exp) = exponent_from_nbar(&points, zeta, zeta_err, range, &cfg)?;
    let report = exponent_report(&exp, zeta, zeta_err);
    match &exp {
        Ok(e) => println!(
            "exponent {:.4} +- {:.4} ({} points in {}:{})",
            e.exponent, e.err, e.points, range[0], range[1]
        ),
        Err(m) => println!("exponent unavailable: {m}"),
    }
    let dir = common.out.clone().unwrap_or_else(|| {
        input
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    let mut out = OutputDir::new(&dir, "exponent", argv)?
        .with_config(cfg.to_toml_string()?)
        .with_plot(common.plot);
    out.write_csv("fluctuations_vs_x.csv", &fluctuations_csv(&fl))?;
    out.write("exponent.txt", report.as_bytes())?;
    out.finish()?;
    exp.map(|_| ()).map_err(LabError::data)
}

fn pipeline(
    seed: Option<u64>,
    runs: Option<usize>,
    common: &Common,
    argv: &[String],
) -> LabResult<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    let dir = require_out(common)?;
    let avg: Averages = simulate_runs(&cfg)?;
    let mut out = OutputDir::new(dir, "pipeline", argv)?
        .with_seed(cfg.seed)
        .with_config(cfg.to_toml_string()?)
        .with_plot(common.plot);
    out.write_csv("runs.csv", &runs_csv(&avg.runs))?;
    out.write_csv("nbar_vs_x.csv", &nbar_csv(&avg.nbar))?;
    write_g2_files(&mut out, &avg.g2, &cfg)?;
    let data = fit_inputs(&avg.g2, &cfg);
    let (fit, gamma_fit) = fit_bins(&data, &cfg)?;
    write_fit(&mut out, "fit.json", &fit, &gamma_fit)?;
    let (fl, exp) =
        exponent_from_nbar(&avg.nbar, fit.zeta, fit.zeta_err, cfg.exponent_range, &cfg)?;
    out.write_csv("fluctuations_vs_x.csv", &fluctuations_csv(&fl))?;
    out.write(
        "exponent.txt",
        exponent_report(&exp, fit.zeta, fit.zeta_err).as_bytes(),
    )?;
    out.finish()?;
    match &exp {
        Ok(e) => println!(
            "zeta {:.3} +- {:.3}, exponent {:.4} +- {:.4}",
            fit.zeta, fit.zeta_err, e.exponent, e.err
        ),
        Err(m) => println!(
            "zeta {:.3} +- {:.3}, exponent unavailable: {m}",
            fit.zeta, fit.zeta_err
        ),
    }
    Ok(())
}
