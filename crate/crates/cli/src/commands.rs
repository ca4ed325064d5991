//! The four subcommands. Each writes its artifacts into an output directory
//! and returns a small summary for the terminal.

use std::fs::File;
use std::path::{Path, PathBuf};

use jcoupling_core::analysis::{self, estimate_couplings, signal_couplings, CouplingEstimate};
use jcoupling_core::inference::{self, PosteriorSummary};
use jcoupling_core::{io, pipeline, MagnetizationTrace, Peak, PipelineOutput, PriorSpec, ResonanceTable, Schedule};
use serde::Serialize;

use crate::averaging::averaged_trace;
use crate::config::{ResolvedRun, RunConfig};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TRACE: &str = "trace.csv";
pub const FIELD: &str = "field.csv";
pub const CLEAN_SIGNAL: &str = "clean_signal.csv";
pub const SIGNAL: &str = "signal.csv";
pub const SPECTRUM: &str = "spectrum.csv";
pub const PEAKS: &str = "peaks.json";
pub const RESONANCES: &str = "resonances.json";
pub const POSTERIOR_SAMPLES: &str = "posterior.csv";
pub const POSTERIOR_SUMMARY: &str = "posterior.json";
const CHECKPOINT: &str = "checkpoint.json";

/// Renders a CSV in memory and commits it with an atomic rename.
fn save(path: &Path, render: impl FnOnce(&mut Vec<u8>) -> jcoupling_core::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    render(&mut buf)?;
    io::write_atomic(path, &buf)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_atomic(path, io::to_json_pretty(value)?.as_bytes())?;
    Ok(())
}

fn prepare_out(out: &Path, resolved: &ResolvedRun) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Core(e.into()))?;
    write_json(&out.join(MANIFEST), &resolved.manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineReport {
    pub predicted_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<Peak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakReport {
    /// Positive-frequency maxima above the configured fraction of the tallest.
    pub peaks: Vec<Peak>,
    pub lines: Vec<LineReport>,
    /// Std of the readout noise on the averaged signal; 0 without photon noise.
    pub noise_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_band_hz: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smallest_peak_snr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub couplings: Option<CouplingEstimate>,
}

/// Peak list, per-line SNR and line-position coupling fit for a finished run.
pub fn peak_report(resolved: &ResolvedRun, cfg: &RunConfig, out: &PipelineOutput) -> Result<PeakReport> {
    let spec = &out.spectrum;
    let targeted = &resolved.pipeline.protocol.targeted_species;
    let tallest = spec.magnitude.iter().cloned().fold(0.0, f64::max);
    let peaks: Vec<Peak> = analysis::find_peaks(spec, cfg.analysis.peak_threshold * tallest)
        .into_iter()
        .filter(|p| p.freq > 0.0)
        .collect();
    let predicted = analysis::predict_resonances(&resolved.molecule, targeted).frequencies();
    let band = analysis::quiet_band(&predicted, spec.nyquist(), cfg.analysis.band_margin_hz);
    let w = cfg.analysis.line_window_hz;
    let mut lines = Vec::new();
    for &f in predicted.iter().filter(|f| **f > 0.0) {
        let measured = if f + w < spec.nyquist() {
            analysis::strongest_peak_in(spec, f - w, f + w)
        } else {
            None
        };
        let snr = match (measured, band) {
            (Some(p), Some(b)) if out.noise_sigma > 0.0 => Some(analysis::measure_snr(spec, &p, b)?),
            _ => None,
        };
        lines.push(LineReport {
            predicted_hz: f,
            measured,
            snr,
        });
    }
    let smallest_peak_snr = lines.iter().filter_map(|l| l.snr).reduce(f64::min);
    let couplings = if signal_couplings(&resolved.molecule, targeted).is_empty() {
        None
    } else {
        estimate_couplings(spec, &resolved.molecule, targeted, w).ok()
    };
    Ok(PeakReport {
        peaks,
        lines,
        noise_sigma: out.noise_sigma,
        noise_band_hz: band,
        smallest_peak_snr,
        couplings,
    })
}

fn write_series(out_dir: &Path, out: &PipelineOutput) -> Result<()> {
    let times = out.trace.times();
    save(&out_dir.join(FIELD), |w| io::write_field_csv(w, &out.field))?;
    save(&out_dir.join(CLEAN_SIGNAL), |w| {
        io::write_signal_csv(w, &times, &out.clean_signal)
    })?;
    save(&out_dir.join(SIGNAL), |w| io::write_signal_csv(w, &times, &out.signal))?;
    save(&out_dir.join(SPECTRUM), |w| io::write_spectrum_csv(w, &out.spectrum))?;
    Ok(())
}

/// Full chain: trace, field, clean and noisy signal, spectrum and peak report.
pub fn run_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<PeakReport> {
    let resolved = cfg.resolve()?;
    prepare_out(out_dir, &resolved)?;
    let (schedule, trace) = averaged_trace(
        &resolved.molecule,
        &resolved.pipeline,
        cfg.chunk,
        &out_dir.join(CHECKPOINT),
    )?;
    save(&out_dir.join(TRACE), |w| io::write_trace_csv(w, &trace))?;
    finish(&resolved, cfg, schedule, trace, out_dir)
}

fn finish(
    resolved: &ResolvedRun,
    cfg: &RunConfig,
    schedule: Schedule,
    trace: MagnetizationTrace,
    out_dir: &Path,
) -> Result<PeakReport> {
    let out = pipeline::finish(schedule, trace, &resolved.pipeline)?;
    write_series(out_dir, &out)?;
    let report = peak_report(resolved, cfg, &out)?;
    write_json(&out_dir.join(PEAKS), &report)?;
    Ok(report)
}

/// Re-runs emission, readout and analysis on a saved magnetization trace.
pub fn run_spectrum(cfg: &RunConfig, trace_path: &Path, out_dir: &Path) -> Result<PeakReport> {
    let resolved = cfg.resolve()?;
    let file = File::open(trace_path).map_err(|source| CliError::Read {
        path: trace_path.to_path_buf(),
        source,
    })?;
    let n_h = resolved.molecule.hydrogen_sites().len();
    let trace = io::read_trace_csv(file, resolved.pipeline.protocol.tau, n_h)?;
    if trace.samples.len() != resolved.pipeline.protocol.n_stages {
        return Err(CliError::Config(format!(
            "trace has {} samples, protocol has {} stages",
            trace.samples.len(),
            resolved.pipeline.protocol.n_stages
        )));
    }
    let schedule = jcoupling_core::sequence::build_schedule(&resolved.pipeline.protocol, &resolved.molecule)?;
    prepare_out(out_dir, &resolved)?;
    finish(&resolved, cfg, schedule, trace, out_dir)
}

pub fn run_predict(cfg: &RunConfig, out_dir: &Path) -> Result<ResonanceTable> {
    let resolved = cfg.resolve()?;
    prepare_out(out_dir, &resolved)?;
    let table = analysis::predict_resonances(&resolved.molecule, &resolved.pipeline.protocol.targeted_species);
    write_json(&out_dir.join(RESONANCES), &table)?;
    Ok(table)
}

/// Posterior over the signal couplings of the configured molecule, whose
/// coupling values centre the prior.
pub fn run_infer(cfg: &RunConfig, signal_path: &Path, out_dir: &Path) -> Result<PosteriorSummary> {
    let resolved = cfg.resolve()?;
    let file = File::open(signal_path).map_err(|source| CliError::Read {
        path: signal_path.to_path_buf(),
        source,
    })?;
    let (times, data) = io::read_signal_csv(file)?;
    let keyed = signal_couplings(&resolved.molecule, &resolved.pipeline.protocol.targeted_species);
    if keyed.is_empty() {
        return Err(CliError::Config(
            "molecule has no couplings visible to the protocol".into(),
        ));
    }
    let keys: Vec<_> = keyed.iter().map(|(k, _)| k.clone()).collect();
    let centre: Vec<f64> = keyed.iter().map(|(_, v)| *v).collect();
    let forward = inference::ForwardModel::new(&resolved.molecule, keys.clone(), &resolved.pipeline)?;
    check_grid(&times, forward.times())?;
    let sigma = cfg
        .infer
        .noise_sigma
        .unwrap_or_else(|| resolved.manifest.photon.estimator_std(0.0));
    let prior = PriorSpec::around(&keys, &centre, cfg.infer.prior_half_width_hz);
    let mut sampler = cfg.infer.sampler.clone();
    sampler.seed = cfg.seed;
    prepare_out(out_dir, &resolved)?;
    let post = inference::posterior(&data, &prior, sigma, &forward, &sampler)?;
    save(&out_dir.join(POSTERIOR_SAMPLES), |w| {
        io::write_samples_csv(w, &post.couplings, &post.samples)
    })?;
    let summary = post.summary();
    write_json(&out_dir.join(POSTERIOR_SUMMARY), &summary)?;
    Ok(summary)
}

fn check_grid(data: &[f64], model: &[f64]) -> Result<()> {
    if data.len() != model.len() {
        return Err(CliError::Config(format!(
            "signal grid mismatch: file has {} samples, protocol has {}",
            data.len(),
            model.len()
        )));
    }
    for (k, (a, b)) in data.iter().zip(model).enumerate() {
        if (a - b).abs() > 1e-9 * b.abs().max(1e-3) {
            return Err(CliError::Config(format!(
                "signal grid mismatch at stage {}: {a} s vs {b} s",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Output directory from the flag, the config, or `out`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
}
