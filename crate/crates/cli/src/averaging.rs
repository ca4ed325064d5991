//! Trajectory averaging in chunks, with a checkpoint after each chunk so long
//! runs can resume. Sums are accumulated in trajectory order, so the result
//! does not depend on the worker count or on where a run was interrupted.

use std::path::Path;

use jcoupling_core::engine::{Engine, TraceSample};
use jcoupling_core::pipeline::{self, initial_state, thermal_magnetization, trajectory_seed};
use jcoupling_core::sequence::build_schedule;
use jcoupling_core::{io, MagnetizationTrace, Molecule, PipelineConfig, Schedule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Running sums, stored as raw bit patterns so a resumed run continues from
/// exactly the same values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    completed: usize,
    times: Vec<u64>,
    sums: Vec<[u64; 3]>,
}

fn fingerprint(molecule: &Molecule, cfg: &PipelineConfig) -> Result<String> {
    let key = (
        molecule.to_file(),
        &cfg.protocol,
        &cfg.engine,
        cfg.trajectories,
        cfg.seed,
    );
    serde_json::to_string(&key).map_err(|e| CliError::Core(e.into()))
}

fn load_checkpoint(path: &Path, fingerprint: &str) -> Option<Checkpoint> {
    let text = std::fs::read_to_string(path).ok()?;
    let cp: Checkpoint = serde_json::from_str(&text).ok()?;
    (cp.fingerprint == fingerprint).then_some(cp)
}

/// Trace averaged over `cfg.trajectories` pulse-noise realizations and
/// normalized to thermal magnetization. Quiet configurations run once.
pub fn averaged_trace(
    molecule: &Molecule,
    cfg: &PipelineConfig,
    chunk: usize,
    checkpoint: &Path,
) -> Result<(Schedule, MagnetizationTrace)> {
    if cfg.engine.noise.is_quiet() {
        return Ok(pipeline::simulate_trace(molecule, cfg)?);
    }
    cfg.validate()?;
    let schedule = build_schedule(&cfg.protocol, molecule)?;
    let rho0 = initial_state(molecule, &cfg.protocol)?;
    let norm = 1.0 / thermal_magnetization(molecule, &cfg.protocol)?;
    let fp = fingerprint(molecule, cfg)?;

    let (mut completed, mut times, mut sums) = match load_checkpoint(checkpoint, &fp) {
        Some(cp) => (
            cp.completed,
            cp.times.into_iter().map(f64::from_bits).collect::<Vec<_>>(),
            cp.sums.into_iter().map(|s| s.map(f64::from_bits)).collect::<Vec<_>>(),
        ),
        None => (0, Vec::new(), vec![[0.0; 3]; schedule.n_stages()]),
    };

    while completed < cfg.trajectories {
        let end = (completed + chunk).min(cfg.trajectories);
        let traces = (completed..end)
            .into_par_iter()
            .map(|k| {
                let mut ecfg = cfg.engine.clone();
                ecfg.noise.rng_seed = trajectory_seed(cfg.seed, k);
                let engine = Engine::new(molecule, ecfg)?;
                Ok(engine.propagate(&rho0, &schedule)?.trace)
            })
            .collect::<std::result::Result<Vec<_>, jcoupling_core::Error>>()?;
        for tr in &traces {
            if times.is_empty() {
                times = tr.times();
            }
            for (acc, s) in sums.iter_mut().zip(&tr.samples) {
                for (a, v) in acc.iter_mut().zip(s.m) {
                    *a += v;
                }
            }
        }
        completed = end;
        if completed < cfg.trajectories {
            let cp = Checkpoint {
                fingerprint: fp.clone(),
                completed,
                times: times.iter().map(|t| t.to_bits()).collect(),
                sums: sums.iter().map(|s| s.map(f64::to_bits)).collect(),
            };
            io::write_atomic(checkpoint, io::to_json_pretty(&cp)?.as_bytes())?;
        }
    }
    if checkpoint.exists() {
        std::fs::remove_file(checkpoint).map_err(|e| CliError::Core(e.into()))?;
    }

    let n = cfg.trajectories as f64;
    let samples = times
        .iter()
        .zip(&sums)
        .map(|(t, s)| TraceSample {
            t: *t,
            m: s.map(|v| v / n * norm),
        })
        .collect();
    let n_h = molecule.hydrogen_sites().len();
    Ok((
        schedule.clone(),
        MagnetizationTrace {
            samples,
            n_h,
            encoding_interval: schedule.tau,
        },
    ))
}
