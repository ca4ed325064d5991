//! End-to-end chain: propagation → emitted field → XY4 response → photon readout → spectrum.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Spectrum};
use crate::emission::{self, FieldTrace, SampleConstants};
use crate::engine::{Engine, EngineConfig, MagnetizationTrace};
use crate::error::{Error, Result};
use crate::molecule::{Molecule, Species};
use crate::readout::{self, PhotonModel, Xy4Config};
use crate::sequence::{build_schedule, ProtocolConfig, Schedule};
use crate::spin::{self, DensityMatrix, ThermalParams};

/// How normalized magnetization maps to tesla at the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalScale {
    /// The closed-form amplitude with m_x = 1 for full thermal magnetization.
    Formula,
    /// Field chosen so that full thermal magnetization yields this NV response.
    Anchored { nv_amplitude: f64 },
}

impl Default for SignalScale {
    fn default() -> Self {
        SignalScale::Anchored { nv_amplitude: 1e-3 }
    }
}

impl SignalScale {
    /// Tesla per unit of normalized magnetization.
    pub fn tesla_per_unit(&self, constants: &SampleConstants, xy4: &Xy4Config) -> Result<f64> {
        match *self {
            SignalScale::Formula => Ok(emission::b0_amplitude(1.0, constants)),
            SignalScale::Anchored { nv_amplitude } => {
                if !(nv_amplitude.abs() < 1.0) {
                    return Err(Error::InvalidParameter("nv_amplitude must be in (-1, 1)".into()));
                }
                Ok(nv_amplitude.asin() / readout::xy4_phase(1.0, xy4))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub protocol: ProtocolConfig,
    pub engine: EngineConfig,
    /// Independent pulse-noise realizations averaged into the trace.
    pub trajectories: usize,
    pub constants: SampleConstants,
    pub signal_scale: SignalScale,
    pub apply_t2: bool,
    /// `None` skips the photon model and returns the clean response.
    pub photon: Option<PhotonModel>,
    pub zero_pad: usize,
    pub seed: u64,
}

impl PipelineConfig {
    /// Noise-free chain for `protocol` with default constants.
    pub fn quiet(protocol: ProtocolConfig) -> Self {
        let constants = SampleConstants {
            b_ext: protocol.b_ext,
            temperature: protocol.temperature,
            ..SampleConstants::default()
        };
        let engine = EngineConfig {
            b_ext: protocol.b_ext,
            ..EngineConfig::default()
        };
        Self {
            protocol,
            engine,
            trajectories: 1,
            constants,
            signal_scale: SignalScale::default(),
            apply_t2: true,
            photon: None,
            zero_pad: 4,
            seed: 0,
        }
    }

    pub fn xy4(&self) -> Xy4Config {
        Xy4Config::matched(self.protocol.omega_h())
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.engine.noise.validate()?;
        self.constants.validate()?;
        if self.trajectories == 0 {
            return Err(Error::InvalidParameter("trajectories must be >= 1".into()));
        }
        if let Some(p) = &self.photon {
            p.validate()?;
        }
        Ok(())
    }
}

/// Initial state: every nucleus z-thermal; the schedule's first pulse tips hydrogen.
pub fn initial_state(molecule: &Molecule, protocol: &ProtocolConfig) -> Result<DensityMatrix> {
    let params = ThermalParams::new(protocol.b_ext, protocol.temperature)?;
    spin::thermal_state(molecule, &params, &[])
}

/// Magnetization of fully polarized thermal hydrogen, B_H/2.
pub fn thermal_magnetization(molecule: &Molecule, protocol: &ProtocolConfig) -> Result<f64> {
    let g = molecule.gamma_of(&Species::hydrogen())?;
    Ok(spin::thermal_polarization(g, protocol.b_ext, protocol.temperature) / 2.0)
}

/// Seed of the `k`-th pulse-noise trajectory.
pub fn trajectory_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trajectory-averaged magnetization, as a fraction of thermal magnetization.
pub fn simulate_trace(molecule: &Molecule, cfg: &PipelineConfig) -> Result<(Schedule, MagnetizationTrace)> {
    cfg.validate()?;
    let schedule = build_schedule(&cfg.protocol, molecule)?;
    let rho0 = initial_state(molecule, &cfg.protocol)?;
    let norm = 1.0 / thermal_magnetization(molecule, &cfg.protocol)?;
    let runs = if cfg.engine.noise.is_quiet() {
        1
    } else {
        cfg.trajectories
    };
    let traces: Vec<MagnetizationTrace> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut ecfg = cfg.engine.clone();
            ecfg.b_ext = cfg.protocol.b_ext;
            ecfg.noise.rng_seed = trajectory_seed(cfg.seed, k);
            let engine = Engine::new(molecule, ecfg)?;
            Ok(engine.propagate(&rho0, &schedule)?.trace)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((schedule, MagnetizationTrace::average(&traces)?.scaled(norm)))
}

/// Field at the sensor for each sampled stage, with the T2 envelope if enabled.
pub fn field_trace(trace: &MagnetizationTrace, cfg: &PipelineConfig) -> Result<FieldTrace> {
    let per_unit = cfg.signal_scale.tesla_per_unit(&cfg.constants, &cfg.xy4())?;
    let field = FieldTrace::from_scale(&trace.times(), &trace.mx(), per_unit);
    if cfg.apply_t2 {
        emission::apply_t2(&field, cfg.protocol.t2)
    } else {
        Ok(field)
    }
}

/// Clean NV response per stage.
pub fn nv_signal(field: &FieldTrace, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let xy4 = cfg.xy4();
    field
        .samples
        .iter()
        .map(|s| readout::xy4_response(s.b0, &xy4))
        .collect()
}

pub fn readout_rng(seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub schedule: Schedule,
    pub trace: MagnetizationTrace,
    pub field: FieldTrace,
    pub clean_signal: Vec<f64>,
    /// Equals `clean_signal` when no photon model is configured.
    pub signal: Vec<f64>,
    pub noise_sigma: f64,
    pub spectrum: Spectrum,
}

/// Applies emission, XY4 and readout to a precomputed trace.
pub fn finish(schedule: Schedule, trace: MagnetizationTrace, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let field = field_trace(&trace, cfg)?;
    let clean = nv_signal(&field, cfg)?;
    let (signal, noise_sigma) = match &cfg.photon {
        Some(model) => {
            let mut rng = readout_rng(cfg.seed);
            (
                readout::photon_readout(&clean, model, &mut rng)?,
                model.estimator_std(0.0),
            )
        }
        None => (clean.clone(), 0.0),
    };
    let spectrum = analysis::spectrum(&signal, trace.encoding_interval, cfg.zero_pad)?;
    Ok(PipelineOutput {
        schedule,
        trace,
        field,
        clean_signal: clean,
        signal,
        noise_sigma,
        spectrum,
    })
}

pub fn run(molecule: &Molecule, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let (schedule, trace) = simulate_trace(molecule, cfg)?;
    finish(schedule, trace, cfg)
}
