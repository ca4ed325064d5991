//! Run configuration: what the user writes, and its fully resolved form that
//! is stored as the run manifest.

use std::path::{Path, PathBuf};

use jcoupling_core::engine::OuChannel;
use jcoupling_core::inference::SamplerConfig;
use jcoupling_core::{
    presets, EngineConfig, HamiltonianModel, Molecule, MoleculeFile, NoiseConfig, PhotonModel, PipelineConfig,
    ProtocolConfig, PulseMode, SampleConstants, SignalScale,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolPreset {
    Case1,
    Case2,
    Fast,
}

impl ProtocolPreset {
    pub fn expand(self) -> ProtocolConfig {
        match self {
            ProtocolPreset::Case1 => presets::case1(),
            ProtocolPreset::Case2 => presets::case2(),
            ProtocolPreset::Fast => presets::fast(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoleculePreset {
    Fluoromethanol,
    /// Two protons at 512 and 236 Hz coupled by 8 Hz.
    ProtonPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoleculeSource {
    Preset(MoleculePreset),
    File(PathBuf),
    Inline(MoleculeFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolSource {
    Preset(ProtocolPreset),
    Explicit(ProtocolConfig),
}

/// Which noise sources are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseToggles {
    /// Ornstein–Uhlenbeck fluctuation of the pulse amplitudes.
    pub ou: bool,
    /// Off-resonant driving of untargeted species.
    pub cross_talk: bool,
    /// Photon shot noise of the NV readout.
    pub photon: bool,
    /// T2 decay of the emitted field.
    pub t2: bool,
}

impl Default for NoiseToggles {
    fn default() -> Self {
        Self {
            ou: false,
            cross_talk: false,
            photon: true,
            t2: true,
        }
    }
}

impl NoiseToggles {
    /// Applies `source=on|off`.
    pub fn set(&mut self, spec: &str) -> Result<()> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected source=on|off, got `{spec}`")))?;
        let on = match value {
            "on" => true,
            "off" => false,
            other => {
                return Err(CliError::Config(format!(
                    "noise value must be on or off, got `{other}`"
                )))
            }
        };
        match name {
            "ou" => self.ou = on,
            "cross_talk" | "cross-talk" => self.cross_talk = on,
            "photon" => self.photon = on,
            "t2" => self.t2 = on,
            other => {
                return Err(CliError::Config(format!(
                    "unknown noise source `{other}` (ou, cross_talk, photon, t2)"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuSettings {
    pub relative_sigma: f64,
    pub correlation_time: f64,
    pub channel: OuChannel,
}

impl Default for OuSettings {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            relative_sigma: n.ou_relative_sigma,
            correlation_time: n.ou_correlation_time,
            channel: n.channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    /// Peaks below this fraction of the tallest one are not reported.
    pub peak_threshold: f64,
    /// Half-width of the search window around each predicted line (Hz).
    pub line_window_hz: f64,
    /// Distance kept between the noise band and any predicted line (Hz).
    pub band_margin_hz: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            peak_threshold: 0.15,
            line_window_hz: 0.5,
            band_margin_hz: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSettings {
    pub sampler: SamplerConfig,
    /// Uniform prior of ± this width around the molecule's couplings (Hz).
    pub prior_half_width_hz: f64,
    /// Noise std of the data; defaults to the photon model's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

impl Default for InferSettings {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            prior_half_width_hz: 2.0,
            noise_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub molecule: MoleculeSource,
    pub protocol: ProtocolSource,
    pub noise: NoiseToggles,
    pub ou: OuSettings,
    pub model: HamiltonianModel,
    pub pulse_mode: PulseMode,
    pub substeps_per_period: usize,
    /// Pulse-noise realizations averaged into the magnetization trace.
    pub trajectories: usize,
    /// Trajectories per checkpoint.
    pub chunk: usize,
    pub photon: PhotonModel,
    pub signal_scale: SignalScale,
    /// Derived from the protocol's field and temperature when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<SampleConstants>,
    pub zero_pad: usize,
    pub analysis: AnalysisSettings,
    pub infer: InferSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            molecule: MoleculeSource::Preset(MoleculePreset::Fluoromethanol),
            protocol: ProtocolSource::Preset(ProtocolPreset::Case1),
            noise: NoiseToggles::default(),
            ou: OuSettings::default(),
            model: engine.model,
            pulse_mode: engine.pulse_mode,
            substeps_per_period: engine.substeps_per_period,
            trajectories: 4,
            chunk: 8,
            photon: presets::photon_model(presets::SNR_REPS),
            signal_scale: SignalScale::default(),
            constants: None,
            zero_pad: 4,
            analysis: AnalysisSettings::default(),
            infer: InferSettings::default(),
            out: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses a JSON config; relative molecule paths are taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let MoleculeSource::File(p) = &mut cfg.molecule {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Expands presets and files into explicit values and checks them.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let molecule_file = match &self.molecule {
            MoleculeSource::Preset(MoleculePreset::Fluoromethanol) => presets::fluoromethanol().to_file(),
            MoleculeSource::Preset(MoleculePreset::ProtonPair) => presets::proton_pair(512.0, 236.0, 8.0).to_file(),
            MoleculeSource::Inline(f) => f.clone(),
            MoleculeSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::Read {
                    path: p.clone(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        let molecule = Molecule::from_file(&molecule_file)?;
        let protocol = match &self.protocol {
            ProtocolSource::Preset(p) => p.expand(),
            ProtocolSource::Explicit(p) => p.clone(),
        };
        if self.chunk == 0 {
            return Err(CliError::Config("chunk must be >= 1".into()));
        }
        let constants = self.constants.clone().unwrap_or_else(|| SampleConstants {
            b_ext: protocol.b_ext,
            temperature: protocol.temperature,
            ..SampleConstants::default()
        });
        let engine = EngineConfig {
            model: self.model,
            pulse_mode: self.pulse_mode,
            noise: NoiseConfig {
                ou_enabled: self.noise.ou,
                ou_relative_sigma: self.ou.relative_sigma,
                ou_correlation_time: self.ou.correlation_time,
                channel: self.ou.channel,
                cross_talk_enabled: self.noise.cross_talk,
                rng_seed: self.seed,
            },
            substeps_per_period: self.substeps_per_period,
            b_ext: protocol.b_ext,
        };
        let pipeline = PipelineConfig {
            protocol: protocol.clone(),
            engine,
            trajectories: self.trajectories,
            constants: constants.clone(),
            signal_scale: self.signal_scale,
            apply_t2: self.noise.t2,
            photon: self.noise.photon.then(|| self.photon.clone()),
            zero_pad: self.zero_pad,
            seed: self.seed,
        };
        pipeline.validate()?;
        self.photon.validate()?;
        for s in &protocol.targeted_species {
            if !molecule.has_species(s) {
                return Err(CliError::Config(format!("targeted species {s} not in molecule")));
            }
        }
        let manifest = RunConfig {
            molecule: MoleculeSource::Inline(molecule_file),
            protocol: ProtocolSource::Explicit(protocol),
            constants: Some(constants),
            out: None,
            ..self.clone()
        };
        Ok(ResolvedRun {
            molecule,
            pipeline,
            manifest,
        })
    }
}

/// A config with every preset expanded, ready to execute.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub molecule: Molecule,
    pub pipeline: PipelineConfig,
    /// Explicit config that reproduces this run.
    pub manifest: RunConfig,
}
