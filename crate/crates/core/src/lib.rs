//! Simulation and inference toolkit for detecting scalar couplings in small
//! molecules with an NV-ensemble sensor at high field.
//!
//! The chain is: [`sequence`] builds the pulse schedule, [`engine`] propagates
//! the density matrix, [`emission`] turns magnetization into a field, [`readout`]
//! models the NV response and photon counting, and [`analysis`] / [`inference`]
//! recover couplings from the resulting signal.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod emission;
pub mod engine;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod molecule;
pub mod pipeline;
pub mod presets;
pub mod readout;
pub mod sequence;
pub mod spin;

pub use analysis::{CouplingKey, Peak, Resonance, ResonanceTable, Spectrum};
pub use emission::{FieldTrace, SampleConstants};
pub use engine::{EngineConfig, MagnetizationTrace, NoiseConfig, OuChannel, PulseMode};
pub use error::{Error, Result};
pub use inference::{ForwardModel, Posterior, PriorSpec, SamplerConfig};
pub use molecule::{HamiltonianModel, Molecule, MoleculeFile, Nucleus, Species};
pub use pipeline::{PipelineConfig, PipelineOutput, SignalScale};
pub use readout::{PhotonModel, PhotonNoise, Xy4Config};
pub use sequence::{ProtocolConfig, ProtocolMode, Schedule};
pub use spin::{Axis, DensityMatrix, OperatorMatrix, ThermalParams};
