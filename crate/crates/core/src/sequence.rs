//! Pulse schedules: preparation, encoding stages with simultaneous π pulses,
//! and Y/Ȳ detection windows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molecule::{Molecule, Species, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    TopHat,
    Corpse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    Standard,
    /// Adds a (π)_x/(π)_−x pair on every targeted species in each stage.
    Fast,
}

/// Placement of unequal simultaneous pulses inside their shared slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Midpoint,
    /// All pulses start with the slot.
    Edge,
}

/// Shape of the hydrogen refocusing pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HPulse {
    Corpse,
    TopHat,
}

/// A rotation of one species by `angle` about the in-plane axis at `phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    pub species: Species,
    pub start: f64,
    pub duration: f64,
    pub phase: f64,
    pub angle: f64,
    /// Rabi frequency on this species (rad/s).
    pub rabi: f64,
    pub shape: PulseShape,
}

impl PulseEvent {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn midpoint(&self) -> f64 {
        self.start + 0.5 * self.duration
    }

    /// Constant-amplitude pieces making up this pulse, in time order.
    pub fn segments(&self) -> Vec<PulseEvent> {
        match self.shape {
            PulseShape::TopHat => vec![self.clone()],
            PulseShape::Corpse => corpse_decomposition(self.rabi, self.phase)
                .into_iter()
                .map(|mut p| {
                    p.species = self.species.clone();
                    p.start += self.start;
                    p
                })
                .collect(),
        }
    }
}

/// Simultaneous pulses sharing one time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSlot {
    pub start: f64,
    pub duration: f64,
    pub pulses: Vec<PulseEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Pulses(PulseSlot),
    Free {
        start: f64,
        duration: f64,
    },
    /// Two full hydrogen Rabi cycles, along Y then −Y; net identity on the sample.
    Detection {
        start: f64,
        duration: f64,
        rabi: f64,
    },
}

impl Event {
    pub fn start(&self) -> f64 {
        match self {
            Event::Pulses(s) => s.start,
            Event::Free { start, .. } | Event::Detection { start, .. } => *start,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Event::Pulses(s) => s.duration,
            Event::Free { duration, .. } | Event::Detection { duration, .. } => *duration,
        }
    }
}

/// Protocol parameters. Times in seconds; the hydrogen Rabi frequency in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub tau: f64,
    pub n_stages: usize,
    pub rabi_hz: f64,
    pub targeted_species: Vec<Species>,
    pub mode: ProtocolMode,
    pub b_ext: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub t2: f64,
    #[serde(default = "default_alignment")]
    pub alignment: Alignment,
    #[serde(default = "default_h_pulse")]
    pub h_pulse: HPulse,
}

fn default_temperature() -> f64 {
    300.0
}
fn default_alignment() -> Alignment {
    Alignment::Midpoint
}
fn default_h_pulse() -> HPulse {
    HPulse::Corpse
}

impl ProtocolConfig {
    /// Hydrogen Rabi frequency in rad/s.
    pub fn omega_h(&self) -> f64 {
        TWO_PI * self.rabi_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.n_stages == 0 {
            return bad("n_stages must be at least 1".into());
        }
        if !(self.rabi_hz > 0.0 && self.rabi_hz.is_finite()) {
            return bad(format!("rabi_hz must be positive, got {}", self.rabi_hz));
        }
        if !(self.b_ext > 0.0) || !(self.temperature > 0.0) || !(self.t2 > 0.0) {
            return bad("b_ext, temperature and t2 must be positive".into());
        }
        if !self.targeted_species.iter().any(Species::is_hydrogen) {
            return Err(Error::InvalidSchedule("targeted species must include H".into()));
        }
        Ok(())
    }

    pub fn detection_duration(&self) -> f64 {
        2.0 * TWO_PI / self.omega_h()
    }
}

/// Standard CORPSE π: 420° about φ, 300° about φ+π, 60° about φ.
pub fn corpse_decomposition(rabi: f64, phase: f64) -> Vec<PulseEvent> {
    let mut t = 0.0;
    [(420.0, 0.0), (300.0, PI), (60.0, 0.0)]
        .iter()
        .map(|&(deg, shift): &(f64, f64)| {
            let angle = deg.to_radians();
            let p = PulseEvent {
                species: Species::hydrogen(),
                start: t,
                duration: angle / rabi,
                phase: phase + shift,
                angle,
                rabi,
                shape: PulseShape::TopHat,
            };
            t += p.duration;
            p
        })
        .collect()
}

pub fn corpse_duration(rabi: f64) -> f64 {
    (13.0 * PI / 3.0) / rabi
}

/// Rabi frequency on `species` when one RF amplitude drives hydrogen at `omega_h`.
pub fn species_rabi(species: &Species, omega_h: f64, molecule: &Molecule) -> Result<f64> {
    let gamma_h = molecule
        .gamma_of(&Species::hydrogen())
        .unwrap_or(TWO_PI * crate::presets::GAMMA_H_MHZ * 1e6);
    Ok(omega_h * (molecule.gamma_of(species)? / gamma_h).abs())
}

/// Top-hat π duration for `species`.
pub fn pi_duration(species: &Species, omega_h: f64, molecule: &Molecule) -> Result<f64> {
    Ok(PI / species_rabi(species, omega_h, molecule)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub events: Vec<Event>,
    /// Index into `events` of the first event of each stage.
    pub stage_starts: Vec<usize>,
    /// Free encoding time per stage.
    pub tau: f64,
}

impl Schedule {
    pub fn n_stages(&self) -> usize {
        self.stage_starts.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.events.last().map(|e| e.start() + e.duration()).unwrap_or(0.0)
    }

    pub fn preparation(&self) -> &[Event] {
        &self.events[..self.stage_starts.first().copied().unwrap_or(self.events.len())]
    }

    pub fn stage(&self, k: usize) -> &[Event] {
        let lo = self.stage_starts[k];
        let hi = self.stage_starts.get(k + 1).copied().unwrap_or(self.events.len());
        &self.events[lo..hi]
    }

    /// Flat list of every pulse with absolute timing, for export.
    pub fn flat_pulses(&self) -> Vec<&PulseEvent> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Pulses(s) => Some(s.pulses.iter()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Builder<'a> {
    cfg: &'a ProtocolConfig,
    molecule: &'a Molecule,
    events: Vec<Event>,
    t: f64,
}

impl Builder<'_> {
    fn free(&mut self, d: f64) {
        self.events.push(Event::Free {
            start: self.t,
            duration: d,
        });
        self.t += d;
    }

    fn pulse(&mut self, species: &Species, angle: f64, phase: f64, shape: PulseShape) -> Result<PulseEvent> {
        let rabi = species_rabi(species, self.cfg.omega_h(), self.molecule)?;
        let duration = match shape {
            PulseShape::TopHat => angle / rabi,
            PulseShape::Corpse => corpse_duration(rabi),
        };
        Ok(PulseEvent {
            species: species.clone(),
            start: 0.0,
            duration,
            phase,
            angle,
            rabi,
            shape,
        })
    }

    fn slot(&mut self, mut pulses: Vec<PulseEvent>) {
        let width = pulses.iter().map(|p| p.duration).fold(0.0, f64::max);
        for p in &mut pulses {
            p.start = match self.cfg.alignment {
                Alignment::Midpoint => self.t + 0.5 * (width - p.duration),
                Alignment::Edge => self.t,
            };
        }
        self.events.push(Event::Pulses(PulseSlot {
            start: self.t,
            duration: width,
            pulses,
        }));
        self.t += width;
    }

    fn refocusing(&mut self, phase: f64, h_shape: PulseShape) -> Result<Vec<PulseEvent>> {
        self.cfg
            .targeted_species
            .iter()
            .map(|s| {
                let shape = if s.is_hydrogen() { h_shape } else { PulseShape::TopHat };
                self.pulse(s, PI, phase, shape)
            })
            .collect()
    }
}

/// Builds the full protocol schedule for `molecule`.
pub fn build_schedule(config: &ProtocolConfig, molecule: &Molecule) -> Result<Schedule> {
    config.validate()?;
    for s in &config.targeted_species {
        if !molecule.has_species(s) {
            return Err(Error::UnknownSpecies(s.to_string()));
        }
    }
    let mut b = Builder {
        cfg: config,
        molecule,
        events: Vec::new(),
        t: 0.0,
    };
    let h = Species::hydrogen();
    let prep = b.pulse(&h, PI / 2.0, PI / 2.0, PulseShape::TopHat)?;
    b.slot(vec![prep]);

    let h_shape = match config.h_pulse {
        HPulse::Corpse => PulseShape::Corpse,
        HPulse::TopHat => PulseShape::TopHat,
    };
    let main = b.refocusing(0.0, h_shape)?;
    let widest = main.iter().map(|p| p.duration).fold(0.0, f64::max);
    let (n_free, pair) = match config.mode {
        ProtocolMode::Standard => (2.0, None),
        ProtocolMode::Fast => {
            let plus = b.refocusing(0.0, PulseShape::TopHat)?;
            let minus = b.refocusing(PI, PulseShape::TopHat)?;
            (4.0, Some((plus, minus)))
        }
    };
    if config.tau < widest {
        return Err(Error::InvalidSchedule(format!(
            "tau {:.3e} s is shorter than the widest pi pulse {:.3e} s",
            config.tau, widest
        )));
    }
    let piece = config.tau / n_free;
    let detection = config.detection_duration();

    let mut stage_starts = Vec::with_capacity(config.n_stages);
    for _ in 0..config.n_stages {
        stage_starts.push(b.events.len());
        match &pair {
            None => {
                b.free(piece);
                b.slot(main.clone());
                b.free(piece);
            }
            Some((plus, minus)) => {
                b.free(piece);
                b.slot(plus.clone());
                b.free(piece);
                b.slot(minus.clone());
                b.free(piece);
                b.slot(main.clone());
                b.free(piece);
            }
        }
        b.events.push(Event::Detection {
            start: b.t,
            duration: detection,
            rabi: config.omega_h(),
        });
        b.t += detection;
    }
    Ok(Schedule {
        events: b.events,
        stage_starts,
        tau: config.tau,
    })
}
