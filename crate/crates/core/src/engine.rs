//! Density-matrix propagation through a schedule with RF amplitude noise and
//! cross-talk.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, HermitianSpectrum};
use crate::molecule::{simulation_hamiltonian, HamiltonianModel, Molecule, Species};
use crate::sequence::{Event, PulseEvent, PulseSlot, Schedule};
use crate::spin::{self, Axis, DensityMatrix, OperatorMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    /// Top-hat segments of finite duration with all couplings on.
    Finite,
    /// Instantaneous rotations by the nominal angle.
    Ideal,
}

/// Whether simultaneously driven species see one noise realization or independent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuChannel {
    Shared,
    PerSpecies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub ou_enabled: bool,
    pub ou_relative_sigma: f64,
    pub ou_correlation_time: f64,
    pub channel: OuChannel,
    pub cross_talk_enabled: bool,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            ou_enabled: false,
            ou_relative_sigma: 0.01,
            ou_correlation_time: 1e-3,
            channel: OuChannel::Shared,
            cross_talk_enabled: false,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ou_relative_sigma >= 0.0) {
            return Err(Error::InvalidParameter("ou_relative_sigma must be >= 0".into()));
        }
        if !(self.ou_correlation_time > 0.0) {
            return Err(Error::InvalidParameter("ou_correlation_time must be > 0".into()));
        }
        Ok(())
    }

    pub fn is_quiet(&self) -> bool {
        !self.ou_enabled && !self.cross_talk_enabled
    }
}

/// Exact discretization of an Ornstein–Uhlenbeck process over `dt`.
pub fn ou_step<R: Rng + ?Sized>(x: f64, dt: f64, noise: &NoiseConfig, rng: &mut R) -> f64 {
    let decay = (-dt / noise.ou_correlation_time).exp();
    let xi: f64 = rng.sample(StandardNormal);
    x * decay + noise.ou_relative_sigma * (1.0 - decay * decay).sqrt() * xi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub model: HamiltonianModel,
    pub pulse_mode: PulseMode,
    pub noise: NoiseConfig,
    /// Sub-steps per period of the fastest drive or beat when stepping is needed.
    pub substeps_per_period: usize,
    /// Needed for the cross-talk beat frequency (T).
    pub b_ext: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            model: HamiltonianModel::reference(),
            pulse_mode: PulseMode::Finite,
            noise: NoiseConfig::default(),
            substeps_per_period: 20,
            b_ext: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub m: [f64; 3],
}

/// Normalized hydrogen magnetization sampled at the start of every detection window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationTrace {
    pub samples: Vec<TraceSample>,
    pub n_h: usize,
    /// Free encoding time per stage; the sampling interval used for spectra.
    pub encoding_interval: f64,
}

impl MagnetizationTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.m[k]).collect()
    }

    pub fn mx(&self) -> Vec<f64> {
        self.component(0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            for v in &mut s.m {
                *v *= k;
            }
        }
        out
    }

    /// Element-wise mean of traces sampled on the same grid.
    pub fn average(traces: &[MagnetizationTrace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::InvalidParameter("no traces to average".into()))?;
        let mut out = first.clone();
        for tr in &traces[1..] {
            if tr.samples.len() != first.samples.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.samples.len(),
                    got: tr.samples.len(),
                });
            }
            for (o, s) in out.samples.iter_mut().zip(&tr.samples) {
                for k in 0..3 {
                    o.m[k] += s.m[k];
                }
            }
        }
        let inv = 1.0 / traces.len() as f64;
        for s in &mut out.samples {
            for v in &mut s.m {
                *v *= inv;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub trace: MagnetizationTrace,
    pub final_state: DensityMatrix,
}

/// Off-resonant drive that a pulse on `event.species` exerts on `off`.
pub fn cross_talk_term(
    event: &PulseEvent,
    off: &Species,
    molecule: &Molecule,
    b_ext: f64,
    t: f64,
) -> Result<OperatorMatrix> {
    if *off == event.species {
        return Err(Error::InvalidParameter(format!(
            "cross-talk target `{off}` is the driven species"
        )));
    }
    let g_t = molecule.gamma_of(&event.species)?;
    let g_o = molecule.gamma_of(off)?;
    let n = molecule.n_sites();
    let sites = molecule.sites_of(off);
    let x = spin::collective_operator(n, &sites, Axis::X)?;
    let y = spin::collective_operator(n, &sites, Axis::Y)?;
    let amp = event.rabi * g_o / g_t;
    let phase = event.phase + beat(g_t, g_o, b_ext) * t;
    Ok(x.scaled(amp * phase.cos()).add(&y.scaled(amp * phase.sin())))
}

/// Rotating-frame beat between two species' Larmor frequencies (rad/s).
pub fn beat(gamma_target: f64, gamma_off: f64, b_ext: f64) -> f64 {
    (gamma_target - gamma_off) * b_ext
}

#[derive(Debug, Clone, PartialEq)]
struct Drive {
    species: usize,
    rabi: f64,
    phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Free(f64),
    Driven { t0: f64, duration: f64, drives: Vec<Drive> },
    Rotate(Vec<(usize, f64, f64)>),
    Detection(f64),
}

impl Piece {
    /// Equal up to absolute start time and sub-picosecond round-off in durations.
    fn same_shape(&self, other: &Piece) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        match (self, other) {
            (Piece::Free(a), Piece::Free(b)) | (Piece::Detection(a), Piece::Detection(b)) => close(*a, *b),
            (Piece::Rotate(a), Piece::Rotate(b)) => a == b,
            (
                Piece::Driven {
                    duration: da,
                    drives: a,
                    ..
                },
                Piece::Driven {
                    duration: db,
                    drives: b,
                    ..
                },
            ) => close(*da, *db) && a == b,
            _ => false,
        }
    }
}

/// Per-molecule propagation machinery: static Hamiltonian, its eigenbasis and
/// collective spin operators.
pub struct Engine<'a> {
    molecule: &'a Molecule,
    cfg: EngineConfig,
    h_static: CMatrix,
    spectrum: HermitianSpectrum,
    species: Vec<Species>,
    gammas: Vec<f64>,
    sx: Vec<CMatrix>,
    sy: Vec<CMatrix>,
    m_ops: [OperatorMatrix; 3],
    n_h: usize,
}

impl<'a> Engine<'a> {
    pub fn new(molecule: &'a Molecule, cfg: EngineConfig) -> Result<Self> {
        cfg.noise.validate()?;
        if cfg.substeps_per_period == 0 {
            return Err(Error::InvalidParameter("substeps_per_period must be >= 1".into()));
        }
        let h_static = simulation_hamiltonian(molecule, &cfg.model).into_entries();
        let spectrum = HermitianSpectrum::new(&h_static);
        let n = molecule.n_sites();
        let species = molecule.species();
        let mut sx = Vec::new();
        let mut sy = Vec::new();
        let mut gammas = Vec::new();
        for sp in &species {
            let sites = molecule.sites_of(sp);
            sx.push(spin::collective_operator(n, &sites, Axis::X)?.into_entries());
            sy.push(spin::collective_operator(n, &sites, Axis::Y)?.into_entries());
            gammas.push(molecule.gamma_of(sp)?);
        }
        let h_sites = molecule.hydrogen_sites();
        if h_sites.is_empty() {
            return Err(Error::InvalidMolecule("no hydrogen to observe".into()));
        }
        let norm = 2.0 / h_sites.len() as f64;
        let m_ops = [Axis::X, Axis::Y, Axis::Z].map(|a| {
            spin::collective_operator(n, &h_sites, a)
                .expect("hydrogen sites are in range")
                .scaled(norm)
        });
        Ok(Self {
            molecule,
            cfg,
            h_static,
            spectrum,
            species,
            gammas,
            sx,
            sy,
            m_ops,
            n_h: h_sites.len(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn static_hamiltonian(&self) -> &CMatrix {
        &self.h_static
    }

    /// Normalized magnetization (2/N_H)⟨Σ S⟩ over hydrogen.
    pub fn magnetization(&self, rho: &DensityMatrix) -> Result<[f64; 3]> {
        Ok([
            spin::expectation(rho, &self.m_ops[0])?,
            spin::expectation(rho, &self.m_ops[1])?,
            spin::expectation(rho, &self.m_ops[2])?,
        ])
    }

    /// exp(−i H t) of the always-on Hamiltonian.
    pub fn free_propagator(&self, t: f64) -> CMatrix {
        self.spectrum.propagator(t)
    }

    fn species_index(&self, s: &Species) -> Result<usize> {
        self.species
            .iter()
            .position(|x| x == s)
            .ok_or_else(|| Error::UnknownSpecies(s.to_string()))
    }

    fn compile_slot(&self, slot: &PulseSlot) -> Result<Vec<Piece>> {
        if self.cfg.pulse_mode == PulseMode::Ideal {
            let rots = slot
                .pulses
                .iter()
                .map(|p| Ok((self.species_index(&p.species)?, p.angle, p.phase)))
                .collect::<Result<Vec<_>>>()?;
            return Ok(vec![Piece::Rotate(rots)]);
        }
        let mut parts: Vec<(usize, PulseEvent)> = Vec::new();
        for p in &slot.pulses {
            let idx = self.species_index(&p.species)?;
            for seg in p.segments() {
                parts.push((idx, seg));
            }
        }
        let end = slot.start + slot.duration;
        let mut cuts = vec![slot.start, end];
        for (_, p) in &parts {
            cuts.push(p.start);
            cuts.push(p.end());
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-13 {
                continue;
            }
            let mid = 0.5 * (a + b);
            let drives: Vec<Drive> = parts
                .iter()
                .filter(|(_, p)| p.start <= mid && p.end() >= mid)
                .map(|(i, p)| Drive {
                    species: *i,
                    rabi: p.rabi,
                    phase: p.phase,
                })
                .collect();
            if drives.is_empty() {
                pieces.push(Piece::Free(b - a));
            } else {
                pieces.push(Piece::Driven {
                    t0: a,
                    duration: b - a,
                    drives,
                });
            }
        }
        Ok(pieces)
    }

    fn compile(&self, events: &[Event]) -> Result<Vec<Piece>> {
        let mut out = Vec::new();
        for e in events {
            match e {
                Event::Free { duration, .. } => out.push(Piece::Free(*duration)),
                Event::Detection { duration, .. } => out.push(Piece::Detection(*duration)),
                Event::Pulses(slot) => out.extend(self.compile_slot(slot)?),
            }
        }
        Ok(out)
    }

    fn drive_operator(&self, drive: &Drive, scale: f64) -> CMatrix {
        let a = drive.rabi * scale;
        &self.sx[drive.species] * c(a * drive.phase.cos()) + &self.sy[drive.species] * c(a * drive.phase.sin())
    }

    fn rotation(&self, species: usize, angle: f64, phase: f64) -> CMatrix {
        let gen = &self.sx[species] * c(phase.cos()) + &self.sy[species] * c(phase.sin());
        linalg::expm_hermitian(&gen, angle)
    }

    fn cross_talk_operator(&self, drive: &Drive, scale: f64, t: f64) -> CMatrix {
        let dim = self.h_static.nrows();
        let mut h = CMatrix::zeros(dim, dim);
        let g_t = self.gammas[drive.species];
        for (o, &g_o) in self.gammas.iter().enumerate() {
            if o == drive.species {
                continue;
            }
            let amp = drive.rabi * scale * g_o / g_t;
            let ph = drive.phase + beat(g_t, g_o, self.cfg.b_ext) * t;
            h += &self.sx[o] * c(amp * ph.cos()) + &self.sy[o] * c(amp * ph.sin());
        }
        h
    }

    fn max_substep(&self, drives: &[Drive]) -> f64 {
        let mut fastest = drives.iter().map(|d| d.rabi.abs()).fold(0.0, f64::max);
        if self.cfg.noise.cross_talk_enabled {
            for d in drives {
                let g_t = self.gammas[d.species];
                for &g_o in &self.gammas {
                    let b = beat(g_t, g_o, self.cfg.b_ext).abs();
                    if b > 0.0 {
                        fastest = fastest.max(b + d.rabi.abs());
                    }
                }
            }
        }
        std::f64::consts::TAU / fastest / self.cfg.substeps_per_period as f64
    }

    /// Unitary of a piece list with noise off.
    fn quiet_unitary(&self, pieces: &[Piece]) -> Result<CMatrix> {
        let dim = self.h_static.nrows();
        let mut u = linalg::identity(dim);
        for p in pieces {
            let step = match p {
                Piece::Free(d) => self.free_propagator(*d),
                Piece::Detection(_) => continue,
                Piece::Rotate(rots) => {
                    let mut r = linalg::identity(dim);
                    for &(s, angle, phase) in rots {
                        r = self.rotation(s, angle, phase) * r;
                    }
                    r
                }
                Piece::Driven { duration, drives, .. } => {
                    let mut h = self.h_static.clone();
                    for d in drives {
                        h += self.drive_operator(d, 1.0);
                    }
                    linalg::expm_hermitian(&h, *duration)
                }
            };
            u = step * u;
        }
        check_unitary(&u)?;
        Ok(u)
    }

    /// Drive-only unitary of a detection window: one Rabi period about +y on
    /// hydrogen, then one about −y. The propagation skips these windows; this
    /// is what justifies doing so.
    pub fn detection_unitary(&self, duration: f64, rabi: f64) -> Result<CMatrix> {
        let h = self.species_index(&Species::hydrogen())?;
        let half = duration / 2.0;
        let plus = self.rotation(h, rabi * half, std::f64::consts::FRAC_PI_2);
        let minus = self.rotation(h, rabi * half, -std::f64::consts::FRAC_PI_2);
        Ok(minus * plus)
    }

    /// Noise-free unitary of the preparation block.
    pub fn preparation_unitary(&self, schedule: &Schedule) -> Result<CMatrix> {
        self.quiet_unitary(&self.compile(schedule.preparation())?)
    }

    /// Noise-free unitary of stage `k` (detection window excluded).
    pub fn stage_unitary(&self, schedule: &Schedule, k: usize) -> Result<CMatrix> {
        if k >= schedule.n_stages() {
            return Err(Error::InvalidSchedule(format!("stage {k} out of range")));
        }
        self.quiet_unitary(&self.compile(schedule.stage(k))?)
    }

    /// Evolves `rho0` through `schedule`, sampling M at every detection window.
    pub fn propagate(&self, rho0: &DensityMatrix, schedule: &Schedule) -> Result<Propagation> {
        if rho0.dim() != self.h_static.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.h_static.nrows(),
                got: rho0.dim(),
            });
        }
        let mut samples = Vec::with_capacity(schedule.n_stages());
        let noisy = !self.cfg.noise.is_quiet();
        let mut rho = rho0.entries().clone();

        if noisy {
            let mut ou = OuState::new(&self.cfg.noise, self.species.len());
            rho = linalg::conjugate(
                &self.noisy_unitary(&self.compile(schedule.preparation())?, &mut ou)?,
                &rho,
            );
            for k in 0..schedule.n_stages() {
                let events = schedule.stage(k);
                let pieces = self.compile(events)?;
                let u = self.noisy_unitary(&pieces, &mut ou)?;
                rho = linalg::conjugate(&u, &rho);
                samples.push(self.sample(&rho, detection_start(events))?);
            }
        } else {
            rho = linalg::conjugate(&self.preparation_unitary(schedule)?, &rho);
            let template: Option<Vec<Piece>> = if schedule.n_stages() > 0 {
                Some(self.compile(schedule.stage(0))?)
            } else {
                None
            };
            let mut cached: Option<CMatrix> = None;
            for k in 0..schedule.n_stages() {
                let events = schedule.stage(k);
                let pieces = self.compile(events)?;
                let same = template
                    .as_ref()
                    .map(|t| t.len() == pieces.len() && t.iter().zip(&pieces).all(|(a, b)| a.same_shape(b)))
                    .unwrap_or(false);
                let u = if same {
                    if cached.is_none() {
                        cached = Some(self.quiet_unitary(&pieces)?);
                    }
                    cached.clone().unwrap()
                } else {
                    self.quiet_unitary(&pieces)?
                };
                rho = linalg::conjugate(&u, &rho);
                samples.push(self.sample(&rho, detection_start(events))?);
            }
        }
        let final_state = DensityMatrix::from_unchecked(rho);
        let tr = final_state.trace();
        if (tr - c(1.0)).norm() > 1e-8 {
            return Err(Error::Numerical(format!("trace drifted to {tr}")));
        }
        Ok(Propagation {
            trace: MagnetizationTrace {
                samples,
                n_h: self.n_h,
                encoding_interval: schedule.tau,
            },
            final_state,
        })
    }

    fn sample(&self, rho: &CMatrix, t: f64) -> Result<TraceSample> {
        let state = DensityMatrix::from_unchecked(rho.clone());
        Ok(TraceSample {
            t,
            m: self.magnetization(&state)?,
        })
    }

    fn noisy_unitary(&self, pieces: &[Piece], ou: &mut OuState) -> Result<CMatrix> {
        let dim = self.h_static.nrows();
        let noise = &self.cfg.noise;
        let mut u = linalg::identity(dim);
        for p in pieces {
            match p {
                Piece::Free(d) => {
                    u = self.free_propagator(*d) * u;
                    ou.advance(*d, noise);
                }
                Piece::Detection(d) => ou.advance(*d, noise),
                Piece::Rotate(rots) => {
                    for &(s, angle, phase) in rots {
                        let scale = 1.0 + ou.value(s);
                        u = self.rotation(s, angle * scale, phase) * u;
                    }
                }
                Piece::Driven { t0, duration, drives } => {
                    let n_sub = (duration / self.max_substep(drives)).ceil().max(1.0) as usize;
                    let h_sub = duration / n_sub as f64;
                    for j in 0..n_sub {
                        let t_mid = t0 + (j as f64 + 0.5) * h_sub;
                        let mut h = self.h_static.clone();
                        for d in drives {
                            let scale = 1.0 + ou.value(d.species);
                            h += self.drive_operator(d, scale);
                            if noise.cross_talk_enabled {
                                h += self.cross_talk_operator(d, scale, t_mid);
                            }
                        }
                        u = linalg::expm_hermitian(&h, h_sub) * u;
                        ou.advance(h_sub, noise);
                    }
                }
            }
        }
        check_unitary(&u)?;
        Ok(u)
    }

    pub fn molecule(&self) -> &Molecule {
        self.molecule
    }
}

fn detection_start(events: &[Event]) -> f64 {
    events
        .iter()
        .find_map(|e| match e {
            Event::Detection { start, .. } => Some(*start),
            _ => None,
        })
        .unwrap_or_else(|| events.last().map(|e| e.start() + e.duration()).unwrap_or(0.0))
}

fn check_unitary(u: &CMatrix) -> Result<()> {
    let r = linalg::unitarity_residual(u);
    if r > 1e-9 || !r.is_finite() {
        return Err(Error::Numerical(format!(
            "propagator lost unitarity (residual {r:.2e})"
        )));
    }
    Ok(())
}

/// OU amplitude errors, one shared channel or one per species. Starts stationary.
struct OuState {
    enabled: bool,
    shared: bool,
    x: Vec<f64>,
    rng: rand_chacha::ChaCha20Rng,
}

impl OuState {
    fn new(noise: &NoiseConfig, n_species: usize) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(noise.rng_seed);
        let shared = noise.channel == OuChannel::Shared;
        let n = if shared { 1 } else { n_species };
        let x = (0..n)
            .map(|_| {
                if noise.ou_enabled {
                    noise.ou_relative_sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            enabled: noise.ou_enabled,
            shared,
            x,
            rng,
        }
    }

    fn value(&self, species: usize) -> f64 {
        if self.shared {
            self.x[0]
        } else {
            self.x[species]
        }
    }

    fn advance(&mut self, dt: f64, noise: &NoiseConfig) {
        if !self.enabled || dt <= 0.0 {
            return;
        }
        for v in &mut self.x {
            *v = ou_step(*v, dt, noise, &mut self.rng);
        }
    }
}

/// Convenience wrapper around [`Engine::propagate`].
pub fn propagate(
    rho0: &DensityMatrix,
    schedule: &Schedule,
    molecule: &Molecule,
    cfg: &EngineConfig,
) -> Result<Propagation> {
    Engine::new(molecule, cfg.clone())?.propagate(rho0, schedule)
}
