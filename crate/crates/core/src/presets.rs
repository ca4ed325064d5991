//! Bundled molecule and protocol presets.

use nalgebra::DMatrix;

use crate::molecule::{Molecule, Nucleus, Species, TWO_PI};
use crate::readout::{PhotonModel, PhotonNoise};
use crate::sequence::{Alignment, HPulse, ProtocolConfig, ProtocolMode};

/// Gyromagnetic ratios in MHz/T.
pub const GAMMA_H_MHZ: f64 = 42.577;
pub const GAMMA_C13_MHZ: f64 = 10.7084;
pub const GAMMA_F19_MHZ: f64 = 40.052;

pub const RABI_H_HZ: f64 = 50e3;
pub const B_EXT: f64 = 2.0;
pub const TEMPERATURE: f64 = 300.0;
pub const T2: f64 = 0.6;

fn gamma(mhz_per_t: f64) -> f64 {
    TWO_PI * mhz_per_t * 1e6
}

/// CH2F-OH-like spin system: two equivalent protons Ha, one proton Hb, one
/// carbon-13 and one fluorine-19. Couplings and shifts in Hz.
pub fn fluoromethanol() -> Molecule {
    fluoromethanol_with(8.0, 130.0, 6.0, 80.0, 4.0)
}

/// Fluoromethanol with the H–H, Ha–C, Hb–C, Ha–F and Hb–F couplings (Hz) replaced.
pub fn fluoromethanol_with(j: f64, j1: f64, j2: f64, j1f: f64, j2f: f64) -> Molecule {
    let nuc = |label: &str, species: &str, g: f64, shift_hz: f64, group: Option<&str>| Nucleus {
        label: label.into(),
        species: Species::new(species),
        gamma: gamma(g),
        shift: TWO_PI * shift_hz,
        equivalence_group: group.map(str::to_string),
    };
    let nuclei = vec![
        nuc("Ha1", "H", GAMMA_H_MHZ, 512.0, Some("Ha")),
        nuc("Ha2", "H", GAMMA_H_MHZ, 512.0, Some("Ha")),
        nuc("Hb", "H", GAMMA_H_MHZ, 236.0, None),
        nuc("C", "C13", GAMMA_C13_MHZ, 85.0, None),
        nuc("F", "F19", GAMMA_F19_MHZ, 450.0, None),
    ];
    let mut m = DMatrix::zeros(5, 5);
    let mut set = |a: usize, b: usize, hz: f64| {
        m[(a, b)] = TWO_PI * hz;
        m[(b, a)] = TWO_PI * hz;
    };
    for ha in [0, 1] {
        set(ha, 2, j);
        set(ha, 3, j1);
        set(ha, 4, j1f);
    }
    set(2, 3, j2);
    set(2, 4, j2f);
    set(3, 4, 160.0);
    Molecule::new("fluoromethanol", nuclei, m).expect("preset is valid")
}

/// One uncoupled nucleus per `(species, gamma MHz/T)` entry, zero shifts.
pub fn single_species_molecule(entries: &[(&str, f64)]) -> Molecule {
    let nuclei = entries
        .iter()
        .enumerate()
        .map(|(k, (sp, g))| Nucleus {
            label: format!("{sp}{k}"),
            species: Species::new(*sp),
            gamma: gamma(*g),
            shift: 0.0,
            equivalence_group: None,
        })
        .collect::<Vec<_>>();
    let n = nuclei.len();
    Molecule::new("single", nuclei, DMatrix::zeros(n, n)).expect("preset is valid")
}

/// Two protons with shifts `d1`, `d2` and coupling `j` (all Hz).
pub fn proton_pair(d1: f64, d2: f64, j: f64) -> Molecule {
    let nuc = |label: &str, d: f64| Nucleus {
        label: label.into(),
        species: Species::hydrogen(),
        gamma: gamma(GAMMA_H_MHZ),
        shift: TWO_PI * d,
        equivalence_group: None,
    };
    let mut m = DMatrix::zeros(2, 2);
    m[(0, 1)] = TWO_PI * j;
    m[(1, 0)] = TWO_PI * j;
    Molecule::new("proton-pair", vec![nuc("H1", d1), nuc("H2", d2)], m).expect("preset is valid")
}

/// Encoding time chosen so that the Ha–Hb shift difference is sampled above
/// 1.2 cycles per stage.
pub fn standard_tau() -> f64 {
    1.2 / (512.0 - 236.0)
}

fn base_protocol(targeted: &[&str]) -> ProtocolConfig {
    ProtocolConfig {
        tau: standard_tau(),
        n_stages: 600,
        rabi_hz: RABI_H_HZ,
        targeted_species: targeted.iter().map(|s| Species::new(*s)).collect(),
        mode: ProtocolMode::Standard,
        b_ext: B_EXT,
        temperature: TEMPERATURE,
        t2: T2,
        alignment: Alignment::Midpoint,
        h_pulse: HPulse::Corpse,
    }
}

/// H and C13 targeted.
pub fn case1() -> ProtocolConfig {
    base_protocol(&["H", "C13"])
}

/// H, C13 and F19 targeted.
pub fn case2() -> ProtocolConfig {
    base_protocol(&["H", "C13", "F19"])
}

/// Short-τ variant with the extra phase-alternated π pair.
pub fn fast() -> ProtocolConfig {
    ProtocolConfig {
        tau: 75e-6,
        n_stages: 6553,
        mode: ProtocolMode::Fast,
        ..case1()
    }
}

/// Readout with 2.5e8 NVs, 7% contrast and 0.016 photons per shot.
pub fn photon_model(n_reps: u64) -> PhotonModel {
    PhotonModel {
        n0: 0.016,
        contrast: 0.07,
        n_nv: 2.5e8,
        n_reps,
        noise: PhotonNoise::Gaussian,
    }
}

pub const SNR_REPS: u64 = 18_000;
pub const FIGURE_REPS: u64 = 1_000;
