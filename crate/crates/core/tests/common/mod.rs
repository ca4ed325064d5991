#![allow(dead_code)]

use jcoupling_core::molecule::TWO_PI;
use jcoupling_core::presets::{GAMMA_C13_MHZ, GAMMA_F19_MHZ, GAMMA_H_MHZ};
use jcoupling_core::{Molecule, Nucleus, Species};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Raw draw for a random molecule: site 0 is always hydrogen.
#[derive(Debug, Clone)]
pub struct MoleculeDraw {
    pub species: Vec<usize>,
    pub shifts_hz: Vec<f64>,
    pub couplings_hz: Vec<f64>,
    /// Make sites 0 and 1 a magnetically equivalent pair when both are H.
    pub pair: bool,
    pub targeted: Vec<bool>,
}

const SPECIES: [(&str, f64); 3] = [("H", GAMMA_H_MHZ), ("C13", GAMMA_C13_MHZ), ("F19", GAMMA_F19_MHZ)];

pub fn draw(max_sites: usize) -> impl Strategy<Value = MoleculeDraw> {
    (2..=max_sites).prop_flat_map(|n| {
        (
            proptest::collection::vec(prop_oneof![2 => Just(0usize), 1 => Just(1), 1 => Just(2)], n - 1),
            proptest::collection::vec(0.0f64..1000.0, n),
            proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => -200.0f64..200.0], n * (n - 1) / 2),
            any::<bool>(),
            proptest::collection::vec(any::<bool>(), 2),
        )
            .prop_map(|(rest, shifts_hz, couplings_hz, pair, targeted)| {
                let mut species = vec![0];
                species.extend(rest);
                MoleculeDraw {
                    species,
                    shifts_hz,
                    couplings_hz,
                    pair,
                    targeted,
                }
            })
    })
}

impl MoleculeDraw {
    pub fn n(&self) -> usize {
        self.species.len()
    }

    fn pair_active(&self) -> bool {
        self.pair && self.species[1] == 0
    }

    fn j_hz(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let n = self.n();
        // Equivalent partners share their couplings to everyone else.
        if self.pair_active() && a == 1 && b > 1 {
            return self.j_hz(0, b);
        }
        let idx = a * (2 * n - a - 1) / 2 + (b - a - 1);
        self.couplings_hz[idx]
    }

    pub fn molecule(&self) -> Molecule {
        let n = self.n();
        let nuclei = (0..n)
            .map(|i| {
                let (sp, g) = SPECIES[self.species[i]];
                let equivalent = self.pair_active() && i < 2;
                let shift = if equivalent {
                    self.shifts_hz[0]
                } else {
                    self.shifts_hz[i]
                };
                Nucleus {
                    label: format!("{sp}{i}"),
                    species: Species::new(sp),
                    gamma: TWO_PI * g * 1e6,
                    shift: TWO_PI * shift,
                    equivalence_group: equivalent.then(|| "G".to_string()),
                }
            })
            .collect();
        let j = DMatrix::from_fn(n, n, |a, b| if a == b { 0.0 } else { TWO_PI * self.j_hz(a, b) });
        Molecule::new("random", nuclei, j).unwrap()
    }

    /// H plus whichever heteronuclear species the draw switched on.
    pub fn targeted(&self) -> Vec<Species> {
        let mut out = vec![Species::hydrogen()];
        for (k, name) in ["C13", "F19"].iter().enumerate() {
            if self.targeted[k] {
                out.push(Species::new(*name));
            }
        }
        out
    }
}
