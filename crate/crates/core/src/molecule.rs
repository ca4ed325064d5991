//! Molecule description and Hamiltonian assembly in the rotating frame.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spin::{self, Axis, OperatorMatrix};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Nuclear species label, e.g. `H`, `C13`, `F19`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Species(String);

impl Species {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    /// The emitting species of the protocol.
    pub fn hydrogen() -> Self {
        Self::new("H")
    }

    pub fn is_hydrogen(&self) -> bool {
        self.0 == "H"
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    pub label: String,
    pub species: Species,
    /// Gyromagnetic ratio (rad·s⁻¹·T⁻¹).
    pub gamma: f64,
    /// Chemical shift in the rotating frame (rad/s).
    pub shift: f64,
    /// Nuclei sharing a group are magnetically equivalent.
    pub equivalence_group: Option<String>,
}

/// Nuclei plus a symmetric J-coupling matrix (rad/s) with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    name: String,
    nuclei: Vec<Nucleus>,
    j: DMatrix<f64>,
}

impl Molecule {
    pub fn new(name: impl Into<String>, nuclei: Vec<Nucleus>, j: DMatrix<f64>) -> Result<Self> {
        let n = nuclei.len();
        if n == 0 || n > spin::MAX_SITES {
            return Err(Error::TooManySites(n));
        }
        if j.nrows() != n || j.ncols() != n {
            return Err(Error::InvalidMolecule(format!(
                "coupling matrix is {}x{} for {n} nuclei",
                j.nrows(),
                j.ncols()
            )));
        }
        for i in 0..n {
            if j[(i, i)] != 0.0 {
                return Err(Error::InvalidMolecule(format!(
                    "nonzero self-coupling on `{}`",
                    nuclei[i].label
                )));
            }
            for k in (i + 1)..n {
                if (j[(i, k)] - j[(k, i)]).abs() > 1e-12 * j[(i, k)].abs().max(1.0) {
                    return Err(Error::InvalidMolecule(format!(
                        "coupling matrix not symmetric at ({i}, {k})"
                    )));
                }
            }
        }
        let mut labels = BTreeSet::new();
        for nuc in &nuclei {
            if nuc.gamma == 0.0 || !nuc.gamma.is_finite() {
                return Err(Error::InvalidMolecule(format!("`{}` has zero gamma", nuc.label)));
            }
            if !labels.insert(nuc.label.clone()) {
                return Err(Error::InvalidMolecule(format!("duplicate label `{}`", nuc.label)));
            }
        }
        for a in &nuclei {
            for b in &nuclei {
                if let (Some(ga), Some(gb)) = (&a.equivalence_group, &b.equivalence_group) {
                    if ga == gb && (a.species != b.species || a.shift != b.shift) {
                        return Err(Error::InvalidMolecule(format!(
                            "`{}` and `{}` share group `{ga}` but differ in species or shift",
                            a.label, b.label
                        )));
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            nuclei,
            j,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nuclei(&self) -> &[Nucleus] {
        &self.nuclei
    }

    pub fn n_sites(&self) -> usize {
        self.nuclei.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.nuclei.len()
    }

    pub fn coupling(&self, a: usize, b: usize) -> f64 {
        self.j[(a, b)]
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.nuclei
            .iter()
            .position(|n| n.label == label)
            .ok_or_else(|| Error::UnknownNucleus(label.to_string()))
    }

    pub fn has_species(&self, species: &Species) -> bool {
        self.nuclei.iter().any(|n| &n.species == species)
    }

    /// Distinct species in order of first appearance.
    pub fn species(&self) -> Vec<Species> {
        let mut out: Vec<Species> = Vec::new();
        for n in &self.nuclei {
            if !out.contains(&n.species) {
                out.push(n.species.clone());
            }
        }
        out
    }

    pub fn sites_of(&self, species: &Species) -> Vec<usize> {
        (0..self.nuclei.len())
            .filter(|&i| &self.nuclei[i].species == species)
            .collect()
    }

    pub fn hydrogen_sites(&self) -> Vec<usize> {
        self.sites_of(&Species::hydrogen())
    }

    pub fn gamma_of(&self, species: &Species) -> Result<f64> {
        self.nuclei
            .iter()
            .find(|n| &n.species == species)
            .map(|n| n.gamma)
            .ok_or_else(|| Error::UnknownSpecies(species.to_string()))
    }

    /// True when `a` and `b` are distinct nuclei of the same equivalence group.
    pub fn equivalent(&self, a: usize, b: usize) -> bool {
        a != b
            && matches!(
                (&self.nuclei[a].equivalence_group, &self.nuclei[b].equivalence_group),
                (Some(x), Some(y)) if x == y
            )
    }

    /// Group key of a nucleus: its equivalence group, or its own label.
    pub fn group_key(&self, i: usize) -> String {
        self.nuclei[i]
            .equivalence_group
            .clone()
            .unwrap_or_else(|| self.nuclei[i].label.clone())
    }

    /// Copy with coupling `a`–`b` set to `j` (rad/s).
    pub fn with_coupling(&self, a: usize, b: usize, j: f64) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidMolecule("self-coupling".into()));
        }
        let mut m = self.clone();
        m.j[(a, b)] = j;
        m.j[(b, a)] = j;
        Ok(m)
    }

    /// Copy with every coupling between the two groups set to `j` (rad/s).
    pub fn with_group_coupling(&self, group_a: &str, group_b: &str, j: f64) -> Result<Self> {
        let mut m = self.clone();
        let mut touched = false;
        for a in 0..self.n_sites() {
            for b in 0..self.n_sites() {
                if a != b && self.group_key(a) == group_a && self.group_key(b) == group_b {
                    m.j[(a, b)] = j;
                    m.j[(b, a)] = j;
                    touched = true;
                }
            }
        }
        if !touched {
            return Err(Error::UnknownNucleus(format!("{group_a}/{group_b}")));
        }
        Ok(m)
    }

    /// Copy with every chemical shift multiplied by `k`.
    pub fn with_scaled_shifts(&self, k: f64) -> Self {
        let mut m = self.clone();
        for n in &mut m.nuclei {
            n.shift *= k;
        }
        m
    }

    pub fn with_shift(&self, site: usize, shift: f64) -> Self {
        let mut m = self.clone();
        m.nuclei[site].shift = shift;
        m
    }

    pub fn from_file(file: &MoleculeFile) -> Result<Self> {
        let nuclei: Vec<Nucleus> = file
            .nuclei
            .iter()
            .map(|n| Nucleus {
                label: n.label.clone(),
                species: Species::new(n.species.clone()),
                gamma: TWO_PI * n.gamma_mhz_per_t * 1e6,
                shift: TWO_PI * n.shift_hz,
                equivalence_group: n.group.clone(),
            })
            .collect();
        let n = nuclei.len();
        let mut j = DMatrix::zeros(n, n);
        let index = |label: &str| {
            nuclei
                .iter()
                .position(|x| x.label == label)
                .ok_or_else(|| Error::UnknownNucleus(label.to_string()))
        };
        for cpl in &file.couplings {
            let (a, b) = (index(&cpl.a)?, index(&cpl.b)?);
            if a == b {
                return Err(Error::InvalidMolecule(format!("self-coupling on `{}`", cpl.a)));
            }
            j[(a, b)] = TWO_PI * cpl.j_hz;
            j[(b, a)] = TWO_PI * cpl.j_hz;
        }
        Self::new(file.name.clone(), nuclei, j)
    }

    pub fn to_file(&self) -> MoleculeFile {
        let mut couplings = Vec::new();
        for a in 0..self.n_sites() {
            for b in (a + 1)..self.n_sites() {
                if self.j[(a, b)] != 0.0 {
                    couplings.push(CouplingEntry {
                        a: self.nuclei[a].label.clone(),
                        b: self.nuclei[b].label.clone(),
                        j_hz: self.j[(a, b)] / TWO_PI,
                    });
                }
            }
        }
        MoleculeFile {
            name: self.name.clone(),
            nuclei: self
                .nuclei
                .iter()
                .map(|n| NucleusEntry {
                    label: n.label.clone(),
                    species: n.species.to_string(),
                    gamma_mhz_per_t: n.gamma / TWO_PI / 1e6,
                    shift_hz: n.shift / TWO_PI,
                    group: n.equivalence_group.clone(),
                })
                .collect(),
            couplings,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: MoleculeFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }
}

/// On-disk molecule description: gammas in MHz/T, shifts and couplings in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeFile {
    pub name: String,
    pub nuclei: Vec<NucleusEntry>,
    #[serde(default)]
    pub couplings: Vec<CouplingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusEntry {
    pub label: String,
    pub species: String,
    pub gamma_mhz_per_t: f64,
    #[serde(default)]
    pub shift_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub a: String,
    pub b: String,
    pub j_hz: f64,
}

/// How same-species couplings enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// Full S_i·S_j for same-species pairs, ZZ across species.
    FullDotHomonuclear,
    /// Every coupling truncated to ZZ.
    ZzAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianModel {
    pub coupling_form: CouplingForm,
    pub heteronuclear: bool,
    pub shifts: bool,
}

impl HamiltonianModel {
    /// Shifts, full homonuclear dot products and ZZ heteronuclear terms.
    pub fn reference() -> Self {
        Self {
            coupling_form: CouplingForm::FullDotHomonuclear,
            heteronuclear: true,
            shifts: true,
        }
    }

    pub fn zz_all() -> Self {
        Self {
            coupling_form: CouplingForm::ZzAll,
            heteronuclear: true,
            shifts: true,
        }
    }

    pub fn without_shifts(mut self) -> Self {
        self.shifts = false;
        self
    }
}

impl Default for HamiltonianModel {
    fn default() -> Self {
        Self::reference()
    }
}

/// Rotating-frame Hamiltonian (rad/s) of `molecule` under `model`.
pub fn simulation_hamiltonian(molecule: &Molecule, model: &HamiltonianModel) -> OperatorMatrix {
    let n = molecule.n_sites();
    let dim = molecule.dim();
    let ops: Vec<[OperatorMatrix; 3]> = (0..n)
        .map(|s| [Axis::X, Axis::Y, Axis::Z].map(|a| spin::site_operator(n, s, a).expect("site within molecule")))
        .collect();

    let mut h = CMatrix::zeros(dim, dim);
    if model.shifts {
        for (s, nuc) in molecule.nuclei().iter().enumerate() {
            h += ops[s][2].entries() * linalg::c(nuc.shift);
        }
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let j = molecule.coupling(a, b);
            if j == 0.0 {
                continue;
            }
            let same = molecule.nuclei()[a].species == molecule.nuclei()[b].species;
            if !same && !model.heteronuclear {
                continue;
            }
            let full = same && model.coupling_form == CouplingForm::FullDotHomonuclear;
            let axes: &[usize] = if full { &[0, 1, 2] } else { &[2] };
            for &k in axes {
                h += (ops[a][k].entries() * ops[b][k].entries()) * linalg::c(j);
            }
        }
    }
    OperatorMatrix::from_parts(h, true)
}

/// Diagonal ZZ energies Σ J_ab m_a m_b over the selected pairs.
fn zz_diagonal(molecule: &Molecule, include: impl Fn(usize, usize) -> bool) -> Vec<f64> {
    let n = molecule.n_sites();
    let dim = molecule.dim();
    let m = |k: usize, s: usize| if (k >> (n - 1 - s)) & 1 == 1 { -0.5 } else { 0.5 };
    (0..dim)
        .map(|k| {
            let mut e = 0.0;
            for a in 0..n {
                for b in (a + 1)..n {
                    let j = molecule.coupling(a, b);
                    if j != 0.0 && include(a, b) {
                        e += j * m(k, a) * m(k, b);
                    }
                }
            }
            e
        })
        .collect()
}

fn is_h(molecule: &Molecule, i: usize) -> bool {
    molecule.nuclei()[i].species.is_hydrogen()
}

/// Effective encoding propagator with π-pulses on hydrogen only:
/// exp[−i t Σ J_ij S_i^z S_j^z] over non-equivalent H–H pairs.
pub fn encoding_propagator_homo(molecule: &Molecule, t: f64) -> Result<OperatorMatrix> {
    encoding_propagator_hetero(molecule, t, &[Species::hydrogen()])
}

/// Effective encoding propagator with synchronized π-pulses on `targeted`
/// species; heteronuclear ZZ terms enter only for targeted partners of H.
pub fn encoding_propagator_hetero(molecule: &Molecule, t: f64, targeted: &[Species]) -> Result<OperatorMatrix> {
    if !targeted.iter().any(Species::is_hydrogen) {
        return Err(Error::InvalidParameter("targeted species must include H".into()));
    }
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("negative time {t}")));
    }
    let diag = encoding_diagonal(molecule, targeted);
    Ok(OperatorMatrix::from_parts(linalg::expm_diagonal(&diag, t), false))
}

/// Diagonal of the effective ZZ encoding Hamiltonian.
pub fn encoding_diagonal(molecule: &Molecule, targeted: &[Species]) -> Vec<f64> {
    zz_diagonal(molecule, |a, b| {
        let (ha, hb) = (is_h(molecule, a), is_h(molecule, b));
        if ha && hb {
            !molecule.equivalent(a, b)
        } else if ha || hb {
            let other = if ha { b } else { a };
            targeted.contains(&molecule.nuclei()[other].species)
        } else {
            false
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::spin::{collective_operator, expectation, DensityMatrix};

    fn two_protons(j_hz: f64) -> Molecule {
        let gamma = TWO_PI * presets::GAMMA_H_MHZ * 1e6;
        let nuc = |l: &str, shift: f64| Nucleus {
            label: l.into(),
            species: Species::hydrogen(),
            gamma,
            shift,
            equivalence_group: None,
        };
        let mut j = DMatrix::zeros(2, 2);
        j[(0, 1)] = TWO_PI * j_hz;
        j[(1, 0)] = TWO_PI * j_hz;
        Molecule::new("pair", vec![nuc("H1", 0.0), nuc("H2", 0.0)], j).unwrap()
    }

    #[test]
    fn fluoromethanol_hamiltonian_is_hermitian_and_traceless() {
        let mol = presets::fluoromethanol();
        let h = simulation_hamiltonian(&mol, &HamiltonianModel::reference());
        assert_eq!(h.dim(), 32);
        assert!(linalg::hermitian_residual(h.entries()) < 1e-12);
        assert!(h.entries().trace().norm() < 1e-9);
    }

    #[test]
    fn dot_product_pair_spectrum() {
        let j = TWO_PI * 8.0;
        let mol = two_protons(8.0);
        let h = simulation_hamiltonian(&mol, &HamiltonianModel::reference());
        // Brute-force oracle: build J S1·S2 from explicit 2x2 matrices and diagonalize.
        let half = |m: [f64; 8]| {
            CMatrix::from_row_slice(
                2,
                2,
                &[
                    linalg::C64::new(m[0], m[1]),
                    linalg::C64::new(m[2], m[3]),
                    linalg::C64::new(m[4], m[5]),
                    linalg::C64::new(m[6], m[7]),
                ],
            )
            .scale(0.5)
        };
        let sx = half([0., 0., 1., 0., 1., 0., 0., 0.]);
        let sy = half([0., 0., 0., -1., 0., 1., 0., 0.]);
        let sz = half([1., 0., 0., 0., 0., 0., -1., 0.]);
        let dot = linalg::kron(&sx, &sx) + linalg::kron(&sy, &sy) + linalg::kron(&sz, &sz);
        let brute = linalg::hermitian_eigenvalues(&dot.scale(j));
        let ev = linalg::hermitian_eigenvalues(h.entries());
        let expected = [-0.75 * j, 0.25 * j, 0.25 * j, 0.25 * j];
        for k in 0..4 {
            assert!((ev[k] - expected[k]).abs() < 1e-9, "{ev:?}");
            assert!((brute[k] - expected[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn zz_pair_spectrum() {
        let j = TWO_PI * 8.0;
        let mol = two_protons(8.0);
        let h = simulation_hamiltonian(&mol, &HamiltonianModel::zz_all());
        let ev = linalg::hermitian_eigenvalues(h.entries());
        let expected = [-0.25 * j, -0.25 * j, 0.25 * j, 0.25 * j];
        for k in 0..4 {
            assert!((ev[k] - expected[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn zz_model_commutes_with_species_sz() {
        let mol = presets::fluoromethanol();
        let h = simulation_hamiltonian(&mol, &HamiltonianModel::zz_all());
        for sp in mol.species() {
            let total = collective_operator(mol.n_sites(), &mol.sites_of(&sp), Axis::Z).unwrap();
            let comm = h.commutator(&total);
            assert!(linalg::frobenius_norm(&comm) < 1e-12);
        }
    }

    #[test]
    fn encoding_propagator_identity_and_unitarity() {
        let mol = presets::fluoromethanol();
        let u0 = encoding_propagator_homo(&mol, 0.0).unwrap();
        assert!(linalg::max_abs_diff(u0.entries(), &linalg::identity(32)) < 1e-15);
        let u = encoding_propagator_homo(&mol, 1.0).unwrap();
        assert!(linalg::unitarity_residual(u.entries()) < 1e-12);
        let uh = encoding_propagator_hetero(&mol, 0.0, &[Species::hydrogen(), Species::new("C13")]).unwrap();
        assert!(linalg::max_abs_diff(uh.entries(), &linalg::identity(32)) < 1e-15);
    }

    #[test]
    fn hetero_with_only_hydrogen_equals_homo() {
        let mol = presets::fluoromethanol();
        let a = encoding_propagator_homo(&mol, 0.37).unwrap();
        let b = encoding_propagator_hetero(&mol, 0.37, &[Species::hydrogen()]).unwrap();
        assert!(linalg::max_abs_diff(a.entries(), b.entries()) < 1e-15);
    }

    #[test]
    fn hetero_requires_hydrogen() {
        let mol = presets::fluoromethanol();
        assert!(encoding_propagator_hetero(&mol, 0.1, &[Species::new("C13")]).is_err());
    }

    #[test]
    fn hetero_case1_has_no_fluorine_terms() {
        let mol = presets::fluoromethanol();
        let targeted = [Species::hydrogen(), Species::new("C13")];
        let u = encoding_propagator_hetero(&mol, 0.011, &targeted).unwrap();
        let f_site = mol.sites_of(&Species::new("F19"));
        let pz = collective_operator(mol.n_sites(), &f_site, Axis::Z).unwrap();
        assert!(linalg::frobenius_norm(&u.commutator(&pz)) < 1e-12);
        // Removing every F coupling leaves the propagator unchanged.
        let f = f_site[0];
        let mut no_f = mol.clone();
        for k in 0..mol.n_sites() {
            if k != f {
                no_f = no_f.with_coupling(k, f, 0.0).unwrap();
            }
        }
        let u2 = encoding_propagator_hetero(&no_f, 0.011, &targeted).unwrap();
        assert!(linalg::max_abs_diff(u.entries(), u2.entries()) < 1e-14);
    }

    #[test]
    fn hetero_all_targeted_matches_zz_exponential() {
        // No intra-group coupling in the preset, so the H-involving ZZ Hamiltonian
        // is exactly the encoding generator.
        let mol = presets::fluoromethanol();
        let targeted = mol.species();
        let t = 0.0123;
        let u = encoding_propagator_hetero(&mol, t, &targeted).unwrap();
        let n = mol.n_sites();
        let mut h = CMatrix::zeros(32, 32);
        for a in 0..n {
            for b in (a + 1)..n {
                if !(is_h(&mol, a) || is_h(&mol, b)) {
                    continue;
                }
                let za = spin::site_operator(n, a, Axis::Z).unwrap();
                let zb = spin::site_operator(n, b, Axis::Z).unwrap();
                h += za.entries() * zb.entries() * linalg::c(mol.coupling(a, b));
            }
        }
        let brute = linalg::expm_hermitian(&h, t);
        assert!(linalg::frobenius_norm(&(u.entries() - brute)) < 1e-10);
    }

    #[test]
    fn case1_propagator_matches_closed_form() {
        // Fully x-polarized H, other nuclei maximally mixed: Σ⟨S^x⟩ follows the
        // product-of-cosines expression.
        let mol = presets::fluoromethanol();
        let targeted = [Species::hydrogen(), Species::new("C13")];
        let half =
            |m: f64| CMatrix::from_row_slice(2, 2, &[linalg::c(0.5), linalg::c(m), linalg::c(m), linalg::c(0.5)]);
        let sites: Vec<CMatrix> = mol
            .nuclei()
            .iter()
            .map(|n| if n.species.is_hydrogen() { half(0.5) } else { half(0.0) })
            .collect();
        let rho0 = DensityMatrix::product(&sites).unwrap();
        let sx = collective_operator(5, &mol.hydrogen_sites(), Axis::X).unwrap();
        let (j, j1, j2) = (TWO_PI * 8.0, TWO_PI * 130.0, TWO_PI * 6.0);
        for &t in &[0.0, 1.0 / (2.0 * 8.0), 0.0173, 0.31] {
            let u = encoding_propagator_hetero(&mol, t, &targeted).unwrap();
            let v = expectation(&rho0.evolve(u.entries()), &sx).unwrap();
            let closed =
                0.5 * (j * t / 2.0).cos() * (2.0 * (j1 * t / 2.0).cos() + (j * t / 2.0).cos() * (j2 * t / 2.0).cos());
            assert!((v - closed).abs() < 1e-12, "t={t}: {v} vs {closed}");
        }
    }

    #[test]
    fn molecule_file_round_trip_and_units() {
        let mol = presets::fluoromethanol();
        let file = mol.to_file();
        let json = serde_json::to_string(&file).unwrap();
        let back = Molecule::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.n_sites(), 5);
        let (a, b) = (back.index_of("Ha1").unwrap(), back.index_of("Hb").unwrap());
        assert!((back.coupling(a, b) - TWO_PI * 8.0).abs() < 1e-9);
    }

    #[test]
    fn molecule_file_rejects_unknown_keys() {
        let json = r#"{"name":"x","nuclei":[{"label":"H1","species":"H","gamma_mhz_per_t":42.577,"shfit_hz":1.0}]}"#;
        assert!(serde_json::from_str::<MoleculeFile>(json).is_err());
    }

    #[test]
    fn invalid_molecules_are_rejected() {
        let mut file = presets::fluoromethanol().to_file();
        file.nuclei[1].shift_hz = 1.0; // breaks the Ha group
        assert!(Molecule::from_file(&file).is_err());
        let mut file = presets::fluoromethanol().to_file();
        file.couplings.push(CouplingEntry {
            a: "Ha1".into(),
            b: "Zz".into(),
            j_hz: 1.0,
        });
        assert!(matches!(Molecule::from_file(&file), Err(Error::UnknownNucleus(_))));
    }
}
