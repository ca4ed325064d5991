//! Fixtures shared by the criterion benches.

use jcoupling_core::linalg::{c, CMatrix};
use jcoupling_core::molecule::simulation_hamiltonian;
use jcoupling_core::{presets, HamiltonianModel, Molecule};

pub fn molecule() -> Molecule {
    presets::fluoromethanol()
}

/// Static Hamiltonian of the benchmark molecule with a transverse term added,
/// so it is not diagonal.
pub fn dense_hamiltonian() -> CMatrix {
    let mol = molecule();
    let h = simulation_hamiltonian(&mol, &HamiltonianModel::reference()).into_entries();
    let n = h.nrows();
    h + CMatrix::from_fn(n, n, |i, j| if i ^ j == 1 { c(2.0e3) } else { c(0.0) })
}
