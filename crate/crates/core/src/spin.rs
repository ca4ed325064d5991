//! Spin-1/2 operators, density matrices and thermal states on the 2^N product space.
//!
//! Site 0 is the leftmost factor of the Kronecker product, so for two sites the
//! basis is |↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩ and spin-up carries S^z = +1/2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64};
use crate::molecule::{Molecule, Species};

pub const MAX_SITES: usize = 12;

/// Reduced Planck constant as used by the thermal-polarization and field formulas (J·s).
pub const HBAR: f64 = 1.054e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.38e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A dense operator on the spin product space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: CMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_dim(entries.nrows())?;
        if entries.ncols() != entries.nrows() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        Ok(Self {
            entries,
            hermitian: false,
        })
    }

    /// Wraps a matrix asserted to be Hermitian; the assertion is checked to 1e-12.
    pub fn hermitian(entries: CMatrix) -> Result<Self> {
        let mut op = Self::new(entries)?;
        let residual = linalg::hermitian_residual(&op.entries);
        if residual > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "operator flagged Hermitian has residual {residual:e}"
            )));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub(crate) fn from_parts(entries: CMatrix, hermitian: bool) -> Self {
        Self { entries, hermitian }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_parts(CMatrix::zeros(dim, dim), true)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::from_parts(self.entries.map(|z| z * k), self.hermitian)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_parts(&self.entries + &other.entries, self.hermitian && other.hermitian)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_parts(&self.entries * &other.entries, false)
    }

    pub fn commutator(&self, other: &Self) -> CMatrix {
        linalg::commutator(&self.entries, &other.entries)
    }

    /// Real part of the diagonal, for operators known to be diagonal.
    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.entries[(k, k)].re).collect()
    }
}

/// A density matrix: unit trace, Hermitian, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_dim(entries.nrows())?;
        let tr = entries.trace();
        if (tr - c(1.0)).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let herm = linalg::hermitian_residual(&entries);
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("Hermitian residual {herm:e}")));
        }
        let min_ev = linalg::hermitian_eigenvalues(&entries)[0];
        if min_ev < -1e-10 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(Self { entries })
    }

    /// Skips validation; used for states produced by unitary evolution of a valid state.
    pub(crate) fn from_unchecked(entries: CMatrix) -> Self {
        Self { entries }
    }

    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        let dim = check_sites(n_sites)?;
        Ok(Self {
            entries: CMatrix::identity(dim, dim).map(|z| z / dim as f64),
        })
    }

    /// The pure product state with every spin up.
    pub fn all_up(n_sites: usize) -> Result<Self> {
        let dim = check_sites(n_sites)?;
        let mut m = CMatrix::zeros(dim, dim);
        m[(0, 0)] = c(1.0);
        Ok(Self { entries: m })
    }

    /// Product of single-site 2×2 density matrices, site 0 leftmost.
    pub fn product(sites: &[CMatrix]) -> Result<Self> {
        check_sites(sites.len())?;
        let mut acc = CMatrix::identity(1, 1);
        for s in sites {
            acc = linalg::kron(&acc, s);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.entries, &self.entries)
            .map(|z| z.re)
            .unwrap_or(f64::NAN)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.entries)
    }

    /// `u ρ u†`.
    pub fn evolve(&self, u: &CMatrix) -> Self {
        Self::from_unchecked(linalg::conjugate(u, &self.entries))
    }
}

/// Magnetic field and temperature of the thermal initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// External field (T).
    pub b_ext: f64,
    /// Sample temperature (K).
    pub temperature: f64,
}

impl ThermalParams {
    pub fn new(b_ext: f64, temperature: f64) -> Result<Self> {
        let p = Self { b_ext, temperature };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_ext > 0.0 && self.b_ext.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "B_ext must be > 0, got {}",
                self.b_ext
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            b_ext: 2.0,
            temperature: 300.0,
        }
    }
}

/// Thermal polarization factor ħγB/(k_B T) for gyromagnetic ratio `gamma` (rad·s⁻¹·T⁻¹).
///
/// The field is not range-checked here so that the B → 0 limit is available.
pub fn thermal_polarization(gamma: f64, b_ext: f64, temperature: f64) -> f64 {
    HBAR * gamma.abs() * b_ext / (K_B * temperature)
}

/// Single-site thermal state polarized along +z: I/2 + (B/4)σ_z.
pub fn rho_z(polarization: f64) -> CMatrix {
    CMatrix::from_row_slice(
        2,
        2,
        &[c(0.5 + polarization / 4.0), c(0.0), c(0.0), c(0.5 - polarization / 4.0)],
    )
}

/// Single-site thermal state after the preparation pulse: I/2 − (B/4)σ_x.
pub fn rho_x(polarization: f64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.5), c(-polarization / 4.0), c(-polarization / 4.0), c(0.5)])
}

/// Product thermal state of `molecule`; nuclei of the listed species use the
/// x-polarized form, all others the z-polarized form.
pub fn thermal_state(molecule: &Molecule, params: &ThermalParams, x_polarized: &[Species]) -> Result<DensityMatrix> {
    params.validate()?;
    for s in x_polarized {
        if !molecule.has_species(s) {
            return Err(Error::UnknownSpecies(s.to_string()));
        }
    }
    let sites: Vec<CMatrix> = molecule
        .nuclei()
        .iter()
        .map(|n| {
            let b = thermal_polarization(n.gamma, params.b_ext, params.temperature);
            if x_polarized.contains(&n.species) {
                rho_x(b)
            } else {
                rho_z(b)
            }
        })
        .collect();
    DensityMatrix::product(&sites)
}

/// Spin-1/2 operator S = σ/2 for `axis` on `site`, embedded in the 2^n_sites space.
pub fn site_operator(n_sites: usize, site: usize, axis: Axis) -> Result<OperatorMatrix> {
    let dim = check_sites(n_sites)?;
    if site >= n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    let shift = n_sites - 1 - site;
    let mut m = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let down = (k >> shift) & 1 == 1;
        match axis {
            Axis::Z => m[(k, k)] = c(if down { -0.5 } else { 0.5 }),
            Axis::X => m[(k ^ (1 << shift), k)] = c(0.5),
            Axis::Y => {
                // σ_y|↑⟩ = i|↓⟩, σ_y|↓⟩ = -i|↑⟩
                let v = if down { C64::new(0.0, -0.5) } else { C64::new(0.0, 0.5) };
                m[(k ^ (1 << shift), k)] = v;
            }
        }
    }
    Ok(OperatorMatrix::from_parts(m, true))
}

/// Sum of `axis` spin operators over `sites`.
pub fn collective_operator(n_sites: usize, sites: &[usize], axis: Axis) -> Result<OperatorMatrix> {
    let dim = check_sites(n_sites)?;
    let mut acc = OperatorMatrix::zeros(dim);
    for &s in sites {
        acc = acc.add(&site_operator(n_sites, s, axis)?);
    }
    Ok(acc)
}

/// Tr[ρ·op]; the imaginary residue of a Hermitian `op` is discarded.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<f64> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: op.dim(),
        });
    }
    Ok(linalg::trace_product(rho.entries(), op.entries())?.re)
}

/// Complex Tr[ρ·op], for checking the imaginary residue.
pub fn expectation_complex(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<C64> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: op.dim(),
        });
    }
    linalg::trace_product(rho.entries(), op.entries())
}

fn check_sites(n_sites: usize) -> Result<usize> {
    if n_sites == 0 || n_sites > MAX_SITES {
        return Err(Error::TooManySites(n_sites));
    }
    Ok(1 << n_sites)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || !dim.is_power_of_two() || dim > (1 << MAX_SITES) {
        return Err(Error::InvalidParameter(format!(
            "dimension {dim} is not 2^N with N <= 12"
        )));
    }
    Ok(())
}
