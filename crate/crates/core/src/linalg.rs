//! Dense complex matrix helpers shared by the spin, engine and readout code.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Largest absolute entry of `a - a†`.
pub fn hermitian_residual(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest absolute entry of `u u† - 1`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let prod = u * u.adjoint();
    max_abs_diff(&prod, &identity(u.nrows()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Eigendecomposition of a Hermitian matrix. nalgebra's complex Hermitian
/// solver can return a wrong basis on degenerate spectra (collective spin
/// rotations hit this), so the decomposition is delegated to faer.
#[derive(Debug, Clone)]
pub struct HermitianSpectrum {
    vectors: CMatrix,
    values: Vec<f64>,
}

impl HermitianSpectrum {
    pub fn new(h: &CMatrix) -> Self {
        let n = h.nrows();
        let hs = faer::Mat::<C64>::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)].conj()));
        let eig = hs
            .self_adjoint_eigen(faer::Side::Lower)
            .expect("Hermitian eigensolver converges on finite input");
        let u = eig.U();
        let s = eig.S();
        Self {
            vectors: CMatrix::from_fn(n, n, |i, j| u[(i, j)]),
            values: (0..n).map(|k| s[k].re).collect(),
        }
    }

    /// `exp(-i h t)`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let mut vd = self.vectors.clone();
        for (k, lambda) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -lambda * t);
            for z in vd.column_mut(k).iter_mut() {
                *z *= phase;
            }
        }
        vd * self.vectors.adjoint()
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = self.values.clone();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    HermitianSpectrum::new(h).propagator(t)
}

/// `exp(-i h t)` for a real diagonal `h`.
pub fn expm_diagonal(diag: &[f64], t: f64) -> CMatrix {
    let n = diag.len();
    let mut u = CMatrix::zeros(n, n);
    for (k, e) in diag.iter().enumerate() {
        u[(k, k)] = C64::from_polar(1.0, -e * t);
    }
    u
}

/// `u rho u†`.
pub fn conjugate(u: &CMatrix, rho: &CMatrix) -> CMatrix {
    u * rho * u.adjoint()
}

/// `Tr[a b]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    if a.nrows() != b.ncols() || a.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.ncols(),
        });
    }
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(acc)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    HermitianSpectrum::new(a).eigenvalues()
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
