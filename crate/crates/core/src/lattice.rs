//! Full-rank lattices, their duals and dilations.
//!
//! A lattice `Λ = A·Z^d` is stored through its basis matrix `A` (columns
//! generate the lattice). The dual lattice `Λ^⊥` has basis `Â = (Aᵗ)⁻¹`, and
//! every frequency `ξ` decomposes uniquely as `ξ = Â(u + k)` with `u` in the
//! unit torus cube `[0,1)^d` and `k ∈ Z^d`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Below this determinant a basis is treated as singular.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    basis: DMatrix<f64>,
    dual_basis: DMatrix<f64>,
    det_abs: f64,
}

impl Lattice {
    /// Builds a lattice from its basis matrix (columns are generators).
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::DimensionMismatch {
                expected: basis.nrows(),
                got: basis.ncols(),
            });
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateLattice { det: f64::NAN });
        }
        let det = basis.determinant();
        if !(det.abs() > DEGENERACY_TOL) {
            return Err(Error::DegenerateLattice { det });
        }
        let inverse = basis
            .clone()
            .try_inverse()
            .ok_or(Error::DegenerateLattice { det })?;
        Ok(Self {
            dual_basis: inverse.transpose(),
            basis,
            det_abs: det.abs(),
        })
    }

    /// Builds a lattice from `d²` reals in row-major order.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// The integer lattice `Z^d`.
    pub fn integer(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity basis is regular")
    }

    /// `Z^d` rotated by `angle` (only meaningful for `d = 2`).
    pub fn rotated_square(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_row_major(2, &[c, -s, s, c]).expect("rotation is regular")
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dual_basis(&self) -> &DMatrix<f64> {
        &self.dual_basis
    }

    /// `|det A|`, the covolume of the lattice.
    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    /// `|det Â| = 1 / |det A|`, the measure of one fundamental cell of `Λ^⊥`.
    pub fn dual_det_abs(&self) -> f64 {
        1.0 / self.det_abs
    }

    /// Whether the dual basis is diagonal, which lets sample points be
    /// evaluated coordinate-wise.
    pub fn dual_is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.dual_basis[(i, j)] == 0.0))
    }

    /// The lattice `AΛ`.
    pub fn dilate(&self, a: &DMatrix<f64>) -> Result<Lattice> {
        if a.nrows() != self.dim() || a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: a.nrows(),
            });
        }
        let det = a.determinant();
        if !(det.abs() > DEGENERACY_TOL) {
            return Err(Error::SingularMatrix { det });
        }
        let dilated = Lattice::new(a * &self.basis)?;
        debug_assert!({
            let a_hat = a.clone().try_inverse().unwrap().transpose();
            (a_hat * &self.dual_basis - &dilated.dual_basis).amax() < 1e-9
        });
        Ok(dilated)
    }

    /// Maps a point given in dual-lattice coordinates `c` to the frequency `Â c`.
    pub fn dual_to_frequency(&self, c: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.dual_basis[(i, j)] * c[j]).sum())
            .collect()
    }

    /// Dual-lattice coordinates of a frequency: `Â⁻¹ ξ = Aᵗ ξ`.
    pub fn frequency_to_dual(&self, xi: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.basis[(j, i)] * xi[j]).sum())
            .collect()
    }

    /// Splits `ξ = Â(u + k)` into a torus coordinate `u ∈ [0,1)^d` and an
    /// integer offset `k`.
    pub fn reduce_to_fundamental(&self, xi: &[f64]) -> (Vec<f64>, Vec<i64>) {
        let c = self.frequency_to_dual(xi);
        let mut u = Vec::with_capacity(c.len());
        let mut k = Vec::with_capacity(c.len());
        for ci in c {
            let mut ki = ci.floor();
            let mut ui = ci - ki;
            if ui >= 1.0 {
                ui = 0.0;
                ki += 1.0;
            }
            u.push(ui);
            k.push(ki as i64);
        }
        (u, k)
    }
}
