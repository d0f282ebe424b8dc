//! Discretized frequency domain: torus cells times a finite set of dual
//! lattice offsets.
//!
//! Sample points are torus corners `u = j/r`, `j ∈ {0,…,r−1}^d`, so each
//! sample stands for the half-open cell `[j/r, (j+1)/r)`. A global index is
//! `offset_position · cell_count + cell`; offsets are kept in ascending
//! lexicographic order and cells in row-major order of `j`, so ascending
//! global index is lexicographic order of `(k, j)`.

use crate::error::{Error, Result};
use crate::lattice::Lattice;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    lattice: Lattice,
    resolution: usize,
    offsets: Vec<Vec<i64>>,
    cell_count: usize,
    cell_weight: f64,
}

impl FrequencyGrid {
    /// Builds a grid with `r` samples per unit of dual-lattice coordinate
    /// and offset set `K` (sorted; must be nonempty, duplicate-free and
    /// contain the origin).
    pub fn new(lattice: Lattice, resolution: usize, offsets: Vec<Vec<i64>>) -> Result<Self> {
        let d = lattice.dim();
        if resolution == 0 {
            return Err(Error::InvalidGrid("resolution must be at least 1".into()));
        }
        if offsets.is_empty() {
            return Err(Error::InvalidGrid("offset set is empty".into()));
        }
        if let Some(bad) = offsets.iter().find(|k| k.len() != d) {
            return Err(Error::InvalidGrid(format!(
                "offset {bad:?} has dimension {} but the lattice has dimension {d}",
                bad.len()
            )));
        }
        let mut offsets = offsets;
        offsets.sort();
        if let Some(w) = offsets.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGrid(format!("duplicate offset {:?}", w[0])));
        }
        if offsets.binary_search(&vec![0; d]).is_err() {
            return Err(Error::InvalidGrid("offset set must contain 0".into()));
        }
        let cell_count = u32::try_from(d)
            .ok()
            .and_then(|e| resolution.checked_pow(e))
            .ok_or_else(|| Error::InvalidGrid("cell count overflows".into()))?;
        let cell_weight = lattice.dual_det_abs() / (resolution as f64).powi(d as i32);
        Ok(Self {
            lattice,
            resolution,
            offsets,
            cell_count,
            cell_weight,
        })
    }

    /// The box `{lo,…,hi}^d` of offsets.
    pub fn box_offsets(dim: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
        let mut out = vec![vec![]];
        for _ in 0..dim {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (lo..=hi).map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn offset_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    /// Total number of `(offset, cell)` sample indices.
    pub fn index_count(&self) -> usize {
        self.cell_count * self.offsets.len()
    }

    /// Lebesgue measure of one cell, `|det Â| / r^d`.
    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    /// Measure covered by the whole band, `|K|·|det Â|`.
    pub fn band_measure(&self) -> f64 {
        self.offsets.len() as f64 * self.lattice.dual_det_abs()
    }

    pub fn offset_position(&self, k: &[i64]) -> Option<usize> {
        self.offsets.binary_search_by(|o| o.as_slice().cmp(k)).ok()
    }

    pub fn cell_coords(&self, cell: usize) -> Vec<usize> {
        let d = self.dim();
        let mut j = vec![0; d];
        let mut rest = cell;
        for i in (0..d).rev() {
            j[i] = rest % self.resolution;
            rest /= self.resolution;
        }
        j
    }

    pub fn cell_index(&self, j: &[usize]) -> usize {
        j.iter().fold(0, |acc, &ji| acc * self.resolution + ji)
    }

    /// Torus coordinate `u = j/r` of a cell.
    pub fn torus_point(&self, cell: usize) -> Vec<f64> {
        let r = self.resolution as f64;
        self.cell_coords(cell)
            .into_iter()
            .map(|j| j as f64 / r)
            .collect()
    }

    /// Dual coordinates `u + k` of a sample, computed as `(j + r·k)/r` so the
    /// numerator is exact.
    pub fn dual_coords(&self, offset: usize, cell: usize) -> Vec<f64> {
        let r = self.resolution as i64;
        self.cell_coords(cell)
            .into_iter()
            .zip(&self.offsets[offset])
            .map(|(j, &k)| (j as i64 + r * k) as f64 / r as f64)
            .collect()
    }

    /// The frequency `ξ = Â(u + k)` of a sample.
    pub fn frequency(&self, offset: usize, cell: usize) -> Vec<f64> {
        self.lattice.dual_to_frequency(&self.dual_coords(offset, cell))
    }

    pub fn global_index(&self, offset: usize, cell: usize) -> usize {
        offset * self.cell_count + cell
    }

    pub fn split_index(&self, index: usize) -> (usize, usize) {
        (index / self.cell_count, index % self.cell_count)
    }

    /// Errors unless `other` describes the same lattice, resolution and offsets.
    pub fn ensure_same(&self, other: &FrequencyGrid) -> Result<()> {
        if self.resolution != other.resolution {
            return Err(Error::GridMismatch(format!(
                "resolution {} vs {}",
                self.resolution, other.resolution
            )));
        }
        if self.offsets != other.offsets {
            return Err(Error::GridMismatch("offset sets differ".into()));
        }
        if self.lattice != other.lattice {
            return Err(Error::GridMismatch("lattices differ".into()));
        }
        Ok(())
    }

    /// Same grid over another lattice (used by dilation transport).
    pub(crate) fn with_lattice(&self, lattice: Lattice) -> Result<Self> {
        Self::new(lattice, self.resolution, self.offsets.clone())
    }
}
