//! Fiberization `T_Λ`, per-cell Gramians, group symmetrization of data,
//! periodic-multiplier membership and dilation/refinement transport.
//!
//! The fiber of channel `i` at cell `u` is the vector of samples
//! `(f̂_i(Â(u+k)))_{k∈K}`; everything here works directly on stored samples.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dataset::{SpectralDataset, ZERO};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::group::{GridAction, PointGroup};
use crate::lattice::Lattice;

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FiberVector {
    pub cell: usize,
    pub entries: Vec<Complex64>,
}

impl FiberVector {
    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum()
    }
}

pub fn fiber(data: &SpectralDataset, channel: usize, cell: usize) -> Result<FiberVector> {
    if channel >= data.channel_count() {
        return Err(Error::IndexOutOfRange(format!("channel {channel}")));
    }
    if cell >= data.grid().cell_count() {
        return Err(Error::IndexOutOfRange(format!("cell {cell}")));
    }
    let entries = (0..data.grid().offset_count())
        .map(|o| data.value(channel, o, cell))
        .collect();
    Ok(FiberVector { cell, entries })
}

/// Offsets carrying data, used to skip empty blocks in per-cell loops.
pub(crate) struct ActiveBlocks<'a> {
    /// `(offset, per-channel blocks)` for every offset with any stored block.
    blocks: Vec<(usize, Vec<Option<&'a [Complex64]>>)>,
    channels: usize,
    offsets: usize,
}

impl<'a> ActiveBlocks<'a> {
    pub(crate) fn new(data: &'a SpectralDataset) -> Self {
        let blocks = data
            .active_offsets()
            .into_iter()
            .map(|o| (o, (0..data.channel_count()).map(|i| data.block(i, o)).collect()))
            .collect();
        Self {
            blocks,
            channels: data.channel_count(),
            offsets: data.grid().offset_count(),
        }
    }

    /// Full fibers of every channel at `cell` (length `|K|` each).
    pub(crate) fn fibers(&self, cell: usize) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![ZERO; self.offsets]; self.channels];
        for (o, chans) in &self.blocks {
            for (i, b) in chans.iter().enumerate() {
                if let Some(b) = b {
                    out[i][*o] = b[cell];
                }
            }
        }
        out
    }

    /// Gramian at `cell`, row-major, summed in ascending offset order.
    pub(crate) fn gramian(&self, cell: usize) -> Vec<Complex64> {
        let m = self.channels;
        let mut g = vec![ZERO; m * m];
        for (_, chans) in &self.blocks {
            let vals: Vec<Complex64> = chans.iter().map(|b| b.map_or(ZERO, |b| b[cell])).collect();
            for i in 0..m {
                if vals[i] == ZERO {
                    continue;
                }
                for j in 0..m {
                    g[i * m + j] += vals[i] * vals[j].conj();
                }
            }
        }
        g
    }
}

/// `G_ij(u) = Σ_k f̂_i conj(f̂_j)` at one cell.
pub fn cell_gramian(data: &SpectralDataset, cell: usize) -> Vec<Complex64> {
    ActiveBlocks::new(data).gramian(cell)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianField {
    grid: FrequencyGrid,
    channels: usize,
    values: Vec<Complex64>,
}

impl GramianField {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn channel_count(&self) -> usize {
        self.channels
    }

    /// Row-major `m × m` matrix at `cell`.
    pub fn at(&self, cell: usize) -> &[Complex64] {
        let mm = self.channels * self.channels;
        &self.values[cell * mm..(cell + 1) * mm]
    }

    pub fn trace(&self, cell: usize) -> f64 {
        let m = self.channels;
        (0..m).map(|i| self.at(cell)[i * m + i].re).sum()
    }
}

pub fn gramian_field(data: &SpectralDataset) -> GramianField {
    let active = ActiveBlocks::new(data);
    let cells = data.grid().cell_count();
    let values: Vec<Complex64> = (0..cells)
        .into_par_iter()
        .flat_map_iter(|c| active.gramian(c))
        .collect();
    GramianField {
        grid: data.grid().clone(),
        channels: data.channel_count(),
        values,
    }
}

/// Orbit channels `R_g f_i`, ordered group-element major, channel minor.
pub fn symmetrize(data: &SpectralDataset, group: &PointGroup) -> Result<SpectralDataset> {
    let grid = data.grid();
    let action = GridAction::new(group, grid)?;
    let m = data.channel_count();
    let mut out = SpectralDataset::zeros(grid.clone(), m * group.order());
    for g in 0..group.order() {
        let ginv = group.inverse(g);
        let cell_src: Vec<usize> = (0..grid.cell_count()).map(|c| action.map_cell(ginv, c)).collect();
        for o in 0..grid.offset_count() {
            let src_o = action.map_offset(ginv, o);
            for i in 0..m {
                if let Some(src) = data.block(i, src_o) {
                    let dst = out.block_mut(g * m + i, o);
                    for (c, v) in dst.iter_mut().enumerate() {
                        *v = src[cell_src[c]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Whether channel `i` of `f` lies fiberwise in the span of channel `j` of
/// `psi`: at every cell the part of `T f(u)` orthogonal to `T ψ(u)` has
/// squared norm at most `tol · ‖T f(u)‖²`.
pub fn membership_test(
    f: &SpectralDataset,
    i: usize,
    psi: &SpectralDataset,
    j: usize,
    tol: f64,
) -> Result<bool> {
    f.grid().ensure_same(psi.grid())?;
    if i >= f.channel_count() || j >= psi.channel_count() {
        return Err(Error::IndexOutOfRange(format!("channel {i} or {j}")));
    }
    let fo = f.select_channels(&[i])?;
    let po = psi.select_channels(&[j])?;
    let fa = ActiveBlocks::new(&fo);
    let pa = ActiveBlocks::new(&po);
    Ok((0..f.grid().cell_count()).into_par_iter().all(|c| {
        let a = fa.fibers(c).pop().unwrap();
        let b = pa.fibers(c).pop().unwrap();
        let na: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        if na == 0.0 {
            return true;
        }
        let nb: f64 = b.iter().map(|v| v.norm_sqr()).sum();
        let residual = if nb == 0.0 {
            na
        } else {
            let ip: Complex64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
            let coef = ip / nb;
            a.iter().zip(&b).map(|(x, y)| (x - coef * y).norm_sqr()).sum()
        };
        residual <= tol * na
    }))
}

fn dilation_det(a: &DMatrix<f64>, dim: usize) -> Result<f64> {
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: a.nrows(),
        });
    }
    let det = a.determinant();
    if !(det.abs() > crate::lattice::DEGENERACY_TOL) {
        return Err(Error::SingularMatrix { det });
    }
    Ok(det.abs())
}

/// Given `F` sampled over the lattice `AΛ`, returns `D_A F` over `Λ`.
///
/// Sample `(k, u)` of the result sits at `ω = Â_Λ(u+k)` and the source
/// sample with the same index sits at `Âω`, so only the scale `|A|^{-1/2}`
/// and the lattice change.
pub fn transport_to_base(data: &SpectralDataset, a: &DMatrix<f64>) -> Result<SpectralDataset> {
    let grid = data.grid();
    let det = dilation_det(a, grid.dim())?;
    let inv = a.clone().try_inverse().ok_or(Error::SingularMatrix { det })?;
    let base = Lattice::new(inv * grid.lattice().basis())?;
    let mut out = data.with_grid(grid.with_lattice(base)?);
    out.scale(det.powf(-0.5));
    Ok(out)
}

/// Inverse of [`transport_to_base`]: from `D_A F` over `Λ` to `F` over `AΛ`.
pub fn transport_to_dilated(data: &SpectralDataset, a: &DMatrix<f64>) -> Result<SpectralDataset> {
    let grid = data.grid();
    let det = dilation_det(a, grid.dim())?;
    let dilated = grid.lattice().dilate(a)?;
    let mut out = data.with_grid(grid.with_lattice(dilated)?);
    out.scale(det.sqrt());
    Ok(out)
}

/// Max over cells of `‖G^F_{AΛ}(Âu) − |A|·G^{D_A F}_Λ(u)‖_max` for `F` over `AΛ`.
pub fn gramian_covariance_check(data: &SpectralDataset, a: &DMatrix<f64>) -> Result<f64> {
    covariance_deviation(data, a, false)
}

/// Covariance deviation with an optional sign error injected into the
/// transported Gramian, used to make sure the check can fail.
pub fn covariance_deviation(data: &SpectralDataset, a: &DMatrix<f64>, inject_sign_error: bool) -> Result<f64> {
    let det = dilation_det(a, data.grid().dim())?;
    let base = transport_to_base(data, a)?;
    let lhs = ActiveBlocks::new(data);
    let rhs = ActiveBlocks::new(&base);
    let sign = if inject_sign_error { -1.0 } else { 1.0 };
    let devs: Vec<f64> = (0..data.grid().cell_count())
        .into_par_iter()
        .map(|c| {
            let gl = lhs.gramian(c);
            let gr = rhs.gramian(c);
            gl.iter()
                .zip(&gr)
                .map(|(x, y)| (x - y * (det * sign)).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(devs.into_iter().fold(0.0, f64::max))
}

fn div_floor(a: i64, n: i64) -> (i64, i64) {
    (a.div_euclid(n), a.rem_euclid(n))
}

/// Re-indexes `F` over `Λ` as data over the finer lattice `Λ/N`.
///
/// The dual lattice becomes `N·Λ^⊥`, so a coarse offset `k = Nq + s`
/// (`0 ≤ s < N`) lands in fine offset `q` at fine cell `j' = r·s + j` with
/// resolution `N·r`. Sample points are unchanged; fine offsets whose blocks
/// are only partly covered by `K` are zero elsewhere.
pub fn refine(data: &SpectralDataset, n: usize) -> Result<SpectralDataset> {
    if n == 0 {
        return Err(Error::InvalidGrid("refinement factor must be at least 1".into()));
    }
    let grid = data.grid();
    let d = grid.dim();
    let ni = n as i64;
    let r = grid.resolution();
    let basis = grid.lattice().basis() / n as f64;
    let lattice = Lattice::new(basis)?;
    let mut fine_offsets: Vec<Vec<i64>> = grid
        .offsets()
        .iter()
        .map(|k| k.iter().map(|&ki| div_floor(ki, ni).0).collect())
        .collect();
    fine_offsets.sort();
    fine_offsets.dedup();
    let fine = FrequencyGrid::new(lattice, n * r, fine_offsets)?;
    let mut out = SpectralDataset::zeros(fine.clone(), data.channel_count());
    for o in 0..grid.offset_count() {
        let k = &grid.offsets()[o];
        let (q, s): (Vec<i64>, Vec<usize>) = k
            .iter()
            .map(|&ki| {
                let (q, s) = div_floor(ki, ni);
                (q, s as usize)
            })
            .unzip();
        let fo = fine.offset_position(&q).expect("fine offsets cover coarse ones");
        let map: Vec<usize> = (0..grid.cell_count())
            .map(|c| {
                let j = grid.cell_coords(c);
                let jf: Vec<usize> = (0..d).map(|i| r * s[i] + j[i]).collect();
                fine.cell_index(&jf)
            })
            .collect();
        for i in 0..data.channel_count() {
            if let Some(src) = data.block(i, o) {
                let dst = out.block_mut(i, fo);
                for (c, v) in src.iter().enumerate() {
                    dst[map[c]] = *v;
                }
            }
        }
    }
    Ok(out)
}
