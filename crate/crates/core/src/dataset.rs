//! Sampled spectra of a finite family of signals, Paley-Wiener masks and
//! the projection onto `PW_Ω`.
//!
//! Samples are stored per `(channel, offset)` block of `cell_count` values.
//! Blocks that were never written are implicitly zero; this keeps 2-D data
//! with small spectral support cheap at high resolution.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::scene::{Primitive, Scene};

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct SpectralDataset {
    grid: FrequencyGrid,
    channels: usize,
    blocks: Vec<Option<Vec<Complex64>>>,
}

impl SpectralDataset {
    pub fn zeros(grid: FrequencyGrid, channels: usize) -> Self {
        let blocks = vec![None; channels * grid.offset_count()];
        Self {
            grid,
            channels,
            blocks,
        }
    }

    /// Builds a dataset from a sample function `f(channel, offset, cell)`.
    pub fn from_fn(
        grid: FrequencyGrid,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Self::zeros(grid, channels);
        let cells = data.grid.cell_count();
        for i in 0..channels {
            for o in 0..data.grid.offset_count() {
                let block: Vec<Complex64> = (0..cells).map(|c| f(i, o, c)).collect();
                if block.iter().any(|v| *v != ZERO) {
                    data.blocks[i * data.grid.offset_count() + o] = Some(block);
                }
            }
        }
        data
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn channel_count(&self) -> usize {
        self.channels
    }

    fn slot(&self, channel: usize, offset: usize) -> usize {
        channel * self.grid.offset_count() + offset
    }

    pub fn block(&self, channel: usize, offset: usize) -> Option<&[Complex64]> {
        self.blocks[self.slot(channel, offset)].as_deref()
    }

    /// Mutable block, allocated (zero-filled) on first access.
    pub fn block_mut(&mut self, channel: usize, offset: usize) -> &mut [Complex64] {
        let cells = self.grid.cell_count();
        let slot = self.slot(channel, offset);
        self.blocks[slot].get_or_insert_with(|| vec![ZERO; cells])
    }

    pub fn value(&self, channel: usize, offset: usize, cell: usize) -> Complex64 {
        self.block(channel, offset).map_or(ZERO, |b| b[cell])
    }

    pub fn set(&mut self, channel: usize, offset: usize, cell: usize, v: Complex64) {
        if v == ZERO && self.block(channel, offset).is_none() {
            return;
        }
        self.block_mut(channel, offset)[cell] = v;
    }

    /// Offsets at which at least one channel has a stored block, ascending.
    pub fn active_offsets(&self) -> Vec<usize> {
        (0..self.grid.offset_count())
            .filter(|&o| (0..self.channels).any(|i| self.block(i, o).is_some()))
            .collect()
    }

    /// `‖f_i‖² = Σ_{k,u} |f̂_i|² · cell_weight`.
    pub fn energy(&self, channel: usize) -> f64 {
        let sum: f64 = (0..self.grid.offset_count())
            .filter_map(|o| self.block(channel, o))
            .map(|b| b.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum();
        sum * self.grid.cell_weight()
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.channels).map(|i| self.energy(i)).collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.energies().iter().sum()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for i in 0..self.channels {
            for o in 0..self.grid.offset_count() {
                if let Some(b) = self.block(i, o) {
                    if let Some(cell) = b.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
                        return Err(Error::NonFinite {
                            channel: i,
                            offset: o,
                            cell,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(self.grid.clone(), channels.len());
        for (new, &old) in channels.iter().enumerate() {
            if old >= self.channels {
                return Err(Error::IndexOutOfRange(format!("channel {old}")));
            }
            for o in 0..self.grid.offset_count() {
                let slot = out.slot(new, o);
                out.blocks[slot] = self.blocks[self.slot(old, o)].clone();
            }
        }
        Ok(out)
    }

    /// The same samples viewed on another grid with identical index layout.
    pub(crate) fn with_grid(&self, grid: FrequencyGrid) -> Self {
        debug_assert_eq!(grid.offset_count(), self.grid.offset_count());
        debug_assert_eq!(grid.cell_count(), self.grid.cell_count());
        Self {
            grid,
            channels: self.channels,
            blocks: self.blocks.clone(),
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for b in self.blocks.iter_mut().flatten() {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }
}

impl PartialEq for SpectralDataset {
    fn eq(&self, other: &Self) -> bool {
        if self.channels != other.channels || self.grid != other.grid {
            return false;
        }
        let cells = self.grid.cell_count();
        (0..self.channels).all(|i| {
            (0..self.grid.offset_count()).all(|o| match (self.block(i, o), other.block(i, o)) {
                (None, None) => true,
                (Some(a), Some(b)) => a == b,
                (Some(a), None) | (None, Some(a)) => a.iter().all(|v| *v == ZERO) && a.len() == cells,
            })
        })
    }
}

/// Visits every sample point of the grid that may lie in `primitive`,
/// failing if the primitive reaches outside the band.
fn for_each_sample_in(
    grid: &FrequencyGrid,
    primitive: &Primitive,
    mut visit: impl FnMut(usize, usize, &[f64]),
) -> Result<()> {
    let lattice = grid.lattice();
    let d = grid.dim();
    let r = grid.resolution() as f64;
    let (lo, hi) = primitive.bounding_box();

    // Bounding box of the primitive in dual coordinates, from the 2^d corners.
    let mut dlo = vec![f64::INFINITY; d];
    let mut dhi = vec![f64::NEG_INFINITY; d];
    for mask in 0..(1usize << d) {
        let corner: Vec<f64> = (0..d)
            .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
            .collect();
        let c = lattice.frequency_to_dual(&corner);
        for i in 0..d {
            dlo[i] = dlo[i].min(c[i]);
            dhi[i] = dhi[i].max(c[i]);
        }
    }
    let snap = |x: f64| {
        let s = (x * r).round();
        if (x * r - s).abs() < 1e-9 {
            s
        } else {
            x * r
        }
    };
    // Global sample coordinates t = j + r·k covering the box.
    let tlo: Vec<i64> = dlo.iter().map(|&x| snap(x).floor() as i64).collect();
    let thi: Vec<i64> = dhi.iter().map(|&x| snap(x).ceil() as i64).collect();
    let ri = grid.resolution() as i64;

    let kmin: Vec<i64> = tlo.iter().map(|t| t.div_euclid(ri)).collect();
    let kmax: Vec<i64> = thi.iter().map(|t| t.div_euclid(ri)).collect();
    let mut k = kmin.clone();
    loop {
        let offset = grid.offset_position(&k);
        // Cell range inside this offset.
        let jlo: Vec<i64> = (0..d).map(|i| (tlo[i] - ri * k[i]).clamp(0, ri - 1)).collect();
        let jhi: Vec<i64> = (0..d).map(|i| (thi[i] - ri * k[i]).clamp(0, ri - 1)).collect();
        let mut j = jlo.clone();
        'cells: loop {
            let cu: Vec<usize> = j.iter().map(|&x| x as usize).collect();
            let cell = grid.cell_index(&cu);
            let dual: Vec<f64> = (0..d).map(|i| (j[i] + ri * k[i]) as f64 / r).collect();
            let xi = lattice.dual_to_frequency(&dual);
            if primitive.contains(&xi) {
                match offset {
                    Some(o) => visit(o, cell, &xi),
                    None => {
                        return Err(Error::BandTooSmall {
                            primitive: primitive.to_string(),
                            offset: k.clone(),
                        })
                    }
                }
            }
            for i in (0..d).rev() {
                if j[i] < jhi[i] {
                    j[i] += 1;
                    continue 'cells;
                }
                j[i] = jlo[i];
            }
            break;
        }
        if !advance(&mut k, &kmin, &kmax) {
            break;
        }
    }
    Ok(())
}

fn advance(k: &mut [i64], lo: &[i64], hi: &[i64]) -> bool {
    for i in (0..k.len()).rev() {
        if k[i] < hi[i] {
            k[i] += 1;
            return true;
        }
        k[i] = lo[i];
    }
    false
}

/// Samples every channel of `scene` at the grid's frequency points.
pub fn synthesize(scene: &Scene, grid: &FrequencyGrid) -> Result<SpectralDataset> {
    if let Some(d) = scene.dim() {
        if d != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: d,
            });
        }
    }
    let mut data = SpectralDataset::zeros(grid.clone(), scene.channel_count());
    for (i, terms) in scene.channels().iter().enumerate() {
        for term in terms {
            let mut hits = Vec::new();
            for_each_sample_in(grid, &term.primitive, |o, c, xi| {
                hits.push((o, c, term.eval(xi)));
            })?;
            for (o, c, v) in hits {
                if v != ZERO {
                    data.block_mut(i, o)[c] += v;
                }
            }
        }
    }
    data.ensure_finite()?;
    Ok(data)
}

/// A Paley-Wiener set `Ω` as a union of grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PwMask {
    grid: FrequencyGrid,
    bits: Vec<bool>,
}

impl PwMask {
    pub fn from_bits(grid: FrequencyGrid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.index_count() {
            return Err(Error::GridMismatch(format!(
                "mask has {} bits, grid has {} samples",
                bits.len(),
                grid.index_count()
            )));
        }
        Ok(Self { grid, bits })
    }

    pub fn full(grid: FrequencyGrid) -> Self {
        let n = grid.index_count();
        Self {
            grid,
            bits: vec![true; n],
        }
    }

    pub fn empty(grid: FrequencyGrid) -> Self {
        let n = grid.index_count();
        Self {
            grid,
            bits: vec![false; n],
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, offset: usize, cell: usize) -> bool {
        self.bits[self.grid.global_index(offset, cell)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_weight()
    }

    /// Whether `ĝ·Ω = Ω` for every group element.
    pub fn is_invariant(&self, action: &crate::group::GridAction<'_>) -> Option<usize> {
        for g in 0..action.group().order() {
            for x in 0..self.bits.len() {
                if self.bits[x] != self.bits[action.map_index(g, x)] {
                    return Some(g);
                }
            }
        }
        None
    }
}

/// The mask of all sample points lying in the union of `region`.
pub fn pw_mask(region: &[Primitive], grid: &FrequencyGrid) -> Result<PwMask> {
    let mut bits = vec![false; grid.index_count()];
    for p in region {
        p.validate()?;
        if p.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: p.dim(),
            });
        }
        for_each_sample_in(grid, p, |o, c, _| bits[grid.global_index(o, c)] = true)?;
    }
    PwMask::from_bits(grid.clone(), bits)
}

/// `P_V F` for `V = PW_Ω`: samples outside the mask are zeroed.
pub fn project_pw(data: &SpectralDataset, mask: &PwMask) -> Result<SpectralDataset> {
    data.grid().ensure_same(mask.grid())?;
    let mut out = data.clone();
    let grid = data.grid().clone();
    for i in 0..data.channel_count() {
        for o in 0..grid.offset_count() {
            if out.block(i, o).is_none() {
                continue;
            }
            let block = out.block_mut(i, o);
            for (c, v) in block.iter_mut().enumerate() {
                if !mask.get(o, c) {
                    *v = ZERO;
                }
            }
        }
    }
    Ok(out)
}

/// `‖f_i − P_V f_i‖²` per channel: the energy outside the mask.
pub fn residual_energy(data: &SpectralDataset, mask: &PwMask) -> Result<Vec<f64>> {
    data.grid().ensure_same(mask.grid())?;
    let grid = data.grid();
    Ok((0..data.channel_count())
        .map(|i| {
            let sum: f64 = (0..grid.offset_count())
                .filter_map(|o| data.block(i, o).map(|b| (o, b)))
                .map(|(o, b)| {
                    b.iter()
                        .enumerate()
                        .filter(|(c, _)| !mask.get(o, *c))
                        .map(|(_, v)| v.norm_sqr())
                        .sum::<f64>()
                })
                .sum();
            sum * grid.cell_weight()
        })
        .collect())
}
