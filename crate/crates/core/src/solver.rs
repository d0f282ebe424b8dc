//! Optimal shift-invariant subspaces: per-cell Eckart-Young selection,
//! direct error evaluation, group-invariant optima and the projection
//! pipelines.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dataset::{project_pw, residual_energy, PwMask, SpectralDataset, ZERO};
use crate::eigen::{hermitian_eigen, HermitianEigen};
use crate::error::{Error, Result};
use crate::fiber::{refine, symmetrize, transport_to_base, ActiveBlocks, GramianField};
use crate::grid::FrequencyGrid;
use crate::group::{GridAction, OrbitPartition, PointGroup};

/// Eigenvalues at or below `RANK_TOL · trace` count as zero.
pub const RANK_TOL: f64 = 1e-9;
const ORTHO_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-12;

type Fiber = Vec<Complex64>;

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenField {
    grid: FrequencyGrid,
    cells: Vec<HermitianEigen>,
}

impl EigenField {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn at(&self, cell: usize) -> &HermitianEigen {
        &self.cells[cell]
    }
}

pub fn eigen_field(gramians: &GramianField) -> Result<EigenField> {
    let m = gramians.channel_count();
    let cells = (0..gramians.grid().cell_count())
        .into_par_iter()
        .map(|c| hermitian_eigen(gramians.at(c), m))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenField {
        grid: gramians.grid().clone(),
        cells,
    })
}

/// A shift-invariant subspace given by its range function: an orthonormal
/// basis of `J(u) ⊂ C^K` at every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    grid: FrequencyGrid,
    ell: usize,
    bases: Vec<Vec<Fiber>>,
    group_order: Option<usize>,
}

impl SubspaceModel {
    pub fn zero(grid: FrequencyGrid, ell: usize) -> Self {
        let bases = vec![Vec::new(); grid.cell_count()];
        Self {
            grid,
            ell,
            bases,
            group_order: None,
        }
    }

    /// Validates per-cell orthonormality, vector length and dimension.
    pub fn from_bases(grid: FrequencyGrid, ell: usize, bases: Vec<Vec<Fiber>>) -> Result<Self> {
        if bases.len() != grid.cell_count() {
            return Err(Error::InvalidModel(format!(
                "{} cell bases for {} cells",
                bases.len(),
                grid.cell_count()
            )));
        }
        for (c, basis) in bases.iter().enumerate() {
            if basis.len() > ell {
                return Err(Error::InvalidModel(format!(
                    "cell {c} has dimension {} above the budget {ell}",
                    basis.len()
                )));
            }
            for (a, va) in basis.iter().enumerate() {
                if va.len() != grid.offset_count() {
                    return Err(Error::InvalidModel(format!("cell {c}: vector of length {}", va.len())));
                }
                for (b, vb) in basis.iter().enumerate().skip(a) {
                    let want = if a == b { 1.0 } else { 0.0 };
                    if (inner(va, vb) - want).norm() > ORTHO_TOL {
                        return Err(Error::InvalidModel(format!("cell {c}: basis is not orthonormal")));
                    }
                }
            }
        }
        Ok(Self {
            grid,
            ell,
            bases,
            group_order: None,
        })
    }

    /// The model spanned fiberwise by the channels of `generators`.
    pub fn from_generators(generators: &SpectralDataset) -> Result<Self> {
        let active = ActiveBlocks::new(generators);
        let bases = (0..generators.grid().cell_count())
            .into_par_iter()
            .map(|c| orthonormalize(active.fibers(c), RANK_TOL))
            .collect();
        Self::from_bases(generators.grid().clone(), generators.channel_count(), bases)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn basis(&self, cell: usize) -> &[Fiber] {
        &self.bases[cell]
    }

    pub fn dim(&self, cell: usize) -> usize {
        self.bases[cell].len()
    }

    /// `ess sup dim J(u)`.
    pub fn length(&self) -> usize {
        self.bases.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn group_order(&self) -> Option<usize> {
        self.group_order
    }

    /// `‖a − P_{J(u)} a‖²`.
    pub fn residual(&self, cell: usize, a: &[Complex64]) -> f64 {
        let mut r = a.to_vec();
        for b in &self.bases[cell] {
            let c = inner(&r, b);
            for (x, y) in r.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        norm_sqr(&r)
    }
}

/// Modified Gram-Schmidt; vectors whose remaining norm is at most
/// `tol` times the largest input norm are dropped.
fn orthonormalize(vectors: Vec<Fiber>, tol: f64) -> Vec<Fiber> {
    let scale = vectors.iter().map(|v| norm_sqr(v).sqrt()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let mut out: Vec<Fiber> = Vec::new();
    for mut v in vectors {
        for b in &out {
            let c = inner(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let n = norm_sqr(&v).sqrt();
        if n > tol * scale {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub total_error: f64,
    pub per_channel: Vec<f64>,
    /// Residual density per cell (before multiplying by the cell weight).
    pub per_cell_density: Vec<f64>,
}

impl ApproxReport {
    fn from_cells(grid: &FrequencyGrid, channels: usize, cells: &[(f64, Vec<f64>)]) -> Self {
        let w = grid.cell_weight();
        let mut per_channel = vec![0.0; channels];
        let mut total = 0.0;
        for (density, chans) in cells {
            total += density;
            for (acc, v) in per_channel.iter_mut().zip(chans) {
                *acc += v;
            }
        }
        Self {
            total_error: total * w,
            per_channel: per_channel.into_iter().map(|v| v * w).collect(),
            per_cell_density: cells.iter().map(|c| c.0).collect(),
        }
    }
}

struct CellSolve {
    basis: Vec<Fiber>,
    density: f64,
    per_channel: Vec<f64>,
}

impl CellSolve {
    fn empty() -> Self {
        Self {
            basis: Vec::new(),
            density: 0.0,
            per_channel: Vec::new(),
        }
    }
}

/// Eckart-Young at one cell: the span of the top `min(ell, rank)`
/// principal fibers, each `λ^{-1/2} Σ_i conj(y_i) T f_i(u)`.
fn solve_cell(active: &ActiveBlocks<'_>, cell: usize, m: usize, ell: usize) -> Result<CellSolve> {
    let gram = active.gramian(cell);
    let trace: f64 = (0..m).map(|i| gram[i * m + i].re).sum();
    if trace == 0.0 {
        return Ok(CellSolve::empty());
    }
    let eig = hermitian_eigen(&gram, m)?;
    let keep = ell.min(eig.rank(RANK_TOL));
    let fibers = active.fibers(cell);
    let basis = (0..keep)
        .map(|j| {
            let scale = eig.values[j].powf(-0.5);
            let mut b = vec![ZERO; fibers.first().map_or(0, Vec::len)];
            for (i, f) in fibers.iter().enumerate() {
                let coef = eig.vectors[j][i].conj() * scale;
                if coef == ZERO {
                    continue;
                }
                for (x, v) in b.iter_mut().zip(f) {
                    *x += coef * v;
                }
            }
            b
        })
        .collect();
    let density = eig.values[keep..].iter().sum();
    let per_channel = (0..m)
        .map(|i| {
            let captured: f64 = (0..keep).map(|j| eig.values[j] * eig.vectors[j][i].norm_sqr()).sum();
            gram[i * m + i].re - captured
        })
        .collect();
    Ok(CellSolve {
        basis,
        density,
        per_channel,
    })
}

/// Optimal `Λ`-invariant subspace of length at most `ell` for `F`.
pub fn best_sis(data: &SpectralDataset, ell: usize) -> Result<(SubspaceModel, ApproxReport)> {
    data.ensure_finite()?;
    let m = data.channel_count();
    let active = ActiveBlocks::new(data);
    let solved = (0..data.grid().cell_count())
        .into_par_iter()
        .map(|c| solve_cell(&active, c, m, ell))
        .collect::<Result<Vec<_>>>()?;
    let mut bases = Vec::with_capacity(solved.len());
    let mut cells = Vec::with_capacity(solved.len());
    for s in solved {
        bases.push(s.basis);
        cells.push((s.density, s.per_channel));
    }
    let report = ApproxReport::from_cells(data.grid(), m, &cells);
    let model = SubspaceModel {
        grid: data.grid().clone(),
        ell,
        bases,
        group_order: None,
    };
    Ok((model, report))
}

/// Generator spectra of a model: channel `j` holds the `j`-th basis fiber
/// at every cell (zero where the cell has fewer vectors).
pub fn generators(model: &SubspaceModel, data: &SpectralDataset) -> Result<SpectralDataset> {
    data.grid().ensure_same(model.grid())?;
    let grid = model.grid().clone();
    let mut out = SpectralDataset::zeros(grid.clone(), model.length());
    for c in 0..grid.cell_count() {
        for (j, b) in model.basis(c).iter().enumerate() {
            for (o, v) in b.iter().enumerate() {
                out.set(j, o, c, *v);
            }
        }
    }
    Ok(out)
}

/// `ess sup rank G(u)` with eigenvalues above `tol · trace` counted.
pub fn subspace_length(data: &SpectralDataset, tol: f64) -> Result<usize> {
    let m = data.channel_count();
    let active = ActiveBlocks::new(data);
    let ranks = (0..data.grid().cell_count())
        .into_par_iter()
        .map(|c| {
            let g = active.gramian(c);
            if (0..m).all(|i| g[i * m + i].re == 0.0) {
                return Ok(0);
            }
            Ok(hermitian_eigen(&g, m)?.rank(tol))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(ranks.into_iter().max().unwrap_or(0))
}

/// `E(F, S) = Σ_i ‖f_i − P_S f_i‖²`, evaluated from residual vectors.
pub fn error_against(data: &SpectralDataset, model: &SubspaceModel) -> Result<ApproxReport> {
    data.grid().ensure_same(model.grid())?;
    let m = data.channel_count();
    let active = ActiveBlocks::new(data);
    let cells: Vec<(f64, Vec<f64>)> = (0..data.grid().cell_count())
        .into_par_iter()
        .map(|c| {
            let fibers = active.fibers(c);
            if fibers.iter().all(|f| f.iter().all(|v| *v == ZERO)) {
                return (0.0, Vec::new());
            }
            let chans: Vec<f64> = fibers.iter().map(|f| model.residual(c, f)).collect();
            (chans.iter().sum(), chans)
        })
        .collect();
    Ok(ApproxReport::from_cells(data.grid(), m, &cells))
}

/// Largest `t` such that `span(basis[..t])` is mapped to itself by every
/// element in `stabilizer`.
fn invariant_prefix(action: &GridAction<'_>, stabilizer: &[usize], basis: &[Fiber]) -> usize {
    let probe = |t: usize| {
        let span = &basis[..t];
        stabilizer.iter().all(|&h| {
            span.iter().all(|b| {
                let mut r = action.permute_fiber(h, b);
                for e in span {
                    let c = inner(&r, e);
                    for (x, y) in r.iter_mut().zip(e) {
                        *x -= c * y;
                    }
                }
                norm_sqr(&r).sqrt() <= ORTHO_TOL
            })
        })
    };
    (0..=basis.len()).rev().find(|&t| probe(t)).unwrap_or(0)
}

/// Optimal `Λ ⋊ G`-invariant subspace of length at most `ell`.
///
/// The symmetrized data is solved at one cell per orbit and the range
/// function is carried to the rest of the orbit by `J(ĝu) = P_g J(u)`.
pub fn best_gamma(
    data: &SpectralDataset,
    group: &PointGroup,
    ell: usize,
) -> Result<(SubspaceModel, ApproxReport)> {
    let grid = data.grid();
    let action = GridAction::new(group, grid)?;
    let sym = symmetrize(data, group)?;
    let active = ActiveBlocks::new(&sym);
    let orbits = OrbitPartition::of_cells(group, grid);
    let ms = sym.channel_count();

    let solved = orbits
        .orbits()
        .par_iter()
        .map(|orbit| {
            let rep = orbit[0];
            let mut basis = solve_cell(&active, rep, ms, ell)?.basis;
            let stabilizer: Vec<usize> = (1..group.order())
                .filter(|&h| action.map_cell(h, rep) == rep)
                .collect();
            if !stabilizer.is_empty() {
                let t = invariant_prefix(&action, &stabilizer, &basis);
                basis.truncate(t);
            }
            Ok(basis)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bases: Vec<Vec<Fiber>> = vec![Vec::new(); grid.cell_count()];
    for (orbit, basis) in orbits.orbits().iter().zip(solved) {
        let rep = orbit[0];
        for g in 0..group.order() {
            let v = action.map_cell(g, rep);
            if bases[v].is_empty() && !basis.is_empty() && (v != rep || g == 0) {
                bases[v] = basis.iter().map(|b| action.permute_fiber(g, b)).collect();
            }
        }
    }
    let model = SubspaceModel {
        grid: grid.clone(),
        ell,
        bases,
        group_order: Some(group.order()),
    };

    let n = group.order() as f64;
    let sym_report = error_against(&sym, &model)?;
    let direct = error_against(data, &model)?;
    let report = ApproxReport {
        total_error: sym_report.total_error / n,
        per_channel: direct.per_channel,
        per_cell_density: sym_report.per_cell_density.into_iter().map(|v| v / n).collect(),
    };
    Ok((model, report))
}

/// Error split of the project-then-solve pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// `E(P_V F, S*)`.
    pub projected_error: f64,
    /// `E(F, V)`.
    pub band_error: f64,
    /// `projected_error + band_error`.
    pub total: f64,
    /// `E(F, S*)` evaluated directly.
    pub direct: ApproxReport,
}

/// Projects `F` onto `PW_Ω` and solves there; the resulting subspace
/// lies in `PW_Ω`.
pub fn project_then_solve(
    data: &SpectralDataset,
    mask: &PwMask,
    ell: usize,
    group: Option<&PointGroup>,
) -> Result<(SubspaceModel, PipelineReport)> {
    let projected = project_pw(data, mask)?;
    let (model, report) = match group {
        Some(g) => {
            let action = GridAction::new(g, data.grid())?;
            if let Some(element) = mask.is_invariant(&action) {
                return Err(Error::MaskNotInvariant { element });
            }
            best_gamma(&projected, g, ell)?
        }
        None => best_sis(&projected, ell)?,
    };
    let band_error: f64 = residual_energy(data, mask)?.iter().sum();
    let direct = error_against(data, &model)?;
    Ok((
        model,
        PipelineReport {
            projected_error: report.total_error,
            band_error,
            total: report.total_error + band_error,
            direct,
        },
    ))
}

/// Solves on the unprojected data and then restricts the optimal range
/// function to `Ω`, re-orthonormalizing what remains.
pub fn solve_then_project(
    data: &SpectralDataset,
    mask: &PwMask,
    ell: usize,
) -> Result<(SubspaceModel, ApproxReport)> {
    data.grid().ensure_same(mask.grid())?;
    let (model, _) = best_sis(data, ell)?;
    let bases: Vec<Vec<Fiber>> = (0..model.grid().cell_count())
        .into_par_iter()
        .map(|c| {
            let masked: Vec<Fiber> = model
                .basis(c)
                .iter()
                .map(|b| {
                    b.iter()
                        .enumerate()
                        .map(|(o, v)| if mask.get(o, c) { *v } else { ZERO })
                        .collect()
                })
                .collect();
            let mut out: Vec<Fiber> = Vec::new();
            for mut v in masked {
                for e in &out {
                    let coef = inner(&v, e);
                    for (x, y) in v.iter_mut().zip(e.iter()) {
                        *x -= coef * y;
                    }
                }
                let n = norm_sqr(&v).sqrt();
                if n > DROP_TOL {
                    v.iter_mut().for_each(|x| *x /= n);
                    out.push(v);
                }
            }
            out
        })
        .collect();
    let projected = SubspaceModel {
        grid: model.grid.clone(),
        ell,
        bases,
        group_order: None,
    };
    let report = error_against(data, &projected)?;
    Ok((projected, report))
}

/// `(E*(F, AΛ, ℓ), E*(D_A F, Λ, ℓ))` for `F` sampled over `AΛ`.
pub fn dilation_equivalence(data: &SpectralDataset, a: &DMatrix<f64>, ell: usize) -> Result<(f64, f64)> {
    let lhs = best_sis(data, ell)?.1.total_error;
    let base = transport_to_base(data, a)?;
    let rhs = best_sis(&base, ell)?.1.total_error;
    Ok((lhs, rhs))
}

/// `(E*(F, Λ/N, ℓ), E*(F, Λ, ℓ))`.
pub fn refinement_inequality_check(data: &SpectralDataset, n: usize, ell: usize) -> Result<(f64, f64)> {
    let fine = refine(data, n)?;
    Ok((best_sis(&fine, ell)?.1.total_error, best_sis(data, ell)?.1.total_error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{pw_mask, synthesize};
    use crate::fiber::gramian_field;
    use crate::group::IntMatrix;
    use crate::lattice::Lattice;
    use crate::scene::{Primitive, Scene, Term};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn interval(a: f64, b: f64) -> Primitive {
        Primitive::Interval { a, b }
    }

    fn grid_1d(step: f64, r: usize, offsets: &[i64]) -> FrequencyGrid {
        FrequencyGrid::new(
            Lattice::from_row_major(1, &[step]).unwrap(),
            r,
            offsets.iter().map(|&k| vec![k]).collect(),
        )
        .unwrap()
    }

    fn scene(channels: Vec<Vec<(f64, f64, f64)>>) -> Scene {
        Scene::new(
            channels
                .into_iter()
                .map(|ts| ts.into_iter().map(|(c, a, b)| Term::indicator(c, interval(a, b))).collect())
                .collect(),
        )
        .unwrap()
    }

    fn example_36(r: usize) -> SpectralDataset {
        let s = scene(vec![
            vec![(1.0, -1.0, 0.0), (2.0, 1.0, 2.0)],
            vec![(-1.0, -1.0, 0.0), (2.0, 1.0, 2.0)],
        ]);
        synthesize(&s, &grid_1d(1.0, r, &[-1, 0, 1])).unwrap()
    }

    fn example_62(step: f64, offsets: &[i64]) -> SpectralDataset {
        let s = scene(vec![vec![(1.0, 0.0, 0.5)], vec![(1.0, 1.0, 1.5)]]);
        synthesize(&s, &grid_1d(step, 4, offsets)).unwrap()
    }

    #[test]
    fn eigen_field_example_36() {
        let e = eigen_field(&gramian_field(&example_36(2))).unwrap();
        assert_abs_diff_eq!(e.at(1).values[0], 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.at(1).values[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn best_sis_example_36() {
        for r in [1, 2, 5] {
            let data = example_36(r);
            let (model, rep) = best_sis(&data, 1).unwrap();
            assert_abs_diff_eq!(rep.total_error, 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(rep.per_channel.iter().sum::<f64>(), 2.0, epsilon = 1e-10);
            let direct = error_against(&data, &model).unwrap();
            assert_abs_diff_eq!(direct.total_error, 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(best_sis(&data, 2).unwrap().1.total_error, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(best_sis(&data, 0).unwrap().1.total_error, 10.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn error_against_example_36_models() {
        let data = example_36(3);
        let phi0 = synthesize(&scene(vec![vec![(1.0, 1.0, 2.0)]]), data.grid()).unwrap();
        let model = SubspaceModel::from_generators(&phi0).unwrap();
        assert_abs_diff_eq!(error_against(&data, &model).unwrap().total_error, 2.0, epsilon = 1e-12);
        let zero = SubspaceModel::zero(data.grid().clone(), 1);
        assert_abs_diff_eq!(error_against(&data, &zero).unwrap().total_error, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn padding_leaves_error_unchanged() {
        let data = example_36(2);
        let (model, rep) = best_sis(&data, 1).unwrap();
        let padded: Vec<Vec<Fiber>> = (0..2)
            .map(|c| {
                let mut b = model.basis(c).to_vec();
                b.push(vec![ZERO, Complex64::new(1.0, 0.0), ZERO]);
                b
            })
            .collect();
        let padded = SubspaceModel::from_bases(data.grid().clone(), 2, padded).unwrap();
        assert_abs_diff_eq!(error_against(&data, &padded).unwrap().total_error, rep.total_error, epsilon = 1e-12);
    }

    #[test]
    fn pipelines_example_36() {
        let data = example_36(4);
        let mask = pw_mask(&[interval(-1.0, 1.0)], data.grid()).unwrap();
        let (model, rep) = project_then_solve(&data, &mask, 1, None).unwrap();
        assert_abs_diff_eq!(rep.projected_error, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.band_error, 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.total, 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.direct.total_error, 8.0, epsilon = 1e-10);
        // Generator supported on [-1, 0).
        let gens = generators(&model, &data).unwrap();
        for o in 0..3 {
            for c in 0..4 {
                assert_eq!(gens.value(0, o, c) != ZERO, o == 0);
            }
        }
        let (_, rep) = solve_then_project(&data, &mask, 1).unwrap();
        assert_abs_diff_eq!(rep.total_error, 10.0, epsilon = 1e-10);

        let full = PwMask::full(data.grid().clone());
        let (_, rep) = project_then_solve(&data, &full, 1, None).unwrap();
        assert_abs_diff_eq!(rep.total, 2.0, epsilon = 1e-10);
        let (_, rep) = solve_then_project(&data, &full, 1).unwrap();
        assert_abs_diff_eq!(rep.total_error, 2.0, epsilon = 1e-10);
        let (_, rep) = project_then_solve(&data, &mask, 0, None).unwrap();
        assert_abs_diff_eq!(rep.total, 10.0, epsilon = 1e-10);
    }

    #[test]
    fn examples_61_62() {
        let s61 = scene(vec![vec![(1.0, 0.0, 0.5)], vec![(1.0, 0.5, 1.0)]]);
        let z = synthesize(&s61, &grid_1d(1.0, 4, &[0])).unwrap();
        let half = synthesize(&s61, &grid_1d(0.5, 4, &[0])).unwrap();
        assert_abs_diff_eq!(best_sis(&z, 1).unwrap().1.total_error, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(best_sis(&half, 1).unwrap().1.total_error, 0.0, epsilon = 1e-10);
        let (fine, coarse) = refinement_inequality_check(&z, 2, 1).unwrap();
        assert_abs_diff_eq!(fine, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(coarse, 0.0, epsilon = 1e-10);

        let z = example_62(1.0, &[0, 1]);
        let half = example_62(0.5, &[0]);
        assert_abs_diff_eq!(best_sis(&z, 1).unwrap().1.total_error, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(best_sis(&half, 1).unwrap().1.total_error, 0.0, epsilon = 1e-10);
        let (fine, coarse) = refinement_inequality_check(&z, 2, 1).unwrap();
        assert_abs_diff_eq!(fine, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(coarse, 0.5, epsilon = 1e-10);
        let (a, b) = dilation_equivalence(&half, &DMatrix::from_element(1, 1, 0.5), 1).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn generators_reproduce_error() {
        let data = example_62(1.0, &[0, 1]);
        let (model, rep) = best_sis(&data, 1).unwrap();
        let gens = generators(&model, &data).unwrap();
        assert_eq!(gens.channel_count(), 1);
        for c in 0..4 {
            let n: f64 = (0..2).map(|o| gens.value(0, o, c).norm_sqr()).sum();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
        let again = SubspaceModel::from_generators(&gens).unwrap();
        assert_abs_diff_eq!(error_against(&data, &again).unwrap().total_error, rep.total_error, epsilon = 1e-8);
        assert_eq!(subspace_length(&data, RANK_TOL).unwrap(), 2);
        assert_eq!(subspace_length(&SpectralDataset::zeros(data.grid().clone(), 2), RANK_TOL).unwrap(), 0);
    }

    #[test]
    fn best_gamma_c2_pair() {
        let grid = FrequencyGrid::new(Lattice::integer(2), 4, FrequencyGrid::box_offsets(2, -1, 1)).unwrap();
        // Q = [1/4,1/2)² and its image under -I on the torus, [3/4,1)².
        let square = |lo: f64| Primitive::Box {
            lo: vec![lo, lo],
            hi: vec![lo + 0.25, lo + 0.25],
        };
        let s = Scene::new(vec![vec![Term::indicator(1.0, square(0.25))], vec![Term::indicator(1.0, square(0.75))]]).unwrap();
        let data = synthesize(&s, &grid).unwrap();
        let minus = IntMatrix::from_row_major(2, vec![-1, 0, 0, -1]).unwrap();
        let group = PointGroup::generate(&[minus]).unwrap();
        let (model, rep) = best_gamma(&data, &group, 1).unwrap();
        assert_abs_diff_eq!(rep.total_error, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(error_against(&data, &model).unwrap().total_error, 0.0, epsilon = 1e-12);

        let (m0, r0) = best_gamma(&data, &PointGroup::trivial(2), 1).unwrap();
        let (m1, r1) = best_sis(&data, 1).unwrap();
        assert_eq!(m0.bases, m1.bases);
        assert_abs_diff_eq!(r0.total_error, r1.total_error, epsilon = 1e-15);
    }

    #[test]
    fn best_gamma_equivariant() {
        let grid = FrequencyGrid::new(Lattice::integer(2), 4, FrequencyGrid::box_offsets(2, -1, 1)).unwrap();
        let data = SpectralDataset::from_fn(grid.clone(), 2, |i, o, c| {
            Complex64::new(((i * 7 + o * 3 + c * 5) % 11) as f64 - 5.0, ((i + o * c) % 3) as f64)
        });
        let rot = IntMatrix::from_row_major(2, vec![0, -1, 1, 0]).unwrap();
        let group = PointGroup::generate(&[rot]).unwrap();
        let action = GridAction::new(&group, &grid).unwrap();
        let (model, rep) = best_gamma(&data, &group, 2).unwrap();
        let direct = error_against(&data, &model).unwrap();
        assert!((rep.total_error - direct.total_error).abs() <= 1e-9 * data.total_energy());
        let projector = |c: usize| {
            let k = grid.offset_count();
            let mut p = vec![ZERO; k * k];
            for b in model.basis(c) {
                for x in 0..k {
                    for y in 0..k {
                        p[x * k + y] += b[x] * b[y].conj();
                    }
                }
            }
            p
        };
        for g in 0..group.order() {
            for c in 0..grid.cell_count() {
                let pc = projector(c);
                let pg = projector(action.map_cell(g, c));
                let k = grid.offset_count();
                for x in 0..k {
                    for y in 0..k {
                        let gx = action.map_offset(g, x);
                        let gy = action.map_offset(g, y);
                        assert!((pg[gx * k + gy] - pc[x * k + y]).norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn non_invariant_mask_rejected() {
        let grid = FrequencyGrid::new(Lattice::integer(1), 4, vec![vec![-1], vec![0], vec![1]]).unwrap();
        let data = SpectralDataset::zeros(grid.clone(), 1);
        let mask = pw_mask(&[interval(0.25, 0.5)], &grid).unwrap();
        let minus = IntMatrix::from_row_major(1, vec![-1]).unwrap();
        let group = PointGroup::generate(&[minus]).unwrap();
        assert!(matches!(
            project_then_solve(&data, &mask, 1, Some(&group)),
            Err(Error::MaskNotInvariant { .. })
        ));
    }

    fn small_data() -> impl Strategy<Value = SpectralDataset> {
        (1usize..4, 1usize..4, 1usize..5).prop_flat_map(|(m, nk, r)| {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m * nk * r).prop_map(move |v| {
                let offsets: Vec<i64> = (0..nk as i64).collect();
                let grid = grid_1d(1.0, r, &offsets);
                SpectralDataset::from_fn(grid, m, |i, o, c| {
                    let (a, b) = v[(i * nk + o) * r + c];
                    Complex64::new(a, b)
                })
            })
        })
    }

    proptest! {
        #[test]
        fn monotone_in_ell(data in small_data()) {
            let mut prev = f64::INFINITY;
            for ell in 0..=data.channel_count() {
                let e = best_sis(&data, ell).unwrap().1.total_error;
                prop_assert!(e <= prev + 1e-12);
                prev = e;
            }
            let len = subspace_length(&data, RANK_TOL).unwrap();
            prop_assert!(best_sis(&data, len).unwrap().1.total_error <= 1e-9 * data.total_energy());
        }

        #[test]
        fn report_consistency(data in small_data(), ell in 0usize..3) {
            let (model, rep) = best_sis(&data, ell).unwrap();
            let direct = error_against(&data, &model).unwrap();
            let tol = 1e-9 * (1.0 + data.total_energy());
            prop_assert!((rep.total_error - direct.total_error).abs() <= tol);
            prop_assert!((rep.total_error - rep.per_channel.iter().sum::<f64>()).abs() <= tol);
            for (a, b) in rep.per_channel.iter().zip(&direct.per_channel) {
                prop_assert!((a - b).abs() <= tol);
            }
            prop_assert!(model.length() <= ell);
        }
    }
}
