//! Choosing the Paley-Wiener set `Ω` of prescribed measure that keeps the
//! most data energy, with and without a point-group invariance constraint.

use rayon::prelude::*;

use crate::dataset::{PwMask, SpectralDataset};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::group::{GridAction, OrbitPartition, PointGroup};

const REPRESENTABLE_TOL: f64 = 1e-9;

/// `φ(ξ) = Σ_i |f̂_i(ξ)|²` at every `(offset, cell)` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// Values by global index.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∫ φ`, summed in ascending index order.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_weight()
    }

    /// `Φ_G(x) = Σ_g φ(ĝ·x)`.
    pub fn orbit_aggregate(&self, action: &GridAction<'_>, index: usize) -> f64 {
        (0..action.group().order())
            .map(|g| self.values[action.map_index(g, index)])
            .sum()
    }
}

pub fn energy_density(data: &SpectralDataset) -> DensityField {
    let grid = data.grid().clone();
    let cells = grid.cell_count();
    let mut values = vec![0.0; grid.index_count()];
    values
        .par_chunks_mut(cells)
        .enumerate()
        .for_each(|(o, chunk)| {
            for i in 0..data.channel_count() {
                if let Some(b) = data.block(i, o) {
                    for (acc, v) in chunk.iter_mut().zip(b) {
                        *acc += v.norm_sqr();
                    }
                }
            }
        });
    DensityField { grid, values }
}

/// A selected `Ω` with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSelection {
    pub mask: PwMask,
    /// `∫_Ω φ`.
    pub attained: f64,
    /// `∫_{Ω^c} φ = E(F, PW_Ω)`.
    pub residual: f64,
    /// φ at the last selected and first rejected sample: the levels
    /// bracketing the optimal threshold.
    pub levels: (Option<f64>, Option<f64>),
}

/// Number of cells for measure `m`, or the nearest representable measures.
fn cell_count_for(grid: &FrequencyGrid, measure: f64) -> Result<usize> {
    let w = grid.cell_weight();
    let total = grid.index_count();
    let n = measure / w;
    let rounded = n.round();
    let representable = measure.is_finite()
        && (n - rounded).abs() <= REPRESENTABLE_TOL * rounded.max(1.0)
        && rounded >= 0.0
        && rounded <= total as f64;
    if representable {
        return Ok(rounded as usize);
    }
    let below = if n.is_finite() && n >= 0.0 {
        Some(n.floor().min(total as f64) * w)
    } else {
        None
    };
    let above = if n.is_finite() && n.ceil() <= total as f64 {
        Some(n.ceil().max(0.0) * w)
    } else {
        None
    };
    Err(Error::MeasureNotRepresentable {
        requested: measure,
        below,
        above,
    })
}

/// Keeps the `M / cell_weight` samples of largest `φ`, ties by ascending
/// global index.
pub fn best_omega(phi: &DensityField, measure: f64) -> Result<OmegaSelection> {
    let grid = phi.grid();
    let count = cell_count_for(grid, measure)?;
    let mut order: Vec<usize> = (0..phi.values.len()).collect();
    order.sort_by(|&a, &b| phi.values[b].total_cmp(&phi.values[a]).then(a.cmp(&b)));
    let mut bits = vec![false; phi.values.len()];
    for &x in &order[..count] {
        bits[x] = true;
    }
    let levels = (
        count.checked_sub(1).map(|i| phi.values[order[i]]),
        order.get(count).map(|&x| phi.values[x]),
    );
    selection(phi, bits, levels)
}

fn selection(phi: &DensityField, bits: Vec<bool>, levels: (Option<f64>, Option<f64>)) -> Result<OmegaSelection> {
    let w = phi.grid.cell_weight();
    let (mut inside, mut outside) = (0.0, 0.0);
    for (v, &b) in phi.values.iter().zip(&bits) {
        if b {
            inside += v;
        } else {
            outside += v;
        }
    }
    Ok(OmegaSelection {
        mask: PwMask::from_bits(phi.grid.clone(), bits)?,
        attained: inside * w,
        residual: outside * w,
        levels,
    })
}

/// One candidate item of the orbit knapsack.
#[derive(Debug, Clone)]
struct Item {
    size: usize,
    value: f64,
}

/// Picks items with total size exactly `target` maximizing total value.
/// Returns the chosen item indices, or the nearest reachable totals.
///
/// Items of one size are interchangeable up to value, so only the best
/// prefix of each size class matters; a table over the smaller classes is
/// combined with a direct lookup in the largest one.
fn knapsack(items: &[Item], target: usize) -> std::result::Result<Vec<usize>, (Option<usize>, Option<usize>)> {
    let mut sizes: Vec<usize> = items.iter().map(|it| it.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    // Per class: item indices sorted by value descending then index.
    let classes: Vec<(usize, Vec<usize>)> = sizes
        .iter()
        .map(|&s| {
            let mut idx: Vec<usize> = (0..items.len()).filter(|&i| items[i].size == s).collect();
            idx.sort_by(|&a, &b| items[b].value.total_cmp(&items[a].value).then(a.cmp(&b)));
            (s, idx)
        })
        .collect();
    let prefix = |members: &[usize]| -> Vec<f64> {
        let mut p = vec![0.0];
        for &i in members {
            p.push(p.last().unwrap() + items[i].value);
        }
        p
    };
    let Some(((big, big_members), small)) = classes.split_last() else {
        return if target == 0 { Ok(Vec::new()) } else { Err((Some(0), None)) };
    };

    // best[t] over the small classes, with per-class choice tables.
    let mut best: Vec<Option<f64>> = vec![None; target + 1];
    best[0] = Some(0.0);
    let mut choices: Vec<Vec<usize>> = Vec::with_capacity(small.len());
    for (s, members) in small {
        let p = prefix(members);
        let mut next: Vec<Option<f64>> = vec![None; target + 1];
        let mut choice = vec![0usize; target + 1];
        for t in 0..=target {
            for n in 0..=members.len() {
                if n * s > t {
                    break;
                }
                if let Some(v) = best[t - n * s] {
                    let cand = v + p[n];
                    if next[t].map_or(true, |cur| cand > cur) {
                        next[t] = Some(cand);
                        choice[t] = n;
                    }
                }
            }
        }
        best = next;
        choices.push(choice);
    }

    let pb = prefix(big_members);
    let mut winner: Option<(f64, usize, usize)> = None;
    for (t, v) in best.iter().enumerate() {
        let Some(v) = v else { continue };
        let rest = target - t;
        if rest % big != 0 || rest / big > big_members.len() {
            continue;
        }
        let cand = v + pb[rest / big];
        if winner.map_or(true, |(w, _, _)| cand > w) {
            winner = Some((cand, t, rest / big));
        }
    }
    match winner {
        Some((_, mut t, nb)) => {
            let mut chosen: Vec<usize> = big_members[..nb].to_vec();
            for (ci, (s, members)) in small.iter().enumerate().rev() {
                let n = choices[ci][t];
                chosen.extend_from_slice(&members[..n]);
                t -= n * s;
            }
            chosen.sort_unstable();
            Ok(chosen)
        }
        None => Err(nearest_reachable(items, target)),
    }
}

fn nearest_reachable(items: &[Item], target: usize) -> (Option<usize>, Option<usize>) {
    let total: usize = items.iter().map(|it| it.size).sum();
    let mut reach = vec![false; total + 1];
    reach[0] = true;
    for it in items {
        for t in (it.size..=total).rev() {
            if reach[t - it.size] {
                reach[t] = true;
            }
        }
    }
    let below = (0..=target.min(total)).rev().find(|&t| reach[t]);
    let above = (target..=total).find(|&t| reach[t]);
    (below, above)
}

fn orbit_selection(grid: &FrequencyGrid, items: &[Item], measure: f64) -> Result<Vec<usize>> {
    let target = cell_count_for(grid, measure)?;
    knapsack(items, target).map_err(|(below, above)| {
        let w = grid.cell_weight();
        Error::MeasureNotReachable {
            requested: measure,
            below: below.map(|n| n as f64 * w),
            above: above.map(|n| n as f64 * w),
        }
    })
}

/// Best `G`-invariant `Ω` of measure `M`, built from whole orbits.
pub fn best_omega_invariant(data: &SpectralDataset, group: &PointGroup, measure: f64) -> Result<OmegaSelection> {
    let phi = energy_density(data);
    let grid = data.grid();
    let action = GridAction::new(group, grid)?;
    let orbits = OrbitPartition::of_indices(&action);
    let items: Vec<Item> = orbits
        .orbits()
        .iter()
        .map(|o| Item {
            size: o.len(),
            value: o.iter().map(|&x| phi.values[x]).sum(),
        })
        .collect();
    let chosen = orbit_selection(grid, &items, measure)?;
    let mut bits = vec![false; grid.index_count()];
    let mut selected = vec![false; items.len()];
    for &i in &chosen {
        selected[i] = true;
        for &x in &orbits.orbits()[i] {
            bits[x] = true;
        }
    }
    let level = |pick: bool| {
        let per_unit = (0..items.len())
            .filter(|&i| selected[i] == pick)
            .map(|i| items[i].value / items[i].size as f64);
        if pick {
            per_unit.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        } else {
            per_unit.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        }
    };
    let levels = (level(true), level(false));
    let mut sel = selection(&phi, bits, levels)?;
    // Attained value as the sum of selected orbit sums.
    sel.attained = chosen.iter().map(|&i| items[i].value).sum::<f64>() * grid.cell_weight();
    Ok(sel)
}

/// `(∫_{Ω₀} φ, ∫_{Σ₀} Φ_G)`: the invariant selection on the full grid and
/// the same optimum computed on orbit representatives from `Φ_G`.
pub fn omega_duality_check(data: &SpectralDataset, group: &PointGroup, measure: f64) -> Result<(f64, f64)> {
    let left = best_omega_invariant(data, group, measure)?.attained;
    let phi = energy_density(data);
    let grid = data.grid();
    let action = GridAction::new(group, grid)?;
    let orbits = OrbitPartition::of_indices(&action);
    let n = group.order() as f64;
    // A representative of an orbit of size s stands for measure s/|G| of the
    // section; its weight turns Φ_G into the orbit's share.
    let items: Vec<Item> = orbits
        .orbits()
        .iter()
        .map(|o| Item {
            size: o.len(),
            value: phi.orbit_aggregate(&action, o[0]) * o.len() as f64 / n,
        })
        .collect();
    let chosen = orbit_selection(grid, &items, measure)?;
    let right = chosen.iter().map(|&i| items[i].value).sum::<f64>() * grid.cell_weight();
    Ok((left, right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{residual_energy, synthesize};
    use crate::group::IntMatrix;
    use crate::lattice::Lattice;
    use crate::scene::{Primitive, Scene, Term};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn example_36() -> SpectralDataset {
        let iv = |a, b| Primitive::Interval { a, b };
        let s = Scene::new(vec![
            vec![Term::indicator(1.0, iv(-1.0, 0.0)), Term::indicator(2.0, iv(1.0, 2.0))],
            vec![Term::indicator(-1.0, iv(-1.0, 0.0)), Term::indicator(2.0, iv(1.0, 2.0))],
        ])
        .unwrap();
        let grid = FrequencyGrid::new(Lattice::integer(1), 4, vec![vec![-1], vec![0], vec![1]]).unwrap();
        synthesize(&s, &grid).unwrap()
    }

    fn c4() -> PointGroup {
        PointGroup::generate(&[IntMatrix::from_row_major(2, vec![0, -1, 1, 0]).unwrap()]).unwrap()
    }

    #[test]
    fn density_example_36() {
        let data = example_36();
        let phi = energy_density(&data);
        assert_eq!(&phi.values()[0..4], &[2.0; 4]);
        assert_eq!(&phi.values()[4..8], &[0.0; 4]);
        assert_eq!(&phi.values()[8..12], &[8.0; 4]);
        assert_abs_diff_eq!(phi.integral(), data.total_energy());
        let zero = energy_density(&SpectralDataset::zeros(data.grid().clone(), 2));
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn best_omega_example_36() {
        let data = example_36();
        let phi = energy_density(&data);
        let sel = best_omega(&phi, 1.0).unwrap();
        assert_eq!(sel.mask.bits()[8..12], [true; 4]);
        assert_eq!(sel.mask.count(), 4);
        assert_abs_diff_eq!(sel.residual, 2.0);
        assert_abs_diff_eq!(residual_energy(&data, &sel.mask).unwrap().iter().sum::<f64>(), 2.0);
        assert_eq!(sel.levels, (Some(8.0), Some(2.0)));
        assert_eq!(best_omega(&phi, 0.0).unwrap().mask.count(), 0);
        assert_abs_diff_eq!(best_omega(&phi, 3.0).unwrap().residual, 0.0);
        match best_omega(&phi, 0.3) {
            Err(Error::MeasureNotRepresentable { below, above, .. }) => {
                assert_eq!(below, Some(0.25));
                assert_eq!(above, Some(0.5));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(best_omega(&phi, 3.25).is_err());
    }

    #[test]
    fn invariant_square_orbit() {
        let grid = FrequencyGrid::new(Lattice::integer(2), 4, vec![vec![0, 0]]).unwrap();
        let boxed = |lo: [f64; 2]| Primitive::Box {
            lo: lo.to_vec(),
            hi: vec![lo[0] + 0.25, lo[1] + 0.25],
        };
        let corners = [[0.25, 0.0], [0.0, 0.25], [0.75, 0.0], [0.0, 0.75]];
        let s = Scene::new(vec![corners.iter().map(|&c| Term::indicator(1.0, boxed(c))).collect()]).unwrap();
        let data = synthesize(&s, &grid).unwrap();
        let group = c4();
        let w = grid.cell_weight();
        let sel = best_omega_invariant(&data, &group, 4.0 * w).unwrap();
        assert_abs_diff_eq!(sel.residual, 0.0);
        let (l, r) = omega_duality_check(&data, &group, 4.0 * w).unwrap();
        assert_abs_diff_eq!(l, data.total_energy(), epsilon = 1e-15);
        assert_abs_diff_eq!(r, data.total_energy(), epsilon = 1e-15);
        assert_eq!(omega_duality_check(&data, &group, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn invariance_forces_whole_orbit() {
        let grid = FrequencyGrid::new(Lattice::integer(2), 4, vec![vec![0, 0]]).unwrap();
        let data = SpectralDataset::from_fn(grid.clone(), 1, |_, _, c| {
            if c == grid.cell_index(&[1, 2]) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let group = c4();
        let action = GridAction::new(&group, &grid).unwrap();
        let sel = best_omega_invariant(&data, &group, 4.0 * grid.cell_weight()).unwrap();
        assert_eq!(sel.mask.count(), 4);
        assert!(sel.mask.get(0, grid.cell_index(&[1, 2])));
        assert_eq!(sel.mask.is_invariant(&action), None);
        // Orbit sizes are 1, 2 and 4; five cells are reachable as 4 + 1.
        assert!(best_omega_invariant(&data, &group, 5.0 * grid.cell_weight()).is_ok());
    }

    #[test]
    fn unreachable_measure() {
        let grid = FrequencyGrid::new(Lattice::integer(2), 3, vec![vec![0, 0]]).unwrap();
        let data = SpectralDataset::zeros(grid.clone(), 1);
        let group = c4();
        // Orbits: origin (1) and two of size 4.
        match best_omega_invariant(&data, &group, 2.0 * grid.cell_weight()) {
            Err(Error::MeasureNotReachable { below, above, .. }) => {
                assert_abs_diff_eq!(below.unwrap(), grid.cell_weight());
                assert_abs_diff_eq!(above.unwrap(), 4.0 * grid.cell_weight());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trivial_group_matches_plain() {
        let data = example_36();
        let sel = best_omega_invariant(&data, &PointGroup::trivial(1), 1.5).unwrap();
        let plain = best_omega(&energy_density(&data), 1.5).unwrap();
        assert_eq!(sel.mask, plain.mask);
        assert_eq!(sel.attained, plain.attained);
    }

    fn brute_force_min(values: &[f64], count: usize) -> f64 {
        let n = values.len();
        let mut best = f64::INFINITY;
        for s in 0u32..(1 << n) {
            if s.count_ones() as usize != count {
                continue;
            }
            let r: f64 = (0..n).filter(|&i| s >> i & 1 == 0).map(|i| values[i]).sum();
            best = best.min(r);
        }
        best
    }

    proptest! {
        #[test]
        fn knapsack_matches_brute_force(
            items in prop::collection::vec((1usize..5, 0.0f64..10.0), 1..10),
            target in 0usize..20,
        ) {
            let items: Vec<Item> = items.into_iter().map(|(size, value)| Item { size, value }).collect();
            let n = items.len();
            let mut best: Option<f64> = None;
            for s in 0u32..(1 << n) {
                let size: usize = (0..n).filter(|&i| s >> i & 1 == 1).map(|i| items[i].size).sum();
                if size == target {
                    let v: f64 = (0..n).filter(|&i| s >> i & 1 == 1).map(|i| items[i].value).sum();
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
            match (knapsack(&items, target), best) {
                (Ok(chosen), Some(b)) => {
                    let v: f64 = chosen.iter().map(|&i| items[i].value).sum();
                    let size: usize = chosen.iter().map(|&i| items[i].size).sum();
                    prop_assert_eq!(size, target);
                    prop_assert!((v - b).abs() < 1e-9);
                }
                (Err(_), None) => {}
                (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
            }
        }

        #[test]
        fn best_omega_is_optimal(vals in prop::collection::vec(0.0f64..4.0, 12), count in 0usize..=12) {
            let grid = FrequencyGrid::new(Lattice::integer(1), 4, vec![vec![0], vec![1], vec![2]]).unwrap();
            let data = SpectralDataset::from_fn(grid.clone(), 1, |_, o, c| Complex64::new(vals[o * 4 + c].sqrt(), 0.0));
            let phi = energy_density(&data);
            let sel = best_omega(&phi, count as f64 * grid.cell_weight()).unwrap();
            let brute = brute_force_min(phi.values(), count) * grid.cell_weight();
            prop_assert!((sel.residual - brute).abs() < 1e-12);
            let lo = (0..12).filter(|&x| sel.mask.bits()[x]).map(|x| phi.values()[x]).fold(f64::INFINITY, f64::min);
            let hi = (0..12).filter(|&x| !sel.mask.bits()[x]).map(|x| phi.values()[x]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo >= hi);
        }
    }
}
