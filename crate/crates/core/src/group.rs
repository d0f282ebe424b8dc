//! Finite point groups preserving a lattice, and their action on the grid.
//!
//! Group elements are integer unimodular matrices in lattice coordinates.
//! On the frequency side an element `g` acts through its dual matrix
//! `Ĝ = (Gᵗ)⁻¹`, which is again integer unimodular. On the discretized
//! domain the dual matrix acts on the offset `k ↦ Ĝk` and on the torus
//! corner `j ↦ Ĝj mod r`; both are exact permutations.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

/// Default bound on the group order; covers every 2-D and 3-D
/// crystallographic point group.
pub const DEFAULT_MAX_ORDER: usize = 48;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    dim: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn from_row_major(dim: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.dim + j]
    }

    pub fn entries(&self) -> &[i64] {
        &self.data
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        let d = self.dim;
        let mut data = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = (0..d).map(|l| self.get(i, l) * other.get(l, j)).sum();
            }
        }
        IntMatrix { dim: d, data }
    }

    pub fn transpose(&self) -> IntMatrix {
        let d = self.dim;
        let mut data = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.get(i, j);
            }
        }
        IntMatrix { dim: d, data }
    }

    pub fn apply(&self, v: &[i64]) -> Vec<i64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> i128 {
        let n = self.dim;
        if n == 0 {
            return 1;
        }
        let mut m: Vec<Vec<i128>> = (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j) as i128).collect())
            .collect();
        let mut sign = 1;
        let mut prev = 1i128;
        for k in 0..n - 1 {
            if m[k][k] == 0 {
                match (k + 1..n).find(|&i| m[i][k] != 0) {
                    Some(p) => {
                        m.swap(k, p);
                        sign = -sign;
                    }
                    None => return 0,
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
                }
            }
            prev = m[k][k];
        }
        sign * m[n - 1][n - 1]
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.data.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// A finite group of lattice automorphisms, closed under products.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGroup {
    elements: Vec<IntMatrix>,
    duals: Vec<IntMatrix>,
    table: Vec<Vec<usize>>,
    inverses: Vec<usize>,
}

impl PointGroup {
    pub fn generate(generators: &[IntMatrix]) -> Result<Self> {
        Self::generate_bounded(generators, DEFAULT_MAX_ORDER)
    }

    /// Closes the generators under multiplication. The identity is element 0;
    /// the remaining elements appear in discovery order.
    pub fn generate_bounded(generators: &[IntMatrix], max_order: usize) -> Result<Self> {
        let dim = match generators.first() {
            Some(g) => g.dim(),
            None => return Self::generate_bounded(&[IntMatrix::identity(1)], max_order),
        };
        for (index, g) in generators.iter().enumerate() {
            if g.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: g.dim(),
                });
            }
            let det = g.det();
            if det.abs() != 1 {
                return Err(Error::NotUnimodular { index, det });
            }
        }

        let mut elements = vec![IntMatrix::identity(dim)];
        let mut lookup: HashMap<IntMatrix, usize> = HashMap::new();
        lookup.insert(elements[0].clone(), 0);
        for g in generators {
            if !lookup.contains_key(g) {
                lookup.insert(g.clone(), elements.len());
                elements.push(g.clone());
            }
        }
        let mut frontier = 0;
        while frontier < elements.len() {
            let a = elements[frontier].clone();
            for g in generators {
                let prod = a.mul(g);
                if !lookup.contains_key(&prod) {
                    if elements.len() >= max_order {
                        return Err(Error::GroupTooLarge { bound: max_order });
                    }
                    lookup.insert(prod.clone(), elements.len());
                    elements.push(prod);
                }
            }
            frontier += 1;
        }

        let n = elements.len();
        let mut table = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                table[a][b] = *lookup
                    .get(&elements[a].mul(&elements[b]))
                    .ok_or(Error::GroupTooLarge { bound: max_order })?;
            }
        }
        let inverses: Vec<usize> = (0..n)
            .map(|a| (0..n).find(|&b| table[a][b] == 0).expect("finite group has inverses"))
            .collect();
        let duals = (0..n)
            .map(|a| elements[inverses[a]].transpose())
            .collect();
        Ok(Self {
            elements,
            duals,
            table,
            inverses,
        })
    }

    pub fn trivial(dim: usize) -> Self {
        Self::generate(&[IntMatrix::identity(dim)]).expect("trivial group")
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn identity_index(&self) -> usize {
        0
    }

    pub fn elements(&self) -> &[IntMatrix] {
        &self.elements
    }

    /// Dual-coordinate matrix `Ĝ = (Gᵗ)⁻¹` of element `g`.
    pub fn dual(&self, g: usize) -> &IntMatrix {
        &self.duals[g]
    }

    pub fn product(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inverse(&self, g: usize) -> usize {
        self.inverses[g]
    }
}

/// The action of a point group on the `(offset, cell)` indices of a grid.
#[derive(Debug, Clone)]
pub struct GridAction<'a> {
    group: &'a PointGroup,
    grid: &'a FrequencyGrid,
    offset_perm: Vec<Vec<usize>>,
}

impl<'a> GridAction<'a> {
    /// Validates that the offset set is closed under every dual matrix.
    pub fn new(group: &'a PointGroup, grid: &'a FrequencyGrid) -> Result<Self> {
        if group.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: group.dim(),
            });
        }
        let mut offset_perm = Vec::with_capacity(group.order());
        for g in 0..group.order() {
            let dual = group.dual(g);
            let perm = grid
                .offsets()
                .iter()
                .map(|k| {
                    let image = dual.apply(k);
                    grid.offset_position(&image)
                        .ok_or_else(|| Error::OffsetsNotGroupClosed {
                            offset: k.clone(),
                            image,
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            offset_perm.push(perm);
        }
        Ok(Self {
            group,
            grid,
            offset_perm,
        })
    }

    pub fn group(&self) -> &PointGroup {
        self.group
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.grid
    }

    pub fn map_offset(&self, g: usize, offset: usize) -> usize {
        self.offset_perm[g][offset]
    }

    /// `j ↦ Ĝj mod r` on torus corners.
    pub fn map_cell(&self, g: usize, cell: usize) -> usize {
        map_cell(self.group, self.grid, g, cell)
    }

    pub fn map_index(&self, g: usize, index: usize) -> usize {
        let (o, c) = self.grid.split_index(index);
        self.grid
            .global_index(self.map_offset(g, o), self.map_cell(g, c))
    }

    /// Applies `P_g` to a fiber vector: `(P_g v)[Ĝk] = v[k]`.
    pub fn permute_fiber<T: Copy + Default>(&self, g: usize, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        for (k, &x) in v.iter().enumerate() {
            out[self.offset_perm[g][k]] = x;
        }
        out
    }
}

fn map_cell(group: &PointGroup, grid: &FrequencyGrid, g: usize, cell: usize) -> usize {
    let r = grid.resolution() as i64;
    let j: Vec<i64> = grid.cell_coords(cell).into_iter().map(|x| x as i64).collect();
    let image: Vec<usize> = group
        .dual(g)
        .apply(&j)
        .into_iter()
        .map(|x| x.rem_euclid(r) as usize)
        .collect();
    grid.cell_index(&image)
}

/// Orbits of a group action on a finite index set. Each orbit is sorted
/// ascending, so its first element is the lexicographically smallest index
/// and serves as representative.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitPartition {
    orbits: Vec<Vec<usize>>,
}

impl OrbitPartition {
    fn build(size: usize, order: usize, act: impl Fn(usize, usize) -> usize) -> Self {
        let mut seen = vec![false; size];
        let mut orbits = Vec::new();
        for x in 0..size {
            if seen[x] {
                continue;
            }
            let mut orbit: Vec<usize> = (0..order).map(|g| act(g, x)).collect();
            orbit.sort_unstable();
            orbit.dedup();
            for &y in &orbit {
                seen[y] = true;
            }
            orbits.push(orbit);
        }
        Self { orbits }
    }

    /// Orbits of all `(offset, cell)` indices (as global indices).
    pub fn of_indices(action: &GridAction<'_>) -> Self {
        Self::build(action.grid().index_count(), action.group().order(), |g, x| {
            action.map_index(g, x)
        })
    }

    /// Orbits of torus cells. This needs no offset closure.
    pub fn of_cells(group: &PointGroup, grid: &FrequencyGrid) -> Self {
        Self::build(grid.cell_count(), group.order(), |g, c| {
            map_cell(group, grid, g, c)
        })
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    pub fn representatives(&self) -> impl Iterator<Item = usize> + '_ {
        self.orbits.iter().map(|o| o[0])
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }
}

/// Orbit partition of the full `(offset, cell)` index set.
pub fn orbit_partition(grid: &FrequencyGrid, group: &PointGroup) -> Result<OrbitPartition> {
    let action = GridAction::new(group, grid)?;
    Ok(OrbitPartition::of_indices(&action))
}
