//! Randomized property suites over small instances.
//!
//! Every suite draws its instances from a ChaCha8 stream keyed by the seed
//! and the suite's position in [`SUITES`], so a run is reproducible from
//! `(seed, suite)` alone. The first failing instance of each property is
//! kept in serialized form for replay.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{project_pw, residual_energy, synthesize, PwMask, SpectralDataset};
use crate::eigen::hermitian_eigen;
use crate::error::{Error, Result};
use crate::fiber::{
    covariance_deviation, fiber, gramian_field, membership_test, refine, symmetrize, transport_to_base,
    transport_to_dilated,
};
use crate::format::{num, Table};
use crate::grid::FrequencyGrid;
use crate::group::{GridAction, IntMatrix, OrbitPartition, PointGroup};
use crate::io::dataset_to_string;
use crate::lattice::Lattice;
use crate::omega::{best_omega, best_omega_invariant, energy_density, omega_duality_check};
use crate::scene::{Primitive, Scene, Term};
use crate::solver::{
    best_gamma, best_sis, dilation_equivalence, error_against, generators, project_then_solve,
    refinement_inequality_check, subspace_length, SubspaceModel, RANK_TOL,
};

pub const SUITES: [&str; 11] = [
    "lattice",
    "plancherel",
    "fiber",
    "membership",
    "covariance",
    "dilation",
    "eckart-young",
    "decomposition",
    "equivariance",
    "refinement",
    "omega",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub instances: usize,
    /// Random competitor models per instance in the optimality checks.
    pub models: usize,
    /// Upper bound on channels per dataset; 0 makes every dataset empty.
    pub max_channels: usize,
    /// Negates the transported Gramian in the covariance suite.
    pub inject_gramian_sign_error: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 20,
            models: 100,
            max_channels: 3,
            inject_gramian_sign_error: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub suite: String,
    pub property: String,
    pub passed: usize,
    pub total: usize,
    /// The first failing instance, serialized.
    pub failure: Option<String>,
}

impl PropertyOutcome {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub outcomes: Vec<PropertyOutcome>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(PropertyOutcome::ok)
    }

    pub fn render(&self) -> String {
        let mut t = Table::new(["suite", "property", "passed", "total", "status"]);
        for o in &self.outcomes {
            t.row([
                o.suite.clone(),
                o.property.clone(),
                o.passed.to_string(),
                o.total.to_string(),
                if o.ok() { "PASS" } else { "FAIL" }.to_string(),
            ]);
        }
        let mut out = t.render();
        for o in self.outcomes.iter().filter(|o| !o.ok()) {
            if let Some(f) = &o.failure {
                out.push_str(&format!("failing instance for {}/{}:\n{f}", o.suite, o.property));
                if !f.ends_with('\n') {
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Runs the named suites in the given order.
pub fn run_suites(names: &[&str], cfg: &SuiteConfig) -> Result<Summary> {
    let mut summary = Summary::default();
    for name in names {
        summary.outcomes.extend(run_suite(name, cfg)?);
    }
    Ok(summary)
}

pub fn run_all(cfg: &SuiteConfig) -> Summary {
    run_suites(&SUITES, cfg).expect("known suites")
}

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<Vec<PropertyOutcome>> {
    let stream = SUITES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::UnknownSuite(name.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream as u64);
    let mut rec = Recorder {
        suite: SUITES[stream],
        seed: cfg.seed,
        instance: 0,
        outcomes: Vec::new(),
    };
    for n in 0..cfg.instances {
        rec.instance = n;
        match name {
            "lattice" => lattice_suite(&mut rng, &mut rec),
            "plancherel" => plancherel_suite(&mut rng, cfg, &mut rec),
            "fiber" => fiber_suite(&mut rng, cfg, &mut rec),
            "membership" => membership_suite(&mut rng, cfg, &mut rec),
            "covariance" => covariance_suite(&mut rng, cfg, &mut rec),
            "dilation" => dilation_suite(&mut rng, cfg, &mut rec),
            "eckart-young" => eckart_young_suite(&mut rng, cfg, &mut rec),
            "decomposition" => decomposition_suite(&mut rng, cfg, &mut rec),
            "equivariance" => equivariance_suite(&mut rng, cfg, &mut rec),
            "refinement" => refinement_suite(&mut rng, cfg, &mut rec),
            "omega" => omega_suite(&mut rng, cfg, &mut rec),
            _ => unreachable!("suite list and dispatch agree"),
        }
    }
    Ok(rec.outcomes)
}

struct Recorder {
    suite: &'static str,
    seed: u64,
    instance: usize,
    outcomes: Vec<PropertyOutcome>,
}

impl Recorder {
    fn check(&mut self, property: &str, outcome: Result<bool>, context: impl FnOnce() -> String) {
        let pos = match self.outcomes.iter().position(|o| o.property == property) {
            Some(p) => p,
            None => {
                self.outcomes.push(PropertyOutcome {
                    suite: self.suite.to_string(),
                    property: property.to_string(),
                    passed: 0,
                    total: 0,
                    failure: None,
                });
                self.outcomes.len() - 1
            }
        };
        let out = &mut self.outcomes[pos];
        out.total += 1;
        let error = match outcome {
            Ok(true) => {
                out.passed += 1;
                return;
            }
            Ok(false) => None,
            Err(e) => Some(e.to_string()),
        };
        if out.failure.is_none() {
            let mut text = format!("# suite {} seed {} instance {}\n", self.suite, self.seed, self.instance);
            if let Some(e) = error {
                text.push_str(&format!("# error: {e}\n"));
            }
            text.push_str(&context());
            out.failure = Some(text);
        }
    }
}

/// Random instance builders shared by the suites and the test oracles.
pub mod gen {
    use super::*;

    pub fn complex(rng: &mut impl Rng) -> Complex64 {
        if rng.gen_bool(0.2) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }
    }

    /// An invertible matrix with `|det| ≥ 0.3`.
    pub fn matrix(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
        loop {
            let m: DMatrix<f64> = DMatrix::from_fn(d, d, |i, j| {
                let v = rng.gen_range(-0.5..0.5);
                if i == j {
                    v + if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                } else {
                    v
                }
            });
            if m.determinant().abs() >= 0.3 {
                return m;
            }
        }
    }

    pub fn lattice(rng: &mut impl Rng, d: usize) -> Lattice {
        Lattice::new(matrix(rng, d)).expect("nondegenerate")
    }

    /// Up to `max` offsets drawn from a small box, always including 0.
    pub fn offsets(rng: &mut impl Rng, d: usize, max: usize) -> Vec<Vec<i64>> {
        let reach = if d == 1 { 2 } else { 1 };
        let mut pool: Vec<Vec<i64>> = FrequencyGrid::box_offsets(d, -reach, reach)
            .into_iter()
            .filter(|k| k.iter().any(|&x| x != 0))
            .collect();
        pool.shuffle(rng);
        let extra = rng.gen_range(0..max.max(1));
        let mut out = vec![vec![0; d]];
        out.extend(pool.into_iter().take(extra));
        out
    }

    pub fn grid(rng: &mut impl Rng, lattice: Lattice, max_offsets: usize, max_r: usize) -> FrequencyGrid {
        let d = lattice.dim();
        let k = offsets(rng, d, max_offsets);
        let r = rng.gen_range(1..=max_r);
        FrequencyGrid::new(lattice, r, k).expect("valid grid")
    }

    /// A small grid in one or two dimensions over a random lattice.
    pub fn small_grid(rng: &mut impl Rng) -> FrequencyGrid {
        if rng.gen_bool(0.6) {
            let l = lattice(rng, 1);
            grid(rng, l, 4, 8)
        } else {
            let l = lattice(rng, 2);
            grid(rng, l, 4, 3)
        }
    }

    pub fn channels(rng: &mut impl Rng, max: usize) -> usize {
        if max == 0 {
            0
        } else {
            rng.gen_range(1..=max)
        }
    }

    /// Random samples; about a fifth of the cells are zero in every channel.
    pub fn dataset(rng: &mut impl Rng, grid: &FrequencyGrid, m: usize) -> SpectralDataset {
        let dead: Vec<bool> = (0..grid.cell_count()).map(|_| rng.gen_bool(0.2)).collect();
        let mut data = SpectralDataset::zeros(grid.clone(), m);
        for i in 0..m {
            for o in 0..grid.offset_count() {
                for (c, &z) in dead.iter().enumerate() {
                    let v = complex(rng);
                    if !z && v.norm_sqr() > 0.0 {
                        data.set(i, o, c, v);
                    }
                }
            }
        }
        data
    }

    pub fn mask(rng: &mut impl Rng, grid: &FrequencyGrid) -> PwMask {
        let bits = (0..grid.index_count()).map(|_| rng.gen_bool(0.5)).collect();
        PwMask::from_bits(grid.clone(), bits).expect("sized to grid")
    }

    /// Gram-Schmidt with a relative drop threshold.
    pub fn orthonormalize(vectors: Vec<Vec<Complex64>>, drop: f64) -> Vec<Vec<Complex64>> {
        let mut out: Vec<Vec<Complex64>> = Vec::new();
        for mut v in vectors {
            let n0: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            for _ in 0..2 {
                for e in &out {
                    let ip: Complex64 = v.iter().zip(e).map(|(x, y)| x * y.conj()).sum();
                    for (x, y) in v.iter_mut().zip(e) {
                        *x -= ip * y;
                    }
                }
            }
            let n: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if n > drop * n0 && n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                out.push(v);
            }
        }
        out
    }

    /// A random per-cell orthonormal model of dimension at most `dim`,
    /// supported inside `support` when given.
    pub fn model(rng: &mut impl Rng, grid: &FrequencyGrid, dim: usize, support: Option<&PwMask>) -> SubspaceModel {
        let k = grid.offset_count();
        let bases = (0..grid.cell_count())
            .map(|c| {
                let vs = (0..dim)
                    .map(|_| {
                        (0..k)
                            .map(|o| match support {
                                Some(m) if !m.get(o, c) => Complex64::new(0.0, 0.0),
                                _ => Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                            })
                            .collect()
                    })
                    .collect();
                orthonormalize(vs, 1e-6)
            })
            .collect();
        SubspaceModel::from_bases(grid.clone(), dim, bases).expect("orthonormal by construction")
    }

    /// A point group in two dimensions, possibly trivial.
    pub fn group(rng: &mut impl Rng) -> PointGroup {
        let m = |v: [i64; 4]| IntMatrix::from_row_major(2, v.to_vec()).expect("2x2");
        let choices = [
            vec![m([1, 0, 0, 1])],
            vec![m([-1, 0, 0, -1])],
            vec![m([0, -1, 1, 0])],
            vec![m([0, 1, 1, 0])],
            vec![m([1, 0, 0, -1])],
            vec![m([0, -1, 1, 0]), m([0, 1, 1, 0])],
            vec![m([-1, 0, 0, 1]), m([1, 0, 0, -1])],
        ];
        PointGroup::generate(choices.choose(rng).expect("non-empty")).expect("finite group")
    }

    /// A square grid whose offsets are closed under every 2-D point group.
    pub fn symmetric_grid(rng: &mut impl Rng, max_r: usize) -> FrequencyGrid {
        let offsets = if rng.gen_bool(0.5) {
            vec![vec![0, 0]]
        } else {
            FrequencyGrid::box_offsets(2, -1, 1)
        };
        let r = rng.gen_range(1..=max_r);
        FrequencyGrid::new(Lattice::integer(2), r, offsets).expect("valid grid")
    }
}

/// Errors are not `Clone`; reports only need the message.
fn same(e: &Error) -> Error {
    Error::InvalidModel(e.to_string())
}

fn scale(data: &SpectralDataset) -> f64 {
    data.total_energy()
}

fn describe(data: &SpectralDataset, params: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in params {
        s.push_str(&format!("# {k} {v}\n"));
    }
    s + &dataset_to_string(data, None)
}

fn matrix_text(a: &DMatrix<f64>) -> String {
    let d = a.nrows();
    (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| crate::io::real(a[(i, j)]))
        .collect::<Vec<_>>()
        .join(" ")
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn lattice_suite(rng: &mut ChaCha8Rng, rec: &mut Recorder) {
    let d = rng.gen_range(1..=3);
    let l = gen::lattice(rng, d);
    let a = gen::matrix(rng, d);
    let ctx = || format!("# basis {}\n# A {}\n", matrix_text(l.basis()), matrix_text(&a));

    let dual = l.dilate(&a).map(|dl| {
        let ahat = a.transpose().try_inverse().expect("invertible");
        let want = ahat * l.dual_basis();
        max_abs_diff(dl.dual_basis(), &want) <= 1e-10 * (1.0 + want.abs().max())
    });
    rec.check("dual-of-dilation", dual, ctx);

    let xi: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let (u, k) = l.reduce_to_fundamental(&xi);
    let coords: Vec<f64> = u.iter().zip(&k).map(|(a, &b)| a + b as f64).collect();
    let back = l.dual_to_frequency(&coords);
    let ok = u.iter().all(|&x| (0.0..1.0).contains(&x))
        && back.iter().zip(&xi).all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + b.abs()));
    rec.check("fundamental-roundtrip", Ok(ok), || format!("# xi {xi:?}\n{}", ctx()));

    let group = gen::group(rng);
    let grid = gen::symmetric_grid(rng, 4);
    let gctx = || format!("# group order {} resolution {}\n", group.order(), grid.resolution());
    let closure = GridAction::new(&group, &grid).map(|action| {
        let part = OrbitPartition::of_indices(&action);
        let mut id = vec![usize::MAX; grid.index_count()];
        for (n, o) in part.orbits().iter().enumerate() {
            for &x in o {
                id[x] = n;
            }
        }
        let sizes: usize = part.orbits().iter().map(Vec::len).sum();
        sizes == grid.index_count()
            && part
                .orbits()
                .iter()
                .enumerate()
                .all(|(n, o)| o.iter().all(|&x| (0..group.order()).all(|g| id[action.map_index(g, x)] == n)))
    });
    rec.check("orbit-closure", closure, gctx);

    let weight = GridAction::new(&group, &grid).map(|action| {
        (0..group.order()).all(|g| {
            let det = group.dual(g).det();
            let mut seen = vec![false; grid.cell_count()];
            for c in 0..grid.cell_count() {
                seen[action.map_cell(g, c)] = true;
            }
            det.abs() == 1 && seen.iter().all(|&s| s)
        })
    });
    rec.check("weight-preservation", weight, gctx);
}

fn plancherel_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let grid = gen::small_grid(rng);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let mask = gen::mask(rng, &grid);
    let ctx = || describe(&data, &[]);

    let w = grid.cell_weight();
    let quad = (0..m).all(|i| {
        let sum: f64 = (0..grid.offset_count())
            .map(|o| (0..grid.cell_count()).map(|c| data.value(i, o, c).norm_sqr()).sum::<f64>())
            .sum();
        sum * w == data.energy(i)
    });
    rec.check("energy-quadrature", Ok(quad), ctx);

    let proj = project_pw(&data, &mask).and_then(|p| {
        let pp = project_pw(&p, &mask)?;
        let ortho = (0..m).all(|i| {
            let mut ip = Complex64::new(0.0, 0.0);
            for o in 0..grid.offset_count() {
                for c in 0..grid.cell_count() {
                    let pv = p.value(i, o, c);
                    ip += pv * (data.value(i, o, c) - pv).conj();
                }
            }
            ip.norm() * w <= 1e-12 * (1.0 + data.energy(i))
        });
        Ok(pp == p && ortho)
    });
    rec.check("projection-idempotent", proj, ctx);

    let pyth = project_pw(&data, &mask).and_then(|p| {
        let res = residual_energy(&data, &mask)?;
        Ok((0..m).all(|i| (data.energy(i) - p.energy(i) - res[i]).abs() <= 1e-10))
    });
    rec.check("pythagoras", pyth, ctx);

    // Interval endpoints on the 1/r lattice of Z.
    let r = rng.gen_range(1..=8usize);
    let line = FrequencyGrid::new(Lattice::integer(1), r, FrequencyGrid::box_offsets(1, -2, 2)).expect("valid");
    let specs: Vec<(i64, i64, f64)> = (0..m)
        .map(|_| {
            let a = rng.gen_range(-2 * r as i64..3 * r as i64);
            let b = rng.gen_range(a + 1..=3 * r as i64);
            (a, b, rng.gen_range(-2.0..2.0))
        })
        .collect();
    let scene = Scene::new(
        specs
            .iter()
            .map(|&(a, b, c)| {
                vec![Term::indicator(
                    c,
                    Primitive::Interval {
                        a: a as f64 / r as f64,
                        b: b as f64 / r as f64,
                    },
                )]
            })
            .collect(),
    );
    let aligned = scene.and_then(|s| synthesize(&s, &line)).map(|d| {
        specs.iter().enumerate().all(|(i, &(a, b, c))| {
            let want = c * c * (b - a) as f64 / r as f64;
            (d.energy(i) - want).abs() <= 1e-12 * (1.0 + want)
        })
    });
    rec.check("aligned-exactness", aligned, || format!("# resolution {r}\n# intervals {specs:?}\n"));
}

fn fiber_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let grid = gen::small_grid(rng);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let ctx = || describe(&data, &[]);

    let iso = (0..m)
        .map(|i| {
            let s: f64 = (0..grid.cell_count())
                .map(|c| fiber(&data, i, c).map(|f| f.norm_sqr()))
                .sum::<Result<f64>>()?;
            let e = data.energy(i);
            Ok((s * grid.cell_weight() - e).abs() <= 1e-12 * (1.0 + e))
        })
        .collect::<Result<Vec<bool>>>()
        .map(|v| v.into_iter().all(|b| b));
    rec.check("isometry", iso, ctx);

    let field = gramian_field(&data);
    let psd = (0..grid.cell_count())
        .map(|c| {
            let g = field.at(c);
            let trace = field.trace(c);
            let norms: f64 = (0..m).map(|i| fiber(&data, i, c).map(|f| f.norm_sqr())).sum::<Result<f64>>()?;
            let e = hermitian_eigen(g, m)?;
            Ok((trace - norms).abs() <= 1e-12 * (1.0 + norms)
                && e.values.iter().all(|&l| l >= -1e-10 * (1.0 + trace)))
        })
        .collect::<Result<Vec<bool>>>()
        .map(|v| v.into_iter().all(|b| b));
    rec.check("gramian-psd-trace", psd, ctx);

    let group = gen::group(rng);
    let sgrid = gen::symmetric_grid(rng, 3);
    let sdata = gen::dataset(rng, &sgrid, m);
    let twice = symmetrize(&sdata, &group).and_then(|s1| {
        let s2 = symmetrize(&s1, &group)?;
        let n = group.order();
        let ms = s1.channel_count();
        Ok((0..n).all(|h| {
            (0..n).all(|g| {
                (0..m).all(|i| {
                    let a = h * ms + g * m + i;
                    let b = group.product(h, g) * m + i;
                    (0..sgrid.offset_count())
                        .all(|o| (0..sgrid.cell_count()).all(|c| s2.value(a, o, c) == s1.value(b, o, c)))
                })
            })
        }))
    });
    rec.check("double-symmetrize", twice, || {
        describe(&sdata, &[("group-order", group.order().to_string())])
    });
}

fn membership_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let grid = gen::small_grid(rng);
    if cfg.max_channels == 0 {
        rec.check("periodic-multiplier", Ok(true), String::new);
        rec.check("mutual-implies-proportional", Ok(true), String::new);
        return;
    }
    let psi = gen::dataset(rng, &grid, 1);
    let mult: Vec<Complex64> = (0..grid.cell_count()).map(|_| gen::complex(rng)).collect();
    let f = SpectralDataset::from_fn(grid.clone(), 1, |_, o, c| mult[c] * psi.value(0, o, c));
    let other = gen::dataset(rng, &grid, 1);
    let ctx = || describe(&psi, &[("multiplier", format!("{mult:?}"))]);

    rec.check("periodic-multiplier", membership_test(&f, 0, &psi, 0, 1e-9), ctx);

    let pairs = [(&f, &psi), (&psi, &f), (&f, &other), (&other, &psi)];
    let mutual = pairs
        .iter()
        .map(|&(a, b)| {
            let both = membership_test(a, 0, b, 0, 1e-9)? && membership_test(b, 0, a, 0, 1e-9)?;
            if !both {
                return Ok(true);
            }
            Ok((0..grid.cell_count()).all(|c| {
                let x: Vec<Complex64> = (0..grid.offset_count()).map(|o| a.value(0, o, c)).collect();
                let y: Vec<Complex64> = (0..grid.offset_count()).map(|o| b.value(0, o, c)).collect();
                let g11: f64 = x.iter().map(|v| v.norm_sqr()).sum();
                let g22: f64 = y.iter().map(|v| v.norm_sqr()).sum();
                let g12: Complex64 = x.iter().zip(&y).map(|(p, q)| p * q.conj()).sum();
                g11 * g22 - g12.norm_sqr() <= 1e-8 * g11 * g22
            }))
        })
        .collect::<Result<Vec<bool>>>()
        .map(|v| v.into_iter().all(|b| b));
    rec.check("mutual-implies-proportional", mutual, ctx);
}

fn covariance_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let grid = gen::small_grid(rng);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let a = gen::matrix(rng, grid.dim());
    let ctx = || describe(&data, &[("A", matrix_text(&a))]);

    rec.check(
        "gramian-covariance",
        covariance_deviation(&data, &a, cfg.inject_gramian_sign_error).map(|dev| dev <= 1e-10),
        ctx,
    );

    let transport = transport_to_base(&data, &a).map(|base| {
        let det = a.determinant().abs();
        let ahat = a.transpose().try_inverse().expect("invertible");
        (0..grid.offset_count()).all(|o| {
            (0..grid.cell_count()).all(|c| {
                let here = nalgebra::DVector::from_vec(data.grid().frequency(o, c));
                let there = &ahat * nalgebra::DVector::from_vec(base.grid().frequency(o, c));
                let pos = (&here - &there).abs().max() <= 1e-10 * (1.0 + here.abs().max());
                pos && (0..m).all(|i| (data.value(i, o, c) - base.value(i, o, c) * det.sqrt()).norm() <= 1e-10)
            })
        })
    });
    rec.check("fiber-transport", transport, ctx);

    let roundtrip = transport_to_base(&data, &a).and_then(|b| transport_to_dilated(&b, &a)).map(|back| {
        let lat = max_abs_diff(back.grid().lattice().basis(), grid.lattice().basis()) <= 1e-12;
        lat && (0..m).all(|i| {
            (0..grid.offset_count())
                .all(|o| (0..grid.cell_count()).all(|c| (back.value(i, o, c) - data.value(i, o, c)).norm() <= 1e-12))
        })
    });
    rec.check("transport-roundtrip", roundtrip, ctx);
}

fn dilation_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let grid = gen::small_grid(rng);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let a = gen::matrix(rng, grid.dim());
    let ell = rng.gen_range(0..=m);
    let e = scale(&data);
    rec.check(
        "error-equivalence",
        dilation_equivalence(&data, &a, ell).map(|(l, r)| (l - r).abs() <= 1e-9 * e),
        || describe(&data, &[("A", matrix_text(&a)), ("ell", ell.to_string())]),
    );
}

fn eckart_young_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let grid = gen::small_grid(rng);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let ell = rng.gen_range(0..=m);
    let e = scale(&data);
    let ctx = || describe(&data, &[("ell", ell.to_string())]);
    let best = match best_sis(&data, ell) {
        Ok(b) => b,
        Err(err) => {
            rec.check("optimality", Err(err), ctx);
            return;
        }
    };
    let (model, report) = best;

    let opt = (0..cfg.models)
        .map(|_| {
            let s = gen::model(rng, &grid, ell, None);
            error_against(&data, &s).map(|r| report.total_error <= r.total_error + 1e-12 * (1.0 + e))
        })
        .collect::<Result<Vec<bool>>>()
        .map(|v| v.into_iter().all(|b| b));
    rec.check("optimality", opt, ctx);

    let mono = best_sis(&data, ell + 1).map(|(_, r)| r.total_error <= report.total_error + 1e-12 * (1.0 + e));
    rec.check("monotone-in-ell", mono, ctx);

    let zero = subspace_length(&data, RANK_TOL)
        .and_then(|l| best_sis(&data, l))
        .map(|(_, r)| r.total_error <= 1e-8 * e);
    rec.check("zero-at-length", zero, ctx);

    let span = generators(&model, &data).map(|g| {
        (0..grid.cell_count()).all(|c| {
            let dead = (0..m).all(|i| (0..grid.offset_count()).all(|o| data.value(i, o, c).norm_sqr() == 0.0));
            !dead
                || (0..g.channel_count())
                    .all(|i| (0..grid.offset_count()).all(|o| g.value(i, o, c).norm_sqr() == 0.0))
        })
    });
    rec.check("generators-in-span", span, ctx);

    let consistent =
        error_against(&data, &model).map(|r| (r.total_error - report.total_error).abs() <= 1e-10 * (1.0 + e));
    rec.check("report-consistency", consistent, ctx);
}

fn decomposition_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let l = gen::lattice(rng, 1);
    let grid = gen::grid(rng, l, 3, 8);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let mask = gen::mask(rng, &grid);
    let ell = rng.gen_range(0..=m);
    let e = scale(&data);
    let bits: String = mask.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
    let ctx = || describe(&data, &[("ell", ell.to_string()), ("mask", bits.clone())]);

    let s = gen::model(rng, &grid, ell, Some(&mask));
    let split = (|| {
        let full = error_against(&data, &s)?.total_error;
        let proj = error_against(&project_pw(&data, &mask)?, &s)?.total_error;
        let band: f64 = residual_energy(&data, &mask)?.iter().sum();
        Ok((full - proj - band).abs() <= 1e-9 * e)
    })();
    rec.check("pythagorean-split", split, ctx);

    let pad = rng.gen_range(1..=2usize);
    let padded = (|| {
        let (model, report) = best_sis(&data, ell)?;
        let k = grid.offset_count();
        let bases = (0..grid.cell_count())
            .map(|c| {
                let mut vs: Vec<Vec<Complex64>> = (0..m)
                    .map(|i| (0..k).map(|o| data.value(i, o, c)).collect())
                    .collect();
                vs.extend(model.basis(c).iter().cloned());
                let span = gen::orthonormalize(vs, 1e-9);
                let mut all = span.clone();
                for _ in 0..pad {
                    let v: Vec<Complex64> = (0..k)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect();
                    all.push(v);
                }
                let extra = gen::orthonormalize(all, 1e-3).split_off(span.len());
                let mut basis = model.basis(c).to_vec();
                basis.extend(extra);
                basis
            })
            .collect();
        let s2 = SubspaceModel::from_bases(grid.clone(), ell + pad, bases)?;
        let r2 = error_against(&data, &s2)?;
        Ok((r2.total_error - report.total_error).abs() <= 1e-10 * (1.0 + e))
    })();
    rec.check("padding-invariance", padded, ctx);

    let argmin = (|| {
        let (_, rep) = project_then_solve(&data, &mask, ell, None)?;
        let proj = project_pw(&data, &mask)?;
        for _ in 0..cfg.models {
            let s = gen::model(rng, &grid, ell, Some(&mask));
            if rep.projected_error > error_against(&proj, &s)?.total_error + 1e-12 * (1.0 + e) {
                return Ok(false);
            }
        }
        Ok(true)
    })();
    rec.check("argmin-inside-band", argmin, ctx);
}

fn projector(basis: &[Vec<Complex64>], k: usize) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(0.0, 0.0); k * k];
    for b in basis {
        for i in 0..k {
            for j in 0..k {
                p[i * k + j] += b[i] * b[j].conj();
            }
        }
    }
    p
}

fn equivariance_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let group = gen::group(rng);
    let grid = gen::symmetric_grid(rng, 4);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let ell = rng.gen_range(0..=m);
    let ctx = || describe(&data, &[("ell", ell.to_string()), ("group-order", group.order().to_string())]);
    let solved = (|| {
        let action = GridAction::new(&group, &grid)?;
        let (model, _) = best_gamma(&data, &group, ell)?;
        let k = grid.offset_count();
        let eq = (0..group.order()).all(|g| {
            (0..grid.cell_count()).all(|c| {
                let moved: Vec<Vec<Complex64>> = model.basis(c).iter().map(|b| action.permute_fiber(g, b)).collect();
                let p1 = projector(&moved, k);
                let p2 = projector(model.basis(action.map_cell(g, c)), k);
                p1.iter().zip(&p2).all(|(x, y)| (x - y).norm() <= 1e-12)
            })
        });
        let dims = (0..grid.cell_count()).all(|c| model.dim(c) <= ell);
        Ok((eq, dims))
    })();
    rec.check("range-equivariance", solved.as_ref().map(|r| r.0).map_err(same), ctx);
    rec.check("dimension-budget", solved.map(|r| r.1), ctx);
}

fn refinement_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let d = rng.gen_range(1..=2);
    let grid = gen::grid(rng, Lattice::integer(d), 4, if d == 1 { 6 } else { 3 });
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let n = rng.gen_range(2..=4usize);
    let ell = rng.gen_range(0..=m);
    let ctx = || describe(&data, &[("N", n.to_string()), ("ell", ell.to_string())]);
    rec.check(
        "refinement-inequality",
        refinement_inequality_check(&data, n, ell).map(|(fine, coarse)| fine <= coarse + 1e-10),
        ctx,
    );
    let e = scale(&data);
    rec.check(
        "refinement-energy",
        refine(&data, n).map(|f| (f.total_energy() - e).abs() <= 1e-12 * (1.0 + e)),
        ctx,
    );
}

/// Measure of a random union of orbits.
fn orbit_union_measure(rng: &mut impl Rng, action: &GridAction<'_>) -> f64 {
    let part = OrbitPartition::of_indices(action);
    let count: usize = part.orbits().iter().filter(|_| rng.gen_bool(0.5)).map(Vec::len).sum();
    count as f64 * action.grid().cell_weight()
}

fn omega_suite(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, rec: &mut Recorder) {
    let l = gen::lattice(rng, 1);
    let grid = gen::grid(rng, l, 2, 8);
    let m = gen::channels(rng, cfg.max_channels);
    let data = gen::dataset(rng, &grid, m);
    let phi = energy_density(&data);
    let n = grid.index_count();
    let count = rng.gen_range(0..=n);
    let w = grid.cell_weight();
    let e = scale(&data);
    let ctx = || describe(&data, &[("count", count.to_string())]);

    let opt = best_omega(&phi, count as f64 * w).map(|sel| {
        let v = phi.values();
        let total: f64 = v.iter().sum();
        let best = (0u32..1 << n)
            .filter(|s| s.count_ones() as usize == count)
            .map(|s| (0..n).filter(|&x| s >> x & 1 == 1).map(|x| v[x]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        ((total - best) * w - sel.residual).abs() <= 1e-12 * (1.0 + e)
    });
    rec.check("exhaustive-optimality", opt, ctx);

    let mono = (0..n)
        .map(|c| {
            let a = best_omega(&phi, c as f64 * w)?.residual;
            let b = best_omega(&phi, (c + 1) as f64 * w)?.residual;
            Ok(b <= a + 1e-12 * (1.0 + e))
        })
        .collect::<Result<Vec<bool>>>()
        .map(|v| v.into_iter().all(|b| b));
    rec.check("monotone-in-measure", mono, ctx);

    let threshold = best_omega(&phi, count as f64 * w).map(|sel| {
        let v = phi.values();
        let bits = sel.mask.bits();
        let lo = (0..n).filter(|&x| bits[x]).map(|x| v[x]).fold(f64::INFINITY, f64::min);
        let hi = (0..n).filter(|&x| !bits[x]).map(|x| v[x]).fold(f64::NEG_INFINITY, f64::max);
        lo >= hi
    });
    rec.check("threshold-structure", threshold, ctx);

    let group = gen::group(rng);
    let sgrid = {
        let r = rng.gen_range(1..=4);
        FrequencyGrid::new(Lattice::integer(2), r, vec![vec![0, 0]]).expect("valid")
    };
    let sdata = gen::dataset(rng, &sgrid, m);
    let se = scale(&sdata);
    let action = GridAction::new(&group, &sgrid).expect("single offset is closed");
    let measure = orbit_union_measure(rng, &action);
    let sctx = || describe(&sdata, &[("group-order", group.order().to_string()), ("measure", num(measure))]);

    let inv = best_omega_invariant(&sdata, &group, measure);
    rec.check(
        "invariant-mask-fixed",
        inv.as_ref()
            .map(|s| s.mask.is_invariant(&action).is_none() && (s.mask.measure() - measure).abs() <= 1e-12)
            .map_err(same),
        sctx,
    );
    let cost = inv.and_then(|s| {
        let free = best_omega(&energy_density(&sdata), measure)?;
        Ok(s.residual >= free.residual - 1e-12 * (1.0 + se))
    });
    rec.check("constraint-cost", cost, sctx);

    // With φ invariant the two optima agree at measures of super-level sets,
    // which are whole orbit unions; elsewhere orbit granularity can cost.
    let pick = rng.gen_range(0..OrbitPartition::of_indices(&action).len());
    let sym_equal = symmetrize(&sdata, &group).and_then(|sym| {
        let phi = energy_density(&sym);
        let orbits = OrbitPartition::of_indices(&action);
        let level = |o: &Vec<usize>| o.iter().map(|&x| phi.values()[x]).fold(f64::NEG_INFINITY, f64::max);
        let t = level(&orbits.orbits()[pick]);
        let count: usize = orbits.orbits().iter().filter(|o| level(o) >= t).map(Vec::len).sum();
        let level_measure = count as f64 * sgrid.cell_weight();
        let a = best_omega_invariant(&sym, &group, level_measure)?.residual;
        let b = best_omega(&phi, level_measure)?.residual;
        Ok((a - b).abs() <= 1e-10 * (1.0 + scale(&sym)))
    });
    rec.check("invariant-density-equality", sym_equal, sctx);

    rec.check(
        "orbit-duality",
        omega_duality_check(&sdata, &group, measure).map(|(l, r)| (l - r).abs() <= 1e-10 * (1.0 + se)),
        sctx,
    );
}
