//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when a check or example fails, 2 on usage
//! or input errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataset::{project_pw, residual_energy, synthesize, SpectralDataset};
use crate::error::{Error, Result};
use crate::fiber::gramian_field;
use crate::format::{num, Table};
use crate::grid::FrequencyGrid;
use crate::group::PointGroup;
use crate::io::{
    parse_group, parse_lattice, parse_lattices, parse_offsets, read_dataset, read_mask, write_dataset,
    write_gramians, write_mask,
};
use crate::lattice::Lattice;
use crate::omega::{best_omega, best_omega_invariant, energy_density};
use crate::reproduce::{reproduce_example, EXAMPLE_IDS};
use crate::scene::Scene;
use crate::solver::{
    best_gamma, best_sis, generators, project_then_solve, solve_then_project, subspace_length, RANK_TOL,
};
use crate::suites::{run_suites, SuiteConfig, SUITES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pwsis", version, about = "Best shift-invariant approximation of band-limited data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a scene on a frequency grid and write the dataset.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long)]
        resolution: usize,
        #[arg(long)]
        offsets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Best approximation by an invariant subspace of length at most `ell`.
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        group: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Write generators of the optimal subspace, with an `error` line.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Relative eigenvalue threshold for the reported length.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        dump_gramian: Option<PathBuf>,
    },
    /// Project a dataset onto the band given by a mask.
    Project {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Band of measure `M` that keeps the most energy.
    OmegaOpt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        measure: f64,
        #[arg(long)]
        group: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare projecting before and after solving.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        ell: usize,
    },
    /// Best errors of one scene over several lattices.
    CompareLattices {
        /// Scene file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lattices: PathBuf,
        #[arg(long)]
        ell: usize,
    },
    /// Rebuild the worked examples and check their values.
    Examples {
        #[arg(long)]
        id: Option<String>,
    },
    /// Run the randomized property suites.
    Check {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

/// Runs the command line `argv` (program name first), writing the report
/// to `out` and diagnostics to `err`.
pub fn run<I, S>(argv: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let threads = match std::env::var("PWSIS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                let _ = writeln!(err, "error: PWSIS_THREADS must be a positive integer, got `{v}`");
                return EXIT_USAGE;
            }
        },
        Err(_) => None,
    };
    // The report is assembled in memory so the pool never touches `out`.
    let mut buf = Vec::new();
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, &mut buf)),
            Err(e) => {
                let _ = writeln!(err, "error: cannot start thread pool: {e}");
                return EXIT_USAGE;
            }
        },
        None => dispatch(cli.command, &mut buf),
    };
    if let Err(e) = out.write_all(&buf).and_then(|_| out.flush()) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_data(path: &Path) -> Result<SpectralDataset> {
    Ok(read_dataset(&read(path)?)?.0)
}

fn load_group(path: &Option<PathBuf>) -> Result<Option<PointGroup>> {
    path.as_deref().map(|p| parse_group(&read(p)?)).transpose()
}

fn dispatch(command: Command, out: &mut Vec<u8>) -> Result<i32> {
    match command {
        Command::Synth {
            scene,
            lattice,
            resolution,
            offsets,
            out: path,
        } => {
            let scene = Scene::parse(&read(&scene)?)?;
            let lattice = parse_lattice(&read(&lattice)?)?;
            let offsets = parse_offsets(&read(&offsets)?)?;
            let grid = FrequencyGrid::new(lattice, resolution, offsets)?;
            let data = synthesize(&scene, &grid)?;
            let mut w = create(&path)?;
            write_dataset(&mut w, &data, None)?;
            w.flush()?;
            let mut t = Table::new(["channel", "energy"]);
            for (i, e) in data.energies().iter().enumerate() {
                t.row([i.to_string(), num(*e)]);
            }
            write!(out, "{}", t.render())?;
            writeln!(out, "samples {}", grid.index_count())?;
        }
        Command::Solve {
            data,
            ell,
            group,
            mask,
            out: path,
            tolerance,
            dump_gramian,
        } => {
            let data = load_data(&data)?;
            let group = load_group(&group)?;
            if let Some(p) = dump_gramian {
                let mut w = create(&p)?;
                write_gramians(&mut w, &gramian_field(&data))?;
                w.flush()?;
            }
            let (model, report, split) = match mask {
                Some(m) => {
                    let mask = read_mask(&read(&m)?)?;
                    let (model, rep) = project_then_solve(&data, &mask, ell, group.as_ref())?;
                    let split = (rep.projected_error, rep.band_error);
                    (model, rep.direct, Some(split))
                }
                None => {
                    let (model, rep) = match &group {
                        Some(g) => best_gamma(&data, g, ell)?,
                        None => best_sis(&data, ell)?,
                    };
                    (model, rep, None)
                }
            };
            let mut t = Table::new(["channel", "energy", "error"]);
            for (i, (e, r)) in data.energies().iter().zip(&report.per_channel).enumerate() {
                t.row([i.to_string(), num(*e), num(*r)]);
            }
            write!(out, "{}", t.render())?;
            if let Some((p, b)) = split {
                writeln!(out, "projected_error {}", num(p))?;
                writeln!(out, "band_error {}", num(b))?;
            }
            writeln!(out, "total_energy {}", num(data.total_energy()))?;
            writeln!(out, "error {}", num(report.total_error))?;
            writeln!(out, "model_length {}", model.length())?;
            writeln!(out, "data_length {}", subspace_length(&data, tolerance.unwrap_or(RANK_TOL))?)?;
            if let Some(p) = path {
                let gens = generators(&model, &data)?;
                let mut w = create(&p)?;
                write_dataset(&mut w, &gens, Some(report.total_error))?;
                w.flush()?;
            }
        }
        Command::Project { data, mask, out: path } => {
            let data = load_data(&data)?;
            let mask = read_mask(&read(&mask)?)?;
            let projected = project_pw(&data, &mask)?;
            let residual = residual_energy(&data, &mask)?;
            let mut w = create(&path)?;
            write_dataset(&mut w, &projected, None)?;
            w.flush()?;
            let mut t = Table::new(["channel", "kept", "removed"]);
            for (i, (k, r)) in projected.energies().iter().zip(&residual).enumerate() {
                t.row([i.to_string(), num(*k), num(*r)]);
            }
            write!(out, "{}", t.render())?;
            writeln!(out, "band_measure {}", num(mask.measure()))?;
        }
        Command::OmegaOpt {
            data,
            measure,
            group,
            out: path,
        } => {
            let data = load_data(&data)?;
            let sel = match load_group(&group)? {
                Some(g) => best_omega_invariant(&data, &g, measure)?,
                None => best_omega(&energy_density(&data), measure)?,
            };
            let mut w = create(&path)?;
            write_mask(&mut w, &sel.mask)?;
            w.flush()?;
            let level = |v: Option<f64>| v.map_or_else(|| "-".to_string(), num);
            writeln!(out, "measure {}", num(sel.mask.measure()))?;
            writeln!(out, "attained {}", num(sel.attained))?;
            writeln!(out, "residual {}", num(sel.residual))?;
            writeln!(out, "level_inside {}", level(sel.levels.0))?;
            writeln!(out, "level_outside {}", level(sel.levels.1))?;
        }
        Command::Pipeline { data, mask, ell } => {
            let data = load_data(&data)?;
            let mask = read_mask(&read(&mask)?)?;
            let (_, pts) = project_then_solve(&data, &mask, ell, None)?;
            let (_, stp) = solve_then_project(&data, &mask, ell)?;
            writeln!(out, "project_then_solve {}", num(pts.total))?;
            writeln!(out, "  projected_error {}", num(pts.projected_error))?;
            writeln!(out, "  band_error {}", num(pts.band_error))?;
            writeln!(out, "solve_then_project {}", num(stp.total_error))?;
            writeln!(out, "gap {}", num(stp.total_error - pts.total))?;
        }
        Command::CompareLattices { data, lattices, ell } => {
            let scene = Scene::parse(&read(&data)?)?;
            let entries = parse_lattices(&read(&lattices)?)?;
            let mut t = Table::new(["lattice", "resolution", "offsets", "error", "length"]);
            for e in entries {
                let offsets = covering_offsets(&scene, &e.lattice)?;
                let grid = FrequencyGrid::new(e.lattice, e.resolution, offsets)?;
                let d = synthesize(&scene, &grid)?;
                let err = best_sis(&d, ell)?.1.total_error;
                let len = subspace_length(&d, RANK_TOL)?;
                t.row([
                    e.label,
                    e.resolution.to_string(),
                    grid.offset_count().to_string(),
                    num(err),
                    len.to_string(),
                ]);
            }
            write!(out, "{}", t.render())?;
        }
        Command::Examples { id } => {
            let ids: Vec<&str> = match &id {
                Some(i) => vec![i.as_str()],
                None => EXAMPLE_IDS.to_vec(),
            };
            let mut all = true;
            for (n, i) in ids.iter().enumerate() {
                let rep = reproduce_example(i)?;
                if n > 0 {
                    writeln!(out)?;
                }
                write!(out, "{}", rep.render())?;
                all &= rep.passed();
            }
            return Ok(if all { EXIT_OK } else { EXIT_CHECK_FAILED });
        }
        Command::Check { suite, seed, instances } => {
            let names: Vec<&str> = match &suite {
                Some(s) => vec![s.as_str()],
                None => SUITES.to_vec(),
            };
            let cfg = SuiteConfig {
                seed,
                instances,
                ..SuiteConfig::default()
            };
            let summary = run_suites(&names, &cfg)?;
            write!(out, "{}", summary.render())?;
            return Ok(if summary.passed() { EXIT_OK } else { EXIT_CHECK_FAILED });
        }
    }
    Ok(EXIT_OK)
}

/// Offsets whose dual cells cover the scene's support, plus the origin.
fn covering_offsets(scene: &Scene, lattice: &Lattice) -> Result<Vec<Vec<i64>>> {
    let d = lattice.dim();
    if let Some(sd) = scene.dim() {
        if sd != d {
            return Err(Error::DimensionMismatch { expected: d, got: sd });
        }
    }
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for term in scene.terms() {
        let (blo, bhi) = term.primitive.bounding_box();
        for corner in 0..1usize << d {
            let xi: Vec<f64> = (0..d)
                .map(|a| if corner >> a & 1 == 1 { bhi[a] } else { blo[a] })
                .collect();
            for (a, c) in lattice.frequency_to_dual(&xi).into_iter().enumerate() {
                let k = c.floor() as i64;
                lo[a] = lo[a].min(k);
                hi[a] = hi[a].max(k);
            }
        }
    }
    let mut out = vec![Vec::new()];
    for a in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (lo[a]..=hi[a]).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}
