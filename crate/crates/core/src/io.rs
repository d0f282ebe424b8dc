//! Line-oriented text formats for datasets, masks, models and the small
//! configuration files read by the command line.
//!
//! Floats are written in shortest round-trip form, so a dataset parsed back
//! compares equal to the one written.

use std::fmt::Write as _;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::dataset::{PwMask, SpectralDataset};
use crate::error::{Error, Result};
use crate::fiber::GramianField;
use crate::grid::FrequencyGrid;
use crate::group::{IntMatrix, PointGroup};
use crate::lattice::Lattice;

pub const DATASET_HEADER: &str = "pwsis-dataset v1";
pub const MASK_HEADER: &str = "pwsis-mask v1";
pub const GRAMIAN_HEADER: &str = "pwsis-gramian v1";

/// Shortest representation that parses back to the same `f64`.
pub fn real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_grid_header(out: &mut impl Write, header: &str, grid: &FrequencyGrid) -> io::Result<()> {
    writeln!(out, "{header}")?;
    writeln!(out, "dim {}", grid.dim())?;
    let b = grid.lattice().basis();
    let d = grid.dim();
    let entries: Vec<String> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| real(b[(i, j)]))
        .collect();
    writeln!(out, "lattice {}", entries.join(" "))?;
    writeln!(out, "resolution {}", grid.resolution())?;
    writeln!(out, "offsets {}", grid.offset_count())?;
    for k in grid.offsets() {
        let parts: Vec<String> = k.iter().map(i64::to_string).collect();
        writeln!(out, "{}", parts.join(" "))?;
    }
    Ok(())
}

/// Writes `data`, optionally followed by an `error` line (model files).
pub fn write_dataset(out: &mut impl Write, data: &SpectralDataset, error: Option<f64>) -> io::Result<()> {
    let grid = data.grid();
    write_grid_header(out, DATASET_HEADER, grid)?;
    writeln!(out, "channels {}", data.channel_count())?;
    for i in 0..data.channel_count() {
        for o in 0..grid.offset_count() {
            match data.block(i, o) {
                Some(b) => {
                    for v in b {
                        writeln!(out, "{} {}", real(v.re), real(v.im))?;
                    }
                }
                None => {
                    for _ in 0..grid.cell_count() {
                        writeln!(out, "0 0")?;
                    }
                }
            }
        }
    }
    if let Some(e) = error {
        writeln!(out, "error {}", real(e))?;
    }
    Ok(())
}

pub fn dataset_to_string(data: &SpectralDataset, error: Option<f64>) -> String {
    let mut buf = Vec::new();
    write_dataset(&mut buf, data, error).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn next(&mut self, field: &str) -> Result<&'a str> {
        match self.lines.next() {
            Some((n, l)) => {
                self.line = n + 1;
                Ok(l.trim())
            }
            None => Err(Error::parse(self.line + 1, field, "unexpected end of input")),
        }
    }

    /// Next line, which must read `key <rest>`.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next(key)?;
        match l.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            _ if l == key => Ok(""),
            _ => Err(Error::parse(self.line, key, format!("expected `{key} ...`, found `{l}`"))),
        }
    }

    fn rest_is_blank(&mut self) -> Result<()> {
        for (n, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                return Err(Error::parse(n + 1, "trailer", format!("unexpected content `{}`", l.trim())));
            }
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, field: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, field, format!("cannot parse `{s}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize, field: &str) -> Result<Vec<T>> {
    s.split_whitespace().map(|t| parse_num(t, line, field)).collect()
}

/// Parses the shared grid header; returns the grid and, for each offset in
/// file order, its position in the sorted grid.
fn read_grid_header(cur: &mut Cursor<'_>, header: &str) -> Result<(FrequencyGrid, Vec<usize>)> {
    let first = cur.next("header")?;
    if first != header {
        return Err(Error::parse(cur.line, "header", format!("expected `{header}`")));
    }
    let d: usize = parse_num(cur.keyed("dim")?, cur.line, "dim")?;
    if d == 0 {
        return Err(Error::parse(cur.line, "dim", "dimension must be positive"));
    }
    let entries: Vec<f64> = parse_list(cur.keyed("lattice")?, cur.line, "lattice")?;
    if entries.len() != d * d {
        return Err(Error::parse(cur.line, "lattice", format!("expected {} entries, found {}", d * d, entries.len())));
    }
    let line = cur.line;
    let lattice = Lattice::from_row_major(d, &entries).map_err(|e| Error::parse(line, "lattice", e.to_string()))?;
    let r: usize = parse_num(cur.keyed("resolution")?, cur.line, "resolution")?;
    let n: usize = parse_num(cur.keyed("offsets")?, cur.line, "offsets")?;
    let mut offsets = Vec::with_capacity(n);
    for _ in 0..n {
        let k: Vec<i64> = parse_list(cur.next("offset")?, cur.line, "offset")?;
        if k.len() != d {
            return Err(Error::parse(cur.line, "offset", format!("expected {d} integers")));
        }
        offsets.push(k);
    }
    let line = cur.line;
    let grid = FrequencyGrid::new(lattice, r, offsets.clone()).map_err(|e| Error::parse(line, "offsets", e.to_string()))?;
    let positions = offsets
        .iter()
        .map(|k| grid.offset_position(k).expect("offset present"))
        .collect();
    Ok((grid, positions))
}

/// Parses a dataset file; a trailing `error x` line (model files) is
/// returned separately.
pub fn read_dataset(text: &str) -> Result<(SpectralDataset, Option<f64>)> {
    let mut cur = Cursor::new(text);
    let (grid, positions) = read_grid_header(&mut cur, DATASET_HEADER)?;
    let m: usize = parse_num(cur.keyed("channels")?, cur.line, "channels")?;
    let cells = grid.cell_count();
    let mut data = SpectralDataset::zeros(grid, m);
    for i in 0..m {
        for &o in &positions {
            for c in 0..cells {
                let l = cur.next("value")?;
                let mut parts = l.split_whitespace();
                let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(Error::parse(cur.line, "value", "expected `re im`"));
                };
                let v = Complex64::new(parse_num(re, cur.line, "re")?, parse_num(im, cur.line, "im")?);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::parse(cur.line, "value", "non-finite sample"));
                }
                data.set(i, o, c, v);
            }
        }
    }
    let mut error = None;
    for (n, l) in cur.lines.by_ref() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        match l.strip_prefix("error") {
            Some(rest) if error.is_none() => error = Some(parse_num(rest.trim(), n + 1, "error")?),
            _ => return Err(Error::parse(n + 1, "trailer", format!("unexpected content `{l}`"))),
        }
    }
    Ok((data, error))
}

pub fn write_mask(out: &mut impl Write, mask: &PwMask) -> io::Result<()> {
    write_grid_header(out, MASK_HEADER, mask.grid())?;
    for &b in mask.bits() {
        writeln!(out, "{}", u8::from(b))?;
    }
    Ok(())
}

pub fn read_mask(text: &str) -> Result<PwMask> {
    let mut cur = Cursor::new(text);
    let (grid, positions) = read_grid_header(&mut cur, MASK_HEADER)?;
    let cells = grid.cell_count();
    let mut bits = vec![false; grid.index_count()];
    for &o in &positions {
        for c in 0..cells {
            bits[grid.global_index(o, c)] = match cur.next("bit")? {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(cur.line, "bit", format!("expected 0 or 1, found `{other}`"))),
            };
        }
    }
    cur.rest_is_blank()?;
    PwMask::from_bits(grid, bits)
}

/// Per-cell Gramians: grid header, `channels m`, then one line per cell
/// with the `m²` entries row-major as `re im` pairs.
pub fn write_gramians(out: &mut impl Write, field: &GramianField) -> io::Result<()> {
    write_grid_header(out, GRAMIAN_HEADER, field.grid())?;
    writeln!(out, "channels {}", field.channel_count())?;
    for c in 0..field.grid().cell_count() {
        let mut line = String::new();
        for (n, v) in field.at(c).iter().enumerate() {
            if n > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{} {}", real(v.re), real(v.im));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(n, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((n + 1, l))
    })
}

fn square_dim(count: usize, line: usize, field: &str) -> Result<usize> {
    let d = (count as f64).sqrt().round() as usize;
    if d == 0 || d * d != count {
        return Err(Error::parse(line, field, format!("{count} entries do not form a square matrix")));
    }
    Ok(d)
}

/// A lattice file: `d²` reals, row-major, whitespace or newline separated.
pub fn parse_lattice(text: &str) -> Result<Lattice> {
    let mut entries = Vec::new();
    let mut last = 1;
    for (n, l) in content_lines(text) {
        entries.extend(parse_list::<f64>(l, n, "lattice")?);
        last = n;
    }
    let d = square_dim(entries.len(), last, "lattice")?;
    Lattice::from_row_major(d, &entries).map_err(|e| Error::parse(last, "lattice", e.to_string()))
}

/// A group file: one generator per line, `d²` integers row-major.
pub fn parse_group(text: &str) -> Result<PointGroup> {
    let mut gens = Vec::new();
    let mut last = 1;
    for (n, l) in content_lines(text) {
        let v: Vec<i64> = parse_list(l, n, "generator")?;
        let d = square_dim(v.len(), n, "generator")?;
        let g = IntMatrix::from_row_major(d, v).map_err(|e| Error::parse(n, "generator", e.to_string()))?;
        if let Some(first) = gens.first() {
            let first: &IntMatrix = first;
            if first.dim() != d {
                return Err(Error::parse(n, "generator", "generators have different dimensions"));
            }
        }
        gens.push(g);
        last = n;
    }
    if gens.is_empty() {
        return Err(Error::parse(last, "generator", "no generators"));
    }
    PointGroup::generate(&gens).map_err(|e| Error::parse(last, "generator", e.to_string()))
}

/// An offsets file: one integer tuple per line.
pub fn parse_offsets(text: &str) -> Result<Vec<Vec<i64>>> {
    content_lines(text)
        .map(|(n, l)| parse_list(l, n, "offset"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEntry {
    pub label: String,
    pub resolution: usize,
    pub lattice: Lattice,
}

/// A lattices file: `<label> <resolution> <d² reals>` per line.
pub fn parse_lattices(text: &str) -> Result<Vec<LatticeEntry>> {
    content_lines(text)
        .map(|(n, l)| {
            let mut parts = l.split_whitespace();
            let label = parts.next().expect("non-empty line").to_string();
            let resolution: usize = parse_num(
                parts.next().ok_or_else(|| Error::parse(n, "resolution", "missing"))?,
                n,
                "resolution",
            )?;
            let entries: Vec<f64> = parts.map(|t| parse_num(t, n, "lattice")).collect::<Result<_>>()?;
            let d = square_dim(entries.len(), n, "lattice")?;
            let lattice = Lattice::from_row_major(d, &entries).map_err(|e| Error::parse(n, "lattice", e.to_string()))?;
            Ok(LatticeEntry {
                label,
                resolution,
                lattice,
            })
        })
        .collect()
}
