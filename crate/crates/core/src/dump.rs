//! Plain-text field dumps.
//!
//! One file per field per output time. The first line is
//! `# name nx ny hx hy time components`; then, for each component in turn,
//! `ny + 1` rows of `nx + 1` space-separated values, row `j` holding the
//! nodes `(x_0..x_nx, y_j)`. Numbers use Rust's shortest round-trip `{:e}`
//! formatting, so a dump reads back bit-exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::State;
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub time: f64,
    /// Component-major node values, `values[c][j·(nx+1) + i]`.
    pub values: Vec<Vec<f64>>,
}

impl FieldDump {
    pub fn new(grid: &Grid, name: &str, time: f64, components: &[&[f64]]) -> Self {
        FieldDump {
            name: name.to_string(),
            nx: grid.nx,
            ny: grid.ny,
            hx: grid.hx,
            hy: grid.hy,
            time,
            values: components.iter().map(|c| c.to_vec()).collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("# {} {} {} {:e} {:e} {:e} {}\n", self.name, self.nx, self.ny, self.hx, self.hy, self.time, self.values.len());
        let row = self.nx + 1;
        for comp in &self.values {
            for line in comp.chunks(row) {
                for (i, v) in line.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    write!(out, "{v:e}").expect("write to string");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<FieldDump> {
        let bad = |m: &str| Error::Parse(format!("field dump: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let parts: Vec<&str> = header.strip_prefix("# ").ok_or_else(|| bad("missing header"))?.split(' ').collect();
        if parts.len() != 7 {
            return Err(bad("header needs 7 entries"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer in header"));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number in header"));
        let (nx, ny, ncomp) = (int(parts[1])?, int(parts[2])?, int(parts[6])?);
        let mut values = vec![Vec::with_capacity((nx + 1) * (ny + 1)); ncomp];
        for comp in values.iter_mut() {
            for _ in 0..=ny {
                let line = lines.next().ok_or_else(|| bad("truncated"))?;
                let row: Vec<f64> = line.split(' ').map(|v| v.parse::<f64>().map_err(|_| bad("bad value"))).collect::<Result<_>>()?;
                if row.len() != nx + 1 {
                    return Err(bad("row length"));
                }
                comp.extend(row);
            }
        }
        if lines.next().is_some() {
            return Err(bad("trailing data"));
        }
        Ok(FieldDump { name: parts[0].to_string(), nx, ny, hx: real(parts[3])?, hy: real(parts[4])?, time: real(parts[5])?, values })
    }

    pub fn read(path: &Path) -> Result<FieldDump> {
        FieldDump::parse(&std::fs::read_to_string(path)?)
    }
}

/// Dumps of all four fields of one state, as `(file name, dump)`.
pub fn state_dumps(grid: &Grid, state: &State, level: usize) -> Vec<(String, FieldDump)> {
    let u = state.u.components();
    let b = state.b.components();
    [
        ("rho", vec![state.rho.values()]),
        ("u", u.to_vec()),
        ("theta", vec![state.theta.values()]),
        ("b", b.to_vec()),
    ]
    .into_iter()
    .map(|(name, comps)| (format!("{name}_{level:06}.dat"), FieldDump::new(grid, name, state.time, &comps)))
    .collect()
}

pub fn write_state(dir: &Path, grid: &Grid, state: &State, level: usize) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (file, dump) in state_dumps(grid, state, level) {
        let path = dir.join(file);
        std::fs::write(&path, dump.render())?;
        written.push(path);
    }
    Ok(written)
}
