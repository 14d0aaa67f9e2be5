//! Uniform cell-centered box grids, the discrete Neumann Laplacian and the
//! discrete `L²`/`H¹` inner products built on top of it.
//!
//! Cells are ordered lexicographically with `x` running fastest. Boundary
//! conditions are imposed with mirrored ghost cells (the ghost takes the
//! value of its interior neighbour), so the normal difference across every
//! boundary face is zero. The resulting operator is symmetric with respect
//! to the cell-volume weighted inner product, negative semidefinite, and
//! annihilates constants.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A uniform tensor grid on a box `[0, l1] (x [0, l2])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    lengths: [f64; 2],
    spacing: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, cells_per_axis: &[usize], lengths: &[f64]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if cells_per_axis.len() != dim || lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} cell counts and lengths, got {} and {}",
                cells_per_axis.len(),
                lengths.len()
            )));
        }
        let mut cells = [1usize; 2];
        let mut len = [1.0f64; 2];
        let mut spacing = [1.0f64; 2];
        for k in 0..dim {
            if cells_per_axis[k] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} needs at least 2 cells, got {}",
                    cells_per_axis[k]
                )));
            }
            if !(lengths[k].is_finite() && lengths[k] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} length must be positive and finite, got {}",
                    lengths[k]
                )));
            }
            cells[k] = cells_per_axis[k];
            len[k] = lengths[k];
            spacing[k] = lengths[k] / cells_per_axis[k] as f64;
        }
        Ok(Self {
            dim,
            cells,
            lengths: len,
            spacing,
        })
    }

    /// Shorthand for a 1D grid.
    pub fn line(cells: usize, length: f64) -> Result<Self> {
        Self::new(1, &[cells], &[length])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell-center coordinates of cell `idx`; the second entry is zero in 1D.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let i = idx % self.cells[0];
        let j = idx / self.cells[0];
        let x = (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Diagonal of the Neumann Laplacian.
    pub fn laplacian_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.len()];
        let (nx, ny) = (self.cells[0], self.cells[1]);
        for j in 0..ny {
            for i in 0..nx {
                let mut d = 0.0;
                let ihx2 = 1.0 / (self.spacing[0] * self.spacing[0]);
                d -= ihx2 * (if i > 0 { 1.0 } else { 0.0 } + if i + 1 < nx { 1.0 } else { 0.0 });
                if self.dim == 2 {
                    let ihy2 = 1.0 / (self.spacing[1] * self.spacing[1]);
                    d -=
                        ihy2 * (if j > 0 { 1.0 } else { 0.0 } + if j + 1 < ny { 1.0 } else { 0.0 });
                }
                diag[i + nx * j] = d;
            }
        }
        diag
    }

    /// Applies the Neumann Laplacian to raw cell values, writing into `out`.
    ///
    /// Both slices must have `self.len()` entries.
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let (nx, ny) = (self.cells[0], self.cells[1]);
        let ihx2 = 1.0 / (self.spacing[0] * self.spacing[0]);
        let ihy2 = 1.0 / (self.spacing[1] * self.spacing[1]);
        for j in 0..ny {
            for i in 0..nx {
                let c = i + nx * j;
                let uc = u[c];
                // Mirrored ghosts: the ghost value equals uc, so its difference vanishes.
                let left = if i > 0 { u[c - 1] } else { uc };
                let right = if i + 1 < nx { u[c + 1] } else { uc };
                let mut acc = (left - 2.0 * uc + right) * ihx2;
                if self.dim == 2 {
                    let down = if j > 0 { u[c - nx] } else { uc };
                    let up = if j + 1 < ny { u[c + nx] } else { uc };
                    acc += (down - 2.0 * uc + up) * ihy2;
                }
                out[c] = acc;
            }
        }
    }

    fn header(&self) -> String {
        let join_usize = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_f64 = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "# grid dim={} cells={} lengths={}",
            self.dim,
            join_usize(self.cells_per_axis()),
            join_f64(self.lengths())
        )
    }
}

/// Cell-centered scalar values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self::from_values(grid, values)
    }

    /// Unchecked constructor for values produced by internal arithmetic.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map; fails if the result is not finite.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Field> {
        Field::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        same_grid(self, other)?;
        Field::from_values(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Sum of values times cell volume.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Writes the plain-text snapshot format.
    pub fn to_snapshot(&self) -> String {
        let mut out = self.grid.header();
        out.push('\n');
        for v in &self.values {
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Field> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Snapshot {
            line: 1,
            reason: "empty snapshot".into(),
        })?;
        let grid = parse_header(header)?;
        let mut values = Vec::with_capacity(grid.len());
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v = f64::from_str(line).map_err(|e| Error::Snapshot {
                line: ln + 1,
                reason: e.to_string(),
            })?;
            values.push(v);
        }
        Field::from_values(grid, values).map_err(|e| Error::Snapshot {
            line: 0,
            reason: e.to_string(),
        })
    }
}

fn parse_header(header: &str) -> Result<Grid> {
    let bad = |reason: &str| Error::Snapshot {
        line: 1,
        reason: reason.to_string(),
    };
    let rest = header
        .strip_prefix("# grid")
        .ok_or_else(|| bad("missing `# grid` header"))?;
    let (mut dim, mut cells, mut lengths) = (None, None, None);
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad("malformed header token"))?;
        match key {
            "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad("bad dim"))?),
            "cells" => {
                cells = Some(
                    value
                        .split(',')
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("bad cells"))?,
                )
            }
            "lengths" => {
                lengths = Some(
                    value
                        .split(',')
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("bad lengths"))?,
                )
            }
            _ => return Err(bad("unknown header key")),
        }
    }
    let (dim, cells, lengths) = match (dim, cells, lengths) {
        (Some(d), Some(c), Some(l)) => (d, c, l),
        _ => return Err(bad("header needs dim, cells and lengths")),
    };
    Grid::new(dim, &cells, &lengths)
}

pub(crate) fn same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid == b.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Applies the Neumann Laplacian to `u`.
pub fn neumann_laplacian_apply(grid: &Grid, u: &Field) -> Result<Field> {
    if u.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let mut out = vec![0.0; grid.len()];
    grid.apply_laplacian(u.values(), &mut out);
    Field::from_values(*grid, out)
}

pub fn inner_l2(u: &Field, v: &Field) -> Result<f64> {
    same_grid(u, v)?;
    Ok(dot(u.values(), v.values()) * u.grid().cell_volume())
}

pub fn norm_l2(u: &Field) -> f64 {
    (dot(u.values(), u.values()) * u.grid().cell_volume()).sqrt()
}

/// `sqrt(<-Lu, u>)`, the seminorm consistent with the discrete Laplacian.
pub fn seminorm_h1(u: &Field) -> f64 {
    seminorm_h1_sq(u).sqrt()
}

pub fn seminorm_h1_sq(u: &Field) -> f64 {
    let grid = u.grid();
    let mut lu = vec![0.0; grid.len()];
    grid.apply_laplacian(u.values(), &mut lu);
    (-dot(&lu, u.values()) * grid.cell_volume()).max(0.0)
}

pub fn norm_v(u: &Field) -> f64 {
    let l2 = norm_l2(u);
    (l2 * l2 + seminorm_h1_sq(u)).sqrt()
}

pub fn norm_linf(u: &Field) -> f64 {
    u.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
