//! Polar grid of the closed unit disk and the fields living on it.
//!
//! Radial nodes are `r_j = (j+1)/N_r` for `j = 0..N_r` (the pole is excluded,
//! the boundary circle is the last ring); angular nodes are `theta_i = 2 pi i / N_theta`.
//! Field data is ring-major: entry `j * N_theta + i` holds the value at `(r_j, theta_i)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n_r: usize,
    n_theta: usize,
}

impl Grid {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 8 || n_theta < 8 || !n_theta.is_multiple_of(2) {
            return Err(Error::InvalidGrid { n_r, n_theta });
        }
        Ok(Self { n_r, n_theta })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dr(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// Radius of ring `j` (0-based; ring `n_r - 1` is the boundary).
    pub fn r(&self, j: usize) -> f64 {
        (j + 1) as f64 / self.n_r as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n_theta as f64
    }

    #[inline]
    pub fn idx(&self, j: usize, i: usize) -> usize {
        j * self.n_theta + i
    }

    pub fn boundary_ring(&self) -> usize {
        self.n_r - 1
    }

    /// Control-volume area of one node on ring `j`; the rings tile the disk,
    /// so `n_theta * sum_j ring_weight(j) == pi`.
    pub fn ring_weight(&self, j: usize) -> f64 {
        let dr = self.dr();
        let dt = self.dtheta();
        if j == 0 {
            1.125 * dr * dr * dt
        } else if j == self.n_r - 1 {
            (0.5 * dr - 0.125 * dr * dr) * dt
        } else {
            self.r(j) * dr * dt
        }
    }

    pub fn ring_weights(&self) -> Vec<f64> {
        (0..self.n_r).map(|j| self.ring_weight(j)).collect()
    }

    pub fn require_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.n_r, self.n_theta),
                found: format!("{}x{}", other.n_r, other.n_theta),
            })
        }
    }
}

/// Values on every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", grid.len()),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { grid, data })
    }

    /// Samples `f(r, theta)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.n_r {
            let r = grid.r(j);
            for i in 0..grid.n_theta {
                data.push(f(r, grid.theta(i)));
            }
        }
        Self { grid, data }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_cartesian(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |r, t| f(r * t.cos(), r * t.sin()))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[self.grid.idx(j, i)]
    }

    pub fn ring(&self, j: usize) -> &[f64] {
        let n = self.grid.n_theta;
        &self.data[j * n..(j + 1) * n]
    }

    /// Trace on the boundary circle.
    pub fn boundary(&self) -> BoundaryField {
        BoundaryField {
            grid: self.grid,
            data: self.ring(self.grid.boundary_ring()).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.require_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + t * b)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.grid.require_same(&other.grid)?;
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Writes the snapshot text format: a header line `NR NTHETA`, then one
    /// line per ring with 17 significant digits per value.
    pub fn to_snapshot_string(&self) -> String {
        let n = self.grid.n_theta;
        let mut out = String::with_capacity(self.data.len() * 25 + 32);
        let _ = writeln!(out, "{} {}", self.grid.n_r, n);
        for row in self.data.chunks(n) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_snapshot_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::Parse(format!("header must hold two integers, got {header:?}")));
        }
        let grid = Grid::new(dims[0], dims[1])?;
        let mut data = Vec::with_capacity(grid.len());
        let mut rows = 0;
        for line in lines {
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|e| Error::Parse(format!("value {tok:?}: {e}")))?;
                data.push(v);
            }
            if data.len() - before != grid.n_theta {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} values in row {rows}", grid.n_theta),
                    found: format!("{}", data.len() - before),
                });
            }
            rows += 1;
        }
        if rows != grid.n_r {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", grid.n_r),
                found: format!("{rows} rows"),
            });
        }
        let field = Self { grid, data };
        if !field.is_finite() {
            return Err(Error::NonFinite("snapshot".into()));
        }
        Ok(field)
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_snapshot_string())?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        Self::from_snapshot_str(&std::fs::read_to_string(path)?)
    }
}

/// Values on the boundary circle `r = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    grid: Grid,
    data: Vec<f64>,
}

impl BoundaryField {
    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, data: vec![value; grid.n_theta] }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_theta {
            return Err(Error::ShapeMismatch {
                expected: format!("{} boundary values", grid.n_theta),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, data: (0..grid.n_theta).map(|i| f(grid.theta(i))).collect() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.data.len() != other.data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} boundary values", self.data.len()),
                found: format!("{}", other.data.len()),
            });
        }
        Ok(Self {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
