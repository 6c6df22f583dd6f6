//! Plot-ready CSV tables, solution persistence (snapshot plus JSON sidecar)
//! and tabulated boundary input.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::radial::RadialProfile;
use crate::solvers::SolutionRecord;
use crate::test_functions;

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub r: f64,
    pub u: f64,
    pub u_prime: f64,
}

/// The profile from the pole to the boundary.
pub fn profile_rows(p: &RadialProfile) -> Vec<ProfileRow> {
    std::iter::once(ProfileRow { r: 0.0, u: p.a, u_prime: 0.0 })
        .chain(p.r_nodes.iter().zip(&p.u).zip(&p.u_prime).map(|((&r, &u), &u_prime)| ProfileRow { r, u, u_prime }))
        .collect()
}

/// Flat form of a bubble-scan row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleScanRow {
    pub mu: f64,
    pub energy: f64,
    pub dirichlet: f64,
    pub area_term: f64,
    pub linear_boundary: f64,
    pub curvature_boundary: f64,
    pub boundary_length: f64,
    pub prediction: f64,
    pub closed_form: Option<f64>,
    pub cap_min_deficit: Option<f64>,
}

impl From<&test_functions::ScanRow> for BubbleScanRow {
    fn from(r: &test_functions::ScanRow) -> Self {
        Self {
            mu: r.mu,
            energy: r.energy.i_value,
            dirichlet: r.energy.dirichlet,
            area_term: r.energy.area_term,
            linear_boundary: r.energy.linear_boundary,
            curvature_boundary: r.energy.curvature_boundary,
            boundary_length: r.boundary_length,
            prediction: r.prediction,
            closed_form: r.closed_form,
            cap_min_deficit: r.cap_min_deficit,
        }
    }
}

/// Deterministic pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Writes `<stem>.snapshot`, `<stem>.json` and `<stem>_iterations.csv`.
pub fn write_record(dir: &Path, stem: &str, rec: &SolutionRecord) -> Result<Vec<PathBuf>> {
    let snapshot = dir.join(format!("{stem}.snapshot"));
    let sidecar = dir.join(format!("{stem}.json"));
    let log = dir.join(format!("{stem}_iterations.csv"));
    rec.u.write_snapshot(&snapshot)?;
    write_json(&sidecar, rec)?;
    write_csv(&log, &rec.log)?;
    Ok(vec![snapshot, sidecar, log])
}

/// Boundary values from a CSV file: the column named `h` or `value`, the
/// last of two `(theta, value)` columns, or the only column.
pub fn read_boundary_values(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = match headers.iter().position(|h| matches!(h.trim(), "h" | "value")) {
        Some(c) => c,
        None if headers.len() <= 2 => headers.len() - 1,
        None => return Err(Error::Parse(format!("{}: expected a column named h or value", path.display()))),
    };
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        out.push(parse_cell(path, &record, column, line)?);
    }
    Ok(out)
}

fn parse_cell(path: &Path, record: &csv::StringRecord, column: usize, line: usize) -> Result<f64> {
    let cell = record.get(column).ok_or_else(|| Error::Parse(format!("{}: short row {}", path.display(), line + 2)))?;
    cell.trim().parse().map_err(|e| Error::Parse(format!("{}: row {}: {e}", path.display(), line + 2)))
}

/// A field from `(r, theta, value)` rows. Every row must sit on a node of
/// `grid` (to 1e-9) and every node must appear exactly once.
pub fn read_grid_table(path: &Path, grid: Grid) -> Result<ScalarField> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut data = vec![f64::NAN; grid.len()];
    let mut seen = vec![false; grid.len()];
    let node_tol = 1e-9;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let r = parse_cell(path, &record, 0, line)?;
        let theta = parse_cell(path, &record, 1, line)?;
        let value = parse_cell(path, &record, 2, line)?;
        let j = (r * grid.n_r() as f64).round() as i64 - 1;
        let i = (theta / grid.dtheta()).round() as i64;
        let on_grid = j >= 0
            && (j as usize) < grid.n_r()
            && i >= 0
            && (i as usize) < grid.n_theta()
            && (grid.r(j as usize) - r).abs() <= node_tol
            && (grid.theta(i as usize) - theta).abs() <= node_tol;
        if !on_grid {
            return Err(Error::Parse(format!("{}: row {} at (r, theta) = ({r}, {theta}) is not a grid node", path.display(), line + 2)));
        }
        let idx = grid.idx(j as usize, i as usize);
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Parse(format!("{}: node ({r}, {theta}) appears twice", path.display())));
        }
        data[idx] = value;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} grid nodes", grid.len()),
            found: format!("no row for node {missing}"),
        });
    }
    ScalarField::from_vec(grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::exact_hyperbolic;

    #[test]
    fn profile_rows_start_at_the_pole() {
        let (_, p) = exact_hyperbolic(1.25, 16).unwrap();
        let rows = profile_rows(&p);
        assert_eq!(rows.len(), 17);
        assert_eq!(rows[0].r, 0.0);
        assert_eq!(rows[16].r, 1.0);
    }

    #[test]
    fn csv_and_boundary_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        #[derive(Serialize)]
        struct Row {
            theta: f64,
            h: f64,
        }
        let values = [1.5, 1.25, 0.1 + 0.2];
        write_csv(&path, values.iter().enumerate().map(|(i, &h)| Row { theta: i as f64, h })).unwrap();
        assert_eq!(read_boundary_values(&path).unwrap(), values);
        std::fs::write(&path, "theta,value\n0,1\n0.5,2\n").unwrap();
        assert_eq!(read_boundary_values(&path).unwrap(), [1.0, 2.0]);
        std::fs::write(&path, "a,b,c\n0,1,2\n").unwrap();
        assert!(matches!(read_boundary_values(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn snapshot_rewrite_is_bitwise_stable() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(8, 8).unwrap();
        let u = ScalarField::from_fn(grid, |r, t| (r * t).sin() / 3.0 + 1e-300);
        let a = dir.path().join("a.snapshot");
        let b = dir.path().join("b.snapshot");
        u.write_snapshot(&a).unwrap();
        ScalarField::read_snapshot(&a).unwrap().write_snapshot(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn grid_table_requires_every_node_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let grid = Grid::new(8, 8).unwrap();
        let field = ScalarField::from_fn(grid, |r, t| -1.0 - r * r * t.cos());
        #[derive(Serialize)]
        struct Row {
            r: f64,
            theta: f64,
            value: f64,
        }
        let rows: Vec<Row> = (0..grid.n_r())
            .rev()
            .flat_map(|j| (0..grid.n_theta()).map(move |i| (j, i)))
            .map(|(j, i)| Row { r: grid.r(j), theta: grid.theta(i), value: field.get(j, i) })
            .collect();
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_grid_table(&path, grid).unwrap(), field);
        write_csv(&path, &rows[1..]).unwrap();
        assert!(matches!(read_grid_table(&path, grid), Err(Error::ShapeMismatch { .. })));
        let off = Row { r: 0.3, theta: 0.0, value: 0.0 };
        write_csv(&path, std::iter::once(&off).chain(&rows)).unwrap();
        assert!(matches!(read_grid_table(&path, grid), Err(Error::Parse(_))));
    }
}
