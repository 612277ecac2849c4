//! Gridded fields with a validity mask, and their on-disk formats.
//!
//! `binary_grid` (little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `OBSGRID1` |
//! | 4, 4, 4 | rows, cols, snapshot count `T` (u32) |
//! | 8 | `dt` (f64) |
//! | rows * cols | mask, row-major, 1 = valid |
//! | 4 * T * valid | snapshots as f32, one snapshot after another, valid cells row-major |
//!
//! `csv_grid`: a `rows,cols,dt` header line and its values, a `mask` line followed by
//! `rows` lines of 0/1, then per snapshot a `snapshot` line followed by `rows` lines
//! of `cols` values (masked cells left empty).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::model::SnapshotMatrix;

pub const MAGIC: &[u8; 8] = b"OBSGRID1";
const HEADER_LEN: usize = 8 + 12 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFormat {
    BinaryGrid,
    CsvGrid,
}

impl GridFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary_grid" => Ok(Self::BinaryGrid),
            "csv_grid" => Ok(Self::CsvGrid),
            other => Err(Error::arg(format!("unknown grid format '{other}'"))),
        }
    }

    /// Guesses from the extension: `.csv` is `csv_grid`, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::CsvGrid,
            _ => Self::BinaryGrid,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GriddedDataset {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    /// `valid x T`, valid cells in row-major order.
    snapshots: DMatrix<f64>,
    dt: f64,
    cells: Vec<(usize, usize)>,
    wrap_lon: bool,
}

impl GriddedDataset {
    pub fn new(rows: usize, cols: usize, mask: Vec<bool>, snapshots: DMatrix<f64>, dt: f64) -> Result<Self> {
        if rows == 0 || cols == 0 || mask.len() != rows * cols {
            return Err(Error::arg(format!(
                "mask has {} cells for a {rows} x {cols} grid",
                mask.len()
            )));
        }
        let cells: Vec<(usize, usize)> = (0..rows * cols)
            .filter(|&i| mask[i])
            .map(|i| (i / cols, i % cols))
            .collect();
        if cells.is_empty() {
            return Err(Error::arg("mask has no valid cells"));
        }
        if snapshots.nrows() != cells.len() {
            return Err(Error::arg(format!(
                "snapshots have {} rows but the mask has {} valid cells",
                snapshots.nrows(),
                cells.len()
            )));
        }
        if snapshots.ncols() < 2 {
            return Err(Error::arg("need at least two snapshots"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::arg("dt must be positive"));
        }
        if let Some(p) = snapshots.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite value at cell {} of snapshot {}",
                p % cells.len(),
                p / cells.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            mask,
            snapshots,
            dt,
            cells,
            // A global one-cell-per-degree style grid wraps in longitude.
            wrap_lon: cols == 2 * rows,
        })
    }

    pub fn with_longitude_wrap(mut self, wrap: bool) -> Self {
        self.wrap_lon = wrap;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn snapshots(&self) -> &DMatrix<f64> {
        &self.snapshots
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn wraps_longitude(&self) -> bool {
        self.wrap_lon
    }

    /// Number of valid cells, the state dimension.
    pub fn n(&self) -> usize {
        self.cells.len()
    }

    /// `(row, col)` of state index `i`.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        self.cells[i]
    }

    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.rows || col >= self.cols || !self.mask[row * self.cols + col] {
            return None;
        }
        self.cells.binary_search(&(row, col)).ok()
    }

    /// Cell-center latitude and longitude in degrees, assuming the grid spans the globe.
    pub fn lat_lon(&self, i: usize) -> (f64, f64) {
        let (r, c) = self.cells[i];
        (
            -90.0 + (r as f64 + 0.5) * 180.0 / self.rows as f64,
            -180.0 + (c as f64 + 0.5) * 360.0 / self.cols as f64,
        )
    }

    pub fn to_snapshots(&self) -> Result<SnapshotMatrix> {
        Ok(SnapshotMatrix::new(self.snapshots.clone(), self.dt)?.with_grid(mask_geometry(self)?))
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.mask.len() + 4 * self.snapshots.len());
        out.extend_from_slice(MAGIC);
        for v in [self.rows, self.cols, self.snapshots.ncols()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend(self.mask.iter().map(|&m| m as u8));
        for v in self.snapshots.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("byte 0", "file shorter than the header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::format("byte 0", "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (rows, cols, t) = (u32_at(8), u32_at(12), u32_at(16));
        let dt = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let cells = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("byte 8", "grid size overflows"))?;
        let mask_end = HEADER_LEN + cells;
        if bytes.len() < mask_end {
            return Err(Error::format(
                format!("byte {}", bytes.len()),
                format!("mask needs {cells} bytes"),
            ));
        }
        let mut mask = Vec::with_capacity(cells);
        for (i, &b) in bytes[HEADER_LEN..mask_end].iter().enumerate() {
            match b {
                0 => mask.push(false),
                1 => mask.push(true),
                _ => {
                    return Err(Error::format(
                        format!("byte {}", HEADER_LEN + i),
                        format!("mask byte {b} is not 0 or 1"),
                    ))
                }
            }
        }
        let valid = mask.iter().filter(|&&m| m).count();
        if valid == 0 {
            return Err(Error::format(format!("byte {HEADER_LEN}"), "mask has no valid cells"));
        }
        let expected = mask_end + 4 * valid * t;
        if bytes.len() != expected {
            return Err(Error::format(
                format!("byte {}", bytes.len().min(expected)),
                format!("expected {expected} bytes for {t} snapshots of {valid} cells, found {}", bytes.len()),
            ));
        }
        let mut snapshots = DMatrix::zeros(valid, t);
        for (k, chunk) in bytes[mask_end..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(
                    format!("byte {}", mask_end + 4 * k),
                    "non-finite value in a valid cell",
                ));
            }
            snapshots[(k % valid, k / valid)] = v as f64;
        }
        Self::new(rows, cols, mask, snapshots, dt).map_err(|e| Error::format("header", e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rows,cols,dt\n{},{},{}", self.rows, self.cols, self.dt);
        out.push_str("mask\n");
        for r in 0..self.rows {
            let line: Vec<&str> = (0..self.cols)
                .map(|c| if self.mask[r * self.cols + c] { "1" } else { "0" })
                .collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        for t in 0..self.snapshots.ncols() {
            out.push_str("snapshot\n");
            let mut k = 0;
            for r in 0..self.rows {
                let mut line = Vec::with_capacity(self.cols);
                for c in 0..self.cols {
                    if self.mask[r * self.cols + c] {
                        line.push(format!("{}", self.snapshots[(k, t)]));
                        k += 1;
                    } else {
                        line.push(String::new());
                    }
                }
                let _ = writeln!(out, "{}", line.join(","));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let at = |i: usize| lines.get(i).map(|l| l.trim()).unwrap_or("");
        let loc = |i: usize| format!("line {}", i + 1);
        if at(0) != "rows,cols,dt" {
            return Err(Error::format(loc(0), "expected header 'rows,cols,dt'"));
        }
        let head: Vec<&str> = at(1).split(',').collect();
        if head.len() != 3 {
            return Err(Error::format(loc(1), "expected rows,cols,dt values"));
        }
        let parse_usize = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::format(loc(1), e.to_string()));
        let (rows, cols) = (parse_usize(head[0])?, parse_usize(head[1])?);
        let dt: f64 = head[2].trim().parse().map_err(|e: std::num::ParseFloatError| Error::format(loc(1), e.to_string()))?;
        if at(2) != "mask" {
            return Err(Error::format(loc(2), "expected 'mask'"));
        }
        let mut mask = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let i = 3 + r;
            let fields: Vec<&str> = at(i).split(',').collect();
            if fields.len() != cols {
                return Err(Error::format(loc(i), format!("expected {cols} mask entries")));
            }
            for f in fields {
                match f.trim() {
                    "0" => mask.push(false),
                    "1" => mask.push(true),
                    other => return Err(Error::format(loc(i), format!("mask entry '{other}'"))),
                }
            }
        }
        let valid = mask.iter().filter(|&&m| m).count();
        if valid == 0 {
            return Err(Error::format(loc(3), "mask has no valid cells"));
        }
        let mut columns: Vec<f64> = Vec::new();
        let mut i = 3 + rows;
        let mut t = 0;
        while i < lines.len() {
            if at(i).is_empty() {
                i += 1;
                continue;
            }
            if at(i) != "snapshot" {
                return Err(Error::format(loc(i), "expected 'snapshot'"));
            }
            for r in 0..rows {
                let li = i + 1 + r;
                if li >= lines.len() {
                    return Err(Error::format(loc(li), format!("snapshot {t} is truncated")));
                }
                let fields: Vec<&str> = lines[li].split(',').collect();
                if fields.len() != cols {
                    return Err(Error::format(loc(li), format!("expected {cols} values")));
                }
                for (c, f) in fields.iter().enumerate() {
                    if !mask[r * cols + c] {
                        continue;
                    }
                    let v: f64 = f
                        .trim()
                        .parse()
                        .map_err(|_| Error::format(loc(li), format!("bad value '{}' in column {c}", f.trim())))?;
                    if !v.is_finite() {
                        return Err(Error::format(loc(li), format!("non-finite value in column {c}")));
                    }
                    columns.push(v);
                }
            }
            i += 1 + rows;
            t += 1;
        }
        let snapshots = DMatrix::from_column_slice(valid, t, &columns);
        Self::new(rows, cols, mask, snapshots, dt).map_err(|e| Error::format("header", e.to_string()))
    }

    pub fn write(&self, path: &Path, format: GridFormat) -> Result<()> {
        match format {
            GridFormat::BinaryGrid => std::fs::write(path, self.to_binary())?,
            GridFormat::CsvGrid => std::fs::write(path, self.to_csv())?,
        }
        Ok(())
    }
}

pub fn load_gridded(path: &Path, format: GridFormat) -> Result<GriddedDataset> {
    match format {
        GridFormat::BinaryGrid => GriddedDataset::from_binary(&std::fs::read(path)?),
        GridFormat::CsvGrid => GriddedDataset::from_csv(&std::fs::read_to_string(path)?),
    }
}

/// Graph over valid cells with 4-neighbor edges between valid cells; wraps across the
/// longitude seam when the dataset does.
pub fn mask_geometry(ds: &GriddedDataset) -> Result<Geometry> {
    let mut adjacency = vec![Vec::new(); ds.n()];
    for (i, &(r, c)) in ds.cells.iter().enumerate() {
        let mut link = |rr: usize, cc: usize| {
            if let Some(j) = ds.index_of(rr, cc) {
                if j != i {
                    adjacency[i].push(j);
                }
            }
        };
        if r > 0 {
            link(r - 1, c);
        }
        link(r + 1, c);
        if c > 0 {
            link(r, c - 1);
        } else if ds.wrap_lon {
            link(r, ds.cols - 1);
        }
        if c + 1 < ds.cols {
            link(r, c + 1);
        } else if ds.wrap_lon {
            link(r, 0);
        }
    }
    let coords = ds.cells.iter().map(|&(r, c)| [r as f64, c as f64]).collect();
    Geometry::graph(adjacency, coords)
}

/// Two ocean basins separated by a land column, with a smooth synthetic field.
pub fn two_basin_fixture(rows: usize, cols: usize, steps: usize) -> GriddedDataset {
    let land = cols / 2;
    let mask: Vec<bool> = (0..rows * cols).map(|i| i % cols != land).collect();
    let cells: Vec<usize> = (0..rows * cols).filter(|&i| mask[i]).collect();
    let snapshots = DMatrix::from_fn(cells.len(), steps, |k, t| {
        let (r, c) = ((cells[k] / cols) as f64, (cells[k] % cols) as f64);
        let phase = 0.3 * t as f64;
        ((0.7 * c + phase).sin() + 0.5 * (0.9 * r - 0.5 * phase).cos()) as f32 as f64
    });
    GriddedDataset::new(rows, cols, mask, snapshots, 1.0)
        .expect("fixture is valid")
        .with_longitude_wrap(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GriddedDataset {
        let snaps = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.5, 5.5, 6.5, -1.0, -2.0, 0.25]);
        GriddedDataset::new(2, 2, vec![true, false, true, true], snaps, 0.5).unwrap()
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let ds = tiny();
        let bytes = ds.to_binary();
        let back = GriddedDataset::from_binary(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_binary(), bytes);
    }

    #[test]
    fn csv_roundtrip() {
        let ds = tiny();
        assert_eq!(GriddedDataset::from_csv(&ds.to_csv()).unwrap(), ds);
    }

    #[test]
    fn all_masked_is_rejected() {
        let mut bytes = tiny().to_binary();
        for b in &mut bytes[HEADER_LEN..HEADER_LEN + 4] {
            *b = 0;
        }
        assert!(matches!(GriddedDataset::from_binary(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = tiny().to_binary();
        match GriddedDataset::from_binary(&bytes[..bytes.len() - 2]) {
            Err(Error::Format { location, .. }) => assert!(location.starts_with("byte")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_value_is_rejected() {
        let mut bytes = tiny().to_binary();
        let off = HEADER_LEN + 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(GriddedDataset::from_binary(&bytes).is_err());
    }

    #[test]
    fn open_grid_degrees() {
        let snaps = DMatrix::zeros(9, 2);
        let ds = GriddedDataset::new(3, 3, vec![true; 9], snaps, 1.0).unwrap();
        let g = mask_geometry(&ds).unwrap();
        assert_eq!(g.neighbors(4).len(), 4);
        for corner in [0, 2, 6, 8] {
            assert_eq!(g.neighbors(corner).len(), 2);
        }
    }

    #[test]
    fn isthmus_splits_components() {
        let ds = two_basin_fixture(4, 7, 2);
        let g = mask_geometry(&ds).unwrap();
        let west = ds.index_of(0, 0).unwrap();
        let east = ds.index_of(0, 6).unwrap();
        assert_eq!(g.distance(west, east), f64::INFINITY);
    }

    #[test]
    fn global_grid_wraps() {
        let snaps = DMatrix::zeros(18 * 36, 2);
        let ds = GriddedDataset::new(18, 36, vec![true; 18 * 36], snaps, 1.0).unwrap();
        assert!(ds.wraps_longitude());
        let g = mask_geometry(&ds).unwrap();
        let a = ds.index_of(5, 35).unwrap();
        assert!(g.neighbors(a).contains(&ds.index_of(5, 0).unwrap()));
    }
}
