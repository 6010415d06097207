//! Regular longitude/latitude grid.
//!
//! Cells are half-open rectangles `[min, max)` in both axes, laid out in
//! plate carrée degree arithmetic from a south-west anchor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("cell size must be a positive finite number of degrees, got {0}")]
    BadCellSize(f64),
    #[error("grid needs at least one column and one row")]
    EmptyGrid,
    #[error("grid origin must be finite")]
    BadOrigin,
    #[error("cell ({col},{row}) is outside the {n_cols}x{n_rows} grid")]
    OutOfBounds {
        col: u32,
        row: u32,
        n_cols: u32,
        n_rows: u32,
    },
    #[error("cannot parse grid `{0}`: expected origin_lon,origin_lat,size,ncols,nrows")]
    Parse(String),
}

/// Discrete cell address. Orders by column, then row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub col: u32,
    pub row: u32,
}

impl CellId {
    pub const fn new(col: u32, row: u32) -> Self {
        CellId { col, row }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.col, self.row)
    }
}

impl FromStr for CellId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, r) = s
            .split_once(':')
            .ok_or_else(|| format!("bad cell id `{s}`"))?;
        Ok(CellId {
            col: c.trim().parse().map_err(|_| format!("bad cell id `{s}`"))?,
            row: r.trim().parse().map_err(|_| format!("bad cell id `{s}`"))?,
        })
    }
}

/// Geographic extent of a cell: `(min_lon, min_lat, max_lon, max_lat)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBounds {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl CellBounds {
    /// Half-open containment test.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon < self.max_lon && lat >= self.min_lat && lat < self.max_lat
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    origin_lon: f64,
    origin_lat: f64,
    cell_size_deg: f64,
    n_cols: u32,
    n_rows: u32,
}

impl GridSpec {
    pub const DEFAULT_CELL_SIZE: f64 = 0.35;

    pub fn new(
        origin_lon: f64,
        origin_lat: f64,
        cell_size_deg: f64,
        n_cols: u32,
        n_rows: u32,
    ) -> Result<Self, GridError> {
        if !(cell_size_deg.is_finite() && cell_size_deg > 0.0) {
            return Err(GridError::BadCellSize(cell_size_deg));
        }
        if !(origin_lon.is_finite() && origin_lat.is_finite()) {
            return Err(GridError::BadOrigin);
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(GridError::EmptyGrid);
        }
        Ok(GridSpec {
            origin_lon,
            origin_lat,
            cell_size_deg,
            n_cols,
            n_rows,
        })
    }

    /// Mainland Spain plus the Balearic Islands with 0.35° cells:
    /// longitude −10.0..4.35, latitude 35.0..44.1. The Canary Islands fall outside.
    pub fn iberia() -> Self {
        GridSpec {
            origin_lon: -10.0,
            origin_lat: 35.0,
            cell_size_deg: Self::DEFAULT_CELL_SIZE,
            n_cols: 41,
            n_rows: 26,
        }
    }

    pub fn origin_lon(&self) -> f64 {
        self.origin_lon
    }

    pub fn origin_lat(&self) -> f64 {
        self.origin_lat
    }

    pub fn cell_size_deg(&self) -> f64 {
        self.cell_size_deg
    }

    pub fn n_cols(&self) -> u32 {
        self.n_cols
    }

    pub fn n_rows(&self) -> u32 {
        self.n_rows
    }

    /// Cell containing `(lon, lat)`, or `None` outside the grid.
    pub fn cell_of(&self, lon: f64, lat: f64) -> Option<CellId> {
        let col = axis_index(lon, self.origin_lon, self.cell_size_deg, self.n_cols)?;
        let row = axis_index(lat, self.origin_lat, self.cell_size_deg, self.n_rows)?;
        Some(CellId { col, row })
    }

    pub fn cell_bounds(&self, cell: CellId) -> Result<CellBounds, GridError> {
        if !self.contains_cell(cell) {
            return Err(GridError::OutOfBounds {
                col: cell.col,
                row: cell.row,
                n_cols: self.n_cols,
                n_rows: self.n_rows,
            });
        }
        let lon = |i: u32| edge(self.origin_lon, self.cell_size_deg, i as i64);
        let lat = |i: u32| edge(self.origin_lat, self.cell_size_deg, i as i64);
        Ok(CellBounds {
            min_lon: lon(cell.col),
            min_lat: lat(cell.row),
            max_lon: lon(cell.col + 1),
            max_lat: lat(cell.row + 1),
        })
    }

    pub fn contains_cell(&self, cell: CellId) -> bool {
        cell.col < self.n_cols && cell.row < self.n_rows
    }

    /// `(min_lon, min_lat, max_lon, max_lat)` of the whole grid.
    pub fn extent(&self) -> CellBounds {
        CellBounds {
            min_lon: self.origin_lon,
            min_lat: self.origin_lat,
            max_lon: edge(self.origin_lon, self.cell_size_deg, self.n_cols as i64),
            max_lat: edge(self.origin_lat, self.cell_size_deg, self.n_rows as i64),
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::iberia()
    }
}

fn edge(origin: f64, size: f64, index: i64) -> f64 {
    origin + index as f64 * size
}

/// Floor division along one axis, corrected so that the result agrees with
/// the edges reported by [`GridSpec::cell_bounds`] even where the division
/// rounds across a boundary.
fn axis_index(x: f64, origin: f64, size: f64, n: u32) -> Option<u32> {
    if !x.is_finite() {
        return None;
    }
    let mut i = ((x - origin) / size).floor() as i64;
    if x < edge(origin, size, i) {
        i -= 1;
    } else if x >= edge(origin, size, i + 1) {
        i += 1;
    }
    (0..n as i64).contains(&i).then_some(i as u32)
}

/// `origin_lon,origin_lat,size,ncols,nrows`
impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.origin_lon, self.origin_lat, self.cell_size_deg, self.n_cols, self.n_rows
        )
    }
}

impl FromStr for GridSpec {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || GridError::Parse(s.to_string());
        if parts.len() != 5 {
            return Err(bad());
        }
        let f = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let u = |p: &str| p.parse::<u32>().map_err(|_| bad());
        GridSpec::new(
            f(parts[0])?,
            f(parts[1])?,
            f(parts[2])?,
            u(parts[3])?,
            u(parts[4])?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec() -> GridSpec {
        GridSpec::new(-10.0, 35.0, 0.35, 38, 26).unwrap()
    }

    #[test]
    fn madrid_cell() {
        assert_eq!(spec().cell_of(-3.69, 40.42), Some(CellId::new(18, 15)));
    }

    #[test]
    fn east_edge_goes_to_east_neighbor() {
        let s = spec();
        let b = s.cell_bounds(CellId::new(4, 2)).unwrap();
        let mid_lat = (b.min_lat + b.max_lat) / 2.0;
        assert_eq!(s.cell_of(b.max_lon, mid_lat), Some(CellId::new(5, 2)));
        assert_eq!(s.cell_of(b.min_lon, mid_lat), Some(CellId::new(4, 2)));
    }

    #[test]
    fn outside_is_none() {
        assert_eq!(GridSpec::iberia().cell_of(30.0, 60.0), None);
        assert_eq!(spec().cell_of(-10.000001, 36.0), None);
        assert_eq!(spec().cell_of(f64::NAN, 36.0), None);
        // Canary Islands
        assert_eq!(GridSpec::iberia().cell_of(-15.4, 28.1), None);
    }

    #[test]
    fn iberia_covers_balearics_and_mainland() {
        let g = GridSpec::iberia();
        for (lon, lat) in [
            (4.27, 39.89),
            (2.65, 39.57),
            (1.43, 38.9),
            (-8.54, 42.88),
            (-5.6, 36.01),
        ] {
            assert!(g.cell_of(lon, lat).is_some(), "({lon}, {lat})");
        }
    }

    #[test]
    fn bounds_arithmetic() {
        let s = spec();
        let b = s.cell_bounds(CellId::new(0, 0)).unwrap();
        assert_abs_diff_eq!(b.min_lon, -10.0);
        assert_abs_diff_eq!(b.min_lat, 35.0);
        assert_abs_diff_eq!(b.max_lon, -9.65, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max_lat, 35.35, epsilon = 1e-12);
        let b = s.cell_bounds(CellId::new(1, 0)).unwrap();
        assert_abs_diff_eq!(b.min_lon, -9.65, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max_lon, -9.30, epsilon = 1e-12);
        assert!(matches!(
            s.cell_bounds(CellId::new(38, 0)),
            Err(GridError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn parse_and_display() {
        let g: GridSpec = "-10,35,0.35,41,26".parse().unwrap();
        assert_eq!(g, GridSpec::iberia());
        assert_eq!(g.to_string().parse::<GridSpec>().unwrap(), g);
        assert!("1,2,3".parse::<GridSpec>().is_err());
        assert!("0,0,-1,2,2".parse::<GridSpec>().is_err());
        assert!("0,0,1,0,2".parse::<GridSpec>().is_err());
    }

    proptest! {
        #[test]
        fn partition(lon in -10.0f64..3.3, lat in 35.0f64..44.1) {
            let s = spec();
            if let Some(c) = s.cell_of(lon, lat) {
                prop_assert!(s.cell_bounds(c).unwrap().contains(lon, lat));
            } else {
                // only the far edge of the extent may round out of range
                let e = s.extent();
                prop_assert!(lon >= e.max_lon - 1e-9 || lat >= e.max_lat - 1e-9);
            }
        }

        #[test]
        fn translation(col in 2u32..30, row in 2u32..20, fx in 0.05f64..0.95, fy in 0.05f64..0.95, k in 0u32..2) {
            let s = spec();
            let size = s.cell_size_deg();
            let lon = -10.0 + (col as f64 + fx) * size;
            let lat = 35.0 + (row as f64 + fy) * size;
            let shifted = GridSpec::new(-10.0 + k as f64 * size, 35.0 + k as f64 * size, size, 38, 26).unwrap();
            let a = s.cell_of(lon, lat).unwrap();
            let b = shifted.cell_of(lon, lat).unwrap();
            prop_assert_eq!(b, CellId::new(a.col - k, a.row - k));
        }
    }
}
