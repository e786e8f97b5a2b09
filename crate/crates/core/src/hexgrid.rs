//! H3 resolution-10 indexing and raster-to-hex sampling primitives.
//!
//! Grids are in geographic WGS84 coordinates with x = longitude and
//! y = latitude. Row 0 is the southmost row; pixel `(row, col)` has its
//! center at `origin + (col + 0.5, row + 0.5) * cell_size`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use h3o::{CellIndex, Resolution};

use crate::error::{Error, Result};
use crate::ihl::IhlClass;

/// Resolution used by every cell in this crate.
pub const RESOLUTION: Resolution = Resolution::Ten;

/// Mean sphere radius used by H3, in meters.
const EARTH_RADIUS_M: f64 = 6_371_007.180_918_475;

/// Lattice spacing used when enumerating cells over a bounding box. Well
/// below the inradius of the smallest resolution-10 cell.
const COVER_STEP_M: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLng {
    lat: f64,
    lng: f64,
}

impl LatLng {
    pub fn new(lat: f64, lng: f64) -> Result<Self> {
        if !lat.is_finite() || !lng.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Coordinate { lat, lng });
        }
        if !(-180.0..=180.0).contains(&lng) {
            return Err(Error::Coordinate { lat, lng });
        }
        let lng = if lng == 180.0 { -180.0 } else { lng };
        Ok(Self { lat, lng })
    }

    pub fn lat(self) -> f64 {
        self.lat
    }

    pub fn lng(self) -> f64 {
        self.lng
    }

    fn to_h3(self) -> h3o::LatLng {
        // Range already checked, so h3o cannot reject it.
        h3o::LatLng::new(self.lat, self.lng).expect("validated coordinate")
    }
}

impl From<h3o::LatLng> for LatLng {
    fn from(ll: h3o::LatLng) -> Self {
        let lng = if ll.lng() >= 180.0 { ll.lng() - 360.0 } else { ll.lng() };
        Self { lat: ll.lat(), lng }
    }
}

/// A resolution-10 H3 cell.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HexCell(CellIndex);

impl HexCell {
    pub fn index(self) -> u64 {
        u64::from(self.0)
    }

    pub fn is_pentagon(self) -> bool {
        self.0.is_pentagon()
    }

    pub fn centroid(self) -> LatLng {
        LatLng::from(h3o::LatLng::from(self.0))
    }

    pub fn area_m2(self) -> f64 {
        self.0.area_m2()
    }

    pub fn as_h3(self) -> CellIndex {
        self.0
    }
}

impl TryFrom<u64> for HexCell {
    type Error = Error;

    fn try_from(raw: u64) -> Result<Self> {
        let cell = CellIndex::try_from(raw).map_err(|e| Error::Cell(format!("{raw:#x}: {e}")))?;
        if cell.resolution() != RESOLUTION {
            return Err(Error::Cell(format!(
                "{cell}: resolution {} is not {RESOLUTION}",
                cell.resolution()
            )));
        }
        Ok(Self(cell))
    }
}

impl FromStr for HexCell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw = u64::from_str_radix(s, 16).map_err(|e| Error::Cell(format!("{s:?}: {e}")))?;
        Self::try_from(raw)
    }
}

impl fmt::Display for HexCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:015x}", self.index())
    }
}

impl fmt::Debug for HexCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HexCell({self})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Meters,
    Millimeters,
    Dimensionless,
}

/// Raster geometry without values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nrows: usize,
    pub ncols: usize,
    /// Longitude of the lower-left corner.
    pub x_origin: f64,
    /// Latitude of the lower-left corner.
    pub y_origin: f64,
    pub cell_size: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nrows == 0 || self.ncols == 0 {
            return Err(Error::Grid(format!(
                "dimensions must be positive, got {}x{}",
                self.nrows, self.ncols
            )));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::Grid(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        if !self.x_origin.is_finite() || !self.y_origin.is_finite() {
            return Err(Error::Grid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nrows * self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(min_x, min_y, max_x, max_y)` of the raster extent.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.x_origin,
            self.y_origin,
            self.x_origin + self.ncols as f64 * self.cell_size,
            self.y_origin + self.nrows as f64 * self.cell_size,
        )
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_origin + (col as f64 + 0.5) * self.cell_size,
            self.y_origin + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Pixel whose center is nearest to `(x, y)`; ties go to the smaller
    /// index. `None` outside the extent.
    pub fn nearest_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = nearest_index((x - self.x_origin) / self.cell_size, self.ncols)?;
        let row = nearest_index((y - self.y_origin) / self.cell_size, self.nrows)?;
        Some((row, col))
    }
}

/// `u` is a position in pixel units where pixel `k` spans `[k, k + 1]`.
fn nearest_index(u: f64, n: usize) -> Option<usize> {
    if !(u >= 0.0 && u <= n as f64) {
        return None;
    }
    // Centers sit at k + 0.5, so the decision boundary is the integer grid;
    // an exact integer is a tie and resolves downward.
    let k = u.ceil() as usize;
    Some(k.saturating_sub(1).min(n - 1))
}

/// Georeferenced raster of scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    spec: GridSpec,
    nodata: f64,
    values: Vec<f64>,
    units: Units,
}

impl GeoGrid {
    pub fn new(spec: GridSpec, nodata: f64, values: Vec<f64>, units: Units) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Grid(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.nrows,
                spec.ncols,
                values.len()
            )));
        }
        if nodata.is_nan() {
            return Err(Error::Grid("nodata sentinel must not be NaN".into()));
        }
        if let Some(i) = values.iter().position(|&v| v != nodata && !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            spec,
            nodata,
            values,
            units,
        })
    }

    /// Grid with every pixel set to `value`.
    pub fn filled(spec: GridSpec, nodata: f64, value: f64, units: Units) -> Result<Self> {
        Self::new(spec, nodata, vec![value; spec.len()], units)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn nrows(&self) -> usize {
        self.spec.nrows
    }

    pub fn ncols(&self) -> usize {
        self.spec.ncols
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    /// Row-major values, row 0 southmost.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.spec.ncols + col];
        (!self.is_nodata(v)).then_some(v)
    }

    /// Applies `f` to every non-nodata value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { v } else { f(v) })
            .collect();
        Self::new(self.spec, self.nodata, values, self.units)
    }
}

pub fn point_to_cell(p: LatLng) -> HexCell {
    HexCell(p.to_h3().to_cell(RESOLUTION))
}

/// Like [`point_to_cell`] for raw degrees, e.g. pixel centers.
pub fn lnglat_to_cell(lng: f64, lat: f64) -> Result<HexCell> {
    LatLng::new(lat, lng).map(point_to_cell)
}

/// Counterclockwise boundary ring, not closed (first vertex not repeated).
pub fn cell_boundary(c: HexCell) -> Vec<LatLng> {
    c.0.boundary().iter().map(|&ll| LatLng::from(ll)).collect()
}

/// All cells whose centroid lies in the grid's bounding box.
pub fn cells_covering(grid: &GeoGrid) -> BTreeSet<HexCell> {
    cells_covering_bounds(grid.spec().bounds())
}

pub fn cells_covering_bounds((min_x, min_y, max_x, max_y): (f64, f64, f64, f64)) -> BTreeSet<HexCell> {
    let mut out = BTreeSet::new();
    if !(min_x < max_x && min_y < max_y) {
        return out;
    }
    let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let dlat = COVER_STEP_M / m_per_deg;
    // Longitude spacing must stay under the step where a degree is longest,
    // i.e. at the latitude closest to the equator.
    let min_abs_lat = if min_y <= 0.0 && max_y >= 0.0 {
        0.0
    } else {
        min_y.abs().min(max_y.abs())
    };
    let dlng = dlat / min_abs_lat.to_radians().cos().max(1e-9);
    // Samples extend past the box so cells straddling its edge are reached.
    let margin = 300.0 / m_per_deg;
    let lat0 = (min_y - margin).max(-90.0);
    let lat1 = (max_y + margin).min(90.0);
    let lng_margin = margin / min_abs_lat.to_radians().cos().max(1e-3);
    let lng0 = (min_x - lng_margin).max(-180.0);
    let lng1 = (max_x + lng_margin).min(180.0);
    let nlat = ((lat1 - lat0) / dlat).ceil() as usize + 1;
    let nlng = ((lng1 - lng0) / dlng).ceil() as usize + 1;

    let inside = |c: &HexCell| {
        let ll = c.centroid();
        ll.lng() >= min_x && ll.lng() <= max_x && ll.lat() >= min_y && ll.lat() <= max_y
    };
    let mut last: Option<HexCell> = None;
    for i in 0..nlat {
        let lat = (lat0 + i as f64 * dlat).min(lat1);
        for j in 0..nlng {
            let lng = (lng0 + j as f64 * dlng).min(lng1);
            let Ok(c) = lnglat_to_cell(lng, lat) else {
                continue;
            };
            // Consecutive samples usually hit the same cell.
            if last == Some(c) {
                continue;
            }
            last = Some(c);
            if inside(&c) {
                out.insert(c);
            }
        }
    }
    out
}

/// Value at the pixel whose center is nearest to `p`.
pub fn sample_nearest(grid: &GeoGrid, p: LatLng) -> Option<f64> {
    let (row, col) = grid.spec().nearest_pixel(p.lng(), p.lat())?;
    grid.get(row, col)
}

/// Range of pixel indices (clamped) whose centers could fall in `[lo, hi]`.
fn pixel_range(lo: f64, hi: f64, origin: f64, size: f64, n: usize) -> Option<(usize, usize)> {
    let first = ((lo - origin) / size - 0.5).floor() - 1.0;
    let last = ((hi - origin) / size - 0.5).ceil() + 1.0;
    if last < 0.0 || first >= n as f64 {
        return None;
    }
    let first = first.max(0.0) as usize;
    let last = (last as usize).min(n - 1);
    Some((first, last))
}

/// Row-major `(row, col)` of every pixel whose center lies inside `c`,
/// nodata or not. Containment follows H3's point-to-cell assignment.
pub fn pixel_indices_in_cell(spec: &GridSpec, c: HexCell) -> Vec<(usize, usize)> {
    let ring = cell_boundary(c);
    let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &ring {
        lo_x = lo_x.min(v.lng());
        hi_x = hi_x.max(v.lng());
        lo_y = lo_y.min(v.lat());
        hi_y = hi_y.max(v.lat());
    }
    let (cols, rows) = if hi_x - lo_x > 180.0 {
        // Antimeridian cell: the vertex box is meaningless, scan everything.
        ((0, spec.ncols - 1), (0, spec.nrows - 1))
    } else {
        let Some(cols) = pixel_range(lo_x, hi_x, spec.x_origin, spec.cell_size, spec.ncols) else {
            return Vec::new();
        };
        let Some(rows) = pixel_range(lo_y, hi_y, spec.y_origin, spec.cell_size, spec.nrows) else {
            return Vec::new();
        };
        (cols, rows)
    };
    let mut out = Vec::new();
    for row in rows.0..=rows.1 {
        for col in cols.0..=cols.1 {
            let (x, y) = spec.pixel_center(row, col);
            if lnglat_to_cell(x, y).is_ok_and(|hit| hit == c) {
                out.push((row, col));
            }
        }
    }
    out
}

/// Non-nodata values of pixels whose centers fall inside `c`, row-major.
pub fn pixels_in_cell(grid: &GeoGrid, c: HexCell) -> Vec<f64> {
    pixel_indices_in_cell(grid.spec(), c)
        .into_iter()
        .filter_map(|(r, k)| grid.get(r, k))
        .collect()
}

pub fn mean_in_cell(grid: &GeoGrid, c: HexCell) -> Option<f64> {
    let xs = pixels_in_cell(grid, c);
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Modal class; ties go to the riskier class.
pub fn majority_in_cell(labels: &[IhlClass]) -> Result<IhlClass> {
    let mut counts = [0usize; 4];
    for &l in labels {
        counts[l.index()] += 1;
    }
    majority_from_counts(&counts)
        .ok_or_else(|| Error::Aggregation("majority of an empty label list".into()))
}

/// `counts` is indexed by [`IhlClass::index`] (A first).
pub(crate) fn majority_from_counts(counts: &[usize; 4]) -> Option<IhlClass> {
    let mut best: Option<(usize, usize)> = None;
    for (i, &n) in counts.iter().enumerate() {
        // Strict `>` keeps the earliest (riskiest) index on ties.
        if n > 0 && best.is_none_or(|(_, m)| n > m) {
            best = Some((i, n));
        }
    }
    best.map(|(i, _)| IhlClass::ALL[i])
}
