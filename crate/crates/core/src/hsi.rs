//! Hazard severity index: event rainfall divided by the local design-storm
//! depth, sampled at hex centroids.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hexgrid::{sample_nearest, GeoGrid, HexCell, Units};

/// Millimeters per thousandth of an inch.
pub const MM_PER_MILLI_INCH: f64 = 0.0254;

/// How raw design-depth rasters are stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignUnits {
    #[default]
    ThousandthsInch,
    Millimeters,
}

pub fn atlas14_to_mm(raw: f64) -> Result<f64> {
    if !(raw >= 0.0) || !raw.is_finite() {
        return Err(Error::UnitDomain(format!(
            "design depth must be a finite non-negative number of thousandths of an inch, got {raw}"
        )));
    }
    Ok(raw * MM_PER_MILLI_INCH)
}

/// Converts a raw design raster to millimeters when needed.
pub fn design_grid_mm(raw: GeoGrid, units: DesignUnits) -> Result<GeoGrid> {
    match units {
        DesignUnits::Millimeters => Ok(raw.with_units(Units::Millimeters)),
        DesignUnits::ThousandthsInch => {
            if let Some(&bad) = raw.values().iter().find(|&&v| !raw.is_nodata(v) && v < 0.0) {
                return Err(Error::UnitDomain(format!("negative design depth {bad}")));
            }
            Ok(raw
                .map_values(|v| v * MM_PER_MILLI_INCH)?
                .with_units(Units::Millimeters))
        }
    }
}

pub type HsiHexMap = BTreeMap<HexCell, f64>;

/// Rainfall at `r` against design depth `d`; `None` when the ratio is
/// undefined.
pub fn ratio(r: f64, d: f64) -> Option<f64> {
    if !(d > 0.0) || !(r >= 0.0) {
        return None;
    }
    let q = r / d;
    q.is_finite().then_some(q)
}

pub fn hsi_for_cells(rain: &GeoGrid, design: &GeoGrid, cells: &BTreeSet<HexCell>) -> HsiHexMap {
    let cells: Vec<HexCell> = cells.iter().copied().collect();
    cells
        .par_iter()
        .filter_map(|&c| {
            let p = c.centroid();
            let r = sample_nearest(rain, p)?;
            let d = sample_nearest(design, p)?;
            ratio(r, d).map(|q| (c, q))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
