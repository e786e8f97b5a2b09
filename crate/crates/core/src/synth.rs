//! Seeded synthetic scenario: a diagonal stream corridor with scattered
//! urban depressions, a constant design storm, an east-west rainfall split,
//! and impact reports drawn per hex at a rate set by its threat level.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hexgrid::{cell_boundary, lnglat_to_cell, GeoGrid, GridSpec, HexCell, LatLng, Units};
use crate::hsi::{self, DesignUnits, MM_PER_MILLI_INCH};
use crate::ihl::{IhlThresholds, StaticLayers};
use crate::lts::{LtsLevel, ThresholdMatrix};
use crate::pipeline;
use crate::raster_io::{self, ImpactPoint, Source};

const NODATA: f64 = -9999.0;
const M_PER_DEG: f64 = 6_371_007.180_918_475 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub nrows: usize,
    pub ncols: usize,
    /// Static-raster pixel size in degrees.
    pub cell_size: f64,
    pub origin_lat: f64,
    pub origin_lng: f64,
    pub west_fraction: f64,
    pub east_fraction: f64,
    /// Expected impact points per hex for levels F, A, B, C, D, E.
    pub rates: [f64; 6],
    /// Design depth in thousandths of an inch.
    pub design_raw: f64,
    pub window_start: DateTime<Utc>,
    pub window_hours: i64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            nrows: 300,
            ncols: 300,
            cell_size: 1e-4,
            origin_lat: 29.70,
            origin_lng: -95.40,
            west_fraction: 0.3,
            east_fraction: 1.2,
            rates: [0.05, 0.2, 0.5, 1.0, 2.0, 4.0],
            design_raw: 17_000.0,
            window_start: Utc.with_ymd_and_hms(2019, 9, 18, 0, 0, 0).unwrap(),
            window_hours: 24,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.nrows < 2 || self.ncols < 2 {
            return bad(format!("grid must be at least 2x2, got {}x{}", self.nrows, self.ncols));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad(format!("cell size must be > 0, got {}", self.cell_size));
        }
        let top = self.origin_lat + self.nrows as f64 * self.cell_size;
        let right = self.origin_lng + self.ncols as f64 * self.cell_size;
        if self.origin_lat < -89.0 || top > 89.0 || self.origin_lng < -180.0 || right >= 180.0 {
            return bad("scenario extent leaves the valid coordinate range".into());
        }
        for (name, f) in [("west", self.west_fraction), ("east", self.east_fraction)] {
            if !(f >= 0.0 && f.is_finite()) {
                return bad(format!("{name} fraction must be finite and >= 0, got {f}"));
            }
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad(format!("rates must be finite and >= 0, got {:?}", self.rates));
        }
        if !(self.design_raw > 0.0 && self.design_raw.is_finite()) {
            return bad(format!("design depth must be > 0, got {}", self.design_raw));
        }
        if self.window_hours <= 0 {
            return bad("window must last at least one hour".into());
        }
        Ok(())
    }

    fn spec(&self) -> GridSpec {
        GridSpec {
            nrows: self.nrows,
            ncols: self.ncols,
            x_origin: self.origin_lng,
            y_origin: self.origin_lat,
            cell_size: self.cell_size,
        }
    }

    pub fn window_end(&self) -> DateTime<Utc> {
        self.window_start + Duration::hours(self.window_hours)
    }

    /// Longitude splitting the west and east rainfall halves.
    pub fn split_lng(&self) -> f64 {
        self.origin_lng + self.ncols as f64 * self.cell_size / 2.0
    }
}

/// Everything `cmd_synth` writes, kept in memory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub layers: StaticLayers,
    /// Millimeters.
    pub rainfall: GeoGrid,
    /// Thousandths of an inch.
    pub design_raw: GeoGrid,
    pub points: Vec<ImpactPoint>,
}

struct Depression {
    x: f64,
    y: f64,
    radius_m: f64,
}

fn static_layers(s: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Result<StaticLayers> {
    let spec = s.spec();
    let lat_m = M_PER_DEG * s.cell_size;
    let lng_m = lat_m * s.origin_lat.to_radians().cos();
    let (w, h) = (s.ncols as f64 * lng_m, s.nrows as f64 * lat_m);
    let diag = (w * w + h * h).sqrt();

    let n_depr = ((w * h / 250_000.0).round() as usize).max(1);
    let depressions: Vec<Depression> = (0..n_depr)
        .map(|_| Depression {
            x: rng.random_range(0.0..w),
            y: rng.random_range(0.0..h),
            radius_m: rng.random_range(30.0..90.0),
        })
        .collect();

    let n = spec.len();
    let (mut fathom, mut hand, mut dist0, mut dist4) =
        (vec![NODATA; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for row in 0..s.nrows {
        for col in 0..s.ncols {
            let i = row * s.ncols + col;
            let (x, y) = ((col as f64 + 0.5) * lng_m, (row as f64 + 0.5) * lat_m);
            // Main channel runs from the south-west to the north-east corner.
            let d_main = (y * w - x * h).abs() / diag;
            // Minor tributary along the southern third, parallel to the x axis.
            let d_trib = (y - h / 3.0).abs();
            let near = d_main.min(d_trib);
            let noise: f64 = rng.random_range(0.0..0.4);
            let mut hand_m = 0.02 * near + noise;
            let mut depth = if d_main < 250.0 {
                Some((2.0 - 0.01 * d_main).max(0.0))
            } else {
                None
            };
            for d in &depressions {
                let r = ((x - d.x).powi(2) + (y - d.y).powi(2)).sqrt();
                if r < d.radius_m {
                    hand_m = hand_m.min(1.0 + 1.5 * r / d.radius_m);
                    let ponding = 0.4 * (1.0 - r / d.radius_m);
                    depth = Some(depth.unwrap_or(0.0).max(ponding));
                }
            }
            hand[i] = hand_m;
            dist0[i] = near;
            dist4[i] = d_main;
            if let Some(dep) = depth {
                fathom[i] = dep;
            }
        }
    }
    let grid = |v| GeoGrid::new(spec, NODATA, v, Units::Meters);
    Ok(StaticLayers {
        fathom: grid(fathom)?,
        hand: grid(hand)?,
        dist0: grid(dist0)?,
        dist4: grid(dist4)?,
    })
}

/// Coarse (about 1 km) event grids sharing the static extent with an even
/// number of columns, so the west/east split falls on a pixel edge.
fn event_grids(s: &ScenarioSpec) -> Result<(GeoGrid, GeoGrid)> {
    let width = s.ncols as f64 * s.cell_size;
    let height = s.nrows as f64 * s.cell_size;
    let halves = ((width / 0.01 / 2.0).round() as usize).max(1);
    let ncols = 2 * halves;
    let cell_size = width / ncols as f64;
    let nrows = ((height / cell_size).ceil() as usize).max(1);
    let spec = GridSpec {
        nrows,
        ncols,
        x_origin: s.origin_lng,
        y_origin: s.origin_lat,
        cell_size,
    };
    let design_mm = s.design_raw * MM_PER_MILLI_INCH;
    let mut rain = Vec::with_capacity(spec.len());
    for _ in 0..nrows {
        for col in 0..ncols {
            let f = if col < halves { s.west_fraction } else { s.east_fraction };
            rain.push(f * design_mm);
        }
    }
    Ok((
        GeoGrid::new(spec, NODATA, rain, Units::Millimeters)?,
        GeoGrid::filled(spec, NODATA, s.design_raw, Units::Dimensionless)?,
    ))
}

fn rate_for(s: &ScenarioSpec, level: LtsLevel) -> f64 {
    s.rates[level.ordinal() as usize]
}

/// Uniform point inside `cell`, by rejection from its vertex bounding box.
fn point_in_cell(cell: HexCell, rng: &mut ChaCha8Rng) -> LatLng {
    let ring = cell_boundary(cell);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in &ring {
        x0 = x0.min(v.lng());
        x1 = x1.max(v.lng());
        y0 = y0.min(v.lat());
        y1 = y1.max(v.lat());
    }
    for _ in 0..64 {
        let (x, y) = (rng.random_range(x0..x1), rng.random_range(y0..y1));
        if lnglat_to_cell(x, y).is_ok_and(|c| c == cell) {
            return LatLng::new(y, x).expect("inside a valid cell");
        }
    }
    cell.centroid()
}

pub fn generate(s: &ScenarioSpec) -> Result<Scenario> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let layers = static_layers(s, &mut rng)?;
    let (rainfall, design_raw) = event_grids(s)?;
    let design_mm = hsi::design_grid_mm(design_raw.clone(), DesignUnits::ThousandthsInch)?;
    let hazard = pipeline::run_hazard(
        &layers,
        &rainfall,
        &design_mm,
        &IhlThresholds::default(),
        &ThresholdMatrix::default(),
    )?;

    let window_secs = (s.window_end() - s.window_start).num_seconds();
    let mut points = Vec::new();
    // Cells are visited in index order so the draw sequence is fixed.
    for (&cell, &level) in &hazard.lts {
        let rate = rate_for(s, level);
        let count = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::Internal(format!("poisson({rate}): {e}")))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        for _ in 0..count {
            let location = point_in_cell(cell, &mut rng);
            let (source, category) = if rng.random_bool(0.5) {
                (Source::R311, "street flooding")
            } else {
                (Source::Waze, "flooded road")
            };
            let offset = rng.random_range(0..window_secs);
            points.push(ImpactPoint {
                location,
                source,
                category: category.to_string(),
                timestamp: s.window_start + Duration::seconds(offset),
            });
        }
    }
    Ok(Scenario {
        layers,
        rainfall,
        design_raw,
        points,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: &'static str,
    scenario: &'a ScenarioSpec,
    rate_levels: [&'static str; 6],
    impact_points: usize,
}

pub const BUNDLE_FILES: [&str; 9] = [
    "fathom.asc",
    "hand.asc",
    "dist0.asc",
    "dist4.asc",
    "rainfall.asc",
    "design.asc",
    "impacts.csv",
    "config.toml",
    "manifest.json",
];

/// Writes the bundle plus a `config.toml` pointing at it. Returns the
/// config path.
pub fn cmd_synth(s: &ScenarioSpec, out: &Path) -> Result<PathBuf> {
    let scenario = generate(s)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let l = &scenario.layers;
    raster_io::write_ascii_grid(&l.fathom, out.join("fathom.asc"))?;
    raster_io::write_ascii_grid(&l.hand, out.join("hand.asc"))?;
    raster_io::write_ascii_grid(&l.dist0, out.join("dist0.asc"))?;
    raster_io::write_ascii_grid(&l.dist4, out.join("dist4.asc"))?;
    raster_io::write_ascii_grid(&scenario.rainfall, out.join("rainfall.asc"))?;
    raster_io::write_ascii_grid(&scenario.design_raw, out.join("design.asc"))?;
    raster_io::write_points_csv(&scenario.points, out.join("impacts.csv"))?;

    let config = format!(
        "output_dir = \"out\"\n\n[inputs]\nfathom = \"fathom.asc\"\nhand = \"hand.asc\"\n\
         dist0 = \"dist0.asc\"\ndist4 = \"dist4.asc\"\nrainfall = \"rainfall.asc\"\n\
         design = \"design.asc\"\npoints = \"impacts.csv\"\n\n[window]\nstart = \"{}\"\nend = \"{}\"\n\n\
         [hsi]\natlas14_raw_units = \"thousandths_inch\"\n",
        raster_io::format_timestamp(&s.window_start),
        raster_io::format_timestamp(&s.window_end()),
    );
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, config).map_err(|e| Error::io(&config_path, e))?;

    let manifest = Manifest {
        generator: concat!("flashwarn ", env!("CARGO_PKG_VERSION")),
        scenario: s,
        rate_levels: ["F", "A", "B", "C", "D", "E"],
        impact_points: scenario.points.len(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(config_path)
}
