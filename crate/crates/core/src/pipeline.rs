//! End-to-end hazard and validation runs over files named in a
//! [`PipelineConfig`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::config::{required, PipelineConfig};
use crate::error::{Error, Result};
use crate::hexgrid::{cells_covering, GeoGrid, HexCell, Units};
use crate::hsi::{self, HsiHexMap};
use crate::ihl::{self, IhlHexMap, IhlThresholds, StaticLayers};
use crate::lts::{self, LtsHexMap, ThresholdMatrix};
use crate::raster_io::{self, HexRecord, PointsRead};
use crate::validate::{self, EventValidation, Window};

/// Runs `f` on a rayon pool of `workers` threads (the global pool when
/// `None`). Every parallel step merges with order-independent reductions,
/// so the worker count never changes results.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn load_static_layers(config: &PipelineConfig) -> Result<StaticLayers> {
    let read = |p: &Option<PathBuf>, key| -> Result<GeoGrid> {
        raster_io::read_ascii_grid(required(p, key)?, Units::Meters)
    };
    let i = &config.inputs;
    Ok(StaticLayers {
        fathom: read(&i.fathom, "fathom")?,
        hand: read(&i.hand, "hand")?,
        dist0: read(&i.dist0, "dist0")?,
        dist4: read(&i.dist4, "dist4")?,
    })
}

/// Rainfall and design depth, both in millimeters.
pub fn load_event_grids(config: &PipelineConfig) -> Result<(GeoGrid, GeoGrid)> {
    let i = &config.inputs;
    let rain = raster_io::read_ascii_grid(required(&i.rainfall, "rainfall")?, Units::Millimeters)?;
    let raw = raster_io::read_ascii_grid(required(&i.design, "design")?, Units::Dimensionless)?;
    Ok((rain, hsi::design_grid_mm(raw, config.design_units)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IhlOutput {
    pub cells: BTreeSet<HexCell>,
    pub ihl: IhlHexMap,
}

pub fn run_ihl(layers: &StaticLayers, thresholds: &IhlThresholds) -> Result<IhlOutput> {
    let labels = ihl::classify_layers(layers, thresholds)?;
    let cells = cells_covering(&layers.hand);
    let ihl = ihl::ihl_hex_map(&labels, &cells);
    Ok(IhlOutput { cells, ihl })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardOutput {
    pub ihl: IhlHexMap,
    pub hsi: HsiHexMap,
    pub lts: LtsHexMap,
}

impl HazardOutput {
    pub fn records(&self) -> Vec<HexRecord> {
        self.lts
            .iter()
            .map(|(&cell, &level)| HexRecord {
                ihl_class: self.ihl.get(&cell).copied(),
                hsi: self.hsi.get(&cell).copied(),
                lts_level: Some(level),
                ..HexRecord::new(cell)
            })
            .collect()
    }
}

pub fn run_hazard(
    layers: &StaticLayers,
    rain: &GeoGrid,
    design: &GeoGrid,
    thresholds: &IhlThresholds,
    triggers: &ThresholdMatrix,
) -> Result<HazardOutput> {
    let IhlOutput { ihl, .. } = run_ihl(layers, thresholds)?;
    // Only classified cells can carry a threat level.
    let classified: BTreeSet<HexCell> = ihl.keys().copied().collect();
    let hsi = hsi::hsi_for_cells(rain, design, &classified);
    let lts = lts::lts_map(&ihl, &hsi, triggers)?;
    Ok(HazardOutput { ihl, hsi, lts })
}

pub fn ihl_records(ihl: &IhlHexMap) -> Vec<HexRecord> {
    ihl.iter()
        .map(|(&cell, &class)| HexRecord {
            ihl_class: Some(class),
            ..HexRecord::new(cell)
        })
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_pair(records: &[HexRecord], dir: &Path, stem: &str) -> Result<()> {
    ensure_dir(dir)?;
    raster_io::write_hex_geojson(records, dir.join(format!("{stem}.geojson")))?;
    raster_io::write_hex_csv(records, dir.join(format!("{stem}.csv")))
}

/// `ihl.geojson` and `ihl.csv`.
pub fn cmd_ihl(config: &PipelineConfig) -> Result<IhlHexMap> {
    let layers = load_static_layers(config)?;
    let ihl = with_workers(config.workers, || run_ihl(&layers, &config.ihl))??.ihl;
    write_pair(&ihl_records(&ihl), &config.output_dir, "ihl")?;
    Ok(ihl)
}

pub fn hazard_from_config(config: &PipelineConfig) -> Result<HazardOutput> {
    let layers = load_static_layers(config)?;
    let (rain, design) = load_event_grids(config)?;
    with_workers(config.workers, || {
        run_hazard(&layers, &rain, &design, &config.ihl, &config.triggers)
    })?
}

/// `lts.geojson` and `lts.csv`.
pub fn cmd_lts(config: &PipelineConfig) -> Result<HazardOutput> {
    let hazard = hazard_from_config(config)?;
    write_pair(&hazard.records(), &config.output_dir, "lts")?;
    Ok(hazard)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOutput {
    pub validation: EventValidation,
    pub rejected_points: usize,
    /// Single-line JSON summary, also written to `summary.json`.
    pub summary_line: String,
}

/// Per-hex table in `validation.geojson`/`validation.csv` and the summary
/// in `summary.json`.
pub fn cmd_validate(
    config: &PipelineConfig,
    points_csv: &Path,
    window: Option<Window>,
    lenient: bool,
) -> Result<ValidateOutput> {
    let hazard = hazard_from_config(config)?;
    let PointsRead { points, rejected } = raster_io::read_points_csv(points_csv, lenient)?;
    let window = window.or(config.window).unwrap_or_else(Window::unbounded);
    let mut validation = with_workers(config.workers, || -> Result<EventValidation> {
        let impacts = validate::bin_points(&points, &window);
        validate::validate_event(&hazard.lts, &impacts)
    })??;
    for r in &mut validation.records {
        r.ihl_class = hazard.ihl.get(&r.cell).copied();
        r.hsi = hazard.hsi.get(&r.cell).copied();
    }
    write_pair(&validation.records, &config.output_dir, "validation")?;
    let summary_line =
        serde_json::to_string(&validation.summary()).map_err(|e| Error::Internal(e.to_string()))?;
    let summary_path = config.output_dir.join("summary.json");
    std::fs::write(&summary_path, format!("{summary_line}\n")).map_err(|e| Error::io(&summary_path, e))?;
    Ok(ValidateOutput {
        validation,
        rejected_points: rejected.len(),
        summary_line,
    })
}
