//! Inherent hazard likelihood: a four-class static susceptibility label per
//! pixel, aggregated to hexes by majority vote.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hexgrid::{self, GeoGrid, GridSpec, HexCell, LatLng};

/// Static risk class, `A` riskiest.
///
/// The derived `Ord` follows declaration order, so `A < B` means "A is
/// riskier than B".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IhlClass {
    A,
    B,
    C,
    D,
}

impl IhlClass {
    pub const ALL: [IhlClass; 4] = [IhlClass::A, IhlClass::B, IhlClass::C, IhlClass::D];

    /// Position in [`IhlClass::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IhlClass::A => "A",
            IhlClass::B => "B",
            IhlClass::C => "C",
            IhlClass::D => "D",
        }
    }
}

impl fmt::Display for IhlClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IhlClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(IhlClass::A),
            "B" => Ok(IhlClass::B),
            "C" => Ok(IhlClass::C),
            "D" => Ok(IhlClass::D),
            _ => Err(Error::Config(format!("unknown IHL class {s:?}"))),
        }
    }
}

/// Classification thresholds, all in meters.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IhlThresholds {
    /// Class A modeled depth, and the exclusive upper bound of class B depth.
    pub fathom_high: f64,
    pub fathom_moderate_low: f64,
    pub hand_a: f64,
    pub hand_b_low: f64,
    pub hand_b_high: f64,
    pub hand_c: f64,
    pub dist0_a: f64,
    pub dist4_b: f64,
}

impl Default for IhlThresholds {
    fn default() -> Self {
        Self {
            fathom_high: 1.64,
            fathom_moderate_low: 0.5,
            hand_a: 2.0,
            hand_b_low: 2.0,
            hand_b_high: 5.0,
            hand_c: 3.0,
            dist0_a: 100.0,
            dist4_b: 300.0,
        }
    }
}

impl IhlThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("fathom_high", self.fathom_high),
            ("fathom_moderate_low", self.fathom_moderate_low),
            ("hand_a", self.hand_a),
            ("hand_b_low", self.hand_b_low),
            ("hand_b_high", self.hand_b_high),
            ("hand_c", self.hand_c),
            ("dist0_a", self.dist0_a),
            ("dist4_b", self.dist4_b),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("ihl.{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.fathom_moderate_low > self.fathom_high {
            return Err(Error::Config("ihl.fathom_moderate_low exceeds ihl.fathom_high".into()));
        }
        if self.hand_b_low > self.hand_b_high {
            return Err(Error::Config("ihl.hand_b_low exceeds ihl.hand_b_high".into()));
        }
        Ok(())
    }
}

/// Inputs for one pixel; `None` is nodata.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PixelInputs {
    pub fathom: Option<f64>,
    pub hand: Option<f64>,
    pub dist0: Option<f64>,
    pub dist4: Option<f64>,
}

/// Evaluates `pred` on a present value; nodata makes the term false.
fn term(v: Option<f64>, pred: impl Fn(f64) -> bool) -> bool {
    v.is_some_and(pred)
}

/// Cascading A, B, C, D classification, first match wins. Returns `None`
/// when every input is nodata.
pub fn classify_pixel(px: PixelInputs, t: &IhlThresholds) -> Option<IhlClass> {
    let PixelInputs {
        fathom,
        hand,
        dist0,
        dist4,
    } = px;
    if fathom.is_none() && hand.is_none() && dist0.is_none() && dist4.is_none() {
        return None;
    }
    let class_a = term(fathom, |f| f >= t.fathom_high)
        || (term(hand, |h| h <= t.hand_a) && term(dist0, |d| d < t.dist0_a));
    if class_a {
        return Some(IhlClass::A);
    }
    let class_b = term(fathom, |f| t.fathom_moderate_low <= f && f < t.fathom_high)
        || (term(hand, |h| t.hand_b_low < h && h <= t.hand_b_high) && term(dist4, |d| d <= t.dist4_b));
    if class_b {
        return Some(IhlClass::B);
    }
    if term(hand, |h| h <= t.hand_c) && term(fathom, |f| f > 0.0) {
        return Some(IhlClass::C);
    }
    Some(IhlClass::D)
}

/// The four static layers, in meters.
#[derive(Debug, Clone)]
pub struct StaticLayers {
    pub fathom: GeoGrid,
    pub hand: GeoGrid,
    pub dist0: GeoGrid,
    pub dist4: GeoGrid,
}

/// Per-pixel labels on the HAND grid's geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    spec: GridSpec,
    labels: Vec<Option<IhlClass>>,
}

impl LabelGrid {
    pub fn new(spec: GridSpec, labels: Vec<Option<IhlClass>>) -> Result<Self> {
        spec.validate()?;
        if labels.len() != spec.len() {
            return Err(Error::Grid(format!(
                "expected {} labels, got {}",
                spec.len(),
                labels.len()
            )));
        }
        Ok(Self { spec, labels })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[Option<IhlClass>] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> Option<IhlClass> {
        self.labels[row * self.spec.ncols + col]
    }
}

fn intersects(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> bool {
    a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3
}

fn sample_at(grid: &GeoGrid, x: f64, y: f64) -> Option<f64> {
    let (row, col) = grid.spec().nearest_pixel(x, y)?;
    grid.get(row, col)
}

/// Labels every HAND pixel, sampling the other layers at its center.
pub fn classify_layers(layers: &StaticLayers, t: &IhlThresholds) -> Result<LabelGrid> {
    t.validate()?;
    let reference = layers.hand.spec().bounds();
    for (name, g) in [
        ("fathom", &layers.fathom),
        ("dist0", &layers.dist0),
        ("dist4", &layers.dist4),
    ] {
        if !intersects(reference, g.spec().bounds()) {
            return Err(Error::Alignment(format!(
                "{name} extent {:?} does not overlap the HAND extent {:?}",
                g.spec().bounds(),
                reference
            )));
        }
    }
    let spec = *layers.hand.spec();
    let ncols = spec.ncols;
    let mut labels = vec![None; spec.len()];
    labels
        .par_chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, out)| {
            for (col, slot) in out.iter_mut().enumerate() {
                let (x, y) = spec.pixel_center(row, col);
                let px = PixelInputs {
                    fathom: sample_at(&layers.fathom, x, y),
                    hand: layers.hand.get(row, col),
                    dist0: sample_at(&layers.dist0, x, y),
                    dist4: sample_at(&layers.dist4, x, y),
                };
                *slot = classify_pixel(px, t);
            }
        });
    LabelGrid::new(spec, labels)
}

/// Hex to class; cells without classifiable pixels are absent.
pub type IhlHexMap = BTreeMap<HexCell, IhlClass>;

/// Rows per parallel work unit in [`ihl_hex_map`].
const ROW_BLOCK: usize = 16;

/// Majority class per requested cell over pixel centers inside it.
///
/// Pixels are assigned to cells by H3 point-to-cell, so each pixel center
/// lands in exactly one cell. Partial tallies are merged by summation,
/// which does not depend on how rows are partitioned.
pub fn ihl_hex_map(labels: &LabelGrid, cells: &BTreeSet<HexCell>) -> IhlHexMap {
    let spec = *labels.spec();
    let wanted: std::collections::HashSet<HexCell> = cells.iter().copied().collect();
    let nblocks = spec.nrows.div_ceil(ROW_BLOCK);
    let tallies = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut local: HashMap<HexCell, [usize; 4]> = HashMap::new();
            let rows = b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(spec.nrows);
            for row in rows {
                for col in 0..spec.ncols {
                    let Some(class) = labels.get(row, col) else {
                        continue;
                    };
                    let (x, y) = spec.pixel_center(row, col);
                    let Ok(cell) = LatLng::new(y, x).map(hexgrid::point_to_cell) else {
                        continue;
                    };
                    if wanted.contains(&cell) {
                        local.entry(cell).or_default()[class.index()] += 1;
                    }
                }
            }
            local
        })
        .reduce(HashMap::new, |mut acc, part| {
            for (cell, counts) in part {
                let slot = acc.entry(cell).or_default();
                for i in 0..4 {
                    slot[i] += counts[i];
                }
            }
            acc
        });
    tallies
        .into_iter()
        .filter_map(|(cell, counts)| hexgrid::majority_from_counts(&counts).map(|c| (cell, c)))
        .collect()
}
