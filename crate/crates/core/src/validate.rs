//! Checks threat levels against crowdsourced impact counts with a Spearman
//! rank correlation.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::hexgrid::{point_to_cell, HexCell};
use crate::lts::{LtsHexMap, LtsLevel};
use crate::raster_io::{HexRecord, ImpactPoint, Source};

/// Half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::Config(format!("window start {start} is not before end {end}")));
        }
        Ok(Self { start, end })
    }

    /// Covers every representable instant except the maximum.
    pub fn unbounded() -> Self {
        Self {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }

    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        self.start <= *t && *t < self.end
    }

    /// Parses `<start>..<end>` with RFC 3339 endpoints.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::Config(format!("window {s:?} is not <start>..<end>")))?;
        let parse = |t: &str| {
            DateTime::parse_from_rfc3339(t.trim())
                .map(|d| d.with_timezone(&Utc))
                .map_err(|e| Error::Config(format!("window endpoint {t:?}: {e}")))
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HexImpact {
    pub cell: HexCell,
    pub count_311: u64,
    pub count_waze: u64,
}

/// Counts points per cell and source inside `window`. Cells without any
/// point are absent; output is sorted by cell.
pub fn bin_points(points: &[ImpactPoint], window: &Window) -> Vec<HexImpact> {
    let counts = points
        .par_iter()
        .filter(|p| window.contains(&p.timestamp))
        .fold(BTreeMap::<HexCell, [u64; 2]>::new, |mut acc, p| {
            let slot = acc.entry(point_to_cell(p.location)).or_default();
            match p.source {
                Source::R311 => slot[0] += 1,
                Source::Waze => slot[1] += 1,
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (cell, [r, w]) in b {
                let slot = a.entry(cell).or_default();
                slot[0] += r;
                slot[1] += w;
            }
            a
        });
    counts
        .into_iter()
        .map(|(cell, [count_311, count_waze])| HexImpact {
            cell,
            count_311,
            count_waze,
        })
        .collect()
}

/// Min-max scaling to [0, 1]; a constant input maps to all zeros.
pub fn minmax_normalize(xs: &[f64]) -> Vec<f64> {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return vec![0.0; xs.len()];
    }
    let span = hi - lo;
    xs.iter().map(|&x| ((x - lo) / span).clamp(0.0, 1.0)).collect()
}

/// Equal-weight mean of two normalized vectors.
pub fn composite_index(norm_311: &[f64], norm_waze: &[f64]) -> Result<Vec<f64>> {
    if norm_311.len() != norm_waze.len() {
        return Err(Error::Alignment(format!(
            "composite inputs differ in length: {} vs {}",
            norm_311.len(),
            norm_waze.len()
        )));
    }
    Ok(norm_311
        .iter()
        .zip(norm_waze)
        .map(|(a, b)| ((a + b) / 2.0).clamp(0.0, 1.0))
        .collect())
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    TooFewSamples,
    ZeroRankVariance,
}

/// Spearman correlation. `rho` and `p_value` are `None` exactly when
/// `undefined` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanResult {
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub undefined: Option<Undefined>,
}

impl SpearmanResult {
    fn undefined(n: usize, why: Undefined) -> Self {
        Self {
            rho: None,
            p_value: None,
            n,
            undefined: Some(why),
        }
    }

    pub fn is_defined(&self) -> bool {
        self.undefined.is_none()
    }
}

/// Two-sided p-value of `rho` from Student's t with `n - 2` degrees of
/// freedom.
pub fn t_approx_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    if x.len() != y.len() {
        return Err(Error::Alignment(format!(
            "spearman inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Aggregation("spearman inputs must be finite".into()));
    }
    let n = x.len();
    if n < 3 {
        return Ok(SpearmanResult::undefined(n, Undefined::TooFewSamples));
    }
    let Some(rho) = pearson(&average_ranks(x), &average_ranks(y)) else {
        return Ok(SpearmanResult::undefined(n, Undefined::ZeroRankVariance));
    };
    Ok(SpearmanResult {
        rho: Some(rho),
        p_value: Some(t_approx_p_value(rho, n)),
        n,
        undefined: None,
    })
}

/// Largest input accepted by [`permutation_p_value`].
pub const MAX_PERMUTATION_N: usize = 10;

/// Exact two-sided permutation p-value: the share of all `n!` pairings of
/// `y` against `x` whose |rho| is at least the observed |rho|.
pub fn permutation_p_value(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    let observed = spearman(x, y)?;
    let Some(rho) = observed.rho else {
        return Ok(None);
    };
    let n = x.len();
    if n > MAX_PERMUTATION_N {
        return Err(Error::Aggregation(format!(
            "exact permutation test limited to n <= {MAX_PERMUTATION_N}, got {n}"
        )));
    }
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let mean = (n as f64 + 1.0) / 2.0;
    let sx = rx.iter().map(|r| (r - mean).powi(2)).sum::<f64>().sqrt();
    let sy = ry.iter().map(|r| (r - mean).powi(2)).sum::<f64>().sqrt();
    let cx: Vec<f64> = rx.iter().map(|r| r - mean).collect();
    let target = rho.abs() - 1e-12;

    let score = |ry: &[f64]| -> bool {
        let s: f64 = cx.iter().zip(ry).map(|(a, b)| a * (b - mean)).sum();
        (s / (sx * sy)).abs() >= target
    };
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let mut hits = u64::from(score(&ry));
    let mut total = 1u64;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            total += 1;
            hits += u64::from(score(&ry));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(Some(hits as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub status: &'static str,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub retained: usize,
    pub dropped_f: usize,
    pub dropped_missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<Undefined>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventValidation {
    pub result: SpearmanResult,
    /// Retained hexes sorted by cell.
    pub records: Vec<HexRecord>,
    /// LTS cells at level `F`.
    pub dropped_f: usize,
    /// LTS cells above `F` with no impact record.
    pub dropped_missing: usize,
}

impl EventValidation {
    pub fn summary(&self) -> ValidationSummary {
        ValidationSummary {
            status: if self.result.is_defined() { "ok" } else { "undefined" },
            rho: self.result.rho,
            p_value: self.result.p_value,
            n: self.result.n,
            retained: self.records.len(),
            dropped_f: self.dropped_f,
            dropped_missing: self.dropped_missing,
            reason: self.result.undefined,
        }
    }
}

/// Joins impacts to threat levels, keeps hexes above `F` that have an
/// impact record, normalizes both counts over that set and correlates the
/// ordinal level with the composite index.
pub fn validate_event(lts: &LtsHexMap, impacts: &[HexImpact]) -> Result<EventValidation> {
    let by_cell: BTreeMap<HexCell, &HexImpact> = impacts.iter().map(|h| (h.cell, h)).collect();
    let mut dropped_f = 0;
    let mut dropped_missing = 0;
    let mut kept: Vec<(HexCell, LtsLevel, &HexImpact)> = Vec::new();
    for (&cell, &level) in lts {
        if level == LtsLevel::F {
            dropped_f += 1;
        } else if let Some(h) = by_cell.get(&cell) {
            kept.push((cell, level, h));
        } else {
            dropped_missing += 1;
        }
    }
    let c311: Vec<f64> = kept.iter().map(|k| k.2.count_311 as f64).collect();
    let cwaze: Vec<f64> = kept.iter().map(|k| k.2.count_waze as f64).collect();
    let composite = composite_index(&minmax_normalize(&c311), &minmax_normalize(&cwaze))?;
    let xs: Vec<f64> = kept.iter().map(|k| f64::from(k.1.ordinal())).collect();
    let result = spearman(&xs, &composite)?;
    let records = kept
        .iter()
        .zip(&composite)
        .map(|(&(cell, level, h), &comp)| HexRecord {
            lts_level: Some(level),
            count_311: Some(h.count_311),
            count_waze: Some(h.count_waze),
            composite: Some(comp),
            ..HexRecord::new(cell)
        })
        .collect();
    Ok(EventValidation {
        result,
        records,
        dropped_f,
        dropped_missing,
    })
}
