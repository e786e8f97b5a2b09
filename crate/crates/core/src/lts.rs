//! Localized threat severity: IHL class and HSI fused through a 4x5 matrix
//! of class-specific rainfall-ratio triggers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hexgrid::HexCell;
use crate::hsi::HsiHexMap;
use crate::ihl::{IhlClass, IhlHexMap};

/// Threat level in increasing severity. `F` means below the lowest trigger
/// or no rainfall data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LtsLevel {
    F,
    A,
    B,
    C,
    D,
    E,
}

impl LtsLevel {
    /// Levels that carry a trigger, least severe first.
    pub const TRIGGERED: [LtsLevel; 5] = [LtsLevel::A, LtsLevel::B, LtsLevel::C, LtsLevel::D, LtsLevel::E];

    /// `F` = 0, `A` = 1, ..., `E` = 5.
    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LtsLevel::F => "F",
            LtsLevel::A => "A",
            LtsLevel::B => "B",
            LtsLevel::C => "C",
            LtsLevel::D => "D",
            LtsLevel::E => "E",
        }
    }
}

impl fmt::Display for LtsLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LtsLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" => Ok(LtsLevel::F),
            "A" => Ok(LtsLevel::A),
            "B" => Ok(LtsLevel::B),
            "C" => Ok(LtsLevel::C),
            "D" => Ok(LtsLevel::D),
            "E" => Ok(LtsLevel::E),
            _ => Err(Error::Config(format!("unknown LTS level {s:?}"))),
        }
    }
}

/// Rainfall-ratio triggers; `triggers[class][level]` where level 0 is `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMatrix {
    triggers: [[f64; 5]; 4],
}

impl Default for ThresholdMatrix {
    fn default() -> Self {
        default_thresholds()
    }
}

pub fn default_thresholds() -> ThresholdMatrix {
    ThresholdMatrix {
        triggers: [
            [0.10, 0.20, 0.30, 0.50, 0.70],
            [0.15, 0.25, 0.35, 0.55, 0.90],
            [0.20, 0.30, 0.40, 0.60, 1.00],
            [0.25, 0.35, 0.45, 0.65, 1.20],
        ],
    }
}

impl ThresholdMatrix {
    pub fn new(triggers: [[f64; 5]; 4]) -> Result<Self> {
        let m = Self { triggers };
        m.validate()?;
        Ok(m)
    }

    /// Checks that rows strictly increase, columns never decrease toward
    /// less risky classes, and every trigger lies in (0, 10).
    pub fn validate(&self) -> Result<()> {
        for (ci, row) in self.triggers.iter().enumerate() {
            let class = IhlClass::ALL[ci];
            for (li, &t) in row.iter().enumerate() {
                let level = LtsLevel::TRIGGERED[li];
                if !(t > 0.0 && t < 10.0) {
                    return Err(Error::Config(format!(
                        "lts.triggers.{class}.{level} = {t} is outside (0, 10)"
                    )));
                }
                if li > 0 && !(row[li - 1] < t) {
                    return Err(Error::Config(format!(
                        "lts.triggers.{class}: level {level} trigger {t} does not exceed level {}",
                        LtsLevel::TRIGGERED[li - 1]
                    )));
                }
                if ci > 0 && t < self.triggers[ci - 1][li] {
                    return Err(Error::Config(format!(
                        "lts.triggers.{class}.{level} = {t} is below class {}",
                        IhlClass::ALL[ci - 1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// # Panics
    /// If `level` is [`LtsLevel::F`], which has no trigger.
    pub fn trigger(&self, class: IhlClass, level: LtsLevel) -> f64 {
        assert!(level != LtsLevel::F, "level F has no trigger");
        self.triggers[class.index()][level.ordinal() as usize - 1]
    }

    pub fn row(&self, class: IhlClass) -> &[f64; 5] {
        &self.triggers[class.index()]
    }

    /// Returns a copy with one trigger replaced, without validating.
    pub fn with_trigger(mut self, class: IhlClass, level: LtsLevel, value: f64) -> Self {
        assert!(level != LtsLevel::F, "level F has no trigger");
        self.triggers[class.index()][level.ordinal() as usize - 1] = value;
        self
    }
}

/// The most severe level whose trigger `hsi` reaches.
pub fn assign_level(class: IhlClass, hsi: f64, m: &ThresholdMatrix) -> Result<LtsLevel> {
    m.validate()?;
    Ok(assign_level_unchecked(class, hsi, m))
}

/// [`assign_level`] for a matrix already known to be valid.
pub(crate) fn assign_level_unchecked(class: IhlClass, hsi: f64, m: &ThresholdMatrix) -> LtsLevel {
    m.row(class)
        .iter()
        .zip(LtsLevel::TRIGGERED)
        .rev()
        .find(|(&t, _)| hsi >= t)
        .map_or(LtsLevel::F, |(_, level)| level)
}

pub type LtsHexMap = BTreeMap<HexCell, LtsLevel>;

/// Levels for every IHL-classified cell; missing HSI maps to `F`.
pub fn lts_map(ihl: &IhlHexMap, hsi: &HsiHexMap, m: &ThresholdMatrix) -> Result<LtsHexMap> {
    m.validate()?;
    Ok(ihl
        .iter()
        .map(|(&cell, &class)| {
            let level = hsi
                .get(&cell)
                .map_or(LtsLevel::F, |&q| assign_level_unchecked(class, q, m));
            (cell, level)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgrid::{point_to_cell, LatLng};
    use IhlClass as K;

    #[test]
    fn default_matrix_values() {
        let m = default_thresholds();
        assert_eq!(m.trigger(K::A, LtsLevel::A), 0.10);
        assert_eq!(m.trigger(K::C, LtsLevel::E), 1.00);
        assert_eq!(m.trigger(K::D, LtsLevel::E), 1.20);
        m.validate().unwrap();
    }

    #[test]
    fn assign_examples() {
        let m = default_thresholds();
        assert_eq!(assign_level(K::A, 0.10, &m).unwrap(), LtsLevel::A);
        assert_eq!(assign_level(K::C, 1.00, &m).unwrap(), LtsLevel::E);
        assert_eq!(assign_level(K::A, 0.05, &m).unwrap(), LtsLevel::F);
        assert_eq!(assign_level(K::D, 0.70, &m).unwrap(), LtsLevel::D);
        assert_eq!(assign_level(K::B, 50.0, &m).unwrap(), LtsLevel::E);
    }

    #[test]
    fn invalid_matrices_rejected() {
        let m = default_thresholds();
        let bad_row = m.with_trigger(K::A, LtsLevel::B, 0.10);
        assert!(matches!(assign_level(K::A, 0.5, &bad_row), Err(Error::Config(_))));
        let bad_col = m.with_trigger(K::D, LtsLevel::A, 0.12);
        assert!(bad_col.validate().is_err());
        assert!(m.with_trigger(K::D, LtsLevel::E, 10.0).validate().is_err());
        assert!(m.with_trigger(K::A, LtsLevel::A, 0.0).validate().is_err());
    }

    #[test]
    fn map_examples() {
        let m = default_thresholds();
        let c1 = point_to_cell(LatLng::new(29.76, -95.37).unwrap());
        let ihl = IhlHexMap::from([(c1, K::A)]);
        let hsi = HsiHexMap::from([(c1, 0.75)]);
        assert_eq!(lts_map(&ihl, &hsi, &m).unwrap()[&c1], LtsLevel::E);
        assert_eq!(lts_map(&ihl, &HsiHexMap::new(), &m).unwrap()[&c1], LtsLevel::F);
        let only_rain = HsiHexMap::from([(c1, 2.0)]);
        assert!(lts_map(&IhlHexMap::new(), &only_rain, &m).unwrap().is_empty());
    }

    #[test]
    fn level_order_and_ordinals() {
        assert!(LtsLevel::F < LtsLevel::A && LtsLevel::D < LtsLevel::E);
        assert_eq!(LtsLevel::E.ordinal(), 5);
        assert_eq!("F".parse::<LtsLevel>().unwrap(), LtsLevel::F);
    }
}
