//! Pipeline configuration file (TOML).
//!
//! ```toml
//! output_dir = "out"
//!
//! [inputs]
//! fathom = "fathom.asc"
//! hand = "hand.asc"
//! dist0 = "dist0.asc"
//! dist4 = "dist4.asc"
//! rainfall = "rainfall.asc"
//! design = "design.asc"
//! points = "impacts.csv"
//!
//! [window]
//! start = "2019-09-18T00:00:00Z"
//! end = "2019-09-19T00:00:00Z"
//!
//! [hsi]
//! atlas14_raw_units = "thousandths_inch"
//!
//! [ihl]
//! fathom_high = 1.64
//!
//! [lts.triggers.A]
//! A = 0.10
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hsi::DesignUnits;
use crate::ihl::{IhlClass, IhlThresholds};
use crate::lts::{LtsLevel, ThresholdMatrix};
use crate::validate::Window;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    inputs: RawInputs,
    window: Option<RawWindow>,
    #[serde(default)]
    hsi: RawHsi,
    #[serde(default)]
    ihl: IhlThresholds,
    #[serde(default)]
    lts: RawLts,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    fathom: Option<PathBuf>,
    hand: Option<PathBuf>,
    dist0: Option<PathBuf>,
    dist4: Option<PathBuf>,
    rainfall: Option<PathBuf>,
    design: Option<PathBuf>,
    points: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHsi {
    #[serde(default)]
    atlas14_raw_units: DesignUnits,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLts {
    #[serde(default)]
    triggers: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputPaths {
    pub fathom: Option<PathBuf>,
    pub hand: Option<PathBuf>,
    pub dist0: Option<PathBuf>,
    pub dist4: Option<PathBuf>,
    pub rainfall: Option<PathBuf>,
    pub design: Option<PathBuf>,
    pub points: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub window: Option<Window>,
    pub design_units: DesignUnits,
    pub ihl: IhlThresholds,
    pub triggers: ThresholdMatrix,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: InputPaths::default(),
            window: None,
            design_units: DesignUnits::default(),
            ihl: IhlThresholds::default(),
            triggers: ThresholdMatrix::default(),
            output_dir: PathBuf::from("."),
            workers: None,
        }
    }
}

fn apply_triggers(overrides: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<ThresholdMatrix> {
    let mut m = ThresholdMatrix::default();
    for (class, levels) in overrides {
        let class: IhlClass = class.parse()?;
        for (level, &value) in levels {
            let level: LtsLevel = level.parse()?;
            if level == LtsLevel::F {
                return Err(Error::Config(format!("lts.triggers.{class}.F: level F has no trigger")));
            }
            m = m.with_trigger(class, level, value);
        }
    }
    m.validate()?;
    Ok(m)
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.ihl.validate()?;
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base_dir.join(p) });
        let window = raw.window.map(|w| Window::new(w.start, w.end)).transpose()?;
        if raw.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(Self {
            inputs: InputPaths {
                fathom: resolve(raw.inputs.fathom),
                hand: resolve(raw.inputs.hand),
                dist0: resolve(raw.inputs.dist0),
                dist4: resolve(raw.inputs.dist4),
                rainfall: resolve(raw.inputs.rainfall),
                design: resolve(raw.inputs.design),
                points: resolve(raw.inputs.points),
            },
            window,
            design_units: raw.hsi.atlas14_raw_units,
            ihl: raw.ihl,
            triggers: apply_triggers(&raw.lts.triggers)?,
            output_dir: resolve(raw.output_dir).unwrap_or_else(|| base_dir.to_path_buf()),
            workers: raw.workers,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Returns the path or a config error naming the missing key.
pub fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("inputs.{key} is not set")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = PipelineConfig::from_toml_str("", Path::new("/base")).unwrap();
        assert_eq!(c.triggers, ThresholdMatrix::default());
        assert_eq!(c.ihl, IhlThresholds::default());
        assert_eq!(c.design_units, DesignUnits::ThousandthsInch);
        assert_eq!(c.output_dir, Path::new("/base"));
    }

    #[test]
    fn overrides_and_paths() {
        let text = r#"
            output_dir = "out"
            [inputs]
            hand = "hand.asc"
            design = "/abs/design.asc"
            [window]
            start = "2019-09-18T00:00:00Z"
            end = "2019-09-19T00:00:00Z"
            [hsi]
            atlas14_raw_units = "millimeters"
            [ihl]
            fathom_high = 1.5
            [lts.triggers.D]
            E = 1.5
        "#;
        let c = PipelineConfig::from_toml_str(text, Path::new("/base")).unwrap();
        assert_eq!(c.inputs.hand.as_deref(), Some(Path::new("/base/hand.asc")));
        assert_eq!(c.inputs.design.as_deref(), Some(Path::new("/abs/design.asc")));
        assert_eq!(c.output_dir, Path::new("/base/out"));
        assert_eq!(c.design_units, DesignUnits::Millimeters);
        assert_eq!(c.ihl.fathom_high, 1.5);
        assert_eq!(c.triggers.trigger(IhlClass::D, LtsLevel::E), 1.5);
        assert!(c.window.is_some());
    }

    #[test]
    fn invalid_overrides_rejected() {
        let base = Path::new(".");
        let bad = [
            "[lts.triggers.A]\nB = 0.05",
            "[lts.triggers.X]\nA = 0.1",
            "[lts.triggers.A]\nF = 0.1",
            "[ihl]\nunknown = 1.0",
            "[window]\nstart = \"2019-09-19T00:00:00Z\"\nend = \"2019-09-18T00:00:00Z\"",
            "[hsi]\natlas14_raw_units = \"inches\"",
            "workers = 0",
        ];
        for text in bad {
            assert!(
                matches!(PipelineConfig::from_toml_str(text, base), Err(Error::Config(_))),
                "{text}"
            );
        }
    }
}
