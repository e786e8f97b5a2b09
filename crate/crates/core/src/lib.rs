//! Flash-flood threat mapping on an H3 resolution-10 hexagonal grid.
//!
//! The hazard pipeline classifies static landscape susceptibility ([`ihl`]),
//! scales event rainfall by the local 100-year/24-hour design depth
//! ([`hsi`]), and fuses both through a class-specific trigger matrix
//! ([`lts`]). Threat levels are checked against crowdsourced impact reports
//! with a rank correlation ([`validate`]).

pub mod config;
pub mod error;
pub mod hexgrid;
pub mod hsi;
pub mod ihl;
pub mod lts;
pub mod pipeline;
pub mod raster_io;
pub mod synth;
pub mod validate;

pub use error::{Error, Result};
pub use hexgrid::{GeoGrid, HexCell, LatLng, Units};
pub use ihl::IhlClass;
pub use lts::{LtsLevel, ThresholdMatrix};
pub use validate::SpearmanResult;
