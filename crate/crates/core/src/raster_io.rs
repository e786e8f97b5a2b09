//! File formats: ESRI ASCII grids in, impact-point CSV in, per-hex GeoJSON
//! and CSV out.
//!
//! ASCII grids are stored north-up on disk and south-up in memory; the flip
//! happens here and nowhere else. Floats are written with the shortest
//! representation that parses back to the same bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hexgrid::{cell_boundary, GeoGrid, GridSpec, HexCell, LatLng, Units};
use crate::ihl::IhlClass;
use crate::lts::LtsLevel;

const GRID_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

pub fn read_ascii_grid(path: impl AsRef<Path>, units: Units) -> Result<GeoGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii_grid(&text, path, units)
}

pub fn parse_ascii_grid(text: &str, path: &Path, units: Units) -> Result<GeoGrid> {
    let err = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut lines = text.lines().enumerate().peekable();

    // Header: `key value` lines until the first line starting with a number.
    while let Some(&(i, line)) = lines.peek() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() {
            break;
        }
        lines.next();
        let lineno = i + 1;
        let lower = key.to_ascii_lowercase();
        let slot = GRID_KEYS
            .iter()
            .position(|&k| k == lower)
            .ok_or_else(|| err(lineno, format!("unknown header key {key:?}")))?;
        if header[slot].is_some() {
            return Err(err(lineno, format!("duplicate header key {key:?}")));
        }
        let value = toks
            .next()
            .ok_or_else(|| err(lineno, format!("header key {key:?} has no value")))?;
        if toks.next().is_some() {
            return Err(err(lineno, format!("trailing tokens after header key {key:?}")));
        }
        let v: f64 = value
            .parse()
            .map_err(|_| err(lineno, format!("non-numeric value {value:?} for {key:?}")))?;
        header[slot] = Some(v);
    }
    let header_end = lines.peek().map_or(text.lines().count(), |&(i, _)| i);
    let mut h = [0.0; 6];
    for (k, slot) in GRID_KEYS.iter().zip(&header) {
        match slot {
            Some(v) => h[GRID_KEYS.iter().position(|x| x == k).unwrap()] = *v,
            None => return Err(err(header_end + 1, format!("missing header key {k:?}"))),
        }
    }
    let dim = |v: f64, name: &str| -> Result<usize> {
        if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(err(header_end, format!("{name} must be a positive integer, got {v}")))
        }
    };
    let ncols = dim(h[0], "ncols")?;
    let nrows = dim(h[1], "nrows")?;
    let spec = GridSpec {
        nrows,
        ncols,
        x_origin: h[2],
        y_origin: h[3],
        cell_size: h[4],
    };
    let nodata = h[5];
    spec.validate().map_err(|e| err(header_end, e.to_string()))?;

    let expected = nrows * ncols;
    let mut file_order = Vec::with_capacity(expected);
    let mut last_line = header_end + 1;
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            last_line = i + 1;
            if file_order.len() == expected {
                return Err(err(i + 1, format!("more than {expected} values")));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| err(i + 1, format!("non-numeric token {tok:?}")))?;
            if v != nodata && !v.is_finite() {
                return Err(err(i + 1, format!("non-finite value {tok:?}")));
            }
            file_order.push(v);
        }
    }
    if file_order.len() != expected {
        return Err(err(
            last_line,
            format!(
                "data section has {} values, expected {expected} ({nrows} rows x {ncols} cols)",
                file_order.len()
            ),
        ));
    }
    // File row 0 is the northmost row; memory row 0 the southmost.
    let mut values = Vec::with_capacity(expected);
    for file_row in file_order.chunks_exact(ncols).rev() {
        values.extend_from_slice(file_row);
    }
    GeoGrid::new(spec, nodata, values, units)
}

pub fn format_ascii_grid(grid: &GeoGrid) -> String {
    let s = grid.spec();
    let mut out = format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nnodata_value {}\n",
        s.ncols,
        s.nrows,
        s.x_origin,
        s.y_origin,
        s.cell_size,
        grid.nodata()
    );
    for row in grid.values().chunks_exact(s.ncols).rev() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_ascii_grid(grid: &GeoGrid, path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &format_ascii_grid(grid))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    R311,
    Waze,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::R311 => "R311",
            Source::Waze => "WAZE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "R311" => Some(Source::R311),
            "WAZE" => Some(Source::Waze),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactPoint {
    pub location: LatLng,
    pub source: Source,
    pub category: String,
    pub timestamp: DateTime<Utc>,
}

pub const POINTS_HEADER: [&str; 5] = ["lat", "lng", "source", "category", "timestamp"];

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointsRead {
    pub points: Vec<ImpactPoint>,
    /// Only populated in lenient mode.
    pub rejected: Vec<RejectedRow>,
}

fn parse_point(rec: &csv::StringRecord) -> std::result::Result<ImpactPoint, String> {
    if rec.len() != POINTS_HEADER.len() {
        return Err(format!("expected {} fields, got {}", POINTS_HEADER.len(), rec.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        rec[i]
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("bad {} {:?}", POINTS_HEADER[i], &rec[i]))
    };
    let (lat, lng) = (num(0)?, num(1)?);
    let location = LatLng::new(lat, lng).map_err(|e| e.to_string())?;
    let source = Source::parse(rec[2].trim()).ok_or_else(|| format!("unknown source {:?}", &rec[2]))?;
    let timestamp = DateTime::parse_from_rfc3339(rec[4].trim())
        .map_err(|e| format!("malformed timestamp {:?}: {e}", &rec[4]))?
        .with_timezone(&Utc);
    Ok(ImpactPoint {
        location,
        source,
        category: rec[3].to_string(),
        timestamp,
    })
}

/// Reads an impact CSV. In strict mode the first bad row aborts; in
/// lenient mode bad rows are skipped and reported in
/// [`PointsRead::rejected`].
pub fn read_points_csv(path: impl AsRef<Path>, lenient: bool) -> Result<PointsRead> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_points(file, path, lenient)
}

pub fn read_points(reader: impl std::io::Read, path: &Path, lenient: bool) -> Result<PointsRead> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let row_err = |row: usize, message: String| Error::Row {
        path: path.to_path_buf(),
        row,
        message,
    };
    let headers = rdr.headers().map_err(|e| row_err(1, e.to_string()))?.clone();
    if headers.iter().map(str::trim).ne(POINTS_HEADER) {
        return Err(row_err(
            1,
            format!("header must be {:?}, got {:?}", POINTS_HEADER.join(","), headers),
        ));
    }
    let mut out = PointsRead::default();
    for rec in rdr.records() {
        let (line, parsed) = match rec {
            Ok(rec) => (
                rec.position().map_or(0, |p| p.line() as usize),
                parse_point(&rec),
            ),
            Err(e) => (
                e.position().map_or(0, |p| p.line() as usize),
                Err(e.to_string()),
            ),
        };
        match parsed {
            Ok(p) => out.points.push(p),
            Err(message) if lenient => out.rejected.push(RejectedRow { line, message }),
            Err(message) => return Err(row_err(line, message)),
        }
    }
    Ok(out)
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn write_points_csv(points: &[ImpactPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(POINTS_HEADER).map_err(io)?;
    for p in points {
        w.write_record([
            p.location.lat().to_string(),
            p.location.lng().to_string(),
            p.source.as_str().to_string(),
            p.category.clone(),
            format_timestamp(&p.timestamp),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One output row per hex.
#[derive(Debug, Clone, PartialEq)]
pub struct HexRecord {
    pub cell: HexCell,
    pub ihl_class: Option<IhlClass>,
    pub hsi: Option<f64>,
    pub lts_level: Option<LtsLevel>,
    pub count_311: Option<u64>,
    pub count_waze: Option<u64>,
    pub composite: Option<f64>,
}

impl HexRecord {
    pub fn new(cell: HexCell) -> Self {
        Self {
            cell,
            ihl_class: None,
            hsi: None,
            lts_level: None,
            count_311: None,
            count_waze: None,
            composite: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.hsi {
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::Internal(format!("{}: hsi {h} is not finite and >= 0", self.cell)));
            }
        }
        if let Some(c) = self.composite {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Internal(format!("{}: composite {c} outside [0, 1]", self.cell)));
            }
        }
        Ok(())
    }
}

fn sorted(records: &[HexRecord]) -> Result<Vec<&HexRecord>> {
    let mut out: Vec<&HexRecord> = records.iter().collect();
    for r in &out {
        r.validate()?;
    }
    out.sort_by_key(|r| r.cell);
    Ok(out)
}

#[derive(Serialize)]
struct FeatureCollection<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    features: Vec<Feature<'a>>,
}

#[derive(Serialize)]
struct Feature<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    geometry: Polygon,
    properties: Properties<'a>,
}

#[derive(Serialize)]
struct Polygon {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: [Vec<[f64; 2]>; 1],
}

#[derive(Serialize)]
struct Properties<'a> {
    cell: String,
    ihl_class: Option<&'a str>,
    hsi: Option<f64>,
    lts_level: Option<&'a str>,
    count_311: Option<u64>,
    count_waze: Option<u64>,
    composite: Option<f64>,
}

pub fn format_hex_geojson(records: &[HexRecord]) -> Result<String> {
    let features = sorted(records)?
        .into_iter()
        .map(|r| {
            let mut ring: Vec<[f64; 2]> = cell_boundary(r.cell).iter().map(|v| [v.lng(), v.lat()]).collect();
            ring.push(ring[0]);
            Feature {
                kind: "Feature",
                geometry: Polygon {
                    kind: "Polygon",
                    coordinates: [ring],
                },
                properties: Properties {
                    cell: r.cell.to_string(),
                    ihl_class: r.ihl_class.map(IhlClass::as_str),
                    hsi: r.hsi,
                    lts_level: r.lts_level.map(LtsLevel::as_str),
                    count_311: r.count_311,
                    count_waze: r.count_waze,
                    composite: r.composite,
                },
            }
        })
        .collect();
    let fc = FeatureCollection {
        kind: "FeatureCollection",
        features,
    };
    let mut s = serde_json::to_string(&fc).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_hex_geojson(records: &[HexRecord], path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &format_hex_geojson(records)?)
}

pub const HEX_CSV_HEADER: &str = "cell,ihl_class,hsi,lts_level,count_311,count_waze,composite";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_hex_csv(records: &[HexRecord]) -> Result<String> {
    let mut out = String::from(HEX_CSV_HEADER);
    out.push('\n');
    for r in sorted(records)? {
        let fields = [
            r.cell.to_string(),
            opt(r.ihl_class),
            opt(r.hsi),
            opt(r.lts_level),
            opt(r.count_311),
            opt(r.count_waze),
            opt(r.composite),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_hex_csv(records: &[HexRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_hex_csv(records)?.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgrid::point_to_cell;

    fn parse(text: &str) -> Result<GeoGrid> {
        parse_ascii_grid(text, Path::new("t.asc"), Units::Meters)
    }

    const TWO_BY_TWO: &str = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3 -9999\n";

    #[test]
    fn rows_flip_on_read() {
        let g = parse(TWO_BY_TWO).unwrap();
        assert_eq!(g.get(0, 0), Some(3.0));
        assert_eq!(g.get(0, 1), None);
        assert_eq!(g.get(1, 0), Some(1.0));
        assert_eq!(g.get(1, 1), Some(2.0));
    }

    #[test]
    fn truncated_data_is_a_format_error() {
        let text = TWO_BY_TWO.replace("3 -9999", "3");
        match parse(&text) {
            Err(Error::Format { line, message, .. }) => {
                assert_eq!(line, 8);
                assert!(message.contains("3 values"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_errors_name_lines() {
        let dup = TWO_BY_TWO.replace("yllcorner 0", "xllcorner 0");
        assert!(matches!(parse(&dup), Err(Error::Format { line: 4, .. })));
        let missing = TWO_BY_TWO.replace("cellsize 1\n", "");
        assert!(matches!(parse(&missing), Err(Error::Format { .. })));
        let bad_tok = TWO_BY_TWO.replace("3 -9999", "3 x");
        assert!(matches!(parse(&bad_tok), Err(Error::Format { line: 8, .. })));
        let extra = TWO_BY_TWO.replace("3 -9999", "3 4 5");
        assert!(matches!(parse(&extra), Err(Error::Format { line: 8, .. })));
    }

    #[test]
    fn one_by_one_writes_seven_lines() {
        let spec = GridSpec {
            nrows: 1,
            ncols: 1,
            x_origin: -95.5,
            y_origin: 29.25,
            cell_size: 0.1,
        };
        let g = GeoGrid::new(spec, -9999.0, vec![0.1 + 0.2], Units::Meters).unwrap();
        let text = format_ascii_grid(&g);
        assert_eq!(text.lines().count(), 7);
        assert_eq!(parse(&text).unwrap().values()[0].to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn nodata_written_as_sentinel() {
        let g = parse(TWO_BY_TWO).unwrap();
        let text = format_ascii_grid(&g);
        assert!(text.ends_with("1 2\n3 -9999\n"), "{text}");
    }

    fn read_str(s: &str, lenient: bool) -> Result<PointsRead> {
        read_points(s.as_bytes(), Path::new("p.csv"), lenient)
    }

    #[test]
    fn reads_valid_point() {
        let r = read_str(
            "lat,lng,source,category,timestamp\n29.76,-95.37,R311,street flooding,2019-09-18T04:30:00Z\n",
            false,
        )
        .unwrap();
        assert_eq!(r.points.len(), 1);
        let p = &r.points[0];
        assert_eq!(p.source, Source::R311);
        assert_eq!(p.category, "street flooding");
        assert_eq!(format_timestamp(&p.timestamp), "2019-09-18T04:30:00Z");
    }

    #[test]
    fn unknown_source_rejected() {
        let text = "lat,lng,source,category,timestamp\n29.76,-95.37,TWITTER,x,2019-09-18T04:30:00Z\n29.76,-95.37,WAZE,flooded road,2019-09-18T04:30:00Z\n";
        assert!(matches!(read_str(text, false), Err(Error::Row { row: 2, .. })));
        let r = read_str(text, true).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.rejected[0].line, 2);
    }

    #[test]
    fn bad_coordinates_and_timestamps_rejected() {
        let text = "lat,lng,source,category,timestamp\n95,-95.37,R311,x,2019-09-18T04:30:00Z\n29,-95,R311,x,yesterday\n";
        let r = read_str(text, true).unwrap();
        assert_eq!(r.rejected.iter().map(|r| r.line).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_str("lat,lng,source,category,timestamp\n", false).unwrap().points.is_empty());
        assert!(read_str("lat,lon,source,category,timestamp\n", false).is_err());
    }

    fn record(lat: f64) -> HexRecord {
        HexRecord {
            lts_level: Some(LtsLevel::F),
            ihl_class: Some(IhlClass::C),
            hsi: Some(0.05),
            ..HexRecord::new(point_to_cell(LatLng::new(lat, -95.37).unwrap()))
        }
    }

    #[test]
    fn geojson_single_feature() {
        let s = format_hex_geojson(&[record(29.76)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        let f = &v["features"][0];
        assert_eq!(f["properties"]["lts_level"], "F");
        assert!(f["properties"]["count_311"].is_null());
        let ring = f["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.len(), 7);
        assert_eq!(ring[0], ring[6]);
    }

    #[test]
    fn output_is_order_independent() {
        let recs: Vec<HexRecord> = (0..8).map(|i| record(29.70 + i as f64 * 0.01)).collect();
        let mut shuffled = recs.clone();
        shuffled.reverse();
        shuffled.swap(1, 5);
        assert_eq!(format_hex_geojson(&recs).unwrap(), format_hex_geojson(&shuffled).unwrap());
        assert_eq!(format_hex_csv(&recs).unwrap(), format_hex_csv(&shuffled).unwrap());
        let csv = format_hex_csv(&recs).unwrap();
        assert_eq!(csv.lines().count(), recs.len() + 1);
        assert!(csv.lines().nth(1).unwrap().ends_with(",C,0.05,F,,,"));
    }

    #[test]
    fn invalid_record_rejected() {
        let mut r = record(29.76);
        r.composite = Some(1.5);
        assert!(format_hex_csv(&[r]).is_err());
    }
}
