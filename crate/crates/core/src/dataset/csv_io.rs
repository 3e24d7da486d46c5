use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Accel, CfrDataset, CfrSample, PathLossDataset, PathLossSample, CFR_POINTS, FREQ_GRID_KHZ,
    NLOS_ANGLE_DEG,
};
use crate::error::{Error, Result};

/// Header of the RSS path-loss CSV.
pub const DS2_HEADER: &str =
    "distance_m,ambient_mv,rx_angle_deg,same_lane,turbulence,path_loss_db,accel_x,accel_y,accel_z";

/// Header of a path-loss CSV exported after variance-region labeling.
pub const DS2_REGION_HEADER: &str = "distance_m,ambient_mv,rx_angle_deg,same_lane,turbulence,path_loss_db,accel_x,accel_y,accel_z,variance_region";

/// Header of the CFR CSV.
pub const DS1_HEADER: &str = "distance_m,sunload_mv,rx_angle_deg,vna_model,pl_200khz,pl_300khz,pl_400khz,pl_500khz,pl_600khz,pl_700khz,pl_800khz,pl_900khz,pl_1000khz,pl_1100khz,pl_1200khz,pl_1300khz,pl_1400khz,pl_1500khz,pl_1600khz,pl_1700khz,pl_1800khz,pl_1900khz,pl_2000khz";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Pathloss,
    Cfr,
}

/// A data row that failed validation. `row` is 1-based, header excluded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathLossIngest {
    pub dataset: PathLossDataset,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CfrIngest {
    pub dataset: CfrDataset,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ingested {
    Pathloss(PathLossIngest),
    Cfr(CfrIngest),
}

/// Reads a CSV file in the given schema.
pub fn ingest_csv(path: impl AsRef<Path>, schema: Schema) -> Result<Ingested> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match schema {
        Schema::Pathloss => parse_pathloss_csv(&bytes).map(Ingested::Pathloss),
        Schema::Cfr => parse_cfr_csv(&bytes).map(Ingested::Cfr),
    }
}

/// Splits off the header line and checks it against the accepted headers.
/// Returns the index of the matching header and the body.
fn split_header<'a>(bytes: &'a [u8], accepted: &[&str]) -> Result<(usize, &'a [u8])> {
    let (line, body) = match bytes.iter().position(|&b| b == b'\n') {
        Some(i) => (&bytes[..i], &bytes[i + 1..]),
        None => (bytes, &bytes[bytes.len()..]),
    };
    let found = String::from_utf8_lossy(line);
    match accepted.iter().position(|h| h.as_bytes() == line) {
        Some(i) => Ok((i, body)),
        None => Err(Error::HeaderMismatch {
            expected: accepted[0].to_string(),
            found: found.into_owned(),
        }),
    }
}

fn body_records(body: &[u8]) -> impl Iterator<Item = (usize, Result<csv::StringRecord>)> + '_ {
    let reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body);
    reader
        .into_records()
        .enumerate()
        .map(|(i, r)| (i + 1, r.map_err(Error::from)))
}

fn parse_num(field: &str, name: &str) -> Result<f64, String> {
    if field.is_empty() {
        return Err(format!("missing {name}"));
    }
    let v: f64 = field
        .parse()
        .map_err(|_| format!("unparseable {name}: `{field}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite {name}: `{field}`"));
    }
    Ok(v)
}

fn parse_flag(field: &str, name: &str) -> Result<bool, String> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        "" => Err(format!("missing {name}")),
        other => Err(format!("{name} must be 0 or 1, got `{other}`")),
    }
}

fn parse_pathloss_row(rec: &csv::StringRecord, with_region: bool) -> Result<PathLossSample, String> {
    let expected = if with_region { 10 } else { 9 };
    if rec.len() != expected {
        return Err(format!("expected {expected} fields, found {}", rec.len()));
    }
    let distance_m = parse_num(&rec[0], "distance_m")?;
    if distance_m <= 0.0 {
        return Err(format!("distance_m must be positive, got {distance_m}"));
    }
    let ambient_mv = parse_num(&rec[1], "ambient_mv")?;
    let rx_angle_deg = parse_num(&rec[2], "rx_angle_deg")?;
    if rx_angle_deg != 0.0 && rx_angle_deg != NLOS_ANGLE_DEG {
        return Err(format!("rx_angle_deg must be 0 or 30, got {rx_angle_deg}"));
    }
    let same_lane = parse_flag(&rec[3], "same_lane")?;
    let turbulence = parse_flag(&rec[4], "turbulence")?;
    let path_loss_db = parse_num(&rec[5], "path_loss_db")?;
    let accel = match (&rec[6], &rec[7], &rec[8]) {
        ("", "", "") => None,
        (x, y, z) => Some(Accel {
            x: parse_num(x, "accel_x")?,
            y: parse_num(y, "accel_y")?,
            z: parse_num(z, "accel_z")?,
        }),
    };
    let variance_region = if with_region {
        Some(parse_flag(&rec[9], "variance_region")?)
    } else {
        None
    };
    Ok(PathLossSample {
        distance_m,
        ambient_mv,
        rx_angle_deg,
        same_lane,
        turbulence,
        variance_region,
        path_loss_db,
        accel,
    })
}

/// Parses path-loss CSV bytes. Accepts the plain header or the
/// region-labeled export header.
pub fn parse_pathloss_csv(bytes: &[u8]) -> Result<PathLossIngest> {
    let (which, body) = split_header(bytes, &[DS2_HEADER, DS2_REGION_HEADER])?;
    let with_region = which == 1;
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (row, rec) in body_records(body) {
        match rec
            .map_err(|e| e.to_string())
            .and_then(|r| parse_pathloss_row(&r, with_region))
        {
            Ok(s) => samples.push(s),
            Err(reason) => rejected.push(RejectedRow { row, reason }),
        }
    }
    if samples.is_empty() {
        return Err(Error::NoValidRows {
            rejected: rejected.len(),
        });
    }
    Ok(PathLossIngest {
        dataset: PathLossDataset::new(samples),
        rejected,
    })
}

fn parse_cfr_row(rec: &csv::StringRecord) -> Result<CfrSample, String> {
    let expected = 4 + CFR_POINTS;
    if rec.len() != expected {
        return Err(format!("expected {expected} fields, found {}", rec.len()));
    }
    let distance_m = parse_num(&rec[0], "distance_m")?;
    if distance_m <= 0.0 {
        return Err(format!("distance_m must be positive, got {distance_m}"));
    }
    let sunload_mv = parse_num(&rec[1], "sunload_mv")?;
    let rx_angle_deg = parse_num(&rec[2], "rx_angle_deg")?;
    let vna_model = parse_flag(&rec[3], "vna_model")?;
    let mut cfr_db = [0.0; CFR_POINTS];
    for (k, slot) in cfr_db.iter_mut().enumerate() {
        *slot = parse_num(&rec[4 + k], &format!("pl_{}khz", FREQ_GRID_KHZ[k]))?;
    }
    Ok(CfrSample {
        distance_m,
        sunload_mv,
        rx_angle_deg,
        vna_model,
        cfr_db,
    })
}

/// Parses CFR CSV bytes.
pub fn parse_cfr_csv(bytes: &[u8]) -> Result<CfrIngest> {
    let (_, body) = split_header(bytes, &[DS1_HEADER])?;
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (row, rec) in body_records(body) {
        match rec.map_err(|e| e.to_string()).and_then(|r| parse_cfr_row(&r)) {
            Ok(s) => samples.push(s),
            Err(reason) => rejected.push(RejectedRow { row, reason }),
        }
    }
    if samples.is_empty() {
        return Err(Error::NoValidRows {
            rejected: rejected.len(),
        });
    }
    Ok(CfrIngest {
        dataset: CfrDataset::new(samples),
        rejected,
    })
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Canonical path-loss CSV encoding. Floats use the shortest representation
/// that parses back to the same bits. The region column is written only when
/// every sample is labeled.
pub fn write_pathloss_csv(ds: &PathLossDataset) -> String {
    let with_region = ds.regions_labeled();
    let mut out = String::new();
    out.push_str(if with_region {
        DS2_REGION_HEADER
    } else {
        DS2_HEADER
    });
    out.push('\n');
    for s in &ds.samples {
        let _ = write!(
            out,
            "{},{},{},{},{},{},",
            s.distance_m,
            s.ambient_mv,
            s.rx_angle_deg,
            flag(s.same_lane),
            flag(s.turbulence),
            s.path_loss_db
        );
        match s.accel {
            Some(a) => {
                let _ = write!(out, "{},{},{}", a.x, a.y, a.z);
            }
            None => out.push_str(",,"),
        }
        if with_region {
            out.push(',');
            out.push_str(flag(s.variance_region.unwrap_or(false)));
        }
        out.push('\n');
    }
    out
}

/// Canonical CFR CSV encoding.
pub fn write_cfr_csv(ds: &CfrDataset) -> String {
    let mut out = String::with_capacity(ds.len() * 200);
    out.push_str(DS1_HEADER);
    out.push('\n');
    for s in &ds.samples {
        let _ = write!(
            out,
            "{},{},{},{}",
            s.distance_m,
            s.sunload_mv,
            s.rx_angle_deg,
            flag(s.vna_model)
        );
        for v in &s.cfr_db {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
