//! UJIIndoorLoc CSV files (`trainingData.csv`, `validationData.csv`).
//!
//! Columns `WAP001..WAP520` hold integer RSS readings with `100` meaning
//! "not detected", followed by LONGITUDE, LATITUDE, FLOOR, BUILDINGID,
//! SPACEID, RELATIVEPOSITION, USERID, PHONEID and TIMESTAMP.

use std::io::{Read, Write};
use std::path::Path;

use super::record::{clamp_rss, Dataset, DatasetKind, FingerprintRecord};
use crate::error::{Error, Result};

/// RSS value UJIIndoorLoc uses for an undetected AP.
pub const UJI_NOT_DETECTED: f64 = 100.0;

const TRAILING_COLUMNS: [&str; 9] = [
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
];

fn is_wap_column(name: &str) -> bool {
    name.len() > 3 && name.starts_with("WAP") && name[3..].bytes().all(|b| b.is_ascii_digit())
}

pub fn parse_ujiindoorloc(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?;
    read_ujiindoorloc(file)
}

pub fn read_ujiindoorloc<R: Read>(reader: R) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::format(format!("unreadable header: {e}")))?
        .clone();

    let wap_cols: Vec<usize> = (0..headers.len()).filter(|&i| is_wap_column(&headers[i])).collect();
    if wap_cols.is_empty() {
        return Err(Error::format("missing required columns: no WAPxxx columns"));
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let floor_col = find("FLOOR").ok_or_else(|| Error::format("missing required column FLOOR"))?;
    let building_col = find("BUILDINGID").ok_or_else(|| Error::format("missing required column BUILDINGID"))?;
    let phone_col = find("PHONEID");
    let time_col = find("TIMESTAMP");
    let ap_order: Vec<String> = wap_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut records = Vec::new();
    for (row_idx, row) in csv.records().enumerate() {
        // Row numbers are 1-based file lines, counting the header.
        let line = row_idx + 2;
        let row = row.map_err(|e| Error::format(format!("line {line}: {e}")))?;
        let cell = |col: usize| -> Result<&str> {
            row.get(col)
                .ok_or_else(|| Error::format(format!("line {line}: missing column {}", &headers[col])))
        };
        let number = |col: usize| -> Result<f64> {
            let s = cell(col)?;
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::format(format!(
                    "line {line}, column {}: non-numeric value '{s}'",
                    &headers[col]
                ))
            })
        };
        let id = |col: usize| -> Result<u32> {
            let v = number(col)?;
            if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
                return Err(Error::format(format!(
                    "line {line}, column {}: '{v}' is not a non-negative integer id",
                    &headers[col]
                )));
            }
            Ok(v as u32)
        };

        let mut rss = Vec::with_capacity(wap_cols.len());
        for &col in &wap_cols {
            let v = number(col)?;
            rss.push((v != UJI_NOT_DETECTED).then(|| clamp_rss(v)));
        }
        let mut record = FingerprintRecord::new(rss).with_building_floor(id(building_col)?, id(floor_col)?);
        if let Some(col) = phone_col {
            record.device_id = Some(cell(col)?.to_string()).filter(|s| !s.is_empty());
        }
        if let Some(col) = time_col {
            record.timestamp = Some(number(col)? as i64);
        }
        records.push(record);
    }
    Dataset::new(records, ap_order, DatasetKind::BuildingFloor)
}

/// Writes a building/floor dataset in UJIIndoorLoc layout. Coordinates,
/// SPACEID, RELATIVEPOSITION and USERID are written as 0.
pub fn write_ujiindoorloc<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    if dataset.kind() != DatasetKind::BuildingFloor {
        return Err(Error::config("only building/floor datasets have a UJIIndoorLoc layout"));
    }
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<String> = dataset.ap_order().to_vec();
    header.extend(TRAILING_COLUMNS.iter().map(|s| s.to_string()));
    csv.write_record(&header).map_err(csv_io)?;
    for r in dataset.records() {
        let mut row: Vec<String> = r
            .rss
            .iter()
            .map(|v| v.map_or_else(|| UJI_NOT_DETECTED.to_string(), |v| v.round().to_string()))
            .collect();
        row.extend([
            "0".to_string(),
            "0".to_string(),
            r.floor_id.unwrap_or_default().to_string(),
            r.building_id.unwrap_or_default().to_string(),
            "0".to_string(),
            "0".to_string(),
            "0".to_string(),
            r.device_id.clone().unwrap_or_default(),
            r.timestamp.unwrap_or_default().to_string(),
        ]);
        csv.write_record(&row).map_err(csv_io)?;
    }
    csv.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("{other:?}")),
    }
}
