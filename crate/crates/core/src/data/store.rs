//! Line-oriented store for locally collected fingerprints.
//!
//! ```text
//! location_id,device_id,timestamp,<ap 1>,<ap 2>,...
//! EB306,pixel-7,1700000000,-57,,-81.5
//! ```
//!
//! The header lists the AP order. Each following line is one record; an
//! empty RSS field means the AP was not detected. UTF-8, LF line endings.
//! Records are only ever appended; a record naming APs the header lacks
//! first extends the header (rewriting the file through a rename).

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::record::{clamp_rss, Dataset, DatasetKind, FingerprintRecord};
use super::uji::csv_io;
use crate::error::{Error, Result};

const META_COLUMNS: [&str; 3] = ["location_id", "device_id", "timestamp"];

fn header_line(ap_order: &[String]) -> Result<Vec<u8>> {
    let mut fields: Vec<&str> = META_COLUMNS.to_vec();
    fields.extend(ap_order.iter().map(String::as_str));
    encode_line(&fields)
}

fn record_line(record: &FingerprintRecord) -> Result<Vec<u8>> {
    let location = record
        .location_id
        .as_deref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::label("stored fingerprints need a non-empty location id"))?;
    let mut fields: Vec<String> = vec![
        location.to_string(),
        record.device_id.clone().unwrap_or_default(),
        record.timestamp.map(|t| t.to_string()).unwrap_or_default(),
    ];
    fields.extend(record.rss.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
    encode_line(&fields)
}

fn encode_line<S: AsRef<[u8]>>(fields: &[S]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields).map_err(csv_io)?;
    w.into_inner().map_err(|e| Error::format(e.to_string()))
}

fn parse_header(fields: &csv::StringRecord) -> Result<Vec<String>> {
    let meta_ok =
        fields.len() >= META_COLUMNS.len() && META_COLUMNS.iter().enumerate().all(|(i, name)| &fields[i] == *name);
    if !meta_ok {
        return Err(Error::format(format!(
            "line 1: store header must start with {}",
            META_COLUMNS.join(",")
        )));
    }
    Ok(fields.iter().skip(META_COLUMNS.len()).map(str::to_string).collect())
}

fn parse_record(fields: &csv::StringRecord, ap_count: usize, line: u64) -> Result<FingerprintRecord> {
    let expected = META_COLUMNS.len() + ap_count;
    if fields.len() != expected {
        return Err(Error::format(format!(
            "line {line}: {} fields, expected {expected}",
            fields.len()
        )));
    }
    let location = &fields[0];
    if location.is_empty() {
        return Err(Error::format(format!("line {line}: empty location_id")));
    }
    let timestamp = match &fields[2] {
        "" => None,
        s => Some(
            s.parse::<i64>()
                .map_err(|_| Error::format(format!("line {line}: bad timestamp '{s}'")))?,
        ),
    };
    let mut rss = Vec::with_capacity(ap_count);
    for (j, s) in fields.iter().skip(META_COLUMNS.len()).enumerate() {
        rss.push(match s {
            "" => None,
            s => Some(clamp_rss(s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(
                || Error::format(format!("line {line}: bad RSS '{s}' for AP #{}", j + 1)),
            )?)),
        });
    }
    Ok(FingerprintRecord {
        rss,
        building_id: None,
        floor_id: None,
        location_id: Some(location.to_string()),
        device_id: Some(fields[1].to_string()).filter(|s| !s.is_empty()),
        timestamp,
    })
}

/// Reads a whole store into a floor-level dataset.
pub fn load_store(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| Error::format(format!("line 1: {e}")))?,
        None => return Err(Error::format("line 1: store has no header")),
    };
    let ap_order = parse_header(&header)?;
    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(format!("line {line}: {e}"))
        })?;
        let line = row.position().map_or(0, |p| p.line());
        records.push(parse_record(&row, ap_order.len(), line)?);
    }
    Dataset::new(records, ap_order, DatasetKind::FloorLevel)
}

/// Writes `dataset` as a complete store, replacing any existing file.
pub fn write_store(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut bytes = header_line(dataset.ap_order())?;
    for r in dataset.records() {
        bytes.extend(record_line(r)?);
    }
    replace_file(path.as_ref(), &bytes)
}

fn replace_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-rewrite");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Appends `records` (aligned to `ap_order`) to the store at `path`,
/// creating it if needed. Returns the number of records appended.
pub fn append_store(path: impl AsRef<Path>, ap_order: &[String], records: &[FingerprintRecord]) -> Result<usize> {
    let mut store = FingerprintStore::open_or_create(path, ap_order)?;
    store.append(ap_order, records)
}

/// An open store: its path, the AP order of its header and its record count.
#[derive(Debug)]
pub struct FingerprintStore {
    path: PathBuf,
    ap_order: Vec<String>,
    len: usize,
}

impl FingerprintStore {
    /// Opens an existing store, or creates one whose header lists `ap_order`.
    pub fn open_or_create(path: impl AsRef<Path>, ap_order: &[String]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            let (header, len) = scan_header_and_count(&path)?;
            return Ok(Self {
                path,
                ap_order: header,
                len,
            });
        }
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path)?;
        f.write_all(&header_line(ap_order)?)?;
        f.sync_data()?;
        Ok(Self {
            path,
            ap_order: ap_order.to_vec(),
            len: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn ap_order(&self) -> &[String] {
        &self.ap_order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn load(&self) -> Result<Dataset> {
        load_store(&self.path)
    }

    /// Appends records whose readings follow `ap_order`. APs the store does
    /// not know yet are added to the end of its header first.
    pub fn append(&mut self, ap_order: &[String], records: &[FingerprintRecord]) -> Result<usize> {
        for (i, r) in records.iter().enumerate() {
            if r.rss.len() != ap_order.len() {
                return Err(Error::shape(format!(
                    "record {i} has {} readings for {} APs",
                    r.rss.len(),
                    ap_order.len()
                )));
            }
            if r.location_id.as_deref().map_or(true, str::is_empty) {
                return Err(Error::label(format!("record {i} has no location id")));
            }
        }
        let known: std::collections::HashSet<&str> = self.ap_order.iter().map(String::as_str).collect();
        let mut added = Vec::new();
        for ap in ap_order {
            if !known.contains(ap.as_str()) && !added.contains(ap) {
                added.push(ap.clone());
            }
        }
        if !added.is_empty() {
            self.extend_header(&added)?;
        }

        let position: HashMap<&str, usize> = ap_order.iter().enumerate().map(|(i, ap)| (ap.as_str(), i)).collect();
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        let mut appended = 0;
        for r in records {
            let aligned = FingerprintRecord {
                rss: self
                    .ap_order
                    .iter()
                    .map(|ap| position.get(ap.as_str()).and_then(|&i| r.rss[i]))
                    .collect(),
                ..r.clone()
            };
            let line = record_line(&aligned)?;
            let before = file.metadata()?.len();
            if let Err(e) = file.write_all(&line).and_then(|_| file.sync_data()) {
                // Drop whatever part of the line reached the file.
                let _ = file.set_len(before);
                return Err(e.into());
            }
            self.len += 1;
            appended += 1;
        }
        Ok(appended)
    }

    fn extend_header(&mut self, added: &[String]) -> Result<()> {
        let existing = load_store(&self.path)?;
        let mut ap_order = self.ap_order.clone();
        ap_order.extend(added.iter().cloned());
        let (widened, _) = existing.aligned_to(&ap_order);
        write_store(&self.path, &widened)?;
        self.ap_order = ap_order;
        Ok(())
    }
}

fn scan_header_and_count(path: &Path) -> Result<(Vec<String>, usize)> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::format(format!(
                "{}: line 1: store has no header",
                path.display()
            )))
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(first.as_bytes());
    let header = reader
        .records()
        .next()
        .transpose()
        .map_err(|e| Error::format(format!("line 1: {e}")))?
        .ok_or_else(|| Error::format("line 1: empty header"))?;
    let ap_order = parse_header(&header)?;
    let mut count = 0;
    for line in lines {
        if !line?.is_empty() {
            count += 1;
        }
    }
    Ok((ap_order, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aps(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn rec(loc: &str, rss: Vec<Option<f64>>) -> FingerprintRecord {
        FingerprintRecord {
            device_id: Some("pixel".into()),
            timestamp: Some(1_700_000_000),
            ..FingerprintRecord::new(rss).with_location(loc)
        }
    }

    #[test]
    fn append_then_load_round_trips_every_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.csv");
        let order = aps(&["ap1", "ap2", "ap3"]);
        let records = vec![
            rec("EB306", vec![Some(-57.0), None, Some(-81.5)]),
            FingerprintRecord::new(vec![None, None, Some(-40.0)]).with_location("EE401, east"),
        ];
        assert_eq!(append_store(&path, &order, &records).unwrap(), 2);
        let ds = load_store(&path).unwrap();
        assert_eq!(ds.ap_order(), order.as_slice());
        assert_eq!(ds.records(), records.as_slice());
        assert_eq!(ds.kind(), DatasetKind::FloorLevel);
    }

    #[test]
    fn empty_store_has_declared_ap_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let store = FingerprintStore::open_or_create(&path, &aps(&["x", "y"])).unwrap();
        assert!(store.is_empty());
        let ds = load_store(&path).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.ap_order(), &["x", "y"]);
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        append_store(
            &path,
            &aps(&["a", "b"]),
            &[rec("L1", vec![Some(-50.25), None]), rec("L2", vec![None, Some(-99.0)])],
        )
        .unwrap();
        let original = fs::read(&path).unwrap();
        let copy = dir.path().join("copy.csv");
        write_store(&copy, &load_store(&path).unwrap()).unwrap();
        assert_eq!(fs::read(&copy).unwrap(), original);
    }

    #[test]
    fn unknown_aps_extend_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        append_store(&path, &aps(&["a", "b"]), &[rec("L1", vec![Some(-50.0), Some(-60.0)])]).unwrap();
        append_store(&path, &aps(&["c", "a"]), &[rec("L2", vec![Some(-70.0), Some(-45.0)])]).unwrap();
        let ds = load_store(&path).unwrap();
        assert_eq!(ds.ap_order(), &["a", "b", "c"]);
        assert_eq!(ds.records()[0].rss, vec![Some(-50.0), Some(-60.0), None]);
        assert_eq!(ds.records()[1].rss, vec![Some(-45.0), None, Some(-70.0)]);
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "location_id,device_id,timestamp,a,b,c");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "location_id,device_id,timestamp,a\nL1,,,-50\nL2,,,abc\n").unwrap();
        let msg = load_store(&path).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        fs::write(&path, "location_id,device_id,timestamp,a\nL1,,,-50,-3\n").unwrap();
        let msg = load_store(&path).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        fs::write(&path, "loc,dev,ts,a\n").unwrap();
        assert!(matches!(load_store(&path), Err(Error::Format(_))));
    }

    #[test]
    fn records_without_location_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut store = FingerprintStore::open_or_create(&path, &aps(&["a"])).unwrap();
        let err = store.append(&aps(&["a"]), &[FingerprintRecord::new(vec![Some(-1.0)])]);
        assert!(matches!(err, Err(Error::Label(_))));
        assert_eq!(load_store(&path).unwrap().len(), 0);
    }
}
