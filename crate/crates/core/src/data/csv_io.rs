use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::frame::{Column, TimeSeriesFrame};
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Reads a raw 5-minute export. Empty cells load as NaN and are filled by
/// [`remove_outliers`](super::remove_outliers).
pub fn ingest_csv(path: &Path) -> Result<TimeSeriesFrame> {
    read_frame(path, Some(5))
}

/// Reads a frame in the canonical CSV layout. With `period_minutes = None`
/// the period is inferred from the first two timestamps.
pub fn read_frame(path: &Path, period_minutes: Option<u32>) -> Result<TimeSeriesFrame> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let ts_idx = find("timestamp").ok_or_else(|| Error::Schema("missing column \"timestamp\"".into()))?;
    let mut idx = [0usize; 8];
    for c in Column::ALL {
        idx[c.index()] = find(c.name()).ok_or_else(|| Error::Schema(format!("missing column \"{}\"", c.name())))?;
    }

    let mut timestamps = Vec::new();
    let mut columns: [Vec<f64>; 8] = Default::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw_ts = rec.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| Error::Integrity { row, message: format!("unparseable timestamp {raw_ts:?}") })?;
        timestamps.push(ts);
        for c in Column::ALL {
            let cell = rec.get(idx[c.index()]).unwrap_or("");
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| Error::Integrity {
                    row,
                    message: format!("bad {} value {cell:?}", c.name()),
                })?
            };
            columns[c.index()].push(v);
        }
    }
    let period = match period_minutes {
        Some(p) => p,
        None if timestamps.len() >= 2 => {
            let d = (timestamps[1] - timestamps[0]).num_minutes();
            if d <= 0 {
                return Err(Error::Integrity { row: 1, message: "non-increasing timestamp".into() });
            }
            d as u32
        }
        None => 30,
    };
    TimeSeriesFrame::new(timestamps, period, columns)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    for fmt in [TIMESTAMP_FORMAT, "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc())
}

/// Writes `timestamp,oat,orh,wbt,sol,avg_stpt,sat,hwe,cwe`. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_csv(frame: &TimeSeriesFrame, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp"];
    header.extend(Column::ALL.iter().map(|c| c.name()));
    w.write_record(&header)?;
    for (i, ts) in frame.timestamps().iter().enumerate() {
        let mut rec = vec![ts.format(TIMESTAMP_FORMAT).to_string()];
        rec.extend(Column::ALL.iter().map(|&c| frame.value(c, i).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "timestamp,oat,orh,wbt,sol,avg_stpt,sat,hwe,cwe\n";

    #[test]
    fn two_rows() {
        let f = write(&format!(
            "{HEADER}2019-07-01T00:00:00,70,50,60,0,68,65,1,2\n2019-07-01T00:05:00,71,51,61,0,68,65,1,2\n"
        ));
        let frame = ingest_csv(f.path()).unwrap();
        assert_eq!(frame.len(), 2);
        assert_eq!(frame.value(Column::Oat, 1), 71.0);
    }

    #[test]
    fn missing_wbt() {
        let f = write("timestamp,oat,orh,sol,avg_stpt,sat,hwe,cwe\n2019-07-01T00:00:00,70,50,0,68,65,1,2\n");
        match ingest_csv(f.path()) {
            Err(Error::Schema(m)) => assert!(m.contains("wbt")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicated_timestamp() {
        let f = write(&format!(
            "{HEADER}2019-07-01T00:00:00,70,50,60,0,68,65,1,2\n2019-07-01T00:05:00,71,51,61,0,68,65,1,2\n2019-07-01T00:05:00,71,51,61,0,68,65,1,2\n"
        ));
        assert!(matches!(ingest_csv(f.path()), Err(Error::Integrity { row: 2, .. })));
    }

    #[test]
    fn empty_cells_load_as_nan() {
        let f = write(&format!("{HEADER}2019-07-01 00:00:00,,50,60,0,68,65,1,2\n"));
        let frame = ingest_csv(f.path()).unwrap();
        assert!(frame.value(Column::Oat, 0).is_nan());
    }

    #[test]
    fn roundtrip_is_exact() {
        let f = write(&format!(
            "{HEADER}2019-07-01T00:00:00,70.123456789012345,50,60,0,68,65,0.1,2\n2019-07-01T00:30:00,71,51,61,0,68,65,1e-9,2\n"
        ));
        let frame = read_frame(f.path(), None).unwrap();
        assert_eq!(frame.period_minutes(), 30);
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&frame, out.path()).unwrap();
        assert_eq!(read_frame(out.path(), None).unwrap(), frame);
    }
}
