//! Scan CSV reading and writing.
//!
//! Header: `position_mm,coincidences,singles_a,singles_b,duration_s`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::ScanData;

pub const SCAN_HEADER: [&str; 5] = ["position_mm", "coincidences", "singles_a", "singles_b", "duration_s"];

pub fn load_scan(path: &Path) -> Result<ScanData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scan(&text)
}

fn parse_count(field: &str, what: &str, line: u64) -> Result<u64> {
    let v: i64 = field.trim().parse().map_err(|e| Error::Parse {
        line,
        reason: format!("{what} `{field}`: {e}"),
    })?;
    u64::try_from(v).map_err(|_| Error::Parse {
        line,
        reason: format!("{what} must be >= 0, got {v}"),
    })
}

fn parse_real(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|e| Error::Parse {
        line,
        reason: format!("{what} `{field}`: {e}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            reason: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

pub fn parse_scan(text: &str) -> Result<ScanData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != SCAN_HEADER {
        return Err(Error::Parse {
            line: 1,
            reason: format!("header must be `{}`", SCAN_HEADER.join(",")),
        });
    }
    let mut scan = ScanData {
        positions: Vec::new(),
        coincidences: Vec::new(),
        singles_a: Vec::new(),
        singles_b: Vec::new(),
        duration: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 5 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let x = parse_real(&record[0], "position_mm", line)?;
        if let Some(&prev) = scan.positions.last() {
            if x <= prev {
                return Err(Error::Data {
                    index: scan.positions.len(),
                    reason: format!("line {line}: positions must be strictly increasing ({prev} then {x})"),
                });
            }
        }
        scan.positions.push(x);
        scan.coincidences.push(parse_count(&record[1], "coincidences", line)?);
        scan.singles_a.push(parse_count(&record[2], "singles_a", line)?);
        scan.singles_b.push(parse_count(&record[3], "singles_b", line)?);
        let d = parse_real(&record[4], "duration_s", line)?;
        if d <= 0.0 {
            return Err(Error::Parse {
                line,
                reason: format!("duration_s must be > 0, got {d}"),
            });
        }
        scan.duration.push(d);
    }
    scan.validate()?;
    Ok(scan)
}

pub fn scan_to_csv(scan: &ScanData) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(SCAN_HEADER).map_err(csv_err)?;
    for i in 0..scan.len() {
        w.write_record([
            scan.positions[i].to_string(),
            scan.coincidences[i].to_string(),
            scan.singles_a[i].to_string(),
            scan.singles_b[i].to_string(),
            scan.duration[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_scan(scan: &ScanData, path: &Path) -> Result<()> {
    std::fs::write(path, scan_to_csv(scan)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> String {
        let mut s = SCAN_HEADER.join(",") + "\n";
        for i in 0..n {
            s += &format!("{},{},10000,10000,60\n", -0.03 + 0.001 * i as f64, i * 3);
        }
        s
    }

    #[test]
    fn well_formed_file() {
        let scan = parse_scan(&rows(61)).unwrap();
        assert_eq!(scan.len(), 61);
        assert_eq!(scan.coincidences[5], 15);
    }

    #[test]
    fn round_trip() {
        let scan = parse_scan(&rows(9)).unwrap();
        assert_eq!(parse_scan(&scan_to_csv(&scan).unwrap()).unwrap(), scan);
    }

    #[test]
    fn negative_count_reports_line() {
        let mut lines: Vec<String> = rows(8).lines().map(String::from).collect();
        lines[4] = "-0.026,-4,10000,10000,60".into();
        let text = lines.join("\n") + "\n";
        match parse_scan(&text).unwrap_err() {
            Error::Parse { line, reason } => {
                assert_eq!(line, 5);
                assert!(reason.contains(">= 0"), "{reason}");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn duplicate_position_rejected() {
        let mut lines: Vec<String> = rows(8).lines().map(String::from).collect();
        lines[3] = lines[2].clone();
        let e = parse_scan(&(lines.join("\n") + "\n")).unwrap_err();
        assert!(matches!(e, Error::Data { .. }), "{e:?}");
        assert!(e.to_string().contains("strictly increasing"));
    }

    #[test]
    fn wrong_header_rejected() {
        let text = rows(8).replacen("position_mm", "x", 1);
        assert!(matches!(parse_scan(&text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut lines: Vec<String> = rows(8).lines().map(String::from).collect();
        lines[6] = "0.1,abc,1,1,1".into();
        match parse_scan(&(lines.join("\n") + "\n")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            e => panic!("{e:?}"),
        }
    }
}
