//! CSV input, JSON result output and atomic file writes.
//!
//! CSV: rectangular, comma separated. Empty fields and `NA` are missing
//! cells. The first line is a header when any of its fields is neither a
//! number nor a missing marker. The first column holds row names when every
//! data row starts with a non-numeric label, or when the header's first
//! field is empty.
//!
//! JSON results have the shape `{"op": ..., "inputs": {...}, "result": {...}}`
//! with matrices as row-major arrays of arrays; missing or undefined
//! numbers are written as `null`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

fn is_missing_field(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_numeric_or_missing(s: &str) -> bool {
    is_missing_field(s) || parse_number(s).is_some()
}

pub fn read_csv(path: &Path) -> Result<DataMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

/// Parse CSV text; `origin` names the source in error messages.
pub fn parse_csv(text: &str, origin: &str) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records: Vec<Vec<String>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: origin.into(),
            row: line + 1,
            col: 0,
            msg: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push(rec.iter().map(str::to_owned).collect());
    }
    if records.is_empty() {
        return Err(Error::Empty(format!("{origin} contains no rows")));
    }
    let width = records[0].len();
    for (line, r) in records.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Parse {
                path: origin.into(),
                row: line + 1,
                col: r.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", r.len()),
            });
        }
    }

    let non_numeric = |f: &String| !is_numeric_or_missing(f);
    let labelled_body = width >= 2 && records.len() >= 2 && records[1..].iter().all(|r| non_numeric(&r[0]));
    let blank_corner = width >= 2 && records[0][0].is_empty() && records[0][1..].iter().any(non_numeric);
    let label_col = labelled_body || blank_corner;
    let first = usize::from(label_col);
    let has_header = records[0][first..].iter().any(non_numeric);
    let (header, body) = if has_header {
        (Some(&records[0]), &records[1..])
    } else {
        (None, &records[..])
    };
    let line_offset = usize::from(has_header) + 1;
    if body.is_empty() {
        return Err(Error::Empty(format!("{origin} has a header but no data rows")));
    }
    let d = width - first;

    let n = body.len();
    let mut values = DMatrix::<f64>::zeros(n, d);
    let mut missing = DMatrix::from_element(n, d, false);
    for (i, r) in body.iter().enumerate() {
        for j in 0..d {
            let field = &r[first + j];
            if is_missing_field(field) {
                missing[(i, j)] = true;
            } else {
                values[(i, j)] = parse_number(field).ok_or_else(|| Error::Parse {
                    path: origin.into(),
                    row: i + line_offset,
                    col: first + j + 1,
                    msg: format!("'{field}' is not a finite number"),
                })?;
            }
        }
    }
    let col_names = match header {
        Some(h) => h[first..].to_vec(),
        None => (1..=d).map(|j| format!("V{j}")).collect(),
    };
    let row_names = if label_col {
        body.iter().map(|r| r[0].clone()).collect()
    } else {
        (1..=n).map(|i| i.to_string()).collect()
    };
    DataMatrix::with_names(values, missing, col_names, row_names)
}

/// CSV with a header line; row names are written when `with_row_names`.
pub fn to_csv(x: &DataMatrix, with_row_names: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = Vec::new();
    if with_row_names {
        header.push(String::new());
    }
    header.extend(x.col_names().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = Vec::new();
        if with_row_names {
            rec.push(x.row_names()[i].clone());
        }
        // `{}` on f64 prints the shortest representation that round-trips
        rec.extend((0..x.ncols()).map(|j| x.get(i, j).map_or_else(|| "NA".to_string(), |v| format!("{v}"))));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn write_csv(x: &DataMatrix, path: &Path, with_row_names: bool) -> Result<()> {
    write_atomic(path, to_csv(x, with_row_names).as_bytes())
}

/// Write through a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// `{"op", "inputs", "result"}` document, pretty printed.
pub fn result_document(op: &str, inputs: Value, result: Value) -> Value {
    json!({ "op": op, "inputs": inputs, "result": result })
}

pub fn write_json(op: &str, inputs: Value, result: Value, path: &Path) -> Result<()> {
    let doc = result_document(op, inputs, result);
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<Option<f64>>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| finite_or_null(m[(i, j)])).collect())
        .collect()
}

pub(crate) fn ser_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    matrix_rows(m).serialize(s)
}

pub(crate) fn ser_bool_matrix<S: Serializer>(m: &DMatrix<bool>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<bool>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    rows.serialize(s)
}

/// JSON view of a data matrix: values with `null` for missing cells.
pub fn data_json(x: &DataMatrix) -> Value {
    json!({
        "col_names": x.col_names(),
        "row_names": x.row_names(),
        "values": x.to_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;
    use rand::Rng;

    #[test]
    fn parses_na_and_empty_as_missing() {
        let x = parse_csv("1,2\n3,NA\n", "t").unwrap();
        assert_eq!(x.to_rows(), vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), None]]);
        let x = parse_csv("1,\n3,4\n", "t").unwrap();
        assert!(x.is_missing(0, 1));
    }

    #[test]
    fn header_gives_column_names() {
        let x = parse_csv("a,b\n1,2\n", "t").unwrap();
        assert_eq!(x.col_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(x.nrows(), 1);
    }

    #[test]
    fn label_column_gives_row_names() {
        let x = parse_csv(",low,high\nBE,10,3\nFR,NA,5\n", "t").unwrap();
        assert_eq!(x.row_names(), &["BE".to_string(), "FR".to_string()]);
        assert_eq!(x.col_names(), &["low".to_string(), "high".to_string()]);
        assert!(x.is_missing(1, 0));
        let y = parse_csv("BE,10,3\nFR,1,5\n", "t").unwrap();
        assert_eq!(y.ncols(), 2);
    }

    #[test]
    fn ragged_rows_report_location() {
        match parse_csv("1,2\n3\n", "f.csv") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_reports_location() {
        match parse_csv("a,b\n1,2\n3,x\n", "f.csv") {
            Err(Error::Parse { row, col, path, .. }) => {
                assert_eq!((row, col), (3, 2));
                assert_eq!(path, "f.csv");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_csv("1,inf\n", "f").is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = sim::rng(77);
        let v = sim::gaussian_matrix(&mut rng, 10, 4) * 1e3;
        let mut mask = DMatrix::from_element(10, 4, false);
        for _ in 0..3 {
            loop {
                let (i, j) = (rng.random_range(0..10), rng.random_range(0..4));
                if !mask[(i, j)] {
                    mask[(i, j)] = true;
                    break;
                }
            }
        }
        let x = DataMatrix::with_mask(v, mask).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&x, &p, false).unwrap();
        let y = read_csv(&p).unwrap();
        assert_eq!(x.missing(), y.missing());
        for (a, b) in x.values().iter().zip(y.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(y.n_missing(), 3);
    }

    #[test]
    fn json_uses_null_for_nan() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        let v = serde_json::to_value(matrix_rows(&m)).unwrap();
        assert_eq!(v, json!([[1.0, null]]));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_json("test", json!({"k": 1}), json!({"m": matrix_rows(&m)}), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains("NaN"));
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["op"], "test");
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = read_csv(Path::new("/nonexistent/zzz.csv")).unwrap_err();
        assert!(err.to_string().contains("zzz.csv"));
    }
}
