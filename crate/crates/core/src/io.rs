//! Delimited-text input and output for matrices, labels and survival data.
//!
//! A matrix file has a header line whose first cell is ignored and whose
//! remaining cells are observation ids, followed by one line per feature:
//! the feature id and then one value per observation.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::evaluation::SurvivalCohort;
use crate::matrix::DataMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }

    /// Tab for `.tsv`/`.tab`/`.txt` files, comma otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv" | "tab" | "txt") => Delimiter::Tab,
            _ => Delimiter::Comma,
        }
    }
}

fn reader<R: Read>(input: R, delimiter: Delimiter) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter.byte())
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_error(line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        column,
        message: message.into(),
    }
}

/// Reads a matrix, rejecting ragged rows, non-numeric cells and NaN/Inf.
pub fn read_matrix<R: Read>(input: R, delimiter: Delimiter) -> Result<DataMatrix> {
    let mut rdr = reader(input, delimiter);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_error(1, 1, "empty file")),
    };
    if header.len() < 2 {
        return Err(parse_error(1, 2, "header has no observation ids"));
    }
    let observation_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let width = observation_ids.len();
    let mut feature_ids = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width + 1 {
            return Err(parse_error(
                line,
                record.len().min(width + 1) + 1,
                format!("expected {} cells, found {}", width + 1, record.len()),
            ));
        }
        feature_ids.push(record[0].to_owned());
        for (k, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(line, k + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(line, k + 1, format!("non-finite value {cell:?}")));
            }
            values.push(v);
        }
    }
    let rows = feature_ids.len();
    let values = Array2::from_shape_vec((rows, width), values).expect("row lengths checked");
    DataMatrix::new(values, feature_ids, observation_ids)
}

/// Reads a matrix file, choosing the delimiter from the extension unless
/// one is given.
pub fn read_matrix_path(path: &Path, delimiter: Option<Delimiter>) -> Result<DataMatrix> {
    let d = delimiter.unwrap_or_else(|| Delimiter::for_path(path));
    read_matrix(BufReader::new(File::open(path)?), d)
}

/// Writes a matrix in the format read by [`read_matrix`]. Values are written
/// with the shortest representation that parses back to the same number.
pub fn write_matrix<W: Write>(out: W, m: &DataMatrix, delimiter: Delimiter) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter.byte()).from_writer(out);
    let mut header = vec!["id".to_owned()];
    header.extend(m.observation_ids().iter().cloned());
    w.write_record(&header)?;
    for (id, row) in m.feature_ids().iter().zip(m.values().rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `id,label` lines (with a header line) into parallel vectors.
pub fn read_labels<R: Read>(input: R) -> Result<(Vec<String>, Vec<String>)> {
    let mut rdr = reader(input, Delimiter::Comma);
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        if k == 0 {
            continue;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_error(line, record.len().min(2) + 1, "expected id,label"));
        }
        ids.push(record[0].to_owned());
        labels.push(record[1].to_owned());
    }
    Ok((ids, labels))
}

pub fn write_labels<W: Write>(out: W, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "label"])?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Maps arbitrary label strings to `0..k` in order of first appearance.
pub fn encode_labels(labels: &[String]) -> Vec<usize> {
    let mut seen: Vec<&str> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| *s == l) {
            Some(i) => i,
            None => {
                seen.push(l);
                seen.len() - 1
            }
        })
        .collect()
}

/// Reads survival data with columns `id,time,event,group`. Events are
/// `1`/`0` or `true`/`false`.
pub fn read_survival<R: Read>(input: R) -> Result<(Vec<String>, SurvivalCohort)> {
    let mut rdr = reader(input, Delimiter::Comma);
    let mut ids = Vec::new();
    let (mut time, mut event, mut group) = (Vec::new(), Vec::new(), Vec::new());
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if k == 0 {
            let names: Vec<&str> = record.iter().collect();
            if names != ["id", "time", "event", "group"] {
                return Err(parse_error(line, 1, "header must be id,time,event,group"));
            }
            continue;
        }
        if record.len() != 4 {
            return Err(parse_error(line, record.len().min(4) + 1, "expected 4 cells"));
        }
        ids.push(record[0].to_owned());
        time.push(
            record[1]
                .parse::<f64>()
                .map_err(|_| parse_error(line, 2, format!("not a number: {:?}", &record[1])))?,
        );
        event.push(match &record[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_error(line, 3, format!("not an event flag: {other:?}"))),
        });
        group.push(
            record[3]
                .parse::<i64>()
                .map_err(|_| parse_error(line, 4, format!("not an integer group: {:?}", &record[3])))?,
        );
    }
    Ok((ids, SurvivalCohort::new(time, event, group)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMMA: &str = "id,a,b\nx,1,2.5\ny,-3,4e-2\nz,0,7\n";

    #[test]
    fn reads_comma_matrix() {
        let m = read_matrix(COMMA.as_bytes(), Delimiter::Comma).unwrap();
        assert_eq!((m.n_features(), m.n_observations()), (3, 2));
        assert_eq!(m.observation_ids(), ["a", "b"]);
        assert_eq!(m.values()[[1, 1]], 0.04);
    }

    #[test]
    fn tab_matches_comma() {
        let tab = COMMA.replace(',', "\t");
        assert_eq!(
            read_matrix(tab.as_bytes(), Delimiter::Tab).unwrap(),
            read_matrix(COMMA.as_bytes(), Delimiter::Comma).unwrap()
        );
    }

    #[test]
    fn reports_bad_cells() {
        let err = read_matrix("id,a,b\nx,1,2\ny,1,oops\n".as_bytes(), Delimiter::Comma).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            e => panic!("unexpected {e}"),
        }
        let err = read_matrix("id,a,b\nx,1\n".as_bytes(), Delimiter::Comma).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read_matrix("id,a,b\nx,1,NaN\ny,1,2\n".as_bytes(), Delimiter::Comma).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 3, .. }));
        assert!(read_matrix("".as_bytes(), Delimiter::Comma).is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let m = DataMatrix::from_values(Array2::from_shape_fn((3, 4), |(i, j)| {
            (i as f64 + 0.1) / (j as f64 + 3.0)
        }))
        .unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, Delimiter::Comma).unwrap();
        assert_eq!(read_matrix(buf.as_slice(), Delimiter::Comma).unwrap(), m);
    }

    #[test]
    fn survival_file() {
        let text = "id,time,event,group\na,1.5,1,0\nb,2,0,1\nc,3,true,1\n";
        let (ids, c) = read_survival(text.as_bytes()).unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(c.groups(), vec![0, 1]);
        assert!(read_survival("id,time,event,group\na,0,1,0\n".as_bytes()).is_err());
        assert!(read_survival("id,t,e,g\n".as_bytes()).is_err());
        assert!(read_survival("id,time,event,group\na,1,maybe,0\n".as_bytes()).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let mut buf = Vec::new();
        write_labels(&mut buf, &["p".into(), "q".into()], &[3, 1]).unwrap();
        let (ids, labels) = read_labels(buf.as_slice()).unwrap();
        assert_eq!(ids, ["p", "q"]);
        assert_eq!(encode_labels(&labels), vec![0, 1]);
    }
}
