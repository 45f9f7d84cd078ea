//! Observation streams from CSV files or stdin, one observation per row.
//!
//! A header row is optional: a first row whose fields are not all numeric is
//! skipped. Rows are parsed lazily, so stdin is consumed one line at a time.

use std::io::Read;

use anytime_core::Observation;

use crate::error::CliError;

pub struct CsvObservations<R: Read> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    dim: usize,
    first: bool,
}

impl<R: Read> CsvObservations<R> {
    pub fn new(source: R, dim: usize) -> Self {
        let reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(source);
        Self { reader, record: csv::StringRecord::new(), dim, first: true }
    }
}

impl<R: Read> Iterator for CsvObservations<R> {
    type Item = Result<Observation, CliError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Some(Err(CliError::Input { line, msg: e.to_string() }));
                }
            }
            let line = self.record.position().map_or(0, |p| p.line());
            let parsed: Result<Vec<f64>, _> = self.record.iter().map(str::parse::<f64>).collect();
            let first = std::mem::replace(&mut self.first, false);
            let values = match parsed {
                Ok(v) => v,
                Err(_) if first => continue, // header row
                Err(e) => {
                    return Some(Err(CliError::Input {
                        line,
                        msg: format!(
                            "cannot parse `{}` as numbers: {e}",
                            self.record.iter().collect::<Vec<_>>().join(",")
                        ),
                    }))
                }
            };
            if values.len() != self.dim {
                return Some(Err(CliError::Input {
                    line,
                    msg: format!("expected {} column(s), found {}", self.dim, values.len()),
                }));
            }
            return Some(Observation::new(values).map_err(|e| CliError::Input { line, msg: e.to_string() }));
        }
    }
}
