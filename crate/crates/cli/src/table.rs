//! CSV outputs: evolution logs, correlator grids and Green's function series.

use osmps::engine::{Direction, LogRecord};
use osmps::observables::{ExpectationGrid, GreenFunctionSeries};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("unexpected header {found:?}, wanted {wanted:?}")]
    Header { found: Vec<String>, wanted: Vec<String> },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

pub const LOG_TAIL: [&str; 4] = ["max_bond", "cum_discarded_weight", "osee_bits", "log_norm"];
pub const GRID_HEADER: [&str; 7] = ["beta", "t", "value_re", "value_im", "denom_log", "trunc_weight_thermal", "trunc_weight_real"];
pub const GREENS_HEADER: [&str; 12] =
    ["beta", "t", "g_re", "g_im", "ww_re", "ww_im", "wpwp_re", "wpwp_im", "wwp_re", "wwp_im", "wpw_re", "wpw_im"];

/// Shortest round-trip representation; identical inputs give identical text.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn stamp_column(direction: Direction) -> &'static str {
    match direction {
        Direction::Imaginary => "beta",
        Direction::Real => "t",
    }
}

fn write_rows(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn log_csv(direction: Direction, log: &[LogRecord]) -> Vec<u8> {
    let mut header = vec![stamp_column(direction)];
    header.extend(LOG_TAIL);
    write_rows(
        &header,
        log.iter().map(|r| vec![num(r.stamp), r.max_bond.to_string(), num(r.cum_discarded), num(r.osee_bits), num(r.log_norm)]),
    )
}

/// Rows sorted by `β` then `t`.
pub fn grid_csv(grid: &ExpectationGrid) -> Vec<u8> {
    let (nb, nt) = grid.values.dim();
    write_rows(
        &GRID_HEADER,
        (0..nb).flat_map(|i| (0..nt).map(move |j| (i, j))).map(|(i, j)| {
            let v = grid.values[[i, j]];
            let m = grid.meta[[i, j]];
            vec![
                num(grid.beta_axis[i]),
                num(grid.t_axis[j]),
                num(v.re),
                num(v.im),
                num(m.denom_log),
                num(m.trunc_weight_thermal),
                num(m.trunc_weight_real),
            ]
        }),
    )
}

pub fn greens_csv(series: &[GreenFunctionSeries]) -> Vec<u8> {
    write_rows(
        &GREENS_HEADER,
        series.iter().flat_map(|s| {
            (0..s.t_axis.len()).map(move |k| {
                let mut row = vec![num(s.beta), num(s.t_axis[k])];
                for z in [s.values[k], s.ww[k], s.wpwp[k], s.wwp[k], s.wpw[k]] {
                    row.push(num(z.re));
                    row.push(num(z.im));
                }
                row
            })
        }),
    )
}

/// A parsed numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Parses a numeric CSV whose header must equal `wanted`, or, when `wanted`
/// is `None`, any non-empty header. Every row must have the header's width
/// and only finite numbers.
pub fn parse_table(bytes: &[u8], wanted: Option<&[&str]>) -> Result<Table, TableError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(|e| TableError::Csv(e.to_string()))?.iter().map(str::to_string).collect();
    if let Some(w) = wanted {
        if header.iter().map(String::as_str).ne(w.iter().copied()) {
            return Err(TableError::Header { found: header, wanted: w.iter().map(|s| s.to_string()).collect() });
        }
    }
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(TableError::Header { found: header, wanted: Vec::new() });
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| TableError::Csv(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(TableError::Row { row: k + 1, msg: format!("{} fields, wanted {}", rec.len(), header.len()) });
        }
        let row = rec
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(TableError::Row { row: k + 1, msg: format!("not a finite number: {f:?}") }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Parses an evolution log, returning the stamp column name with the table.
pub fn parse_log(bytes: &[u8]) -> Result<Table, TableError> {
    let t = parse_table(bytes, None)?;
    let tail: Vec<&str> = t.header.iter().skip(1).map(String::as_str).collect();
    let stamp_ok = matches!(t.header[0].as_str(), "beta" | "t");
    if !stamp_ok || tail != LOG_TAIL {
        let wanted = ["beta|t"].into_iter().chain(LOG_TAIL).map(str::to_string).collect();
        return Err(TableError::Header { found: t.header, wanted });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use osmps::observables::CellMeta;
    use osmps::C64;
    use proptest::prelude::*;

    #[test]
    fn grid_round_trip() {
        let meta = CellMeta { denom_log: -0.25, trunc_weight_thermal: 1e-13, trunc_weight_real: 0.0 };
        let g = ExpectationGrid {
            label: "x".into(),
            beta_axis: vec![0.0, 0.5],
            t_axis: vec![0.0, 1.0, 2.0],
            values: Array2::from_shape_fn((2, 3), |(i, j)| C64::new(i as f64 + 0.1, j as f64 * 1e-17)),
            meta: Array2::from_elem((2, 3), meta),
        };
        let t = parse_table(&grid_csv(&g), Some(&GRID_HEADER)).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.rows[4], vec![0.5, 1.0, 1.1, 1e-17, -0.25, 1e-13, 0.0]);
    }

    #[test]
    fn log_round_trip() {
        let log = vec![LogRecord { stamp: 0.1, max_bond: 4, cum_discarded: 2e-14, osee_bits: 0.5, log_norm: -1.0 }];
        let t = parse_log(&log_csv(Direction::Real, &log)).unwrap();
        assert_eq!(t.header[0], "t");
        assert_eq!(t.column("max_bond").unwrap(), vec![4.0]);
        assert!(parse_log(b"x,max_bond\n1,2\n").is_err());
    }

    #[test]
    fn rejects_ragged_and_non_numeric_rows() {
        assert!(parse_table(b"a,b\n1,2,3\n", None).is_err());
        assert!(parse_table(b"a,b\n1,nan\n", None).is_err());
        assert!(parse_table(b"a,b\n1,x\n", None).is_err());
    }

    proptest! {
        #[test]
        fn parse_never_panics(data in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_table(&data, None);
            let _ = parse_log(&data);
        }
    }
}
