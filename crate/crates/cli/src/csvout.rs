//! Schema-checked CSV tables with a fixed number format.

use std::fs;
use std::path::Path;

use ladderfp_core::analysis::{BlockStructureReport, CompareReport, EthReport};
use ladderfp_core::propagation::ObservableSeries;
use ladderfp_core::stochastic::DistributionSeries;
use ladderfp_core::tcl::TclRateSet;
use ladderfp_core::MagDiff;

use crate::error::{CliError, CliResult};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` with 12 significant digits: positional notation for exponents in
/// `[-5, 12)`, scientific otherwise, trailing zeros removed.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

/// A header plus rows, every row checked against it on insertion.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<Cell>) -> CliResult<()> {
        if row.len() != self.header.len() {
            return Err(CliError::Numerical(format!(
                "row {} has {} fields, schema '{}' has {}",
                self.rows.len() + 1,
                row.len(),
                self.header.join(","),
                self.header.len()
            )));
        }
        for (cell, name) in row.iter().zip(&self.header) {
            match cell {
                Cell::Num(x) if !x.is_finite() => {
                    return Err(CliError::Numerical(format!(
                        "non-finite value {x} in column '{name}', row {}",
                        self.rows.len() + 1
                    )))
                }
                Cell::Text(s) if s.contains([',', '"', '\n', '\r']) => {
                    return Err(CliError::Numerical(format!("text field '{s}' in column '{name}' needs quoting")))
                }
                _ => {}
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn push_nums(&mut self, row: impl IntoIterator<Item = f64>) -> CliResult<()> {
        self.push(row.into_iter().map(Cell::Num).collect())
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

fn x_columns(prefix: &str, labels: &[MagDiff]) -> Vec<String> {
    labels.iter().map(|x| format!("{prefix}{x}")).collect()
}

/// Schema (a): `t,P_<X>...,mean,variance`.
pub fn series_table(labels: &[MagDiff], times: &[f64], probs: &[Vec<f64>], mean: &[f64], variance: &[f64]) -> CliResult<Table> {
    let mut header = vec!["t".to_string()];
    header.extend(x_columns("P_", labels));
    header.extend(["mean".to_string(), "variance".to_string()]);
    let mut t = Table::new(header);
    for k in 0..times.len() {
        let mut row = vec![times[k]];
        row.extend(&probs[k]);
        row.extend([mean[k], variance[k]]);
        t.push_nums(row)?;
    }
    Ok(t)
}

pub fn quantum_table(s: &ObservableSeries) -> CliResult<Table> {
    series_table(&s.labels, &s.times, &s.probs, &s.mean, &s.variance)
}

pub fn distribution_table(s: &DistributionSeries) -> CliResult<Table> {
    series_table(&s.labels, &s.times, &s.probs, &s.mean(), &s.variance())
}

/// Schema (b): `t,R_up_<X>...,R_down_<X>...`; absent transitions are 0.
pub fn rates_table(set: &TclRateSet) -> CliResult<Table> {
    let mut header = vec!["t".to_string()];
    header.extend(x_columns("R_up_", &set.labels));
    header.extend(x_columns("R_down_", &set.labels));
    let mut t = Table::new(header);
    let times = set
        .up
        .iter()
        .chain(&set.down)
        .flatten()
        .next()
        .map(|r| r.times.clone())
        .unwrap_or_default();
    for (k, &time) in times.iter().enumerate() {
        let mut row = vec![time];
        let value = |r: &Option<ladderfp_core::tcl::TclRates>| r.as_ref().map_or(0.0, |r| r.values[k]);
        row.extend(set.up.iter().map(value));
        row.extend(set.down.iter().map(value));
        t.push_nums(row)?;
    }
    Ok(t)
}

/// Schema (c): `row_energy,col_energy,value`.
pub fn fine_block_table(report: &BlockStructureReport) -> CliResult<Table> {
    let mut t = Table::new(["row_energy", "col_energy", "value"]);
    let f = &report.fine;
    let nc = f.col_energies.len();
    for (r, &er) in f.row_energies.iter().enumerate() {
        for (c, &ec) in f.col_energies.iter().enumerate() {
            t.push_nums([er, ec, f.values[r * nc + c]])?;
        }
    }
    Ok(t)
}

/// Schema (d): `row_bin_center,col_bin_center,mean_sq,count`; empty bins carry mean 0.
pub fn coarse_block_table(report: &BlockStructureReport) -> CliResult<Table> {
    let mut t = Table::new(["row_bin_center", "col_bin_center", "mean_sq", "count"]);
    for b in &report.coarse {
        t.push(vec![
            Cell::Num(b.row_center),
            Cell::Num(b.col_center),
            Cell::Num(b.mean_sq()),
            Cell::Int(b.count as i64),
        ])?;
    }
    Ok(t)
}

/// Schema (e): `E_n,x_diag,x2_diag,parity`.
pub fn eth_table(report: &EthReport) -> CliResult<Table> {
    let mut t = Table::new(["E_n", "x_diag", "x2_diag", "parity"]);
    for r in &report.rows {
        t.push(vec![
            Cell::Num(r.energy),
            Cell::Num(r.x_diag),
            Cell::Num(r.x2_diag),
            Cell::Int(r.parity as i64),
        ])?;
    }
    Ok(t)
}

/// `t,dP_<X>...,d_mean,d_variance` (quantum minus stochastic).
pub fn compare_table(c: &CompareReport) -> CliResult<Table> {
    let mut header = vec!["t".to_string()];
    header.extend(x_columns("dP_", &c.labels));
    header.extend(["d_mean".to_string(), "d_variance".to_string()]);
    let mut t = Table::new(header);
    for k in 0..c.times.len() {
        let mut row = vec![c.times[k]];
        row.extend(&c.dp[k]);
        row.extend([c.da[k], c.dvar[k]]);
        t.push_nums(row)?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(150.0), "150");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(format_number(12870.0), "12870");
        assert_eq!(format_number(1.23456789012345e-7), "1.23456789012e-7");
        assert_eq!(format_number(6.02214076e23), "6.02214076e23");
        assert_eq!(format_number(1e-12), "1e-12");
        assert_eq!(format_number(0.00012345), "0.00012345");
    }

    #[test]
    fn schema_violations_rejected() {
        let mut t = Table::new(["a", "b"]);
        assert!(t.push_nums([1.0]).is_err());
        assert!(t.push_nums([1.0, f64::NAN]).is_err());
        assert!(t.push(vec![Cell::Text("x,y".into()), Cell::Int(1)]).is_err());
        t.push_nums([1.0, 2.5]).unwrap();
        assert_eq!(t.to_bytes().unwrap(), b"a,b\n1,2.5\n");
    }

    #[test]
    fn series_header_uses_labels() {
        let labels: Vec<MagDiff> = (-2..=2).map(MagDiff::from_int).collect();
        let probs = vec![vec![0.0, 0.0, 1.0, 0.0, 0.0]];
        let t = series_table(&labels, &[0.0], &probs, &[0.0], &[0.0]).unwrap();
        let text = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(text, "t,P_-2,P_-1,P_0,P_1,P_2,mean,variance\n0,0,0,1,0,0,0,0\n");
    }

    proptest! {
        #[test]
        fn formatted_numbers_keep_twelve_digits(x in -1e15f64..1e15, scale in -20i32..20) {
            let v = x * 10f64.powi(scale);
            let back: f64 = format_number(v).parse().unwrap();
            prop_assert!((back - v).abs() <= 5e-12 * v.abs());
        }
    }
}
