//! File formats: long-format panel CSV, per-cell CSV exports and JSON.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use dmdfm_core::panel::LongRecord;
use dmdfm_core::simulation::McReport;
use dmdfm_core::PanelDataset;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Label of the cross-individual mean rows in forecast tables.
pub const AVERAGE_LABEL: &str = "AVERAGE";

const KEY_COLUMNS: [&str; 3] = ["individual", "period", "y"];

fn parse_value(raw: &str, column: &str, line: usize) -> Result<f64> {
    raw.trim().parse().map_err(|_| {
        dmdfm_core::Error::NonNumericValue {
            column: column.to_string(),
            value: raw.to_string(),
            line,
        }
        .into()
    })
}

fn header_error(message: impl std::fmt::Display) -> CliError {
    CliError::new(crate::error::Category::Data, "BadHeader", message)
}

/// Reads a balanced panel in `individual,period,y,x1,...,xp` layout.
pub fn parse_panel<R: Read>(reader: R) -> Result<PanelDataset> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 3 || names[..3] != KEY_COLUMNS {
        return Err(header_error(format_args!(
            "header must start with individual,period,y; found {}",
            names.join(",")
        )));
    }
    for (j, name) in names[3..].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(header_error(format_args!(
                "regressor column {} must be named x{}, found `{name}`",
                j + 4,
                j + 1
            )));
        }
    }
    let mut records = Vec::new();
    for (k, row) in csv.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let field = |j: usize| row.get(j).unwrap_or("");
        let x = (3..row.len())
            .map(|j| parse_value(field(j), names[j], line))
            .collect::<Result<Vec<f64>>>()?;
        records.push(LongRecord {
            individual: field(0).trim().to_string(),
            period: field(1).trim().to_string(),
            y: parse_value(field(2), "y", line)?,
            x,
        });
    }
    Ok(PanelDataset::from_long(&records)?)
}

pub fn read_panel(path: &Path) -> Result<PanelDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_panel(file)
}

/// Writes a panel in the layout [`parse_panel`] reads, sorted by individual
/// then period.
pub fn write_panel<W: Write>(writer: W, data: &PanelDataset) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=data.n_regressors()).map(|j| format!("x{j}")));
    csv.write_record(&header)?;
    for rec in data.to_long() {
        let mut row = vec![rec.individual, rec.period, rec.y.to_string()];
        row.extend(rec.x.iter().map(f64::to_string));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes an `N x k` matrix whose column `s` belongs to panel period
/// `first_period + s`, as `individual,period,<column>` rows.
pub fn write_period_matrix<W: Write>(
    writer: W,
    data: &PanelDataset,
    values: &DMatrix<f64>,
    column: &str,
    first_period: usize,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["individual", "period", column])?;
    let (ids, periods) = (data.individual_ids(), data.period_ids());
    for i in 0..values.nrows() {
        for s in 0..values.ncols() {
            csv.write_record([
                ids[i].as_str(),
                periods[first_period + s].as_str(),
                values[(i, s)].to_string().as_str(),
            ])?;
        }
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes stacked `(N*T) x k` factor values as `individual,period,f1,...,fk`.
pub fn write_stacked_factors<W: Write>(writer: W, data: &PanelDataset, factors: &DMatrix<f64>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["individual".to_string(), "period".to_string()];
    header.extend((1..=factors.ncols()).map(|k| format!("f{k}")));
    csv.write_record(&header)?;
    let (ids, periods) = (data.individual_ids(), data.period_ids());
    let t = periods.len();
    for (row, values) in factors.row_iter().enumerate() {
        let mut record = vec![ids[row / t].clone(), periods[row % t].clone()];
        record.extend(values.iter().map(f64::to_string));
        csv.write_record(&record)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Forecast table `period,individual,y_true,y_pred`; each period is followed
/// by an [`AVERAGE_LABEL`] row holding the cross-individual means.
pub fn write_forecast<W: Write>(
    writer: W,
    individuals: &[String],
    periods: &[String],
    y_true: &DMatrix<f64>,
    y_pred: &DMatrix<f64>,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["period", "individual", "y_true", "y_pred"])?;
    let n = y_true.nrows() as f64;
    for (h, period) in periods.iter().enumerate() {
        for (i, id) in individuals.iter().enumerate() {
            csv.write_record([
                period.as_str(),
                id.as_str(),
                &y_true[(i, h)].to_string(),
                &y_pred[(i, h)].to_string(),
            ])?;
        }
        let mean_true = y_true.column(h).sum() / n;
        let mean_pred = y_pred.column(h).sum() / n;
        csv.write_record([period, AVERAGE_LABEL, &mean_true.to_string(), &mean_pred.to_string()])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per cell: sizes, failure accounting, then bias and RMSE of
/// `(beta_l, beta_f1, beta_f2)`.
pub fn write_mc_report<W: Write>(writer: W, report: &McReport) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "n",
        "t",
        "reps",
        "failures",
        "failure_rate",
        "valid",
        "bias_beta_l",
        "bias_beta_f1",
        "bias_beta_f2",
        "rmse_beta_l",
        "rmse_beta_f1",
        "rmse_beta_f2",
    ])?;
    for cell in &report.cells {
        let mut row = vec![
            cell.n.to_string(),
            cell.t.to_string(),
            cell.reps.to_string(),
            cell.failures.to_string(),
            cell.failure_rate.to_string(),
            cell.valid.to_string(),
        ];
        row.extend(cell.bias.iter().chain(&cell.rmse).map(f64::to_string));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Creates `path` and streams into it through `write`.
pub fn write_file(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write(&mut out)?;
    out.flush().map_err(|e| CliError::io(path, e))
}
