//! CSV ingestion: rows are grouped by key columns into per-task series,
//! ordered by date and windowed.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::window::{TaskBank, TaskKey};
use super::DEFAULT_LAG;
use crate::exec::Exec;
use crate::{Error, Result};

/// Separator used when several columns are folded into one key token.
pub const KEY_SEPARATOR: &str = "|";

/// Which columns hold the date, the key components and the demand value.
///
/// The columns listed in `vendor_cols` are joined into the vendor token and
/// `product_cols` into the product token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub date_col: String,
    pub vendor_cols: Vec<String>,
    pub product_cols: Vec<String>,
    pub value_col: String,
}

impl CsvSchema {
    /// `date,store,item,sales`
    pub fn store_item() -> Self {
        CsvSchema {
            date_col: "date".into(),
            vendor_cols: vec!["store".into()],
            product_cols: vec!["item".into()],
            value_col: "sales".into(),
        }
    }

    /// `Product_Code,Warehouse,Product_Category,Date,Order_Demand`, with the
    /// warehouse and category folded into the vendor token.
    pub fn warehouse_product() -> Self {
        CsvSchema {
            date_col: "Date".into(),
            vendor_cols: vec!["Warehouse".into(), "Product_Category".into()],
            product_cols: vec!["Product_Code".into()],
            value_col: "Order_Demand".into(),
        }
    }
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema::store_item()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOptions {
    pub lag: usize,
    /// Tasks with fewer observations are dropped. Defaults to `lag + 5`.
    pub min_length: Option<usize>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            lag: DEFAULT_LAG,
            min_length: None,
        }
    }
}

impl IngestOptions {
    pub fn min_length(&self) -> usize {
        self.min_length.unwrap_or(self.lag + 5)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub rows: usize,
    pub tasks: usize,
    /// Dropped keys with their observation counts.
    pub dropped: Vec<(TaskKey, usize)>,
    pub windows: usize,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows read: {}", self.rows)?;
        writeln!(f, "tasks kept: {}", self.tasks)?;
        let n = self.dropped.len();
        writeln!(f, "{n} task{} dropped", if n == 1 { "" } else { "s" })?;
        for (k, len) in &self.dropped {
            writeln!(f, "  dropped {k} ({len} observations)")?;
        }
        writeln!(f, "windows: {}", self.windows)
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y/%m/%d"))
        .ok()
}

/// A finite number, with `(x)` read as `-x` as in accounting exports.
pub fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    let v: f64 = match s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        Some(inner) => -inner.trim().parse::<f64>().ok()?,
        None => s.parse().ok()?,
    };
    v.is_finite().then_some(v)
}

pub fn ingest_csv(
    path: &Path,
    schema: &CsvSchema,
    opts: &IngestOptions,
    exec: Exec,
) -> Result<(TaskBank, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, schema, opts, exec)
}

/// Same as [`ingest_csv`] over any reader; `name` is used in error messages.
pub fn ingest_reader<R: Read>(
    reader: R,
    name: &Path,
    schema: &CsvSchema,
    opts: &IngestOptions,
    exec: Exec,
) -> Result<(TaskBank, IngestReport)> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: PathBuf::from(name),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::config("schema", format!("column `{c}` not in header")))
    };
    let date_i = col(&schema.date_col)?;
    let value_i = col(&schema.value_col)?;
    let vendor_i = schema.vendor_cols.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let product_i = schema.product_cols.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    if vendor_i.is_empty() || product_i.is_empty() {
        return Err(Error::config("schema", "vendor and product columns must be non-empty"));
    }

    let mut groups: BTreeMap<TaskKey, BTreeMap<NaiveDate, Vec<f64>>> = BTreeMap::new();
    let mut report = IngestReport::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date = parse_date(field(date_i))
            .ok_or_else(|| parse_err(line, format!("bad date `{}`", field(date_i))))?;
        let value = parse_value(field(value_i))
            .ok_or_else(|| parse_err(line, format!("bad value `{}`", field(value_i))))?;
        let join = |idx: &[usize]| {
            idx.iter()
                .map(|&i| field(i))
                .collect::<Vec<_>>()
                .join(KEY_SEPARATOR)
        };
        let key = TaskKey::new(join(&vendor_i), join(&product_i));
        groups.entry(key).or_default().entry(date).or_default().push(value);
        report.rows += 1;
    }

    let min_len = opts.min_length();
    let mut kept = Vec::new();
    for (key, by_date) in groups {
        // Same-day observations are summed; sorting first keeps the sum
        // independent of row order.
        let series: Vec<f64> = by_date
            .into_values()
            .map(|mut vs| {
                vs.sort_by(f64::total_cmp);
                vs.iter().sum()
            })
            .collect();
        if series.len() < min_len || series.len() <= opts.lag {
            report.dropped.push((key, series.len()));
        } else {
            kept.push((key, series));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyBank {
            dropped: report.dropped.len(),
        });
    }
    let bank = TaskBank::from_series(kept, opts.lag, exec)?;
    report.tasks = bank.len();
    report.windows = bank.total_windows();
    Ok((bank, report))
}
