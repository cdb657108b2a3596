//! Parsing of event and temperature files and their aggregation into
//! aligned monthly series.
//!
//! Column names, delimiters and the damage-cost suffix table come from a
//! schema, so the same code reads NOAA storm-event exports, GHCN-style
//! monthly indices, or hand-made fixtures.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::month::Month;
use crate::units::{convert_unit, Quantity, TempUnit, Temperature};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("column '{column}' not found in header (available: {available})")]
    MissingColumn { column: String, available: String },
    #[error("no rows parsed successfully ({row_errors} row errors)")]
    EmptyInput { row_errors: usize },
    #[error("line {line}: duplicate record for {year}-{month:02}")]
    DuplicateKey { year: i32, month: u32, line: u64 },
    #[error("line {line}: month '{value}' outside 1-12")]
    MonthOutOfRange { line: u64, value: String },
    #[error("line {line}: cannot parse {field} '{value}'")]
    BadValue {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("temperature records mix units {0} and {1}")]
    MixedUnits(TempUnit, TempUnit),
    #[error("missing temperature for {}", format_gaps(.missing))]
    Coverage { missing: Vec<(i32, Month)> },
    #[error("baseline is missing months {}", format_months(.missing))]
    IncompleteBaseline { missing: Vec<Month> },
    #[error("line {line}: month {month} appears more than once in baseline")]
    DuplicateMonth { month: Month, line: u64 },
    #[error("year window {first}..={last} is empty")]
    EmptyWindow { first: i32, last: i32 },
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_gaps(gaps: &[(i32, Month)]) -> String {
    gaps.iter()
        .map(|(y, m)| format!("{y}-{:02}", m.number()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn format_months(months: &[Month]) -> String {
    months.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
}

/// A row that could not be parsed. Parsing continues past it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Column mapping for event files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSchema {
    pub delimiter: char,
    pub date: String,
    pub cost: String,
    pub region: Option<String>,
    /// chrono formats tried in order; date-time formats are accepted and
    /// truncated to the date.
    pub date_formats: Vec<String>,
    /// Magnitude suffixes for the cost column, e.g. `K = 1e3`.
    pub suffixes: BTreeMap<String, f64>,
    /// Treat a blank cost cell as zero instead of a row error.
    pub blank_cost_is_zero: bool,
    pub comment: Option<char>,
}

impl Default for EventSchema {
    fn default() -> Self {
        EventSchema {
            delimiter: ',',
            date: "DATE".into(),
            cost: "DAMAGE".into(),
            region: None,
            date_formats: vec!["%Y-%m-%d".into()],
            suffixes: BTreeMap::new(),
            blank_cost_is_zero: false,
            comment: None,
        }
    }
}

/// Column mapping for monthly temperature files.
///
/// Either `year` and `month` columns, or a single `year_month` column holding
/// `YYYYMM` values (the NOAA climate-at-a-glance layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSchema {
    pub delimiter: char,
    pub year: String,
    pub month: String,
    pub year_month: Option<String>,
    pub temperature: String,
    /// Preamble lines to drop before the header row.
    pub skip_lines: usize,
    pub comment: Option<char>,
}

impl Default for TemperatureSchema {
    fn default() -> Self {
        TemperatureSchema {
            delimiter: ',',
            year: "YEAR".into(),
            month: "MONTH".into(),
            year_month: None,
            temperature: "TEMP".into(),
            skip_lines: 0,
            comment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub damage_cost: f64,
    pub region: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub records: Vec<EventRecord>,
    pub row_errors: Vec<RowError>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureRecord {
    pub year: i32,
    pub month: Month,
    pub mean_temp: Temperature,
}

/// One calendar month of aligned data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyObservation {
    pub year: i32,
    pub month: Month,
    pub count: u64,
    pub mean_temp: f64,
    pub temp_unit: TempUnit,
    pub total_cost: f64,
}

impl MonthlyObservation {
    pub fn temperature(&self) -> Temperature {
        Temperature::new(self.mean_temp, self.temp_unit)
    }
}

/// Inclusive year range plus an optional region allow-list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub first_year: i32,
    pub last_year: i32,
    #[serde(default)]
    pub regions: Option<Vec<String>>,
}

impl Window {
    pub fn years(first_year: i32, last_year: i32) -> Self {
        Window {
            first_year,
            last_year,
            regions: None,
        }
    }

    fn admits(&self, record: &EventRecord) -> bool {
        let year = record.date.year();
        if year < self.first_year || year > self.last_year {
            return false;
        }
        match &self.regions {
            Some(list) => list.contains(&record.region),
            None => true,
        }
    }
}

/// Counterfactual temperature `T0` for each calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyBaseline {
    pub unit: TempUnit,
    pub t0: [f64; 12],
}

impl MonthlyBaseline {
    pub fn get(&self, month: Month) -> f64 {
        self.t0[month.index()]
    }

    pub fn temperature(&self, month: Month) -> Temperature {
        Temperature::new(self.get(month), self.unit)
    }

    pub fn to_unit(&self, unit: TempUnit) -> MonthlyBaseline {
        let mut t0 = self.t0;
        for v in &mut t0 {
            *v = convert_unit(*v, Quantity::Absolute, self.unit, unit);
        }
        MonthlyBaseline { unit, t0 }
    }

    pub fn mean(&self) -> f64 {
        self.t0.iter().sum::<f64>() / 12.0
    }
}

fn reader_builder(delimiter: char, comment: Option<char>) -> csv::ReaderBuilder {
    let mut builder = csv::ReaderBuilder::new();
    builder
        .delimiter(delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(comment.map(|c| c as u8));
    builder
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::MissingColumn {
            column: name.to_string(),
            available: headers.iter().collect::<Vec<_>>().join(", "),
        })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Splits a plain decimal literal into its digits and the number of
/// fractional places, so that scaling by a power of ten stays exact.
fn split_decimal(text: &str) -> Option<(f64, i32)> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: f64 = format!("{int_part}{frac_part}").parse().ok()?;
    Some((digits, frac_part.len() as i32))
}

/// Parses a damage-cost cell such as `57800`, `57.8K` or `1.5M`.
pub fn parse_cost(cell: &str, suffixes: &BTreeMap<String, f64>) -> Result<f64, String> {
    let cell = cell.trim();
    let split = cell
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_alphabetic())
        .last()
        .map_or(cell.len(), |(i, _)| i);
    let (number, suffix) = cell.split_at(split);
    let multiplier = if suffix.is_empty() {
        1.0
    } else {
        *suffixes
            .get(suffix)
            .or_else(|| suffixes.get(&suffix.to_ascii_uppercase()))
            .ok_or_else(|| format!("unknown cost suffix '{suffix}' in '{cell}'"))?
    };
    if number.is_empty() && !suffix.is_empty() {
        // A bare suffix ("K") carries no amount.
        return Err(format!("no amount before suffix in '{cell}'"));
    }
    let value = match split_decimal(number) {
        Some((digits, places)) => digits * multiplier / 10f64.powi(places),
        None => {
            let v: f64 = number.parse().map_err(|_| format!("cannot parse cost '{cell}'"))?;
            v * multiplier
        }
    };
    if !value.is_finite() || value < 0.0 {
        return Err(format!("cost '{cell}' must be a nonnegative amount"));
    }
    Ok(value)
}

fn parse_date(cell: &str, formats: &[String]) -> Option<NaiveDate> {
    formats.iter().find_map(|fmt| {
        NaiveDate::parse_from_str(cell, fmt)
            .ok()
            .or_else(|| NaiveDateTime::parse_from_str(cell, fmt).ok().map(|dt| dt.date()))
    })
}

/// Parses an event file. Bad rows are collected in
/// [`ParsedEvents::row_errors`] and skipped.
pub fn parse_events<R: Read>(input: R, schema: &EventSchema) -> Result<ParsedEvents, IngestError> {
    let mut reader = reader_builder(schema.delimiter, schema.comment).from_reader(input);
    let headers = reader.headers()?.clone();
    let date_col = column_index(&headers, &schema.date)?;
    let cost_col = column_index(&headers, &schema.cost)?;
    let region_col = schema
        .region
        .as_deref()
        .map(|name| column_index(&headers, name))
        .transpose()?;

    let mut parsed = ParsedEvents::default();
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row);
        match parse_event_row(&row, schema, date_col, cost_col, region_col) {
            Ok(record) => parsed.records.push(record),
            Err(message) => parsed.row_errors.push(RowError { line, message }),
        }
    }
    if parsed.records.is_empty() {
        return Err(IngestError::EmptyInput {
            row_errors: parsed.row_errors.len(),
        });
    }
    Ok(parsed)
}

fn parse_event_row(
    row: &csv::StringRecord,
    schema: &EventSchema,
    date_col: usize,
    cost_col: usize,
    region_col: Option<usize>,
) -> Result<EventRecord, String> {
    let field = |idx: usize, name: &str| row.get(idx).ok_or_else(|| format!("row has no '{name}' field"));
    let date_cell = field(date_col, &schema.date)?;
    let date = parse_date(date_cell, &schema.date_formats).ok_or_else(|| format!("cannot parse date '{date_cell}'"))?;
    let cost_cell = field(cost_col, &schema.cost)?;
    let damage_cost = if cost_cell.is_empty() && schema.blank_cost_is_zero {
        0.0
    } else if cost_cell.is_empty() {
        return Err("blank cost".to_string());
    } else {
        parse_cost(cost_cell, &schema.suffixes)?
    };
    let region = match (region_col, &schema.region) {
        (Some(idx), Some(name)) => field(idx, name)?.to_string(),
        _ => String::new(),
    };
    Ok(EventRecord {
        date,
        damage_cost,
        region,
    })
}

fn skip_preamble(text: &str, lines: usize) -> &str {
    let mut rest = text;
    for _ in 0..lines {
        match rest.find('\n') {
            Some(pos) => rest = &rest[pos + 1..],
            None => return "",
        }
    }
    rest
}

/// Parses a monthly temperature file. Any malformed row aborts the parse.
pub fn parse_temperatures<R: Read>(
    mut input: R,
    schema: &TemperatureSchema,
    unit: TempUnit,
) -> Result<Vec<TemperatureRecord>, IngestError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let body = skip_preamble(&text, schema.skip_lines);
    let line_offset = schema.skip_lines as u64;

    let mut reader = reader_builder(schema.delimiter, schema.comment).from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    let temp_col = column_index(&headers, &schema.temperature)?;
    let date_cols = match &schema.year_month {
        Some(name) => DateColumns::Combined(column_index(&headers, name)?),
        None => DateColumns::Split(
            column_index(&headers, &schema.year)?,
            column_index(&headers, &schema.month)?,
        ),
    };

    let mut seen: HashMap<(i32, Month), u64> = HashMap::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row) + line_offset;
        let cell = |idx: usize, field: &'static str| {
            row.get(idx).ok_or_else(|| IngestError::BadValue {
                line,
                field,
                value: String::new(),
            })
        };
        let (year, month_text) = match date_cols {
            DateColumns::Split(y, m) => {
                let y_text = cell(y, "year")?;
                let year: i32 = y_text.parse().map_err(|_| IngestError::BadValue {
                    line,
                    field: "year",
                    value: y_text.to_string(),
                })?;
                (year, cell(m, "month")?.to_string())
            }
            DateColumns::Combined(idx) => {
                let ym = cell(idx, "year_month")?;
                if ym.len() != 6 || !ym.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(IngestError::BadValue {
                        line,
                        field: "year_month",
                        value: ym.to_string(),
                    });
                }
                (ym[..4].parse().expect("digits"), ym[4..].to_string())
            }
        };
        let month =
            month_text
                .parse::<u32>()
                .ok()
                .and_then(Month::new)
                .ok_or_else(|| IngestError::MonthOutOfRange {
                    line,
                    value: month_text.clone(),
                })?;
        let t_text = cell(temp_col, "temperature")?;
        let value: f64 = t_text
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IngestError::BadValue {
                line,
                field: "temperature",
                value: t_text.to_string(),
            })?;
        if seen.insert((year, month), line).is_some() {
            return Err(IngestError::DuplicateKey {
                year,
                month: month.number(),
                line,
            });
        }
        records.push(TemperatureRecord {
            year,
            month,
            mean_temp: Temperature::new(value, unit),
        });
    }
    if records.is_empty() {
        return Err(IngestError::EmptyInput { row_errors: 0 });
    }
    Ok(records)
}

#[derive(Clone, Copy)]
enum DateColumns {
    Split(usize, usize),
    Combined(usize),
}

/// Builds one [`MonthlyObservation`] per month of the window.
///
/// Months without events are kept with a zero count. Costs within a month
/// are summed in sorted order so the result does not depend on input order.
pub fn aggregate_monthly(
    events: &[EventRecord],
    temps: &[TemperatureRecord],
    window: &Window,
) -> Result<Vec<MonthlyObservation>, IngestError> {
    if window.first_year > window.last_year {
        return Err(IngestError::EmptyWindow {
            first: window.first_year,
            last: window.last_year,
        });
    }
    let unit = match temps.first() {
        Some(t) => t.mean_temp.unit,
        None => TempUnit::Celsius,
    };
    let mut temp_lookup: HashMap<(i32, Month), f64> = HashMap::with_capacity(temps.len());
    for t in temps {
        if t.mean_temp.unit != unit {
            return Err(IngestError::MixedUnits(unit, t.mean_temp.unit));
        }
        if temp_lookup.insert((t.year, t.month), t.mean_temp.value).is_some() {
            return Err(IngestError::DuplicateKey {
                year: t.year,
                month: t.month.number(),
                line: 0,
            });
        }
    }

    let keys: Vec<(i32, Month)> = (window.first_year..=window.last_year)
        .flat_map(|y| Month::all().map(move |m| (y, m)))
        .collect();
    let missing: Vec<(i32, Month)> = keys.iter().copied().filter(|k| !temp_lookup.contains_key(k)).collect();
    if !missing.is_empty() {
        return Err(IngestError::Coverage { missing });
    }

    let mut costs: HashMap<(i32, Month), Vec<f64>> = HashMap::new();
    for e in events.iter().filter(|e| window.admits(e)) {
        let month = Month::new(e.date.month()).expect("chrono month in range");
        costs.entry((e.date.year(), month)).or_default().push(e.damage_cost);
    }

    Ok(keys
        .into_iter()
        .map(|key| {
            let (count, total_cost) = match costs.get_mut(&key) {
                Some(list) => {
                    list.sort_by(f64::total_cmp);
                    (list.len() as u64, list.iter().sum())
                }
                None => (0, 0.0),
            };
            MonthlyObservation {
                year: key.0,
                month: key.1,
                count,
                mean_temp: temp_lookup[&key],
                temp_unit: unit,
                total_cost,
            }
        })
        .collect())
}

/// Reads a 12-row `month,T0` table (with a header row).
pub fn baseline_from_file<R: Read>(input: R, unit: TempUnit) -> Result<MonthlyBaseline, IngestError> {
    let mut reader = reader_builder(',', Some('#')).from_reader(input);
    let mut t0: [Option<f64>; 12] = [None; 12];
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row);
        let month_text = row.get(0).unwrap_or("");
        let month =
            month_text
                .parse::<u32>()
                .ok()
                .and_then(Month::new)
                .ok_or_else(|| IngestError::MonthOutOfRange {
                    line,
                    value: month_text.to_string(),
                })?;
        let t_text = row.get(1).unwrap_or("");
        let value: f64 = t_text
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IngestError::BadValue {
                line,
                field: "baseline temperature",
                value: t_text.to_string(),
            })?;
        let slot = &mut t0[month.index()];
        if slot.is_some() {
            return Err(IngestError::DuplicateMonth { month, line });
        }
        *slot = Some(value);
    }
    let missing: Vec<Month> = Month::all().filter(|m| t0[m.index()].is_none()).collect();
    if !missing.is_empty() {
        return Err(IngestError::IncompleteBaseline { missing });
    }
    Ok(MonthlyBaseline {
        unit,
        t0: t0.map(|v| v.expect("checked above")),
    })
}

/// Averages a temperature series per calendar month over `first..=last`,
/// e.g. to build a 20th-century baseline from a long monthly index.
pub fn baseline_from_records(
    temps: &[TemperatureRecord],
    first_year: i32,
    last_year: i32,
) -> Result<MonthlyBaseline, IngestError> {
    let mut sums = [0.0f64; 12];
    let mut counts = [0usize; 12];
    let mut unit = None;
    for t in temps.iter().filter(|t| t.year >= first_year && t.year <= last_year) {
        match unit {
            None => unit = Some(t.mean_temp.unit),
            Some(u) if u != t.mean_temp.unit => return Err(IngestError::MixedUnits(u, t.mean_temp.unit)),
            _ => {}
        }
        sums[t.month.index()] += t.mean_temp.value;
        counts[t.month.index()] += 1;
    }
    let missing: Vec<Month> = Month::all().filter(|m| counts[m.index()] == 0).collect();
    if !missing.is_empty() {
        return Err(IngestError::IncompleteBaseline { missing });
    }
    let mut t0 = [0.0; 12];
    for i in 0..12 {
        t0[i] = sums[i] / counts[i] as f64;
    }
    Ok(MonthlyBaseline {
        unit: unit.expect("at least one record"),
        t0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suffix_table() -> BTreeMap<String, f64> {
        [("K".to_string(), 1e3), ("M".to_string(), 1e6), ("B".to_string(), 1e9)]
            .into_iter()
            .collect()
    }

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn maps_date_and_cost_columns() {
        let parsed = parse_events("DATE,DAMAGE\n1996-07-04,57800\n".as_bytes(), &EventSchema::default()).unwrap();
        assert_eq!(
            parsed.records,
            vec![EventRecord {
                date: ymd(1996, 7, 4),
                damage_cost: 57800.0,
                region: String::new()
            }]
        );
        assert!(parsed.row_errors.is_empty());
    }

    #[test]
    fn expands_cost_suffix() {
        let schema = EventSchema {
            suffixes: suffix_table(),
            ..Default::default()
        };
        let parsed = parse_events("DATE,DAMAGE\n1996-07-04,57.8K\n".as_bytes(), &schema).unwrap();
        // 57.8 × 10^3
        assert_eq!(parsed.records[0].damage_cost, 57800.0);
        assert_eq!(parse_cost("1.5M", &suffix_table()).unwrap(), 1_500_000.0);
        assert_eq!(parse_cost("2b", &suffix_table()).unwrap(), 2e9);
        assert_eq!(parse_cost("0.01K", &suffix_table()).unwrap(), 10.0);
    }

    #[test]
    fn unknown_suffix_is_a_row_error() {
        let parsed = parse_events(
            "DATE,DAMAGE\n1996-07-04,57.8K\n1996-07-05,10\n".as_bytes(),
            &EventSchema::default(),
        )
        .unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.row_errors.len(), 1);
        assert_eq!(parsed.row_errors[0].line, 2);
        assert!(parsed.row_errors[0].message.contains("suffix"));
    }

    #[test]
    fn bad_date_is_collected_and_skipped() {
        let text = "DATE,DAMAGE\nnot-a-date,100\n1996-01-02,5\n";
        let parsed = parse_events(text.as_bytes(), &EventSchema::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(
            parsed.row_errors,
            vec![RowError {
                line: 2,
                message: "cannot parse date 'not-a-date'".into()
            }]
        );
    }

    #[test]
    fn negative_and_blank_costs() {
        let text = "DATE,DAMAGE\n1996-01-01,-5\n1996-01-02,\n1996-01-03,1\n";
        let parsed = parse_events(text.as_bytes(), &EventSchema::default()).unwrap();
        assert_eq!(parsed.row_errors.len(), 2);
        let lenient = EventSchema {
            blank_cost_is_zero: true,
            ..Default::default()
        };
        let parsed = parse_events(text.as_bytes(), &lenient).unwrap();
        assert_eq!(parsed.records.len(), 2);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse_events("WHEN,DAMAGE\n1996-07-04,1\n".as_bytes(), &EventSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "DATE"));
    }

    #[test]
    fn all_rows_bad_is_empty_input() {
        let err = parse_events("DATE,DAMAGE\nx,1\ny,2\n".as_bytes(), &EventSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::EmptyInput { row_errors: 2 }));
    }

    #[test]
    fn storm_events_style_columns() {
        let schema = EventSchema {
            date: "BEGIN_DATE_TIME".into(),
            cost: "DAMAGE_PROPERTY".into(),
            region: Some("STATE".into()),
            date_formats: vec!["%d-%b-%y %H:%M:%S".into()],
            suffixes: suffix_table(),
            ..Default::default()
        };
        let text = "BEGIN_DATE_TIME,STATE,DAMAGE_PROPERTY\n04-JUL-96 14:00:00,OHIO,2.5K\n";
        let parsed = parse_events(text.as_bytes(), &schema).unwrap();
        assert_eq!(parsed.records[0].date, ymd(1996, 7, 4));
        assert_eq!(parsed.records[0].region, "OHIO");
        assert_eq!(parsed.records[0].damage_cost, 2500.0);
    }

    #[test]
    fn temperature_rows() {
        let recs = parse_temperatures(
            "YEAR,MONTH,TEMP\n1996,1,32.0\n".as_bytes(),
            &TemperatureSchema::default(),
            TempUnit::Fahrenheit,
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].year, 1996);
        assert_eq!(recs[0].month.number(), 1);
        assert_eq!(recs[0].mean_temp, Temperature::new(32.0, TempUnit::Fahrenheit));
    }

    #[test]
    fn temperature_errors() {
        let schema = TemperatureSchema::default();
        let dup = parse_temperatures(
            "YEAR,MONTH,TEMP\n1996,1,32\n1996,1,33\n".as_bytes(),
            &schema,
            TempUnit::Fahrenheit,
        );
        assert!(matches!(
            dup,
            Err(IngestError::DuplicateKey {
                year: 1996,
                month: 1,
                line: 3
            })
        ));
        let range = parse_temperatures(
            "YEAR,MONTH,TEMP\n1996,13,50.0\n".as_bytes(),
            &schema,
            TempUnit::Fahrenheit,
        );
        assert!(matches!(range, Err(IngestError::MonthOutOfRange { line: 2, .. })));
        let nan = parse_temperatures(
            "YEAR,MONTH,TEMP\n1996,2,warm\n".as_bytes(),
            &schema,
            TempUnit::Fahrenheit,
        );
        assert!(matches!(
            nan,
            Err(IngestError::BadValue {
                field: "temperature",
                ..
            })
        ));
    }

    #[test]
    fn climate_at_a_glance_layout() {
        let schema = TemperatureSchema {
            year_month: Some("Date".into()),
            temperature: "Value".into(),
            skip_lines: 4,
            ..Default::default()
        };
        let text = "Contiguous U.S., Average Temperature\nUnits: Degrees Fahrenheit\nBase Period: 1901-2000\nMissing: -99\nDate,Value,Anomaly\n199601,30.5,-0.3\n199602,35.1,1.2\n";
        let recs = parse_temperatures(text.as_bytes(), &schema, TempUnit::Fahrenheit).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[1].year, recs[1].month.number()), (1996, 2));
        assert_eq!(recs[1].mean_temp.value, 35.1);
    }

    fn full_year(year: i32, unit: TempUnit) -> Vec<TemperatureRecord> {
        Month::all()
            .map(|m| TemperatureRecord {
                year,
                month: m,
                mean_temp: Temperature::new(40.0 + m.number() as f64, unit),
            })
            .collect()
    }

    fn event(y: i32, m: u32, d: u32, cost: f64) -> EventRecord {
        EventRecord {
            date: ymd(y, m, d),
            damage_cost: cost,
            region: "X".into(),
        }
    }

    #[test]
    fn aggregates_counts_and_keeps_empty_months() {
        let mut temps = full_year(1996, TempUnit::Fahrenheit);
        temps[6].mean_temp.value = 75.0;
        let events = vec![
            event(1996, 7, 1, 10.0),
            event(1996, 7, 2, 20.0),
            event(1996, 7, 30, 0.0),
            event(1997, 1, 1, 5.0),
        ];
        let obs = aggregate_monthly(&events, &temps, &Window::years(1996, 1996)).unwrap();
        assert_eq!(obs.len(), 12);
        let july = &obs[6];
        assert_eq!(
            (july.year, july.month.number(), july.count, july.mean_temp),
            (1996, 7, 3, 75.0)
        );
        assert_eq!(july.total_cost, 30.0);
        assert_eq!(obs[0].count, 0);
        assert_eq!(obs[0].total_cost, 0.0);
        assert_eq!(obs.iter().map(|o| o.count).sum::<u64>(), 3);
    }

    #[test]
    fn coverage_gap_names_missing_month() {
        let mut temps = full_year(1996, TempUnit::Fahrenheit);
        temps.remove(11);
        let err = aggregate_monthly(&[], &temps, &Window::years(1996, 1996)).unwrap_err();
        match err {
            IngestError::Coverage { missing } => assert_eq!(missing, vec![(1996, Month::new(12).unwrap())]),
            other => panic!("{other}"),
        }
        assert!(
            aggregate_monthly(&[], &full_year(1996, TempUnit::Fahrenheit), &Window::years(1996, 1996))
                .unwrap()
                .iter()
                .all(|o| o.count == 0)
        );
    }

    #[test]
    fn region_filter_is_exact() {
        let temps = full_year(1996, TempUnit::Celsius);
        let mut other = event(1996, 3, 3, 1.0);
        other.region = "x".into();
        let events = vec![event(1996, 3, 1, 1.0), other];
        let window = Window {
            regions: Some(vec!["X".into()]),
            ..Window::years(1996, 1996)
        };
        let obs = aggregate_monthly(&events, &temps, &window).unwrap();
        assert_eq!(obs[2].count, 1);
    }

    #[test]
    fn baseline_table() {
        let rows: String = (1..=12).map(|m| format!("{m},{}\n", 30 + m)).collect();
        let base = baseline_from_file(format!("month,t0\n{rows}").as_bytes(), TempUnit::Fahrenheit).unwrap();
        assert_eq!(base.get(Month::new(12).unwrap()), 42.0);

        let eleven: String = (1..=11).map(|m| format!("{m},1\n")).collect();
        let err = baseline_from_file(format!("month,t0\n{eleven}").as_bytes(), TempUnit::Celsius).unwrap_err();
        assert!(
            matches!(err, IngestError::IncompleteBaseline { ref missing } if missing == &[Month::new(12).unwrap()])
        );

        let dup: String = [1, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11]
            .iter()
            .map(|m| format!("{m},1\n"))
            .collect();
        let err = baseline_from_file(format!("month,t0\n{dup}").as_bytes(), TempUnit::Celsius).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateMonth { .. }));
    }

    #[test]
    fn baseline_unit_conversion() {
        let base = MonthlyBaseline {
            unit: TempUnit::Fahrenheit,
            t0: [32.0; 12],
        };
        let c = base.to_unit(TempUnit::Celsius);
        assert_eq!(c.t0, [0.0; 12]);
        assert_eq!(c.unit, TempUnit::Celsius);
    }

    #[test]
    fn baseline_from_long_series() {
        let mut temps = full_year(1901, TempUnit::Celsius);
        temps.extend(full_year(1902, TempUnit::Celsius).into_iter().map(|mut t| {
            t.mean_temp.value += 2.0;
            t
        }));
        let base = baseline_from_records(&temps, 1901, 1902).unwrap();
        assert_eq!(base.get(Month::new(1).unwrap()), 42.0);
        assert!(baseline_from_records(&temps, 1950, 2000).is_err());
    }
}
