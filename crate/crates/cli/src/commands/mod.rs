pub mod attribute;
pub mod fit;
pub mod project;
pub mod report;
pub mod simulate;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use climattr_core::ingest::{
    aggregate_monthly, baseline_from_file, baseline_from_records, parse_events, parse_temperatures, MonthlyBaseline,
    MonthlyObservation, RowError, TemperatureRecord,
};
use climattr_core::stats::{ModelEntry, ModelSet};
use climattr_core::TempUnit;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::input(format!("malformed {what}: {e}")).at(path))
}

/// What raw-file ingestion kept and skipped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestSummary {
    pub events_parsed: usize,
    pub months: usize,
    pub row_errors: Vec<SkippedRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedRow {
    pub line: u64,
    pub message: String,
}

impl From<RowError> for SkippedRow {
    fn from(e: RowError) -> Self {
        SkippedRow {
            line: e.line,
            message: e.message,
        }
    }
}

pub(crate) struct LoadedObservations {
    pub series: Vec<MonthlyObservation>,
    /// Present when the series was built from raw event and temperature files.
    pub ingest: Option<IngestSummary>,
    pub temperatures: Option<Vec<TemperatureRecord>>,
}

fn read_temperatures(config: &RunConfig) -> Result<Option<Vec<TemperatureRecord>>, CliError> {
    let Some(path) = &config.inputs.temperatures else {
        return Ok(None);
    };
    let unit = config
        .inputs
        .temperature_unit
        .ok_or_else(|| CliError::usage("the temperature file needs a declared unit"))?;
    parse_temperatures(open(path)?, &config.schema.temperatures, unit)
        .map(Some)
        .map_err(|e| CliError::ingest(path, e))
}

/// Loads the monthly series from an observations file, or builds it from
/// the event and temperature files.
pub(crate) fn load_observations(config: &RunConfig) -> Result<LoadedObservations, CliError> {
    if let Some(path) = &config.inputs.observations {
        let series: Vec<MonthlyObservation> = read_json(path, "observations file")?;
        if series.is_empty() {
            return Err(CliError::input("observations file is empty").at(path));
        }
        return Ok(LoadedObservations {
            series,
            ingest: None,
            temperatures: read_temperatures(config)?,
        });
    }
    let (Some(events_path), Some(temps_path)) = (&config.inputs.events, &config.inputs.temperatures) else {
        return Err(CliError::usage(
            "no input series: give --observations, or both --events and --temperatures",
        ));
    };
    let window = config
        .window
        .as_ref()
        .ok_or_else(|| CliError::usage("raw inputs need a year window (--first-year/--last-year or [window])"))?;
    let temps = read_temperatures(config)?.expect("temperature path checked above");
    let events =
        parse_events(open(events_path)?, &config.schema.events).map_err(|e| CliError::ingest(events_path, e))?;
    let series = aggregate_monthly(&events.records, &temps, window).map_err(|e| CliError::ingest(temps_path, e))?;
    if !events.row_errors.is_empty() {
        eprintln!(
            "warning: {} skipped {} malformed rows",
            events_path.display(),
            events.row_errors.len()
        );
    }
    let ingest = IngestSummary {
        events_parsed: events.records.len(),
        months: series.len(),
        row_errors: events.row_errors.into_iter().map(SkippedRow::from).collect(),
    };
    Ok(LoadedObservations {
        series,
        ingest: Some(ingest),
        temperatures: Some(temps),
    })
}

/// Loads the counterfactual baseline, if the config names one.
pub(crate) fn load_baseline(
    config: &RunConfig,
    temperatures: Option<&[TemperatureRecord]>,
) -> Result<Option<MonthlyBaseline>, CliError> {
    if let Some(path) = &config.inputs.baseline {
        let unit = config
            .inputs
            .baseline_unit
            .ok_or_else(|| CliError::usage("the baseline file needs a declared unit"))?;
        return baseline_from_file(open(path)?, unit)
            .map(Some)
            .map_err(|e| CliError::ingest(path, e));
    }
    match (config.inputs.baseline_years, temperatures) {
        (Some([first, last]), Some(temps)) => {
            let baseline = baseline_from_records(temps, first, last);
            let path = config
                .inputs
                .temperatures
                .as_deref()
                .unwrap_or(Path::new("temperatures"));
            baseline.map(Some).map_err(|e| CliError::ingest(path, e))
        }
        (Some(_), None) => Err(CliError::usage("baseline_years needs a temperature file")),
        (None, _) => Ok(None),
    }
}

pub(crate) fn load_models(config: &RunConfig) -> Result<ModelSet, CliError> {
    let path = config.models_path();
    let entries: Vec<ModelEntry> = read_json(&path, "models file")?;
    ModelSet::from_entries(&entries).map_err(|e| CliError::input(format!("malformed models file: {e}")).at(&path))
}

/// Re-expresses a series in another temperature unit.
pub(crate) fn series_in_unit(series: &[MonthlyObservation], unit: TempUnit) -> Vec<MonthlyObservation> {
    series
        .iter()
        .map(|o| MonthlyObservation {
            mean_temp: o.temperature().to_unit(unit).value,
            temp_unit: unit,
            ..o.clone()
        })
        .collect()
}

pub(crate) fn print_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
