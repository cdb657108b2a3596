//! The run configuration: one TOML file plus command-line overrides.
//!
//! Relative paths inside the file are resolved against the file's directory;
//! relative paths given as flags are resolved against the working directory.

use std::path::{Path, PathBuf};

use clap::Args;
use climattr_core::attribution::{SensitivityMode, DEFAULT_SCHEME_WEIGHT};
use climattr_core::ingest::{EventSchema, TemperatureSchema, Window};
use climattr_core::stats::DEFAULT_OUTLIER_THRESHOLD;
use climattr_core::TempUnit;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub window: Option<Window>,
    pub schema: Schemas,
    pub attribution: AttributionConfig,
    pub projection: ProjectionConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub events: Option<PathBuf>,
    pub temperatures: Option<PathBuf>,
    pub temperature_unit: Option<TempUnit>,
    /// Aligned monthly observations as written by `fit` or `simulate`.
    pub observations: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub baseline_unit: Option<TempUnit>,
    /// Builds the baseline from the temperature file over these years instead.
    pub baseline_years: Option<[i32; 2]>,
    pub models: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schemas {
    pub events: EventSchema,
    pub temperatures: TemperatureSchema,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub scheme_weight: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            scheme_weight: DEFAULT_SCHEME_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub avg_cost: Option<f64>,
    pub warming_rate: Option<f64>,
    pub warming_rate_unit: TempUnit,
    pub horizon_years: i64,
    pub mode: SensitivityMode,
    pub counterfactual_annual: Option<f64>,
    pub percent_per_degree_c: Option<f64>,
    pub warming_now_c: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            avg_cost: None,
            warming_rate: None,
            warming_rate_unit: TempUnit::Celsius,
            horizon_years: 10,
            mode: SensitivityMode::MeanOfMonthly,
            counterfactual_annual: None,
            percent_per_degree_c: None,
            warming_now_c: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub outlier_threshold: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Applies to tabular outputs; summaries are always JSON.
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: OutputFormat::Both,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Directory receiving the output files [default: out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Input overrides shared by the data-consuming subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// Storm-event CSV
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Monthly temperature CSV
    #[arg(long)]
    pub temperatures: Option<PathBuf>,
    /// Unit of the temperature CSV
    #[arg(long, value_parser = parse_unit)]
    pub temp_unit: Option<TempUnit>,
    /// Aligned monthly observations JSON (replaces --events/--temperatures)
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// First year of the analysis window
    #[arg(long)]
    pub first_year: Option<i32>,
    /// Last year of the analysis window
    #[arg(long)]
    pub last_year: Option<i32>,
    /// Counterfactual baseline CSV with `month,T0` rows
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Unit of the baseline CSV
    #[arg(long, value_parser = parse_unit)]
    pub baseline_unit: Option<TempUnit>,
    /// Fitted models JSON [default: <out-dir>/models.json]
    #[arg(long)]
    pub models: Option<PathBuf>,
}

pub fn parse_unit(s: &str) -> Result<TempUnit, String> {
    s.parse()
}

impl RunConfig {
    /// Reads the config file if one was given, then applies the overrides.
    pub fn resolve(common: &CommonArgs) -> Result<Self, CliError> {
        let mut config = match &common.config {
            Some(path) => Self::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &common.out_dir {
            config.output.dir = dir.clone();
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config: {e}")).at(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let i = &mut self.inputs;
        for p in [
            &mut i.events,
            &mut i.temperatures,
            &mut i.observations,
            &mut i.baseline,
            &mut i.models,
            &mut i.scenario,
        ]
        .into_iter()
        .flatten()
        {
            *p = base.join(&*p);
        }
        self.output.dir = base.join(&self.output.dir);
    }

    pub fn apply_inputs(&mut self, args: &InputArgs) {
        let i = &mut self.inputs;
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut i.events, &args.events);
        set(&mut i.temperatures, &args.temperatures);
        set(&mut i.observations, &args.observations);
        set(&mut i.baseline, &args.baseline);
        set(&mut i.models, &args.models);
        if args.temp_unit.is_some() {
            i.temperature_unit = args.temp_unit;
        }
        if args.baseline_unit.is_some() {
            i.baseline_unit = args.baseline_unit;
        }
        if args.observations.is_some() {
            // An explicit observation file wins over raw inputs from the config.
            i.events = None;
            i.temperatures = None;
        }
        match (args.first_year, args.last_year, &mut self.window) {
            (None, None, _) => {}
            (first, last, Some(w)) => {
                w.first_year = first.unwrap_or(w.first_year);
                w.last_year = last.unwrap_or(w.last_year);
            }
            (first, last, window) => {
                if let (Some(f), Some(l)) = (first, last) {
                    *window = Some(Window::years(f, l));
                }
            }
        }
    }

    /// Checks that every referenced file exists and every temperature input
    /// has a declared unit.
    pub fn validate(&self) -> Result<(), CliError> {
        let i = &self.inputs;
        for path in [
            &i.events,
            &i.temperatures,
            &i.observations,
            &i.baseline,
            &i.models,
            &i.scenario,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(CliError::input("file not found").at(path));
            }
        }
        if i.temperatures.is_some() && i.temperature_unit.is_none() {
            return Err(CliError::usage(
                "the temperature file needs a declared unit (inputs.temperature_unit or --temp-unit)",
            ));
        }
        if i.baseline.is_some() && i.baseline_unit.is_none() {
            return Err(CliError::usage(
                "the baseline file needs a declared unit (inputs.baseline_unit or --baseline-unit)",
            ));
        }
        if !(0.0..=1.0).contains(&self.attribution.scheme_weight) {
            return Err(CliError::usage(format!(
                "scheme weight {} outside [0, 1]",
                self.attribution.scheme_weight
            )));
        }
        Ok(())
    }

    pub fn models_path(&self) -> PathBuf {
        self.inputs
            .models
            .clone()
            .unwrap_or_else(|| self.output.dir.join("models.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[inputs]
events = "data/events.csv"
temperatures = "data/temps.csv"
temperature_unit = "F"

[window]
first_year = 1996
last_year = 2014

[schema.events]
date = "BEGIN_DATE"
cost = "DAMAGE_PROPERTY"
date_formats = ["%m/%d/%Y"]

[schema.events.suffixes]
K = 1e3
M = 1e6

[projection]
avg_cost = 57800
warming_rate = 0.19
mode = "count-weighted"

[output]
dir = "results"
format = "csv"
"#;

    #[test]
    fn parses_and_rebases_paths() {
        let mut config: RunConfig = toml::from_str(SAMPLE).unwrap();
        config.rebase(Path::new("/proj"));
        assert_eq!(
            config.inputs.events.as_deref(),
            Some(Path::new("/proj/data/events.csv"))
        );
        assert_eq!(config.inputs.temperature_unit, Some(TempUnit::Fahrenheit));
        assert_eq!(config.schema.events.suffixes["M"], 1e6);
        assert_eq!(config.schema.temperatures.year, "YEAR");
        assert_eq!(config.projection.mode, SensitivityMode::CountWeighted);
        assert_eq!(config.projection.horizon_years, 10);
        assert_eq!(config.output.dir, Path::new("/proj/results"));
        assert_eq!(config.output.format, OutputFormat::Csv);
        assert_eq!(config.attribution.scheme_weight, 0.5);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("[inputs]\nevnts = \"x\"").is_err());
    }

    #[test]
    fn flags_override_window_and_inputs() {
        let mut config: RunConfig = toml::from_str(SAMPLE).unwrap();
        config.apply_inputs(&InputArgs {
            observations: Some("obs.json".into()),
            last_year: Some(2000),
            ..Default::default()
        });
        assert!(config.inputs.events.is_none());
        assert_eq!(config.window.as_ref().unwrap().last_year, 2000);
        assert_eq!(config.window.as_ref().unwrap().first_year, 1996);
    }

    #[test]
    fn missing_unit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let temps = dir.path().join("t.csv");
        std::fs::write(&temps, "YEAR,MONTH,TEMP\n").unwrap();
        let mut config = RunConfig::default();
        config.inputs.temperatures = Some(temps);
        assert_eq!(config.validate().unwrap_err().exit_code, 2);
    }

    #[test]
    fn missing_file_names_path() {
        let mut config = RunConfig::default();
        config.inputs.temperatures = Some("/no/such/temps.csv".into());
        let err = config.validate().unwrap_err();
        assert!(err.message.contains("/no/such/temps.csv"));
        assert_eq!(err.path.as_deref(), Some(Path::new("/no/such/temps.csv")));
    }
}
