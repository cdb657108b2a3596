use clap::Args;
use climattr_core::attribution::{percent_per_degree, SensitivityReport};
use climattr_core::stats::{
    diagnose, fit_months, yearly_linear_fit, yearly_points, FitDiagnostics, YearlyFit, YearlyPoint,
};
use serde::{Deserialize, Serialize};

use super::{load_baseline, load_observations, print_written, series_in_unit, IngestSummary};
use crate::config::{CommonArgs, InputArgs, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_float, OutputSet};

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Standardized residual beyond which a year is flagged as an outlier
    #[arg(long)]
    pub outlier_threshold: Option<f64>,
}

/// Contents of `diagnostics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub diagnostics: FitDiagnostics,
    /// Absent when there are fewer than three complete years.
    pub yearly_fit: Option<YearlyFit>,
    pub yearly: Vec<YearlyPoint>,
    pub sensitivity: SensitivityReport,
    pub ingest: Option<IngestSummary>,
}

pub fn run(args: FitArgs) -> Result<(), CliError> {
    let mut config = RunConfig::resolve(&args.common)?;
    config.apply_inputs(&args.inputs);
    if let Some(k) = args.outlier_threshold {
        config.diagnostics.outlier_threshold = k;
    }
    config.validate()?;

    let loaded = load_observations(&config)?;
    let models = fit_months(&loaded.series)?;
    let diagnostics = diagnose(&models, &loaded.series, config.diagnostics.outlier_threshold)?;
    let yearly = yearly_points(&loaded.series);
    let yearly_fit = if yearly.len() >= 3 {
        Some(yearly_linear_fit(&yearly, models.unit())?)
    } else {
        None
    };
    let baseline = load_baseline(&config, loaded.temperatures.as_deref())?.map(|b| b.to_unit(models.unit()));
    let series = series_in_unit(&loaded.series, models.unit());
    let sensitivity = percent_per_degree(
        &models,
        config.projection.mode,
        baseline.as_ref(),
        baseline.as_ref().map(|_| series.as_slice()),
    )?;

    let report = FitReport {
        diagnostics,
        yearly_fit,
        yearly,
        sensitivity,
        ingest: loaded.ingest,
    };
    let mut out = OutputSet::new(&config.output.dir);
    out.add_json("models.json", &models.to_entries())?;
    out.add_json("diagnostics.json", &report)?;
    out.add_json("observations.json", &loaded.series)?;
    let written = out.commit()?;

    println!(
        "fitted 12 months from {} observations ({})",
        loaded.series.len(),
        models.unit()
    );
    println!(
        "sensitivity ({}): {} %/°C",
        report.sensitivity.mode,
        fmt_float(report.sensitivity.average_percent_per_degree_c)
    );
    println!(
        "yearly SD fraction: {}",
        fmt_float(report.diagnostics.yearly_sd_fraction)
    );
    if let Some(fit) = &report.yearly_fit {
        println!("yearly linear fit: {} %/°C", fmt_float(fit.percent_per_degree_c));
    }
    print_written(&written);
    Ok(())
}
