use clap::Args;
use climattr_core::attribution::{attribute_series, AttributionTable};

use super::{load_baseline, load_models, load_observations, print_written, series_in_unit};
use crate::config::{CommonArgs, InputArgs, OutputFormat, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_float, fmt_opt, to_csv, OutputSet};

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Weight of the expected-increase scheme in the blend, in [0, 1]
    #[arg(long)]
    pub weight: Option<f64>,
    /// Which table formats to write
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

const MONTHLY_HEADER: [&str; 13] = [
    "year",
    "month",
    "temp_unit",
    "N_obs",
    "T_obs",
    "T0",
    "delta_E",
    "alpha",
    "attributed_B",
    "natural_B",
    "blended",
    "expected_natural_A",
    "saturated",
];

const ANNUAL_HEADER: [&str; 9] = [
    "year",
    "months",
    "N_obs",
    "delta_E",
    "attributed_B",
    "natural_B",
    "blended",
    "expected_natural_A",
    "saturated_months",
];

fn monthly_csv(table: &AttributionTable) -> Result<String, CliError> {
    let rows = table.records.iter().map(|r| {
        vec![
            r.year.to_string(),
            r.month.to_string(),
            r.temp_unit.to_string(),
            fmt_float(r.n_obs),
            fmt_float(r.t_obs),
            fmt_float(r.t0),
            fmt_float(r.delta_e),
            fmt_opt(r.alpha),
            fmt_opt(r.attributed_b),
            fmt_opt(r.natural_b),
            fmt_opt(r.blended),
            fmt_float(r.expected_natural_a),
            r.alpha.is_none().to_string(),
        ]
    });
    to_csv(&MONTHLY_HEADER, rows)
}

fn annual_csv(table: &AttributionTable) -> Result<String, CliError> {
    let rows = table.annual.iter().map(|y| {
        vec![
            y.year.to_string(),
            y.months.to_string(),
            fmt_float(y.n_obs),
            fmt_float(y.delta_e),
            fmt_float(y.attributed_b),
            fmt_float(y.natural_b),
            fmt_float(y.blended),
            fmt_float(y.expected_natural_a),
            y.saturated_months.to_string(),
        ]
    });
    to_csv(&ANNUAL_HEADER, rows)
}

pub fn run(args: AttributeArgs) -> Result<(), CliError> {
    let mut config = RunConfig::resolve(&args.common)?;
    config.apply_inputs(&args.inputs);
    if let Some(w) = args.weight {
        config.attribution.scheme_weight = w;
    }
    if let Some(f) = args.format {
        config.output.format = f;
    }
    config.validate()?;

    let models = load_models(&config)?;
    let loaded = load_observations(&config)?;
    let baseline = load_baseline(&config, loaded.temperatures.as_deref())?
        .ok_or_else(|| CliError::usage("attribution needs a baseline (--baseline or inputs.baseline_years)"))?
        .to_unit(models.unit());
    let series = series_in_unit(&loaded.series, models.unit());
    let table = attribute_series(&series, &models.models(), &baseline, config.attribution.scheme_weight)?;

    let mut out = OutputSet::new(&config.output.dir);
    if config.output.format != OutputFormat::Csv {
        out.add_json("attribution.json", &table)?;
    }
    if config.output.format != OutputFormat::Json {
        out.add("attribution_monthly.csv", monthly_csv(&table)?);
        out.add("attribution_annual.csv", annual_csv(&table)?);
    }
    let written = out.commit()?;

    let s = &table.summary;
    println!("attributed {} months over {} years", table.records.len(), s.years);
    println!(
        "mean annual attributed: scheme A {} (sd {}), scheme B {} (sd {}), blend {}",
        fmt_float(s.mean_annual_delta_e),
        fmt_float(s.sd_annual_delta_e),
        fmt_float(s.mean_annual_attributed_b),
        fmt_float(s.sd_annual_attributed_b),
        fmt_float(s.mean_annual_blended),
    );
    print_written(&written);
    Ok(())
}
