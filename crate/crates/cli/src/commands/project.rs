use clap::Args;
use climattr_core::attribution::{
    cost_projection, counterfactual_annual, percent_per_degree, CostProjection, ProjectionInputs, SensitivityMode,
    SensitivityReport,
};
use climattr_core::TempUnit;
use serde::{Deserialize, Serialize};

use super::{load_baseline, load_models, load_observations, print_written, series_in_unit};
use crate::config::{parse_unit, CommonArgs, InputArgs, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_float, OutputSet};

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// How monthly sensitivities are combined
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<SensitivityMode>,
    /// Counterfactual annual event count (skips the model-based estimate)
    #[arg(long)]
    pub counterfactual: Option<f64>,
    /// Percent increase in events per °C (skips the model-based estimate)
    #[arg(long)]
    pub percent_per_degree: Option<f64>,
    /// Present warming above the baseline in °C (skips the observation-based estimate)
    #[arg(long, allow_negative_numbers = true)]
    pub warming_now: Option<f64>,
    /// Average cost per event
    #[arg(long)]
    pub avg_cost: Option<f64>,
    /// Warming rate in degrees per decade
    #[arg(long, allow_negative_numbers = true)]
    pub warming_rate: Option<f64>,
    /// Unit of --warming-rate [default: celsius]
    #[arg(long, value_parser = parse_unit)]
    pub rate_unit: Option<TempUnit>,
    /// Years ahead for the projected cost [default: 10]
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<i64>,
}

fn parse_mode(s: &str) -> Result<SensitivityMode, String> {
    s.parse()
}

/// Contents of `projection.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub projection: CostProjection,
    /// Where each input came from: `flag`, `models` or `observations`.
    pub sources: InputSources,
    pub sensitivity: Option<SensitivityReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputSources {
    pub counterfactual_annual: String,
    pub percent_per_degree_c: String,
    pub warming_now_c: String,
}

struct Estimates {
    counterfactual: Option<f64>,
    report: Option<SensitivityReport>,
}

/// Model-based estimates, computed only when some input was not supplied.
fn estimate(config: &RunConfig, mode: SensitivityMode) -> Result<Estimates, CliError> {
    let models = load_models(config)?;
    let has_series = config.inputs.observations.is_some() || config.inputs.events.is_some();
    let loaded = if has_series {
        Some(load_observations(config)?)
    } else {
        None
    };
    let temps = loaded.as_ref().and_then(|l| l.temperatures.as_deref());
    let baseline = load_baseline(config, temps)?.map(|b| b.to_unit(models.unit()));
    let series = loaded.map(|l| series_in_unit(&l.series, models.unit()));
    let counterfactual = baseline
        .as_ref()
        .map(|b| counterfactual_annual(&models.models(), b))
        .transpose()?;
    let report = percent_per_degree(&models, mode, baseline.as_ref(), series.as_deref())?;
    Ok(Estimates {
        counterfactual,
        report: Some(report),
    })
}

pub fn run(args: ProjectArgs) -> Result<(), CliError> {
    let mut config = RunConfig::resolve(&args.common)?;
    config.apply_inputs(&args.inputs);
    let p = &mut config.projection;
    if let Some(m) = args.mode {
        p.mode = m;
    }
    p.counterfactual_annual = args.counterfactual.or(p.counterfactual_annual);
    p.percent_per_degree_c = args.percent_per_degree.or(p.percent_per_degree_c);
    p.warming_now_c = args.warming_now.or(p.warming_now_c);
    p.avg_cost = args.avg_cost.or(p.avg_cost);
    p.warming_rate = args.warming_rate.or(p.warming_rate);
    if let Some(u) = args.rate_unit {
        p.warming_rate_unit = u;
    }
    if let Some(h) = args.horizon {
        p.horizon_years = h;
    }
    config.validate()?;
    let p = &config.projection;
    if p.horizon_years < 0 {
        return Err(CliError::usage(format!(
            "projection horizon must be nonnegative, got {} years",
            p.horizon_years
        )));
    }
    let avg_cost = p
        .avg_cost
        .ok_or_else(|| CliError::usage("missing average cost per event (--avg-cost or projection.avg_cost)"))?;
    let warming_rate = p
        .warming_rate
        .ok_or_else(|| CliError::usage("missing warming rate (--warming-rate or projection.warming_rate)"))?;

    let all_given = p.counterfactual_annual.is_some() && p.percent_per_degree_c.is_some() && p.warming_now_c.is_some();
    let est = if all_given {
        Estimates {
            counterfactual: None,
            report: None,
        }
    } else {
        estimate(&config, p.mode)?
    };
    let from_report = est.report.as_ref();
    let pick = |given: Option<f64>, estimated: Option<f64>, source: &str, name: &str| match (given, estimated) {
        (Some(v), _) => Ok((v, "flag".to_string())),
        (None, Some(v)) => Ok((v, source.to_string())),
        (None, None) => Err(CliError::input(format!("missing sensitivity input: {name}"))),
    };
    let (counterfactual, cf_src) = pick(
        p.counterfactual_annual,
        est.counterfactual,
        "models",
        "counterfactual annual count (needs a baseline)",
    )?;
    let (percent, pct_src) = pick(
        p.percent_per_degree_c,
        from_report.map(|r| r.average_percent_per_degree_c),
        "models",
        "percent per degree",
    )?;
    let (warming, warm_src) = pick(
        p.warming_now_c,
        from_report.and_then(|r| r.warming_above_baseline_c),
        "observations",
        "present warming (needs a baseline and observations)",
    )?;

    let inputs = ProjectionInputs {
        counterfactual_annual: counterfactual,
        percent_per_degree_c: percent,
        warming_now_c: warming,
    };
    let projection = cost_projection(inputs, avg_cost, warming_rate, p.warming_rate_unit, p.horizon_years)?;
    let report = ProjectionReport {
        projection,
        sources: InputSources {
            counterfactual_annual: cf_src,
            percent_per_degree_c: pct_src,
            warming_now_c: warm_src,
        },
        sensitivity: est.report,
    };
    let mut out = OutputSet::new(&config.output.dir);
    out.add_json("projection.json", &report)?;
    let written = out.commit()?;

    let pr = &report.projection;
    println!("counterfactual annual events: {}", fmt_float(pr.counterfactual_annual));
    println!("percent per °C:               {}", fmt_float(pr.percent_per_degree_c));
    println!("warming now (°C):             {}", fmt_float(pr.warming_now_c));
    println!("attributed events now:        {}", fmt_float(pr.attributed_events_now));
    println!(
        "current attributed cost:      {}",
        fmt_float(pr.current_attributed_cost)
    );
    println!(
        "warming in {} years (°C):     {}",
        pr.horizon_years,
        fmt_float(pr.warming_at_horizon_c)
    );
    println!(
        "projected attributed cost:    {}",
        fmt_float(pr.projected_attributed_cost)
    );
    print_written(&written);
    Ok(())
}
