use std::path::PathBuf;

use clap::Args;
use climattr_core::simulate::{
    generate_series, mc_expectation_check, scheme_volatility, AlphaOrientation, McCheck, SyntheticScenario,
    VolatilityReport,
};
use climattr_core::Month;
use serde::{Deserialize, Serialize};

use super::{print_written, read_json};
use crate::config::{CommonArgs, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_float, to_csv, OutputSet};

pub const DEFAULT_SCENARIO: &str = include_str!("../../data/default_scenario.json");

/// Monte Carlo checks pass within this many standard errors.
pub const MC_TOLERANCE_SE: f64 = 4.0;
/// Scheme means agree within this many combined standard errors.
pub const VOLATILITY_TOLERANCE_SE: f64 = 3.0;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scenario JSON [default: the bundled storm-season scenario]
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of simulated years
    #[arg(long)]
    pub years: Option<usize>,
    /// Replicates for the scheme volatility comparison (at least 30)
    #[arg(long, default_value_t = 30)]
    pub replicates: usize,
    /// Monte Carlo samples per monthly expectation check (at least 1000)
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    /// Debug negative control: invert the density ratio, which must fail the checks
    #[arg(long)]
    pub invert_alpha: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonthCheck {
    pub month: Month,
    pub passed: bool,
    #[serde(flatten)]
    pub check: McCheck,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolatilityCheck {
    pub report: VolatilityReport,
    pub means_agree: bool,
    pub ratio_scheme_more_volatile: bool,
}

/// Contents of `oracle.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub passed: bool,
    pub mc_tolerance_se: f64,
    pub volatility_tolerance_se: f64,
    pub mc_checks: Vec<MonthCheck>,
    pub volatility: VolatilityCheck,
}

fn load_scenario(args: &SimulateArgs, config: &RunConfig) -> Result<SyntheticScenario, CliError> {
    let mut scenario: SyntheticScenario = match args.scenario.as_ref().or(config.inputs.scenario.as_ref()) {
        Some(path) => read_json(path, "scenario file")?,
        None => serde_json::from_str(DEFAULT_SCENARIO).expect("bundled scenario parses"),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(years) = args.years {
        scenario.n_years = years;
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Temperature offset for the expectation checks: the warming reached by the
/// end of the scenario, limited to one temperature spread. Far beyond that the
/// ratio estimator's variance grows like `exp(Δ²/σ²)` and the check says nothing.
fn check_offset(scenario: &SyntheticScenario, sigma_t: f64) -> f64 {
    let total = scenario.drift_per_decade * scenario.n_years as f64 / 10.0;
    if total == 0.0 {
        sigma_t
    } else {
        total.clamp(-sigma_t, sigma_t)
    }
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let mut config = RunConfig::resolve(&args.common)?;
    if let Some(p) = &args.scenario {
        config.inputs.scenario = Some(p.clone());
    }
    config.validate()?;
    let scenario = load_scenario(&args, &config)?;
    let orientation = if args.invert_alpha {
        AlphaOrientation::Inverted
    } else {
        AlphaOrientation::CounterfactualOverActual
    };

    let series = generate_series(&scenario)?;
    let models = scenario.true_models();
    let baseline = scenario.baseline();

    let mut mc_checks = Vec::with_capacity(12);
    for (i, (model, month)) in models.iter().zip(&scenario.models).enumerate() {
        let t0 = month.mu_t;
        let t = t0 + check_offset(&scenario, month.sigma_t);
        let seed = scenario.seed.wrapping_add(i as u64 + 1);
        let check = mc_expectation_check(model, t, t0, args.mc_samples, seed, orientation)?;
        mc_checks.push(MonthCheck {
            month: model.month,
            passed: check.within(MC_TOLERANCE_SE),
            check,
        });
    }
    let report = scheme_volatility(&scenario, &models, &baseline, args.replicates, scenario.seed)?;
    let volatility = VolatilityCheck {
        means_agree: report.mean_gap_z.abs() < VOLATILITY_TOLERANCE_SE,
        ratio_scheme_more_volatile: report.scheme_b.sd > report.scheme_a.sd,
        report,
    };
    let passed = mc_checks.iter().all(|c| c.passed) && volatility.means_agree && volatility.ratio_scheme_more_volatile;
    let oracle = OracleReport {
        passed,
        mc_tolerance_se: MC_TOLERANCE_SE,
        volatility_tolerance_se: VOLATILITY_TOLERANCE_SE,
        mc_checks,
        volatility,
    };

    let baseline_rows = Month::all().map(|m| vec![m.number().to_string(), fmt_float(baseline.get(m))]);
    let mut out = OutputSet::new(&config.output.dir);
    out.add_json("scenario.json", &scenario)?;
    out.add_json("series.json", &series)?;
    out.add("baseline.csv", to_csv(&["month", "T0"], baseline_rows)?);
    out.add_json("oracle.json", &oracle)?;
    let written = out.commit()?;

    println!(
        "simulated {} years × 12 months ({}), seed {}",
        scenario.n_years, scenario.temp_unit, scenario.seed
    );
    for c in &oracle.mc_checks {
        println!(
            "month {:>2}: mc {} vs closed form {} (z = {}) {}",
            c.month.number(),
            fmt_float(c.check.mc_mean),
            fmt_float(c.check.closed_form),
            fmt_float(c.check.z_score),
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let v = &oracle.volatility;
    println!(
        "schemes over {}×{} years: A mean {} sd {}, B mean {} sd {}, gap z = {}",
        v.report.replicates,
        v.report.years_per_replicate,
        fmt_float(v.report.scheme_a.mean),
        fmt_float(v.report.scheme_a.sd),
        fmt_float(v.report.scheme_b.mean),
        fmt_float(v.report.scheme_b.sd),
        fmt_float(v.report.mean_gap_z),
    );
    print_written(&written);
    if oracle.passed {
        println!("oracle checks passed");
        Ok(())
    } else {
        let failed = oracle.mc_checks.iter().filter(|c| !c.passed).count();
        Err(CliError::oracle(format!(
            "oracle checks failed: {failed} of 12 expectation checks, means agree: {}, ratio scheme more volatile: {}",
            oracle.volatility.means_agree, oracle.volatility.ratio_scheme_more_volatile
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_is_valid() {
        let s: SyntheticScenario = serde_json::from_str(DEFAULT_SCENARIO).unwrap();
        s.validate().unwrap();
        assert_eq!(s.models.len(), 12);
        assert_eq!(s.n_years, 100);
    }
}
