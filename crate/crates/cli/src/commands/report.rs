use std::fmt::Write as _;
use std::path::Path;

use clap::Args;
use climattr_core::attribution::AttributionTable;
use climattr_core::stats::ModelEntry;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::fit::FitReport;
use super::project::ProjectionReport;
use super::simulate::OracleReport;
use super::{print_written, read_json};
use crate::config::{CommonArgs, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_float, fmt_opt, OutputSet};

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Contents of `report.json`: whichever stage outputs were found.
#[derive(Debug, Serialize)]
pub struct Report {
    pub stages: Vec<String>,
    pub models: Option<Vec<ModelEntry>>,
    pub fit: Option<FitReport>,
    pub attribution: Option<AttributionTable>,
    pub projection: Option<ProjectionReport>,
    pub oracle: Option<OracleReport>,
}

fn read_optional<T: DeserializeOwned>(dir: &Path, name: &str, what: &str) -> Result<Option<T>, CliError> {
    let path = dir.join(name);
    if path.exists() {
        read_json(&path, what).map(Some)
    } else {
        Ok(None)
    }
}

fn render(r: &Report) -> String {
    let mut s = String::new();
    if let Some(models) = &r.models {
        let _ = writeln!(s, "== fit ==");
        let _ = writeln!(s, "month  mu_N  mu_T  rho  a  b  sigma_cond  ({})", models[0].temp_unit);
        for m in models {
            let _ = writeln!(
                s,
                "{:>2}  {}  {}  {}  {}  {}  {}",
                m.month.number(),
                fmt_float(m.mu_n),
                fmt_float(m.mu_t),
                fmt_float(m.rho),
                fmt_float(m.a),
                fmt_float(m.b),
                fmt_float(m.sigma_cond)
            );
        }
    }
    if let Some(fit) = &r.fit {
        let d = &fit.diagnostics;
        let _ = writeln!(
            s,
            "sensitivity: {} %/°C ({})",
            fmt_float(fit.sensitivity.average_percent_per_degree_c),
            fit.sensitivity.mode
        );
        let _ = writeln!(s, "yearly SD fraction: {}", fmt_float(d.yearly_sd_fraction));
        let _ = writeln!(s, "mean Jensen gap: {}", fmt_float(d.jensen_gap));
        if let Some(y) = &fit.yearly_fit {
            let _ = writeln!(s, "yearly linear fit: {} %/°C", fmt_float(y.percent_per_degree_c));
        }
        let outliers: Vec<String> = d.outlier_years.iter().map(|o| o.year.to_string()).collect();
        let _ = writeln!(
            s,
            "outlier years: {}",
            if outliers.is_empty() {
                "none".into()
            } else {
                outliers.join(", ")
            }
        );
    }
    if let Some(t) = &r.attribution {
        let a = &t.summary;
        let _ = writeln!(s, "== attribution ==");
        let _ = writeln!(s, "years: {}, blend weight {}", a.years, fmt_float(t.scheme_weight));
        let _ = writeln!(s, "mean annual observed: {}", fmt_float(a.mean_annual_observed));
        let _ = writeln!(
            s,
            "scheme A: mean {} sd {}",
            fmt_float(a.mean_annual_delta_e),
            fmt_float(a.sd_annual_delta_e)
        );
        let _ = writeln!(
            s,
            "scheme B: mean {} sd {}",
            fmt_float(a.mean_annual_attributed_b),
            fmt_float(a.sd_annual_attributed_b)
        );
        let _ = writeln!(s, "blend: mean {}", fmt_float(a.mean_annual_blended));
    }
    if let Some(p) = &r.projection {
        let c = &p.projection;
        let _ = writeln!(s, "== projection ==");
        let _ = writeln!(
            s,
            "counterfactual {} events/yr, {} %/°C, warming {} °C",
            fmt_float(c.counterfactual_annual),
            fmt_float(c.percent_per_degree_c),
            fmt_float(c.warming_now_c)
        );
        let _ = writeln!(s, "current attributed cost: {}", fmt_float(c.current_attributed_cost));
        let _ = writeln!(
            s,
            "attributed cost in {} years: {}",
            c.horizon_years,
            fmt_float(c.projected_attributed_cost)
        );
        if let Some(sens) = &p.sensitivity {
            let _ = writeln!(
                s,
                "baseline comparison: {} %",
                fmt_opt(sens.percent_increase_vs_baseline)
            );
        }
    }
    if let Some(o) = &r.oracle {
        let _ = writeln!(s, "== simulation oracles ==");
        let failed = o.mc_checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(s, "expectation checks failed: {failed} of {}", o.mc_checks.len());
        let _ = writeln!(s, "scheme gap z: {}", fmt_float(o.volatility.report.mean_gap_z));
        let _ = writeln!(s, "overall: {}", if o.passed { "pass" } else { "FAIL" });
    }
    s
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    let config = RunConfig::resolve(&args.common)?;
    let dir = &config.output.dir;
    let models: Option<Vec<ModelEntry>> = read_optional(dir, "models.json", "models file")?;
    let fit: Option<FitReport> = read_optional(dir, "diagnostics.json", "diagnostics file")?;
    let attribution: Option<AttributionTable> = read_optional(dir, "attribution.json", "attribution file")?;
    let projection: Option<ProjectionReport> = read_optional(dir, "projection.json", "projection file")?;
    let oracle: Option<OracleReport> = read_optional(dir, "oracle.json", "oracle file")?;
    if models.as_ref().is_some_and(|m| m.is_empty()) {
        return Err(CliError::input("malformed models file: no entries").at(&dir.join("models.json")));
    }

    let mut stages = Vec::new();
    for (name, present) in [
        ("fit", models.is_some() || fit.is_some()),
        ("attribute", attribution.is_some()),
        ("project", projection.is_some()),
        ("simulate", oracle.is_some()),
    ] {
        if present {
            stages.push(name.to_string());
        }
    }
    if stages.is_empty() {
        return Err(CliError::input("no stage outputs found").at(dir));
    }
    let report = Report {
        stages,
        models,
        fit,
        attribution,
        projection,
        oracle,
    };
    let text = render(&report);
    let mut out = OutputSet::new(dir);
    out.add_json("report.json", &report)?;
    out.add("report.txt", text.clone());
    let written = out.commit()?;
    print!("{text}");
    print_written(&written);
    Ok(())
}
