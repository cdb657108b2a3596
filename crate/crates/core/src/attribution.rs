//! Attribution of observed event counts to warming.
//!
//! * Scheme A charges the model-expected change `δE = E[N|T] − E[N|T0]`,
//!   which for the linear-mean conditional model is `b·(T − T0)`.
//! * Scheme B splits the realized count `N = N·α + N·(1 − α)` with
//!   `α = P(N|T0) / P(N|T)`. The split is exact for every `N`, and
//!   `E[N·(1 − α) | T] = δE`, so the two schemes agree on average.
//! * Scheme C is a convex blend of the two.
//!
//! `α` is the counterfactual density over the actual one. That is the reverse
//! of the usual excess-fraction ratio and is what makes the expectation
//! identity hold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{MonthlyBaseline, MonthlyObservation};
use crate::month::Month;
use crate::stats::{self, ConditionalModel, ModelSet, StatsError};
use crate::units::{convert_unit, Quantity, TempUnit, Temperature};

/// Log density ratios above this are reported as saturated instead of
/// being exponentiated.
pub const ALPHA_LOG_LIMIT: f64 = 700.0;

pub const DEFAULT_SCHEME_WEIGHT: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("temperature unit mismatch: expected {expected}, found {found}")]
    UnitMismatch { expected: TempUnit, found: TempUnit },
    #[error("scheme weight {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error("projection horizon must be nonnegative, got {0} years")]
    NegativeHorizon(i64),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn check_unit(expected: TempUnit, found: TempUnit) -> Result<(), AttributionError> {
    if expected == found {
        Ok(())
    } else {
        Err(AttributionError::UnitMismatch { expected, found })
    }
}

/// Scheme A: expected extra events at `t` relative to `t0`.
pub fn expected_extra(model: &ConditionalModel, t: Temperature, t0: Temperature) -> Result<f64, AttributionError> {
    check_unit(model.unit, t.unit)?;
    check_unit(model.unit, t0.unit)?;
    Ok(model.b * (t.value - t0.value))
}

/// Sensitivity variant of [`expected_extra`] that integrates only over
/// non-negative counts, `∫₀^∞ n·(P(n|T) − P(n|T0)) dn`, by composite Simpson.
///
/// The main pipeline never uses this; it shows how much of the closed-form
/// shift comes from the unphysical negative tail.
pub fn expected_extra_truncated(
    model: &ConditionalModel,
    t: Temperature,
    t0: Temperature,
) -> Result<f64, AttributionError> {
    check_unit(model.unit, t.unit)?;
    check_unit(model.unit, t0.unit)?;
    if model.sigma_cond <= 0.0 {
        return Err(StatsError::DegenerateModel.into());
    }
    let partial = |mean: f64| partial_expectation(mean, model.sigma_cond);
    Ok(partial(model.mean_at(t.value)) - partial(model.mean_at(t0.value)))
}

/// `∫₀^∞ n·φ((n − mean)/sd)/sd dn`, with the range cut at ±12 sd.
fn partial_expectation(mean: f64, sd: f64) -> f64 {
    const STEPS: usize = 4_000;
    let lo = (mean - 12.0 * sd).max(0.0);
    let hi = mean + 12.0 * sd;
    if hi <= 0.0 {
        return 0.0;
    }
    let h = (hi - lo) / STEPS as f64;
    let f = |n: f64| n * stats::gaussian_pdf(n, mean, sd);
    let mut acc = f(lo) + f(hi);
    for i in 1..STEPS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// `ln P(N|T0) − ln P(N|T)` on raw values in the model's unit.
pub fn log_alpha(model: &ConditionalModel, n: f64, t: f64, t0: f64) -> Result<f64, StatsError> {
    if model.sigma_cond <= 0.0 {
        return Err(StatsError::DegenerateModel);
    }
    let mean = model.mean_at(t);
    let mean0 = model.mean_at(t0);
    // ((N − μ)² − (N − μ0)²) / 2σ², factored to stay exact at T = T0.
    let var = model.sigma_cond * model.sigma_cond;
    Ok((mean0 - mean) * (2.0 * n - mean - mean0) / (2.0 * var))
}

/// The density ratio `α`, or a saturation marker when it would overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alpha {
    Ratio { value: f64 },
    Saturated { log_ratio: f64 },
}

impl Alpha {
    pub fn from_log(log_ratio: f64) -> Alpha {
        if log_ratio > ALPHA_LOG_LIMIT {
            Alpha::Saturated { log_ratio }
        } else {
            Alpha::Ratio { value: log_ratio.exp() }
        }
    }

    pub fn ratio(self) -> Option<f64> {
        match self {
            Alpha::Ratio { value } => Some(value),
            Alpha::Saturated { .. } => None,
        }
    }

    pub fn is_saturated(self) -> bool {
        matches!(self, Alpha::Saturated { .. })
    }
}

/// Scheme B weight `α = P(N|T0) / P(N|T)`.
pub fn attribution_alpha(
    model: &ConditionalModel,
    n: f64,
    t: Temperature,
    t0: Temperature,
) -> Result<Alpha, AttributionError> {
    check_unit(model.unit, t.unit)?;
    check_unit(model.unit, t0.unit)?;
    Ok(Alpha::from_log(log_alpha(model, n, t.value, t0.value)?))
}

/// Splits `n` into `(natural, attributed) = (n·α, n·(1 − α))` such that
/// `natural + attributed == n` in floating point.
///
/// The attributed share is rounded first and the natural share recovered by
/// subtraction; by Sterbenz's lemma that subtraction is exact whenever
/// `α ≤ 2`, and for integral counts it is exact for any `α` whose natural
/// share stays below 2^53.
pub fn scheme_b_split(n: f64, alpha: f64) -> (f64, f64) {
    let natural = n * alpha;
    let attributed = n - natural;
    let natural = n - attributed;
    if natural + attributed == n {
        return (natural, attributed);
    }
    // Remaining cases (large α with fractional n): nudge the attributed share
    // by a few ulps until the pair closes.
    let mut attributed = attributed;
    for _ in 0..8 {
        let natural = n - attributed;
        let sum = natural + attributed;
        if sum == n {
            return (natural, attributed);
        }
        attributed = if sum > n {
            attributed.next_down()
        } else {
            attributed.next_up()
        };
    }
    (n - attributed, attributed)
}

/// Scheme C: `weight·δE + (1 − weight)·attributed_B`.
pub fn scheme_c_blend(delta_e: f64, attributed_b: f64, weight: f64) -> Result<f64, AttributionError> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(AttributionError::InvalidWeight(weight));
    }
    Ok(weight * delta_e + (1.0 - weight) * attributed_b)
}

fn complete_models(models: &[ConditionalModel], unit: TempUnit) -> Result<[&ConditionalModel; 12], AttributionError> {
    let ordered = stats::by_month(models)?;
    check_unit(unit, ordered[0].unit)?;
    Ok(ordered)
}

/// Expected annual count with every month at its baseline temperature:
/// `Σ_i (a_i + b_i·T0_i)`.
pub fn counterfactual_annual(models: &[ConditionalModel], baseline: &MonthlyBaseline) -> Result<f64, AttributionError> {
    let ordered = complete_models(models, baseline.unit)?;
    Ok(ordered.iter().map(|m| m.mean_at(baseline.get(m.month))).sum())
}

/// How the per-degree sensitivity is summarized over months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitivityMode {
    /// Unweighted mean of the monthly `100·b_i/μ_N,i`.
    MeanOfMonthly,
    /// Mean of the monthly percentages weighted by mean count, i.e. `100·Σb_i/Σμ_N,i`.
    CountWeighted,
    /// Observed versus counterfactual annual count, divided by the mean warming.
    BaselineComparison,
}

impl std::fmt::Display for SensitivityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SensitivityMode::MeanOfMonthly => "mean-of-monthly",
            SensitivityMode::CountWeighted => "count-weighted",
            SensitivityMode::BaselineComparison => "baseline-comparison",
        })
    }
}

impl std::str::FromStr for SensitivityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-of-monthly" => Ok(SensitivityMode::MeanOfMonthly),
            "count-weighted" => Ok(SensitivityMode::CountWeighted),
            "baseline-comparison" => Ok(SensitivityMode::BaselineComparison),
            other => Err(format!("unknown sensitivity mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthSensitivity {
    pub month: Month,
    /// `None` when the month's mean count is zero.
    pub percent_per_degree_c: Option<f64>,
    pub mean_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub mode: SensitivityMode,
    pub per_month: Vec<MonthSensitivity>,
    pub average_percent_per_degree_c: f64,
    /// Months left out of the monthly averages because their mean count is zero.
    pub excluded_months: Vec<Month>,
    pub counterfactual_annual: Option<f64>,
    pub observed_annual: Option<f64>,
    pub percent_increase_vs_baseline: Option<f64>,
    /// Mean of `T_obs − T0` over the observed months, in °C.
    pub warming_above_baseline_c: Option<f64>,
}

pub fn percent_per_degree(
    models: &ModelSet,
    mode: SensitivityMode,
    baseline: Option<&MonthlyBaseline>,
    observed: Option<&[MonthlyObservation]>,
) -> Result<SensitivityReport, AttributionError> {
    let unit = models.unit();
    let per_month: Vec<MonthSensitivity> = models
        .fits()
        .iter()
        .map(|f| {
            let mean_count = f.params.mu_n;
            let percent = (mean_count != 0.0).then(|| {
                convert_unit(
                    100.0 * f.model.b / mean_count,
                    Quantity::PerDegree,
                    unit,
                    TempUnit::Celsius,
                )
            });
            MonthSensitivity {
                month: f.month(),
                percent_per_degree_c: percent,
                mean_count,
            }
        })
        .collect();
    let excluded_months: Vec<Month> = per_month
        .iter()
        .filter(|m| m.percent_per_degree_c.is_none())
        .map(|m| m.month)
        .collect();

    let comparison = match (baseline, observed) {
        (Some(baseline), Some(observed)) => Some(compare_with_baseline(models, baseline, observed)?),
        _ if mode == SensitivityMode::BaselineComparison => {
            return Err(AttributionError::InvalidInput(
                "baseline comparison needs both a baseline and an observed series".into(),
            ))
        }
        _ => None,
    };

    let average = match mode {
        SensitivityMode::MeanOfMonthly => {
            let included: Vec<f64> = per_month.iter().filter_map(|m| m.percent_per_degree_c).collect();
            if included.is_empty() {
                return Err(AttributionError::InvalidInput(
                    "every month has a zero mean count".into(),
                ));
            }
            included.iter().sum::<f64>() / included.len() as f64
        }
        SensitivityMode::CountWeighted => {
            let total: f64 = models.fits().iter().map(|f| f.params.mu_n).sum();
            if total == 0.0 {
                return Err(AttributionError::InvalidInput(
                    "every month has a zero mean count".into(),
                ));
            }
            let slope: f64 = models.fits().iter().map(|f| f.model.b).sum();
            convert_unit(100.0 * slope / total, Quantity::PerDegree, unit, TempUnit::Celsius)
        }
        SensitivityMode::BaselineComparison => {
            let c = comparison.as_ref().expect("checked above");
            if c.warming_c == 0.0 {
                return Err(AttributionError::InvalidInput(
                    "observed temperatures equal the baseline on average; no per-degree rate".into(),
                ));
            }
            c.percent_increase / c.warming_c
        }
    };

    Ok(SensitivityReport {
        mode,
        per_month,
        average_percent_per_degree_c: average,
        excluded_months,
        counterfactual_annual: comparison.as_ref().map(|c| c.counterfactual),
        observed_annual: comparison.as_ref().map(|c| c.observed),
        percent_increase_vs_baseline: comparison.as_ref().map(|c| c.percent_increase),
        warming_above_baseline_c: comparison.as_ref().map(|c| c.warming_c),
    })
}

struct BaselineComparison {
    counterfactual: f64,
    observed: f64,
    percent_increase: f64,
    warming_c: f64,
}

fn compare_with_baseline(
    models: &ModelSet,
    baseline: &MonthlyBaseline,
    observed: &[MonthlyObservation],
) -> Result<BaselineComparison, AttributionError> {
    if observed.is_empty() {
        return Err(AttributionError::InvalidInput("observed series is empty".into()));
    }
    check_unit(models.unit(), baseline.unit)?;
    let counterfactual = counterfactual_annual(&models.models(), baseline)?;
    let mut total = 0.0;
    let mut warming = 0.0;
    for o in observed {
        check_unit(baseline.unit, o.temp_unit)?;
        total += o.count as f64;
        warming += o.mean_temp - baseline.get(o.month);
    }
    let months = observed.len() as f64;
    let observed_annual = total / (months / 12.0);
    let warming_c = convert_unit(warming / months, Quantity::Difference, baseline.unit, TempUnit::Celsius);
    if counterfactual == 0.0 {
        return Err(AttributionError::InvalidInput(
            "counterfactual annual count is zero".into(),
        ));
    }
    Ok(BaselineComparison {
        counterfactual,
        observed: observed_annual,
        percent_increase: 100.0 * (observed_annual - counterfactual) / counterfactual,
        warming_c,
    })
}

/// Per-month attribution under all three schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub year: i32,
    pub month: Month,
    #[serde(rename = "N_obs")]
    pub n_obs: f64,
    #[serde(rename = "T_obs")]
    pub t_obs: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub temp_unit: TempUnit,
    #[serde(rename = "delta_E")]
    pub delta_e: f64,
    /// `None` when the density ratio saturated; the Scheme B columns are then
    /// absent too.
    pub alpha: Option<f64>,
    #[serde(rename = "attributed_B")]
    pub attributed_b: Option<f64>,
    #[serde(rename = "natural_B")]
    pub natural_b: Option<f64>,
    pub blended: Option<f64>,
    /// Scheme A's natural expectation `E[N|T0]`.
    #[serde(rename = "expected_natural_A")]
    pub expected_natural_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualRollup {
    pub year: i32,
    pub months: usize,
    #[serde(rename = "N_obs")]
    pub n_obs: f64,
    #[serde(rename = "delta_E")]
    pub delta_e: f64,
    #[serde(rename = "attributed_B")]
    pub attributed_b: f64,
    #[serde(rename = "natural_B")]
    pub natural_b: f64,
    pub blended: f64,
    #[serde(rename = "expected_natural_A")]
    pub expected_natural_a: f64,
    /// Months whose Scheme B share was dropped from the sums.
    pub saturated_months: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub years: usize,
    pub mean_annual_observed: f64,
    pub mean_annual_delta_e: f64,
    pub mean_annual_attributed_b: f64,
    pub mean_annual_blended: f64,
    pub sd_annual_delta_e: f64,
    pub sd_annual_attributed_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionTable {
    pub scheme_weight: f64,
    pub records: Vec<AttributionRecord>,
    pub annual: Vec<AnnualRollup>,
    pub summary: AttributionSummary,
}

fn attribute_one(
    obs: &MonthlyObservation,
    model: &ConditionalModel,
    t0: f64,
    weight: f64,
) -> Result<AttributionRecord, AttributionError> {
    let n = obs.count as f64;
    let delta_e = model.b * (obs.mean_temp - t0);
    let alpha = Alpha::from_log(log_alpha(model, n, obs.mean_temp, t0)?);
    let (alpha, natural_b, attributed_b, blended) = match alpha.ratio() {
        Some(a) => {
            let (natural, attributed) = scheme_b_split(n, a);
            (
                Some(a),
                Some(natural),
                Some(attributed),
                Some(scheme_c_blend(delta_e, attributed, weight)?),
            )
        }
        None => (None, None, None, None),
    };
    Ok(AttributionRecord {
        year: obs.year,
        month: obs.month,
        n_obs: n,
        t_obs: obs.mean_temp,
        t0,
        temp_unit: obs.temp_unit,
        delta_e,
        alpha,
        attributed_b,
        natural_b,
        blended,
        expected_natural_a: model.mean_at(t0),
    })
}

/// Attributes every observation and rolls the results up per calendar year.
pub fn attribute_series(
    series: &[MonthlyObservation],
    models: &[ConditionalModel],
    baseline: &MonthlyBaseline,
    weight: f64,
) -> Result<AttributionTable, AttributionError> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(AttributionError::InvalidWeight(weight));
    }
    let ordered = complete_models(models, baseline.unit)?;
    let mut sorted: Vec<&MonthlyObservation> = series.iter().collect();
    sorted.sort_by_key(|o| (o.year, o.month));

    let mut records = Vec::with_capacity(sorted.len());
    for obs in sorted {
        check_unit(baseline.unit, obs.temp_unit)?;
        records.push(attribute_one(
            obs,
            ordered[obs.month.index()],
            baseline.get(obs.month),
            weight,
        )?);
    }

    let annual = annual_rollups(&records);
    let summary = summarize(&annual);
    Ok(AttributionTable {
        scheme_weight: weight,
        records,
        annual,
        summary,
    })
}

fn annual_rollups(records: &[AttributionRecord]) -> Vec<AnnualRollup> {
    let mut years: BTreeMap<i32, AnnualRollup> = BTreeMap::new();
    for r in records {
        let entry = years.entry(r.year).or_insert_with(|| AnnualRollup {
            year: r.year,
            months: 0,
            n_obs: 0.0,
            delta_e: 0.0,
            attributed_b: 0.0,
            natural_b: 0.0,
            blended: 0.0,
            expected_natural_a: 0.0,
            saturated_months: 0,
        });
        entry.months += 1;
        entry.n_obs += r.n_obs;
        entry.delta_e += r.delta_e;
        entry.expected_natural_a += r.expected_natural_a;
        match (r.attributed_b, r.natural_b, r.blended) {
            (Some(attributed), Some(natural), Some(blended)) => {
                entry.attributed_b += attributed;
                entry.natural_b += natural;
                entry.blended += blended;
            }
            _ => entry.saturated_months += 1,
        }
    }
    years.into_values().collect()
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let sd = if n > 1.0 {
        (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

pub fn summarize(annual: &[AnnualRollup]) -> AttributionSummary {
    let (observed, _) = mean_sd(annual.iter().map(|r| r.n_obs));
    let (delta_e, sd_delta_e) = mean_sd(annual.iter().map(|r| r.delta_e));
    let (attributed, sd_attributed) = mean_sd(annual.iter().map(|r| r.attributed_b));
    let (blended, _) = mean_sd(annual.iter().map(|r| r.blended));
    AttributionSummary {
        years: annual.len(),
        mean_annual_observed: observed,
        mean_annual_delta_e: delta_e,
        mean_annual_attributed_b: attributed,
        mean_annual_blended: blended,
        sd_annual_delta_e: sd_delta_e,
        sd_annual_attributed_b: sd_attributed,
    }
}

/// The three numbers a cost projection is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInputs {
    pub counterfactual_annual: f64,
    pub percent_per_degree_c: f64,
    /// Present warming above the baseline, °C.
    pub warming_now_c: f64,
}

impl ProjectionInputs {
    pub fn from_report(report: &SensitivityReport) -> Result<Self, AttributionError> {
        match (report.counterfactual_annual, report.warming_above_baseline_c) {
            (Some(counterfactual_annual), Some(warming_now_c)) => Ok(ProjectionInputs {
                counterfactual_annual,
                percent_per_degree_c: report.average_percent_per_degree_c,
                warming_now_c,
            }),
            _ => Err(AttributionError::InvalidInput(
                "sensitivity report lacks a baseline comparison (counterfactual count and warming)".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProjection {
    pub avg_cost_per_event: f64,
    pub warming_rate_per_decade_c: f64,
    pub horizon_years: i64,
    pub counterfactual_annual: f64,
    pub percent_per_degree_c: f64,
    pub warming_now_c: f64,
    pub warming_at_horizon_c: f64,
    pub attributed_events_now: f64,
    pub attributed_events_at_horizon: f64,
    pub current_attributed_cost: f64,
    pub projected_attributed_cost: f64,
}

/// Annual cost attributable to warming, now and after `horizon_years` more
/// years at `warming_rate` degrees per decade. Costs are nominal.
pub fn cost_projection(
    inputs: ProjectionInputs,
    avg_cost: f64,
    warming_rate: f64,
    rate_unit: TempUnit,
    horizon_years: i64,
) -> Result<CostProjection, AttributionError> {
    if horizon_years < 0 {
        return Err(AttributionError::NegativeHorizon(horizon_years));
    }
    if !avg_cost.is_finite() || avg_cost < 0.0 {
        return Err(AttributionError::InvalidInput(format!(
            "average cost must be nonnegative, got {avg_cost}"
        )));
    }
    let rate_c = convert_unit(warming_rate, Quantity::Difference, rate_unit, TempUnit::Celsius);
    let warming_later = inputs.warming_now_c + rate_c * horizon_years as f64 / 10.0;
    let events_per_degree = inputs.counterfactual_annual * inputs.percent_per_degree_c / 100.0;
    let now = events_per_degree * inputs.warming_now_c;
    let later = events_per_degree * warming_later;
    Ok(CostProjection {
        avg_cost_per_event: avg_cost,
        warming_rate_per_decade_c: rate_c,
        horizon_years,
        counterfactual_annual: inputs.counterfactual_annual,
        percent_per_degree_c: inputs.percent_per_degree_c,
        warming_now_c: inputs.warming_now_c,
        warming_at_horizon_c: warming_later,
        attributed_events_now: now,
        attributed_events_at_horizon: later,
        current_attributed_cost: now * avg_cost,
        projected_attributed_cost: later * avg_cost,
    })
}
