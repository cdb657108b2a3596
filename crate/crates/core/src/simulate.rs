//! Synthetic climates with known parameters, and Monte Carlo checks of the
//! attribution identities.
//!
//! Every `(year, month)` cell draws from its own ChaCha stream keyed by the
//! scenario seed, so a series is reproducible no matter how the cells are
//! scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{self, log_alpha, AttributionError};
use crate::ingest::{MonthlyBaseline, MonthlyObservation};
use crate::month::Month;
use crate::stats::{BivariateParams, ConditionalModel, StatsError};
use crate::units::TempUnit;

#[derive(Debug, Error, PartialEq)]
pub enum SimulateError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
}

/// Generative parameters for one calendar month: `T ~ N(mu_T, sigma_T)` and
/// `N | T ~ N(a + b·T, sigma_cond)`.
///
/// Deserializes from a fitted-models row as well; the extra fields of that
/// schema are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMonth {
    pub month: Month,
    #[serde(rename = "mu_T")]
    pub mu_t: f64,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    pub a: f64,
    pub b: f64,
    pub sigma_cond: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_unit: Option<TempUnit>,
}

impl ScenarioMonth {
    pub fn from_params(month: Month, params: &BivariateParams) -> Self {
        let b = params.rho * params.sigma_n / params.sigma_t;
        ScenarioMonth {
            month,
            mu_t: params.mu_t,
            sigma_t: params.sigma_t,
            a: params.mu_n - b * params.mu_t,
            b,
            sigma_cond: params.sigma_n * (1.0 - params.rho * params.rho).sqrt(),
            temp_unit: None,
        }
    }

    /// The bivariate normal these parameters imply, when both spreads are positive.
    pub fn true_params(&self, n_points: usize) -> Option<BivariateParams> {
        if self.sigma_t <= 0.0 || self.sigma_cond <= 0.0 {
            return None;
        }
        let sigma_n = (self.sigma_cond.powi(2) + (self.b * self.sigma_t).powi(2)).sqrt();
        BivariateParams::new(
            self.a + self.b * self.mu_t,
            self.mu_t,
            sigma_n,
            self.sigma_t,
            self.b * self.sigma_t / sigma_n,
            n_points,
        )
        .ok()
    }

    pub fn model(&self, unit: TempUnit) -> ConditionalModel {
        ConditionalModel {
            month: self.month,
            unit,
            a: self.a,
            b: self.b,
            sigma_cond: self.sigma_cond,
        }
    }
}

/// From `from_year` on, the conditional mean becomes `(a + a_offset) + (b + b_offset)·T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub from_year: i32,
    #[serde(default)]
    pub a_offset: f64,
    #[serde(default)]
    pub b_offset: f64,
}

fn default_start_year() -> i32 {
    1996
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub temp_unit: TempUnit,
    /// Warming of every monthly mean temperature, degrees per decade.
    #[serde(default)]
    pub drift_per_decade: f64,
    pub n_years: usize,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    pub seed: u64,
    #[serde(default)]
    pub avg_cost_per_event: f64,
    #[serde(default)]
    pub regime_shift: Option<RegimeShift>,
    pub models: Vec<ScenarioMonth>,
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |msg: String| Err(SimulateError::InvalidScenario(msg));
        if self.n_years < 1 {
            return bad("n_years must be at least 1".into());
        }
        if !self.drift_per_decade.is_finite() || !self.avg_cost_per_event.is_finite() || self.avg_cost_per_event < 0.0 {
            return bad("drift must be finite and the event cost nonnegative".into());
        }
        let mut seen = [false; 12];
        for m in &self.models {
            if std::mem::replace(&mut seen[m.month.index()], true) {
                return bad(format!("month {} listed twice", m.month));
            }
            let finite = [m.mu_t, m.sigma_t, m.a, m.b, m.sigma_cond]
                .iter()
                .all(|v| v.is_finite());
            if !finite || m.sigma_t < 0.0 || m.sigma_cond < 0.0 {
                return bad(format!(
                    "month {}: parameters must be finite with nonnegative spreads",
                    m.month
                ));
            }
            if let Some(u) = m.temp_unit {
                if u != self.temp_unit {
                    return bad(format!(
                        "month {} is in {u}, scenario is in {}",
                        m.month, self.temp_unit
                    ));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return bad(format!("month {} missing", i + 1));
        }
        Ok(())
    }

    fn month(&self, month: Month) -> &ScenarioMonth {
        self.models
            .iter()
            .find(|m| m.month == month)
            .expect("validated scenario")
    }

    /// The true conditional models in calendar order.
    pub fn true_models(&self) -> Vec<ConditionalModel> {
        Month::all().map(|m| self.month(m).model(self.temp_unit)).collect()
    }

    /// Undrifted monthly mean temperatures, the natural counterfactual for
    /// a scenario.
    pub fn baseline(&self) -> MonthlyBaseline {
        MonthlyBaseline {
            unit: self.temp_unit,
            t0: std::array::from_fn(|i| self.month(Month::from_index(i).expect("index < 12")).mu_t),
        }
    }

    pub fn with_seed(&self, seed: u64) -> SyntheticScenario {
        SyntheticScenario { seed, ..self.clone() }
    }
}

fn cell_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one observation per `(year, month)` of the scenario.
///
/// Counts are rounded to the nearest integer and floored at zero. A zero
/// spread skips sampling and uses the mean directly.
pub fn generate_series(scenario: &SyntheticScenario) -> Result<Vec<MonthlyObservation>, SimulateError> {
    scenario.validate()?;
    let mut out = Vec::with_capacity(scenario.n_years * 12);
    for year_index in 0..scenario.n_years {
        let year = scenario.start_year + year_index as i32;
        for month in Month::all() {
            let params = scenario.month(month);
            let mut rng = cell_rng(scenario.seed, (year_index * 12 + month.index()) as u64);
            let z_t: f64 = rng.sample(StandardNormal);
            let z_n: f64 = rng.sample(StandardNormal);

            let elapsed_years = year_index as f64 + month.index() as f64 / 12.0;
            let mean_t = params.mu_t + scenario.drift_per_decade * elapsed_years / 10.0;
            let t = if params.sigma_t > 0.0 {
                mean_t + params.sigma_t * z_t
            } else {
                mean_t
            };

            let (mut a, mut b) = (params.a, params.b);
            if let Some(shift) = scenario.regime_shift.filter(|s| year >= s.from_year) {
                a += shift.a_offset;
                b += shift.b_offset;
            }
            let mean_n = a + b * t;
            let n = if params.sigma_cond > 0.0 {
                mean_n + params.sigma_cond * z_n
            } else {
                mean_n
            };
            let count = n.round().max(0.0) as u64;
            out.push(MonthlyObservation {
                year,
                month,
                count,
                mean_temp: t,
                temp_unit: scenario.temp_unit,
                total_cost: count as f64 * scenario.avg_cost_per_event,
            });
        }
    }
    Ok(out)
}

/// Which density ratio the Monte Carlo check uses. `Inverted` is the
/// negative control `P(N|T) / P(N|T0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaOrientation {
    CounterfactualOverActual,
    Inverted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub t: f64,
    pub t0: f64,
    pub n_samples: usize,
    pub orientation: AlphaOrientation,
    pub mc_mean: f64,
    pub closed_form: f64,
    pub std_error: f64,
    /// `(mc_mean − closed_form) / std_error`; zero when both sides vanish.
    pub z_score: f64,
}

impl McCheck {
    pub fn within(&self, std_errors: f64) -> bool {
        self.z_score.abs() <= std_errors
    }
}

/// Monte Carlo estimate of `E[N·(1 − α) | T]` with `N ~ P(N|T)` (continuous,
/// unrounded), against the closed form `b·(T − T0)`.
pub fn mc_expectation_check(
    model: &ConditionalModel,
    t: f64,
    t0: f64,
    n_samples: usize,
    seed: u64,
    orientation: AlphaOrientation,
) -> Result<McCheck, SimulateError> {
    if n_samples < 1000 {
        return Err(SimulateError::TooFew {
            what: "samples",
            needed: 1000,
            got: n_samples,
        });
    }
    if model.sigma_cond <= 0.0 {
        return Err(StatsError::DegenerateModel.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_n = model.mean_at(t);
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for k in 0..n_samples {
        let z: f64 = rng.sample(StandardNormal);
        let n = mean_n + model.sigma_cond * z;
        let log_ratio = log_alpha(model, n, t, t0)?;
        let alpha = match orientation {
            AlphaOrientation::CounterfactualOverActual => log_ratio.exp(),
            AlphaOrientation::Inverted => (-log_ratio).exp(),
        };
        let value = n * (1.0 - alpha);
        // Welford update.
        let delta = value - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (value - mean);
    }
    let sd = (m2 / (n_samples - 1) as f64).sqrt();
    let std_error = sd / (n_samples as f64).sqrt();
    let closed_form = model.b * (t - t0);
    let gap = mean - closed_form;
    let z_score = if gap == 0.0 {
        0.0
    } else if std_error > 0.0 {
        gap / std_error
    } else {
        f64::INFINITY.copysign(gap)
    };
    Ok(McCheck {
        t,
        t0,
        n_samples,
        orientation,
        mc_mean: mean,
        closed_form,
        std_error,
        z_score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    fn of(values: &[f64]) -> MeanSd {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd, n }
    }

    pub fn std_error(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityReport {
    pub replicates: usize,
    pub years_per_replicate: usize,
    /// Annual Scheme A totals pooled over every simulated year.
    pub scheme_a: MeanSd,
    /// Annual Scheme B totals pooled over every simulated year.
    pub scheme_b: MeanSd,
    /// `sqrt(se_A² + se_B²)`.
    pub combined_std_error: f64,
    /// `(mean_A − mean_B) / combined_std_error`.
    pub mean_gap_z: f64,
    /// Count of months whose density ratio saturated.
    pub saturated_months: usize,
}

/// Replays the scenario `n_replicates` times and compares the spread of
/// annual attributed totals under Schemes A and B.
pub fn scheme_volatility(
    scenario: &SyntheticScenario,
    models: &[ConditionalModel],
    baseline: &MonthlyBaseline,
    n_replicates: usize,
    seed: u64,
) -> Result<VolatilityReport, SimulateError> {
    if n_replicates < 30 {
        return Err(SimulateError::TooFew {
            what: "replicates",
            needed: 30,
            got: n_replicates,
        });
    }
    scenario.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut annual_a = Vec::with_capacity(n_replicates * scenario.n_years);
    let mut annual_b = Vec::with_capacity(n_replicates * scenario.n_years);
    let mut saturated_months = 0;
    for _ in 0..n_replicates {
        let replicate = scenario.with_seed(seeds.random());
        let series = generate_series(&replicate)?;
        let table = attribution::attribute_series(&series, models, baseline, attribution::DEFAULT_SCHEME_WEIGHT)?;
        for year in &table.annual {
            annual_a.push(year.delta_e);
            annual_b.push(year.attributed_b);
            saturated_months += year.saturated_months;
        }
    }
    let scheme_a = MeanSd::of(&annual_a);
    let scheme_b = MeanSd::of(&annual_b);
    let combined_std_error = scheme_a.std_error().hypot(scheme_b.std_error());
    let gap = scheme_a.mean - scheme_b.mean;
    Ok(VolatilityReport {
        replicates: n_replicates,
        years_per_replicate: scenario.n_years,
        scheme_a,
        scheme_b,
        combined_std_error,
        mean_gap_z: if combined_std_error > 0.0 {
            gap / combined_std_error
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(gap)
        },
        saturated_months,
    })
}
