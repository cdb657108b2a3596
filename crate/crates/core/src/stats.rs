//! Per-month bivariate Gaussian fits of (count, temperature) and the
//! conditional model `P(N|T)` they imply.
//!
//! For a bivariate normal with parameters `(μ_N, μ_T, σ_N, σ_T, ρ)`, the
//! conditional law of `N` given `T` is normal with
//!
//! ```text
//! mean  a + b·T,   b = ρ·σ_N/σ_T,   a = μ_N − b·μ_T
//! sd    σ_N·√(1 − ρ²)
//! ```
//!
//! so `a` and `b` coincide with the least-squares regression of `N` on `T`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::MonthlyObservation;
use crate::month::Month;
use crate::units::{convert_unit, Quantity, TempUnit};

/// `|ρ|` at or above `1 - DEGENERATE_RHO_TOL` is treated as perfectly collinear.
pub const DEGENERATE_RHO_TOL: f64 = 1e-12;

/// Relative tolerance when checking a serialized model's derived fields. Loose
/// enough for files written at nine significant digits.
const CONSISTENCY_TOL: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("conditional model has zero spread")]
    DegenerateModel,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no model for month {0}")]
    MissingMonth(Month),
    #[error("month {0} appears more than once")]
    DuplicateMonth(Month),
    #[error("temperature unit mismatch: expected {expected}, found {found}")]
    UnitMismatch { expected: TempUnit, found: TempUnit },
    #[error("month {month}: {source}")]
    InMonth {
        month: Month,
        #[source]
        source: Box<StatsError>,
    },
}

impl StatsError {
    fn in_month(self, month: Month) -> Self {
        StatsError::InMonth {
            month,
            source: Box::new(self),
        }
    }

    /// The calendar month the error refers to, if any.
    pub fn month(&self) -> Option<Month> {
        match self {
            StatsError::InMonth { month, .. } | StatsError::MissingMonth(month) | StatsError::DuplicateMonth(month) => {
                Some(*month)
            }
            _ => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            StatsError::DegenerateFit(_) | StatsError::DegenerateModel => true,
            StatsError::InMonth { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

/// Standard normal density scaled to mean `mean` and spread `sd`.
pub fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateParams {
    pub mu_n: f64,
    pub mu_t: f64,
    pub sigma_n: f64,
    pub sigma_t: f64,
    pub rho: f64,
    pub n_points: usize,
}

impl BivariateParams {
    pub fn new(
        mu_n: f64,
        mu_t: f64,
        sigma_n: f64,
        sigma_t: f64,
        rho: f64,
        n_points: usize,
    ) -> Result<Self, StatsError> {
        let p = BivariateParams {
            mu_n,
            mu_t,
            sigma_n,
            sigma_t,
            rho,
            n_points,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let finite = [self.mu_n, self.mu_t, self.sigma_n, self.sigma_t, self.rho]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(StatsError::InvalidParams("non-finite parameter".into()));
        }
        if self.sigma_n <= 0.0 || self.sigma_t <= 0.0 {
            return Err(StatsError::InvalidParams(format!(
                "standard deviations must be positive (sigma_N={}, sigma_T={})",
                self.sigma_n, self.sigma_t
            )));
        }
        if self.rho.abs() >= 1.0 - DEGENERATE_RHO_TOL {
            return Err(StatsError::InvalidParams(format!(
                "|rho| = {} is not below 1",
                self.rho.abs()
            )));
        }
        Ok(())
    }

    /// Re-expresses the temperature side in another unit. `ρ` and the count
    /// moments are unit-free.
    pub fn to_unit(&self, from: TempUnit, to: TempUnit) -> BivariateParams {
        BivariateParams {
            mu_t: convert_unit(self.mu_t, Quantity::Absolute, from, to),
            sigma_t: convert_unit(self.sigma_t, Quantity::Difference, from, to),
            ..*self
        }
    }
}

/// Maximum-likelihood bivariate normal fit to `(N, T)` pairs.
///
/// The MLE is the sample moments with divisor `n`, not `n − 1`.
pub fn fit_bivariate(points: &[(f64, f64)]) -> Result<BivariateParams, StatsError> {
    let n = points.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: n });
    }
    if points.iter().any(|(c, t)| !c.is_finite() || !t.is_finite()) {
        return Err(StatsError::InvalidParams("non-finite data point".into()));
    }
    let all_equal = |f: fn(&(f64, f64)) -> f64| points.iter().all(|p| f(p) == f(&points[0]));
    if all_equal(|p| p.0) {
        return Err(StatsError::DegenerateFit("all counts identical".into()));
    }
    if all_equal(|p| p.1) {
        return Err(StatsError::DegenerateFit("all temperatures identical".into()));
    }

    let nf = n as f64;
    let mu_n = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mu_t = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut snn, mut stt, mut snt) = (0.0, 0.0, 0.0);
    for &(c, t) in points {
        let dn = c - mu_n;
        let dt = t - mu_t;
        snn += dn * dn;
        stt += dt * dt;
        snt += dn * dt;
    }
    if snn <= 0.0 || stt <= 0.0 {
        return Err(StatsError::DegenerateFit("zero variance".into()));
    }
    let rho = snt / (snn * stt).sqrt();
    if rho.abs() >= 1.0 - DEGENERATE_RHO_TOL {
        return Err(StatsError::DegenerateFit(format!(
            "counts and temperatures are collinear (rho = {rho})"
        )));
    }
    Ok(BivariateParams {
        mu_n,
        mu_t,
        sigma_n: (snn / nf).sqrt(),
        sigma_t: (stt / nf).sqrt(),
        rho,
        n_points: n,
    })
}

/// Joint density of `(N, T)` under the bivariate normal.
pub fn bivariate_pdf(params: &BivariateParams, n: f64, t: f64) -> f64 {
    let one_minus_rho2 = 1.0 - params.rho * params.rho;
    let zn = (n - params.mu_n) / params.sigma_n;
    let zt = (t - params.mu_t) / params.sigma_t;
    let quad = zn * zn + zt * zt - 2.0 * params.rho * zn * zt;
    let norm = 2.0 * PI * params.sigma_n * params.sigma_t * one_minus_rho2.sqrt();
    (-quad / (2.0 * one_minus_rho2)).exp() / norm
}

/// `P(N|T)` for one calendar month: normal with mean `a + b·T` and
/// spread `sigma_cond`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalModel {
    pub month: Month,
    pub unit: TempUnit,
    pub a: f64,
    /// Events per month per degree of `unit`.
    pub b: f64,
    pub sigma_cond: f64,
}

impl ConditionalModel {
    pub fn new(month: Month, unit: TempUnit, a: f64, b: f64, sigma_cond: f64) -> Result<Self, StatsError> {
        if !(a.is_finite() && b.is_finite() && sigma_cond.is_finite()) || sigma_cond < 0.0 {
            return Err(StatsError::InvalidParams(format!(
                "conditional model needs finite a, b and sigma_cond >= 0 (got {a}, {b}, {sigma_cond})"
            )));
        }
        Ok(ConditionalModel {
            month,
            unit,
            a,
            b,
            sigma_cond,
        })
    }

    /// `E[N|T] = a + b·T`.
    pub fn mean_at(&self, t: f64) -> f64 {
        self.a + self.b * t
    }

    pub fn to_unit(&self, unit: TempUnit) -> ConditionalModel {
        // a + b·T is invariant: b scales as a per-degree rate and a absorbs the offset.
        let b = convert_unit(self.b, Quantity::PerDegree, self.unit, unit);
        let zero_here = convert_unit(0.0, Quantity::Absolute, unit, self.unit);
        ConditionalModel {
            unit,
            a: self.mean_at(zero_here),
            b,
            ..*self
        }
    }
}

pub fn conditional_from_bivariate(params: &BivariateParams, month: Month, unit: TempUnit) -> ConditionalModel {
    let b = params.rho * (params.sigma_n / params.sigma_t);
    ConditionalModel {
        month,
        unit,
        a: params.mu_n - params.rho * params.mu_t * (params.sigma_n / params.sigma_t),
        b,
        sigma_cond: params.sigma_n * (1.0 - params.rho * params.rho).sqrt(),
    }
}

pub fn conditional_pdf(model: &ConditionalModel, n: f64, t: f64) -> Result<f64, StatsError> {
    if model.sigma_cond <= 0.0 {
        return Err(StatsError::DegenerateModel);
    }
    Ok(gaussian_pdf(n, model.mean_at(t), model.sigma_cond))
}

/// Fitted parameters for one calendar month, with the derived conditional model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyFit {
    pub params: BivariateParams,
    pub model: ConditionalModel,
}

impl MonthlyFit {
    pub fn new(month: Month, unit: TempUnit, params: BivariateParams) -> Self {
        MonthlyFit {
            params,
            model: conditional_from_bivariate(&params, month, unit),
        }
    }

    pub fn month(&self) -> Month {
        self.model.month
    }
}

/// One row of the fitted-models file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub month: Month,
    #[serde(rename = "mu_N")]
    pub mu_n: f64,
    #[serde(rename = "mu_T")]
    pub mu_t: f64,
    #[serde(rename = "sigma_N")]
    pub sigma_n: f64,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub sigma_cond: f64,
    pub n_points: usize,
    pub temp_unit: TempUnit,
}

/// A complete set of twelve monthly fits sharing one temperature unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    unit: TempUnit,
    fits: Vec<MonthlyFit>,
}

impl ModelSet {
    pub fn new(unit: TempUnit, fits: Vec<MonthlyFit>) -> Result<Self, StatsError> {
        let mut by_month: BTreeMap<Month, MonthlyFit> = BTreeMap::new();
        for fit in fits {
            if fit.model.unit != unit {
                return Err(StatsError::UnitMismatch {
                    expected: unit,
                    found: fit.model.unit,
                });
            }
            if by_month.insert(fit.month(), fit).is_some() {
                return Err(StatsError::DuplicateMonth(fit.month()));
            }
        }
        if let Some(missing) = Month::all().find(|m| !by_month.contains_key(m)) {
            return Err(StatsError::MissingMonth(missing));
        }
        Ok(ModelSet {
            unit,
            fits: by_month.into_values().collect(),
        })
    }

    pub fn unit(&self) -> TempUnit {
        self.unit
    }

    pub fn fit(&self, month: Month) -> &MonthlyFit {
        &self.fits[month.index()]
    }

    /// Fits in calendar order.
    pub fn fits(&self) -> &[MonthlyFit] {
        &self.fits
    }

    pub fn models(&self) -> Vec<ConditionalModel> {
        self.fits.iter().map(|f| f.model).collect()
    }

    pub fn to_unit(&self, unit: TempUnit) -> ModelSet {
        let fits = self
            .fits
            .iter()
            .map(|f| MonthlyFit::new(f.month(), unit, f.params.to_unit(self.unit, unit)))
            .collect();
        ModelSet { unit, fits }
    }

    pub fn to_entries(&self) -> Vec<ModelEntry> {
        self.fits
            .iter()
            .map(|f| ModelEntry {
                month: f.month(),
                mu_n: f.params.mu_n,
                mu_t: f.params.mu_t,
                sigma_n: f.params.sigma_n,
                sigma_t: f.params.sigma_t,
                rho: f.params.rho,
                a: f.model.a,
                b: f.model.b,
                sigma_cond: f.model.sigma_cond,
                n_points: f.params.n_points,
                temp_unit: self.unit,
            })
            .collect()
    }

    /// Rebuilds a set from file rows, checking that the stored `a`, `b` and
    /// `sigma_cond` agree with the stored bivariate parameters.
    pub fn from_entries(entries: &[ModelEntry]) -> Result<Self, StatsError> {
        let unit = entries
            .first()
            .ok_or(StatsError::MissingMonth(Month::new(1).expect("valid")))?
            .temp_unit;
        let mut fits = Vec::with_capacity(entries.len());
        for e in entries {
            let params = BivariateParams::new(e.mu_n, e.mu_t, e.sigma_n, e.sigma_t, e.rho, e.n_points)
                .map_err(|err| err.in_month(e.month))?;
            let fit = MonthlyFit::new(e.month, e.temp_unit, params);
            // `a` is a difference of two terms, so it is compared on the scale of those terms.
            let slope_scale = params.sigma_n / params.sigma_t;
            for (name, stored, derived, scale) in [
                (
                    "a",
                    e.a,
                    fit.model.a,
                    params.mu_n.abs() + (fit.model.b * params.mu_t).abs() + params.sigma_n,
                ),
                ("b", e.b, fit.model.b, slope_scale),
                ("sigma_cond", e.sigma_cond, fit.model.sigma_cond, params.sigma_n),
            ] {
                if (stored - derived).abs() > CONSISTENCY_TOL * scale {
                    return Err(StatsError::InvalidParams(format!(
                        "{name} = {stored} does not match the bivariate parameters (expected {derived})"
                    ))
                    .in_month(e.month));
                }
            }
            fits.push(fit);
        }
        ModelSet::new(unit, fits)
    }
}

/// Fits all twelve calendar months of an observation series.
pub fn fit_months(observations: &[MonthlyObservation]) -> Result<ModelSet, StatsError> {
    let unit = observations
        .first()
        .map(|o| o.temp_unit)
        .ok_or(StatsError::InsufficientData { needed: 3, got: 0 })?;
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 12];
    for o in observations {
        if o.temp_unit != unit {
            return Err(StatsError::UnitMismatch {
                expected: unit,
                found: o.temp_unit,
            });
        }
        points[o.month.index()].push((o.count as f64, o.mean_temp));
    }
    let fits = Month::all()
        .map(|m| {
            fit_bivariate(&points[m.index()])
                .map(|p| MonthlyFit::new(m, unit, p))
                .map_err(|e| e.in_month(m))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ModelSet::new(unit, fits)
}

/// Typical year-to-year spread of the annual count relative to its mean:
/// `Σ σ_N(i)·√(1−ρ_i²) / Σ μ_N(i)`.
pub fn yearly_sd_fraction(models: &ModelSet) -> Result<f64, StatsError> {
    let spread: f64 = models.fits().iter().map(|f| f.model.sigma_cond).sum();
    let mean: f64 = models.fits().iter().map(|f| f.params.mu_n).sum();
    if mean <= 0.0 {
        return Err(StatsError::DegenerateFit("mean annual count is not positive".into()));
    }
    Ok(spread / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    /// Residual standard deviation with `n − 2` degrees of freedom.
    pub residual_sd: f64,
    pub n_points: usize,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of `y` on `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<LinearFit, StatsError> {
    let n = points.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx <= 0.0 || points.iter().all(|p| p.0 == points[0].0) {
        return Err(StatsError::DegenerateFit("no variance in the regressor".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        mean_x,
        mean_y,
        residual_sd: (ssr / (nf - 2.0)).sqrt(),
        n_points: n,
    })
}

/// Yearly summary point: mean monthly count and mean temperature of one year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearlyPoint {
    pub year: i32,
    pub mean_count: f64,
    pub mean_temp: f64,
}

/// Collapses a monthly series into yearly points, keeping complete years only.
pub fn yearly_points(observations: &[MonthlyObservation]) -> Vec<YearlyPoint> {
    let mut years: BTreeMap<i32, Vec<&MonthlyObservation>> = BTreeMap::new();
    for o in observations {
        years.entry(o.year).or_default().push(o);
    }
    years
        .into_iter()
        .filter(|(_, months)| months.len() == 12)
        .map(|(year, months)| YearlyPoint {
            year,
            mean_count: months.iter().map(|o| o.count as f64).sum::<f64>() / 12.0,
            mean_temp: months.iter().map(|o| o.mean_temp).sum::<f64>() / 12.0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearlyFit {
    pub line: LinearFit,
    pub unit: TempUnit,
    /// `100·slope / mean count`, per °C.
    pub percent_per_degree_c: f64,
}

/// Straight-line fit of yearly mean count against yearly mean temperature.
pub fn yearly_linear_fit(yearly: &[YearlyPoint], unit: TempUnit) -> Result<YearlyFit, StatsError> {
    let points: Vec<(f64, f64)> = yearly.iter().map(|p| (p.mean_temp, p.mean_count)).collect();
    let line = least_squares(&points)?;
    if line.mean_y == 0.0 {
        return Err(StatsError::DegenerateFit("mean count is zero".into()));
    }
    let percent = 100.0 * line.slope / line.mean_y;
    Ok(YearlyFit {
        line,
        unit,
        percent_per_degree_c: convert_unit(percent, Quantity::PerDegree, unit, TempUnit::Celsius),
    })
}

pub(crate) fn by_month(models: &[ConditionalModel]) -> Result<[&ConditionalModel; 12], StatsError> {
    let mut slots: [Option<&ConditionalModel>; 12] = [None; 12];
    let unit = models.first().map(|m| m.unit);
    for m in models {
        if Some(m.unit) != unit {
            return Err(StatsError::UnitMismatch {
                expected: unit.expect("non-empty"),
                found: m.unit,
            });
        }
        if slots[m.month.index()].replace(m).is_some() {
            return Err(StatsError::DuplicateMonth(m.month));
        }
    }
    for (i, slot) in slots.iter().enumerate() {
        if slot.is_none() {
            return Err(StatsError::MissingMonth(Month::from_index(i).expect("index < 12")));
        }
    }
    Ok(slots.map(|s| s.expect("checked")))
}

/// Sum of monthly expectations at the monthly temperatures minus twelve times
/// the month-averaged model evaluated at the mean temperature.
///
/// Equals `12·cov(b_i, T_i)` over months; zero when every month shares one slope.
pub fn jensen_gap(models: &[ConditionalModel], temps: &[f64; 12]) -> Result<f64, StatsError> {
    let models = by_month(models)?;
    let monthly: f64 = models.iter().zip(temps).map(|(m, &t)| m.mean_at(t)).sum();
    let a_bar = models.iter().map(|m| m.a).sum::<f64>() / 12.0;
    let b_bar = models.iter().map(|m| m.b).sum::<f64>() / 12.0;
    let t_bar = temps.iter().sum::<f64>() / 12.0;
    Ok(monthly - 12.0 * (a_bar + b_bar * t_bar))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierYear {
    pub year: i32,
    pub standardized_residual: f64,
}

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 2.0;

/// Flags years whose residual from the yearly linear fit exceeds
/// `threshold` residual standard deviations.
pub fn regime_outlier_scan(yearly: &[YearlyPoint], threshold: f64) -> Result<Vec<OutlierYear>, StatsError> {
    if yearly.len() < 5 {
        return Err(StatsError::InsufficientData {
            needed: 5,
            got: yearly.len(),
        });
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(StatsError::InvalidParams(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let points: Vec<(f64, f64)> = yearly.iter().map(|p| (p.mean_temp, p.mean_count)).collect();
    let line = least_squares(&points)?;
    let scale = line.mean_y.abs().max(1.0);
    if line.residual_sd <= 1e-12 * scale {
        return Ok(Vec::new());
    }
    Ok(yearly
        .iter()
        .filter_map(|p| {
            let z = (p.mean_count - line.predict(p.mean_temp)) / line.residual_sd;
            (z.abs() > threshold).then_some(OutlierYear {
                year: p.year,
                standardized_residual: z,
            })
        })
        .collect())
}

/// Yearly-scale diagnostics accompanying a set of monthly fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub yearly_sd_fraction: f64,
    /// Mean of the per-year Jensen gaps.
    pub jensen_gap: f64,
    pub jensen_gaps: Vec<(i32, f64)>,
    pub outlier_years: Vec<OutlierYear>,
}

pub fn diagnose(
    models: &ModelSet,
    observations: &[MonthlyObservation],
    outlier_threshold: f64,
) -> Result<FitDiagnostics, StatsError> {
    let conditionals = models.models();
    let mut years: BTreeMap<i32, [Option<f64>; 12]> = BTreeMap::new();
    for o in observations {
        years.entry(o.year).or_insert([None; 12])[o.month.index()] = Some(o.mean_temp);
    }
    let mut jensen_gaps = Vec::new();
    for (year, temps) in years {
        if temps.iter().all(Option::is_some) {
            jensen_gaps.push((year, jensen_gap(&conditionals, &temps.map(|t| t.expect("complete")))?));
        }
    }
    let jensen_mean = if jensen_gaps.is_empty() {
        0.0
    } else {
        jensen_gaps.iter().map(|g| g.1).sum::<f64>() / jensen_gaps.len() as f64
    };
    let yearly = yearly_points(observations);
    let outlier_years = if yearly.len() >= 5 {
        regime_outlier_scan(&yearly, outlier_threshold)?
    } else {
        Vec::new()
    };
    Ok(FitDiagnostics {
        yearly_sd_fraction: yearly_sd_fraction(models)?,
        jensen_gap: jensen_mean,
        jensen_gaps,
        outlier_years,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn month(m: u32) -> Month {
        Month::new(m).unwrap()
    }

    #[test]
    fn fit_square_of_points() {
        let p = fit_bivariate(&[(0.0, -1.0), (0.0, 1.0), (2.0, -1.0), (2.0, 1.0)]).unwrap();
        assert_eq!((p.mu_n, p.mu_t, p.sigma_n, p.sigma_t, p.rho), (1.0, 0.0, 1.0, 1.0, 0.0));
        assert_eq!(p.n_points, 4);
    }

    #[test]
    fn fit_uses_population_divisor() {
        // counts 1,2,3: mean 2, mean squared deviation 2/3.
        let p = fit_bivariate(&[(1.0, 0.0), (2.0, 1.0), (3.0, 0.0)]).unwrap();
        assert!((p.sigma_n - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_bivariate(&[(0.0, 0.0), (2.0, 1.0), (4.0, 2.0)]),
            Err(StatsError::DegenerateFit(_))
        ));
        assert_eq!(
            fit_bivariate(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(StatsError::InsufficientData { needed: 3, got: 2 })
        );
        assert!(matches!(
            fit_bivariate(&[(3.0, 0.0), (3.0, 1.0), (3.0, 2.0)]),
            Err(StatsError::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_bivariate(&[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]),
            Err(StatsError::DegenerateFit(_))
        ));
    }

    #[test]
    fn conditional_from_worked_params() {
        let p = BivariateParams::new(10.0, 5.0, 2.0, 1.0, 0.5, 10).unwrap();
        let m = conditional_from_bivariate(&p, month(1), TempUnit::Celsius);
        assert!((m.b - 1.0).abs() < 1e-15);
        assert!((m.a - 5.0).abs() < 1e-15);
        assert!((m.sigma_cond - 2.0 * 0.75f64.sqrt()).abs() < 1e-15);
        assert!((m.sigma_cond - 1.7320).abs() < 1e-4);
    }

    #[test]
    fn independence_and_near_collinear_limits() {
        let p = BivariateParams::new(7.0, 3.0, 2.0, 4.0, 0.0, 10).unwrap();
        let m = conditional_from_bivariate(&p, month(2), TempUnit::Celsius);
        assert_eq!((m.a, m.b, m.sigma_cond), (7.0, 0.0, 2.0));

        let p = BivariateParams::new(0.0, 0.0, 1.0, 1.0, 1.0 - 1e-9, 10).unwrap();
        let m = conditional_from_bivariate(&p, month(2), TempUnit::Celsius);
        assert!((m.b - 1.0).abs() < 1e-8);
        assert!(m.sigma_cond < 1e-4);
    }

    #[test]
    fn params_validation() {
        assert!(BivariateParams::new(0.0, 0.0, 0.0, 1.0, 0.0, 3).is_err());
        assert!(BivariateParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 3).is_err());
        assert!(BivariateParams::new(0.0, 0.0, 1.0, 1.0, -1.0, 3).is_err());
        assert!(BivariateParams::new(0.0, f64::NAN, 1.0, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn conditional_density_values() {
        let m = ConditionalModel::new(month(1), TempUnit::Celsius, 0.0, 1.0, 1.0).unwrap();
        assert!((conditional_pdf(&m, 0.0, 0.0).unwrap() - 0.398942).abs() < 1e-6);

        let m = ConditionalModel::new(month(1), TempUnit::Celsius, 3.0, 0.5, 2.5).unwrap();
        let mean = m.mean_at(4.0);
        let peak = conditional_pdf(&m, mean, 4.0).unwrap();
        assert!((peak - 1.0 / (2.5 * (2.0 * PI).sqrt())).abs() < 1e-15);
        for side in [-1.0, 1.0] {
            let at_sd = conditional_pdf(&m, mean + side * 2.5, 4.0).unwrap();
            assert!((at_sd - peak * (-0.5f64).exp()).abs() < 1e-15);
        }

        let flat = ConditionalModel::new(month(1), TempUnit::Celsius, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(conditional_pdf(&flat, 0.0, 0.0), Err(StatsError::DegenerateModel));
    }

    #[test]
    fn bivariate_density_special_points() {
        let p = BivariateParams::new(4.0, -2.0, 1.5, 0.5, 0.0, 5).unwrap();
        let product = gaussian_pdf(3.0, 4.0, 1.5) * gaussian_pdf(-1.0, -2.0, 0.5);
        assert!((bivariate_pdf(&p, 3.0, -1.0) - product).abs() < 1e-15);

        let p = BivariateParams::new(4.0, -2.0, 1.5, 0.5, 0.6, 5).unwrap();
        let peak = 1.0 / (2.0 * PI * 1.5 * 0.5 * (1.0f64 - 0.36).sqrt());
        assert!((bivariate_pdf(&p, 4.0, -2.0) - peak).abs() < 1e-15);
    }

    #[test]
    fn sd_fraction_constructed() {
        let fits = Month::all()
            .map(|m| {
                MonthlyFit::new(
                    m,
                    TempUnit::Celsius,
                    BivariateParams::new(100.0, 10.0, 29.0, 1.0, 0.0, 19).unwrap(),
                )
            })
            .collect();
        let set = ModelSet::new(TempUnit::Celsius, fits).unwrap();
        assert!((yearly_sd_fraction(&set).unwrap() - 0.29).abs() < 1e-15);

        let fits = Month::all()
            .map(|m| {
                MonthlyFit::new(
                    m,
                    TempUnit::Celsius,
                    BivariateParams::new(100.0, 10.0, 29.0, 1.0, 1.0 - 1e-11, 19).unwrap(),
                )
            })
            .collect();
        let set = ModelSet::new(TempUnit::Celsius, fits).unwrap();
        assert!(yearly_sd_fraction(&set).unwrap() < 1e-4);
    }

    #[test]
    fn model_set_requires_every_month() {
        let fits: Vec<MonthlyFit> = Month::all()
            .take(11)
            .map(|m| {
                MonthlyFit::new(
                    m,
                    TempUnit::Celsius,
                    BivariateParams::new(1.0, 1.0, 1.0, 1.0, 0.1, 3).unwrap(),
                )
            })
            .collect();
        assert_eq!(
            ModelSet::new(TempUnit::Celsius, fits.clone()),
            Err(StatsError::MissingMonth(month(12)))
        );
        let mut dup = fits;
        dup.push(dup[0]);
        assert_eq!(
            ModelSet::new(TempUnit::Celsius, dup),
            Err(StatsError::DuplicateMonth(month(1)))
        );
    }

    #[test]
    fn model_entries_round_trip_and_consistency() {
        let fits = Month::all()
            .map(|m| {
                MonthlyFit::new(
                    m,
                    TempUnit::Fahrenheit,
                    BivariateParams::new(10.0 + m.number() as f64, 40.0, 3.0, 2.0, 0.3, 19).unwrap(),
                )
            })
            .collect();
        let set = ModelSet::new(TempUnit::Fahrenheit, fits).unwrap();
        let entries = set.to_entries();
        assert_eq!(ModelSet::from_entries(&entries).unwrap(), set);

        let mut bad = entries;
        bad[3].b += 0.5;
        let err = ModelSet::from_entries(&bad).unwrap_err();
        assert_eq!(err.month(), Some(month(4)));
    }

    #[test]
    fn entries_rounded_to_nine_digits_still_load() {
        let round = |x: f64| format!("{x:.8e}").parse::<f64>().unwrap();
        // Large b·mu_T against a small mu_N makes `a` a heavy cancellation.
        let fits = Month::all()
            .map(|m| {
                let params = BivariateParams::new(197.7, 74.4, 50.5, 1.4, 0.6135773641, 100).unwrap();
                MonthlyFit::new(m, TempUnit::Fahrenheit, params)
            })
            .collect();
        let set = ModelSet::new(TempUnit::Fahrenheit, fits).unwrap();
        let rounded: Vec<ModelEntry> = set
            .to_entries()
            .into_iter()
            .map(|e| ModelEntry {
                mu_n: round(e.mu_n),
                mu_t: round(e.mu_t),
                sigma_n: round(e.sigma_n),
                sigma_t: round(e.sigma_t),
                rho: round(e.rho),
                a: round(e.a),
                b: round(e.b),
                sigma_cond: round(e.sigma_cond),
                ..e
            })
            .collect();
        ModelSet::from_entries(&rounded).unwrap();
    }

    #[test]
    fn exact_line_fit() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let fit = least_squares(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!(fit.intercept.abs() < 1e-14);
        assert!(fit.residual_sd < 1e-14);

        let flat: Vec<(f64, f64)> = (0..6).map(|i| (3.0, i as f64)).collect();
        assert!(matches!(least_squares(&flat), Err(StatsError::DegenerateFit(_))));
    }

    #[test]
    fn yearly_fit_percent_per_degree() {
        // N = 2T with T in °F: slope 2 per °F; mean count 2·mean T.
        let yearly: Vec<YearlyPoint> = (0..5)
            .map(|i| YearlyPoint {
                year: 2000 + i,
                mean_count: 2.0 * (50.0 + i as f64),
                mean_temp: 50.0 + i as f64,
            })
            .collect();
        let fit = yearly_linear_fit(&yearly, TempUnit::Fahrenheit).unwrap();
        assert!((fit.line.slope - 2.0).abs() < 1e-12);
        let expected = 1.8 * 100.0 * 2.0 / 104.0;
        assert!((fit.percent_per_degree_c - expected).abs() < 1e-12);
    }

    fn models_with_slopes(slopes: [f64; 12]) -> Vec<ConditionalModel> {
        Month::all()
            .map(|m| {
                ConditionalModel::new(m, TempUnit::Celsius, 10.0 + m.number() as f64, slopes[m.index()], 1.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn jensen_gap_vanishes_for_shared_slope() {
        let models = models_with_slopes([1.5; 12]);
        let temps: [f64; 12] = std::array::from_fn(|i| (i as f64 * 0.7).sin() * 10.0);
        assert!(jensen_gap(&models, &temps).unwrap().abs() < 1e-12);
    }

    #[test]
    fn jensen_gap_brute_force_sign() {
        // Slopes increase with temperature: positive covariance.
        let slopes: [f64; 12] = std::array::from_fn(|i| 0.5 + 0.1 * i as f64);
        let temps: [f64; 12] = std::array::from_fn(|i| 2.0 * i as f64);
        let models = models_with_slopes(slopes);
        let gap = jensen_gap(&models, &temps).unwrap();

        let lhs: f64 = models.iter().zip(&temps).map(|(m, t)| m.a + m.b * t).sum();
        let a_bar = models.iter().map(|m| m.a).sum::<f64>() / 12.0;
        let b_bar = slopes.iter().sum::<f64>() / 12.0;
        let t_bar = temps.iter().sum::<f64>() / 12.0;
        let rhs = 12.0 * (a_bar + b_bar * t_bar);
        assert!((gap - (lhs - rhs)).abs() < 1e-12);
        let cov = slopes
            .iter()
            .zip(&temps)
            .map(|(b, t)| (b - b_bar) * (t - t_bar))
            .sum::<f64>()
            / 12.0;
        assert!(gap > 0.0 && cov > 0.0);
        assert!((gap - 12.0 * cov).abs() < 1e-10);

        let reversed: [f64; 12] = std::array::from_fn(|i| temps[11 - i]);
        assert!(jensen_gap(&models, &reversed).unwrap() < 0.0);
    }

    #[test]
    fn jensen_gap_at_monthly_means() {
        let params: Vec<BivariateParams> = (0..12)
            .map(|i| {
                BivariateParams::new(
                    20.0 + i as f64,
                    5.0 + 2.0 * i as f64,
                    4.0,
                    1.0 + 0.1 * i as f64,
                    0.05 * i as f64,
                    19,
                )
                .unwrap()
            })
            .collect();
        let models: Vec<ConditionalModel> = params
            .iter()
            .enumerate()
            .map(|(i, p)| conditional_from_bivariate(p, Month::from_index(i).unwrap(), TempUnit::Celsius))
            .collect();
        let temps: [f64; 12] = std::array::from_fn(|i| params[i].mu_t);
        let sum_a: f64 = models.iter().map(|m| m.a).sum();
        let sum_b_mu: f64 = models.iter().zip(&params).map(|(m, p)| m.b * p.mu_t).sum();
        let a_bar = sum_a / 12.0;
        let b_bar = models.iter().map(|m| m.b).sum::<f64>() / 12.0;
        let mu_bar = temps.iter().sum::<f64>() / 12.0;
        let closed = sum_a + sum_b_mu - 12.0 * (a_bar + b_bar * mu_bar);
        assert!((jensen_gap(&models, &temps).unwrap() - closed).abs() < 1e-10);
    }

    #[test]
    fn jensen_gap_needs_all_months() {
        let mut models = models_with_slopes([1.0; 12]);
        models.pop();
        assert_eq!(
            jensen_gap(&models, &[0.0; 12]),
            Err(StatsError::MissingMonth(month(12)))
        );
    }

    fn line_years(n: usize) -> Vec<YearlyPoint> {
        (0..n)
            .map(|i| YearlyPoint {
                year: 1996 + i as i32,
                mean_count: 60.0 + 1.5 * (i as f64 * 0.37).cos(),
                mean_temp: 52.0 + (i as f64 * 0.37).cos(),
            })
            .collect()
    }

    #[test]
    fn outlier_scan() {
        assert!(regime_outlier_scan(&line_years(19), 2.0).unwrap().is_empty());

        // Small scatter around the line, then one year pushed far off it.
        let mut years = line_years(19);
        for (i, y) in years.iter_mut().enumerate() {
            y.mean_count += if i % 2 == 0 { 0.1 } else { -0.1 };
        }
        years[17].mean_count += 3.0;
        let flagged = regime_outlier_scan(&years, 2.0).unwrap();
        assert_eq!(flagged.iter().map(|o| o.year).collect::<Vec<_>>(), vec![2013]);
        assert!(regime_outlier_scan(&years, 100.0).unwrap().is_empty());

        assert!(matches!(
            regime_outlier_scan(&line_years(4), 2.0),
            Err(StatsError::InsufficientData { .. })
        ));
        assert!(regime_outlier_scan(&line_years(6), 0.0).is_err());
    }

    #[test]
    fn model_unit_conversion_preserves_mean() {
        let m = ConditionalModel::new(month(6), TempUnit::Fahrenheit, -40.0, 2.0, 3.0).unwrap();
        let c = m.to_unit(TempUnit::Celsius);
        let t_f = 77.0;
        let t_c = convert_unit(t_f, Quantity::Absolute, TempUnit::Fahrenheit, TempUnit::Celsius);
        assert!((m.mean_at(t_f) - c.mean_at(t_c)).abs() < 1e-12);
        assert!((c.b - 3.6).abs() < 1e-12);
    }
}
