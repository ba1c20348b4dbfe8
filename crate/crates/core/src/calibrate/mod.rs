//! Converts per-variable extreme statistics into final p-values and
//! relevance calls.
//!
//! Under the null, twice the sample size times the plug-in CMI follows a
//! chi-squared law, and the minimum chi-squared p-value over many dependent
//! tests follows an exponential law whose rate is fitted from the bulk of
//! (mostly irrelevant) variables. The fitted rate turns each minimum into a
//! final p-value, which Bonferroni-Holm or Benjamini-Hochberg then converts
//! into relevance flags.

pub mod chi2;

pub use chi2::{chi2_survival, Chi2Error};

use serde::Serialize;
use thiserror::Error;

use crate::dataset::VariableWarning;
use crate::scan::VariableScore;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrateError {
    #[error("gamma fit needs at least 10 p-values, got {0}")]
    TooFewValues(usize),
    #[error("gamma fit refused: only {retained} values survive trimming (need 10)")]
    FitRefused { retained: usize },
    #[error("p-values must lie in [0, 1]")]
    InvalidPValue,
    #[error("alpha must lie strictly between 0 and 1")]
    InvalidAlpha,
    #[error(transparent)]
    Chi2(#[from] Chi2Error),
}

/// Fitted exponential null model for minimum p-values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// Rate of the exponential law; the effective number of independent
    /// tests per variable.
    pub gamma: f64,
    /// Values retained by the fit.
    pub n_used: usize,
    /// Presumed-relevant small values excluded from the fit.
    pub n_trimmed_low: usize,
    /// Outlier large values excluded from the fit.
    pub n_trimmed_high: usize,
    /// Weighted squared quantile error of the retained values against the
    /// fitted model, per point.
    pub fit_error: f64,
}

/// A successful fit together with the retained (sorted) values, which feed
/// the report's probability-probability plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaFit {
    pub fit: ExponentialFit,
    pub retained: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GammaConfig {
    /// Significance used in the Bonferroni-style lower-tail exclusion of
    /// presumed-relevant values.
    pub alpha: f64,
    /// Cap on the fitted rate: the total number of tests per variable.
    pub n_tests: Option<u64>,
    pub max_iterations: usize,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig {
            alpha: 0.05,
            n_tests: None,
            max_iterations: 20,
        }
    }
}

/// Minimum chi-squared p-value for one variable: in equal-cardinality mode
/// derived once from the maximum CMI, otherwise the recorded minimum.
pub fn pmin_from_score(score: &VariableScore, n_objects: usize) -> Result<f64, CalibrateError> {
    match score.min_chi2_p {
        Some(p) => Ok(p),
        None => {
            if score.max_cmi <= 0.0 {
                return Ok(1.0);
            }
            Ok(chi2_survival(
                2.0 * n_objects as f64 * score.max_cmi,
                score.best_df,
            )?)
        }
    }
}

/// P(p_min < v) = 1 - exp(-gamma * v), evaluated without cancellation for
/// small arguments.
pub fn exponential_pvalue(p_min: f64, gamma: f64) -> f64 {
    -(-gamma * p_min).exp_m1()
}

/// Robust iterative fit of the exponential rate from observed minimum
/// p-values.
///
/// Each round (a) excludes the presumed-relevant lower tail, values whose
/// model p-value under the current rate falls below alpha over the value
/// count, (b) trims up to T largest values with T chosen to minimize the
/// variance-weighted squared quantile error, and (c) re-estimates the rate
/// as the reciprocal of the retained mean; rounds repeat to a fixed point.
pub fn estimate_gamma(p_mins: &[f64], config: &GammaConfig) -> Result<GammaFit, CalibrateError> {
    if p_mins.len() < 10 {
        return Err(CalibrateError::TooFewValues(p_mins.len()));
    }
    if p_mins.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(CalibrateError::InvalidPValue);
    }
    let mut sorted = p_mins.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len();
    let t_max = 2.max(m / 100);
    let low_threshold = config.alpha / m as f64;

    let mean_all: f64 = sorted.iter().sum::<f64>() / m as f64;
    if mean_all <= 0.0 {
        return Err(CalibrateError::FitRefused { retained: 0 });
    }
    let mut gamma = 1.0 / mean_all;
    let mut prev_state = (usize::MAX, usize::MAX);
    let mut chosen: Option<(usize, usize, f64, f64)> = None;

    for _ in 0..config.max_iterations.max(1) {
        let n_low = sorted
            .iter()
            .take_while(|&&v| exponential_pvalue(v, gamma) < low_threshold)
            .count();
        let rest = &sorted[n_low..];
        if rest.len() < 10 {
            return Err(CalibrateError::FitRefused {
                retained: rest.len(),
            });
        }
        let t_limit = t_max.min(rest.len() - 10);
        let mut best: Option<(usize, f64, f64)> = None;
        for t in 0..=t_limit {
            let retained = &rest[..rest.len() - t];
            let mean = retained.iter().sum::<f64>() / retained.len() as f64;
            if mean <= 0.0 {
                continue;
            }
            let g = 1.0 / mean;
            let err = quantile_fit_error(retained, g);
            if best.is_none_or(|(_, _, e)| err < e) {
                best = Some((t, g, err));
            }
        }
        let (t, g, err) = best.ok_or(CalibrateError::FitRefused { retained: 0 })?;
        gamma = g;
        chosen = Some((n_low, t, g, err));
        if prev_state == (n_low, t) {
            break;
        }
        prev_state = (n_low, t);
    }

    let (n_low, t, mut gamma, fit_error) = chosen.expect("at least one iteration ran");
    if let Some(n_tests) = config.n_tests {
        gamma = gamma.min(n_tests as f64);
    }
    let retained: Vec<f64> = sorted[n_low..sorted.len() - t].to_vec();
    Ok(GammaFit {
        fit: ExponentialFit {
            gamma,
            n_used: retained.len(),
            n_trimmed_low: n_low,
            n_trimmed_high: t,
            fit_error,
        },
        retained,
    })
}

/// Per-point weighted squared error between empirical order statistics and
/// exponential model quantiles; weights are inverse order-statistic
/// variances under the model.
fn quantile_fit_error(sorted: &[f64], gamma: f64) -> f64 {
    let m = sorted.len();
    let mut inv_sq_sum = 0.0;
    let mut total = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let remaining = (m - i) as f64;
        inv_sq_sum += 1.0 / (remaining * remaining);
        let u = (i as f64 + 0.5) / m as f64;
        let q = -(1.0 - u).ln() / gamma;
        // Var of the (i+1)-th order statistic is inv_sq_sum / gamma^2.
        let weight = gamma * gamma / inv_sq_sum;
        total += weight * (v - q) * (v - q);
    }
    total / m as f64
}

/// Step-down Bonferroni-Holm: flags and adjusted p-values in input order.
pub fn holm_select(p_values: &[f64], alpha: f64) -> Result<(Vec<bool>, Vec<f64>), CalibrateError> {
    validate_selection_inputs(p_values, alpha)?;
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let mut adjusted = vec![0.0f64; m];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        let factor = (m - i) as f64;
        running = running.max((factor * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    let flags = adjusted.iter().map(|&a| a <= alpha).collect();
    Ok((flags, adjusted))
}

/// Step-up Benjamini-Hochberg: flags and adjusted p-values in input order.
pub fn bh_select(p_values: &[f64], alpha: f64) -> Result<(Vec<bool>, Vec<f64>), CalibrateError> {
    validate_selection_inputs(p_values, alpha)?;
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let mut adjusted = vec![0.0f64; m];
    let mut running = 1.0f64;
    for (i, &idx) in order.iter().enumerate().rev() {
        let scaled = (m as f64 * p_values[idx] / (i + 1) as f64).min(1.0);
        running = running.min(scaled);
        adjusted[idx] = running;
    }
    let flags = adjusted.iter().map(|&a| a <= alpha).collect();
    Ok((flags, adjusted))
}

fn validate_selection_inputs(p_values: &[f64], alpha: f64) -> Result<(), CalibrateError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CalibrateError::InvalidAlpha);
    }
    if p_values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(CalibrateError::InvalidPValue);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fdr,
    Fwer,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Fdr => write!(f, "fdr"),
            Method::Fwer => write!(f, "fwer"),
        }
    }
}

/// The exponential calibration actually applied: either a successful fit
/// or the conservative fallback rate of one per test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCalibration {
    pub gamma: f64,
    pub fallback: bool,
    pub fit: Option<ExponentialFit>,
    /// Sorted values backing the probability-probability plot.
    #[serde(skip)]
    pub retained: Vec<f64>,
}

impl GammaCalibration {
    pub fn from_fit(fit: GammaFit) -> Self {
        GammaCalibration {
            gamma: fit.fit.gamma,
            fallback: false,
            fit: Some(fit.fit),
            retained: fit.retained,
        }
    }

    /// Conservative fallback when the fit is refused: the largest plausible
    /// rate, the raw test count.
    pub fn fallback(n_tests: u64, p_mins: &[f64]) -> Self {
        let mut retained = p_mins.to_vec();
        retained.sort_by(|a, b| a.total_cmp(b));
        GammaCalibration {
            gamma: (n_tests.max(1)) as f64,
            fallback: true,
            fit: None,
            retained,
        }
    }
}

/// One probability-probability plot point for a retained null value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PpPoint {
    pub p_min: f64,
    pub empirical_cdf: f64,
    pub model_cdf: f64,
}

/// Final per-variable results, sorted by rank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub max_cmi: f64,
    pub best_tuple: Vec<String>,
    pub p_min: f64,
    pub final_p: f64,
    pub adjusted_p: f64,
    pub relevant: bool,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub k: usize,
    pub method: Method,
    pub alpha: f64,
    pub n_objects: usize,
    pub n_variables: usize,
    /// Tests aggregated per variable: tuples containing it times
    /// discretizations.
    pub n_tests: u64,
    pub gamma: GammaCalibration,
    pub rows: Vec<ReportRow>,
    pub pp_points: Vec<PpPoint>,
    pub warnings: Vec<VariableWarning>,
}

/// Assembles the final report: p-values, multiplicity correction, flags,
/// and ranks (final p ascending, then larger CMI, then name).
///
/// `names` indexes the full variable table (so `score.variable` and tuple
/// members resolve), while `scores` may be a subset: variables excluded
/// from selection, like contrast columns, are simply not passed in.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    names: &[String],
    scores: &[VariableScore],
    n_objects: usize,
    k: usize,
    calibration: GammaCalibration,
    method: Method,
    alpha: f64,
    warnings: Vec<VariableWarning>,
) -> Result<SelectionReport, CalibrateError> {
    let m = scores.len();

    let mut p_min = Vec::with_capacity(m);
    let mut final_p = Vec::with_capacity(m);
    for score in scores {
        let p = pmin_from_score(score, n_objects)?;
        p_min.push(p);
        final_p.push(exponential_pvalue(p, calibration.gamma));
    }

    let (flags, adjusted) = match method {
        Method::Fdr => bh_select(&final_p, alpha)?,
        Method::Fwer => holm_select(&final_p, alpha)?,
    };

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        final_p[a]
            .total_cmp(&final_p[b])
            .then(scores[b].max_cmi.total_cmp(&scores[a].max_cmi))
            .then(names[scores[a].variable].cmp(&names[scores[b].variable]))
    });

    let rows = order
        .iter()
        .enumerate()
        .map(|(position, &i)| ReportRow {
            name: names[scores[i].variable].clone(),
            max_cmi: scores[i].max_cmi,
            best_tuple: scores[i]
                .best_tuple
                .iter()
                .map(|&v| names[v].clone())
                .collect(),
            p_min: p_min[i],
            final_p: final_p[i],
            adjusted_p: adjusted[i],
            relevant: flags[i],
            rank: position + 1,
        })
        .collect();

    let n_retained = calibration.retained.len();
    let pp_points = calibration
        .retained
        .iter()
        .enumerate()
        .map(|(i, &v)| PpPoint {
            p_min: v,
            empirical_cdf: (i as f64 + 0.5) / n_retained as f64,
            model_cdf: exponential_pvalue(v, calibration.gamma),
        })
        .collect();

    let n_tests = scores.iter().map(|s| s.n_tests).max().unwrap_or(0);
    Ok(SelectionReport {
        k,
        method,
        alpha,
        n_objects,
        n_variables: m,
        n_tests,
        gamma: calibration,
        rows,
        pp_points,
        warnings,
    })
}
