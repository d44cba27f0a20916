//! Monte Carlo engine: replicate trials over an (n, ρ) grid, track which
//! replications each estimator survived, and reduce the survivors to bias,
//! variance and MSE comparisons against a gold standard.
//!
//! Replication r always consumes random stream r, whatever the grid cell and
//! however many worker threads are running, so every number this module
//! produces is a pure function of the study spec. Small-sample fits fail at
//! a visible rate (separated probits, mostly); a failed fit removes the
//! replication from the affected comparison and is counted, never imputed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate_linear_trial, generate_trial, marginal_dr_truth, per_dose_truth, DgpError, ScenarioConfig, TrialDataset};
use crate::estimators::{
    convert_cf_to_marginal, convert_unadj_to_marginal, estimate_dr, estimate_linear_trial,
    fit_cf_bundle, fit_cf_bundle_with_link, fit_unadj_bundle, linear_product_variance_approx,
    linear_variance_ratio_cf, linear_variance_ratio_unadjusted, predict_response_empirical,
    predict_response_empirical_unadjusted, predict_response_modelbased, EstimatorError,
    MarginalDrEstimate,
};
use crate::numerics::RngStream;
use crate::regression::{fit_glm_binary, DesignMatrix, FitError, Link};

/// Trial size of the fitted gold standard.
pub const GOLD_TRIAL_SIZE: usize = 200_000;

/// Stream index reserved for the gold-standard trial; replications use
/// 0, 1, 2, … so the reserve can never collide.
pub const GOLD_STREAM: u64 = u64::MAX;

/// Two sequential-estimate products that are algebraically identical must
/// agree to this tolerance in floating point.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Which second-stage treatment of the confounding a comparison uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    Unadj,
    Cf,
}

impl Adjustment {
    pub fn is_cf(self) -> bool {
        matches!(self, Adjustment::Cf)
    }

    pub fn label(self) -> &'static str {
        match self {
            Adjustment::Unadj => "unadj",
            Adjustment::Cf => "cf",
        }
    }
}

/// Where the target values for bias come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthMode {
    /// Exact marginal coefficients and probabilities.
    Analytic,
    /// One very large simulated trial, fitted once — mirrors studies that
    /// have no closed form available.
    Fitted,
}

/// How per-dose response predictions are produced for the variance-ratio
/// curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionForm {
    /// Probability read off the converted marginal curve.
    ModelBased,
    /// Subject-averaged prediction from the conditional fit.
    Empirical,
}

/// How replications with failed fits are handled in the summaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionMode {
    /// A replication enters a cell's summaries only if the direct fit and
    /// that cell's sequential fit (and, when predictions need extra fits,
    /// those too) all succeeded — ratios then compare identical draws.
    Pairwise,
    /// Every statistic uses all replications available to its own column.
    /// Ratio standard errors are not defined in this mode (NaN).
    PerColumn,
}

/// Everything `run_study` needs. `scenario` is the design template; its `n`
/// and `rho` are overridden cell by cell from `n_values` × `rho_values`.
/// (The template sits last so the TOML form keeps scalars before the table.)
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudySpec {
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    pub n_replications: usize,
    pub master_seed: u64,
    pub adjustments: Vec<Adjustment>,
    pub prediction_link: Link,
    pub prediction_form: PredictionForm,
    pub truth_mode: TruthMode,
    pub exclusion_mode: ExclusionMode,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid study configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dgp(#[from] DgpError),
}

impl From<EstimatorError> for ConfigError {
    fn from(e: EstimatorError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("gold-standard fit failed at rho={rho}: {source}")]
    GoldFit { rho: f64, source: FitError },
    #[error("linear fit failed in replication {rep}: {source}")]
    LinearFit { rep: u64, source: FitError },
}

impl StudySpec {
    /// The standard comparison grid for the given scenario.
    pub fn table_default(scenario: ScenarioConfig) -> StudySpec {
        StudySpec {
            scenario,
            n_values: vec![40, 80, 120],
            rho_values: vec![0.0, 0.3, 0.6, 0.9],
            n_replications: 10_000,
            master_seed: 123,
            adjustments: vec![Adjustment::Unadj, Adjustment::Cf],
            prediction_link: Link::Probit,
            prediction_form: PredictionForm::ModelBased,
            truth_mode: TruthMode::Analytic,
            exclusion_mode: ExclusionMode::Pairwise,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        let k = self.scenario.dose_levels.len();
        if self.n_values.is_empty() {
            return Err(ConfigError::Invalid("n_values must be non-empty".into()));
        }
        for &n in &self.n_values {
            if n % k != 0 {
                return Err(ConfigError::Invalid(format!(
                    "n = {n} is not a multiple of the {k} dose levels; groups would be unbalanced"
                )));
            }
            if n <= 4 {
                return Err(ConfigError::Invalid(format!(
                    "n = {n} leaves no residual degrees of freedom"
                )));
            }
        }
        if self.rho_values.is_empty() {
            return Err(ConfigError::Invalid("rho_values must be non-empty".into()));
        }
        for &rho in &self.rho_values {
            if !(0.0..1.0).contains(&rho) {
                return Err(ConfigError::Invalid(format!(
                    "rho = {rho} is outside [0, 1)"
                )));
            }
        }
        if self.n_replications < 2 {
            return Err(ConfigError::Invalid(
                "n_replications must be at least 2".into(),
            ));
        }
        if self.adjustments.is_empty() {
            return Err(ConfigError::Invalid("adjustments must be non-empty".into()));
        }
        Ok(())
    }
}

/// Target values the biases are measured against.
#[derive(Clone, Debug)]
pub struct GoldStandard {
    pub alpha0: f64,
    pub alpha_d: f64,
    pub per_dose: Vec<f64>,
}

/// Compute the gold standard for one ρ, following the study's truth mode.
pub fn compute_gold_standard(spec: &StudySpec, rho: f64) -> Result<GoldStandard, HarnessError> {
    let mut cfg = spec.scenario.clone();
    cfg.rho = rho;
    match spec.truth_mode {
        TruthMode::Analytic => {
            let (alpha0, alpha_d) = marginal_dr_truth(&cfg);
            Ok(GoldStandard {
                alpha0,
                alpha_d,
                per_dose: per_dose_truth(&cfg),
            })
        }
        TruthMode::Fitted => {
            cfg.n = GOLD_TRIAL_SIZE;
            let mut stream = RngStream::new(spec.master_seed, GOLD_STREAM);
            let data = generate_trial(&cfg, &mut stream);
            let mut x = DesignMatrix::with_intercept(cfg.n);
            x.push_covariate(data.dose.clone());
            let fit = fit_glm_binary(&x, &data.response, Link::Probit)
                .map_err(|source| HarnessError::GoldFit { rho, source })?;
            let per_dose = cfg
                .dose_levels
                .iter()
                .map(|&level| {
                    let (mut hits, mut total) = (0.0, 0.0);
                    for (d, y) in data.dose.iter().zip(&data.response) {
                        if *d == level {
                            hits += *y;
                            total += 1.0;
                        }
                    }
                    hits / total
                })
                .collect();
            Ok(GoldStandard {
                alpha0: fit.coefficients[0],
                alpha_d: fit.coefficients[1],
                per_dose,
            })
        }
    }
}

/// What one replication yielded: marginal estimates and per-dose response
/// predictions for each estimator, with `None` marking a failed fit.
struct RepOutcome {
    dr: Option<[f64; 2]>,
    cf: Option<[f64; 2]>,
    un: Option<[f64; 2]>,
    dr_pred: Option<Vec<f64>>,
    cf_pred: Option<Vec<f64>>,
    un_pred: Option<Vec<f64>>,
}

fn modelbased_curve(est: &MarginalDrEstimate, doses: &[f64]) -> Vec<f64> {
    doses
        .iter()
        .map(|&d| predict_response_modelbased(est, d))
        .collect()
}

/// Sequential-with-adjustment outcome: marginal estimate from the probit
/// fit, predictions per the requested link and form. A logit prediction link
/// means one extra conditional fit whose failure voids only the predictions.
fn cf_outcome(spec: &StudySpec, data: &TrialDataset, doses: &[f64]) -> (Option<[f64; 2]>, Option<Vec<f64>>) {
    let Ok(bundle) = fit_cf_bundle(data) else {
        return (None, None);
    };
    let est = convert_cf_to_marginal(&bundle);
    let preds = match spec.prediction_link {
        Link::Probit => Some(match spec.prediction_form {
            PredictionForm::ModelBased => modelbased_curve(&est, doses),
            PredictionForm::Empirical => doses
                .iter()
                .map(|&d| predict_response_empirical(&bundle, d, Link::Probit))
                .collect(),
        }),
        // No closed-form marginalization exists on the logit scale, so the
        // subject-averaged form is the only prediction offered there.
        Link::Logit => fit_cf_bundle_with_link(data, Link::Logit).ok().map(|lb| {
            doses
                .iter()
                .map(|&d| predict_response_empirical(&lb, d, Link::Logit))
                .collect()
        }),
    };
    (Some([est.alpha0, est.alpha_d]), preds)
}

fn un_outcome(spec: &StudySpec, data: &TrialDataset, doses: &[f64]) -> (Option<[f64; 2]>, Option<Vec<f64>>) {
    let Ok(bundle) = fit_unadj_bundle(data, Link::Probit) else {
        return (None, None);
    };
    let est = convert_unadj_to_marginal(&bundle);
    let preds = match spec.prediction_link {
        Link::Probit => Some(match spec.prediction_form {
            PredictionForm::ModelBased => modelbased_curve(&est, doses),
            PredictionForm::Empirical => doses
                .iter()
                .map(|&d| predict_response_empirical_unadjusted(&bundle, d, Link::Probit))
                .collect(),
        }),
        Link::Logit => fit_unadj_bundle(data, Link::Logit).ok().map(|lb| {
            doses
                .iter()
                .map(|&d| predict_response_empirical_unadjusted(&lb, d, Link::Logit))
                .collect()
        }),
    };
    (Some([est.alpha0, est.alpha_d]), preds)
}

fn run_replication(spec: &StudySpec, n: usize, rho: f64, rep: u64) -> RepOutcome {
    let mut cfg = spec.scenario.clone();
    cfg.n = n;
    cfg.rho = rho;
    let mut stream = RngStream::new(spec.master_seed, rep);
    let data = generate_trial(&cfg, &mut stream);
    let doses = cfg.dose_levels.as_slice();

    let dr_est = estimate_dr(&data);
    let (dr, dr_pred) = if dr_est.valid {
        (
            Some([dr_est.alpha0, dr_est.alpha_d]),
            Some(modelbased_curve(&dr_est, doses)),
        )
    } else {
        (None, None)
    };

    let (cf, cf_pred) = if spec.adjustments.contains(&Adjustment::Cf) {
        cf_outcome(spec, &data, doses)
    } else {
        (None, None)
    };
    let (un, un_pred) = if spec.adjustments.contains(&Adjustment::Unadj) {
        un_outcome(spec, &data, doses)
    } else {
        (None, None)
    };

    RepOutcome {
        dr,
        cf,
        un,
        dr_pred,
        cf_pred,
        un_pred,
    }
}

/// Every summary for one (n, ρ, adjustment) cell. Index 0 of each pair is
/// the intercept α₀, index 1 the dose slope α_d.
#[derive(Clone, Debug)]
pub struct AggregateReport {
    pub n: usize,
    pub rho: f64,
    pub adjustment: Adjustment,
    pub dr_bias: [f64; 2],
    pub dr_variance: [f64; 2],
    pub dr_mse: [f64; 2],
    pub der_bias: [f64; 2],
    pub der_variance: [f64; 2],
    pub der_mse: [f64; 2],
    /// var(sequential)/var(direct), per coefficient.
    pub ratio_variance_vs_dr: [f64; 2],
    pub ratio_mse_vs_dr: [f64; 2],
    /// Jackknife standard errors of the two ratios (NaN in per-column mode).
    pub ratio_variance_se: [f64; 2],
    pub ratio_mse_se: [f64; 2],
    /// var(sequential prediction)/var(direct prediction) at each dose level.
    pub per_dose_variance_ratio: Vec<f64>,
    pub excluded_replications: usize,
    pub used_replications: usize,
}

/// Mean and (n−1)-denominator variance; NaN variance below two points.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    let mean = xs.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (m - 1) as f64)
}

/// Leave-one-out jackknife SE for var(b)/var(a), or for the MSE ratio when
/// `truth` is given. Works on centered running sums, so each of the m
/// leave-one-out statistics costs O(1).
fn jackknife_ratio_se(a: &[f64], b: &[f64], truth: Option<f64>) -> f64 {
    let m = a.len();
    debug_assert_eq!(b.len(), m);
    if m < 3 {
        return f64::NAN;
    }
    let mf = m as f64;
    let ca = a.iter().sum::<f64>() / mf;
    let cb = b.iter().sum::<f64>() / mf;
    let (mut sa1, mut sa2, mut sb1, mut sb2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        let da = a[i] - ca;
        let db = b[i] - cb;
        sa1 += da;
        sa2 += da * da;
        sb1 += db;
        sb2 += db * db;
    }
    // Statistic with point i dropped, from sums of centered values.
    let loo = |s1: f64, s2: f64, d: f64, center: f64| -> f64 {
        let s1 = s1 - d;
        let s2 = s2 - d * d;
        let mm = mf - 1.0;
        let var = (s2 - s1 * s1 / mm) / (mm - 1.0);
        match truth {
            None => var,
            Some(t) => {
                let bias = s1 / mm + center - t;
                var + bias * bias
            }
        }
    };
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..m {
        let ratio = loo(sb1, sb2, b[i] - cb, cb) / loo(sa1, sa2, a[i] - ca, ca);
        sum += ratio;
        sumsq += ratio * ratio;
    }
    let mean = sum / mf;
    let ss = (sumsq - mf * mean * mean).max(0.0);
    ((mf - 1.0) / mf * ss).sqrt()
}

fn aggregate_cell(
    spec: &StudySpec,
    n: usize,
    rho: f64,
    adjustment: Adjustment,
    gold: &GoldStandard,
    outcomes: &[RepOutcome],
) -> AggregateReport {
    let total = outcomes.len();
    fn adj_of(o: &RepOutcome, adjustment: Adjustment) -> (&Option<[f64; 2]>, &Option<Vec<f64>>) {
        match adjustment {
            Adjustment::Cf => (&o.cf, &o.cf_pred),
            Adjustment::Unadj => (&o.un, &o.un_pred),
        }
    }
    let complete: Vec<usize> = (0..total)
        .filter(|&i| {
            let (s, p) = adj_of(&outcomes[i], adjustment);
            outcomes[i].dr.is_some() && s.is_some() && p.is_some()
        })
        .collect();
    let used = complete.len();

    // Column extractors over a chosen replication set.
    let col = |idx: &[usize], f: &dyn Fn(&RepOutcome) -> f64| -> Vec<f64> {
        idx.iter().map(|&i| f(&outcomes[i])).collect()
    };

    // Per-column mode lets each statistic use everything its own estimator
    // delivered; pairwise restricts all columns to the common survivors.
    let (dr_idx, der_idx): (Vec<usize>, Vec<usize>) = match spec.exclusion_mode {
        ExclusionMode::Pairwise => (complete.clone(), complete.clone()),
        ExclusionMode::PerColumn => (
            (0..total).filter(|&i| outcomes[i].dr.is_some()).collect(),
            (0..total)
                .filter(|&i| adj_of(&outcomes[i], adjustment).0.is_some())
                .collect(),
        ),
    };

    let truth = [gold.alpha0, gold.alpha_d];
    let mut dr_bias = [f64::NAN; 2];
    let mut dr_variance = [f64::NAN; 2];
    let mut dr_mse = [f64::NAN; 2];
    let mut der_bias = [f64::NAN; 2];
    let mut der_variance = [f64::NAN; 2];
    let mut der_mse = [f64::NAN; 2];
    let mut ratio_variance = [f64::NAN; 2];
    let mut ratio_mse = [f64::NAN; 2];
    let mut ratio_variance_se = [f64::NAN; 2];
    let mut ratio_mse_se = [f64::NAN; 2];

    for k in 0..2 {
        let dr_col = col(&dr_idx, &|o| o.dr.unwrap()[k]);
        let der_col = col(&der_idx, &|o| adj_of(o, adjustment).0.unwrap()[k]);
        let (dr_mean, dr_var) = mean_var(&dr_col);
        let (der_mean, der_var) = mean_var(&der_col);
        dr_bias[k] = dr_mean - truth[k];
        der_bias[k] = der_mean - truth[k];
        dr_variance[k] = dr_var;
        der_variance[k] = der_var;
        dr_mse[k] = dr_var + dr_bias[k] * dr_bias[k];
        der_mse[k] = der_var + der_bias[k] * der_bias[k];
        ratio_variance[k] = der_var / dr_var;
        ratio_mse[k] = der_mse[k] / dr_mse[k];
        if spec.exclusion_mode == ExclusionMode::Pairwise {
            ratio_variance_se[k] = jackknife_ratio_se(&dr_col, &der_col, None);
            ratio_mse_se[k] = jackknife_ratio_se(&dr_col, &der_col, Some(truth[k]));
        }
    }

    let n_doses = spec.scenario.dose_levels.len();
    let (pred_dr_idx, pred_der_idx): (Vec<usize>, Vec<usize>) = match spec.exclusion_mode {
        ExclusionMode::Pairwise => (complete.clone(), complete.clone()),
        ExclusionMode::PerColumn => (
            (0..total).filter(|&i| outcomes[i].dr_pred.is_some()).collect(),
            (0..total)
                .filter(|&i| adj_of(&outcomes[i], adjustment).1.is_some())
                .collect(),
        ),
    };
    let per_dose_variance_ratio = (0..n_doses)
        .map(|j| {
            let dr_p = col(&pred_dr_idx, &|o| o.dr_pred.as_ref().unwrap()[j]);
            let der_p = col(&pred_der_idx, &|o| adj_of(o, adjustment).1.as_ref().unwrap()[j]);
            mean_var(&der_p).1 / mean_var(&dr_p).1
        })
        .collect();

    AggregateReport {
        n,
        rho,
        adjustment,
        dr_bias,
        dr_variance,
        dr_mse,
        der_bias,
        der_variance,
        der_mse,
        ratio_variance_vs_dr: ratio_variance,
        ratio_mse_vs_dr: ratio_mse,
        ratio_variance_se,
        ratio_mse_se,
        per_dose_variance_ratio,
        excluded_replications: total - used,
        used_replications: used,
    }
}

/// Run the full grid. Reports come back ordered by n ascending, then ρ
/// ascending, then unadjusted before adjusted — and are bit-identical for a
/// given spec regardless of thread count.
pub fn run_study(spec: &StudySpec) -> Result<Vec<AggregateReport>, HarnessError> {
    spec.validate()?;
    let mut n_values = spec.n_values.clone();
    n_values.sort_unstable();
    n_values.dedup();
    let mut rho_values = spec.rho_values.clone();
    rho_values.sort_by(|x, y| x.partial_cmp(y).expect("rho values are finite"));
    rho_values.dedup();

    let golds: Vec<GoldStandard> = rho_values
        .iter()
        .map(|&rho| compute_gold_standard(spec, rho))
        .collect::<Result<_, _>>()?;

    let mut reports = Vec::new();
    for &n in &n_values {
        for (ri, &rho) in rho_values.iter().enumerate() {
            let outcomes: Vec<RepOutcome> = (0..spec.n_replications as u64)
                .into_par_iter()
                .map(|rep| run_replication(spec, n, rho, rep))
                .collect();
            for adjustment in [Adjustment::Unadj, Adjustment::Cf] {
                if spec.adjustments.contains(&adjustment) {
                    reports.push(aggregate_cell(spec, n, rho, adjustment, &golds[ri], &outcomes));
                }
            }
        }
    }
    Ok(reports)
}

/// Summary of the linear-model study, where every claim about the
/// sequential-versus-direct comparison can be checked in closed form.
#[derive(Clone, Debug)]
pub struct LinearCheckReport {
    pub n: usize,
    pub replications: usize,
    pub var_dr_slope: f64,
    pub var_unadj_product: f64,
    pub var_cf_product: f64,
    pub ratio_unadj: f64,
    pub ratio_unadj_se: f64,
    pub ratio_cf: f64,
    pub ratio_cf_se: f64,
    /// Asymptotic prediction for `ratio_unadj` (valid at ρ = 0).
    pub analytic_ratio_unadj: f64,
    pub analytic_ratio_cf: f64,
    /// First-order prediction of var(unadjusted product) at this n.
    pub predicted_var_unadj_product: f64,
    pub max_identity_deviation: f64,
    /// Replications where the adjusted product and the direct slope differed
    /// by more than [`IDENTITY_TOL`]; must be 0 for a working build.
    pub identity_violations: usize,
}

/// Population variance of the dose grid (each level equally weighted).
fn dose_grid_variance(levels: &[f64]) -> f64 {
    let k = levels.len() as f64;
    let mean = levels.iter().sum::<f64>() / k;
    levels.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / k
}

/// Replicate the linear-response design and compare all three estimators,
/// checking the per-trial identity between the adjusted product and the
/// direct slope along the way.
pub fn run_linear_check(
    cfg: &ScenarioConfig,
    replications: usize,
    master_seed: u64,
) -> Result<LinearCheckReport, HarnessError> {
    cfg.validate().map_err(ConfigError::from)?;
    if replications < 3 {
        return Err(ConfigError::Invalid("need at least 3 replications".into()).into());
    }

    let estimates: Vec<_> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut stream = RngStream::new(master_seed, rep);
            let data = generate_linear_trial(cfg, &mut stream);
            estimate_linear_trial(&data).map_err(|source| HarnessError::LinearFit { rep, source })
        })
        .collect::<Result<_, _>>()?;

    let dr: Vec<f64> = estimates.iter().map(|e| e.dr_slope).collect();
    let un: Vec<f64> = estimates.iter().map(|e| e.unadj_product).collect();
    let cf: Vec<f64> = estimates.iter().map(|e| e.cf_product).collect();

    let mut max_dev = 0.0f64;
    let mut violations = 0usize;
    for e in &estimates {
        let dev = (e.cf_product - e.dr_slope).abs();
        max_dev = max_dev.max(dev);
        if dev > IDENTITY_TOL {
            violations += 1;
        }
    }

    let var_dr = mean_var(&dr).1;
    let var_un = mean_var(&un).1;
    let var_cf = mean_var(&cf).1;

    let sigma_d2 = dose_grid_variance(&cfg.dose_levels);
    let sigma_eta2 = cfg.sigma_eta * cfg.sigma_eta;
    let analytic_unadj = linear_variance_ratio_unadjusted(
        cfg.beta_c, cfg.gamma_d, sigma_d2, sigma_eta2, 1.0,
    )
    .map_err(ConfigError::from)?;
    let predicted_var = linear_product_variance_approx(
        cfg.beta_c, cfg.gamma_d, sigma_d2, sigma_eta2, 1.0, cfg.n,
    )
    .map_err(ConfigError::from)?;

    Ok(LinearCheckReport {
        n: cfg.n,
        replications,
        var_dr_slope: var_dr,
        var_unadj_product: var_un,
        var_cf_product: var_cf,
        ratio_unadj: var_un / var_dr,
        ratio_unadj_se: jackknife_ratio_se(&dr, &un, None),
        ratio_cf: var_cf / var_dr,
        ratio_cf_se: jackknife_ratio_se(&dr, &cf, None),
        analytic_ratio_unadj: analytic_unadj,
        analytic_ratio_cf: linear_variance_ratio_cf(),
        predicted_var_unadj_product: predicted_var,
        max_identity_deviation: max_dev,
        identity_violations: violations,
    })
}
