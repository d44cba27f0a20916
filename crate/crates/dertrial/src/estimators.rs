//! The estimators under comparison.
//!
//! A trial can be analyzed two ways. The *direct* route regresses the binary
//! response on the randomized dose and is done. The *sequential* route fits
//! the dose→exposure and exposure→response stages separately and then
//! collapses them back to a marginal dose-response curve; because the
//! exposure is confounded with the response noise, the second stage either
//! ignores that (unadjusted) or corrects for it by adding the first-stage
//! residual as a control covariate and rescaling. Everything here is a pure
//! function of one dataset; Monte Carlo repetition lives in `harness`.

use crate::dgp::TrialDataset;
use crate::numerics::std_normal_cdf;
use crate::regression::{fit_glm_binary, fit_ols, DesignMatrix, FitError, FitResult, Link};

/// Which estimator produced a marginal estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Probit of response on dose, directly.
    Dr,
    /// Sequential fit with the control-function confounding adjustment.
    DerCf,
    /// Sequential fit ignoring the confounding.
    DerUnadj,
}

/// An estimated marginal dose-response curve Φ(α₀ + α_d·dose). When a fit
/// failed, `valid` is false and the coefficients are NaN; callers must not
/// average such estimates into summaries.
#[derive(Clone, Copy, Debug)]
pub struct MarginalDrEstimate {
    pub alpha0: f64,
    pub alpha_d: f64,
    pub method: Method,
    pub valid: bool,
}

impl MarginalDrEstimate {
    pub fn invalid(method: Method) -> Self {
        MarginalDrEstimate {
            alpha0: f64::NAN,
            alpha_d: f64::NAN,
            method,
            valid: false,
        }
    }
}

/// Both stages of the control-function fit, kept together because the
/// conversion and the prediction formulas need pieces of each.
#[derive(Clone, Debug)]
pub struct CfFitBundle {
    /// OLS of exposure on dose: coefficients (γ̂₀, γ̂_d).
    pub de_fit: FitResult,
    /// First-stage residuals η̂ᵢ — the estimated confounder values.
    pub eta_hat: Vec<f64>,
    /// Residual variance of the first stage (n−2 denominator).
    pub sigma_eta2_hat: f64,
    /// GLM of response on (1, exposure, η̂): coefficients (β̂₀★, β̂_c★, β̂_η★)
    /// on the conditional scale.
    pub er_fit: FitResult,
    /// Link used in `er_fit`.
    pub er_link: Link,
    /// Implied squared correlation between the exposure noise and the
    /// response noise.
    pub rho2_hat: f64,
}

/// The two stages of the unadjusted sequential fit. The first stage is kept
/// even though its slope alone would do, because the empirical prediction
/// formula reuses the residuals.
#[derive(Clone, Debug)]
pub struct UnadjFitBundle {
    pub de_fit: FitResult,
    pub eta_hat: Vec<f64>,
    pub sigma_eta2_hat: f64,
    /// GLM of response on (1, exposure) only.
    pub er_fit: FitResult,
    pub er_link: Link,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("variance inputs must be positive and finite: {what}")]
    NonPositiveVariance { what: String },
}

fn dose_design(data: &TrialDataset) -> DesignMatrix {
    let mut x = DesignMatrix::with_intercept(data.dose.len());
    x.push_covariate(data.dose.clone());
    x
}

/// Direct estimate: probit of response on dose. Fit failures come back as an
/// invalid estimate rather than an error, since for small trials they are an
/// expected event the caller counts.
pub fn estimate_dr(data: &TrialDataset) -> MarginalDrEstimate {
    match fit_glm_binary(&dose_design(data), &data.response, Link::Probit) {
        Ok(fit) => MarginalDrEstimate {
            alpha0: fit.coefficients[0],
            alpha_d: fit.coefficients[1],
            method: Method::Dr,
            valid: true,
        },
        Err(_) => MarginalDrEstimate::invalid(Method::Dr),
    }
}

/// Two-stage control-function fit with an arbitrary second-stage link.
pub fn fit_cf_bundle_with_link(data: &TrialDataset, link: Link) -> Result<CfFitBundle, FitError> {
    let de_fit = fit_ols(&dose_design(data), &data.exposure)?;
    let eta_hat = de_fit.residuals.clone();
    let sigma_eta2_hat = de_fit
        .residual_variance
        .expect("OLS always reports a residual variance");

    let mut xe = DesignMatrix::with_intercept(data.dose.len());
    xe.push_covariate(data.exposure.clone());
    xe.push_covariate(eta_hat.clone());
    let er_fit = fit_glm_binary(&xe, &data.response, link)?;

    let b_eta = er_fit.coefficients[2];
    let t = b_eta * b_eta * sigma_eta2_hat;
    let rho2_hat = t / (1.0 + t);

    Ok(CfFitBundle {
        de_fit,
        eta_hat,
        sigma_eta2_hat,
        er_fit,
        er_link: link,
        rho2_hat,
    })
}

/// Two-stage control-function fit with the standard probit second stage.
pub fn fit_cf_bundle(data: &TrialDataset) -> Result<CfFitBundle, FitError> {
    fit_cf_bundle_with_link(data, Link::Probit)
}

/// Two-stage fit that ignores the confounding in the second stage.
pub fn fit_unadj_bundle(data: &TrialDataset, link: Link) -> Result<UnadjFitBundle, FitError> {
    let de_fit = fit_ols(&dose_design(data), &data.exposure)?;
    let eta_hat = de_fit.residuals.clone();
    let sigma_eta2_hat = de_fit
        .residual_variance
        .expect("OLS always reports a residual variance");

    let mut xe = DesignMatrix::with_intercept(data.dose.len());
    xe.push_covariate(data.exposure.clone());
    let er_fit = fit_glm_binary(&xe, &data.response, link)?;

    Ok(UnadjFitBundle {
        de_fit,
        eta_hat,
        sigma_eta2_hat,
        er_fit,
        er_link: link,
    })
}

/// Collapse a probit control-function fit to the marginal dose scale.
///
/// The conditional coefficients are first shrunk by √(1−ρ̂²) onto the scale
/// of a unit-variance response noise, then the dose is pushed through the
/// fitted exposure stage and the leftover exposure-noise variance — seen by
/// both the exposure coefficient and the control coefficient — is folded
/// into the denominator.
pub fn convert_cf_to_marginal(bundle: &CfFitBundle) -> MarginalDrEstimate {
    assert_eq!(
        bundle.er_link,
        Link::Probit,
        "the marginal conversion is defined for probit fits only"
    );
    let g = &bundle.de_fit.coefficients;
    let scale = (1.0 - bundle.rho2_hat).sqrt();
    let b0 = bundle.er_fit.coefficients[0] * scale;
    let bc = bundle.er_fit.coefficients[1] * scale;
    let bv = bundle.er_fit.coefficients[2] * scale;
    let denom =
        (1.0 - bundle.rho2_hat + (bc + bv) * (bc + bv) * bundle.sigma_eta2_hat).sqrt();
    MarginalDrEstimate {
        alpha0: (b0 + bc * g[0]) / denom,
        alpha_d: bc * g[1] / denom,
        method: Method::DerCf,
        valid: true,
    }
}

/// Collapse an unadjusted probit fit to the marginal dose scale. Without a
/// control covariate there is nothing to rescale; only the exposure-noise
/// variance enters the denominator.
pub fn convert_unadj_to_marginal(bundle: &UnadjFitBundle) -> MarginalDrEstimate {
    assert_eq!(
        bundle.er_link,
        Link::Probit,
        "the marginal conversion is defined for probit fits only"
    );
    let g = &bundle.de_fit.coefficients;
    let b0 = bundle.er_fit.coefficients[0];
    let bc = bundle.er_fit.coefficients[1];
    let denom = (1.0 + bc * bc * bundle.sigma_eta2_hat).sqrt();
    MarginalDrEstimate {
        alpha0: (b0 + bc * g[0]) / denom,
        alpha_d: bc * g[1] / denom,
        method: Method::DerUnadj,
        valid: true,
    }
}

/// Sequential estimate with confounding adjustment, as a single call.
pub fn estimate_der_cf(data: &TrialDataset) -> MarginalDrEstimate {
    match fit_cf_bundle(data) {
        Ok(bundle) => convert_cf_to_marginal(&bundle),
        Err(_) => MarginalDrEstimate::invalid(Method::DerCf),
    }
}

/// Sequential estimate without adjustment, as a single call.
pub fn estimate_der_unadjusted(data: &TrialDataset) -> MarginalDrEstimate {
    match fit_unadj_bundle(data, Link::Probit) {
        Ok(bundle) => convert_unadj_to_marginal(&bundle),
        Err(_) => MarginalDrEstimate::invalid(Method::DerUnadj),
    }
}

/// Marginal response probability at `dose` implied by a converted estimate.
pub fn predict_response_modelbased(est: &MarginalDrEstimate, dose: f64) -> f64 {
    if !est.valid {
        return f64::NAN;
    }
    std_normal_cdf(est.alpha0 + est.alpha_d * dose)
}

/// Subject-averaged response prediction at `dose` from a control-function
/// fit: each subject keeps their own estimated confounder value both inside
/// the predicted exposure and in the control term, and the conditional-scale
/// coefficients are used as fitted (no rescaling).
pub fn predict_response_empirical(bundle: &CfFitBundle, dose: f64, link: Link) -> f64 {
    debug_assert_eq!(link, bundle.er_link, "prediction link must match the fitted link");
    let g = &bundle.de_fit.coefficients;
    let b = &bundle.er_fit.coefficients;
    let mut acc = 0.0;
    for &eta in &bundle.eta_hat {
        let exposure_hat = g[0] + g[1] * dose + eta;
        acc += link.mean(b[0] + b[1] * exposure_hat + b[2] * eta);
    }
    acc / bundle.eta_hat.len() as f64
}

/// Subject-averaged prediction from an unadjusted fit: the confounder still
/// appears in each subject's predicted exposure, but earns no coefficient of
/// its own.
pub fn predict_response_empirical_unadjusted(
    bundle: &UnadjFitBundle,
    dose: f64,
    link: Link,
) -> f64 {
    debug_assert_eq!(link, bundle.er_link, "prediction link must match the fitted link");
    let g = &bundle.de_fit.coefficients;
    let b = &bundle.er_fit.coefficients;
    let mut acc = 0.0;
    for &eta in &bundle.eta_hat {
        let exposure_hat = g[0] + g[1] * dose + eta;
        acc += link.mean(b[0] + b[1] * exposure_hat);
    }
    acc / bundle.eta_hat.len() as f64
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<(), EstimatorError> {
    for (name, v) in pairs {
        if !(v.is_finite() && *v > 0.0) {
            return Err(EstimatorError::NonPositiveVariance {
                what: format!("{name} = {v}"),
            });
        }
    }
    Ok(())
}

/// Asymptotic variance ratio var(sequential)/var(direct) for the *linear*
/// version of the design when the confounding is ignored. Both estimators
/// target γ_d·β_c; the sequential product loses the cross-stage covariance
/// and the ratio falls below one by the product of two noise fractions.
pub fn linear_variance_ratio_unadjusted(
    beta_c: f64,
    gamma_d: f64,
    sigma_d2: f64,
    sigma_eta2: f64,
    sigma_eps2: f64,
) -> Result<f64, EstimatorError> {
    check_positive(&[
        ("sigma_d2", sigma_d2),
        ("sigma_eta2", sigma_eta2),
        ("sigma_eps2", sigma_eps2),
    ])?;
    let response_noise = beta_c * beta_c * sigma_eta2 + sigma_eps2;
    let exposure_var = gamma_d * gamma_d * sigma_d2 + sigma_eta2;
    Ok(1.0 - (sigma_eta2 * sigma_eps2) / (response_noise * exposure_var))
}

/// With the control-function adjustment the sequential product is exactly
/// the direct slope in the linear model, so the asymptotic ratio is one.
pub fn linear_variance_ratio_cf() -> f64 {
    1.0
}

/// First-order approximation to var(γ̂_d·β̂_c) for the unadjusted sequential
/// estimator in the linear model with independent noise, at trial size n.
pub fn linear_product_variance_approx(
    beta_c: f64,
    gamma_d: f64,
    sigma_d2: f64,
    sigma_eta2: f64,
    sigma_eps2: f64,
    n: usize,
) -> Result<f64, EstimatorError> {
    check_positive(&[
        ("sigma_d2", sigma_d2),
        ("sigma_eta2", sigma_eta2),
        ("sigma_eps2", sigma_eps2),
    ])?;
    let sigma_c2 = gamma_d * gamma_d * sigma_d2 + sigma_eta2;
    Ok((beta_c * beta_c * sigma_eta2 / sigma_d2 + gamma_d * gamma_d * sigma_eps2 / sigma_c2)
        / n as f64)
}

/// The three slope estimates from one linear-response trial.
#[derive(Clone, Copy, Debug)]
pub struct LinearTrialEstimates {
    /// OLS slope of response on dose — the direct estimate of γ_d·β_c.
    pub dr_slope: f64,
    /// γ̂_d times the slope of response on exposure alone.
    pub unadj_product: f64,
    /// γ̂_d times the exposure slope when the first-stage residual is also in
    /// the model. Algebraically identical to `dr_slope` trial by trial.
    pub cf_product: f64,
}

/// Fit all three linear estimators on one continuous-response trial.
pub fn estimate_linear_trial(data: &TrialDataset) -> Result<LinearTrialEstimates, FitError> {
    let xd = dose_design(data);
    let dr = fit_ols(&xd, &data.response)?;
    let de = fit_ols(&xd, &data.exposure)?;
    let gamma_d = de.coefficients[1];

    let mut x_unadj = DesignMatrix::with_intercept(data.dose.len());
    x_unadj.push_covariate(data.exposure.clone());
    let er_unadj = fit_ols(&x_unadj, &data.response)?;

    let mut x_cf = DesignMatrix::with_intercept(data.dose.len());
    x_cf.push_covariate(data.exposure.clone());
    x_cf.push_covariate(de.residuals.clone());
    let er_cf = fit_ols(&x_cf, &data.response)?;

    Ok(LinearTrialEstimates {
        dr_slope: dr.coefficients[1],
        unadj_product: gamma_d * er_unadj.coefficients[1],
        cf_product: gamma_d * er_cf.coefficients[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_linear_trial, generate_trial, marginal_dr_truth, DgpForm, ScenarioConfig};
    use crate::numerics::RngStream;

    fn s1(n: usize, rho: f64) -> ScenarioConfig {
        ScenarioConfig::scenario(1, n, rho, DgpForm::Code).unwrap()
    }

    fn synthetic_cf_bundle(b: [f64; 3], g: [f64; 2], sigma2: f64, eta: Vec<f64>) -> CfFitBundle {
        let t = b[2] * b[2] * sigma2;
        CfFitBundle {
            de_fit: FitResult {
                coefficients: g.to_vec(),
                converged: true,
                iterations: 1,
                residuals: eta.clone(),
                residual_variance: Some(sigma2),
                deviance: None,
            },
            eta_hat: eta,
            sigma_eta2_hat: sigma2,
            er_fit: FitResult {
                coefficients: b.to_vec(),
                converged: true,
                iterations: 5,
                residuals: Vec::new(),
                residual_variance: None,
                deviance: Some(1.0),
            },
            er_link: Link::Probit,
            rho2_hat: t / (1.0 + t),
        }
    }

    #[test]
    fn cf_conversion_with_zero_control_is_plain_attenuation() {
        let bundle = synthetic_cf_bundle([-3.0, 1.0, 0.0], [0.0, 1.0], 1.0, vec![0.0; 4]);
        let est = convert_cf_to_marginal(&bundle);
        assert!((est.alpha0 - -3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((est.alpha_d - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(est.method, Method::DerCf);
        assert!(est.valid);
    }

    #[test]
    fn cf_conversion_with_unit_control_matches_closed_form() {
        // b★ = (−3, 1, 1), σ̂² = 1 ⇒ ρ̂² = 1/2, and the collapse works out to
        // dividing the structural numbers by √5.
        let bundle = synthetic_cf_bundle([-3.0, 1.0, 1.0], [0.0, 1.0], 1.0, vec![0.0; 4]);
        let est = convert_cf_to_marginal(&bundle);
        assert!((est.alpha0 - -3.0 / 5f64.sqrt()).abs() < 1e-14, "{}", est.alpha0);
        assert!((est.alpha_d - 1.0 / 5f64.sqrt()).abs() < 1e-14, "{}", est.alpha_d);
    }

    #[test]
    fn unadjusted_conversion_composes_the_two_stages() {
        let bundle = UnadjFitBundle {
            de_fit: FitResult {
                coefficients: vec![-1.0, 2.0],
                converged: true,
                iterations: 1,
                residuals: vec![0.0; 4],
                residual_variance: Some(0.25),
                deviance: None,
            },
            eta_hat: vec![0.0; 4],
            sigma_eta2_hat: 0.25,
            er_fit: FitResult {
                coefficients: vec![0.5, 2.0],
                converged: true,
                iterations: 4,
                residuals: Vec::new(),
                residual_variance: None,
                deviance: Some(1.0),
            },
            er_link: Link::Probit,
        };
        let est = convert_unadj_to_marginal(&bundle);
        // b0 + bc·gamma0 over denom = √(1 + 4·0.25) = √2.
        let (gamma0, gamma_d, b0, bc) = (-1.0, 2.0, 0.5, 2.0);
        assert!((est.alpha0 - (b0 + bc * gamma0) / 2f64.sqrt()).abs() < 1e-15);
        assert!((est.alpha_d - bc * gamma_d / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pipeline_recovers_marginal_truth_on_a_large_trial() {
        let cfg = s1(40_000, 0.6);
        let data = generate_trial(&cfg, &mut RngStream::new(314, 0));
        let (a0, ad) = marginal_dr_truth(&cfg);

        let dr = estimate_dr(&data);
        assert!(dr.valid);
        assert!((dr.alpha0 - a0).abs() < 0.1, "dr a0={}", dr.alpha0);
        assert!((dr.alpha_d - ad).abs() < 0.05, "dr ad={}", dr.alpha_d);

        let cf = estimate_der_cf(&data);
        assert!(cf.valid);
        assert!((cf.alpha0 - a0).abs() < 0.12, "cf a0={}", cf.alpha0);
        assert!((cf.alpha_d - ad).abs() < 0.06, "cf ad={}", cf.alpha_d);

        // The unadjusted route converges to the wrong place once confounding
        // is strong; at ρ = 0.6 the slope overshoots visibly.
        let un = estimate_der_unadjusted(&data);
        assert!(un.valid);
        assert!(
            (un.alpha_d - ad).abs() > 0.08,
            "unadside should be biased: {} vs {}",
            un.alpha_d,
            ad
        );
    }

    #[test]
    fn rho2_hat_estimates_the_squared_noise_correlation() {
        // In the shared-factor form the noise correlation is ρ², so its
        // square is ρ⁴.
        let cfg = s1(100_000, 0.9);
        let data = generate_trial(&cfg, &mut RngStream::new(2718, 0));
        let bundle = fit_cf_bundle(&data).unwrap();
        let want = 0.9f64.powi(4);
        assert!(
            (bundle.rho2_hat - want).abs() < 0.02,
            "rho2_hat={} want≈{want}",
            bundle.rho2_hat
        );
        // And in the direct-correlation form it is ρ² itself.
        let cfg = ScenarioConfig::scenario(1, 100_000, 0.9, DgpForm::Prose).unwrap();
        let data = generate_trial(&cfg, &mut RngStream::new(2718, 1));
        let bundle = fit_cf_bundle(&data).unwrap();
        assert!(
            (bundle.rho2_hat - 0.81).abs() < 0.02,
            "rho2_hat={}",
            bundle.rho2_hat
        );
    }

    #[test]
    fn modelbased_prediction_is_the_probit_of_the_line() {
        let est = MarginalDrEstimate {
            alpha0: -2.0,
            alpha_d: 0.5,
            method: Method::Dr,
            valid: true,
        };
        let p = predict_response_modelbased(&est, 3.0);
        assert!((p - std_normal_cdf(-0.5)).abs() < 1e-15);
        assert!(predict_response_modelbased(&MarginalDrEstimate::invalid(Method::Dr), 3.0).is_nan());
    }

    #[test]
    fn empirical_prediction_agrees_with_modelbased_in_large_samples() {
        let cfg = s1(100_000, 0.6);
        let data = generate_trial(&cfg, &mut RngStream::new(99, 0));
        let bundle = fit_cf_bundle(&data).unwrap();
        let est = convert_cf_to_marginal(&bundle);
        for &d in &cfg.dose_levels {
            let emp = predict_response_empirical(&bundle, d, Link::Probit);
            let mb = predict_response_modelbased(&est, d);
            assert!(
                (emp - mb).abs() < 0.01,
                "dose {d}: empirical={emp}, modelbased={mb}"
            );
            assert!((0.0..=1.0).contains(&emp));
        }
    }

    #[test]
    fn empirical_predictions_increase_with_dose() {
        let bundle = synthetic_cf_bundle(
            [-3.0, 1.0, 0.5],
            [0.2, 0.9],
            1.0,
            vec![-1.5, -0.5, 0.0, 0.5, 1.5],
        );
        let mut last = 0.0;
        for k in 0..6 {
            let p = predict_response_empirical(&bundle, k as f64, Link::Probit);
            assert!(p > last, "dose {k}: {p} <= {last}");
            last = p;
        }
    }

    #[test]
    fn unadjusted_empirical_prediction_drops_only_the_control_term() {
        let eta = vec![-1.0, 0.0, 1.0];
        let cf = synthetic_cf_bundle([-2.0, 0.8, 0.0], [0.1, 1.0], 1.0, eta.clone());
        let un = UnadjFitBundle {
            de_fit: cf.de_fit.clone(),
            eta_hat: eta,
            sigma_eta2_hat: 1.0,
            er_fit: FitResult {
                coefficients: vec![-2.0, 0.8],
                converged: true,
                iterations: 3,
                residuals: Vec::new(),
                residual_variance: None,
                deviance: Some(1.0),
            },
            er_link: Link::Probit,
        };
        // With a zero control coefficient the two formulas coincide.
        for d in [1.0, 3.0, 5.0] {
            let a = predict_response_empirical(&cf, d, Link::Probit);
            let b = predict_response_empirical_unadjusted(&un, d, Link::Probit);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_ratio_reference_value_and_limits() {
        // Unit effects, dose-grid variance 2, unit noise on both sides.
        let r = linear_variance_ratio_unadjusted(1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((r - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
        // Exposure noise dominating ⇒ nothing left to gain.
        let r = linear_variance_ratio_unadjusted(1.0, 1.0, 2.0, 1e6, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-5);
        assert_eq!(linear_variance_ratio_cf(), 1.0);
    }

    #[test]
    fn linear_ratio_rejects_nonpositive_variances() {
        assert!(linear_variance_ratio_unadjusted(1.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(linear_variance_ratio_unadjusted(1.0, 1.0, 2.0, -1.0, 1.0).is_err());
        assert!(linear_variance_ratio_unadjusted(1.0, 1.0, 2.0, 1.0, f64::NAN).is_err());
        assert!(linear_product_variance_approx(1.0, 1.0, 2.0, 1.0, 0.0, 100).is_err());
    }

    #[test]
    fn sequential_product_variance_approximation_matches_monte_carlo() {
        // At n = 10⁴ the first-order variance formula should sit within a
        // few percent of the truth; the Monte Carlo noise at 1200
        // replications is ~4%, so 10% is a safe gate.
        let cfg = s1(10_000, 0.0);
        let reps = 1200;
        let mut products = Vec::with_capacity(reps);
        for r in 0..reps {
            let data = generate_linear_trial(&cfg, &mut RngStream::new(424242, r as u64));
            let est = estimate_linear_trial(&data).unwrap();
            products.push(est.unadj_product);
        }
        let mean = products.iter().sum::<f64>() / reps as f64;
        let var = products.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>()
            / (reps - 1) as f64;
        let predicted =
            linear_product_variance_approx(1.0, 1.0, 2.0, 1.0, 1.0, cfg.n).unwrap();
        let rel = (var - predicted).abs() / predicted;
        assert!(rel < 0.10, "mc var={var:e}, predicted={predicted:e}, rel={rel}");
    }

    #[test]
    fn cf_product_equals_direct_slope_trial_by_trial() {
        let cfg = s1(200, 0.0);
        let mut worst = 0.0f64;
        for r in 0..200 {
            let data = generate_linear_trial(&cfg, &mut RngStream::new(7117, r));
            let est = estimate_linear_trial(&data).unwrap();
            worst = worst.max((est.cf_product - est.dr_slope).abs());
            // while the unadjusted product genuinely differs
            assert!((est.unadj_product - est.dr_slope).abs() > 1e-12);
        }
        assert!(worst < 1e-10, "max deviation {worst:e}");
    }
}
