//! Trial data generation: randomized doses, a confounded continuous
//! exposure, and a binary (or continuous) response.
//!
//! Each subject receives one of a fixed grid of doses, assigned cyclically so
//! every dose group has (near-)equal size. The exposure picks up the dose
//! plus a noise term, and the response depends on the exposure plus noise
//! that is *correlated* with the exposure noise — the unobserved confounding
//! whose consequences the rest of the crate quantifies. Everything is driven
//! by a single [`RngStream`], so a dataset is a pure function of
//! `(master_seed, stream_index, config)`.

// The truth tables in the tests freeze full-precision decimal literals, some
// of which coincide with named constants (the slope truth at rho = 0 is
// exactly 1/sqrt 2).
#![allow(clippy::excessive_precision, clippy::approx_constant)]

use crate::numerics::{std_normal_cdf, RngStream};
use serde::{Deserialize, Serialize};

/// How the confounded noise pair is parameterized. The two forms describe
/// the same family of designs but wire the correlation and the intercept
/// shift differently, and they consume their normal draws in a different
/// order, so they are kept explicit and selectable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpForm {
    /// Shared-factor form: with a = ρ and b = √(1−ρ²), the exposure noise is
    /// σ_η(a·U + b·E_c) and the response noise is a·U + b·E_y, giving
    /// cov(noise pair) = σ_η·ρ². The intercept shift enters the *exposure*.
    /// Draw order per trial: U, E_c, E_y (each a block of n).
    Code,
    /// Direct-correlation form: the response noise is E_y and the exposure
    /// noise is σ_η(ρ·E_y + √(1−ρ²)·W), giving correlation exactly ρ. The
    /// intercept shift enters the *response threshold*. Draw order: E_y, W.
    Prose,
}

impl DgpForm {
    pub fn label(self) -> &'static str {
        match self {
            DgpForm::Code => "code",
            DgpForm::Prose => "prose",
        }
    }
}

impl std::str::FromStr for DgpForm {
    type Err = DgpError;
    fn from_str(s: &str) -> Result<Self, DgpError> {
        match s {
            "code" => Ok(DgpForm::Code),
            "prose" => Ok(DgpForm::Prose),
            other => Err(DgpError::InvalidParameter {
                what: format!("unknown dgp form {other:?} (expected \"code\" or \"prose\")"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DgpError {
    #[error("unknown scenario {id} (known: 1, 2)")]
    UnknownScenario { id: u32 },
    #[error("invalid configuration: {what}")]
    InvalidParameter { what: String },
}

/// The dose grids of the two built-in scenarios: 1, …, 5, either raw or
/// compressed by 1.5 (which pushes the dose-response curve further into the
/// lower tail and makes small-sample fits noticeably harder).
pub fn scenario_doses(id: u32) -> Result<Vec<f64>, DgpError> {
    match id {
        1 => Ok((1..=5).map(f64::from).collect()),
        2 => Ok((1..=5).map(|k| f64::from(k) / 1.5).collect()),
        _ => Err(DgpError::UnknownScenario { id }),
    }
}

/// Full description of one simulated trial design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub dose_levels: Vec<f64>,
    pub n: usize,
    pub rho: f64,
    /// Effect of the exposure on the response's latent scale.
    pub beta_c: f64,
    /// Effect of the dose on the exposure.
    pub gamma_d: f64,
    /// Intercept shift; placed per [`DgpForm`].
    pub shift: f64,
    /// Standard deviation of the exposure noise.
    pub sigma_eta: f64,
    pub form: DgpForm,
}

impl ScenarioConfig {
    /// The standard design: unit effects, shift −3, unit exposure noise.
    pub fn scenario(id: u32, n: usize, rho: f64, form: DgpForm) -> Result<Self, DgpError> {
        let cfg = ScenarioConfig {
            dose_levels: scenario_doses(id)?,
            n,
            rho,
            beta_c: 1.0,
            gamma_d: 1.0,
            shift: -3.0,
            sigma_eta: 1.0,
            form,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        let fail = |what: String| Err(DgpError::InvalidParameter { what });
        if self.dose_levels.is_empty() {
            return fail("dose_levels must be non-empty".into());
        }
        if self.dose_levels.iter().any(|d| !d.is_finite()) {
            return fail("dose_levels must be finite".into());
        }
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        for (name, v) in [
            ("beta_c", self.beta_c),
            ("gamma_d", self.gamma_d),
            ("shift", self.shift),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite, got {v}"));
            }
        }
        if !(self.sigma_eta.is_finite() && self.sigma_eta > 0.0) {
            return fail(format!("sigma_eta must be positive, got {}", self.sigma_eta));
        }
        Ok(())
    }

    /// Doses assigned cyclically: subject i gets level i mod k.
    pub fn assigned_doses(&self) -> Vec<f64> {
        let k = self.dose_levels.len();
        (0..self.n).map(|i| self.dose_levels[i % k]).collect()
    }

    /// Variance of the response's latent noise β_c·η + ε, which is what the
    /// marginal dose effect gets attenuated by.
    fn latent_variance(&self) -> f64 {
        let cross = match self.form {
            DgpForm::Code => self.rho * self.rho,
            DgpForm::Prose => self.rho,
        };
        self.beta_c * self.beta_c * self.sigma_eta * self.sigma_eta
            + 1.0
            + 2.0 * self.beta_c * self.sigma_eta * cross
    }
}

/// One generated trial. `response` holds 0/1 values for binary trials and
/// real values for linear ones; `exposure` is the confounded mediator.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDataset {
    pub dose: Vec<f64>,
    pub exposure: Vec<f64>,
    pub response: Vec<f64>,
}

/// The exposure and the response's latent noise for every subject, drawn in
/// the form's fixed order so streams replay identically.
fn draw_structural(cfg: &ScenarioConfig, stream: &mut RngStream) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = cfg.n;
    let dose = cfg.assigned_doses();
    match cfg.form {
        DgpForm::Code => {
            let a = cfg.rho;
            let b = (1.0 - cfg.rho * cfg.rho).sqrt();
            let u = stream.draw_std_normal(n);
            let e_c = stream.draw_std_normal(n);
            let e_y = stream.draw_std_normal(n);
            let mut exposure = Vec::with_capacity(n);
            let mut noise_y = Vec::with_capacity(n);
            for i in 0..n {
                let eta = cfg.sigma_eta * (a * u[i] + b * e_c[i]);
                exposure.push(cfg.gamma_d * dose[i] + cfg.shift + eta);
                noise_y.push(a * u[i] + b * e_y[i]);
            }
            (dose, exposure, noise_y)
        }
        DgpForm::Prose => {
            let b = (1.0 - cfg.rho * cfg.rho).sqrt();
            let e_y = stream.draw_std_normal(n);
            let w = stream.draw_std_normal(n);
            let mut exposure = Vec::with_capacity(n);
            let mut noise_y = Vec::with_capacity(n);
            for i in 0..n {
                let eta = cfg.sigma_eta * (cfg.rho * e_y[i] + b * w[i]);
                exposure.push(cfg.gamma_d * dose[i] + eta);
                noise_y.push(cfg.shift + e_y[i]);
            }
            (dose, exposure, noise_y)
        }
    }
}

/// Binary-response trial: the response indicates whether the latent value
/// β_c·exposure + noise crosses zero.
pub fn generate_trial(cfg: &ScenarioConfig, stream: &mut RngStream) -> TrialDataset {
    let (dose, exposure, noise_y) = draw_structural(cfg, stream);
    let response = exposure
        .iter()
        .zip(&noise_y)
        .map(|(&c, &e)| f64::from(cfg.beta_c * c + e > 0.0))
        .collect();
    TrialDataset {
        dose,
        exposure,
        response,
    }
}

/// Continuous-response variant of the same structure, used to study the
/// estimators where everything is analytically tractable.
pub fn generate_linear_trial(cfg: &ScenarioConfig, stream: &mut RngStream) -> TrialDataset {
    let (dose, exposure, noise_y) = draw_structural(cfg, stream);
    let response = exposure
        .iter()
        .zip(&noise_y)
        .map(|(&c, &e)| cfg.beta_c * c + e)
        .collect();
    TrialDataset {
        dose,
        exposure,
        response,
    }
}

/// Exact intercept and slope of the marginal dose-response probit
/// P(Y=1 | dose) = Φ(α₀ + α_d·dose).
///
/// Collapsing the exposure out of the model divides the structural
/// coefficients by the standard deviation of the total latent noise, which
/// *grows with ρ* through the noise covariance — so the marginal truth
/// depends on the confounding strength, not only on the structural effects.
pub fn marginal_dr_truth(cfg: &ScenarioConfig) -> (f64, f64) {
    let sd = cfg.latent_variance().sqrt();
    let intercept = match cfg.form {
        DgpForm::Code => cfg.beta_c * cfg.shift,
        DgpForm::Prose => cfg.shift,
    };
    (intercept / sd, cfg.beta_c * cfg.gamma_d / sd)
}

/// Exact marginal response probability at each configured dose level.
pub fn per_dose_truth(cfg: &ScenarioConfig) -> Vec<f64> {
    let (a0, ad) = marginal_dr_truth(cfg);
    cfg.dose_levels
        .iter()
        .map(|&d| std_normal_cdf(a0 + ad * d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s1(n: usize, rho: f64) -> ScenarioConfig {
        ScenarioConfig::scenario(1, n, rho, DgpForm::Code).unwrap()
    }

    #[test]
    fn scenario_grids() {
        assert_eq!(scenario_doses(1).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let s2 = scenario_doses(2).unwrap();
        for (k, d) in s2.iter().enumerate() {
            assert_eq!(*d, (k + 1) as f64 / 1.5);
        }
        assert_eq!(
            scenario_doses(3).unwrap_err(),
            DgpError::UnknownScenario { id: 3 }
        );
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut cfg = s1(40, 0.5);
        cfg.rho = 1.0;
        assert!(cfg.validate().is_err());
        cfg.rho = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = s1(40, 0.5);
        cfg.n = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = s1(40, 0.5);
        cfg.sigma_eta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = s1(40, 0.5);
        cfg.dose_levels.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn doses_cycle_through_the_grid() {
        let cfg = s1(12, 0.0);
        let d = cfg.assigned_doses();
        assert_eq!(d.len(), 12);
        for (i, v) in d.iter().enumerate() {
            assert_eq!(*v, cfg.dose_levels[i % 5]);
        }
        // Balanced when n is a multiple of the grid size.
        let cfg = s1(40, 0.0);
        for level in &cfg.dose_levels {
            let count = cfg.assigned_doses().iter().filter(|&&x| x == *level).count();
            assert_eq!(count, 8);
        }
    }

    #[test]
    fn trials_are_deterministic_in_the_stream() {
        let cfg = s1(60, 0.6);
        let t1 = generate_trial(&cfg, &mut RngStream::new(11, 4));
        let t2 = generate_trial(&cfg, &mut RngStream::new(11, 4));
        assert_eq!(t1, t2);
        let t3 = generate_trial(&cfg, &mut RngStream::new(11, 5));
        assert_ne!(t1, t3);
        assert!(t1.response.iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn exposure_noise_has_configured_variance() {
        for rho in [0.0, 0.9] {
            let cfg = s1(200_000, rho);
            let t = generate_trial(&cfg, &mut RngStream::new(2024, 0));
            let resid: Vec<f64> = t
                .exposure
                .iter()
                .zip(&t.dose)
                .map(|(&c, &d)| c - cfg.gamma_d * d - cfg.shift)
                .collect();
            let mean = resid.iter().sum::<f64>() / resid.len() as f64;
            let var = resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (resid.len() - 1) as f64;
            assert!(mean.abs() < 0.01, "rho={rho}: mean={mean}");
            assert!((var - 1.0).abs() < 0.02, "rho={rho}: var={var}");
        }
    }

    #[test]
    fn marginal_truth_matches_reference_values() {
        // (rho, alpha0, alpha_d) for the shared-factor form, 50-digit refs.
        let code_refs = [
            (0.0, -2.12132034355964239, 0.707106781186547573),
            (0.3, -2.03185638443578886, 0.677285461478596362),
            (0.6, -1.81901718777249721, 0.606339062590832478),
            (0.9, -1.57676499368291001, 0.525588331227636707),
        ];
        for (rho, a0, ad) in code_refs {
            let cfg = s1(40, rho);
            let (g0, gd) = marginal_dr_truth(&cfg);
            assert!((g0 - a0).abs() < 1e-14 * a0.abs(), "rho={rho}: {g0}");
            assert!((gd - ad).abs() < 1e-14 * ad.abs(), "rho={rho}: {gd}");
        }
        let prose_refs = [
            (0.5, -1.73205080756887719, 0.577350269189625731),
            (0.9, -1.53896752812773108, 0.512989176042577100),
        ];
        for (rho, a0, ad) in prose_refs {
            let cfg = ScenarioConfig::scenario(1, 40, rho, DgpForm::Prose).unwrap();
            let (g0, gd) = marginal_dr_truth(&cfg);
            assert!((g0 - a0).abs() < 1e-14 * a0.abs(), "rho={rho}: {g0}");
            assert!((gd - ad).abs() < 1e-14 * ad.abs(), "rho={rho}: {gd}");
        }
    }

    #[test]
    fn marginal_truth_special_cases() {
        let mut cfg = s1(40, 0.4);
        cfg.shift = 0.0;
        assert_eq!(marginal_dr_truth(&cfg).0, 0.0);
        // The two forms agree when the noise pair is uncorrelated.
        let code = s1(40, 0.0);
        let prose = ScenarioConfig::scenario(1, 40, 0.0, DgpForm::Prose).unwrap();
        assert_eq!(marginal_dr_truth(&code), marginal_dr_truth(&prose));
    }

    #[test]
    fn per_dose_truth_matches_reference_values() {
        let want_s1 = [
            7.86496035251425668e-02,
            2.39750061093476741e-01,
            5.00000000000000000e-01,
            7.60249938906523259e-01,
            9.21350396474857392e-01,
        ];
        let got = per_dose_truth(&s1(40, 0.0));
        for (g, w) in got.iter().zip(&want_s1) {
            assert!((g - w).abs() < 1e-13, "{g} vs {w}");
        }
        let want_s2 = [
            4.94800770097029094e-02,
            1.19296414658217720e-01,
            2.39750061093476741e-01,
            4.06831857883395931e-01,
            5.93168142116604069e-01,
        ];
        let cfg2 = ScenarioConfig::scenario(2, 40, 0.0, DgpForm::Code).unwrap();
        let got2 = per_dose_truth(&cfg2);
        for (g, w) in got2.iter().zip(&want_s2) {
            assert!((g - w).abs() < 1e-13, "{g} vs {w}");
        }
    }

    #[test]
    fn empirical_response_rates_track_the_marginal_truth() {
        // Moderate-size check; the high-precision version lives in the
        // acceptance suite.
        let cfg = s1(200_000, 0.6);
        let t = generate_trial(&cfg, &mut RngStream::new(5150, 0));
        let truth = per_dose_truth(&cfg);
        for (k, level) in cfg.dose_levels.iter().enumerate() {
            let (mut hits, mut total) = (0.0, 0.0);
            for (d, y) in t.dose.iter().zip(&t.response) {
                if d == level {
                    hits += y;
                    total += 1.0;
                }
            }
            let rate = hits / total;
            assert!(
                (rate - truth[k]).abs() < 0.01,
                "dose {level}: rate={rate}, truth={}",
                truth[k]
            );
        }
    }

    #[test]
    fn linear_trials_are_noisy_but_centered() {
        let cfg = s1(100_000, 0.0);
        let t = generate_linear_trial(&cfg, &mut RngStream::new(88, 0));
        // At rho = 0, E[Y | d] = beta_c·(gamma_d·d + shift).
        for (k, level) in cfg.dose_levels.iter().enumerate() {
            let _ = k;
            let vals: Vec<f64> = t
                .dose
                .iter()
                .zip(&t.response)
                .filter(|(d, _)| *d == level)
                .map(|(_, y)| *y)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let want = cfg.beta_c * (cfg.gamma_d * level + cfg.shift);
            assert!((mean - want).abs() < 0.05, "dose {level}: {mean} vs {want}");
        }
    }

    proptest! {
        /// The marginal slope shrinks as confounding grows: more shared
        /// noise means more attenuation.
        #[test]
        fn marginal_slope_attenuates_with_rho(r1 in 0.0f64..0.99, r2 in 0.0f64..0.99) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let slope_lo = marginal_dr_truth(&s1(40, lo)).1;
            let slope_hi = marginal_dr_truth(&s1(40, hi)).1;
            prop_assert!(slope_hi <= slope_lo + 1e-15);
        }

        /// Response probabilities are increasing in dose whenever the
        /// structural effects are positive.
        #[test]
        fn per_dose_truth_is_monotone(rho in 0.0f64..0.99) {
            let probs = per_dose_truth(&s1(40, rho));
            for w in probs.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
