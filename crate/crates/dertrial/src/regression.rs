//! Least squares and binary-outcome maximum likelihood on narrow designs.
//!
//! Every model in this crate regresses n subjects on at most an intercept and
//! three covariates, so the linear algebra is a hand-rolled Cholesky solve of
//! the normal equations rather than a matrix-library dependency. The GLM
//! fitter is iteratively reweighted least squares with an explicit failure
//! taxonomy: fits that run away (separation) or cannot be identified are
//! reported as errors, never silently returned, so a Monte Carlo caller can
//! count and exclude them instead of averaging garbage.

// The triangular solves and cross-product accumulations below follow the
// textbook index form over several arrays at once; iterator chains would
// obscure them. Negated comparisons are load-bearing: they treat NaN as a
// failed pivot or a missed convergence test. Oracle reference values in the
// tests freeze more decimal digits than f64 resolves.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision
)]

use crate::numerics::{expit, inv_std_normal_cdf, std_normal_cdf, std_normal_pdf};

/// Hard ceiling on design width: intercept plus three covariates.
pub const MAX_COLS: usize = 4;

/// Relative pivot floor for the Cholesky factorization. A column whose
/// residual (after projecting out earlier columns) falls below this fraction
/// of its own norm is declared linearly dependent.
pub const PIVOT_RTOL: f64 = 1e-10;

/// Coefficients larger than this in absolute value after convergence mean
/// the likelihood is maximized at infinity (separation in disguise).
pub const GLM_DIVERGENCE_BOUND: f64 = 30.0;

/// IRLS iteration budget.
pub const GLM_MAX_ITERATIONS: usize = 100;

/// Fitted probabilities are kept this far away from 0 and 1 so weights and
/// log-likelihood terms stay finite.
pub const MU_CLAMP: f64 = 1e-10;

/// IRLS stops when no coefficient moved by more than this between updates.
pub const COEF_TOL: f64 = 1e-8;

/// ... or when the deviance changes by less than this relative amount,
pub const DEV_REL_TOL: f64 = 1e-10;

/// ... or stalls within this absolute-plus-relative band. The band mirrors
/// how mainstream GLM implementations accept near-boundary fits; without it,
/// fits whose deviance plateaus while coefficients still creep are
/// mislabelled as failures, which visibly biases small-sample Monte Carlo
/// summaries.
pub const DEV_STALL_TOL: f64 = 1e-8;

const PDF_FLOOR: f64 = 1e-300;

/// Link function for binary-response models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Probit,
    Logit,
}

impl Link {
    /// Mean response for a linear predictor, clamped into (0, 1).
    pub fn mean(self, lp: f64) -> f64 {
        let mu = match self {
            Link::Probit => std_normal_cdf(lp),
            Link::Logit => expit(lp),
        };
        mu.clamp(MU_CLAMP, 1.0 - MU_CLAMP)
    }

    /// Working weight and working response for one IRLS row.
    fn irls_terms(self, lp: f64, y: f64) -> (f64, f64, f64) {
        match self {
            Link::Probit => {
                let mu = std_normal_cdf(lp).clamp(MU_CLAMP, 1.0 - MU_CLAMP);
                let phi = std_normal_pdf(lp);
                let w = phi * phi / (mu * (1.0 - mu));
                let z = lp + (y - mu) / phi.max(PDF_FLOOR);
                (mu, w, z)
            }
            Link::Logit => {
                let mu = expit(lp).clamp(MU_CLAMP, 1.0 - MU_CLAMP);
                let w = mu * (1.0 - mu);
                let z = lp + (y - mu) / w;
                (mu, w, z)
            }
        }
    }
}

/// Why a separated or otherwise degenerate GLM fit was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeparationDetail {
    /// The iteration budget ran out before any stopping rule fired.
    IterationCap,
    /// A coefficient exceeded [`GLM_DIVERGENCE_BOUND`] (or left the finite
    /// range altogether).
    DivergenceBound,
    /// The weighted normal equations lost rank mid-iteration.
    SingularSystem,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    /// Design column `column` (0-based, counting the intercept) is linearly
    /// dependent on the columns before it.
    #[error("design is rank deficient at column {column}")]
    RankDeficient { column: usize },
    /// The likelihood has no finite maximizer (complete or quasi-complete
    /// separation), detected as `detail` describes.
    #[error("response is separated ({detail:?})")]
    Separation { detail: SeparationDetail },
    /// All responses are the same class; no slope is identified.
    #[error("all responses are in one class")]
    OneClassOnly,
}

/// A regression design: optional implicit intercept plus up to three stored
/// covariate columns. Entries must be finite.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n_rows: usize,
    intercept: bool,
    covariates: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(n_rows: usize, intercept: bool) -> Self {
        DesignMatrix {
            n_rows,
            intercept,
            covariates: Vec::new(),
        }
    }

    pub fn with_intercept(n_rows: usize) -> Self {
        DesignMatrix::new(n_rows, true)
    }

    pub fn push_covariate(&mut self, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows, "covariate length mismatch");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "covariate contains a non-finite entry"
        );
        assert!(self.n_cols() < MAX_COLS, "design is limited to {MAX_COLS} columns");
        self.covariates.push(values);
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    fn fill_row(&self, i: usize, row: &mut [f64; MAX_COLS]) {
        let mut j = 0;
        if self.intercept {
            row[0] = 1.0;
            j = 1;
        }
        for col in &self.covariates {
            row[j] = col[i];
            j += 1;
        }
    }

    /// x_iᵀβ for row i.
    pub fn linear_predictor(&self, beta: &[f64], i: usize) -> f64 {
        let mut lp = 0.0;
        let mut j = 0;
        if self.intercept {
            lp = beta[0];
            j = 1;
        }
        for col in &self.covariates {
            lp += beta[j] * col[i];
            j += 1;
        }
        lp
    }
}

/// Output of either fitter. OLS fills `residuals`/`residual_variance`;
/// GLM fits fill `deviance` and leave the residual fields empty.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub residual_variance: Option<f64>,
    pub deviance: Option<f64>,
}

/// Solve A β = b for the leading p×p block, where only the lower triangle of
/// `a` is populated. Returns the index of the first rank-deficient column on
/// failure.
fn cholesky_solve(a: &[[f64; MAX_COLS]; MAX_COLS], b: &[f64; MAX_COLS], p: usize) -> Result<[f64; MAX_COLS], usize> {
    let mut l = [[0.0f64; MAX_COLS]; MAX_COLS];
    for k in 0..p {
        let mut d = a[k][k];
        for j in 0..k {
            d -= l[k][j] * l[k][j];
        }
        // Pivot below PIVOT_RTOL·‖column‖ (squared comparison) ⇒ dependent.
        // The negation also catches NaN.
        if !(d > PIVOT_RTOL * PIVOT_RTOL * a[k][k]) {
            return Err(k);
        }
        l[k][k] = d.sqrt();
        for i in (k + 1)..p {
            let mut s = a[i][k];
            for j in 0..k {
                s -= l[i][j] * l[k][j];
            }
            l[i][k] = s / l[k][k];
        }
    }
    // L w = b, then Lᵀ β = w.
    let mut w = [0.0f64; MAX_COLS];
    for i in 0..p {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i][j] * w[j];
        }
        w[i] = s / l[i][i];
    }
    let mut beta = [0.0f64; MAX_COLS];
    for i in (0..p).rev() {
        let mut s = w[i];
        for j in (i + 1)..p {
            s -= l[j][i] * beta[j];
        }
        beta[i] = s / l[i][i];
    }
    Ok(beta)
}

/// Ordinary least squares. `residual_variance` uses the n − p denominator.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<FitResult, FitError> {
    let n = x.n_rows();
    let p = x.n_cols();
    assert_eq!(y.len(), n, "response length mismatch");
    assert!(p >= 1 && n > p, "need more rows than columns");

    let mut xtx = [[0.0f64; MAX_COLS]; MAX_COLS];
    let mut xty = [0.0f64; MAX_COLS];
    let mut row = [0.0f64; MAX_COLS];
    for i in 0..n {
        x.fill_row(i, &mut row);
        for a in 0..p {
            for b in 0..=a {
                xtx[a][b] += row[a] * row[b];
            }
            xty[a] += row[a] * y[i];
        }
    }
    let beta = cholesky_solve(&xtx, &xty, p).map_err(|column| FitError::RankDeficient { column })?;

    let mut residuals = Vec::with_capacity(n);
    let mut rss = 0.0;
    for i in 0..n {
        let r = y[i] - x.linear_predictor(&beta[..p], i);
        rss += r * r;
        residuals.push(r);
    }
    Ok(FitResult {
        coefficients: beta[..p].to_vec(),
        converged: true,
        iterations: 1,
        residuals,
        residual_variance: Some(rss / (n - p) as f64),
        deviance: None,
    })
}

/// Binary-response GLM by iteratively reweighted least squares.
///
/// Responses must be coded 0/1. Starting values are zero except for the
/// intercept, which starts at the link-transformed mean response. Each
/// iteration forms the weighted normal equations and the deviance at the
/// current coefficients in one pass, takes the update, and stops when either
/// the largest coefficient move falls below [`COEF_TOL`] or the deviance
/// trajectory stalls (see [`DEV_REL_TOL`]/[`DEV_STALL_TOL`]). Exhausting
/// [`GLM_MAX_ITERATIONS`] or converging outside [`GLM_DIVERGENCE_BOUND`] is
/// reported as separation.
pub fn fit_glm_binary(x: &DesignMatrix, y: &[f64], link: Link) -> Result<FitResult, FitError> {
    let n = x.n_rows();
    let p = x.n_cols();
    assert_eq!(y.len(), n, "response length mismatch");
    assert!(p >= 1 && n > p, "need more rows than columns");
    debug_assert!(
        y.iter().all(|&v| v == 0.0 || v == 1.0),
        "responses must be coded 0/1"
    );

    let ybar = y.iter().sum::<f64>() / n as f64;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Err(FitError::OneClassOnly);
    }

    let mut beta = [0.0f64; MAX_COLS];
    if x.has_intercept() {
        let m = ybar.clamp(MU_CLAMP, 1.0 - MU_CLAMP);
        beta[0] = match link {
            Link::Probit => inv_std_normal_cdf(m),
            Link::Logit => (m / (1.0 - m)).ln(),
        };
    }

    let mut row = [0.0f64; MAX_COLS];
    let mut dev_prev: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=GLM_MAX_ITERATIONS {
        let mut xtwx = [[0.0f64; MAX_COLS]; MAX_COLS];
        let mut xtwz = [0.0f64; MAX_COLS];
        let mut dev = 0.0;
        for i in 0..n {
            x.fill_row(i, &mut row);
            let mut lp = 0.0;
            for a in 0..p {
                lp += row[a] * beta[a];
            }
            let (mu, w, z) = link.irls_terms(lp, y[i]);
            dev -= 2.0 * if y[i] == 1.0 { mu.ln() } else { (1.0 - mu).ln() };
            if w > 0.0 {
                for a in 0..p {
                    let rw = w * row[a];
                    for b in 0..=a {
                        xtwx[a][b] += rw * row[b];
                    }
                    xtwz[a] += rw * z;
                }
            }
        }

        let new_beta = cholesky_solve(&xtwx, &xtwz, p).map_err(|_| FitError::Separation {
            detail: SeparationDetail::SingularSystem,
        })?;
        let mut dbeta = 0.0f64;
        for j in 0..p {
            dbeta = dbeta.max((new_beta[j] - beta[j]).abs());
        }
        beta = new_beta;
        iterations = it;

        if !beta[..p].iter().all(|b| b.is_finite()) {
            return Err(FitError::Separation {
                detail: SeparationDetail::DivergenceBound,
            });
        }
        if dbeta < COEF_TOL {
            converged = true;
            break;
        }
        if let Some(prev) = dev_prev {
            let delta = (dev - prev).abs();
            if delta < DEV_REL_TOL * prev.abs() || delta < DEV_STALL_TOL * (0.1 + dev.abs()) {
                converged = true;
                break;
            }
        }
        dev_prev = Some(dev);
    }

    if !converged {
        return Err(FitError::Separation {
            detail: SeparationDetail::IterationCap,
        });
    }
    if beta[..p].iter().any(|b| b.abs() > GLM_DIVERGENCE_BOUND) {
        return Err(FitError::Separation {
            detail: SeparationDetail::DivergenceBound,
        });
    }

    let deviance = -2.0 * log_likelihood(x, y, &beta[..p], link);
    Ok(FitResult {
        coefficients: beta[..p].to_vec(),
        converged,
        iterations,
        residuals: Vec::new(),
        residual_variance: None,
        deviance: Some(deviance),
    })
}

/// Binomial log-likelihood Σ y ln μ + (1−y) ln(1−μ) at `beta`, with the same
/// mean clamping the fitter uses.
pub fn log_likelihood(x: &DesignMatrix, y: &[f64], beta: &[f64], link: Link) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.n_rows() {
        let mu = link.mean(x.linear_predictor(beta, i));
        ll += if y[i] == 1.0 { mu.ln() } else { (1.0 - mu).ln() };
    }
    ll
}

/// Gradient of [`log_likelihood`] with respect to `beta`.
pub fn score(x: &DesignMatrix, y: &[f64], beta: &[f64], link: Link) -> Vec<f64> {
    let p = x.n_cols();
    let mut g = vec![0.0f64; p];
    let mut row = [0.0f64; MAX_COLS];
    for i in 0..x.n_rows() {
        x.fill_row(i, &mut row);
        let lp = x.linear_predictor(beta, i);
        let factor = match link {
            Link::Probit => {
                let mu = std_normal_cdf(lp).clamp(MU_CLAMP, 1.0 - MU_CLAMP);
                (y[i] - mu) * std_normal_pdf(lp) / (mu * (1.0 - mu))
            }
            Link::Logit => y[i] - expit(lp).clamp(MU_CLAMP, 1.0 - MU_CLAMP),
        };
        for a in 0..p {
            g[a] += factor * row[a];
        }
    }
    g
}
