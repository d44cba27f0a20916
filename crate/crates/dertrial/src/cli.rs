//! Command-line front end: argument parsing, output artifacts, manifests.
//!
//! Every run writes a `manifest.toml` capturing the fully resolved study
//! specification, so any artifact can be regenerated bit-for-bit later by
//! feeding the same settings back in — thread count and machine do not
//! matter. Floats are printed with 17 significant digits for the same
//! reason: parsing them back recovers the exact doubles.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dgp::{DgpForm, ScenarioConfig};
use crate::harness::{
    run_linear_check, run_study, Adjustment, AggregateReport, ExclusionMode, HarnessError,
    LinearCheckReport, PredictionForm, StudySpec, TruthMode,
};
use crate::regression::Link;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Runtime(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 for configuration/parse problems, 3 for a
    /// simulation that could not produce its results, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 2,
            CliError::Runtime(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

fn map_harness(e: HarnessError) -> CliError {
    match e {
        HarnessError::Config(c) => CliError::Config(c.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Parser, Debug)]
#[command(name = "dertrial", version, about = "Monte Carlo comparison of direct and sequential dose-response estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Bias/variance/MSE comparison table over an (n, rho) grid.
    Table(TableArgs),
    /// Per-dose prediction-variance ratios plus a gnuplot script.
    Figure(FigureArgs),
    /// Linear-model diagnostics: exact product identity and variance ratios.
    LinearCheck(LinearCheckArgs),
    /// Run a study described by a TOML config file.
    Custom(CustomArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AdjustArg {
    Cf,
    Unadj,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum LinkArg {
    Probit,
    Logit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FormArg {
    Modelbased,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TruthArg {
    Analytic,
    Fitted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DgpArg {
    Code,
    Prose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExclusionArg {
    Pairwise,
    Percolumn,
}

impl From<LinkArg> for Link {
    fn from(v: LinkArg) -> Link {
        match v {
            LinkArg::Probit => Link::Probit,
            LinkArg::Logit => Link::Logit,
        }
    }
}

impl From<FormArg> for PredictionForm {
    fn from(v: FormArg) -> PredictionForm {
        match v {
            FormArg::Modelbased => PredictionForm::ModelBased,
            FormArg::Empirical => PredictionForm::Empirical,
        }
    }
}

impl From<TruthArg> for TruthMode {
    fn from(v: TruthArg) -> TruthMode {
        match v {
            TruthArg::Analytic => TruthMode::Analytic,
            TruthArg::Fitted => TruthMode::Fitted,
        }
    }
}

impl From<DgpArg> for DgpForm {
    fn from(v: DgpArg) -> DgpForm {
        match v {
            DgpArg::Code => DgpForm::Code,
            DgpArg::Prose => DgpForm::Prose,
        }
    }
}

impl From<ExclusionArg> for ExclusionMode {
    fn from(v: ExclusionArg) -> ExclusionMode {
        match v {
            ExclusionArg::Pairwise => ExclusionMode::Pairwise,
            ExclusionArg::Percolumn => ExclusionMode::PerColumn,
        }
    }
}

fn adjustments_of(arg: AdjustArg) -> Vec<Adjustment> {
    match arg {
        AdjustArg::Cf => vec![Adjustment::Cf],
        AdjustArg::Unadj => vec![Adjustment::Unadj],
        AdjustArg::Both => vec![Adjustment::Unadj, Adjustment::Cf],
    }
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Scenario: 1 (doses 1..5) or 2 (doses compressed by 1.5).
    #[arg(long, default_value_t = 1)]
    pub scenario: u32,
    /// Trial sizes, comma separated (default depends on the command).
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Confounding strengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rho: Vec<f64>,
    /// Monte Carlo replications per grid cell.
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 123)]
    pub seed: u64,
    /// Which sequential estimators to run.
    #[arg(long, value_enum, default_value_t = AdjustArg::Both)]
    pub adjust: AdjustArg,
    /// Second-stage link for response predictions.
    #[arg(long, value_enum, default_value_t = LinkArg::Probit)]
    pub link: LinkArg,
    /// Bias target: exact values or a fitted large-trial standard.
    #[arg(long, value_enum, default_value_t = TruthArg::Analytic)]
    pub truth: TruthArg,
    /// Which parameterization of the confounded noise to simulate.
    #[arg(long, value_enum, default_value_t = DgpArg::Code)]
    pub dgp: DgpArg,
    /// How replications with failed fits are excluded.
    #[arg(long, value_enum, default_value_t = ExclusionArg::Pairwise)]
    pub exclusion: ExclusionArg,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct TableArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct FigureArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Prediction construction (ignored for logit, which is always
    /// subject-averaged).
    #[arg(long, value_enum, default_value_t = FormArg::Modelbased)]
    pub form: FormArg,
}

#[derive(Args, Debug)]
pub struct LinearCheckArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u32,
    /// Trial size.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Confounding strength (the analytic ratio assumes 0).
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 123)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DgpArg::Code)]
    pub dgp: DgpArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct CustomArgs {
    /// TOML study description; see `resolved_config.toml` of any custom run
    /// for the full schema.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config file's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Reproducibility record written next to every artifact.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub output_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<StudySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LinearManifest {
    pub replications: usize,
    pub master_seed: u64,
    pub scenario: ScenarioConfig,
}

/// The custom-run TOML schema. Optional fields fall back to the standard
/// table defaults; `scenario_config` replaces the whole design template (its
/// `n` and `rho` are placeholders that the grids override).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub command: String,
    pub scenario: Option<u32>,
    pub n: Option<Vec<usize>>,
    pub rho: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub adjust: Option<String>,
    pub link: Option<Link>,
    pub form: Option<PredictionForm>,
    pub truth: Option<TruthMode>,
    pub dgp: Option<DgpForm>,
    pub exclusion: Option<ExclusionMode>,
    pub out: Option<String>,
    pub scenario_config: Option<ScenarioConfig>,
}

/// A custom config resolved against the defaults.
#[derive(Debug)]
pub enum ResolvedCustom {
    Study {
        kind: StudyKind,
        /// Built-in scenario id, when the template was not overridden.
        scenario_id: Option<u32>,
        spec: StudySpec,
        out: PathBuf,
    },
    Linear {
        scenario: ScenarioConfig,
        replications: usize,
        master_seed: u64,
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Table,
    Figure,
}

fn parse_adjust(s: &str) -> Result<Vec<Adjustment>, CliError> {
    match s {
        "cf" => Ok(vec![Adjustment::Cf]),
        "unadj" => Ok(vec![Adjustment::Unadj]),
        "both" => Ok(vec![Adjustment::Unadj, Adjustment::Cf]),
        other => Err(CliError::Config(format!(
            "unknown adjust value {other:?} (expected \"cf\", \"unadj\" or \"both\")"
        ))),
    }
}

/// Whether two templates describe the same design, ignoring the `n` and
/// `rho` placeholders that study grids override.
fn same_design(a: &ScenarioConfig, b: &ScenarioConfig) -> bool {
    a.dose_levels == b.dose_levels
        && a.beta_c == b.beta_c
        && a.gamma_d == b.gamma_d
        && a.shift == b.shift
        && a.sigma_eta == b.sigma_eta
        && a.form == b.form
}

/// Turn a custom config into something runnable, applying the same defaults
/// the equivalent command-line invocation would.
pub fn resolve_custom_config(cfg: &CustomConfig) -> Result<ResolvedCustom, CliError> {
    let out = PathBuf::from(cfg.out.clone().unwrap_or_else(|| "out".into()));
    let dgp = cfg.dgp.unwrap_or(DgpForm::Code);
    let scenario_id = cfg.scenario.unwrap_or(1);
    let seed = cfg.seed.unwrap_or(123);

    if cfg.command == "linear-check" {
        let n = cfg.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(200);
        let rho = cfg.rho.as_ref().and_then(|v| v.first().copied()).unwrap_or(0.0);
        let scenario = match &cfg.scenario_config {
            Some(t) => {
                let mut t = t.clone();
                t.n = n;
                t.rho = rho;
                t
            }
            None => ScenarioConfig::scenario(scenario_id, n, rho, dgp)
                .map_err(|e| CliError::Config(e.to_string()))?,
        };
        return Ok(ResolvedCustom::Linear {
            scenario,
            replications: cfg.replications.unwrap_or(1000),
            master_seed: seed,
            out,
        });
    }

    let kind = match cfg.command.as_str() {
        "table" => StudyKind::Table,
        "figure" => StudyKind::Figure,
        other => {
            return Err(CliError::Config(format!(
                "unknown command {other:?} (expected \"table\", \"figure\" or \"linear-check\")"
            )))
        }
    };
    let default_n: Vec<usize> = match kind {
        StudyKind::Table => vec![40, 80, 120],
        StudyKind::Figure => vec![40, 80],
    };
    let n_values = cfg.n.clone().unwrap_or(default_n);
    let rho_values = cfg.rho.clone().unwrap_or(vec![0.0, 0.3, 0.6, 0.9]);
    let (template, scenario_id) = match &cfg.scenario_config {
        Some(t) => {
            let mut t = t.clone();
            t.form = cfg.dgp.unwrap_or(t.form);
            // A resolved config carries both the scenario number and the
            // expanded template. Keep the number only when the template
            // really is that built-in design; a hand-edited mismatch is
            // rejected rather than mislabelling rows as published cells.
            let id = match cfg.scenario {
                Some(id) => {
                    let builtin = ScenarioConfig::scenario(id, t.n, t.rho, t.form)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    if !same_design(&t, &builtin) {
                        return Err(CliError::Config(format!(
                            "scenario = {id} conflicts with the explicit [scenario_config]; \
                             drop one of the two"
                        )));
                    }
                    Some(id)
                }
                None => None,
            };
            (t, id)
        }
        None => (
            ScenarioConfig::scenario(scenario_id, *n_values.first().unwrap_or(&40), 0.0, dgp)
                .map_err(|e| CliError::Config(e.to_string()))?,
            Some(scenario_id),
        ),
    };
    let spec = StudySpec {
        n_values,
        rho_values,
        n_replications: cfg.replications.unwrap_or(10_000),
        master_seed: seed,
        adjustments: parse_adjust(cfg.adjust.as_deref().unwrap_or("both"))?,
        prediction_link: cfg.link.unwrap_or(Link::Probit),
        prediction_form: cfg.form.unwrap_or(PredictionForm::ModelBased),
        truth_mode: cfg.truth.unwrap_or(TruthMode::Analytic),
        exclusion_mode: cfg.exclusion.unwrap_or(ExclusionMode::Pairwise),
        scenario: template,
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(ResolvedCustom::Study {
        kind,
        scenario_id,
        spec,
        out,
    })
}

fn build_study_spec(
    common: &CommonArgs,
    default_n: &[usize],
    link: LinkArg,
    form: PredictionForm,
) -> Result<StudySpec, CliError> {
    let n_values = if common.n.is_empty() {
        default_n.to_vec()
    } else {
        common.n.clone()
    };
    let rho_values = if common.rho.is_empty() {
        vec![0.0, 0.3, 0.6, 0.9]
    } else {
        common.rho.clone()
    };
    let template = ScenarioConfig::scenario(
        common.scenario,
        *n_values.first().unwrap_or(&40),
        0.0,
        common.dgp.into(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let spec = StudySpec {
        n_values,
        rho_values,
        n_replications: common.reps,
        master_seed: common.seed,
        adjustments: adjustments_of(common.adjust),
        prediction_link: link.into(),
        prediction_form: form,
        truth_mode: common.truth.into(),
        exclusion_mode: common.exclusion.into(),
        scenario: template,
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

/// 17-significant-digit float rendering; parses back to the identical bits.
fn float17(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Artifact file name, labelled when the non-default noise form was used so
/// outputs from the two parameterizations cannot be mistaken for each other.
fn artifact_name(base: &str, ext: &str, form: DgpForm) -> String {
    match form {
        DgpForm::Code => format!("{base}.{ext}"),
        DgpForm::Prose => format!("{base}-prose-dgp.{ext}"),
    }
}

/// Output directory handle that refuses to clobber existing artifacts
/// unless `--force` was given.
struct OutputDir {
    dir: PathBuf,
    force: bool,
}

impl OutputDir {
    fn new(dir: &Path, force: bool) -> Result<OutputDir, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(io_ctx(format!("creating output directory {}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            force,
        })
    }

    fn ensure_fresh(&self, names: &[&str]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        for name in names {
            let p = self.dir.join(name);
            if p.exists() {
                return Err(CliError::Io {
                    context: format!(
                        "refusing to overwrite {} (pass --force to allow)",
                        p.display()
                    ),
                    source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "exists"),
                });
            }
        }
        Ok(())
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        std::fs::write(&p, contents).map_err(io_ctx(format!("writing {}", p.display())))?;
        Ok(p)
    }
}

/// Whether a given cell appears in the published comparison table for a
/// built-in scenario. The first scenario's table drops the strongest
/// confounding cell for the adjusted estimator at the largest trial size;
/// everything else on the standard grid is shown.
fn in_published_table(scenario_id: Option<u32>, n: usize, rho: f64, cf: bool) -> bool {
    let Some(id) = scenario_id else { return false };
    if !(id == 1 || id == 2) {
        return false;
    }
    let grid_n = [40usize, 80, 120].contains(&n);
    let grid_rho = [0.0, 0.3, 0.6, 0.9].contains(&rho);
    if !(grid_n && grid_rho) {
        return false;
    }
    !(id == 1 && cf && n == 120 && rho == 0.9)
}

pub const TABLE_CSV_HEADER: &str = "n,rho,cf_adjusted,bias_dr_a0,bias_dr_ad,bias_der_a0,bias_der_ad,var_dr_a0,var_dr_ad,vratio_a0,vratio_ad,mseratio_a0,mseratio_ad,excluded,in_published_table";

fn render_table_csv(reports: &[AggregateReport], scenario_id: Option<u32>) -> String {
    let mut out = String::new();
    out.push_str(TABLE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            float17(r.rho),
            r.adjustment.is_cf(),
            float17(r.dr_bias[0]),
            float17(r.dr_bias[1]),
            float17(r.der_bias[0]),
            float17(r.der_bias[1]),
            float17(r.dr_variance[0]),
            float17(r.dr_variance[1]),
            float17(r.ratio_variance_vs_dr[0]),
            float17(r.ratio_variance_vs_dr[1]),
            float17(r.ratio_mse_vs_dr[0]),
            float17(r.ratio_mse_vs_dr[1]),
            r.excluded_replications,
            in_published_table(scenario_id, r.n, r.rho, r.adjustment.is_cf()),
        );
    }
    out
}

pub const FIGURE_CSV_HEADER: &str = "n,rho,adjusted,dose,var_ratio";

fn render_figure_csv(reports: &[AggregateReport], doses: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(FIGURE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for (j, &dose) in doses.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                float17(r.rho),
                r.adjustment.is_cf(),
                float17(dose),
                float17(r.per_dose_variance_ratio[j]),
            );
        }
    }
    out
}

/// Companion gnuplot script: one panel per trial size, the adjusted
/// estimator's curve at every rho plus the unadjusted curve at the smallest
/// rho for reference.
fn render_figure_script(csv_name: &str, png_name: &str, spec: &StudySpec) -> String {
    let mut n_values = spec.n_values.clone();
    n_values.sort_unstable();
    n_values.dedup();
    let mut rho_values = spec.rho_values.clone();
    rho_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rho_values.dedup();

    let mut s = String::new();
    let _ = writeln!(s, "# Prediction-variance ratios (sequential / direct) by dose.");
    let _ = writeln!(s, "# Usage: gnuplot {}", csv_name.replace(".csv", ".gp"));
    let _ = writeln!(s, "set datafile separator comma");
    let _ = writeln!(s, "set datafile missing \"NaN\"");
    let _ = writeln!(s, "set terminal pngcairo size {},500 font \",11\"", 560 * n_values.len());
    let _ = writeln!(s, "set output \"{png_name}\"");
    let _ = writeln!(s, "set multiplot layout 1,{}", n_values.len());
    let _ = writeln!(s, "set key bottom right");
    let _ = writeln!(s, "set xlabel \"dose\"");
    let _ = writeln!(s, "set ylabel \"variance ratio\"");
    let _ = writeln!(s, "set yrange [0:1.25]");
    let _ = writeln!(s, "csv = \"{csv_name}\"");
    for &n in &n_values {
        let _ = writeln!(s, "set title \"n = {n}\"");
        let mut lines: Vec<String> = Vec::new();
        if spec.adjustments.contains(&Adjustment::Cf) {
            for &rho in &rho_values {
                lines.push(format!(
                    "csv every ::1 using ((abs($1-{n})<0.5 && abs($2-{rho:.17e})<1e-9 && strcol(3) eq \"true\") ? $4 : NaN):5 \
                     with linespoints title \"adjusted rho={rho}\""
                ));
            }
        }
        if spec.adjustments.contains(&Adjustment::Unadj) {
            let rho = rho_values[0];
            lines.push(format!(
                "csv every ::1 using ((abs($1-{n})<0.5 && abs($2-{rho:.17e})<1e-9 && strcol(3) eq \"false\") ? $4 : NaN):5 \
                 with linespoints dashtype 2 title \"unadjusted rho={rho}\""
            ));
        }
        let _ = writeln!(s, "plot \\\n    {}", lines.join(", \\\n    "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

pub const LINEAR_CSV_HEADER: &str = "n,replications,var_dr_slope,var_unadj_product,var_cf_product,ratio_unadj,ratio_unadj_se,ratio_cf,ratio_cf_se,analytic_ratio_unadj,analytic_ratio_cf,predicted_var_unadj_product,max_identity_deviation,identity_violations";

fn render_linear_csv(r: &LinearCheckReport) -> String {
    let mut out = String::new();
    out.push_str(LINEAR_CSV_HEADER);
    out.push('\n');
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.n,
        r.replications,
        float17(r.var_dr_slope),
        float17(r.var_unadj_product),
        float17(r.var_cf_product),
        float17(r.ratio_unadj),
        float17(r.ratio_unadj_se),
        float17(r.ratio_cf),
        float17(r.ratio_cf_se),
        float17(r.analytic_ratio_unadj),
        float17(r.analytic_ratio_cf),
        float17(r.predicted_var_unadj_product),
        float17(r.max_identity_deviation),
        r.identity_violations,
    );
    out
}

fn render_manifest(manifest: &RunManifest) -> Result<String, CliError> {
    toml::to_string_pretty(manifest)
        .map_err(|e| CliError::Runtime(format!("serializing manifest: {e}")))
}

fn print_table_summary(reports: &[AggregateReport]) {
    for r in reports {
        println!(
            "n={:<4} rho={:<4} {:<6} vratio=({:.3}, {:.3}) se=({:.3}, {:.3}) \
             mseratio=({:.3}, {:.3}) se=({:.3}, {:.3}) excluded={}",
            r.n,
            r.rho,
            r.adjustment.label(),
            r.ratio_variance_vs_dr[0],
            r.ratio_variance_vs_dr[1],
            r.ratio_variance_se[0],
            r.ratio_variance_se[1],
            r.ratio_mse_vs_dr[0],
            r.ratio_mse_vs_dr[1],
            r.ratio_mse_se[0],
            r.ratio_mse_se[1],
            r.excluded_replications,
        );
    }
}

fn run_table_study(
    spec: &StudySpec,
    scenario_id: Option<u32>,
    out_dir: &Path,
    force: bool,
    command: &str,
) -> Result<(), CliError> {
    let base = match scenario_id {
        Some(id) => format!("table{id}"),
        None => "table".to_string(),
    };
    let csv_name = artifact_name(&base, "csv", spec.scenario.form);
    let out = OutputDir::new(out_dir, force)?;
    out.ensure_fresh(&[&csv_name, "manifest.toml"])?;

    let reports = run_study(spec).map_err(map_harness)?;
    out.write(&csv_name, &render_table_csv(&reports, scenario_id))?;
    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        output_dir: out_dir.display().to_string(),
        spec: Some(spec.clone()),
        linear: None,
    };
    out.write("manifest.toml", &render_manifest(&manifest)?)?;
    print_table_summary(&reports);
    println!("wrote {}", out_dir.join(&csv_name).display());
    Ok(())
}

fn run_figure_study(
    spec: &StudySpec,
    out_dir: &Path,
    force: bool,
) -> Result<(), CliError> {
    let csv_name = artifact_name("figure", "csv", spec.scenario.form);
    let gp_name = artifact_name("figure", "gp", spec.scenario.form);
    let png_name = artifact_name("figure", "png", spec.scenario.form);
    let out = OutputDir::new(out_dir, force)?;
    out.ensure_fresh(&[&csv_name, &gp_name, "manifest.toml"])?;

    let reports = run_study(spec).map_err(map_harness)?;
    out.write(&csv_name, &render_figure_csv(&reports, &spec.scenario.dose_levels))?;
    out.write(&gp_name, &render_figure_script(&csv_name, &png_name, spec))?;
    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "figure".to_string(),
        output_dir: out_dir.display().to_string(),
        spec: Some(spec.clone()),
        linear: None,
    };
    out.write("manifest.toml", &render_manifest(&manifest)?)?;
    for r in &reports {
        println!(
            "n={:<4} rho={:<4} {:<6} per-dose vratio: {}",
            r.n,
            r.rho,
            r.adjustment.label(),
            r.per_dose_variance_ratio
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    println!("wrote {}", out_dir.join(&csv_name).display());
    Ok(())
}

fn run_linear_outputs(
    scenario: &ScenarioConfig,
    replications: usize,
    master_seed: u64,
    out_dir: &Path,
    force: bool,
) -> Result<(), CliError> {
    let csv_name = artifact_name("linear_check", "csv", scenario.form);
    let out = OutputDir::new(out_dir, force)?;
    out.ensure_fresh(&[&csv_name, "manifest.toml"])?;

    let report = run_linear_check(scenario, replications, master_seed).map_err(map_harness)?;
    out.write(&csv_name, &render_linear_csv(&report))?;
    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "linear-check".to_string(),
        output_dir: out_dir.display().to_string(),
        spec: None,
        linear: Some(LinearManifest {
            replications,
            master_seed,
            scenario: scenario.clone(),
        }),
    };
    out.write("manifest.toml", &render_manifest(&manifest)?)?;
    println!(
        "identity: max deviation {:.3e} over {} replications ({} violations)",
        report.max_identity_deviation, report.replications, report.identity_violations
    );
    println!(
        "variance ratio unadjusted: {:.4} (se {:.4}), analytic {:.4}",
        report.ratio_unadj, report.ratio_unadj_se, report.analytic_ratio_unadj
    );
    println!(
        "variance ratio adjusted:   {:.4} (se {:.4}), analytic {:.4}",
        report.ratio_cf, report.ratio_cf_se, report.analytic_ratio_cf
    );
    println!("wrote {}", out_dir.join(&csv_name).display());
    Ok(())
}

fn cmd_table(args: TableArgs) -> Result<(), CliError> {
    let spec = build_study_spec(
        &args.common,
        &[40, 80, 120],
        args.common.link,
        PredictionForm::ModelBased,
    )?;
    let command = format!("table{}", args.common.scenario);
    run_table_study(
        &spec,
        Some(args.common.scenario),
        &args.common.out,
        args.common.force,
        &command,
    )
}

fn cmd_figure(args: FigureArgs) -> Result<(), CliError> {
    let spec = build_study_spec(&args.common, &[40, 80], args.common.link, args.form.into())?;
    run_figure_study(&spec, &args.common.out, args.common.force)
}

fn cmd_linear_check(args: LinearCheckArgs) -> Result<(), CliError> {
    let scenario = ScenarioConfig::scenario(args.scenario, args.n, args.rho, args.dgp.into())
        .map_err(|e| CliError::Config(e.to_string()))?;
    run_linear_outputs(&scenario, args.reps, args.seed, &args.out, args.force)
}

/// Fully-resolved copy of a custom config, suitable for feeding back in.
fn render_resolved_config(resolved: &ResolvedCustom) -> Result<String, CliError> {
    let cfg = match resolved {
        ResolvedCustom::Study {
            kind,
            scenario_id,
            spec,
            out,
        } => CustomConfig {
            command: match kind {
                StudyKind::Table => "table",
                StudyKind::Figure => "figure",
            }
            .to_string(),
            scenario: *scenario_id,
            n: Some(spec.n_values.clone()),
            rho: Some(spec.rho_values.clone()),
            replications: Some(spec.n_replications),
            seed: Some(spec.master_seed),
            adjust: Some(
                match (
                    spec.adjustments.contains(&Adjustment::Unadj),
                    spec.adjustments.contains(&Adjustment::Cf),
                ) {
                    (true, true) => "both",
                    (false, true) => "cf",
                    _ => "unadj",
                }
                .to_string(),
            ),
            link: Some(spec.prediction_link),
            form: Some(spec.prediction_form),
            truth: Some(spec.truth_mode),
            dgp: Some(spec.scenario.form),
            exclusion: Some(spec.exclusion_mode),
            out: Some(out.display().to_string()),
            scenario_config: Some(spec.scenario.clone()),
        },
        ResolvedCustom::Linear {
            scenario,
            replications,
            master_seed,
            out,
        } => CustomConfig {
            command: "linear-check".to_string(),
            scenario: None,
            n: Some(vec![scenario.n]),
            rho: Some(vec![scenario.rho]),
            replications: Some(*replications),
            seed: Some(*master_seed),
            adjust: None,
            link: None,
            form: None,
            truth: None,
            dgp: Some(scenario.form),
            exclusion: None,
            out: Some(out.display().to_string()),
            scenario_config: Some(scenario.clone()),
        },
    };
    toml::to_string_pretty(&cfg)
        .map_err(|e| CliError::Runtime(format!("serializing resolved config: {e}")))
}

fn cmd_custom(args: CustomArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(io_ctx(format!("reading {}", args.config.display())))?;
    let cfg: CustomConfig = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let mut resolved = resolve_custom_config(&cfg)?;
    if let Some(out_override) = args.out {
        match &mut resolved {
            ResolvedCustom::Study { out, .. } | ResolvedCustom::Linear { out, .. } => {
                *out = out_override;
            }
        }
    }

    match &resolved {
        ResolvedCustom::Study {
            kind,
            scenario_id,
            spec,
            out,
        } => {
            let out_handle = OutputDir::new(out, args.force)?;
            out_handle.ensure_fresh(&["resolved_config.toml"])?;
            out_handle.write("resolved_config.toml", &render_resolved_config(&resolved)?)?;
            match kind {
                StudyKind::Table => {
                    run_table_study(spec, *scenario_id, out, args.force, "custom")?
                }
                StudyKind::Figure => run_figure_study(spec, out, args.force)?,
            }
        }
        ResolvedCustom::Linear {
            scenario,
            replications,
            master_seed,
            out,
        } => {
            let out_handle = OutputDir::new(out, args.force)?;
            out_handle.ensure_fresh(&["resolved_config.toml"])?;
            out_handle.write("resolved_config.toml", &render_resolved_config(&resolved)?)?;
            run_linear_outputs(scenario, *replications, *master_seed, out, args.force)?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Table(args) => cmd_table(args),
        Command::Figure(args) => cmd_figure(args),
        Command::LinearCheck(args) => cmd_linear_check(args),
        Command::Custom(args) => cmd_custom(args),
    }
}

/// One parsed row of a comparison-table CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub n: usize,
    pub rho: f64,
    pub cf_adjusted: bool,
    pub bias_dr: [f64; 2],
    pub bias_der: [f64; 2],
    pub var_dr: [f64; 2],
    pub vratio: [f64; 2],
    pub mseratio: [f64; 2],
    pub excluded: usize,
    pub in_published_table: bool,
}

fn parse_err(message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: "<csv>".to_string(),
        message: message.into(),
    }
}

fn parse_f64(field: &str) -> Result<f64, CliError> {
    if field == "NaN" {
        return Ok(f64::NAN);
    }
    field
        .parse()
        .map_err(|e| parse_err(format!("bad float {field:?}: {e}")))
}

fn parse_bool(field: &str) -> Result<bool, CliError> {
    match field {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(parse_err(format!("bad bool {other:?}"))),
    }
}

/// Parse a table CSV produced by this tool (round-trips exactly).
pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TABLE_CSV_HEADER => {}
        other => return Err(parse_err(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(parse_err(format!("expected 15 fields, got {}", f.len())));
        }
        rows.push(TableRow {
            n: f[0].parse().map_err(|e| parse_err(format!("bad n: {e}")))?,
            rho: parse_f64(f[1])?,
            cf_adjusted: parse_bool(f[2])?,
            bias_dr: [parse_f64(f[3])?, parse_f64(f[4])?],
            bias_der: [parse_f64(f[5])?, parse_f64(f[6])?],
            var_dr: [parse_f64(f[7])?, parse_f64(f[8])?],
            vratio: [parse_f64(f[9])?, parse_f64(f[10])?],
            mseratio: [parse_f64(f[11])?, parse_f64(f[12])?],
            excluded: f[13].parse().map_err(|e| parse_err(format!("bad excluded: {e}")))?,
            in_published_table: parse_bool(f[14])?,
        });
    }
    Ok(rows)
}

/// One parsed row of a figure CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub n: usize,
    pub rho: f64,
    pub adjusted: bool,
    pub dose: f64,
    pub var_ratio: f64,
}

pub fn parse_figure_csv(text: &str) -> Result<Vec<FigureRow>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == FIGURE_CSV_HEADER => {}
        other => return Err(parse_err(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, got {}", f.len())));
        }
        rows.push(FigureRow {
            n: f[0].parse().map_err(|e| parse_err(format!("bad n: {e}")))?,
            rho: parse_f64(f[1])?,
            adjusted: parse_bool(f[2])?,
            dose: parse_f64(f[3])?,
            var_ratio: parse_f64(f[4])?,
        });
    }
    Ok(rows)
}
