//! Strict TOML run configuration. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use robustdrift_core::{
    validate_drift_model, validate_market, DriftModelParams, EvalMode, ExpertDates, ExpertScaling,
    FiltrationKind, MarketParams, OuScheme, StudyConfig, ValidatedDriftModel, ValidatedMarket,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Csv,
    Json,
    Both,
}

impl Emit {
    pub fn csv(self) -> bool {
        matches!(self, Emit::Csv | Emit::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Emit::Json | Emit::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    PlugIn,
    SdeMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketBlock {
    #[serde(default)]
    pub r: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub x0: f64,
    /// Asset volatility, d×m; the return-observation volatility when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftBlock {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub m0: Vec<f64>,
    pub sigma0: Vec<Vec<f64>>,
    pub sigma_r: Vec<Vec<f64>>,
    /// Expert volatility; the base expert covariance is `σ_J σ_Jᵀ`.
    pub sigma_j: Vec<Vec<f64>>,
}

/// Inputs of the one-shot `solve` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    pub nu: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub kappa: f64,
    #[serde(default = "default_angles")]
    pub oracle_angles: usize,
    #[serde(default = "default_saddle")]
    pub saddle_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_n_experts")]
    pub n_experts: usize,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default = "default_inner")]
    pub inner_paths: usize,
    #[serde(default = "yes")]
    pub feedback: bool,
    #[serde(default = "default_out")]
    pub output_dir: String,
    #[serde(default = "default_emit")]
    pub emit: Emit,
    #[serde(default = "default_dates")]
    pub expert_dates: ExpertDates,
    #[serde(default = "default_scaling")]
    pub expert_scaling: ExpertScaling,
    #[serde(default = "default_scheme")]
    pub ou_scheme: OuScheme,
    pub market: MarketBlock,
    pub drift: DriftBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveBlock>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_eta() -> f64 {
    0.1
}
fn default_n_sims() -> usize {
    2000
}
fn default_n_steps() -> usize {
    250
}
fn default_n_experts() -> usize {
    10
}
fn default_kinds() -> Vec<String> {
    ["N", "R", "E", "C"].iter().map(|s| s.to_string()).collect()
}
fn default_mode() -> ModeName {
    ModeName::PlugIn
}
fn default_inner() -> usize {
    200
}
fn default_out() -> String {
    "out".into()
}
fn default_emit() -> Emit {
    Emit::Both
}
fn default_dates() -> ExpertDates {
    ExpertDates::Interior
}
fn default_scaling() -> ExpertScaling {
    ExpertScaling::Direct
}
fn default_scheme() -> OuScheme {
    OuScheme::Euler
}
fn default_angles() -> usize {
    3600
}
fn default_saddle() -> usize {
    1000
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        CliError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

/// Configuration after all checks, with core parameter types built.
#[derive(Debug, Clone)]
pub struct ValidatedRun {
    pub config: RunConfig,
    pub seed: u64,
    pub market: ValidatedMarket,
    pub model: ValidatedDriftModel,
    pub study: StudyConfig,
    pub kinds: Vec<FiltrationKind>,
    pub mode: EvalMode,
}

impl ValidatedRun {
    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.config.output_dir)
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], problems: &mut Vec<String>) -> Option<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        problems.push(format!("{name} must be a non-empty matrix"));
        return None;
    }
    if rows.iter().any(|r| r.len() != m) {
        problems.push(format!("{name} has rows of different lengths"));
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl RunConfig {
    /// Echo used in reports; parsing it yields an identical configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Encode(e.to_string()))
    }

    fn check(
        &self,
        need_market: bool,
    ) -> (
        Vec<String>,
        Option<ValidatedMarket>,
        Option<ValidatedDriftModel>,
        Vec<FiltrationKind>,
    ) {
        let mut problems = Vec::new();
        if self.seed.is_none() {
            problems.push("seed is required (there is no clock-based default)".to_string());
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            problems.push(format!("eta = {} must lie in (0, 1)", self.eta));
        }
        if self.n_sims == 0 {
            problems.push("n_sims must be at least 1".into());
        }
        if self.n_steps == 0 {
            problems.push("n_steps must be at least 1".into());
        }
        if !(self.market.horizon > 0.0) {
            problems.push(format!(
                "market.horizon = {} must be > 0",
                self.market.horizon
            ));
        }
        if self.mode == ModeName::SdeMc && self.inner_paths < 2 {
            problems.push("inner_paths must be at least 2 in sde_mc mode".into());
        }
        let mut kinds = Vec::new();
        for k in &self.kinds {
            match k.parse::<FiltrationKind>() {
                Ok(kind) if !kinds.contains(&kind) => kinds.push(kind),
                Ok(_) => problems.push(format!("filtration {k} listed twice")),
                Err(e) => problems.push(e),
            }
        }
        if kinds.is_empty() {
            problems.push("kinds must name at least one filtration".into());
        }
        kinds.sort();

        let d = &self.drift;
        let alpha = matrix("drift.alpha", &d.alpha, &mut problems);
        let beta = matrix("drift.beta", &d.beta, &mut problems);
        let sigma0 = matrix("drift.sigma0", &d.sigma0, &mut problems);
        let sigma_r = matrix("drift.sigma_r", &d.sigma_r, &mut problems);
        let sigma_j = matrix("drift.sigma_j", &d.sigma_j, &mut problems);
        let sigma = match &self.market.sigma {
            Some(s) => matrix("market.sigma", s, &mut problems),
            None => sigma_r.clone(),
        };
        if let Some(sj) = &sigma_j {
            if sj.nrows() != d.delta.len() {
                problems.push(format!("drift.sigma_j must have {} rows", d.delta.len()));
            }
        }

        let mut model = None;
        if let (Some(alpha), Some(beta), Some(sigma0), Some(sigma_r), Some(sigma_j)) =
            (alpha, beta, sigma0, sigma_r, sigma_j)
        {
            if sigma_j.nrows() == d.delta.len() {
                match validate_drift_model(DriftModelParams {
                    alpha,
                    beta,
                    delta: DVector::from_column_slice(&d.delta),
                    m0: DVector::from_column_slice(&d.m0),
                    sigma0,
                    sigma_r,
                    expert_cov: &sigma_j * sigma_j.transpose(),
                }) {
                    Ok(v) => model = Some(v),
                    Err(e) => problems.extend(e.0.iter().map(|v| format!("drift: {v}"))),
                }
            }
        }
        let mut market = None;
        if need_market {
            if let Some(sigma) = sigma {
                let (n, m) = sigma.shape();
                match validate_market(MarketParams {
                    d: n,
                    m,
                    r: self.market.r,
                    sigma,
                    gamma: self.market.gamma,
                    h: self.market.h,
                    horizon: self.market.horizon,
                    x0: self.market.x0,
                }) {
                    Ok(v) => market = Some(v),
                    Err(e) => problems.extend(e.0.iter().map(|v| format!("market: {v}"))),
                }
            }
            if let (Some(mk), Some(md)) = (&market, &model) {
                if mk.d() != md.d() {
                    problems.push(format!(
                        "market has {} assets but the drift has dimension {}",
                        mk.d(),
                        md.d()
                    ));
                }
            }
            if let Some(s) = &self.solve {
                if !(s.kappa > 0.0) {
                    problems.push(format!("solve.kappa = {} must be > 0", s.kappa));
                }
                if s.nu.len() != d.delta.len() {
                    problems.push(format!("solve.nu must have length {}", d.delta.len()));
                }
                matrix("solve.gamma", &s.gamma, &mut problems);
            }
        }
        (problems, market, model, kinds)
    }

    fn study_config(&self) -> StudyConfig {
        StudyConfig {
            eta: self.eta,
            n_steps: self.n_steps,
            n_experts: self.n_experts,
            expert_dates: self.expert_dates,
            expert_scaling: self.expert_scaling,
            ou_scheme: self.ou_scheme,
            regularize: true,
        }
    }

    /// Full validation: market, drift model and run settings.
    pub fn validate(&self) -> Result<ValidatedRun> {
        let (problems, market, model, kinds) = self.check(true);
        if !problems.is_empty() {
            return Err(CliError::Validation(problems));
        }
        let mode = match self.mode {
            ModeName::PlugIn => EvalMode::PlugIn,
            ModeName::SdeMc => EvalMode::SdeMc {
                inner_paths: self.inner_paths,
                feedback: self.feedback,
            },
        };
        Ok(ValidatedRun {
            config: self.clone(),
            seed: self.seed.expect("checked"),
            market: market.expect("checked"),
            model: model.expect("checked"),
            study: self.study_config(),
            kinds,
            mode,
        })
    }

    /// Validation for filter-only runs; the market block is not checked, so
    /// single-asset drift models are accepted.
    pub fn validate_drift(&self) -> Result<DriftRun> {
        let (problems, _, model, kinds) = self.check(false);
        if !problems.is_empty() {
            return Err(CliError::Validation(problems));
        }
        Ok(DriftRun {
            config: self.clone(),
            seed: self.seed.expect("checked"),
            model: model.expect("checked"),
            study: self.study_config(),
            kinds,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DriftRun {
    pub config: RunConfig,
    pub seed: u64,
    pub model: ValidatedDriftModel,
    pub study: StudyConfig,
    pub kinds: Vec<FiltrationKind>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub kinds: Option<Vec<String>>,
    pub mode: Option<ModeName>,
    pub out: Option<String>,
}

impl RunConfig {
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(p) = o.paths {
            self.n_sims = p;
        }
        if let Some(s) = o.steps {
            self.n_steps = s;
        }
        if let Some(k) = &o.kinds {
            self.kinds = k.clone();
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
[market]
gamma = 0.5
[drift]
alpha = [[3, 0], [0, 2]]
beta = [[0.5, 0.25], [0.25, 0.5]]
delta = [0.02, 0.03]
m0 = [0.02, 0.03]
sigma0 = [[0.01, 0], [0, 0.01]]
sigma_r = [[0.1, 0.05], [0.05, 0.1]]
sigma_j = [[0.1, 0.05], [0.05, 0.1]]
"#;

    #[test]
    fn defaults_fill_in() {
        let c = parse_config_str(MINIMAL, "t").unwrap();
        assert_eq!(c.n_steps, 250);
        assert_eq!(c.eta, 0.1);
        assert_eq!(c.market.h, 1.0);
        let v = c.validate().unwrap();
        assert_eq!(v.kinds, FiltrationKind::ALL.to_vec());
        assert_eq!(v.market.sigma(), v.model.sigma_r());
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = MINIMAL.replace("gamma = 0.5", "gamm = 0.5");
        match parse_config_str(&text, "t") {
            Err(CliError::Parse { line, message, .. }) => {
                assert!(message.contains("gamm"), "{message}");
                assert!(line >= 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_line_and_column() {
        let err = parse_config_str("seed = 1\neta = = 2\n", "t").unwrap_err();
        match err {
            CliError::Parse { line, column, .. } => assert_eq!((line, column), (2, 7)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_seed_is_invalid() {
        let text = MINIMAL.replace("seed = 1\n", "");
        let err = parse_config_str(&text, "t")
            .unwrap()
            .validate()
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn all_problems_listed() {
        let text = MINIMAL
            .replace("gamma = 0.5", "gamma = 1.5")
            .replace("seed = 1\n", "");
        match parse_config_str(&text, "t").unwrap().validate() {
            Err(CliError::Validation(p)) => assert!(p.len() >= 2, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = parse_config_str(MINIMAL, "t").unwrap();
        let echo = c.to_toml().unwrap();
        assert_eq!(parse_config_str(&echo, "echo").unwrap(), c);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
