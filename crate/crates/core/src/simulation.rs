//! Scenario simulation, the filter → uncertainty set → robust solve pipeline,
//! utility evaluation and the four-filtration study.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{
    confidence_ellipsoid, confidence_ellipsoid_regularized, confidence_radius, Ellipsoid,
};
use crate::error::{Error, Result};
use crate::filters::{
    expert_update, kalman_step, run_filter, stationary_lyapunov, ExpertOpinion, FilterState,
    FiltrationKind,
};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::market::{ValidatedDriftModel, ValidatedMarket};
use crate::merton::{
    constraint_geometry, expected_utility, merton_strategy, ConstraintGeometry, StepPath,
};
use crate::rng;
use crate::robust::worst_case_drift;

/// Study columns, in report order.
pub const COLUMNS: [&str; 4] = ["robust_worst", "naive_worst", "robust_ref", "naive_ref"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertDates {
    /// `kT/(n+1)`, `k = 1..n`
    Interior,
    /// `kT/n`, `k = 0..n−1`
    Left,
    /// `kT/n`, `k = 1..n`
    Right,
}

/// How the configured expert covariance maps to the per-opinion `Γ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertScaling {
    /// `Γ_k` is the configured covariance.
    Direct,
    /// `Γ_k` is the configured covariance times `n/T`, the discrete analogue
    /// of a continuous expert with that diffusion covariance.
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuScheme {
    Euler,
    /// Exact Gaussian transition of the OU process over each step.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalMode {
    PlugIn,
    SdeMc { inner_paths: usize, feedback: bool },
}

impl EvalMode {
    pub fn label(&self) -> &'static str {
        match self {
            EvalMode::PlugIn => "plug_in",
            EvalMode::SdeMc { .. } => "sde_mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub eta: f64,
    pub n_steps: usize,
    pub n_experts: usize,
    pub expert_dates: ExpertDates,
    pub expert_scaling: ExpertScaling,
    pub ou_scheme: OuScheme,
    /// Lift flat filter covariances instead of failing.
    pub regularize: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            n_steps: 250,
            n_experts: 10,
            expert_dates: ExpertDates::Interior,
            expert_scaling: ExpertScaling::Direct,
            ou_scheme: OuScheme::Euler,
            regularize: true,
        }
    }
}

/// Random inputs of one scenario, shared by every filtration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub index: u64,
    /// True drift at each of the `n + 1` grid points.
    pub mu_true: Vec<DVector<f64>>,
    /// Return increments over each step.
    pub returns: Vec<DVector<f64>>,
    pub experts: Vec<ExpertOpinion>,
}

/// Pipeline outputs along the grid, one entry per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Realized {
    pub filter: Vec<FilterState>,
    pub k_path: Vec<Ellipsoid>,
    pub mu_star: Vec<DVector<f64>>,
    pub pi_star: Vec<DVector<f64>>,
    pub pi_hat: Vec<DVector<f64>>,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub kind: FiltrationKind,
    pub grid: TimeGrid,
    pub scenario: Scenario,
    pub realized: Realized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub values: [f64; 4],
    /// Inner Monte Carlo standard errors; zero in plug-in mode.
    pub std_errors: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub kind: FiltrationKind,
    pub n: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
    #[serde(skip)]
    pub samples: Vec<[f64; 4]>,
}

impl StudyRow {
    /// `std/√n`
    pub fn std_error(&self, col: usize) -> f64 {
        self.std[col] / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub n_sims: usize,
    pub n_experts: usize,
    pub seed: u64,
    pub n_steps: usize,
    pub mode: EvalMode,
}

impl StudyReport {
    pub fn row(&self, kind: FiltrationKind) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }
}

#[derive(Debug, Clone)]
struct OuTransition {
    decay: DMatrix<f64>,
    noise: DMatrix<f64>,
}

/// Draws scenarios and runs filters; needs only the drift model and grid.
#[derive(Debug, Clone)]
pub struct ScenarioGenerator {
    model: ValidatedDriftModel,
    grid: TimeGrid,
    expert_indices: Vec<usize>,
    expert_factor: DMatrix<f64>,
    sigma0_sqrt: DMatrix<f64>,
    exact: Option<OuTransition>,
}

impl ScenarioGenerator {
    /// The drift model's expert covariance is rescaled according to
    /// `config.expert_scaling` before use.
    pub fn new(model: ValidatedDriftModel, horizon: f64, config: &StudyConfig) -> Result<Self> {
        let grid = TimeGrid::new(horizon, config.n_steps)?;
        let model = match config.expert_scaling {
            ExpertScaling::Direct => model,
            ExpertScaling::Diffusion => {
                let scale = config.n_experts.max(1) as f64 / horizon;
                model.with_expert_cov(model.expert_cov() * scale)?
            }
        };
        let expert_factor = linalg::cholesky_factor(model.expert_cov())?;
        let sigma0_sqrt = linalg::psd_sqrt(model.sigma0());
        let expert_indices = expert_schedule(&grid, config.n_experts, config.expert_dates);
        let exact = match config.ou_scheme {
            OuScheme::Euler => None,
            OuScheme::Exact => Some(ou_transition(&model, grid.dt())?),
        };
        Ok(Self {
            model,
            grid,
            expert_indices,
            expert_factor,
            sigma0_sqrt,
            exact,
        })
    }

    /// Drift model with the effective expert covariance.
    pub fn model(&self) -> &ValidatedDriftModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Grid indices of the information dates.
    pub fn expert_indices(&self) -> &[usize] {
        &self.expert_indices
    }

    /// Draws the scenario with index `index`: initial drift, OU path and
    /// return noise from one substream, expert noise from another.
    pub fn simulate(&self, seed: u64, index: u64) -> Scenario {
        let d = self.model.d();
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        let sdt = dt.sqrt();
        let p = self.model.params();
        let mut path_rng = rng::stream(seed, &[index, 0]);
        let normals = |k: usize, r: &mut rand_chacha::ChaCha8Rng| {
            DVector::from_fn(k, |_, _| r.sample::<f64, _>(StandardNormal))
        };

        let mut mu = &p.m0 + &self.sigma0_sqrt * normals(d, &mut path_rng);
        let mut mu_true = Vec::with_capacity(n + 1);
        let mut returns = Vec::with_capacity(n);
        mu_true.push(mu.clone());
        let m = p.sigma_r.ncols();
        for _ in 0..n {
            let xi = normals(m, &mut path_rng);
            let eta = normals(d, &mut path_rng);
            returns.push(&mu * dt + &p.sigma_r * xi * sdt);
            mu = match &self.exact {
                None => &mu + &p.alpha * (&p.delta - &mu) * dt + &p.beta * eta * sdt,
                Some(t) => &p.delta + &t.decay * (&mu - &p.delta) + &t.noise * eta,
            };
            mu_true.push(mu.clone());
        }

        let mut expert_rng = rng::stream(seed, &[index, 1]);
        let experts = self
            .expert_indices
            .iter()
            .map(|&i| ExpertOpinion {
                t_k: self.grid.time(i),
                z: &mu_true[i] + &self.expert_factor * normals(d, &mut expert_rng),
                cov: self.model.expert_cov().clone(),
            })
            .collect();
        Scenario {
            index,
            mu_true,
            returns,
            experts,
        }
    }

    pub fn filter(&self, kind: FiltrationKind, scenario: &Scenario) -> Result<Vec<FilterState>> {
        run_filter(
            kind,
            &scenario.returns,
            &scenario.experts,
            &self.model,
            &self.grid,
        )
    }
}

/// Fixed inputs of the pipeline: market, scenario generator and set radius.
#[derive(Debug, Clone)]
pub struct Pipeline {
    market: ValidatedMarket,
    geom: ConstraintGeometry,
    kappa: f64,
    config: StudyConfig,
    gen: ScenarioGenerator,
}

impl Pipeline {
    /// The drift model's expert covariance is rescaled according to
    /// `config.expert_scaling` before use.
    pub fn new(
        market: ValidatedMarket,
        model: ValidatedDriftModel,
        config: StudyConfig,
    ) -> Result<Self> {
        if market.d() != model.d() {
            return Err(Error::OutOfDomain(format!(
                "market has {} assets but the drift model has dimension {}",
                market.d(),
                model.d()
            )));
        }
        let gen = ScenarioGenerator::new(model, market.horizon(), &config)?;
        let kappa = confidence_radius(market.d(), config.eta)?;
        let geom = constraint_geometry(&market)?;
        Ok(Self {
            market,
            geom,
            kappa,
            config,
            gen,
        })
    }

    pub fn market(&self) -> &ValidatedMarket {
        &self.market
    }

    /// Drift model with the effective expert covariance.
    pub fn model(&self) -> &ValidatedDriftModel {
        self.gen.model()
    }

    pub fn geometry(&self) -> &ConstraintGeometry {
        &self.geom
    }

    pub fn grid(&self) -> &TimeGrid {
        self.gen.grid()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn generator(&self) -> &ScenarioGenerator {
        &self.gen
    }

    pub fn expert_indices(&self) -> &[usize] {
        self.gen.expert_indices()
    }

    pub fn simulate_scenario(&self, seed: u64, index: u64) -> Scenario {
        self.gen.simulate(seed, index)
    }

    pub fn filter(&self, kind: FiltrationKind, scenario: &Scenario) -> Result<Vec<FilterState>> {
        self.gen.filter(kind, scenario)
    }

    /// Uncertainty set for a filter state.
    pub fn ellipsoid(&self, state: &FilterState) -> Result<Ellipsoid> {
        if self.config.regularize {
            confidence_ellipsoid_regularized(state, self.config.eta)
        } else {
            confidence_ellipsoid(state, self.config.eta)
        }
    }

    fn solve_along(
        &self,
        filter: Vec<FilterState>,
        set_for: impl Fn(&FilterState) -> Result<Ellipsoid>,
    ) -> Result<Realized> {
        let (gamma, h) = (self.market.gamma(), self.market.h());
        let len = filter.len();
        let mut out = Realized {
            filter: Vec::new(),
            k_path: Vec::with_capacity(len),
            mu_star: Vec::with_capacity(len),
            pi_star: Vec::with_capacity(len),
            pi_hat: Vec::with_capacity(len),
            psi: Vec::with_capacity(len),
        };
        for s in &filter {
            let k = set_for(s)?;
            let sol = worst_case_drift(&k, &self.geom, &self.market)?;
            out.pi_hat
                .push(merton_strategy(&self.geom, &s.m_hat, gamma, h).pi);
            out.mu_star.push(sol.mu_star);
            out.pi_star.push(sol.pi_star.pi);
            out.psi.push(sol.psi);
            out.k_path.push(k);
        }
        out.filter = filter;
        Ok(out)
    }

    /// Filter, uncertainty sets and local robust solutions at every grid point.
    pub fn realize(&self, kind: FiltrationKind, scenario: &Scenario) -> Result<ScenarioPath> {
        let filter = self.filter(kind, scenario)?;
        let realized = self.solve_along(filter, |s| self.ellipsoid(s))?;
        Ok(ScenarioPath {
            kind,
            grid: self.gen.grid,
            scenario: scenario.clone(),
            realized,
        })
    }

    /// As [`Pipeline::realize`] with the uncertainty set held at `k0`.
    pub fn realize_frozen(
        &self,
        kind: FiltrationKind,
        scenario: &Scenario,
        k0: &Ellipsoid,
    ) -> Result<ScenarioPath> {
        let filter = self.filter(kind, scenario)?;
        let realized = self.solve_along(filter, |_| Ok(k0.clone()))?;
        Ok(ScenarioPath {
            kind,
            grid: self.gen.grid,
            scenario: scenario.clone(),
            realized,
        })
    }

    /// The four study quantities for one realized scenario.
    pub fn evaluate(&self, path: &ScenarioPath, mode: EvalMode, seed: u64) -> Result<Evaluation> {
        self.evaluate_parts(path.kind, &path.scenario, &path.realized, mode, seed)
    }

    fn evaluate_parts(
        &self,
        kind: FiltrationKind,
        scenario: &Scenario,
        realized: &Realized,
        mode: EvalMode,
        seed: u64,
    ) -> Result<Evaluation> {
        match mode {
            EvalMode::PlugIn => self.plug_in(realized),
            EvalMode::SdeMc {
                inner_paths,
                feedback,
            } => {
                if inner_paths < 2 {
                    return Err(Error::ModeUnsupported(format!(
                        "sde_mc needs at least 2 inner paths, got {inner_paths}"
                    )));
                }
                if feedback && kind.observes_returns() {
                    self.sde_feedback(scenario, realized, inner_paths, seed)
                } else {
                    self.sde_fixed(scenario.index, realized, inner_paths, seed)
                }
            }
        }
    }

    fn plug_in(&self, realized: &Realized) -> Result<Evaluation> {
        let breaks = self.gen.grid.points();
        let n = self.gen.grid.n_steps();
        let m_hat: Vec<DVector<f64>> = realized.filter[..n]
            .iter()
            .map(|s| s.m_hat.clone())
            .collect();
        let pi_star = StepPath::new(&breaks, &realized.pi_star[..n])?;
        let pi_hat = StepPath::new(&breaks, &realized.pi_hat[..n])?;
        let mu_star = StepPath::new(&breaks, &realized.mu_star[..n])?;
        let nu = StepPath::new(&breaks, &m_hat)?;
        let x0 = self.market.x0();
        let values = [
            expected_utility(&self.market, &pi_star, &mu_star, x0)?,
            expected_utility(&self.market, &pi_hat, &mu_star, x0)?,
            expected_utility(&self.market, &pi_star, &nu, x0)?,
            expected_utility(&self.market, &pi_hat, &nu, x0)?,
        ];
        Ok(Evaluation {
            values,
            std_errors: [0.0; 4],
        })
    }

    fn log_increment(&self, pi: &DVector<f64>, mu: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        let r = self.market.r();
        let dt = self.gen.grid.dt();
        let vol = self.market.sigma().transpose() * pi;
        (r + pi.dot(mu) - r * pi.sum() - 0.5 * vol.norm_squared()) * dt + vol.dot(xi) * dt.sqrt()
    }

    fn inner_noise(&self, seed: u64, index: u64, j: u64) -> Vec<DVector<f64>> {
        let m = self.market.sigma().ncols();
        let mut r = rng::stream(seed, &[index, 2, j]);
        (0..self.gen.grid.n_steps())
            .map(|_| DVector::from_fn(m, |_, _| r.sample::<f64, _>(StandardNormal)))
            .collect()
    }

    fn finish(&self, log_wealth: Vec<[f64; 4]>) -> Evaluation {
        let u = self.market.utility();
        let n = log_wealth.len() as f64;
        let mut values = [0.0; 4];
        let mut std_errors = [0.0; 4];
        for c in 0..4 {
            let xs: Vec<f64> = log_wealth.iter().map(|w| u.eval_log_wealth(w[c])).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            values[c] = mean;
            std_errors[c] = (var / n).sqrt();
        }
        Evaluation { values, std_errors }
    }

    /// Wealth simulated along the realized strategy and drift paths.
    fn sde_fixed(
        &self,
        index: u64,
        realized: &Realized,
        inner: usize,
        seed: u64,
    ) -> Result<Evaluation> {
        let n = self.gen.grid.n_steps();
        let x0 = self.market.x0().ln();
        let log_wealth: Vec<[f64; 4]> = (0..inner as u64)
            .into_par_iter()
            .map(|j| {
                let noise = self.inner_noise(seed, index, j);
                let mut w = [x0; 4];
                #[allow(clippy::needless_range_loop)]
                for i in 0..n {
                    let (ps, ph, ms, nu) = (
                        &realized.pi_star[i],
                        &realized.pi_hat[i],
                        &realized.mu_star[i],
                        &realized.filter[i].m_hat,
                    );
                    w[0] += self.log_increment(ps, ms, &noise[i]);
                    w[1] += self.log_increment(ph, ms, &noise[i]);
                    w[2] += self.log_increment(ps, nu, &noise[i]);
                    w[3] += self.log_increment(ph, nu, &noise[i]);
                }
                w
            })
            .collect();
        Ok(self.finish(log_wealth))
    }

    /// Returns regenerated under the designated drift and fed back through
    /// the filter, so strategies respond to the simulated returns.
    fn sde_feedback(
        &self,
        scenario: &Scenario,
        realized: &Realized,
        inner: usize,
        seed: u64,
    ) -> Result<Evaluation> {
        let p = self.gen.model.params();
        if p.sigma_r.shape() != self.market.sigma().shape() {
            return Err(Error::ModeUnsupported(
                "feedback evaluation needs the market volatility and sigma_R to share a shape"
                    .into(),
            ));
        }
        let n = self.gen.grid.n_steps();
        let dt = self.gen.grid.dt();
        let (gamma, h) = (self.market.gamma(), self.market.h());
        let mut by_index: Vec<Vec<&ExpertOpinion>> = vec![Vec::new(); n + 1];
        for e in &scenario.experts {
            if let Some(i) = self.gen.grid.index_of(e.t_k) {
                by_index[i].push(e);
            }
        }
        let start = realized.filter[0].clone();
        let x0 = self.market.x0().ln();
        let runs: Vec<Result<[f64; 4]>> = (0..inner as u64)
            .into_par_iter()
            .map(|j| {
                let noise = self.inner_noise(seed, scenario.index, j);
                let mut w = [x0; 4];
                // designated drift 0: worst case, 1: filter mean
                for target in 0..2 {
                    let mut s = start.clone();
                    for i in 0..n {
                        let k = self.ellipsoid(&s)?;
                        let sol = worst_case_drift(&k, &self.geom, &self.market)?;
                        let pi_hat = merton_strategy(&self.geom, &s.m_hat, gamma, h).pi;
                        let mu = if target == 0 {
                            sol.mu_star.clone()
                        } else {
                            s.m_hat.clone()
                        };
                        w[2 * target] += self.log_increment(&sol.pi_star.pi, &mu, &noise[i]);
                        w[2 * target + 1] += self.log_increment(&pi_hat, &mu, &noise[i]);
                        let dr = &mu * dt + &p.sigma_r * &noise[i] * dt.sqrt();
                        s = kalman_step(&s, &dr, dt, p)?;
                        s.t = self.gen.grid.time(i + 1);
                        for e in &by_index[i + 1] {
                            let op = ExpertOpinion {
                                t_k: s.t,
                                z: e.z.clone(),
                                cov: e.cov.clone(),
                            };
                            s = expert_update(&s, &op)?;
                        }
                    }
                }
                Ok(w)
            })
            .collect();
        let mut log_wealth = Vec::with_capacity(inner);
        for r in runs {
            log_wealth.push(r?);
        }
        Ok(self.finish(log_wealth))
    }
}

fn expert_schedule(grid: &TimeGrid, n: usize, dates: ExpertDates) -> Vec<usize> {
    let t = grid.horizon();
    (0..n)
        .map(|k| {
            let date = match dates {
                ExpertDates::Interior => (k + 1) as f64 * t / (n + 1) as f64,
                ExpertDates::Left => k as f64 * t / n as f64,
                ExpertDates::Right => (k + 1) as f64 * t / n as f64,
            };
            grid.nearest_index(date)
        })
        .collect()
}

fn ou_transition(model: &ValidatedDriftModel, dt: f64) -> Result<OuTransition> {
    // α is symmetric, so e^{−αΔt} follows from its eigendecomposition
    let eig = SymmetricEigen::new(linalg::symmetrize(model.alpha()));
    let decay = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-l * dt).exp()))
        * eig.eigenvectors.transpose();
    let stationary = stationary_lyapunov(model.params())?;
    let cov = &stationary - &decay * &stationary * decay.transpose();
    Ok(OuTransition {
        noise: linalg::psd_sqrt(&linalg::symmetrize(&cov)),
        decay,
    })
}

/// One scenario realized for `kind`; scenario index 0 of `seed`.
pub fn simulate_scenario(
    pipeline: &Pipeline,
    kind: FiltrationKind,
    seed: u64,
) -> Result<ScenarioPath> {
    let scenario = pipeline.simulate_scenario(seed, 0);
    pipeline.realize(kind, &scenario)
}

pub fn evaluate_utilities(
    pipeline: &Pipeline,
    path: &ScenarioPath,
    mode: EvalMode,
    seed: u64,
) -> Result<Evaluation> {
    pipeline.evaluate(path, mode, seed)
}

fn summarize(kind: FiltrationKind, samples: Vec<[f64; 4]>) -> StudyRow {
    let n = samples.len();
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for c in 0..4 {
        let m = samples.iter().map(|s| s[c]).sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|s| (s[c] - m).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        mean[c] = m;
        std[c] = var.sqrt();
    }
    StudyRow {
        kind,
        n,
        mean,
        std,
        samples,
    }
}

/// Runs `n_sims` scenarios per kind with common random numbers across kinds.
/// Output depends only on the arguments, not on the thread count.
pub fn run_study(
    pipeline: &Pipeline,
    kinds: &[FiltrationKind],
    n_sims: usize,
    seed: u64,
    mode: EvalMode,
) -> Result<StudyReport> {
    if n_sims == 0 {
        return Err(Error::EmptyStudy);
    }
    let mut kinds: Vec<FiltrationKind> = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    if kinds.is_empty() {
        return Err(Error::EmptyStudy);
    }
    // the uninformed investor's pipeline does not depend on the scenario
    let uninformed = if kinds.contains(&FiltrationKind::N) {
        let s = pipeline.simulate_scenario(seed, 0);
        Some(pipeline.realize(FiltrationKind::N, &s)?.realized)
    } else {
        None
    };
    let per_scenario: Vec<Result<Vec<[f64; 4]>>> = (0..n_sims as u64)
        .into_par_iter()
        .map(|idx| {
            let scenario = pipeline.simulate_scenario(seed, idx);
            kinds
                .iter()
                .map(|&kind| {
                    let eval = match (&uninformed, kind) {
                        (Some(r), FiltrationKind::N) => {
                            pipeline.evaluate_parts(kind, &scenario, r, mode, seed)?
                        }
                        _ => {
                            let p = pipeline.realize(kind, &scenario)?;
                            pipeline.evaluate(&p, mode, seed)?
                        }
                    };
                    Ok(eval.values)
                })
                .collect()
        })
        .collect();
    let mut columns: Vec<Vec<[f64; 4]>> = vec![Vec::with_capacity(n_sims); kinds.len()];
    for r in per_scenario {
        for (col, v) in columns.iter_mut().zip(r?) {
            col.push(v);
        }
    }
    let rows = kinds
        .iter()
        .zip(columns)
        .map(|(&k, s)| summarize(k, s))
        .collect();
    Ok(StudyReport {
        rows,
        n_sims,
        n_experts: pipeline.config.n_experts,
        seed,
        n_steps: pipeline.gen.grid.n_steps(),
        mode,
    })
}
