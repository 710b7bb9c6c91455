//! `solve`, `filter`, `simulate` and `study`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use robustdrift_core::robust::{eigensystem, saddle_check};
use robustdrift_core::{
    brute_force_oracle, confidence_radius, constraint_geometry, run_study, worst_case_drift,
    Ellipsoid, FilterState, FiltrationKind, InnerSup, Pipeline, ScenarioGenerator, StudyReport,
};
use serde::Serialize;

use crate::config::{DriftRun, ValidatedRun};
use crate::error::{CliError, Result};
use crate::report::{csv_string, json_string, sig6, write_file};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub angles: usize,
    pub mu: Vec<f64>,
    pub value: f64,
    pub mu_distance: f64,
    pub value_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleSummary {
    pub samples: usize,
    pub max_violation: f64,
    pub min_strategy_gap: f64,
    pub min_drift_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub version: &'static str,
    pub nu: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub kappa: f64,
    pub mu_star: Vec<f64>,
    pub pi_star: Vec<f64>,
    pub psi: f64,
    pub lambdas: Vec<f64>,
    pub value: f64,
    pub boundary_residual: f64,
    pub saddle: SaddleSummary,
    pub oracle: Option<OracleCheck>,
    pub config_echo: String,
}

/// Ellipsoid for `solve`: the `[solve]` block, or the initial filter set.
fn solve_set(run: &ValidatedRun) -> Result<Ellipsoid> {
    match &run.config.solve {
        Some(s) => {
            if !(s.kappa > 0.0) {
                return Err(CliError::invalid(format!(
                    "solve.kappa = {} must be > 0",
                    s.kappa
                )));
            }
            let n = s.gamma.len();
            let g = DMatrix::from_fn(n, n, |i, j| s.gamma[i][j]);
            Ellipsoid::new(DVector::from_column_slice(&s.nu), g, s.kappa).map_err(CliError::from)
        }
        None => {
            let kappa = confidence_radius(run.market.d(), run.config.eta)?;
            let state = FilterState::initial(&run.model);
            Ellipsoid::new(state.m_hat, state.q, kappa).map_err(CliError::from)
        }
    }
}

/// One-shot solve over a constant ellipsoid; writes `solve.json`.
pub fn cmd_solve(run: &ValidatedRun, oracle: bool, out: &Path) -> Result<SolveReport> {
    let k = solve_set(run)?;
    let geom = constraint_geometry(&run.market)?;
    let sol = worst_case_drift(&k, &geom, &run.market)?;
    let samples = run.config.solve.as_ref().map_or(1000, |s| s.saddle_samples);
    let saddle = saddle_check(&sol, &k, &geom, &run.market, samples.max(1), run.seed)?;
    let oracle = if oracle {
        let angles = run.config.solve.as_ref().map_or(3600, |s| s.oracle_angles);
        let (mu, value) = brute_force_oracle(&k, &geom, &run.market, angles, InnerSup::ClosedForm)?;
        Some(OracleCheck {
            angles,
            mu_distance: (&mu - &sol.mu_star).norm(),
            value_rel_error: (value - sol.value).abs() / sol.value.abs().max(f64::MIN_POSITIVE),
            mu: vec_of(&mu),
            value,
        })
    } else {
        None
    };
    let spectral = eigensystem(&k.tau, &geom.a)?;
    let report = SolveReport {
        version: VERSION,
        nu: vec_of(&k.nu),
        gamma: rows_of(&k.gamma),
        kappa: k.kappa,
        mu_star: vec_of(&sol.mu_star),
        pi_star: vec_of(&sol.pi_star.pi),
        psi: sol.psi,
        lambdas: spectral.lambdas,
        value: sol.value,
        boundary_residual: sol.boundary_residual(&k),
        saddle: SaddleSummary {
            samples: saddle.n_samples,
            max_violation: saddle.max_violation,
            min_strategy_gap: saddle.min_strategy_gap,
            min_drift_gap: saddle.min_drift_gap,
        },
        oracle,
        config_echo: run.config.to_toml()?,
    };
    write_file(&out.join("solve.json"), &json_string(&report)?)?;
    Ok(report)
}

/// Header and rows of `filter_<H>.csv`.
pub fn filter_table(
    gen: &ScenarioGenerator,
    kind: FiltrationKind,
    seed: u64,
    eta: f64,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let d = gen.model().d();
    let scenario = gen.simulate(seed, 0);
    let path = gen.filter(kind, &scenario)?;
    let kappa = confidence_radius(d, eta)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("mu_true_{i}")));
    header.extend((1..=d).map(|i| format!("m_hat_{i}")));
    header.extend((1..=d).map(|i| format!("q_{i}{i}")));
    if d == 1 {
        header.extend(["k_lower".to_string(), "k_upper".to_string()]);
    } else {
        header.push("kappa".into());
        for i in 1..=d {
            for j in i..=d {
                header.push(format!("gamma_{i}{j}"));
            }
        }
    }
    let rows = path
        .iter()
        .zip(&scenario.mu_true)
        .map(|(s, mu)| {
            let mut row = vec![sig6(s.t)];
            row.extend(mu.iter().map(|x| sig6(*x)));
            row.extend(s.m_hat.iter().map(|x| sig6(*x)));
            row.extend((0..d).map(|i| sig6(s.q[(i, i)])));
            if d == 1 {
                let half = kappa * s.q[(0, 0)].max(0.0).sqrt();
                row.push(sig6(s.m_hat[0] - half));
                row.push(sig6(s.m_hat[0] + half));
            } else {
                row.push(sig6(kappa));
                for i in 0..d {
                    for j in i..d {
                        row.push(sig6(s.q[(i, j)]));
                    }
                }
            }
            row
        })
        .collect();
    Ok((header, rows))
}

/// Filter trajectory of scenario 0 for each configured kind; writes `filter_<H>.csv`.
pub fn cmd_filter(run: &DriftRun, out: &Path) -> Result<Vec<PathBuf>> {
    let gen = ScenarioGenerator::new(run.model.clone(), run.config.market.horizon, &run.study)?;
    let mut written = Vec::new();
    for &kind in &run.kinds {
        let (header, rows) = filter_table(&gen, kind, run.seed, run.config.eta)?;
        let path = out.join(format!("filter_{kind}.csv"));
        write_file(&path, &csv_string(&header, &rows)?)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub version: &'static str,
    pub kind: FiltrationKind,
    pub seed: u64,
    pub mode: String,
    pub columns: [&'static str; 4],
    pub values: [f64; 4],
    pub std_errors: [f64; 4],
    pub psi_min: f64,
    pub psi_max: f64,
    pub max_boundary_residual: f64,
}

/// Single scenario with full traces; writes `simulate_<H>.csv` and `simulate_<H>.json`.
pub fn cmd_simulate(run: &ValidatedRun, out: &Path) -> Result<Vec<SimulateSummary>> {
    let pipeline = Pipeline::new(run.market.clone(), run.model.clone(), run.study)?;
    let scenario = pipeline.simulate_scenario(run.seed, 0);
    let d = run.market.d();
    let mut summaries = Vec::new();
    for &kind in &run.kinds {
        let path = pipeline.realize(kind, &scenario)?;
        let eval = pipeline.evaluate(&path, run.mode, run.seed)?;
        let r = &path.realized;
        let mut header = vec!["t".to_string()];
        for name in ["mu_true", "m_hat", "mu_star", "pi_star", "pi_hat"] {
            header.extend((1..=d).map(|i| format!("{name}_{i}")));
        }
        header.push("psi".into());
        let rows: Vec<Vec<String>> = (0..=pipeline.grid().n_steps())
            .map(|i| {
                let mut row = vec![sig6(pipeline.grid().time(i))];
                for v in [
                    &path.scenario.mu_true[i],
                    &r.filter[i].m_hat,
                    &r.mu_star[i],
                    &r.pi_star[i],
                    &r.pi_hat[i],
                ] {
                    row.extend(v.iter().map(|x| sig6(*x)));
                }
                row.push(sig6(r.psi[i]));
                row
            })
            .collect();
        let residual = r
            .k_path
            .iter()
            .zip(&r.mu_star)
            .map(|(k, mu)| (k.radius_ratio(mu) - 1.0).abs())
            .fold(0.0, f64::max);
        let summary = SimulateSummary {
            version: VERSION,
            kind,
            seed: run.seed,
            mode: run.mode.label().into(),
            columns: robustdrift_core::simulation::COLUMNS,
            values: eval.values,
            std_errors: eval.std_errors,
            psi_min: r.psi.iter().copied().fold(f64::INFINITY, f64::min),
            psi_max: r.psi.iter().copied().fold(0.0, f64::max),
            max_boundary_residual: residual,
        };
        if run.config.emit.csv() {
            write_file(
                &out.join(format!("simulate_{kind}.csv")),
                &csv_string(&header, &rows)?,
            )?;
        }
        if run.config.emit.json() {
            write_file(
                &out.join(format!("simulate_{kind}.json")),
                &json_string(&summary)?,
            )?;
        }
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsonRow {
    pub kind: FiltrationKind,
    pub n: usize,
    pub robust_worst: Cell,
    pub naive_worst: Cell,
    pub robust_ref: Cell,
    pub naive_ref: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub kind: FiltrationKind,
    pub psi_min: f64,
    pub psi_max: f64,
    pub lambdas_t0: Vec<f64>,
    pub max_boundary_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetadata {
    pub n_sims: usize,
    pub n_experts: usize,
    pub seed: u64,
    pub n_steps: usize,
    pub mode: String,
    pub inner_paths: Option<usize>,
    pub eta: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyBundle {
    pub version: &'static str,
    pub metadata: StudyMetadata,
    pub rows: Vec<JsonRow>,
    /// Solver diagnostics along scenario 0.
    pub diagnostics: Vec<Diagnostics>,
    pub config_echo: String,
    #[serde(skip)]
    pub report: StudyReport,
}

pub fn study_csv(report: &StudyReport) -> Result<String> {
    let mut header = vec!["H".to_string(), "n".to_string()];
    for c in robustdrift_core::simulation::COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.kind.to_string(), r.n.to_string()];
            for c in 0..4 {
                row.push(sig6(r.mean[c]));
                row.push(sig6(r.std[c]));
            }
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// Four-filtration study; writes `study.csv` and `study.json`.
pub fn cmd_study(run: &ValidatedRun, out: &Path) -> Result<StudyBundle> {
    let pipeline = Pipeline::new(run.market.clone(), run.model.clone(), run.study)?;
    let report = run_study(&pipeline, &run.kinds, run.config.n_sims, run.seed, run.mode)?;
    let scenario = pipeline.simulate_scenario(run.seed, 0);
    let mut diagnostics = Vec::new();
    for &kind in &run.kinds {
        let path = pipeline.realize(kind, &scenario)?;
        let r = &path.realized;
        let spectral = eigensystem(&r.k_path[0].tau, &pipeline.geometry().a)?;
        diagnostics.push(Diagnostics {
            kind,
            psi_min: r.psi.iter().copied().fold(f64::INFINITY, f64::min),
            psi_max: r.psi.iter().copied().fold(0.0, f64::max),
            lambdas_t0: spectral.lambdas,
            max_boundary_residual: r
                .k_path
                .iter()
                .zip(&r.mu_star)
                .map(|(k, mu)| (k.radius_ratio(mu) - 1.0).abs())
                .fold(0.0, f64::max),
        });
    }
    let cell = |r: &robustdrift_core::StudyRow, c: usize| Cell {
        mean: r.mean[c],
        std: r.std[c],
    };
    let bundle = StudyBundle {
        version: VERSION,
        metadata: StudyMetadata {
            n_sims: report.n_sims,
            n_experts: report.n_experts,
            seed: report.seed,
            n_steps: report.n_steps,
            mode: report.mode.label().into(),
            inner_paths: match report.mode {
                robustdrift_core::EvalMode::SdeMc { inner_paths, .. } => Some(inner_paths),
                robustdrift_core::EvalMode::PlugIn => None,
            },
            eta: run.config.eta,
            kappa: pipeline.kappa(),
        },
        rows: report
            .rows
            .iter()
            .map(|r| JsonRow {
                kind: r.kind,
                n: r.n,
                robust_worst: cell(r, 0),
                naive_worst: cell(r, 1),
                robust_ref: cell(r, 2),
                naive_ref: cell(r, 3),
            })
            .collect(),
        diagnostics,
        config_echo: run.config.to_toml()?,
        report,
    };
    if run.config.emit.csv() {
        write_file(&out.join("study.csv"), &study_csv(&bundle.report)?)?;
    }
    if run.config.emit.json() {
        write_file(&out.join("study.json"), &json_string(&bundle)?)?;
    }
    Ok(bundle)
}
