//! Experiment harness: runs the solver and the sampler on a configured experiment,
//! compares them with each other and with closed forms, and writes CSV tables.
//!
//! Every table is a pure function of the configuration (seeds included), so the files
//! are byte-identical across runs and thread counts.

pub mod config;
pub mod properties;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{ChainError, ChainSpec, Estimate};
use crate::measure::{FlattenedPayoff, MeasureError};
use crate::oracles::OracleSolution;
use crate::pde::{self, Boundary, PdeError, RegularityReport, SolutionField, SolveConfig};

pub use config::{parse_config, parse_config_str, BoundaryKind, ConfigError, ExperimentConfig, Probe};
pub use properties::{run_properties, PropertiesReport, PropertyRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

/// A table that can be written as CSV.
pub trait Table {
    fn header(&self) -> Vec<&'static str>;
    fn records(&self) -> Vec<Vec<String>>;

    fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in self.records() {
            out.write_record(&r)?;
        }
        out.flush()?;
        Ok(())
    }

    fn write_csv_file(&self, path: &Path) -> Result<(), HarnessError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest round-trip decimal form; `NaN` and missing values become empty fields.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Sorted distinct probe times.
pub fn probe_times(probes: &[Probe]) -> Vec<f64> {
    let mut ts: Vec<f64> = probes.iter().map(|p| p.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn solve_config(cfg: &ExperimentConfig, dt: f64, horizon: f64) -> SolveConfig<f64> {
    let boundary = match cfg.boundary {
        BoundaryKind::Frozen => Boundary::FrozenDirichlet,
        BoundaryKind::Oracle => {
            let oracle = cfg.oracle().expect("oracle boundary validated");
            Boundary::TimeDependent(Arc::new(move |x, t| oracle.evaluate(x, t)))
        }
    };
    SolveConfig {
        theta: cfg.theta,
        dt,
        horizon,
        boundary,
        save_every: usize::MAX,
        allow_invalid: cfg.allow_invalid,
    }
}

/// Solves at refinement `level` (grid cells doubled and `dt` halved per level) up to
/// each of `times`, one run per time so every run ends exactly on its probe time.
pub fn solve_level(
    cfg: &ExperimentConfig,
    level: usize,
    times: &[f64],
) -> Result<Vec<SolutionField<f64>>, HarnessError> {
    let grid = cfg.grid(level);
    let dt = cfg.dt / f64::from(1u32 << level);
    times
        .par_iter()
        .map(|&t| {
            pde::solve(&cfg.measure, &cfg.payoff, &grid, &solve_config(cfg, dt, t))
                .map_err(HarnessError::from)
        })
        .collect()
}

/// PDE values at the probes, refinement `level`.
pub fn pde_at_probes(cfg: &ExperimentConfig, level: usize) -> Result<Vec<f64>, HarnessError> {
    let times = probe_times(&cfg.probes);
    let fields = solve_level(cfg, level, &times)?;
    Ok(cfg
        .probes
        .iter()
        .map(|p| {
            let k = times.iter().position(|&t| t == p.t).expect("probe time listed");
            fields[k].final_value_at(p.x)
        })
        .collect())
}

pub fn build_chain(cfg: &ExperimentConfig) -> Result<ChainSpec<f64>, HarnessError> {
    if !cfg.allow_invalid && !cfg.measure.validate()?.local_martingale_ok {
        return Err(ChainError::NotLocalMartingale.into());
    }
    Ok(ChainSpec::build(&cfg.measure.discretize(&cfg.mc_grid())?)?)
}

/// Monte-Carlo estimates at every probe. Probe `k` uses seed `seed + k` so that probes
/// are independent and each is reproducible on its own.
pub fn mc_at_probes(
    cfg: &ExperimentConfig,
    chain: &ChainSpec<f64>,
    n_paths: usize,
) -> Result<Vec<Estimate<f64>>, HarnessError> {
    cfg.probes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            chain
                .estimate(
                    &cfg.payoff,
                    p.x,
                    p.t,
                    n_paths,
                    cfg.seed.wrapping_add(k as u64),
                    cfg.exit_threshold,
                )
                .map_err(HarnessError::from)
        })
        .collect()
}

fn z_score(mean: f64, reference: f64, stderr: f64) -> f64 {
    let diff = mean - reference;
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 * reference.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub x: f64,
    pub t: f64,
    pub pde_value: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub oracle_value: Option<f64>,
    pub abs_error_pde: Option<f64>,
    /// `(mc_mean - reference) / mc_stderr`, the reference being the oracle when one
    /// exists and the PDE value otherwise.
    pub z_score_mc: f64,
    pub boundary_exit_fraction: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub oracle: Option<String>,
    pub rows: Vec<ComparisonRow>,
    pub z_threshold: f64,
    pub pde_tolerance: f64,
}

impl CompareReport {
    /// Rows whose MC z-score or PDE error exceeds the configured thresholds.
    pub fn breaches(&self) -> Vec<&ComparisonRow> {
        self.rows
            .iter()
            .filter(|r| {
                !(r.z_score_mc.abs() <= self.z_threshold)
                    || r.abs_error_pde.is_some_and(|e| !(e <= self.pde_tolerance))
            })
            .collect()
    }
}

impl Table for CompareReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "x",
            "t",
            "pde_value",
            "mc_mean",
            "mc_stderr",
            "oracle_value",
            "abs_error_pde",
            "z_score_mc",
            "boundary_exit_fraction",
            "flagged",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt_num(r.x),
                    fmt_num(r.t),
                    fmt_num(r.pde_value),
                    fmt_num(r.mc_mean),
                    fmt_num(r.mc_stderr),
                    fmt_opt(r.oracle_value),
                    fmt_opt(r.abs_error_pde),
                    fmt_num(r.z_score_mc),
                    fmt_num(r.boundary_exit_fraction),
                    r.flagged.to_string(),
                ]
            })
            .collect()
    }
}

/// PDE (refinement level 0), MC and oracle at every probe.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareReport, HarnessError> {
    let oracle = cfg.oracle();
    let pde_values = pde_at_probes(cfg, 0)?;
    let chain = build_chain(cfg)?;
    let estimates = mc_at_probes(cfg, &chain, cfg.n_paths)?;
    let rows = cfg
        .probes
        .iter()
        .zip(pde_values)
        .zip(estimates)
        .map(|((p, pde_value), est)| {
            let oracle_value = oracle.as_ref().map(|o| o.evaluate(p.x, p.t));
            let reference = oracle_value.unwrap_or(pde_value);
            ComparisonRow {
                x: p.x,
                t: p.t,
                pde_value,
                mc_mean: est.mean,
                mc_stderr: est.stderr,
                oracle_value,
                abs_error_pde: oracle_value.map(|o| (pde_value - o).abs()),
                z_score_mc: z_score(est.mean, reference, est.stderr),
                boundary_exit_fraction: est.boundary_exit_fraction,
                flagged: est.flagged,
            }
        })
        .collect();
    Ok(CompareReport {
        oracle: oracle.map(|o| o.descriptor().to_string()),
        rows,
        z_threshold: cfg.z_threshold,
        pde_tolerance: cfg.pde_tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceKind {
    Pde,
    Mc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub kind: ConvergenceKind,
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Max PDE error over the probes, or the MC standard error at the first probe.
    pub metric: f64,
    /// Previous metric over this one.
    pub ratio: Option<f64>,
    /// `log2(ratio)` for the PDE; `log(ratio) / log(4)` (the rate in `n`) for MC.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Oracle descriptor, or `None` when the finest level served as reference.
    pub reference: Option<String>,
    pub rows: Vec<ConvergenceRow>,
}

impl Table for ConvergenceReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["kind", "level", "h", "dt", "n_paths", "metric", "ratio", "order"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    match r.kind {
                        ConvergenceKind::Pde => "pde".to_string(),
                        ConvergenceKind::Mc => "mc".to_string(),
                    },
                    r.level.to_string(),
                    fmt_num(r.h),
                    fmt_num(r.dt),
                    r.n_paths.to_string(),
                    fmt_num(r.metric),
                    fmt_opt(r.ratio),
                    fmt_opt(r.order),
                ]
            })
            .collect()
    }
}

fn with_rates(metrics: Vec<f64>, log_base: f64) -> Vec<(f64, Option<f64>, Option<f64>)> {
    let mut out = Vec::with_capacity(metrics.len());
    for (k, &e) in metrics.iter().enumerate() {
        let ratio = (k > 0).then(|| metrics[k - 1] / e);
        out.push((e, ratio, ratio.map(|r| r.ln() / log_base.ln())));
    }
    out
}

/// Errors of the PDE over `levels` refinements and the MC standard error at `n` and
/// `4n` paths. Without an oracle the finest PDE level is the reference and is not
/// itself reported.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    if cfg.probes.is_empty() {
        return Err(HarnessError::Usage("convergence needs at least one [[probe]]".into()));
    }
    if cfg.levels < 2 {
        return Err(HarnessError::Usage("convergence needs grid.levels >= 2".into()));
    }
    let oracle = cfg.oracle();
    let per_level: Vec<Vec<f64>> = (0..cfg.levels)
        .map(|level| pde_at_probes(cfg, level))
        .collect::<Result<_, _>>()?;
    let reference: Vec<f64> = match &oracle {
        Some(o) => cfg.probes.iter().map(|p| o.evaluate(p.x, p.t)).collect(),
        None => per_level.last().expect("levels >= 1").clone(),
    };
    let reported = if oracle.is_some() {
        cfg.levels
    } else {
        cfg.levels - 1
    };
    let errors: Vec<f64> = per_level[..reported]
        .iter()
        .map(|vals| {
            vals.iter()
                .zip(&reference)
                .map(|(v, r)| (v - r).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut rows = Vec::new();
    for (level, (metric, ratio, order)) in with_rates(errors, 2.0).into_iter().enumerate() {
        rows.push(ConvergenceRow {
            kind: ConvergenceKind::Pde,
            level,
            h: cfg.grid(level).max_step(),
            dt: cfg.dt / f64::from(1u32 << level),
            n_paths: 0,
            metric,
            ratio,
            order,
        });
    }

    let chain = build_chain(cfg)?;
    let p = cfg.probes[0];
    let h_mc = cfg.mc_grid().max_step();
    let stderrs: Vec<(usize, f64)> = [cfg.n_paths, 4 * cfg.n_paths]
        .into_iter()
        .map(|n| {
            chain
                .estimate(&cfg.payoff, p.x, p.t, n, cfg.seed, cfg.exit_threshold)
                .map(|e| (n, e.stderr))
        })
        .collect::<Result<_, _>>()?;
    let rates = with_rates(stderrs.iter().map(|s| s.1).collect(), 4.0);
    for (level, ((n, _), (metric, ratio, order))) in stderrs.into_iter().zip(rates).enumerate() {
        rows.push(ConvergenceRow {
            kind: ConvergenceKind::Mc,
            level,
            h: h_mc,
            dt: 0.0,
            n_paths: n,
            metric,
            ratio,
            order,
        });
    }
    Ok(ConvergenceReport {
        reference: oracle.map(|o| o.descriptor().to_string()),
        rows,
    })
}

/// `Phi`, `Psi` and the flattened payoff at the level-0 grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPsiReport {
    pub growth_constant: Option<f64>,
    pub rows: Vec<[f64; 4]>,
}

impl Table for PhiPsiReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["x", "phi", "psi", "g_bar"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&v| fmt_num(v)).collect())
            .collect()
    }
}

pub fn run_phipsi(cfg: &ExperimentConfig) -> PhiPsiReport {
    let m = &cfg.measure;
    let flat = FlattenedPayoff::new(m, &cfg.payoff);
    let rows = cfg
        .grid(0)
        .nodes()
        .iter()
        .map(|&x| [x, m.phi(x), m.psi(x), flat.evaluate(x)])
        .collect();
    PhiPsiReport {
        growth_constant: m.growth_constant().ok(),
        rows,
    }
}

/// Monte-Carlo estimates at the probes, without the PDE.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub estimates: Vec<Estimate<f64>>,
}

impl Table for SimulateReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "x",
            "t",
            "mean",
            "stderr",
            "n_paths",
            "seed",
            "boundary_exit_fraction",
            "flagged",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.estimates
            .iter()
            .map(|e| {
                vec![
                    fmt_num(e.x),
                    fmt_num(e.t),
                    fmt_num(e.mean),
                    fmt_num(e.stderr),
                    e.n_paths.to_string(),
                    e.seed.to_string(),
                    fmt_num(e.boundary_exit_fraction),
                    e.flagged.to_string(),
                ]
            })
            .collect()
    }
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulateReport, HarnessError> {
    let chain = build_chain(cfg)?;
    Ok(SimulateReport {
        estimates: mc_at_probes(cfg, &chain, cfg.n_paths)?,
    })
}

/// Node values of the level-0 solution at every distinct probe time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub rows: Vec<(f64, f64, f64)>,
}

impl Table for SolveReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["t", "x", "u"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|&(t, x, u)| vec![fmt_num(t), fmt_num(x), fmt_num(u)])
            .collect()
    }
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveReport, HarnessError> {
    let times = probe_times(&cfg.probes);
    let fields = solve_level(cfg, 0, &times)?;
    let mut rows = Vec::new();
    for (t, field) in times.iter().zip(&fields) {
        for (x, u) in field.nodes.iter().zip(field.final_values()) {
            rows.push((*t, *x, *u));
        }
    }
    Ok(SolveReport { rows })
}

impl Table for RegularityReport<f64> {
    fn header(&self) -> Vec<&'static str> {
        vec!["quantity", "x", "value"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        let mut out = vec![
            vec!["time".into(), String::new(), fmt_num(self.time)],
            vec![
                "max_gap_curvature".into(),
                String::new(),
                fmt_num(self.max_gap_curvature),
            ],
            vec!["rn_sup".into(), String::new(), fmt_num(self.rn_sup)],
            vec![
                "rn_vs_time_derivative".into(),
                String::new(),
                fmt_num(self.rn_vs_time_derivative),
            ],
            vec!["max_u_tt".into(), String::new(), fmt_num(self.max_u_tt)],
            vec![
                "max_regular_jump".into(),
                fmt_opt(self.max_regular_jump_at),
                fmt_num(self.max_regular_jump),
            ],
        ];
        for j in &self.singular_jumps {
            let name = match j.kind {
                pde::JumpKind::Atom => "slope_jump_atom",
                pde::JumpKind::DensityBreak => "slope_jump_density_break",
            };
            out.push(vec![name.into(), fmt_num(j.x), fmt_num(j.jump)]);
        }
        out
    }
}

/// Regularity diagnostics at the latest probe time (or `t = 1` without probes),
/// from a run that keeps every time level.
pub fn run_regularity(cfg: &ExperimentConfig) -> Result<RegularityReport<f64>, HarnessError> {
    let horizon = probe_times(&cfg.probes).last().copied().unwrap_or(1.0);
    let grid = cfg.grid(0);
    let mut sc = solve_config(cfg, cfg.dt, horizon);
    sc.save_every = 1;
    let field = pde::solve(&cfg.measure, &cfg.payoff, &grid, &sc)?;
    let dm = cfg.measure.discretize(&grid)?;
    Ok(pde::regularity_report(&field, &dm)?)
}

/// One-line summary of the configured measure and payoff, with the oracle if any.
pub fn describe(cfg: &ExperimentConfig) -> String {
    let report = cfg.measure.validate();
    let mut s = format!(
        "payoff {}; {} atom(s), {} segment(s), tails ({}, {}); ",
        cfg.payoff.name(),
        cfg.measure.atoms().len(),
        cfg.measure.segments().len(),
        cfg.measure.left_tail_density(),
        cfg.measure.right_tail_density(),
    );
    match report {
        Ok(r) => s.push_str(&format!(
            "local martingale: {}, martingale: {}",
            r.local_martingale_ok, r.martingale_ok
        )),
        Err(e) => s.push_str(&e.to_string()),
    }
    match OracleSolution::lookup(&cfg.measure, &cfg.payoff) {
        Some(o) => s.push_str(&format!("; oracle {}", o.descriptor())),
        None => s.push_str("; no closed form"),
    }
    s
}
