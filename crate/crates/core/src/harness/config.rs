//! Experiment configuration: a TOML file, parsed strictly (unknown keys are
//! rejected) and validated as a whole so that every violation is reported at once.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::grid::Grid;
use crate::measure::{Atom, MeasureError, Segment, SpeedMeasure};
use crate::oracles::OracleSolution;
use crate::payoff::{Payoff, PayoffError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub measure: RawMeasure,
    pub payoff: RawPayoff,
    pub grid: RawGrid,
    #[serde(default)]
    pub solver: RawSolver,
    #[serde(default)]
    pub mc: RawMc,
    #[serde(default, rename = "probe")]
    pub probes: Vec<RawProbe>,
    #[serde(default)]
    pub report: RawReport,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMeasure {
    /// `[position, mass]` pairs, strictly increasing in position.
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    /// `[left, right, density]` triples for `[left, right)`.
    #[serde(default)]
    pub segments: Vec<[f64; 3]>,
    pub left_tail: f64,
    pub right_tail: f64,
    /// Defaults to the hull of atoms and segments (or `[0, 0]`).
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub allow_invalid: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPayoff {
    pub kind: String,
    pub points: Option<Vec<[f64; 2]>>,
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub window: [f64; 2],
    pub cells: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_theta() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_boundary() -> String {
    "frozen".into()
}
fn default_tolerance() -> f64 {
    5e-3
}

impl Default for RawSolver {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            dt: default_dt(),
            boundary: default_boundary(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMc {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_exit_threshold")]
    pub exit_threshold: f64,
    /// Cells of the sampler grid over `grid.window`; defaults to `grid.cells`.
    pub cells: Option<usize>,
}

fn default_paths() -> usize {
    10_000
}
fn default_exit_threshold() -> f64 {
    0.01
}

impl Default for RawMc {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            seed: 0,
            exit_threshold: default_exit_threshold(),
            cells: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProbe {
    pub x: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawReport {
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default = "default_pairs")]
    pub property_pairs: usize,
}

fn default_z() -> f64 {
    4.0
}
fn default_pairs() -> usize {
    24
}

impl Default for RawReport {
    fn default() -> Self {
        Self {
            z_threshold: default_z(),
            property_pairs: default_pairs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Frozen,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub x: f64,
    pub t: f64,
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub measure: SpeedMeasure<f64>,
    pub payoff: Payoff<f64>,
    pub probes: Vec<Probe>,
    pub window: (f64, f64),
    pub cells: usize,
    pub levels: usize,
    pub theta: f64,
    pub dt: f64,
    pub boundary: BoundaryKind,
    pub pde_tolerance: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub exit_threshold: f64,
    pub mc_cells: usize,
    pub z_threshold: f64,
    pub property_pairs: usize,
    pub allow_invalid: bool,
}

impl ExperimentConfig {
    /// PDE grid at refinement level `level` (cells doubled per level), with every
    /// atom and density breakpoint as a node.
    pub fn grid(&self, level: usize) -> Grid<f64> {
        self.grid_with_cells(self.cells << level)
    }

    pub fn mc_grid(&self) -> Grid<f64> {
        self.grid_with_cells(self.mc_cells)
    }

    fn grid_with_cells(&self, cells: usize) -> Grid<f64> {
        Grid::uniform_with_breakpoints(
            self.window.0,
            self.window.1,
            cells,
            &self.measure.breakpoints(),
        )
        .expect("window and cells validated")
    }

    pub fn oracle(&self) -> Option<OracleSolution<f64>> {
        OracleSolution::lookup(&self.measure, &self.payoff)
    }

    /// Heuristic check of `g = o(Psi)`: the ratio `|g| / (Psi + 1)` should shrink from
    /// half the window to its ends. Returns human-readable warnings, never an error.
    pub fn growth_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (side, end) in [("left", self.window.0), ("right", self.window.1)] {
            let ratio = |x: f64| self.payoff.evaluate(x).abs() / (self.measure.psi(x) + 1.0);
            let (inner, outer) = (ratio(end / 2.0), ratio(end));
            if outer >= inner && outer > 1e-12 {
                out.push(format!(
                    "warning: |g|/(Psi+1) does not decrease towards the {side} window end \
                     ({inner:.3e} at {:.3}, {outer:.3e} at {end:.3}); g may not be o(Psi)",
                    end / 2.0
                ));
            }
        }
        out
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    raw.validate()
}

fn measure_error_path(e: &MeasureError) -> String {
    match e {
        MeasureError::NonFiniteAtom { index }
        | MeasureError::NonPositiveAtomMass { index }
        | MeasureError::AtomsNotIncreasing { index } => format!("measure.atoms[{index}]: {e}"),
        MeasureError::BadSegment { index } | MeasureError::OverlappingSegments { index } => {
            format!("measure.segments[{index}]: {e}")
        }
        MeasureError::BadTail => format!("measure.left_tail/right_tail: {e}"),
        MeasureError::BadWindow | MeasureError::OutsideWindow { .. } => {
            format!("measure.window: {e}")
        }
        other => format!("measure: {other}"),
    }
}

fn payoff_from(raw: &RawPayoff, errors: &mut Vec<String>) -> Option<Payoff<f64>> {
    let wrap = |r: Result<Payoff<f64>, PayoffError>, errors: &mut Vec<String>| match r {
        Ok(p) => Some(p),
        Err(e) => {
            errors.push(format!("payoff: {e}"));
            None
        }
    };
    let simple = |p: Payoff<f64>, errors: &mut Vec<String>| {
        if raw.points.is_some() || raw.coefficients.is_some() {
            errors.push(format!(
                "payoff: kind `{}` takes no points/coefficients",
                raw.kind
            ));
        }
        Some(p)
    };
    match raw.kind.as_str() {
        "identity" => simple(Payoff::Identity, errors),
        "abs" => simple(Payoff::Abs, errors),
        "square" => simple(Payoff::Square, errors),
        "abs_plus_square" => simple(Payoff::AbsPlusSquare, errors),
        "sticky_kink" => simple(Payoff::StickyKink, errors),
        "max_abs_one" => simple(Payoff::MaxAbsOne, errors),
        "piecewise_linear" => match &raw.points {
            Some(points) => wrap(
                Payoff::piecewise_linear(points.iter().map(|p| (p[0], p[1])).collect()),
                errors,
            ),
            None => {
                errors.push("payoff.points: required for piecewise_linear".into());
                None
            }
        },
        "polynomial" => match &raw.coefficients {
            Some(c) => wrap(Payoff::polynomial(c.clone()), errors),
            None => {
                errors.push("payoff.coefficients: required for polynomial".into());
                None
            }
        },
        other => {
            errors.push(format!(
                "payoff.kind: unknown payoff `{other}` (expected identity, abs, square, \
                 abs_plus_square, sticky_kink, max_abs_one, piecewise_linear, polynomial)"
            ));
            None
        }
    }
}

impl RawConfig {
    pub fn validate(self) -> Result<ExperimentConfig, ConfigError> {
        let mut errors = Vec::new();

        let rm = &self.measure;
        let window = rm.window.map(|w| (w[0], w[1])).unwrap_or_else(|| {
            let xs = rm
                .atoms
                .iter()
                .map(|a| a[0])
                .chain(rm.segments.iter().flat_map(|s| [s[0], s[1]]));
            let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
            if lo.is_finite() {
                (lo, hi)
            } else {
                (0.0, 0.0)
            }
        });
        let measure = SpeedMeasure::new(
            rm.atoms
                .iter()
                .map(|a| Atom {
                    position: a[0],
                    mass: a[1],
                })
                .collect(),
            rm.segments
                .iter()
                .map(|s| Segment {
                    left: s[0],
                    right: s[1],
                    density: s[2],
                })
                .collect(),
            rm.left_tail,
            rm.right_tail,
            window,
        )
        .map_err(|e| errors.push(measure_error_path(&e)))
        .ok();
        if let Some(m) = &measure {
            match m.validate() {
                Err(e) => errors.push(format!("measure: {e}")),
                Ok(report) if !report.local_martingale_ok && !rm.allow_invalid => {
                    for msg in report.messages {
                        errors.push(format!("measure: {msg} (set allow_invalid to override)"));
                    }
                }
                Ok(_) => {}
            }
        }

        let payoff = payoff_from(&self.payoff, &mut errors);

        let [gl, gr] = self.grid.window;
        if !(gl.is_finite() && gr.is_finite() && gl < gr) {
            errors.push("grid.window: need finite left < right".into());
        }
        if let Some(m) = &measure {
            let (wl, wr) = m.window();
            if gl > wl || gr < wr {
                errors.push(format!(
                    "grid.window: [{gl}, {gr}] must cover the measure window [{wl}, {wr}]"
                ));
            }
        }
        if self.grid.cells < 2 {
            errors.push("grid.cells: must be >= 2".into());
        }
        if self.grid.levels < 1 {
            errors.push("grid.levels: must be >= 1".into());
        }
        if self.grid.levels > 12 {
            errors.push("grid.levels: at most 12".into());
        }

        let s = &self.solver;
        if !(0.5..=1.0).contains(&s.theta) {
            errors.push(format!("solver.theta: {} outside [0.5, 1]", s.theta));
        }
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            errors.push("solver.dt: must be > 0".into());
        }
        if !(s.tolerance > 0.0) {
            errors.push("solver.tolerance: must be > 0".into());
        }
        let boundary = match s.boundary.as_str() {
            "frozen" => Some(BoundaryKind::Frozen),
            "oracle" => Some(BoundaryKind::Oracle),
            other => {
                errors.push(format!(
                    "solver.boundary: unknown `{other}` (expected frozen or oracle)"
                ));
                None
            }
        };
        if boundary == Some(BoundaryKind::Oracle) {
            if let (Some(m), Some(g)) = (&measure, &payoff) {
                if OracleSolution::lookup(m, g).is_none() {
                    errors.push(
                        "solver.boundary: `oracle` needs a registered closed form for this \
                         measure and payoff"
                            .into(),
                    );
                }
            }
        }

        if self.mc.paths < 2 {
            errors.push("mc.paths: must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.mc.exit_threshold) {
            errors.push("mc.exit_threshold: must lie in [0, 1]".into());
        }
        let mc_cells = self.mc.cells.unwrap_or(self.grid.cells);
        if mc_cells < 2 {
            errors.push("mc.cells: must be >= 2".into());
        }

        for (k, p) in self.probes.iter().enumerate() {
            if !(p.x >= gl && p.x <= gr) {
                errors.push(format!(
                    "probe[{k}].x: {} outside grid window [{gl}, {gr}]",
                    p.x
                ));
            }
            if !(p.t >= 0.0 && p.t.is_finite()) {
                errors.push(format!("probe[{k}].t: must be >= 0"));
            }
        }
        if !(self.report.z_threshold > 0.0) {
            errors.push("report.z_threshold: must be > 0".into());
        }
        if self.report.property_pairs < 1 {
            errors.push("report.property_pairs: must be >= 1".into());
        }

        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        Ok(ExperimentConfig {
            measure: measure.expect("checked"),
            payoff: payoff.expect("checked"),
            probes: self
                .probes
                .iter()
                .map(|p| Probe { x: p.x, t: p.t })
                .collect(),
            window: (gl, gr),
            cells: self.grid.cells,
            levels: self.grid.levels,
            theta: s.theta,
            dt: s.dt,
            boundary: boundary.expect("checked"),
            pde_tolerance: s.tolerance,
            n_paths: self.mc.paths,
            seed: self.mc.seed,
            exit_threshold: self.mc.exit_threshold,
            mc_cells,
            z_threshold: self.report.z_threshold,
            property_pairs: self.report.property_pairs,
            allow_invalid: rm.allow_invalid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STICKY: &str = r#"
        [measure]
        atoms = [[0.0, 1.0]]
        left_tail = 1.0
        right_tail = 1.0

        [payoff]
        kind = "abs_plus_square"

        [grid]
        window = [-8.0, 8.0]
        cells = 1600

        [[probe]]
        x = 0.0
        t = 1.0
    "#;

    #[test]
    fn sticky_config_is_valid() {
        let cfg = parse_config_str(STICKY).unwrap();
        assert_eq!(cfg.measure, SpeedMeasure::sticky(1.0).unwrap());
        assert_eq!(cfg.payoff, Payoff::AbsPlusSquare);
        assert_eq!(cfg.boundary, BoundaryKind::Frozen);
        assert!(cfg.oracle().is_some());
        assert!(cfg.grid(0).index_of(0.0).is_some());
        assert_eq!(cfg.grid(1).len(), 3201);
    }

    #[test]
    fn negative_atom_mass_is_reported_with_path() {
        let text = STICKY.replace("[[0.0, 1.0]]", "[[0.0, -1.0]]");
        match parse_config_str(&text) {
            Err(ConfigError::Invalid(errs)) => {
                assert!(errs.iter().any(|e| e.starts_with("measure.atoms[0]")), "{errs:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probe_outside_window_is_rejected() {
        let text = STICKY.replace("x = 0.0", "x = 9.5");
        match parse_config_str(&text) {
            Err(ConfigError::Invalid(errs)) => {
                assert!(errs.iter().any(|e| e.starts_with("probe[0].x")), "{errs:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_are_listed() {
        let text = STICKY
            .replace("[[0.0, 1.0]]", "[[0.0, -1.0]]")
            .replace("x = 0.0", "x = 9.5")
            .replace("cells = 1600", "cells = 1");
        match parse_config_str(&text) {
            Err(ConfigError::Invalid(errs)) => assert!(errs.len() >= 3, "{errs:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = STICKY.replace("cells = 1600", "cells = 1600\nspacing = 2");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn bounded_support_needs_override() {
        let text = STICKY.replace("left_tail = 1.0", "left_tail = 0.0");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Invalid(_))));
        let text = text.replace("right_tail = 1.0", "right_tail = 1.0\nallow_invalid = true");
        assert!(parse_config_str(&text).is_ok());
    }

    #[test]
    fn oracle_boundary_requires_registered_pair() {
        let text = STICKY.replace("abs_plus_square", "square")
            + "\n[solver]\nboundary = \"oracle\"\n";
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn growth_heuristic_flags_fast_payoffs() {
        let cfg = parse_config_str(STICKY).unwrap();
        assert!(cfg.growth_warnings().is_empty());
        let fast = STICKY.replace(
            "kind = \"abs_plus_square\"",
            "kind = \"polynomial\"\ncoefficients = [0.0, 0.0, 0.0, 0.0, 1.0]",
        );
        assert_eq!(parse_config_str(&fast).unwrap().growth_warnings().len(), 2);
    }
}
