//! Finite-volume solver for the backward equation `2 m U_t = U_xx`.
//!
//! The equation is tested against hat functions on the grid, which gives the
//! semi-discrete system `2 M U' = L U` with `M` the lumped node masses and `L` the
//! flux-difference operator
//! `(L U)_i = (U_{i+1} - U_i) / h_{i+1/2} - (U_i - U_{i-1}) / h_{i-1/2}`.
//! Atoms only enter `M`. Nodes with zero mass turn their row into the algebraic
//! constraint `(L U)_i = 0`, so `U` stays affine across zero-mass runs. Time is
//! advanced by the theta scheme with `theta` in `[1/2, 1]`.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::Grid;
use crate::measure::{DiscreteMeasure, FlattenedPayoff, MeasureError, SpeedMeasure};
use crate::payoff::Payoff;
use crate::scalar::Scalar;
use crate::tridiag::{Factorization, Tridiagonal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("speed measure does not satisfy the local martingale condition")]
    NotLocalMartingale,
    #[error("grid and discrete measure have different nodes")]
    GridMismatch,
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("step matrix is singular")]
    Singular,
    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("regularity diagnostics need at least 3 time levels after t = 0, got {0}")]
    TooFewLevels(usize),
}

/// Dirichlet data at the two end nodes.
#[derive(Clone)]
pub enum Boundary<T> {
    /// `U(x_0, t) = U(x_0, 0)` and likewise at `x_N`.
    FrozenDirichlet,
    /// `U(x, t) = f(x, t)` at both end nodes.
    TimeDependent(Arc<dyn Fn(T, T) -> T + Send + Sync>),
}

impl<T> std::fmt::Debug for Boundary<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::FrozenDirichlet => write!(f, "FrozenDirichlet"),
            Boundary::TimeDependent(_) => write!(f, "TimeDependent(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig<T> {
    /// 1 is implicit Euler, 1/2 the trapezoidal rule.
    pub theta: T,
    pub dt: T,
    pub horizon: T,
    pub boundary: Boundary<T>,
    /// Keep every `save_every`-th level (the initial level and the last three are always kept).
    pub save_every: usize,
    /// Solve even when the measure fails the local martingale condition.
    pub allow_invalid: bool,
}

impl<T: Scalar> SolveConfig<T> {
    pub fn implicit_euler(dt: T, horizon: T) -> Self {
        Self {
            theta: T::one(),
            dt,
            horizon,
            boundary: Boundary::FrozenDirichlet,
            save_every: 1,
            allow_invalid: false,
        }
    }

    pub fn with_theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary<T>) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_save_every(mut self, save_every: usize) -> Self {
        self.save_every = save_every;
        self
    }

    fn check(&self) -> Result<(), PdeError> {
        let half = T::lit(0.5);
        if !(self.theta >= half && self.theta <= T::one()) {
            return Err(PdeError::BadConfig(format!(
                "theta = {} outside [1/2, 1]",
                self.theta
            )));
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(PdeError::BadConfig(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.horizon >= T::zero() && self.horizon.is_finite()) {
            return Err(PdeError::BadConfig(format!(
                "horizon = {} must be >= 0",
                self.horizon
            )));
        }
        if self.save_every == 0 {
            return Err(PdeError::BadConfig("save_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stiffness `L` (symmetric, row sums zero) and lumped masses `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T> {
    pub stiffness: Tridiagonal<T>,
    pub masses: Vec<T>,
}

/// Assembles `L` and `M` for a grid and its discretized measure. The end rows of `L`
/// carry a single flux, which keeps the matrix symmetric and negative semidefinite.
pub fn assemble<T: Scalar>(
    grid: &Grid<T>,
    dm: &DiscreteMeasure<T>,
) -> Result<Operator<T>, PdeError> {
    if grid.nodes() != dm.nodes() {
        return Err(PdeError::GridMismatch);
    }
    let n = grid.len();
    let mut l = Tridiagonal::zeros(n);
    for (k, h) in grid.steps().into_iter().enumerate() {
        let c = T::one() / h;
        l.diag[k] -= c;
        l.diag[k + 1] -= c;
        l.upper[k] = c;
        l.lower[k + 1] = c;
    }
    Ok(Operator {
        stiffness: l,
        masses: dm.masses().to_vec(),
    })
}

/// Theta-scheme stepper with a factorization reused across steps.
pub struct Stepper<T> {
    op: Operator<T>,
    nodes: Vec<T>,
    theta: T,
    dt: T,
    zero_mass: Vec<bool>,
    matrix: Tridiagonal<T>,
    factor: Factorization<T>,
    boundary: Boundary<T>,
    frozen: (T, T),
}

impl<T: Scalar> Stepper<T> {
    /// `frozen` holds the end values used by [`Boundary::FrozenDirichlet`].
    pub fn new(
        op: Operator<T>,
        nodes: Vec<T>,
        theta: T,
        dt: T,
        boundary: Boundary<T>,
        frozen: (T, T),
    ) -> Result<Self, PdeError> {
        let n = nodes.len();
        let two = T::lit(2.0);
        let zero_mass: Vec<bool> = op.masses.iter().map(|&m| m == T::zero()).collect();
        let mut matrix = Tridiagonal::zeros(n);
        for i in 0..n {
            if i == 0 || i == n - 1 {
                matrix.diag[i] = T::one();
            } else if zero_mass[i] {
                matrix.lower[i] = op.stiffness.lower[i];
                matrix.diag[i] = op.stiffness.diag[i];
                matrix.upper[i] = op.stiffness.upper[i];
            } else {
                let s = theta * dt;
                matrix.lower[i] = -s * op.stiffness.lower[i];
                matrix.diag[i] = two * op.masses[i] - s * op.stiffness.diag[i];
                matrix.upper[i] = -s * op.stiffness.upper[i];
            }
        }
        let factor = matrix.factor().ok_or(PdeError::Singular)?;
        Ok(Self {
            op,
            nodes,
            theta,
            dt,
            zero_mass,
            matrix,
            factor,
            boundary,
            frozen,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn zero_mass(&self) -> &[bool] {
        &self.zero_mass
    }

    pub fn operator(&self) -> &Operator<T> {
        &self.op
    }

    fn boundary_values(&self, t: T) -> (T, T) {
        match &self.boundary {
            Boundary::FrozenDirichlet => self.frozen,
            Boundary::TimeDependent(f) => {
                (f(self.nodes[0], t), f(self.nodes[self.nodes.len() - 1], t))
            }
        }
    }

    /// Advances `u` (at time `t_new - dt`) to `t_new`.
    pub fn step(&self, u: &[T], t_new: T) -> Result<Vec<T>, PdeError> {
        let n = u.len();
        let two = T::lit(2.0);
        let explicit = (T::one() - self.theta) * self.dt;
        let mut rhs = vec![T::zero(); n];
        for i in 1..n - 1 {
            if !self.zero_mass[i] {
                let flux = if explicit > T::zero() {
                    explicit * self.op.stiffness.apply_row(i, u)
                } else {
                    T::zero()
                };
                rhs[i] = two * self.op.masses[i] * u[i] + flux;
            }
        }
        let (left, right) = self.boundary_values(t_new);
        rhs[0] = left;
        rhs[n - 1] = right;

        let mut x = self.factor.solve(&rhs);
        let tolerance = T::solve_tolerance();
        let mut residual = self.relative_residual(&x, &rhs);
        if residual > tolerance {
            let r: Vec<T> = self
                .matrix
                .apply(&x)
                .iter()
                .zip(&rhs)
                .map(|(ax, b)| *b - *ax)
                .collect();
            let dx = self.factor.solve(&r);
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
            residual = self.relative_residual(&x, &rhs);
        }
        if residual > tolerance || !residual.is_finite() {
            return Err(PdeError::Residual {
                residual: residual.to_f64_lossy(),
                tolerance: tolerance.to_f64_lossy(),
            });
        }
        Ok(x)
    }

    fn relative_residual(&self, x: &[T], b: &[T]) -> T {
        let r = self
            .matrix
            .apply(x)
            .iter()
            .zip(b)
            .map(|(ax, b)| (*ax - *b).abs())
            .fold(T::zero(), T::max);
        let xn = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let bn = b.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let scale = self.matrix.norm_inf() * xn + bn;
        if scale == T::zero() {
            r
        } else {
            r / scale
        }
    }
}

/// Node values of `U` at the saved time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField<T> {
    pub nodes: Vec<T>,
    pub masses: Vec<T>,
    pub zero_mass: Vec<bool>,
    pub times: Vec<T>,
    pub values: Vec<Vec<T>>,
    /// Step actually used (the horizon divided into equal steps).
    pub dt: T,
    pub theta: T,
}

impl<T: Scalar> SolutionField<T> {
    pub fn final_values(&self) -> &[T] {
        self.values.last().expect("field has at least one level")
    }

    pub fn final_time(&self) -> T {
        *self.times.last().expect("field has at least one level")
    }

    /// Linear interpolation in `x` of level `level`.
    pub fn value_at(&self, level: usize, x: T) -> T {
        interpolate(&self.nodes, &self.values[level], x)
    }

    /// Linear interpolation in `x` at the final time.
    pub fn final_value_at(&self, x: T) -> T {
        self.value_at(self.values.len() - 1, x)
    }
}

fn interpolate<T: Scalar>(nodes: &[T], values: &[T], x: T) -> T {
    let n = nodes.len();
    if x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let k = nodes.partition_point(|&node| node <= x);
    let s = (x - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
    values[k - 1] * (T::one() - s) + values[k] * s
}

/// Solves `2 m U_t = U_xx`, `U(., 0) = g-bar` on `grid` up to `cfg.horizon`.
pub fn solve<T: Scalar>(
    m: &SpeedMeasure<T>,
    g: &Payoff<T>,
    grid: &Grid<T>,
    cfg: &SolveConfig<T>,
) -> Result<SolutionField<T>, PdeError> {
    cfg.check()?;
    if !cfg.allow_invalid && !m.validate()?.local_martingale_ok {
        return Err(PdeError::NotLocalMartingale);
    }
    let dm = m.discretize(grid)?;
    let flat = FlattenedPayoff::new(m, g);
    let initial: Vec<T> = grid.nodes().iter().map(|&x| flat.evaluate(x)).collect();
    solve_from(grid, &dm, initial, T::zero(), cfg)
}

/// Runs the scheme from arbitrary node values `initial` at time `t_start` for
/// `cfg.horizon` more time units. Frozen boundaries hold the initial end values.
pub fn solve_from<T: Scalar>(
    grid: &Grid<T>,
    dm: &DiscreteMeasure<T>,
    initial: Vec<T>,
    t_start: T,
    cfg: &SolveConfig<T>,
) -> Result<SolutionField<T>, PdeError> {
    cfg.check()?;
    if initial.len() != grid.len() {
        return Err(PdeError::GridMismatch);
    }
    let op = assemble(grid, dm)?;
    let steps = if cfg.horizon == T::zero() {
        0
    } else {
        (cfg.horizon / cfg.dt - T::lit(1e-9))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1)
    };
    let dt = if steps == 0 {
        cfg.dt
    } else {
        cfg.horizon / T::from_usize_lossy(steps)
    };
    let n = grid.len();
    let frozen = (initial[0], initial[n - 1]);
    let stepper = Stepper::new(
        op,
        grid.nodes().to_vec(),
        cfg.theta,
        dt,
        cfg.boundary.clone(),
        frozen,
    )?;
    let mut times = vec![t_start];
    let mut values = vec![initial.clone()];
    let mut u = initial;
    for k in 1..=steps {
        let t = t_start + dt * T::from_usize_lossy(k);
        u = stepper.step(&u, t)?;
        if k % cfg.save_every == 0 || k + 3 > steps {
            times.push(t);
            values.push(u.clone());
        }
    }
    Ok(SolutionField {
        nodes: grid.nodes().to_vec(),
        masses: dm.masses().to_vec(),
        zero_mass: stepper.zero_mass().to_vec(),
        times,
        values,
        dt,
        theta: cfg.theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    Atom,
    /// Gap endpoint or jump of the density.
    DensityBreak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeJump<T> {
    pub x: T,
    /// Right minus left one-sided slope.
    pub jump: T,
    pub kind: JumpKind,
}

/// Spatial and temporal regularity diagnostics of one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport<T> {
    pub time: T,
    /// Max |second divided difference| over zero-mass nodes.
    pub max_gap_curvature: T,
    /// Sup of `|(L U)_i / (2 mu_i)|` over interior positive-mass nodes.
    pub rn_sup: T,
    /// Max `|(L U)_i / (2 mu_i) - (U^n_i - U^{n-1}_i) / dt|`: the density of `U_xx`
    /// against `m` compared with the discrete time derivative.
    pub rn_vs_time_derivative: T,
    /// Max first difference of the discrete `U_t` over the last two steps, per unit time.
    pub max_u_tt: T,
    /// Slope jumps at atoms, gap endpoints and density jumps.
    pub singular_jumps: Vec<SlopeJump<T>>,
    /// Largest |slope jump| at the remaining nodes whose stencils avoid singular nodes.
    pub max_regular_jump: T,
    pub max_regular_jump_at: Option<T>,
}

/// Derivative at `at` of the quadratic through three points.
fn quadratic_slope<T: Scalar>(xs: [T; 3], us: [T; 3], at: T) -> T {
    let mut s = T::zero();
    for j in 0..3 {
        let mut denom = T::one();
        for l in 0..3 {
            if l != j {
                denom *= xs[j] - xs[l];
            }
        }
        let mut num = T::zero();
        for k in 0..3 {
            if k == j {
                continue;
            }
            let mut prod = T::one();
            for l in 0..3 {
                if l != j && l != k {
                    prod *= at - xs[l];
                }
            }
            num += prod;
        }
        s += us[j] * num / denom;
    }
    s
}

/// Regularity diagnostics at the final level of `field`.
///
/// Slopes are one-sided quadratic fits (three nodes on each side), so for a
/// piecewise smooth `U` the jump is `O(h^2)` wherever `U` is `C^1` and order one at
/// a kink.
pub fn regularity_report<T: Scalar>(
    field: &SolutionField<T>,
    dm: &DiscreteMeasure<T>,
) -> Result<RegularityReport<T>, PdeError> {
    let levels = field.values.len();
    if levels < 4 {
        return Err(PdeError::TooFewLevels(levels.saturating_sub(1)));
    }
    if field.nodes != dm.nodes() {
        return Err(PdeError::GridMismatch);
    }
    let x = &field.nodes;
    let n = x.len();
    let u = &field.values[levels - 1];
    let u1 = &field.values[levels - 2];
    let u2 = &field.values[levels - 3];
    let dt1 = field.times[levels - 1] - field.times[levels - 2];
    let dt2 = field.times[levels - 2] - field.times[levels - 3];
    let two = T::lit(2.0);

    let mut max_gap_curvature = T::zero();
    let mut rn_sup = T::zero();
    let mut rn_vs_time_derivative = T::zero();
    let mut max_u_tt = T::zero();
    for i in 1..n - 1 {
        let hl = x[i] - x[i - 1];
        let hr = x[i + 1] - x[i];
        let flux = (u[i + 1] - u[i]) / hr - (u[i] - u[i - 1]) / hl;
        if dm.masses()[i] == T::zero() {
            max_gap_curvature = max_gap_curvature.max((two * flux / (hl + hr)).abs());
        } else {
            let ratio = flux / (two * dm.masses()[i]);
            rn_sup = rn_sup.max(ratio.abs());
            let ut = (u[i] - u1[i]) / dt1;
            let ut_prev = (u1[i] - u2[i]) / dt2;
            rn_vs_time_derivative = rn_vs_time_derivative.max((ratio - ut).abs());
            max_u_tt = max_u_tt.max(((ut - ut_prev) / dt1).abs());
        }
    }

    let singular = dm.singular();
    let mut singular_jumps = Vec::new();
    let mut max_regular_jump = T::zero();
    let mut max_regular_jump_at = None;
    for i in 2..n.saturating_sub(2) {
        let left = quadratic_slope([x[i - 2], x[i - 1], x[i]], [u[i - 2], u[i - 1], u[i]], x[i]);
        let right = quadratic_slope([x[i], x[i + 1], x[i + 2]], [u[i], u[i + 1], u[i + 2]], x[i]);
        let jump = right - left;
        if singular[i] {
            let kind = if dm.atom_masses()[i] > T::zero() {
                JumpKind::Atom
            } else {
                JumpKind::DensityBreak
            };
            singular_jumps.push(SlopeJump {
                x: x[i],
                jump,
                kind,
            });
        } else if !singular[i - 1] && !singular[i + 1] && jump.abs() > max_regular_jump {
            max_regular_jump = jump.abs();
            max_regular_jump_at = Some(x[i]);
        }
    }
    Ok(RegularityReport {
        time: field.final_time(),
        max_gap_curvature,
        rn_sup,
        rn_vs_time_derivative,
        max_u_tt,
        singular_jumps,
        max_regular_jump,
        max_regular_jump_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assemble_examples() {
        let grid = Grid::uniform(-2.0, 2.0, 40).unwrap();
        let dm = SpeedMeasure::<f64>::lebesgue(1.0).discretize(&grid).unwrap();
        let op = assemble(&grid, &dm).unwrap();
        let h = 0.1;
        let sq: Vec<f64> = grid.nodes().iter().map(|x| x * x).collect();
        let lin: Vec<f64> = grid.nodes().to_vec();
        let ones = vec![1.0; grid.len()];
        let l_sq = op.stiffness.apply(&sq);
        let l_lin = op.stiffness.apply(&lin);
        for i in 1..grid.len() - 1 {
            assert!((l_sq[i] - 2.0 * h).abs() < 1e-12);
            assert!(l_lin[i].abs() < 1e-12);
        }
        assert!(op.stiffness.apply(&ones).iter().all(|v| v.abs() < 1e-12));
        for i in 0..grid.len() - 1 {
            assert_eq!(op.stiffness.upper[i], op.stiffness.lower[i + 1]);
        }
        assert!(op.masses.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn assemble_rejects_mismatch() {
        let grid = Grid::uniform(-2.0, 2.0, 40).unwrap();
        let other = Grid::uniform(-2.0, 2.0, 20).unwrap();
        let dm = SpeedMeasure::<f64>::lebesgue(1.0).discretize(&other).unwrap();
        assert_eq!(assemble(&grid, &dm), Err(PdeError::GridMismatch));
    }

    #[test]
    fn stiffness_is_negative_semidefinite() {
        let grid = Grid::new(vec![-1.0, -0.3, 0.0, 0.1, 0.9, 2.0]).unwrap();
        let dm = SpeedMeasure::<f64>::lebesgue(1.0).discretize(&grid).unwrap();
        let op = assemble(&grid, &dm).unwrap();
        let v = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1];
        let lv = op.stiffness.apply(&v);
        let q: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
        assert!(q <= 0.0);
    }

    #[test]
    fn constant_payoff_stays_constant() {
        let grid = Grid::uniform(-3.0, 3.0, 60).unwrap();
        let m = SpeedMeasure::<f64>::skip_unit_interval();
        let cfg = SolveConfig::implicit_euler(0.05, 1.0);
        let f = solve(&m, &Payoff::constant(2.5), &grid, &cfg).unwrap();
        for level in &f.values {
            assert!(level.iter().all(|v| (v - 2.5).abs() < 1e-13));
        }
    }

    #[test]
    fn heat_quadratic_is_exact_with_oracle_boundary() {
        let grid = Grid::uniform(-3.0, 3.0, 60).unwrap();
        let m = SpeedMeasure::<f64>::lebesgue(1.0);
        let cfg = SolveConfig::implicit_euler(0.01, 1.0)
            .with_boundary(Boundary::TimeDependent(Arc::new(|x: f64, t: f64| x * x + t)));
        let f = solve(&m, &Payoff::Square, &grid, &cfg).unwrap();
        for (t, level) in f.times.iter().zip(&f.values) {
            for (x, u) in grid.nodes().iter().zip(level) {
                assert!((u - (x * x + t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_mass_run_stays_affine() {
        let grid = Grid::uniform(-3.0, 3.0, 60).unwrap();
        let m = SpeedMeasure::<f64>::skip_unit_interval();
        let cfg = SolveConfig::implicit_euler(0.01, 0.5);
        let f = solve(&m, &Payoff::Square, &grid, &cfg).unwrap();
        let dm = m.discretize(&grid).unwrap();
        for level in &f.values[1..] {
            for i in 1..grid.len() - 1 {
                if dm.masses()[i] == 0.0 {
                    let d2 = level[i + 1] - 2.0 * level[i] + level[i - 1];
                    assert!(d2.abs() / 0.01 < 1e-10);
                }
            }
        }
    }

    #[test]
    fn config_is_checked() {
        let grid = Grid::uniform(-3.0, 3.0, 60).unwrap();
        let m = SpeedMeasure::<f64>::lebesgue(1.0);
        let bad = SolveConfig::implicit_euler(0.01, 1.0).with_theta(0.3);
        assert!(matches!(
            solve(&m, &Payoff::Square, &grid, &bad),
            Err(PdeError::BadConfig(_))
        ));
        let bad = SolveConfig::implicit_euler(0.0, 1.0);
        assert!(matches!(
            solve(&m, &Payoff::Square, &grid, &bad),
            Err(PdeError::BadConfig(_))
        ));
        let bounded = SpeedMeasure::new(vec![], vec![], 0.0, 1.0, (0.0, 0.0)).unwrap();
        assert_eq!(
            solve(&bounded, &Payoff::Square, &grid, &SolveConfig::implicit_euler(0.1, 1.0)),
            Err(PdeError::NotLocalMartingale)
        );
    }

    #[test]
    fn horizon_is_hit_exactly() {
        let grid = Grid::uniform(-3.0, 3.0, 30).unwrap();
        let m = SpeedMeasure::<f64>::lebesgue(1.0);
        let cfg = SolveConfig::implicit_euler(0.3, 1.0).with_save_every(1000);
        let f = solve(&m, &Payoff::Square, &grid, &cfg).unwrap();
        assert_eq!(f.final_time(), 1.0);
        assert_eq!(f.times.len(), 4);
        assert!((f.dt - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadratic_slope_is_exact_on_quadratics() {
        let q = |x: f64| 1.0 + 2.0 * x - 3.0 * x * x;
        let xs = [0.1, 0.4, 1.0];
        let s = quadratic_slope(xs, xs.map(q), 1.0);
        assert!((s - (2.0 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn regularity_needs_levels() {
        let grid = Grid::uniform(-3.0, 3.0, 30).unwrap();
        let m = SpeedMeasure::<f64>::lebesgue(1.0);
        let dm = m.discretize(&grid).unwrap();
        let cfg = SolveConfig::implicit_euler(0.5, 1.0);
        let f = solve(&m, &Payoff::Square, &grid, &cfg).unwrap();
        assert_eq!(regularity_report(&f, &dm), Err(PdeError::TooFewLevels(2)));
    }

    #[test]
    fn regularity_of_smooth_heat_solution() {
        let grid = Grid::uniform(-4.0, 4.0, 160).unwrap();
        let m = SpeedMeasure::<f64>::lebesgue(1.0);
        let dm = m.discretize(&grid).unwrap();
        let cfg = SolveConfig::implicit_euler(0.01, 1.0)
            .with_boundary(Boundary::TimeDependent(Arc::new(|x: f64, t: f64| x * x + t)));
        let f = solve(&m, &Payoff::Square, &grid, &cfg).unwrap();
        let r = regularity_report(&f, &dm).unwrap();
        assert!(r.singular_jumps.is_empty());
        assert!(r.max_regular_jump < 1e-9);
        assert!((r.rn_sup - 1.0).abs() < 1e-9);
        assert!(r.rn_vs_time_derivative < 1e-8);
        assert!(r.max_u_tt < 1e-6);
    }
}
