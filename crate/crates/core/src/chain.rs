//! Exact simulation of the generalized diffusion of an atomic speed measure.
//!
//! For an atomic measure the time-changed Brownian motion is a nearest-neighbour
//! jump chain on the positive-mass nodes. At state `i` with left gap `d-`, right gap
//! `d+` and mass `mu` it waits an exponential time with rate
//! `(d- + d+) / (2 mu d- d+)` and then jumps right with probability `d- / (d- + d+)`.
//! These are the rates for which the chain generator equals `1 / (2 mu)` times the
//! second difference quotient at the node. Zero-mass nodes are not states: the
//! process crosses them instantly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::Grid;
use crate::measure::{DiscreteMeasure, MeasureError, SpeedMeasure};
use crate::payoff::Payoff;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("jump chain needs at least 3 positive-mass nodes, got {0}")]
    TooFewStates(usize),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("speed measure does not satisfy the local martingale condition")]
    NotLocalMartingale,
    #[error("need at least 2 paths, got {0}")]
    TooFewPaths(usize),
    #[error("time must be finite and >= 0")]
    BadTime,
}

/// Reproducible random stream addressed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream parameter gives independent,
/// non-overlapping sequences under one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Uniform on `(0, 1]`, safe for `-ln u`.
#[inline]
fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec<T> {
    positions: Vec<T>,
    masses: Vec<T>,
    holding_rates: Vec<T>,
    mean_holding: Vec<T>,
    right_probs: Vec<T>,
}

impl<T: Scalar> ChainSpec<T> {
    /// Drops zero-mass nodes and derives rates and jump probabilities for the rest.
    pub fn build(dm: &DiscreteMeasure<T>) -> Result<Self, ChainError> {
        let (positions, masses): (Vec<T>, Vec<T>) = dm
            .nodes()
            .iter()
            .zip(dm.masses())
            .filter(|(_, &mu)| mu > T::zero())
            .map(|(&x, &mu)| (x, mu))
            .unzip();
        let n = positions.len();
        if n < 3 {
            return Err(ChainError::TooFewStates(n));
        }
        let two = T::lit(2.0);
        let mut holding_rates = vec![T::zero(); n];
        let mut mean_holding = vec![T::infinity(); n];
        let mut right_probs = vec![T::zero(); n];
        for i in 1..n - 1 {
            let left = positions[i] - positions[i - 1];
            let right = positions[i + 1] - positions[i];
            let mu = masses[i];
            holding_rates[i] = (left + right) / (two * mu * left * right);
            mean_holding[i] = two * mu * left * right / (left + right);
            right_probs[i] = left / (left + right);
        }
        Ok(Self {
            positions,
            masses,
            holding_rates,
            mean_holding,
            right_probs,
        })
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// Exit rate per state; zero at the two (frozen) boundary states.
    pub fn holding_rates(&self) -> &[T] {
        &self.holding_rates
    }

    pub fn right_probs(&self) -> &[T] {
        &self.right_probs
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.positions.len()
    }

    /// Mean holding time `2 mu d- d+ / (d- + d+)` at an interior state.
    pub fn mean_holding(&self, i: usize) -> T {
        self.mean_holding[i]
    }

    /// `(A f)(x_i) = q_i [p_i f(x_{i+1}) + (1 - p_i) f(x_{i-1}) - f(x_i)]` at an interior state.
    pub fn generator_apply<F: Fn(T) -> T>(&self, i: usize, f: F) -> T {
        let p = self.right_probs[i];
        self.holding_rates[i]
            * (p * f(self.positions[i + 1]) + (T::one() - p) * f(self.positions[i - 1])
                - f(self.positions[i]))
    }

    /// One holding time and the index jumped to, from an interior state.
    pub fn step_from<R: Rng>(&self, i: usize, rng: &mut R) -> (T, usize) {
        let hold = self.mean_holding[i] * T::lit(-open_uniform(rng).ln());
        let next = if T::lit(rng.gen::<f64>()) < self.right_probs[i] {
            i + 1
        } else {
            i - 1
        };
        (hold, next)
    }

    /// Starting state for `X_0` given `X_{0-} = x`: `x` itself when it is a state,
    /// otherwise one of the two neighbouring states with the Brownian exit probabilities
    /// of the gap. Points beyond the outermost states start on the boundary state.
    pub fn initial_state<R: Rng>(&self, x: T, rng: &mut R) -> InitialState<T> {
        let n = self.positions.len();
        let k = self.positions.partition_point(|&p| p < x);
        let index = if k == 0 {
            0
        } else if k == n {
            n - 1
        } else if self.positions[k] == x {
            k
        } else {
            let (a, b) = (self.positions[k - 1], self.positions[k]);
            let up = (x - a) / (b - a);
            if T::lit(rng.gen::<f64>()) < up {
                k
            } else {
                k - 1
            }
        };
        InitialState {
            index,
            pre_position: x,
        }
    }

    /// Runs one path from state `start` for time `t`; boundary states absorb.
    pub fn run<R: Rng>(&self, start: usize, t: T, rng: &mut R) -> PathEnd {
        let mut i = start;
        let mut clock = T::zero();
        loop {
            if self.is_boundary(i) {
                return PathEnd {
                    index: i,
                    hit_boundary: true,
                };
            }
            let (hold, next) = self.step_from(i, rng);
            clock += hold;
            if clock > t {
                return PathEnd {
                    index: i,
                    hit_boundary: false,
                };
            }
            i = next;
        }
    }

    /// Samples `X_t` started from `X_{0-} = x`.
    pub fn sample_position<R: Rng>(&self, x: T, t: T, rng: &mut R) -> Sample<T> {
        let start = self.initial_state(x, rng).index;
        let end = self.run(start, t, rng);
        Sample {
            position: self.positions[end.index],
            hit_boundary: end.hit_boundary,
        }
    }

    /// Monte-Carlo estimate of `E g(X_t^x)` with path `k` on stream `(seed, k)`.
    ///
    /// The per-path results are collected in path order before reduction, so the
    /// estimate does not depend on how rayon schedules the work.
    pub fn estimate(
        &self,
        g: &Payoff<T>,
        x: T,
        t: T,
        n_paths: usize,
        seed: u64,
        exit_threshold: T,
    ) -> Result<Estimate<T>, ChainError> {
        if n_paths < 2 {
            return Err(ChainError::TooFewPaths(n_paths));
        }
        if !t.is_finite() || t < T::zero() {
            return Err(ChainError::BadTime);
        }
        let samples: Vec<(T, bool)> = (0..n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = RngStream::new(seed, k).rng();
                let s = self.sample_position(x, t, &mut rng);
                (g.evaluate(s.position), s.hit_boundary)
            })
            .collect();
        let n = T::from_usize_lossy(n_paths);
        let mean = samples.iter().fold(T::zero(), |s, v| s + v.0) / n;
        let ss = samples
            .iter()
            .fold(T::zero(), |s, v| s + (v.0 - mean) * (v.0 - mean));
        let stderr = (ss / (n - T::one())).sqrt() / n.sqrt();
        let hits = samples.iter().filter(|v| v.1).count();
        let boundary_exit_fraction = T::from_usize_lossy(hits) / n;
        Ok(Estimate {
            x,
            t,
            mean,
            stderr,
            n_paths,
            boundary_exit_fraction,
            flagged: boundary_exit_fraction > exit_threshold,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState<T> {
    pub index: usize,
    /// `X_{0-}`, the requested starting point.
    pub pre_position: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathEnd {
    pub index: usize,
    pub hit_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub position: T,
    pub hit_boundary: bool,
}

/// Monte-Carlo estimate of `U(x, t)`; paths use streams `(seed, 0..n_paths)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub x: T,
    pub t: T,
    pub mean: T,
    /// Sample standard deviation over `sqrt(n_paths)`.
    pub stderr: T,
    pub n_paths: usize,
    pub boundary_exit_fraction: T,
    /// Boundary exits exceeded the configured threshold; the mean is biased.
    pub flagged: bool,
    pub seed: u64,
}

/// Discretizes `m` on `grid`, builds the jump chain and estimates `E g(X_t^x)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_u<T: Scalar>(
    m: &SpeedMeasure<T>,
    g: &Payoff<T>,
    x: T,
    t: T,
    grid: &Grid<T>,
    n_paths: usize,
    seed: u64,
    exit_threshold: T,
) -> Result<Estimate<T>, ChainError> {
    if !m.validate()?.local_martingale_ok {
        return Err(ChainError::NotLocalMartingale);
    }
    let chain = ChainSpec::build(&m.discretize(grid)?)?;
    chain.estimate(g, x, t, n_paths, seed, exit_threshold)
}
