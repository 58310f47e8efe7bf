//! Spatial grids: strictly increasing node sets with at least three nodes.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("grid nodes must be finite and strictly increasing (node {index})")]
    NotIncreasing { index: usize },
    #[error("grid window [{left}, {right}] is empty or not finite")]
    BadWindow { left: f64, right: f64 },
    #[error("grid needs at least 2 cells")]
    TooFewCells,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nodes: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(nodes: Vec<T>) -> Result<Self, GridError> {
        if nodes.len() < 3 {
            return Err(GridError::TooFewNodes(nodes.len()));
        }
        for (index, x) in nodes.iter().enumerate() {
            if !x.is_finite() || (index > 0 && *x <= nodes[index - 1]) {
                return Err(GridError::NotIncreasing { index });
            }
        }
        Ok(Self { nodes })
    }

    /// `cells` equal cells on `[left, right]`; the end points are hit exactly.
    pub fn uniform(left: T, right: T, cells: usize) -> Result<Self, GridError> {
        check_window(left, right)?;
        if cells < 2 {
            return Err(GridError::TooFewCells);
        }
        let n = T::from_usize_lossy(cells);
        let nodes = (0..=cells)
            .map(|k| match k {
                0 => left,
                k if k == cells => right,
                k => {
                    let s = T::from_usize_lossy(k) / n;
                    left * (T::one() - s) + right * s
                }
            })
            .collect();
        Self::new(nodes)
    }

    /// Uniform grid with the given breakpoints forced in as exact nodes. A uniform node
    /// closer than a quarter step to a breakpoint is moved onto it, otherwise the
    /// breakpoint is inserted. Breakpoints outside `(left, right)` are ignored.
    pub fn uniform_with_breakpoints(
        left: T,
        right: T,
        cells: usize,
        breakpoints: &[T],
    ) -> Result<Self, GridError> {
        let base = Self::uniform(left, right, cells)?;
        let h = (right - left) / T::from_usize_lossy(cells);
        let mut nodes = base.nodes;
        let mut extra = Vec::new();
        for &b in breakpoints {
            if !(b > left && b < right) {
                continue;
            }
            let k = nodes.partition_point(|&x| x < b);
            let nearest = [k.saturating_sub(1), k.min(nodes.len() - 1)]
                .into_iter()
                .min_by(|&i, &j| {
                    (nodes[i] - b)
                        .abs()
                        .partial_cmp(&(nodes[j] - b).abs())
                        .unwrap()
                })
                .unwrap();
            let interior = nearest != 0 && nearest != nodes.len() - 1;
            if (nodes[nearest] - b).abs() < h * T::lit(0.25) && interior {
                nodes[nearest] = b;
            } else if nodes[nearest] != b {
                extra.push(b);
            }
        }
        nodes.extend(extra);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
        Self::new(nodes)
    }

    /// Inserts the midpoint of every cell.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push((w[0] + w[1]) / T::lit(2.0));
        }
        nodes.push(*self.nodes.last().unwrap());
        Self { nodes }
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn left(&self) -> T {
        self.nodes[0]
    }

    pub fn right(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }

    /// Cell widths `h_{i+1/2} = x_{i+1} - x_i`.
    pub fn steps(&self) -> Vec<T> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_step(&self) -> T {
        self.steps().into_iter().fold(T::zero(), T::max)
    }

    /// Index of a node exactly equal to `x`.
    pub fn index_of(&self, x: T) -> Option<usize> {
        let k = self.nodes.partition_point(|&n| n < x);
        (k < self.nodes.len() && self.nodes[k] == x).then_some(k)
    }

    /// Linear interpolation of node values at `x` (clamped to the end values).
    pub fn interpolate(&self, values: &[T], x: T) -> T {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return values[0];
        }
        if x >= self.nodes[n - 1] {
            return values[n - 1];
        }
        let k = self.nodes.partition_point(|&node| node <= x);
        let (x0, x1) = (self.nodes[k - 1], self.nodes[k]);
        let s = (x - x0) / (x1 - x0);
        values[k - 1] * (T::one() - s) + values[k] * s
    }
}

fn check_window<T: Scalar>(left: T, right: T) -> Result<(), GridError> {
    if !(left.is_finite() && right.is_finite() && left < right) {
        return Err(GridError::BadWindow {
            left: left.to_f64_lossy(),
            right: right.to_f64_lossy(),
        });
    }
    Ok(())
}
