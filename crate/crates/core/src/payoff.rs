//! Continuous payoffs (initial data `g`) evaluated on the real line.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PayoffError {
    #[error("piecewise-linear payoff needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("piecewise-linear abscissae must be strictly increasing (point {index})")]
    NotIncreasing { index: usize },
    #[error("payoff data must be finite (point {index})")]
    NonFinite { index: usize },
    #[error("polynomial payoff needs at least one coefficient")]
    EmptyPolynomial,
}

/// Continuous interpolant through sorted knots, extended linearly beyond the end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear<T> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> PiecewiseLinear<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self, PayoffError> {
        if points.len() < 2 {
            return Err(PayoffError::TooFewPoints(points.len()));
        }
        for (index, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(PayoffError::NonFinite { index });
            }
            if index > 0 && x <= points[index - 1].0 {
                return Err(PayoffError::NotIncreasing { index });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    /// Slope of each linear piece, including the two unbounded end pieces
    /// (which repeat the first and last interior slopes).
    pub fn slopes(&self) -> Vec<T> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    pub fn evaluate(&self, x: T) -> T {
        let pts = &self.points;
        let n = pts.len();
        // index of the piece [pts[k], pts[k+1]] used for x, clamped to the end pieces
        let k = match pts.partition_point(|p| p.0 <= x) {
            0 => 0,
            j if j >= n => n - 2,
            j => j - 1,
        };
        let (x0, y0) = pts[k];
        let (x1, y1) = pts[k + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Initial condition `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff<T> {
    /// `x`
    Identity,
    /// `|x|`
    Abs,
    /// `x^2`
    Square,
    /// `|x| + x^2`
    AbsPlusSquare,
    /// `|x| + x^2 + 2 cos x - sin|x|`
    StickyKink,
    /// `max(|x|, 1)`
    MaxAbsOne,
    PiecewiseLinear(PiecewiseLinear<T>),
    /// Coefficients in increasing degree: `c0 + c1 x + c2 x^2 + ...`.
    Polynomial(Vec<T>),
    /// `(g(x) + g(-x)) / 2`
    EvenPart(Box<Payoff<T>>),
    /// `(g(x) - g(-x)) / 2`
    OddPart(Box<Payoff<T>>),
}

impl<T: Scalar> Payoff<T> {
    pub fn piecewise_linear(points: Vec<(T, T)>) -> Result<Self, PayoffError> {
        PiecewiseLinear::new(points).map(Payoff::PiecewiseLinear)
    }

    pub fn polynomial(coefficients: Vec<T>) -> Result<Self, PayoffError> {
        if coefficients.is_empty() {
            return Err(PayoffError::EmptyPolynomial);
        }
        if let Some(index) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(PayoffError::NonFinite { index });
        }
        Ok(Payoff::Polynomial(coefficients))
    }

    pub fn constant(c: T) -> Self {
        Payoff::Polynomial(vec![c])
    }

    pub fn evaluate(&self, x: T) -> T {
        let two = T::lit(2.0);
        match self {
            Payoff::Identity => x,
            Payoff::Abs => x.abs(),
            Payoff::Square => x * x,
            Payoff::AbsPlusSquare => x.abs() + x * x,
            Payoff::StickyKink => x.abs() + x * x + two * x.cos() - x.abs().sin(),
            Payoff::MaxAbsOne => x.abs().max(T::one()),
            Payoff::PiecewiseLinear(pl) => pl.evaluate(x),
            Payoff::Polynomial(c) => c.iter().rev().fold(T::zero(), |acc, &ci| acc * x + ci),
            Payoff::EvenPart(g) => (g.evaluate(x) + g.evaluate(-x)) / two,
            Payoff::OddPart(g) => (g.evaluate(x) - g.evaluate(-x)) / two,
        }
    }

    /// Stable identifier used by reports and the oracle registry.
    pub fn name(&self) -> String {
        match self {
            Payoff::Identity => "identity".into(),
            Payoff::Abs => "abs".into(),
            Payoff::Square => "square".into(),
            Payoff::AbsPlusSquare => "abs_plus_square".into(),
            Payoff::StickyKink => "sticky_kink".into(),
            Payoff::MaxAbsOne => "max_abs_one".into(),
            Payoff::PiecewiseLinear(pl) => format!("piecewise_linear[{}]", pl.points().len()),
            Payoff::Polynomial(c) => format!("polynomial[deg {}]", c.len() - 1),
            Payoff::EvenPart(g) => format!("even({})", g.name()),
            Payoff::OddPart(g) => format!("odd({})", g.name()),
        }
    }
}
