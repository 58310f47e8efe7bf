//! Closed-form reference solutions, written independently of the solver and the
//! sampler so that agreement with them means something.
//!
//! * heat case `m = c * Lebesgue`: `U(x, t) = E g(x + B_{t/c})`;
//! * sticky origin `m = delta_0 + Lebesgue` with `g = |x| + x^2` and with
//!   `g = |x| + x^2 + 2 cos x - sin|x|`;
//! * Lebesgue measure with `(-1, 1)` removed and `g = max(|x|, 1)`.

use thiserror::Error;

use crate::measure::SpeedMeasure;
use crate::payoff::{Payoff, PiecewiseLinear};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("no closed-form heat expectation for payoff `{0}`")]
    Unsupported(String),
    #[error("time must be finite and >= 0")]
    BadTime,
}

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(x: T) -> T {
    (-(x * x) / T::lit(2.0)).exp() / (T::TAU()).sqrt()
}

/// Standard normal distribution function, absolute error below `1e-15` in `f64`.
///
/// `|x| <= 3` uses the everywhere-convergent series
/// `1/2 + phi(x) (x + x^3/3 + x^5/(3*5) + ...)`, larger `|x|` the continued fraction
/// of the Mills ratio `1 - N(z) = phi(z) / (z + 1/(z + 2/(z + 3/(z + ...))))`.
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    let three = T::lit(3.0);
    if x.is_nan() {
        return x;
    }
    if x.abs() <= three {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 1usize;
        while term.abs() > T::epsilon() * T::lit(1e-2) * sum.abs() && k < 500 {
            term = term * x2 / T::from_usize_lossy(2 * k + 1);
            sum += term;
            k += 1;
        }
        T::lit(0.5) + normal_pdf(x) * sum
    } else {
        let z = x.abs();
        let mut f = z;
        for k in (1..=80).rev() {
            f = z + T::from_usize_lossy(k) / f;
        }
        let tail = normal_pdf(z) / f;
        if x > T::zero() {
            T::one() - tail
        } else {
            tail
        }
    }
}

/// `g = g_e + g_o` with `g_e` even and `g_o` odd.
pub fn split_even_odd<T: Scalar>(g: &Payoff<T>) -> (Payoff<T>, Payoff<T>) {
    (
        Payoff::EvenPart(Box::new(g.clone())),
        Payoff::OddPart(Box::new(g.clone())),
    )
}

/// `m = delta_0 + Lebesgue`, `g = |x| + x^2`: `U = |x| + x^2 + t`.
pub fn sticky_oracle_1<T: Scalar>(x: T, t: T) -> T {
    x.abs() + x * x + t
}

/// `m = delta_0 + Lebesgue`, `g = |x| + x^2 + 2 cos x - sin|x|`:
/// `U = |x| + t + x^2 + e^{-t/2} (2 cos x - sin|x|)`.
pub fn sticky_oracle_2<T: Scalar>(x: T, t: T) -> T {
    let two = T::lit(2.0);
    x.abs() + t + x * x + (-t / two).exp() * (two * x.cos() - x.abs().sin())
}

/// Slope jump `U_x(0+, t) - U_x(0-, t) = 2 (1 - e^{-t/2})` of [`sticky_oracle_2`] at the atom.
pub fn sticky_oracle_2_kink<T: Scalar>(t: T) -> T {
    let two = T::lit(2.0);
    two * (T::one() - (-t / two).exp())
}

/// Lebesgue measure off `(-1, 1)`, `g = max(|x|, 1)`.
pub fn skip_oracle<T: Scalar>(x: T, t: T) -> T {
    let a = x.abs();
    if t <= T::zero() {
        return a.max(T::one());
    }
    let two = T::lit(2.0);
    let st = t.sqrt();
    if a <= T::one() {
        T::one() + (two * t / T::PI()).sqrt()
    } else {
        let z = (a - T::one()) / st;
        a - two * (a - T::one()) * normal_cdf(-z) + two * st * normal_pdf(z)
    }
}

/// `E g(x + sqrt(t) Z)` for standard normal `Z`: moment expansion for polynomials up
/// to degree 4, exact Gaussian integrals piece by piece for piecewise-linear payoffs.
pub fn heat_oracle<T: Scalar>(g: &Payoff<T>, x: T, t: T) -> Result<T, OracleError> {
    if !t.is_finite() || t < T::zero() {
        return Err(OracleError::BadTime);
    }
    let one = T::one();
    let two = T::lit(2.0);
    match g {
        Payoff::Identity => Ok(x),
        Payoff::Square => Ok(x * x + t),
        Payoff::Polynomial(c) if c.len() <= 5 => Ok(polynomial_expectation(c, x, t)),
        Payoff::Abs => Ok(piecewise_linear_expectation(
            &PiecewiseLinear::new(vec![(-one, one), (T::zero(), T::zero()), (one, one)])
                .expect("valid knots"),
            x,
            t,
        )),
        Payoff::MaxAbsOne => Ok(piecewise_linear_expectation(
            &PiecewiseLinear::new(vec![(-two, two), (-one, one), (one, one), (two, two)])
                .expect("valid knots"),
            x,
            t,
        )),
        Payoff::AbsPlusSquare => Ok(heat_oracle(&Payoff::Abs, x, t)? + x * x + t),
        Payoff::PiecewiseLinear(pl) => Ok(piecewise_linear_expectation(pl, x, t)),
        Payoff::EvenPart(h) => Ok((heat_oracle(h, x, t)? + heat_oracle(h, -x, t)?) / two),
        Payoff::OddPart(h) => Ok((heat_oracle(h, x, t)? - heat_oracle(h, -x, t)?) / two),
        other => Err(OracleError::Unsupported(other.name())),
    }
}

fn polynomial_expectation<T: Scalar>(c: &[T], x: T, t: T) -> T {
    // E (x + s Z)^k = sum_j binom(k, j) x^{k-j} s^j E Z^j, E Z^j = (j-1)!! for even j.
    let mut total = T::zero();
    for (k, &ck) in c.iter().enumerate() {
        let mut moment = T::zero();
        for j in (0..=k).step_by(2) {
            let binom = T::from_usize_lossy(binomial(k, j));
            let double_factorial = T::from_usize_lossy((1..j).step_by(2).product::<usize>());
            moment += binom * x.powi((k - j) as i32) * t.powi((j / 2) as i32) * double_factorial;
        }
        total += ck * moment;
    }
    total
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn piecewise_linear_expectation<T: Scalar>(pl: &PiecewiseLinear<T>, x: T, t: T) -> T {
    if t == T::zero() {
        return pl.evaluate(x);
    }
    let s = t.sqrt();
    let pts = pl.points();
    let slopes = pl.slopes();
    let inf = T::infinity();
    let mut total = T::zero();
    // piece k covers [knot_{k-1}, knot_k), with unbounded first and last pieces
    for k in 0..=pts.len() {
        let lo = if k == 0 { -inf } else { pts[k - 1].0 };
        let hi = if k == pts.len() { inf } else { pts[k].0 };
        let slope = slopes[k.saturating_sub(1).min(slopes.len() - 1)];
        let (x0, y0) = pts[k.saturating_sub(1).min(pts.len() - 1)];
        // a + b Y on this piece
        let b = slope;
        let a = y0 - slope * x0;
        let alpha = (lo - x) / s;
        let beta = (hi - x) / s;
        let prob = normal_cdf(beta) - normal_cdf(alpha);
        let pdf = |z: T| if z.is_infinite() { T::zero() } else { normal_pdf(z) };
        total += (a + b * x) * prob + b * s * (pdf(alpha) - pdf(beta));
    }
    total
}

/// Which registered closed form, if any, a measure corresponds to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureClass<T> {
    /// `c` times Lebesgue measure.
    Lebesgue(T),
    /// `delta_0 + Lebesgue`.
    StickyOrigin,
    /// Lebesgue measure restricted to the complement of `(-1, 1)`.
    SkipUnitInterval,
    Other,
}

impl<T: Scalar> MeasureClass<T> {
    /// Classifies by the measure itself, not by how it was written down.
    pub fn of(m: &SpeedMeasure<T>) -> Self {
        let pieces = m.density_pieces();
        let atoms = m.atoms();
        let one = T::one();
        if pieces.len() == 1 && pieces[0].density > T::zero() {
            if atoms.is_empty() {
                return MeasureClass::Lebesgue(pieces[0].density);
            }
            if atoms.len() == 1
                && atoms[0].position == T::zero()
                && atoms[0].mass == one
                && pieces[0].density == one
            {
                return MeasureClass::StickyOrigin;
            }
        }
        if atoms.is_empty()
            && pieces.len() == 3
            && pieces[0].density == one
            && pieces[1].density == T::zero()
            && pieces[2].density == one
            && pieces[1].lo == -one
            && pieces[1].hi == one
        {
            return MeasureClass::SkipUnitInterval;
        }
        MeasureClass::Other
    }
}

#[derive(Debug, Clone, PartialEq)]
enum OracleKind<T> {
    Heat { payoff: Payoff<T>, density: T },
    Sticky1,
    Sticky2,
    Skip,
}

/// A closed-form `U(x, t)` tied to one (measure, payoff) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<T> {
    kind: OracleKind<T>,
    descriptor: String,
}

impl<T: Scalar> OracleSolution<T> {
    /// Registry lookup keyed on the canonical measure class and the payoff.
    pub fn lookup(m: &SpeedMeasure<T>, g: &Payoff<T>) -> Option<Self> {
        let (kind, descriptor) = match (MeasureClass::of(m), g) {
            (MeasureClass::StickyOrigin, Payoff::AbsPlusSquare) => {
                (OracleKind::Sticky1, "sticky_origin/abs_plus_square".to_string())
            }
            (MeasureClass::StickyOrigin, Payoff::StickyKink) => {
                (OracleKind::Sticky2, "sticky_origin/sticky_kink".to_string())
            }
            (MeasureClass::SkipUnitInterval, Payoff::MaxAbsOne) => {
                (OracleKind::Skip, "skip_unit_interval/max_abs_one".to_string())
            }
            (MeasureClass::Lebesgue(c), g) if heat_oracle(g, T::zero(), T::one()).is_ok() => (
                OracleKind::Heat {
                    payoff: g.clone(),
                    density: c,
                },
                format!("lebesgue({c})/{}", g.name()),
            ),
            _ => return None,
        };
        Some(Self { kind, descriptor })
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn evaluate(&self, x: T, t: T) -> T {
        match &self.kind {
            OracleKind::Heat { payoff, density } => {
                heat_oracle(payoff, x, t / *density).expect("supported at lookup")
            }
            OracleKind::Sticky1 => sticky_oracle_1(x, t),
            OracleKind::Sticky2 => sticky_oracle_2(x, t),
            OracleKind::Skip => skip_oracle(x, t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_values() {
        assert!((normal_pdf(0.0f64) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert_eq!(normal_cdf(0.0f64), 0.5);
        // 30-digit reference values
        assert!((normal_cdf(1.96f64) - 0.975_002_104_851_779_6).abs() < 1e-15);
        assert!((normal_cdf(-5.0f64) - 2.866_515_718_791_939e-7).abs() < 1e-18);
        assert!((normal_cdf(-8.0f64) - 6.220_960_574_271_784e-16).abs() < 1e-25);
        assert!((normal_cdf(3.5f64) - 0.999_767_370_920_964_5).abs() < 1e-15);
    }

    #[test]
    fn split_examples() {
        let (e, o) = split_even_odd(&Payoff::<f64>::AbsPlusSquare);
        let (e1, o1) = split_even_odd(&Payoff::<f64>::Identity);
        let (e2, o2) = split_even_odd(&Payoff::polynomial(vec![1.0, 1.0]).unwrap());
        for &x in &[-2.5, -0.3, 0.0, 0.7, 4.0] {
            assert_eq!(e.evaluate(x), Payoff::AbsPlusSquare.evaluate(x));
            assert_eq!(o.evaluate(x), 0.0);
            assert_eq!(e1.evaluate(x), 0.0);
            assert!((o1.evaluate(x) - x).abs() < 1e-15);
            assert_eq!(e2.evaluate(x), 1.0);
            assert!((o2.evaluate(x) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn sticky_examples() {
        assert_eq!(sticky_oracle_1(0.0, 1.0), 1.0);
        assert_eq!(sticky_oracle_1(2.0, 0.0), 6.0);
        assert_eq!(sticky_oracle_1(-1.0, 0.5), 2.5);
        assert_eq!(sticky_oracle_2(0.0, 0.0), 2.0);
        let t = 0.8f64;
        assert!((sticky_oracle_2(0.0, t) - (t + 2.0 * (-t / 2.0).exp())).abs() < 1e-15);
        let h = std::f64::consts::FRAC_PI_2;
        assert!((sticky_oracle_2(h, 0.0) - (h + h * h - 1.0)).abs() < 1e-14);
        for &x in &[-1.3f64, 0.0, 0.4, 2.0] {
            assert!((sticky_oracle_2(x, 0.0) - Payoff::StickyKink.evaluate(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn sticky_kink_matches_one_sided_differences() {
        let t = 1.0f64;
        let h = 1e-6;
        let right = (sticky_oracle_2(h, t) - sticky_oracle_2(0.0, t)) / h;
        let left = (sticky_oracle_2(0.0, t) - sticky_oracle_2(-h, t)) / h;
        assert!((right - left - sticky_oracle_2_kink(t)).abs() < 1e-5);
        assert!((sticky_oracle_2_kink(1.0f64) - 0.786_938_680_574_733_2).abs() < 1e-15);
    }

    #[test]
    fn skip_examples() {
        let v = skip_oracle(0.0f64, 1.0);
        assert!((v - 1.797_884_560_802_865_4).abs() < 1e-15);
        for &t in &[0.01f64, 0.5, 1.0, 3.0] {
            let inside = skip_oracle(1.0, t);
            let outside = skip_oracle(1.0 + 1e-12, t);
            assert!((inside - outside).abs() < 1e-10);
        }
        // mpmath reference values
        assert!((skip_oracle(2.0f64, 1.0) - 2.166_630_941_175_373).abs() < 1e-14);
        assert!((skip_oracle(1.5f64, 0.5) - 1.699_641_228_374_245_7).abs() < 1e-14);
        assert!((skip_oracle(10.0f64, 0.01) - 10.0).abs() < 1e-14);
        assert_eq!(skip_oracle(0.3f64, 0.0), 1.0);
    }

    #[test]
    fn heat_examples() {
        assert_eq!(heat_oracle(&Payoff::Square, 0.5f64, 0.3).unwrap(), 0.25 + 0.3);
        assert_eq!(heat_oracle(&Payoff::Identity, 0.5f64, 0.3).unwrap(), 0.5);
        let quartic = Payoff::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (x, t) = (0.7f64, 1.3);
        let expect = x.powi(4) + 6.0 * x * x * t + 3.0 * t * t;
        assert!((heat_oracle(&quartic, x, t).unwrap() - expect).abs() < 1e-13);
        assert!(matches!(
            heat_oracle(&Payoff::<f64>::StickyKink, 0.0, 1.0),
            Err(OracleError::Unsupported(_))
        ));
        // E|Z| = sqrt(2/pi)
        let abs = heat_oracle(&Payoff::Abs, 0.0f64, 1.0).unwrap();
        assert!((abs - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(heat_oracle(&Payoff::Abs, -0.4f64, 0.0).unwrap(), 0.4);
    }

    #[test]
    fn registry_keys_on_canonical_measure() {
        let sticky = SpeedMeasure::<f64>::sticky(1.0).unwrap();
        let o = OracleSolution::lookup(&sticky, &Payoff::AbsPlusSquare).unwrap();
        assert_eq!(o.evaluate(0.0, 1.0), 1.0);
        assert!(OracleSolution::lookup(&sticky, &Payoff::Square).is_none());
        // Lebesgue written with an explicit unit segment is still Lebesgue
        let leb = SpeedMeasure::new(
            vec![],
            vec![crate::measure::Segment {
                left: -2.0,
                right: 3.0,
                density: 1.0,
            }],
            1.0,
            1.0,
            (-2.0, 3.0),
        )
        .unwrap();
        assert_eq!(MeasureClass::of(&leb), MeasureClass::Lebesgue(1.0));
        let o = OracleSolution::lookup(&leb, &Payoff::Square).unwrap();
        assert_eq!(o.evaluate(1.0, 1.0), 2.0);
        let skip = SpeedMeasure::<f64>::skip_unit_interval();
        assert_eq!(MeasureClass::of(&skip), MeasureClass::SkipUnitInterval);
        assert!(OracleSolution::lookup(&skip, &Payoff::MaxAbsOne).is_some());
        let half = SpeedMeasure::<f64>::lebesgue(2.0);
        let o = OracleSolution::lookup(&half, &Payoff::Square).unwrap();
        assert_eq!(o.evaluate(0.0, 1.0), 0.5);
    }
}
