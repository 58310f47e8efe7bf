//! Tridiagonal matrices: products, Thomas elimination, and a partially pivoted
//! factorization for systems that are not diagonally dominant.

use crate::scalar::Scalar;

/// `A[i][i-1] = lower[i]`, `A[i][i] = diag[i]`, `A[i][i+1] = upper[i]`
/// (`lower[0]` and `upper[n-1]` are unused and kept at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply_row(&self, i: usize, x: &[T]) -> T {
        let n = self.len();
        let mut v = self.diag[i] * x[i];
        if i > 0 {
            v += self.lower[i] * x[i - 1];
        }
        if i + 1 < n {
            v += self.upper[i] * x[i + 1];
        }
        v
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.len()).map(|i| self.apply_row(i, x)).collect()
    }

    pub fn norm_inf(&self) -> T {
        (0..self.len())
            .map(|i| self.lower[i].abs() + self.diag[i].abs() + self.upper[i].abs())
            .fold(T::zero(), T::max)
    }

    /// Weak row diagonal dominance with at least one strict row.
    pub fn is_diagonally_dominant(&self) -> bool {
        let mut strict = false;
        for i in 0..self.len() {
            let off = self.lower[i].abs() + self.upper[i].abs();
            let d = self.diag[i].abs();
            if d < off {
                return false;
            }
            strict |= d > off;
        }
        strict
    }

    pub fn factor(&self) -> Option<Factorization<T>> {
        if self.is_diagonally_dominant() {
            thomas(self).map(Factorization::Thomas)
        } else {
            pivoted(self).map(Factorization::Pivoted)
        }
    }
}

/// Forward-elimination multipliers of the Thomas algorithm.
#[derive(Debug, Clone)]
pub struct ThomasFactor<T> {
    lower: Vec<T>,
    upper_scaled: Vec<T>,
    pivots: Vec<T>,
}

/// LU with row interchanges, laid out like LAPACK `gttrf`.
#[derive(Debug, Clone)]
pub struct PivotedFactor<T> {
    dl: Vec<T>,
    d: Vec<T>,
    du: Vec<T>,
    du2: Vec<T>,
    swapped: Vec<bool>,
}

#[derive(Debug, Clone)]
pub enum Factorization<T> {
    Thomas(ThomasFactor<T>),
    Pivoted(PivotedFactor<T>),
}

impl<T: Scalar> Factorization<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        match self {
            Factorization::Thomas(f) => f.solve(rhs),
            Factorization::Pivoted(f) => f.solve(rhs),
        }
    }

    pub fn is_pivoted(&self) -> bool {
        matches!(self, Factorization::Pivoted(_))
    }
}

fn thomas<T: Scalar>(a: &Tridiagonal<T>) -> Option<ThomasFactor<T>> {
    let n = a.len();
    let mut pivots = vec![T::zero(); n];
    let mut upper_scaled = vec![T::zero(); n];
    let mut prev = T::zero();
    for i in 0..n {
        let p = if i == 0 {
            a.diag[0]
        } else {
            a.diag[i] - a.lower[i] * prev
        };
        if p == T::zero() || !p.is_finite() {
            return None;
        }
        pivots[i] = p;
        prev = if i + 1 < n { a.upper[i] / p } else { T::zero() };
        upper_scaled[i] = prev;
    }
    Some(ThomasFactor {
        lower: a.lower.clone(),
        upper_scaled,
        pivots,
    })
}

impl<T: Scalar> ThomasFactor<T> {
    fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.pivots.len();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let carry = if i == 0 {
                T::zero()
            } else {
                self.lower[i] * y[i - 1]
            };
            y[i] = (rhs[i] - carry) / self.pivots[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = y[i + 1];
            y[i] -= self.upper_scaled[i] * next;
        }
        y
    }
}

fn pivoted<T: Scalar>(a: &Tridiagonal<T>) -> Option<PivotedFactor<T>> {
    let n = a.len();
    let mut dl: Vec<T> = (1..n).map(|i| a.lower[i]).collect();
    let mut d = a.diag.clone();
    let mut du: Vec<T> = (0..n.saturating_sub(1)).map(|i| a.upper[i]).collect();
    let mut du2 = vec![T::zero(); n.saturating_sub(2)];
    let mut swapped = vec![false; n];
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == T::zero() {
                return None;
            }
            let fact = dl[i] / d[i];
            dl[i] = fact;
            d[i + 1] -= fact * du[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = fact;
            let temp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = temp - fact * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du[i + 1];
            }
            swapped[i] = true;
        }
    }
    if n > 0 && (d[n - 1] == T::zero() || !d[n - 1].is_finite()) {
        return None;
    }
    Some(PivotedFactor {
        dl,
        d,
        du,
        du2,
        swapped,
    })
}

impl<T: Scalar> PivotedFactor<T> {
    fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.d.len();
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                let v = b[i];
                b[i + 1] -= self.dl[i] * v;
            }
        }
        if n == 0 {
            return b;
        }
        b[n - 1] = b[n - 1] / self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &Tridiagonal<f64>, x: &[f64], b: &[f64]) -> f64 {
        a.apply(x)
            .iter()
            .zip(b)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn thomas_on_dominant_system() {
        let n = 50;
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.diag[i] = 4.0 + i as f64 * 0.01;
            if i > 0 {
                a.lower[i] = -1.0;
            }
            if i + 1 < n {
                a.upper[i] = -1.5;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let f = a.factor().unwrap();
        assert!(!f.is_pivoted());
        assert!(residual(&a, &f.solve(&b), &b) < 1e-13);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0,1,0],[1,0,1],[0,1,1]]
        let a = Tridiagonal {
            lower: vec![0.0, 1.0, 1.0],
            diag: vec![0.0, 0.0, 1.0],
            upper: vec![1.0, 1.0, 0.0],
        };
        let b = vec![1.0, 2.0, 3.0];
        let f = a.factor().unwrap();
        assert!(f.is_pivoted());
        assert!(residual(&a, &f.solve(&b), &b) < 1e-14);
    }

    #[test]
    fn pivoted_matches_thomas_on_random_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let mut a = Tridiagonal::zeros(n);
            for i in 0..n {
                a.diag[i] = rng.gen_range(-3.0..3.0);
                if i > 0 {
                    a.lower[i] = rng.gen_range(-3.0..3.0);
                }
                if i + 1 < n {
                    a.upper[i] = rng.gen_range(-3.0..3.0);
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(f) = pivoted(&a) {
                let x = f.solve(&b);
                let scale = a.norm_inf() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
                assert!(residual(&a, &x, &b) < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = Tridiagonal {
            lower: vec![0.0, 1.0, 0.0],
            diag: vec![1.0, 1.0, 0.0],
            upper: vec![1.0, 1.0, 0.0],
        };
        assert!(a.factor().is_none());
    }
}
