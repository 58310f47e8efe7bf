//! Speed measures with a finite description: atoms, piecewise-constant density
//! segments inside a window, and constant tail densities outside it.
//!
//! Everything here is closed form: `phi`/`psi` are evaluated piece by piece, the
//! support gaps are read off the description, and `discretize` lumps cell masses
//! onto grid nodes.

use thiserror::Error;

use crate::grid::Grid;
use crate::payoff::Payoff;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("atom {index}: position and mass must be finite")]
    NonFiniteAtom { index: usize },
    #[error("atom {index}: mass must be > 0")]
    NonPositiveAtomMass { index: usize },
    #[error("atom {index}: positions must be strictly increasing")]
    AtomsNotIncreasing { index: usize },
    #[error("segment {index}: need finite left < right and finite density >= 0")]
    BadSegment { index: usize },
    #[error("segment {index} overlaps the previous segment")]
    OverlappingSegments { index: usize },
    #[error("tail densities must be finite and >= 0")]
    BadTail,
    #[error("window must be finite with left <= right")]
    BadWindow,
    #[error("{what} at {position} lies outside the window")]
    OutsideWindow { what: &'static str, position: f64 },
    #[error("speed measure is identically zero")]
    ZeroMeasure,
    #[error("growth constant is unbounded: both tail densities must be positive")]
    UnboundedGrowth,
    #[error("grid [{left}, {right}] does not cover the measure window")]
    GridDoesNotCoverWindow { left: f64, right: f64 },
    #[error("atom at {0} is not a grid node")]
    MissingAtomNode(f64),
    #[error(transparent)]
    Discrete(#[from] DiscreteMeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<T> {
    pub position: T,
    pub mass: T,
}

/// Constant density on `[left, right)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub left: T,
    pub right: T,
    pub density: T,
}

/// Constant density on `[lo, hi)`; `lo`/`hi` may be infinite for the tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPiece<T> {
    pub lo: T,
    pub hi: T,
    pub density: T,
}

/// A locally finite, nonnegative speed measure `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedMeasure<T> {
    atoms: Vec<Atom<T>>,
    segments: Vec<Segment<T>>,
    left_tail_density: T,
    right_tail_density: T,
    window_left: T,
    window_right: T,
    // Lebesgue part over the whole line, adjacent equal densities merged.
    pieces: Vec<DensityPiece<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub local_martingale_ok: bool,
    pub martingale_ok: bool,
    pub messages: Vec<String>,
}

/// Maximal open interval of zero mass inside the hull of the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap<T> {
    pub left: T,
    pub right: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapList<T> {
    gaps: Vec<Gap<T>>,
}

impl<T: Scalar> GapList<T> {
    pub fn gaps(&self) -> &[Gap<T>] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// The gap whose open interior contains `x`.
    pub fn find(&self, x: T) -> Option<&Gap<T>> {
        let k = self.gaps.partition_point(|g| g.right <= x);
        self.gaps.get(k).filter(|g| g.left < x && x < g.right)
    }
}

impl<T: Scalar> SpeedMeasure<T> {
    /// Builds a measure from sorted atoms and segments. `window` must contain every
    /// atom and segment; the tail densities apply outside it.
    pub fn new(
        atoms: Vec<Atom<T>>,
        segments: Vec<Segment<T>>,
        left_tail_density: T,
        right_tail_density: T,
        window: (T, T),
    ) -> Result<Self, MeasureError> {
        let (window_left, window_right) = window;
        if !(window_left.is_finite() && window_right.is_finite() && window_left <= window_right)
        {
            return Err(MeasureError::BadWindow);
        }
        let tail_ok = |d: T| d.is_finite() && d >= T::zero();
        if !tail_ok(left_tail_density) || !tail_ok(right_tail_density) {
            return Err(MeasureError::BadTail);
        }
        for (index, a) in atoms.iter().enumerate() {
            if !a.position.is_finite() || !a.mass.is_finite() {
                return Err(MeasureError::NonFiniteAtom { index });
            }
            if a.mass <= T::zero() {
                return Err(MeasureError::NonPositiveAtomMass { index });
            }
            if index > 0 && a.position <= atoms[index - 1].position {
                return Err(MeasureError::AtomsNotIncreasing { index });
            }
            if a.position < window_left || a.position > window_right {
                return Err(MeasureError::OutsideWindow {
                    what: "atom",
                    position: a.position.to_f64_lossy(),
                });
            }
        }
        for (index, s) in segments.iter().enumerate() {
            let finite = s.left.is_finite() && s.right.is_finite() && s.density.is_finite();
            if !finite || s.left >= s.right || s.density < T::zero() {
                return Err(MeasureError::BadSegment { index });
            }
            if index > 0 && s.left < segments[index - 1].right {
                return Err(MeasureError::OverlappingSegments { index });
            }
            if s.left < window_left || s.right > window_right {
                return Err(MeasureError::OutsideWindow {
                    what: "segment",
                    position: s.left.to_f64_lossy(),
                });
            }
        }
        let pieces = build_pieces(
            &segments,
            left_tail_density,
            right_tail_density,
            window_left,
            window_right,
        );
        Ok(Self {
            atoms,
            segments,
            left_tail_density,
            right_tail_density,
            window_left,
            window_right,
            pieces,
        })
    }

    /// `c` times Lebesgue measure.
    pub fn lebesgue(c: T) -> Self {
        Self::new(vec![], vec![], c, c, (T::zero(), T::zero())).expect("valid lebesgue measure")
    }

    /// Lebesgue measure plus an atom of the given mass at the origin.
    pub fn sticky(atom_mass: T) -> Result<Self, MeasureError> {
        Self::new(
            vec![Atom {
                position: T::zero(),
                mass: atom_mass,
            }],
            vec![],
            T::one(),
            T::one(),
            (T::zero(), T::zero()),
        )
    }

    /// Lebesgue measure restricted to the complement of `(-1, 1)`.
    pub fn skip_unit_interval() -> Self {
        Self::new(vec![], vec![], T::one(), T::one(), (-T::one(), T::one()))
            .expect("valid skip measure")
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn left_tail_density(&self) -> T {
        self.left_tail_density
    }

    pub fn right_tail_density(&self) -> T {
        self.right_tail_density
    }

    pub fn window(&self) -> (T, T) {
        (self.window_left, self.window_right)
    }

    /// Lebesgue part over the whole line as maximal constant-density pieces.
    pub fn density_pieces(&self) -> &[DensityPiece<T>] {
        &self.pieces
    }

    /// Points where the Lebesgue density changes.
    pub fn density_breakpoints(&self) -> Vec<T> {
        self.pieces.iter().skip(1).map(|p| p.lo).collect()
    }

    /// Atom positions and density breakpoints: the nodes a grid should contain.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut b: Vec<T> = self.atoms.iter().map(|a| a.position).collect();
        b.extend(self.density_breakpoints());
        b.sort_by(|a, b| a.partial_cmp(b).unwrap());
        b.dedup();
        b
    }

    fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.pieces.iter().all(|p| p.density == T::zero())
    }

    /// Density of the Lebesgue part just left of `x`.
    pub fn density_left_of(&self, x: T) -> T {
        let k = self.pieces.partition_point(|p| p.hi < x);
        self.pieces[k.min(self.pieces.len() - 1)].density
    }

    /// Density of the Lebesgue part on `[x, x + eps)`.
    pub fn density_right_of(&self, x: T) -> T {
        let k = self.pieces.partition_point(|p| p.hi <= x);
        self.pieces[k.min(self.pieces.len() - 1)].density
    }

    /// Lebesgue-part mass of `[a, b)`.
    pub fn diffuse_mass(&self, a: T, b: T) -> T {
        self.pieces
            .iter()
            .filter(|p| p.density > T::zero())
            .map(|p| {
                let lo = p.lo.max(a);
                let hi = p.hi.min(b);
                if hi > lo {
                    p.density * (hi - lo)
                } else {
                    T::zero()
                }
            })
            .fold(T::zero(), |s, v| s + v)
    }

    /// Total atom mass in `[a, b)`.
    pub fn atom_mass(&self, a: T, b: T) -> T {
        self.atoms
            .iter()
            .filter(|at| at.position >= a && at.position < b)
            .fold(T::zero(), |s, at| s + at.mass)
    }

    /// Mass of the atom sitting exactly at `x`, if any.
    pub fn atom_at(&self, x: T) -> T {
        self.atoms
            .iter()
            .find(|a| a.position == x)
            .map_or(T::zero(), |a| a.mass)
    }

    /// `m([a, b))`.
    pub fn mass(&self, a: T, b: T) -> T {
        self.diffuse_mass(a, b) + self.atom_mass(a, b)
    }

    pub fn validate(&self) -> Result<ValidationReport, MeasureError> {
        if self.is_zero() {
            return Err(MeasureError::ZeroMeasure);
        }
        let left = self.left_tail_density > T::zero();
        let right = self.right_tail_density > T::zero();
        let mut messages = Vec::new();
        if !left {
            messages.push(
                "left tail density is zero: support is bounded below, process is not a local martingale"
                    .to_string(),
            );
        }
        if !right {
            messages.push(
                "right tail density is zero: support is bounded above, process is not a local martingale"
                    .to_string(),
            );
        }
        // A positive constant tail makes the first absolute moment of m diverge on that side,
        // so for this representation both conditions coincide.
        Ok(ValidationReport {
            local_martingale_ok: left && right,
            martingale_ok: left && right,
            messages,
        })
    }

    /// Interval `[0, x)` for `x >= 0`, `[x, 0)` for `x < 0`.
    fn origin_interval(x: T) -> (T, T) {
        if x >= T::zero() {
            (T::zero(), x)
        } else {
            (x, T::zero())
        }
    }

    /// `Phi(x) = 2 * int_{[0,x)} y m(dy)` (and `2 * int_{[x,0)} y m(dy)` for `x < 0`).
    pub fn phi(&self, x: T) -> T {
        let (a, b) = Self::origin_interval(x);
        let two = T::lit(2.0);
        let atoms = self
            .atoms
            .iter()
            .filter(|at| at.position >= a && at.position < b)
            .fold(T::zero(), |s, at| s + two * at.position * at.mass);
        let diffuse = self
            .pieces
            .iter()
            .map(|p| {
                let lo = p.lo.max(a);
                let hi = p.hi.min(b);
                if hi > lo && p.density > T::zero() {
                    p.density * (hi * hi - lo * lo)
                } else {
                    T::zero()
                }
            })
            .fold(T::zero(), |s, v| s + v);
        atoms + diffuse
    }

    /// `Psi(x) = int_0^x Phi(y) dy`, evaluated as `2 * int z (x - z) m(dz)` over the
    /// interval between 0 and `x`.
    pub fn psi(&self, x: T) -> T {
        let (a, b) = Self::origin_interval(x);
        let two = T::lit(2.0);
        let third = T::lit(2.0 / 3.0);
        let atoms = self
            .atoms
            .iter()
            .filter(|at| at.position >= a && at.position < b)
            .fold(T::zero(), |s, at| {
                s + two * at.mass * at.position * (x - at.position)
            });
        let diffuse = self
            .pieces
            .iter()
            .map(|p| {
                let lo = p.lo.max(a);
                let hi = p.hi.min(b);
                if hi > lo && p.density > T::zero() {
                    p.density
                        * (x * (hi * hi - lo * lo) - third * (hi * hi * hi - lo * lo * lo))
                } else {
                    T::zero()
                }
            })
            .fold(T::zero(), |s, v| s + v);
        (atoms + diffuse).max(T::zero())
    }

    /// Mirror image `A -> m(-A)`.
    pub fn reflected(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .rev()
            .map(|a| Atom {
                position: -a.position,
                mass: a.mass,
            })
            .collect();
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| Segment {
                left: -s.right,
                right: -s.left,
                density: s.density,
            })
            .collect();
        Self::new(
            atoms,
            segments,
            self.right_tail_density,
            self.left_tail_density,
            (-self.window_right, -self.window_left),
        )
        .expect("reflection preserves validity")
    }

    /// A constant `C1` with `|x| <= C1 (Psi(x) + 1)` for all real `x`.
    ///
    /// Between `min(window_left, 0)` and `max(window_right, 0)` the ratio
    /// `|x| / (Psi(x) + 1)` is scanned and the best point refined by golden section;
    /// beyond that `Psi` is an explicit cubic and the supremum is found in closed form.
    pub fn growth_constant(&self) -> Result<T, MeasureError> {
        let report = self.validate()?;
        if !report.local_martingale_ok {
            return Err(MeasureError::UnboundedGrowth);
        }
        let ratio = |x: T| x.abs() / (self.psi(x) + T::one());
        let lo = self.window_left.min(T::zero());
        let hi = self.window_right.max(T::zero());
        let mut best = T::zero();
        if hi > lo {
            let span = hi - lo;
            let step = T::lit(1e-3).max(span / T::lit(1e6));
            let n = (span / step).ceil().to_usize().unwrap_or(1).max(1);
            let step = span / T::from_usize_lossy(n);
            let mut arg = lo;
            for k in 0..=n {
                let x = if k == n {
                    hi
                } else {
                    lo + step * T::from_usize_lossy(k)
                };
                let r = ratio(x);
                if r > best {
                    best = r;
                    arg = x;
                }
            }
            let a = (arg - step).max(lo);
            let b = (arg + step).min(hi);
            best = best.max(golden_section_max(ratio, a, b));
        }
        best = best.max(right_tail_sup(self));
        best = best.max(right_tail_sup(&self.reflected()));
        Ok(best)
    }

    /// Maximal open zero-mass intervals between points of the support.
    pub fn support_gaps(&self) -> GapList<T> {
        let inf = T::infinity();
        let mut closed: Vec<(T, T)> = Vec::new();
        for p in &self.pieces {
            if p.density > T::zero() {
                closed.push((p.lo, p.hi));
            }
        }
        for a in &self.atoms {
            closed.push((a.position, a.position));
        }
        closed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut gaps = Vec::new();
        let mut reach = -inf;
        let mut started = false;
        for (lo, hi) in closed {
            if started && lo > reach {
                gaps.push(Gap {
                    left: reach,
                    right: lo,
                });
            }
            if !started || hi > reach {
                reach = hi;
            }
            started = true;
        }
        GapList { gaps }
    }

    /// `g` on the support, affine across each support gap.
    pub fn bar_g(&self, g: &Payoff<T>, x: T) -> T {
        FlattenedPayoff::new(self, g).evaluate(x)
    }

    /// Lumps `m` onto the grid nodes: node `i` receives the mass of
    /// `[mid(i-1, i), mid(i, i+1))`, the end cells stopping at the end nodes
    /// (the last one closed). Every atom must be a grid node.
    pub fn discretize(&self, grid: &Grid<T>) -> Result<DiscreteMeasure<T>, MeasureError> {
        let nodes = grid.nodes();
        let n = nodes.len();
        if grid.left() > self.window_left || grid.right() < self.window_right {
            return Err(MeasureError::GridDoesNotCoverWindow {
                left: grid.left().to_f64_lossy(),
                right: grid.right().to_f64_lossy(),
            });
        }
        let mut atom_masses = vec![T::zero(); n];
        for a in &self.atoms {
            let i = grid
                .index_of(a.position)
                .ok_or(MeasureError::MissingAtomNode(a.position.to_f64_lossy()))?;
            atom_masses[i] = a.mass;
        }
        let half = T::lit(0.5);
        let breaks = self.density_breakpoints();
        let mut masses = Vec::with_capacity(n);
        let mut singular = Vec::with_capacity(n);
        for i in 0..n {
            let lo = if i == 0 {
                nodes[0]
            } else {
                (nodes[i - 1] + nodes[i]) * half
            };
            let hi = if i == n - 1 {
                nodes[n - 1]
            } else {
                (nodes[i] + nodes[i + 1]) * half
            };
            masses.push(self.diffuse_mass(lo, hi) + atom_masses[i]);
            let kink = breaks.iter().any(|&b| b >= lo && b <= hi);
            singular.push(atom_masses[i] > T::zero() || kink);
        }
        Ok(DiscreteMeasure::with_structure(
            nodes.to_vec(),
            masses,
            atom_masses,
            singular,
        )?)
    }
}

fn build_pieces<T: Scalar>(
    segments: &[Segment<T>],
    left_tail: T,
    right_tail: T,
    wl: T,
    wr: T,
) -> Vec<DensityPiece<T>> {
    let inf = T::infinity();
    let mut raw = vec![DensityPiece {
        lo: -inf,
        hi: wl,
        density: left_tail,
    }];
    let mut cursor = wl;
    for s in segments {
        if s.left > cursor {
            raw.push(DensityPiece {
                lo: cursor,
                hi: s.left,
                density: T::zero(),
            });
        }
        raw.push(DensityPiece {
            lo: s.left,
            hi: s.right,
            density: s.density,
        });
        cursor = s.right;
    }
    if wr > cursor {
        raw.push(DensityPiece {
            lo: cursor,
            hi: wr,
            density: T::zero(),
        });
    }
    raw.push(DensityPiece {
        lo: wr,
        hi: inf,
        density: right_tail,
    });
    let mut merged: Vec<DensityPiece<T>> = Vec::with_capacity(raw.len());
    for p in raw {
        if p.hi <= p.lo {
            continue;
        }
        match merged.last_mut() {
            Some(last) if last.density == p.density => last.hi = p.hi,
            _ => merged.push(p),
        }
    }
    merged
}

/// `sup_{x >= R} x / (Psi(x) + 1)` with `R = max(window_right, 0)`, where `Psi` is the cubic
/// `a x^3 + c x + e` (`a = d/3`). The derivative of the ratio vanishes where
/// `-2a x^3 + e + 1 = 0`.
fn right_tail_sup<T: Scalar>(m: &SpeedMeasure<T>) -> T {
    let r = m.window_right.max(T::zero());
    let d = m.right_tail_density;
    let phi_r = m.phi(r) + T::lit(2.0) * r * m.atom_at(r);
    let psi_r = m.psi(r);
    let e = psi_r - phi_r * r + T::lit(2.0 / 3.0) * d * r * r * r;
    let ratio = |x: T| x / (m.psi(x) + T::one());
    let mut best = ratio(r);
    if d > T::zero() && e + T::one() > T::zero() {
        let x_star = (T::lit(1.5) * (e + T::one()) / d).cbrt();
        if x_star > r {
            best = best.max(ratio(x_star));
        }
    }
    best
}

fn golden_section_max<T: Scalar, F: Fn(T) -> T>(f: F, mut a: T, mut b: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() <= T::epsilon() * (T::one() + a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

/// `g` flattened across the support gaps of a measure (computed once, evaluated lazily).
#[derive(Debug, Clone)]
pub struct FlattenedPayoff<'a, T> {
    payoff: &'a Payoff<T>,
    gaps: GapList<T>,
}

impl<'a, T: Scalar> FlattenedPayoff<'a, T> {
    pub fn new(m: &SpeedMeasure<T>, payoff: &'a Payoff<T>) -> Self {
        Self {
            payoff,
            gaps: m.support_gaps(),
        }
    }

    pub fn gaps(&self) -> &GapList<T> {
        &self.gaps
    }

    pub fn evaluate(&self, x: T) -> T {
        match self.gaps.find(x) {
            Some(gap) => {
                let (a, b) = (gap.left, gap.right);
                ((x - a) * self.payoff.evaluate(b) + (b - x) * self.payoff.evaluate(a)) / (b - a)
            }
            None => self.payoff.evaluate(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscreteMeasureError {
    #[error("nodes and masses differ in length")]
    LengthMismatch,
    #[error("nodes must be strictly increasing (node {index})")]
    NotIncreasing { index: usize },
    #[error("node masses must be finite and >= 0 (node {index})")]
    BadMass { index: usize },
    #[error("discrete measure has no positive mass")]
    Empty,
}

/// Atomic speed measure on a node set. Zero-mass nodes are geometry only.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    nodes: Vec<T>,
    masses: Vec<T>,
    atom_masses: Vec<T>,
    singular: Vec<bool>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    pub fn new(nodes: Vec<T>, masses: Vec<T>) -> Result<Self, DiscreteMeasureError> {
        let n = nodes.len();
        Self::with_structure(nodes, masses, vec![T::zero(); n], vec![false; n])
    }

    fn with_structure(
        nodes: Vec<T>,
        masses: Vec<T>,
        atom_masses: Vec<T>,
        singular: Vec<bool>,
    ) -> Result<Self, DiscreteMeasureError> {
        if atom_masses.len() != nodes.len() || singular.len() != nodes.len() {
            return Err(DiscreteMeasureError::LengthMismatch);
        }
        Self {
            nodes,
            masses,
            atom_masses,
            singular,
        }
        .check()
    }

    fn check(self) -> Result<Self, DiscreteMeasureError> {
        if self.nodes.len() != self.masses.len() {
            return Err(DiscreteMeasureError::LengthMismatch);
        }
        for (index, &x) in self.nodes.iter().enumerate() {
            if !x.is_finite() || (index > 0 && x <= self.nodes[index - 1]) {
                return Err(DiscreteMeasureError::NotIncreasing { index });
            }
        }
        if let Some(index) = self
            .masses
            .iter()
            .position(|&m| !m.is_finite() || m < T::zero())
        {
            return Err(DiscreteMeasureError::BadMass { index });
        }
        if !self.masses.iter().any(|&m| m > T::zero()) {
            return Err(DiscreteMeasureError::Empty);
        }
        Ok(self)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// Part of each node mass coming from atoms of the parent measure.
    pub fn atom_masses(&self) -> &[T] {
        &self.atom_masses
    }

    /// Nodes whose cell holds an atom or a jump of the parent density.
    pub fn singular(&self) -> &[bool] {
        &self.singular
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().fold(T::zero(), |s, &m| s + m)
    }
}
