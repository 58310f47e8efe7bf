use proptest::prelude::*;

use gapdiff::chain::ChainSpec;
use gapdiff::grid::Grid;
use gapdiff::measure::{Atom, FlattenedPayoff, Segment, SpeedMeasure};
use gapdiff::payoff::Payoff;

/// Positions on a 1/8 lattice of [-3, 3], so they are nodes of the test grids.
fn lattice(k: i32) -> f64 {
    -3.0 + 0.125 * f64::from(k)
}

fn measure_strategy() -> impl Strategy<Value = SpeedMeasure<f64>> {
    let atoms = proptest::collection::btree_map(0i32..=48, 0.05f64..3.0, 0..3);
    let breaks = proptest::collection::btree_set(0i32..=48, 2..6);
    let densities = proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 5);
    let tails = (prop_oneof![Just(0.0), 0.2f64..2.0], prop_oneof![Just(0.0), 0.2f64..2.0]);
    (atoms, breaks, densities, tails).prop_filter_map(
        "zero measure",
        |(atoms, breaks, densities, (lt, rt))| {
            let atoms: Vec<Atom<f64>> = atoms
                .into_iter()
                .map(|(k, mass)| Atom {
                    position: lattice(k),
                    mass,
                })
                .collect();
            let breaks: Vec<f64> = breaks.into_iter().map(lattice).collect();
            let segments: Vec<Segment<f64>> = breaks
                .windows(2)
                .zip(&densities)
                .map(|(w, &density)| Segment {
                    left: w[0],
                    right: w[1],
                    density,
                })
                .collect();
            let m = SpeedMeasure::new(atoms, segments, lt, rt, (-3.0, 3.0)).ok()?;
            m.validate().ok().map(|_| m)
        },
    )
}

fn payoff_strategy() -> impl Strategy<Value = Payoff<f64>> {
    proptest::collection::btree_map(-40i32..=40, -3.0f64..3.0, 2..7).prop_map(|pts| {
        Payoff::piecewise_linear(pts.into_iter().map(|(k, y)| (0.1 * f64::from(k), y)).collect())
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn phi_is_non_decreasing(m in measure_strategy(), a in -6.0f64..6.0, b in -6.0f64..6.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert_eq!(m.phi(0.0), 0.0);
        prop_assert!(m.phi(lo) <= m.phi(hi) + 1e-12 * (1.0 + m.phi(hi).abs()));
    }

    #[test]
    fn psi_is_convex_and_nonnegative(
        m in measure_strategy(),
        a in -6.0f64..6.0,
        b in -6.0f64..6.0,
    ) {
        let mid = 0.5 * (a + b);
        let (pa, pb, pm) = (m.psi(a), m.psi(b), m.psi(mid));
        prop_assert!(pa >= 0.0 && pb >= 0.0 && pm >= 0.0);
        prop_assert!(pm <= 0.5 * (pa + pb) + 1e-10 * (1.0 + pa + pb));
    }

    #[test]
    fn growth_bound_holds(m in measure_strategy(), x in -20.0f64..20.0) {
        if let Ok(c) = m.growth_constant() {
            prop_assert!(x.abs() <= c * (m.psi(x) + 1.0) * (1.0 + 1e-9) + 1e-12);
        } else {
            let v = m.validate().unwrap();
            prop_assert!(!v.local_martingale_ok);
        }
    }

    #[test]
    fn flattened_payoff_is_continuous_at_gap_ends(
        m in measure_strategy(),
        g in payoff_strategy(),
    ) {
        let flat = FlattenedPayoff::new(&m, &g);
        for gap in flat.gaps().gaps() {
            for a in [gap.left, gap.right] {
                let eps = 1e-9;
                prop_assert!((flat.evaluate(a) - g.evaluate(a)).abs() < 1e-12);
                prop_assert!((flat.evaluate(a - eps) - g.evaluate(a)).abs() < 1e-6);
                prop_assert!((flat.evaluate(a + eps) - g.evaluate(a)).abs() < 1e-6);
            }
            // m has no mass inside the gap
            let inner = m.mass(gap.left + 1e-12, gap.right);
            prop_assert!(inner.abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_conserves_mass(m in measure_strategy(), cells in 40usize..400) {
        let grid = Grid::uniform_with_breakpoints(-5.0, 5.0, cells, &m.breakpoints()).unwrap();
        let dm = m.discretize(&grid).unwrap();
        let expected = m.mass(-5.0, 5.0) + m.atom_at(5.0);
        let total = dm.total_mass();
        prop_assert!((total - expected).abs() <= 1e-12 * expected.max(1.0));
        for a in m.atoms() {
            let i = grid.index_of(a.position).unwrap();
            prop_assert_eq!(dm.atom_masses()[i], a.mass);
        }
    }

    #[test]
    fn validate_reflects_tails(m in measure_strategy()) {
        let v = m.validate().unwrap();
        let both = m.left_tail_density() > 0.0 && m.right_tail_density() > 0.0;
        prop_assert_eq!(v.martingale_ok, both);
        prop_assert!(!v.martingale_ok || v.local_martingale_ok);
    }

    #[test]
    fn generator_matches_second_difference(
        m in measure_strategy(),
        cells in 40usize..200,
        c in proptest::array::uniform3(-2.0f64..2.0),
    ) {
        let grid = Grid::uniform_with_breakpoints(-5.0, 5.0, cells, &m.breakpoints()).unwrap();
        let dm = m.discretize(&grid).unwrap();
        let Ok(chain) = ChainSpec::build(&dm) else { return Ok(()); };
        let f = |x: f64| c[0] + c[1] * x + c[2] * x * x;
        let s = chain.positions();
        for i in 1..s.len() - 1 {
            let (dl, dr) = (s[i] - s[i - 1], s[i + 1] - s[i]);
            let second = ((f(s[i + 1]) - f(s[i])) / dr - (f(s[i]) - f(s[i - 1])) / dl)
                / (2.0 * chain.masses()[i]);
            let got = chain.generator_apply(i, f);
            // exact value 2 c2 (dl + dr) / (2 mu (dl + dr)) up to rounding of O(q |f|) terms
            let scale = chain.holding_rates()[i] * (f(s[i - 1]).abs() + f(s[i]).abs() + f(s[i + 1]).abs());
            prop_assert!((got - second).abs() <= 1e-12 * scale.max(1.0));
            // linear functions are harmonic for the chain
            prop_assert!(chain.generator_apply(i, |x| x).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
