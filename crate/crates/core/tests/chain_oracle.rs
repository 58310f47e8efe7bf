//! The jump chain against a fine simple random walk: a node of mass `mu` between
//! neighbours at distances `d-` and `d+` is Brownian motion slowed down at the node,
//! so its holding time is `mu` times the Brownian local time accumulated there before
//! the walk reaches a neighbour. On a lattice of step `delta` that local time is
//! `visits * delta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gapdiff::chain::{estimate_u, ChainSpec, RngStream};
use gapdiff::grid::Grid;
use gapdiff::measure::{DiscreteMeasure, SpeedMeasure};
use gapdiff::oracles::skip_oracle;
use gapdiff::payoff::Payoff;

struct WalkSample {
    hold: f64,
    right: bool,
}

/// Walk from 0 on the lattice `delta Z` until it hits `-left` or `right`.
fn walk(mu: f64, left: usize, right: usize, delta: f64, rng: &mut ChaCha8Rng) -> WalkSample {
    let mut pos: i64 = 0;
    let mut visits = 0u64;
    loop {
        if pos == 0 {
            visits += 1;
        }
        pos += if rng.gen_bool(0.5) { 1 } else { -1 };
        if pos == -(left as i64) || pos == right as i64 {
            return WalkSample {
                hold: mu * visits as f64 * delta,
                right: pos > 0,
            };
        }
    }
}

fn chain_node(mu: f64, dl: f64, dr: f64) -> ChainSpec<f64> {
    ChainSpec::build(&DiscreteMeasure::new(vec![-dl, 0.0, dr], vec![1.0, mu, 1.0]).unwrap())
        .unwrap()
}

fn compare_with_walk(mu: f64, dl: f64, dr: f64, expected_mean: f64, expected_p: f64) {
    let chain = chain_node(mu, dl, dr);
    assert!((chain.mean_holding(1) - expected_mean).abs() < 1e-14);
    assert!((chain.right_probs()[1] - expected_p).abs() < 1e-15);
    assert!((chain.holding_rates()[1] * chain.mean_holding(1) - 1.0).abs() < 1e-15);

    let steps_per_unit = 16usize;
    let delta = 1.0 / steps_per_unit as f64;
    let (left, right) = (
        (dl * steps_per_unit as f64) as usize,
        (dr * steps_per_unit as f64) as usize,
    );
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let samples: Vec<WalkSample> = (0..n).map(|_| walk(mu, left, right, delta, &mut rng)).collect();
    let nf = n as f64;
    let mean = samples.iter().map(|s| s.hold).sum::<f64>() / nf;
    let var = samples.iter().map(|s| (s.hold - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt();
    // the walk's mean is exact for every delta: 2 mu a b / (a + b) * delta in lattice units
    assert!((mean - chain.mean_holding(1)).abs() < 4.0 * se, "{mean} vs {}", chain.mean_holding(1));
    // exponential law: P(hold > mean) = 1/e up to an O(delta) lattice correction
    let tail = samples.iter().filter(|s| s.hold > chain.mean_holding(1)).count() as f64 / nf;
    let tail_se = (tail * (1.0 - tail) / nf).sqrt();
    assert!((tail - (-1.0f64).exp()).abs() < 4.0 * tail_se + 2.0 * delta, "{tail}");
    let right_freq = samples.iter().filter(|s| s.right).count() as f64 / nf;
    let p_se = (expected_p * (1.0 - expected_p) / nf).sqrt();
    assert!((right_freq - expected_p).abs() < 4.0 * p_se, "{right_freq}");
}

#[test]
fn unit_node_matches_random_walk() {
    compare_with_walk(1.0, 1.0, 1.0, 1.0, 0.5);
}

#[test]
fn asymmetric_node_matches_random_walk() {
    compare_with_walk(2.0, 1.0, 3.0, 3.0, 0.25);
}

#[test]
fn doubling_masses_halves_rates() {
    let nodes = vec![-1.0, -0.2, 0.5, 1.0, 2.5];
    let masses = vec![0.3, 1.0, 0.0, 2.0, 0.7];
    let a = ChainSpec::build(&DiscreteMeasure::new(nodes.clone(), masses.clone()).unwrap()).unwrap();
    let doubled: Vec<f64> = masses.iter().map(|m| 2.0 * m).collect();
    let b = ChainSpec::build(&DiscreteMeasure::new(nodes, doubled).unwrap()).unwrap();
    for i in 1..a.len() - 1 {
        assert!((a.holding_rates()[i] - 2.0 * b.holding_rates()[i]).abs() < 1e-14);
        assert_eq!(a.right_probs()[i], b.right_probs()[i]);
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let a: Vec<u64> = (0..8).map(|_| RngStream::new(1, 5).rng().gen()).collect();
    assert!(a.windows(2).all(|w| w[0] == w[1]));
    let mut r5 = RngStream::new(1, 5).rng();
    let mut r6 = RngStream::new(1, 6).rng();
    let x: Vec<u64> = (0..4).map(|_| r5.gen()).collect();
    let y: Vec<u64> = (0..4).map(|_| r6.gen()).collect();
    assert_ne!(x, y);
}

#[test]
fn estimates_are_bit_identical_across_runs() {
    let m = SpeedMeasure::<f64>::sticky(1.0).unwrap();
    let grid = Grid::uniform(-6.0, 6.0, 120).unwrap();
    let run = || estimate_u(&m, &Payoff::AbsPlusSquare, 0.3, 0.5, &grid, 4000, 11, 0.01).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    assert_eq!(a.seed, 11);
}

#[test]
fn refinement_is_consistent_on_skip_example() {
    let m = SpeedMeasure::<f64>::skip_unit_interval();
    let g = Payoff::MaxAbsOne;
    let n = 40_000;
    let coarse = Grid::uniform(-8.0, 8.0, 160).unwrap();
    let fine = coarse.refined();
    let a = estimate_u(&m, &g, 0.0, 1.0, &coarse, n, 1, 0.01).unwrap();
    let b = estimate_u(&m, &g, 0.0, 1.0, &fine, n, 2, 0.01).unwrap();
    let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let h = coarse.max_step();
    assert!((a.mean - b.mean).abs() < 3.0 * combined + h, "{} {}", a.mean, b.mean);
    let exact = skip_oracle(0.0, 1.0);
    assert!((b.mean - exact).abs() < 3.0 * b.stderr + 0.5 * h);
}

#[test]
fn stderr_is_sample_deviation_over_root_n() {
    let m = SpeedMeasure::lebesgue(1.0);
    let grid = Grid::uniform(-5.0, 5.0, 100).unwrap();
    let chain = ChainSpec::build(&m.discretize(&grid).unwrap()).unwrap();
    let n = 500;
    let e = chain.estimate(&Payoff::Identity, 0.0, 0.7, n, 3, 1.0).unwrap();
    let values: Vec<f64> = (0..n as u64)
        .map(|k| chain.sample_position(0.0, 0.7, &mut RngStream::new(3, k).rng()).position)
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    assert!((e.mean - mean).abs() < 1e-14);
    assert!((e.stderr - sd / (n as f64).sqrt()).abs() < 1e-14);
}
