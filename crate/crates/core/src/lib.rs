pub mod grid;
pub mod measure;
pub mod payoff;
pub mod scalar;
pub mod chain;
pub mod pde;
pub mod tridiag;
pub mod oracles;
pub mod harness;

pub type SpeedMeasureF64 = measure::SpeedMeasure<f64>;
pub type SpeedMeasureF32 = measure::SpeedMeasure<f32>;
pub type GridF64 = grid::Grid<f64>;
pub type GridF32 = grid::Grid<f32>;
pub type PayoffF64 = payoff::Payoff<f64>;
pub type PayoffF32 = payoff::Payoff<f32>;
pub type ChainSpecF64 = chain::ChainSpec<f64>;
pub type ChainSpecF32 = chain::ChainSpec<f32>;
pub type SolutionFieldF64 = pde::SolutionField<f64>;
pub type SolutionFieldF32 = pde::SolutionField<f32>;
