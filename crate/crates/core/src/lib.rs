//! Irrevocable packing heuristic for finite-horizon multi-armed bandits where
//! up to `k` arms may be pulled per step.
//!
//! - [`arm`]: tabular single-arm MDPs and Beta-Binomial coin arms.
//! - [`relaxation`]: Lagrangian bisection solver for the expected-budget relaxation.
//! - [`packing`]: the heuristic itself and its Monte-Carlo driver.
//! - [`oracle`]: exact joint-state DP and pull-count profiles for tiny instances.
//! - [`bench`]: generative coin family and benchmark harness.

pub mod arm;
pub mod bench;
pub mod error;
pub mod instance;
pub mod oracle;
pub mod packing;
pub mod relaxation;

pub use arm::{build_coin_arm, build_tabular_arm, coin_predictive, ArmModel, ArmReport, CoinSpec};
pub use error::{Error, Result};
pub use instance::{ArmSpec, BanditInstance};
pub use relaxation::{solve_rlp, OccupancyTable, RelaxedSolution};
