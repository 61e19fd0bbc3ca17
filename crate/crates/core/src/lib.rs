//! Least-cost scheduling of hydro-thermal power systems by dynamic
//! programming.
//!
//! A [`Scenario`] describes the planning horizon, demands, thermal economics,
//! reservoirs and the inflow model. [`solve`] runs backward induction for one
//! of the [`Model`]s and returns value and policy tables sampled on the
//! reservoir grid; [`sim::rollout`] plays a policy forward and
//! [`oracle`] recomputes small optima by exhaustive enumeration.
//!
//! ```
//! use hydrodp::{io, solve, Model, SolveOptions};
//!
//! let scenario = io::parse_scenario(r#"{
//!     "n_periods": 2,
//!     "demands": [2, 2],
//!     "costs": { "c": 1, "p": 10, "K": 1, "a": [0, 0] },
//!     "reservoirs": [ { "capacity": 2, "initial": 1, "levels": 3 } ],
//!     "flow": { "kind": "deterministic", "inflows": [[1, 1]] }
//! }"#).unwrap();
//! let solution = solve(&scenario, Model::Single, &SolveOptions::default()).unwrap();
//! assert_eq!(solution.initial_value().unwrap(), 1.0);
//! ```

pub mod aggregate;
pub mod deterministic;
pub mod energy;
mod error;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod scenario;
pub mod sim;
mod solve;
pub mod stochastic;

pub use error::{Error, Result};
pub use grid::{Grid, PolicyTable, ValueTable};
pub use scenario::{validate, Scenario, Violation};
pub use solve::{solve, Model, Solution, SolveOptions, StageStats, MAX_EXACT_RESERVOIRS};

/// The guide's chapters, compiled as doctests so its snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/deterministic.md")]
    mod deterministic {}
    #[doc = include_str!("../../../book/src/aggregate.md")]
    mod aggregate {}
    #[doc = include_str!("../../../book/src/stochastic.md")]
    mod stochastic {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
