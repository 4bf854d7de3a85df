//! Large- and small-signal stability analysis of DC microgrids with
//! current-mode-controlled converter branches feeding a constant power load.
//!
//! * [`netmodel`] — grid parameters, scenarios and their TOML schema.
//! * [`dynamics`] — the state equations, an adaptive RK 4(5) integrator and trajectory metrics.
//! * [`equilibrium`] — closed-form steady states.
//! * [`potential`] — the mixed potential and its transformed forms.
//! * [`criteria`] — the five large-signal conditions, the legacy Brayton–Moser
//!   test and eigenvalue analysis.
//! * [`rlcbench`] — the RLC benchmark where the legacy conditions come out empty.
//! * [`sweep`], [`compare`] — region maps and controller comparison.
//!
//! ```
//! use mgstab_core::{criteria, presets};
//!
//! let report = criteria::large_signal_verdict(&presets::plug_in(800.0).grid).unwrap();
//! assert_eq!(report.large_signal, Some(true));
//! ```

pub mod compare;
pub mod criteria;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod netmodel;
pub mod potential;
pub mod presets;
pub mod rlcbench;
pub mod sweep;

pub use compare::{compare_controllers, ControllerComparison};
pub use criteria::{large_signal_verdict, stability_report, StabilityReport};
pub use dynamics::{simulate, State, TimeSeries, TrajectoryMetrics, Verdict};
pub use equilibrium::{solve_equilibria, Equilibrium, RootBranch};
pub use error::{Error, Result};
pub use netmodel::{parse_scenario, BranchParams, Controller, CplParams, GridSpec, LoadParams, Scenario};
pub use sweep::{parse_sweep, sweep, RegionGrid, SweepSpec};
