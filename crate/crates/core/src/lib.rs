//! Kinetostatic model of flexor tendon-pulley systems in a planar
//! three-phalanx finger.
//!
//! A configuration is named by where its pulleys and attachments sit (see
//! [`study::parse_config_name`]), built into a [`TpsConfiguration`], and swept
//! over tendon tension with [`equilibrium::tension_sweep`]. Every step
//! reports range of flexion, bowstringing and pulley stress.

pub mod equilibrium;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod study;

pub use equilibrium::{
    solve_equilibrium, solve_locking_tension, tension_sweep, tension_sweep_with, Solution, SolverOptions,
    SweepOptions, SweepStep, SweepTrace, Terminal,
};
pub use error::{Result, TpsError};
pub use geometry::SystemGeometry;
pub use metrics::{range_of_flexion, StepMetrics, StressBreakdown};
pub use model::{
    build_configuration, EquilibriumState, FingerModel, ParameterMap, PulleyKind, PulleySpec, Tendon,
    TendonRoute, TpsConfiguration,
};
pub use study::{parse_config_name, ConfigName};
