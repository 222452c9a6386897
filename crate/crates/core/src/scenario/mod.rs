//! Scenario files, the built-in library, run orchestration and report
//! emission.

mod config;
mod emit;
mod fig1;
mod library;
mod run;

pub use config::{
    load_scenario, parse_scenario, shannon, ConsensusBlock, ConvergenceSpec, EstimationSpec, Experiment, FedsimBlock,
    LoopBlock, MetricsSpec, OneWayBlock, PipelineBlock, ReliabilitySpec, Scenario, TwoWayBlock,
};
pub use emit::{sawtooth_csv, trace_csv};
pub use fig1::{scenario_fig1, simulate_scheme, Fig1Config, Scheme, SchemeOutcome, SlotQuery};
pub use library::{builtin, builtin_names, builtin_source, builtins};
pub use run::{run, sweep, MergedMetric, RunOptions, RunReport, SweepReport};
