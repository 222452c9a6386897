//! Scenarios shipped with the library, one per taxonomy cell and more.

use crate::error::{Error, Result};

use super::config::{parse_scenario, Scenario};

const BUILTINS: &[(&str, &str)] = &[
    ("periodic-sawtooth", include_str!("../../scenarios/periodic-sawtooth.toml")),
    ("mm1-fcfs", include_str!("../../scenarios/mm1-fcfs.toml")),
    ("mm1-lcfs", include_str!("../../scenarios/mm1-lcfs.toml")),
    ("wiener-tracking", include_str!("../../scenarios/wiener-tracking.toml")),
    ("event-triggered", include_str!("../../scenarios/event-triggered.toml")),
    ("two-state-aoii", include_str!("../../scenarios/two-state-aoii.toml")),
    ("qaoi-pull", include_str!("../../scenarios/qaoi-pull.toml")),
    ("control-loop", include_str!("../../scenarios/control-loop.toml")),
    ("deadline-uplink", include_str!("../../scenarios/deadline-uplink.toml")),
    ("remote-estimation-deadline", include_str!("../../scenarios/remote-estimation-deadline.toml")),
    ("two-way-arq", include_str!("../../scenarios/two-way-arq.toml")),
    ("pull-request", include_str!("../../scenarios/pull-request.toml")),
    ("pipeline-cascade", include_str!("../../scenarios/pipeline-cascade.toml")),
    ("pipeline-merged", include_str!("../../scenarios/pipeline-merged.toml")),
    ("consensus-voters", include_str!("../../scenarios/consensus-voters.toml")),
    ("fl-reduced-frequency", include_str!("../../scenarios/fl-reduced-frequency.toml")),
    ("fig1", include_str!("../../scenarios/fig1.toml")),
];

/// Names of the built-in scenarios, in listing order.
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Config text of a built-in scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin(name: &str) -> Result<Scenario> {
    let text = builtin_source(name)
        .ok_or_else(|| Error::validation("scenario", format!("no built-in scenario named '{name}'")))?;
    parse_scenario(text)
}

/// All built-ins, parsed.
pub fn builtins() -> Vec<Scenario> {
    builtin_names().map(|n| builtin(n).expect("built-in scenarios are valid")).collect()
}
