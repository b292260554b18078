//! Command-line front end: run scenarios, sweep fault grids into the
//! resilience matrix, drive the schedule explorer, and check quorum
//! structures.

pub mod cli;
pub mod matrix;
pub mod quorum_file;

use crate::checkers::{self, Verdict};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::trace::Trace;
use crate::sim::Simulation;

/// Outcome of one scenario run: the trace and the configured checkers'
/// verdicts.
pub struct RunOutput {
    pub trace: Trace,
    pub verdicts: Vec<Verdict>,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed())
    }

    pub fn any_failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.failed())
    }
}

/// Runs a scenario to its horizon and applies its checker plan.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    let mut sim = Simulation::new(scenario.clone())?;
    sim.run();
    let trace = sim.into_trace();
    let verdicts = checkers::run_plan(&trace, scenario);
    Ok(RunOutput { trace, verdicts })
}
