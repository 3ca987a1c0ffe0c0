//! Running systems under monitors, generating adversaries and fuzz campaigns.

mod campaign;
mod generate;
mod monitor;

pub use campaign::{campaign, mutation_detected, run_seed, Campaign, CampaignConfig};
pub use generate::{generate, random_instr, Generated, Mode, Profile};
pub use monitor::{monitor_step, Breach, BreachKind, Monitor, MonitorLevel};

use std::fmt;

use crate::loader::SystemImage;
use crate::machine::{MachineState, Status};

/// Default step budget for one adversarial run.
pub const DEFAULT_FUEL: u64 = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Halted,
    Failed,
    FuelExhausted,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Halted => "Halted",
            Outcome::Failed => "Failed",
            Outcome::FuelExhausted => "FuelExhausted",
        }
    }

    pub fn of(status: Status) -> Outcome {
        match status {
            Status::Halted => Outcome::Halted,
            Status::Failed => Outcome::Failed,
            Status::Running => Outcome::FuelExhausted,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub seed: Option<u64>,
    pub outcome: Outcome,
    pub steps: u64,
    /// 1 when the assert flag cell holds anything but `Int(0)`.
    pub assert_flag: u8,
    pub breaches: Vec<Breach>,
}

impl RunReport {
    /// Whether the run counts as a campaign failure.
    pub fn is_failure(&self) -> bool {
        self.assert_flag != 0 || !self.breaches.is_empty()
    }

    /// `seed=<n> outcome=<o> steps=<k> flag=<f> violations=<m>`.
    pub fn line(&self) -> String {
        let seed = self.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        format!(
            "seed={seed} outcome={} steps={} flag={} violations={}",
            self.outcome,
            self.steps,
            self.assert_flag,
            self.breaches.len()
        )
    }

    pub fn tsv(&self) -> String {
        let seed = self.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        format!(
            "{seed}\t{}\t{}\t{}\t{}",
            self.outcome,
            self.steps,
            self.assert_flag,
            self.breaches.len()
        )
    }
}

/// Runs `state` for at most `fuel` steps and reports on it. The flag cell
/// comes from `image`.
pub fn run_system(
    image: &SystemImage,
    mut state: MachineState,
    fuel: u64,
    level: MonitorLevel,
    seed: Option<u64>,
) -> (RunReport, MachineState) {
    let mut monitor = Monitor::new(level);
    let mut steps = 0;
    while steps < fuel && state.status == Status::Running {
        monitor.step(&mut state, steps);
        steps += 1;
    }
    if level != MonitorLevel::Off {
        monitor.scan(&state, steps);
    }
    let assert_flag = match image.flag_addr {
        Some(a) => u8::from(!state.mem.get(a).is_zero()),
        None => 0,
    };
    let report = RunReport {
        seed,
        outcome: Outcome::of(state.status),
        steps,
        assert_flag,
        breaches: monitor.into_breaches(),
    };
    (report, state)
}
