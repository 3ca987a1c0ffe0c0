//! The three enclave case studies: outsourced computation, mutual
//! attestation and a trusted sensor pipeline.
//!
//! Sources and specs are embedded, so every case builds without touching
//! the filesystem.

use std::fmt;

use num_bigint::BigInt;

use crate::harness::{run_system, MonitorLevel, Outcome, RunReport};
use crate::isa::{Addr, RegName, Word};
use crate::loader::{self, LoadError, SystemImage};
use crate::machine::MachineState;

/// Step budget for the intended runs.
pub const CASE_FUEL: u64 = 50_000;

macro_rules! embed {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../cases/", $name)))),*]
    };
}

/// Every embedded file, by name.
pub const FILES: &[(&str, &str)] = embed![
    "soc.spec",
    "soc_modified.spec",
    "soc_forge.spec",
    "soc_client.casm",
    "soc_enclave.casm",
    "soc_adversary.casm",
    "soc_adversary_modified.casm",
    "soc_adversary_forge.casm",
    "mutual.spec",
    "mutual_main.casm",
    "mutual_a.casm",
    "mutual_b.casm",
    "mutual_adversary.casm",
    "sensor.spec",
    "sensor_aliased.spec",
    "sensor_modified.spec",
    "sensor_main.casm",
    "sensor_reader.casm",
    "sensor_transformer.casm",
    "sensor_adversary.casm",
    "sensor_adversary_aliased.casm",
    "sensor_adversary_modified.casm",
];

/// Golden traces of the intended runs.
pub const GOLDEN: &[(&str, &str)] = &[
    ("soc", include_str!("../golden/soc.trace")),
    ("mutual", include_str!("../golden/mutual.trace")),
    ("sensor", include_str!("../golden/sensor.trace")),
];

pub fn file(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn resolver(name: &str) -> Option<String> {
    file(name).map(str::to_string)
}

pub fn golden(case: &str) -> Option<&'static str> {
    GOLDEN.iter().find(|(n, _)| *n == case).map(|(_, text)| *text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Case {
    Soc,
    Mutual,
    Sensor,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Soc, Case::Mutual, Case::Sensor];

    pub fn name(self) -> &'static str {
        match self {
            Case::Soc => "soc",
            Case::Mutual => "mutual",
            Case::Sensor => "sensor",
        }
    }

    pub fn from_name(s: &str) -> Option<Case> {
        let s = s.strip_suffix(".spec").unwrap_or(s);
        Case::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn spec_name(self) -> String {
        format!("{}.spec", self.name())
    }

    pub fn spec(self) -> &'static str {
        file(&self.spec_name()).expect("every case has an embedded spec")
    }

    pub fn build(self) -> Result<(SystemImage, MachineState), LoadError> {
        build_variant(&self.spec_name())
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Builds any embedded spec, such as `soc_forge.spec`.
pub fn build_variant(spec: &str) -> Result<(SystemImage, MachineState), LoadError> {
    let text = file(spec).ok_or_else(|| LoadError::Missing(spec.to_string()))?;
    loader::load(text, &resolver)
}

/// The outcome of a case run with the observations each case cares about.
#[derive(Clone, Debug)]
pub struct CaseRun {
    pub image: SystemImage,
    pub report: RunReport,
    pub state: MachineState,
}

impl CaseRun {
    pub fn reg(&self, r: RegName) -> &Word {
        self.state.reg(r)
    }

    /// The word at `offset` in region `name`.
    pub fn cell(&self, name: &str, offset: Addr) -> &Word {
        let base = self.image.region(name).map(|r| r.base).unwrap_or_default();
        self.state.mem.get(base + offset)
    }

    /// The identity the loader measured for a region.
    pub fn static_identity(&self, name: &str) -> Option<&BigInt> {
        self.image.env.get(&format!("{name}.id"))
    }

    /// Case-specific expectations on the final state that do not hold.
    pub fn problems(&self, case: Case) -> Vec<String> {
        let mut out = Vec::new();
        let mut expect = |ok: bool, what: &str| {
            if !ok {
                out.push(what.to_string());
            }
        };
        expect(self.report.outcome == Outcome::Halted, "machine did not halt");
        expect(self.report.assert_flag == 0, "assert flag is set");
        expect(self.report.breaches.is_empty(), "a monitor reported a violation");
        let int = |w: &Word, v: i64| *w == Word::int(v);
        let r1 = self.reg(RegName::r(1));
        match case {
            Case::Soc => {
                expect(int(r1, 42), "r1 is not 42");
                let id = self.static_identity("soc_enclave");
                expect(
                    self.state.etbl.len() == 1 && self.state.etbl.values().next() == id,
                    "enclave table is not exactly the measured enclave",
                );
            }
            Case::Mutual => {
                expect(int(self.cell("a_data", 2), 43), "A did not learn 43");
                expect(int(self.cell("b_data", 2), 42), "B did not learn 42");
                let table = |id: Option<&BigInt>| id.is_some_and(|id| self.state.etbl.values().any(|v| v == id));
                let rebuilt_a = self.cell("b_data", 3).as_int();
                let rebuilt_b = self.cell("a_data", 3).as_int();
                expect(
                    table(rebuilt_a) && rebuilt_a == self.static_identity("mutual_a"),
                    "B's rebuilt identity of A differs from the table",
                );
                expect(
                    table(rebuilt_b) && rebuilt_b == self.static_identity("mutual_b"),
                    "A's rebuilt identity of B differs from the table",
                );
            }
            Case::Sensor => {
                expect(int(r1, 42), "r1 is not 42");
                expect(int(self.cell("sensor", 0), 21), "sensor cell is not 21");
            }
        }
        out
    }

    /// The `result=<r1> flag=<f>` summary line.
    pub fn summary(&self) -> String {
        let result = match self.reg(RegName::r(1)) {
            Word::Int(z) => z.to_string(),
            other => other.to_string(),
        };
        format!("result={result} flag={}", self.report.assert_flag)
    }
}

/// Runs an embedded spec with the intended budget and the given monitors.
pub fn run_spec(spec: &str, monitors: MonitorLevel) -> Result<CaseRun, LoadError> {
    let (image, state) = build_variant(spec)?;
    let (report, state) = run_system(&image, state, CASE_FUEL, monitors, None);
    Ok(CaseRun { image, report, state })
}

pub fn run_case(case: Case, monitors: MonitorLevel) -> CaseRun {
    run_spec(&case.spec_name(), monitors).expect("embedded cases build")
}

pub fn run_soc() -> CaseRun {
    run_case(Case::Soc, MonitorLevel::Instrumented)
}

pub fn run_mutual() -> CaseRun {
    run_case(Case::Mutual, MonitorLevel::Instrumented)
}

pub fn run_sensor() -> CaseRun {
    run_case(Case::Sensor, MonitorLevel::Instrumented)
}

/// The first line where the intended trace departs from the golden trace.
pub fn golden_mismatch(case: Case) -> Option<String> {
    let want = golden(case.name()).unwrap_or("");
    let got = trace_case(case);
    if want == got {
        return None;
    }
    let mut want_lines = want.lines();
    for (i, line) in got.lines().enumerate() {
        match want_lines.next() {
            Some(w) if w == line => {}
            w => return Some(format!("line {}: expected `{}`, got `{line}`", i + 1, w.unwrap_or("<end>"))),
        }
    }
    let n = got.lines().count();
    Some(format!("line {}: expected `{}`, got <end>", n + 1, want_lines.next().unwrap_or("")))
}

/// The per-step trace of an intended run.
pub fn trace_case(case: Case) -> String {
    let (_, mut s) = case.build().expect("embedded cases build");
    let mut out = String::new();
    let mut n = 0;
    while n < CASE_FUEL && s.status == crate::machine::Status::Running {
        out.push_str(&s.step_traced(n));
        out.push('\n');
        n += 1;
    }
    out
}
