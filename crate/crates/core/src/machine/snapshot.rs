//! Textual snapshots and trace lines.

use std::fmt::Write as _;

use num_bigint::BigInt;
use thiserror::Error;

use super::{Config, MachineState, Status};
use crate::isa::{disassemble, RegName, Word};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing snapshot header")]
    MissingHeader,
}

fn syntax(line: usize, msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Syntax { line, msg: msg.into() }
}

impl MachineState {
    /// The raw integer the next step would decode, if the fetch succeeds.
    pub fn fetch(&self) -> Option<&BigInt> {
        match self.pc() {
            Word::Cap(c) if c.perm.executable() && c.in_bounds() => self.mem.get(c.cursor).as_int(),
            _ => None,
        }
    }

    /// Steps once and renders the step as a trace line numbered `n`.
    pub fn step_traced(&mut self, n: u64) -> String {
        let pc = self.pc().clone();
        let raw = self.fetch().cloned();
        self.step();
        trace_line(n, &pc, raw.as_ref(), self.status)
    }

    pub fn to_snapshot(&self) -> String {
        let mut out = format!(
            "cerisier-snapshot v1 addrmax={} otypemax={} ec={} status={}\n",
            self.config.addr_max, self.config.otype_max, self.ec, self.status
        );
        for r in RegName::all() {
            let _ = writeln!(out, "reg {r} {}", self.reg(r));
        }
        for (a, w) in self.mem.nonzero() {
            let _ = writeln!(out, "mem {a} {w}");
        }
        for (t, id) in &self.etbl {
            let _ = writeln!(out, "etbl {t} {id}");
        }
        out
    }

    /// Parses a snapshot. Registers that are not listed hold `Int(0)`.
    pub fn from_snapshot(text: &str) -> Result<MachineState, SnapshotError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(SnapshotError::MissingHeader)?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("cerisier-snapshot") || fields.next() != Some("v1") {
            return Err(SnapshotError::MissingHeader);
        }
        let mut config = Config::default();
        let mut ec = 0;
        let mut status = Status::Running;
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| syntax(1, f))?;
            let num = || v.parse::<u64>().map_err(|_| syntax(1, f));
            match k {
                "addrmax" => config.addr_max = num()?,
                "otypemax" => config.otype_max = num()?,
                "ec" => ec = num()?,
                "status" => {
                    status = match v {
                        "Running" => Status::Running,
                        "Halted" => Status::Halted,
                        "Failed" => Status::Failed,
                        _ => return Err(syntax(1, f)),
                    }
                }
                _ => return Err(syntax(1, format!("unknown field `{k}`"))),
            }
        }
        let mut s = MachineState::new(config);
        s.ec = ec;
        s.status = status;
        for (i, line) in lines {
            let n = i + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["reg", r, w] => {
                    let r: RegName = r.parse().map_err(|_| syntax(n, "bad register"))?;
                    s.set_reg(r, w.parse().map_err(|e| syntax(n, format!("{e}")))?);
                }
                ["mem", a, w] => {
                    let a = a.parse().map_err(|_| syntax(n, "bad address"))?;
                    s.mem.set(a, w.parse().map_err(|e| syntax(n, format!("{e}")))?);
                }
                ["etbl", t, id] => {
                    let t = t.parse().map_err(|_| syntax(n, "bad table index"))?;
                    s.etbl.insert(t, id.parse().map_err(|_| syntax(n, "bad identity"))?);
                }
                _ => return Err(syntax(n, format!("unrecognized line `{line}`"))),
            }
        }
        Ok(s)
    }
}

/// `step=<n> pc=<word> instr=<disassembly> status=<s>`, with the pc taken
/// before the step and the status after it. `instr=-` when nothing was fetched.
pub fn trace_line(n: u64, pc: &Word, raw: Option<&BigInt>, status: Status) -> String {
    let instr = raw.map(disassemble).unwrap_or_else(|| "-".to_string());
    format!("step={n} pc={pc} instr={instr} status={status}")
}
