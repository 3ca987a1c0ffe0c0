//! Runtime invariant monitors.
//!
//! The cheap monitor looks only at the words an instruction can read or
//! write, so it is affordable inside fuzz campaigns. The instrumented
//! monitor snapshots the whole state before every step and checks the full
//! state afterwards.

use std::fmt;

use crate::isa::{Addr, Instr, Operand, RegName, SealPerm, Sealable, Word};
use crate::machine::{overlap, DecodeCache, MachineState, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum MonitorLevel {
    #[default]
    Off,
    Cheap,
    Instrumented,
}

impl MonitorLevel {
    pub fn name(self) -> &'static str {
        match self {
            MonitorLevel::Off => "off",
            MonitorLevel::Cheap => "cheap",
            MonitorLevel::Instrumented => "instrumented",
        }
    }

    pub fn from_name(s: &str) -> Option<MonitorLevel> {
        [MonitorLevel::Off, MonitorLevel::Cheap, MonitorLevel::Instrumented]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// A broken invariant, found after step `step` (0-based).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Breach {
    pub step: u64,
    pub kind: BreachKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BreachKind {
    /// A capability or seal range appeared that no prior word grants.
    Forged(Word),
    /// A seal range or sealed word names an otype that was never allocated.
    Stale(Word),
    CounterDecreased,
    /// The table gained an entry somewhere other than the next fresh index.
    TableReuse(u64),
    TableIndexOutOfRange(u64),
    /// An existing table entry changed its identity.
    IdentityChanged(u64),
    /// After `einit`, the code region holds a non-integer word.
    CodeNotInt(Addr),
    /// After `einit`, something other than the sentry reaches the code.
    CodeAliased(String),
    /// After `einit`, something other than the code's first cell reaches the data.
    DataAliased(String),
}

impl fmt::Display for Breach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: ", self.step)?;
        match &self.kind {
            BreachKind::Forged(w) => write!(f, "forged {w}"),
            BreachKind::Stale(w) => write!(f, "unallocated otype in {w}"),
            BreachKind::CounterDecreased => write!(f, "enclave counter decreased"),
            BreachKind::TableReuse(t) => write!(f, "enclave table index {t} reused"),
            BreachKind::TableIndexOutOfRange(t) => write!(f, "enclave table index {t} not below ec"),
            BreachKind::IdentityChanged(t) => write!(f, "identity at table index {t} changed"),
            BreachKind::CodeNotInt(a) => write!(f, "initialised code holds a capability at {a}"),
            BreachKind::CodeAliased(loc) => write!(f, "{loc} aliases initialised code"),
            BreachKind::DataAliased(loc) => write!(f, "{loc} aliases enclave data"),
        }
    }
}

/// Whether `w` can be obtained from `p` by copying or attenuation.
fn attenuates(p: &Word, w: &Word) -> bool {
    if p == w {
        return true;
    }
    match (p, w) {
        (Word::Cap(p), Word::Cap(c)) => {
            let within = p.base <= c.base && c.end <= p.end;
            let upgraded = p.perm == crate::isa::Perm::E
                && c.perm == crate::isa::Perm::RX
                && (p.base, p.end) == (c.base, c.end);
            (within && c.perm.flows_to(p.perm)) || upgraded
        }
        (Word::SRange(p), Word::SRange(s)) => {
            p.base <= s.base && s.end <= p.end && s.perm.flows_to(p.perm)
        }
        _ => false,
    }
}

fn range_allows(sources: &[&Word], o: u64, perm: fn(SealPerm) -> bool) -> bool {
    sources.iter().any(|w| matches!(w, Word::SRange(s) if perm(s.perm) && s.base <= o && o < s.end))
}

/// Whether `w` is justified by the words an instruction could read.
/// `minted` is the table index `einit` allocated in this step, if any.
fn derivable(sources: &[&Word], w: &Word, minted: Option<u64>) -> bool {
    if matches!(w, Word::Int(_)) || sources.iter().any(|p| attenuates(p, w)) {
        return true;
    }
    match w {
        Word::Sealed(o, sc) => {
            let inner = sc.to_word();
            sources.iter().any(|p| **p == inner) && range_allows(sources, *o, SealPerm::can_seal)
        }
        Word::SRange(s) => minted.is_some_and(|t| {
            s.perm == SealPerm::SU && (s.base, s.end, s.cursor) == (2 * t, 2 * t + 2, 2 * t)
        }),
        Word::Cap(_) => sources.iter().any(|p| match p {
            Word::Sealed(o, sc) => {
                sc.to_word() == *w && range_allows(sources, *o, SealPerm::can_unseal)
            }
            _ => false,
        }),
        Word::Int(_) => true,
    }
}

/// Whether a word only names otypes below `2 ec`.
fn fresh(w: &Word, ec: u64) -> bool {
    let bound = 2 * ec;
    match w {
        Word::SRange(s) => s.end <= bound,
        Word::Sealed(o, sc) => *o < bound && !matches!(sc, Sealable::SRange(s) if s.end > bound),
        _ => true,
    }
}

/// What the cheap monitor remembers about the state before a step.
struct Pre {
    instr: Option<Instr>,
    /// Registers the instruction names, and the pc, with their old values.
    regs: Vec<(RegName, Word)>,
    /// The cell a `load` reads.
    loaded: Option<Word>,
    ec: u64,
    table_len: usize,
    /// The whole state, for the instrumented monitor.
    full: Option<MachineState>,
}

/// Checks one transition `pre → post` with the instrumented monitor. `post`
/// need not be the machine's own successor of `pre`.
pub fn monitor_step(pre: &MachineState, post: &MachineState) -> Vec<Breach> {
    let mut m = Monitor::new(MonitorLevel::Instrumented);
    let p = m.capture(pre);
    m.check(post, 0, p);
    m.breaches
}

/// Steps a machine and checks invariants around every step.
pub struct Monitor {
    level: MonitorLevel,
    decoder: DecodeCache,
    breaches: Vec<Breach>,
}

impl Monitor {
    pub fn new(level: MonitorLevel) -> Monitor {
        Monitor { level, decoder: DecodeCache::default(), breaches: Vec::new() }
    }

    pub fn level(&self) -> MonitorLevel {
        self.level
    }

    pub fn breaches(&self) -> &[Breach] {
        &self.breaches
    }

    pub fn into_breaches(self) -> Vec<Breach> {
        self.breaches
    }

    fn report(&mut self, step: u64, kind: BreachKind) {
        // A single broken step tends to trip the same check repeatedly.
        if !self.breaches.iter().any(|b| b.kind == kind) {
            self.breaches.push(Breach { step, kind });
        }
    }

    /// Executes one step of `s`, numbered `n`.
    pub fn step(&mut self, s: &mut MachineState, n: u64) {
        if self.level == MonitorLevel::Off {
            s.step();
            return;
        }
        let pre = self.capture(s);
        s.step();
        self.check(s, n, pre);
    }

    fn capture(&mut self, s: &MachineState) -> Pre {
        let instr = s.fetch().map(|z| self.decoder.decode(z));
        let mut regs = vec![(RegName::PC, s.pc().clone())];
        let mut loaded = None;
        if let Some(i) = &instr {
            for op in i.operands() {
                if let Operand::Reg(r) = op {
                    if !regs.iter().any(|(q, _)| *q == r) {
                        regs.push((r, s.reg(r).clone()));
                    }
                }
            }
            if let Instr::Load(_, rs) = i {
                if let Word::Cap(c) = s.reg(*rs) {
                    loaded = Some(s.mem.get(c.cursor).clone());
                }
            }
        }
        let full = (self.level == MonitorLevel::Instrumented).then(|| s.clone());
        Pre { instr, regs, loaded, ec: s.ec, table_len: s.etbl.len(), full }
    }

    fn check(&mut self, s: &MachineState, n: u64, pre: Pre) {
        if s.ec < pre.ec {
            self.report(n, BreachKind::CounterDecreased);
        }
        let mut minted = None;
        if let (Some(Instr::EInit(_, r2)), Status::Running) = (&pre.instr, s.status) {
            if let Some((_, Word::Cap(d))) = pre.regs.iter().find(|(r, _)| r == r2) {
                if let Word::SRange(sr) = s.mem.get(d.base) {
                    minted = Some(sr.base / 2);
                }
            }
            if let Some(t) = minted {
                if t != pre.ec || s.ec != pre.ec + 1 {
                    self.report(n, BreachKind::TableReuse(t));
                }
            }
        } else if s.etbl.len() > pre.table_len {
            self.report(n, BreachKind::TableReuse(s.ec));
        }

        // Words written in this step.
        let mut written: Vec<Word> = Vec::new();
        if let Some(full) = &pre.full {
            for r in RegName::all() {
                if s.reg(r) != full.reg(r) {
                    written.push(s.reg(r).clone());
                }
            }
            for (a, w) in s.mem.non_int() {
                if full.mem.get(a) != w {
                    written.push(w.clone());
                }
            }
        } else {
            for (r, old) in &pre.regs {
                let new = s.reg(*r);
                if new != old {
                    written.push(new.clone());
                }
            }
            let mut cells: Vec<Addr> = Vec::new();
            match (&pre.instr, s.status) {
                (Some(Instr::Store(rd, _)), Status::Running) => {
                    if let Some((_, Word::Cap(c))) = pre.regs.iter().find(|(r, _)| r == rd) {
                        cells.push(c.cursor);
                    }
                }
                (Some(Instr::EInit(r1, r2)), Status::Running) if minted.is_some() => {
                    for r in [r1, r2] {
                        if let Some((_, Word::Cap(c))) = pre.regs.iter().find(|(q, _)| q == r) {
                            cells.push(c.base);
                        }
                    }
                }
                _ => {}
            }
            written.extend(cells.iter().map(|a| s.mem.get(*a).clone()));
        }

        let mut sources: Vec<&Word> = pre.regs.iter().map(|(_, w)| w).collect();
        sources.extend(pre.loaded.as_ref());
        if let Some(full) = &pre.full {
            sources.extend(full.regs.iter());
            sources.extend(full.mem.non_int().map(|(_, w)| w));
        }
        for w in &written {
            if !derivable(&sources, w, minted) {
                self.report(n, BreachKind::Forged(w.clone()));
            }
            if !fresh(w, s.ec) {
                self.report(n, BreachKind::Stale(w.clone()));
            }
        }

        if minted.is_some() {
            self.audit_einit(s, n, &pre);
        }
        if let Some(full) = &pre.full {
            for (t, id) in &full.etbl {
                if s.etbl.get(t).is_some_and(|new| new != id) {
                    self.report(n, BreachKind::IdentityChanged(*t));
                }
            }
            self.scan(s, n);
        }
    }

    /// Checks the isolation `einit` promises for a freshly created enclave.
    fn audit_einit(&mut self, s: &MachineState, n: u64, pre: &Pre) {
        let Some(Instr::EInit(r1, r2)) = pre.instr else { return };
        let find = |r: RegName| pre.regs.iter().find(|(q, _)| *q == r).map(|(_, w)| w.clone());
        let (Some(code), Some(data)) = (find(r1), find(r2)) else { return };
        let (Word::Cap(code), Word::Cap(data)) = (&code, &data) else { return };
        for a in code.base + 1..code.end {
            if !matches!(s.mem.get(a), Word::Int(_)) {
                self.report(n, BreachKind::CodeNotInt(a));
                break;
            }
        }
        let code_w = Word::Cap(*code);
        let data_w = Word::Cap(*data);
        for r in RegName::all() {
            let w = s.reg(r);
            if r != r1 && overlap(w, &code_w) {
                self.report(n, BreachKind::CodeAliased(format!("register {r}")));
            }
            if overlap(w, &data_w) {
                self.report(n, BreachKind::DataAliased(format!("register {r}")));
            }
        }
        for (a, w) in s.mem.non_int() {
            if overlap(w, &code_w) {
                self.report(n, BreachKind::CodeAliased(format!("memory cell {a}")));
            }
            if a != code.base && overlap(w, &data_w) {
                self.report(n, BreachKind::DataAliased(format!("memory cell {a}")));
            }
        }
    }

    /// Whole-state checks: otype freshness and table indices.
    pub fn scan(&mut self, s: &MachineState, n: u64) {
        for w in s.non_int_words() {
            if !fresh(w, s.ec) {
                self.report(n, BreachKind::Stale(w.clone()));
            }
        }
        for t in s.etbl.keys() {
            if *t >= s.ec {
                self.report(n, BreachKind::TableIndexOutOfRange(*t));
            }
        }
    }
}
