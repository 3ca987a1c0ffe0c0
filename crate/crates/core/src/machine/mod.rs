//! Machine state and operational semantics.

mod exec;
pub mod hash;
mod memory;
mod snapshot;

pub use exec::{overlap, tidx_of_ot, DecodeCache};
pub use hash::{
    hash_concat, hash_of_int, hash_word, int_of_hash, measure_identity, region_hash, HashBytes,
    HashMode,
};
pub use memory::Memory;
pub use snapshot::{trace_line, SnapshotError};

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;

use crate::isa::{Addr, OType, RegName, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Halted,
    Failed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Running => "Running",
            Status::Halted => "Halted",
            Status::Failed => "Failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Deliberate semantic defects, used to check that the test harness notices
/// a broken machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    /// `einit` does not sweep the data capability.
    SkipDataSweep,
    /// `einit` accepts capabilities inside the code region.
    SkipCodeIntCheck,
    /// `restrict` accepts any permission.
    RestrictWidens,
    /// `einit` reuses the lowest table index freed by `edeinit`.
    ReuseOtypes,
}

impl Mutation {
    pub const ALL: [Mutation; 4] = [
        Mutation::SkipDataSweep,
        Mutation::SkipCodeIntCheck,
        Mutation::RestrictWidens,
        Mutation::ReuseOtypes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::SkipDataSweep => "skip-data-sweep",
            Mutation::SkipCodeIntCheck => "skip-code-int-check",
            Mutation::RestrictWidens => "restrict-widens",
            Mutation::ReuseOtypes => "reuse-otypes",
        }
    }

    pub fn from_name(s: &str) -> Option<Mutation> {
        Mutation::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Config {
    pub addr_max: Addr,
    pub otype_max: OType,
    pub hash_mode: HashMode,
    pub mutation: Option<Mutation>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            addr_max: 1 << 20,
            otype_max: 1 << 20,
            hash_mode: HashMode::Exact,
            mutation: None,
        }
    }
}

/// Registers, memory, enclave table and enclave counter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub regs: [Word; RegName::COUNT],
    pub mem: Memory,
    pub etbl: BTreeMap<u64, BigInt>,
    pub ec: u64,
    pub status: Status,
    pub config: Config,
    decoder: DecodeCache,
}

impl MachineState {
    /// All registers and memory hold `Int(0)`; the table is empty.
    pub fn new(config: Config) -> MachineState {
        MachineState {
            regs: std::array::from_fn(|_| Word::default()),
            mem: Memory::new(),
            etbl: BTreeMap::new(),
            ec: 0,
            status: Status::Running,
            config,
            decoder: DecodeCache::default(),
        }
    }

    pub fn reg(&self, r: RegName) -> &Word {
        &self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: RegName, w: Word) {
        self.regs[r.index()] = w;
    }

    pub fn pc(&self) -> &Word {
        self.reg(RegName::PC)
    }

    /// Every word held in a register or memory cell that is not an integer.
    pub fn non_int_words(&self) -> impl Iterator<Item = &Word> {
        self.regs
            .iter()
            .filter(|w| !matches!(w, Word::Int(_)))
            .chain(self.mem.non_int().map(|(_, w)| w))
    }
}
