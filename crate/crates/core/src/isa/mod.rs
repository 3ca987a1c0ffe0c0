//! Machine words, permissions, registers and the instruction set.
//!
//! Words are typed natively: an integer is never confused with a capability,
//! so there is no tag bit to model. Integers are unbounded.

mod encoding;
mod word;

pub use encoding::{decode, decode_checked, disassemble, encode};
pub use word::{Cap, ParseWordError, SealRange, Sealable, Word};

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;

/// A memory address. Valid addresses lie in `[0, addr_max]` of the machine
/// configuration; capabilities may carry any value in that range.
pub type Addr = u64;

/// An object type used for sealing. Valid otypes lie in `[0, otype_max]`.
pub type OType = u64;

/// Memory permissions, ordered by the flows-to lattice:
/// `O ≤ E ≤ RX ≤ RWX`, `O ≤ RO ≤ RX`, `RO ≤ RW ≤ RWX`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Perm {
    O,
    E,
    RO,
    RX,
    RW,
    RWX,
}

impl Perm {
    pub const ALL: [Perm; 6] = [Perm::O, Perm::E, Perm::RO, Perm::RX, Perm::RW, Perm::RWX];

    /// `self ≤ other` in the permission lattice.
    pub fn flows_to(self, other: Perm) -> bool {
        use Perm::*;
        match (self, other) {
            (O, _) => true,
            (E, E | RX | RWX) => true,
            (RO, RO | RX | RW | RWX) => true,
            (RX, RX | RWX) => true,
            (RW, RW | RWX) => true,
            (RWX, RWX) => true,
            _ => false,
        }
    }

    pub fn readable(self) -> bool {
        matches!(self, Perm::RO | Perm::RX | Perm::RW | Perm::RWX)
    }

    pub fn writable(self) -> bool {
        matches!(self, Perm::RW | Perm::RWX)
    }

    pub fn executable(self) -> bool {
        matches!(self, Perm::RX | Perm::RWX)
    }

    /// Integer code used by `getp` and accepted by `restrict`.
    pub fn code(self) -> i64 {
        match self {
            Perm::O => 0,
            Perm::E => 1,
            Perm::RO => 2,
            Perm::RX => 3,
            Perm::RW => 4,
            Perm::RWX => 5,
        }
    }

    pub fn from_code(code: &BigInt) -> Option<Perm> {
        let c: i64 = code.try_into().ok()?;
        Perm::ALL.into_iter().find(|p| p.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Perm::O => "o",
            Perm::E => "e",
            Perm::RO => "ro",
            Perm::RX => "rx",
            Perm::RW => "rw",
            Perm::RWX => "rwx",
        }
    }

    pub fn from_name(s: &str) -> Option<Perm> {
        let s = s.to_ascii_lowercase();
        Perm::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sealing permissions: `O ≤ S ≤ SU`, `O ≤ U ≤ SU`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SealPerm {
    O,
    S,
    U,
    SU,
}

impl SealPerm {
    pub const ALL: [SealPerm; 4] = [SealPerm::O, SealPerm::S, SealPerm::U, SealPerm::SU];

    pub fn flows_to(self, other: SealPerm) -> bool {
        use SealPerm::*;
        matches!(
            (self, other),
            (O, _) | (S, S | SU) | (U, U | SU) | (SU, SU)
        )
    }

    pub fn can_seal(self) -> bool {
        matches!(self, SealPerm::S | SealPerm::SU)
    }

    pub fn can_unseal(self) -> bool {
        matches!(self, SealPerm::U | SealPerm::SU)
    }

    pub fn code(self) -> i64 {
        match self {
            SealPerm::O => 0,
            SealPerm::S => 1,
            SealPerm::U => 2,
            SealPerm::SU => 3,
        }
    }

    pub fn from_code(code: &BigInt) -> Option<SealPerm> {
        let c: i64 = code.try_into().ok()?;
        SealPerm::ALL.into_iter().find(|p| p.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            SealPerm::O => "o",
            SealPerm::S => "s",
            SealPerm::U => "u",
            SealPerm::SU => "su",
        }
    }

    pub fn from_name(s: &str) -> Option<SealPerm> {
        let s = s.to_ascii_lowercase();
        SealPerm::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl fmt::Display for SealPerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A register name: `pc` or one of `r0`..`r31`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegName(u8);

impl RegName {
    pub const PC: RegName = RegName(0);
    pub const COUNT: usize = 33;

    /// General purpose register `rN`; `n` must be below 32.
    pub const fn r(n: u8) -> RegName {
        assert!(n < 32);
        RegName(n + 1)
    }

    /// Dense index: `pc` is 0, `rN` is `N + 1`.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Option<RegName> {
        (i < Self::COUNT).then_some(RegName(i as u8))
    }

    pub fn is_pc(self) -> bool {
        self.0 == 0
    }

    pub fn all() -> impl Iterator<Item = RegName> {
        (0..Self::COUNT as u8).map(RegName)
    }
}

impl fmt::Display for RegName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pc() {
            f.write_str("pc")
        } else {
            write!(f, "r{}", self.0 - 1)
        }
    }
}

impl FromStr for RegName {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.to_ascii_lowercase();
        if s == "pc" {
            return Ok(RegName::PC);
        }
        let digits = s.strip_prefix('r').ok_or(())?;
        if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
            return Err(());
        }
        let n: u8 = digits.parse().map_err(|_| ())?;
        if n < 32 {
            Ok(RegName::r(n))
        } else {
            Err(())
        }
    }
}

/// An instruction argument: an immediate integer or a register.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(RegName),
    Imm(BigInt),
}

impl Operand {
    pub fn imm(v: impl Into<BigInt>) -> Operand {
        Operand::Imm(v.into())
    }
}

impl From<RegName> for Operand {
    fn from(r: RegName) -> Self {
        Operand::Reg(r)
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => r.fmt(f),
            Operand::Imm(z) => z.fmt(f),
        }
    }
}

/// Operand slot kinds of an opcode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Must be a register.
    Reg,
    /// Register or immediate.
    Arg,
}

/// The full instruction set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Jmp(RegName),
    Jnz(RegName, RegName),
    Fail,
    Halt,
    Mov(RegName, Operand),
    Add(RegName, Operand, Operand),
    Sub(RegName, Operand, Operand),
    Lt(RegName, Operand, Operand),
    Lea(RegName, Operand),
    Load(RegName, RegName),
    Store(RegName, Operand),
    Restrict(RegName, Operand),
    Subseg(RegName, Operand, Operand),
    GetP(RegName, RegName),
    GetB(RegName, RegName),
    GetE(RegName, RegName),
    GetA(RegName, RegName),
    CSeal(RegName, RegName, RegName),
    CUnseal(RegName, RegName, RegName),
    GetWType(RegName, RegName),
    GetOType(RegName, RegName),
    IsUnique(RegName, RegName),
    EInit(RegName, RegName),
    EDeInit(RegName),
    EStoreId(RegName, RegName),
    Hash(RegName, RegName),
    HashConcat(RegName, Operand, Operand),
}

/// Opcode table: `(opcode, mnemonic, operand slots)`. Opcode 0 is never assigned.
pub const OPCODES: [(u8, &str, &[Slot]); 27] = {
    use Slot::{Arg, Reg};
    [
        (1, "jmp", &[Reg]),
        (2, "jnz", &[Reg, Reg]),
        (3, "fail", &[]),
        (4, "halt", &[]),
        (5, "mov", &[Reg, Arg]),
        (6, "add", &[Reg, Arg, Arg]),
        (7, "sub", &[Reg, Arg, Arg]),
        (8, "lt", &[Reg, Arg, Arg]),
        (9, "lea", &[Reg, Arg]),
        (10, "load", &[Reg, Reg]),
        (11, "store", &[Reg, Arg]),
        (12, "restrict", &[Reg, Arg]),
        (13, "subseg", &[Reg, Arg, Arg]),
        (14, "getp", &[Reg, Reg]),
        (15, "getb", &[Reg, Reg]),
        (16, "gete", &[Reg, Reg]),
        (17, "geta", &[Reg, Reg]),
        (18, "cseal", &[Reg, Reg, Reg]),
        (19, "cunseal", &[Reg, Reg, Reg]),
        (20, "getwtype", &[Reg, Reg]),
        (21, "getotype", &[Reg, Reg]),
        (22, "isunique", &[Reg, Reg]),
        (23, "einit", &[Reg, Reg]),
        (24, "edeinit", &[Reg]),
        (25, "estoreid", &[Reg, Reg]),
        (26, "hash", &[Reg, Reg]),
        (27, "hashconcat", &[Reg, Arg, Arg]),
    ]
};

/// Looks up an opcode by mnemonic.
pub fn opcode_of_mnemonic(m: &str) -> Option<(u8, &'static [Slot])> {
    OPCODES
        .iter()
        .find(|(_, name, _)| *name == m)
        .map(|(op, _, slots)| (*op, *slots))
}

pub fn slots_of_opcode(op: u8) -> Option<(&'static str, &'static [Slot])> {
    OPCODES
        .iter()
        .find(|(o, _, _)| *o == op)
        .map(|(_, name, slots)| (*name, *slots))
}

impl Instr {
    pub fn opcode(&self) -> u8 {
        use Instr::*;
        match self {
            Jmp(..) => 1,
            Jnz(..) => 2,
            Fail => 3,
            Halt => 4,
            Mov(..) => 5,
            Add(..) => 6,
            Sub(..) => 7,
            Lt(..) => 8,
            Lea(..) => 9,
            Load(..) => 10,
            Store(..) => 11,
            Restrict(..) => 12,
            Subseg(..) => 13,
            GetP(..) => 14,
            GetB(..) => 15,
            GetE(..) => 16,
            GetA(..) => 17,
            CSeal(..) => 18,
            CUnseal(..) => 19,
            GetWType(..) => 20,
            GetOType(..) => 21,
            IsUnique(..) => 22,
            EInit(..) => 23,
            EDeInit(..) => 24,
            EStoreId(..) => 25,
            Hash(..) => 26,
            HashConcat(..) => 27,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        slots_of_opcode(self.opcode()).map(|(m, _)| m).unwrap_or("fail")
    }

    /// Operands in slot order.
    pub fn operands(&self) -> Vec<Operand> {
        use Instr::*;
        let r = |r: &RegName| Operand::Reg(*r);
        match self {
            Fail | Halt => vec![],
            Jmp(a) | EDeInit(a) => vec![r(a)],
            Jnz(a, b)
            | Load(a, b)
            | GetP(a, b)
            | GetB(a, b)
            | GetE(a, b)
            | GetA(a, b)
            | GetWType(a, b)
            | GetOType(a, b)
            | IsUnique(a, b)
            | EInit(a, b)
            | EStoreId(a, b)
            | Hash(a, b) => vec![r(a), r(b)],
            Mov(a, x) | Lea(a, x) | Store(a, x) | Restrict(a, x) => vec![r(a), x.clone()],
            Add(a, x, y) | Sub(a, x, y) | Lt(a, x, y) | Subseg(a, x, y) | HashConcat(a, x, y) => {
                vec![r(a), x.clone(), y.clone()]
            }
            CSeal(a, b, c) | CUnseal(a, b, c) => vec![r(a), r(b), r(c)],
        }
    }

    /// Rebuilds an instruction from its opcode and operands. Returns `None`
    /// when the opcode is unknown, the arity is wrong, or an immediate sits
    /// in a register-only slot.
    pub fn from_parts(opcode: u8, ops: Vec<Operand>) -> Option<Instr> {
        use Instr::*;
        let (_, slots) = slots_of_opcode(opcode)?;
        if ops.len() != slots.len() {
            return None;
        }
        for (slot, op) in slots.iter().zip(&ops) {
            if *slot == Slot::Reg && !matches!(op, Operand::Reg(_)) {
                return None;
            }
        }
        let reg = |i: usize| match &ops[i] {
            Operand::Reg(r) => *r,
            Operand::Imm(_) => unreachable!("slots checked"),
        };
        let arg = |i: usize| ops[i].clone();
        let instr = match opcode {
            1 => Jmp(reg(0)),
            2 => Jnz(reg(0), reg(1)),
            3 => Fail,
            4 => Halt,
            5 => Mov(reg(0), arg(1)),
            6 => Add(reg(0), arg(1), arg(2)),
            7 => Sub(reg(0), arg(1), arg(2)),
            8 => Lt(reg(0), arg(1), arg(2)),
            9 => Lea(reg(0), arg(1)),
            10 => Load(reg(0), reg(1)),
            11 => Store(reg(0), arg(1)),
            12 => Restrict(reg(0), arg(1)),
            13 => Subseg(reg(0), arg(1), arg(2)),
            14 => GetP(reg(0), reg(1)),
            15 => GetB(reg(0), reg(1)),
            16 => GetE(reg(0), reg(1)),
            17 => GetA(reg(0), reg(1)),
            18 => CSeal(reg(0), reg(1), reg(2)),
            19 => CUnseal(reg(0), reg(1), reg(2)),
            20 => GetWType(reg(0), reg(1)),
            21 => GetOType(reg(0), reg(1)),
            22 => IsUnique(reg(0), reg(1)),
            23 => EInit(reg(0), reg(1)),
            24 => EDeInit(reg(0)),
            25 => EStoreId(reg(0), reg(1)),
            26 => Hash(reg(0), reg(1)),
            27 => HashConcat(reg(0), arg(1), arg(2)),
            _ => return None,
        };
        Some(instr)
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())?;
        for op in self.operands() {
            write!(f, " {op}")?;
        }
        Ok(())
    }
}
