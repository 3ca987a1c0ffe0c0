//! Per-instruction transition functions.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use super::hash::{hash_concat, hash_of_int, hash_word, int_of_hash, measure_identity};
use super::{MachineState, Mutation, Status};
use crate::isa::{decode, Cap, Instr, Operand, Perm, RegName, SealPerm, SealRange, Word};

/// `o / 2` for even otypes, `(o - 1) / 2` for odd ones.
pub fn tidx_of_ot(o: u64) -> u64 {
    o / 2
}

/// Whether two words address intersecting memory. Only capabilities and
/// sealed capabilities address memory.
pub fn overlap(w1: &Word, w2: &Word) -> bool {
    match (w1.address_interval(), w2.address_interval()) {
        (Some((b1, e1)), Some((b2, e2))) => b1.max(b2) < e1.min(e2),
        _ => false,
    }
}

fn upgrade_sentry(w: &Word) -> Word {
    match w {
        Word::Cap(c) if c.perm == Perm::E => Word::Cap(Cap { perm: Perm::RX, ..*c }),
        other => other.clone(),
    }
}

fn to_bounded(z: &BigInt, max: u64) -> Option<u64> {
    z.to_u64().filter(|v| *v <= max)
}

impl MachineState {
    fn fail(&mut self) {
        self.status = Status::Failed;
    }

    /// Advances the pc cursor; fails if the pc holds no capability.
    pub fn upd_pc(&mut self) {
        match &mut self.regs[RegName::PC.index()] {
            Word::Cap(c) => {
                c.cursor = c.cursor.saturating_add(1);
                self.status = Status::Running;
            }
            _ => self.fail(),
        }
    }

    fn arg_word(&self, op: &Operand) -> Word {
        match op {
            Operand::Reg(r) => self.reg(*r).clone(),
            Operand::Imm(z) => Word::Int(z.clone()),
        }
    }

    fn arg_int(&self, op: &Operand) -> Option<BigInt> {
        match op {
            Operand::Reg(r) => self.reg(*r).as_int().cloned(),
            Operand::Imm(z) => Some(z.clone()),
        }
    }

    /// Writes `w` to `rd` and advances the pc.
    fn write_and_next(&mut self, rd: RegName, w: Word) {
        self.regs[rd.index()] = w;
        self.upd_pc();
    }

    /// Whether no register other than `rs` and no memory cell overlaps the
    /// capability in `rs`.
    pub fn sweep(&self, rs: RegName) -> bool {
        let target = self.reg(rs);
        if target.address_interval().is_none() {
            return false;
        }
        let regs_clear = RegName::all()
            .filter(|r| *r != rs)
            .all(|r| !overlap(self.reg(r), target));
        regs_clear && self.mem.non_int().all(|(_, w)| !overlap(w, target))
    }

    /// Executes one decoded instruction on a running state.
    pub fn exec(&mut self, instr: &Instr) {
        use Instr::*;
        let ok = match instr {
            Fail => {
                self.fail();
                true
            }
            Halt => {
                self.status = Status::Halted;
                true
            }
            Jmp(r) => {
                self.regs[RegName::PC.index()] = upgrade_sentry(self.reg(*r));
                true
            }
            Jnz(r1, r2) => {
                let taken = matches!(self.reg(*r2), Word::Int(z) if !z.is_zero());
                if taken {
                    self.regs[RegName::PC.index()] = upgrade_sentry(self.reg(*r1));
                } else {
                    self.upd_pc();
                }
                true
            }
            Mov(rd, a) => {
                let w = self.arg_word(a);
                self.write_and_next(*rd, w);
                true
            }
            Add(rd, a, b) | Sub(rd, a, b) | Lt(rd, a, b) => {
                match (self.arg_int(a), self.arg_int(b)) {
                    (Some(x), Some(y)) => {
                        let z = match instr {
                            Add(..) => x + y,
                            Sub(..) => x - y,
                            _ => BigInt::from(u8::from(x < y)),
                        };
                        self.write_and_next(*rd, Word::Int(z));
                        true
                    }
                    _ => false,
                }
            }
            Lea(r, a) => self.exec_lea(*r, a),
            Load(rd, rs) => match self.reg(*rs) {
                Word::Cap(c) if c.perm.readable() && c.in_bounds() => {
                    let w = self.mem.get(c.cursor).clone();
                    self.write_and_next(*rd, w);
                    true
                }
                _ => false,
            },
            Store(rd, a) => match self.reg(*rd) {
                Word::Cap(c) if c.perm.writable() && c.in_bounds() => {
                    let addr = c.cursor;
                    let w = self.arg_word(a);
                    self.mem.set(addr, w);
                    self.upd_pc();
                    true
                }
                _ => false,
            },
            Restrict(r, a) => self.exec_restrict(*r, a),
            Subseg(r, a, b) => self.exec_subseg(*r, a, b),
            GetP(rd, rs) | GetB(rd, rs) | GetE(rd, rs) | GetA(rd, rs) => {
                let fields = match self.reg(*rs) {
                    Word::Cap(c) => Some((c.perm.code(), c.base, c.end, c.cursor)),
                    Word::SRange(s) => Some((s.perm.code(), s.base, s.end, s.cursor)),
                    _ => None,
                };
                match fields {
                    Some((p, b, e, a)) => {
                        let z = match instr {
                            GetP(..) => BigInt::from(p),
                            GetB(..) => BigInt::from(b),
                            GetE(..) => BigInt::from(e),
                            _ => BigInt::from(a),
                        };
                        self.write_and_next(*rd, Word::Int(z));
                        true
                    }
                    None => false,
                }
            }
            CSeal(rd, r1, r2) => match (self.reg(*r1), self.reg(*r2).as_sealable()) {
                (Word::SRange(s), Some(sc)) if s.perm.can_seal() && s.in_bounds() => {
                    let o = s.cursor;
                    self.write_and_next(*rd, Word::Sealed(o, sc));
                    true
                }
                _ => false,
            },
            CUnseal(rd, r1, r2) => match (self.reg(*r1), self.reg(*r2)) {
                (Word::SRange(s), Word::Sealed(o, sc))
                    if s.perm.can_unseal() && s.in_bounds() && s.cursor == *o =>
                {
                    let w = sc.to_word();
                    self.write_and_next(*rd, w);
                    true
                }
                _ => false,
            },
            GetWType(rd, rs) => {
                let k = self.reg(*rs).kind_code();
                self.write_and_next(*rd, Word::int(k));
                true
            }
            GetOType(rd, rs) => {
                let o = match self.reg(*rs) {
                    Word::Sealed(o, _) => BigInt::from(*o),
                    _ => BigInt::from(-1),
                };
                self.write_and_next(*rd, Word::Int(o));
                true
            }
            IsUnique(rd, rs) => {
                if self.reg(*rs).address_interval().is_some() {
                    let z = u8::from(self.sweep(*rs));
                    self.write_and_next(*rd, Word::int(z));
                    true
                } else {
                    false
                }
            }
            EInit(r1, r2) => self.exec_einit(*r1, *r2),
            EDeInit(r) => match self.reg(*r) {
                Word::SRange(SealRange { perm: SealPerm::SU, base, end, .. })
                    if base % 2 == 0 && base.checked_add(2) == Some(*end) =>
                {
                    let tidx = tidx_of_ot(*base);
                    if self.etbl.remove(&tidx).is_some() {
                        self.upd_pc();
                        true
                    } else {
                        false
                    }
                }
                _ => false,
            },
            EStoreId(rd, rs) => match self.reg(*rs) {
                Word::Int(z) if !z.is_negative() => {
                    let id = z.to_u64().and_then(|o| self.etbl.get(&tidx_of_ot(o)).cloned());
                    match id {
                        Some(id) => {
                            self.write_and_next(*rd, Word::Int(id));
                            true
                        }
                        None => false,
                    }
                }
                _ => false,
            },
            Hash(rd, rs) => {
                let h = int_of_hash(&hash_word(self.reg(*rs), self.config.hash_mode));
                self.write_and_next(*rd, Word::Int(h));
                true
            }
            HashConcat(rd, a, b) => {
                let h1 = self.arg_int(a).as_ref().and_then(hash_of_int);
                let h2 = self.arg_int(b).as_ref().and_then(hash_of_int);
                match (h1, h2) {
                    (Some(h1), Some(h2)) => {
                        let z = int_of_hash(&hash_concat(&h1, &h2));
                        self.write_and_next(*rd, Word::Int(z));
                        true
                    }
                    _ => false,
                }
            }
        };
        if !ok {
            self.fail();
        }
    }

    fn exec_lea(&mut self, r: RegName, a: &Operand) -> bool {
        let Some(z) = self.arg_int(a) else { return false };
        let (addr_max, otype_max) = (self.config.addr_max, self.config.otype_max);
        let w = match self.reg(r) {
            Word::Cap(c) if c.perm != Perm::E => {
                match to_bounded(&(BigInt::from(c.cursor) + z), addr_max) {
                    Some(a) => Word::Cap(Cap { cursor: a, ..*c }),
                    None => return false,
                }
            }
            Word::SRange(s) => match to_bounded(&(BigInt::from(s.cursor) + z), otype_max) {
                Some(a) => Word::SRange(SealRange { cursor: a, ..*s }),
                None => return false,
            },
            _ => return false,
        };
        self.write_and_next(r, w);
        true
    }

    fn exec_restrict(&mut self, r: RegName, a: &Operand) -> bool {
        let Some(z) = self.arg_int(a) else { return false };
        let widen = self.config.mutation == Some(Mutation::RestrictWidens);
        let w = match self.reg(r) {
            Word::Cap(c) => match Perm::from_code(&z) {
                Some(p) if widen || p.flows_to(c.perm) => Word::Cap(Cap { perm: p, ..*c }),
                _ => return false,
            },
            Word::SRange(s) => match SealPerm::from_code(&z) {
                Some(p) if widen || p.flows_to(s.perm) => Word::SRange(SealRange { perm: p, ..*s }),
                _ => return false,
            },
            _ => return false,
        };
        self.write_and_next(r, w);
        true
    }

    fn exec_subseg(&mut self, r: RegName, a: &Operand, b: &Operand) -> bool {
        let (Some(n1), Some(n2)) = (self.arg_int(a), self.arg_int(b)) else {
            return false;
        };
        let w = match self.reg(r) {
            Word::Cap(c) if c.perm != Perm::E => {
                let max = self.config.addr_max;
                match (to_bounded(&n1, max), to_bounded(&n2, max)) {
                    (Some(n1), Some(n2)) if c.base <= n1 && n2 <= c.end => {
                        Word::Cap(Cap { base: n1, end: n2, ..*c })
                    }
                    _ => return false,
                }
            }
            Word::SRange(s) => {
                let max = self.config.otype_max;
                match (to_bounded(&n1, max), to_bounded(&n2, max)) {
                    (Some(n1), Some(n2)) if s.base <= n1 && n2 <= s.end => {
                        Word::SRange(SealRange { base: n1, end: n2, ..*s })
                    }
                    _ => return false,
                }
            }
            _ => return false,
        };
        self.write_and_next(r, w);
        true
    }

    /// The table index and otype base the next `einit` would allocate.
    fn next_enclave_slot(&self) -> u64 {
        if self.config.mutation == Some(Mutation::ReuseOtypes) {
            (0..).find(|i| !self.etbl.contains_key(i)).unwrap_or(self.ec)
        } else {
            self.ec
        }
    }

    fn exec_einit(&mut self, r1: RegName, r2: RegName) -> bool {
        if r1.is_pc() {
            return false;
        }
        let code = match self.reg(r1) {
            Word::Cap(c) if c.perm == Perm::RX && c.base < c.end => *c,
            _ => return false,
        };
        let data = match self.reg(r2) {
            Word::Cap(c) if c.perm == Perm::RW && c.base < c.end => *c,
            _ => return false,
        };
        let mutation = self.config.mutation;
        if !self.sweep(r1) {
            return false;
        }
        if mutation != Some(Mutation::SkipDataSweep) && !self.sweep(r2) {
            return false;
        }
        if mutation != Some(Mutation::SkipCodeIntCheck) && !self.mem.all_int(code.base + 1, code.end) {
            return false;
        }
        let tidx = self.next_enclave_slot();
        let oa = 2 * tidx;
        if oa + 2 > self.config.otype_max.saturating_add(1) {
            return false;
        }
        let identity = measure_identity(
            code.base,
            self.mem.range(code.base + 1, code.end),
            self.config.hash_mode,
        );
        self.mem.set(code.base, Word::Cap(data));
        self.mem.set(data.base, Word::SRange(SealRange::new(SealPerm::SU, oa, oa + 2, oa)));
        self.etbl.insert(tidx, identity);
        self.ec = self.ec.max(tidx + 1);
        self.regs[r1.index()] = Word::Cap(Cap::new(Perm::E, code.base, code.end, code.base + 1));
        self.regs[r2.index()] = Word::Int(BigInt::zero());
        self.upd_pc();
        true
    }

    /// One ExecSingle step. Returns the decoded instruction when the fetch
    /// succeeded.
    pub fn step(&mut self) -> Option<Instr> {
        if self.status != Status::Running {
            return None;
        }
        let z = match &self.regs[RegName::PC.index()] {
            Word::Cap(c) if c.perm.executable() && c.in_bounds() => match self.mem.get(c.cursor) {
                Word::Int(z) => z,
                _ => {
                    self.fail();
                    return None;
                }
            },
            _ => {
                self.fail();
                return None;
            }
        };
        let instr = self.decoder.decode(z);
        self.exec(&instr);
        Some(instr)
    }

    /// Pure variant of [`MachineState::step`].
    pub fn stepped(&self) -> MachineState {
        let mut s = self.clone();
        s.step();
        s
    }

    /// Steps until the machine stops or `fuel` steps were taken. Returns the
    /// number of steps taken.
    pub fn run(&mut self, fuel: u64) -> u64 {
        let mut n = 0;
        while n < fuel && self.status == Status::Running {
            self.step();
            n += 1;
        }
        n
    }
}

/// Memoizes decoding of recently executed words.
#[derive(Clone, Debug, Default)]
pub struct DecodeCache {
    entries: std::collections::HashMap<BigInt, Instr>,
}

impl DecodeCache {
    const LIMIT: usize = 4096;

    pub fn decode(&mut self, z: &BigInt) -> Instr {
        if let Some(i) = self.entries.get(z) {
            return i.clone();
        }
        let i = decode(z);
        if self.entries.len() >= Self::LIMIT {
            self.entries.clear();
        }
        self.entries.insert(z.clone(), i.clone());
        i
    }
}

impl PartialEq for DecodeCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for DecodeCache {}
