//! Oracles and generators shared by the integration tests.

#![allow(dead_code)]

use cerisier::isa::{Cap, Perm, RegName, SealPerm, SealRange, Sealable, Word};
use cerisier::machine::{Config, MachineState};
use rand::Rng;

/// The memory interval a word can reach, written out per kind.
fn reach(w: &Word) -> Option<(u64, u64)> {
    match w {
        Word::Cap(c) => Some((c.base, c.end)),
        Word::Sealed(_, Sealable::Cap(c)) => Some((c.base, c.end)),
        Word::Int(_) | Word::SRange(_) | Word::Sealed(_, Sealable::SRange(_)) => None,
    }
}

fn overlaps(a: &Word, b: &Word) -> bool {
    match (reach(a), reach(b)) {
        (Some((b1, e1)), Some((b2, e2))) => (b1..e1).any(|x| b2 <= x && x < e2),
        _ => false,
    }
}

/// Sweep as a literal scan: every register but `rs`, every address in the
/// address space.
pub fn sweep_reference(s: &MachineState, rs: RegName) -> bool {
    let target = s.reg(rs);
    if reach(target).is_none() {
        return false;
    }
    for i in 0..RegName::COUNT {
        let r = RegName::from_index(i).unwrap();
        if r != rs && overlaps(s.reg(r), target) {
            return false;
        }
    }
    for a in 0..=s.config.addr_max {
        if overlaps(s.mem.get(a), target) {
            return false;
        }
    }
    true
}

pub const SMALL_ADDRS: u64 = 64;

pub fn random_cap(rng: &mut impl Rng, space: u64) -> Cap {
    let b = rng.gen_range(0..space);
    let e = rng.gen_range(0..=space);
    let a = rng.gen_range(0..space + 2);
    Cap::new(Perm::ALL[rng.gen_range(0..6)], b, e, a)
}

pub fn random_srange(rng: &mut impl Rng) -> SealRange {
    let b = rng.gen_range(0..8);
    SealRange::new(SealPerm::ALL[rng.gen_range(0..4)], b, rng.gen_range(0..10), rng.gen_range(0..10))
}

pub fn random_word(rng: &mut impl Rng, space: u64) -> Word {
    match rng.gen_range(0..8) {
        0..=2 => Word::int(rng.gen_range(-4i64..70)),
        3 | 4 => Word::Cap(random_cap(rng, space)),
        5 => Word::SRange(random_srange(rng)),
        6 => Word::Sealed(rng.gen_range(0..8), Sealable::Cap(random_cap(rng, space))),
        _ => Word::Sealed(rng.gen_range(0..8), Sealable::SRange(random_srange(rng))),
    }
}

/// A state with 16 materialized registers (pc, r0..r14) and 64 addresses,
/// most cells integers. Returns it with a register holding a capability or
/// sealed capability to sweep.
pub fn random_small_state(rng: &mut impl Rng) -> (MachineState, RegName) {
    let config = Config { addr_max: SMALL_ADDRS - 1, otype_max: 15, ..Config::default() };
    let mut s = MachineState::new(config);
    for i in 0..16 {
        let r = RegName::from_index(i).unwrap();
        s.set_reg(r, random_word(rng, SMALL_ADDRS));
    }
    let cells = rng.gen_range(0..12);
    for _ in 0..cells {
        let a = rng.gen_range(0..SMALL_ADDRS);
        s.mem.set(a, random_word(rng, SMALL_ADDRS));
    }
    let rs = RegName::from_index(rng.gen_range(1..16)).unwrap();
    let target = if rng.gen_bool(0.8) {
        Word::Cap(random_cap(rng, SMALL_ADDRS))
    } else {
        Word::Sealed(rng.gen_range(0..8), Sealable::Cap(random_cap(rng, SMALL_ADDRS)))
    };
    s.set_reg(rs, target);
    (s, rs)
}

/// Clears every alias of `rs` except one placed in the pc.
pub fn pc_only_alias(rng: &mut impl Rng) -> (MachineState, RegName) {
    let (mut s, rs) = random_small_state(rng);
    isolate(&mut s, rs);
    let (b, e) = reach(s.reg(rs)).unwrap();
    if b < e {
        let a = rng.gen_range(b..e);
        s.set_reg(RegName::PC, Word::Cap(Cap::new(Perm::RX, a, a + 1, a)));
    }
    (s, rs)
}

/// Clears every alias of `rs` except one sealed copy in memory.
pub fn sealed_alias(rng: &mut impl Rng) -> (MachineState, RegName) {
    let (mut s, rs) = random_small_state(rng);
    isolate(&mut s, rs);
    let (b, e) = reach(s.reg(rs)).unwrap();
    if b < e {
        let a = rng.gen_range(b..e);
        let cell = rng.gen_range(0..SMALL_ADDRS);
        s.mem.set(cell, Word::Sealed(3, Sealable::Cap(Cap::new(Perm::RO, a, a + 1, a))));
    }
    (s, rs)
}

fn isolate(s: &mut MachineState, rs: RegName) {
    let target = s.reg(rs).clone();
    for i in 0..RegName::COUNT {
        let r = RegName::from_index(i).unwrap();
        if r != rs && overlaps(s.reg(r), &target) {
            s.set_reg(r, Word::int(0));
        }
    }
    for a in 0..SMALL_ADDRS {
        if overlaps(s.mem.get(a), &target) {
            s.mem.set(a, Word::int(0));
        }
    }
}

/// Every word in a small universe: integers in [-8, 8] and capabilities,
/// seal ranges and sealed words with fields drawn from 0..=3.
pub fn small_words() -> Vec<Word> {
    let mut out: Vec<Word> = (-8..=8).map(Word::int).collect();
    let fields: Vec<(u64, u64, u64)> =
        (0..4).flat_map(|b| (0..4).flat_map(move |e| (0..4).map(move |a| (b, e, a)))).collect();
    for p in Perm::ALL {
        for (b, e, a) in &fields {
            out.push(Word::Cap(Cap::new(p, *b, *e, *a)));
        }
    }
    for p in SealPerm::ALL {
        for (b, e, a) in &fields {
            out.push(Word::SRange(SealRange::new(p, *b, *e, *a)));
        }
    }
    for o in 0..2 {
        for (b, e, a) in fields.iter().step_by(3) {
            out.push(Word::Sealed(o, Sealable::Cap(Cap::new(Perm::RX, *b, *e, *a))));
            out.push(Word::Sealed(o, Sealable::SRange(SealRange::new(SealPerm::U, *b, *e, *a))));
        }
    }
    out
}
