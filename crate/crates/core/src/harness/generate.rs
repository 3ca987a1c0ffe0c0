//! Adversary generators.
//!
//! An adversary is the integer contents of the adversary region. Three
//! generators are mixed by seed: uniformly random instructions, mutations of
//! the intended adversary, and templates that drive the enclave instructions
//! through known attack shapes.

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::isa::{encode, slots_of_opcode, Addr, Instr, Operand, Perm, RegName, Slot, Word};
use crate::loader::{SystemImage, ROLE_ADVERSARY};
use crate::machine::MachineState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Random,
    Mutate,
    Template,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Random, Mode::Mutate, Mode::Template];

    pub fn of_seed(seed: u64) -> Mode {
        Mode::ALL[(seed % 3) as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Random => "a",
            Mode::Mutate => "b",
            Mode::Template => "c",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// What the generators know about a system.
#[derive(Clone, Debug)]
pub struct Profile {
    pub adversary_base: Addr,
    pub adversary_size: u64,
    /// The intended adversary, without trailing zeros.
    pub intended: Vec<BigInt>,
    /// Registers holding (code, data) capabilities of each enclave.
    pub enclaves: Vec<(RegName, RegName)>,
    pub heap: Option<RegName>,
    /// Registers granted a capability.
    pub cap_regs: Vec<RegName>,
    /// Integers worth trying as immediates.
    pub boundaries: Vec<BigInt>,
}

impl Profile {
    pub fn of(image: &SystemImage) -> Option<Profile> {
        let adv = image.regions.iter().find(|r| r.role == ROLE_ADVERSARY)?;
        let mut intended: Vec<BigInt> = adv
            .image
            .words
            .iter()
            .map(|w| w.as_int().cloned().unwrap_or_default())
            .collect();
        while intended.last().is_some_and(|z| *z == BigInt::default()) {
            intended.pop();
        }
        let role_of = |w: &Word| {
            let (b, _) = w.address_interval()?;
            image.regions.iter().find(|r| r.contains(b)).map(|r| r.role.as_str())
        };
        let mut code = Vec::new();
        let mut data = Vec::new();
        let mut heap = None;
        let mut cap_regs = Vec::new();
        for (r, w) in &image.regs {
            if r.is_pc() || !matches!(w, Word::Cap(_)) {
                continue;
            }
            cap_regs.push(*r);
            match role_of(w) {
                Some("enclave") => code.push(*r),
                Some("data") => data.push(*r),
                Some("heap") if heap.is_none() => heap = Some(*r),
                _ => {}
            }
        }
        let cfg = image.config;
        let mut boundaries: Vec<BigInt> = [
            0i64, 1, -1, 2, 3, 4, 5, 6, 7, 8, 16, 42, 43, -2,
        ]
        .iter()
        .map(|v| BigInt::from(*v))
        .collect();
        let fresh = 2 * image.ec;
        for v in [fresh, fresh + 1, fresh + 2, cfg.addr_max, cfg.addr_max + 1, cfg.otype_max, cfg.otype_max + 1] {
            boundaries.push(v.into());
        }
        for r in &image.regions {
            boundaries.push(r.base.into());
            boundaries.push(r.end().into());
        }
        boundaries.sort();
        boundaries.dedup();
        Some(Profile {
            adversary_base: adv.base,
            adversary_size: adv.size,
            intended,
            enclaves: code.into_iter().zip(data).collect(),
            heap,
            cap_regs,
            boundaries,
        })
    }
}

/// A generated adversary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub mode: Mode,
    pub words: Vec<BigInt>,
}

impl Generated {
    /// Replaces the adversary region of `s` with this program.
    pub fn install(&self, profile: &Profile, s: &mut MachineState) {
        for i in 0..profile.adversary_size {
            let w = self.words.get(i as usize).cloned().unwrap_or_default();
            s.mem.set(profile.adversary_base + i, Word::Int(w));
        }
    }
}

fn r(n: u8) -> RegName {
    RegName::r(n)
}

fn imm(v: impl Into<BigInt>) -> Operand {
    Operand::imm(v)
}

fn random_reg(rng: &mut ChaCha8Rng, profile: &Profile) -> RegName {
    match rng.gen_range(0..10) {
        0 => RegName::PC,
        1..=4 if !profile.cap_regs.is_empty() => *profile.cap_regs.choose(rng).unwrap(),
        5..=7 => r(rng.gen_range(0..8)),
        _ => r(rng.gen_range(0..32)),
    }
}

fn random_int(rng: &mut ChaCha8Rng, profile: &Profile) -> BigInt {
    match rng.gen_range(0..4) {
        0 => BigInt::from(rng.gen_range(-64i64..64)),
        1 => BigInt::from(rng.gen::<i64>()),
        _ => profile.boundaries.choose(rng).cloned().unwrap_or_default(),
    }
}

fn random_operand(rng: &mut ChaCha8Rng, profile: &Profile, slot: Slot) -> Operand {
    if slot == Slot::Reg || rng.gen_bool(0.5) {
        Operand::Reg(random_reg(rng, profile))
    } else {
        Operand::Imm(random_int(rng, profile))
    }
}

pub fn random_instr(rng: &mut ChaCha8Rng, profile: &Profile) -> Instr {
    loop {
        let op = rng.gen_range(1..=27u8);
        let Some((_, slots)) = slots_of_opcode(op) else { continue };
        let ops = slots.iter().map(|s| random_operand(rng, profile, *s)).collect();
        if let Some(i) = Instr::from_parts(op, ops) {
            return i;
        }
    }
}

fn random_word(rng: &mut ChaCha8Rng, profile: &Profile) -> BigInt {
    if rng.gen_ratio(1, 10) {
        random_int(rng, profile)
    } else {
        encode(&random_instr(rng, profile))
    }
}

fn gen_random(rng: &mut ChaCha8Rng, profile: &Profile) -> Vec<BigInt> {
    let max = profile.adversary_size.clamp(1, 64) as usize;
    let len = rng.gen_range(1..=max);
    (0..len).map(|_| random_word(rng, profile)).collect()
}

/// Changes one operand of an encoded instruction.
fn tweak(rng: &mut ChaCha8Rng, profile: &Profile, z: &BigInt) -> BigInt {
    let Some(instr) = crate::isa::decode_checked(z) else {
        return random_word(rng, profile);
    };
    let mut ops = instr.operands();
    if ops.is_empty() {
        return random_word(rng, profile);
    }
    let slots = slots_of_opcode(instr.opcode()).map(|(_, s)| s).unwrap_or(&[]);
    let k = rng.gen_range(0..ops.len());
    ops[k] = random_operand(rng, profile, slots.get(k).copied().unwrap_or(Slot::Reg));
    Instr::from_parts(instr.opcode(), ops).map_or_else(|| z.clone(), |i| encode(&i))
}

fn gen_mutate(rng: &mut ChaCha8Rng, profile: &Profile) -> Vec<BigInt> {
    let mut words = profile.intended.clone();
    if words.is_empty() {
        return gen_random(rng, profile);
    }
    let limit = profile.adversary_size as usize;
    for _ in 0..rng.gen_range(1..=4) {
        let k = rng.gen_range(0..words.len());
        match rng.gen_range(0..6) {
            0 => words[k] = random_word(rng, profile),
            1 | 2 => words[k] = tweak(rng, profile, &words[k]),
            3 if words.len() > 1 => {
                words.remove(k);
            }
            4 if words.len() < limit => words.insert(k, random_word(rng, profile)),
            _ => {
                let j = rng.gen_range(0..words.len());
                words.swap(k, j);
            }
        }
    }
    words
}

/// Registers the templates use for their own bookkeeping.
const SAVED_RETURN: u8 = 28;

/// Builds a tiny enclave in the heap whose only job is to hand its seal
/// range back to the caller, then deinitialises it so its otypes are free.
fn leak_and_deinit(heap: RegName, out: &mut Vec<Instr>) {
    let body = [
        Instr::Mov(r(8), RegName::PC.into()),
        Instr::Lea(r(8), imm(-1)),
        Instr::Load(r(8), r(8)),
        Instr::Load(r(1), r(8)),
        Instr::Jmp(r(0)),
    ];
    let code_len = body.len() as i64 + 1;
    out.push(Instr::Mov(r(16), heap.into()));
    for i in &body {
        out.push(Instr::Lea(r(16), imm(1)));
        out.push(Instr::Store(r(16), imm(encode(i))));
    }
    out.extend([
        Instr::GetB(r(17), heap),
        Instr::Add(r(18), r(17).into(), imm(code_len)),
        Instr::Mov(r(16), heap.into()),
        Instr::Subseg(r(16), r(17).into(), r(18).into()),
        Instr::Restrict(r(16), imm(Perm::RX.code())),
        Instr::Add(r(19), r(18).into(), imm(1)),
        Instr::Mov(r(20), heap.into()),
        Instr::Subseg(r(20), r(18).into(), r(19).into()),
        Instr::Lea(r(20), imm(code_len)),
        Instr::Restrict(r(20), imm(Perm::RW.code())),
        Instr::GetE(r(21), heap),
        Instr::Subseg(heap, r(19).into(), r(21).into()),
        Instr::EInit(r(16), r(20)),
        Instr::Mov(r(0), RegName::PC.into()),
        Instr::Lea(r(0), imm(3)),
        Instr::Jmp(r(16)),
        Instr::EDeInit(r(1)),
    ]);
}

fn gen_template(rng: &mut ChaCha8Rng, profile: &Profile) -> Vec<BigInt> {
    let mut out = vec![Instr::Mov(r(SAVED_RETURN), r(0).into())];
    let enclaves = &profile.enclaves;
    let victim = enclaves.choose(rng).copied();
    if let (Some((_, data)), true) = (victim, rng.gen_bool(0.3)) {
        // Keep an alias of the data capability across einit.
        out.push(Instr::Mov(r(22), data.into()));
    }
    if let (Some((code, _)), true) = (victim, rng.gen_bool(0.3)) {
        // Plant a capability inside the code before einit.
        let planted = profile.heap.unwrap_or(r(SAVED_RETURN));
        out.extend([
            Instr::Mov(r(23), code.into()),
            Instr::Lea(r(23), imm(rng.gen_range(1..4))),
            Instr::Store(r(23), planted.into()),
            Instr::Mov(r(23), imm(0)),
        ]);
    }
    if let (Some(heap), true) = (profile.heap, rng.gen_bool(0.3)) {
        leak_and_deinit(heap, &mut out);
    }
    let mut order: Vec<(RegName, RegName)> = enclaves.clone();
    order.shuffle(rng);
    for (i, (code, data)) in order.iter().enumerate() {
        if i == 0 || rng.gen_ratio(9, 10) {
            out.push(Instr::Restrict(*code, imm(Perm::RX.code())));
            out.push(Instr::EInit(*code, *data));
        }
    }
    if rng.gen_bool(0.2) {
        // Try to widen an attenuated capability.
        if let Some(src) = profile.cap_regs.choose(rng) {
            out.extend([
                Instr::Mov(r(24), (*src).into()),
                Instr::Restrict(r(24), imm(Perm::RO.code())),
                Instr::Restrict(r(24), imm(Perm::RWX.code())),
            ]);
        }
    }
    for _ in 0..rng.gen_range(0..4) {
        out.push(random_instr(rng, profile));
    }
    if let (Some((code, _)), true) = (order.first(), rng.gen_bool(0.5)) {
        if rng.gen_bool(0.5) {
            out.push(Instr::Mov(r(1), Operand::Imm(random_int(rng, profile))));
        }
        out.push(Instr::Mov(r(0), r(SAVED_RETURN).into()));
        out.push(Instr::Jmp(*code));
    } else {
        out.push(Instr::Jmp(r(SAVED_RETURN)));
    }
    out.truncate(profile.adversary_size as usize);
    out.iter().map(encode).collect()
}

/// Generates the adversary for `seed` in the given mode.
pub fn generate(rng: &mut ChaCha8Rng, profile: &Profile, mode: Mode) -> Generated {
    let words = match mode {
        Mode::Random => gen_random(rng, profile),
        Mode::Mutate => gen_mutate(rng, profile),
        Mode::Template => gen_template(rng, profile),
    };
    Generated { mode, words }
}
