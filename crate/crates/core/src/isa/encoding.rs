//! Bijective integer encoding of instructions.
//!
//! Layout, least significant bit first:
//!
//! ```text
//! [opcode: 8] [slot 0] [slot 1] ...
//! register slot:  [index: 6]                      pc = 0, rN = N + 1
//! argument slot:  [tag: 1 = 0] [index: 6]         register
//!                 [tag: 1 = 1] [sign: 1] [varint]  immediate
//! varint:         groups of [payload: 7] [more: 1], low groups first
//! ```
//!
//! Immediates are sign-and-magnitude. A magnitude is written with the fewest
//! groups, and zero is never negative, so every instruction has exactly one
//! encoding. Integers that are not an encoding decode to `fail`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Zero;

use super::{slots_of_opcode, Instr, Operand, RegName, Slot};

struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { bytes: Vec::new(), len: 0 }
    }

    fn push_bit(&mut self, bit: bool) {
        let byte = (self.len / 8) as usize;
        if byte == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte] |= 1 << (self.len % 8);
        }
        self.len += 1;
    }

    fn push_bits(&mut self, value: u64, width: u32) {
        for i in 0..width {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    fn push_varint(&mut self, magnitude: &BigUint) {
        let groups = magnitude.to_radix_le(128);
        let n = groups.len();
        for (i, g) in groups.into_iter().enumerate() {
            self.push_bits(g as u64, 7);
            self.push_bit(i + 1 < n);
        }
    }

    fn finish(self) -> BigInt {
        BigInt::from_biguint(Sign::Plus, BigUint::from_bytes_le(&self.bytes))
    }
}

struct BitReader {
    bytes: Vec<u8>,
    pos: u64,
}

impl BitReader {
    fn bit(&mut self) -> bool {
        let byte = (self.pos / 8) as usize;
        let bit = self
            .bytes
            .get(byte)
            .is_some_and(|b| (b >> (self.pos % 8)) & 1 == 1);
        self.pos += 1;
        bit
    }

    fn bits(&mut self, width: u32) -> u64 {
        (0..width).fold(0, |acc, i| acc | (u64::from(self.bit()) << i))
    }

    /// Reads a canonical varint; `None` on a redundant trailing zero group.
    fn varint(&mut self) -> Option<BigUint> {
        let mut groups = Vec::new();
        loop {
            let g = self.bits(7) as u8;
            let more = self.bit();
            groups.push(g);
            if !more {
                break;
            }
        }
        if groups.len() > 1 && *groups.last()? == 0 {
            return None;
        }
        BigUint::from_radix_le(&groups, 128)
    }

    fn exhausted(&self) -> bool {
        self.pos >= self.bytes.len() as u64 * 8
            || self.bytes.iter().enumerate().all(|(i, b)| {
                let lo = i as u64 * 8;
                if lo + 8 <= self.pos {
                    true
                } else if lo >= self.pos {
                    *b == 0
                } else {
                    (b >> (self.pos - lo)) == 0
                }
            })
    }
}

fn write_reg(w: &mut BitWriter, r: RegName) {
    w.push_bits(r.index() as u64, 6);
}

/// Encodes an instruction as a non-negative integer.
pub fn encode(instr: &Instr) -> BigInt {
    let mut w = BitWriter::new();
    w.push_bits(instr.opcode() as u64, 8);
    let (_, slots) = slots_of_opcode(instr.opcode()).expect("every instruction has an opcode");
    for (slot, op) in slots.iter().zip(instr.operands()) {
        match (slot, op) {
            (Slot::Reg, Operand::Reg(r)) => write_reg(&mut w, r),
            (Slot::Arg, Operand::Reg(r)) => {
                w.push_bit(false);
                write_reg(&mut w, r);
            }
            (Slot::Arg, Operand::Imm(z)) => {
                w.push_bit(true);
                w.push_bit(z.sign() == Sign::Minus);
                w.push_varint(z.magnitude());
            }
            (Slot::Reg, Operand::Imm(_)) => unreachable!("instruction constructors only hold registers here"),
        }
    }
    w.finish()
}

/// Decodes an integer, or `None` if it is not the encoding of any instruction.
pub fn decode_checked(z: &BigInt) -> Option<Instr> {
    if z.sign() == Sign::Minus || z.is_zero() {
        return None;
    }
    let mut r = BitReader { bytes: z.magnitude().to_bytes_le(), pos: 0 };
    let opcode = r.bits(8) as u8;
    let (_, slots) = slots_of_opcode(opcode)?;
    let mut ops = Vec::with_capacity(slots.len());
    for slot in slots {
        let is_imm = match slot {
            Slot::Reg => false,
            Slot::Arg => r.bit(),
        };
        if is_imm {
            let negative = r.bit();
            let mag = r.varint()?;
            if negative && mag.is_zero() {
                return None;
            }
            let sign = if negative { Sign::Minus } else { Sign::Plus };
            ops.push(Operand::Imm(BigInt::from_biguint(sign, mag)));
        } else {
            ops.push(Operand::Reg(RegName::from_index(r.bits(6) as usize)?));
        }
    }
    if !r.exhausted() {
        return None;
    }
    Instr::from_parts(opcode, ops)
}

/// Total decoding: anything outside the image of [`encode`] is `fail`.
pub fn decode(z: &BigInt) -> Instr {
    decode_checked(z).unwrap_or(Instr::Fail)
}

/// Renders an integer as assembly; non-encodings become `fail ; raw=<z>`.
pub fn disassemble(z: &BigInt) -> String {
    match decode_checked(z) {
        Some(i) => i.to_string(),
        None => format!("fail ; raw={z}"),
    }
}
