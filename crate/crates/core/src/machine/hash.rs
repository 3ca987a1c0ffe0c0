//! Word hashing as injective byte framing.
//!
//! A hash is a byte string made of atoms. Each atom is a LEB128 length
//! followed by a payload: in exact mode the payload is the canonical
//! serialization of one word, in digest mode its SHA-256. Region hashes are
//! plain concatenations, so `region_hash(m1 ++ m2)` is literally
//! `region_hash(m1) ∥ region_hash(m2)`.
//!
//! Machine integers carry hashes as the big-endian value of `0x01 ∥ bytes`,
//! which keeps leading zero bytes distinct.

use num_bigint::{BigInt, BigUint, Sign};
use sha2::{Digest, Sha256};

use crate::isa::{Sealable, Word};

/// How atoms are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HashMode {
    /// Raw serializations: exactly injective.
    #[default]
    Exact,
    /// SHA-256 of the serialization: collision resistant, fixed size.
    Digest,
}

impl HashMode {
    pub fn name(self) -> &'static str {
        match self {
            HashMode::Exact => "exact",
            HashMode::Digest => "digest",
        }
    }

    pub fn from_name(s: &str) -> Option<HashMode> {
        match s {
            "exact" => Some(HashMode::Exact),
            "digest" => Some(HashMode::Digest),
            _ => None,
        }
    }
}

/// A hash value: a concatenation of framed atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashBytes(pub Vec<u8>);

impl HashBytes {
    pub fn empty() -> HashBytes {
        HashBytes(Vec::new())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    /// Splits into atoms. `None` if the framing is malformed.
    pub fn atoms(&self) -> Option<Vec<&[u8]>> {
        let mut out = Vec::new();
        let mut rest = self.0.as_slice();
        while !rest.is_empty() {
            let (len, used) = read_varint(rest)?;
            let len = usize::try_from(len).ok()?;
            rest = &rest[used..];
            if rest.len() < len {
                return None;
            }
            out.push(&rest[..len]);
            rest = &rest[len..];
        }
        Some(out)
    }
}

pub(crate) fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(bytes: &[u8]) -> Option<(u64, usize)> {
    let mut v: u64 = 0;
    for (i, b) in bytes.iter().enumerate().take(10) {
        v |= u64::from(b & 0x7f) << (7 * i);
        if b & 0x80 == 0 {
            return Some((v, i + 1));
        }
    }
    None
}

fn serialize_sealable(out: &mut Vec<u8>, sc: &Sealable) {
    match sc {
        Sealable::Cap(c) => {
            out.push(1);
            out.push(c.perm.code() as u8);
            write_varint(out, c.base);
            write_varint(out, c.end);
            write_varint(out, c.cursor);
        }
        Sealable::SRange(s) => {
            out.push(2);
            out.push(s.perm.code() as u8);
            write_varint(out, s.base);
            write_varint(out, s.end);
            write_varint(out, s.cursor);
        }
    }
}

/// Canonical, injective byte serialization of a word.
pub fn serialize_word(w: &Word) -> Vec<u8> {
    let mut out = Vec::new();
    match w {
        Word::Int(z) => {
            out.push(0);
            out.push(u8::from(z.sign() == Sign::Minus));
            if z.sign() != Sign::NoSign {
                out.extend(z.magnitude().to_bytes_be());
            }
        }
        Word::Cap(c) => serialize_sealable(&mut out, &Sealable::Cap(*c)),
        Word::SRange(s) => serialize_sealable(&mut out, &Sealable::SRange(*s)),
        Word::Sealed(o, sc) => {
            out.push(3);
            write_varint(&mut out, *o);
            serialize_sealable(&mut out, sc);
        }
    }
    out
}

/// The single-atom hash of a word.
pub fn hash_word(w: &Word, mode: HashMode) -> HashBytes {
    let ser = serialize_word(w);
    let payload = match mode {
        HashMode::Exact => ser,
        HashMode::Digest => Sha256::digest(&ser).to_vec(),
    };
    let mut out = Vec::with_capacity(payload.len() + 2);
    write_varint(&mut out, payload.len() as u64);
    out.extend(payload);
    HashBytes(out)
}

pub fn hash_concat(h1: &HashBytes, h2: &HashBytes) -> HashBytes {
    let mut out = h1.0.clone();
    out.extend_from_slice(&h2.0);
    HashBytes(out)
}

/// Concatenation of the atoms of `ws`, in order.
pub fn region_hash<'a>(ws: impl IntoIterator<Item = &'a Word>, mode: HashMode) -> HashBytes {
    let mut out = Vec::new();
    for w in ws {
        out.extend(hash_word(w, mode).0);
    }
    HashBytes(out)
}

/// Embeds a hash into the integers as the big-endian value of `0x01 ∥ h`.
pub fn int_of_hash(h: &HashBytes) -> BigInt {
    let mut bytes = Vec::with_capacity(h.0.len() + 1);
    bytes.push(1);
    bytes.extend_from_slice(&h.0);
    BigInt::from_biguint(Sign::Plus, BigUint::from_bytes_be(&bytes))
}

/// Inverse of [`int_of_hash`]; `None` for integers outside its image.
pub fn hash_of_int(z: &BigInt) -> Option<HashBytes> {
    if z.sign() != Sign::Plus {
        return None;
    }
    let bytes = z.magnitude().to_bytes_be();
    match bytes.split_first() {
        Some((1, rest)) => Some(HashBytes(rest.to_vec())),
        _ => None,
    }
}

/// The identity of an enclave whose code region starts at `base` and whose
/// words after the data-capability slot are `code`.
pub fn measure_identity<'a>(
    base: u64,
    code: impl IntoIterator<Item = &'a Word>,
    mode: HashMode,
) -> BigInt {
    let head = hash_word(&Word::int(base), mode);
    int_of_hash(&hash_concat(&head, &region_hash(code, mode)))
}
