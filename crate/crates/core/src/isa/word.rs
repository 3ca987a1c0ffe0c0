use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use thiserror::Error;

use super::{Addr, OType, Perm, SealPerm};

/// A memory capability `(perm, base, end, cursor)` over the half-open
/// interval `[base, end)`. Bounds are only checked where the capability is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cap {
    pub perm: Perm,
    pub base: Addr,
    pub end: Addr,
    pub cursor: Addr,
}

impl Cap {
    pub const fn new(perm: Perm, base: Addr, end: Addr, cursor: Addr) -> Cap {
        Cap { perm, base, end, cursor }
    }

    pub fn in_bounds(&self) -> bool {
        self.base <= self.cursor && self.cursor < self.end
    }

    /// Whether the intervals of two capabilities intersect.
    pub fn overlaps(&self, other: &Cap) -> bool {
        self.base.max(other.base) < self.end.min(other.end)
    }

    pub fn contains(&self, addr: Addr) -> bool {
        self.base <= addr && addr < self.end
    }
}

/// A sealing capability `[perm, base, end, cursor]` over the otypes `[base, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SealRange {
    pub perm: SealPerm,
    pub base: OType,
    pub end: OType,
    pub cursor: OType,
}

impl SealRange {
    pub const fn new(perm: SealPerm, base: OType, end: OType, cursor: OType) -> SealRange {
        SealRange { perm, base, end, cursor }
    }

    pub fn in_bounds(&self) -> bool {
        self.base <= self.cursor && self.cursor < self.end
    }
}

/// Words that can be sealed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sealable {
    Cap(Cap),
    SRange(SealRange),
}

impl Sealable {
    pub fn to_word(self) -> Word {
        match self {
            Sealable::Cap(c) => Word::Cap(c),
            Sealable::SRange(s) => Word::SRange(s),
        }
    }
}

/// A machine word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Word {
    Int(BigInt),
    Cap(Cap),
    SRange(SealRange),
    Sealed(OType, Sealable),
}

impl Default for Word {
    fn default() -> Self {
        Word::Int(BigInt::default())
    }
}

impl From<Cap> for Word {
    fn from(c: Cap) -> Self {
        Word::Cap(c)
    }
}

impl From<SealRange> for Word {
    fn from(s: SealRange) -> Self {
        Word::SRange(s)
    }
}

impl From<BigInt> for Word {
    fn from(z: BigInt) -> Self {
        Word::Int(z)
    }
}

impl Word {
    pub fn int(z: impl Into<BigInt>) -> Word {
        Word::Int(z.into())
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Word::Int(z) => Some(z),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Word::Int(z) if z.sign() == num_bigint::Sign::NoSign)
    }

    pub fn as_sealable(&self) -> Option<Sealable> {
        match self {
            Word::Cap(c) => Some(Sealable::Cap(*c)),
            Word::SRange(s) => Some(Sealable::SRange(*s)),
            _ => None,
        }
    }

    /// The memory interval this word can ever address: a capability or a
    /// sealed capability. Seal ranges and integers have none.
    pub fn address_interval(&self) -> Option<(Addr, Addr)> {
        match self {
            Word::Cap(c) | Word::Sealed(_, Sealable::Cap(c)) => Some((c.base, c.end)),
            _ => None,
        }
    }

    /// Kind code reported by `getwtype`.
    pub fn kind_code(&self) -> i64 {
        match self {
            Word::Int(_) => 0,
            Word::Cap(_) => 1,
            Word::SRange(_) => 2,
            Word::Sealed(..) => 3,
        }
    }
}

impl fmt::Display for Sealable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sealable::Cap(c) => write!(f, "cap:{}:{}:{}:{}", c.perm, c.base, c.end, c.cursor),
            Sealable::SRange(s) => {
                write!(f, "srange:{}:{}:{}:{}", s.perm, s.base, s.end, s.cursor)
            }
        }
    }
}

/// Snapshot syntax: `int:<z>`, `cap:<perm>:<b>:<e>:<a>`,
/// `srange:<sperm>:<ob>:<oe>:<oa>`, `sealed:<o>:<sealable>`.
impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Int(z) => write!(f, "int:{z}"),
            Word::Cap(c) => Sealable::Cap(*c).fmt(f),
            Word::SRange(s) => Sealable::SRange(*s).fmt(f),
            Word::Sealed(o, sc) => write!(f, "sealed:{o}:{sc}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed word `{0}`")]
pub struct ParseWordError(pub String);

fn parse_num<T: FromStr>(s: &str, whole: &str) -> Result<T, ParseWordError> {
    s.parse().map_err(|_| ParseWordError(whole.to_string()))
}

fn parse_sealable(parts: &[&str], whole: &str) -> Result<Sealable, ParseWordError> {
    let err = || ParseWordError(whole.to_string());
    match parts {
        ["cap", p, b, e, a] => Ok(Sealable::Cap(Cap::new(
            Perm::from_name(p).ok_or_else(err)?,
            parse_num(b, whole)?,
            parse_num(e, whole)?,
            parse_num(a, whole)?,
        ))),
        ["srange", p, b, e, a] => Ok(Sealable::SRange(SealRange::new(
            SealPerm::from_name(p).ok_or_else(err)?,
            parse_num(b, whole)?,
            parse_num(e, whole)?,
            parse_num(a, whole)?,
        ))),
        _ => Err(err()),
    }
}

impl FromStr for Word {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, ParseWordError> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["int", z] => Ok(Word::Int(parse_num(z, s)?)),
            ["sealed", o, rest @ ..] => Ok(Word::Sealed(parse_num(o, s)?, parse_sealable(rest, s)?)),
            other => Ok(parse_sealable(other, s)?.to_word()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_is_half_open() {
        let a = Cap::new(Perm::RW, 0, 4, 0);
        assert!(a.overlaps(&Cap::new(Perm::RO, 2, 6, 3)));
        assert!(!a.overlaps(&Cap::new(Perm::RW, 4, 8, 4)));
        // empty and inverted intervals overlap nothing
        assert!(!a.overlaps(&Cap::new(Perm::RW, 2, 2, 2)));
        assert!(!a.overlaps(&Cap::new(Perm::RW, 3, 1, 2)));
    }

    #[test]
    fn word_text_round_trip() {
        let words = [
            Word::int(-17),
            Word::Cap(Cap::new(Perm::RWX, 1, 9, 3)),
            Word::SRange(SealRange::new(SealPerm::SU, 4, 6, 4)),
            Word::Sealed(5, Sealable::Cap(Cap::new(Perm::E, 0, 8, 1))),
            Word::Sealed(1, Sealable::SRange(SealRange::new(SealPerm::U, 1, 2, 1))),
        ];
        for w in words {
            assert_eq!(w.to_string().parse::<Word>(), Ok(w.clone()), "{w}");
        }
        assert!("cap:rw:1:2".parse::<Word>().is_err());
        assert!("int:x".parse::<Word>().is_err());
    }
}
