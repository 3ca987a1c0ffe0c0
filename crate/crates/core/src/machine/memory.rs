use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;

use crate::isa::{Addr, Word};

static ZERO: Word = Word::Int(BigInt::ZERO);

/// Total memory over the address space, stored sparsely: absent cells hold
/// `Int(0)`. Cells holding anything other than an integer are indexed so the
/// sweep only visits them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Memory {
    cells: BTreeMap<Addr, Word>,
    non_int: BTreeSet<Addr>,
}

impl Memory {
    pub fn new() -> Memory {
        Memory::default()
    }

    pub fn get(&self, a: Addr) -> &Word {
        self.cells.get(&a).unwrap_or(&ZERO)
    }

    pub fn set(&mut self, a: Addr, w: Word) {
        if matches!(w, Word::Int(_)) {
            self.non_int.remove(&a);
        } else {
            self.non_int.insert(a);
        }
        if w.is_zero() {
            self.cells.remove(&a);
        } else {
            self.cells.insert(a, w);
        }
    }

    /// Non-zero cells in ascending address order.
    pub fn nonzero(&self) -> impl Iterator<Item = (Addr, &Word)> {
        self.cells.iter().map(|(a, w)| (*a, w))
    }

    /// Cells holding capabilities, seal ranges or sealed words.
    pub fn non_int(&self) -> impl Iterator<Item = (Addr, &Word)> {
        self.non_int.iter().map(|a| (*a, &self.cells[a]))
    }

    /// Whether every cell in `[from, to)` holds an integer.
    pub fn all_int(&self, from: Addr, to: Addr) -> bool {
        from >= to || self.non_int.range(from..to).next().is_none()
    }

    pub fn range(&self, from: Addr, to: Addr) -> impl Iterator<Item = &Word> {
        (from..to.max(from)).map(|a| self.get(a))
    }
}
