//! Two-pass assembler for `.casm` sources.
//!
//! One item per line, `;` starts a comment, `name:` defines a label. Operands
//! are registers or expressions: sums of decimal or `0x` literals, labels,
//! `.` (the current address), environment constants and permission constants
//! such as `#rx` or `#su`. Directives:
//!
//! ```text
//! .word <expr>                 one integer word
//! .cap <perm>:<b>:<e>:<a>      one capability word
//! .srange <sp>:<ob>:<oe>:<oa>  one seal-range word
//! .identity <unit>             the measured identity of another unit
//! .preidentity <unit>          its code hash without the identity table
//! .zero <n>                    n zero words
//! ```
//!
//! Macros: `adr rd label` loads a capability pointing at `label` derived from
//! the pc (two words); `assert a b rflag` stores 1 through `rflag` and halts
//! when `a ≠ b` (nine words, clobbers `r30` and `r31`).

mod syntax;

pub use crate::isa::disassemble;
pub use syntax::{is_ident, parse_expr, parse_line, Arg, Expr, Line, Stmt, Term, ASSERT_LEN};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::isa::{encode, Addr, Cap, Instr, Operand, RegName, SealRange, Word};

/// Constants visible to a unit besides its own labels.
pub type Env = BTreeMap<String, BigInt>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: unresolved symbol `{name}`")]
    Unresolved { line: usize, name: String },
    #[error("line {line}: {msg}")]
    OutOfRange { line: usize, msg: String },
}

impl AsmError {
    pub fn line(&self) -> usize {
        match self {
            AsmError::Parse { line, .. }
            | AsmError::DuplicateLabel { line, .. }
            | AsmError::Unresolved { line, .. }
            | AsmError::OutOfRange { line, .. } => *line,
        }
    }
}

/// Assembled words placed from `base` upwards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramImage {
    pub base: Addr,
    pub words: Vec<Word>,
    pub symbols: BTreeMap<String, Addr>,
}

impl ProgramImage {
    pub fn len(&self) -> u64 {
        self.words.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn end(&self) -> Addr {
        self.base + self.len()
    }

    /// `sym <label> <addr>` lines, by address then name.
    pub fn symbol_map(&self) -> String {
        let mut syms: Vec<_> = self.symbols.iter().collect();
        syms.sort_by_key(|(name, addr)| (**addr, name.as_str()));
        let mut out = String::new();
        for (name, addr) in syms {
            let _ = writeln!(out, "sym {name} {addr}");
        }
        out
    }

    /// `mem <addr> <word>` lines for every non-zero word.
    pub fn mem_lines(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            if !w.is_zero() {
                let _ = writeln!(out, "mem {} {w}", self.base + i as u64);
            }
        }
        out
    }

    /// Human-readable listing with disassembly of integer words.
    pub fn listing(&self) -> String {
        let mut labels: BTreeMap<Addr, Vec<&str>> = BTreeMap::new();
        for (name, addr) in &self.symbols {
            labels.entry(*addr).or_default().push(name);
        }
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            let addr = self.base + i as u64;
            for l in labels.get(&addr).into_iter().flatten() {
                let _ = writeln!(out, "{l}:");
            }
            let text = match w {
                Word::Int(z) => disassemble(z),
                other => other.to_string(),
            };
            let _ = writeln!(out, "  {addr:>6}  {text}");
        }
        out
    }
}

/// The instructions of `assert a b flag`. Position independent.
pub fn expand_assert(a: Operand, b: Operand, flag: RegName) -> Vec<Instr> {
    let (t, d) = (RegName::r(30), RegName::r(31));
    vec![
        Instr::Sub(d, a, b),
        Instr::Mov(t, Operand::Reg(RegName::PC)),
        Instr::Lea(t, Operand::imm(6)),
        Instr::Jnz(t, d),
        Instr::Mov(t, Operand::Reg(RegName::PC)),
        Instr::Lea(t, Operand::imm(5)),
        Instr::Jmp(t),
        Instr::Store(flag, Operand::imm(1)),
        Instr::Halt,
    ]
}

/// Parses a single instruction with literal operands, as printed by the
/// disassembler.
pub fn parse_instr(text: &str) -> Result<Instr, String> {
    let line = parse_line(text)?;
    match line.stmt {
        Some(Stmt::Instr { opcode, args }) if line.labels.is_empty() => {
            let ops = args
                .into_iter()
                .map(|a| match a {
                    Arg::Reg(r) => Ok(Operand::Reg(r)),
                    Arg::Expr(e) => eval(&e, 0, &BTreeMap::new(), &Env::new()).map(Operand::Imm),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|name| format!("unresolved symbol `{name}`"))?;
            Instr::from_parts(opcode, ops).ok_or_else(|| "malformed instruction".to_string())
        }
        _ => Err(format!("not a single instruction: `{text}`")),
    }
}

/// Evaluates an expression; the error is the first unresolved symbol.
fn eval(e: &Expr, here: Addr, labels: &BTreeMap<String, Addr>, env: &Env) -> Result<BigInt, String> {
    let mut acc = BigInt::default();
    for (neg, term) in &e.0 {
        let v = match term {
            Term::Num(z) => z.clone(),
            Term::Here => BigInt::from(here),
            Term::Sym(s) => match (labels.get(s), env.get(s)) {
                (Some(a), _) => BigInt::from(*a),
                (None, Some(z)) => z.clone(),
                (None, None) => return Err(s.clone()),
            },
        };
        if *neg {
            acc -= v;
        } else {
            acc += v;
        }
    }
    Ok(acc)
}

/// Assembles with the default address space.
pub fn assemble(src: &str, base: Addr, env: &Env) -> Result<ProgramImage, AsmError> {
    assemble_with(src, base, env, crate::machine::Config::default().addr_max)
}

type Placed = Vec<(usize, Addr, u64, Stmt)>;

/// Pass 1: parses, sizes and places every item. Only `.zero` counts are
/// evaluated, against `env` alone.
fn place(
    src: &str,
    base: Addr,
    env: &Env,
    addr_max: Addr,
) -> Result<(Placed, BTreeMap<String, Addr>, Addr), AsmError> {
    let mut items: Placed = Vec::new();
    let mut labels: BTreeMap<String, Addr> = BTreeMap::new();
    let mut addr = base;
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let parsed = parse_line(raw).map_err(|msg| AsmError::Parse { line, msg })?;
        for label in parsed.labels {
            if labels.insert(label.clone(), addr).is_some() {
                return Err(AsmError::DuplicateLabel { line, label });
            }
        }
        let Some(stmt) = parsed.stmt else { continue };
        let size = match &stmt {
            Stmt::Zero(e) => {
                let n = eval(e, addr, &BTreeMap::new(), env)
                    .map_err(|name| AsmError::Unresolved { line, name })?;
                n.to_u64().ok_or_else(|| AsmError::OutOfRange {
                    line,
                    msg: format!("bad `.zero` count {n}"),
                })?
            }
            other => other.fixed_size().expect("only .zero is variable"),
        };
        let next = addr.checked_add(size).filter(|n| size == 0 || *n - 1 <= addr_max);
        let Some(next) = next else {
            return Err(AsmError::OutOfRange {
                line,
                msg: format!("image exceeds the address space (max {addr_max})"),
            });
        };
        items.push((line, addr, size, stmt));
        addr = next;
    }
    if base > addr_max && addr > base {
        return Err(AsmError::OutOfRange { line: 1, msg: format!("base {base} beyond {addr_max}") });
    }
    Ok((items, labels, addr))
}

/// Length in words and labels of `src` placed at `base`, without resolving
/// any operand.
pub fn layout(
    src: &str,
    base: Addr,
    env: &Env,
    addr_max: Addr,
) -> Result<(u64, BTreeMap<String, Addr>), AsmError> {
    let (_, labels, end) = place(src, base, env, addr_max)?;
    Ok((end - base, labels))
}

/// Assembles `src` at `base`; the image must lie within `[0, addr_max]`.
pub fn assemble_with(
    src: &str,
    base: Addr,
    env: &Env,
    addr_max: Addr,
) -> Result<ProgramImage, AsmError> {
    let (items, labels, addr) = place(src, base, env, addr_max)?;

    // pass 2: evaluate and encode
    let mut words = Vec::with_capacity((addr - base) as usize);
    for (line, here, size, stmt) in items {
        let ev = |e: &Expr| eval(e, here, &labels, env).map_err(|name| AsmError::Unresolved { line, name });
        let field = |e: &Expr, max: u64| -> Result<u64, AsmError> {
            let z = ev(e)?;
            z.to_u64().filter(|v| *v <= max).ok_or_else(|| AsmError::OutOfRange {
                line,
                msg: format!("field {z} outside [0, {max}]"),
            })
        };
        let arg = |a: &Arg| -> Result<Operand, AsmError> {
            match a {
                Arg::Reg(r) => Ok(Operand::Reg(*r)),
                Arg::Expr(e) => ev(e).map(Operand::Imm),
            }
        };
        match &stmt {
            Stmt::Instr { opcode, args } => {
                let ops = args.iter().map(arg).collect::<Result<Vec<_>, _>>()?;
                let instr = Instr::from_parts(*opcode, ops).expect("slots checked by the parser");
                words.push(Word::Int(encode(&instr)));
            }
            Stmt::Adr { rd, target } => {
                let offset = ev(target)? - BigInt::from(here);
                words.push(Word::Int(encode(&Instr::Mov(*rd, Operand::Reg(RegName::PC)))));
                words.push(Word::Int(encode(&Instr::Lea(*rd, Operand::Imm(offset)))));
            }
            Stmt::Assert { a, b, flag } => {
                for i in expand_assert(arg(a)?, arg(b)?, *flag) {
                    words.push(Word::Int(encode(&i)));
                }
            }
            Stmt::Word(e) => words.push(Word::Int(ev(e)?)),
            Stmt::Cap(p, [b, e, a]) => words.push(Word::Cap(Cap::new(
                *p,
                field(b, addr_max)?,
                field(e, addr_max)?,
                field(a, addr_max)?,
            ))),
            Stmt::SRange(p, [b, e, a]) => words.push(Word::SRange(SealRange::new(
                *p,
                field(b, u64::MAX)?,
                field(e, u64::MAX)?,
                field(a, u64::MAX)?,
            ))),
            Stmt::Zero(_) => words.extend((0..size).map(|_| Word::default())),
        }
    }
    Ok(ProgramImage { base, words, symbols: labels })
}
