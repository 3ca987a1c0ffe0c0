//! Line-level parsing: labels, statements, operands and expressions.

use num_bigint::BigInt;
use num_traits::Num;

use crate::isa::{opcode_of_mnemonic, Perm, RegName, SealPerm, Slot};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Num(BigInt),
    /// `.`, the address of the current item.
    Here,
    Sym(String),
}

/// A sum of signed terms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr(pub Vec<(bool, Term)>);

impl Expr {
    pub fn num(z: impl Into<BigInt>) -> Expr {
        Expr(vec![(false, Term::Num(z.into()))])
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.0.iter().filter_map(|(_, t)| match t {
            Term::Sym(s) => Some(s.as_str()),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Arg {
    Reg(RegName),
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Instr { opcode: u8, args: Vec<Arg> },
    /// `adr rd target`: point `rd` at `target` using the pc.
    Adr { rd: RegName, target: Expr },
    /// `assert a b flag`: on `a ≠ b`, store 1 through `flag` and halt.
    Assert { a: Arg, b: Arg, flag: RegName },
    Word(Expr),
    Cap(Perm, [Expr; 3]),
    SRange(SealPerm, [Expr; 3]),
    Zero(Expr),
}

impl Stmt {
    /// Number of words the statement occupies, given the evaluated count for `.zero`.
    pub fn fixed_size(&self) -> Option<u64> {
        match self {
            Stmt::Instr { .. } | Stmt::Word(_) | Stmt::Cap(..) | Stmt::SRange(..) => Some(1),
            Stmt::Adr { .. } => Some(2),
            Stmt::Assert { .. } => Some(ASSERT_LEN),
            Stmt::Zero(_) => None,
        }
    }
}

/// Words produced by one `assert`.
pub const ASSERT_LEN: u64 = 9;

/// A parsed source line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Line {
    pub labels: Vec<String>,
    pub stmt: Option<Stmt>,
}

pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn perm_constant(name: &str) -> Option<i64> {
    if let Some(p) = Perm::from_name(name) {
        return Some(p.code());
    }
    SealPerm::from_name(name).map(SealPerm::code)
}

fn parse_number(s: &str) -> Option<BigInt> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return BigInt::from_str_radix(hex, 16).ok();
    }
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        return s.parse().ok();
    }
    None
}

fn parse_term(s: &str) -> Result<Term, String> {
    if s == "." {
        return Ok(Term::Here);
    }
    if let Some(p) = s.strip_prefix('#') {
        return perm_constant(&p.to_ascii_lowercase())
            .map(|c| Term::Num(c.into()))
            .ok_or_else(|| format!("unknown permission constant `{s}`"));
    }
    if let Some(z) = parse_number(s) {
        return Ok(Term::Num(z));
    }
    if is_ident(s) && s.parse::<RegName>().is_err() {
        return Ok(Term::Sym(s.to_string()));
    }
    Err(format!("bad expression term `{s}`"))
}

pub fn parse_expr(s: &str) -> Result<Expr, String> {
    let mut tokens: Vec<String> = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c == '+' || c == '-' || c.is_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    if tokens.is_empty() {
        return Err("empty expression".into());
    }
    let mut terms = Vec::new();
    let mut neg = false;
    let mut want_term = true;
    for t in &tokens {
        match (t.as_str(), want_term) {
            ("+", true) => {}
            ("-", true) => neg = !neg,
            ("+" | "-", false) => {
                neg = t == "-";
                want_term = true;
            }
            (_, true) => {
                terms.push((neg, parse_term(t)?));
                neg = false;
                want_term = false;
            }
            (_, false) => return Err(format!("missing operator in `{}`", s.trim())),
        }
    }
    if want_term {
        return Err(format!("dangling operator in `{}`", s.trim()));
    }
    Ok(Expr(terms))
}

fn parse_arg(s: &str) -> Result<Arg, String> {
    match s.trim().parse::<RegName>() {
        Ok(r) => Ok(Arg::Reg(r)),
        Err(()) => parse_expr(s).map(Arg::Expr),
    }
}

fn parse_reg(s: &str) -> Result<RegName, String> {
    s.trim().parse().map_err(|()| format!("expected a register, found `{}`", s.trim()))
}

/// Operands are separated by commas when any are present, else by whitespace.
fn split_operands(s: &str) -> Vec<&str> {
    let s = s.trim();
    if s.is_empty() {
        Vec::new()
    } else if s.contains(',') {
        s.split(',').map(str::trim).collect()
    } else {
        s.split_whitespace().collect()
    }
}

fn arity(name: &str, ops: &[&str], n: usize) -> Result<(), String> {
    if ops.len() == n {
        Ok(())
    } else {
        Err(format!("`{name}` takes {n} operand(s), found {}", ops.len()))
    }
}

fn parse_fields(name: &str, rest: &str) -> Result<(String, [Expr; 3]), String> {
    let parts: Vec<&str> = rest.trim().split(':').collect();
    if parts.len() != 4 {
        return Err(format!("`{name}` expects <perm>:<b>:<e>:<a>"));
    }
    Ok((
        parts[0].trim().to_ascii_lowercase(),
        [parse_expr(parts[1])?, parse_expr(parts[2])?, parse_expr(parts[3])?],
    ))
}

fn parse_stmt(text: &str) -> Result<Stmt, String> {
    let (head, rest) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], &text[i..]),
        None => (text, ""),
    };
    let name = head.to_ascii_lowercase();
    let ops = split_operands(rest);
    match name.as_str() {
        ".word" => Ok(Stmt::Word(parse_expr(rest)?)),
        ".identity" | ".preidentity" => {
            arity(&name, &ops, 1)?;
            if !is_ident(ops[0]) {
                return Err(format!("bad unit name `{}`", ops[0]));
            }
            let suffix = if name == ".identity" { "id" } else { "preid" };
            Ok(Stmt::Word(Expr(vec![(false, Term::Sym(format!("{}.{suffix}", ops[0])))])))
        }
        ".zero" => Ok(Stmt::Zero(parse_expr(rest)?)),
        ".cap" => {
            let (p, f) = parse_fields(&name, rest)?;
            let p = Perm::from_name(&p).ok_or_else(|| format!("unknown permission `{p}`"))?;
            Ok(Stmt::Cap(p, f))
        }
        ".srange" => {
            let (p, f) = parse_fields(&name, rest)?;
            let p = SealPerm::from_name(&p).ok_or_else(|| format!("unknown seal permission `{p}`"))?;
            Ok(Stmt::SRange(p, f))
        }
        "adr" => {
            arity(&name, &ops, 2)?;
            Ok(Stmt::Adr { rd: parse_reg(ops[0])?, target: parse_expr(ops[1])? })
        }
        "assert" => {
            arity(&name, &ops, 3)?;
            Ok(Stmt::Assert { a: parse_arg(ops[0])?, b: parse_arg(ops[1])?, flag: parse_reg(ops[2])? })
        }
        _ => {
            let (opcode, slots) =
                opcode_of_mnemonic(&name).ok_or_else(|| format!("unknown mnemonic `{head}`"))?;
            arity(&name, &ops, slots.len())?;
            let args = slots
                .iter()
                .zip(&ops)
                .map(|(slot, op)| match slot {
                    Slot::Reg => parse_reg(op).map(Arg::Reg),
                    Slot::Arg => parse_arg(op),
                })
                .collect::<Result<_, _>>()?;
            Ok(Stmt::Instr { opcode, args })
        }
    }
}

/// Parses one source line (without its line number).
pub fn parse_line(raw: &str) -> Result<Line, String> {
    let mut text = raw.split(';').next().unwrap_or("").trim();
    let mut line = Line::default();
    while let Some(first) = text.split_whitespace().next() {
        let Some(label) = first.strip_suffix(':') else { break };
        if !is_ident(label) || label.parse::<RegName>().is_ok() {
            return Err(format!("bad label `{label}`"));
        }
        line.labels.push(label.to_string());
        text = text[first.len()..].trim_start();
    }
    if !text.is_empty() {
        line.stmt = Some(parse_stmt(text)?);
    }
    Ok(line)
}
