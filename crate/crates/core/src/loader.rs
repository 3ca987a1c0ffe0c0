//! System specs: memory layout, initial registers and identity constants.
//!
//! A spec is a line-oriented text file:
//!
//! ```text
//! config addrmax=<n> otypemax=<n> [ec=<n>] [hash=exact|digest]
//! region <name> <base> <perm> <file.casm|zeros:<n>> [role] [size=<n>]
//! grant <reg> <cap-spec>
//! entry pc <cap-spec>
//! flag <addr|region.label>
//! etbl <tidx> <identity>
//! ```
//!
//! A cap-spec is either a literal word (`cap:rw:0:4:0`) or
//! `[perm:]region[@label]`, the whole region with the region's permission
//! unless overridden and the cursor at `label` (default: the base).
//!
//! Units see the constants `X.base`, `X.end`, `X.id`, `X.preid` and `X.label`
//! for every region `X`. `X.id` is the identity `einit` would measure for the
//! whole region; `X.preid` hashes the words after the data-capability slot up
//! to the label `idtable` (or the end). Both are found by iterating assembly
//! until the constants stop changing.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::assembler::{self, layout, AsmError, Env, ProgramImage};
use crate::isa::{Addr, Cap, Perm, RegName, Word};
use crate::machine::{int_of_hash, measure_identity, region_hash, Config, HashMode, MachineState};

/// Region roles with a meaning to the loader and harness.
pub const ROLE_CLIENT: &str = "client";
pub const ROLE_ADVERSARY: &str = "adversary";

const RESERVED_SUFFIXES: [&str; 4] = ["base", "end", "id", "preid"];
const FIXPOINT_ROUNDS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    File(String),
    Zeros(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSpec {
    pub name: String,
    pub base: Addr,
    pub perm: Perm,
    pub source: Source,
    pub role: String,
    pub size: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CapSpec {
    Literal(Word),
    Region { perm: Option<Perm>, region: String, label: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlagSpec {
    Addr(Addr),
    Symbol(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemSpec {
    pub config: Config,
    pub ec: u64,
    pub regions: Vec<RegionSpec>,
    pub grants: Vec<(RegName, CapSpec)>,
    pub entry: Option<CapSpec>,
    pub flag: Option<FlagSpec>,
    pub etbl: Vec<(u64, BigInt)>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("spec line {line}: {msg}")]
    Spec { line: usize, msg: String },
    #[error("{unit}: {source}")]
    Asm { unit: String, source: AsmError },
    #[error("cannot read `{0}`")]
    Missing(String),
    #[error("identity constants do not converge (cyclic `.identity` references?)")]
    Cyclic,
    #[error("ill-formed system:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    IllFormed(Vec<Violation>),
}

/// A failed well-formedness condition on an initial state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    RegionOverlap(String, String),
    OutsideAddressSpace(String),
    FlagOutsideClient(Addr),
    FlagNotZero(Addr),
    /// A capability outside the client can reach client memory.
    ClientExposed(String),
    EntryNotExecutable,
    StaleSealRange(String),
    StaleSealed(String),
    TableIndexOutOfRange(u64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RegionOverlap(a, b) => write!(f, "regions `{a}` and `{b}` overlap"),
            Violation::OutsideAddressSpace(r) => write!(f, "region `{r}` leaves the address space"),
            Violation::FlagOutsideClient(a) => write!(f, "flag address {a} is not in a client region"),
            Violation::FlagNotZero(a) => write!(f, "flag address {a} is not initially 0"),
            Violation::ClientExposed(loc) => write!(f, "{loc} reaches client memory"),
            Violation::EntryNotExecutable => write!(f, "pc does not hold an executable capability"),
            Violation::StaleSealRange(loc) => write!(f, "{loc} holds a seal range over unallocated otypes"),
            Violation::StaleSealed(loc) => write!(f, "{loc} holds a word sealed under an unallocated otype"),
            Violation::TableIndexOutOfRange(t) => write!(f, "enclave table index {t} is not below ec"),
        }
    }
}

/// A placed region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub role: String,
    pub perm: Perm,
    pub base: Addr,
    pub size: u64,
    /// The assembled words, padded with zeros to `size`.
    pub image: ProgramImage,
}

impl Region {
    pub fn end(&self) -> Addr {
        self.base + self.size
    }

    pub fn contains(&self, a: Addr) -> bool {
        self.base <= a && a < self.end()
    }

    pub fn cap(&self) -> Cap {
        Cap::new(self.perm, self.base, self.end(), self.base)
    }
}

/// The linked system: regions, register grants and the assert flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemImage {
    pub config: Config,
    pub ec: u64,
    pub regions: Vec<Region>,
    pub regs: Vec<(RegName, Word)>,
    pub flag_addr: Option<Addr>,
    pub etbl: Vec<(u64, BigInt)>,
    /// Constants every unit was assembled against.
    pub env: Env,
}

impl SystemImage {
    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn with_role<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a Region> + 'a {
        self.regions.iter().filter(move |r| r.role == role)
    }

    pub fn adversary(&self) -> Option<&Region> {
        self.with_role(ROLE_ADVERSARY).next()
    }

    /// The state this image describes.
    pub fn initial_state(&self) -> MachineState {
        let mut s = MachineState::new(self.config);
        for r in &self.regions {
            for (i, w) in r.image.words.iter().enumerate() {
                s.mem.set(r.base + i as u64, w.clone());
            }
        }
        for (r, w) in &self.regs {
            s.set_reg(*r, w.clone());
        }
        s.ec = self.ec;
        s.etbl = self.etbl.iter().cloned().collect();
        s
    }
}

fn spec_err(line: usize, msg: impl Into<String>) -> LoadError {
    LoadError::Spec { line, msg: msg.into() }
}

fn parse_cap_spec(s: &str) -> Result<CapSpec, String> {
    let head = s.split(':').next().unwrap_or("");
    if matches!(head, "int" | "cap" | "srange" | "sealed") {
        return s.parse().map(CapSpec::Literal).map_err(|e| e.to_string());
    }
    let (perm, rest) = match s.split_once(':') {
        Some((p, rest)) => {
            (Some(Perm::from_name(p).ok_or_else(|| format!("unknown permission `{p}`"))?), rest)
        }
        None => (None, s),
    };
    let (region, label) = match rest.split_once('@') {
        Some((r, l)) => (r.to_string(), Some(l.to_string())),
        None => (rest.to_string(), None),
    };
    if region.is_empty() {
        return Err(format!("bad capability spec `{s}`"));
    }
    Ok(CapSpec::Region { perm, region, label })
}

fn parse_u64(s: &str, line: usize) -> Result<u64, LoadError> {
    s.parse().map_err(|_| spec_err(line, format!("expected a number, found `{s}`")))
}

impl SystemSpec {
    pub fn parse(text: &str) -> Result<SystemSpec, LoadError> {
        let mut spec = SystemSpec {
            config: Config::default(),
            ec: 0,
            regions: Vec::new(),
            grants: Vec::new(),
            entry: None,
            flag: None,
            etbl: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("");
            let toks: Vec<&str> = content.split_whitespace().collect();
            let Some((&kw, args)) = toks.split_first() else { continue };
            match kw {
                "config" => {
                    for a in args {
                        let (k, v) = a.split_once('=').ok_or_else(|| spec_err(line, format!("bad setting `{a}`")))?;
                        match k {
                            "addrmax" => spec.config.addr_max = parse_u64(v, line)?,
                            "otypemax" => spec.config.otype_max = parse_u64(v, line)?,
                            "ec" => spec.ec = parse_u64(v, line)?,
                            "hash" => {
                                spec.config.hash_mode = HashMode::from_name(v)
                                    .ok_or_else(|| spec_err(line, format!("unknown hash mode `{v}`")))?
                            }
                            _ => return Err(spec_err(line, format!("unknown setting `{k}`"))),
                        }
                    }
                }
                "region" => {
                    if args.len() < 4 {
                        return Err(spec_err(line, "usage: region <name> <base> <perm> <source> [role] [size=<n>]"));
                    }
                    let name = args[0].to_string();
                    if !assembler::is_ident(&name) || name.contains('.') {
                        return Err(spec_err(line, format!("bad region name `{name}`")));
                    }
                    let base = parse_u64(args[1], line)?;
                    let perm = Perm::from_name(args[2])
                        .ok_or_else(|| spec_err(line, format!("unknown permission `{}`", args[2])))?;
                    let source = match args[3].strip_prefix("zeros:") {
                        Some(n) => Source::Zeros(parse_u64(n, line)?),
                        None => Source::File(args[3].to_string()),
                    };
                    let mut role = "data".to_string();
                    let mut size = None;
                    for a in &args[4..] {
                        match a.strip_prefix("size=") {
                            Some(n) => size = Some(parse_u64(n, line)?),
                            None => role = a.to_string(),
                        }
                    }
                    if spec.regions.iter().any(|r| r.name == name) {
                        return Err(spec_err(line, format!("duplicate region `{name}`")));
                    }
                    spec.regions.push(RegionSpec { name, base, perm, source, role, size });
                }
                "grant" | "entry" => {
                    let [reg, cap] = args else {
                        return Err(spec_err(line, format!("usage: {kw} <reg> <cap-spec>")));
                    };
                    let reg: RegName = reg.parse().map_err(|()| spec_err(line, format!("bad register `{reg}`")))?;
                    let cap = parse_cap_spec(cap).map_err(|m| spec_err(line, m))?;
                    if kw == "entry" || reg.is_pc() {
                        if !reg.is_pc() {
                            return Err(spec_err(line, "entry must target pc"));
                        }
                        spec.entry = Some(cap);
                    } else {
                        spec.grants.push((reg, cap));
                    }
                }
                "flag" => {
                    let [f] = args else { return Err(spec_err(line, "usage: flag <addr|region.label>")) };
                    spec.flag = Some(match f.parse() {
                        Ok(a) => FlagSpec::Addr(a),
                        Err(_) => FlagSpec::Symbol(f.replace('@', ".")),
                    });
                }
                "etbl" => {
                    let [t, id] = args else { return Err(spec_err(line, "usage: etbl <tidx> <identity>")) };
                    let id = id.parse().map_err(|_| spec_err(line, format!("bad identity `{id}`")))?;
                    spec.etbl.push((parse_u64(t, line)?, id));
                }
                _ => return Err(spec_err(line, format!("unknown directive `{kw}`"))),
            }
        }
        Ok(spec)
    }
}

/// Loads `.casm` sources referenced by a spec.
pub trait Resolver {
    fn source(&self, name: &str) -> Option<String>;
}

impl<F: Fn(&str) -> Option<String>> Resolver for F {
    fn source(&self, name: &str) -> Option<String> {
        self(name)
    }
}

fn identity_constants(r: &Region, mode: HashMode) -> (BigInt, BigInt) {
    let words = &r.image.words;
    let id = measure_identity(r.base, words.iter().skip(1), mode);
    let table = r
        .image
        .symbols
        .get("idtable")
        .map(|a| (a - r.base) as usize)
        .unwrap_or(words.len());
    let preid = int_of_hash(&region_hash(words.get(1..table.max(1)).unwrap_or(&[]), mode));
    (id, preid)
}

fn resolve_cap(spec: &CapSpec, regions: &[Region], env: &Env) -> Result<Word, String> {
    match spec {
        CapSpec::Literal(w) => Ok(w.clone()),
        CapSpec::Region { perm, region, label } => {
            let r = regions
                .iter()
                .find(|r| &r.name == region)
                .ok_or_else(|| format!("unknown region `{region}`"))?;
            let cursor = match label {
                None => r.base,
                Some(l) => {
                    let key = format!("{region}.{l}");
                    let z = env.get(&key).ok_or_else(|| format!("unknown label `{key}`"))?;
                    u64::try_from(z).map_err(|_| format!("bad address for `{key}`"))?
                }
            };
            Ok(Word::Cap(Cap::new(perm.unwrap_or(r.perm), r.base, r.end(), cursor)))
        }
    }
}

/// Lays out, assembles and links a system, then checks it is well formed.
pub fn build(spec: &SystemSpec, resolver: &dyn Resolver) -> Result<(SystemImage, MachineState), LoadError> {
    let addr_max = spec.config.addr_max;
    let mode = spec.config.hash_mode;
    let mut sources = BTreeMap::new();
    for r in &spec.regions {
        if let Source::File(f) = &r.source {
            let text = resolver.source(f).ok_or_else(|| LoadError::Missing(f.clone()))?;
            sources.insert(r.name.clone(), text);
        }
    }

    // layout: sizes and labels
    let mut env = Env::new();
    for r in &spec.regions {
        env.insert(format!("{}.base", r.name), r.base.into());
        if let Some(n) = r.size {
            env.insert(format!("{}.end", r.name), (r.base + n).into());
        }
    }
    let mut sizes = BTreeMap::new();
    for r in &spec.regions {
        let len = match &r.source {
            Source::Zeros(n) => *n,
            Source::File(_) => {
                let (len, labels) = layout(&sources[&r.name], r.base, &env, addr_max)
                    .map_err(|source| LoadError::Asm { unit: r.name.clone(), source })?;
                for (l, a) in labels {
                    if RESERVED_SUFFIXES.contains(&l.as_str()) {
                        return Err(LoadError::Asm {
                            unit: r.name.clone(),
                            source: AsmError::Parse { line: 0, msg: format!("label `{l}` is reserved") },
                        });
                    }
                    env.insert(format!("{}.{l}", r.name), a.into());
                }
                len
            }
        };
        let size = r.size.unwrap_or(len);
        if len > size {
            return Err(spec_err(0, format!("region `{}` needs {len} words but has size {size}", r.name)));
        }
        env.insert(format!("{}.end", r.name), (r.base + size).into());
        sizes.insert(r.name.clone(), size);
    }
    for r in &spec.regions {
        env.insert(format!("{}.id", r.name), BigInt::default());
        env.insert(format!("{}.preid", r.name), BigInt::default());
    }

    // assemble until identity constants are stable
    let mut regions = Vec::new();
    let mut stable = false;
    for _ in 0..FIXPOINT_ROUNDS {
        regions.clear();
        for r in &spec.regions {
            let size = sizes[&r.name];
            let mut image = match &r.source {
                Source::Zeros(_) => ProgramImage { base: r.base, words: Vec::new(), symbols: BTreeMap::new() },
                Source::File(_) => assembler::assemble_with(&sources[&r.name], r.base, &env, addr_max)
                    .map_err(|source| LoadError::Asm { unit: r.name.clone(), source })?,
            };
            image.words.resize(size as usize, Word::default());
            regions.push(Region {
                name: r.name.clone(),
                role: r.role.clone(),
                perm: r.perm,
                base: r.base,
                size,
                image,
            });
        }
        let mut changed = false;
        for r in &regions {
            let (id, preid) = identity_constants(r, mode);
            for (key, v) in [(format!("{}.id", r.name), id), (format!("{}.preid", r.name), preid)] {
                if env.get(&key) != Some(&v) {
                    env.insert(key, v);
                    changed = true;
                }
            }
        }
        if !changed {
            stable = true;
            break;
        }
    }
    if !stable {
        return Err(LoadError::Cyclic);
    }

    let mut regs = Vec::new();
    if let Some(entry) = &spec.entry {
        regs.push((RegName::PC, resolve_cap(entry, &regions, &env).map_err(|m| spec_err(0, m))?));
    }
    for (r, c) in &spec.grants {
        regs.push((*r, resolve_cap(c, &regions, &env).map_err(|m| spec_err(0, m))?));
    }
    let flag_addr = match &spec.flag {
        None => None,
        Some(FlagSpec::Addr(a)) => Some(*a),
        Some(FlagSpec::Symbol(s)) => {
            let z = env.get(s).ok_or_else(|| spec_err(0, format!("unknown flag symbol `{s}`")))?;
            Some(u64::try_from(z).map_err(|_| spec_err(0, format!("bad flag address `{s}`")))?)
        }
    };
    let image = SystemImage {
        config: spec.config,
        ec: spec.ec,
        regions,
        regs,
        flag_addr,
        etbl: spec.etbl.clone(),
        env,
    };
    let state = image.initial_state();
    let violations = check_wellformed(&state, &image);
    if !violations.is_empty() {
        return Err(LoadError::IllFormed(violations));
    }
    Ok((image, state))
}

/// Parses and builds a spec in one go.
pub fn load(text: &str, resolver: &dyn Resolver) -> Result<(SystemImage, MachineState), LoadError> {
    build(&SystemSpec::parse(text)?, resolver)
}

/// Every condition a good initial state must meet, as data.
pub fn check_wellformed(s: &MachineState, image: &SystemImage) -> Vec<Violation> {
    let mut out = Vec::new();
    let regions = &image.regions;
    for (i, a) in regions.iter().enumerate() {
        if a.size > 0 && a.end() - 1 > s.config.addr_max {
            out.push(Violation::OutsideAddressSpace(a.name.clone()));
        }
        for b in &regions[i + 1..] {
            if a.base.max(b.base) < a.end().min(b.end()) {
                out.push(Violation::RegionOverlap(a.name.clone(), b.name.clone()));
            }
        }
    }

    let clients: Vec<&Region> = image.with_role(ROLE_CLIENT).collect();
    let in_client = |a: Addr| clients.iter().any(|r| r.contains(a));
    let reaches_client = |w: &Word| {
        w.address_interval()
            .is_some_and(|(b, e)| clients.iter().any(|r| b.max(r.base) < e.min(r.end())))
    };
    if let Some(f) = image.flag_addr {
        if !in_client(f) {
            out.push(Violation::FlagOutsideClient(f));
        }
        if !s.mem.get(f).is_zero() {
            out.push(Violation::FlagNotZero(f));
        }
    }
    for r in RegName::all().filter(|r| !r.is_pc()) {
        if reaches_client(s.reg(r)) {
            out.push(Violation::ClientExposed(format!("register {r}")));
        }
    }
    for (a, w) in s.mem.non_int() {
        if !in_client(a) && reaches_client(w) {
            out.push(Violation::ClientExposed(format!("memory cell {a}")));
        }
    }
    if !matches!(s.pc(), Word::Cap(c) if c.perm.executable() && c.in_bounds()) {
        out.push(Violation::EntryNotExecutable);
    }

    let fresh = 2 * s.ec;
    let locations = RegName::all()
        .map(|r| (format!("register {r}"), s.reg(r)))
        .chain(s.mem.non_int().map(|(a, w)| (format!("memory cell {a}"), w)));
    for (loc, w) in locations {
        match w {
            Word::SRange(sr) if sr.end > fresh => out.push(Violation::StaleSealRange(loc)),
            Word::Sealed(o, _) if *o >= fresh => out.push(Violation::StaleSealed(loc)),
            Word::Sealed(_, crate::isa::Sealable::SRange(sr)) if sr.end > fresh => {
                out.push(Violation::StaleSealRange(loc))
            }
            _ => {}
        }
    }
    for t in s.etbl.keys() {
        if *t >= s.ec {
            out.push(Violation::TableIndexOutOfRange(*t));
        }
    }
    out
}
