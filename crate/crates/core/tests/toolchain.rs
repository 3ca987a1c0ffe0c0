use std::collections::BTreeMap;

use num_bigint::BigInt;

use cerisier::assembler::{assemble, AsmError, Env};
use cerisier::cases::{self, Case};
use cerisier::isa::{decode, Instr, Operand, RegName, Word};
use cerisier::loader::{self, LoadError, Violation};
use cerisier::machine::{measure_identity, HashMode, Status};

const COUNTDOWN: &str = "
start:
    mov r1 3
loop:
    sub r1 r1 1
    jnz r2 r1        ; r2 set by the caller
    halt
data: .word loop - start
";

#[test]
fn labels_and_expressions_resolve() {
    let img = assemble(COUNTDOWN, 100, &Env::new()).unwrap();
    assert_eq!(img.base, 100);
    assert_eq!(img.symbols["loop"], 101);
    assert_eq!(img.symbols["data"], 104);
    assert_eq!(img.words[4], Word::int(1));
    let Word::Int(z) = &img.words[0] else { panic!() };
    assert_eq!(decode(z), Instr::Mov(RegName::r(1), Operand::imm(3)));
    assert!(img.listing().contains("loop:"));
    assert!(img.symbol_map().starts_with("sym start 100\n"));
}

#[test]
fn assembly_is_position_dependent_only_through_labels() {
    let a = assemble(COUNTDOWN, 0, &Env::new()).unwrap();
    let b = assemble(COUNTDOWN, 500, &Env::new()).unwrap();
    assert_eq!(a.words, b.words);
}

#[test]
fn env_constants_are_visible() {
    let mut env: Env = BTreeMap::new();
    env.insert("other.base".into(), BigInt::from(2048));
    let img = assemble(".word other.base + 2", 0, &env).unwrap();
    assert_eq!(img.words, vec![Word::int(2050)]);
}

#[test]
fn errors_carry_line_numbers() {
    let err = assemble("halt\nmov r1", 0, &Env::new()).unwrap_err();
    assert!(matches!(err, AsmError::Parse { line: 2, .. }), "{err}");
    let err = assemble("a: halt\na: halt", 0, &Env::new()).unwrap_err();
    assert!(matches!(err, AsmError::DuplicateLabel { line: 2, .. }));
    let err = assemble("halt\n\njmp r1\n.word nowhere", 0, &Env::new()).unwrap_err();
    assert_eq!(err.line(), 4);
    assert!(matches!(err, AsmError::Unresolved { .. }));
}

#[test]
fn assert_macro_sets_the_flag_only_on_mismatch() {
    let src = |v: i64| {
        format!(
            "start: mov r1 {v}\n adr r10 flagcap\n load r10 r10\n assert r1 42 r10\n mov r2 7\n halt\n\
             flagcap: .cap rw:flag:flag+1:flag\nflag: .word 0\n"
        )
    };
    for (v, flag) in [(42, 0), (41, 1)] {
        let spec = "config addrmax=255 otypemax=15\nregion client 0 rwx t.casm client\nentry pc client@start\nflag client.flag\n";
        let text = src(v);
        let resolver = |name: &str| (name == "t.casm").then(|| text.clone());
        let (image, mut s) = loader::load(spec, &resolver).unwrap();
        s.run(1000);
        assert_eq!(s.status, Status::Halted);
        let flag_addr = image.flag_addr.unwrap();
        assert_eq!(s.mem.get(flag_addr), &Word::int(flag));
        let r2_set = s.reg(RegName::r(2)) == &Word::int(7);
        assert_eq!(r2_set, flag == 0, "a passing assert falls through");
    }
}

#[test]
fn overlapping_regions_are_rejected() {
    let spec = "region a 0 rwx zeros:16 client\nregion b 8 rw zeros:16 data\n";
    let err = loader::load(spec, &|_: &str| None).unwrap_err();
    let LoadError::IllFormed(vs) = err else { panic!("{err}") };
    assert!(vs.contains(&Violation::RegionOverlap("a".into(), "b".into())));
}

#[test]
fn client_memory_must_stay_private() {
    let spec = "region client 0 rwx zeros:16 client\nregion adversary 64 rwx zeros:16 adversary\n\
                entry pc client\ngrant r1 client\n";
    let err = loader::load(spec, &|_: &str| None).unwrap_err();
    let LoadError::IllFormed(vs) = err else { panic!("{err}") };
    assert!(vs.iter().any(|v| matches!(v, Violation::ClientExposed(_))), "{vs:?}");
}

#[test]
fn spec_errors_name_the_line() {
    let err = loader::load("config addrmax=255\nregion x nowhere\n", &|_: &str| None).unwrap_err();
    assert!(matches!(err, LoadError::Spec { line: 2, .. }), "{err}");
    let err = loader::load("region x 0 rwx missing.casm client\n", &|_: &str| None).unwrap_err();
    assert!(matches!(err, LoadError::Missing(_)));
}

#[test]
fn identity_constants_match_the_measurement() {
    for case in Case::ALL {
        let (image, state) = case.build().unwrap();
        for r in image.with_role("enclave") {
            let measured = measure_identity(r.base, state.mem.range(r.base + 1, r.end()), HashMode::Exact);
            assert_eq!(measured, image.env[&format!("{}.id", r.name)], "{}", r.name);
        }
    }
}

#[test]
fn embedded_cases_resolve_every_unit() {
    for (name, _) in cases::FILES {
        assert!(cases::resolver(name).is_some());
    }
    assert!(cases::resolver("nope.casm").is_none());
}
