mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cerisier::cases::{self, Case};
use cerisier::harness::{
    campaign, generate, monitor_step, run_system, BreachKind, CampaignConfig, Mode, MonitorLevel,
    Profile,
};
use cerisier::isa::{decode, Cap, Instr, Perm, RegName, SealPerm, SealRange, Word};
use cerisier::machine::{Config, MachineState, Status};

fn profile(case: Case) -> (cerisier::loader::SystemImage, Profile) {
    let (image, _) = case.build().unwrap();
    let p = Profile::of(&image).unwrap();
    (image, p)
}

#[test]
fn same_seed_same_program() {
    let (_, p) = profile(Case::Soc);
    for mode in Mode::ALL {
        for seed in 0..50 {
            let a = generate(&mut ChaCha8Rng::seed_from_u64(seed), &p, mode);
            let b = generate(&mut ChaCha8Rng::seed_from_u64(seed), &p, mode);
            assert_eq!(a, b);
            assert!(!a.words.is_empty());
            assert!(a.words.len() as u64 <= p.adversary_size);
        }
    }
}

#[test]
fn profiles_find_enclaves_and_heap() {
    let (_, soc) = profile(Case::Soc);
    assert_eq!(soc.enclaves, vec![(RegName::r(2), RegName::r(3))]);
    assert_eq!(soc.heap, Some(RegName::r(7)));
    let (_, mutual) = profile(Case::Mutual);
    assert_eq!(mutual.enclaves.len(), 2);
}

#[test]
fn boundary_immediates_are_offered() {
    let (image, p) = profile(Case::Soc);
    for v in [0u64, 2 * image.ec, image.config.otype_max, image.config.addr_max] {
        assert!(p.boundaries.contains(&v.into()), "{v} missing");
    }
}

#[test]
fn templates_reach_einit() {
    let (image, p) = profile(Case::Soc);
    let base = image.initial_state();
    let mut reached = 0;
    for seed in 0..1000 {
        let adv = generate(&mut ChaCha8Rng::seed_from_u64(seed), &p, Mode::Template);
        let mut s = base.clone();
        adv.install(&p, &mut s);
        for _ in 0..10_000 {
            if s.status != Status::Running {
                break;
            }
            let einit = s.fetch().map(decode).is_some_and(|i| matches!(i, Instr::EInit(..)));
            if einit {
                reached += 1;
                break;
            }
            s.step();
        }
    }
    assert!(reached >= 900, "einit reached in {reached}/1000 runs");
}

#[test]
fn intended_runs_have_no_violations() {
    for case in Case::ALL {
        for level in [MonitorLevel::Cheap, MonitorLevel::Instrumented] {
            let run = cases::run_case(case, level);
            assert!(run.report.breaches.is_empty(), "{case}: {:?}", run.report.breaches);
        }
    }
}

#[test]
fn broken_client_sets_the_flag() {
    let files = |name: &str| {
        let text = cases::resolver(name)?;
        Some(if name == "soc_client.casm" { text.replace("assert r1 42", "assert r1 41") } else { text })
    };
    let (image, state) = cerisier::loader::load(Case::Soc.spec(), &files).unwrap();
    let (report, _) = run_system(&image, state, 50_000, MonitorLevel::Cheap, None);
    assert_eq!(report.assert_flag, 1);
    assert!(report.is_failure());
    assert_eq!(report.outcome.name(), "Halted");
}

#[test]
fn campaign_lines_are_sorted_and_summarised() {
    let (image, _) = Case::Soc.build().unwrap();
    let cfg = CampaignConfig { runs: 30, seed: 10, fuel: 2_000, ..Default::default() };
    let c = campaign(&image, &cfg).unwrap();
    let text = c.render(false);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 31);
    assert!(lines[0].starts_with("seed=10 outcome="));
    assert!(lines[29].starts_with("seed=39 "));
    assert_eq!(lines[30], "SUMMARY runs=30 failures=0");
    let tsv = c.render(true);
    assert!(tsv.starts_with("seed\toutcome\tsteps\tflag\tviolations\n10\t"));
}

fn small_state() -> MachineState {
    let mut s = MachineState::new(Config { addr_max: 63, otype_max: 15, ..Config::default() });
    s.set_reg(RegName::PC, Word::Cap(Cap::new(Perm::RX, 0, 8, 0)));
    s.set_reg(RegName::r(1), Word::Cap(Cap::new(Perm::RW, 16, 24, 16)));
    s
}

#[test]
fn widened_subseg_is_forged() {
    let pre = small_state();
    let mut post = pre.clone();
    post.set_reg(RegName::r(1), Word::Cap(Cap::new(Perm::RW, 16, 30, 16)));
    let breaches = monitor_step(&pre, &post);
    assert!(breaches.iter().any(|b| matches!(b.kind, BreachKind::Forged(_))), "{breaches:?}");

    let mut shrunk = pre.clone();
    shrunk.set_reg(RegName::r(1), Word::Cap(Cap::new(Perm::RO, 18, 20, 19)));
    assert_eq!(monitor_step(&pre, &shrunk), vec![]);
}

#[test]
fn unminted_seal_range_is_stale() {
    let mut pre = small_state();
    pre.ec = 1;
    let mut post = pre.clone();
    post.set_reg(RegName::r(2), Word::SRange(SealRange::new(SealPerm::SU, 2, 4, 2)));
    let breaches = monitor_step(&pre, &post);
    assert!(breaches.iter().any(|b| matches!(b.kind, BreachKind::Stale(_))), "{breaches:?}");
    assert!(breaches.iter().any(|b| matches!(b.kind, BreachKind::Forged(_))), "{breaches:?}");
}

#[test]
fn counter_and_table_checks() {
    let mut pre = small_state();
    pre.ec = 2;
    let mut post = pre.clone();
    post.ec = 1;
    post.etbl.insert(1, 5.into());
    let kinds: Vec<BreachKind> = monitor_step(&pre, &post).into_iter().map(|b| b.kind).collect();
    assert!(kinds.contains(&BreachKind::CounterDecreased));
    assert!(kinds.contains(&BreachKind::TableIndexOutOfRange(1)));
}
