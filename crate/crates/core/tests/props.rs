mod common;

use num_bigint::BigInt;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cerisier::isa::{
    decode, decode_checked, encode, slots_of_opcode, Cap, Instr, Operand, Perm, RegName, Slot, Word,
};
use cerisier::machine::{hash_concat, hash_word, region_hash, HashMode, Status};

fn operand(slot: Slot) -> BoxedStrategy<Operand> {
    let reg = (0..RegName::COUNT).prop_map(|i| Operand::Reg(RegName::from_index(i).unwrap()));
    match slot {
        Slot::Reg => reg.boxed(),
        Slot::Arg => prop_oneof![reg, any::<i64>().prop_map(Operand::imm)].boxed(),
    }
}

fn instr() -> impl Strategy<Value = Instr> {
    (1..=27u8).prop_flat_map(|op| {
        let (_, slots) = slots_of_opcode(op).unwrap();
        let ops: Vec<_> = slots.iter().map(|s| operand(*s)).collect();
        ops.prop_map(move |ops| Instr::from_parts(op, ops).unwrap())
    })
}

fn word() -> impl Strategy<Value = Word> {
    any::<u64>().prop_map(|seed| common::random_word(&mut ChaCha8Rng::seed_from_u64(seed), 64))
}

proptest! {
    #[test]
    fn encoding_round_trips(i in instr()) {
        let z = encode(&i);
        prop_assert!(z > BigInt::from(0));
        prop_assert_eq!(decode_checked(&z), Some(i.clone()));
        prop_assert_eq!(decode(&z), i);
    }

    #[test]
    fn decode_is_total(z in any::<i128>()) {
        let z = BigInt::from(z);
        match decode_checked(&z) {
            Some(i) => prop_assert_eq!(encode(&i), z),
            None => prop_assert_eq!(decode(&z), Instr::Fail),
        }
    }

    #[test]
    fn steps_never_panic(seed in any::<u64>(), i in instr()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, _) = common::random_small_state(&mut rng);
        let before = s.ec;
        s.exec(&i);
        prop_assert!(s.ec >= before);
        prop_assert!(s.etbl.keys().all(|k| *k < s.ec));
    }

    #[test]
    fn restrict_only_attenuates(b in 0u64..64, e in 0u64..65, a in 0u64..66, p in 0usize..6, q in 0i64..8) {
        let cap = Cap::new(Perm::ALL[p], b, e, a);
        let mut s = cerisier::machine::MachineState::new(Default::default());
        let r1 = RegName::r(1);
        s.set_reg(RegName::PC, Word::Cap(Cap::new(Perm::RX, 0, 100, 0)));
        s.set_reg(r1, Word::Cap(cap));
        s.exec(&Instr::Restrict(r1, Operand::imm(q)));
        if s.status == Status::Running {
            let Word::Cap(out) = s.reg(r1) else { panic!("restrict changed the kind") };
            prop_assert!(out.perm.flows_to(cap.perm));
            prop_assert_eq!((out.base, out.end, out.cursor), (b, e, a));
        }
    }

    #[test]
    fn subseg_only_shrinks(b in 0u64..64, e in 0u64..65, n1 in -4i64..70, n2 in -4i64..70) {
        let cap = Cap::new(Perm::RW, b, e, b);
        let mut s = cerisier::machine::MachineState::new(Default::default());
        let r1 = RegName::r(1);
        s.set_reg(RegName::PC, Word::Cap(Cap::new(Perm::RX, 0, 100, 0)));
        s.set_reg(r1, Word::Cap(cap));
        s.exec(&Instr::Subseg(r1, Operand::imm(n1), Operand::imm(n2)));
        if s.status == Status::Running {
            let Word::Cap(out) = s.reg(r1) else { panic!("subseg changed the kind") };
            prop_assert!(b <= out.base && out.end <= e);
            prop_assert_eq!(out.perm, cap.perm);
        }
    }

    #[test]
    fn hash_concat_is_associative(x in word(), y in word(), z in word()) {
        let m = HashMode::Exact;
        let (hx, hy, hz) = (hash_word(&x, m), hash_word(&y, m), hash_word(&z, m));
        prop_assert_eq!(
            hash_concat(&hash_concat(&hx, &hy), &hz),
            hash_concat(&hx, &hash_concat(&hy, &hz))
        );
    }

    #[test]
    fn region_hash_splits(ws in proptest::collection::vec(word(), 0..12), cut in 0usize..12) {
        let m = HashMode::Exact;
        let cut = cut.min(ws.len());
        prop_assert_eq!(
            region_hash(&ws, m),
            hash_concat(&region_hash(&ws[..cut], m), &region_hash(&ws[cut..], m))
        );
    }

    #[test]
    fn single_word_hashes_are_injective(x in word(), y in word()) {
        let m = HashMode::Exact;
        prop_assert_eq!(hash_word(&x, m) == hash_word(&y, m), x == y);
    }
}
