use std::collections::BTreeSet;

use num_bigint::BigUint;
use proptest::prelude::*;

use cpds::bundled::load;
use cpds::decide::witness_family;
use cpds::machine::collect_runs;
use cpds::par::Exec;
use cpds::pumping::{
    find_increasing_subseq, find_window, h_literal, iterate_pump, seq_constants, strictly_growing, verify_increasing,
    verify_window,
};
use cpds::run_classes::{classify_pumping, Cmp, Eps};
use cpds::tower::{Big, Decided};
use cpds::type_engine::TypeEngine;

/// A sequence whose steps go up by at most one, floored at `floor`.
fn stepped(floor: u64, start: u64, deltas: &[i64]) -> Vec<u64> {
    let mut a = vec![start.max(floor)];
    for &d in deltas {
        let v = (*a.last().unwrap() as i64 + d).max(floor as i64) as u64;
        a.push(v);
    }
    a
}

fn g_of(mask: u64, l: usize) -> BTreeSet<usize> {
    (0..l).filter(|i| mask >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn increasing_subsequence_lemma(a0 in 0u64..4, deltas in prop::collection::vec(-3i64..=1, 1..24), mask: u64, k in 1usize..5) {
        let a = stepped(a0, a0, &deltas);
        let g = g_of(mask, a.len() - 1);
        let smallest = g.iter().map(|&e1| e1 + 1).find(|&e| h_literal(&a, &g, e).len() >= k);
        match find_increasing_subseq(&a, &g, k).unwrap() {
            Some((e, h)) => {
                prop_assert!(verify_increasing(&a, &g, k, e, &h));
                prop_assert_eq!(Some(e), smallest);
            }
            None => {
                prop_assert!(smallest.is_none());
                prop_assert!(g.len() + 1 < 1 << k);
            }
        }
    }

    #[test]
    fn window_corollary(a0 in 1u64..4, deltas in prop::collection::vec(-3i64..=1, 1..24), mask: u64, k in 1usize..4) {
        let a = stepped(1, a0, &deltas);
        let g = g_of(mask, a.len() - 1);
        match find_window(&a, &g, k).unwrap() {
            Some(w) => prop_assert!(verify_window(&a, &g, k, &w)),
            None => prop_assert!((g.len() as u64) < a[0] << k),
        }
    }

    #[test]
    fn constants_satisfy_their_inequalities(m in 0u64..200, c in 2u32..1000, n in 1usize..6) {
        let k = seq_constants(m, c, n).unwrap();
        for d in k.check_m_gap().into_iter().chain(k.check_s_bound()) {
            prop_assert_ne!(d, Decided::Fails);
        }
        for j in 1..=n {
            prop_assert_ne!(k.big_n[j].ge(&k.big_n[j - 1]), Decided::Fails);
            prop_assert_ne!(k.big_m[j].ge(&k.big_m_prime[j]), Decided::Fails);
        }
    }

    #[test]
    fn bounds_contain_exact_values(start in 0u64..50, steps in prop::collection::vec((0u8..3, 0u64..40), 0..8)) {
        let mut b = Big::from_u64(start);
        let mut x = BigUint::from(start);
        for (op, v) in steps {
            match op {
                0 => { b = b.add(&Big::from_u64(v)); x += v; }
                1 => { b = b.mul(&Big::from_u64(v)); x *= v; }
                _ => {
                    // keep the exact side computable
                    let Ok(e) = u32::try_from(&x) else { break };
                    if e > 20_000 { break; }
                    b = b.pow2();
                    x = BigUint::from(1u32) << e;
                }
            }
            let ex = Big::exact(x.clone());
            prop_assert_ne!(b.ge(&ex), Decided::Fails);
            prop_assert_ne!(ex.ge(&b), Decided::Fails);
            if let Some(v) = b.to_biguint() {
                prop_assert_eq!(&v, &x);
            }
        }
    }
}

#[test]
fn pumps_iterate_into_growing_runs() {
    let spec = load("inf-eps-push").unwrap();
    let mut e = TypeEngine::new(&spec, &witness_family(&spec)).unwrap();
    let mut pumped = 0;
    let all = collect_runs(&spec, &spec.initial_config(), 5, Exec::Sequential);
    // pumps that start after a short prefix
    for r in all.iter().flat_map(|r| (0..r.len()).map(move |i| r.subrun(i, r.len()).unwrap())) {
        if classify_pumping(&r) != Ok((Cmp::Lt, Eps::E)) {
            continue;
        }
        for count in 1..=3 {
            let Ok(runs) = iterate_pump(&mut e, &r, count) else { continue };
            assert_eq!(runs.len(), count + 1);
            assert!(strictly_growing(&runs));
            assert!(runs.iter().all(|x| x.validate(&spec).is_ok() && x.first() == r.first()));
            pumped += 1;
        }
    }
    assert!(pumped >= 3, "only {} pumps iterated", pumped);
}
