use std::collections::BTreeSet;

use proptest::prelude::*;

use cpds::bundled::{self, load};
use cpds::machine::{
    collect_runs, eps_contract, eps_contract_with, explore, explore_with, is_eps_normalized, normalize_eps_states,
    successors, Caps, ConfigGraph, ContractedGraph, CpsSpec, Run,
};
use cpds::par::Exec;

fn walk(spec: &CpsSpec, choices: &[usize]) -> Run {
    let mut r = Run::empty(spec.initial_config());
    for &c in choices {
        let succ = successors(spec, r.last());
        if succ.is_empty() {
            break;
        }
        let (ti, next) = succ[c % succ.len()].clone();
        r.push_step(ti, spec.transitions[ti], next);
    }
    r
}

fn system() -> impl Strategy<Value = &'static str> {
    prop::sample::select(bundled::ALL.iter().map(|b| b.name).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn subrun_and_compose_revalidate(name in system(), choices in prop::collection::vec(0usize..8, 0..20), cut in 0usize..20) {
        let spec = load(name).unwrap();
        let r = walk(&spec, &choices);
        prop_assert!(r.validate(&spec).is_ok());
        let i = cut.min(r.len());
        let (a, b) = (r.subrun(0, i).unwrap(), r.subrun(i, r.len()).unwrap());
        prop_assert!(a.validate(&spec).is_ok());
        prop_assert!(b.validate(&spec).is_ok());
        prop_assert_eq!(a.compose(&b).unwrap(), r);
    }
}

fn words(spec: &CpsSpec, g: &ConfigGraph, c: &ContractedGraph, depth: usize) -> BTreeSet<String> {
    let start = g.index_of(&spec.initial_config()).unwrap();
    let mut out = BTreeSet::new();
    let mut stack = vec![(start, String::new(), 0usize)];
    while let Some((n, w, d)) = stack.pop() {
        out.insert(w.clone());
        if d < depth {
            for (a, m) in c.successors(n) {
                stack.push((m, format!("{}.{}", w, spec.letters[a as usize]), d + 1));
            }
        }
    }
    out
}

#[test]
fn exploration_is_deterministic_in_both_modes() {
    for b in bundled::ALL {
        let spec = b.spec();
        let caps = Caps { max_nodes: 5000, ..Caps::depth(7) };
        let a = explore_with(&spec, caps, Exec::Sequential);
        let p = explore_with(&spec, caps, Exec::Parallel);
        assert_eq!(a, p, "{}", b.name);
        assert_eq!(a, explore(&spec, caps), "{}", b.name);
        assert_eq!(eps_contract_with(&a, true, Exec::Sequential), eps_contract_with(&a, true, Exec::Parallel));
        let c = spec.initial_config();
        assert_eq!(collect_runs(&spec, &c, 4, Exec::Sequential), collect_runs(&spec, &c, 4, Exec::Parallel));
    }
}

#[test]
fn contracted_edges_are_witnessed() {
    for b in bundled::ALL {
        let spec = b.spec();
        let g = explore(&spec, Caps { max_nodes: 5000, ..Caps::depth(8) });
        let c = eps_contract(&g, true);
        let all: BTreeSet<usize> = (0..g.nodes.len()).collect();
        for n in &c.nodes {
            assert!(all.contains(n));
        }
        let out = g.out_edges();
        for e in c.edges.iter().filter(|e| e.sound) {
            // some ε-path from src, then one edge labelled with the letter into dst
            let mut seen = BTreeSet::from([e.src]);
            let mut todo = vec![e.src];
            let mut hit = false;
            while let Some(n) = todo.pop() {
                for &ei in &out[n] {
                    let ge = &g.edges[ei];
                    match ge.label {
                        None => {
                            if seen.insert(ge.dst) {
                                todo.push(ge.dst);
                            }
                        }
                        Some(a) => hit |= a == e.letter && ge.dst == e.dst,
                    }
                }
            }
            assert!(hit, "{}: edge {:?} has no witness", b.name, e);
        }
    }
}

#[test]
fn normalization_keeps_the_contraction() {
    let mut compared = 0;
    for b in bundled::ALL {
        let spec = b.spec();
        let norm = normalize_eps_states(&spec);
        assert!(is_eps_normalized(&norm), "{}", b.name);
        for t in 0..norm.states.len() as u32 {
            let labels: BTreeSet<bool> = norm.transitions.iter().filter(|x| x.to == t).map(|x| x.label.is_none()).collect();
            assert!(labels.len() <= 1, "{}", b.name);
        }
        if spec.letters.is_empty() {
            continue;
        }
        let caps = Caps { max_nodes: 5000, ..Caps::letters(4) };
        let (g1, g2) = (explore(&spec, caps), explore(&norm, caps));
        if g1.truncated_nodes || g2.truncated_nodes {
            continue;
        }
        let (c1, c2) = (eps_contract(&g1, true), eps_contract(&g2, true));
        assert_eq!(words(&spec, &g1, &c1, 4), words(&norm, &g2, &c2, 4), "{}", b.name);
        assert_eq!(c1.nodes.len(), c2.nodes.len(), "{}", b.name);
        compared += 1;
    }
    assert!(compared >= 6, "only {} systems compared", compared);
}
