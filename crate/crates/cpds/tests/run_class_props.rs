use cpds::bundled::load;
use cpds::machine::{collect_runs, explore, Caps, Config, CpsSpec, Run};
use cpds::par::Exec;
use cpds::run_classes::{
    build_canonical_family, change_level, classify_pumping, is_colreturn, is_return, Cmp, DeriveTable, Eps,
};
use cpds::stack_core::{compare_positions, top_position, Op, PosOrder};

const SYSTEMS: [&str; 4] = ["ret-1", "ret-2", "ret-3", "colret-2"];

fn runs(spec: &CpsSpec, len: usize) -> Vec<Run> {
    let g = explore(spec, Caps::depth(8));
    let mut seeds: Vec<Config> = vec![spec.initial_config()];
    seeds.extend(g.nodes.iter().skip(1).take(5).cloned());
    seeds.iter().flat_map(|c| collect_runs(spec, c, len, Exec::Parallel)).collect()
}

fn all_runs(len: usize) -> Vec<(CpsSpec, Vec<Run>)> {
    SYSTEMS.iter().map(|n| load(n).unwrap()).map(|s| { let r = runs(&s, len); (s, r) }).collect()
}

#[test]
fn returns_pop_the_topmost_k_stack() {
    let mut seen = 0;
    for (spec, rs) in all_runs(5) {
        for r in rs.iter().filter(|r| !r.is_empty()) {
            for k in 1..=spec.level {
                let Some(j) = is_return(r, k).change_level() else { continue };
                seen += 1;
                assert!(j >= k, "change level {} below {}", j, k);
                assert_eq!(change_level(r), Some(j));
                let last = r.ops().last().unwrap();
                assert!(matches!(last, Op::Pop(i) | Op::Col(i) if i == k), "{:?} ends a {}-return", last, k);
                let (s, t) = (&r.first().stack, &r.last().stack);
                assert_eq!(&s.topmost(k).unwrap().without_top(), t.topmost(k).unwrap());
            }
        }
    }
    assert!(seen > 50, "only {} returns", seen);
}

#[test]
fn colreturns_land_on_the_link() {
    let mut seen = 0;
    for (spec, rs) in all_runs(5) {
        for r in rs.iter().filter(|r| !r.is_empty()) {
            for k in 1..=spec.level {
                let Some(j) = is_colreturn(r, k).change_level() else { continue };
                seen += 1;
                assert!(j >= k);
                let (s, t) = (&r.first().stack, &r.last().stack);
                let (_, level, link) = s.topmost(0).unwrap().as_zero().unwrap();
                assert_eq!(level, k);
                assert_eq!(link, t.topmost(k).unwrap());
                assert!(link.len() < s.topmost(k).unwrap().len());
            }
        }
    }
    assert!(seen > 0, "no colreturns");
}

#[test]
fn pumping_classes_compose() {
    let mut splits = 0;
    for (_, rs) in all_runs(5) {
        for r in &rs {
            let whole = classify_pumping(r);
            if let Ok((Cmp::Lt, _)) = whole {
                let t0 = top_position(0, &r.first().stack).unwrap();
                let t1 = top_position(0, &r.last().stack).unwrap();
                assert!(matches!(compare_positions(&t0, &t1), Ok(PosOrder::Less(_))), "{} !< {}", t0, t1);
            }
            for i in 0..=r.len() {
                let (a, b) = (r.subrun(0, i).unwrap(), r.subrun(i, r.len()).unwrap());
                let (Ok((xa, ya)), Ok((xb, yb))) = (classify_pumping(&a), classify_pumping(&b)) else { continue };
                splits += 1;
                assert_eq!(whole, Ok((xa.max(xb), Eps::join(ya, yb))));
            }
        }
    }
    assert!(splits > 1000, "only {} splits", splits);
}

#[test]
fn derivations_replay() {
    for (spec, rs) in all_runs(4) {
        let g = build_canonical_family(&spec);
        for r in &rs {
            let t = DeriveTable::new(&g, r);
            for x in 0..g.sets.len() {
                if t.contains(0, r.len(), x) {
                    let d = t.derivation(0, r.len(), x).expect("member has a derivation");
                    assert!(d.replays(&g, r), "{} on a run of length {}", g.name(x), r.len());
                }
            }
        }
    }
}
