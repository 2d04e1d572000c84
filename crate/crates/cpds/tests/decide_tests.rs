use cpds::bundled::load;
use cpds::decide::{decide_branching, decide_finiteness, decide_unfolding, Answer, Params};
use cpds::machine::{explore, Caps};

const SYSTEMS: [&str; 8] =
    ["ret-1", "single-succ", "eps-bounded", "eps-drain", "inf-eps-push", "inf-two-state", "dag-1", "dag-col"];

/// Whether the reachable configuration graph is finite, by plain exploration.
fn graph_is_finite(name: &str) -> bool {
    let g = explore(&load(name).unwrap(), Caps { max_nodes: 20_000, ..Caps::depth(64) });
    !g.truncated()
}

#[test]
fn finiteness_matches_the_explicit_graph() {
    for name in SYSTEMS {
        let v = decide_finiteness(&load(name).unwrap(), &Params::default());
        let want = if graph_is_finite(name) { Answer::Finite } else { Answer::Infinite };
        assert_eq!(v.answer, want, "{}: {}", name, v.detail);
    }
}

#[test]
fn unfolding_matches_the_explicit_graph() {
    for name in SYSTEMS {
        let v = decide_unfolding(&load(name).unwrap(), &Params::default());
        let want = if graph_is_finite(name) { Answer::Finite } else { Answer::Infinite };
        assert_eq!(v.answer, want, "{}: {}", name, v.detail);
    }
}

#[test]
fn verdict_json_has_the_documented_keys() {
    let v = decide_branching(&load("inf-two-state").unwrap(), &Params::default());
    let j: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
    for key in ["question", "answer", "exactness", "limits_hit"] {
        assert!(j.get(key).is_some(), "missing {}", key);
    }
    assert_eq!(j["question"], "branching");
    assert_eq!(j["answer"]["kind"], "INFINITE");
    assert!(j["certificate"]["transitions"].is_array());
}

#[test]
fn level_two_reports_limits_honestly() {
    let v = decide_branching(&load("exp-tree-2").unwrap(), &Params::default());
    if let Answer::Unknown { limit } = &v.answer {
        assert!(v.limits_hit.contains(limit));
    } else {
        assert!(v.limits_hit.is_empty() || v.answer != Answer::Finite);
    }
}
