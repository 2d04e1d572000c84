use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::{Command, Output};

use cpds::bundled::load;
use cpds::export::graph_from_json;
use cpds::machine::{eps_contract, explore, Caps};

fn cpds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpds")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cpds-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn classify_change_level_three() {
    let o = cpds(&[
        "classify",
        "-f",
        "@ret-3",
        "--script",
        "push1(A,1),push2,pop1,push3,pop2,pop1",
        "--from",
        "1",
        "--class",
        "return:1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("1-return, change level 3"), "{}", stdout(&o));
}

#[test]
fn classify_with_collapse() {
    let o = cpds(&[
        "classify",
        "-f",
        "@ret-2",
        "--script",
        "push1(A,1),push1(A,1),push2,col1,pop2,pop1",
        "--from",
        "2",
        "--class",
        "return:1",
        "--grammar",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("1-return, change level 1"), "{}", stdout(&o));
}

/// Letter words reachable from the contracted initial node in a DOT file.
fn dot_words(dot: &str, len: usize) -> BTreeSet<String> {
    let mut succ: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut first: Option<String> = None;
    for line in dot.lines() {
        let line = line.trim();
        if let Some((src, rest)) = line.split_once(" -> ") {
            let (dst, attrs) = rest.split_once(' ').unwrap();
            let label = attrs.split('"').nth(1).unwrap().to_string();
            succ.entry(src.to_string()).or_default().push((label, dst.to_string()));
        } else if line.contains("[label=") && first.is_none() {
            first = Some(line.split_whitespace().next().unwrap().to_string());
        }
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![(first.expect("a node"), String::new())];
    while let Some((n, w)) = stack.pop() {
        out.insert(w.clone());
        if w.len() < len {
            for (a, m) in succ.get(&n).into_iter().flatten() {
                stack.push((m.clone(), format!("{}{}", w, a)));
            }
        }
    }
    out
}

#[test]
fn explore_dot_has_the_exponential_path() {
    let o = cpds(&["explore", "-f", "@exp-tree-2", "--depth", "12", "--eps", "--dot", "-"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let dot = &out[out.find("digraph").expect("DOT on stdout")..];
    let words = dot_words(dot, 6);
    assert!(words.contains("110000"));
    assert!(!words.contains("1100000"));
    assert!(!words.contains("1000"));
}

#[test]
fn explore_json_reimports() {
    for (name, eps) in [("colret-2", false), ("exp-tree-2", true)] {
        let path = scratch(&format!("{}.json", name));
        let p = path.to_str().unwrap();
        let at = format!("@{}", name);
        let mut args = vec!["explore", "-f", &at, "--depth", "6", "--json", p];
        if eps {
            args.push("--eps");
        }
        let o = cpds(&args);
        assert_eq!(code(&o), 0);
        let (g, c) = graph_from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let spec = load(name).unwrap();
        let want = explore(&spec, if eps { Caps::letters(6) } else { Caps::depth(6) });
        assert_eq!(g, want);
        assert_eq!(c, eps.then(|| eps_contract(&want, true)));
    }
}

#[test]
fn decide_finite_micro_system() {
    let o = cpds(&["decide", "-f", "@eps-bounded", "branching", "--oracle-depth", "8"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("FINITE_UP_TO"), "{}", out);
    assert!(out.contains("oracle agrees: true"), "{}", out);
}

#[test]
fn decide_infinite_has_certificate() {
    let o = cpds(&["decide", "-f", "@inf-two-state", "branching"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("\"INFINITE\""), "{}", out);
    assert!(out.contains("certificate"), "{}", out);
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(code(&cpds(&["frobnicate"])), 1);
    assert_eq!(code(&cpds(&["explore", "-f", "@ret-1"])), 1);
    assert_eq!(code(&cpds(&["--help"])), 0);
    // parse error: pop3 in a level-2 file
    let bad = scratch("bad.cps");
    std::fs::write(&bad, "level 2\nstates q\ninitial q\nstack-symbols bot\ntrans q bot eps q pop3\n").unwrap();
    assert_eq!(code(&cpds(&["explore", "-f", bad.to_str().unwrap(), "--depth", "1"])), 2);
    // undefined operation during replay
    assert_eq!(code(&cpds(&["run", "-f", "@ret-1", "--script", "pop1"])), 4);
    // limit: a node cap far below what the exploration needs
    let o = Command::new(env!("CARGO_BIN_EXE_cpds"))
        .args(["explore", "-f", "@inf-eps-push", "--depth", "50"])
        .env("CPDS_MAX_STACK_NODES", "10")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn examples_lists_bundled_systems() {
    let o = cpds(&["examples"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    for name in ["exp-tree-2", "t1", "ret-3", "dag-col"] {
        assert!(out.contains(name), "{}", out);
    }
    let o = cpds(&["examples", "single-succ"]);
    assert!(stdout(&o).contains("trans"));
}

#[test]
fn tree_generates() {
    let o = cpds(&["tree", "-f", "@t1", "--depth", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn output_is_deterministic() {
    let args = ["explore", "-f", "@ret-2", "--depth", "6", "--json", "-"];
    assert_eq!(stdout(&cpds(&args)), stdout(&cpds(&args)));
}
