//! The bundled example systems, kept as text so they double as format samples.

use crate::machine::CpsSpec;
use crate::text::parse_cps;

/// What a bundled system is for. `branching` is the hand-derived answer to
/// the finite-branching question where the system is meant to exercise it.
#[derive(Clone, Copy, Debug)]
pub struct Bundled {
    pub name: &'static str,
    pub text: &'static str,
    pub branching: Option<Branching>,
    pub micro: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branching {
    Finite,
    Infinite,
}

macro_rules! sys {
    ($name:literal, $br:expr, $micro:expr) => {
        Bundled {
            name: $name,
            text: include_str!(concat!("../systems/", $name, ".cps")),
            branching: $br,
            micro: $micro,
        }
    };
}

use Branching::*;

pub const ALL: &[Bundled] = &[
    sys!("ret-1", None, false),
    sys!("ret-2", None, false),
    sys!("ret-3", None, false),
    sys!("colret-2", None, false),
    sys!("single-succ", Some(Finite), true),
    sys!("eps-bounded", Some(Finite), true),
    sys!("eps-drain", Some(Finite), true),
    sys!("lvl2-finite", Some(Finite), true),
    sys!("inf-eps-push", Some(Infinite), true),
    sys!("inf-two-state", Some(Infinite), true),
    sys!("inf-two-level", Some(Infinite), true),
    sys!("dag-1", Some(Finite), true),
    sys!("dag-col", Some(Finite), true),
    sys!("exp-tree-2", Some(Finite), false),
    sys!("t1", None, false),
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    ALL.iter().find(|b| b.name == name)
}

impl Bundled {
    pub fn spec(&self) -> CpsSpec {
        parse_cps(self.text).unwrap_or_else(|e| panic!("bundled system {}: {}", self.name, e))
    }

    /// First comment line of the file.
    pub fn summary(&self) -> &'static str {
        self.text.lines().next().and_then(|l| l.strip_prefix("# ")).unwrap_or("")
    }
}

/// Load a bundled system by name.
pub fn load(name: &str) -> Option<CpsSpec> {
    find(name).map(|b| b.spec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{eps_contract, explore, generate_tree, Caps, GeneratedTree};
    use crate::text::print_cps;
    use std::collections::BTreeSet;

    #[test]
    fn all_parse_and_roundtrip() {
        for b in ALL {
            let s = b.spec();
            s.validate().unwrap();
            assert_eq!(parse_cps(&print_cps(&s)).unwrap(), s, "{}", b.name);
        }
    }

    fn words(spec: &CpsSpec, letters: usize) -> (BTreeSet<String>, BTreeSet<String>) {
        let g = explore(spec, Caps { max_nodes: 1 << 20, ..Caps::letters(letters) });
        let c = eps_contract(&g, true);
        let mut all = BTreeSet::new();
        let mut leaves = BTreeSet::new();
        let mut stack = vec![(0usize, String::new())];
        while let Some((n, w)) = stack.pop() {
            let succ = c.successors(n);
            if succ.is_empty() && w.len() < letters {
                leaves.insert(w.clone());
            }
            for (a, m) in succ {
                stack.push((m, format!("{}{}", w, spec.letters[a as usize])));
            }
            assert!(all.insert(w), "not a tree");
        }
        (all, leaves)
    }

    #[test]
    fn exp_tree_words() {
        let s = load("exp-tree-2").unwrap();
        let (all, leaves) = words(&s, 8);
        for i in 0..=2usize {
            for j in 0..=(1usize << i) {
                assert!(all.contains(&format!("{}{}", "1".repeat(i), "0".repeat(j))));
            }
            assert!(leaves.contains(&format!("{}{}", "1".repeat(i), "0".repeat(1 << i))));
        }
        assert_eq!(leaves.len(), 3);
    }

    fn expected_t1(i: usize, depth: usize) -> GeneratedTree {
        fn chain(b: usize, depth: usize) -> GeneratedTree {
            if b == 0 {
                return GeneratedTree { label: 2, children: vec![], cut: false };
            }
            if depth == 0 {
                return GeneratedTree { label: 1, children: vec![], cut: true };
            }
            GeneratedTree { label: 1, children: vec![chain(b - 1, depth - 1)], cut: false }
        }
        if depth == 0 {
            return GeneratedTree { label: 0, children: vec![], cut: true };
        }
        GeneratedTree {
            label: 0,
            children: vec![chain(1 << i, depth - 1), expected_t1(i + 1, depth - 1)],
            cut: false,
        }
    }

    #[test]
    fn t1_generates_its_tree() {
        let s = load("t1").unwrap();
        let rep = generate_tree(&s, 6, 10_000).unwrap();
        assert!(rep.unknown.is_empty());
        assert_eq!(rep.tree.unwrap(), expected_t1(1, 6));
    }
}
