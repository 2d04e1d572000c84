//! Semantic run classes (returns, colreturns, non-erasing and pumping runs)
//! and well-formed grammars describing them.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::history::{hist, hist_trace, position_present, Presence};
use crate::machine::{enumerate_runs, Config, CpsSpec, Run};
use crate::stack_core::{top_position, Op};

/// Change level: the largest i whose topmost i-stack sizes differ between the ends.
pub fn change_level(r: &Run) -> Option<u8> {
    let a = r.first().stack.top_sizes();
    let b = r.last().stack.top_sizes();
    let n = a.len();
    (0..n).find(|&i| a[i] != b[i]).map(|i| (n - i) as u8)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Yes { change_level: u8 },
    No(String),
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::Yes { .. })
    }

    pub fn change_level(&self) -> Option<u8> {
        match self {
            Verdict::Yes { change_level } => Some(*change_level),
            Verdict::No(_) => None,
        }
    }
}

pub fn is_return(r: &Run, k: u8) -> Verdict {
    let m = r.len();
    if m == 0 {
        return Verdict::No("empty run".into());
    }
    let s0 = &r.first().stack;
    let Ok(tk) = s0.topmost(k) else {
        return Verdict::No("level out of range".into());
    };
    if tk.len() < 2 {
        return Verdict::No("topmost k-stack of R(0) has fewer than two items".into());
    }
    let x = match top_position(k - 1, &r.last().stack) {
        Ok(x) => x,
        Err(_) => return Verdict::No("final spine broken".into()),
    };
    let tr = hist_trace(r, &x).expect("top position is valid");
    let mut want = top_position(k - 1, s0).unwrap();
    let n = s0.level() as usize;
    want.root[n - k as usize] -= 1;
    if *tr.result() != want {
        return Verdict::No(format!("history is {}, not the second topmost {}-stack {}", tr.result(), k - 1, want));
    }
    for i in 1..m {
        if *tr.from_start(i) == top_position(k - 1, &r.at(i).stack).unwrap() {
            return Verdict::No(format!("history is topmost at step {}", i));
        }
    }
    Verdict::Yes { change_level: change_level(r).unwrap_or(0) }
}

pub fn is_colreturn(r: &Run, k: u8) -> Verdict {
    let m = r.len();
    if m == 0 {
        return Verdict::No("empty run".into());
    }
    let x = match top_position(k - 1, &r.last().stack) {
        Ok(x) => x,
        Err(_) => return Verdict::No("final spine broken".into()),
    };
    let tr = hist_trace(r, &x).expect("top position is valid");
    let h = tr.result();
    let top0 = top_position(0, &r.first().stack).unwrap();
    let ok = h.root == top0.root && h.hops.len() == 1 && h.hops[0].level == k;
    if !ok {
        return Verdict::No(format!("history {} is not TOP0(R(0))<{}:x> with x simple", h, k));
    }
    for i in 0..m {
        if tr.from_start(i).is_simple() {
            return Verdict::No(format!("history simple at step {}", i));
        }
    }
    Verdict::Yes { change_level: change_level(r).unwrap_or(0) }
}

pub fn is_nonerasing(r: &Run, k: u8) -> bool {
    let x = top_position(k, &r.first().stack).expect("spine");
    position_present(r, &x).expect("valid") == Presence::Always
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Cmp {
    Eq,
    Lt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Eps {
    E,
    NE,
}

impl Eps {
    pub fn of_run(r: &Run) -> Eps {
        if r.all_eps() {
            Eps::E
        } else {
            Eps::NE
        }
    }

    pub fn join(a: Eps, b: Eps) -> Eps {
        if a == Eps::NE || b == Eps::NE {
            Eps::NE
        } else {
            Eps::E
        }
    }
}

pub fn classify_pumping(r: &Run) -> Result<(Cmp, Eps), String> {
    let t_end = top_position(0, &r.last().stack).map_err(|e| e.to_string())?;
    let t0 = top_position(0, &r.first().stack).map_err(|e| e.to_string())?;
    let h = hist(r, &t_end).map_err(|e| e.to_string())?;
    if h != t0 {
        return Err(format!("history of TOP0 is {}, not {}", h, t0));
    }
    let x = if t_end == t0 { Cmp::Eq } else { Cmp::Lt };
    Ok((x, Eps::of_run(r)))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SetId {
    Q,
    N(u8),
    P(Cmp, Eps),
    R(u8, u8, Eps),
    C(u8, u8, Eps),
    /// X_δ
    Trans(usize),
    /// X_{δY}
    Head(usize, Box<SetId>),
    Union(Box<SetId>, Box<SetId>),
    Comp(Box<SetId>, Box<SetId>),
    /// Y^i
    Lift(Box<SetId>, u8),
    Named(String),
}

fn eps_name(y: Eps) -> &'static str {
    match y {
        Eps::E => "e",
        Eps::NE => "ne",
    }
}

impl fmt::Display for SetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetId::Q => write!(f, "Q"),
            SetId::N(k) => write!(f, "N[{}]", k),
            SetId::P(x, y) => write!(f, "P[{},{}]", if *x == Cmp::Eq { "=" } else { "<" }, eps_name(*y)),
            SetId::R(k, j, y) => write!(f, "R[{},{},{}]", k, j, eps_name(*y)),
            SetId::C(k, j, y) => write!(f, "C[{},{},{}]", k, j, eps_name(*y)),
            SetId::Trans(d) => write!(f, "T[#{}]", d),
            SetId::Head(d, y) => write!(f, "H[#{},{}]", d, y),
            SetId::Union(a, b) => write!(f, "({}|{})", a, b),
            SetId::Comp(a, b) => write!(f, "({}.{})", a, b),
            SetId::Lift(a, i) => write!(f, "{}^{}", a, i),
            SetId::Named(s) => write!(f, "{}", s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("unknown set id {0}")]
    UnknownSetId(String),
}

/// Parse the printed form of a base set id.
pub fn parse_set_id(s: &str) -> Option<SetId> {
    let s = s.trim();
    if s == "Q" {
        return Some(SetId::Q);
    }
    let inner = |p: &str| -> Option<Vec<String>> {
        let rest = s.strip_prefix(p)?.strip_prefix('[')?.strip_suffix(']')?;
        Some(rest.split(',').map(|t| t.trim().to_string()).collect())
    };
    let eps = |t: &str| match t {
        "e" | "eps" => Some(Eps::E),
        "ne" => Some(Eps::NE),
        _ => None,
    };
    if let Some(v) = inner("N") {
        return v.first()?.parse().ok().map(SetId::N);
    }
    if let Some(v) = inner("P") {
        let x = match v.first()?.as_str() {
            "=" => Cmp::Eq,
            "<" => Cmp::Lt,
            _ => return None,
        };
        return Some(SetId::P(x, eps(v.get(1)?)?));
    }
    for (p, is_r) in [("R", true), ("C", false)] {
        if let Some(v) = inner(p) {
            let k = v.first()?.parse().ok()?;
            let j = v.get(1)?.parse().ok()?;
            let y = eps(v.get(2)?)?;
            return Some(if is_r { SetId::R(k, j, y) } else { SetId::C(k, j, y) });
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Preservation {
    NotApplicable,
    ProvedByConstruction,
    BoundedChecked(usize),
    Unchecked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub lhs: usize,
    /// None for the empty rule X →
    pub delta: Option<usize>,
    pub rhs: Vec<usize>,
    pub preservation: Preservation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SetInfo {
    pub id: SetId,
    pub level: u8,
}

#[derive(Clone, Debug, Serialize)]
pub struct Grammar {
    pub n: u8,
    pub sets: Vec<SetInfo>,
    #[serde(skip)]
    pub index: HashMap<SetId, usize>,
    pub rules: Vec<Rule>,
    pub wf_closed: bool,
    #[serde(skip)]
    rule_keys: HashSet<(usize, Option<usize>, Vec<usize>)>,
}

impl Grammar {
    pub fn new(n: u8) -> Grammar {
        Grammar {
            n,
            sets: Vec::new(),
            index: HashMap::new(),
            rules: Vec::new(),
            wf_closed: false,
            rule_keys: HashSet::new(),
        }
    }

    pub fn add_set(&mut self, id: SetId, level: u8) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.sets.len();
        self.index.insert(id.clone(), i);
        self.sets.push(SetInfo { id, level });
        i
    }

    pub fn id(&self, s: &SetId) -> Result<usize, GrammarError> {
        self.index.get(s).copied().ok_or_else(|| GrammarError::UnknownSetId(s.to_string()))
    }

    pub fn level(&self, x: usize) -> u8 {
        self.sets[x].level
    }

    pub fn name(&self, x: usize) -> String {
        self.sets[x].id.to_string()
    }

    /// Structural dedup on (lhs, δ, rhs).
    pub fn add_rule(&mut self, lhs: usize, delta: Option<usize>, rhs: Vec<usize>, p: Preservation) -> bool {
        if !self.rule_keys.insert((lhs, delta, rhs.clone())) {
            return false;
        }
        self.rules.push(Rule { lhs, delta, rhs, preservation: p });
        true
    }

    pub fn rules_of(&self, x: usize) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.lhs == x)
    }

    pub fn has_empty_rule(&self, x: usize) -> bool {
        self.rules_of(x).any(|r| r.delta.is_none())
    }

    /// Dump: one rule per line, then the level table.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&self.name(r.lhs));
            out.push_str(" ->");
            if let Some(d) = r.delta {
                out.push_str(&format!(" delta#{}", d));
            }
            for &y in &r.rhs {
                out.push(' ');
                out.push_str(&self.name(y));
            }
            out.push('\n');
        }
        out.push_str("levels:\n");
        for s in &self.sets {
            out.push_str(&format!("  {} {}\n", s.id, s.level));
        }
        out
    }

    /// Keep only sets reachable from `roots` through rules. The closure flag is reset.
    pub fn restrict(&self, roots: &[usize]) -> Grammar {
        let mut seen = vec![false; self.sets.len()];
        let mut stack: Vec<usize> = roots.to_vec();
        for &r in roots {
            seen[r] = true;
        }
        let mut by_lhs: Vec<Vec<usize>> = vec![Vec::new(); self.sets.len()];
        for (i, r) in self.rules.iter().enumerate() {
            by_lhs[r.lhs].push(i);
        }
        while let Some(x) = stack.pop() {
            for &ri in &by_lhs[x] {
                for &y in &self.rules[ri].rhs {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        let mut g = Grammar::new(self.n);
        let mut map = vec![usize::MAX; self.sets.len()];
        for (i, s) in self.sets.iter().enumerate() {
            if seen[i] {
                map[i] = g.add_set(s.id.clone(), s.level);
            }
        }
        for r in &self.rules {
            if seen[r.lhs] {
                g.add_rule(map[r.lhs], r.delta, r.rhs.iter().map(|&y| map[y]).collect(), r.preservation);
            }
        }
        g
    }
}

fn push_level(op: Op) -> Option<u8> {
    match op {
        Op::Push(j) => Some(j),
        Op::Push1(_, _) => Some(1),
        _ => None,
    }
}

fn y_of(spec: &CpsSpec, d: usize) -> Eps {
    if spec.transitions[d].label.is_none() {
        Eps::E
    } else {
        Eps::NE
    }
}

const YS: [Eps; 2] = [Eps::E, Eps::NE];

/// The canonical family: Q, N_k, P_{x,y}, R_{k,j,y}, C_{k,j,y} and their rules.
pub fn build_canonical_family(spec: &CpsSpec) -> Grammar {
    let n = spec.level;
    let mut g = Grammar::new(n);
    let q = g.add_set(SetId::Q, n);
    let nk: Vec<usize> = (0..=n).map(|k| g.add_set(SetId::N(k), n)).collect();
    let mut p = HashMap::new();
    for x in [Cmp::Eq, Cmp::Lt] {
        for y in YS {
            p.insert((x, y), g.add_set(SetId::P(x, y), 0));
        }
    }
    let mut rs = HashMap::new();
    let mut cs = HashMap::new();
    for k in 1..=n {
        for j in k..=n {
            for y in YS {
                rs.insert((k, j, y), g.add_set(SetId::R(k, j, y), k));
                cs.insert((k, j, y), g.add_set(SetId::C(k, j, y), k));
            }
        }
    }
    let na = Preservation::NotApplicable;
    let pbc = Preservation::ProvedByConstruction;
    let nd = spec.transitions.len();

    // Q
    g.add_rule(q, None, vec![], na);
    for d in 0..nd {
        g.add_rule(q, Some(d), vec![q], na);
    }

    // N_k
    for k in 0..=n {
        let x = nk[k as usize];
        g.add_rule(x, None, vec![], na);
        for d in 0..nd {
            let op = spec.transitions[d].op;
            if op.level() <= k {
                g.add_rule(x, Some(d), vec![x], na);
            }
            if let Some(j) = push_level(op) {
                if j > k {
                    g.add_rule(x, Some(d), vec![nk[(j - 1) as usize]], na);
                }
                for y in YS {
                    g.add_rule(x, Some(d), vec![rs[&(j, j, y)], x], pbc);
                }
            }
        }
    }

    // P
    g.add_rule(p[&(Cmp::Eq, Eps::E)], None, vec![], na);
    for d in 0..nd {
        let Some(j) = push_level(spec.transitions[d].op) else { continue };
        let y0 = y_of(spec, d);
        for x in [Cmp::Eq, Cmp::Lt] {
            for y1 in YS {
                let y = Eps::join(y0, y1);
                g.add_rule(p[&(Cmp::Lt, y)], Some(d), vec![p[&(x, y1)]], na);
                for y2 in YS {
                    let y = Eps::join(y, y2);
                    g.add_rule(p[&(x, y)], Some(d), vec![rs[&(j, j, y1)], p[&(x, y2)]], pbc);
                    for j2 in j + 1..=n {
                        g.add_rule(p[&(Cmp::Lt, y)], Some(d), vec![rs[&(j, j2, y1)], p[&(x, y2)]], pbc);
                    }
                }
            }
        }
    }

    // R and C
    for k in 1..=n {
        for d in 0..nd {
            let op = spec.transitions[d].op;
            let y0 = y_of(spec, d);
            if op == Op::Pop(k) {
                g.add_rule(rs[&(k, k, y0)], Some(d), vec![], na);
            }
            if op == Op::Col(k) {
                g.add_rule(cs[&(k, k, y0)], Some(d), vec![], na);
            }
            for j in k..=n {
                for y1 in YS {
                    let y = Eps::join(y0, y1);
                    if op.level() < k {
                        g.add_rule(rs[&(k, j, y)], Some(d), vec![rs[&(k, j, y1)]], na);
                    }
                    if matches!(op, Op::Push1(_, kk) if kk == k) {
                        g.add_rule(rs[&(k, j, y)], Some(d), vec![cs[&(k, j, y1)]], na);
                    }
                }
            }
            let Some(j0) = push_level(op) else { continue };
            for j in k..=n {
                for y1 in YS {
                    let ya = Eps::join(y0, y1);
                    for j1 in k..=n {
                        if j0 > k && j0.max(j1) == j {
                            g.add_rule(rs[&(k, j, ya)], Some(d), vec![rs[&(k, j1, y1)]], na);
                        }
                        if j0 >= 2 && j0.max(j1) == j {
                            g.add_rule(cs[&(k, j, ya)], Some(d), vec![cs[&(k, j1, y1)]], na);
                        }
                    }
                    for y2 in YS {
                        let y = Eps::join(ya, y2);
                        // a k-return splits after its first push only if that push has level >= k
                        let split_r = j0 >= k;
                        if split_r {
                            g.add_rule(rs[&(k, j, y)], Some(d), vec![rs[&(j0, j0, y1)], rs[&(k, j, y2)]], pbc);
                        }
                        g.add_rule(cs[&(k, j, y)], Some(d), vec![rs[&(j0, j0, y1)], cs[&(k, j, y2)]], pbc);
                        for j1 in j0 + 1..=n {
                            for j2 in k..=n {
                                if j1.max(j2) == j {
                                    if split_r {
                                        g.add_rule(rs[&(k, j, y)], Some(d), vec![rs[&(j0, j1, y1)], rs[&(k, j2, y2)]], pbc);
                                    }
                                    g.add_rule(cs[&(k, j, y)], Some(d), vec![rs[&(j0, j1, y1)], cs[&(k, j2, y2)]], pbc);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    g
}

/// Add X_δ and X_{δY} auxiliaries.
pub fn wf_closure(g: &Grammar) -> Grammar {
    let mut out = g.clone();
    let n = g.n;
    let rules = g.rules.clone();
    for r in &rules {
        let Some(d) = r.delta else { continue };
        if !r.rhs.is_empty() {
            let t = out.add_set(SetId::Trans(d), n);
            out.add_rule(t, Some(d), vec![], Preservation::NotApplicable);
        }
        if r.rhs.len() == 2 {
            let y = r.rhs[0];
            let yid = out.sets[y].id.clone();
            let lv = out.level(y);
            let h = out.add_set(SetId::Head(d, Box::new(yid)), lv);
            out.add_rule(h, Some(d), vec![y], Preservation::NotApplicable);
        }
    }
    out.wf_closed = true;
    out
}

pub fn add_union(g: &Grammar, x: &SetId, y: &SetId) -> Result<(Grammar, usize), GrammarError> {
    let xi = g.id(x)?;
    let yi = g.id(y)?;
    let mut out = g.clone();
    let lv = g.level(xi).max(g.level(yi));
    let u = out.add_set(SetId::Union(Box::new(x.clone()), Box::new(y.clone())), lv);
    for r in g.rules.iter().filter(|r| r.lhs == xi || r.lhs == yi) {
        out.add_rule(u, r.delta, r.rhs.clone(), r.preservation);
    }
    out.wf_closed = false;
    Ok((out, u))
}

/// X∘Y with the sets Z∘Y and Y^i it needs, created on demand.
pub fn add_composition(g: &Grammar, x: &SetId, y: &SetId) -> Result<(Grammar, usize), GrammarError> {
    let xi = g.id(x)?;
    let yi = g.id(y)?;
    let mut out = g.clone();
    let target = compose_into(&mut out, xi, yi);
    out.wf_closed = false;
    Ok((out, target))
}

fn lift(g: &mut Grammar, y: usize, i: u8) -> usize {
    let id = SetId::Lift(Box::new(g.sets[y].id.clone()), i);
    if let Some(&l) = g.index.get(&id) {
        return l;
    }
    let lv = g.level(y).max(i);
    let l = g.add_set(id, lv);
    let rules: Vec<Rule> = g.rules_of(y).cloned().collect();
    for r in rules {
        g.add_rule(l, r.delta, r.rhs, r.preservation);
    }
    l
}

fn compose_into(g: &mut Grammar, z0: usize, y: usize) -> usize {
    let yid = g.sets[y].id.clone();
    let key = |g: &Grammar, z: usize| SetId::Comp(Box::new(g.sets[z].id.clone()), Box::new(yid.clone()));
    if let Some(&c) = g.index.get(&key(g, z0)) {
        return c;
    }
    let mut work = vec![z0];
    let lv = g.level(z0).max(g.level(y));
    let target = g.add_set(key(g, z0), lv);
    while let Some(z) = work.pop() {
        let c = g.index[&key(g, z)];
        let zrules: Vec<Rule> = g.rules_of(z).cloned().collect();
        let get = |g: &mut Grammar, x: usize, work: &mut Vec<usize>| -> usize {
            let k = key(g, x);
            if let Some(&i) = g.index.get(&k) {
                return i;
            }
            let lv = g.level(x).max(g.level(y));
            let i = g.add_set(k, lv);
            work.push(x);
            i
        };
        for r in zrules {
            match (r.delta, r.rhs.len()) {
                (None, _) => {
                    let yrules: Vec<Rule> = g.rules_of(y).cloned().collect();
                    for yr in yrules {
                        g.add_rule(c, yr.delta, yr.rhs, yr.preservation);
                    }
                }
                (Some(d), 0) => {
                    let l = lift(g, y, g.level(z));
                    g.add_rule(c, Some(d), vec![l], Preservation::NotApplicable);
                }
                (Some(d), 1) => {
                    let x1 = get(g, r.rhs[0], &mut work);
                    g.add_rule(c, Some(d), vec![x1], Preservation::NotApplicable);
                }
                (Some(d), _) => {
                    let x2 = get(g, r.rhs[1], &mut work);
                    g.add_rule(c, Some(d), vec![r.rhs[0], x2], r.preservation);
                }
            }
        }
    }
    target
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: usize,
    pub condition: u8,
    pub message: String,
}

/// Syntactic conditions always; preservation for unproved two-nonterminal
/// rules on all runs ≤ `bounded_len` from `seeds`. Rule flags are updated.
pub fn validate_grammar(g: &mut Grammar, spec: &CpsSpec, seeds: &[Config], bounded_len: usize) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for (ri, r) in g.rules.iter().enumerate() {
        let Some(d) = r.delta else { continue };
        let op = spec.transitions[d].op;
        let remove_level = match op {
            Op::Pop(k) | Op::Col(k) => Some(k),
            _ => None,
        };
        let lx = g.level(r.lhs);
        match r.rhs.len() {
            0 => {
                if let Some(k) = remove_level {
                    if k > lx {
                        diags.push(Diagnostic { rule: ri, condition: 2, message: format!("level {} above lev(X)={}", k, lx) });
                    }
                }
            }
            1 => {
                let ly = g.level(r.rhs[0]);
                if ly > lx {
                    diags.push(Diagnostic { rule: ri, condition: 3, message: "lev(Y) > lev(X)".into() });
                }
                if let Some(k) = remove_level {
                    if k > ly {
                        diags.push(Diagnostic { rule: ri, condition: 3, message: format!("level {} above lev(Y)={}", k, ly) });
                    }
                }
            }
            _ => {
                let ly = g.level(r.rhs[0]);
                let lz = g.level(r.rhs[1]);
                if lz > lx {
                    diags.push(Diagnostic { rule: ri, condition: 4, message: "lev(Z) > lev(X)".into() });
                }
                if let Some(k) = remove_level {
                    if k > ly {
                        diags.push(Diagnostic { rule: ri, condition: 4, message: format!("level {} above lev(Y)={}", k, ly) });
                    }
                }
            }
        }
    }
    let pending: Vec<usize> = g
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.rhs.len() == 2 && matches!(r.preservation, Preservation::Unchecked | Preservation::BoundedChecked(_)))
        .map(|(i, _)| i)
        .collect();
    if pending.is_empty() {
        return diags;
    }
    let mut bad: HashSet<usize> = HashSet::new();
    for c in seeds {
        for run in enumerate_runs(spec, c, bounded_len) {
            if run.is_empty() {
                continue;
            }
            let tab = DeriveTable::new(g, &run);
            for &ri in &pending {
                let r = &g.rules[ri];
                if run.steps[0].index != r.delta.unwrap() || bad.contains(&ri) {
                    continue;
                }
                let y = r.rhs[0];
                if !tab.contains(1, run.len(), y) {
                    continue;
                }
                let l = g.level(y);
                let a = run.first().stack.topmost(l).ok().cloned();
                let b = run.last().stack.topmost(l).ok().cloned();
                if a != b {
                    bad.insert(ri);
                    diags.push(Diagnostic {
                        rule: ri,
                        condition: 4,
                        message: format!("topmost {}-stack changes on a run of length {}", l, run.len()),
                    });
                }
            }
        }
    }
    for ri in pending {
        if !bad.contains(&ri) {
            g.rules[ri].preservation = Preservation::BoundedChecked(bounded_len);
        }
    }
    diags
}

/// Interval table: entry (i, j) holds the sets containing R[i..j].
pub struct DeriveTable<'g> {
    g: &'g Grammar,
    m: usize,
    cells: Vec<Vec<bool>>,
    deltas: Vec<usize>,
}

impl<'g> DeriveTable<'g> {
    pub fn new(g: &'g Grammar, run: &Run) -> DeriveTable<'g> {
        let m = run.len();
        let ns = g.sets.len();
        let deltas: Vec<usize> = run.steps.iter().map(|s| s.index).collect();
        let mut by_delta: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut empties = vec![false; ns];
        for (ri, r) in g.rules.iter().enumerate() {
            match r.delta {
                None => empties[r.lhs] = true,
                Some(d) => by_delta.entry(d).or_default().push(ri),
            }
        }
        let mut t = DeriveTable { g, m, cells: vec![Vec::new(); (m + 1) * (m + 1)], deltas };
        for i in 0..=m {
            t.cells[i * (m + 1) + i] = empties.clone();
        }
        for len in 1..=m {
            for i in 0..=m - len {
                let j = i + len;
                let mut cell = vec![false; ns];
                if let Some(rules) = by_delta.get(&t.deltas[i]) {
                    for &ri in rules {
                        let r = &g.rules[ri];
                        if cell[r.lhs] {
                            continue;
                        }
                        let ok = match r.rhs.len() {
                            0 => len == 1,
                            1 => t.contains(i + 1, j, r.rhs[0]),
                            _ => (i + 1..=j).any(|s| t.contains(i + 1, s, r.rhs[0]) && t.contains(s, j, r.rhs[1])),
                        };
                        if ok {
                            cell[r.lhs] = true;
                        }
                    }
                }
                t.cells[i * (m + 1) + j] = cell;
            }
        }
        t
    }

    pub fn contains(&self, i: usize, j: usize, x: usize) -> bool {
        self.cells[i * (self.m + 1) + j][x]
    }

    pub fn derivation(&self, i: usize, j: usize, x: usize) -> Option<Derivation> {
        if !self.contains(i, j, x) {
            return None;
        }
        for (ri, r) in self.g.rules.iter().enumerate() {
            if r.lhs != x {
                continue;
            }
            match r.delta {
                None => {
                    if i == j {
                        return Some(Derivation { rule: ri, start: i, end: j, children: vec![] });
                    }
                }
                Some(d) => {
                    if i == j || self.deltas[i] != d {
                        continue;
                    }
                    match r.rhs.len() {
                        0 => {
                            if j == i + 1 {
                                return Some(Derivation { rule: ri, start: i, end: j, children: vec![] });
                            }
                        }
                        1 => {
                            if let Some(c) = self.derivation(i + 1, j, r.rhs[0]) {
                                return Some(Derivation { rule: ri, start: i, end: j, children: vec![c] });
                            }
                        }
                        _ => {
                            for s in i + 1..=j {
                                if self.contains(i + 1, s, r.rhs[0]) && self.contains(s, j, r.rhs[1]) {
                                    let a = self.derivation(i + 1, s, r.rhs[0]).unwrap();
                                    let b = self.derivation(s, j, r.rhs[1]).unwrap();
                                    return Some(Derivation { rule: ri, start: i, end: j, children: vec![a, b] });
                                }
                            }
                        }
                    }
                }
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Derivation {
    pub rule: usize,
    pub start: usize,
    pub end: usize,
    pub children: Vec<Derivation>,
}

impl Derivation {
    /// Check that the tree covers [start, end) consistently with the run's steps.
    pub fn replays(&self, g: &Grammar, run: &Run) -> bool {
        let r = &g.rules[self.rule];
        match r.delta {
            None => self.start == self.end && self.children.is_empty(),
            Some(d) => {
                if self.start >= self.end || run.steps[self.start].index != d || self.children.len() != r.rhs.len() {
                    return false;
                }
                let mut pos = self.start + 1;
                for (c, &y) in self.children.iter().zip(&r.rhs) {
                    if c.start != pos || g.rules[c.rule].lhs != y || !c.replays(g, run) {
                        return false;
                    }
                    pos = c.end;
                }
                pos == self.end
            }
        }
    }

    pub fn render(&self, g: &Grammar) -> String {
        let mut out = String::new();
        self.render_into(g, 0, &mut out);
        out
    }

    fn render_into(&self, g: &Grammar, depth: usize, out: &mut String) {
        let r = &g.rules[self.rule];
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("{} [{}..{}] ->", g.name(r.lhs), self.start, self.end));
        if let Some(d) = r.delta {
            out.push_str(&format!(" delta#{}", d));
        }
        for &y in &r.rhs {
            out.push_str(&format!(" {}", g.name(y)));
        }
        out.push('\n');
        for c in &self.children {
            c.render_into(g, depth + 1, out);
        }
    }
}

pub fn derive(g: &Grammar, run: &Run, x: usize) -> Option<Derivation> {
    DeriveTable::new(g, run).derivation(0, run.len(), x)
}

/// Membership by the semantic definition, for the base sets.
pub fn semantic_member(id: &SetId, r: &Run) -> Option<bool> {
    Some(match id {
        SetId::Q => true,
        SetId::N(k) => is_nonerasing(r, *k),
        SetId::P(x, y) => classify_pumping(r).map(|c| c == (*x, *y)).unwrap_or(false),
        SetId::R(k, j, y) => is_return(r, *k).change_level() == Some(*j) && Eps::of_run(r) == *y,
        SetId::C(k, j, y) => is_colreturn(r, *k).change_level() == Some(*j) && Eps::of_run(r) == *y,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{replay, Selector, Transition};
    use crate::stack_core::Symbol;

    fn free(level: u8, ops: &[Op]) -> CpsSpec {
        CpsSpec {
            level,
            letters: vec![],
            states: vec!["q".into()],
            initial: 0,
            symbols: vec!["⊥".into(), "a".into()],
            transitions: ops
                .iter()
                .flat_map(|&op| (0..2).map(move |g| Transition { from: 0, top: Symbol(g), label: None, to: 0, op }))
                .collect(),
            ranks: vec![],
        }
    }

    fn run_from_ops(spec: &CpsSpec, prefix: &[Op], ops: &[Op]) -> Run {
        let pre: Vec<Selector> = prefix.iter().map(|&o| Selector::op(o)).collect();
        let c = replay(spec, &spec.initial_config(), &pre).unwrap().last().clone();
        let sel: Vec<Selector> = ops.iter().map(|&o| Selector::op(o)).collect();
        replay(spec, &c, &sel).unwrap()
    }

    #[test]
    fn change_level_example_returns() {
        let ops = [Op::Push(2), Op::Pop(1), Op::Push(3), Op::Pop(2), Op::Pop(1)];
        let spec = free(3, &ops[..4]);
        let a = Op::Push1(Symbol(1), 1);
        let spec2 = {
            let mut s = spec.clone();
            s.transitions.extend(free(3, &[a]).transitions);
            s
        };
        let r = run_from_ops(&spec2, &[a], &ops);
        assert_eq!(is_return(&r, 1), Verdict::Yes { change_level: 3 });
    }

    #[test]
    fn pumping_examples() {
        let push1 = Op::Push1(Symbol(1), 1);
        let spec = free(2, &[push1, Op::Pop(1), Op::Push(2), Op::Pop(2)]);
        let r = run_from_ops(&spec, &[push1, push1], &[Op::Push(2), Op::Pop(1), Op::Pop(2)]);
        assert_eq!(classify_pumping(&r), Ok((Cmp::Eq, Eps::E)));
        let r = run_from_ops(&spec, &[push1], &[Op::Pop(1), push1]);
        assert!(classify_pumping(&r).is_err());
        let r = run_from_ops(&spec, &[], &[push1]);
        assert_eq!(classify_pumping(&r), Ok((Cmp::Lt, Eps::E)));
    }

    #[test]
    fn canonical_family_sets_n1() {
        let mut spec = free(1, &[Op::Push1(Symbol::BOTTOM, 1)]);
        spec.transitions.truncate(1);
        let g = build_canonical_family(&spec);
        let names: Vec<String> = g.sets.iter().map(|s| s.id.to_string()).collect();
        assert_eq!(
            names,
            vec!["Q", "N[0]", "N[1]", "P[=,e]", "P[=,ne]", "P[<,e]", "P[<,ne]", "R[1,1,e]", "C[1,1,e]", "R[1,1,ne]", "C[1,1,ne]"]
        );
        // Q: 2, N0: empty + δN0 + δR11{e,ne}N0 = 4, N1: empty + δN1 + (j=1 ≥ 2? no) + 2 = 4
        assert_eq!(g.rules_of(g.id(&SetId::Q).unwrap()).count(), 2);
        assert_eq!(g.rules_of(g.id(&SetId::N(0)).unwrap()).count(), 4);
        assert_eq!(g.rules_of(g.id(&SetId::N(1)).unwrap()).count(), 4);
    }

    #[test]
    fn empty_run_derivations() {
        let spec = free(1, &[Op::Push1(Symbol(1), 1)]);
        let g = build_canonical_family(&spec);
        let r = Run::empty(spec.initial_config());
        assert!(derive(&g, &r, g.id(&SetId::Q).unwrap()).is_some());
        assert!(derive(&g, &r, g.id(&SetId::P(Cmp::Eq, Eps::E)).unwrap()).is_some());
        assert!(derive(&g, &r, g.id(&SetId::P(Cmp::Lt, Eps::E)).unwrap()).is_none());
    }

    #[test]
    fn set_id_roundtrip() {
        for id in [SetId::Q, SetId::N(2), SetId::P(Cmp::Lt, Eps::NE), SetId::R(1, 3, Eps::E), SetId::C(2, 2, Eps::NE)] {
            assert_eq!(parse_set_id(&id.to_string()), Some(id));
        }
    }
}
