//! Systems, configurations, runs, configuration graphs and ε-contraction.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{map_ordered, Exec};
use crate::stack_core::{apply_op, make_initial, Op, Stack, StackError, Symbol};

pub type State = u32;
pub type Letter = u32;
/// `None` is ε.
pub type Label = Option<Letter>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub from: State,
    pub top: Symbol,
    pub label: Label,
    pub to: State,
    pub op: Op,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpsSpec {
    pub level: u8,
    pub letters: Vec<String>,
    pub states: Vec<String>,
    pub initial: State,
    /// symbols[0] is ⊥
    pub symbols: Vec<String>,
    pub transitions: Vec<Transition>,
    /// tree mode: (letter, arity)
    pub ranks: Vec<(Letter, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("step {index}: transition not enabled")]
    NotEnabled { index: usize },
    #[error("step {index}: undefined operation ({err})")]
    UndefinedOp { index: usize, err: StackError },
    #[error("step {index}: ambiguous selector, candidates {candidates:?}")]
    AmbiguousSelector { index: usize, candidates: Vec<usize> },
    #[error("index out of range")]
    IndexOutOfRange,
    #[error("endpoint mismatch")]
    EndpointMismatch,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("generator discipline violated: condition {condition}: {detail}")]
    DisciplineViolation { condition: u8, detail: String },
}

impl CpsSpec {
    pub fn symbol_name(&self, a: Symbol) -> String {
        self.symbols.get(a.0 as usize).cloned().unwrap_or_else(|| format!("g{}", a.0))
    }

    pub fn label_name(&self, l: Label) -> String {
        match l {
            None => "eps".to_string(),
            Some(a) => self.letters.get(a as usize).cloned().unwrap_or_else(|| format!("l{}", a)),
        }
    }

    pub fn state_name(&self, q: State) -> String {
        self.states.get(q as usize).cloned().unwrap_or_else(|| format!("q{}", q))
    }

    pub fn letter_id(&self, name: &str) -> Option<Letter> {
        self.letters.iter().position(|l| l == name).map(|i| i as Letter)
    }

    pub fn state_id(&self, name: &str) -> Option<State> {
        self.states.iter().position(|l| l == name).map(|i| i as State)
    }

    pub fn symbol_id(&self, name: &str) -> Option<Symbol> {
        self.symbols.iter().position(|l| l == name).map(|i| Symbol(i as u16))
    }

    pub fn render_stack(&self, s: &Stack) -> String {
        s.render(&|a| {
            if a == Symbol::BOTTOM {
                "⊥".to_string()
            } else {
                self.symbol_name(a)
            }
        })
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let bad = |m: String| Err(MachineError::InvalidSpec(m));
        if self.level == 0 {
            return bad("level must be ≥ 1".into());
        }
        if self.symbols.is_empty() {
            return bad("no stack symbols".into());
        }
        if self.initial as usize >= self.states.len() {
            return bad("initial state undeclared".into());
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.from as usize >= self.states.len() || t.to as usize >= self.states.len() {
                return bad(format!("transition {} references an undeclared state", i));
            }
            if t.top.0 as usize >= self.symbols.len() {
                return bad(format!("transition {} references an undeclared symbol", i));
            }
            if let Some(a) = t.label {
                if a as usize >= self.letters.len() {
                    return bad(format!("transition {} references an undeclared letter", i));
                }
            }
            if let Op::Push1(b, _) = t.op {
                if b.0 as usize >= self.symbols.len() {
                    return bad(format!("transition {} pushes an undeclared symbol", i));
                }
            }
            if t.op.check_levels(self.level).is_err() {
                return bad(format!("transition {} has an operation level above {}", i, self.level));
            }
        }
        Ok(())
    }

    pub fn initial_config(&self) -> Config {
        Config { state: self.initial, stack: make_initial(self.level).expect("level ≥ 1") }
    }

    pub fn eps_transitions(&self) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions.iter().enumerate().filter(|(_, t)| t.label.is_none())
    }

    pub fn non_eps_transitions(&self) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions.iter().enumerate().filter(|(_, t)| t.label.is_some())
    }

    pub fn describe_transition(&self, i: usize) -> String {
        let t = &self.transitions[i];
        format!(
            "{} {} {} {} {}",
            self.state_name(t.from),
            self.symbol_name(t.top),
            self.label_name(t.label),
            self.state_name(t.to),
            self.op_name(t.op)
        )
    }

    pub fn op_name(&self, op: Op) -> String {
        match op {
            Op::Pop(i) => format!("pop{}", i),
            Op::Push(i) => format!("push{}", i),
            Op::Push1(a, k) => format!("push1 {} {}", self.symbol_name(a), k),
            Op::Col(i) => format!("col{}", i),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    pub state: State,
    pub stack: Stack,
}

impl Config {
    pub fn top_symbol(&self) -> Option<Symbol> {
        self.stack.top_symbol()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    /// index into the spec's transition list
    pub index: usize,
    pub t: Transition,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Run {
    pub configs: Vec<Config>,
    pub steps: Vec<Step>,
}

impl Run {
    pub fn empty(c: Config) -> Run {
        Run { configs: vec![c], steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn at(&self, i: usize) -> &Config {
        &self.configs[i]
    }

    pub fn first(&self) -> &Config {
        &self.configs[0]
    }

    pub fn last(&self) -> &Config {
        self.configs.last().unwrap()
    }

    pub fn ops(&self) -> impl Iterator<Item = Op> + '_ {
        self.steps.iter().map(|s| s.t.op)
    }

    pub fn all_eps(&self) -> bool {
        self.steps.iter().all(|s| s.t.label.is_none())
    }

    pub fn non_eps_count(&self) -> usize {
        self.steps.iter().filter(|s| s.t.label.is_some()).count()
    }

    /// R[i..j]
    pub fn subrun(&self, i: usize, j: usize) -> Result<Run, MachineError> {
        if i > j || j > self.len() {
            return Err(MachineError::IndexOutOfRange);
        }
        Ok(Run { configs: self.configs[i..=j].to_vec(), steps: self.steps[i..j].to_vec() })
    }

    pub fn compose(&self, other: &Run) -> Result<Run, MachineError> {
        if self.last() != other.first() {
            return Err(MachineError::EndpointMismatch);
        }
        let mut configs = self.configs.clone();
        configs.extend_from_slice(&other.configs[1..]);
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&other.steps);
        Ok(Run { configs, steps })
    }

    pub fn push_step(&mut self, index: usize, t: Transition, c: Config) {
        self.steps.push(Step { index, t });
        self.configs.push(c);
    }

    /// Re-check every step against the spec.
    pub fn validate(&self, spec: &CpsSpec) -> Result<(), MachineError> {
        if self.configs.len() != self.steps.len() + 1 {
            return Err(MachineError::IndexOutOfRange);
        }
        for (i, s) in self.steps.iter().enumerate() {
            if spec.transitions.get(s.index) != Some(&s.t) {
                return Err(MachineError::NotEnabled { index: i });
            }
            let next = step_at(spec, &self.configs[i], s.index, i)?;
            if next != self.configs[i + 1] {
                return Err(MachineError::NotEnabled { index: i });
            }
        }
        Ok(())
    }
}

fn step_at(spec: &CpsSpec, c: &Config, ti: usize, index: usize) -> Result<Config, MachineError> {
    let t = spec.transitions.get(ti).ok_or(MachineError::IndexOutOfRange)?;
    if t.from != c.state || c.top_symbol() != Some(t.top) {
        return Err(MachineError::NotEnabled { index });
    }
    let stack = apply_op(t.op, &c.stack).map_err(|err| MachineError::UndefinedOp { index, err })?;
    Ok(Config { state: t.to, stack })
}

/// Apply transition number `ti`.
pub fn step(spec: &CpsSpec, c: &Config, ti: usize) -> Result<Config, MachineError> {
    step_at(spec, c, ti, 0)
}

/// Enabled transitions in declaration order with their successors.
pub fn successors(spec: &CpsSpec, c: &Config) -> Vec<(usize, Config)> {
    let top = c.top_symbol();
    let mut out = Vec::new();
    for (i, t) in spec.transitions.iter().enumerate() {
        if t.from == c.state && Some(t.top) == top {
            if let Ok(stack) = apply_op(t.op, &c.stack) {
                out.push((i, Config { state: t.to, stack }));
            }
        }
    }
    out
}

/// A script entry: a transition index or a (label, op) selector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selector {
    Index(usize),
    /// label: None matches any label; Some(l) matches exactly. pick disambiguates.
    Match { label: Option<Label>, op: Op, pick: Option<usize> },
}

impl Selector {
    pub fn op(op: Op) -> Selector {
        Selector::Match { label: None, op, pick: None }
    }
}

pub fn replay(spec: &CpsSpec, start: &Config, script: &[Selector]) -> Result<Run, MachineError> {
    let mut run = Run::empty(start.clone());
    for (index, sel) in script.iter().enumerate() {
        let c = run.last().clone();
        let ti = match sel {
            Selector::Index(i) => *i,
            Selector::Match { label, op, pick } => {
                let top = c.top_symbol();
                let cands: Vec<usize> = spec
                    .transitions
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| {
                        t.from == c.state
                            && Some(t.top) == top
                            && t.op == *op
                            && label.is_none_or(|l| l == t.label)
                    })
                    .map(|(i, _)| i)
                    .collect();
                match (cands.len(), pick) {
                    (0, _) => return Err(MachineError::NotEnabled { index }),
                    (_, Some(p)) => *cands.get(*p).ok_or(MachineError::NotEnabled { index })?,
                    (1, None) => cands[0],
                    _ => return Err(MachineError::AmbiguousSelector { index, candidates: cands }),
                }
            }
        };
        let next = step_at(spec, &c, ti, index)?;
        run.push_step(ti, spec.transitions[ti], next);
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_nodes: usize,
    pub max_depth: usize,
    /// depth counts only non-ε edges (ε-closures below the bound are explored fully)
    pub letter_depth: bool,
}

impl Caps {
    pub fn depth(d: usize) -> Caps {
        Caps { max_nodes: 200_000, max_depth: d, letter_depth: false }
    }

    pub fn letters(d: usize) -> Caps {
        Caps { max_nodes: 200_000, max_depth: d, letter_depth: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub label: Label,
    pub dst: usize,
    pub transition: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigGraph {
    pub nodes: Vec<Config>,
    pub depth: Vec<usize>,
    /// false for frontier nodes whose successors were not computed
    pub expanded: Vec<bool>,
    pub edges: Vec<Edge>,
    pub truncated_nodes: bool,
    pub truncated_depth: bool,
}

impl ConfigGraph {
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.src].push(i);
        }
        out
    }

    pub fn index_of(&self, c: &Config) -> Option<usize> {
        self.nodes.iter().position(|d| d == c)
    }

    pub fn truncated(&self) -> bool {
        self.truncated_nodes || self.truncated_depth
    }
}

/// BFS from the initial configuration. Node order is discovery order with
/// successors in transition declaration order, in both execution modes.
pub fn explore(spec: &CpsSpec, caps: Caps) -> ConfigGraph {
    explore_with(spec, caps, Exec::default())
}

pub fn explore_from(spec: &CpsSpec, start: Config, caps: Caps, exec: Exec) -> ConfigGraph {
    let mut g = ConfigGraph {
        nodes: vec![start.clone()],
        depth: vec![0],
        expanded: vec![false],
        edges: Vec::new(),
        truncated_nodes: false,
        truncated_depth: false,
    };
    let mut index: HashMap<Config, usize> = HashMap::new();
    index.insert(start, 0);
    // frontier: nodes at the current depth, in order. In letter mode an
    // ε-successor joins the current layer and is expanded in a later sub-round.
    let mut frontier = vec![0usize];
    let mut next_layer: Vec<usize> = Vec::new();
    while !frontier.is_empty() {
        let cfgs: Vec<Config> = frontier.iter().map(|&i| g.nodes[i].clone()).collect();
        let succs = map_ordered(exec, &cfgs, |c| successors(spec, c));
        let mut same_layer = Vec::new();
        for (&src, list) in frontier.iter().zip(succs) {
            let d = g.depth[src];
            let mut full = false;
            for (ti, c) in &list {
                let t = &spec.transitions[*ti];
                let nd = if caps.letter_depth && t.label.is_none() { d } else { d + 1 };
                if nd > caps.max_depth {
                    g.truncated_depth = true;
                    full = true;
                    continue;
                }
                let dst = match index.get(c) {
                    Some(&j) => j,
                    None => {
                        if g.nodes.len() >= caps.max_nodes {
                            g.truncated_nodes = true;
                            full = true;
                            continue;
                        }
                        let j = g.nodes.len();
                        g.nodes.push(c.clone());
                        g.depth.push(nd);
                        g.expanded.push(false);
                        index.insert(c.clone(), j);
                        if nd == d {
                            same_layer.push(j);
                        } else {
                            next_layer.push(j);
                        }
                        j
                    }
                };
                g.edges.push(Edge { src, label: t.label, dst, transition: *ti });
            }
            g.expanded[src] = !full;
        }
        if !same_layer.is_empty() {
            frontier = same_layer;
        } else {
            frontier = std::mem::take(&mut next_layer);
        }
    }
    g
}

pub fn explore_with(spec: &CpsSpec, caps: Caps, exec: Exec) -> ConfigGraph {
    explore_from(spec, spec.initial_config(), caps, exec)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractedEdge {
    pub src: usize,
    pub letter: Letter,
    pub dst: usize,
    /// false if the ε-closure of src reached an unexpanded node
    pub sound: bool,
}

/// Node ids refer to the underlying ConfigGraph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractedGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<ContractedEdge>,
    pub truncated: bool,
}

impl ContractedGraph {
    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    pub fn successors(&self, node: usize) -> Vec<(Letter, usize)> {
        self.edges.iter().filter(|e| e.src == node).map(|e| (e.letter, e.dst)).collect()
    }
}

/// ε-closure of `src` inside g and whether it hit the frontier.
pub fn eps_closure(g: &ConfigGraph, out: &[Vec<usize>], src: usize) -> (Vec<usize>, bool) {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    let mut q = VecDeque::new();
    let mut frontier = false;
    seen.insert(src);
    q.push_back(src);
    while let Some(u) = q.pop_front() {
        order.push(u);
        if !g.expanded[u] {
            frontier = true;
        }
        for &ei in &out[u] {
            let e = &g.edges[ei];
            if e.label.is_none() && seen.insert(e.dst) {
                q.push_back(e.dst);
            }
        }
    }
    (order, frontier)
}

pub fn eps_contract(g: &ConfigGraph, include_initial: bool) -> ContractedGraph {
    eps_contract_with(g, include_initial, Exec::default())
}

pub fn eps_contract_with(g: &ConfigGraph, include_initial: bool, exec: Exec) -> ContractedGraph {
    let mut is_node = vec![false; g.nodes.len()];
    for e in &g.edges {
        if e.label.is_some() {
            is_node[e.dst] = true;
        }
    }
    if include_initial && !g.nodes.is_empty() {
        is_node[0] = true;
    }
    let nodes: Vec<usize> = (0..g.nodes.len()).filter(|&i| is_node[i]).collect();
    let out = g.out_edges();
    let per = map_ordered(exec, &nodes, |&c| {
        let (clos, frontier) = eps_closure(g, &out, c);
        let mut es = Vec::new();
        let mut seen = HashSet::new();
        for d in clos {
            for &ei in &out[d] {
                let e = &g.edges[ei];
                if let Some(a) = e.label {
                    if seen.insert((a, e.dst)) {
                        es.push(ContractedEdge { src: c, letter: a, dst: e.dst, sound: !frontier });
                    }
                }
            }
        }
        es
    });
    ContractedGraph { nodes, edges: per.into_iter().flatten().collect(), truncated: g.truncated() }
}

/// Split every state whose incoming transitions mix ε and non-ε labels.
pub fn normalize_eps_states(spec: &CpsSpec) -> CpsSpec {
    let nq = spec.states.len();
    let mut has_eps = vec![false; nq];
    let mut has_letter = vec![false; nq];
    for t in &spec.transitions {
        if t.label.is_none() {
            has_eps[t.to as usize] = true;
        } else {
            has_letter[t.to as usize] = true;
        }
    }
    let mixed: Vec<usize> = (0..nq).filter(|&q| has_eps[q] && has_letter[q]).collect();
    if mixed.is_empty() {
        return spec.clone();
    }
    let mut out = spec.clone();
    let mut twin = vec![None; nq];
    for &q in &mixed {
        twin[q] = Some(out.states.len() as State);
        out.states.push(format!("{}~a", spec.states[q]));
    }
    let retarget = |t: &Transition| -> Transition {
        let mut t = *t;
        if t.label.is_some() {
            if let Some(q2) = twin[t.to as usize] {
                t.to = q2;
            }
        }
        t
    };
    out.transitions = spec.transitions.iter().map(retarget).collect();
    let base = out.transitions.clone();
    for &q in &mixed {
        for t in base.iter().filter(|t| t.from as usize == q) {
            let mut d = *t;
            d.from = twin[q].unwrap();
            out.transitions.push(d);
        }
    }
    out
}

pub fn is_eps_normalized(spec: &CpsSpec) -> bool {
    let nq = spec.states.len();
    let mut kinds = vec![(false, false); nq];
    for t in &spec.transitions {
        let k = &mut kinds[t.to as usize];
        if t.label.is_none() {
            k.0 = true;
        } else {
            k.1 = true;
        }
    }
    kinds.iter().all(|&(a, b)| !(a && b))
}

/// Every run from `from` of length ≤ max_len, depth-first, transitions in
/// declaration order, shorter prefixes first.
pub struct RunEnumerator<'a> {
    spec: &'a CpsSpec,
    max_len: usize,
    // stack of (run, pending successors not yet visited)
    work: Vec<(Run, Vec<(usize, Config)>)>,
    started: Option<Run>,
}

impl<'a> Iterator for RunEnumerator<'a> {
    type Item = Run;

    fn next(&mut self) -> Option<Run> {
        if let Some(r) = self.started.take() {
            let succ = if self.max_len > 0 { successors(self.spec, r.last()) } else { Vec::new() };
            let mut succ = succ;
            succ.reverse();
            self.work.push((r.clone(), succ));
            return Some(r);
        }
        loop {
            let (run, pending) = self.work.last_mut()?;
            match pending.pop() {
                None => {
                    self.work.pop();
                }
                Some((ti, c)) => {
                    let mut r = run.clone();
                    r.push_step(ti, self.spec.transitions[ti], c);
                    let succ = if r.len() < self.max_len {
                        let mut s = successors(self.spec, r.last());
                        s.reverse();
                        s
                    } else {
                        Vec::new()
                    };
                    self.work.push((r.clone(), succ));
                    return Some(r);
                }
            }
        }
    }
}

pub fn enumerate_runs<'a>(spec: &'a CpsSpec, from: &Config, max_len: usize) -> RunEnumerator<'a> {
    RunEnumerator { spec, max_len, work: Vec::new(), started: Some(Run::empty(from.clone())) }
}

/// Runs of length ≤ max_len, collected; parallel over the first step.
pub fn collect_runs(spec: &CpsSpec, from: &Config, max_len: usize, exec: Exec) -> Vec<Run> {
    let root = Run::empty(from.clone());
    if max_len == 0 {
        return vec![root];
    }
    let firsts: Vec<Run> = successors(spec, from)
        .into_iter()
        .map(|(ti, c)| {
            let mut r = root.clone();
            r.push_step(ti, spec.transitions[ti], c);
            r
        })
        .collect();
    let subtrees = map_ordered(exec, &firsts, |r| {
        let mut acc = Vec::new();
        extend_runs(spec, r.clone(), max_len, &mut acc);
        acc
    });
    let mut out = vec![root];
    for t in subtrees {
        out.extend(t);
    }
    out
}

fn extend_runs(spec: &CpsSpec, r: Run, max_len: usize, acc: &mut Vec<Run>) {
    let succ = if r.len() < max_len { successors(spec, r.last()) } else { Vec::new() };
    acc.push(r.clone());
    for (ti, c) in succ {
        let mut s = r.clone();
        s.push_step(ti, spec.transitions[ti], c);
        extend_runs(spec, s, max_len, acc);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum StateClass {
    Eps,
    Rank(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GeneratedTree {
    pub label: Letter,
    pub children: Vec<GeneratedTree>,
    /// children beyond the depth bound were not unfolded
    pub cut: bool,
}

impl GeneratedTree {
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(|c| c.size()).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreeReport {
    pub tree: Option<GeneratedTree>,
    /// condition-3 checks that ran out of fuel
    pub unknown: Vec<String>,
}

fn digit_of(spec: &CpsSpec, a: Letter) -> Option<u32> {
    spec.letters[a as usize].parse::<u32>().ok()
}

fn rank_of(spec: &CpsSpec, a: Letter) -> Option<u32> {
    spec.ranks.iter().find(|(l, _)| *l == a).map(|(_, r)| *r)
}

/// Partition of the states per the generator discipline, or a violation.
pub fn classify_generator_states(spec: &CpsSpec) -> Result<Vec<StateClass>, MachineError> {
    let viol = |d: String| MachineError::DisciplineViolation { condition: 2, detail: d };
    let nq = spec.states.len();
    let mut class: Vec<Option<StateClass>> = vec![None; nq];
    let set = |q: State, c: StateClass, class: &mut Vec<Option<StateClass>>| -> Result<(), MachineError> {
        match &class[q as usize] {
            Some(old) if *old != c => Err(viol(format!("state {} has conflicting roles", spec.state_name(q)))),
            _ => {
                class[q as usize] = Some(c);
                Ok(())
            }
        }
    };
    set(spec.initial, StateClass::Eps, &mut class)?;
    for t in &spec.transitions {
        match t.label {
            None => {
                set(t.from, StateClass::Eps, &mut class)?;
                set(t.to, StateClass::Eps, &mut class)?;
            }
            Some(a) => {
                if let Some(r) = rank_of(spec, a) {
                    set(t.from, StateClass::Eps, &mut class)?;
                    set(t.to, StateClass::Rank(r), &mut class)?;
                } else if digit_of(spec, a).is_some() {
                    set(t.to, StateClass::Eps, &mut class)?;
                } else {
                    return Err(viol(format!("letter {} is neither ranked nor a direction", spec.letters[a as usize])));
                }
            }
        }
    }
    // states with digit transitions but no class yet: infer from the digits used
    for t in &spec.transitions {
        if let Some(a) = t.label {
            if rank_of(spec, a).is_none() && class[t.from as usize].is_none() {
                let maxd = spec
                    .transitions
                    .iter()
                    .filter(|u| u.from == t.from)
                    .filter_map(|u| u.label.and_then(|l| digit_of(spec, l)))
                    .max()
                    .unwrap();
                class[t.from as usize] = Some(StateClass::Rank(maxd + 1));
            }
        }
    }
    let class: Vec<StateClass> = class.into_iter().map(|c| c.unwrap_or(StateClass::Eps)).collect();
    for q in 0..nq as State {
        for g in 0..spec.symbols.len() as u16 {
            let outs: Vec<&Transition> =
                spec.transitions.iter().filter(|t| t.from == q && t.top == Symbol(g)).collect();
            match class[q as usize] {
                StateClass::Eps => {
                    if outs.len() > 1 {
                        return Err(viol(format!(
                            "ε-state {} has {} transitions on {}",
                            spec.state_name(q),
                            outs.len(),
                            spec.symbol_name(Symbol(g))
                        )));
                    }
                    for t in outs {
                        if let Some(a) = t.label {
                            if rank_of(spec, a).is_none() {
                                return Err(viol(format!("ε-state {} reads a direction", spec.state_name(q))));
                            }
                        }
                    }
                }
                StateClass::Rank(r) => {
                    let mut ds: Vec<u32> = outs.iter().filter_map(|t| t.label.and_then(|l| digit_of(spec, l))).collect();
                    ds.sort_unstable();
                    let want: Vec<u32> = (0..r).collect();
                    if ds != want || outs.len() != r as usize {
                        return Err(viol(format!(
                            "state {} of rank {} needs exactly the directions 0..{} on {}",
                            spec.state_name(q),
                            r,
                            r,
                            spec.symbol_name(Symbol(g))
                        )));
                    }
                }
            }
        }
    }
    Ok(class)
}

/// Unfold the generated tree to `depth` (root at depth 0). `fuel` bounds each
/// deterministic ε-run; exhausting it is reported as unknown.
pub fn generate_tree(spec: &CpsSpec, depth: usize, fuel: usize) -> Result<TreeReport, MachineError> {
    let class = classify_generator_states(spec)?;
    let mut unknown = Vec::new();
    let tree = gen_node(spec, &class, spec.initial_config(), depth, fuel, &mut unknown)?;
    Ok(TreeReport { tree, unknown })
}

fn gen_node(
    spec: &CpsSpec,
    class: &[StateClass],
    mut c: Config,
    depth: usize,
    fuel: usize,
    unknown: &mut Vec<String>,
) -> Result<Option<GeneratedTree>, MachineError> {
    // deterministic ε-phase until a ranked letter is read
    for _ in 0..fuel {
        let succ = successors(spec, &c);
        let (ti, d) = match succ.into_iter().next() {
            Some(x) => x,
            None => {
                return Err(MachineError::DisciplineViolation {
                    condition: 3,
                    detail: format!("blocked in ε-state {}", spec.state_name(c.state)),
                })
            }
        };
        let t = &spec.transitions[ti];
        c = d;
        if let Some(a) = t.label {
            let r = match class[c.state as usize] {
                StateClass::Rank(r) => r,
                StateClass::Eps => unreachable!("checked by the partition"),
            };
            if depth == 0 {
                return Ok(Some(GeneratedTree { label: a, children: Vec::new(), cut: r > 0 }));
            }
            let succ = successors(spec, &c);
            if succ.len() != r as usize {
                return Err(MachineError::DisciplineViolation {
                    condition: 3,
                    detail: format!("only {} of {} directions applicable", succ.len(), r),
                });
            }
            let mut kids: Vec<(u32, GeneratedTree)> = Vec::new();
            for (ti, d) in succ {
                let dir = spec.transitions[ti].label.and_then(|l| digit_of(spec, l)).unwrap();
                if let Some(k) = gen_node(spec, class, d, depth - 1, fuel, unknown)? {
                    kids.push((dir, k));
                }
            }
            kids.sort_by_key(|(d, _)| *d);
            let cut = kids.len() < r as usize;
            return Ok(Some(GeneratedTree { label: a, children: kids.into_iter().map(|(_, k)| k).collect(), cut }));
        }
    }
    unknown.push(format!("ε-phase from state {} exceeded fuel {}", spec.state_name(c.state), fuel));
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(level: u8, ops: &[Op], letters: bool) -> CpsSpec {
        let transitions = ops
            .iter()
            .enumerate()
            .map(|(i, &op)| Transition {
                from: 0,
                top: Symbol::BOTTOM,
                label: if letters { Some(i as Letter) } else { None },
                to: 0,
                op,
            })
            .collect();
        CpsSpec {
            level,
            letters: (0..ops.len()).map(|i| format!("a{}", i)).collect(),
            states: vec!["q".into()],
            initial: 0,
            symbols: vec!["⊥".into()],
            transitions,
            ranks: vec![],
        }
    }

    #[test]
    fn step_examples() {
        let mut spec = one_state(1, &[Op::Push1(Symbol(1), 1)], false);
        spec.symbols.push("A".into());
        spec.states.push("q1".into());
        spec.transitions[0].to = 1;
        let c = spec.initial_config();
        let d = step(&spec, &c, 0).unwrap();
        assert_eq!(d.state, 1);
        assert_eq!(spec.render_stack(&d.stack), "[⊥ A]");
        assert_eq!(step(&spec, &d, 0), Err(MachineError::NotEnabled { index: 0 }));
        let pop = one_state(1, &[Op::Pop(1)], false);
        assert!(matches!(step(&pop, &pop.initial_config(), 0), Err(MachineError::UndefinedOp { .. })));
    }

    #[test]
    fn replay_and_ambiguity() {
        let spec = one_state(2, &[Op::Push(2), Op::Pop(2), Op::Push(2)], false);
        let c = spec.initial_config();
        assert_eq!(replay(&spec, &c, &[]).unwrap().len(), 0);
        let r = replay(&spec, &c, &[Selector::Index(0), Selector::op(Op::Push(2))]);
        assert_eq!(r, Err(MachineError::AmbiguousSelector { index: 1, candidates: vec![0, 2] }));
        let sel = Selector::Match { label: None, op: Op::Push(2), pick: Some(1) };
        let r = replay(&spec, &c, &[sel, Selector::op(Op::Pop(2))]).unwrap();
        assert_eq!(r.steps[0].index, 2);
        assert_eq!(r.last(), &c);
    }

    #[test]
    fn subrun_compose() {
        let spec = one_state(2, &[Op::Push(2)], false);
        let r = replay(&spec, &spec.initial_config(), &vec![Selector::Index(0); 4]).unwrap();
        assert_eq!(r.subrun(0, 4).unwrap(), r);
        for i in 0..=4 {
            let a = r.subrun(0, i).unwrap();
            let b = r.subrun(i, 4).unwrap();
            assert_eq!(a.compose(&b).unwrap(), r);
        }
        assert_eq!(r.subrun(3, 2), Err(MachineError::IndexOutOfRange));
        let a = r.subrun(0, 1).unwrap();
        assert_eq!(a.compose(&a), Err(MachineError::EndpointMismatch));
    }

    #[test]
    fn explore_basics() {
        let none = one_state(1, &[], false);
        let g = explore(&none, Caps::depth(5));
        assert_eq!((g.nodes.len(), g.edges.len()), (1, 0));
        let loop1 = one_state(1, &[Op::Push1(Symbol::BOTTOM, 1)], false);
        let g = explore(&loop1, Caps::depth(3));
        assert_eq!(g.nodes.len(), 4);
        assert!(g.truncated_depth);
        let g = explore(&loop1, Caps { max_nodes: 2, max_depth: 3, letter_depth: false });
        assert_eq!(g.nodes.len(), 2);
        assert!(g.truncated_nodes);
        let c = eps_contract(&explore(&loop1, Caps::depth(3)), false);
        assert!(c.nodes.is_empty());
    }

    #[test]
    fn contraction_chain() {
        let mut spec = one_state(1, &[Op::Push1(Symbol::BOTTOM, 1), Op::Push1(Symbol::BOTTOM, 1)], false);
        spec.states = vec!["c".into(), "c1".into(), "d".into()];
        spec.letters = vec!["a".into()];
        spec.transitions[0].to = 1;
        spec.transitions[1] = Transition { from: 1, top: Symbol::BOTTOM, label: Some(0), to: 2, op: Op::Pop(1) };
        let g = explore(&spec, Caps::depth(5));
        let cg = eps_contract(&g, true);
        assert_eq!(cg.nodes, vec![0, 2]);
        assert_eq!(cg.edges, vec![ContractedEdge { src: 0, letter: 0, dst: 2, sound: true }]);
    }

    #[test]
    fn normalize_splits_mixed() {
        let mut spec = one_state(1, &[Op::Push1(Symbol::BOTTOM, 1), Op::Push1(Symbol::BOTTOM, 1)], true);
        spec.transitions[0].label = None;
        assert!(!is_eps_normalized(&spec));
        let n = normalize_eps_states(&spec);
        assert!(is_eps_normalized(&n));
        assert_eq!(n.states.len(), 2);
        assert_eq!(normalize_eps_states(&n), n);
        let empty = one_state(1, &[], false);
        assert_eq!(normalize_eps_states(&empty), empty);
    }

    #[test]
    fn enumerate_counts() {
        let spec = one_state(2, &[Op::Push(2), Op::Push1(Symbol::BOTTOM, 1)], false);
        let c = spec.initial_config();
        assert_eq!(enumerate_runs(&spec, &c, 0).count(), 1);
        assert_eq!(enumerate_runs(&spec, &c, 2).count(), 7);
        let a: Vec<Run> = enumerate_runs(&spec, &c, 3).collect();
        let b = collect_runs(&spec, &c, 3, Exec::Sequential);
        let p = collect_runs(&spec, &c, 3, Exec::Parallel);
        assert_eq!(a, b);
        assert_eq!(b, p);
    }
}
