//! Types of stacks and configurations with respect to a described family.
//!
//! Type sets of levels 1..n are stored explicitly as antichains of
//! generators. A generator stands for every descriptor with larger
//! assumptions and smaller outputs, which is how types behave. Types of
//! 0-stacks stay symbolic: a key (symbol, link level, link type) whose
//! members are computed on demand by a tabled least fixpoint. Each tabled
//! fact records the rule and sub-facts that admitted it.
//!
//! With n = 1 every tabled answer is exact. For n >= 2, producing an
//! explicit set from a symbolic one has to range over assumption sets of
//! higher levels. That range is the pool of sets materialized so far, or
//! every subset of the top-level universe in exhaustive mode.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::machine::{step, Config, CpsSpec, MachineError, Run, State};
use crate::run_classes::{derive, Derivation, Grammar, SetId};
use crate::stack_core::{Op, Stack, Symbol};

pub type SetRef = u32;
pub type ZeroRef = u32;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("limit exceeded: {cap} (limit {limit})")]
    LimitExceeded { cap: &'static str, limit: usize },
    #[error("arity or level mismatch: {0}")]
    Arity(String),
    #[error("grammar must be wf-closed")]
    NotWfClosed,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("engine incomplete: {0}")]
    Incomplete(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TypeRef {
    Set(SetRef),
    Zero(ZeroRef),
}

/// (assumptions for levels n..k+1, state, set, outputs for levels n..lev+1, state)
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Gen {
    pub assume: Vec<SetRef>,
    pub p: State,
    pub x: usize,
    pub out: Vec<SetRef>,
    pub q: State,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct TypeSet {
    pub level: u8,
    pub ne: bool,
    pub gens: Vec<Gen>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ZeroKey {
    pub a: Symbol,
    pub k: u8,
    pub sigma: SetRef,
}

/// Goal part of a descriptor: a set, output types for levels n..lev(X)+1, a final state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Goal {
    pub x: usize,
    pub omega: Vec<SetRef>,
    pub q: State,
}

/// A level-0 descriptor: assumptions for levels n..1, start state, goal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Descriptor {
    pub assume: Vec<SetRef>,
    pub p: State,
    pub goal: Goal,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ConfigType {
    /// levels n..0
    pub comps: Vec<TypeRef>,
    pub state: State,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    Pool,
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Limits {
    pub max_nodes: usize,
    pub max_sets: usize,
    /// assumption vectors tried when materializing or comparing
    pub max_product: usize,
    /// exhaustive mode: 2^this subsets at most
    pub max_subsets_log2: u32,
    pub synth_fuel: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_nodes: 200_000, max_sets: 200_000, max_product: 20_000, max_subsets_log2: 16, synth_fuel: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct OutKey {
    zero: ZeroRef,
    psi: Vec<SetRef>,
    p: State,
    x: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Sub {
    Out { node: usize, outcome: usize },
    Gen { set: SetRef, gen: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Why {
    Empty,
    Step { rule: usize, first: Option<Sub>, second: Option<Sub> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub q: State,
    pub omega: Vec<SetRef>,
    pub stamp: u64,
    pub why: Why,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum NodeId {
    Out(u32),
    Mat(u32),
}

struct OutNode {
    key: OutKey,
    outcomes: Vec<Outcome>,
    dependents: BTreeSet<NodeId>,
    queued: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct MatKey {
    /// levels k..1
    parts: Vec<SetRef>,
    zero: ZeroRef,
}

struct MatNode {
    key: MatKey,
    value: SetRef,
    pool_seen: Vec<u64>,
    dependents: BTreeSet<NodeId>,
    queued: bool,
    /// its key is built from pool members, so its value is one too
    live: bool,
}

pub struct TypeEngine {
    pub spec: CpsSpec,
    pub grammar: Grammar,
    pub mode: Mode,
    pub limits: Limits,
    n: u8,
    sets: Vec<TypeSet>,
    set_index: HashMap<TypeSet, SetRef>,
    /// assumption pools: pinned sets and current materialization values
    pool: Vec<BTreeMap<SetRef, u32>>,
    pool_version: Vec<u64>,
    pinned: HashSet<SetRef>,
    parked: BTreeSet<NodeId>,
    empty: Vec<SetRef>,
    zeros: Vec<ZeroKey>,
    zero_index: HashMap<ZeroKey, ZeroRef>,
    outs: Vec<OutNode>,
    out_index: HashMap<OutKey, u32>,
    by_head: HashMap<(Symbol, u8, State, usize), Vec<u32>>,
    mats: Vec<MatNode>,
    mat_index: HashMap<MatKey, u32>,
    queue: VecDeque<NodeId>,
    stamp: u64,
    subset_memo: HashMap<(SetRef, SetRef), bool>,
    type_memo: HashMap<Stack, TypeRef>,
    rules_by_lhs: Vec<Vec<usize>>,
    empty_rule: Vec<bool>,
    full_top_pool: Option<Vec<SetRef>>,
}

fn l_of(op: Op) -> u8 {
    match op {
        Op::Pop(k) | Op::Col(k) => k,
        _ => 0,
    }
}

/// Topmost-first decomposition s^n, ..., s^0 of a full stack.
pub fn components(s: &Stack) -> Vec<Stack> {
    let mut out = Vec::new();
    let mut cur = s.clone();
    while cur.level() > 0 {
        let top = cur.top_item().expect("configuration stacks have a full spine").clone();
        out.push(cur.without_top());
        cur = top;
    }
    out.push(cur);
    out
}

impl TypeEngine {
    pub fn new(spec: &CpsSpec, grammar: &Grammar) -> Result<TypeEngine, EngineError> {
        Self::with(spec, grammar, Mode::Pool, Limits::default())
    }

    pub fn with(spec: &CpsSpec, grammar: &Grammar, mode: Mode, limits: Limits) -> Result<TypeEngine, EngineError> {
        if !grammar.wf_closed {
            return Err(EngineError::NotWfClosed);
        }
        if grammar.n != spec.level {
            return Err(EngineError::Arity("grammar and system levels differ".into()));
        }
        let n = spec.level;
        let mut rules_by_lhs = vec![Vec::new(); grammar.sets.len()];
        let mut empty_rule = vec![false; grammar.sets.len()];
        for (i, r) in grammar.rules.iter().enumerate() {
            if r.delta.is_none() {
                empty_rule[r.lhs] = true;
            } else {
                rules_by_lhs[r.lhs].push(i);
            }
        }
        let mut e = TypeEngine {
            spec: spec.clone(),
            grammar: grammar.clone(),
            mode,
            limits,
            n,
            sets: Vec::new(),
            set_index: HashMap::new(),
            pool: vec![BTreeMap::new(); n as usize + 1],
            pool_version: vec![0; n as usize + 1],
            pinned: HashSet::new(),
            parked: BTreeSet::new(),
            empty: vec![0; n as usize + 1],
            zeros: Vec::new(),
            zero_index: HashMap::new(),
            outs: Vec::new(),
            out_index: HashMap::new(),
            by_head: HashMap::new(),
            mats: Vec::new(),
            mat_index: HashMap::new(),
            queue: VecDeque::new(),
            stamp: 0,
            subset_memo: HashMap::new(),
            type_memo: HashMap::new(),
            rules_by_lhs,
            empty_rule,
            full_top_pool: None,
        };
        for k in 1..=n {
            let r = e.intern(TypeSet { level: k, ne: false, gens: vec![] })?;
            e.empty[k as usize] = r;
            e.pin(r);
        }
        Ok(e)
    }

    pub fn level(&self) -> u8 {
        self.n
    }

    pub fn set(&self, r: SetRef) -> &TypeSet {
        &self.sets[r as usize]
    }

    pub fn zero(&self, r: ZeroRef) -> ZeroKey {
        self.zeros[r as usize]
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    fn epoch(&self) -> u64 {
        self.pool_version.iter().sum::<u64>() + self.pinned.len() as u64
    }

    /// Run f until no pool changes underneath it, so that all types it
    /// computes and compares come from the same pools. Memoized stack types
    /// are recomputed on every attempt.
    pub fn settle<T, E: From<EngineError>>(&mut self, mut f: impl FnMut(&mut Self) -> Result<T, E>) -> Result<T, E> {
        for _ in 0..32 {
            self.type_memo.clear();
            let before = self.epoch();
            let v = f(self)?;
            if self.epoch() == before {
                return Ok(v);
            }
        }
        Err(EngineError::Incomplete("types did not settle".into()).into())
    }

    /// (out nodes, materialization nodes, live materializations, distinct zero types)
    pub fn stats(&self) -> (usize, usize, usize, usize) {
        (self.outs.len(), self.mats.len(), self.mats.iter().filter(|m| m.live).count(), self.zeros.len())
    }

    pub fn node_count(&self) -> usize {
        self.outs.len() + self.mats.len()
    }

    pub fn empty_set(&self, k: u8) -> SetRef {
        self.empty[k as usize]
    }

    // ---- interning and order ----

    pub fn intern(&mut self, mut s: TypeSet) -> Result<SetRef, EngineError> {
        s.gens.sort();
        s.gens.dedup();
        let gens = std::mem::take(&mut s.gens);
        let mut keep = Vec::with_capacity(gens.len());
        for (i, g) in gens.iter().enumerate() {
            let dominated = gens.iter().enumerate().any(|(j, h)| {
                j != i && self.covers(h, g) && (!self.covers(g, h) || j < i)
            });
            if !dominated {
                keep.push(g.clone());
            }
        }
        s.gens = keep;
        if let Some(&r) = self.set_index.get(&s) {
            return Ok(r);
        }
        if self.sets.len() >= self.limits.max_sets {
            return Err(EngineError::LimitExceeded { cap: "max_sets", limit: self.limits.max_sets });
        }
        let r = self.sets.len() as SetRef;
        self.set_index.insert(s.clone(), r);
        self.sets.push(s);
        Ok(r)
    }

    fn pool_add(&mut self, r: SetRef) {
        let l = self.sets[r as usize].level as usize;
        let c = self.pool[l].entry(r).or_insert(0);
        *c += 1;
        if *c == 1 {
            self.pool_version[l] += 1;
        }
    }

    fn pool_remove(&mut self, r: SetRef) {
        let l = self.sets[r as usize].level as usize;
        let c = self.pool[l].get_mut(&r).expect("pool counts match");
        *c -= 1;
        if *c == 0 {
            self.pool[l].remove(&r);
            self.pool_version[l] += 1;
        }
    }

    fn in_pool(&self, r: SetRef) -> bool {
        let l = self.sets[r as usize].level;
        (self.mode == Mode::Exhaustive && l == self.n) || self.pool[l as usize].contains_key(&r)
    }

    /// Nodes keyed by superseded sets are parked instead of evaluated.
    fn node_current(&self, id: NodeId) -> bool {
        match id {
            NodeId::Out(i) => {
                let k = &self.outs[i as usize].key;
                k.psi.iter().all(|&p| self.in_pool(p)) && self.in_pool(self.zeros[k.zero as usize].sigma)
            }
            NodeId::Mat(i) => self.key_in_pool(&self.mats[i as usize].key),
        }
    }

    fn key_in_pool(&self, key: &MatKey) -> bool {
        key.parts.iter().all(|&p| self.in_pool(p)) && self.in_pool(self.zeros[key.zero as usize].sigma)
    }

    /// Rebuild the pools from the pinned sets: a materialization counts only
    /// when its key is made of pool members. Returns whether a pool changed.
    fn refresh_pools(&mut self) -> bool {
        let before: Vec<Vec<SetRef>> = self.pool.iter().map(|p| p.keys().copied().collect()).collect();
        for p in &mut self.pool {
            p.clear();
        }
        let pinned: Vec<SetRef> = self.pinned.iter().copied().collect();
        for r in pinned {
            let l = self.sets[r as usize].level as usize;
            *self.pool[l].entry(r).or_insert(0) += 1;
        }
        for m in &mut self.mats {
            m.live = false;
        }
        loop {
            let mut grew = false;
            for i in 0..self.mats.len() {
                if !self.mats[i].live && self.key_in_pool(&self.mats[i].key) {
                    self.mats[i].live = true;
                    let v = self.mats[i].value;
                    let l = self.sets[v as usize].level as usize;
                    *self.pool[l].entry(v).or_insert(0) += 1;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let mut changed = false;
        for l in 0..self.pool.len() {
            let now: Vec<SetRef> = self.pool[l].keys().copied().collect();
            if now != before[l] {
                self.pool_version[l] += 1;
                changed = true;
            }
        }
        changed
    }

    /// Keep a set in the assumption pool of its level for good.
    fn pin(&mut self, r: SetRef) {
        if self.pinned.insert(r) {
            self.pool_add(r);
        }
    }

    pub fn intern_zero(&mut self, z: ZeroKey) -> ZeroRef {
        if let Some(&r) = self.zero_index.get(&z) {
            return r;
        }
        let r = self.zeros.len() as ZeroRef;
        self.zeros.push(z);
        self.zero_index.insert(z, r);
        r
    }

    /// h stands for every descriptor g stands for.
    fn covers(&mut self, h: &Gen, g: &Gen) -> bool {
        h.p == g.p
            && h.x == g.x
            && h.q == g.q
            && h.assume.iter().zip(&g.assume).all(|(&a, &b)| self.subset(a, b))
            && g.out.iter().zip(&h.out).all(|(&a, &b)| self.subset(a, b))
    }

    /// Semantic inclusion of explicit sets.
    pub fn subset(&mut self, a: SetRef, b: SetRef) -> bool {
        if a == b {
            return true;
        }
        if let Some(&v) = self.subset_memo.get(&(a, b)) {
            return v;
        }
        let sa = self.sets[a as usize].clone();
        let sb = self.sets[b as usize].clone();
        let mut ok = sa.level == sb.level && (!sa.ne || sb.ne);
        if ok {
            for g in &sa.gens {
                if !sb.gens.iter().any(|h| self.covers(h, g)) {
                    ok = false;
                    break;
                }
            }
        }
        self.subset_memo.insert((a, b), ok);
        ok
    }

    fn vec_leq(&mut self, a: &[SetRef], b: &[SetRef]) -> bool {
        a.iter().zip(b).all(|(&x, &y)| self.subset(x, y))
    }

    /// Does the explicit set contain the descriptor (assume, p, goal)?
    pub fn set_contains(&mut self, s: SetRef, assume: &[SetRef], p: State, goal: &Goal) -> bool {
        let probe = Gen { assume: assume.to_vec(), p, x: goal.x, out: goal.omega.clone(), q: goal.q };
        let gens = self.sets[s as usize].gens.clone();
        gens.iter().any(|h| self.covers(h, &probe))
    }

    // ---- composer ----

    /// comp(parts) for explicit parts of levels k..l, l >= 1.
    pub fn comp_explicit(&mut self, parts: &[SetRef]) -> Result<SetRef, EngineError> {
        let k = self.sets[parts[0] as usize].level;
        for (i, &p) in parts.iter().enumerate() {
            if self.sets[p as usize].level as usize + i != k as usize {
                return Err(EngineError::Arity("composer levels must descend by one".into()));
            }
        }
        let l = k as usize + 1 - parts.len();
        let n = self.n as usize;
        let bottom = self.sets[*parts.last().unwrap() as usize].clone();
        let mut gens = Vec::new();
        for g in &bottom.gens {
            if (self.grammar.level(g.x) as usize) < k as usize {
                continue;
            }
            // g.assume covers levels n..l+1; level i sits at n - i
            let ok = (l + 1..=k as usize).all(|i| {
                let want = g.assume[n - i];
                let have = parts[k as usize - i];
                self.subset(want, have)
            });
            if ok {
                gens.push(Gen { assume: g.assume[..n - k as usize].to_vec(), ..g.clone() });
            }
        }
        let ne = l < k as usize || self.sets[parts[0] as usize].ne;
        let r = self.intern(TypeSet { level: k, ne, gens })?;
        self.pin(r);
        Ok(r)
    }

    /// comp over arbitrary parts; a symbolic bottom is materialized.
    pub fn comp(&mut self, parts: &[TypeRef]) -> Result<TypeRef, EngineError> {
        let (last, upper) = parts.split_last().ok_or_else(|| EngineError::Arity("empty composer".into()))?;
        let mut sets = Vec::new();
        for p in upper {
            match p {
                TypeRef::Set(s) => sets.push(*s),
                TypeRef::Zero(_) => return Err(EngineError::Arity("only the last part may be of level 0".into())),
            }
        }
        match *last {
            TypeRef::Set(s) => {
                sets.push(s);
                Ok(TypeRef::Set(self.comp_explicit(&sets)?))
            }
            TypeRef::Zero(z) => {
                if sets.is_empty() {
                    return Ok(TypeRef::Zero(z));
                }
                for (i, &p) in sets.iter().enumerate() {
                    if self.sets[p as usize].level as usize != sets.len() - i {
                        return Err(EngineError::Arity("composer levels must descend by one".into()));
                    }
                }
                Ok(TypeRef::Set(self.materialize(sets, z)?))
            }
        }
    }

    // ---- pools ----

    fn top_universe(&self) -> Vec<Gen> {
        let n = self.n;
        let mut out = Vec::new();
        for p in 0..self.spec.states.len() as State {
            for x in 0..self.grammar.sets.len() {
                if self.grammar.level(x) == n {
                    for q in 0..self.spec.states.len() as State {
                        out.push(Gen { assume: vec![], p, x, out: vec![], q });
                    }
                }
            }
        }
        out
    }

    /// Every subset of the top-level universe (exhaustive mode).
    pub fn all_top_sets(&mut self) -> Result<Vec<SetRef>, EngineError> {
        if let Some(p) = &self.full_top_pool {
            return Ok(p.clone());
        }
        let uni = self.top_universe();
        let bits = uni.len() + 1;
        if bits as u32 > self.limits.max_subsets_log2 {
            return Err(EngineError::LimitExceeded { cap: "max_subsets_log2", limit: self.limits.max_subsets_log2 as usize });
        }
        let mut out = Vec::with_capacity(1 << bits);
        for mask in 0u64..(1u64 << bits) {
            let ne = mask & 1 == 1;
            let gens = (0..uni.len()).filter(|i| mask >> (i + 1) & 1 == 1).map(|i| uni[i].clone()).collect();
            out.push(self.intern(TypeSet { level: self.n, ne, gens })?);
        }
        self.full_top_pool = Some(out.clone());
        Ok(out)
    }

    fn pool(&mut self, level: u8) -> Result<Vec<SetRef>, EngineError> {
        if self.mode == Mode::Exhaustive && level == self.n {
            return self.all_top_sets();
        }
        Ok(self.pool[level as usize].keys().copied().collect())
    }

    fn pool_stamp(&self, level: u8) -> u64 {
        if self.mode == Mode::Exhaustive && level == self.n {
            u64::MAX
        } else {
            self.pool_version[level as usize]
        }
    }

    /// Cartesian product of pools of levels n..=lo (topmost first).
    fn product(&mut self, lo: u8) -> Result<Vec<Vec<SetRef>>, EngineError> {
        let mut acc: Vec<Vec<SetRef>> = vec![vec![]];
        for lvl in (lo..=self.n).rev() {
            let p = self.pool(lvl)?;
            if acc.len().saturating_mul(p.len()) > self.limits.max_product {
                return Err(EngineError::LimitExceeded { cap: "max_product", limit: self.limits.max_product });
            }
            let mut next = Vec::with_capacity(acc.len() * p.len());
            for a in &acc {
                for &s in &p {
                    let mut v = a.clone();
                    v.push(s);
                    next.push(v);
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    // ---- the fixpoint ----

    fn enqueue(&mut self, id: NodeId) {
        let q = match id {
            NodeId::Out(i) => &mut self.outs[i as usize].queued,
            NodeId::Mat(i) => &mut self.mats[i as usize].queued,
        };
        if !*q {
            *q = true;
            self.queue.push_back(id);
        }
    }

    fn check_nodes(&self) -> Result<(), EngineError> {
        if self.outs.len() + self.mats.len() >= self.limits.max_nodes {
            return Err(EngineError::LimitExceeded { cap: "max_nodes", limit: self.limits.max_nodes });
        }
        Ok(())
    }

    fn out_node(&mut self, key: OutKey, reader: Option<NodeId>) -> Result<usize, EngineError> {
        let id = match self.out_index.get(&key) {
            Some(&i) => i,
            None => {
                self.check_nodes()?;
                let i = self.outs.len() as u32;
                let z = self.zeros[key.zero as usize];
                self.by_head.entry((z.a, z.k, key.p, key.x)).or_default().push(i);
                self.out_index.insert(key.clone(), i);
                self.outs.push(OutNode { key, outcomes: Vec::new(), dependents: BTreeSet::new(), queued: false });
                self.enqueue(NodeId::Out(i));
                i
            }
        };
        if let Some(r) = reader {
            self.outs[id as usize].dependents.insert(r);
        }
        Ok(id as usize)
    }

    fn mat_node(&mut self, key: MatKey, reader: Option<NodeId>) -> Result<usize, EngineError> {
        let id = match self.mat_index.get(&key) {
            Some(&i) => i,
            None => {
                self.check_nodes()?;
                let k = key.parts.len() as u8;
                let start = self.intern(TypeSet { level: k, ne: true, gens: vec![] })?;
                let i = self.mats.len() as u32;
                self.mat_index.insert(key.clone(), i);
                let live = self.key_in_pool(&key);
                self.mats.push(MatNode { key, value: start, pool_seen: Vec::new(), dependents: BTreeSet::new(), queued: false, live });
                if live {
                    self.pool_add(start);
                }
                self.enqueue(NodeId::Mat(i));
                i
            }
        };
        if let Some(r) = reader {
            self.mats[id as usize].dependents.insert(r);
        }
        Ok(id as usize)
    }

    /// Drain the worklist, then revisit materializations whose pools grew.
    pub fn run(&mut self) -> Result<(), EngineError> {
        loop {
            while let Some(id) = self.queue.pop_front() {
                if !self.node_current(id) {
                    match id {
                        NodeId::Out(i) => self.outs[i as usize].queued = false,
                        NodeId::Mat(i) => self.mats[i as usize].queued = false,
                    }
                    self.parked.insert(id);
                    continue;
                }
                let changed = match id {
                    NodeId::Out(i) => {
                        self.outs[i as usize].queued = false;
                        self.eval_out(i as usize)?
                    }
                    NodeId::Mat(i) => {
                        self.mats[i as usize].queued = false;
                        self.eval_mat(i as usize)?
                    }
                };
                if changed {
                    let deps: Vec<NodeId> = match id {
                        NodeId::Out(i) => self.outs[i as usize].dependents.iter().copied().collect(),
                        NodeId::Mat(i) => self.mats[i as usize].dependents.iter().copied().collect(),
                    };
                    for d in deps {
                        self.enqueue(d);
                    }
                }
            }
            self.refresh_pools();
            let mut stale = Vec::new();
            let parked = std::mem::take(&mut self.parked);
            for id in parked {
                if self.node_current(id) {
                    self.enqueue(id);
                } else {
                    self.parked.insert(id);
                }
            }
            for (i, m) in self.mats.iter().enumerate() {
                if !m.live {
                    continue;
                }
                let k = m.key.parts.len() as u8;
                let now: Vec<u64> = (k + 1..=self.n).map(|l| self.pool_stamp(l)).collect();
                if now != m.pool_seen {
                    stale.push(i);
                }
            }
            if stale.is_empty() && self.queue.is_empty() {
                return Ok(());
            }
            for i in stale {
                self.enqueue(NodeId::Mat(i as u32));
            }
        }
    }

    fn eval_mat(&mut self, i: usize) -> Result<bool, EngineError> {
        let key = self.mats[i].key.clone();
        let me = NodeId::Mat(i as u32);
        let k = key.parts.len() as u8;
        let n = self.n;
        let seen: Vec<u64> = (k + 1..=n).map(|l| self.pool_stamp(l)).collect();
        let upper = if k < n { self.product(k + 1)? } else { vec![vec![]] };
        let xs: Vec<usize> = (0..self.grammar.sets.len()).filter(|&x| self.grammar.level(x) >= k).collect();
        // values only grow: generators found under an earlier pool stay valid
        let mut gens = self.sets[self.mats[i].value as usize].gens.clone();
        for sig in &upper {
            let mut psi = sig.clone();
            psi.extend_from_slice(&key.parts);
            for p in 0..self.spec.states.len() as State {
                for &x in &xs {
                    let node = self.out_node(OutKey { zero: key.zero, psi: psi.clone(), p, x }, Some(me))?;
                    for o in &self.outs[node].outcomes {
                        gens.push(Gen { assume: sig.clone(), p, x, out: o.omega.clone(), q: o.q });
                    }
                }
            }
        }
        let v = self.intern(TypeSet { level: k, ne: true, gens })?;
        self.mats[i].pool_seen = seen;
        let old = self.mats[i].value;
        if v != old {
            self.mats[i].value = v;
            if self.mats[i].live {
                self.pool_add(v);
                self.pool_remove(old);
            }
            return Ok(true);
        }
        Ok(false)
    }

    fn materialize(&mut self, parts: Vec<SetRef>, zero: ZeroRef) -> Result<SetRef, EngineError> {
        for &p in &parts {
            self.pin(p);
        }
        self.pin(self.zeros[zero as usize].sigma);
        let m = self.mat_node(MatKey { parts, zero }, None)?;
        self.run()?;
        let v = self.mats[m].value;
        self.pin(v);
        Ok(v)
    }

    /// U: types after the operation, levels n..L(op); None if the op cannot apply.
    fn u_set(&mut self, op: Op, zero: ZeroRef, psi: &[SetRef], me: NodeId) -> Result<Option<Vec<TypeRef>>, EngineError> {
        let n = self.n as usize;
        let z = self.zeros[zero as usize];
        let sets = |v: &[SetRef]| v.iter().map(|&s| TypeRef::Set(s)).collect::<Vec<_>>();
        Ok(Some(match op {
            Op::Pop(k) => {
                let k = k as usize;
                if !self.sets[psi[n - k] as usize].ne {
                    return Ok(None);
                }
                sets(&psi[..=n - k])
            }
            Op::Col(k) => {
                if k != z.k || !self.sets[z.sigma as usize].ne {
                    return Ok(None);
                }
                let mut v = sets(&psi[..n - k as usize]);
                v.push(TypeRef::Set(z.sigma));
                v
            }
            Op::Push1(b, k) => {
                let m = self.mat_node(MatKey { parts: vec![psi[n - 1]], zero }, Some(me))?;
                let top = self.intern_zero(ZeroKey { a: b, k, sigma: psi[n - k as usize] });
                let mut v = sets(&psi[..n - 1]);
                v.push(TypeRef::Set(self.mats[m].value));
                v.push(TypeRef::Zero(top));
                v
            }
            Op::Push(k) => {
                let k = k as usize;
                let m = self.mat_node(MatKey { parts: psi[n - k..].to_vec(), zero }, Some(me))?;
                let mut v = sets(psi);
                v[n - k] = TypeRef::Set(self.mats[m].value);
                v.push(TypeRef::Zero(zero));
                v
            }
        }))
    }

    fn as_set(t: TypeRef) -> SetRef {
        match t {
            TypeRef::Set(s) => s,
            TypeRef::Zero(_) => unreachable!("level-0 component where a set was expected"),
        }
    }

    /// Outcomes of (pi^{n..M+1}, q1, (x1, ., .)) in comp(pi^M..pi^L).
    fn first_part(&mut self, pi: &[TypeRef], l: u8, q1: State, x1: usize, me: NodeId) -> Result<Vec<(State, Vec<SetRef>, Sub)>, EngineError> {
        let n = self.n as usize;
        let mut out = Vec::new();
        if l == 0 {
            let TypeRef::Zero(z) = pi[n] else { unreachable!() };
            let psi: Vec<SetRef> = pi[..n].iter().map(|&t| Self::as_set(t)).collect();
            let node = self.out_node(OutKey { zero: z, psi, p: q1, x: x1 }, Some(me))?;
            for (oi, o) in self.outs[node].outcomes.iter().enumerate() {
                out.push((o.q, o.omega.clone(), Sub::Out { node, outcome: oi }));
            }
        } else {
            let s = Self::as_set(pi[n - l as usize]);
            let gens = self.sets[s as usize].gens.clone();
            for (gi, g) in gens.iter().enumerate() {
                if g.p != q1 || g.x != x1 {
                    continue;
                }
                let ok = (0..g.assume.len()).all(|i| {
                    let have = Self::as_set(pi[i]);
                    self.subset(g.assume[i], have)
                });
                if ok {
                    out.push((g.q, g.out.clone(), Sub::Gen { set: s, gen: gi }));
                }
            }
        }
        Ok(out)
    }

    fn eval_out(&mut self, i: usize) -> Result<bool, EngineError> {
        let key = self.outs[i].key.clone();
        let me = NodeId::Out(i as u32);
        let n = self.n as usize;
        let z = self.zeros[key.zero as usize];
        let xl = self.grammar.level(key.x) as usize;
        let mut found: Vec<(State, Vec<SetRef>, Why)> = Vec::new();
        if self.empty_rule[key.x] {
            found.push((key.p, key.psi[..n - xl].to_vec(), Why::Empty));
        }
        let rules = self.rules_by_lhs[key.x].clone();
        for ri in rules {
            let r = self.grammar.rules[ri].clone();
            let d = r.delta.unwrap();
            let t = self.spec.transitions[d];
            if t.from != key.p || t.top != z.a {
                continue;
            }
            let l = l_of(t.op);
            let m_r = match r.rhs.first() {
                None => xl,
                Some(&y) => self.grammar.level(y) as usize,
            };
            if (l as usize) > m_r {
                continue;
            }
            let Some(pi) = self.u_set(t.op, key.zero, &key.psi, me)? else { continue };
            if r.rhs.is_empty() {
                let omega = pi[..n - xl].iter().map(|&t| Self::as_set(t)).collect();
                found.push((t.to, omega, Why::Step { rule: ri, first: None, second: None }));
                continue;
            }
            let firsts = self.first_part(&pi, l, t.to, r.rhs[0], me)?;
            for (q1, om, sub) in firsts {
                if r.rhs.len() == 1 {
                    found.push((q1, om[..n - xl].to_vec(), Why::Step { rule: ri, first: Some(sub), second: None }));
                    continue;
                }
                let mut psi2 = om.clone();
                psi2.extend_from_slice(&key.psi[n - m_r..]);
                let node = self.out_node(OutKey { zero: key.zero, psi: psi2, p: q1, x: r.rhs[1] }, Some(me))?;
                let outs: Vec<(usize, State, Vec<SetRef>)> =
                    self.outs[node].outcomes.iter().enumerate().map(|(oi, o)| (oi, o.q, o.omega.clone())).collect();
                for (oi, q2, om2) in outs {
                    found.push((
                        q2,
                        om2[..n - xl].to_vec(),
                        Why::Step { rule: ri, first: Some(sub), second: Some(Sub::Out { node, outcome: oi }) },
                    ));
                }
            }
        }
        let mut changed = false;
        for (q, omega, why) in found {
            let existing: Vec<Vec<SetRef>> =
                self.outs[i].outcomes.iter().filter(|o| o.q == q).map(|o| o.omega.clone()).collect();
            if existing.iter().any(|e| self.vec_leq(&omega, e)) {
                continue;
            }
            self.stamp += 1;
            self.outs[i].outcomes.push(Outcome { q, omega, stamp: self.stamp, why });
            changed = true;
        }
        Ok(changed)
    }

    // ---- queries ----

    fn check_vec(&self, v: &[SetRef], top: u8, what: &str) -> Result<(), EngineError> {
        for (i, &s) in v.iter().enumerate() {
            if s as usize >= self.sets.len() || self.sets[s as usize].level as usize != top as usize - i {
                return Err(EngineError::Arity(format!("{} component {} has the wrong level", what, i)));
            }
        }
        Ok(())
    }

    fn check_goal(&self, g: &Goal) -> Result<(), EngineError> {
        if g.x >= self.grammar.sets.len() {
            return Err(EngineError::Arity("unknown set".into()));
        }
        let want = self.n as usize - self.grammar.level(g.x) as usize;
        if g.omega.len() != want {
            return Err(EngineError::Arity(format!("goal needs {} output types, got {}", want, g.omega.len())));
        }
        self.check_vec(&g.omega, self.n, "output")
    }

    fn outcomes(&mut self, zero: ZeroRef, psi: Vec<SetRef>, p: State, x: usize) -> Result<usize, EngineError> {
        for &s in &psi {
            self.pin(s);
        }
        self.pin(self.zeros[zero as usize].sigma);
        let node = self.out_node(OutKey { zero, psi, p, x }, None)?;
        self.run()?;
        Ok(node)
    }

    fn best_outcome(&mut self, node: usize, q: State, omega: &[SetRef]) -> Option<usize> {
        let cands: Vec<(usize, u64, Vec<SetRef>)> = self.outs[node]
            .outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| o.q == q)
            .map(|(i, o)| (i, o.stamp, o.omega.clone()))
            .collect();
        let mut best: Option<(u64, usize)> = None;
        for (i, st, om) in cands {
            if self.vec_leq(omega, &om) && best.is_none_or(|(b, _)| st < b) {
                best = Some((st, i));
            }
        }
        best.map(|(_, i)| i)
    }

    /// Is the level-0 descriptor in stype(a, k, sigma)?
    pub fn stype_member(&mut self, a: Symbol, k: u8, sigma: SetRef, d: &Descriptor) -> Result<bool, EngineError> {
        if k == 0 || k > self.n || sigma as usize >= self.sets.len() || self.sets[sigma as usize].level != k {
            return Err(EngineError::Arity("link type has the wrong level".into()));
        }
        if d.assume.len() != self.n as usize {
            return Err(EngineError::Arity(format!("need {} assumptions, got {}", self.n, d.assume.len())));
        }
        self.check_vec(&d.assume, self.n, "assumption")?;
        self.check_goal(&d.goal)?;
        let z = self.intern_zero(ZeroKey { a, k, sigma });
        let node = self.outcomes(z, d.assume.clone(), d.p, d.goal.x)?;
        Ok(self.best_outcome(node, d.goal.q, &d.goal.omega).is_some())
    }

    /// All (q, outputs) reachable for a symbolic 0-stack type, as generators.
    pub fn zero_outcomes(&mut self, zero: ZeroRef, psi: &[SetRef], p: State, x: usize) -> Result<Vec<(State, Vec<SetRef>)>, EngineError> {
        let node = self.outcomes(zero, psi.to_vec(), p, x)?;
        Ok(self.outs[node].outcomes.iter().map(|o| (o.q, o.omega.clone())).collect())
    }

    pub fn type_of(&mut self, s: &Stack) -> Result<TypeRef, EngineError> {
        if let Some(&t) = self.type_memo.get(s) {
            return Ok(t);
        }
        let t = if let Some((a, k, link)) = s.as_zero() {
            let sig = match self.type_of(link)? {
                TypeRef::Set(x) => x,
                TypeRef::Zero(_) => unreachable!("links have positive level"),
            };
            TypeRef::Zero(self.intern_zero(ZeroKey { a, k, sigma: sig }))
        } else if s.is_empty() {
            TypeRef::Set(self.empty_set(s.level()))
        } else {
            let rest = self.type_of(&s.without_top())?;
            let top = self.type_of(s.top_item().unwrap())?;
            self.comp(&[rest, top])?
        };
        self.type_memo.insert(s.clone(), t);
        Ok(t)
    }

    pub fn ctype(&mut self, c: &Config) -> Result<ConfigType, EngineError> {
        let mut comps = Vec::new();
        for s in components(&c.stack) {
            comps.push(self.type_of(&s)?);
        }
        Ok(ConfigType { comps, state: c.state })
    }

    /// Inclusion of symbolic 0-stack types, checked over the pool of assumption vectors.
    pub fn zero_leq(&mut self, a: ZeroRef, b: ZeroRef) -> Result<bool, EngineError> {
        if a == b {
            return Ok(true);
        }
        let (za, zb) = (self.zeros[a as usize], self.zeros[b as usize]);
        if za.a == zb.a && za.k == zb.k && self.subset(za.sigma, zb.sigma) {
            return Ok(true);
        }
        let vecs = self.product(1)?;
        let xs = 0..self.grammar.sets.len();
        for psi in &vecs {
            for p in 0..self.spec.states.len() as State {
                for x in xs.clone() {
                    let na = self.outcomes(a, psi.clone(), p, x)?;
                    let nb = self.outcomes(b, psi.clone(), p, x)?;
                    let oa: Vec<(State, Vec<SetRef>)> = self.outs[na].outcomes.iter().map(|o| (o.q, o.omega.clone())).collect();
                    for (q, om) in oa {
                        if self.best_outcome(nb, q, &om).is_none() {
                            return Ok(false);
                        }
                    }
                }
            }
        }
        Ok(true)
    }

    pub fn type_leq(&mut self, a: TypeRef, b: TypeRef) -> Result<bool, EngineError> {
        match (a, b) {
            (TypeRef::Set(x), TypeRef::Set(y)) => Ok(self.subset(x, y)),
            (TypeRef::Zero(x), TypeRef::Zero(y)) => self.zero_leq(x, y),
            _ => Err(EngineError::Arity("comparing types of different levels".into())),
        }
    }

    pub fn ctype_leq(&mut self, a: &ConfigType, b: &ConfigType) -> Result<bool, EngineError> {
        if a.state != b.state || a.comps.len() != b.comps.len() {
            return Ok(false);
        }
        for (&x, &y) in a.comps.iter().zip(&b.comps) {
            if !self.type_leq(x, y)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn ctype_eq(&mut self, a: &ConfigType, b: &ConfigType) -> Result<bool, EngineError> {
        Ok(self.ctype_leq(a, b)? && self.ctype_leq(b, a)?)
    }

    /// Output types of a configuration for a goal on set x: levels n..lev(x)+1.
    pub fn outputs_of(&mut self, c: &Config, x: usize) -> Result<Vec<SetRef>, EngineError> {
        let ct = self.ctype(c)?;
        let k = self.n as usize - self.grammar.level(x) as usize;
        Ok(ct.comps[..k].iter().map(|&t| Self::as_set(t)).collect())
    }

    pub fn goal_for(&mut self, x: usize, end: &Config) -> Result<Goal, EngineError> {
        Ok(Goal { x, omega: self.outputs_of(end, x)?, q: end.state })
    }

    /// Lemma-style query at a configuration: the tabled node for its real types.
    fn node_at(&mut self, c: &Config, x: usize) -> Result<usize, EngineError> {
        let ct = self.ctype(c)?;
        let n = self.n as usize;
        let TypeRef::Zero(z) = ct.comps[n] else { unreachable!() };
        let psi = ct.comps[..n].iter().map(|&t| Self::as_set(t)).collect();
        self.outcomes(z, psi, c.state, x)
    }

    /// Does some run from c agree with the goal, according to the types?
    pub fn agrees(&mut self, c: &Config, goal: &Goal) -> Result<bool, EngineError> {
        self.check_goal(goal)?;
        let node = self.node_at(c, goal.x)?;
        Ok(self.best_outcome(node, goal.q, &goal.omega).is_some())
    }

    /// Brute force: some run of length <= run_len from c is in goal.x, ends in
    /// goal.q, and its final output types include goal.omega.
    pub fn semantic_oracle(&mut self, c: &Config, goal: &Goal, run_len: usize) -> Result<Option<Run>, EngineError> {
        self.check_goal(goal)?;
        let mut stack = vec![Run::empty(c.clone())];
        while let Some(r) = stack.pop() {
            if r.last().state == goal.q && derive(&self.grammar, &r, goal.x).is_some() {
                let outs = self.outputs_of(r.last(), goal.x)?;
                if self.vec_leq(&goal.omega, &outs) {
                    return Ok(Some(r));
                }
            }
            if r.len() < run_len {
                for (ti, c1) in crate::machine::successors(&self.spec, r.last()).into_iter().rev() {
                    let mut r1 = r.clone();
                    r1.push_step(ti, self.spec.transitions[ti], c1);
                    stack.push(r1);
                }
            }
        }
        Ok(None)
    }

    // ---- synthesis ----

    pub fn synthesize_run(&mut self, c: &Config, goal: &Goal) -> Result<Option<Run>, EngineError> {
        self.check_goal(goal)?;
        let node = self.node_at(c, goal.x)?;
        let Some(oi) = self.best_outcome(node, goal.q, &goal.omega) else { return Ok(None) };
        let mut fuel = self.limits.synth_fuel;
        let run = self.synth(c, node, oi, &mut fuel)?;
        self.check_agrees(&run, goal)?;
        Ok(Some(run))
    }

    /// Re-validate a run against a goal: valid steps, derivation, final state, output types.
    pub fn check_agrees(&mut self, run: &Run, goal: &Goal) -> Result<(), EngineError> {
        run.validate(&self.spec).map_err(|e| EngineError::Incomplete(format!("synthesized run invalid: {}", e)))?;
        if derive(&self.grammar, run, goal.x).is_none() {
            return Err(EngineError::Incomplete(format!("synthesized run not in {}", self.grammar.name(goal.x))));
        }
        if run.last().state != goal.q {
            return Err(EngineError::Incomplete("synthesized run ends in the wrong state".into()));
        }
        let outs = self.outputs_of(run.last(), goal.x)?;
        if !self.vec_leq(&goal.omega, &outs) {
            return Err(EngineError::Incomplete("synthesized run misses the output types".into()));
        }
        Ok(())
    }

    fn machine_err(e: MachineError) -> EngineError {
        EngineError::Incomplete(format!("provenance step not applicable: {}", e))
    }

    fn synth(&mut self, c: &Config, node: usize, oi: usize, fuel: &mut usize) -> Result<Run, EngineError> {
        let why = self.outs[node].outcomes[oi].why;
        match why {
            Why::Empty => Ok(Run::empty(c.clone())),
            Why::Step { rule, first, second } => {
                if *fuel == 0 {
                    return Err(EngineError::LimitExceeded { cap: "synth_fuel", limit: self.limits.synth_fuel });
                }
                *fuel -= 1;
                let r = self.grammar.rules[rule].clone();
                let d = r.delta.unwrap();
                let c1 = step(&self.spec, c, d).map_err(Self::machine_err)?;
                let mut run = Run::empty(c.clone());
                run.push_step(d, self.spec.transitions[d], c1.clone());
                let Some(sub) = first else { return Ok(run) };
                let r1 = match sub {
                    Sub::Out { node, outcome } => self.synth(&c1, node, outcome, fuel)?,
                    Sub::Gen { set, gen } => {
                        let g = self.sets[set as usize].gens[gen].clone();
                        self.requery(&c1, r.rhs[0], g.q, &g.out, fuel)?
                    }
                };
                run = run.compose(&r1).map_err(Self::machine_err)?;
                if let Some(Sub::Out { node: n2, outcome: o2 }) = second {
                    let c2 = run.last().clone();
                    let z = self.zeros[self.outs[n2].key.zero as usize];
                    match c2.stack.components_top() {
                        Some((a, k)) if a == z.a && k == z.k => {}
                        _ => return Err(EngineError::Incomplete("first part did not preserve the top".into())),
                    }
                    let r2 = self.synth(&c2, n2, o2, fuel)?;
                    run = run.compose(&r2).map_err(Self::machine_err)?;
                }
                Ok(run)
            }
        }
    }

    /// Continue from c inside a part of the stack the current fact did not describe.
    fn requery(&mut self, c: &Config, x: usize, q: State, omega: &[SetRef], fuel: &mut usize) -> Result<Run, EngineError> {
        let ct = self.ctype(c)?;
        let n = self.n as usize;
        let real: Vec<SetRef> = ct.comps[..n].iter().map(|&t| Self::as_set(t)).collect();
        let TypeRef::Zero(rz) = ct.comps[n] else { unreachable!() };
        let rk = self.zeros[rz as usize];
        let mut best: Option<(u64, usize, usize)> = None;
        let cands = self.by_head.get(&(rk.a, rk.k, c.state, x)).cloned().unwrap_or_default();
        for nd in cands {
            let key = self.outs[nd as usize].key.clone();
            let zk = self.zeros[key.zero as usize];
            if !self.subset(zk.sigma, rk.sigma) || !self.vec_leq(&key.psi, &real) {
                continue;
            }
            if let Some(oi) = self.best_outcome(nd as usize, q, omega) {
                let st = self.outs[nd as usize].outcomes[oi].stamp;
                if best.is_none_or(|(b, _, _)| st < b) {
                    best = Some((st, nd as usize, oi));
                }
            }
        }
        if best.is_none() {
            let nd = self.outcomes(rz, real, c.state, x)?;
            if let Some(oi) = self.best_outcome(nd, q, omega) {
                best = Some((0, nd, oi));
            }
        }
        let Some((_, nd, oi)) = best else {
            return Err(EngineError::Incomplete("no fact continues the run".into()));
        };
        self.synth(c, nd, oi, fuel)
    }

    // ---- transfer ----

    /// A run S in X from c with R's final state; for level-0 sets also ctype(R end) ⊑ ctype(S end).
    pub fn transfer(&mut self, x: usize, r: &Run, c: &Config) -> Result<Run, EngineError> {
        let ca = self.ctype(r.first())?;
        let cb = self.ctype(c)?;
        if !self.ctype_leq(&ca, &cb)? {
            return Err(EngineError::PreconditionViolated("ctype(R(0)) is not below ctype(c)".into()));
        }
        let Some(der) = derive(&self.grammar, r, x) else {
            return Err(EngineError::PreconditionViolated(format!("run is not in {}", self.grammar.name(x))));
        };
        let s = if self.grammar.level(x) == 0 {
            self.transfer0(&der, r, c)?
        } else {
            let goal = self.goal_for(x, r.last())?;
            self.synthesize_run(c, &goal)?
                .ok_or_else(|| EngineError::Incomplete("no agreeing run found from c".into()))?
        };
        let goal = self.goal_for(x, r.last())?;
        self.check_agrees(&s, &goal)?;
        if self.grammar.level(x) == 0 {
            let ea = self.ctype(r.last())?;
            let eb = self.ctype(s.last())?;
            if !self.ctype_leq(&ea, &eb)? {
                return Err(EngineError::Incomplete("final types not related".into()));
            }
        }
        Ok(s)
    }

    fn transfer0(&mut self, der: &Derivation, r: &Run, c: &Config) -> Result<Run, EngineError> {
        let rule = self.grammar.rules[der.rule].clone();
        let Some(d) = rule.delta else { return Ok(Run::empty(c.clone())) };
        match rule.rhs.len() {
            0 | 1 => {
                let c1 = step(&self.spec, c, d).map_err(Self::machine_err)?;
                let mut run = Run::empty(c.clone());
                run.push_step(d, self.spec.transitions[d], c1.clone());
                if rule.rhs.is_empty() {
                    return Ok(run);
                }
                let rest = self.transfer0(&der.children[0], r, &c1)?;
                run.compose(&rest).map_err(Self::machine_err)
            }
            _ => {
                let y = rule.rhs[0];
                let head = SetId::Head(d, Box::new(self.grammar.sets[y].id.clone()));
                let h = self.grammar.id(&head).map_err(|e| EngineError::Incomplete(e.to_string()))?;
                let mid = der.children[0].end;
                let goal = self.goal_for(h, r.at(mid))?;
                let s1 = self
                    .synthesize_run(c, &goal)?
                    .ok_or_else(|| EngineError::Incomplete(format!("no run for {}", self.grammar.name(h))))?;
                let rest = self.transfer0(&der.children[1], r, s1.last())?;
                s1.compose(&rest).map_err(Self::machine_err)
            }
        }
    }

    // ---- checks and export ----

    /// Re-check every recorded justification against the tables.
    pub fn check_provenance(&mut self) -> Vec<String> {
        let mut bad = Vec::new();
        let n = self.n as usize;
        for i in 0..self.outs.len() {
            let key = self.outs[i].key.clone();
            let z = self.zeros[key.zero as usize];
            for (oi, o) in self.outs[i].outcomes.clone().iter().enumerate() {
                let tag = format!("node {} outcome {}", i, oi);
                let xl = self.grammar.level(key.x) as usize;
                match o.why {
                    Why::Empty => {
                        if !self.empty_rule[key.x] || o.q != key.p || o.omega[..] != key.psi[..n - xl] {
                            bad.push(format!("{}: bad empty-rule fact", tag));
                        }
                    }
                    Why::Step { rule, first, second } => {
                        let r = &self.grammar.rules[rule];
                        let t = self.spec.transitions[r.delta.unwrap()];
                        if r.lhs != key.x || t.from != key.p || t.top != z.a || r.rhs.len() < first.is_some() as usize {
                            bad.push(format!("{}: rule does not match", tag));
                        }
                        for s in [first, second].into_iter().flatten() {
                            match s {
                                Sub::Out { node, outcome } => {
                                    let sub = &self.outs[node].outcomes[outcome];
                                    if sub.stamp >= o.stamp {
                                        bad.push(format!("{}: sub-fact not earlier", tag));
                                    }
                                }
                                Sub::Gen { set, gen } => {
                                    if gen >= self.sets[set as usize].gens.len() {
                                        bad.push(format!("{}: missing generator", tag));
                                    }
                                }
                            }
                        }
                        if let (Some(_), None) = (first, second) {
                            if r.rhs.len() != 1 {
                                bad.push(format!("{}: arity", tag));
                            }
                        }
                    }
                }
            }
        }
        bad
    }

    pub fn set_name(&self, s: SetRef) -> String {
        format!("S{}", s)
    }

    pub fn dump_json(&self) -> Value {
        let sets: Vec<Value> = self
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| {
                json!({
                    "id": i, "level": s.level, "ne": s.ne,
                    "gens": s.gens.iter().map(|g| json!({
                        "assume": g.assume, "p": self.spec.state_name(g.p),
                        "set": self.grammar.name(g.x), "out": g.out, "q": self.spec.state_name(g.q)
                    })).collect::<Vec<_>>()
                })
            })
            .collect();
        let zeros: Vec<Value> = self
            .zeros
            .iter()
            .enumerate()
            .map(|(i, z)| json!({"id": i, "symbol": self.spec.symbol_name(z.a), "link_level": z.k, "link_type": z.sigma}))
            .collect();
        let facts: Vec<Value> = self
            .outs
            .iter()
            .enumerate()
            .map(|(i, nd)| {
                json!({
                    "id": i, "zero": nd.key.zero, "assume": nd.key.psi,
                    "p": self.spec.state_name(nd.key.p), "set": self.grammar.name(nd.key.x),
                    "outcomes": nd.outcomes.iter().map(|o| json!({
                        "q": self.spec.state_name(o.q), "out": o.omega, "stamp": o.stamp, "why": o.why
                    })).collect::<Vec<_>>()
                })
            })
            .collect();
        json!({ "sets": sets, "zero_types": zeros, "facts": facts })
    }

    /// The current assumption pool of a level.
    pub fn pool_sets(&self, level: u8) -> Vec<SetRef> {
        self.pool[level as usize].keys().copied().collect()
    }

    /// Descriptors of the top level (excluding ne).
    pub fn top_descriptors(&self) -> Vec<Gen> {
        self.top_universe()
    }

    pub fn make_set(&mut self, level: u8, ne: bool, gens: Vec<Gen>) -> Result<SetRef, EngineError> {
        let r = self.intern(TypeSet { level, ne, gens })?;
        self.pin(r);
        Ok(r)
    }

    pub fn distinct_sets(&self) -> HashSet<SetRef> {
        self.sets.iter().enumerate().map(|(i, _)| i as SetRef).collect()
    }
}

trait TopInfo {
    fn components_top(&self) -> Option<(Symbol, u8)>;
}

impl TopInfo for Stack {
    fn components_top(&self) -> Option<(Symbol, u8)> {
        let mut cur = self;
        while cur.level() > 0 {
            cur = cur.top_item()?;
        }
        cur.as_zero().map(|(a, k, _)| (a, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::Transition;
    use crate::run_classes::{build_canonical_family, wf_closure};

    fn one_state() -> CpsSpec {
        CpsSpec {
            level: 1,
            letters: vec![],
            states: vec!["q".into()],
            initial: 0,
            symbols: vec!["⊥".into()],
            transitions: vec![Transition { from: 0, top: Symbol(0), label: None, to: 0, op: Op::Push1(Symbol(0), 1) }],
            ranks: vec![],
        }
    }

    fn q_family(spec: &CpsSpec) -> Grammar {
        let g = build_canonical_family(spec);
        let q = g.id(&SetId::Q).unwrap();
        wf_closure(&g.restrict(&[q]))
    }

    #[test]
    fn empty_run_descriptor() {
        let spec = one_state();
        let g = q_family(&spec);
        let q = g.id(&SetId::Q).unwrap();
        let mut e = TypeEngine::new(&spec, &g).unwrap();
        let empty = e.empty_set(1);
        let d = Descriptor { assume: vec![empty], p: 0, goal: Goal { x: q, omega: vec![], q: 0 } };
        assert!(e.stype_member(Symbol(0), 1, empty, &d).unwrap());
        let bad = Descriptor { assume: vec![], ..d };
        assert!(matches!(e.stype_member(Symbol(0), 1, empty, &bad), Err(EngineError::Arity(_))));
    }

    #[test]
    fn composer_basics() {
        let spec = one_state();
        let g = q_family(&spec);
        let mut e = TypeEngine::new(&spec, &g).unwrap();
        let empty = e.empty_set(1);
        assert_eq!(e.comp_explicit(&[empty]).unwrap(), empty);
        let s = e.ctype(&spec.initial_config()).unwrap();
        assert_eq!(s.comps.len(), 2);
        assert!(e.ctype_leq(&s, &s).unwrap());
    }

    fn dag() -> CpsSpec {
        let t = |from, top, label, to, op| Transition { from, top: Symbol(top), label, to, op };
        CpsSpec {
            level: 1,
            letters: vec!["a".into()],
            states: vec!["q".into(), "p".into()],
            initial: 0,
            symbols: vec!["⊥".into(), "A".into()],
            transitions: vec![
                t(0, 0, None, 0, Op::Push1(Symbol(1), 1)),
                t(0, 1, None, 1, Op::Push1(Symbol(1), 1)),
                t(1, 1, Some(0), 1, Op::Pop(1)),
                t(0, 1, Some(0), 1, Op::Col(1)),
            ],
            ranks: vec![],
        }
    }

    #[test]
    fn agrees_with_brute_force_at_level_one() {
        use crate::run_classes::{Cmp, Eps};
        let spec = dag();
        let fam = build_canonical_family(&spec);
        let roots = [fam.id(&SetId::Q).unwrap(), fam.id(&SetId::P(Cmp::Lt, Eps::E)).unwrap()];
        let g = wf_closure(&fam.restrict(&roots));
        let mut e = TypeEngine::new(&spec, &g).unwrap();
        let graph = crate::machine::explore(&spec, crate::machine::Caps::depth(10));
        assert!(!graph.truncated());
        let mut omegas = vec![e.empty_set(1)];
        for c in &graph.nodes {
            let t = e.ctype(c).unwrap();
            omegas.push(set_of(t.comps[0]));
        }
        omegas.sort();
        omegas.dedup();
        let mut checked = 0;
        for c in &graph.nodes {
            for x in 0..g.sets.len() {
                let om: Vec<Vec<SetRef>> =
                    if g.level(x) == 1 { vec![vec![]] } else { omegas.iter().map(|&s| vec![s]).collect() };
                for q in 0..2 {
                    for omega in &om {
                        let goal = Goal { x, omega: omega.clone(), q };
                        let want = e.semantic_oracle(c, &goal, 12).unwrap().is_some();
                        assert_eq!(e.agrees(c, &goal).unwrap(), want, "{} {} {:?}", g.name(x), q, omega);
                        if want {
                            e.synthesize_run(c, &goal).unwrap().unwrap();
                        }
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 50);
        assert!(e.check_provenance().is_empty());
    }

    fn set_of(t: TypeRef) -> SetRef {
        match t {
            TypeRef::Set(s) => s,
            TypeRef::Zero(_) => panic!(),
        }
    }

    #[test]
    fn synthesizes_one_step() {
        let spec = one_state();
        let g = q_family(&spec);
        let t = g.id(&SetId::Trans(0)).unwrap();
        let mut e = TypeEngine::new(&spec, &g).unwrap();
        let c = spec.initial_config();
        let goal = Goal { x: t, omega: vec![], q: 0 };
        let r = e.synthesize_run(&c, &goal).unwrap().unwrap();
        assert_eq!(r.len(), 1);
        assert!(e.check_provenance().is_empty());
    }
}
