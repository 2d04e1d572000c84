//! Finite branching, finiteness and finite unfolding of the ε-contraction,
//! plus a breadth-first ground truth.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::machine::{
    eps_contract, explore, normalize_eps_states, Caps, Config, CpsSpec, Run, State, Transition,
};
use crate::pumping::inf_branch_witness;
use crate::run_classes::{
    add_composition, build_canonical_family, wf_closure, Cmp, Eps, Grammar, Preservation, SetId,
};
use crate::stack_core::{Op, Symbol};
use crate::tower::{exp_k, Big, Decided};
use crate::type_engine::{EngineError, Goal, Limits, Mode, TypeEngine};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    Branching,
    Finiteness,
    Unfolding,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Answer {
    Infinite,
    Finite,
    FiniteUpTo { param: String, value: usize },
    Unknown { limit: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Exactness {
    Exact,
    Bounded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    /// transition indices from the initial configuration
    pub transitions: Vec<usize>,
    pub set: String,
    pub final_state: String,
    /// (x, y) with equal configuration types and a silent growing pump between them
    pub pump_window: Option<(usize, usize)>,
    #[serde(skip)]
    pub run: Option<Run>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub question: Question,
    pub answer: Answer,
    pub exactness: Exactness,
    pub certificate: Option<Certificate>,
    pub limits_hit: Vec<String>,
    pub detail: String,
}

impl Verdict {
    fn new(question: Question, answer: Answer, exactness: Exactness, detail: impl Into<String>) -> Verdict {
        Verdict { question, answer, exactness, certificate: None, limits_hit: vec![], detail: detail.into() }
    }

    fn unknown(question: Question, e: &EngineError) -> Verdict {
        let cap = match e {
            EngineError::LimitExceeded { cap, .. } => cap.to_string(),
            other => other.to_string(),
        };
        let mut v = Verdict::new(question, Answer::Unknown { limit: cap.clone() }, Exactness::Bounded, e.to_string());
        v.limits_hit.push(cap);
        v
    }

    pub fn is_infinite(&self) -> bool {
        self.answer == Answer::Infinite
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdicts serialize")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub pump_depth: usize,
    pub path_bound: usize,
    pub mode: Mode,
    pub limits: Limits,
}

impl Default for Params {
    fn default() -> Self {
        Params { pump_depth: 2, path_bound: 4, mode: Mode::Pool, limits: Limits::default() }
    }
}

/// States all of whose (at least one) incoming transitions carry a letter.
pub fn letter_target_states(spec: &CpsSpec) -> Vec<State> {
    (0..spec.states.len() as State)
        .filter(|&q| {
            let inc: Vec<&Transition> = spec.transitions.iter().filter(|t| t.to == q).collect();
            !inc.is_empty() && inc.iter().all(|t| t.label.is_some())
        })
        .collect()
}

fn compose(g: &Grammar, x: &SetId, y: &SetId) -> (Grammar, SetId) {
    let (g2, i) = add_composition(g, x, y).expect("both sets exist");
    let id = g2.sets[i].id.clone();
    (g2, id)
}

/// Q∘P^m∘N0 for m = 1 and m = pump_depth, wf-closed.
pub fn pump_family(spec: &CpsSpec, m: usize) -> (Grammar, usize, usize) {
    let fam = build_canonical_family(spec);
    let p = SetId::P(Cmp::Lt, Eps::E);
    let mut g = fam;
    let mut tail = SetId::N(0);
    let mut v1 = None;
    for i in 1..=m.max(1) {
        let (g2, t) = compose(&g, &p, &tail);
        g = g2;
        tail = t;
        if i == 1 {
            let (g3, v) = compose(&g, &SetId::Q, &tail);
            g = g3;
            v1 = Some(v);
        }
    }
    let (g, vm) = compose(&g, &SetId::Q, &tail);
    let v1 = v1.unwrap();
    let roots = [g.id(&v1).unwrap(), g.id(&vm).unwrap()];
    let g = wf_closure(&g.restrict(&roots));
    let (a, b) = (g.id(&v1).unwrap(), g.id(&vm).unwrap());
    (g, a, b)
}

/// Family used for configuration types in certificates: Q, silent growing pumps, N0.
pub fn witness_family(spec: &CpsSpec) -> Grammar {
    let fam = build_canonical_family(spec);
    let roots: Vec<usize> = [SetId::Q, SetId::P(Cmp::Lt, Eps::E), SetId::N(0)]
        .iter()
        .map(|s| fam.id(s).unwrap())
        .collect();
    wf_closure(&fam.restrict(&roots))
}

/// Crude upper bound on the number of configuration types for a family.
pub fn ctype_universe_bound(spec: &CpsSpec, g: &Grammar) -> Big {
    let q2 = Big::from_u64((spec.states.len() * spec.states.len()) as u64);
    let xs = Big::from_u64(g.sets.len() as u64);
    let one = Big::from_u64(1);
    let mut counts: Vec<Big> = Vec::new();
    let mut above = one.clone();
    for _k in (1..=spec.level).rev() {
        // descriptors: sets above for assumptions and outputs, two states, one set
        let u = one.add(&q2.mul(&xs).mul(&above).mul(&above));
        let s = u.pow2();
        above = above.mul(&s);
        counts.push(s);
    }
    let zeros = Big::from_u64((spec.symbols.len() * spec.level as usize) as u64).mul(&above);
    Big::from_u64(spec.states.len() as u64).mul(&above).mul(&zeros)
}

fn engine(spec: &CpsSpec, g: &Grammar, p: &Params) -> Result<TypeEngine, EngineError> {
    TypeEngine::with(spec, g, p.mode, p.limits)
}

fn certificate(spec: &CpsSpec, g: &Grammar, set: usize, run: &Run) -> Certificate {
    Certificate {
        transitions: run.steps.iter().map(|s| s.index).collect(),
        set: g.name(set),
        final_state: spec.state_name(run.last().state),
        pump_window: None,
        run: Some(run.clone()),
    }
}

/// Queries the initial configuration for a run in x into a letter-target state.
fn query_initial(e: &mut TypeEngine, x: usize, targets: &[State]) -> Result<Option<Run>, EngineError> {
    let c = e.spec.initial_config();
    for &q in targets {
        let goal = Goal { x, omega: vec![], q };
        if e.agrees(&c, &goal)? {
            return e.synthesize_run(&c, &goal).map(|r| {
                Some(r.expect("established membership yields a run"))
            });
        }
    }
    Ok(None)
}

/// Bound on the configurations explored when checking for a finite graph.
/// Kept small: an infinite system yields stacks this deep.
const FINITE_GRAPH_CAP: usize = 4096;

/// True when the whole reachable configuration graph fits under the cap.
fn reachable_graph_is_finite(spec: &CpsSpec) -> bool {
    let g = explore(spec, Caps { max_nodes: FINITE_GRAPH_CAP, max_depth: usize::MAX, letter_depth: false });
    !g.truncated()
}

pub fn decide_branching(spec: &CpsSpec, params: &Params) -> Verdict {
    let v = decide_branching_pump(spec, params);
    if v.exactness == Exactness::Bounded && reachable_graph_is_finite(spec) {
        let mut w = Verdict::new(
            Question::Branching,
            Answer::Finite,
            Exactness::Exact,
            format!("the reachable configuration graph is finite (pump procedure: {:?}, {})", v.answer, v.detail),
        );
        w.limits_hit = v.limits_hit;
        return w;
    }
    v
}

/// Deeper pump chains tried when certifying an infinite answer.
const CERT_EXTRA_PUMPS: usize = 3;

fn witness_window(s: &CpsSpec, wg: &Grammar, params: &Params, run: &Run) -> Result<Option<(usize, usize)>, EngineError> {
    engine(s, wg, params).and_then(|mut we| {
        inf_branch_witness(&mut we, run).map_err(|e| match e {
            crate::pumping::PumpError::Engine(x) => x,
            other => EngineError::Incomplete(other.to_string()),
        })
    })
}

fn decide_branching_pump(spec: &CpsSpec, params: &Params) -> Verdict {
    let q = Question::Branching;
    let s = normalize_eps_states(spec);
    let targets = letter_target_states(&s);
    let m = params.pump_depth.max(1);
    let (g, v1, vm) = pump_family(&s, m);
    let exact_engine = s.level == 1;
    let mut e = match engine(&s, &g, params) {
        Ok(e) => e,
        Err(err) => return Verdict::unknown(q, &err),
    };
    let r1 = match query_initial(&mut e, v1, &targets) {
        Ok(r) => r,
        Err(err) => return Verdict::unknown(q, &err),
    };
    if r1.is_none() {
        let ex = if exact_engine { Exactness::Exact } else { Exactness::Bounded };
        return Verdict::new(q, Answer::Finite, ex, "no run of Q.P<e.N0 from the initial configuration ends with a letter");
    }
    let rm = if m == 1 {
        r1
    } else {
        match query_initial(&mut e, vm, &targets) {
            Ok(r) => r,
            Err(err) => return Verdict::unknown(q, &err),
        }
    };
    let Some(run) = rm else {
        return Verdict::new(
            q,
            Answer::FiniteUpTo { param: "pump_depth".into(), value: m },
            Exactness::Bounded,
            format!("a single silent pump exists but no chain of {} pumps", m),
        );
    };
    let mut cert = certificate(&s, &g, vm, &run);
    // certify with configuration types of the witness family; a short chain
    // may repeat no type, so longer chains are tried too
    let wg = witness_family(&s);
    let mut window = witness_window(&s, &wg, params, &run);
    for extra in 1..=CERT_EXTRA_PUMPS {
        if !matches!(window, Ok(None)) {
            break;
        }
        let (g2, _, vm2) = pump_family(&s, m + extra);
        let longer = engine(&s, &g2, params).and_then(|mut e2| query_initial(&mut e2, vm2, &targets));
        if let Ok(Some(r2)) = longer {
            let w = witness_window(&s, &wg, params, &r2);
            if matches!(w, Ok(Some(_))) {
                cert = certificate(&s, &g2, vm2, &r2);
                window = w;
            }
        }
    }
    let mut bound_note = String::new();
    let exactness = match window {
        Ok(Some(w)) => {
            cert.pump_window = Some(w);
            Exactness::Exact
        }
        Ok(None) => {
            let bound = ctype_universe_bound(&s, &wg);
            if Big::from_u64(m as u64).ge(&bound) == Decided::Holds {
                Exactness::Exact
            } else {
                bound_note = format!("; pump depth {} does not exceed the type count bound {}", m, bound);
                Exactness::Bounded
            }
        }
        Err(err) => {
            bound_note = format!("; certification failed: {}", err);
            Exactness::Bounded
        }
    };
    let mut v = Verdict::new(q, Answer::Infinite, exactness, format!("run in {} found{}", g.name(vm), bound_note));
    v.certificate = Some(cert);
    v
}

/// All labels become ε; a fresh initial state enters the old one by a
/// letter; every letter-target state gets a letter edge to a dead state.
pub fn finiteness_conversion(spec: &CpsSpec) -> CpsSpec {
    let s = normalize_eps_states(spec);
    let targets = letter_target_states(&s);
    let mut out = s.clone();
    out.letters = vec!["tick".into()];
    for t in &mut out.transitions {
        t.label = None;
    }
    let q_new = out.states.len() as State;
    let q_mid = q_new + 1;
    let q_die = q_new + 2;
    out.states.extend(["q_new".to_string(), "q_mid".to_string(), "q_die".to_string()]);
    let bot = Symbol(0);
    // the letter edge keeps the stack: push then pop
    out.transitions.push(Transition { from: q_new, top: bot, label: Some(0), to: q_mid, op: Op::Push1(bot, 1) });
    out.transitions.push(Transition { from: q_mid, top: bot, label: None, to: s.initial, op: Op::Pop(1) });
    for q in targets {
        for g in 0..s.symbols.len() {
            let a = Symbol(g as u16);
            out.transitions.push(Transition { from: q, top: a, label: Some(0), to: q_die, op: Op::Push1(a, 1) });
        }
    }
    out.initial = q_new;
    out
}

pub fn decide_finiteness(spec: &CpsSpec, params: &Params) -> Verdict {
    let conv = finiteness_conversion(spec);
    let mut v = decide_branching(&conv, params);
    v.question = Question::Finiteness;
    v.detail = format!("on the converted system: {}", v.detail);
    v
}

/// ≥ b letters, as a b-fold composition of "at least one letter".
pub fn letters_family(spec: &CpsSpec, b: usize) -> (Grammar, usize) {
    let fam = build_canonical_family(spec);
    let mut g = fam.clone();
    let n = spec.level;
    let l = g.add_set(SetId::Named("L".into()), n);
    let q = g.id(&SetId::Q).unwrap();
    for (i, t) in spec.transitions.iter().enumerate() {
        let y = if t.label.is_some() { q } else { l };
        g.add_rule(l, Some(i), vec![y], Preservation::NotApplicable);
    }
    let lid = SetId::Named("L".into());
    let mut cur = lid.clone();
    for _ in 1..b.max(1) {
        let (g2, c) = compose(&g, &lid, &cur);
        g = g2;
        cur = c;
    }
    let root = g.id(&cur).unwrap();
    let g = wf_closure(&g.restrict(&[root]));
    let x = g.id(&cur).unwrap();
    (g, x)
}

/// Runs from the initial configuration with at least b letters, by types.
fn long_path(spec: &CpsSpec, b: usize, params: &Params) -> Result<Option<Run>, EngineError> {
    let (g, x) = letters_family(spec, b);
    let mut e = engine(spec, &g, params)?;
    let all: Vec<State> = (0..spec.states.len() as State).collect();
    query_initial(&mut e, x, &all)
}

/// BFS fallback: some path with b letters in the contraction.
fn long_path_bfs(spec: &CpsSpec, b: usize) -> (bool, bool) {
    let mut caps = Caps::letters(b);
    caps.max_nodes = 20_000;
    let g = explore(spec, caps);
    let found = g.depth.iter().any(|&d| d >= b);
    (found, g.truncated_nodes)
}

pub fn decide_unfolding(spec: &CpsSpec, params: &Params) -> Verdict {
    let q = Question::Unfolding;
    let b = params.path_bound.max(1);
    let br = decide_branching(spec, params);
    if br.is_infinite() {
        let mut v = Verdict::new(q, Answer::Infinite, br.exactness, "the contraction is infinitely branching");
        v.certificate = br.certificate;
        return v;
    }
    let s = normalize_eps_states(spec);
    let mut limits = br.limits_hit.clone();
    let path = match long_path(&s, b, params) {
        Ok(p) => Ok(p),
        Err(err) => {
            limits.push(err.to_string());
            Err(long_path_bfs(&s, b))
        }
    };
    // exact only if b reaches exp_{n-1}(C_S) for an upper bound on |T_S|+1
    let wg = witness_family(&s);
    let c = ctype_universe_bound(&s, &wg).add(&Big::from_u64(1));
    let c_s = Big::from_u64(3).mul(&c).mul(&c.pow2());
    let bound = exp_k(s.level as u32 - 1, &c_s);
    let reaches = Big::from_u64(b as u64).ge(&bound) == Decided::Holds;
    let mut v = match path {
        Ok(Some(run)) => {
            let (g, x) = letters_family(&s, b);
            let mut v = Verdict::new(
                q,
                Answer::Infinite,
                if reaches { Exactness::Exact } else { Exactness::Bounded },
                format!("a path with {} letters exists", b),
            );
            v.certificate = Some(certificate(&s, &g, x, &run));
            v
        }
        Ok(None) | Err((false, false)) => {
            let exact = br.exactness == Exactness::Exact && br.answer == Answer::Finite && s.level == 1;
            if exact || br.answer == Answer::Finite {
                Verdict::new(
                    q,
                    Answer::Finite,
                    if exact { Exactness::Exact } else { Exactness::Bounded },
                    format!("finitely branching and no path with {} letters", b),
                )
            } else {
                Verdict::new(
                    q,
                    Answer::FiniteUpTo { param: "path_bound".into(), value: b },
                    Exactness::Bounded,
                    format!("no path with {} letters; branching: {:?}", b, br.answer),
                )
            }
        }
        Err((true, _)) => Verdict::new(q, Answer::Infinite, Exactness::Bounded, format!("breadth-first search found a path with {} letters", b)),
        Err((false, true)) => Verdict::new(q, Answer::Unknown { limit: "max_nodes".into() }, Exactness::Bounded, "search truncated"),
    };
    v.limits_hit = limits;
    v
}

// ---- breadth-first ground truth ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BfsReport {
    pub depth: usize,
    pub fanout_cap: usize,
    pub max_out_degree: usize,
    /// contracted node with the largest out-degree (index into explored configurations)
    pub widest_node: Option<usize>,
    pub cap_exceeded: bool,
    /// contracted nodes first reached at each letter depth
    pub nodes_per_depth: Vec<usize>,
    pub explored: usize,
    pub truncated: bool,
}

impl BfsReport {
    /// The oracle's reading: a node wider than the cap suggests infinite branching.
    pub fn looks_infinitely_branching(&self) -> bool {
        self.cap_exceeded
    }
}

pub fn bfs_oracle(spec: &CpsSpec, depth: usize, fanout_cap: usize) -> BfsReport {
    let mut caps = Caps::letters(depth);
    // enough room to see a node wider than the cap, without very deep stacks
    caps.max_nodes = (fanout_cap + 1) * 8 * (depth + 1);
    let g = explore(spec, caps);
    let cg = eps_contract(&g, true);
    let mut deg: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &cg.edges {
        *deg.entry(e.src).or_default() += 1;
    }
    let (widest, max_deg) = deg.iter().map(|(&n, &d)| (Some(n), d)).max_by_key(|&(n, d)| (d, std::cmp::Reverse(n))).unwrap_or((None, 0));
    let mut per = vec![0usize; depth + 1];
    for &n in &cg.nodes {
        per[g.depth[n].min(depth)] += 1;
    }
    BfsReport {
        depth,
        fanout_cap,
        max_out_degree: max_deg,
        widest_node: widest,
        cap_exceeded: max_deg > fanout_cap,
        nodes_per_depth: per,
        explored: g.nodes.len(),
        truncated: g.truncated(),
    }
}

/// Re-validate a certificate against the system and its set.
pub fn check_certificate(spec: &CpsSpec, cert: &Certificate) -> bool {
    let Some(run) = &cert.run else { return false };
    let s = normalize_eps_states(spec);
    let start: &Config = run.first();
    run.validate(&s).is_ok()
        && *start == s.initial_config()
        && run.steps.last().is_some_and(|st| st.t.label.is_some())
        && run.steps.iter().map(|st| st.index).collect::<Vec<_>>() == cert.transitions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(trans: Vec<Transition>, letters: usize) -> CpsSpec {
        CpsSpec {
            level: 1,
            letters: (0..letters).map(|i| format!("l{}", i)).collect(),
            states: vec!["q".into(), "p".into()],
            initial: 0,
            symbols: vec!["⊥".into(), "A".into(), "B".into()],
            transitions: trans,
            ranks: vec![],
        }
    }

    #[test]
    fn no_transitions() {
        let s = system(vec![], 0);
        let p = Params::default();
        let v = decide_branching(&s, &p);
        assert_eq!((v.answer.clone(), v.exactness), (Answer::Finite, Exactness::Exact));
        assert_eq!(decide_finiteness(&s, &p).answer, Answer::Finite);
        let u = decide_unfolding(&s, &Params { path_bound: 1, ..p });
        assert_eq!((u.answer, u.exactness), (Answer::Finite, Exactness::Exact));
        assert_eq!(bfs_oracle(&s, 4, 8).max_out_degree, 0);
    }

    #[test]
    fn eps_pushes_then_letter() {
        let t = |from, top, label, to, op| Transition { from, top: Symbol(top), label, to, op };
        let s = system(
            vec![
                t(0, 0, None, 0, Op::Push1(Symbol(1), 1)),
                t(0, 1, None, 0, Op::Push1(Symbol(1), 1)),
                t(0, 1, Some(0), 1, Op::Push1(Symbol(2), 1)),
            ],
            1,
        );
        let v = decide_branching(&s, &Params::default());
        assert_eq!(v.answer, Answer::Infinite, "{}", v.detail);
        assert!(check_certificate(&s, v.certificate.as_ref().unwrap()));
        assert!(bfs_oracle(&s, 6, 64).cap_exceeded);
        let conv = finiteness_conversion(&s);
        assert!(crate::machine::is_eps_normalized(&conv));
        conv.validate().unwrap();
    }
}
