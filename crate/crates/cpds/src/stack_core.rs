//! Annotated higher-order stacks, the stack operations, and positions.
//!
//! A 0-stack is a symbol together with a link level `k` and a full linked
//! k-stack. Higher stacks are sequences (bottom to top) of stacks one level
//! below. Values are immutable and share structure through `Arc`.

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stack symbol, an index into the owning system's alphabet. Index 0 is ⊥.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol(pub u16);

impl Symbol {
    pub const BOTTOM: Symbol = Symbol(0);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColFailure {
    LinkLevelMismatch { expected: u8, found: u8 },
    EmptyLink,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StackError {
    #[error("invalid level {0}")]
    InvalidLevel(u8),
    #[error("undefined pop")]
    UndefinedPop,
    #[error("undefined col: {0:?}")]
    UndefinedCol(ColFailure),
    #[error("empty spine")]
    EmptySpine,
    #[error("position not present")]
    NotPresent,
    #[error("arity mismatch")]
    ArityMismatch,
    #[error("capacity exceeded (cap {0})")]
    CapacityExceeded(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    Pop(u8),
    /// push of level ≥ 2
    Push(u8),
    Push1(Symbol, u8),
    Col(u8),
}

impl Op {
    /// The level the operation acts on (push1 counts as 1).
    pub fn level(&self) -> u8 {
        match *self {
            Op::Pop(i) | Op::Push(i) | Op::Col(i) => i,
            Op::Push1(_, _) => 1,
        }
    }

    pub fn is_push(&self) -> bool {
        matches!(self, Op::Push(_) | Op::Push1(_, _))
    }

    /// Levels mentioned by the operation, for validation against n.
    pub fn check_levels(&self, n: u8) -> Result<(), StackError> {
        let bad = match *self {
            Op::Pop(i) | Op::Col(i) => i == 0 || i > n,
            Op::Push(i) => i < 2 || i > n,
            Op::Push1(_, k) => k == 0 || k > n,
        };
        if bad {
            Err(StackError::InvalidLevel(self.level()))
        } else {
            Ok(())
        }
    }
}

enum Kind {
    Zero { sym: Symbol, link_level: u8, link: Stack },
    Seq { level: u8, items: Vec<Stack> },
}

struct Node {
    hash: u64,
    kind: Kind,
}

#[derive(Clone)]
pub struct Stack(Arc<Node>);

fn mix(h: u64, v: u64) -> u64 {
    // splitmix-style combine; only needs to be deterministic
    let mut z = h ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Stack {
    pub fn zero(sym: Symbol, link_level: u8, link: Stack) -> Stack {
        assert_eq!(link.level(), link_level, "link level mismatch");
        let h = mix(mix(mix(1, sym.0 as u64), link_level as u64), link.0.hash);
        Stack(Arc::new(Node { hash: h, kind: Kind::Zero { sym, link_level, link } }))
    }

    pub fn seq(level: u8, items: Vec<Stack>) -> Stack {
        assert!(level >= 1);
        let mut h = mix(2, level as u64);
        for it in &items {
            debug_assert_eq!(it.level() + 1, level);
            h = mix(h, it.0.hash);
        }
        Stack(Arc::new(Node { hash: h, kind: Kind::Seq { level, items } }))
    }

    pub fn empty(level: u8) -> Stack {
        Stack::seq(level, Vec::new())
    }

    pub fn level(&self) -> u8 {
        match &self.0.kind {
            Kind::Zero { .. } => 0,
            Kind::Seq { level, .. } => *level,
        }
    }

    /// Items of a k-stack, k ≥ 1. Empty slice for a 0-stack.
    pub fn items(&self) -> &[Stack] {
        match &self.0.kind {
            Kind::Zero { .. } => &[],
            Kind::Seq { items, .. } => items,
        }
    }

    pub fn len(&self) -> usize {
        self.items().len()
    }

    pub fn is_empty(&self) -> bool {
        self.items().is_empty()
    }

    /// Symbol, link level and link of a 0-stack.
    pub fn as_zero(&self) -> Option<(Symbol, u8, &Stack)> {
        match &self.0.kind {
            Kind::Zero { sym, link_level, link } => Some((*sym, *link_level, link)),
            Kind::Seq { .. } => None,
        }
    }

    pub fn top_item(&self) -> Option<&Stack> {
        self.items().last()
    }

    /// The topmost k-stack (k ≤ level).
    pub fn topmost(&self, k: u8) -> Result<&Stack, StackError> {
        let mut cur = self;
        if k > cur.level() {
            return Err(StackError::InvalidLevel(k));
        }
        while cur.level() > k {
            cur = cur.top_item().ok_or(StackError::EmptySpine)?;
        }
        Ok(cur)
    }

    /// The topmost 0-stack's symbol. None when the spine is broken.
    pub fn top_symbol(&self) -> Option<Symbol> {
        self.topmost(0).ok().and_then(|z| z.as_zero().map(|(a, _, _)| a))
    }

    /// Sizes of the topmost i-stacks for i = n down to 1 (0 once the spine ends).
    pub fn top_sizes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.level() as usize);
        let mut cur = Some(self);
        for _ in 0..self.level() {
            match cur {
                Some(c) => {
                    out.push(c.len());
                    cur = c.top_item();
                }
                None => out.push(0),
            }
        }
        out
    }

    /// Same stack with its top item dropped.
    pub fn without_top(&self) -> Stack {
        let items = self.items();
        Stack::seq(self.level(), items[..items.len().saturating_sub(1)].to_vec())
    }

    pub fn with_pushed(&self, item: Stack) -> Stack {
        let mut items = self.items().to_vec();
        items.push(item);
        Stack::seq(self.level(), items)
    }

    pub fn ptr_eq(a: &Stack, b: &Stack) -> bool {
        Arc::ptr_eq(&a.0, &b.0)
    }

    pub fn cached_hash(&self) -> u64 {
        self.0.hash
    }

    /// Replace the topmost k-stack by `f(topmost k-stack)`.
    fn map_top<F>(&self, k: u8, f: F) -> Result<Stack, StackError>
    where
        F: FnOnce(&Stack) -> Result<Stack, StackError>,
    {
        if self.level() == k {
            return f(self);
        }
        let top = self.top_item().ok_or(StackError::EmptySpine)?;
        let new_top = top.map_top(k, f)?;
        let mut items = self.items().to_vec();
        *items.last_mut().unwrap() = new_top;
        Ok(Stack::seq(self.level(), items))
    }

    /// Count of every node reachable through items and links, shared nodes counted once per path.
    pub fn node_count(&self) -> usize {
        match &self.0.kind {
            Kind::Zero { link, .. } => 1 + link.node_count(),
            Kind::Seq { items, .. } => 1 + items.iter().map(|s| s.node_count()).sum::<usize>(),
        }
    }

    /// Render with a symbol-naming function.
    pub fn render(&self, name: &dyn Fn(Symbol) -> String) -> String {
        let mut s = String::new();
        self.render_into(&mut s, name);
        s
    }

    fn render_into(&self, out: &mut String, name: &dyn Fn(Symbol) -> String) {
        match &self.0.kind {
            Kind::Zero { sym, link_level, link } => {
                out.push_str(&name(*sym));
                if !link.is_empty() {
                    out.push_str(&format!("@{}", link_level));
                    link.render_into(out, name);
                }
            }
            Kind::Seq { items, .. } => {
                out.push('[');
                for (i, it) in items.iter().enumerate() {
                    if i > 0 && it.level() == 0 {
                        out.push(' ');
                    }
                    it.render_into(out, name);
                }
                out.push(']');
            }
        }
    }
}

pub fn default_symbol_name(a: Symbol) -> String {
    if a == Symbol::BOTTOM {
        "⊥".to_string()
    } else {
        format!("g{}", a.0)
    }
}

impl PartialEq for Stack {
    fn eq(&self, other: &Stack) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash {
            return false;
        }
        match (&self.0.kind, &other.0.kind) {
            (
                Kind::Zero { sym: a, link_level: k, link: l },
                Kind::Zero { sym: b, link_level: k2, link: l2 },
            ) => a == b && k == k2 && l == l2,
            (Kind::Seq { level: a, items: x }, Kind::Seq { level: b, items: y }) => a == b && x == y,
            _ => false,
        }
    }
}

impl Eq for Stack {}

impl Hash for Stack {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&default_symbol_name))
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&default_symbol_name))
    }
}

/// The initial n-stack: [..[(⊥,n,[])]..].
pub fn make_initial(n: u8) -> Result<Stack, StackError> {
    if n == 0 {
        return Err(StackError::InvalidLevel(0));
    }
    let mut s = Stack::zero(Symbol::BOTTOM, n, Stack::empty(n));
    for lvl in 1..=n {
        s = Stack::seq(lvl, vec![s]);
    }
    Ok(s)
}

pub fn apply_op(op: Op, s: &Stack) -> Result<Stack, StackError> {
    let n = s.level();
    if n == 0 {
        return Err(StackError::InvalidLevel(0));
    }
    op.check_levels(n)?;
    match op {
        Op::Pop(i) => s.map_top(i, |t| {
            if t.len() < 2 {
                Err(StackError::UndefinedPop)
            } else {
                Ok(t.without_top())
            }
        }),
        Op::Push(i) => s.map_top(i, |t| {
            let top = t.top_item().ok_or(StackError::EmptySpine)?.clone();
            Ok(t.with_pushed(top))
        }),
        Op::Push1(a, k) => {
            let tk = s.topmost(k)?;
            if tk.is_empty() {
                return Err(StackError::EmptySpine);
            }
            let link = tk.without_top();
            let z = Stack::zero(a, k, link);
            s.map_top(1, |t| Ok(t.with_pushed(z)))
        }
        Op::Col(i) => {
            let z = s.topmost(0)?;
            let (_, k, link) = z.as_zero().unwrap();
            if k != i {
                return Err(StackError::UndefinedCol(ColFailure::LinkLevelMismatch {
                    expected: i,
                    found: k,
                }));
            }
            if link.is_empty() {
                return Err(StackError::UndefinedCol(ColFailure::EmptyLink));
            }
            let link = link.clone();
            s.map_top(i, |_| Ok(link))
        }
    }
}

/// A link hop `⟨k:y⟩`: `tuple` has length k, index 0 holds the level-k coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hop {
    pub level: u8,
    pub tuple: Vec<u32>,
}

/// A position: a root simple tuple (index 0 = level n) followed by link hops.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub root: Vec<u32>,
    pub hops: Vec<Hop>,
}

impl Position {
    pub fn simple(root: Vec<u32>) -> Position {
        Position { root, hops: Vec::new() }
    }

    pub fn is_simple(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn nesting_rank(&self) -> usize {
        self.hops.len()
    }

    pub fn with_hop(&self, level: u8, tuple: Vec<u32>) -> Position {
        let mut p = self.clone();
        p.hops.push(Hop { level, tuple });
        p
    }

    pub fn last_tuple(&self) -> &[u32] {
        self.hops.last().map(|h| &h.tuple[..]).unwrap_or(&self.root)
    }

    /// Level of the stack pointed to: trailing zeros of the last tuple.
    pub fn pointed_level(&self) -> u8 {
        self.last_tuple().iter().rev().take_while(|&&c| c == 0).count() as u8
    }

    /// Well-formedness independent of any stack: zeros form a suffix in every tuple,
    /// hop tuples are nonzero, and every hop starts from a 0-stack pointer.
    pub fn is_well_formed(&self) -> bool {
        fn zeros_suffix(t: &[u32]) -> bool {
            let first_zero = t.iter().position(|&c| c == 0).unwrap_or(t.len());
            t[first_zero..].iter().all(|&c| c == 0)
        }
        if !zeros_suffix(&self.root) {
            return false;
        }
        let mut prev = &self.root;
        for h in &self.hops {
            if prev.contains(&0) {
                return false;
            }
            if h.tuple.len() != h.level as usize || h.level == 0 {
                return false;
            }
            if h.tuple.iter().all(|&c| c == 0) || !zeros_suffix(&h.tuple) {
                return false;
            }
            prev = &h.tuple;
        }
        true
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tup = |t: &[u32]| {
            let parts: Vec<String> = t.iter().map(|c| c.to_string()).collect();
            format!("({})", parts.join(","))
        };
        write!(f, "{}", tup(&self.root))?;
        for h in &self.hops {
            write!(f, "<{}:{}>", h.level, tup(&h.tuple))?;
        }
        Ok(())
    }
}

/// TOPᵏ(s) = (|sⁿ|,…,|s^{k+1}|,0,…,0).
pub fn top_position(k: u8, s: &Stack) -> Result<Position, StackError> {
    let n = s.level();
    if k > n {
        return Err(StackError::InvalidLevel(k));
    }
    let mut root = Vec::with_capacity(n as usize);
    let mut cur = s;
    while cur.level() > k {
        if cur.is_empty() {
            return Err(StackError::EmptySpine);
        }
        root.push(cur.len() as u32);
        cur = cur.top_item().unwrap();
    }
    root.resize(n as usize, 0);
    Ok(Position::simple(root))
}

fn resolve_tuple<'a>(s: &'a Stack, t: &[u32]) -> Result<&'a Stack, StackError> {
    if t.len() != s.level() as usize {
        return Err(StackError::NotPresent);
    }
    let mut cur = s;
    for (i, &c) in t.iter().enumerate() {
        if c == 0 {
            if t[i..].iter().any(|&d| d != 0) {
                return Err(StackError::NotPresent);
            }
            return Ok(cur);
        }
        cur = cur.items().get(c as usize - 1).ok_or(StackError::NotPresent)?;
    }
    Ok(cur)
}

pub fn resolve(s: &Stack, x: &Position) -> Result<Stack, StackError> {
    let mut cur = resolve_tuple(s, &x.root)?;
    for h in &x.hops {
        let (_, k, link) = cur.as_zero().ok_or(StackError::NotPresent)?;
        if k != h.level || h.tuple.iter().all(|&c| c == 0) {
            return Err(StackError::NotPresent);
        }
        cur = resolve_tuple(link, &h.tuple)?;
    }
    Ok(cur.clone())
}

pub fn is_present(s: &Stack, x: &Position) -> bool {
    resolve(s, x).is_ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosOrder {
    /// First difference at the given level, left smaller.
    Less(u8),
    Equal,
    Greater(u8),
    Incomparable,
}

/// Lexicographic comparison of root tuples. Positions with equal roots but
/// different link hops are incomparable.
pub fn compare_positions(x: &Position, y: &Position) -> Result<PosOrder, StackError> {
    if x.root.len() != y.root.len() {
        return Err(StackError::ArityMismatch);
    }
    let n = x.root.len();
    for i in 0..n {
        let lvl = (n - i) as u8;
        if x.root[i] < y.root[i] {
            return Ok(PosOrder::Less(lvl));
        }
        if x.root[i] > y.root[i] {
            return Ok(PosOrder::Greater(lvl));
        }
    }
    if x.hops == y.hops {
        Ok(PosOrder::Equal)
    } else {
        Ok(PosOrder::Incomparable)
    }
}

/// True iff x ⪯ y on simple positions (roots compared, hops ignored).
pub fn root_leq(x: &Position, y: &Position) -> bool {
    x.root <= y.root
}

/// Does `y` point into the stack at `x`?
pub fn points_into(y: &Position, x: &Position) -> bool {
    let h = x.hops.len();
    if y.hops.len() < h {
        return false;
    }
    // all segments of x except the last must match exactly
    let x_last = x.last_tuple();
    let y_seg = |i: usize| -> &[u32] {
        if i == 0 {
            &y.root
        } else {
            &y.hops[i - 1].tuple
        }
    };
    for i in 0..h {
        let xs: &[u32] = if i == 0 { &x.root } else { &x.hops[i - 1].tuple };
        if xs != y_seg(i) {
            return false;
        }
        if x.hops[i].level != y.hops[i].level {
            return false;
        }
    }
    if x.pointed_level() == 0 {
        // y = x⟨k:z⟩
        return y_seg(h) == x_last && y.hops.len() > h;
    }
    let ys = y_seg(h);
    if ys.len() != x_last.len() {
        return false;
    }
    let agrees = x_last.iter().zip(ys).all(|(&a, &b)| a == 0 || a == b);
    agrees && (ys != x_last || y.hops.len() > h)
}

pub type StackId = u32;

/// Canonicalizes stacks to ids. Equal stacks get equal ids.
pub struct Interner {
    map: HashMap<Stack, StackId>,
    stacks: Vec<Stack>,
    cap: usize,
}

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

impl Interner {
    /// Cap from CPDS_MAX_STACK_NODES, else 10⁶.
    pub fn new() -> Interner {
        let cap = std::env::var("CPDS_MAX_STACK_NODES")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_NODE_CAP);
        Interner::with_cap(cap)
    }

    pub fn with_cap(cap: usize) -> Interner {
        Interner { map: HashMap::new(), stacks: Vec::new(), cap }
    }

    pub fn intern(&mut self, s: &Stack) -> Result<StackId, StackError> {
        if let Some(&id) = self.map.get(s) {
            return Ok(id);
        }
        if self.stacks.len() >= self.cap {
            return Err(StackError::CapacityExceeded(self.cap));
        }
        let id = self.stacks.len() as StackId;
        self.map.insert(s.clone(), id);
        self.stacks.push(s.clone());
        Ok(id)
    }

    /// Canonical representative for an id.
    pub fn get(&self, id: StackId) -> &Stack {
        &self.stacks[id as usize]
    }

    pub fn lookup(&self, s: &Stack) -> Option<StackId> {
        self.map.get(s).copied()
    }

    pub fn len(&self) -> usize {
        self.stacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stacks.is_empty()
    }
}

impl Default for Interner {
    fn default() -> Self {
        Interner::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Symbol = Symbol(1);
    const B: Symbol = Symbol(2);

    #[test]
    fn initial_stacks() {
        let s1 = make_initial(1).unwrap();
        assert_eq!(s1.level(), 1);
        assert_eq!(s1.len(), 1);
        let z = s1.top_item().unwrap().as_zero().unwrap();
        assert_eq!((z.0, z.1, z.2.is_empty()), (Symbol::BOTTOM, 1, true));
        let s2 = make_initial(2).unwrap();
        assert_eq!(format!("{}", s2), "[[⊥]]");
        assert_eq!(make_initial(0), Err(StackError::InvalidLevel(0)));
    }

    #[test]
    fn push_pop_basic() {
        let s = make_initial(2).unwrap();
        let t = apply_op(Op::Push(2), &s).unwrap();
        assert_eq!(format!("{}", t), "[[⊥][⊥]]");
        assert_eq!(apply_op(Op::Pop(1), &s), Err(StackError::UndefinedPop));
        assert_eq!(apply_op(Op::Pop(2), &t).unwrap(), s);
    }

    #[test]
    fn push1_then_col_is_double_pop() {
        let s = make_initial(2).unwrap();
        let t = apply_op(Op::Push1(B, 1), &s).unwrap();
        let t = apply_op(Op::Push1(A, 1), &t).unwrap();
        let u = apply_op(Op::Col(1), &t).unwrap();
        assert_eq!(u, s);
        let twice = apply_op(Op::Pop(1), &apply_op(Op::Pop(1), &t).unwrap()).unwrap();
        assert_eq!(u, twice);
    }

    #[test]
    fn col_failures() {
        let s = make_initial(2).unwrap();
        assert_eq!(
            apply_op(Op::Col(1), &s),
            Err(StackError::UndefinedCol(ColFailure::LinkLevelMismatch { expected: 1, found: 2 }))
        );
        assert_eq!(apply_op(Op::Col(2), &s), Err(StackError::UndefinedCol(ColFailure::EmptyLink)));
        assert_eq!(apply_op(Op::Pop(3), &s), Err(StackError::InvalidLevel(3)));
    }

    #[test]
    fn top_positions() {
        let s = make_initial(2).unwrap();
        assert_eq!(top_position(0, &s).unwrap(), Position::simple(vec![1, 1]));
        let t = apply_op(Op::Push(2), &s).unwrap();
        assert_eq!(top_position(1, &t).unwrap(), Position::simple(vec![2, 0]));
        assert_eq!(top_position(1, &Stack::empty(2)), Err(StackError::EmptySpine));
    }

    #[test]
    fn resolve_examples() {
        let s = make_initial(2).unwrap();
        let z = resolve(&s, &Position::simple(vec![1, 1])).unwrap();
        assert_eq!(z, *s.topmost(0).unwrap());
        let t = apply_op(Op::Push(2), &s).unwrap();
        assert_eq!(resolve(&t, &Position::simple(vec![3, 0])), Err(StackError::NotPresent));

        let u = apply_op(Op::Push1(B, 1), &s).unwrap();
        let u = apply_op(Op::Push1(A, 1), &u).unwrap();
        let x = Position::simple(vec![1, 3]).with_hop(1, vec![1]);
        let got = resolve(&u, &x).unwrap();
        assert_eq!(got.as_zero().unwrap().0, Symbol::BOTTOM);
        assert_eq!(x.nesting_rank(), 1);
        assert_eq!(x.pointed_level(), 0);
    }

    #[test]
    fn comparisons() {
        let p = |v: Vec<u32>| Position::simple(v);
        assert_eq!(compare_positions(&p(vec![1, 1]), &p(vec![2, 0])), Ok(PosOrder::Less(2)));
        assert_eq!(compare_positions(&p(vec![2, 1]), &p(vec![2, 3])), Ok(PosOrder::Less(1)));
        assert_eq!(compare_positions(&p(vec![2, 1]), &p(vec![2, 1])), Ok(PosOrder::Equal));
        assert_eq!(compare_positions(&p(vec![2]), &p(vec![2, 1])), Err(StackError::ArityMismatch));
        let q = p(vec![1, 1]).with_hop(1, vec![1]);
        assert_eq!(compare_positions(&q, &p(vec![1, 1])), Ok(PosOrder::Incomparable));
    }

    #[test]
    fn pointing_into() {
        let p = |v: Vec<u32>| Position::simple(v);
        assert!(points_into(&p(vec![2, 1]), &p(vec![2, 0])));
        assert!(!points_into(&p(vec![2, 0]), &p(vec![2, 0])));
        assert!(!points_into(&p(vec![1, 1]), &p(vec![2, 0])));
        let y = p(vec![2, 1]).with_hop(1, vec![1]);
        assert!(points_into(&y, &p(vec![2, 1])));
        assert!(points_into(&y, &p(vec![2, 0])));
        assert!(points_into(&y, &p(vec![0, 0])));
        assert!(!points_into(&p(vec![2, 1]), &p(vec![2, 1])));
    }

    #[test]
    fn interning() {
        let mut int = Interner::with_cap(2);
        let s = make_initial(2).unwrap();
        let a = int.intern(&s).unwrap();
        assert_eq!(int.intern(&make_initial(2).unwrap()).unwrap(), a);
        let t = apply_op(Op::Push(2), &s).unwrap();
        let b = int.intern(&t).unwrap();
        assert_ne!(a, b);
        let u = apply_op(Op::Push(2), &t).unwrap();
        assert_eq!(int.intern(&u), Err(StackError::CapacityExceeded(2)));
    }
}
