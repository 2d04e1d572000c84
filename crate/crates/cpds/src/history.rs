//! The history function on positions along runs, pack, and presence.

use thiserror::Error;

use crate::machine::Run;
use crate::stack_core::{is_present, points_into, top_position, Hop, Op, Position, Stack};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HistError {
    #[error("position is not valid in the stack")]
    InvalidPosition,
    #[error("index out of range")]
    IndexOutOfRange,
}

/// One step: `s` --op--> `t`, x a position in t.
pub fn hist_step(op: Op, s: &Stack, t: &Stack, x: &Position) -> Position {
    let n = t.level() as usize;
    match op {
        Op::Pop(_) => x.clone(),
        Op::Push1(_, k) => {
            let top0 = top_position(0, t).expect("push1 result has a full spine");
            if *x == top0 {
                let mut y = x.clone();
                *y.root.last_mut().unwrap() -= 1;
                return y;
            }
            if x.root == top0.root && !x.hops.is_empty() && x.hops[0].level == k {
                let mut root: Vec<u32> = top0.root[..n - k as usize].to_vec();
                root.extend_from_slice(&x.hops[0].tuple);
                return Position { root, hops: x.hops[1..].to_vec() };
            }
            x.clone()
        }
        Op::Push(i) => {
            let tp = top_position(i - 1, t).expect("push result has a full spine");
            if *x == tp || points_into(x, &tp) {
                let mut y = x.clone();
                y.root[n - i as usize] -= 1;
                return y;
            }
            x.clone()
        }
        Op::Col(k) => {
            let tk = top_position(k, t).expect("col result has a full spine");
            if points_into(x, &tk) {
                let s0 = top_position(0, s).expect("col source has a full spine");
                let mut hops = vec![Hop { level: k, tuple: x.root[n - k as usize..].to_vec() }];
                hops.extend_from_slice(&x.hops);
                return Position { root: s0.root, hops };
            }
            x.clone()
        }
    }
}

/// hist(R[i..m], x) for i = m down to 0; entry j holds hist(R[m−j..m], x).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryTrace {
    pub query: Position,
    pub back: Vec<Position>,
}

impl HistoryTrace {
    /// hist(R[i..m], x)
    pub fn from_start(&self, i: usize) -> &Position {
        let m = self.back.len() - 1;
        &self.back[m - i]
    }

    pub fn result(&self) -> &Position {
        self.back.last().unwrap()
    }
}

pub fn hist_trace(r: &Run, x: &Position) -> Result<HistoryTrace, HistError> {
    if !is_present(&r.last().stack, x) {
        return Err(HistError::InvalidPosition);
    }
    let m = r.len();
    let mut back = Vec::with_capacity(m + 1);
    back.push(x.clone());
    let mut cur = x.clone();
    for i in (0..m).rev() {
        cur = hist_step(r.steps[i].t.op, &r.configs[i].stack, &r.configs[i + 1].stack, &cur);
        debug_assert!(is_present(&r.configs[i].stack, &cur), "history left the stack");
        back.push(cur.clone());
    }
    Ok(HistoryTrace { query: x.clone(), back })
}

pub fn hist(r: &Run, x: &Position) -> Result<Position, HistError> {
    Ok(hist_trace(r, x)?.result().clone())
}

pub fn nesting_rank(x: &Position) -> usize {
    x.nesting_rank()
}

/// pack_i(x): overwrite the tail of the root with successive hop tuples.
pub fn pack(x: &Position, i: usize) -> Result<Position, HistError> {
    if i > x.nesting_rank() {
        return Err(HistError::IndexOutOfRange);
    }
    let mut root = x.root.clone();
    let n = root.len();
    for h in &x.hops[..i] {
        let k = h.level as usize;
        root[n - k..].copy_from_slice(&h.tuple);
    }
    Ok(Position::simple(root))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Presence {
    Always,
    RemovedAt(usize),
}

pub fn position_present(r: &Run, x: &Position) -> Result<Presence, HistError> {
    if !is_present(&r.first().stack, x) {
        return Err(HistError::InvalidPosition);
    }
    for (i, c) in r.configs.iter().enumerate() {
        if !is_present(&c.stack, x) {
            return Ok(Presence::RemovedAt(i));
        }
    }
    Ok(Presence::Always)
}

/// All positions of a stack, including those through links.
pub fn all_positions(s: &Stack) -> Vec<Position> {
    let mut out = Vec::new();
    let n = s.level() as usize;
    let mut prefix = Vec::new();
    collect_simple(s, n, &mut prefix, &mut |root, target| {
        let p = Position::simple(root.to_vec());
        if target.level() == 0 {
            let mut sub = Vec::new();
            link_positions(target, &p, &mut sub);
            out.push(p);
            out.extend(sub);
        } else {
            out.push(p);
        }
    });
    out
}

fn collect_simple(s: &Stack, width: usize, prefix: &mut Vec<u32>, f: &mut dyn FnMut(&[u32], &Stack)) {
    // the position pointing to s itself: prefix padded with zeros
    let mut padded = prefix.clone();
    padded.resize(width, 0);
    f(&padded, s);
    for (i, it) in s.items().iter().enumerate() {
        prefix.push(i as u32 + 1);
        if it.level() == 0 {
            f(prefix, it);
        } else {
            collect_simple(it, width, prefix, f);
        }
        prefix.pop();
    }
}

fn link_positions(z: &Stack, base: &Position, out: &mut Vec<Position>) {
    let (_, k, link) = z.as_zero().unwrap();
    let mut prefix = Vec::new();
    let mut found = Vec::new();
    collect_simple(link, k as usize, &mut prefix, &mut |t, target| {
        if t.iter().any(|&c| c != 0) {
            found.push((t.to_vec(), target.clone()));
        }
    });
    for (t, target) in found {
        let p = base.with_hop(k, t);
        if target.level() == 0 {
            let mut sub = Vec::new();
            link_positions(&target, &p, &mut sub);
            out.push(p);
            out.extend(sub);
        } else {
            out.push(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{replay, CpsSpec, Selector, Transition};
    use crate::stack_core::{resolve, Symbol};

    fn free(level: u8, ops: &[Op]) -> CpsSpec {
        CpsSpec {
            level,
            letters: vec![],
            states: vec!["q".into()],
            initial: 0,
            symbols: vec!["⊥".into(), "a".into()],
            transitions: ops
                .iter()
                .flat_map(|&op| {
                    (0..2).map(move |g| Transition { from: 0, top: Symbol(g), label: None, to: 0, op })
                })
                .collect(),
            ranks: vec![],
        }
    }

    fn run(spec: &CpsSpec, ops: &[Op]) -> Run {
        let sel: Vec<Selector> = ops.iter().map(|&o| Selector::op(o)).collect();
        replay(spec, &spec.initial_config(), &sel).unwrap()
    }

    #[test]
    fn empty_run_identity() {
        let spec = free(2, &[Op::Push(2)]);
        let r = Run::empty(spec.initial_config());
        let x = Position::simple(vec![1, 1]);
        assert_eq!(hist(&r, &x).unwrap(), x);
    }

    #[test]
    fn push2_decrements_level_two() {
        let spec = free(2, &[Op::Push(2)]);
        let r = run(&spec, &[Op::Push(2)]);
        assert_eq!(hist(&r, &Position::simple(vec![2, 0])).unwrap(), Position::simple(vec![1, 0]));
        assert_eq!(hist(&r, &Position::simple(vec![2, 1])).unwrap(), Position::simple(vec![1, 1]));
        assert_eq!(hist(&r, &Position::simple(vec![1, 1])).unwrap(), Position::simple(vec![1, 1]));
    }

    #[test]
    fn col_moves_into_link() {
        let spec = free(2, &[Op::Push(2), Op::Push1(Symbol(1), 2), Op::Col(2)]);
        let r = run(&spec, &[Op::Push(2), Op::Push1(Symbol(1), 2), Op::Col(2)]);
        // R(2) = [[⊥][⊥ a@2[[⊥]]]], col2 gives [[⊥]]
        let t = &r.last().stack;
        assert_eq!(t.len(), 1);
        let x = Position::simple(vec![1, 1]);
        let step = r.subrun(2, 3).unwrap();
        let h = hist(&step, &x).unwrap();
        assert_eq!(h, Position::simple(vec![2, 2]).with_hop(2, vec![1, 1]));
        let z = resolve(&step.first().stack, &h).unwrap();
        assert_eq!(z, resolve(t, &x).unwrap());
    }

    #[test]
    fn pack_examples() {
        let x = Position::simple(vec![2, 1]).with_hop(1, vec![1]);
        assert_eq!(pack(&x, 0).unwrap(), Position::simple(vec![2, 1]));
        assert_eq!(pack(&x, 1).unwrap(), Position::simple(vec![2, 1]));
        assert_eq!(nesting_rank(&x), 1);
        assert_eq!(pack(&x, 2), Err(HistError::IndexOutOfRange));
    }

    #[test]
    fn presence() {
        let spec = free(1, &[Op::Push1(Symbol(1), 1), Op::Pop(1)]);
        let r = run(&spec, &[Op::Push1(Symbol(1), 1), Op::Push1(Symbol(1), 1), Op::Pop(1), Op::Pop(1)]);
        let x = top_position(0, &r.at(2).stack).unwrap();
        let tail = r.subrun(2, 4).unwrap();
        assert_eq!(position_present(&tail, &x).unwrap(), Presence::RemovedAt(1));
        let r0 = Run::empty(spec.initial_config());
        assert_eq!(position_present(&r0, &Position::simple(vec![1])).unwrap(), Presence::Always);
    }

    #[test]
    fn positions_enumeration() {
        let spec = free(2, &[Op::Push1(Symbol(1), 1)]);
        let r = run(&spec, &[Op::Push1(Symbol(1), 1), Op::Push1(Symbol(1), 1)]);
        let ps = all_positions(&r.last().stack);
        for p in &ps {
            assert!(resolve(&r.last().stack, p).is_ok(), "{}", p);
            assert!(p.is_well_formed());
        }
        // the first a links to the empty stack: (0,0) (1,0) (1,1) (1,2) (1,3) (1,3)<1:(1)>
        assert_eq!(ps.len(), 6);
    }
}
