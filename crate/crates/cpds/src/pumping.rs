//! Constants, combinatorics on size sequences, pumping subruns, pump
//! iteration and the infinite-branching witness.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::history::hist;
use crate::machine::{CpsSpec, MachineError, Run};
use crate::run_classes::{classify_pumping, is_nonerasing, Cmp, Eps, SetId};
use crate::stack_core::{compare_positions, top_position, PosOrder};
use crate::tower::{Big, Decided};
use crate::type_engine::{EngineError, TypeEngine};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PumpError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("system is not normalized: state {0} has both ε and non-ε incoming transitions")]
    NotNormalized(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("run error: {0}")]
    Machine(String),
}

impl From<MachineError> for PumpError {
    fn from(e: MachineError) -> Self {
        PumpError::Machine(e.to_string())
    }
}

// ---- constants ----

#[derive(Clone, Debug)]
pub struct PumpConstants {
    pub m: u64,
    pub c: BigUint,
    pub n: usize,
    /// index 0 unused for M, M', S
    pub big_m: Vec<Big>,
    pub big_m_prime: Vec<Big>,
    pub big_n: Vec<Big>,
    pub big_n_prime: Vec<Big>,
    pub big_s: Vec<Big>,
    pub c_s: Big,
}

pub fn seq_constants(m: u64, c: impl Into<BigUint>, n: usize) -> Result<PumpConstants, PumpError> {
    let c: BigUint = c.into();
    if c < BigUint::from(2u32) {
        return Err(PumpError::Precondition("c must be at least 2".into()));
    }
    let bc = Big::exact(c.clone());
    let two_c = bc.pow2();
    let three_c_2c = Big::from_u64(3).mul(&bc).mul(&two_c);
    let zero = Big::from_u64(0);
    let mut big_m = vec![zero.clone()];
    let mut big_mp = vec![zero.clone()];
    let mut big_s = vec![zero.clone()];
    let mut big_n = vec![bc.clone()];
    let mut big_np = vec![bc.clone()];
    for j in 1..=n {
        if j == 1 {
            big_m.push(Big::from_u64(m + 1).mul(&bc));
            big_mp.push(Big::from_u64(m).mul(&bc));
            big_s.push(Big::from_u64(m + 1).mul(&three_c_2c));
        } else {
            big_m.push(big_m[j - 1].pow2());
            big_mp.push(big_mp[j - 1].pow2());
            big_s.push(big_s[j - 1].pow2());
        }
        big_n.push(big_m[j].mul(&big_n[j - 1].pow2()));
        big_np.push(big_mp[j].mul(&big_np[j - 1].pow2()));
    }
    Ok(PumpConstants {
        m,
        c,
        n,
        big_m,
        big_m_prime: big_mp,
        big_n,
        big_n_prime: big_np,
        big_s,
        c_s: three_c_2c,
    })
}

impl PumpConstants {
    /// M_i − M'_i ≥ N'_{i−1}, for i = 1..n
    pub fn check_m_gap(&self) -> Vec<Decided> {
        (1..=self.n).map(|i| self.big_m[i].ge(&self.big_m_prime[i].add(&self.big_n_prime[i - 1]))).collect()
    }

    /// S_j ≥ 3·N_j, for j = 1..n
    pub fn check_s_bound(&self) -> Vec<Decided> {
        (1..=self.n).map(|j| self.big_s[j].ge(&Big::from_u64(3).mul(&self.big_n[j]))).collect()
    }

    /// exp_{n−1}((m+1)·C_S)
    pub fn path_bound(&self) -> Big {
        crate::tower::exp_k(self.n.saturating_sub(1) as u32, &Big::from_u64(self.m + 1).mul(&self.c_s))
    }
}

// ---- size sequences ----

fn check_steps(a: &[u64]) -> Result<(), PumpError> {
    if a.is_empty() {
        return Err(PumpError::Precondition("empty sequence".into()));
    }
    if let Some(i) = (1..a.len()).find(|&i| a[i] > a[i - 1] + 1) {
        return Err(PumpError::Precondition(format!("a[{}] - a[{}] > 1", i, i - 1)));
    }
    Ok(())
}

fn check_g(a: &[u64], g: &BTreeSet<usize>) -> Result<(), PumpError> {
    let l = a.len() - 1;
    if let Some(&x) = g.iter().find(|&&x| x >= l) {
        return Err(PumpError::Precondition(format!("G contains {} but must lie below {}", x, l)));
    }
    Ok(())
}

/// H_e computed with next-smaller tables: i is in H_e iff no later index up
/// to e is strictly smaller and none up to n_G(i) is smaller or equal.
fn h_fast(a: &[u64], g: &BTreeSet<usize>, e: usize) -> Vec<usize> {
    let l = a.len();
    let mut next_lt = vec![l; l];
    let mut next_le = vec![l; l];
    let mut st: Vec<usize> = Vec::new();
    for i in (0..l).rev() {
        while st.last().is_some_and(|&j| a[j] >= a[i]) {
            st.pop();
        }
        next_lt[i] = st.last().copied().unwrap_or(l);
        st.push(i);
    }
    st.clear();
    for i in (0..l).rev() {
        while st.last().is_some_and(|&j| a[j] > a[i]) {
            st.pop();
        }
        next_le[i] = st.last().copied().unwrap_or(l);
        st.push(i);
    }
    (0..e)
        .filter(|&i| {
            let ng = *g.range(i..).next().expect("e-1 is in G");
            next_lt[i] > e && next_le[i] > ng
        })
        .collect()
}

/// H_e spelled out from its definition.
pub fn h_literal(a: &[u64], g: &BTreeSet<usize>, e: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..e {
        let Some(&ng) = g.iter().filter(|&&x| x >= i).min() else { continue };
        let c1 = (i..=e).all(|j| a[i] <= a[j]);
        let c2 = (i + 1..=ng).all(|j| a[i] < a[j]);
        if c1 && c2 {
            out.push(i);
        }
    }
    out
}

/// Smallest e with e−1 ∈ G and |H_e| ≥ k.
pub fn find_increasing_subseq(a: &[u64], g: &BTreeSet<usize>, k: usize) -> Result<Option<(usize, Vec<usize>)>, PumpError> {
    check_steps(a)?;
    if a.iter().any(|&x| x < a[0]) {
        return Err(PumpError::Precondition("a[0] is not the minimum".into()));
    }
    check_g(a, g)?;
    if k == 0 {
        return Err(PumpError::Precondition("k must be positive".into()));
    }
    for &e1 in g {
        let e = e1 + 1;
        let h = h_fast(a, g, e);
        if h.len() >= k {
            debug_assert_eq!(h, h_literal(a, g, e));
            return Ok(Some((e, h)));
        }
    }
    Ok(None)
}

/// Literal check of the lemma's conclusion.
pub fn verify_increasing(a: &[u64], g: &BTreeSet<usize>, k: usize, e: usize, h: &[usize]) -> bool {
    e >= 1 && e < a.len() && g.contains(&(e - 1)) && h == h_literal(a, g, e).as_slice() && h.len() >= k
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WindowResult {
    pub b: usize,
    pub e: usize,
    /// H_{b,e}
    pub h: Vec<usize>,
}

/// Lexicographically smallest (b, e) satisfying the window conditions.
pub fn find_window(a: &[u64], g: &BTreeSet<usize>, k: usize) -> Result<Option<WindowResult>, PumpError> {
    check_steps(a)?;
    if a.contains(&0) {
        return Err(PumpError::Precondition("sequence must be positive".into()));
    }
    check_g(a, g)?;
    if k == 0 {
        return Err(PumpError::Precondition("k must be positive".into()));
    }
    let l = a.len() - 1;
    let mut prefix_min = u64::MAX;
    for b in 0..l {
        // a_i > a_b for i < b
        if prefix_min <= a[b] {
            prefix_min = prefix_min.min(a[b]);
            continue;
        }
        prefix_min = a[b];
        let mut run_min = a[b];
        for e in b + 1..=l {
            run_min = run_min.min(a[e]);
            if run_min < a[b] {
                break;
            }
            if !g.contains(&(e - 1)) {
                continue;
            }
            let h: Vec<usize> = h_fast(a, g, e).into_iter().filter(|&i| i >= b).collect();
            if h.len() >= k {
                return Ok(Some(WindowResult { b, e, h }));
            }
        }
    }
    Ok(None)
}

pub fn verify_window(a: &[u64], g: &BTreeSet<usize>, k: usize, w: &WindowResult) -> bool {
    let (b, e) = (w.b, w.e);
    if !(b < e && e < a.len()) {
        return false;
    }
    let c1 = g.contains(&(e - 1));
    let c2 = a[b] == *a[b..=e].iter().min().unwrap();
    let c3 = (0..b).all(|i| a[i] > a[b]);
    let hl: Vec<usize> = h_literal(a, g, e).into_iter().filter(|&i| i >= b).collect();
    c1 && c2 && c3 && hl == w.h && hl.len() >= k
}

// ---- pumping subruns ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PumpTriple {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

fn top_hist_ok(r: &Run, i: usize, k: u8) -> Result<bool, PumpError> {
    let m = r.len();
    let x = top_position(k, &r.last().stack).map_err(|e| PumpError::Machine(e.to_string()))?;
    let h = hist(&r.subrun(i, m)?, &x).map_err(|e| PumpError::Machine(e.to_string()))?;
    Ok(h == top_position(k, &r.at(i).stack).unwrap())
}

/// Indices i < |R| where the history of TOP^k(R(|R|)) over R[i..] is TOP^k(R(i)).
pub fn g_indices(r: &Run, k: u8) -> Result<BTreeSet<usize>, PumpError> {
    let mut out = BTreeSet::new();
    for i in 0..r.len() {
        if top_hist_ok(r, i, k)? {
            out.insert(i);
        }
    }
    Ok(out)
}

/// First (x, y, z) in lexicographic order satisfying all six conclusions.
pub fn find_pump_triple(engine: &mut TypeEngine, r: &Run, k: u8, gk: &BTreeSet<usize>) -> Result<Option<PumpTriple>, PumpError> {
    let m = r.len();
    for &i in gk {
        if i >= m || !top_hist_ok(r, i, k)? {
            return Err(PumpError::Precondition(format!("index {} is not a history-preserving index", i)));
        }
    }
    if m == 0 {
        return Ok(None);
    }
    engine.settle(|engine| triple_search(engine, r, k, gk))
}

fn triple_search(engine: &mut TypeEngine, r: &Run, k: u8, gk: &BTreeSet<usize>) -> Result<Option<PumpTriple>, PumpError> {
    let m = r.len();
    let mut ct = Vec::with_capacity(m + 1);
    for c in &r.configs {
        ct.push(engine.ctype(c)?);
    }
    let hist_ok: Vec<bool> = (0..=m).map(|y| y == m || top_hist_ok(r, y, k).unwrap_or(false)).collect();
    let top0: Vec<_> = r.configs.iter().map(|c| top_position(0, &c.stack).unwrap()).collect();
    for x in 0..m {
        for y in x + 1..m {
            if !hist_ok[y] || !engine.ctype_eq(&ct[x], &ct[y])? {
                continue;
            }
            if top0[x] == top0[y] && gk.range(x..y).next().is_none() {
                continue;
            }
            if classify_pumping(&r.subrun(x, y)?).is_err() {
                continue;
            }
            for z in y + 1..=m {
                if gk.contains(&(z - 1)) && is_nonerasing(&r.subrun(y, z)?, 0) {
                    return Ok(Some(PumpTriple { x, y, z }));
                }
            }
        }
    }
    Ok(None)
}

/// Re-check of the six conclusions.
pub fn verify_triple(engine: &mut TypeEngine, r: &Run, k: u8, gk: &BTreeSet<usize>, t: &PumpTriple) -> Result<bool, PumpError> {
    let (x, y, z) = (t.x, t.y, t.z);
    if !(x < y && y < z && z <= r.len()) {
        return Ok(false);
    }
    let c1 = engine.settle(|e| {
        let a = e.ctype(r.at(x))?;
        let b = e.ctype(r.at(y))?;
        e.ctype_eq(&a, &b)
    })?;
    let c2 = classify_pumping(&r.subrun(x, y)?).is_ok();
    let c3 = top_hist_ok(r, y, k)?;
    let c4 = top_position(0, &r.at(x).stack).unwrap() != top_position(0, &r.at(y).stack).unwrap()
        || (x..y).any(|i| gk.contains(&i));
    let c5 = gk.contains(&(z - 1));
    let c6 = is_nonerasing(&r.subrun(y, z)?, 0);
    Ok(c1 && c2 && c3 && c4 && c5 && c6)
}

/// R_0 = R and R_{i+1} = R_i followed by a transfer of R to the end of R_i.
pub fn iterate_pump(engine: &mut TypeEngine, r: &Run, count: usize) -> Result<Vec<Run>, PumpError> {
    let (cmp, eps) = classify_pumping(r).map_err(|e| PumpError::Precondition(format!("not a pumping run: {}", e)))?;
    let below = engine.settle(|e| {
        let a = e.ctype(r.first())?;
        let b = e.ctype(r.last())?;
        e.ctype_leq(&a, &b)
    })?;
    if !below {
        return Err(PumpError::Precondition("ctype(R(0)) is not below ctype(R(|R|))".into()));
    }
    let x = engine
        .grammar
        .id(&SetId::P(cmp, eps))
        .map_err(|_| PumpError::Precondition(format!("the family lacks the pumping set of R ({:?}, {:?})", cmp, eps)))?;
    let mut out = vec![r.clone()];
    for _ in 0..count {
        let last = out.last().unwrap();
        let s = engine.transfer(x, r, last.last())?;
        let next = last.compose(&s)?;
        next.validate(&engine.spec)?;
        out.push(next);
    }
    Ok(out)
}

/// Final TOP0 positions strictly increase along the sequence.
pub fn strictly_growing(runs: &[Run]) -> bool {
    runs.windows(2).all(|w| {
        let a = top_position(0, &w[0].last().stack).unwrap();
        let b = top_position(0, &w[1].last().stack).unwrap();
        matches!(compare_positions(&a, &b), Ok(PosOrder::Less(_)))
    })
}

// ---- infinite branching ----

/// Every state has only ε or only non-ε incoming transitions.
pub fn check_normalized(spec: &CpsSpec) -> Result<(), PumpError> {
    for (q, name) in spec.states.iter().enumerate() {
        let labels: BTreeSet<bool> =
            spec.transitions.iter().filter(|t| t.to as usize == q).map(|t| t.label.is_none()).collect();
        if labels.len() > 1 {
            return Err(PumpError::NotNormalized(name.clone()));
        }
    }
    Ok(())
}

/// First (x, y): equal ctypes at x and y, R[x..y] strictly growing and
/// silent, R[y..] non-erasing on TOP0 and ending with a letter.
pub fn inf_branch_witness(engine: &mut TypeEngine, r: &Run) -> Result<Option<(usize, usize)>, PumpError> {
    check_normalized(&engine.spec)?;
    let m = r.len();
    if m == 0 || r.steps[m - 1].t.label.is_none() {
        return Ok(None);
    }
    engine.settle(|engine| {
        let mut ct = Vec::with_capacity(m + 1);
        for c in &r.configs {
            ct.push(engine.ctype(c)?);
        }
        for x in 0..m {
            for y in x + 1..m {
                if !engine.ctype_eq(&ct[x], &ct[y])? {
                    continue;
                }
                let p = r.subrun(x, y)?;
                if classify_pumping(&p) != Ok((Cmp::Lt, Eps::E)) {
                    continue;
                }
                if is_nonerasing(&r.subrun(y, m)?, 0) {
                    return Ok(Some((x, y)));
                }
            }
        }
        Ok(None)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn constants_small() {
        let k = seq_constants(1, 2u32, 2).unwrap();
        let v = |b: &Big| b.to_biguint().unwrap();
        assert_eq!(v(&k.big_m[1]), 4u32.into());
        assert_eq!(v(&k.big_m[2]), 16u32.into());
        assert_eq!(v(&k.big_m_prime[1]), 2u32.into());
        assert_eq!(v(&k.big_m_prime[2]), 4u32.into());
        assert_eq!(v(&k.big_n_prime[1]), 8u32.into());
        assert_eq!(v(&k.big_n_prime[2]), 1024u32.into());
        assert_eq!(v(&k.big_n[1]), 16u32.into());
        assert_eq!(v(&k.big_s[1]), 48u32.into());
        assert_eq!(v(&k.c_s), 24u32.into());
        assert!(seq_constants(0, 1u32, 1).is_err());
    }

    #[test]
    fn example_increasing() {
        let (e, h) = find_increasing_subseq(&[0, 1, 1], &set(&[1]), 1).unwrap().unwrap();
        assert_eq!(e, 2);
        assert_eq!(h, vec![0, 1]);
        assert!(verify_increasing(&[0, 1, 1], &set(&[1]), 1, e, &h));
    }

    #[test]
    fn example_window() {
        let a = [1, 2, 2, 1, 2];
        let w = find_window(&a, &set(&[0, 1, 3]), 1).unwrap().unwrap();
        assert!(verify_window(&a, &set(&[0, 1, 3]), 1, &w));
        assert!(find_window(&a, &set(&[4]), 1).is_err());
    }
}
