//! Line-oriented system files and op scripts.
//!
//! ```text
//! level 2
//! input a b
//! states p q
//! initial p
//! stack-symbols bot A      # first symbol is the bottom
//! trans p bot a q push1 A 1
//! trans q A eps p pop1
//! rank a 2
//! ```

use std::collections::HashSet;

use thiserror::Error;

use crate::machine::{CpsSpec, Label, Selector, Transition};
use crate::stack_core::{Op, Symbol};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

fn perr(line: usize, col: usize, m: impl Into<String>) -> ParseError {
    ParseError { line, col, message: m.into() }
}

/// Words of a line with their 1-based columns, comments stripped.
fn words(line: &str) -> Vec<(usize, &str)> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in body.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &body[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &body[s..]));
    }
    out.into_iter().map(|(c, w)| (body[..c].chars().count() + 1, w)).collect()
}

/// Parse an op from its words: `push1 A 1`, `push2`, `pop1`, `col2`.
fn parse_op(ws: &[(usize, &str)], line: usize, level: u8, sym: &dyn Fn(&str) -> Option<Symbol>) -> Result<(Op, usize), ParseError> {
    let (c, w) = *ws.first().ok_or_else(|| perr(line, 0, "missing operation"))?;
    let lvl = |s: &str, c: usize| -> Result<u8, ParseError> {
        let k: u8 = s.parse().map_err(|_| perr(line, c, format!("bad level '{}'", s)))?;
        if k == 0 || k > level {
            return Err(perr(line, c, format!("level {} outside 1..{}", k, level)));
        }
        Ok(k)
    };
    if w == "push1" {
        let (c1, a) = *ws.get(1).ok_or_else(|| perr(line, c, "push1 needs a symbol"))?;
        let (c2, k) = *ws.get(2).ok_or_else(|| perr(line, c, "push1 needs a link level"))?;
        let a = sym(a).ok_or_else(|| perr(line, c1, format!("undeclared symbol '{}'", a)))?;
        return Ok((Op::Push1(a, lvl(k, c2)?), 3));
    }
    for (p, mk) in [("push", Op::Push as fn(u8) -> Op), ("pop", Op::Pop), ("col", Op::Col)] {
        if let Some(rest) = w.strip_prefix(p) {
            if rest.is_empty() {
                continue;
            }
            let k = lvl(rest, c)?;
            if p == "push" && k < 2 {
                return Err(perr(line, c, "use push1 <sym> <k> for level 1"));
            }
            return Ok((mk(k), 1));
        }
    }
    Err(perr(line, c, format!("unknown operation '{}'", w)))
}

pub fn parse_cps(text: &str) -> Result<CpsSpec, ParseError> {
    let mut level: Option<u8> = None;
    let mut letters: Option<Vec<String>> = None;
    let mut states: Option<Vec<String>> = None;
    let mut initial: Option<(usize, usize, String)> = None;
    let mut symbols: Option<Vec<String>> = None;
    let mut trans_lines: Vec<(usize, Vec<(usize, String)>)> = Vec::new();
    let mut rank_lines: Vec<(usize, Vec<(usize, String)>)> = Vec::new();

    let decl_list = |ws: &[(usize, &str)], line: usize| -> Result<Vec<String>, ParseError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &(c, w) in &ws[1..] {
            if !seen.insert(w) {
                return Err(perr(line, c, format!("duplicate identifier '{}'", w)));
            }
            out.push(w.to_string());
        }
        Ok(out)
    };

    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let ws = words(raw);
        let Some(&(c0, head)) = ws.first() else { continue };
        let dup = |what: &str| perr(line, c0, format!("duplicate '{}' declaration", what));
        match head {
            "level" => {
                if level.is_some() {
                    return Err(dup("level"));
                }
                let (c, v) = *ws.get(1).ok_or_else(|| perr(line, c0, "level needs a number"))?;
                let n: u8 = v.parse().map_err(|_| perr(line, c, "bad level"))?;
                if n == 0 {
                    return Err(perr(line, c, "level must be at least 1"));
                }
                level = Some(n);
            }
            "input" => {
                if letters.is_some() {
                    return Err(dup("input"));
                }
                let l = decl_list(&ws, line)?;
                if let Some(&(c, _)) = ws.iter().skip(1).find(|(_, w)| *w == "eps") {
                    return Err(perr(line, c, "'eps' is reserved"));
                }
                letters = Some(l);
            }
            "states" => {
                if states.is_some() {
                    return Err(dup("states"));
                }
                states = Some(decl_list(&ws, line)?);
            }
            "stack-symbols" => {
                if symbols.is_some() {
                    return Err(dup("stack-symbols"));
                }
                let s = decl_list(&ws, line)?;
                if s.is_empty() {
                    return Err(perr(line, c0, "need at least the bottom symbol"));
                }
                symbols = Some(s);
            }
            "initial" => {
                if initial.is_some() {
                    return Err(dup("initial"));
                }
                let (c, v) = *ws.get(1).ok_or_else(|| perr(line, c0, "initial needs a state"))?;
                initial = Some((line, c, v.to_string()));
            }
            "trans" => trans_lines.push((line, ws.iter().map(|&(c, w)| (c, w.to_string())).collect())),
            "rank" => rank_lines.push((line, ws.iter().map(|&(c, w)| (c, w.to_string())).collect())),
            other => return Err(perr(line, c0, format!("unknown directive '{}'", other))),
        }
    }
    let level = level.ok_or_else(|| perr(1, 1, "missing 'level'"))?;
    let letters = letters.unwrap_or_default();
    let states = states.ok_or_else(|| perr(1, 1, "missing 'states'"))?;
    let symbols = symbols.ok_or_else(|| perr(1, 1, "missing 'stack-symbols'"))?;
    let (il, ic, iname) = initial.ok_or_else(|| perr(1, 1, "missing 'initial'"))?;
    let state = |w: &str| states.iter().position(|s| s == w).map(|i| i as u32);
    let sym = |w: &str| symbols.iter().position(|s| s == w).map(|i| Symbol(i as u16));
    let initial = state(&iname).ok_or_else(|| perr(il, ic, format!("undeclared state '{}'", iname)))?;

    let mut transitions = Vec::new();
    for (line, ws) in &trans_lines {
        let line = *line;
        let w: Vec<(usize, &str)> = ws.iter().map(|(c, s)| (*c, s.as_str())).collect();
        if w.len() < 6 {
            return Err(perr(line, w[0].0, "trans needs: <q> <sym> <label|eps> <q'> <op>"));
        }
        let from = state(w[1].1).ok_or_else(|| perr(line, w[1].0, format!("undeclared state '{}'", w[1].1)))?;
        let top = sym(w[2].1).ok_or_else(|| perr(line, w[2].0, format!("undeclared symbol '{}'", w[2].1)))?;
        let label: Label = if w[3].1 == "eps" {
            None
        } else {
            Some(
                letters
                    .iter()
                    .position(|l| l == w[3].1)
                    .ok_or_else(|| perr(line, w[3].0, format!("undeclared letter '{}'", w[3].1)))? as u32,
            )
        };
        let to = state(w[4].1).ok_or_else(|| perr(line, w[4].0, format!("undeclared state '{}'", w[4].1)))?;
        let (op, used) = parse_op(&w[5..], line, level, &sym)?;
        if w.len() > 5 + used {
            return Err(perr(line, w[5 + used].0, "trailing input"));
        }
        transitions.push(Transition { from, top, label, to, op });
    }
    let mut ranks = Vec::new();
    let mut ranked = HashSet::new();
    for (line, ws) in &rank_lines {
        if ws.len() != 3 {
            return Err(perr(*line, ws[0].0, "rank needs: <letter> <arity>"));
        }
        let l = letters
            .iter()
            .position(|l| *l == ws[1].1)
            .ok_or_else(|| perr(*line, ws[1].0, format!("undeclared letter '{}'", ws[1].1)))? as u32;
        if !ranked.insert(l) {
            return Err(perr(*line, ws[1].0, "duplicate rank"));
        }
        let r: u32 = ws[2].1.parse().map_err(|_| perr(*line, ws[2].0, "bad arity"))?;
        ranks.push((l, r));
    }
    Ok(CpsSpec { level, letters, states, initial, symbols, transitions, ranks })
}

pub fn print_cps(spec: &CpsSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("level {}\n", spec.level));
    if !spec.letters.is_empty() {
        out.push_str(&format!("input {}\n", spec.letters.join(" ")));
    }
    out.push_str(&format!("states {}\n", spec.states.join(" ")));
    out.push_str(&format!("initial {}\n", spec.states[spec.initial as usize]));
    out.push_str(&format!("stack-symbols {}\n", spec.symbols.join(" ")));
    for i in 0..spec.transitions.len() {
        out.push_str(&format!("trans {}\n", spec.describe_transition(i)));
    }
    for (l, r) in &spec.ranks {
        out.push_str(&format!("rank {} {}\n", spec.letters[*l as usize], r));
    }
    out
}

fn split_entries(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' | ';' | '\n' if depth <= 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

/// Script entries separated by `,`, `;` or newlines. An entry is `#i`
/// (transition index) or `[label:]op[@pick]` with op like `push2`, `pop1`,
/// `col1`, `push1 A 1` or `push1(A,1)`.
pub fn parse_script(spec: &CpsSpec, text: &str) -> Result<Vec<Selector>, ParseError> {
    let mut out = Vec::new();
    for (ei, entry) in split_entries(text).into_iter().enumerate() {
        let e = entry.trim();
        if e.is_empty() {
            continue;
        }
        let col = ei + 1;
        if let Some(idx) = e.strip_prefix('#') {
            let i: usize = idx.trim().parse().map_err(|_| perr(1, col, format!("bad index '{}'", e)))?;
            if i >= spec.transitions.len() {
                return Err(perr(1, col, format!("no transition #{}", i)));
            }
            out.push(Selector::Index(i));
            continue;
        }
        let (body, pick) = match e.rsplit_once('@') {
            Some((b, p)) => (b, Some(p.trim().parse::<usize>().map_err(|_| perr(1, col, "bad pick"))?)),
            None => (e, None),
        };
        let (label, body) = match body.split_once(':') {
            Some((l, b)) => {
                let l = l.trim();
                let lab: Label = if l == "eps" {
                    None
                } else {
                    Some(spec.letter_id(l).ok_or_else(|| perr(1, col, format!("undeclared letter '{}'", l)))?)
                };
                (Some(lab), b)
            }
            None => (None, body),
        };
        let norm = body.replace(['(', ')'], " ").replace(',', " ");
        let ws = words(&norm);
        let sym = |w: &str| spec.symbol_id(w);
        let (op, used) = parse_op(&ws, 1, spec.level, &sym).map_err(|mut p| {
            p.col = col;
            p
        })?;
        if ws.len() != used {
            return Err(perr(1, col, format!("trailing input in '{}'", e)));
        }
        out.push(Selector::Match { label, op, pick });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let s = parse_cps("level 1\nstates q\ninitial q\nstack-symbols bot\n").unwrap();
        assert_eq!(s.states, vec!["q"]);
        assert!(s.transitions.is_empty());
    }

    #[test]
    fn level_errors() {
        let e = parse_cps("level 2\nstates q\ninitial q\nstack-symbols bot\ntrans q bot eps q pop3\n").unwrap_err();
        assert_eq!(e.line, 5);
        assert_eq!(e.col, 19);
        let e = parse_cps("level 2\nstates q q\ninitial q\nstack-symbols bot\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 10));
        let e = parse_cps("level 2\nstates q\ninitial p\nstack-symbols bot\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn roundtrip_and_scripts() {
        let src = "level 2\ninput a\nstates p q\ninitial p\nstack-symbols bot A\ntrans p bot a q push1 A 1 # c\ntrans q A eps p col1\ntrans p A eps p push2\n";
        let s = parse_cps(src).unwrap();
        assert_eq!(parse_cps(&print_cps(&s)).unwrap(), s);
        let sc = parse_script(&s, "a:push1(A,1), col1; #2, push2@0").unwrap();
        assert_eq!(sc.len(), 4);
        assert_eq!(sc[2], Selector::Index(2));
        assert!(parse_script(&s, "pop3").is_err());
    }
}
