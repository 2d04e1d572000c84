//! DOT and JSON exports of configuration graphs. JSON stacks go into a
//! shared table, children before parents, so that linked copies are written
//! once and an export reads back to an equal graph.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{Config, ConfigGraph, ContractedEdge, ContractedGraph, CpsSpec, Edge, State};
use crate::stack_core::{Stack, Symbol};

/// One stack table entry; `link` and `items` index earlier entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StackJson {
    Zero { sym: u16, link_level: u8, link: usize },
    Seq { level: u8, items: Vec<usize> },
}

#[derive(Default)]
struct StackTable {
    entries: Vec<StackJson>,
    index: HashMap<Stack, usize>,
}

impl StackTable {
    fn add(&mut self, s: &Stack) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let e = match s.as_zero() {
            Some((a, k, link)) => StackJson::Zero { sym: a.0, link_level: k, link: self.add(link) },
            None => StackJson::Seq { level: s.level(), items: s.items().iter().map(|i| self.add(i)).collect() },
        };
        self.entries.push(e);
        self.index.insert(s.clone(), self.entries.len() - 1);
        self.entries.len() - 1
    }
}

fn read_stacks(entries: &[StackJson]) -> Result<Vec<Stack>, ImportError> {
    let mut out: Vec<Stack> = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let get = |j: usize| -> Result<Stack, ImportError> {
            out.get(j).cloned().ok_or_else(|| ImportError::Shape(format!("stack {} refers forward to {}", i, j)))
        };
        let s = match e {
            StackJson::Zero { sym, link_level, link } => {
                let l = get(*link)?;
                if l.level() != *link_level {
                    return Err(ImportError::Shape(format!("stack {}: link level {} but a level-{} link", i, link_level, l.level())));
                }
                Stack::zero(Symbol(*sym), *link_level, l)
            }
            StackJson::Seq { level, items } => {
                let items = items.iter().map(|&j| get(j)).collect::<Result<Vec<_>, _>>()?;
                if *level == 0 || items.iter().any(|it| it.level() + 1 != *level) {
                    return Err(ImportError::Shape(format!("stack {}: a level-{} stack holds an item of another level", i, level)));
                }
                Stack::seq(*level, items)
            }
        };
        out.push(s);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ImportError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("malformed stack: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeJson {
    pub state: State,
    /// index into the stack table
    pub stack: usize,
    pub depth: usize,
    pub expanded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub stacks: Vec<StackJson>,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<Edge>,
    pub truncated_nodes: bool,
    pub truncated_depth: bool,
    /// present when the ε-contraction was requested
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contracted: Option<ContractedGraph>,
}

pub fn graph_to_json(g: &ConfigGraph, contracted: Option<&ContractedGraph>) -> String {
    let mut table = StackTable::default();
    let nodes = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, c)| NodeJson { state: c.state, stack: table.add(&c.stack), depth: g.depth[i], expanded: g.expanded[i] })
        .collect();
    let gj = GraphJson {
        stacks: table.entries,
        nodes,
        edges: g.edges.clone(),
        truncated_nodes: g.truncated_nodes,
        truncated_depth: g.truncated_depth,
        contracted: contracted.cloned(),
    };
    serde_json::to_string(&gj).expect("graphs serialize")
}

pub fn graph_from_json(text: &str) -> Result<(ConfigGraph, Option<ContractedGraph>), ImportError> {
    let gj: GraphJson = serde_json::from_str(text).map_err(|e| ImportError::Json(e.to_string()))?;
    let stacks = read_stacks(&gj.stacks)?;
    let mut nodes = Vec::with_capacity(gj.nodes.len());
    for n in &gj.nodes {
        let stack = stacks.get(n.stack).cloned().ok_or_else(|| ImportError::Shape(format!("no stack {}", n.stack)))?;
        nodes.push(Config { state: n.state, stack });
    }
    let g = ConfigGraph {
        nodes,
        depth: gj.nodes.iter().map(|n| n.depth).collect(),
        expanded: gj.nodes.iter().map(|n| n.expanded).collect(),
        edges: gj.edges,
        truncated_nodes: gj.truncated_nodes,
        truncated_depth: gj.truncated_depth,
    };
    Ok((g, gj.contracted))
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `state|topsym|sizes`, sizes of the topmost k-stacks from level n down.
pub fn node_label(spec: &CpsSpec, c: &Config) -> String {
    let top = c.top_symbol().map(|a| spec.symbol_name(a)).unwrap_or_else(|| "-".into());
    let sizes: Vec<String> = c.stack.top_sizes().iter().map(|s| s.to_string()).collect();
    format!("{}|{}|{}", spec.state_name(c.state), top, sizes.join(","))
}

fn dot_node(out: &mut String, spec: &CpsSpec, i: usize, c: &Config) {
    out.push_str(&format!("  n{} [label=\"{}\"];\n", i, dot_escape(&node_label(spec, c))));
}

pub fn graph_to_dot(spec: &CpsSpec, g: &ConfigGraph) -> String {
    let mut out = String::from("digraph configurations {\n");
    for (i, c) in g.nodes.iter().enumerate() {
        dot_node(&mut out, spec, i, c);
    }
    for e in &g.edges {
        out.push_str(&format!("  n{} -> n{} [label=\"{}\"];\n", e.src, e.dst, dot_escape(&spec.label_name(e.label))));
    }
    out.push_str("}\n");
    out
}

/// The contraction, with node ids of the underlying graph.
pub fn contracted_to_dot(spec: &CpsSpec, g: &ConfigGraph, c: &ContractedGraph) -> String {
    let mut out = String::from("digraph contraction {\n");
    for &i in &c.nodes {
        dot_node(&mut out, spec, i, &g.nodes[i]);
    }
    for ContractedEdge { src, letter, dst, sound } in &c.edges {
        let style = if *sound { "" } else { ", style=dashed" };
        out.push_str(&format!(
            "  n{} -> n{} [label=\"{}\"{}];\n",
            src,
            dst,
            dot_escape(&spec.letters[*letter as usize]),
            style
        ));
    }
    out.push_str("}\n");
    out
}
