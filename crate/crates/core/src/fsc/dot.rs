use std::fmt::Write as _;

use super::{Fsc, FscError};
use crate::model::{Action, Obs, Pomdp};

/// GraphViz rendering with one edge per (node, observation), labelled `z / a`.
pub fn export_dot(f: &Fsc, m: &Pomdp) -> String {
    let mut out = String::from("digraph fsc {\n  rankdir=LR;\n  __start [shape=point];\n");
    for n in 0..f.num_nodes() {
        let _ = writeln!(out, "  n{n} [shape=circle];");
    }
    let _ = writeln!(out, "  __start -> n{};", f.initial());
    for n in 0..f.num_nodes() {
        for z in (0..f.num_observations()).map(Obs) {
            let _ = writeln!(
                out,
                "  n{n} -> n{} [label=\"{} / {}\"];",
                f.next(n, z),
                escape(m.obs_name(z)),
                escape(m.action_name(f.action(n, z)))
            );
        }
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(d) = chars.next() {
                out.push(d);
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn node_id(tok: &str) -> Option<usize> {
    tok.strip_prefix('n')?.parse().ok()
}

/// Reads back the output of [`export_dot`].
pub fn parse_dot(text: &str, m: &Pomdp) -> Result<Fsc, FscError> {
    let err = |line: usize, message: &str| FscError::Parse {
        line,
        message: message.to_string(),
    };
    let mut nodes = 0usize;
    let mut initial = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim().trim_end_matches(';').trim();
        if content.is_empty()
            || content.starts_with("digraph")
            || content == "}"
            || content.starts_with("rankdir")
            || content.starts_with("__start [")
        {
            continue;
        }
        let Some((lhs, rhs)) = content.split_once("->") else {
            // node declaration
            let name = content.split_whitespace().next().unwrap_or("");
            let n = node_id(name).ok_or_else(|| err(line, "expected a node `n<i>`"))?;
            nodes = nodes.max(n + 1);
            continue;
        };
        let from = lhs.trim();
        let (to, attrs) = match rhs.split_once('[') {
            Some((to, attrs)) => (to.trim(), Some(attrs)),
            None => (rhs.trim(), None),
        };
        let to = node_id(to).ok_or_else(|| err(line, "expected a target node `n<i>`"))?;
        nodes = nodes.max(to + 1);
        if from == "__start" {
            initial = Some(to);
            continue;
        }
        let from = node_id(from).ok_or_else(|| err(line, "expected a source node `n<i>`"))?;
        nodes = nodes.max(from + 1);
        let label = attrs
            .and_then(|a| a.split_once("label=\""))
            .and_then(|(_, rest)| rest.rsplit_once('"'))
            .map(|(label, _)| unescape(label))
            .ok_or_else(|| err(line, "edge without label"))?;
        let (z, a) = label
            .split_once(" / ")
            .ok_or_else(|| err(line, "label must read `obs / action`"))?;
        let z = m.obs_by_name(z).ok_or_else(|| FscError::UnknownIdentifier {
            line,
            kind: "observation",
            name: z.to_string(),
        })?;
        let a = m.action_by_name(a).ok_or_else(|| FscError::UnknownIdentifier {
            line,
            kind: "action",
            name: a.to_string(),
        })?;
        edges.push((from, z, a, to));
    }
    if nodes == 0 {
        return Err(FscError::Malformed("no nodes".into()));
    }
    let num_obs = m.num_observations();
    let mut actions: Vec<Vec<Action>> = (0..nodes)
        .map(|_| (0..num_obs).map(|z| m.default_action(Obs(z))).collect())
        .collect();
    let mut next: Vec<Vec<usize>> = (0..nodes).map(|n| vec![n; num_obs]).collect();
    for (from, z, a, to) in edges {
        actions[from][z.0] = a;
        next[from][z.0] = to;
    }
    Fsc::from_tables(actions, next, initial.unwrap_or(0))
}
