//! Line-oriented explicit model format.
//!
//! ```text
//! # comment
//! states: s0 s1 sink
//! actions: go stay
//! observations: safe bad
//! obsfun:
//! s0 safe
//! s1 safe
//! sink bad
//! init: s0
//! transitions:
//! s0 go s1 0.9
//! s0 go s0 0.1
//! ...
//! bad: bad
//! good: goal        # optional
//! ```
//!
//! List sections accept items after the colon and on the following lines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{Distribution, ModelError, Obs, Pomdp, State};

const SECTIONS: [&str; 8] = [
    "states",
    "actions",
    "observations",
    "obsfun",
    "init",
    "transitions",
    "bad",
    "good",
];

type Line<'a> = (usize, Vec<&'a str>);

fn parse_error(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        message: message.into(),
    }
}

fn split_sections(text: &str) -> Result<HashMap<&'static str, (usize, Vec<Line<'_>>)>, ModelError> {
    let mut sections: HashMap<&'static str, (usize, Vec<Line<'_>>)> = HashMap::new();
    let mut current: Option<&'static str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut rest = content;
        if let Some((head, tail)) = content.split_once(':') {
            let head = head.trim();
            match SECTIONS.iter().find(|&&s| s == head) {
                Some(&name) => {
                    if sections.contains_key(name) {
                        return Err(parse_error(line_no, format!("duplicate section `{name}`")));
                    }
                    sections.insert(name, (line_no, Vec::new()));
                    current = Some(name);
                    rest = tail.trim();
                }
                None => {
                    return Err(parse_error(line_no, format!("malformed section `{head}`")));
                }
            }
        }
        let Some(name) = current else {
            return Err(parse_error(line_no, "content before the first section"));
        };
        if !rest.is_empty() {
            let tokens = rest.split_whitespace().collect();
            sections.get_mut(name).expect("inserted").1.push((line_no, tokens));
        }
    }
    Ok(sections)
}

struct Symbols<'a> {
    names: Vec<String>,
    index: HashMap<&'a str, usize>,
    kind: &'static str,
}

impl<'a> Symbols<'a> {
    fn declare(kind: &'static str, lines: &[Line<'a>]) -> Result<Self, ModelError> {
        let mut names = Vec::new();
        let mut index = HashMap::new();
        for (line, tokens) in lines {
            for &tok in tokens {
                if index.insert(tok, names.len()).is_some() {
                    return Err(parse_error(*line, format!("duplicate {kind} `{tok}`")));
                }
                names.push(tok.to_string());
            }
        }
        if names.is_empty() {
            return Err(parse_error(0, format!("no {kind} declared")));
        }
        Ok(Self { names, index, kind })
    }

    fn resolve(&self, line: usize, name: &str) -> Result<usize, ModelError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownIdentifier {
                line,
                kind: self.kind,
                name: name.to_string(),
            })
    }
}

/// Parses and validates a model file. Indices follow declaration order.
pub fn parse_model(text: &str) -> Result<Pomdp, ModelError> {
    let sections = split_sections(text)?;
    let section = |name: &str| -> Result<&(usize, Vec<Line<'_>>), ModelError> {
        sections
            .get(name)
            .ok_or_else(|| parse_error(0, format!("missing section `{name}`")))
    };
    let states = Symbols::declare("state", &section("states")?.1)?;
    let actions = Symbols::declare("action", &section("actions")?.1)?;
    let observations = Symbols::declare("observation", &section("observations")?.1)?;

    let mut obs_of: Vec<Option<Obs>> = vec![None; states.names.len()];
    for (line, tokens) in &section("obsfun")?.1 {
        let [s, z] = tokens[..] else {
            return Err(parse_error(*line, "expected `state observation`"));
        };
        let s = states.resolve(*line, s)?;
        let z = observations.resolve(*line, z)?;
        if obs_of[s].replace(Obs(z)).is_some() {
            return Err(parse_error(*line, "observation assigned twice"));
        }
    }
    let obs_of = obs_of
        .into_iter()
        .enumerate()
        .map(|(s, z)| z.ok_or_else(|| ModelError::MissingObservation(states.names[s].clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let (init_line, init_lines) = section("init")?;
    let initial = match &init_lines[..] {
        [(line, tokens)] if tokens.len() == 1 => State(states.resolve(*line, tokens[0])?),
        _ => return Err(parse_error(*init_line, "expected `init: <state>`")),
    };

    let mut rows: BTreeMap<(usize, usize), (usize, Distribution)> = BTreeMap::new();
    for (line, tokens) in &section("transitions")?.1 {
        let [s, a, t, p] = tokens[..] else {
            return Err(parse_error(*line, "expected `state action successor probability`"));
        };
        let s = states.resolve(*line, s)?;
        let a = actions.resolve(*line, a)?;
        let t = states.resolve(*line, t)?;
        let p: f64 = p
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite() && (0.0..=1.0).contains(p))
            .ok_or_else(|| parse_error(*line, format!("invalid probability `{p}`")))?;
        rows.entry((s, a))
            .or_insert_with(|| (*line, Vec::new()))
            .1
            .push((State(t), p));
    }
    for (&(s, a), (line, dist)) in &rows {
        let sum: f64 = dist.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::DistributionSum {
                line: *line,
                state: states.names[s].clone(),
                action: actions.names[a].clone(),
                sum,
            });
        }
    }
    let mut transitions = vec![vec![None; actions.names.len()]; states.names.len()];
    for ((s, a), (_, dist)) in rows {
        transitions[s][a] = Some(dist);
    }

    let obs_set = |name: &str| -> Result<Option<BTreeSet<Obs>>, ModelError> {
        sections
            .get(name)
            .map(|(_, lines)| {
                lines
                    .iter()
                    .flat_map(|(line, tokens)| tokens.iter().map(move |t| (*line, *t)))
                    .map(|(line, t)| observations.resolve(line, t).map(Obs))
                    .collect()
            })
            .transpose()
    };
    let bad = obs_set("bad")?.unwrap_or_default();
    let good = obs_set("good")?;

    Pomdp::new(
        states.names,
        actions.names,
        observations.names,
        transitions,
        initial,
        obs_of,
        bad,
        good,
    )
}

/// Canonical text form; `parse_model` reads it back to an identical model.
pub fn serialize_model(m: &Pomdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states: {}", m.state_names().join(" "));
    let _ = writeln!(out, "actions: {}", m.action_names().join(" "));
    let _ = writeln!(out, "observations: {}", m.obs_names().join(" "));
    out.push_str("obsfun:\n");
    for s in m.states() {
        let _ = writeln!(out, "{} {}", m.state_name(s), m.obs_name(m.observation(s)));
    }
    let _ = writeln!(out, "init: {}", m.state_name(m.initial()));
    out.push_str("transitions:\n");
    for s in m.states() {
        for a in m.actions() {
            for &(t, p) in m.transition(s, a).into_iter().flatten() {
                let _ = writeln!(
                    out,
                    "{} {} {} {}",
                    m.state_name(s),
                    m.action_name(a),
                    m.state_name(t),
                    p
                );
            }
        }
    }
    let names = |set: &BTreeSet<Obs>| {
        set.iter()
            .map(|&z| m.obs_name(z))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "bad: {}", names(m.bad_observations()));
    if let Some(good) = m.good_observations() {
        let _ = writeln!(out, "good: {}", names(good));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOOP: &str = "states: s\nactions: a\nobservations: z\nobsfun:\ns z\ninit: s\ntransitions:\ns a s 1.0\nbad:\n";

    #[test]
    fn one_state_self_loop() {
        let m = parse_model(LOOP).unwrap();
        assert_eq!(m.num_states(), 1);
        assert_eq!(m.num_actions(), 1);
        assert!(m.bad_observations().is_empty());
    }

    #[test]
    fn distribution_sum_is_reported_with_line() {
        let text = "states: s t\nactions: a\nobservations: z\nobsfun:\ns z\nt z\ninit: s\ntransitions:\ns a t 0.5\ns a s 0.45\nt a t 1\n";
        let err = parse_model(text).unwrap_err();
        assert!(err.to_string().contains("distribution sum"), "{err}");
        assert!(matches!(err, ModelError::DistributionSum { line: 9, .. }));
    }

    #[test]
    fn unknown_identifier() {
        let text = LOOP.replace("s a s 1.0", "s b s 1.0");
        let err = parse_model(&text).unwrap_err();
        assert_eq!(
            err,
            ModelError::UnknownIdentifier {
                line: 8,
                kind: "action",
                name: "b".into()
            }
        );
    }

    #[test]
    fn malformed_section() {
        let text = format!("{LOOP}horizon: 3\n");
        assert!(matches!(
            parse_model(&text),
            Err(ModelError::Parse { line: 10, .. })
        ));
    }

    #[test]
    fn bad_initial_observation_is_rejected() {
        let text = LOOP.replace("bad:", "bad: z");
        assert!(matches!(
            parse_model(&text),
            Err(ModelError::InitialStateBad(_))
        ));
    }

    #[test]
    fn list_sections_span_lines_and_comments() {
        let text = "# demo\nstates:\n  s  # first\n  t\nactions: a\nobservations: z w\nobsfun:\ns z\nt w\ninit: s\ntransitions:\ns a t 1\nt a t 1\nbad: w\n";
        let m = parse_model(text).unwrap();
        assert_eq!(m.num_states(), 2);
        assert!(m.is_bad_state(State(1)));
    }

    #[test]
    fn serialize_round_trip() {
        let text = "states: s t\nactions: a b\nobservations: z w\nobsfun:\ns z\nt w\ninit: s\ntransitions:\ns a t 0.3\ns a s 0.7\ns b s 1\nt a t 1\nbad: w\n";
        let m = parse_model(text).unwrap();
        let again = parse_model(&serialize_model(&m)).unwrap();
        assert_eq!(m, again);
        assert_eq!(serialize_model(&m), serialize_model(&again));
    }
}
