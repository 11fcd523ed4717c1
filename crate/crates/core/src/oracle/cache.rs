use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::RwLock;

use super::{ActionOracle, OracleError};
use crate::model::{validate_history, Action, History, Pomdp};

/// An action, or `None` for the don't-care symbol.
pub type Answer = Option<Action>;

/// Answers already obtained from an oracle, keyed by full history.
#[derive(Debug, Default)]
pub struct QueryCache {
    entries: RwLock<HashMap<History, Action>>,
    oracle_calls: RwLock<usize>,
}

impl QueryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, h: &History) -> Option<Action> {
        self.entries.read().expect("cache lock").get(h).copied()
    }

    pub fn insert(&self, h: History, a: Action) {
        self.entries.write().expect("cache lock").insert(h, a);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of oracle invocations made through [`answer_action_query`].
    pub fn oracle_calls(&self) -> usize {
        *self.oracle_calls.read().expect("cache lock")
    }

    /// `obs a obs ... obs -> action` lines, sorted for stable output.
    pub fn to_text(&self, m: &Pomdp) -> String {
        let entries = self.entries.read().expect("cache lock");
        let mut keys: Vec<&History> = entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for h in keys {
            let _ = writeln!(out, "{} -> {}", h.display(m), m.action_name(entries[h]));
        }
        out
    }

    pub fn from_text(text: &str, m: &Pomdp) -> Result<Self, OracleError> {
        let cache = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| OracleError::CacheFormat { line, message };
            let (lhs, rhs) = content
                .split_once("->")
                .ok_or_else(|| err("expected `history -> action`".into()))?;
            let action = m
                .action_by_name(rhs.trim())
                .ok_or_else(|| err(format!("unknown action `{}`", rhs.trim())))?;
            let tokens: Vec<&str> = lhs.split_whitespace().collect();
            if tokens.len() % 2 == 0 {
                return Err(err("history must alternate and end with an observation".into()));
            }
            let mut observations = Vec::new();
            let mut actions = Vec::new();
            for (j, tok) in tokens.iter().enumerate() {
                if j % 2 == 0 {
                    observations.push(
                        m.obs_by_name(tok)
                            .ok_or_else(|| err(format!("unknown observation `{tok}`")))?,
                    );
                } else {
                    actions.push(
                        m.action_by_name(tok)
                            .ok_or_else(|| err(format!("unknown action `{tok}`")))?,
                    );
                }
            }
            let h = History::from_parts(observations, actions).expect("alternation checked");
            cache.insert(h, action);
        }
        Ok(cache)
    }

    pub fn load(path: &Path, m: &Pomdp) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path).map_err(|e| OracleError::Io(e.to_string()))?;
        Self::from_text(&text, m)
    }

    pub fn save(&self, path: &Path, m: &Pomdp) -> Result<(), OracleError> {
        std::fs::write(path, self.to_text(m)).map_err(|e| OracleError::Io(e.to_string()))
    }
}

/// `None` (don't care) if `h` is not realisable or has already seen a bad
/// observation; otherwise the cached or freshly computed oracle answer.
/// Missing answers for prefixes of `h` are computed and cached too, shortest first.
pub fn answer_action_query(
    ao: &dyn ActionOracle,
    cache: &QueryCache,
    m: &Pomdp,
    h: &History,
) -> Result<Answer, OracleError> {
    if h.observations().iter().any(|&z| m.is_bad(z)) || !validate_history(m, h) {
        return Ok(None);
    }
    if let Some(a) = cache.get(h) {
        return Ok(Some(a));
    }
    let known = (0..h.len())
        .rev()
        .find(|&k| cache.get(&h.prefix(k)).is_some())
        .map_or(0, |k| k + 1);
    let mut answer = None;
    for k in known..=h.len() {
        let prefix = h.prefix(k);
        let a = ao.best_action(&prefix)?;
        *cache.oracle_calls.write().expect("cache lock") += 1;
        cache.insert(prefix, a);
        answer = Some(a);
    }
    Ok(answer)
}
