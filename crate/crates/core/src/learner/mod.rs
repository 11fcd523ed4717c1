//! L*-style learning of Mealy controllers from action queries.
//!
//! Rows are indexed by observation sequences. A row's access history
//! interleaves its observations with the oracle's answers; an entry for
//! column `e1 .. en` is the oracle's answers along the access history extended
//! by `e1`, then by its own answer and `e2`, and so on. `None` marks don't-care.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::checker::Counterexample;
use crate::fsc::{Fsc, FscError, Product};
use crate::model::{Action, History, Obs, Pomdp};
use crate::oracle::{answer_action_query, ActionOracle, Answer, OracleError, QueryCache};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fsc(#[from] FscError),
    #[error("table is not closed: row {0} has no equal row among the prefixes")]
    NotClosed(String),
    #[error("counterexample processing: {0}")]
    Internal(String),
}

/// Answers action queries through a cache.
pub struct Teacher<'a> {
    pub m: &'a Pomdp,
    pub ao: &'a dyn ActionOracle,
    pub cache: &'a QueryCache,
}

impl Teacher<'_> {
    pub fn query(&self, h: &History) -> Result<Answer, OracleError> {
        answer_action_query(self.ao, self.cache, self.m, h)
    }

    /// Oracle answers along `access` extended by `column`, x after the first x.
    pub fn fill(
        &self,
        access: Option<&[(Obs, Action)]>,
        column: &[Obs],
    ) -> Result<Vec<Answer>, OracleError> {
        let mut out = Vec::with_capacity(column.len());
        let Some(access) = access else {
            out.resize(column.len(), None);
            return Ok(out);
        };
        let Some((&first, rest)) = column.split_first() else {
            return Ok(out);
        };
        let mut h = if access.is_empty() {
            History::new(first)
        } else {
            History::from_steps(access, first)
        };
        let mut answer = self.query(&h)?;
        out.push(answer);
        for &z in rest {
            match answer {
                Some(a) => {
                    h.push(a, z);
                    answer = self.query(&h)?;
                }
                None => answer = None,
            }
            out.push(answer);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    /// `None` when the access history is not realisable (or already saw bad).
    pub access: Option<Vec<(Obs, Action)>>,
    /// One entry per column, in column order.
    pub cells: Vec<Vec<Answer>>,
}

impl Row {
    fn all_dont_care(&self) -> bool {
        self.cells.iter().flatten().all(Option::is_none)
    }
}

/// Outcome of processing a counterexample.
#[derive(Clone, Debug, PartialEq)]
pub enum CexOutcome {
    /// A distinguishing suffix was added as a column.
    Added {
        suffix: Vec<Obs>,
        path: usize,
        position: usize,
    },
    /// The oracle agrees with the hypothesis along every path.
    NoDisagreement,
}

#[derive(Clone, Debug)]
pub struct ObservationTable {
    num_obs: usize,
    prefixes: Vec<Vec<Obs>>,
    suffixes: Vec<Vec<Obs>>,
    rows: HashMap<Vec<Obs>, Row>,
    /// Rows in insertion order: prefixes and their one-step extensions.
    order: Vec<Vec<Obs>>,
}

impl ObservationTable {
    /// S = {ε}, E = Z (singletons in observation order).
    pub fn new(teacher: &Teacher) -> Result<Self, LearnerError> {
        let num_obs = teacher.m.num_observations();
        let mut t = Self {
            num_obs,
            prefixes: Vec::new(),
            suffixes: (0..num_obs).map(|z| vec![Obs(z)]).collect(),
            rows: HashMap::new(),
            order: Vec::new(),
        };
        t.promote(teacher, Vec::new())?;
        Ok(t)
    }

    pub fn prefixes(&self) -> &[Vec<Obs>] {
        &self.prefixes
    }

    pub fn suffixes(&self) -> &[Vec<Obs>] {
        &self.suffixes
    }

    pub fn row(&self, key: &[Obs]) -> Option<&Row> {
        self.rows.get(key)
    }

    /// Every row key: prefixes and their one-step extensions.
    pub fn row_keys(&self) -> &[Vec<Obs>] {
        &self.order
    }

    pub fn entry(&self, key: &[Obs], column: &[Obs]) -> Option<&[Answer]> {
        let c = self.suffixes.iter().position(|e| e == column)?;
        self.rows.get(key).map(|r| r.cells[c].as_slice())
    }

    fn add_row(&mut self, teacher: &Teacher, key: Vec<Obs>) -> Result<(), LearnerError> {
        if self.rows.contains_key(&key) {
            return Ok(());
        }
        let access = match key.split_last() {
            None => Some(Vec::new()),
            Some((&z, parent)) => {
                let parent = &self.rows[parent];
                match (&parent.access, parent.cells[z.0][0]) {
                    (Some(acc), Some(a)) => {
                        let mut acc = acc.clone();
                        acc.push((z, a));
                        Some(acc)
                    }
                    _ => None,
                }
            }
        };
        let cells = self
            .suffixes
            .iter()
            .map(|e| teacher.fill(access.as_deref(), e))
            .collect::<Result<_, _>>()?;
        self.rows.insert(key.clone(), Row { access, cells });
        self.order.push(key);
        Ok(())
    }

    fn promote(&mut self, teacher: &Teacher, key: Vec<Obs>) -> Result<(), LearnerError> {
        self.add_row(teacher, key.clone())?;
        self.prefixes.push(key.clone());
        for z in 0..self.num_obs {
            let mut ext = key.clone();
            ext.push(Obs(z));
            self.add_row(teacher, ext)?;
        }
        Ok(())
    }

    fn is_prefix(&self, key: &[Obs]) -> bool {
        self.prefixes.iter().any(|p| p == key)
    }

    /// Extensions whose row is not all-x and matches no prefix row, in
    /// promotion order (shortest, then lexicographic).
    fn unclosed(&self) -> Vec<Vec<Obs>> {
        let known: Vec<&Vec<Vec<Answer>>> =
            self.prefixes.iter().map(|p| &self.rows[p].cells).collect();
        let mut open: Vec<Vec<Obs>> = self
            .order
            .iter()
            .filter(|k| !self.is_prefix(k))
            .filter(|k| {
                let row = &self.rows[*k];
                !row.all_dont_care() && !known.contains(&&row.cells)
            })
            .cloned()
            .collect();
        open.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        open
    }

    pub fn is_closed(&self) -> bool {
        self.unclosed().is_empty()
    }

    /// Promotes novel extension rows one at a time until closed.
    pub fn close(&mut self, teacher: &Teacher) -> Result<Vec<Vec<Obs>>, LearnerError> {
        let mut promoted = Vec::new();
        while let Some(key) = self.unclosed().into_iter().next() {
            self.promote(teacher, key.clone())?;
            promoted.push(key);
        }
        Ok(promoted)
    }

    /// Adds a column and fills it for every row.
    pub fn add_suffix(&mut self, teacher: &Teacher, suffix: Vec<Obs>) -> Result<bool, LearnerError> {
        if self.suffixes.contains(&suffix) {
            return Ok(false);
        }
        for key in &self.order {
            let row = self.rows.get_mut(key).expect("ordered rows exist");
            let cells = teacher.fill(row.access.as_deref(), &suffix)?;
            row.cells.push(cells);
        }
        self.suffixes.push(suffix);
        Ok(true)
    }

    /// Nodes are the distinct prefix rows; don't-care actions use the model's
    /// default, and all-x successors loop on the current node.
    pub fn hypothesis(&self, m: &Pomdp) -> Result<Fsc, LearnerError> {
        let mut node_of: HashMap<&Vec<Vec<Answer>>, usize> = HashMap::new();
        let mut reps: Vec<&Vec<Obs>> = Vec::new();
        for p in &self.prefixes {
            let cells = &self.rows[p].cells;
            if !node_of.contains_key(cells) {
                node_of.insert(cells, reps.len());
                reps.push(p);
            }
        }
        let mut actions = Vec::with_capacity(reps.len());
        let mut next = Vec::with_capacity(reps.len());
        for (n, rep) in reps.iter().enumerate() {
            let row = &self.rows[*rep];
            let mut act_row = Vec::with_capacity(self.num_obs);
            let mut next_row = Vec::with_capacity(self.num_obs);
            for z in 0..self.num_obs {
                act_row.push(row.cells[z][0].unwrap_or_else(|| m.default_action(Obs(z))));
                let mut ext = (*rep).clone();
                ext.push(Obs(z));
                let succ = &self.rows[&ext];
                let target = if succ.all_dont_care() {
                    n
                } else {
                    *node_of.get(&succ.cells).ok_or_else(|| {
                        LearnerError::NotClosed(obs_word(m, &ext))
                    })?
                };
                next_row.push(target);
            }
            actions.push(act_row);
            next.push(next_row);
        }
        Ok(Fsc::from_tables(actions, next, 0)?)
    }

    /// Finds the first path on which the oracle disagrees with `hyp` and adds
    /// a distinguishing suffix found by binary search.
    pub fn process_counterexample(
        &mut self,
        teacher: &Teacher,
        cex: &Counterexample,
        product: &Product,
        hyp: &Fsc,
    ) -> Result<CexOutcome, LearnerError> {
        for (pi, path) in cex.paths.iter().enumerate() {
            if let Some((suffix, position)) = self.refine_with_path(teacher, path, product, hyp)? {
                return Ok(CexOutcome::Added {
                    suffix,
                    path: pi,
                    position,
                });
            }
        }
        Ok(CexOutcome::NoDisagreement)
    }

    /// If the oracle disagrees with `hyp` somewhere along the product path,
    /// adds a distinguishing suffix and returns it with the first disagreeing
    /// position. `None` (table untouched) when the path agrees throughout.
    pub fn refine_with_path(
        &mut self,
        teacher: &Teacher,
        path: &[usize],
        product: &Product,
        hyp: &Fsc,
    ) -> Result<Option<(Vec<Obs>, usize)>, LearnerError> {
        let h = path_history(teacher.m, product, hyp, path);
        let Some(pos) = first_disagreement(teacher, &h)? else {
            return Ok(None);
        };
        let word = &h.observations()[..=pos];
        let expected = h.actions()[pos];
        let suffix = self.split_suffix(teacher, hyp, word, expected)?;
        if self.suffixes.contains(&suffix) {
            return Err(LearnerError::Internal(format!(
                "suffix {} is already a column",
                obs_word(teacher.m, &suffix)
            )));
        }
        // keep E suffix-closed so closed tables yield consistent hypotheses
        for start in (0..suffix.len()).rev() {
            self.add_suffix(teacher, suffix[start..].to_vec())?;
        }
        Ok(Some((suffix, pos)))
    }

    /// Binary search for `i` with D(i) disagreeing and D(i+1) agreeing, where
    /// D(i) runs the oracle from the access row of the hypothesis node after
    /// `word[..i]` over `word[i..]`. Returns `word[i+1..]`.
    fn split_suffix(
        &self,
        teacher: &Teacher,
        hyp: &Fsc,
        word: &[Obs],
        hyp_action: Action,
    ) -> Result<Vec<Obs>, LearnerError> {
        let len = word.len();
        let reps = self.node_representatives(hyp);
        let disagrees = |i: usize| -> Result<bool, LearnerError> {
            let node = hyp.node_after(&word[..i]);
            let rep = reps[node].ok_or_else(|| {
                LearnerError::Internal(format!("node n{node} has no access row"))
            })?;
            let access = self.rows[rep].access.as_deref();
            let answers = teacher.fill(access, &word[i..])?;
            Ok(matches!(answers.last(), Some(Some(a)) if *a != hyp_action))
        };
        if len < 2 || !disagrees(0)? || disagrees(len - 1)? {
            return Err(LearnerError::Internal(
                "disagreement does not split between the ends".into(),
            ));
        }
        let (mut lo, mut hi) = (0, len - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if disagrees(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(word[lo + 1..].to_vec())
    }

    /// For each hypothesis node (numbered as in [`Self::hypothesis`]) the first
    /// prefix whose row it is.
    fn node_representatives(&self, hyp: &Fsc) -> Vec<Option<&Vec<Obs>>> {
        let mut reps: Vec<Option<&Vec<Obs>>> = vec![None; hyp.num_nodes()];
        let mut seen: Vec<&Vec<Vec<Answer>>> = Vec::new();
        for p in &self.prefixes {
            let cells = &self.rows[p].cells;
            if !seen.contains(&cells) {
                if let Some(slot) = reps.get_mut(seen.len()) {
                    *slot = Some(p);
                }
                seen.push(cells);
            }
        }
        reps
    }

    /// Cells where running `hyp` over a row's observations followed by the
    /// column does not reproduce a non-x entry.
    pub fn disagreements(&self, hyp: &Fsc) -> Vec<(Vec<Obs>, Vec<Obs>)> {
        let mut out = Vec::new();
        for key in &self.order {
            for (e, cells) in self.suffixes.iter().zip(&self.rows[key].cells) {
                let mut node = hyp.node_after(key);
                for (&z, cell) in e.iter().zip(cells) {
                    if let Some(a) = cell {
                        if hyp.action(node, z) != *a {
                            out.push((key.clone(), e.clone()));
                            break;
                        }
                    }
                    node = hyp.next(node, z);
                }
            }
        }
        out
    }

    /// Aligned text: prefix rows, a rule, then extension rows; all-x
    /// extension rows are omitted.
    pub fn dump(&self, m: &Pomdp) -> String {
        let label = |k: &[Obs]| {
            if k.is_empty() {
                "ε".to_string()
            } else {
                obs_word(m, k)
            }
        };
        let cell = |c: &[Answer]| {
            c.iter()
                .map(|a| a.map_or("x", |a| m.action_name(a)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut lines: Vec<Vec<String>> = Vec::new();
        let mut header = vec![String::new()];
        header.extend(self.suffixes.iter().map(|e| label(e)));
        lines.push(header);
        let ext: Vec<&Vec<Obs>> = self
            .order
            .iter()
            .filter(|k| !self.is_prefix(k) && !self.rows[*k].all_dont_care())
            .collect();
        let keys = self.prefixes.iter().chain(ext.iter().copied());
        for k in keys {
            let mut line = vec![label(k)];
            line.extend(self.rows[k].cells.iter().map(|c| cell(c)));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            let padded: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
            if i == self.prefixes.len() {
                let total: usize = widths.iter().sum::<usize>() + 3 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}

fn obs_word(m: &Pomdp, word: &[Obs]) -> String {
    word.iter()
        .map(|&z| m.obs_name(z))
        .collect::<Vec<_>>()
        .join(".")
}

/// The history of a product path: its observations and the hypothesis' actions.
pub fn path_history(m: &Pomdp, product: &Product, hyp: &Fsc, path: &[usize]) -> History {
    let mut observations = Vec::with_capacity(path.len());
    let mut actions = Vec::with_capacity(path.len());
    for &i in path {
        let (s, n) = product.pairs[i];
        let z = m.observation(s);
        observations.push(z);
        actions.push(hyp.action(n, z));
    }
    actions.pop();
    History::from_parts(observations, actions).expect("one action per step")
}

/// First position where the oracle's answer (not x) differs from the action
/// the history plays there.
fn first_disagreement(teacher: &Teacher, h: &History) -> Result<Option<usize>, OracleError> {
    for j in 0..h.len() {
        if let Some(a) = teacher.query(&h.prefix(j))? {
            if a != h.actions()[j] {
                return Ok(Some(j));
            }
        }
    }
    Ok(None)
}
