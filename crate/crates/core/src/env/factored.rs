//! Sparse factored dynamics learned from transition records.
//!
//! Each next-step factor gets a parent set drawn from the previous-step
//! factors and the action. Edges only cross time slices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{step_with, EnvError, Mdp};
use crate::rng;
use crate::space::ProductSpace;

pub const DEFAULT_CMI_THRESHOLD: f64 = 0.01;

/// A candidate cause of a next-step factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Parent {
    /// Factor axis at the previous step, written `S<j>`.
    Factor(usize),
    /// The action taken at the previous step, written `A`.
    Action,
}

impl fmt::Display for Parent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parent::Factor(j) => write!(f, "S{j}"),
            Parent::Action => write!(f, "A"),
        }
    }
}

impl FromStr for Parent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "A" {
            return Ok(Parent::Action);
        }
        s.strip_prefix('S')
            .and_then(|j| j.parse().ok())
            .map(Parent::Factor)
            .ok_or_else(|| format!("bad parent {s:?}"))
    }
}

impl TryFrom<String> for Parent {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Parent> for String {
    fn from(p: Parent) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub state: Vec<usize>,
    /// `None` for action-free (natural) observations.
    pub action: Option<usize>,
    pub next: Vec<usize>,
}

/// Transition records over a known factored state space.
///
/// The text form is one header line `axes=<c0>,<c1>,... actions=<A>`
/// followed by one tab-separated record per line:
/// `<state tuple>\t<action or ->\t<next tuple>`, tuples comma-separated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionDataset {
    space: ProductSpace,
    n_actions: usize,
    records: Vec<TransitionRecord>,
}

impl TransitionDataset {
    pub fn new(space: ProductSpace, n_actions: usize, records: Vec<TransitionRecord>) -> Result<Self, EnvError> {
        for r in &records {
            if !space.contains(&r.state) || !space.contains(&r.next) {
                return Err(EnvError::OutOfRange(format!("record {:?} -> {:?}", r.state, r.next)));
            }
            if r.action.is_some_and(|a| a >= n_actions) {
                return Err(EnvError::OutOfRange(format!("action {:?}", r.action)));
            }
        }
        Ok(TransitionDataset { space, n_actions, records })
    }

    /// Builds records from flat state indices.
    pub fn from_flat(
        space: ProductSpace,
        n_actions: usize,
        flat: impl IntoIterator<Item = (usize, Option<usize>, usize)>,
    ) -> Result<Self, EnvError> {
        let mut records = Vec::new();
        for (s, a, next) in flat {
            if s >= space.size() || next >= space.size() {
                return Err(EnvError::OutOfRange(format!("state {s} -> {next}")));
            }
            records.push(TransitionRecord { state: space.decode(s), action: a, next: space.decode(next) });
        }
        TransitionDataset::new(space, n_actions, records)
    }

    pub fn space(&self) -> &ProductSpace {
        &self.space
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The same records with every action hidden.
    pub fn without_actions(&self) -> Self {
        let records = self.records.iter().map(|r| TransitionRecord { action: None, ..r.clone() }).collect();
        TransitionDataset { space: self.space.clone(), n_actions: self.n_actions, records }
    }

    pub fn to_text(&self) -> String {
        let join = |t: &[usize]| t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        let mut out = format!("axes={} actions={}\n", join(self.space.axes()), self.n_actions);
        for r in &self.records {
            let action = r.action.map_or_else(|| "-".to_string(), |a| a.to_string());
            out.push_str(&format!("{}\t{}\t{}\n", join(&r.state), action, join(&r.next)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EnvError> {
        let err = |line: usize, reason: &str| EnvError::Parse { line, reason: reason.to_string() };
        let tuple = |line: usize, s: &str| -> Result<Vec<usize>, EnvError> {
            s.split(',').map(|v| v.trim().parse().map_err(|_| err(line, "bad tuple entry"))).collect()
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let mut axes = None;
        let mut actions = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("axes", v)) => axes = Some(tuple(1, v)?),
                Some(("actions", v)) => actions = Some(v.parse().map_err(|_| err(1, "bad action count"))?),
                _ => return Err(err(1, "unknown header field")),
            }
        }
        let space = ProductSpace::new(axes.ok_or_else(|| err(1, "missing axes"))?)?;
        let n_actions = actions.ok_or_else(|| err(1, "missing actions"))?;
        let mut records = Vec::new();
        for (line, l) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let parts: Vec<&str> = l.split('\t').collect();
            let [state, action, next] = parts[..] else {
                return Err(err(line, "expected three tab-separated fields"));
            };
            let action = match action {
                "-" => None,
                a => Some(a.parse().map_err(|_| err(line, "bad action"))?),
            };
            records.push(TransitionRecord { state: tuple(line, state)?, action, next: tuple(line, next)? });
        }
        TransitionDataset::new(space, n_actions, records)
    }
}

/// Per-factor parent sets and add-1 smoothed conditional tables.
///
/// `tables[j]` is row-major over the values of `parents[j]` (in order), then
/// the next value of factor `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FactoredTransition {
    pub(crate) axes: Vec<usize>,
    pub(crate) n_actions: usize,
    pub(crate) per_factor_parents: Vec<Vec<Parent>>,
    pub(crate) per_factor_tables: Vec<Vec<f64>>,
}

impl FactoredTransition {
    pub fn parents(&self) -> &[Vec<Parent>] {
        &self.per_factor_parents
    }

    pub fn table(&self, factor: usize) -> &[f64] {
        &self.per_factor_tables[factor]
    }

    fn card(&self, p: Parent) -> usize {
        match p {
            Parent::Factor(i) => self.axes[i],
            Parent::Action => self.n_actions,
        }
    }

    /// `P(S'_j = · | parents)` for one factor.
    pub fn conditional(&self, factor: usize, state: &[usize], action: Option<usize>) -> Result<&[f64], EnvError> {
        let mut row = 0;
        for &p in &self.per_factor_parents[factor] {
            let v = match p {
                Parent::Factor(i) => state[i],
                Parent::Action => action.ok_or_else(|| EnvError::OutOfRange("missing action".into()))?,
            };
            row = row * self.card(p) + v;
        }
        let c = self.axes[factor];
        Ok(&self.per_factor_tables[factor][row * c..(row + 1) * c])
    }

    /// The full next-state distribution as the product of per-factor
    /// conditionals, indexed like the state space.
    pub fn transition_row(&self, state: &[usize], action: Option<usize>) -> Result<Vec<f64>, EnvError> {
        let space = ProductSpace::new(self.axes.clone())?;
        if !space.contains(state) {
            return Err(EnvError::OutOfRange(format!("state {state:?}")));
        }
        if action.is_some_and(|a| a >= self.n_actions) {
            return Err(EnvError::OutOfRange(format!("action {action:?}")));
        }
        let conditionals: Vec<&[f64]> =
            (0..self.axes.len()).map(|j| self.conditional(j, state, action)).collect::<Result<_, _>>()?;
        Ok(space.iter().map(|next| next.iter().enumerate().map(|(j, &v)| conditionals[j][v]).product()).collect())
    }
}

struct Counter<'a> {
    data: &'a TransitionDataset,
}

impl Counter<'_> {
    fn card(&self, p: Parent) -> usize {
        match p {
            Parent::Factor(i) => self.data.space.axes()[i],
            Parent::Action => self.data.n_actions,
        }
    }

    fn value(r: &TransitionRecord, p: Parent) -> usize {
        match p {
            Parent::Factor(i) => r.state[i],
            Parent::Action => r.action.expect("action candidates require actions on every record"),
        }
    }

    fn config(&self, r: &TransitionRecord, set: &[Parent]) -> usize {
        set.iter().fold(0, |acc, &p| acc * self.card(p) + Self::value(r, p))
    }

    /// Plug-in `I(S'_target; candidate | set)` in nats.
    fn cmi(&self, target: usize, set: &[Parent], candidate: Parent) -> f64 {
        let nc = self.card(candidate);
        let nx = self.data.space.axes()[target];
        let np: usize = set.iter().map(|&p| self.card(p)).product();
        let mut joint = vec![0u64; np * nc * nx];
        for r in &self.data.records {
            let idx = (self.config(r, set) * nc + Self::value(r, candidate)) * nx + r.next[target];
            joint[idx] += 1;
        }
        let total = self.data.records.len() as f64;
        let mut cmi = 0.0;
        for p in 0..np {
            let block = &joint[p * nc * nx..(p + 1) * nc * nx];
            let n_p: u64 = block.iter().sum();
            if n_p == 0 {
                continue;
            }
            for c in 0..nc {
                let n_pc: u64 = block[c * nx..(c + 1) * nx].iter().sum();
                for x in 0..nx {
                    let n_pcx = block[c * nx + x];
                    if n_pcx == 0 {
                        continue;
                    }
                    let n_px: u64 = (0..nc).map(|c2| block[c2 * nx + x]).sum();
                    cmi += n_pcx as f64 / total * ((n_pcx * n_p) as f64 / (n_pc * n_px) as f64).ln();
                }
            }
        }
        cmi.max(0.0)
    }

    fn table(&self, target: usize, parents: &[Parent]) -> Vec<f64> {
        let nx = self.data.space.axes()[target];
        let np: usize = parents.iter().map(|&p| self.card(p)).product();
        let mut counts = vec![1.0; np * nx];
        for r in &self.data.records {
            counts[self.config(r, parents) * nx + r.next[target]] += 1.0;
        }
        for row in counts.chunks_mut(nx) {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
        counts
    }
}

/// Greedy parent selection by conditional mutual information.
///
/// For each next-step factor, repeatedly adds the candidate with the largest
/// CMI given the parents chosen so far, while that CMI exceeds `threshold`.
/// The action is a candidate only when every record carries one. Parent
/// lists come back sorted (factors ascending, then the action).
pub fn learn_factored_dynamics(data: &TransitionDataset, threshold: f64) -> Result<FactoredTransition, EnvError> {
    if data.is_empty() {
        return Err(EnvError::Empty);
    }
    let counter = Counter { data };
    let n = data.space.rank();
    let mut candidates: Vec<Parent> = (0..n).map(Parent::Factor).collect();
    if data.records.iter().all(|r| r.action.is_some()) {
        candidates.push(Parent::Action);
    }

    let mut per_factor_parents = Vec::with_capacity(n);
    let mut per_factor_tables = Vec::with_capacity(n);
    for target in 0..n {
        let mut chosen: Vec<Parent> = Vec::new();
        loop {
            let best = candidates
                .iter()
                .filter(|c| !chosen.contains(c))
                .map(|&c| (c, counter.cmi(target, &chosen, c)))
                .fold(None, |best: Option<(Parent, f64)>, (c, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((c, v)),
                });
            match best {
                Some((c, v)) if v > threshold => chosen.push(c),
                _ => break,
            }
        }
        chosen.sort();
        per_factor_tables.push(counter.table(target, &chosen));
        per_factor_parents.push(chosen);
    }
    Ok(FactoredTransition {
        axes: data.space.axes().to_vec(),
        n_actions: data.n_actions,
        per_factor_parents,
        per_factor_tables,
    })
}

/// `n` transitions under uniformly random actions, restarting from the
/// initial distribution every `horizon` steps or at a terminal state.
pub fn random_action_transitions(mdp: &Mdp, n: usize, horizon: usize, seed: u64) -> Result<TransitionDataset, EnvError> {
    if horizon == 0 {
        return Err(EnvError::OutOfRange("horizon 0".into()));
    }
    let mut r = rng::seeded(seed);
    let mut flat = Vec::with_capacity(n);
    let mut s = mdp.sample_initial(&mut r);
    let mut t = 0;
    while flat.len() < n {
        if t == horizon || mdp.is_terminal(s) {
            s = mdp.sample_initial(&mut r);
            t = 0;
        }
        let a = rng::below(&mut r, mdp.n_actions());
        let (next, _) = step_with(mdp, s, a, &mut r)?;
        flat.push((s, Some(a), next));
        s = next;
        t += 1;
    }
    TransitionDataset::from_flat(mdp.states().clone(), mdp.n_actions(), flat)
}

/// Parent sets read off an MDP's transition table.
///
/// Candidate `v` (a factor or the action) is a parent of next-step factor
/// `j` when some two state-action pairs that differ only in `v` give `j`
/// different next-step marginals. Lists are sorted like
/// [`learn_factored_dynamics`] output.
pub fn exact_parents(mdp: &Mdp) -> Vec<Vec<Parent>> {
    let space = mdp.states();
    let n = space.rank();
    let na = mdp.n_actions();
    let tuples: Vec<Vec<usize>> = space.iter().collect();
    // marginal[(s * A + a)][j] = distribution of next factor j
    let marginals: Vec<Vec<Vec<f64>>> = (0..mdp.n_states() * na)
        .map(|sa| {
            let row = mdp.transition_row(sa / na, sa % na);
            (0..n)
                .map(|j| {
                    let mut m = vec![0.0; space.axes()[j]];
                    for (next, &p) in row.iter().enumerate() {
                        m[tuples[next][j]] += p;
                    }
                    m
                })
                .collect()
        })
        .collect();
    let differs = |x: usize, y: usize, j: usize| {
        marginals[x][j].iter().zip(&marginals[y][j]).any(|(p, q)| (p - q).abs() > 1e-12)
    };

    (0..n)
        .map(|j| {
            let mut parents = Vec::new();
            for i in 0..n {
                let found = (0..mdp.n_states()).any(|s| {
                    (0..space.axes()[i]).filter(|&v| v > tuples[s][i]).any(|v| {
                        let mut other = tuples[s].clone();
                        other[i] = v;
                        let t = space.encode(&other).expect("in range");
                        (0..na).any(|a| differs(s * na + a, t * na + a, j))
                    })
                });
                if found {
                    parents.push(Parent::Factor(i));
                }
            }
            let action = (0..mdp.n_states()).any(|s| (1..na).any(|a| differs(s * na, s * na + a, j)));
            if action {
                parents.push(Parent::Action);
            }
            parents
        })
        .collect()
}
