//! Finite structural causal models.
//!
//! A model has `n` causal factors `S_j`, `m` confounders `C_k`, one noise
//! variable per factor and a noisy emission producing a single observation
//! `X`. Each factor is a deterministic table of its parents and its own noise:
//!
//! ```text
//! S_j = h_j(PA_j, N_j)        PA_j ⊆ {S \ S_j, C}
//! X   = g(S, N_X)
//! ```
//!
//! Every domain is finite, so the joint distribution can be computed exactly
//! by enumerating confounder and noise values ([`exact_joint`]).

mod format;
pub mod generate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::joint::{JointError, JointTable};
use crate::rng::{self, SimRng};
use crate::space::{decode_unchecked, encode_unchecked, FiniteDomain};

pub use format::ScmDocumentError;

/// Upper bound on enumerated atoms (confounder values × noise values).
pub const MAX_ENUMERATED_ATOMS: u128 = 10_000_000;

/// Noise probabilities must sum to one within this tolerance.
pub const NOISE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScmError {
    #[error("factor S{0} transitively depends on itself")]
    CyclicGraph(usize),
    #[error("illegal parent {parent} for S{target}: {reason}")]
    IllegalParent {
        target: usize,
        parent: VariableId,
        reason: &'static str,
    },
    #[error("incomplete table: {0}")]
    IncompleteTable(String),
    #[error("noise for {0} is not a probability vector")]
    UnnormalizedNoise(String),
    #[error("assignment {position} targets {target}; expected exactly one assignment per factor, in factor order")]
    AssignmentMismatch { position: usize, target: VariableId },
    #[error("emission is not injective at zero observation noise: {0:?} and {1:?} collide")]
    EmissionNotInjective(Vec<usize>, Vec<usize>),
    #[error("{0} atoms exceed the enumeration bound")]
    TooLarge(u128),
    #[error("{0} is not a factor; only factors can be intervened on")]
    NotAFactor(VariableId),
    #[error("value {value} is outside the domain of {variable}")]
    OutOfDomain { variable: VariableId, value: usize },
    #[error("{0} is not a variable of this model")]
    UnknownVariable(VariableId),
    #[error(transparent)]
    Joint(#[from] JointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    Factor,
    Confounder,
    Observable,
    /// A coordinate of a learned representation. Codes never appear inside an
    /// [`Scm`]; they label code axes in factor/code joint tables.
    Code,
}

impl VarKind {
    fn prefix(self) -> char {
        match self {
            VarKind::Factor => 'S',
            VarKind::Confounder => 'C',
            VarKind::Observable => 'X',
            VarKind::Code => 'Z',
        }
    }
}

/// A variable, written `S0`, `C1`, `X0` or `Z2` in text formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariableId {
    pub kind: VarKind,
    pub index: usize,
}

impl VariableId {
    pub const fn factor(index: usize) -> Self {
        Self { kind: VarKind::Factor, index }
    }

    pub const fn confounder(index: usize) -> Self {
        Self { kind: VarKind::Confounder, index }
    }

    pub const fn observable() -> Self {
        Self { kind: VarKind::Observable, index: 0 }
    }

    pub const fn code(index: usize) -> Self {
        Self { kind: VarKind::Code, index }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse variable name {0:?}")]
pub struct ParseVariableError(String);

impl FromStr for VariableId {
    type Err = ParseVariableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('S') => VarKind::Factor,
            Some('C') => VarKind::Confounder,
            Some('X') => VarKind::Observable,
            Some('Z') => VarKind::Code,
            _ => return Err(ParseVariableError(s.to_string())),
        };
        let index = chars
            .as_str()
            .parse()
            .map_err(|_| ParseVariableError(s.to_string()))?;
        Ok(Self { kind, index })
    }
}

impl TryFrom<String> for VariableId {
    type Error = ParseVariableError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<VariableId> for String {
    fn from(v: VariableId) -> String {
        v.to_string()
    }
}

/// A distribution over `0..probabilities.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseSpec {
    pub probabilities: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(probabilities: Vec<f64>) -> Self {
        Self { probabilities }
    }

    pub fn point_mass() -> Self {
        Self::new(vec![1.0])
    }

    pub fn uniform(cardinality: usize) -> Self {
        Self::new(vec![1.0 / cardinality as f64; cardinality])
    }

    pub fn domain(&self) -> usize {
        self.probabilities.len()
    }

    fn is_valid(&self) -> bool {
        !self.probabilities.is_empty()
            && self.probabilities.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (self.probabilities.iter().sum::<f64>() - 1.0).abs() <= NOISE_TOLERANCE
    }
}

/// `S_target = table[(parent values..., noise)]`, row-major with noise last.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub target: VariableId,
    pub parents: Vec<VariableId>,
    pub table: Vec<usize>,
}

impl Assignment {
    /// A constant assignment with no parents.
    pub fn constant(target: usize, value: usize, noise_domain: usize) -> Self {
        Self {
            target: VariableId::factor(target),
            parents: Vec::new(),
            table: vec![value; noise_domain],
        }
    }
}

/// Emission `X = g(S, N_X)`, row-major over (factor tuple, noise).
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub domain: FiniteDomain,
    pub noise: NoiseSpec,
    pub table: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    pub factor_domains: Vec<FiniteDomain>,
    pub confounder_domains: Vec<FiniteDomain>,
    pub confounder_dists: Vec<NoiseSpec>,
    pub factor_noises: Vec<NoiseSpec>,
    /// `assignments[j]` targets factor `j`.
    pub assignments: Vec<Assignment>,
    pub emission: Emission,
}

/// Graph induced by the parent sets. The observable's parents are all factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    pub nodes: Vec<VariableId>,
    pub edges: BTreeSet<(VariableId, VariableId)>,
    /// Factor indices in evaluation order (ascending index among ready nodes).
    pub factor_order: Vec<usize>,
}

impl Dag {
    pub fn parents_of(&self, v: VariableId) -> impl Iterator<Item = VariableId> + '_ {
        self.edges.iter().filter(move |(_, t)| *t == v).map(|(p, _)| *p)
    }

    pub fn has_edge(&self, from: VariableId, to: VariableId) -> bool {
        self.edges.contains(&(from, to))
    }
}

/// One draw from a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub factors: Vec<usize>,
    pub confounders: Vec<usize>,
    pub observation: usize,
}

impl Scm {
    pub fn n_factors(&self) -> usize {
        self.factor_domains.len()
    }

    pub fn n_confounders(&self) -> usize {
        self.confounder_domains.len()
    }

    pub fn factor_cardinalities(&self) -> Vec<usize> {
        self.factor_domains.iter().map(|d| d.cardinality()).collect()
    }

    /// Cardinality of any variable of the model.
    pub fn cardinality(&self, v: VariableId) -> Result<usize, ScmError> {
        let d = match v.kind {
            VarKind::Factor => self.factor_domains.get(v.index),
            VarKind::Confounder => self.confounder_domains.get(v.index),
            VarKind::Observable if v.index == 0 => Some(&self.emission.domain),
            _ => None,
        };
        d.map(|d| d.cardinality()).ok_or(ScmError::UnknownVariable(v))
    }

    /// Identity emission `X = encode(S)` with no observation noise.
    pub fn identity_emission(factor_cards: &[usize]) -> Emission {
        let size: usize = factor_cards.iter().product();
        Emission {
            domain: FiniteDomain::new(size).expect("non-empty factor space"),
            noise: NoiseSpec::point_mass(),
            table: (0..size).collect(),
        }
    }

    /// Checks every structural invariant and returns the induced graph.
    pub fn validate(&self) -> Result<Dag, ScmError> {
        let n = self.n_factors();
        let m = self.n_confounders();
        if self.confounder_dists.len() != m {
            return Err(ScmError::IncompleteTable(format!(
                "{} confounder distributions for {m} confounders",
                self.confounder_dists.len()
            )));
        }
        for (k, (dom, dist)) in self.confounder_domains.iter().zip(&self.confounder_dists).enumerate() {
            if !dist.is_valid() || dist.domain() != dom.cardinality() {
                return Err(ScmError::UnnormalizedNoise(VariableId::confounder(k).to_string()));
            }
        }
        if self.factor_noises.len() != n {
            return Err(ScmError::IncompleteTable(format!(
                "{} factor noises for {n} factors",
                self.factor_noises.len()
            )));
        }
        for (j, noise) in self.factor_noises.iter().enumerate() {
            if !noise.is_valid() {
                return Err(ScmError::UnnormalizedNoise(format!("N_S{j}")));
            }
        }
        if !self.emission.noise.is_valid() {
            return Err(ScmError::UnnormalizedNoise("N_X".into()));
        }
        if self.assignments.len() != n {
            return Err(ScmError::IncompleteTable(format!(
                "{} assignments for {n} factors",
                self.assignments.len()
            )));
        }

        for (j, a) in self.assignments.iter().enumerate() {
            if a.target != VariableId::factor(j) {
                return Err(ScmError::AssignmentMismatch { position: j, target: a.target });
            }
            let mut seen = BTreeSet::new();
            for &p in &a.parents {
                let reason = match p.kind {
                    VarKind::Factor if p.index == j => Some("a factor cannot be its own parent"),
                    VarKind::Factor if p.index >= n => Some("unknown factor"),
                    VarKind::Confounder if p.index >= m => Some("unknown confounder"),
                    VarKind::Observable => Some("observables cannot be parents"),
                    VarKind::Code => Some("codes cannot be parents"),
                    _ => None,
                };
                if let Some(reason) = reason {
                    return Err(ScmError::IllegalParent { target: j, parent: p, reason });
                }
                if !seen.insert(p) {
                    return Err(ScmError::IllegalParent { target: j, parent: p, reason: "duplicate parent" });
                }
            }
            let expected = self.parent_cards(a).iter().product::<usize>() * self.factor_noises[j].domain();
            if a.table.len() != expected {
                return Err(ScmError::IncompleteTable(format!(
                    "S{j} table has {} rows, expected {expected}",
                    a.table.len()
                )));
            }
            let card = self.factor_domains[j].cardinality();
            if let Some(v) = a.table.iter().find(|&&v| v >= card) {
                return Err(ScmError::IncompleteTable(format!("S{j} table value {v} outside 0..{card}")));
            }
        }

        let factor_cards = self.factor_cardinalities();
        let factor_space: usize = factor_cards.iter().product();
        let noise_card = self.emission.noise.domain();
        if self.emission.table.len() != factor_space * noise_card {
            return Err(ScmError::IncompleteTable(format!(
                "emission has {} rows, expected {}",
                self.emission.table.len(),
                factor_space * noise_card
            )));
        }
        let obs_card = self.emission.domain.cardinality();
        if let Some(v) = self.emission.table.iter().find(|&&v| v >= obs_card) {
            return Err(ScmError::IncompleteTable(format!("emission value {v} outside 0..{obs_card}")));
        }
        let mut preimage: BTreeMap<usize, usize> = BTreeMap::new();
        for s in 0..factor_space {
            let x = self.emission.table[s * noise_card];
            if let Some(&other) = preimage.get(&x) {
                return Err(ScmError::EmissionNotInjective(
                    decode_unchecked(&factor_cards, other),
                    decode_unchecked(&factor_cards, s),
                ));
            }
            preimage.insert(x, s);
        }

        let factor_order = self.topological_order()?;

        let mut nodes: Vec<VariableId> = (0..m).map(VariableId::confounder).collect();
        nodes.extend((0..n).map(VariableId::factor));
        nodes.push(VariableId::observable());
        let mut edges = BTreeSet::new();
        for (j, a) in self.assignments.iter().enumerate() {
            for &p in &a.parents {
                edges.insert((p, VariableId::factor(j)));
            }
            edges.insert((VariableId::factor(j), VariableId::observable()));
        }
        Ok(Dag { nodes, edges, factor_order })
    }

    fn parent_cards(&self, a: &Assignment) -> Vec<usize> {
        a.parents
            .iter()
            .map(|p| match p.kind {
                VarKind::Factor => self.factor_domains[p.index].cardinality(),
                VarKind::Confounder => self.confounder_domains[p.index].cardinality(),
                _ => unreachable!("validated parent kinds"),
            })
            .collect()
    }

    // Kahn's algorithm, always releasing the smallest ready factor index.
    fn topological_order(&self) -> Result<Vec<usize>, ScmError> {
        let n = self.n_factors();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, a) in self.assignments.iter().enumerate() {
            for p in a.parents.iter().filter(|p| p.kind == VarKind::Factor) {
                indegree[j] += 1;
                children[p.index].push(j);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(j) = ready.pop_first() {
            order.push(j);
            for &c in &children[j] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|j| !order.contains(j)).unwrap_or(0);
            return Err(ScmError::CyclicGraph(stuck));
        }
        Ok(order)
    }

    /// Evaluates the factors for given confounder and noise values.
    fn evaluate(&self, order: &[usize], confounders: &[usize], noises: &[usize], out: &mut [usize]) {
        let mut key = Vec::new();
        let mut cards = Vec::new();
        for &j in order {
            let a = &self.assignments[j];
            key.clear();
            cards.clear();
            for p in &a.parents {
                match p.kind {
                    VarKind::Factor => {
                        key.push(out[p.index]);
                        cards.push(self.factor_domains[p.index].cardinality());
                    }
                    _ => {
                        key.push(confounders[p.index]);
                        cards.push(self.confounder_domains[p.index].cardinality());
                    }
                }
            }
            let row = encode_unchecked(&cards, &key);
            out[j] = a.table[row * self.factor_noises[j].domain() + noises[j]];
        }
    }

    fn emit(&self, factors: &[usize], noise: usize) -> usize {
        let s = encode_unchecked(&self.factor_cardinalities(), factors);
        self.emission.table[s * self.emission.noise.domain() + noise]
    }
}

/// Streams seeded samples from a validated model.
///
/// Per sample the generator is consumed in a fixed order: confounders by
/// index, factor noises by index, then the observation noise.
pub struct Sampler<'a> {
    scm: &'a Scm,
    order: Vec<usize>,
    rng: SimRng,
}

impl<'a> Sampler<'a> {
    pub fn new(scm: &'a Scm, seed: u64) -> Result<Self, ScmError> {
        let dag = scm.validate()?;
        Ok(Self { scm, order: dag.factor_order, rng: rng::seeded(seed) })
    }

    pub fn next_sample(&mut self) -> Sample {
        let scm = self.scm;
        let confounders: Vec<usize> = scm
            .confounder_dists
            .iter()
            .map(|d| rng::categorical(&mut self.rng, &d.probabilities))
            .collect();
        let noises: Vec<usize> = scm
            .factor_noises
            .iter()
            .map(|d| rng::categorical(&mut self.rng, &d.probabilities))
            .collect();
        let obs_noise = rng::categorical(&mut self.rng, &scm.emission.noise.probabilities);
        let mut factors = vec![0; scm.n_factors()];
        scm.evaluate(&self.order, &confounders, &noises, &mut factors);
        let observation = scm.emit(&factors, obs_noise);
        Sample { factors, confounders, observation }
    }
}

impl Iterator for Sampler<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        Some(self.next_sample())
    }
}

/// Draws one sample. Identical seeds give identical samples.
pub fn sample_scm(scm: &Scm, seed: u64) -> Result<Sample, ScmError> {
    Ok(Sampler::new(scm, seed)?.next_sample())
}

/// Exact joint distribution over `include`, by exhaustive enumeration of
/// confounder and noise values.
pub fn exact_joint(scm: &Scm, include: &[VariableId]) -> Result<JointTable, ScmError> {
    let dag = scm.validate()?;
    let cards = include
        .iter()
        .map(|&v| scm.cardinality(v))
        .collect::<Result<Vec<_>, _>>()?;
    let needs_obs = include.iter().any(|v| v.kind == VarKind::Observable);

    // enumeration axes: confounders, factor noises, then (optionally) N_X
    let mut dists: Vec<&[f64]> = scm.confounder_dists.iter().map(|d| d.probabilities.as_slice()).collect();
    dists.extend(scm.factor_noises.iter().map(|d| d.probabilities.as_slice()));
    if needs_obs {
        dists.push(&scm.emission.noise.probabilities);
    }
    let atoms: u128 = dists.iter().map(|d| d.len() as u128).product();
    if atoms > MAX_ENUMERATED_ATOMS {
        return Err(ScmError::TooLarge(atoms));
    }
    let axes: Vec<usize> = dists.iter().map(|d| d.len()).collect();

    let m = scm.n_confounders();
    let n = scm.n_factors();
    let mut table = vec![0.0; cards.iter().product()];
    let mut factors = vec![0; n];
    let mut key = vec![0; include.len()];
    for atom in 0..atoms as usize {
        let values = decode_unchecked(&axes, atom);
        let p: f64 = values.iter().zip(&dists).map(|(&v, d)| d[v]).product();
        if p == 0.0 {
            continue;
        }
        let (confounders, rest) = values.split_at(m);
        let noises = &rest[..n];
        scm.evaluate(&dag.factor_order, confounders, noises, &mut factors);
        for (slot, v) in key.iter_mut().zip(include) {
            *slot = match v.kind {
                VarKind::Factor => factors[v.index],
                VarKind::Confounder => confounders[v.index],
                VarKind::Observable => scm.emit(&factors, rest[n]),
                VarKind::Code => unreachable!("cardinality lookup rejects codes"),
            };
        }
        table[encode_unchecked(&cards, &key)] += p;
    }
    Ok(JointTable::new(include.to_vec(), cards, table)?)
}

/// `do(settings)`: each targeted factor's assignment becomes a constant with
/// no parents. The factor keeps its noise variable so sampling streams stay
/// aligned with the original model.
pub fn intervene(scm: &Scm, settings: &BTreeMap<VariableId, usize>) -> Result<Scm, ScmError> {
    let mut out = scm.clone();
    for (&v, &value) in settings {
        if v.kind != VarKind::Factor {
            return Err(ScmError::NotAFactor(v));
        }
        let card = scm.cardinality(v)?;
        if value >= card {
            return Err(ScmError::OutOfDomain { variable: v, value });
        }
        out.assignments[v.index] = Assignment::constant(v.index, value, scm.factor_noises[v.index].domain());
    }
    Ok(out)
}
