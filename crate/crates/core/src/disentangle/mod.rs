//! Exact disentanglement checks over finite spaces.
//!
//! The pipeline is `g: S -> X` (generation), `f: X -> Z` (encoding) and the
//! modularity map `m = f ∘ g`. A representation is
//!
//! * **modular** when every code axis depends on at most one factor axis and
//!   the factors can be assigned distinct code axes,
//! * **informative** when `m` has a left inverse `i` (`i ∘ m = id_S`),
//! * **disentangled** when that inverse factorizes per axis, i.e. each factor
//!   can be read back from its assigned code axis alone.
//!
//! Factor axes may land on any code axis; index alignment is not required.

mod score;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::ProductSpace;

pub use score::{binarize_continuous_codes, pushforward_joint, score_disentanglement, ScoreReport, DEFAULT_BINS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DisentangleError {
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("{codes} code axes cannot carry {factors} factors")]
    TooFewCodes { factors: usize, codes: usize },
    #[error("invalid code assignment: {0}")]
    AssignmentInvalid(String),
    #[error("map table is not total: {0}")]
    NotTotal(String),
    #[error("joint table is not normalized (total {0})")]
    Unnormalized(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error(transparent)]
    Joint(#[from] crate::joint::JointError),
}

/// A total map between finite (product) spaces, stored as a flat table from
/// domain index to codomain index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMap {
    domain: ProductSpace,
    codomain: ProductSpace,
    table: Vec<usize>,
}

impl FiniteMap {
    pub fn new(domain: ProductSpace, codomain: ProductSpace, table: Vec<usize>) -> Result<Self, DisentangleError> {
        if table.len() != domain.size() {
            return Err(DisentangleError::NotTotal(format!(
                "{} entries for a domain of size {}",
                table.len(),
                domain.size()
            )));
        }
        if let Some(v) = table.iter().find(|&&v| v >= codomain.size()) {
            return Err(DisentangleError::NotTotal(format!("value {v} outside codomain")));
        }
        Ok(Self { domain, codomain, table })
    }

    /// Tabulates a tuple-valued function.
    pub fn from_fn(
        domain: ProductSpace,
        codomain: ProductSpace,
        f: impl Fn(&[usize]) -> Vec<usize>,
    ) -> Result<Self, DisentangleError> {
        let mut table = Vec::with_capacity(domain.size());
        for t in domain.iter() {
            let image = f(&t);
            let idx = codomain
                .encode(&image)
                .map_err(|e| DisentangleError::NotTotal(e.to_string()))?;
            table.push(idx);
        }
        Self::new(domain, codomain, table)
    }

    pub fn identity(space: ProductSpace) -> Self {
        let table = (0..space.size()).collect();
        Self { domain: space.clone(), codomain: space, table }
    }

    pub fn domain(&self) -> &ProductSpace {
        &self.domain
    }

    pub fn codomain(&self) -> &ProductSpace {
        &self.codomain
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn apply_index(&self, x: usize) -> usize {
        self.table[x]
    }

    pub fn apply(&self, tuple: &[usize]) -> Vec<usize> {
        let x = self.domain.encode(tuple).expect("tuple in domain");
        self.codomain.decode(self.table[x])
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &FiniteMap) -> Result<FiniteMap, DisentangleError> {
        if self.codomain != next.domain {
            return Err(DisentangleError::DomainMismatch(format!(
                "codomain {:?} vs domain {:?}",
                self.codomain.axes(),
                next.domain.axes()
            )));
        }
        Ok(FiniteMap {
            domain: self.domain.clone(),
            codomain: next.codomain.clone(),
            table: self.table.iter().map(|&x| next.table[x]).collect(),
        })
    }

    pub fn is_injective(&self) -> bool {
        injective_on(&self.table, self.codomain.size(), 0..self.domain.size())
    }
}

fn injective_on(table: &[usize], codomain: usize, inputs: impl Iterator<Item = usize>) -> bool {
    let mut hit = vec![false; codomain];
    for x in inputs {
        let y = table[x];
        if hit[y] {
            return false;
        }
        hit[y] = true;
    }
    true
}

/// Injectivity of `g`, and of `f` restricted to `g(S)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureCheck {
    pub g_injective: bool,
    pub f_injective_on_image: bool,
}

pub fn check_structure(g: &FiniteMap, f: &FiniteMap) -> Result<StructureCheck, DisentangleError> {
    if g.codomain != f.domain {
        return Err(DisentangleError::DomainMismatch(
            "codomain of g must equal domain of f".into(),
        ));
    }
    let mut image: Vec<usize> = g.table.clone();
    image.sort_unstable();
    image.dedup();
    Ok(StructureCheck {
        g_injective: g.is_injective(),
        f_injective_on_image: injective_on(&f.table, f.codomain.size(), image.into_iter()),
    })
}

/// `deps[k]` lists the factor axes code axis `k` varies with.
fn dependency_scan(m: &FiniteMap) -> Vec<Vec<usize>> {
    let s_axes = m.domain.axes().to_vec();
    let z_axes = m.codomain.axes();
    let mut depends = vec![vec![false; s_axes.len()]; z_axes.len()];
    let mut other = vec![0; s_axes.len()];
    for (x, s) in m.domain.iter().enumerate() {
        let z = m.codomain.decode(m.table[x]);
        for j in 0..s_axes.len() {
            // only compare against larger values; the pair is symmetric
            for v in s[j] + 1..s_axes[j] {
                other.copy_from_slice(&s);
                other[j] = v;
                let z2 = m.apply(&other);
                for (k, dep) in depends.iter_mut().enumerate() {
                    if z[k] != z2[k] {
                        dep[j] = true;
                    }
                }
            }
        }
    }
    depends
        .into_iter()
        .map(|row| row.iter().enumerate().filter(|(_, &d)| d).map(|(j, _)| j).collect())
        .collect()
}

/// Outcome of the modularity check; `assignment[j]` is the code axis carrying
/// factor axis `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modularity {
    pub holds: bool,
    pub assignment: Option<Vec<usize>>,
}

/// Modularity of a direct map `m: S -> Z`.
pub fn modularity_of(m: &FiniteMap) -> Result<Modularity, DisentangleError> {
    let n = m.domain.rank();
    let l = m.codomain.rank();
    if l < n {
        return Err(DisentangleError::TooFewCodes { factors: n, codes: l });
    }
    let deps = dependency_scan(m);
    if deps.iter().any(|d| d.len() > 1) {
        return Ok(Modularity { holds: false, assignment: None });
    }
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![false; l];
    // prefer a code that determines its factor; otherwise the smallest one
    for j in 0..n {
        let candidates: Vec<usize> = (0..l).filter(|&k| deps[k] == [j]).collect();
        let pick = candidates
            .iter()
            .copied()
            .find(|&k| determines_factor(m, k, j))
            .or(candidates.first().copied());
        if let Some(k) = pick {
            assignment[j] = Some(k);
            used[k] = true;
        }
    }
    // a factor nothing depends on takes the smallest free constant code axis
    for slot in assignment.iter_mut().filter(|a| a.is_none()) {
        match (0..l).find(|&k| !used[k] && deps[k].is_empty()) {
            Some(k) => {
                *slot = Some(k);
                used[k] = true;
            }
            None => return Ok(Modularity { holds: false, assignment: None }),
        }
    }
    Ok(Modularity {
        holds: true,
        assignment: Some(assignment.into_iter().map(|a| a.expect("filled")).collect()),
    })
}

/// True iff the value of code axis `k` pins down factor axis `j`.
fn determines_factor(m: &FiniteMap, k: usize, j: usize) -> bool {
    let mut seen: Vec<Option<usize>> = vec![None; m.codomain.axes()[k]];
    for (x, s) in m.domain.iter().enumerate() {
        let z = m.codomain.decode(m.table[x])[k];
        match seen[z] {
            Some(prev) if prev != s[j] => return false,
            _ => seen[z] = Some(s[j]),
        }
    }
    true
}

/// Modularity of `m = f ∘ g` with `n` factor axes and `l` code axes.
pub fn check_modularity(g: &FiniteMap, f: &FiniteMap, n: usize, l: usize) -> Result<Modularity, DisentangleError> {
    if l < n {
        return Err(DisentangleError::TooFewCodes { factors: n, codes: l });
    }
    let m = g.then(f)?;
    if m.domain.rank() != n || m.codomain.rank() != l {
        return Err(DisentangleError::DomainMismatch(format!(
            "m maps {} axes to {} axes, expected {n} to {l}",
            m.domain.rank(),
            m.codomain.rank()
        )));
    }
    modularity_of(&m)
}

/// A left inverse `i` with `i ∘ m = id_S`, or `None` when `m` is not injective.
/// Codes outside the image of `m` map to the all-zero factor tuple.
pub fn construct_left_inverse(m: &FiniteMap) -> Option<FiniteMap> {
    let mut table = vec![None; m.codomain.size()];
    for (x, &z) in m.table.iter().enumerate() {
        if table[z].is_some() {
            return None;
        }
        table[z] = Some(x);
    }
    Some(FiniteMap {
        domain: m.codomain.clone(),
        codomain: m.domain.clone(),
        table: table.into_iter().map(|x| x.unwrap_or(0)).collect(),
    })
}

fn validate_assignment(m: &FiniteMap, assignment: &[usize]) -> Result<(), DisentangleError> {
    let n = m.domain.rank();
    let l = m.codomain.rank();
    if assignment.len() != n {
        return Err(DisentangleError::AssignmentInvalid(format!(
            "{} entries for {n} factors",
            assignment.len()
        )));
    }
    let mut seen = vec![false; l];
    for &k in assignment {
        if k >= l {
            return Err(DisentangleError::AssignmentInvalid(format!("code axis {k} out of range")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(DisentangleError::AssignmentInvalid(format!("code axis {k} used twice")));
        }
    }
    let deps = dependency_scan(m);
    for (j, &k) in assignment.iter().enumerate() {
        if deps[k].iter().any(|&d| d != j) {
            return Err(DisentangleError::AssignmentInvalid(format!(
                "code axis {k} depends on factors {:?}, not only on factor {j}",
                deps[k]
            )));
        }
    }
    Ok(())
}

/// The per-axis inverse `i = i_1 × ... × i_n` reading factor `j` from code
/// axis `assignment[j]`, if one exists. Code values never produced map to 0.
pub fn factorized_left_inverse(m: &FiniteMap, assignment: &[usize]) -> Result<Option<FiniteMap>, DisentangleError> {
    validate_assignment(m, assignment)?;
    let z_axes = m.codomain.axes();
    let mut per_axis: Vec<Vec<Option<usize>>> = assignment.iter().map(|&k| vec![None; z_axes[k]]).collect();
    for (x, s) in m.domain.iter().enumerate() {
        let z = m.codomain.decode(m.table[x]);
        for (j, &k) in assignment.iter().enumerate() {
            match per_axis[j][z[k]] {
                Some(prev) if prev != s[j] => return Ok(None),
                _ => per_axis[j][z[k]] = Some(s[j]),
            }
        }
    }
    let inverse = FiniteMap::from_fn(m.codomain.clone(), m.domain.clone(), |z| {
        assignment
            .iter()
            .enumerate()
            .map(|(j, &k)| per_axis[j][z[k]].unwrap_or(0))
            .collect()
    })?;
    Ok(Some(inverse))
}

/// True iff every factor is recoverable from its assigned code axis alone.
pub fn check_disentanglement(m: &FiniteMap, assignment: &[usize]) -> Result<bool, DisentangleError> {
    Ok(factorized_left_inverse(m, assignment)?.is_some())
}

/// All checks for one `(g, f)` pipeline. Serialized field names are fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineReport {
    pub g_injective: bool,
    pub f_injective_on_image: bool,
    pub modularity_holds: bool,
    /// Factor axis `j` is carried by code axis `code_assignment[j]`.
    pub code_assignment: Option<Vec<usize>>,
    pub informativeness_holds: bool,
    pub disentanglement_holds: bool,
}

impl PipelineReport {
    pub fn all_hold(&self) -> bool {
        self.g_injective
            && self.f_injective_on_image
            && self.modularity_holds
            && self.informativeness_holds
            && self.disentanglement_holds
    }
}

pub fn check_pipeline(g: &FiniteMap, f: &FiniteMap) -> Result<PipelineReport, DisentangleError> {
    let structure = check_structure(g, f)?;
    let n = g.domain.rank();
    let l = f.codomain.rank();
    let modularity = check_modularity(g, f, n, l)?;
    let m = g.then(f)?;
    let informativeness_holds = construct_left_inverse(&m).is_some();
    let disentanglement_holds = match &modularity.assignment {
        Some(a) if modularity.holds => check_disentanglement(&m, a)?,
        _ => false,
    };
    Ok(PipelineReport {
        g_injective: structure.g_injective,
        f_injective_on_image: structure.f_injective_on_image,
        modularity_holds: modularity.holds,
        code_assignment: modularity.assignment,
        informativeness_holds,
        disentanglement_holds,
    })
}
