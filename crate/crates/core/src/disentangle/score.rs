//! Continuous disentanglement scores from normalized mutual information.

use serde::{Deserialize, Serialize};

use super::{DisentangleError, FiniteMap};
use crate::joint::JointTable;
use crate::scm::{VarKind, VariableId};

/// Default number of quantile bins per code dimension.
pub const DEFAULT_BINS: usize = 4;

/// Columns whose total normalized MI is at or below this are treated as
/// carrying no factor information.
const COLUMN_MASS_EPS: f64 = 1e-12;

/// Serialized field names are fixed; `miMatrix` is row-major (`n` factor
/// rows by `l` code columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreReport {
    pub mi_matrix: Vec<Vec<f64>>,
    pub modularity_score: f64,
    pub informativeness_score: f64,
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn mutual_information(pair: &JointTable) -> f64 {
    let a = pair.cardinalities()[0];
    let b = pair.cardinalities()[1];
    let p = pair.probabilities();
    let mut pa = vec![0.0; a];
    let mut pb = vec![0.0; b];
    for i in 0..a {
        for k in 0..b {
            pa[i] += p[i * b + k];
            pb[k] += p[i * b + k];
        }
    }
    let mut mi = 0.0;
    for i in 0..a {
        for k in 0..b {
            let pik = p[i * b + k];
            if pik > 0.0 {
                mi += pik * (pik / (pa[i] * pb[k])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Scores a joint table over factor variables (`S*`) and code variables
/// (`Z*`). Factor rows and code columns follow their order in the table.
///
/// * `miMatrix[j][k] = I(S_j; Z_k) / H(S_j)`, with `0/0 = 0`.
/// * modularity: mean over codes with nonzero column mass of
///   `max_j mi[j][k] / sum_j mi[j][k]`.
/// * informativeness: mean over factors of `max_k mi[j][k]`.
pub fn score_disentanglement(joint: &JointTable) -> Result<ScoreReport, DisentangleError> {
    if !joint.is_normalized() {
        return Err(DisentangleError::Unnormalized(joint.total()));
    }
    let factors: Vec<VariableId> = joint.variables().iter().copied().filter(|v| v.kind == VarKind::Factor).collect();
    let codes: Vec<VariableId> = joint.variables().iter().copied().filter(|v| v.kind == VarKind::Code).collect();
    if factors.is_empty() || codes.is_empty() {
        return Err(DisentangleError::DomainMismatch(
            "a score table needs at least one factor (S) and one code (Z) variable".into(),
        ));
    }

    let mut mi_matrix = vec![vec![0.0; codes.len()]; factors.len()];
    for (j, &s) in factors.iter().enumerate() {
        let h = entropy(joint.marginal(&[s])?.probabilities());
        if h <= 0.0 {
            continue;
        }
        for (k, &z) in codes.iter().enumerate() {
            let mi = mutual_information(&joint.marginal(&[s, z])?);
            mi_matrix[j][k] = (mi / h).clamp(0.0, 1.0);
        }
    }

    let mut ratios = Vec::new();
    for k in 0..codes.len() {
        let column: Vec<f64> = mi_matrix.iter().map(|row| row[k]).collect();
        let total: f64 = column.iter().sum();
        if total > COLUMN_MASS_EPS {
            ratios.push(column.iter().copied().fold(0.0, f64::max) / total);
        }
    }
    let modularity_score = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let informativeness_score = mi_matrix
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / factors.len() as f64;

    Ok(ScoreReport { mi_matrix, modularity_score, informativeness_score })
}

/// Joint over (factor axes, code axes) of `m` applied to uniformly
/// distributed factors.
pub fn pushforward_joint(m: &FiniteMap) -> Result<JointTable, DisentangleError> {
    let n = m.domain().rank();
    let l = m.codomain().rank();
    let mut vars: Vec<VariableId> = (0..n).map(VariableId::factor).collect();
    vars.extend((0..l).map(VariableId::code));
    let mut cards = m.domain().axes().to_vec();
    cards.extend_from_slice(m.codomain().axes());
    let zsize = m.codomain().size();
    let weight = 1.0 / m.domain().size() as f64;
    let mut probs = vec![0.0; m.domain().size() * zsize];
    for (x, &z) in m.table().iter().enumerate() {
        probs[x * zsize + z] += weight;
    }
    Ok(JointTable::new(vars, cards, probs)?)
}

/// Bins each real code dimension into `bins` quantile cells and returns the
/// empirical joint over (factors, binned codes).
///
/// A value's cell is `floor(bins * r / N)` where `r` is its mid-rank (the
/// count of smaller samples plus half the count of equal ones). Ties always
/// share a cell, and a constant dimension collapses to a single cell.
/// Factor cardinalities are taken as `max + 1` per axis.
pub fn binarize_continuous_codes(samples: &[(Vec<usize>, Vec<f64>)], bins: usize) -> Result<JointTable, DisentangleError> {
    if bins < 2 {
        return Err(DisentangleError::TooFewBins(bins));
    }
    if samples.len() < bins {
        return Err(DisentangleError::TooFewSamples { needed: bins, got: samples.len() });
    }
    let n = samples[0].0.len();
    let l = samples[0].1.len();
    if samples.iter().any(|(s, z)| s.len() != n || z.len() != l) {
        return Err(DisentangleError::DomainMismatch("ragged samples".into()));
    }
    if samples.iter().any(|(_, z)| z.iter().any(|v| !v.is_finite())) {
        return Err(DisentangleError::DomainMismatch("non-finite code value".into()));
    }

    let total = samples.len();
    let mut binned = vec![vec![0usize; l]; total];
    for k in 0..l {
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| samples[a].1[k].total_cmp(&samples[b].1[k]));
        let mut start = 0;
        while start < total {
            let value = samples[order[start]].1[k];
            let mut end = start;
            while end < total && samples[order[end]].1[k] == value {
                end += 1;
            }
            // doubled mid-rank keeps the arithmetic in integers
            let mid2 = 2 * start + (end - start);
            let cell = ((bins * mid2) / (2 * total)).min(bins - 1);
            for &i in &order[start..end] {
                binned[i][k] = cell;
            }
            start = end;
        }
    }

    let mut cards: Vec<usize> = (0..n)
        .map(|j| samples.iter().map(|(s, _)| s[j]).max().unwrap_or(0) + 1)
        .collect();
    cards.extend(std::iter::repeat_n(bins, l));
    let mut vars: Vec<VariableId> = (0..n).map(VariableId::factor).collect();
    vars.extend((0..l).map(VariableId::code));
    let mut counts = vec![0u64; cards.iter().product()];
    for ((s, _), z) in samples.iter().zip(&binned) {
        let idx = s.iter().chain(z.iter()).zip(&cards).fold(0, |acc, (v, c)| acc * c + v);
        counts[idx] += 1;
    }
    Ok(JointTable::from_counts(vars, cards, &counts)?)
}
