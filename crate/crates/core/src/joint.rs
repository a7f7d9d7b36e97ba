//! Dense joint probability tables over named finite variables.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scm::VariableId;
use crate::space::{decode_unchecked, encode_unchecked};

/// Tolerance for "sums to one".
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JointError {
    #[error("table shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("variable {0} appears twice")]
    DuplicateVariable(VariableId),
    #[error("variable {0} is not in the table")]
    UnknownVariable(VariableId),
    #[error("negative or non-finite probability {0}")]
    InvalidProbability(f64),
    #[error("probabilities sum to {0}, not 1")]
    Unnormalized(f64),
}

/// A joint distribution over `variables`, stored row-major with the last
/// variable varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointDocument", into = "JointDocument")]
pub struct JointTable {
    variables: Vec<VariableId>,
    cardinalities: Vec<usize>,
    probabilities: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JointDocument {
    variables: Vec<VariableId>,
    cardinalities: Vec<usize>,
    probabilities: Vec<f64>,
}

impl TryFrom<JointDocument> for JointTable {
    type Error = JointError;

    fn try_from(d: JointDocument) -> Result<Self, Self::Error> {
        JointTable::new(d.variables, d.cardinalities, d.probabilities)
    }
}

impl From<JointTable> for JointDocument {
    fn from(t: JointTable) -> Self {
        JointDocument {
            variables: t.variables,
            cardinalities: t.cardinalities,
            probabilities: t.probabilities,
        }
    }
}

impl JointTable {
    /// Builds a table; checks shape and non-negativity but not normalization.
    pub fn new(
        variables: Vec<VariableId>,
        cardinalities: Vec<usize>,
        probabilities: Vec<f64>,
    ) -> Result<Self, JointError> {
        if variables.len() != cardinalities.len() {
            return Err(JointError::ShapeMismatch(format!(
                "{} variables but {} cardinalities",
                variables.len(),
                cardinalities.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for v in &variables {
            if !seen.insert(*v) {
                return Err(JointError::DuplicateVariable(*v));
            }
        }
        if cardinalities.contains(&0) {
            return Err(JointError::ShapeMismatch("zero cardinality".into()));
        }
        let size: usize = cardinalities.iter().product();
        if probabilities.len() != size {
            return Err(JointError::ShapeMismatch(format!(
                "expected {size} probabilities, got {}",
                probabilities.len()
            )));
        }
        if let Some(&p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(JointError::InvalidProbability(p));
        }
        Ok(Self {
            variables,
            cardinalities,
            probabilities,
        })
    }

    /// Normalized histogram from raw counts.
    pub fn from_counts(
        variables: Vec<VariableId>,
        cardinalities: Vec<usize>,
        counts: &[u64],
    ) -> Result<Self, JointError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(JointError::Unnormalized(0.0));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(variables, cardinalities, probs)
    }

    pub fn variables(&self) -> &[VariableId] {
        &self.variables
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    pub fn position(&self, v: VariableId) -> Option<usize> {
        self.variables.iter().position(|&x| x == v)
    }

    /// Probability of one full assignment (values in `variables()` order).
    pub fn prob(&self, values: &[usize]) -> f64 {
        assert_eq!(values.len(), self.variables.len());
        self.probabilities[encode_unchecked(&self.cardinalities, values)]
    }

    /// Iterates `(value tuple, probability)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| (decode_unchecked(&self.cardinalities, i), p))
    }

    /// Marginal over `keep`, in the order given.
    pub fn marginal(&self, keep: &[VariableId]) -> Result<JointTable, JointError> {
        let positions = keep
            .iter()
            .map(|v| self.position(*v).ok_or(JointError::UnknownVariable(*v)))
            .collect::<Result<Vec<_>, _>>()?;
        let cards: Vec<usize> = positions.iter().map(|&p| self.cardinalities[p]).collect();
        let mut out = vec![0.0; cards.iter().product()];
        let mut sub = vec![0; positions.len()];
        for (values, p) in self.iter() {
            for (slot, &pos) in sub.iter_mut().zip(&positions) {
                *slot = values[pos];
            }
            out[encode_unchecked(&cards, &sub)] += p;
        }
        JointTable::new(keep.to_vec(), cards, out)
    }

    /// Total-variation distance to a table over the same variables.
    pub fn total_variation(&self, other: &JointTable) -> Result<f64, JointError> {
        let aligned = other.marginal(&self.variables)?;
        if aligned.cardinalities != self.cardinalities {
            return Err(JointError::ShapeMismatch("cardinalities differ".into()));
        }
        Ok(0.5
            * self
                .probabilities
                .iter()
                .zip(&aligned.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Largest absolute entry-wise difference to a table over the same variables.
    pub fn max_abs_diff(&self, other: &JointTable) -> Result<f64, JointError> {
        let aligned = other.marginal(&self.variables)?;
        if aligned.cardinalities != self.cardinalities {
            return Err(JointError::ShapeMismatch("cardinalities differ".into()));
        }
        Ok(self
            .probabilities
            .iter()
            .zip(&aligned.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: usize) -> VariableId {
        VariableId::factor(i)
    }

    #[test]
    fn marginal_sums_out() {
        let t = JointTable::new(vec![s(0), s(1)], vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let m = t.marginal(&[s(1)]).unwrap();
        assert!((m.probabilities()[0] - 0.4).abs() < 1e-15);
        assert!((m.probabilities()[1] - 0.6).abs() < 1e-15);
        let swapped = t.marginal(&[s(1), s(0)]).unwrap();
        assert_eq!(swapped.prob(&[0, 1]), 0.3);
    }

    #[test]
    fn total_variation_aligns_variable_order() {
        let a = JointTable::new(vec![s(0), s(1)], vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = a.marginal(&[s(1), s(0)]).unwrap();
        assert!(a.total_variation(&b).unwrap() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            JointTable::new(vec![s(0)], vec![2], vec![1.0]),
            Err(JointError::ShapeMismatch(_))
        ));
        assert!(matches!(
            JointTable::new(vec![s(0), s(0)], vec![1, 1], vec![1.0]),
            Err(JointError::DuplicateVariable(_))
        ));
        assert!(matches!(
            JointTable::new(vec![s(0)], vec![2], vec![1.5, -0.5]),
            Err(JointError::InvalidProbability(_))
        ));
    }

    #[test]
    fn json_shape() {
        let t = JointTable::new(vec![s(0), VariableId::code(0)], vec![1, 1], vec![1.0]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"{"variables":["S0","Z0"],"cardinalities":[1,1],"probabilities":[1.0]}"#
        );
        let back: JointTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
