//! TOML document format for models.
//!
//! ```toml
//! [factors]
//! cardinalities = [2, 2]
//!
//! [confounders]            # optional
//! cardinalities = [2]
//! distributions = [[0.5, 0.5]]
//!
//! [[assignments]]          # one per factor, in factor order
//! target = "S0"
//! parents = []
//! noise = [0.5, 0.5]
//! table = [0, 1]           # row-major over (parent values..., noise value)
//!
//! [emission]
//! cardinality = 4
//! noise = [1.0]
//! table = [0, 1, 2, 3]     # row-major over (factor values..., noise value)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Assignment, Emission, NoiseSpec, Scm, ScmError, VariableId};
use crate::space::{FiniteDomain, SpaceError};

#[derive(Debug, Error)]
pub enum ScmDocumentError {
    #[error("malformed model document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize model: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid domain: {0}")]
    Domain(#[from] SpaceError),
    #[error(transparent)]
    Invalid(#[from] ScmError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    factors: FactorsSection,
    #[serde(default, skip_serializing_if = "ConfoundersSection::is_empty")]
    confounders: ConfoundersSection,
    assignments: Vec<AssignmentSection>,
    emission: EmissionSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorsSection {
    cardinalities: Vec<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfoundersSection {
    #[serde(default)]
    cardinalities: Vec<usize>,
    #[serde(default)]
    distributions: Vec<Vec<f64>>,
}

impl ConfoundersSection {
    fn is_empty(&self) -> bool {
        self.cardinalities.is_empty() && self.distributions.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentSection {
    target: VariableId,
    #[serde(default)]
    parents: Vec<VariableId>,
    noise: Vec<f64>,
    table: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionSection {
    cardinality: usize,
    noise: Vec<f64>,
    table: Vec<usize>,
}

impl Scm {
    /// Parses and validates a model document.
    pub fn from_toml_str(text: &str) -> Result<Scm, ScmDocumentError> {
        let doc: Document = toml::from_str(text)?;
        let domains = |cards: &[usize]| {
            cards
                .iter()
                .map(|&c| FiniteDomain::new(c))
                .collect::<Result<Vec<_>, _>>()
        };
        let scm = Scm {
            factor_domains: domains(&doc.factors.cardinalities)?,
            confounder_domains: domains(&doc.confounders.cardinalities)?,
            confounder_dists: doc.confounders.distributions.into_iter().map(NoiseSpec::new).collect(),
            factor_noises: doc.assignments.iter().map(|a| NoiseSpec::new(a.noise.clone())).collect(),
            assignments: doc
                .assignments
                .into_iter()
                .map(|a| Assignment { target: a.target, parents: a.parents, table: a.table })
                .collect(),
            emission: Emission {
                domain: FiniteDomain::new(doc.emission.cardinality)?,
                noise: NoiseSpec::new(doc.emission.noise),
                table: doc.emission.table,
            },
        };
        scm.validate()?;
        Ok(scm)
    }

    pub fn to_toml_string(&self) -> Result<String, ScmDocumentError> {
        let doc = Document {
            factors: FactorsSection { cardinalities: self.factor_cardinalities() },
            confounders: ConfoundersSection {
                cardinalities: self.confounder_domains.iter().map(|d| d.cardinality()).collect(),
                distributions: self.confounder_dists.iter().map(|d| d.probabilities.clone()).collect(),
            },
            assignments: self
                .assignments
                .iter()
                .zip(&self.factor_noises)
                .map(|(a, noise)| AssignmentSection {
                    target: a.target,
                    parents: a.parents.clone(),
                    noise: noise.probabilities.clone(),
                    table: a.table.clone(),
                })
                .collect(),
            emission: EmissionSection {
                cardinality: self.emission.domain.cardinality(),
                noise: self.emission.noise.probabilities.clone(),
                table: self.emission.table.clone(),
            },
        };
        Ok(toml::to_string(&doc)?)
    }
}
