//! Finite domains and their products.
//!
//! Tuples are encoded row-major: the last axis varies fastest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("a finite domain needs cardinality >= 1")]
    EmptyDomain,
    #[error("a product space needs at least one axis")]
    NoAxes,
    #[error("tuple {tuple:?} does not belong to a space with axes {axes:?}")]
    OutOfSpace { tuple: Vec<usize>, axes: Vec<usize> },
}

/// Values `0..cardinality`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FiniteDomain(usize);

impl FiniteDomain {
    pub fn new(cardinality: usize) -> Result<Self, SpaceError> {
        if cardinality == 0 {
            return Err(SpaceError::EmptyDomain);
        }
        Ok(Self(cardinality))
    }

    pub fn cardinality(self) -> usize {
        self.0
    }

    pub fn contains(self, value: usize) -> bool {
        value < self.0
    }
}

impl TryFrom<usize> for FiniteDomain {
    type Error = SpaceError;

    fn try_from(value: usize) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<FiniteDomain> for usize {
    fn from(d: FiniteDomain) -> usize {
        d.0
    }
}

/// A product of finite domains, e.g. the factor space `S1 x ... x Sn`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ProductSpace {
    axes: Vec<usize>,
}

impl ProductSpace {
    pub fn new(axes: Vec<usize>) -> Result<Self, SpaceError> {
        if axes.is_empty() {
            return Err(SpaceError::NoAxes);
        }
        if axes.contains(&0) {
            return Err(SpaceError::EmptyDomain);
        }
        Ok(Self { axes })
    }

    /// A single-axis space.
    pub fn flat(cardinality: usize) -> Result<Self, SpaceError> {
        Self::new(vec![cardinality])
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn size(&self) -> usize {
        self.axes.iter().product()
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        tuple.len() == self.axes.len() && tuple.iter().zip(&self.axes).all(|(v, c)| v < c)
    }

    pub fn encode(&self, tuple: &[usize]) -> Result<usize, SpaceError> {
        if !self.contains(tuple) {
            return Err(SpaceError::OutOfSpace {
                tuple: tuple.to_vec(),
                axes: self.axes.clone(),
            });
        }
        Ok(encode_unchecked(&self.axes, tuple))
    }

    /// Inverse of [`encode`](Self::encode). Panics if `index >= size()`.
    pub fn decode(&self, index: usize) -> Vec<usize> {
        assert!(index < self.size(), "index {index} outside space of size {}", self.size());
        decode_unchecked(&self.axes, index)
    }

    /// All tuples in encoding order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size()).map(move |i| decode_unchecked(&self.axes, i))
    }
}

impl TryFrom<Vec<usize>> for ProductSpace {
    type Error = SpaceError;

    fn try_from(axes: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(axes)
    }
}

impl From<ProductSpace> for Vec<usize> {
    fn from(s: ProductSpace) -> Vec<usize> {
        s.axes
    }
}

pub(crate) fn encode_unchecked(axes: &[usize], tuple: &[usize]) -> usize {
    tuple.iter().zip(axes).fold(0, |acc, (v, c)| acc * c + v)
}

pub(crate) fn decode_unchecked(axes: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; axes.len()];
    for (slot, &c) in out.iter_mut().zip(axes).rev() {
        *slot = index % c;
        index /= c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn last_axis_fastest() {
        let s = ProductSpace::new(vec![2, 3]).unwrap();
        assert_eq!(s.encode(&[0, 2]).unwrap(), 2);
        assert_eq!(s.encode(&[1, 0]).unwrap(), 3);
        assert_eq!(s.iter().count(), 6);
    }

    #[test]
    fn rejects_degenerate_spaces() {
        assert_eq!(ProductSpace::new(vec![]), Err(SpaceError::NoAxes));
        assert_eq!(ProductSpace::new(vec![2, 0]), Err(SpaceError::EmptyDomain));
        assert!(FiniteDomain::new(0).is_err());
        assert!(ProductSpace::new(vec![2]).unwrap().encode(&[2]).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(axes in prop::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
            let s = ProductSpace::new(axes).unwrap();
            let i = (seed as usize) % s.size();
            prop_assert_eq!(s.encode(&s.decode(i)).unwrap(), i);
        }
    }
}
