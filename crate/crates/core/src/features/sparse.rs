use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::Scalar;

/// Sorted `(index, value)` pairs over a fixed dimension. Zeros are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector<F> {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<F>,
}

impl<F: Scalar> SparseVector<F> {
    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Indices must be strictly increasing and below `dim`. Zero values are dropped.
    pub fn new(dim: usize, pairs: Vec<(usize, F)>) -> Result<Self, FeatureError> {
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        let mut last: Option<usize> = None;
        for (i, v) in pairs {
            if i >= dim || last.is_some_and(|l| i <= l) {
                return Err(FeatureError::InvalidSparseIndex { index: i, dim });
            }
            last = Some(i);
            if v != F::zero() {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVector { dim, indices, values })
    }

    pub fn from_dense(values: &[F]) -> Self {
        let pairs = values.iter().copied().enumerate().filter(|(_, v)| *v != F::zero()).collect();
        Self::new(values.len(), pairs).expect("dense positions are sorted")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at `index`, zero when absent.
    pub fn get(&self, index: usize) -> F {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => F::zero(),
        }
    }

    pub fn dot_dense(&self, dense: &[F]) -> F {
        self.iter().fold(F::zero(), |acc, (i, v)| acc + v * dense[i])
    }

    pub fn dot(&self, other: &SparseVector<F>) -> F {
        let (mut a, mut b) = (0, 0);
        let mut acc = F::zero();
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc = acc + self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn squared_norm(&self) -> F {
        self.values.iter().fold(F::zero(), |acc, &v| acc + v * v)
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(SparseVector::<f64>::new(3, vec![(1, 1.0), (0, 1.0)]).is_err());
        assert!(SparseVector::<f64>::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::<f64>::new(3, vec![(3, 1.0)]).is_err());
        let v = SparseVector::<f64>::new(3, vec![(0, 0.0), (2, 5.0)]).unwrap();
        assert_eq!(v.nnz(), 1);
        assert_eq!(v.get(2), 5.0);
        assert_eq!(v.get(1), 0.0);
    }

    proptest! {
        #[test]
        fn products_match_dense(a in proptest::collection::vec(-3i8..3, 1..12), seed in any::<u8>()) {
            let da: Vec<f64> = a.iter().map(|&x| x as f64).collect();
            let db: Vec<f64> = a.iter().enumerate().map(|(i, _)| ((i as u8 ^ seed) % 5) as f64 - 2.0).collect();
            let (sa, sb) = (SparseVector::from_dense(&da), SparseVector::from_dense(&db));
            let dense: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
            prop_assert_eq!(sa.dot(&sb), dense);
            prop_assert_eq!(sa.dot_dense(&db), dense);
            prop_assert_eq!(sa.to_dense(), da);
        }
    }
}
