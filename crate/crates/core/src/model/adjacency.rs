use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric, binary, hollow adjacency matrix stored as packed bit rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Inserts the undirected edge {i, j}. Returns false if it was present.
    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i >= self.n || j >= self.n {
            return Err(Error::OutOfRange(format!(
                "edge ({i}, {j}) in a graph of {} nodes",
                self.n
            )));
        }
        if i == j {
            return Err(Error::Validation(format!("self-loop at node {i}")));
        }
        let present = self.contains(i, j);
        self.set_bit(i, j);
        self.set_bit(j, i);
        Ok(!present)
    }

    fn set_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1u64 << (j % 64);
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Number of common neighbours of i and j, i.e. (A Aᵀ)_ij.
    pub fn common_neighbours(&self, i: usize, j: usize) -> u32 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// Neighbours of `i` in increasing order.
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            })
        })
    }

    /// Undirected edges as (i, j) with i < j, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbours(i)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j) in self.edges() {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        m
    }

    /// Builds from a dense 0/1 matrix, checking symmetry and the zero diagonal.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Validation("adjacency matrix must be square".into()));
        }
        let mut a = Self::empty(n);
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Validation(format!(
                        "non-binary entry {v} at ({i}, {j})"
                    )));
                }
                if v != m[(j, i)] {
                    return Err(Error::Validation(format!("asymmetric entry at ({i}, {j})")));
                }
                if v == 1.0 && i < j {
                    a.insert(i, j)?;
                }
            }
        }
        Ok(a)
    }
}

/// T adjacency snapshots over a shared node set.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    snapshots: Vec<AdjacencyMatrix>,
    node_ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<AdjacencyMatrix>, node_ids: Vec<String>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Validation(
                "a series needs at least one snapshot".into(),
            ));
        }
        let n = node_ids.len();
        if let Some((t, a)) = snapshots.iter().enumerate().find(|(_, a)| a.n() != n) {
            return Err(Error::Validation(format!(
                "snapshot {} has {} nodes, expected {n}",
                t + 1,
                a.n()
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in node_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate node id `{id}`")));
            }
        }
        Ok(Self {
            snapshots,
            node_ids,
            index,
        })
    }

    /// Series with node labels "0", "1", ….
    pub fn with_default_ids(snapshots: Vec<AdjacencyMatrix>) -> Result<Self> {
        let n = snapshots.first().map(|a| a.n()).unwrap_or(0);
        Self::new(snapshots, (0..n).map(|i| i.to_string()).collect())
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn horizon(&self) -> usize {
        self.snapshots.len()
    }

    pub fn snapshot(&self, t: usize) -> &AdjacencyMatrix {
        &self.snapshots[t]
    }

    pub fn snapshots(&self) -> &[AdjacencyMatrix] {
        &self.snapshots
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_is_symmetric_and_deduplicates() {
        let mut a = AdjacencyMatrix::empty(70);
        assert!(a.insert(3, 65).unwrap());
        assert!(!a.insert(65, 3).unwrap());
        assert!(a.contains(65, 3) && a.contains(3, 65));
        assert_eq!(a.edge_count(), 1);
        assert_eq!(a.edges().collect::<Vec<_>>(), vec![(3, 65)]);
        assert!(a.insert(2, 2).is_err());
    }

    #[test]
    fn dense_round_trip_and_common_neighbours() {
        let m = DMatrix::from_row_slice(3, 3, &[0., 1., 1., 1., 0., 1., 1., 1., 0.]);
        let a = AdjacencyMatrix::from_dense(&m).unwrap();
        assert_eq!(a.to_dense(), m);
        let sq = &m * &m;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.common_neighbours(i, j) as f64, sq[(i, j)]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_snapshots() {
        let r = SnapshotSeries::with_default_ids(vec![
            AdjacencyMatrix::empty(3),
            AdjacencyMatrix::empty(4),
        ]);
        assert!(r.is_err());
    }
}
