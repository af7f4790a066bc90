//! Exact cosine nearest-neighbor store over thought embeddings.
//!
//! Keys are `(chain_id, thought_index)` pairs; queries can exclude one
//! chain and whole chains can be removed when pruned. The store is an
//! exact linear scan over contiguous vectors: at a few thousand entries
//! per question this is faster than building an approximate structure,
//! and exactness keeps pruning deterministic. An ANN backend can be
//! slotted behind the same interface later if index sizes grow.

use crate::chain::ChainId;
use crate::embedder::{cosine, Embedding};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimIndexError {
    #[error("duplicate index key ({0}, {1})")]
    DuplicateKey(ChainId, u32),
    #[error("vector dimension mismatch: index uses {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A nearest-neighbor hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub chain_id: ChainId,
    pub thought_index: u32,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
struct Entry {
    chain_id: ChainId,
    thought_index: u32,
    vector: Embedding,
}

/// Exact nearest-neighbor index over all active chains' thought embeddings.
#[derive(Debug)]
pub struct SimilarityIndex {
    dimension: usize,
    entries: Vec<Entry>,
}

impl SimilarityIndex {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Adds one thought embedding under `(chain_id, thought_index)`.
    pub fn insert(
        &mut self,
        chain_id: ChainId,
        thought_index: u32,
        vector: Embedding,
    ) -> Result<(), SimIndexError> {
        if vector.len() != self.dimension {
            return Err(SimIndexError::DimensionMismatch {
                expected: self.dimension,
                got: vector.len(),
            });
        }
        if self
            .entries
            .iter()
            .any(|e| e.chain_id == chain_id && e.thought_index == thought_index)
        {
            return Err(SimIndexError::DuplicateKey(chain_id, thought_index));
        }
        self.entries.push(Entry {
            chain_id,
            thought_index,
            vector,
        });
        Ok(())
    }

    /// Returns the entry with maximum cosine similarity to `query` among
    /// entries whose chain differs from `exclude_chain`, or `None` when no
    /// such entry exists. Equal similarities break toward the lowest
    /// `(chain_id, thought_index)` key so results do not depend on
    /// insertion order.
    pub fn find_nearest_excluding(
        &self,
        query: &[f64],
        exclude_chain: ChainId,
    ) -> Option<Neighbor> {
        assert_eq!(query.len(), self.dimension, "query dimension mismatch");
        let mut best: Option<Neighbor> = None;
        for entry in &self.entries {
            if entry.chain_id == exclude_chain {
                continue;
            }
            let sim = cosine(query, &entry.vector);
            let better = match &best {
                None => true,
                Some(b) => {
                    sim > b.similarity
                        || (sim == b.similarity
                            && (entry.chain_id, entry.thought_index)
                                < (b.chain_id, b.thought_index))
                }
            };
            if better {
                best = Some(Neighbor {
                    chain_id: entry.chain_id,
                    thought_index: entry.thought_index,
                    similarity: sim,
                });
            }
        }
        best
    }

    /// Deletes every entry belonging to `chain_id`; returns how many were
    /// removed. Unknown chains remove nothing.
    pub fn remove_chain(&mut self, chain_id: ChainId) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.chain_id != chain_id);
        before - self.entries.len()
    }

    /// Iterates `(chain_id, thought_index, vector)` triples, for the
    /// brute-force ablation scan and debug dumps.
    pub fn iter(&self) -> impl Iterator<Item = (ChainId, u32, &Embedding)> {
        self.entries
            .iter()
            .map(|e| (e.chain_id, e.thought_index, &e.vector))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f64>) -> Embedding {
        let mut v = v;
        crate::embedder::normalize(&mut v);
        v
    }

    #[test]
    fn insert_then_query_excluding_other_chain() {
        let mut idx = SimilarityIndex::new(2);
        idx.insert(ChainId(0), 0, vec![1.0, 0.0]).unwrap();
        let hit = idx.find_nearest_excluding(&[1.0, 0.0], ChainId(9)).unwrap();
        assert_eq!(hit.chain_id, ChainId(0));
        assert_eq!(hit.thought_index, 0);
        assert!((hit.similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn query_excluding_own_chain_finds_nothing() {
        let mut idx = SimilarityIndex::new(2);
        idx.insert(ChainId(0), 0, vec![1.0, 0.0]).unwrap();
        assert!(idx.find_nearest_excluding(&[1.0, 0.0], ChainId(0)).is_none());
    }

    #[test]
    fn empty_index_has_no_neighbor() {
        let idx = SimilarityIndex::new(2);
        assert!(idx.find_nearest_excluding(&[1.0, 0.0], ChainId(0)).is_none());
    }

    #[test]
    fn nearest_picks_maximum_similarity() {
        let mut idx = SimilarityIndex::new(2);
        idx.insert(ChainId(0), 0, vec![1.0, 0.0]).unwrap();
        idx.insert(ChainId(1), 0, vec![0.0, 1.0]).unwrap();
        let hit = idx.find_nearest_excluding(&[1.0, 0.0], ChainId(7)).unwrap();
        assert_eq!(hit.chain_id, ChainId(0));
        let near_b = unit(vec![0.1, 1.0]);
        let hit = idx.find_nearest_excluding(&near_b, ChainId(0)).unwrap();
        assert_eq!(hit.chain_id, ChainId(1));
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut idx = SimilarityIndex::new(2);
        idx.insert(ChainId(0), 0, vec![1.0, 0.0]).unwrap();
        assert_eq!(
            idx.insert(ChainId(0), 0, vec![0.0, 1.0]),
            Err(SimIndexError::DuplicateKey(ChainId(0), 0))
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut idx = SimilarityIndex::new(3);
        assert_eq!(
            idx.insert(ChainId(0), 0, vec![1.0, 0.0]),
            Err(SimIndexError::DimensionMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn remove_chain_counts_entries() {
        let mut idx = SimilarityIndex::new(2);
        for i in 0..3 {
            idx.insert(ChainId(5), i, vec![1.0, 0.0]).unwrap();
        }
        assert_eq!(idx.remove_chain(ChainId(5)), 3);
        assert_eq!(idx.remove_chain(ChainId(5)), 0);
        assert_eq!(idx.remove_chain(ChainId(99)), 0);
    }

    #[test]
    fn ties_break_to_lowest_key() {
        let mut idx = SimilarityIndex::new(2);
        idx.insert(ChainId(2), 4, vec![1.0, 0.0]).unwrap();
        idx.insert(ChainId(1), 7, vec![1.0, 0.0]).unwrap();
        idx.insert(ChainId(1), 3, vec![1.0, 0.0]).unwrap();
        let hit = idx.find_nearest_excluding(&[1.0, 0.0], ChainId(9)).unwrap();
        assert_eq!((hit.chain_id, hit.thought_index), (ChainId(1), 3));
    }

    // Random inserts and removals: after remove_chain(c), no query ever
    // returns chain c, and the survivors match a fresh index built without
    // that chain.
    #[test]
    fn removed_chain_never_returned() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let dim = 4;
            let mut idx = SimilarityIndex::new(dim);
            let n_chains = rng.random_range(2..6u32);
            for c in 0..n_chains {
                for t in 0..rng.random_range(1..5u32) {
                    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                    idx.insert(ChainId(c), t, unit(v)).unwrap();
                }
            }
            let victim = ChainId(rng.random_range(0..n_chains));
            idx.remove_chain(victim);
            for _ in 0..10 {
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                if let Some(hit) = idx.find_nearest_excluding(&unit(q), ChainId(u32::MAX)) {
                    assert_ne!(hit.chain_id, victim);
                }
            }
        }
    }

    // insert/remove are inverses: adding a chain and removing it restores
    // previous query results exactly.
    #[test]
    fn insert_remove_roundtrip_preserves_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 8;
        let mut idx = SimilarityIndex::new(dim);
        for c in 0..3u32 {
            for t in 0..4u32 {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                idx.insert(ChainId(c), t, unit(v)).unwrap();
            }
        }
        let queries: Vec<Embedding> = (0..20)
            .map(|_| unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let before: Vec<_> = queries
            .iter()
            .map(|q| idx.find_nearest_excluding(q, ChainId(1)))
            .collect();
        for t in 0..5u32 {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            idx.insert(ChainId(9), t, unit(v)).unwrap();
        }
        idx.remove_chain(ChainId(9));
        let after: Vec<_> = queries
            .iter()
            .map(|q| idx.find_nearest_excluding(q, ChainId(1)))
            .collect();
        assert_eq!(before, after);
    }
}
