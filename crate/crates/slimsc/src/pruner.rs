//! Chain pruning: the similarity-triggered pruning loop, the victim
//! selection rule, and the two naive ablation strategies.
//!
//! When a new thought from an active chain lands closer than `tau_sim`
//! (cosine) to some thought of another chain, the two chains form a
//! similar pair and one of them is pruned: either at random or the one
//! with the higher internal-diversity score (mean pairwise cosine of its
//! own thoughts — higher means less diverse). Pruning never fires during
//! the warm-up delay, never removes the last survivor, and never selects
//! a chain that already completed reasoning.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainId, ChainStatus, ReasoningChain};
use crate::embedder::cosine;
use crate::sim_index::SimilarityIndex;

/// Which rule picks the victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneStrategy {
    /// Uniform random victim within the similar pair.
    Random,
    /// Prune the pair member with the higher internal-diversity score.
    Diversity,
    /// Ablation: one random active chain per analysis step.
    GlobalRandom,
    /// Ablation: prune within the *least* similar cross-chain pair.
    LeastSimilar,
}

/// Record of one pruning event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub victim: ChainId,
    /// The other member of the pair; absent for global random pruning.
    pub survivor: Option<ChainId>,
    /// Indexed thought that matched the trigger, when similarity-driven.
    pub trigger: Option<(ChainId, u32)>,
    pub similarity: Option<f64>,
    pub strategy: PruneStrategy,
    pub step: u64,
}

/// Mean pairwise cosine similarity among one chain's thought embeddings
/// (0.0 for fewer than two thoughts). Higher means less internally
/// diverse.
pub fn internal_diversity(chain: &ReasoningChain) -> f64 {
    let embeddings: Vec<_> = chain
        .thoughts
        .iter()
        .map(|t| &t.embedding)
        .filter(|e| !e.is_empty())
        .collect();
    let m = embeddings.len();
    if m < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for l in 0..m {
        for n in (l + 1)..m {
            sum += cosine(embeddings[l], embeddings[n]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Picks which member of a similar pair to prune. `a` is the chain whose
/// new thought triggered the match.
pub fn select_chain_to_prune(
    a: &ReasoningChain,
    b: &ReasoningChain,
    strategy: PruneStrategy,
    rng: &mut ChaCha8Rng,
) -> ChainId {
    match strategy {
        PruneStrategy::Random => {
            if rng.random_range(0..2u32) == 0 {
                a.chain_id
            } else {
                b.chain_id
            }
        }
        PruneStrategy::Diversity => {
            let score_a = internal_diversity(a);
            let score_b = internal_diversity(b);
            if score_a > score_b {
                a.chain_id
            } else if score_b > score_a {
                b.chain_id
            } else if a.thoughts.len() <= b.thoughts.len() {
                a.chain_id
            } else {
                b.chain_id
            }
        }
        other => panic!("select_chain_to_prune called with step-level strategy {other:?}"),
    }
}

/// Pruning state for one question run: the similarity index plus the
/// thresholds that gate it.
pub struct PruningEngine {
    pub index: SimilarityIndex,
    tau_sim: f64,
    delay_steps: u64,
    strategy: PruneStrategy,
}

impl PruningEngine {
    pub fn new(dimension: usize, tau_sim: f64, delay_steps: u64, strategy: PruneStrategy) -> Self {
        Self {
            index: SimilarityIndex::new(dimension),
            tau_sim,
            delay_steps,
            strategy,
        }
    }

    pub fn strategy(&self) -> PruneStrategy {
        self.strategy
    }

    fn survivor_count(chains: &[ReasoningChain]) -> usize {
        chains.iter().filter(|c| c.is_survivor()).count()
    }

    fn chain_index(chains: &[ReasoningChain], id: ChainId) -> usize {
        chains
            .iter()
            .position(|c| c.chain_id == id)
            .expect("chain id present in run")
    }

    /// Processes the newest thought of `caller` (already appended to the
    /// chain, not yet indexed). Inside the pruning delay, or when no
    /// cross-chain neighbor exceeds `tau_sim`, the thought is indexed and
    /// no decision is made. Otherwise one member of the similar pair is
    /// pruned: its status flips to `Pruned`, its index entries vanish, and
    /// the new thought is indexed only if the caller survived. The caller
    /// must cancel the victim's generation stream on a returned decision.
    pub fn maybe_prune_on_new_thought(
        &mut self,
        chains: &mut [ReasoningChain],
        caller: ChainId,
        current_step: u64,
        rng: &mut ChaCha8Rng,
    ) -> Option<PruneDecision> {
        let caller_idx = Self::chain_index(chains, caller);
        let thought = chains[caller_idx]
            .thoughts
            .last()
            .expect("caller has a new thought");
        debug_assert!(!thought.embedding.is_empty(), "thought must be embedded");
        let thought_index = thought.index;
        let embedding = thought.embedding.clone();

        let mut decision = None;
        if matches!(
            self.strategy,
            PruneStrategy::Random | PruneStrategy::Diversity
        ) && current_step > self.delay_steps
        {
            decision = self.check_similar_pair(chains, caller_idx, &embedding, current_step, rng);
        }

        let caller_pruned = matches!(&decision, Some(d) if d.victim == caller);
        if !caller_pruned {
            self.index
                .insert(caller, thought_index, embedding)
                .expect("new thought key unique");
        }
        decision
    }

    fn check_similar_pair(
        &mut self,
        chains: &mut [ReasoningChain],
        caller_idx: usize,
        embedding: &[f64],
        current_step: u64,
        rng: &mut ChaCha8Rng,
    ) -> Option<PruneDecision> {
        let caller = chains[caller_idx].chain_id;
        let neighbor = self.index.find_nearest_excluding(embedding, caller)?;
        if neighbor.similarity <= self.tau_sim {
            return None;
        }
        if Self::survivor_count(chains) <= 1 {
            return None;
        }
        let neighbor_idx = Self::chain_index(chains, neighbor.chain_id);
        // A chain that finished its reasoning still triggers pruning but is
        // never the victim: cancelling a finished stream is meaningless, so
        // the active caller loses instead.
        let victim = if chains[neighbor_idx].status != ChainStatus::Active {
            caller
        } else {
            select_chain_to_prune(
                &chains[caller_idx],
                &chains[neighbor_idx],
                self.strategy,
                rng,
            )
        };
        let survivor = if victim == caller {
            neighbor.chain_id
        } else {
            caller
        };
        let victim_idx = Self::chain_index(chains, victim);
        chains[victim_idx]
            .mark_pruned(current_step)
            .expect("victim is active");
        self.index.remove_chain(victim);
        Some(PruneDecision {
            victim,
            survivor: Some(survivor),
            trigger: Some((neighbor.chain_id, neighbor.thought_index)),
            similarity: Some(neighbor.similarity),
            strategy: self.strategy,
            step: current_step,
        })
    }

    /// Ablation: prunes one uniformly random active chain this step.
    pub fn global_random_prune(
        &mut self,
        chains: &mut [ReasoningChain],
        current_step: u64,
        rng: &mut ChaCha8Rng,
    ) -> Option<PruneDecision> {
        if current_step <= self.delay_steps || Self::survivor_count(chains) <= 1 {
            return None;
        }
        let active: Vec<usize> = chains
            .iter()
            .enumerate()
            .filter(|(_, c)| c.status == ChainStatus::Active)
            .map(|(i, _)| i)
            .collect();
        if active.is_empty() {
            return None;
        }
        let victim_idx = active[rng.random_range(0..active.len())];
        let victim = chains[victim_idx].chain_id;
        chains[victim_idx]
            .mark_pruned(current_step)
            .expect("victim is active");
        self.index.remove_chain(victim);
        Some(PruneDecision {
            victim,
            survivor: None,
            trigger: None,
            similarity: None,
            strategy: PruneStrategy::GlobalRandom,
            step: current_step,
        })
    }

    /// Ablation: finds the cross-chain thought pair with minimum cosine
    /// similarity and prunes one of its chains at random (ties on
    /// similarity break to the lexicographically smallest key pair).
    pub fn least_similar_prune(
        &mut self,
        chains: &mut [ReasoningChain],
        current_step: u64,
        rng: &mut ChaCha8Rng,
    ) -> Option<PruneDecision> {
        if current_step <= self.delay_steps || Self::survivor_count(chains) <= 1 {
            return None;
        }
        let entries: Vec<(ChainId, u32, &Vec<f64>)> = self.index.iter().collect();
        let mut worst: Option<((ChainId, u32), (ChainId, u32), f64)> = None;
        for i in 0..entries.len() {
            for j in (i + 1)..entries.len() {
                let (ca, ia, va) = (&entries[i].0, entries[i].1, entries[i].2);
                let (cb, ib, vb) = (&entries[j].0, entries[j].1, entries[j].2);
                if ca == cb {
                    continue;
                }
                let sim = cosine(va, vb);
                let mut key_a = (*ca, ia);
                let mut key_b = (*cb, ib);
                if key_b < key_a {
                    std::mem::swap(&mut key_a, &mut key_b);
                }
                let better = match &worst {
                    None => true,
                    Some((wa, wb, ws)) => {
                        sim < *ws || (sim == *ws && (key_a, key_b) < (*wa, *wb))
                    }
                };
                if better {
                    worst = Some((key_a, key_b, sim));
                }
            }
        }
        let ((chain_a, idx_a), (chain_b, idx_b), sim) = worst?;
        let candidates: Vec<ChainId> = [chain_a, chain_b]
            .into_iter()
            .filter(|id| {
                chains[Self::chain_index(chains, *id)].status == ChainStatus::Active
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let victim = candidates[rng.random_range(0..candidates.len())];
        let survivor = if victim == chain_a { chain_b } else { chain_a };
        let trigger = if survivor == chain_a {
            (chain_a, idx_a)
        } else {
            (chain_b, idx_b)
        };
        let victim_idx = Self::chain_index(chains, victim);
        chains[victim_idx]
            .mark_pruned(current_step)
            .expect("victim is active");
        self.index.remove_chain(victim);
        Some(PruneDecision {
            victim,
            survivor: Some(survivor),
            trigger: Some(trigger),
            similarity: Some(sim),
            strategy: PruneStrategy::LeastSimilar,
            step: current_step,
        })
    }

    /// Drops a failed chain's entries so it can no longer trigger prunes.
    pub fn forget_chain(&mut self, chain_id: ChainId) {
        self.index.remove_chain(chain_id);
    }
}
