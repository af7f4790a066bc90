//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Everything runs against the scripted mock backend with fixed seeds, so
//! the suite is deterministic and machine-independent.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use slimsc::backend::mock::MockBackend;
use slimsc::chain::{ChainId, ChainStatus, ReasoningChain, RunConfig, Strategy, Thought};
use slimsc::embedder::{normalize, EmbeddingProvider, FixtureEmbedder, MockEmbedder};
use slimsc::metrics::{categorize_similar_pairs, ReplayConfig};
use slimsc::pruner::{internal_diversity, select_chain_to_prune, PruneStrategy};
use slimsc::runner::{self, RunnerOptions};
use slimsc::sim_index::SimilarityIndex;
use slimsc::strategies::run_question;

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn chain_with_embeddings(id: u32, embeddings: Vec<Vec<f64>>) -> ReasoningChain {
    let mut chain = ReasoningChain::new(ChainId(id), "q", 0);
    for (i, embedding) in embeddings.into_iter().enumerate() {
        chain.thoughts.push(Thought {
            chain_id: ChainId(id),
            index: i as u32,
            text: format!("t{i}"),
            embedding,
            step_created: 0,
            token_offset: 0,
        });
    }
    chain
}

/// Criterion 1: internal diversity agrees with an independent brute-force
/// mean-pairwise-cosine oracle on 100 random chains within 1e-9, in < 5 s.
#[test]
fn acceptance_01_internal_diversity_oracle() {
    // Oracle with its own cosine, independent of the library path.
    fn oracle_mean_pairwise_cosine(embeddings: &[Vec<f64>]) -> f64 {
        let m = embeddings.len();
        if m < 2 {
            return 0.0;
        }
        let cos = |a: &[f64], b: &[f64]| {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for i in 0..a.len() {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            dot / (na.sqrt() * nb.sqrt())
        };
        let mut sum = 0.0;
        let mut count = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                sum += cos(&embeddings[i], &embeddings[j]);
                count += 1.0;
            }
        }
        sum / count
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let n_thoughts = rng.random_range(2..=30usize);
        let embeddings: Vec<Vec<f64>> =
            (0..n_thoughts).map(|_| unit_vector(&mut rng, 768)).collect();
        let chain = chain_with_embeddings(case, embeddings.clone());
        let got = internal_diversity(&chain);
        let expected = oracle_mean_pairwise_cosine(&embeddings);
        assert!(
            (got - expected).abs() <= 1e-9,
            "case {case}: got {got}, oracle {expected}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("ACCEPTANCE 01 PASS: internal diversity matches brute-force oracle (100 chains, <=1e-9, {elapsed:?})");
}

/// Criterion 2: the index agrees with a linear-scan oracle over 1,000
/// randomized insert/query/remove scripts, neighbor identity exact, < 10 s.
#[test]
fn acceptance_02_index_oracle() {
    /// Brute-force reference with its own storage and tie-breaking.
    struct NaiveIndex {
        entries: Vec<(u32, u32, Vec<f64>)>,
    }

    impl NaiveIndex {
        fn nearest_excluding(&self, query: &[f64], exclude: u32) -> Option<(u32, u32, f64)> {
            let mut best: Option<(u32, u32, f64)> = None;
            for (chain, idx, vector) in &self.entries {
                if *chain == exclude {
                    continue;
                }
                let sim: f64 = query.iter().zip(vector).map(|(a, b)| a * b).sum();
                let sim = sim.clamp(-1.0, 1.0);
                let replace = match best {
                    None => true,
                    Some((bc, bi, bs)) => {
                        sim > bs || (sim == bs && (*chain, *idx) < (bc, bi))
                    }
                };
                if replace {
                    best = Some((*chain, *idx, sim));
                }
            }
            best
        }
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let dim = 16;
    for script in 0..1000 {
        let mut index = SimilarityIndex::new(dim);
        let mut naive = NaiveIndex { entries: Vec::new() };
        let mut next_thought: std::collections::HashMap<u32, u32> = Default::default();
        let n_ops = rng.random_range(20..60);
        for op in 0..n_ops {
            match rng.random_range(0..100u32) {
                // Insert (sometimes duplicating an existing vector so the
                // tie-break path is exercised).
                0..=59 => {
                    if naive.entries.len() >= 500 {
                        continue;
                    }
                    let chain = rng.random_range(0..8u32);
                    let idx = next_thought.entry(chain).or_insert(0);
                    let vector = if !naive.entries.is_empty() && rng.random_range(0..5u32) == 0 {
                        let copy = rng.random_range(0..naive.entries.len());
                        naive.entries[copy].2.clone()
                    } else {
                        unit_vector(&mut rng, dim)
                    };
                    index.insert(ChainId(chain), *idx, vector.clone()).unwrap();
                    naive.entries.push((chain, *idx, vector));
                    *idx += 1;
                }
                // Query.
                60..=84 => {
                    let query = if !naive.entries.is_empty() && rng.random_range(0..3u32) == 0 {
                        naive.entries[rng.random_range(0..naive.entries.len())].2.clone()
                    } else {
                        unit_vector(&mut rng, dim)
                    };
                    let exclude = rng.random_range(0..8u32);
                    let got = index.find_nearest_excluding(&query, ChainId(exclude));
                    let expected = naive.nearest_excluding(&query, exclude);
                    match (got, expected) {
                        (None, None) => {}
                        (Some(n), Some((chain, idx, sim))) => {
                            assert_eq!(
                                (n.chain_id, n.thought_index),
                                (ChainId(chain), idx),
                                "script {script} op {op}: neighbor identity diverged"
                            );
                            assert!((n.similarity - sim).abs() <= 1e-9);
                        }
                        (got, expected) => {
                            panic!("script {script} op {op}: {got:?} vs {expected:?}")
                        }
                    }
                }
                // Remove a whole chain.
                _ => {
                    let chain = rng.random_range(0..8u32);
                    let removed = index.remove_chain(ChainId(chain));
                    let before = naive.entries.len();
                    naive.entries.retain(|(c, _, _)| *c != chain);
                    assert_eq!(removed, before - naive.entries.len());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 02 PASS: nearest-neighbor index matches linear-scan oracle (1000 scripts, {elapsed:?})");
}

/// Criterion 3: Slim-SC with tau = 1.01 is indistinguishable from SC on a
/// 10-question scripted suite (answers, tallies, token totals).
#[test]
fn acceptance_03_disable_equivalence() {
    let (backend, questions) = random_suite(303, 10, 4, true, 2);
    let embedder = MockEmbedder::new(7, 64);
    let mut diffs = 0;
    for question in &questions {
        let sc = run_question(
            question,
            "p",
            &config(Strategy::Sc, 4, 0.98, 2, 17),
            &backend,
            None,
        )
        .unwrap();
        let slim = run_question(
            question,
            "p",
            &config(Strategy::SlimScRp, 4, 1.01, 2, 17),
            &backend,
            Some(&embedder),
        )
        .unwrap();
        assert!(slim.result.prune_events.is_empty(), "tau > 1 must never prune");
        if slim.result.final_answer != sc.result.final_answer
            || slim.result.tally != sc.result.tally
            || slim.result.completion_tokens_total != sc.result.completion_tokens_total
        {
            diffs += 1;
        }
    }
    assert_eq!(diffs, 0, "disable-equivalence must produce zero diffs");
    println!("ACCEPTANCE 03 PASS: Slim-SC at tau=1.01 identical to SC on 10 scripted questions (0 diffs)");
}

/// Criterion 4: diversity pruning selects the higher-scoring chain in 100
/// randomized distinct-score pairs, and ties prune the chain with fewer
/// or equal thoughts.
#[test]
fn acceptance_04_selection_rule_conformance() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut distinct_checked = 0;
    let mut case = 0;
    while distinct_checked < 100 {
        case += 1;
        let dim = 8;
        let make = |rng: &mut ChaCha8Rng, id: u32| {
            let n = rng.random_range(2..7usize);
            chain_with_embeddings(id, (0..n).map(|_| unit_vector(rng, dim)).collect())
        };
        let a = make(&mut rng, 0);
        let b = make(&mut rng, 1);
        let score_a = internal_diversity(&a);
        let score_b = internal_diversity(&b);
        if (score_a - score_b).abs() <= 1e-12 {
            continue;
        }
        let victim = select_chain_to_prune(&a, &b, PruneStrategy::Diversity, &mut rng);
        let expected = if score_a > score_b { a.chain_id } else { b.chain_id };
        assert_eq!(victim, expected, "case {case}: higher score must be pruned");
        distinct_checked += 1;
    }

    // Exact ties: identical-thought chains score exactly 1.0 regardless of
    // length, so the fewer-or-equal-thoughts rule decides.
    for (len_a, len_b) in [(2usize, 5usize), (4, 4), (6, 3), (2, 2), (5, 2)] {
        let spike = {
            let mut v = vec![0.0; 8];
            v[0] = 1.0;
            v
        };
        let a = chain_with_embeddings(0, vec![spike.clone(); len_a]);
        let b = chain_with_embeddings(1, vec![spike.clone(); len_b]);
        let victim = select_chain_to_prune(&a, &b, PruneStrategy::Diversity, &mut rng);
        let expected = if len_a <= len_b { a.chain_id } else { b.chain_id };
        assert_eq!(victim, expected, "tie ({len_a}, {len_b}) must prune fewer-or-equal");
    }
    println!("ACCEPTANCE 04 PASS: diversity selection 100/100 on distinct scores, ties prune fewer-or-equal thoughts");
}

/// Criterion 5: with delay_steps = 20, no prune decision carries step <= 20
/// even though super-threshold similarities exist from the very first steps.
#[test]
fn acceptance_05_delay_conformance() {
    // Three chains emit the same segment at every step 1..40; every
    // cross-chain similarity is 1.0 from the moment two thoughts exist.
    let segment = "Wait, the same identical reasoning segment repeats here. ";
    let traces: Vec<_> = (0..3)
        .map(|chain| {
            let mut events: Vec<(&str, u64, u64)> = (1..=40).map(|s| (segment, 5, s)).collect();
            events.push(("</think>", 1, 41));
            trace("q", chain, events, " \\boxed{7}.")
        })
        .collect();
    let mut total_prunes = 0;
    for seed in 0..10 {
        let backend = backend_from(traces.clone());
        let embedder = MockEmbedder::new(3, 32);
        let out = run_question(
            &boxed_question("q", "7"),
            "p",
            &config(Strategy::SlimScRp, 3, 0.98, 20, seed),
            &backend,
            Some(&embedder),
        )
        .unwrap();
        assert!(
            !out.result.prune_events.is_empty(),
            "fixture must actually trigger pruning"
        );
        for event in &out.result.prune_events {
            assert!(
                event.step > 20,
                "seed {seed}: prune at step {} violates the delay",
                event.step
            );
        }
        total_prunes += out.result.prune_events.len();
    }
    println!("ACCEPTANCE 05 PASS: no prune at step <= 20 across 10 seeds ({total_prunes} prunes, all later)");
}

/// Criterion 6: when every chain mutually exceeds the threshold, at least
/// one chain survives and a final answer is emitted, for 100 seeds.
#[test]
fn acceptance_06_survivor_guard() {
    let segment = "Wait, every chain keeps producing this identical thought. ";
    let traces: Vec<_> = (0..5)
        .map(|chain| {
            let mut events: Vec<(&str, u64, u64)> = (1..=30).map(|s| (segment, 5, s)).collect();
            events.push(("</think>", 1, 31));
            trace("q", chain, events, " \\boxed{7}.")
        })
        .collect();
    for seed in 0..100 {
        let backend = backend_from(traces.clone());
        let embedder = MockEmbedder::new(9, 32);
        let out = run_question(
            &boxed_question("q", "7"),
            "p",
            &config(Strategy::SlimScRp, 5, 0.98, 2, seed),
            &backend,
            Some(&embedder),
        )
        .unwrap();
        let survivors = out
            .chains
            .iter()
            .filter(|c| c.status != ChainStatus::Pruned)
            .count();
        assert!(survivors >= 1, "seed {seed}: all chains pruned");
        assert_eq!(survivors, 5 - out.result.prune_events.len());
        assert!(
            out.result.final_answer.is_some(),
            "seed {seed}: no final answer emitted"
        );
    }
    println!("ACCEPTANCE 06 PASS: survivor guard held and an answer was emitted for 100/100 seeds");
}

/// Criterion 7: the derived ESC window matches the published values.
#[test]
fn acceptance_07_esc_window_rule() {
    for (n, expected) in [(64u32, 8u32), (8, 2), (16, 2)] {
        assert_eq!(slimsc::defaults::esc_window(n), expected, "N={n}");
        let cfg = RunConfig {
            strategy: Strategy::Esc,
            n_chains: n,
            ..RunConfig::default()
        }
        .validated()
        .unwrap();
        assert_eq!(cfg.effective_esc_window(), expected, "N={n}");
    }
    println!("ACCEPTANCE 07 PASS: ESC window rule gives W=8 for N=64, W=2 for N=8 and N=16");
}

/// Criterion 8: a unanimous first window stops ESC after exactly W chains
/// with exactly that window's tokens; a split first window keeps going.
#[test]
fn acceptance_08_esc_early_stop() {
    // Chain tokens are all distinct so totals pin down which chains ran.
    let make_traces = |answers: &[i64]| -> Vec<_> {
        answers
            .iter()
            .enumerate()
            .map(|(i, a)| {
                trace(
                    "q",
                    i as u32,
                    vec![("thinking through the problem.</think>", 10 + i as u64, 1)],
                    &format!(" \\boxed{{{a}}}."),
                )
            })
            .collect()
    };

    // Unanimous first window: N=8 derives W=2; chains 0 and 1 agree.
    let unanimous = make_traces(&[5, 5, 1, 2, 3, 4, 6, 7]);
    let backend = backend_from(unanimous);
    let out = run_question(
        &boxedquestion_helper(),
        "p",
        &config(Strategy::Esc, 8, 0.98, 20, 0),
        &backend,
        None,
    )
    .unwrap();
    let esc = out.esc.as_ref().unwrap();
    assert_eq!(esc.window_size, 2);
    assert!(esc.stopped_early);
    assert_eq!(out.result.chains_generated, 2);
    // Window token sum: chains 0 and 1, each events + answer_tokens(1).
    let expected_tokens = (10 + 1) + (11 + 1);
    assert_eq!(out.result.completion_tokens_total, expected_tokens);
    assert_eq!(out.result.final_answer.as_deref(), Some("5"));

    // Split first window: all answers distinct, generation must continue
    // to the full N.
    let split = make_traces(&[0, 1, 2, 3, 4, 5, 6, 7]);
    let backend = backend_from(split);
    let out = run_question(
        &boxedquestion_helper(),
        "p",
        &config(Strategy::Esc, 8, 0.98, 20, 0),
        &backend,
        None,
    )
    .unwrap();
    let esc = out.esc.as_ref().unwrap();
    assert!(!esc.stopped_early);
    assert_eq!(out.result.chains_generated, 8);
    let all_tokens: u64 = (0..8u64).map(|i| 10 + i + 1).sum();
    assert_eq!(out.result.completion_tokens_total, all_tokens);
    println!("ACCEPTANCE 08 PASS: unanimous window stops at W=2 chains with exact token sum; split window continues to N=8");
}

fn boxedquestion_helper() -> slimsc::chain::Question {
    boxed_question("q", "5")
}

/// Criterion 9: a 6-chain fixture where SC votes 3-2-1 for the wrong
/// answer, and pruning two redundant incorrect chains (pairwise 0.99)
/// flips the vote to the right answer.
#[test]
fn acceptance_09_vote_flip() {
    let dim = 16;
    // Three wrong-cluster thoughts pairwise at cosine 0.99 via a simplex
    // construction; right and outlier thoughts orthogonal to everything.
    let a = 0.99f64.sqrt();
    let b = 0.01f64.sqrt();
    let wrong_vec = |i: usize| {
        let mut v = vec![0.0; dim];
        v[0] = a;
        v[1 + i] = b;
        v
    };
    let one_hot = |i: usize| {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    };
    let mut embedder = FixtureEmbedder::new(dim);
    embedder.insert("wrong cluster reasoning variant one", wrong_vec(0));
    embedder.insert("wrong cluster reasoning variant two", wrong_vec(1));
    embedder.insert("wrong cluster reasoning variant three", wrong_vec(2));
    embedder.insert("right reasoning path alpha", one_hot(10));
    embedder.insert("right reasoning path beta", one_hot(11));
    embedder.insert("outlier reasoning path gamma", one_hot(12));

    // Sanity: the engineered pairwise similarity sits at 0.99.
    let vs = embedder
        .embed(&[
            "wrong cluster reasoning variant one".to_string(),
            "wrong cluster reasoning variant two".to_string(),
        ])
        .unwrap();
    let sim = slimsc::embedder::cosine(&vs[0], &vs[1]);
    assert!((sim - 0.99).abs() < 1e-12);

    // Wrong chains complete at steps 22/23/24 so each later thought meets
    // an already-indexed neighbor from the cluster.
    let traces = vec![
        trace("q", 0, vec![("wrong cluster reasoning variant one", 10, 21), ("</think>", 1, 22)], " \\boxed{1}."),
        trace("q", 1, vec![("wrong cluster reasoning variant two", 10, 21), ("</think>", 1, 23)], " \\boxed{1}."),
        trace("q", 2, vec![("wrong cluster reasoning variant three", 10, 21), ("</think>", 1, 24)], " \\boxed{1}."),
        trace("q", 3, vec![("right reasoning path alpha", 10, 21), ("</think>", 1, 25)], " \\boxed{7}."),
        trace("q", 4, vec![("right reasoning path beta", 10, 21), ("</think>", 1, 25)], " \\boxed{7}."),
        trace("q", 5, vec![("outlier reasoning path gamma", 10, 21), ("</think>", 1, 25)], " \\boxed{3}."),
    ];
    let question = boxed_question("q", "7");

    let sc = run_question(
        &question,
        "p",
        &config(Strategy::Sc, 6, 0.98, 20, 9),
        &backend_from(traces.clone()),
        None,
    )
    .unwrap();
    assert_eq!(sc.result.final_answer.as_deref(), Some("1"), "SC picks the wrong plurality");
    assert_eq!(sc.result.tally["1"], 3);
    assert_eq!(sc.result.tally["7"], 2);
    assert_eq!(sc.result.tally["3"], 1);
    assert_eq!(sc.result.is_correct, Some(false));

    let slim = run_question(
        &question,
        "p",
        &config(Strategy::SlimScRp, 6, 0.98, 20, 9),
        &backend_from(traces),
        Some(&embedder),
    )
    .unwrap();
    assert_eq!(slim.result.prune_events.len(), 2, "two redundant wrong chains pruned");
    for event in &slim.result.prune_events {
        assert!(event.similarity.unwrap() > 0.98);
        assert!(event.victim.0 <= 2, "victims come from the wrong cluster");
    }
    assert_eq!(slim.result.final_answer.as_deref(), Some("7"));
    assert_eq!(slim.result.is_correct, Some(true));
    assert_eq!(slim.result.tally["7"], 2);
    assert_eq!(slim.result.tally["1"], 1);
    println!("ACCEPTANCE 09 PASS: pruning two redundant incorrect chains flips the vote from wrong (3-2-1) to correct");
}

/// Criterion 10: across 50 randomized traces with a super-threshold pair,
/// Slim-SC never generates more tokens than SC, and never takes more
/// steps when a prune lands before SC's slowest completion.
#[test]
fn acceptance_10_efficiency_property() {
    let mut token_wins = 0;
    let mut latency_checked = 0;
    for seed in 0..50u64 {
        let (backend, questions) = random_suite(1000 + seed, 1, 4, true, 2);
        let question = &questions[0];
        let embedder = MockEmbedder::new(5, 64);
        let sc = run_question(
            question,
            "p",
            &config(Strategy::Sc, 4, 0.98, 2, seed),
            &backend,
            None,
        )
        .unwrap();
        let slim = run_question(
            question,
            "p",
            &config(Strategy::SlimScRp, 4, 0.98, 2, seed),
            &backend,
            Some(&embedder),
        )
        .unwrap();
        assert!(
            !slim.result.prune_events.is_empty(),
            "seed {seed}: the injected pair must trigger at least one prune"
        );
        assert!(
            slim.result.completion_tokens_total <= sc.result.completion_tokens_total,
            "seed {seed}: slim used more tokens ({} > {})",
            slim.result.completion_tokens_total,
            sc.result.completion_tokens_total
        );
        if slim.result.completion_tokens_total < sc.result.completion_tokens_total {
            token_wins += 1;
        }
        let first_prune = slim.result.prune_events.iter().map(|e| e.step).min().unwrap();
        if first_prune < sc.result.total_steps {
            assert!(
                slim.result.total_steps <= sc.result.total_steps,
                "seed {seed}: slim took more steps ({} > {})",
                slim.result.total_steps,
                sc.result.total_steps
            );
            latency_checked += 1;
        }
    }
    println!("ACCEPTANCE 10 PASS: tokens(slim) <= tokens(sc) on 50/50 traces ({token_wins} strict), step latency <= on all {latency_checked} prune-before-slowest cases");
}

/// Criterion 11: replaying detection without pruning on the hand-built
/// 4-chain fixture reproduces the hand-computed pair proportions exactly.
#[test]
fn acceptance_11_pair_replay() {
    let dim = 16;
    let one_hot = |i: usize| {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    };
    let pair_vec = |base: usize, ortho: usize, cos: f64| {
        let mut v = vec![0.0; dim];
        v[base] = cos;
        v[ortho] = (1.0 - cos * cos).sqrt();
        v
    };
    let mut mk = |id: u32, answer: &str, thoughts: Vec<(Vec<f64>, u64)>| {
        let mut chain = chain_with_embeddings(
            id,
            thoughts.iter().map(|(v, _)| v.clone()).collect(),
        );
        for (i, (_, offset)) in thoughts.iter().enumerate() {
            chain.thoughts[i].token_offset = *offset;
        }
        chain.transition(ChainStatus::CompletedReasoning).unwrap();
        chain.transition(ChainStatus::Finished).unwrap();
        chain.extracted_answer = Some(answer.to_string());
        chain
    };
    // Engineered pairs: CC via c1(A)-c2(B) at 0.99, II via c3(C)-c4(D) at
    // 0.985, CI via c1(E)-c3(F) at 0.95. One-hot first members keep every
    // similarity exact in floating point.
    let chains = vec![
        mk(1, "7", vec![(one_hot(0), 2100), (one_hot(4), 2500)]),        // A, E
        mk(2, "7", vec![(pair_vec(0, 1, 0.99), 2200)]),                  // B
        mk(3, "0", vec![(one_hot(2), 2300), (pair_vec(4, 5, 0.95), 2600)]), // C, F
        mk(4, "0", vec![(pair_vec(2, 3, 0.985), 2400)]),                 // D
    ];
    let got = categorize_similar_pairs(
        &chains,
        "7",
        &[0.95, 0.98],
        ReplayConfig { tokens_per_step: 100, delay_steps: 20 },
    )
    .unwrap();

    // tau = 0.95: CC (0.99) and II (0.985) qualify; CI sits exactly at the
    // threshold and strict comparison excludes it.
    assert_eq!(got[0].threshold, 0.95);
    assert_eq!(got[0].pair_count, 2);
    assert_eq!(got[0].proportions, Some((0.5, 0.5, 0.0)));

    // tau = 0.98: only the CC pair remains.
    assert_eq!(got[1].threshold, 0.98);
    assert_eq!(got[1].pair_count, 1);
    assert_eq!(got[1].proportions, Some((1.0, 0.0, 0.0)));

    for breakdown in &got {
        let (cc, ii, ci) = breakdown.proportions.unwrap();
        assert!((cc + ii + ci - 1.0).abs() <= 1e-9);
    }
    println!("ACCEPTANCE 11 PASS: pair replay matches hand computation at thresholds 0.95 and 0.98, proportions sum to 1");
}

/// Criterion 12: two full mock benchmark runs with the same seed produce
/// byte-identical report.json files.
#[test]
fn acceptance_12_benchmark_determinism() {
    fn full_run(dir: &std::path::Path) -> Vec<u8> {
        let (backend, questions) = random_suite(777, 5, 4, true, 2);
        let dataset = dataset_of(questions);
        let embedder = MockEmbedder::new(21, 64);
        let cfg = config(Strategy::SlimScRp, 4, 0.98, 2, 99);
        let outcome = runner::run(
            &cfg,
            &dataset,
            &backend as &MockBackend,
            Some(&embedder as &dyn EmbeddingProvider),
            dir,
            &RunnerOptions { dump_embeddings: true, ..Default::default() },
        )
        .unwrap();
        assert!(outcome.failures.is_empty());
        assert!(outcome.report.total_prune_events > 0, "runs must exercise pruning");
        std::fs::read(dir.join("report.json")).unwrap()
    }

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = full_run(dir_a.path());
    let b = full_run(dir_b.path());
    assert_eq!(a, b, "report.json must be byte-identical across same-seed runs");
    println!("ACCEPTANCE 12 PASS: same-seed benchmark runs produce byte-identical report.json ({} bytes)", a.len());
}
