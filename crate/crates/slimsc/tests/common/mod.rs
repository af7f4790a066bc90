//! Shared fixtures for the integration suites: synthetic questions,
//! scripted traces, and randomized trace generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slimsc::backend::mock::{ChainTrace, MockBackend, TraceEvent, TraceSet};
use slimsc::chain::{AnswerFormat, Question, RunConfig, Strategy};
use slimsc::dataset::{Dataset, DatasetName, PromptTemplate};

pub fn boxed_question(id: &str, truth: &str) -> Question {
    Question {
        id: id.to_string(),
        text: format!("synthetic question {id}"),
        options: Vec::new(),
        ground_truth: Some(truth.to_string()),
        answer_format: AnswerFormat::BoxedInteger,
    }
}

pub fn trace(
    question_id: &str,
    chain: u32,
    events: Vec<(&str, u64, u64)>,
    answer: &str,
) -> ChainTrace {
    ChainTrace {
        question_id: question_id.to_string(),
        chain,
        events: events
            .into_iter()
            .map(|(text, tokens, step)| TraceEvent {
                text: text.to_string(),
                tokens,
                step,
            })
            .collect(),
        answer_text: answer.to_string(),
        answer_tokens: 1,
    }
}

pub fn backend_from(traces: Vec<ChainTrace>) -> MockBackend {
    let mut set = TraceSet::new();
    for t in traces {
        set.push(t).unwrap();
    }
    MockBackend::new(set)
}

pub fn config(strategy: Strategy, n: u32, tau: f64, delay: u64, seed: u64) -> RunConfig {
    RunConfig {
        strategy,
        n_chains: n,
        tau_sim: tau,
        delay_steps: delay,
        seed,
        ..RunConfig::default()
    }
    .validated()
    .unwrap()
}

pub fn dataset_of(questions: Vec<Question>) -> Dataset {
    Dataset {
        name: DatasetName::Custom,
        answer_format: AnswerFormat::BoxedInteger,
        questions,
        template: PromptTemplate::builtin(DatasetName::Custom, AnswerFormat::BoxedInteger),
    }
}

const VOCAB: &[&str] = &[
    "gradient", "triangle", "modulus", "sequence", "factor", "binomial", "quotient", "lattice",
    "integral", "symmetry", "residue", "polygon", "interval", "divisor", "parity", "vertex",
];

/// A randomized scripted trace for one question. Every emitted segment is
/// comfortably longer than the merge threshold so thought texts are
/// predictable. When `inject_similar` is set, two chains both carry one
/// identical segment that surfaces after `delay` steps, guaranteeing at
/// least one super-threshold pair.
pub fn random_traces(
    rng: &mut ChaCha8Rng,
    question_id: &str,
    n_chains: u32,
    inject_similar: bool,
    delay: u64,
) -> Vec<ChainTrace> {
    let mut word = |rng: &mut ChaCha8Rng| VOCAB[rng.random_range(0..VOCAB.len())];
    let mut traces = Vec::new();
    let injected_pair = if inject_similar && n_chains >= 2 {
        let a = rng.random_range(0..n_chains);
        let mut b = rng.random_range(0..n_chains);
        while b == a {
            b = rng.random_range(0..n_chains);
        }
        Some((a, b))
    } else {
        None
    };
    let shared = "Wait, the very same shared reasoning segment appears here. ";
    for chain in 0..n_chains {
        let n_events = rng.random_range(3..6u64);
        let mut events: Vec<(String, u64, u64)> = Vec::new();
        let mut step = 0;
        for e in 0..n_events {
            step += rng.random_range(1..3u64);
            let inject_here = injected_pair
                .is_some_and(|(a, b)| (chain == a || chain == b) && e == n_events - 1);
            let text = if inject_here {
                // Land strictly after the delay so the pair is prunable.
                step = step.max(delay + 1 + chain as u64);
                shared.to_string()
            } else {
                format!(
                    "Wait, considering the {} and the {} of the {} now. ",
                    word(rng),
                    word(rng),
                    word(rng)
                )
            };
            events.push((text, rng.random_range(5..40u64), step));
        }
        step += 1;
        events.push(("</think>".to_string(), 1, step));
        let answer = rng.random_range(0..3u32);
        traces.push(ChainTrace {
            question_id: question_id.to_string(),
            chain,
            events: events
                .into_iter()
                .map(|(text, tokens, step)| TraceEvent { text, tokens, step })
                .collect(),
            answer_text: format!(" The answer is \\boxed{{{answer}}}."),
            answer_tokens: 2,
        });
    }
    traces
}

/// Seeded trace set over several questions, one backend for all of them.
pub fn random_suite(
    seed: u64,
    n_questions: usize,
    n_chains: u32,
    inject_similar: bool,
    delay: u64,
) -> (MockBackend, Vec<Question>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TraceSet::new();
    let mut questions = Vec::new();
    for q in 0..n_questions {
        let id = format!("q{q}");
        for t in random_traces(&mut rng, &id, n_chains, inject_similar, delay) {
            set.push(t).unwrap();
        }
        questions.push(boxed_question(&id, "1"));
    }
    (MockBackend::new(set), questions)
}
