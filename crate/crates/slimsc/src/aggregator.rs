//! Answer extraction from completed chains and plurality voting.
//!
//! Extraction is last-match: chains revise their answers mid-reasoning
//! and the prompt puts the final answer on the last line, so the last
//! boxed expression (or last `Answer: X` line) wins. Unparseable chains
//! are excluded from the tally and counted separately; they are never
//! treated as wrong answers.

use std::collections::BTreeMap;

use crate::chain::{canonicalize_answer, AnswerFormat, ReasoningChain, VoteOutcome};

/// Extraction rule for one answer format. For multiple choice,
/// `allowed_letters` narrows extraction to the question's actual option
/// range (A-D for four options, A-E for five).
#[derive(Debug, Clone)]
pub struct ExtractionRule {
    pub format: AnswerFormat,
    pub allowed_letters: Option<Vec<char>>,
}

impl ExtractionRule {
    pub fn boxed_integer() -> Self {
        Self {
            format: AnswerFormat::BoxedInteger,
            allowed_letters: None,
        }
    }

    pub fn multiple_choice(allowed: Vec<char>) -> Self {
        Self {
            format: AnswerFormat::MultipleChoiceLetter,
            allowed_letters: if allowed.is_empty() { None } else { Some(allowed) },
        }
    }
}

/// Extracts the canonical answer from a completed chain's full text, or
/// `None` when nothing parseable is present.
pub fn extract_answer(chain_text: &str, rule: &ExtractionRule) -> Option<String> {
    match rule.format {
        AnswerFormat::BoxedInteger => {
            let content = last_boxed_content(chain_text)?;
            canonicalize_answer(&content, AnswerFormat::BoxedInteger)
        }
        AnswerFormat::MultipleChoiceLetter => {
            let raw = last_answer_line(chain_text)?;
            let canonical = canonicalize_answer(&raw, AnswerFormat::MultipleChoiceLetter)?;
            match &rule.allowed_letters {
                Some(allowed) => {
                    let letter = canonical.chars().next()?;
                    allowed.contains(&letter).then_some(canonical)
                }
                None => Some(canonical),
            }
        }
    }
}

/// Content of the last `\boxed{...}` in `text`, with balanced braces.
fn last_boxed_content(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let start = text.rfind(MARKER)?;
    let inner_start = start + MARKER.len();
    let mut depth = 1u32;
    for (i, c) in text[inner_start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[inner_start..inner_start + i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

/// Letter from the last line shaped like `Answer: X` (tolerating `$X`,
/// trailing punctuation, and surrounding whitespace).
fn last_answer_line(text: &str) -> Option<String> {
    for line in text.lines().rev() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix("Answer:") else {
            continue;
        };
        let candidate = rest
            .trim()
            .trim_start_matches('$')
            .trim_end_matches(['.', ')', '*'])
            .trim();
        if !candidate.is_empty() {
            return Some(candidate.to_string());
        }
    }
    None
}

/// Plurality vote over canonical answers listed in chain-completion
/// order. Ties at the maximum count break toward the answer whose first
/// supporting chain completed earliest; `tie_broken` records that a tie
/// occurred.
pub fn plurality_vote(answers: &[String]) -> VoteOutcome {
    let mut tally: BTreeMap<String, u32> = BTreeMap::new();
    for answer in answers {
        *tally.entry(answer.clone()).or_insert(0) += 1;
    }
    let Some(max_count) = tally.values().copied().max() else {
        return VoteOutcome::empty();
    };
    let leaders: Vec<&String> = tally
        .iter()
        .filter(|(_, &count)| count == max_count)
        .map(|(answer, _)| answer)
        .collect();
    let tie_broken = leaders.len() > 1;
    let final_answer = answers
        .iter()
        .find(|a| leaders.contains(a))
        .cloned();
    VoteOutcome {
        final_answer,
        tally,
        candidate_count: answers.len() as u32,
        tie_broken,
    }
}

/// Composition of the final candidate pool relative to the ground truth:
/// the proportion of voting chains that answered correctly, and whether
/// any did. `None` when no chain votes.
pub fn candidate_pool_stats(
    chains: &[ReasoningChain],
    ground_truth: &str,
) -> Option<(f64, bool)> {
    let voting: Vec<&ReasoningChain> = chains.iter().filter(|c| c.is_voting()).collect();
    if voting.is_empty() {
        return None;
    }
    let correct = voting
        .iter()
        .filter(|c| c.extracted_answer.as_deref() == Some(ground_truth))
        .count();
    Some((correct as f64 / voting.len() as f64, correct > 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainId, ChainStatus};
    use proptest::prelude::*;

    fn strs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn extracts_last_boxed_integer() {
        let rule = ExtractionRule::boxed_integer();
        assert_eq!(
            extract_answer("...so \\boxed{113}.", &rule),
            Some("113".to_string())
        );
    }

    #[test]
    fn last_boxed_value_wins() {
        let rule = ExtractionRule::boxed_integer();
        let text = "first guess \\boxed{10}, but actually \\boxed{42}";
        assert_eq!(extract_answer(text, &rule), Some("42".to_string()));
    }

    #[test]
    fn boxed_handles_nested_braces_and_non_integers() {
        let rule = ExtractionRule::boxed_integer();
        assert_eq!(extract_answer("\\boxed{\\text{42}}", &rule), None);
        assert_eq!(extract_answer("no box at all", &rule), None);
        assert_eq!(extract_answer("\\boxed{042}", &rule), Some("42".to_string()));
    }

    #[test]
    fn extracts_answer_letter_line() {
        let rule = ExtractionRule::multiple_choice(vec!['A', 'B', 'C', 'D']);
        assert_eq!(
            extract_answer("reasoning...\nAnswer: C", &rule),
            Some("C".to_string())
        );
        assert_eq!(
            extract_answer("Answer: A\nmore words\nAnswer: b.", &rule),
            Some("B".to_string())
        );
        assert_eq!(extract_answer("Answer: $D", &rule), Some("D".to_string()));
    }

    #[test]
    fn letter_outside_option_range_rejected() {
        let rule = ExtractionRule::multiple_choice(vec!['A', 'B', 'C', 'D']);
        assert_eq!(extract_answer("Answer: E", &rule), None);
        let wide = ExtractionRule::multiple_choice(vec!['A', 'B', 'C', 'D', 'E']);
        assert_eq!(extract_answer("Answer: E", &wide), Some("E".to_string()));
    }

    #[test]
    fn extraction_is_idempotent_on_canonical_output() {
        let rule = ExtractionRule::boxed_integer();
        let first = extract_answer("\\boxed{042}", &rule).unwrap();
        assert_eq!(
            canonicalize_answer(&first, AnswerFormat::BoxedInteger),
            Some(first.clone())
        );
    }

    #[test]
    fn vote_majority() {
        let outcome = plurality_vote(&strs(&["A", "A", "B"]));
        assert_eq!(outcome.final_answer, Some("A".to_string()));
        assert_eq!(outcome.tally.get("A"), Some(&2));
        assert_eq!(outcome.tally.get("B"), Some(&1));
        assert_eq!(outcome.candidate_count, 3);
        assert!(!outcome.tie_broken);
    }

    #[test]
    fn vote_tie_breaks_to_earliest_completion() {
        // Input order is completion order: A's chain finished first.
        let outcome = plurality_vote(&strs(&["A", "B"]));
        assert_eq!(outcome.final_answer, Some("A".to_string()));
        assert!(outcome.tie_broken);
        let outcome = plurality_vote(&strs(&["B", "A"]));
        assert_eq!(outcome.final_answer, Some("B".to_string()));
    }

    #[test]
    fn vote_empty_pool() {
        let outcome = plurality_vote(&[]);
        assert_eq!(outcome.final_answer, None);
        assert_eq!(outcome.candidate_count, 0);
        assert!(!outcome.tie_broken);
    }

    fn voting_chain(id: u32, answer: Option<&str>) -> ReasoningChain {
        let mut chain = ReasoningChain::new(ChainId(id), "q", 0);
        chain.transition(ChainStatus::CompletedReasoning).unwrap();
        chain.transition(ChainStatus::Finished).unwrap();
        chain.extracted_answer = answer.map(str::to_string);
        chain
    }

    #[test]
    fn pool_stats_examples() {
        let chains: Vec<ReasoningChain> = [Some("7"), Some("7"), Some("7"), Some("9")]
            .iter()
            .enumerate()
            .map(|(i, a)| voting_chain(i as u32, *a))
            .collect();
        assert_eq!(candidate_pool_stats(&chains, "7"), Some((0.75, true)));

        let wrong: Vec<ReasoningChain> = (0..5).map(|i| voting_chain(i, Some("0"))).collect();
        assert_eq!(candidate_pool_stats(&wrong, "7"), Some((0.0, false)));
    }

    #[test]
    fn pool_stats_survivors_only() {
        let mut pruned = ReasoningChain::new(ChainId(0), "q", 0);
        pruned.mark_pruned(21).unwrap();
        let survivor = voting_chain(1, Some("7"));
        let chains = vec![pruned, survivor];
        assert_eq!(candidate_pool_stats(&chains, "7"), Some((1.0, true)));
    }

    #[test]
    fn pool_stats_empty_pool() {
        let mut pruned = ReasoningChain::new(ChainId(0), "q", 0);
        pruned.mark_pruned(5).unwrap();
        assert_eq!(candidate_pool_stats(&[pruned], "7"), None);
    }

    proptest! {
        // Permuting answers with a unique maximum never changes the winner.
        #[test]
        fn vote_permutation_invariant(mut answers in proptest::collection::vec("[ab]", 1..12)) {
            answers.push("a".to_string());
            answers.push("a".to_string());
            let count = |xs: &[String], v: &str| xs.iter().filter(|x| x.as_str() == v).count();
            prop_assume!(count(&answers, "a") != count(&answers, "b"));
            let base = plurality_vote(&answers);
            let mut reversed = answers.clone();
            reversed.reverse();
            let flipped = plurality_vote(&reversed);
            prop_assert_eq!(base.final_answer, flipped.final_answer);
        }

        // Adding copies of the current winner never changes the winner.
        #[test]
        fn vote_winner_monotonic(answers in proptest::collection::vec("[abc]", 1..12), extra in 1usize..4) {
            let base = plurality_vote(&answers);
            let winner = base.final_answer.clone().unwrap();
            let mut more = answers.clone();
            for _ in 0..extra {
                more.push(winner.clone());
            }
            prop_assert_eq!(plurality_vote(&more).final_answer, Some(winner));
        }

        // The tally always sums to the candidate count, and the winner
        // attains the maximum tally.
        #[test]
        fn vote_tally_invariants(answers in proptest::collection::vec("[abcd]", 0..16)) {
            let outcome = plurality_vote(&answers);
            let total: u32 = outcome.tally.values().sum();
            prop_assert_eq!(total, outcome.candidate_count);
            if let Some(winner) = &outcome.final_answer {
                let max = outcome.tally.values().copied().max().unwrap();
                prop_assert_eq!(outcome.tally[winner], max);
            }
        }
    }
}
