//! Benchmark loading and prompt construction.
//!
//! Datasets are JSONL files with one question per line:
//!
//! ```json
//! {"id": "q1", "question": "What is ...?", "options": ["first", "second"], "answer": "A"}
//! {"id": "q2", "question": "Compute ...", "answer": "113"}
//! ```
//!
//! `options` is present exactly for multiple-choice datasets; letters are
//! assigned by position (A, B, C, ...). Upstream dumps vary in shape, so
//! the loader documents this one and callers convert to it.

use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

use crate::chain::{canonicalize_answer, AnswerFormat, Choice, Question, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetName {
    GpqaDiamond,
    Aime2024,
    AquaRat,
    Custom,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::GpqaDiamond => "gpqa-diamond",
            DatasetName::Aime2024 => "aime-2024",
            DatasetName::AquaRat => "aqua-rat",
            DatasetName::Custom => "custom",
        }
    }

    /// Answer format implied by the benchmark, when fixed.
    pub fn answer_format(self) -> Option<AnswerFormat> {
        match self {
            DatasetName::Aime2024 => Some(AnswerFormat::BoxedInteger),
            DatasetName::GpqaDiamond | DatasetName::AquaRat => {
                Some(AnswerFormat::MultipleChoiceLetter)
            }
            DatasetName::Custom => None,
        }
    }
}

impl std::str::FromStr for DatasetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gpqa-diamond" | "gpqa_diamond" | "gpqa" => Ok(DatasetName::GpqaDiamond),
            "aime-2024" | "aime_2024" | "aime" => Ok(DatasetName::Aime2024),
            "aqua-rat" | "aqua_rat" | "aqua" => Ok(DatasetName::AquaRat),
            "custom" => Ok(DatasetName::Custom),
            other => Err(format!("unknown dataset '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}: {detail}")]
    BadRow { row: usize, detail: String },
    #[error("duplicate question id {0:?}")]
    DuplicateId(String),
    #[error("custom datasets need an explicit answer format")]
    MissingFormat,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Prompt template with standard and concise variants. Slots:
/// `{question_text}` and `{options}`.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub standard: String,
    pub concise: String,
}

const AIME_STANDARD: &str = "Answer the following math problem.\n\
The last line of your response should be your integer answer within \\boxed{}.\n\
{question_text}\n\
Put your final answer within \\boxed{}\n\
Think step by step before answering.";

const AIME_CONCISE: &str = "Answer the following math problem.\n\
The last line of your response should be your integer answer within \\boxed{}.\n\
{question_text}\n\
Put your final answer within \\boxed{}\n\
Think step by step before answering. Be concise.";

const AQUA_STANDARD: &str = "Answer the following multiple-choice question.\n\
Think step-by-step to reach the solution.\n\
Conclude your response with a single line containing the answer letter formatted exactly as 'Answer: $LETTER'.\n\
\n\
Question: {question_text}\n\
\n\
Options:\n\
{options}";

const AQUA_CONCISE: &str = "Answer the following multiple-choice question.\n\
Think step-by-step to reach the solution. Be concise.\n\
Conclude your response with a single line containing the answer letter formatted exactly as 'Answer: $LETTER'.\n\
\n\
Question: {question_text}\n\
\n\
Options:\n\
{options}";

const GPQA_STANDARD: &str = "Answer the following multiple-choice science question.\n\
Think step-by-step to reach the solution.\n\
Conclude your response with a single line containing the answer letter formatted exactly as 'Answer: $LETTER'.\n\
\n\
Question: {question_text}\n\
\n\
Options: {options}";

const GPQA_CONCISE: &str = "Answer the following multiple-choice science question.\n\
Think step-by-step to reach the solution. Be concise.\n\
Conclude your response with a single line containing the answer letter formatted exactly as 'Answer: $LETTER'.\n\
\n\
Question: {question_text}\n\
\n\
Options: {options}";

impl PromptTemplate {
    /// Built-in template for a benchmark (by answer format for custom
    /// datasets: boxed-integer questions reuse the math template,
    /// multiple-choice ones the generic multiple-choice template).
    pub fn builtin(name: DatasetName, format: AnswerFormat) -> Self {
        match (name, format) {
            (DatasetName::Aime2024, _) | (DatasetName::Custom, AnswerFormat::BoxedInteger) => {
                Self {
                    standard: AIME_STANDARD.to_string(),
                    concise: AIME_CONCISE.to_string(),
                }
            }
            (DatasetName::GpqaDiamond, _) => Self {
                standard: GPQA_STANDARD.to_string(),
                concise: GPQA_CONCISE.to_string(),
            },
            (DatasetName::AquaRat, _) | (DatasetName::Custom, AnswerFormat::MultipleChoiceLetter) => {
                Self {
                    standard: AQUA_STANDARD.to_string(),
                    concise: AQUA_CONCISE.to_string(),
                }
            }
        }
    }

    /// Template from a user-supplied file; the concise variant appends
    /// "Be concise." to the end.
    pub fn from_text(text: &str) -> Self {
        let standard = text.trim_end().to_string();
        let concise = format!("{standard} Be concise.");
        Self { standard, concise }
    }

    /// Renders the prompt for a question. `CcotSc` uses the concise
    /// variant; every other strategy the standard one.
    pub fn render(&self, question: &Question, strategy: Strategy) -> String {
        let template = if strategy == Strategy::CcotSc {
            &self.concise
        } else {
            &self.standard
        };
        let options = question
            .options
            .iter()
            .map(|c| format!("{}) {}", c.letter, c.text))
            .collect::<Vec<_>>()
            .join("\n");
        template
            .replace("{question_text}", &question.text)
            .replace("{options}", &options)
    }
}

/// A loaded benchmark: validated questions plus their prompt template.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: DatasetName,
    pub answer_format: AnswerFormat,
    pub questions: Vec<Question>,
    pub template: PromptTemplate,
}

impl Dataset {
    pub fn prompt_for(&self, question: &Question, strategy: Strategy) -> String {
        self.template.render(question, strategy)
    }
}

#[derive(Deserialize)]
struct RawRow {
    id: String,
    question: String,
    #[serde(default)]
    options: Option<Vec<String>>,
    #[serde(default)]
    answer: Option<String>,
}

/// Strips a redundant leading letter label like `A)`, `(A)`, or `A.` when
/// it matches the position-assigned letter.
fn strip_option_label(text: &str, letter: char) -> String {
    let trimmed = text.trim();
    for prefix in [
        format!("{letter})"),
        format!("({letter})"),
        format!("{letter}."),
        format!("{letter}:"),
    ] {
        if let Some(rest) = trimmed.strip_prefix(&prefix) {
            return rest.trim_start().to_string();
        }
    }
    trimmed.to_string()
}

/// Loads and validates a JSONL dataset.
///
/// `custom_format` is required for [`DatasetName::Custom`] and ignored
/// otherwise.
pub fn load_dataset(
    path: &Path,
    name: DatasetName,
    custom_format: Option<AnswerFormat>,
) -> Result<Dataset, DatasetError> {
    let format = name
        .answer_format()
        .or(custom_format)
        .ok_or(DatasetError::MissingFormat)?;
    let content = std::fs::read_to_string(path)?;
    let mut questions = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in content.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(line)
            .map_err(|e| DatasetError::BadRow { row, detail: e.to_string() })?;
        if !seen.insert(raw.id.clone()) {
            return Err(DatasetError::DuplicateId(raw.id));
        }
        let options = match (&raw.options, format) {
            (Some(opts), AnswerFormat::MultipleChoiceLetter) => opts
                .iter()
                .enumerate()
                .map(|(j, text)| {
                    let letter = (b'A' + j as u8) as char;
                    Choice {
                        letter,
                        text: strip_option_label(text, letter),
                    }
                })
                .collect(),
            (Some(_), AnswerFormat::BoxedInteger) => {
                return Err(DatasetError::BadRow {
                    row,
                    detail: format!(
                        "question {} carries options but the dataset expects boxed integers",
                        raw.id
                    ),
                });
            }
            (None, AnswerFormat::MultipleChoiceLetter) => {
                return Err(DatasetError::BadRow {
                    row,
                    detail: format!("multiple-choice question {} has no options", raw.id),
                });
            }
            (None, AnswerFormat::BoxedInteger) => Vec::new(),
        };
        let ground_truth = match &raw.answer {
            Some(ans) => Some(canonicalize_answer(ans, format).ok_or_else(|| {
                DatasetError::BadRow {
                    row,
                    detail: format!("answer {ans:?} does not canonicalize"),
                }
            })?),
            None => None,
        };
        let question = Question {
            id: raw.id,
            text: raw.question,
            options,
            ground_truth,
            answer_format: format,
        };
        question
            .validate()
            .map_err(|e| DatasetError::BadRow { row, detail: e.to_string() })?;
        questions.push(question);
    }
    Ok(Dataset {
        name,
        answer_format: format,
        questions,
        template: PromptTemplate::builtin(name, format),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn loads_valid_rows() {
        let f = write_jsonl(&[
            r#"{"id": "q1", "question": "one?", "options": ["x", "y"], "answer": "A"}"#,
            r#"{"id": "q2", "question": "two?", "options": ["x", "y", "z"], "answer": "c"}"#,
            r#"{"id": "q3", "question": "three?", "options": ["x", "y"], "answer": "B"}"#,
        ]);
        let ds = load_dataset(f.path(), DatasetName::AquaRat, None).unwrap();
        assert_eq!(ds.questions.len(), 3);
        assert_eq!(ds.questions[1].ground_truth.as_deref(), Some("C"));
        assert_eq!(ds.questions[0].options[1].letter, 'B');
    }

    #[test]
    fn boxed_dataset_rejects_options() {
        let f = write_jsonl(&[
            r#"{"id": "q1", "question": "sum?", "options": ["1"], "answer": "3"}"#,
        ]);
        let err = load_dataset(f.path(), DatasetName::Aime2024, None).unwrap_err();
        assert!(matches!(err, DatasetError::BadRow { row: 1, .. }));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let f = write_jsonl(&[
            r#"{"id": "q1", "question": "fine", "answer": "1"}"#,
            "{not json",
        ]);
        let err = load_dataset(f.path(), DatasetName::Aime2024, None).unwrap_err();
        assert!(matches!(err, DatasetError::BadRow { row: 2, .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_jsonl(&[
            r#"{"id": "q1", "question": "a", "answer": "1"}"#,
            r#"{"id": "q1", "question": "b", "answer": "2"}"#,
        ]);
        assert!(matches!(
            load_dataset(f.path(), DatasetName::Aime2024, None),
            Err(DatasetError::DuplicateId(_))
        ));
    }

    #[test]
    fn custom_without_format_errors() {
        let f = write_jsonl(&[r#"{"id": "q1", "question": "a", "answer": "1"}"#]);
        assert!(matches!(
            load_dataset(f.path(), DatasetName::Custom, None),
            Err(DatasetError::MissingFormat)
        ));
        assert!(load_dataset(f.path(), DatasetName::Custom, Some(AnswerFormat::BoxedInteger)).is_ok());
    }

    #[test]
    fn option_labels_are_stripped() {
        assert_eq!(strip_option_label("A) 21 km", 'A'), "21 km");
        assert_eq!(strip_option_label("(B) text", 'B'), "text");
        assert_eq!(strip_option_label("plain", 'C'), "plain");
        // A mismatched label is content, not a label.
        assert_eq!(strip_option_label("B) text", 'A'), "B) text");
    }

    fn question(text: &str, options: &[&str]) -> Question {
        Question {
            id: "q".into(),
            text: text.into(),
            options: options
                .iter()
                .enumerate()
                .map(|(i, t)| Choice {
                    letter: (b'A' + i as u8) as char,
                    text: t.to_string(),
                })
                .collect(),
            ground_truth: None,
            answer_format: if options.is_empty() {
                AnswerFormat::BoxedInteger
            } else {
                AnswerFormat::MultipleChoiceLetter
            },
        }
    }

    #[test]
    fn math_prompt_renders_verbatim() {
        let t = PromptTemplate::builtin(DatasetName::Aime2024, AnswerFormat::BoxedInteger);
        let q = question("Find x.", &[]);
        let prompt = t.render(&q, Strategy::Sc);
        assert_eq!(
            prompt,
            "Answer the following math problem.\n\
             The last line of your response should be your integer answer within \\boxed{}.\n\
             Find x.\n\
             Put your final answer within \\boxed{}\n\
             Think step by step before answering."
        );
    }

    #[test]
    fn concise_math_prompt_appends_be_concise() {
        let t = PromptTemplate::builtin(DatasetName::Aime2024, AnswerFormat::BoxedInteger);
        let q = question("Find x.", &[]);
        let prompt = t.render(&q, Strategy::CcotSc);
        assert!(prompt.ends_with("Think step by step before answering. Be concise."));
    }

    #[test]
    fn multiple_choice_prompt_lists_options() {
        let t = PromptTemplate::builtin(DatasetName::AquaRat, AnswerFormat::MultipleChoiceLetter);
        let q = question("Which?", &["first", "second"]);
        let prompt = t.render(&q, Strategy::Sc);
        assert!(prompt.starts_with("Answer the following multiple-choice question.\n"));
        assert!(prompt.contains("formatted exactly as 'Answer: $LETTER'"));
        assert!(prompt.ends_with("Options:\nA) first\nB) second"));
    }

    #[test]
    fn science_prompt_distinct_preamble() {
        let t = PromptTemplate::builtin(DatasetName::GpqaDiamond, AnswerFormat::MultipleChoiceLetter);
        let q = question("Which?", &["first", "second"]);
        let prompt = t.render(&q, Strategy::Sc);
        assert!(prompt.starts_with("Answer the following multiple-choice science question.\n"));
        assert!(prompt.contains("Options: A) first\nB) second"));
        let concise = t.render(&q, Strategy::CcotSc);
        assert!(concise.contains("Think step-by-step to reach the solution. Be concise."));
    }

    #[test]
    fn file_template_gets_concise_suffix() {
        let t = PromptTemplate::from_text("Solve: {question_text}\n");
        assert_eq!(t.standard, "Solve: {question_text}");
        assert_eq!(t.concise, "Solve: {question_text} Be concise.");
    }
}
