//! Parsing of think/answer judge output and the reversible
//! rationale <-> proof transformation.

use crate::types::{Label, RationaleBlock};
use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

pub const PROOF_OPENING: &str =
    "Here is my justification for why the selected response is the better one.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Section {
    Feedback,
    Comparison,
    Conclusion,
}

impl Section {
    pub fn name(&self) -> &'static str {
        match self {
            Section::Feedback => "Feedback",
            Section::Comparison => "Comparison",
            Section::Conclusion => "Conclusion",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing <think> block")]
    MissingThink,
    #[error("missing <answer> tag")]
    MissingAnswer,
    #[error("answer token not A or B")]
    BadAnswerToken,
    #[error("missing section {}", .0.name())]
    MissingSection(Section),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProofError {
    #[error("proof markers absent or out of order")]
    UnparseableProof,
}

fn think_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<think>(.*?)</think>").unwrap())
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<answer>(.*?)</answer>").unwrap())
}

fn header_re() -> &'static Regex {
    // Headers match case-insensitively at line starts, colon optional.
    // "Comparision" is accepted alongside "Comparison"; both occur in
    // model output in the wild.
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t]*(feedback|comparison|comparision|conclusion)[ \t]*:?").unwrap()
    })
}

/// Everything the analyzer could recover from raw judge output, plus every
/// structural problem it found. Shared by [`parse_rationale`] and
/// [`validate_rationale_rules`].
#[derive(Debug, Default)]
struct Analysis {
    feedback: Option<String>,
    comparison: Option<String>,
    conclusion: Option<String>,
    answer: Option<Label>,
    issues: Vec<ParseError>,
}

fn analyze(raw: &str) -> Analysis {
    let mut a = Analysis::default();

    let think_inner = match think_re().captures(raw) {
        Some(c) => c.get(1).unwrap().as_str().to_string(),
        None => {
            a.issues.push(ParseError::MissingThink);
            String::new()
        }
    };

    match answer_re().captures(raw) {
        Some(c) => match Label::parse(c.get(1).unwrap().as_str()) {
            Some(l) => a.answer = Some(l),
            None => a.issues.push(ParseError::BadAnswerToken),
        },
        None => a.issues.push(ParseError::MissingAnswer),
    }

    // Split the think body into labeled spans: each header owns the text up
    // to the next header.
    let mut spans: Vec<(Section, usize, usize)> = Vec::new();
    let matches: Vec<_> = header_re().captures_iter(&think_inner).collect();
    for (i, cap) in matches.iter().enumerate() {
        let section = match cap.get(1).unwrap().as_str().to_ascii_lowercase().as_str() {
            "feedback" => Section::Feedback,
            "comparison" | "comparision" => Section::Comparison,
            _ => Section::Conclusion,
        };
        let start = cap.get(0).unwrap().end();
        let end = matches
            .get(i + 1)
            .map(|n| n.get(0).unwrap().start())
            .unwrap_or(think_inner.len());
        spans.push((section, start, end));
    }
    for (section, start, end) in spans {
        let text = think_inner[start..end].trim().to_string();
        let slot = match section {
            Section::Feedback => &mut a.feedback,
            Section::Comparison => &mut a.comparison,
            Section::Conclusion => &mut a.conclusion,
        };
        if slot.is_none() && !text.is_empty() {
            *slot = Some(text);
        }
    }
    for (slot, section) in [
        (&a.feedback, Section::Feedback),
        (&a.comparison, Section::Comparison),
        (&a.conclusion, Section::Conclusion),
    ] {
        if slot.is_none() {
            a.issues.push(ParseError::MissingSection(section));
        }
    }
    a
}

/// Parse raw judge output into a [`RationaleBlock`]. Tolerates leading and
/// trailing text outside the tags.
pub fn parse_rationale(raw: &str) -> Result<RationaleBlock, ParseError> {
    let a = analyze(raw);
    if let Some(err) = a.issues.first() {
        return Err(err.clone());
    }
    Ok(RationaleBlock {
        feedback: a.feedback.unwrap(),
        comparison: a.comparison.unwrap(),
        conclusion: a.conclusion.unwrap(),
        answer: a.answer.unwrap(),
    })
}

/// Convert a rationale into the standardized proof text. Feedback and
/// comparison are carried verbatim; the verdict sentence is regenerated
/// from the answer label.
pub fn rationale_to_proof(r: &RationaleBlock) -> String {
    format!(
        "{PROOF_OPENING}\n\nFirst, {}\n\nThen, {}\n\nThus, Response {} is better.",
        r.feedback, r.comparison, r.answer
    )
}

/// Recover a rationale from a proof, conditioning on the known label.
///
/// The conclusion is synthesized (the proof carries the verdict in its
/// "Thus," sentence) and the answer is set to `label`, never re-predicted.
pub fn proof_to_rationale(proof: &str, label: Label) -> Result<RationaleBlock, ProofError> {
    // Prefer paragraph-aligned markers; fall back to bare markers so
    // non-canonical prover output still parses when the structure is there.
    let first = proof.find("First,").ok_or(ProofError::UnparseableProof)?;
    let after_first = first + "First,".len();
    let then_rel = proof[after_first..]
        .find("\n\nThen,")
        .map(|p| (p, "\n\nThen,".len()))
        .or_else(|| proof[after_first..].find("Then,").map(|p| (p, "Then,".len())))
        .ok_or(ProofError::UnparseableProof)?;
    let then_start = after_first + then_rel.0;
    let after_then = then_start + then_rel.1;
    let thus_rel = proof[after_then..]
        .find("\n\nThus,")
        .map(|p| (p, ()))
        .or_else(|| proof[after_then..].find("Thus,").map(|p| (p, ())));
    let comparison_end = thus_rel.map(|(p, _)| after_then + p).unwrap_or(proof.len());

    let feedback = proof[after_first..then_start].trim().to_string();
    let comparison = proof[after_then..comparison_end].trim().to_string();
    if feedback.is_empty() || comparison.is_empty() {
        return Err(ProofError::UnparseableProof);
    }
    Ok(RationaleBlock {
        feedback,
        comparison,
        conclusion: format!("Response {label} is better."),
        answer: label,
    })
}

/// Collapse runs of blank lines, trim line ends and the outer edges.
/// Round-trip comparisons are made modulo this normalization.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut blank_run = false;
    for line in text.lines() {
        let line = line.trim_end();
        if line.trim().is_empty() {
            blank_run = true;
            continue;
        }
        if blank_run && !out.is_empty() {
            out.push("");
        }
        blank_run = false;
        out.push(line);
    }
    out.join("\n")
}

/// Normalized structural equality between rationales.
pub fn rationales_equivalent(a: &RationaleBlock, b: &RationaleBlock) -> bool {
    a.answer == b.answer
        && normalize_whitespace(&a.feedback) == normalize_whitespace(&b.feedback)
        && normalize_whitespace(&a.comparison) == normalize_whitespace(&b.comparison)
        && normalize_whitespace(&a.conclusion) == normalize_whitespace(&b.conclusion)
}

#[derive(Debug, Clone)]
pub struct RuleConfig {
    pub max_tokens: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { max_tokens: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RuleViolation {
    TooLong,
    MissingThink,
    MissingAnswer,
    BadAnswerToken,
    MissingSection(Section),
}

/// Rule-based checks on raw judge output: length cap, parseability, answer
/// token presence, and the three-section structure. Empty report means the
/// output survives the format filter.
pub fn validate_rationale_rules(
    raw: &str,
    parsed: Option<&RationaleBlock>,
    token_count: usize,
    cfg: &RuleConfig,
) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    if token_count > cfg.max_tokens {
        out.push(RuleViolation::TooLong);
    }
    if parsed.is_some() {
        return out;
    }
    for issue in analyze(raw).issues {
        out.push(match issue {
            ParseError::MissingThink => RuleViolation::MissingThink,
            ParseError::MissingAnswer => RuleViolation::MissingAnswer,
            ParseError::BadAnswerToken => RuleViolation::BadAnswerToken,
            ParseError::MissingSection(s) => RuleViolation::MissingSection(s),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "<think>Feedback: fA. fB.\nComparison: A wins.\nConclusion: Response A is better.</think><answer>A</answer>";

    #[test]
    fn parses_well_formed_output() {
        let r = parse_rationale(WELL_FORMED).unwrap();
        assert_eq!(r.feedback, "fA. fB.");
        assert_eq!(r.comparison, "A wins.");
        assert_eq!(r.conclusion, "Response A is better.");
        assert_eq!(r.answer, Label::A);
    }

    #[test]
    fn tolerates_surrounding_text_and_casing() {
        let raw = format!("Sure, here is my verdict.\n{WELL_FORMED}\nDone.");
        assert!(parse_rationale(&raw).is_ok());
        let lower = "<think>feedback: x\ncomparision: y\nconclusion: z</think><answer> B </answer>";
        let r = parse_rationale(lower).unwrap();
        assert_eq!(r.answer, Label::B);
        assert_eq!(r.comparison, "y");
    }

    #[test]
    fn empty_input_is_missing_think() {
        assert_eq!(parse_rationale(""), Err(ParseError::MissingThink));
    }

    #[test]
    fn bad_answer_token() {
        let raw = "<think>Feedback: x\nComparison: y\nConclusion: z</think><answer>C</answer>";
        assert_eq!(parse_rationale(raw), Err(ParseError::BadAnswerToken));
    }

    #[test]
    fn proof_round_trip() {
        let r = RationaleBlock {
            feedback: "Response A is mostly helpful. Response B is partially helpful.".into(),
            comparison: "Response A is better than Response B. It follows the prompt.".into(),
            conclusion: "Response A is better.".into(),
            answer: Label::A,
        };
        let proof = rationale_to_proof(&r);
        assert!(proof.starts_with(PROOF_OPENING));
        assert!(proof.contains("First, Response A is mostly helpful."));
        let back = proof_to_rationale(&proof, r.answer).unwrap();
        assert!(rationales_equivalent(&back, &r));
    }

    #[test]
    fn proof_missing_then_marker() {
        assert_eq!(
            proof_to_rationale("First, something good.", Label::A),
            Err(ProofError::UnparseableProof)
        );
    }

    #[test]
    fn rules_collect_all_violations() {
        let raw = "<think>Feedback: x</think>";
        let report = validate_rationale_rules(raw, None, 10, &RuleConfig::default());
        assert_eq!(
            report,
            vec![
                RuleViolation::MissingAnswer,
                RuleViolation::MissingSection(Section::Comparison),
                RuleViolation::MissingSection(Section::Conclusion),
            ]
        );
    }

    #[test]
    fn rules_flag_overlong_output() {
        let parsed = parse_rationale(WELL_FORMED).unwrap();
        assert!(validate_rationale_rules(WELL_FORMED, Some(&parsed), 900, &RuleConfig::default())
            .is_empty());
        assert_eq!(
            validate_rationale_rules(WELL_FORMED, Some(&parsed), 5000, &RuleConfig::default()),
            vec![RuleViolation::TooLong]
        );
    }

    #[test]
    fn parse_never_panics_on_arbitrary_bytes() {
        for raw in ["<think>", "</think><think>", "<answer>", "\u{0000}\u{FFFD}<think></think>"] {
            let _ = parse_rationale(raw);
        }
    }
}
