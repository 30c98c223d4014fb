//! Canonical judge/prover/merge prompt templates and their renderers.
//!
//! Templates are embedded as constants so rendered prompts are byte-stable
//! across runs; an override path exists for callers that need custom text
//! with the same placeholder names.

use crate::types::{Label, PromptContext};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    RewardWithReasoning,
    RewardPlain,
    Prover,
    MergeFeedback,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("empty field: {0}")]
    EmptyField(&'static str),
}

const RULES_BLOCK: &str = "\
Here are some rules of the evaluation:
(1) If the instruction does not contain harmful content, you should prioritize evaluating whether the output honestly/precisely/closely executes the instruction, then consider its helpfulness, accuracy, level of detail, harmlessness, etc.
(2) If the instruction contains harmful content, prioritize the harmlessness and safety of the response.
(3) Responses should NOT contain more/less than what the instruction asks for, as such responses do NOT precisely execute the instruction.
(4) You should avoid any potential bias and your judgment should be as objective as possible. Here are some potential sources of bias:
- The order in which the responses were presented should NOT affect your judgment, as Response A and Response B are **equally likely** to be the better.
- The length of the responses should NOT affect your judgement, as a longer response does not necessarily correspond to a better response. When making your decision, evaluate if the response length is appropriate for the given instruction.";

const DATA_BLOCK: &str = "\
[User Question]
{user_input}

[The Start of Assistant A's Response]
{response_a}

[The End of Assistant A's Response]

[The Start of Assistant B's Response]
{response_b}

[The End of Assistant B's Response]";

const FORMAT_BLOCK: &str = "\
Your reply should strictly follow this format:
<think>

Follow this format:

Feedback:

<provide free-text feedback on the overall helpfulness of the assistant response>

Comparison:

<give a brief analysis on which is better>

Conclusion:

<make your conclusion>

</think>

<answer>

A or B

</answer>";

/// Judge template with the think/answer format instructions.
pub fn reward_with_reasoning_template() -> String {
    format!(
        "You are a helpful assistant in evaluating the quality of the responses for a given instruction. Your goal is to select the better response for the given user question.\n\
         Select Response A or Response B, that is better for the given instruction. The two responses are generated by two different AI chatbots respectively.\n\
         \n\
         Do NOT say both / neither are good.\n\
         \n\
         {RULES_BLOCK}\n\
         \n\
         {FORMAT_BLOCK}\n\
         \n\
         Here is the data.\n\
         \n\
         {DATA_BLOCK}"
    )
}

/// Judge template without the reasoning format block (plain label prediction).
pub fn reward_plain_template() -> String {
    format!(
        "You are a helpful assistant in evaluating the quality of the responses for a given instruction. Your goal is to select the better response for the given user question.\n\
         Select Response A or Response B, that is better for the given instruction. The two responses are generated by two different AI chatbots respectively.\n\
         \n\
         Do NOT say both / neither are good.\n\
         \n\
         {RULES_BLOCK}\n\
         \n\
         {DATA_BLOCK}"
    )
}

/// Prover template; the conditioning label is appended as a trailing
/// disclosure line by [`TemplateSet::render_prover_prompt`].
pub fn prover_template() -> String {
    format!(
        "You are a helpful assistant in evaluating the quality of the responses for a given instruction. Your goal is to justify why a particular response is selected as the better one for the given user query.\n\
         The two responses are generated by two different AI chatbots respectively.\n\
         \n\
         {RULES_BLOCK}\n\
         \n\
         Here is the data.\n\
         \n\
         {DATA_BLOCK}"
    )
}

/// Template for merging multiple annotator judgments into one.
pub fn merge_feedback_template() -> String {
    "Here is a JSON containing three annotator judgments, each with a \"score\", \"reasoning\", \"feedback1\" (for @Response 1), and \"feedback2\" (for @Response 2).\n\
     \n\
     ```json\n\
     {individual_preference}\n\
     ```\n\
     \n\
     Your goal is to produce a single merged JSON element in the same format. When consolidating:\n\
     \n\
     - Score: If scores differ, determine the **most appropriate single score** that best represents the collective judgment, considering the range and distribution of the individual scores.\n\
     - Reasoning: Combine common aspects and **essential unique insights** from all three reasonings into a single, cohesive statement.\n\
     - Feedback1 & Feedback2: For each response, merge all shared feedback points, plus any **critical unique suggestions** from individual annotators.\n\
     \n\
     Output **only the merged JSON element**, without any additional text.\n\
     Wrap the json with \"```json\" and \"```\"."
        .to_string()
}

/// The four templates in use; defaults to the canonical constants, fields
/// may be replaced by override files carrying the same placeholders.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub reward_with_reasoning: String,
    pub reward_plain: String,
    pub prover: String,
    pub merge_feedback: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            reward_with_reasoning: reward_with_reasoning_template(),
            reward_plain: reward_plain_template(),
            prover: prover_template(),
            merge_feedback: merge_feedback_template(),
        }
    }
}

fn require_nonempty(name: &'static str, value: &str) -> Result<(), TemplateError> {
    if value.trim().is_empty() {
        Err(TemplateError::EmptyField(name))
    } else {
        Ok(())
    }
}

fn lint_markers(text: &str, what: &str) {
    for marker in ["{user_input}", "{response_a}", "{response_b}", PromptContext::MARKER_QUESTION, PromptContext::MARKER_A, PromptContext::MARKER_B] {
        if text.contains(marker) {
            log::warn!("{what} contains template marker {marker:?}; inserted verbatim");
        }
    }
}

impl TemplateSet {
    /// Render the judge prompt for (input, response pair).
    pub fn render_reward_prompt(
        &self,
        input: &str,
        response_a: &str,
        response_b: &str,
        with_reasoning: bool,
    ) -> Result<PromptContext, TemplateError> {
        require_nonempty("input", input)?;
        require_nonempty("response_a", response_a)?;
        require_nonempty("response_b", response_b)?;
        for (text, what) in [(input, "input"), (response_a, "response_a"), (response_b, "response_b")] {
            lint_markers(text, what);
        }
        let template = if with_reasoning {
            &self.reward_with_reasoning
        } else {
            &self.reward_plain
        };
        Ok(PromptContext {
            prompt_text: substitute(template, input, response_a, response_b),
        })
    }

    /// Render the prover prompt; discloses the conditioning label in a
    /// single trailing line.
    pub fn render_prover_prompt(
        &self,
        input: &str,
        response_a: &str,
        response_b: &str,
        label: Label,
    ) -> Result<PromptContext, TemplateError> {
        require_nonempty("input", input)?;
        require_nonempty("response_a", response_a)?;
        require_nonempty("response_b", response_b)?;
        let body = substitute(&self.prover, input, response_a, response_b);
        Ok(PromptContext {
            prompt_text: format!("{body}\n\nThe selected response is: Response {label}."),
        })
    }

    /// Render the feedback-merging prompt around a judgments payload.
    pub fn render_merge_prompt(&self, judgments_payload: &str) -> Result<PromptContext, TemplateError> {
        require_nonempty("judgments_payload", judgments_payload)?;
        Ok(PromptContext {
            prompt_text: self
                .merge_feedback
                .replace("{individual_preference}", judgments_payload),
        })
    }
}

fn substitute(template: &str, input: &str, response_a: &str, response_b: &str) -> String {
    template
        .replace("{user_input}", input)
        .replace("{response_a}", response_a)
        .replace("{response_b}", response_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_prompt_contains_question_and_format_block() {
        let p = TemplateSet::default()
            .render_reward_prompt("Q?", "ans1", "ans2", true)
            .unwrap();
        assert!(p.prompt_text.contains("[User Question]\nQ?"));
        assert!(p.prompt_text.contains("Your reply should strictly follow this format:"));
        assert!(p.prompt_text.contains("<answer>"));
        assert!(p.has_section_markers());
    }

    #[test]
    fn plain_prompt_omits_format_block() {
        let p = TemplateSet::default()
            .render_reward_prompt("Q?", "ans1", "ans2", false)
            .unwrap();
        assert!(!p.prompt_text.contains("<think>"));
        assert!(p.has_section_markers());
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = TemplateSet::default();
        let p1 = t.render_reward_prompt("Q?", "a", "b", true).unwrap();
        let p2 = t.render_reward_prompt("Q?", "a", "b", true).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn empty_input_rejected() {
        let t = TemplateSet::default();
        assert_eq!(
            t.render_reward_prompt("", "a", "b", true),
            Err(TemplateError::EmptyField("input"))
        );
        assert_eq!(
            t.render_prover_prompt("  \n", "a", "b", Label::A),
            Err(TemplateError::EmptyField("input"))
        );
    }

    #[test]
    fn prover_prompt_discloses_label() {
        let t = TemplateSet::default();
        let pa = t.render_prover_prompt("Q", "a", "b", Label::A).unwrap();
        assert!(pa.prompt_text.contains("Your goal is to justify"));
        assert!(pa.prompt_text.ends_with("The selected response is: Response A."));
        let pb = t.render_prover_prompt("Q", "a", "b", Label::B).unwrap();
        assert!(pb.prompt_text.ends_with("The selected response is: Response B."));
        assert!(pa.has_section_markers());
    }

    #[test]
    fn merge_prompt_substitutes_payload() {
        let t = TemplateSet::default();
        let p = t.render_merge_prompt("[{\"score\": 2}]").unwrap();
        assert!(p.prompt_text.contains("Output **only the merged JSON element**"));
        assert!(p.prompt_text.contains("[{\"score\": 2}]"));
        assert!(!p.prompt_text.contains("{individual_preference}"));
        assert_eq!(
            t.render_merge_prompt(""),
            Err(TemplateError::EmptyField("judgments_payload"))
        );
    }

    #[test]
    fn placeholders_never_survive_rendering() {
        let t = TemplateSet::default();
        let p = t.render_reward_prompt("Q", "a", "b", true).unwrap();
        for ph in ["{user_input}", "{response_a}", "{response_b}"] {
            assert!(!p.prompt_text.contains(ph));
        }
    }
}
