//! Prompt construction and LLM-output parsing for the two LLM stages.
//!
//! Templates are plain text with named slots (`{query_text}`,
//! `{image_caption}`, `{documents}`, `{k_f}`) and carry a sentinel marker on
//! the first line so the mock oracle can recognize the request kind without
//! text heuristics. Rendering is deterministic: equal inputs produce
//! byte-identical prompts, which is what makes response caching sound.

use crate::error::{HiveError, Result};
use sha2::{Digest, Sha256};

pub const HYPOTHESIS_SENTINEL: &str = "[[HIVE-HYPOTHESIS-V1]]";
pub const VERIFY_SENTINEL: &str = "[[HIVE-VERIFY-V1]]";

pub const QUERY_TEXT_HEADER: &str = "QUERY TEXT:";
pub const CAPTION_HEADER: &str = "IMAGE CAPTION:";
pub const REQUESTED_HEADER: &str = "REQUESTED RESULTS:";
const EMPTY_CAPTION_SLOT: &str = "(no image provided)";
const TRUNCATION_MARK: &str = " […]";

const DEFAULT_HYPOTHESIS: &str = include_str!("../templates/hypothesis_v1.txt");
const DEFAULT_VERIFY: &str = include_str!("../templates/verify_v1.txt");

/// Character budgets applied while rendering. Documents are truncated
/// per-document first; the whole prompt is clipped to `total_chars` only as
/// a last resort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptBudget {
    pub per_doc_chars: usize,
    pub total_chars: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self {
            per_doc_chars: 2000,
            total_chars: 60000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Hypothesis,
    Verify,
}

/// A named, versioned prompt template.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub version: String,
    body: String,
}

impl PromptTemplate {
    pub fn builtin(kind: PromptKind) -> Self {
        match kind {
            PromptKind::Hypothesis => Self {
                kind,
                version: format!("hypothesis_v1:{}", short_digest(DEFAULT_HYPOTHESIS)),
                body: DEFAULT_HYPOTHESIS.to_string(),
            },
            PromptKind::Verify => Self {
                kind,
                version: format!("verify_v1:{}", short_digest(DEFAULT_VERIFY)),
                body: DEFAULT_VERIFY.to_string(),
            },
        }
    }

    /// Load a custom template from a file. The version records the file stem
    /// plus a content digest so traces pin the exact wording used.
    pub fn from_file(kind: PromptKind, path: &std::path::Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| HiveError::io(format!("reading template {}", path.display()), e))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "custom".to_string());
        Ok(Self {
            kind,
            version: format!("{stem}:{}", short_digest(&body)),
            body,
        })
    }
}

/// The hypothesis and verify templates used by one run.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub hypothesis: PromptTemplate,
    pub verify: PromptTemplate,
    pub budget: PromptBudget,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            hypothesis: PromptTemplate::builtin(PromptKind::Hypothesis),
            verify: PromptTemplate::builtin(PromptKind::Verify),
            budget: PromptBudget::default(),
        }
    }
}

fn short_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..4])
}

/// Full hex digest of a rendered prompt, recorded in traces.
pub fn prompt_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn truncate_chars(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let kept: String = text.chars().take(max_chars).collect();
    format!("{kept}{TRUNCATION_MARK}")
}

fn render_documents(docs: &[(&str, &str)], per_doc_chars: usize) -> String {
    let mut out = String::new();
    for (i, (id, text)) in docs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "[{}] (id: {})\n{}\n",
            i + 1,
            id,
            truncate_chars(text, per_doc_chars)
        ));
    }
    out
}

fn caption_slot(caption: &str) -> &str {
    if caption.is_empty() {
        EMPTY_CAPTION_SLOT
    } else {
        caption
    }
}

fn apply_budget(rendered: String, budget: PromptBudget) -> String {
    if rendered.chars().count() <= budget.total_chars {
        rendered
    } else {
        rendered.chars().take(budget.total_chars).collect()
    }
}

impl PromptSet {
    /// Render the hypothesis prompt over the probe list. Documents appear in
    /// rank order, each labeled with its id.
    pub fn build_hypothesis_prompt(
        &self,
        query_text: &str,
        caption: &str,
        probe_docs: &[(&str, &str)],
    ) -> String {
        let rendered = self
            .hypothesis
            .body
            .replace("{query_text}", query_text)
            .replace("{image_caption}", caption_slot(caption))
            .replace(
                "{documents}",
                &render_documents(probe_docs, self.budget.per_doc_chars),
            );
        apply_budget(rendered, self.budget)
    }

    /// Render the verify prompt over the candidate pool. When `k_f` exceeds
    /// the candidate count the prompt asks for all candidates ranked.
    pub fn build_verify_prompt(
        &self,
        query_text: &str,
        caption: &str,
        candidates: &[(&str, &str)],
        k_f: usize,
    ) -> String {
        let requested = k_f.min(candidates.len()).max(1);
        let rendered = self
            .verify
            .body
            .replace("{query_text}", query_text)
            .replace("{image_caption}", caption_slot(caption))
            .replace(
                "{documents}",
                &render_documents(candidates, self.budget.per_doc_chars),
            )
            .replace("{k_f}", &requested.to_string());
        apply_budget(rendered, self.budget)
    }
}

const COMPENSATORY_TAG: &str = "COMPENSATORY QUERY:";

fn strip_wrapping(text: &str) -> &str {
    let trimmed = text.trim();
    let trimmed = trimmed
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(trimmed);
    trimmed
        .strip_prefix('\'')
        .and_then(|s| s.strip_suffix('\''))
        .unwrap_or(trimmed)
        .trim()
}

/// Extract the compensatory query from LLM output.
///
/// Prefers the last `COMPENSATORY QUERY:` tagged line; otherwise takes the
/// final non-empty paragraph. Returns `None` (the synthesis-failure signal)
/// when nothing usable remains.
pub fn parse_compensatory_query(llm_text: &str) -> Option<String> {
    let tagged = llm_text
        .lines()
        .filter_map(|line| {
            let at = line.find(COMPENSATORY_TAG)?;
            Some(&line[at + COMPENSATORY_TAG.len()..])
        })
        .next_back();
    let candidate = match tagged {
        Some(rest) => rest.to_string(),
        None => llm_text
            .split("\n\n")
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .last()
            .unwrap_or("")
            .to_string(),
    };
    let cleaned = strip_wrapping(&candidate).to_string();
    if cleaned.is_empty() {
        None
    } else {
        Some(cleaned)
    }
}

/// Extract a ranked id list from LLM output.
///
/// Finds the first JSON array of strings anywhere in the text (code fences
/// and surrounding prose tolerated), drops ids outside `valid_ids`, removes
/// duplicates keeping the first occurrence, and truncates to `k_f`. Returns
/// `None` (the parse-failure signal) when no JSON string array exists. This
/// function never panics on arbitrary input.
pub fn parse_ranked_list(
    llm_text: &str,
    valid_ids: &std::collections::HashSet<String>,
    k_f: usize,
) -> Option<Vec<String>> {
    let raw = first_string_array(llm_text)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for id in raw {
        if out.len() >= k_f {
            break;
        }
        if valid_ids.contains(&id) && seen.insert(id.clone()) {
            out.push(id);
        }
    }
    Some(out)
}

fn first_string_array(text: &str) -> Option<Vec<String>> {
    for (at, _) in text.match_indices('[') {
        let mut stream =
            serde_json::Deserializer::from_str(&text[at..]).into_iter::<serde_json::Value>();
        if let Some(Ok(serde_json::Value::Array(items))) = stream.next() {
            let mut strings = Vec::with_capacity(items.len());
            let mut all_strings = true;
            for item in items {
                match item {
                    serde_json::Value::String(s) => strings.push(s),
                    _ => {
                        all_strings = false;
                        break;
                    }
                }
            }
            if all_strings {
                return Some(strings);
            }
        }
    }
    None
}

/// Pull the body of a labeled section out of a rendered prompt: the text
/// between `header` and the next blank line. Used by the mock oracle; custom
/// templates must keep the standard headers for the mock to work.
pub fn extract_section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    let rest = &prompt[start..];
    let rest = rest.strip_prefix('\n').unwrap_or(rest);
    let end = rest.find("\n\n").unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Candidate ids in prompt order, parsed from the `(id: …)` labels the
/// document renderer emits.
pub fn extract_doc_ids(prompt: &str) -> Vec<String> {
    let mut ids = Vec::new();
    for line in prompt.lines() {
        if let Some(at) = line.find("(id: ") {
            if let Some(end) = line[at + 5..].find(')') {
                ids.push(line[at + 5..at + 5 + end].to_string());
            }
        }
    }
    ids
}

/// The requested result count, parsed from the `REQUESTED RESULTS:` line.
pub fn extract_requested_count(prompt: &str) -> Option<usize> {
    extract_section(prompt, REQUESTED_HEADER)?
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(list: &[&str]) -> HashSet<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hypothesis_lists_docs_in_rank_order() {
        let set = PromptSet::default();
        let docs: Vec<(String, String)> = (1..=5)
            .map(|i| (format!("d{i}"), format!("text {i}")))
            .collect();
        let doc_refs: Vec<(&str, &str)> =
            docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let prompt = set.build_hypothesis_prompt("query", "caption", &doc_refs);
        assert!(prompt.starts_with(HYPOTHESIS_SENTINEL));
        for i in 1..=5 {
            assert!(prompt.contains(&format!("[{i}] (id: d{i})")));
        }
        let p1 = prompt.find("(id: d1)").unwrap();
        let p5 = prompt.find("(id: d5)").unwrap();
        assert!(p1 < p5);
        assert!(prompt.contains("1. Identify what the image depicts"));
        assert!(prompt.contains("2. Assess which aspects"));
        assert!(prompt.contains("3. Produce one concise compensatory query"));
    }

    #[test]
    fn huge_document_truncated_with_marker() {
        let set = PromptSet::default();
        let big = "x".repeat(100_000);
        let prompt = set.build_hypothesis_prompt("q", "c", &[("d1", big.as_str())]);
        assert!(prompt.chars().count() <= set.budget.total_chars);
        assert!(prompt.contains(TRUNCATION_MARK));
    }

    #[test]
    fn empty_caption_renders_placeholder() {
        let set = PromptSet::default();
        let prompt = set.build_hypothesis_prompt("q", "", &[("d1", "t")]);
        assert!(prompt.contains("(no image provided)"));
    }

    #[test]
    fn verify_prompt_states_kf_and_caps_at_candidates() {
        let set = PromptSet::default();
        let docs: Vec<(String, String)> = (0..55)
            .map(|i| (format!("d{i:02}"), format!("text {i}")))
            .collect();
        let doc_refs: Vec<(&str, &str)> =
            docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let prompt = set.build_verify_prompt("q", "c", &doc_refs, 10);
        assert!(prompt.contains("REQUESTED RESULTS: 10"));

        let prompt = set.build_verify_prompt("q", "c", &doc_refs[..3], 10);
        assert!(prompt.contains("REQUESTED RESULTS: 3"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let set = PromptSet::default();
        let a = set.build_verify_prompt("q", "cap", &[("d1", "t1"), ("d2", "t2")], 2);
        let b = set.build_verify_prompt("q", "cap", &[("d1", "t1"), ("d2", "t2")], 2);
        assert_eq!(a, b);
        assert_eq!(prompt_digest(&a), prompt_digest(&b));
    }

    #[test]
    fn compensatory_tagged_line_wins() {
        let text = "The image shows a circuit.\n\nAnalysis follows.\nCOMPENSATORY QUERY: LED forward voltage series resistor sizing";
        assert_eq!(
            parse_compensatory_query(text).unwrap(),
            "LED forward voltage series resistor sizing"
        );
    }

    #[test]
    fn compensatory_falls_back_to_last_paragraph() {
        let text = "First paragraph of analysis.\n\nvoltage divider resistor ladder";
        assert_eq!(
            parse_compensatory_query(text).unwrap(),
            "voltage divider resistor ladder"
        );
    }

    #[test]
    fn compensatory_strips_quotes() {
        let text = "COMPENSATORY QUERY: \"thermal runaway mitigation\"";
        assert_eq!(
            parse_compensatory_query(text).unwrap(),
            "thermal runaway mitigation"
        );
    }

    #[test]
    fn compensatory_whitespace_only_is_failure() {
        assert_eq!(parse_compensatory_query("   \n\n  \n"), None);
        assert_eq!(parse_compensatory_query(""), None);
    }

    #[test]
    fn ranked_list_basic() {
        let got = parse_ranked_list("[\"d3\",\"d1\"]", &ids(&["d1", "d2", "d3"]), 2).unwrap();
        assert_eq!(got, vec!["d3", "d1"]);
    }

    #[test]
    fn ranked_list_filters_and_dedups() {
        let got = parse_ranked_list(
            "[\"d3\",\"dX\",\"d3\",\"d1\"]",
            &ids(&["d1", "d2", "d3"]),
            10,
        )
        .unwrap();
        assert_eq!(got, vec!["d3", "d1"]);
    }

    #[test]
    fn ranked_list_no_array_is_failure() {
        assert_eq!(
            parse_ranked_list("Sure! Here is my ranking:", &ids(&["d1"]), 5),
            None
        );
    }

    #[test]
    fn ranked_list_tolerates_fences_and_prose() {
        let text = "Reasoning...\n```json\n[\"d2\", \"d1\"]\n```\nDone.";
        let got = parse_ranked_list(text, &ids(&["d1", "d2"]), 5).unwrap();
        assert_eq!(got, vec!["d2", "d1"]);
    }

    #[test]
    fn ranked_list_skips_non_string_arrays() {
        let text = "scores [1, 2, 3] then [\"d1\"]";
        let got = parse_ranked_list(text, &ids(&["d1"]), 5).unwrap();
        assert_eq!(got, vec!["d1"]);
    }

    #[test]
    fn ranked_list_truncates_to_kf() {
        let got = parse_ranked_list("[\"a\",\"b\",\"c\"]", &ids(&["a", "b", "c"]), 2).unwrap();
        assert_eq!(got, vec!["a", "b"]);
    }

    #[test]
    fn section_extraction_round_trips() {
        let set = PromptSet::default();
        let prompt = set.build_verify_prompt("my query", "my caption", &[("d9", "text")], 4);
        assert_eq!(
            extract_section(&prompt, QUERY_TEXT_HEADER),
            Some("my query")
        );
        assert_eq!(extract_section(&prompt, CAPTION_HEADER), Some("my caption"));
        assert_eq!(extract_doc_ids(&prompt), vec!["d9".to_string()]);
        assert_eq!(extract_requested_count(&prompt), Some(1));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// The parsers never panic and always return a valid subset or
            /// the failure signal, whatever the model emits.
            #[test]
            fn ranked_list_parser_total(text in any::<String>(), k_f in 0usize..8) {
                let valid = ids(&["d1", "d2", "d3"]);
                if let Some(list) = parse_ranked_list(&text, &valid, k_f) {
                    prop_assert!(list.len() <= k_f);
                    let mut seen = HashSet::new();
                    for id in &list {
                        prop_assert!(valid.contains(id));
                        prop_assert!(seen.insert(id.clone()));
                    }
                }
                let _ = parse_compensatory_query(&text);
            }

            /// Whatever survives extraction is never blank.
            #[test]
            fn compensatory_never_blank(text in any::<String>()) {
                if let Some(q) = parse_compensatory_query(&text) {
                    prop_assert!(!q.trim().is_empty());
                }
            }
        }
    }
}
