//! Parsing and interrogation of tagged agentic-search trajectories.
//!
//! A trajectory is the text an agent emits while solving a question: interleaved
//! `<think>`, `<search>`, and `<result>` blocks followed by a final `<think>` and an
//! `<answer>` block whose content carries the answer inside `\boxed{...}`. This module
//! turns such text into a [`Trajectory`], checks it against the expected shape
//! ([`validate_format`]), and pulls out the final answer ([`extract_answer`]) with
//! canonical "I DON'T KNOW" detection.
//!
//! Parsing is deliberately forgiving: anything with a recoverable answer tag parses,
//! and structural problems are recorded as [`Violation`]s instead of errors so that
//! malformed model output can still be scored (a format violation costs reward, it
//! does not crash the scorer).

use serde::{Deserialize, Serialize};
use std::io::BufRead;

use thiserror::Error;

/// Default cap on search-tool invocations per trajectory.
pub const DEFAULT_TOOL_LIMIT: usize = 3;

/// Canonical forms an "I don't know" answer may take after canonicalization.
const IDK_CANONICAL: [&str; 2] = ["i don't know", "i dont know"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrajectoryError {
    /// No complete `<answer>...</answer>` block anywhere in the text.
    #[error("missing answer tag")]
    MissingAnswerTag,
    /// An `<answer>` tag opened but never closed, and no complete answer block exists.
    #[error("unbalanced answer tag")]
    UnbalancedTags,
    /// The answer tag holds no complete boxed expression.
    #[error("missing boxed expression in answer")]
    MissingBox,
}

/// Where a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Simulated,
    Ingested,
}

/// A search-tool call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchAction {
    pub query: String,
}

/// One reasoning/action/observation round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub reasoning: String,
    pub action: SearchAction,
    pub observation: String,
}

/// A parsed agentic-search episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_reasoning: String,
    /// Verbatim content of the answer tag, boxed expression included.
    pub final_answer_raw: String,
    pub source: Source,
    parse_violations: Vec<Violation>,
}

/// Structural problems found while parsing or validating a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    /// An open tag without its close tag (or a stray close tag).
    UnbalancedTags,
    /// No answer block at all. Never produced by [`parse_trajectory`], which fails
    /// instead; kept for reporting on trajectories built by other means.
    MissingAnswer,
    /// The answer block holds no complete `\boxed{...}` expression.
    MissingBox,
    /// More search calls than the tool limit allows.
    ToolLimitExceeded,
    /// Tag order breaks the think/search/result cycle, content follows the answer,
    /// a search query is empty, or the answer holds more than one boxed expression.
    MalformedInterleaving,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Violation::UnbalancedTags => "unbalanced-tags",
            Violation::MissingAnswer => "missing-answer",
            Violation::MissingBox => "missing-box",
            Violation::ToolLimitExceeded => "tool-limit-exceeded",
            Violation::MalformedInterleaving => "malformed-interleaving",
        };
        f.write_str(name)
    }
}

/// Outcome of format validation. `valid` holds exactly when `violations` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl FormatVerdict {
    fn from_violations(violations: Vec<Violation>) -> Self {
        FormatVerdict {
            valid: violations.is_empty(),
            violations,
        }
    }

    /// A verdict with no violations.
    pub fn clean() -> Self {
        FormatVerdict {
            valid: true,
            violations: Vec::new(),
        }
    }
}

/// The final answer pulled out of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    /// Normalized answer text (see [`normalize_answer`]).
    pub text: String,
    /// Whether the boxed content canonically matches the IDK sentinel.
    pub is_idk: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagKind {
    Think,
    Search,
    SearchResult,
    Answer,
}

impl TagKind {
    fn open(self) -> &'static str {
        match self {
            TagKind::Think => "<think>",
            TagKind::Search => "<search>",
            TagKind::SearchResult => "<result>",
            TagKind::Answer => "<answer>",
        }
    }

    fn close(self) -> &'static str {
        match self {
            TagKind::Think => "</think>",
            TagKind::Search => "</search>",
            TagKind::SearchResult => "</result>",
            TagKind::Answer => "</answer>",
        }
    }
}

const ALL_TAGS: [TagKind; 4] = [
    TagKind::Think,
    TagKind::Search,
    TagKind::SearchResult,
    TagKind::Answer,
];

#[derive(Debug)]
enum Event {
    Think(String),
    Search(String),
    SearchResult(String),
    Answer(String),
}

fn next_open_tag(raw: &str, from: usize) -> Option<(usize, TagKind)> {
    ALL_TAGS
        .iter()
        .filter_map(|&kind| raw[from..].find(kind.open()).map(|off| (from + off, kind)))
        .min_by_key(|&(pos, _)| pos)
}

fn stray_has_close_tag(stray: &str) -> bool {
    ALL_TAGS.iter().any(|kind| stray.contains(kind.close()))
}

fn push_unique(violations: &mut Vec<Violation>, v: Violation) {
    if !violations.contains(&v) {
        violations.push(v);
    }
}

/// Tokenize the raw text into tag events, recovering from unclosed non-answer tags.
fn scan_events(raw: &str) -> (Vec<Event>, Vec<Violation>, bool) {
    let mut events = Vec::new();
    let mut violations = Vec::new();
    let mut saw_unclosed_answer = false;
    let mut pos = 0;

    while let Some((start, kind)) = next_open_tag(raw, pos) {
        if stray_has_close_tag(&raw[pos..start]) {
            push_unique(&mut violations, Violation::UnbalancedTags);
        }
        let content_start = start + kind.open().len();
        match raw[content_start..].find(kind.close()) {
            Some(off) => {
                let content = raw[content_start..content_start + off].to_string();
                events.push(match kind {
                    TagKind::Think => Event::Think(content),
                    TagKind::Search => Event::Search(content),
                    TagKind::SearchResult => Event::SearchResult(content),
                    TagKind::Answer => Event::Answer(content),
                });
                pos = content_start + off + kind.close().len();
            }
            None => {
                // Unclosed tag: content runs to the next open tag (or end of text).
                let resume = next_open_tag(raw, content_start)
                    .map(|(p, _)| p)
                    .unwrap_or(raw.len());
                push_unique(&mut violations, Violation::UnbalancedTags);
                match kind {
                    TagKind::Answer => saw_unclosed_answer = true,
                    TagKind::Think => {
                        events.push(Event::Think(raw[content_start..resume].to_string()))
                    }
                    TagKind::Search => {
                        events.push(Event::Search(raw[content_start..resume].to_string()))
                    }
                    TagKind::SearchResult => {
                        events.push(Event::SearchResult(raw[content_start..resume].to_string()))
                    }
                }
                pos = resume;
            }
        }
    }
    if stray_has_close_tag(&raw[pos..]) {
        push_unique(&mut violations, Violation::UnbalancedTags);
    }

    (events, violations, saw_unclosed_answer)
}

/// Parse tagged text into a [`Trajectory`], marked [`Source::Ingested`].
///
/// Fails only when no answer can be recovered; every other structural problem is
/// recorded and surfaced later through [`validate_format`].
pub fn parse_trajectory(raw: &str) -> Result<Trajectory, TrajectoryError> {
    parse_trajectory_from(raw, Source::Ingested)
}

/// Parse tagged text with an explicit source marker.
pub fn parse_trajectory_from(raw: &str, source: Source) -> Result<Trajectory, TrajectoryError> {
    let (events, mut violations, saw_unclosed_answer) = scan_events(raw);

    let answer_idx = events
        .iter()
        .position(|e| matches!(e, Event::Answer(_)))
        .ok_or(if saw_unclosed_answer {
            TrajectoryError::UnbalancedTags
        } else {
            TrajectoryError::MissingAnswerTag
        })?;
    if answer_idx + 1 < events.len() {
        push_unique(&mut violations, Violation::MalformedInterleaving);
    }

    let mut steps = Vec::new();
    let mut pending_thinks: Vec<String> = Vec::new();
    let mut pending_action: Option<(String, String)> = None;

    for event in &events[..answer_idx] {
        match event {
            Event::Think(text) => {
                if pending_action.is_some() {
                    // A thought between a search and its result breaks the cycle.
                    push_unique(&mut violations, Violation::MalformedInterleaving);
                }
                pending_thinks.push(text.clone());
            }
            Event::Search(query) => {
                if let Some((reasoning, prev_query)) = pending_action.take() {
                    // Back-to-back searches: close the first with an empty observation.
                    push_unique(&mut violations, Violation::MalformedInterleaving);
                    steps.push(Step {
                        reasoning,
                        action: SearchAction { query: prev_query },
                        observation: String::new(),
                    });
                }
                let query = query.trim().to_string();
                if query.is_empty() {
                    push_unique(&mut violations, Violation::MalformedInterleaving);
                }
                pending_action = Some((join_thinks(&mut pending_thinks), query));
            }
            Event::SearchResult(observation) => match pending_action.take() {
                Some((reasoning, query)) => steps.push(Step {
                    reasoning,
                    action: SearchAction { query },
                    observation: observation.clone(),
                }),
                None => push_unique(&mut violations, Violation::MalformedInterleaving),
            },
            Event::Answer(_) => unreachable!("answer events stop before answer_idx"),
        }
    }
    if let Some((reasoning, query)) = pending_action.take() {
        push_unique(&mut violations, Violation::MalformedInterleaving);
        steps.push(Step {
            reasoning,
            action: SearchAction { query },
            observation: String::new(),
        });
    }

    let final_answer_raw = match &events[answer_idx] {
        Event::Answer(content) => content.clone(),
        _ => unreachable!(),
    };

    Ok(Trajectory {
        steps,
        final_reasoning: join_thinks(&mut pending_thinks),
        final_answer_raw,
        source,
        parse_violations: violations,
    })
}

fn join_thinks(thinks: &mut Vec<String>) -> String {
    let joined = thinks.join("\n");
    thinks.clear();
    joined
}

impl Trajectory {
    /// Build a trajectory directly, as the simulator does.
    pub fn simulated(steps: Vec<Step>, final_reasoning: String, final_answer_raw: String) -> Self {
        Trajectory {
            steps,
            final_reasoning,
            final_answer_raw,
            source: Source::Simulated,
            parse_violations: Vec::new(),
        }
    }

    /// Violations discovered at parse time (tag-level problems invisible afterwards).
    pub fn parse_violations(&self) -> &[Violation] {
        &self.parse_violations
    }

    /// Number of search-tool calls.
    pub fn search_count(&self) -> usize {
        self.steps.len()
    }

    /// Render back to tagged text. `parse_trajectory_from` of the result reproduces
    /// the trajectory field-for-field.
    pub fn to_tagged_text(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str("<think>");
            out.push_str(&step.reasoning);
            out.push_str("</think>\n<search>");
            out.push_str(&step.action.query);
            out.push_str("</search>\n<result>");
            out.push_str(&step.observation);
            out.push_str("</result>\n");
        }
        out.push_str("<think>");
        out.push_str(&self.final_reasoning);
        out.push_str("</think>\n<answer>");
        out.push_str(&self.final_answer_raw);
        out.push_str("</answer>");
        out
    }
}

/// Validate a trajectory against the expected shape using [`DEFAULT_TOOL_LIMIT`].
pub fn validate_format(trajectory: &Trajectory) -> FormatVerdict {
    validate_format_with_limit(trajectory, DEFAULT_TOOL_LIMIT)
}

/// Validate with an explicit tool-invocation limit. Deterministic and idempotent.
pub fn validate_format_with_limit(trajectory: &Trajectory, tool_limit: usize) -> FormatVerdict {
    let mut violations = trajectory.parse_violations.clone();
    if trajectory.search_count() > tool_limit {
        push_unique(&mut violations, Violation::ToolLimitExceeded);
    }
    match count_boxed(&trajectory.final_answer_raw) {
        0 => push_unique(&mut violations, Violation::MissingBox),
        1 => {}
        _ => push_unique(&mut violations, Violation::MalformedInterleaving),
    }
    FormatVerdict::from_violations(violations)
}

/// Extract the boxed answer. Errors only when no complete boxed expression exists.
pub fn extract_answer(trajectory: &Trajectory) -> Result<ExtractedAnswer, TrajectoryError> {
    let raw = first_boxed(&trajectory.final_answer_raw).ok_or(TrajectoryError::MissingBox)?;
    let raw = raw.trim();
    Ok(ExtractedAnswer {
        text: normalize_answer(raw),
        is_idk: is_idk_text(raw),
    })
}

/// Locate the content of the first complete `\boxed{...}` (or `\box{...}`) expression.
fn first_boxed(text: &str) -> Option<&str> {
    boxed_spans(text).into_iter().next().map(|(s, e)| &text[s..e])
}

fn count_boxed(text: &str) -> usize {
    boxed_spans(text).len()
}

/// Byte spans of the contents of all complete boxed expressions, left to right.
fn boxed_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let (start, token_len) = match (text[pos..].find("\\boxed{"), text[pos..].find("\\box{")) {
            (Some(a), Some(b)) if b < a => (pos + b, "\\box{".len()),
            (Some(a), _) => (pos + a, "\\boxed{".len()),
            (None, Some(b)) => (pos + b, "\\box{".len()),
            (None, None) => break,
        };
        let content_start = start + token_len;
        let mut depth = 1usize;
        let mut end = None;
        for (off, ch) in text[content_start..].char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(content_start + off);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(end) => {
                spans.push((content_start, end));
                pos = end + 1;
            }
            // Unterminated box: nothing complete here or later.
            None => break,
        }
    }
    spans
}

/// Canonical IDK matching: lowercase, trim, collapse internal whitespace, drop one
/// terminal punctuation mark, then compare against the known sentinel spellings.
pub fn is_idk_text(raw: &str) -> bool {
    let lowered = raw.to_lowercase().replace('\u{2019}', "'");
    let mut collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(last) = collapsed.chars().last() {
        if matches!(last, '.' | '!' | '?' | ',' | ';' | ':') {
            collapsed.pop();
            collapsed.truncate(collapsed.trim_end().len());
        }
    }
    IDK_CANONICAL.contains(&collapsed.as_str())
}

/// Normalize an answer for comparison: lowercase, drop punctuation, drop the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            for lower in ch.to_lowercase() {
                cleaned.push(lower);
            }
        } else if ch.is_whitespace() {
            cleaned.push(' ');
        }
        // Everything else (punctuation, symbols) is dropped.
    }
    cleaned
        .split_whitespace()
        .filter(|word| !matches!(*word, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One line of an external trajectory log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryLogRecord {
    pub id: String,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    pub trajectory_text: String,
}

/// Result of ingesting a JSONL trajectory log.
#[derive(Debug, Default)]
pub struct LogIngest {
    pub records: Vec<TrajectoryLogRecord>,
    /// Lines that were not valid JSON objects of the expected shape.
    pub skipped: usize,
}

/// Read a trajectory log, one JSON object per line. Unparseable lines are counted
/// and skipped, never fatal. Blank lines are ignored.
pub fn read_trajectory_log<R: BufRead>(reader: R) -> std::io::Result<LogIngest> {
    let mut ingest = LogIngest::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrajectoryLogRecord>(&line) {
            Ok(record) => ingest.records.push(record),
            Err(_) => ingest.skipped += 1,
        }
    }
    Ok(ingest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "<think>t</think><search>q</search><result>r</result><think>t2</think><answer>\\boxed{X}</answer>";

    #[test]
    fn parses_minimal_episode() {
        let t = parse_trajectory(MINIMAL).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].reasoning, "t");
        assert_eq!(t.steps[0].action.query, "q");
        assert_eq!(t.steps[0].observation, "r");
        assert_eq!(t.final_reasoning, "t2");
        assert_eq!(t.final_answer_raw, "\\boxed{X}");
        assert_eq!(t.source, Source::Ingested);
        assert!(validate_format(&t).valid);
        let answer = extract_answer(&t).unwrap();
        assert_eq!(answer.text, "x");
        assert!(!answer.is_idk);
    }

    #[test]
    fn four_searches_exceed_tool_limit() {
        let mut text = String::new();
        for i in 0..4 {
            text.push_str(&format!(
                "<think>step</think><search>q{i}</search><result>r{i}</result>"
            ));
        }
        text.push_str("<think>done</think><answer>\\boxed{X}</answer>");
        let t = parse_trajectory(&text).unwrap();
        assert_eq!(t.search_count(), 4);
        let verdict = validate_format(&t);
        assert!(!verdict.valid);
        assert_eq!(verdict.violations, vec![Violation::ToolLimitExceeded]);
        assert!(validate_format_with_limit(&t, 4).valid);
    }

    #[test]
    fn answer_without_box_is_single_violation() {
        let t = parse_trajectory("<answer>no box here</answer>").unwrap();
        let verdict = validate_format(&t);
        assert_eq!(verdict.violations, vec![Violation::MissingBox]);
        assert_eq!(extract_answer(&t), Err(TrajectoryError::MissingBox));
    }

    #[test]
    fn missing_answer_tag_is_fatal() {
        assert_eq!(
            parse_trajectory("<think>only thought</think>"),
            Err(TrajectoryError::MissingAnswerTag)
        );
        assert_eq!(parse_trajectory(""), Err(TrajectoryError::MissingAnswerTag));
    }

    #[test]
    fn unclosed_answer_without_recovery_is_fatal() {
        assert_eq!(
            parse_trajectory("<think>t</think><answer>\\boxed{X}"),
            Err(TrajectoryError::UnbalancedTags)
        );
    }

    #[test]
    fn unclosed_answer_recovers_when_complete_answer_exists() {
        let t = parse_trajectory("<answer>\\boxed{X}</answer><answer>\\boxed{Y}").unwrap();
        assert_eq!(t.final_answer_raw, "\\boxed{X}");
        let verdict = validate_format(&t);
        assert!(verdict.violations.contains(&Violation::UnbalancedTags));
    }

    #[test]
    fn answer_before_search_is_malformed_interleaving() {
        let text = "<think>t</think><answer>\\boxed{X}</answer><search>q</search><result>r</result>";
        let t = parse_trajectory(text).unwrap();
        let verdict = validate_format(&t);
        assert!(!verdict.valid);
        assert!(verdict
            .violations
            .contains(&Violation::MalformedInterleaving));
    }

    #[test]
    fn empty_think_tags_are_valid() {
        let text = "<think></think><search>q</search><result>r</result><think></think><answer>\\boxed{X}</answer>";
        let t = parse_trajectory(text).unwrap();
        assert!(validate_format(&t).valid);
        assert_eq!(t.final_reasoning, "");
    }

    #[test]
    fn zero_search_trajectory_is_valid() {
        let t = parse_trajectory("<think>recall</think><answer>\\boxed{X}</answer>").unwrap();
        assert!(validate_format(&t).valid);
        assert_eq!(t.steps.len(), 0);
    }

    #[test]
    fn unclosed_think_recovers_with_violation() {
        let text = "<think>open<search>q</search><result>r</result><answer>\\boxed{X}</answer>";
        let t = parse_trajectory(text).unwrap();
        assert!(t.parse_violations().contains(&Violation::UnbalancedTags));
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].action.query, "q");
    }

    #[test]
    fn result_without_search_is_malformed() {
        let text = "<result>orphan</result><answer>\\boxed{X}</answer>";
        let t = parse_trajectory(text).unwrap();
        assert!(validate_format(&t)
            .violations
            .contains(&Violation::MalformedInterleaving));
    }

    #[test]
    fn search_without_result_is_malformed() {
        let text = "<think>t</think><search>q</search><answer>\\boxed{X}</answer>";
        let t = parse_trajectory(text).unwrap();
        assert!(validate_format(&t)
            .violations
            .contains(&Violation::MalformedInterleaving));
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].observation, "");
    }

    #[test]
    fn empty_search_query_is_malformed() {
        let text = "<think>t</think><search>  </search><result>r</result><answer>\\boxed{X}</answer>";
        let t = parse_trajectory(text).unwrap();
        assert!(validate_format(&t)
            .violations
            .contains(&Violation::MalformedInterleaving));
    }

    #[test]
    fn multiple_boxes_flagged() {
        let t = parse_trajectory("<answer>\\boxed{X} or \\boxed{Y}</answer>").unwrap();
        let verdict = validate_format(&t);
        assert!(verdict
            .violations
            .contains(&Violation::MalformedInterleaving));
        // First box wins for extraction.
        assert_eq!(extract_answer(&t).unwrap().text, "x");
    }

    #[test]
    fn nested_braces_inside_box() {
        let t = parse_trajectory("<answer>\\boxed{f(x) = {y}}</answer>").unwrap();
        assert_eq!(extract_answer(&t).unwrap().text, "fx y");
    }

    #[test]
    fn box_alias_accepted() {
        let t = parse_trajectory("<answer>\\box{Paris}</answer>").unwrap();
        assert_eq!(extract_answer(&t).unwrap().text, "paris");
    }

    #[test]
    fn extracts_and_normalizes_answer() {
        let t =
            parse_trajectory("<answer>The final answer is \\boxed{Shanghai, China}</answer>")
                .unwrap();
        let answer = extract_answer(&t).unwrap();
        assert_eq!(answer.text, "shanghai china");
        assert!(!answer.is_idk);
    }

    #[test]
    fn idk_detection() {
        for raw in [
            "\\boxed{I DON'T KNOW}",
            "\\boxed{i don't know.}",
            "\\boxed{ I Dont Know }",
            "\\boxed{I  DON'T   KNOW!}",
        ] {
            let t = parse_trajectory(&format!("<answer>{raw}</answer>")).unwrap();
            assert!(extract_answer(&t).unwrap().is_idk, "not idk: {raw}");
        }
        let t = parse_trajectory("<answer>\\boxed{I don't know him}</answer>").unwrap();
        assert!(!extract_answer(&t).unwrap().is_idk);
    }

    #[test]
    fn normalization_strips_articles_and_punctuation() {
        assert_eq!(normalize_answer("The Lord of the Rings!"), "lord of rings");
        assert_eq!(normalize_answer("  a  pale   blue dot "), "pale blue dot");
        assert_eq!(normalize_answer("Ångström's unit"), "ångströms unit");
    }

    #[test]
    fn round_trip_simulated_trajectory() {
        let t = Trajectory::simulated(
            vec![Step {
                reasoning: "Looking for r1 of e1.".into(),
                action: SearchAction {
                    query: "e1 r1".into(),
                },
                observation: "e1 r1 e2 | e9 r4 e3".into(),
            }],
            "Answering with what I have.".into(),
            "The final answer is \\boxed{e2}".into(),
        );
        let reparsed = parse_trajectory_from(&t.to_tagged_text(), Source::Simulated).unwrap();
        assert_eq!(reparsed, t);
    }

    #[test]
    fn log_ingestion_counts_bad_lines() {
        let data = concat!(
            "{\"id\":\"a\",\"question\":\"?\",\"gold_answers\":[\"x\"],\"trajectory_text\":\"<answer>\\\\boxed{x}</answer>\"}\n",
            "not json\n",
            "\n",
            "{\"id\":\"b\",\"trajectory_text\":\"<answer>\\\\boxed{y}</answer>\"}\n",
            "{\"missing\":\"fields\"}\n",
        );
        let ingest = read_trajectory_log(data.as_bytes()).unwrap();
        assert_eq!(ingest.records.len(), 2);
        assert_eq!(ingest.skipped, 2);
        assert_eq!(ingest.records[0].id, "a");
        assert_eq!(ingest.records[1].gold_answers.len(), 0);
    }
}
