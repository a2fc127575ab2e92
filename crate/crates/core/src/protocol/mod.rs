//! XML-tagged message schemas exchanged with the agent models.
//!
//! Every agent answers in a small tag vocabulary (`<reasoning>`, `<subquestions>`,
//! `<sources>`, `<answer>`, `<error_stage>`, ...). Parsing is case-insensitive, ignores
//! prose outside the tags and uses only the first complete block of each tag. Malformed
//! output is reported, never repaired: a failed parse is the signal both the pipeline
//! and the format rewards consume.

mod placeholders;
pub mod prompts;
mod tags;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use placeholders::{
    extract_placeholder_refs, fill_placeholders, normalize_one_based, PlaceholderRef,
    UnresolvedPlaceholder,
};
use tags::{TagBlock, TagLookup};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("missing <{0}> tag")]
    MissingTag(&'static str),
    #[error("malformed nesting around <{0}>")]
    MalformedNesting(&'static str),
    #[error("plan contains no subquestions")]
    EmptySubquestions,
    #[error("error stage {stage:?} is not admissible in the {phase} phase")]
    InvalidStage { phase: AuditPhase, stage: String },
    #[error("rewrite tag <{0}> is empty")]
    EmptyRewrite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub reasoning: String,
    pub subquestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverDocument {
    pub reasoning: String,
    /// Canonical `Doc_<n>` citations, deduplicated, in first-seen order.
    pub sources: Vec<String>,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditPhase {
    Context,
    Reasoning,
}

impl fmt::Display for AuditPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditPhase::Context => "context",
            AuditPhase::Reasoning => "reasoning",
        })
    }
}

/// Union of both phases' verdicts. Which variants are admissible depends on the phase;
/// see [`ErrorStage::admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorStage {
    None,
    Subquestion,
    Retrieval,
    Reasoning,
    Extraction,
}

impl ErrorStage {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorStage::None => "none",
            ErrorStage::Subquestion => "subquestion",
            ErrorStage::Retrieval => "retrieval",
            ErrorStage::Reasoning => "reasoning",
            ErrorStage::Extraction => "extraction",
        }
    }

    pub fn admissible(phase: AuditPhase) -> [ErrorStage; 3] {
        match phase {
            AuditPhase::Context => [ErrorStage::None, ErrorStage::Subquestion, ErrorStage::Retrieval],
            AuditPhase::Reasoning => [ErrorStage::None, ErrorStage::Reasoning, ErrorStage::Extraction],
        }
    }

    pub fn parse_for(phase: AuditPhase, token: &str) -> Option<ErrorStage> {
        let token = token.trim();
        Self::admissible(phase)
            .into_iter()
            .find(|s| s.as_str().eq_ignore_ascii_case(token))
    }

    pub fn is_error(self) -> bool {
        self != ErrorStage::None
    }
}

impl fmt::Display for ErrorStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditDocument {
    pub phase: AuditPhase,
    pub error_stage: ErrorStage,
    pub explanation: String,
    /// Optional `<action>` tag; teacher labels carry a recovery action here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteKind {
    Subquestion,
    Query,
}

impl RewriteKind {
    fn tag(self) -> &'static str {
        match self {
            RewriteKind::Subquestion => "subquestion",
            RewriteKind::Query => "query",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteDocument {
    pub kind: RewriteKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    Plan,
    Solver,
    ContextAudit,
    ReasoningAudit,
    RewriteSubquestion,
    RewriteQuery,
}

impl SchemaId {
    pub const ALL: [SchemaId; 6] = [
        SchemaId::Plan,
        SchemaId::Solver,
        SchemaId::ContextAudit,
        SchemaId::ReasoningAudit,
        SchemaId::RewriteSubquestion,
        SchemaId::RewriteQuery,
    ];
}

struct Lowered<'a> {
    raw: &'a str,
    lower: String,
}

impl<'a> Lowered<'a> {
    fn new(raw: &'a str) -> Self {
        Self {
            raw,
            lower: raw.to_ascii_lowercase(),
        }
    }

    fn block(&self, name: &'static str) -> Result<TagBlock, FormatError> {
        match tags::locate(&self.lower, name) {
            TagLookup::Found(b) => Ok(b),
            TagLookup::Missing => Err(FormatError::MissingTag(name)),
            TagLookup::Malformed => Err(FormatError::MalformedNesting(name)),
        }
    }

    fn inner(&self, b: &TagBlock) -> &'a str {
        &self.raw[b.inner_start..b.inner_end]
    }

    /// Locates all `names` and checks that the blocks are pairwise disjoint.
    fn blocks<const N: usize>(
        &self,
        names: [&'static str; N],
    ) -> Result<[TagBlock; N], FormatError> {
        let mut found = Vec::with_capacity(N);
        for name in names {
            found.push(self.block(name)?);
        }
        for i in 0..N {
            for j in (i + 1)..N {
                if tags::overlaps(&found[i], &found[j]) {
                    return Err(FormatError::MalformedNesting(names[j]));
                }
            }
        }
        Ok(found.try_into().expect("length N"))
    }
}

/// Strips a leading list marker such as `1.`, `2)`, `-` or `*`.
fn strip_numbering(line: &str) -> &str {
    let t = line.trim();
    let digits = t.bytes().take_while(|b| b.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
        return t;
    }
    for bullet in ["- ", "* ", "• "] {
        if let Some(r) = t.strip_prefix(bullet) {
            return r.trim();
        }
    }
    t
}

pub fn parse_plan(text: &str) -> Result<PlanDocument, FormatError> {
    let doc = Lowered::new(text);
    let [reasoning, subqs] = doc.blocks(["reasoning", "subquestions"])?;
    let items = tags::all_blocks(&doc.lower, "subquestion", subqs.inner_start, subqs.inner_end);
    let subquestions: Vec<String> = if items.is_empty() {
        doc.inner(&subqs)
            .lines()
            .map(strip_numbering)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect()
    } else {
        items
            .iter()
            .map(|b| strip_numbering(doc.inner(b)).to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    if subquestions.is_empty() {
        return Err(FormatError::EmptySubquestions);
    }
    Ok(PlanDocument {
        reasoning: doc.inner(&reasoning).trim().to_string(),
        subquestions,
    })
}

/// Extracts `[Doc_<digits>]` citations in order, deduplicated.
pub fn parse_citations(text: &str) -> Vec<String> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut out: Vec<String> = Vec::new();
    let mut pos = 0;
    while let Some(rel) = lower[pos..].find("[doc_") {
        let start = pos + rel + "[doc_".len();
        let digits = bytes[start..].iter().take_while(|b| b.is_ascii_digit()).count();
        let end = start + digits;
        if digits > 0 && bytes.get(end) == Some(&b']') {
            let n: u64 = lower[start..end].parse().unwrap_or(u64::MAX);
            let id = format!("Doc_{n}");
            if !out.contains(&id) {
                out.push(id);
            }
        }
        pos = end.max(start);
    }
    out
}

pub fn parse_solver_output(text: &str) -> Result<SolverDocument, FormatError> {
    let doc = Lowered::new(text);
    let [reasoning, sources, answer] = doc.blocks(["reasoning", "sources", "answer"])?;
    Ok(SolverDocument {
        reasoning: doc.inner(&reasoning).trim().to_string(),
        sources: parse_citations(doc.inner(&sources)),
        answer: doc.inner(&answer).trim().to_string(),
    })
}

pub fn parse_audit(text: &str, phase: AuditPhase) -> Result<AuditDocument, FormatError> {
    let doc = Lowered::new(text);
    let [stage, explanation] = doc.blocks(["error_stage", "explanation"])?;
    let token = doc.inner(&stage);
    let error_stage = ErrorStage::parse_for(phase, token).ok_or_else(|| FormatError::InvalidStage {
        phase,
        stage: token.trim().to_string(),
    })?;
    let action = match tags::locate(&doc.lower, "action") {
        TagLookup::Found(b) => Some(doc.inner(&b).trim().to_string()),
        _ => None,
    };
    Ok(AuditDocument {
        phase,
        error_stage,
        explanation: doc.inner(&explanation).to_string(),
        action,
    })
}

pub fn parse_rewrite(text: &str, kind: RewriteKind) -> Result<RewriteDocument, FormatError> {
    let doc = Lowered::new(text);
    let block = doc.block(kind.tag())?;
    let inner = doc.inner(&block).trim();
    if inner.is_empty() {
        return Err(FormatError::EmptyRewrite(kind.tag()));
    }
    Ok(RewriteDocument {
        kind,
        text: inner.to_string(),
    })
}

/// The 0/1 format indicator used by both the pipeline and the format rewards.
pub fn validate_format(text: &str, schema: SchemaId) -> bool {
    match schema {
        SchemaId::Plan => parse_plan(text).is_ok(),
        SchemaId::Solver => parse_solver_output(text).is_ok(),
        SchemaId::ContextAudit => parse_audit(text, AuditPhase::Context).is_ok(),
        SchemaId::ReasoningAudit => parse_audit(text, AuditPhase::Reasoning).is_ok(),
        SchemaId::RewriteSubquestion => parse_rewrite(text, RewriteKind::Subquestion).is_ok(),
        SchemaId::RewriteQuery => parse_rewrite(text, RewriteKind::Query).is_ok(),
    }
}

pub fn render_plan(plan: &PlanDocument) -> String {
    let mut out = format!("<reasoning>{}</reasoning>\n<subquestions>\n", plan.reasoning);
    for (i, sq) in plan.subquestions.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, sq));
    }
    out.push_str("</subquestions>");
    out
}

pub fn render_solver(doc: &SolverDocument) -> String {
    let sources: Vec<String> = doc.sources.iter().map(|s| format!("[{s}]")).collect();
    format!(
        "<reasoning>{}</reasoning>\n<sources>{}</sources>\n<answer>{}</answer>",
        doc.reasoning,
        sources.join(", "),
        doc.answer
    )
}

pub fn render_audit(doc: &AuditDocument) -> String {
    let mut out = format!(
        "<error_stage>{}</error_stage>\n<explanation>{}</explanation>",
        doc.error_stage, doc.explanation
    );
    if let Some(action) = &doc.action {
        out.push_str(&format!("\n<action>{action}</action>"));
    }
    out
}

pub fn render_rewrite(doc: &RewriteDocument) -> String {
    let tag = doc.kind.tag();
    format!("<{tag}>{}</{tag}>", doc.text)
}
