//! LLM re-ranking of the head of first-stage rankings.
//!
//! Two judging strategies share one client: pointwise (one JSON judgment per
//! paper) and a three-stage agent (proposal analysis once per proposal, then
//! paper analysis and a Yes/No verdict per paper). Papers judged
//! non-relevant move behind the others within the top k; everything else
//! keeps its first-stage order.

pub mod judge;
mod pipeline;
pub mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Mag, PaperRecord, Split};
use crate::encoder::TextEncoder;
use crate::retrieval::{RankedPaper, Ranking};
use crate::rng;
use crate::{Error, Result};

pub use judge::{
    BackendError, CallOutcome, CostReport, HttpBackend, JudgeBackend, JudgeCache, JudgeClient, JudgeRequest,
    JudgeResponse, Message, OfflineBackend, RawScores, RetryPolicy,
};
pub use pipeline::{rerank_pipeline, ProposalRerank, RerankOutcome};
pub use prompt::{ExemplarSet, PromptTemplates, Slots};

macro_rules! str_enum {
    ($name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($name::$variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Pointwise,
    Agent,
}
str_enum!(Strategy { Pointwise => "pointwise", Agent => "agent" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    #[default]
    Zero,
    Few,
}
str_enum!(Shots { Zero => "zero", Few => "few" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    Abstract,
    FullPaper,
}
str_enum!(InputMode { Abstract => "abstract", FullPaper => "full_paper" });

impl InputMode {
    /// How prompts name the paper text.
    pub fn input_text_name(self) -> &'static str {
        match self {
            InputMode::Abstract => "Research Paper's Abstract",
            InputMode::FullPaper => "Research Paper",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub strategy: Strategy,
    pub shots: Shots,
    pub input_mode: InputMode,
    /// Re-ranking cutoff; the corpus setting's default when unset.
    pub k: Option<usize>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_parallel: usize,
    pub few_shot_count: usize,
    /// Judge HTTP endpoint; required unless every reply is cached.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub seed: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Pointwise,
            shots: Shots::Zero,
            input_mode: InputMode::Abstract,
            k: None,
            model_id: "judge".into(),
            temperature: 0.0,
            max_tokens: 1024,
            max_parallel: 4,
            few_shot_count: 2,
            endpoint: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            seed: 0,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.k == Some(0) {
            return bad("k must be at least 1");
        }
        if self.max_parallel == 0 || self.few_shot_count == 0 {
            return bad("max_parallel and few_shot_count must be at least 1");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be finite and >= 0");
        }
        if self.model_id.trim().is_empty() {
            return bad("model_id must not be empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Relevant,
    NonRelevant,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub paper_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_scores: Option<RawScores>,
    pub reasoning: String,
    /// sha256 over the prompts and replies behind this judgment.
    pub transcript_hash: String,
}

/// First `min(k, len)` entries in first-stage order.
pub fn select_topk(ranking: &Ranking, k: usize) -> &[RankedPaper] {
    &ranking.entries[..k.min(ranking.entries.len())]
}

/// Within the top k: relevant and unknown papers first, then non-relevant,
/// each block in first-stage order. Papers without a judgment count as
/// unknown; a judgment naming a paper outside the top k is an error.
pub fn reorder(ranking: &Ranking, k: usize, judgments: &[Judgment]) -> Result<Ranking> {
    let head = select_topk(ranking, k);
    let verdicts: BTreeMap<&str, Verdict> = judgments.iter().map(|j| (j.paper_id.as_str(), j.verdict)).collect();
    for id in verdicts.keys() {
        if !head.iter().any(|e| e.paper_id == *id) {
            return Err(Error::JudgmentOutsideHead(id.to_string()));
        }
    }
    let demoted = |e: &RankedPaper| verdicts.get(e.paper_id.as_str()) == Some(&Verdict::NonRelevant);
    let mut entries: Vec<RankedPaper> = head.iter().filter(|e| !demoted(e)).cloned().collect();
    entries.extend(head.iter().filter(|e| demoted(e)).cloned());
    entries.extend(ranking.entries[head.len()..].iter().cloned());
    Ok(Ranking {
        proposal_id: ranking.proposal_id.clone(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    MethodSection,
    Prefix,
    Abstract,
}

const METHOD_HEADINGS: [&str; 5] = ["method", "methodology", "approach", "model", "proposed"];
const END_HEADINGS: [&str; 5] = ["experiment", "result", "evaluation", "discussion", "conclusion"];
const PREFIX_SHARE: f64 = 0.6;

/// Lowercase words of a heading-like line: short, unpunctuated at the end,
/// and numbered, `#`-marked, or title-cased.
fn heading_words(line: &str) -> Option<Vec<String>> {
    let t = line.trim();
    if t.is_empty() || t.len() > 80 || t.ends_with(['.', ',', ';', ':']) {
        return None;
    }
    let body = t.trim_start_matches('#').trim_start();
    let marked = body.len() < t.len();
    let mut words = body.split_whitespace().peekable();
    let numbered = words
        .peek()
        .is_some_and(|w| w.trim_end_matches('.').split('.').all(|p| !p.is_empty() && (p.chars().all(|c| c.is_ascii_digit()) || p.chars().all(|c| "IVXLC".contains(c)))));
    if numbered {
        words.next();
    }
    let words: Vec<&str> = words.collect();
    if words.is_empty() || words.len() > 8 {
        return None;
    }
    let titled = words[0].chars().next().is_some_and(char::is_uppercase);
    if !(marked || numbered || (titled && words.len() <= 4)) {
        return None;
    }
    Some(
        words
            .iter()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .collect(),
    )
}

fn matches_any(words: &[String], stems: &[&str]) -> bool {
    words.iter().any(|w| stems.iter().any(|s| w.starts_with(s)))
}

/// Paper text up to the end of its method section: everything before the
/// first results-like heading that follows a method-like heading. Falls back
/// to the first 60% of characters when no such pair exists, and to the
/// abstract when there is no full text.
pub fn truncate_full_text(paper: &PaperRecord) -> (String, TextSource) {
    let Some(full) = paper.full_text.as_deref().filter(|t| !t.trim().is_empty()) else {
        log::warn!("paper `{}` has no full text; using its abstract", paper.id);
        return (paper.abstract_text.clone(), TextSource::Abstract);
    };
    let mut offset = 0;
    let mut in_method = false;
    for line in full.split_inclusive('\n') {
        if let Some(words) = heading_words(line) {
            if !in_method && matches_any(&words, &METHOD_HEADINGS) {
                in_method = true;
            } else if in_method && matches_any(&words, &END_HEADINGS) {
                return (full[..offset].trim_end().to_owned(), TextSource::MethodSection);
            }
        }
        offset += line.len();
    }
    log::info!("paper `{}`: no method section detected; using a 60% prefix", paper.id);
    let n = (full.chars().count() as f64 * PREFIX_SHARE).floor() as usize;
    (full.chars().take(n).collect(), TextSource::Prefix)
}

/// Paper fields as shown to the judge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperInput {
    pub id: String,
    pub title: String,
    pub text: String,
}

impl PaperInput {
    pub fn new(paper: &PaperRecord, mode: InputMode) -> Self {
        let text = match mode {
            InputMode::Abstract => paper.abstract_text.clone(),
            InputMode::FullPaper => truncate_full_text(paper).0,
        };
        Self {
            id: paper.id.clone(),
            title: paper.title.clone(),
            text,
        }
    }
}

/// Training proposals embedded once for nearest-neighbour exemplar lookup.
pub struct FewShotIndex<'a> {
    mag: &'a Mag,
    entries: Vec<(String, Vec<f64>)>,
}

impl<'a> FewShotIndex<'a> {
    pub fn build(mag: &'a Mag, encoder: &dyn TextEncoder) -> Result<Self> {
        let entries = mag
            .proposals_in(Split::Train)
            .map(|p| Ok((p.id.clone(), encoder.embed_text(&p.text())?)))
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(Error::InvalidConfig("few-shot exemplars need training proposals".into()));
        }
        Ok(Self { mag, entries })
    }

    /// Training proposals by ascending Euclidean distance to `query`, ties by id.
    pub fn nearest(&self, query: &[f64]) -> Result<Vec<&str>> {
        let mut scored = Vec::with_capacity(self.entries.len());
        for (id, v) in &self.entries {
            if v.len() != query.len() {
                return Err(Error::DimensionMismatch {
                    expected: v.len(),
                    actual: query.len(),
                });
            }
            let d: f64 = v.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            scored.push((d, id.as_str()));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored.into_iter().map(|(_, id)| id).collect())
    }

    /// Up to `n` contrastive exemplars from the nearest training proposals.
    /// A proposal without both an MI and a non-MI context is passed over.
    pub fn exemplars(&self, query: &[f64], n: usize, seed: u64) -> Result<Vec<ExemplarSet>> {
        let mut out = Vec::with_capacity(n);
        for id in self.nearest(query)? {
            if out.len() == n {
                break;
            }
            if let Some(e) = exemplar_for(self.mag, id, seed)? {
                out.push(e);
            }
        }
        Ok(out)
    }
}

/// Seeded MI paper with its MI contexts (score 1) and one non-MI context
/// (score 0), preferring a non-MI context on the same edge.
pub fn exemplar_for(mag: &Mag, proposal_id: &str, seed: u64) -> Result<Option<ExemplarSet>> {
    let proposal = mag.proposal(proposal_id)?;
    let mut rng = rng::stream(seed, &[b"few-shot", proposal_id.as_bytes()]);
    let edges = mag.edges(proposal_id);
    let mi_edges: Vec<_> = edges.iter().filter(|e| e.is_mi()).collect();
    let Some(edge) = mi_edges.choose(&mut rng) else {
        return Ok(None);
    };
    let non_mi_same: Vec<&str> = edge
        .contexts
        .iter()
        .filter(|c| !c.intent.is_methodological())
        .map(|c| c.text.as_str())
        .collect();
    let non_mi_any: Vec<&str> = edges
        .iter()
        .flat_map(|e| &e.contexts)
        .filter(|c| !c.intent.is_methodological())
        .map(|c| c.text.as_str())
        .collect();
    let pool = if non_mi_same.is_empty() { &non_mi_any } else { &non_mi_same };
    let Some(negative) = pool.choose(&mut rng) else {
        return Ok(None);
    };
    let mut citations: Vec<(String, u8)> = edge
        .contexts
        .iter()
        .filter(|c| c.intent.is_methodological())
        .map(|c| (c.text.clone(), 1))
        .collect();
    citations.push((negative.to_string(), 0));
    Ok(Some(ExemplarSet {
        proposal_text: proposal.text(),
        paper_abstract: mag.paper(&edge.paper_id)?.abstract_text.clone(),
        citations,
    }))
}

fn transcript_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn unknown(paper_id: &str, reasoning: String, parts: &[&str]) -> Judgment {
    Judgment {
        paper_id: paper_id.to_owned(),
        verdict: Verdict::Unknown,
        raw_scores: None,
        reasoning,
        transcript_hash: transcript_hash(parts),
    }
}

fn slots<'a>(
    mode: InputMode,
    proposal: &'a str,
    paper: &'a PaperInput,
    exemplars: Option<&'a str>,
) -> Slots<'a> {
    Slots {
        proposal,
        input_text_name: mode.input_text_name(),
        input_paper_title: &paper.title,
        input_paper_text: &paper.text,
        exemplars,
        ..Slots::default()
    }
}

pub fn pointwise_prompt(
    templates: &PromptTemplates,
    mode: InputMode,
    proposal: &str,
    paper: &PaperInput,
    exemplars: Option<&str>,
) -> String {
    prompt::render(&templates.pointwise, &slots(mode, proposal, paper, exemplars))
}

pub fn judge_pointwise(
    client: &JudgeClient<'_>,
    templates: &PromptTemplates,
    mode: InputMode,
    proposal: &str,
    paper: &PaperInput,
    exemplars: Option<&str>,
) -> Judgment {
    let prompt = pointwise_prompt(templates, mode, proposal, paper, exemplars);
    let outcome = client.ask(&prompt, judge::parse_pointwise);
    let hash = transcript_hash(&[&prompt, outcome.transcript()]);
    match outcome {
        CallOutcome::Parsed { value, .. } => Judgment {
            paper_id: paper.id.clone(),
            verdict: if value.relevant { Verdict::Relevant } else { Verdict::NonRelevant },
            raw_scores: value.raw_scores,
            reasoning: value.reasoning,
            transcript_hash: hash,
        },
        CallOutcome::Unparseable { .. } => Judgment {
            transcript_hash: hash,
            ..unknown(&paper.id, "unparseable judge reply".into(), &[])
        },
        CallOutcome::Unreachable { error } => Judgment {
            transcript_hash: hash,
            ..unknown(&paper.id, format!("judge unreachable: {error}"), &[])
        },
    }
}

/// Stage one of the agent; `None` when no usable analysis came back.
pub fn analyze_proposal(client: &JudgeClient<'_>, templates: &PromptTemplates, proposal: &str) -> Option<String> {
    let prompt = prompt::render(
        &templates.agent_proposal,
        &Slots {
            proposal,
            ..Slots::default()
        },
    );
    match client.ask(&prompt, judge::parse_analysis) {
        CallOutcome::Parsed { value, .. } => Some(value),
        other => {
            log::warn!("proposal analysis failed: {}", other.transcript());
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentJudgment {
    pub paper_analysis: Option<String>,
    pub judgment: Judgment,
}

/// Stages two and three of the agent for one paper.
pub fn judge_agent(
    client: &JudgeClient<'_>,
    templates: &PromptTemplates,
    mode: InputMode,
    proposal: &str,
    proposal_analysis: Option<&str>,
    paper: &PaperInput,
    exemplars: Option<&str>,
) -> AgentJudgment {
    let Some(proposal_analysis) = proposal_analysis else {
        return AgentJudgment {
            paper_analysis: None,
            judgment: unknown(&paper.id, "proposal analysis unavailable".into(), &[]),
        };
    };
    let base = Slots {
        proposal_analysis,
        ..slots(mode, proposal, paper, exemplars)
    };
    let paper_prompt = prompt::render(&templates.agent_paper, &base);
    let analysis = client.ask(&paper_prompt, judge::parse_analysis);
    let Some(paper_analysis) = analysis.value().cloned() else {
        return AgentJudgment {
            paper_analysis: None,
            judgment: unknown(
                &paper.id,
                format!("paper analysis failed: {}", analysis.transcript()),
                &[&paper_prompt, analysis.transcript()],
            ),
        };
    };
    let verdict_prompt = prompt::render(
        &templates.agent_judgment,
        &Slots {
            paper_analysis: &paper_analysis,
            ..base
        },
    );
    let outcome = client.ask(&verdict_prompt, judge::parse_verdict);
    let hash = transcript_hash(&[&paper_prompt, &paper_analysis, &verdict_prompt, outcome.transcript()]);
    let verdict = match outcome.value() {
        Some(true) => Verdict::Relevant,
        Some(false) => Verdict::NonRelevant,
        None => Verdict::Unknown,
    };
    AgentJudgment {
        judgment: Judgment {
            paper_id: paper.id.clone(),
            verdict,
            raw_scores: None,
            reasoning: outcome.transcript().to_owned(),
            transcript_hash: hash,
        },
        paper_analysis: Some(paper_analysis),
    }
}

#[cfg(test)]
mod tests {
    use super::judge::testing::*;
    use super::*;
    use crate::corpus::test_support::{mag, paper};
    use crate::corpus::Intent::*;
    use crate::encoder::EncoderParams;
    use proptest::prelude::*;

    fn ranking(ids: &[&str]) -> Ranking {
        Ranking {
            proposal_id: "P".into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedPaper {
                    paper_id: id.to_string(),
                    distance: i as f64,
                })
                .collect(),
        }
    }

    fn judgment(id: &str, verdict: Verdict) -> Judgment {
        Judgment {
            paper_id: id.into(),
            verdict,
            raw_scores: None,
            reasoning: String::new(),
            transcript_hash: String::new(),
        }
    }

    fn verdicts(pairs: &[(&str, Verdict)]) -> Vec<Judgment> {
        pairs.iter().map(|(id, v)| judgment(id, *v)).collect()
    }

    #[test]
    fn topk_cases() {
        let r = ranking(&["A", "B", "C"]);
        assert_eq!(select_topk(&r, 2).len(), 2);
        assert_eq!(select_topk(&r, 10).len(), 3);
        assert_eq!(select_topk(&r, 2), select_topk(&r, 2));
    }

    #[test]
    fn reorder_worked_example() {
        use Verdict::*;
        let r = ranking(&["A", "B", "C", "D", "E", "F"]);
        let j = verdicts(&[("A", NonRelevant), ("B", Relevant), ("C", NonRelevant), ("D", Relevant), ("E", Relevant)]);
        assert_eq!(reorder(&r, 5, &j).unwrap().ids(), ["B", "D", "E", "A", "C", "F"]);
        let all = verdicts(&[("A", Relevant), ("B", Relevant)]);
        assert_eq!(reorder(&r, 2, &all).unwrap().ids(), r.ids());
        let none = verdicts(&[("A", NonRelevant), ("B", NonRelevant)]);
        assert_eq!(reorder(&r, 2, &none).unwrap().ids(), r.ids());
        let unk = verdicts(&[("A", NonRelevant), ("B", Unknown)]);
        assert_eq!(reorder(&r, 2, &unk).unwrap().ids()[..2], ["B", "A"]);
        assert!(matches!(
            reorder(&r, 2, &verdicts(&[("C", Relevant)])),
            Err(Error::JudgmentOutsideHead(id)) if id == "C"
        ));
    }

    proptest! {
        #[test]
        fn reorder_is_a_stable_idempotent_head_permutation(
            n in 1usize..12,
            k in 1usize..14,
            codes in prop::collection::vec(0u8..3, 12),
        ) {
            let ids: Vec<String> = (0..n).map(|i| format!("L{i}")).collect();
            let r = ranking(&ids.iter().map(String::as_str).collect::<Vec<_>>());
            let head = k.min(n);
            let j: Vec<Judgment> = (0..head)
                .map(|i| judgment(&ids[i], [Verdict::Relevant, Verdict::NonRelevant, Verdict::Unknown][codes[i] as usize]))
                .collect();
            let out = reorder(&r, k, &j).unwrap();
            let mut a = out.ids()[..head].to_vec();
            let mut b = r.ids()[..head].to_vec();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            prop_assert_eq!(&out.ids()[head..], &r.ids()[head..]);
            let pos = |rk: &Ranking, id: &str| rk.ids().iter().position(|x| *x == id).unwrap();
            for x in &j {
                for y in &j {
                    let demoted = |v: Verdict| v == Verdict::NonRelevant;
                    if demoted(x.verdict) == demoted(y.verdict) && pos(&r, &x.paper_id) < pos(&r, &y.paper_id) {
                        prop_assert!(pos(&out, &x.paper_id) < pos(&out, &y.paper_id));
                    }
                    if !demoted(x.verdict) && demoted(y.verdict) {
                        prop_assert!(pos(&out, &x.paper_id) < pos(&out, &y.paper_id));
                    }
                }
            }
            prop_assert_eq!(reorder(&out, k, &j).unwrap(), out);
        }
    }

    fn with_full_text(text: &str) -> PaperRecord {
        PaperRecord {
            full_text: Some(text.into()),
            ..paper("X")
        }
    }

    #[test]
    fn truncation_at_results_heading() {
        let text = "1 Introduction\nwhy\n\n2 Related Work\nothers\n\n3 Methodology\nhow we do it\n\n4 Experiments\nnumbers\n\n5 Conclusion\nend\n";
        let (t, src) = truncate_full_text(&with_full_text(text));
        assert_eq!(src, TextSource::MethodSection);
        assert!(t.ends_with("how we do it"));
        assert!(!t.contains("4 Experiments"));
        let md = "# Intro\na\n## Proposed Approach\nb\n## Results and Analysis\nc\n";
        assert_eq!(truncate_full_text(&with_full_text(md)).0, "# Intro\na\n## Proposed Approach\nb");
    }

    #[test]
    fn truncation_fallbacks() {
        let plain = "no headings at all, just prose that goes on. and on.";
        let (t, src) = truncate_full_text(&with_full_text(plain));
        assert_eq!(src, TextSource::Prefix);
        assert_eq!(t.chars().count(), (plain.chars().count() as f64 * 0.6) as usize);
        let (t, src) = truncate_full_text(&paper("Y"));
        assert_eq!((t.as_str(), src), ("abstract Y", TextSource::Abstract));
        // a results heading before any method heading is not an end marker
        let early = "1 Results\nx\n2 Method\ny\n";
        assert_eq!(truncate_full_text(&with_full_text(early)).1, TextSource::Prefix);
    }

    #[test]
    fn heading_detection() {
        assert!(heading_words("3 Methodology").is_some());
        assert!(heading_words("3.2. Model Architecture").is_some());
        assert!(heading_words("IV. EXPERIMENTS").is_some());
        assert!(heading_words("Results").is_some());
        assert!(heading_words("We describe our method in detail below and then").is_none());
        assert!(heading_words("The method works.").is_none());
    }

    fn fewshot_mag() -> Mag {
        mag(
            &[("P1", Split::Train), ("P2", Split::Train), ("P3", Split::Train), ("T", Split::Test)],
            &["A", "B", "C"],
            &[
                ("P1", "A", &[Uses, Background]),
                ("P2", "B", &[Uses]),
                ("P2", "C", &[Similar]),
                ("P3", "A", &[Extension]),
                ("T", "C", &[Uses]),
            ],
        )
    }

    #[test]
    fn exemplars_are_contrastive_and_prefer_same_edge() {
        let g = fewshot_mag();
        let e = exemplar_for(&g, "P1", 0).unwrap().unwrap();
        assert!(e.is_contrastive());
        assert_eq!(e.citations, vec![("P1 cites A (0)".to_string(), 1), ("P1 cites A (1)".to_string(), 0)]);
        let e2 = exemplar_for(&g, "P2", 0).unwrap().unwrap();
        assert_eq!(e2.citations[1], ("P2 cites C (0)".to_string(), 0));
        assert_eq!(exemplar_for(&g, "P3", 0).unwrap(), None);
    }

    #[test]
    fn nearest_matches_brute_force_and_skips_one_sided() {
        let g = fewshot_mag();
        let enc = EncoderParams::init(crate::train::training_vocab(&g), 4, 3, 5).unwrap();
        let idx = FewShotIndex::build(&g, &enc).unwrap();
        let q = enc.encode(&g.proposal("T").unwrap().text());
        let mut brute: Vec<(f64, String)> = g
            .proposals_in(Split::Train)
            .map(|p| {
                let v = enc.encode(&p.text());
                (v.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), p.id.clone())
            })
            .collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<&str> = brute.iter().map(|(_, id)| id.as_str()).collect();
        assert_eq!(idx.nearest(&q).unwrap(), want);
        let ex = idx.exemplars(&q, 3, 0).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(idx.exemplars(&q, 1, 0).unwrap().len(), 1);
    }

    fn client<'a>(backend: &'a dyn JudgeBackend) -> JudgeClient<'a> {
        JudgeClient::new(backend, None, "m", 0.0, 64, InputMode::Abstract, fast_retry())
    }

    fn input() -> PaperInput {
        PaperInput {
            id: "L1".into(),
            title: "A title".into(),
            text: "An abstract".into(),
        }
    }

    #[test]
    fn pointwise_judgments() {
        let t = PromptTemplates::builtin();
        let yes = FnBackend::new(|_| Ok("{\"relevance_score\": 1, \"reasoning\": \"r\"}".into()));
        let j = judge_pointwise(&client(&yes), &t, InputMode::Abstract, "prop", &input(), None);
        assert_eq!(j.verdict, Verdict::Relevant);
        assert_eq!(j.transcript_hash.len(), 64);
        let prompt = yes.prompts.lock().unwrap()[0].clone();
        assert!(prompt.contains("Title: A title\nAbstract: An abstract"));
        assert!(!prompt.contains("Exemplars"));

        let no = FnBackend::new(|_| Ok("{\"relevance_score\": 0}".into()));
        assert_eq!(judge_pointwise(&client(&no), &t, InputMode::Abstract, "p", &input(), Some("EX")).verdict, Verdict::NonRelevant);
        assert!(no.prompts.lock().unwrap()[0].contains("**Exemplars**\nEX\n"));

        let junk = FnBackend::new(|_| Ok("not json".into()));
        assert_eq!(judge_pointwise(&client(&junk), &t, InputMode::Abstract, "p", &input(), None).verdict, Verdict::Unknown);
        assert_eq!(junk.calls(), 3);
    }

    #[test]
    fn agent_stages() {
        let t = PromptTemplates::builtin();
        let backend = FnBackend::new(|p: &str| {
            Ok(if p.starts_with("You will be presented with a Research Proposal.") {
                "proposal analysis".into()
            } else if p.contains("Respond using only one of the following two words") {
                "{{Yes}}".into()
            } else {
                "paper analysis".into()
            })
        });
        let c = client(&backend);
        let pa = analyze_proposal(&c, &t, "prop").unwrap();
        assert_eq!(pa, "proposal analysis");
        let out = judge_agent(&c, &t, InputMode::Abstract, "prop", Some(&pa), &input(), None);
        assert_eq!(out.judgment.verdict, Verdict::Relevant);
        assert_eq!(out.paper_analysis.as_deref(), Some("paper analysis"));
        let prompts = backend.prompts.lock().unwrap();
        assert!(prompts[2].contains("Here is the analysis of the Research Paper's Abstract: paper analysis"));
    }

    #[test]
    fn agent_stage_two_failure_is_unknown() {
        let t = PromptTemplates::builtin();
        let backend = FnBackend::new(|p: &str| {
            if p.contains("Additionally, you will be provided") {
                Err(BackendError::Transport("down".into()))
            } else {
                Ok("Yes".into())
            }
        });
        let out = judge_agent(&client(&backend), &t, InputMode::Abstract, "p", Some("pa"), &input(), None);
        assert_eq!(out.judgment.verdict, Verdict::Unknown);
        assert!(out.judgment.reasoning.contains("paper analysis failed"));
        assert_eq!(backend.calls(), 4);
    }

    #[test]
    fn enums_round_trip() {
        for s in ["pointwise", "agent"] {
            assert_eq!(s.parse::<super::Strategy>().unwrap().as_str(), s);
        }
        assert_eq!("full_paper".parse::<InputMode>().unwrap(), InputMode::FullPaper);
        assert!("listwise".parse::<super::Strategy>().is_err());
        assert!(JudgeConfig { k: Some(0), ..JudgeConfig::default() }.validate().is_err());
    }
}
