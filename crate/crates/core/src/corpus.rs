//! Proposals, cited papers, intent-labelled citation edges and the
//! methodology adjacency graph built from them.
//!
//! Input arrives as three line-delimited JSON streams. Malformed lines and
//! edges with dangling endpoints are rejected per record and reported with
//! their line number; a duplicate proposal or paper id aborts ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Gold,
    /// Intent labels produced by an automatic classifier.
    Weak,
}

/// The eight MultiCite citation intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Background,
    Motivation,
    FutureWork,
    Similar,
    Difference,
    Uses,
    #[serde(alias = "extends")]
    Extension,
    Unsure,
}

impl Intent {
    /// Methodology intents: `uses` and `extension`. `unsure` is not one.
    pub fn is_methodological(self) -> bool {
        matches!(self, Intent::Uses | Intent::Extension)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_text: Option<String>,
    #[serde(default)]
    pub source: Source,
}

impl PaperRecord {
    /// Title and abstract joined by a newline.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.abstract_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub id: String,
    pub problem: String,
    pub motivation: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
}

impl ProposalRecord {
    /// Problem and motivation joined by a newline.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.problem, self.motivation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationContext {
    pub text: String,
    pub intent: Intent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEdge {
    pub proposal_id: String,
    pub paper_id: String,
    pub contexts: Vec<CitationContext>,
}

impl CitationEdge {
    pub fn is_mi(&self) -> bool {
        is_mi(self)
    }

    /// Indices of contexts carrying a methodology intent.
    pub fn mi_context_indices(&self) -> Vec<usize> {
        self.contexts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.intent.is_methodological())
            .map(|(i, _)| i)
            .collect()
    }
}

/// True iff at least one context of the edge carries a methodology intent.
pub fn is_mi(edge: &CitationEdge) -> bool {
    edge.contexts.iter().any(|c| c.intent.is_methodological())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Proposals,
    Papers,
    Citations,
    Entities,
}

/// A record dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub stream: StreamKind,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSetting {
    /// Papers cited by the evaluation split only.
    #[default]
    Restricted,
    /// Papers cited by the training split plus those cited by the evaluation split.
    Extended,
}

impl CorpusSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusSetting::Restricted => "restricted",
            CorpusSetting::Extended => "extended",
        }
    }

    /// Default re-ranking cutoff for the setting.
    pub fn default_rerank_k(self) -> usize {
        match self {
            CorpusSetting::Restricted => 10,
            CorpusSetting::Extended => 20,
        }
    }
}

impl fmt::Display for CorpusSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CorpusSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restricted" => Ok(CorpusSetting::Restricted),
            "extended" => Ok(CorpusSetting::Extended),
            other => Err(Error::InvalidConfig(format!("unknown corpus setting `{other}`"))),
        }
    }
}

/// Methodology adjacency graph. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mag {
    proposals: BTreeMap<String, ProposalRecord>,
    papers: BTreeMap<String, PaperRecord>,
    // proposal id -> edges ordered by paper id
    edges: BTreeMap<String, Vec<CitationEdge>>,
    // paper id -> citing proposal ids, ascending
    cited_by: BTreeMap<String, Vec<String>>,
}

impl Mag {
    pub fn proposals(&self) -> impl Iterator<Item = &ProposalRecord> {
        self.proposals.values()
    }

    pub fn papers(&self) -> impl Iterator<Item = &PaperRecord> {
        self.papers.values()
    }

    pub fn proposal(&self, id: &str) -> Result<&ProposalRecord> {
        self.proposals.get(id).ok_or_else(|| Error::UnknownId {
            kind: "proposal",
            id: id.to_owned(),
        })
    }

    pub fn paper(&self, id: &str) -> Result<&PaperRecord> {
        self.papers.get(id).ok_or_else(|| Error::UnknownId {
            kind: "paper",
            id: id.to_owned(),
        })
    }

    pub fn num_proposals(&self) -> usize {
        self.proposals.len()
    }

    pub fn num_papers(&self) -> usize {
        self.papers.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    /// Outgoing edges of a proposal ordered by paper id. Unknown ids yield nothing.
    pub fn edges(&self, proposal_id: &str) -> &[CitationEdge] {
        self.edges.get(proposal_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge(&self, proposal_id: &str, paper_id: &str) -> Option<&CitationEdge> {
        let edges = self.edges(proposal_id);
        edges
            .binary_search_by(|e| e.paper_id.as_str().cmp(paper_id))
            .ok()
            .map(|i| &edges[i])
    }

    pub fn all_edges(&self) -> impl Iterator<Item = &CitationEdge> {
        self.edges.values().flatten()
    }

    /// Proposals citing a paper, ascending by id.
    pub fn citing(&self, paper_id: &str) -> &[String] {
        self.cited_by.get(paper_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn proposals_in(&self, split: Split) -> impl Iterator<Item = &ProposalRecord> {
        self.proposals.values().filter(move |p| p.split == split)
    }

    /// Every paper cited by the proposal, regardless of intent.
    pub fn cited_papers(&self, proposal_id: &str) -> BTreeSet<&str> {
        self.edges(proposal_id).iter().map(|e| e.paper_id.as_str()).collect()
    }

    /// Cited papers with at least one methodology-intent context.
    pub fn mi_papers(&self, proposal_id: &str) -> Result<BTreeSet<String>> {
        self.proposal(proposal_id)?;
        Ok(self
            .edges(proposal_id)
            .iter()
            .filter(|e| e.is_mi())
            .map(|e| e.paper_id.clone())
            .collect())
    }

    /// Papers cited by any proposal in `split`.
    pub fn papers_cited_by(&self, split: Split) -> BTreeSet<String> {
        self.proposals_in(split)
            .flat_map(|p| self.edges(&p.id))
            .map(|e| e.paper_id.clone())
            .collect()
    }

    /// Literature corpus for evaluation on the test split.
    pub fn corpus(&self, setting: CorpusSetting) -> Result<Vec<String>> {
        self.corpus_for(setting, Split::Test)
    }

    /// Literature corpus for evaluating `target` proposals: papers cited by
    /// `target`, plus (extended) papers cited by the training split.
    pub fn corpus_for(&self, setting: CorpusSetting, target: Split) -> Result<Vec<String>> {
        let mut ids = self.papers_cited_by(target);
        if setting == CorpusSetting::Extended {
            ids.extend(self.papers_cited_by(Split::Train));
        }
        if ids.is_empty() {
            return Err(Error::EmptyCorpus(setting.to_string()));
        }
        Ok(ids.into_iter().collect())
    }

    /// Checks that reverse adjacency is the exact transpose of forward adjacency.
    pub fn check_transpose(&self) -> bool {
        let mut forward: BTreeSet<(&str, &str)> = BTreeSet::new();
        for e in self.all_edges() {
            if !forward.insert((e.proposal_id.as_str(), e.paper_id.as_str())) {
                return false;
            }
        }
        let mut reverse: BTreeSet<(&str, &str)> = BTreeSet::new();
        for (paper, props) in &self.cited_by {
            for p in props {
                if !reverse.insert((p.as_str(), paper.as_str())) {
                    return false;
                }
            }
        }
        forward == reverse
    }

    /// Writes the graph back out as the three JSONL streams.
    pub fn write_jsonl(
        &self,
        proposals: &mut impl Write,
        papers: &mut impl Write,
        citations: &mut impl Write,
    ) -> Result<()> {
        for p in self.proposals.values() {
            serde_json::to_writer(&mut *proposals, p)?;
            proposals.write_all(b"\n")?;
        }
        for p in self.papers.values() {
            serde_json::to_writer(&mut *papers, p)?;
            papers.write_all(b"\n")?;
        }
        for e in self.all_edges() {
            serde_json::to_writer(&mut *citations, e)?;
            citations.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Incremental construction of a [`Mag`] with the same validation as ingestion.
#[derive(Debug, Default)]
pub struct MagBuilder {
    proposals: BTreeMap<String, ProposalRecord>,
    papers: BTreeMap<String, PaperRecord>,
    edges: BTreeMap<(String, String), Vec<CitationContext>>,
}

impl MagBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_proposal(&mut self, record: ProposalRecord) -> Result<&mut Self> {
        self.insert_proposal(record, 0)?;
        Ok(self)
    }

    pub fn add_paper(&mut self, record: PaperRecord) -> Result<&mut Self> {
        self.insert_paper(record, 0)?;
        Ok(self)
    }

    /// Adds an edge; contexts for an existing (proposal, paper) pair are merged.
    pub fn add_citation(&mut self, edge: CitationEdge) -> Result<&mut Self> {
        self.insert_citation(edge).map_err(Error::InvalidConfig)?;
        Ok(self)
    }

    fn insert_proposal(&mut self, record: ProposalRecord, line: usize) -> Result<()> {
        if self.proposals.contains_key(&record.id) {
            return Err(Error::DuplicateId {
                kind: "proposal",
                id: record.id,
                line,
            });
        }
        self.proposals.insert(record.id.clone(), record);
        Ok(())
    }

    fn insert_paper(&mut self, record: PaperRecord, line: usize) -> Result<()> {
        if self.papers.contains_key(&record.id) {
            return Err(Error::DuplicateId {
                kind: "paper",
                id: record.id,
                line,
            });
        }
        self.papers.insert(record.id.clone(), record);
        Ok(())
    }

    fn insert_citation(&mut self, edge: CitationEdge) -> std::result::Result<(), String> {
        let proposal = self
            .proposals
            .get(&edge.proposal_id)
            .ok_or_else(|| format!("dangling proposal_id `{}`", edge.proposal_id))?;
        let paper = self
            .papers
            .get(&edge.paper_id)
            .ok_or_else(|| format!("dangling paper_id `{}`", edge.paper_id))?;
        if edge.contexts.is_empty() {
            return Err("citation has no contexts".into());
        }
        if paper.source == Source::Weak && proposal.split != Split::Train {
            return Err(format!(
                "weak-label paper `{}` cited from {} proposal `{}`",
                paper.id, proposal.split, proposal.id
            ));
        }
        self.edges
            .entry((edge.proposal_id, edge.paper_id))
            .or_default()
            .extend(edge.contexts);
        Ok(())
    }

    pub fn build(self) -> Mag {
        let mut edges: BTreeMap<String, Vec<CitationEdge>> = BTreeMap::new();
        let mut cited_by: BTreeMap<String, Vec<String>> = BTreeMap::new();
        // BTreeMap iteration over (proposal, paper) keeps both adjacency lists sorted.
        for ((proposal_id, paper_id), contexts) in self.edges {
            cited_by.entry(paper_id.clone()).or_default().push(proposal_id.clone());
            edges.entry(proposal_id.clone()).or_default().push(CitationEdge {
                proposal_id,
                paper_id,
                contexts,
            });
        }
        for props in cited_by.values_mut() {
            props.sort();
        }
        Mag {
            proposals: self.proposals,
            papers: self.papers,
            edges,
            cited_by,
        }
    }
}

/// Result of [`ingest`]: the validated graph and every record-level reject.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub mag: Mag,
    pub rejects: Vec<Reject>,
}

fn non_empty(field: &str, value: &str) -> std::result::Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("empty `{field}`"))
    } else {
        Ok(())
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() < 10 {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
    digits(0..4) && b[4] == b'-' && digits(5..7) && b[7] == b'-' && digits(8..10)
        && (b.len() == 10 || b[10] == b'T' || b[10] == b' ')
}

fn validate_proposal(p: &ProposalRecord) -> std::result::Result<(), String> {
    non_empty("id", &p.id)?;
    non_empty("problem", &p.problem)?;
    non_empty("motivation", &p.motivation)?;
    match &p.date {
        Some(d) if !is_iso_date(d) => Err(format!("date `{d}` is not ISO-8601")),
        _ => Ok(()),
    }
}

fn validate_paper(p: &PaperRecord) -> std::result::Result<(), String> {
    non_empty("id", &p.id)?;
    non_empty("abstract", &p.abstract_text)
}

fn validate_citation(e: &CitationEdge) -> std::result::Result<(), String> {
    non_empty("proposal_id", &e.proposal_id)?;
    non_empty("paper_id", &e.paper_id)?;
    if e.contexts.is_empty() {
        return Err("citation has no contexts".into());
    }
    for c in &e.contexts {
        non_empty("contexts[].text", &c.text)?;
    }
    Ok(())
}

/// Parses one line-delimited JSON stream, calling `accept` for every record
/// that deserializes and validates. Blank lines are skipped.
fn read_stream<T, R>(
    reader: R,
    kind: StreamKind,
    rejects: &mut Vec<Reject>,
    validate: fn(&T) -> std::result::Result<(), String>,
    mut accept: impl FnMut(T, usize) -> Result<Option<String>>,
) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    for (idx, line) in reader.split(b'\n').enumerate() {
        let line_no = idx + 1;
        let bytes = line?;
        let reject = |reason: String| Reject {
            stream: kind,
            line: line_no,
            reason,
        };
        let text = match std::str::from_utf8(&bytes) {
            Ok(t) => t.trim(),
            Err(e) => {
                rejects.push(reject(format!("invalid UTF-8: {e}")));
                continue;
            }
        };
        if text.is_empty() {
            continue;
        }
        let record: T = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(reject(format!("malformed record: {e}")));
                continue;
            }
        };
        if let Err(reason) = validate(&record) {
            rejects.push(reject(reason));
            continue;
        }
        if let Some(reason) = accept(record, line_no)? {
            rejects.push(reject(reason));
        }
    }
    Ok(())
}

/// Builds a validated graph from proposal, paper and citation streams.
pub fn ingest(
    proposals: impl BufRead,
    papers: impl BufRead,
    citations: impl BufRead,
) -> Result<Ingested> {
    let mut builder = MagBuilder::new();
    let mut rejects = Vec::new();

    read_stream(proposals, StreamKind::Proposals, &mut rejects, validate_proposal, |p, line| {
        builder.insert_proposal(p, line).map(|_| None)
    })?;
    read_stream(papers, StreamKind::Papers, &mut rejects, validate_paper, |p, line| {
        builder.insert_paper(p, line).map(|_| None)
    })?;
    read_stream(citations, StreamKind::Citations, &mut rejects, validate_citation, |e, _| {
        Ok(builder.insert_citation(e).err())
    })?;

    Ok(Ingested {
        mag: builder.build(),
        rejects,
    })
}

/// Per-split counts in the layout of the dataset statistics table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub proposals: usize,
    pub mi_citations: usize,
    pub non_mi_citations: usize,
    pub total_citations: usize,
    pub mi_papers: usize,
    pub non_mi_papers: usize,
    pub total_papers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
    pub total: SplitStats,
}

impl Stats {
    pub fn split(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "split\tproposals\tmi_citations\tnon_mi_citations\ttotal_citations\tmi_papers\tnon_mi_papers\ttotal_papers\n",
        );
        let rows = [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("total", &self.total),
        ];
        for (name, s) in rows {
            out.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                s.proposals,
                s.mi_citations,
                s.non_mi_citations,
                s.total_citations,
                s.mi_papers,
                s.non_mi_papers,
                s.total_papers
            ));
        }
        out
    }
}

/// Citations are counted per context; cited papers are distinct per split
/// (a paper with both MI and non-MI contexts counts in both columns).
pub fn stats(mag: &Mag) -> Stats {
    fn tally<'a>(mag: &'a Mag, props: impl Iterator<Item = &'a ProposalRecord>) -> SplitStats {
        let mut s = SplitStats::default();
        let mut mi = BTreeSet::new();
        let mut non_mi = BTreeSet::new();
        let mut all = BTreeSet::new();
        for p in props {
            s.proposals += 1;
            for e in mag.edges(&p.id) {
                all.insert(e.paper_id.as_str());
                for c in &e.contexts {
                    if c.intent.is_methodological() {
                        s.mi_citations += 1;
                        mi.insert(e.paper_id.as_str());
                    } else {
                        s.non_mi_citations += 1;
                        non_mi.insert(e.paper_id.as_str());
                    }
                }
            }
        }
        s.total_citations = s.mi_citations + s.non_mi_citations;
        s.mi_papers = mi.len();
        s.non_mi_papers = non_mi.len();
        s.total_papers = all.len();
        s
    }

    Stats {
        train: tally(mag, mag.proposals_in(Split::Train)),
        dev: tally(mag, mag.proposals_in(Split::Dev)),
        test: tally(mag, mag.proposals_in(Split::Test)),
        total: tally(mag, mag.proposals()),
    }
}

/// Published counts for the released dataset: (proposals, MI cited papers).
pub const RELEASED_SPLIT_COUNTS: [(Split, usize, usize); 3] = [
    (Split::Train, 704, 745),
    (Split::Dev, 86, 95),
    (Split::Test, 139, 193),
];

/// Published size of the restricted corpus of the released dataset.
pub const RELEASED_RESTRICTED_CORPUS: usize = 284;

/// Compares stats against the released dataset counts; returns mismatches.
/// Citation counts are not asserted (the published test row is inconsistent).
pub fn check_released_counts(stats: &Stats, restricted_corpus: usize) -> Vec<String> {
    let mut problems = Vec::new();
    for (split, proposals, mi_papers) in RELEASED_SPLIT_COUNTS {
        let s = stats.split(split);
        if s.proposals != proposals {
            problems.push(format!("{split}: {} proposals, expected {proposals}", s.proposals));
        }
        if s.mi_papers != mi_papers {
            problems.push(format!("{split}: {} MI cited papers, expected {mi_papers}", s.mi_papers));
        }
    }
    if restricted_corpus != RELEASED_RESTRICTED_CORPUS {
        problems.push(format!(
            "restricted corpus has {restricted_corpus} papers, expected {RELEASED_RESTRICTED_CORPUS}"
        ));
    }
    problems
}
