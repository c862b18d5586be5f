//! First-stage retrieval: embed a literature corpus, rank it for each
//! proposal by distance in encoder space, and score the rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSetting, Mag, PaperRecord, ProposalRecord, Split};
use crate::encoder::TextEncoder;
use crate::metrics::{average_precision, recall_at_k};
use crate::store::EmbeddingStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// `1 - cosine similarity`; zero-norm vectors have similarity 0.
    Cosine,
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown distance metric `{other}`"))),
        }
    }
}

impl DistanceMetric {
    pub fn distance(self, query: &[f64], row: &[f32]) -> f64 {
        match self {
            DistanceMetric::Euclidean => query
                .iter()
                .zip(row)
                .map(|(&q, &r)| {
                    let d = q - r as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let (mut dot, mut nq, mut nr) = (0.0, 0.0, 0.0);
                for (&q, &r) in query.iter().zip(row) {
                    let r = r as f64;
                    dot += q * r;
                    nq += q * q;
                    nr += r * r;
                }
                if nq == 0.0 || nr == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (nq.sqrt() * nr.sqrt())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPaper {
    pub paper_id: String,
    pub distance: f64,
}

/// Full ordering of a corpus for one proposal: ascending distance, ties by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub proposal_id: String,
    pub entries: Vec<RankedPaper>,
}

impl Ranking {
    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.paper_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Default text for a paper: title, newline, abstract. Papers without an
/// abstract yield `None`.
pub fn paper_text(paper: &PaperRecord) -> Option<String> {
    if paper.abstract_text.trim().is_empty() {
        None
    } else {
        Some(paper.text())
    }
}

/// Embeds papers in the given order. Papers lacking an abstract are skipped
/// with a warning.
pub fn embed_corpus<'a>(
    encoder: &dyn TextEncoder,
    papers: impl IntoIterator<Item = &'a PaperRecord>,
) -> Result<EmbeddingStore> {
    let items: Vec<(&str, String)> = papers
        .into_iter()
        .filter_map(|p| match paper_text(p) {
            Some(t) => Some((p.id.as_str(), t)),
            None => {
                log::warn!("paper `{}` has no abstract; excluded from the store", p.id);
                None
            }
        })
        .collect();
    EmbeddingStore::from_texts(encoder, items)
}

/// Ranks every row of `store` (or only `restrict_to`, when given) against `query`.
pub fn rank_vector(
    proposal_id: &str,
    query: &[f64],
    store: &EmbeddingStore,
    restrict_to: Option<&BTreeSet<String>>,
    metric: DistanceMetric,
) -> Result<Ranking> {
    if query.len() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: query.len(),
        });
    }
    let mut entries: Vec<RankedPaper> = store
        .iter()
        .filter(|(id, _)| restrict_to.map_or(true, |r| r.contains(*id)))
        .map(|(id, row)| RankedPaper {
            paper_id: id.to_owned(),
            distance: metric.distance(query, row),
        })
        .collect();
    entries.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.paper_id.cmp(&b.paper_id))
    });
    Ok(Ranking {
        proposal_id: proposal_id.to_owned(),
        entries,
    })
}

/// Ranks the store for a proposal using problem + newline + motivation as the query text.
pub fn rank(
    encoder: &dyn TextEncoder,
    proposal: &ProposalRecord,
    store: &EmbeddingStore,
    metric: DistanceMetric,
) -> Result<Ranking> {
    let query = encoder.embed_text(&proposal.text())?;
    rank_vector(&proposal.id, &query, store, None, metric)
}

/// Where proposal query vectors come from.
#[derive(Clone, Copy)]
pub enum QuerySource<'a> {
    Encoder(&'a dyn TextEncoder),
    /// Vectors precomputed per proposal id.
    Precomputed(&'a EmbeddingStore),
}

impl QuerySource<'_> {
    pub fn query(&self, proposal: &ProposalRecord) -> Result<Vec<f64>> {
        match self {
            QuerySource::Encoder(e) => e.embed_text(&proposal.text()),
            QuerySource::Precomputed(s) => s.vector(&proposal.id).ok_or_else(|| Error::UnknownId {
                kind: "proposal embedding",
                id: proposal.id.clone(),
            }),
        }
    }
}

/// Ranks the `setting` corpus for every proposal of `split`, in proposal-id order.
pub fn rank_split(
    queries: QuerySource<'_>,
    store: &EmbeddingStore,
    mag: &Mag,
    setting: CorpusSetting,
    split: Split,
    metric: DistanceMetric,
) -> Result<Vec<Ranking>> {
    let corpus: BTreeSet<String> = mag.corpus_for(setting, split)?.into_iter().collect();
    let absent = corpus.iter().filter(|id| store.get(id).is_none()).count();
    if absent > 0 {
        log::warn!("{absent} corpus papers have no stored embedding and cannot be ranked");
    }
    mag.proposals_in(split)
        .map(|p| rank_vector(&p.id, &queries.query(p)?, store, Some(&corpus), metric))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalEval {
    pub proposal_id: String,
    /// Recall@k in the order of the report's `k_list`.
    pub recall: Vec<f64>,
    pub average_precision: f64,
    pub relevant_in_corpus: usize,
    pub relevant_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: CorpusSetting,
    pub k_list: Vec<usize>,
    pub mean_recall: Vec<f64>,
    pub map: f64,
    pub proposals: Vec<ProposalEval>,
    /// Proposals with no relevant paper inside the ranked corpus.
    pub excluded: Vec<String>,
    /// Relevant papers (summed over proposals) absent from the ranked corpus.
    pub relevant_missing: usize,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.k_list.iter().position(|&x| x == k).map(|i| self.mean_recall[i])
    }

    pub fn tsv_header(k_list: &[usize]) -> String {
        let mut h = String::from("setting");
        for k in k_list {
            h.push_str(&format!("\tR@{k}"));
        }
        h.push_str("\tmAP");
        h
    }

    pub fn tsv_row(&self) -> String {
        let mut row = self.setting.to_string();
        for r in &self.mean_recall {
            row.push_str(&format!("\t{r:.6}"));
        }
        row.push_str(&format!("\t{:.6}", self.map));
        row
    }

    pub fn to_tsv(&self) -> String {
        format!("{}\n{}\n", Self::tsv_header(&self.k_list), self.tsv_row())
    }

    pub fn write_json(&self, out: &mut impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Scores rankings against the MI ground truth of each ranked proposal.
pub fn evaluate_rankings(
    rankings: &[Ranking],
    mag: &Mag,
    setting: CorpusSetting,
    k_list: &[usize],
) -> Result<EvalReport> {
    if k_list.iter().any(|&k| k < 1) {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut proposals = Vec::new();
    let mut excluded = Vec::new();
    let mut relevant_missing = 0;
    for ranking in rankings {
        let relevant = mag.mi_papers(&ranking.proposal_id)?;
        let ids = ranking.ids();
        let present: BTreeSet<&str> = ids.iter().copied().collect();
        let in_corpus = relevant.iter().filter(|r| present.contains(r.as_str())).count();
        let missing = relevant.len() - in_corpus;
        relevant_missing += missing;
        if missing > 0 {
            log::warn!(
                "{missing} relevant papers of `{}` are not in the {setting} corpus",
                ranking.proposal_id
            );
        }
        if in_corpus == 0 {
            excluded.push(ranking.proposal_id.clone());
            continue;
        }
        let recall = k_list
            .iter()
            .map(|&k| recall_at_k(&ids, &relevant, k))
            .collect::<Result<Vec<_>>>()?;
        proposals.push(ProposalEval {
            proposal_id: ranking.proposal_id.clone(),
            recall,
            average_precision: average_precision(&ids, &relevant)?,
            relevant_in_corpus: in_corpus,
            relevant_missing: missing,
        });
    }
    if proposals.is_empty() {
        return Err(Error::NothingToEvaluate);
    }
    let n = proposals.len() as f64;
    let mean_recall = (0..k_list.len())
        .map(|i| proposals.iter().map(|p| p.recall[i]).sum::<f64>() / n)
        .collect();
    let map = proposals.iter().map(|p| p.average_precision).sum::<f64>() / n;
    Ok(EvalReport {
        setting,
        k_list: k_list.to_vec(),
        mean_recall,
        map,
        proposals,
        excluded,
        relevant_missing,
    })
}

/// Ranks and scores the test split.
pub fn evaluate(
    queries: QuerySource<'_>,
    store: &EmbeddingStore,
    mag: &Mag,
    setting: CorpusSetting,
    k_list: &[usize],
    metric: DistanceMetric,
) -> Result<(EvalReport, Vec<Ranking>)> {
    if mag.proposals_in(Split::Test).next().is_none() {
        return Err(Error::NothingToEvaluate);
    }
    let rankings = rank_split(queries, store, mag, setting, Split::Test, metric)?;
    let report = evaluate_rankings(&rankings, mag, setting, k_list)?;
    Ok((report, rankings))
}

/// Mean recall@k for k = 1..=k_max over the includable proposals of `rankings`.
pub fn coverage_curve(rankings: &[Ranking], mag: &Mag, k_max: usize) -> Result<Vec<(usize, f64)>> {
    let ks: Vec<usize> = (1..=k_max).collect();
    let report = evaluate_rankings(rankings, mag, CorpusSetting::Restricted, &ks)?;
    Ok(ks.into_iter().zip(report.mean_recall).collect())
}

pub fn write_rankings(rankings: &[Ranking], out: &mut impl Write) -> Result<()> {
    for r in rankings {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_rankings(input: &str) -> Result<Vec<Ranking>> {
    input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Per-id map of proposal queries, for callers that need random access.
pub fn proposal_queries(
    queries: QuerySource<'_>,
    proposals: impl IntoIterator<Item = impl std::borrow::Borrow<ProposalRecord>>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    proposals
        .into_iter()
        .map(|p| {
            let p = p.borrow();
            Ok((p.id.clone(), queries.query(p)?))
        })
        .collect()
}
