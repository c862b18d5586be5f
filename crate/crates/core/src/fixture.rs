//! Planted-structure synthetic dataset.
//!
//! Every proposal and paper belongs to one latent topic. A topic owns a small
//! set of marker tokens and each text carries a subset of its topic's
//! markers, buried in filler drawn from a very large vocabulary. A proposal's
//! methodology-intent citations go to papers of its topic holding at least
//! 60% of its markers; its other citations go to papers of other topics;
//! some papers are never cited. Filler words rarely repeat, so a random
//! encoder ranks mostly by noise while a trained one can learn the markers.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationContext, CitationEdge, Intent, Mag, MagBuilder, PaperRecord, ProposalRecord, Source, Split};
use crate::encoder::tokenize;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Minimum share of a proposal's topic markers found in each MI paper.
pub const MIN_MARKER_SHARE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub proposals: usize,
    pub papers: usize,
    pub topics: usize,
    pub markers_per_topic: usize,
    /// Markers carried by each proposal and paper, a subset of its topic's.
    pub markers_per_text: usize,
    pub filler_vocab: usize,
    /// Filler tokens per text.
    pub filler_per_text: usize,
    pub mi_per_proposal: usize,
    pub non_mi_per_proposal: usize,
    /// Fraction of papers never cited.
    pub distractor_fraction: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            proposals: 50,
            papers: 150,
            topics: 10,
            markers_per_topic: 6,
            markers_per_text: 3,
            filler_vocab: 100_000,
            filler_per_text: 24,
            mi_per_proposal: 3,
            non_mi_per_proposal: 2,
            distractor_fraction: 0.2,
            dev_fraction: 0.1,
            test_fraction: 0.2,
            seed: 1,
        }
    }
}

impl FixtureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.topics < 2 {
            return bad("fixture needs at least two topics".into());
        }
        if self.proposals < 3 {
            return bad("fixture needs at least three proposals".into());
        }
        if self.markers_per_text == 0 || self.filler_vocab == 0 || self.mi_per_proposal == 0 {
            return bad("markers, filler vocabulary and MI citations must be positive".into());
        }
        if self.markers_per_text > self.markers_per_topic {
            return bad("markers_per_text exceeds markers_per_topic".into());
        }
        if !(0.0..1.0).contains(&self.distractor_fraction) {
            return bad("distractor_fraction must lie in [0, 1)".into());
        }
        if !(self.dev_fraction >= 0.0 && self.test_fraction > 0.0 && self.dev_fraction + self.test_fraction < 1.0) {
            return bad("split fractions must leave room for a training split".into());
        }
        let citable = self.papers - (self.papers as f64 * self.distractor_fraction).round() as usize;
        if citable / self.topics < self.mi_per_proposal {
            return bad(format!(
                "{} citable papers over {} topics cannot supply {} MI papers per proposal",
                citable, self.topics, self.mi_per_proposal
            ));
        }
        Ok(())
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopics {
    pub markers: Vec<Vec<String>>,
    pub proposal_topic: BTreeMap<String, usize>,
    /// Topic of each paper; distractors included.
    pub paper_topic: BTreeMap<String, usize>,
    pub distractors: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub mag: Mag,
    pub topics: PlantedTopics,
}

const MI_VERBS: [&str; 3] = ["we adopt the procedure of", "our pipeline builds on", "we use the estimator from"];
const OTHER_VERBS: [&str; 3] = ["related work includes", "unlike", "a survey appears in"];

fn filler_word(i: usize) -> String {
    // pronounceable, alphanumeric, disjoint from marker names
    const SYL: [&str; 12] = ["ba", "ko", "ri", "mu", "te", "sa", "lo", "ne", "vi", "du", "pe", "ga"];
    let mut n = i;
    let mut out = String::new();
    for _ in 0..5 {
        out.push_str(SYL[n % 12]);
        n /= 12;
    }
    out
}

fn marker_word(topic: usize, j: usize) -> String {
    format!("mk{topic}x{j}")
}

struct Writer<'a> {
    rng: &'a mut Rng,
    filler: &'a [String],
    per_text: usize,
}

impl Writer<'_> {
    fn text(&mut self, markers: &[String]) -> String {
        let mut words: Vec<String> = (0..self.per_text)
            .map(|_| self.filler.choose(self.rng).expect("filler").clone())
            .collect();
        words.extend(markers.iter().cloned());
        words.shuffle(self.rng);
        words.join(" ")
    }
}

pub fn generate(config: &FixtureConfig) -> Result<Fixture> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, &[b"fixture"]);
    let filler: Vec<String> = (0..config.filler_vocab).map(filler_word).collect();
    let markers: Vec<Vec<String>> = (0..config.topics)
        .map(|t| (0..config.markers_per_topic).map(|j| marker_word(t, j)).collect())
        .collect();
    let min_share = (MIN_MARKER_SHARE * config.markers_per_text as f64).ceil() as usize;

    // papers: topic by index, distractors drawn at random
    let paper_ids: Vec<String> = (0..config.papers).map(|i| format!("L{i:04}")).collect();
    let n_distractors = (config.papers as f64 * config.distractor_fraction).round() as usize;
    let mut shuffled = paper_ids.clone();
    shuffled.shuffle(&mut rng);
    let distractors: BTreeSet<String> = shuffled[..n_distractors].iter().cloned().collect();
    let paper_topic: BTreeMap<String, usize> = paper_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i % config.topics))
        .collect();

    let mut b = MagBuilder::new();
    let mut paper_markers: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, id) in paper_ids.iter().enumerate() {
        let t = paper_topic[id];
        let mine: Vec<String> = markers[t]
            .choose_multiple(&mut rng, config.markers_per_text)
            .cloned()
            .collect();
        let mut w = Writer {
            rng: &mut rng,
            filler: &filler,
            per_text: config.filler_per_text,
        };
        let title = w.text(&mine[..1]);
        let abstract_text = w.text(&mine);
        let method = w.text(&mine);
        let full_text = format!(
            "1 Introduction\n{}\n\n2 Methodology\n{}\n\n3 Experiments\n{}\n\n4 Conclusion\n{}\n",
            w.text(&[]),
            method,
            w.text(&mine[..1]),
            w.text(&[])
        );
        b.add_paper(PaperRecord {
            id: id.clone(),
            title,
            abstract_text,
            year: Some(2000 + (i % 24) as i32),
            full_text: Some(full_text),
            source: Source::Gold,
        })?;
        paper_markers.insert(id.clone(), mine);
    }

    let citable_by_topic: Vec<Vec<&String>> = (0..config.topics)
        .map(|t| {
            paper_ids
                .iter()
                .filter(|id| paper_topic[*id] == t && !distractors.contains(*id))
                .collect()
        })
        .collect();

    // proposals: topic by index; held-out splits are dealt round-robin over
    // topics so held-out proposals spread across topics
    let proposal_ids: Vec<String> = (0..config.proposals).map(|i| format!("P{i:03}")).collect();
    let n_test = ((config.proposals as f64 * config.test_fraction).round() as usize).max(1);
    let n_dev = (config.proposals as f64 * config.dev_fraction).round() as usize;
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); config.topics];
    for i in 0..config.proposals {
        by_topic[i % config.topics].push(i);
    }
    let mut topic_order: Vec<usize> = (0..config.topics).collect();
    topic_order.shuffle(&mut rng);
    for members in &mut by_topic {
        members.shuffle(&mut rng);
    }
    let depth = by_topic.iter().map(Vec::len).max().unwrap_or(0);
    let order: Vec<usize> = (0..depth)
        .flat_map(|d| topic_order.iter().filter_map(|&t| by_topic[t].get(d).copied()).collect::<Vec<_>>())
        .collect();
    let mut split = vec![Split::Train; config.proposals];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_test {
            split[i] = Split::Test;
        } else if rank < n_test + n_dev {
            split[i] = Split::Dev;
        }
    }

    let mut proposal_topic = BTreeMap::new();
    for (i, id) in proposal_ids.iter().enumerate() {
        let t = i % config.topics;
        proposal_topic.insert(id.clone(), t);
        // the proposal takes the markers of one paper of its topic; MI papers
        // are that paper plus others sharing enough of those markers
        let anchor = *citable_by_topic[t].choose(&mut rng).expect("validated non-empty");
        let own: BTreeSet<&String> = paper_markers[anchor].iter().collect();
        let own_list: Vec<String> = paper_markers[anchor].clone();
        let eligible: Vec<&String> = citable_by_topic[t]
            .iter()
            .copied()
            .filter(|l| *l != anchor && paper_markers[*l].iter().filter(|m| own.contains(m)).count() >= min_share)
            .collect();
        let mut w = Writer {
            rng: &mut rng,
            filler: &filler,
            per_text: config.filler_per_text / 2,
        };
        let half = own_list.len().div_ceil(2);
        let problem = w.text(&own_list[..half]);
        let motivation = w.text(&own_list[half..]);
        b.add_proposal(ProposalRecord {
            id: id.clone(),
            problem,
            motivation,
            split: split[i],
            date: None,
        })?;

        let mut mi = vec![anchor];
        mi.extend(eligible.choose_multiple(&mut rng, config.mi_per_proposal - 1).copied());
        for paper in mi {
            let n_ctx = rng.random_range(1..=2);
            let mut contexts = Vec::with_capacity(n_ctx + 1);
            for _ in 0..n_ctx {
                let intent = if rng.random_bool(0.5) { Intent::Uses } else { Intent::Extension };
                let verb = MI_VERBS.choose(&mut rng).expect("verbs");
                let shared: Vec<&String> = paper_markers[paper].iter().filter(|m| own.contains(m)).collect();
                let marks: Vec<String> = shared.choose_multiple(&mut rng, 2).map(|m| (*m).clone()).collect();
                let mut w = Writer {
                    rng: &mut rng,
                    filler: &filler,
                    per_text: config.filler_per_text / 3,
                };
                contexts.push(CitationContext {
                    text: format!("{verb} {}", w.text(&marks)),
                    intent,
                });
            }
            if rng.random_bool(0.3) {
                contexts.push(CitationContext {
                    text: format!("see also {}", filler.choose(&mut rng).expect("filler")),
                    intent: Intent::Background,
                });
            }
            b.add_citation(CitationEdge {
                proposal_id: id.clone(),
                paper_id: paper.clone(),
                contexts,
            })?;
        }

        let others: Vec<&String> = (0..config.topics)
            .filter(|o| *o != t)
            .flat_map(|o| citable_by_topic[o].iter().copied())
            .collect();
        for paper in others.choose_multiple(&mut rng, config.non_mi_per_proposal) {
            let intent = *[Intent::Background, Intent::Similar, Intent::Difference, Intent::Motivation]
                .choose(&mut rng)
                .expect("intents");
            let verb = OTHER_VERBS.choose(&mut rng).expect("verbs");
            let marks: Vec<String> = paper_markers[*paper][..1].to_vec();
            let mut w = Writer {
                rng: &mut rng,
                filler: &filler,
                per_text: config.filler_per_text / 3,
            };
            b.add_citation(CitationEdge {
                proposal_id: id.clone(),
                paper_id: (*paper).clone(),
                contexts: vec![CitationContext {
                    text: format!("{verb} {}", w.text(&marks)),
                    intent,
                }],
            })?;
        }
    }

    Ok(Fixture {
        mag: b.build(),
        topics: PlantedTopics {
            markers,
            proposal_topic,
            paper_topic,
            distractors,
        },
    })
}

/// Verifies the planted rules against a dataset; returns every violation.
pub fn check(mag: &Mag, topics: &PlantedTopics) -> Vec<String> {
    let mut out = Vec::new();
    let markers_in = |text: &str, t: usize| -> usize {
        let toks: BTreeSet<String> = tokenize(text).into_iter().collect();
        topics.markers[t].iter().filter(|m| toks.contains(*m)).count()
    };
    for p in mag.proposals() {
        let Some(&t) = topics.proposal_topic.get(&p.id) else {
            out.push(format!("proposal {} has no planted topic", p.id));
            continue;
        };
        if t >= topics.markers.len() {
            out.push(format!("proposal {} has unknown topic {t}", p.id));
            continue;
        }
        let edges = mag.edges(&p.id);
        if !edges.iter().any(|e| e.is_mi()) {
            out.push(format!("proposal {} has no MI citation", p.id));
        }
        let own = markers_in(&p.text(), t);
        for e in edges {
            let paper = match mag.paper(&e.paper_id) {
                Ok(paper) => paper,
                Err(_) => {
                    out.push(format!("edge {} -> {} dangles", p.id, e.paper_id));
                    continue;
                }
            };
            let pt = topics.paper_topic.get(&e.paper_id).copied();
            if topics.distractors.contains(&e.paper_id) {
                out.push(format!("distractor {} is cited by {}", e.paper_id, p.id));
            }
            if e.is_mi() {
                let shared = markers_in(&paper.text(), t);
                if pt != Some(t) || own == 0 || (shared as f64) < MIN_MARKER_SHARE * own as f64 {
                    out.push(format!(
                        "MI edge {} -> {} shares {shared}/{own} topic markers (paper topic {pt:?}, proposal topic {t})",
                        p.id, e.paper_id
                    ));
                }
            } else if pt == Some(t) {
                out.push(format!("non-MI edge {} -> {} stays within topic {t}", p.id, e.paper_id));
            }
        }
    }
    out
}
