//! Keyword-based domain representations of proposals and papers.
//!
//! Entities are flattened into a canonical keyword string, embedded, and
//! compared by cosine similarity. The most domain-similar uncited paper is
//! the hard negative for proposal-paper triplets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{Mag, Reject, StreamKind};
use crate::encoder::{tokenize, TextEncoder};
use crate::store::EmbeddingStore;
use crate::{Error, Result};

/// Bundled stopword list for the fallback keyword extractor, sorted.
pub const STOPWORDS: [&str; 120] = [
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and",
    "any", "are", "as", "at", "be", "because", "been", "before", "being", "below", "between",
    "both", "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during",
    "each", "few", "for", "from", "further", "had", "has", "have", "having", "he", "her",
    "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself",
    "just", "me", "more", "most", "my", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "out", "over", "own", "same", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "theirs", "them", "then", "there",
    "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "very",
    "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why",
    "will", "with", "would", "you", "your", "yours",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnerRole {
    Proposal,
    Paper,
}

/// Scientific entities of one proposal or paper, by category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    #[serde(default)]
    pub task: Vec<String>,
    #[serde(default)]
    pub method: Vec<String>,
    #[serde(default)]
    pub metric: Vec<String>,
    #[serde(default)]
    pub material: Vec<String>,
    #[serde(default)]
    pub generic: Vec<String>,
}

impl EntitySet {
    fn all(&self) -> impl Iterator<Item = &String> {
        self.task
            .iter()
            .chain(&self.method)
            .chain(&self.metric)
            .chain(&self.material)
            .chain(&self.generic)
    }

    /// Trims entries, drops empties and removes duplicates within each category.
    pub fn normalized(&self) -> EntitySet {
        fn clean(v: &[String]) -> Vec<String> {
            let mut seen = BTreeSet::new();
            v.iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty() && seen.insert(s.clone()))
                .collect()
        }
        EntitySet {
            task: clean(&self.task),
            method: clean(&self.method),
            metric: clean(&self.metric),
            material: clean(&self.material),
            generic: clean(&self.generic),
        }
    }

    /// Unique non-stopword alphanumeric tokens of `text`, as generic entities.
    pub fn from_text_fallback(text: &str) -> EntitySet {
        let tokens: BTreeSet<String> = tokenize(text)
            .into_iter()
            .filter(|t| !is_stopword(t))
            .collect();
        EntitySet {
            generic: tokens.into_iter().collect(),
            ..EntitySet::default()
        }
    }
}

/// One line of `entities.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub owner_id: String,
    pub owner_role: OwnerRole,
    #[serde(flatten)]
    pub entities: EntitySet,
}

/// Entity sets keyed by (role, owner id).
pub type EntityTable = BTreeMap<(OwnerRole, String), EntitySet>;

/// Parses `entities.jsonl`. Malformed lines are rejected per record; a
/// repeated owner keeps the first record.
pub fn read_entities(reader: impl BufRead) -> Result<(EntityTable, Vec<Reject>)> {
    let mut table = EntityTable::new();
    let mut rejects = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let reject = |reason: String| Reject {
            stream: StreamKind::Entities,
            line: idx + 1,
            reason,
        };
        let Ok(text) = std::str::from_utf8(&line) else {
            rejects.push(reject("invalid UTF-8".into()));
            continue;
        };
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EntityRecord>(text) {
            Ok(r) if r.owner_id.trim().is_empty() => rejects.push(reject("empty owner_id".into())),
            Ok(r) => {
                let key = (r.owner_role, r.owner_id);
                if table.contains_key(&key) {
                    rejects.push(reject(format!("duplicate entities for `{}`", key.1)));
                } else {
                    table.insert(key, r.entities.normalized());
                }
            }
            Err(e) => rejects.push(reject(format!("malformed record: {e}"))),
        }
    }
    Ok((table, rejects))
}

/// All entities flattened, deduplicated and sorted case-insensitively
/// (case-sensitive tiebreak), joined by single spaces.
pub fn canonical_text(entities: &EntitySet) -> String {
    let mut all: Vec<&str> = entities
        .all()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    all.sort_by(|a, b| a.to_lowercase().cmp(&b.to_lowercase()).then_with(|| a.cmp(b)));
    all.join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainVector {
    pub owner_id: String,
    pub owner_role: OwnerRole,
    pub vector: Vec<f64>,
}

/// Embeds a canonical keyword string; empty text maps to the zero vector.
pub fn domain_vector(
    text: &str,
    embedder: &dyn TextEncoder,
    owner_id: &str,
    owner_role: OwnerRole,
) -> Result<DomainVector> {
    let vector = if text.is_empty() {
        vec![0.0; embedder.dim()]
    } else {
        let v = embedder.embed_text(text).map_err(|e| Error::Embedding {
            owner: owner_id.to_owned(),
            reason: e.to_string(),
        })?;
        if v.len() != embedder.dim() || !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Embedding {
                owner: owner_id.to_owned(),
                reason: "embedder returned a malformed vector".into(),
            });
        }
        v
    };
    Ok(DomainVector {
        owner_id: owner_id.to_owned(),
        owner_role,
        vector,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Domain vectors for proposals and papers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainIndex {
    pub proposals: BTreeMap<String, Vec<f64>>,
    pub papers: BTreeMap<String, Vec<f64>>,
}

impl DomainIndex {
    /// Computes vectors for every proposal and paper of the graph. Owners
    /// without a supplied entity set fall back to keyword extraction.
    pub fn build(mag: &Mag, entities: &EntityTable, embedder: &dyn TextEncoder) -> Result<Self> {
        let entity_set = |role: OwnerRole, id: &str, text: String| {
            entities
                .get(&(role, id.to_owned()))
                .cloned()
                .unwrap_or_else(|| EntitySet::from_text_fallback(&text))
        };
        let mut index = DomainIndex::default();
        for p in mag.proposals() {
            let set = entity_set(OwnerRole::Proposal, &p.id, p.text());
            let dv = domain_vector(&canonical_text(&set), embedder, &p.id, OwnerRole::Proposal)?;
            index.proposals.insert(p.id.clone(), dv.vector);
        }
        for p in mag.papers() {
            let set = entity_set(OwnerRole::Paper, &p.id, p.text());
            let dv = domain_vector(&canonical_text(&set), embedder, &p.id, OwnerRole::Paper)?;
            index.papers.insert(p.id.clone(), dv.vector);
        }
        Ok(index)
    }

    /// Looks up precomputed vectors by owner id in a single store.
    pub fn from_store(mag: &Mag, store: &EmbeddingStore) -> Result<Self> {
        let get = |kind: &'static str, id: &str| {
            store.vector(id).ok_or_else(|| Error::UnknownId {
                kind,
                id: id.to_owned(),
            })
        };
        let mut index = DomainIndex::default();
        for p in mag.proposals() {
            index.proposals.insert(p.id.clone(), get("proposal domain vector", &p.id)?);
        }
        for p in mag.papers() {
            index.papers.insert(p.id.clone(), get("paper domain vector", &p.id)?);
        }
        Ok(index)
    }

    pub fn proposal(&self, id: &str) -> Result<&[f64]> {
        self.proposals.get(id).map(Vec::as_slice).ok_or_else(|| Error::UnknownId {
            kind: "proposal domain vector",
            id: id.to_owned(),
        })
    }

    /// argmax over `corpus − exclusion` of similarity to the proposal's
    /// domain vector. Ties and all-zero pools resolve to the smallest id;
    /// zero-norm candidates only win when every candidate is zero.
    /// `Ok(None)` signals an empty candidate pool.
    pub fn hardest_negative(
        &self,
        proposal_id: &str,
        exclusion: &BTreeSet<&str>,
        corpus: &[String],
    ) -> Result<Option<String>> {
        let query = self.proposal(proposal_id)?;
        let mut candidates: Vec<&str> = corpus
            .iter()
            .map(String::as_str)
            .filter(|id| !exclusion.contains(id))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let Some(&first) = candidates.first() else {
            return Ok(None);
        };
        let mut best: Option<(&str, f64)> = None;
        for id in candidates {
            let v = self.papers.get(id).ok_or_else(|| Error::UnknownId {
                kind: "paper domain vector",
                id: id.to_owned(),
            })?;
            if norm(v) == 0.0 {
                continue;
            }
            let s = sim(query, v)?;
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((id, s));
            }
        }
        Ok(Some(best.map_or(first, |(id, _)| id).to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::mag;
    use crate::corpus::{Intent, Split};
    use crate::encoder::{EncoderParams, UNK_TOKEN};
    use proptest::prelude::*;

    fn set(task: &[&str], method: &[&str], generic: &[&str]) -> EntitySet {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
        EntitySet {
            task: v(task),
            method: v(method),
            generic: v(generic),
            ..EntitySet::default()
        }
    }

    #[test]
    fn stopword_list_is_sorted_and_unique() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_stopword("the"));
        assert!(!is_stopword("transformer"));
    }

    #[test]
    fn canonical_text_cases() {
        assert_eq!(canonical_text(&set(&["model compression"], &["BERT"], &[])), "BERT model compression");
        assert_eq!(canonical_text(&EntitySet::default()), "");
        assert_eq!(canonical_text(&set(&[], &[], &["x", "x"])), "x");
        assert_eq!(canonical_text(&set(&["b", "B", "a"], &[" a "], &["  "])), "a B b");
    }

    #[test]
    fn fallback_extractor_drops_stopwords() {
        let s = EntitySet::from_text_fallback("The pruning of the BERT model, and pruning.");
        assert_eq!(s.generic, ["bert", "model", "pruning"]);
    }

    #[test]
    fn entities_jsonl() {
        let input = r#"{"owner_id":"P1","owner_role":"proposal","task":["qa"," qa "],"method":["bert"]}
{"owner_id":"A","owner_role":"paper","generic":["x"],"extra":1}
oops
{"owner_id":"A","owner_role":"paper"}
"#;
        let (table, rejects) = read_entities(input.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[&(OwnerRole::Proposal, "P1".into())].task, ["qa"]);
        assert_eq!(rejects.iter().map(|r| r.line).collect::<Vec<_>>(), [3, 4]);
    }

    #[test]
    fn sim_cases() {
        let v = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((sim(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert!((sim(&v, &neg).unwrap() + 1.0).abs() < 1e-9);
        assert_eq!(sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(sim(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn domain_vector_cases() {
        let enc = EncoderParams::init(EncoderParams::vocab_from_texts(["bert compression"]), 3, 4, 2).unwrap();
        assert_eq!(enc.vocab()[0], UNK_TOKEN);
        let z = domain_vector("", &enc, "P", OwnerRole::Proposal).unwrap();
        assert_eq!(z.vector, vec![0.0; 4]);
        let a = domain_vector("BERT compression", &enc, "P", OwnerRole::Proposal).unwrap();
        let b = domain_vector("BERT compression", &enc, "Q", OwnerRole::Paper).unwrap();
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.vector, enc.encode("BERT compression"));
    }

    fn index(proposal: Vec<f64>, papers: &[(&str, Vec<f64>)]) -> DomainIndex {
        DomainIndex {
            proposals: BTreeMap::from([("P".to_string(), proposal)]),
            papers: papers.iter().map(|(id, v)| (id.to_string(), v.clone())).collect(),
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hardest_negative_cases() {
        let idx = index(vec![1.0, 0.0], &[("A", vec![1.0, 0.0]), ("B", vec![0.0, 1.0])]);
        let corpus = ids(&["A", "B"]);
        assert_eq!(idx.hardest_negative("P", &BTreeSet::from(["A"]), &corpus).unwrap().as_deref(), Some("B"));
        assert_eq!(idx.hardest_negative("P", &BTreeSet::new(), &corpus).unwrap().as_deref(), Some("A"));
        assert_eq!(idx.hardest_negative("P", &BTreeSet::from(["A", "B"]), &corpus).unwrap(), None);
    }

    #[test]
    fn zero_vectors_lose_unless_all_zero() {
        let idx = index(
            vec![1.0, 0.0],
            &[("A", vec![0.0, 0.0]), ("B", vec![-1.0, 0.0]), ("C", vec![0.0, 0.0])],
        );
        let corpus = ids(&["A", "B", "C"]);
        assert_eq!(idx.hardest_negative("P", &BTreeSet::new(), &corpus).unwrap().as_deref(), Some("B"));
        let excl = BTreeSet::from(["B"]);
        assert_eq!(idx.hardest_negative("P", &excl, &corpus).unwrap().as_deref(), Some("A"));
    }

    #[test]
    fn five_paper_fixture_matches_scan() {
        let papers = [
            ("A", vec![0.9, 0.1, 0.0]),
            ("B", vec![0.2, 0.8, 0.1]),
            ("C", vec![0.7, 0.7, 0.0]),
            ("D", vec![1.0, 0.05, 0.2]),
            ("E", vec![-0.5, 0.2, 0.9]),
        ];
        let idx = index(vec![1.0, 0.2, 0.1], &papers);
        let corpus = ids(&["A", "B", "C", "D", "E"]);
        for excl in [vec![], vec!["D"], vec!["A", "D"], vec!["A", "C", "D"]] {
            let exclusion: BTreeSet<&str> = excl.iter().copied().collect();
            // oracle: scan every candidate with an explicit cosine
            let mut best: Option<(&str, f64)> = None;
            for (id, v) in &papers {
                if exclusion.contains(id) {
                    continue;
                }
                let q = [1.0, 0.2, 0.1];
                let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                let c = dot / (q.iter().map(|x| x * x).sum::<f64>().sqrt() * v.iter().map(|x| x * x).sum::<f64>().sqrt());
                if best.map_or(true, |(_, b)| c > b) {
                    best = Some((id, c));
                }
            }
            let got = idx.hardest_negative("P", &exclusion, &corpus).unwrap();
            assert_eq!(got.as_deref(), best.map(|b| b.0));
        }
    }

    #[test]
    fn build_uses_supplied_entities_then_fallback() {
        let g = mag(&[("P", Split::Train)], &["A"], &[("P", "A", &[Intent::Uses])]);
        let enc = EncoderParams::init(EncoderParams::vocab_from_texts(["problem motivation title abstract qa"]), 3, 3, 4).unwrap();
        let mut table = EntityTable::new();
        table.insert((OwnerRole::Proposal, "P".into()), set(&["qa"], &[], &[]));
        let idx = DomainIndex::build(&g, &table, &enc).unwrap();
        assert_eq!(idx.proposals["P"], enc.encode("qa"));
        // fallback: "title A\nabstract A" -> {a, abstract, title} minus stopword "a"
        assert_eq!(idx.papers["A"], enc.encode("abstract title"));
    }

    proptest! {
        #[test]
        fn canonical_text_is_order_insensitive(mut words in proptest::collection::vec("[a-cA-C ]{0,4}", 0..8), seed in any::<u64>()) {
            let a = EntitySet { generic: words.clone(), ..EntitySet::default() };
            use rand::seq::SliceRandom;
            let mut rng = crate::rng::from_seed(seed);
            words.shuffle(&mut rng);
            let (task, method) = words.split_at(words.len() / 2);
            let b = EntitySet { task: task.to_vec(), method: method.to_vec(), ..EntitySet::default() };
            prop_assert_eq!(canonical_text(&a), canonical_text(&b));
        }

        #[test]
        fn hardest_negative_never_excluded_and_scale_invariant(
            vecs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 1..8),
            query in proptest::collection::vec(-1.0f64..1.0, 3),
            mask in proptest::collection::vec(any::<bool>(), 8),
            scale in 0.01f64..100.0,
        ) {
            let names: Vec<String> = (0..vecs.len()).map(|i| format!("p{i}")).collect();
            let papers: Vec<(&str, Vec<f64>)> = names.iter().map(String::as_str).zip(vecs.iter().cloned()).collect();
            let scaled: Vec<(&str, Vec<f64>)> = papers.iter().map(|(id, v)| (*id, v.iter().map(|x| x * scale).collect())).collect();
            let exclusion: BTreeSet<&str> = names.iter().zip(&mask).filter(|(_, m)| **m).map(|(n, _)| n.as_str()).collect();
            let a = index(query.clone(), &papers).hardest_negative("P", &exclusion, &names).unwrap();
            let b = index(query, &scaled).hardest_negative("P", &exclusion, &names).unwrap();
            if let Some(id) = &a {
                prop_assert!(!exclusion.contains(id.as_str()));
            } else {
                prop_assert_eq!(exclusion.len(), names.len());
            }
            prop_assert_eq!(a, b);
        }
    }
}
