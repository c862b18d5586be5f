//! Graph-guided triplet synthesis.
//!
//! Each visit of a training proposal draws one methodology-intent positive
//! (a cited paper and one of its MI contexts) and emits three triplets:
//!
//! | kind | anchor    | positive  | hard negative                          | soft negative            |
//! |------|-----------|-----------|----------------------------------------|--------------------------|
//! | T1   | proposal  | paper     | most domain-similar uncited paper      | uniform uncited paper    |
//! | T2   | context   | proposal  | other proposal sharing a cited paper   | uniform other proposal   |
//! | T3   | context   | paper     | cited paper with no MI context         | uniform uncited paper    |
//!
//! Hard or soft is drawn once per visit with `P(hard) = alpha`. When a hard
//! pool is empty the soft rule is used and the triplet is marked soft.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::corpus::{Mag, Split};
use crate::domain::DomainIndex;
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TextRef {
    Proposal(String),
    Paper(String),
    /// Context `index` on the edge `proposal_id -> paper_id`.
    Context {
        proposal_id: String,
        paper_id: String,
        index: usize,
    },
}

impl TextRef {
    pub fn role(&self) -> &'static str {
        match self {
            TextRef::Proposal(_) => "proposal",
            TextRef::Paper(_) => "paper",
            TextRef::Context { .. } => "context",
        }
    }

    /// Stable key; contexts render as `proposal|paper#index`.
    pub fn key(&self) -> String {
        match self {
            TextRef::Proposal(id) | TextRef::Paper(id) => id.clone(),
            TextRef::Context {
                proposal_id,
                paper_id,
                index,
            } => format!("{proposal_id}|{paper_id}#{index}"),
        }
    }

    /// Text fed to the encoder for this reference.
    pub fn text(&self, mag: &Mag) -> Result<String> {
        match self {
            TextRef::Proposal(id) => Ok(mag.proposal(id)?.text()),
            TextRef::Paper(id) => Ok(mag.paper(id)?.text()),
            TextRef::Context {
                proposal_id,
                paper_id,
                index,
            } => mag
                .edge(proposal_id, paper_id)
                .and_then(|e| e.contexts.get(*index))
                .map(|c| c.text.clone())
                .ok_or_else(|| Error::UnknownId {
                    kind: "citation context",
                    id: self.key(),
                }),
        }
    }
}

impl Serialize for TextRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TextRef", 2)?;
        st.serialize_field("role", self.role())?;
        st.serialize_field("id", &self.key())?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TripletKind {
    T1,
    T2,
    T3,
}

impl TripletKind {
    pub const ALL: [TripletKind; 3] = [TripletKind::T1, TripletKind::T2, TripletKind::T3];

    pub fn name(self) -> &'static str {
        match self {
            TripletKind::T1 => "T1",
            TripletKind::T2 => "T2",
            TripletKind::T3 => "T3",
        }
    }
}

impl fmt::Display for TripletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeClass {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Triplet {
    pub sample_id: String,
    pub epoch: usize,
    pub kind: TripletKind,
    pub negative_class: NegativeClass,
    pub anchor: TextRef,
    pub positive: TextRef,
    pub negative: TextRef,
}

/// The triplets synthesized for one sample visit, kept together in a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletGroup {
    pub sample_id: String,
    pub triplets: Vec<Triplet>,
}

impl TripletGroup {
    pub fn is_complete(&self) -> bool {
        TripletKind::ALL
            .iter()
            .all(|k| self.triplets.iter().any(|t| t.kind == *k))
    }

    pub fn get(&self, kind: TripletKind) -> Option<&Triplet> {
        self.triplets.iter().find(|t| t.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipRecord {
    pub epoch: usize,
    pub sample_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<TripletKind>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Probability of drawing hard negatives.
    pub alpha: f64,
    pub seed: u64,
    pub epochs: usize,
    /// Draw hard/soft separately for each triplet instead of once per visit.
    pub per_triplet_draw: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            seed: 0,
            epochs: 1,
            per_triplet_draw: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// A selected positive: cited paper and one of its MI contexts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Positive {
    pub paper_id: String,
    pub context_index: usize,
}

/// Uniform positive over the proposal's MI papers, then uniform MI context on
/// that edge. `None` when the proposal has no MI citation.
pub fn select_positive(rng: &mut Rng, mag: &Mag, proposal_id: &str) -> Result<Option<Positive>> {
    mag.proposal(proposal_id)?;
    let mi_edges: Vec<_> = mag.edges(proposal_id).iter().filter(|e| e.is_mi()).collect();
    let Some(edge) = mi_edges.choose(rng) else {
        return Ok(None);
    };
    let contexts = edge.mi_context_indices();
    let context_index = *contexts.choose(rng).expect("MI edge has an MI context");
    Ok(Some(Positive {
        paper_id: edge.paper_id.clone(),
        context_index,
    }))
}

/// `r ~ U(0, 1]`; hard iff `r <= alpha`.
pub fn draw_negative_class(rng: &mut Rng, alpha: f64) -> NegativeClass {
    let r = 1.0 - rng.random::<f64>();
    if r <= alpha {
        NegativeClass::Hard
    } else {
        NegativeClass::Soft
    }
}

/// Draws negatives for the three triplet kinds over a fixed graph.
pub struct NegativeSampler<'a> {
    mag: &'a Mag,
    /// Candidate papers for T1 and soft T3 negatives, ascending.
    corpus: Vec<String>,
    domain: &'a DomainIndex,
    /// Proposal pool for T2, ascending.
    pool: Vec<String>,
    pool_split: Split,
}

impl<'a> NegativeSampler<'a> {
    /// Sampler over the training split: papers cited by training proposals,
    /// and training proposals as T2 negatives.
    pub fn for_training(mag: &'a Mag, domain: &'a DomainIndex) -> Self {
        Self::new(
            mag,
            mag.papers_cited_by(Split::Train).into_iter().collect(),
            domain,
            Split::Train,
        )
    }

    pub fn new(mag: &'a Mag, mut corpus: Vec<String>, domain: &'a DomainIndex, pool_split: Split) -> Self {
        corpus.sort();
        corpus.dedup();
        let pool = mag.proposals_in(pool_split).map(|p| p.id.clone()).collect();
        Self {
            mag,
            corpus,
            domain,
            pool,
            pool_split,
        }
    }

    pub fn corpus(&self) -> &[String] {
        &self.corpus
    }

    pub fn mag(&self) -> &Mag {
        self.mag
    }

    fn uncited(&self, proposal_id: &str) -> Vec<&str> {
        let cited = self.mag.cited_papers(proposal_id);
        self.corpus
            .iter()
            .map(String::as_str)
            .filter(|id| !cited.contains(id))
            .collect()
    }

    /// T1: hard is the argmax of domain similarity over `corpus − cited`,
    /// soft is uniform over the same pool. `None` when the pool is empty.
    pub fn t1_negative(
        &self,
        rng: &mut Rng,
        class: NegativeClass,
        proposal_id: &str,
    ) -> Result<Option<(String, NegativeClass)>> {
        match class {
            NegativeClass::Hard => {
                let cited = self.mag.cited_papers(proposal_id);
                Ok(self
                    .domain
                    .hardest_negative(proposal_id, &cited, &self.corpus)?
                    .map(|id| (id, NegativeClass::Hard)))
            }
            NegativeClass::Soft => Ok(self
                .uncited(proposal_id)
                .choose(rng)
                .map(|id| (id.to_string(), NegativeClass::Soft))),
        }
    }

    /// Proposals in the pool sharing at least one cited paper with `proposal_id`.
    pub fn t2_hard_pool(&self, proposal_id: &str) -> Vec<&str> {
        let mut out = BTreeSet::new();
        for e in self.mag.edges(proposal_id) {
            for other in self.mag.citing(&e.paper_id) {
                if other != proposal_id
                    && self.mag.proposal(other).map(|p| p.split == self.pool_split).unwrap_or(false)
                {
                    out.insert(other.as_str());
                }
            }
        }
        out.into_iter().collect()
    }

    /// T2: hard is uniform over proposals sharing a cited paper, soft is
    /// uniform over the other pool proposals. Empty hard pool falls back to soft.
    pub fn t2_negative(
        &self,
        rng: &mut Rng,
        class: NegativeClass,
        proposal_id: &str,
    ) -> Option<(String, NegativeClass)> {
        if class == NegativeClass::Hard {
            if let Some(id) = self.t2_hard_pool(proposal_id).choose(rng) {
                return Some((id.to_string(), NegativeClass::Hard));
            }
        }
        let others: Vec<&str> = self
            .pool
            .iter()
            .map(String::as_str)
            .filter(|id| *id != proposal_id)
            .collect();
        others
            .choose(rng)
            .map(|id| (id.to_string(), NegativeClass::Soft))
    }

    /// Cited papers of the proposal none of whose contexts carry an MI intent.
    pub fn t3_hard_pool(&self, proposal_id: &str) -> Vec<&str> {
        self.mag
            .edges(proposal_id)
            .iter()
            .filter(|e| !e.is_mi())
            .map(|e| e.paper_id.as_str())
            .collect()
    }

    /// T3: hard is uniform over non-MI cited papers, soft is uniform over
    /// uncited corpus papers. Empty hard pool falls back to soft.
    pub fn t3_negative(
        &self,
        rng: &mut Rng,
        class: NegativeClass,
        proposal_id: &str,
    ) -> Option<(String, NegativeClass)> {
        if class == NegativeClass::Hard {
            if let Some(id) = self.t3_hard_pool(proposal_id).choose(rng) {
                return Some((id.to_string(), NegativeClass::Hard));
            }
        }
        self.uncited(proposal_id)
            .choose(rng)
            .map(|id| (id.to_string(), NegativeClass::Soft))
    }

    /// One visit of one proposal. Returns the (possibly partial) group and
    /// the skips it produced; `None` group when the proposal has no positive.
    pub fn visit(
        &self,
        proposal_id: &str,
        epoch: usize,
        config: &SynthConfig,
    ) -> Result<(Option<TripletGroup>, Vec<SkipRecord>)> {
        let mut rng = rng::stream(
            config.seed,
            &[b"synth", &(epoch as u64).to_le_bytes(), proposal_id.as_bytes()],
        );
        let skip = |kind: Option<TripletKind>, reason: &str| SkipRecord {
            epoch,
            sample_id: proposal_id.to_owned(),
            kind,
            reason: reason.to_owned(),
        };
        let Some(pos) = select_positive(&mut rng, self.mag, proposal_id)? else {
            return Ok((None, vec![skip(None, "no methodology-intent citation")]));
        };

        let shared = draw_negative_class(&mut rng, config.alpha);
        let mut class = || {
            if config.per_triplet_draw {
                draw_negative_class(&mut rng, config.alpha)
            } else {
                shared
            }
        };
        let (c1, c2, c3) = (class(), class(), class());

        let proposal = TextRef::Proposal(proposal_id.to_owned());
        let paper = TextRef::Paper(pos.paper_id.clone());
        let context = TextRef::Context {
            proposal_id: proposal_id.to_owned(),
            paper_id: pos.paper_id.clone(),
            index: pos.context_index,
        };
        let make = |kind, anchor: &TextRef, positive: &TextRef, negative, negative_class| Triplet {
            sample_id: proposal_id.to_owned(),
            epoch,
            kind,
            negative_class,
            anchor: anchor.clone(),
            positive: positive.clone(),
            negative,
        };

        let mut triplets = Vec::with_capacity(3);
        let mut skips = Vec::new();
        match self.t1_negative(&mut rng, c1, proposal_id)? {
            Some((id, nc)) => triplets.push(make(TripletKind::T1, &proposal, &paper, TextRef::Paper(id), nc)),
            None => skips.push(skip(Some(TripletKind::T1), "no uncited corpus paper")),
        }
        match self.t2_negative(&mut rng, c2, proposal_id) {
            Some((id, nc)) => triplets.push(make(TripletKind::T2, &context, &proposal, TextRef::Proposal(id), nc)),
            None => skips.push(skip(Some(TripletKind::T2), "no other proposal in the pool")),
        }
        match self.t3_negative(&mut rng, c3, proposal_id) {
            Some((id, nc)) => triplets.push(make(TripletKind::T3, &context, &paper, TextRef::Paper(id), nc)),
            None => skips.push(skip(Some(TripletKind::T3), "no non-MI cited paper or uncited corpus paper")),
        }
        let group = (!triplets.is_empty()).then(|| TripletGroup {
            sample_id: proposal_id.to_owned(),
            triplets,
        });
        Ok((group, skips))
    }

    /// One pass over every pool proposal in id order.
    pub fn synthesize_epoch(&self, config: &SynthConfig, epoch: usize) -> Result<EpochTriplets> {
        config.validate()?;
        let mut out = EpochTriplets::default();
        for id in &self.pool {
            let (group, skips) = self.visit(id, epoch, config)?;
            out.groups.extend(group);
            out.skips.extend(skips);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochTriplets {
    pub groups: Vec<TripletGroup>,
    pub skips: Vec<SkipRecord>,
}

impl EpochTriplets {
    pub fn triplets(&self) -> impl Iterator<Item = &Triplet> {
        self.groups.iter().flat_map(|g| &g.triplets)
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for t in self.triplets() {
            serde_json::to_writer(&mut *out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_skips(&self, out: &mut impl Write) -> Result<()> {
        for s in &self.skips {
            serde_json::to_writer(&mut *out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::mag;
    use crate::corpus::Intent::*;
    use std::collections::BTreeMap;

    fn flat_domain(mag: &Mag) -> DomainIndex {
        DomainIndex {
            proposals: mag.proposals().map(|p| (p.id.clone(), vec![1.0, 0.0])).collect(),
            papers: mag.papers().map(|p| (p.id.clone(), vec![1.0, 0.0])).collect(),
        }
    }

    #[test]
    fn positive_cases() {
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train)],
            &["A", "B"],
            &[("P", "A", &[Background, Uses]), ("P", "B", &[Background])],
        );
        let mut rng = rng::from_seed(1);
        let pos = select_positive(&mut rng, &g, "P").unwrap().unwrap();
        assert_eq!(pos, Positive { paper_id: "A".into(), context_index: 1 });
        assert_eq!(select_positive(&mut rng, &g, "Q").unwrap(), None);
        assert!(select_positive(&mut rng, &g, "nope").is_err());
    }

    #[test]
    fn positive_is_uniform_over_mi_papers() {
        let g = mag(&[("P", Split::Train)], &["A", "B"], &[("P", "A", &[Uses]), ("P", "B", &[Extension])]);
        let mut rng = rng::from_seed(11);
        let n = 10_000;
        let a = (0..n)
            .filter(|_| select_positive(&mut rng, &g, "P").unwrap().unwrap().paper_id == "A")
            .count();
        let frac = a as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn negative_class_extremes_and_mix() {
        let mut rng = rng::from_seed(3);
        assert!((0..10_000).all(|_| draw_negative_class(&mut rng, 0.0) == NegativeClass::Soft));
        assert!((0..10_000).all(|_| draw_negative_class(&mut rng, 1.0) == NegativeClass::Hard));
        let hard = (0..10_000)
            .filter(|_| draw_negative_class(&mut rng, 0.3) == NegativeClass::Hard)
            .count();
        assert!((hard as f64 / 10_000.0 - 0.3).abs() <= 0.02);
    }

    #[test]
    fn t1_forced_and_empty() {
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train)],
            &["A", "B", "C"],
            &[("P", "A", &[Uses]), ("P", "B", &[Background]), ("Q", "C", &[Uses])],
        );
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        let mut rng = rng::from_seed(0);
        assert_eq!(
            s.t1_negative(&mut rng, NegativeClass::Soft, "P").unwrap(),
            Some(("C".into(), NegativeClass::Soft))
        );
        let only = NegativeSampler::new(&g, vec!["A".into(), "B".into()], &d, Split::Train);
        assert_eq!(only.t1_negative(&mut rng, NegativeClass::Soft, "P").unwrap(), None);
        assert_eq!(only.t1_negative(&mut rng, NegativeClass::Hard, "P").unwrap(), None);
    }

    #[test]
    fn t1_hard_matches_exhaustive_argmax() {
        let papers = ["A", "B", "C", "D", "E", "F"];
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train)],
            &papers,
            &[
                ("P", "A", &[Uses]),
                ("Q", "B", &[Uses]),
                ("Q", "C", &[Uses]),
                ("Q", "D", &[Uses]),
                ("Q", "E", &[Uses]),
                ("Q", "F", &[Uses]),
            ],
        );
        let vecs: BTreeMap<String, Vec<f64>> = [
            ("A", [1.0, 0.0]),
            ("B", [0.2, 1.0]),
            ("C", [0.9, 0.4]),
            ("D", [-1.0, 0.1]),
            ("E", [0.95, 0.45]),
            ("F", [0.0, 0.0]),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_vec()))
        .collect();
        let q = vec![0.8, 0.3];
        let d = DomainIndex {
            proposals: BTreeMap::from([("P".to_string(), q.clone()), ("Q".to_string(), q.clone())]),
            papers: vecs.clone(),
        };
        let s = NegativeSampler::for_training(&g, &d);
        let mut rng = rng::from_seed(0);
        let got = s.t1_negative(&mut rng, NegativeClass::Hard, "P").unwrap().unwrap();
        let cos = |v: &Vec<f64>| {
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if n == 0.0 { f64::NEG_INFINITY } else { (q[0] * v[0] + q[1] * v[1]) / (n * (q[0] * q[0] + q[1] * q[1]).sqrt()) }
        };
        let want = vecs
            .iter()
            .filter(|(k, _)| k.as_str() != "A")
            .max_by(|a, b| cos(a.1).total_cmp(&cos(b.1)).then_with(|| b.0.cmp(a.0)))
            .unwrap()
            .0;
        assert_eq!(got, (want.clone(), NegativeClass::Hard));
    }

    #[test]
    fn t2_cases() {
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train)],
            &["A"],
            &[("P", "A", &[Uses]), ("Q", "A", &[Background])],
        );
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        let mut rng = rng::from_seed(0);
        assert_eq!(s.t2_negative(&mut rng, NegativeClass::Hard, "P"), Some(("Q".into(), NegativeClass::Hard)));

        let disjoint = mag(
            &[("P", Split::Train), ("Q", Split::Train), ("R", Split::Train)],
            &["A", "B", "C"],
            &[("P", "A", &[Uses]), ("Q", "B", &[Uses]), ("R", "C", &[Uses])],
        );
        let d = flat_domain(&disjoint);
        let s = NegativeSampler::for_training(&disjoint, &d);
        for _ in 0..20 {
            let (id, nc) = s.t2_negative(&mut rng, NegativeClass::Hard, "P").unwrap();
            assert_eq!(nc, NegativeClass::Soft);
            assert!(id == "Q" || id == "R");
        }

        let lone = mag(&[("P", Split::Train)], &["A"], &[("P", "A", &[Uses])]);
        let d = flat_domain(&lone);
        let s = NegativeSampler::for_training(&lone, &d);
        assert_eq!(s.t2_negative(&mut rng, NegativeClass::Soft, "P"), None);
    }

    #[test]
    fn t2_hard_pool_matches_pairwise_intersection() {
        // 10 proposals citing overlapping subsets of 6 papers
        let props: Vec<String> = (0..10).map(|i| format!("P{i}")).collect();
        let papers = ["A", "B", "C", "D", "E", "F"];
        let cites: Vec<Vec<&str>> = (0..10)
            .map(|i| papers.iter().enumerate().filter(|(j, _)| (i * 7 + j * 3) % 5 == 0).map(|(_, p)| *p).collect())
            .collect();
        let mut edges = Vec::new();
        for (i, cs) in cites.iter().enumerate() {
            for c in cs {
                edges.push((props[i].as_str(), *c, &[Uses][..]));
            }
        }
        let pr: Vec<(&str, Split)> = props.iter().map(|p| (p.as_str(), Split::Train)).collect();
        let g = mag(&pr, &papers, &edges);
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        for (i, p) in props.iter().enumerate() {
            let mine: BTreeSet<&str> = cites[i].iter().copied().collect();
            let want: Vec<&str> = props
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i && cites[*j].iter().any(|c| mine.contains(c)))
                .map(|(_, q)| q.as_str())
                .collect();
            assert_eq!(s.t2_hard_pool(p), want, "{p}");
        }
    }

    #[test]
    fn t3_cases() {
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train)],
            &["A", "B", "C"],
            &[("P", "A", &[Uses]), ("P", "B", &[Background, Similar]), ("Q", "C", &[Uses])],
        );
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        let mut rng = rng::from_seed(0);
        assert_eq!(s.t3_hard_pool("P"), ["B"]);
        assert_eq!(s.t3_negative(&mut rng, NegativeClass::Hard, "P"), Some(("B".into(), NegativeClass::Hard)));
        // Q cites only MI papers: hard falls back to soft from corpus − cited
        let (id, nc) = s.t3_negative(&mut rng, NegativeClass::Hard, "Q").unwrap();
        assert_eq!(nc, NegativeClass::Soft);
        assert!(id == "A" || id == "B");
    }

    #[test]
    fn single_proposal_visit_shapes() {
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train)],
            &["A", "B", "C"],
            &[("P", "A", &[Uses]), ("P", "B", &[Background]), ("Q", "C", &[Background])],
        );
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        let out = s.synthesize_epoch(&SynthConfig { alpha: 0.5, seed: 4, epochs: 1, per_triplet_draw: false }, 0).unwrap();
        assert_eq!(out.groups.len(), 1);
        let group = &out.groups[0];
        assert!(group.is_complete());
        let anchors: Vec<&str> = group.triplets.iter().map(|t| t.anchor.role()).collect();
        assert_eq!(anchors, ["proposal", "context", "context"]);
        assert_eq!(group.triplets[1].anchor, group.triplets[2].anchor);
        assert_eq!(group.triplets[0].positive, group.triplets[2].positive);
        assert_eq!(out.skips.len(), 1);
        assert_eq!(out.skips[0].sample_id, "Q");
    }

    #[test]
    fn no_mi_proposals_give_empty_stream() {
        let g = mag(&[("P", Split::Train), ("Q", Split::Train)], &["A"], &[("P", "A", &[Background])]);
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        let out = s.synthesize_epoch(&SynthConfig::default(), 0).unwrap();
        assert!(out.groups.is_empty());
        assert_eq!(out.skips.len(), 2);
    }

    #[test]
    fn same_seed_same_bytes() {
        let g = mag(
            &[("P", Split::Train), ("Q", Split::Train), ("R", Split::Train)],
            &["A", "B", "C", "D"],
            &[("P", "A", &[Uses]), ("P", "B", &[Background]), ("Q", "B", &[Uses]), ("R", "C", &[Uses]), ("R", "D", &[Uses])],
        );
        let d = flat_domain(&g);
        let s = NegativeSampler::for_training(&g, &d);
        let cfg = SynthConfig { alpha: 0.5, seed: 7, epochs: 1, per_triplet_draw: false };
        let bytes = |cfg: &SynthConfig| {
            let mut buf = Vec::new();
            s.synthesize_epoch(cfg, 0).unwrap().write_jsonl(&mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(&cfg), bytes(&cfg));
        let line = String::from_utf8(bytes(&cfg)).unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().nth(1).unwrap()).unwrap();
        assert_eq!(first["anchor"]["role"], "context");
        assert!(first["anchor"]["id"].as_str().unwrap().starts_with("P|A#"));
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { alpha: 1.5, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { epochs: 0, ..SynthConfig::default() }.validate().is_err());
    }
}
