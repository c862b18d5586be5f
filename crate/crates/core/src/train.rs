//! Joint triplet-margin loss and the gradient-descent training loop for the
//! reference encoder.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Mag, Split};
use crate::encoder::EncoderParams;
use crate::rng;
use crate::triplet::{NegativeSampler, SkipRecord, SynthConfig, TripletGroup, TripletKind};
use crate::{Error, Result};

/// Smoothing term inside the square root of the training distance.
pub const DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub d_in: usize,
    pub d_out: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 1e-2,
            epochs: 10,
            batch_size: 4,
            seed: 0,
            d_in: 64,
            d_out: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be finite and >= 0");
        }
        // 0 is accepted so a run can be replayed without moving the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if self.d_in == 0 || self.d_out == 0 {
            return bad("encoder dimensions must be positive");
        }
        Ok(())
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `max(d(a, p) - d(a, n) + m, 0)` with exact Euclidean distance.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<(f64, bool)> {
    if margin < 0.0 {
        return Err(Error::InvalidConfig("margin must be >= 0".into()));
    }
    let d_pos = euclidean(a, p)?;
    let d_neg = euclidean(a, n)?;
    let loss = (d_pos - d_neg + margin).max(0.0);
    Ok((loss, loss > 0.0))
}

/// Token rows of the anchor, positive and negative of one triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTriplet {
    pub rows: [Vec<usize>; 3],
}

/// One sample's T1, T2, T3 in kind order, resolved to token rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGroup {
    pub sample_id: String,
    pub triplets: [EncodedTriplet; 3],
}

impl EncodedGroup {
    pub fn new(params: &EncoderParams, mag: &Mag, group: &TripletGroup) -> Result<Self> {
        let mut out = Vec::with_capacity(3);
        for kind in TripletKind::ALL {
            let t = group.get(kind).ok_or_else(|| Error::IncompleteGroup {
                sample: group.sample_id.clone(),
                kind: kind.name(),
            })?;
            let rows = |r: &crate::triplet::TextRef| -> Result<Vec<usize>> { Ok(params.token_rows(&r.text(mag)?)) };
            out.push(EncodedTriplet {
                rows: [rows(&t.anchor)?, rows(&t.positive)?, rows(&t.negative)?],
            });
        }
        let [t1, t2, t3]: [EncodedTriplet; 3] = out.try_into().expect("three kinds");
        Ok(Self {
            sample_id: group.sample_id.clone(),
            triplets: [t1, t2, t3],
        })
    }
}

/// Sum of the three exact triplet losses of one sample under `params`.
pub fn joint_sample_loss(params: &EncoderParams, mag: &Mag, group: &TripletGroup, margin: f64) -> Result<f64> {
    let encoded = EncodedGroup::new(params, mag, group)?;
    let mut total = 0.0;
    for t in &encoded.triplets {
        let [a, p, n] = t.rows.each_ref().map(|r| params.project(&params.pooled(r)));
        total += triplet_loss(&a, &p, &n, margin)?.0;
    }
    Ok(total)
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub embeddings: Vec<f64>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn zeros(params: &EncoderParams) -> Self {
        Self {
            embeddings: vec![0.0; params.embeddings.len()],
            projection: vec![0.0; params.projection.len()],
            bias: vec![0.0; params.bias.len()],
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.embeddings.iter().chain(&self.projection).chain(&self.bias).copied()
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }
}

/// Batch-mean losses under the smoothed training distance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    /// Mean loss per kind, T1..T3.
    pub per_kind: [f64; 3],
    /// Mean over samples of the per-sample sum.
    pub joint: f64,
    pub active: usize,
    pub triplets: usize,
}

fn smoothed_distance(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let d = (diff.iter().map(|v| v * v).sum::<f64>() + DISTANCE_EPS).sqrt();
    (d, diff)
}

fn backprop(params: &EncoderParams, rows: &[usize], h: &[f64], dv: &[f64], g: &mut Gradient) {
    let (d_in, d_out) = (params.d_in(), params.d_out());
    for (gb, d) in g.bias.iter_mut().zip(dv) {
        *gb += d;
    }
    for i in 0..d_in {
        let gw = &mut g.projection[i * d_out..(i + 1) * d_out];
        for (w, d) in gw.iter_mut().zip(dv) {
            *w += h[i] * d;
        }
    }
    if rows.is_empty() {
        return;
    }
    let inv = 1.0 / rows.len() as f64;
    let dh: Vec<f64> = (0..d_in)
        .map(|i| {
            let w = &params.projection[i * d_out..(i + 1) * d_out];
            w.iter().zip(dv).map(|(w, d)| w * d).sum::<f64>() * inv
        })
        .collect();
    for &r in rows {
        let ge = &mut g.embeddings[r * d_in..(r + 1) * d_in];
        for (e, d) in ge.iter_mut().zip(&dh) {
            *e += d;
        }
    }
}

/// Batch-mean joint loss and its analytic gradient. Inactive triplets
/// contribute a zero subgradient. Summation runs in batch order.
pub fn grad(params: &EncoderParams, batch: &[EncodedGroup], margin: f64) -> (BatchLoss, Gradient) {
    let mut g = Gradient::zeros(params);
    let mut loss = BatchLoss::default();
    if batch.is_empty() {
        return (loss, g);
    }
    let scale = 1.0 / batch.len() as f64;
    for group in batch {
        for (k, t) in group.triplets.iter().enumerate() {
            let hs = t.rows.each_ref().map(|r| params.pooled(r));
            let [va, vp, vn] = hs.each_ref().map(|h| params.project(h));
            let (d_pos, u_pos) = smoothed_distance(&va, &vp);
            let (d_neg, u_neg) = smoothed_distance(&va, &vn);
            let pre = d_pos - d_neg + margin;
            loss.triplets += 1;
            if pre <= 0.0 {
                continue;
            }
            loss.active += 1;
            loss.per_kind[k] += pre * scale;
            loss.joint += pre * scale;
            let (sp, sn) = (scale / d_pos, scale / d_neg);
            let dva: Vec<f64> = u_pos.iter().zip(&u_neg).map(|(p, n)| p * sp - n * sn).collect();
            let dvp: Vec<f64> = u_pos.iter().map(|p| -p * sp).collect();
            let dvn: Vec<f64> = u_neg.iter().map(|n| n * sn).collect();
            backprop(params, &t.rows[0], &hs[0], &dva, &mut g);
            backprop(params, &t.rows[1], &hs[1], &dvp, &mut g);
            backprop(params, &t.rows[2], &hs[2], &dvn, &mut g);
        }
    }
    (loss, g)
}

/// Batch-mean joint loss only; the objective [`grad`] differentiates.
pub fn batch_loss(params: &EncoderParams, batch: &[EncodedGroup], margin: f64) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for group in batch {
        for t in &group.triplets {
            let [va, vp, vn] = t.rows.each_ref().map(|r| params.project(&params.pooled(r)));
            let pre = smoothed_distance(&va, &vp).0 - smoothed_distance(&va, &vn).0 + margin;
            if pre > 0.0 {
                total += pre * scale;
            }
        }
    }
    total
}

/// `theta <- theta - lr * g`.
pub fn apply(params: &mut EncoderParams, g: &Gradient, learning_rate: f64) {
    for (p, d) in params.embeddings.iter_mut().zip(&g.embeddings) {
        *p -= learning_rate * d;
    }
    for (p, d) in params.projection.iter_mut().zip(&g.projection) {
        *p -= learning_rate * d;
    }
    for (p, d) in params.bias.iter_mut().zip(&g.bias) {
        *p -= learning_rate * d;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub batch: usize,
    pub samples: usize,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub joint: f64,
    pub active_fraction: f64,
}

/// Sample-weighted mean joint loss of each epoch.
pub fn epoch_means(reports: &[LossReport]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in reports {
        if out.len() <= r.epoch {
            out.resize(r.epoch + 1, (0.0, 0));
        }
        out[r.epoch].0 += r.joint * r.samples as f64;
        out[r.epoch].1 += r.samples;
    }
    out.into_iter()
        .map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect()
}

pub fn write_reports(reports: &[LossReport], out: &mut impl Write) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Vocabulary seen during training: training proposals, their contexts, and
/// every paper.
pub fn training_vocab(mag: &Mag) -> Vec<String> {
    let mut texts = Vec::new();
    for p in mag.proposals_in(Split::Train) {
        texts.push(p.text());
        for e in mag.edges(&p.id) {
            texts.extend(e.contexts.iter().map(|c| c.text.clone()));
        }
    }
    texts.extend(mag.papers().map(|p| p.text()));
    EncoderParams::vocab_from_texts(texts.iter().map(String::as_str))
}

pub fn initial_encoder(mag: &Mag, config: &TrainConfig) -> Result<EncoderParams> {
    EncoderParams::init(training_vocab(mag), config.d_in, config.d_out, config.seed)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub reports: Vec<LossReport>,
    /// Skipped triplets and dropped incomplete groups.
    pub skips: Vec<SkipRecord>,
}

/// Runs `config.epochs` epochs of freshly synthesized triplets over the
/// sampler's pool. Each epoch visits samples in a seeded shuffled order and
/// takes one step per batch of `batch_size` groups. Groups missing a kind are
/// dropped and recorded.
pub fn train(
    sampler: &NegativeSampler<'_>,
    synth: &SynthConfig,
    config: &TrainConfig,
    init: EncoderParams,
) -> Result<TrainOutcome> {
    config.validate()?;
    synth.validate()?;
    let mag = sampler.mag();
    let mut params = init;
    let mut reports = Vec::new();
    let mut skips = Vec::new();
    for epoch in 0..config.epochs {
        let synthesized = sampler.synthesize_epoch(synth, epoch)?;
        skips.extend(synthesized.skips);
        let mut groups = Vec::with_capacity(synthesized.groups.len());
        for g in &synthesized.groups {
            if g.is_complete() {
                groups.push(EncodedGroup::new(&params, mag, g)?);
            } else {
                skips.push(SkipRecord {
                    epoch,
                    sample_id: g.sample_id.clone(),
                    kind: None,
                    reason: "incomplete group dropped from training".into(),
                });
            }
        }
        if groups.is_empty() {
            return Err(Error::NoTrainableSamples(format!(
                "epoch {epoch}: no training proposal yields all three triplets"
            )));
        }
        let mut order_rng = rng::stream(config.seed, &[b"order", &(epoch as u64).to_le_bytes()]);
        groups.shuffle(&mut order_rng);

        for (batch, chunk) in groups.chunks(config.batch_size).enumerate() {
            let (loss, g) = grad(&params, chunk, config.margin);
            let n = chunk.len() as f64;
            reports.push(LossReport {
                epoch,
                batch,
                samples: chunk.len(),
                t1: loss.per_kind[0],
                t2: loss.per_kind[1],
                t3: loss.per_kind[2],
                joint: loss.joint,
                active_fraction: loss.active as f64 / (3.0 * n),
            });
            apply(&mut params, &g, config.learning_rate);
        }
        log::debug!(
            "epoch {epoch}: mean loss {:.6}",
            epoch_means(&reports).last().copied().unwrap_or(0.0)
        );
    }
    Ok(TrainOutcome {
        params,
        reports,
        skips,
    })
}
