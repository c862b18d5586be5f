//! Text encoders.
//!
//! [`EncoderParams`] is the reference encoder: the mean of token-embedding
//! rows followed by an affine projection. Anything implementing
//! [`TextEncoder`] can stand in for it at retrieval time.

use std::collections::{BTreeSet, HashMap};

use rand::Rng as _;

use crate::codec::{put_f32s, Reader};
use crate::rng;
use crate::{Error, Result};

/// Reserved row for out-of-vocabulary tokens. Never produced by [`tokenize`].
pub const UNK_TOKEN: &str = "<unk>";

const CHECKPOINT_MAGIC: &[u8; 4] = b"MIRT";
const CHECKPOINT_VERSION: u32 = 1;

/// Lowercases and splits on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Anything that maps text to a fixed-dimension vector.
pub trait TextEncoder: Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    d_in: usize,
    d_out: usize,
    /// |V| x d_in, row-major.
    pub embeddings: Vec<f64>,
    /// d_in x d_out, row-major.
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    /// Vocabulary from every token of `texts`, ascending, behind the unknown row.
    pub fn vocab_from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let set: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        std::iter::once(UNK_TOKEN.to_string()).chain(set).collect()
    }

    /// Seeded uniform initialization in [-0.05, 0.05] for embeddings and
    /// projection; zero bias.
    pub fn init(vocab: Vec<String>, d_in: usize, d_out: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, &[b"encoder-init"]);
        let n = vocab.len();
        let mut draw = |count: usize| -> Vec<f64> {
            (0..count).map(|_| rng.random_range(-0.05..=0.05)).collect()
        };
        let embeddings = draw(n * d_in);
        let projection = draw(d_in * d_out);
        Self::from_parts(vocab, d_in, d_out, embeddings, projection, vec![0.0; d_out])
    }

    pub fn from_parts(
        tokens: Vec<String>,
        d_in: usize,
        d_out: usize,
        embeddings: Vec<f64>,
        projection: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::InvalidConfig(format!("vocabulary row 0 must be `{UNK_TOKEN}`")));
        }
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} has {got} entries, expected {want}")))
            }
        };
        check("embeddings", embeddings.len(), tokens.len() * d_in)?;
        check("projection", projection.len(), d_in * d_out)?;
        check("bias", bias.len(), d_out)?;
        if !embeddings.iter().chain(&projection).chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("encoder parameters must be finite".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self {
            tokens,
            index,
            d_in,
            d_out,
            embeddings,
            projection,
            bias,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn vocab(&self) -> &[String] {
        &self.tokens
    }

    pub fn num_params(&self) -> usize {
        self.embeddings.len() + self.projection.len() + self.bias.len()
    }

    /// Embedding rows for the tokens of `text`; unknown tokens map to row 0.
    pub fn token_rows(&self, text: &str) -> Vec<usize> {
        tokenize(text)
            .iter()
            .map(|t| self.index.get(t).copied().unwrap_or(0))
            .collect()
    }

    /// Mean of the given embedding rows (zero vector when empty).
    pub fn pooled(&self, rows: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.d_in];
        if rows.is_empty() {
            return h;
        }
        for &r in rows {
            let row = &self.embeddings[r * self.d_in..(r + 1) * self.d_in];
            for (acc, v) in h.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    /// `h · W + bias`.
    pub fn project(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, &hi) in h.iter().enumerate() {
            if hi == 0.0 {
                continue;
            }
            let row = &self.projection[i * self.d_out..(i + 1) * self.d_out];
            for (o, w) in out.iter_mut().zip(row) {
                *o += hi * w;
            }
        }
        out
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.project(&self.pooled(&self.token_rows(text)))
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d_in as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_out as u32).to_le_bytes());
        out.extend_from_slice(&(self.tokens.len() as u64).to_le_bytes());
        for t in &self.tokens {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
        put_f32s(&mut out, &self.embeddings);
        put_f32s(&mut out, &self.projection);
        put_f32s(&mut out, &self.bias);
        out
    }

    /// Decodes a checkpoint; never panics on malformed input.
    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let d_in = r.u32("d_in")? as usize;
        let d_out = r.u32("d_out")? as usize;
        let n_vocab = r.u64("vocab size")?;
        // each token needs at least its 4-byte length prefix
        if n_vocab > (r.remaining() / 4) as u64 {
            return Err(Error::Format(format!("vocab size {n_vocab} exceeds input")));
        }
        let n_vocab = n_vocab as usize;
        let mut tokens = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            let len = r.u32("token length")? as usize;
            tokens.push(r.utf8(len, "token")?);
        }
        let size = |a: usize, b: usize| {
            a.checked_mul(b)
                .ok_or_else(|| Error::Format("parameter size overflow".into()))
        };
        let embeddings = r.f32s(size(n_vocab, d_in)?, "embeddings")?;
        let projection = r.f32s(size(d_in, d_out)?, "projection")?;
        let bias = r.f32s(d_out, "bias")?;
        r.finish("checkpoint")?;
        Self::from_parts(tokens, d_in, d_out, embeddings, projection, bias)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

impl TextEncoder for EncoderParams {
    fn dim(&self) -> usize {
        self.d_out
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.encode(text))
    }
}
