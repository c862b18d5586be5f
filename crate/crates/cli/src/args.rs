//! Flags. Each group mirrors a slice of `RunConfig` and overwrites only the
//! keys actually given.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mir_core::corpus::{CorpusSetting, Split};
use mir_core::manifest::RunConfig;
use mir_core::rerank::{InputMode, Shots, Strategy};
use mir_core::retrieval::DistanceMetric;

#[derive(Parser, Debug)]
#[command(name = "mir", version, about = "Methodology inspiration retrieval: train, retrieve, re-rank, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted-structure synthetic dataset and check it.
    Fixture {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fixture: FixtureFlags,
    },
    /// Validate a data directory and write normalized streams plus rejects.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Per-split dataset statistics.
    Stats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        /// Compare against the released dataset counts; mismatches fail the run.
        #[arg(long)]
        check_released: bool,
    },
    /// Synthesize training triplets.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        encoder: EncoderFlags,
    },
    /// Train the encoder with the joint triplet loss.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        optim: OptimFlags,
        /// Start from this checkpoint instead of a fresh encoder.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Embed every paper and proposal with a checkpoint.
    Embed {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank the evaluation corpus for each proposal of a split.
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        embeddings_dir: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Score rankings: Recall@k and mAP.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Pick a re-ranking cutoff from the coverage curve of (dev) rankings.
    Elbow {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Re-rank the head of each ranking with an LLM judge.
    Rerank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
        #[command(flatten)]
        judge: JudgeFlags,
        /// Encoder used to pick few-shot exemplars.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Re-run one manifest entry into a new directory and compare artifacts.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Zero-based entry; the last one by default.
        #[arg(long)]
        entry: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.out_dir, self.out_dir.clone().map(Some));
        set(&mut c.seed, self.seed.map(Some));
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args, Debug)]
pub struct DataFlags {
    /// Directory with proposals.jsonl, papers.jsonl, citations.jsonl and optionally entities.jsonl.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

impl DataFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.data_dir, self.data_dir.clone().map(Some));
    }
}

#[derive(Args, Debug)]
pub struct FixtureFlags {
    #[arg(long)]
    pub proposals: Option<usize>,
    #[arg(long)]
    pub papers: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
}

impl FixtureFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.fixture.proposals, self.proposals);
        set(&mut c.fixture.papers, self.papers);
        set(&mut c.fixture.topics, self.topics);
    }
}

#[derive(Args, Debug)]
pub struct SynthFlags {
    /// Probability of hard negatives.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Epochs of triplets to synthesize.
    #[arg(long)]
    pub synth_epochs: Option<usize>,
    /// Draw hard/soft per triplet instead of per visit.
    #[arg(long)]
    pub per_triplet_draw: bool,
}

impl SynthFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.synth.alpha, self.alpha);
        set(&mut c.synth.epochs, self.synth_epochs);
        if self.per_triplet_draw {
            c.synth.per_triplet_draw = true;
        }
    }
}

#[derive(Args, Debug)]
pub struct EncoderFlags {
    #[arg(long)]
    pub d_in: Option<usize>,
    #[arg(long)]
    pub d_out: Option<usize>,
}

impl EncoderFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.train.d_in, self.d_in);
        set(&mut c.train.d_out, self.d_out);
    }
}

#[derive(Args, Debug)]
pub struct OptimFlags {
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl OptimFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.train.margin, self.margin);
        set(&mut c.train.learning_rate, self.learning_rate);
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.batch_size, self.batch_size);
    }
}

#[derive(Args, Debug)]
pub struct EvalFlags {
    /// Corpus setting: restricted or extended.
    #[arg(long)]
    pub setting: Option<CorpusSetting>,
    #[arg(long)]
    pub split: Option<Split>,
    /// Distance: euclidean or cosine.
    #[arg(long)]
    pub metric: Option<DistanceMetric>,
    /// Recall cutoff; repeat for several.
    #[arg(long = "k")]
    pub k: Vec<usize>,
}

impl EvalFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.setting, self.setting);
        set(&mut c.split, self.split);
        set(&mut c.metric, self.metric);
        if !self.k.is_empty() {
            c.k = self.k.clone();
        }
    }
}

#[derive(Args, Debug)]
pub struct JudgeFlags {
    /// pointwise or agent.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// zero or few.
    #[arg(long)]
    pub shots: Option<Shots>,
    /// abstract or full_paper.
    #[arg(long)]
    pub input_mode: Option<InputMode>,
    /// Re-ranking cutoff; defaults by corpus setting.
    #[arg(long)]
    pub rerank_k: Option<usize>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    #[arg(long)]
    pub few_shot_count: Option<usize>,
    #[arg(long)]
    pub prompts_dir: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl JudgeFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        let j = &mut c.judge;
        set(&mut j.strategy, self.strategy);
        set(&mut j.shots, self.shots);
        set(&mut j.input_mode, self.input_mode);
        set(&mut j.k, self.rerank_k.map(Some));
        set(&mut j.model_id, self.model.clone());
        set(&mut j.temperature, self.temperature);
        set(&mut j.endpoint, self.endpoint.clone().map(Some));
        set(&mut j.max_parallel, self.max_parallel);
        set(&mut j.few_shot_count, self.few_shot_count);
        set(&mut c.prompts_dir, self.prompts_dir.clone().map(Some));
        set(&mut c.cache_dir, self.cache_dir.clone().map(Some));
    }
}
