use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use mir_core::corpus::{self, Ingested, Mag};
use mir_core::domain::{read_entities, DomainIndex, EntityTable};
use mir_core::elbow::elbow;
use mir_core::encoder::EncoderParams;
use mir_core::fixture;
use mir_core::manifest::{
    read_manifests, RunConfig, RunManifest, CITATIONS_FILE, ENTITIES_FILE, MANIFEST_FILE, PAPERS_FILE,
    PROPOSALS_FILE,
};
use mir_core::rerank::judge::{CACHE_DIR_ENV, JudgeBackend};
use mir_core::rerank::{
    rerank_pipeline, HttpBackend, JudgeCache, JudgeClient, OfflineBackend, PromptTemplates, Shots,
};
use mir_core::retrieval::{coverage_curve, embed_corpus, evaluate_rankings, rank_split, read_rankings, write_rankings, QuerySource};
use mir_core::store::EmbeddingStore;
use mir_core::train::{epoch_means, initial_encoder, train, write_reports};
use mir_core::triplet::NegativeSampler;
use mir_core::Error;

pub const PAPER_EMBEDDINGS: &str = "papers.emb";
pub const PROPOSAL_EMBEDDINGS: &str = "proposals.emb";

/// One command invocation: its config, output directory and manifest.
pub struct Run {
    pub cfg: RunConfig,
    out: PathBuf,
    manifest: RunManifest,
    inputs: BTreeSet<PathBuf>,
}

impl Run {
    fn new(command: &str, cfg: RunConfig) -> Result<Self> {
        let out = cfg.out_dir()?.to_path_buf();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            manifest: RunManifest::begin(command, &cfg),
            cfg,
            out,
            inputs: BTreeSet::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.add_input(path)?;
        self.inputs.insert(fs::canonicalize(path)?);
        Ok(())
    }

    /// Writes an artifact; inputs are never overwritten.
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        if self.inputs.contains(&fs::canonicalize(&self.out)?.join(name)) {
            return Err(Error::InvalidConfig(format!("refusing to overwrite input {}", path.display())).into());
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.add_artifact(&path)?;
        Ok(())
    }

    fn finish(mut self, result: Result<()>) -> Result<()> {
        if let Err(e) = &result {
            self.manifest.status = format!("error: {e:#}");
        }
        self.manifest.append_to(&self.out)?;
        result
    }
}

/// Runs `command` against a complete config and records its manifest.
pub fn execute(command: &str, cfg: RunConfig, check_released: bool) -> Result<()> {
    let mut run = Run::new(command, cfg)?;
    let result = match command {
        "fixture" => cmd_fixture(&mut run),
        "ingest" => cmd_ingest(&mut run),
        "stats" => cmd_stats(&mut run, check_released),
        "synth" => cmd_synth(&mut run),
        "train" => cmd_train(&mut run),
        "embed" => cmd_embed(&mut run),
        "retrieve" => cmd_retrieve(&mut run),
        "eval" => cmd_eval(&mut run),
        "elbow" => cmd_elbow(&mut run),
        "rerank" => cmd_rerank(&mut run),
        other => Err(Error::InvalidConfig(format!("unknown command `{other}`")).into()),
    };
    run.finish(result)
}

fn jsonl<T: serde::Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

fn load_data(run: &mut Run) -> Result<(Ingested, EntityTable)> {
    let dir = run.cfg.require(&run.cfg.data_dir, "data_dir")?.to_path_buf();
    let mut open = |name: &str| -> Result<BufReader<File>> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::InvalidConfig(format!("missing {}", path.display())).into());
        }
        run.input(&path)?;
        Ok(BufReader::new(File::open(&path)?))
    };
    let ingested = corpus::ingest(open(PROPOSALS_FILE)?, open(PAPERS_FILE)?, open(CITATIONS_FILE)?)?;
    if !ingested.rejects.is_empty() {
        log::warn!("{} records rejected during ingestion", ingested.rejects.len());
    }
    let entities_path = dir.join(ENTITIES_FILE);
    let entities = if entities_path.is_file() {
        run.input(&entities_path)?;
        let (table, rejects) = read_entities(BufReader::new(File::open(&entities_path)?))?;
        if !rejects.is_empty() {
            log::warn!("{} entity records rejected", rejects.len());
        }
        table
    } else {
        EntityTable::new()
    };
    Ok((ingested, entities))
}

fn load_mag(run: &mut Run) -> Result<(Mag, EntityTable)> {
    let (ingested, entities) = load_data(run)?;
    Ok((ingested.mag, entities))
}

fn load_encoder(run: &mut Run) -> Result<EncoderParams> {
    let path = run.cfg.require(&run.cfg.checkpoint, "checkpoint")?.to_path_buf();
    run.input(&path)?;
    Ok(EncoderParams::from_checkpoint(&fs::read(&path)?)?)
}

fn write_mag(run: &mut Run, mag: &Mag) -> Result<()> {
    let (mut p, mut l, mut c) = (Vec::new(), Vec::new(), Vec::new());
    mag.write_jsonl(&mut p, &mut l, &mut c)?;
    run.write(PROPOSALS_FILE, &p)?;
    run.write(PAPERS_FILE, &l)?;
    run.write(CITATIONS_FILE, &c)
}

fn cmd_fixture(run: &mut Run) -> Result<()> {
    let f = fixture::generate(&run.cfg.fixture)?;
    write_mag(run, &f.mag)?;
    run.write("topics.json", &pretty(&f.topics)?)?;
    let violations = fixture::check(&f.mag, &f.topics);
    run.write("check.txt", violations.iter().map(|v| format!("{v}\n")).collect::<String>().as_bytes())?;
    if !violations.is_empty() {
        bail!("fixture check found {} violations, first: {}", violations.len(), violations[0]);
    }
    println!(
        "fixture: {} proposals, {} papers, {} citations; check passed",
        f.mag.num_proposals(),
        f.mag.num_papers(),
        f.mag.num_edges()
    );
    Ok(())
}

fn cmd_ingest(run: &mut Run) -> Result<()> {
    let (ingested, entities) = load_data(run)?;
    write_mag(run, &ingested.mag)?;
    run.write("rejects.jsonl", &jsonl(&ingested.rejects)?)?;
    if !entities.is_empty() {
        let records = entities.iter().map(|((role, id), set)| mir_core::domain::EntityRecord {
            owner_id: id.clone(),
            owner_role: *role,
            entities: set.clone(),
        });
        run.write(ENTITIES_FILE, &jsonl(records)?)?;
    }
    println!(
        "ingested {} proposals, {} papers, {} citations; {} rejects",
        ingested.mag.num_proposals(),
        ingested.mag.num_papers(),
        ingested.mag.num_edges(),
        ingested.rejects.len()
    );
    Ok(())
}

fn cmd_stats(run: &mut Run, check_released: bool) -> Result<()> {
    let (mag, _) = load_mag(run)?;
    let stats = corpus::stats(&mag);
    let tsv = stats.to_tsv();
    run.write("stats.tsv", tsv.as_bytes())?;
    run.write("stats.json", &pretty(&stats)?)?;
    print!("{tsv}");
    let restricted = mag.corpus(corpus::CorpusSetting::Restricted).map(|c| c.len()).unwrap_or(0);
    let problems = corpus::check_released_counts(&stats, restricted);
    run.write("released_check.txt", problems.iter().map(|p| format!("{p}\n")).collect::<String>().as_bytes())?;
    if check_released && !problems.is_empty() {
        bail!("dataset differs from the released counts: {}", problems.join("; "));
    }
    Ok(())
}

fn sampler_inputs(run: &mut Run) -> Result<(Mag, DomainIndex)> {
    let (mag, entities) = load_mag(run)?;
    // domain vectors come from the frozen, seeded initial encoder
    let embedder = initial_encoder(&mag, &run.cfg.train)?;
    let domain = DomainIndex::build(&mag, &entities, &embedder)?;
    Ok((mag, domain))
}

fn cmd_synth(run: &mut Run) -> Result<()> {
    let (mag, domain) = sampler_inputs(run)?;
    let sampler = NegativeSampler::for_training(&mag, &domain);
    let (mut triplets, mut skips) = (Vec::new(), Vec::new());
    let mut count = 0;
    for epoch in 0..run.cfg.synth.epochs {
        let e = sampler.synthesize_epoch(&run.cfg.synth, epoch)?;
        count += e.triplets().count();
        e.write_jsonl(&mut triplets)?;
        e.write_skips(&mut skips)?;
    }
    run.write("triplets.jsonl", &triplets)?;
    run.write("skips.jsonl", &skips)?;
    println!("synthesized {count} triplets");
    Ok(())
}

fn cmd_train(run: &mut Run) -> Result<()> {
    let (mag, domain) = sampler_inputs(run)?;
    let init = match run.cfg.checkpoint {
        Some(_) => load_encoder(run)?,
        None => initial_encoder(&mag, &run.cfg.train)?,
    };
    let sampler = NegativeSampler::for_training(&mag, &domain);
    let outcome = train(&sampler, &run.cfg.synth, &run.cfg.train, init)?;
    run.write("encoder.ckpt", &outcome.params.to_checkpoint())?;
    let mut losses = Vec::new();
    write_reports(&outcome.reports, &mut losses)?;
    run.write("losses.jsonl", &losses)?;
    run.write("skips.jsonl", &jsonl(&outcome.skips)?)?;
    for (epoch, mean) in epoch_means(&outcome.reports).iter().enumerate() {
        println!("epoch {epoch}\tloss {mean:.6}");
    }
    Ok(())
}

fn cmd_embed(run: &mut Run) -> Result<()> {
    let (mag, _) = load_mag(run)?;
    let encoder = load_encoder(run)?;
    let papers = embed_corpus(&encoder, mag.papers())?;
    let proposals = EmbeddingStore::from_texts(&encoder, mag.proposals().map(|p| (p.id.as_str(), p.text())))?;
    run.write(PAPER_EMBEDDINGS, &papers.to_bytes())?;
    run.write(PROPOSAL_EMBEDDINGS, &proposals.to_bytes())?;
    println!("embedded {} papers and {} proposals", papers.len(), proposals.len());
    Ok(())
}

fn read_store(run: &mut Run, dir: &Path, name: &str) -> Result<EmbeddingStore> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::InvalidConfig(format!("missing {}", path.display())).into());
    }
    run.input(&path)?;
    Ok(EmbeddingStore::from_bytes(&fs::read(&path)?)?)
}

fn cmd_retrieve(run: &mut Run) -> Result<()> {
    let (mag, _) = load_mag(run)?;
    let dir = run.cfg.require(&run.cfg.embeddings_dir, "embeddings_dir")?.to_path_buf();
    let papers = read_store(run, &dir, PAPER_EMBEDDINGS)?;
    let proposals = read_store(run, &dir, PROPOSAL_EMBEDDINGS)?;
    let c = &run.cfg;
    let rankings = rank_split(QuerySource::Precomputed(&proposals), &papers, &mag, c.setting, c.split, c.metric)?;
    let mut buf = Vec::new();
    write_rankings(&rankings, &mut buf)?;
    run.write("rankings.jsonl", &buf)?;
    println!("ranked {} proposals", rankings.len());
    Ok(())
}

fn load_rankings(run: &mut Run) -> Result<Vec<mir_core::retrieval::Ranking>> {
    let path = run.cfg.require(&run.cfg.rankings, "rankings")?.to_path_buf();
    run.input(&path)?;
    Ok(read_rankings(&fs::read_to_string(&path)?)?)
}

fn cmd_eval(run: &mut Run) -> Result<()> {
    let (mag, _) = load_mag(run)?;
    let rankings = load_rankings(run)?;
    let report = evaluate_rankings(&rankings, &mag, run.cfg.setting, &run.cfg.k)?;
    let tsv = report.to_tsv();
    run.write("eval.tsv", tsv.as_bytes())?;
    let mut json = Vec::new();
    report.write_json(&mut json)?;
    run.write("eval.json", &json)?;
    print!("{tsv}");
    Ok(())
}

fn cmd_elbow(run: &mut Run) -> Result<()> {
    let (mag, _) = load_mag(run)?;
    let rankings = load_rankings(run)?;
    let curve = coverage_curve(&rankings, &mag, run.cfg.k_max)?;
    let k = elbow(&curve)?;
    let mut tsv = String::from("k\tcoverage\n");
    for (k, c) in &curve {
        tsv.push_str(&format!("{k}\t{c:.6}\n"));
    }
    run.write("coverage.tsv", tsv.as_bytes())?;
    run.write("elbow.json", &pretty(&serde_json::json!({ "k": k, "k_max": run.cfg.k_max }))?)?;
    println!("elbow k = {k}");
    Ok(())
}

fn cmd_rerank(run: &mut Run) -> Result<()> {
    let (mag, _) = load_mag(run)?;
    let rankings = load_rankings(run)?;
    let templates = match run.cfg.prompts_dir.clone() {
        Some(_) => PromptTemplates::with_overrides(run.cfg.require(&run.cfg.prompts_dir, "prompts_dir")?)?,
        None => PromptTemplates::builtin(),
    };
    let encoder = match run.cfg.judge.shots {
        Shots::Few => Some(load_encoder(run)?),
        Shots::Zero => None,
    };
    let cfg = run.cfg.clone();
    let j = &cfg.judge;
    let cache_dir = cfg
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| run.out.join("judge_cache"));
    let backend: Box<dyn JudgeBackend> = match &j.endpoint {
        Some(url) => Box::new(HttpBackend::from_env(url.clone(), Duration::from_secs(j.timeout_secs))),
        None => Box::new(OfflineBackend),
    };
    let client = JudgeClient::new(
        backend.as_ref(),
        Some(JudgeCache::new(&cache_dir)?),
        j.model_id.clone(),
        j.temperature,
        j.max_tokens,
        j.input_mode,
        j.retry.clone(),
    );
    let encoder_ref = encoder.as_ref().map(|e| e as &dyn mir_core::encoder::TextEncoder);
    let outcome = rerank_pipeline(j, &mag, cfg.setting, &rankings, &templates, &client, encoder_ref, &cfg.k)?;

    let mut buf = Vec::new();
    write_rankings(&outcome.rankings, &mut buf)?;
    run.write("reranked.jsonl", &buf)?;
    run.write("judgments.jsonl", &jsonl(&outcome.details)?)?;
    run.write("eval.tsv", outcome.report.to_tsv().as_bytes())?;
    run.write("cost.json", &pretty(&outcome.cost)?)?;
    print!("{}", outcome.report.to_tsv());
    println!(
        "judge calls {} (backend {}, cache hits {}), tokens {} in / {} out",
        outcome.cost.calls,
        outcome.cost.backend_calls,
        outcome.cost.cache_hits,
        outcome.cost.prompt_tokens,
        outcome.cost.completion_tokens
    );
    match outcome.aborted {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Re-executes a recorded run into `out_dir` and compares artifact digests by file name.
pub fn replay(manifest: &Path, entry: Option<usize>, out_dir: &Path) -> Result<()> {
    let entries = read_manifests(&fs::read_to_string(manifest)?)?;
    let index = entry.unwrap_or(entries.len().saturating_sub(1));
    let Some(recorded) = entries.get(index) else {
        return Err(Error::InvalidConfig(format!("manifest has no entry {index}")).into());
    };
    let mut cfg = recorded.config.clone();
    if cfg.out_dir.as_deref() == Some(out_dir) {
        return Err(Error::InvalidConfig("replay needs a different output directory".into()).into());
    }
    cfg.out_dir = Some(out_dir.to_path_buf());
    execute(&recorded.command, cfg, false)?;
    let fresh = read_manifests(&fs::read_to_string(out_dir.join(MANIFEST_FILE))?)?;
    let fresh = fresh.last().context("replay wrote no manifest")?;
    let name = |p: &str| Path::new(p).file_name().map(|n| n.to_owned());
    let mut mismatches = Vec::new();
    for a in &recorded.artifacts {
        match fresh.artifacts.iter().find(|b| name(&b.path) == name(&a.path)) {
            Some(b) if b.sha256 == a.sha256 => println!("same\t{}", a.path),
            _ => {
                println!("DIFFERENT\t{}", a.path);
                mismatches.push(a.path.clone());
            }
        }
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{} artifacts, {} differ", recorded.artifacts.len(), mismatches.len())?;
    if !mismatches.is_empty() {
        bail!("replay differs in {}", mismatches.join(", "));
    }
    Ok(())
}
