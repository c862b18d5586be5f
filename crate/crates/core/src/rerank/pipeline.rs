use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::judge::{CostReport, JudgeClient};
use super::prompt::{render_exemplars, PromptTemplates};
use super::{
    analyze_proposal, judge_agent, judge_pointwise, reorder, select_topk, FewShotIndex, JudgeConfig, Judgment,
    PaperInput, Shots, Strategy,
};
use crate::corpus::{CorpusSetting, Mag};
use crate::encoder::TextEncoder;
use crate::retrieval::{evaluate_rankings, EvalReport, Ranking};
use crate::{Error, Result};

/// Judgments and artifacts for one proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRerank {
    pub proposal_id: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_analysis: Option<String>,
    /// Parallel to `judgments`; agent strategy only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paper_analyses: Vec<Option<String>>,
    pub judgments: Vec<Judgment>,
}

#[derive(Debug)]
pub struct RerankOutcome {
    /// Every input ranking; those not reached before an abort are unchanged.
    pub rankings: Vec<Ranking>,
    pub details: Vec<ProposalRerank>,
    pub report: EvalReport,
    pub cost: CostReport,
    /// Set when the run stopped because most backend calls were unreachable.
    pub aborted: Option<Error>,
}

/// More than half of all calls so far failed to reach the backend.
fn mostly_unreachable(cost: &CostReport) -> bool {
    cost.calls > 0 && cost.unreachable * 2 > cost.calls
}

/// Re-ranks the top k of every ranking, judging up to `max_parallel` papers
/// at once. Results are applied in first-stage order, so the outcome does
/// not depend on scheduling. `encoder` is needed only for few-shot runs.
pub fn rerank_pipeline(
    cfg: &JudgeConfig,
    mag: &Mag,
    setting: CorpusSetting,
    rankings: &[Ranking],
    templates: &PromptTemplates,
    client: &JudgeClient<'_>,
    encoder: Option<&dyn TextEncoder>,
    k_list: &[usize],
) -> Result<RerankOutcome> {
    cfg.validate()?;
    let k = cfg.k.unwrap_or_else(|| setting.default_rerank_k());
    let fewshot = match (cfg.shots, encoder) {
        (Shots::Zero, _) => None,
        (Shots::Few, Some(enc)) => Some((FewShotIndex::build(mag, enc)?, enc)),
        (Shots::Few, None) => {
            return Err(Error::InvalidConfig("few-shot re-ranking needs an encoder".into()));
        }
    };

    let mut out_rankings = rankings.to_vec();
    let mut details = Vec::with_capacity(rankings.len());
    let mut aborted = None;
    for (slot, ranking) in out_rankings.iter_mut().enumerate() {
        let proposal = mag.proposal(&ranking.proposal_id)?;
        let proposal_text = proposal.text();
        let exemplars = match &fewshot {
            Some((index, enc)) => {
                let query = enc.embed_text(&proposal_text)?;
                Some(render_exemplars(&index.exemplars(&query, cfg.few_shot_count, cfg.seed)?))
            }
            None => None,
        };
        let head: Vec<PaperInput> = select_topk(&rankings[slot], k)
            .iter()
            .map(|e| Ok(PaperInput::new(mag.paper(&e.paper_id)?, cfg.input_mode)))
            .collect::<Result<_>>()?;
        let proposal_analysis = match cfg.strategy {
            Strategy::Agent => analyze_proposal(client, templates, &proposal_text),
            Strategy::Pointwise => None,
        };

        let results: Mutex<Vec<Option<(Judgment, Option<String>)>>> = Mutex::new(vec![None; head.len()]);
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..cfg.max_parallel.min(head.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(paper) = head.get(i) else { break };
                    let ex = exemplars.as_deref();
                    let r = match cfg.strategy {
                        Strategy::Pointwise => (
                            judge_pointwise(client, templates, cfg.input_mode, &proposal_text, paper, ex),
                            None,
                        ),
                        Strategy::Agent => {
                            let a = judge_agent(
                                client,
                                templates,
                                cfg.input_mode,
                                &proposal_text,
                                proposal_analysis.as_deref(),
                                paper,
                                ex,
                            );
                            (a.judgment, a.paper_analysis)
                        }
                    };
                    results.lock().expect("results lock")[i] = Some(r);
                });
            }
        });
        let (judgments, paper_analyses): (Vec<Judgment>, Vec<Option<String>>) = results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .map(|r| r.expect("every head paper judged"))
            .unzip();

        *ranking = reorder(&rankings[slot], k, &judgments)?;
        details.push(ProposalRerank {
            proposal_id: ranking.proposal_id.clone(),
            k,
            paper_analyses: if cfg.strategy == Strategy::Agent { paper_analyses } else { Vec::new() },
            proposal_analysis,
            judgments,
        });

        let cost = client.cost();
        if mostly_unreachable(&cost) {
            let err = Error::BackendUnreachable {
                failed: cost.unreachable as usize,
                total: cost.calls as usize,
            };
            log::error!("aborting re-ranking after proposal `{}`: {err}", ranking.proposal_id);
            aborted = Some(err);
            break;
        }
    }

    let report = evaluate_rankings(&out_rankings, mag, setting, k_list)?;
    Ok(RerankOutcome {
        rankings: out_rankings,
        details,
        report,
        cost: client.cost(),
        aborted,
    })
}
