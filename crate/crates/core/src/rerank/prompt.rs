//! Prompt templates and slot filling.
//!
//! Templates are plain text with `{slot}` placeholders. Only the slots in
//! [`SLOT_NAMES`] are substituted; any other brace text, such as the doubled
//! braces in the output formats, is emitted literally. An optional
//! block between `[[exemplars:begin]]` and `[[exemplars:end]]` lines is kept
//! (without the marker lines) only when exemplars are supplied.

use std::fs;
use std::path::Path;

use crate::Result;

pub const SLOT_NAMES: [&str; 7] = [
    "proposal",
    "input_text_name",
    "input_paper_title",
    "input_paper_text",
    "exemplars",
    "proposal_analysis",
    "paper_analysis",
];

const EXEMPLARS_BEGIN: &str = "[[exemplars:begin]]";
const EXEMPLARS_END: &str = "[[exemplars:end]]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    Pointwise,
    AgentProposal,
    AgentPaper,
    AgentJudgment,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::Pointwise,
        TemplateKind::AgentProposal,
        TemplateKind::AgentPaper,
        TemplateKind::AgentJudgment,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKind::Pointwise => "pointwise.txt",
            TemplateKind::AgentProposal => "agent_proposal.txt",
            TemplateKind::AgentPaper => "agent_paper.txt",
            TemplateKind::AgentJudgment => "agent_judgment.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateKind::Pointwise => include_str!("../../assets/prompts/pointwise.txt"),
            TemplateKind::AgentProposal => include_str!("../../assets/prompts/agent_proposal.txt"),
            TemplateKind::AgentPaper => include_str!("../../assets/prompts/agent_paper.txt"),
            TemplateKind::AgentJudgment => include_str!("../../assets/prompts/agent_judgment.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub pointwise: String,
    pub agent_proposal: String,
    pub agent_paper: String,
    pub agent_judgment: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            pointwise: TemplateKind::Pointwise.builtin().to_owned(),
            agent_proposal: TemplateKind::AgentProposal.builtin().to_owned(),
            agent_paper: TemplateKind::AgentPaper.builtin().to_owned(),
            agent_judgment: TemplateKind::AgentJudgment.builtin().to_owned(),
        }
    }

    /// Built-in templates, each replaced by the same-named file in `dir` when present.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut t = Self::builtin();
        for kind in TemplateKind::ALL {
            let path = dir.join(kind.file_name());
            if path.is_file() {
                *t.get_mut(kind) = fs::read_to_string(&path)?;
            }
        }
        Ok(t)
    }

    pub fn get(&self, kind: TemplateKind) -> &str {
        match kind {
            TemplateKind::Pointwise => &self.pointwise,
            TemplateKind::AgentProposal => &self.agent_proposal,
            TemplateKind::AgentPaper => &self.agent_paper,
            TemplateKind::AgentJudgment => &self.agent_judgment,
        }
    }

    fn get_mut(&mut self, kind: TemplateKind) -> &mut String {
        match kind {
            TemplateKind::Pointwise => &mut self.pointwise,
            TemplateKind::AgentProposal => &mut self.agent_proposal,
            TemplateKind::AgentPaper => &mut self.agent_paper,
            TemplateKind::AgentJudgment => &mut self.agent_judgment,
        }
    }
}

/// Slot values; `None` exemplars drops the exemplar block.
#[derive(Debug, Clone, Default)]
pub struct Slots<'a> {
    pub proposal: &'a str,
    pub input_text_name: &'a str,
    pub input_paper_title: &'a str,
    pub input_paper_text: &'a str,
    pub exemplars: Option<&'a str>,
    pub proposal_analysis: &'a str,
    pub paper_analysis: &'a str,
}

impl Slots<'_> {
    fn value(&self, name: &str) -> Option<&str> {
        Some(match name {
            "proposal" => self.proposal,
            "input_text_name" => self.input_text_name,
            "input_paper_title" => self.input_paper_title,
            "input_paper_text" => self.input_paper_text,
            "exemplars" => self.exemplars.unwrap_or(""),
            "proposal_analysis" => self.proposal_analysis,
            "paper_analysis" => self.paper_analysis,
            _ => return None,
        })
    }
}

fn select_sections(template: &str, keep_exemplars: bool) -> String {
    let mut out = String::with_capacity(template.len());
    let mut inside = false;
    for line in template.split_inclusive('\n') {
        match line.trim_end() {
            EXEMPLARS_BEGIN => inside = true,
            EXEMPLARS_END => inside = false,
            _ if inside && !keep_exemplars => {}
            _ => out.push_str(line),
        }
    }
    out
}

/// Fills known slots in one left-to-right pass; substituted text is never rescanned.
pub fn render(template: &str, slots: &Slots<'_>) -> String {
    let body = select_sections(template, slots.exemplars.is_some());
    let mut out = String::with_capacity(body.len());
    let mut rest = body.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let slot = after
            .find('}')
            .map(|close| &after[..close])
            .and_then(|name| slots.value(name).map(|v| (name.len(), v)));
        match slot {
            Some((len, value)) => {
                out.push_str(value);
                rest = &after[len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// One few-shot exemplar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarSet {
    pub proposal_text: String,
    pub paper_abstract: String,
    /// (citation text, relevance score in {0, 1})
    pub citations: Vec<(String, u8)>,
}

impl ExemplarSet {
    pub fn is_contrastive(&self) -> bool {
        self.citations.iter().any(|c| c.1 == 1) && self.citations.iter().any(|c| c.1 == 0)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "Exemplar:\nSample Proposal: {}\n\nPaper: {}\n\nMethodology Citations:\n",
            self.proposal_text, self.paper_abstract
        );
        let mi = self.citations.iter().filter(|c| c.1 == 1);
        for (i, (text, _)) in mi.enumerate() {
            out.push_str(&format!("{}. \nCitation: {text}\nRelevance Score: 1\n\n", i + 1));
        }
        for (text, _) in self.citations.iter().filter(|c| c.1 == 0) {
            out.push_str(&format!("Non-Methodology Citation:\nCitation: {text}\nRelevance Score: 0\n"));
        }
        out
    }
}

pub fn render_exemplars(sets: &[ExemplarSet]) -> String {
    sets.iter().map(ExemplarSet::render).collect::<Vec<_>>().join("\n")
}
