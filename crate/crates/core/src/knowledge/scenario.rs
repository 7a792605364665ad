use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Context, CotTrace, FactSet, KnowledgeBase, KnowledgeSpace, Rule, RuleEntry, RuleSet};
use crate::error::{Error, Result};

/// On-disk form of a knowledge scenario. Facts are referenced by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeFile {
    pub facts: Vec<String>,
    #[serde(default)]
    pub rules: Vec<RuleFile>,
    #[serde(default)]
    pub context: ContextFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleFile {
    pub id: String,
    pub cost: u64,
    pub entries: Vec<EntryFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryFile {
    #[serde(default)]
    pub premises: Vec<String>,
    pub conclusions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextFile {
    #[serde(default)]
    pub query: Vec<String>,
    #[serde(default)]
    pub truth: Vec<String>,
}

/// A parsed and validated knowledge scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeScenario {
    pub base: KnowledgeBase,
    pub context: Context,
}

impl KnowledgeFile {
    pub fn compile(&self) -> Result<KnowledgeScenario> {
        let space = KnowledgeSpace::new(self.facts.iter().cloned())?;
        let rules = self
            .rules
            .iter()
            .map(|r| {
                let entries = r
                    .entries
                    .iter()
                    .map(|e| {
                        Ok(RuleEntry {
                            premises: space.set(&e.premises)?,
                            conclusions: space.set(&e.conclusions)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Rule::new(r.id.clone(), r.cost, entries)
            })
            .collect::<Result<Vec<_>>>()?;
        let context = Context::new(space.set(&self.context.query)?, space.set(&self.context.truth)?);
        Ok(KnowledgeScenario { base: KnowledgeBase::new(space, RuleSet::new(rules))?, context })
    }
}

impl KnowledgeScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: KnowledgeFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.compile()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text_file(path)?)
    }
}

/// A knowledge scenario given inline or as a path relative to the file that
/// refers to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnowledgeRef {
    Path(String),
    Inline(KnowledgeFile),
}

impl KnowledgeRef {
    pub fn resolve(&self, dir: &Path) -> Result<KnowledgeScenario> {
        match self {
            KnowledgeRef::Inline(k) => k.compile(),
            KnowledgeRef::Path(p) => {
                let p = PathBuf::from(p);
                KnowledgeScenario::load(&if p.is_absolute() { p } else { dir.join(p) })
            }
        }
    }
}

/// A baseline with an optional chain of thought and an optional response,
/// shared by trace audits, envelopes and emergence queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningFile {
    pub knowledge: KnowledgeRef,
    #[serde(default)]
    pub baseline: Vec<String>,
    #[serde(default)]
    pub steps: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReasoningScenario {
    pub knowledge: KnowledgeScenario,
    pub trace: CotTrace,
    pub response: Option<FactSet>,
    pub budget: u64,
}

impl ReasoningScenario {
    /// `budget` overrides the file, which defaults to saturation.
    pub fn from_json(text: &str, dir: &Path, budget: Option<u64>) -> Result<Self> {
        let file: ReasoningFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let knowledge = file.knowledge.resolve(dir)?;
        let space = knowledge.base.space();
        let trace = CotTrace {
            baseline: space.set(&file.baseline)?,
            steps: file.steps.iter().map(|s| space.set(s)).collect::<Result<_>>()?,
        };
        let response = file.response.as_ref().map(|r| space.set(r)).transpose()?;
        let budget = budget.or(file.budget).unwrap_or_else(|| knowledge.base.saturation_budget());
        Ok(ReasoningScenario { knowledge, trace, response, budget })
    }

    pub fn load(path: &Path, budget: Option<u64>) -> Result<Self> {
        Self::from_json(&read_text_file(path)?, path.parent().unwrap_or(Path::new(".")), budget)
    }
}

pub(crate) fn read_text_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
