use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentSpec, AuctionInstance, Responses};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeRef, KnowledgeScenario};

/// On-disk auction: a knowledge scenario (inline or by path), the agents and
/// optionally the response universe and rule budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionFile {
    pub knowledge: KnowledgeRef,
    pub agents: Vec<AgentFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses: Option<ResponsesFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub id: String,
    pub knowledge: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponsesFile {
    /// `"subsets"` or `"singletons"` of the relevant facts.
    Named(String),
    Explicit(Vec<Vec<String>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionScenario {
    pub file: AuctionFile,
    pub knowledge: KnowledgeScenario,
    pub instance: AuctionInstance,
}

impl AuctionScenario {
    /// Parses an auction; relative knowledge paths resolve against `dir`.
    /// `budget` overrides the file's budget, which defaults to saturation.
    pub fn from_json(text: &str, dir: &Path, budget: Option<u64>) -> Result<Self> {
        let file: AuctionFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let knowledge = file.knowledge.resolve(dir)?;
        let space = knowledge.base.space();
        let agents = file
            .agents
            .iter()
            .map(|a| Ok(AgentSpec::new(a.id.clone(), space.set(&a.knowledge)?)))
            .collect::<Result<Vec<_>>>()?;
        let responses = match &file.responses {
            None => Responses::RelevantSubsets,
            Some(ResponsesFile::Named(n)) => match n.as_str() {
                "subsets" => Responses::RelevantSubsets,
                "singletons" => Responses::RelevantSingletons,
                other => return Err(Error::Parse(format!("unknown response universe {other:?}"))),
            },
            Some(ResponsesFile::Explicit(list)) => {
                Responses::Explicit(list.iter().map(|r| space.set(r)).collect::<Result<Vec<_>>>()?)
            }
        };
        let budget = budget.or(file.budget).unwrap_or_else(|| knowledge.base.saturation_budget());
        let instance =
            AuctionInstance::new(knowledge.base.clone(), budget, agents, knowledge.context.clone(), responses)?;
        Ok(AuctionScenario { file, knowledge, instance })
    }

    pub fn load(path: &Path, budget: Option<u64>) -> Result<Self> {
        let text = crate::knowledge::read_text_file(path)?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")), budget)
    }
}
