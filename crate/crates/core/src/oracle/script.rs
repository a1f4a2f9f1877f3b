use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate_selection, ConstraintRequest, ConstraintResponse, GroundingRequest,
    GroundingResponse, Oracle, OracleError, Phase, Purpose,
};
use crate::io::{read_json, IoError};

/// Constraint entries are always keyed with `Purpose::Task`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScriptKey {
    pub phase: Phase,
    pub purpose: Purpose,
    pub instruction: String,
}

impl ScriptKey {
    pub fn new(phase: Phase, purpose: Purpose, instruction: &str) -> Self {
        let purpose = if phase == Phase::Constraints {
            Purpose::Task
        } else {
            purpose
        };
        Self {
            phase,
            purpose,
            instruction: instruction.trim().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptResponse {
    Grounding(GroundingResponse),
    Constraints(ConstraintResponse),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub phase: Phase,
    #[serde(default)]
    pub purpose: Purpose,
    pub instruction: String,
    pub response: ScriptResponse,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct ScriptFile {
    entries: Vec<ScriptEntry>,
}

/// Canned responses, immutable once built.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleScript {
    entries: BTreeMap<ScriptKey, ScriptResponse>,
}

impl OracleScript {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Result<Self, OracleError> {
        let mut map = BTreeMap::new();
        for (i, e) in entries.into_iter().enumerate() {
            let shape_ok = matches!(
                (e.phase, &e.response),
                (Phase::Constraints, ScriptResponse::Constraints(_))
                    | (Phase::CoarseObject | Phase::FinePart, ScriptResponse::Grounding(_))
            );
            if !shape_ok {
                return Err(OracleError::Protocol(format!(
                    "entries[{i}].response does not fit phase {:?}",
                    e.phase
                )));
            }
            let key = ScriptKey::new(e.phase, e.purpose, &e.instruction);
            if map.contains_key(&key) {
                return Err(OracleError::DuplicateKey(key));
            }
            map.insert(key, e.response);
        }
        Ok(Self { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, phase: Phase, purpose: Purpose, instruction: &str) -> Result<&ScriptResponse, OracleError> {
        self.entries
            .get(&ScriptKey::new(phase, purpose, instruction))
            .ok_or_else(|| OracleError::ScriptMiss {
                phase,
                purpose,
                instruction: instruction.to_string(),
            })
    }
}

pub fn load_script(path: &Path) -> Result<OracleScript, OracleError> {
    let file: ScriptFile = read_json(path)?;
    OracleScript::from_entries(file.entries).map_err(|e| match e {
        OracleError::Protocol(message) => OracleError::Io(IoError::Schema {
            path: path.to_path_buf(),
            field: "response".into(),
            message,
        }),
        other => other,
    })
}

impl Oracle for OracleScript {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingResponse, OracleError> {
        if req.candidates.is_empty() {
            return Err(OracleError::EmptyRequest);
        }
        match self.lookup(req.phase, req.purpose, &req.instruction)? {
            ScriptResponse::Grounding(g) => {
                validate_selection(req, g)?;
                Ok(g.clone())
            }
            ScriptResponse::Constraints(_) => unreachable!("shape checked at load"),
        }
    }

    fn generate_constraints(&self, req: &ConstraintRequest) -> Result<ConstraintResponse, OracleError> {
        if req.elements.is_empty() {
            return Err(OracleError::EmptyRequest);
        }
        match self.lookup(Phase::Constraints, Purpose::Task, &req.instruction)? {
            ScriptResponse::Constraints(c) => Ok(c.clone()),
            ScriptResponse::Grounding(_) => unreachable!("shape checked at load"),
        }
    }
}
