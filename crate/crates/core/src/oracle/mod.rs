//! The grounding and constraint-generation boundary.
//!
//! Requests carry only text, ids and an image reference, so a scripted
//! oracle, an external process, or a replayed log can all stand behind the
//! same trait.

mod command;
mod script;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use command::CommandOracle;
pub use script::{load_script, OracleScript, ScriptEntry, ScriptKey, ScriptResponse};

use crate::io::IoError;
use crate::part_model::PartKind;

pub const PROTOCOL_VERSION: &str = "copa-oracle/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    CoarseObject,
    FinePart,
    Constraints,
}

/// Which half of the run a grounding call serves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Pick the object and part to grasp.
    #[default]
    Grasp,
    /// Pick the parts the task constraints will talk about.
    Task,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingRequest {
    pub phase: Phase,
    pub purpose: Purpose,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingResponse {
    pub selected: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSummary {
    pub id: u32,
    pub kind: PartKind,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRequest {
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub elements: Vec<ElementSummary>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintResponse {
    pub constraints: Vec<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no script entry for {phase:?}/{purpose:?} {instruction:?}")]
    ScriptMiss {
        phase: Phase,
        purpose: Purpose,
        instruction: String,
    },
    #[error("oracle selected {id}, which is not among the candidates {candidates:?}")]
    InvalidSelection { id: u32, candidates: Vec<u32> },
    #[error("oracle selected nothing")]
    EmptySelection,
    #[error("request has no candidates")]
    EmptyRequest,
    #[error("duplicate script entry for {0:?}")]
    DuplicateKey(ScriptKey),
    #[error("oracle command failed: {0}")]
    Command(String),
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("replayed call {index} differs from the recorded request")]
    ReplayMismatch { index: usize },
    #[error("replay log exhausted after {0} calls")]
    ReplayExhausted(usize),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub trait Oracle: Send + Sync {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingResponse, OracleError>;
    fn generate_constraints(&self, req: &ConstraintRequest) -> Result<ConstraintResponse, OracleError>;
}

/// Checks that every selected id is one of the request's candidates.
pub fn validate_selection(req: &GroundingRequest, resp: &GroundingResponse) -> Result<(), OracleError> {
    if resp.selected.is_empty() {
        return Err(OracleError::EmptySelection);
    }
    for &id in &resp.selected {
        if !req.candidates.iter().any(|c| c.id == id) {
            return Err(OracleError::InvalidSelection {
                id,
                candidates: req.candidates.iter().map(|c| c.id).collect(),
            });
        }
    }
    Ok(())
}

/// One oracle call as recorded in a run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exchange {
    Ground {
        request: GroundingRequest,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<GroundingResponse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Constraints {
        request: ConstraintRequest,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<ConstraintResponse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl Exchange {
    pub fn is_grounding(&self) -> bool {
        matches!(self, Exchange::Ground { .. })
    }

    pub fn purpose(&self) -> Option<Purpose> {
        match self {
            Exchange::Ground { request, .. } => Some(request.purpose),
            Exchange::Constraints { .. } => None,
        }
    }
}

/// Wraps an oracle and records every call, failed ones included.
pub struct AuditedOracle<'a> {
    inner: &'a dyn Oracle,
    log: Mutex<Vec<Exchange>>,
}

impl<'a> AuditedOracle<'a> {
    pub fn new(inner: &'a dyn Oracle) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn log(&self) -> Vec<Exchange> {
        self.log.lock().expect("audit log poisoned").clone()
    }

    pub fn ground(&self, req: &GroundingRequest) -> Result<GroundingResponse, OracleError> {
        let out = self.inner.ground(req);
        self.log.lock().expect("audit log poisoned").push(Exchange::Ground {
            request: req.clone(),
            response: out.as_ref().ok().cloned(),
            error: out.as_ref().err().map(|e| e.to_string()),
        });
        out
    }

    pub fn generate_constraints(&self, req: &ConstraintRequest) -> Result<ConstraintResponse, OracleError> {
        let out = self.inner.generate_constraints(req);
        self.log.lock().expect("audit log poisoned").push(Exchange::Constraints {
            request: req.clone(),
            response: out.as_ref().ok().cloned(),
            error: out.as_ref().err().map(|e| e.to_string()),
        });
        out
    }
}

/// Answers calls from a recorded log, in order, requiring identical requests.
pub struct ReplayOracle {
    log: Vec<Exchange>,
    cursor: Mutex<usize>,
}

impl ReplayOracle {
    pub fn new(log: Vec<Exchange>) -> Self {
        Self {
            log,
            cursor: Mutex::new(0),
        }
    }

    fn next(&self) -> Result<(usize, &Exchange), OracleError> {
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let i = *cursor;
        let e = self.log.get(i).ok_or(OracleError::ReplayExhausted(i))?;
        *cursor += 1;
        Ok((i, e))
    }
}

fn replayed<T: Clone>(index: usize, response: &Option<T>, error: &Option<String>) -> Result<T, OracleError> {
    match (response, error) {
        (Some(r), _) => Ok(r.clone()),
        (None, Some(e)) => Err(OracleError::Protocol(format!("recorded failure: {e}"))),
        (None, None) => Err(OracleError::ReplayMismatch { index }),
    }
}

impl Oracle for ReplayOracle {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingResponse, OracleError> {
        match self.next()? {
            (i, Exchange::Ground {
                request,
                response,
                error,
            }) if request == req => replayed(i, response, error),
            (index, _) => Err(OracleError::ReplayMismatch { index }),
        }
    }

    fn generate_constraints(&self, req: &ConstraintRequest) -> Result<ConstraintResponse, OracleError> {
        match self.next()? {
            (i, Exchange::Constraints {
                request,
                response,
                error,
            }) if request == req => replayed(i, response, error),
            (index, _) => Err(OracleError::ReplayMismatch { index }),
        }
    }
}
