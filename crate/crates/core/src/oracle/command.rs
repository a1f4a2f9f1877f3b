use std::io::Write;
use std::process::{Command, Stdio};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use super::{
    validate_selection, ConstraintRequest, ConstraintResponse, GroundingRequest,
    GroundingResponse, Oracle, OracleError, PROTOCOL_VERSION,
};

/// Runs an external program once per call. The request envelope
/// `{"version", "kind", "request"}` goes to stdin; the response JSON is read
/// from stdout.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandOracle {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandOracle {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, kind: &str, req: &Req) -> Result<Resp, OracleError> {
        let envelope = json!({"version": PROTOCOL_VERSION, "kind": kind, "request": req});
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| OracleError::Command(format!("{}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            // a child that exits without reading stdin is judged by its output
            let _ = stdin.write_all(envelope.to_string().as_bytes());
        }
        let out = child
            .wait_with_output()
            .map_err(|e| OracleError::Command(e.to_string()))?;
        if !out.status.success() {
            return Err(OracleError::Command(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| OracleError::Protocol(e.to_string()))
    }
}

impl Oracle for CommandOracle {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingResponse, OracleError> {
        let resp = self.call("ground", req)?;
        validate_selection(req, &resp)?;
        Ok(resp)
    }

    fn generate_constraints(&self, req: &ConstraintRequest) -> Result<ConstraintResponse, OracleError> {
        self.call("constraints", req)
    }
}
