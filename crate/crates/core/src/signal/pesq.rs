use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::SignalError;

/// Shell-out hook for an external PESQ implementation.
///
/// The command is invoked as `program [args..] <reference.wav> <degraded.wav>` and
/// the last parseable number on stdout is taken as the score. Disabled unless a
/// program is configured.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PesqAdapter {
    pub program: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
}

impl PesqAdapter {
    pub fn enabled(&self) -> bool {
        self.program.is_some()
    }

    pub fn score(&self, reference: &Path, degraded: &Path) -> Result<Option<f64>, SignalError> {
        let Some(program) = &self.program else {
            return Ok(None);
        };
        let out = Command::new(program)
            .args(&self.args)
            .arg(reference)
            .arg(degraded)
            .output()
            .map_err(|e| SignalError::Pesq(format!("failed to run {program}: {e}")))?;
        if !out.status.success() {
            return Err(SignalError::Pesq(format!("{program} exited with {}", out.status)));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        stdout
            .split(|c: char| c.is_whitespace() || c == ',' || c == ':' || c == '=')
            .filter_map(|tok| tok.parse::<f64>().ok())
            .last()
            .map(Some)
            .ok_or_else(|| SignalError::Pesq(format!("no score in output of {program}")))
    }
}
