use serde::Serialize;
use std::time::Instant;

/// Provenance block embedded in every JSON output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_s: f64,
}

pub struct ManifestTimer {
    command: String,
    inputs: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    started: Instant,
}

impl ManifestTimer {
    pub fn start(command: &str, inputs: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        ManifestTimer {
            command: command.to_string(),
            inputs,
            config,
            seed,
            started: Instant::now(),
        }
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            command: self.command,
            inputs: self.inputs,
            config: self.config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        }
    }
}
