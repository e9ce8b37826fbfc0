//! TOML configuration file.
//!
//! ```toml
//! [backend]
//! kind = "openai"                  # or "mock"
//! endpoint_url = "http://localhost:8000/v1"
//! model_id = "llama-3-8b-instruct"
//! api_key_env = "OPENAI_API_KEY"
//! max_concurrent = 8
//!
//! [prompts]
//! template_dir = "templates"       # relative to this file
//!
//! [server]
//! addr = "127.0.0.1:8080"
//! job_dir = "jobs"
//! queue_capacity = 64
//! ```
//!
//! Every `[backend]` key other than `kind` is a connection setting.

use std::path::{Path, PathBuf};

use argmine_core::BackendConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Openai,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub backend: Option<toml::Table>,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub server: ServerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsSection {
    pub template_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSection {
    pub addr: Option<String>,
    pub job_dir: Option<PathBuf>,
    pub queue_capacity: Option<usize>,
}

impl Config {
    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("--config {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::input(format!("--config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        };
        rebase(&mut cfg.prompts.template_dir);
        rebase(&mut cfg.server.job_dir);
        Ok(cfg)
    }

    /// The `kind` key, if set; otherwise openai when an endpoint is configured.
    pub fn backend_kind(&self) -> Result<Option<BackendKind>, CliError> {
        let Some(table) = &self.backend else { return Ok(None) };
        match table.get("kind") {
            Some(v) => v
                .clone()
                .try_into::<BackendKind>()
                .map(Some)
                .map_err(|e| CliError::input(format!("--config: [backend] kind: {e}"))),
            None if table.contains_key("endpoint_url") => Ok(Some(BackendKind::Openai)),
            None => Ok(None),
        }
    }

    /// Connection settings from `[backend]` with the overrides applied.
    pub fn backend_config(&self, endpoint: Option<&str>, model: Option<&str>) -> Result<BackendConfig, CliError> {
        let mut table = self.backend.clone().unwrap_or_default();
        table.remove("kind");
        if let Some(e) = endpoint {
            table.insert("endpoint_url".into(), e.into());
        }
        if let Some(m) = model {
            table.insert("model_id".into(), m.into());
        }
        for (key, flag) in [("endpoint_url", "--endpoint"), ("model_id", "--model")] {
            if !table.contains_key(key) {
                return Err(CliError::input(format!(
                    "{flag}: the openai backend needs `{key}` (set it in [backend] or pass {flag})"
                )));
            }
        }
        let cfg: BackendConfig = table
            .try_into()
            .map_err(|e| CliError::input(format!("--config: [backend]: {e}")))?;
        cfg.validate().map_err(|e| CliError::input(format!("--config: [backend]: {e}")))?;
        Ok(cfg)
    }
}
