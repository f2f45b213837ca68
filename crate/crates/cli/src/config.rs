//! Service and command defaults: one TOML file, then `FLOWFORGE_*`
//! environment overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub port: u16,
    /// Relative file paths in flows and agent tables resolve against this.
    pub data_dir: PathBuf,
    pub spill_dir: PathBuf,
    /// Default per-run memory budget.
    pub memory_budget_bytes: u64,
    pub workers: usize,
    /// Rows per page on the results endpoint.
    pub page_size: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: 8080,
            data_dir: PathBuf::from("."),
            spill_dir: std::env::temp_dir().join("flowforge-spill"),
            memory_budget_bytes: 512 << 20,
            workers: 4,
            page_size: 100,
        }
    }
}

pub const ENV_CONFIG: &str = "FLOWFORGE_CONFIG";

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Config> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` (or the file named by `FLOWFORGE_CONFIG`, or nothing)
    /// and applies environment overrides.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let path = path.map(Path::to_path_buf).or_else(|| std::env::var_os(ENV_CONFIG).map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading config {}", p.display()))?;
                Config::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> anyhow::Result<T> {
            v.trim().parse().map_err(|_| anyhow::anyhow!("{key}: `{v}` is not a valid number"))
        }
        if let Some(v) = var("FLOWFORGE_PORT") {
            self.port = num("FLOWFORGE_PORT", &v)?;
        }
        if let Some(v) = var("FLOWFORGE_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = var("FLOWFORGE_SPILL_DIR") {
            self.spill_dir = v.into();
        }
        if let Some(v) = var("FLOWFORGE_BUDGET_BYTES") {
            self.memory_budget_bytes = num("FLOWFORGE_BUDGET_BYTES", &v)?;
        }
        if let Some(v) = var("FLOWFORGE_WORKERS") {
            self.workers = num("FLOWFORGE_WORKERS", &v)?;
        }
        Ok(())
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.memory_budget_bytes == 0 {
            bail!("memory_budget_bytes must be positive");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.page_size == 0 {
            bail!("page_size must be at least 1");
        }
        Ok(())
    }
}
