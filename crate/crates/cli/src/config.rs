//! Optional `key=value` configuration file. Command-line flags and
//! environment variables take precedence over it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const KEYS: &[&str] = &[
    "corpus",
    "server",
    "policy",
    "rules",
    "max-rewrites",
    "format",
    "port",
];

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key=value", n + 1);
            };
            let k = k.trim();
            if !KEYS.contains(&k) {
                bail!(
                    "line {}: unknown key `{k}` (known: {})",
                    n + 1,
                    KEYS.join(", ")
                );
            }
            values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(FileConfig { values, base })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// A path value, relative to the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|p| self.base.join(p))
    }

    pub fn paths(&self, key: &str) -> Vec<PathBuf> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|p| self.base.join(p))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("`{key}`: {e}")),
        }
    }
}
