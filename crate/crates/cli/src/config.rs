//! Optional TOML configuration for `tag segment`. Every key mirrors a
//! command-line flag; flags win over the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tag_core::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub clusters: Option<usize>,
    pub topn: Option<usize>,
    pub freq_threshold: Option<usize>,
    pub seed: Option<u64>,
    pub kmeans_max_iters: Option<usize>,
    pub kmeans_tol: Option<f64>,
    pub upsample: Option<String>,
    pub cluster_on: Option<String>,
    pub count_per: Option<String>,
    pub keep_pos: Option<Vec<String>>,
    pub threshold_fallback: Option<bool>,
    pub disable_filter: Option<Vec<String>>,
    pub probe: Option<usize>,
    pub jobs: Option<usize>,
    pub patch: Option<usize>,
    pub db: Option<PathBuf>,
    pub word_records: Option<PathBuf>,
    pub word_embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format("config", format!("{}: {e}", path.display())))
    }
}
