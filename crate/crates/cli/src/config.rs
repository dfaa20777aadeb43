//! Shared config file: line records in the same style as plans.
//!
//! ```text
//! {"type":"global","master_seed":7,"parallelism":4,"out":"results","verbosity":"info"}
//! ```
//!
//! Command-line flags and `STRESSLAB_SEED` take precedence over the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use stresslab_core::{Error, Result};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct GlobalConfig {
    pub master_seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub out: Option<PathBuf>,
    pub verbosity: Option<log::LevelFilter>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Global {
        #[serde(default)]
        master_seed: Option<u64>,
        #[serde(default)]
        parallelism: Option<usize>,
        #[serde(default)]
        out: Option<PathBuf>,
        #[serde(default)]
        verbosity: Option<String>,
    },
}

impl GlobalConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let base = origin.parent().unwrap_or(Path::new("."));
        let mut cfg = GlobalConfig::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let Record::Global {
                master_seed,
                parallelism,
                out,
                verbosity,
            } = serde_json::from_str(line).map_err(|e| perr(e.to_string()))?;
            // later records override earlier ones field by field
            cfg.master_seed = master_seed.or(cfg.master_seed);
            cfg.parallelism = parallelism.or(cfg.parallelism);
            cfg.out = out.map(|o| base.join(o)).or(cfg.out);
            if let Some(v) = verbosity {
                cfg.verbosity = Some(v.parse().map_err(|_| perr(format!("unknown verbosity {v:?}")))?);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            context: format!("reading config {}", path.display()),
            source: e,
        })?;
        GlobalConfig::parse(&text, path)
    }
}
