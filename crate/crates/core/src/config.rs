//! Declarative run configuration, read from a TOML file.
//!
//! ```toml
//! [data]
//! anchors = "anchors.ptae"   # omit both paths to synthesize from [synthetic]
//! stream = "stream.ptae"
//! normalize_on_ingest = true
//!
//! [synthetic]
//! class_count = 10
//! dim = 64
//! shift_kind = "rotate-subspace"
//! shift_magnitude = 0.3
//!
//! [run]
//! methods = ["zero-shot", "pta", "cache"]
//! warmup_skip = 100
//!
//! [pta]
//! h = 20.0
//! w = 0.01
//!
//! [cache]
//! capacity_per_class = 3
//! ```
//!
//! Every section and key is optional. Command-line flags override file
//! values, which override `PTA_OUTPUT_DIR` (output root only), which
//! overrides the built-in defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::CacheConfig;
use crate::error::{Error, Result};
use crate::harness::{MethodKind, RunOptions, DEFAULT_CHECKPOINT_EVERY, DEFAULT_WARMUP_SKIP};
use crate::io;
use crate::pta::PtaConfig;
use crate::stream::Stream;
use crate::synthetic::{self, ShiftSpec};
use crate::zero_shot::TextAnchors;

pub const OUTPUT_DIR_ENV: &str = "PTA_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "pta-output";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    pub anchors: Option<PathBuf>,
    pub stream: Option<PathBuf>,
    pub normalize_on_ingest: bool,
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource {
            anchors: None,
            stream: None,
            normalize_on_ingest: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<MethodKind>,
    pub warmup_skip: usize,
    pub checkpoint_every: usize,
    pub cold_start_window: usize,
    /// Shuffle the stream with this seed before running.
    pub shuffle_seed: Option<u64>,
    /// Extra seeded shuffles used to report order robustness.
    pub order_shuffles: usize,
    pub run_id: Option<String>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            methods: MethodKind::ALL.to_vec(),
            warmup_skip: DEFAULT_WARMUP_SKIP,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            cold_start_window: DEFAULT_WARMUP_SKIP,
            shuffle_seed: None,
            order_shuffles: 0,
            run_id: None,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data: DataSource,
    pub synthetic: ShiftSpec,
    pub run: RunSection,
    pub pta: PtaConfig,
    pub cache: CacheConfig,
}

impl CliConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: e.span().map_or(0, |s| s.start as u64),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.anchors.is_some() != self.data.stream.is_some() {
            return Err(Error::config("anchors and stream paths must be given together"));
        }
        if self.data.anchors.is_none() {
            self.synthetic.validate()?;
        }
        if self.run.methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        self.run_options().validate()?;
        self.pta.validate()?;
        self.cache.validate()
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            warmup_skip: self.run.warmup_skip,
            checkpoint_every: self.run.checkpoint_every,
            cold_start_window: self.run.cold_start_window,
        }
    }

    /// Flag value, then config file, then `PTA_OUTPUT_DIR`, then
    /// `pta-output`.
    pub fn output_dir(&self) -> PathBuf {
        self.run
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Loads the configured files, or synthesizes anchors and stream. The
    /// anchors use the PTA temperature for zero-shot scoring.
    pub fn resolve_data(&self) -> Result<(Arc<TextAnchors>, Stream)> {
        let (anchors, stream) = match (&self.data.anchors, &self.data.stream) {
            (Some(a), Some(s)) => (
                io::read_anchors(a, self.pta.tau)?,
                io::read_stream(s, self.data.normalize_on_ingest)?,
            ),
            _ => {
                let (draw, stream) = synthetic::generate(&self.synthetic)?;
                (draw.into_text_anchors(self.pta.tau)?, stream)
            }
        };
        if anchors.dim() != stream.dim() {
            return Err(Error::validation(format!(
                "anchors have dimension {} but the stream has {}",
                anchors.dim(),
                stream.dim()
            )));
        }
        stream.check_labels(anchors.class_count())?;
        let stream = match self.run.shuffle_seed {
            Some(seed) => stream.shuffled(seed),
            None => stream,
        };
        Ok((Arc::new(anchors), stream))
    }

    /// Stable identifier derived from the configuration (FNV-1a of its
    /// JSON form) unless one was given.
    pub fn run_id(&self) -> String {
        if let Some(id) = &self.run.run_id {
            return id.clone();
        }
        let json = serde_json::to_string(self).unwrap_or_default();
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("run-{hash:016x}")
    }
}
