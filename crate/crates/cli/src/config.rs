//! The TOML run configuration. Relative paths resolve against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use interview_assess::llm::{ClientOptions, DecodeParams};
use interview_assess::metrics::MetricOptions;
use interview_assess::prompt::ShotSetting;
use interview_assess::segment::SegmentParams;
use interview_assess::RetryPolicy;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
    pub paths: Paths,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub segmentation: SegmentParams,
    pub assess: AssessConfig,
    pub metrics: MetricOptions,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub schema: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    /// Diarized transcripts named like the verbatim ones; merged when set.
    pub diarized: Option<PathBuf>,
    /// Boundary truth, scored when transcripts are not merged.
    pub truth: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub slot_overrides: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    #[default]
    LocalHash,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingKind,
    pub url: Option<String>,
    pub dimension: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingKind::LocalHash,
            url: None,
            dimension: 256,
            timeout_secs: 30,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: LlmKind,
    /// Canned responses for the mock provider.
    pub mock: Option<PathBuf>,
    pub url: Option<String>,
    pub timeout_secs: u64,
    pub preset: String,
    pub params: Option<DecodeParams>,
    /// Maximum concurrent in-flight requests.
    pub parallelism: usize,
    pub requests_per_minute: Option<u32>,
    /// Payload size limit in characters.
    pub context_budget: Option<usize>,
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            provider: LlmKind::Mock,
            mock: None,
            url: None,
            timeout_secs: 60,
            preset: "deterministic".into(),
            params: None,
            parallelism: 4,
            requests_per_minute: None,
            context_budget: None,
            retry: RetryPolicy::default(),
        }
    }
}

impl LlmConfig {
    pub fn decode_params(&self, seed: u64) -> Result<DecodeParams, CliError> {
        let mut p = match &self.params {
            Some(p) => p.clone(),
            None => DecodeParams::preset(&self.preset)?,
        };
        if p.seed.is_some() {
            p.seed = Some(seed);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessConfig {
    pub setting: ShotSetting,
    /// History size limit in characters.
    pub history_budget: Option<usize>,
    /// Fixed provenance timestamp; needed for byte-identical reports.
    pub timestamp: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.schema,
            &mut p.transcripts,
            &mut p.diarized,
            &mut p.truth,
            &mut p.gold,
            &mut p.exemplars,
            &mut p.slot_overrides,
            &mut p.out,
            &mut self.llm.mock,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// Checks thresholds and that every referenced input exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.segmentation.validate()?;
        let p = &self.paths;
        let inputs = [
            ("paths.schema", &p.schema),
            ("paths.transcripts", &p.transcripts),
            ("paths.diarized", &p.diarized),
            ("paths.truth", &p.truth),
            ("paths.gold", &p.gold),
            ("paths.exemplars", &p.exemplars),
            ("paths.slot_overrides", &p.slot_overrides),
            ("llm.mock", &self.llm.mock),
        ];
        for (key, path) in inputs {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(CliError::Data(format!("{key}: {} does not exist", path.display())));
                }
            }
        }
        if self.embedding.provider == EmbeddingKind::Remote && self.embedding.url.is_none() {
            return Err(CliError::Data(
                "embedding.url is required for the remote provider".into(),
            ));
        }
        if self.llm.provider == LlmKind::Http && self.llm.url.is_none() {
            return Err(CliError::Data("llm.url is required for the http provider".into()));
        }
        if self.llm.parallelism == 0 {
            return Err(CliError::Data("llm.parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn client_options(&self) -> ClientOptions {
        ClientOptions {
            retry: self.llm.retry,
            parallelism: self.llm.parallelism,
            requests_per_minute: self.llm.requests_per_minute,
            context_budget: self.llm.context_budget,
        }
    }

    pub fn segment_params(&self) -> &SegmentParams {
        &self.segmentation
    }

    pub fn require<'a>(&self, key: &str, path: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        path.as_deref()
            .ok_or_else(|| CliError::Usage(format!("{key} must be set in the config")))
    }
}
