//! Run configuration: one JSON document, every field optional, paths
//! resolved relative to the file that declares them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// Root seed for every seeded choice in the run.
    pub seed: u64,
    pub provider: ProviderSettings,
    pub embedding: EmbeddingSettings,
    pub roles: RoleSettings,
    pub mcq: McqSettings,
    pub adversarial: AdversarialSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            corpus_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            seed: 0,
            provider: ProviderSettings::default(),
            embedding: EmbeddingSettings::default(),
            roles: RoleSettings::default(),
            mcq: McqSettings::default(),
            adversarial: AdversarialSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Mock,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub mode: ProviderMode,
    /// Chat completion endpoint; required in http mode.
    pub url: Option<String>,
    /// Embedding endpoint; defaults to `url`.
    pub embedding_url: Option<String>,
    pub chat_model: String,
    pub embedding_model: String,
    /// Dimensions of the offline hashing embedder.
    pub embedding_dim: usize,
    pub mock_seed: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            mode: ProviderMode::Mock,
            url: None,
            embedding_url: None,
            chat_model: String::from("chat-default"),
            embedding_model: String::from("embedding-default"),
            embedding_dim: 256,
            mock_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub window_tokens: usize,
    pub stride_tokens: usize,
    pub epsilon: f64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings { window_tokens: 96, stride_tokens: 48, epsilon: 1e-9 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleSettings {
    /// Questions the generated teacher produces per section.
    pub n_questions: usize,
    pub span_tokens: usize,
    pub max_retries: usize,
}

impl Default for RoleSettings {
    fn default() -> Self {
        RoleSettings { n_questions: 10, span_tokens: 96, max_retries: 3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McqSettings {
    pub max_options: usize,
    pub unknowable_fraction: f64,
}

impl Default for McqSettings {
    fn default() -> Self {
        McqSettings { max_options: 5, unknowable_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialSettings {
    /// Restrict swap donors to the same material kind.
    pub group_by_kind: bool,
}

impl Default for AdversarialSettings {
    fn default() -> Self {
        AdversarialSettings { group_by_kind: true }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub provider_url: Option<String>,
    pub model: Option<String>,
}

fn absolutize(base: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Config, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: Config = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    cfg.corpus_dir = absolutize(base, cfg.corpus_dir);
    cfg.out_dir = absolutize(base, cfg.out_dir);
    cfg.cache_dir = cfg.cache_dir.map(|d| absolutize(base, d));

    // Flag paths are typed at the shell, so they resolve against the
    // working directory, not the config file.
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out_dir) = &overrides.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if let Some(cache_dir) = &overrides.cache_dir {
        cfg.cache_dir = Some(cache_dir.clone());
    }
    if let Some(url) = &overrides.provider_url {
        cfg.provider.url = Some(url.clone());
    }
    if let Some(model) = &overrides.model {
        cfg.provider.chat_model = model.clone();
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &Config) -> Result<(), CliError> {
    let fail = |msg: String| Err(CliError::Config(msg));
    if cfg.embedding.window_tokens == 0 || cfg.embedding.stride_tokens == 0 {
        return fail(format!(
            "embedding window geometry must be positive, got window {} stride {}",
            cfg.embedding.window_tokens, cfg.embedding.stride_tokens
        ));
    }
    if !(cfg.embedding.epsilon > 0.0) {
        return fail(format!("embedding.epsilon must be positive, got {}", cfg.embedding.epsilon));
    }
    if cfg.roles.n_questions == 0 {
        return fail("roles.n_questions must be at least 1".to_string());
    }
    if cfg.roles.span_tokens == 0 {
        return fail("roles.span_tokens must be at least 1".to_string());
    }
    if !(2..=26).contains(&cfg.mcq.max_options) {
        return fail(format!("mcq.max_options must lie in 2..=26, got {}", cfg.mcq.max_options));
    }
    if !(0.0..=1.0).contains(&cfg.mcq.unknowable_fraction) {
        return fail(format!(
            "mcq.unknowable_fraction must lie in [0, 1], got {}",
            cfg.mcq.unknowable_fraction
        ));
    }
    Ok(())
}
