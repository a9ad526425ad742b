//! Turns provider settings into boxed chat and embedding backends, wrapped
//! in a disk cache when one is configured.

use sensemaker_core::embedmetrics::{HashEmbedder, HttpEmbedder};
use sensemaker_core::llmroles::{HttpChatProvider, MockChatProvider};
use sensemaker_core::provider::{CachedChat, CachedEmbedder, DiskCache};
use sensemaker_core::{ChatProvider, EmbeddingProvider};

use crate::config::{Config, ProviderMode};
use crate::CliError;

pub struct Providers {
    pub chat: Box<dyn ChatProvider>,
    pub embedder: Box<dyn EmbeddingProvider>,
}

pub fn build(cfg: &Config) -> Result<Providers, CliError> {
    let (chat, embedder): (Box<dyn ChatProvider>, Box<dyn EmbeddingProvider>) =
        match cfg.provider.mode {
            ProviderMode::Mock => (
                Box::new(MockChatProvider::new(cfg.provider.mock_seed)),
                Box::new(HashEmbedder::new(cfg.provider.embedding_dim)),
            ),
            ProviderMode::Http => {
                let key = std::env::var("SENSEMAKER_API_KEY")
                    .ok()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| {
                        CliError::Config(
                            "provider mode `http` needs SENSEMAKER_API_KEY in the environment"
                                .to_string(),
                        )
                    })?;
                let url = cfg.provider.url.clone().ok_or_else(|| {
                    CliError::Config("provider mode `http` needs provider.url".to_string())
                })?;
                let embedding_url =
                    cfg.provider.embedding_url.clone().unwrap_or_else(|| url.clone());
                (
                    Box::new(HttpChatProvider::new(
                        url,
                        cfg.provider.chat_model.clone(),
                        Some(key.clone()),
                    )),
                    Box::new(HttpEmbedder::new(
                        embedding_url,
                        cfg.provider.embedding_model.clone(),
                        Some(key),
                    )),
                )
            }
        };

    match &cfg.cache_dir {
        Some(dir) => {
            let chat_cache = DiskCache::new(dir.join("chat"))?;
            let embedding_cache = DiskCache::new(dir.join("embeddings"))?;
            Ok(Providers {
                chat: Box::new(CachedChat::new(chat, chat_cache)),
                embedder: Box::new(CachedEmbedder::new(embedder, embedding_cache)),
            })
        }
        None => Ok(Providers { chat, embedder }),
    }
}
