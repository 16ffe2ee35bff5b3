//! HTTP service and CLI around `novapipe_core`: a content-addressed store,
//! a training job queue and thin JSON handlers.

pub mod api;
pub mod cli;
pub mod jobs;
#[cfg(feature = "llm-adapter")]
pub mod llm;
pub mod store;

use std::sync::Arc;

use novapipe_core::guidance::rewrite::TextRewriter;

/// Guidance rewriter configured by `NOVAPIPE_LLM_URL`. Always `None`
/// unless the crate is built with the `llm-adapter` feature.
pub fn rewriter_from_env() -> Option<Arc<dyn TextRewriter>> {
    #[cfg(feature = "llm-adapter")]
    if let Ok(url) = std::env::var("NOVAPIPE_LLM_URL") {
        return Some(Arc::new(llm::HttpRewriter::new(url)));
    }
    None
}
