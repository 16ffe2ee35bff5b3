//! Outbound adapter for an external text generator.
//!
//! `POST <endpoint>` with a JSON [`RewriteRequest`] body; the service
//! answers with a JSON [`RewriteResponse`]. Any failure, and any reply that
//! mentions a number missing from the anchors, falls back to the template.

use std::time::Duration;

use novapipe_core::guidance::rewrite::{RewriteRequest, RewriteResponse, TextRewriter};

pub struct HttpRewriter {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpRewriter {
    pub fn new(endpoint: String) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(10)).build();
        HttpRewriter { endpoint, agent }
    }
}

impl TextRewriter for HttpRewriter {
    fn rewrite(&self, req: &RewriteRequest) -> Result<RewriteResponse, String> {
        self.agent
            .post(&self.endpoint)
            .send_json(req)
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| e.to_string())
    }
}
