use std::time::Duration;

use touchstone_core::config::LlmConfig;
use touchstone_core::error::{Error, Result};
use touchstone_core::lang::{ClientReply, ClientRequest, ExplanationClient};

/// Posts the structured request as JSON and expects `{"text": ...}` back.
///
/// Uses a blocking client, so build it outside any async runtime and call it
/// from blocking threads only.
pub struct HttpExplanationClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpExplanationClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, api_key: Option<String>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        Ok(HttpExplanationClient { http, endpoint: endpoint.into(), api_key })
    }

    /// `None` when no endpoint is configured.
    pub fn from_config(cfg: &LlmConfig) -> Result<Option<Self>> {
        match &cfg.endpoint {
            None => Ok(None),
            Some(url) => Self::new(url.clone(), Duration::from_secs_f64(cfg.timeout_secs), cfg.api_key()).map(Some),
        }
    }
}

impl ExplanationClient for HttpExplanationClient {
    fn complete(&self, request: &ClientRequest) -> Result<ClientReply> {
        let mut req = self.http.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().and_then(|r| r.error_for_status()).map_err(|e| Error::Client(e.to_string()))?;
        resp.json::<ClientReply>().map_err(|e| Error::Client(e.to_string()))
    }
}
