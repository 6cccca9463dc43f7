//! Translation endpoint selection: HTTP POST services or the built-in
//! mocks (`mock:identity`, `mock:reverse`).

use std::time::Duration;

use policyscope_core::textfeat::{
    BackTranslation, IdentityTranslator, Paraphraser, ReverseWordsParaphrase, TranslationError,
    TranslationRequest, TranslationResponse, Translator,
};

use crate::error::CliError;

/// Directional translator speaking the JSON-over-POST wire format.
pub struct HttpTranslator {
    client: reqwest::blocking::Client,
    base_url: String,
}

impl HttpTranslator {
    pub fn new(base_url: String, timeout: Duration) -> Result<Self, CliError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| CliError::data(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpTranslator { client, base_url })
    }
}

impl Translator for HttpTranslator {
    fn translate(
        &self,
        text: &str,
        source_lang: &str,
        target_lang: &str,
    ) -> Result<String, TranslationError> {
        let request = TranslationRequest {
            text: text.to_string(),
            source: source_lang.to_string(),
            target: target_lang.to_string(),
        };
        let response = self
            .client
            .post(&self.base_url)
            .json(&request)
            .send()
            .map_err(|e| TranslationError::retriable(format!("transport: {e}")))?;
        if !response.status().is_success() {
            let status = response.status();
            let retriable = status.is_server_error();
            let error = TranslationError {
                message: format!("remote returned {status}"),
                retriable,
            };
            return Err(error);
        }
        let body: TranslationResponse = response
            .json()
            .map_err(|e| TranslationError::permanent(format!("malformed response: {e}")))?;
        Ok(body.text)
    }
}

/// Builds the paraphrase source named by the config's translator URL.
pub fn paraphraser_for(
    url: &str,
    source_lang: &str,
    pivot_lang: &str,
    timeout: Duration,
) -> Result<Box<dyn Paraphraser>, CliError> {
    match url {
        "mock:identity" => Ok(Box::new(IdentityTranslator)),
        "mock:reverse" => Ok(Box::new(ReverseWordsParaphrase)),
        _ if url.starts_with("http://") || url.starts_with("https://") => {
            let translator = HttpTranslator::new(url.to_string(), timeout)?;
            Ok(Box::new(OwnedBackTranslation {
                translator,
                source_lang: source_lang.to_string(),
                pivot_lang: pivot_lang.to_string(),
            }))
        }
        other => Err(CliError::usage(format!(
            "unknown translator {other:?}; use mock:identity, mock:reverse, or an http(s) URL"
        ))),
    }
}

struct OwnedBackTranslation {
    translator: HttpTranslator,
    source_lang: String,
    pivot_lang: String,
}

impl Paraphraser for OwnedBackTranslation {
    fn paraphrase(&self, text: &str) -> Result<String, TranslationError> {
        BackTranslation {
            translator: &self.translator,
            source_lang: self.source_lang.clone(),
            pivot_lang: self.pivot_lang.clone(),
        }
        .paraphrase(text)
    }
}
