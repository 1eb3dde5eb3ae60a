//! Contracts for the external model services (speech recognition,
//! translation, image generation, captioning, text embedding and sentiment
//! classification), with deterministic mock and HTTP implementations.
//!
//! Every call receives the clock it should measure time on; timeouts and
//! retry backoff are expressed on that clock.

pub mod mock;
pub mod remote;
pub mod retry;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SentimentProbabilities;
use crate::clock::Clock;
use crate::domain::{ArtifactRef, CaptionSource, EmbeddingVector, GenerationRequest, GenerationResult, Language};
use crate::storage::ArtifactStore;

pub use mock::{MockCaptioner, MockEmbedder, MockImageGenerator, MockSentiment, MockSpeechRecognizer, MockTranslator};
pub use retry::{call_with_retry, AttemptError, AttemptRecord};

/// Instruction sent with every captioning request.
pub const CAPTION_INSTRUCTION: &str = "This image was generated as a positive reinterpretation of a scene. \
Describe what this new image communicates emotionally and semantically.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("{service}: gave up after {} attempt(s)", attempts.len())]
    Exhausted {
        service: String,
        timed_out: bool,
        attempts: Vec<AttemptRecord>,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("service refused the request: {0}")]
    Refused(String),
    #[error("no caption available: primary {primary}; fallback {fallback}")]
    CaptionUnavailable { primary: String, fallback: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("artifact store: {0}")]
    Storage(String),
    #[error("cancelled")]
    Cancelled,
}

impl ClientError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, ClientError::Exhausted { timed_out: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: String,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
}

fn default_backoff() -> u64 {
    200
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>, auth_token_env: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_ms: 10_000,
            retries: 2,
            auth_token_env: auth_token_env.into(),
            backoff_base_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.timeout_ms == 0 {
            return Err(ClientError::Validation("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    /// Reads the token from the configured environment variable, if set.
    pub fn auth_token(&self) -> Option<String> {
        std::env::var(&self.auth_token_env).ok().filter(|t| !t.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    pub text: String,
    pub source: CaptionSource,
}

pub trait SpeechRecognizer: Send + Sync {
    /// Transcribes PCM audio. Silence yields an empty transcript.
    fn transcribe(&self, audio: &[u8], language_hint: Language, clock: &dyn Clock) -> Result<String, ClientError>;
}

pub trait Translator: Send + Sync {
    /// Translates non-English text to English.
    fn translate_foreign(&self, text: &str, source: Language, clock: &dyn Clock) -> Result<String, ClientError>;

    /// English input is returned verbatim, without correction.
    fn translate(&self, text: &str, source: Language, clock: &dyn Clock) -> Result<String, ClientError> {
        if source == Language::En {
            return Ok(text.to_string());
        }
        self.translate_foreign(text, source, clock)
    }
}

pub trait ImageGenerator: Send + Sync {
    fn generate(&self, req: &GenerationRequest, clock: &dyn Clock) -> Result<GenerationResult, ClientError>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &ArtifactRef, instruction: &str, clock: &dyn Clock) -> Result<String, ClientError>;
}

pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str, clock: &dyn Clock) -> Result<EmbeddingVector, ClientError>;
}

pub trait SentimentClassifier: Send + Sync {
    fn classify(&self, text: &str, clock: &dyn Clock) -> Result<SentimentProbabilities, ClientError>;
}

/// Primary captioner with a fallback for refusals and failures.
#[derive(Clone)]
pub struct CaptionPipeline {
    pub primary: Arc<dyn Captioner>,
    pub fallback: Arc<dyn Captioner>,
}

impl CaptionPipeline {
    pub fn caption(&self, image: &ArtifactRef, instruction: &str, clock: &dyn Clock) -> Result<CaptionResult, ClientError> {
        let primary_err = match self.primary.caption(image, instruction, clock) {
            Ok(text) if !text.trim().is_empty() => {
                return Ok(CaptionResult {
                    text,
                    source: CaptionSource::Primary,
                })
            }
            Ok(_) => "empty caption".to_string(),
            Err(e) => e.to_string(),
        };
        log::info!("primary captioner failed ({primary_err}); using fallback");
        match self.fallback.caption(image, instruction, clock) {
            Ok(text) if !text.trim().is_empty() => Ok(CaptionResult {
                text,
                source: CaptionSource::Fallback,
            }),
            Ok(_) => Err(ClientError::CaptionUnavailable {
                primary: primary_err,
                fallback: "empty caption".into(),
            }),
            Err(e) => Err(ClientError::CaptionUnavailable {
                primary: primary_err,
                fallback: e.to_string(),
            }),
        }
    }
}

/// All services a session needs, each independently mock or remote.
#[derive(Clone)]
pub struct ClientSet {
    pub asr: Arc<dyn SpeechRecognizer>,
    pub translator: Arc<dyn Translator>,
    pub generator: Arc<dyn ImageGenerator>,
    pub captions: CaptionPipeline,
    pub embedder: Arc<dyn TextEmbedder>,
    pub sentiment: Arc<dyn SentimentClassifier>,
    pub artifacts: Arc<dyn ArtifactStore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSettings {
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub noise_eps: f64,
    /// Simulated generation latency on the caller's clock.
    pub generation_latency_ms: u64,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            embedding_dim: crate::conditioning::DEFAULT_D_MODEL,
            embedding_seed: 0,
            noise_eps: crate::conditioning::DEFAULT_NOISE_EPS,
            generation_latency_ms: 0,
            timeout_ms: 10_000,
            retries: 2,
        }
    }
}

impl ClientSet {
    /// Fully mocked services sharing one embedder and artifact store.
    pub fn mock(settings: &MockSettings, artifacts: Arc<dyn ArtifactStore>) -> Self {
        let embedder = Arc::new(MockEmbedder::new(settings.embedding_dim, settings.embedding_seed));
        let config = ClientConfig {
            timeout_ms: settings.timeout_ms,
            retries: settings.retries,
            ..ClientConfig::new("mock://", "")
        };
        let mut generator = MockImageGenerator::new(embedder.clone(), artifacts.clone(), config);
        generator.noise_eps = settings.noise_eps;
        generator.latency_ms = settings.generation_latency_ms;
        Self {
            asr: Arc::new(MockSpeechRecognizer::with_default_fixtures()),
            translator: Arc::new(MockTranslator::with_default_fixtures()),
            generator: Arc::new(generator),
            captions: CaptionPipeline {
                primary: Arc::new(MockCaptioner::primary(embedder.clone(), artifacts.clone())),
                fallback: Arc::new(MockCaptioner::fallback(embedder.clone(), artifacts.clone())),
            },
            embedder,
            sentiment: Arc::new(MockSentiment),
            artifacts,
        }
    }
}
