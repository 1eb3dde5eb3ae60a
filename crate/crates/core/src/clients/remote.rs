//! HTTP backends. Every service takes a JSON body via POST and answers with
//! a JSON body; bearer tokens come from environment variables only.

use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    call_with_retry, AttemptError, CaptionPipeline, Captioner, ClientConfig, ClientError, ClientSet, ImageGenerator,
    SentimentClassifier, SpeechRecognizer, TextEmbedder, Translator,
};
use crate::analysis::SentimentProbabilities;
use crate::clock::Clock;
use crate::domain::{ArtifactRef, Backend, EmbeddingVector, GenerationRequest, GenerationResult, Language};
use crate::storage::ArtifactStore;

/// Wire body of a remote generation request. Field names and order are
/// part of the service contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationBody {
    pub prompt: String,
    pub reference_image_b64: String,
    pub image_scale: f64,
    pub text_guidance: f64,
    pub denoise_steps: u32,
    pub seed: u64,
}

impl GenerationBody {
    pub fn from_request(req: &GenerationRequest, reference_image: &[u8]) -> Self {
        Self {
            prompt: req.prompt.clone(),
            reference_image_b64: B64.encode(reference_image),
            image_scale: req.image_scale,
            text_guidance: req.text_guidance,
            denoise_steps: req.denoise_steps,
            seed: req.seed,
        }
    }
}

#[derive(Debug, Deserialize)]
struct GenerationReply {
    image_b64: String,
    embedding: Vec<f64>,
}

/// One JSON-over-HTTP endpoint with the shared retry/timeout contract.
pub struct RemoteService {
    name: &'static str,
    config: ClientConfig,
    http: reqwest::blocking::Client,
}

impl RemoteService {
    pub fn new(name: &'static str, config: ClientConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ClientError::Validation(e.to_string()))?;
        Ok(Self { name, config, http })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B, clock: &dyn Clock) -> Result<R, ClientError> {
        let payload = serde_json::to_vec(body).map_err(|e| ClientError::Validation(e.to_string()))?;
        let token = self.config.auth_token();
        call_with_retry(self.name, &self.config, clock, |deadline| {
            let remaining = deadline.saturating_sub(clock.now_ms()).max(1);
            let mut req = self
                .http
                .post(&self.config.endpoint)
                .timeout(Duration::from_millis(remaining))
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(payload.clone());
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            let resp = req.send().map_err(|e| {
                if e.is_timeout() {
                    AttemptError::TimedOut
                } else {
                    AttemptError::Unreachable(e.to_string())
                }
            })?;
            let status = resp.status();
            if status.is_server_error() {
                return Err(AttemptError::Unreachable(format!("HTTP {status}")));
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(AttemptError::Fatal(ClientError::Refused(format!("HTTP {status}: {text}"))));
            }
            let bytes = resp.bytes().map_err(|e| {
                if e.is_timeout() {
                    AttemptError::TimedOut
                } else {
                    AttemptError::Unreachable(e.to_string())
                }
            })?;
            serde_json::from_slice(&bytes).map_err(|e| AttemptError::Fatal(ClientError::Protocol(e.to_string())))
        })
    }
}

#[derive(Debug, Deserialize)]
struct TextReply {
    text: String,
}

pub struct RemoteSpeechRecognizer(pub RemoteService);

impl SpeechRecognizer for RemoteSpeechRecognizer {
    fn transcribe(&self, audio: &[u8], language_hint: Language, clock: &dyn Clock) -> Result<String, ClientError> {
        if audio.is_empty() {
            return Err(ClientError::Validation("empty audio".into()));
        }
        #[derive(Serialize)]
        struct Body<'a> {
            audio_b64: String,
            language: &'a Language,
        }
        let reply: TextReply = self.0.post(
            &Body {
                audio_b64: B64.encode(audio),
                language: &language_hint,
            },
            clock,
        )?;
        Ok(reply.text)
    }
}

pub struct RemoteTranslator(pub RemoteService);

impl Translator for RemoteTranslator {
    fn translate_foreign(&self, text: &str, source: Language, clock: &dyn Clock) -> Result<String, ClientError> {
        #[derive(Serialize)]
        struct Body<'a> {
            text: &'a str,
            source_language: Language,
            target_language: Language,
        }
        let reply: TextReply = self.0.post(
            &Body {
                text,
                source_language: source,
                target_language: Language::En,
            },
            clock,
        )?;
        Ok(reply.text)
    }
}

pub struct RemoteImageGenerator {
    pub service: RemoteService,
    pub artifacts: Arc<dyn ArtifactStore>,
}

impl ImageGenerator for RemoteImageGenerator {
    fn generate(&self, req: &GenerationRequest, clock: &dyn Clock) -> Result<GenerationResult, ClientError> {
        req.validate().map_err(|e| ClientError::Validation(e.to_string()))?;
        let reference = std::fs::read(&req.reference_image.image_path).map_err(|e| {
            ClientError::Validation(format!("reference image {}: {e}", req.reference_image.image_path.display()))
        })?;
        let started = clock.now_ms();
        let reply: GenerationReply = self.service.post(&GenerationBody::from_request(req, &reference), clock)?;
        let bytes = B64
            .decode(reply.image_b64)
            .map_err(|e| ClientError::Protocol(format!("image_b64: {e}")))?;
        let image_ref = self.artifacts.put(&bytes).map_err(|e| ClientError::Storage(e.to_string()))?;
        let output_embedding = EmbeddingVector::new(reply.embedding);
        if output_embedding.dim() == 0 || !output_embedding.norm().is_finite() {
            return Err(ClientError::Protocol("invalid output embedding".into()));
        }
        Ok(GenerationResult {
            image_ref,
            output_embedding,
            latency_ms: clock.now_ms().saturating_sub(started),
            backend: Backend::Remote,
        })
    }
}

pub struct RemoteCaptioner {
    pub service: RemoteService,
    pub artifacts: Arc<dyn ArtifactStore>,
}

impl Captioner for RemoteCaptioner {
    fn caption(&self, image: &ArtifactRef, instruction: &str, clock: &dyn Clock) -> Result<String, ClientError> {
        #[derive(Serialize)]
        struct Body<'a> {
            image_b64: String,
            instruction: &'a str,
        }
        #[derive(Deserialize)]
        struct Reply {
            caption: Option<String>,
            #[serde(default)]
            refused: bool,
        }
        let bytes = self
            .artifacts
            .get(&image.id)
            .map_err(|e| ClientError::Storage(e.to_string()))?
            .ok_or_else(|| ClientError::Storage(format!("artifact {} not found", image.id)))?;
        let reply: Reply = self.service.post(
            &Body {
                image_b64: B64.encode(bytes),
                instruction,
            },
            clock,
        )?;
        match reply.caption {
            Some(c) if !reply.refused && !c.trim().is_empty() => Ok(c),
            _ => Err(ClientError::Refused("captioner declined".into())),
        }
    }
}

pub struct RemoteEmbedder(pub RemoteService);

impl TextEmbedder for RemoteEmbedder {
    fn embed(&self, text: &str, clock: &dyn Clock) -> Result<EmbeddingVector, ClientError> {
        if text.trim().is_empty() {
            return Err(ClientError::Validation("cannot embed empty text".into()));
        }
        #[derive(Serialize)]
        struct Body<'a> {
            text: &'a str,
        }
        #[derive(Deserialize)]
        struct Reply {
            embedding: Vec<f64>,
        }
        let reply: Reply = self.0.post(&Body { text }, clock)?;
        Ok(EmbeddingVector::new(reply.embedding))
    }
}

pub struct RemoteSentiment(pub RemoteService);

impl SentimentClassifier for RemoteSentiment {
    fn classify(&self, text: &str, clock: &dyn Clock) -> Result<SentimentProbabilities, ClientError> {
        #[derive(Serialize)]
        struct Body<'a> {
            text: &'a str,
        }
        #[derive(Deserialize)]
        struct Reply {
            negative: f64,
            neutral: f64,
            positive: f64,
        }
        let r: Reply = self.0.post(&Body { text }, clock)?;
        SentimentProbabilities::new(r.negative, r.neutral, r.positive)
            .map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

/// Endpoint configuration for every remote service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoints {
    pub asr: ClientConfig,
    pub translate: ClientConfig,
    pub generate: ClientConfig,
    pub caption: ClientConfig,
    pub caption_fallback: ClientConfig,
    pub embed: ClientConfig,
    pub sentiment: ClientConfig,
}

impl RemoteEndpoints {
    /// Services under one base URL (`<base>/asr`, `<base>/generate`, ...),
    /// each with its own token variable.
    pub fn under(base: &str) -> Self {
        let base = base.trim_end_matches('/');
        let c = |path: &str, env: &str| ClientConfig::new(format!("{base}/{path}"), env);
        Self {
            asr: c("asr", "RLAB_ASR_TOKEN"),
            translate: c("translate", "RLAB_TRANSLATE_TOKEN"),
            generate: ClientConfig {
                timeout_ms: 30_000,
                ..c("generate", "RLAB_GEN_TOKEN")
            },
            caption: c("caption", "RLAB_CAPTION_TOKEN"),
            caption_fallback: c("caption-fallback", "RLAB_CAPTION_FALLBACK_TOKEN"),
            embed: c("embed", "RLAB_EMBED_TOKEN"),
            sentiment: c("sentiment", "RLAB_SENTIMENT_TOKEN"),
        }
    }
}

impl ClientSet {
    pub fn remote(endpoints: &RemoteEndpoints, artifacts: Arc<dyn ArtifactStore>) -> Result<Self, ClientError> {
        let svc = |name, cfg: &ClientConfig| RemoteService::new(name, cfg.clone());
        Ok(Self {
            asr: Arc::new(RemoteSpeechRecognizer(svc("asr", &endpoints.asr)?)),
            translator: Arc::new(RemoteTranslator(svc("translate", &endpoints.translate)?)),
            generator: Arc::new(RemoteImageGenerator {
                service: svc("generate", &endpoints.generate)?,
                artifacts: artifacts.clone(),
            }),
            captions: CaptionPipeline {
                primary: Arc::new(RemoteCaptioner {
                    service: svc("caption", &endpoints.caption)?,
                    artifacts: artifacts.clone(),
                }),
                fallback: Arc::new(RemoteCaptioner {
                    service: svc("caption-fallback", &endpoints.caption_fallback)?,
                    artifacts: artifacts.clone(),
                }),
            },
            embedder: Arc::new(RemoteEmbedder(svc("embed", &endpoints.embed)?)),
            sentiment: Arc::new(RemoteSentiment(svc("sentiment", &endpoints.sentiment)?)),
            artifacts,
        })
    }
}
