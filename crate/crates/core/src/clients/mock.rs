//! Deterministic stand-ins for the model services. Every output is a pure
//! function of the inputs and the configured seed.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    call_with_retry, AttemptError, Captioner, ClientConfig, ClientError, ImageGenerator, SentimentClassifier,
    SpeechRecognizer, TextEmbedder, Translator,
};
use crate::analysis::SentimentProbabilities;
use crate::clock::Clock;
use crate::conditioning::mock_generate;
use crate::domain::{ArtifactRef, Backend, EmbeddingVector, GenerationRequest, GenerationResult, Language};
use crate::storage::ArtifactStore;

/// Audio payloads beginning with this prefix name a transcript fixture.
pub const FIXTURE_PREFIX: &str = "fixture:";
/// Audio payloads beginning with this prefix carry their transcript inline.
pub const TEXT_PREFIX: &str = "text:";

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|t| t.trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// How a mock service misbehaves, for exercising error paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// Never answers; every attempt runs into the timeout.
    Stall,
    Unreachable,
    /// Answers with an error (captioners: a refusal).
    Refuse,
}

fn run_fault<T>(fault: Fault, f: impl FnOnce() -> Result<T, ClientError>) -> Result<T, AttemptError> {
    match fault {
        Fault::None => f().map_err(AttemptError::Fatal),
        Fault::Stall => Err(AttemptError::Stalled),
        Fault::Unreachable => Err(AttemptError::Unreachable("mock endpoint down".into())),
        Fault::Refuse => Err(AttemptError::Fatal(ClientError::Refused("mock refusal".into()))),
    }
}

pub struct MockSpeechRecognizer {
    pub fixtures: BTreeMap<String, String>,
    pub config: ClientConfig,
    pub fault: Fault,
}

impl MockSpeechRecognizer {
    pub fn with_default_fixtures() -> Self {
        let fixtures = [
            ("smile", "the people are smiling and safe"),
            ("recover", "this person will recover"),
            ("rescue", "they are being rescued"),
            ("it_1", "le persone sono al sicuro"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            fixtures,
            config: ClientConfig::new("mock://asr", "RLAB_ASR_TOKEN"),
            fault: Fault::None,
        }
    }

    fn decode(&self, audio: &[u8]) -> Result<String, ClientError> {
        if audio.is_empty() {
            return Err(ClientError::Validation("empty audio".into()));
        }
        if audio.iter().all(|b| *b == 0) {
            return Ok(String::new());
        }
        let text = std::str::from_utf8(audio).map_err(|_| ClientError::Validation("unrecognized audio".into()))?;
        if let Some(tag) = text.strip_prefix(FIXTURE_PREFIX) {
            return self
                .fixtures
                .get(tag.trim())
                .cloned()
                .ok_or_else(|| ClientError::Validation(format!("unknown audio fixture {tag:?}")));
        }
        if let Some(inline) = text.strip_prefix(TEXT_PREFIX) {
            return Ok(inline.to_string());
        }
        Err(ClientError::Validation("unrecognized audio".into()))
    }
}

impl SpeechRecognizer for MockSpeechRecognizer {
    fn transcribe(&self, audio: &[u8], _hint: Language, clock: &dyn Clock) -> Result<String, ClientError> {
        call_with_retry("asr", &self.config, clock, |_| run_fault(self.fault, || self.decode(audio)))
    }
}

pub struct MockTranslator {
    pub fixtures: BTreeMap<String, String>,
    pub config: ClientConfig,
    pub fault: Fault,
}

impl MockTranslator {
    pub fn with_default_fixtures() -> Self {
        let fixtures = [
            ("fixture:it_1", "the people are safe"),
            ("le persone sono al sicuro", "the people are safe"),
            ("questa persona guarirà", "this person will recover"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            fixtures,
            config: ClientConfig::new("mock://translate", "RLAB_TRANSLATE_TOKEN"),
            fault: Fault::None,
        }
    }
}

impl Translator for MockTranslator {
    /// Fixture lookup; unknown text passes through unchanged.
    fn translate_foreign(&self, text: &str, _source: Language, clock: &dyn Clock) -> Result<String, ClientError> {
        call_with_retry("translate", &self.config, clock, |_| {
            run_fault(self.fault, || Ok(self.fixtures.get(text).cloned().unwrap_or_else(|| text.to_string())))
        })
    }
}

/// Hash-seeded unit vector per token; a text embeds as the normalized sum
/// of its token vectors.
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    cache: Mutex<HashMap<String, Arc<Vec<f64>>>>,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self {
            dim,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_vector(&self, token: &str) -> Arc<Vec<f64>> {
        if let Some(v) = self.cache.lock().expect("embedder cache").get(token) {
            return v.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = Arc::new(raw.into_iter().map(|x| x / norm).collect::<Vec<_>>());
        self.cache
            .lock()
            .expect("embedder cache")
            .insert(token.to_string(), v.clone());
        v
    }

    fn sum_tokens<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for t in tokens {
            for (a, v) in acc.iter_mut().zip(self.token_vector(t).iter()) {
                *a += v;
            }
        }
        acc
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ClientError> {
        if text.trim().is_empty() {
            return Err(ClientError::Validation("cannot embed empty text".into()));
        }
        let tokens = tokenize(text);
        EmbeddingVector::new(self.sum_tokens(tokens.iter().map(String::as_str)))
            .normalized()
            .ok_or_else(|| ClientError::Validation(format!("text {text:?} has no embeddable tokens")))
    }
}

impl TextEmbedder for MockEmbedder {
    fn embed(&self, text: &str, _clock: &dyn Clock) -> Result<EmbeddingVector, ClientError> {
        self.embed_text(text)
    }
}

/// Contents of a mock-generated image artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockImage {
    pub prompt: String,
    pub reference_text: String,
    pub image_scale: f64,
    pub text_guidance: f64,
    pub denoise_steps: u32,
    pub seed: u64,
    pub embedding: Vec<f64>,
}

pub struct MockImageGenerator {
    embedder: Arc<MockEmbedder>,
    artifacts: Arc<dyn ArtifactStore>,
    pub config: ClientConfig,
    pub noise_eps: f64,
    pub latency_ms: u64,
    pub fault: Fault,
}

impl MockImageGenerator {
    pub fn new(embedder: Arc<MockEmbedder>, artifacts: Arc<dyn ArtifactStore>, config: ClientConfig) -> Self {
        Self {
            embedder,
            artifacts,
            config,
            noise_eps: crate::conditioning::DEFAULT_NOISE_EPS,
            latency_ms: 0,
            fault: Fault::None,
        }
    }

    fn render(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError> {
        let reference_text = req.reference_image.reference_text().to_string();
        let reference = self.embedder.embed_text(&reference_text)?;
        // an empty prompt conditions on the image alone
        let prompt = if req.prompt.trim().is_empty() {
            EmbeddingVector::zeros(self.embedder.dim())
        } else {
            self.embedder.embed_text(&req.prompt).unwrap_or_else(|_| EmbeddingVector::zeros(self.embedder.dim()))
        };
        let out = mock_generate(&prompt, &reference, req.image_scale, req.seed, self.noise_eps)
            .map_err(|e| ClientError::Validation(e.to_string()))?;
        let payload = MockImage {
            prompt: req.prompt.clone(),
            reference_text,
            image_scale: req.image_scale,
            text_guidance: req.text_guidance,
            denoise_steps: req.denoise_steps,
            seed: req.seed,
            embedding: out.values.clone(),
        };
        let bytes = serde_json::to_vec(&payload).expect("mock image serializes");
        let image_ref = self.artifacts.put(&bytes).map_err(|e| ClientError::Storage(e.to_string()))?;
        Ok(GenerationResult {
            image_ref,
            output_embedding: out,
            latency_ms: self.latency_ms,
            backend: Backend::Mock,
        })
    }
}

impl ImageGenerator for MockImageGenerator {
    fn generate(&self, req: &GenerationRequest, clock: &dyn Clock) -> Result<GenerationResult, ClientError> {
        req.validate().map_err(|e| ClientError::Validation(e.to_string()))?;
        call_with_retry("generate", &self.config, clock, |deadline| {
            if self.fault == Fault::None && clock.now_ms() + self.latency_ms > deadline {
                return Err(AttemptError::Stalled);
            }
            let r = run_fault(self.fault, || self.render(req))?;
            clock.sleep_ms(self.latency_ms);
            Ok(r)
        })
    }
}

pub fn load_mock_image(artifacts: &dyn ArtifactStore, image: &ArtifactRef) -> Result<MockImage, ClientError> {
    let bytes = artifacts
        .get(&image.id)
        .map_err(|e| ClientError::Storage(e.to_string()))?
        .ok_or_else(|| ClientError::Storage(format!("artifact {} not found", image.id)))?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Protocol(format!("artifact {}: {e}", image.id)))
}

/// Describes a mock image by greedily choosing words (from its prompt and
/// reference scene) whose summed embedding best matches the image embedding.
pub struct MockCaptioner {
    embedder: Arc<MockEmbedder>,
    artifacts: Arc<dyn ArtifactStore>,
    pub max_tokens: usize,
    /// Prompts containing any of these words are refused.
    pub refuse_words: Vec<String>,
    /// Captions by artifact id, consulted before decoding.
    pub fixtures: BTreeMap<String, String>,
    pub config: ClientConfig,
    pub fault: Fault,
}

impl MockCaptioner {
    pub fn primary(embedder: Arc<MockEmbedder>, artifacts: Arc<dyn ArtifactStore>) -> Self {
        Self {
            embedder,
            artifacts,
            max_tokens: 12,
            refuse_words: vec!["blood".into(), "weapon".into(), "corpse".into()],
            fixtures: BTreeMap::new(),
            config: ClientConfig::new("mock://caption", "RLAB_CAPTION_TOKEN"),
            fault: Fault::None,
        }
    }

    pub fn fallback(embedder: Arc<MockEmbedder>, artifacts: Arc<dyn ArtifactStore>) -> Self {
        Self {
            max_tokens: 6,
            refuse_words: Vec::new(),
            config: ClientConfig::new("mock://caption-fallback", "RLAB_CAPTION_FALLBACK_TOKEN"),
            ..Self::primary(embedder, artifacts)
        }
    }

    pub fn describe(&self, image: &ArtifactRef) -> Result<String, ClientError> {
        if let Some(text) = self.fixtures.get(&image.id) {
            return Ok(text.clone());
        }
        let img = load_mock_image(self.artifacts.as_ref(), image)?;
        let prompt_tokens = tokenize(&img.prompt);
        if prompt_tokens.iter().any(|t| self.refuse_words.contains(t)) {
            return Err(ClientError::Refused("content filter".into()));
        }
        let mut vocab: Vec<String> = Vec::new();
        for t in prompt_tokens.into_iter().chain(tokenize(&img.reference_text)) {
            if !vocab.contains(&t) {
                vocab.push(t);
            }
        }
        let target = EmbeddingVector::new(img.embedding)
            .normalized()
            .ok_or_else(|| ClientError::Protocol("zero image embedding".into()))?;

        let cosine = |v: &[f64]| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                f64::NEG_INFINITY
            } else {
                v.iter().zip(&target.values).map(|(a, b)| a * b).sum::<f64>() / n
            }
        };
        let mut chosen = vec![false; vocab.len()];
        let mut acc = vec![0.0; self.embedder.dim()];
        let mut best = f64::NEG_INFINITY;
        for _ in 0..self.max_tokens.min(vocab.len()) {
            let mut pick: Option<(usize, f64)> = None;
            for (i, tok) in vocab.iter().enumerate() {
                if chosen[i] {
                    continue;
                }
                let v = self.embedder.token_vector(tok);
                let cand: Vec<f64> = acc.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
                let c = cosine(&cand);
                if pick.is_none_or(|(_, pc)| c > pc) {
                    pick = Some((i, c));
                }
            }
            match pick {
                Some((i, c)) if c > best => {
                    chosen[i] = true;
                    best = c;
                    for (a, v) in acc.iter_mut().zip(self.embedder.token_vector(&vocab[i]).iter()) {
                        *a += v;
                    }
                }
                _ => break,
            }
        }
        let words: Vec<&str> = vocab
            .iter()
            .zip(&chosen)
            .filter(|(_, c)| **c)
            .map(|(w, _)| w.as_str())
            .collect();
        Ok(words.join(" "))
    }
}

impl Captioner for MockCaptioner {
    fn caption(&self, image: &ArtifactRef, _instruction: &str, clock: &dyn Clock) -> Result<String, ClientError> {
        call_with_retry("caption", &self.config, clock, |_| run_fault(self.fault, || self.describe(image)))
    }
}

const POSITIVE_WORDS: &[&str] = &[
    "safe", "smiling", "smile", "smiles", "happy", "recover", "recovers", "recovering", "recovered", "rescued", "rescue",
    "help", "helping", "helped", "hope", "hopeful", "love", "loved", "calm", "peaceful", "joy", "healthy", "fine",
    "better", "beautiful", "warm", "friends", "together", "celebrate", "celebrating", "laughing", "heal", "healing",
    "healed", "bright", "relief", "good", "kind", "care", "cared", "gentle", "playful", "free", "strong", "survive",
    "survived", "grateful", "comfort", "comforted", "enjoying",
];

const NEGATIVE_WORDS: &[&str] = &[
    "hurt", "injured", "sad", "crying", "blood", "dead", "death", "dying", "pain", "afraid", "fear", "danger",
    "angry", "sick", "broken", "dirty", "alone", "lost", "attack", "violent", "scared", "wound", "wounded", "accident",
    "fire", "war", "poor", "hungry", "victim", "bad", "terrible", "ugly", "destroyed", "suffering", "lying", "mess",
];

/// Lexicon-based three-way sentiment with additive smoothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSentiment;

impl MockSentiment {
    pub fn probabilities(text: &str) -> SentimentProbabilities {
        let tokens = tokenize(text);
        let pos = tokens.iter().filter(|t| POSITIVE_WORDS.contains(&t.as_str())).count() as f64;
        let neg = tokens.iter().filter(|t| NEGATIVE_WORDS.contains(&t.as_str())).count() as f64;
        let (wp, wn, wu) = (0.2 + pos, 0.2 + neg, 1.0);
        let total = wp + wn + wu;
        SentimentProbabilities {
            p_negative: wn / total,
            p_neutral: wu / total,
            p_positive: wp / total,
        }
    }
}

impl SentimentClassifier for MockSentiment {
    fn classify(&self, text: &str, _clock: &dyn Clock) -> Result<SentimentProbabilities, ClientError> {
        Ok(Self::probabilities(text))
    }
}
