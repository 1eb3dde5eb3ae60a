//! Sentiment polarity, readability and prompt-caption alignment for a few
//! spoken reappraisals, using the deterministic mock services.

use std::sync::Arc;

use rlab::analysis::{cosine_alignment, flesch_reading_ease};
use rlab::clients::{ClientSet, MockSettings, CAPTION_INSTRUCTION};
use rlab::clock::VirtualClock;
use rlab::domain::{Emotion, GenerationRequest, Stimulus};
use rlab::storage::MemoryArtifactStore;

fn main() {
    let clients = ClientSet::mock(&MockSettings::default(), Arc::new(MemoryArtifactStore::new()));
    let clock = VirtualClock::new();
    let stimulus = Stimulus {
        stimulus_id: "neg_007".into(),
        valence_class: Emotion::Negative,
        image_path: "neg_007.jpg".into(),
        image_scale_override: None,
        description: Some("a man lying injured on the street".into()),
    };

    for prompt in [
        "he will recover and his family is there to help",
        "a man is lying injured on the street",
        "there is blood everywhere and it is awful",
    ] {
        let p = clients.sentiment.classify(prompt, &clock).unwrap();
        let score = rlab::analysis::sentiment_score(&p).unwrap();
        let ease = flesch_reading_ease(prompt).unwrap();
        let gen = clients
            .generator
            .generate(&GenerationRequest::new(prompt, stimulus.clone(), 0.5, 9), &clock)
            .unwrap();
        let caption = clients.captions.caption(&gen.image_ref, CAPTION_INSTRUCTION, &clock).unwrap();
        let a = clients.embedder.embed(prompt, &clock).unwrap();
        let b = clients.embedder.embed(&caption.text, &clock).unwrap();
        println!("prompt:    {prompt}");
        println!("  sentiment {score:+.3}  reading ease {ease:.1}");
        println!("  caption ({:?}): {}", caption.source, caption.text);
        println!("  alignment {:.4}\n", cosine_alignment(&a, &b).unwrap());
    }
}
