//! Sends an image-to-image generation request to a local stub service that
//! fails once with 503 and then answers, showing the request body, the
//! bearer header and the retry contract.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use rlab::clients::remote::{RemoteImageGenerator, RemoteService};
use rlab::clients::{ClientConfig, ImageGenerator};
use rlab::clock::MonotonicClock;
use rlab::domain::{Emotion, GenerationRequest, Stimulus};
use rlab::storage::MemoryArtifactStore;

fn stub(listener: TcpListener) {
    for (k, stream) in listener.incoming().take(2).enumerate() {
        let mut stream = stream.unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            let lower = line.to_ascii_lowercase();
            if let Some(v) = lower.strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            if lower.starts_with("authorization:") || line.starts_with("POST") {
                print!("  stub got: {line}");
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        if k == 0 {
            stream.write_all(b"HTTP/1.1 503 Service Unavailable\r\ncontent-length: 0\r\n\r\n").unwrap();
            println!("  stub: answered 503");
            continue;
        }
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        println!("  stub body fields: prompt={} image_scale={} text_guidance={} denoise_steps={} seed={}",
            v["prompt"], v["image_scale"], v["text_guidance"], v["denoise_steps"], v["seed"]);
        let reply = r#"{"image_b64":"iVBORw0KGgo=","embedding":[0.6,0.8,0.0]}"#;
        write!(stream, "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{reply}", reply.len())
            .unwrap();
    }
}

fn main() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || stub(listener));

    let dir = std::env::temp_dir().join("rlab-remote-example");
    std::fs::create_dir_all(&dir).unwrap();
    let image = dir.join("reference.jpg");
    std::fs::write(&image, b"\xff\xd8reference").unwrap();

    std::env::set_var("RLAB_EXAMPLE_TOKEN", "example-token");
    let config = ClientConfig {
        retries: 2,
        backoff_base_ms: 50,
        ..ClientConfig::new(url, "RLAB_EXAMPLE_TOKEN")
    };
    let generator = RemoteImageGenerator {
        service: RemoteService::new("generate", config).unwrap(),
        artifacts: Arc::new(MemoryArtifactStore::new()),
    };
    let stimulus = Stimulus {
        stimulus_id: "neg_001".into(),
        valence_class: Emotion::Negative,
        image_path: image,
        image_scale_override: None,
        description: None,
    };
    let req = GenerationRequest::new("the firefighters save everyone", stimulus, 0.5, 1234);
    let result = generator.generate(&req, &MonotonicClock::new()).unwrap();
    server.join().unwrap();
    println!("artifact {} ({} ms), embedding {:?}", result.image_ref.id, result.latency_ms, result.output_embedding.values);
}
