//! Start the deterministic mock API with a handful of planted behaviors and
//! probe each of them through the client.

use glitchscan::client::{ClientConfig, LlmClient};
use glitchscan::metrics::compute_metrics;
use glitchscan::mock::{AnomalyProfile, Behavior, MockServer};
use glitchscan::RetryPolicy;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let profile = AnomalyProfile {
        seed: 42,
        ..Default::default()
    }
    .with_override("atrigesimal", Behavior::MajorAnomalous { flat_k: 5 })
    .with_override("decltype", Behavior::MinorAnomalous { off_target_rate: 0.4, variants: vec![] })
    .with_override("ForCanBeConverted", Behavior::NoResult)
    .with_override("PostalCodesNL", Behavior::Error400 { rate: 1.0 })
    .with_override(" Nitrome", Behavior::Unspeakable);

    let server = MockServer::start_local(profile).await?;
    println!("serving {}", server.endpoint());

    let mut cfg = ClientConfig::new(server.endpoint());
    cfg.retry = RetryPolicy::fast(3);
    let client = LlmClient::new(cfg)?;

    for token in ["hello", "atrigesimal", "decltype", "ForCanBeConverted", "PostalCodesNL", " Nitrome"] {
        let probe = client.repeat_probe(token, 0.0).await?;
        let metrics = compute_metrics(&probe.distribution).ok();
        println!("{token:?}: {:?} {:?} {metrics:?}", probe.finish_status, probe.completion_text);
        let samples: Vec<String> = {
            let mut v = Vec::new();
            for _ in 0..5 {
                v.push(client.confirm_probe(token).await?.text);
            }
            v
        };
        println!("    t=1.0 samples: {samples:?}");
    }

    let server_side = server.shutdown().await;
    println!("server ledger {server_side:?}");
    println!("client ledger {:?}", client.ledger().snapshot());
    Ok(())
}
