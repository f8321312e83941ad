//! Ask the mock to EXPLAIN a few tokens and judge the replies.

use glitchscan::client::{ClientConfig, LlmClient};
use glitchscan::mock::{AnomalyProfile, Behavior, MockServer};
use glitchscan::RetryPolicy;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let profile = AnomalyProfile::default()
        .with_override("atrigesimal", Behavior::MajorAnomalous { flat_k: 5 })
        .with_override("ForCanBeConverted", Behavior::SchemaViolating);
    let server = MockServer::start_local(profile).await?;
    let mut cfg = ClientConfig::new(server.endpoint());
    cfg.retry = RetryPolicy::fast(3);
    let client = LlmClient::new(cfg)?;

    for token in ["hello", "atrigesimal", "ForCanBeConverted"] {
        println!("{token:?}");
        for _ in 0..4 {
            let o = client.explain_probe(token, 1.0).await?;
            println!(
                "  json={:<5} echo={:<5} text={:?}",
                o.json_wellformed, o.echo_match, o.explained_text
            );
        }
    }
    Ok(())
}
