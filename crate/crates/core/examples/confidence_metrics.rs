//! Confidence metrics of a few first-token distributions and whether the
//! default thresholds flag them.

use glitchscan::metrics::{compute_metrics, is_candidate, PredictionDistribution, TopLogprob};
use glitchscan::ThresholdConfig;

fn main() -> anyhow::Result<()> {
    let thresholds = ThresholdConfig::default();
    let cases: [(&str, Vec<f64>); 4] = [
        ("confident echo", vec![0.99, 0.004, 0.003, 0.002, 0.001]),
        ("case variants", vec![0.48, 0.46, 0.03, 0.02, 0.01]),
        ("flat", vec![0.2, 0.2, 0.2, 0.2, 0.2]),
        ("heavy tail", vec![0.7, 0.05, 0.03, 0.01, 0.01]),
    ];
    println!("{:<16} {:>8} {:>8} {:>8} {:>8}  flagged", "case", "entropy", "tail", "margin", "top");
    for (name, probs) in cases {
        let dist = PredictionDistribution::from_probs(&probs)?;
        let m = compute_metrics(&dist)?;
        println!(
            "{name:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  {}",
            m.entropy,
            m.tail_prob,
            m.margin,
            m.top_prob,
            is_candidate(&m, &thresholds)
        );
    }

    // Distributions usually arrive as API logprobs.
    let dist = PredictionDistribution::new(vec![TopLogprob::new("project", -0.02), TopLogprob::new(" project", -4.1)])?;
    println!("from logprobs: {:?}", compute_metrics(&dist)?);
    Ok(())
}
