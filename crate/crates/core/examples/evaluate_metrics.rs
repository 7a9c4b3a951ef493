//! Scores the logged human trajectory of a few generated scenes with the
//! rule-based metric and prints every sub-metric.
//!
//! cargo run --example evaluate_metrics -- [count]

use planscore::epdms::{evaluate, MetricConfig, SubMetrics};
use planscore::mining::{detect_hard_case, MiningConfig};
use planscore::scene::Horizon;
use planscore::synth::generate_scenario;

fn main() -> planscore::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12);
    let horizon = Horizon::default();
    let cfg = MetricConfig::default();
    println!(
        "{:<12} {:<18} {}  EPDMS  hard",
        "id",
        "template",
        SubMetrics::NAMES.join("   ")
    );
    for i in 0..count {
        let s = generate_scenario(42, i, &horizon)?;
        let human = s.scene_to_ego(&s.human_trajectory);
        let r = evaluate(&s, &human, &cfg)?;
        let kind = s.tags.iter().next().cloned().unwrap_or_default();
        let subs: Vec<String> = r.agent.as_array().iter().map(|v| format!("{v:.2}")).collect();
        let hard = detect_hard_case(&s, &MiningConfig::default());
        let tags: Vec<&str> = hard.tags.iter().map(|t| t.as_str()).collect();
        println!(
            "{:<12} {:<18} {}  {:.3}  {}",
            s.id,
            kind,
            subs.join(" "),
            r.epdms,
            tags.join(",")
        );
    }
    Ok(())
}
