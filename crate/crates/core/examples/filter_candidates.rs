//! Runs the image-space and kinematic filter over the raw anchors of a few
//! scenes and prints which rule discards each candidate.
//!
//! cargo run --example filter_candidates -- [scenes]

use planscore::anchors::{build_dictionary, synthetic_corpus};
use planscore::decoder::CandidateSet;
use planscore::postproc::{distance_envelope, filter_candidates, PostprocConfig};
use planscore::scene::Horizon;
use planscore::scorer::ScorePrediction;
use planscore::synth::generate_scenario;

fn main() -> planscore::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let horizon = Horizon::default();
    let cfg = PostprocConfig::default();
    let dict = build_dictionary(&synthetic_corpus(&horizon), 16, 0)?;
    let candidates = CandidateSet {
        trajectories: dict.anchors().to_vec(),
        intermediates: dict.anchors().iter().map(|a| vec![a.clone()]).collect(),
    };
    // Descending scores, so without the filter candidate 0 would win.
    let predictions: Vec<ScorePrediction> = (0..candidates.len())
        .map(|i| {
            let v = 1.0 - i as f64 / candidates.len() as f64;
            ScorePrediction {
                epdms: v,
                nc: v,
                dac: v,
                comfort: v,
            }
        })
        .collect();

    for i in 0..count {
        let s = generate_scenario(5, i, &horizon)?;
        let env = distance_envelope(&s.ego, horizon.duration(), cfg.a_min, cfg.a_max);
        let out = filter_candidates(&candidates, &predictions, &s, horizon.duration(), &cfg)?;
        println!(
            "{}: speed {:.1} m/s, envelope [{:.1}, {:.1}] m, {} obstacles, {} lane lines",
            s.id,
            s.ego.speed,
            env.d_min,
            env.d_max,
            s.detections2d.obstacles.len(),
            s.detections2d.lane_lines.len()
        );
        for d in out.decisions.iter().filter(|d| !d.reasons.is_empty()) {
            println!("  drop {:>2} (arc {:>5.1} m): {:?}", d.index, d.arc_length, d.reasons);
        }
        println!(
            "  {} of {} survive; chose {}{}",
            out.survivors.len(),
            candidates.len(),
            out.chosen,
            if out.fallback {
                " (fallback to unfiltered best)"
            } else {
                ""
            }
        );
    }
    Ok(())
}
