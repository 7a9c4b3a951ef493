//! Fits the refinement decoder on a handful of scenes, then shows how each
//! layer moves the winning anchor towards the logged trajectory of a scene the
//! decoder has not seen.
//!
//! cargo run --release --example refine_candidates -- [epochs]

use planscore::anchors::{build_dictionary, nearest_anchor};
use planscore::bev::{render_bev, BevConfig};
use planscore::decoder::{generate_candidates, l1_loss, train_decoder, DecoderConfig, DecoderModel, TrainOptions};
use planscore::scene::{Horizon, Trajectory};
use planscore::synth::generate_scenario;

fn main() -> planscore::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let horizon = Horizon::default();
    let train: Vec<_> = (0..36)
        .map(|i| generate_scenario(11, i, &horizon))
        .collect::<Result<_, _>>()?;
    let corpus: Vec<Trajectory> = train.iter().map(|s| s.scene_to_ego(&s.human_trajectory)).collect();
    let dict = build_dictionary(&corpus, 12, 0)?;
    let bev = BevConfig {
        size: 64,
        ..BevConfig::default()
    };

    let mut model = DecoderModel::new(DecoderConfig::default(), horizon.steps, bev.channels, 0)?;
    let opts = TrainOptions {
        epochs,
        lr: 0.02,
        ..TrainOptions::default()
    };
    let hist = train_decoder(&mut model, &train, &dict, &bev, &opts)?;
    for (e, l) in hist.epoch_losses.iter().enumerate() {
        println!("epoch {e:>2}: winner L1 {l:.4}");
    }

    println!("\nper-layer L1 of the winning candidate on held-out scenes:");
    for i in 0..6 {
        let s = generate_scenario(12, i, &horizon)?;
        let human = s.scene_to_ego(&s.human_trajectory);
        let win = nearest_anchor(&dict, &human);
        let set = generate_candidates(&model, &dict, &render_bev(&s, &bev))?;
        let per_layer: Vec<String> = set.intermediates[win]
            .iter()
            .map(|h| format!("{:.3}", l1_loss(h, &human).0))
            .collect();
        println!("{} anchor {win:>2}: {}", s.id, per_layer.join(" -> "));
    }
    Ok(())
}
