//! Clusters a trajectory corpus into an anchor dictionary and reports how well
//! the anchors cover the logged human trajectories.
//!
//! cargo run --example build_anchors -- [anchors] [scenes]

use planscore::anchors::{build_dictionary, nearest_anchor};
use planscore::scene::{Horizon, Trajectory};
use planscore::synth::generate_scenario;

fn main() -> planscore::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let k = args.next().flatten().unwrap_or(16);
    let count = args.next().flatten().unwrap_or(60);
    let horizon = Horizon::default();
    let scenes: Vec<_> = (0..count)
        .map(|i| generate_scenario(7, i, &horizon))
        .collect::<Result<_, _>>()?;
    let corpus: Vec<Trajectory> = scenes.iter().map(|s| s.scene_to_ego(&s.human_trajectory)).collect();
    let dict = build_dictionary(&corpus, k, 0)?;

    let mut usage = vec![0usize; dict.len()];
    let mut total_err = 0.0;
    for t in &corpus {
        let a = nearest_anchor(&dict, t);
        usage[a] += 1;
        let err: f64 = t
            .poses()
            .iter()
            .zip(dict.anchors()[a].poses())
            .map(|(p, q)| p.position().distance(q.position()))
            .sum::<f64>()
            / t.len() as f64;
        total_err += err;
    }
    println!("{} anchors from {} trajectories", dict.len(), corpus.len());
    println!(
        "mean position error to nearest anchor: {:.3} m",
        total_err / corpus.len() as f64
    );
    for (i, a) in dict.anchors().iter().enumerate() {
        let end = a.poses().last().unwrap();
        println!(
            "anchor {i:>2}: end ({:>6.2}, {:>6.2}) yaw {:>5.2}  members {}",
            end.x, end.y, end.yaw, usage[i]
        );
    }
    Ok(())
}
