//! Trains the decoder and scorer end to end on generated scenes, then plans on
//! held-out scenes and compares the scorer's pick with a uniform pick and with
//! the best candidate the oracle could have chosen.
//!
//! cargo run --release --example train_and_plan -- [train scenes] [held scenes]

use planscore::anchors::build_dictionary;
use planscore::config::Config;
use planscore::epdms::evaluate;
use planscore::pipeline::{train_models, Planner};
use planscore::scene::Trajectory;
use planscore::synth::generate_scenario;

fn main() -> planscore::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let n_train = args.next().flatten().unwrap_or(60);
    let n_held = args.next().flatten().unwrap_or(24);
    let mut cfg = Config::default();
    cfg.anchors.count = 12;
    cfg.train.epochs = 6;
    cfg.bev.size = 64;

    let train: Vec<_> = (0..n_train)
        .map(|i| generate_scenario(1, i, &cfg.horizon))
        .collect::<Result<_, _>>()?;
    let corpus: Vec<Trajectory> = train.iter().map(|s| s.scene_to_ego(&s.human_trajectory)).collect();
    let dict = build_dictionary(&corpus, cfg.anchors.count, cfg.anchors.seed)?;
    let (decoder, scorer, report, _) = train_models(&cfg, &train, &dict)?;
    println!(
        "trained on {} scenes ({} scheduled, {} hard); scorer loss {:.4} -> {:.4}",
        report.scenarios,
        report.schedule_len,
        report.hard_cases,
        report.scorer.epoch_losses.first().copied().unwrap_or(f64::NAN),
        report.scorer.epoch_losses.last().copied().unwrap_or(f64::NAN),
    );

    let scored = Planner::new(cfg, dict.clone(), decoder.clone(), scorer.clone())?;
    let mut uniform_cfg = cfg;
    uniform_cfg.evaluate.use_scorer = false;
    uniform_cfg.evaluate.use_postproc = false;
    let uniform = Planner::new(uniform_cfg, dict, decoder, scorer)?;

    let (mut sum_scored, mut sum_uniform, mut sum_best) = (0.0, 0.0, 0.0);
    println!(
        "\n{:<12} {:>6} {:>7} {:>7} {:>7}",
        "id", "pick", "scored", "uniform", "oracle"
    );
    for i in 0..n_held {
        let s = generate_scenario(2, i, &cfg.horizon)?;
        let plan = scored.plan(&s)?;
        let oracle: Vec<f64> = plan
            .candidates
            .trajectories
            .iter()
            .map(|t| evaluate(&s, t, &cfg.metrics).map(|r| r.epdms))
            .collect::<Result<_, _>>()?;
        let u = uniform.plan(&s)?.chosen;
        let best = oracle.iter().cloned().fold(0.0, f64::max);
        println!(
            "{:<12} {:>6} {:>7.3} {:>7.3} {:>7.3}{}",
            s.id,
            plan.chosen,
            oracle[plan.chosen],
            oracle[u],
            best,
            if plan.fallback { "  (fallback)" } else { "" }
        );
        sum_scored += oracle[plan.chosen];
        sum_uniform += oracle[u];
        sum_best += best;
    }
    let n = n_held as f64;
    println!(
        "\nmean EPDMS: scored {:.3}, uniform {:.3}, oracle best {:.3}",
        sum_scored / n,
        sum_uniform / n,
        sum_best / n
    );
    Ok(())
}
