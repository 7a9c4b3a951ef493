//! Tags hard scenes by curvature, lane departure and scene tags, then builds
//! the upsampled training schedule.
//!
//! cargo run --example mine_hard_cases -- [scenes]

use planscore::mining::{detect_hard_case, upsample, MiningConfig};
use planscore::scene::Horizon;
use planscore::synth::generate_scenario;

fn main() -> planscore::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(18);
    let horizon = Horizon::default();
    let cfg = MiningConfig::default();
    let scenes: Vec<_> = (0..count)
        .map(|i| generate_scenario(9, i, &horizon))
        .collect::<Result<_, _>>()?;
    let reports: Vec<_> = scenes.iter().map(|s| detect_hard_case(s, &cfg)).collect();
    println!("{:<12} {:>9} {:>9}  tags", "id", "curv 1/m", "offset m");
    for r in &reports {
        let tags: Vec<&str> = r.tags.iter().map(|t| t.as_str()).collect();
        println!(
            "{:<12} {:>9.4} {:>9.2}  {}",
            r.id,
            r.max_curvature,
            r.max_lateral_offset,
            tags.join(",")
        );
    }
    let ids: Vec<String> = scenes.iter().map(|s| s.id.clone()).collect();
    let schedule = upsample(&ids, &reports, cfg.multiplicity)?;
    println!(
        "\n{} scenes, {} hard, schedule of {} (multiplicity {})",
        ids.len(),
        reports.iter().filter(|r| r.is_hard()).count(),
        schedule.len(),
        cfg.multiplicity
    );
    Ok(())
}
