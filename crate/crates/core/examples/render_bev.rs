//! Renders the feature grid of one generated scene, writes every channel as a
//! PGM image, and samples the grid along the logged human trajectory.
//!
//! cargo run --example render_bev -- [scene index] [output dir]

use std::path::PathBuf;

use planscore::bev::{grid_mask, render_bev, sample_bev, BevConfig, GridMaskConfig};
use planscore::scene::Horizon;
use planscore::synth::generate_scenario;

const NAMES: [&str; 8] = [
    "drivable",
    "boundary_distance",
    "centerline_distance",
    "lane_cos",
    "lane_sin",
    "occupancy_now",
    "occupancy_future",
    "red_stop_line",
];

fn main() -> planscore::Result<()> {
    let mut args = std::env::args().skip(1);
    let index: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "bev_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| planscore::Error::io(&out, e))?;

    let s = generate_scenario(42, index, &Horizon::default())?;
    let cfg = BevConfig::default();
    let grid = render_bev(&s, &cfg);
    for (c, name) in NAMES.iter().enumerate() {
        let path = out.join(format!("{}_{c}_{name}.pgm", s.id));
        grid.write_pgm(c, &path)?;
        let ch = grid.channel(c);
        let lo = ch.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{:<22} [{lo:>7.3}, {hi:>7.3}]  {}", name, path.display());
    }
    let masked = grid_mask(&grid, 1.0, 3, &GridMaskConfig::default());
    masked.write_pgm(0, &out.join(format!("{}_masked_drivable.pgm", s.id)))?;

    println!("\nfeatures along the human trajectory ({}):", s.id);
    let human = s.scene_to_ego(&s.human_trajectory);
    for (p, f) in human.poses().iter().zip(sample_bev(&grid, &human)) {
        let row: Vec<String> = f.iter().map(|v| format!("{v:>6.2}")).collect();
        println!("({:>6.2}, {:>6.2}) {}", p.x, p.y, row.join(" "));
    }
    Ok(())
}
