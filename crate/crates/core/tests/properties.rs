//! Property tests for the invariants of every module, each checked against an
//! independent oracle or an algebraic identity.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use planscore::anchors::{build_dictionary, synthetic_corpus, travel_distance};
use planscore::bev::{channel, render_bev, BevConfig, BevGrid};
use planscore::decoder::{generate_candidates, train_decoder, DecoderConfig, DecoderModel, TrainOptions};
use planscore::epdms::{aggregate_epdms, eval_submetrics, MetricConfig, MetricWeights, SubMetrics};
use planscore::geometry::{ego_footprint, obb_intersects, polygon_signed_area, Point2, Pose2};
use planscore::mining::{detect_hard_case, upsample, HardCaseReport, HardCaseTag, MiningConfig};
use planscore::nn::{attention, positional_encoding, sgd_step, ParamStore, Tensor};
use planscore::postproc::{distance_envelope, filter_with_envelope, DistanceEnvelope, PostprocConfig};
use planscore::scene::{Agent, CameraModel, Detections2D, EgoState, Horizon, Scenario};
use planscore::scorer::{score_batch, score_trajectory, select_trajectory, ScorePrediction, ScorerConfig, ScorerModel};
use planscore::synth::generate_scenario;

fn pose() -> impl Strategy<Value = Pose2> {
    (-20.0..20.0f64, -20.0..20.0f64, -3.2..3.2f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
}

fn scene(seed: u64, index: usize) -> Scenario {
    generate_scenario(seed, index, &Horizon::default()).unwrap()
}

fn ego(speed: f64) -> EgoState {
    EgoState {
        pose: Pose2::identity(),
        speed,
        accel: 0.0,
        width: 2.0,
        length: 4.5,
    }
}

// ------------------------------------------------------------------ geometry

proptest! {
    #[test]
    fn obb_symmetric_and_matches_oracles(
        a in pose(), b in pose(),
        wa in 0.5..5.0f64, la in 0.5..8.0f64, wb in 0.5..5.0f64, lb in 0.5..8.0f64,
    ) {
        let ra = ego_footprint(&a, wa, la);
        let rb = ego_footprint(&b, wb, lb);
        let hit = obb_intersects(&ra, &rb);
        prop_assert_eq!(hit, obb_intersects(&rb, &ra));
        let ca = common::corners(a.position(), a.yaw, wa, la);
        let cb = common::corners(b.position(), b.yaw, wb, lb);
        prop_assert_eq!(hit, common::convex_overlap(&ca, &cb));
        // Sampling can only under-report overlap.
        if common::monte_carlo_overlap(&ca, &cb, 40) {
            prop_assert!(hit);
        }
    }

    #[test]
    fn obb_rigid_equivariance(a in pose(), b in pose(), rigid in pose(), w in 0.5..4.0f64, l in 0.5..6.0f64) {
        let ra = ego_footprint(&a, w, l);
        let rb = ego_footprint(&b, w, l);
        let ta = ego_footprint(&rigid.compose(&a), w, l);
        let tb = ego_footprint(&rigid.compose(&b), w, l);
        // Skip configurations within rounding distance of touching.
        let gap = {
            let grown_a = ego_footprint(&a, w + 1e-6, l + 1e-6);
            let grown_b = ego_footprint(&b, w + 1e-6, l + 1e-6);
            obb_intersects(&grown_a, &grown_b) != obb_intersects(&ra, &rb)
        };
        prop_assume!(!gap);
        prop_assert_eq!(obb_intersects(&ra, &rb), obb_intersects(&ta, &tb));
    }

    #[test]
    fn footprint_is_ccw_with_exact_area(p in pose(), w in 0.1..5.0f64, l in 0.1..10.0f64) {
        let r = ego_footprint(&p, w, l);
        let area = polygon_signed_area(&r.corners);
        prop_assert!(area > 0.0);
        prop_assert!((area - w * l).abs() <= 1e-9 * (1.0 + w * l));
        let c = r.center();
        prop_assert!((c.x - p.x).abs() < 1e-9 && (c.y - p.y).abs() < 1e-9);
    }
}

// ----------------------------------------------------------------------- BEV

fn random_grid(seed: u64, channels: usize, size: usize, extent: f64) -> BevGrid {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = BevGrid::zeros(channels, size, extent);
    for v in g.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    g
}

/// Tent-weight interpolation over every cell, with the sample position
/// clamped to the span of cell centers.
fn bilinear_oracle(g: &BevGrid, p: Point2) -> Vec<f64> {
    let half = 0.5 * g.extent();
    if p.x.abs() > half || p.y.abs() > half {
        return vec![0.0; g.channels()];
    }
    let res = g.resolution();
    let first = -half + 0.5 * res;
    let last = half - 0.5 * res;
    let (x, y) = (p.x.clamp(first, last), p.y.clamp(first, last));
    let mut out = vec![0.0; g.channels()];
    for i in 0..g.size() {
        for j in 0..g.size() {
            let c = g.cell_center(i, j);
            let w = (1.0 - (x - c.x).abs() / res).max(0.0) * (1.0 - (y - c.y).abs() / res).max(0.0);
            if w > 0.0 {
                for (ch, o) in out.iter_mut().enumerate() {
                    *o += w * g.get(ch, i, j);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sample_is_linear_in_the_grid(
        s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64,
        x in -12.0..12.0f64, y in -12.0..12.0f64,
    ) {
        let g1 = random_grid(s1, 3, 12, 20.0);
        let g2 = random_grid(s2, 3, 12, 20.0);
        let mut mix = g1.clone();
        for ((m, u), v) in mix.data_mut().iter_mut().zip(g1.data()).zip(g2.data()) {
            *m = a * u + b * v;
        }
        let p = Point2::new(x, y);
        let (f1, f2, fm) = (g1.sample(p), g2.sample(p), mix.sample(p));
        for c in 0..3 {
            prop_assert!((fm[c] - (a * f1[c] + b * f2[c])).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_matches_bilinear_oracle(seed in any::<u64>(), x in -11.0..11.0f64, y in -11.0..11.0f64) {
        let g = random_grid(seed, 2, 9, 20.0);
        let p = Point2::new(x, y);
        let got = g.sample(p);
        let want = bilinear_oracle(&g, p);
        for c in 0..2 {
            prop_assert!((got[c] - want[c]).abs() < 1e-12, "{} vs {}", got[c], want[c]);
        }
        if x.abs() > 10.0 || y.abs() > 10.0 {
            prop_assert!(got.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn occupancy_matches_rasterization_oracle(
        seed in 0u64..1000, x in -25.0..25.0f64, y in -25.0..25.0f64, yaw in -3.2..3.2f64,
        w in 1.0..3.0f64, l in 2.0..8.0f64,
    ) {
        let mut s = scene(seed, 0);
        let local = Pose2::new(x, y, yaw);
        let world = s.ego.pose.compose(&local);
        s.agents = vec![Agent {
            id: "a".into(),
            width: w,
            length: l,
            track: vec![world; 9],
            is_stationary: true,
        }];
        let cfg = BevConfig { size: 48, ..Default::default() };
        let g = render_bev(&s, &cfg);
        let rect = common::corners(local.position(), yaw, w, l);
        for i in 0..cfg.size {
            for j in 0..cfg.size {
                let inside = common::inside_polygon(g.cell_center(i, j), &rect);
                prop_assert_eq!(g.get(channel::OCCUPANCY_NOW, i, j) == 1.0, inside);
                prop_assert_eq!(g.get(channel::OCCUPANCY_FUTURE, i, j) == 1.0, inside);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn render_ignores_agent_order(seed in 0u64..1000, index in 0usize..12) {
        let s = scene(seed, index);
        let mut r = s.clone();
        r.agents.reverse();
        for (k, a) in r.agents.iter_mut().enumerate() {
            a.id = format!("relabeled{k}");
        }
        let cfg = BevConfig { size: 40, ..Default::default() };
        prop_assert_eq!(render_bev(&s, &cfg), render_bev(&r, &cfg));
    }
}

// ------------------------------------------------------------------- anchors

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn anchors_stay_in_corpus_hull(seed in any::<u64>(), n in 1usize..30) {
        let corpus = synthetic_corpus(&Horizon::default());
        let d = build_dictionary(&corpus, n, seed).unwrap();
        for k in 0..d.steps() {
            let xs = corpus.iter().map(|t| t.poses()[k].x);
            let ys = corpus.iter().map(|t| t.poses()[k].y);
            let (xlo, xhi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let (ylo, yhi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            for a in d.anchors() {
                let p = a.poses()[k];
                prop_assert!(p.x >= xlo - 1e-9 && p.x <= xhi + 1e-9);
                prop_assert!(p.y >= ylo - 1e-9 && p.y <= yhi + 1e-9);
            }
        }
    }

    #[test]
    fn travel_distance_matches_integration(v0 in 0.0..20.0f64, a in -6.0..4.0f64, t in 0.0..8.0f64) {
        // Midpoint rule on the speed profile max(v0 + a s, 0).
        let n = 20_000;
        let h = t / n as f64;
        let numeric: f64 = (0..n).map(|k| (v0 + a * (k as f64 + 0.5) * h).max(0.0) * h).sum();
        prop_assert!((travel_distance(v0, a, t) - numeric).abs() < 1e-5 * (1.0 + numeric));
    }
}

#[test]
fn braking_distance_example() {
    assert!((travel_distance(1.0, -3.0, 4.0) - 1.0 / 6.0).abs() < 1e-12);
}

// ------------------------------------------------------------------------ nn

proptest! {
    #[test]
    fn attention_weights_form_a_distribution(
        seed in any::<u64>(), n in 1usize..10, d in 1usize..8, scale in 0.1..50.0f64,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
        let k = Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap();
        let v = Tensor::from_vec(&[n, 2], (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (out, cache) = attention(&q, &k, &v).unwrap();
        let sum: f64 = cache.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(cache.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
        // A convex combination stays inside the value range.
        for c in 0..2 {
            let lo = (0..n).map(|r| v.row(r)[c]).fold(f64::INFINITY, f64::min);
            let hi = (0..n).map(|r| v.row(r)[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out[c] >= lo - 1e-12 && out[c] <= hi + 1e-12);
        }
    }

    #[test]
    fn sgd_converges_on_a_quadratic(target in prop::collection::vec(-5.0..5.0f64, 1..8), lr in 0.05..0.9f64) {
        let mut p = ParamStore::new(0);
        let id = p.register("w", Tensor::zeros(&[target.len()])).unwrap();
        let mut g = p.zeros_like();
        for _ in 0..400 {
            // Gradient of 0.5 * |w - target|^2.
            for ((gi, wi), ti) in g[id].data_mut().iter_mut().zip(p[id].data()).zip(&target) {
                *gi = wi - ti;
            }
            sgd_step(&mut p, &g, lr).unwrap();
        }
        for (w, t) in p[id].data().iter().zip(&target) {
            prop_assert!((w - t).abs() < 1e-6);
        }
    }
}

#[test]
fn positional_encodings_are_distinct() {
    for d in [2, 4, 8, 16] {
        let codes: Vec<Vec<f64>> = (0..64).map(|t| positional_encoding(t, d)).collect();
        for a in 0..codes.len() {
            for b in a + 1..codes.len() {
                let dist: f64 = codes[a].iter().zip(&codes[b]).map(|(x, y)| (x - y).abs()).sum();
                assert!(dist > 1e-6, "d={d}: t={a} and t={b} collide");
            }
        }
    }
}

// --------------------------------------------------------------------- EPDMS

fn metrics() -> impl Strategy<Value = [f64; 9]> {
    prop::array::uniform9(prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0..1.0f64])
}

proptest! {
    #[test]
    fn epdms_is_monotone_in_each_agent_metric(a in metrics(), h in metrics(), k in 0usize..9, up in 0.0..1.0f64) {
        let w = MetricWeights::default();
        let mut better = a;
        better[k] = a[k] + (1.0 - a[k]) * up;
        let lo = aggregate_epdms(&SubMetrics::from_array(a), &SubMetrics::from_array(h), &w).unwrap();
        let hi = aggregate_epdms(&SubMetrics::from_array(better), &SubMetrics::from_array(h), &w).unwrap();
        prop_assert!(hi >= lo - 1e-15);
    }

    #[test]
    fn epdms_ignores_weight_scale(a in metrics(), h in metrics(), c in 0.01..100.0f64, ws in prop::array::uniform5(0.1..3.0f64)) {
        let w = MetricWeights { ttc: ws[0], ep: ws[1], hc: ws[2], lk: ws[3], ec: ws[4] };
        let scaled = MetricWeights { ttc: c * ws[0], ep: c * ws[1], hc: c * ws[2], lk: c * ws[3], ec: c * ws[4] };
        let (a, h) = (SubMetrics::from_array(a), SubMetrics::from_array(h));
        let x = aggregate_epdms(&a, &h, &w).unwrap();
        let y = aggregate_epdms(&a, &h, &scaled).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_and_mining_are_rigid_invariant(seed in 0u64..10_000, index in 0usize..12, rigid in pose()) {
        let s = scene(seed, index);
        let moved = s.transformed(&rigid);
        let cfg = MetricConfig::default();
        let corpus = synthetic_corpus(&Horizon::default());
        let mut plans = vec![s.scene_to_ego(&s.human_trajectory)];
        plans.extend(corpus.iter().step_by(7).cloned());
        for t in &plans {
            let a = eval_submetrics(&s, t, &cfg).as_array();
            let b = eval_submetrics(&moved, t, &cfg).as_array();
            for k in 0..9 {
                prop_assert!((a[k] - b[k]).abs() < 1e-6, "{}: {} vs {}", SubMetrics::NAMES[k], a[k], b[k]);
            }
        }
        let m = MiningConfig::default();
        let (r1, r2) = (detect_hard_case(&s, &m), detect_hard_case(&moved, &m));
        prop_assert_eq!(r1.tags, r2.tags);
        prop_assert!((r1.max_curvature - r2.max_curvature).abs() < 1e-6);
    }
}

// --------------------------------------------------------- selection, filter

fn predictions() -> impl Strategy<Value = Vec<ScorePrediction>> {
    prop::collection::vec(
        prop_oneof![Just(0.25), Just(0.5), 0.0..1.0f64].prop_map(|e| ScorePrediction {
            epdms: e,
            nc: 0.5,
            dac: 0.5,
            comfort: 0.5,
        }),
        1..30,
    )
}

proptest! {
    #[test]
    fn selection_is_first_argmax_and_monotone_invariant(p in predictions()) {
        let chosen = select_trajectory(&p).unwrap();
        let best = p.iter().map(|x| x.epdms).fold(f64::NEG_INFINITY, f64::max);
        let first = p.iter().position(|x| x.epdms == best).unwrap();
        prop_assert_eq!(chosen, first);
        let warped: Vec<ScorePrediction> = p
            .iter()
            .map(|x| ScorePrediction { epdms: x.epdms.powi(3) * 0.5 + 0.1, ..*x })
            .collect();
        prop_assert_eq!(select_trajectory(&warped).unwrap(), chosen);
    }

    #[test]
    fn envelope_bounds_are_ordered_and_monotone(
        v in 0.0..30.0f64, dv in 0.0..5.0f64, h in 0.1..8.0f64, dh in 0.0..2.0f64,
        a_min in -8.0..0.0f64, a_max in 0.0..4.0f64,
    ) {
        let e = distance_envelope(&ego(v), h, a_min, a_max);
        prop_assert!(0.0 <= e.d_min && e.d_min <= e.d_max);
        let faster = distance_envelope(&ego(v + dv), h, a_min, a_max);
        prop_assert!(faster.d_min >= e.d_min - 1e-12 && faster.d_max >= e.d_max - 1e-12);
        let longer = distance_envelope(&ego(v), h + dh, a_min, a_max);
        prop_assert!(longer.d_min >= e.d_min - 1e-12 && longer.d_max >= e.d_max - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn filter_without_detections_is_plain_selection(seed in 0u64..1000, index in 0usize..12, p in predictions()) {
        let mut s = scene(seed, index);
        s.detections2d = Detections2D::default();
        let dict = build_dictionary(&synthetic_corpus(&Horizon::default()), p.len(), seed).unwrap();
        let model = DecoderModel::new(DecoderConfig::default(), dict.steps(), channel::COUNT, 0).unwrap();
        let grid = render_bev(&s, &BevConfig { size: 16, ..Default::default() });
        let c = generate_candidates(&model, &dict, &grid).unwrap();
        let p = &p[..c.len()];
        let out = filter_with_envelope(&c, p, &s, DistanceEnvelope::UNBOUNDED, &PostprocConfig::default()).unwrap();
        prop_assert!(!out.fallback);
        prop_assert_eq!(out.survivors.len(), c.len());
        prop_assert_eq!(out.chosen, select_trajectory(p).unwrap());
    }
}

// ---------------------------------------------------------------- projection

proptest! {
    #[test]
    fn projection_matches_homogeneous_oracle(
        mx in 0.0..3.0f64, mz in 1.0..2.5f64, pitch in -0.3..0.3f64,
        x in 1.0..80.0f64, y in -30.0..30.0f64, z in -2.0..4.0f64,
    ) {
        let cam = CameraModel::forward_facing(mx, mz, pitch);
        let k = [cam.fx, cam.fy, cam.cx, cam.cy];
        let got = cam.project_ego_point([x, y, z], 0.5);
        let want = common::homogeneous_projection([mx, 0.0, mz], pitch, k, [x, y, z]);
        match (got, want) {
            (Some(g), Some(w)) => prop_assert!((g.x - w.x).abs() < 1e-6 && (g.y - w.y).abs() < 1e-6),
            (None, None) => {}
            // Disagreement is only allowed right at the near plane.
            _ => prop_assert!((cam.ego_to_camera([x, y, z])[2] - 0.5).abs() < 1e-9),
        }
    }

    #[test]
    fn points_on_the_optical_axis_hit_the_principal_point(mx in 0.0..3.0f64, mz in 1.0..2.5f64, pitch in -0.3..0.3f64, d in 1.0..100.0f64) {
        let cam = CameraModel::forward_facing(mx, mz, pitch);
        let p = [mx + d * pitch.cos(), 0.0, mz - d * pitch.sin()];
        let uv = cam.project_ego_point(p, 0.5).unwrap();
        prop_assert!((uv.x - cam.cx).abs() < 1e-6 && (uv.y - cam.cy).abs() < 1e-6);
    }

    #[test]
    fn points_in_the_vertical_plane_have_centre_column(mx in 0.0..3.0f64, mz in 1.0..2.5f64, pitch in -0.3..0.3f64, x in 5.0..100.0f64, z in -2.0..3.0f64) {
        let cam = CameraModel::forward_facing(mx, mz, pitch);
        if let Some(uv) = cam.project_ego_point([x, 0.0, z], 0.5) {
            prop_assert!((uv.x - cam.cx).abs() < 1e-9);
        }
    }
}

// -------------------------------------------------------------------- mining

proptest! {
    #[test]
    fn upsample_keeps_every_id(flags in prop::collection::vec(any::<bool>(), 0..50), m in 1usize..5) {
        let ids: Vec<String> = (0..flags.len()).map(|i| format!("s{i}")).collect();
        let reports: Vec<HardCaseReport> = ids
            .iter()
            .zip(&flags)
            .map(|(id, &hard)| HardCaseReport {
                id: id.clone(),
                tags: if hard { [HardCaseTag::SharpCurve].into() } else { Default::default() },
                max_curvature: 0.0,
                max_lateral_offset: 0.0,
            })
            .collect();
        let sched = upsample(&ids, &reports, m).unwrap();
        for (id, &hard) in ids.iter().zip(&flags) {
            let n = sched.iter().filter(|s| *s == id).count();
            prop_assert_eq!(n, if hard { m } else { 1 });
        }
    }
}

// ------------------------------------------------------- scorer and training

#[test]
fn score_batch_equals_sequential_loop() {
    let s = scene(4, 3);
    let grid = render_bev(&s, &BevConfig::default());
    let dict = build_dictionary(&synthetic_corpus(&Horizon::default()), 20, 0).unwrap();
    let model = DecoderModel::new(DecoderConfig::default(), dict.steps(), channel::COUNT, 0).unwrap();
    let c = generate_candidates(&model, &dict, &grid).unwrap();
    let scorer = ScorerModel::new(ScorerConfig::default(), dict.steps(), channel::COUNT, 9).unwrap();
    let batch = score_batch(&scorer, &c, &grid).unwrap();
    for (t, b) in c.trajectories.iter().zip(&batch) {
        assert_eq!(score_trajectory(&scorer, t, &grid).unwrap(), *b);
    }
}

#[test]
fn decoder_training_replays_and_ignores_dataset_order() {
    let h = Horizon::default();
    let data: Vec<Scenario> = (0..6).map(|i| scene(21, i)).collect();
    let dict = build_dictionary(&synthetic_corpus(&h), 12, 0).unwrap();
    let bev = BevConfig {
        size: 40,
        ..Default::default()
    };
    let opts = TrainOptions {
        epochs: 3,
        lr: 0.02,
        seed: 5,
        ..Default::default()
    };
    let run = |d: &[Scenario]| {
        let mut m = DecoderModel::new(DecoderConfig::default(), h.steps, channel::COUNT, 1).unwrap();
        let hist = train_decoder(&mut m, d, &dict, &bev, &opts).unwrap();
        (m, hist)
    };
    let (m1, h1) = run(&data);
    let (m2, h2) = run(&data);
    assert_eq!(m1.params, m2.params);
    assert_eq!(h1, h2);
    let mut shuffled = data.clone();
    shuffled.reverse();
    shuffled.swap(0, 3);
    let (m3, h3) = run(&shuffled);
    assert_eq!(h1.epoch_losses.last(), h3.epoch_losses.last());
    assert_eq!(m1.params, m3.params);
}
