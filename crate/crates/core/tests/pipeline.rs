use std::path::{Path, PathBuf};
use std::process::Command;

use planscore::config::Config;
use planscore::epdms::{eval_scene_frame, MetricConfig};
use planscore::pipeline::{cmd_build_anchors, cmd_evaluate, cmd_gen_synthetic, cmd_report, cmd_train, EvalSummary};
use planscore::scene::{load_dataset, Horizon};
use planscore::Error;

fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.anchors.count = 8;
    cfg.train.epochs = 2;
    cfg.bev.size = 40;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_planscore"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{:?} failed:\n{}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, small_config().to_toml_string()).unwrap();
    p
}

#[test]
fn cli_runs_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    let p = |s: &str| d.join(s);
    run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["gen-synthetic", "--count", "8", "--seed", "1", "--out"])
        .arg(p("train")));
    run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["gen-synthetic", "--count", "6", "--seed", "2", "--out"])
        .arg(p("held")));
    run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["build-anchors", "--out"])
        .arg(p("anchors.json")));
    let train = run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["train", "--data"])
        .arg(p("train"))
        .arg("--anchors")
        .arg(p("anchors.json"))
        .arg("--out")
        .arg(p("model")));
    assert!(train.contains("schedule"), "{train}");
    run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["plan", "--data"])
        .arg(p("held"))
        .arg("--anchors")
        .arg(p("anchors.json"))
        .arg("--model")
        .arg(p("model"))
        .arg("--out")
        .arg(p("plans")));
    assert_eq!(std::fs::read_dir(p("plans")).unwrap().count(), 6);
    for (dir, extra) in [
        ("full", vec![]),
        ("random", vec!["--no-scorer", "--no-postproc"]),
        ("one_layer", vec!["--layers", "1"]),
    ] {
        run(bin()
            .args(["--config"])
            .arg(&cfg)
            .args(["evaluate", "--data"])
            .arg(p("held"))
            .arg("--anchors")
            .arg(p("anchors.json"))
            .arg("--model")
            .arg(p("model"))
            .arg("--out")
            .arg(p(dir))
            .args(extra));
        for f in ["summary.json", "summary.csv", "candidates.csv"] {
            assert!(p(dir).join(f).exists(), "{dir}/{f}");
        }
    }
    let table = run(bin()
        .arg("report")
        .arg(p("full"))
        .arg(p("random/summary.csv"))
        .arg("--out")
        .arg(p("table.txt")));
    assert!(
        table.contains("EPDMS") && table.contains("full") && table.contains("random"),
        "{table}"
    );
    assert_eq!(std::fs::read_to_string(p("table.txt")).unwrap(), table);
}

#[test]
fn cli_reports_actionable_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["gen-synthetic", "--count", "2", "--out"])
        .arg(d.join("data")));
    run(bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["build-anchors", "--out"])
        .arg(d.join("anchors.json")));
    let out = bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["evaluate", "--data"])
        .arg(d.join("data"))
        .arg("--anchors")
        .arg(d.join("anchors.json"))
        .arg("--model")
        .arg(d.join("no_model"))
        .arg("--out")
        .arg(d.join("eval"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("checkpoint") && err.contains("planscore train"), "{err}");

    std::fs::write(d.join("bad.toml"), "[train]\nepochz = 1\n").unwrap();
    let out = bin()
        .args(["--config"])
        .arg(d.join("bad.toml"))
        .args(["gen-synthetic", "--out"])
        .arg(d.join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn missing_inputs_are_reported_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    cmd_gen_synthetic(&cfg, &tmp.path().join("data"), 2, 0).unwrap();
    let e = cmd_train(
        &cfg,
        &tmp.path().join("data"),
        &tmp.path().join("nope.json"),
        &tmp.path().join("m"),
    )
    .unwrap_err();
    assert!(matches!(e, Error::Missing(_)));
    assert!(e.to_string().contains("build-anchors"));
}

#[test]
fn zero_count_generation_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let set = cmd_gen_synthetic(&small_config(), &out, 0, 0).unwrap();
    assert!(set.is_empty());
    assert!(load_dataset(&out, &Horizon::default()).unwrap().is_empty());
}

#[test]
fn generation_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    cmd_gen_synthetic(&cfg, &tmp.path().join("a"), 12, 77).unwrap();
    cmd_gen_synthetic(&cfg, &tmp.path().join("b"), 12, 77).unwrap();
    cmd_gen_synthetic(&cfg, &tmp.path().join("c"), 12, 78).unwrap();
    let mut differs = false;
    for entry in std::fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(tmp.path().join("a").join(&name)).unwrap();
        assert_eq!(a, std::fs::read(tmp.path().join("b").join(&name)).unwrap());
        differs |= a != std::fs::read(tmp.path().join("c").join(&name)).unwrap();
    }
    assert!(differs);
}

#[test]
fn generated_set_contains_a_human_drivable_area_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let set = cmd_gen_synthetic(&small_config(), tmp.path(), 12, 5).unwrap();
    let cfg = MetricConfig::default();
    let violations = set
        .iter()
        .filter(|s| eval_scene_frame(s, &s.human_trajectory, &cfg).dac == 0.0)
        .count();
    assert!(violations >= 1);
}

#[test]
fn report_recomputes_means_from_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("hand");
    std::fs::create_dir(&dir).unwrap();
    let csv = "id,chosen,fallback,nc,dac,ddc,tlc,ep,ttc,lk,hc,ec,epdms\n\
               a,0,false,1,1,1,1,0.5,1,1,1,1,0.9\n\
               b,3,true,0,1,0.5,1,1,1,0,1,1,0\n\
               c,1,false,1,0,1,1,1,0,1,1,0,0.25\n";
    std::fs::write(dir.join("summary.csv"), csv).unwrap();
    let table = cmd_report(&[dir.join("summary.csv")]).unwrap();
    let row = table.lines().find(|l| l.starts_with("hand")).unwrap();
    let values: Vec<f64> = row.split_whitespace().skip(2).map(|v| v.parse().unwrap()).collect();
    // NC DAC DDC TLC EP TTC LK HC EC EPDMS
    let want = [
        200.0 / 3.0,
        200.0 / 3.0,
        250.0 / 3.0,
        100.0,
        250.0 / 3.0,
        200.0 / 3.0,
        200.0 / 3.0,
        100.0,
        200.0 / 3.0,
        115.0 / 3.0,
    ];
    assert_eq!(values.len(), want.len());
    for (v, w) in values.iter().zip(want) {
        assert!((v - w).abs() < 0.005 + 1e-9, "{v} vs {w}");
    }
    assert!(row.split_whitespace().nth(1) == Some("3"));
}

#[test]
fn summary_means_match_per_scenario_values() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config();
    cmd_gen_synthetic(&cfg, &d.join("train"), 10, 3).unwrap();
    cmd_gen_synthetic(&cfg, &d.join("held"), 7, 4).unwrap();
    cmd_build_anchors(&cfg, Some(&d.join("train")), &d.join("anchors.json")).unwrap();
    cmd_train(&cfg, &d.join("train"), &d.join("anchors.json"), &d.join("model")).unwrap();
    let s = cmd_evaluate(
        &cfg,
        &d.join("held"),
        &d.join("anchors.json"),
        &d.join("model"),
        &d.join("eval"),
        "x",
    )
    .unwrap();
    let n = s.scenarios.len() as f64;
    let mean_epdms = s.scenarios.iter().map(|r| r.report.epdms).sum::<f64>() / n;
    assert!((s.means.epdms - 100.0 * mean_epdms).abs() < 1e-9);
    let mean_nc = s.scenarios.iter().map(|r| r.report.agent.nc).sum::<f64>() / n;
    assert!((s.means.nc - 100.0 * mean_nc).abs() < 1e-9);

    let on_disk: EvalSummary =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval/summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk.means, s.means);
    let from_json = cmd_report(&[d.join("eval")]).unwrap();
    let from_csv = cmd_report(&[d.join("eval/summary.csv")]).unwrap();
    let numbers = |t: &str| -> Vec<String> {
        t.lines()
            .skip(1)
            .flat_map(|l| l.split_whitespace().skip(1).map(String::from).collect::<Vec<_>>())
            .collect()
    };
    assert_eq!(numbers(&from_json), numbers(&from_csv));
    let candidates = std::fs::read_to_string(d.join("eval/candidates.csv")).unwrap();
    assert_eq!(candidates.lines().count(), 1 + 7 * cfg.anchors.count);
}
