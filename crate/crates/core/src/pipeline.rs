//! End-to-end commands: data generation, anchor building, training, planning,
//! batch evaluation and report rendering. Every command is deterministic given
//! its config, seeds and inputs; batch work fans out over scenarios but all
//! outputs are written in sorted scenario order by a single writer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{build_dictionary, synthetic_corpus, AnchorDictionary};
use crate::bev::render_bev;
use crate::config::Config;
use crate::decoder::{generate_candidates, train_decoder, CandidateSet, DecoderModel, TrainHistory};
use crate::epdms::{evaluate, MetricReport, SubMetrics};
use crate::error::{Error, Result};
use crate::mining::{detect_hard_case, upsample, HardCaseReport};
use crate::postproc::{filter_candidates, CandidateDecision, DiscardReason};
use crate::scene::{load_dataset, Scenario, Trajectory};
use crate::scorer::{score_batch, select_trajectory, train_scorer, ScorePrediction, ScorerModel};
use crate::synth::generate_dataset;

pub const DECODER_STEM: &str = "decoder";
pub const SCORER_STEM: &str = "scorer";

/// Column order of the rendered table.
pub const TABLE_COLUMNS: [&str; 10] = ["NC", "DAC", "DDC", "TLC", "EP", "TTC", "LK", "HC", "EC", "EPDMS"];

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn poses_of(t: &Trajectory) -> Vec<[f64; 3]> {
    t.poses().iter().map(|p| [p.x, p.y, p.yaw]).collect()
}

pub fn cmd_gen_synthetic(cfg: &Config, out_dir: &Path, count: usize, seed: u64) -> Result<Vec<Scenario>> {
    generate_dataset(out_dir, count, seed, &cfg.horizon)
}

/// Clusters either the built-in synthetic corpus or the ego-frame human
/// trajectories of a scenario directory.
pub fn cmd_build_anchors(cfg: &Config, corpus_dir: Option<&Path>, out: &Path) -> Result<AnchorDictionary> {
    let corpus = match corpus_dir {
        Some(dir) => load_dataset(dir, &cfg.horizon)?
            .iter()
            .map(|s| s.scene_to_ego(&s.human_trajectory))
            .collect(),
        None => synthetic_corpus(&cfg.horizon),
    };
    let dict = build_dictionary(&corpus, cfg.anchors.count, cfg.anchors.seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    dict.save(out)?;
    Ok(dict)
}

fn load_anchors(path: &Path) -> Result<AnchorDictionary> {
    if !path.exists() {
        return Err(Error::Missing(format!(
            "anchor dictionary {}; run `planscore build-anchors` first",
            path.display()
        )));
    }
    AnchorDictionary::load(path)
}

fn require_checkpoint(model_dir: &Path, stem: &str) -> Result<PathBuf> {
    let p = model_dir.join(stem);
    if !p.with_extension("json").exists() {
        return Err(Error::Missing(format!(
            "{stem} checkpoint in {}; run `planscore train` first",
            model_dir.display()
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub scenarios: usize,
    pub schedule_len: usize,
    pub hard_cases: usize,
    pub decoder: TrainHistory,
    pub scorer: TrainHistory,
}

/// Training schedule: scenario ids in sorted order, hard cases repeated when
/// mining is enabled.
pub fn training_schedule(cfg: &Config, dataset: &[Scenario]) -> Result<(Vec<String>, Vec<HardCaseReport>)> {
    let reports: Vec<HardCaseReport> = dataset.iter().map(|s| detect_hard_case(s, &cfg.mining)).collect();
    let ids: Vec<String> = dataset.iter().map(|s| s.id.clone()).collect();
    let schedule = if cfg.train.mining {
        upsample(&ids, &reports, cfg.mining.multiplicity)?
    } else {
        ids
    };
    Ok((schedule, reports))
}

/// Trains the decoder, then the scorer on candidates of the trained decoder.
pub fn train_models(
    cfg: &Config,
    dataset: &[Scenario],
    dict: &AnchorDictionary,
) -> Result<(DecoderModel, ScorerModel, TrainReport, Vec<HardCaseReport>)> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let (schedule, reports) = training_schedule(cfg, dataset)?;
    let by_id: BTreeMap<&str, &Scenario> = dataset.iter().map(|s| (s.id.as_str(), s)).collect();
    let scheduled: Vec<Scenario> = schedule.iter().map(|id| by_id[id.as_str()].clone()).collect();
    let channels = cfg.bev.channels;
    let mut decoder = DecoderModel::new(cfg.decoder, cfg.horizon.steps, channels, cfg.train.seed)?;
    let dec_hist = train_decoder(&mut decoder, &scheduled, dict, &cfg.bev, &cfg.decoder_train_options())?;
    let mut scorer = ScorerModel::new(cfg.scorer, cfg.horizon.steps, channels, cfg.train.seed.wrapping_add(1))?;
    let sc_hist = train_scorer(
        &mut scorer,
        &scheduled,
        dict,
        &decoder,
        &cfg.bev,
        &cfg.metrics,
        &cfg.scorer_train_options(),
    )?;
    let report = TrainReport {
        scenarios: dataset.len(),
        schedule_len: schedule.len(),
        hard_cases: reports.iter().filter(|r| r.is_hard()).count(),
        decoder: dec_hist,
        scorer: sc_hist,
    };
    Ok((decoder, scorer, report, reports))
}

pub fn cmd_train(cfg: &Config, data_dir: &Path, anchors: &Path, model_dir: &Path) -> Result<TrainReport> {
    let dataset = load_dataset(data_dir, &cfg.horizon)?;
    let dict = load_anchors(anchors)?;
    let (decoder, scorer, report, hard) = train_models(cfg, &dataset, &dict)?;
    create_dir(model_dir)?;
    decoder.save(&model_dir.join(DECODER_STEM))?;
    scorer.save(&model_dir.join(SCORER_STEM))?;
    write_json(&model_dir.join("hard_cases.json"), &hard)?;
    write_json(&model_dir.join("train_history.json"), &report)?;
    Ok(report)
}

/// Trained models plus the switches that select an ablation.
pub struct Planner {
    pub config: Config,
    pub dict: AnchorDictionary,
    pub decoder: DecoderModel,
    pub scorer: ScorerModel,
}

/// Everything decided for one scenario. Trajectories are in the ego frame.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub candidates: CandidateSet,
    pub predictions: Vec<ScorePrediction>,
    pub chosen: usize,
    pub fallback: bool,
    pub decisions: Vec<CandidateDecision>,
}

impl PlanResult {
    pub fn chosen_trajectory(&self) -> &Trajectory {
        &self.candidates.trajectories[self.chosen]
    }
}

/// Stable per-scenario seed so random selection does not depend on dataset order.
fn scene_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

impl Planner {
    pub fn new(config: Config, dict: AnchorDictionary, decoder: DecoderModel, scorer: ScorerModel) -> Result<Self> {
        let layers = config.evaluate.layers;
        let decoder = if layers > 0 && layers < decoder.num_layers() {
            decoder.truncated(layers)?
        } else {
            decoder
        };
        Ok(Planner {
            config,
            dict,
            decoder,
            scorer,
        })
    }

    pub fn load(config: Config, anchors: &Path, model_dir: &Path) -> Result<Self> {
        let dict = load_anchors(anchors)?;
        let decoder = DecoderModel::load(&require_checkpoint(model_dir, DECODER_STEM)?)?;
        let scorer = ScorerModel::load(&require_checkpoint(model_dir, SCORER_STEM)?)?;
        Self::new(config, dict, decoder, scorer)
    }

    pub fn plan(&self, s: &Scenario) -> Result<PlanResult> {
        let grid = render_bev(s, &self.config.bev);
        let candidates = generate_candidates(&self.decoder, &self.dict, &grid)?;
        let predictions = if self.config.evaluate.use_scorer {
            score_batch(&self.scorer, &candidates, &grid)?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(self.config.evaluate.seed, &s.id));
            (0..candidates.len())
                .map(|_| {
                    let u: f64 = rng.gen();
                    ScorePrediction {
                        epdms: u,
                        nc: u,
                        dac: u,
                        comfort: u,
                    }
                })
                .collect()
        };
        let (chosen, fallback, decisions) = if self.config.evaluate.use_postproc {
            let out = filter_candidates(
                &candidates,
                &predictions,
                s,
                self.config.horizon.duration(),
                &self.config.postproc,
            )?;
            (out.chosen, out.fallback, out.decisions)
        } else {
            (select_trajectory(&predictions)?, false, Vec::new())
        };
        Ok(PlanResult {
            candidates,
            predictions,
            chosen,
            fallback,
            decisions,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanOutput {
    pub id: String,
    pub chosen: usize,
    pub fallback: bool,
    pub predicted: ScorePrediction,
    /// Chosen trajectory in the scenario frame, `[x, y, yaw]` per step.
    pub trajectory: Vec<[f64; 3]>,
}

pub fn cmd_plan(
    cfg: &Config,
    data_dir: &Path,
    anchors: &Path,
    model_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<PlanOutput>> {
    let planner = Planner::load(*cfg, anchors, model_dir)?;
    let dataset = load_dataset(data_dir, &cfg.horizon)?;
    let outputs = dataset
        .par_iter()
        .map(|s| {
            let r = planner.plan(s)?;
            Ok(PlanOutput {
                id: s.id.clone(),
                chosen: r.chosen,
                fallback: r.fallback,
                predicted: r.predictions[r.chosen],
                trajectory: poses_of(&s.ego_to_scene(r.chosen_trajectory())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(out_dir)?;
    for o in &outputs {
        write_json(&out_dir.join(format!("{}.json", o.id)), o)?;
    }
    Ok(outputs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: String,
    pub chosen: usize,
    pub fallback: bool,
    pub predicted: ScorePrediction,
    /// Chosen trajectory in the scenario frame.
    pub trajectory: Vec<[f64; 3]>,
    pub report: MetricReport,
    /// Per-candidate post-processing decisions; empty when disabled.
    pub decisions: Vec<CandidateDecision>,
}

/// Column means in percent, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeans {
    pub nc: f64,
    pub dac: f64,
    pub ddc: f64,
    pub tlc: f64,
    pub ep: f64,
    pub ttc: f64,
    pub lk: f64,
    pub hc: f64,
    pub ec: f64,
    pub epdms: f64,
}

impl ColumnMeans {
    pub fn as_array(&self) -> [f64; 10] {
        [
            self.nc, self.dac, self.ddc, self.tlc, self.ep, self.ttc, self.lk, self.hc, self.ec, self.epdms,
        ]
    }

    /// Means of `(sub-metrics, epdms)` rows, as percentages.
    pub fn from_rows(rows: &[(SubMetrics, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("evaluation rows"));
        }
        let mut sum = [0.0; 10];
        for (m, e) in rows {
            for (acc, v) in sum.iter_mut().zip(m.as_array().iter().chain(std::iter::once(e))) {
                *acc += v;
            }
        }
        let n = rows.len() as f64;
        let p = sum.map(|v| 100.0 * v / n);
        Ok(ColumnMeans {
            nc: p[0],
            dac: p[1],
            ddc: p[2],
            tlc: p[3],
            ep: p[4],
            ttc: p[5],
            lk: p[6],
            hc: p[7],
            ec: p[8],
            epdms: p[9],
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub scenarios: Vec<ScenarioResult>,
    pub means: ColumnMeans,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: String,
    pub chosen: usize,
    pub fallback: bool,
    pub nc: f64,
    pub dac: f64,
    pub ddc: f64,
    pub tlc: f64,
    pub ep: f64,
    pub ttc: f64,
    pub lk: f64,
    pub hc: f64,
    pub ec: f64,
    pub epdms: f64,
}

impl SummaryRow {
    fn metrics(&self) -> (SubMetrics, f64) {
        (
            SubMetrics {
                nc: self.nc,
                dac: self.dac,
                ddc: self.ddc,
                tlc: self.tlc,
                ep: self.ep,
                ttc: self.ttc,
                hc: self.hc,
                lk: self.lk,
                ec: self.ec,
            },
            self.epdms,
        )
    }
}

/// One row of `candidates.csv`: every candidate with its prediction, oracle
/// metrics and post-processing verdict.
#[derive(Debug, Clone, Serialize)]
struct CandidateRow<'a> {
    id: &'a str,
    candidate: usize,
    chosen: bool,
    pred_epdms: f64,
    pred_nc: f64,
    pred_dac: f64,
    pred_comfort: f64,
    nc: f64,
    dac: f64,
    ddc: f64,
    tlc: f64,
    ep: f64,
    ttc: f64,
    lk: f64,
    hc: f64,
    ec: f64,
    epdms: f64,
    discard: String,
}

fn reasons_text(reasons: &[DiscardReason]) -> String {
    reasons
        .iter()
        .map(|r| match r {
            DiscardReason::DistanceEnvelope => "distance_envelope",
            DiscardReason::Obstacle => "obstacle",
            DiscardReason::LaneCorridor => "lane_corridor",
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Predictions and oracle reports of every candidate of one scenario.
#[derive(Debug, Clone)]
pub struct CandidateDetail {
    pub predictions: Vec<ScorePrediction>,
    pub reports: Vec<MetricReport>,
}

/// Plans and scores every scenario.
pub fn evaluate_dataset(
    planner: &Planner,
    dataset: &[Scenario],
    label: &str,
) -> Result<(EvalSummary, Vec<CandidateDetail>)> {
    let metrics = planner.config.metrics;
    let per: Vec<(ScenarioResult, CandidateDetail)> = dataset
        .par_iter()
        .map(|s| {
            let r = planner.plan(s)?;
            let all = r
                .candidates
                .trajectories
                .iter()
                .map(|t| evaluate(s, t, &metrics))
                .collect::<Result<Vec<_>>>()?;
            let result = ScenarioResult {
                id: s.id.clone(),
                chosen: r.chosen,
                fallback: r.fallback,
                predicted: r.predictions[r.chosen],
                trajectory: poses_of(&s.ego_to_scene(r.chosen_trajectory())),
                report: all[r.chosen],
                decisions: r.decisions.clone(),
            };
            let detail = CandidateDetail {
                predictions: r.predictions,
                reports: all,
            };
            Ok((result, detail))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<(SubMetrics, f64)> = per.iter().map(|(r, _)| (r.report.agent, r.report.epdms)).collect();
    let means = ColumnMeans::from_rows(&rows)?;
    let (scenarios, details) = per.into_iter().unzip();
    Ok((
        EvalSummary {
            label: label.to_string(),
            scenarios,
            means,
        },
        details,
    ))
}

fn summary_rows(summary: &EvalSummary) -> Vec<SummaryRow> {
    summary
        .scenarios
        .iter()
        .map(|r| {
            let m = r.report.agent;
            SummaryRow {
                id: r.id.clone(),
                chosen: r.chosen,
                fallback: r.fallback,
                nc: m.nc,
                dac: m.dac,
                ddc: m.ddc,
                tlc: m.tlc,
                ep: m.ep,
                ttc: m.ttc,
                lk: m.lk,
                hc: m.hc,
                ec: m.ec,
                epdms: r.report.epdms,
            }
        })
        .collect()
}

/// Writes `reports/<id>.json`, `summary.json`, `summary.csv` and `candidates.csv`.
pub fn cmd_evaluate(
    cfg: &Config,
    data_dir: &Path,
    anchors: &Path,
    model_dir: &Path,
    out_dir: &Path,
    label: &str,
) -> Result<EvalSummary> {
    let planner = Planner::load(*cfg, anchors, model_dir)?;
    let dataset = load_dataset(data_dir, &cfg.horizon)?;
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let (summary, details) = evaluate_dataset(&planner, &dataset, label)?;
    let reports_dir = out_dir.join("reports");
    create_dir(&reports_dir)?;
    for r in &summary.scenarios {
        write_json(&reports_dir.join(format!("{}.json", r.id)), r)?;
    }
    write_json(&out_dir.join("summary.json"), &summary)?;

    let csv_err = |path: &Path, e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for row in summary_rows(&summary) {
        w.serialize(row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join("candidates.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for (res, detail) in summary.scenarios.iter().zip(&details) {
        for (i, (rep, p)) in detail.reports.iter().zip(&detail.predictions).enumerate() {
            let m = rep.agent;
            let discard = res
                .decisions
                .get(i)
                .map(|d| reasons_text(&d.reasons))
                .unwrap_or_default();
            w.serialize(CandidateRow {
                id: &res.id,
                candidate: i,
                chosen: i == res.chosen,
                pred_epdms: p.epdms,
                pred_nc: p.nc,
                pred_dac: p.dac,
                pred_comfort: p.comfort,
                nc: m.nc,
                dac: m.dac,
                ddc: m.ddc,
                tlc: m.tlc,
                ep: m.ep,
                ttc: m.ttc,
                lk: m.lk,
                hc: m.hc,
                ec: m.ec,
                epdms: rep.epdms,
                discard,
            })
            .map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Per-scenario rows of a summary given as `summary.json`, `summary.csv`, or
/// an evaluation directory containing `summary.json`.
pub fn load_summary_rows(path: &Path) -> Result<(String, Vec<SummaryRow>)> {
    let path = if path.is_dir() {
        path.join("summary.json")
    } else {
        path.to_path_buf()
    };
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if path.extension().is_some_and(|e| e == "csv") {
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<SummaryRow>, _>>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        return Ok((label, rows));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: EvalSummary = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        source: e,
    })?;
    let label = if summary.label.is_empty() {
        label
    } else {
        summary.label.clone()
    };
    Ok((label, summary_rows(&summary)))
}

/// Text table with one row per summary; column means are recomputed from the
/// per-scenario rows.
pub fn cmd_report(summaries: &[PathBuf]) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::Empty("summary list"));
    }
    let mut rows = Vec::new();
    for p in summaries {
        let (label, data) = load_summary_rows(p)?;
        let metrics: Vec<(SubMetrics, f64)> = data.iter().map(SummaryRow::metrics).collect();
        rows.push((label, data.len(), ColumnMeans::from_rows(&metrics)?));
    }
    Ok(render_table(&rows))
}

pub fn render_table(rows: &[(String, usize, ColumnMeans)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<width$} {:>5}", "run", "n");
    for c in TABLE_COLUMNS {
        let _ = write!(out, " {c:>6}");
    }
    out.push('\n');
    for (label, n, m) in rows {
        let _ = write!(out, "{label:<width$} {n:>5}");
        for v in m.as_array() {
            let _ = write!(out, " {v:>6.2}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_are_percentages() {
        let mut a = SubMetrics::ALL_ONE;
        a.ep = 0.5;
        let mut b = SubMetrics::ALL_ONE;
        b.nc = 0.0;
        b.ep = 0.0;
        let m = ColumnMeans::from_rows(&[(a, 0.9), (b, 0.0)]).unwrap();
        assert_eq!(m.nc, 50.0);
        assert_eq!(m.ep, 25.0);
        assert_eq!(m.dac, 100.0);
        assert_eq!(m.epdms, 45.0);
        assert!(ColumnMeans::from_rows(&[]).is_err());
    }

    #[test]
    fn scene_seed_depends_on_id_only() {
        assert_eq!(scene_seed(3, "a"), scene_seed(3, "a"));
        assert_ne!(scene_seed(3, "a"), scene_seed(3, "b"));
        assert_ne!(scene_seed(3, "a"), scene_seed(4, "a"));
    }
}
