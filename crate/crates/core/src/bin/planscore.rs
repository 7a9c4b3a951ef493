use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use planscore::config::Config;
use planscore::pipeline;

#[derive(Parser)]
#[command(
    name = "planscore",
    version,
    about = "Anchor-based planning with a learned trajectory scorer"
)]
struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic set of synthetic scenarios.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cluster a trajectory corpus into the anchor dictionary.
    BuildAnchors {
        #[arg(long)]
        out: PathBuf,
        /// Scenario directory whose human trajectories form the corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the decoder, then the scorer.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Train on the plain dataset without hard-case upsampling.
        #[arg(long)]
        no_mining: bool,
    },
    /// Write the chosen trajectory of each scenario as JSON.
    Plan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Plan every scenario and score the chosen trajectory with the oracle.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Row label in reports; defaults to the output directory name.
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Render evaluation summaries as a table of mean percentages.
    Report {
        /// `summary.json`, `summary.csv`, or evaluation directories.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Ablation {
    /// Choose candidates uniformly at random (seeded) instead of by predicted score.
    #[arg(long)]
    no_scorer: bool,
    #[arg(long)]
    no_postproc: bool,
    /// Run only the first k decoder layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Seed of the random selection.
    #[arg(long)]
    seed: Option<u64>,
}

impl Ablation {
    fn apply(&self, cfg: &mut Config) {
        if self.no_scorer {
            cfg.evaluate.use_scorer = false;
        }
        if self.no_postproc {
            cfg.evaluate.use_postproc = false;
        }
        if let Some(k) = self.layers {
            cfg.evaluate.layers = k;
        }
        if let Some(s) = self.seed {
            cfg.evaluate.seed = s;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenSynthetic { out, count, seed } => {
            let count = count.unwrap_or(cfg.synthetic.count);
            let seed = seed.unwrap_or(cfg.synthetic.seed);
            let set = pipeline::cmd_gen_synthetic(&cfg, &out, count, seed)?;
            println!("wrote {} scenarios to {}", set.len(), out.display());
        }
        Command::BuildAnchors { out, corpus, count } => {
            if let Some(n) = count {
                cfg.anchors.count = n;
            }
            cfg.validate()?;
            let dict = pipeline::cmd_build_anchors(&cfg, corpus.as_deref(), &out)?;
            println!(
                "{} anchors from {} trajectories, inertia {:.4}, wrote {}",
                dict.len(),
                dict.corpus_size,
                dict.inertia,
                out.display()
            );
        }
        Command::Train {
            data,
            anchors,
            out,
            epochs,
            no_mining,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if no_mining {
                cfg.train.mining = false;
            }
            let r = pipeline::cmd_train(&cfg, &data, &anchors, &out)?;
            let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} scenarios ({} hard), schedule {}; final epoch loss decoder {:.4}, scorer {:.4}",
                r.scenarios,
                r.hard_cases,
                r.schedule_len,
                last(&r.decoder.epoch_losses),
                last(&r.scorer.epoch_losses)
            );
        }
        Command::Plan {
            data,
            anchors,
            model,
            out,
            ablation,
        } => {
            ablation.apply(&mut cfg);
            cfg.validate()?;
            let plans = pipeline::cmd_plan(&cfg, &data, &anchors, &model, &out)?;
            println!("wrote {} plans to {}", plans.len(), out.display());
        }
        Command::Evaluate {
            data,
            anchors,
            model,
            out,
            label,
            ablation,
        } => {
            ablation.apply(&mut cfg);
            cfg.validate()?;
            let label = label.unwrap_or_else(|| {
                out.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "eval".into())
            });
            let s = pipeline::cmd_evaluate(&cfg, &data, &anchors, &model, &out, &label)?;
            print!(
                "{}",
                pipeline::render_table(&[(s.label.clone(), s.scenarios.len(), s.means)])
            );
        }
        Command::Report { summaries, out } => {
            let table = pipeline::cmd_report(&summaries)?;
            print!("{table}");
            if let Some(p) = out {
                std::fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
