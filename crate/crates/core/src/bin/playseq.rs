use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use playseq::analytics::{player_embedding, project_embeddings, similar_players};
use playseq::codec::{corpus_stats, read_corpus, write_corpus, EncodeConfig, EncodedCorpus, PlayerId};
use playseq::inference::{run_whatif, WhatIfReport, WhatIfRequest};
use playseq::model::Checkpoint;
use playseq::pipeline::{run_training, RunConfig};
use playseq::service::{serve, AppState, DEFAULT_MAX_SAMPLES};
use playseq::synth::{generate_corpus, GroundTruth, RoleClass, SyntheticLeague};
use playseq::train::evaluate;

#[derive(Parser)]
#[command(name = "playseq", version, about = "Player-conditioned next-event modelling for football event streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthetic league data.
    Synth {
        #[command(subcommand)]
        cmd: SynthCmd,
    },
    /// Train a model; writes model.ckpt, heldout.ndjson, train_log.json and report.json to --out.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON run configuration; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Teacher-forced metrics of a checkpoint on a corpus.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// What-if substitution rollouts.
    Simulate(SimulateArgs),
    /// Player embeddings.
    Embed {
        #[command(subcommand)]
        cmd: EmbedCmd,
    },
    /// HTTP JSON service.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, env = "PLAYSEQ_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, env = "PLAYSEQ_MAX_SAMPLES", default_value_t = DEFAULT_MAX_SAMPLES)]
        max_samples: usize,
    },
    /// Summary counts of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Generate a season of synthetic matches plus a ground-truth sidecar.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        matches: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long, required_unless_present = "pairs")]
    out_player: Option<PlayerId>,
    #[arg(long, required_unless_present = "pairs")]
    in_player: Option<PlayerId>,
    /// CSV with out_player,in_player columns; runs every pair.
    #[arg(long, conflicts_with_all = ["out_player", "in_player"])]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    max_events: usize,
    #[arg(long, default_value_t = 10)]
    max_episodes: usize,
    #[arg(long, value_parser = parse_role)]
    role_class: Option<RoleClass>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EmbedCmd {
    /// player_id followed by the embedding, one row per player.
    Export {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest players by cosine similarity.
    Similar {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        player: PlayerId,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Two-dimensional principal-component map.
    Project {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth sidecar whose archetype names label the points.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

fn parse_role(s: &str) -> Result<RoleClass, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown role class {s:?}; expected attacker, midfielder, defender or keeper"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn emit(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn load_ckpt(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<Vec<playseq::codec::Episode>> {
    read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn synth_generate(seed: u64, matches: usize, out: &Path) -> Result<()> {
    let league = SyntheticLeague::default_league(seed);
    let corpus = generate_corpus(&league, matches, seed)?;
    write_corpus(out, &corpus.episodes)?;
    let sidecar = GroundTruth::sidecar_path(out);
    GroundTruth::new(&league, &corpus, seed).save(&sidecar)?;
    eprintln!("{} episodes from {matches} matches -> {} (+ {})", corpus.episodes.len(), out.display(), sidecar.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainLog<'a> {
    config: &'a RunConfig,
    losses: &'a [f64],
    evals: &'a [playseq::train::EvalPoint],
    seconds: f64,
}

fn train_cmd(corpus: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: RunConfig = match config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => RunConfig::default(),
    };
    let episodes = load_corpus(corpus)?;
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let run = run_training(&episodes, &cfg, |e, _| {
        eprintln!("step {:>6}  loss {:.4}  {:.0}s", e.step, e.train_loss, start.elapsed().as_secs_f64());
        Ok(())
    })?;
    run.checkpoint.save(out.join("model.ckpt"))?;
    run.checkpoint.vocab.save_manifest(out.join("vocab.json"))?;
    write_corpus(out.join("heldout.ndjson"), &run.heldout_episodes)?;
    let log = TrainLog { config: &cfg, losses: &run.outcome.losses, evals: &run.outcome.evals, seconds: start.elapsed().as_secs_f64() };
    write_json(&out.join("train_log.json"), &log)?;
    if let Some(r) = &run.report {
        write_json(&out.join("report.json"), r)?;
        println!("{}", serde_json::to_string_pretty(r)?);
    }
    Ok(())
}

fn evaluate_cmd(ckpt: &Path, corpus: &Path, report: Option<&Path>) -> Result<()> {
    let ck = load_ckpt(ckpt)?;
    let episodes = load_corpus(corpus)?;
    let enc = EncodedCorpus::encode(&episodes, &ck.vocab, EncodeConfig::fitting(ck.params.config.block_size)?)?;
    emit(report, &evaluate(&ck.params, &ck.vocab, &enc)?)
}

#[derive(Debug, Deserialize)]
struct PairRow {
    out_player: PlayerId,
    in_player: PlayerId,
}

#[derive(Serialize)]
struct PairSummary {
    out_player: PlayerId,
    in_player: PlayerId,
    aggregate_robv: f64,
    baseline_aggregate_robv: f64,
    reevaluated_robv: Option<f64>,
    baseline_reevaluated_robv: Option<f64>,
}

#[derive(Serialize)]
struct PairsReport {
    pairs: Vec<PairSummary>,
    reports: Vec<WhatIfReport>,
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let ck = load_ckpt(&a.ckpt)?;
    let episodes = load_corpus(&a.episodes)?;
    let encode = EncodeConfig::fitting(ck.params.config.block_size)?;
    let request = |out_player, in_player| WhatIfRequest {
        n_samples: a.n,
        temperature: a.temperature,
        seed: a.seed,
        max_events: a.max_events,
        max_episodes: a.max_episodes,
        role_class: a.role_class,
        ..WhatIfRequest::new(out_player, in_player)
    };
    match (&a.pairs, a.out_player, a.in_player) {
        (Some(path), _, _) => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
            let mut out = PairsReport { pairs: Vec::new(), reports: Vec::new() };
            for row in rdr.deserialize() {
                let row: PairRow = row?;
                let r = run_whatif(&ck.params, &ck.vocab, encode, &episodes, &request(row.out_player, row.in_player))
                    .with_context(|| format!("pair {} -> {}", row.out_player, row.in_player))?;
                out.pairs.push(PairSummary {
                    out_player: row.out_player,
                    in_player: row.in_player,
                    aggregate_robv: r.result.aggregate_robv,
                    baseline_aggregate_robv: r.baseline.aggregate_robv,
                    reevaluated_robv: r.reevaluated_robv,
                    baseline_reevaluated_robv: r.baseline_reevaluated_robv,
                });
                out.reports.push(r);
            }
            emit(a.report.as_deref(), &out)
        }
        (None, Some(o), Some(i)) => emit(a.report.as_deref(), &run_whatif(&ck.params, &ck.vocab, encode, &episodes, &request(o, i))?),
        _ => bail!("give --out-player and --in-player, or --pairs"),
    }
}

fn embed_cmd(cmd: &EmbedCmd) -> Result<()> {
    match cmd {
        EmbedCmd::Export { ckpt, out } => {
            let ck = load_ckpt(ckpt)?;
            let mut w = csv::Writer::from_path(out)?;
            let d = ck.params.config.embed_dim;
            let mut header = vec!["player_id".to_string()];
            header.extend((0..d).map(|j| format!("e{j}")));
            w.write_record(&header)?;
            for &p in ck.vocab.player_ids() {
                let mut rec = vec![p.to_string()];
                rec.extend(player_embedding(&ck.params, &ck.vocab, p)?.iter().map(|x| x.to_string()));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        EmbedCmd::Similar { ckpt, player, k } => {
            let ck = load_ckpt(ckpt)?;
            println!("{}", serde_json::to_string_pretty(&similar_players(&ck.params, &ck.vocab, *player, *k)?)?);
        }
        EmbedCmd::Project { ckpt, out, labels } => {
            let ck = load_ckpt(ckpt)?;
            let names: BTreeMap<PlayerId, String> = match labels {
                Some(p) => GroundTruth::load(p)?.archetype_labels(),
                None => BTreeMap::new(),
            };
            let mut w = csv::Writer::from_path(out)?;
            w.write_record(["player_id", "u", "v", "role_label"])?;
            for pt in project_embeddings(&ck.params, &ck.vocab, ck.vocab.player_ids())? {
                let label = names.get(&pt.player_id).cloned().unwrap_or_default();
                w.write_record([pt.player_id.to_string(), pt.u.to_string(), pt.v.to_string(), label])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn serve_cmd(ckpt: &Path, corpus: &Path, host: std::net::IpAddr, port: u16, max_samples: usize) -> Result<()> {
    let ck = load_ckpt(ckpt)?;
    let episodes = load_corpus(corpus)?;
    let mut state = AppState::new(ck, episodes, max_samples).context("checkpoint and corpus are incompatible")?;
    let sidecar = GroundTruth::sidecar_path(corpus);
    if sidecar.exists() {
        state = state.with_role_labels(GroundTruth::load(&sidecar)?.archetype_labels());
    }
    let addr = std::net::SocketAddr::new(host, port);
    eprintln!("listening on http://{addr}");
    tokio::runtime::Runtime::new()?.block_on(serve(state, addr))?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth { cmd: SynthCmd::Generate { seed, matches, out } } => synth_generate(seed, matches, &out),
        Cmd::Train { corpus, config, out } => train_cmd(&corpus, config.as_deref(), &out),
        Cmd::Evaluate { ckpt, corpus, report } => evaluate_cmd(&ckpt, &corpus, report.as_deref()),
        Cmd::Simulate(args) => simulate_cmd(&args),
        Cmd::Embed { cmd } => embed_cmd(&cmd),
        Cmd::Serve { ckpt, corpus, port, host, max_samples } => serve_cmd(&ckpt, &corpus, host, port, max_samples),
        Cmd::Stats { corpus } => {
            println!("{}", serde_json::to_string_pretty(&corpus_stats(&load_corpus(&corpus)?))?);
            Ok(())
        }
    }
}
