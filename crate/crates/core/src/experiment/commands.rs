//! The subcommands. Each reads its upstream artifacts from fixed places under
//! the output root, writes only its own directory and returns that directory.
//!
//! | command | directory |
//! |---|---|
//! | generate-traffic | `traffic` |
//! | train-predictor | `predictor-fa`, `predictor-lstm` |
//! | train-dqn | `dqn-<predictor>` |
//! | optimize-reward | `meta` |
//! | evaluate | `eval-<policy>-<predictor>` |
//! | compare | `compare` |

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::dqn::{Policy, Trace};
use crate::error::{Error, Result};
use crate::fa::slot_mse;
use crate::feed::PredictorKind;
use crate::kpi::{compare as compare_runs, median, KpiSummary};
use crate::lstm_predictor::{build_dataset, classification_report, evaluate_range, ClassificationReport, TrainedLstm};
use crate::meta::{optimize_dqn, optimize_sweep, InnerKpis, MetaAction, MetaMode, MetaRecord};
use crate::neural::{Checkpoint, LstmNetwork, Mlp};
use crate::rng::{SeedTree, Stream};

use super::artifacts::RunDir;
use super::pipeline;
use super::ExperimentConfig;

pub const LSTM_KIND: &str = "lstm-predictor";
pub const DQN_KIND: &str = "dqn-q-network";
pub const CHECKPOINT: &str = "checkpoint.json";

/// Policies accepted by `evaluate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Trained,
    RandomWalk,
    Greedy,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Trained => "trained",
            PolicyKind::RandomWalk => "rw",
            PolicyKind::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(PolicyKind::Trained),
            "rw" | "random-walk" => Ok(PolicyKind::RandomWalk),
            "greedy" => Ok(PolicyKind::Greedy),
            other => Err(Error::Config(format!("unknown policy {other:?}; expected trained, rw or greedy"))),
        }
    }
}

pub fn parse_predictor(s: &str) -> Result<PredictorKind> {
    match s {
        "fa" => Ok(PredictorKind::Fa),
        "lstm" => Ok(PredictorKind::Lstm),
        "genie" => Ok(PredictorKind::Genie),
        other => Err(Error::Config(format!("unknown predictor {other:?}; expected fa, lstm or genie"))),
    }
}

pub fn traffic_dir(out: &Path) -> PathBuf {
    out.join("traffic")
}

pub fn predictor_dir(out: &Path, kind: PredictorKind) -> PathBuf {
    out.join(format!("predictor-{}", kind.name()))
}

pub fn dqn_dir(out: &Path, kind: PredictorKind) -> PathBuf {
    out.join(format!("dqn-{}", kind.name()))
}

pub fn meta_dir(out: &Path) -> PathBuf {
    out.join("meta")
}

pub fn eval_dir(out: &Path, policy: PolicyKind, kind: PredictorKind) -> PathBuf {
    out.join(format!("eval-{}-{}", policy.name(), kind.name()))
}

pub fn compare_dir(out: &Path) -> PathBuf {
    out.join("compare")
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn load_lstm(cfg: &ExperimentConfig, out: &Path, run: &mut RunDir) -> Result<TrainedLstm> {
    let path = run.input("lstm_checkpoint", &predictor_dir(out, PredictorKind::Lstm).join(CHECKPOINT))?;
    let ck = Checkpoint::<LstmNetwork<f32>, f32>::load(&path, LSTM_KIND)?;
    Ok(pipeline::lstm_predictor(cfg, ck.network))
}

/// The LSTM when `kind` needs one.
fn predictor_for(cfg: &ExperimentConfig, out: &Path, kind: PredictorKind, run: &mut RunDir) -> Result<Option<TrainedLstm>> {
    match kind {
        PredictorKind::Lstm => load_lstm(cfg, out, run).map(Some),
        _ => Ok(None),
    }
}

fn load_q_network(out: &Path, kind: PredictorKind, run: &mut RunDir) -> Result<Mlp<f32>> {
    let path = run.input(&format!("dqn_{}_checkpoint", kind.name()), &dqn_dir(out, kind).join(CHECKPOINT))?;
    Ok(Checkpoint::<Mlp<f32>, f32>::load(&path, DQN_KIND)?.network)
}

/// `traffic.csv`: per slot the activations `w_d`, the hidden events `s_k` and
/// the true activation probabilities `p_d`.
pub fn generate_traffic(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let dir = traffic_dir(out);
    let mut run = RunDir::create(&dir, "generate-traffic")?;
    let model = cfg.model()?;
    let slots = pipeline::history(cfg, &SeedTree::new(cfg.seed))?;
    let mut header: Vec<String> = vec!["slot".into()];
    header.extend((0..model.devices()).map(|d| format!("w_{d}")));
    header.extend((0..model.events()).map(|k| format!("s_{k}")));
    header.extend((0..model.devices()).map(|d| format!("p_{d}")));
    let probs = slots.iter().map(|s| crate::traffic::activation_probs(&s.events, &model)).collect::<Result<Vec<_>>>()?;
    let rows = slots.iter().zip(&probs).enumerate().map(|(t, (s, p))| {
        let mut row = vec![t.to_string()];
        row.extend(s.activity.0.iter().map(|&b| u8::from(b).to_string()));
        row.extend(s.events.0.iter().map(|&b| u8::from(b).to_string()));
        row.extend(p.iter().map(|x| x.to_string()));
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("traffic.csv", &header, rows)?;
    run.finish(cfg, start.elapsed().as_secs_f64())?;
    Ok(dir)
}

#[derive(Debug, Clone, Serialize)]
struct FaReport {
    mode: crate::fa::PredictMode,
    slots: usize,
    mean_mse: f64,
    final_mse: f64,
    per_slot_mse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct LstmReport {
    window: usize,
    train_windows: usize,
    val_windows: usize,
    best_epoch: usize,
    initial_train_bce: f64,
    val_bce: f64,
    validation: ClassificationReport,
}

/// Fits (LSTM) or runs (FA) a predictor on the traffic history and reports its quality.
pub fn train_predictor(cfg: &ExperimentConfig, out: &Path, kind: PredictorKind) -> Result<PathBuf> {
    let start = Instant::now();
    let tree = SeedTree::new(cfg.seed);
    match kind {
        PredictorKind::Genie => Err(Error::Config("the genie predictor needs no training".into())),
        PredictorKind::Fa => {
            let dir = predictor_dir(out, kind);
            let mut run = RunDir::create(&dir, "train-predictor")?;
            run.option("predictor", kind.name());
            let slots = pipeline::history(cfg, &tree)?;
            let (predicted, truth) = pipeline::fa_forecasts(cfg, &slots)?;
            let per_slot = predicted.iter().zip(&truth).map(|(p, t)| slot_mse(p, t)).collect::<Result<Vec<_>>>()?;
            let rows = predicted.iter().zip(&truth).enumerate().flat_map(|(t, (p, y))| {
                p.iter().zip(y).enumerate().map(move |(d, (a, b))| vec![t.to_string(), d.to_string(), a.to_string(), b.to_string(), ((a - b) * (a - b)).to_string()])
            });
            run.write_csv("fa_mse.csv", &["slot", "device", "predicted", "truth", "squared_error"], rows)?;
            run.write_json(
                "report.json",
                &FaReport {
                    mode: cfg.fa_mode,
                    slots: per_slot.len(),
                    mean_mse: crate::kpi::mean(&per_slot),
                    final_mse: *per_slot.last().ok_or(Error::Empty("traffic history"))?,
                    per_slot_mse: per_slot,
                },
            )?;
            run.finish(cfg, start.elapsed().as_secs_f64())?;
            Ok(dir)
        }
        PredictorKind::Lstm => {
            let dir = predictor_dir(out, kind);
            let mut run = RunDir::create(&dir, "train-predictor")?;
            run.option("predictor", kind.name());
            let trained = pipeline::train_lstm(cfg, &tree)?;
            let slots = pipeline::history(cfg, &tree)?;
            let activity: Vec<_> = slots.into_iter().map(|s| s.activity).collect();
            let dataset = build_dataset(&activity, cfg.lstm.window, cfg.lstm.train_fraction)?;
            let val = evaluate_range(&trained.network, &dataset, dataset.val_range())?;
            let preds: Vec<bool> = val.predictions.concat();
            let truths: Vec<bool> = val.truths.concat();
            let rows = (0..trained.train_bce.len()).map(|e| {
                vec![
                    (e + 1).to_string(),
                    trained.train_bce[e].to_string(),
                    trained.val_bce[e].to_string(),
                    trained.val_accuracy[e].to_string(),
                ]
            });
            run.write_csv("loss_curve.csv", &["epoch", "train_bce", "val_bce", "val_accuracy"], rows)?;
            run.write_json(
                "report.json",
                &LstmReport {
                    window: trained.window,
                    train_windows: dataset.train_range().len(),
                    val_windows: dataset.val_range().len(),
                    best_epoch: trained.best_epoch,
                    initial_train_bce: trained.initial_train_bce,
                    val_bce: val.bce,
                    validation: classification_report(&preds, &truths)?,
                },
            )?;
            let ck = Checkpoint::new(LSTM_KIND, cfg.seed, trained.network, None);
            run.write_text(CHECKPOINT, &ck.to_json()?)?;
            run.finish(cfg, start.elapsed().as_secs_f64())?;
            Ok(dir)
        }
    }
}

/// Trains the agent for `cfg.predictor`: `episodes.csv` and the Q-network checkpoint.
pub fn train_dqn(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let kind = cfg.predictor;
    let dir = dqn_dir(out, kind);
    let mut run = RunDir::create(&dir, "train-dqn")?;
    run.option("predictor", kind.name());
    let lstm = predictor_for(cfg, out, kind, &mut run)?;
    let agent = pipeline::train_agent(cfg, &SeedTree::new(cfg.seed), kind, lstm.as_ref())?;
    let rows = agent.log.iter().map(|e| {
        vec![e.episode.to_string(), e.epsilon.to_string(), e.reward.to_string(), e.slots.to_string(), e.mean_loss.to_string()]
    });
    run.write_csv("episodes.csv", &["episode", "epsilon", "reward", "slots", "mean_loss"], rows)?;
    let summary = serde_json::json!({
        "predictor": kind.name(),
        "episodes": agent.log.len(),
        "gradient_steps": agent.steps,
        "target_updates": agent.target_updates,
        "selected_episode": agent.selected_episode,
    });
    if !agent.validation.is_empty() {
        let rows = agent.validation.iter().map(|(e, v)| vec![e.to_string(), v.to_string()]);
        run.write_csv("validation.csv", &["episode", "reward"], rows)?;
    }
    run.write_json("summary.json", &summary)?;
    let ck = Checkpoint::new(DQN_KIND, cfg.seed, agent.q_net, Some(agent.optimizer));
    run.write_text(CHECKPOINT, &ck.to_json()?)?;
    run.finish(cfg, start.elapsed().as_secs_f64())?;
    Ok(dir)
}

/// Searches the reward-weight grid, training one agent per visited point.
pub fn optimize_reward(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let kind = cfg.predictor;
    let dir = meta_dir(out);
    let mut run = RunDir::create(&dir, "optimize-reward")?;
    run.option("predictor", kind.name());
    let lstm = predictor_for(cfg, out, kind, &mut run)?;
    let tree = SeedTree::new(cfg.seed);
    let devices = cfg.model()?.devices();
    let mut checkpoints: Vec<(usize, String)> = Vec::new();
    let mut inner = |action: MetaAction, step: usize| -> Result<InnerKpis> {
        let r = pipeline::inner_run(cfg, &tree, step, action, lstm.as_ref())?;
        let ck = Checkpoint::new(DQN_KIND, cfg.seed, r.agent.q_net, None);
        checkpoints.push((step, ck.to_json()?));
        Ok(r.kpis)
    };
    let outcome = match cfg.meta.mode {
        MetaMode::Sweep => optimize_sweep(&cfg.meta, devices, &mut inner)?,
        MetaMode::Dqn => optimize_dqn(&cfg.meta, devices, &mut inner, &mut tree.child(pipeline::branch::META).stream(Stream::Meta))?,
    };
    for (step, json) in &checkpoints {
        run.write_text(&format!("inner/step-{step:03}.json"), json)?;
    }
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let rows = outcome.log.iter().map(|r: &MetaRecord| {
        vec![
            r.step.to_string(),
            r.action.zeta1.to_string(),
            r.action.zeta2.to_string(),
            cfg.seed.to_string(),
            opt(r.kpis.map(|k| k.avg_aoi)),
            opt(r.kpis.map(|k| k.acc_regret)),
            opt(r.kpis.map(|k| k.avg_power)),
            opt(r.meta_reward),
            r.error.clone().unwrap_or_default().replace(',', ";"),
        ]
    });
    run.write_csv(
        "meta_log.csv",
        &["step", "zeta1", "zeta2", "seed", "avg_aoi", "acc_regret", "avg_power", "meta_reward", "error"],
        rows,
    )?;
    run.write_json("outcome.json", &outcome)?;
    run.finish(cfg, start.elapsed().as_secs_f64())?;
    Ok(dir)
}

fn trace_rows(trace: &Trace) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = vec!["slot".into()];
    for u in 0..trace.uavs {
        for f in ["x", "y", "energy", "delta", "recharging", "schedule"] {
            header.push(format!("{f}_{u}"));
        }
    }
    header.extend(["activity", "aoi", "regret", "mean_aoi", "mean_power", "power_w", "reward"].map(String::from));
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.slot.to_string()];
            for u in 0..trace.uavs {
                row.push(r.positions[u].x.to_string());
                row.push(r.positions[u].y.to_string());
                row.push(r.energy[u].to_string());
                row.push(r.delta[u].to_string());
                row.push(u8::from(r.recharging[u]).to_string());
                row.push(r.schedule[u].map(|d| d.to_string()).unwrap_or_default());
            }
            row.push(bits(&r.activity));
            row.push(r.aoi.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" "));
            row.push(r.regret.to_string());
            row.push(r.mean_aoi.to_string());
            row.push(r.mean_power.to_string());
            row.push(r.power_w.to_string());
            row.push(r.reward.to_string());
            row
        })
        .collect();
    (header, rows)
}

#[derive(Debug, Clone, Serialize)]
struct Trajectory {
    grid_size: usize,
    devices: Vec<[usize; 2]>,
    /// Per UAV, its cell in every slot.
    uavs: Vec<Vec<[usize; 2]>>,
}

fn trajectory(cfg: &ExperimentConfig, trace: &Trace) -> Trajectory {
    Trajectory {
        grid_size: cfg.world.grid_size,
        devices: cfg.world.device_locations.iter().map(|p| [p.x, p.y]).collect(),
        uavs: (0..trace.uavs).map(|u| trace.records.iter().map(|r| [r.positions[u].x, r.positions[u].y]).collect()).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct SeedKpis {
    seed: u64,
    kpis: KpiSummary,
}

#[derive(Debug, Clone, Serialize)]
struct EvalReport {
    policy: String,
    predictor: String,
    runs: Vec<SeedKpis>,
    median_ergodic_age: f64,
    median_accumulated_regret: f64,
    median_ergodic_power: f64,
}

/// Plays `policy` on every evaluation seed. `kpi.json` covers all seeds; the
/// trace and trajectory are those of the first seed.
pub fn evaluate(cfg: &ExperimentConfig, out: &Path, policy: PolicyKind) -> Result<PathBuf> {
    let start = Instant::now();
    let kind = cfg.predictor;
    let dir = eval_dir(out, policy, kind);
    let mut run = RunDir::create(&dir, "evaluate")?;
    run.option("policy", policy.name());
    run.option("predictor", kind.name());
    let q_net = match policy {
        PolicyKind::Trained => Some(load_q_network(out, kind, &mut run)?),
        _ => None,
    };
    let p = match &q_net {
        Some(q) => Policy::Trained(q),
        None if policy == PolicyKind::Greedy => Policy::Greedy,
        None => Policy::RandomWalk,
    };
    let lstm = predictor_for(cfg, out, kind, &mut run)?;
    let tree = SeedTree::new(cfg.seed);
    let mut runs = Vec::new();
    for (i, &s) in cfg.evaluation.seeds.iter().enumerate() {
        let trace = pipeline::evaluate(cfg, &tree, s, &p, kind, lstm.as_ref())?;
        if i == 0 {
            let (header, rows) = trace_rows(&trace);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            run.write_csv("trace.csv", &header, rows)?;
            run.write_json("trajectory.json", &trajectory(cfg, &trace))?;
        }
        runs.push(SeedKpis {
            seed: s,
            kpis: KpiSummary::from_trace(&trace)?,
        });
    }
    let col = |f: fn(&KpiSummary) -> f64| median(&runs.iter().map(|r| f(&r.kpis)).collect::<Vec<_>>());
    let report = EvalReport {
        policy: policy.name().to_string(),
        predictor: kind.name().to_string(),
        median_ergodic_age: col(|k| k.ergodic_age),
        median_accumulated_regret: col(|k| k.accumulated_regret),
        median_ergodic_power: col(|k| k.ergodic_power),
        runs,
    };
    run.write_json("kpi.json", &report)?;
    run.finish(cfg, start.elapsed().as_secs_f64())?;
    Ok(dir)
}

/// Random walk against the agents trained on genie, FA and LSTM observations,
/// median over the evaluation seeds with random walk as the baseline.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let dir = compare_dir(out);
    let mut run = RunDir::create(&dir, "compare")?;
    let tree = SeedTree::new(cfg.seed);
    let lstm = load_lstm(cfg, out, &mut run)?;
    let nets = [PredictorKind::Genie, PredictorKind::Fa, PredictorKind::Lstm]
        .into_iter()
        .map(|k| load_q_network(out, k, &mut run).map(|q| (k, q)))
        .collect::<Result<Vec<_>>>()?;
    let sweep = |p: &Policy<'_>, kind: PredictorKind| -> Result<Vec<KpiSummary>> {
        cfg.evaluation
            .seeds
            .iter()
            .map(|&s| KpiSummary::from_trace(&pipeline::evaluate(cfg, &tree, s, p, kind, Some(&lstm))?))
            .collect()
    };
    let mut runs = vec![("rw".to_string(), sweep(&Policy::RandomWalk, PredictorKind::Fa)?)];
    for (k, q) in &nets {
        runs.push((k.name().to_string(), sweep(&Policy::Trained(q), *k)?));
    }
    let table = compare_runs(&runs, "rw")?;
    let rows = table.rows.iter().map(|r| {
        let m = &r.aggregate.median;
        vec![
            r.aggregate.name.clone(),
            r.aggregate.seeds.to_string(),
            m.ergodic_age.to_string(),
            m.accumulated_regret.to_string(),
            m.ergodic_power.to_string(),
            m.accumulated_reward.to_string(),
            r.delta.ergodic_age.to_string(),
            r.delta.accumulated_regret.to_string(),
        ]
    });
    run.write_csv(
        "comparison.csv",
        &["policy", "seeds", "ergodic_age", "accumulated_regret", "ergodic_power", "accumulated_reward", "delta_age", "delta_regret"],
        rows,
    )?;
    run.write_json("comparison.json", &table)?;
    run.finish(cfg, start.elapsed().as_secs_f64())?;
    Ok(dir)
}
