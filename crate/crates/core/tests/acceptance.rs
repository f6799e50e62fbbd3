//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the process fails if any criterion fails. Numeric arguments select a subset,
//! e.g. `cargo test --test acceptance -- 1 5 11`.

mod common;

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use aoi_core::dqn::{EpisodeLog, Policy};
use aoi_core::env::{EnvMode, Propulsion};
use aoi_core::experiment::{pipeline, preset_config, ExperimentConfig};
use aoi_core::kpi::{median, KpiSummary};
use aoi_core::lstm_predictor::{self, build_dataset, LstmConfig, TrainedLstm};
use aoi_core::meta::{optimize_dqn, optimize_sweep, MetaConfig};
use aoi_core::rng::{SeedTree, Stream};
use aoi_core::traffic::ActivationVector;
use aoi_core::PredictorKind;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const DESK_SEEDS: [u64; 3] = [1, 2, 3];

/// KPIs of one desk-scale seed for every policy, plus the LSTM-DRL training log.
struct DeskSeed {
    genie: KpiSummary,
    fa: KpiSummary,
    lstm: KpiSummary,
    rw: KpiSummary,
    lstm_log: Vec<EpisodeLog>,
}

struct Desk {
    seeds: Vec<DeskSeed>,
    seconds: f64,
}

fn desk_seed(seed: u64) -> DeskSeed {
    let cfg = ExperimentConfig { seed, ..common::desk() };
    let tree = SeedTree::new(seed);
    let eval_seed = cfg.evaluation.seeds[0];
    let lstm = pipeline::train_lstm(&cfg, &tree).unwrap();
    let run = |kind: PredictorKind, lstm: Option<&TrainedLstm>| {
        let agent = pipeline::train_agent(&cfg, &tree, kind, lstm).unwrap();
        let trace = pipeline::evaluate(&cfg, &tree, eval_seed, &Policy::Trained(&agent.q_net), kind, lstm).unwrap();
        (KpiSummary::from_trace(&trace).unwrap(), agent.log)
    };
    let (genie, _) = run(PredictorKind::Genie, None);
    let (fa, _) = run(PredictorKind::Fa, None);
    let (lstm_kpi, lstm_log) = run(PredictorKind::Lstm, Some(&lstm));
    let rw_trace = pipeline::evaluate(&cfg, &tree, eval_seed, &Policy::RandomWalk, PredictorKind::Fa, None).unwrap();
    DeskSeed {
        genie,
        fa,
        lstm: lstm_kpi,
        rw: KpiSummary::from_trace(&rw_trace).unwrap(),
        lstm_log,
    }
}

fn desk_runs() -> Desk {
    let start = Instant::now();
    let seeds = DESK_SEEDS.iter().map(|&s| desk_seed(s)).collect();
    Desk {
        seeds,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn c1_fa_exactness() -> Outcome {
    let mut filtering = 0.0;
    let mut rng = SeedTree::new(1).stream(Stream::Layout);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for events in 1..=3 {
        for devices in 1..=4 {
            for steps in [1, 4, 8] {
                let model = common::random_model(events, devices, &mut rng);
                let obs: Vec<ActivationVector> = (0..steps).map(|_| ActivationVector((0..devices).map(|_| rng.random::<bool>()).collect())).collect();
                let start = Instant::now();
                let mut b = aoi_core::FaBelief::stationary(&model).unwrap();
                for w in &obs {
                    b = b.forward_step(w, &model).unwrap();
                }
                filtering += start.elapsed().as_secs_f64();
                let oracle = common::path_sum_posterior(&model, &obs);
                worst = b.weights().iter().zip(&oracle).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
                cases += 1;
            }
        }
    }
    outcome(
        worst <= 1e-10 && filtering < 1.0,
        format!("{cases} cases, max abs error {worst:.2e}, forward algorithm {filtering:.4} s in total"),
    )
}

/// First slot below the threshold within the first 20, and whether the next 200 stay below.
fn convergence(curve: &[f64]) -> (Option<usize>, bool) {
    let Some(t0) = curve.iter().take(20).position(|&m| m < 0.01) else {
        return (None, false);
    };
    (Some(t0), curve.len() >= t0 + 201 && curve[t0..=t0 + 200].iter().all(|&m| m < 0.01))
}

fn c2_fa_convergence() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for preset in ["markov-d7", "markov-d10"] {
        let mut cfg = preset_config(preset).unwrap().resolve().unwrap();
        cfg.traffic.history_slots = 300;
        let curves: Vec<Vec<f64>> = (1..=5)
            .map(|seed| {
                let slots = pipeline::history(&cfg, &SeedTree::new(seed)).unwrap();
                let (pred, truth) = pipeline::fa_forecasts(&cfg, &slots).unwrap();
                pred.iter()
                    .zip(&truth)
                    .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64)
                    .collect()
            })
            .collect();
        let med: Vec<f64> = (0..curves[0].len()).map(|t| median(&curves.iter().map(|c| c[t]).collect::<Vec<_>>())).collect();
        let (t0, held) = convergence(&med);
        pass &= held;
        let peak = t0.map_or(f64::NAN, |t| med[t..=t + 200].iter().copied().fold(0.0, f64::max));
        detail.push(format!("{preset}: below 0.01 from slot {t0:?}, max over next 200 {peak:.4}"));
    }
    outcome(pass, detail.join("; "))
}

fn c3_lstm_quality() -> Outcome {
    let start = Instant::now();
    let cfg = preset_config("default").unwrap().resolve().unwrap();
    assert_eq!(cfg.traffic.history_slots, 10_000);
    let trained = pipeline::train_lstm(&cfg, &SeedTree::new(cfg.seed)).unwrap();
    let acc = trained.val_accuracy[trained.best_epoch - 1];

    let alternating: Vec<ActivationVector> = (0..600).map(|t| ActivationVector(vec![t % 2 == 0, t % 2 == 1, t % 2 == 0])).collect();
    let ds = build_dataset(&alternating, 8, 0.8).unwrap();
    let pcfg = LstmConfig {
        window: 8,
        hidden: vec![16],
        epochs: 20,
        early_stopping_patience: None,
        ..LstmConfig::default()
    };
    let tree = SeedTree::new(5);
    let periodic = lstm_predictor::train(&ds, &pcfg, 5, &mut tree.stream(Stream::Init), &mut tree.stream(Stream::Dataset)).unwrap();
    let first_perfect = periodic.val_accuracy.iter().position(|&a| a == 1.0).map(|e| e + 1);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        acc >= 0.85 && first_perfect.is_some_and(|e| e <= 20) && secs < 300.0,
        format!("default validation accuracy {acc:.4}, period-2 perfect at epoch {first_perfect:?}, {secs:.1} s"),
    )
}

fn c4_gradients() -> Outcome {
    let dense: Vec<f64> = (1..=5).map(|s| common::mlp_gradcheck(s).max_relative_error).collect();
    let lstm: Vec<f64> = (1..=5).map(|s| common::lstm_gradcheck(s).max_relative_error).collect();
    let worst = dense.iter().chain(&lstm).copied().fold(0.0, f64::max);
    outcome(worst < 1e-4, format!("worst relative error dense {:.2e}, lstm {:.2e}", dense.iter().copied().fold(0.0, f64::max), lstm.iter().copied().fold(0.0, f64::max)))
}

fn c5_flight_power() -> Outcome {
    let p = Propulsion::default();
    let (hover, _) = common::flight_power_oracle(0.0, &p);
    let (cruise, induced) = common::flight_power_oracle(25.0, &p);
    let stable = (aoi_core::env::flight_power(0.0_f64, &p), aoi_core::env::flight_power(25.0_f64, &p));
    let naive = aoi_core::env::induced_power_naive(25.0_f64, &p);
    let pass = (hover - 219.82).abs() <= 0.01
        && (cruise - 112.9).abs() <= 0.1
        && (stable.0 - hover).abs() < 1e-9
        && (stable.1 - cruise).abs() < 1e-9
        && (naive - induced).abs() > 0.1 * induced;
    outcome(pass, format!("oracle fp(0) {hover:.4} W, fp(25) {cruise:.4} W; stable {:.4}/{:.4}; naive induced {naive:.6} vs {induced:.6}", stable.0, stable.1))
}

fn c6_energy() -> Outcome {
    let cfg = common::desk();
    let cost = common::unscheduled_move_cost(&cfg);
    let fuzz = common::fuzz_env(&cfg, EnvMode::Evaluation, 1000, 6);
    outcome(cost == 10 && fuzz.is_ok(), format!("move cost {cost} quanta, 1000-slot headroom check {:?}", fuzz.map(|s| s.steps)))
}

fn c7_invariants() -> Outcome {
    let cfg = common::desk();
    let train = common::fuzz_env(&cfg, EnvMode::Training, 100_000, 7);
    let eval = common::fuzz_env(&cfg, EnvMode::Evaluation, 100_000, 8);
    let detail = format!(
        "training {:?}, evaluation {:?}",
        train.as_ref().map(|s| (s.steps, s.episodes, s.conflicts)),
        eval.as_ref().map(|s| (s.steps, s.episodes, s.conflicts))
    );
    outcome(train.is_ok() && eval.is_ok(), detail)
}

fn c8_learning_beats_rw(desk: &Desk) -> Outcome {
    let med = |f: &dyn Fn(&DeskSeed) -> f64| median(&desk.seeds.iter().map(f).collect::<Vec<_>>());
    let age = [med(&|s| s.genie.ergodic_age), med(&|s| s.fa.ergodic_age), med(&|s| s.lstm.ergodic_age), med(&|s| s.rw.ergodic_age)];
    let reg = [
        med(&|s| s.genie.accumulated_regret),
        med(&|s| s.fa.accumulated_regret),
        med(&|s| s.lstm.accumulated_regret),
        med(&|s| s.rw.accumulated_regret),
    ];
    let beats_rw = age[1] < age[3] && age[2] < age[3] && reg[1] < reg[3] && reg[2] < reg[3];
    let genie_best = reg[0] <= reg[1] && reg[0] <= reg[2];
    outcome(
        beats_rw && genie_best && desk.seconds < 1800.0,
        format!(
            "median age genie {:.3} fa {:.3} lstm {:.3} rw {:.3}; regret genie {} fa {} lstm {} rw {}; {:.0} s",
            age[0], age[1], age[2], age[3], reg[0], reg[1], reg[2], reg[3], desk.seconds
        ),
    )
}

/// Mean reward of the first and the last 200 episodes.
fn smoothed_ends(log: &[EpisodeLog]) -> (f64, f64) {
    let w = 200.min(log.len());
    let mean = |s: &[EpisodeLog]| s.iter().map(|e| e.reward).sum::<f64>() / s.len() as f64;
    (mean(&log[..w]), mean(&log[log.len() - w..]))
}

fn c9_reward_trend(desk: &Desk) -> Outcome {
    let ratios: Vec<f64> = desk
        .seeds
        .iter()
        .map(|s| {
            let (first, last) = smoothed_ends(&s.lstm_log);
            first / last
        })
        .collect();
    let (first, last) = smoothed_ends(&desk.seeds[0].lstm_log);
    let ratio = median(&ratios);
    outcome(ratio >= 3.0, format!("first/final smoothed reward ratio per seed {ratios:.2?} (median {ratio:.2}); seed 1: {first:.1} -> {last:.1}"))
}

/// Whether `values` is non-increasing except for at most one adjacent rise of at most 5 %.
fn nearly_non_increasing(values: &[f64]) -> bool {
    let rises: Vec<f64> = values.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[1] - w[0]) / w[0]).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.05)
}

fn c10_zeta_sweep() -> Outcome {
    let start = Instant::now();
    let grid = [0.0, 25.0, 50.0, 100.0];
    let mut age = Vec::new();
    let mut power = Vec::new();
    for &zeta1 in &grid {
        let mut a = Vec::new();
        let mut p = Vec::new();
        for seed in DESK_SEEDS {
            let mut cfg = ExperimentConfig { seed, ..common::desk() };
            cfg.world.zeta1 = zeta1;
            cfg.world.zeta2 = 0.0;
            let tree = SeedTree::new(seed);
            let agent = pipeline::train_agent(&cfg, &tree, PredictorKind::Fa, None).unwrap();
            let trace = pipeline::evaluate(&cfg, &tree, cfg.evaluation.seeds[0], &Policy::Trained(&agent.q_net), PredictorKind::Fa, None).unwrap();
            let k = KpiSummary::from_trace(&trace).unwrap();
            a.push(k.ergodic_age);
            p.push(k.ergodic_power);
        }
        age.push(median(&a));
        power.push(median(&p));
    }
    let power_ok = nearly_non_increasing(&power);
    let later_min = age[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let age_ok = age[0] <= later_min || (age[0] <= age[1] * 1.05 && age[0] <= age[2..].iter().copied().fold(f64::INFINITY, f64::min));
    outcome(
        power_ok && age_ok,
        format!("zeta1 {grid:?} at zeta2 0: median power {power:.4?}, median age {age:.3?}; {:.0} s", start.elapsed().as_secs_f64()),
    )
}

fn c11_meta_stubs() -> Outcome {
    let cfg = MetaConfig::default();
    let mut agree = 0;
    let mut detail = Vec::new();
    for i in 0..5 {
        let sweep = optimize_sweep(&cfg, 5, &mut common::meta_stub(i)).unwrap();
        let dqn = optimize_dqn(&cfg, 5, &mut common::meta_stub(i), &mut SeedTree::new(i as u64).stream(Stream::Meta)).unwrap();
        if dqn.greedy == sweep.best && dqn.best == sweep.best {
            agree += 1;
        }
        detail.push(format!("({}, {})", sweep.best.zeta1, sweep.best.zeta2));
    }
    outcome(agree == 5, format!("{agree}/5 stubs agree; sweep optima {}", detail.join(" ")))
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path());
    common::run_all(&cfg).unwrap();
    let first = common::snapshot(dir.path());
    common::run_all(&cfg).unwrap();
    let second = common::snapshot(dir.path());
    let differing: Vec<&String> = first.iter().filter(|(k, v)| second.get(*k) != Some(v)).map(|(k, _)| k).collect();
    let pass = differing.is_empty() && first.len() == second.len();
    outcome(pass, format!("{} CSV/JSON files across all subcommands, {} differ {:?}", first.len(), differing.len(), differing))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let desk: OnceCell<Desk> = OnceCell::new();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "forward algorithm equals the path-sum oracle", Box::new(c1_fa_exactness)),
        (2, "forward-algorithm forecast converges", Box::new(c2_fa_convergence)),
        (3, "LSTM predictor quality", Box::new(c3_lstm_quality)),
        (4, "gradient checks", Box::new(c4_gradients)),
        (5, "flight-power numerics", Box::new(c5_flight_power)),
        (6, "energy accounting", Box::new(c6_energy)),
        (7, "environment invariants", Box::new(c7_invariants)),
        (8, "learning beats random walk", Box::new(|| c8_learning_beats_rw(desk.get_or_init(desk_runs)))),
        (9, "LSTM-DRL reward trend", Box::new(|| c9_reward_trend(desk.get_or_init(desk_runs)))),
        (10, "reward-weight sweep trends", Box::new(c10_zeta_sweep)),
        (11, "meta-optimizer agrees with the sweep", Box::new(c11_meta_stubs)),
        (12, "byte-identical reruns", Box::new(c12_determinism)),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in &criteria {
        if !wanted(*n) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!("criterion {n:>2} {}: {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed.push(*n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
