//! Independent oracles and harnesses shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashSet;

use aoi_core::env::{Env, EnvMode, GridPos, JointAction, Move, Propulsion, UavAction, WorldConfig};
use aoi_core::experiment::pipeline;
use aoi_core::experiment::{preset_config, ExperimentConfig};
use aoi_core::feed::PredictorKind;
use aoi_core::meta::{InnerKpis, MetaAction, MetaConfig};
use aoi_core::neural::{bce, bce_grad_logits, gradient_check, mse, mse_grad, Activation, GradCheckReport, LstmNetwork, Mlp};
use aoi_core::rng::{SeedTree, Stream};
use aoi_core::traffic::{ActivationModel, ActivationVector, EventChain};
use ndarray::Array2;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;

pub fn random_model<R: Rng>(events: usize, devices: usize, rng: &mut R) -> ActivationModel {
    let chains = (0..events)
        .map(|_| EventChain::new(rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)).unwrap())
        .collect();
    let influence = (0..devices).map(|_| (0..events).map(|_| rng.random_range(0.05..0.95)).collect()).collect();
    ActivationModel::new(chains, influence).unwrap()
}

fn emission(model: &ActivationModel, state: usize, obs: &ActivationVector) -> f64 {
    (0..model.devices())
        .map(|d| {
            let mut silent = 1.0;
            for k in 0..model.events() {
                if state >> k & 1 == 1 {
                    silent *= 1.0 - model.influence(d, k);
                }
            }
            let p = 1.0 - silent;
            if obs.0[d] {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

fn chain_step(c: &EventChain, from: bool, to: bool) -> f64 {
    let p_on = if from { 1.0 - c.eps_off() } else { c.eps_on() };
    if to {
        p_on
    } else {
        1.0 - p_on
    }
}

fn joint_step(model: &ActivationModel, from: usize, to: usize) -> f64 {
    (0..model.events()).map(|k| chain_step(model.chain(k), from >> k & 1 == 1, to >> k & 1 == 1)).product()
}

/// Posterior of the last hidden state by summing the joint probability of every
/// event path `S_0 … S_T`, with `S_0` drawn from the stationary law and slot `t`
/// observing `observations[t - 1]`.
pub fn path_sum_posterior(model: &ActivationModel, observations: &[ActivationVector]) -> Vec<f64> {
    let k = model.events();
    let n = 1usize << k;
    let mut posterior = vec![0.0; n];
    fn walk(model: &ActivationModel, obs: &[ActivationVector], state: usize, weight: f64, n: usize, out: &mut [f64]) {
        match obs.split_first() {
            None => out[state] += weight,
            Some((w, rest)) => {
                for next in 0..n {
                    let p = weight * joint_step(model, state, next) * emission(model, next, w);
                    walk(model, rest, next, p, n, out);
                }
            }
        }
    }
    for s0 in 0..n {
        let prior: f64 = (0..k)
            .map(|j| {
                let c = model.chain(j);
                let on = c.eps_on() / (c.eps_on() + c.eps_off());
                if s0 >> j & 1 == 1 {
                    on
                } else {
                    1.0 - on
                }
            })
            .product();
        walk(model, observations, s0, prior, n, &mut posterior);
    }
    let total: f64 = posterior.iter().sum();
    posterior.iter().map(|p| p / total).collect()
}

/// Fixed-point arithmetic on integers scaled by `10^60`.
struct Fixed {
    scale: BigUint,
}

impl Fixed {
    fn new() -> Self {
        Self {
            scale: BigUint::from(10u32).pow(60),
        }
    }

    fn lit(&self, x: f64) -> BigUint {
        let text = format!("{x:.20}");
        let (int, frac) = text.split_once('.').unwrap();
        let digits: BigUint = format!("{int}{frac}").parse().unwrap();
        digits * &self.scale / BigUint::from(10u32).pow(frac.len() as u32)
    }

    fn one(&self) -> BigUint {
        self.scale.clone()
    }

    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a * b / &self.scale
    }

    fn div(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a * &self.scale / b
    }

    fn sqrt(&self, a: &BigUint) -> BigUint {
        (a * &self.scale).sqrt()
    }

    fn to_f64(&self, a: &BigUint) -> f64 {
        let whole = (a / &self.scale).to_f64().unwrap();
        let frac = (a % &self.scale).to_f64().unwrap() / self.scale.to_f64().unwrap();
        whole + frac
    }
}

/// Propulsion power evaluated exactly as written, `(√(1+a) − √a)^{1/2}` included,
/// in 60-digit fixed point.
pub fn flight_power_oracle(v: f64, p: &Propulsion) -> (f64, f64) {
    let f = Fixed::new();
    let v = f.lit(v);
    let v2 = f.mul(&v, &v);
    let tip2 = f.mul(&f.lit(p.v_tip), &f.lit(p.v_tip));
    let blade = f.mul(&f.lit(p.p0), &(f.one() + f.div(&f.mul(&f.lit(3.0), &v2), &tip2)));
    let v0 = f.lit(p.v0);
    let v02 = f.mul(&v0, &v0);
    let a = f.div(&f.mul(&v2, &v2), &f.mul(&f.lit(4.0), &f.mul(&v02, &v02)));
    let sqrt_a = f.div(&v2, &f.mul(&f.lit(2.0), &v02));
    let inner = f.sqrt(&(f.one() + a)) - sqrt_a;
    let induced = f.mul(&f.lit(p.p1), &f.sqrt(&inner));
    let coef = f.mul(&f.mul(&f.lit(p.d0), &f.lit(p.rho)), &f.mul(&f.lit(p.mu0), &f.lit(p.z)));
    let parasite = f.mul(&f.mul(&f.lit(0.5), &coef), &f.mul(&v2, &v));
    (f.to_f64(&(blade + &induced + parasite)), f.to_f64(&induced))
}

/// Central-difference check of a tanh MLP with a sigmoid BCE head and of an identity-head MSE MLP.
pub fn mlp_gradcheck(seed: u64) -> GradCheckReport {
    let mut rng = SeedTree::new(seed).stream(Stream::Init);
    let net = Mlp::<f64>::new(&[6, 12, 9, 4], Activation::Tanh, Activation::Sigmoid, &mut rng).unwrap();
    let x = Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((5, 4), |_| f64::from(u8::from(rng.random::<bool>())));
    let cache = net.forward_cached(x.view()).unwrap();
    let dz = bce_grad_logits(cache.output().view(), y.view(), y.len());
    let (g, _) = net.backward_from_logits(&cache, dz.view());
    let a = gradient_check(&net, &g, |p: &Mlp<f64>| bce(p.forward_batch(x.view()).unwrap().view(), y.view()).unwrap(), 1e-5, 200, &mut rng);

    let reg = Mlp::<f64>::new(&[6, 10, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    let t = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let cache = reg.forward_cached(x.view()).unwrap();
    let d = mse_grad(cache.output().view(), t.view());
    let (g, _) = reg.backward(&cache, d.view());
    let b = gradient_check(&reg, &g, |p: &Mlp<f64>| mse(p.forward_batch(x.view()).unwrap().view(), t.view()).unwrap(), 1e-5, 200, &mut rng);
    if a.max_relative_error >= b.max_relative_error {
        a
    } else {
        b
    }
}

/// Central-difference check of a two-layer LSTM unrolled over five steps with a BCE loss at every step.
pub fn lstm_gradcheck(seed: u64) -> GradCheckReport {
    let mut rng = SeedTree::new(seed).stream(Stream::Init);
    let (inputs, outputs, steps, batch) = (3, 3, 5, 2);
    let net = LstmNetwork::<f64>::new(inputs, &[5, 4], outputs, Activation::Sigmoid, &mut rng).unwrap();
    let xs: Vec<Array2<f64>> = (0..steps).map(|_| Array2::from_shape_fn((batch, inputs), |_| rng.random_range(-1.0..1.0))).collect();
    let ys: Vec<Array2<f64>> = (0..steps).map(|_| Array2::from_shape_fn((batch, outputs), |_| f64::from(u8::from(rng.random::<bool>())))).collect();
    let loss = |p: &LstmNetwork<f64>| -> f64 {
        let fwd = p.forward(&xs).unwrap();
        fwd.outputs.iter().zip(&ys).map(|(o, y)| bce(o.view(), y.view()).unwrap()).sum()
    };
    let fwd = net.forward(&xs).unwrap();
    let d: Vec<Option<Array2<f64>>> = fwd.outputs.iter().zip(&ys).map(|(o, y)| Some(bce_grad_logits(o.view(), y.view(), y.len()))).collect();
    let g = net.backward_from_logits(&fwd, &d);
    gradient_check(&net, &g, loss, 1e-5, 300, &mut rng)
}

pub fn desk() -> ExperimentConfig {
    preset_config("desk").unwrap().resolve().unwrap()
}

/// Quanta to the nearest corner depot, recomputed from scratch.
pub fn manhattan_return_cost(p: GridPos, cfg: &WorldConfig) -> i64 {
    let m = cfg.grid_size as i64 - 1;
    let (x, y) = (p.x as i64, p.y as i64);
    let steps = [(0, 0), (m, 0), (0, m), (m, m)].iter().map(|&(cx, cy)| (x - cx).abs() + (y - cy).abs()).min().unwrap();
    10 * steps
}

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub steps: usize,
    pub episodes: usize,
    pub conflicts: usize,
}

/// Plays uniformly random joint actions and checks every slot record. Returns the
/// first violated invariant.
pub fn fuzz_env(cfg: &ExperimentConfig, mode: EnvMode, steps: usize, seed: u64) -> Result<FuzzStats, String> {
    let tree = SeedTree::new(seed);
    let feed = pipeline::feed(cfg, &tree, PredictorKind::Genie, None).map_err(|e| e.to_string())?;
    let w = cfg.world.clone();
    let mut env = Env::new(w.clone(), feed, mode).map_err(|e| e.to_string())?;
    let mut rng = tree.stream(Stream::Policy);
    let devices = env.devices();
    let mut stats = FuzzStats::default();
    let mut prev_energy: Vec<u32> = env.state().uavs.iter().map(|u| u.energy).collect();
    let mut prev_recharging = vec![false; w.uavs];
    for _ in 0..steps {
        let requested: Vec<UavAction> = (0..w.uavs)
            .map(|_| UavAction::from_index(rng.random_range(0..UavAction::space(devices)), devices).unwrap())
            .collect();
        let out = env.step(&JointAction(requested.clone())).map_err(|e| e.to_string())?;
        stats.steps += 1;
        let r = &out.record;
        for &a in &r.aoi {
            if a < 1 || a > w.aoi_cap {
                return Err(format!("slot {}: age {a} outside [1, {}]", r.slot, w.aoi_cap));
            }
        }
        let mut seen = HashSet::new();
        for s in r.schedule.iter().flatten() {
            if !seen.insert(*s) {
                return Err(format!("slot {}: device {s} granted twice", r.slot));
            }
        }
        let wanted: Vec<usize> = requested.iter().filter_map(|a| a.schedule).collect();
        if wanted.len() != wanted.iter().collect::<HashSet<_>>().len() {
            stats.conflicts += 1;
        }
        for u in 0..w.uavs {
            let p = r.positions[u];
            if p.x >= w.grid_size || p.y >= w.grid_size {
                return Err(format!("slot {}: UAV {u} left the grid at {p:?}", r.slot));
            }
            let expected = r.energy[u] as i64 - manhattan_return_cost(p, &w);
            if r.delta[u] != expected {
                return Err(format!("slot {}: UAV {u} delta {} but recomputed {expected}", r.slot, r.delta[u]));
            }
            let refilled = prev_recharging[u] && !r.recharging[u] && r.energy[u] == w.battery.quanta;
            if r.energy[u] > prev_energy[u] && !refilled {
                return Err(format!("slot {}: UAV {u} energy rose from {} to {}", r.slot, prev_energy[u], r.energy[u]));
            }
        }
        prev_energy = r.energy.clone();
        prev_recharging = r.recharging.clone();
        if out.terminal {
            stats.episodes += 1;
            env.reset().map_err(|e| e.to_string())?;
            prev_energy = env.state().uavs.iter().map(|u| u.energy).collect();
            prev_recharging = vec![false; w.uavs];
        }
    }
    Ok(stats)
}

/// Energy charged for one unscheduled move from a full battery, read off a one-slot run.
pub fn unscheduled_move_cost(cfg: &ExperimentConfig) -> u32 {
    let tree = SeedTree::new(1);
    let feed = pipeline::feed(cfg, &tree, PredictorKind::Genie, None).unwrap();
    let mut env = Env::new(cfg.world.clone(), feed, EnvMode::Training).unwrap();
    let before = env.state().uavs[0].energy;
    let moves: Vec<UavAction> = (0..cfg.world.uavs).map(|_| UavAction::idle(Move::North)).collect();
    let out = env.step(&JointAction(moves)).unwrap();
    let after = out.record.energy[0];
    assert_ne!(out.record.positions[0], GridPos::new(0, 0), "the probe UAV must actually move");
    before - after
}

/// Deterministic inner stubs for the reward-weight search. Stub `i` maps each
/// weight pair to KPIs whose product is smallest at a different grid point.
pub fn meta_stub(i: usize) -> impl FnMut(MetaAction, usize) -> aoi_core::Result<InnerKpis> {
    let cfg = MetaConfig::default();
    let grid = cfg.grid();
    let target = grid[(5 * i + 2) % grid.len()];
    let (s1, s2) = (100.0, 1000.0);
    move |a: MetaAction, _step: usize| {
        let d1 = (a.zeta1 - target.zeta1) / s1;
        let d2 = (a.zeta2 - target.zeta2) / s2;
        Ok(InnerKpis {
            avg_aoi: 4.0 + 3.0 * d1 * d1 + i as f64 * 0.1,
            acc_regret: 50.0 * (1.0 + 2.0 * d2 * d2),
            avg_power: 0.05 * (1.0 + (d1 + d2).abs()),
        })
    }
}

/// Grid point the stub was built around.
pub fn meta_stub_target(i: usize) -> MetaAction {
    let grid = MetaConfig::default().grid();
    grid[(5 * i + 2) % grid.len()]
}

/// Desk world with every stage shrunk to a few seconds of work.
pub fn tiny(out: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"preset = "desk"
output_dir = "{}"

[traffic]
history_slots = 600

[lstm]
window = 8
hidden = [8]
epochs = 2

[agent]
episodes = 6
hidden = [16]
select_every = 3
select_slots = 50

[evaluation]
slots = 80
seeds = [1, 2]

[meta]
zeta1_grid = [0.0, 25.0]
zeta2_grid = [0.0]
"#,
        out.display()
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

/// Runs every subcommand once, in dependency order.
pub fn run_all(cfg: &ExperimentConfig) -> aoi_core::Result<()> {
    use aoi_core::experiment::{self as x, PolicyKind};
    let out = cfg.output_dir.clone();
    x::generate_traffic(cfg, &out)?;
    x::train_predictor(cfg, &out, PredictorKind::Fa)?;
    x::train_predictor(cfg, &out, PredictorKind::Lstm)?;
    for kind in [PredictorKind::Genie, PredictorKind::Fa, PredictorKind::Lstm] {
        let c = ExperimentConfig { predictor: kind, ..cfg.clone() };
        x::train_dqn(&c, &out)?;
        x::evaluate(&c, &out, PolicyKind::Trained)?;
    }
    x::evaluate(cfg, &out, PolicyKind::RandomWalk)?;
    x::evaluate(cfg, &out, PolicyKind::Greedy)?;
    x::optimize_reward(cfg, &out)?;
    x::compare(cfg, &out)?;
    Ok(())
}

/// Every CSV and JSON file under `root`, keyed by relative path.
pub fn snapshot(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(base: &std::path::Path, dir: &std::path::Path, acc: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(base, &p, acc);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                acc.insert(p.strip_prefix(base).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = std::collections::BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}
