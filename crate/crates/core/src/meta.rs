//! Outer search over the reward weights `(ζ1, ζ2)`.
//!
//! Every meta-step runs a complete inner training and evaluation and scores
//! it with `−Ā · R_c · P̄`. Two drivers are offered: an exhaustive sweep and
//! an ε-greedy meta-DQN whose single input is the number of devices.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::{argmax, dqn_update, q_network, Batch};
use crate::error::{Error, Result};
use crate::neural::{Adam, AdamConfig, Mlp};

/// `−(Ā · R_c · P̄)`.
pub fn meta_reward(avg_aoi: f64, acc_regret: f64, avg_power: f64) -> f64 {
    -(avg_aoi * acc_regret * avg_power)
}

/// Sign-preserving log compression used to train the meta-network on rewards spanning decades.
pub fn symlog(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaAction {
    pub zeta1: f64,
    pub zeta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerKpis {
    pub avg_aoi: f64,
    pub acc_regret: f64,
    pub avg_power: f64,
}

impl InnerKpis {
    pub fn meta_reward(&self) -> f64 {
        meta_reward(self.avg_aoi, self.acc_regret, self.avg_power)
    }
}

/// A full inner run for one weight pair.
pub trait InnerEvaluator {
    fn evaluate(&mut self, action: MetaAction, meta_step: usize) -> Result<InnerKpis>;
}

impl<F: FnMut(MetaAction, usize) -> Result<InnerKpis>> InnerEvaluator for F {
    fn evaluate(&mut self, action: MetaAction, meta_step: usize) -> Result<InnerKpis> {
        self(action, meta_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaMode {
    #[default]
    Sweep,
    Dqn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    pub mode: MetaMode,
    pub zeta1_grid: Vec<f64>,
    pub zeta2_grid: Vec<f64>,
    /// Meta-steps of the DQN driver; the first ones visit every grid point once.
    pub steps: usize,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub updates_per_step: usize,
    pub target_update: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            mode: MetaMode::Sweep,
            zeta1_grid: vec![0.0, 25.0, 50.0, 100.0],
            zeta2_grid: vec![0.0, 500.0, 1000.0],
            steps: 24,
            epsilon_start: 1.0,
            epsilon_decay: 0.9,
            epsilon_floor: 0.0,
            lr: 0.005,
            hidden: vec![32, 32],
            batch_size: 16,
            updates_per_step: 50,
            target_update: 10,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zeta1_grid.is_empty() || self.zeta2_grid.is_empty() {
            return Err(Error::Config("reward-weight grids must be nonempty".into()));
        }
        if self.zeta1_grid.iter().chain(&self.zeta2_grid).any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::Config("reward weights must be finite and non-negative".into()));
        }
        if self.steps == 0 || self.batch_size == 0 || self.target_update == 0 {
            return Err(Error::Config("meta steps, batch size and target period must be positive".into()));
        }
        Ok(())
    }

    /// Row-major joint grid, `ζ1` outer.
    pub fn grid(&self) -> Vec<MetaAction> {
        self.zeta1_grid
            .iter()
            .flat_map(|&zeta1| self.zeta2_grid.iter().map(move |&zeta2| MetaAction { zeta1, zeta2 }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub step: usize,
    pub devices: usize,
    pub action: MetaAction,
    pub kpis: Option<InnerKpis>,
    pub meta_reward: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaOutcome {
    /// Visited grid point with the highest mean meta reward.
    pub best: MetaAction,
    /// Greedy action of the meta-network (equal to `best` for the sweep).
    pub greedy: MetaAction,
    pub log: Vec<MetaRecord>,
}

fn run_one<E: InnerEvaluator>(eval: &mut E, action: MetaAction, step: usize, devices: usize) -> MetaRecord {
    match eval.evaluate(action, step) {
        Ok(k) => MetaRecord {
            step,
            devices,
            action,
            kpis: Some(k),
            meta_reward: Some(k.meta_reward()),
            error: None,
        },
        Err(e) => MetaRecord {
            step,
            devices,
            action,
            kpis: None,
            meta_reward: None,
            error: Some(e.to_string()),
        },
    }
}

/// Index of the grid point with the best mean observed reward; ties go to the lower index.
fn best_visited(grid: &[MetaAction], log: &[MetaRecord]) -> Result<usize> {
    let mut sums = vec![(0.0, 0usize); grid.len()];
    for r in log {
        if let Some(m) = r.meta_reward {
            let i = grid.iter().position(|a| *a == r.action).expect("logged action is on the grid");
            sums[i].0 += m;
            sums[i].1 += 1;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &(s, n)) in sums.iter().enumerate() {
        if n > 0 {
            let m = s / n as f64;
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Numerical("every inner run failed".into()))
}

/// Evaluates every grid point once, in grid order.
pub fn optimize_sweep<E: InnerEvaluator>(cfg: &MetaConfig, devices: usize, eval: &mut E) -> Result<MetaOutcome> {
    cfg.validate()?;
    let grid = cfg.grid();
    let log: Vec<MetaRecord> = grid.iter().enumerate().map(|(i, &a)| run_one(eval, a, i + 1, devices)).collect();
    let best = grid[best_visited(&grid, &log)?];
    Ok(MetaOutcome { best, greedy: best, log })
}

/// ε-greedy meta-DQN over the joint grid. Exploration draws uniformly among
/// the least-visited grid points; each meta-step is a one-step episode.
pub fn optimize_dqn<E: InnerEvaluator, R: Rng + ?Sized>(cfg: &MetaConfig, devices: usize, eval: &mut E, rng: &mut R) -> Result<MetaOutcome> {
    cfg.validate()?;
    let grid = cfg.grid();
    if grid.len() == 1 {
        let log = vec![run_one(eval, grid[0], 1, devices)];
        if let Some(e) = &log[0].error {
            return Err(Error::Numerical(format!("the only inner run failed: {e}")));
        }
        return Ok(MetaOutcome {
            best: grid[0],
            greedy: grid[0],
            log,
        });
    }
    let state = vec![devices as f32 / 10.0];
    let mut q: Mlp<f32> = q_network(1, grid.len(), &cfg.hidden, rng)?;
    let mut target = q.clone();
    let mut adam = Adam::new(&q, AdamConfig::with_lr(cfg.lr));
    let mut visits = vec![0usize; grid.len()];
    let mut memory: Vec<(usize, f32)> = Vec::new();
    let mut log = Vec::with_capacity(cfg.steps);
    let mut updates = 0usize;
    for step in 0..cfg.steps {
        let epsilon = (cfg.epsilon_start * cfg.epsilon_decay.powi(step as i32)).max(cfg.epsilon_floor);
        let explore = step < grid.len() || rng.random::<f64>() < epsilon;
        let a = if explore {
            let least = *visits.iter().min().expect("nonempty grid");
            let candidates: Vec<usize> = (0..grid.len()).filter(|&i| visits[i] == least).collect();
            candidates[rng.random_range(0..candidates.len())]
        } else {
            greedy_index(&q, &state)?
        };
        visits[a] += 1;
        let record = run_one(eval, grid[a], step + 1, devices);
        if let Some(m) = record.meta_reward {
            memory.push((a, symlog(m) as f32));
            for _ in 0..cfg.updates_per_step {
                let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..memory.len())).collect();
                let batch = Batch {
                    states: picks.iter().flat_map(|_| state.iter().copied()).collect(),
                    actions: picks.iter().map(|&i| memory[i].0).collect(),
                    rewards: picks.iter().map(|&i| memory[i].1).collect(),
                    next_states: picks.iter().flat_map(|_| state.iter().copied()).collect(),
                    terminals: vec![true; picks.len()],
                    spans: vec![1; picks.len()],
                    indices: picks,
                };
                dqn_update(&mut q, &target, &mut adam, &batch, 0.0, None)?;
                updates += 1;
                if updates.is_multiple_of(cfg.target_update) {
                    target = q.clone();
                }
            }
        }
        log.push(record);
    }
    let best = grid[best_visited(&grid, &log)?];
    let greedy = grid[greedy_index(&q, &state)?];
    Ok(MetaOutcome { best, greedy, log })
}

fn greedy_index(q: &Mlp<f32>, state: &[f32]) -> Result<usize> {
    let out = q.forward_batch(Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("one row").view())?;
    Ok(argmax(out.row(0)))
}
