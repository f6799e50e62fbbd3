use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::AgentConfig;
use crate::env::{GridPos, WorldConfig};
use crate::error::{Error, Result};
use crate::fa::PredictMode;
use crate::feed::PredictorKind;
use crate::lstm_predictor::LstmConfig;
use crate::meta::MetaConfig;
use crate::rng::{SeedTree, Stream};
use crate::traffic::{ActivationModel, EventChain};

/// Parameter ranges for a randomly drawn activation model.
///
/// Device `d` is driven mainly by event `d mod K` with an influence drawn from
/// `primary`; with probability `secondary_prob` it also reacts weakly to each other event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub events: usize,
    pub devices: usize,
    pub seed: u64,
    pub eps_on: [f64; 2],
    pub eps_off: [f64; 2],
    pub primary: [f64; 2],
    #[serde(default)]
    pub secondary: [f64; 2],
    #[serde(default)]
    pub secondary_prob: f64,
    /// The first `events` chains of a high-activity region and their ranges.
    #[serde(default)]
    pub hot: Option<HotSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotSpec {
    pub events: usize,
    pub eps_on: [f64; 2],
    pub eps_off: [f64; 2],
    pub primary: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Explicit { chains: Vec<EventChain>, influence: Vec<Vec<f64>> },
    Generated(GeneratorSpec),
}

/// Where devices sit on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Distinct random cells drawn from the scenario seed.
    #[default]
    Random,
    /// Devices of high-activity events on the two bottom rows, the rest elsewhere.
    HotBottom,
    /// As given in `world.device_locations`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub layout_seed: u64,
}

fn draw<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

impl GeneratorSpec {
    pub fn primary_event(&self, device: usize) -> usize {
        device % self.events
    }

    pub fn is_hot(&self, event: usize) -> bool {
        self.hot.as_ref().is_some_and(|h| event < h.events)
    }

    pub fn build(&self) -> Result<ActivationModel> {
        if self.events == 0 || self.devices == 0 {
            return Err(Error::Config("generator needs at least one event and one device".into()));
        }
        let mut rng = SeedTree::new(self.seed).stream(Stream::Layout);
        let chains = (0..self.events)
            .map(|k| {
                let (on, off) = match &self.hot {
                    Some(h) if k < h.events => (h.eps_on, h.eps_off),
                    _ => (self.eps_on, self.eps_off),
                };
                EventChain::new(draw(on, &mut rng), draw(off, &mut rng))
            })
            .collect::<Result<Vec<_>>>()?;
        let influence = (0..self.devices)
            .map(|d| {
                (0..self.events)
                    .map(|k| {
                        if k == self.primary_event(d) {
                            match &self.hot {
                                Some(h) if k < h.events => draw(h.primary, &mut rng),
                                _ => draw(self.primary, &mut rng),
                            }
                        } else if rng.random::<f64>() < self.secondary_prob {
                            draw(self.secondary, &mut rng)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        ActivationModel::new(chains, influence)
    }
}

impl ScenarioConfig {
    pub fn model(&self) -> Result<ActivationModel> {
        match &self.model {
            ModelSpec::Explicit { chains, influence } => ActivationModel::new(chains.clone(), influence.clone()),
            ModelSpec::Generated(g) => g.build(),
        }
    }

    /// Device cells for this scenario on `world`'s grid.
    pub fn device_locations(&self, world: &WorldConfig) -> Result<Vec<GridPos>> {
        let devices = self.model()?.devices();
        let n = world.grid_size;
        let mut rng = SeedTree::new(self.layout_seed).stream(Stream::Layout);
        let all: Vec<GridPos> = (0..n).flat_map(|y| (0..n).map(move |x| GridPos::new(x, y))).collect();
        match self.layout {
            Layout::Explicit => {
                if world.device_locations.len() != devices {
                    return Err(Error::Config(format!(
                        "explicit layout lists {} device locations for {devices} devices",
                        world.device_locations.len()
                    )));
                }
                Ok(world.device_locations.clone())
            }
            Layout::Random => {
                if devices > all.len() {
                    return Err(Error::Config(format!("{devices} devices do not fit on a {n}x{n} grid")));
                }
                let mut cells = all;
                cells.shuffle(&mut rng);
                cells.truncate(devices);
                Ok(cells)
            }
            Layout::HotBottom => {
                let ModelSpec::Generated(g) = &self.model else {
                    return Err(Error::Config("the hot-bottom layout needs a generated model".into()));
                };
                let (mut bottom, mut rest): (Vec<GridPos>, Vec<GridPos>) = all.into_iter().partition(|p| p.y < 2);
                bottom.shuffle(&mut rng);
                rest.shuffle(&mut rng);
                (0..devices)
                    .map(|d| {
                        let pool = if g.is_hot(g.primary_event(d)) { &mut bottom } else { &mut rest };
                        pool.pop().ok_or_else(|| Error::Config("not enough cells for the hot-bottom layout".into()))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficRunConfig {
    /// Slots written by `generate-traffic` and used to train the LSTM.
    pub history_slots: usize,
    /// Unscored slots played before the first decision.
    pub warmup: usize,
    /// Slots generated (and predicted) per batch.
    pub feed_block: usize,
}

impl Default for TrafficRunConfig {
    fn default() -> Self {
        Self {
            history_slots: 10_000,
            warmup: 64,
            feed_block: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub slots: usize,
    /// Independent seeds for evaluation and comparison runs.
    pub seeds: Vec<u64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            slots: 1000,
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub predictor: PredictorKind,
    #[serde(default)]
    pub fa_mode: PredictMode,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub lstm: LstmConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default)]
    pub traffic: TrafficRunConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    /// Checks every section and fills in device locations from the layout.
    pub fn resolve(mut self) -> Result<Self> {
        let model = self.scenario.model()?;
        self.world.device_locations = self.scenario.device_locations(&self.world)?;
        self.world.validate()?;
        self.lstm.validate()?;
        self.agent.validate()?;
        self.meta.validate()?;
        if model.events() > crate::fa::DEFAULT_MAX_EVENTS {
            return Err(Error::Config(format!(
                "{} events exceed the forward-algorithm limit of {}",
                model.events(),
                crate::fa::DEFAULT_MAX_EVENTS
            )));
        }
        if self.evaluation.slots == 0 || self.evaluation.seeds.is_empty() {
            return Err(Error::Config("evaluation needs a positive horizon and at least one seed".into()));
        }
        if self.traffic.feed_block == 0 {
            return Err(Error::Config("feed block must be positive".into()));
        }
        Ok(self)
    }

    pub fn model(&self) -> Result<ActivationModel> {
        self.scenario.model()
    }

    /// Parses a TOML document. A top-level `preset = "name"` starts from that
    /// preset and overrides it key by key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_preset(text, None)
    }

    /// As [`Self::from_toml_str`], with `preset` taking the place of any preset the document names.
    pub fn from_toml_with_preset(text: &str, preset: Option<&str>) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let table = value.as_table_mut().ok_or_else(|| Error::Config("config must be a table".into()))?;
        if let Some(p) = preset {
            table.insert("preset".into(), toml::Value::String(p.to_string()));
        }
        if let Some(preset) = table.remove("preset") {
            let name = preset.as_str().ok_or_else(|| Error::Config("preset must be a string".into()))?;
            let base = toml::Value::try_from(preset_config(name)?).map_err(|e| Error::Config(e.to_string()))?;
            value = merge(base, value);
        }
        let cfg: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve()
    }

    /// A config file, a preset, or a file layered over a preset. With neither, the default preset.
    pub fn from_sources(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let preset = preset.or(if path.is_none() { Some("default") } else { None });
        Self::from_toml_with_preset(&text, preset)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

fn merge(base: toml::Value, over: toml::Value) -> toml::Value {
    match (base, over) {
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}

pub const PRESETS: [&str; 6] = ["default", "markov-d7", "markov-d10", "desk", "high-activity", "full-scale"];

fn markov(devices: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        events: 3,
        devices,
        seed,
        eps_on: [0.004, 0.008],
        eps_off: [0.008, 0.015],
        primary: [0.85, 0.98],
        secondary: [0.02, 0.1],
        secondary_prob: 0.2,
        hot: None,
    }
}

fn base(name: &str, model: GeneratorSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seed: 1,
        output_dir: PathBuf::from("runs"),
        predictor: PredictorKind::Fa,
        fa_mode: PredictMode::Map,
        scenario: ScenarioConfig {
            model: ModelSpec::Generated(model),
            layout: Layout::Random,
            layout_seed: 11,
        },
        world: WorldConfig::default(),
        lstm: LstmConfig::default(),
        agent: AgentConfig::default(),
        meta: MetaConfig::default(),
        traffic: TrafficRunConfig::default(),
        evaluation: EvaluationConfig::default(),
    }
}

/// A named, fully specified configuration.
pub fn preset_config(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "default" | "markov-d10" => base(name, markov(10, 10)),
        "markov-d7" => base(name, markov(7, 7)),
        "desk" => {
            let mut c = base(
                name,
                GeneratorSpec {
                    events: 3,
                    devices: 5,
                    seed: 5,
                    eps_on: [0.002, 0.004],
                    eps_off: [0.05, 0.1],
                    primary: [0.95, 0.99],
                    secondary: [0.05, 0.2],
                    secondary_prob: 0.0,
                    hot: None,
                },
            );
            c.world.grid_size = 6;
            c.world.uavs = 2;
            c.world.zeta1 = 25.0;
            c.world.zeta2 = 500.0;
            c.agent.episodes = 2000;
            c.agent.huber_delta = Some(0.5);
            c.agent.select_every = 100;
            c.agent.select_slots = 2000;
            c.evaluation.slots = 5000;
            c.lstm.window = 16;
            c
        }
        "high-activity" => {
            let mut g = markov(10, 12);
            g.events = 4;
            g.hot = Some(HotSpec {
                events: 1,
                eps_on: [0.02, 0.03],
                eps_off: [0.005, 0.01],
                primary: [0.95, 0.99],
            });
            let mut c = base(name, g);
            c.scenario.layout = Layout::HotBottom;
            c
        }
        "full-scale" => {
            let mut c = base(name, markov(10, 10));
            c.agent.episodes = 50_000;
            c
        }
        other => {
            return Err(Error::Config(format!("unknown preset {other:?}; known presets: {}", PRESETS.join(", "))));
        }
    };
    cfg.resolve()
}
