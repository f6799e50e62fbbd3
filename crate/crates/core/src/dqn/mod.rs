//! Deep Q-learning over the grid world with experience replay and fixed
//! Q-targets, plus the baseline policies used for comparison.

mod agent;
mod observation;
mod policy;
mod replay;

pub use agent::{argmax, dqn_update, q_network, select_action, select_joint_action, td_targets, train, train_with_selection, AgentConfig, EpisodeEnd, EpisodeLog, TrainRngs, TrainedAgent};
pub use observation::{encode_observation, observation_len};
pub use policy::{run_policy, Policy, Trace};
pub use replay::{Batch, Experience, ReplayBuffer};
