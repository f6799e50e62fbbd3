//! Age-of-information minimization for UAV-served IoT networks.
//!
//! Devices wake up according to hidden Markov events ([`traffic`]). A forward-algorithm
//! filter ([`fa`]) or a recurrent network ([`lstm_predictor`]) forecasts next-slot
//! activity, and UAVs on a grid ([`env`]) learn where to fly and whom to grant with a
//! deep Q-network ([`dqn`]). Reward weights can be searched ([`meta`]), runs are
//! summarized by [`kpi`], and [`experiment`] wires the stages into reproducible runs.
//!
//! The numerical core is generic over the scalar type through [`scalar::Scalar`];
//! the aliases below fix the precisions used by the experiments.

pub mod dqn;
pub mod env;
pub mod error;
pub mod experiment;
pub mod fa;
pub mod feed;
pub mod kpi;
pub mod lstm_predictor;
pub mod meta;
pub mod neural;
pub mod rng;
pub mod scalar;
pub mod traffic;

pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use feed::PredictorKind;

/// Scalar of the filters, the environment and the KPIs.
pub type Real = f64;
/// Scalar of the neural networks.
pub type NetReal = f32;
/// Forward-algorithm belief in double precision.
pub type FaBelief = fa::Belief<Real>;
/// Streaming forward-algorithm predictor in double precision.
pub type Tracker = fa::FaTracker<Real>;
/// The Q-network shared by all UAVs.
pub type QNetwork = neural::Mlp<NetReal>;
/// The activity predictor network.
pub type LstmNet = neural::LstmNetwork<NetReal>;
