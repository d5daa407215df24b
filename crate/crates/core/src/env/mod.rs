//! Per-agent search environment: state encoding, actions, rewards,
//! termination, replay and the actor-critic learner.

pub mod episode;
pub mod replay;
pub mod reward;
pub mod state;
pub mod td3;

pub use episode::{run_episode, ClusteringOracle, EpisodeSetup, EpisodeTrace, Evaluation, RoundRecord, StepRecord};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{check_termination, episode_rewards, labeled_nmi, RewardConfig, StopReason};
pub use state::{apply_action, Action, Bounds, ClampFlags, Encoder, GlobalState, StepSizes};
pub use td3::{Td3, Td3Config};
