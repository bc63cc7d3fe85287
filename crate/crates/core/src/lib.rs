//! Curiosity-driven multi-agent reinforcement learning workbench.
//!
//! Groups of embodied agents learn from raw pixels rendered by a
//! deterministic software rasterizer. Each agent carries a world model
//! that turns its own prediction error into an intrinsic reward and an
//! actor-critic policy trained with PPO. The analysis layer measures
//! grouping with the nearest neighbor index and imprinting preference
//! with a two-alternative choice score, and the harness reproduces the
//! five canned experiments end to end.

pub mod actor_critic;
pub mod analysis;
pub mod checkpoint;
pub mod env;
pub mod harness;
pub mod networks;
pub mod nn;
pub mod ppo;
pub mod world_model;

#[cfg(test)]
pub(crate) mod test_oracles;
