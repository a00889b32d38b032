//! Multi-robot motion planning with an artificial potential field whose
//! repulsion and compactness scales are tuned online by a shared PPO policy.
//!
//! The pipeline per robot and step: sense ([`observation`]) → choose field
//! scales ([`ppo`]) → evaluate forces ([`apf`]) → escape local minima
//! ([`wall_following`]) → move at constant speed ([`sim`]).

pub mod apf;
pub mod error;
pub mod geometry;
pub mod neural;
pub mod observation;
pub mod ppo;
pub mod reward;
pub mod scenario;
pub mod sim;
pub mod training;
pub mod wall_following;

pub use error::{Error, Result};
pub use geometry::{Obstacle, RobotState, Status, Vec2, WorldParams};
