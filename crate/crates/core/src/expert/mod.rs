//! Demonstration sources: the scripted expert and teleoperation feedback.

pub mod scripted;
pub mod teleop;

pub use scripted::{
    attempt_seed, expert_action, expert_mean_steps, expert_step_cap, pursuit_target, record_demos,
    DemoAttempt, ExpertController, ExpertGains, PursuitTarget,
};
pub use teleop::{manipulability, sample_w_max, singularity_alert, w_max, ALERT_RATIO};
