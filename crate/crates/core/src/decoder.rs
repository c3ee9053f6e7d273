//! Spike-count to joint-angle decoding.
//!
//! Every flexor spike moves a joint by `+delta_theta`, every extensor spike by
//! `-delta_theta`, with `delta_theta = delta_theta_max / tolerance`. Counts of
//! one batch are netted before clamping to the joint limits.

use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    /// Full range, degrees.
    pub delta_theta_max: f64,
    /// Spikes needed to traverse the full range.
    pub tolerance: u32,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl JointConfig {
    /// Joint spanning `[theta_min, theta_min + delta_theta_max]`.
    pub fn new(theta_min: f64, delta_theta_max: f64, tolerance: u32) -> Result<Self> {
        let cfg = Self {
            delta_theta_max,
            tolerance,
            theta_min,
            theta_max: theta_min + delta_theta_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tibia_default() -> Self {
        Self::new(0.0, 45.0, 15).expect("valid default")
    }

    pub fn coxa_default() -> Self {
        Self::new(-15.0, 30.0, 15).expect("valid default")
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance < 1 {
            return Err(CpgError::InvalidParameter("joint tolerance must be >= 1".into()));
        }
        if !(self.delta_theta_max > 0.0) {
            return Err(CpgError::InvalidParameter("joint range must be positive".into()));
        }
        let span = self.theta_max - self.theta_min;
        if (span - self.delta_theta_max).abs() > 1e-9 * self.delta_theta_max.abs().max(1.0) {
            return Err(CpgError::InvalidParameter(format!(
                "theta_max - theta_min = {span} but delta_theta_max = {}",
                self.delta_theta_max
            )));
        }
        Ok(())
    }

    /// Degrees per spike.
    pub fn delta_theta(&self) -> f64 {
        self.delta_theta_max / self.tolerance as f64
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.theta_min + self.theta_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub theta: f64,
}

/// `clamp(theta + (n_flexor - n_extensor) * delta_theta, theta_min, theta_max)`.
pub fn decode_step(state: JointState, n_flexor: u32, n_extensor: u32, cfg: &JointConfig) -> JointState {
    let net = n_flexor as i64 - n_extensor as i64;
    if net == 0 {
        return state;
    }
    // Multiply before dividing so `tolerance` spikes give exactly the range.
    let step = net as f64 * cfg.delta_theta_max / cfg.tolerance as f64;
    JointState {
        theta: (state.theta + step).clamp(cfg.theta_min, cfg.theta_max),
    }
}
