//! Planar kinematic hexapod.
//!
//! A leg is in stance while its tibia is within `contact_fraction` of full
//! extension. Stance legs sweeping their coxa backward push the body forward
//! by `L * angle`; swing legs contribute nothing. No dynamics, no slip.

use serde::{Deserialize, Serialize};

use crate::cpg::N_LEGS;
use crate::decoder::JointConfig;
use crate::error::{CpgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Coxa moment arm, meters.
    pub coxa_effective_length: f64,
    pub contact_fraction: f64,
    /// Seconds per control tick.
    pub dt: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            coxa_effective_length: 0.1,
            contact_fraction: 0.05,
            dt: 0.01,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.coxa_effective_length > 0.0) {
            return Err(CpgError::InvalidParameter("coxa_effective_length must be > 0".into()));
        }
        if !(self.contact_fraction > 0.0 && self.contact_fraction < 1.0) {
            return Err(CpgError::InvalidParameter("contact_fraction must be in (0, 1)".into()));
        }
        if !(self.dt > 0.0) {
            return Err(CpgError::InvalidParameter("dt must be > 0".into()));
        }
        Ok(())
    }
}

/// The 12 servo angles, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegAngles {
    pub tibia: [f64; N_LEGS],
    pub coxa: [f64; N_LEGS],
}

impl LegAngles {
    pub fn uniform(tibia: f64, coxa: f64) -> Self {
        Self { tibia: [tibia; N_LEGS], coxa: [coxa; N_LEGS] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyState {
    pub x: f64,
    pub speed: f64,
    pub grounded: [bool; N_LEGS],
}

impl BodyState {
    pub fn n_grounded(&self) -> usize {
        self.grounded.iter().filter(|&&g| g).count()
    }
}

pub fn is_grounded(tibia_deg: f64, tibia: &JointConfig, params: &PlantParams) -> bool {
    tibia_deg <= tibia.theta_min + params.contact_fraction * tibia.delta_theta_max
}

/// One control tick of the plant.
pub fn update_plant(
    body: &BodyState,
    joints: &LegAngles,
    prev: &LegAngles,
    tibia: &JointConfig,
    params: &PlantParams,
) -> BodyState {
    let mut grounded = [false; N_LEGS];
    let mut sum = 0.0;
    let mut n = 0usize;
    for leg in 0..N_LEGS {
        grounded[leg] = is_grounded(joints.tibia[leg], tibia, params);
        if grounded[leg] {
            let dtheta = (joints.coxa[leg] - prev.coxa[leg]).to_radians();
            sum += -dtheta / params.dt * params.coxa_effective_length;
            n += 1;
        }
    }
    let speed = if n == 0 { 0.0 } else { sum / n as f64 };
    BodyState {
        x: body.x + speed * params.dt,
        speed,
        grounded,
    }
}

/// Mean instantaneous speed over the last `window_s` seconds of `speeds`.
pub fn average_speed(speeds: &[f64], dt: f64, window_s: f64) -> Result<f64> {
    let n = (window_s / dt).round() as usize;
    if n == 0 || speeds.is_empty() {
        return Err(CpgError::EmptyWindow(format!("{window_s} s window")));
    }
    if n > speeds.len() {
        return Err(CpgError::EmptyWindow(format!(
            "{window_s} s window exceeds {} s trace",
            speeds.len() as f64 * dt
        )));
    }
    let tail = &speeds[speeds.len() - n..];
    Ok(tail.iter().sum::<f64>() / n as f64)
}

/// Mean speed over ticks `[from, to)`.
pub fn mean_speed_between(speeds: &[f64], from: usize, to: usize) -> Result<f64> {
    let to = to.min(speeds.len());
    if from >= to {
        return Err(CpgError::EmptyWindow(format!("ticks [{from}, {to})")));
    }
    Ok(speeds[from..to].iter().sum::<f64>() / (to - from) as f64)
}
