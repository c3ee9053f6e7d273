//! Experiment configuration: a TOML document holding named neuron profiles,
//! CPG weights, joint and plant parameters, the bridge setup, named stimulus
//! profiles, seeds and per-command settings.
//!
//! [`DEFAULT_CONFIG`] is the complete default shipped with the crate; every
//! field is documented there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeConfig, JointSet, LoopMode};
use crate::bursting::BurstingNeuronParams;
use crate::cpg::RoutingWeights;
use crate::decoder::JointConfig;
use crate::engine::{
    build_network, ChildLink, ChildSignal, CompartmentId, CompartmentSpec, JoinRule, Network, SynapseSpec,
};
use crate::error::{CpgError, Result};
use crate::plant::PlantParams;
use crate::stimulus::RateProfile;

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base RNG seed for all stimuli.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub profiles: BTreeMap<String, BurstingNeuronParams>,
    pub cpg: CpgSection,
    pub joints: JointsSection,
    pub plant: PlantParams,
    pub bridge: BridgeConfig,
    /// Named piecewise-constant rate profiles, `[[duration_ms, rate_hz], ...]`.
    pub stimuli: BTreeMap<String, Vec<(u32, f64)>>,
    #[serde(default)]
    pub networks: BTreeMap<String, NetworkDef>,
    pub burst_trace: BurstTraceSection,
    pub gait: GaitSection,
    pub speed_dynamic: SpeedDynamicSection,
    pub speed_sweep: SpeedSweepSection,
    pub rtf: RtfSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpgSection {
    pub triplet_profile: String,
    pub tibia_profile: String,
    pub weights: RoutingWeights,
}

/// A joint given by its lower limit, range and spike tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDef {
    pub theta_min: f64,
    pub delta_theta_max: f64,
    pub tolerance: u32,
}

impl JointDef {
    pub fn to_joint(&self) -> Result<JointConfig> {
        JointConfig::new(self.theta_min, self.delta_theta_max, self.tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointsSection {
    pub tibia: JointDef,
    pub coxa: JointDef,
}

/// One compartment of a hand-written network. Omitted fields take the
/// values of a resetting spiking LIF neuron with no bias and no children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentDef {
    pub id: u32,
    pub dec_u: i32,
    pub dec_v: i32,
    pub threshold: i32,
    #[serde(default = "yes")]
    pub spiking: bool,
    #[serde(default)]
    pub bias: i32,
    #[serde(default = "join_none")]
    pub join: JoinRule,
    /// `[[child_id, "Voltage" | "Flag"], ...]`
    #[serde(default)]
    pub children: Vec<(u32, ChildSignal)>,
    pub reset_on_spike: Option<bool>,
}

fn yes() -> bool {
    true
}

fn join_none() -> JoinRule {
    JoinRule::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDef {
    pub compartments: Vec<CompartmentDef>,
    /// `[[src, dst, weight], ...]`
    #[serde(default)]
    pub synapses: Vec<(u32, u32, i32)>,
    /// Where sensory spikes land: `[[dst, weight], ...]`.
    #[serde(default)]
    pub inputs: Vec<(u32, i32)>,
}

impl NetworkDef {
    pub fn build(&self) -> Result<Network> {
        let comps = self
            .compartments
            .iter()
            .map(|c| CompartmentSpec {
                id: CompartmentId(c.id),
                dec_u: c.dec_u,
                dec_v: c.dec_v,
                threshold: c.threshold,
                spiking: c.spiking,
                bias: c.bias,
                join: c.join,
                children: c
                    .children
                    .iter()
                    .map(|&(id, signal)| ChildLink { id: CompartmentId(id), signal })
                    .collect(),
                reset_on_spike: c.reset_on_spike.unwrap_or(c.spiking),
            })
            .collect();
        let syns = self
            .synapses
            .iter()
            .map(|&(s, d, w)| SynapseSpec::new(CompartmentId(s), CompartmentId(d), w))
            .collect();
        build_network(comps, syns)
    }

    pub fn input_port(&self) -> Vec<(CompartmentId, i32)> {
        self.inputs.iter().map(|&(d, w)| (CompartmentId(d), w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstTraceSection {
    /// Neuron profile to trace; ignored when `network` is set.
    pub profile: String,
    /// Optional entry of `[networks]` to trace instead of a bursting neuron.
    pub network: Option<String>,
    pub stimulus: String,
    pub n_steps: usize,
    /// Compartments written to the trace when `network` is set (default: all).
    #[serde(default)]
    pub probes: Vec<u32>,
    pub gap_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSection {
    pub rate_hz: f64,
    pub duration_s: f64,
    /// Gait cycles starting before this time are skipped.
    pub transient_s: f64,
    pub gap_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedDynamicSection {
    pub stimulus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSweepSection {
    pub rates_hz: Vec<f64>,
    pub trials: u32,
    pub duration_s: f64,
    /// Trailing window over which each trial's average speed is taken.
    pub window_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Sequential,
    Threaded,
}

impl From<ModeName> for LoopMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Sequential => LoopMode::Sequential,
            ModeName::Threaded => LoopMode::Threaded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtfSection {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub mode: ModeName,
    /// Optional file that receives every EpochFrame in wire format.
    pub frame_stream: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("shipped default config is valid")
    }
}

fn cfg_err(msg: impl Into<String>) -> CpgError {
    CpgError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CpgError::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn profile(&self, name: &str) -> Result<&BurstingNeuronParams> {
        self.profiles.get(name).ok_or_else(|| {
            cfg_err(format!(
                "unknown neuron profile '{name}'; defined profiles: {}",
                self.profiles.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    /// The named stimulus as a rate profile seeded with `self.seed`.
    pub fn stimulus(&self, name: &str) -> Result<RateProfile> {
        let segs = self.stimuli.get(name).ok_or_else(|| {
            cfg_err(format!(
                "unknown stimulus '{name}'; defined stimuli: {}",
                self.stimuli.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(RateProfile::new(segs, self.seed))
    }

    pub fn network(&self, name: &str) -> Result<&NetworkDef> {
        self.networks
            .get(name)
            .ok_or_else(|| cfg_err(format!("unknown network '{name}' in [networks]")))
    }

    pub fn joint_set(&self) -> Result<JointSet> {
        Ok(JointSet {
            tibia: self.joints.tibia.to_joint().map_err(|e| cfg_err(format!("[joints.tibia] {e}")))?,
            coxa: self.joints.coxa.to_joint().map_err(|e| cfg_err(format!("[joints.coxa] {e}")))?,
        })
    }

    /// Checks every cross-reference and parameter range.
    pub fn validate(&self) -> Result<()> {
        for (name, p) in &self.profiles {
            p.validate().map_err(|e| cfg_err(format!("[profiles.{name}] {e}")))?;
        }
        self.profile(&self.cpg.triplet_profile)
            .map_err(|e| cfg_err(format!("[cpg] triplet_profile: {e}")))?;
        self.profile(&self.cpg.tibia_profile)
            .map_err(|e| cfg_err(format!("[cpg] tibia_profile: {e}")))?;
        self.joint_set()?;
        self.plant.validate().map_err(|e| cfg_err(format!("[plant] {e}")))?;
        self.bridge.validate().map_err(|e| cfg_err(format!("[bridge] {e}")))?;
        if (self.plant.dt - self.bridge.t_wc()).abs() > 1e-12 {
            return Err(cfg_err(format!(
                "[plant] dt = {} s must equal the control period 1/[bridge].control_rate = {} s",
                self.plant.dt,
                self.bridge.t_wc()
            )));
        }
        for (name, segs) in &self.stimuli {
            RateProfile::new(segs, self.seed)
                .validate()
                .map_err(|e| cfg_err(format!("[stimuli] {name}: {e}")))?;
        }
        for (name, net) in &self.networks {
            net.build().map_err(|e| cfg_err(format!("[networks.{name}] {e}")))?;
        }

        let bt = &self.burst_trace;
        match &bt.network {
            Some(n) => {
                let net = self.network(n).map_err(|e| cfg_err(format!("[burst_trace] {e}")))?;
                let ids: Vec<u32> = net.compartments.iter().map(|c| c.id).collect();
                for p in &bt.probes {
                    if !ids.contains(p) {
                        return Err(cfg_err(format!("[burst_trace] probe {p} is not a compartment of network '{n}'")));
                    }
                }
            }
            None => {
                self.profile(&bt.profile).map_err(|e| cfg_err(format!("[burst_trace] {e}")))?;
            }
        }
        self.stimulus(&bt.stimulus).map_err(|e| cfg_err(format!("[burst_trace] {e}")))?;
        if bt.n_steps == 0 {
            return Err(cfg_err("[burst_trace] n_steps must be > 0"));
        }

        let g = &self.gait;
        positive("[gait] rate_hz", g.rate_hz)?;
        positive("[gait] duration_s", g.duration_s)?;
        if !(g.transient_s >= 0.0 && g.transient_s < g.duration_s) {
            return Err(cfg_err("[gait] transient_s must be in [0, duration_s)"));
        }
        self.stimulus(&self.speed_dynamic.stimulus)
            .map_err(|e| cfg_err(format!("[speed_dynamic] {e}")))?;

        let s = &self.speed_sweep;
        if s.rates_hz.is_empty() {
            return Err(cfg_err("[speed_sweep] rates_hz is empty"));
        }
        for &r in &s.rates_hz {
            if !(0.0..=1000.0).contains(&r) {
                return Err(cfg_err(format!("[speed_sweep] rate {r} Hz outside [0, 1000]")));
            }
        }
        if s.trials == 0 {
            return Err(cfg_err("[speed_sweep] trials must be >= 1"));
        }
        positive("[speed_sweep] duration_s", s.duration_s)?;
        if !(s.window_s > 0.0 && s.window_s <= s.duration_s) {
            return Err(cfg_err("[speed_sweep] window_s must be in (0, duration_s]"));
        }
        positive("[rtf] rate_hz", self.rtf.rate_hz)?;
        positive("[rtf] duration_s", self.rtf.duration_s)?;
        Ok(())
    }
}

fn positive(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(format!("{what} must be a positive number, got {x}")))
    }
}
