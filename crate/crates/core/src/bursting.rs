//! Five-compartment conditionally bursting neuron and burst analysis.
//!
//! ```text
//!            S   (spiking, fires while CI's flag is set)
//!            |
//!            CI  (non-spiking, gated integrator)  <-- IN (inhibitory reset)
//!           /  \
//!        Inp    AM
//!   (voltage)  (flag: slow integrator above threshold)
//! ```
//!
//! Sensory spikes drive both Inp and AM. CI integrates Inp's voltage only
//! while AM is above threshold. S spikes every step CI is above threshold and
//! its spikes charge IN, which fires after `s_spikes_to_reset` of them and
//! knocks CI back down.

use serde::{Deserialize, Serialize};

use crate::engine::{ChildLink, ChildSignal, CompartmentId, CompartmentSpec, JoinRule, SynapseSpec};
use crate::error::{CpgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstingNeuronParams {
    /// Weight of each sensory spike onto Inp and AM.
    pub input_weight: i32,
    /// Current decay of Inp (fast).
    pub inp_dec: i32,
    /// Voltage decay of AM (slow).
    pub am_dec: i32,
    pub am_threshold: i32,
    /// Voltage leak of CI.
    pub ci_dec: i32,
    pub ci_threshold: i32,
    pub s_spikes_to_reset: u32,
    /// S -> IN weight; IN's threshold is `s_spikes_to_reset` times this.
    pub s_to_in_weight: i32,
    /// IN -> CI weight, negative.
    pub in_weight: i32,
}

impl BurstingNeuronParams {
    /// Calibrated profile for the triplet generators and single-neuron runs:
    /// silent at 5 Hz, bursts every few hundred ms at 40 Hz.
    pub fn triplet_default() -> Self {
        Self {
            input_weight: 1000,
            inp_dec: 1024,
            am_dec: 16,
            am_threshold: 5000,
            ci_dec: 2,
            ci_threshold: 20_000,
            s_spikes_to_reset: 60,
            s_to_in_weight: 64,
            in_weight: -100_000,
        }
    }

    /// Calibrated profile for tibia generators: two bursts per parent burst.
    pub fn tibia_default() -> Self {
        Self {
            input_weight: 1000,
            inp_dec: 1024,
            am_dec: 512,
            am_threshold: 2000,
            ci_dec: 64,
            ci_threshold: 20_000,
            s_spikes_to_reset: 6,
            s_to_in_weight: 64,
            in_weight: -170_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CpgError::InvalidParameter(m.to_string()));
        if self.s_spikes_to_reset < 1 {
            return bad("s_spikes_to_reset must be >= 1");
        }
        if self.in_weight >= 0 {
            return bad("in_weight must be negative");
        }
        if self.am_dec >= self.inp_dec {
            return bad("am_dec must be smaller than inp_dec (AM integrates over a longer window)");
        }
        if self.s_to_in_weight <= 0 {
            return bad("s_to_in_weight must be positive");
        }
        if self.s_to_in_weight as i64 * self.s_spikes_to_reset as i64 > i32::MAX as i64 {
            return bad("IN threshold overflows");
        }
        for d in [self.inp_dec, self.am_dec, self.ci_dec] {
            if !(0..=crate::engine::DECAY_SCALE).contains(&d) {
                return Err(CpgError::DecayOutOfRange(d));
            }
        }
        Ok(())
    }
}

/// Ids of one assembled bursting neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronHandle {
    pub inp: CompartmentId,
    pub am: CompartmentId,
    pub ci: CompartmentId,
    pub s: CompartmentId,
    pub inh: CompartmentId,
    pub input_weight: i32,
}

impl NeuronHandle {
    /// Synapse targets for sensory input.
    pub fn input_port(&self) -> [(CompartmentId, i32); 2] {
        [(self.inp, self.input_weight), (self.am, self.input_weight)]
    }

    pub fn output(&self) -> CompartmentId {
        self.s
    }

    pub fn compartments(&self) -> [CompartmentId; 5] {
        [self.inp, self.am, self.ci, self.s, self.inh]
    }

    pub fn label(&self, id: CompartmentId) -> Option<&'static str> {
        match id {
            x if x == self.inp => Some("Inp"),
            x if x == self.am => Some("AM"),
            x if x == self.ci => Some("CI"),
            x if x == self.s => Some("S"),
            x if x == self.inh => Some("IN"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledNeuron {
    pub handle: NeuronHandle,
    pub compartments: Vec<CompartmentSpec>,
    pub synapses: Vec<SynapseSpec>,
}

/// Builds the five compartments with ids `base..base + 5` and the S -> IN
/// and IN -> CI synapses.
pub fn assemble_bursting_neuron(params: &BurstingNeuronParams, base: u32) -> Result<AssembledNeuron> {
    params.validate()?;
    let id = |k: u32| CompartmentId(base + k);
    let (inp, am, ci, s, inh) = (id(0), id(1), id(2), id(3), id(4));

    let inp_spec = CompartmentSpec::passive(inp, params.inp_dec, 4096, i32::MAX);
    let am_spec = CompartmentSpec::passive(am, 4096, params.am_dec, params.am_threshold);
    let ci_spec = CompartmentSpec::passive(ci, 4096, params.ci_dec, params.ci_threshold).with_join(
        JoinRule::GatedAdd,
        vec![
            ChildLink { id: inp, signal: ChildSignal::Voltage },
            ChildLink { id: am, signal: ChildSignal::Flag },
        ],
    );
    let s_spec = CompartmentSpec::lif(s, 4096, 4096, i32::MAX)
        .with_join(JoinRule::FireOnFlag, vec![ChildLink { id: ci, signal: ChildSignal::Flag }]);
    let in_threshold = params.s_to_in_weight * params.s_spikes_to_reset as i32;
    let in_spec = CompartmentSpec::lif(inh, 4096, 0, in_threshold);

    Ok(AssembledNeuron {
        handle: NeuronHandle { inp, am, ci, s, inh, input_weight: params.input_weight },
        compartments: vec![inp_spec, am_spec, ci_spec, s_spec, in_spec],
        synapses: vec![
            SynapseSpec::new(s, inh, params.s_to_in_weight),
            SynapseSpec::new(inh, ci, params.in_weight),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BurstMetrics {
    pub n_bursts: usize,
    /// Mean of (last spike - first spike) over bursts, ms.
    pub mean_burst_duration: f64,
    /// Mean quiescent time from one burst's last spike to the next onset, ms.
    /// `None` with fewer than two bursts.
    pub mean_interburst_interval: Option<f64>,
    pub burst_onsets: Vec<u32>,
    /// `(onset_step, duration_steps)` per burst.
    pub bursts: Vec<(u32, u32)>,
    pub spikes_per_burst: Vec<usize>,
}

impl BurstMetrics {
    /// Mean onset-to-onset period, ms.
    pub fn mean_period(&self) -> Option<f64> {
        if self.burst_onsets.len() < 2 {
            return None;
        }
        let first = *self.burst_onsets.first()? as f64;
        let last = *self.burst_onsets.last()? as f64;
        Some((last - first) / (self.burst_onsets.len() - 1) as f64)
    }

    /// CSV `onset_step,duration_steps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("onset_step,duration_steps\n");
        for (onset, dur) in &self.bursts {
            out.push_str(&format!("{onset},{dur}\n"));
        }
        out
    }

    /// `[onset, last_spike]` step ranges.
    pub fn windows(&self) -> Vec<(u32, u32)> {
        self.bursts.iter().map(|&(o, d)| (o, o + d)).collect()
    }
}

/// Groups sorted spike steps into maximal runs whose consecutive spikes are
/// closer than `gap_threshold` ms.
pub fn burst_metrics(spikes: &[u32], gap_threshold: u32) -> Result<BurstMetrics> {
    if gap_threshold == 0 {
        return Err(CpgError::InvalidParameter("gap_threshold must be > 0".into()));
    }
    let mut bursts: Vec<(u32, u32)> = Vec::new();
    let mut counts = Vec::new();
    let mut iter = spikes.iter().copied();
    if let Some(first) = iter.next() {
        let (mut start, mut last, mut n) = (first, first, 1usize);
        for s in iter {
            if s - last < gap_threshold {
                n += 1;
            } else {
                bursts.push((start, last - start));
                counts.push(n);
                start = s;
                n = 1;
            }
            last = s;
        }
        bursts.push((start, last - start));
        counts.push(n);
    }
    let n = bursts.len();
    let mean_burst_duration = if n == 0 {
        0.0
    } else {
        bursts.iter().map(|b| b.1 as f64).sum::<f64>() / n as f64
    };
    let mean_interburst_interval = (n >= 2).then(|| {
        bursts
            .windows(2)
            .map(|w| (w[1].0 - (w[0].0 + w[0].1)) as f64)
            .sum::<f64>()
            / (n - 1) as f64
    });
    Ok(BurstMetrics {
        n_bursts: n,
        mean_burst_duration,
        mean_interburst_interval,
        burst_onsets: bursts.iter().map(|b| b.0).collect(),
        bursts,
        spikes_per_burst: counts,
    })
}

/// Default segmentation gap, ms.
pub const DEFAULT_GAP_MS: u32 = 30;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::build_network;

    #[test]
    fn assembly_has_five_compartments_two_synapses() {
        let a = assemble_bursting_neuron(&BurstingNeuronParams::triplet_default(), 0).unwrap();
        assert_eq!(a.compartments.len(), 5);
        assert_eq!(a.synapses.len(), 2);
        let net = build_network(a.compartments, a.synapses).unwrap();
        assert_eq!(net.compartment_count(), 5);
        let spiking: Vec<_> = net.specs().iter().filter(|c| c.spiking).map(|c| c.id).collect();
        assert_eq!(spiking.len(), 2); // S, and IN as its own single-compartment neuron
        assert!(spiking.contains(&a.handle.s) && spiking.contains(&a.handle.inh));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = BurstingNeuronParams::triplet_default();
        p.s_spikes_to_reset = 0;
        assert!(assemble_bursting_neuron(&p, 0).is_err());
        let mut p = BurstingNeuronParams::triplet_default();
        p.in_weight = 5;
        assert!(p.validate().is_err());
        let mut p = BurstingNeuronParams::triplet_default();
        p.am_dec = p.inp_dec;
        assert!(p.validate().is_err());
    }

    #[test]
    fn segmentation_by_hand() {
        let spikes: Vec<u32> = (10..=15).chain(100..=105).collect();
        let m = burst_metrics(&spikes, 20).unwrap();
        assert_eq!(m.n_bursts, 2);
        assert_eq!(m.mean_burst_duration, 5.0);
        assert_eq!(m.burst_onsets, vec![10, 100]);
        assert_eq!(m.mean_interburst_interval, Some(85.0));
        assert_eq!(m.mean_period(), Some(90.0));
        assert_eq!(m.spikes_per_burst, vec![6, 6]);
        assert_eq!(m.to_csv(), "onset_step,duration_steps\n10,5\n100,5\n");
    }

    #[test]
    fn empty_and_single() {
        let m = burst_metrics(&[], 30).unwrap();
        assert_eq!(m.n_bursts, 0);
        assert_eq!(m.mean_interburst_interval, None);
        let m = burst_metrics(&[7], 30).unwrap();
        assert_eq!(m.n_bursts, 1);
        assert_eq!(m.mean_burst_duration, 0.0);
        assert!(burst_metrics(&[1], 0).is_err());
    }

    #[test]
    fn gap_equal_to_threshold_splits() {
        let m = burst_metrics(&[0, 20, 40], 20).unwrap();
        assert_eq!(m.n_bursts, 3);
        let m = burst_metrics(&[0, 19, 38], 20).unwrap();
        assert_eq!(m.n_bursts, 1);
    }
}
