//! Hexapod CPG: two mutually inhibiting triplet generators, six tibia
//! generators and 24 motor neurons.
//!
//! Legs 0..=2 form the triplet driven by `BN_L`, legs 3..=5 the one driven by
//! `BN_R`. The contralateral partner of leg `i` is `(i + 3) % 6`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bursting::{assemble_bursting_neuron, BurstingNeuronParams, NeuronHandle};
use crate::engine::{build_network, CompartmentId, CompartmentSpec, Network, SynapseSpec};
use crate::error::Result;

pub const N_LEGS: usize = 6;
pub const N_MOTOR: usize = 24;
/// Connection count reported for the reference hardware network.
pub const REFERENCE_SYNAPSES: usize = 68;
pub const EXPECTED_COMPARTMENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LegId(pub u8);

impl LegId {
    pub fn contralateral(self) -> LegId {
        LegId((self.0 + 3) % 6)
    }

    /// 0 for the `BN_L` triplet, 1 for `BN_R`.
    pub fn triplet(self) -> usize {
        (self.0 / 3) as usize
    }

    pub fn all() -> impl Iterator<Item = LegId> {
        (0..N_LEGS as u8).map(LegId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Joint {
    Tibia,
    Coxa,
}

impl Joint {
    pub fn as_str(self) -> &'static str {
        match self {
            Joint::Tibia => "tibia",
            Joint::Coxa => "coxa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotorRole {
    Flexor,
    Extensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorNeuron {
    pub leg: LegId,
    pub joint: Joint,
    pub role: MotorRole,
    pub id: CompartmentId,
}

impl MotorNeuron {
    pub fn label(&self) -> String {
        let r = match self.role {
            MotorRole::Flexor => 'F',
            MotorRole::Extensor => 'E',
        };
        let j = match self.joint {
            Joint::Tibia => 'T',
            Joint::Coxa => 'C',
        };
        format!("{r}_{j}{}", self.leg.0)
    }
}

/// The 24 motor neurons in frame order: per leg `F_T, E_T, F_C, E_C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorNeuronMap {
    entries: Vec<MotorNeuron>,
}

impl MotorNeuronMap {
    fn new(base: u32) -> Self {
        let mut entries = Vec::with_capacity(N_MOTOR);
        for leg in LegId::all() {
            for (k, (joint, role)) in [
                (Joint::Tibia, MotorRole::Flexor),
                (Joint::Tibia, MotorRole::Extensor),
                (Joint::Coxa, MotorRole::Flexor),
                (Joint::Coxa, MotorRole::Extensor),
            ]
            .into_iter()
            .enumerate()
            {
                entries.push(MotorNeuron {
                    leg,
                    joint,
                    role,
                    id: CompartmentId(base + 4 * leg.0 as u32 + k as u32),
                });
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[MotorNeuron] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, leg: LegId, joint: Joint, role: MotorRole) -> CompartmentId {
        self.entries[Self::index(leg, joint, role)].id
    }

    /// Position in frame order.
    pub fn index(leg: LegId, joint: Joint, role: MotorRole) -> usize {
        let k = match (joint, role) {
            (Joint::Tibia, MotorRole::Flexor) => 0,
            (Joint::Tibia, MotorRole::Extensor) => 1,
            (Joint::Coxa, MotorRole::Flexor) => 2,
            (Joint::Coxa, MotorRole::Extensor) => 3,
        };
        4 * leg.0 as usize + k
    }
}

/// Routing weights between generators and motor neurons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingWeights {
    /// `BN_L.S -> BN_R.CI` and back; negative.
    pub mutual_inhibition: i32,
    /// Added to `BN_R`'s CI threshold so the pair never starts in lockstep.
    pub right_threshold_offset: i32,
    /// `BN_T.S -> F_T`, `F_C` and contralateral `E_C`.
    pub tibia_to_motor: i32,
    /// `BN_T.S -> E_T`; negative.
    pub tibia_to_extensor: i32,
    /// `F_T / E_T -> contralateral E_T`; negative.
    pub contralateral: i32,
    /// Threshold of every motor neuron.
    pub motor_threshold: i32,
    /// Constant bias on tibia extensor motor neurons.
    pub tonic_bias: i32,
}

impl Default for RoutingWeights {
    fn default() -> Self {
        Self {
            mutual_inhibition: -1000,
            right_threshold_offset: 3000,
            tibia_to_motor: 100,
            tibia_to_extensor: -400,
            contralateral: -60,
            motor_threshold: 100,
            tonic_bias: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpgTopology {
    pub bn_l: NeuronHandle,
    pub bn_r: NeuronHandle,
    pub bn_t: [NeuronHandle; N_LEGS],
    pub motor: MotorNeuronMap,
    pub compartments: Vec<CompartmentSpec>,
    pub synapses: Vec<SynapseSpec>,
    pub weights: RoutingWeights,
}

impl CpgTopology {
    /// Targets of a sensory spike: Inp and AM of both triplet generators.
    pub fn sensory_port(&self) -> Vec<(CompartmentId, i32)> {
        let mut port = self.bn_l.input_port().to_vec();
        port.extend(self.bn_r.input_port());
        port
    }

    pub fn triplet(&self, k: usize) -> &NeuronHandle {
        if k == 0 {
            &self.bn_l
        } else {
            &self.bn_r
        }
    }

    pub fn tonic_bias(&self) -> i32 {
        self.weights.tonic_bias
    }

    /// Human-readable name for every compartment.
    pub fn names(&self) -> HashMap<CompartmentId, String> {
        let mut names = HashMap::new();
        let mut add = |h: &NeuronHandle, prefix: &str| {
            for id in h.compartments() {
                names.insert(id, format!("{prefix}.{}", h.label(id).unwrap_or("?")));
            }
        };
        add(&self.bn_l, "BN_L");
        add(&self.bn_r, "BN_R");
        for (i, h) in self.bn_t.iter().enumerate() {
            add(h, &format!("BN_T{i}"));
        }
        for m in self.motor.entries() {
            names.insert(m.id, m.label());
        }
        names
    }

    /// Edge list CSV `src,dst,weight,kind`.
    pub fn edges_csv(&self) -> String {
        let names = self.names();
        let mut out = String::from("src,dst,weight,kind\n");
        for s in &self.synapses {
            let kind = if s.weight < 0 { "inhibitory" } else { "excitatory" };
            out.push_str(&format!("{},{},{},{}\n", names[&s.src], names[&s.dst], s.weight, kind));
        }
        out
    }
}

/// Builds the network and its labelled topology.
pub fn build_cpg(
    triplet: &BurstingNeuronParams,
    tibia: &BurstingNeuronParams,
    weights: &RoutingWeights,
) -> Result<(Network, CpgTopology)> {
    let mut compartments = Vec::new();
    let mut synapses = Vec::new();

    let l = assemble_bursting_neuron(triplet, 0)?;
    let mut right = *triplet;
    right.ci_threshold = right.ci_threshold.saturating_add(weights.right_threshold_offset);
    let r = assemble_bursting_neuron(&right, 5)?;
    let (bn_l, bn_r) = (l.handle, r.handle);
    for a in [l, r] {
        compartments.extend(a.compartments);
        synapses.extend(a.synapses);
    }
    synapses.push(SynapseSpec::new(bn_l.s, bn_r.ci, weights.mutual_inhibition));
    synapses.push(SynapseSpec::new(bn_r.s, bn_l.ci, weights.mutual_inhibition));

    let mut bn_t = Vec::with_capacity(N_LEGS);
    for i in 0..N_LEGS {
        let a = assemble_bursting_neuron(tibia, 10 + 5 * i as u32)?;
        compartments.extend(a.compartments);
        synapses.extend(a.synapses);
        bn_t.push(a.handle);
    }

    let motor = MotorNeuronMap::new(40);
    for m in motor.entries() {
        let mut spec = CompartmentSpec::lif(m.id, 4096, 4096, weights.motor_threshold);
        if m.joint == Joint::Tibia && m.role == MotorRole::Extensor {
            spec = spec.with_bias(weights.tonic_bias);
        }
        compartments.push(spec);
    }

    for leg in LegId::all() {
        let i = leg.0 as usize;
        let parent = if leg.triplet() == 0 { &bn_l } else { &bn_r };
        for (dst, w) in bn_t[i].input_port() {
            synapses.push(SynapseSpec::new(parent.s, dst, w));
        }
        let s = bn_t[i].s;
        let contra = leg.contralateral();
        synapses.push(SynapseSpec::new(s, motor.get(leg, Joint::Tibia, MotorRole::Flexor), weights.tibia_to_motor));
        synapses.push(SynapseSpec::new(s, motor.get(leg, Joint::Tibia, MotorRole::Extensor), weights.tibia_to_extensor));
        synapses.push(SynapseSpec::new(s, motor.get(leg, Joint::Coxa, MotorRole::Flexor), weights.tibia_to_motor));
        synapses.push(SynapseSpec::new(s, motor.get(contra, Joint::Coxa, MotorRole::Extensor), weights.tibia_to_motor));
        let target = motor.get(contra, Joint::Tibia, MotorRole::Extensor);
        for role in [MotorRole::Flexor, MotorRole::Extensor] {
            synapses.push(SynapseSpec::new(motor.get(leg, Joint::Tibia, role), target, weights.contralateral));
        }
    }

    let topology = CpgTopology {
        bn_l,
        bn_r,
        bn_t: bn_t.try_into().expect("six tibia generators"),
        motor,
        compartments: compartments.clone(),
        synapses: synapses.clone(),
        weights: *weights,
    };
    let net = build_network(compartments, synapses)?;
    Ok((net, topology))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyReport {
    pub n_compartments: usize,
    pub n_synapses: usize,
    pub n_motor_neurons: usize,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl TopologyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for TopologyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "compartments: {} (expected {})", self.n_compartments, EXPECTED_COMPARTMENTS)?;
        writeln!(f, "motor neurons: {}", self.n_motor_neurons)?;
        writeln!(
            f,
            "synapses: {} (reference network reports {}); this count covers generator resets \
             (S->IN, IN->CI: 16), mutual inhibition (2), triplet->tibia drive onto Inp and AM (12), \
             tibia->motor routing (24) and contralateral extensor inhibition (12); intra-tree \
             joins, sensory inputs and tonic bias are not synapses here",
            self.n_synapses, REFERENCE_SYNAPSES
        )?;
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Structural checks over a built topology. Never fails; problems are
/// reported as failed checks.
pub fn validate_topology(t: &CpgTopology) -> TopologyReport {
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    let weight = |src: CompartmentId, dst: CompartmentId| -> Option<i32> {
        t.synapses.iter().find(|s| s.src == src && s.dst == dst).map(|s| s.weight)
    };
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check { name: name.to_string(), passed, detail });
    };

    let n = t.compartments.len();
    push("compartment_count", n == EXPECTED_COMPARTMENTS, format!("{n} compartments"));

    let specs: HashMap<CompartmentId, &CompartmentSpec> = t.compartments.iter().map(|c| (c.id, c)).collect();
    let mut distinct: Vec<CompartmentId> = t.motor.entries().iter().map(|m| m.id).collect();
    distinct.sort();
    distinct.dedup();
    let single = t.motor.entries().iter().all(|m| {
        specs.get(&m.id).is_some_and(|c| c.spiking && c.children.is_empty())
    });
    push(
        "motor_neurons",
        distinct.len() == N_MOTOR && single,
        format!("{} distinct, single spiking compartments: {single}", distinct.len()),
    );

    let lr = weight(t.bn_l.s, t.bn_r.ci);
    let rl = weight(t.bn_r.s, t.bn_l.ci);
    let mutual = matches!((lr, rl), (Some(a), Some(b)) if a < 0 && b < 0);
    if !mutual {
        warnings.push("mutual inhibition between BN_L and BN_R is missing or zero: alternation not guaranteed".into());
    }
    push("mutual_inhibition", mutual, format!("L->R {lr:?}, R->L {rl:?}"));

    let mut drive_ok = true;
    let mut routing_ok = true;
    let mut contra_ok = true;
    for leg in LegId::all() {
        let i = leg.0 as usize;
        let own = t.triplet(leg.triplet()).s;
        let other = t.triplet(1 - leg.triplet()).s;
        let targets = t.bn_t[i].compartments();
        let from_own = targets.iter().any(|&d| weight(own, d).is_some_and(|w| w > 0));
        let from_other = t.synapses.iter().any(|s| targets.contains(&s.dst) && s.src == other);
        let from_elsewhere = t.synapses.iter().any(|s| {
            targets.contains(&s.dst) && s.src != own && !targets.contains(&s.src)
        });
        drive_ok &= from_own && !from_other && !from_elsewhere;

        let s = t.bn_t[i].s;
        let contra = leg.contralateral();
        let m = |l, j, r| t.motor.get(l, j, r);
        routing_ok &= weight(s, m(leg, Joint::Tibia, MotorRole::Flexor)).is_some_and(|w| w > 0)
            && weight(s, m(leg, Joint::Tibia, MotorRole::Extensor)).is_some_and(|w| w < 0)
            && weight(s, m(leg, Joint::Coxa, MotorRole::Flexor)).is_some_and(|w| w > 0)
            && weight(s, m(contra, Joint::Coxa, MotorRole::Extensor)).is_some_and(|w| w > 0);
        let target = m(contra, Joint::Tibia, MotorRole::Extensor);
        contra_ok &= [MotorRole::Flexor, MotorRole::Extensor]
            .iter()
            .all(|&r| weight(m(leg, Joint::Tibia, r), target).is_some_and(|w| w < 0));
    }
    push("tibia_drive_from_own_triplet", drive_ok, "BN_T[i] excited by its triplet generator only".into());
    push(
        "tibia_routing",
        routing_ok,
        "BN_T[i] excites F_T[i], F_C[i], E_C[i+3] and inhibits E_T[i]".into(),
    );
    push("contralateral_inhibition", contra_ok, "F_T[i], E_T[i] inhibit E_T[i+3]".into());
    let tonic = t
        .motor
        .entries()
        .iter()
        .filter(|m| m.joint == Joint::Tibia && m.role == MotorRole::Extensor)
        .all(|m| specs.get(&m.id).is_some_and(|c| c.bias > 0));
    push("tonic_bias", tonic, format!("tibia extensor bias {}", t.weights.tonic_bias));

    if t.synapses.len() != REFERENCE_SYNAPSES {
        warnings.push(format!(
            "synapse count {} differs from the reference {}",
            t.synapses.len(),
            REFERENCE_SYNAPSES
        ));
    }

    TopologyReport {
        n_compartments: n,
        n_synapses: t.synapses.len(),
        n_motor_neurons: t.motor.len(),
        checks,
        warnings,
    }
}
