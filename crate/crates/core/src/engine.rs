//! Discrete-time multi-compartment LIF engine.
//!
//! State is integer fixed point. Each step a compartment updates
//!
//! ```text
//! u <- decay(u, dec_u) + syn_in + bias
//! v <- decay(v, dec_v) + u + join(children)
//! ```
//!
//! where `decay(x, d) = trunc(x * (4096 - d) / 4096)`. Compartments of one
//! neuron form a binary tree whose children forward either their voltage or
//! their over-threshold flag to the parent. Spikes emitted at step `t` reach
//! their synaptic targets at step `t + 1`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};

/// Decay parameters live in `[0, DECAY_SCALE]`.
pub const DECAY_SCALE: i32 = 4096;

const STATE_MAX: i64 = i32::MAX as i64;
const STATE_MIN: i64 = -(i32::MAX as i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompartmentId(pub u32);

impl fmt::Display for CompartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a compartment combines the signals forwarded by its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinRule {
    None,
    /// Add every VOLTAGE child's voltage.
    AddVoltage,
    /// Add the VOLTAGE child's voltage only while the FLAG child's flag is set.
    GatedAdd,
    /// Spike whenever the FLAG child's flag is set.
    FireOnFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChildSignal {
    Voltage,
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildLink {
    pub id: CompartmentId,
    pub signal: ChildSignal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompartmentSpec {
    pub id: CompartmentId,
    pub dec_u: i32,
    pub dec_v: i32,
    pub threshold: i32,
    pub spiking: bool,
    pub bias: i32,
    pub join: JoinRule,
    pub children: Vec<ChildLink>,
    pub reset_on_spike: bool,
}

impl CompartmentSpec {
    /// A spiking single-compartment LIF neuron that resets on spike.
    pub fn lif(id: CompartmentId, dec_u: i32, dec_v: i32, threshold: i32) -> Self {
        Self {
            id,
            dec_u,
            dec_v,
            threshold,
            spiking: true,
            bias: 0,
            join: JoinRule::None,
            children: Vec::new(),
            reset_on_spike: true,
        }
    }

    /// A non-spiking compartment with no children.
    pub fn passive(id: CompartmentId, dec_u: i32, dec_v: i32, threshold: i32) -> Self {
        Self {
            spiking: false,
            reset_on_spike: false,
            ..Self::lif(id, dec_u, dec_v, threshold)
        }
    }

    pub fn with_bias(mut self, bias: i32) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_join(mut self, join: JoinRule, children: Vec<ChildLink>) -> Self {
        self.join = join;
        self.children = children;
        self
    }

    fn check_join(&self) -> Result<()> {
        let n_volt = self
            .children
            .iter()
            .filter(|c| c.signal == ChildSignal::Voltage)
            .count();
        let n_flag = self.children.len() - n_volt;
        let ok = match self.join {
            JoinRule::None => self.children.is_empty(),
            JoinRule::AddVoltage => n_flag == 0 && (1..=2).contains(&n_volt),
            JoinRule::GatedAdd => n_volt == 1 && n_flag == 1,
            JoinRule::FireOnFlag => n_volt == 0 && n_flag == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(CpgError::JoinArity {
                id: self.id,
                reason: format!(
                    "{:?} with {} voltage and {} flag children",
                    self.join, n_volt, n_flag
                ),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub src: CompartmentId,
    pub dst: CompartmentId,
    pub weight: i32,
}

impl SynapseSpec {
    pub fn new(src: CompartmentId, dst: CompartmentId, weight: i32) -> Self {
        Self { src, dst, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub u: i32,
    pub v: i32,
    pub flag: bool,
    pub spiked: bool,
}

/// Signal a child hands to its parent during one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forwarded {
    Voltage(i32),
    Flag(bool),
}

/// An externally injected synaptic event, delivered in the step it is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExternalEvent {
    pub dst: CompartmentId,
    pub weight: i32,
}

fn saturate(x: i64) -> i32 {
    x.clamp(STATE_MIN, STATE_MAX) as i32
}

#[inline]
fn decay(value: i32, dec: i32) -> i32 {
    ((value as i64 * (DECAY_SCALE - dec) as i64) / DECAY_SCALE as i64) as i32
}

/// `trunc(value * (4096 - dec) / 4096)`, rounding toward zero.
pub fn decay_apply(value: i32, dec: i32) -> Result<i32> {
    if !(0..=DECAY_SCALE).contains(&dec) {
        return Err(CpgError::DecayOutOfRange(dec));
    }
    Ok(decay(value, dec))
}

fn check_decays(spec: &CompartmentSpec) -> Result<()> {
    for dec in [spec.dec_u, spec.dec_v] {
        if !(0..=DECAY_SCALE).contains(&dec) {
            return Err(CpgError::DecayOutOfRange(dec));
        }
    }
    Ok(())
}

/// Advances one compartment by one step.
///
/// `child_signals` must line up with `spec.children`.
pub fn step_compartment(
    state: CompartmentState,
    spec: &CompartmentSpec,
    syn_in: i64,
    child_signals: &[Forwarded],
) -> Result<CompartmentState> {
    check_decays(spec)?;
    spec.check_join()?;
    if child_signals.len() != spec.children.len() {
        return Err(CpgError::JoinArity {
            id: spec.id,
            reason: format!(
                "{} signals for {} children",
                child_signals.len(),
                spec.children.len()
            ),
        });
    }
    for (link, sig) in spec.children.iter().zip(child_signals) {
        let matches = matches!(
            (link.signal, sig),
            (ChildSignal::Voltage, Forwarded::Voltage(_)) | (ChildSignal::Flag, Forwarded::Flag(_))
        );
        if !matches {
            return Err(CpgError::JoinArity {
                id: spec.id,
                reason: format!("child {} forwarded the wrong signal kind", link.id),
            });
        }
    }
    Ok(advance(state, spec, syn_in, child_signals))
}

fn advance(
    state: CompartmentState,
    spec: &CompartmentSpec,
    syn_in: i64,
    child_signals: &[Forwarded],
) -> CompartmentState {
    let u = saturate(decay(state.u, spec.dec_u) as i64 + syn_in + spec.bias as i64);
    let mut v = decay(state.v, spec.dec_v) as i64 + u as i64;

    let child_flag = child_signals.iter().find_map(|s| match s {
        Forwarded::Flag(f) => Some(*f),
        _ => None,
    });
    let child_voltage: i64 = child_signals
        .iter()
        .map(|s| match s {
            Forwarded::Voltage(x) => *x as i64,
            _ => 0,
        })
        .sum();

    let mut forced = false;
    match spec.join {
        JoinRule::None => {}
        JoinRule::AddVoltage => v += child_voltage,
        JoinRule::GatedAdd => {
            if child_flag == Some(true) {
                v += child_voltage;
            }
        }
        JoinRule::FireOnFlag => forced = child_flag == Some(true),
    }
    let mut v = saturate(v);
    let over = v >= spec.threshold;
    let spiked = spec.spiking && (over || forced);
    if spiked && spec.reset_on_spike {
        v = 0;
    }
    CompartmentState {
        u,
        v,
        // A non-spiking FIRE_ON_FLAG node relays the child's flag upward.
        flag: over || (forced && !spec.spiking),
        spiked,
    }
}

fn forwarded(link: ChildSignal, st: &CompartmentState) -> Forwarded {
    match link {
        ChildSignal::Voltage => Forwarded::Voltage(st.v),
        ChildSignal::Flag => Forwarded::Flag(st.flag || st.spiked),
    }
}

/// A validated network with its mutable state.
///
/// Compartments are stored in evaluation order: trees sorted by root id,
/// each tree in post-order so children are evaluated before parents.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<CompartmentSpec>,
    synapses: Vec<SynapseSpec>,
    index: HashMap<CompartmentId, usize>,
    children: Vec<Vec<(usize, ChildSignal)>>,
    outgoing: Vec<Vec<(usize, i32)>>,
    state: Vec<CompartmentState>,
    initial: Vec<CompartmentState>,
    pending: Vec<i64>,
    next: Vec<i64>,
    scratch: Vec<Forwarded>,
    steps: u64,
}

/// Validates compartments and synapses and fixes the evaluation order.
pub fn build_network(compartments: Vec<CompartmentSpec>, synapses: Vec<SynapseSpec>) -> Result<Network> {
    let mut pos: HashMap<CompartmentId, usize> = HashMap::with_capacity(compartments.len());
    for (i, c) in compartments.iter().enumerate() {
        if pos.insert(c.id, i).is_some() {
            return Err(CpgError::DuplicateId(c.id));
        }
    }
    let mut parent: HashMap<CompartmentId, CompartmentId> = HashMap::new();
    for c in &compartments {
        check_decays(c)?;
        if c.children.len() > 2 {
            return Err(CpgError::TooManyChildren(c.id, c.children.len()));
        }
        for link in &c.children {
            if !pos.contains_key(&link.id) {
                return Err(CpgError::UnknownId(link.id));
            }
            if link.id == c.id {
                return Err(CpgError::Cycle(c.id));
            }
            if let Some(first) = parent.insert(link.id, c.id) {
                return Err(CpgError::MultipleParents {
                    child: link.id,
                    first,
                    second: c.id,
                });
            }
        }
        c.check_join()?;
    }

    let mut roots: Vec<CompartmentId> = compartments
        .iter()
        .map(|c| c.id)
        .filter(|id| !parent.contains_key(id))
        .collect();
    roots.sort();

    // Post-order walk of each tree; anything unreached sits on a cycle.
    let mut order: Vec<usize> = Vec::with_capacity(compartments.len());
    let mut tree_of: Vec<usize> = vec![usize::MAX; compartments.len()];
    for (t, root) in roots.iter().enumerate() {
        let mut stack = vec![(pos[root], false)];
        while let Some((i, expanded)) = stack.pop() {
            if expanded {
                order.push(i);
                continue;
            }
            if tree_of[i] != usize::MAX {
                return Err(CpgError::Cycle(compartments[i].id));
            }
            tree_of[i] = t;
            stack.push((i, true));
            for link in compartments[i].children.iter().rev() {
                stack.push((pos[&link.id], false));
            }
        }
    }
    if let Some(i) = tree_of.iter().position(|&t| t == usize::MAX) {
        return Err(CpgError::Cycle(compartments[i].id));
    }

    for s in &synapses {
        let (Some(&si), Some(&di)) = (pos.get(&s.src), pos.get(&s.dst)) else {
            let missing = if pos.contains_key(&s.src) { s.dst } else { s.src };
            return Err(CpgError::UnknownId(missing));
        };
        if !compartments[si].spiking {
            return Err(CpgError::NonSpikingSource(s.src));
        }
        if tree_of[si] == tree_of[di] {
            return Err(CpgError::IntraTreeSynapse { src: s.src, dst: s.dst });
        }
    }

    let mut slot = vec![0usize; compartments.len()];
    for (new, &old) in order.iter().enumerate() {
        slot[old] = new;
    }
    let specs: Vec<CompartmentSpec> = order.iter().map(|&i| compartments[i].clone()).collect();
    let index: HashMap<CompartmentId, usize> =
        specs.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let children = specs
        .iter()
        .map(|c| c.children.iter().map(|l| (index[&l.id], l.signal)).collect())
        .collect();
    let mut outgoing = vec![Vec::new(); specs.len()];
    for s in &synapses {
        outgoing[slot[pos[&s.src]]].push((slot[pos[&s.dst]], s.weight));
    }
    let n = specs.len();
    Ok(Network {
        specs,
        synapses,
        index,
        children,
        outgoing,
        state: vec![CompartmentState::default(); n],
        initial: vec![CompartmentState::default(); n],
        pending: vec![0; n],
        next: vec![0; n],
        scratch: Vec::with_capacity(2),
        steps: 0,
    })
}

impl Network {
    pub fn compartment_count(&self) -> usize {
        self.specs.len()
    }

    pub fn synapse_count(&self) -> usize {
        self.synapses.len()
    }

    /// Compartment specs in evaluation order.
    pub fn specs(&self) -> &[CompartmentSpec] {
        &self.specs
    }

    pub fn synapses(&self) -> &[SynapseSpec] {
        &self.synapses
    }

    pub fn spec(&self, id: CompartmentId) -> Option<&CompartmentSpec> {
        self.index.get(&id).map(|&i| &self.specs[i])
    }

    /// Dense position of `id` in evaluation order.
    pub fn slot(&self, id: CompartmentId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(CpgError::UnknownId(id))
    }

    pub fn id_at(&self, slot: usize) -> CompartmentId {
        self.specs[slot].id
    }

    pub fn state(&self, id: CompartmentId) -> Result<CompartmentState> {
        Ok(self.state[self.slot(id)?])
    }

    pub fn state_at(&self, slot: usize) -> CompartmentState {
        self.state[slot]
    }

    /// Overrides the state of one compartment; also becomes its reset value.
    pub fn set_initial_state(&mut self, id: CompartmentId, st: CompartmentState) -> Result<()> {
        let i = self.slot(id)?;
        self.state[i] = st;
        self.initial[i] = st;
        Ok(())
    }

    /// Restores initial state and clears in-flight spikes.
    pub fn reset(&mut self) {
        self.state.clone_from(&self.initial);
        self.pending.iter_mut().for_each(|p| *p = 0);
        self.steps = 0;
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Advances all compartments one step using slot-addressed external
    /// input and appends the slots that spiked to `spiked`.
    pub fn step_slots(&mut self, ext: &[(usize, i32)], spiked: &mut Vec<usize>) {
        for &(slot, w) in ext {
            self.pending[slot] += w as i64;
        }
        self.next.iter_mut().for_each(|x| *x = 0);
        for i in 0..self.specs.len() {
            self.scratch.clear();
            for &(c, sig) in &self.children[i] {
                self.scratch.push(forwarded(sig, &self.state[c]));
            }
            let st = advance(self.state[i], &self.specs[i], self.pending[i], &self.scratch);
            self.state[i] = st;
            if st.spiked {
                spiked.push(i);
                for &(dst, w) in &self.outgoing[i] {
                    self.next[dst] += w as i64;
                }
            }
        }
        std::mem::swap(&mut self.pending, &mut self.next);
        self.steps += 1;
    }

    /// Advances one step; returns the ids that spiked.
    pub fn step_network(&mut self, ext: &[ExternalEvent]) -> Result<Vec<CompartmentId>> {
        let ext = ext
            .iter()
            .map(|e| Ok((self.slot(e.dst)?, e.weight)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        self.step_slots(&ext, &mut out);
        let mut ids: Vec<CompartmentId> = out.into_iter().map(|s| self.specs[s].id).collect();
        ids.sort();
        Ok(ids)
    }

    /// Runs `n_steps` from the current state on a copy of the network.
    pub fn run(&self, stimulus: &Stimulus, n_steps: usize, probes: &[CompartmentId]) -> Result<Trace> {
        let slots = probes
            .iter()
            .map(|&p| self.slot(p))
            .collect::<Result<Vec<_>>>()?;
        let stim = stimulus.resolve(self)?;
        let mut net = self.clone();
        let mut trace = Trace::new(probes.to_vec(), n_steps);
        let mut spiked = Vec::new();
        for t in 0..n_steps {
            spiked.clear();
            net.step_slots(stim.at(t), &mut spiked);
            for (series, &s) in trace.series.iter_mut().zip(&slots) {
                series.push(net.state[s]);
            }
        }
        trace.n_steps = n_steps;
        Ok(trace)
    }
}

/// Per-step external input, indexed by step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stimulus {
    events: Vec<Vec<ExternalEvent>>,
}

impl Stimulus {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: usize, event: ExternalEvent) {
        if self.events.len() <= step {
            self.events.resize_with(step + 1, Vec::new);
        }
        self.events[step].push(event);
    }

    /// Every spike of `train` delivered to each `(target, weight)` of `port`.
    pub fn from_train(train: &crate::stimulus::SpikeTrain, port: &[(CompartmentId, i32)]) -> Self {
        let mut s = Self::default();
        for &t in train.spikes() {
            for &(dst, weight) in port {
                s.push(t as usize, ExternalEvent { dst, weight });
            }
        }
        s
    }

    pub fn at(&self, step: usize) -> &[ExternalEvent] {
        self.events.get(step).map(Vec::as_slice).unwrap_or(&[])
    }

    fn resolve(&self, net: &Network) -> Result<ResolvedStimulus> {
        let events = self
            .events
            .iter()
            .map(|evs| {
                evs.iter()
                    .map(|e| Ok((net.slot(e.dst)?, e.weight)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedStimulus { events })
    }
}

struct ResolvedStimulus {
    events: Vec<Vec<(usize, i32)>>,
}

impl ResolvedStimulus {
    fn at(&self, step: usize) -> &[(usize, i32)] {
        self.events.get(step).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProbeSeries {
    pub u: Vec<i32>,
    pub v: Vec<i32>,
    pub flag: Vec<bool>,
    pub spike: Vec<bool>,
}

impl ProbeSeries {
    fn push(&mut self, st: CompartmentState) {
        self.u.push(st.u);
        self.v.push(st.v);
        self.flag.push(st.flag);
        self.spike.push(st.spiked);
    }

    pub fn spike_steps(&self) -> Vec<u32> {
        self.spike
            .iter()
            .enumerate()
            .filter_map(|(t, &s)| s.then_some(t as u32))
            .collect()
    }
}

/// Probed time series; one step is 1 ms of simulated time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub probes: Vec<CompartmentId>,
    pub series: Vec<ProbeSeries>,
    pub n_steps: usize,
}

impl Trace {
    fn new(probes: Vec<CompartmentId>, n_steps: usize) -> Self {
        let series = probes
            .iter()
            .map(|_| ProbeSeries {
                u: Vec::with_capacity(n_steps),
                v: Vec::with_capacity(n_steps),
                flag: Vec::with_capacity(n_steps),
                spike: Vec::with_capacity(n_steps),
            })
            .collect();
        Self { probes, series, n_steps: 0 }
    }

    pub fn probe(&self, id: CompartmentId) -> Option<&ProbeSeries> {
        self.probes.iter().position(|&p| p == id).map(|i| &self.series[i])
    }

    /// CSV with header `step,probe_id,u,v,spike`, step-major.
    pub fn to_csv(&self) -> String {
        self.to_csv_named(|id| id.to_string())
    }

    /// Same as [`Trace::to_csv`] with a custom probe label.
    pub fn to_csv_named(&self, name: impl Fn(CompartmentId) -> String) -> String {
        let names: Vec<String> = self.probes.iter().map(|&p| name(p)).collect();
        let mut out = String::from("step,probe_id,u,v,spike\n");
        for t in 0..self.n_steps {
            for (s, n) in self.series.iter().zip(&names) {
                out.push_str(&format!("{},{},{},{},{}\n", t, n, s.u[t], s.v[t], s.spike[t] as u8));
            }
        }
        out
    }
}
