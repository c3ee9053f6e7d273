//! Epoch-synchronized coupling of the spiking engine to a fixed-rate
//! controller.
//!
//! Per control tick the engine advances `t_epoch` steps and hands the
//! controller one [`EpochFrame`] of motor spike counts. The controller decodes
//! joint angles and updates the plant. In threaded mode the two sides meet at
//! a rendezvous on every epoch boundary: the engine does not start epoch `k+1`
//! until the controller has finished tick `k`. The sequential mode runs the
//! same interleaving on one thread and is the reference for trace equality.

use std::io::{Read, Write};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cpg::{CpgTopology, Joint, MotorRole, N_LEGS};
use crate::decoder::{decode_step, JointConfig, JointState};
use crate::engine::{CompartmentId, Network};
use crate::error::{CpgError, Result};
use crate::plant::{update_plant, BodyState, LegAngles, PlantParams};
use crate::stimulus::SpikeTrain;

/// Engine steps per simulated second.
pub const STEPS_PER_SECOND: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub t_epoch: u32,
    /// Control ticks per second.
    pub control_rate: u32,
    pub realtime: bool,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { t_epoch: 10, control_rate: 100, realtime: false }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_epoch < 1 {
            return Err(CpgError::InvalidParameter("t_epoch must be >= 1".into()));
        }
        if self.t_epoch as u64 * self.control_rate as u64 != STEPS_PER_SECOND as u64 {
            return Err(CpgError::InvalidParameter(format!(
                "t_epoch * control_rate = {} but one step must be 1 ms ({} steps/s)",
                self.t_epoch as u64 * self.control_rate as u64,
                STEPS_PER_SECOND
            )));
        }
        if self.t_epoch > u16::MAX as u32 {
            return Err(CpgError::InvalidParameter("t_epoch does not fit a u16 count".into()));
        }
        Ok(())
    }

    /// Wall-clock budget of one tick, seconds.
    pub fn t_wc(&self) -> f64 {
        1.0 / self.control_rate as f64
    }
}

/// Motor spike counts of one epoch.
///
/// Wire format, little endian: `epoch_index: u32`, `n_neurons: u16`, then
/// `n_neurons` counts as `u16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochFrame {
    pub epoch_index: u32,
    pub counts: Vec<u16>,
}

impl EpochFrame {
    pub fn n_neurons(&self) -> u16 {
        self.counts.len() as u16
    }

    pub fn encoded_len(&self) -> usize {
        6 + 2 * self.counts.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.epoch_index.to_le_bytes());
        out.extend_from_slice(&self.n_neurons().to_le_bytes());
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    /// Decodes one frame from the front of `buf`, returning it and the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize)> {
        if buf.len() < 6 {
            return Err(CpgError::Frame(format!("header needs 6 bytes, got {}", buf.len())));
        }
        let epoch_index = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let n = u16::from_le_bytes(buf[4..6].try_into().unwrap()) as usize;
        let len = 6 + 2 * n;
        if buf.len() < len {
            return Err(CpgError::Frame(format!("frame needs {len} bytes, got {}", buf.len())));
        }
        let counts = buf[6..len]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Ok((Self { epoch_index, counts }, len))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut header = [0u8; 6];
        let mut got = 0;
        while got < header.len() {
            match r.read(&mut header[got..])? {
                0 if got == 0 => return Ok(None),
                0 => return Err(CpgError::Frame("stream ended inside a frame header".into())),
                k => got += k,
            }
        }
        let n = u16::from_le_bytes([header[4], header[5]]) as usize;
        let mut body = vec![0u8; 2 * n];
        r.read_exact(&mut body)
            .map_err(|e| CpgError::Frame(format!("truncated frame body: {e}")))?;
        let mut buf = header.to_vec();
        buf.extend_from_slice(&body);
        Ok(Some(Self::decode(&buf)?.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSet {
    pub tibia: JointConfig,
    pub coxa: JointConfig,
}

impl Default for JointSet {
    fn default() -> Self {
        Self { tibia: JointConfig::tibia_default(), coxa: JointConfig::coxa_default() }
    }
}

impl JointSet {
    /// Tibias fully extended (all feet down), coxas centred.
    pub fn rest_pose(&self) -> LegAngles {
        LegAngles::uniform(self.tibia.theta_min, self.coxa.midpoint())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub angles: LegAngles,
    pub body: BodyState,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub frames: Vec<EpochFrame>,
    pub ticks: Vec<TickRecord>,
    /// `(step, frame index)` of every motor spike.
    pub motor_spikes: Vec<(u32, u16)>,
    /// Spike steps of each watched compartment.
    pub watched: Vec<(CompartmentId, Vec<u32>)>,
}

impl RunTrace {
    pub fn speeds(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.body.speed).collect()
    }

    pub fn watched_spikes(&self, id: CompartmentId) -> Option<&[u32]> {
        self.watched.iter().find(|(w, _)| *w == id).map(|(_, s)| s.as_slice())
    }

    /// CSV `tick,x_m,speed_mps,n_grounded`.
    pub fn body_csv(&self) -> String {
        let mut out = String::from("tick,x_m,speed_mps,n_grounded\n");
        for (k, t) in self.ticks.iter().enumerate() {
            out.push_str(&format!("{},{:.9},{:.9},{}\n", k, t.body.x, t.body.speed, t.body.n_grounded()));
        }
        out
    }

    /// CSV `step,leg,joint,theta_deg`, one row per joint per tick, stamped
    /// with the last engine step of the tick.
    pub fn servo_csv(&self, t_epoch: u32) -> String {
        self.servo_csv_range(t_epoch, 0, self.ticks.len())
    }

    pub fn servo_csv_range(&self, t_epoch: u32, from_tick: usize, to_tick: usize) -> String {
        let mut out = String::from("step,leg,joint,theta_deg\n");
        for (k, t) in self.ticks.iter().enumerate().take(to_tick).skip(from_tick) {
            let step = (k as u64 + 1) * t_epoch as u64 - 1;
            for leg in 0..N_LEGS {
                out.push_str(&format!("{step},{leg},tibia,{:.6}\n", t.angles.tibia[leg]));
                out.push_str(&format!("{step},{leg},coxa,{:.6}\n", t.angles.coxa[leg]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BridgeMetrics {
    /// Compute time of each control-loop iteration, seconds.
    pub t_exec: Vec<f64>,
    /// Wall-clock budget per tick, seconds.
    pub t_wc: f64,
    /// Wall time of the whole loop including pacing, seconds.
    pub wall_time: f64,
    pub overruns: usize,
    pub engine_steps: u64,
    /// Engine -> controller hand-offs.
    pub boundary_crossings: u64,
}

impl BridgeMetrics {
    /// CSV `tick,t_exec_s,rtf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,t_exec_s,rtf\n");
        for (k, t) in self.t_exec.iter().enumerate() {
            out.push_str(&format!("{k},{t:.9},{:.9}\n", t / self.t_wc));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtfSummary {
    /// `t_exec / t_wc` per tick.
    pub per_tick: Vec<f64>,
    pub mean_rtf: f64,
    /// Simulated time over wall time.
    pub throughput_ratio: f64,
}

/// RTF observed on the reference hardware; kept for reporting only.
pub const REFERENCE_RTF: f64 = 1.6;

pub fn compute_rtf(metrics: &BridgeMetrics) -> Result<RtfSummary> {
    if metrics.t_exec.is_empty() {
        return Err(CpgError::EmptyWindow("no ticks recorded".into()));
    }
    if !(metrics.t_wc > 0.0) {
        return Err(CpgError::InvalidParameter("t_wc must be > 0".into()));
    }
    let per_tick: Vec<f64> = metrics.t_exec.iter().map(|t| t / metrics.t_wc).collect();
    let mean_rtf = per_tick.iter().sum::<f64>() / per_tick.len() as f64;
    let simulated = metrics.t_exec.len() as f64 * metrics.t_wc;
    let wall = if metrics.wall_time > 0.0 {
        metrics.wall_time
    } else {
        metrics.t_exec.iter().sum()
    };
    let throughput_ratio = if wall > 0.0 { simulated / wall } else { f64::INFINITY };
    Ok(RtfSummary { per_tick, mean_rtf, throughput_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopMode {
    /// One thread, deterministic interleaving.
    #[default]
    Sequential,
    /// Engine and controller on separate threads with a per-epoch rendezvous.
    Threaded,
}

/// Engine side: owns the network and produces frames.
struct EngineSide {
    net: Network,
    motor_slot_to_frame: Vec<Option<u16>>,
    stim: Vec<Vec<(usize, i32)>>,
    watched_slots: Vec<usize>,
    watched: Vec<Vec<u32>>,
    motor_spikes: Vec<(u32, u16)>,
    t_epoch: u32,
    n_motor: usize,
    step: u32,
    spiked: Vec<usize>,
}

impl EngineSide {
    fn new(
        net: &Network,
        topo: &CpgTopology,
        stimulus: &SpikeTrain,
        t_epoch: u32,
        watch: &[CompartmentId],
    ) -> Result<Self> {
        let mut motor_slot_to_frame = vec![None; net.compartment_count()];
        for (k, m) in topo.motor.entries().iter().enumerate() {
            motor_slot_to_frame[net.slot(m.id)?] = Some(k as u16);
        }
        let port = topo
            .sensory_port()
            .into_iter()
            .map(|(id, w)| Ok((net.slot(id)?, w)))
            .collect::<Result<Vec<_>>>()?;
        let mut stim: Vec<Vec<(usize, i32)>> = vec![Vec::new(); stimulus.n_steps()];
        for &t in stimulus.spikes() {
            if (t as usize) < stim.len() {
                stim[t as usize].extend_from_slice(&port);
            }
        }
        let watched_slots = watch.iter().map(|&w| net.slot(w)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            net: net.clone(),
            motor_slot_to_frame,
            stim,
            watched: vec![Vec::new(); watched_slots.len()],
            watched_slots,
            motor_spikes: Vec::new(),
            t_epoch,
            n_motor: topo.motor.len(),
            step: 0,
            spiked: Vec::new(),
        })
    }

    fn run_epoch(&mut self, epoch_index: u32) -> EpochFrame {
        let mut counts = vec![0u16; self.n_motor];
        for _ in 0..self.t_epoch {
            self.spiked.clear();
            let ext = self.stim.get(self.step as usize).map(Vec::as_slice).unwrap_or(&[]);
            self.net.step_slots(ext, &mut self.spiked);
            for &s in &self.spiked {
                if let Some(k) = self.motor_slot_to_frame[s] {
                    counts[k as usize] += 1;
                    self.motor_spikes.push((self.step, k));
                }
            }
            for (w, &slot) in self.watched_slots.iter().enumerate() {
                if self.net.state_at(slot).spiked {
                    self.watched[w].push(self.step);
                }
            }
            self.step += 1;
        }
        EpochFrame { epoch_index, counts }
    }
}

/// Controller side: decodes frames and drives the plant.
struct ControllerSide {
    joints: JointSet,
    plant: PlantParams,
    angles: LegAngles,
    body: BodyState,
    expected_epoch: u32,
}

impl ControllerSide {
    fn apply(&mut self, frame: &EpochFrame) -> Result<TickRecord> {
        if frame.epoch_index != self.expected_epoch {
            return Err(CpgError::Frame(format!(
                "expected epoch {}, got {}",
                self.expected_epoch, frame.epoch_index
            )));
        }
        self.expected_epoch += 1;
        let prev = self.angles;
        let count = |leg: usize, joint: Joint, role: MotorRole| -> u32 {
            frame.counts[crate::cpg::MotorNeuronMap::index(crate::cpg::LegId(leg as u8), joint, role)] as u32
        };
        for leg in 0..N_LEGS {
            self.angles.tibia[leg] = decode_step(
                JointState { theta: self.angles.tibia[leg] },
                count(leg, Joint::Tibia, MotorRole::Flexor),
                count(leg, Joint::Tibia, MotorRole::Extensor),
                &self.joints.tibia,
            )
            .theta;
            self.angles.coxa[leg] = decode_step(
                JointState { theta: self.angles.coxa[leg] },
                count(leg, Joint::Coxa, MotorRole::Flexor),
                count(leg, Joint::Coxa, MotorRole::Extensor),
                &self.joints.coxa,
            )
            .theta;
        }
        self.body = update_plant(&self.body, &self.angles, &prev, &self.joints.tibia, &self.plant);
        Ok(TickRecord { angles: self.angles, body: self.body })
    }
}

/// Tick pacing for realtime mode: fixed budget, no catch-up after overruns.
struct Pacer {
    budget: Duration,
    tick_start: Instant,
    overruns: usize,
}

impl Pacer {
    fn new(budget: Duration) -> Self {
        Self { budget, tick_start: Instant::now(), overruns: 0 }
    }

    fn finish_tick(&mut self, tick: usize, realtime: bool) {
        if realtime {
            let deadline = self.tick_start + self.budget;
            let now = Instant::now();
            if now > deadline {
                self.overruns += 1;
                log::warn!("tick {tick} overran its budget by {:?}", now - deadline);
            } else {
                std::thread::sleep(deadline - now);
            }
        }
        self.tick_start = Instant::now();
    }
}

/// Everything needed to run the closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub net: Network,
    pub topology: CpgTopology,
    pub plant: PlantParams,
    pub joints: JointSet,
    pub bridge: BridgeConfig,
}

impl ClosedLoop {
    pub fn validate(&self) -> Result<()> {
        self.bridge.validate()?;
        self.plant.validate()?;
        self.joints.tibia.validate()?;
        self.joints.coxa.validate()?;
        if (self.plant.dt - self.bridge.t_wc()).abs() > 1e-12 {
            return Err(CpgError::InvalidParameter(format!(
                "plant dt {} s does not match the control period {} s",
                self.plant.dt,
                self.bridge.t_wc()
            )));
        }
        Ok(())
    }

    pub fn n_ticks(&self, duration_s: f64) -> usize {
        (duration_s * self.bridge.control_rate as f64).round().max(0.0) as usize
    }

    pub fn run(
        &self,
        stimulus: &SpikeTrain,
        duration_s: f64,
        mode: LoopMode,
        watch: &[CompartmentId],
    ) -> Result<(RunTrace, BridgeMetrics)> {
        self.validate()?;
        let n_ticks = self.n_ticks(duration_s);
        let mut engine = EngineSide::new(&self.net, &self.topology, stimulus, self.bridge.t_epoch, watch)?;
        let mut ctrl = ControllerSide {
            joints: self.joints,
            plant: self.plant,
            angles: self.joints.rest_pose(),
            body: BodyState::default(),
            expected_epoch: 0,
        };
        let mut frames = Vec::with_capacity(n_ticks);
        let mut ticks = Vec::with_capacity(n_ticks);
        let mut t_exec = Vec::with_capacity(n_ticks);
        let budget = Duration::from_secs_f64(self.bridge.t_wc());
        let realtime = self.bridge.realtime;
        let started = Instant::now();
        let mut pacer = Pacer::new(budget);

        match mode {
            LoopMode::Sequential => {
                for k in 0..n_ticks {
                    let t0 = Instant::now();
                    let frame = engine.run_epoch(k as u32);
                    ticks.push(ctrl.apply(&frame)?);
                    t_exec.push(t0.elapsed().as_secs_f64());
                    frames.push(frame);
                    pacer.finish_tick(k, realtime);
                }
            }
            LoopMode::Threaded => {
                let (frame_tx, frame_rx) = mpsc::sync_channel::<EpochFrame>(0);
                let (ack_tx, ack_rx) = mpsc::sync_channel::<()>(0);
                let result: Result<()> = std::thread::scope(|scope| {
                    let engine_ref = &mut engine;
                    let handle = scope.spawn(move || {
                        for k in 0..n_ticks {
                            let frame = engine_ref.run_epoch(k as u32);
                            if frame_tx.send(frame).is_err() || ack_rx.recv().is_err() {
                                break;
                            }
                        }
                    });
                    let mut t0 = Instant::now();
                    let mut outcome = Ok(());
                    for k in 0..n_ticks {
                        let Ok(frame) = frame_rx.recv() else {
                            outcome = Err(CpgError::Frame("engine side stopped early".into()));
                            break;
                        };
                        match ctrl.apply(&frame) {
                            Ok(rec) => ticks.push(rec),
                            Err(e) => {
                                outcome = Err(e);
                                break;
                            }
                        }
                        t_exec.push(t0.elapsed().as_secs_f64());
                        frames.push(frame);
                        pacer.finish_tick(k, realtime);
                        t0 = Instant::now();
                        if ack_tx.send(()).is_err() {
                            break;
                        }
                    }
                    drop(ack_tx);
                    drop(frame_rx);
                    handle.join().expect("engine thread panicked");
                    outcome
                });
                result?;
            }
        }

        let wall_time = started.elapsed().as_secs_f64();
        let metrics = BridgeMetrics {
            t_exec,
            t_wc: self.bridge.t_wc(),
            wall_time,
            overruns: pacer.overruns,
            engine_steps: n_ticks as u64 * self.bridge.t_epoch as u64,
            boundary_crossings: n_ticks as u64,
        };
        let watched = watch.iter().copied().zip(engine.watched).collect();
        Ok((
            RunTrace { frames, ticks, motor_spikes: engine.motor_spikes, watched },
            metrics,
        ))
    }
}

/// Runs the closed loop in sequential mode.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    net: &Network,
    topology: &CpgTopology,
    plant: &PlantParams,
    stimulus: &SpikeTrain,
    joints: &JointSet,
    bridge: &BridgeConfig,
    duration_s: f64,
) -> Result<(RunTrace, BridgeMetrics)> {
    ClosedLoop {
        net: net.clone(),
        topology: topology.clone(),
        plant: *plant,
        joints: *joints,
        bridge: *bridge,
    }
    .run(stimulus, duration_s, LoopMode::Sequential, &[])
}
