//! The five reproducible experiments behind the `cpg` command-line tool.
//!
//! Each `cmd_*` function validates the configuration, runs the experiment
//! and returns its results together with the files it produces. Only
//! [`cmd_rtf`]'s timing outputs depend on the host; every other byte is a
//! function of the configuration alone.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::bridge::{compute_rtf, BridgeMetrics, ClosedLoop, LoopMode, RtfSummary, RunTrace, REFERENCE_RTF};
use crate::bursting::{assemble_bursting_neuron, burst_metrics, BurstMetrics, NeuronHandle};
use crate::config::ExperimentConfig;
use crate::cpg::{build_cpg, validate_topology, CpgTopology, Joint, LegId, MotorRole, TopologyReport};
use crate::engine::{build_network, CompartmentId, Stimulus, Trace};
use crate::error::{CpgError, Result};
use crate::plant::{average_speed, mean_speed_between};
use crate::stimulus::{poisson_train, poisson_train_stream, profile_train, RateProfile};

/// A file produced by a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
    /// Contains wall-clock measurements and is not reproducible.
    pub timing: bool,
}

impl OutputFile {
    fn text(name: &str, contents: String) -> Self {
        Self { name: name.into(), contents: contents.into_bytes(), timing: false }
    }
}

/// Writes `files` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

/// Network, topology and closed loop for the configured CPG.
pub fn build_closed_loop(cfg: &ExperimentConfig) -> Result<ClosedLoop> {
    let (net, topology) = build_cpg(
        cfg.profile(&cfg.cpg.triplet_profile)?,
        cfg.profile(&cfg.cpg.tibia_profile)?,
        &cfg.cpg.weights,
    )?;
    Ok(ClosedLoop {
        net,
        topology,
        plant: cfg.plant,
        joints: cfg.joint_set()?,
        bridge: cfg.bridge,
    })
}

fn generator_watch(topo: &CpgTopology) -> Vec<CompartmentId> {
    let mut w = vec![topo.bn_l.s, topo.bn_r.s];
    w.extend(topo.bn_t.iter().map(|h| h.s));
    w
}

fn raster_csv(trace: &RunTrace, topo: &CpgTopology, from_step: u32, to_step: u32) -> String {
    let labels: Vec<String> = topo.motor.entries().iter().map(|m| m.label()).collect();
    let mut out = String::from("step,neuron,label\n");
    for &(step, k) in &trace.motor_spikes {
        if (from_step..to_step).contains(&step) {
            let _ = writeln!(out, "{step},{k},{}", labels[k as usize]);
        }
    }
    out
}

// ---------------------------------------------------------------- burst-trace

#[derive(Debug, Clone)]
pub struct BurstTraceOutput {
    pub trace: Trace,
    /// Set when a bursting-neuron profile was traced.
    pub handle: Option<NeuronHandle>,
    /// Burst metrics of S (or of the first spiking probe of a custom network).
    pub metrics: BurstMetrics,
    pub files: Vec<OutputFile>,
}

/// Traces every compartment of one bursting neuron (or of a configured
/// network) under the configured stimulus.
pub fn cmd_burst_trace(cfg: &ExperimentConfig) -> Result<BurstTraceOutput> {
    cfg.validate()?;
    let bt = &cfg.burst_trace;
    let profile = cfg.stimulus(&bt.stimulus)?;
    let train = profile_train(&profile)?;

    let (net, port, probes, names, handle): (_, _, Vec<CompartmentId>, Vec<String>, _) = match &bt.network {
        Some(name) => {
            let def = cfg.network(name)?;
            let net = def.build()?;
            let probes: Vec<CompartmentId> = if bt.probes.is_empty() {
                def.compartments.iter().map(|c| CompartmentId(c.id)).collect()
            } else {
                bt.probes.iter().map(|&p| CompartmentId(p)).collect()
            };
            let names = probes.iter().map(|p| p.to_string()).collect();
            (net, def.input_port(), probes, names, None)
        }
        None => {
            let a = assemble_bursting_neuron(cfg.profile(&bt.profile)?, 0)?;
            let h = a.handle;
            let net = build_network(a.compartments, a.synapses)?;
            let probes = h.compartments().to_vec();
            let names = probes.iter().map(|&p| h.label(p).unwrap_or("?").to_string()).collect();
            (net, h.input_port().to_vec(), probes, names, Some(h))
        }
    };
    let stim = Stimulus::from_train(&train, &port);
    let trace = net.run(&stim, bt.n_steps, &probes)?;

    let spike_src = match handle {
        Some(h) => Some(h.s),
        None => probes.iter().copied().find(|&p| net.spec(p).is_some_and(|s| s.spiking)),
    };
    let spikes = spike_src
        .and_then(|s| trace.probe(s))
        .map(|p| p.spike_steps())
        .unwrap_or_default();
    let metrics = burst_metrics(&spikes, bt.gap_ms)?;

    let mut probes_csv = String::from("probe_id,name\n");
    for (p, n) in probes.iter().zip(&names) {
        let _ = writeln!(probes_csv, "{p},{n}");
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "steps: {}", bt.n_steps);
    let _ = writeln!(summary, "input spikes: {}", train.len());
    let _ = writeln!(summary, "bursts: {}", metrics.n_bursts);
    let _ = writeln!(summary, "mean burst duration (ms): {:.3}", metrics.mean_burst_duration);
    match metrics.mean_interburst_interval {
        Some(ibi) => {
            let _ = writeln!(summary, "mean interburst interval (ms): {ibi:.3}");
        }
        None => {
            let _ = writeln!(summary, "mean interburst interval (ms): n/a");
        }
    }
    let files = vec![
        OutputFile::text("burst_trace.csv", trace.to_csv()),
        OutputFile::text("probes.csv", probes_csv),
        OutputFile::text("bursts.csv", metrics.to_csv()),
        OutputFile::text("burst_summary.txt", summary),
    ];
    Ok(BurstTraceOutput { trace, handle, metrics, files })
}

// ----------------------------------------------------------------------- gait

/// One of the four phases of a tripod gait cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaitPhase {
    /// 1..=4.
    pub phase: u8,
    pub start_step: u32,
    /// Exclusive.
    pub end_step: u32,
    /// The triplet (0 = legs 0..=2, 1 = legs 3..=5) whose tibias lift or lower.
    pub triplet: usize,
}

impl GaitPhase {
    pub fn description(&self) -> &'static str {
        match self.phase {
            1 => "legs 0-2 lift and swing forward while legs 3-5 push backward",
            2 => "legs 0-2 lower to the ground",
            3 => "legs 3-5 lift and swing forward while legs 0-2 push backward",
            _ => "legs 3-5 lower to the ground",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaitOutput {
    pub trace: RunTrace,
    pub topology: CpgTopology,
    pub report: TopologyReport,
    /// `[start, end)` engine steps of the detected cycle.
    pub cycle: (u32, u32),
    pub phases: [GaitPhase; 4],
    pub files: Vec<OutputFile>,
}

fn flexion_steps(trace: &RunTrace, triplet: usize, from: u32, to: u32) -> Vec<u32> {
    let idx: Vec<u16> = (0..3)
        .map(|k| {
            let leg = LegId((3 * triplet + k) as u8);
            crate::cpg::MotorNeuronMap::index(leg, Joint::Tibia, MotorRole::Flexor) as u16
        })
        .collect();
    trace
        .motor_spikes
        .iter()
        .filter(|(s, k)| (from..to).contains(s) && idx.contains(k))
        .map(|&(s, _)| s)
        .collect()
}

/// Finds the first steady gait cycle after the transient and splits it into
/// phases at the tibia flexion onsets.
pub fn detect_gait_cycle(
    trace: &RunTrace,
    topo: &CpgTopology,
    gap_ms: u32,
    transient_step: u32,
) -> Result<[GaitPhase; 4]> {
    let spikes = |id| trace.watched_spikes(id).unwrap_or(&[]);
    let l = burst_metrics(spikes(topo.bn_l.s), gap_ms)?;
    let r = burst_metrics(spikes(topo.bn_r.s), gap_ms)?;
    let l_on: Vec<u32> = l.burst_onsets.iter().copied().filter(|&o| o >= transient_step).collect();
    let diag = || {
        CpgError::NoGait(format!(
            "BN_L burst onsets after the transient: {}, BN_R: {}; a cycle needs two \
             BN_L bursts with a BN_R burst between them. The input rate is probably below the bursting \
             threshold of the triplet generators.",
            l_on.len(),
            r.burst_onsets.iter().filter(|&&o| o >= transient_step).count()
        ))
    };
    for pair in l_on.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let Some(&r_on) = r.burst_onsets.iter().find(|&&o| o > a && o < b) else {
            continue;
        };
        let lf = flexion_steps(trace, 0, a, r_on);
        let rf = flexion_steps(trace, 1, r_on, b);
        let next_l = flexion_steps(trace, 0, b, u32::MAX);
        let (Some(&l0), Some(&l1), Some(&r0), Some(&r1), Some(&end)) =
            (lf.first(), lf.last(), rf.first(), rf.last(), next_l.first())
        else {
            continue;
        };
        return Ok([
            GaitPhase { phase: 1, start_step: l0, end_step: l1 + 1, triplet: 0 },
            GaitPhase { phase: 2, start_step: l1 + 1, end_step: r0, triplet: 0 },
            GaitPhase { phase: 3, start_step: r0, end_step: r1 + 1, triplet: 1 },
            GaitPhase { phase: 4, start_step: r1 + 1, end_step: end, triplet: 1 },
        ]);
    }
    Err(diag())
}

/// Runs the CPG at a constant rate and extracts one annotated gait cycle.
pub fn cmd_gait(cfg: &ExperimentConfig) -> Result<GaitOutput> {
    cfg.validate()?;
    let g = &cfg.gait;
    let cl = build_closed_loop(cfg)?;
    let report = validate_topology(&cl.topology);
    let n_steps = (g.duration_s * 1000.0).round() as usize;
    let train = poisson_train(g.rate_hz, n_steps, cfg.seed)?;
    let watch = generator_watch(&cl.topology);
    let (trace, _) = cl.run(&train, g.duration_s, LoopMode::Sequential, &watch)?;
    let transient = (g.transient_s * 1000.0).round() as u32;
    let phases = detect_gait_cycle(&trace, &cl.topology, g.gap_ms, transient).map_err(|e| match e {
        CpgError::NoGait(m) => CpgError::NoGait(format!("{m} (rate {} Hz, seed {})", g.rate_hz, cfg.seed)),
        other => other,
    })?;
    let cycle = (phases[0].start_step, phases[3].end_step);

    let t_epoch = cfg.bridge.t_epoch;
    let from_tick = (cycle.0 / t_epoch) as usize;
    let to_tick = (cycle.1.div_ceil(t_epoch) as usize).min(trace.ticks.len());
    let mut phases_csv = String::from("phase,start_step,end_step,triplet,description\n");
    for p in &phases {
        let _ = writeln!(
            phases_csv,
            "{},{},{},{},{}",
            p.phase,
            p.start_step,
            p.end_step,
            p.triplet,
            p.description()
        );
    }
    let files = vec![
        OutputFile::text("raster.csv", raster_csv(&trace, &cl.topology, cycle.0, cycle.1)),
        OutputFile::text("servo.csv", trace.servo_csv_range(t_epoch, from_tick, to_tick)),
        OutputFile::text("phases.csv", phases_csv),
        OutputFile::text("edges.csv", cl.topology.edges_csv()),
        OutputFile::text("topology.txt", report.to_string()),
    ];
    Ok(GaitOutput { trace, topology: cl.topology, report, cycle, phases, files })
}

// -------------------------------------------------------------- speed-dynamic

#[derive(Debug, Clone)]
pub struct SegmentSpeed {
    pub rate_hz: f64,
    pub start_tick: usize,
    pub end_tick: usize,
    pub mean_speed: f64,
}

#[derive(Debug, Clone)]
pub struct SpeedDynamicOutput {
    pub trace: RunTrace,
    pub segments: Vec<SegmentSpeed>,
    pub files: Vec<OutputFile>,
}

/// Trailing window of the running mean speed column, seconds.
pub const RUNNING_MEAN_WINDOW_S: f64 = 1.0;

/// Drives the CPG with a piecewise-constant rate profile.
pub fn cmd_speed_dynamic(cfg: &ExperimentConfig) -> Result<SpeedDynamicOutput> {
    cfg.validate()?;
    let profile = cfg.stimulus(&cfg.speed_dynamic.stimulus)?;
    run_speed_dynamic(cfg, &profile)
}

/// [`cmd_speed_dynamic`] with an explicit profile.
pub fn run_speed_dynamic(cfg: &ExperimentConfig, profile: &RateProfile) -> Result<SpeedDynamicOutput> {
    let cl = build_closed_loop(cfg)?;
    let train = profile_train(profile)?;
    let duration_s = profile.total_steps() as f64 / 1000.0;
    let (trace, _) = cl.run(&train, duration_s, LoopMode::Sequential, &[])?;
    let speeds = trace.speeds();
    let t_epoch = cfg.bridge.t_epoch as usize;

    let mut segments = Vec::new();
    let mut step = 0usize;
    for seg in &profile.segments {
        let start_tick = step / t_epoch;
        step += seg.duration_ms as usize;
        let end_tick = (step / t_epoch).min(speeds.len());
        let mean_speed = mean_speed_between(&speeds, start_tick, end_tick)?;
        segments.push(SegmentSpeed { rate_hz: seg.rate_hz, start_tick, end_tick, mean_speed });
    }

    let w = ((RUNNING_MEAN_WINDOW_S / cfg.plant.dt).round() as usize).max(1);
    let mut csv = String::from("tick,rate_hz,speed_mps,mean_speed_mps\n");
    let mut acc = 0.0;
    for (k, &s) in speeds.iter().enumerate() {
        acc += s;
        if k >= w {
            acc -= speeds[k - w];
        }
        let n = (k + 1).min(w);
        let rate = profile.rate_at(k * t_epoch);
        let _ = writeln!(csv, "{k},{rate},{s:.9},{:.9}", acc / n as f64);
    }
    let mut seg_csv = String::from("segment,rate_hz,start_tick,end_tick,mean_speed_mps\n");
    for (i, s) in segments.iter().enumerate() {
        let _ = writeln!(seg_csv, "{i},{},{},{},{:.9}", s.rate_hz, s.start_tick, s.end_tick, s.mean_speed);
    }
    let files = vec![
        OutputFile::text("speed_dynamic.csv", csv),
        OutputFile::text("segments.csv", seg_csv),
        OutputFile::text("body.csv", trace.body_csv()),
        OutputFile::text("raster.csv", raster_csv(&trace, &cl.topology, 0, u32::MAX)),
    ];
    Ok(SpeedDynamicOutput { trace, segments, files })
}

// ---------------------------------------------------------------- speed-sweep

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate_hz: f64,
    /// Average speed of every trial, in trial order.
    pub trials: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct SpeedSweepOutput {
    pub rows: Vec<SweepRow>,
    pub files: Vec<OutputFile>,
}

/// Average speed per input rate over independent trials. Trial `k` of every
/// rate draws from RNG stream `k` of the configured seed, so results do not
/// depend on how trials are scheduled across threads.
pub fn cmd_speed_sweep(cfg: &ExperimentConfig) -> Result<SpeedSweepOutput> {
    cfg.validate()?;
    let s = &cfg.speed_sweep;
    let cl = build_closed_loop(cfg)?;
    let n_steps = (s.duration_s * 1000.0).round() as usize;
    let jobs: Vec<(usize, u32)> = (0..s.rates_hz.len())
        .flat_map(|r| (0..s.trials).map(move |t| (r, t)))
        .collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(r, t)| -> Result<f64> {
            let train = poisson_train_stream(s.rates_hz[r], n_steps, cfg.seed, t as u64)?;
            let (trace, _) = cl.run(&train, s.duration_s, LoopMode::Sequential, &[])?;
            average_speed(&trace.speeds(), cfg.plant.dt, s.window_s)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<SweepRow> = s
        .rates_hz
        .iter()
        .enumerate()
        .map(|(r, &rate_hz)| {
            let trials: Vec<f64> = results[r * s.trials as usize..(r + 1) * s.trials as usize].to_vec();
            let mean = trials.iter().sum::<f64>() / trials.len() as f64;
            let min = trials.iter().copied().fold(f64::INFINITY, f64::min);
            let max = trials.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SweepRow { rate_hz, trials, mean, min, max }
        })
        .collect();

    let mut table = String::from("rate_hz,mean_speed_mps,min_speed_mps,max_speed_mps,trials\n");
    let mut per_trial = String::from("rate_hz,trial,avg_speed_mps\n");
    for row in &rows {
        let _ = writeln!(
            table,
            "{},{:.9},{:.9},{:.9},{}",
            row.rate_hz,
            row.mean,
            row.min,
            row.max,
            row.trials.len()
        );
        for (t, v) in row.trials.iter().enumerate() {
            let _ = writeln!(per_trial, "{},{t},{v:.9}", row.rate_hz);
        }
    }
    let files = vec![
        OutputFile::text("speed_sweep.csv", table),
        OutputFile::text("speed_trials.csv", per_trial),
    ];
    Ok(SpeedSweepOutput { rows, files })
}

// ------------------------------------------------------------------------ rtf

#[derive(Debug, Clone)]
pub struct RtfOutput {
    pub trace: RunTrace,
    pub metrics: BridgeMetrics,
    pub summary: RtfSummary,
    pub files: Vec<OutputFile>,
}

/// Times the closed loop and reports per-tick RTF and the throughput ratio.
pub fn cmd_rtf(cfg: &ExperimentConfig) -> Result<RtfOutput> {
    cfg.validate()?;
    let r = &cfg.rtf;
    let cl = build_closed_loop(cfg)?;
    let n_steps = (r.duration_s * 1000.0).round() as usize;
    let train = poisson_train(r.rate_hz, n_steps, cfg.seed)?;
    let (trace, metrics) = cl.run(&train, r.duration_s, r.mode.into(), &[])?;
    let summary = compute_rtf(&metrics)?;

    let mut text = String::new();
    let _ = writeln!(text, "ticks: {}", metrics.t_exec.len());
    let _ = writeln!(text, "mode: {:?}", r.mode);
    let _ = writeln!(text, "realtime pacing: {}", cfg.bridge.realtime);
    let _ = writeln!(text, "t_wc (s): {}", metrics.t_wc);
    let _ = writeln!(text, "mean rtf (t_exec / t_wc): {:.6}", summary.mean_rtf);
    let _ = writeln!(text, "throughput ratio (simulated / wall time): {:.3}", summary.throughput_ratio);
    let _ = writeln!(text, "overruns: {}", metrics.overruns);
    let _ = writeln!(text, "reference rtf from the hardware run: {REFERENCE_RTF}");

    let mut files = vec![
        OutputFile { name: "metrics.csv".into(), contents: metrics.to_csv().into_bytes(), timing: true },
        OutputFile { name: "rtf_summary.txt".into(), contents: text.into_bytes(), timing: true },
        OutputFile::text("body.csv", trace.body_csv()),
    ];
    if let Some(name) = &r.frame_stream {
        let mut bytes = Vec::new();
        for f in &trace.frames {
            bytes.extend_from_slice(&f.encode());
        }
        files.push(OutputFile {
            name: name.to_string_lossy().into_owned(),
            contents: bytes,
            timing: false,
        });
    }
    Ok(RtfOutput { trace, metrics, summary, files })
}
