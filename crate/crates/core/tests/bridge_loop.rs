//! Closed-loop soundness: lockstep framing, count conservation, equivalence
//! of the execution modes, and the frame stream.

use std::io::{BufReader, BufWriter, Write};
use std::os::unix::net::UnixStream;

use cpg_core::bridge::{BridgeConfig, ClosedLoop, EpochFrame, JointSet, LoopMode};
use cpg_core::bursting::BurstingNeuronParams;
use cpg_core::cpg::{build_cpg, Joint, LegId, MotorNeuronMap, MotorRole, RoutingWeights, N_LEGS};
use cpg_core::decoder::{decode_step, JointState};
use cpg_core::engine::ExternalEvent;
use cpg_core::plant::{update_plant, BodyState, PlantParams};
use cpg_core::stimulus::{poisson_train, SpikeTrain};

fn closed_loop() -> ClosedLoop {
    let (net, topology) = build_cpg(
        &BurstingNeuronParams::triplet_default(),
        &BurstingNeuronParams::tibia_default(),
        &RoutingWeights::default(),
    )
    .unwrap();
    ClosedLoop {
        net,
        topology,
        plant: PlantParams::default(),
        joints: JointSet::default(),
        bridge: BridgeConfig::default(),
    }
}

#[test]
fn frame_indices_consecutive_and_counts_conserved() {
    let cl = closed_loop();
    let train = poisson_train(40.0, 100_000, 9).unwrap();
    let (trace, metrics) = cl.run(&train, 100.0, LoopMode::Sequential, &[]).unwrap();
    assert_eq!(trace.frames.len(), 10_000);
    let mut per_epoch = vec![vec![0u16; 24]; trace.frames.len()];
    for &(step, k) in &trace.motor_spikes {
        per_epoch[(step / 10) as usize][k as usize] += 1;
    }
    for (i, f) in trace.frames.iter().enumerate() {
        assert_eq!(f.epoch_index, i as u32);
        assert_eq!(f.n_neurons(), 24);
        assert!(f.counts.iter().all(|&c| c <= 10));
        assert_eq!(f.counts, per_epoch[i], "epoch {i}");
    }
    assert_eq!(metrics.engine_steps, 100_000);
    assert_eq!(metrics.boundary_crossings * 10, metrics.engine_steps);
}

/// Engine stepped one step at a time through the public per-step API; counts
/// are aggregated per tick and decoded exactly as the controller does.
fn reference_pipeline(cl: &ClosedLoop, train: &SpikeTrain, n_ticks: usize) -> Vec<(cpg_core::plant::LegAngles, BodyState)> {
    let mut net = cl.net.clone();
    let port = cl.topology.sensory_port();
    let frame_index: std::collections::HashMap<_, _> =
        cl.topology.motor.entries().iter().enumerate().map(|(k, m)| (m.id, k)).collect();
    let mut is_input = vec![false; n_ticks * 10];
    for &t in train.spikes() {
        if (t as usize) < is_input.len() {
            is_input[t as usize] = true;
        }
    }
    let mut angles = cl.joints.rest_pose();
    let mut body = BodyState::default();
    let mut out = Vec::new();
    for tick in 0..n_ticks {
        let mut counts = [0u32; 24];
        for step in tick * 10..(tick + 1) * 10 {
            let ext: Vec<ExternalEvent> = if is_input[step] {
                port.iter().map(|&(dst, weight)| ExternalEvent { dst, weight }).collect()
            } else {
                vec![]
            };
            for id in net.step_network(&ext).unwrap() {
                if let Some(&k) = frame_index.get(&id) {
                    counts[k] += 1;
                }
            }
        }
        let prev = angles;
        let c = |leg: usize, j, r| counts[MotorNeuronMap::index(LegId(leg as u8), j, r)];
        for leg in 0..N_LEGS {
            angles.tibia[leg] = decode_step(
                JointState { theta: angles.tibia[leg] },
                c(leg, Joint::Tibia, MotorRole::Flexor),
                c(leg, Joint::Tibia, MotorRole::Extensor),
                &cl.joints.tibia,
            )
            .theta;
            angles.coxa[leg] = decode_step(
                JointState { theta: angles.coxa[leg] },
                c(leg, Joint::Coxa, MotorRole::Flexor),
                c(leg, Joint::Coxa, MotorRole::Extensor),
                &cl.joints.coxa,
            )
            .theta;
        }
        body = update_plant(&body, &angles, &prev, &cl.joints.tibia, &cl.plant);
        out.push((angles, body));
    }
    out
}

#[test]
fn batched_loop_matches_per_step_reference() {
    let cl = closed_loop();
    let train = poisson_train(45.0, 8_000, 21).unwrap();
    let (trace, _) = cl.run(&train, 8.0, LoopMode::Sequential, &[]).unwrap();
    let reference = reference_pipeline(&cl, &train, 800);
    assert_eq!(trace.ticks.len(), reference.len());
    for (k, (t, (a, b))) in trace.ticks.iter().zip(&reference).enumerate() {
        assert_eq!(t.angles, *a, "angles at tick {k}");
        assert_eq!(t.body, *b, "body at tick {k}");
    }
    assert!(trace.ticks.last().unwrap().body.x > 0.0, "the comparison should cover walking");
}

#[test]
fn threaded_matches_sequential() {
    let cl = closed_loop();
    let train = poisson_train(40.0, 5_000, 4).unwrap();
    let watch = [cl.topology.bn_l.s, cl.topology.bn_r.s];
    let (a, _) = cl.run(&train, 5.0, LoopMode::Sequential, &watch).unwrap();
    let (b, _) = cl.run(&train, 5.0, LoopMode::Threaded, &watch).unwrap();
    assert_eq!(a, b);
}

#[test]
fn realtime_matches_free_run() {
    let mut cl = closed_loop();
    let train = poisson_train(40.0, 400, 8).unwrap();
    let (free, m_free) = cl.run(&train, 0.4, LoopMode::Sequential, &[]).unwrap();
    cl.bridge.realtime = true;
    let (paced, m_paced) = cl.run(&train, 0.4, LoopMode::Threaded, &[]).unwrap();
    assert_eq!(free, paced);
    assert!(m_paced.wall_time >= 0.39, "paced run took {}", m_paced.wall_time);
    assert!(m_free.wall_time < m_paced.wall_time);
    assert_eq!(m_paced.t_exec.len(), 40);
}

#[test]
fn duration_bookkeeping() {
    let cl = closed_loop();
    let train = poisson_train(40.0, 60_000, 1).unwrap();
    let (t, m) = cl.run(&train, 0.0, LoopMode::Sequential, &[]).unwrap();
    assert!(t.frames.is_empty() && t.ticks.is_empty() && m.t_exec.is_empty());
    let (t, m) = cl.run(&train, 60.0, LoopMode::Sequential, &[]).unwrap();
    assert_eq!((t.ticks.len(), m.engine_steps), (6000, 60_000));
}

#[test]
fn mismatched_plant_period_rejected() {
    let mut cl = closed_loop();
    cl.plant.dt = 0.02;
    let train = poisson_train(40.0, 100, 1).unwrap();
    assert!(cl.run(&train, 0.1, LoopMode::Sequential, &[]).is_err());
}

#[test]
fn frames_cross_a_unix_socket_bit_exact() {
    let cl = closed_loop();
    let train = poisson_train(40.0, 3_000, 2).unwrap();
    let (trace, _) = cl.run(&train, 3.0, LoopMode::Sequential, &[]).unwrap();
    let (tx, rx) = UnixStream::pair().unwrap();
    let frames = trace.frames.clone();
    let writer = std::thread::spawn(move || {
        let mut w = BufWriter::new(tx);
        for f in &frames {
            f.write_to(&mut w).unwrap();
        }
        w.flush().unwrap();
    });
    let mut r = BufReader::new(rx);
    let mut got = Vec::new();
    while let Some(f) = EpochFrame::read_from(&mut r).unwrap() {
        got.push(f);
    }
    writer.join().unwrap();
    assert_eq!(got, trace.frames);
    let bytes: Vec<u8> = trace.frames.iter().flat_map(|f| f.encode()).collect();
    assert_eq!(bytes.len(), trace.frames.len() * (6 + 48));
}
