//! Network-level behaviour of the default CPG in closed loop.

use cpg_core::bridge::{LoopMode, RunTrace};
use cpg_core::bursting::{burst_metrics, BurstMetrics};
use cpg_core::config::ExperimentConfig;
use cpg_core::cpg::{validate_topology, CpgTopology, Joint, LegId, MotorNeuronMap, MotorRole};
use cpg_core::engine::CompartmentId;
use cpg_core::experiments::{build_closed_loop, cmd_gait, detect_gait_cycle};
use cpg_core::stimulus::poisson_train;

fn run(rate: f64, seconds: f64, seed: u64) -> (RunTrace, CpgTopology) {
    let cl = build_closed_loop(&ExperimentConfig::default()).unwrap();
    let mut watch = vec![cl.topology.bn_l.s, cl.topology.bn_r.s];
    watch.extend(cl.topology.bn_t.iter().map(|h| h.s));
    let train = poisson_train(rate, (seconds * 1000.0) as usize, seed).unwrap();
    let (trace, _) = cl.run(&train, seconds, LoopMode::Sequential, &watch).unwrap();
    (trace, cl.topology)
}

fn bursts(trace: &RunTrace, id: CompartmentId) -> BurstMetrics {
    burst_metrics(trace.watched_spikes(id).unwrap(), 30).unwrap()
}

#[test]
fn triplet_generators_alternate_across_seeds() {
    for seed in 1..=5 {
        let (trace, topo) = run(40.0, 30.0, seed);
        let l = bursts(&trace, topo.bn_l.s).windows();
        let r = bursts(&trace, topo.bn_r.s).windows();
        assert!(l.len() > 10 && r.len() > 10);
        for a in l.iter().filter(|w| w.0 >= 2000) {
            for b in r.iter().filter(|w| w.1 >= 2000) {
                assert!(a.1 < b.0 || b.1 < a.0, "seed {seed}: {a:?} overlaps {b:?}");
            }
        }
        let min_grounded = trace.ticks.iter().map(|t| t.body.n_grounded()).min().unwrap();
        assert!(min_grounded >= 3, "seed {seed}");
    }
}

#[test]
fn tibia_generators_of_one_triplet_are_synchronous() {
    let (trace, topo) = run(40.0, 20.0, 2);
    for triplet in 0..2 {
        let onsets: Vec<Vec<u32>> =
            (0..3).map(|k| bursts(&trace, topo.bn_t[3 * triplet + k].s).burst_onsets).collect();
        assert_eq!(onsets[0].len(), onsets[1].len());
        assert_eq!(onsets[0].len(), onsets[2].len());
        for i in 0..onsets[0].len() {
            let v = [onsets[0][i], onsets[1][i], onsets[2][i]];
            assert!(v.iter().max().unwrap() - v.iter().min().unwrap() <= 50);
        }
    }
}

#[test]
fn tibia_bursts_fall_inside_parent_bursts() {
    let (trace, topo) = run(35.0, 20.0, 6);
    for (i, h) in topo.bn_t.iter().enumerate() {
        let parent = if i < 3 { topo.bn_l.s } else { topo.bn_r.s };
        let pw = bursts(&trace, parent).windows();
        for (o, _) in bursts(&trace, h.s).windows() {
            assert!(pw.iter().any(|&(a, b)| o >= a && o <= b + 2), "BN_T{i} burst at {o} outside its parent");
        }
    }
}

#[test]
fn noise_drive_moves_nothing() {
    let phasic: Vec<u16> = LegId::all()
        .flat_map(|leg| {
            [
                MotorNeuronMap::index(leg, Joint::Tibia, MotorRole::Flexor),
                MotorNeuronMap::index(leg, Joint::Coxa, MotorRole::Flexor),
                MotorNeuronMap::index(leg, Joint::Coxa, MotorRole::Extensor),
            ]
        })
        .map(|k| k as u16)
        .collect();
    for seed in 0..20 {
        let (trace, _) = run(5.0, 10.0, seed);
        assert!(!trace.motor_spikes.iter().any(|(_, k)| phasic.contains(k)), "seed {seed}");
        assert!(trace.speeds().iter().all(|&s| s == 0.0));
        let rest = trace.ticks[0].angles;
        assert!(trace.ticks.iter().all(|t| t.angles == rest));
    }
}

#[test]
fn gait_halves_mirror_each_other() {
    let mut cfg = ExperimentConfig::default();
    cfg.gait.duration_s = 8.0;
    let out = cmd_gait(&cfg).unwrap();
    let p = out.phases;
    let t_epoch = cfg.bridge.t_epoch;
    // Spike steps of one motor neuron within [from, to), relative to `from`.
    let raster = |leg: u8, joint, role, from: u32, to: u32| -> Vec<u32> {
        let k = MotorNeuronMap::index(LegId(leg), joint, role) as u16;
        out.trace
            .motor_spikes
            .iter()
            .filter(|&&(s, n)| n == k && (from..to).contains(&s))
            .map(|&(s, _)| s - from)
            .collect()
    };
    let (first, second) = ((p[0].start_step, p[2].start_step), (p[2].start_step, p[3].end_step));
    for k in 0..3u8 {
        for (joint, role, other) in [
            (Joint::Tibia, MotorRole::Flexor, k),
            (Joint::Coxa, MotorRole::Flexor, k),
            (Joint::Coxa, MotorRole::Extensor, (k + 3) % 6),
        ] {
            let a = raster(other, joint, role, first.0, first.1);
            let b = raster((other + 3) % 6, joint, role, second.0, second.1);
            assert!(!a.is_empty(), "leg {other} {joint:?} {role:?} silent in phases 1-2");
            assert_eq!(a, b, "leg {other} {joint:?} {role:?}");
        }
    }
    // In phase 1 the lifted triplet swings forward while the other pushes back.
    let (t0, t1) = ((p[0].start_step / t_epoch) as usize, (p[0].end_step / t_epoch) as usize);
    let c = |t: usize, leg: usize| out.trace.ticks[t].angles.coxa[leg];
    assert!(c(t1, 0) > c(t0, 0));
    assert!(c(t1, 3) < c(t0, 3));
    let (t2, t3) = ((p[2].start_step / t_epoch) as usize, (p[2].end_step / t_epoch) as usize);
    assert!(c(t3, 3) > c(t2, 3));
    assert!(c(t3, 0) < c(t2, 0));
}

#[test]
fn gait_detection_needs_both_triplets() {
    let (trace, topo) = run(40.0, 6.0, 1);
    let mut crippled = trace.clone();
    for (id, s) in crippled.watched.iter_mut() {
        if *id == topo.bn_r.s {
            s.clear();
        }
    }
    assert!(detect_gait_cycle(&trace, &topo, 30, 2000).is_ok());
    assert!(detect_gait_cycle(&crippled, &topo, 30, 2000).is_err());
}

#[test]
fn default_topology_report() {
    let cl = build_closed_loop(&ExperimentConfig::default()).unwrap();
    let report = validate_topology(&cl.topology);
    assert!(report.all_passed(), "{report}");
    assert_eq!(report.warnings.len(), 1, "{:?}", report.warnings);
    assert!(report.warnings[0].contains("68"));
    let csv = cl.topology.edges_csv();
    assert_eq!(csv.lines().count(), 1 + report.n_synapses);
    assert!(csv.contains("BN_L.S,BN_R.CI,-1000,inhibitory"));
    assert!(csv.contains("BN_T0.S,E_C3,100,excitatory"));
}
