//! Calibration report for the default CPG profiles.
//!
//! Usage: `cargo run --release --example calibrate [duration_s] [n_seeds]`.
//! Individual parameters can be overridden through environment variables
//! named after the fields, prefixed `TRIPLET_`, `TIBIA_` or `W_`
//! (e.g. `TRIPLET_CI_DEC=4 W_MUTUAL_INHIBITION=-800`).

use cpg_core::bridge::*;
use cpg_core::bursting::*;
use cpg_core::cpg::*;
use cpg_core::plant::*;
use cpg_core::stimulus::*;

fn env_i32(name: &str, v: &mut i32) {
    if let Ok(s) = std::env::var(name) {
        *v = s.parse().expect(name);
    }
}

fn env_params(prefix: &str, p: &mut BurstingNeuronParams) {
    env_i32(&format!("{prefix}_INPUT_WEIGHT"), &mut p.input_weight);
    env_i32(&format!("{prefix}_INP_DEC"), &mut p.inp_dec);
    env_i32(&format!("{prefix}_AM_DEC"), &mut p.am_dec);
    env_i32(&format!("{prefix}_AM_THRESHOLD"), &mut p.am_threshold);
    env_i32(&format!("{prefix}_CI_DEC"), &mut p.ci_dec);
    env_i32(&format!("{prefix}_CI_THRESHOLD"), &mut p.ci_threshold);
    env_i32(&format!("{prefix}_IN_WEIGHT"), &mut p.in_weight);
    env_i32(&format!("{prefix}_S_TO_IN_WEIGHT"), &mut p.s_to_in_weight);
    if let Ok(s) = std::env::var(format!("{prefix}_S_SPIKES_TO_RESET")) {
        p.s_spikes_to_reset = s.parse().unwrap();
    }
}

fn overlaps(a: &[(u32, u32)], b: &[(u32, u32)], after: u32) -> usize {
    a.iter()
        .filter(|w| w.0 >= after)
        .map(|x| b.iter().filter(|y| x.0 <= y.1 && y.0 <= x.1).count())
        .sum()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dur: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30.0);
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let mut triplet = BurstingNeuronParams::triplet_default();
    let mut tibia = BurstingNeuronParams::tibia_default();
    let mut w = RoutingWeights::default();
    env_params("TRIPLET", &mut triplet);
    env_params("TIBIA", &mut tibia);
    env_i32("W_MUTUAL_INHIBITION", &mut w.mutual_inhibition);
    env_i32("W_RIGHT_THRESHOLD_OFFSET", &mut w.right_threshold_offset);
    env_i32("W_TIBIA_TO_MOTOR", &mut w.tibia_to_motor);
    env_i32("W_TIBIA_TO_EXTENSOR", &mut w.tibia_to_extensor);
    env_i32("W_CONTRALATERAL", &mut w.contralateral);
    env_i32("W_TONIC_BIAS", &mut w.tonic_bias);
    let rates: Vec<f64> = std::env::var("RATES")
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|_| vec![5.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]);

    let (net, topo) = build_cpg(&triplet, &tibia, &w).unwrap();
    let cl = ClosedLoop {
        net,
        topology: topo.clone(),
        plant: PlantParams::default(),
        joints: JointSet::default(),
        bridge: BridgeConfig::default(),
    };
    let mut watch = vec![topo.bn_l.s, topo.bn_r.s];
    watch.extend(topo.bn_t.iter().map(|h| h.s));
    let skip = 2000;
    println!("rate | speed(mean,min,max) | bursts L/R, period L, short bursts, overlaps | T/L ratio min..max | min grounded | phasic motor");
    for rate in rates {
        let mut speeds = vec![];
        let (mut nl, mut nr, mut short, mut ovl, mut ming, mut phasic) = (0, 0, 0, 0, 6usize, 0usize);
        let (mut rmin, mut rmax, mut per) = (f64::MAX, f64::MIN, 0.0);
        for seed in 0..seeds {
            let train = poisson_train(rate, (dur * 1000.0) as usize, seed + 1).unwrap();
            let (tr, _) = cl.run(&train, dur, LoopMode::Sequential, &watch).unwrap();
            let m = |id| burst_metrics(tr.watched_spikes(id).unwrap(), DEFAULT_GAP_MS).unwrap();
            let (l, r) = (m(topo.bn_l.s), m(topo.bn_r.s));
            nl += l.n_bursts;
            nr += r.n_bursts;
            per += l.mean_period().unwrap_or(0.0) / seeds as f64;
            let s = triplet.s_spikes_to_reset as usize / 2;
            short += l.spikes_per_burst.iter().chain(&r.spikes_per_burst).filter(|&&n| n < s).count();
            ovl += overlaps(&l.windows(), &r.windows(), skip) + overlaps(&r.windows(), &l.windows(), skip);
            for (i, h) in topo.bn_t.iter().enumerate() {
                let parent = if i < 3 { &l } else { &r };
                if parent.n_bursts > 0 {
                    let q = m(h.s).n_bursts as f64 / parent.n_bursts as f64;
                    rmin = rmin.min(q);
                    rmax = rmax.max(q);
                }
            }
            ming = ming.min(tr.ticks.iter().skip(200).map(|t| t.body.n_grounded()).min().unwrap_or(6));
            let tonic: Vec<_> = topo.motor.entries().iter().filter(|e| e.joint == Joint::Tibia && e.role == MotorRole::Extensor).map(|e| MotorNeuronMap::index(e.leg, e.joint, e.role) as u16).collect();
            phasic += tr.motor_spikes.iter().filter(|(_, k)| !tonic.contains(k)).count();
            let sp = tr.speeds();
            speeds.push(sp.iter().sum::<f64>() / sp.len() as f64);
        }
        let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
        let lo = speeds.iter().cloned().fold(f64::MAX, f64::min);
        let hi = speeds.iter().cloned().fold(f64::MIN, f64::max);
        if rmin == f64::MAX {
            (rmin, rmax) = (0.0, 0.0);
        }
        println!(
            "{rate:>4} | {mean:.4} {lo:.4} {hi:.4} | {nl}/{nr} {per:.0}ms short {short} ovl {ovl} | {rmin:.2}..{rmax:.2} | {ming} | {phasic}"
        );
    }
}
