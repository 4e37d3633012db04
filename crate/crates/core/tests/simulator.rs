use uavplan::channel::FadingMode;
use uavplan::simulator::{run, run_scenario, sweep, Algorithm, SimConfig, Simulation, SweepParam};
use uavplan::world::generate_scenario;

fn cfg(seed: u64) -> SimConfig {
    let mut c = SimConfig::default();
    c.region.width = 200.0;
    c.region.height = 200.0;
    c.users.count = 12;
    c.obstacles.count = 8;
    c.sim.slots = 12;
    c.sim.cell_size = 2.0;
    c.sim.seed = seed;
    c
}

#[test]
fn displacement_and_identity_hold_every_slot() {
    for seed in 1..=4 {
        for alg in [Algorithm::Proposed, Algorithm::Baseline] {
            let mut c = cfg(seed);
            c.sim.algorithm = alg;
            let s = run(&c).unwrap();
            let bound = c.uav.vmax * c.sim.dt + c.sim.cell_size / 2.0;
            for m in &s.slots {
                assert!(m.uav_displacement <= bound + 1e-9);
                assert_eq!(m.sum_throughput, m.urllc_throughput + m.embb_throughput);
                assert!(m.urllc_throughput >= 0.0 && m.embb_throughput >= 0.0);
            }
        }
    }
}

#[test]
fn deterministic_urllc_rate_meets_threshold() {
    for seed in 1..=4 {
        let mut c = cfg(seed);
        c.sim.fading_mode = FadingMode::Deterministic;
        let s = run(&c).unwrap();
        for m in &s.slots {
            let served = (m.urllc_covered_count - m.coverage_violations) as f64;
            assert!(m.urllc_throughput >= served * c.users.urllc_threshold * (1.0 - 1e-12));
        }
    }
}

#[test]
fn covered_count_bounded_by_urllc_population() {
    let c = cfg(9);
    let sim = Simulation::new(c.clone()).unwrap();
    let n_urllc = sim.users.iter().filter(|u| u.is_urllc()).count();
    let s = sim.run_to_end().unwrap();
    assert!(s.slots.iter().all(|m| m.urllc_covered_count <= n_urllc));
}

#[test]
fn user_order_does_not_matter() {
    let mut c = cfg(5);
    c.sim.fading_mode = FadingMode::Deterministic;
    let sc = generate_scenario(&c, c.sim.seed).unwrap();
    let mut rev = sc.clone();
    rev.users.reverse();
    let a = run_scenario(&c, sc).unwrap();
    let b = run_scenario(&c, rev).unwrap();
    for (x, y) in a.slots.iter().zip(&b.slots) {
        assert_eq!(x.urllc_covered_count, y.urllc_covered_count);
        assert_eq!(x.uav_displacement, y.uav_displacement);
        assert!((x.sum_throughput - y.sum_throughput).abs() <= 1e-9 * x.sum_throughput.max(1.0));
    }
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let c = cfg(1);
    let go = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            sweep(&c, SweepParam::ObstacleCount, &[0.0, 6.0], &[1, 2], &[Algorithm::Proposed, Algorithm::Baseline])
                .unwrap()
        })
    };
    let one = go(1);
    let four = go(4);
    assert_eq!(one.len(), 8);
    for (a, b) in one.iter().zip(&four) {
        assert_eq!((a.value, a.seed, a.algorithm), (b.value, b.seed, b.algorithm));
        assert_eq!(a.summary.slots, b.summary.slots);
    }
}

#[test]
fn replayed_scenario_is_bit_exact() {
    let c = cfg(3);
    let sc = generate_scenario(&c, c.sim.seed).unwrap();
    let text = uavplan::cli::emit_scenario_file(&c, &sc);
    let (c2, sc2) = uavplan::cli::parse_scenario_file(&text).unwrap();
    assert_eq!(run(&c).unwrap().slots, run_scenario(&c2, sc2).unwrap().slots);
}
