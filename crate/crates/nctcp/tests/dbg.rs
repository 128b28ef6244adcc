use nctcp::scenario::*;

fn tp(nc: bool, per: f64, seed: u64) -> f64 {
    let cfg = ScenarioConfig {
        per, seed, t_end_s: 200.0,
        flows: vec![FlowConfig { nc_enabled: nc, ..Default::default() }],
        ..Default::default()
    };
    run(&cfg).unwrap().steady_state_throughput(0)
}

#[test]
fn dbg_grid() {
    for seed in [1u64, 2, 3] {
        let anchor = tp(true, 0.05, seed);
        let mut worst: f64 = 1.0;
        for per in [0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35] {
            let v = tp(true, per, seed);
            let r = v / anchor;
            worst = worst.min(r);
            eprint!("{:.2} ", r);
        }
        eprintln!("| seed {seed} worst ratio {worst:.3}");
    }
    // crossover + per=0 ordering for each seed
    for seed in [1u64, 2, 3] {
        let nc0 = tp(true, 0.0, seed);
        let tr0 = tp(false, 0.0, seed);
        let nc2 = tp(true, 0.02, seed);
        let tr2 = tp(false, 0.02, seed);
        let nc5 = tp(true, 0.05, seed);
        let tr5 = tp(false, 0.05, seed);
        eprintln!("seed {seed}: per0 nc={nc0:.1} trad={tr0:.1}; per.02 nc={nc2:.1} trad={tr2:.1}; per.05 nc={nc5:.1} trad={tr5:.1}");
    }
}
