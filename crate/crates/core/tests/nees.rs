mod common;

use dob_inekf::models::NoiseConfig;
use dob_inekf::sim::{monte_carlo_nees, monte_carlo_nees_exact_start, Segment, TrajectoryProfile};
use dob_inekf::Error;

#[test]
fn noise_free_run_has_near_zero_nees() {
    let cfg = NoiseConfig::hand_tuned(0.165);
    let mut p = TrajectoryProfile::still(5.0, 0.165);
    p.segments = vec![Segment { duration: 5.0, speed: 1.0, yaw_rate: 0.2 }];
    let r = monte_carlo_nees_exact_start(&p, 20, &cfg).unwrap();
    assert_eq!(r.dim, 12);
    assert!(r.mean < 1e-2, "{}", r.mean);
}

#[test]
fn overconfident_filter_is_detected() {
    let (p, cfg) = common::matched_nees_setup();
    let nominal = monte_carlo_nees(&p, 20, &cfg).unwrap();
    let halved = monte_carlo_nees(&p, 20, &cfg.with_process_noise_scaled(0.5)).unwrap();
    assert!(halved.coverage < 0.9, "{}", halved.coverage);
    assert!(halved.coverage < nominal.coverage);
    assert!(halved.mean > nominal.mean);
}

#[test]
fn needs_twenty_runs() {
    let (p, cfg) = common::matched_nees_setup();
    assert!(matches!(monte_carlo_nees(&p, 19, &cfg), Err(Error::InvalidProfile(_))));
}

#[test]
fn report_is_deterministic() {
    let (mut p, cfg) = common::matched_nees_setup();
    p.duration = 5.0;
    assert_eq!(monte_carlo_nees(&p, 20, &cfg).unwrap(), monte_carlo_nees(&p, 20, &cfg).unwrap());
}
