//! End-to-end runs on a coarse mesh.

use cabin_vlc::allocation::validate;
use cabin_vlc::config::Config;
use cabin_vlc::scenarios::{
    build_problem, run_scenario, run_with_scene, sweep, Aggregates, Scene,
};

fn coarse() -> Config {
    let mut cfg = Config::default();
    cfg.cabin.first_order_element_m = 0.25;
    cfg.cabin.second_order_element_m = 0.5;
    cfg
}

#[test]
fn zero_reflectance_matches_line_of_sight_run() {
    let mut cfg = coarse();
    cfg.cabin.ceiling_reflectance = 0.0;
    cfg.cabin.wall_reflectance = 0.0;
    cfg.cabin.floor_reflectance = 0.0;
    let dark = run_scenario(&cfg).unwrap();
    cfg.trace.max_order = 0;
    let los = run_scenario(&cfg).unwrap();
    assert_eq!(dark.to_csv(), los.to_csv());
    assert_eq!(dark.assignment, los.assignment);
}

#[test]
fn one_row_per_device_and_consistent_aggregates() {
    let mut cfg = coarse();
    cfg.scenario.id = 2;
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.devices.len(), 20);
    assert_eq!(Aggregates::of(&r.devices), r.aggregates);
    assert_eq!(r.to_csv().lines().count(), 21);
    for d in &r.devices {
        assert!((d.sinr_db - 10.0 * d.sinr.log10()).abs() < 1e-12);
        assert!((0.0..=0.5).contains(&d.ber));
        assert!(d.rate_bps >= 0.0);
    }
    assert!(r.runtime.is_none());
}

#[test]
fn solved_scenarios_validate() {
    let cfg = coarse();
    let scene = Scene::build(&cfg).unwrap();
    for id in 1..=3 {
        let (p, _) = build_problem(&scene, &cfg, id).unwrap();
        assert_eq!(p.devices.len(), 10 * id as usize);
        let s = cabin_vlc::allocation::solve_exact(&p).unwrap();
        assert!(validate(&s.assignment, &p).is_empty(), "scenario {id}");
    }
}

#[test]
fn sweep_shapes() {
    let cfg = coarse();
    assert!(sweep(&cfg, "receiver.fov_deg", &[]).unwrap().is_empty());
    let r = sweep(&cfg, "receiver.fov_deg", &[15.0, 21.0, 30.0]).unwrap();
    assert_eq!(r.len(), 3);
    assert!(sweep(&cfg, "receiver.no_such_key", &[1.0]).is_err());
}

#[test]
fn more_power_never_lowers_interference_free_sinr() {
    // Scenario 1 on its own luminaires: no band is shared, so every link is
    // interference-free and SINR grows with power.
    let cfg = coarse();
    let reports = sweep(&cfg, "luminaires.power_per_led_w", &[0.25, 0.5, 1.0, 2.0, 4.0]).unwrap();
    for w in reports.windows(2) {
        for (a, b) in w[0].devices.iter().zip(&w[1].devices) {
            assert_eq!(a.luminaire, a.passenger);
            assert!(b.sinr >= a.sinr, "passenger {}", a.passenger);
        }
    }
}

#[test]
fn reloaded_scene_reproduces_the_report() {
    let cfg = coarse();
    let scene = Scene::build(&cfg).unwrap();
    let again = Scene::from_json(&scene.to_json()).unwrap();
    assert_eq!(again.content_hash(), scene.content_hash());
    let a = run_with_scene(&cfg, &scene).unwrap();
    let b = run_with_scene(&cfg, &again).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn parallel_reduction_agrees_with_deterministic() {
    let mut cfg = coarse();
    let scene = Scene::build(&cfg).unwrap();
    let (_, a) = cabin_vlc::scenarios::trace_devices(&scene, &cfg, 1).unwrap();
    cfg.trace.deterministic = false;
    let (_, b) = cabin_vlc::scenarios::trace_devices(&scene, &cfg, 1).unwrap();
    for (x, y) in a.tensor.dc_gain.iter().zip(&b.tensor.dc_gain) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
    }
}

#[test]
fn stage_errors_are_labelled() {
    let mut cfg = coarse();
    cfg.luminaires.height_m = 0.5;
    let e = run_scenario(&cfg).unwrap_err().to_string();
    assert!(e.contains("scene"), "{e}");
}
