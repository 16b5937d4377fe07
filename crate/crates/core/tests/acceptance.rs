//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cabin_vlc::allocation::{random_instance, solve_bruteforce, solve_exact, validate, BandSet};
use cabin_vlc::config::Config;
use cabin_vlc::geometry::{shell_box, Direction3, Vec3};
use cabin_vlc::linkbudget::{
    achievable_rate, ook_ber, sinr, ChannelBudget, IsiLimit, NoiseModel, RateModel,
};
use cabin_vlc::radiometry::{radiant_intensity, single_hop_gain, Band, Collector, DetectorBranch, Emitter, Luminaire};
use cabin_vlc::raytrace::{gain_matrix, trace, GainTensor, TraceConfig};
use cabin_vlc::receiver::{build_receivers, BRANCHES};
use cabin_vlc::scenarios::{run_with_scene, ScenarioReport, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn default_scene() -> &'static Scene {
    static S: OnceLock<Scene> = OnceLock::new();
    S.get_or_init(|| Scene::build(&Config::default()).expect("default scene"))
}

/// Default-config reports for scenarios 1..=3, computed once.
fn reports() -> &'static [ScenarioReport] {
    static R: OnceLock<Vec<ScenarioReport>> = OnceLock::new();
    R.get_or_init(|| {
        (1..=3)
            .map(|id| {
                let mut cfg = Config::default();
                cfg.scenario.id = id;
                run_with_scene(&cfg, default_scene()).expect("scenario run")
            })
            .collect()
    })
}

fn c1_radiometry() -> Outcome {
    let scene = shell_box(10.0, 10.0, 10.0, 0.8, 1.0).unwrap();
    let area = 1e-5;
    let mut worst: f64 = 0.0;
    for n in [1.0, 22.99, 45.28] {
        for d in [0.5, 1.1, 2.3, 7.0] {
            let src = Emitter {
                position: Vec3::new(5.0, 5.0, 9.0),
                normal: Direction3::DOWN,
                order: n,
            };
            let dst = Collector {
                position: Vec3::new(5.0, 5.0, 9.0 - d),
                normal: Direction3::UP,
                area,
                cos_fov: Some(21f64.to_radians().cos()),
            };
            let g = single_hop_gain(&src, &dst, &scene).map_err(|e| e.to_string())?;
            let want = (n + 1.0) * area / (2.0 * PI * d * d);
            worst = worst.max(rel(g, want));
        }
    }
    check(worst <= 1e-9, format!("nadir gain off by {worst:e}"))?;

    let mut worst_p: f64 = 0.0;
    for n in [1.0, 22.99, 45.28] {
        let lum = Luminaire {
            id: 1,
            position: Vec3::new(0.0, 0.0, 0.0),
            axis: Direction3::DOWN,
            semi_angle_deg: 10.0,
            order: n,
            power_w: [2.0, 1.0, 0.5, 0.25],
        };
        for band in [Band::Red, Band::Blue] {
            let p = lum.power_w[band.index()];
            let steps = 100_000;
            let h = (PI / 2.0) / steps as f64;
            let total = 2.0
                * PI
                * (0..steps)
                    .map(|i| {
                        let t = (i as f64 + 0.5) * h;
                        radiant_intensity(&lum, band, t) * t.sin() * h
                    })
                    .sum::<f64>();
            worst_p = worst_p.max(rel(total, p));
        }
    }
    check(worst_p <= 1e-6, format!("hemisphere integral off by {worst_p:e}"))?;
    Ok(format!("nadir rel err {worst:.1e}, power rel err {worst_p:.1e}"))
}

fn c2_trace_oracle() -> Outcome {
    let scene = shell_box(2.0, 2.0, 2.0, 0.8, 0.25).unwrap();
    let patches = scene.patches().unwrap();
    let els = common::faces(2.0, 2.0, 2.0, 0.25);
    let cfg = TraceConfig::default();
    let mut worst: f64 = 0.0;
    let cases = [
        (Vec3::new(1.0, 1.0, 1.9), 1.0, Vec3::new(1.3, 0.7, 0.4), Vec3::new(0.3, -0.2, 1.0), 60.0),
        (Vec3::new(0.4, 1.5, 1.95), 1.0, Vec3::new(1.6, 0.5, 0.2), Vec3::new(0.0, 0.0, 1.0), 90.0),
        (Vec3::new(1.5, 0.5, 1.8), 5.0, Vec3::new(0.4, 1.6, 1.2), Vec3::new(-1.0, 0.5, 0.2), 45.0),
    ];
    for (src, n, det, normal, fov) in cases {
        let lum = Luminaire {
            id: 1,
            position: src,
            axis: Direction3::DOWN,
            semi_angle_deg: 60.0,
            order: n,
            power_w: [1.0; 4],
        };
        let d = DetectorBranch {
            device: 1,
            index: 1,
            position: det,
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            normal: Direction3::new(normal).unwrap(),
            fov_deg: fov,
            area_m2: 1e-4,
        };
        let got = trace(&lum, &d, &scene, &patches, &cfg).map_err(|e| e.to_string())?;
        let nn = d.normal.vec();
        let want: f64 = common::reference(
            [src.x, src.y, src.z],
            n,
            [det.x, det.y, det.z],
            [nn.x, nn.y, nn.z],
            1e-4,
            fov,
            0.8,
            &els,
        )
        .iter()
        .sum();
        check(want > 0.0, "degenerate fixture")?;
        worst = worst.max(rel(got.dc_gain(), want));
    }
    check(worst <= 1e-12, format!("H(0) off by {worst:e}"))?;
    Ok(format!("H(0) rel err {worst:.1e} over {} fixtures", cases.len()))
}

/// Scenario-1 tensors at reflection orders 0, 1 and 2 for the default scene.
fn c3_energy_ordering() -> Outcome {
    let cfg = Config::default();
    let scene = default_scene();
    let rx = build_receivers(&scene.section, &cfg.receiver, 1).map_err(|e| e.to_string())?;
    let at = |order: u8, patches: &cabin_vlc::geometry::PatchSet| -> Result<GainTensor, String> {
        let tc = TraceConfig {
            max_order: order,
            ..cfg.trace.clone()
        };
        gain_matrix(&scene.section, patches, &scene.luminaires, &rx, &tc)
            .map(|s| s.tensor)
            .map_err(|e| e.to_string())
    };
    let t0 = at(0, &scene.patches)?;
    let t1 = at(1, &scene.patches)?;
    let t2 = at(2, &scene.patches)?;
    check(t2.dc_gain.len() == 400, format!("{} pairs, expected 400", t2.dc_gain.len()))?;
    let mut strict = 0;
    for k in 0..400 {
        let (a, b, c) = (t0.dc_gain[k], t1.dc_gain[k], t2.dc_gain[k]);
        check(c >= b && b >= a, format!("entry {k}: {c} >= {b} >= {a} fails"))?;
        if c > a {
            strict += 1;
        }
    }
    let mut dark = scene.patches.clone();
    dark.set_reflectance(0.0);
    let d2 = at(2, &dark)?;
    check(d2.dc_gain == t0.dc_gain, "rho = 0 order-2 tensor differs from line of sight")?;
    MIRROR.set(t2).ok();
    Ok(format!("400 pairs ordered ({strict} strictly), rho = 0 equal to LOS"))
}

static MIRROR: OnceLock<GainTensor> = OnceLock::new();

fn c4_mirror() -> Outcome {
    let t = match MIRROR.get() {
        Some(t) => t.clone(),
        None => {
            let cfg = Config::default();
            let scene = default_scene();
            let rx = build_receivers(&scene.section, &cfg.receiver, 1).map_err(|e| e.to_string())?;
            gain_matrix(&scene.section, &scene.patches, &scene.luminaires, &rx, &cfg.trace)
                .map_err(|e| e.to_string())?
                .tensor
        }
    };
    // Seat s ↔ 11 - s; azimuths 45 ↔ 315 and 135 ↔ 225 (branches 1 ↔ 4, 2 ↔ 3).
    let mut worst: f64 = 0.0;
    for l in 0..10 {
        for d in 0..10 {
            for b in 0..BRANCHES {
                let (x, y) = (t.gain(l, d, b), t.gain(9 - l, 9 - d, BRANCHES - 1 - b));
                worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-300));
            }
        }
    }
    check(worst <= 1e-9, format!("mirror mismatch {worst:e} relative"))?;
    Ok(format!("max relative mismatch {worst:.1e}"))
}

fn c5_allocation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let shapes = [(1, 1, 3), (2, 1, 3), (1, 2, 3), (3, 1, 2), (1, 3, 2), (2, 1, 2), (2, 2, 2)];
    let n = 210;
    let mut max_space: f64 = 0.0;
    for i in 0..n {
        let (np, dpp, nl) = shapes[i % shapes.len()];
        let p = random_instance(&mut rng, np, dpp, nl);
        let space: f64 = (0..p.devices.len())
            .map(|d| (p.devices[d].candidates.len() * BRANCHES * p.allowed_sets(d).len()) as f64)
            .product();
        max_space = max_space.max(space);
        let e = solve_exact(&p).map_err(|e| e.to_string())?;
        let b = solve_bruteforce(&p).map_err(|e| e.to_string())?;
        check(
            e.objective == b.objective,
            format!("instance {i}: exact {} vs brute {}", e.objective, b.objective),
        )?;
        let v = validate(&e.assignment, &p);
        check(v.is_empty(), format!("instance {i}: {} violations", v.len()))?;
    }
    Ok(format!("{n} instances equal, largest space {max_space:.0}"))
}

fn bands_by_passenger(r: &ScenarioReport) -> BTreeMap<usize, Vec<String>> {
    let mut m: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for d in &r.devices {
        m.entry(d.passenger).or_default().push(d.bands.clone());
    }
    m
}

fn c6_structure() -> Outcome {
    let r = reports();
    for d in &r[0].devices {
        check(
            d.luminaire == d.passenger && d.bands == BandSet::All.to_string(),
            format!("scenario 1 passenger {}: unit {} bands {}", d.passenger, d.luminaire, d.bands),
        )?;
    }
    let mut summary = Vec::new();
    for rep in &r[1..] {
        let mut used = BTreeMap::<String, usize>::new();
        for (p, bands) in bands_by_passenger(rep) {
            let mut b = bands.clone();
            b.sort();
            b.dedup();
            check(
                b.len() == bands.len(),
                format!("scenario {} passenger {p}: bands {bands:?}", rep.scenario),
            )?;
            for x in bands {
                *used.entry(x).or_default() += 1;
            }
        }
        summary.push(format!("s{} bands {used:?}", rep.scenario));
    }
    Ok(format!("s1 own unit + All; {}", summary.join("; ")))
}

fn min_rate(r: &ScenarioReport) -> f64 {
    r.devices.iter().map(|d| d.rate_bps).fold(f64::INFINITY, f64::min)
}

fn c7_trend() -> Outcome {
    let r = reports();
    let m: Vec<f64> = r.iter().map(min_rate).collect();
    let detail = format!(
        "min device rate s1 {:.2} / s2 {:.2} / s3 {:.2} Gbps",
        m[0] / 1e9,
        m[1] / 1e9,
        m[2] / 1e9
    );
    check(m[0] >= m[1] && m[1] >= m[2], format!("ordering fails: {detail}"))?;
    check(m[0] >= 10e9, format!("scenario 1 below 10 Gbps: {detail}"))?;
    Ok(detail)
}

/// Same scenario-1 run under the delay-spread rate limit, for the record.
fn c7_note() -> String {
    let mut cfg = Config::default();
    cfg.rate.isi_limit = IsiLimit::DelaySpread;
    match run_with_scene(&cfg, default_scene()) {
        Ok(r) => format!(
            "with rate <= kappa / D instead, scenario 1 min device rate is {:.2} Gbps",
            min_rate(&r) / 1e9
        ),
        Err(e) => format!("delay-spread run failed: {e}"),
    }
}

fn c8_linkbudget() -> Outcome {
    let ber = ook_ber(36.3);
    check(
        (0.5e-9..=2e-9).contains(&ber),
        format!("ook_ber(36.3) = {ber:e}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let nm = NoiseModel::default();
    let rm = RateModel {
        isi_limit: IsiLimit::DelaySpread,
        ..RateModel::default()
    };
    let budget = |s: f64, i: f64, d: f64| ChannelBudget {
        signal_a: s,
        interferers_a: vec![i],
        rms_delay_spread_s: d,
        bandwidth_hz: f64::INFINITY,
    };
    let cases = 10_000;
    for c in 0..cases {
        let s = 10f64.powf(rng.gen_range(-7.0..-3.0));
        let i = rng.gen_range(0.0..1e-4);
        let var = 10f64.powf(rng.gen_range(-15.0..-9.0));
        let k = rng.gen_range(1.0..4.0);
        let d = 10f64.powf(rng.gen_range(-12.0..-9.0));
        let base = sinr(s, &[i], var).unwrap();
        check(sinr(s * k, &[i], var).unwrap() >= base, format!("case {c}: sinr vs signal"))?;
        check(sinr(s, &[i * k], var).unwrap() <= base, format!("case {c}: sinr vs interferer"))?;
        let x = rng.gen_range(0.0..100.0);
        check(ook_ber(x + k) <= ook_ber(x), format!("case {c}: ber"))?;
        let r = achievable_rate(&budget(s, i, d), &nm, &rm);
        check(achievable_rate(&budget(s * k, i, d), &nm, &rm) >= r, format!("case {c}: rate vs signal"))?;
        check(achievable_rate(&budget(s, i * k, d), &nm, &rm) <= r, format!("case {c}: rate vs interferer"))?;
        check(achievable_rate(&budget(s, i, d * k), &nm, &rm) <= r, format!("case {c}: rate vs D"))?;
    }
    Ok(format!("ook_ber(36.3) = {ber:.3e}; {cases} randomized cases monotone"))
}

fn c9_determinism() -> Outcome {
    let first = reports()[2].to_csv();
    let mut cfg = Config::default();
    cfg.scenario.id = 3;
    check(cfg.trace.deterministic, "deterministic mode is not the default")?;
    let again = run_with_scene(&cfg, &Scene::build(&cfg).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .to_csv();
    check(first == again, "scenario 3 CSV differs between runs")?;
    Ok(format!("{} byte CSV identical", first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("radiometry oracle", c1_radiometry, Some(Duration::from_secs(1))),
        ("ray-trace oracle", c2_trace_oracle, Some(Duration::from_secs(10))),
        ("reflection-order energy ordering", c3_energy_ordering, Some(Duration::from_secs(300))),
        ("mirror symmetry", c4_mirror, None),
        ("allocation exactness", c5_allocation, Some(Duration::from_secs(120))),
        ("allocation structure", c6_structure, None),
        ("rate trend", c7_trend, None),
        ("link-budget properties", c8_linkbudget, Some(Duration::from_secs(30))),
        ("determinism", c9_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = t.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if took > *l => Err(format!("took {:.2} s, limit {} s", took.as_secs_f64(), l.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {name}: {tag} ({detail}; {:.2} s)", i + 1, took.as_secs_f64());
        if i == 6 {
            println!("  note: {}", c7_note());
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
