//! Four-branch angle-diversity receivers, branch photocurrents and
//! select-best branch choice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CabinSection, Direction3, Point3, Vec3};
use crate::linkbudget::{noise_variance, sinr, NoiseModel};
use crate::radiometry::{Band, DetectorBranch, Luminaire, DEFAULT_RESPONSIVITY};
use crate::raytrace::GainTensor;

/// Detector branches per receiver.
pub const BRANCHES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub elevation_deg: f64,
    pub azimuth_deg: [f64; BRANCHES],
    pub fov_deg: f64,
    pub area_m2: f64,
    /// A/W, ordered red, yellow, green, blue.
    pub responsivity_a_per_w: [f64; 4],
    /// Horizontal `[dx, dy]` offset of each device of a passenger from the
    /// seat-top centre; device `k` uses entry `k`.
    pub device_offsets_m: Vec<[f64; 2]>,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            elevation_deg: 70.0,
            azimuth_deg: [45.0, 135.0, 225.0, 315.0],
            fov_deg: 21.0,
            area_m2: 1e-5,
            responsivity_a_per_w: DEFAULT_RESPONSIVITY,
            device_offsets_m: vec![[0.0, 0.0], [0.0, 0.15], [0.0, -0.15]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleDiversityReceiver {
    pub device: usize,
    pub passenger: usize,
    pub position: Point3,
    pub branches: [DetectorBranch; BRANCHES],
}

/// Unit vector at elevation `el` above the horizontal plane and azimuth `az`
/// measured from `+x` toward `+y`.
pub fn orient(el_deg: f64, az_deg: f64) -> Result<Direction3> {
    if !(0.0..=90.0).contains(&el_deg) {
        return Err(Error::invalid(
            "elevation",
            format!("must lie in [0, 90] degrees, got {el_deg}"),
        ));
    }
    if !(0.0..360.0).contains(&az_deg) {
        return Err(Error::invalid(
            "azimuth",
            format!("must lie in [0, 360) degrees, got {az_deg}"),
        ));
    }
    let (el, az) = (el_deg.to_radians(), az_deg.to_radians());
    Direction3::new(Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()))
}

impl AngleDiversityReceiver {
    pub fn new(
        device: usize,
        passenger: usize,
        position: Point3,
        cfg: &ReceiverConfig,
    ) -> Result<Self> {
        if !(cfg.fov_deg > 0.0 && cfg.fov_deg <= 90.0) {
            return Err(Error::invalid(
                "fov_deg",
                format!("must lie in (0, 90], got {}", cfg.fov_deg),
            ));
        }
        if !(cfg.area_m2 > 0.0) {
            return Err(Error::invalid("area_m2", "must be positive"));
        }
        let mut branches = Vec::with_capacity(BRANCHES);
        for (k, &az) in cfg.azimuth_deg.iter().enumerate() {
            branches.push(DetectorBranch {
                device,
                index: k + 1,
                position,
                elevation_deg: cfg.elevation_deg,
                azimuth_deg: az,
                normal: orient(cfg.elevation_deg, az)?,
                fov_deg: cfg.fov_deg,
                area_m2: cfg.area_m2,
            });
        }
        Ok(Self {
            device,
            passenger,
            position,
            branches: branches.try_into().expect("four branches"),
        })
    }
}

/// Places `devices_per_passenger` receivers on every passenger's seat top.
/// Device ids run 1.. in passenger-major order.
pub fn build_receivers(
    scene: &CabinSection,
    cfg: &ReceiverConfig,
    devices_per_passenger: usize,
) -> Result<Vec<AngleDiversityReceiver>> {
    if devices_per_passenger > cfg.device_offsets_m.len() {
        return Err(Error::invalid(
            "device_offsets_m",
            format!(
                "{devices_per_passenger} devices per passenger need as many offsets, {} given",
                cfg.device_offsets_m.len()
            ),
        ));
    }
    let mut out = Vec::new();
    for seat in &scene.seats {
        for (k, off) in cfg.device_offsets_m.iter().take(devices_per_passenger).enumerate() {
            let p = seat.top_center + Vec3::new(off[0], off[1], 0.0);
            if !seat.footprint.contains_xy(p.x, p.y) {
                return Err(Error::Geometry(format!(
                    "device {} of passenger {} at {:?} is off its seat top",
                    k + 1,
                    seat.passenger,
                    p
                )));
            }
            let id = out.len() + 1;
            out.push(AngleDiversityReceiver::new(id, seat.passenger, p, cfg)?);
        }
    }
    Ok(out)
}

/// Photocurrent from one active transmission on one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSignal {
    /// 1-based.
    pub branch: usize,
    pub band: Band,
    pub current_a: f64,
    pub luminaire: usize,
}

/// An active (luminaire, band) transmission at the given optical power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub luminaire: usize,
    pub band: Band,
    pub power_w: f64,
}

/// Per-branch photocurrents at `rx` from every active transmission.
pub fn branch_photocurrents(
    rx: &AngleDiversityReceiver,
    active: &[Transmission],
    gains: &GainTensor,
    responsivity: &[f64; 4],
) -> Result<Vec<BranchSignal>> {
    let dev = gains
        .device_index(rx.device)
        .ok_or_else(|| Error::invalid("device", format!("{} not in gain tensor", rx.device)))?;
    let mut out = Vec::with_capacity(active.len() * BRANCHES);
    for t in active {
        let l = gains
            .luminaire_index(t.luminaire)
            .ok_or(Error::UnknownLuminaire(t.luminaire))?;
        for b in 0..BRANCHES {
            out.push(BranchSignal {
                branch: b + 1,
                band: t.band,
                current_a: responsivity[t.band.index()] * gains.gain(l, dev, b) * t.power_w,
                luminaire: t.luminaire,
            });
        }
    }
    Ok(out)
}

/// Sum of photocurrents on one branch and band.
pub fn total_current(signals: &[BranchSignal], branch: usize, band: Band) -> f64 {
    signals
        .iter()
        .filter(|s| s.branch == branch && s.band == band)
        .map(|s| s.current_a)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchChoice {
    /// 1-based branch index and its SINR.
    Branch { index: usize, sinr: f64 },
    NoCoverage,
}

/// Co-channel SINR of `serving` on every branch at the reference bandwidth.
pub fn branch_sinrs(
    rx: &AngleDiversityReceiver,
    serving: usize,
    band: Band,
    interferers: &[usize],
    gains: &GainTensor,
    luminaires: &[Luminaire],
    responsivity: &[f64; 4],
    noise: &NoiseModel,
) -> Result<[f64; BRANCHES]> {
    let power = |id: usize| -> Result<f64> {
        luminaires
            .iter()
            .find(|l| l.id == id)
            .map(|l| l.power_w[band.index()])
            .ok_or(Error::UnknownLuminaire(id))
    };
    let mut active = vec![Transmission {
        luminaire: serving,
        band,
        power_w: power(serving)?,
    }];
    for &i in interferers {
        active.push(Transmission {
            luminaire: i,
            band,
            power_w: power(i)?,
        });
    }
    let signals = branch_photocurrents(rx, &active, gains, responsivity)?;
    let mut out = [0.0; BRANCHES];
    for (b, slot) in out.iter_mut().enumerate() {
        let on_branch = signals.iter().filter(|s| s.branch == b + 1);
        let s: f64 = on_branch
            .clone()
            .filter(|s| s.luminaire == serving)
            .map(|s| s.current_a)
            .sum();
        let interf: Vec<f64> = on_branch
            .filter(|s| s.luminaire != serving)
            .map(|s| s.current_a)
            .collect();
        let total = noise.background_current_a + s + interf.iter().sum::<f64>();
        let var = noise_variance(noise, total, noise.reference_bandwidth_hz)?;
        *slot = sinr(s, &interf, var)?;
    }
    Ok(out)
}

/// Branch with the highest SINR for `serving` on `band`; ties go to the
/// lowest index.
pub fn best_branch(
    rx: &AngleDiversityReceiver,
    serving: usize,
    band: Band,
    interferers: &[usize],
    gains: &GainTensor,
    luminaires: &[Luminaire],
    responsivity: &[f64; 4],
    noise: &NoiseModel,
) -> Result<BranchChoice> {
    let l = gains
        .luminaire_index(serving)
        .ok_or(Error::UnknownLuminaire(serving))?;
    let dev = gains
        .device_index(rx.device)
        .ok_or_else(|| Error::invalid("device", format!("{} not in gain tensor", rx.device)))?;
    if (0..BRANCHES).all(|b| gains.gain(l, dev, b) == 0.0) {
        return Ok(BranchChoice::NoCoverage);
    }
    let s = branch_sinrs(rx, serving, band, interferers, gains, luminaires, responsivity, noise)?;
    Ok(select_best(&s))
}

/// Index of the maximum, lowest index on ties; `NoCoverage` when all zero.
pub fn select_best(sinrs: &[f64; BRANCHES]) -> BranchChoice {
    let mut best: Option<(usize, f64)> = None;
    for (b, &v) in sinrs.iter().enumerate() {
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((b, v));
        }
    }
    match best {
        Some((b, v)) if v > 0.0 => BranchChoice::Branch {
            index: b + 1,
            sinr: v,
        },
        _ => BranchChoice::NoCoverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raytrace::DeviceKey;

    #[test]
    fn orient_examples() {
        let z = orient(90.0, 123.0).unwrap().vec();
        assert!((z - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        let x = orient(0.0, 0.0).unwrap().vec();
        assert!((x - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let d = orient(70.0, 45.0).unwrap().vec();
        assert!((d.z - 0.939_692_620_785_908_4).abs() < 1e-12);
        assert!((d.x - d.y).abs() < 1e-15);
        assert!(orient(91.0, 0.0).is_err());
        assert!(orient(10.0, 360.0).is_err());
    }

    fn tensor(gains: &[[f64; BRANCHES]]) -> GainTensor {
        let nl = gains.len();
        GainTensor {
            luminaires: (1..=nl).collect(),
            devices: vec![DeviceKey { id: 1, passenger: 1 }],
            branches: BRANCHES,
            dc_gain: gains.iter().flatten().copied().collect(),
            bandwidth_hz: vec![f64::INFINITY; nl * BRANCHES],
            rms_delay_spread_s: vec![0.0; nl * BRANCHES],
        }
    }

    fn rx() -> AngleDiversityReceiver {
        AngleDiversityReceiver::new(1, 1, Vec3::new(1.0, 1.0, 1.0), &ReceiverConfig::default())
            .unwrap()
    }

    #[test]
    fn single_source_currents() {
        let g = tensor(&[[2e-5, 0.0, 1e-5, 0.0]]);
        let act = [Transmission {
            luminaire: 1,
            band: Band::Red,
            power_w: 2.0,
        }];
        let sig = branch_photocurrents(&rx(), &act, &g, &DEFAULT_RESPONSIVITY).unwrap();
        assert_eq!(total_current(&sig, 1, Band::Red), 0.4 * 2e-5 * 2.0);
        assert_eq!(total_current(&sig, 2, Band::Red), 0.0);
        assert_eq!(total_current(&sig, 3, Band::Red), 0.4 * 1e-5 * 2.0);
        let none = branch_photocurrents(&rx(), &[], &g, &DEFAULT_RESPONSIVITY).unwrap();
        assert!(none.iter().all(|s| s.current_a == 0.0));
        let bad = [Transmission {
            luminaire: 9,
            ..act[0]
        }];
        assert!(matches!(
            branch_photocurrents(&rx(), &bad, &g, &DEFAULT_RESPONSIVITY),
            Err(Error::UnknownLuminaire(9))
        ));
    }

    #[test]
    fn superposition_of_two_sources() {
        let g = tensor(&[[2e-5, 1e-6, 3e-6, 0.0], [1e-6, 4e-6, 0.0, 5e-6]]);
        let a = Transmission {
            luminaire: 1,
            band: Band::Green,
            power_w: 1.5,
        };
        let b = Transmission {
            luminaire: 2,
            band: Band::Green,
            power_w: 0.7,
        };
        let r = rx();
        let both = branch_photocurrents(&r, &[a, b], &g, &DEFAULT_RESPONSIVITY).unwrap();
        let only_a = branch_photocurrents(&r, &[a], &g, &DEFAULT_RESPONSIVITY).unwrap();
        let only_b = branch_photocurrents(&r, &[b], &g, &DEFAULT_RESPONSIVITY).unwrap();
        for br in 1..=BRANCHES {
            let sum =
                total_current(&only_a, br, Band::Green) + total_current(&only_b, br, Band::Green);
            let joint = total_current(&both, br, Band::Green);
            assert!((sum - joint).abs() <= 1e-18);
        }
    }

    fn lums(n: usize) -> Vec<Luminaire> {
        (1..=n)
            .map(|id| Luminaire {
                id,
                position: Vec3::new(0.0, 0.0, 2.0),
                axis: Direction3::DOWN,
                semi_angle_deg: 14.0,
                order: 23.0,
                power_w: [1.0; 4],
            })
            .collect()
    }

    #[test]
    fn best_branch_single_visible() {
        let g = tensor(&[[0.0, 0.0, 3e-5, 0.0]]);
        let c = best_branch(
            &rx(),
            1,
            Band::Red,
            &[],
            &g,
            &lums(1),
            &DEFAULT_RESPONSIVITY,
            &NoiseModel::default(),
        )
        .unwrap();
        assert!(matches!(c, BranchChoice::Branch { index: 3, .. }));
    }

    #[test]
    fn best_branch_ties_go_low() {
        let g = tensor(&[[0.0, 2e-5, 2e-5, 0.0]]);
        let c = best_branch(
            &rx(),
            1,
            Band::Red,
            &[],
            &g,
            &lums(1),
            &DEFAULT_RESPONSIVITY,
            &NoiseModel::default(),
        )
        .unwrap();
        assert!(matches!(c, BranchChoice::Branch { index: 2, .. }));
    }

    #[test]
    fn no_coverage() {
        let g = tensor(&[[0.0; 4], [1e-5; 4]]);
        let c = best_branch(
            &rx(),
            1,
            Band::Red,
            &[2],
            &g,
            &lums(2),
            &DEFAULT_RESPONSIVITY,
            &NoiseModel::default(),
        )
        .unwrap();
        assert_eq!(c, BranchChoice::NoCoverage);
    }

    #[test]
    fn interference_steers_branch() {
        // Equal serving gain on branches 1 and 2; the interferer only hits 1.
        let g = tensor(&[[2e-5, 2e-5, 0.0, 0.0], [1e-5, 0.0, 0.0, 0.0]]);
        let c = best_branch(
            &rx(),
            1,
            Band::Red,
            &[2],
            &g,
            &lums(2),
            &DEFAULT_RESPONSIVITY,
            &NoiseModel::default(),
        )
        .unwrap();
        assert!(matches!(c, BranchChoice::Branch { index: 2, .. }));
    }

    #[test]
    fn offsets_must_stay_on_seat() {
        let scene = crate::geometry::build_cabin_section(&Default::default()).unwrap();
        let cfg = ReceiverConfig {
            device_offsets_m: vec![[0.0, 0.4]],
            ..ReceiverConfig::default()
        };
        assert!(build_receivers(&scene, &cfg, 1).is_err());
        assert!(build_receivers(&scene, &ReceiverConfig::default(), 4).is_err());
        let rx = build_receivers(&scene, &ReceiverConfig::default(), 3).unwrap();
        assert_eq!(rx.len(), 30);
        assert_eq!(rx[4].device, 5);
        assert_eq!(rx[4].passenger, 2);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::geometry::shell_box;
    use crate::raytrace::{gain_matrix, DeviceKey, TraceConfig};
    use proptest::prelude::*;

    fn rx() -> AngleDiversityReceiver {
        AngleDiversityReceiver::new(1, 1, Vec3::new(1.0, 1.0, 1.0), &ReceiverConfig::default())
            .unwrap()
    }

    fn lums(n: usize) -> Vec<Luminaire> {
        (1..=n)
            .map(|id| Luminaire {
                id,
                position: Vec3::new(0.0, 0.0, 2.0),
                axis: Direction3::DOWN,
                semi_angle_deg: 14.0,
                order: 23.0,
                power_w: [1.0 + id as f64; 4],
            })
            .collect()
    }

    fn gain() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), 1e-7..1e-4f64]
    }

    proptest! {
        #[test]
        fn select_best_dominates(v in prop::array::uniform4(prop_oneof![Just(0.0), Just(1.0), 0.0..1e3f64])) {
            match select_best(&v) {
                BranchChoice::Branch { index, sinr } => {
                    prop_assert_eq!(sinr, v[index - 1]);
                    prop_assert!(v.iter().all(|x| *x <= sinr));
                    prop_assert!(v[..index - 1].iter().all(|x| *x < sinr));
                }
                BranchChoice::NoCoverage => prop_assert!(v.iter().all(|x| *x <= 0.0)),
            }
        }

        #[test]
        fn best_branch_beats_every_branch(
            g in prop::collection::vec(gain(), 3 * BRANCHES),
            band in 0usize..4,
        ) {
            let t = GainTensor {
                luminaires: vec![1, 2, 3],
                devices: vec![DeviceKey { id: 1, passenger: 1 }],
                branches: BRANCHES,
                dc_gain: g,
                bandwidth_hz: vec![f64::INFINITY; 3 * BRANCHES],
                rms_delay_spread_s: vec![0.0; 3 * BRANCHES],
            };
            let band = Band::from_index(band).unwrap();
            let (l, nm) = (lums(3), NoiseModel::default());
            let all = branch_sinrs(&rx(), 1, band, &[2, 3], &t, &l, &DEFAULT_RESPONSIVITY, &nm).unwrap();
            match best_branch(&rx(), 1, band, &[2, 3], &t, &l, &DEFAULT_RESPONSIVITY, &nm).unwrap() {
                BranchChoice::Branch { sinr, .. } => prop_assert!(all.iter().all(|s| *s <= sinr)),
                BranchChoice::NoCoverage => prop_assert!((0..BRANCHES).all(|b| t.gain(0, 0, b) == 0.0)),
            }
        }
    }

    #[test]
    fn quarter_turn_permutes_branches() {
        let scene = shell_box(2.0, 2.0, 2.0, 0.8, 0.25).unwrap();
        let patches = scene.patches().unwrap();
        let cfg = TraceConfig::default();
        let turn = |p: Vec3| Vec3::new(2.0 - p.y, p.x, p.z);
        let lum = |p: Vec3| Luminaire {
            id: 1,
            position: p,
            axis: Direction3::DOWN,
            semi_angle_deg: 40.0,
            order: crate::radiometry::lambertian_order(40.0).unwrap(),
            power_w: [1.0; 4],
        };
        let (lp, rp) = (Vec3::new(0.7, 1.2, 1.9), Vec3::new(1.3, 0.6, 0.5));
        let rc = ReceiverConfig {
            fov_deg: 45.0,
            ..ReceiverConfig::default()
        };
        let a = AngleDiversityReceiver::new(1, 1, rp, &rc).unwrap();
        let b = AngleDiversityReceiver::new(1, 1, turn(rp), &rc).unwrap();
        let ga = gain_matrix(&scene, &patches, &[lum(lp)], &[a], &cfg).unwrap().tensor;
        let gb = gain_matrix(&scene, &patches, &[lum(turn(lp))], &[b], &cfg).unwrap().tensor;
        for k in 0..BRANCHES {
            let (x, y) = (ga.gain(0, 0, k), gb.gain(0, 0, (k + 1) % BRANCHES));
            assert!((x - y).abs() <= 1e-9 * x.max(y).max(1e-300), "branch {}: {x} vs {y}", k + 1);
        }
        assert!((0..BRANCHES).filter(|&k| ga.gain(0, 0, k) > 0.0).count() >= 2);
    }
}
