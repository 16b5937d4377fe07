//! End-to-end runs: scene → channels → allocation → per-device link reports.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::{self, AllocationProblem, Assignment, Solution};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{build_cabin_section, place_luminaires, CabinSection, PatchSet};
use crate::linkbudget::{evaluate_link, to_db, LinkReport};
use crate::radiometry::{Band, Luminaire};
use crate::raytrace::{gain_matrix, ChannelSet, GainTensor};
use crate::receiver::{build_receivers, AngleDiversityReceiver};

/// Frozen scene: geometry, transmitters and reflecting elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub section: CabinSection,
    pub luminaires: Vec<Luminaire>,
    pub patches: PatchSet,
}

impl Scene {
    pub fn build(cfg: &Config) -> Result<Scene> {
        let section = build_cabin_section(&cfg.cabin)?;
        let luminaires = place_luminaires(&section, &cfg.luminaires)?;
        let patches = section.patches()?;
        Ok(Scene {
            section,
            luminaires,
            patches,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("scene: {e}")))
    }

    /// SHA-256 over a `scene <len>\0` header and the JSON body.
    pub fn content_hash(&self) -> String {
        let body = self.to_json();
        let mut h = Sha256::new();
        h.update(format!("scene {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        hex::encode(h.finalize())
    }
}

pub fn config_hash(cfg: &Config) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

/// Receivers for `devices_per_passenger` devices and their channel set.
pub fn trace_devices(
    scene: &Scene,
    cfg: &Config,
    devices_per_passenger: usize,
) -> Result<(Vec<AngleDiversityReceiver>, ChannelSet)> {
    let rx = build_receivers(&scene.section, &cfg.receiver, devices_per_passenger)?;
    let set = gain_matrix(&scene.section, &scene.patches, &scene.luminaires, &rx, &cfg.trace)?;
    Ok((rx, set))
}

/// Allocation problem for scenario `id`: every passenger carries `id`
/// devices.
pub fn build_problem(scene: &Scene, cfg: &Config, id: u8) -> Result<(AllocationProblem, GainTensor)> {
    if !(1..=3).contains(&id) {
        return Err(Error::invalid("scenario", format!("must be 1, 2 or 3, got {id}")));
    }
    let (_, set) = trace_devices(scene, cfg, id as usize)?;
    let p = problem_from_tensor(&set.tensor, &scene.luminaires, cfg)?;
    Ok((p, set.tensor))
}

pub fn problem_from_tensor(
    tensor: &GainTensor,
    luminaires: &[Luminaire],
    cfg: &Config,
) -> Result<AllocationProblem> {
    allocation::build_problem(
        tensor,
        luminaires,
        cfg.receiver.responsivity_a_per_w,
        &cfg.noise,
        cfg.solver.objective,
        cfg.solver.prune_ratio,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandLink {
    pub band: Band,
    pub rms_delay_spread_s: f64,
    /// None when the response never drops 3 dB within the resolved band.
    pub channel_bandwidth_hz: Option<f64>,
    #[serde(flatten)]
    pub link: LinkReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRow {
    pub passenger: usize,
    /// Position of the device among its passenger's devices, from 1.
    pub device: usize,
    pub device_id: usize,
    pub luminaire: usize,
    pub branch: usize,
    pub bands: String,
    /// Weakest band.
    pub sinr: f64,
    pub sinr_db: f64,
    pub ber: f64,
    /// Summed over the device's bands.
    pub rate_bps: f64,
    pub links: Vec<BandLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        let mut v = values.to_vec();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Spread {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub sinr_db: Option<Spread>,
    pub rate_bps: Option<Spread>,
}

impl Aggregates {
    pub fn of(rows: &[DeviceRow]) -> Aggregates {
        let s: Vec<f64> = rows.iter().map(|r| r.sinr_db).collect();
        let r: Vec<f64> = rows.iter().map(|r| r.rate_bps).collect();
        Aggregates {
            sinr_db: Spread::of(&s),
            rate_bps: Spread::of(&r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub schema_version: u32,
    pub config_sha256: String,
    pub scene_sha256: String,
}

/// Wall-clock stage timings and search statistics; absent in deterministic
/// mode so reports stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub scene_s: f64,
    pub trace_s: f64,
    pub solve_s: f64,
    pub report_s: f64,
    pub search_nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: u8,
    pub provenance: Provenance,
    pub objective: f64,
    pub assignment: Assignment,
    pub devices: Vec<DeviceRow>,
    pub aggregates: Aggregates,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime: Option<Runtime>,
}

pub fn run_scenario(cfg: &Config) -> Result<ScenarioReport> {
    let t = Instant::now();
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let scene = Scene::build(cfg).map_err(|e| e.at_stage("scene"))?;
    let scene_s = t.elapsed().as_secs_f64();
    let mut report = run_with_scene(cfg, &scene)?;
    if let Some(rt) = report.runtime.as_mut() {
        rt.scene_s = scene_s;
    }
    Ok(report)
}

/// Runs the pipeline on an already built (possibly re-loaded) scene.
pub fn run_with_scene(cfg: &Config, scene: &Scene) -> Result<ScenarioReport> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let id = cfg.scenario.id;
    let t = Instant::now();
    let (_, set) = trace_devices(scene, cfg, id as usize).map_err(|e| e.at_stage("trace"))?;
    let trace_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let problem = problem_from_tensor(&set.tensor, &scene.luminaires, cfg)
        .map_err(|e| e.at_stage("allocation"))?;
    let solution = allocation::solve_exact(&problem).map_err(|e| e.at_stage("allocation"))?;
    let solve_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let devices = device_rows(cfg, &problem, &set.tensor, &solution.assignment)
        .map_err(|e| e.at_stage("link budget"))?;
    let report_s = t.elapsed().as_secs_f64();

    Ok(ScenarioReport {
        scenario: id,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: cfg.schema_version,
            config_sha256: config_hash(cfg),
            scene_sha256: scene.content_hash(),
        },
        objective: solution.objective,
        aggregates: Aggregates::of(&devices),
        assignment: solution.assignment.clone(),
        devices,
        runtime: (!cfg.trace.deterministic).then_some(Runtime {
            scene_s: 0.0,
            trace_s,
            solve_s,
            report_s,
            search_nodes: solution.explored,
        }),
    })
}

/// Per-device link reports for a solved assignment.
pub fn device_rows(
    cfg: &Config,
    problem: &AllocationProblem,
    tensor: &GainTensor,
    a: &Assignment,
) -> Result<Vec<DeviceRow>> {
    let active = problem.active_set(a)?;
    let mut rows = Vec::with_capacity(problem.devices.len());
    let mut ordinal = std::collections::BTreeMap::<usize, usize>::new();
    for (di, d) in problem.devices.iter().enumerate() {
        let da = a
            .get(d.id)
            .ok_or_else(|| Error::invalid("assignment", format!("device {} missing", d.id)))?;
        let l = problem
            .luminaire_index(da.luminaire)
            .ok_or(Error::UnknownLuminaire(da.luminaire))?;
        let b = da.branch - 1;
        let rms = tensor.rms_delay_spread_s[tensor.offset(l, di, b)];
        let f3db = tensor.bandwidth_hz[tensor.offset(l, di, b)];
        let links: Vec<BandLink> = da
            .bands
            .bands()
            .iter()
            .map(|&band| {
                let mut budget = problem.channel_budget(&active, di, l, b, band);
                budget.rms_delay_spread_s = rms;
                budget.bandwidth_hz = f3db;
                BandLink {
                    band,
                    rms_delay_spread_s: rms,
                    channel_bandwidth_hz: f3db.is_finite().then_some(f3db),
                    link: evaluate_link(&budget, &cfg.noise, &cfg.rate),
                }
            })
            .collect();
        let weakest = links
            .iter()
            .map(|x| &x.link)
            .min_by(|x, y| x.sinr.total_cmp(&y.sinr))
            .expect("at least one band");
        let n = ordinal.entry(d.passenger).or_insert(0);
        *n += 1;
        rows.push(DeviceRow {
            passenger: d.passenger,
            device: *n,
            device_id: d.id,
            luminaire: da.luminaire,
            branch: da.branch,
            bands: da.bands.to_string(),
            sinr: weakest.sinr,
            sinr_db: to_db(weakest.sinr),
            ber: weakest.ber,
            rate_bps: links.iter().map(|x| x.link.rate_bps).sum(),
            links,
        });
    }
    Ok(rows)
}

/// One report per value, with the numeric config field at `path` set to it.
pub fn sweep(cfg: &Config, path: &str, values: &[f64]) -> Result<Vec<ScenarioReport>> {
    let cfgs = values
        .iter()
        .map(|v| cfg.with_value(path, *v))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("sweep"))?;
    cfgs.iter().map(run_scenario).collect()
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "passenger,device,device_id,luminaire,branch,bands,sinr,sinr_db,ber,rate_bps,rms_delay_spread_s\n",
        );
        for r in &self.devices {
            let rms = r.links.first().map_or(0.0, |l| l.rms_delay_spread_s);
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.passenger,
                r.device,
                r.device_id,
                r.luminaire,
                r.branch,
                r.bands,
                r.sinr,
                r.sinr_db,
                r.ber,
                r.rate_bps,
                rms
            )
            .expect("write to string");
        }
        s
    }

    /// Per-passenger allocation table.
    pub fn allocation_table(&self) -> String {
        let mut s = format!("Scenario {}\n", self.scenario);
        writeln!(
            s,
            "{:<10} {:<7} {:<11} {:<7} {:<10} {:>10} {:>12}",
            "Passenger", "Device", "Light unit", "Branch", "Wavelength", "SINR (dB)", "Rate (Gbps)"
        )
        .expect("write to string");
        for r in &self.devices {
            writeln!(
                s,
                "{:<10} {:<7} {:<11} {:<7} {:<10} {:>10.2} {:>12.3}",
                r.passenger,
                r.device,
                r.luminaire,
                r.branch,
                r.bands,
                r.sinr_db,
                r.rate_bps / 1e9
            )
            .expect("write to string");
        }
        s
    }
}

/// Exact solution and rows for a problem loaded from a gain-tensor file.
pub fn allocate_only(
    cfg: &Config,
    tensor: &GainTensor,
    luminaires: &[Luminaire],
) -> Result<(Solution, Vec<DeviceRow>)> {
    let problem = problem_from_tensor(tensor, luminaires, cfg).map_err(|e| e.at_stage("allocation"))?;
    let sol = allocation::solve_exact(&problem).map_err(|e| e.at_stage("allocation"))?;
    let rows = device_rows(cfg, &problem, tensor, &sol.assignment).map_err(|e| e.at_stage("link budget"))?;
    Ok((sol, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_odd_and_even() {
        let s = Spread::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.median, s.max), (1.0, 2.0, 3.0));
        let s = Spread::of(&[4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert!(Spread::of(&[]).is_none());
    }

    #[test]
    fn scenario_id_checked() {
        let mut cfg = Config::default();
        cfg.cabin.first_order_element_m = 0.5;
        cfg.cabin.second_order_element_m = 1.0;
        let scene = Scene::build(&cfg).unwrap();
        assert!(build_problem(&scene, &cfg, 0).is_err());
        assert!(build_problem(&scene, &cfg, 4).is_err());
        let (p, _) = build_problem(&scene, &cfg, 2).unwrap();
        assert_eq!(p.devices.len(), 20);
    }

    #[test]
    fn scene_json_round_trip() {
        let mut cfg = Config::default();
        cfg.cabin.first_order_element_m = 0.5;
        cfg.cabin.second_order_element_m = 1.0;
        let scene = Scene::build(&cfg).unwrap();
        let back = Scene::from_json(&scene.to_json()).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.content_hash(), scene.content_hash());
    }
}
