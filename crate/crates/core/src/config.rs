//! Run configuration: one TOML file with an explicit schema version. Every
//! physical quantity is SI and carries its unit in the key name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocation::Objective;
use crate::error::{Error, Result};
use crate::geometry::{CabinConfig, LuminaireConfig};
use crate::linkbudget::{NoiseModel, RateModel};
use crate::raytrace::TraceConfig;
use crate::receiver::ReceiverConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub objective: Objective,
    /// Candidate luminaires below this fraction of a device's strongest
    /// best-branch gain are dropped before the search.
    pub prune_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            objective: Objective::SumLinear,
            prune_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Devices per passenger.
    pub id: u8,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { id: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub cabin: CabinConfig,
    pub luminaires: LuminaireConfig,
    pub receiver: ReceiverConfig,
    pub noise: NoiseModel,
    pub rate: RateModel,
    pub trace: TraceConfig,
    pub solver: SolverConfig,
    pub scenario: ScenarioSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            cabin: CabinConfig::default(),
            luminaires: LuminaireConfig::default(),
            receiver: ReceiverConfig::default(),
            noise: NoiseModel::default(),
            rate: RateModel::default(),
            trace: TraceConfig::default(),
            solver: SolverConfig::default(),
            scenario: ScenarioSection::default(),
        }
    }
}

/// Documented config keys: (dotted path, tag, meaning). `default` marks
/// values chosen here rather than fixed by the modelled system.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("schema_version", "default", "config schema version, must be 1"),
    ("cabin.length_m", "default", "length of the simulated cabin section"),
    ("cabin.width_m", "PAPER", "cabin width"),
    ("cabin.height_m", "PAPER", "cabin height"),
    ("cabin.blocking_height_m", "default", "seat-top height; light below it is blocked"),
    ("cabin.seat_width_m", "default", "seat footprint width"),
    ("cabin.seat_depth_m", "default", "seat footprint depth"),
    ("cabin.aisle_width_m", "default", "aisle width between seat groups"),
    ("cabin.seat_pitch_m", "default", "row spacing when rows > 1"),
    ("cabin.rows", "default", "seat rows in the section (middle row is occupied)"),
    ("cabin.ceiling_reflectance", "PAPER", "ceiling reflection coefficient"),
    ("cabin.wall_reflectance", "PAPER", "wall reflection coefficient"),
    ("cabin.floor_reflectance", "PAPER", "floor reflection coefficient"),
    ("cabin.first_order_element_m", "PAPER", "element side for first-order reflections"),
    ("cabin.second_order_element_m", "PAPER", "element side for second-order reflections"),
    ("luminaires.height_m", "default", "mounting height of the reading light units"),
    ("luminaires.window_semi_angle_deg", "PAPER", "half-power semi-angle, window-group seats"),
    ("luminaires.middle_semi_angle_deg", "PAPER", "half-power semi-angle, middle-group seats"),
    ("luminaires.leds_per_unit", "PAPER", "emitters per reading light unit"),
    ("luminaires.power_per_led_w", "default", "optical power per emitter, R Y G B"),
    ("receiver.elevation_deg", "PAPER", "branch elevation"),
    ("receiver.azimuth_deg", "PAPER", "branch azimuths, measured from +x toward +y"),
    ("receiver.fov_deg", "PAPER", "branch field-of-view half-angle"),
    ("receiver.area_m2", "PAPER", "detector area per branch"),
    ("receiver.responsivity_a_per_w", "PAPER", "responsivity, R Y G B"),
    ("receiver.device_offsets_m", "default", "[dx, dy] of each device from the seat-top centre"),
    ("noise.electron_charge_c", "default", "elementary charge"),
    ("noise.background_current_a", "default", "ambient photocurrent per branch"),
    ("noise.thermal_psd_a2_per_hz", "default", "thermal noise current PSD"),
    ("noise.reference_bandwidth_hz", "default", "bandwidth for reported SINR and the objective"),
    ("rate.target_ber", "PAPER", "OOK bit-error-rate target"),
    ("rate.isi_limit", "default", "channel_bandwidth (rate <= 3 dB bandwidth) or delay_spread (rate <= kappa / D)"),
    ("rate.delay_spread_kappa", "default", "kappa of the delay_spread limit"),
    ("rate.rate_ceiling_hz", "default", "upper end of the rate search"),
    ("rate.rate_resolution_hz", "default", "rate search resolution"),
    ("trace.max_order", "PAPER", "highest reflection order traced (at most 2)"),
    ("trace.bin_width_s", "default", "impulse-response time bin"),
    ("trace.deterministic", "default", "fixed reduction order for bit-exact output"),
    ("solver.objective", "default", "sum_linear or sum_db over per-band channel SINRs"),
    ("solver.prune_ratio", "default", "candidate luminaire gain threshold"),
    ("scenario.id", "PAPER", "devices per passenger, 1 to 3"),
];

/// Help text listing every key with its default value.
pub fn keys_help() -> String {
    let defaults = serde_json::to_value(Config::default()).expect("config serializes");
    let mut out = String::from("Config keys (TOML, SI units):\n");
    for (key, tag, what) in KEYS {
        let ptr = format!("/{}", key.replace('.', "/"));
        let v = defaults.pointer(&ptr).map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("  {key:<36} [{tag}] {what} (default {v})\n"));
    }
    out
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Config> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(origin, format!("{path}: {}", e.into_inner()))
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                origin,
                format!(
                    "schema_version: expected {SCHEMA_VERSION}, got {}",
                    cfg.schema_version
                ),
            ));
        }
        cfg.validate().map_err(|e| Error::config(origin, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.rate.validate()?;
        self.trace.validate()?;
        if !(1..=3).contains(&self.scenario.id) {
            return Err(Error::invalid(
                "scenario.id",
                format!("must be 1, 2 or 3, got {}", self.scenario.id),
            ));
        }
        if self.receiver.device_offsets_m.len() < self.scenario.id as usize {
            return Err(Error::invalid(
                "receiver.device_offsets_m",
                "needs one offset per device of a passenger",
            ));
        }
        if !(0.0..=1.0).contains(&self.solver.prune_ratio) {
            return Err(Error::invalid("solver.prune_ratio", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Copy with the numeric field at dotted `path` set to `value`. A
    /// numeric array is filled with `value` unless an index is given
    /// (`luminaires.power_per_led_w.0`).
    pub fn with_value(&self, path: &str, value: f64) -> Result<Config> {
        let unknown = || Error::invalid("parameter", format!("unknown parameter path `{path}`"));
        let mut json = serde_json::to_value(self).map_err(|e| Error::Parse(e.to_string()))?;
        let ptr = format!("/{}", path.replace('.', "/"));
        let slot = json.pointer_mut(&ptr).ok_or_else(unknown)?;
        let num = |v: f64, int: bool| -> Result<serde_json::Value> {
            if int {
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(Error::invalid("parameter", format!("`{path}` takes an integer")));
                }
                Ok(serde_json::Value::from(v as u64))
            } else {
                serde_json::Number::from_f64(v)
                    .map(serde_json::Value::Number)
                    .ok_or_else(|| Error::invalid("parameter", "value must be finite"))
            }
        };
        match slot {
            serde_json::Value::Number(n) => *slot = num(value, !n.is_f64())?,
            serde_json::Value::Array(items)
                if !items.is_empty() && items.iter().all(|x| x.is_f64()) =>
            {
                for x in items.iter_mut() {
                    *x = num(value, false)?;
                }
            }
            _ => {
                return Err(Error::invalid(
                    "parameter",
                    format!("`{path}` is not a numeric field"),
                ))
            }
        }
        let cfg: Config = serde_json::from_value(json).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
