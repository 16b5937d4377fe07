//! Receiver noise, co-channel SINR, OOK bit-error rate and the achievable
//! bit rate search.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Elementary charge (C).
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

/// Shot plus thermal noise parameters. The defaults are placeholders, not
/// measured values; absolute SINRs scale with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub electron_charge_c: f64,
    pub background_current_a: f64,
    /// One-sided thermal noise current PSD (A²/Hz).
    pub thermal_psd_a2_per_hz: f64,
    /// Bandwidth at which reported SINR and the allocation objective are
    /// evaluated.
    pub reference_bandwidth_hz: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            electron_charge_c: ELECTRON_CHARGE,
            background_current_a: 200e-6,
            thermal_psd_a2_per_hz: 4.7e-22,
            reference_bandwidth_hz: 5e9,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("electron_charge_c", self.electron_charge_c),
            ("background_current_a", self.background_current_a),
            ("thermal_psd_a2_per_hz", self.thermal_psd_a2_per_hz),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.reference_bandwidth_hz > 0.0) {
            return Err(Error::invalid(
                "reference_bandwidth_hz",
                "must be positive",
            ));
        }
        Ok(())
    }

    /// Noise variance for a branch whose own incident photocurrent is
    /// `incident_a` (background added here).
    pub fn variance_for(&self, incident_a: f64, bandwidth_hz: f64) -> f64 {
        let i = self.background_current_a + incident_a;
        (2.0 * self.electron_charge_c * i + self.thermal_psd_a2_per_hz) * bandwidth_hz
    }
}

/// Which multipath quantity bounds the symbol rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsiLimit {
    /// Rate at most the channel's 3 dB bandwidth.
    ChannelBandwidth,
    /// Rate at most `kappa / D` with `D` the RMS delay spread.
    DelaySpread,
}

/// Parameters of the bit-rate search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateModel {
    pub target_ber: f64,
    pub isi_limit: IsiLimit,
    /// Used only with [`IsiLimit::DelaySpread`].
    pub delay_spread_kappa: f64,
    pub rate_ceiling_hz: f64,
    pub rate_resolution_hz: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        Self {
            target_ber: 1e-9,
            isi_limit: IsiLimit::ChannelBandwidth,
            delay_spread_kappa: 0.1,
            rate_ceiling_hz: 40e9,
            rate_resolution_hz: 1e3,
        }
    }
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_ber > 0.0 && self.target_ber < 0.5) {
            return Err(Error::invalid("target_ber", "must lie in (0, 0.5)"));
        }
        if !(self.delay_spread_kappa > 0.0) {
            return Err(Error::invalid("delay_spread_kappa", "must be positive"));
        }
        if !(self.rate_ceiling_hz > 0.0 && self.rate_resolution_hz > 0.0) {
            return Err(Error::invalid(
                "rate_ceiling_hz",
                "ceiling and resolution must be positive",
            ));
        }
        Ok(())
    }

    /// SINR needed to meet the target BER with OOK.
    pub fn sinr_threshold(&self) -> f64 {
        let q = q_inverse(self.target_ber);
        q * q
    }
}

/// `σ² = 2q·I·B + N_th·B`.
pub fn noise_variance(nm: &NoiseModel, total_current_a: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::invalid("bandwidth", format!("must be positive, got {bandwidth_hz}")));
    }
    if !(total_current_a >= 0.0) {
        return Err(Error::invalid(
            "total_current",
            format!("must be non-negative, got {total_current_a}"),
        ));
    }
    Ok((2.0 * nm.electron_charge_c * total_current_a + nm.thermal_psd_a2_per_hz) * bandwidth_hz)
}

/// `s² / (σ² + Σ iₖ²)`; infinite when the denominator vanishes and `s > 0`.
pub fn sinr(signal_a: f64, interferers_a: &[f64], noise_var: f64) -> Result<f64> {
    if !(signal_a >= 0.0) {
        return Err(Error::invalid("signal", format!("must be non-negative, got {signal_a}")));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::invalid("noise_var", "must be non-negative"));
    }
    let denom = noise_var + interferers_a.iter().map(|i| i * i).sum::<f64>();
    if signal_a == 0.0 {
        return Ok(0.0);
    }
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(signal_a * signal_a / denom)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn q_inverse(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// OOK bit-error rate `Q(√SINR)`.
pub fn ook_ber(sinr_linear: f64) -> f64 {
    if sinr_linear.is_infinite() {
        return 0.0;
    }
    q_function(sinr_linear.max(0.0).sqrt()).clamp(0.0, 0.5)
}

/// Currents seen by one receiving branch in one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBudget {
    pub signal_a: f64,
    pub interferers_a: Vec<f64>,
    /// RMS delay spread of the serving channel.
    pub rms_delay_spread_s: f64,
    /// 3 dB bandwidth of the serving channel; infinite when the response
    /// never falls 3 dB below its DC value.
    pub bandwidth_hz: f64,
}

impl ChannelBudget {
    pub fn incident_a(&self) -> f64 {
        self.signal_a + self.interferers_a.iter().sum::<f64>()
    }

    pub fn noise_var(&self, nm: &NoiseModel, bandwidth_hz: f64) -> f64 {
        nm.variance_for(self.incident_a(), bandwidth_hz)
    }

    pub fn sinr_at(&self, nm: &NoiseModel, bandwidth_hz: f64) -> f64 {
        sinr(self.signal_a, &self.interferers_a, self.noise_var(nm, bandwidth_hz))
            .unwrap_or(0.0)
    }
}

/// Largest bandwidth in `(0, ceiling]` whose SINR meets `threshold`,
/// bisected to `resolution`. Zero when no bandwidth qualifies.
pub fn max_bandwidth_for(
    budget: &ChannelBudget,
    nm: &NoiseModel,
    threshold: f64,
    ceiling: f64,
    resolution: f64,
) -> f64 {
    if budget.signal_a <= 0.0 {
        return 0.0;
    }
    let ok = |b: f64| budget.sinr_at(nm, b) >= threshold;
    if ok(ceiling) {
        return ceiling;
    }
    // Bandwidth-independent interference floor.
    let i2: f64 = budget.interferers_a.iter().map(|i| i * i).sum();
    if i2 > 0.0 && budget.signal_a * budget.signal_a / i2 < threshold {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, ceiling);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Multipath rate bound for one channel; infinite when unconstrained.
pub fn isi_rate_limit(budget: &ChannelBudget, rm: &RateModel) -> f64 {
    match rm.isi_limit {
        IsiLimit::ChannelBandwidth if budget.bandwidth_hz > 0.0 => budget.bandwidth_hz,
        IsiLimit::DelaySpread if budget.rms_delay_spread_s > 0.0 => {
            rm.delay_spread_kappa / budget.rms_delay_spread_s
        }
        _ => f64::INFINITY,
    }
}

/// `min(R_sinr, R_isi)` for one channel.
pub fn achievable_rate(budget: &ChannelBudget, nm: &NoiseModel, rm: &RateModel) -> f64 {
    let r_sinr = max_bandwidth_for(
        budget,
        nm,
        rm.sinr_threshold(),
        rm.rate_ceiling_hz,
        rm.rate_resolution_hz,
    );
    r_sinr.min(isi_rate_limit(budget, rm))
}

/// Evaluated link for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub signal_current_a: f64,
    pub interferer_currents_a: Vec<f64>,
    pub noise_variance_a2: f64,
    pub sinr: f64,
    pub sinr_db: f64,
    pub ber: f64,
    pub rate_bps: f64,
}

pub fn evaluate_link(budget: &ChannelBudget, nm: &NoiseModel, rm: &RateModel) -> LinkReport {
    let var = budget.noise_var(nm, nm.reference_bandwidth_hz);
    let s = budget.sinr_at(nm, nm.reference_bandwidth_hz);
    LinkReport {
        signal_current_a: budget.signal_a,
        interferer_currents_a: budget.interferers_a.clone(),
        noise_variance_a2: var,
        sinr: s,
        sinr_db: to_db(s),
        ber: ook_ber(s),
        rate_bps: achievable_rate(budget, nm, rm),
    }
}
