//! Time-binned channel impulse responses with line-of-sight, first- and
//! second-order diffuse reflections, and the summaries derived from them.
//!
//! Binning convention: line-of-sight and first-order paths land in bin
//! `floor(t / w)`. Second-order paths are quantized at the second reflector,
//! `floor(t_ab / w) + round(t_bd / w)`, where `t_ab` is the delay up to the
//! second reflector and `t_bd` the final hop. Both the per-pair [`trace`] and
//! the batched [`gain_matrix`] use it, so their bins agree.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{path_clear, CabinSection, PatchSet, ScenePatch, Vec3};
use crate::radiometry::{hop_kernel, DetectorBranch, Luminaire};
use crate::receiver::{AngleDiversityReceiver, BRANCHES};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Highest reflection order traced.
pub const MAX_ORDER: u8 = 2;

const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub max_order: u8,
    pub bin_width_s: f64,
    /// Fixed summation order for bit-exact output regardless of thread count.
    pub deterministic: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            max_order: 2,
            bin_width_s: 0.5e-9,
            deterministic: true,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_order > MAX_ORDER {
            return Err(Error::MaxOrder(self.max_order));
        }
        if !(self.bin_width_s.is_finite() && self.bin_width_s > 0.0) {
            return Err(Error::invalid(
                "bin_width_s",
                format!("must be positive, got {}", self.bin_width_s),
            ));
        }
        Ok(())
    }
}

/// Power-gain impulse response of one (luminaire, branch) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelResponse {
    pub bin_width_s: f64,
    pub bins: Vec<f64>,
    /// Total gain contributed by line of sight, first and second order.
    pub order_gain: [f64; 3],
}

impl ChannelResponse {
    fn new(bin_width_s: f64, len: usize) -> Self {
        Self {
            bin_width_s,
            bins: vec![0.0; len],
            order_gain: [0.0; 3],
        }
    }

    fn trim(mut self) -> Self {
        while self.bins.last() == Some(&0.0) {
            self.bins.pop();
        }
        self
    }

    pub fn dc_gain(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Builds a response from explicit bins (gain per bin).
    pub fn from_bins(bin_width_s: f64, bins: Vec<f64>) -> Self {
        let total = bins.iter().sum();
        Self {
            bin_width_s,
            bins,
            order_gain: [total, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub dc_gain: f64,
    /// 3-dB bandwidth (Hz); infinite when the response never drops 3 dB
    /// below its DC value within the bin Nyquist band.
    pub bandwidth_hz: f64,
    pub rms_delay_spread_s: f64,
}

fn bin_floor(t: f64, w: f64) -> usize {
    (t / w).floor() as usize
}

fn bin_round(t: f64, w: f64) -> usize {
    (t / w + 0.5).floor() as usize
}

fn bin_count(scene: &CabinSection, w: f64) -> usize {
    let diag = Vec3::new(scene.length, scene.width, scene.height).norm();
    ((MAX_ORDER as f64 + 1.0) * diag / SPEED_OF_LIGHT / w).ceil() as usize + 3
}

fn detector_gain(p: Vec3, pn: Vec3, order: f64, d: &DetectorBranch, cos_fov: f64) -> (f64, f64) {
    let delta = d.position - p;
    let d2 = delta.norm_sq();
    if d2 == 0.0 {
        return (0.0, 0.0);
    }
    let g = hop_kernel(pn, order, delta, d2, d.normal.vec(), d.area_m2, cos_fov);
    (g, d2.sqrt())
}

/// Gain and distance from a luminaire onto a reflecting element, reflectance
/// included.
fn illuminate(lum: &Luminaire, p: &ScenePatch, scene: &CabinSection) -> (f64, f64) {
    let delta = p.center - lum.position;
    let d2 = delta.norm_sq();
    if d2 == 0.0 || p.reflectance == 0.0 {
        return (0.0, 0.0);
    }
    let g = hop_kernel(
        lum.axis.vec(),
        lum.order,
        delta,
        d2,
        p.normal.vec(),
        p.area,
        -1.0,
    );
    if g == 0.0 || !path_clear(lum.position, p.center, scene) {
        return (0.0, 0.0);
    }
    (g * p.reflectance, d2.sqrt())
}

/// Diffuse hop between two reflecting elements, reflectance of `b` included.
fn bounce(a: &ScenePatch, b: &ScenePatch, scene: &CabinSection) -> (f64, f64) {
    let delta = b.center - a.center;
    let d2 = delta.norm_sq();
    if d2 == 0.0 || b.reflectance == 0.0 {
        return (0.0, 0.0);
    }
    let g = hop_kernel(a.normal.vec(), 1.0, delta, d2, b.normal.vec(), b.area, -1.0);
    if g == 0.0 || !path_clear(a.center, b.center, scene) {
        return (0.0, 0.0);
    }
    (g * b.reflectance, d2.sqrt())
}

fn add_bins(acc: &mut ChannelResponse, part: &ChannelResponse) {
    for (x, y) in acc.bins.iter_mut().zip(&part.bins) {
        *x += y;
    }
    for k in 0..3 {
        acc.order_gain[k] += part.order_gain[k];
    }
}

/// Impulse response of one (luminaire, branch) pair by direct path
/// enumeration.
pub fn trace(
    lum: &Luminaire,
    det: &DetectorBranch,
    scene: &CabinSection,
    patches: &PatchSet,
    cfg: &TraceConfig,
) -> Result<ChannelResponse> {
    cfg.validate()?;
    let w = cfg.bin_width_s;
    let nbins = bin_count(scene, w);
    let cos_fov = det.cos_fov();
    let c = SPEED_OF_LIGHT;
    let mut out = ChannelResponse::new(w, nbins);

    if lum.position != det.position && path_clear(lum.position, det.position, scene) {
        let (g, d) = detector_gain(lum.position, lum.axis.vec(), lum.order, det, cos_fov);
        if g > 0.0 {
            out.bins[bin_floor(d / c, w)] += g;
            out.order_gain[0] += g;
        }
    }
    if cfg.max_order == 0 {
        return Ok(out.trim());
    }

    let visible: Vec<(usize, f64, f64)> = if cfg.max_order >= 2 {
        patches
            .second
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let (gd, dd) = detector_gain(b.center, b.normal.vec(), 1.0, det, cos_fov);
                (gd > 0.0 && path_clear(b.center, det.position, scene)).then_some((i, gd, dd))
            })
            .collect()
    } else {
        Vec::new()
    };

    let chunk_response = |chunk: &[ScenePatch]| {
        let mut part = ChannelResponse::new(w, nbins);
        for a in chunk {
            let (ga, da) = illuminate(lum, a, scene);
            if ga == 0.0 {
                continue;
            }
            if path_clear(a.center, det.position, scene) {
                let (gd, dd) = detector_gain(a.center, a.normal.vec(), 1.0, det, cos_fov);
                if gd > 0.0 {
                    let v = ga * gd;
                    part.bins[bin_floor((da + dd) / c, w)] += v;
                    part.order_gain[1] += v;
                }
            }
            for &(bi, gd, dd) in &visible {
                let (gb, db) = bounce(a, &patches.second[bi], scene);
                if gb == 0.0 {
                    continue;
                }
                let v = ga * gb * gd;
                part.bins[bin_floor((da + db) / c, w) + bin_round(dd / c, w)] += v;
                part.order_gain[2] += v;
            }
        }
        part
    };

    let parts: Vec<ChannelResponse> = patches.first.par_chunks(CHUNK).map(chunk_response).collect();
    for p in &parts {
        add_bins(&mut out, p);
    }
    Ok(out.trim())
}

/// Reduces a response to DC gain, 3-dB bandwidth and RMS delay spread.
pub fn summarize(r: &ChannelResponse) -> Result<ChannelSummary> {
    let h0: f64 = r.dc_gain();
    if !(h0 > 0.0) {
        return Err(Error::EmptyResponse);
    }
    let w = r.bin_width_s;
    let mean: f64 = r
        .bins
        .iter()
        .enumerate()
        .map(|(i, h)| h * i as f64 * w)
        .sum::<f64>()
        / h0;
    let var: f64 = r
        .bins
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let dt = i as f64 * w - mean;
            h * dt * dt
        })
        .sum::<f64>()
        / h0;
    let rms = var.max(0.0).sqrt();

    let nonzero = r.bins.iter().filter(|h| **h != 0.0).count();
    let bandwidth_hz = if nonzero <= 1 {
        f64::INFINITY
    } else {
        three_db_bandwidth(r, h0)
    };
    Ok(ChannelSummary {
        dc_gain: h0,
        bandwidth_hz,
        rms_delay_spread_s: if nonzero <= 1 { 0.0 } else { rms },
    })
}

fn three_db_bandwidth(r: &ChannelResponse, h0: f64) -> f64 {
    let len = r.bins.iter().rposition(|h| *h != 0.0).map_or(0, |i| i + 1);
    let n = (8 * len).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = r.bins[..len]
        .iter()
        .map(|h| Complex::new(*h, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let level = std::f64::consts::FRAC_1_SQRT_2;
    let mut prev = 1.0;
    for (k, z) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let mag = z.norm() / h0;
        if mag < level {
            let frac = (prev - level) / (prev - mag);
            return (k as f64 - 1.0 + frac) / (n as f64 * r.bin_width_s);
        }
        prev = mag;
    }
    f64::INFINITY
}

/// Identity of one receiving device in a gain tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceKey {
    pub id: usize,
    pub passenger: usize,
}

/// Dense `[luminaire][device][branch]` tensors of DC gain and response
/// summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTensor {
    pub luminaires: Vec<usize>,
    pub devices: Vec<DeviceKey>,
    pub branches: usize,
    pub dc_gain: Vec<f64>,
    #[serde(with = "inf_as_null")]
    pub bandwidth_hz: Vec<f64>,
    pub rms_delay_spread_s: Vec<f64>,
}

impl GainTensor {
    #[inline]
    pub fn offset(&self, lum: usize, dev: usize, branch: usize) -> usize {
        (lum * self.devices.len() + dev) * self.branches + branch
    }

    /// DC gain by positional indices (branch 0-based).
    #[inline]
    pub fn gain(&self, lum: usize, dev: usize, branch: usize) -> f64 {
        self.dc_gain[self.offset(lum, dev, branch)]
    }

    pub fn luminaire_index(&self, id: usize) -> Option<usize> {
        self.luminaires.iter().position(|l| *l == id)
    }

    pub fn device_index(&self, id: usize) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    pub fn summary(&self, lum: usize, dev: usize, branch: usize) -> ChannelSummary {
        let o = self.offset(lum, dev, branch);
        ChannelSummary {
            dc_gain: self.dc_gain[o],
            bandwidth_hz: self.bandwidth_hz[o],
            rms_delay_spread_s: self.rms_delay_spread_s[o],
        }
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Gain tensor plus every underlying impulse response, in tensor order.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub tensor: GainTensor,
    pub responses: Vec<ChannelResponse>,
}

impl ChannelSet {
    pub fn response(&self, lum: usize, dev: usize, branch: usize) -> &ChannelResponse {
        &self.responses[self.tensor.offset(lum, dev, branch)]
    }
}

/// Reflector seen from one receiver position.
struct Sighting {
    patch: usize,
    dist: f64,
    gain: [f64; BRANCHES],
}

fn sightings(
    patches: &[ScenePatch],
    rx: &AngleDiversityReceiver,
    scene: &CabinSection,
) -> Vec<Sighting> {
    let cos_fov: Vec<f64> = rx.branches.iter().map(|b| b.cos_fov()).collect();
    patches
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let mut gain = [0.0; BRANCHES];
            let mut dist = 0.0;
            for (k, br) in rx.branches.iter().enumerate() {
                let (g, d) = detector_gain(p.center, p.normal.vec(), 1.0, br, cos_fov[k]);
                gain[k] = g;
                dist = d;
            }
            if gain.iter().all(|g| *g == 0.0) || !path_clear(p.center, rx.position, scene) {
                return None;
            }
            Some(Sighting {
                patch: i,
                dist,
                gain,
            })
        })
        .collect()
}

/// First-bounce illumination of every order-1 element by one luminaire.
struct Illumination {
    gain: Vec<f64>,
    dist: Vec<f64>,
}

/// Computes every (luminaire, device, branch) response with the reflection
/// sums factorized through per-element arrival histograms.
pub fn gain_matrix(
    scene: &CabinSection,
    patches: &PatchSet,
    luminaires: &[Luminaire],
    receivers: &[AngleDiversityReceiver],
    cfg: &TraceConfig,
) -> Result<ChannelSet> {
    cfg.validate()?;
    let w = cfg.bin_width_s;
    let c = SPEED_OF_LIGHT;
    let nbins = bin_count(scene, w);
    let nl = luminaires.len();
    let reflect = cfg.max_order >= 1;

    let illum: Vec<Illumination> = if reflect {
        luminaires
            .par_iter()
            .map(|lum| {
                let (gain, dist) = patches
                    .first
                    .iter()
                    .map(|p| illuminate(lum, p, scene))
                    .unzip();
                Illumination { gain, dist }
            })
            .collect()
    } else {
        Vec::new()
    };

    // Arrival histograms at each second-order element: hist[b][lum * nbins + k].
    let hist: Vec<Vec<f64>> = if cfg.max_order >= 2 {
        let lit: Vec<usize> = (0..patches.first.len())
            .filter(|&a| illum.iter().any(|il| il.gain[a] > 0.0))
            .collect();
        let accumulate = |b: &ScenePatch, idx: &[usize], h: &mut [f64]| {
            for &a in idx {
                let (gb, db) = bounce(&patches.first[a], b, scene);
                if gb == 0.0 {
                    continue;
                }
                for (l, il) in illum.iter().enumerate() {
                    let ga = il.gain[a];
                    if ga > 0.0 {
                        h[l * nbins + bin_floor((il.dist[a] + db) / c, w)] += ga * gb;
                    }
                }
            }
        };
        patches
            .second
            .par_iter()
            .map(|b| {
                if cfg.deterministic {
                    let mut h = vec![0.0; nl * nbins];
                    accumulate(b, &lit, &mut h);
                    h
                } else {
                    lit.par_chunks(CHUNK)
                        .fold(
                            || vec![0.0; nl * nbins],
                            |mut h, idx| {
                                accumulate(b, idx, &mut h);
                                h
                            },
                        )
                        .reduce(
                            || vec![0.0; nl * nbins],
                            |mut x, y| {
                                x.iter_mut().zip(&y).for_each(|(p, q)| *p += q);
                                x
                            },
                        )
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    let seen: Vec<(Vec<Sighting>, Vec<Sighting>)> = receivers
        .par_iter()
        .map(|rx| {
            let first = if reflect {
                sightings(&patches.first, rx, scene)
            } else {
                Vec::new()
            };
            let second = if cfg.max_order >= 2 {
                sightings(&patches.second, rx, scene)
            } else {
                Vec::new()
            };
            (first, second)
        })
        .collect();

    let nd = receivers.len();
    let pairs: Vec<(usize, usize)> = (0..nl).flat_map(|l| (0..nd).map(move |d| (l, d))).collect();
    let per_pair: Vec<Vec<ChannelResponse>> = pairs
        .par_iter()
        .map(|&(l, d)| {
            let lum = &luminaires[l];
            let rx = &receivers[d];
            let mut out: Vec<ChannelResponse> =
                (0..BRANCHES).map(|_| ChannelResponse::new(w, nbins)).collect();
            if lum.position != rx.position && path_clear(lum.position, rx.position, scene) {
                for (k, br) in rx.branches.iter().enumerate() {
                    let (g, dist) =
                        detector_gain(lum.position, lum.axis.vec(), lum.order, br, br.cos_fov());
                    if g > 0.0 {
                        out[k].bins[bin_floor(dist / c, w)] += g;
                        out[k].order_gain[0] += g;
                    }
                }
            }
            let (first, second) = &seen[d];
            if reflect {
                let il = &illum[l];
                for s in first {
                    let ga = il.gain[s.patch];
                    if ga == 0.0 {
                        continue;
                    }
                    let bin = bin_floor((il.dist[s.patch] + s.dist) / c, w);
                    for k in 0..BRANCHES {
                        let v = ga * s.gain[k];
                        if v > 0.0 {
                            out[k].bins[bin] += v;
                            out[k].order_gain[1] += v;
                        }
                    }
                }
            }
            for s in second {
                let h = &hist[s.patch][l * nbins..(l + 1) * nbins];
                let shift = bin_round(s.dist / c, w);
                for (i, &e) in h.iter().enumerate() {
                    if e == 0.0 {
                        continue;
                    }
                    for k in 0..BRANCHES {
                        let v = e * s.gain[k];
                        if v > 0.0 {
                            out[k].bins[i + shift] += v;
                            out[k].order_gain[2] += v;
                        }
                    }
                }
            }
            out.into_iter().map(ChannelResponse::trim).collect()
        })
        .collect();

    let mut responses = Vec::with_capacity(nl * nd * BRANCHES);
    for v in per_pair {
        responses.extend(v);
    }
    let mut dc_gain = Vec::with_capacity(responses.len());
    let mut bandwidth_hz = Vec::with_capacity(responses.len());
    let mut rms = Vec::with_capacity(responses.len());
    for r in &responses {
        match summarize(r) {
            Ok(s) => {
                dc_gain.push(s.dc_gain);
                bandwidth_hz.push(s.bandwidth_hz);
                rms.push(s.rms_delay_spread_s);
            }
            Err(_) => {
                dc_gain.push(0.0);
                bandwidth_hz.push(f64::INFINITY);
                rms.push(0.0);
            }
        }
    }
    Ok(ChannelSet {
        tensor: GainTensor {
            luminaires: luminaires.iter().map(|l| l.id).collect(),
            devices: receivers
                .iter()
                .map(|r| DeviceKey {
                    id: r.device,
                    passenger: r.passenger,
                })
                .collect(),
            branches: BRANCHES,
            dc_gain,
            bandwidth_hz,
            rms_delay_spread_s: rms,
        },
        responses,
    })
}
