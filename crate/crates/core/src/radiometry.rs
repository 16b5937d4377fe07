//! Radiometric kernels: generalized Lambertian emission, detector field of
//! view and the single-hop geometric gain shared by the LOS and reflection
//! paths.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{path_clear, CabinSection, Direction3, Point3, Vec3};

/// Slack on the closed FOV boundary, in cosine units.
const FOV_COS_EPS: f64 = 1e-12;

/// Emission bands of an RYGB source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Red,
    Yellow,
    Green,
    Blue,
}

pub const BANDS: [Band; 4] = [Band::Red, Band::Yellow, Band::Green, Band::Blue];

impl Band {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Band> {
        BANDS.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Red => "Red",
            Band::Yellow => "Yellow",
            Band::Green => "Green",
            Band::Blue => "Blue",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Photodetector responsivity per band (A/W), indexed by [`Band::index`].
pub const DEFAULT_RESPONSIVITY: [f64; 4] = [0.4, 0.35, 0.3, 0.2];

/// Per-seat reading-light unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Luminaire {
    pub id: usize,
    pub position: Point3,
    pub axis: Direction3,
    pub semi_angle_deg: f64,
    /// Lambertian emission order.
    pub order: f64,
    /// Optical power per band (W).
    pub power_w: [f64; 4],
}

/// One narrow-FOV photodetector of an angle-diversity receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBranch {
    pub device: usize,
    /// 1-based branch index.
    pub index: usize,
    pub position: Point3,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub normal: Direction3,
    pub fov_deg: f64,
    pub area_m2: f64,
}

impl DetectorBranch {
    pub fn cos_fov(&self) -> f64 {
        self.fov_deg.to_radians().cos()
    }
}

/// Lambertian order `n = -ln 2 / ln cos(semi_angle)`.
pub fn lambertian_order(semi_angle_deg: f64) -> Result<f64> {
    if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) {
        return Err(Error::invalid(
            "semi_angle",
            format!("must lie in (0, 90) degrees, got {semi_angle_deg}"),
        ));
    }
    Ok(-LN_2 / semi_angle_deg.to_radians().cos().ln())
}

/// `(n+1)/(2π)·cosⁿθ`, zero outside the forward hemisphere.
#[inline]
pub fn lambertian_pattern(order: f64, cos_theta: f64) -> f64 {
    if cos_theta <= 0.0 {
        return 0.0;
    }
    let c = if order == 1.0 {
        cos_theta
    } else {
        cos_theta.powf(order)
    };
    (order + 1.0) / (2.0 * PI) * c
}

/// Radiant intensity (W/sr) of `lum` in `band` at polar angle `theta` from
/// its axis.
pub fn radiant_intensity(lum: &Luminaire, band: Band, theta: f64) -> f64 {
    if !(0.0..PI / 2.0).contains(&theta) {
        return 0.0;
    }
    lum.power_w[band.index()] * lambertian_pattern(lum.order, theta.cos())
}

/// True iff light travelling along `incoming` arrives within the branch FOV.
/// The boundary is closed.
pub fn branch_accepts(d: &DetectorBranch, incoming: Direction3) -> bool {
    (-incoming).dot(d.normal.vec()) >= d.cos_fov() - FOV_COS_EPS
}

/// Emitting end of a hop.
#[derive(Debug, Clone, Copy)]
pub struct Emitter {
    pub position: Point3,
    pub normal: Direction3,
    /// Lambertian order; 1 for diffuse re-emission.
    pub order: f64,
}

/// Collecting end of a hop.
#[derive(Debug, Clone, Copy)]
pub struct Collector {
    pub position: Point3,
    pub normal: Direction3,
    pub area: f64,
    /// Cosine of the acceptance half-angle; `None` for a full hemisphere.
    pub cos_fov: Option<f64>,
}

impl From<&Luminaire> for Emitter {
    fn from(l: &Luminaire) -> Self {
        Emitter {
            position: l.position,
            normal: l.axis,
            order: l.order,
        }
    }
}

impl From<&DetectorBranch> for Collector {
    fn from(d: &DetectorBranch) -> Self {
        Collector {
            position: d.position,
            normal: d.normal,
            area: d.area_m2,
            cos_fov: Some(d.cos_fov()),
        }
    }
}

/// Geometric gain without the visibility test.
///
/// `delta` is `dst - src`, `dist_sq` its squared norm.
#[inline]
pub(crate) fn hop_kernel(
    src_normal: Vec3,
    order: f64,
    delta: Vec3,
    dist_sq: f64,
    dst_normal: Vec3,
    area: f64,
    cos_fov: f64,
) -> f64 {
    let dist = dist_sq.sqrt();
    let inv = 1.0 / dist;
    let cos_e = src_normal.dot(delta) * inv;
    if cos_e <= 0.0 {
        return 0.0;
    }
    let cos_i = -dst_normal.dot(delta) * inv;
    if cos_i <= 0.0 || cos_i < cos_fov - FOV_COS_EPS {
        return 0.0;
    }
    // The point-source model overshoots in the extreme near field.
    (lambertian_pattern(order, cos_e) * cos_i * area / dist_sq).min(1.0)
}

/// Received/transmitted power ratio for one straight hop, including the
/// visibility test against the scene occluders.
pub fn single_hop_gain(src: &Emitter, dst: &Collector, scene: &CabinSection) -> Result<f64> {
    let delta = dst.position - src.position;
    let d2 = delta.norm_sq();
    if d2 == 0.0 {
        return Err(Error::Geometry("coincident hop endpoints".into()));
    }
    if !path_clear(src.position, dst.position, scene) {
        return Ok(0.0);
    }
    Ok(hop_kernel(
        src.normal.vec(),
        src.order,
        delta,
        d2,
        dst.normal.vec(),
        dst.area,
        dst.cos_fov.unwrap_or(-1.0),
    ))
}
