//! Cabin-section scene: room shell, seat-top occluders, luminaire placement
//! and reflecting-element subdivision.
//!
//! Coordinate frame: `x` runs along the cabin length, `y` across the width,
//! `z` is height. The origin sits at one floor corner so every interior point
//! has non-negative coordinates.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiometry::{lambertian_order, Luminaire, BANDS};

/// Geometric slack used for containment tests (metres).
const CONTAINMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub type Point3 = Vec3;

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (o - self).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit-norm direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct Direction3(Vec3);

impl Direction3 {
    pub const UP: Direction3 = Direction3(Vec3::new(0.0, 0.0, 1.0));
    pub const DOWN: Direction3 = Direction3(Vec3::new(0.0, 0.0, -1.0));

    /// Normalizes `v`; fails for the zero vector or non-finite input.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Geometry(format!("cannot normalize {v:?}")));
        }
        Ok(Direction3(v * (1.0 / n)))
    }

    pub fn vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(self, v: Vec3) -> f64 {
        self.0.dot(v)
    }
}

impl TryFrom<Vec3> for Direction3 {
    type Error = Error;
    fn try_from(v: Vec3) -> Result<Self> {
        Direction3::new(v)
    }
}

impl From<Direction3> for Vec3 {
    fn from(d: Direction3) -> Vec3 {
        d.0
    }
}

impl Neg for Direction3 {
    type Output = Direction3;
    fn neg(self) -> Direction3 {
        Direction3(-self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Floor,
    Ceiling,
    Wall,
}

/// A rectangular room surface. `origin + s·edge_u + t·edge_v` for
/// `s, t ∈ [0, 1]` spans the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePanel {
    pub name: String,
    pub kind: SurfaceKind,
    pub origin: Point3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    /// Points into the room.
    pub normal: Direction3,
    pub reflectance: f64,
}

impl SurfacePanel {
    pub fn area(&self) -> f64 {
        self.edge_u.cross(self.edge_v).norm()
    }
}

/// One reflecting element of a subdivided panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePatch {
    pub center: Point3,
    pub normal: Direction3,
    pub area: f64,
    pub reflectance: f64,
    /// Bounce order this patch belongs to (1 or 2).
    pub order: u8,
}

/// Axis-aligned seat footprint; the seat is a solid block from the floor up
/// to the blocking height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Footprint {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatGroup {
    Window,
    Middle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seat {
    /// 1-based; seats 1-3 and 8-10 are window-side triples, 4-7 the middle block.
    pub id: usize,
    pub passenger: usize,
    pub group: SeatGroup,
    /// Centre of the seat top, at the blocking height.
    pub top_center: Point3,
    pub footprint: Footprint,
}

/// Cabin-section geometry parameters (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CabinConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub blocking_height_m: f64,
    pub seat_width_m: f64,
    pub seat_depth_m: f64,
    pub aisle_width_m: f64,
    pub seat_pitch_m: f64,
    /// Seat rows in the section; the passenger row is the middle one, the
    /// others only block light.
    pub rows: usize,
    pub ceiling_reflectance: f64,
    pub wall_reflectance: f64,
    pub floor_reflectance: f64,
    pub first_order_element_m: f64,
    pub second_order_element_m: f64,
}

impl Default for CabinConfig {
    fn default() -> Self {
        Self {
            length_m: 4.0,
            width_m: 6.37,
            height_m: 2.41,
            blocking_height_m: 1.0,
            seat_width_m: 0.5,
            seat_depth_m: 0.5,
            aisle_width_m: 0.5,
            seat_pitch_m: 0.8,
            rows: 1,
            ceiling_reflectance: 0.8,
            wall_reflectance: 0.8,
            floor_reflectance: 0.3,
            first_order_element_m: 0.05,
            second_order_element_m: 0.20,
        }
    }
}

/// Reading-light placement and emission parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LuminaireConfig {
    pub height_m: f64,
    pub window_semi_angle_deg: f64,
    pub middle_semi_angle_deg: f64,
    /// Emitters per unit; modeled as one co-located source with summed power.
    pub leds_per_unit: u32,
    /// Optical power per emitter and band, ordered red, yellow, green, blue.
    pub power_per_led_w: [f64; 4],
}

impl Default for LuminaireConfig {
    fn default() -> Self {
        Self {
            height_m: 2.1,
            window_semi_angle_deg: 14.0,
            middle_semi_angle_deg: 10.0,
            leds_per_unit: 2,
            power_per_led_w: [1.0; 4],
        }
    }
}

/// Number of passenger seats in a row group (3-4-3 layout).
pub const SEATS_PER_ROW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CabinSection {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub blocking_height: f64,
    pub panels: Vec<SurfacePanel>,
    /// Passenger seats, ids 1..=10.
    pub seats: Vec<Seat>,
    /// Every seat footprint in the section, occupied or not.
    pub occluders: Vec<Footprint>,
    pub first_order_element: f64,
    pub second_order_element: f64,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Geometry(format!("{name} must be positive, got {v}")))
    }
}

fn unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Geometry(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Seat-centre `y` offsets for the 3-4-3 row, mirror-exact about the
/// width midplane.
fn seat_row_y(cfg: &CabinConfig) -> Result<[f64; SEATS_PER_ROW]> {
    let sw = cfg.seat_width_m;
    let used = SEATS_PER_ROW as f64 * sw + 2.0 * cfg.aisle_width_m;
    let margin = (cfg.width_m - used) / 2.0;
    if margin <= 0.0 {
        return Err(Error::Geometry(format!(
            "3-4-3 row needs {used} m but the cabin is {} m wide",
            cfg.width_m
        )));
    }
    let mut ys = [0.0; SEATS_PER_ROW];
    for (i, y) in ys.iter_mut().enumerate().take(SEATS_PER_ROW / 2) {
        *y = if i < 3 {
            margin + (i as f64 + 0.5) * sw
        } else {
            margin + 3.0 * sw + cfg.aisle_width_m + (i as f64 - 3.0 + 0.5) * sw
        };
    }
    for i in SEATS_PER_ROW / 2..SEATS_PER_ROW {
        ys[i] = cfg.width_m - ys[SEATS_PER_ROW - 1 - i];
    }
    Ok(ys)
}

fn seat_group(id: usize) -> SeatGroup {
    if (4..=7).contains(&id) {
        SeatGroup::Middle
    } else {
        SeatGroup::Window
    }
}

fn box_panels(l: f64, w: f64, h: f64, floor: f64, ceiling: f64, wall: f64) -> Vec<SurfacePanel> {
    let dir = |x, y, z| Direction3::new(Vec3::new(x, y, z)).expect("axis direction");
    let panel = |name, kind, origin, edge_u, edge_v, normal, reflectance| SurfacePanel {
        name: String::from(name),
        kind,
        origin,
        edge_u,
        edge_v,
        normal,
        reflectance,
    };
    let (ex, ey, ez) = (
        Vec3::new(l, 0.0, 0.0),
        Vec3::new(0.0, w, 0.0),
        Vec3::new(0.0, 0.0, h),
    );
    let o = Vec3::default();
    vec![
        panel("floor", SurfaceKind::Floor, o, ex, ey, Direction3::UP, floor),
        panel("ceiling", SurfaceKind::Ceiling, ez, ex, ey, Direction3::DOWN, ceiling),
        panel("wall_y0", SurfaceKind::Wall, o, ex, ez, dir(0.0, 1.0, 0.0), wall),
        panel("wall_y1", SurfaceKind::Wall, ey, ex, ez, dir(0.0, -1.0, 0.0), wall),
        panel("wall_x0", SurfaceKind::Wall, o, ey, ez, dir(1.0, 0.0, 0.0), wall),
        panel("wall_x1", SurfaceKind::Wall, ex, ey, ez, dir(-1.0, 0.0, 0.0), wall),
    ]
}

/// Builds the closed six-panel box, the passenger row and the seat-top
/// occluders.
pub fn build_cabin_section(cfg: &CabinConfig) -> Result<CabinSection> {
    positive("length_m", cfg.length_m)?;
    positive("width_m", cfg.width_m)?;
    positive("height_m", cfg.height_m)?;
    positive("blocking_height_m", cfg.blocking_height_m)?;
    positive("seat_width_m", cfg.seat_width_m)?;
    positive("seat_depth_m", cfg.seat_depth_m)?;
    positive("aisle_width_m", cfg.aisle_width_m)?;
    positive("seat_pitch_m", cfg.seat_pitch_m)?;
    positive("first_order_element_m", cfg.first_order_element_m)?;
    positive("second_order_element_m", cfg.second_order_element_m)?;
    unit_interval("ceiling_reflectance", cfg.ceiling_reflectance)?;
    unit_interval("wall_reflectance", cfg.wall_reflectance)?;
    unit_interval("floor_reflectance", cfg.floor_reflectance)?;
    if cfg.blocking_height_m >= cfg.height_m {
        return Err(Error::Geometry(format!(
            "blocking height {} must be below the ceiling {}",
            cfg.blocking_height_m, cfg.height_m
        )));
    }
    if cfg.rows == 0 {
        return Err(Error::Geometry("at least one seat row is required".into()));
    }

    let (l, w, h) = (cfg.length_m, cfg.width_m, cfg.height_m);
    let ys = seat_row_y(cfg)?;

    let passenger_row = (cfg.rows - 1) / 2;
    let mut occluders = Vec::with_capacity(cfg.rows * SEATS_PER_ROW);
    let mut seats = Vec::with_capacity(SEATS_PER_ROW);
    for row in 0..cfg.rows {
        let xc = l / 2.0 + (row as f64 - (cfg.rows - 1) as f64 / 2.0) * cfg.seat_pitch_m;
        let (x0, x1) = (xc - cfg.seat_depth_m / 2.0, xc + cfg.seat_depth_m / 2.0);
        if x0 <= 0.0 || x1 >= l {
            return Err(Error::Geometry(format!(
                "seat row {row} spans x in [{x0}, {x1}], outside the {l} m section"
            )));
        }
        for (i, &y) in ys.iter().enumerate() {
            let fp = Footprint {
                x0,
                x1,
                y0: y - cfg.seat_width_m / 2.0,
                y1: y + cfg.seat_width_m / 2.0,
            };
            occluders.push(fp);
            if row == passenger_row {
                seats.push(Seat {
                    id: i + 1,
                    passenger: i + 1,
                    group: seat_group(i + 1),
                    top_center: Vec3::new(xc, y, cfg.blocking_height_m),
                    footprint: fp,
                });
            }
        }
    }

    let panels = box_panels(
        l,
        w,
        h,
        cfg.floor_reflectance,
        cfg.ceiling_reflectance,
        cfg.wall_reflectance,
    );

    let section = CabinSection {
        length: l,
        width: w,
        height: h,
        blocking_height: cfg.blocking_height_m,
        panels,
        seats,
        occluders,
        first_order_element: cfg.first_order_element_m,
        second_order_element: cfg.second_order_element_m,
    };
    for seat in &section.seats {
        if !section.strictly_inside(seat.top_center) {
            return Err(Error::Geometry(format!(
                "seat {} at {:?} lies outside the cabin",
                seat.id, seat.top_center
            )));
        }
    }
    Ok(section)
}

/// Empty rectangular room with uniform reflectance and no occluders.
pub fn shell_box(
    length: f64,
    width: f64,
    height: f64,
    reflectance: f64,
    element: f64,
) -> Result<CabinSection> {
    positive("length", length)?;
    positive("width", width)?;
    positive("height", height)?;
    positive("element", element)?;
    unit_interval("reflectance", reflectance)?;
    Ok(CabinSection {
        length,
        width,
        height,
        blocking_height: 0.0,
        panels: box_panels(length, width, height, reflectance, reflectance, reflectance),
        seats: Vec::new(),
        occluders: Vec::new(),
        first_order_element: element,
        second_order_element: element,
    })
}

impl CabinSection {
    pub fn inside(&self, p: Point3) -> bool {
        let e = CONTAINMENT_EPS;
        p.x >= -e
            && p.x <= self.length + e
            && p.y >= -e
            && p.y <= self.width + e
            && p.z >= -e
            && p.z <= self.height + e
    }

    pub fn strictly_inside(&self, p: Point3) -> bool {
        p.x > 0.0
            && p.x < self.length
            && p.y > 0.0
            && p.y < self.width
            && p.z > 0.0
            && p.z < self.height
    }

    pub fn centroid(&self) -> Point3 {
        Vec3::new(self.length / 2.0, self.width / 2.0, self.height / 2.0)
    }

    /// Reflection about the `y` midplane.
    pub fn mirror(&self, p: Point3) -> Point3 {
        Vec3::new(p.x, self.width - p.y, p.z)
    }

    pub fn seat(&self, id: usize) -> Option<&Seat> {
        self.seats.iter().find(|s| s.id == id)
    }

    /// Subdivides every panel at the first- and second-order element sides.
    pub fn patches(&self) -> Result<PatchSet> {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for p in &self.panels {
            first.extend(subdivide(p, self.first_order_element, 1)?);
            second.extend(subdivide(p, self.second_order_element, 2)?);
        }
        Ok(PatchSet { first, second })
    }
}

/// Reflecting elements for first- and second-bounce evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatchSet {
    pub first: Vec<ScenePatch>,
    pub second: Vec<ScenePatch>,
}

impl PatchSet {
    pub fn iter(&self) -> impl Iterator<Item = &ScenePatch> {
        self.first.iter().chain(self.second.iter())
    }

    pub fn set_reflectance(&mut self, rho: f64) {
        for p in self.first.iter_mut().chain(self.second.iter_mut()) {
            p.reflectance = rho;
        }
    }
}

fn cells(len: f64, side: f64) -> usize {
    // Slack absorbs representation error in exact multiples (1.0 / 0.05).
    ((len / side) - 1e-9).ceil().max(1.0) as usize
}

/// Splits `panel` into `ceil(L1/side) · ceil(L2/side)` equal cells.
///
/// Cells are stretched uniformly when the edge is not a multiple of `side`,
/// so the grid tiles the panel exactly and is symmetric under reflection.
pub fn subdivide(panel: &SurfacePanel, side: f64, order: u8) -> Result<Vec<ScenePatch>> {
    if !(side.is_finite() && side > 0.0) {
        return Err(Error::invalid("side", format!("must be positive, got {side}")));
    }
    let (lu, lv) = (panel.edge_u.norm(), panel.edge_v.norm());
    let (nu, nv) = (cells(lu, side), cells(lv, side));
    let du = panel.edge_u * (1.0 / nu as f64);
    let dv = panel.edge_v * (1.0 / nv as f64);
    let area = du.cross(dv).norm();
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let center = panel.origin + du * (i as f64 + 0.5) + dv * (j as f64 + 0.5);
            out.push(ScenePatch {
                center,
                normal: panel.normal,
                area,
                reflectance: panel.reflectance,
                order,
            });
        }
    }
    Ok(out)
}

/// Open parameter interval `(lo, hi)` of `t` where `lo_bound < p + t·d < hi_bound`.
fn slab(p: f64, d: f64, lo_bound: f64, hi_bound: f64) -> (f64, f64) {
    if d == 0.0 {
        if p > lo_bound && p < hi_bound {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (1.0, 0.0)
        }
    } else {
        let t0 = (lo_bound - p) / d;
        let t1 = (hi_bound - p) / d;
        if t0 < t1 {
            (t0, t1)
        } else {
            (t1, t0)
        }
    }
}

/// Line-of-sight test between two points in the section.
///
/// Seats are solid blocks from the floor up to the blocking height; the open
/// segment is blocked when any part of it lies strictly below that height
/// and strictly inside a seat footprint. Both endpoints must be in the room.
pub fn path_clear(a: Point3, b: Point3, scene: &CabinSection) -> bool {
    if !scene.inside(a) || !scene.inside(b) {
        return false;
    }
    // Canonical endpoint order makes the test exactly symmetric.
    let (a, b) = if (a.x, a.y, a.z) <= (b.x, b.y, b.z) {
        (a, b)
    } else {
        (b, a)
    };
    let h = scene.blocking_height;
    if a.z >= h && b.z >= h {
        return true;
    }
    let d = b - a;
    let (zl, zh) = slab(a.z, d.z, f64::NEG_INFINITY, h);
    let lo = zl.max(0.0);
    let hi = zh.min(1.0);
    if lo >= hi {
        return true;
    }
    for fp in &scene.occluders {
        let (xl, xh) = slab(a.x, d.x, fp.x0, fp.x1);
        let (yl, yh) = slab(a.y, d.y, fp.y0, fp.y1);
        if lo.max(xl).max(yl) < hi.min(xh).min(yh) {
            return false;
        }
    }
    true
}

/// Places one reading-light unit above each passenger seat, pointing down.
pub fn place_luminaires(scene: &CabinSection, cfg: &LuminaireConfig) -> Result<Vec<Luminaire>> {
    if !(cfg.height_m > scene.blocking_height && cfg.height_m <= scene.height) {
        return Err(Error::Geometry(format!(
            "luminaire height {} must lie in ({}, {}]",
            cfg.height_m, scene.blocking_height, scene.height
        )));
    }
    if cfg.leds_per_unit == 0 {
        return Err(Error::Geometry("leds_per_unit must be at least 1".into()));
    }
    if cfg.power_per_led_w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Geometry("band powers must be non-negative".into()));
    }
    let mut out = Vec::with_capacity(scene.seats.len());
    for seat in &scene.seats {
        let semi = match seat.group {
            SeatGroup::Window => cfg.window_semi_angle_deg,
            SeatGroup::Middle => cfg.middle_semi_angle_deg,
        };
        let mut power = [0.0; 4];
        for band in BANDS {
            power[band.index()] = cfg.power_per_led_w[band.index()] * cfg.leds_per_unit as f64;
        }
        out.push(Luminaire {
            id: seat.id,
            position: Vec3::new(seat.top_center.x, seat.top_center.y, cfg.height_m),
            axis: Direction3::DOWN,
            semi_angle_deg: semi,
            order: lambertian_order(semi)?,
            power_w: power,
        });
    }
    Ok(out)
}
