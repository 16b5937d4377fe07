//! Device → (light unit, receiver branch, wavelength set) assignment.
//!
//! The objective is the sum of per-channel SINRs at the reference bandwidth,
//! where a device holding all four bands contributes one channel per band.
//! A channel's interference is every other luminaire transmitting the same
//! band, seen through the device's selected branch.

mod brute;
mod exact;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkbudget::{sinr, ChannelBudget, NoiseModel};
use crate::radiometry::{Band, Luminaire, BANDS, DEFAULT_RESPONSIVITY};
use crate::raytrace::GainTensor;
use crate::receiver::BRANCHES;

pub use brute::{solve_bruteforce, BRUTE_FORCE_LIMIT};
pub use exact::solve_exact;

/// Floor applied to SINR before taking decibels in the dB objective.
const DB_FLOOR_LINEAR: f64 = 1e-20;

/// Cap on a single channel's contribution, keeps noiseless channels finite.
pub(crate) const SINR_CAP: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSet {
    Single(Band),
    All,
}

impl BandSet {
    pub fn bands(&self) -> &'static [Band] {
        match self {
            BandSet::Single(Band::Red) => &BANDS[0..1],
            BandSet::Single(Band::Yellow) => &BANDS[1..2],
            BandSet::Single(Band::Green) => &BANDS[2..3],
            BandSet::Single(Band::Blue) => &BANDS[3..4],
            BandSet::All => &BANDS,
        }
    }

    pub fn mask(&self) -> u8 {
        self.bands().iter().fold(0, |m, b| m | (1 << b.index()))
    }

    /// R < Y < G < B < All.
    pub fn order_key(&self) -> u8 {
        match self {
            BandSet::Single(b) => b.index() as u8,
            BandSet::All => 4,
        }
    }
}

impl Ord for BandSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl PartialOrd for BandSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BandSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandSet::Single(b) => write!(f, "{b}"),
            BandSet::All => f.write_str("All"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    SumLinear,
    SumDb,
}

impl Objective {
    #[inline]
    pub(crate) fn term(self, sinr: f64) -> f64 {
        match self {
            Objective::SumLinear => sinr.min(SINR_CAP),
            Objective::SumDb => 10.0 * sinr.max(DB_FLOOR_LINEAR).min(SINR_CAP).log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: usize,
    pub passenger: usize,
    /// Positional indices into [`AllocationProblem::luminaires`].
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    /// Luminaire ids.
    pub luminaires: Vec<usize>,
    pub devices: Vec<DeviceSpec>,
    /// DC gains, `[luminaire][device][branch]`.
    pub gains: Vec<f64>,
    /// Optical power per luminaire and band (W).
    pub power_w: Vec<[f64; 4]>,
    pub responsivity: [f64; 4],
    pub noise: NoiseModel,
    pub objective: Objective,
}

/// One device's resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceAssignment {
    pub device: usize,
    pub passenger: usize,
    pub luminaire: usize,
    /// 1-based.
    pub branch: usize,
    pub bands: BandSet,
}

impl DeviceAssignment {
    fn key(&self) -> (usize, usize, usize, u8) {
        (self.device, self.luminaire, self.branch, self.bands.order_key())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub devices: Vec<DeviceAssignment>,
}

impl Assignment {
    /// Lexicographic comparison by device, then luminaire, branch, band.
    pub fn lex_cmp(&self, other: &Assignment) -> Ordering {
        let a = self.devices.iter().map(DeviceAssignment::key);
        let b = other.devices.iter().map(DeviceAssignment::key);
        a.cmp(b)
    }

    pub fn get(&self, device: usize) -> Option<&DeviceAssignment> {
        self.devices.iter().find(|d| d.device == device)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: Assignment,
    pub objective: f64,
    /// Search nodes (exact) or assignments enumerated (brute force).
    pub explored: u64,
}

/// True if (`obj`, `a`) beats (`best_obj`, `best`) under the tie rule.
pub(crate) fn improves(obj: f64, a: &Assignment, best: Option<(f64, &Assignment)>) -> bool {
    match best {
        None => true,
        Some((bo, b)) => obj > bo || (obj == bo && a.lex_cmp(b) == Ordering::Less),
    }
}

impl AllocationProblem {
    pub fn num_luminaires(&self) -> usize {
        self.luminaires.len()
    }

    #[inline]
    pub fn gain(&self, lum: usize, dev: usize, branch: usize) -> f64 {
        self.gains[(lum * self.devices.len() + dev) * BRANCHES + branch]
    }

    /// Photocurrent of `lum`'s `band` transmission on `dev`'s `branch`.
    #[inline]
    pub fn current(&self, lum: usize, dev: usize, branch: usize, band: Band) -> f64 {
        self.responsivity[band.index()] * self.power_w[lum][band.index()] * self.gain(lum, dev, branch)
    }

    pub fn luminaire_index(&self, id: usize) -> Option<usize> {
        self.luminaires.iter().position(|l| *l == id)
    }

    pub fn device_index(&self, id: usize) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    /// Devices per passenger, ordered by passenger id.
    pub fn passengers(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, d) in self.devices.iter().enumerate() {
            m.entry(d.passenger).or_default().push(i);
        }
        m
    }

    /// Band sets a device may hold: singletons, plus `All` for a passenger's
    /// only device.
    pub fn allowed_sets(&self, dev: usize) -> Vec<BandSet> {
        let p = self.devices[dev].passenger;
        let sole = self.devices.iter().filter(|d| d.passenger == p).count() == 1;
        let mut v: Vec<BandSet> = BANDS.iter().map(|b| BandSet::Single(*b)).collect();
        if sole {
            v.push(BandSet::All);
        }
        v
    }

    pub fn check_shape(&self) -> Result<()> {
        let (nl, nd) = (self.luminaires.len(), self.devices.len());
        if self.gains.len() != nl * nd * BRANCHES {
            return Err(Error::invalid(
                "gains",
                format!("expected {} entries, got {}", nl * nd * BRANCHES, self.gains.len()),
            ));
        }
        if self.power_w.len() != nl {
            return Err(Error::invalid("power_w", "one entry per luminaire required"));
        }
        if self.gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::invalid("gains", "must be finite and non-negative"));
        }
        for d in &self.devices {
            if d.candidates.iter().any(|&c| c >= nl) {
                return Err(Error::invalid(
                    "candidates",
                    format!("device {} lists an unknown luminaire index", d.id),
                ));
            }
        }
        self.noise.validate()
    }

    /// Structural feasibility preconditions shared by both solvers.
    pub(crate) fn check_feasible(&self) -> Result<()> {
        self.check_shape()?;
        for (p, devs) in self.passengers() {
            if devs.len() > BANDS.len() {
                return Err(Error::Infeasible(format!(
                    "passenger {p} has {} devices but only {} distinct bands exist \
                     (band reuse within passenger)",
                    devs.len(),
                    BANDS.len()
                )));
            }
        }
        if let Some(d) = self.devices.iter().find(|d| d.candidates.is_empty()) {
            return Err(Error::Infeasible(format!(
                "device {} has no candidate luminaire",
                d.id
            )));
        }
        Ok(())
    }

    /// Active `(luminaire, band)` transmissions of an assignment.
    pub fn active_set(&self, a: &Assignment) -> Result<Vec<[bool; 4]>> {
        let mut active = vec![[false; 4]; self.luminaires.len()];
        for d in &a.devices {
            let l = self
                .luminaire_index(d.luminaire)
                .ok_or(Error::UnknownLuminaire(d.luminaire))?;
            for b in d.bands.bands() {
                active[l][b.index()] = true;
            }
        }
        Ok(active)
    }

    /// Currents for device `dev` served by `lum` on `branch` (0-based) in
    /// `band`, interference from every other active luminaire in that band.
    pub fn channel_budget(
        &self,
        active: &[[bool; 4]],
        dev: usize,
        lum: usize,
        branch: usize,
        band: Band,
    ) -> ChannelBudget {
        let interferers = (0..self.luminaires.len())
            .filter(|&l| l != lum && active[l][band.index()])
            .map(|l| self.current(l, dev, branch, band))
            .collect();
        ChannelBudget {
            signal_a: self.current(lum, dev, branch, band),
            interferers_a: interferers,
            rms_delay_spread_s: 0.0,
            bandwidth_hz: f64::INFINITY,
        }
    }

    fn channel_sinr(&self, budget: &ChannelBudget) -> f64 {
        let var = budget.noise_var(&self.noise, self.noise.reference_bandwidth_hz);
        sinr(budget.signal_a, &budget.interferers_a, var).unwrap_or(0.0)
    }

    /// Per-band SINRs of one device under an assignment.
    pub fn device_sinrs(&self, a: &Assignment, device: usize) -> Result<Vec<(Band, f64)>> {
        let active = self.active_set(a)?;
        let da = a
            .get(device)
            .ok_or_else(|| Error::invalid("device", format!("{device} not assigned")))?;
        let dev = self
            .device_index(device)
            .ok_or_else(|| Error::invalid("device", format!("{device} unknown")))?;
        let lum = self
            .luminaire_index(da.luminaire)
            .ok_or(Error::UnknownLuminaire(da.luminaire))?;
        if !(1..=BRANCHES).contains(&da.branch) {
            return Err(Error::invalid("branch", format!("{} out of range", da.branch)));
        }
        Ok(da
            .bands
            .bands()
            .iter()
            .map(|&b| {
                let budget = self.channel_budget(&active, dev, lum, da.branch - 1, b);
                (b, self.channel_sinr(&budget))
            })
            .collect())
    }

    /// Objective of a complete assignment, computed from scratch.
    pub fn evaluate(&self, a: &Assignment) -> Result<f64> {
        let mut total = 0.0;
        for d in &self.devices {
            let mut v = 0.0;
            for (_, s) in self.device_sinrs(a, d.id)? {
                v += self.objective.term(s);
            }
            total += v;
        }
        Ok(total)
    }
}

/// Builds the allocation problem for the devices in `tensor`.
///
/// Luminaires whose best-branch gain to a device falls below
/// `prune_ratio` times that device's strongest luminaire are dropped from
/// its candidate list.
pub fn build_problem(
    tensor: &GainTensor,
    luminaires: &[Luminaire],
    responsivity: [f64; 4],
    noise: &NoiseModel,
    objective: Objective,
    prune_ratio: f64,
) -> Result<AllocationProblem> {
    if !(0.0..=1.0).contains(&prune_ratio) {
        return Err(Error::invalid("prune_ratio", "must lie in [0, 1]"));
    }
    let mut power_w = Vec::with_capacity(tensor.luminaires.len());
    for id in &tensor.luminaires {
        let l = luminaires
            .iter()
            .find(|l| l.id == *id)
            .ok_or(Error::UnknownLuminaire(*id))?;
        power_w.push(l.power_w);
    }
    let nl = tensor.luminaires.len();
    let devices = tensor
        .devices
        .iter()
        .enumerate()
        .map(|(d, key)| {
            let best: Vec<f64> = (0..nl)
                .map(|l| (0..BRANCHES).map(|b| tensor.gain(l, d, b)).fold(0.0, f64::max))
                .collect();
            let top = best.iter().copied().fold(0.0, f64::max);
            let candidates = (0..nl)
                .filter(|&l| best[l] > 0.0 && best[l] >= prune_ratio * top)
                .collect();
            DeviceSpec {
                id: key.id,
                passenger: key.passenger,
                candidates,
            }
        })
        .collect();
    let p = AllocationProblem {
        luminaires: tensor.luminaires.clone(),
        devices,
        gains: tensor.dc_gain.clone(),
        power_w,
        responsivity,
        noise: noise.clone(),
        objective,
    };
    p.check_shape()?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    MissingDevice,
    DuplicateDevice,
    UnknownDevice,
    UnknownLuminaire,
    BranchOutOfRange,
    BandReuseWithinPassenger,
    LuminaireBandShared,
    AllBandsNotSole,
    PassengerMismatch,
    NonFiniteSinr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub device: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::MissingDevice => "device not assigned",
            ViolationKind::DuplicateDevice => "device assigned twice",
            ViolationKind::UnknownDevice => "unknown device",
            ViolationKind::UnknownLuminaire => "unknown luminaire",
            ViolationKind::BranchOutOfRange => "branch out of range",
            ViolationKind::BandReuseWithinPassenger => "band reuse within passenger",
            ViolationKind::LuminaireBandShared => "luminaire band serves several devices",
            ViolationKind::AllBandsNotSole => "all-band set on a passenger with several devices",
            ViolationKind::PassengerMismatch => "passenger does not match device",
            ViolationKind::NonFiniteSinr => "non-finite SINR",
        };
        write!(f, "device {}: {what}", self.device)
    }
}

/// Lists every broken assignment invariant; empty when the assignment is
/// valid and every channel has a finite SINR.
pub fn validate(a: &Assignment, p: &AllocationProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |device, kind| out.push(Violation { device, kind });
    let mut seen = vec![0usize; p.devices.len()];
    let mut pass_mask: BTreeMap<usize, u8> = BTreeMap::new();
    let mut lum_band: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut structurally_ok = true;

    for da in &a.devices {
        let Some(di) = p.device_index(da.device) else {
            v(da.device, ViolationKind::UnknownDevice);
            structurally_ok = false;
            continue;
        };
        seen[di] += 1;
        if seen[di] == 2 {
            v(da.device, ViolationKind::DuplicateDevice);
            structurally_ok = false;
        }
        if p.devices[di].passenger != da.passenger {
            v(da.device, ViolationKind::PassengerMismatch);
        }
        if p.luminaire_index(da.luminaire).is_none() {
            v(da.device, ViolationKind::UnknownLuminaire);
            structurally_ok = false;
        }
        if !(1..=BRANCHES).contains(&da.branch) {
            v(da.device, ViolationKind::BranchOutOfRange);
            structurally_ok = false;
        }
        let pid = p.devices[di].passenger;
        if da.bands == BandSet::All && !p.allowed_sets(di).contains(&BandSet::All) {
            v(da.device, ViolationKind::AllBandsNotSole);
        }
        let m = pass_mask.entry(pid).or_default();
        if *m & da.bands.mask() != 0 {
            v(da.device, ViolationKind::BandReuseWithinPassenger);
        }
        *m |= da.bands.mask();
        for b in da.bands.bands() {
            let e = lum_band.entry((da.luminaire, b.index())).or_insert(0);
            *e += 1;
            if *e == 2 {
                v(da.device, ViolationKind::LuminaireBandShared);
            }
        }
    }
    for (i, n) in seen.iter().enumerate() {
        if *n == 0 {
            v(p.devices[i].id, ViolationKind::MissingDevice);
            structurally_ok = false;
        }
    }
    if structurally_ok {
        for d in &p.devices {
            if let Ok(s) = p.device_sinrs(a, d.id) {
                if s.iter().any(|(_, x)| !x.is_finite()) {
                    v(d.id, ViolationKind::NonFiniteSinr);
                }
            }
        }
    }
    out
}

/// Random problem for solver cross-checks. Gains are log-uniform over three
/// decades with roughly one in five entries zero.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    passengers: usize,
    devices_per_passenger: usize,
    luminaires: usize,
) -> AllocationProblem {
    let nd = passengers * devices_per_passenger;
    let gains = (0..luminaires * nd * BRANCHES)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                10f64.powf(rng.gen_range(-7.0..-4.0))
            }
        })
        .collect();
    let devices = (0..nd)
        .map(|i| DeviceSpec {
            id: i + 1,
            passenger: i / devices_per_passenger + 1,
            candidates: (0..luminaires).collect(),
        })
        .collect();
    let power_w = (0..luminaires)
        .map(|_| {
            let mut p = [0.0; 4];
            for x in &mut p {
                *x = rng.gen_range(0.5..2.0);
            }
            p
        })
        .collect();
    AllocationProblem {
        luminaires: (1..=luminaires).collect(),
        devices,
        gains,
        power_w,
        responsivity: DEFAULT_RESPONSIVITY,
        noise: NoiseModel::default(),
        objective: Objective::SumLinear,
    }
}
