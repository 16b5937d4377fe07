//! Branch-and-bound over (luminaire, band set) per device.
//!
//! A device's branch only changes its own SINR, so each device simply takes
//! its best branch. Adding transmissions can only add interference, which
//! gives two admissible bounds for the unassigned devices `k..n`:
//!
//! * every unassigned passenger at its best band-disjoint choice under the
//!   transmissions active so far;
//! * the exact optimum of the subproblem made of devices `k..n` alone,
//!   which ignores interference from (and conflicts with) devices `0..k`.
//!
//! The second bound is obtained by solving the suffix subproblems from the
//! last device backwards, each one bounded by the suffixes already solved.

use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;

use super::{improves, AllocationProblem, Assignment, BandSet, DeviceAssignment, Solution};
use crate::error::{Error, Result};
use crate::radiometry::BANDS;
use crate::receiver::BRANCHES;

/// Relative slack below the incumbent before a subtree is discarded.
const PRUNE_SLACK: f64 = 1e-12;

/// Number of leading devices expanded before work is handed to threads.
const SPLIT_DEPTH: usize = 2;

/// Order-preserving map from f64 to u64.
fn encode(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 0 {
        b | (1 << 63)
    } else {
        !b
    }
}

fn decode(u: u64) -> f64 {
    if u >> 63 == 1 {
        f64::from_bits(u & !(1 << 63))
    } else {
        f64::from_bits(!u)
    }
}

fn prunable(bound: f64, thr: f64) -> bool {
    bound < thr - PRUNE_SLACK * thr.abs()
}

struct Search<'a> {
    p: &'a AllocationProblem,
    n: usize,
    nl: usize,
    /// Photocurrents `[dev][lum][branch][band]`.
    cur: Vec<f64>,
    pass: Vec<usize>,
    npass: usize,
    options: Vec<Vec<(usize, BandSet)>>,
    /// Optimum of the subproblem on devices `k..n`, for solved suffixes.
    suffix: Vec<f64>,
}

#[derive(Clone)]
struct State {
    /// First device of the (sub)problem being searched.
    start: usize,
    active: Vec<[bool; 4]>,
    pass_mask: Vec<u8>,
    choice: Vec<(usize, BandSet)>,
}

impl State {
    fn next(&self) -> usize {
        self.start + self.choice.len()
    }
}

struct Ctx<'a> {
    incumbent: &'a AtomicU64,
    best: Option<(f64, Assignment)>,
    nodes: u64,
    /// Keep the lexicographically smallest optimum; off when only the
    /// optimal value is needed.
    ties: bool,
}

impl<'a> Search<'a> {
    fn new(p: &'a AllocationProblem) -> Self {
        let n = p.devices.len();
        let nl = p.num_luminaires();
        let mut cur = vec![0.0; n * nl * BRANCHES * 4];
        for d in 0..n {
            for l in 0..nl {
                for b in 0..BRANCHES {
                    for band in BANDS {
                        cur[((d * nl + l) * BRANCHES + b) * 4 + band.index()] =
                            p.current(l, d, b, band);
                    }
                }
            }
        }
        let ids: Vec<usize> = p.passengers().keys().copied().collect();
        let pass = p
            .devices
            .iter()
            .map(|d| ids.binary_search(&d.passenger).unwrap_or(0))
            .collect();
        let options = (0..n)
            .map(|d| {
                let mut cands = p.devices[d].candidates.clone();
                cands.sort_unstable();
                cands.dedup();
                let sets = p.allowed_sets(d);
                cands
                    .iter()
                    .flat_map(|&l| sets.iter().map(move |s| (l, *s)))
                    .collect()
            })
            .collect();
        let mut suffix = vec![f64::INFINITY; n + 1];
        suffix[n] = 0.0;
        Search {
            p,
            n,
            nl,
            cur,
            pass,
            npass: ids.len(),
            options,
            suffix,
        }
    }

    fn empty_state(&self, start: usize) -> State {
        State {
            start,
            active: vec![[false; 4]; self.nl],
            pass_mask: vec![0; self.npass],
            choice: Vec::with_capacity(self.n - start),
        }
    }

    #[inline]
    fn current(&self, d: usize, l: usize, b: usize, band: usize) -> f64 {
        self.cur[((d * self.nl + l) * BRANCHES + b) * 4 + band]
    }

    #[inline]
    fn feasible(&self, st: &State, d: usize, (l, set): (usize, BandSet)) -> bool {
        let m = set.mask();
        st.pass_mask[self.pass[d]] & m == 0 && set.bands().iter().all(|b| !st.active[l][b.index()])
    }

    /// Best-branch value of serving `d` from `l` with `set`; ties keep the
    /// lower branch.
    fn value(&self, st: &State, d: usize, l: usize, set: BandSet) -> (f64, usize) {
        let nm = &self.p.noise;
        let mut best = (f64::NEG_INFINITY, 0);
        for b in 0..BRANCHES {
            let mut v = 0.0;
            for band in set.bands() {
                let k = band.index();
                let s = self.current(d, l, b, k);
                let (mut si, mut si2) = (0.0, 0.0);
                for (lp, act) in st.active.iter().enumerate() {
                    if lp != l && act[k] {
                        let i = self.current(d, lp, b, k);
                        si += i;
                        si2 += i * i;
                    }
                }
                let var = nm.variance_for(s + si, nm.reference_bandwidth_hz);
                let denom = var + si2;
                let sinr = if s == 0.0 {
                    0.0
                } else if denom == 0.0 {
                    f64::INFINITY
                } else {
                    s * s / denom
                };
                v += self.p.objective.term(sinr);
            }
            if v > best.0 {
                best = (v, b);
            }
        }
        best
    }

    fn apply(&self, st: &mut State, opt: (usize, BandSet)) {
        let d = st.next();
        st.pass_mask[self.pass[d]] |= opt.1.mask();
        for b in opt.1.bands() {
            st.active[opt.0][b.index()] = true;
        }
        st.choice.push(opt);
    }

    fn undo(&self, st: &mut State) {
        let (l, set) = st.choice.pop().expect("undo without choice");
        let d = st.next();
        st.pass_mask[self.pass[d]] &= !set.mask();
        for b in set.bands() {
            st.active[l][b.index()] = false;
        }
    }

    fn assigned_value(&self, st: &State) -> f64 {
        let mut total = 0.0;
        for (i, &(l, set)) in st.choice.iter().enumerate() {
            total += self.value(st, st.start + i, l, set).0;
        }
        total
    }

    fn assignment(&self, st: &State) -> Assignment {
        Assignment {
            devices: st
                .choice
                .iter()
                .enumerate()
                .map(|(i, &(l, set))| {
                    let d = st.start + i;
                    DeviceAssignment {
                        device: self.p.devices[d].id,
                        passenger: self.p.devices[d].passenger,
                        luminaire: self.p.luminaires[l],
                        branch: self.value(st, d, l, set).1 + 1,
                        bands: set,
                    }
                })
                .collect(),
        }
    }

    /// Sequential best-option fill of devices `start..n`, used as a starting
    /// incumbent.
    fn greedy(&self, start: usize) -> Option<f64> {
        let mut st = self.empty_state(start);
        for d in start..self.n {
            let mut pick: Option<(f64, (usize, BandSet))> = None;
            for &opt in &self.options[d] {
                if self.feasible(&st, d, opt) {
                    let v = self.value(&st, d, opt.0, opt.1).0;
                    if pick.is_none_or(|(bv, _)| v > bv) {
                        pick = Some((v, opt));
                    }
                }
            }
            self.apply(&mut st, pick?.1);
        }
        Some(self.assigned_value(&st))
    }

    /// Feasible choices for the first `depth` devices from `start`, in
    /// option order.
    fn prefixes(&self, start: usize, depth: usize) -> Vec<Vec<(usize, BandSet)>> {
        fn rec(s: &Search<'_>, st: &mut State, end: usize, out: &mut Vec<Vec<(usize, BandSet)>>) {
            let d = st.next();
            if d == end {
                out.push(st.choice.clone());
                return;
            }
            for &opt in &s.options[d] {
                if s.feasible(st, d, opt) {
                    s.apply(st, opt);
                    rec(s, st, end, out);
                    s.undo(st);
                }
            }
        }
        let mut out = Vec::new();
        rec(self, &mut self.empty_state(start), (start + depth).min(self.n), &mut out);
        out
    }

    fn dfs(&self, st: &mut State, ctx: &mut Ctx<'_>) {
        ctx.nodes += 1;
        let k = st.next();
        let assigned = self.assigned_value(st);

        // Unassigned devices grouped by passenger: a passenger's devices must
        // still take distinct bands, so the bound maximizes over injective
        // band choices rather than per device.
        let mut next: Vec<(f64, usize)> = Vec::new();
        let mut rest = 0.0;
        let mut group: Vec<[f64; 5]> = Vec::with_capacity(BANDS.len());
        let mut d = k;
        while d < self.n {
            let pass = self.pass[d];
            group.clear();
            while d < self.n && self.pass[d] == pass {
                let mut best = [f64::NEG_INFINITY; 5];
                for (oi, &opt) in self.options[d].iter().enumerate() {
                    if self.feasible(st, d, opt) {
                        let v = self.value(st, d, opt.0, opt.1).0;
                        if d == k {
                            next.push((v, oi));
                        }
                        let slot = opt.1.order_key() as usize;
                        best[slot] = best[slot].max(v);
                    }
                }
                group.push(best);
                d += 1;
            }
            let ub = passenger_bound(&group, st.pass_mask[pass]);
            if ub == f64::NEG_INFINITY {
                return;
            }
            rest += ub;
        }
        let bound = assigned + rest.min(self.suffix[k]);

        let global = decode(ctx.incumbent.load(AtomicOrdering::Relaxed));
        let local = ctx.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
        let thr = global.max(local);

        if k == self.n {
            let keep = if ctx.ties { !prunable(bound, thr) } else { bound > thr };
            if keep {
                let a = self.assignment(st);
                if improves(bound, &a, ctx.best.as_ref().map(|(v, b)| (*v, b))) {
                    ctx.best = Some((bound, a));
                    ctx.incumbent.fetch_max(encode(bound), AtomicOrdering::Relaxed);
                }
            }
            return;
        }
        if prunable(bound, thr) || (!ctx.ties && bound <= thr) {
            return;
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, oi) in next {
            self.apply(st, self.options[k][oi]);
            self.dfs(st, ctx);
            self.undo(st);
        }
    }

    /// Searches devices `start..n`. Returns the best value, its assignment
    /// and the node count.
    fn solve_from(&self, start: usize, ties: bool) -> (Option<(f64, Assignment)>, u64) {
        let incumbent = AtomicU64::new(encode(f64::NEG_INFINITY));
        if let Some(v) = self.greedy(start) {
            // Without tie tracking the greedy value itself need not be found
            // again, so start just below it.
            let seed = if ties { v } else { v - PRUNE_SLACK * v.abs() };
            incumbent.store(encode(seed), AtomicOrdering::Relaxed);
        }
        let results: Vec<(Option<(f64, Assignment)>, u64)> = self
            .prefixes(start, SPLIT_DEPTH)
            .par_iter()
            .map(|prefix| {
                let mut st = self.empty_state(start);
                for &opt in prefix {
                    self.apply(&mut st, opt);
                }
                let mut ctx = Ctx {
                    incumbent: &incumbent,
                    best: None,
                    nodes: 0,
                    ties,
                };
                self.dfs(&mut st, &mut ctx);
                (ctx.best, ctx.nodes)
            })
            .collect();

        let mut best: Option<(f64, Assignment)> = None;
        let mut nodes = 0;
        for (r, n) in results {
            nodes += n;
            if let Some((v, a)) = r {
                if improves(v, &a, best.as_ref().map(|(bv, b)| (*bv, b))) {
                    best = Some((v, a));
                }
            }
        }
        (best, nodes)
    }
}

/// Best total over band choices for one passenger's unassigned devices,
/// `vals[j][slot]` being device `j`'s best value with band slot `slot`
/// (4 = all bands). Slots in `used` are taken by assigned devices.
fn passenger_bound(vals: &[[f64; 5]], used: u8) -> f64 {
    let Some((first, rest)) = vals.split_first() else {
        return 0.0;
    };
    let mut best = f64::NEG_INFINITY;
    for (slot, &v) in first.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        let m = if slot == 4 { 0b1111 } else { 1 << slot };
        if used & m != 0 {
            continue;
        }
        let r = passenger_bound(rest, used | m);
        if r > f64::NEG_INFINITY {
            best = best.max(v + r);
        }
    }
    best
}

/// Exact optimum of the allocation problem.
///
/// Among assignments with equal objective the lexicographically smallest
/// (device, luminaire, branch, band) sequence is returned, so the result
/// does not depend on thread scheduling.
pub fn solve_exact(p: &AllocationProblem) -> Result<Solution> {
    p.check_feasible()?;
    let infeasible =
        || Error::Infeasible("no assignment keeps every (luminaire, band) on one device".into());
    let mut s = Search::new(p);
    let mut nodes = 0;
    for start in (1..s.n).rev() {
        let (best, n) = s.solve_from(start, false);
        nodes += n;
        let (v, _) = best.ok_or_else(infeasible)?;
        s.suffix[start] = v;
    }
    let (best, n) = s.solve_from(0, true);
    nodes += n;
    let (_, assignment) = best.ok_or_else(infeasible)?;
    Ok(Solution {
        objective: p.evaluate(&assignment)?,
        assignment,
        explored: nodes,
    })
}
