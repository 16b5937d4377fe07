//! Exhaustive enumeration, for cross-checking the exact solver on small
//! instances.

use super::{improves, AllocationProblem, Assignment, DeviceAssignment, Solution};
use crate::error::{Error, Result};
use crate::receiver::BRANCHES;

/// Largest number of candidate assignments enumerated.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

pub fn solve_bruteforce(p: &AllocationProblem) -> Result<Solution> {
    p.check_feasible()?;
    let choices: Vec<Vec<DeviceAssignment>> = p
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut v = Vec::new();
            for &l in &d.candidates {
                for branch in 1..=BRANCHES {
                    for bands in p.allowed_sets(i) {
                        v.push(DeviceAssignment {
                            device: d.id,
                            passenger: d.passenger,
                            luminaire: p.luminaires[l],
                            branch,
                            bands,
                        });
                    }
                }
            }
            v
        })
        .collect();
    let size: f64 = choices.iter().map(|c| c.len() as f64).product();
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let n = choices.len();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Assignment)> = None;
    let mut explored = 0u64;
    loop {
        explored += 1;
        let a = Assignment {
            devices: (0..n).map(|i| choices[i][idx[i]]).collect(),
        };
        if feasible(&a) {
            let v = p.evaluate(&a)?;
            if improves(v, &a, best.as_ref().map(|(bv, b)| (*bv, b))) {
                best = Some((v, a));
            }
        }
        // Mixed-radix increment, last device fastest.
        let mut i = n;
        loop {
            if i == 0 {
                let (objective, assignment) = best.ok_or_else(|| {
                    Error::Infeasible("no feasible assignment exists".into())
                })?;
                return Ok(Solution {
                    assignment,
                    objective,
                    explored,
                });
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < choices[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

fn feasible(a: &Assignment) -> bool {
    for (i, x) in a.devices.iter().enumerate() {
        for y in &a.devices[i + 1..] {
            let overlap = x.bands.mask() & y.bands.mask() != 0;
            if overlap && (x.passenger == y.passenger || x.luminaire == y.luminaire) {
                return false;
            }
        }
    }
    true
}
