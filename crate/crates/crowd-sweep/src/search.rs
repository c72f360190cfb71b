//! Brute-force oracle over constant control vectors.
//!
//! Every grid cell is evaluated through a full simulation of the sweeping
//! dynamics — never through the closed forms — so the sweep is an
//! independent check on the analytic solver. Frozen exit angles are used
//! throughout, matching the convention under which the closed forms hold.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{simulate_terminal, AngleMode};
use crate::model::{cost, ControlProfile, Scenario};

/// Evaluation budget guard.
pub const MAX_EVALUATIONS: u64 = 10_000_000;

/// A uniform control grid, shared by every coordinate.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Time steps per simulation.
    pub steps_per_sim: usize,
    /// Run a local golden-section refinement around the grid argmin.
    pub refine: bool,
}

impl GridSpec {
    fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo < self.hi) {
            return Err(Error::InvalidArgument("grid needs lo < hi".into()));
        }
        if !(self.step > 0.0 && self.step <= self.hi - self.lo) {
            return Err(Error::InvalidArgument("grid needs 0 < step <= hi - lo".into()));
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

/// Result of a sweep: the best cell (possibly refined) and the full table.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_a: ControlProfile,
    pub best_j: f64,
    /// One `(controls, J)` row per grid cell, in lexicographic cell order.
    pub table: Vec<(Vec<f64>, f64)>,
}

fn cell_controls(values: &[f64], n: usize, mut index: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    for slot in (0..n).rev() {
        a[slot] = values[index % values.len()];
        index /= values.len();
    }
    a
}

/// Exhaustive evaluation of `J` over the control grid.
///
/// Cells are independent and evaluated in parallel; the reduction is a
/// sequential scan over the ordered table, so results do not depend on the
/// evaluation order. Ties go to the lexicographically smallest control
/// vector.
pub fn grid_search(scenario: &Scenario, grid: &GridSpec) -> Result<GridSearchResult> {
    scenario.validate()?;
    let values = grid.values()?;
    let n = scenario.n();
    if values[0] < scenario.control_bounds[0]
        || *values.last().unwrap() > scenario.control_bounds[1]
    {
        return Err(Error::InvalidArgument(
            "grid range exceeds the scenario control bounds".into(),
        ));
    }
    let total = (values.len() as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if total > MAX_EVALUATIONS {
        return Err(Error::SweepBudget { required: total, limit: MAX_EVALUATIONS });
    }

    let table: Vec<(Vec<f64>, f64)> = (0..total as usize)
        .into_par_iter()
        .map(|idx| {
            let a = cell_controls(&values, n, idx);
            let profile = ControlProfile(a.clone());
            let terminal = simulate_terminal(scenario, &profile, grid.steps_per_sim, AngleMode::Frozen)
                .expect("grid cell within validated bounds");
            let j = cost(&terminal, &profile, scenario.horizon);
            (a, j)
        })
        .collect();

    let (best_a, best_j) = table
        .iter()
        .fold((table[0].0.clone(), f64::INFINITY), |(ba, bj), (a, j)| {
            if *j < bj {
                (a.clone(), *j)
            } else {
                (ba, bj)
            }
        });

    let (best_a, best_j) = if grid.refine {
        let (a, j) = refine_local(
            scenario,
            &ControlProfile(best_a.clone()),
            grid.step,
            1e-6,
            grid.steps_per_sim,
        )?;
        if j < best_j {
            (a.0, j)
        } else {
            (best_a, best_j)
        }
    } else {
        (best_a, best_j)
    };

    Ok(GridSearchResult { best_a: ControlProfile(best_a), best_j, table })
}

/// Coordinate-wise golden-section descent in `a0 ± radius`, clamped to the
/// control bounds, cycling until no coordinate interval exceeds `tol`.
/// Never returns a value worse than the starting point.
pub fn refine_local(
    scenario: &Scenario,
    a0: &ControlProfile,
    radius: f64,
    tol: f64,
    steps_per_sim: usize,
) -> Result<(ControlProfile, f64)> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("refinement radius must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("refinement tol must be positive".into()));
    }
    let eval = |a: &[f64]| -> Result<f64> {
        let profile = ControlProfile(a.to_vec());
        let terminal = simulate_terminal(scenario, &profile, steps_per_sim, AngleMode::Frozen)?;
        Ok(cost(&terminal, &profile, scenario.horizon))
    };
    let [blo, bhi] = scenario.control_bounds;
    let mut a = a0.0.clone();
    let mut best = eval(&a)?;

    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _cycle in 0..20 {
        let mut moved = false;
        for i in 0..a.len() {
            let center = a[i];
            let mut lo = (a0.0[i] - radius).max(blo).min(center);
            let mut hi = (a0.0[i] + radius).min(bhi).max(center);
            if hi - lo <= tol {
                continue;
            }
            let mut x1 = hi - inv_phi * (hi - lo);
            let mut x2 = lo + inv_phi * (hi - lo);
            let probe = |x: f64, a: &mut Vec<f64>| -> Result<f64> {
                a[i] = x;
                eval(a)
            };
            let mut f1 = probe(x1, &mut a)?;
            let mut f2 = probe(x2, &mut a)?;
            while hi - lo > tol {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - inv_phi * (hi - lo);
                    f1 = probe(x1, &mut a)?;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + inv_phi * (hi - lo);
                    f2 = probe(x2, &mut a)?;
                }
            }
            let (x_best, f_best) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            if f_best < best {
                best = f_best;
                a[i] = x_best;
                if (x_best - center).abs() > tol {
                    moved = true;
                }
            } else {
                a[i] = center;
            }
        }
        if !moved {
            break;
        }
    }
    Ok((ControlProfile(a), best))
}

/// Write a sweep table as CSV with header `a1,...,an,J`.
pub fn write_sweep_csv<W: Write>(table: &[(Vec<f64>, f64)], out: &mut W) -> Result<()> {
    let n = table.first().map(|(a, _)| a.len()).unwrap_or(0);
    let mut header = String::new();
    for i in 1..=n {
        header.push_str(&format!("a{i},"));
    }
    header.push('J');
    writeln!(out, "{header}")?;
    for (a, j) in table {
        let mut row = String::new();
        for v in a {
            row.push_str(&format!("{v},"));
        }
        row.push_str(&format!("{j}"));
        writeln!(out, "{row}")?;
    }
    Ok(())
}
