//! Catching-up time stepping for the sweeping inclusion
//! `-dx/dt ∈ N(x; Q) + f(x, a)`.
//!
//! Each step drifts the state explicitly by `-h*f` and projects the result
//! back onto the nonoverlap set `Q`. Contact multipliers are recovered per
//! step from the velocity decomposition
//! `dx/dt + f = Σ η_ij ∇D_ij` by nonnegative least squares over the pairs
//! in contact.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    self, direction_angle, pairs, perturbation, Configuration, ControlProfile, Scenario,
};

/// Pair separations at or below this value count as contact.
pub const CONTACT_TOL: f64 = 1e-6;
/// Default projection tolerance.
pub const PROJECTION_TOL: f64 = 1e-10;
/// Default projection sweep limit.
pub const PROJECTION_MAX_ITER: usize = 100;

/// How the exit-seeking angles evolve along a trajectory.
///
/// `Reaimed` recomputes each participant's angle from its current position
/// every step, so the spontaneous velocity always points at the exit.
/// `Frozen` keeps the initial angles for the whole horizon, which is the
/// convention under which the two-participant closed forms hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleMode {
    Reaimed,
    Frozen,
}

/// A recovered multiplier set for one step.
#[derive(Debug, Clone)]
pub struct EtaRecovery {
    /// Multipliers on the active pairs; absent pairs are zero.
    pub eta: BTreeMap<(usize, usize), f64>,
    /// Euclidean residual of the velocity decomposition.
    pub residual: f64,
    /// Set when the active gradient system was rank-deficient and the
    /// minimal-norm solution was taken.
    pub ill_conditioned: bool,
}

/// First touch of a pair of participants.
#[derive(Debug, Clone)]
pub struct ContactEvent {
    /// Pair `(i, j)` with `i < j`, zero-based.
    pub pair: (usize, usize),
    /// First grid time at which the pair separation is within [`CONTACT_TOL`].
    pub t_contact: f64,
    /// Direction angle of `x_i - x_j` at the contact time.
    pub theta_contact: f64,
    /// Next contact time of any other pair, or `T` when none follows.
    pub next_change: f64,
    /// Previous contact time of any other pair, or `0` when none precedes.
    pub prev_change: f64,
}

/// A simulated motion on a uniform grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub controls: ControlProfile,
    pub angle_mode: AngleMode,
    /// Grid times `t_k = k*h`, `k = 0..=N`.
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    /// `multipliers[k]` covers the step from `t_k` to `t_{k+1}`; length `N`.
    pub multipliers: Vec<BTreeMap<(usize, usize), f64>>,
    /// Velocity-decomposition residual per step.
    pub residuals: Vec<f64>,
    pub events: Vec<ContactEvent>,
}

impl Trajectory {
    pub fn step_size(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn terminal(&self) -> &Configuration {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Multipliers at the final time: those of the last step.
    pub fn eta_at_terminal(&self) -> &BTreeMap<(usize, usize), f64> {
        self.multipliers.last().expect("trajectory has at least one step")
    }

    /// Write the trajectory as CSV with header
    /// `t,x1_1,x1_2,...,xn_1,xn_2,eta_1_2,...`.
    ///
    /// Row `k` carries the multipliers of the step that produced state `k`
    /// (row 0 carries zeros). Floats are printed in shortest round-trip
    /// form.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let n = self.scenario.n();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}_1,x{i}_2"));
        }
        for (i, j) in pairs(n) {
            header.push_str(&format!(",eta_{}_{}", i + 1, j + 1));
        }
        writeln!(out, "{header}")?;
        for (k, state) in self.states.iter().enumerate() {
            let mut row = format!("{}", self.times[k]);
            for c in state.coords.iter() {
                row.push_str(&format!(",{c}"));
            }
            for (i, j) in pairs(n) {
                let eta = if k == 0 {
                    0.0
                } else {
                    *self.multipliers[k - 1].get(&(i, j)).unwrap_or(&0.0)
                };
                row.push_str(&format!(",{eta}"));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Project a configuration onto the nonoverlap set by cyclic symmetric
/// pairwise corrections: every violated pair is pushed apart along its
/// center line by half the overlap each, repeated until no pair is violated
/// by more than `tol`. For a single violated pair this is the exact
/// Euclidean projection.
pub fn project_feasible(
    point: &Configuration,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Configuration> {
    let mut out = point.clone();
    project_feasible_in_place(&mut out, radius, tol, max_iter)?;
    Ok(out)
}

fn project_feasible_in_place(
    cfg: &mut Configuration,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let n = cfg.n();
    for _ in 0..max_iter {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = cfg.position(j) - cfg.position(i);
                let dist = d.norm();
                let violation = 2.0 * radius - dist;
                if violation > tol {
                    if dist == 0.0 {
                        return Err(Error::DegenerateProjection { i, j });
                    }
                    let e = d / dist;
                    let half = violation / 2.0;
                    cfg.set_position(i, cfg.position(i) - half * e);
                    cfg.set_position(j, cfg.position(j) + half * e);
                    worst = worst.max(violation);
                }
            }
        }
        if worst <= tol {
            return Ok(());
        }
    }
    let achieved = -model::min_signed_distance(cfg, radius);
    if achieved <= tol {
        return Ok(());
    }
    Err(Error::ProjectionIterationLimit { max_iter, violation: achieved })
}

fn angles_at(cfg: &Configuration, mode: AngleMode, initial: &[f64]) -> Result<Vec<f64>> {
    match mode {
        AngleMode::Frozen => Ok(initial.to_vec()),
        AngleMode::Reaimed => (0..cfg.n()).map(|i| direction_angle(cfg.position(i))).collect(),
    }
}

/// One catching-up step: explicit Euler drift by `-h*f`, then projection.
///
/// When no constraint activates this is exactly the Euler step.
pub fn catching_up_step(
    scenario: &Scenario,
    x: &Configuration,
    a: &ControlProfile,
    h: f64,
    mode: AngleMode,
) -> Result<Configuration> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let speeds = scenario.speeds();
    let initial = scenario.initial_angles()?;
    let angles = angles_at(x, mode, &initial)?;
    let f = perturbation(a, &speeds, &angles);
    let mut next = Configuration { coords: &x.coords - h * f };
    project_feasible_in_place(&mut next, scenario.disk_radius, PROJECTION_TOL, PROJECTION_MAX_ITER)?;
    Ok(next)
}

fn check_controls(scenario: &Scenario, a: &ControlProfile) -> Result<()> {
    if a.0.len() != scenario.n() {
        return Err(Error::InvalidArgument(format!(
            "expected {} controls, got {}",
            scenario.n(),
            a.0.len()
        )));
    }
    if !a.within_bounds(scenario.control_bounds) {
        return Err(Error::InvalidArgument(format!(
            "controls outside bounds [{}, {}]",
            scenario.control_bounds[0], scenario.control_bounds[1]
        )));
    }
    Ok(())
}

/// Integrate the sweeping dynamics on a uniform grid of `steps` steps and
/// recover multipliers and contact events along the way.
pub fn simulate(
    scenario: &Scenario,
    a: &ControlProfile,
    steps: usize,
    mode: AngleMode,
) -> Result<Trajectory> {
    scenario.validate()?;
    check_controls(scenario, a)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let h = scenario.horizon / steps as f64;
    let speeds = scenario.speeds();
    let initial_angles = scenario.initial_angles()?;
    let radius = scenario.disk_radius;

    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut multipliers = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    let mut first_contact: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();

    let mut x = scenario.initial_configuration();
    record_contacts(&x, radius, 0.0, &mut first_contact)?;
    states.push(x.clone());
    times.push(0.0);

    for k in 0..steps {
        let angles = angles_at(&x, mode, &initial_angles)?;
        let f = perturbation(a, &speeds, &angles);
        let mut next = Configuration { coords: &x.coords - h * &f };
        project_feasible_in_place(&mut next, radius, PROJECTION_TOL, PROJECTION_MAX_ITER)?;

        let recovery = decompose_step(&x, &next, &f, h, radius)?;
        multipliers.push(recovery.eta);
        residuals.push(recovery.residual);

        let t_next = (k + 1) as f64 * h;
        record_contacts(&next, radius, t_next, &mut first_contact)?;
        states.push(next.clone());
        times.push(t_next);
        x = next;
    }

    let events = build_events(&first_contact, scenario.horizon);
    Ok(Trajectory {
        scenario: scenario.clone(),
        controls: a.clone(),
        angle_mode: mode,
        times,
        states,
        multipliers,
        residuals,
        events,
    })
}

/// Terminal state only; used by the brute-force sweep where storing full
/// trajectories would dominate the cost.
pub fn simulate_terminal(
    scenario: &Scenario,
    a: &ControlProfile,
    steps: usize,
    mode: AngleMode,
) -> Result<Configuration> {
    check_controls(scenario, a)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let h = scenario.horizon / steps as f64;
    let speeds = scenario.speeds();
    let initial_angles = scenario.initial_angles()?;
    let radius = scenario.disk_radius;
    let mut x = scenario.initial_configuration();
    let frozen_f = match mode {
        AngleMode::Frozen => Some(perturbation(a, &speeds, &initial_angles)),
        AngleMode::Reaimed => None,
    };
    let mut scratch = DVector::zeros(2 * scenario.n());
    for _ in 0..steps {
        match &frozen_f {
            Some(f) => x.coords.axpy(-h, f, 1.0),
            None => {
                let angles = angles_at(&x, mode, &initial_angles)?;
                scratch.copy_from(&perturbation(a, &speeds, &angles));
                x.coords.axpy(-h, &scratch, 1.0);
            }
        }
        project_feasible_in_place(&mut x, radius, PROJECTION_TOL, PROJECTION_MAX_ITER)?;
    }
    Ok(x)
}

fn record_contacts(
    cfg: &Configuration,
    radius: f64,
    t: f64,
    first_contact: &mut BTreeMap<(usize, usize), (f64, f64)>,
) -> Result<()> {
    for (i, j) in pairs(cfg.n()) {
        if first_contact.contains_key(&(i, j)) {
            continue;
        }
        let d = (cfg.position(i) - cfg.position(j)).norm() - 2.0 * radius;
        if d <= CONTACT_TOL {
            let theta = direction_angle(cfg.position(i) - cfg.position(j))?;
            first_contact.insert((i, j), (t, theta));
        }
    }
    Ok(())
}

fn build_events(
    first_contact: &BTreeMap<(usize, usize), (f64, f64)>,
    horizon: f64,
) -> Vec<ContactEvent> {
    let mut events: Vec<ContactEvent> = first_contact
        .iter()
        .map(|(&pair, &(t, theta))| {
            let next_change = first_contact
                .values()
                .map(|v| v.0)
                .filter(|&t2| t2 > t)
                .fold(horizon, f64::min);
            let prev_change = first_contact
                .values()
                .map(|v| v.0)
                .filter(|&t2| t2 < t)
                .fold(0.0, f64::max);
            ContactEvent { pair, t_contact: t, theta_contact: theta, next_change, prev_change }
        })
        .collect();
    events.sort_by(|a, b| a.t_contact.total_cmp(&b.t_contact));
    events
}

/// Recover multipliers for the step `k -> k+1` of a trajectory.
///
/// The active set consists of the pairs in contact at the state the step
/// produces; inactive pairs get a zero multiplier, which keeps the
/// complementarity implication `D_ij > tol  =>  η_ij = 0` structural.
pub fn recover_eta(traj: &Trajectory, k: usize) -> Result<EtaRecovery> {
    let steps = traj.multipliers.len();
    if k >= steps {
        return Err(Error::IndexOutOfRange { index: k, count: steps });
    }
    let h = traj.step_size();
    let speeds = traj.scenario.speeds();
    let initial_angles = traj.scenario.initial_angles()?;
    let angles = angles_at(&traj.states[k], traj.angle_mode, &initial_angles)?;
    let f = perturbation(&traj.controls, &speeds, &angles);
    decompose_step(&traj.states[k], &traj.states[k + 1], &f, h, traj.scenario.disk_radius)
}

fn decompose_step(
    x: &Configuration,
    next: &Configuration,
    f: &DVector<f64>,
    h: f64,
    radius: f64,
) -> Result<EtaRecovery> {
    // target: dx/dt + f, which should equal Σ η_ij ∇D_ij over active pairs
    let target = (&next.coords - &x.coords) / h + f;
    let active: Vec<(usize, usize)> = pairs(x.n())
        .filter(|&(i, j)| (next.position(i) - next.position(j)).norm() - 2.0 * radius <= CONTACT_TOL)
        .collect();
    if active.is_empty() {
        return Ok(EtaRecovery { eta: BTreeMap::new(), residual: target.norm(), ill_conditioned: false });
    }
    let dim = 2 * x.n();
    let mut a_mat = DMatrix::zeros(dim, active.len());
    for (col, &(i, j)) in active.iter().enumerate() {
        let g = model::distance_gradient(x, i, j)?;
        a_mat.set_column(col, &g);
    }
    let (solution, residual, ill_conditioned) = nnls(&a_mat, &target);
    let mut eta = BTreeMap::new();
    for (col, &pair) in active.iter().enumerate() {
        eta.insert(pair, solution[col]);
    }
    Ok(EtaRecovery { eta, residual, ill_conditioned })
}

/// Lawson–Hanson nonnegative least squares: minimize `||A x - b||` subject
/// to `x >= 0`. Returns the solution, the residual norm, and a flag set
/// when a passive subsystem was rank-deficient (the minimal-norm inner
/// solution is used in that case).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64, bool) {
    let ncols = a.ncols();
    let mut x = DVector::zeros(ncols);
    let mut passive = vec![false; ncols];
    let mut ill_conditioned = false;
    let tol = 1e-12 * a.amax().max(1.0);

    for _ in 0..3 * ncols.max(1) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..ncols)
            .filter(|&i| !passive[i])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(idx) = candidate else { break };
        if w[idx] <= tol {
            break;
        }
        passive[idx] = true;

        loop {
            let (z, rank_def) = solve_passive(a, b, &passive);
            ill_conditioned |= rank_def;
            let negative: Vec<usize> =
                (0..ncols).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if negative.is_empty() {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &i in &negative {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + alpha * (&z - &x);
            for i in 0..ncols {
                if passive[i] && x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        if !passive.iter().any(|&p| p) {
            break;
        }
    }
    let residual = (b - a * &x).norm();
    (x, residual, ill_conditioned)
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> (DVector<f64>, bool) {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&i| passive[i]).collect();
    let sub = a.select_columns(cols.iter());
    let svd = sub.svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let rank_tol = max_sv * 1e-12;
    let rank_def = svd.singular_values.iter().any(|&s| s <= rank_tol);
    let z_sub = svd.solve(b, rank_tol).unwrap_or_else(|_| DVector::zeros(cols.len()));
    let mut z = DVector::zeros(a.ncols());
    for (k, &i) in cols.iter().enumerate() {
        z[i] = z_sub[k];
    }
    (z, rank_def)
}
