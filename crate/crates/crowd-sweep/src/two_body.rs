//! Closed-form optimal control for two participants.
//!
//! With constant throttles and one velocity switch per participant at the
//! contact time, the motion is piecewise linear and the cost is a quadratic
//! in the controls. The solver enumerates the three admissible regimes —
//! no contact, contact with a positive multiplier, and contact from the
//! start with a vanishing multiplier — minimizes each quadratic over the
//! control bounds, and returns the cheapest feasible candidate.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cost, direction_angle, Configuration, ControlProfile, Scenario};

/// Below this slack two disks count as initially touching.
const GAP_TOL: f64 = 1e-9;
/// Collinearity threshold for sine magnitudes.
const SIN_TOL: f64 = 1e-9;
/// Post-contact velocities must agree this tightly.
const CONSISTENCY_TOL: f64 = 1e-9;

/// Which regime the optimum belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    NoContact,
    ContactPositiveEta,
    InitialContactZeroEta,
}

/// One interval of the piecewise-linear motion: positions at `t_start` and
/// constant velocities, one row per participant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
}

impl Segment {
    pub fn eval(&self, t: f64) -> Configuration {
        let dt = t - self.t_start;
        let positions: Vec<Vector2<f64>> = self
            .positions
            .iter()
            .zip(&self.velocities)
            .map(|(p, v)| Vector2::new(p[0] + dt * v[0], p[1] + dt * v[1]))
            .collect();
        Configuration::from_positions(&positions)
    }
}

/// Solution of the two-participant problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoBodySolution {
    pub branch: Branch,
    /// Optimal constant controls `[a1, a2]`.
    pub a: [f64; 2],
    /// Contact time; `None` when the disks never touch.
    pub t12: Option<f64>,
    /// Contact multiplier (zero outside the positive-eta branch).
    pub eta12: f64,
    /// Direction angle of the center line from participant 1 toward 2 at
    /// the initial time, radians in `[0, 2π)`.
    pub theta21: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub segments: Vec<Segment>,
}

impl TwoBodySolution {
    pub fn eval(&self, t: f64) -> Configuration {
        let seg = self
            .segments
            .iter()
            .rfind(|s| t >= s.t_start)
            .unwrap_or(&self.segments[0]);
        seg.eval(t)
    }

    pub fn terminal(&self, horizon: f64) -> Configuration {
        self.eval(horizon)
    }

    pub fn from_json(text: &str) -> Result<TwoBodySolution> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A regime candidate evaluated during optimization.
#[derive(Debug, Clone)]
pub struct BranchCandidate {
    pub branch: Branch,
    pub a1: f64,
    pub a2: f64,
    pub eta12: f64,
    pub t12: Option<f64>,
    pub j: f64,
    pub feasible: bool,
    /// Reason a candidate was rejected, when it was.
    pub note: Option<String>,
}

/// Unit vector from participant 1's center toward participant 2's center.
pub fn contact_direction(x1_0: Vector2<f64>, x2_0: Vector2<f64>) -> Result<Vector2<f64>> {
    let d = x2_0 - x1_0;
    let norm = d.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateGradient { i: 0, j: 1 });
    }
    Ok(d / norm)
}

/// Contact multiplier from the post-contact common-velocity system:
/// `η = 0.5*sqrt(s1²a1² + s2²a2² - 2 s1 s2 a1 a2 cos(θ1-θ2))`.
pub fn eta_from_controls(
    s1: f64,
    a1: f64,
    s2: f64,
    a2: f64,
    th1: f64,
    th2: f64,
) -> Result<f64> {
    let radicand =
        (s1 * a1).powi(2) + (s2 * a2).powi(2) - 2.0 * s1 * s2 * a1 * a2 * (th1 - th2).cos();
    if radicand < -1e-12 {
        return Err(Error::NumericDomain(format!(
            "negative radicand {radicand:e} in the multiplier formula"
        )));
    }
    Ok(0.5 * radicand.max(0.0).sqrt())
}

/// Ratio `ρ = a2/a1` that makes the post-contact common-velocity system
/// consistent.
///
/// Eliminating the multiplier from the two component equations gives
/// `ρ = s1 sin(θ1-θ21) / (s2 sin(θ2-θ21))`. When the contact line is
/// parallel to both spontaneous directions that elimination degenerates and
/// the ratio comes from the dual stationarity relation `s2 a1 = s1 a2`.
pub fn control_ratio(s1: f64, s2: f64, th1: f64, th2: f64, th21: f64) -> Result<f64> {
    let sin1 = (th1 - th21).sin();
    let sin2 = (th2 - th21).sin();
    let parallel1 = sin1.abs() <= SIN_TOL;
    let parallel2 = sin2.abs() <= SIN_TOL;
    match (parallel1, parallel2) {
        (true, true) => Ok(s2 / s1),
        (false, false) => Ok((s1 * sin1) / (s2 * sin2)),
        _ => Err(Error::NoRatio {
            reason: format!(
                "contact line is parallel to exactly one spontaneous direction \
                 (sin offsets {sin1:.3e}, {sin2:.3e})"
            ),
        }),
    }
}

/// Contact time from `t12 * η12 = (||x2(0)-x1(0)|| - 2R)/2`.
///
/// Returns `0` for initially touching disks and `+inf` when the multiplier
/// vanishes while the disks are separated (no contact is ever forced).
pub fn contact_time(x1_0: Vector2<f64>, x2_0: Vector2<f64>, radius: f64, eta12: f64) -> f64 {
    let gap = (x2_0 - x1_0).norm() - 2.0 * radius;
    if gap <= GAP_TOL {
        return 0.0;
    }
    if eta12 <= 0.0 {
        return f64::INFINITY;
    }
    gap / (2.0 * eta12)
}

/// Piecewise-linear motion for given controls and contact data.
///
/// Before `t12` each participant moves with its spontaneous velocity
/// `-s_i a_i (cos θ_i(0), sin θ_i(0))`; from `t12` on, participant 1 adds
/// `-η12 e21` and participant 2 adds `+η12 e21`. The inputs must make the
/// two post-contact velocities coincide.
pub fn analytic_trajectory(
    scenario: &Scenario,
    a1: f64,
    a2: f64,
    t12: Option<f64>,
    eta12: f64,
    e21: Vector2<f64>,
) -> Result<Vec<Segment>> {
    let horizon = scenario.horizon;
    let p1 = Vector2::new(scenario.participants[0].x0[0], scenario.participants[0].x0[1]);
    let p2 = Vector2::new(scenario.participants[1].x0[0], scenario.participants[1].x0[1]);
    let s1 = scenario.participants[0].speed;
    let s2 = scenario.participants[1].speed;
    let dir1 = p1 / p1.norm();
    let dir2 = p2 / p2.norm();
    let v1 = -s1 * a1 * dir1;
    let v2 = -s2 * a2 * dir2;

    let seg = |t0: f64, t1: f64, q1: Vector2<f64>, q2: Vector2<f64>, w1: Vector2<f64>, w2: Vector2<f64>| Segment {
        t_start: t0,
        t_end: t1,
        positions: vec![[q1.x, q1.y], [q2.x, q2.y]],
        velocities: vec![[w1.x, w1.y], [w2.x, w2.y]],
    };

    let Some(tc) = t12.filter(|t| *t < horizon) else {
        // free motion over the whole horizon
        if eta12 != 0.0 {
            return Err(Error::InconsistentSegments { mismatch: eta12.abs() });
        }
        return Ok(vec![seg(0.0, horizon, p1, p2, v1, v2)]);
    };

    let w1 = v1 - eta12 * e21;
    let w2 = v2 + eta12 * e21;
    let mismatch = (w1 - w2).norm();
    if mismatch > CONSISTENCY_TOL {
        return Err(Error::InconsistentSegments { mismatch });
    }
    let w = 0.5 * (w1 + w2);
    let q1 = p1 + tc * v1;
    let q2 = p2 + tc * v2;
    let sep = ((q2 - q1).norm() - 2.0 * scenario.disk_radius).abs();
    if sep > 1e-6 {
        return Err(Error::InconsistentSegments { mismatch: sep });
    }
    if tc <= 0.0 {
        return Ok(vec![seg(0.0, horizon, p1, p2, w, w)]);
    }
    Ok(vec![seg(0.0, tc, p1, p2, v1, v2), seg(tc, horizon, q1, q2, w, w)])
}

struct Geometry {
    p1: Vector2<f64>,
    p2: Vector2<f64>,
    s1: f64,
    s2: f64,
    dir1: Vector2<f64>,
    dir2: Vector2<f64>,
    e21: Vector2<f64>,
    gap: f64,
    th1: f64,
    th2: f64,
    th21: f64,
}

impl Geometry {
    fn of(scenario: &Scenario) -> Result<Geometry> {
        let p1 = Vector2::new(scenario.participants[0].x0[0], scenario.participants[0].x0[1]);
        let p2 = Vector2::new(scenario.participants[1].x0[0], scenario.participants[1].x0[1]);
        let e21 = contact_direction(p1, p2)?;
        Ok(Geometry {
            p1,
            p2,
            s1: scenario.participants[0].speed,
            s2: scenario.participants[1].speed,
            dir1: p1 / p1.norm(),
            dir2: p2 / p2.norm(),
            e21,
            gap: (p2 - p1).norm() - 2.0 * scenario.disk_radius,
            th1: direction_angle(p1)?,
            th2: direction_angle(p2)?,
            th21: direction_angle(e21)?,
        })
    }

    fn same_direction(&self) -> bool {
        (self.dir1 - self.dir2).norm() <= SIN_TOL
    }
}

/// Minimize `A q² + B q + C` over `[lo, hi]`; returns the argmin.
fn clamp_quadratic_min(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(a > 0.0);
    (-b / (2.0 * a)).clamp(lo, hi)
}

fn free_candidate(scenario: &Scenario, geo: &Geometry) -> BranchCandidate {
    let horizon = scenario.horizon;
    let [lo, hi] = scenario.control_bounds;
    // per-participant quadratic: 0.5||x0 - T s a dir||^2 + (T/2) a^2
    let pick = |s: f64, p: Vector2<f64>| {
        let ell = p.norm();
        let quad = 0.5 * (horizon * horizon * s * s + horizon);
        let lin = -horizon * s * ell;
        clamp_quadratic_min(quad, lin, lo, hi)
    };
    let a1 = pick(geo.s1, geo.p1);
    let a2 = pick(geo.s2, geo.p2);
    let v1 = -geo.s1 * a1 * geo.dir1;
    let v2 = -geo.s2 * a2 * geo.dir2;
    // closest approach of the free paths over [0, T]
    let rel0 = geo.p2 - geo.p1;
    let relv = v2 - v1;
    let t_star = if relv.norm_squared() > 0.0 {
        (-rel0.dot(&relv) / relv.norm_squared()).clamp(0.0, horizon)
    } else {
        0.0
    };
    let min_sep = (rel0 + t_star * relv).norm();
    let feasible = min_sep >= 2.0 * scenario.disk_radius - GAP_TOL;
    let terminal = Configuration::from_positions(&[geo.p1 + horizon * v1, geo.p2 + horizon * v2]);
    let j = cost(&terminal, &ControlProfile(vec![a1, a2]), horizon);
    BranchCandidate {
        branch: Branch::NoContact,
        a1,
        a2,
        eta12: 0.0,
        t12: None,
        j,
        feasible,
        note: (!feasible).then(|| format!("free paths overlap (closest approach {min_sep:.4})")),
    }
}

fn contact_candidate(scenario: &Scenario, geo: &Geometry) -> BranchCandidate {
    let horizon = scenario.horizon;
    let [lo, hi] = scenario.control_bounds;
    let reject = |note: String| BranchCandidate {
        branch: Branch::ContactPositiveEta,
        a1: f64::NAN,
        a2: f64::NAN,
        eta12: 0.0,
        t12: None,
        j: f64::INFINITY,
        feasible: false,
        note: Some(note),
    };

    let rho = match control_ratio(geo.s1, geo.s2, geo.th1, geo.th2, geo.th21) {
        Ok(r) => r,
        Err(e) => return reject(e.to_string()),
    };
    if rho <= 0.0 {
        return reject(format!("control ratio {rho:.4} admits no nonnegative controls"));
    }
    // multiplier per unit a1, from the common-velocity system projected on e21
    let kappa = 0.5 * (geo.s2 * rho * geo.dir2.dot(&geo.e21) - geo.s1 * geo.dir1.dot(&geo.e21));
    if kappa <= SIN_TOL {
        return reject(format!("multiplier coefficient {kappa:.4e} is not positive"));
    }

    // bounds for a1 from both controls, plus contact before the horizon
    let mut a_lo = lo.max(lo / rho);
    let a_hi = hi.min(hi / rho);
    if geo.gap > GAP_TOL {
        a_lo = a_lo.max(geo.gap / (2.0 * kappa * horizon) * (1.0 + 1e-12));
    }
    if a_lo > a_hi {
        return reject("no admissible control reaches contact within the horizon".into());
    }

    // terminal states are affine in a1: x_i(T) = c_i + m a1
    let tau = if geo.gap > GAP_TOL { geo.gap / (2.0 * kappa) } else { 0.0 }; // = t12 * a1
    let u1 = -geo.s1 * geo.dir1;
    let u2 = -geo.s2 * rho * geo.dir2;
    let v_post = 0.5 * ((u1 - kappa * geo.e21) + (u2 + kappa * geo.e21));
    let c1 = geo.p1 + tau * (u1 - v_post);
    let c2 = geo.p2 + tau * (u2 - v_post);
    let m = horizon * v_post;

    let quad = m.norm_squared() + 0.5 * horizon * (1.0 + rho * rho);
    let lin = (c1 + c2).dot(&m);
    let a1 = clamp_quadratic_min(quad, lin, a_lo, a_hi);
    if a1 <= 0.0 {
        return reject("optimal control degenerates to zero; multiplier would vanish".into());
    }
    let a2 = rho * a1;
    let eta12 = kappa * a1;
    let t12 = if geo.gap > GAP_TOL { tau / a1 } else { 0.0 };
    let terminal = Configuration::from_positions(&[c1 + a1 * m, c2 + a1 * m]);
    let j = cost(&terminal, &ControlProfile(vec![a1, a2]), horizon);
    BranchCandidate {
        branch: Branch::ContactPositiveEta,
        a1,
        a2,
        eta12,
        t12: Some(t12),
        j,
        feasible: true,
        note: None,
    }
}

fn initial_contact_candidate(scenario: &Scenario, geo: &Geometry) -> Option<BranchCandidate> {
    if geo.gap.abs() > GAP_TOL {
        return None;
    }
    let horizon = scenario.horizon;
    let [lo, hi] = scenario.control_bounds;
    if geo.same_direction() {
        // zero multiplier with contact requires matched speeds s1 a1 = s2 a2;
        // both participants then translate in lockstep
        let rho = geo.s1 / geo.s2; // a2 = rho * a1
        let a_lo = lo.max(lo / rho);
        let a_hi = hi.min(hi / rho);
        if a_lo > a_hi {
            return Some(BranchCandidate {
                branch: Branch::InitialContactZeroEta,
                a1: f64::NAN,
                a2: f64::NAN,
                eta12: 0.0,
                t12: Some(0.0),
                j: f64::INFINITY,
                feasible: false,
                note: Some("matched-speed ray misses the control bounds".into()),
            });
        }
        let u = -geo.s1 * geo.dir1; // common velocity per unit a1
        let m = horizon * u;
        let quad = m.norm_squared() + 0.5 * horizon * (1.0 + rho * rho);
        let lin = (geo.p1 + geo.p2).dot(&m);
        let a1 = clamp_quadratic_min(quad, lin, a_lo, a_hi);
        let a2 = rho * a1;
        let terminal =
            Configuration::from_positions(&[geo.p1 + a1 * m, geo.p2 + a1 * m]);
        let j = cost(&terminal, &ControlProfile(vec![a1, a2]), horizon);
        Some(BranchCandidate {
            branch: Branch::InitialContactZeroEta,
            a1,
            a2,
            eta12: 0.0,
            t12: Some(0.0),
            j,
            feasible: true,
            note: None,
        })
    } else {
        // different directions force both controls to zero in this regime
        let feasible = lo == 0.0;
        let terminal = Configuration::from_positions(&[geo.p1, geo.p2]);
        let j = cost(&terminal, &ControlProfile(vec![0.0, 0.0]), horizon);
        Some(BranchCandidate {
            branch: Branch::InitialContactZeroEta,
            a1: 0.0,
            a2: 0.0,
            eta12: 0.0,
            t12: Some(0.0),
            j,
            feasible,
            note: (!feasible).then(|| "zero control outside the bounds".into()),
        })
    }
}

/// Evaluate all three regimes. Infeasible candidates are kept with their
/// rejection note, so callers can inspect the comparison the solver made.
pub fn enumerate_branches(scenario: &Scenario) -> Result<Vec<BranchCandidate>> {
    scenario.validate()?;
    if scenario.n() != 2 {
        return Err(Error::NotTwoBody(scenario.n()));
    }
    let geo = Geometry::of(scenario)?;
    let mut out = vec![free_candidate(scenario, &geo), contact_candidate(scenario, &geo)];
    if let Some(c) = initial_contact_candidate(scenario, &geo) {
        out.push(c);
    }
    Ok(out)
}

/// Solve the two-participant problem: cheapest feasible regime.
pub fn optimize(scenario: &Scenario) -> Result<TwoBodySolution> {
    let candidates = enumerate_branches(scenario)?;
    let geo = Geometry::of(scenario)?;
    let best = candidates
        .iter()
        .filter(|c| c.feasible)
        .min_by(|a, b| a.j.total_cmp(&b.j))
        .ok_or(Error::NoFeasibleBranch)?;

    let segments = analytic_trajectory(scenario, best.a1, best.a2, best.t12, best.eta12, geo.e21)?;
    let solution = TwoBodySolution {
        branch: best.branch,
        a: [best.a1, best.a2],
        t12: best.t12,
        eta12: best.eta12,
        theta21: geo.th21,
        j: best.j,
        segments,
    };
    let recomputed = cost(
        &solution.terminal(scenario.horizon),
        &ControlProfile(vec![best.a1, best.a2]),
        scenario.horizon,
    );
    debug_assert!(
        (recomputed - best.j).abs() <= 1e-9 * best.j.max(1.0),
        "cost mismatch: {recomputed} vs {}",
        best.j
    );
    Ok(solution)
}
