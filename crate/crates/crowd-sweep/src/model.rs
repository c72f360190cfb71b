//! Problem instances and constraint geometry for the planar crowd motion
//! model.
//!
//! `n` participants are rigid disks of common radius `R` on the plane. A
//! configuration stacks the disk centers into a single vector of length
//! `2n`. The feasible set consists of configurations in which no two disks
//! overlap, expressed through the signed distances
//! `D_ij(x) = ||x_i - x_j|| - 2R`. Each participant wants to reach the exit
//! at the origin; a throttle control `a_i` scales its spontaneous speed.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility slack used when validating initial configurations.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// One participant: initial disk center and spontaneous speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantSpec {
    /// Initial center position in meters. Must be nonzero so the direction
    /// toward the exit at the origin is defined.
    pub x0: [f64; 2],
    /// Spontaneous speed in meters/second (>= 0).
    pub speed: f64,
}

/// A problem instance.
///
/// Serialized field names follow the scenario file schema: `T`, `R`,
/// `participants`, `control_bounds`, `shift_magnitude`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Process horizon in seconds.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Disk radius in meters.
    #[serde(rename = "R")]
    pub disk_radius: f64,
    /// Participants, ordered; length is the crowd size `n >= 2`.
    pub participants: Vec<ParticipantSpec>,
    /// Admissible throttle interval `[a_min, a_max]` with `0 <= a_min < a_max`.
    pub control_bounds: [f64; 2],
    /// Magnitude `r` of the constant set shift; dynamically inert because
    /// equal-block shifts cancel inside every pairwise distance.
    #[serde(default = "default_shift")]
    pub shift_magnitude: f64,
}

fn default_shift() -> f64 {
    1.0
}

impl Scenario {
    /// Number of participants.
    pub fn n(&self) -> usize {
        self.participants.len()
    }

    /// Stacked initial configuration.
    pub fn initial_configuration(&self) -> Configuration {
        let mut coords = DVector::zeros(2 * self.n());
        for (i, p) in self.participants.iter().enumerate() {
            coords[2 * i] = p.x0[0];
            coords[2 * i + 1] = p.x0[1];
        }
        Configuration { coords }
    }

    /// Spontaneous speeds of all participants.
    pub fn speeds(&self) -> Vec<f64> {
        self.participants.iter().map(|p| p.speed).collect()
    }

    /// Direction angles of all initial positions.
    pub fn initial_angles(&self) -> Result<Vec<f64>> {
        self.participants
            .iter()
            .map(|p| direction_angle(Vector2::new(p.x0[0], p.x0[1])))
            .collect()
    }

    /// The constant shift vector with equal blocks `(r/sqrt(2n), r/sqrt(2n))`.
    ///
    /// Shifting every participant by the same planar vector leaves every
    /// pairwise distance unchanged, so this vector never influences the
    /// dynamics; it is kept for diagnostics.
    pub fn shift_vector(&self) -> DVector<f64> {
        let c = self.shift_magnitude / (2.0 * self.n() as f64).sqrt();
        DVector::from_element(2 * self.n(), c)
    }

    /// Check all scenario invariants, including initial feasibility.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidScenario("horizon T must be positive".into()));
        }
        if !(self.disk_radius > 0.0) {
            return Err(Error::InvalidScenario("disk radius R must be positive".into()));
        }
        if self.n() < 2 {
            return Err(Error::InvalidScenario("at least two participants required".into()));
        }
        let [lo, hi] = self.control_bounds;
        if !(0.0 <= lo && lo < hi) {
            return Err(Error::InvalidScenario(
                "control bounds must satisfy 0 <= a_min < a_max".into(),
            ));
        }
        if !(self.shift_magnitude > 0.0) {
            return Err(Error::InvalidScenario("shift magnitude must be positive".into()));
        }
        for (i, p) in self.participants.iter().enumerate() {
            if !(p.speed >= 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "participant {i} has negative speed"
                )));
            }
            if p.x0[0] == 0.0 && p.x0[1] == 0.0 {
                return Err(Error::InvalidScenario(format!(
                    "participant {i} starts at the exit; its direction is undefined"
                )));
            }
        }
        let cfg = self.initial_configuration();
        if !is_feasible(&cfg, self.disk_radius, FEASIBILITY_TOL) {
            return Err(Error::InvalidScenario(
                "initial configuration has overlapping disks".into(),
            ));
        }
        Ok(())
    }

    /// The same scenario rotated about the origin by `phi` radians.
    pub fn rotated(&self, phi: f64) -> Scenario {
        let (s, c) = phi.sin_cos();
        let mut out = self.clone();
        for p in &mut out.participants {
            let [x, y] = p.x0;
            p.x0 = [c * x - s * y, s * x + c * y];
        }
        out
    }

    /// Parse a scenario from JSON and validate it.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Stacked planar positions of all `n` disks; participant `i` (0-based)
/// occupies coordinates `2i` and `2i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub coords: DVector<f64>,
}

impl Configuration {
    pub fn from_positions(positions: &[Vector2<f64>]) -> Configuration {
        let mut coords = DVector::zeros(2 * positions.len());
        for (i, p) in positions.iter().enumerate() {
            coords[2 * i] = p.x;
            coords[2 * i + 1] = p.y;
        }
        Configuration { coords }
    }

    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn position(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.coords[2 * i], self.coords[2 * i + 1])
    }

    pub fn set_position(&mut self, i: usize, p: Vector2<f64>) {
        self.coords[2 * i] = p.x;
        self.coords[2 * i + 1] = p.y;
    }
}

/// Constant throttle vector, one entry per participant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProfile(pub Vec<f64>);

impl ControlProfile {
    pub fn uniform(n: usize, a: f64) -> ControlProfile {
        ControlProfile(vec![a; n])
    }

    pub fn within_bounds(&self, bounds: [f64; 2]) -> bool {
        self.0.iter().all(|&a| bounds[0] <= a && a <= bounds[1])
    }
}

/// Gradient and Hessian bounds plus the inverse-triangle constant for the
/// pairwise-disk constraint system.
#[derive(Debug, Clone, Serialize)]
pub struct ProxConstants {
    /// Lower gradient bound; equals sqrt(2) for signed disk distances.
    pub m1: f64,
    /// Upper gradient bound; equals sqrt(2).
    pub m2: f64,
    /// Hessian bound `2/R`.
    pub m3: f64,
    /// Inverse-triangle constant `3*sqrt(2)*n*(3/sin(2*pi/n))^n`.
    /// `None` at `n = 2`, where the formula degenerates (`sin(pi) = 0`)
    /// even though the two-disk set is prox-regular.
    pub beta: Option<f64>,
    /// Prox-regularity radius. Left undefined: the scaling constant that
    /// relates it to `m3 * beta` is not pinned down by the constraint data.
    pub eta_prox: Option<f64>,
}

/// Iterate ordered pairs `(i, j)` with `i < j`.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

fn check_pair(cfg: &Configuration, i: usize, j: usize) -> Result<()> {
    let n = cfg.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, count: n });
    }
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, count: n });
    }
    if i == j {
        return Err(Error::InvalidArgument(format!("pair indices must differ, got ({i}, {j})")));
    }
    Ok(())
}

/// Signed distance `D_ij(x) = ||x_i - x_j|| - 2R` between disks `i` and `j`.
///
/// Nonnegative exactly when the disks do not overlap; symmetric in `(i, j)`.
pub fn signed_distance(cfg: &Configuration, radius: f64, i: usize, j: usize) -> Result<f64> {
    check_pair(cfg, i, j)?;
    Ok((cfg.position(i) - cfg.position(j)).norm() - 2.0 * radius)
}

/// Gradient of `D_ij`: zero except `-e_ij` in slot `i` and `+e_ij` in slot
/// `j`, with `e_ij = (x_j - x_i)/||x_j - x_i||`. Its Euclidean norm is
/// always `sqrt(2)`.
pub fn distance_gradient(cfg: &Configuration, i: usize, j: usize) -> Result<DVector<f64>> {
    check_pair(cfg, i, j)?;
    let d = cfg.position(j) - cfg.position(i);
    let norm = d.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateGradient { i, j });
    }
    let e = d / norm;
    let mut g = DVector::zeros(cfg.coords.len());
    g[2 * i] = -e.x;
    g[2 * i + 1] = -e.y;
    g[2 * j] = e.x;
    g[2 * j + 1] = e.y;
    Ok(g)
}

/// Smallest signed distance over all pairs; `+inf` for fewer than two disks.
pub fn min_signed_distance(cfg: &Configuration, radius: f64) -> f64 {
    pairs(cfg.n())
        .map(|(i, j)| (cfg.position(i) - cfg.position(j)).norm() - 2.0 * radius)
        .fold(f64::INFINITY, f64::min)
}

/// True when every pairwise signed distance is at least `-tol`.
pub fn is_feasible(cfg: &Configuration, radius: f64, tol: f64) -> bool {
    min_signed_distance(cfg, radius) >= -tol
}

/// Direction angle of a position vector, in `[0, 2*pi)`.
///
/// The spontaneous velocity `-s*a*(cos θ, sin θ)` then points from the
/// position toward the exit at the origin.
pub fn direction_angle(position: Vector2<f64>) -> Result<f64> {
    if position.x == 0.0 && position.y == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    let mut theta = position.y.atan2(position.x);
    if theta < 0.0 {
        theta += 2.0 * std::f64::consts::PI;
    }
    Ok(theta)
}

/// Controlled perturbation
/// `f = (s_1 a_1 cos θ_1, s_1 a_1 sin θ_1, ..., s_n a_n cos θ_n, s_n a_n sin θ_n)`.
///
/// The free-motion velocity of the crowd is `-f`.
pub fn perturbation(a: &ControlProfile, speeds: &[f64], angles: &[f64]) -> DVector<f64> {
    assert_eq!(a.0.len(), speeds.len(), "control/speed lengths differ");
    assert_eq!(a.0.len(), angles.len(), "control/angle lengths differ");
    let n = a.0.len();
    let mut f = DVector::zeros(2 * n);
    for i in 0..n {
        let (sin, cos) = angles[i].sin_cos();
        f[2 * i] = speeds[i] * a.0[i] * cos;
        f[2 * i + 1] = speeds[i] * a.0[i] * sin;
    }
    f
}

/// Cost `J = 0.5*||x(T)||^2 + (T/2)*sum a_i^2` for constant controls.
pub fn cost(terminal: &Configuration, a: &ControlProfile, horizon: f64) -> f64 {
    let energy: f64 = a.0.iter().map(|ai| ai * ai).sum();
    0.5 * terminal.coords.norm_squared() + 0.5 * horizon * energy
}

/// Constants entering the prox-regularity diagnostics of the constraint set.
pub fn prox_constants(n: usize, radius: f64) -> ProxConstants {
    let beta = if n >= 3 {
        let n_f = n as f64;
        Some(3.0 * 2.0_f64.sqrt() * n_f * (3.0 / (2.0 * std::f64::consts::PI / n_f).sin()).powi(n as i32))
    } else {
        None
    };
    ProxConstants {
        m1: 2.0_f64.sqrt(),
        m2: 2.0_f64.sqrt(),
        m3: 2.0 / radius,
        beta,
        eta_prox: None,
    }
}
