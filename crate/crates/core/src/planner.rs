//! Virtual-structure references and the cooperative filter bank.
//!
//! The formation center follows a kinematic navigation model driven by
//! piecewise-constant rate schedules. Each vehicle's raw reference is a rigid
//! offset from the center, rotated by the center's heading. The cooperative
//! filters then smooth these references into virtual-leader states.
//!
//! The reference acceleration omits the `ω̇ × p` term. Between schedule
//! breakpoints `ω̇ = 0` and the references are exact; at breakpoints the
//! reference velocity of an offset vehicle jumps.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{coupled_gain, FormationGraph};
use crate::vehicle::{polar_to_cartesian, PolarControls, UavState};
use crate::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("schedule segment ({from}, {to}] is empty or reversed")]
    EmptySegment { from: f64, to: f64 },
    #[error("schedule segments overlap or are unsorted at t = {at}")]
    Overlap { at: f64 },
    #[error("schedule value {value} on ({from}, {to}] is not finite")]
    NonFinite { from: f64, to: f64, value: f64 },
    #[error("formation center speed must be positive, got {0}")]
    Speed(f64),
    #[error("filter gain {name}.{axis} must be positive, got {value}")]
    Gain {
        name: &'static str,
        axis: char,
        value: f64,
    },
}

/// State of the formation center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationCenterState {
    pub position: Vec3,
    pub speed: f64,
    pub path_angle: f64,
    pub heading: f64,
}

impl FormationCenterState {
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            position: Vec3::new(s[0], s[1], s[2]),
            speed: s[3],
            path_angle: s[4],
            heading: s[5],
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..3].copy_from_slice(self.position.as_slice());
        out[3] = self.speed;
        out[4] = self.path_angle;
        out[5] = self.heading;
    }

    /// The same kinematics as a point-mass vehicle state.
    pub fn as_point_mass(&self) -> UavState {
        UavState {
            position: self.position,
            total_speed: self.speed,
            path_angle: self.path_angle,
            course_angle: self.heading,
        }
    }

    pub fn velocity(&self) -> Vec3 {
        self.as_point_mass().velocity()
    }
}

/// One piece of a schedule: `value` on `(from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub value: f64,
}

/// Piecewise-constant signal, zero outside its segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self, PlannerError> {
        let mut last_to = f64::NEG_INFINITY;
        for s in &segments {
            if !s.value.is_finite() {
                return Err(PlannerError::NonFinite {
                    from: s.from,
                    to: s.to,
                    value: s.value,
                });
            }
            if !(s.from < s.to) {
                return Err(PlannerError::EmptySegment {
                    from: s.from,
                    to: s.to,
                });
            }
            if s.from < last_to {
                return Err(PlannerError::Overlap { at: s.from });
            }
            last_to = s.to;
        }
        Ok(Self { segments })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| s.from < t && t <= s.to)
            .map_or(0.0, |s| s.value)
    }

    /// Times at which the value may jump.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().flat_map(|s| [s.from, s.to])
    }
}

/// Scheduled center rates evaluated at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CenterRates {
    /// a_Vc [m/s²]
    pub accel: f64,
    /// a_γc [rad/s]
    pub path_rate: f64,
    /// a_ψc [rad/s]
    pub heading_rate: f64,
}

/// Rate schedules of the formation center.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CenterCommand {
    pub accel: Schedule,
    pub path_rate: Schedule,
    pub heading_rate: Schedule,
}

impl CenterCommand {
    pub fn rates_at(&self, t: f64) -> CenterRates {
        CenterRates {
            accel: self.accel.value_at(t),
            path_rate: self.path_rate.value_at(t),
            heading_rate: self.heading_rate.value_at(t),
        }
    }

    /// Sorted, deduplicated breakpoints of all three schedules.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .accel
            .breakpoints()
            .chain(self.path_rate.breakpoints())
            .chain(self.heading_rate.breakpoints())
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// Time derivative of the center state under constant rates.
pub fn center_derivative(s: &FormationCenterState, rates: &CenterRates) -> [f64; 6] {
    let v = s.velocity();
    [
        v.x,
        v.y,
        v.z,
        rates.accel,
        rates.path_rate,
        rates.heading_rate,
    ]
}

/// `r̈_c`, the analytic derivative of the center velocity.
pub fn center_acceleration(s: &FormationCenterState, rates: &CenterRates) -> Vec3 {
    let u = PolarControls {
        u_v: rates.accel,
        u_gamma: rates.path_rate,
        u_psi: rates.heading_rate,
    };
    polar_to_cartesian(&u, &s.as_point_mass())
}

/// Rigid offsets of every vehicle in the center's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationLayout {
    pub offsets: Vec<Vec3>,
}

impl FormationLayout {
    /// The five-aircraft V: apex `8b` ahead of the center, then alternating
    /// wings stepped back along the diagonal.
    pub fn vshape5(span: f64) -> Self {
        let b = span;
        Self {
            offsets: vec![
                Vec3::new(8.0 * b, 0.0, 0.0),
                Vec3::new(2.0 * b, b, 0.0),
                Vec3::new(0.0, -b, 0.0),
                Vec3::new(-4.0 * b, 2.0 * b, 0.0),
                Vec3::new(-6.0 * b, -b, 0.0),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Local-to-inertial rotation `C_BIᵀ(ψ)` about the down axis.
pub fn local_to_inertial(heading: f64) -> Matrix3<f64> {
    let (s, c) = heading.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Desired trajectory of one virtual leader.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VirtualLeaderRef {
    pub r: Vec3,
    pub r_dot: Vec3,
    pub r_ddot: Vec3,
}

pub fn leader_refs(
    c: &FormationCenterState,
    rates: &CenterRates,
    layout: &FormationLayout,
) -> Vec<VirtualLeaderRef> {
    let rot = local_to_inertial(c.heading);
    let omega = Vec3::new(0.0, 0.0, rates.heading_rate);
    let rc_dot = c.velocity();
    let rc_ddot = center_acceleration(c, rates);
    layout
        .offsets
        .iter()
        .map(|p| {
            let w_p = omega.cross(p);
            VirtualLeaderRef {
                r: c.position + rot * p,
                r_dot: rc_dot + rot * w_p,
                r_ddot: rc_ddot + rot * omega.cross(&w_p),
            }
        })
        .collect()
}

/// Smoothed virtual-leader state `(r̂, v̂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterState {
    pub r_hat: Vec3,
    pub v_hat: Vec3,
}

impl FilterState {
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            r_hat: Vec3::new(s[0], s[1], s[2]),
            v_hat: Vec3::new(s[3], s[4], s[5]),
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..3].copy_from_slice(self.r_hat.as_slice());
        out[3..6].copy_from_slice(self.v_hat.as_slice());
    }

    /// `(ê_p, ê_v) = (r̂ − r, v̂ − ṙ)`.
    pub fn errors(&self, r: &VirtualLeaderRef) -> (Vec3, Vec3) {
        (self.r_hat - r.r, self.v_hat - r.r_dot)
    }
}

/// Diagonal filter gains, one entry per inertial axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterGains {
    pub kappa_p: Vec3,
    pub kappa_v: Vec3,
    pub c_p: Vec3,
    pub c_v: Vec3,
}

impl Default for FilterGains {
    fn default() -> Self {
        Self {
            kappa_p: Vec3::repeat(1.0),
            kappa_v: Vec3::repeat(2.5),
            c_p: Vec3::repeat(1.25),
            c_v: Vec3::repeat(0.5),
        }
    }
}

impl FilterGains {
    pub fn validate(&self) -> Result<(), PlannerError> {
        check_positive(&[
            ("kappa_p", self.kappa_p),
            ("kappa_v", self.kappa_v),
            ("c_p", self.c_p),
            ("c_v", self.c_v),
        ])
    }
}

pub(crate) fn check_positive(gains: &[(&'static str, Vec3)]) -> Result<(), PlannerError> {
    for (name, g) in gains {
        for (axis, value) in ['x', 'y', 'z'].into_iter().zip(g.iter().copied()) {
            if !(value > 0.0) || !value.is_finite() {
                return Err(PlannerError::Gain { name, axis, value });
            }
        }
    }
    Ok(())
}

/// Neighbor coupling `Σ_{j∈𝒩ᵢ} (xᵢ − xⱼ)`, i.e. row `i` of `(L ⊗ I₃) x`.
pub fn neighbor_sum(g: &FormationGraph, i: usize, x: &[Vec3]) -> Vec3 {
    g.neighbors(i).map(|j| x[i] - x[j]).sum()
}

/// Time derivatives `(dr̂/dt, dv̂/dt)` of every filter.
pub fn filter_step_derivative(
    states: &[FilterState],
    refs: &[VirtualLeaderRef],
    g: &FormationGraph,
    gains: &FilterGains,
) -> Vec<FilterState> {
    let (ep, ev): (Vec<Vec3>, Vec<Vec3>) =
        states.iter().zip(refs).map(|(s, r)| s.errors(r)).unzip();
    (0..states.len())
        .map(|i| {
            let coupling = gains.c_p.component_mul(&neighbor_sum(g, i, &ep))
                + gains.c_v.component_mul(&neighbor_sum(g, i, &ev));
            FilterState {
                r_hat: states[i].v_hat,
                v_hat: refs[i].r_ddot
                    - gains.kappa_p.component_mul(&ep[i])
                    - gains.kappa_v.component_mul(&ev[i])
                    - coupling,
            }
        })
        .collect()
}

/// System matrix of the stacked filter errors `[ê_p; ê_v]` (6n × 6n).
pub fn filter_error_matrix(g: &FormationGraph, gains: &FilterGains) -> DMatrix<f64> {
    second_order_matrix(
        &coupled_gain(g, &gains.kappa_p, &gains.c_p),
        &coupled_gain(g, &gains.kappa_v, &gains.c_v),
    )
}

/// `[[0, I], [−P, −V]]`.
pub(crate) fn second_order_matrix(p: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = p.nrows();
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    a.view_mut((0, m), (m, m)).fill_with_identity();
    a.view_mut((m, 0), (m, m)).copy_from(&(-p));
    a.view_mut((m, m), (m, m)).copy_from(&(-v));
    a
}

/// Stacks per-vehicle triples into one column vector.
pub fn stack(v: &[Vec3]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(v.len() * 3, v.iter().flat_map(|x| x.iter().copied()))
}

/// `𝕍 = ½ ê_pᵀ (I⊗κ_p + L⊗c_p) ê_p + ½ ê_vᵀ ê_v`.
pub fn filter_lyapunov(ep: &[Vec3], ev: &[Vec3], g: &FormationGraph, gains: &FilterGains) -> f64 {
    let p = stack(ep);
    let v = stack(ev);
    let k = coupled_gain(g, &gains.kappa_p, &gains.c_p);
    0.5 * p.dot(&(k * &p)) + 0.5 * v.norm_squared()
}
