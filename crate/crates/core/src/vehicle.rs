//! Point-mass fixed-wing dynamics and control conversions.
//!
//! The outer-loop model treats each aircraft as a point mass with states
//! `(x, y, z, V_T, γ, ψ)` in the NED frame, driven by thrust `T`, lift `L`
//! and bank angle `μ`. Differentiating position twice yields a double
//! integrator `p̈ = u + d`; the functions here map between the Cartesian
//! virtual control `u`, the polar controls `(u_V, u_γ, u_ψ)` and the physical
//! commands `(T, L, μ)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wake::PolarDisturbance;
use crate::{Vec3, GRAVITY};

/// Below this `|cos γ|` the heading dynamics are singular.
pub const COS_GAMMA_MIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("flight path angle {gamma} rad is too close to ±π/2 (|cos γ| = {cos_gamma:e})")]
    Singularity { gamma: f64, cos_gamma: f64 },
    #[error("total speed {speed} m/s is outside the flight envelope")]
    Envelope { speed: f64 },
    #[error("invalid vehicle parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
}

/// Physical constants of one airframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavParams {
    /// kg
    pub mass: f64,
    /// m²
    pub wing_area: f64,
    /// m
    pub wing_span: f64,
    pub drag_coeff: f64,
    /// Lift at zero angle of attack [N].
    pub lift_bias: f64,
    /// Lift slope [N/rad].
    pub lift_slope: f64,
    /// kg/m³
    pub air_density: f64,
}

impl UavParams {
    /// ISA density at 5000 m.
    pub const DEFAULT_AIR_DENSITY: f64 = 0.7364;

    /// The five-aircraft close formation airframe: 27.87 m² wing, 9.144 m
    /// span, 9295.44 kg, `C_D = 0.0794`. The lift slope defaults to
    /// `5 q̄ S` per radian at `reference_speed`.
    pub fn baseline(air_density: f64, reference_speed: f64) -> Self {
        let wing_area = 27.87;
        Self {
            mass: 9295.44,
            wing_area,
            wing_span: 9.144,
            drag_coeff: 0.0794,
            lift_bias: 0.0,
            lift_slope: default_lift_slope(air_density, reference_speed, wing_area),
            air_density,
        }
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = [
            ("mass", self.mass),
            ("wing_area", self.wing_area),
            ("wing_span", self.wing_span),
            ("lift_slope", self.lift_slope),
            ("air_density", self.air_density),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(VehicleError::Parameter { name, value });
            }
        }
        if !(self.drag_coeff >= 0.0) {
            return Err(VehicleError::Parameter {
                name: "drag_coeff",
                value: self.drag_coeff,
            });
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }
}

/// `5 q̄ S` with `q̄ = ½ ρ V²`.
pub fn default_lift_slope(air_density: f64, speed: f64, wing_area: f64) -> f64 {
    5.0 * 0.5 * air_density * speed * speed * wing_area
}

/// Kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    /// NED position [m]; altitude is `-z`.
    pub position: Vec3,
    /// m/s
    pub total_speed: f64,
    /// γ [rad]
    pub path_angle: f64,
    /// ψ [rad]
    pub course_angle: f64,
}

/// Time derivative of [`UavState`], laid out like the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavStateRate {
    pub velocity: Vec3,
    pub speed_rate: f64,
    pub path_rate: f64,
    pub course_rate: f64,
}

impl UavStateRate {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            self.speed_rate,
            self.path_rate,
            self.course_rate,
        ]
    }
}

impl UavState {
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            position: Vec3::new(s[0], s[1], s[2]),
            total_speed: s[3],
            path_angle: s[4],
            course_angle: s[5],
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..3].copy_from_slice(self.position.as_slice());
        out[3] = self.total_speed;
        out[4] = self.path_angle;
        out[5] = self.course_angle;
    }

    /// Unit vector along the flight path.
    pub fn forward(&self) -> Vec3 {
        let (sg, cg) = self.path_angle.sin_cos();
        let (sp, cp) = self.course_angle.sin_cos();
        Vec3::new(cg * cp, cg * sp, -sg)
    }

    /// Unit vector out the right wing for wings-level flight.
    pub fn right(&self) -> Vec3 {
        let (sp, cp) = self.course_angle.sin_cos();
        Vec3::new(-sp, cp, 0.0)
    }

    /// `forward × right`.
    pub fn down(&self) -> Vec3 {
        self.forward().cross(&self.right())
    }

    /// Inertial velocity `(ẋ, ẏ, ż)`.
    pub fn velocity(&self) -> Vec3 {
        self.forward() * self.total_speed
    }

    pub fn check_envelope(&self) -> Result<(), VehicleError> {
        if !(self.total_speed > 0.0) {
            return Err(VehicleError::Envelope {
                speed: self.total_speed,
            });
        }
        let cos_gamma = self.path_angle.cos();
        if cos_gamma.abs() < COS_GAMMA_MIN || !cos_gamma.is_finite() {
            return Err(VehicleError::Singularity {
                gamma: self.path_angle,
                cos_gamma,
            });
        }
        Ok(())
    }
}

/// Polar control channels `(u_V, u_γ, u_ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolarControls {
    /// m/s²
    pub u_v: f64,
    /// rad/s
    pub u_gamma: f64,
    /// rad/s
    pub u_psi: f64,
}

/// Cartesian virtual controls `(u_x, u_y, u_z)` of the double integrator [m/s²].
pub type CartesianControls = Vec3;

/// Lumped disturbance `(d_x, d_y, d_z)` seen by the double integrator [m/s²].
pub type CartesianDisturbance = Vec3;

/// Physical commands applied to the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorCommands {
    /// N
    pub thrust: f64,
    /// N
    pub lift: f64,
    /// μ [rad]
    pub bank: f64,
    /// Angle of attack implied by the lift model [rad]; diagnostic only.
    pub alpha: f64,
}

/// Result of [`polar_to_actuators`], keeping the unclamped thrust demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorSolution {
    pub commands: ActuatorCommands,
    pub commanded_thrust: f64,
}

impl ActuatorSolution {
    pub fn saturated(&self) -> bool {
        self.commands.thrust != self.commanded_thrust
    }
}

/// How negative thrust demands are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThrustLimit {
    /// Clamp to zero and flag a saturation event.
    #[default]
    NonNegative,
    /// Apply whatever the inversion demands.
    Unlimited,
}

/// `D = ½ ρ V² S C_D`.
pub fn drag(s: &UavState, p: &UavParams) -> f64 {
    0.5 * p.air_density * s.total_speed * s.total_speed * p.wing_area * p.drag_coeff
}

/// Point-mass equations of motion.
pub fn state_derivative(
    s: &UavState,
    a: &ActuatorCommands,
    d: &PolarDisturbance,
    p: &UavParams,
) -> Result<UavStateRate, VehicleError> {
    s.check_envelope()?;
    let v = s.total_speed;
    let (sg, cg) = s.path_angle.sin_cos();
    let (sm, cm) = a.bank.sin_cos();
    let m = p.mass;
    Ok(UavStateRate {
        velocity: s.velocity(),
        speed_rate: (a.thrust - drag(s, p)) / m - GRAVITY * sg + d.d_v,
        path_rate: a.lift * cm / (m * v) - GRAVITY * cg / v + d.d_gamma,
        course_rate: a.lift * sm / (m * v * cg) + d.d_psi,
    })
}

/// Maps polar channels to Cartesian accelerations.
///
/// The columns are the orthonormal path frame `(e_f, e_γ, e_ψ)` scaled by
/// `(1, V, V cos γ)`.
fn polar_frame_map(u_v: f64, u_gamma: f64, u_psi: f64, s: &UavState) -> Vec3 {
    let v = s.total_speed;
    let (sg, cg) = s.path_angle.sin_cos();
    let (sp, cp) = s.course_angle.sin_cos();
    Vec3::new(
        u_v * cg * cp - u_gamma * v * sg * cp - u_psi * v * cg * sp,
        u_v * cg * sp - u_gamma * v * sg * sp + u_psi * v * cg * cp,
        -u_v * sg - u_gamma * v * cg,
    )
}

pub fn polar_to_cartesian(u: &PolarControls, s: &UavState) -> CartesianControls {
    polar_frame_map(u.u_v, u.u_gamma, u.u_psi, s)
}

/// Inverse of [`polar_to_cartesian`].
///
/// The `u_γ` row projects onto `(−sin γ cos ψ, −sin γ sin ψ, −cos γ)/V_T`,
/// the exact inverse of the forward map.
pub fn cartesian_to_polar(
    u: &CartesianControls,
    s: &UavState,
) -> Result<PolarControls, VehicleError> {
    s.check_envelope()?;
    let v = s.total_speed;
    let (sg, cg) = s.path_angle.sin_cos();
    let (sp, cp) = s.course_angle.sin_cos();
    Ok(PolarControls {
        u_v: u.x * cg * cp + u.y * cg * sp - u.z * sg,
        u_gamma: -(u.x * sg * cp + u.y * sg * sp + u.z * cg) / v,
        u_psi: (-u.x * sp + u.y * cp) / (v * cg),
    })
}

pub fn disturbance_to_cartesian(d: &PolarDisturbance, s: &UavState) -> CartesianDisturbance {
    polar_frame_map(d.d_v, d.d_gamma, d.d_psi, s)
}

/// Thrust, lift and bank that realise the polar controls.
///
/// Bank uses `atan2` so `L cos μ` and `L sin μ` reproduce the vertical and
/// lateral lift demands even when the vertical demand is negative.
pub fn polar_to_actuators(
    u: &PolarControls,
    s: &UavState,
    p: &UavParams,
    limit: ThrustLimit,
) -> Result<ActuatorSolution, VehicleError> {
    s.check_envelope()?;
    let m = p.mass;
    let v = s.total_speed;
    let (sg, cg) = s.path_angle.sin_cos();
    let commanded_thrust = m * u.u_v + m * GRAVITY * sg + drag(s, p);
    let thrust = match limit {
        ThrustLimit::NonNegative if commanded_thrust < 0.0 => 0.0,
        _ => commanded_thrust,
    };
    let vertical = m * v * u.u_gamma + m * GRAVITY * cg;
    let lateral = m * v * u.u_psi * cg;
    let lift = vertical.hypot(lateral);
    let bank = lateral.atan2(vertical);
    Ok(ActuatorSolution {
        commands: ActuatorCommands {
            thrust,
            lift,
            bank,
            alpha: (lift - p.lift_bias) / p.lift_slope,
        },
        commanded_thrust,
    })
}

/// Polar controls produced by given commands (the `u_V, u_γ, u_ψ`
/// definitions read from thrust, lift and bank).
pub fn actuators_to_polar(
    a: &ActuatorCommands,
    s: &UavState,
    p: &UavParams,
) -> Result<PolarControls, VehicleError> {
    s.check_envelope()?;
    let m = p.mass;
    let v = s.total_speed;
    let (sg, cg) = s.path_angle.sin_cos();
    let (sm, cm) = a.bank.sin_cos();
    Ok(PolarControls {
        u_v: (a.thrust - drag(s, p)) / m - GRAVITY * sg,
        u_gamma: a.lift * cm / (m * v) - GRAVITY * cg / v,
        u_psi: a.lift * sm / (m * v * cg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn level(speed: f64) -> UavState {
        UavState {
            position: Vec3::zeros(),
            total_speed: speed,
            path_angle: 0.0,
            course_angle: 0.0,
        }
    }

    fn params() -> UavParams {
        UavParams::baseline(UavParams::DEFAULT_AIR_DENSITY, 120.0)
    }

    #[test]
    fn trimmed_level_flight_is_steady() {
        let p = params();
        let s = level(120.0);
        let a = ActuatorCommands {
            thrust: drag(&s, &p),
            lift: p.weight(),
            bank: 0.0,
            alpha: 0.0,
        };
        let r = state_derivative(&s, &a, &PolarDisturbance::default(), &p).unwrap();
        assert_eq!(r.to_array(), [120.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn climb_rate_row() {
        let s = UavState {
            path_angle: std::f64::consts::FRAC_PI_6,
            ..level(100.0)
        };
        let r = state_derivative(
            &s,
            &ActuatorCommands::default(),
            &PolarDisturbance::default(),
            &params(),
        )
        .unwrap();
        assert_relative_eq!(r.velocity.z, -50.0, epsilon = 1e-12);
    }

    #[test]
    fn unpowered_speed_loss_is_drag_and_gravity() {
        let p = params();
        let s = UavState {
            path_angle: 0.3,
            ..level(150.0)
        };
        let r = state_derivative(
            &s,
            &ActuatorCommands::default(),
            &PolarDisturbance::default(),
            &p,
        )
        .unwrap();
        let expected = -drag(&s, &p) / p.mass - GRAVITY * 0.3f64.sin();
        assert_relative_eq!(r.speed_rate, expected, epsilon = 1e-12);
    }

    #[test]
    fn envelope_errors() {
        let p = params();
        let zero = PolarDisturbance::default();
        let a = ActuatorCommands::default();
        let vertical = UavState {
            path_angle: std::f64::consts::FRAC_PI_2,
            ..level(100.0)
        };
        assert!(matches!(
            state_derivative(&vertical, &a, &zero, &p),
            Err(VehicleError::Singularity { .. })
        ));
        assert!(matches!(
            state_derivative(&level(0.0), &a, &zero, &p),
            Err(VehicleError::Envelope { .. })
        ));
        assert!(cartesian_to_polar(&Vec3::x(), &vertical).is_err());
    }

    #[test]
    fn drag_values() {
        let p = UavParams {
            air_density: 1.225,
            ..params()
        };
        // 0.5 * 1.225 * 120² * 27.87 * 0.0794
        assert_relative_eq!(drag(&level(120.0), &p), 19517.58396, epsilon = 1e-6);
        assert_eq!(drag(&level(0.0), &p), 0.0);
        assert_relative_eq!(
            drag(&level(240.0), &p),
            4.0 * drag(&level(120.0), &p),
            max_relative = 1e-14
        );
    }

    #[test]
    fn trim_thrust_equals_model_drag() {
        // The model's own trim thrust at 120 m/s and ISA 5000 m density.
        let p = params();
        let s = level(120.0);
        let sol = polar_to_actuators(&PolarControls::default(), &s, &p, ThrustLimit::NonNegative)
            .unwrap();
        assert_relative_eq!(sol.commands.thrust, 11732.856186, epsilon = 1e-6);
        assert_relative_eq!(sol.commands.lift, p.weight(), max_relative = 1e-14);
        assert_eq!(sol.commands.bank, 0.0);
    }

    #[test]
    fn axis_aligned_conversions() {
        let s = level(120.0);
        let p = cartesian_to_polar(&Vec3::new(1.0, 0.0, 0.0), &s).unwrap();
        assert_eq!((p.u_v, p.u_gamma, p.u_psi), (1.0, 0.0, 0.0));
        let p = cartesian_to_polar(&Vec3::new(0.0, 1.0, 0.0), &s).unwrap();
        assert_eq!(p.u_v, 0.0);
        assert_relative_eq!(p.u_psi, 1.0 / 120.0);
        let c = polar_to_cartesian(
            &PolarControls {
                u_v: 1.0,
                u_gamma: 0.0,
                u_psi: 0.0,
            },
            &s,
        );
        assert_eq!(c, Vec3::new(1.0, 0.0, 0.0));
        let c = polar_to_cartesian(
            &PolarControls {
                u_v: 0.0,
                u_gamma: 1.0,
                u_psi: 0.0,
            },
            &s,
        );
        assert_relative_eq!(c.z, -120.0);
    }

    #[test]
    fn disturbance_mapping() {
        let s = level(120.0);
        let d = PolarDisturbance {
            d_v: 1.0,
            d_gamma: 0.0,
            d_psi: 0.0,
        };
        assert_eq!(disturbance_to_cartesian(&d, &s), Vec3::new(1.0, 0.0, 0.0));
        let d = PolarDisturbance {
            d_v: 0.0,
            d_gamma: 1.0,
            d_psi: 0.0,
        };
        assert_relative_eq!(disturbance_to_cartesian(&d, &s).z, -120.0);
        assert_eq!(
            disturbance_to_cartesian(&PolarDisturbance::default(), &s),
            Vec3::zeros()
        );
    }

    #[test]
    fn actuator_rows() {
        let p = params();
        let s = level(120.0);
        let sol = polar_to_actuators(
            &PolarControls {
                u_v: 0.0,
                u_gamma: 0.0,
                u_psi: 0.0,
            },
            &s,
            &p,
            ThrustLimit::NonNegative,
        )
        .unwrap();
        assert_eq!(sol.commands.thrust, drag(&s, &p));
        let u_psi = 0.02;
        let sol = polar_to_actuators(
            &PolarControls {
                u_v: 0.0,
                u_gamma: 0.0,
                u_psi,
            },
            &s,
            &p,
            ThrustLimit::NonNegative,
        )
        .unwrap();
        assert_relative_eq!(
            sol.commands.bank.tan(),
            120.0 * u_psi / GRAVITY,
            max_relative = 1e-13
        );
    }

    #[test]
    fn negative_thrust_is_clamped_and_flagged() {
        let p = params();
        let s = level(120.0);
        let u = PolarControls {
            u_v: -20.0,
            u_gamma: 0.0,
            u_psi: 0.0,
        };
        let sol = polar_to_actuators(&u, &s, &p, ThrustLimit::NonNegative).unwrap();
        assert_eq!(sol.commands.thrust, 0.0);
        assert!(sol.commanded_thrust < 0.0);
        assert!(sol.saturated());
        let free = polar_to_actuators(&u, &s, &p, ThrustLimit::Unlimited).unwrap();
        assert!(!free.saturated());
        assert_eq!(free.commands.thrust, free.commanded_thrust);
    }

    fn envelope_state() -> impl Strategy<Value = UavState> {
        (
            60.0..200.0f64,
            -1.2..1.2f64,
            -std::f64::consts::PI..std::f64::consts::PI,
        )
            .prop_map(|(v, g, c)| UavState {
                position: Vec3::zeros(),
                total_speed: v,
                path_angle: g,
                course_angle: c,
            })
    }

    proptest! {
        #[test]
        fn cartesian_polar_roundtrip(s in envelope_state(), ux in -20.0..20.0f64, uy in -20.0..20.0f64, uz in -20.0..20.0f64) {
            let u = Vec3::new(ux, uy, uz);
            let back = polar_to_cartesian(&cartesian_to_polar(&u, &s).unwrap(), &s);
            prop_assert!((back - u).norm() <= 1e-10 * u.norm().max(1.0));
        }

        #[test]
        fn actuators_reproduce_polar(s in envelope_state(), uv in -2.0..5.0f64, ug in -0.1..0.1f64, up in -0.1..0.1f64) {
            let p = params();
            let u = PolarControls { u_v: uv, u_gamma: ug, u_psi: up };
            let sol = polar_to_actuators(&u, &s, &p, ThrustLimit::Unlimited).unwrap();
            let back = actuators_to_polar(&sol.commands, &s, &p).unwrap();
            prop_assert!((back.u_v - uv).abs() <= 1e-9 * uv.abs().max(1.0));
            prop_assert!((back.u_gamma - ug).abs() <= 1e-9 * ug.abs().max(1.0));
            prop_assert!((back.u_psi - up).abs() <= 1e-9 * up.abs().max(1.0));
        }

        #[test]
        fn derivative_linear_in_disturbance(s in envelope_state(), dv in -1.0..1.0f64, dg in -0.05..0.05f64, dp in -0.05..0.05f64) {
            let p = params();
            let a = ActuatorCommands { thrust: 15000.0, lift: p.weight(), bank: 0.1, alpha: 0.0 };
            let base = state_derivative(&s, &a, &PolarDisturbance::default(), &p).unwrap().to_array();
            let with = state_derivative(&s, &a, &PolarDisturbance { d_v: dv, d_gamma: dg, d_psi: dp }, &p).unwrap().to_array();
            prop_assert_eq!(&base[..3], &with[..3]);
            prop_assert!((with[3] - base[3] - dv).abs() < 1e-12);
            prop_assert!((with[4] - base[4] - dg).abs() < 1e-12);
            prop_assert!((with[5] - base[5] - dp).abs() < 1e-12);
        }
    }
}
