//! Lumped disturbance generators `(d_V, d_γ, d_ψ)`.
//!
//! Every kind is a deterministic function of the vehicle index, the current
//! vehicle states and time. Randomised sinusoid phases are drawn once, from
//! the scenario seed, when the [`DisturbanceModel`] is built.
//!
//! The horseshoe-vortex kind replaces each upstream aircraft with a bound
//! vortex and two straight trailing legs of finite core. The follower's
//! span-averaged induced velocity is turned into drag, lift and side-force
//! increments with every aircraft held at the level attitude, lift opposing
//! gravity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::{UavParams, UavState};
use crate::{Vec3, GRAVITY};

/// Disturbance in the polar channels of the point-mass model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarDisturbance {
    /// m/s²
    #[serde(rename = "v", default)]
    pub d_v: f64,
    /// rad/s
    #[serde(rename = "gamma", default)]
    pub d_gamma: f64,
    /// rad/s
    #[serde(rename = "psi", default)]
    pub d_psi: f64,
}

impl PolarDisturbance {
    pub const fn new(d_v: f64, d_gamma: f64, d_psi: f64) -> Self {
        Self {
            d_v,
            d_gamma,
            d_psi,
        }
    }

    pub fn splat(x: f64) -> Self {
        Self::new(x, x, x)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.d_v, self.d_gamma, self.d_psi]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    fn zip(self, other: Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        Self::new(
            f(self.d_v, other.d_v),
            f(self.d_gamma, other.d_gamma),
            f(self.d_psi, other.d_psi),
        )
    }

    /// Componentwise clamp to `[-cap, cap]`.
    pub fn clamp_to(self, cap: Self) -> Self {
        self.zip(cap, |x, c| x.clamp(-c, c))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

const CHANNELS: [&str; 3] = ["v", "gamma", "psi"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WakeError {
    #[error("disturbance parameter {name} must be {requirement}, got {value}")]
    Parameter {
        name: String,
        requirement: &'static str,
        value: f64,
    },
    #[error("disturbance rate on channel {channel} reaches {rate}, above the rate cap {cap}")]
    RateCap {
        channel: &'static str,
        rate: f64,
        cap: f64,
    },
    #[error("per-vehicle disturbance list has {got} entries for {expected} vehicles")]
    PerVehicleLength { got: usize, expected: usize },
}

/// Parameters of the horseshoe-vortex wake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VortexParams {
    /// Vortex strength [m²/s]; derived from each upstream aircraft's weight when absent.
    pub circulation: Option<f64>,
    /// Lamb–Oseen core radius [m].
    pub core_radius: f64,
    /// Length of each trailing leg [m].
    pub trail_length: f64,
    /// Spanwise sampling stations on the follower.
    pub span_stations: usize,
    /// Side force per radian of sidewash [N/rad]; `0.1 L_α` when absent.
    pub side_force_slope: Option<f64>,
}

impl Default for VortexParams {
    fn default() -> Self {
        Self {
            circulation: None,
            core_radius: 0.5,
            trail_length: 2000.0,
            span_stations: 9,
            side_force_slope: None,
        }
    }
}

/// Disturbance waveform. Triples are ordered `(v, gamma, psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceKind {
    Zero,
    Constant {
        #[serde(default)]
        value: PolarDisturbance,
        /// Overrides `value` vehicle by vehicle.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_vehicle: Option<Vec<PolarDisturbance>>,
    },
    /// `A sin(ω t + φ + i·phase_step)` per channel for vehicle `i` (0-based).
    Sinusoid {
        amplitude: PolarDisturbance,
        /// rad/s
        frequency: PolarDisturbance,
        #[serde(default)]
        phase: PolarDisturbance,
        #[serde(default)]
        phase_step: f64,
        /// Adds a uniform phase in `[0, 2π)` per vehicle and channel drawn from the seed.
        #[serde(default)]
        random_phase: bool,
    },
    /// `level · clamp((t − start)/ramp_time, 0, 1)`.
    RampSaturating {
        level: PolarDisturbance,
        #[serde(default)]
        start: f64,
        ramp_time: f64,
    },
    HorseshoeVortex(VortexParams),
}

/// Waveform plus the bounds it must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub model: DisturbanceKind,
    /// Absolute caps; every output is clamped to them.
    #[serde(default = "DisturbanceSpec::default_caps")]
    pub caps: PolarDisturbance,
    /// Bounds on `|ḋ|`, validated analytically for the smooth kinds.
    #[serde(default = "DisturbanceSpec::default_rate_caps")]
    pub rate_caps: PolarDisturbance,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            model: DisturbanceKind::Zero,
            caps: Self::default_caps(),
            rate_caps: Self::default_rate_caps(),
        }
    }
}

impl DisturbanceSpec {
    pub fn default_caps() -> PolarDisturbance {
        PolarDisturbance::new(5.0, 0.2, 0.2)
    }

    pub fn default_rate_caps() -> PolarDisturbance {
        PolarDisturbance::new(10.0, 0.5, 0.5)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with_model(model: DisturbanceKind) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }
}

/// A validated [`DisturbanceSpec`] resolved for a formation of `n` vehicles.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    spec: DisturbanceSpec,
    /// Per-vehicle phases of the sinusoid kind.
    phases: Vec<PolarDisturbance>,
    airframe: UavParams,
}

impl DisturbanceModel {
    pub fn new(
        spec: DisturbanceSpec,
        n: usize,
        airframe: UavParams,
        seed: u64,
    ) -> Result<Self, WakeError> {
        for (name, cap) in CHANNELS.iter().zip(spec.caps.to_array()) {
            nonnegative(&format!("caps.{name}"), cap)?;
        }
        for (name, cap) in CHANNELS.iter().zip(spec.rate_caps.to_array()) {
            nonnegative(&format!("rate_caps.{name}"), cap)?;
        }
        let mut phases = Vec::new();
        match &spec.model {
            DisturbanceKind::Zero => {}
            DisturbanceKind::Constant { value, per_vehicle } => {
                warn_if_capped(value, &spec.caps);
                if let Some(list) = per_vehicle {
                    if list.len() != n {
                        return Err(WakeError::PerVehicleLength {
                            got: list.len(),
                            expected: n,
                        });
                    }
                    list.iter().for_each(|d| warn_if_capped(d, &spec.caps));
                }
            }
            DisturbanceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
                phase_step,
                random_phase,
            } => {
                warn_if_capped(amplitude, &spec.caps);
                let rates = amplitude.zip(*frequency, |a, w| (a * w).abs());
                check_rates(&rates, &spec.rate_caps)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for i in 0..n {
                    let offset = i as f64 * phase_step;
                    let mut p = PolarDisturbance::new(
                        phase.d_v + offset,
                        phase.d_gamma + offset,
                        phase.d_psi + offset,
                    );
                    if *random_phase {
                        p = p.zip(PolarDisturbance::default(), |x, _| {
                            x + rng.gen_range(0.0..std::f64::consts::TAU)
                        });
                    }
                    phases.push(p);
                }
            }
            DisturbanceKind::RampSaturating {
                level,
                start,
                ramp_time,
            } => {
                positive("ramp_time", *ramp_time)?;
                nonnegative("start", *start)?;
                warn_if_capped(level, &spec.caps);
                let rates = level.zip(PolarDisturbance::default(), |l, _| (l / ramp_time).abs());
                check_rates(&rates, &spec.rate_caps)?;
            }
            DisturbanceKind::HorseshoeVortex(params) => {
                positive("core_radius", params.core_radius)?;
                positive("trail_length", params.trail_length)?;
                if params.span_stations == 0 {
                    return Err(WakeError::Parameter {
                        name: "span_stations".into(),
                        requirement: "at least 1",
                        value: 0.0,
                    });
                }
                if let Some(c) = params.circulation {
                    positive("circulation", c)?;
                }
                if let Some(s) = params.side_force_slope {
                    nonnegative("side_force_slope", s)?;
                }
            }
        }
        Ok(Self {
            spec,
            phases,
            airframe,
        })
    }

    pub fn spec(&self) -> &DisturbanceSpec {
        &self.spec
    }

    /// Upper bound on `|ḋ|` per channel for the smooth, state-independent kinds.
    pub fn rate_bound(&self) -> Option<PolarDisturbance> {
        match &self.spec.model {
            DisturbanceKind::Zero | DisturbanceKind::Constant { .. } => {
                Some(PolarDisturbance::default())
            }
            DisturbanceKind::Sinusoid {
                amplitude,
                frequency,
                ..
            } => Some(amplitude.zip(*frequency, |a, w| (a * w).abs())),
            DisturbanceKind::RampSaturating {
                level, ramp_time, ..
            } => Some(level.zip(PolarDisturbance::default(), |l, _| (l / ramp_time).abs())),
            DisturbanceKind::HorseshoeVortex(_) => None,
        }
    }

    /// Disturbance acting on vehicle `i` given every vehicle's state at time `t`.
    pub fn disturbance_at(&self, i: usize, states: &[UavState], t: f64) -> PolarDisturbance {
        let raw = match &self.spec.model {
            DisturbanceKind::Zero => PolarDisturbance::default(),
            DisturbanceKind::Constant { value, per_vehicle } => {
                per_vehicle.as_ref().map_or(*value, |list| list[i])
            }
            DisturbanceKind::Sinusoid {
                amplitude,
                frequency,
                ..
            } => {
                let phase = self.phases[i];
                let a = amplitude.to_array();
                let w = frequency.to_array();
                let p = phase.to_array();
                PolarDisturbance::from_array(std::array::from_fn(|k| {
                    a[k] * (w[k] * t + p[k]).sin()
                }))
            }
            DisturbanceKind::RampSaturating {
                level,
                start,
                ramp_time,
            } => {
                let s = ((t - start) / ramp_time).clamp(0.0, 1.0);
                level.zip(PolarDisturbance::default(), |l, _| l * s)
            }
            DisturbanceKind::HorseshoeVortex(params) => {
                vortex_disturbance(i, states, params, &self.airframe)
            }
        };
        raw.clamp_to(self.spec.caps)
    }
}

fn positive(name: &str, value: f64) -> Result<(), WakeError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(WakeError::Parameter {
            name: name.into(),
            requirement: "positive and finite",
            value,
        })
    }
}

fn nonnegative(name: &str, value: f64) -> Result<(), WakeError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(WakeError::Parameter {
            name: name.into(),
            requirement: "nonnegative and finite",
            value,
        })
    }
}

fn warn_if_capped(d: &PolarDisturbance, caps: &PolarDisturbance) {
    for ((name, x), cap) in CHANNELS.iter().zip(d.to_array()).zip(caps.to_array()) {
        if x.abs() > cap {
            log::warn!(
                "disturbance level {x} on channel {name} exceeds cap {cap} and will be clamped"
            );
        }
    }
}

fn check_rates(rates: &PolarDisturbance, caps: &PolarDisturbance) -> Result<(), WakeError> {
    for ((channel, rate), cap) in CHANNELS.iter().zip(rates.to_array()).zip(caps.to_array()) {
        if rate > cap {
            return Err(WakeError::RateCap { channel, rate, cap });
        }
    }
    Ok(())
}

/// Velocity induced at `p` by a straight vortex segment `a → b` of strength
/// `gamma`, with a Lamb–Oseen core of radius `core`.
pub fn segment_induced_velocity(p: &Vec3, a: &Vec3, b: &Vec3, gamma: f64, core: f64) -> Vec3 {
    let r0 = b - a;
    let r1 = p - a;
    let r2 = p - b;
    let cross = r1.cross(&r2);
    let cross_sq = cross.norm_squared();
    let (n1, n2) = (r1.norm(), r2.norm());
    let len_sq = r0.norm_squared();
    if cross_sq <= f64::MIN_POSITIVE || n1 == 0.0 || n2 == 0.0 || len_sq == 0.0 {
        return Vec3::zeros();
    }
    // Squared distance from p to the segment's line.
    let h_sq = cross_sq / len_sq;
    let core_factor = -(-h_sq / (core * core)).exp_m1();
    let along = r0.dot(&(r1 / n1 - r2 / n2));
    cross * (gamma / (4.0 * std::f64::consts::PI) * along * core_factor / cross_sq)
}

/// Right-wing and wing-down axes of an aircraft whose lift opposes gravity.
///
/// Past vertical (`cos γ < 0`) the path-frame axes point the other way, so
/// the level attitude there is a bank of π and both axes flip.
pub fn wing_axes(s: &UavState) -> (Vec3, Vec3) {
    let sign = if s.path_angle.cos() < 0.0 { -1.0 } else { 1.0 };
    (s.right() * sign, s.down() * sign)
}

/// Corner points of the horseshoe shed by `s`: far-left, left tip, right tip, far-right.
pub fn horseshoe_corners(s: &UavState, span: f64, trail_length: f64) -> [Vec3; 4] {
    let half = 0.5 * vortex_span(span) * wing_axes(s).0;
    let trail = -trail_length * s.forward();
    let left = s.position - half;
    let right = s.position + half;
    [left + trail, left, right, right + trail]
}

/// Effective spacing of the trailing legs for elliptic loading, `π b / 4`.
pub fn vortex_span(span: f64) -> f64 {
    std::f64::consts::FRAC_PI_4 * span
}

/// Velocity induced at `p` by the horseshoe vortex of aircraft `s`.
pub fn horseshoe_induced_velocity(
    p: &Vec3,
    s: &UavState,
    span: f64,
    gamma: f64,
    params: &VortexParams,
) -> Vec3 {
    let c = horseshoe_corners(s, span, params.trail_length);
    (0..3)
        .map(|k| segment_induced_velocity(p, &c[k], &c[k + 1], gamma, params.core_radius))
        .sum()
}

/// Circulation that carries the aircraft's weight: `m g / (ρ V b')`.
pub fn weight_circulation(s: &UavState, a: &UavParams) -> f64 {
    a.weight() / (a.air_density * s.total_speed * vortex_span(a.wing_span))
}

fn vortex_disturbance(
    i: usize,
    states: &[UavState],
    params: &VortexParams,
    a: &UavParams,
) -> PolarDisturbance {
    // The apex flies in clean air by construction.
    if i == 0 {
        return PolarDisturbance::default();
    }
    let me = &states[i];
    let (right, down) = wing_axes(me);
    let k = params.span_stations;
    let mut induced = Vec3::zeros();
    for (j, up) in states.iter().enumerate() {
        if j == i || (me.position - up.position).dot(&up.forward()) >= 0.0 {
            continue;
        }
        let gamma = params
            .circulation
            .unwrap_or_else(|| weight_circulation(up, a));
        for station in 0..k {
            let eta = (station as f64 + 0.5) / k as f64 - 0.5;
            let p = me.position + right * (eta * a.wing_span);
            induced += horseshoe_induced_velocity(&p, up, a.wing_span, gamma, params);
        }
    }
    induced /= k as f64;
    let v = me.total_speed;
    let upwash = -induced.dot(&down);
    let sidewash = induced.dot(&right);
    let m = a.mass;
    let side_slope = params.side_force_slope.unwrap_or(0.1 * a.lift_slope);
    let cos_gamma = me.path_angle.cos();
    // cos μ of the level attitude.
    let cos_mu = cos_gamma.signum();
    // Upwash tilts the lift vector forward and raises the angle of attack.
    let delta_drag = -m * GRAVITY * cos_gamma.abs() * upwash / v;
    let delta_lift = a.lift_slope * upwash / v;
    let delta_side = side_slope * sidewash / v;
    PolarDisturbance::new(
        -delta_drag / m,
        cos_mu * delta_lift / (m * v),
        cos_mu * delta_side / (m * v * cos_gamma),
    )
}
